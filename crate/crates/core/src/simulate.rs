//! Time integration of the truncated `2N`-dimensional linear SDE.
//!
//! Two schemes share the same accumulators:
//!
//! * [`Scheme::Euler`]: explicit Euler–Maruyama on the full system, any
//!   noise covariance.
//! * [`Scheme::Exact`]: per-mode exact Gaussian transition
//!   `x ← P(dt)x + η`, `η ~ N(0, C(dt))`; requires diagonal noise.
//!
//! The ergodic functionals are left-endpoint Riemann sums on the step grid:
//! `Y_T` of `Σκ_n u_n²`, `H_T` of `Σ v_n²`, and `I_T = Y_T + H_T`.
//!
//! # Randomness
//!
//! Each path owns a `ChaCha8Rng` seeded with `seed_from_u64(seed)`. Standard
//! normals come from `rand_distr::StandardNormal` (ziggurat). Euler draws `N`
//! normals per step in mode order; Exact draws two per mode per step. The
//! seed of replication `i` under a master seed is [`replication_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{ModePair, Model};
use crate::semigroup::{mode_v_inner, propagator_unchecked, r_matrices, ModeMatrix2x2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Exact,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "exact" => Ok(Scheme::Exact),
            other => Err(Error::Config(format!("unknown scheme `{other}` (expected euler|exact)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Exact => "exact",
        })
    }
}

/// Factor `F` with `F Fᵀ = Q`, mapping independent standard normals to
/// velocity noise.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseFactor {
    /// `√λ_n` per mode.
    Diagonal(Vec<f64>),
    /// Row-major symmetric square root.
    Dense { n: usize, f: Vec<f64> },
}

impl NoiseFactor {
    /// `F Fᵀ`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        match self {
            NoiseFactor::Diagonal(d) => {
                let n = d.len();
                let mut q = vec![0.0; n * n];
                for (i, s) in d.iter().enumerate() {
                    q[i * n + i] = s * s;
                }
                q
            }
            NoiseFactor::Dense { n, f } => {
                let n = *n;
                let mut q = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        q[i * n + j] = (0..n).map(|k| f[i * n + k] * f[j * n + k]).sum();
                    }
                }
                q
            }
        }
    }

    /// Writes `F ξ` into `out`.
    fn apply(&self, xi: &[f64], out: &mut [f64]) {
        match self {
            NoiseFactor::Diagonal(d) => {
                for ((o, s), x) in out.iter_mut().zip(d).zip(xi) {
                    *o = s * x;
                }
            }
            NoiseFactor::Dense { n, f } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = f[i * n..(i + 1) * n].iter().zip(xi).map(|(a, b)| a * b).sum();
                }
            }
        }
    }
}

pub fn noise_factor(model: &Model) -> Result<NoiseFactor> {
    if model.is_diagonal() {
        let d = model.q_diagonal();
        if let Some(l) = d.iter().find(|l| **l < 0.0) {
            return Err(Error::Factorization(format!("negative noise eigenvalue {l}")));
        }
        return Ok(NoiseFactor::Diagonal(d.into_iter().map(f64::sqrt).collect()));
    }
    let n = model.n_modes();
    let rows: Vec<f64> = (0..n).flat_map(|i| model.q_row(i).to_vec()).collect();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &rows));
    let trace: f64 = model.trace_q();
    let mut roots = Vec::with_capacity(n);
    for &l in eig.eigenvalues.iter() {
        if l < -1e-10 * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Factorization(format!("noise covariance is indefinite (eigenvalue {l})")));
        }
        roots.push(l.max(0.0).sqrt());
    }
    let v = &eig.eigenvectors;
    let mut f = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            f[i * n + j] = (0..n).map(|k| v[(i, k)] * roots[k] * v[(j, k)]).sum();
        }
    }
    Ok(NoiseFactor::Dense { n, f })
}

/// Exact one-step law of a single mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactTransition {
    pub propagator: ModeMatrix2x2,
    /// `C(dt) = ∫_0^dt S(s) ΦΦ* S(s)ᵀ ds` in `(u, v)` coordinates.
    pub covariance: ModeMatrix2x2,
    pub noise_chol: ModeMatrix2x2,
}

const GAUSS5_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GAUSS5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

pub fn exact_transition(model: &Model, mode: usize, dt: f64) -> Result<ExactTransition> {
    if !model.is_diagonal() {
        return Err(Error::UnsupportedScheme("exact transitions need a diagonal noise covariance".into()));
    }
    if mode >= model.n_modes() {
        return Err(Error::Shape { expected: model.n_modes(), actual: mode });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let (a, b, kappa) = (model.a(), model.b(), model.kappa()[mode]);
    let lambda = model.q(mode, mode);
    let propagator = propagator_unchecked(a, b, kappa, dt);

    let disc = b * kappa - a * a;
    let rate = a + disc.abs().sqrt();
    let panels = ((dt * rate * 4.0).ceil() as usize).max(1);
    let h = dt / panels as f64;
    let (mut c11, mut c12, mut c22) = (0.0, 0.0, 0.0);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS) {
            let s = propagator_unchecked(a, b, kappa, mid + 0.5 * h * x);
            let wh = w * 0.5 * h;
            c11 += wh * s.m12 * s.m12;
            c12 += wh * s.m12 * s.m22;
            c22 += wh * s.m22 * s.m22;
        }
    }
    let covariance = ModeMatrix2x2::new(c11, c12, c12, c22).scale(lambda);
    let noise_chol = covariance.cholesky_lower()?;
    Ok(ExactTransition { propagator, covariance, noise_chol })
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index`: `splitmix64(master ^ splitmix64(index))`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOptions {
    pub scheme: Scheme,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Keep a running-average sample every this many steps (and at both
    /// ends). `None` records nothing.
    pub record_every: Option<usize>,
    /// Also keep the state at every recorded sample.
    pub record_states: bool,
    /// Accumulate the stochastic integrals of the energy identities
    /// (Euler only).
    pub record_ito: bool,
}

impl SimulationOptions {
    pub fn new(scheme: Scheme, dt: f64, horizon: f64, seed: u64) -> Self {
        Self { scheme, dt, horizon, seed, record_every: None, record_states: false, record_ito: false }
    }

    pub fn recording(mut self, every: usize) -> Self {
        self.record_every = Some(every.max(1));
        self
    }

    pub fn with_states(mut self) -> Self {
        self.record_states = true;
        self
    }

    pub fn with_ito(mut self) -> Self {
        self.record_ito = true;
        self
    }
}

/// Accumulated stochastic integrals `∫<R X, Φ dB>_V` for the three energy
/// operators, along the same increments that drove the path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoData {
    pub initial_state: Vec<ModePair>,
    pub integral_r: f64,
    pub integral_r1: f64,
    pub integral_r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStatistics {
    /// Time average of `‖X‖²_V`.
    #[serde(rename = "I_T")]
    pub i_t: f64,
    /// Time average of the potential part `Σκ_n u_n²`.
    #[serde(rename = "Y_T")]
    pub y_t: f64,
    /// Time average of the kinetic part `Σ v_n²`.
    #[serde(rename = "H_T")]
    pub h_t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub steps: u64,
    pub scheme: Scheme,
    pub seed: u64,
    pub final_state: Vec<ModePair>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ito: Option<ItoData>,
}

/// Running averages at one recorded time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub i_t: f64,
    pub y_t: f64,
    pub h_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathOutput {
    pub stats: PathStatistics,
    pub trajectory: Vec<TrajectorySample>,
    /// `(t, state)` at each recorded sample when states were requested.
    pub states: Vec<(f64, Vec<ModePair>)>,
}

/// Number of steps `T / dt`; `T` must be an integer multiple of `dt` to 1e-9 relative.
pub fn step_count(dt: f64, horizon: f64) -> Result<u64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon T={horizon} must be at least dt={dt}")));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Domain(format!("T={horizon} is not an integer multiple of dt={dt}")));
    }
    Ok(steps as u64)
}

enum Stepper {
    Euler { factor: NoiseFactor },
    Exact { transitions: Vec<ExactTransition> },
}

/// Simulates one path and its ergodic averages.
pub fn simulate_path(model: &Model, opts: &SimulationOptions) -> Result<PathOutput> {
    let steps = step_count(opts.dt, opts.horizon)?;
    let dt = opts.dt;
    let n_modes = model.n_modes();
    let (a, b) = (model.a(), model.b());
    let kappa = model.kappa();

    let stepper = match opts.scheme {
        Scheme::Euler => Stepper::Euler { factor: noise_factor(model)? },
        Scheme::Exact => {
            if opts.record_ito {
                return Err(Error::Usage("stochastic integrals are only recorded for the Euler scheme".into()));
            }
            let transitions = (0..n_modes).map(|n| exact_transition(model, n, dt)).collect::<Result<Vec<_>>>()?;
            Stepper::Exact { transitions }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = model.x0().to_vec();
    let sqrt_dt = dt.sqrt();
    let mut xi = vec![0.0; n_modes];
    let mut w = vec![0.0; n_modes];
    let r_coupling = 2.0 * a / (b + 1.0);

    let (mut sum_y, mut sum_h) = (0.0_f64, 0.0_f64);
    let (mut j_r, mut j_r1, mut j_r2) = (0.0, 0.0, 0.0);
    let mut trajectory = Vec::new();
    let mut states = Vec::new();

    let record = |k: u64,
                  sy: f64,
                  sh: f64,
                  st: &[ModePair],
                  traj: &mut Vec<TrajectorySample>,
                  sts: &mut Vec<(f64, Vec<ModePair>)>| {
        let t = k as f64 * dt;
        let (y, h) = if k == 0 { (0.0, 0.0) } else { (sy / k as f64, sh / k as f64) };
        traj.push(TrajectorySample { t, i_t: y + h, y_t: y, h_t: h });
        if opts.record_states {
            sts.push((t, st.to_vec()));
        }
    };

    if opts.record_every.is_some() {
        record(0, 0.0, 0.0, &state, &mut trajectory, &mut states);
    }

    for k in 0..steps {
        let (mut py, mut ph) = (0.0, 0.0);
        for (p, &kn) in state.iter().zip(kappa) {
            py += kn * p.u * p.u;
            ph += p.v * p.v;
        }
        if !(py + ph).is_finite() {
            return Err(Error::Blowup { step: k, reason: "state is no longer finite".into() });
        }
        sum_y += py;
        sum_h += ph;

        match &stepper {
            Stepper::Euler { factor } => {
                for x in xi.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                factor.apply(&xi, &mut w);
                for x in w.iter_mut() {
                    *x *= sqrt_dt;
                }
                if opts.record_ito {
                    for (p, &dw) in state.iter().zip(&w) {
                        j_r += (r_coupling * p.u + p.v) * dw;
                        j_r1 += p.v * dw;
                        j_r2 += (2.0 * a * p.u + p.v) * dw;
                    }
                }
                for ((p, &kn), &dw) in state.iter_mut().zip(kappa).zip(&w) {
                    let u = p.u + p.v * dt;
                    let v = p.v + (-b * kn * p.u - 2.0 * a * p.v) * dt + dw;
                    *p = ModePair { u, v };
                }
            }
            Stepper::Exact { transitions } => {
                for (p, tr) in state.iter_mut().zip(transitions) {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    let mut next = tr.propagator.apply(*p);
                    let eta = tr.noise_chol.apply(ModePair::new(z1, z2));
                    next.u += eta.u;
                    next.v += eta.v;
                    *p = next;
                }
            }
        }

        let done = k + 1;
        if let Some(every) = opts.record_every {
            if done % every as u64 == 0 || done == steps {
                record(done, sum_y, sum_h, &state, &mut trajectory, &mut states);
            }
        }
    }
    if state.iter().any(|p| !(p.u.is_finite() && p.v.is_finite())) {
        return Err(Error::Blowup { step: steps, reason: "final state is not finite".into() });
    }

    let y_t = sum_y / steps as f64;
    let h_t = sum_h / steps as f64;
    let ito = opts.record_ito.then(|| ItoData {
        initial_state: model.x0().to_vec(),
        integral_r: j_r,
        integral_r1: j_r1,
        integral_r2: j_r2,
    });
    Ok(PathOutput {
        stats: PathStatistics {
            i_t: y_t + h_t,
            y_t,
            h_t,
            horizon: steps as f64 * dt,
            dt,
            steps,
            scheme: opts.scheme,
            seed: opts.seed,
            final_state: state,
            ito,
        },
        trajectory,
        states,
    })
}

/// Which energy identity to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItoOperator {
    /// Full energy, links `I_T`.
    R,
    /// Kinetic energy, links `H_T`.
    R1,
    /// Potential energy, links `Y_T`.
    R2,
}

fn quadratic_form(model: &Model, x: &[ModePair], op: ItoOperator) -> f64 {
    let (a, b) = (model.a(), model.b());
    x.iter()
        .zip(model.kappa())
        .map(|(&p, &k)| {
            let rm = r_matrices(a, b, k);
            let m = match op {
                ItoOperator::R => rm.r,
                ItoOperator::R1 => rm.r1,
                ItoOperator::R2 => rm.r2,
            };
            mode_v_inner(k, m.apply(p), p)
        })
        .sum()
}

/// Signed `LHS - RHS` of the Itô representation of `I_T`, `H_T` or `Y_T`.
pub fn ito_identity_defect(stats: &PathStatistics, model: &Model, op: ItoOperator) -> Result<f64> {
    let ito = stats
        .ito
        .as_ref()
        .ok_or_else(|| Error::Usage("path was simulated without stochastic-integral recording".into()))?;
    if stats.final_state.len() != model.n_modes() {
        return Err(Error::Shape { expected: model.n_modes(), actual: stats.final_state.len() });
    }
    let (a, b) = (model.a(), model.b());
    let t = stats.horizon;
    let tr = model.trace_q();
    let delta = quadratic_form(model, &stats.final_state, op) - quadratic_form(model, &ito.initial_state, op);
    let defect = match op {
        ItoOperator::R => {
            let c = (b + 1.0) / (4.0 * a * b);
            stats.i_t + c * delta / t - 2.0 * c * ito.integral_r / t - c * tr
        }
        ItoOperator::R1 => {
            let c = 1.0 / (4.0 * a);
            stats.h_t + c * delta / t - 2.0 * c * ito.integral_r1 / t - c * tr
        }
        ItoOperator::R2 => {
            let c = 1.0 / (4.0 * a * b);
            stats.y_t + c * delta / t - 2.0 * c * ito.integral_r2 / t - c * tr
        }
    };
    Ok(defect)
}

/// `|LHS - RHS|` of the Itô representation.
pub fn ito_identity_residual(stats: &PathStatistics, model: &Model, op: ItoOperator) -> Result<f64> {
    ito_identity_defect(stats, model, op).map(f64::abs)
}
