//! Problem configuration: damping/stiffness parameters, the per-mode
//! stiffness spectrum, the spatial noise covariance and the initial state.
//!
//! Every model is a Galerkin truncation to `N` modes of the eigenbasis of the
//! spatial operator. Mode `n` evolves as
//!
//! ```text
//! du = v dt
//! dv = (-b κ_n u - 2a v) dt + (noise with covariance q_matrix)
//! ```
//!
//! and carries the energy weight `κ_n u² + v²`. The wave equation uses
//! `κ_n = α_n`, the plate equation `κ_n = α_n²`; both are the same code path.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients `(u, v)` of one mode: position and velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub u: f64,
    pub v: f64,
}

impl ModePair {
    pub const ZERO: ModePair = ModePair { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Spectral regime of a single mode, by the sign of `bκ - a²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `bκ > a²`: damped oscillation at frequency `sqrt(bκ - a²)`.
    Oscillatory,
    /// `bκ < a²`: two real decay rates.
    Overdamped,
    /// `bκ = a²`.
    Critical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Oscillatory => "oscillatory",
            Regime::Overdamped => "overdamped",
            Regime::Critical => "critical",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    /// Damped wave equation on (0,1) with Dirichlet ends: `κ_n = n²π²`.
    Wave,
    /// Damped plate equation on (0,1) with Dirichlet ends: `κ_n = n⁴π⁴`.
    Plate,
}

impl std::str::FromStr for PresetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wave" => Ok(PresetKind::Wave),
            "plate" => Ok(PresetKind::Plate),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected wave|plate)"))),
        }
    }
}

/// How a preset assigns the noise eigenvalues `λ_n`.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaRule {
    /// `λ_n = scale / n^exponent`.
    Power {
        scale: f64,
        exponent: f64,
    },
    Explicit(Vec<f64>),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Power { scale: 1000.0, exponent: 2.0 }
    }
}

impl LambdaRule {
    pub fn eigenvalues(&self, modes: usize) -> Result<Vec<f64>> {
        match self {
            LambdaRule::Power { scale, exponent } => {
                Ok((1..=modes).map(|n| scale / (n as f64).powf(*exponent)).collect())
            }
            LambdaRule::Explicit(values) => {
                if values.len() != modes {
                    return Err(Error::Config(format!(
                        "lambda list has {} entries but the model has {modes} modes",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// A validated, immutable truncated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct Model {
    a: f64,
    b: f64,
    kappa: Vec<f64>,
    /// Row-major `N×N` noise covariance in the mode basis.
    q: Vec<f64>,
    x0: Vec<ModePair>,
    diagonal: bool,
}

/// Plain serialized form of [`Model`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRepr {
    pub a: f64,
    pub b: f64,
    pub kappa: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub x0: Vec<ModePair>,
}

impl TryFrom<ModelRepr> for Model {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        Model::new(r.a, r.b, r.kappa, r.q, r.x0)
    }
}

impl From<Model> for ModelRepr {
    fn from(m: Model) -> Self {
        let q = (0..m.n_modes()).map(|n| m.q_row(n).to_vec()).collect();
        ModelRepr { a: m.a, b: m.b, kappa: m.kappa, q, x0: m.x0 }
    }
}

impl Model {
    /// Builds a model with a general symmetric PSD noise covariance `q`
    /// (given as rows).
    pub fn new(a: f64, b: f64, kappa: Vec<f64>, q: Vec<Vec<f64>>, x0: Vec<ModePair>) -> Result<Self> {
        let n = kappa.len();
        if q.len() != n || q.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!("q matrix must be {n}x{n}")));
        }
        let flat: Vec<f64> = q.into_iter().flatten().collect();
        Self::from_parts(a, b, kappa, flat, x0)
    }

    /// Builds a model whose noise covariance is diagonal in the mode basis.
    pub fn diagonal(a: f64, b: f64, kappa: Vec<f64>, lambda: Vec<f64>, x0: Vec<ModePair>) -> Result<Self> {
        let n = kappa.len();
        if lambda.len() != n {
            return Err(Error::Config(format!("lambda has {} entries but kappa has {n}", lambda.len())));
        }
        let mut q = vec![0.0; n * n];
        for (i, l) in lambda.into_iter().enumerate() {
            q[i * n + i] = l;
        }
        Self::from_parts(a, b, kappa, q, x0)
    }

    fn from_parts(a: f64, b: f64, kappa: Vec<f64>, q: Vec<f64>, x0: Vec<ModePair>) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Config(format!("damping a must be positive, got {a}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Config(format!("stiffness b must be positive, got {b}")));
        }
        let n = kappa.len();
        if n == 0 {
            return Err(Error::Config("model needs at least one mode".into()));
        }
        if let Some(k) = kappa.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::Config(format!("every kappa must be positive, got {k}")));
        }
        if kappa.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("kappa must be strictly increasing".into()));
        }
        if x0.len() != n {
            return Err(Error::Config(format!("x0 has {} modes but kappa has {n}", x0.len())));
        }
        if x0.iter().any(|p| !(p.u.is_finite() && p.v.is_finite())) {
            return Err(Error::Config("x0 must be finite".into()));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("q matrix must be finite".into()));
        }
        let scale = q.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[i * n + j] - q[j * n + i]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Config(format!("q matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || q[i * n + j] == 0.0));
        let trace: f64 = (0..n).map(|i| q[i * n + i]).sum();
        if diagonal {
            if let Some(l) = (0..n).map(|i| q[i * n + i]).find(|l| *l < 0.0) {
                return Err(Error::Config(format!("noise eigenvalue {l} is negative")));
            }
        } else {
            let m = DMatrix::from_row_slice(n, n, &q);
            let eig = SymmetricEigen::new(m);
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -PSD_TOL * trace.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Config(format!(
                    "q matrix is not positive semidefinite (smallest eigenvalue {min})"
                )));
            }
        }
        Ok(Self { a, b, kappa, q, x0, diagonal })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_modes(&self) -> usize {
        self.kappa.len()
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Entry `<Q e_n, e_k>`.
    pub fn q(&self, n: usize, k: usize) -> f64 {
        self.q[n * self.n_modes() + k]
    }

    pub fn q_row(&self, n: usize) -> &[f64] {
        let len = self.n_modes();
        &self.q[n * len..(n + 1) * len]
    }

    /// Diagonal of the noise covariance, `λ_n` in the diagonal case.
    pub fn q_diagonal(&self) -> Vec<f64> {
        (0..self.n_modes()).map(|n| self.q(n, n)).collect()
    }

    /// Whether all off-diagonal entries of the noise covariance vanish.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn x0(&self) -> &[ModePair] {
        &self.x0
    }

    pub fn with_x0(&self, x0: Vec<ModePair>) -> Result<Self> {
        let rows = (0..self.n_modes()).map(|n| self.q_row(n).to_vec()).collect();
        Model::new(self.a, self.b, self.kappa.clone(), rows, x0)
    }

    /// Same spectrum and noise, different `(a, b)`.
    pub fn with_params(&self, a: f64, b: f64) -> Result<Self> {
        Self::from_parts(a, b, self.kappa.clone(), self.q.clone(), self.x0.clone())
    }

    /// Same model with the noise covariance multiplied by `factor`.
    pub fn with_noise_scaled(&self, factor: f64) -> Result<Self> {
        let q = self.q.iter().map(|x| x * factor).collect();
        Self::from_parts(self.a, self.b, self.kappa.clone(), q, self.x0.clone())
    }

    pub fn regimes(&self, tol: f64) -> Vec<Regime> {
        self.kappa.iter().map(|&k| crate::semigroup::classify_mode(self.a, self.b, k, tol)).collect()
    }

    pub fn trace_q(&self) -> f64 {
        trace_q(self)
    }
}

/// Truncated trace `Σ_n <Q e_n, e_n>` over the retained modes.
pub fn trace_q(model: &Model) -> f64 {
    (0..model.n_modes()).map(|n| model.q(n, n)).sum()
}

/// Wave or plate preset on (0,1) with Dirichlet ends, diagonal noise from
/// `rule` and the all-ones initial state `u_n = v_n = 1`.
pub fn builtin_preset(kind: PresetKind, modes: usize, a: f64, b: f64, rule: &LambdaRule) -> Result<Model> {
    if modes == 0 {
        return Err(Error::Config("number of modes must be positive".into()));
    }
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Config(format!("a and b must be positive, got a={a}, b={b}")));
    }
    let kappa = (1..=modes)
        .map(|n| {
            let alpha = (n as f64 * PI).powi(2);
            match kind {
                PresetKind::Wave => alpha,
                PresetKind::Plate => alpha * alpha,
            }
        })
        .collect();
    let lambda = rule.eigenvalues(modes)?;
    Model::diagonal(a, b, kappa, lambda, vec![ModePair::new(1.0, 1.0); modes])
}

/// The simulation setup used throughout the examples: wave preset, `N = 10`,
/// `a = 1`, `b = 0.2`, `λ_n = 1000/n²`.
pub fn reference_wave_model() -> Model {
    builtin_preset(PresetKind::Wave, 10, 1.0, 0.2, &LambdaRule::default()).expect("reference preset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_preset_matches_reference_setup() {
        let m = reference_wave_model();
        assert_eq!(m.n_modes(), 10);
        assert!((m.kappa()[0] - 9.869_604_401_089_358).abs() < 1e-12);
        assert_eq!(m.q(0, 0), 1000.0);
        assert!((m.q(9, 9) - 10.0).abs() < 1e-12);
        assert!(m.is_diagonal());
        assert!(m.x0().iter().all(|p| p.u == 1.0 && p.v == 1.0));
    }

    #[test]
    fn noise_free_single_oscillator() {
        let m = builtin_preset(PresetKind::Wave, 1, 1.0, 1.0, &LambdaRule::Explicit(vec![0.0])).unwrap();
        assert_eq!(m.trace_q(), 0.0);
    }

    #[test]
    fn plate_preset_uses_squared_eigenvalues() {
        let rule = LambdaRule::Power { scale: 1.0, exponent: 2.0 };
        let m = builtin_preset(PresetKind::Plate, 3, 1.0, 0.2, &rule).unwrap();
        assert!((m.kappa()[1] - 16.0 * PI.powi(4)).abs() < 1e-9);
        assert!((m.q(1, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn preset_rejects_bad_parameters() {
        let rule = LambdaRule::default();
        assert!(builtin_preset(PresetKind::Wave, 0, 1.0, 1.0, &rule).is_err());
        assert!(builtin_preset(PresetKind::Wave, 3, 0.0, 1.0, &rule).is_err());
        assert!(builtin_preset(PresetKind::Wave, 3, 1.0, -1.0, &rule).is_err());
    }

    #[test]
    fn trace_of_reference_noise() {
        let m = reference_wave_model();
        let expected: f64 = (1..=10).map(|n| 1000.0 / (n * n) as f64).sum();
        assert!((m.trace_q() - expected).abs() < 1e-12);
        assert!((m.trace_q() - 1549.7677).abs() < 1e-4);
    }

    #[test]
    fn trace_of_single_mode() {
        let m = Model::diagonal(1.0, 1.0, vec![1.0], vec![7.0], vec![ModePair::ZERO]).unwrap();
        assert_eq!(trace_q(&m), 7.0);
    }

    #[test]
    fn rejects_invalid_models() {
        let x0 = vec![ModePair::ZERO; 2];
        assert!(Model::diagonal(1.0, 1.0, vec![2.0, 1.0], vec![1.0, 1.0], x0.clone()).is_err());
        assert!(Model::diagonal(1.0, 1.0, vec![-1.0, 1.0], vec![1.0, 1.0], x0.clone()).is_err());
        assert!(Model::new(1.0, 1.0, vec![1.0, 2.0], vec![vec![1.0, 0.5], vec![0.4, 1.0]], x0.clone()).is_err());
        // indefinite
        assert!(Model::new(1.0, 1.0, vec![1.0, 2.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]], x0.clone()).is_err());
        assert!(Model::new(1.0, 1.0, vec![1.0, 2.0], vec![vec![2.0, 1.0], vec![1.0, 2.0]], x0).is_ok());
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let m = reference_wave_model();
        let json = serde_json::to_string(&m).unwrap();
        let back: Model = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let bad = json.replace("\"a\":1.0", "\"a\":-1.0");
        assert!(serde_json::from_str::<Model>(&bad).is_err());
    }
}
