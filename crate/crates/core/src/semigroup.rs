//! Per-mode propagators of the damped second-order system.
//!
//! Each retained mode is the 2×2 linear system with generator
//! `[[0, 1], [-bκ, -2a]]`. Its exponential is evaluated in closed form for the
//! three spectral regimes; near the critical boundary all three formulas are
//! evaluated through one power series in `ζ = (bκ - a²)t²` so the result is
//! continuous across the boundary.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::model::{ModePair, Model, Regime};

/// Default relative tolerance for [`classify_mode`].
pub const CRITICAL_TOL: f64 = 1e-12;

/// Real 2×2 matrix acting on one mode's `(u, v)` coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeMatrix2x2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl ModeMatrix2x2 {
    pub const IDENTITY: Self = Self::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn apply(&self, x: ModePair) -> ModePair {
        ModePair { u: self.m11 * x.u + self.m12 * x.v, v: self.m21 * x.u + self.m22 * x.v }
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m11, self.m21, self.m12, self.m22)
    }

    /// Adjoint with respect to the energy inner product `κ u u' + v v'`.
    pub fn v_adjoint(&self, kappa: f64) -> Self {
        Self::new(self.m11, self.m21 / kappa, self.m12 * kappa, self.m22)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.m11.abs().max(self.m12.abs()).max(self.m21.abs()).max(self.m22.abs())
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (self.m11.abs() + self.m12.abs()).max(self.m21.abs() + self.m22.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.m11.is_finite() && self.m12.is_finite() && self.m21.is_finite() && self.m22.is_finite()
    }

    pub fn trace(&self) -> f64 {
        self.m11 + self.m22
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// Largest real part of the eigenvalues.
    pub fn spectral_abscissa(&self) -> f64 {
        let half = 0.5 * self.trace();
        let disc = half * half - self.det();
        if disc >= 0.0 {
            half + disc.sqrt()
        } else {
            half
        }
    }

    /// Lower Cholesky factor of a symmetric PSD matrix. Returns `(l11, l21, l22)`
    /// packed as `[[l11, 0], [l21, l22]]`.
    pub fn cholesky_lower(&self) -> Result<Self> {
        let tol = 1e-14 * self.max_abs();
        if self.m11 < -tol || self.m22 < -tol || (self.m12 - self.m21).abs() > 1e-9 * self.max_abs().max(1e-300) {
            return Err(Error::Factorization(format!("{self:?} is not symmetric PSD")));
        }
        if self.m11 <= 0.0 {
            return Ok(Self::new(0.0, 0.0, 0.0, self.m22.max(0.0).sqrt()));
        }
        let l11 = self.m11.sqrt();
        let l21 = self.m21 / l11;
        let rem = self.m22 - l21 * l21;
        if rem < -1e-10 * self.m22.abs().max(1e-300) {
            return Err(Error::Factorization(format!("{self:?} is indefinite")));
        }
        Ok(Self::new(l11, 0.0, l21, rem.max(0.0).sqrt()))
    }
}

impl Mul for ModeMatrix2x2 {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }
}

impl Add for ModeMatrix2x2 {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.m11 + o.m11, self.m12 + o.m12, self.m21 + o.m21, self.m22 + o.m22)
    }
}

impl Sub for ModeMatrix2x2 {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        Self::new(self.m11 - o.m11, self.m12 - o.m12, self.m21 - o.m21, self.m22 - o.m22)
    }
}

/// Critical iff `|bκ - a²| ≤ tol·a²`.
pub fn classify_mode(a: f64, b: f64, kappa: f64, tol: f64) -> Regime {
    let disc = b * kappa - a * a;
    if disc.abs() <= tol * a * a {
        Regime::Critical
    } else if disc > 0.0 {
        Regime::Oscillatory
    } else {
        Regime::Overdamped
    }
}

pub fn mode_generator(a: f64, b: f64, kappa: f64) -> ModeMatrix2x2 {
    ModeMatrix2x2::new(0.0, 1.0, -b * kappa, -2.0 * a)
}

/// `|ζ|` below which the series kernel is used.
const SERIES_RADIUS: f64 = 1.0;

/// `(Σ (-ζ)^k/(2k)!, Σ (-ζ)^k/(2k+1)!)`, i.e. `cos√ζ` and `sin√ζ/√ζ` continued
/// analytically to negative `ζ`.
fn even_odd_series(zeta: f64) -> (f64, f64) {
    let mut c = 1.0;
    let mut s = 1.0;
    let mut tc = 1.0;
    let mut ts = 1.0;
    for k in 1..40 {
        let k = k as f64;
        tc *= -zeta / ((2.0 * k - 1.0) * (2.0 * k));
        ts *= -zeta / ((2.0 * k) * (2.0 * k + 1.0));
        c += tc;
        s += ts;
        if tc.abs() <= f64::EPSILON * c.abs() * 1e-2 && ts.abs() <= f64::EPSILON * s.abs() * 1e-2 {
            break;
        }
    }
    (c, s)
}

/// `e^{-at}·(C, S)` with `C = cos(ωt)`, `S = sin(ωt)/ω`, `ω² = bκ - a²`
/// (hyperbolic when `ω²< 0`, `(1, t)` at the critical point).
fn damped_kernel(a: f64, b: f64, kappa: f64, t: f64) -> (f64, f64) {
    let disc = b * kappa - a * a;
    let zeta = disc * t * t;
    if zeta.abs() < SERIES_RADIUS {
        let (c, s) = even_odd_series(zeta);
        let decay = (-a * t).exp();
        return (decay * c, decay * s * t);
    }
    if disc > 0.0 {
        let omega = disc.sqrt();
        let decay = (-a * t).exp();
        let (sin, cos) = (omega * t).sin_cos();
        (decay * cos, decay * sin / omega)
    } else {
        let gamma = (-disc).sqrt();
        // slow root written without cancellation
        let l1 = -b * kappa / (a + gamma);
        let l2 = -a - gamma;
        let e1 = (l1 * t).exp();
        let e2 = (l2 * t).exp();
        (0.5 * (e1 + e2), (e1 - e2) / (2.0 * gamma))
    }
}

/// `exp(t·[[0,1],[-bκ,-2a]])` in closed form.
pub fn mode_propagator(a: f64, b: f64, kappa: f64, t: f64) -> Result<ModeMatrix2x2> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("propagator time must be finite and non-negative, got {t}")));
    }
    Ok(propagator_unchecked(a, b, kappa, t))
}

pub(crate) fn propagator_unchecked(a: f64, b: f64, kappa: f64, t: f64) -> ModeMatrix2x2 {
    let (c, s) = damped_kernel(a, b, kappa, t);
    ModeMatrix2x2::new(c + a * s, s, -b * kappa * s, c - a * s)
}

/// Scaling-and-squaring Taylor evaluation of `exp(tM)`. Independent of the
/// closed forms above; used to cross-check them.
///
/// Runs in double-double arithmetic: for stiff modes `‖tM‖` reaches 1e5 and
/// the squaring phase alone would cost about `‖tM‖·ε` of accuracy in plain
/// `f64`, which is comparable to the tolerances the oracle has to certify.
pub fn expm_oracle(m: ModeMatrix2x2, t: f64) -> Result<ModeMatrix2x2> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("oracle time must be finite and non-negative, got {t}")));
    }
    let norm = m.scale(t).inf_norm();
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("non-finite argument {:?}", m.scale(t))));
    }
    let squarings = if norm > 0.125 { (norm / 0.125).log2().ceil() as i32 } else { 0 };
    // t·2^-s is exact, so the scaled argument carries no rounding beyond M's own.
    let h = t * 0.5_f64.powi(squarings);
    let small = Dd2::new([m.m11, m.m12, m.m21, m.m22].map(|x| TwoFloat::new_mul(x, h)));

    let mut sum = Dd2::identity();
    let mut term = Dd2::identity();
    for k in 1..40 {
        term = term.mul(&small).div(k as f64);
        sum = sum.add(&term);
        if term.max_abs() <= 1e-34 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.mul(&sum);
    }
    let [m11, m12, m21, m22] = sum.0.map(|x| x.hi() + x.lo());
    let out = ModeMatrix2x2::new(m11, m12, m21, m22);
    if !out.is_finite() {
        return Err(Error::Numeric(format!("matrix exponential overflowed for t={t}, M={m:?}")));
    }
    Ok(out)
}

/// Row-major 2×2 matrix in double-double precision.
#[derive(Clone, Copy)]
struct Dd2([TwoFloat; 4]);

impl Dd2 {
    fn new(e: [TwoFloat; 4]) -> Self {
        Dd2(e)
    }

    fn identity() -> Self {
        let (one, zero) = (TwoFloat::from(1.0), TwoFloat::from(0.0));
        Dd2([one, zero, zero, one])
    }

    fn mul(&self, o: &Dd2) -> Dd2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Dd2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }

    fn add(&self, o: &Dd2) -> Dd2 {
        Dd2(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }

    fn div(&self, k: f64) -> Dd2 {
        Dd2(self.0.map(|x| x / k))
    }

    fn max_abs(&self) -> f64 {
        self.0.iter().map(|x| x.hi().abs()).fold(0.0, f64::max)
    }
}

/// Per-mode blocks of the three self-adjoint operators used in the
/// energy identities of the ergodic functionals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RMatrices {
    /// Couples the full energy `κu² + v²`.
    pub r: ModeMatrix2x2,
    /// Isolates the kinetic part `v²`.
    pub r1: ModeMatrix2x2,
    /// Isolates the potential part `κu²`.
    pub r2: ModeMatrix2x2,
}

pub fn r_matrices(a: f64, b: f64, kappa: f64) -> RMatrices {
    let bp1 = b + 1.0;
    RMatrices {
        r: ModeMatrix2x2::new(b + 4.0 * a * a / (bp1 * kappa), 2.0 * a / (bp1 * kappa), 2.0 * a / bp1, 1.0),
        r1: ModeMatrix2x2::new(b, 0.0, 0.0, 1.0),
        r2: ModeMatrix2x2::new(b + 4.0 * a * a / kappa, 2.0 * a / kappa, 2.0 * a, 1.0),
    }
}

/// Energy inner product of a single mode.
#[inline]
pub fn mode_v_inner(kappa: f64, x: ModePair, y: ModePair) -> f64 {
    kappa * x.u * y.u + x.v * y.v
}

/// `Σ_n κ_n u_xn u_yn + v_xn v_yn`.
pub fn v_inner(x: &[ModePair], y: &[ModePair], model: &Model) -> Result<f64> {
    let n = model.n_modes();
    for len in [x.len(), y.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, actual: len });
        }
    }
    Ok(model.kappa().iter().zip(x.iter().zip(y)).map(|(&k, (&xi, &yi))| mode_v_inner(k, xi, yi)).sum())
}

pub fn v_norm_sq(x: &[ModePair], model: &Model) -> Result<f64> {
    v_inner(x, x, model)
}
