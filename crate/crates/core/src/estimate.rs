//! Minimum-contrast estimators of `(a, b)` from the ergodic averages.
//!
//! The "hat" family inverts the full-energy average `I_T` and needs the
//! other parameter to be known. The "tilde" family inverts the kinetic and
//! potential parts `H_T`, `Y_T` separately and needs neither.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::TrajectorySample;

/// Why an estimator has no value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Undefined {
    /// The statistic it inverts is zero or negative.
    #[serde(rename = "NA_stat")]
    NonPositiveStatistic,
    /// `Tr Q = 0`; nothing to invert against.
    #[serde(rename = "NA_noise")]
    ZeroNoiseTrace,
    /// `4a·I_T ≤ Tr Q`: `b̂` is at or past its pole.
    #[serde(rename = "NA_pole")]
    BelowPole,
}

impl Undefined {
    pub fn marker(&self) -> &'static str {
        match self {
            Undefined::NonPositiveStatistic => "NA_stat",
            Undefined::ZeroNoiseTrace => "NA_noise",
            Undefined::BelowPole => "NA_pole",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Value(f64),
    Undefined(Undefined),
}

impl Estimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            Estimate::Value(v) => Some(*v),
            Estimate::Undefined(_) => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Estimate::Value(_))
    }
}

/// Inputs that produced an [`EstimateSet`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateInputs {
    #[serde(rename = "I_T", skip_serializing_if = "Option::is_none", default)]
    pub i_t: Option<f64>,
    #[serde(rename = "Y_T", skip_serializing_if = "Option::is_none", default)]
    pub y_t: Option<f64>,
    #[serde(rename = "H_T", skip_serializing_if = "Option::is_none", default)]
    pub h_t: Option<f64>,
    pub tr_q: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub known_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub known_b: Option<f64>,
}

/// The four estimators. `None` means the estimator was not requested or a
/// required known parameter was missing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub a_hat: Option<Estimate>,
    pub b_hat: Option<Estimate>,
    pub a_tilde: Option<Estimate>,
    pub b_tilde: Option<Estimate>,
    pub inputs: EstimateInputs,
}

impl EstimateSet {
    /// Fills the estimators missing in `self` from `other`.
    pub fn merge(mut self, other: EstimateSet) -> Self {
        self.a_hat = self.a_hat.or(other.a_hat);
        self.b_hat = self.b_hat.or(other.b_hat);
        self.a_tilde = self.a_tilde.or(other.a_tilde);
        self.b_tilde = self.b_tilde.or(other.b_tilde);
        let (mine, theirs) = (&mut self.inputs, other.inputs);
        mine.i_t = mine.i_t.or(theirs.i_t);
        mine.y_t = mine.y_t.or(theirs.y_t);
        mine.h_t = mine.h_t.or(theirs.h_t);
        mine.known_a = mine.known_a.or(theirs.known_a);
        mine.known_b = mine.known_b.or(theirs.known_b);
        self
    }

    /// `[â, b̂, ã, b̃]` as plain values.
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.a_hat, self.b_hat, self.a_tilde, self.b_tilde].map(|e| e.and_then(|e| e.value()))
    }
}

/// `â = (b+1)TrQ / (4b I_T)` (needs `b`) and `b̂ = TrQ / (4a I_T - TrQ)`
/// (needs `a`).
pub fn estimate_hat(i_t: f64, tr_q: f64, known_a: Option<f64>, known_b: Option<f64>) -> EstimateSet {
    let check = || {
        if !(tr_q > 0.0) {
            Some(Undefined::ZeroNoiseTrace)
        } else if !(i_t > 0.0) {
            Some(Undefined::NonPositiveStatistic)
        } else {
            None
        }
    };
    let a_hat = known_b.map(|b| match check() {
        Some(u) => Estimate::Undefined(u),
        None => Estimate::Value((b + 1.0) * tr_q / (4.0 * b * i_t)),
    });
    let b_hat = known_a.map(|a| match check() {
        Some(u) => Estimate::Undefined(u),
        None => {
            let denom = 4.0 * a * i_t - tr_q;
            if denom > 0.0 {
                Estimate::Value(tr_q / denom)
            } else {
                Estimate::Undefined(Undefined::BelowPole)
            }
        }
    });
    EstimateSet {
        a_hat,
        b_hat,
        inputs: EstimateInputs { i_t: Some(i_t), tr_q, known_a, known_b, ..Default::default() },
        ..Default::default()
    }
}

/// `ã = TrQ / (4 H_T)` and `b̃ = H_T / Y_T`.
pub fn estimate_tilde(y_t: f64, h_t: f64, tr_q: f64) -> EstimateSet {
    let a_tilde = if !(tr_q > 0.0) {
        Estimate::Undefined(Undefined::ZeroNoiseTrace)
    } else if !(h_t > 0.0) {
        Estimate::Undefined(Undefined::NonPositiveStatistic)
    } else {
        Estimate::Value(tr_q / (4.0 * h_t))
    };
    let b_tilde = if y_t > 0.0 && h_t > 0.0 {
        Estimate::Value(h_t / y_t)
    } else {
        Estimate::Undefined(Undefined::NonPositiveStatistic)
    };
    EstimateSet {
        a_tilde: Some(a_tilde),
        b_tilde: Some(b_tilde),
        inputs: EstimateInputs { y_t: Some(y_t), h_t: Some(h_t), tr_q, ..Default::default() },
        ..Default::default()
    }
}

/// Both families from one set of averages.
pub fn estimate_all(y_t: f64, h_t: f64, tr_q: f64, known_a: Option<f64>, known_b: Option<f64>) -> EstimateSet {
    estimate_hat(y_t + h_t, tr_q, known_a, known_b).merge(estimate_tilde(y_t, h_t, tr_q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningEstimate {
    pub t: f64,
    pub estimates: EstimateSet,
}

/// Estimates at every sample of a running-average stream.
pub fn running_estimates(
    stream: &[TrajectorySample],
    tr_q: f64,
    known_a: Option<f64>,
    known_b: Option<f64>,
) -> Result<Vec<RunningEstimate>> {
    if stream.is_empty() {
        return Err(Error::Usage("running estimates need at least one sample".into()));
    }
    if stream.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::Usage("sample times must be non-decreasing".into()));
    }
    Ok(stream
        .iter()
        .map(|s| {
            let estimates = estimate_hat(s.i_t, tr_q, known_a, known_b).merge(estimate_tilde(s.y_t, s.h_t, tr_q));
            RunningEstimate { t: s.t, estimates }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TR_Q: f64 = 1_549.767_731_166_540_7;

    fn v(e: Option<Estimate>) -> f64 {
        e.unwrap().value().unwrap()
    }

    fn round4(x: f64) -> f64 {
        (x * 1e4).round() / 1e4
    }

    #[test]
    fn hat_family_reference_values() {
        let e = estimate_hat(2740.959, TR_Q, Some(1.0), Some(0.2));
        assert_eq!(round4(v(e.a_hat)), 0.8481);
        assert_eq!(round4(v(e.b_hat)), 0.1646);
        let e = estimate_hat(2360.458, TR_Q, Some(1.0), Some(0.2));
        assert_eq!(round4(v(e.a_hat)), 0.9848);
        assert_eq!(round4(v(e.b_hat)), 0.1964);
    }

    #[test]
    fn tilde_family_reference_values() {
        let e = estimate_tilde(2330.218, 410.741, TR_Q);
        assert_eq!(round4(v(e.a_tilde)), 0.9433);
        assert_eq!(round4(v(e.b_tilde)), 0.1763);
        let e = estimate_tilde(1975.777, 384.681, TR_Q);
        assert_eq!(round4(v(e.a_tilde)), 1.0072);
        assert_eq!(round4(v(e.b_tilde)), 0.1947);
    }

    #[test]
    fn exact_at_the_limit() {
        let (a, b) = (1.0, 0.2);
        let limit = (b + 1.0) * TR_Q / (4.0 * a * b);
        let e = estimate_hat(limit, TR_Q, Some(a), Some(b));
        assert!((v(e.a_hat) - a).abs() < 1e-12);
        assert!((v(e.b_hat) - b).abs() < 1e-12);
        let e = estimate_tilde(TR_Q / (4.0 * a * b), TR_Q / (4.0 * a), TR_Q);
        assert!((v(e.a_tilde) - a).abs() < 1e-12);
        assert!((v(e.b_tilde) - b).abs() < 1e-12);
    }

    #[test]
    fn pole_and_missing_parameters() {
        let e = estimate_hat(100.0, 400.0, Some(1.0), None);
        assert_eq!(e.a_hat, None);
        assert_eq!(e.b_hat, Some(Estimate::Undefined(Undefined::BelowPole)));
        let e = estimate_hat(0.0, 400.0, Some(1.0), Some(1.0));
        assert_eq!(e.a_hat, Some(Estimate::Undefined(Undefined::NonPositiveStatistic)));
    }

    #[test]
    fn zero_denominators() {
        let e = estimate_tilde(0.0, 0.0, 10.0);
        assert!(!e.a_tilde.unwrap().is_defined());
        assert!(!e.b_tilde.unwrap().is_defined());
        let e = estimate_tilde(2.0, 1.0, 0.0);
        assert_eq!(e.a_tilde, Some(Estimate::Undefined(Undefined::ZeroNoiseTrace)));
        assert_eq!(v(e.b_tilde), 0.5);
    }

    #[test]
    fn running_constant_stream() {
        let (a, b) = (1.0, 0.2);
        let y = TR_Q / (4.0 * a * b);
        let h = TR_Q / (4.0 * a);
        let stream: Vec<_> = (1..5).map(|i| TrajectorySample { t: i as f64, i_t: y + h, y_t: y, h_t: h }).collect();
        let out = running_estimates(&stream, TR_Q, Some(a), Some(b)).unwrap();
        for r in out {
            for (x, want) in r.estimates.values().iter().zip([a, b, a, b]) {
                assert!((x.unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn running_degenerate_start() {
        let stream = [
            TrajectorySample { t: 0.0, i_t: 0.0, y_t: 0.0, h_t: 0.0 },
            TrajectorySample { t: 1.0, i_t: 3.0, y_t: 2.0, h_t: 1.0 },
        ];
        let out = running_estimates(&stream, 4.0, Some(1.0), Some(1.0)).unwrap();
        assert!(out[0].estimates.values().iter().all(Option::is_none));
        assert!(out[1].estimates.a_tilde.unwrap().is_defined());
        assert!(running_estimates(&[], 1.0, None, None).is_err());
    }

    #[test]
    fn serialization_markers() {
        let e = estimate_hat(100.0, 400.0, Some(1.0), Some(1.0));
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"NA_pole\""));
        let back: EstimateSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
