//! Shapiro–Wilk W test with Royston's normalizing approximation
//! (algorithm AS R94, 1995), valid for `3 ≤ n ≤ 5000`.
//!
//! Coefficients `a_i` use the Royston polynomial corrections for the two
//! extreme weights and the normalized Blom scores `Φ⁻¹((i - 3/8)/(n + 1/4))`
//! for the rest. The p-value is the upper tail of a normal approximation to
//! `log(1 - W)`: for `4 ≤ n ≤ 11` after the transform `-log(γ - log(1 - W))`,
//! for `n ≥ 12` directly. `n = 3` uses the exact distribution.
//! Normal quantiles and tails come from `statrs`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 3;
pub const MAX_SAMPLES: usize = 5000;

const C1: [f64; 6] = [0.0, 0.221_157, -0.147_981, -2.071_19, 4.434_685, -2.706_056];
const C2: [f64; 6] = [0.0, 0.042_981, -0.293_762, -1.752_461, 5.682_633, -3.582_633];
const C3: [f64; 4] = [0.544, -0.399_78, 0.025_054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.778_57, 0.062_767, -0.002_032_2];
const C5: [f64; 4] = [-1.5861, -0.310_82, -0.083_751, 0.003_891_5];
const C6: [f64; 3] = [-0.4803, -0.082_676, 0.003_030_2];
const G: [f64; 2] = [-2.273, 0.459];

/// `c[0] + c[1] x + c[2] x² + ...`
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Royston's approximation to the Shapiro–Wilk coefficients (the upper half,
/// `a_1 ≥ a_2 ≥ ... ≥ a_{n/2} > 0`).
pub fn shapiro_wilk_coefficients(n: usize) -> Result<Vec<f64>> {
    if !(MIN_SAMPLES..=MAX_SAMPLES).contains(&n) {
        return Err(Error::UnsupportedSize { n, min: MIN_SAMPLES, max: MAX_SAMPLES });
    }
    let half = n / 2;
    if n == 3 {
        return Ok(vec![std::f64::consts::FRAC_1_SQRT_2]);
    }
    let normal = std_normal();
    let an = n as f64;
    let m: Vec<f64> = (1..=half).map(|i| normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
    let summ2 = 2.0 * m.iter().map(|x| x * x).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    a[0] = a1;
    let first_plain;
    let fac;
    if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a[1] = a2;
        first_plain = 2;
    } else {
        fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        first_plain = 1;
    }
    for i in first_plain..half {
        a[i] = -m[i] / fac;
    }
    Ok(a)
}

/// W statistic and p-value. Errors when `n` is outside `3..=5000` or the
/// sample has zero range.
pub fn normality_test(samples: &[f64]) -> Result<ShapiroWilk> {
    let n = samples.len();
    let coef = shapiro_wilk_coefficients(n)?;
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("normality test needs finite samples".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    let range = x[n - 1] - x[0];
    if !(range > 1e-19 * x[n - 1].abs().max(x[0].abs()).max(1.0)) {
        return Err(Error::Domain("normality test is undefined for a sample with zero range".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num: f64 = coef.iter().enumerate().map(|(i, a)| a * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ssq).min(1.0);

    let p_value = if n == 3 {
        const SIX_OVER_PI: f64 = 1.909_859_317_102_744;
        const PI_OVER_THREE: f64 = 1.047_197_551_196_597_6;
        (SIX_OVER_PI * (w.sqrt().asin() - PI_OVER_THREE)).max(0.0)
    } else {
        let an = n as f64;
        let w1 = (1.0 - w).ln();
        let (stat, mean, sd) = if n <= 11 {
            let gamma = poly(&G, an);
            if w1 >= gamma {
                return Ok(ShapiroWilk { w, p_value: 1e-99 });
            }
            (-(gamma - w1).ln(), poly(&C3, an), poly(&C4, an).exp())
        } else {
            let ln_n = an.ln();
            (w1, poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        1.0 - std_normal().cdf((stat - mean) / sd)
    };
    Ok(ShapiroWilk { w, p_value })
}

/// Standard normal quantile, re-exported for Q–Q plots.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    #[test]
    fn size_limits() {
        assert!(matches!(normality_test(&[1.0, 2.0]), Err(Error::UnsupportedSize { n: 2, .. })));
        assert!(normality_test(&vec![0.0; 5001]).is_err());
        assert!(normality_test(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn exact_normal_scores_are_nearly_perfect() {
        let n = 50;
        let x: Vec<f64> = (1..=n).map(|i| normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25))).collect();
        let r = normality_test(&x).unwrap();
        assert!(r.w > 0.99, "W = {}", r.w);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn uniform_sample_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..100).map(|_| u.sample(&mut rng)).collect();
        let r = normality_test(&x).unwrap();
        assert!(r.p_value < 0.05, "p = {}", r.p_value);
    }

    // Reference values from an independent AS R94 implementation (scipy).
    #[test]
    fn matches_reference_implementation() {
        let cases: [(&[f64], f64, f64); 4] = [
            (&[148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0, 236.0], 0.788_814_7, 0.006_703_8),
            (&[2.0, 4.0, 5.5, 7.0, 11.0, 13.5], 0.955_009_6, 0.780_573_5),
            (&[1.0, 2.0, 2.5, 4.0], 0.981_516_4, 0.910_856_4),
            (
                &[
                    0.139, 0.157, 0.175, 0.256, 0.344, 0.413, 0.503, 0.577, 0.614, 0.655, 0.954, 1.392, 1.557, 1.648,
                    1.690, 1.994, 2.174, 2.206, 3.245, 3.510, 3.571, 4.354, 4.980, 6.084, 8.351,
                ],
                0.834_666_3,
                0.000_913_5,
            ),
        ];
        for (x, w, p) in cases {
            let r = normality_test(x).unwrap();
            assert!((r.w - w).abs() < 1e-4, "W {} vs {}", r.w, w);
            assert!((r.p_value - p).abs() < 1e-3 * p.max(0.01), "p {} vs {}", r.p_value, p);
        }
    }

    #[test]
    fn three_points() {
        // Equally spaced points give W = 1 and p = 1.
        let r = normality_test(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.w - 1.0).abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }
}
