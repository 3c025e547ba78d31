//! Seeded Monte Carlo replications and their statistical summary.
//!
//! Replication `i` is simulated with seed `replication_seed(master_seed, i)`
//! on a dedicated rayon pool; results are gathered in replication order, so a
//! report depends only on the configuration, never on the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::asymptotic_variances;
use crate::error::{Error, Result};
use crate::estimate::{estimate_hat, estimate_tilde, Estimate};
use crate::model::Model;
use crate::normality::{normality_test, ShapiroWilk, MIN_SAMPLES};
use crate::simulate::{replication_seed, simulate_path, Scheme, SimulationOptions};

/// Estimator names in report order.
pub const ESTIMATORS: [&str; 4] = ["a_hat", "b_hat", "a_tilde", "b_tilde"];

/// Fraction of relative errors that lie at or below `rel_err_typical`.
pub const TYPICAL_QUANTILE: f64 = 0.75;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerEstimator<T> {
    pub a_hat: T,
    pub b_hat: T,
    pub a_tilde: T,
    pub b_tilde: T,
}

impl<T> PerEstimator<T> {
    pub fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        PerEstimator { a_hat: f(0), b_hat: f(1), a_tilde: f(2), b_tilde: f(3) }
    }

    pub fn get(&self, i: usize) -> &T {
        match i {
            0 => &self.a_hat,
            1 => &self.b_hat,
            2 => &self.a_tilde,
            3 => &self.b_tilde,
            _ => panic!("estimator index {i} out of range"),
        }
    }

    pub fn as_array(&self) -> [&T; 4] {
        [&self.a_hat, &self.b_hat, &self.a_tilde, &self.b_tilde]
    }
}

/// One replication: its seed, the four estimates and the raw averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSample {
    pub replication: usize,
    pub seed: u64,
    pub estimates: PerEstimator<Estimate>,
    #[serde(rename = "I_T")]
    pub i_t: f64,
    #[serde(rename = "Y_T")]
    pub y_t: f64,
    #[serde(rename = "H_T")]
    pub h_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    /// Replications with a defined estimate.
    pub used: usize,
    /// Replications whose estimate was undefined and therefore left out.
    pub excluded: usize,
    pub mean: Option<f64>,
    /// Sample variance (n − 1 denominator) of `√T (estimate − true)`.
    pub variance_scaled: Option<f64>,
    pub var_theoretical: Option<f64>,
    pub rel_err_max: Option<f64>,
    /// Nearest-rank 75th percentile of the relative errors.
    pub rel_err_typical: Option<f64>,
    /// `None` when fewer than three values remain or they are all equal.
    pub normality: Option<ShapiroWilk>,
}

/// Everything needed to rerun a study, echoed into its report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub model: Model,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub scheme: Scheme,
    #[serde(rename = "M")]
    pub replications: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub true_values: PerEstimator<f64>,
    pub summary: PerEstimator<EstimatorSummary>,
    pub samples: Vec<ReplicationSample>,
}

impl McReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("report serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("report: {e}")))
    }
}

fn true_values(model: &Model) -> PerEstimator<f64> {
    let (a, b) = (model.a(), model.b());
    PerEstimator { a_hat: a, b_hat: b, a_tilde: a, b_tilde: b }
}

/// Runs one replication. The hat family is given the true value of the
/// other parameter.
pub fn run_replication(model: &Model, opts: &SimulationOptions, replication: usize) -> Result<ReplicationSample> {
    let out = simulate_path(model, opts).map_err(|e| Error::Replication {
        replication,
        seed: opts.seed,
        source: Box::new(e),
    })?;
    let s = &out.stats;
    let tr = model.trace_q();
    let est = estimate_hat(s.i_t, tr, Some(model.a()), Some(model.b())).merge(estimate_tilde(s.y_t, s.h_t, tr));
    let pick = |e: Option<Estimate>| e.expect("all four estimators requested");
    Ok(ReplicationSample {
        replication,
        seed: opts.seed,
        estimates: PerEstimator {
            a_hat: pick(est.a_hat),
            b_hat: pick(est.b_hat),
            a_tilde: pick(est.a_tilde),
            b_tilde: pick(est.b_tilde),
        },
        i_t: s.i_t,
        y_t: s.y_t,
        h_t: s.h_t,
    })
}

/// `M` independent replications on `workers` threads, summarized.
pub fn run_monte_carlo(
    model: &Model,
    horizon: f64,
    dt: f64,
    scheme: Scheme,
    replications: usize,
    master_seed: u64,
    workers: usize,
) -> Result<McReport> {
    if replications < 2 {
        return Err(Error::Usage(format!("need at least 2 replications, got {replications}")));
    }
    if workers == 0 {
        return Err(Error::Usage("worker count must be at least 1".into()));
    }
    // Fail on bad step parameters before spinning up the pool.
    crate::simulate::step_count(dt, horizon)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    let results: Vec<Result<ReplicationSample>> = pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|i| {
                let opts = SimulationOptions::new(scheme, dt, horizon, replication_seed(master_seed, i as u64));
                run_replication(model, &opts, i)
            })
            .collect()
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarize(&samples, model.a(), model.b(), horizon, model)?;
    Ok(McReport {
        config: McConfig { model: model.clone(), horizon, dt, scheme, replications, master_seed },
        true_values: true_values(model),
        summary,
        samples,
    })
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize_one(
    values: &[f64],
    excluded: usize,
    truth: f64,
    horizon: f64,
    theory: Option<f64>,
) -> Result<EstimatorSummary> {
    let n = values.len();
    let mut out = EstimatorSummary {
        used: n,
        excluded,
        mean: None,
        variance_scaled: None,
        var_theoretical: theory,
        rel_err_max: None,
        rel_err_typical: None,
        normality: None,
    };
    if n == 0 {
        return Ok(out);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    out.mean = Some(mean);
    if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        out.variance_scaled = Some(horizon * ss / (n - 1) as f64);
    }
    let mut rel: Vec<f64> = values.iter().map(|v| (v - truth).abs() / truth).collect();
    rel.sort_by(f64::total_cmp);
    out.rel_err_max = rel.last().copied();
    out.rel_err_typical = Some(nearest_rank(&rel, TYPICAL_QUANTILE));
    if n >= MIN_SAMPLES {
        out.normality = match normality_test(values) {
            Ok(sw) => Some(sw),
            Err(Error::Domain(_)) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

/// Per-estimator means, scaled variances, relative errors and normality
/// tests. Undefined estimates are excluded and counted.
pub fn summarize(
    samples: &[ReplicationSample],
    true_a: f64,
    true_b: f64,
    horizon: f64,
    model: &Model,
) -> Result<PerEstimator<EstimatorSummary>> {
    if samples.is_empty() {
        return Err(Error::Usage("cannot summarize an empty sample".into()));
    }
    let theory = if model.trace_q() > 0.0 {
        let v = asymptotic_variances(model)?;
        Some([v.a_hat, v.b_hat, v.a_tilde, v.b_tilde])
    } else {
        None
    };
    let truths = [true_a, true_b, true_a, true_b];
    let mut out = Vec::with_capacity(4);
    for (k, &truth) in truths.iter().enumerate() {
        let values: Vec<f64> = samples.iter().filter_map(|s| s.estimates.get(k).value()).collect();
        let excluded = samples.len() - values.len();
        out.push(summarize_one(&values, excluded, truth, horizon, theory.map(|t| t[k]))?);
    }
    let mut it = out.into_iter();
    Ok(PerEstimator::from_fn(|_| it.next().expect("four summaries")))
}

fn csv_value(e: &Estimate) -> String {
    match e {
        Estimate::Value(v) => v.to_string(),
        Estimate::Undefined(u) => u.marker().to_string(),
    }
}

/// Per-replication CSV: `seed,a_hat,b_hat,a_tilde,b_tilde,I_T,Y_T,H_T`.
/// Undefined estimates are written as their `NA_*` marker.
pub fn write_samples_csv<W: Write>(samples: &[ReplicationSample], mut w: W) -> Result<()> {
    writeln!(w, "seed,a_hat,b_hat,a_tilde,b_tilde,I_T,Y_T,H_T")?;
    for s in samples {
        let e = s.estimates.as_array().map(csv_value);
        writeln!(w, "{},{},{},{},{},{},{},{}", s.seed, e[0], e[1], e[2], e[3], s.i_t, s.y_t, s.h_t)?;
    }
    Ok(())
}
