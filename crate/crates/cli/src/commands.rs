//! Subcommand bodies. All arithmetic is delegated to the core crate; this
//! layer only resolves configuration and writes files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use waveinfer_core::covariance::{asymptotic_variances, trace_q_infinity, AsymptoticVariances, QInfinityTrace};
use waveinfer_core::estimate::{estimate_hat, estimate_tilde, running_estimates, Estimate, EstimateSet};
use waveinfer_core::harness::{run_monte_carlo, write_samples_csv, McReport, ESTIMATORS};
use waveinfer_core::normality::normal_quantile;
use waveinfer_core::simulate::{simulate_path, PathStatistics, SimulationOptions};
use waveinfer_core::verify::{run_all, ItoDecayOptions};
use waveinfer_core::{Error, ResolvedConfig};

use crate::svg::{Chart, Series};
use crate::{Common, EstimateArgs, Failure, THREADS_ENV};

/// Trajectory rows are written every this many steps.
pub const RECORD_EVERY: usize = 100;

pub const TRAJECTORY_HEADER: &str = "time,I_t,Y_t,H_t,a_hat_t,b_hat_t,a_tilde_t,b_tilde_t";

fn output_dir(dir: &Path) -> Result<&Path, Error> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
}

fn csv_cell(e: Option<Estimate>) -> String {
    match e {
        Some(Estimate::Value(v)) => v.to_string(),
        Some(Estimate::Undefined(u)) => u.marker().to_string(),
        None => "NA".to_string(),
    }
}

/// Grid times as `k·dt`, printed without binary-fraction noise.
fn fmt_time(t: f64) -> String {
    let s = format!("{t:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn batch_estimates(stats_i: f64, stats_y: f64, stats_h: f64, cfg: &ResolvedConfig) -> EstimateSet {
    let m = &cfg.model;
    let tr = m.trace_q();
    estimate_hat(stats_i, tr, Some(m.a()), Some(m.b())).merge(estimate_tilde(stats_y, stats_h, tr))
}

pub fn simulate(c: &Common) -> Result<(), Failure> {
    let cfg = c.run_config()?.resolve()?;
    let m = &cfg.model;
    let opts = SimulationOptions::new(cfg.scheme, cfg.dt, cfg.horizon, cfg.seed).recording(RECORD_EVERY);
    let out = simulate_path(m, &opts)?;
    let stream = running_estimates(&out.trajectory, m.trace_q(), Some(m.a()), Some(m.b()))?;

    let dir = output_dir(&c.out)?;
    let mut csv = String::with_capacity(64 * stream.len());
    csv.push_str(TRAJECTORY_HEADER);
    csv.push('\n');
    for (s, r) in out.trajectory.iter().zip(&stream) {
        let e = &r.estimates;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            fmt_time(s.t),
            s.i_t,
            s.y_t,
            s.h_t,
            csv_cell(e.a_hat),
            csv_cell(e.b_hat),
            csv_cell(e.a_tilde),
            csv_cell(e.b_tilde)
        );
    }
    write_file(dir, "trajectory.csv", &csv)?;
    write_file(dir, "path_stats.json", &to_json(&out.stats)?)?;

    if c.plots {
        let t: Vec<f64> = stream.iter().map(|r| r.t).collect();
        let pick = |f: fn(&EstimateSet) -> Option<Estimate>| -> Vec<(f64, f64)> {
            stream
                .iter()
                .zip(&t)
                .filter(|(_, &t)| t >= cfg.horizon / 100.0)
                .filter_map(|(r, &t)| f(&r.estimates).and_then(|e| e.value()).map(|v| (t, v)))
                .collect()
        };
        let truth = |v: f64| vec![(t[0], v), (*t.last().unwrap_or(&0.0), v)];
        for (name, symbol, truth_value, hat, tilde) in [
            ("evolution_a.svg", "a", m.a(), pick(|e| e.a_hat), pick(|e| e.a_tilde)),
            ("evolution_b.svg", "b", m.b(), pick(|e| e.b_hat), pick(|e| e.b_tilde)),
        ] {
            let chart = Chart {
                title: format!("Time evolution of the estimators of {symbol}"),
                x_label: "t".into(),
                y_label: format!("estimate of {symbol}"),
                series: vec![
                    Series::line(format!("{symbol} hat"), hat),
                    Series::line(format!("{symbol} tilde"), tilde),
                    Series::line(format!("true {symbol}"), truth(truth_value)).dashed(),
                ],
                y_range: Some((0.0, 2.0 * truth_value)),
            };
            write_file(dir, name, &chart.render())?;
        }
        let lim = trace_q_infinity(m);
        let series = |f: fn(&waveinfer_core::simulate::TrajectorySample) -> f64| {
            out.trajectory.iter().filter(|s| s.t > 0.0).map(|s| (s.t, f(s))).collect::<Vec<_>>()
        };
        let chart = Chart {
            title: "Ergodic averages".into(),
            x_label: "t".into(),
            y_label: "running average".into(),
            series: vec![
                Series::line("I_t", series(|s| s.i_t)),
                Series::line("Y_t", series(|s| s.y_t)),
                Series::line("H_t", series(|s| s.h_t)),
                Series::line("limit of I", truth(lim.total)).dashed(),
                Series::line("limit of Y", truth(lim.position)).dashed(),
                Series::line("limit of H", truth(lim.velocity)).dashed(),
            ],
            y_range: Some((0.0, 2.0 * lim.total.max(1e-12))),
        };
        write_file(dir, "averages.svg", &chart.render())?;
    }
    let s = &out.stats;
    println!("I_T = {}, Y_T = {}, H_T = {}", s.i_t, s.y_t, s.h_t);
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput {
    source: &'static str,
    estimates: EstimateSet,
}

pub fn estimate(e: &EstimateArgs) -> Result<(), Failure> {
    let cfg = e.common.run_config()?.resolve()?;
    let (source, (i, y, h)) = if let Some(path) = &e.stats {
        let text =
            fs::read_to_string(path).map_err(|err| Error::Config(format!("cannot read {}: {err}", path.display())))?;
        let s: PathStatistics =
            serde_json::from_str(&text).map_err(|err| Error::Config(format!("{}: {err}", path.display())))?;
        ("statistics file", (s.i_t, s.y_t, s.h_t))
    } else if e.i_t.is_some() || e.y_t.is_some() {
        let (y, h) = (e.y_t, e.h_t);
        let i = e.i_t.or_else(|| Some(y? + h?)).expect("I_T or Y_T/H_T given");
        let tr = cfg.model.trace_q();
        let m = &cfg.model;
        let mut set = estimate_hat(i, tr, Some(m.a()), Some(m.b()));
        if let (Some(y), Some(h)) = (y, h) {
            set = set.merge(estimate_tilde(y, h, tr));
        }
        return emit_estimates(&e.common, "given averages", set);
    } else {
        let opts = SimulationOptions::new(cfg.scheme, cfg.dt, cfg.horizon, cfg.seed);
        let s = simulate_path(&cfg.model, &opts)?.stats;
        ("simulated path", (s.i_t, s.y_t, s.h_t))
    };
    emit_estimates(&e.common, source, batch_estimates(i, y, h, &cfg))
}

fn emit_estimates(c: &Common, source: &'static str, estimates: EstimateSet) -> Result<(), Failure> {
    let json = to_json(&EstimateOutput { source, estimates })?;
    let dir = output_dir(&c.out)?;
    write_file(dir, "estimates.json", &json)?;
    print!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct VariancesOutput {
    trace_q: f64,
    trace_q_infinity: QInfinityTrace,
    asymptotic_variances: AsymptoticVariances,
}

pub fn variances(c: &Common) -> Result<(), Failure> {
    let cfg = c.run_config()?.resolve()?;
    let m = &cfg.model;
    let out = VariancesOutput {
        trace_q: m.trace_q(),
        trace_q_infinity: trace_q_infinity(m),
        asymptotic_variances: asymptotic_variances(m)?,
    };
    let json = to_json(&out)?;
    let dir = output_dir(&c.out)?;
    write_file(dir, "variances.json", &json)?;
    print!("{json}");
    Ok(())
}

/// Worker count from the environment, else the available parallelism.
pub fn worker_count() -> Result<usize, Error> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn qq_chart(report: &McReport, k: usize) -> Option<Chart> {
    let truth = *report.true_values.get(k);
    let scale = report.config.horizon.sqrt();
    let mut z: Vec<f64> =
        report.samples.iter().filter_map(|s| s.estimates.get(k).value()).map(|v| scale * (v - truth)).collect();
    if z.len() < 3 {
        return None;
    }
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let pts: Vec<(f64, f64)> =
        z.iter().enumerate().map(|(i, &v)| (normal_quantile((i as f64 + 1.0 - 0.375) / (n + 0.25)), v)).collect();
    let (q0, q1) = (pts[0].0, pts[pts.len() - 1].0);
    let mut series = vec![Series::scatter("sample", pts)];
    if let Some(var) = report.summary.get(k).var_theoretical {
        let sd = var.sqrt();
        series.push(Series::line("N(0, limiting variance)", vec![(q0, q0 * sd), (q1, q1 * sd)]).dashed());
    }
    Some(Chart {
        title: format!("Normal Q-Q plot of sqrt(T)({} - truth)", ESTIMATORS[k]),
        x_label: "standard normal quantile".into(),
        y_label: "sample quantile".into(),
        series,
        y_range: None,
    })
}

pub fn montecarlo(c: &Common) -> Result<(), Failure> {
    let cfg = c.run_config()?.resolve()?;
    let workers = worker_count()?;
    let report = run_monte_carlo(&cfg.model, cfg.horizon, cfg.dt, cfg.scheme, cfg.reps, cfg.seed, workers)?;
    let dir = output_dir(&c.out)?;
    write_file(dir, "mc_report.json", &format!("{}\n", report.to_json()?))?;
    let mut csv = Vec::new();
    write_samples_csv(&report.samples, &mut csv)?;
    write_file(dir, "samples.csv", &String::from_utf8(csv).expect("CSV is ASCII"))?;
    if c.plots {
        for (k, name) in ESTIMATORS.iter().enumerate() {
            if let Some(chart) = qq_chart(&report, k) {
                write_file(dir, &format!("qq_{name}.svg"), &chart.render())?;
            }
        }
    }
    println!("{:<8} {:>10} {:>12} {:>12} {:>10} {:>10} {:>8}", "", "mean", "var", "var theory", "typical", "max", "p");
    let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.p$}"));
    for (k, s) in report.summary.as_array().iter().enumerate() {
        println!(
            "{:<8} {:>10} {:>12} {:>12} {:>10} {:>10} {:>8}{}",
            ESTIMATORS[k],
            opt(s.mean, 4),
            opt(s.variance_scaled, 4),
            opt(s.var_theoretical, 4),
            opt(s.rel_err_typical, 4),
            opt(s.rel_err_max, 4),
            opt(s.normality.map(|n| n.p_value), 3),
            if s.excluded > 0 { format!("  ({} excluded)", s.excluded) } else { String::new() }
        );
    }
    Ok(())
}

pub fn verify(c: &Common) -> Result<(), Failure> {
    let cfg = c.run_config()?.resolve()?;
    let report = run_all(&cfg.model, &ItoDecayOptions::for_model(&cfg.model))?;
    for check in &report.checks {
        println!(
            "{} {} ({} cases): {:.3e} [{}] {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.cases,
            check.observed,
            check.tolerance,
            check.detail
        );
    }
    let dir = output_dir(&c.out)?;
    write_file(dir, "verify.json", &to_json(&report)?)?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}
