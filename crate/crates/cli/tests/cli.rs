use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use waveinfer_core::{asymptotic_variances, builtin_preset, trace_q_infinity, LambdaRule, PresetKind};

fn waveinfer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_waveinfer"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("WAVEINFER_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["simulate", "--T", "5", "--seed", "11", "--modes", "4"];
    assert_eq!(code(&waveinfer(d1.path(), &args)), 0);
    assert_eq!(code(&waveinfer(d2.path(), &args)), 0);
    for f in ["trajectory.csv", "path_stats.json"] {
        assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn trajectory_has_one_row_per_recording_interval() {
    let d = TempDir::new().unwrap();
    let out = waveinfer(d.path(), &["simulate", "--T", "100", "--modes", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(d.path(), "trajectory.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time,I_t,Y_t,H_t,a_hat_t,b_hat_t,a_tilde_t,b_tilde_t"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows[0].starts_with("0,0,0,0,NA_stat"));
    assert!(rows[1].starts_with("0.1,"));
    assert!(rows[1000].starts_with("100,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
}

#[test]
fn variances_match_library_exactly() {
    let d = TempDir::new().unwrap();
    let out = waveinfer(d.path(), &["variances", "--preset", "plate", "--modes", "2", "--a", "0.7", "--b", "0.3"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&read(d.path(), "variances.json")).unwrap();

    let model = builtin_preset(PresetKind::Plate, 2, 0.7, 0.3, &LambdaRule::default()).unwrap();
    let av = asymptotic_variances(&model).unwrap();
    let tq = trace_q_infinity(&model);
    let av_json = &v["asymptotic_variances"];
    for (key, want) in [("a_hat", av.a_hat), ("b_hat", av.b_hat), ("a_tilde", av.a_tilde), ("b_tilde", av.b_tilde)] {
        assert_eq!(av_json[key].as_f64().unwrap(), want, "{key}");
    }
    assert_eq!(v["trace_q_infinity"]["total"].as_f64().unwrap(), tq.total);
    assert_eq!(v["trace_q"].as_f64().unwrap(), model.trace_q());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n").trim(),
        read(d.path(), "variances.json").trim()
    );
}

#[test]
fn config_errors_exit_with_one() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    let negative = p.join("neg.json");
    fs::write(&negative, r#"{"kappa": [1.0, -4.0], "lambda": [1.0, 1.0]}"#).unwrap();
    let unknown = p.join("unknown.toml");
    fs::write(&unknown, "a = 1.0\nmodez = 3\n").unwrap();
    let non_positive = p.join("np.toml");
    fs::write(&non_positive, "a = 0.0\n").unwrap();

    for cfg in [&negative, &unknown, &non_positive] {
        let out = waveinfer(p, &["simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&out), 1, "{}: {}", cfg.display(), String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(code(&waveinfer(p, &["simulate", "--scheme", "milstein"])), 1);
    assert_eq!(code(&waveinfer(p, &["montecarlo", "--reps", "1", "--T", "1"])), 1);
    assert_eq!(code(&waveinfer(p, &["frobnicate"])), 1);
}

#[test]
fn cli_flags_override_config_file() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, "N = 2\nT = 1.0\ndt = 0.01\nb = 0.5\n").unwrap();
    let out = waveinfer(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--T", "2"]);
    assert_eq!(code(&out), 0);
    // 2 / (0.01 * 100) recording intervals plus the origin.
    assert_eq!(read(d.path(), "trajectory.csv").lines().count(), 1 + 3);
}

#[test]
fn near_critical_model_verifies() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("crit.json");
    fs::write(&cfg, r#"{"a": 1.0, "b": 1.0, "kappa": [1.00000001], "lambda": [1.0], "x0": [{"u": 1.0, "v": 1.0}]}"#)
        .unwrap();
    let out = waveinfer(d.path(), &["verify", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 5);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn zero_noise_writes_markers_instead_of_numbers() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("quiet.toml");
    fs::write(&cfg, "N = 2\nq = [[0.0, 0.0], [0.0, 0.0]]\nT = 1.0\n").unwrap();
    let out = waveinfer(d.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(d.path(), "trajectory.csv");
    let last = csv.lines().last().unwrap();
    let fields: Vec<&str> = last.split(',').collect();
    assert_eq!(&fields[4..7], ["NA_noise"; 3]);
    // H/Y does not involve the noise trace.
    assert!(fields[7].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn estimate_from_averages_and_stats_file_agree() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&waveinfer(d.path(), &["simulate", "--T", "3", "--modes", "3"])), 0);
    let stats: serde_json::Value = serde_json::from_str(&read(d.path(), "path_stats.json")).unwrap();
    let stats_path = d.path().join("path_stats.json");
    assert_eq!(code(&waveinfer(d.path(), &["estimate", "--modes", "3", "--stats", stats_path.to_str().unwrap()])), 0);
    let from_file: serde_json::Value = serde_json::from_str(&read(d.path(), "estimates.json")).unwrap();

    let (i, y, h) = (stats["I_T"].to_string(), stats["Y_T"].to_string(), stats["H_T"].to_string());
    let args = ["estimate", "--modes", "3", "--I-T", &i, "--Y-T", &y, "--H-T", &h];
    assert_eq!(code(&waveinfer(d.path(), &args)), 0);
    let direct: serde_json::Value = serde_json::from_str(&read(d.path(), "estimates.json")).unwrap();
    assert_eq!(from_file["estimates"], direct["estimates"]);
    assert!(direct["estimates"]["b_tilde"].as_f64().unwrap() > 0.0);
}

#[test]
fn plots_are_well_formed_svg() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&waveinfer(d.path(), &["simulate", "--T", "5", "--modes", "3", "--plots"])), 0);
    assert_eq!(code(&waveinfer(d.path(), &["montecarlo", "--T", "5", "--modes", "3", "--reps", "20", "--plots"])), 0);
    let names =
        ["evolution_a.svg", "evolution_b.svg", "qq_a_hat.svg", "qq_b_hat.svg", "qq_a_tilde.svg", "qq_b_tilde.svg"];
    for name in names {
        let text = read(d.path(), name);
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline") || n.has_tag_name("circle")), "{name}");
    }
}

#[test]
fn montecarlo_output_is_independent_of_thread_count() {
    let run = |threads: &str| {
        let d = TempDir::new().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_waveinfer"))
            .args(["montecarlo", "--T", "4", "--modes", "3", "--reps", "24", "--seed", "5", "--out"])
            .arg(d.path())
            .env("WAVEINFER_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        (read(d.path(), "mc_report.json"), read(d.path(), "samples.csv"))
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    assert_eq!(one.1.lines().next(), Some("seed,a_hat,b_hat,a_tilde,b_tilde,I_T,Y_T,H_T"));
    assert_eq!(one.1.lines().count(), 25);
}
