use waveinfer_core::harness::{run_monte_carlo, McReport};
use waveinfer_core::model::{reference_wave_model, ModePair, Model};
use waveinfer_core::simulate::{replication_seed, Scheme};
use waveinfer_core::Error;

#[test]
fn report_does_not_depend_on_worker_count() {
    let m = reference_wave_model();
    let reports: Vec<McReport> =
        [1, 2, 8].iter().map(|&w| run_monte_carlo(&m, 10.0, 0.01, Scheme::Euler, 16, 5, w).unwrap()).collect();
    let json: Vec<String> = reports.iter().map(|r| r.to_json().unwrap()).collect();
    assert_eq!(json[0], json[1]);
    assert_eq!(json[0], json[2]);
    assert_eq!(reports[0].samples.len(), 16);
    for (i, s) in reports[0].samples.iter().enumerate() {
        assert_eq!(s.seed, replication_seed(5, i as u64));
    }
}

#[test]
fn summary_invariants() {
    let m = reference_wave_model();
    let r = run_monte_carlo(&m, 20.0, 0.01, Scheme::Exact, 30, 8, 2).unwrap();
    for s in r.summary.as_array() {
        assert_eq!(s.used + s.excluded, 30);
        assert!(s.variance_scaled.unwrap() >= 0.0);
        assert!(s.rel_err_typical.unwrap() <= s.rel_err_max.unwrap());
        assert!(s.var_theoretical.is_some());
    }
    let back = McReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn blow_up_names_the_replication_seed() {
    // Explicit Euler is unstable for dt·√(bκ) far above one.
    let m = Model::diagonal(1.0, 1.0, vec![1e8], vec![1.0], vec![ModePair::new(1.0, 0.0)]).unwrap();
    match run_monte_carlo(&m, 10.0, 0.01, Scheme::Euler, 3, 21, 2) {
        Err(Error::Replication { replication, seed, source }) => {
            assert_eq!(replication, 0);
            assert_eq!(seed, replication_seed(21, 0));
            assert!(matches!(*source, Error::Blowup { .. }));
        }
        other => panic!("expected replication error, got {other:?}"),
    }
}

#[test]
fn ergodic_averages_center_on_their_limits() {
    // Euler at dt = 0.001 biases the averages upward by about one percent.
    let m = reference_wave_model();
    let r = run_monte_carlo(&m, 100.0, 0.001, Scheme::Euler, 100, 2718, 1).unwrap();
    let n = r.samples.len() as f64;
    let mean = |f: fn(&waveinfer_core::harness::ReplicationSample) -> f64| r.samples.iter().map(f).sum::<f64>() / n;
    for (got, want) in [(mean(|s| s.i_t), 2324.652), (mean(|s| s.y_t), 1937.210), (mean(|s| s.h_t), 387.442)] {
        assert!((got / want - 1.0).abs() < 0.04, "{got} vs {want}");
    }
}
