use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waveinfer_core::covariance::{
    asymptotic_variances, clt_trace, default_quadrature_params, diagonal_asymptotic_variances, q_infinity_apply,
    q_infinity_quadrature_oracle, trace_q_infinity, CltOperator,
};
use waveinfer_core::model::{builtin_preset, reference_wave_model, LambdaRule, ModePair, Model, PresetKind};
use waveinfer_core::semigroup::v_inner;
use waveinfer_core::verify::{q_infinity_suite, random_dense_models};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<ModePair> {
    (0..n).map(|_| ModePair::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn v_rel_err(x: &[ModePair], y: &[ModePair], m: &Model) -> f64 {
    let d: Vec<ModePair> = x.iter().zip(y).map(|(p, q)| ModePair::new(p.u - q.u, p.v - q.v)).collect();
    (v_inner(&d, &d, m).unwrap() / v_inner(y, y, m).unwrap()).sqrt()
}

#[test]
fn self_adjoint_and_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in random_dense_models(30, 5, 2) {
        let n = m.n_modes();
        for _ in 0..5 {
            let x = random_vec(&mut rng, n);
            let y = random_vec(&mut rng, n);
            let qx = q_infinity_apply(&m, &x).unwrap();
            let qy = q_infinity_apply(&m, &y).unwrap();
            let lhs = v_inner(&qx, &y, &m).unwrap();
            let rhs = v_inner(&x, &qy, &m).unwrap();
            let s = v_inner(&qx, &qx, &m).unwrap().sqrt() * v_inner(&y, &y, &m).unwrap().sqrt();
            assert!((lhs - rhs).abs() <= 1e-10 * s, "{lhs} vs {rhs}");
            assert!(v_inner(&qx, &x, &m).unwrap() >= -1e-12 * s);
        }
    }
}

#[test]
fn closed_form_matches_quadrature_on_dense_models() {
    let out = q_infinity_suite(&random_dense_models(20, 4, 99), 5).unwrap();
    assert!(out.passed, "{out:?}");
}

#[test]
fn two_mode_dense_example() {
    let m =
        Model::new(1.0, 1.0, vec![1.0, 4.0], vec![vec![1.0, 0.4], vec![0.4, 2.0]], vec![ModePair::ZERO; 2]).unwrap();
    let (t, steps) = default_quadrature_params(&m);
    for x in [vec![ModePair::new(1.0, 0.0), ModePair::ZERO], vec![ModePair::new(0.3, -0.7), ModePair::new(0.2, 0.9)]] {
        let c = q_infinity_apply(&m, &x).unwrap();
        let q = q_infinity_quadrature_oracle(&m, &x, t, steps).unwrap();
        assert!(q.warning.is_none());
        assert!(v_rel_err(&c, &q.value, &m) <= 1e-6);
    }
}

#[test]
fn single_mode_diagonal_agrees_to_1e8() {
    for (a, b, k) in [(1.0, 0.2, 9.87), (2.0, 1.0, 1.0), (1.0, 1.0, 1.0)] {
        let m = Model::diagonal(a, b, vec![k], vec![3.0], vec![ModePair::ZERO]).unwrap();
        let (t, steps) = default_quadrature_params(&m);
        let x = vec![ModePair::new(0.4, -1.1)];
        let c = q_infinity_apply(&m, &x).unwrap();
        let q = q_infinity_quadrature_oracle(&m, &x, t, steps).unwrap();
        assert!(v_rel_err(&c, &q.value, &m) <= 1e-8);
    }
}

#[test]
fn quadrature_is_linear_and_vanishes_without_noise() {
    let m = random_dense_models(1, 3, 4).remove(0);
    let n = m.n_modes();
    let x = random_vec(&mut ChaCha8Rng::seed_from_u64(5), n);
    let (t, steps) = default_quadrature_params(&m);
    let once = q_infinity_quadrature_oracle(&m, &x, t, steps).unwrap().value;
    let twice = q_infinity_quadrature_oracle(&m.with_noise_scaled(2.0).unwrap(), &x, t, steps).unwrap().value;
    for (p, q) in once.iter().zip(&twice) {
        assert!((2.0 * p.u - q.u).abs() <= 1e-12 * q.u.abs().max(1e-12));
        assert!((2.0 * p.v - q.v).abs() <= 1e-12 * q.v.abs().max(1e-12));
    }
    let zero = m.with_noise_scaled(0.0).unwrap();
    assert!(q_infinity_quadrature_oracle(&zero, &x, t, steps).unwrap().value.iter().all(|p| *p == ModePair::ZERO));
    assert!(q_infinity_apply(&zero, &x).unwrap().iter().all(|p| *p == ModePair::ZERO));
}

#[test]
fn trace_equals_basis_sum() {
    let mut models = random_dense_models(10, 5, 6);
    models.push(reference_wave_model());
    for m in models {
        let n = m.n_modes();
        let mut brute = 0.0;
        for i in 0..n {
            // orthonormal V-basis: u-direction scaled by 1/√κ, v-direction unit
            for j in 0..2 {
                let mut e = vec![ModePair::ZERO; n];
                if j == 0 {
                    e[i].u = 1.0 / m.kappa()[i].sqrt();
                } else {
                    e[i].v = 1.0;
                }
                brute += v_inner(&q_infinity_apply(&m, &e).unwrap(), &e, &m).unwrap();
            }
        }
        let t = trace_q_infinity(&m);
        assert!((brute - t.total).abs() <= 1e-9 * t.total, "{brute} vs {}", t.total);
        assert!((t.position + t.velocity - t.total).abs() <= 1e-12 * t.total);
    }
}

#[test]
fn clt_decomposition_and_variance_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut models = random_dense_models(50, 5, 9);
    for _ in 0..50 {
        let n = rng.random_range(1..=8);
        let kind = if rng.random_bool(0.5) { PresetKind::Wave } else { PresetKind::Plate };
        let rule = LambdaRule::Power { scale: rng.random_range(0.1..100.0), exponent: rng.random_range(0.0..3.0) };
        models.push(builtin_preset(kind, n, rng.random_range(0.05..5.0), rng.random_range(0.05..5.0), &rule).unwrap());
    }
    assert_eq!(models.len(), 100);
    for m in &models {
        let b = m.b();
        let full = clt_trace(m, CltOperator::Rtilde);
        let split = clt_trace(m, CltOperator::Rtilde1) + clt_trace(m, CltOperator::Rtilde2) / ((b + 1.0) * (b + 1.0));
        assert!((full - split).abs() <= 1e-12 * full);
        let v = asymptotic_variances(m).unwrap();
        assert!(v.a_tilde < v.a_hat, "{v:?}");
        assert!(v.b_tilde < v.b_hat, "{v:?}");
    }
}

#[test]
fn diagonal_shortcuts_equal_double_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let kind = if rng.random_bool(0.5) { PresetKind::Wave } else { PresetKind::Plate };
        let rule = LambdaRule::Power { scale: rng.random_range(0.1..1000.0), exponent: rng.random_range(0.0..3.0) };
        let m = builtin_preset(kind, n, rng.random_range(0.05..5.0), rng.random_range(0.05..5.0), &rule).unwrap();
        let g = asymptotic_variances(&m).unwrap();
        let d = diagonal_asymptotic_variances(&m).unwrap();
        for (x, y) in [(g.a_hat, d.a_hat), (g.b_hat, d.b_hat), (g.a_tilde, d.a_tilde), (g.b_tilde, d.b_tilde)] {
            assert!((x - y).abs() <= 1e-12 * y, "{x} vs {y}");
        }
        let tr2: f64 = m.q_diagonal().iter().map(|l| l * l).sum();
        let r1 = clt_trace(&m, CltOperator::Rtilde1);
        assert!((r1 - tr2 / (4.0 * m.a())).abs() <= 1e-12 * r1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_q_is_rotation_invariant(n in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose();
        let o = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let rotated = &o * &q * o.transpose();
        let rows = |m: &DMatrix<f64>| (0..n).map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect()).collect();
        let kappa: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let m1 = Model::new(1.0, 1.0, kappa.clone(), rows(&q), vec![ModePair::ZERO; n]).unwrap();
        let m2 = Model::new(1.0, 1.0, kappa, rows(&rotated), vec![ModePair::ZERO; n]).unwrap();
        prop_assert!((m1.trace_q() - m2.trace_q()).abs() <= 1e-10 * m1.trace_q().max(1.0));
    }
}
