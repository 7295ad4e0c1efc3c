use lookahead_core::nqm::{
    expected_loss, finite_horizon_sweep, lookahead_moment_step, lookahead_variance_fixed_point, sgd_moment_step,
    sgd_variance_fixed_point, MomentState, NoisyQuadraticModel, Spectrum, SweepSpec,
};
use proptest::prelude::*;

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `(a, σ², γ)` with `γa ∈ (0, 2)`.
fn stable_scalar() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.01f64..10.0, 0.01f64..10.0, 0.001f64..0.999).prop_map(|(a, s, frac)| (a, s, 2.0 * frac / a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixed_points_are_fixed((a, s, gamma) in stable_scalar(), alpha in 0.01f64..1.0, k in 1usize..12) {
        let model = NoisyQuadraticModel::scalar(a, s).unwrap();
        let v = sgd_variance_fixed_point(gamma, &model).unwrap();
        let next = sgd_moment_step(&MomentState::new(vec![0.0], v.clone()).unwrap(), gamma, &model).unwrap();
        prop_assert!(rel_diff(next.var[0], v[0]) <= 1e-12, "sgd {} vs {}", next.var[0], v[0]);

        let v = lookahead_variance_fixed_point(gamma, alpha, k, &model).unwrap();
        let m = MomentState::new(vec![0.0], v.clone()).unwrap();
        let next = lookahead_moment_step(&m, gamma, alpha, k, &model).unwrap();
        prop_assert!(rel_diff(next.var[0], v[0]) <= 1e-12, "lookahead {} vs {}", next.var[0], v[0]);
    }

    #[test]
    fn lookahead_reduces_steady_state_variance(
        (a, s, gamma) in stable_scalar(),
        alpha in 0.001f64..0.999,
        k in 1usize..20,
    ) {
        let model = NoisyQuadraticModel::scalar(a, s).unwrap();
        let la = lookahead_variance_fixed_point(gamma, alpha, k, &model).unwrap()[0];
        let sgd = sgd_variance_fixed_point(gamma, &model).unwrap()[0];
        prop_assert!(la < sgd, "{la} >= {sgd}");
    }

    #[test]
    fn expectation_contracts_faster((a, _s, gamma) in stable_scalar(), alpha in 0.001f64..0.999, k in 1usize..12) {
        let r = (1.0 - gamma * a).powi(k as i32);
        let la = 1.0 - alpha + alpha * r;
        if r >= 0.0 {
            prop_assert!(la >= r);
        } else {
            // with an oscillating inner factor the ordering needs α ≤ (1+r)/(1−r)
            prop_assert_eq!(la.abs() >= r.abs(), alpha * (1.0 - r) <= 1.0 + r);
        }
    }

    #[test]
    fn loss_never_below_noise_floor(
        (a, s, gamma) in stable_scalar(),
        alpha in 0.01f64..1.0,
        k in 1usize..8,
        x0 in -5.0f64..5.0,
        v0 in 0.0f64..5.0,
        steps in 1usize..40,
    ) {
        let model = NoisyQuadraticModel::scalar(a, s).unwrap();
        let floor = model.noise_floor();
        let mut sgd = MomentState::new(vec![x0], vec![v0]).unwrap();
        let mut la = sgd.clone();
        for _ in 0..steps {
            sgd = sgd_moment_step(&sgd, gamma, &model).unwrap();
            la = lookahead_moment_step(&la, gamma, alpha, k, &model).unwrap();
            prop_assert!(expected_loss(&sgd, &model).unwrap() >= floor);
            prop_assert!(expected_loss(&la, &model).unwrap() >= floor);
        }
    }
}

#[test]
fn variance_reduction_near_the_boundaries() {
    let model = NoisyQuadraticModel::with_inverse_noise(Spectrum::Inverse.eigenvalues(20)).unwrap();
    let gamma = 1.999 / model.max_curvature();
    for k in [1, 2, 5, 20] {
        for alpha in [1e-3, 0.5, 0.999] {
            let la = lookahead_variance_fixed_point(gamma, alpha, k, &model).unwrap();
            let sgd = sgd_variance_fixed_point(gamma, &model).unwrap();
            for (l, s) in la.iter().zip(&sgd) {
                assert!(l < s, "k={k} alpha={alpha}: {l} >= {s}");
            }
        }
    }
}

#[test]
fn contraction_ordering_on_a_grid() {
    let (mut outside, mut total) = (0, 0);
    for i in 1..400 {
        let h = 2.0 * i as f64 / 400.0;
        for k in 1..=10 {
            let r = (1.0 - h).powi(k);
            for j in 1..100 {
                let alpha = j as f64 / 100.0;
                let la = 1.0 - alpha + alpha * r;
                total += 1;
                if r >= 0.0 {
                    assert!(la >= r, "h={h} k={k} alpha={alpha}");
                } else if la < 0.0 || la < r.abs() {
                    outside += 1;
                }
            }
        }
    }
    eprintln!("contraction ordering: {outside} of {total} grid points with (1-h)^k < 0 are not ordered");
    assert!(outside > 0);
}

#[test]
fn finite_horizon_best_loss_is_nonincreasing() {
    let rows = finite_horizon_sweep(&SweepSpec::finite_horizon_default()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].sgd_loss <= w[0].sgd_loss * (1.0 + 1e-12));
        assert!(w[1].lookahead_loss <= w[0].lookahead_loss * (1.0 + 1e-12));
    }
    assert!(rows.iter().all(|r| r.lookahead_loss <= r.sgd_loss));
}
