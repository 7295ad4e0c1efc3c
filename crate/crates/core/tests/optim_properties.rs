use lookahead_core::optim::{exact_alpha_star, InnerOptimizer, LookaheadState, MomentumMode, QuadraticProblem};
use lookahead_core::ParamVector;
use proptest::prelude::*;

/// Diagonal quadratic `½ Σ a_i x_i² − b·x` with its starting point.
#[derive(Debug, Clone)]
struct Problem {
    a: Vec<f64>,
    b: Vec<f64>,
    x0: Vec<f64>,
}

impl Problem {
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.a).zip(&self.b).map(|((x, a), b)| a * x - b).collect()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.a).zip(&self.b).map(|((x, a), b)| 0.5 * a * x * x - b * x).sum()
    }
}

fn problem() -> impl Strategy<Value = Problem> {
    (1usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..4.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
            .prop_map(|(a, b, x0)| Problem { a, b, x0 })
    })
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Sgd,
    Momentum(f64),
    Adam,
}

fn kind() -> impl Strategy<Value = Kind> {
    prop_oneof![Just(Kind::Sgd), (0.0f64..0.95).prop_map(Kind::Momentum), Just(Kind::Adam)]
}

fn make(kind: Kind, lr: f64, n: usize) -> InnerOptimizer {
    match kind {
        Kind::Sgd => InnerOptimizer::sgd(lr),
        Kind::Momentum(beta) => InnerOptimizer::momentum(lr, beta, n),
        Kind::Adam => InnerOptimizer::adam(lr, n),
    }
    .unwrap()
}

fn buffers(opt: &InnerOptimizer) -> Vec<f64> {
    match opt {
        InnerOptimizer::Sgd(_) => Vec::new(),
        InnerOptimizer::ClassicalMomentum(m) => m.velocity.clone(),
        InnerOptimizer::Adam(a) => a.first_moment.iter().chain(&a.second_moment).copied().collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn alpha_one_follows_the_inner_optimizer(
        p in problem(),
        kind in kind(),
        k in 1usize..8,
        cycles in 1usize..10,
        lr in 0.01f64..0.2,
    ) {
        let n = p.a.len();
        let mut la = LookaheadState::new(
            ParamVector::new(p.x0.clone()).unwrap(), make(kind, lr, n), k, 1.0, MomentumMode::Maintain,
        ).unwrap();
        let mut plain = make(kind, lr, n);
        let mut x = ParamVector::new(p.x0.clone()).unwrap();
        for _ in 0..cycles {
            for _ in 0..k {
                let g = p.grad(&la.fast_weights);
                let updated = la.step(&g).unwrap();
                x = plain.step(&x, &p.grad(&x)).unwrap();
                if k == 1 {
                    prop_assert!(updated);
                }
                prop_assert_eq!(la.fast_weights.as_slice(), x.as_slice());
            }
            prop_assert_eq!(la.slow_weights.as_slice(), x.as_slice());
            prop_assert_eq!(&la.fast_weights, &la.slow_weights);
        }
    }

    #[test]
    fn incremental_api_matches_reference_loop(
        p in problem(),
        beta in 0.0f64..0.95,
        k in 1usize..8,
        alpha in 0.05f64..1.0,
        cycles in 1usize..10,
        lr in 0.01f64..0.2,
    ) {
        let n = p.a.len();
        let mut la = LookaheadState::new(
            ParamVector::new(p.x0.clone()).unwrap(),
            InnerOptimizer::momentum(lr, beta, n).unwrap(),
            k,
            alpha,
            MomentumMode::Maintain,
        ).unwrap();

        let mut slow = p.x0.clone();
        let mut velocity = vec![0.0; n];
        for _ in 0..cycles {
            let mut fast = slow.clone();
            for _ in 0..k {
                let g = p.grad(&fast);
                for i in 0..n {
                    velocity[i] = beta * velocity[i] - lr * g[i];
                    fast[i] += velocity[i];
                }
            }
            for i in 0..n {
                slow[i] = (1.0 - alpha) * slow[i] + alpha * fast[i];
            }

            for _ in 0..k {
                let g = p.grad(&la.fast_weights);
                la.inner_step(&g).unwrap();
            }
            la.outer_step().unwrap();
            prop_assert_eq!(la.slow_weights.as_slice(), slow.as_slice());
            prop_assert_eq!(&la.fast_weights, &la.slow_weights);
        }
    }

    #[test]
    fn reset_mode_zeroes_every_buffer(p in problem(), kind in kind(), k in 1usize..6, alpha in 0.1f64..1.0) {
        let n = p.a.len();
        let mut la = LookaheadState::new(
            ParamVector::new(p.x0.clone()).unwrap(), make(kind, 0.05, n), k, alpha, MomentumMode::Reset,
        ).unwrap();
        for _ in 0..k {
            let g = p.grad(&la.fast_weights);
            la.inner_step(&g).unwrap();
        }
        la.outer_step().unwrap();
        prop_assert!(buffers(&la.inner).iter().all(|v| *v == 0.0));
        if let InnerOptimizer::Adam(a) = &la.inner {
            prop_assert_eq!(a.step_count, 0);
        }
    }

    #[test]
    fn alpha_star_minimizes_along_the_segment(p in problem(), k in 1usize..6, lr in 0.02f64..0.4) {
        let q = QuadraticProblem::new(p.a.clone(), ParamVector::new(p.b.clone()).unwrap()).unwrap();
        let mut theta = p.x0.clone();
        for _ in 0..k {
            let g = p.grad(&theta);
            theta.iter_mut().zip(g).for_each(|(t, g)| *t -= lr * g);
        }
        let a_star = match exact_alpha_star(&q, &p.x0, &theta) {
            Ok(a) => a,
            Err(_) => return Ok(()),
        };
        let at = |alpha: f64| {
            let x: Vec<f64> = p.x0.iter().zip(&theta).map(|(s, f)| s + alpha * (f - s)).collect();
            q.loss(&x)
        };
        prop_assert!((q.loss(&p.x0) - p.loss(&p.x0)).abs() < 1e-12);
        let best = at(a_star);
        for i in 0..=1000 {
            let alpha = a_star - 2.0 + 4.0 * i as f64 / 1000.0;
            prop_assert!(best <= at(alpha) + 1e-12, "alpha {alpha}: {} < {best}", at(alpha));
        }
    }

    #[test]
    fn alpha_star_is_scale_invariant(p in problem(), c in 0.01f64..100.0, lr in 0.02f64..0.4) {
        let theta_k: Vec<f64> = p.x0.iter().zip(p.grad(&p.x0)).map(|(x, g)| x - lr * g).collect();
        let q = QuadraticProblem::new(p.a.clone(), ParamVector::new(p.b.clone()).unwrap()).unwrap();
        let scaled = QuadraticProblem::new(
            p.a.iter().map(|a| c * a).collect(),
            ParamVector::new(p.b.iter().map(|b| c * b).collect()).unwrap(),
        ).unwrap();
        if let (Ok(x), Ok(y)) = (exact_alpha_star(&q, &p.x0, &theta_k), exact_alpha_star(&scaled, &p.x0, &theta_k)) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}
