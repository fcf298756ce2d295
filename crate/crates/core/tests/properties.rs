mod common;

use common::*;
use phara::concavify::concave_envelope;
use phara::phara::builders;
use phara::rng::PathRng;
use phara::solver::{self, Horizon};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_identity_on_random_envelopes(seed in 0u64..10_000, r in 0.2f64..5.0, extra in 0.1f64..20.0) {
        let m = base_market();
        let env = random_envelope(&mut PathRng::new(seed, 0), r);
        let x0 = (-m.r * m.horizon).exp() * env.a0() + extra;
        let sol = solver::solve_multiplier(&env, &m, x0).unwrap();
        let w = solver::wealth_process(&env, &m, sol.y_star, 0.0, 1.0).unwrap();
        prop_assert!((w.total - x0).abs() <= 1e-10 * x0.abs().max(1.0));
    }

    #[test]
    fn wealth_decreases_in_the_state(seed in 0u64..10_000, t in 0.0f64..9.9) {
        let m = base_market();
        let env = random_envelope(&mut PathRng::new(seed, 1), 1.5);
        let h = Horizon::new(&m, t).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..60 {
            let x = solver::wealth_at(&env, &h, -6.0 + 0.2 * i as f64).total;
            prop_assert!(x <= last + 1e-14 * x.abs());
            prop_assert!(x >= h.disc * env.a0() - 1e-12);
            last = x;
        }
    }

    #[test]
    fn portfolio_is_nonnegative(seed in 0u64..10_000, t in 0.0f64..9.9, lz in -4.0f64..4.0) {
        let m = base_market();
        let env = random_envelope(&mut PathRng::new(seed, 2), 0.7);
        let h = Horizon::new(&m, t).unwrap();
        prop_assert!(solver::portfolio_scale_at(&env, &h, lz) >= 0.0);
    }

    #[test]
    fn terminal_wealth_is_an_argmax(s in 0.01f64..2.0) {
        let raw = builders::demo();
        let env = concave_envelope(&raw).unwrap().envelope;
        let x = solver::terminal_at(&env, s);
        let obj = |x: f64| raw.eval(x).unwrap() - s * x;
        let best = obj(x);
        for i in 0..400 {
            let z = 4.0 + 0.25 * i as f64;
            prop_assert!(obj(z) <= best + 1e-10 * (1.0 + best.abs()));
        }
    }
}

#[test]
fn wealth_is_continuous_in_time_to_go() {
    let m = base_market();
    let env = participating_envelope();
    let y = solver::solve_multiplier(&env, &m, 1.5).unwrap().y_star;
    let a = solver::wealth_process(&env, &m, y, 5.0, 1.1).unwrap().total;
    let b = solver::wealth_process(&env, &m, y, 5.0 + 1e-8, 1.1).unwrap().total;
    assert!((a - b).abs() < 1e-6);
}
