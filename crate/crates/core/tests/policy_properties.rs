use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gpbandit::policies::{
    beta_gp_ucb, beta_igp_ucb, select_ucb, v_gp_ts, DiscretizationSpec, TieBreak,
};

fn mu_sigma(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-5.0f64..5.0, n),
        prop::collection::vec(0.0f64..2.0, n),
    )
}

proptest! {
    #[test]
    fn ucb_argmax_ignores_mean_shift((mu, var) in mu_sigma(12), beta in 0.0f64..5.0, shift in -10.0f64..10.0) {
        let base = select_ucb(&mu, &var, beta, TieBreak::LowestIndex);
        let shifted: Vec<f64> = mu.iter().map(|m| m + shift).collect();
        let moved = select_ucb(&shifted, &var, beta, TieBreak::LowestIndex);
        // Adding a constant can only reorder exact float ties.
        let score = |m: &[f64], i: usize| m[i] + beta * var[i].sqrt();
        prop_assert!((score(&shifted, moved) - score(&shifted, base)).abs() <= 1e-9);
    }

    #[test]
    fn ucb_argmax_is_scale_invariant((mu, var) in mu_sigma(12), beta in 0.0f64..5.0, c in 0.1f64..10.0) {
        let base = select_ucb(&mu, &var, beta, TieBreak::LowestIndex);
        let mu_c: Vec<f64> = mu.iter().map(|m| m * c).collect();
        let var_c: Vec<f64> = var.iter().map(|v| v * c * c).collect();
        let scaled = select_ucb(&mu_c, &var_c, beta, TieBreak::LowestIndex);
        let score = |i: usize| mu[i] + beta * var[i].sqrt();
        prop_assert!((score(scaled) - score(base)).abs() <= 1e-9 * (1.0 + score(base).abs()));
    }

    #[test]
    fn widths_are_ordered(gamma in 1.0f64..100.0, t in 2usize..5000, delta in 0.001f64..0.5) {
        prop_assert!(beta_igp_ucb(1.0, 1.0, delta, gamma) < beta_gp_ucb(1.0, delta, gamma, t));
        prop_assert!(v_gp_ts(1.0, 1.0, delta, gamma) >= beta_igp_ucb(1.0, 1.0, delta, gamma));
    }

    #[test]
    fn noiseless_widths_collapse_to_b(b in 0.0f64..10.0, gamma in 0.0f64..50.0, delta in 0.01f64..0.99) {
        prop_assert_eq!(beta_igp_ucb(b, 0.0, delta, gamma), b);
        prop_assert_eq!(v_gp_ts(b, 0.0, delta, gamma), b);
    }
}

#[test]
fn discretization_covers_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (b, l, d, t) in [(1.0, 1.0, 1, 1), (1.0, 1.0, 1, 5), (2.0, 5.0, 1, 3), (1.0, 2.0, 2, 2), (0.5, 1.0, 3, 1)] {
        let spec = DiscretizationSpec { r: 1.0, b, l, d, cap: 1_000_000 };
        let grid = spec.discretize(t).unwrap();
        assert!(!grid.capped);
        let radius = 1.0 / (b * l * (t * t) as f64);
        assert!(grid.covering_radius <= radius + 1e-12);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let nearest = grid
                .points
                .points()
                .iter()
                .map(|p| p.coords().iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= radius + 1e-12, "b={b} l={l} d={d} t={t}: {nearest} > {radius}");
        }
    }
}
