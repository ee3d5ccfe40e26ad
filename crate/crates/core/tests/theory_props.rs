use bias_lab::gram::GramModel;
use bias_lab::oracle::hard_moments_exact;
use bias_lab::theory::{
    beta_zero_limit_gram, gumbel_constants, hard_pair_prediction, max_two_gaussians_mean, soft_pair_prediction,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hard_pair_diagonal_is_mean_of_max(rho in -1.0f64..0.999) {
        let p = hard_pair_prediction(rho, 1.0).unwrap();
        prop_assert_eq!(p.predicted_corr[(0, 0)], max_two_gaussians_mean(rho).unwrap());
    }

    #[test]
    fn hard_pair_rows_are_contrasts(rho in -1.0f64..0.999, norm in 0.01f64..50.0) {
        let p = hard_pair_prediction(rho, norm).unwrap();
        for r in 0..2 {
            prop_assert!((p.alpha[(r, 0)] + p.alpha[(r, 1)]).abs() < 1e-12 * p.alpha[(r, 0)].abs().max(1.0));
        }
        prop_assert_eq!(p.alpha[(0, 0)], -p.alpha[(1, 0)]);
        prop_assert_eq!(p.alpha[(0, 1)], -p.alpha[(1, 1)]);
    }

    #[test]
    fn pair_predictions_decrease_in_rho(a in -1.0f64..0.99, b in -1.0f64..0.99, norm in 0.1f64..10.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let h = |r| hard_pair_prediction(r, norm).unwrap().predicted_corr[(0, 0)];
        let s = |r| soft_pair_prediction(r, norm).unwrap().predicted_corr[(0, 0)];
        prop_assert!(h(lo) > h(hi));
        prop_assert!(s(lo) > s(hi));
    }

    #[test]
    fn soft_pair_approaches_hard_for_large_norm(rho in -1.0f64..0.9) {
        for (norm, gap) in [(10.0, 0.08), (30.0, 0.03), (100.0, 0.01)] {
            let s = soft_pair_prediction(rho, norm).unwrap().alpha[(0, 0)];
            let h = hard_pair_prediction(rho, norm).unwrap().alpha[(0, 0)];
            prop_assert!((s / h - 1.0).abs() < gap, "rho {} norm {}", rho, norm);
        }
    }

    #[test]
    fn soft_pair_small_norm_limit(rho in -1.0f64..0.99) {
        let p = soft_pair_prediction(rho, 1e-6).unwrap();
        prop_assert!((p.alpha[(0, 0)] - 0.5).abs() < 1e-9);
        prop_assert!((p.alpha[(0, 1)] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn exact_oracle_matches_hard_pair(rho in -0.999f64..0.999, scale in 0.1f64..5.0) {
        let g = GramModel::equicorrelated(2, rho, scale).unwrap();
        let p = hard_pair_prediction(rho, scale).unwrap();
        for l in 0..2 {
            let r = hard_moments_exact(&g, l).unwrap().ratio();
            for (k, rk) in r.iter().enumerate() {
                prop_assert!((rk - p.predicted_corr[(l, k)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gumbel_ratio_increases_to_one() {
    let mut prev = 0.0;
    for e in 4..40 {
        let c = gumbel_constants(1u64 << e).unwrap();
        let r = c.b / c.a;
        assert!(r > prev && r < 1.0, "n = 2^{e}");
        prev = r;
    }
    assert!(prev > 0.9);
}

#[test]
fn beta_zero_rows_sum_to_zero() {
    for l in 2..9 {
        let p = beta_zero_limit_gram(&GramModel::identity(l, 1.0).unwrap());
        for r in 0..l {
            assert!(p.alpha.row(r).sum().abs() < 1e-12);
        }
    }
}
