use bias_lab::engine::{assign_gram, ExperimentConfig};
use bias_lab::gram::GramModel;
use bias_lab::oracle::{
    hard_moments, hard_moments_all, hard_moments_exact, hard_moments_quadrature, ibp_check, soft_moments,
    soft_moments_quadrature, softmax_weights,
};
use bias_lab::templates::make_random;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_gram(l: usize, seed: u64, cap: f64, scale: f64) -> GramModel {
    let set = make_random(l, l + 4, cap, 1.0, seed).unwrap();
    GramModel::new(set.gram().unwrap().rho().clone(), scale).unwrap()
}

/// `(1 − t) rho + t 11ᵀ`: every off-diagonal entry grows.
fn pushed_up(g: &GramModel, t: f64) -> GramModel {
    let l = g.len();
    let rho = g.rho() * (1.0 - t) + DMatrix::from_element(l, l, t);
    GramModel::new(rho, g.scale()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn hard_moments_are_consistent(l in 3usize..5, seed in 0u64..1000) {
        let g = random_gram(l, seed, 0.7, 1.0);
        let all = hard_moments_all(&g, 5e-3).unwrap();
        let bound: f64 = all.iter().map(|r| r.error_bound).sum();
        let p: f64 = all.iter().map(|r| r.mass).sum();
        prop_assert!((p - 1.0).abs() <= bound.max(1e-12));
        for k in 0..l {
            let s: f64 = all.iter().map(|r| r.value[k]).sum();
            prop_assert!(s.abs() <= bound.max(1e-12));
        }
    }

    #[test]
    fn soft_masses_sum_to_one(l in 2usize..5, seed in 0u64..1000, beta in 0.1f64..5.0) {
        let g = random_gram(l, seed, 0.7, 1.0);
        let nodes = if l <= 3 { 160 } else { 32 };
        let t = soft_moments_quadrature(&g, beta, nodes).unwrap();
        prop_assert!((t.e_p.iter().sum::<f64>() - 1.0).abs() <= t.error_bound.max(1e-12));
    }

    #[test]
    fn integration_by_parts_holds(l in 2usize..4, seed in 0u64..1000, beta in 0.1f64..5.0) {
        let g = random_gram(l, seed, 0.8, 1.0);
        for ell in 0..l {
            let c = ibp_check(&g, beta, ell).unwrap();
            prop_assert!(c.residual < 1e-6, "residual {}", c.residual);
            prop_assert!(c.residual <= c.bound.max(1e-12));
        }
    }

    #[test]
    fn softmax_weights_form_a_distribution(l in 2usize..4, seed in 0u64..1000, beta in 0.1f64..5.0) {
        let g = random_gram(l, seed, 0.8, 1.0);
        let w = softmax_weights(&g, beta, 0).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pair_quadrature_agrees_with_closed_form(rho in -0.99f64..0.99, scale in 0.2f64..3.0) {
        let g = GramModel::equicorrelated(2, rho, scale).unwrap();
        let e = hard_moments_exact(&g, 0).unwrap();
        let q = hard_moments_quadrature(&g, 0, 80).unwrap();
        for k in 0..2 {
            prop_assert!((e.value[k] - q.value[k]).abs() < 1e-8);
        }
        prop_assert!((e.mass - q.mass).abs() < 1e-8);
    }

    #[test]
    fn average_inverse_dependency(l in 2usize..5, seed in 0u64..1000, t in 0.2f64..0.6) {
        let x = random_gram(l, seed, 0.5, 1.0);
        let y = pushed_up(&x, t);
        let hard = |g: &GramModel| {
            let all = hard_moments_all(g, 5e-3).unwrap();
            let v: f64 = (0..l).map(|i| all[i].value[i]).sum();
            let b: f64 = all.iter().map(|r| r.error_bound).sum();
            (v, b)
        };
        let (hx, bx) = hard(&x);
        let (hy, by) = hard(&y);
        prop_assert!(hx - hy > bx + by, "hard {} vs {}", hx, hy);
        if l <= 3 {
            let soft = |g: &GramModel| {
                let t = soft_moments_quadrature(g, 1.0, 160).unwrap();
                let v: f64 = (0..l).map(|i| t.e_sp[(i, i)]).sum();
                (v, l as f64 * t.error_bound)
            };
            let (sx, bx) = soft(&x);
            let (sy, by) = soft(&y);
            prop_assert!(sx - sy > bx + by, "soft {} vs {}", sx, sy);
        }
    }
}

#[test]
fn individual_inverse_dependency_for_circulant_grams() {
    let pairs: [(&[f64], &[f64]); 3] = [
        (&[1.0, 0.0, 0.0], &[1.0, 0.4, 0.4]),
        (&[1.0, -0.2, -0.2], &[1.0, 0.1, 0.1]),
        (&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.4, 0.4, 0.4]),
    ];
    for (a, b) in pairs {
        let (x, y) = (GramModel::circulant(a, 1.0).unwrap(), GramModel::circulant(b, 1.0).unwrap());
        for l in 0..a.len() {
            let (rx, ry) = (hard_moments(&x, l, 5e-3).unwrap(), hard_moments(&y, l, 5e-3).unwrap());
            let margin = rx.ratio_bound() + ry.ratio_bound();
            assert!(rx.ratio()[l] - ry.ratio()[l] > margin, "{a:?} vs {b:?}");
            let (sx, sy) = (soft_moments(&x, 1.0, l, 1e-6).unwrap(), soft_moments(&y, 1.0, l, 1e-6).unwrap());
            let margin = sx.ratio_bound() + sy.ratio_bound();
            assert!(sx.ratio()[l] - sy.ratio()[l] > margin, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn circulant_soft_masses_are_one_over_l() {
    for seq in [vec![1.0, 0.3, 0.3], vec![1.0, -0.4, -0.4], vec![1.0, 0.2, -0.1, 0.2]] {
        let l = seq.len();
        let g = GramModel::circulant(&seq, 1.5).unwrap();
        for beta in [0.5, 2.0, 5.0] {
            for ell in 0..l {
                let r = soft_moments(&g, beta, ell, 1e-6).unwrap();
                assert!((r.mass - 1.0 / l as f64).abs() <= r.error_bound.max(1e-12), "{seq:?} beta {beta}");
            }
        }
    }
}

#[test]
fn engine_converges_to_oracle() {
    let m = 1_000_000;
    for seed in 0..6u64 {
        let l = 2 + (seed as usize % 2);
        let g = random_gram(l, 100 + seed, 0.8, 1.0);
        for beta in [f64::INFINITY, 1.5] {
            let cfg = ExperimentConfig::new(l, l, m).with_seed(seed).with_beta(beta);
            let e = assign_gram(&g, &cfg).unwrap();
            for ell in 0..l {
                let o = if beta.is_infinite() {
                    hard_moments(&g, ell, 1e-6).unwrap()
                } else {
                    soft_moments(&g, beta, ell, 1e-6).unwrap()
                };
                let ratio = o.ratio();
                for (k, r) in ratio.iter().enumerate() {
                    let tol = 3.0 * (e.stderr(ell, k).unwrap() + o.ratio_bound());
                    let diff = (e.corr(ell, k).unwrap() - r).abs();
                    assert!(diff <= tol, "seed {seed} beta {beta} ({ell}, {k}): {diff} > {tol}");
                }
            }
        }
    }
}
