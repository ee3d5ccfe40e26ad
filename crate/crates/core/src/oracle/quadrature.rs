//! Gaussian quadrature rules and pruned tensor grids.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::special::normal_pdf;

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`: probabilists' Hermite
/// rule with weights summing to one (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    // Symmetrize: the rule is exactly symmetric about 0.
    let nodes: Vec<f64> = (0..n)
        .map(|i| 0.5 * (pairs[i].0 - pairs[n - 1 - i].0))
        .collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| 0.5 * (pairs[i].1 + pairs[n - 1 - i].1) / total)
        .collect();
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]`.
pub fn integrate_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            x.iter()
                .zip(&w)
                .map(|(&xi, &wi)| wi * f(mid + 0.5 * h * xi))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// Normalized tensor-product weights below this are skipped.
pub const PRUNE: f64 = 1e-20;

/// A 1-D rule: nodes and weights.
pub type Rule = (Vec<f64>, Vec<f64>);

/// Rule for `E[f(Z)]`, `Z ~ N(0, 1)`, placing `n / 2` Gauss–Legendre nodes on
/// each of `[-10, 0]` and `[0, 10]`. Spectrally accurate for integrands that
/// are smooth on both half lines but kinked at 0.
pub fn split_normal_rule(n: usize) -> Rule {
    let half = (n / 2).max(1);
    let (x, w) = gauss_legendre(half);
    let mut nodes = Vec::with_capacity(2 * half);
    let mut weights = Vec::with_capacity(2 * half);
    for sign in [-1.0, 1.0] {
        for (&xi, &wi) in x.iter().zip(&w) {
            let u = sign * 5.0 * (xi + 1.0);
            nodes.push(u);
            weights.push(5.0 * wi * normal_pdf(u));
        }
    }
    normalize(&mut weights);
    (nodes, weights)
}

/// Rule for `E[f(Z)]`, `Z ~ N(0, 1)`: `n / 8` equal panels on `[-10, 10]`
/// with 8 Gauss–Legendre nodes each. Resolves sharp but smooth transitions
/// anywhere in the bulk.
pub fn normal_panel_rule(n: usize) -> Rule {
    let panels = (n / 8).max(1);
    let (x, w) = gauss_legendre(8);
    let h = 20.0 / panels as f64;
    let mut nodes = Vec::with_capacity(8 * panels);
    let mut weights = Vec::with_capacity(8 * panels);
    for p in 0..panels {
        let mid = -10.0 + (p as f64 + 0.5) * h;
        for (&xi, &wi) in x.iter().zip(&w) {
            let u = mid + 0.5 * h * xi;
            nodes.push(u);
            weights.push(0.5 * h * wi * normal_pdf(u));
        }
    }
    normalize(&mut weights);
    (nodes, weights)
}

/// Rescales to unit total.
fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

/// Sums `f(point, weight)` over the pruned tensor product of `rules` (one
/// per dimension). `f` accumulates into a vector of length `width`; the
/// outermost index is split across workers and partial sums are added in
/// index order.
pub fn tensor_sum<F>(rules: &[&Rule], width: usize, f: F) -> (Vec<f64>, u64)
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    let dim = rules.len();
    assert!(dim >= 1);
    let (nodes0, weights0) = rules[0];
    let parts: Vec<(Vec<f64>, u64)> = (0..nodes0.len())
        .into_par_iter()
        .map(|i0| {
            let mut acc = vec![0.0; width];
            let mut count = 0u64;
            if weights0[i0] < PRUNE {
                return (acc, count);
            }
            let mut point = vec![0.0; dim];
            point[0] = nodes0[i0];
            if dim == 1 {
                f(&point, weights0[i0], &mut acc);
                return (acc, 1);
            }
            let mut idx = vec![0usize; dim];
            let mut partial = vec![0.0; dim];
            partial[0] = weights0[i0];
            let mut level = 1;
            loop {
                let (nodes, weights) = rules[level];
                if idx[level] == nodes.len() {
                    idx[level] = 0;
                    level -= 1;
                    if level == 0 {
                        break;
                    }
                    idx[level] += 1;
                    continue;
                }
                let w = partial[level - 1] * weights[idx[level]];
                if w < PRUNE {
                    idx[level] += 1;
                    continue;
                }
                point[level] = nodes[idx[level]];
                if level + 1 == dim {
                    f(&point, w, &mut acc);
                    count += 1;
                    idx[level] += 1;
                } else {
                    partial[level] = w;
                    level += 1;
                }
            }
            (acc, count)
        })
        .collect();
    let mut total = vec![0.0; width];
    let mut count = 0;
    for (p, c) in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
        count += c;
    }
    (total, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m = |p: i32| x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!(m(1).abs() < 1e-14);
        assert!((m(2) - 1.0).abs() < 1e-13);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(6) - 15.0).abs() < 1e-11);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        let (_, w1) = gauss_legendre(1);
        assert!((w1[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn composite_integral_of_gaussian() {
        let v = integrate_composite(crate::special::normal_pdf, -10.0, 10.0, 40, 10);
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn split_rule_integrates_kinks() {
        let (x, w) = split_normal_rule(60);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // E|Z| = sqrt(2 / pi)
        let abs: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.abs()).sum();
        assert!((abs - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn panel_rule_moments() {
        let (x, w) = normal_panel_rule(160);
        let m = |p: i32| x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!((m(4) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn tensor_sum_second_moments() {
        let rule = gauss_hermite(12);
        let (v, count) = tensor_sum(&[&rule; 3], 2, |p, wt, acc| {
            acc[0] += wt;
            acc[1] += wt * p[0] * p[0] * p[2] * p[2];
        });
        assert!((v[0] - 1.0).abs() < 1e-13);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert!(count > 0 && count <= 12u64.pow(3));
    }
}
