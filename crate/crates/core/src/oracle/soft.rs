//! Softmax-weighted moments by tensor quadrature.
//!
//! `p(βS)` is unchanged when the same constant is added to every `S_k`, so
//! the direction `v ∝ F⁻¹ 1` can be integrated out exactly: with
//! `z = t v + U y`, every moment is an expectation over `y ∈ R^{L-1}` with
//! `S = scale · F U y`.

use nalgebra::{DMatrix, DVector};

use super::quadrature::{normal_panel_rule, tensor_sum};
use super::{check_beta, check_index, complement, refine, soft_nodes, refmc, Method, OracleResult, MAX_QUADRATURE_L};
use crate::error::{Error, Result};
use crate::gram::GramModel;

/// Every soft moment of one Gram model at one `β`:
/// `e_p[ℓ] = E[p_ℓ]`, `e_sp[(ℓ, k)] = E[S_k p_ℓ]`, `e_pp[(ℓ, k)] = E[p_ℓ p_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTable {
    pub beta: f64,
    pub e_p: Vec<f64>,
    pub e_sp: DMatrix<f64>,
    pub e_pp: DMatrix<f64>,
    pub error_bound: f64,
    pub nodes: usize,
    pub points: u64,
}

impl SoftTable {
    fn from_raw(l: usize, beta: f64, raw: &[f64], error_bound: f64, nodes: usize, points: u64) -> Self {
        SoftTable {
            beta,
            e_p: raw[..l].to_vec(),
            e_sp: DMatrix::from_row_slice(l, l, &raw[l..l + l * l]),
            e_pp: DMatrix::from_row_slice(l, l, &raw[l + l * l..]),
            error_bound,
            nodes,
            points,
        }
    }

    fn result(&self, l: usize) -> OracleResult {
        OracleResult {
            value: self.e_sp.row(l).iter().copied().collect(),
            mass: self.e_p[l],
            error_bound: self.error_bound,
            method: Method::Quadrature,
            nodes_or_samples: self.points,
        }
    }
}

/// `(E[S_k p_ℓ(βS)])_k` and `E[p_ℓ(βS)]` with `error_bound ≤ precision`.
/// For `L = 2` the mass is exactly `1/2`.
pub fn soft_moments(g: &GramModel, beta: f64, l: usize, precision: f64) -> Result<OracleResult> {
    check_index(g, l)?;
    check_beta(beta)?;
    if precision.is_nan() || precision <= 0.0 {
        return Err(Error::Domain(format!("precision must be positive, got {precision}")));
    }
    let big_l = g.len();
    if big_l > MAX_QUADRATURE_L {
        return refmc::soft_sized(g, beta, l, precision);
    }
    let m = reduced_map(g);
    let (raw, bound, nodes, points) = refine(big_l - 1, soft_nodes(big_l), precision, 1.0, |n| eval(&m, beta, n))?;
    let mut r = SoftTable::from_raw(big_l, beta, &raw, bound, nodes, points).result(l);
    if big_l == 2 {
        r.mass = 0.5;
    }
    Ok(r)
}

/// The full table with `nodes` points per axis; the bound is the difference
/// to the rule with `nodes / 2` points.
pub fn soft_moments_quadrature(g: &GramModel, beta: f64, nodes: usize) -> Result<SoftTable> {
    check_beta(beta)?;
    let big_l = g.len();
    if big_l > MAX_QUADRATURE_L {
        return Err(Error::Domain(format!(
            "quadrature supports L <= {MAX_QUADRATURE_L}, got {big_l}"
        )));
    }
    if nodes < 16 {
        return Err(Error::Domain(format!("need at least 16 nodes, got {nodes}")));
    }
    let m = reduced_map(g);
    let (raw, bound, nodes, points) = refine(big_l - 1, nodes, f64::INFINITY, 1.0, |n| eval(&m, beta, n))?;
    Ok(SoftTable::from_raw(big_l, beta, &raw, bound, nodes, points))
}

/// Both sides of the Gaussian integration by parts identity
/// `E[S_ℓ p_ℓ] = β scale² (E p_ℓ − Σ_k rho[ℓ][k] E[p_ℓ p_k])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Combined quadrature bound of both sides.
    pub bound: f64,
}

pub fn ibp_check(g: &GramModel, beta: f64, l: usize) -> Result<IbpCheck> {
    check_index(g, l)?;
    let t = soft_moments_quadrature(g, beta, soft_nodes(g.len()))?;
    let s2 = g.scale() * g.scale();
    let rho = g.rho();
    let cross: f64 = (0..g.len()).map(|k| rho[(l, k)] * t.e_pp[(l, k)]).sum();
    let lhs = t.e_sp[(l, l)];
    let rhs = beta * s2 * (t.e_p[l] - cross);
    let rho_sum: f64 = (0..g.len()).map(|k| rho[(l, k)].abs()).sum();
    Ok(IbpCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        bound: t.error_bound * (1.0 + beta * s2 * (1.0 + rho_sum)),
    })
}

/// `|LHS − RHS|` of the integration by parts identity.
pub fn ibp_residual(g: &GramModel, beta: f64, l: usize) -> Result<f64> {
    Ok(ibp_check(g, beta, l)?.residual)
}

/// `w_{ℓ,j} = E[p_ℓ p_j] / E[p_ℓ]`.
pub fn softmax_weights(g: &GramModel, beta: f64, l: usize) -> Result<Vec<f64>> {
    check_index(g, l)?;
    let t = soft_moments_quadrature(g, beta, soft_nodes(g.len()))?;
    Ok(t.e_pp.row(l).iter().map(|v| v / t.e_p[l]).collect())
}

/// `scale · F U`, mapping the reduced coordinates `y` to `S`.
fn reduced_map(g: &GramModel) -> DMatrix<f64> {
    let f = g.factor_matrix();
    let ones = DVector::from_element(g.len(), 1.0);
    let v = f
        .solve_lower_triangular(&ones)
        .expect("factor of a positive definite matrix is invertible");
    let u = complement(&(&v / v.norm()));
    f * u * g.scale()
}

fn eval(m: &DMatrix<f64>, beta: f64, n: usize) -> (Vec<f64>, u64) {
    let big_l = m.nrows();
    let dim = m.ncols();
    let rule = normal_panel_rule(n);
    tensor_sum(&vec![&rule; dim], big_l + 2 * big_l * big_l, |y, om, acc| {
        let mut s = [0.0; MAX_QUADRATURE_L];
        let mut p = [0.0; MAX_QUADRATURE_L];
        let (s, p) = (&mut s[..big_l], &mut p[..big_l]);
        for (k, sk) in s.iter_mut().enumerate() {
            *sk = (0..dim).map(|j| m[(k, j)] * y[j]).sum();
        }
        softmax(beta, s, p);
        let (ep, rest) = acc.split_at_mut(big_l);
        let (esp, epp) = rest.split_at_mut(big_l * big_l);
        for l in 0..big_l {
            let wp = om * p[l];
            ep[l] += wp;
            for k in 0..big_l {
                esp[l * big_l + k] += wp * s[k];
                epp[l * big_l + k] += wp * p[k];
            }
        }
    })
}

pub(crate) fn softmax(beta: f64, s: &[f64], p: &mut [f64]) {
    let top = s.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let mut total = 0.0;
    for (pi, &si) in p.iter_mut().zip(s) {
        *pi = (beta * (si - top)).exp();
        total += *pi;
    }
    p.iter_mut().for_each(|pi| *pi /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_mass_is_one_half() {
        let g = GramModel::equicorrelated(2, 0.35, 1.0).unwrap();
        let r = soft_moments(&g, 2.0, 0, 1e-6).unwrap();
        assert_eq!(r.mass, 0.5);
        let t = soft_moments_quadrature(&g, 2.0, 160).unwrap();
        assert!((t.e_p[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn pair_ratio_brackets_small_template_approximation() {
        let g = GramModel::identity(2, 1.0).unwrap();
        let r = soft_moments(&g, 1.0, 0, 1e-8).unwrap();
        let ratio = r.ratio()[0];
        assert!((0.33..=0.42).contains(&ratio), "{ratio}");
        assert!((ratio - 0.3631597).abs() < 1e-5, "{ratio}");
        assert!((r.ratio()[1] + ratio).abs() < 1e-8);
    }

    #[test]
    fn circulant_masses_are_uniform() {
        let g = GramModel::circulant(&[1.0, 0.3, 0.3], 1.2).unwrap();
        let t = soft_moments_quadrature(&g, 3.0, 320).unwrap();
        for l in 0..3 {
            assert!((t.e_p[l] - 1.0 / 3.0).abs() <= t.error_bound.max(1e-12));
        }
    }

    #[test]
    fn ibp_examples() {
        let g = GramModel::identity(2, 1.0).unwrap();
        assert!(ibp_residual(&g, 1.0, 0).unwrap() < 1e-8);
        let g = GramModel::equicorrelated(2, 0.9, 1.0).unwrap();
        assert!(ibp_residual(&g, 5.0, 1).unwrap() < 1e-6);
        let rho = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.3, 0.4, 1.0, 0.2, -0.3, 0.2, 1.0]);
        let g = GramModel::new(rho, 1.0).unwrap();
        for l in 0..3 {
            assert!(ibp_residual(&g, 2.0, l).unwrap() < 1e-7);
        }
    }

    #[test]
    fn softmax_weight_limits() {
        let g = GramModel::identity(2, 1.0).unwrap();
        let w = softmax_weights(&g, 1e-6, 0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-6 && (w[1] - 0.5).abs() < 1e-6);
        let w = softmax_weights(&g, 100.0, 0).unwrap();
        assert!(w[0] > 0.95);
        let g = GramModel::circulant(&[1.0, -0.2, -0.2], 1.0).unwrap();
        let w = softmax_weights(&g, 1.5, 2).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn masses_sum_to_one() {
        let g = GramModel::equicorrelated(4, 0.25, 1.0).unwrap();
        let t = soft_moments_quadrature(&g, 1.0, 32).unwrap();
        assert!((t.e_p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
