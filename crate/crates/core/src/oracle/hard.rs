//! Moments restricted to the argmax region `V_ℓ = {S_ℓ ≥ S_j ∀ j}`.
//!
//! Quadrature rotates `z` so that the first axis is a unit vector `w` inside
//! the region: the normalized sum of the region normals when every normal
//! makes an acute angle with it, else `F^T e_ℓ`. Along `w` the region is a
//! half line `t ≥ lo(y)` with `lo` piecewise linear in the remaining
//! coordinates `y`, and the `t` integral is done in closed form:
//!
//! `E[1{V_ℓ}] = E_y[Φ(-lo)]`, `E[z 1{V_ℓ}] = E_y[U y Φ(-lo) + w φ(lo)]`.
//!
//! The remaining `L - 1` dimensional integral has only kinks, not jumps.

use nalgebra::{DMatrix, DVector};

use super::quadrature::{gauss_hermite, integrate_composite, split_normal_rule, tensor_sum};
use super::{check_index, complement, default_nodes, refine, refmc, Method, OracleResult, MAX_QUADRATURE_L};
use crate::error::{Error, Result};
use crate::gram::{Factor, GramModel};
use crate::special::{normal_cdf, normal_pdf};

/// `(E[S_k 1{argmax = ℓ}])_k` and `P[argmax = ℓ]` with `error_bound ≤ precision`.
///
/// `L = 2` is closed form, `L ≤ 6` uses quadrature, larger identity Grams use
/// the order-statistic integral and anything else reference Monte Carlo.
pub fn hard_moments(g: &GramModel, l: usize, precision: f64) -> Result<OracleResult> {
    check_index(g, l)?;
    check_precision(precision)?;
    let big_l = g.len();
    if big_l == 2 {
        return hard_moments_exact(g, l);
    }
    if big_l <= MAX_QUADRATURE_L {
        let setup = Setup::new(g, l);
        let (vals, bound, _, points) = refine(big_l - 1, default_nodes(big_l), precision, setup.safety(), |n| setup.eval(n))?;
        return Ok(setup.finish(vals, bound, points));
    }
    if matches!(g.factor(), Factor::Identity) {
        let m = iid_max_mean(big_l);
        let s = g.scale();
        let lf = big_l as f64;
        let bound = s * m.error_bound / lf;
        if bound > precision {
            return Err(Error::Budget { target: precision, achieved: bound });
        }
        let mut value = vec![-s * m.value[0] / (lf * (lf - 1.0)); big_l];
        value[l] = s * m.value[0] / lf;
        return Ok(OracleResult {
            value,
            mass: 1.0 / lf,
            error_bound: bound,
            method: Method::Quadrature,
            nodes_or_samples: m.nodes_or_samples,
        });
    }
    refmc::hard_sized(g, l, precision)
}

/// [`hard_moments`] for every cluster.
pub fn hard_moments_all(g: &GramModel, precision: f64) -> Result<Vec<OracleResult>> {
    (0..g.len()).map(|l| hard_moments(g, l, precision)).collect()
}

/// Folded-normal closed form for `L = 2`.
pub fn hard_moments_exact(g: &GramModel, l: usize) -> Result<OracleResult> {
    check_index(g, l)?;
    if g.len() != 2 {
        return Err(Error::Domain(format!("the exact branch needs L = 2, got {}", g.len())));
    }
    let rho = g.rho()[(0, 1)];
    let h = 0.5 * g.scale() * ((1.0 - rho) / std::f64::consts::PI).sqrt();
    let mut value = vec![-h; 2];
    value[l] = h;
    Ok(OracleResult {
        value,
        mass: 0.5,
        error_bound: 4.0 * f64::EPSILON * h.max(1.0),
        method: Method::Exact,
        nodes_or_samples: 0,
    })
}

/// Quadrature with `nodes` points per axis; the bound is the difference to
/// the rule with `nodes / 2` points.
pub fn hard_moments_quadrature(g: &GramModel, l: usize, nodes: usize) -> Result<OracleResult> {
    check_index(g, l)?;
    if g.len() > MAX_QUADRATURE_L {
        return Err(Error::Domain(format!(
            "quadrature supports L <= {MAX_QUADRATURE_L}, got {}",
            g.len()
        )));
    }
    if nodes < 2 {
        return Err(Error::Domain(format!("need at least 2 nodes, got {nodes}")));
    }
    let setup = Setup::new(g, l);
    let (vals, bound, _, points) = refine(g.len() - 1, nodes, f64::INFINITY, setup.safety(), |n| setup.eval(n))?;
    Ok(setup.finish(vals, bound, points))
}

/// `E[max(Z_1, …, Z_L)]` for iid standard normals from
/// `∫ x L φ(x) Φ(x)^{L-1} dx`; `value = [mean]`, `mass = 1`.
pub fn iid_max_mean(l: usize) -> OracleResult {
    assert!(l >= 1);
    let lf = l as f64;
    let f = |x: f64| {
        let c = normal_cdf(x);
        if c <= 0.0 {
            return 0.0;
        }
        x * lf * normal_pdf(x) * ((lf - 1.0) * c.ln()).exp()
    };
    let coarse = integrate_composite(f, -12.0, 12.0, 240, 10);
    let fine = integrate_composite(f, -12.0, 12.0, 480, 10);
    OracleResult {
        value: vec![fine],
        mass: 1.0,
        error_bound: (fine - coarse).abs().max(super::bound_floor(&[fine])),
        method: Method::Quadrature,
        nodes_or_samples: 4800,
    }
}

fn check_precision(precision: f64) -> Result<()> {
    if precision.is_nan() || precision <= 0.0 {
        return Err(Error::Domain(format!("precision must be positive, got {precision}")));
    }
    Ok(())
}

struct Setup {
    scale: f64,
    f: DMatrix<f64>,
    axis: DVector<f64>,
    u: DMatrix<f64>,
    /// One row per competitor `j ≠ ℓ`: `lo(y) = max_j coef_j · y`.
    coef: Vec<Vec<f64>>,
    /// The only kink of `lo` lies on `y_0 = 0` (always the case for `L = 3`).
    split: bool,
}

impl Setup {
    fn new(g: &GramModel, l: usize) -> Self {
        let big_l = g.len();
        let f = g.factor_matrix();
        // Region normals a_j = F^T (e_ℓ − e_j): z ∈ V_ℓ iff a_j · z ≥ 0 for all j.
        let normals: Vec<DVector<f64>> = (0..big_l)
            .filter(|&j| j != l)
            .map(|j| (f.row(l) - f.row(j)).transpose())
            .collect();
        let axis = central_axis(&normals).unwrap_or_else(|| {
            let w: DVector<f64> = f.row(l).transpose();
            &w / w.norm()
        });
        let mut u = complement(&axis);
        let mut coef: Vec<DVector<f64>> = normals
            .iter()
            .map(|a| -u.tr_mul(a) / a.dot(&axis))
            .collect();
        let mut split = false;
        if coef.len() == 2 {
            let delta = &coef[0] - &coef[1];
            let dn = delta.norm();
            if dn > 1e-12 {
                let (c, s) = (delta[0] / dn, delta[1] / dn);
                let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                u = &u * &rot;
                coef = coef.iter().map(|k| rot.tr_mul(k)).collect();
                split = true;
            }
        }
        Setup {
            scale: g.scale(),
            f,
            axis,
            u,
            coef: coef.iter().map(|c| c.iter().copied().collect()).collect(),
            split,
        }
    }

    /// With more than one kink direction the rule converges only
    /// algebraically and the halving difference underestimates the error.
    fn safety(&self) -> f64 {
        if self.coef.len() > 2 {
            2.0
        } else {
            1.0
        }
    }

    /// Raw sums in `y` coordinates: `[Σ ω y Φ(-lo) (L-1 entries), Σ ω φ(lo), Σ ω Φ(-lo)]`,
    /// mapped to `[E[S_0 1], …, E[S_{L-1} 1], P]`.
    fn eval(&self, n: usize) -> (Vec<f64>, u64) {
        let dim = self.u.ncols();
        let gh = gauss_hermite(n);
        let split = split_normal_rule(n);
        let mut rules = vec![&gh; dim];
        if self.split {
            rules[0] = &split;
        }
        let (acc, points) = tensor_sum(&rules, dim + 2, |y, om, acc| {
            let lo = self
                .coef
                .iter()
                .map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            let tail = normal_cdf(-lo);
            for (a, yi) in acc.iter_mut().zip(y) {
                *a += om * yi * tail;
            }
            acc[dim] += om * normal_pdf(lo);
            acc[dim + 1] += om * tail;
        });
        let ay = DVector::from_column_slice(&acc[..dim]);
        let ez = &self.u * ay + &self.axis * acc[dim];
        let es = &self.f * ez * self.scale;
        let mut out: Vec<f64> = es.iter().copied().collect();
        out.push(acc[dim + 1]);
        (out, points)
    }

    fn finish(&self, mut vals: Vec<f64>, bound: f64, points: u64) -> OracleResult {
        let mass = vals.pop().unwrap();
        OracleResult {
            value: vals,
            mass,
            error_bound: bound,
            method: Method::Quadrature,
            nodes_or_samples: points,
        }
    }
}

/// Axis along which every region constraint is a lower bound: the
/// normalized sum of the unit normals, if it lies strictly inside the cone.
fn central_axis(normals: &[DVector<f64>]) -> Option<DVector<f64>> {
    let units: Vec<DVector<f64>> = normals.iter().map(|a| a / a.norm()).collect();
    let sum = units.iter().fold(DVector::zeros(units[0].len()), |acc, u| acc + u);
    let norm = sum.norm();
    if norm < 1e-12 {
        return None;
    }
    let axis = sum / norm;
    units.iter().all(|u| u.dot(&axis) > 0.05).then_some(axis)
}
