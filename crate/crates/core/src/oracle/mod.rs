//! Reference values for the expectations the estimators converge to.
//!
//! For a Gram model with `S = scale · F z`, `z ~ N(0, I_L)`:
//!
//! * hard: `E[S_k 1{argmax S = ℓ}]` and `P[argmax S = ℓ]`,
//! * soft: `E[S_k p_ℓ(βS)]` and `E[p_ℓ(βS)]`,
//!
//! whose ratio is the limit of `⟨x̂_ℓ, x_k⟩`. Values come from closed forms,
//! Gauss–Hermite quadrature over `z`, or an antithetic reference Monte Carlo
//! run, and always carry an error bound.

mod hard;
pub mod quadrature;
mod refmc;
mod soft;

use std::fmt;

pub use hard::{hard_moments, hard_moments_all, hard_moments_exact, hard_moments_quadrature, iid_max_mean};
pub use refmc::{hard_moments_refmc, soft_moments_refmc};
pub use soft::{ibp_check, ibp_residual, soft_moments, soft_moments_quadrature, softmax_weights, IbpCheck, SoftTable};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gram::GramModel;

/// Largest `L` handled by tensor quadrature.
pub const MAX_QUADRATURE_L: usize = 6;
/// Largest number of tensor grid points a refinement step may use.
pub const NODE_BUDGET: u64 = 60_000_000;
/// Largest number of antithetic pairs a reference MC run may use.
pub const SAMPLE_BUDGET: u64 = 500_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Quadrature,
    Exact,
    RefMc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Quadrature => "quadrature",
            Method::Exact => "exact",
            Method::RefMc => "refmc",
        })
    }
}

/// `value[k] = E[S_k w_ℓ]` and `mass = E[w_ℓ]` for one cluster `ℓ`.
/// `error_bound` applies to every entry of `value` and to `mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: Vec<f64>,
    pub mass: f64,
    pub error_bound: f64,
    pub method: Method,
    pub nodes_or_samples: u64,
}

impl OracleResult {
    /// `E[S_k w_ℓ] / E[w_ℓ]`, the limit of `⟨x̂_ℓ, x_k⟩`.
    pub fn ratio(&self) -> Vec<f64> {
        self.value.iter().map(|v| v / self.mass).collect()
    }

    /// Worst-case bound on every entry of [`ratio`](Self::ratio).
    pub fn ratio_bound(&self) -> f64 {
        let e = self.error_bound;
        let denom = self.mass - e;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        let top = self.value.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (e + top / self.mass * e) / denom
    }
}

pub(crate) fn check_index(g: &GramModel, l: usize) -> Result<()> {
    if l >= g.len() {
        return Err(Error::Domain(format!("cluster index {l} out of range for L = {}", g.len())));
    }
    Ok(())
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

/// Smallest bound ever reported for a numerical (non-exact) result.
pub(crate) fn bound_floor(values: &[f64]) -> f64 {
    let top = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    16.0 * f64::EPSILON * top
}

/// Runs `eval(n)` at `n0 / 2` and `n0`, then keeps doubling `n` while the
/// bound `safety · |I(n) − I(n/2)|` exceeds `precision` and the grid fits
/// the budget.
pub(crate) fn refine(
    dim: usize,
    n0: usize,
    precision: f64,
    safety: f64,
    eval: impl Fn(usize) -> (Vec<f64>, u64),
) -> Result<(Vec<f64>, f64, usize, u64)> {
    let mut n = n0;
    let (mut prev, _) = eval(n0 / 2);
    loop {
        let (cur, points) = eval(n);
        let diff = prev
            .iter()
            .zip(&cur)
            .fold(0.0f64, |a, (p, c)| a.max((p - c).abs()));
        let bound = (safety * diff).max(bound_floor(&cur));
        if bound <= precision {
            return Ok((cur, bound, n, points));
        }
        let next = (2 * n as u64).checked_pow(dim as u32);
        if next.is_none_or(|p| p > NODE_BUDGET) {
            return Err(Error::Budget { target: precision, achieved: bound });
        }
        prev = cur;
        n *= 2;
    }
}

/// Orthonormal basis of the complement of the unit vector `w`, as columns,
/// from the Householder reflection swapping `e_0` and `w`.
pub(crate) fn complement(w: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    let mut v = w.clone();
    v[0] -= 1.0;
    let vn = v.norm_squared();
    let h = if vn < 1e-24 {
        DMatrix::identity(n, n)
    } else {
        DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / vn)
    };
    h.columns(1, n - 1).into_owned()
}

/// Per-axis nodes of the hard-assignment grid (dimension `L - 1`).
pub(crate) fn default_nodes(l: usize) -> usize {
    if l <= 3 {
        80
    } else {
        40
    }
}

/// Per-axis nodes of the soft-assignment grid (dimension `L - 1`).
pub(crate) fn soft_nodes(l: usize) -> usize {
    match l {
        0..=3 => 320,
        4 => 64,
        _ => 32,
    }
}
