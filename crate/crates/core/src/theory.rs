//! Closed-form and asymptotic predictions for the estimators as `M → ∞`.
//!
//! Each prediction carries the coefficient matrix `α` (so that
//! `x̂_ℓ ≈ Σ_k α[ℓ][k] x_k`), the implied correlations
//! `⟨x̂_ℓ, x_k⟩ = Σ_j α[ℓ][j] ⟨x_j, x_k⟩`, and a note stating when the formula
//! applies and whether it is exact.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gram::GramModel;
use crate::templates::TemplateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulaId {
    HardPair,
    SoftPairApprox,
    SoftFiniteLApprox,
    BetaZeroLimit,
    GumbelScale,
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FormulaId::HardPair => "hard_pair",
            FormulaId::SoftPairApprox => "soft_pair_approx",
            FormulaId::SoftFiniteLApprox => "soft_finite_l_approx",
            FormulaId::BetaZeroLimit => "beta_zero_limit",
            FormulaId::GumbelScale => "gumbel_scale",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPrediction {
    pub formula: FormulaId,
    pub alpha: DMatrix<f64>,
    pub predicted_corr: DMatrix<f64>,
    pub validity_note: String,
}

impl TheoryPrediction {
    fn new(formula: FormulaId, alpha: DMatrix<f64>, inner: &DMatrix<f64>, note: impl Into<String>) -> Self {
        let predicted_corr = &alpha * inner;
        TheoryPrediction {
            formula,
            alpha,
            predicted_corr,
            validity_note: note.into(),
        }
    }
}

fn pair_inner(rho: f64, norm: f64) -> DMatrix<f64> {
    let n2 = norm * norm;
    DMatrix::from_row_slice(2, 2, &[n2, rho * n2, rho * n2, n2])
}

fn check_pair(rho: f64, norm: f64) -> Result<()> {
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Domain(format!("norm must be positive, got {norm}")));
    }
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::Hypothesis(format!(
            "two-template formulas need rho < 1, got {rho}"
        )));
    }
    if rho < -1.0 {
        return Err(Error::Domain(format!("rho must be >= -1, got {rho}")));
    }
    Ok(())
}

/// Hard assignment with two templates:
/// `x̂_0 → (x_0 − x_1) / √(π (1 − ρ) ‖x‖²)`.
pub fn hard_pair_prediction(rho: f64, norm: f64) -> Result<TheoryPrediction> {
    check_pair(rho, norm)?;
    let c = (1.0 / (PI * (1.0 - rho) * norm * norm)).sqrt();
    let alpha = DMatrix::from_row_slice(2, 2, &[c, -c, -c, c]);
    let mut p = TheoryPrediction::new(
        FormulaId::HardPair,
        alpha,
        &pair_inner(rho, norm),
        "exact limit as M -> infinity; L = 2, common norm, rho < 1 (rho = -1 admitted)",
    );
    // Closed form of the diagonal, free of the alpha·Gram rounding.
    let diag = norm * ((1.0 - rho) / PI).sqrt();
    p.predicted_corr[(0, 0)] = diag;
    p.predicted_corr[(1, 1)] = diag;
    p.predicted_corr[(0, 1)] = -diag;
    p.predicted_corr[(1, 0)] = -diag;
    Ok(p)
}

/// Soft assignment (β = 1) with two templates, using the probit
/// approximation of the logistic function:
/// `x̂_0 ≈ ½ (x_0 − x_1) / √(1 + (π/4)(1 − ρ)‖x‖²)`.
pub fn soft_pair_prediction(rho: f64, norm: f64) -> Result<TheoryPrediction> {
    check_pair(rho, norm)?;
    let q = (1.0 - rho) * norm * norm;
    let c = 0.5 / (1.0 + 0.25 * PI * q).sqrt();
    let alpha = DMatrix::from_row_slice(2, 2, &[c, -c, -c, c]);
    Ok(TheoryPrediction::new(
        FormulaId::SoftPairApprox,
        alpha,
        &pair_inner(rho, norm),
        "APPROXIMATION (logistic replaced by a scaled normal CDF), not exact; L = 2, beta = 1, rho < 1",
    ))
}

/// Finite-`L` soft approximation from a second-order expansion of the ratio
/// of expectations:
/// `x̂_ℓ ≈ x_ℓ − (1/C_ℓ) Σ_r e^{⟨x_ℓ,x_r⟩} x_r`,
/// `C_ℓ = L − Σ_r e^{⟨x_ℓ,x_r⟩} + (1/L) Σ_{r1,r2} e^{⟨x_r1,x_r2⟩}`.
pub fn soft_finite_prediction(g: &GramModel) -> Result<TheoryPrediction> {
    let l = g.len();
    let inner = g.inner_products();
    let e = inner.map(f64::exp);
    let total: f64 = e.iter().sum();
    let mut alpha = DMatrix::zeros(l, l);
    let mut max_c = 0.0f64;
    let mut min_c = f64::INFINITY;
    for r in 0..l {
        let row_sum: f64 = e.row(r).iter().sum();
        let c = l as f64 - row_sum + total / l as f64;
        if c.is_nan() || c <= 0.0 || !c.is_finite() {
            return Err(Error::ApproximationBreakdown(format!(
                "C_{r} = {c:e} is not positive"
            )));
        }
        max_c = max_c.max(c);
        min_c = min_c.min(c);
        for k in 0..l {
            alpha[(r, k)] = -e[(r, k)] / c;
        }
        alpha[(r, r)] += 1.0;
    }
    let large = alpha.iter().any(|a| a.abs() > 1.0);
    let note = format!(
        "APPROXIMATION (second-order ratio expansion), not exact; beta = 1; C in [{min_c:.6}, {max_c:.6}]{}",
        if large {
            "; large-coefficient regime (|alpha| > 1): expansion unreliable"
        } else {
            ""
        }
    );
    Ok(TheoryPrediction::new(FormulaId::SoftFiniteLApprox, alpha, &inner, note))
}

/// Low-SNR limit of the β-soft estimator: `x̂_ℓ / β → x_ℓ − (1/L) Σ_r x_r`.
/// `predicted_corr` is the limit of `corr / β`.
pub fn beta_zero_limit(set: &TemplateSet) -> Result<TheoryPrediction> {
    let l = set.len();
    let inner = set.data().tr_mul(set.data());
    Ok(beta_zero_from_inner(l, &inner))
}

pub fn beta_zero_limit_gram(g: &GramModel) -> TheoryPrediction {
    beta_zero_from_inner(g.len(), &g.inner_products())
}

fn beta_zero_from_inner(l: usize, inner: &DMatrix<f64>) -> TheoryPrediction {
    let inv = 1.0 / l as f64;
    let alpha = DMatrix::from_fn(l, l, |i, j| if i == j { 1.0 - inv } else { -inv });
    TheoryPrediction::new(
        FormulaId::BetaZeroLimit,
        alpha,
        inner,
        "exact limit of x_hat / beta as beta -> 0 then M -> infinity",
    )
}

/// Normalizing constants for the maximum of `n` standard normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelConstants {
    /// `a_n = √(2 log n)`.
    pub a: f64,
    /// `b_n = a_n − (log log n + log 4π) / (2 a_n)`.
    pub b: f64,
    /// Leading-order growth of the hard estimator's correlation, `a_n`.
    pub asymptotic_scale: f64,
}

impl GumbelConstants {
    /// `b_n / √d`, the reference curve for inner products of unit-norm
    /// templates in `R^d`.
    pub fn b_over_sqrt_d(&self, d: usize) -> f64 {
        self.b / (d as f64).sqrt()
    }
}

pub fn gumbel_constants(n: u64) -> Result<GumbelConstants> {
    if n < 2 {
        return Err(Error::Domain(format!("Gumbel constants need n >= 2, got {n}")));
    }
    let ln = (n as f64).ln();
    let a = (2.0 * ln).sqrt();
    let b = a - (ln.ln() + (4.0 * PI).ln()) / (2.0 * a);
    Ok(GumbelConstants {
        a,
        b,
        asymptotic_scale: a,
    })
}

/// `E[max(X, Y)]` for standard normals with correlation `rho`:
/// `√((1 − ρ)/π)`.
pub fn max_two_gaussians_mean(rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [-1, 1], got {rho}")));
    }
    Ok(((1.0 - rho) / PI).sqrt())
}
