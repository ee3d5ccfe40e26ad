use nalgebra::{DMatrix, DVector};

use super::{AssignmentEstimate, CorrScope};
use crate::error::{Error, Result};
use crate::gram::GramModel;
use crate::templates::TemplateSet;

const RANK_TOL: f64 = 1e-10;

/// `⟨x̂_ℓ, x_k⟩` recomputed from the estimate vectors; entries of undefined
/// rows are `None`.
pub fn correlation_matrix(est: &AssignmentEstimate, set: &TemplateSet) -> Result<DMatrix<Option<f64>>> {
    let v = full_vectors(est, set)?;
    let c = v.tr_mul(set.data());
    Ok(DMatrix::from_fn(set.len(), set.len(), |l, k| {
        est.is_defined(l).then(|| c[(l, k)])
    }))
}

/// Fraction of each estimate lying outside `span{x_0, …, x_{L-1}}`:
/// `‖x̂_ℓ − Π x̂_ℓ‖ / ‖x̂_ℓ‖`.
pub fn span_residual(est: &AssignmentEstimate, set: &TemplateSet) -> Result<Vec<Option<f64>>> {
    let v = full_vectors(est, set)?;
    let (d, l) = set.data().shape();
    if d <= l {
        return Err(Error::Dimension(format!(
            "span residual needs d > L (d = {d}, L = {l})"
        )));
    }
    let qr = set.data().clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let rank = r.diagonal().iter().filter(|x| x.abs() > RANK_TOL * scale).count();
    if rank < l {
        return Err(Error::Rank { rank, expected: l });
    }
    let q = qr.q();
    Ok((0..l)
        .map(|j| {
            if !est.is_defined(j) {
                return None;
            }
            let x: DVector<f64> = v.column(j).into_owned();
            let norm = x.norm();
            if norm == 0.0 {
                return Some(0.0);
            }
            let coeffs = q.tr_mul(&x);
            let resid = &x - &q * coeffs;
            Some(resid.norm() / norm)
        })
        .collect())
}

/// Coefficients `α` with `x̂_ℓ ≈ Σ_k α[ℓ][k] x_k`, i.e. `α = corr · G⁻¹` for the
/// unnormalized Gram matrix `G`.
pub fn extract_coefficients(est: &AssignmentEstimate, set: &TemplateSet) -> Result<DMatrix<f64>> {
    extract_coefficients_gram(est, &set.gram()?)
}

pub fn extract_coefficients_gram(est: &AssignmentEstimate, g: &GramModel) -> Result<DMatrix<f64>> {
    let l = g.len();
    if est.len() != l {
        return Err(Error::Dimension(format!(
            "estimate has {} rows but the Gram model has {l}",
            est.len()
        )));
    }
    if est.scope() != CorrScope::Full {
        return Err(Error::Domain("coefficients need the full correlation matrix".into()));
    }
    if let Some(r) = (0..l).find(|&r| !est.is_defined(r)) {
        return Err(Error::Domain(format!("row {r} of the estimate is undefined")));
    }
    let gram = g.inner_products();
    let inv = gram
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| gram.clone().try_inverse())
        .ok_or_else(|| Error::Factorization("Gram matrix is singular".into()))?;
    Ok(est.corr_matrix() * inv)
}

fn full_vectors<'a>(est: &'a AssignmentEstimate, set: &TemplateSet) -> Result<&'a DMatrix<f64>> {
    let v = est
        .estimates()
        .ok_or_else(|| Error::Domain("estimate vectors are only available in full mode".into()))?;
    if v.shape() != set.data().shape() {
        return Err(Error::Dimension(format!(
            "estimates are {:?}, templates are {:?}",
            v.shape(),
            set.data().shape()
        )));
    }
    Ok(v)
}
