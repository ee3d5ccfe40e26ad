//! Normalized cross-correlation matrix of a template set and the law of the
//! projected noise vector `S = (⟨n, x_0⟩, …, ⟨n, x_{L-1}⟩)`.
//!
//! For `n ~ N(0, I_d)` the projection `S` is a zero-mean Gaussian in `R^L`
//! with covariance `scale² · rho`. Sampling it through a factor of `rho`
//! costs `O(L²)` per draw instead of `O(L·d)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest `L` for which positive definiteness is certified by a full
/// symmetric eigendecomposition. Above it the Cholesky pivots are used.
const EIGEN_CHECK_MAX_L: usize = 256;
const MIN_EIGENVALUE: f64 = 1e-12;
const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    /// `rho = I`; no multiplication needed.
    Identity,
    /// Lower-triangular Cholesky factor.
    Lower(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramModel {
    rho: DMatrix<f64>,
    scale: f64,
    factor: Factor,
}

impl GramModel {
    /// Validates `rho` (symmetric, unit diagonal, entries in `[-1, 1]`,
    /// positive definite) and factors it.
    pub fn new(rho: DMatrix<f64>, scale: f64) -> Result<Self> {
        let l = rho.nrows();
        if rho.ncols() != l {
            return Err(Error::Dimension(format!(
                "correlation matrix must be square, got {}x{}",
                l,
                rho.ncols()
            )));
        }
        if l < 2 {
            return Err(Error::Dimension(format!("need at least 2 templates, got {l}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!("scale must be positive and finite, got {scale}")));
        }
        let mut rho = rho;
        for i in 0..l {
            if (rho[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "diagonal entry {i} of the correlation matrix is {} (expected 1)",
                    rho[(i, i)]
                )));
            }
            rho[(i, i)] = 1.0;
            for j in 0..i {
                let (a, b) = (rho[(i, j)], rho[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::Domain(format!("non-finite correlation at ({i}, {j})")));
                }
                if (a - b).abs() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "correlation matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let m = 0.5 * (a + b);
                if m.abs() > 1.0 + 1e-12 {
                    return Err(Error::Domain(format!("correlation {m} at ({i}, {j}) outside [-1, 1]")));
                }
                let m = m.clamp(-1.0, 1.0);
                rho[(i, j)] = m;
                rho[(j, i)] = m;
            }
        }

        let is_identity = (0..l).all(|j| (0..l).all(|i| i == j || rho[(i, j)] == 0.0));
        let factor = if is_identity {
            Factor::Identity
        } else {
            if l <= EIGEN_CHECK_MAX_L {
                let min_eig = rho
                    .clone()
                    .symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                if min_eig <= MIN_EIGENVALUE {
                    return Err(Error::Factorization(format!(
                        "correlation matrix is not positive definite (smallest eigenvalue {min_eig:e})"
                    )));
                }
            }
            let chol = rho.clone().cholesky().ok_or_else(|| {
                Error::Factorization("Cholesky factorization failed (matrix not positive definite)".into())
            })?;
            let lower = chol.unpack();
            let min_pivot = lower.diagonal().iter().map(|p| p * p).fold(f64::INFINITY, f64::min);
            if min_pivot <= MIN_EIGENVALUE {
                return Err(Error::Factorization(format!(
                    "correlation matrix is numerically singular (smallest squared pivot {min_pivot:e})"
                )));
            }
            let err = (&lower * lower.transpose() - &rho).abs().max();
            if err > RECONSTRUCTION_TOL {
                return Err(Error::Factorization(format!(
                    "factor reproduces the correlation matrix only to {err:e}"
                )));
            }
            Factor::Lower(lower)
        };

        Ok(GramModel { rho, scale, factor })
    }

    pub fn identity(l: usize, scale: f64) -> Result<Self> {
        GramModel::new(DMatrix::identity(l, l), scale)
    }

    /// Every off-diagonal correlation equal to `rho`.
    pub fn equicorrelated(l: usize, rho: f64, scale: f64) -> Result<Self> {
        let m = DMatrix::from_fn(l, l, |i, j| if i == j { 1.0 } else { rho });
        GramModel::new(m, scale)
    }

    /// Circulant correlation `rho[i][j] = rho_seq[(j - i) mod L]`.
    pub fn circulant(rho_seq: &[f64], scale: f64) -> Result<Self> {
        check_circulant_sequence(rho_seq)?;
        let l = rho_seq.len();
        let m = DMatrix::from_fn(l, l, |i, j| rho_seq[(j + l - i) % l]);
        GramModel::new(m, scale)
    }

    pub fn len(&self) -> usize {
        self.rho.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    /// The common template norm `‖x‖₂`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    /// The factor as a dense lower-triangular matrix.
    pub fn factor_matrix(&self) -> DMatrix<f64> {
        match &self.factor {
            Factor::Identity => DMatrix::identity(self.len(), self.len()),
            Factor::Lower(m) => m.clone(),
        }
    }

    /// Unnormalized inner products `⟨x_i, x_j⟩ = scale² · rho[i][j]`.
    pub fn inner_products(&self) -> DMatrix<f64> {
        &self.rho * (self.scale * self.scale)
    }

    /// Maps a standard normal `z ∈ R^L` to `S = scale · F z`.
    #[inline]
    pub fn project(&self, z: &[f64], out: &mut [f64]) {
        let l = self.len();
        debug_assert_eq!(z.len(), l);
        debug_assert_eq!(out.len(), l);
        match &self.factor {
            Factor::Identity => {
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = self.scale * zi;
                }
            }
            Factor::Lower(f) => {
                // Column-major storage: accumulate column by column.
                out.iter_mut().for_each(|o| *o = 0.0);
                let data = f.as_slice();
                for (j, &zj) in z.iter().enumerate() {
                    let col = &data[j * l..(j + 1) * l];
                    for i in j..l {
                        out[i] += col[i] * zj;
                    }
                }
                for o in out.iter_mut() {
                    *o *= self.scale;
                }
            }
        }
    }

    /// Whether `rho[i][j]` depends only on `(j - i) mod L`.
    pub fn is_circulant(&self, tol: f64) -> bool {
        let l = self.len();
        (0..l).all(|i| (0..l).all(|j| (self.rho[(i, j)] - self.rho[(0, (j + l - i) % l)]).abs() <= tol))
    }
}

/// Eigenvalues of the symmetric circulant matrix with first row `rho_seq`,
/// `λ_j = Σ_m c_m cos(2π j m / L)`.
pub fn circulant_spectrum(rho_seq: &[f64]) -> Vec<f64> {
    let l = rho_seq.len();
    (0..l)
        .map(|j| {
            rho_seq
                .iter()
                .enumerate()
                .map(|(m, &c)| c * cos_2pi_frac(j * m, l))
                .sum()
        })
        .collect()
}

/// `cos(2π k / n)` with the argument reduced exactly in integers.
#[inline]
pub(crate) fn cos_2pi_frac(k: usize, n: usize) -> f64 {
    let r = k % n;
    (2.0 * std::f64::consts::PI * r as f64 / n as f64).cos()
}

/// Checks the shape requirements of a circulant correlation sequence and its
/// spectrum.
pub(crate) fn check_circulant_sequence(rho_seq: &[f64]) -> Result<Vec<f64>> {
    let l = rho_seq.len();
    if l < 2 {
        return Err(Error::Dimension(format!("circulant sequence needs L >= 2, got {l}")));
    }
    if rho_seq.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("circulant sequence has non-finite entries".into()));
    }
    if (rho_seq[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("rho_seq[0] must be 1, got {}", rho_seq[0])));
    }
    for m in 1..l {
        if (rho_seq[m] - rho_seq[l - m]).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "rho_seq not symmetric: rho_seq[{m}] = {} but rho_seq[{}] = {}",
                rho_seq[m],
                l - m,
                rho_seq[l - m]
            )));
        }
    }
    let spectrum = circulant_spectrum(rho_seq);
    if let Some((index, &value)) = spectrum
        .iter()
        .enumerate()
        .find(|(_, &v)| v <= MIN_EIGENVALUE)
    {
        return Err(Error::Spectrum { index, value });
    }
    Ok(spectrum)
}
