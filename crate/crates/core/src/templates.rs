//! Template sets: the `L` hypotheses `x_0, …, x_{L-1} ∈ R^d` handed to the
//! estimators. All templates in a set share one Euclidean norm.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gram::{check_circulant_sequence, cos_2pi_frac, GramModel};
use crate::io::{self, LoadOptions, TemplateFormat};
use crate::rng;

const NORM_REL_TOL: f64 = 1e-9;
const DISTINCT_TOL: f64 = 1e-12;

/// `d × L` matrix whose column `ℓ` is template `x_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    data: DMatrix<f64>,
    common_norm: f64,
    labels: Option<Vec<String>>,
}

impl TemplateSet {
    /// Validates a matrix whose columns already share a norm.
    pub fn new(data: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (d, l) = data.shape();
        if l < 2 {
            return Err(Error::Dimension(format!("need at least 2 templates, got {l}")));
        }
        if d < 1 {
            return Err(Error::Dimension("templates must have dimension >= 1".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at row {}, column {}",
                pos % d,
                pos / d
            )));
        }
        if let Some(lab) = &labels {
            if lab.len() != l {
                return Err(Error::Dimension(format!("{} labels for {l} templates", lab.len())));
            }
        }
        let common_norm = data.column(0).norm();
        if common_norm == 0.0 {
            return Err(Error::Domain("template 0 is the zero vector".into()));
        }
        for (j, col) in data.column_iter().enumerate() {
            let n = col.norm();
            if ((n - common_norm) / common_norm).abs() > NORM_REL_TOL {
                return Err(Error::Domain(format!(
                    "template {j} has norm {n} but template 0 has norm {common_norm}"
                )));
            }
        }
        let set = TemplateSet {
            data,
            common_norm,
            labels,
        };
        set.check_distinct()?;
        Ok(set)
    }

    /// Rescales every column to `norm` and validates.
    pub fn normalized(mut data: DMatrix<f64>, norm: f64, labels: Option<Vec<String>>) -> Result<Self> {
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Domain(format!("norm must be positive and finite, got {norm}")));
        }
        for (j, mut col) in data.column_iter_mut().enumerate() {
            let n = col.norm();
            if !n.is_finite() {
                return Err(Error::Domain(format!("template {j} has non-finite entries")));
            }
            if n == 0.0 {
                return Err(Error::Domain(format!("template {j} is the zero vector")));
            }
            col *= norm / n;
        }
        let mut set = TemplateSet::new(data, labels)?;
        set.common_norm = norm;
        Ok(set)
    }

    fn check_distinct(&self) -> Result<()> {
        let l = self.len();
        let n2 = self.common_norm * self.common_norm;
        for i in 0..l {
            for j in 0..i {
                let c = self.data.column(i).dot(&self.data.column(j)) / n2;
                if c >= 1.0 - DISTINCT_TOL {
                    return Err(Error::DegenerateTemplates(format!(
                        "templates {j} and {i} coincide (correlation {c})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of templates `L`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn norm(&self) -> f64 {
        self.common_norm
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn template(&self, l: usize) -> DVectorView<'_, f64> {
        self.data.column(l)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of template `l`, falling back to `t{l:03}`.
    pub fn label(&self, l: usize) -> String {
        self.labels
            .as_ref()
            .map(|v| v[l].clone())
            .unwrap_or_else(|| format!("t{l:03}"))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} templates",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Normalized Gram matrix `⟨x_i, x_j⟩ / ‖x‖²` with its factorization.
    pub fn gram(&self) -> Result<GramModel> {
        let n2 = self.common_norm * self.common_norm;
        let mut rho = self.data.tr_mul(&self.data) / n2;
        // The diagonal is 1 up to the norm tolerance; pin it exactly.
        for i in 0..self.len() {
            rho[(i, i)] = 1.0;
        }
        let rho = (&rho + rho.transpose()) * 0.5;
        GramModel::new(rho, self.common_norm)
    }
}

/// Two templates with normalized correlation `rho`:
/// `x_0 = norm·e_0`, `x_1 = norm·(rho·e_0 + √(1−rho²)·e_1)`.
pub fn make_pair(rho: f64, d: usize, norm: f64) -> Result<TemplateSet> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [-1, 1], got {rho}")));
    }
    if rho == 1.0 {
        return Err(Error::DegenerateTemplates("rho = 1 makes the two templates identical".into()));
    }
    if d < 2 {
        return Err(Error::Dimension(format!("make_pair needs d >= 2, got {d}")));
    }
    check_norm(norm)?;
    let mut data = DMatrix::zeros(d, 2);
    data[(0, 0)] = norm;
    data[(0, 1)] = rho * norm;
    data[(1, 1)] = (1.0 - rho * rho).sqrt() * norm;
    let mut set = TemplateSet::new(data, None)?;
    set.common_norm = norm;
    Ok(set)
}

/// `L` templates whose Gram matrix is `norm² · circulant(rho_seq)`.
///
/// The templates are the columns of the symmetric square root of the
/// circulant, placed in the first `L` coordinates of `R^d`.
pub fn make_circulant(rho_seq: &[f64], d: usize, norm: f64) -> Result<TemplateSet> {
    let spectrum = check_circulant_sequence(rho_seq)?;
    let l = rho_seq.len();
    if d < l {
        return Err(Error::Dimension(format!(
            "circulant embedding of {l} templates needs d >= {l}, got {d}"
        )));
    }
    check_norm(norm)?;
    let sqrt_spec: Vec<f64> = spectrum.iter().map(|v| v.sqrt()).collect();
    // First row of the square root, itself circulant and symmetric.
    let root: Vec<f64> = (0..l)
        .map(|m| {
            sqrt_spec
                .iter()
                .enumerate()
                .map(|(j, s)| s * cos_2pi_frac(j * m, l))
                .sum::<f64>()
                / l as f64
        })
        .collect();
    let mut data = DMatrix::zeros(d, l);
    for j in 0..l {
        for i in 0..l {
            data[(i, j)] = norm * root[(i + l - j) % l];
        }
    }
    TemplateSet::normalized(data, norm, None)
}

/// Template 0 is `x0`; templates `1..L` are `U_ℓ x0` for independent
/// Haar-distributed orthogonal `U_ℓ`.
pub fn make_haar_family(x0: &DVector<f64>, l: usize, seed: u64) -> Result<TemplateSet> {
    let d = x0.len();
    if d < 2 {
        return Err(Error::Dimension(format!("Haar family needs d >= 2, got {d}")));
    }
    if l < 2 {
        return Err(Error::Dimension(format!("need at least 2 templates, got {l}")));
    }
    let norm = x0.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Domain("x0 must be a nonzero finite vector".into()));
    }
    let mut rng = rng::stream(seed, rng::TEMPLATE_STREAM);
    let mut data = DMatrix::zeros(d, l);
    data.set_column(0, x0);
    for j in 1..l {
        let u = haar_orthogonal(d, &mut rng);
        data.set_column(j, &(u * x0));
    }
    let mut set = TemplateSet::new(data, None)?;
    set.common_norm = norm;
    Ok(set)
}

/// `L` Gaussian random directions in `R^d` rescaled to `norm`, redrawn until
/// every pairwise normalized correlation satisfies `|ρ| ≤ max_abs_rho`.
pub fn make_random(l: usize, d: usize, max_abs_rho: f64, norm: f64, seed: u64) -> Result<TemplateSet> {
    const ATTEMPTS: usize = 10_000;
    if l < 2 || d < l {
        return Err(Error::Dimension(format!("random set needs 2 <= L <= d, got L = {l}, d = {d}")));
    }
    if !(max_abs_rho > 0.0 && max_abs_rho < 1.0) {
        return Err(Error::Domain(format!("max_abs_rho must lie in (0, 1), got {max_abs_rho}")));
    }
    check_norm(norm)?;
    let mut rng = rng::stream(seed, rng::TEMPLATE_STREAM);
    for _ in 0..ATTEMPTS {
        let mut data: DMatrix<f64> = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));
        for mut col in data.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let rho = data.tr_mul(&data);
        let worst = (0..l)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .fold(0.0f64, |a, (i, j)| a.max(rho[(i, j)].abs()));
        if worst <= max_abs_rho {
            return TemplateSet::normalized(data, norm, None);
        }
    }
    Err(Error::Domain(format!(
        "no set with |rho| <= {max_abs_rho} found in {ATTEMPTS} draws (L = {l}, d = {d})"
    )))
}

/// Haar-distributed `d × d` orthogonal matrix: QR of a standard Gaussian
/// matrix with the columns of `Q` multiplied by `sign(R_jj)`.
pub fn haar_orthogonal<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// `x[m] = exp(−alpha·m)` rescaled to `‖x‖₂ = norm`.
pub fn make_exponential(d: usize, alpha: f64, norm: f64) -> Result<DVector<f64>> {
    if d < 1 {
        return Err(Error::Dimension("exponential template needs d >= 1".into()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    check_norm(norm)?;
    let v = DVector::from_fn(d, |m, _| (-alpha * m as f64).exp());
    let n = v.norm();
    Ok(v * (norm / n))
}

fn check_norm(norm: f64) -> Result<()> {
    if norm.is_finite() && norm > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("norm must be positive and finite, got {norm}")))
    }
}

/// How a template set is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateSpec {
    Pair {
        rho: f64,
        d: usize,
        norm: f64,
    },
    Circulant {
        rho_seq: Vec<f64>,
        d: usize,
        norm: f64,
    },
    /// Exponential base template rotated by Haar matrices.
    HaarExponential {
        d: usize,
        l: usize,
        alpha: f64,
        norm: f64,
        seed: u64,
    },
    File {
        path: PathBuf,
        format: TemplateFormat,
        options: LoadOptions,
    },
}

impl TemplateSpec {
    pub fn build(&self) -> Result<TemplateSet> {
        match self {
            TemplateSpec::Pair { rho, d, norm } => make_pair(*rho, *d, *norm),
            TemplateSpec::Circulant { rho_seq, d, norm } => make_circulant(rho_seq, *d, *norm),
            TemplateSpec::HaarExponential {
                d,
                l,
                alpha,
                norm,
                seed,
            } => make_haar_family(&make_exponential(*d, *alpha, *norm)?, *l, *seed),
            TemplateSpec::File { path, format, options } => io::load_templates(path, *format, options),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_sets_respect_the_correlation_cap() {
        let set = make_random(5, 8, 0.6, 2.0, 9).unwrap();
        let g = set.gram().unwrap();
        for i in 0..5 {
            for j in 0..i {
                assert!(g.rho()[(i, j)].abs() <= 0.6 + 1e-12);
            }
        }
        assert_eq!(set, make_random(5, 8, 0.6, 2.0, 9).unwrap());
        assert!(make_random(4, 3, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn pair_orthogonal_and_antipodal() {
        let s = make_pair(0.0, 4, 1.0).unwrap();
        assert_eq!(s.gram().unwrap().rho()[(0, 1)], 0.0);
        let s = make_pair(-1.0, 4, 1.0).unwrap();
        assert_eq!(s.template(1), -s.template(0));
    }

    #[test]
    fn pair_high_correlation_large_d() {
        let s = make_pair(0.99, 150 * 150, 1.0).unwrap();
        assert!((s.gram().unwrap().rho()[(0, 1)] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn pair_errors() {
        assert!(matches!(make_pair(1.5, 4, 1.0), Err(Error::Domain(_))));
        assert!(matches!(make_pair(1.0, 4, 1.0), Err(Error::DegenerateTemplates(_))));
        assert!(matches!(make_pair(0.2, 1, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn circulant_identity_is_orthonormal() {
        let s = make_circulant(&[1.0, 0.0, 0.0, 0.0], 8, 1.0).unwrap();
        let g = s.data().tr_mul(s.data());
        assert!((g - DMatrix::identity(4, 4)).abs().max() < 1e-12);
    }

    #[test]
    fn circulant_prescribed_entries() {
        let s = make_circulant(&[1.0, 0.3, 0.1, 0.3], 16, 1.0).unwrap();
        let rho = s.gram().unwrap().rho().clone();
        assert!((rho[(0, 1)] - 0.3).abs() < 1e-9);
        assert!((rho[(0, 2)] - 0.1).abs() < 1e-9);
        assert!((rho[(1, 3)] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn circulant_near_degenerate_but_valid() {
        // Spectrum {3.7, 0.1, 0.1, 0.1}.
        let s = make_circulant(&[1.0, 0.9, 0.9, 0.9], 8, 1.0).unwrap();
        assert!((s.gram().unwrap().rho()[(2, 3)] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn circulant_errors() {
        assert!(matches!(
            make_circulant(&[1.0, 0.3, 0.1, 0.3], 3, 1.0),
            Err(Error::Dimension(_))
        ));
        let err = make_circulant(&[1.0, -0.7, -0.7], 4, 1.0).unwrap_err();
        match err {
            Error::Spectrum { index, value } => {
                assert_eq!(index, 0);
                assert!((value + 0.4).abs() < 1e-12);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(make_circulant(&[1.0, 0.3, 0.1, 0.2], 8, 1.0).is_err());
    }

    #[test]
    fn haar_family_preserves_norm_and_is_deterministic() {
        let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let a = make_haar_family(&x0, 2, 11).unwrap();
        assert!((a.template(1).norm() - 1.0).abs() < 1e-12);
        assert!(a.template(1).dot(&a.template(0)).abs() <= 1.0);
        let b = make_haar_family(&x0, 2, 11).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            make_haar_family(&DVector::zeros(3), 2, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn haar_matrix_is_orthogonal() {
        let mut r = rng::stream(3, 0);
        let q = haar_orthogonal(6, &mut r);
        assert!((q.tr_mul(&q) - DMatrix::identity(6, 6)).abs().max() < 1e-12);
    }

    #[test]
    fn exponential_template() {
        let v = make_exponential(3, 0.0, 3f64.sqrt()).unwrap();
        for x in v.iter() {
            assert!((x - 1.0).abs() < 1e-15);
        }
        let v = make_exponential(40, 1.0 / 30.0, 1.0).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-14);
        assert!((v[5] / v[4] - 0.967_216_100_482_005_9).abs() < 1e-12);
        // 1 / sqrt(sum_m exp(-2m/30)), m < 300, evaluated independently.
        let v = make_exponential(300, 1.0 / 30.0, 1.0).unwrap();
        assert!((v[0] - 0.253_954_750_105_825_5).abs() < 1e-12);
    }

    #[test]
    fn set_validation() {
        let dup = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(TemplateSet::new(dup, None), Err(Error::DegenerateTemplates(_))));
        let uneven = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(matches!(TemplateSet::new(uneven, None), Err(Error::Domain(_))));
        let single = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(TemplateSet::new(single, None), Err(Error::Dimension(_))));
        let nan = DMatrix::from_column_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(TemplateSet::new(nan, None).is_err());
    }
}
