//! Single-iteration hard (K-means) and soft (EM) assignment on pure noise.
//!
//! Observations are `n_i ~ N(0, I_d)`. Each observation is projected onto the
//! templates, `S_k = ⟨n_i, x_k⟩`, and weighted either by the indicator of the
//! winning template (hard) or by `softmax(β S)` (soft). The estimate for
//! template `ℓ` is the weighted mean of the observations.
//!
//! In [`Mode::Gram`] only `S` is simulated, as `S = ‖x‖ · F z` with
//! `F Fᵀ = rho` and `z ~ N(0, I_L)`; this has the same law as the projections
//! of `d`-dimensional noise and yields `corr[ℓ][k] = ⟨x̂_ℓ, x_k⟩` without the
//! estimate vectors.

mod accumulate;
mod analysis;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gram::{Factor, GramModel};
use crate::rng;
use crate::templates::{TemplateSet, TemplateSpec};

use accumulate::{Sums, FLUSH_EVERY};

pub use analysis::{correlation_matrix, extract_coefficients, extract_coefficients_gram, span_residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Simulate `d`-dimensional noise and keep the estimate vectors.
    Full,
    /// Simulate only the `L` projections.
    Gram,
}

/// Which entries of `corr` are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrScope {
    /// All `L × L` entries: `O(L²)` work per soft sample.
    Full,
    /// Only `corr[ℓ][ℓ]`: `O(L)` work per sample, for large `L`.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub l: usize,
    pub d: usize,
    pub m: u64,
    pub mode: Mode,
    /// `f64::INFINITY` selects hard assignment.
    pub beta: f64,
    pub seed: u64,
    pub chunks: u64,
    /// Gram mode only; full mode always accumulates every entry.
    pub scope: CorrScope,
    pub template_spec: Option<TemplateSpec>,
}

impl ExperimentConfig {
    pub fn new(l: usize, d: usize, m: u64) -> Self {
        ExperimentConfig {
            l,
            d,
            m,
            mode: Mode::Gram,
            beta: f64::INFINITY,
            seed: 0,
            chunks: 64.min(m.max(1)),
            scope: CorrScope::Full,
            template_spec: None,
        }
    }

    /// Config sized for `set`.
    pub fn for_set(set: &TemplateSet, m: u64) -> Self {
        ExperimentConfig::new(set.len(), set.dim(), m)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_chunks(mut self, chunks: u64) -> Self {
        self.chunks = chunks;
        self
    }

    pub fn with_scope(mut self, scope: CorrScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn is_hard(&self) -> bool {
        self.beta == f64::INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("M must be >= 1".into()));
        }
        if self.chunks < 1 || self.chunks > self.m {
            return Err(Error::Config(format!(
                "chunks must lie in [1, M = {}], got {}",
                self.m, self.chunks
            )));
        }
        if self.l < 2 {
            return Err(Error::Config(format!("L must be >= 2, got {}", self.l)));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Domain(format!("beta must be positive, got {}", self.beta)));
        }
        if self.mode == Mode::Full && self.scope == CorrScope::Diagonal {
            return Err(Error::Config("diagonal scope is only available in Gram mode".into()));
        }
        Ok(())
    }
}

/// Outcome of weighting one projected sample.
pub enum Assigned {
    /// All weight on one template.
    Single(usize),
    /// Weights were written to the output slice.
    Spread,
}

/// Rule mapping projections `S` to per-template weights.
pub trait Weighting: Sync {
    /// SNR parameter recorded in the estimate (`∞` for hard).
    fn beta(&self) -> f64;
    fn weigh(&self, s: &[f64], weights: &mut [f64]) -> Assigned;
}

/// Argmax assignment; ties go to the lowest index.
#[derive(Debug, Clone, Copy)]
pub struct Hard;

impl Weighting for Hard {
    fn beta(&self) -> f64 {
        f64::INFINITY
    }

    #[inline]
    fn weigh(&self, s: &[f64], _weights: &mut [f64]) -> Assigned {
        Assigned::Single(argmax(s))
    }
}

/// `softmax(β S)` with the maximum subtracted before exponentiation.
#[derive(Debug, Clone, Copy)]
pub struct Soft {
    pub beta: f64,
}

impl Weighting for Soft {
    fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    fn weigh(&self, s: &[f64], weights: &mut [f64]) -> Assigned {
        softmax_into(self.beta, s, weights);
        Assigned::Spread
    }
}

#[inline]
pub fn argmax(s: &[f64]) -> usize {
    let mut best = 0;
    let mut top = s[0];
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v > top {
            top = v;
            best = i;
        }
    }
    best
}

/// Writes `softmax(beta · s)` into `out`.
#[inline]
pub fn softmax_into(beta: f64, s: &[f64], out: &mut [f64]) {
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(s) {
        let e = (beta * (v - top)).exp();
        *o = e;
        total += e;
    }
    let inv = 1.0 / total;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// `corr`, `stderr`, and `mass` for one run, plus the estimate vectors in
/// full mode. Rows of empty clusters are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentEstimate {
    mode: Mode,
    scope: CorrScope,
    estimates: Option<DMatrix<f64>>,
    corr: DMatrix<f64>,
    stderr: DMatrix<f64>,
    mass: Vec<f64>,
    defined: Vec<bool>,
    pooled: PooledStat,
    m: u64,
    beta: f64,
    seed: u64,
    chunks: u64,
    warnings: Vec<String>,
}

/// Mean and standard error of a per-sample statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledStat {
    pub value: f64,
    pub stderr: f64,
}

impl AssignmentEstimate {
    /// Wraps known estimate vectors (columns of `estimates`) without any
    /// sampling. Masses are uniform and standard errors infinite.
    pub fn from_estimates(set: &TemplateSet, estimates: DMatrix<f64>) -> Result<Self> {
        let l = set.len();
        if estimates.shape() != (set.dim(), l) {
            return Err(Error::Dimension(format!(
                "estimates are {:?}, templates are {:?}",
                estimates.shape(),
                (set.dim(), l)
            )));
        }
        let corr = estimates.tr_mul(set.data());
        Ok(AssignmentEstimate {
            mode: Mode::Full,
            scope: CorrScope::Full,
            estimates: Some(estimates),
            corr,
            stderr: DMatrix::from_element(l, l, f64::INFINITY),
            mass: vec![1.0 / l as f64; l],
            defined: vec![true; l],
            pooled: PooledStat {
                value: f64::NAN,
                stderr: f64::INFINITY,
            },
            m: 0,
            beta: f64::NAN,
            seed: 0,
            chunks: 0,
            warnings: Vec::new(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn scope(&self) -> CorrScope {
        self.scope
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Estimate vectors as columns (full mode only).
    pub fn estimates(&self) -> Option<&DMatrix<f64>> {
        self.estimates.as_ref()
    }

    fn entry_available(&self, l: usize, k: usize) -> bool {
        self.defined[l] && (self.scope == CorrScope::Full || l == k)
    }

    /// `⟨x̂_ℓ, x_k⟩`, or `None` for an empty cluster or an entry outside the
    /// accumulated scope.
    pub fn corr(&self, l: usize, k: usize) -> Option<f64> {
        self.entry_available(l, k).then(|| self.corr[(l, k)])
    }

    pub fn stderr(&self, l: usize, k: usize) -> Option<f64> {
        self.entry_available(l, k).then(|| self.stderr[(l, k)])
    }

    /// Raw matrices; unavailable entries are NaN.
    pub fn corr_matrix(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn stderr_matrix(&self) -> &DMatrix<f64> {
        &self.stderr
    }

    /// Row `ℓ` of `corr`, if defined and fully accumulated.
    pub fn corr_row(&self, l: usize) -> Option<Vec<f64>> {
        (self.defined[l] && self.scope == CorrScope::Full)
            .then(|| self.corr.row(l).iter().copied().collect())
    }

    /// Hard: `|A_ℓ| / M`. Soft: `(1/M) Σ_i p_i^(ℓ)`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn is_defined(&self, l: usize) -> bool {
        self.defined[l]
    }

    pub fn all_defined(&self) -> bool {
        self.defined.iter().all(|&d| d)
    }

    /// `Σ_ℓ mass[ℓ] · corr[ℓ][ℓ]` with its standard error.
    pub fn weighted_diagonal(&self) -> PooledStat {
        self.pooled
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chunks(&self) -> u64 {
        self.chunks
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Algorithm 1 in the mode selected by `cfg` (its `beta` is ignored).
pub fn hard_assign(set: &TemplateSet, cfg: &ExperimentConfig) -> Result<AssignmentEstimate> {
    estimate(set, cfg, &Hard)
}

/// β-soft assignment in the mode selected by `cfg`.
pub fn soft_assign(set: &TemplateSet, cfg: &ExperimentConfig) -> Result<AssignmentEstimate> {
    estimate(set, cfg, &soft_weighting(cfg.beta)?)
}

/// Hard assignment sampled directly from a Gram model.
pub fn hard_assign_gram(g: &GramModel, cfg: &ExperimentConfig) -> Result<AssignmentEstimate> {
    estimate_gram(g, cfg, &Hard)
}

pub fn soft_assign_gram(g: &GramModel, cfg: &ExperimentConfig) -> Result<AssignmentEstimate> {
    estimate_gram(g, cfg, &soft_weighting(cfg.beta)?)
}

/// Hard when `cfg.beta` is infinite, soft otherwise.
pub fn assign(set: &TemplateSet, cfg: &ExperimentConfig) -> Result<AssignmentEstimate> {
    if cfg.is_hard() {
        hard_assign(set, cfg)
    } else {
        soft_assign(set, cfg)
    }
}

pub fn assign_gram(g: &GramModel, cfg: &ExperimentConfig) -> Result<AssignmentEstimate> {
    if cfg.is_hard() {
        hard_assign_gram(g, cfg)
    } else {
        soft_assign_gram(g, cfg)
    }
}

fn soft_weighting(beta: f64) -> Result<Soft> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!(
            "soft assignment needs a finite beta > 0, got {beta}"
        )));
    }
    Ok(Soft { beta })
}

/// Runs `weighting` over a template set, in full or Gram mode.
pub fn estimate<W: Weighting>(set: &TemplateSet, cfg: &ExperimentConfig, weighting: &W) -> Result<AssignmentEstimate> {
    cfg.validate()?;
    if cfg.l != set.len() {
        return Err(Error::Config(format!(
            "config has L = {} but the template set has {}",
            cfg.l,
            set.len()
        )));
    }
    match cfg.mode {
        Mode::Gram => estimate_gram(&set.gram()?, cfg, weighting),
        Mode::Full => {
            if cfg.d != set.dim() {
                return Err(Error::Config(format!(
                    "config has d = {} but the templates live in R^{}",
                    cfg.d,
                    set.dim()
                )));
            }
            let source = FullSource { set };
            let acc = run_chunks(cfg, weighting, set.len(), CorrScope::Full, Some(set.dim()), &source);
            Ok(finish(acc, cfg, weighting.beta(), Mode::Full, CorrScope::Full, Some(set)))
        }
    }
}

/// Runs `weighting` on projections sampled from `g`.
pub fn estimate_gram<W: Weighting>(g: &GramModel, cfg: &ExperimentConfig, weighting: &W) -> Result<AssignmentEstimate> {
    cfg.validate()?;
    if cfg.l != g.len() {
        return Err(Error::Config(format!(
            "config has L = {} but the Gram model has {}",
            cfg.l,
            g.len()
        )));
    }
    let source = GramSource { g };
    let acc = run_chunks(cfg, weighting, g.len(), cfg.scope, None, &source);
    Ok(finish(acc, cfg, weighting.beta(), Mode::Gram, cfg.scope, None))
}

/// Produces one observation: its projections, and the raw vector when the
/// estimate vectors are tracked.
trait Source: Sync {
    fn noise_dim(&self) -> usize;
    fn draw(&self, rng: &mut rng::StreamRng, noise: &mut [f64], s: &mut [f64]);
}

struct GramSource<'a> {
    g: &'a GramModel,
}

impl Source for GramSource<'_> {
    fn noise_dim(&self) -> usize {
        self.g.len()
    }

    #[inline]
    fn draw(&self, rng: &mut rng::StreamRng, noise: &mut [f64], s: &mut [f64]) {
        if let Factor::Identity = self.g.factor() {
            let scale = self.g.scale();
            for sk in s.iter_mut() {
                *sk = scale * rng.sample::<f64, _>(StandardNormal);
            }
            return;
        }
        for z in noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        self.g.project(noise, s);
    }
}

struct FullSource<'a> {
    set: &'a TemplateSet,
}

impl Source for FullSource<'_> {
    fn noise_dim(&self) -> usize {
        self.set.dim()
    }

    #[inline]
    fn draw(&self, rng: &mut rng::StreamRng, noise: &mut [f64], s: &mut [f64]) {
        for z in noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let d = noise.len();
        let data = self.set.data().as_slice();
        for (k, sk) in s.iter_mut().enumerate() {
            let col = &data[k * d..(k + 1) * d];
            *sk = col.iter().zip(noise.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

/// Sums accumulated by one chunk. With `w` the weight of template `ℓ` and
/// `S` the projections of one observation:
/// `w1[ℓ] = Σw`, `w2[ℓ] = Σw²`, `s1[ℓ,k] = Σ w S_k`, `s2[ℓ,k] = Σ w² S_k`,
/// `s3[ℓ,k] = Σ w² S_k²`, `t = Σ T`, `T = Σ_ℓ w_ℓ S_ℓ`.
/// For hard weights `w² = w`, so `w2` and `s2` are not tracked.
struct ChunkSums {
    l: usize,
    width: usize,
    tracks_squares: bool,
    w1: Sums,
    w2: Sums,
    s1: Sums,
    s2: Sums,
    s3: Sums,
    t: Sums,
    vectors: Option<Sums>,
}

impl ChunkSums {
    fn new(l: usize, scope: CorrScope, vector_dim: Option<usize>, tracks_squares: bool) -> Self {
        let width = match scope {
            CorrScope::Full => l,
            CorrScope::Diagonal => 1,
        };
        let sq = if tracks_squares { l * width } else { 0 };
        ChunkSums {
            l,
            width,
            tracks_squares,
            w1: Sums::new(l),
            w2: Sums::new(if tracks_squares { l } else { 0 }),
            s1: Sums::new(l * width),
            s2: Sums::new(sq),
            s3: Sums::new(l * width),
            t: Sums::new(2),
            vectors: vector_dim.map(|d| Sums::new(l * d)),
        }
    }

    fn flush(&mut self) {
        for s in [
            &mut self.w1,
            &mut self.w2,
            &mut self.s1,
            &mut self.s2,
            &mut self.s3,
            &mut self.t,
        ] {
            s.flush();
        }
        if let Some(v) = &mut self.vectors {
            v.flush();
        }
    }

    fn merge(&mut self, o: &ChunkSums) {
        self.w1.merge(&o.w1);
        self.w2.merge(&o.w2);
        self.s1.merge(&o.s1);
        self.s2.merge(&o.s2);
        self.s3.merge(&o.s3);
        self.t.merge(&o.t);
        if let (Some(a), Some(b)) = (&mut self.vectors, &o.vectors) {
            a.merge(b);
        }
    }

    #[inline]
    fn add_single(&mut self, a: usize, s: &[f64], noise: &[f64]) {
        self.w1.block[a] += 1.0;
        let sa = s[a];
        self.t.block[0] += sa;
        self.t.block[1] += sa * sa;
        if self.width == 1 {
            self.s1.block[a] += sa;
            self.s3.block[a] += sa * sa;
        } else {
            let row = a * self.width;
            let s1 = &mut self.s1.block[row..row + self.width];
            let s3 = &mut self.s3.block[row..row + self.width];
            for ((x1, x3), &sk) in s1.iter_mut().zip(s3.iter_mut()).zip(s) {
                *x1 += sk;
                *x3 += sk * sk;
            }
        }
        if let Some(v) = &mut self.vectors {
            let d = noise.len();
            for (acc, &n) in v.block[a * d..(a + 1) * d].iter_mut().zip(noise) {
                *acc += n;
            }
        }
    }

    #[inline]
    fn add_spread(&mut self, w: &[f64], s: &[f64], noise: &[f64]) {
        let mut tsum = 0.0;
        for l in 0..self.l {
            let wl = w[l];
            let wl2 = wl * wl;
            self.w1.block[l] += wl;
            self.w2.block[l] += wl2;
            tsum += wl * s[l];
            if self.width == 1 {
                let sl = s[l];
                self.s1.block[l] += wl * sl;
                self.s2.block[l] += wl2 * sl;
                self.s3.block[l] += wl2 * sl * sl;
            } else {
                let row = l * self.width;
                let s1 = &mut self.s1.block[row..row + self.width];
                let s2 = &mut self.s2.block[row..row + self.width];
                let s3 = &mut self.s3.block[row..row + self.width];
                for k in 0..self.width {
                    let sk = s[k];
                    let ws = wl2 * sk;
                    s1[k] += wl * sk;
                    s2[k] += ws;
                    s3[k] += ws * sk;
                }
            }
            if let Some(v) = &mut self.vectors {
                let d = noise.len();
                for (acc, &n) in v.block[l * d..(l + 1) * d].iter_mut().zip(noise) {
                    *acc += wl * n;
                }
            }
        }
        self.t.block[0] += tsum;
        self.t.block[1] += tsum * tsum;
    }
}

#[allow(clippy::too_many_arguments)]
fn run_chunk<W: Weighting, S: Source>(
    cfg: &ExperimentConfig,
    weighting: &W,
    l: usize,
    scope: CorrScope,
    vector_dim: Option<usize>,
    source: &S,
    index: u64,
    samples: u64,
) -> ChunkSums {
    let tracks_squares = weighting.beta() != f64::INFINITY;
    let mut acc = ChunkSums::new(l, scope, vector_dim, tracks_squares);
    let mut rng = rng::stream(cfg.seed, index);
    let mut noise = vec![0.0; source.noise_dim()];
    let mut s = vec![0.0; l];
    let mut w = vec![0.0; l];
    let mut since_flush = 0;
    for _ in 0..samples {
        source.draw(&mut rng, &mut noise, &mut s);
        match weighting.weigh(&s, &mut w) {
            Assigned::Single(a) => acc.add_single(a, &s, &noise),
            Assigned::Spread => acc.add_spread(&w, &s, &noise),
        }
        since_flush += 1;
        if since_flush == FLUSH_EVERY {
            acc.flush();
            since_flush = 0;
        }
    }
    acc.flush();
    acc
}

fn run_chunks<W: Weighting, S: Source>(
    cfg: &ExperimentConfig,
    weighting: &W,
    l: usize,
    scope: CorrScope,
    vector_dim: Option<usize>,
    source: &S,
) -> ChunkSums {
    let sizes = rng::block_sizes(cfg.m, cfg.chunks);
    let tracks_squares = weighting.beta() != f64::INFINITY;
    let mut total = ChunkSums::new(l, scope, vector_dim, tracks_squares);
    // Bounded waves keep at most one accumulator per worker alive; merging
    // stays in chunk order.
    let wave = rayon::current_num_threads().max(1);
    for start in (0..sizes.len()).step_by(wave) {
        let end = (start + wave).min(sizes.len());
        let parts: Vec<ChunkSums> = (start..end)
            .into_par_iter()
            .map(|i| run_chunk(cfg, weighting, l, scope, vector_dim, source, i as u64, sizes[i]))
            .collect();
        for p in &parts {
            total.merge(p);
        }
    }
    total
}

fn finish(
    acc: ChunkSums,
    cfg: &ExperimentConfig,
    beta: f64,
    mode: Mode,
    scope: CorrScope,
    set: Option<&TemplateSet>,
) -> AssignmentEstimate {
    let l = acc.l;
    let m = cfg.m as f64;
    let w1 = acc.w1.values();
    let s1 = acc.s1.values();
    let s3 = acc.s3.values();
    let (w2, s2) = if acc.tracks_squares {
        (acc.w2.values(), acc.s2.values())
    } else {
        (w1.clone(), s1.clone())
    };
    let total_w: f64 = w1.iter().sum();
    let mass: Vec<f64> = w1.iter().map(|w| w / total_w).collect();
    let defined: Vec<bool> = w1.iter().map(|&w| w > 0.0).collect();

    let mut corr = DMatrix::from_element(l, l, f64::NAN);
    let mut stderr = DMatrix::from_element(l, l, f64::NAN);
    let mut warnings = Vec::new();
    for r in 0..l {
        if !defined[r] {
            warnings.push(format!("cluster {r} is empty; its row is undefined"));
            continue;
        }
        let b = w1[r];
        let n_eff = b * b / w2[r];
        let cols: Vec<(usize, usize)> = match scope {
            CorrScope::Full => (0..l).map(|k| (k, r * l + k)).collect(),
            CorrScope::Diagonal => vec![(r, r)],
        };
        for (k, idx) in cols {
            let ratio = s1[idx] / b;
            let var = (s3[idx] - 2.0 * ratio * s2[idx] + ratio * ratio * w2[r]).max(0.0) / (b * b);
            corr[(r, k)] = ratio;
            stderr[(r, k)] = if n_eff > 1.0 {
                (var * n_eff / (n_eff - 1.0)).sqrt()
            } else {
                f64::INFINITY
            };
        }
    }

    let t = acc.t.values();
    let t_mean = t[0] / m;
    let t_var = if cfg.m > 1 {
        ((t[1] - m * t_mean * t_mean) / (m - 1.0)).max(0.0)
    } else {
        f64::INFINITY
    };
    let pooled = PooledStat {
        value: t_mean,
        stderr: (t_var / m).sqrt(),
    };

    let estimates = match (acc.vectors, set) {
        (Some(v), Some(set)) => {
            let d = set.dim();
            let sums = v.values();
            let est = DMatrix::from_fn(d, l, |i, j| {
                if defined[j] {
                    sums[j * d + i] / w1[j]
                } else {
                    f64::NAN
                }
            });
            // In full mode corr comes from the vectors themselves.
            let from_vectors = est.tr_mul(set.data());
            for r in (0..l).filter(|&r| defined[r]) {
                for k in 0..l {
                    corr[(r, k)] = from_vectors[(r, k)];
                }
            }
            Some(est)
        }
        _ => None,
    };

    AssignmentEstimate {
        mode,
        scope,
        estimates,
        corr,
        stderr,
        mass,
        defined,
        pooled,
        m: cfg.m,
        beta,
        seed: cfg.seed,
        chunks: cfg.chunks,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::{make_circulant, make_pair};

    #[test]
    fn softmax_is_stable_for_large_arguments() {
        let mut out = [0.0; 3];
        softmax_into(100.0, &[1000.0, 999.0, -1000.0], &mut out);
        assert!(out.iter().all(|v| v.is_finite()));
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(out[0] > 0.999);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::new(2, 4, 10).with_chunks(5);
        assert!(ok.validate().is_ok());
        assert!(ExperimentConfig::new(2, 4, 10).with_chunks(11).validate().is_err());
        assert!(ExperimentConfig::new(2, 4, 0).validate().is_err());
        assert!(ExperimentConfig::new(2, 4, 10).with_beta(-1.0).validate().is_err());
        assert!(ExperimentConfig::new(2, 4, 10)
            .with_mode(Mode::Full)
            .with_scope(CorrScope::Diagonal)
            .validate()
            .is_err());
    }

    #[test]
    fn soft_rejects_nonpositive_beta() {
        let set = make_pair(0.0, 2, 1.0).unwrap();
        let cfg = ExperimentConfig::for_set(&set, 100).with_beta(0.0);
        assert!(matches!(soft_assign(&set, &cfg), Err(Error::Domain(_))));
        let cfg = ExperimentConfig::for_set(&set, 100);
        assert!(matches!(soft_assign(&set, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_cluster_is_marked_not_nan() {
        // Two samples over four clusters: at least two clusters stay empty.
        let set = make_circulant(&[1.0, 0.0, 0.0, 0.0], 4, 1.0).unwrap();
        let cfg = ExperimentConfig::for_set(&set, 2).with_chunks(1);
        let est = hard_assign(&set, &cfg).unwrap();
        let empty: Vec<usize> = (0..4).filter(|&l| !est.is_defined(l)).collect();
        assert!(empty.len() >= 2);
        for &l in &empty {
            assert_eq!(est.corr(l, 0), None);
            assert_eq!(est.mass()[l], 0.0);
        }
        assert_eq!(est.warnings().len(), empty.len());
        assert!((est.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_sums_to_one_and_stderr_positive() {
        let set = make_pair(0.3, 2, 1.0).unwrap();
        for beta in [f64::INFINITY, 1.0] {
            let cfg = ExperimentConfig::for_set(&set, 5000).with_beta(beta).with_seed(3);
            let est = assign(&set, &cfg).unwrap();
            assert!((est.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for l in 0..2 {
                for k in 0..2 {
                    assert!(est.stderr(l, k).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn full_mode_corr_matches_vectors() {
        let set = make_circulant(&[1.0, 0.2, 0.2], 7, 1.3).unwrap();
        for beta in [f64::INFINITY, 0.7] {
            let cfg = ExperimentConfig::for_set(&set, 3000)
                .with_mode(Mode::Full)
                .with_beta(beta)
                .with_chunks(7);
            let est = assign(&set, &cfg).unwrap();
            let v = est.estimates().unwrap();
            for l in 0..3 {
                for k in 0..3 {
                    let direct = v.column(l).dot(&set.template(k));
                    let c = est.corr(l, k).unwrap();
                    assert!((c - direct).abs() <= 1e-9 * direct.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn diagonal_scope_matches_full_scope() {
        let g = GramModel::circulant(&[1.0, 0.1, 0.1], 1.0).unwrap();
        for beta in [f64::INFINITY, 2.0] {
            let base = ExperimentConfig::new(3, 0, 4000).with_beta(beta).with_seed(9);
            let full = assign_gram(&g, &base).unwrap();
            let diag = assign_gram(&g, &base.clone().with_scope(CorrScope::Diagonal)).unwrap();
            for l in 0..3 {
                let a = full.corr(l, l).unwrap();
                let b = diag.corr(l, l).unwrap();
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                assert_eq!(diag.corr(l, (l + 1) % 3), None);
            }
            assert_eq!(full.weighted_diagonal(), diag.weighted_diagonal());
        }
    }

    #[test]
    fn weighted_diagonal_equals_mass_times_corr() {
        let g = GramModel::equicorrelated(3, 0.25, 1.0).unwrap();
        for beta in [f64::INFINITY, 1.5] {
            let cfg = ExperimentConfig::new(3, 0, 20_000).with_beta(beta).with_seed(1);
            let est = assign_gram(&g, &cfg).unwrap();
            let direct: f64 = (0..3).map(|l| est.mass()[l] * est.corr(l, l).unwrap()).sum();
            assert!((direct - est.weighted_diagonal().value).abs() < 1e-12);
        }
    }
}
