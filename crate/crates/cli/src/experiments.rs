//! Named experiments. Each reads its parameters from a [`Config`] and
//! returns check rows plus any tables.

use std::path::{Path, PathBuf};

use bias_lab::engine::{assign, assign_gram, AssignmentEstimate, CorrScope, ExperimentConfig, Mode};
use bias_lab::io::{load_templates, render_pgm, write_csv_matrix, LoadOptions, Pgm, TemplateFormat};
use bias_lab::oracle::{hard_moments, hard_moments_exact, hard_moments_quadrature, ibp_check, soft_moments, soft_moments_quadrature};
use bias_lab::templates::{make_circulant, make_exponential, make_haar_family, make_pair, make_random};
use bias_lab::theory::{
    beta_zero_limit_gram, gumbel_constants, hard_pair_prediction, soft_finite_prediction, soft_pair_prediction,
};
use bias_lab::{GramModel, OracleResult, TemplateSet};
use nalgebra::DMatrix;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::report::{Outcome, Relation, Row, Table};

pub const EXPERIMENTS: &[&str] = &[
    "assign",
    "pair_hard",
    "pair_soft",
    "beta_large",
    "beta_small",
    "random_sets",
    "oracle_agreement",
    "average_dependency",
    "individual_dependency",
    "span",
    "finite_l",
    "gumbel_sweep",
    "soft_asymptotic",
    "oracle_checks",
    "bias_demo",
];

/// Where experiments may write images and vectors.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
}

pub fn run_experiment(name: &str, c: &Config, ctx: &Context) -> Result<Outcome> {
    match name {
        "assign" => assign_experiment(c, ctx),
        "pair_hard" => pair_hard(c),
        "pair_soft" => pair_soft(c),
        "beta_large" => beta_large(c),
        "beta_small" => beta_small(c),
        "random_sets" => random_sets(c),
        "oracle_agreement" => oracle_agreement(c),
        "average_dependency" => average_dependency(c),
        "individual_dependency" => individual_dependency(c),
        "span" => span(c),
        "finite_l" => finite_l(c),
        "gumbel_sweep" => gumbel_sweep(c),
        "soft_asymptotic" => soft_asymptotic(c),
        "oracle_checks" => oracle_checks(c),
        "bias_demo" => bias_demo(c, ctx),
        other => Err(CliError::UnknownExperiment(other.to_string())),
    }
}

fn engine_config(c: &Config, l: usize, d: usize, m: u64, beta: f64, seed: u64) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(l, d, m).with_beta(beta).with_seed(seed);
    if let Some(chunks) = c.get::<u64>("chunks")? {
        cfg = cfg.with_chunks(chunks);
    }
    Ok(cfg)
}

fn label(beta: f64) -> String {
    if beta.is_infinite() {
        "hard".into()
    } else {
        format!("soft(beta={beta})")
    }
}

fn oracle(g: &GramModel, beta: f64, l: usize, precision: f64) -> Result<OracleResult> {
    Ok(if beta.is_infinite() {
        hard_moments(g, l, precision)?
    } else {
        soft_moments(g, beta, l, precision)?
    })
}

fn entry(est: &AssignmentEstimate, l: usize, k: usize) -> (f64, f64) {
    (
        est.corr(l, k).unwrap_or(f64::NAN),
        est.stderr(l, k).unwrap_or(f64::NAN),
    )
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn random_gram(l: usize, max_rho: f64, norm: f64, seed: u64) -> Result<GramModel> {
    Ok(make_random(l, l + 4, max_rho, norm, seed)?.gram()?)
}

/// Engine `corr` entries against the oracle ratio, tolerance
/// `3 (stderr + ratio bound)`.
fn oracle_rows(exp: &str, case: &str, est: &AssignmentEstimate, g: &GramModel, beta: f64, tol: Option<f64>) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for l in 0..g.len() {
        let o = oracle(g, beta, l, 1e-6)?;
        let ratio = o.ratio();
        let rb = o.ratio_bound();
        for (k, &r) in ratio.iter().enumerate() {
            let (m, se) = entry(est, l, k);
            rows.push(
                Row::new(exp, case, format!("corr[{l}][{k}]"))
                    .measured(m, se)
                    .reference(r, rb, format!("oracle:{}", o.method))
                    .check(Relation::Within, tol.unwrap_or(3.0 * (se + rb))),
            );
        }
    }
    Ok(rows)
}

fn pair_hard(c: &Config) -> Result<Outcome> {
    const EXP: &str = "pair_hard";
    let rhos = c.list_or("rho", vec![-1.0, -0.5, 0.0, 0.5, 0.9, 0.99])?;
    let m = c.samples(1_000_000)?;
    let norm = c.get_or("norm", 1.0)?;
    let seed = c.seed()?;
    let tol: Option<f64> = c.get("tol")?;
    let mut out = Outcome::default();
    let mut table = Table::new(
        EXP,
        &["rho", "measured_corr00[norm^2]", "stderr[norm^2]", "predicted[norm^2]", "mass0[prob]"],
    );
    for (i, &rho) in rhos.iter().enumerate() {
        let cfg = engine_config(c, 2, 2, m, f64::INFINITY, seed.wrapping_add(i as u64))?;
        let est = if rho <= -1.0 {
            assign(&make_pair(rho, 2, norm)?, &cfg.with_mode(Mode::Full))?
        } else {
            assign_gram(&GramModel::equicorrelated(2, rho, norm)?, &cfg)?
        };
        let pred = hard_pair_prediction(rho, norm)?;
        let case = format!("rho={rho}");
        let (c00, s00) = entry(&est, 0, 0);
        out.rows.push(
            Row::new(EXP, &case, "corr[0][0]")
                .measured(c00, s00)
                .reference(pred.predicted_corr[(0, 0)], 0.0, format!("theory:{}", pred.formula))
                .check(Relation::Within, tol.unwrap_or(3.0 * s00)),
        );
        for k in 0..2 {
            let (a, _) = entry(&est, 0, k);
            let (b, sb) = entry(&est, 1, k);
            out.rows.push(
                Row::new(EXP, &case, format!("corr[1][{k}]"))
                    .measured(b, sb)
                    .reference(-a, 0.0, "engine:antisymmetry")
                    .check(Relation::Within, 3.0 * sb),
            );
        }
        table.push(vec![
            fmt(rho),
            fmt(c00),
            fmt(s00),
            fmt(pred.predicted_corr[(0, 0)]),
            fmt(est.mass()[0]),
        ]);
    }
    out.tables.push(table);
    Ok(out)
}

fn pair_soft(c: &Config) -> Result<Outcome> {
    const EXP: &str = "pair_soft";
    let rhos = c.list_or("rho", vec![0.0, 0.5, 0.9])?;
    let m = c.samples(1_000_000)?;
    let norm = c.get_or("norm", 1.0)?;
    let beta = c.beta(1.0)?;
    let seed = c.seed()?;
    let tol: Option<f64> = c.get("tol")?;
    let mut out = Outcome::default();
    for (i, &rho) in rhos.iter().enumerate() {
        let g = GramModel::equicorrelated(2, rho, norm)?;
        let est = assign_gram(&g, &engine_config(c, 2, 2, m, beta, seed.wrapping_add(i as u64))?)?;
        let case = format!("rho={rho}");
        out.rows.extend(oracle_rows(EXP, &case, &est, &g, beta, tol)?);
        if beta == 1.0 {
            let p = soft_pair_prediction(rho, norm)?;
            let (c00, s00) = entry(&est, 0, 0);
            out.rows.push(
                Row::new(EXP, &case, "corr[0][0]")
                    .measured(c00, s00)
                    .reference(p.predicted_corr[(0, 0)], 0.0, format!("theory:{}", p.formula)),
            );
        }
    }
    Ok(out)
}

fn beta_large(c: &Config) -> Result<Outcome> {
    const EXP: &str = "beta_large";
    let l = c.get_or("L", 3)?;
    let m = c.samples(1_000_000)?;
    let beta = c.beta(100.0)?;
    let seed = c.seed()?;
    let g = random_gram(l, c.get_or("max_rho", 0.8)?, c.get_or("norm", 1.0)?, seed)?;
    let hard = assign_gram(&g, &engine_config(c, l, l, m, f64::INFINITY, seed)?)?;
    let soft = assign_gram(&g, &engine_config(c, l, l, m, beta, seed)?)?;
    let tol: Option<f64> = c.get("tol")?;
    let mut out = Outcome::default();
    for i in 0..l {
        for k in 0..l {
            let (s, se) = entry(&soft, i, k);
            let (h, he) = entry(&hard, i, k);
            out.rows.push(
                Row::new(EXP, format!("L={l},beta={beta}"), format!("corr[{i}][{k}]"))
                    .measured(s, se)
                    .reference(h, he, "engine:hard")
                    .check(Relation::Within, tol.unwrap_or((5.0 * se).max(0.01))),
            );
        }
    }
    Ok(out)
}

fn beta_small(c: &Config) -> Result<Outcome> {
    const EXP: &str = "beta_small";
    let l = c.get_or("L", 4)?;
    let m = c.samples(10_000_000)?;
    let beta = c.beta(1e-3)?;
    let g = GramModel::identity(l, c.get_or("norm", 1.0)?)?;
    let est = assign_gram(&g, &engine_config(c, l, l, m, beta, c.seed()?)?)?;
    let pred = beta_zero_limit_gram(&g);
    let mut out = Outcome::default();
    for i in 0..l {
        for k in 0..l {
            let (v, se) = entry(&est, i, k);
            out.rows.push(
                Row::new(EXP, format!("L={l},beta={beta}"), format!("corr[{i}][{k}]/beta"))
                    .measured(v / beta, se / beta)
                    .reference(pred.predicted_corr[(i, k)], 0.0, format!("theory:{}", pred.formula))
                    .check(Relation::Within, 5.0 * se / beta),
            );
        }
    }
    Ok(out)
}

/// Template sets with `L = 2, 3, …, 6` in turn.
fn random_sets(c: &Config) -> Result<Outcome> {
    const EXP: &str = "random_sets";
    let sets = c.get_or("sets", 50usize)?;
    let m = c.samples(1_000_000)?;
    let max_rho = c.get_or("max_rho", 0.8)?;
    let d = c.get::<usize>("d")?;
    let beta = c.beta(1.0)?;
    let seed = c.seed()?;
    let mut out = Outcome::default();
    for s in 0..sets {
        let l = 2 + s % 5;
        let set = make_random(l, d.unwrap_or(l + 4), max_rho, c.get_or("norm", 1.0)?, seed.wrapping_add(s as u64))?;
        let g = set.gram()?;
        for b in [f64::INFINITY, beta] {
            let est = assign_gram(&g, &engine_config(c, l, set.dim(), m, b, seed.wrapping_add(s as u64))?)?;
            let case = format!("set={s},L={l},{}", label(b));
            for i in 0..l {
                let (v, se) = entry(&est, i, i);
                out.rows.push(
                    Row::new(EXP, &case, format!("corr[{i}][{i}]"))
                        .measured(v, se)
                        .reference(0.0, 0.0, "engine:positive_correlation")
                        .check(Relation::Above, 3.0 * se),
                );
                if b.is_infinite() {
                    for k in (0..l).filter(|&k| k != i) {
                        let (w, we) = entry(&est, i, k);
                        out.rows.push(
                            Row::new(EXP, &case, format!("corr[{i}][{i}]-corr[{i}][{k}]"))
                                .measured(v - w, se + we)
                                .reference(0.0, 0.0, "engine:consistency")
                                .check(Relation::Above, 3.0 * (se + we)),
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Engine against oracle on random Grams with `L ∈ {2, 3}`.
fn oracle_agreement(c: &Config) -> Result<Outcome> {
    const EXP: &str = "oracle_agreement";
    let sets = c.get_or("sets", 20usize)?;
    let m = c.samples(1_000_000)?;
    let beta = c.beta(1.0)?;
    let seed = c.seed()?;
    let tol: Option<f64> = c.get("tol")?;
    let mut out = Outcome::default();
    for s in 0..sets {
        let l = 2 + s % 2;
        let g = random_gram(l, c.get_or("max_rho", 0.8)?, c.get_or("norm", 1.0)?, seed.wrapping_add(s as u64))?;
        for b in [f64::INFINITY, beta] {
            let est = assign_gram(&g, &engine_config(c, l, l, m, b, seed.wrapping_add(s as u64))?)?;
            out.rows.extend(oracle_rows(EXP, &format!("set={s},L={l},{}", label(b)), &est, &g, b, tol)?);
        }
    }
    Ok(out)
}

/// `Σ_ℓ mass_ℓ corr[ℓ][ℓ]` for equicorrelated Grams at two correlation levels.
fn average_dependency(c: &Config) -> Result<Outcome> {
    const EXP: &str = "average_dependency";
    let ls = c.list_or("L", vec![2usize, 3, 4])?;
    let rho = c.list_or("rho", vec![0.0, 0.5])?;
    if rho.len() != 2 || rho[0] >= rho[1] {
        return Err(CliError::Config("`rho` must list a lower then a higher correlation".into()));
    }
    let m = c.samples(1_000_000)?;
    let beta = c.beta(1.0)?;
    let norm = c.get_or("norm", 1.0)?;
    let seed = c.seed()?;
    let mut out = Outcome::default();
    for &l in &ls {
        for b in [f64::INFINITY, beta] {
            let pooled = |r: f64| -> Result<_> {
                let g = GramModel::equicorrelated(l, r, norm)?;
                Ok(assign_gram(&g, &engine_config(c, l, l, m, b, seed)?)?.weighted_diagonal())
            };
            let (x, y) = (pooled(rho[0])?, pooled(rho[1])?);
            let case = format!("L={l},{}", label(b));
            out.rows.push(
                Row::new(EXP, &case, format!("pooled(rho={})-pooled(rho={})", rho[0], rho[1]))
                    .measured(x.value, x.stderr)
                    .reference(y.value, y.stderr, "engine:ordering")
                    .check(Relation::Above, 3.0 * (x.stderr + y.stderr)),
            );
            if l == 2 && b.is_infinite() {
                for (r, p) in [(rho[0], x), (rho[1], y)] {
                    let pred = hard_pair_prediction(r, norm)?;
                    out.rows.push(
                        Row::new(EXP, &case, format!("pooled(rho={r})"))
                            .measured(p.value, p.stderr)
                            .reference(pred.predicted_corr[(0, 0)], 0.0, format!("theory:{}", pred.formula))
                            .check(Relation::Within, 3.0 * p.stderr),
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Per-cluster ordering for circulant Grams.
fn individual_dependency(c: &Config) -> Result<Outcome> {
    const EXP: &str = "individual_dependency";
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = match (c.list::<f64>("rho_seq")?, c.list::<f64>("rho_seq_hi")?) {
        (Some(a), Some(b)) => vec![(a, b)],
        (None, None) => vec![
            (vec![1.0, 0.0, 0.0], vec![1.0, 0.4, 0.4]),
            (vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.4, 0.4, 0.4]),
        ],
        _ => return Err(CliError::Config("give both `rho_seq` and `rho_seq_hi` or neither".into())),
    };
    let m = c.samples(1_000_000)?;
    let beta = c.beta(1.0)?;
    let norm = c.get_or("norm", 1.0)?;
    let seed = c.seed()?;
    let mut out = Outcome::default();
    for (lo, hi) in &pairs {
        if lo.len() != hi.len() {
            return Err(CliError::Config("`rho_seq` and `rho_seq_hi` differ in length".into()));
        }
        let l = lo.len();
        let (gx, gy) = (GramModel::circulant(lo, norm)?, GramModel::circulant(hi, norm)?);
        for b in [f64::INFINITY, beta] {
            let cfg = engine_config(c, l, l, m, b, seed)?;
            let (ex, ey) = (assign_gram(&gx, &cfg)?, assign_gram(&gy, &cfg)?);
            let case = format!("{lo:?}vs{hi:?},{}", label(b));
            for i in 0..l {
                let ((x, xs), (y, ys)) = (entry(&ex, i, i), entry(&ey, i, i));
                out.rows.push(
                    Row::new(EXP, &case, format!("corr[{i}][{i}]"))
                        .measured(x, xs)
                        .reference(y, ys, "engine:ordering")
                        .check(Relation::Above, 3.0 * (xs + ys)),
                );
            }
        }
    }
    Ok(out)
}

/// Root mean square over clusters of the out-of-span fraction.
pub fn rms_span_residual(est: &AssignmentEstimate, set: &TemplateSet) -> Result<f64> {
    let r = bias_lab::engine::span_residual(est, set)?;
    let v: Vec<f64> = r.into_iter().flatten().collect();
    Ok((v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt())
}

fn span(c: &Config) -> Result<Outcome> {
    const EXP: &str = "span";
    let l = c.get_or("L", 3)?;
    let d = c.get_or("d", 50)?;
    let ms = c.samples_list(vec![10_000, 1_000_000])?;
    if ms.len() != 2 || ms[0] >= ms[1] {
        return Err(CliError::Config("`M` must list a smaller then a larger sample size".into()));
    }
    let beta = c.beta(f64::INFINITY)?;
    let seed = c.seed()?;
    let set = make_random(l, d, c.get_or("max_rho", 0.5)?, c.get_or("norm", 1.0)?, seed)?;
    let mut res = Vec::new();
    let mut out = Outcome::default();
    let mut table = Table::new(EXP, &["M[samples]", "rms_span_residual[fraction]"]);
    for &m in &ms {
        let est = assign(&set, &engine_config(c, l, d, m, beta, seed)?.with_mode(Mode::Full))?;
        let r = rms_span_residual(&est, &set)?;
        table.push(vec![m.to_string(), fmt(r)]);
        res.push(r);
    }
    let case = format!("L={l},d={d},{}", label(beta));
    let expected = (ms[1] as f64 / ms[0] as f64).sqrt();
    out.rows.push(
        Row::new(EXP, &case, format!("residual(M={})/residual(M={})", ms[0], ms[1]))
            .unit("ratio")
            .measured(res[0] / res[1], 0.0)
            .reference(expected, 0.0, "engine:sqrt_M_scaling")
            .check(Relation::Relative, c.get_or("ratio_tol", 0.3)?),
    );
    out.rows.push(
        Row::new(EXP, &case, format!("residual(M={})", ms[1]))
            .unit("fraction")
            .measured(res[1], 0.0)
            .reference(c.get_or("tol", 0.1)?, 0.0, "engine:span")
            .check(Relation::Below, 0.0),
    );
    out.tables.push(table);
    Ok(out)
}

/// Soft assignment on orthonormal templates against the oracle; the
/// finite-`L` approximation is reported alongside.
fn finite_l(c: &Config) -> Result<Outcome> {
    const EXP: &str = "finite_l";
    let l = c.get_or("L", 3)?;
    let m = c.samples(1_000_000)?;
    let beta = c.beta(1.0)?;
    let g = GramModel::identity(l, c.get_or("norm", 1.0)?)?;
    let est = assign_gram(&g, &engine_config(c, l, l, m, beta, c.seed()?)?)?;
    let case = format!("L={l},beta={beta}");
    let mut out = Outcome::default();
    out.rows.extend(oracle_rows(EXP, &case, &est, &g, beta, c.get("tol")?)?);
    if beta == 1.0 {
        let p = soft_finite_prediction(&g)?;
        let o = oracle(&g, beta, 0, 1e-6)?;
        out.rows.push(
            Row::new(EXP, &case, "corr[0][0]")
                .measured(p.predicted_corr[(0, 0)], 0.0)
                .reference(o.ratio()[0], o.ratio_bound(), format!("theory:{} vs oracle:{}", p.formula, o.method)),
        );
    }
    Ok(out)
}

/// Hard assignment on (near-)orthogonal circulant sets of growing size.
fn gumbel_sweep(c: &Config) -> Result<Outcome> {
    const EXP: &str = "gumbel_sweep";
    let ls = c.list_or("L", vec![16usize, 64, 256, 1024, 4096])?;
    let m = c.samples(1_000_000)?;
    let neighbour = c.get_or("rho", 0.0)?;
    let norm = c.get_or("norm", 1.0)?;
    let seed = c.seed()?;
    let mut out = Outcome::default();
    let mut table = Table::new(
        EXP,
        &[
            "L",
            "measured[norm]",
            "stderr[norm]",
            "oracle[norm]",
            "oracle_bound[norm]",
            "oracle_method",
            "a_L",
            "b_L",
            "ratio[measured/a_L]",
        ],
    );
    let mut ratios = Vec::new();
    for &l in &ls {
        let mut seq = vec![0.0; l];
        seq[0] = 1.0;
        seq[1] = neighbour;
        seq[l - 1] = neighbour;
        let g = GramModel::circulant(&seq, norm)?;
        let cfg = engine_config(c, l, l, m, f64::INFINITY, seed)?.with_scope(CorrScope::Diagonal);
        let p = assign_gram(&g, &cfg)?.weighted_diagonal();
        let (v, se) = (p.value / norm, p.stderr / norm);
        let o = hard_moments(&g, 0, 1e-4 * norm)?;
        let (ov, ob) = (o.ratio()[0] / norm, o.ratio_bound() / norm);
        let gc = gumbel_constants(l as u64)?;
        let ratio = v / gc.a;
        out.rows.push(
            Row::new(EXP, format!("L={l}"), "pooled_corr/norm")
                .unit("norm")
                .measured(v, se)
                .reference(ov, ob, format!("oracle:{}", o.method))
                .check(Relation::Within, 3.0 * (se + ob)),
        );
        table.push(vec![
            l.to_string(),
            fmt(v),
            fmt(se),
            fmt(ov),
            fmt(ob),
            o.method.to_string(),
            fmt(gc.a),
            fmt(gc.b),
            fmt(ratio),
        ]);
        ratios.push((l, ratio, se / gc.a));
    }
    for w in ratios.windows(2) {
        let ((l0, r0, s0), (l1, r1, s1)) = (w[0], w[1]);
        out.rows.push(
            Row::new(EXP, format!("L={l0}->L={l1}"), "|ratio-1|")
                .unit("ratio")
                .measured((r0 - 1.0).abs(), s0)
                .reference((r1 - 1.0).abs(), s1, "theory:gumbel_scale")
                .check(Relation::Above, 0.0),
        );
    }
    let target = c.get_or("ratio_tol", 0.15)?;
    if let Some(&(l, r, s)) = ratios.iter().find(|x| x.0 == 4096) {
        out.rows.push(
            Row::new(EXP, format!("L={l}"), "ratio")
                .unit("ratio")
                .measured(r, s)
                .reference(1.0, 0.0, "theory:gumbel_scale")
                .check(Relation::Within, target),
        );
    }
    out.tables.push(table);
    Ok(out)
}

fn soft_asymptotic(c: &Config) -> Result<Outcome> {
    const EXP: &str = "soft_asymptotic";
    let l = c.get_or("L", 256)?;
    let m = c.samples(10_000_000)?;
    let beta = c.beta(1.0)?;
    let g = GramModel::identity(l, c.get_or("norm", 1.0)?)?;
    let cfg = engine_config(c, l, l, m, beta, c.seed()?)?.with_scope(CorrScope::Diagonal);
    let est = assign_gram(&g, &cfg)?;
    let diag: Vec<(f64, f64)> = (0..l).map(|i| entry(&est, i, i)).collect();
    let lo = diag.iter().copied().fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let hi = diag.iter().copied().fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let case = format!("L={l},beta={beta}");
    let (lo_bound, hi_bound) = (0.95, 1.01);
    let mid = 0.5 * (lo_bound + hi_bound);
    let half = 0.5 * (hi_bound - lo_bound);
    let mut out = Outcome::default();
    for (q, (v, se)) in [("min_l corr[l][l]", lo), ("max_l corr[l][l]", hi)] {
        out.rows.push(
            Row::new(EXP, &case, q)
                .measured(v, se)
                .reference(mid, 0.0, "theory:soft_consistency_range")
                .check(Relation::Within, half),
        );
    }
    if beta == 1.0 {
        let p = soft_finite_prediction(&g)?;
        let pooled = est.weighted_diagonal();
        out.rows.push(
            Row::new(EXP, &case, "pooled corr[l][l]")
                .measured(pooled.value, pooled.stderr)
                .reference(p.predicted_corr[(0, 0)], 0.0, format!("theory:{}", p.formula)),
        );
    }
    Ok(out)
}

/// Internal consistency of the oracle: integration by parts, the exact
/// pair formula, and uniform circulant masses.
fn oracle_checks(c: &Config) -> Result<Outcome> {
    const EXP: &str = "oracle_checks";
    let sets = c.get_or("sets", 10usize)?;
    let seed = c.seed()?;
    let mut out = Outcome::default();
    for s in 0..sets {
        let l = 2 + s % 2;
        let beta = 0.5 + 4.5 * s as f64 / (sets.max(2) - 1) as f64;
        let g = random_gram(l, 0.8, 1.0, seed.wrapping_add(s as u64))?;
        for i in 0..l {
            let chk = ibp_check(&g, beta, i)?;
            out.rows.push(
                Row::new(EXP, format!("set={s},L={l},beta={beta}"), format!("ibp_residual[{i}]"))
                    .measured(chk.residual, 0.0)
                    .reference(0.0, chk.bound, "oracle:quadrature")
                    .check(Relation::Within, 1e-6),
            );
        }
    }
    for rho in [-0.9, -0.5, 0.0, 0.5, 0.9, 0.99] {
        let g = GramModel::equicorrelated(2, rho, 1.0)?;
        let e = hard_moments_exact(&g, 0)?;
        let q = hard_moments_quadrature(&g, 0, 80)?;
        let gap = e
            .value
            .iter()
            .zip(&q.value)
            .map(|(a, b)| (a - b).abs())
            .fold((e.mass - q.mass).abs(), f64::max);
        out.rows.push(
            Row::new(EXP, format!("rho={rho}"), "max|exact-quadrature|")
                .measured(gap, 0.0)
                .reference(0.0, q.error_bound, "oracle:exact")
                .check(Relation::Within, 1e-8),
        );
    }
    for seq in [vec![1.0, 0.3, 0.3], vec![1.0, -0.4, -0.4], vec![1.0, 0.2, -0.1, 0.2]] {
        let g = GramModel::circulant(&seq, 1.5)?;
        let l = seq.len();
        for beta in [0.5, 2.0, 5.0] {
            let t = soft_moments_quadrature(&g, beta, if l <= 3 { 320 } else { 64 })?;
            for i in 0..l {
                out.rows.push(
                    Row::new(EXP, format!("circulant{seq:?},beta={beta}"), format!("E[p_{i}]"))
                        .unit("prob")
                        .measured(t.e_p[i], 0.0)
                        .reference(1.0 / l as f64, t.error_bound, "oracle:quadrature")
                        .check(Relation::Within, t.error_bound.max(1e-12)),
                );
            }
        }
    }
    Ok(out)
}

/// A template set and, for images, its width and height.
type Shaped = (TemplateSet, Option<(usize, usize)>);

fn load_set(c: &Config) -> Result<Option<Shaped>> {
    let norm = c.get_or("norm", 1.0)?;
    let opts = LoadOptions {
        norm,
        ..LoadOptions::default()
    };
    if let Some(dir) = c.raw("template_dir") {
        let dir = Path::new(dir);
        let set = load_templates(dir, TemplateFormat::Pgm, &opts)?;
        return Ok(Some((set, Some(pgm_shape(dir)?))));
    }
    if let Some(file) = c.raw("template_csv") {
        let set = load_templates(Path::new(file), TemplateFormat::Csv, &opts)?;
        return Ok(Some((set, None)));
    }
    Ok(None)
}

/// Width and height of the first `.pgm` file (by name) in `dir`.
fn pgm_shape(dir: &Path) -> Result<(usize, usize)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    let first = files
        .first()
        .ok_or_else(|| CliError::Config(format!("no .pgm files in {}", dir.display())))?;
    let pgm = Pgm::read(first)?;
    Ok((pgm.width, pgm.height))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

/// Full-mode run on a directory of PGM templates; writes one estimator
/// image per template. Templates are mean-subtracted and scaled to `norm`.
fn bias_demo(c: &Config, ctx: &Context) -> Result<Outcome> {
    const EXP: &str = "bias_demo";
    if c.raw("template_dir").is_none() {
        return Err(CliError::Config("bias_demo needs `template_dir`".into()));
    }
    let (set, shape) = load_set(c)?.expect("template_dir is set");
    let (w, h) = shape.expect("PGM templates have a shape");
    let m = c.samples(200_000)?;
    let beta = c.beta(f64::INFINITY)?;
    let cfg = engine_config(c, set.len(), set.dim(), m, beta, c.seed()?)?.with_mode(Mode::Full);
    let est = assign(&set, &cfg)?;
    let vectors = est.estimates().expect("full mode keeps estimates");
    let dir = ctx.out_dir.join(EXP);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
    let l = set.len();
    let mut out = Outcome::default();
    let mut table = Table::new(
        "pearson",
        &std::iter::once("estimator".to_string())
            .chain((0..l).map(|k| format!("template_{}[pearson]", set.label(k))))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    let templates: Vec<Vec<f64>> = (0..l).map(|k| set.template(k).iter().copied().collect()).collect();
    for i in 0..l {
        let v: Vec<f64> = vectors.column(i).iter().copied().collect();
        let path = dir.join(format!("{}.pgm", set.label(i)));
        if est.is_defined(i) {
            render_pgm(&v, w, h, &path).map_err(|e| CliError::output(&path, e))?;
            out.artifacts.push(path);
        }
        let p: Vec<f64> = templates.iter().map(|t| pearson(&v, t)).collect();
        for k in (0..l).filter(|&k| k != i) {
            out.rows.push(
                Row::new(EXP, set.label(i), format!("pearson(own)-pearson({})", set.label(k)))
                    .unit("pearson")
                    .measured(p[i], 0.0)
                    .reference(p[k], 0.0, "engine:consistency")
                    .check(Relation::Above, 0.0),
            );
        }
        table.push(std::iter::once(set.label(i)).chain(p.iter().map(|x| fmt(*x))).collect());
    }
    out.tables.push(table);
    Ok(out)
}

/// Template set from the configuration: `template_dir`, `template_csv`,
/// `rho_seq` (circulant), `alpha` (Haar-rotated exponential), `rho` (pair),
/// or orthonormal.
fn configured_set(c: &Config) -> Result<Shaped> {
    if let Some(s) = load_set(c)? {
        return Ok(s);
    }
    let norm = c.get_or("norm", 1.0)?;
    if let Some(seq) = c.list::<f64>("rho_seq")? {
        let d = c.get_or("d", seq.len())?;
        return Ok((make_circulant(&seq, d, norm)?, None));
    }
    if let Some(alpha) = c.get::<f64>("alpha")? {
        let d = c.get_or("d", 64)?;
        let l = c.get_or("L", 4)?;
        let x0 = make_exponential(d, alpha, norm)?;
        return Ok((make_haar_family(&x0, l, c.seed()?)?, None));
    }
    if let Some(rho) = c.get::<f64>("rho")? {
        return Ok((make_pair(rho, c.get_or("d", 2)?, norm)?, None));
    }
    let l = c.get_or("L", 2)?;
    let d = c.get_or("d", l)?;
    if d < l {
        return Err(CliError::Config(format!("orthonormal templates need d >= L, got d = {d}, L = {l}")));
    }
    let data = DMatrix::from_fn(d, l, |i, j| if i == j { norm } else { 0.0 });
    Ok((TemplateSet::new(data, None)?, None))
}

/// One engine run on a configured template set. Writes `corr`, `stderr`
/// and `mass`; in full mode also the estimate vectors (and images when a
/// shape is known). Gram-mode runs with `L ≤ 6` are checked against the
/// oracle.
fn assign_experiment(c: &Config, ctx: &Context) -> Result<Outcome> {
    const EXP: &str = "assign";
    let (set, shape) = configured_set(c)?;
    let mode = match c.raw("mode").unwrap_or("gram") {
        "gram" => Mode::Gram,
        "full" => Mode::Full,
        other => return Err(CliError::Config(format!("mode must be `gram` or `full`, got `{other}`"))),
    };
    let beta = c.beta(f64::INFINITY)?;
    let m = c.samples(1_000_000)?;
    let l = set.len();
    let cfg = engine_config(c, l, set.dim(), m, beta, c.seed()?)?.with_mode(mode);
    let est = assign(&set, &cfg)?;
    let mut out = Outcome::default();
    let mut header = vec!["cluster".to_string(), "mass[prob]".to_string()];
    header.extend((0..l).map(|k| format!("corr_{k}[norm^2]")));
    header.extend((0..l).map(|k| format!("stderr_{k}[norm^2]")));
    let mut table = Table::new("corr", &header.iter().map(String::as_str).collect::<Vec<_>>());
    for i in 0..l {
        let mut row = vec![i.to_string(), fmt(est.mass()[i])];
        row.extend((0..l).map(|k| fmt(entry(&est, i, k).0)));
        row.extend((0..l).map(|k| fmt(entry(&est, i, k).1)));
        table.push(row);
    }
    out.tables.push(table);
    if mode == Mode::Gram && l <= bias_lab::oracle::MAX_QUADRATURE_L {
        let g = set.gram()?;
        out.rows.extend(oracle_rows(EXP, &label(beta), &est, &g, beta, c.get("tol")?)?);
    } else {
        for i in 0..l {
            let (v, se) = entry(&est, i, i);
            out.rows.push(
                Row::new(EXP, label(beta), format!("corr[{i}][{i}]"))
                    .measured(v, se)
                    .reference(0.0, 0.0, "engine:positive_correlation")
                    .check(Relation::Above, 3.0 * se),
            );
        }
    }
    if let Some(vectors) = est.estimates() {
        let path = ctx.out_dir.join("assign_estimates.csv");
        let labels: Vec<String> = (0..l).map(|k| set.label(k)).collect();
        write_csv_matrix(&path, vectors, Some(&labels)).map_err(|e| CliError::output(&path, e))?;
        out.artifacts.push(path);
        let shape = shape.or(match (c.get("width")?, c.get("height")?) {
            (Some(w), Some(h)) => Some((w, h)),
            _ => None,
        });
        if let Some((w, h)) = shape {
            for i in (0..l).filter(|&i| est.is_defined(i)) {
                let v: Vec<f64> = vectors.column(i).iter().copied().collect();
                let path = ctx.out_dir.join(format!("assign_{}.pgm", set.label(i)));
                render_pgm(&v, w, h, &path).map_err(|e| CliError::output(&path, e))?;
                out.artifacts.push(path);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> Outcome {
        let dir = std::env::temp_dir();
        let c = Config::parse(text).unwrap();
        run_experiment(c.experiment().unwrap(), &c, &Context { out_dir: dir }).unwrap()
    }

    #[test]
    fn unknown_experiment() {
        let c = Config::parse("experiment = nope").unwrap();
        let err = run_experiment("nope", &c, &Context { out_dir: ".".into() }).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn pair_hard_small_run_passes() {
        let o = run("experiment = pair_hard\nM = 200000\nrho = -1, 0.5");
        assert!(o.all_passed(), "{:?}", o.failures().collect::<Vec<_>>());
        assert_eq!(o.rows.len(), 6);
        assert_eq!(o.tables[0].rows.len(), 2);
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn assign_checks_against_oracle() {
        let o = run("experiment = assign\nrho_seq = 1, 0.2, 0.2\nM = 200000\nbeta = 2");
        assert_eq!(o.rows.len(), 9);
        assert!(o.all_passed());
    }
}
