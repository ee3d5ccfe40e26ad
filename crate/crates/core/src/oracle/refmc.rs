//! Reference Monte Carlo with antithetic pairs `(z, -z)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::soft::softmax;
use super::{check_beta, check_index, Method, OracleResult, SAMPLE_BUDGET};
use crate::error::{Error, Result};
use crate::gram::GramModel;
use crate::rng::{block_sizes, stream, ORACLE_STREAM_BASE};

const CHUNKS: u64 = 64;
const PILOT_PAIRS: u64 = 1 << 16;
const SIZING_SEED: u64 = 0x5eed;

/// `hard_moments` from `pairs` antithetic pairs; the bound is a 3σ CLT
/// half-width covering every entry.
pub fn hard_moments_refmc(g: &GramModel, l: usize, pairs: u64, seed: u64) -> Result<OracleResult> {
    check_index(g, l)?;
    Ok(run(g, l, pairs, seed, |s, _| hard_weight(s, l)))
}

/// `soft_moments` from `pairs` antithetic pairs.
pub fn soft_moments_refmc(g: &GramModel, beta: f64, l: usize, pairs: u64, seed: u64) -> Result<OracleResult> {
    check_index(g, l)?;
    check_beta(beta)?;
    Ok(run(g, l, pairs, seed, |s, p| {
        softmax(beta, s, p);
        p[l]
    }))
}

pub(crate) fn hard_sized(g: &GramModel, l: usize, precision: f64) -> Result<OracleResult> {
    sized(precision, |pairs| hard_moments_refmc(g, l, pairs, SIZING_SEED))
}

pub(crate) fn soft_sized(g: &GramModel, beta: f64, l: usize, precision: f64) -> Result<OracleResult> {
    sized(precision, |pairs| soft_moments_refmc(g, beta, l, pairs, SIZING_SEED))
}

fn sized(precision: f64, run: impl Fn(u64) -> Result<OracleResult>) -> Result<OracleResult> {
    let pilot = run(PILOT_PAIRS)?;
    if pilot.error_bound <= precision {
        return Ok(pilot);
    }
    let ratio = pilot.error_bound / precision;
    let need = (PILOT_PAIRS as f64 * ratio * ratio * 1.1).ceil();
    if need > SAMPLE_BUDGET as f64 {
        let achieved = pilot.error_bound * (PILOT_PAIRS as f64 / SAMPLE_BUDGET as f64).sqrt();
        return Err(Error::Budget { target: precision, achieved });
    }
    let r = run(need as u64)?;
    if r.error_bound > precision {
        return Err(Error::Budget { target: precision, achieved: r.error_bound });
    }
    Ok(r)
}

fn hard_weight(s: &[f64], l: usize) -> f64 {
    let mut best = 0;
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = i;
        }
    }
    if best == l {
        1.0
    } else {
        0.0
    }
}

fn run<W>(g: &GramModel, l: usize, pairs: u64, seed: u64, weight: W) -> OracleResult
where
    W: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    let big_l = g.len();
    let width = big_l + 1;
    let sizes = block_sizes(pairs.max(2), CHUNKS);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = sizes
        .par_iter()
        .enumerate()
        .map(|(c, &n)| {
            let mut rng = stream(seed, ORACLE_STREAM_BASE + c as u64);
            let mut z = vec![0.0; big_l];
            let mut s = vec![0.0; big_l];
            let mut neg = vec![0.0; big_l];
            let mut p = vec![0.0; big_l];
            let mut sum = vec![0.0; width];
            let mut sq = vec![0.0; width];
            for _ in 0..n {
                z.iter_mut().for_each(|zi| *zi = rng.sample(StandardNormal));
                g.project(&z, &mut s);
                neg.iter_mut().zip(&s).for_each(|(a, b)| *a = -b);
                let w_pos = weight(&s, &mut p);
                let w_neg = weight(&neg, &mut p);
                for k in 0..big_l {
                    let v = 0.5 * s[k] * (w_pos - w_neg);
                    sum[k] += v;
                    sq[k] += v * v;
                }
                let m = 0.5 * (w_pos + w_neg);
                sum[big_l] += m;
                sq[big_l] += m * m;
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    for (a, b) in parts {
        sum.iter_mut().zip(a).for_each(|(t, v)| *t += v);
        sq.iter_mut().zip(b).for_each(|(t, v)| *t += v);
    }
    let n = pairs.max(2) as f64;
    let mean: Vec<f64> = sum.iter().map(|v| v / n).collect();
    let sigma = mean
        .iter()
        .zip(&sq)
        .map(|(m, q)| ((q / n - m * m).max(0.0) * n / (n - 1.0)).sqrt())
        .fold(0.0f64, f64::max);
    let _ = l;
    OracleResult {
        value: mean[..big_l].to_vec(),
        mass: mean[big_l],
        error_bound: (3.0 * sigma / n.sqrt()).max(f64::EPSILON),
        method: Method::RefMc,
        nodes_or_samples: 2 * pairs.max(2),
    }
}
