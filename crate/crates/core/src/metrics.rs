//! Ranking metrics against revealed truth, and the frequent-hitters baseline.
//!
//! Every metric reads a [`Ranking`] (order plus scores) and a truth vector
//! indexed by compound.

use rand::Rng;

use crate::error::{invalid, BoiseError, Result};
use crate::matrix::BioactivityMatrix;
use crate::ranker::{rank_order, Ranking};

fn check(ranking: &Ranking<impl Copy>, truth: &[bool]) -> Result<usize> {
    if ranking.order.len() != truth.len() {
        return invalid(format!("ranking covers {} compounds, truth has {}", ranking.order.len(), truth.len()));
    }
    let actives = truth.iter().filter(|&&t| t).count();
    if actives == 0 {
        return Err(BoiseError::UndefinedMetric("no active compounds".into()));
    }
    Ok(actives)
}

fn top_decile(n: usize) -> Result<usize> {
    if n < 10 {
        return Err(BoiseError::UndefinedMetric(format!("top decile undefined for n = {n}")));
    }
    Ok(n / 10)
}

/// 10% enrichment factor: hit rate in the top `floor(n/10)` over the overall
/// hit rate.
pub fn ef10<T: Copy>(ranking: &Ranking<T>, truth: &[bool]) -> Result<f64> {
    let actives = check(ranking, truth)?;
    let n = truth.len();
    let top = top_decile(n)?;
    let hits = ranking.order[..top].iter().filter(|&&j| truth[j]).count();
    Ok((hits as f64 / top as f64) / (actives as f64 / n as f64))
}

/// Largest achievable EF10 for this truth vector.
pub fn ef10_max(truth: &[bool]) -> Result<f64> {
    let n = truth.len();
    let top = top_decile(n)?;
    let actives = truth.iter().filter(|&&t| t).count();
    if actives == 0 {
        return Err(BoiseError::UndefinedMetric("no active compounds".into()));
    }
    Ok((actives.min(top) as f64 / top as f64) / (actives as f64 / n as f64))
}

/// Normalized EF10, `(1 + (EF10 - 1) / (EF10_max - 1)) / 2`: random guessing
/// scores 0.5 and a perfect ranking 1.0.
pub fn nef10<T: Copy>(ranking: &Ranking<T>, truth: &[bool]) -> Result<f64> {
    let ef = ef10(ranking, truth)?;
    let max = ef10_max(truth)?;
    if (max - 1.0).abs() < 1e-12 {
        return Err(BoiseError::UndefinedMetric("EF10 maximum equals the random baseline".into()));
    }
    Ok((1.0 + (ef - 1.0) / (max - 1.0)) / 2.0)
}

/// Area under the ROC step curve. Compounds with equal scores form one
/// block, contributing a trapezoid.
pub fn rocauc<T: Copy + PartialEq>(ranking: &Ranking<T>, truth: &[bool]) -> Result<f64> {
    let pos = check(ranking, truth)?;
    let neg = truth.len() - pos;
    if neg == 0 {
        return Err(BoiseError::UndefinedMetric("no inactive compounds".into()));
    }
    // twice the area in units of 1/(pos * neg), accumulated exactly
    let mut area2: u128 = 0;
    let mut tp: u128 = 0;
    let mut start = 0;
    while start < ranking.order.len() {
        let score = ranking.scores[ranking.order[start]];
        let mut end = start;
        let (mut dp, mut dn) = (0u128, 0u128);
        while end < ranking.order.len() && ranking.scores[ranking.order[end]] == score {
            if truth[ranking.order[end]] {
                dp += 1;
            } else {
                dn += 1;
            }
            end += 1;
        }
        area2 += dn * (2 * tp + dp);
        tp += dp;
        start = end;
    }
    Ok(area2 as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

/// Confusion matrices for predicting the top `t` as active, `t = 1..=n`.
fn prefix_splits(ranking: &Ranking<impl Copy>, truth: &[bool]) -> Result<Vec<Confusion>> {
    let pos = check(ranking, truth)?;
    let n = truth.len();
    if pos == n {
        return Err(BoiseError::UndefinedMetric("no inactive compounds".into()));
    }
    let mut out = Vec::with_capacity(n);
    let (mut tp, mut fp) = (0, 0);
    for &j in &ranking.order {
        if truth[j] {
            tp += 1;
        } else {
            fp += 1;
        }
        out.push(Confusion { tp, fp, fn_: pos - tp, tn: n - pos - fp });
    }
    Ok(out)
}

fn mcc(c: Confusion) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom
    }
}

fn f1(c: Confusion) -> f64 {
    let d = 2 * c.tp + c.fn_ + c.fp;
    if d == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / d as f64
    }
}

/// Best Matthews correlation over prefix splits of the ranking. Splits with a
/// zero denominator score 0.
pub fn mcc_best_split<T: Copy>(ranking: &Ranking<T>, truth: &[bool]) -> Result<f64> {
    Ok(prefix_splits(ranking, truth)?.into_iter().map(mcc).fold(f64::NEG_INFINITY, f64::max))
}

/// Best F1 over prefix splits of the ranking.
pub fn f1_best_split<T: Copy>(ranking: &Ranking<T>, truth: &[bool]) -> Result<f64> {
    Ok(prefix_splits(ranking, truth)?.into_iter().map(f1).fold(0.0, f64::max))
}

/// The `n_informers` compounds active on the most training targets.
pub fn frequent_hitters(x0: &BioactivityMatrix, n_informers: usize) -> Result<Vec<usize>> {
    if n_informers > x0.ncols() {
        return invalid(format!("{n_informers} informers requested from {} compounds", x0.ncols()));
    }
    let sums = x0.column_sums();
    let mut order = rank_order(&sums);
    order.truncate(n_informers);
    Ok(order)
}

/// Uniformly random informer set, for a chance-level baseline.
pub fn random_informers<R: Rng + ?Sized>(n_compounds: usize, n_informers: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n_informers > n_compounds {
        return invalid(format!("{n_informers} informers requested from {n_compounds} compounds"));
    }
    Ok(rand::seq::index::sample(rng, n_compounds, n_informers).into_vec())
}
