//! Top-set rule, full compound ranking, and centroid coding of continuous
//! informer readouts.

use std::cmp::Ordering;
use std::io::Write;

use crate::dpmm::PosteriorEnsemble;
use crate::error::{invalid, Result};
use crate::pel::{theta_hat_all, InformerAssay};
use crate::scalar::Real;

fn desc_then_index<T: PartialOrd>(scores: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Compound indices by decreasing score, ties by lowest index.
pub fn rank_order<T: PartialOrd>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(desc_then_index(scores));
    idx
}

/// The `n_top` compounds with largest posterior means, in rank order.
pub fn top_set<T: PartialOrd>(theta_hat: &[T], n_top: usize) -> Vec<usize> {
    let n_top = n_top.min(theta_hat.len());
    let mut idx: Vec<usize> = (0..theta_hat.len()).collect();
    if n_top < idx.len() && n_top > 0 {
        idx.select_nth_unstable_by(n_top - 1, desc_then_index(theta_hat));
    }
    idx.truncate(n_top);
    idx.sort_by(desc_then_index(theta_hat));
    idx
}

/// A total order over compounds with the score each one received.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking<T = f64> {
    /// Compound indices, best first.
    pub order: Vec<usize>,
    /// Score per compound index.
    pub scores: Vec<T>,
}

impl<T: PartialOrd + Copy> Ranking<T> {
    pub fn from_scores(scores: Vec<T>) -> Self {
        Self { order: rank_order(&scores), scores }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank per compound index.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.order.len()];
        for (pos, &j) in self.order.iter().enumerate() {
            r[j] = pos + 1;
        }
        r
    }

    /// Scores in rank order.
    pub fn ordered_scores(&self) -> Vec<T> {
        self.order.iter().map(|&j| self.scores[j]).collect()
    }

    /// Keeps compounds with `keep[j]`, renumbered densely in index order.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let mut new_index = vec![usize::MAX; keep.len()];
        let mut scores = Vec::new();
        for (j, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            new_index[j] = scores.len();
            scores.push(self.scores[j]);
        }
        let order = self.order.iter().filter(|&&j| keep[j]).map(|&j| new_index[j]).collect();
        Self { order, scores }
    }
}

/// Ranks every compound by `E(theta_{i*,j} | x0, x_A)`.
pub fn rank_all<T: Real>(ensemble: &PosteriorEnsemble<T>, assay: &InformerAssay) -> Result<Ranking<T>> {
    Ok(Ranking::from_scores(theta_hat_all(ensemble, assay)?))
}

/// Writes `compound,score,rank,informer` rows in rank order.
pub fn write_ranking_csv<W: Write, T: Real>(
    writer: W,
    ranking: &Ranking<T>,
    compound_ids: &[String],
    informers: &[usize],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["compound", "score", "rank", "informer"])?;
    for (pos, &j) in ranking.order.iter().enumerate() {
        w.write_record([
            compound_ids[j].clone(),
            format!("{}", ranking.scores[j]),
            (pos + 1).to_string(),
            u8::from(informers.contains(&j)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Maps continuous informer readouts to a binary outcome: training rows are
/// grouped by their binary informer pattern, each group gets the centroid
/// of its continuous rows, and the pattern of the nearest centroid
/// (Euclidean) is returned. Ties go to the pattern seen first in row order.
pub fn encode_intermediate<T: Real>(z_a: &[T], z_train: &[Vec<T>], x_train: &[Vec<bool>]) -> Result<Vec<bool>> {
    if z_train.is_empty() {
        return invalid("centroid coding needs at least one training row");
    }
    if z_train.len() != x_train.len() {
        return invalid("continuous and binary training rows are not aligned");
    }
    let width = z_a.len();
    if z_train.iter().any(|r| r.len() != width) || x_train.iter().any(|r| r.len() != width) {
        return invalid(format!("training rows must have {width} informer columns"));
    }
    let mut patterns: Vec<(Vec<bool>, Vec<T>, usize)> = Vec::new();
    for (z, x) in z_train.iter().zip(x_train) {
        let slot = match patterns.iter().position(|(p, _, _)| p == x) {
            Some(s) => s,
            None => {
                patterns.push((x.clone(), vec![T::zero(); width], 0));
                patterns.len() - 1
            }
        };
        let (_, sum, count) = &mut patterns[slot];
        for (s, &v) in sum.iter_mut().zip(z) {
            *s = *s + v;
        }
        *count += 1;
    }
    let mut best: Option<(T, usize)> = None;
    for (slot, (_, sum, count)) in patterns.iter().enumerate() {
        let c = T::from_count(*count);
        let d2: T = sum.iter().zip(z_a).map(|(&s, &z)| (z - s / c).powi(2)).sum();
        if best.is_none_or(|(bd, _)| d2 < bd) {
            best = Some((d2, slot));
        }
    }
    Ok(patterns[best.expect("patterns nonempty").1].0.clone())
}
