//! Posterior expected loss.
//!
//! For a clustering `C` the new target links to cluster `k` with CR weight
//! `m_k` (or `m0` for a fresh cluster `c_0`), and its activities are
//! independent Bernoulli draws from the cluster's Beta posterior means. From
//! that follow the link distribution `p_k`, the per-clustering posterior
//! mean `theta_tilde`, and the predictive mass `p(x_A | x0, C)`. Posterior
//! means marginal over clusterings (`theta_hat`) are obtained by
//! self-normalized re-weighting of clusterings sampled from `p(C | x0)`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::dpmm::{sample_index, Clustering, Hyperparams, PosteriorEnsemble};
use crate::error::{invalid, BoiseError, Result};
use crate::ranker::top_set;
use crate::rng;
use crate::scalar::{log_sum_exp, Real};
use crate::selector::InformerObjective;

/// Informer compounds with their binary outcomes on the new target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InformerAssay {
    informers: Vec<usize>,
    outcomes: Vec<bool>,
}

impl InformerAssay {
    pub fn new(informers: Vec<usize>, outcomes: Vec<bool>, n_compounds: usize) -> Result<Self> {
        if informers.len() != outcomes.len() {
            return invalid(format!("{} informers but {} outcomes", informers.len(), outcomes.len()));
        }
        let mut seen = vec![false; n_compounds];
        for &j in &informers {
            if j >= n_compounds {
                return invalid(format!("informer {j} out of range for {n_compounds} compounds"));
            }
            if std::mem::replace(&mut seen[j], true) {
                return invalid(format!("duplicate informer {j}"));
            }
        }
        Ok(Self { informers, outcomes })
    }

    pub fn empty() -> Self {
        Self { informers: Vec::new(), outcomes: Vec::new() }
    }

    pub fn informers(&self) -> &[usize] {
        &self.informers
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.informers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.informers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.informers.iter().copied().zip(self.outcomes.iter().copied())
    }

    /// Outcome for compound `j` if it is an informer.
    pub fn outcome_of(&self, j: usize) -> Option<bool> {
        self.informers.iter().position(|&i| i == j).map(|p| self.outcomes[p])
    }

    pub(crate) fn describe(&self) -> String {
        self.iter()
            .map(|(j, x)| format!("c{j}={}", u8::from(x)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Distribution of the new target's cluster: `p[0]` is the fresh cluster
/// `c_0`, `p[k + 1]` is existing cluster `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDistribution<T = f64> {
    pub p: Vec<T>,
}

impl<T: Real> LinkDistribution<T> {
    pub fn probs(&self) -> &[T] {
        &self.p
    }
}

/// Unnormalized log link weights, `ln m_k + sum_{j in A} ln P(x_j | c_k)`,
/// in `LinkDistribution` order.
pub fn log_link_weights<T: Real>(clustering: &Clustering, hyper: &Hyperparams<T>, assay: &InformerAssay) -> Vec<T> {
    let mut w = Vec::with_capacity(clustering.num_clusters() + 1);
    let mut fresh = hyper.m0.ln();
    for (_, x) in assay.iter() {
        fresh = fresh + hyper.log_predictive(0, 0, x);
    }
    w.push(fresh);
    for k in 0..clustering.num_clusters() {
        let mut lw = T::from_count(clustering.size(k)).ln();
        for (j, x) in assay.iter() {
            lw = lw + hyper.log_predictive(clustering.actives(k, j), clustering.inactives(k, j), x);
        }
        w.push(lw);
    }
    w
}

pub fn link_distribution<T: Real>(
    clustering: &Clustering,
    hyper: &Hyperparams<T>,
    assay: &InformerAssay,
) -> LinkDistribution<T> {
    let mut w = log_link_weights(clustering, hyper, assay);
    crate::scalar::normalize_log_weights(&mut w);
    LinkDistribution { p: w }
}

/// `E(theta_{i*,j} | C, x0, x_A)` for every compound, given the link
/// distribution for this clustering and assay.
pub fn theta_tilde_all<T: Real>(
    clustering: &Clustering,
    hyper: &Hyperparams<T>,
    assay: &InformerAssay,
    link: &LinkDistribution<T>,
) -> Vec<T> {
    let n = clustering.num_compounds();
    let mut out = vec![T::zero(); n];
    let mut extra = vec![None; n];
    for (j, x) in assay.iter() {
        extra[j] = Some(x);
    }
    for (slot, &pk) in link.p.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            let (a, b) = if slot == 0 {
                (hyper.alpha0, hyper.beta0)
            } else {
                clustering.beta_params(slot - 1, j, hyper)
            };
            let mean = match extra[j] {
                None => a / (a + b),
                Some(x) => (a + if x { T::one() } else { T::zero() }) / (a + b + T::one()),
            };
            *o = *o + pk * mean;
        }
    }
    out
}

pub fn theta_tilde<T: Real>(clustering: &Clustering, hyper: &Hyperparams<T>, assay: &InformerAssay, j: usize) -> T {
    let link = link_distribution(clustering, hyper, assay);
    theta_tilde_all(clustering, hyper, assay, &link)[j]
}

/// `ln p(x_A | x0, C)`: CR-weighted mixture over clusters of the product
/// Bernoulli mass.
pub fn log_p_xa_given_x0_c<T: Real>(clustering: &Clustering, hyper: &Hyperparams<T>, assay: &InformerAssay) -> T {
    let m = T::from_count(clustering.num_targets());
    log_sum_exp(&log_link_weights(clustering, hyper, assay)) - (m + hyper.m0).ln()
}

pub fn p_xa_given_x0_c<T: Real>(clustering: &Clustering, hyper: &Hyperparams<T>, assay: &InformerAssay) -> T {
    log_p_xa_given_x0_c(clustering, hyper, assay).exp()
}

fn draw_link<T: Real, R: Rng + ?Sized>(clustering: &Clustering, hyper: &Hyperparams<T>, rng: &mut R) -> usize {
    let total = T::from_count(clustering.num_targets()) + hyper.m0;
    let mut probs = Vec::with_capacity(clustering.num_clusters() + 1);
    probs.push(hyper.m0 / total);
    probs.extend(clustering.sizes().iter().map(|&s| T::from_count(s) / total));
    sample_index(&probs, rng)
}

fn draw_outcome<T: Real, R: Rng + ?Sized>(
    clustering: &Clustering,
    hyper: &Hyperparams<T>,
    slot: usize,
    j: usize,
    rng: &mut R,
) -> bool {
    let p = if slot == 0 {
        hyper.base_rate()
    } else {
        hyper.active_prob(clustering.actives(slot - 1, j), clustering.inactives(slot - 1, j))
    };
    T::lit(rng.random::<f64>()) < p
}

/// Draws `x_A ~ p(x_A | x0, C)`: a link first, then independent Bernoulli
/// outcomes for each informer.
pub fn sample_intermediate<T: Real, R: Rng + ?Sized>(
    clustering: &Clustering,
    hyper: &Hyperparams<T>,
    informers: &[usize],
    rng: &mut R,
) -> Vec<bool> {
    let slot = draw_link(clustering, hyper, rng);
    informers.iter().map(|&j| draw_outcome(clustering, hyper, slot, j, rng)).collect()
}

/// Draws a complete predictive row `x_{i*}` for all compounds. Restricting it
/// to any informer set gives a draw from `p(x_A | x0, C)`.
pub fn sample_predictive_row<T: Real, R: Rng + ?Sized>(
    clustering: &Clustering,
    hyper: &Hyperparams<T>,
    rng: &mut R,
) -> Vec<bool> {
    let all: Vec<usize> = (0..clustering.num_compounds()).collect();
    sample_intermediate(clustering, hyper, &all, rng)
}

/// `E(theta_{i*,j} | x0, x_A)` for all compounds by recycling the ensemble:
/// each clustering's `theta_tilde` weighted by `p(x_A | x0, C)` normalized
/// over the ensemble.
pub fn theta_hat_all<T: Real>(ensemble: &PosteriorEnsemble<T>, assay: &InformerAssay) -> Result<Vec<T>> {
    if ensemble.is_empty() {
        return invalid("empty ensemble");
    }
    let hyper = &ensemble.hyper;
    let log_mass: Vec<T> = ensemble
        .samples
        .iter()
        .map(|c| log_p_xa_given_x0_c(c, hyper, assay))
        .collect();
    let weights = recycle_weights(&log_mass, assay)?;
    let mut out = vec![T::zero(); ensemble.num_compounds()];
    for (c, w) in ensemble.samples.iter().zip(weights) {
        let link = link_distribution(c, hyper, assay);
        for (o, t) in out.iter_mut().zip(theta_tilde_all(c, hyper, assay, &link)) {
            *o = *o + w * t;
        }
    }
    Ok(out.into_iter().map(|v| v.min(T::one()).max(T::zero())).collect())
}

pub fn theta_hat<T: Real>(ensemble: &PosteriorEnsemble<T>, assay: &InformerAssay, j: usize) -> Result<T> {
    Ok(theta_hat_all(ensemble, assay)?[j])
}

fn recycle_weights<T: Real>(log_mass: &[T], assay: &InformerAssay) -> Result<Vec<T>> {
    let lse = log_sum_exp(log_mass);
    if !lse.is_finite() {
        return Err(BoiseError::ZeroPredictiveMass { outcome: assay.describe() });
    }
    Ok(log_mass.iter().map(|&l| (l - lse).exp()).collect())
}

/// `sum_{j in T*} (1 - theta_hat_j)` with `T*` the top `n_top` compounds.
///
/// Losses are summed in sorted order so the result does not depend on which
/// compound indices hold the values.
pub fn pel2_from_theta<T: Real>(theta_hat: &[T], n_top: usize) -> T {
    let mut losses: Vec<T> = top_set(theta_hat, n_top)
        .into_iter()
        .map(|j| T::one() - theta_hat[j])
        .collect();
    losses.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    losses.into_iter().sum()
}

pub fn pel2<T: Real>(ensemble: &PosteriorEnsemble<T>, assay: &InformerAssay, n_top: usize) -> Result<T> {
    check_top(ensemble.num_compounds(), n_top)?;
    Ok(pel2_from_theta(&theta_hat_all(ensemble, assay)?, n_top))
}

/// Monte-Carlo `PEL_1(x0, A)` with a fresh engine. Prefer [`PelEngine`] when
/// scoring many informer sets against the same ensemble.
pub fn pel1<T: Real>(
    ensemble: &PosteriorEnsemble<T>,
    informers: &[usize],
    n_top: usize,
    config: &Pel1Config,
) -> Result<T> {
    PelEngine::new(ensemble, n_top, config)?.pel1(informers)
}

fn check_top(n: usize, n_top: usize) -> Result<()> {
    if n_top == 0 || n_top > n {
        return invalid(format!("top-set size {n_top} must be in 1..={n}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pel1Config {
    /// Predictive draws per ensemble member.
    pub draws_per_sample: usize,
    pub seed: u64,
}

impl Default for Pel1Config {
    fn default() -> Self {
        Self { draws_per_sample: 1, seed: 0 }
    }
}

pub(crate) struct SampleCache<T> {
    /// `ln m0`, then `ln m_k`.
    log_size: Vec<T>,
    /// Row-major `(K + 1) x n`, slot 0 being the fresh cluster.
    a: Vec<T>,
    ab: Vec<T>,
    log_p1: Vec<T>,
    log_p0: Vec<T>,
}

impl<T: Real> SampleCache<T> {
    pub(crate) fn new(c: &Clustering, hyper: &Hyperparams<T>) -> Self {
        let n = c.num_compounds();
        let slots = c.num_clusters() + 1;
        let mut cache = Self {
            log_size: Vec::with_capacity(slots),
            a: Vec::with_capacity(slots * n),
            ab: Vec::with_capacity(slots * n),
            log_p1: Vec::with_capacity(slots * n),
            log_p0: Vec::with_capacity(slots * n),
        };
        cache.log_size.push(hyper.m0.ln());
        cache.log_size.extend(c.sizes().iter().map(|&s| T::from_count(s).ln()));
        for slot in 0..slots {
            for j in 0..n {
                let (a, b) = if slot == 0 {
                    (hyper.alpha0, hyper.beta0)
                } else {
                    c.beta_params(slot - 1, j, hyper)
                };
                cache.a.push(a);
                cache.ab.push(a + b);
                cache.log_p1.push((a / (a + b)).ln());
                cache.log_p0.push((b / (a + b)).ln());
            }
        }
        cache
    }

    fn slots(&self) -> usize {
        self.log_size.len()
    }

    /// Log link weights with outcomes read from a full predictive row.
    pub(crate) fn log_weights_row(&self, n: usize, informers: &[usize], row: &[bool], out: &mut Vec<T>) {
        out.clear();
        for slot in 0..self.slots() {
            let base = slot * n;
            let mut lw = self.log_size[slot];
            for &j in informers {
                lw = lw + if row[j] { self.log_p1[base + j] } else { self.log_p0[base + j] };
            }
            out.push(lw);
        }
    }

    pub(crate) fn log_weights(&self, n: usize, assay: &InformerAssay, out: &mut Vec<T>) {
        out.clear();
        for slot in 0..self.slots() {
            let base = slot * n;
            let mut lw = self.log_size[slot];
            for (j, x) in assay.iter() {
                lw = lw + if x { self.log_p1[base + j] } else { self.log_p0[base + j] };
            }
            out.push(lw);
        }
    }
}

/// Scores informer sets by Monte-Carlo `PEL_1` against a fixed ensemble.
///
/// Predictive rows are drawn once per ensemble member when the engine is
/// built and restricted to each candidate informer set, so every candidate
/// is scored with the same random numbers.
pub struct PelEngine<'a, T: Real> {
    ensemble: &'a PosteriorEnsemble<T>,
    n_top: usize,
    caches: Vec<SampleCache<T>>,
    aux: Vec<Vec<bool>>,
}

impl<'a, T: Real> PelEngine<'a, T> {
    pub fn new(ensemble: &'a PosteriorEnsemble<T>, n_top: usize, config: &Pel1Config) -> Result<Self> {
        if ensemble.is_empty() {
            return invalid("empty ensemble");
        }
        check_top(ensemble.num_compounds(), n_top)?;
        if config.draws_per_sample == 0 {
            return invalid("draws_per_sample must be at least 1");
        }
        let caches = ensemble
            .samples
            .iter()
            .map(|c| SampleCache::new(c, &ensemble.hyper))
            .collect();
        let mut rng = rng::seeded(config.seed);
        let mut aux = Vec::with_capacity(ensemble.len() * config.draws_per_sample);
        for c in &ensemble.samples {
            for _ in 0..config.draws_per_sample {
                aux.push(sample_predictive_row(c, &ensemble.hyper, &mut rng));
            }
        }
        Ok(Self { ensemble, n_top, caches, aux })
    }

    pub fn ensemble(&self) -> &PosteriorEnsemble<T> {
        self.ensemble
    }

    pub fn n_top(&self) -> usize {
        self.n_top
    }

    pub fn predictive_rows(&self) -> &[Vec<bool>] {
        &self.aux
    }

    pub fn theta_hat_all(&self, assay: &InformerAssay) -> Result<Vec<T>> {
        let n = self.ensemble.num_compounds();
        let mut lw = Vec::new();
        let mut links = Vec::with_capacity(self.caches.len());
        let mut log_mass = Vec::with_capacity(self.caches.len());
        for cache in &self.caches {
            cache.log_weights(n, assay, &mut lw);
            let lse = log_sum_exp(&lw);
            log_mass.push(lse);
            links.push(lw.iter().map(|&v| (v - lse).exp()).collect::<Vec<T>>());
        }
        let weights = recycle_weights(&log_mass, assay)?;
        let mut out = vec![T::zero(); n];
        for ((cache, link), w) in self.caches.iter().zip(&links).zip(weights) {
            if w == T::zero() {
                continue;
            }
            for (slot, &pk) in link.iter().enumerate() {
                let coef = w * pk;
                let base = slot * n;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = *o + coef * cache.a[base + j] / cache.ab[base + j];
                }
                for (j, x) in assay.iter() {
                    let a = cache.a[base + j];
                    let ab = cache.ab[base + j];
                    let bumped = (a + if x { T::one() } else { T::zero() }) / (ab + T::one());
                    out[j] = out[j] + coef * (bumped - a / ab);
                }
            }
        }
        Ok(out.into_iter().map(|v| v.min(T::one()).max(T::zero())).collect())
    }

    pub fn pel2(&self, assay: &InformerAssay) -> Result<T> {
        Ok(pel2_from_theta(&self.theta_hat_all(assay)?, self.n_top))
    }

    /// Distinct predictive outcomes on `informers` with their multiplicities.
    pub fn outcome_counts(&self, informers: &[usize]) -> BTreeMap<Vec<bool>, usize> {
        let mut counts = BTreeMap::new();
        for row in &self.aux {
            let key: Vec<bool> = informers.iter().map(|&j| row[j]).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
        counts
    }

    /// `PEL_1(x0, A)`: `PEL_2` computed once per distinct predictive outcome,
    /// averaged with multiplicity weights.
    pub fn pel1(&self, informers: &[usize]) -> Result<T> {
        let n = self.ensemble.num_compounds();
        let counts: Vec<(Vec<bool>, usize)> = self.outcome_counts(informers).into_iter().collect();
        let losses = counts
            .par_iter()
            .map(|(outcome, _)| {
                let assay = InformerAssay::new(informers.to_vec(), outcome.clone(), n)?;
                self.pel2(&assay)
            })
            .collect::<Result<Vec<T>>>()?;
        let total = T::from_count(self.aux.len());
        Ok(counts
            .iter()
            .zip(losses)
            .map(|((_, c), l)| T::from_count(*c) * l)
            .sum::<T>()
            / total)
    }
}

impl<T: Real> InformerObjective<T> for PelEngine<'_, T> {
    fn num_compounds(&self) -> usize {
        self.ensemble.num_compounds()
    }

    fn score(&self, informers: &[usize]) -> Result<T> {
        self.pel1(informers)
    }
}
