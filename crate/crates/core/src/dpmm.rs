//! Chinese-restaurant prior over target partitions and the collapsed Gibbs
//! sampler for `p(C | x0)` under the Beta-Bernoulli cluster model.
//!
//! Clusters carry integer counts of observed actives and inactives per
//! compound; the Beta posterior parameters are `a = alpha0 + actives` and
//! `b = beta0 + inactives`. Unobserved cells contribute nothing.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BoiseError, Result};
use crate::matrix::BioactivityMatrix;
use crate::rng::{self, BoiseRng};
use crate::scalar::{normalize_log_weights, Real};

const DETACHED: usize = usize::MAX;

/// Candidate prior masses searched by [`choose_hyperparams`].
pub const DEFAULT_M0_GRID: [f64; 8] = [1.0, 2.0, 3.0, 5.0, 10.0, 15.0, 20.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams<T = f64> {
    pub m0: T,
    pub alpha0: T,
    pub beta0: T,
}

impl<T: Real> Hyperparams<T> {
    pub fn new(m0: T, alpha0: T, beta0: T) -> Result<Self> {
        for (name, v) in [("m0", m0), ("alpha0", alpha0), ("beta0", beta0)] {
            if !(v.is_finite() && v > T::zero()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(Self { m0, alpha0, beta0 })
    }

    /// Prior activity rate `alpha0 / (alpha0 + beta0)`.
    pub fn base_rate(&self) -> T {
        self.alpha0 / (self.alpha0 + self.beta0)
    }

    /// Posterior-predictive `P(x = 1)` for a cluster with the given counts.
    #[inline]
    pub fn active_prob(&self, actives: u32, inactives: u32) -> T {
        let a = self.alpha0 + T::from_u32(actives).unwrap();
        let b = self.beta0 + T::from_u32(inactives).unwrap();
        a / (a + b)
    }

    /// `ln P(x)` under the posterior predictive of a cluster with the given counts.
    #[inline]
    pub fn log_predictive(&self, actives: u32, inactives: u32, x: bool) -> T {
        let a = self.alpha0 + T::from_u32(actives).unwrap();
        let b = self.beta0 + T::from_u32(inactives).unwrap();
        if x {
            (a / (a + b)).ln()
        } else {
            (b / (a + b)).ln()
        }
    }

    pub fn cast<U: Real>(&self) -> Hyperparams<U> {
        Hyperparams {
            m0: U::lit(self.m0.as_f64()),
            alpha0: U::lit(self.alpha0.as_f64()),
            beta0: U::lit(self.beta0.as_f64()),
        }
    }
}

/// A partition of the targets with cached per-cluster activity counts.
///
/// Clusters are kept nonempty. After [`Clustering::canonicalize`] (and for
/// every clustering returned by this crate) cluster ids are ordered by their
/// smallest member, so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    labels: Vec<usize>,
    sizes: Vec<usize>,
    actives: Vec<u32>,
    inactives: Vec<u32>,
    n: usize,
}

impl Clustering {
    /// Builds a clustering from arbitrary labels (any ids, relabelled
    /// canonically) and computes counts from `x`.
    pub fn from_labels(labels: &[usize], x: &BioactivityMatrix) -> Result<Self> {
        if labels.len() != x.nrows() {
            return invalid(format!("{} labels for {} targets", labels.len(), x.nrows()));
        }
        let canon = canonical_labels(labels);
        let k = canon.iter().copied().max().map_or(0, |v| v + 1);
        let n = x.ncols();
        let mut c = Self {
            labels: canon,
            sizes: vec![0; k],
            actives: vec![0; k * n],
            inactives: vec![0; k * n],
            n,
        };
        for i in 0..x.nrows() {
            let lab = c.labels[i];
            c.sizes[lab] += 1;
            c.add_counts(lab, i, x);
        }
        Ok(c)
    }

    pub fn one_cluster(x: &BioactivityMatrix) -> Self {
        Self::from_labels(&vec![0; x.nrows()], x).expect("label count matches")
    }

    pub fn singletons(x: &BioactivityMatrix) -> Self {
        Self::from_labels(&(0..x.nrows()).collect::<Vec<_>>(), x).expect("label count matches")
    }

    pub fn num_targets(&self) -> usize {
        self.labels.len()
    }

    pub fn num_compounds(&self) -> usize {
        self.n
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    /// Cluster of target `i`, `None` while it is detached for a Gibbs update.
    pub fn label(&self, i: usize) -> Option<usize> {
        let l = self.labels[i];
        (l != DETACHED).then_some(l)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn actives(&self, k: usize, j: usize) -> u32 {
        self.actives[k * self.n + j]
    }

    #[inline]
    pub fn inactives(&self, k: usize, j: usize) -> u32 {
        self.inactives[k * self.n + j]
    }

    /// Beta posterior parameters `(a_kj, b_kj)`.
    pub fn beta_params<T: Real>(&self, k: usize, j: usize, hyper: &Hyperparams<T>) -> (T, T) {
        (
            hyper.alpha0 + T::from_u32(self.actives(k, j)).unwrap(),
            hyper.beta0 + T::from_u32(self.inactives(k, j)).unwrap(),
        )
    }

    fn add_counts(&mut self, k: usize, i: usize, x: &BioactivityMatrix) {
        let base = k * self.n;
        for j in 0..self.n {
            match x.get(i, j) {
                Some(true) => self.actives[base + j] += 1,
                Some(false) => self.inactives[base + j] += 1,
                None => {}
            }
        }
    }

    fn sub_counts(&mut self, k: usize, i: usize, x: &BioactivityMatrix) {
        let base = k * self.n;
        for j in 0..self.n {
            match x.get(i, j) {
                Some(true) => self.actives[base + j] -= 1,
                Some(false) => self.inactives[base + j] -= 1,
                None => {}
            }
        }
    }

    /// Removes target `i` from its cluster; an emptied cluster is deleted by
    /// moving the last cluster into its slot.
    pub fn detach(&mut self, i: usize, x: &BioactivityMatrix) {
        let k = self.labels[i];
        assert!(k != DETACHED, "target {i} already detached");
        self.sub_counts(k, i, x);
        self.sizes[k] -= 1;
        self.labels[i] = DETACHED;
        if self.sizes[k] == 0 {
            let last = self.sizes.len() - 1;
            if k != last {
                self.sizes.swap(k, last);
                let n = self.n;
                for j in 0..n {
                    self.actives.swap(k * n + j, last * n + j);
                    self.inactives.swap(k * n + j, last * n + j);
                }
                for l in self.labels.iter_mut() {
                    if *l == last {
                        *l = k;
                    }
                }
            }
            self.sizes.pop();
            self.actives.truncate(last * self.n);
            self.inactives.truncate(last * self.n);
        }
    }

    /// Places detached target `i` in cluster `k`; `k == num_clusters()` opens
    /// a new cluster.
    pub fn attach(&mut self, i: usize, k: usize, x: &BioactivityMatrix) {
        assert!(self.labels[i] == DETACHED, "target {i} is attached");
        if k == self.sizes.len() {
            self.sizes.push(0);
            self.actives.extend(std::iter::repeat_n(0, self.n));
            self.inactives.extend(std::iter::repeat_n(0, self.n));
        }
        self.labels[i] = k;
        self.sizes[k] += 1;
        self.add_counts(k, i, x);
    }

    /// Relabels clusters in order of their smallest member.
    pub fn canonicalize(&mut self) {
        let mut map = vec![DETACHED; self.sizes.len()];
        let mut next = 0;
        for &l in &self.labels {
            if l != DETACHED && map[l] == DETACHED {
                map[l] = next;
                next += 1;
            }
        }
        if map.iter().enumerate().all(|(k, &m)| k == m) {
            return;
        }
        let n = self.n;
        let k = self.sizes.len();
        let mut sizes = vec![0; k];
        let mut actives = vec![0; k * n];
        let mut inactives = vec![0; k * n];
        for (old, &new) in map.iter().enumerate() {
            sizes[new] = self.sizes[old];
            actives[new * n..(new + 1) * n].copy_from_slice(&self.actives[old * n..(old + 1) * n]);
            inactives[new * n..(new + 1) * n].copy_from_slice(&self.inactives[old * n..(old + 1) * n]);
        }
        for l in self.labels.iter_mut() {
            if *l != DETACHED {
                *l = map[*l];
            }
        }
        self.sizes = sizes;
        self.actives = actives;
        self.inactives = inactives;
    }

    /// True if the cached counts equal a from-scratch recount.
    pub fn is_coherent(&self, x: &BioactivityMatrix) -> bool {
        if self.labels.contains(&DETACHED) {
            return false;
        }
        match Self::from_labels(&self.labels, x) {
            Ok(mut fresh) => {
                let mut me = self.clone();
                me.canonicalize();
                fresh.canonicalize();
                me == fresh
            }
            Err(_) => false,
        }
    }
}

/// Relabels in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// `ln p(C)` under CR_m(m0): `K ln m0 + ln G(m0) + sum ln G(m_k) - ln G(m + m0)`.
pub fn cr_log_prior_sizes<T: Real>(sizes: &[usize], m0: T) -> T {
    let m: usize = sizes.iter().sum();
    let k = T::from_count(sizes.len());
    k * m0.ln() + m0.ln_gamma() + sizes.iter().map(|&s| T::from_count(s).ln_gamma()).sum::<T>()
        - (T::from_count(m) + m0).ln_gamma()
}

pub fn cr_log_prior<T: Real>(clustering: &Clustering, m0: T) -> T {
    cr_log_prior_sizes(clustering.sizes(), m0)
}

/// Prior expected number of clusters, `sum_{i<m} m0 / (m0 + i)`.
pub fn expected_prior_clusters<T: Real>(m: usize, m0: T) -> T {
    (0..m).map(|i| m0 / (m0 + T::from_count(i))).sum()
}

fn conditional_log_weights<T: Real>(
    i: usize,
    clustering: &Clustering,
    x0: &BioactivityMatrix,
    hyper: &Hyperparams<T>,
    out: &mut Vec<T>,
) {
    let k = clustering.num_clusters();
    out.clear();
    for c in 0..k {
        let mut lw = T::from_count(clustering.size(c)).ln();
        for j in 0..x0.ncols() {
            if let Some(v) = x0.get(i, j) {
                lw = lw + hyper.log_predictive(clustering.actives(c, j), clustering.inactives(c, j), v);
            }
        }
        out.push(lw);
    }
    let ln_rate = hyper.base_rate().ln();
    let ln_rate0 = (T::one() - hyper.base_rate()).ln();
    let mut lw = hyper.m0.ln();
    for j in 0..x0.ncols() {
        match x0.get(i, j) {
            Some(true) => lw = lw + ln_rate,
            Some(false) => lw = lw + ln_rate0,
            None => {}
        }
    }
    out.push(lw);
}

/// Full conditional of the label of detached target `i`: entries `0..K` are
/// the existing clusters, entry `K` is a new cluster.
pub fn gibbs_conditional<T: Real>(
    i: usize,
    clustering: &Clustering,
    x0: &BioactivityMatrix,
    hyper: &Hyperparams<T>,
) -> Result<Vec<T>> {
    if clustering.label(i).is_some() {
        return invalid(format!("target {i} must be detached before computing its conditional"));
    }
    let mut w = Vec::with_capacity(clustering.num_clusters() + 1);
    conditional_log_weights(i, clustering, x0, hyper, &mut w);
    let lse = normalize_log_weights(&mut w);
    if !lse.is_finite() {
        return Err(BoiseError::Internal(format!("all conditional weights vanished for target {i}")));
    }
    Ok(w)
}

/// Draws an index from normalized probabilities by inverse CDF.
pub(crate) fn sample_index<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    for (k, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > T::zero()).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Init {
    #[default]
    OneCluster,
    Singletons,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Number of recorded clusterings `M`.
    pub samples: usize,
    /// Sweeps between recorded clusterings `N`.
    pub thin: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            thin: 50,
            burn_in: 1000,
            seed: 0,
            init: Init::OneCluster,
        }
    }
}

/// A single Gibbs chain over target labels.
pub struct GibbsChain<'a, T: Real> {
    x0: &'a BioactivityMatrix,
    hyper: Hyperparams<T>,
    state: Clustering,
    rng: BoiseRng,
    buf: Vec<T>,
}

impl<'a, T: Real> GibbsChain<'a, T> {
    pub fn new(x0: &'a BioactivityMatrix, hyper: Hyperparams<T>, init: Init, seed: u64) -> Self {
        let state = match init {
            Init::OneCluster => Clustering::one_cluster(x0),
            Init::Singletons => Clustering::singletons(x0),
        };
        Self {
            x0,
            hyper,
            state,
            rng: rng::seeded(seed),
            buf: Vec::new(),
        }
    }

    /// One sweep: each label updated once, in target order.
    pub fn sweep(&mut self) -> Result<()> {
        for i in 0..self.x0.nrows() {
            self.state.detach(i, self.x0);
            conditional_log_weights(i, &self.state, self.x0, &self.hyper, &mut self.buf);
            let lse = normalize_log_weights(&mut self.buf);
            if !lse.is_finite() {
                return Err(BoiseError::Internal(format!("all conditional weights vanished for target {i}")));
            }
            let k = sample_index(&self.buf, &mut self.rng);
            self.state.attach(i, k, self.x0);
        }
        Ok(())
    }

    pub fn state(&self) -> &Clustering {
        &self.state
    }

    pub fn snapshot(&self) -> Clustering {
        let mut c = self.state.clone();
        c.canonicalize();
        c
    }
}

/// Clusterings drawn from `p(C | x0)` plus the sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEnsemble<T: Real = f64> {
    pub samples: Vec<Clustering>,
    pub hyper: Hyperparams<T>,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    /// Number of clusters after every sweep, burn-in included.
    pub trace: Vec<usize>,
}

/// Runs the collapsed Gibbs sampler: `burn_in` sweeps, then records a
/// canonical clustering after every `thin`-th sweep until `samples` are kept.
pub fn sample_posterior<T: Real>(
    x0: &BioactivityMatrix,
    hyper: Hyperparams<T>,
    config: &SamplerConfig,
) -> Result<PosteriorEnsemble<T>> {
    if config.samples == 0 || config.thin == 0 {
        return invalid("sample count and thinning must be at least 1");
    }
    let mut chain = GibbsChain::new(x0, hyper, config.init, config.seed);
    let mut trace = Vec::with_capacity(config.burn_in + config.samples * config.thin);
    for _ in 0..config.burn_in {
        chain.sweep()?;
        trace.push(chain.state().num_clusters());
    }
    let mut samples = Vec::with_capacity(config.samples);
    while samples.len() < config.samples {
        for _ in 0..config.thin {
            chain.sweep()?;
            trace.push(chain.state().num_clusters());
        }
        samples.push(chain.snapshot());
    }
    Ok(PosteriorEnsemble {
        samples,
        hyper,
        seed: config.seed,
        burn_in: config.burn_in,
        thinning: config.thin,
        trace,
    })
}

/// Serialized form of an ensemble: labels per sample plus metadata. Counts are
/// rebuilt from the matrix on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord<T = f64> {
    pub num_targets: usize,
    pub num_compounds: usize,
    pub hyper: Hyperparams<T>,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    pub samples: Vec<Vec<usize>>,
    pub trace: Vec<usize>,
}

impl<T: Real> PosteriorEnsemble<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_targets(&self) -> usize {
        self.samples.first().map_or(0, Clustering::num_targets)
    }

    pub fn num_compounds(&self) -> usize {
        self.samples.first().map_or(0, Clustering::num_compounds)
    }

    /// Wraps explicit clusterings, mainly for tests and tooling.
    pub fn from_clusterings(samples: Vec<Clustering>, hyper: Hyperparams<T>) -> Self {
        Self {
            samples,
            hyper,
            seed: 0,
            burn_in: 0,
            thinning: 1,
            trace: Vec::new(),
        }
    }

    pub fn to_record(&self) -> EnsembleRecord<T> {
        EnsembleRecord {
            num_targets: self.num_targets(),
            num_compounds: self.num_compounds(),
            hyper: self.hyper,
            seed: self.seed,
            burn_in: self.burn_in,
            thinning: self.thinning,
            samples: self.samples.iter().map(|c| c.labels().to_vec()).collect(),
            trace: self.trace.clone(),
        }
    }

    pub fn from_record(record: EnsembleRecord<T>, x0: &BioactivityMatrix) -> Result<Self> {
        if record.num_targets != x0.nrows() || record.num_compounds != x0.ncols() {
            return invalid(format!(
                "ensemble was sampled on a {}x{} matrix, input is {}x{}",
                record.num_targets,
                record.num_compounds,
                x0.nrows(),
                x0.ncols()
            ));
        }
        let hyper = Hyperparams::new(record.hyper.m0, record.hyper.alpha0, record.hyper.beta0)?;
        let samples = record
            .samples
            .iter()
            .map(|l| Clustering::from_labels(l, x0))
            .collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return invalid("ensemble file holds no samples");
        }
        Ok(Self {
            samples,
            hyper,
            seed: record.seed,
            burn_in: record.burn_in,
            thinning: record.thinning,
            trace: record.trace,
        })
    }
}

impl PosteriorEnsemble<f64> {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &self.to_record())?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R, x0: &BioactivityMatrix) -> Result<Self> {
        let record: EnsembleRecord<f64> = serde_json::from_reader(reader)?;
        Self::from_record(record, x0)
    }

    /// Cluster-count trace as CSV (`sweep,clusters`).
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sweep", "clusters"])?;
        for (s, k) in self.trace.iter().enumerate() {
            w.write_record([(s + 1).to_string(), k.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PilotConfig {
    pub burn_in: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            burn_in: 200,
            sweeps: 500,
            seed: 0,
        }
    }
}

/// Empirical-Bayes choice and the evidence behind it.
#[derive(Debug, Clone)]
pub struct EmpiricalBayes<T: Real = f64> {
    pub hyper: Hyperparams<T>,
    /// `(m0, prior E[K], pilot-chain mean K)` per grid entry.
    pub grid: Vec<(T, T, T)>,
}

/// `alpha0` = mean of observed entries, `beta0 = 1 - alpha0`, and `m0` from
/// `grid` minimizing the gap between the prior expected cluster count and the
/// mean cluster count of a pilot chain run at that `m0`.
pub fn choose_hyperparams<T: Real>(
    x0: &BioactivityMatrix,
    grid: &[T],
    pilot: &PilotConfig,
) -> Result<EmpiricalBayes<T>> {
    let mean = x0
        .observed_mean()
        .ok_or_else(|| BoiseError::DegenerateData("matrix has no observed entries".into()))?;
    if mean == 0.0 || mean == 1.0 {
        return Err(BoiseError::DegenerateData(format!(
            "all observed entries equal {mean}; alpha0 would be degenerate"
        )));
    }
    if grid.is_empty() {
        return invalid("empty m0 grid");
    }
    let alpha0 = T::lit(mean);
    let beta0 = T::one() - alpha0;
    let m = x0.nrows();
    let evidence = grid
        .par_iter()
        .enumerate()
        .map(|(g, &m0)| {
            let hyper = Hyperparams::new(m0, alpha0, beta0)?;
            let mut chain = GibbsChain::new(x0, hyper, Init::OneCluster, rng::derive_seed(pilot.seed, g as u64));
            for _ in 0..pilot.burn_in {
                chain.sweep()?;
            }
            let mut total = 0usize;
            for _ in 0..pilot.sweeps.max(1) {
                chain.sweep()?;
                total += chain.state().num_clusters();
            }
            let post_k = T::from_count(total) / T::from_count(pilot.sweeps.max(1));
            Ok((m0, expected_prior_clusters(m, m0), post_k))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = evidence
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            let da = (a.1 - a.2).abs();
            let db = (b.1 - b.2).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .expect("grid nonempty");
    Ok(EmpiricalBayes {
        hyper: Hyperparams::new(evidence[best].0, alpha0, beta0)?,
        grid: evidence,
    })
}
