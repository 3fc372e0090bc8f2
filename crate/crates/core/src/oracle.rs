//! Exact reference computations for small instances, by enumerating every
//! set partition of the targets.
//!
//! The new target is handled as an extra row that is observed only at the
//! informer columns, so posterior quantities given `(x0, x_A)` come from one
//! enumeration over partitions of `m + 1` rows.

use crate::dpmm::{cr_log_prior_sizes, Hyperparams};
use crate::error::{invalid, BoiseError, Result};
use crate::matrix::BioactivityMatrix;
use crate::pel::{pel2_from_theta, InformerAssay};
use crate::scalar::{ln_beta, log_sum_exp, Real};
use crate::selector::InformerObjective;

/// Largest item count [`enumerate_partitions`] accepts. Bell(12) = 4,213,597.
pub const MAX_PARTITION_ITEMS: usize = 12;

/// Largest informer set the exact outcome sum accepts.
pub const MAX_EXACT_INFORMERS: usize = 16;

/// Bell numbers by the Bell triangle.
pub fn bell(m: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..m {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// Calls `f` with the canonical labels of every partition of `m` items, in
/// lexicographic order of the restricted growth string.
pub fn for_each_partition<F: FnMut(&[usize])>(m: usize, mut f: F) -> Result<()> {
    if m > MAX_PARTITION_ITEMS {
        return Err(BoiseError::Guard(format!(
            "partition enumeration limited to {MAX_PARTITION_ITEMS} items, got {m}"
        )));
    }
    if m == 0 {
        f(&[]);
        return Ok(());
    }
    let mut labels = vec![0usize; m];
    // max label among the first i items, plus one
    let mut bound = vec![1usize; m];
    loop {
        f(&labels);
        let mut i = m - 1;
        loop {
            if i == 0 {
                return Ok(());
            }
            if labels[i] < bound[i - 1] {
                break;
            }
            i -= 1;
        }
        labels[i] += 1;
        bound[i] = bound[i - 1].max(labels[i] + 1);
        for t in i + 1..m {
            labels[t] = 0;
            bound[t] = bound[i];
        }
    }
}

pub fn enumerate_partitions(m: usize) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for_each_partition(m, |l| out.push(l.to_vec()))?;
    Ok(out)
}

fn sizes_of(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// Per-cluster (actives, inactives) counts over observed cells, `K x n`.
fn cluster_counts(labels: &[usize], x: &BioactivityMatrix) -> Vec<Vec<(u32, u32)>> {
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut counts = vec![vec![(0u32, 0u32); x.ncols()]; k];
    for (i, &l) in labels.iter().enumerate() {
        for (j, c) in counts[l].iter_mut().enumerate() {
            match x.get(i, j) {
                Some(true) => c.0 += 1,
                Some(false) => c.1 += 1,
                None => {}
            }
        }
    }
    counts
}

fn log_beta_ratio<T: Real>(hyper: &Hyperparams<T>, s: u32, f: u32) -> T {
    ln_beta(hyper.alpha0 + T::from_count(s as usize), hyper.beta0 + T::from_count(f as usize))
        - ln_beta(hyper.alpha0, hyper.beta0)
}

/// `ln p(x | C)` with the cluster parameters integrated out.
pub fn log_marginal_likelihood<T: Real>(labels: &[usize], x: &BioactivityMatrix, hyper: &Hyperparams<T>) -> T {
    cluster_counts(labels, x)
        .iter()
        .flatten()
        .map(|&(s, f)| log_beta_ratio(hyper, s, f))
        .sum()
}

/// `p(C | x0)` for every partition of the rows of `x0`.
pub fn exact_posterior<T: Real>(x0: &BioactivityMatrix, hyper: &Hyperparams<T>) -> Result<Vec<(Vec<usize>, T)>> {
    let mut parts = Vec::new();
    let mut logw = Vec::new();
    for_each_partition(x0.nrows(), |labels| {
        logw.push(cr_log_prior_sizes(&sizes_of(labels), hyper.m0) + log_marginal_likelihood(labels, x0, hyper));
        parts.push(labels.to_vec());
    })?;
    let lse = log_sum_exp(&logw);
    Ok(parts.into_iter().zip(logw).map(|(p, l)| (p, (l - lse).exp())).collect())
}

struct AugmentedPartition<T> {
    /// `ln p(C) + ln p(x0 | C)`.
    log_weight: T,
    /// Counts of the new target's cluster mates, per compound.
    mates: Vec<(u32, u32)>,
}

/// Exact posterior quantities for a new target by enumeration over
/// partitions of `m + 1` rows.
pub struct ExactModel<'a, T: Real> {
    x0: &'a BioactivityMatrix,
    hyper: Hyperparams<T>,
    n_top: usize,
    parts: Vec<AugmentedPartition<T>>,
    log_z0: T,
}

impl<'a, T: Real> ExactModel<'a, T> {
    pub fn new(x0: &'a BioactivityMatrix, hyper: Hyperparams<T>, n_top: usize) -> Result<Self> {
        let (m, n) = (x0.nrows(), x0.ncols());
        if n_top == 0 || n_top > n {
            return invalid(format!("top-set size {n_top} must be in 1..={n}"));
        }
        let mut parts = Vec::new();
        for_each_partition(m + 1, |labels| {
            let sizes = sizes_of(labels);
            let counts = cluster_counts(&labels[..m], x0);
            let star = labels[m];
            let mut log_weight = cr_log_prior_sizes(&sizes, hyper.m0);
            for (k, row) in counts.iter().enumerate() {
                if sizes[k] == 0 {
                    continue;
                }
                for &(s, f) in row {
                    log_weight = log_weight + log_beta_ratio(&hyper, s, f);
                }
            }
            let mates = counts.get(star).cloned().unwrap_or_else(|| vec![(0, 0); n]);
            parts.push(AugmentedPartition { log_weight, mates });
        })?;
        let log_z0 = log_sum_exp(&parts.iter().map(|p| p.log_weight).collect::<Vec<_>>());
        Ok(Self { x0, hyper, n_top, parts, log_z0 })
    }

    pub fn hyper(&self) -> &Hyperparams<T> {
        &self.hyper
    }

    pub fn n_top(&self) -> usize {
        self.n_top
    }

    fn check_assay(&self, assay: &InformerAssay) -> Result<()> {
        if let Some(&j) = assay.informers().iter().find(|&&j| j >= self.x0.ncols()) {
            return invalid(format!("informer {j} out of range"));
        }
        Ok(())
    }

    /// Unnormalized log posterior of each augmented partition given `x_A`.
    fn log_weights(&self, assay: &InformerAssay) -> Vec<T> {
        let h = &self.hyper;
        self.parts
            .iter()
            .map(|p| {
                let mut lw = p.log_weight;
                for (j, x) in assay.iter() {
                    let (s, f) = p.mates[j];
                    let (s2, f2) = if x { (s + 1, f) } else { (s, f + 1) };
                    lw = lw + log_beta_ratio(h, s2, f2) - log_beta_ratio(h, s, f);
                }
                lw
            })
            .collect()
    }

    /// `p(x_A | x0)`.
    pub fn predictive_mass(&self, assay: &InformerAssay) -> Result<T> {
        self.check_assay(assay)?;
        Ok((log_sum_exp(&self.log_weights(assay)) - self.log_z0).exp())
    }

    /// `E(theta_{i*,j} | x0, x_A)` for every compound.
    pub fn theta_hat_all(&self, assay: &InformerAssay) -> Result<Vec<T>> {
        self.check_assay(assay)?;
        let n = self.x0.ncols();
        let mut lw = self.log_weights(assay);
        crate::scalar::normalize_log_weights(&mut lw);
        let mut bump = vec![None; n];
        for (j, x) in assay.iter() {
            bump[j] = Some(x);
        }
        let h = &self.hyper;
        let mut out = vec![T::zero(); n];
        for (p, &w) in self.parts.iter().zip(&lw) {
            for (j, o) in out.iter_mut().enumerate() {
                let (s, f) = p.mates[j];
                let (mut a, mut b) = (h.alpha0 + T::from_count(s as usize), h.beta0 + T::from_count(f as usize));
                match bump[j] {
                    Some(true) => a = a + T::one(),
                    Some(false) => b = b + T::one(),
                    None => {}
                }
                *o = *o + w * a / (a + b);
            }
        }
        Ok(out)
    }

    pub fn theta_hat(&self, assay: &InformerAssay, j: usize) -> Result<T> {
        if j >= self.x0.ncols() {
            return invalid(format!("compound {j} out of range"));
        }
        Ok(self.theta_hat_all(assay)?[j])
    }

    pub fn pel2(&self, assay: &InformerAssay) -> Result<T> {
        Ok(pel2_from_theta(&self.theta_hat_all(assay)?, self.n_top))
    }

    /// Every outcome on `informers` with its predictive mass and `PEL_2`.
    pub fn outcome_table(&self, informers: &[usize]) -> Result<Vec<(Vec<bool>, T, T)>> {
        if informers.len() > MAX_EXACT_INFORMERS {
            return Err(BoiseError::Guard(format!(
                "exact outcome sum limited to {MAX_EXACT_INFORMERS} informers"
            )));
        }
        let n = self.x0.ncols();
        let k = informers.len();
        (0..1usize << k)
            .map(|bits| {
                let outcome: Vec<bool> = (0..k).map(|t| bits >> t & 1 == 1).collect();
                let assay = InformerAssay::new(informers.to_vec(), outcome.clone(), n)?;
                Ok((outcome, self.predictive_mass(&assay)?, self.pel2(&assay)?))
            })
            .collect()
    }

    /// `PEL_1(x0, A)`: `PEL_2` summed over all `2^|A|` outcomes weighted by
    /// their exact predictive mass.
    pub fn pel1(&self, informers: &[usize]) -> Result<T> {
        Ok(self.outcome_table(informers)?.into_iter().map(|(_, p, l)| p * l).sum())
    }
}

impl<T: Real> InformerObjective<T> for ExactModel<'_, T> {
    fn num_compounds(&self) -> usize {
        self.x0.ncols()
    }

    fn score(&self, informers: &[usize]) -> Result<T> {
        self.pel1(informers)
    }
}

pub fn exact_theta_hat<T: Real>(
    x0: &BioactivityMatrix,
    hyper: &Hyperparams<T>,
    assay: &InformerAssay,
    j: usize,
) -> Result<T> {
    ExactModel::new(x0, *hyper, 1)?.theta_hat(assay, j)
}

pub fn exact_pel1<T: Real>(x0: &BioactivityMatrix, hyper: &Hyperparams<T>, informers: &[usize], n_top: usize) -> Result<T> {
    ExactModel::new(x0, *hyper, n_top)?.pel1(informers)
}

/// Clustering-free Beta-Bernoulli model: each compound has its own activity
/// rate shared by all targets, with a `Beta(alpha, beta)` prior.
#[derive(Debug, Clone, PartialEq)]
pub struct NoClusterModel<T: Real = f64> {
    alpha: T,
    beta: T,
    n_targets: usize,
    sums: Vec<usize>,
    n_top: usize,
}

impl<T: Real> NoClusterModel<T> {
    pub fn new(x0: &BioactivityMatrix, alpha: T, beta: T, n_top: usize) -> Result<Self> {
        if !x0.is_complete() {
            return invalid("the no-cluster model needs a complete matrix");
        }
        let sums = (0..x0.ncols())
            .map(|j| (0..x0.nrows()).filter(|&i| x0.get(i, j) == Some(true)).count())
            .collect();
        Self::from_column_sums(sums, x0.nrows(), alpha, beta, n_top)
    }

    pub fn from_column_sums(sums: Vec<usize>, n_targets: usize, alpha: T, beta: T, n_top: usize) -> Result<Self> {
        if !(alpha > T::zero() && beta > T::zero()) {
            return invalid("alpha and beta must be positive");
        }
        if n_top == 0 || n_top > sums.len() {
            return invalid(format!("top-set size {n_top} must be in 1..={}", sums.len()));
        }
        if let Some(&s) = sums.iter().find(|&&s| s > n_targets) {
            return invalid(format!("column sum {s} exceeds {n_targets} targets"));
        }
        Ok(Self { alpha, beta, n_targets, sums, n_top })
    }

    pub fn column_sums(&self) -> &[usize] {
        &self.sums
    }

    /// `E(theta_j | x0) = (alpha + s_j) / (alpha + beta + m)`.
    pub fn posterior_mean(&self, j: usize) -> T {
        (self.alpha + T::from_count(self.sums[j])) / (self.alpha + self.beta + T::from_count(self.n_targets))
    }

    /// `E(theta_j | x0, x_A)`: the informers' own means move by one count.
    pub fn theta_hat_all(&self, assay: &InformerAssay) -> Vec<T> {
        let mut out: Vec<T> = (0..self.sums.len()).map(|j| self.posterior_mean(j)).collect();
        let denom = self.alpha + self.beta + T::from_count(self.n_targets + 1);
        for (j, x) in assay.iter() {
            let s = T::from_count(self.sums[j] + usize::from(x));
            out[j] = (self.alpha + s) / denom;
        }
        out
    }

    /// `p(x_A | x0)`, a product over informers.
    pub fn predictive_mass(&self, assay: &InformerAssay) -> T {
        assay
            .iter()
            .map(|(j, x)| {
                let p = self.posterior_mean(j);
                if x {
                    p
                } else {
                    T::one() - p
                }
            })
            .fold(T::one(), |acc, v| acc * v)
    }

    pub fn pel2(&self, assay: &InformerAssay) -> T {
        pel2_from_theta(&self.theta_hat_all(assay), self.n_top)
    }

    pub fn pel1(&self, informers: &[usize]) -> Result<T> {
        let n = self.sums.len();
        if informers.len() > MAX_EXACT_INFORMERS {
            return Err(BoiseError::Guard(format!(
                "exact outcome sum limited to {MAX_EXACT_INFORMERS} informers"
            )));
        }
        let k = informers.len();
        let mut total = T::zero();
        for bits in 0..1usize << k {
            let outcome: Vec<bool> = (0..k).map(|t| bits >> t & 1 == 1).collect();
            let assay = InformerAssay::new(informers.to_vec(), outcome, n)?;
            total = total + self.predictive_mass(&assay) * self.pel2(&assay);
        }
        Ok(total)
    }
}

impl<T: Real> InformerObjective<T> for NoClusterModel<T> {
    fn num_compounds(&self) -> usize {
        self.sums.len()
    }

    fn score(&self, informers: &[usize]) -> Result<T> {
        self.pel1(informers)
    }
}

pub fn no_cluster_pel1<T: Real>(x0: &BioactivityMatrix, alpha: T, beta: T, informers: &[usize], n_top: usize) -> Result<T> {
    NoClusterModel::new(x0, alpha, beta, n_top)?.pel1(informers)
}
