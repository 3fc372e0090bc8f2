//! Informer-set construction: greedy minimization of an objective over
//! compound sets, with posterior expected loss or expected link entropy as
//! the objective.

use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpmm::PosteriorEnsemble;
use crate::error::{invalid, BoiseError, Result};
use crate::pel::{sample_predictive_row, LinkDistribution, Pel1Config, PelEngine, SampleCache};
use crate::rng;
use crate::scalar::{log_sum_exp, Real};

/// Anything that scores a candidate informer set, lower being better.
pub trait InformerObjective<T>: Sync {
    fn num_compounds(&self) -> usize;
    fn score(&self, informers: &[usize]) -> Result<T>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T = f64> {
    /// Informers in the order they were added.
    pub informers: Vec<usize>,
    /// Objective value after each addition.
    pub step_scores: Vec<T>,
}

/// Greedy forward selection. Each step scores every unused compound in
/// parallel and keeps the minimum, ties going to the lowest index.
pub fn greedy_select<T: Real, O: InformerObjective<T> + ?Sized>(
    objective: &O,
    n_informers: usize,
) -> Result<Selection<T>> {
    let n = objective.num_compounds();
    if n_informers > n {
        return invalid(format!("{n_informers} informers requested from {n} compounds"));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n_informers);
    let mut used = vec![false; n];
    let mut step_scores = Vec::with_capacity(n_informers);
    for step in 0..n_informers {
        let scores: Vec<(usize, Result<T>)> = (0..n)
            .into_par_iter()
            .filter(|&j| !used[j])
            .map(|j| {
                let mut set = chosen.clone();
                set.push(j);
                (j, objective.score(&set))
            })
            .collect();
        let mut best: Option<(usize, T)> = None;
        for (j, s) in scores {
            let s = s?;
            if s.is_nan() {
                return Err(BoiseError::Internal(format!("objective is NaN for candidate {j}")));
            }
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((j, s));
            }
        }
        let (j, s) = best.ok_or_else(|| BoiseError::Internal("no candidate left".into()))?;
        if let Some(&prev) = step_scores.last() {
            if s > prev {
                warn!("step {} score {} exceeds previous {}", step + 1, s, prev);
            }
        }
        debug!("step {}: compound {} score {}", step + 1, j, s);
        chosen.push(j);
        used[j] = true;
        step_scores.push(s);
    }
    Ok(Selection { informers: chosen, step_scores })
}

/// Shannon entropy in bits, `0 log 0 = 0`.
pub fn entropy<T: Real>(link: &LinkDistribution<T>) -> T {
    entropy_of(&link.p)
}

fn entropy_of<T: Real>(p: &[T]) -> T {
    let h: T = p
        .iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| -v * v.log2())
        .sum();
    h.max(T::zero())
}

/// Scores informer sets by expected entropy of the new target's cluster link.
///
/// Auxiliary predictive rows are drawn once per ensemble member at
/// construction and reused for every candidate.
pub struct EntropyObjective<'a, T: Real> {
    ensemble: &'a PosteriorEnsemble<T>,
    caches: Vec<SampleCache<T>>,
    /// `(sample index, row)`.
    aux: Vec<(usize, Vec<bool>)>,
}

impl<'a, T: Real> EntropyObjective<'a, T> {
    pub fn new(ensemble: &'a PosteriorEnsemble<T>, draws_per_sample: usize, seed: u64) -> Result<Self> {
        if draws_per_sample == 0 {
            return invalid("draws_per_sample must be at least 1");
        }
        let mut rng = rng::seeded(seed);
        let mut aux = Vec::with_capacity(ensemble.len() * draws_per_sample);
        for (s, c) in ensemble.samples.iter().enumerate() {
            for _ in 0..draws_per_sample {
                aux.push((s, sample_predictive_row(c, &ensemble.hyper, &mut rng)));
            }
        }
        Self::with_rows(ensemble, aux)
    }

    /// Uses caller-supplied auxiliary rows, each tagged with the ensemble
    /// member it belongs to.
    pub fn with_rows(ensemble: &'a PosteriorEnsemble<T>, aux: Vec<(usize, Vec<bool>)>) -> Result<Self> {
        if ensemble.is_empty() {
            return invalid("empty ensemble");
        }
        if aux.is_empty() {
            return invalid("no auxiliary rows");
        }
        let n = ensemble.num_compounds();
        for (s, row) in &aux {
            if *s >= ensemble.len() || row.len() != n {
                return invalid(format!("auxiliary row for sample {s} does not fit the ensemble"));
            }
        }
        let caches = ensemble
            .samples
            .iter()
            .map(|c| SampleCache::new(c, &ensemble.hyper))
            .collect();
        Ok(Self { ensemble, caches, aux })
    }

    pub fn aux_rows(&self) -> &[(usize, Vec<bool>)] {
        &self.aux
    }

    /// Average link entropy over the auxiliary rows restricted to `informers`.
    pub fn entropy_score(&self, informers: &[usize]) -> Result<T> {
        let n = self.ensemble.num_compounds();
        if let Some(&j) = informers.iter().find(|&&j| j >= n) {
            return invalid(format!("informer {j} out of range"));
        }
        let mut lw = Vec::new();
        let mut total = T::zero();
        for (s, row) in &self.aux {
            self.caches[*s].log_weights_row(n, informers, row, &mut lw);
            let lse = log_sum_exp(&lw);
            for v in lw.iter_mut() {
                *v = (*v - lse).exp();
            }
            total = total + entropy_of(&lw);
        }
        Ok(total / T::from_count(self.aux.len()))
    }
}

impl<T: Real> InformerObjective<T> for EntropyObjective<'_, T> {
    fn num_compounds(&self) -> usize {
        self.ensemble.num_compounds()
    }

    fn score(&self, informers: &[usize]) -> Result<T> {
        self.entropy_score(informers)
    }
}

/// Entropy score with freshly drawn auxiliary rows.
pub fn entropy_score<T: Real>(
    ensemble: &PosteriorEnsemble<T>,
    informers: &[usize],
    draws_per_sample: usize,
    seed: u64,
) -> Result<T> {
    EntropyObjective::new(ensemble, draws_per_sample, seed)?.entropy_score(informers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GreedyPel,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub n_informers: usize,
    pub n_top: usize,
    pub method: Method,
    pub seed: u64,
    /// Predictive draws per ensemble member.
    pub draws_per_sample: usize,
}

impl SelectionConfig {
    pub fn new(n_informers: usize, n_top: usize, method: Method) -> Self {
        Self { n_informers, n_top, method, seed: 0, draws_per_sample: 1 }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_informers > n {
            return invalid(format!("n_A = {} exceeds {n} compounds", self.n_informers));
        }
        if self.n_top == 0 || self.n_top > n {
            return invalid(format!("n_T = {} must be in 1..={n}", self.n_top));
        }
        if self.draws_per_sample == 0 {
            return invalid("draws_per_sample must be at least 1");
        }
        Ok(())
    }
}

/// Greedy PEL selection against the Monte-Carlo engine.
pub fn greedy_pel_select<T: Real>(ensemble: &PosteriorEnsemble<T>, config: &SelectionConfig) -> Result<Selection<T>> {
    config.validate(ensemble.num_compounds())?;
    let engine = PelEngine::new(
        ensemble,
        config.n_top,
        &Pel1Config { draws_per_sample: config.draws_per_sample, seed: config.seed },
    )?;
    greedy_select(&engine, config.n_informers)
}

/// Greedy selection on expected link entropy.
pub fn accelerated_select<T: Real>(ensemble: &PosteriorEnsemble<T>, config: &SelectionConfig) -> Result<Selection<T>> {
    config.validate(ensemble.num_compounds())?;
    if config.n_informers == 0 {
        return Ok(Selection { informers: Vec::new(), step_scores: Vec::new() });
    }
    let objective = EntropyObjective::new(ensemble, config.draws_per_sample, config.seed)?;
    greedy_select(&objective, config.n_informers)
}

pub fn select<T: Real>(ensemble: &PosteriorEnsemble<T>, config: &SelectionConfig) -> Result<Selection<T>> {
    match config.method {
        Method::GreedyPel => greedy_pel_select(ensemble, config),
        Method::Entropy => accelerated_select(ensemble, config),
    }
}

/// JSON form of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config: SelectionConfig,
    pub informers: Vec<usize>,
    pub compounds: Vec<String>,
    pub step_scores: Vec<f64>,
}

impl SelectionReport {
    pub fn new<T: Real>(config: &SelectionConfig, selection: &Selection<T>, compound_ids: &[String]) -> Self {
        Self {
            config: config.clone(),
            informers: selection.informers.clone(),
            compounds: selection.informers.iter().map(|&j| compound_ids[j].clone()).collect(),
            step_scores: selection.step_scores.iter().map(|s| s.as_f64()).collect(),
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}
