//! Leave-one-target-out evaluation.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::dpmm::{choose_hyperparams, sample_posterior, Hyperparams, PilotConfig, SamplerConfig, DEFAULT_M0_GRID};
use crate::error::{BoiseError, Result};
use crate::matrix::BioactivityMatrix;
use crate::metrics;
use crate::pel::InformerAssay;
use crate::ranker::{rank_all, Ranking};
use crate::rng::{self, derive_seed};
use crate::selector::{self, Method, SelectionConfig};

/// A dropped-out target row. Only informer entries can be read before
/// scoring; the full row is released by [`HeldOutTarget::into_truth`].
pub struct HeldOutTarget {
    row: Vec<Option<bool>>,
}

impl HeldOutTarget {
    pub fn new(row: Vec<Option<bool>>) -> Self {
        Self { row }
    }

    /// `x_A` on the observed informer entries. Unobserved informers are
    /// dropped from the assay.
    pub fn reveal(&self, informers: &[usize]) -> Result<InformerAssay> {
        let (mut js, mut xs) = (Vec::new(), Vec::new());
        for &j in informers {
            if let Some(x) = self.row.get(j).copied().flatten() {
                js.push(j);
                xs.push(x);
            }
        }
        InformerAssay::new(js, xs, self.row.len())
    }

    pub fn into_truth(self) -> Vec<Option<bool>> {
        self.row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    FrequentHitters,
    Random,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::FrequentHitters => "frequent-hitters",
            Baseline::Random => "random",
        }
    }
}

pub fn method_name(method: Method) -> &'static str {
    match method {
        Method::GreedyPel => "boise",
        Method::Entropy => "boise-entropy",
    }
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    /// Fixed hyperparameters; `None` runs the empirical-Bayes choice on each
    /// fold's training rows.
    pub hyper: Option<Hyperparams<f64>>,
    pub m0_grid: Vec<f64>,
    pub pilot: PilotConfig,
    pub sampler: SamplerConfig,
    pub n_informers: usize,
    pub n_top: usize,
    pub methods: Vec<Method>,
    pub baselines: Vec<Baseline>,
    pub draws_per_sample: usize,
    pub seed: u64,
    /// Target rows to hold out; `None` means all of them.
    pub folds: Option<Vec<usize>>,
}

impl CvConfig {
    pub fn new(n_informers: usize, n_top: usize) -> Self {
        Self {
            hyper: None,
            m0_grid: DEFAULT_M0_GRID.to_vec(),
            pilot: PilotConfig::default(),
            sampler: SamplerConfig::default(),
            n_informers,
            n_top,
            methods: vec![Method::GreedyPel],
            baselines: Vec::new(),
            draws_per_sample: 1,
            seed: 0,
            folds: None,
        }
    }
}

/// One method's result on one held-out target. Metrics are `None` when
/// undefined for the revealed row.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub fold: usize,
    pub target: String,
    pub method: String,
    pub n_a: usize,
    pub informers: Vec<usize>,
    pub nef10: Option<f64>,
    pub rocauc: Option<f64>,
    pub mcc: Option<f64>,
    pub f1: Option<f64>,
    /// Ranking scores per compound.
    pub scores: Vec<f64>,
    /// Wall time of informer selection, seconds.
    pub select_seconds: f64,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(BoiseError::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores `ranking` on the observed entries of the revealed row.
pub fn score_ranking(ranking: &Ranking<f64>, truth: &[Option<bool>]) -> Result<[Option<f64>; 4]> {
    let keep: Vec<bool> = truth.iter().map(Option::is_some).collect();
    let r = ranking.restrict(&keep);
    let t: Vec<bool> = truth.iter().flatten().copied().collect();
    Ok([
        defined(metrics::nef10(&r, &t))?,
        defined(metrics::rocauc(&r, &t))?,
        defined(metrics::mcc_best_split(&r, &t))?,
        defined(metrics::f1_best_split(&r, &t))?,
    ])
}

struct Arm {
    method: String,
    informers: Vec<usize>,
    ranking: Ranking<f64>,
    seconds: f64,
}

fn run_fold(x: &BioactivityMatrix, fold: usize, config: &CvConfig) -> Result<Vec<FoldRecord>> {
    let (train, row) = x.remove_row(fold)?;
    let held = HeldOutTarget::new(row);
    let fold_seed = derive_seed(config.seed, fold as u64);
    let hyper = match config.hyper {
        Some(h) => h,
        None => {
            let pilot = PilotConfig { seed: derive_seed(fold_seed, 1), ..config.pilot.clone() };
            choose_hyperparams(&train, &config.m0_grid, &pilot)?.hyper
        }
    };
    let sampler = SamplerConfig { seed: derive_seed(fold_seed, 2), ..config.sampler.clone() };
    let ensemble = sample_posterior(&train, hyper, &sampler)?;

    let mut arms = Vec::new();
    for &method in &config.methods {
        let sel_config = SelectionConfig {
            n_informers: config.n_informers,
            n_top: config.n_top,
            method,
            seed: derive_seed(fold_seed, 3),
            draws_per_sample: config.draws_per_sample,
        };
        let start = Instant::now();
        let selection = selector::select(&ensemble, &sel_config)?;
        let seconds = start.elapsed().as_secs_f64();
        let ranking = rank_all(&ensemble, &held.reveal(&selection.informers)?)?;
        arms.push(Arm { method: method_name(method).into(), informers: selection.informers, ranking, seconds });
    }
    for &baseline in &config.baselines {
        let start = Instant::now();
        let informers = match baseline {
            Baseline::FrequentHitters => metrics::frequent_hitters(&train, config.n_informers)?,
            Baseline::Random => {
                let mut rng = rng::seeded(derive_seed(fold_seed, 4));
                metrics::random_informers(train.ncols(), config.n_informers, &mut rng)?
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        let ranking = rank_all(&ensemble, &held.reveal(&informers)?)?;
        arms.push(Arm { method: baseline.name().into(), informers, ranking, seconds });
    }

    let truth = held.into_truth();
    arms.into_iter()
        .map(|arm| {
            let [nef10, rocauc, mcc, f1] = score_ranking(&arm.ranking, &truth)?;
            Ok(FoldRecord {
                fold,
                target: x.targets()[fold].clone(),
                method: arm.method,
                n_a: arm.informers.len(),
                informers: arm.informers,
                nef10,
                rocauc,
                mcc,
                f1,
                scores: arm.ranking.scores,
                select_seconds: arm.seconds,
            })
        })
        .collect()
}

/// Holds out each target in turn, selects informers on the remaining rows,
/// reveals the informer entries, ranks, and scores against the full row.
/// Folds run in parallel; output follows fold order.
pub fn run_cv(x: &BioactivityMatrix, config: &CvConfig) -> Result<Vec<FoldRecord>> {
    if x.nrows() < 2 {
        return Err(BoiseError::Invalid("cross-validation needs at least two targets".into()));
    }
    let folds: Vec<usize> = config.folds.clone().unwrap_or_else(|| (0..x.nrows()).collect());
    if let Some(&f) = folds.iter().find(|&&f| f >= x.nrows()) {
        return Err(BoiseError::Invalid(format!("fold {f} out of range")));
    }
    let per_fold = folds
        .par_iter()
        .map(|&fold| {
            let out = run_fold(x, fold, config);
            match &out {
                Ok(_) => info!("fold {fold} done"),
                Err(e) => warn!("fold {fold} failed: {e}"),
            }
            out
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_fold.into_iter().flatten().collect())
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

/// Writes `target,method,n_a,nef10,rocauc,mcc,f1`.
pub fn write_metrics_csv<W: Write>(writer: W, records: &[FoldRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["target", "method", "n_a", "nef10", "rocauc", "mcc", "f1"])?;
    for r in records {
        w.write_record([
            r.target.clone(),
            r.method.clone(),
            r.n_a.to_string(),
            na(r.nef10),
            na(r.rocauc),
            na(r.mcc),
            na(r.f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}
