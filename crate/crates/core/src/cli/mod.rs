//! Command-line interface: `sample`, `select`, `rank` and `cv`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

pub mod cv;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::dpmm::{
    choose_hyperparams, sample_posterior, Hyperparams, Init, PilotConfig, PosteriorEnsemble, SamplerConfig,
    DEFAULT_M0_GRID,
};
use crate::error::{invalid, BoiseError, Result};
use crate::matrix::{BioactivityMatrix, ContinuousMatrix};
use crate::pel::InformerAssay;
use crate::ranker::{rank_all, write_ranking_csv};
use crate::selector::{select, Method, SelectionConfig, SelectionReport};

use cv::{run_cv, write_metrics_csv, Baseline, CvConfig};

#[derive(Debug, Parser)]
#[command(name = "boise", version, about = "Informer compound selection for new bioactivity targets")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample target clusterings and write the ensemble as JSON.
    Sample(SampleArgs),
    /// Choose an informer set from a sampled ensemble.
    Select(SelectArgs),
    /// Rank compounds for a new target given informer outcomes.
    Rank(RankArgs),
    /// Leave-one-target-out evaluation.
    Cv(CvArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Binarize {
    /// Input is already 0/1.
    None,
    /// Active when at least two standard deviations above the target mean.
    #[value(name = "2sd")]
    TwoSd,
    /// Active when the z-score reaches `--zthreshold`.
    Zscore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    One,
    Singletons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Greedy,
    Entropy,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Greedy => Method::GreedyPel,
            MethodArg::Entropy => Method::Entropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    FrequentHitters,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Target-by-compound CSV; first column holds target ids.
    #[arg(long)]
    pub input: PathBuf,
    /// Token marking a missing cell.
    #[arg(long, default_value = "NA")]
    pub missing: String,
    #[arg(long, value_enum, default_value = "none")]
    pub binarize: Binarize,
    #[arg(long, default_value_t = 2.0)]
    pub zthreshold: f64,
}

impl InputArgs {
    pub fn load(&self) -> Result<BioactivityMatrix> {
        let path = &self.input;
        match self.binarize {
            Binarize::None => BioactivityMatrix::load_csv(path, &self.missing),
            Binarize::TwoSd => Ok(ContinuousMatrix::load_csv(path, &self.missing)?.binarize_2sd()?.matrix),
            Binarize::Zscore => ContinuousMatrix::load_csv(path, &self.missing)?.binarize_zscore(self.zthreshold),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Concentration. Chosen by pilot chains when omitted.
    #[arg(long)]
    pub m0: Option<f64>,
    /// Beta prior, defaults to the observed active rate.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Defaults to `1 - alpha0`.
    #[arg(long)]
    pub beta0: Option<f64>,
}

impl PriorArgs {
    fn is_fixed(&self) -> bool {
        self.m0.is_some()
    }

    fn resolve(&self, x: &BioactivityMatrix, seed: u64) -> Result<Hyperparams<f64>> {
        let auto = |x: &BioactivityMatrix| -> Result<f64> {
            let mean = x
                .observed_mean()
                .ok_or_else(|| BoiseError::DegenerateData("matrix has no observed entries".into()))?;
            Ok(mean)
        };
        match self.m0 {
            Some(m0) => {
                let alpha0 = match self.alpha0 {
                    Some(a) => a,
                    None => auto(x)?,
                };
                let beta0 = self.beta0.unwrap_or(1.0 - alpha0);
                Hyperparams::new(m0, alpha0, beta0)
            }
            None => {
                let pilot = PilotConfig { seed, ..PilotConfig::default() };
                let eb = choose_hyperparams(x, &DEFAULT_M0_GRID, &pilot)?;
                for (m0, prior_k, post_k) in &eb.grid {
                    info!("m0 {m0}: prior E[K] {prior_k:.3}, pilot mean K {post_k:.3}");
                }
                let alpha0 = self.alpha0.unwrap_or(eb.hyper.alpha0);
                let beta0 = self.beta0.unwrap_or(1.0 - alpha0);
                Hyperparams::new(eb.hyper.m0, alpha0, beta0)
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    /// Kept samples.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Sweeps between kept samples.
    #[arg(long, default_value_t = 50)]
    pub thin: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, value_enum, default_value = "one")]
    pub init: InitArg,
}

impl ChainArgs {
    fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            samples: self.samples,
            thin: self.thin,
            burn_in: self.burnin,
            seed,
            init: match self.init {
                InitArg::One => Init::OneCluster,
                InitArg::Singletons => Init::Singletons,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    #[arg(long, value_enum, default_value = "greedy")]
    pub method: MethodArg,
    /// Informer set size.
    #[arg(long, default_value_t = 8)]
    pub na: usize,
    /// Top-set size in the loss.
    #[arg(long, default_value_t = 36)]
    pub nt: usize,
    /// Predictive draws per ensemble member.
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ensemble JSON path.
    #[arg(long)]
    pub output: PathBuf,
    /// Cluster count per sweep, as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub ensemble: PathBuf,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub ensemble: PathBuf,
    /// CSV of `compound,outcome` with outcome 0 or 1.
    #[arg(long)]
    pub assay: Option<PathBuf>,
    /// Ranking CSV path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Extra informer rules scored on the same folds.
    #[arg(long, value_enum)]
    pub baseline: Vec<BaselineArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics CSV path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn with_output<F: FnOnce(&mut dyn Write) -> Result<()>>(path: Option<&Path>, f: F) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn load_ensemble(path: &Path, x: &BioactivityMatrix) -> Result<PosteriorEnsemble<f64>> {
    PosteriorEnsemble::read_json(BufReader::new(File::open(path)?), x)
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let x = args.input.load()?;
    let hyper = args.prior.resolve(&x, args.seed)?;
    info!("sampling with m0 {} alpha0 {} beta0 {}", hyper.m0, hyper.alpha0, hyper.beta0);
    let ensemble = sample_posterior(&x, hyper, &args.chain.config(args.seed))?;
    let mut w = create(&args.output)?;
    ensemble.write_json(&mut w)?;
    w.flush()?;
    if let Some(trace) = &args.trace {
        let mut w = create(trace)?;
        ensemble.write_trace_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn cmd_select(args: &SelectArgs) -> Result<()> {
    let x = args.input.load()?;
    let ensemble = load_ensemble(&args.ensemble, &x)?;
    let config = SelectionConfig {
        n_informers: args.selection.na,
        n_top: args.selection.nt,
        method: args.selection.method.into(),
        seed: args.seed,
        draws_per_sample: args.selection.draws,
    };
    let selection = select(&ensemble, &config)?;
    let report = SelectionReport::new(&config, &selection, x.compounds());
    with_output(args.output.as_deref(), |w| {
        report.write_json(&mut *w)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Reads `compound,outcome` rows. Compounds may be given by id or by
/// 0-based column index.
pub fn read_assay(path: &Path, x: &BioactivityMatrix) -> Result<InformerAssay> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let (mut js, mut xs) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        if rec.len() != 2 {
            return Err(BoiseError::Parse { row, msg: format!("expected 2 fields, found {}", rec.len()) });
        }
        let j = match x.compound_index(&rec[0]) {
            Some(j) => j,
            None => rec[0]
                .parse::<usize>()
                .ok()
                .filter(|&j| j < x.ncols())
                .ok_or_else(|| BoiseError::Parse { row, msg: format!("unknown compound {:?}", &rec[0]) })?,
        };
        let v = match &rec[1] {
            "1" => true,
            "0" => false,
            other => return Err(BoiseError::Parse { row, msg: format!("outcome must be 0 or 1, found {other:?}") }),
        };
        js.push(j);
        xs.push(v);
    }
    InformerAssay::new(js, xs, x.ncols())
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let x = args.input.load()?;
    let ensemble = load_ensemble(&args.ensemble, &x)?;
    let assay = match &args.assay {
        Some(p) => read_assay(p, &x)?,
        None => InformerAssay::empty(),
    };
    let ranking = rank_all(&ensemble, &assay)?;
    with_output(args.output.as_deref(), |w| write_ranking_csv(w, &ranking, x.compounds(), assay.informers()))
}

pub fn cmd_cv(args: &CvArgs) -> Result<()> {
    let x = args.input.load()?;
    let mut config = CvConfig::new(args.selection.na, args.selection.nt);
    if args.prior.is_fixed() {
        config.hyper = Some(args.prior.resolve(&x, args.seed)?);
    } else if args.prior.alpha0.is_some() || args.prior.beta0.is_some() {
        return invalid("--alpha0/--beta0 without --m0 are not supported by cv; per-fold values come from the training rows");
    }
    config.sampler = args.chain.config(args.seed);
    config.methods = vec![args.selection.method.into()];
    config.baselines = args
        .baseline
        .iter()
        .map(|b| match b {
            BaselineArg::FrequentHitters => Baseline::FrequentHitters,
            BaselineArg::Random => Baseline::Random,
        })
        .collect();
    config.draws_per_sample = args.selection.draws;
    config.seed = args.seed;
    let records = run_cv(&x, &config)?;
    with_output(args.output.as_deref(), |w| write_metrics_csv(w, &records))
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| BoiseError::Invalid(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Select(a) => cmd_select(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Cv(a) => cmd_cv(a),
    }
}

/// Parses the process arguments and runs the command.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
