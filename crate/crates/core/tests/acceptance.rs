//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use boise::cli::cv::{run_cv, Baseline, CvConfig, FoldRecord};
use boise::dpmm::{cr_log_prior_sizes, sample_posterior, Hyperparams, Init, PilotConfig, SamplerConfig};
use boise::metrics::{ef10, f1_best_split, mcc_best_split, nef10, rocauc};
use boise::oracle::{enumerate_partitions, exact_posterior, ExactModel, NoClusterModel};
use boise::pel::{Pel1Config, PelEngine};
use boise::ranker::{top_set, Ranking};
use boise::rng::{derive_seed, seeded};
use boise::selector::{greedy_select, Method};
use boise::{BioactivityMatrix, InformerAssay};
use common::*;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn all_outcomes(informers: &[usize], n: usize) -> Vec<InformerAssay> {
    let k = informers.len();
    (0..1usize << k)
        .map(|bits| InformerAssay::new(informers.to_vec(), (0..k).map(|t| bits >> t & 1 == 1).collect(), n).unwrap())
        .collect()
}

fn risk_monotonicity() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(101);
    let tol = 1e-10;
    let (mut chains, mut worst) = (0usize, f64::NEG_INFINITY);
    for _ in 0..200 {
        let m = rng.random_range(3..=5);
        let n = rng.random_range(4..=6);
        let p = rng.random_range(0.2..0.8);
        let x = random_complete(&mut rng, m, n, p);
        let hyper = random_hyper(&mut rng);
        let n_top = rng.random_range(1..n);
        let model = ExactModel::new(&x, hyper, n_top).unwrap();
        let empty = model.pel1(&[]).unwrap();
        for j in 0..n {
            let single = model.pel1(&[j]).unwrap();
            worst = worst.max(single - empty);
            for k in (0..n).filter(|&k| k != j) {
                let pair = model.pel1(&[j, k]).unwrap();
                worst = worst.max(pair - single);
                chains += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= tol && secs < 300.0,
        format!("{chains} chains on 200 matrices, largest increase {worst:.2e} (tol {tol:.0e}), {secs:.1}s"),
    )
}

fn top_set_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(202);
    let (mut cases, mut violations) = (0usize, 0usize);
    for _ in 0..30 {
        let m = rng.random_range(2..=4);
        let n = rng.random_range(4..=10);
        let p = rng.random_range(0.2..0.8);
        let x = random_complete(&mut rng, m, n, p);
        let hyper = random_hyper(&mut rng);
        let model = ExactModel::new(&x, hyper, 1).unwrap();
        let size = rng.random_range(0..=3.min(n));
        let informers = rand::seq::index::sample(&mut rng, n, size).into_vec();
        for assay in all_outcomes(&informers, n) {
            let theta = model.theta_hat_all(&assay).unwrap();
            for n_top in 1..=n {
                let mut best = top_set(&theta, n_top);
                best.sort_unstable();
                let loss = |set: &[usize]| set.iter().map(|&j| 1.0 - theta[j]).sum::<f64>();
                let top_loss = loss(&best);
                for subset in subsets(n, n_top) {
                    cases += 1;
                    if loss(&subset) < top_loss - 1e-14 {
                        violations += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < 120.0,
        format!("{cases} subset comparisons, {violations} beat the top set, {secs:.1}s"),
    )
}

/// Exact no-cluster PEL_1 by quadrature over each compound's Beta posterior.
fn quadrature_pel1(sums: &[usize], m: usize, alpha: f64, beta: f64, informers: &[usize], n_top: usize) -> f64 {
    let nodes = gauss_legendre_unit(40);
    let density = |s: usize, f: usize, t: f64| t.powf(alpha + s as f64 - 1.0) * (1.0 - t).powf(beta + f as f64 - 1.0);
    let integrate = |g: &dyn Fn(f64) -> f64| nodes.iter().map(|&(t, w)| w * g(t)).sum::<f64>();
    let mean = |s: usize, f: usize| integrate(&|t| t * density(s, f, t)) / integrate(&|t| density(s, f, t));
    let n = sums.len();
    let k = informers.len();
    let mut total = 0.0;
    for bits in 0..1usize << k {
        let mut mass = 1.0;
        let mut theta: Vec<f64> = sums.iter().map(|&s| mean(s, m - s)).collect();
        for (t, &j) in informers.iter().enumerate() {
            let x = bits >> t & 1 == 1;
            let p1 = mean(sums[j], m - sums[j]);
            mass *= if x { p1 } else { 1.0 - p1 };
            let (s, f) = if x { (sums[j] + 1, m - sums[j]) } else { (sums[j], m - sums[j] + 1) };
            theta[j] = mean(s, f);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| theta[b].partial_cmp(&theta[a]).unwrap().then(a.cmp(&b)));
        total += mass * order[..n_top].iter().map(|&j| 1.0 - theta[j]).sum::<f64>();
    }
    total
}

fn frequent_hitters_counterexample() -> Outcome {
    let m = 6;
    let sums = [1usize, 3, 3, 5];
    let x = with_column_sums(m, &sums);
    let mut lines = Vec::new();
    let mut pass = true;
    for &(alpha, beta) in &[(1.0, 1.0), (2.0, 1.0), (1.0, 3.0)] {
        let model = NoClusterModel::new(&x, alpha, beta, 2).unwrap();
        let second = model.pel1(&[2]).unwrap();
        let top = model.pel1(&[3]).unwrap();
        let second_q = quadrature_pel1(&sums, m, alpha, beta, &[2], 2);
        let top_q = quadrature_pel1(&sums, m, alpha, beta, &[3], 2);
        let agree = (second - second_q).abs().max((top - top_q).abs());
        let chosen = greedy_select(&model, 1).unwrap().informers[0];
        let ok = second < top && second_q < top_q && agree <= 1e-12 && sums[chosen] == 3;
        pass &= ok;
        lines.push(format!(
            "a={alpha},b={beta}: PEL1(s=3)={second:.6} < PEL1(s=5)={top:.6}, quadrature gap {agree:.1e}, greedy picks s={}",
            sums[chosen]
        ));
    }
    outcome(pass, lines.join("; "))
}

fn constant_risk() -> Outcome {
    let mut rng = seeded(404);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..50 {
        let m = 9;
        let n = rng.random_range(3..=8);
        let sums = rand::seq::index::sample(&mut rng, m + 1, n).into_vec();
        let x = with_column_sums(m, &sums);
        let alpha = rng.random_range(0.1..3.0);
        let beta = rng.random_range(0.1..3.0);
        for n_top in 1..=n {
            let model = NoClusterModel::new(&x, alpha, beta, n_top).unwrap();
            let risks: Vec<f64> = (0..n).map(|j| model.pel1(&[j]).unwrap()).collect();
            let lo = risks.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = risks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(hi - lo);
            cases += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{cases} (matrix, n_T) cases, largest singleton spread {worst:.2e}"))
}

fn tv(freq: &[(Vec<usize>, f64)], emp: &std::collections::HashMap<Vec<usize>, usize>, total: usize) -> f64 {
    freq.iter()
        .map(|(p, q)| (q - *emp.get(p).unwrap_or(&0) as f64 / total as f64).abs())
        .sum::<f64>()
        / 2.0
}

fn sampler_correctness() -> Outcome {
    let instances: Vec<(BioactivityMatrix, Hyperparams<f64>)> = vec![
        (BioactivityMatrix::from_rows(&[vec![1, 0], vec![1, 0], vec![0, 1]]).unwrap(), Hyperparams::new(1.0, 1.0, 1.0).unwrap()),
        (BioactivityMatrix::from_rows(&[vec![1, 1], vec![0, 1], vec![0, 0]]).unwrap(), Hyperparams::new(2.0, 0.5, 0.5).unwrap()),
        (
            BioactivityMatrix::from_option_rows(&[vec![Some(1), None], vec![Some(1), Some(0)], vec![None, Some(1)]]).unwrap(),
            Hyperparams::new(0.7, 1.0, 2.0).unwrap(),
        ),
    ];
    let mut worst = 0.0f64;
    for (t, (x, hyper)) in instances.iter().enumerate() {
        let exact = exact_posterior(x, hyper).unwrap();
        let config = SamplerConfig { samples: 20_000, thin: 1, burn_in: 1000, seed: 500 + t as u64, init: Init::OneCluster };
        let ens = sample_posterior(x, *hyper, &config).unwrap();
        let mut emp = std::collections::HashMap::new();
        for c in &ens.samples {
            *emp.entry(c.labels().to_vec()).or_insert(0usize) += 1;
        }
        worst = worst.max(tv(&exact, &emp, ens.len()));
    }
    let mut prior_gap = 0.0f64;
    for m in 1..=6 {
        for m0 in [0.5f64, 1.0, 2.0, 7.5] {
            let total: f64 = enumerate_partitions(m)
                .unwrap()
                .iter()
                .map(|p| {
                    let k = p.iter().max().unwrap() + 1;
                    let mut sizes = vec![0; k];
                    p.iter().for_each(|&l| sizes[l] += 1);
                    cr_log_prior_sizes(&sizes, m0).exp()
                })
                .sum();
            prior_gap = prior_gap.max((total - 1.0).abs());
        }
    }
    outcome(
        worst <= 0.05 && prior_gap <= 1e-12,
        format!("max TV {worst:.4} over 3 instances at 20000 samples; CR prior mass error {prior_gap:.1e} for m<=6"),
    )
}

struct RecycleCase {
    x: BioactivityMatrix,
    hyper: Hyperparams<f64>,
    informers: Vec<usize>,
}

fn recycle_cases() -> Vec<RecycleCase> {
    vec![
        RecycleCase {
            x: BioactivityMatrix::from_rows(&[vec![1, 0, 1], vec![1, 1, 0], vec![0, 0, 1]]).unwrap(),
            hyper: Hyperparams::new(1.0, 0.5, 0.5).unwrap(),
            informers: vec![0],
        },
        RecycleCase {
            x: BioactivityMatrix::from_rows(&[vec![1, 0, 1, 0], vec![1, 1, 0, 0], vec![0, 0, 1, 1], vec![1, 0, 1, 1]]).unwrap(),
            hyper: Hyperparams::new(2.0, 0.4, 0.6).unwrap(),
            informers: vec![1, 3],
        },
        RecycleCase {
            x: BioactivityMatrix::from_option_rows(&[
                vec![Some(1), None, Some(1), Some(0)],
                vec![Some(1), Some(1), Some(0), Some(0)],
                vec![Some(0), Some(0), None, Some(1)],
                vec![Some(0), Some(1), Some(1), Some(1)],
            ])
            .unwrap(),
            hyper: Hyperparams::new(1.5, 1.0, 1.0).unwrap(),
            informers: vec![0, 2, 3],
        },
    ]
}

fn ensemble_for(case: &RecycleCase, samples: usize, seed: u64) -> boise::PosteriorEnsemble {
    let config = SamplerConfig { samples, thin: 5, burn_in: 500, seed, init: Init::OneCluster };
    sample_posterior(&case.x, case.hyper, &config).unwrap()
}

fn theta_error(case: &RecycleCase, exact: &ExactModel<'_, f64>, ens: &boise::PosteriorEnsemble) -> f64 {
    let n = case.x.ncols();
    let mut worst = 0.0f64;
    for assay in all_outcomes(&case.informers, n) {
        let mc = boise::pel::theta_hat_all(ens, &assay).unwrap();
        let ex = exact.theta_hat_all(&assay).unwrap();
        for (a, b) in mc.iter().zip(&ex) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn recycling_estimator() -> Outcome {
    let n_top = 2;
    let (mut theta_worst, mut pel_worst) = (0.0f64, 0.0f64);
    for (t, case) in recycle_cases().iter().enumerate() {
        let exact = ExactModel::new(&case.x, case.hyper, n_top).unwrap();
        let ens = ensemble_for(case, 5000, 600 + t as u64);
        theta_worst = theta_worst.max(theta_error(case, &exact, &ens));
        let engine = PelEngine::new(&ens, n_top, &Pel1Config { draws_per_sample: 1, seed: 700 + t as u64 }).unwrap();
        for k in 0..=case.informers.len() {
            let a = &case.informers[..k];
            pel_worst = pel_worst.max((engine.pel1(a).unwrap() - exact.pel1(a).unwrap()).abs());
        }
    }
    let case = &recycle_cases()[0];
    let exact = ExactModel::new(&case.x, case.hyper, n_top).unwrap();
    let sizes = [100usize, 1000, 5000];
    let mean_err: Vec<f64> = sizes
        .iter()
        .map(|&size| {
            (0..20u64)
                .map(|s| theta_error(case, &exact, &ensemble_for(case, size, derive_seed(800, s))))
                .sum::<f64>()
                / 20.0
        })
        .collect();
    let shrinking = mean_err.windows(2).all(|w| w[1] < w[0]);
    outcome(
        theta_worst <= 0.01 && pel_worst <= 0.02 && shrinking,
        format!(
            "max theta error {theta_worst:.4} (tol 0.01), max PEL1 error {pel_worst:.4} (tol 0.02); mean theta error over 20 seeds at N=100/1000/5000: {:.4}/{:.4}/{:.4}",
            mean_err[0], mean_err[1], mean_err[2]
        ),
    )
}

fn metric_identities() -> Outcome {
    let mut pass = true;
    let mut misses = Vec::new();
    for (n, actives) in [(10usize, 2usize), (20, 3), (40, 10), (50, 1)] {
        let truth: Vec<bool> = (0..n).map(|j| j < actives).collect();
        let perfect = Ranking::from_scores((0..n).map(|j| (n - j) as f64).collect());
        let values = [
            nef10(&perfect, &truth).unwrap(),
            rocauc(&perfect, &truth).unwrap(),
            mcc_best_split(&perfect, &truth).unwrap(),
            f1_best_split(&perfect, &truth).unwrap(),
        ];
        if values != [1.0; 4] {
            pass = false;
            misses.push(format!("n={n}, actives={actives}: {values:?}"));
        }
    }
    // 20 compounds, 10 actives at even positions of the order: top decile
    // holds exactly the base rate
    let truth: Vec<bool> = (0..20).map(|j| j % 2 == 0).collect();
    let base = Ranking::from_scores((0..20).map(|j| (20 - j) as f64).collect());
    let ef = ef10(&base, &truth).unwrap();
    let nef = nef10(&base, &truth).unwrap();
    pass &= ef == 1.0 && nef == 0.5;
    outcome(
        pass,
        format!("perfect rankings on 4 truth vectors, mismatches {misses:?}; base-rate ranking EF10 {ef}, NEF10 {nef}"),
    )
}

fn missing_data_invariance() -> Outcome {
    let mut rng = seeded(909);
    let mut identical = 0;
    let mut total = 0;
    for t in 0..10u64 {
        let x = random_complete(&mut rng, 8, 7, 0.4);
        let cells: Vec<(usize, usize)> =
            (0..8).flat_map(|i| (0..7).map(move |j| (i, j))).filter(|_| rng.random::<f64>() < 0.25).collect();
        let masked = x.with_masked(&cells);
        let mut flipped = masked.clone();
        for &(i, j) in &cells {
            flipped = flipped.with_hidden_value(i, j, !x.get(i, j).unwrap());
        }
        let hyper = Hyperparams::new(1.5, 0.6, 0.9).unwrap();
        let config = SamplerConfig { samples: 50, thin: 3, burn_in: 30, seed: 40 + t, init: Init::OneCluster };
        let a = sample_posterior(&masked, hyper, &config).unwrap();
        let b = sample_posterior(&flipped, hyper, &config).unwrap();
        total += 1;
        if a.samples == b.samples && a.trace == b.trace {
            identical += 1;
        }

        // a fully unobserved column against the same matrix without it
        let col = (t as usize) % 7;
        let col_cells: Vec<(usize, usize)> = (0..8).map(|i| (i, col)).collect();
        let hidden = x.with_masked(&col_cells);
        let keep: Vec<usize> = (0..7).filter(|&j| j != col).collect();
        let dropped = x.select_columns(&keep).unwrap();
        let a = sample_posterior(&hidden, hyper, &config).unwrap();
        let b = sample_posterior(&dropped, hyper, &config).unwrap();
        let labels_a: Vec<&[usize]> = a.samples.iter().map(|c| c.labels()).collect();
        let labels_b: Vec<&[usize]> = b.samples.iter().map(|c| c.labels()).collect();
        total += 1;
        if labels_a == labels_b && a.trace == b.trace {
            identical += 1;
        }
    }
    outcome(
        identical == total,
        format!("{identical}/{total} ensemble pairs bit-identical (masked values altered, unobserved column removed)"),
    )
}

struct CvSummary {
    records: Vec<FoldRecord>,
    seconds: f64,
}

fn run_synthetic_cv() -> CvSummary {
    let start = Instant::now();
    let mut records = Vec::new();
    for seed in 0..5u64 {
        let mut rng = seeded(derive_seed(1000, seed));
        let (x, _) = synthetic_blocks(&mut rng, 30, 40, 3, 0.15, 0.05, 4, 0.6);
        let mut config = CvConfig::new(4, 4);
        config.pilot = PilotConfig { burn_in: 100, sweeps: 200, seed: 0 };
        config.sampler = SamplerConfig { samples: 100, thin: 10, burn_in: 200, seed: 0, init: Init::OneCluster };
        config.methods = vec![Method::GreedyPel, Method::Entropy];
        config.baselines = vec![Baseline::FrequentHitters, Baseline::Random];
        config.seed = seed;
        records.extend(run_cv(&x, &config).unwrap());
    }
    CvSummary { records, seconds: start.elapsed().as_secs_f64() }
}

fn median_nef(records: &[FoldRecord], method: &str) -> (f64, usize) {
    let v: Vec<f64> = records.iter().filter(|r| r.method == method).filter_map(|r| r.nef10).collect();
    let n = v.len();
    (median(v), n)
}

fn retrospective(cv: &CvSummary) -> Outcome {
    let (boise, n) = median_nef(&cv.records, "boise");
    let (fh, _) = median_nef(&cv.records, "frequent-hitters");
    let (rand, _) = median_nef(&cv.records, "random");
    outcome(
        boise >= fh + 0.05 && boise >= rand + 0.10 && cv.seconds < 1800.0,
        format!(
            "median NEF10 over {n} folds: BOISE {boise:.4}, frequent-hitters {fh:.4}, random {rand:.4}; cv run {:.1}s",
            cv.seconds
        ),
    )
}

fn accelerated_parity(cv: &CvSummary) -> Outcome {
    let (greedy, _) = median_nef(&cv.records, "boise");
    let (entropy, _) = median_nef(&cv.records, "boise-entropy");
    let time = |m: &str| cv.records.iter().filter(|r| r.method == m).map(|r| r.select_seconds).sum::<f64>();
    let (tg, te) = (time("boise"), time("boise-entropy"));
    outcome(
        (entropy - greedy).abs() <= 0.05 && te <= 0.25 * tg,
        format!(
            "median NEF10 entropy {entropy:.4} vs greedy {greedy:.4}; selection time {te:.2}s vs {tg:.2}s ({:.1}%)",
            100.0 * te / tg
        ),
    )
}

fn guarded<F: FnOnce() -> Outcome>(f: F) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: usize| filter.is_empty() || filter.iter().any(|f| f == &id.to_string());
    let mut cv: Option<CvSummary> = None;
    let mut failed = 0;
    let names = [
        "risk monotonicity",
        "top-set optimality",
        "frequent-hitters counterexample",
        "constant risk",
        "sampler correctness",
        "recycling estimator",
        "metric identities",
        "synthetic retrospective",
        "missing-data invariance",
        "accelerated selector parity",
    ];
    for (idx, name) in names.iter().enumerate() {
        let id = idx + 1;
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let result = guarded(|| match id {
            1 => risk_monotonicity(),
            2 => top_set_optimality(),
            3 => frequent_hitters_counterexample(),
            4 => constant_risk(),
            5 => sampler_correctness(),
            6 => recycling_estimator(),
            7 => metric_identities(),
            8 => retrospective(cv.get_or_insert_with(run_synthetic_cv)),
            9 => missing_data_invariance(),
            10 => accelerated_parity(cv.get_or_insert_with(run_synthetic_cv)),
            _ => unreachable!(),
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<32} {} ({:.1}s) {}",
            name,
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
