#![allow(dead_code)]

use boise::dpmm::Hyperparams;
use boise::BioactivityMatrix;
use rand::Rng;

pub fn random_complete<R: Rng>(rng: &mut R, m: usize, n: usize, p: f64) -> BioactivityMatrix {
    let rows: Vec<Vec<u8>> = (0..m)
        .map(|_| (0..n).map(|_| u8::from(rng.random::<f64>() < p)).collect())
        .collect();
    BioactivityMatrix::from_rows(&rows).unwrap()
}

/// Random matrix where each cell is missing with probability `miss`.
pub fn random_partial<R: Rng>(rng: &mut R, m: usize, n: usize, p: f64, miss: f64) -> BioactivityMatrix {
    let rows: Vec<Vec<Option<u8>>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < miss {
                        None
                    } else {
                        Some(u8::from(rng.random::<f64>() < p))
                    }
                })
                .collect()
        })
        .collect();
    BioactivityMatrix::from_option_rows(&rows).unwrap()
}

pub fn random_hyper<R: Rng>(rng: &mut R) -> Hyperparams<f64> {
    Hyperparams::new(
        rng.random_range(0.3..5.0),
        rng.random_range(0.1..2.0),
        rng.random_range(0.1..2.0),
    )
    .unwrap()
}

/// Block-structured data: `clusters` latent groups of equal size, each with a
/// random 0/1 activity profile over compounds (active with probability
/// `density`), rows copying their group's profile with each cell flipped
/// with probability `noise`. The last `promiscuous` compounds instead hit
/// every target independently with probability `promiscuous_rate`.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_blocks<R: Rng>(
    rng: &mut R,
    m: usize,
    n: usize,
    clusters: usize,
    density: f64,
    noise: f64,
    promiscuous: usize,
    promiscuous_rate: f64,
) -> (BioactivityMatrix, Vec<usize>) {
    let profiles: Vec<Vec<bool>> = (0..clusters)
        .map(|_| (0..n).map(|_| rng.random::<f64>() < density).collect())
        .collect();
    let labels: Vec<usize> = (0..m).map(|i| i * clusters / m).collect();
    let rows: Vec<Vec<u8>> = labels
        .iter()
        .map(|&c| {
            (0..n)
                .map(|j| {
                    let hit = if j >= n - promiscuous {
                        rng.random::<f64>() < promiscuous_rate
                    } else {
                        profiles[c][j] ^ (rng.random::<f64>() < noise)
                    };
                    u8::from(hit)
                })
                .collect()
        })
        .collect();
    (BioactivityMatrix::from_rows(&rows).unwrap(), labels)
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Matrix with the given column sums: column `j` is active on its first
/// `sums[j]` rows.
pub fn with_column_sums(m: usize, sums: &[usize]) -> BioactivityMatrix {
    let rows: Vec<Vec<u8>> = (0..m)
        .map(|i| sums.iter().map(|&s| u8::from(i < s)).collect())
        .collect();
    BioactivityMatrix::from_rows(&rows).unwrap()
}
