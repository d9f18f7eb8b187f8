use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::csr::{dense_matvec, flops, spmv, CsrMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { sizes: vec![256, 1024, 4096], sparsities: vec![0.5, 0.8, 0.9, 0.95], repetitions: 7, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub size: usize,
    pub sparsity: f64,
    pub dense_seconds: f64,
    pub sparse_seconds: f64,
    pub speedup: f64,
    pub flops_dense: u64,
    pub flops_sparse: u64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_median(reps: usize, mut f: impl FnMut() -> f64) -> f64 {
    let mut sink = f();
    let times = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            sink += f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    std::hint::black_box(sink);
    median(times)
}

/// Square random matrix with exactly `⌊sparsity·n²⌋` entries removed.
pub fn random_masked(n: usize, sparsity: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, CsrMatrix) {
    let w = Array2::from_shape_simple_fn((n, n), || rng.random_range(-1.0..1.0));
    let pruned = (sparsity * (n * n) as f64).floor() as usize;
    let drop: std::collections::HashSet<usize> = rand::seq::index::sample(rng, n * n, pruned).into_iter().collect();
    let csr = CsrMatrix::from_dense_filtered(w.view(), |i, j| !drop.contains(&(i * n + j)));
    (w, csr)
}

/// Single-threaded median timings of dense and CSR mat-vec, one warm-up call each.
pub fn bench(cfg: &BenchConfig) -> Vec<BenchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for &n in &cfg.sizes {
        for &s in &cfg.sparsities {
            let (w, csr) = random_masked(n, s, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xa = Array1::from(x.clone());
            let dense_seconds = time_median(cfg.repetitions, || dense_matvec(w.view(), &x)[0]);
            let sparse_seconds = time_median(cfg.repetitions, || spmv(&csr, xa.view()).expect("square")[0]);
            let (fd, fs) = flops(&csr);
            out.push(BenchResult {
                size: n,
                sparsity: s,
                dense_seconds,
                sparse_seconds,
                speedup: dense_seconds / sparse_seconds,
                flops_dense: fd,
                flops_sparse: fs,
            });
        }
    }
    out
}
