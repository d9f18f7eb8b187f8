//! CSR execution of pruned layers and the inference-cost benchmark.

mod bench;
mod csr;

pub use bench::{bench, random_masked, BenchConfig, BenchResult};
pub use csr::{dense_matvec, flops, spmm, spmv, to_csr, CsrMatrix, SparseModel};
