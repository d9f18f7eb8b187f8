//! Look-ahead evaluation, loss normalizations and weight-structure reports.

mod metrics;
mod output;
mod reports;

pub use metrics::{
    binary_entropy, lookahead_window_ce, normalized_ce, relative_ce, window_ce, FinalEval, MetricsRecord,
};
pub use output::{read_metrics, write_metrics, MetricsFormat, CSV_HEADER};
pub use reports::{
    histogram_report, sparsity_vs_structure_report, HistogramReport, LayerHistogram, StructureRow, HISTOGRAM_BINS,
};
