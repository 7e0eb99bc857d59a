//! Fixed-effect GLMs, cluster-robust errors, binned summary tables and the
//! classical two-sided tests.

use thiserror::Error;

pub mod frame;
pub mod glm;
pub mod hypothesis;
pub mod linalg;
pub mod tables;

pub use frame::{Column, Frame};
pub use glm::{cluster_robust_se, fit_glm, margins, Family, GlmFit, GlmSpec, MarginRow, MarginSpec, Term};
pub use hypothesis::{hypothesis_test, TestData, TestKind, TestResult};
pub use tables::{binned_scatter, grid_correlation, pearson, quantile_bins, quantile_grid, BinRow, QuantileBins, QuantileGrid};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?} is not {expected}")]
    ColumnType { column: String, expected: &'static str },
    #[error("column {column:?} has {got} rows, expected {expected}")]
    ColumnLength { column: String, expected: usize, got: usize },
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("no complete observations")]
    EmptyData,
    #[error("response {0:?} has zero variance")]
    ZeroVariance(String),
    #[error("response {0:?} must be 0/1 for a logistic fit")]
    NonBinary(String),
    #[error("need at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Sum of `f(i)` for `i < n`, computed over fixed chunks and combined in
/// chunk order so the result does not depend on the thread count.
pub(crate) fn ordered_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    use rayon::prelude::*;
    const CHUNK: usize = 8192;
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
        .collect();
    partials.into_iter().sum()
}
