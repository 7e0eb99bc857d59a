//! Equal-count binned scatters, quantile heatmap grids and grid correlation.

use serde::{Deserialize, Serialize};

use super::StatsError;

pub const DEFAULT_SCATTER_BINS: usize = 85;
pub const DEFAULT_GRID_QUANTILES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin: usize,
    pub x_mean: f64,
    pub y_mean: f64,
    pub count: usize,
}

/// Sorts by `x` (ties by input position) and cuts into `n_bins` consecutive
/// runs whose sizes differ by at most one; the first `n % n_bins` runs take
/// the extra observation.
pub fn binned_scatter(x: &[f64], y: &[f64], n_bins: usize) -> Result<Vec<BinRow>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::ColumnLength {
            column: "y".into(),
            expected: x.len(),
            got: y.len(),
        });
    }
    if n_bins == 0 || x.len() < n_bins {
        return Err(StatsError::InsufficientData(format!(
            "{} observations for {n_bins} bins",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let (base, extra) = (x.len() / n_bins, x.len() % n_bins);
    let mut start = 0;
    Ok((0..n_bins)
        .map(|bin| {
            let size = base + usize::from(bin < extra);
            let idx = &order[start..start + size];
            start += size;
            BinRow {
                bin,
                x_mean: idx.iter().map(|&i| x[i]).sum::<f64>() / size as f64,
                y_mean: idx.iter().map(|&i| y[i]).sum::<f64>() / size as f64,
                count: size,
            }
        })
        .collect())
}

/// Marginal quantile assignment. Cut `k` is the `ceil((k+1) n / q)`-th order
/// statistic; a value goes to the first bin whose cut it does not exceed, so
/// ties fall to the lower bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBins {
    pub cuts: Vec<f64>,
    pub bins: Vec<usize>,
}

impl QuantileBins {
    pub fn assign(&self, v: f64) -> usize {
        self.cuts.partition_point(|&c| c < v).min(self.cuts.len() - 1)
    }
}

pub fn quantile_bins(values: &[f64], q: usize) -> Result<QuantileBins, StatsError> {
    if q == 0 || values.len() < q {
        return Err(StatsError::InsufficientData(format!("{} values for {q} quantiles", values.len())));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (0..q).map(|k| sorted[((k + 1) * n).div_ceil(q) - 1]).collect();
    let mut qb = QuantileBins { cuts, bins: Vec::new() };
    qb.bins = values.iter().map(|&v| qb.assign(v)).collect();
    Ok(qb)
}

/// `q x q` cell means of `y`, rows indexed by the `x1` quantile and columns
/// by the `x2` quantile. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    pub q: usize,
    pub cuts_x1: Vec<f64>,
    pub cuts_x2: Vec<f64>,
    pub means: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl QuantileGrid {
    pub fn cell(&self, r: usize, c: usize) -> Option<f64> {
        self.means[r * self.q + c]
    }
}

pub fn quantile_grid(x1: &[f64], x2: &[f64], y: &[f64], q: usize) -> Result<QuantileGrid, StatsError> {
    if x1.len() != x2.len() || x1.len() != y.len() {
        return Err(StatsError::ColumnLength {
            column: "x2/y".into(),
            expected: x1.len(),
            got: x2.len().min(y.len()),
        });
    }
    if x1.len() < q * q {
        return Err(StatsError::InsufficientData(format!(
            "{} observations for a {q}x{q} grid",
            x1.len()
        )));
    }
    let (b1, b2) = (quantile_bins(x1, q)?, quantile_bins(x2, q)?);
    let mut sums = vec![0.0; q * q];
    let mut counts = vec![0usize; q * q];
    for ((&r, &c), &v) in b1.bins.iter().zip(&b2.bins).zip(y) {
        sums[r * q + c] += v;
        counts[r * q + c] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(QuantileGrid {
        q,
        cuts_x1: b1.cuts,
        cuts_x2: b2.cuts,
        means,
        counts,
    })
}

/// Sample Pearson correlation; `None` when fewer than two points or either
/// side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || n != b.len() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation over cells populated in both grids.
pub fn grid_correlation(a: &QuantileGrid, b: &QuantileGrid) -> Option<f64> {
    let (va, vb): (Vec<f64>, Vec<f64>) = a
        .means
        .iter()
        .zip(&b.means)
        .filter_map(|(x, y)| Some((((*x)?), (*y)?)))
        .unzip();
    pearson(&va, &vb)
}
