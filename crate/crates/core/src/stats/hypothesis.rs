//! Two-sided classical tests.
//!
//! Minimum sizes: Pearson needs 3 pairs; KS needs one value per sample; the
//! 2x2 chi-squared needs every row and column margin nonzero; the binomial
//! test needs one trial; the Welch t-test needs two values per sample and a
//! nonzero pooled variance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete, StudentsT};

use super::tables::pearson;
use super::StatsError;

/// Below this size on both sides the KS p-value is exact.
pub const KS_EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PearsonR,
    KsTwoSample,
    Chi2_2x2,
    Binomial,
    TTwoSample,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::PearsonR => "pearson_r",
            TestKind::KsTwoSample => "ks_two_sample",
            TestKind::Chi2_2x2 => "chi2_2x2",
            TestKind::Binomial => "binomial",
            TestKind::TTwoSample => "t_two_sample",
        })
    }
}

impl FromStr for TestKind {
    type Err = StatsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pearson_r" => TestKind::PearsonR,
            "ks_two_sample" => TestKind::KsTwoSample,
            "chi2_2x2" => TestKind::Chi2_2x2,
            "binomial" => TestKind::Binomial,
            "t_two_sample" => TestKind::TTwoSample,
            other => return Err(StatsError::InvalidSpec(format!("unknown test {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TestData {
    Paired { x: Vec<f64>, y: Vec<f64> },
    TwoSamples { a: Vec<f64>, b: Vec<f64> },
    Table2x2 { cells: [[u64; 2]; 2], #[serde(default)] yates: bool },
    Counts { successes: u64, trials: u64, p0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
}

pub fn hypothesis_test(kind: TestKind, data: &TestData) -> Result<TestResult, StatsError> {
    let mismatch = || StatsError::InvalidSpec(format!("{kind} does not accept this data shape"));
    match (kind, data) {
        (TestKind::PearsonR, TestData::Paired { x, y }) => pearson_test(x, y),
        (TestKind::KsTwoSample, TestData::TwoSamples { a, b }) => ks_two_sample(a, b),
        (TestKind::TTwoSample, TestData::TwoSamples { a, b }) => welch_t(a, b),
        (TestKind::Chi2_2x2, TestData::Table2x2 { cells, yates }) => chi2_2x2(*cells, *yates),
        (TestKind::Binomial, TestData::Counts { successes, trials, p0 }) => binomial_test(*successes, *trials, *p0),
        _ => Err(mismatch()),
    }
}

/// Correlation `r` with a t-test on `n - 2` degrees of freedom.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(StatsError::InsufficientData("pearson_r needs at least 3 pairs".into()));
    }
    let r = pearson(x, y).ok_or_else(|| StatsError::InsufficientData("constant input".into()))?;
    let df = (x.len() - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        2.0 * student(df)?.sf(t.abs())
    };
    Ok(TestResult {
        statistic: r,
        p_value: p,
        df: Some(df),
    })
}

fn student(df: f64) -> Result<StudentsT, StatsError> {
    StudentsT::new(0.0, 1.0, df).map_err(|e| StatsError::InsufficientData(e.to_string()))
}

/// Two-sample Kolmogorov-Smirnov on `D = max |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::InsufficientData("ks_two_sample needs non-empty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len(), sb.len());
    // D * n * m as an integer, stepping past tied values together.
    let (mut i, mut j, mut k) = (0usize, 0usize, 0i64);
    while i < n && j < m {
        let v = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < n && sa[i] == v {
            i += 1;
        }
        while j < m && sb[j] == v {
            j += 1;
        }
        k = k.max((i as i64 * m as i64 - j as i64 * n as i64).abs());
    }
    let d = k as f64 / (n as f64 * m as f64);
    let p = if n < KS_EXACT_LIMIT && m < KS_EXACT_LIMIT {
        ks_exact_sf(n, m, k)
    } else {
        ks_asymptotic_sf(n, m, d)
    };
    Ok(TestResult {
        statistic: d,
        p_value: p,
        df: None,
    })
}

/// `P(D >= k / nm)` by counting monotone lattice paths that stay strictly
/// inside `|i m - j n| < k`.
fn ks_exact_sf(n: usize, m: usize, k: i64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let inside = |i: usize, j: usize| (i as i64 * m as i64 - j as i64 * n as i64).abs() < k;
    let mut paths = vec![vec![0u128; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            if !inside(i, j) {
                continue;
            }
            paths[i][j] = if i == 0 && j == 0 {
                1
            } else {
                (if i > 0 { paths[i - 1][j] } else { 0 }) + (if j > 0 { paths[i][j - 1] } else { 0 })
            };
        }
    }
    let total = binomial_coefficient(n + m, n);
    (1.0 - paths[n][m] as f64 / total as f64).clamp(0.0, 1.0)
}

fn binomial_coefficient(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Asymptotic Kolmogorov tail with the effective-size correction
/// `(sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D`.
fn ks_asymptotic_sf(n: usize, m: usize, d: f64) -> f64 {
    let ne = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-squared on a 2x2 table, one degree of freedom.
pub fn chi2_2x2(cells: [[u64; 2]; 2], yates: bool) -> Result<TestResult, StatsError> {
    let [[a, b], [c, d]] = cells.map(|r| r.map(|v| v as f64));
    let n = a + b + c + d;
    let margins = (a + b) * (c + d) * (a + c) * (b + d);
    if margins == 0.0 {
        return Err(StatsError::InsufficientData("chi2_2x2 needs nonzero margins".into()));
    }
    let mut diff = (a * d - b * c).abs();
    if yates {
        diff = (diff - n / 2.0).max(0.0);
    }
    let stat = n * diff * diff / margins;
    let p = ChiSquared::new(1.0).expect("valid df").sf(stat);
    Ok(TestResult {
        statistic: stat,
        p_value: p,
        df: Some(1.0),
    })
}

/// Exact two-sided binomial test: sums the probability of every outcome no
/// more likely than the observed one (relative slack `1e-7`).
pub fn binomial_test(successes: u64, trials: u64, p0: f64) -> Result<TestResult, StatsError> {
    if trials == 0 || successes > trials || !(0.0..=1.0).contains(&p0) {
        return Err(StatsError::InsufficientData("binomial needs 0 <= k <= n, n >= 1, p0 in [0,1]".into()));
    }
    let dist = Binomial::new(p0, trials).map_err(|e| StatsError::InsufficientData(e.to_string()))?;
    let observed = dist.pmf(successes);
    let limit = observed * (1.0 + 1e-7);
    let p: f64 = (0..=trials).map(|i| dist.pmf(i)).filter(|&q| q <= limit).sum();
    Ok(TestResult {
        statistic: successes as f64,
        p_value: p.min(1.0),
        df: None,
    })
}

/// Welch two-sample t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData("t_two_sample needs two values per sample".into()));
    }
    let moments = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let (sa, sb) = (va / na, vb / nb);
    if sa + sb == 0.0 {
        return Err(StatsError::InsufficientData("both samples are constant".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: 2.0 * student(df)?.sf(t.abs()),
        df: Some(df),
    })
}
