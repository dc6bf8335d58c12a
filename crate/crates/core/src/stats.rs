//! Nonparametric tests for repeated-measures study data.
//!
//! [`friedman`] compares k conditions measured on the same n subjects;
//! [`wilcoxon_signed_rank`] compares two paired samples. Both are rank based
//! and use mid-ranks for ties. P-values are two-sided.

use std::io::Read;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Friedman,
    WilcoxonExact,
    WilcoxonNormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Subjects for Friedman; non-zero pairs for Wilcoxon.
    pub n_effective: usize,
}

/// Largest number of non-zero pairs for which the Wilcoxon p-value is exact.
pub const WILCOXON_EXACT_MAX_N: usize = 12;

/// n subjects (rows) by k conditions (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedMeasures {
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl RepeatedMeasures {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self, StatsError> {
        let k = labels.len();
        if k < 2 {
            return Err(StatsError::InvalidInput(format!("need at least 2 conditions, got {k}")));
        }
        if rows.len() < 2 {
            return Err(StatsError::InvalidInput(format!(
                "need at least 2 subjects, got {}",
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(StatsError::InvalidInput(format!(
                    "row {i} has {} cells, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::InvalidInput(format!(
                    "row {i} has a missing or non-finite cell"
                )));
            }
        }
        Ok(Self { rows, labels })
    }

    /// Unlabeled conditions are named `c1`, `c2`, ...
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let k = rows.first().map_or(0, Vec::len);
        Self::new(rows, (1..=k).map(|j| format!("c{j}")).collect())
    }

    /// Comma-separated matrix: header of condition labels, one row per subject.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let labels: Vec<String> = rdr
            .headers()
            .map_err(|e| StatsError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| StatsError::Csv(e.to_string()))?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|_| StatsError::InvalidInput(format!("row {}: cannot parse {cell:?}", i + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::new(rows, labels)
    }

    pub fn n_subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// 1-based ranks with ties given the mean of the ranks they span, plus the
/// tie term `Σ (t³ - t)` over tie groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
    }
}

/// Friedman rank test with tie correction; p from chi-square with k-1 df.
///
/// When every subject gives all conditions the same value there is no
/// within-subject variation: the statistic is 0 and p is 1.
pub fn friedman(rm: &RepeatedMeasures) -> TestResult {
    let n = rm.n_subjects() as f64;
    let k = rm.n_conditions();
    let kf = k as f64;
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in rm.rows() {
        let (ranks, t) = midranks(row);
        ties += t;
        for (s, r) in rank_sums.iter_mut().zip(ranks) {
            *s += r;
        }
    }
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let uncorrected = 12.0 / (n * kf * (kf + 1.0)) * sum_sq - 3.0 * n * (kf + 1.0);
    let correction = 1.0 - ties / (n * (kf * kf * kf - kf));
    let statistic = if correction <= 1e-12 {
        0.0
    } else {
        (uncorrected / correction).max(0.0)
    };
    TestResult {
        statistic,
        p_value: chi_square_sf(statistic, kf - 1.0),
        method: TestMethod::Friedman,
        n_effective: rm.n_subjects(),
    }
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped. The statistic is `min(W+, W-)`. With at most
/// [`WILCOXON_EXACT_MAX_N`] non-zero pairs the p-value is exact (the null
/// distribution of `W+` over all sign assignments, tie ranks included);
/// beyond that a tie-corrected normal approximation with continuity
/// correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::InvalidInput(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(StatsError::InvalidInput("need at least 2 pairs".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite value".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(StatsError::Degenerate("all paired differences are zero".into()));
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&magnitudes);
    // Mid-ranks are multiples of 1/2, so doubled ranks are exact integers.
    let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
    let total: u64 = doubled.iter().sum();
    let plus: u64 = doubled
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w_min = plus.min(total - plus);
    let statistic = w_min as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX_N {
        Ok(TestResult {
            statistic,
            p_value: exact_signed_rank_p(&doubled, w_min),
            method: TestMethod::WilcoxonExact,
            n_effective: n,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let w_plus = plus as f64 / 2.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        Ok(TestResult {
            statistic,
            p_value: erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
            method: TestMethod::WilcoxonNormalApprox,
            n_effective: n,
        })
    }
}

/// `P(min(W+, W-) <= observed)` under the null, via the count of sign
/// assignments reaching each doubled rank sum.
fn exact_signed_rank_p(doubled_ranks: &[u64], observed_min: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as u64).min(total - *s as u64) <= observed_min)
        .map(|(_, c)| c)
        .sum();
    (extreme as f64 / 2f64.powi(doubled_ranks.len() as i32)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub a: String,
    pub b: String,
    pub result: TestResult,
}

/// Wilcoxon signed-rank for every pair of conditions. Pairs whose differences
/// are all zero are skipped.
pub fn pairwise_wilcoxon(rm: &RepeatedMeasures) -> Vec<PairwiseResult> {
    let k = rm.n_conditions();
    let mut out = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            if let Ok(result) = wilcoxon_signed_rank(&rm.column(i), &rm.column(j)) {
                out.push(PairwiseResult {
                    a: rm.labels()[i].clone(),
                    b: rm.labels()[j].clone(),
                    result,
                });
            }
        }
    }
    out
}
