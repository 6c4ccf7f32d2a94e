//! Rank correlations and plot-ready exports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bench::{BenchRecord, BenchStore};
use crate::error::{Error, Result};
use crate::estimation::extract_code;

/// Accuracy bins used for the per-bin breakdown.
pub const BINS: usize = 10;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Correlation(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Correlation(format!("need at least 2 samples, got {}", x.len())));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::Correlation(format!("non-finite sample {v}")));
    }
    if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
        return Err(Error::Correlation("constant input".into()));
    }
    Ok(())
}

/// Pairs tied within each run of equal keys of a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * (run.saturating_sub(1)) / 2
}

/// Merge sort counting inversions (strict), stable for equal values.
fn count_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_swaps(&mut v[..mid], buf) + count_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall τ-b from exact pair counts.
pub(crate) fn tau_b_from_counts(n0: u64, tx: u64, ty: u64, concordant_minus_discordant: i64) -> f64 {
    let denom = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    concordant_minus_discordant as f64 / denom
}

/// Tie-corrected Kendall τ-b in O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let tx = tied_pairs(pairs.iter().map(|p| p.0));
    let txy = tied_pairs(pairs.iter().copied());
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = count_swaps(&mut ys, &mut buf);
    let ty = tied_pairs(ys.iter().copied());
    let n0 = n * (n - 1) / 2;
    let s = n0 as i64 - tx as i64 - ty as i64 + txy as i64 - 2 * swaps as i64;
    Ok(tau_b_from_counts(n0, tx, ty, s))
}

/// Doubled average ranks (integers), 2..=2n.
fn doubled_ranks(v: &[f64]) -> Vec<i64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0i64; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // ranks start+1..=end averaged, doubled
        let r = (start + 1 + end) as i64;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of integer score vectors, exact up to the final division.
pub(crate) fn pearson_exact(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len() as i128;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as i128, y as i128);
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    let cov = n * sab - sa * sb;
    let va = n * saa - sa * sa;
    let vb = n * sbb - sb * sb;
    cov as f64 / (va as f64 * vb as f64).sqrt()
}

/// Spearman ρ: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(pearson_exact(&doubled_ranks(x), &doubled_ranks(y)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: usize,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub sample_count: usize,
    /// `None` when undefined within the bin (constant values or < 2 samples).
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub metric: String,
    pub dataset: String,
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub sample_count: usize,
    /// Equal-count accuracy bins, lowest first.
    pub bins: Vec<BinReport>,
}

impl CorrelationReport {
    pub fn build(metric: &str, dataset: &str, values: &[f64], accuracies: &[f64]) -> Result<Self> {
        let tau = kendall_tau(values, accuracies)?;
        let rho = spearman_rho(values, accuracies)?;
        let mut order: Vec<usize> = (0..accuracies.len()).collect();
        order.sort_by(|&a, &b| accuracies[a].total_cmp(&accuracies[b]).then(a.cmp(&b)));
        let n = order.len();
        let mut bins = Vec::new();
        for b in 0..BINS.min(n) {
            let members = &order[b * n / BINS.min(n)..(b + 1) * n / BINS.min(n)];
            let v: Vec<f64> = members.iter().map(|&i| values[i]).collect();
            let a: Vec<f64> = members.iter().map(|&i| accuracies[i]).collect();
            bins.push(BinReport {
                bin: b,
                min_accuracy: a.first().copied().unwrap_or(f64::NAN),
                max_accuracy: a.last().copied().unwrap_or(f64::NAN),
                sample_count: members.len(),
                kendall_tau: kendall_tau(&v, &a).ok(),
                spearman_rho: spearman_rho(&v, &a).ok(),
            });
        }
        Ok(Self {
            metric: metric.to_string(),
            dataset: dataset.to_string(),
            kendall_tau: tau,
            spearman_rho: rho,
            sample_count: n,
            bins,
        })
    }

    /// Columns: `bin, min_accuracy, max_accuracy, sample_count, kendall_tau, spearman_rho`.
    pub fn write_bins_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bin", "min_accuracy", "max_accuracy", "sample_count", "kendall_tau", "spearman_rho"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            wtr.write_record([
                b.bin.to_string(),
                b.min_accuracy.to_string(),
                b.max_accuracy.to_string(),
                b.sample_count.to_string(),
                opt(b.kendall_tau),
                opt(b.spearman_rho),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CodeReduction {
    /// Negated third-epoch loss.
    #[default]
    #[serde(rename = "negThirdLoss")]
    NegThirdLoss,
    /// Negated mean of the three losses.
    #[serde(rename = "negMeanLoss")]
    NegMeanLoss,
}

impl CodeReduction {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeReduction::NegThirdLoss => "negThirdLoss",
            CodeReduction::NegMeanLoss => "negMeanLoss",
        }
    }
}

impl std::str::FromStr for CodeReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negThirdLoss" => Ok(CodeReduction::NegThirdLoss),
            "negMeanLoss" => Ok(CodeReduction::NegMeanLoss),
            other => Err(Error::Config(format!("unknown code reduction `{other}` (negThirdLoss|negMeanLoss)"))),
        }
    }
}

fn accuracy_of(r: &BenchRecord, dataset: &str) -> Result<f64> {
    r.accuracy(dataset).ok_or_else(|| Error::MissingData {
        id: r.id.clone(),
        reason: format!("no accuracy for `{dataset}`"),
    })
}

/// Reduced Estimation Code against final accuracy.
pub fn code_correlation(store: &BenchStore, dataset: &str, reduction: CodeReduction) -> Result<CorrelationReport> {
    let mut values = Vec::with_capacity(store.len());
    let mut accs = Vec::with_capacity(store.len());
    let mut missing = Vec::new();
    for r in store.records() {
        match extract_code(r, dataset) {
            Ok(code) => {
                let l = code.losses;
                values.push(match reduction {
                    CodeReduction::NegThirdLoss => -l[2],
                    CodeReduction::NegMeanLoss => -(l[0] + l[1] + l[2]) / 3.0,
                });
                accs.push(accuracy_of(r, dataset)?);
            }
            Err(_) => missing.push(r.id.as_str()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(5).copied().collect();
        return Err(Error::MissingData {
            id: shown.join(","),
            reason: format!("{} record(s) lack 3 epoch losses on `{dataset}`", missing.len()),
        });
    }
    CorrelationReport::build(&format!("code:{}", reduction.as_str()), dataset, &values, &accs)
}

/// Names of all proxies present on any record, sorted.
pub fn available_proxies(store: &BenchStore) -> Vec<String> {
    let mut names: Vec<String> = store
        .records()
        .iter()
        .filter_map(|r| r.proxies.as_ref())
        .flat_map(|p| p.keys().cloned())
        .collect();
    names.sort();
    names.dedup();
    names
}

/// A recorded zero-cost proxy against final accuracy.
pub fn proxy_correlation(store: &BenchStore, dataset: &str, proxy: &str) -> Result<CorrelationReport> {
    let mut values = Vec::with_capacity(store.len());
    let mut accs = Vec::with_capacity(store.len());
    for r in store.records() {
        let v = r.proxies.as_ref().and_then(|p| p.get(proxy)).ok_or_else(|| Error::MissingProxy {
            name: proxy.to_string(),
            available: available_proxies(store).join(", "),
        })?;
        values.push(*v);
        accs.push(accuracy_of(r, dataset)?);
    }
    CorrelationReport::build(&format!("proxy:{proxy}"), dataset, &values, &accs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub id: String,
    pub flops_m: f64,
    pub accuracy: f64,
}

/// One `(id, flops_m, accuracy)` row per record, sorted by id.
pub fn distribution(store: &BenchStore, dataset: &str) -> Result<Vec<DistributionRow>> {
    let mut rows = store
        .records()
        .iter()
        .map(|r| {
            Ok(DistributionRow {
                id: r.id.clone(),
                flops_m: r.flops_m,
                accuracy: accuracy_of(r, dataset)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(rows)
}

pub fn write_distribution_csv(rows: &[DistributionRow], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(["id", "flops_m", "accuracy"])?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}
