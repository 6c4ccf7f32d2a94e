//! Tabular search spaces: loading, validation, subsetting and synthesis.
//!
//! On disk a store is JSONL. The first line is a header:
//!
//! ```json
//! {"format_version":1,"op_vocab":["none","skip_connect"],"max_nodes":10,"datasets":["cifar10"]}
//! ```
//!
//! followed by one architecture per line:
//!
//! ```json
//! {"id":"a0","num_nodes":4,"edges":[[0,1,"none"]],"metrics":{"cifar10":{"final_test_acc":0.91,"epoch_losses":[2.1,1.7,1.5]}},"flops_m":15.6,"params_m":0.13}
//! ```
//!
//! `max_nodes` counts nodes *after* op-node expansion, i.e. the predictor's
//! matrix size. Records may carry an optional `proxies` map.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{encode_cell, CellSpec, Edge, OpVocabulary};

pub const FORMAT_VERSION: u32 = 1;

/// Dataset name used by [`gen_synthetic`].
pub const SYNTHETIC_DATASET: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchHeader {
    pub format_version: u32,
    pub op_vocab: Vec<String>,
    pub max_nodes: usize,
    pub datasets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_optimum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetrics {
    pub final_test_acc: f64,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub id: String,
    pub cell: CellSpec,
    pub metrics: BTreeMap<String, DatasetMetrics>,
    pub flops_m: f64,
    pub params_m: f64,
    pub proxies: Option<BTreeMap<String, f64>>,
}

impl BenchRecord {
    pub fn accuracy(&self, dataset: &str) -> Option<f64> {
        self.metrics.get(dataset).map(|m| m.final_test_acc)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    num_nodes: usize,
    edges: Vec<(usize, usize, String)>,
    metrics: BTreeMap<String, DatasetMetrics>,
    flops_m: f64,
    params_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proxies: Option<BTreeMap<String, f64>>,
}

impl From<RecordLine> for BenchRecord {
    fn from(l: RecordLine) -> Self {
        Self {
            id: l.id,
            cell: CellSpec {
                num_nodes: l.num_nodes,
                edges: l.edges.into_iter().map(|(s, d, op)| Edge::new(s, d, op)).collect(),
            },
            metrics: l.metrics,
            flops_m: l.flops_m,
            params_m: l.params_m,
            proxies: l.proxies,
        }
    }
}

impl From<&BenchRecord> for RecordLine {
    fn from(r: &BenchRecord) -> Self {
        Self {
            id: r.id.clone(),
            num_nodes: r.cell.num_nodes,
            edges: r.cell.edges.iter().map(|e| (e.src, e.dst, e.op.clone())).collect(),
            metrics: r.metrics.clone(),
            flops_m: r.flops_m,
            params_m: r.params_m,
            proxies: r.proxies.clone(),
        }
    }
}

/// An immutable, validated search space.
#[derive(Debug, Clone)]
pub struct BenchStore {
    header: BenchHeader,
    vocab: OpVocabulary,
    records: Vec<BenchRecord>,
    index: HashMap<String, usize>,
}

impl PartialEq for BenchStore {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.records == other.records
    }
}

/// One schema violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// 1-based line number; 0 when the store was built in memory.
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_header(header: &BenchHeader) -> std::result::Result<OpVocabulary, String> {
    if header.format_version != FORMAT_VERSION {
        return Err(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            header.format_version
        ));
    }
    if header.datasets.is_empty() {
        return Err("header lists no datasets".into());
    }
    if header.max_nodes < 3 {
        return Err(format!("max_nodes must be at least 3, got {}", header.max_nodes));
    }
    OpVocabulary::new(header.op_vocab.clone()).map_err(|e| e.to_string())
}

fn check_record(r: &BenchRecord, header: &BenchHeader, vocab: &OpVocabulary) -> Vec<String> {
    let mut out = Vec::new();
    if r.id.is_empty() {
        out.push("empty id".to_string());
    }
    match encode_cell(&r.cell, vocab) {
        Ok(g) if g.n() > header.max_nodes => out.push(format!(
            "encoded graph has {} nodes, header max_nodes is {}",
            g.n(),
            header.max_nodes
        )),
        Ok(_) => {}
        Err(e) => out.push(e.to_string()),
    }
    for ds in &header.datasets {
        let Some(m) = r.metrics.get(ds) else {
            out.push(format!("missing metrics for dataset `{ds}`"));
            continue;
        };
        if !(m.final_test_acc.is_finite() && (0.0..=1.0).contains(&m.final_test_acc)) {
            out.push(format!("{ds}: final_test_acc {} outside [0, 1]", m.final_test_acc));
        }
        if m.epoch_losses.len() < 3 {
            out.push(format!("{ds}: {} epoch losses recorded, need at least 3", m.epoch_losses.len()));
        }
        if m.epoch_losses.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            out.push(format!("{ds}: epoch losses must be finite and non-negative"));
        }
    }
    for ds in r.metrics.keys() {
        if !header.datasets.contains(ds) {
            out.push(format!("dataset `{ds}` not declared in header"));
        }
    }
    if !(r.flops_m.is_finite() && r.flops_m > 0.0) {
        out.push(format!("flops_m must be positive, got {}", r.flops_m));
    }
    if !r.params_m.is_finite() || r.params_m < 0.0 {
        out.push(format!("params_m must be non-negative, got {}", r.params_m));
    }
    if let Some(p) = &r.proxies {
        if let Some((name, _)) = p.iter().find(|(_, v)| !v.is_finite()) {
            out.push(format!("proxy `{name}` is not finite"));
        }
    }
    out
}

fn parse_lines(reader: impl BufRead) -> Result<(Option<BenchHeader>, Vec<BenchRecord>, Vec<Violation>)> {
    let mut header: Option<BenchHeader> = None;
    let mut vocab: Option<OpVocabulary> = None;
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Load {
            line: lineno,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(h) = &header else {
            let h: BenchHeader = serde_json::from_str(&line).map_err(|e| Error::Load {
                line: lineno,
                reason: format!("invalid header: {e}"),
            })?;
            vocab = Some(check_header(&h).map_err(|reason| Error::Load { line: lineno, reason })?);
            header = Some(h);
            continue;
        };
        let parsed: RecordLine = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                violations.push(Violation {
                    line: lineno,
                    id: None,
                    reason: format!("parse error: {e}"),
                });
                continue;
            }
        };
        let record = BenchRecord::from(parsed);
        for reason in check_record(&record, h, vocab.as_ref().expect("vocab set with header")) {
            violations.push(Violation {
                line: lineno,
                id: Some(record.id.clone()),
                reason,
            });
        }
        if let Some(prev) = seen.insert(record.id.clone(), lineno) {
            violations.push(Violation {
                line: lineno,
                id: Some(record.id.clone()),
                reason: format!("duplicate id (first seen on line {prev})"),
            });
        }
        records.push(record);
    }
    Ok((header, records, violations))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Checks a JSONL file without building a store.
pub fn validate_jsonl(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref();
    let (header, records, violations) = parse_lines(open(path)?)?;
    if header.is_none() || records.is_empty() {
        return Err(Error::EmptySpace);
    }
    Ok(ValidationReport {
        records: records.len(),
        violations,
    })
}

/// Loads and validates a JSONL store; any invalid record aborts the load.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<BenchStore> {
    let path = path.as_ref();
    BenchStore::from_reader(open(path)?)
}

impl BenchStore {
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let (header, records, violations) = parse_lines(reader)?;
        let Some(header) = header else {
            return Err(Error::EmptySpace);
        };
        if records.is_empty() {
            return Err(Error::EmptySpace);
        }
        if let Some(first) = violations.first() {
            return Err(Error::Validation {
                count: violations.len(),
                first_line: first.line,
                first_reason: first.reason.clone(),
            });
        }
        Self::assemble(header, records)
    }

    /// Builds a store from in-memory parts, applying the same validation as loading.
    pub fn new(header: BenchHeader, records: Vec<BenchRecord>) -> Result<Self> {
        let vocab = check_header(&header).map_err(Error::Config)?;
        if records.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut seen = BTreeSet::new();
        let mut violations = Vec::new();
        for r in &records {
            violations.extend(check_record(r, &header, &vocab).into_iter().map(|reason| (r.id.clone(), reason)));
            if !seen.insert(r.id.as_str()) {
                violations.push((r.id.clone(), "duplicate id".into()));
            }
        }
        if let Some((id, reason)) = violations.first() {
            return Err(Error::Validation {
                count: violations.len(),
                first_line: 0,
                first_reason: format!("{id}: {reason}"),
            });
        }
        Self::assemble(header, records)
    }

    fn assemble(header: BenchHeader, records: Vec<BenchRecord>) -> Result<Self> {
        let vocab = OpVocabulary::new(header.op_vocab.clone())?;
        let index = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        let mut store = Self {
            header,
            vocab,
            records,
            index,
        };
        if let Some(opt) = &store.header.planted_optimum {
            if !store.index.contains_key(opt) {
                store.header.planted_optimum = None;
            }
        }
        Ok(store)
    }

    pub fn header(&self) -> &BenchHeader {
        &self.header
    }

    pub fn vocab(&self) -> &OpVocabulary {
        &self.vocab
    }

    pub fn max_nodes(&self) -> usize {
        self.header.max_nodes
    }

    pub fn datasets(&self) -> &[String] {
        &self.header.datasets
    }

    pub fn has_dataset(&self, dataset: &str) -> bool {
        self.header.datasets.iter().any(|d| d == dataset)
    }

    pub fn planted_optimum(&self) -> Option<&str> {
        self.header.planted_optimum.as_deref()
    }

    pub fn records(&self) -> &[BenchRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&BenchRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w).map_err(|e| Error::io("<writer>", e))?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &RecordLine::from(r))?;
            writeln!(w).map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Records strictly below `max_flops_m`, as a new store.
    pub fn subset_by_flops(&self, max_flops_m: f64) -> Result<Self> {
        if !(max_flops_m > 0.0) {
            return Err(Error::Config(format!("FLOPs threshold must be positive, got {max_flops_m}")));
        }
        let records: Vec<BenchRecord> = self.records.iter().filter(|r| r.flops_m < max_flops_m).cloned().collect();
        if records.is_empty() {
            return Err(Error::EmptySubset { threshold: max_flops_m });
        }
        Self::assemble(self.header.clone(), records)
    }
}

/// Deterministic synthetic search space with a planted accuracy function.
///
/// Cells are complete DAGs over `nodes` data nodes whose edges are labelled
/// from a vocabulary of `vocab_size` operations; with 4 nodes and 5 ops this is
/// a 15,625-cell space shaped like NAS-Bench-201. Accuracy is
/// `0.1 + 0.85 * sigmoid(z + eps)` where `z` sums per-op scores weighted by the
/// depth of the edge plus a two-hop interaction term, and `eps ~ N(0, 0.02)`.
/// Epoch losses decay geometrically towards a limit that falls as accuracy
/// rises, so early losses carry information about the final accuracy.
pub fn gen_synthetic(seed: u64, size: usize, nodes: usize, vocab_size: usize) -> Result<BenchStore> {
    if size == 0 {
        return Err(Error::Config("size must be at least 1".into()));
    }
    if nodes < 2 {
        return Err(Error::Config("nodes must be at least 2".into()));
    }
    if vocab_size < 2 {
        return Err(Error::Config("vocab must be at least 2".into()));
    }

    let ops = synthetic_vocab(vocab_size);
    let none_op = ops.iter().position(|o| o == "none");
    let pairs: Vec<(usize, usize)> = (1..nodes).flat_map(|d| (0..d).map(move |s| (s, d))).collect();
    let total = (vocab_size as u128).checked_pow(pairs.len() as u32).unwrap_or(u128::MAX);
    if (size as u128) > total {
        return Err(Error::Config(format!(
            "requested {size} cells but only {total} distinct cells exist"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = sample_distinct_codes(&mut rng, size, total);

    let mut op_score: Vec<f64> = (0..vocab_size).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut op_flops: Vec<f64> = (0..vocab_size).map(|_| rng.random_range(0.5..30.0)).collect();
    for (k, name) in ops.iter().enumerate() {
        match name.as_str() {
            "none" => {
                op_score[k] = -0.6;
                op_flops[k] = 0.0;
            }
            "skip_connect" => op_flops[k] = 0.0,
            "nor_conv_1x1" => op_flops[k] = 4.0,
            "nor_conv_3x3" => op_flops[k] = 35.4,
            "avg_pool_3x3" => op_flops[k] = 0.0,
            _ => {}
        }
    }

    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let small = Normal::new(0.0, 0.01).expect("valid sigma");
    let width = total.saturating_sub(1).to_string().len().clamp(6, 39);
    let depth_scale = (nodes - 1) as f64;

    let mut records = Vec::with_capacity(size);
    for code in codes {
        let labels = decode_labels(code, vocab_size, pairs.len());
        let label_of = |s: usize, d: usize| pairs.iter().position(|&p| p == (s, d)).map(|i| labels[i]);

        let mut z = 0.0;
        for (&(s, d), &k) in pairs.iter().zip(&labels) {
            z += op_score[k] * (0.5 + d as f64 / depth_scale) * (1.0 + 0.25 * f64::from(s == 0));
        }
        let mut interaction = 0.0;
        for &(u, w) in &pairs {
            for v in (w + 1)..nodes {
                if let (Some(a), Some(b)) = (label_of(u, w), label_of(w, v)) {
                    interaction += op_score[a] * op_score[b];
                }
            }
        }
        z = 0.45 * z + 0.3 * interaction + 0.6;
        if let Some(none) = none_op {
            if !reaches_output(nodes, &pairs, &labels, none) {
                z = -3.5;
            }
        }
        let acc = 0.1 + 0.85 * sigmoid(z + noise.sample(&mut rng));

        let start = std::f64::consts::LN_10 * (1.0 + small.sample(&mut rng));
        let limit = (2.0 * (1.0 - acc) + 0.05 + small.sample(&mut rng)).max(0.01);
        let rate = (0.55 + noise.sample(&mut rng)).clamp(0.3, 0.8);
        let epoch_losses: Vec<f64> = (1..=5).map(|t| limit + (start - limit) * rate.powi(t)).collect();

        let flops_m = 7.78 + labels.iter().map(|&k| op_flops[k]).sum::<f64>();
        let params_m = 0.073 + 0.0052 * (flops_m - 7.78);
        let synflow = 2.0 * flops_m.ln() + 3.0 * acc + Normal::new(0.0, 1.0).expect("valid sigma").sample(&mut rng);

        records.push(BenchRecord {
            id: format!("arch-{code:0width$}"),
            cell: CellSpec {
                num_nodes: nodes,
                edges: pairs
                    .iter()
                    .zip(&labels)
                    .map(|(&(s, d), &k)| Edge::new(s, d, ops[k].clone()))
                    .collect(),
            },
            metrics: BTreeMap::from([(
                SYNTHETIC_DATASET.to_string(),
                DatasetMetrics {
                    final_test_acc: acc,
                    epoch_losses,
                },
            )]),
            flops_m,
            params_m,
            proxies: Some(BTreeMap::from([("synflow".to_string(), synflow)])),
        });
    }

    let best = records
        .iter()
        .max_by(|a, b| {
            let (x, y) = (a.metrics[SYNTHETIC_DATASET].final_test_acc, b.metrics[SYNTHETIC_DATASET].final_test_acc);
            x.total_cmp(&y).then_with(|| b.id.cmp(&a.id))
        })
        .map(|r| r.id.clone());
    let header = BenchHeader {
        format_version: FORMAT_VERSION,
        op_vocab: ops,
        max_nodes: nodes + pairs.len(),
        datasets: vec![SYNTHETIC_DATASET.to_string()],
        planted_optimum: best,
    };
    BenchStore::new(header, records)
}

fn synthetic_vocab(size: usize) -> Vec<String> {
    const NB201: [&str; 5] = ["none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3"];
    if size == NB201.len() {
        return NB201.iter().map(|s| s.to_string()).collect();
    }
    std::iter::once("skip_connect".to_string())
        .chain((1..size).map(|k| format!("op{k}")))
        .collect()
}

fn sample_distinct_codes(rng: &mut ChaCha8Rng, size: usize, total: u128) -> Vec<u128> {
    let mut codes: Vec<u128> = if total <= 4 * size as u128 {
        let mut all: Vec<u128> = (0..total).collect();
        all.shuffle(rng);
        all.truncate(size);
        all
    } else {
        let mut seen = BTreeSet::new();
        while seen.len() < size {
            let hi = rng.random::<u64>() as u128;
            let lo = rng.random::<u64>() as u128;
            seen.insert(((hi << 64) | lo) % total);
        }
        seen.into_iter().collect()
    };
    codes.sort_unstable();
    codes
}

fn decode_labels(mut code: u128, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut() {
        *slot = (code % base as u128) as usize;
        code /= base as u128;
    }
    out
}

fn reaches_output(nodes: usize, pairs: &[(usize, usize)], labels: &[usize], none: usize) -> bool {
    let mut reach = vec![false; nodes];
    reach[0] = true;
    for (&(s, d), &k) in pairs.iter().zip(labels) {
        // pairs are ordered by destination, so sources are final when visited
        if reach[s] && k != none {
            reach[d] = true;
        }
    }
    reach[nodes - 1]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
