//! Siamese-Ranking, Batch Top Sampling and the end-to-end search protocol.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::BenchStore;
use crate::error::{Error, Result};
use crate::estimation::{extract_code, BudgetLedger, CodeNormalizer, EstimationCode};
use crate::graph::encode_cell;
use crate::predictor::{PredictorConfig, PreparedGraph, SiamesePredictor, TrainingSample};

/// Held variable of an N-vs-K sweep.
pub const SWEEP_FIXED: usize = 30;

/// Encoded, read-only view of one dataset of a store.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub(crate) ids: Vec<String>,
    pub(crate) graphs: Vec<PreparedGraph>,
    pub(crate) codes: Vec<Option<EstimationCode>>,
    pub(crate) accuracies: Vec<f64>,
    max_nodes: usize,
    feature_dim: usize,
}

impl SearchSpace {
    pub fn new(store: &BenchStore, dataset: &str) -> Result<Self> {
        if !store.has_dataset(dataset) {
            return Err(Error::Config(format!(
                "dataset `{dataset}` not in store (available: {})",
                store.datasets().join(", ")
            )));
        }
        let vocab = store.vocab();
        let n = store.max_nodes();
        let mut space = Self {
            ids: Vec::with_capacity(store.len()),
            graphs: Vec::with_capacity(store.len()),
            codes: Vec::with_capacity(store.len()),
            accuracies: Vec::with_capacity(store.len()),
            max_nodes: n,
            feature_dim: vocab.feature_dim(),
        };
        for r in store.records() {
            let graph = encode_cell(&r.cell, vocab)?.pad_to(n)?;
            space.ids.push(r.id.clone());
            space.graphs.push(PreparedGraph::new(&graph));
            space.codes.push(extract_code(r, dataset).ok());
            space.accuracies.push(r.accuracy(dataset).ok_or_else(|| Error::MissingData {
                id: r.id.clone(),
                reason: format!("no accuracy for `{dataset}`"),
            })?);
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn graph(&self, i: usize) -> &PreparedGraph {
        &self.graphs[i]
    }

    pub fn accuracy(&self, i: usize) -> f64 {
        self.accuracies[i]
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn code(&self, i: usize) -> Result<EstimationCode> {
        self.codes[i].ok_or_else(|| Error::MissingData {
            id: self.ids[i].clone(),
            reason: "no Estimation Code (fewer than 3 epoch losses)".into(),
        })
    }

    pub fn max_nodes(&self) -> usize {
        self.max_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Predictor config matching this space's dimensions.
    pub fn predictor_config(&self) -> PredictorConfig {
        PredictorConfig::new(self.max_nodes, self.feature_dim)
    }

    /// Index and accuracy of the best record (first on ties).
    pub fn optimum(&self) -> (usize, f64) {
        let mut best = 0;
        for i in 1..self.len() {
            if self.accuracies[i] > self.accuracies[best] {
                best = i;
            }
        }
        (best, self.accuracies[best])
    }
}

/// The two prediction modes a ranking needs.
pub trait BranchScorer: Sync {
    fn score_basic(&self, space: &SearchSpace, candidates: &[usize]) -> Result<Vec<f64>>;
    /// `codes` are raw, one per candidate.
    fn score_estimation(&self, space: &SearchSpace, candidates: &[usize], codes: &[EstimationCode]) -> Result<Vec<f64>>;
}

/// A predictor together with the normalizer fitted on its training pool.
#[derive(Debug, Clone)]
pub struct TrainedPredictor {
    pub predictor: SiamesePredictor,
    pub normalizer: CodeNormalizer,
}

impl BranchScorer for TrainedPredictor {
    fn score_basic(&self, space: &SearchSpace, candidates: &[usize]) -> Result<Vec<f64>> {
        let graphs: Vec<&PreparedGraph> = candidates.iter().map(|&i| space.graph(i)).collect();
        self.predictor.predict_basic_batch(&graphs)
    }

    fn score_estimation(&self, space: &SearchSpace, candidates: &[usize], codes: &[EstimationCode]) -> Result<Vec<f64>> {
        let items = candidates
            .iter()
            .zip(codes)
            .map(|(&i, c)| Ok((space.graph(i), self.normalizer.normalize(c)?)))
            .collect::<Result<Vec<_>>>()?;
        self.predictor.predict_estimation_batch(&items)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Basic,
    Resorted,
}

/// Candidates best-first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    /// Space indices.
    pub order: Vec<usize>,
    /// Prediction that placed each entry.
    pub scores: Vec<f64>,
    pub stages: Vec<Stage>,
    pub basic_evaluations: usize,
    pub estimation_evaluations: usize,
    pub code_cost: f64,
}

impl RankedList {
    pub fn ids<'a>(&self, space: &'a SearchSpace) -> Vec<&'a str> {
        self.order.iter().map(|&i| space.id(i)).collect()
    }
}

fn sort_desc(items: &mut [(usize, f64)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Two-stage ranking: every candidate by the basic branch, then the top `c`
/// re-sorted by the estimation branch and spliced back in place.
///
/// Codes of candidates in `in_pool` are free; every other code is charged.
pub fn siamese_rank<S: BranchScorer + ?Sized>(
    space: &SearchSpace,
    scorer: &S,
    candidates: &[usize],
    c: usize,
    in_pool: &[bool],
    ledger: &mut BudgetLedger,
) -> Result<RankedList> {
    if c > candidates.len() {
        return Err(Error::Contract(format!(
            "resort size c = {c} exceeds {} candidates",
            candidates.len()
        )));
    }
    let basic = scorer.score_basic(space, candidates)?;
    if basic.len() != candidates.len() {
        return Err(Error::Contract("scorer returned the wrong number of scores".into()));
    }
    let mut ranked: Vec<(usize, f64)> = candidates.iter().copied().zip(basic).collect();
    sort_desc(&mut ranked);

    let mut stages = vec![Stage::Basic; ranked.len()];
    let mut code_cost = 0.0;
    if c > 0 {
        let top: Vec<usize> = ranked[..c].iter().map(|&(i, _)| i).collect();
        let codes = top.iter().map(|&i| space.code(i)).collect::<Result<Vec<_>>>()?;
        for &i in &top {
            code_cost += ledger.charge_code(in_pool.get(i).copied().unwrap_or(false));
        }
        let fine = scorer.score_estimation(space, &top, &codes)?;
        if fine.len() != top.len() {
            return Err(Error::Contract("scorer returned the wrong number of scores".into()));
        }
        let mut resorted: Vec<(usize, f64)> = top.into_iter().zip(fine).collect();
        sort_desc(&mut resorted);
        ranked[..c].copy_from_slice(&resorted);
        stages[..c].fill(Stage::Resorted);
    }
    Ok(RankedList {
        order: ranked.iter().map(|&(i, _)| i).collect(),
        scores: ranked.iter().map(|&(_, s)| s).collect(),
        stages,
        basic_evaluations: candidates.len(),
        estimation_evaluations: c,
        code_cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Rank a random `ceil(|space| / f)` subspace at every update.
    #[default]
    Batch,
    /// Rank the whole space at every update.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Pool budget N.
    pub n_pool: usize,
    /// Final top-K trained at evaluation.
    pub top_k: usize,
    pub c_bts: usize,
    pub c_eval: usize,
    pub update_freq: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub batch_size: usize,
    pub runs: usize,
    pub seed: u64,
    pub sampling: SamplingMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_pool: 100,
            top_k: 20,
            c_bts: 30,
            c_eval: 60,
            update_freq: 10,
            lambda: 0.5,
            alpha: 0.3,
            max_iters: 2000,
            batch_size: 16,
            runs: 1,
            seed: 0,
            sampling: SamplingMode::Batch,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda must be in (0, 1], got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.update_freq == 0 {
            return Err(Error::Config("update_freq must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        Ok(())
    }

    /// Records drawn uniformly at pool initialization, `ceil(lambda * N)`.
    pub fn initial_pool_size(&self) -> usize {
        // guard against 0.3 * 10 = 3.0000000000000004
        ((self.lambda * self.n_pool as f64) - 1e-9).ceil().max(0.0) as usize
    }

    /// Iterations before top sampling starts, `floor(alpha * l)`.
    pub fn warmup_iters(&self) -> usize {
        (self.alpha * self.max_iters as f64 + 1e-9).floor() as usize
    }

    /// Number of update events in phase 2.
    pub fn update_events(&self) -> usize {
        (self.warmup_iters()..self.max_iters)
            .filter(|i| i % self.update_freq == 0)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Provenance {
    Random,
    TopSampled,
}

/// Training pool: fully trained architectures with known accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPool {
    pub capacity: usize,
    pub members: Vec<(usize, Provenance)>,
    in_pool: Vec<bool>,
}

impl SamplingPool {
    pub fn new(capacity: usize, space_size: usize) -> Self {
        Self {
            capacity,
            members: Vec::new(),
            in_pool: vec![false; space_size],
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.in_pool[i]
    }

    pub fn membership(&self) -> &[bool] {
        &self.in_pool
    }

    /// Adds `i` unless present or full; returns whether it was added.
    pub fn insert(&mut self, i: usize, provenance: Provenance) -> bool {
        if self.in_pool[i] || self.members.len() >= self.capacity {
            return false;
        }
        self.in_pool[i] = true;
        self.members.push((i, provenance));
        true
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.members.iter().filter(|(_, p)| *p == provenance).count()
    }
}

/// Instrumentation for one phase-2 pool update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateEvent {
    pub iteration: usize,
    pub subspace_size: usize,
    pub basic_evaluations: usize,
    pub estimation_evaluations: usize,
    pub requested: usize,
    pub added: usize,
}

#[derive(Debug, Clone)]
pub struct BtsOutcome {
    pub model: TrainedPredictor,
    pub pool: SamplingPool,
    pub events: Vec<UpdateEvent>,
    pub losses: Vec<f64>,
}

/// Trains a predictor while growing its pool with Batch Top Sampling.
///
/// The pool starts with `ceil(lambda * N)` random records. After
/// `floor(alpha * l)` warm-up iterations, every `f`-th iteration ranks a random
/// `ceil(|space| / f)` subspace (the whole space in [`SamplingMode::Full`]) and
/// adds its best unseen candidates. The `N - ceil(lambda * N)` additions are
/// spread evenly over the update events, earliest events taking the
/// remainder; a shortfall carries over to the next event.
pub fn bts_train(
    space: &SearchSpace,
    predictor_config: &PredictorConfig,
    config: &SearchConfig,
    seed: u64,
    ledger: &mut BudgetLedger,
) -> Result<BtsOutcome> {
    config.validate()?;
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predictor = SiamesePredictor::new(predictor_config.clone(), rng.random())?;

    let budget = config.n_pool.min(space.len());
    let mut pool = SamplingPool::new(budget, space.len());
    let initial = config.initial_pool_size().min(budget);
    let mut picks = sample_indices(&mut rng, space.len(), initial).into_vec();
    picks.sort_unstable();
    for i in picks {
        pool.insert(i, Provenance::Random);
        ledger.charge_predictor_sample();
    }

    let pool_codes = pool
        .members
        .iter()
        .map(|&(i, _)| space.code(i))
        .collect::<Result<Vec<_>>>()?;
    let normalizer = if pool_codes.is_empty() {
        CodeNormalizer::identity()
    } else {
        CodeNormalizer::fit(&pool_codes)?
    };
    let mut model = TrainedPredictor {
        predictor,
        normalizer,
    };

    let warmup = config.warmup_iters();
    let n_events = config.update_events();
    let to_add = budget - pool.len();
    if to_add > 0 && n_events == 0 {
        log::warn!("no update events within {} iterations; pool stays at {}", config.max_iters, pool.len());
    }
    let subspace_size = match config.sampling {
        SamplingMode::Batch => space.len().div_ceil(config.update_freq),
        SamplingMode::Full => space.len(),
    };

    let mut events = Vec::new();
    let mut losses = Vec::with_capacity(config.max_iters);
    let mut carry = 0usize;
    let mut event_index = 0usize;
    let mut warned_replacement = false;

    for iter in 0..config.max_iters {
        if iter >= warmup && iter % config.update_freq == 0 && n_events > 0 {
            let quota = to_add / n_events + usize::from(event_index < to_add % n_events) + carry;
            event_index += 1;
            if quota > 0 && pool.len() < budget {
                let subspace: Vec<usize> = match config.sampling {
                    SamplingMode::Batch => sample_indices(&mut rng, space.len(), subspace_size).into_vec(),
                    SamplingMode::Full => (0..space.len()).collect(),
                };
                let c = config.c_bts.min(subspace.len());
                let ranked = siamese_rank(space, &model, &subspace, c, pool.membership(), ledger)?;
                let mut added = 0;
                for &i in &ranked.order {
                    if added == quota || pool.len() >= budget {
                        break;
                    }
                    if pool.insert(i, Provenance::TopSampled) {
                        ledger.charge_predictor_sample();
                        added += 1;
                    }
                }
                carry = quota - added;
                events.push(UpdateEvent {
                    iteration: iter,
                    subspace_size: subspace.len(),
                    basic_evaluations: ranked.basic_evaluations,
                    estimation_evaluations: ranked.estimation_evaluations,
                    requested: quota,
                    added,
                });
            }
        }

        if pool.is_empty() {
            continue;
        }
        let picks: Vec<usize> = if config.batch_size <= pool.len() {
            sample_indices(&mut rng, pool.len(), config.batch_size).into_vec()
        } else {
            if !warned_replacement {
                log::warn!(
                    "batch size {} exceeds pool size {}; sampling with replacement",
                    config.batch_size,
                    pool.len()
                );
                warned_replacement = true;
            }
            (0..config.batch_size).map(|_| rng.random_range(0..pool.len())).collect()
        };
        let batch = picks
            .iter()
            .map(|&p| {
                let i = pool.members[p].0;
                Ok(TrainingSample {
                    graph: space.graph(i),
                    code: model.normalizer.normalize(&space.code(i)?)?,
                    accuracy: space.accuracy(i),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        losses.push(model.predictor.train_step(&batch)?);
    }
    if carry > 0 || pool.len() < budget {
        log::info!("pool finished at {} of {} (update events exhausted)", pool.len(), budget);
    }
    Ok(BtsOutcome {
        model,
        pool,
        events,
        losses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult {
    pub best_accuracy: f64,
    pub best_index: usize,
    pub ranked: RankedList,
}

/// Ranks the whole space with `c_eval` re-sorting and "trains" the first `k`
/// (one FTE each), returning the best ground truth among them.
pub fn evaluate_top_k<S: BranchScorer + ?Sized>(
    space: &SearchSpace,
    scorer: &S,
    k: usize,
    c_eval: usize,
    in_pool: &[bool],
    ledger: &mut BudgetLedger,
) -> Result<TopKResult> {
    if k == 0 || k > space.len() {
        return Err(Error::Contract(format!("top-K = {k} must be in 1..={}", space.len())));
    }
    let all: Vec<usize> = (0..space.len()).collect();
    let ranked = siamese_rank(space, scorer, &all, c_eval.min(space.len()), in_pool, ledger)?;
    let mut best = ranked.order[0];
    for &i in &ranked.order[..k] {
        ledger.charge_final_train();
        if space.accuracy(i) > space.accuracy(best) {
            best = i;
        }
    }
    Ok(TopKResult {
        best_accuracy: space.accuracy(best),
        best_index: best,
        ranked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub best_acc: f64,
    pub best_id: String,
    pub pool_size: usize,
    pub fte_spent: f64,
    pub ledger: BudgetLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub runs: Vec<RunResult>,
    pub mean_best_acc: f64,
    /// Sample standard deviation (0 for a single run).
    pub std_best_acc: f64,
    pub n_pool: usize,
    pub top_k: usize,
    pub space_size: usize,
    /// `N / |space|`
    pub pool_fraction: f64,
}

impl RunReport {
    pub fn pool_fraction_percent(&self) -> String {
        format!("{:.1}%", 100.0 * self.pool_fraction)
    }
}

/// Per-run seed derived from the configured seed (splitmix64 finalizer).
pub fn run_seed(seed: u64, run_index: usize) -> u64 {
    let mut z = seed.wrapping_add((run_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn single_run(space: &SearchSpace, pcfg: &PredictorConfig, cfg: &SearchConfig, run_index: usize) -> Result<RunResult> {
    let seed = run_seed(cfg.seed, run_index);
    let mut ledger = BudgetLedger::new();
    let outcome = bts_train(space, pcfg, cfg, seed, &mut ledger)?;
    let top = evaluate_top_k(space, &outcome.model, cfg.top_k, cfg.c_eval, outcome.pool.membership(), &mut ledger)?;
    log::info!(
        "run {run_index}: best {:.4} ({}), pool {}, {:.3} FTE",
        top.best_accuracy,
        space.id(top.best_index),
        outcome.pool.len(),
        ledger.spent
    );
    Ok(RunResult {
        run_index,
        seed,
        best_acc: top.best_accuracy,
        best_id: space.id(top.best_index).to_string(),
        pool_size: outcome.pool.len(),
        fte_spent: ledger.spent,
        ledger,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Independent seeded repetitions of training + top-K evaluation.
///
/// Runs are spread over `workers` threads and merged by run index, so the
/// report does not depend on the worker count.
pub fn run_search(space: &SearchSpace, pcfg: &PredictorConfig, cfg: &SearchConfig, workers: usize) -> Result<RunReport> {
    cfg.validate()?;
    pcfg.validate()?;
    if cfg.top_k > space.len() {
        return Err(Error::Contract(format!("top-K = {} exceeds the space size {}", cfg.top_k, space.len())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|r| single_run(space, pcfg, cfg, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let accs: Vec<f64> = runs.iter().map(|r| r.best_acc).collect();
    let (mean, std) = mean_std(&accs);
    Ok(RunReport {
        runs,
        mean_best_acc: mean,
        std_best_acc: std,
        n_pool: cfg.n_pool,
        top_k: cfg.top_k,
        space_size: space.len(),
        pool_fraction: cfg.n_pool as f64 / space.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    #[serde(rename = "fixN")]
    FixN,
    #[serde(rename = "fixK")]
    FixK,
}

impl SweepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMode::FixN => "fixN",
            SweepMode::FixK => "fixK",
        }
    }

    /// `(N, K)` for a total budget, or `None` when the total cannot hold both.
    pub fn split(self, total: usize) -> Option<(usize, usize)> {
        if total < SWEEP_FIXED + 1 {
            return None;
        }
        Some(match self {
            SweepMode::FixN => (SWEEP_FIXED, total - SWEEP_FIXED),
            SweepMode::FixK => (total - SWEEP_FIXED, SWEEP_FIXED),
        })
    }
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixN" | "fixn" => Ok(SweepMode::FixN),
            "fixK" | "fixk" => Ok(SweepMode::FixK),
            other => Err(Error::Config(format!("unknown sweep mode `{other}` (fixN|fixK)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: SweepMode,
    pub total_budget: usize,
    pub n: usize,
    pub k: usize,
    pub mean_best_acc: f64,
    pub std_best_acc: f64,
    pub runs: usize,
}

/// Runs [`run_search`] for each total budget with one of N, K held at 30.
pub fn nk_sweep(
    space: &SearchSpace,
    pcfg: &PredictorConfig,
    base: &SearchConfig,
    budgets: &[usize],
    mode: SweepMode,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sweep budgets must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(budgets.len());
    for &total in budgets {
        let Some((n, k)) = mode.split(total) else {
            log::warn!("budget {total} cannot hold the fixed {SWEEP_FIXED}; skipped");
            continue;
        };
        let cfg = SearchConfig {
            n_pool: n,
            top_k: k,
            ..base.clone()
        };
        let report = run_search(space, pcfg, &cfg, workers)?;
        rows.push(SweepRow {
            mode,
            total_budget: total,
            n,
            k,
            mean_best_acc: report.mean_best_acc,
            std_best_acc: report.std_best_acc,
            runs: report.runs.len(),
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct RunCsvRow<'a> {
    run_index: usize,
    seed: u64,
    best_acc: f64,
    best_id: &'a str,
    pool_size: usize,
    fte_spent: f64,
}

/// Columns: `run_index, seed, best_acc, best_id, pool_size, fte_spent`.
pub fn write_run_report_csv(report: &RunReport, w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in &report.runs {
        wtr.serialize(RunCsvRow {
            run_index: r.run_index,
            seed: r.seed,
            best_acc: r.best_acc,
            best_id: &r.best_id,
            pool_size: r.pool_size,
            fte_spent: r.fte_spent,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Serialize)]
struct SweepCsvRow {
    mode: &'static str,
    total_budget: usize,
    n: usize,
    k: usize,
    mean_best_acc: f64,
    std_best_acc: f64,
    runs: usize,
}

/// Columns: `mode, total_budget, n, k, mean_best_acc, std_best_acc, runs`.
pub fn write_sweep_csv(rows: &[SweepRow], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(["mode", "total_budget", "n", "k", "mean_best_acc", "std_best_acc", "runs"])?;
    }
    for r in rows {
        wtr.serialize(SweepCsvRow {
            mode: r.mode.as_str(),
            total_budget: r.total_budget,
            n: r.n,
            k: r.k,
            mean_best_acc: r.mean_best_acc,
            std_best_acc: r.std_best_acc,
            runs: r.runs,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}
