//! Estimation Codes (first three training losses) and the budget ledger.
//!
//! Costs are counted in full-training-equivalents (FTE): fully training one
//! architecture costs 1.0, acquiring its code costs [`CODE_COST`]. A code is
//! three epochs on a tenth of the data against a hundred epochs on all of it,
//! `3 * 5_000 / (100 * 50_000) = 0.003`.

use serde::{Deserialize, Serialize};

use crate::bench::BenchRecord;
use crate::error::{Error, Result};

pub const CODE_LENGTH: usize = 3;

/// FTE cost of one Estimation Code.
pub const CODE_COST: f64 = 0.003;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationCode {
    pub losses: [f64; CODE_LENGTH],
    pub normalized: bool,
}

impl EstimationCode {
    pub fn raw(losses: [f64; CODE_LENGTH]) -> Self {
        Self {
            losses,
            normalized: false,
        }
    }
}

/// The first three recorded losses of `record` on `dataset`, unnormalized.
///
/// Pure; charging the ledger is the caller's business (see [`BudgetLedger::charge_code`]).
pub fn extract_code(record: &BenchRecord, dataset: &str) -> Result<EstimationCode> {
    let metrics = record.metrics.get(dataset).ok_or_else(|| Error::MissingData {
        id: record.id.clone(),
        reason: format!("no metrics for dataset `{dataset}`"),
    })?;
    match metrics.epoch_losses.as_slice() {
        [a, b, c, ..] => Ok(EstimationCode::raw([*a, *b, *c])),
        other => Err(Error::MissingData {
            id: record.id.clone(),
            reason: format!("{} epoch losses recorded, need {CODE_LENGTH}", other.len()),
        }),
    }
}

/// Per-component z-score fitted on training-pool codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeNormalizer {
    fitted: bool,
    pub mean: [f64; CODE_LENGTH],
    pub std: [f64; CODE_LENGTH],
    /// Set when a component had zero spread and its std was replaced by 1.
    pub degenerate: bool,
}

impl Default for CodeNormalizer {
    fn default() -> Self {
        Self::unfitted()
    }
}

impl CodeNormalizer {
    pub fn unfitted() -> Self {
        Self {
            fitted: false,
            mean: [0.0; CODE_LENGTH],
            std: [1.0; CODE_LENGTH],
            degenerate: false,
        }
    }

    /// Mean 0, std 1: passes codes through unchanged apart from the flag.
    pub fn identity() -> Self {
        Self {
            fitted: true,
            ..Self::unfitted()
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn fit(codes: &[EstimationCode]) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::State("cannot fit a code normalizer on an empty pool".into()));
        }
        let n = codes.len() as f64;
        let mut mean = [0.0; CODE_LENGTH];
        let mut std = [0.0; CODE_LENGTH];
        let mut degenerate = false;
        for j in 0..CODE_LENGTH {
            mean[j] = codes.iter().map(|c| c.losses[j]).sum::<f64>() / n;
            let var = codes.iter().map(|c| (c.losses[j] - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = var.sqrt();
            if !(std[j] > 0.0) {
                std[j] = 1.0;
                degenerate = true;
            }
        }
        if degenerate {
            log::warn!("code normalizer: zero-variance component, std replaced by 1");
        }
        Ok(Self {
            fitted: true,
            mean,
            std,
            degenerate,
        })
    }

    pub fn normalize(&self, code: &EstimationCode) -> Result<EstimationCode> {
        if !self.fitted {
            return Err(Error::State("code normalizer used before fitting".into()));
        }
        if code.normalized {
            return Err(Error::State("code is already normalized".into()));
        }
        let mut losses = [0.0; CODE_LENGTH];
        for j in 0..CODE_LENGTH {
            losses[j] = (code.losses[j] - self.mean[j]) / self.std[j];
        }
        Ok(EstimationCode {
            losses,
            normalized: true,
        })
    }
}

/// Accumulated search cost.
///
/// `spent` is a running total updated by every charge; the breakdown lets it
/// be re-derived, which [`BudgetLedger::identity_holds`] checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub spent: f64,
    /// Architectures fully trained to fit the predictor (S1).
    pub predictor_samples: u64,
    /// Estimation Codes acquired outside the pool (S2, in codes).
    pub codes_acquired: u64,
    /// Top-K architectures trained at evaluation.
    pub final_topk_trains: u64,
    pub cost_per_code: f64,
}

impl Default for BudgetLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self {
            spent: 0.0,
            predictor_samples: 0,
            codes_acquired: 0,
            final_topk_trains: 0,
            cost_per_code: CODE_COST,
        }
    }

    pub fn charge_predictor_sample(&mut self) {
        self.predictor_samples += 1;
        self.spent += 1.0;
    }

    /// Charges one code unless the architecture is already fully trained (`in_pool`).
    /// Returns the amount charged.
    pub fn charge_code(&mut self, in_pool: bool) -> f64 {
        if in_pool {
            return 0.0;
        }
        self.codes_acquired += 1;
        self.spent += self.cost_per_code;
        self.cost_per_code
    }

    pub fn charge_final_train(&mut self) {
        self.final_topk_trains += 1;
        self.spent += 1.0;
    }

    /// `predictor_samples + codes_acquired * cost_per_code + final_topk_trains`.
    pub fn derived_total(&self) -> f64 {
        self.predictor_samples as f64 + self.codes_acquired as f64 * self.cost_per_code + self.final_topk_trains as f64
    }

    pub fn identity_holds(&self) -> bool {
        (self.spent - self.derived_total()).abs() <= 1e-9 * self.derived_total().max(1.0)
    }

    /// Cost of trained samples plus codes (S1 + S2).
    pub fn training_and_code_cost(&self) -> f64 {
        self.predictor_samples as f64 + self.codes_acquired as f64 * self.cost_per_code
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::DatasetMetrics;
    use crate::graph::{CellSpec, Edge};
    use std::collections::BTreeMap;

    fn record(losses: Vec<f64>) -> BenchRecord {
        BenchRecord {
            id: "r1".into(),
            cell: CellSpec {
                num_nodes: 2,
                edges: vec![Edge::new(0, 1, "conv")],
            },
            metrics: BTreeMap::from([(
                "cifar10".to_string(),
                DatasetMetrics {
                    final_test_acc: 0.9,
                    epoch_losses: losses,
                },
            )]),
            flops_m: 10.0,
            params_m: 0.1,
            proxies: None,
        }
    }

    #[test]
    fn extracts_first_three_losses() {
        let code = extract_code(&record(vec![2.30, 1.95, 1.70, 1.5, 1.4]), "cifar10").unwrap();
        assert_eq!(code.losses, [2.30, 1.95, 1.70]);
        assert!(!code.normalized);
    }

    #[test]
    fn short_loss_trace_names_record() {
        match extract_code(&record(vec![2.3, 1.9]), "cifar10") {
            Err(Error::MissingData { id, .. }) => assert_eq!(id, "r1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ledger_charges_codes_outside_pool_only() {
        let mut ledger = BudgetLedger::new();
        for _ in 0..60 {
            ledger.charge_code(false);
        }
        assert!((ledger.spent - 0.18).abs() < 1e-12);
        let before = ledger.spent;
        assert_eq!(ledger.charge_code(true), 0.0);
        assert_eq!(ledger.spent, before);
        assert!(ledger.identity_holds());
    }

    #[test]
    fn single_code_pool_falls_back_to_unit_std() {
        let c = EstimationCode::raw([1.0, 2.0, 3.0]);
        let norm = CodeNormalizer::fit(&[c]).unwrap();
        assert!(norm.degenerate);
        assert_eq!(norm.std, [1.0; 3]);
        assert_eq!(norm.normalize(&c).unwrap().losses, [0.0; 3]);
    }

    #[test]
    fn two_point_pool() {
        let pool = [EstimationCode::raw([1.0; 3]), EstimationCode::raw([3.0; 3])];
        let norm = CodeNormalizer::fit(&pool).unwrap();
        assert_eq!(norm.mean, [2.0; 3]);
        assert_eq!(norm.std, [1.0; 3]);
        assert_eq!(norm.normalize(&pool[1]).unwrap().losses, [1.0; 3]);
    }

    #[test]
    fn double_normalization_and_unfitted_use_are_rejected() {
        let c = EstimationCode::raw([1.0; 3]);
        assert!(matches!(CodeNormalizer::unfitted().normalize(&c), Err(Error::State(_))));
        let norm = CodeNormalizer::fit(&[c, EstimationCode::raw([2.0; 3])]).unwrap();
        let once = norm.normalize(&c).unwrap();
        assert!(matches!(norm.normalize(&once), Err(Error::State(_))));
    }

    #[test]
    fn evaluation_code_cost_stays_below_one_training() {
        // N pool samples + 60 codes + 20 final trains versus any budget with N' > N + 1
        for n in [0u64, 30, 100, 180] {
            let mut ledger = BudgetLedger::new();
            (0..n).for_each(|_| ledger.charge_predictor_sample());
            (0..60).for_each(|_| {
                ledger.charge_code(false);
            });
            (0..20).for_each(|_| ledger.charge_final_train());
            let baseline = (n + 2) as f64 + 20.0;
            assert!(ledger.spent < baseline);
            assert!(ledger.identity_holds());
        }
    }
}
