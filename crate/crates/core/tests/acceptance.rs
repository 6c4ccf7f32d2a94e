//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Set `SIAMESE_NAS_NB201` to a NAS-Bench-201 JSONL export (and optionally
//! `SIAMESE_NAS_NB201_DATASET`, default `cifar10`) to run the real-data check.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use siamese_nas::analysis::{kendall_tau, spearman_rho};
use siamese_nas::bench::{gen_synthetic, load_jsonl};
use siamese_nas::estimation::{BudgetLedger, EstimationCode, CODE_COST};
use siamese_nas::predictor::PredictorConfig;
use siamese_nas::search::*;
use siamese_nas::Result;

use common::{all_vectors, brute_rho, brute_tau, gradient_errors, permutations};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let took = started.elapsed();
    (took < limit, format!("{:.1}s of {}s", took.as_secs_f64(), limit.as_secs()))
}

/// Scores by ground truth in both branches.
struct Oracle;

impl BranchScorer for Oracle {
    fn score_basic(&self, space: &SearchSpace, c: &[usize]) -> Result<Vec<f64>> {
        Ok(c.iter().map(|&i| space.accuracy(i)).collect())
    }

    fn score_estimation(&self, space: &SearchSpace, c: &[usize], _: &[EstimationCode]) -> Result<Vec<f64>> {
        Ok(c.iter().map(|&i| space.accuracy(i)).collect())
    }
}

fn gradient_integrity() -> Outcome {
    let started = Instant::now();
    let mut worst = (String::new(), 0.0f64);
    for use_nsam in [true, false] {
        for seed in [1, 2] {
            for (name, err) in gradient_errors(use_nsam, seed) {
                if err > worst.1 {
                    worst = (format!("{name} (nsam={use_nsam})"), err);
                }
            }
        }
    }
    let (fast, took) = within(Duration::from_secs(60), started);
    verdict(
        worst.1 < 1e-4 && fast,
        format!("worst relative error {:.2e} at {}, limit 1e-4; {took}", worst.1, worst.0),
    )
}

fn ranking_oracle() -> Outcome {
    let started = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..10 {
        let store = gen_synthetic(seed, 200, 4, 5).unwrap();
        let space = SearchSpace::new(&store, "synthetic").unwrap();
        let n = space.len();
        // selection sort: best accuracy first, lowest index on ties
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut expected = Vec::with_capacity(n);
        while !remaining.is_empty() {
            let mut pick = 0;
            for (p, &i) in remaining.iter().enumerate() {
                if space.accuracy(i) > space.accuracy(remaining[pick]) {
                    pick = p;
                }
            }
            expected.push(remaining.remove(pick));
        }
        let all: Vec<usize> = (0..n).collect();
        let mut ledger = BudgetLedger::new();
        let ranked = siamese_rank(&space, &Oracle, &all, n, &vec![false; n], &mut ledger).unwrap();
        if ranked.order != expected {
            failures.push(format!("seed {seed}: order differs"));
        }
        let top = evaluate_top_k(&space, &Oracle, 1, 60, &vec![false; n], &mut ledger).unwrap();
        if Some(space.id(top.best_index)) != store.planted_optimum() {
            failures.push(format!("seed {seed}: top-1 {} is not the planted optimum", space.id(top.best_index)));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "10 seeds x 200 records, c = 200, K = 1; {:.2}s{}",
            started.elapsed().as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

struct Trained {
    space: SearchSpace,
    outcome: BtsOutcome,
    ledger: BudgetLedger,
}

fn train_thousand(seed: u64) -> Trained {
    let store = gen_synthetic(100 + seed, 1000, 4, 5).unwrap();
    let space = SearchSpace::new(&store, "synthetic").unwrap();
    let cfg = SearchConfig {
        n_pool: 100,
        lambda: 0.5,
        update_freq: 10,
        max_iters: 2000,
        ..SearchConfig::default()
    };
    let mut ledger = BudgetLedger::new();
    let outcome = bts_train(&space, &space.predictor_config(), &cfg, seed, &mut ledger).unwrap();
    Trained { space, outcome, ledger }
}

fn budget_conservation(t: &Trained) -> Outcome {
    let pool = &t.outcome.pool;
    let mut ledger = t.ledger.clone();
    let before = ledger.clone();
    let top = evaluate_top_k(&t.space, &t.outcome.model, 20, 60, pool.membership(), &mut ledger).unwrap();
    let non_pool = top.ranked.order[..60].iter().filter(|&&i| !pool.contains(i)).count();
    let eval_delta = ledger.spent - before.spent;
    let expected_eval = 20.0 + non_pool as f64 * CODE_COST;

    let all: Vec<usize> = (0..t.space.len()).collect();
    let mut fresh = BudgetLedger::new();
    siamese_rank(&t.space, &t.outcome.model, &all, 60, &vec![false; t.space.len()], &mut fresh).unwrap();

    let ok = pool.len() == 100
        && pool.count(Provenance::Random) == 50
        && before.predictor_samples == 100
        && ledger.identity_holds()
        && (eval_delta - expected_eval).abs() < 1e-9
        && (fresh.spent - 0.18).abs() < 1e-12
        && fresh.codes_acquired == 60;
    verdict(
        ok,
        format!(
            "pool {} (50 random + {} top-sampled); identity {}; 60 non-pool codes = {:.6} FTE; \
             evaluation charged {:.6} = 20 + {non_pool} x 0.003; total {:.3} FTE",
            pool.len(),
            pool.count(Provenance::TopSampled),
            if ledger.identity_holds() { "holds" } else { "BROKEN" },
            fresh.spent,
            eval_delta,
            ledger.spent
        ),
    )
}

fn learning_sanity(runs: &[Trained], started: Instant) -> Outcome {
    let mut basic = Vec::new();
    let mut est = Vec::new();
    for t in runs {
        let all: Vec<usize> = (0..t.space.len()).collect();
        let codes: Vec<EstimationCode> = all.iter().map(|&i| t.space.code(i).unwrap()).collect();
        let b = t.outcome.model.score_basic(&t.space, &all).unwrap();
        let e = t.outcome.model.score_estimation(&t.space, &all, &codes).unwrap();
        basic.push(kendall_tau(&b, t.space.accuracies()).unwrap());
        est.push(kendall_tau(&e, t.space.accuracies()).unwrap());
    }
    let mb = basic.iter().sum::<f64>() / basic.len() as f64;
    let me = est.iter().sum::<f64>() / est.len() as f64;
    let (fast, took) = within(Duration::from_secs(300), started);
    verdict(
        mb > 0.5 && me > 0.5 && me >= mb && fast,
        format!(
            "mean tau over {} seeds: basic {mb:.3}, estimation {me:.3} (need > 0.5, estimation >= basic); \
             per seed basic {:?}, estimation {:?}; {took}",
            runs.len(),
            basic.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            est.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn bts_efficiency() -> Outcome {
    let store = gen_synthetic(7, 15_625, 4, 5).unwrap();
    let space = SearchSpace::new(&store, "synthetic").unwrap();
    let mut pcfg = space.predictor_config();
    pcfg.hidden_dim = 16;
    pcfg.trunk_layers = 2;
    let base = SearchConfig {
        n_pool: 100,
        max_iters: 200,
        ..SearchConfig::default()
    };
    let mut timed = Vec::new();
    for sampling in [SamplingMode::Batch, SamplingMode::Full] {
        let cfg = SearchConfig { sampling, ..base.clone() };
        let started = Instant::now();
        let out = bts_train(&space, &pcfg, &cfg, 3, &mut BudgetLedger::new()).unwrap();
        timed.push((started.elapsed(), out.events));
    }
    let (bts_time, bts_events) = &timed[0];
    let (fts_time, fts_events) = &timed[1];
    let ok = !bts_events.is_empty()
        && bts_events.iter().all(|e| e.basic_evaluations == 1563)
        && fts_events.iter().all(|e| e.basic_evaluations == 15_625)
        && bts_events.len() == fts_events.len()
        && bts_time < fts_time;
    verdict(
        ok,
        format!(
            "{} update events: BTS {} forward evaluations each, {:.2}s; FTS {} each, {:.2}s",
            bts_events.len(),
            bts_events.first().map_or(0, |e| e.basic_evaluations),
            bts_time.as_secs_f64(),
            fts_events.first().map_or(0, |e| e.basic_evaluations),
            fts_time.as_secs_f64()
        ),
    )
}

/// Predictor used for the N-vs-K sweep.
fn sweep_predictor(space: &SearchSpace) -> PredictorConfig {
    let mut p = space.predictor_config();
    p.hidden_dim = 32;
    p.trunk_layers = 2;
    p
}

const SWEEP_ITERS: usize = 2000;
const SWEEP_RUNS: usize = 20;

fn n_vs_k() -> Outcome {
    let started = Instant::now();
    let store = gen_synthetic(11, 15_625, 4, 5).unwrap();
    let space = SearchSpace::new(&store, "synthetic").unwrap();
    let base = SearchConfig {
        max_iters: SWEEP_ITERS,
        runs: SWEEP_RUNS,
        seed: 5,
        ..SearchConfig::default()
    };
    let budgets = [60, 110, 160, 210];
    let p = sweep_predictor(&space);
    let fix_n = nk_sweep(&space, &p, &base, &budgets, SweepMode::FixN, 1).unwrap();
    let fix_k = nk_sweep(&space, &p, &base, &budgets, SweepMode::FixK, 1).unwrap();
    let mean_ok = fix_n
        .iter()
        .zip(&fix_k)
        .filter(|(n, _)| n.total_budget > 60)
        .all(|(n, k)| k.mean_best_acc >= n.mean_best_acc);
    let std_ok = fix_k[3].std_best_acc <= fix_k[0].std_best_acc;
    let (fast, took) = within(Duration::from_secs(1800), started);
    let rows: Vec<String> = fix_n
        .iter()
        .zip(&fix_k)
        .map(|(n, k)| {
            format!(
                "{}: fixK {:.4}±{:.4} vs fixN {:.4}±{:.4}",
                n.total_budget, k.mean_best_acc, k.std_best_acc, n.mean_best_acc, n.std_best_acc
            )
        })
        .collect();
    verdict(
        mean_ok && std_ok && fast,
        format!(
            "{SWEEP_RUNS} runs/point, optimum {:.4}; {}; {took}",
            space.optimum().1,
            rows.join("; ")
        ),
    )
}

fn real_data() -> Outcome {
    let Ok(path) = std::env::var("SIAMESE_NAS_NB201") else {
        return Outcome::Skip("SIAMESE_NAS_NB201 not set (no exported benchmark)".into());
    };
    let dataset = std::env::var("SIAMESE_NAS_NB201_DATASET").unwrap_or_else(|_| "cifar10".into());
    let started = Instant::now();
    let store = match load_jsonl(&path) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("cannot load {path}: {e}")),
    };
    let space = match SearchSpace::new(&store, &dataset) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("cannot encode {dataset}: {e}")),
    };
    let cfg = SearchConfig {
        n_pool: 180,
        top_k: 20,
        runs: 20,
        seed: 2024,
        ..SearchConfig::default()
    };
    let ours = run_search(&space, &space.predictor_config(), &cfg, 1).unwrap();
    let naive_cfg = SearchConfig {
        lambda: 1.0,
        c_bts: 0,
        c_eval: 0,
        ..cfg.clone()
    };
    let mut naive_p = space.predictor_config();
    naive_p.use_nsam = false;
    let naive = run_search(&space, &naive_p, &naive_cfg, 1).unwrap();
    let optimum = space.optimum().1;
    let gap = optimum - ours.mean_best_acc;
    let (fast, took) = within(Duration::from_secs(7200), started);
    verdict(
        ours.mean_best_acc > naive.mean_best_acc && gap <= 0.005 && fast,
        format!(
            "{dataset}: mean best {:.4} vs basic-only {:.4}; optimum {optimum:.4}, gap {:.2} pp (limit 0.5); {took}",
            ours.mean_best_acc,
            naive.mean_best_acc,
            100.0 * gap
        ),
    )
}

fn correlation_brute_force() -> Outcome {
    let started = Instant::now();
    let (mut checked, mut mismatched) = (0usize, 0usize);
    let mut compare = |x: &[f64], y: &[f64]| match (kendall_tau(x, y), spearman_rho(x, y)) {
        (Ok(t), Ok(r)) => {
            checked += 1;
            if t != brute_tau(x, y) || r != brute_rho(x, y) {
                mismatched += 1;
            }
        }
        (Err(_), Err(_)) => {
            let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
            if !(constant(x) || constant(y)) {
                mismatched += 1;
            }
        }
        _ => mismatched += 1,
    };
    for n in 2..=5 {
        let vs = all_vectors(n, 3);
        for x in &vs {
            for y in &vs {
                compare(x, y);
            }
        }
    }
    for n in 6..=8 {
        let tied: Vec<f64> = (0..n).map(|i| (i / 2) as f64).collect();
        let distinct: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for p in permutations(n) {
            let y: Vec<f64> = p.iter().map(|&i| tied[i]).collect();
            let z: Vec<f64> = p.iter().map(|&i| distinct[i]).collect();
            compare(&distinct, &y);
            compare(&tied, &y);
            compare(&tied, &z);
        }
    }
    verdict(
        mismatched == 0,
        format!(
            "{checked} input pairs of length 2..=8 with ties, {mismatched} mismatches; {:.1}s",
            started.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {name}: {detail}");
        results.push((name, outcome));
    };

    report("gradient integrity", gradient_integrity());
    report("ranking oracle", ranking_oracle());

    let started = Instant::now();
    let trained: Vec<Trained> = (0..5).map(train_thousand).collect();
    report("budget conservation", budget_conservation(&trained[0]));
    report("learning sanity", learning_sanity(&trained, started));
    drop(trained);

    report("BTS efficiency", bts_efficiency());
    report("N-vs-K property", n_vs_k());
    report("real-data search", real_data());
    report("correlation brute force", correlation_brute_force());

    let count = |f: fn(&Outcome) -> bool| results.iter().filter(|(_, o)| f(o)).count();
    let failed = count(|o| matches!(o, Outcome::Fail(_)));
    println!(
        "acceptance: {} passed, {failed} failed, {} skipped",
        count(|o| matches!(o, Outcome::Pass(_))),
        count(|o| matches!(o, Outcome::Skip(_)))
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
