use siamese_nas::bench::gen_synthetic;
use siamese_nas::estimation::BudgetLedger;
use siamese_nas::predictor::PredictorConfig;
use siamese_nas::search::*;
use siamese_nas::Error;

fn space(size: usize, seed: u64) -> SearchSpace {
    SearchSpace::new(&gen_synthetic(seed, size, 4, 5).unwrap(), "synthetic").unwrap()
}

fn small_predictor(space: &SearchSpace) -> PredictorConfig {
    let mut p = space.predictor_config();
    p.hidden_dim = 8;
    p.trunk_layers = 1;
    p
}

fn quick(n_pool: usize, top_k: usize) -> SearchConfig {
    SearchConfig {
        n_pool,
        top_k,
        max_iters: 60,
        batch_size: 8,
        runs: 3,
        seed: 42,
        ..SearchConfig::default()
    }
}

#[test]
fn pool_reaches_its_budget_exactly() {
    let s = space(300, 1);
    let cfg = SearchConfig {
        n_pool: 37,
        lambda: 0.3,
        ..quick(37, 5)
    };
    let mut ledger = BudgetLedger::new();
    let out = bts_train(&s, &small_predictor(&s), &cfg, 5, &mut ledger).unwrap();
    assert_eq!(out.pool.len(), 37);
    assert_eq!(out.pool.count(Provenance::Random), 12);
    assert_eq!(out.pool.count(Provenance::TopSampled), 25);
    assert_eq!(ledger.predictor_samples, 37);
    assert!(ledger.identity_holds());
    assert_eq!(out.events.iter().map(|e| e.added).sum::<usize>(), 25);
    assert!(out.events.iter().all(|e| e.subspace_size == 30 && e.basic_evaluations == 30));
    assert_eq!(out.losses.len(), cfg.max_iters);
}

#[test]
fn full_top_sampling_skips_duplicates_without_spending() {
    let s = space(40, 2);
    let cfg = SearchConfig {
        sampling: SamplingMode::Full,
        ..quick(38, 2)
    };
    let mut ledger = BudgetLedger::new();
    let out = bts_train(&s, &small_predictor(&s), &cfg, 9, &mut ledger).unwrap();
    assert_eq!(out.pool.len(), 38);
    assert_eq!(ledger.predictor_samples, 38);
    assert!(out.events.iter().all(|e| e.basic_evaluations == 40));
    let mut members: Vec<usize> = out.pool.members.iter().map(|m| m.0).collect();
    members.sort_unstable();
    members.dedup();
    assert_eq!(members.len(), 38);
}

#[test]
fn zero_pool_skips_training() {
    let s = space(100, 3);
    let cfg = quick(0, 10);
    let mut ledger = BudgetLedger::new();
    let out = bts_train(&s, &small_predictor(&s), &cfg, 1, &mut ledger).unwrap();
    assert!(out.pool.is_empty());
    assert!(out.losses.is_empty());
    assert_eq!(out.model.predictor.optimizer_steps(), 0);
    let top = evaluate_top_k(&s, &out.model, 10, 60, out.pool.membership(), &mut ledger).unwrap();
    assert!((ledger.spent - (10.0 + 60.0 * 0.003)).abs() < 1e-12);
    assert!(top.best_accuracy <= s.optimum().1);
}

#[test]
fn batch_larger_than_pool_samples_with_replacement() {
    let s = space(100, 4);
    let cfg = SearchConfig {
        batch_size: 32,
        ..quick(10, 5)
    };
    let mut ledger = BudgetLedger::new();
    let out = bts_train(&s, &small_predictor(&s), &cfg, 2, &mut ledger).unwrap();
    assert_eq!(out.pool.len(), 10);
    assert_eq!(out.losses.len(), cfg.max_iters);
}

#[test]
fn runs_are_reproducible_and_independent_of_workers() {
    let s = space(200, 5);
    let p = small_predictor(&s);
    let a = run_search(&s, &p, &quick(20, 5), 1).unwrap();
    let b = run_search(&s, &p, &quick(20, 5), 1).unwrap();
    let c = run_search(&s, &p, &quick(20, 5), 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let seeds: Vec<u64> = a.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, (0..3).map(|r| run_seed(42, r)).collect::<Vec<_>>());
    for r in &a.runs {
        assert!(r.ledger.identity_holds());
        assert_eq!(r.pool_size, 20);
        assert_eq!(r.ledger.final_topk_trains, 5);
    }
    assert_eq!(a.pool_fraction_percent(), "10.0%");
}

#[test]
fn run_report_csv_columns() {
    let s = space(120, 6);
    let report = run_search(&s, &small_predictor(&s), &quick(12, 4), 1).unwrap();
    let mut buf = Vec::new();
    write_run_report_csv(&report, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run_index,seed,best_acc,best_id,pool_size,fte_spent"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn sweep_emits_one_row_per_feasible_budget() {
    let s = space(150, 7);
    let base = SearchConfig {
        runs: 2,
        ..quick(0, 0)
    };
    let rows = nk_sweep(&s, &small_predictor(&s), &base, &[20, 60, 70], SweepMode::FixK, 1).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].n, rows[0].k), (30, 30));
    assert_eq!((rows[1].n, rows[1].k), (40, 30));
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    assert!(String::from_utf8(buf)
        .unwrap()
        .starts_with("mode,total_budget,n,k,mean_best_acc,std_best_acc,runs\nfixK,60,30,30,"));
    assert!(nk_sweep(&s, &small_predictor(&s), &base, &[90, 60], SweepMode::FixN, 1).is_err());
}

#[test]
fn top_k_larger_than_space_is_rejected() {
    let s = space(30, 8);
    assert!(matches!(
        run_search(&s, &small_predictor(&s), &quick(5, 31), 1),
        Err(Error::Contract(_))
    ));
}

#[test]
fn unknown_dataset_is_a_config_error() {
    let store = gen_synthetic(1, 10, 4, 5).unwrap();
    assert!(matches!(SearchSpace::new(&store, "cifar10"), Err(Error::Config(_))));
}
