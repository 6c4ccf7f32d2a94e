use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use siamese_nas::analysis::{self, CodeReduction};
use siamese_nas::bench::{self, BenchStore, SYNTHETIC_DATASET};
use siamese_nas::config::RunConfig;
use siamese_nas::estimation::BudgetLedger;
use siamese_nas::search::{self, SearchSpace, SweepMode};
use siamese_nas::{Error, Result};

#[derive(Parser)]
#[command(name = "siamese-nas", version, about = "Predictor-based architecture search over tabular benchmarks")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark with a planted optimum.
    GenSynthetic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        size: usize,
        /// Data nodes per cell.
        #[arg(long, default_value_t = 4)]
        nodes: usize,
        /// Operation vocabulary size.
        #[arg(long, default_value_t = 5)]
        vocab: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a benchmark file against the schema.
    Validate { bench: PathBuf },
    /// Train and evaluate `runs` independent searches.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Sweep total budgets with N or K held at 30.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: SweepMode,
        /// Comma-separated, increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Keep records strictly below a FLOPs limit.
    Subset {
        #[arg(long)]
        max_flops: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank correlation of the Estimation Code or a proxy with accuracy.
    Correlate {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, default_value = SYNTHETIC_DATASET)]
        dataset: String,
        /// `code` or `proxy:<name>`.
        #[arg(long, default_value = "code")]
        metric: String,
        #[arg(long, default_value = "negThirdLoss")]
        reduction: CodeReduction,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// FLOPs/accuracy rows for every record.
    Distribution {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, default_value = SYNTHETIC_DATASET)]
        dataset: String,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Writes through a sibling temp file so a failed command leaves no partial artifact.
fn write_atomic(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

fn load_space(cfg: &RunConfig) -> Result<(BenchStore, SearchSpace)> {
    let store = bench::load_jsonl(&cfg.bench)?;
    let space = SearchSpace::new(&store, &cfg.dataset)?;
    Ok((store, space))
}

#[derive(Serialize)]
struct LedgerSummary<'a> {
    n_pool: usize,
    top_k: usize,
    space_size: usize,
    pool_fraction: f64,
    mean_best_acc: f64,
    std_best_acc: f64,
    runs: Vec<&'a BudgetLedger>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic {
            seed,
            size,
            nodes,
            vocab,
            out,
        } => {
            let store = bench::gen_synthetic(seed, size, nodes, vocab)?;
            write_atomic(&out, |buf| store.write_jsonl(buf))?;
            log::info!("wrote {} records to {}", store.len(), out.display());
        }
        Command::Validate { bench } => {
            let report = bench::validate_jsonl(&bench)?;
            let mut out = io::stdout().lock();
            for v in &report.violations {
                writeln!(out, "line {}: {}: {}", v.line, v.id.as_deref().unwrap_or("-"), v.reason)
                    .map_err(|e| Error::io("<stdout>", e))?;
            }
            if let Some(first) = report.violations.first() {
                return Err(Error::Validation {
                    count: report.violations.len(),
                    first_line: first.line,
                    first_reason: first.reason.clone(),
                });
            }
            writeln!(out, "ok: {} records", report.records).map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Search { config, workers } => {
            let cfg = RunConfig::load(&config)?;
            let (_, space) = load_space(&cfg)?;
            let report = search::run_search(&space, &cfg.predictor(&space)?, &cfg.search(), workers)?;
            write_atomic(&cfg.out_dir.join("runs.csv"), |buf| search::write_run_report_csv(&report, buf))?;
            write_json(
                &cfg.out_dir.join("ledger.json"),
                &LedgerSummary {
                    n_pool: report.n_pool,
                    top_k: report.top_k,
                    space_size: report.space_size,
                    pool_fraction: report.pool_fraction,
                    mean_best_acc: report.mean_best_acc,
                    std_best_acc: report.std_best_acc,
                    runs: report.runs.iter().map(|r| &r.ledger).collect(),
                },
            )?;
            eprintln!(
                "mean best accuracy {:.4} ± {:.4} over {} runs (N = {} is {} of the space)",
                report.mean_best_acc,
                report.std_best_acc,
                report.runs.len(),
                report.n_pool,
                report.pool_fraction_percent()
            );
        }
        Command::Sweep {
            config,
            mode,
            budgets,
            workers,
        } => {
            let cfg = RunConfig::load(&config)?;
            let (_, space) = load_space(&cfg)?;
            let rows = search::nk_sweep(&space, &cfg.predictor(&space)?, &cfg.search(), &budgets, mode, workers)?;
            let path = cfg.out_dir.join(format!("sweep_{}.csv", mode.as_str()));
            write_atomic(&path, |buf| search::write_sweep_csv(&rows, buf))?;
        }
        Command::Subset { max_flops, input, out } => {
            let store = bench::load_jsonl(&input)?;
            let subset = store.subset_by_flops(max_flops)?;
            write_atomic(&out, |buf| subset.write_jsonl(buf))?;
            log::info!("kept {} of {} records", subset.len(), store.len());
        }
        Command::Correlate {
            bench,
            dataset,
            metric,
            reduction,
            out_dir,
        } => {
            let store = bench::load_jsonl(&bench)?;
            let report = match metric.split_once(':') {
                None if metric == "code" => analysis::code_correlation(&store, &dataset, reduction)?,
                Some(("proxy", name)) => analysis::proxy_correlation(&store, &dataset, name)?,
                _ => return Err(Error::Config(format!("unknown metric `{metric}` (code|proxy:<name>)"))),
            };
            write_json(&out_dir.join("correlation.json"), &report)?;
            write_atomic(&out_dir.join("correlation_bins.csv"), |buf| report.write_bins_csv(buf))?;
        }
        Command::Distribution { bench, dataset, out } => {
            let store = bench::load_jsonl(&bench)?;
            let rows = analysis::distribution(&store, &dataset)?;
            match out {
                Some(path) => write_atomic(&path, |buf| analysis::write_distribution_csv(&rows, buf))?,
                None => analysis::write_distribution_csv(&rows, io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.kind(), msg);
            ExitCode::FAILURE
        }
    }
}
