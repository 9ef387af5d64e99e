//! Command-line harness: run experiments, recompute metrics, render
//! diagrams, sweep tau and temperature, and regenerate fixtures.
//!
//! Exit codes: 0 success, 1 fatal error, 2 completed with unusable items.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use fidelius::dataset::save_question_set;
use fidelius::runner::{
    build_backend, estimate_calls, execute_run_with, metrics_from_file, sweep_tau,
    sweep_temperature, BackendConfig, RunConfig, RunError,
};
use fidelius::synthetic::{designed_mock_suite, synthetic_small};
use fidelius::{load_question_set, Method};

#[derive(Parser)]
#[command(
    name = "fidelius",
    about = "Confidence calibration harness for multiple-choice QA",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods over a dataset and emit records, metrics,
    /// diagrams, and a comparison table.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the worst-case model-call count and exit without querying.
        #[arg(long)]
        dry_run: bool,
    },
    /// Recompute metric reports (and diagrams) from a run-record file.
    Metrics {
        /// Path to a run_records.jsonl file.
        #[arg(long)]
        records: PathBuf,
        /// Bin count; defaults to the value recorded in the file header.
        #[arg(long)]
        bins: Option<usize>,
        /// Where to write metrics, diagrams, and comparison tables.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Render reliability diagrams (CSV + SVG) from a run-record file.
    Diagram {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Re-score cached fidelity chains under several tau values.
    SweepTau {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated tau values, each > 1.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 2.0, 2.5, 3.0, 4.0, 5.0])]
        taus: Vec<f64>,
    },
    /// Re-run temperature-dependent methods at several temperatures.
    SweepTemp {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated temperatures, each > 0.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.5, 1.0, 1.5])]
        temps: Vec<f64>,
    },
    /// Regenerate the bundled synthetic fixtures.
    Fixtures {
        /// Directory to write into.
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
        /// Also write the designed calibration suite with this many items.
        #[arg(long)]
        designed: Option<usize>,
        /// Seed for the designed suite.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the worst-case model-call count for a run configuration.
    DryRun {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Run settings: a JSON config file, individual flags, or both (flags win).
#[derive(Args)]
struct ConfigArgs {
    /// JSON config file with the same fields as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Question set (JSONL).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated subset of: ours, ours-no-u, ours-no-f, verb, ling,
    /// sampled, token.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Samples per question.
    #[arg(long)]
    k: Option<u32>,
    /// Chain position decay, > 1.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    /// Reliability-diagram bin count.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Response-cache directory (disabled when absent).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Maximum in-flight items.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Backend kind: mock or http.
    #[arg(long)]
    backend: Option<String>,
    /// Mock model spec (JSON); bundled synthetic mock when omitted.
    #[arg(long)]
    mock_spec: Option<PathBuf>,
    /// OpenAI-compatible base URL (up to /chat/completions).
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

impl ConfigArgs {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig {
                dataset: PathBuf::new(),
                backend: BackendConfig::Mock { spec: None },
                methods: Vec::new(),
                k: 10,
                tau: 2.0,
                temperature: 1.0,
                top_p: 1.0,
                bins: 10,
                seed: 0,
                cache_dir: None,
                output_dir: PathBuf::from("out"),
                concurrency: 4,
            },
        };
        if let Some(dataset) = self.dataset {
            config.dataset = dataset;
        }
        if let Some(methods) = self.methods {
            config.methods = methods
                .iter()
                .map(|m| m.parse::<Method>().map_err(anyhow::Error::msg))
                .collect::<anyhow::Result<Vec<_>>>()?;
        }
        if let Some(kind) = self.backend.as_deref() {
            config.backend = match kind {
                "mock" => BackendConfig::Mock { spec: None },
                "http" => BackendConfig::Http {
                    base_url: String::new(),
                    model: String::new(),
                },
                other => bail!("config field 'backend': unknown kind '{other}'"),
            };
        }
        match &mut config.backend {
            BackendConfig::Mock { spec } => {
                if let Some(path) = self.mock_spec {
                    *spec = Some(path);
                }
            }
            BackendConfig::Http { base_url, model } => {
                if let Some(url) = self.base_url {
                    *base_url = url;
                }
                if let Some(name) = self.model {
                    *model = name;
                }
                if base_url.is_empty() {
                    bail!("config field 'base_url': required for the http backend");
                }
                if model.is_empty() {
                    bail!("config field 'model': required for the http backend");
                }
            }
        }
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(tau) = self.tau {
            config.tau = tau;
        }
        if let Some(temperature) = self.temperature {
            config.temperature = temperature;
        }
        if let Some(top_p) = self.top_p {
            config.top_p = top_p;
        }
        if let Some(bins) = self.bins {
            config.bins = bins;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(cache_dir) = self.cache_dir {
            config.cache_dir = Some(cache_dir);
        }
        if let Some(output_dir) = self.output_dir {
            config.output_dir = output_dir;
        }
        if let Some(concurrency) = self.concurrency {
            config.concurrency = concurrency;
        }
        if config.dataset.as_os_str().is_empty() {
            bail!("config field 'dataset': required (flag --dataset or config file)");
        }
        if config.methods.is_empty() {
            bail!("config field 'methods': required (flag --methods or config file)");
        }
        Ok(config)
    }
}

fn print_estimate(config: &RunConfig) -> anyhow::Result<()> {
    let set = load_question_set(&config.dataset)?;
    let estimate = estimate_calls(config, &set);
    println!("items:                  {}", estimate.items);
    println!("sampling calls (KxN):   {}", estimate.sampling_calls);
    println!("chain calls (<= NxMxM): {}", estimate.chain_call_upper_bound);
    println!("single-shot calls:      {}", estimate.single_calls);
    println!("total upper bound:      {}", estimate.total_upper_bound);
    Ok(())
}

fn cmd_run(config: RunConfig, dry_run: bool) -> anyhow::Result<u8> {
    if dry_run {
        print_estimate(&config)?;
        return Ok(0);
    }
    let set = load_question_set(&config.dataset)?;
    let backend = build_backend(&config)?;
    let outcome = execute_run_with(&config, &set, backend.as_ref())?;
    print!("{}", outcome.table.text);
    println!(
        "records: {} ({} items, {} unusable)",
        outcome.records.len(),
        set.len(),
        outcome.unusable_items
    );
    println!("outputs in {}", outcome.output_dir.display());
    Ok(if outcome.unusable_items > 0 { 2 } else { 0 })
}

fn cmd_metrics(
    records: PathBuf,
    bins: Option<usize>,
    output_dir: Option<PathBuf>,
) -> anyhow::Result<u8> {
    if let Some(dir) = &output_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let (_, reports, table) = metrics_from_file(&records, bins, output_dir.as_deref())?;
    print!("{}", table.text);
    for report in &reports {
        println!(
            "{}",
            serde_json::to_string(report).expect("serialize report")
        );
    }
    Ok(0)
}

fn cmd_sweep_tau(config: RunConfig, taus: Vec<f64>) -> anyhow::Result<u8> {
    let set = load_question_set(&config.dataset)?;
    let backend = build_backend(&config)?;
    let rows = sweep_tau(&config, &set, backend.as_ref(), &taus)?;
    println!(
        "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "tau", "ece", "ipr", "ce", "brier", "acc"
    );
    let mut csv = String::from("tau,ece,ipr,ce,brier,accuracy\n");
    for row in &rows {
        let r = &row.report;
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            row.tau, r.ece, r.ipr, r.ce, r.brier, r.accuracy
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.tau, r.ece, r.ipr, r.ce, r.brier, r.accuracy
        ));
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("sweep_tau.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("written to {}", path.display());
    Ok(0)
}

fn cmd_sweep_temp(config: RunConfig, temps: Vec<f64>) -> anyhow::Result<u8> {
    let set = load_question_set(&config.dataset)?;
    let backend = build_backend(&config)?;
    let rows = sweep_temperature(&config, &set, backend.as_ref(), &temps)?;
    let mut csv = String::from("temperature,method,ece,ipr,ce,brier,accuracy\n");
    for row in &rows {
        println!("temperature {}", row.temperature);
        println!(
            "  {:<12} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "method", "ece", "ipr", "ce", "brier", "acc"
        );
        for r in &row.reports {
            println!(
                "  {:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                r.method.as_str(),
                r.ece,
                r.ipr,
                r.ce,
                r.brier,
                r.accuracy
            );
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.temperature,
                r.method.as_str(),
                r.ece,
                r.ipr,
                r.ce,
                r.brier,
                r.accuracy
            ));
        }
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("sweep_temp.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("written to {}", path.display());
    Ok(0)
}

fn cmd_fixtures(dir: PathBuf, designed: Option<usize>, seed: u64) -> anyhow::Result<u8> {
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (set, mock) = synthetic_small();
    let set_path = dir.join("synthetic_small.jsonl");
    save_question_set(&set, &set_path)?;
    mock.save(&dir.join("synthetic_small.mock.json"))?;
    println!("wrote {} ({} items) and its mock spec", set_path.display(), set.len());
    if let Some(n) = designed {
        let (set, mock) = designed_mock_suite(n, seed);
        let set_path = dir.join("designed_suite.jsonl");
        save_question_set(&set, &set_path)?;
        mock.save(&dir.join("designed_suite.mock.json"))?;
        println!(
            "wrote {} ({} items, seed {seed}) and its mock spec",
            set_path.display(),
            set.len()
        );
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run { config, dry_run } => cmd_run(config.resolve()?, dry_run),
        Command::Metrics {
            records,
            bins,
            output_dir,
        } => cmd_metrics(records, bins, output_dir),
        Command::Diagram {
            records,
            bins,
            output_dir,
        } => {
            std::fs::create_dir_all(&output_dir)
                .with_context(|| format!("creating {}", output_dir.display()))?;
            metrics_from_file(&records, bins, Some(&output_dir))?;
            println!("diagrams written to {}", output_dir.display());
            Ok(0)
        }
        Command::SweepTau { config, taus } => cmd_sweep_tau(config.resolve()?, taus),
        Command::SweepTemp { config, temps } => cmd_sweep_temp(config.resolve()?, temps),
        Command::Fixtures { dir, designed, seed } => cmd_fixtures(dir, designed, seed),
        Command::DryRun { config } => {
            print_estimate(&config.resolve()?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            // partial-output aborts still deserve the path hint
            if let Some(run_error) = error.downcast_ref::<RunError>() {
                eprintln!("error: {run_error}");
            } else {
                eprintln!("error: {error:#}");
            }
            ExitCode::from(1)
        }
    }
}
