use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xdomain::config::{ExperimentConfig, Pair, SchemeName};
use xdomain::datasets::{export_toy, make_toy_split, Split};
use xdomain::error::{Error, Result};
use xdomain::evalharness::{baseline_source_only, evaluate_accuracy};
use xdomain::search::{greedy_search, SearchPlan};
use xdomain::train::{self, TrainOptions};
use xdomain::{checkpoint, selftest};
use xdomain_core::Domain;

#[derive(Parser)]
#[command(name = "xdomain", version, about = "Cross-domain digit adaptation with coupled Wasserstein auto-encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file, or resume from a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<SchemeName>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// Override any config key, e.g. `--set max_iterations=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Train the source-only baseline instead and print its result.
        #[arg(long)]
        source_only: bool,
    },
    /// Evaluate a checkpoint on the test splits of its pair.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `source:target`, e.g. `mnist:usps`, or a canned pair name.
        #[arg(long)]
        pair: Pair,
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Greedy hyper-parameter search.
    Search {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Check the distance library against independent oracles.
    MetricsSelftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write synthetic toy images as PNG files with a label list.
    ExportToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn load_config(path: &Path, data_root: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(root) = data_root {
        cfg.data_root = root.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, resume, scheme, seed, data_root, overrides, source_only } => {
            let mut cfg = load_config(&config, data_root)?;
            for kv in &overrides {
                let (k, v) =
                    kv.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let data = train::load_data(&cfg)?;
            if source_only {
                let r = baseline_source_only(&cfg, &data)?;
                println!("{}", serde_json::to_string(&r).expect("serializable"));
                return Ok(());
            }
            let run = train::train(&cfg, &data, &TrainOptions { resume, stop_at: None })?;
            println!("{}", serde_json::to_string(&run.best).expect("serializable"));
        }
        Command::Eval { checkpoint: path, pair, data_root } => {
            let ck = checkpoint::load(&path)?;
            if ck.config.pair != pair {
                return Err(Error::Usage(format!("{} holds a {} model, not {pair}", path.display(), ck.config.pair)));
            }
            let mut cfg = ck.config;
            if let Some(root) = data_root {
                cfg.data_root = root.to_string_lossy().into_owned();
            }
            let data = train::load_data(&cfg)?;
            let r = evaluate_accuracy(
                &ck.state.bundle,
                pair.name(),
                ck.state.step,
                &data.source_test,
                &data.target_test,
                cfg.test_batch,
            )?;
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            train::append_eval_row(&dir.join(train::METRICS_FILE), &r)?;
            println!("{}", serde_json::to_string(&r).expect("serializable"));
        }
        Command::Search { plan, config, data_root } => {
            let plan = SearchPlan::load(&plan)?;
            let cfg = load_config(&config, data_root)?;
            let table = greedy_search(&plan, &cfg)?;
            print!("{}", table.to_csv());
        }
        Command::MetricsSelftest { seed } => {
            let results = selftest::run_all(seed);
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::domain(format!("{failed} of {} properties failed", results.len())));
            }
        }
        Command::ExportToy { out, per_class, seed, split } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            for (domain, name) in [(Domain::Source, "a"), (Domain::Target, "b")] {
                let ds = make_toy_split(per_class, seed, split, domain)?;
                export_toy(&ds, &out.join(name))?;
            }
        }
    }
    Ok(())
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Core(_) => "runtime",
        Error::Ingest { .. } => "ingest",
        Error::Config { .. } => "config",
        Error::Checkpoint { .. } => "checkpoint",
        Error::Io { .. } => "io",
        Error::Usage(_) => "usage",
    }
}

/// One JSON object on one line.
fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let msg = serde_json::json!({ "error": kind, "exit": code, "message": message });
    eprintln!("{msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return report("usage", first, 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(kind(&e), &e.to_string().replace('\n', " "), e.exit_code() as u8),
    }
}
