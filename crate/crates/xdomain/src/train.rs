//! The training loop: data loading, per-step metrics, periodic evaluation,
//! checkpoints, panels and resume.

use std::fs;
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use xdomain_core::{trainer, Domain, LossReport, PairedBatch, TrainState};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::datasets::{
    augment_inversion, load_corpus, make_toy_domains, make_toy_split, BatchIterator, DomainDataset, LoadOptions, Split,
};
use crate::error::{Error, Result};
use crate::evalharness::{evaluate_accuracy, render_panels, EvalResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const DIAGNOSTIC_CHECKPOINT: &str = "diagnostic.ckpt";

/// Training and test splits of both domains. Target training images carry
/// no labels.
#[derive(Clone, Debug)]
pub struct RunData {
    pub source_train: DomainDataset,
    pub target_train: DomainDataset,
    pub source_test: DomainDataset,
    pub target_test: DomainDataset,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<RunData> {
    let (source_train, target_train, source_test, target_test) = match cfg.pair.corpora() {
        None => {
            let (s, t) = make_toy_domains(cfg.toy_per_class, cfg.seed)?;
            let st = make_toy_split(cfg.toy_test_per_class, cfg.seed, Split::Test, Domain::Source)?;
            let tt = make_toy_split(cfg.toy_test_per_class, cfg.seed, Split::Test, Domain::Target)?;
            (s, t, st, tt)
        }
        Some((src, tgt)) => {
            let root = cfg
                .resolved_data_root()
                .ok_or_else(|| Error::Usage(format!("pair {} needs --data-root or XDOMAIN_DATA_ROOT", cfg.pair)))?;
            let o = LoadOptions::default();
            (
                load_corpus(src, &root, cfg.source_split, Domain::Source, o)?,
                load_corpus(tgt, &root, Split::Train, Domain::Target, o)?,
                load_corpus(src, &root, Split::Test, Domain::Source, o)?,
                load_corpus(tgt, &root, Split::Test, Domain::Target, o)?,
            )
        }
    };
    let source_train = if cfg.augment_source { augment_inversion(&source_train)? } else { source_train };
    let target_train = if cfg.augment_target { augment_inversion(&target_train)? } else { target_train };
    Ok(RunData { source_train, target_train: target_train.without_labels(), source_test, target_test })
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub resume: Option<PathBuf>,
    /// Stop once this step is reached, as if interrupted.
    pub stop_at: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainingRun {
    pub output_dir: PathBuf,
    pub final_step: u64,
    pub evals: Vec<EvalResult>,
    /// Highest target accuracy seen; the reported figure.
    pub best: Option<EvalResult>,
    pub last: Option<EvalResult>,
}

pub fn metrics_header() -> String {
    format!("{},target_accuracy,source_accuracy", LossReport::csv_header())
}

pub fn checkpoint_name(step: u64) -> String {
    format!("step_{step}.ckpt")
}

/// Settings that may change between an interrupted run and its resumption.
fn resumable_view(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.max_iterations = 0;
    c.output_dir.clear();
    c.data_root.clear();
    c.checkpoint_every = 0;
    c.panels = false;
    c
}

/// Keeps the header and the rows up to `step`, so a resumed run appends
/// exactly what an uninterrupted one would have written.
fn truncate_metrics(path: &Path, step: u64) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0 || line.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= step);
        if keep {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

fn open_metrics(path: &Path) -> Result<LineWriter<fs::File>> {
    let fresh = !path.exists();
    let f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = LineWriter::new(f);
    if fresh {
        writeln!(w, "{}", metrics_header()).map_err(|e| Error::io(path, e))?;
    }
    Ok(w)
}

/// Appends a loss-free row carrying an evaluation, as the `eval` command does.
pub fn append_eval_row(path: &Path, r: &EvalResult) -> Result<()> {
    let empty = LossReport::csv_header().matches(',').count();
    let mut w = open_metrics(path)?;
    writeln!(w, "{}{},{},{}", r.step, ",".repeat(empty), r.target_accuracy, r.source_accuracy)
        .map_err(|e| Error::io(path, e))
}

fn panel_batch(data: &RunData) -> Result<Option<PairedBatch>> {
    const N: usize = 64;
    if data.source_test.len() < N || data.target_test.len() < N {
        return Ok(None);
    }
    let (xs, ys) = data.source_test.range(0, N)?;
    let (xt, _) = data.target_test.range(0, N)?;
    Ok(Some(PairedBatch::new(xs, ys.unwrap_or_else(|| vec![0; N]), xt)?))
}

pub fn train(cfg: &ExperimentConfig, data: &RunData, opts: &TrainOptions) -> Result<TrainingRun> {
    cfg.validate()?;
    let out = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let metrics_path = out.join(METRICS_FILE);
    let step_opts = cfg.step_options();

    let (mut state, mut it) = match &opts.resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if resumable_view(&ck.config) != resumable_view(cfg) {
                return Err(Error::Usage(format!("{} was written under a different configuration", path.display())));
            }
            truncate_metrics(&metrics_path, ck.state.step)?;
            let it =
                BatchIterator::resume(&data.source_train, &data.target_train, cfg.train_batch, cfg.seed, ck.iterator)?;
            (ck.state, it)
        }
        None => {
            if metrics_path.exists() {
                fs::remove_file(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
            }
            let state = TrainState::new(&cfg.arch(), cfg.scheme.into(), &cfg.schedule(), cfg.seed)?;
            let it = BatchIterator::new(&data.source_train, &data.target_train, cfg.train_batch, cfg.seed)?;
            (state, it)
        }
    };
    let mut metrics = open_metrics(&metrics_path)?;
    let panels = if cfg.panels { panel_batch(data)? } else { None };
    let stop = opts.stop_at.map_or(cfg.max_iterations, |s| s.min(cfg.max_iterations));

    log::info!("{} {} from step {} to {}", cfg.pair, state.scheme.name(), state.step, stop);
    while state.step < stop {
        let batch = it.next_batch()?;
        let report = match trainer::step(&mut state, &batch, &step_opts) {
            Ok(r) => r,
            Err(e @ xdomain_core::Error::NonFinite(_)) => {
                let diag = out.join(DIAGNOSTIC_CHECKPOINT);
                checkpoint::save(&diag, cfg, &state, it.state())?;
                log::error!("step {}: {e}; state saved to {}", state.step + 1, diag.display());
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        };
        let k = state.step;
        let mut row = report.csv_row(k);
        if k % cfg.eval_every == 0 || k == cfg.max_iterations {
            let r = evaluate_accuracy(
                &state.bundle,
                cfg.pair.name(),
                k,
                &data.source_test,
                &data.target_test,
                cfg.test_batch,
            )?;
            log::info!("step {k} target {:.4} source {:.4}", r.target_accuracy, r.source_accuracy);
            row.push_str(&format!(",{},{}", r.target_accuracy, r.source_accuracy));
            let best_path = out.join(BEST_CHECKPOINT);
            if r.target_accuracy > state.best_target_accuracy || !best_path.exists() {
                state.best_target_accuracy = state.best_target_accuracy.max(r.target_accuracy);
                checkpoint::save(&best_path, cfg, &state, it.state())?;
            }
            if let Some(b) = &panels {
                render_panels(&state.bundle, b, &out.join("panels"), &format!("step_{k:06}_"))?;
            }
        } else {
            row.push_str(",,");
        }
        writeln!(metrics, "{row}").map_err(|e| Error::io(&metrics_path, e))?;
        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 {
            checkpoint::save(&out.join(checkpoint_name(k)), cfg, &state, it.state())?;
        }
    }
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
    let last_name = out.join(checkpoint_name(state.step));
    if !last_name.exists() {
        checkpoint::save(&last_name, cfg, &state, it.state())?;
    }

    // from the file, so a resumed run reports its whole history
    let evals: Vec<EvalResult> = read_accuracies(&metrics_path)?
        .into_iter()
        .map(|(step, t, s)| EvalResult {
            pair: cfg.pair.name().into(),
            step,
            target_accuracy: t,
            source_accuracy: s,
            n_evaluated: data.target_test.len(),
        })
        .collect();
    let best = evals.iter().fold(None::<&EvalResult>, |b, r| match b {
        Some(b) if b.target_accuracy >= r.target_accuracy => Some(b),
        _ => Some(r),
    });
    let run = TrainingRun {
        output_dir: out.clone(),
        final_step: state.step,
        best: best.cloned(),
        last: evals.last().cloned(),
        evals,
    };
    let summary = out.join(SUMMARY_FILE);
    fs::write(&summary, serde_json::to_string_pretty(&run).expect("serializable"))
        .map_err(|e| Error::io(&summary, e))?;
    Ok(run)
}

/// `(step, target, source)` accuracy of every evaluation row in a `metrics.csv`.
pub fn read_accuracies(path: &Path) -> Result<Vec<(u64, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let n = f.len();
        if n < 3 || f[n - 2].is_empty() {
            continue;
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::ingest(path, format!("bad number `{s}`")));
        let step = f[0].parse().map_err(|_| Error::ingest(path, format!("bad step `{}`", f[0])))?;
        out.push((step, parse(f[n - 2])?, parse(f[n - 1])?));
    }
    Ok(out)
}

/// Column `name` of a `metrics.csv` as `(step, value)`, skipping empty cells.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<(u64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::ingest(path, "empty metrics file"))?;
    let col =
        header.split(',').position(|h| h == name).ok_or_else(|| Error::ingest(path, format!("no column `{name}`")))?;
    let mut out = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if let (Some(s), Some(v)) = (f.first(), f.get(col)) {
            if !v.is_empty() {
                let step = s.parse().map_err(|_| Error::ingest(path, format!("bad step `{s}`")))?;
                let v = v.parse().map_err(|_| Error::ingest(path, format!("bad number `{v}`")))?;
                out.push((step, v));
            }
        }
    }
    Ok(out)
}

/// Mean of the values at steps `end - window + 1 ..= end`.
pub fn moving_average(series: &[(u64, f64)], end: u64, window: u64) -> Option<f64> {
    let vals: Vec<f64> = series.iter().filter(|(s, _)| *s <= end && *s + window > end).map(|(_, v)| *v).collect();
    (vals.len() as u64 == window).then(|| vals.iter().sum::<f64>() / window as f64)
}
