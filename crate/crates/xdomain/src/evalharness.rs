//! Accuracy, the source-only baseline and image panels.

use std::path::{Path, PathBuf};

use serde::Serialize;
use xdomain_core::graph::Mode;
use xdomain_core::{eval, Domain, NetworkBundle, PairedBatch, Tensor, TrainState};

use crate::config::ExperimentConfig;
use crate::datasets::{BatchIterator, DomainDataset, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::imageio;
use crate::train::RunData;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub pair: String,
    pub step: u64,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    /// Size of the target test split.
    pub n_evaluated: usize,
}

/// Exact `(correct, total)` of the `domain` classifier over a labeled split,
/// evaluated `batch` images at a time with frozen statistics.
pub fn count_accuracy(
    bundle: &NetworkBundle,
    domain: Domain,
    ds: &DomainDataset,
    batch: usize,
) -> Result<(usize, usize)> {
    if !ds.is_labeled() {
        return Err(Error::domain(format!("{} has no labels to evaluate against", ds.name)));
    }
    if batch == 0 {
        return Err(Error::domain("evaluation batch must be positive"));
    }
    let mut correct = 0;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + batch).min(ds.len());
        let (x, y) = ds.range(start, end)?;
        let p = eval::predict(bundle, domain, &x, batch)?;
        correct += eval::count_correct(&p, &y.expect("labeled"))?;
        start = end;
    }
    Ok((correct, ds.len()))
}

pub fn accuracy(bundle: &NetworkBundle, domain: Domain, ds: &DomainDataset, batch: usize) -> Result<f64> {
    let (c, n) = count_accuracy(bundle, domain, ds, batch)?;
    Ok(c as f64 / n as f64)
}

/// Target accuracy through the target classifier `D2`, source accuracy
/// through `D1`.
pub fn evaluate_accuracy(
    bundle: &NetworkBundle,
    pair: &str,
    step: u64,
    source_test: &DomainDataset,
    target_test: &DomainDataset,
    batch: usize,
) -> Result<EvalResult> {
    Ok(EvalResult {
        pair: pair.into(),
        step,
        target_accuracy: accuracy(bundle, Domain::Target, target_test, batch)?,
        source_accuracy: accuracy(bundle, Domain::Source, source_test, batch)?,
        n_evaluated: target_test.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineResult {
    pub best: EvalResult,
    pub last: EvalResult,
}

/// Trains only the `D1` classification path on labeled source batches with
/// every other weight zeroed, under the same schedule and batch order as the
/// adapted run, and scores the target test split through `D1`.
pub fn baseline_source_only(cfg: &ExperimentConfig, data: &RunData) -> Result<BaselineResult> {
    cfg.validate()?;
    let opts = cfg.step_options();
    let mut state = TrainState::new(&cfg.arch(), cfg.scheme.into(), &cfg.schedule(), cfg.seed)?;
    let mut it = BatchIterator::new(&data.source_train, &data.target_train, cfg.train_batch, cfg.seed)?;
    let score = |state: &TrainState| -> Result<EvalResult> {
        Ok(EvalResult {
            pair: cfg.pair.name().into(),
            step: state.step,
            target_accuracy: accuracy(&state.bundle, Domain::Source, &data.target_test, cfg.test_batch)?,
            source_accuracy: accuracy(&state.bundle, Domain::Source, &data.source_test, cfg.test_batch)?,
            n_evaluated: data.target_test.len(),
        })
    };
    let mut best: Option<EvalResult> = None;
    let mut last = None;
    while state.step < cfg.max_iterations {
        let b = it.next_batch()?;
        xdomain_core::trainer::step_source_only(&mut state, &b.source, &b.source_labels, &opts)?;
        if state.step % cfg.eval_every == 0 || state.step == cfg.max_iterations {
            let r = score(&state)?;
            log::info!("source-only step {} target {:.4} source {:.4}", r.step, r.target_accuracy, r.source_accuracy);
            if best.as_ref().map_or(true, |b| r.target_accuracy > b.target_accuracy) {
                best = Some(r.clone());
            }
            last = Some(r);
        }
    }
    let last = match last {
        Some(r) => r,
        None => score(&state)?,
    };
    Ok(BaselineResult { best: best.unwrap_or_else(|| last.clone()), last })
}

pub const GRID: usize = 8;
pub const PANEL_NAMES: [&str; 6] =
    ["source_real", "source_recon", "source_to_target", "target_real", "target_recon", "target_to_source"];

/// The first 64 images of a `[n, 3, 32, 32]` batch tiled 8x8 as interleaved
/// RGB bytes of a 256x256 image.
pub fn tile_grid(images: &Tensor) -> Result<Vec<u8>> {
    let s = IMAGE_SIZE;
    let shape = images.shape();
    if shape.len() != 4 || shape[1..] != [3, s, s] || shape[0] < GRID * GRID {
        return Err(Error::domain(format!("panel grid needs at least 64 images of 3x{s}x{s}, got {shape:?}")));
    }
    let side = GRID * s;
    let mut out = vec![0u8; side * side * 3];
    for k in 0..GRID * GRID {
        let tile = imageio::to_display_bytes(&images.data()[k * 3 * s * s..(k + 1) * 3 * s * s]);
        let (ty, tx) = (k / GRID, k % GRID);
        for y in 0..s {
            let dst = ((ty * s + y) * side + tx * s) * 3;
            out[dst..dst + s * 3].copy_from_slice(&tile[y * s * 3..(y + 1) * s * 3]);
        }
    }
    Ok(out)
}

/// Writes `<prefix><name>.png` for the six panels, in [`PANEL_NAMES`] order.
pub fn render_panels(bundle: &NetworkBundle, batch: &PairedBatch, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let (xs, xt) = (&batch.source, &batch.target);
    let m = Mode::Eval;
    let images = [
        xs.clone(),
        bundle.reconstruct(xs, Domain::Source, m)?,
        bundle.translate(xs, Domain::Source, Domain::Target, m)?,
        xt.clone(),
        bundle.reconstruct(xt, Domain::Target, m)?,
        bundle.translate(xt, Domain::Target, Domain::Source, m)?,
    ];
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let side = GRID * IMAGE_SIZE;
    let mut paths = Vec::new();
    for (name, img) in PANEL_NAMES.iter().zip(&images) {
        let path = dir.join(format!("{prefix}{name}.png"));
        imageio::write_rgb_png(&path, side, side, &tile_grid(img)?)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_toy_split, Split};
    use xdomain_core::ArchConfig;

    fn bundle() -> NetworkBundle {
        let arch = ArchConfig { d_z: 4, width_divisor: 64, ..Default::default() };
        NetworkBundle::build_initialized(&arch, 5).unwrap()
    }

    #[test]
    fn accuracy_is_a_batch_invariant_exact_ratio() {
        let b = bundle();
        let ds = make_toy_split(20, 2, Split::Test, Domain::Target).unwrap();
        let (c1, n) = count_accuracy(&b, Domain::Target, &ds, 100).unwrap();
        let (c2, _) = count_accuracy(&b, Domain::Target, &ds, 37).unwrap();
        assert_eq!((c1, n), (c2, 200));
        // manual recount on the first 100
        let (x, y) = ds.range(0, 100).unwrap();
        let probs = eval::class_probabilities(&b, Domain::Target, &x, 100).unwrap();
        let manual = (0..100)
            .filter(|&i| {
                let row = &probs.data()[i * 10..(i + 1) * 10];
                let arg = (0..10).fold(0, |a, k| if row[k] > row[a] { k } else { a });
                arg == y.as_ref().unwrap()[i]
            })
            .count();
        let (c3, _) = count_accuracy(&b, Domain::Target, &ds.clone().truncated(100), 100).unwrap();
        assert_eq!(manual, c3);
        assert!(count_accuracy(&b, Domain::Target, &ds.without_labels(), 10).is_err());
    }

    #[test]
    fn panels_tile_and_round_trip() {
        let b = bundle();
        let s = make_toy_split(7, 1, Split::Test, Domain::Source).unwrap();
        let t = make_toy_split(7, 1, Split::Test, Domain::Target).unwrap();
        let (xs, ys) = s.range(0, 64).unwrap();
        let (xt, _) = t.range(0, 64).unwrap();
        let batch = PairedBatch::new(xs.clone(), ys.unwrap(), xt).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = render_panels(&b, &batch, dir.path(), "p_").unwrap();
        assert_eq!(paths.len(), 6);
        for p in &paths {
            let (w, h, _) = imageio::read_rgb_png(p).unwrap();
            assert_eq!((w, h), (256, 256));
        }
        let (_, _, real) = imageio::read_rgb_png(&paths[0]).unwrap();
        // tile (row 1, col 2) holds image 10
        let img = s.image(10).pixels;
        for c in 0..3 {
            for y in 0..32 {
                for x in 0..32 {
                    let v = img.data()[(c * 32 + y) * 32 + x];
                    let byte = real[((32 + y) * 256 + 64 + x) * 3 + c];
                    assert!((imageio::from_display_byte(byte) - v).abs() <= 1.0 / 255.0 + 1e-12);
                }
            }
        }
        let small = PairedBatch::new(xs.slice_batch(0, 10), vec![0; 10], xs.slice_batch(0, 10)).unwrap();
        assert!(render_panels(&b, &small, dir.path(), "q_").is_err());
    }
}
