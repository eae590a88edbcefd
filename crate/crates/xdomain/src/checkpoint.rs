//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `XDCKPT01`, a little-endian `u64` header length,
//! a JSON header, then every tensor as little-endian `f64` in header order.
//! Parameters are keyed by canonical path; a shared group appears once and is
//! re-linked to both of its networks by path on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xdomain_core::optim::Moments;
use xdomain_core::{Adam, NetworkBundle, Tensor, TrainState};

use crate::config::ExperimentConfig;
use crate::datasets::IteratorState;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"XDCKPT01";

#[derive(Serialize, Deserialize)]
struct Entry {
    path: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    name: String,
    t: u64,
    params: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RngHeader {
    seed: String,
    stream: u64,
    /// Decimal, as it exceeds 64 bits.
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: String,
    step: u64,
    best_target_accuracy: f64,
    rng: RngHeader,
    iterator: IteratorState,
    params: Vec<Entry>,
    stats: Vec<Entry>,
    optimizers: Vec<OptimizerHeader>,
}

/// Everything needed to continue a run bit for bit.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub state: TrainState,
    pub iterator: IteratorState,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

fn optimizers(state: &TrainState) -> Vec<(&'static str, &Adam)> {
    let mut v = vec![("discriminators", &state.opt_d), ("autoencoders", &state.opt_g)];
    if let Some(l) = &state.opt_latent {
        v.push(("latent_discriminator", l));
    }
    v
}

pub fn save(path: &Path, config: &ExperimentConfig, state: &TrainState, iterator: IteratorState) -> Result<()> {
    let store = &state.bundle.store;
    let mut payload: Vec<f64> = Vec::new();
    let mut params = Vec::new();
    for id in store.ids() {
        let v = store.value(id);
        params.push(Entry { path: store.info(id).path.clone(), shape: v.shape().to_vec() });
        payload.extend_from_slice(v.data());
    }
    let mut stats = Vec::new();
    for s in store.all_stats() {
        stats.push(Entry { path: s.path.clone(), shape: vec![s.mean.len()] });
        payload.extend_from_slice(&s.mean);
        payload.extend_from_slice(&s.var);
    }
    let mut opts = Vec::new();
    for (name, opt) in optimizers(state) {
        opts.push(OptimizerHeader {
            name: name.into(),
            t: opt.steps(),
            params: opt.params().iter().map(|&id| store.info(id).path.clone()).collect(),
        });
        for slot in opt.slots() {
            payload.extend_from_slice(slot.m.data());
            payload.extend_from_slice(slot.v.data());
        }
    }
    let header = Header {
        config: config.to_text(),
        step: state.step,
        best_target_accuracy: state.best_target_accuracy,
        rng: RngHeader {
            seed: hex(&state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        iterator,
        params,
        stats,
        optimizers: opts,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in &payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // write then rename, so a crash never leaves a torn checkpoint
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    data: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self
            .data
            .get(self.at..self.at + 8 * n)
            .ok_or_else(|| Error::checkpoint(self.path, "payload shorter than its header describes"))?;
        self.at += 8 * n;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::checkpoint(path, m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let json = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::checkpoint(path, format!("header: {e}")))?;
    let config = ExperimentConfig::parse(&header.config)?;
    let mut bundle = NetworkBundle::build(&config.arch())?;
    let mut rd = Reader { path, data: &bytes[16 + hlen..], at: 0 };

    if header.params.len() != bundle.store.len() {
        return Err(bad("parameter count differs from the configured networks"));
    }
    for e in &header.params {
        let id = bundle
            .store
            .find(&e.path)
            .ok_or_else(|| Error::checkpoint(path, format!("unknown parameter {}", e.path)))?;
        if bundle.store.value(id).shape() != e.shape.as_slice() {
            return Err(Error::checkpoint(path, format!("shape of {} differs", e.path)));
        }
        let n = e.shape.iter().product();
        *bundle.store.value_mut(id) = Tensor::from_vec(&e.shape, rd.take(n)?)?;
    }
    if header.stats.len() != bundle.store.all_stats().len() {
        return Err(bad("BatchNorm statistics differ from the configured networks"));
    }
    for e in &header.stats {
        let n = e.shape[0];
        let mean = rd.take(n)?;
        let var = rd.take(n)?;
        let s = bundle
            .store
            .all_stats_mut()
            .iter_mut()
            .find(|s| s.path == e.path && s.mean.len() == n)
            .ok_or_else(|| Error::checkpoint(path, format!("unknown statistics {}", e.path)))?;
        s.mean = mean;
        s.var = var;
    }

    let seed = unhex(&header.rng.seed).ok_or_else(|| bad("malformed rng seed"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(header.rng.stream);
    rng.set_word_pos(header.rng.word_pos.parse().map_err(|_| bad("malformed rng position"))?);

    let mut state = TrainState::from_parts(bundle, config.scheme.into(), &config.schedule(), rng);
    state.step = header.step;
    state.best_target_accuracy = header.best_target_accuracy;
    let expected: Vec<&str> = optimizers(&state).iter().map(|(n, _)| *n).collect();
    let found: Vec<&str> = header.optimizers.iter().map(|o| o.name.as_str()).collect();
    if expected != found {
        return Err(Error::checkpoint(path, format!("optimizers {found:?}, expected {expected:?}")));
    }
    for oh in &header.optimizers {
        let opt = match oh.name.as_str() {
            "discriminators" => &mut state.opt_d,
            "autoencoders" => &mut state.opt_g,
            _ => state.opt_latent.as_mut().expect("checked above"),
        };
        let store = &state.bundle.store;
        let paths: Vec<&str> = opt.params().iter().map(|&id| store.info(id).path.as_str()).collect();
        if paths != oh.params.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::checkpoint(path, format!("parameter list of optimizer {} differs", oh.name)));
        }
        let mut slots = Vec::with_capacity(paths.len());
        for &id in opt.params() {
            let shape = store.value(id).shape().to_vec();
            let n = shape.iter().product();
            let m = Tensor::from_vec(&shape, rd.take(n)?)?;
            let v = Tensor::from_vec(&shape, rd.take(n)?)?;
            slots.push(Moments { m, v });
        }
        opt.restore(oh.t, slots)?;
    }
    if rd.at != rd.data.len() {
        return Err(bad("trailing bytes after the payload"));
    }
    Ok(Checkpoint { config, state, iterator: header.iterator })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::canned("toy").unwrap();
        cfg.d_z = 4;
        cfg.width_divisor = 64;
        cfg
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        for scheme in ["mmd", "gan"] {
            let mut cfg = small_config();
            cfg.set("scheme", scheme).unwrap();
            let mut state = TrainState::new(&cfg.arch(), cfg.scheme.into(), &cfg.schedule(), 3).unwrap();
            state.step = 17;
            state.best_target_accuracy = 0.25;
            let _ = rand::Rng::gen::<u64>(&mut state.rng);
            state.bundle.store.all_stats_mut()[0].mean[0] = 0.5;
            let it = IteratorState { source_epoch: 2, source_pos: 5, target_epoch: 1, target_pos: 9 };
            save(&path, &cfg, &state, it).unwrap();
            let ck = load(&path).unwrap();
            assert_eq!(ck.config, cfg);
            assert_eq!(ck.iterator, it);
            assert_eq!(ck.state, state);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let cfg = small_config();
        let state = TrainState::new(&cfg.arch(), cfg.scheme.into(), &cfg.schedule(), 3).unwrap();
        save(&path, &cfg, &state, IteratorState::default()).unwrap();
        let good = fs::read(&path).unwrap();
        fs::write(&path, &good[..good.len() - 8]).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint { .. })));
        let mut bad = good.clone();
        bad[0] = b'Y';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint { .. })));
        assert!(load(&dir.path().join("missing.ckpt")).is_err());
    }
}
