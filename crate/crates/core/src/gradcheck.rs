//! Central finite differences against the tape gradient of each loss term.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{Graph, Mode};
use crate::nn::ParamId;
use crate::trainer::{PairedBatch, TermBuilder};
use crate::{NetworkBundle, Result, Tensor, Term};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Floor of the relative-error denominator. Gradients below it are
    /// compared absolutely, since L1 terms carry micro-kinks from pixels whose
    /// residual changes sign inside `+-step`.
    pub floor: f64,
    /// Entries whose one-sided slopes differ by more than this fraction sit on
    /// a kink of `|.|` or LeakyReLU and are skipped.
    pub kink: f64,
    pub per_term: usize,
    pub sigma: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, floor: 1e-5, kink: 1e-3, per_term: 100, sigma: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermCheck {
    pub term: Term,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: f64,
    /// Entries above `tolerance`, as passed to [`check_term`].
    pub mismatches: Vec<Mismatch>,
}

fn value(bundle: &NetworkBundle, b: &PairedBatch, z: &Tensor, term: Term, sigma: f64) -> Result<f64> {
    let mut g = Graph::new(&bundle.store, Mode::Train);
    let mut tb = TermBuilder::new(&mut g, bundle, b, z, true)?;
    let v = tb.raw(&mut g, term, sigma)?;
    Ok(g.value(v).item())
}

/// Compares up to `cfg.per_term` randomly chosen gradient entries of `term`
/// with central differences. The bundle is restored before returning.
pub fn check_term<R: Rng + ?Sized>(
    bundle: &mut NetworkBundle,
    batch: &PairedBatch,
    z_prior: &Tensor,
    term: Term,
    cfg: &GradCheckConfig,
    tolerance: f64,
    rng: &mut R,
) -> Result<TermCheck> {
    let ids: Vec<ParamId> = bundle.store.ids().collect();
    let grads = {
        let mut g = Graph::with_trainable(&bundle.store, Mode::Train, &ids);
        let mut tb = TermBuilder::new(&mut g, bundle, batch, z_prior, true)?;
        let v = tb.raw(&mut g, term, cfg.sigma)?;
        g.backward(v)?
    };
    let mut pool: Vec<(ParamId, usize, f64)> = grads
        .iter()
        .flat_map(|(id, t)| t.data().iter().enumerate().map(move |(k, &a)| (id, k, a)).collect::<Vec<_>>())
        .collect();
    pool.shuffle(rng);
    let h = cfg.step;
    let mut out = TermCheck { term, checked: 0, skipped_kinks: 0, worst: 0.0, mismatches: Vec::new() };
    let f0 = value(bundle, batch, z_prior, term, cfg.sigma)?;
    for (id, k, analytic) in pool {
        if out.checked == cfg.per_term {
            break;
        }
        let x0 = bundle.store.value(id).data()[k];
        bundle.store.value_mut(id).data_mut()[k] = x0 + h;
        let fp = value(bundle, batch, z_prior, term, cfg.sigma);
        bundle.store.value_mut(id).data_mut()[k] = x0 - h;
        let fm = value(bundle, batch, z_prior, term, cfg.sigma);
        bundle.store.value_mut(id).data_mut()[k] = x0;
        let (fp, fm) = (fp?, fm?);
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        if (fwd - bwd).abs() > cfg.kink * fwd.abs().max(bwd.abs()).max(cfg.floor) {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.floor);
        if rel > tolerance {
            out.mismatches.push(Mismatch { param: id, index: k, analytic, numeric });
        }
        out.worst = out.worst.max(rel);
        out.checked += 1;
    }
    Ok(out)
}

/// [`check_term`] for every entry of [`Term::ALL`].
pub fn check_all<R: Rng + ?Sized>(
    bundle: &mut NetworkBundle,
    batch: &PairedBatch,
    z_prior: &Tensor,
    cfg: &GradCheckConfig,
    tolerance: f64,
    rng: &mut R,
) -> Result<Vec<TermCheck>> {
    Term::ALL.iter().map(|&t| check_term(bundle, batch, z_prior, t, cfg, tolerance, rng)).collect()
}
