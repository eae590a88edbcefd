//! Alternating training steps.
//!
//! One step runs its phases in a fixed order, each on its own tape:
//!
//! 1. image discriminators `D1`, `D2` on GAN-D + feature + classification;
//! 2. (latent-GAN scheme only) the latent discriminator;
//! 3. encoders and generators on GAN-G + reconstruction + latent constraint.
//!
//! Each phase marks only its own parameters trainable, so the others enter
//! the tape as constants and are never touched by its optimizer. A later
//! phase reads the parameters written by earlier phases of the same step.
//!
//! RNG budget: each step draws exactly `(n_source + n_target) * d_z` prior
//! normals from the state's generator before anything else, whatever the
//! scheme or weights. Batch shuffling uses a separate generator owned by the
//! data pipeline.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, StatUpdate, Var, BN_MOMENTUM};
use crate::networks::{ArchConfig, DiscOutput, Domain, NetworkBundle};
use crate::nn::{Owners, ParamId, ParamStore};
pub use crate::objectives::Scheme;
use crate::objectives::{assemble_step_losses, LossFragment, LossReport, LossWeights, Term};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

/// Optimizer and evaluation schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_iterations: u64,
    pub eval_every: u64,
    pub train_batch: usize,
    pub test_batch: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            max_iterations: 200_000,
            eval_every: 100,
            train_batch: 64,
            test_batch: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.max_iterations == 0 || self.eval_every == 0 || self.train_batch < 2 || self.test_batch == 0 {
            return Err(Error::Config("schedule counts must be positive (train_batch at least 2)".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Per-step settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub weights: LossWeights,
    pub schedule: Schedule,
    /// Also classify reconstructed source images in the discriminator phase.
    pub classify_reconstructions: bool,
}

/// One labeled source batch and one unlabeled target batch, RGB in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedBatch {
    pub source: Tensor,
    pub source_labels: Vec<usize>,
    pub target: Tensor,
}

impl PairedBatch {
    pub fn new(source: Tensor, source_labels: Vec<usize>, target: Tensor) -> Result<Self> {
        let b = PairedBatch { source, source_labels, target };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, c, h, w) = self.source.dims4()?;
        let (m, ct, ht, wt) = self.target.dims4()?;
        if (c, h, w) != (ct, ht, wt) {
            return Err(Error::Shape {
                context: "paired batch",
                expected: self.source.shape()[1..].to_vec(),
                actual: self.target.shape()[1..].to_vec(),
            });
        }
        if n != self.source_labels.len() {
            return Err(Error::Dimension { expected: n, actual: self.source_labels.len() });
        }
        if n < 2 || m < 2 {
            return Err(Error::domain("batches need at least two images per domain"));
        }
        Ok(())
    }
}

/// `n x d_z` i.i.d. `N(0, sigma^2)` draws, row-major.
pub fn sample_prior<R: rand::Rng + ?Sized>(n: usize, d_z: usize, sigma: f64, rng: &mut R) -> Result<Tensor> {
    if n == 0 || d_z == 0 {
        return Err(Error::domain("prior sample needs n, d_z >= 1"));
    }
    let d = Normal::new(0.0, sigma).map_err(|_| Error::domain(format!("invalid prior std {sigma}")))?;
    Tensor::from_vec(&[n, d_z], (0..n * d_z).map(|_| d.sample(rng)).collect())
}

/// The images a discriminator is applied to within one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Image {
    SourceReal,
    TargetReal,
    /// `G1(E1(xs))`
    SourceRecon,
    /// `G2(E2(xt))`
    TargetRecon,
    /// `G2(E1(xs))`, judged in the target domain
    SourceToTarget,
    /// `G1(E2(xt))`, judged in the source domain
    TargetToSource,
}

impl Image {
    pub const ALL: [Image; 6] = [
        Image::SourceReal,
        Image::TargetReal,
        Image::SourceRecon,
        Image::TargetRecon,
        Image::SourceToTarget,
        Image::TargetToSource,
    ];

    /// Domain whose discriminator judges this image.
    pub fn domain(self) -> Domain {
        match self {
            Image::SourceReal | Image::SourceRecon | Image::TargetToSource => Domain::Source,
            _ => Domain::Target,
        }
    }
}

/// Encoder/generator outputs of one batch on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub xs: Var,
    pub xt: Var,
    pub zs: Var,
    pub zt: Var,
    pub recon_s: Var,
    pub recon_t: Var,
    pub trans_st: Var,
    pub trans_ts: Var,
}

impl Forward {
    pub fn build(g: &mut Graph<'_>, bundle: &NetworkBundle, batch: &PairedBatch) -> Result<Forward> {
        let xs = g.input(batch.source.clone());
        let xt = g.input(batch.target.clone());
        let zs = bundle.encode_rgb(g, Domain::Source, xs)?;
        let zt = bundle.encode_rgb(g, Domain::Target, xt)?;
        let recon_s = bundle.generate(g, Domain::Source, zs)?;
        let trans_st = bundle.generate(g, Domain::Target, zs)?;
        let recon_t = bundle.generate(g, Domain::Target, zt)?;
        let trans_ts = bundle.generate(g, Domain::Source, zt)?;
        Ok(Forward { xs, xt, zs, zt, recon_s, recon_t, trans_st, trans_ts })
    }

    pub fn image(&self, img: Image) -> Var {
        match img {
            Image::SourceReal => self.xs,
            Image::TargetReal => self.xt,
            Image::SourceRecon => self.recon_s,
            Image::TargetRecon => self.recon_t,
            Image::SourceToTarget => self.trans_st,
            Image::TargetToSource => self.trans_ts,
        }
    }
}

/// Builds individual loss terms on a tape, sharing network passes.
pub struct TermBuilder<'b> {
    pub bundle: &'b NetworkBundle,
    pub fw: Forward,
    labels: Vec<usize>,
    z_prior: Var,
    classify_reconstructions: bool,
    disc: [Option<DiscOutput>; 6],
    codes: Option<Var>,
}

impl<'b> TermBuilder<'b> {
    pub fn new(
        g: &mut Graph<'_>,
        bundle: &'b NetworkBundle,
        batch: &PairedBatch,
        z_prior: &Tensor,
        classify_reconstructions: bool,
    ) -> Result<Self> {
        batch.validate()?;
        let fw = Forward::build(g, bundle, batch)?;
        let z_prior = g.input(z_prior.clone());
        Ok(TermBuilder {
            bundle,
            fw,
            labels: batch.source_labels.clone(),
            z_prior,
            classify_reconstructions,
            disc: [None; 6],
            codes: None,
        })
    }

    fn disc(&mut self, g: &mut Graph<'_>, img: Image) -> Result<DiscOutput> {
        let k = img as usize;
        if let Some(d) = self.disc[k] {
            return Ok(d);
        }
        let d = self.bundle.discriminate(g, img.domain(), self.fw.image(img))?;
        self.disc[k] = Some(d);
        Ok(d)
    }

    /// `concat(E1(xs), E2(xt))`
    pub fn codes(&mut self, g: &mut Graph<'_>) -> Result<Var> {
        if let Some(c) = self.codes {
            return Ok(c);
        }
        let c = g.concat_batch(&[self.fw.zs, self.fw.zt])?;
        self.codes = Some(c);
        Ok(c)
    }

    /// Unweighted value of `term` as a tape scalar.
    pub fn raw(&mut self, g: &mut Graph<'_>, term: Term, sigma: f64) -> Result<Var> {
        let fw = self.fw;
        let v = match term {
            Term::Recon => {
                let a = g.l1_mean(fw.xs, fw.recon_s)?;
                let b = g.l1_mean(fw.xt, fw.recon_t)?;
                g.weighted_sum(&[(a, 1.0), (b, 1.0)])?
            }
            Term::Mmd => {
                let codes = self.codes(g)?;
                let spec = crate::metrics::KernelSpec::imq_for_prior(self.bundle.d_z(), sigma)?;
                g.mmd(self.z_prior, codes, spec)?
            }
            Term::LatentGanG => {
                let codes = self.codes(g)?;
                let p = self.bundle.discriminate_latent(g, codes)?;
                g.neg_log_mean(p, false)?
            }
            Term::LatentGanD => {
                let codes = self.codes(g)?;
                let real = self.bundle.discriminate_latent(g, self.z_prior)?;
                let fake = self.bundle.discriminate_latent(g, codes)?;
                let a = g.neg_log_mean(real, false)?;
                let b = g.neg_log_mean(fake, true)?;
                g.weighted_sum(&[(a, 1.0), (b, 1.0)])?
            }
            Term::GanD => {
                let mut parts = Vec::new();
                for (real, recon, trans) in [
                    (Image::SourceReal, Image::SourceRecon, Image::TargetToSource),
                    (Image::TargetReal, Image::TargetRecon, Image::SourceToTarget),
                ] {
                    let r = self.disc(g, real)?.adv;
                    let c = self.disc(g, recon)?.adv;
                    let t = self.disc(g, trans)?.adv;
                    parts.push((g.neg_log_mean(r, false)?, 1.0));
                    parts.push((g.neg_log_mean(c, true)?, 1.0));
                    parts.push((g.neg_log_mean(t, true)?, 1.0));
                }
                g.weighted_sum(&parts)?
            }
            Term::GanG => {
                let mut parts = Vec::new();
                for img in [Image::SourceRecon, Image::TargetToSource, Image::TargetRecon, Image::SourceToTarget] {
                    let p = self.disc(g, img)?.adv;
                    parts.push((g.neg_log_mean(p, false)?, 1.0));
                }
                g.weighted_sum(&parts)?
            }
            Term::Feature => {
                let hs = self.disc(g, Image::SourceReal)?.features;
                let hst = self.disc(g, Image::SourceToTarget)?.features;
                let ht = self.disc(g, Image::TargetReal)?.features;
                let hts = self.disc(g, Image::TargetToSource)?.features;
                let a = g.l1_mean(hs, hst)?;
                let b = g.l1_mean(ht, hts)?;
                g.weighted_sum(&[(a, 1.0), (b, 1.0)])?
            }
            Term::Cls => {
                let p = self.disc(g, Image::SourceReal)?.cls;
                let a = g.nll(p, &self.labels)?;
                if self.classify_reconstructions {
                    let q = self.disc(g, Image::SourceRecon)?.cls;
                    let b = g.nll(q, &self.labels)?;
                    g.weighted_sum(&[(a, 1.0), (b, 1.0)])?
                } else {
                    a
                }
            }
        };
        Ok(v)
    }

    /// Weighted sum of `terms`, also returning their values as a fragment.
    pub fn total(&mut self, g: &mut Graph<'_>, terms: &[Term], w: &LossWeights) -> Result<(Var, LossFragment)> {
        let mut parts = Vec::with_capacity(terms.len());
        let mut frag = LossFragment::new();
        for &t in terms {
            let v = self.raw(g, t, w.sigma)?;
            let raw = g.value(v).item();
            if !raw.is_finite() {
                return Err(Error::NonFinite(format!("loss term {} is {raw}", t.name())));
            }
            frag.add(t, raw, w.weight(t));
            parts.push((v, w.weight(t)));
        }
        Ok((g.weighted_sum(&parts)?, frag))
    }
}

/// Terms minimized by each phase.
pub const DISCRIMINATOR_TERMS: [Term; 3] = [Term::GanD, Term::Feature, Term::Cls];
pub const LATENT_TERMS: [Term; 1] = [Term::LatentGanD];

pub fn generator_terms(scheme: Scheme) -> [Term; 3] {
    match scheme {
        Scheme::Mmd => [Term::GanG, Term::Recon, Term::Mmd],
        Scheme::Gan => [Term::GanG, Term::Recon, Term::LatentGanG],
    }
}

/// Everything mutated by training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub bundle: NetworkBundle,
    pub scheme: Scheme,
    pub opt_d: Adam,
    pub opt_g: Adam,
    pub opt_latent: Option<Adam>,
    /// Prior sampler.
    pub rng: ChaCha8Rng,
    pub best_target_accuracy: f64,
}

impl TrainState {
    /// Fresh networks initialized from `seed`; the prior sampler uses a
    /// separate stream of the same seed.
    pub fn new(arch: &ArchConfig, scheme: Scheme, schedule: &Schedule, seed: u64) -> Result<Self> {
        let mut arch = arch.clone();
        if scheme == Scheme::Gan {
            arch.latent_discriminator = true;
        }
        let bundle = NetworkBundle::build_initialized(&arch, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self::from_parts(bundle, scheme, schedule, rng))
    }

    pub fn from_parts(bundle: NetworkBundle, scheme: Scheme, schedule: &Schedule, rng: ChaCha8Rng) -> Self {
        let cfg = schedule.adam();
        let opt_d = Adam::new(cfg, &bundle.store, bundle.store.owned_by(Owners::DISCRIMINATORS));
        let opt_g = Adam::new(cfg, &bundle.store, bundle.store.owned_by(Owners::AUTOENCODERS));
        let opt_latent =
            bundle.latent.is_some().then(|| Adam::new(cfg, &bundle.store, bundle.store.owned_by(Owners::D_LATENT)));
        TrainState { step: 0, bundle, scheme, opt_d, opt_g, opt_latent, rng, best_target_accuracy: 0.0 }
    }

    fn set_schedule(&mut self, s: &Schedule) {
        let cfg = s.adam();
        self.opt_d.config = cfg;
        self.opt_g.config = cfg;
        if let Some(o) = self.opt_latent.as_mut() {
            o.config = cfg;
        }
    }
}

/// Values carried from the start of a step into its phases.
#[derive(Clone, Debug)]
pub struct StepContext {
    pub z_prior: Tensor,
    /// Encoded codes of the batch before any update of this step.
    pub codes: Option<Tensor>,
}

/// Draws this step's prior sample; the first action of every step.
pub fn prepare(state: &mut TrainState, batch: &PairedBatch, opts: &StepOptions) -> Result<StepContext> {
    batch.validate()?;
    opts.weights.validate()?;
    opts.schedule.validate()?;
    state.set_schedule(&opts.schedule);
    let n = batch.source.batch() + batch.target.batch();
    let z_prior = sample_prior(n, state.bundle.d_z(), opts.weights.sigma, &mut state.rng)?;
    Ok(StepContext { z_prior, codes: None })
}

fn apply_stats(store: &mut ParamStore, updates: &[StatUpdate]) {
    for u in updates {
        let rs = store.stats_mut(u.buffer);
        for (r, b) in rs.mean.iter_mut().zip(&u.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, b) in rs.var.iter_mut().zip(&u.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

fn run_phase(
    store_ids: &[ParamId],
    bundle: &NetworkBundle,
    batch: &PairedBatch,
    ctx: &StepContext,
    opts: &StepOptions,
    terms: &[Term],
) -> Result<(crate::graph::Gradients, LossFragment, Option<Tensor>, Vec<StatUpdate>)> {
    let mut g = Graph::with_trainable(&bundle.store, Mode::Train, store_ids);
    let mut tb = TermBuilder::new(&mut g, bundle, batch, &ctx.z_prior, opts.classify_reconstructions)?;
    let (loss, frag) = tb.total(&mut g, terms, &opts.weights)?;
    let codes = tb.codes(&mut g)?;
    let codes = g.value(codes).clone();
    let grads = g.backward(loss)?;
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradient of the {:?} phase",
            terms.iter().map(|t| t.name()).collect::<Vec<_>>()
        )));
    }
    let stats = g.take_stat_updates();
    Ok((grads, frag, Some(codes), stats))
}

/// Updates `D1`, `D2` on GAN-D + feature + classification.
pub fn discriminator_phase(
    state: &mut TrainState,
    batch: &PairedBatch,
    ctx: &mut StepContext,
    opts: &StepOptions,
) -> Result<LossFragment> {
    let ids = state.opt_d.params().to_vec();
    let (grads, frag, codes, _) = run_phase(&ids, &state.bundle, batch, ctx, opts, &DISCRIMINATOR_TERMS)?;
    ctx.codes = codes;
    state.opt_d.step(&mut state.bundle.store, &grads)?;
    Ok(frag)
}

/// Updates the latent discriminator on prior draws versus the step's codes.
pub fn latent_phase(state: &mut TrainState, ctx: &StepContext, opts: &StepOptions) -> Result<LossFragment> {
    let codes = ctx.codes.as_ref().ok_or(Error::Assembly("latent phase needs the codes of the discriminator phase"))?;
    let opt = state
        .opt_latent
        .as_mut()
        .ok_or_else(|| Error::Config("latent-GAN scheme needs a latent discriminator".into()))?;
    let ids = opt.params().to_vec();
    let bundle = &state.bundle;
    let mut g = Graph::with_trainable(&bundle.store, Mode::Train, &ids);
    let z = g.input(ctx.z_prior.clone());
    let c = g.input(codes.clone());
    let real = bundle.discriminate_latent(&mut g, z)?;
    let fake = bundle.discriminate_latent(&mut g, c)?;
    let a = g.neg_log_mean(real, false)?;
    let b = g.neg_log_mean(fake, true)?;
    let raw = g.weighted_sum(&[(a, 1.0), (b, 1.0)])?;
    let rv = g.value(raw).item();
    if !rv.is_finite() {
        return Err(Error::NonFinite(format!("loss term {} is {rv}", Term::LatentGanD.name())));
    }
    let w = opts.weights.weight(Term::LatentGanD);
    let loss = g.scale(raw, w)?;
    let grads = g.backward(loss)?;
    opt.step(&mut state.bundle.store, &grads)?;
    Ok(LossFragment::single(Term::LatentGanD, rv, w))
}

/// Updates encoders and generators; applies their BatchNorm statistics.
pub fn generator_phase(
    state: &mut TrainState,
    batch: &PairedBatch,
    ctx: &StepContext,
    opts: &StepOptions,
) -> Result<LossFragment> {
    let ids = state.opt_g.params().to_vec();
    let terms = generator_terms(state.scheme);
    let (grads, frag, _, stats) = run_phase(&ids, &state.bundle, batch, ctx, opts, &terms)?;
    apply_stats(&mut state.bundle.store, &stats);
    state.opt_g.step(&mut state.bundle.store, &grads)?;
    Ok(frag)
}

fn finish(state: &mut TrainState, frags: &[LossFragment]) -> Result<LossReport> {
    let report = assemble_step_losses(frags, state.scheme)?;
    if let Some(name) = report.non_finite() {
        return Err(Error::NonFinite(format!("loss term {name}")));
    }
    state.step += 1;
    Ok(report)
}

/// One step of the MMD-penalty scheme: discriminators, then encoders/generators.
pub fn step_mmd(state: &mut TrainState, batch: &PairedBatch, opts: &StepOptions) -> Result<LossReport> {
    if state.scheme != Scheme::Mmd {
        return Err(Error::Config("step_mmd on a state configured for the latent-GAN scheme".into()));
    }
    let mut ctx = prepare(state, batch, opts)?;
    let d = discriminator_phase(state, batch, &mut ctx, opts)?;
    let g = generator_phase(state, batch, &ctx, opts)?;
    finish(state, &[d, g])
}

/// One step of the latent-GAN scheme: discriminators, latent discriminator,
/// then encoders/generators.
pub fn step_gan(state: &mut TrainState, batch: &PairedBatch, opts: &StepOptions) -> Result<LossReport> {
    if state.scheme != Scheme::Gan {
        return Err(Error::Config("step_gan on a state configured for the MMD scheme".into()));
    }
    let mut ctx = prepare(state, batch, opts)?;
    let d = discriminator_phase(state, batch, &mut ctx, opts)?;
    let l = latent_phase(state, &ctx, opts)?;
    let g = generator_phase(state, batch, &ctx, opts)?;
    finish(state, &[d, l, g])
}

/// Dispatches on the state's scheme.
pub fn step(state: &mut TrainState, batch: &PairedBatch, opts: &StepOptions) -> Result<LossReport> {
    match state.scheme {
        Scheme::Mmd => step_mmd(state, batch, opts),
        Scheme::Gan => step_gan(state, batch, opts),
    }
}

/// Source-only baseline step: the discriminator phase with every weight but
/// the classification weight zeroed. Only the `D1` classification path
/// receives gradient; the target batch is ignored.
pub fn step_source_only(state: &mut TrainState, source: &Tensor, labels: &[usize], opts: &StepOptions) -> Result<f64> {
    opts.schedule.validate()?;
    state.set_schedule(&opts.schedule);
    let ids = state.opt_d.params().to_vec();
    let mut g = Graph::with_trainable(&state.bundle.store, Mode::Train, &ids);
    let x = g.input(source.clone());
    let p = state.bundle.classify(&mut g, Domain::Source, x)?;
    let raw = g.nll(p, labels)?;
    let rv = g.value(raw).item();
    if !rv.is_finite() {
        return Err(Error::NonFinite(format!("loss term {} is {rv}", Term::Cls.name())));
    }
    let loss = g.scale(raw, opts.weights.cls)?;
    let grads = g.backward(loss)?;
    state.opt_d.step(&mut state.bundle.store, &grads)?;
    state.step += 1;
    Ok(rv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = sample_prior(1000, 1000, 2.0, &mut rng).unwrap();
        let n = z.len() as f64;
        let mean = z.sum() / n;
        let var = z.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((1.99..=2.01).contains(&var.sqrt()), "{}", var.sqrt());
        assert!(mean.abs() < 3.0 * 2.0 / n.sqrt());
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_prior(4, 3, 1.0, &mut a).unwrap(), sample_prior(4, 3, 1.0, &mut b).unwrap());
        assert!(sample_prior(0, 3, 1.0, &mut a).is_err());
    }

    #[test]
    fn schedule_defaults() {
        let s = Schedule::default();
        assert_eq!((s.learning_rate, s.weight_decay), (1e-4, 5e-4));
        assert_eq!((s.max_iterations, s.eval_every, s.train_batch, s.test_batch), (200_000, 100, 64, 100));
        assert!(s.validate().is_ok());
    }
}
