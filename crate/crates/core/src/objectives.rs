//! Loss terms as pure functions of network outputs.
//!
//! Each function returns a [`LossFragment`] holding raw and weighted values.
//! Fragments for one batch are combined by [`assemble_step_losses`] into a
//! [`LossReport`], grouped by the training phase that minimizes them.
//!
//! Conventions: L1 terms are means over batch and element dimensions;
//! every adversarial log is clamped below at [`LOG_FLOOR`]; discriminators
//! minimize `-[ln D(real) + ln(1 - D(fake))]` and generators the
//! non-saturating `-ln D(fake)`.

use alloc::format;
use alloc::string::String;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::math;
use crate::metrics::{mmd_unbiased, KernelSpec};
use crate::tensor::Tensor;

/// Lower clamp applied inside every adversarial and classification log.
pub const LOG_FLOOR: f64 = 1e-8;

/// Relative weights of the loss terms and the prior scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// λ0, reconstruction.
    pub recon: f64,
    /// λ1, latent constraint (MMD penalty or latent GAN).
    pub latent: f64,
    /// λ2, image GAN.
    pub gan: f64,
    /// λ3, discriminator feature matching.
    pub feature: f64,
    /// λ4, source classification.
    pub cls: f64,
    /// Standard deviation of the Gaussian prior.
    pub sigma: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.recon),
            ("lambda1", self.latent),
            ("lambda2", self.gan),
            ("lambda3", self.feature),
            ("lambda4", self.cls),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Recon => self.recon,
            Term::Mmd | Term::LatentGanG | Term::LatentGanD => self.latent,
            Term::GanD | Term::GanG => self.gan,
            Term::Feature => self.feature,
            Term::Cls => self.cls,
        }
    }

    /// IMQ kernel matched to the prior: scale `2 * d_z * sigma^2`.
    pub fn kernel(&self, d_z: usize) -> Result<KernelSpec> {
        KernelSpec::imq_for_prior(d_z, self.sigma)
    }
}

/// Training phase that minimizes a term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminator,
    LatentDiscriminator,
    Generator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Recon,
    Mmd,
    LatentGanG,
    GanD,
    GanG,
    Feature,
    Cls,
    LatentGanD,
}

impl Term {
    /// Column order of [`LossReport::csv_row`].
    pub const ALL: [Term; 8] =
        [Term::Recon, Term::Mmd, Term::LatentGanG, Term::GanD, Term::GanG, Term::Feature, Term::Cls, Term::LatentGanD];

    pub fn name(self) -> &'static str {
        match self {
            Term::Recon => "recon",
            Term::Mmd => "mmd",
            Term::LatentGanG => "latent_gan_g",
            Term::GanD => "gan_d",
            Term::GanG => "gan_g",
            Term::Feature => "feature",
            Term::Cls => "cls",
            Term::LatentGanD => "latent_gan_d",
        }
    }

    pub fn phase(self) -> Phase {
        match self {
            Term::GanD | Term::Feature | Term::Cls => Phase::Discriminator,
            Term::LatentGanD => Phase::LatentDiscriminator,
            Term::Recon | Term::Mmd | Term::LatentGanG | Term::GanG => Phase::Generator,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermValue {
    pub raw: f64,
    pub weighted: f64,
}

/// Latent-code constraint used by [`wae_loss`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentConstraint {
    Mmd,
    None,
}

/// Some of the terms of one step. Adding a term twice sums it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossFragment {
    terms: [Option<TermValue>; 8],
}

impl LossFragment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(term: Term, raw: f64, weight: f64) -> Self {
        let mut f = Self::new();
        f.add(term, raw, weight);
        f
    }

    pub fn add(&mut self, term: Term, raw: f64, weight: f64) {
        let slot = &mut self.terms[term.index()];
        match slot {
            Some(v) => {
                v.raw += raw;
                v.weighted += weight * raw;
            }
            None => *slot = Some(TermValue { raw, weighted: weight * raw }),
        }
    }

    pub fn merge(&mut self, other: &LossFragment) {
        for t in Term::ALL {
            if let Some(v) = other.terms[t.index()] {
                let slot = &mut self.terms[t.index()];
                match slot {
                    Some(acc) => {
                        acc.raw += v.raw;
                        acc.weighted += v.weighted;
                    }
                    None => *slot = Some(v),
                }
            }
        }
    }

    pub fn get(&self, term: Term) -> Option<TermValue> {
        self.terms[term.index()]
    }

    pub fn terms(&self) -> impl Iterator<Item = (Term, TermValue)> + '_ {
        Term::ALL.into_iter().filter_map(|t| self.get(t).map(|v| (t, v)))
    }
}

/// All terms of a step and the per-phase totals.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    terms: LossFragment,
    pub total_discriminator: f64,
    pub total_generator: f64,
    pub total_latent_discriminator: Option<f64>,
}

impl LossReport {
    pub fn get(&self, term: Term) -> Option<TermValue> {
        self.terms.get(term)
    }

    pub fn raw(&self, term: Term) -> Option<f64> {
        self.get(term).map(|v| v.raw)
    }

    pub fn weighted(&self, term: Term) -> Option<f64> {
        self.get(term).map(|v| v.weighted)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Term, TermValue)> + '_ {
        self.terms.terms()
    }

    pub fn fragment(&self) -> &LossFragment {
        &self.terms
    }

    /// Name of the first non-finite term or total, if any.
    pub fn non_finite(&self) -> Option<String> {
        for (t, v) in self.terms() {
            if !v.raw.is_finite() || !v.weighted.is_finite() {
                return Some(t.name().into());
            }
        }
        if !self.total_discriminator.is_finite() {
            return Some("total_d".into());
        }
        if !self.total_generator.is_finite() {
            return Some("total_g".into());
        }
        if self.total_latent_discriminator.is_some_and(|v| !v.is_finite()) {
            return Some("total_latent_d".into());
        }
        None
    }

    pub fn csv_header() -> String {
        let mut s = String::from("step");
        for t in Term::ALL {
            let _ = write!(s, ",raw_{}", t.name());
        }
        for t in Term::ALL {
            let _ = write!(s, ",weighted_{}", t.name());
        }
        s.push_str(",total_d,total_g,total_latent_d");
        s
    }

    /// One CSV row; absent terms are empty fields.
    pub fn csv_row(&self, step: u64) -> String {
        let mut s = format!("{step}");
        for t in Term::ALL {
            s.push(',');
            if let Some(v) = self.raw(t) {
                let _ = write!(s, "{v}");
            }
        }
        for t in Term::ALL {
            s.push(',');
            if let Some(v) = self.weighted(t) {
                let _ = write!(s, "{v}");
            }
        }
        let _ = write!(s, ",{},{},", self.total_discriminator, self.total_generator);
        if let Some(v) = self.total_latent_discriminator {
            let _ = write!(s, "{v}");
        }
        s
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape { context, expected: a.shape().to_vec(), actual: b.shape().to_vec() });
    }
    if a.is_empty() {
        return Err(Error::domain(format!("{context}: empty input")));
    }
    Ok(())
}

/// Mean absolute difference over every element.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_same_shape(a, b, "l1_mean")?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / a.len() as f64)
}

fn check_probabilities(p: &Tensor, context: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::domain(format!("{context}: empty input")));
    }
    if let Some(v) = p.data().iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::NonFinite(format!("{context}: probability {v} outside [0, 1]")));
    }
    Ok(())
}

/// `mean(-ln(max(p, floor)))`
pub fn neg_log_mean(p: &Tensor) -> f64 {
    p.data().iter().map(|&v| -math::ln(v.max(LOG_FLOOR))).sum::<f64>() / p.len() as f64
}

/// `mean(-ln(max(1 - p, floor)))`
pub fn neg_log_complement_mean(p: &Tensor) -> f64 {
    p.data().iter().map(|&v| -math::ln((1.0 - v).max(LOG_FLOOR))).sum::<f64>() / p.len() as f64
}

/// Reconstruction cost plus, optionally, the unbiased MMD penalty between
/// prior draws and encoded codes.
pub fn wae_loss(
    x: &Tensor,
    x_tilde: &Tensor,
    z_tilde: &Tensor,
    z_prior: &Tensor,
    w: &LossWeights,
    constraint: LatentConstraint,
) -> Result<LossFragment> {
    let mut f = LossFragment::single(Term::Recon, l1_mean(x, x_tilde)?, w.recon);
    if constraint == LatentConstraint::Mmd {
        check_same_shape(z_prior, z_tilde, "wae_loss latents")?;
        let spec = w.kernel(z_prior.row_len())?;
        f.add(Term::Mmd, mmd_unbiased(z_prior, z_tilde, &spec)?, w.latent);
    }
    Ok(f)
}

/// Image discriminator loss on real, reconstructed and translated images.
pub fn gan_loss_discriminator(
    real_adv: &Tensor,
    recon_adv: &Tensor,
    trans_adv: &Tensor,
    w: &LossWeights,
) -> Result<LossFragment> {
    check_probabilities(real_adv, "gan_loss_discriminator real")?;
    check_probabilities(recon_adv, "gan_loss_discriminator recon")?;
    check_probabilities(trans_adv, "gan_loss_discriminator trans")?;
    let raw = neg_log_mean(real_adv) + neg_log_complement_mean(recon_adv) + neg_log_complement_mean(trans_adv);
    Ok(LossFragment::single(Term::GanD, raw, w.gan))
}

/// Non-saturating generator loss on reconstructed and translated images.
pub fn gan_loss_generator(recon_adv: &Tensor, trans_adv: &Tensor, w: &LossWeights) -> Result<LossFragment> {
    check_probabilities(recon_adv, "gan_loss_generator recon")?;
    check_probabilities(trans_adv, "gan_loss_generator trans")?;
    let raw = neg_log_mean(recon_adv) + neg_log_mean(trans_adv);
    Ok(LossFragment::single(Term::GanG, raw, w.gan))
}

/// L1 distance between discriminator features of an image and of its translation.
pub fn feature_loss(h_real: &Tensor, h_translated: &Tensor, w: &LossWeights) -> Result<LossFragment> {
    Ok(LossFragment::single(Term::Feature, l1_mean(h_real, h_translated)?, w.feature))
}

/// Cross-entropy of class probabilities against integer labels.
pub fn classification_loss(cls: &Tensor, labels: &[usize], w: &LossWeights) -> Result<LossFragment> {
    if cls.rank() != 2 || cls.shape()[0] != labels.len() || labels.is_empty() {
        return Err(Error::Shape {
            context: "classification_loss",
            expected: alloc::vec![labels.len(), 10],
            actual: cls.shape().to_vec(),
        });
    }
    let k = cls.shape()[1];
    let mut s = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain(format!("label {y} outside 0..{k}")));
        }
        s -= math::ln(cls.data()[i * k + y].max(LOG_FLOOR));
    }
    Ok(LossFragment::single(Term::Cls, s / labels.len() as f64, w.cls))
}

/// `(discriminator, encoder)` fragments of the latent adversarial game.
pub fn latent_gan_losses(
    real_z_adv: &Tensor,
    fake_z_adv: &Tensor,
    w: &LossWeights,
) -> Result<(LossFragment, LossFragment)> {
    check_probabilities(real_z_adv, "latent_gan real")?;
    check_probabilities(fake_z_adv, "latent_gan fake")?;
    let d = neg_log_mean(real_z_adv) + neg_log_complement_mean(fake_z_adv);
    let g = neg_log_mean(fake_z_adv);
    Ok((LossFragment::single(Term::LatentGanD, d, w.latent), LossFragment::single(Term::LatentGanG, g, w.latent)))
}

/// Latent constraint of a training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Unbiased MMD penalty between prior and codes.
    Mmd,
    /// Adversarial latent discriminator.
    Gan,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mmd => "mmd",
            Scheme::Gan => "gan",
        }
    }

    fn required(self) -> &'static [Term] {
        match self {
            Scheme::Mmd => &[Term::GanD, Term::Feature, Term::Cls, Term::GanG, Term::Recon, Term::Mmd],
            Scheme::Gan => {
                &[Term::GanD, Term::Feature, Term::Cls, Term::LatentGanD, Term::GanG, Term::Recon, Term::LatentGanG]
            }
        }
    }
}

/// Sums fragments and groups weighted terms into per-phase totals.
pub fn assemble_step_losses(fragments: &[LossFragment], scheme: Scheme) -> Result<LossReport> {
    let mut all = LossFragment::new();
    for f in fragments {
        all.merge(f);
    }
    for &t in scheme.required() {
        if all.get(t).is_none() {
            return Err(Error::Config(format!("missing loss term {} for the {} scheme", t.name(), scheme.name())));
        }
    }
    let (mut d, mut g, mut ld) = (0.0, 0.0, 0.0);
    for (t, v) in all.terms() {
        match t.phase() {
            Phase::Discriminator => d += v.weighted,
            Phase::Generator => g += v.weighted,
            Phase::LatentDiscriminator => ld += v.weighted,
        }
    }
    Ok(LossReport {
        terms: all,
        total_discriminator: d,
        total_generator: g,
        total_latent_discriminator: (scheme == Scheme::Gan).then_some(ld),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn w() -> LossWeights {
        LossWeights { recon: 1.0, latent: 1.0, gan: 1.0, feature: 1.0, cls: 1.0, sigma: 1.0 }
    }

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn wae_identity_is_zero_in_reconstruction() {
        let x = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|i| i as f64 / 24.0).collect()).unwrap();
        let z = Tensor::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.4], vec![1.0, 0.0]]).unwrap();
        let f = wae_loss(&x, &x, &z, &z, &w(), LatentConstraint::Mmd).unwrap();
        assert_eq!(f.get(Term::Recon).unwrap().raw, 0.0);
        let spec = KernelSpec::imq_for_prior(2, 1.0).unwrap();
        assert_eq!(f.get(Term::Mmd).unwrap().raw, mmd_unbiased(&z, &z, &spec).unwrap());
    }

    #[test]
    fn constant_offset_reconstruction() {
        let x = Tensor::full(&[4, 3, 8, 8], 0.25);
        let y = Tensor::full(&[4, 3, 8, 8], -0.25);
        let mut ws = w();
        ws.recon = 0.01;
        let z = Tensor::zeros(&[4, 2]);
        let f = wae_loss(&x, &y, &z, &z, &ws, LatentConstraint::None).unwrap();
        let v = f.get(Term::Recon).unwrap();
        assert_eq!(v.raw, 0.5);
        assert!((v.weighted - 0.005).abs() < 1e-15);
        assert!(f.get(Term::Mmd).is_none());
    }

    #[test]
    fn gan_values_at_one_half() {
        let h = t(&[0.5, 0.5]);
        let mut ws = w();
        ws.gan = 0.1;
        let d = gan_loss_discriminator(&h, &h, &h, &ws).unwrap().get(Term::GanD).unwrap();
        assert!((d.raw - 3.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert!((d.weighted - 0.3 * core::f64::consts::LN_2).abs() < 1e-15);
        let g = gan_loss_generator(&h, &h, &ws).unwrap().get(Term::GanG).unwrap();
        assert!((g.raw - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gan_limits_and_clamping() {
        let eps = 1e-12;
        let d = gan_loss_discriminator(&t(&[1.0 - eps]), &t(&[eps]), &t(&[eps]), &w()).unwrap();
        assert!(d.get(Term::GanD).unwrap().raw < 1e-10);
        let g = gan_loss_generator(&t(&[1.0 - eps]), &t(&[1.0 - eps]), &w()).unwrap();
        assert!(g.get(Term::GanG).unwrap().raw < 1e-10);
        let extreme = gan_loss_discriminator(&t(&[0.0]), &t(&[1.0]), &t(&[1.0]), &w()).unwrap();
        let v = extreme.get(Term::GanD).unwrap().raw;
        assert!(v.is_finite());
        assert!((v + 3.0 * math::ln(LOG_FLOOR)).abs() < 1e-12);
        assert!(gan_loss_generator(&t(&[1.5]), &t(&[0.5]), &w()).is_err());
        assert!(gan_loss_generator(&t(&[f64::NAN]), &t(&[0.5]), &w()).is_err());
    }

    #[test]
    fn generator_loss_is_monotone() {
        let mut prev = f64::INFINITY;
        for i in 1..20 {
            let p = t(&[i as f64 / 20.0]);
            let v = gan_loss_generator(&p, &t(&[0.5]), &w()).unwrap().get(Term::GanG).unwrap().raw;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn feature_loss_cases() {
        let a = Tensor::full(&[2, 4, 2, 2], 1.0);
        let b = Tensor::full(&[2, 4, 2, 2], 2.0);
        let mut ws = w();
        ws.feature = 0.001;
        let f = feature_loss(&a, &b, &ws).unwrap().get(Term::Feature).unwrap();
        assert_eq!(f.raw, 1.0);
        assert!((f.weighted - 0.001).abs() < 1e-18);
        assert_eq!(feature_loss(&a, &a, &ws).unwrap().get(Term::Feature).unwrap().raw, 0.0);
        assert_eq!(feature_loss(&a, &b, &ws).unwrap(), feature_loss(&b, &a, &ws).unwrap());
        assert!(feature_loss(&a, &Tensor::zeros(&[2, 4, 2, 1]), &ws).is_err());
    }

    #[test]
    fn classification_cases() {
        let mut onehot = vec![0.0; 30];
        for (i, y) in [3usize, 0, 9].iter().enumerate() {
            onehot[i * 10 + y] = 1.0;
        }
        let p = Tensor::from_vec(&[3, 10], onehot).unwrap();
        assert_eq!(classification_loss(&p, &[3, 0, 9], &w()).unwrap().get(Term::Cls).unwrap().raw, 0.0);
        let u = Tensor::full(&[3, 10], 0.1);
        let v = classification_loss(&u, &[1, 2, 7], &w()).unwrap().get(Term::Cls).unwrap().raw;
        assert!((v - math::ln(10.0)).abs() < 1e-12);
        assert!(classification_loss(&u, &[1, 2, 10], &w()).is_err());
    }

    #[test]
    fn latent_gan_at_one_half() {
        let h = t(&[0.5, 0.5, 0.5]);
        let (d, g) = latent_gan_losses(&h, &h, &w()).unwrap();
        assert!((d.get(Term::LatentGanD).unwrap().raw - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert!((g.get(Term::LatentGanG).unwrap().raw - core::f64::consts::LN_2).abs() < 1e-15);
        let (d, _) = latent_gan_losses(&t(&[1.0 - 1e-12]), &t(&[1e-12]), &w()).unwrap();
        assert!(d.get(Term::LatentGanD).unwrap().raw < 1e-10);
    }

    fn zeros(scheme: Scheme) -> Vec<LossFragment> {
        scheme.required().iter().map(|&t| LossFragment::single(t, 0.0, 1.0)).collect()
    }

    #[test]
    fn assembly_contracts() {
        let r = assemble_step_losses(&zeros(Scheme::Mmd), Scheme::Mmd).unwrap();
        assert_eq!((r.total_discriminator, r.total_generator), (0.0, 0.0));
        assert!(r.total_latent_discriminator.is_none());
        let r = assemble_step_losses(&zeros(Scheme::Gan), Scheme::Gan).unwrap();
        assert_eq!(r.total_latent_discriminator, Some(0.0));
        let mut partial = zeros(Scheme::Mmd);
        partial.pop();
        assert!(matches!(assemble_step_losses(&partial, Scheme::Mmd), Err(Error::Config(_))));
    }

    #[test]
    fn totals_match_resummation() {
        let ws = LossWeights { recon: 0.01, latent: 0.2, gan: 0.1, feature: 0.001, cls: 10.0, sigma: 2.0 };
        let frags: Vec<LossFragment> = Scheme::Gan
            .required()
            .iter()
            .enumerate()
            .map(|(i, &t)| LossFragment::single(t, 0.3 + i as f64, ws.weight(t)))
            .collect();
        let r = assemble_step_losses(&frags, Scheme::Gan).unwrap();
        let mut d = 0.0;
        let mut g = 0.0;
        for (t, v) in r.terms() {
            assert!((v.weighted - ws.weight(t) * v.raw).abs() < 1e-9);
            match t.phase() {
                Phase::Discriminator => d += ws.weight(t) * v.raw,
                Phase::Generator => g += ws.weight(t) * v.raw,
                Phase::LatentDiscriminator => {}
            }
        }
        assert!((r.total_discriminator - d).abs() < 1e-9);
        assert!((r.total_generator - g).abs() < 1e-9);
    }

    #[test]
    fn csv_layout() {
        let header = LossReport::csv_header();
        assert_eq!(header.split(',').count(), 1 + 16 + 3);
        let r = assemble_step_losses(&zeros(Scheme::Mmd), Scheme::Mmd).unwrap();
        let row = r.csv_row(7);
        assert_eq!(row.split(',').count(), 1 + 16 + 3);
        assert!(row.starts_with("7,0,0,,"));
        assert!(row.ends_with(",0,0,"));
    }

    #[test]
    fn weights_validate() {
        assert!(w().validate().is_ok());
        assert!(LossWeights { sigma: 0.0, ..w() }.validate().is_err());
        assert!(LossWeights { gan: -1.0, ..w() }.validate().is_err());
        assert!(LossWeights { cls: f64::NAN, ..w() }.validate().is_err());
    }
}
