//! Experiment configuration: flat `key = value` text with every key
//! documented in the README. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xdomain_core::{ArchConfig, LossWeights, Schedule, Scheme, StepOptions};

use crate::datasets::{Corpus, Split};
use crate::error::{Error, Result};

/// Source/target pairing of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pair {
    #[serde(rename = "svhn2mnist")]
    SvhnToMnist,
    #[serde(rename = "mnist2usps")]
    MnistToUsps,
    #[serde(rename = "usps2mnist")]
    UspsToMnist,
    #[serde(rename = "toy")]
    Toy,
}

impl Pair {
    pub const ALL: [Pair; 4] = [Pair::SvhnToMnist, Pair::MnistToUsps, Pair::UspsToMnist, Pair::Toy];

    pub fn name(self) -> &'static str {
        match self {
            Pair::SvhnToMnist => "svhn2mnist",
            Pair::MnistToUsps => "mnist2usps",
            Pair::UspsToMnist => "usps2mnist",
            Pair::Toy => "toy",
        }
    }

    /// Source and target corpora; `None` for the synthetic pair.
    pub fn corpora(self) -> Option<(Corpus, Corpus)> {
        match self {
            Pair::SvhnToMnist => Some((Corpus::Svhn, Corpus::Mnist)),
            Pair::MnistToUsps => Some((Corpus::Mnist, Corpus::Usps)),
            Pair::UspsToMnist => Some((Corpus::Usps, Corpus::Mnist)),
            Pair::Toy => None,
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pair {
    type Err = Error;

    /// Accepts `mnist2usps` as well as `mnist:usps`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(':', "2");
        Pair::ALL
            .into_iter()
            .find(|p| p.name() == norm || (norm == "toy2toy" && *p == Pair::Toy))
            .ok_or_else(|| Error::Usage(format!("unknown pair `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Mmd,
    Gan,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Scheme {
        match s {
            SchemeName::Mmd => Scheme::Mmd,
            SchemeName::Gan => Scheme::Gan,
        }
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmd" => Ok(SchemeName::Mmd),
            "gan" => Ok(SchemeName::Gan),
            _ => Err(Error::Usage(format!("unknown scheme `{s}` (mmd or gan)"))),
        }
    }
}

/// Every setting of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pair: Pair,
    #[serde(default = "defaults::scheme")]
    pub scheme: SchemeName,
    pub d_z: usize,
    pub sigma: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: u64,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: u64,
    #[serde(default = "defaults::train_batch")]
    pub train_batch: usize,
    #[serde(default = "defaults::test_batch")]
    pub test_batch: usize,
    #[serde(default = "defaults::adam_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "defaults::adam_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Falls back to `XDOMAIN_DATA_ROOT` when empty.
    #[serde(default)]
    pub data_root: String,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: String,
    #[serde(default = "defaults::split")]
    pub source_split: Split,
    #[serde(default)]
    pub augment_source: bool,
    #[serde(default)]
    pub augment_target: bool,
    #[serde(default = "defaults::one")]
    pub width_divisor: usize,
    #[serde(default = "defaults::leaky_slope")]
    pub leaky_slope: f64,
    #[serde(default = "defaults::gen_init_std")]
    pub gen_init_std: f64,
    #[serde(default)]
    pub classify_reconstructions: bool,
    /// Fixed-interval checkpoints; 0 disables them.
    #[serde(default = "defaults::checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default = "defaults::yes")]
    pub panels: bool,
    /// Synthetic pair only: images per class in the training splits.
    #[serde(default = "defaults::toy_per_class")]
    pub toy_per_class: usize,
    /// Synthetic pair only: images per class in the test splits.
    #[serde(default = "defaults::toy_test_per_class")]
    pub toy_test_per_class: usize,
}

mod defaults {
    use super::*;

    pub fn scheme() -> SchemeName {
        SchemeName::Mmd
    }
    pub fn learning_rate() -> f64 {
        Schedule::default().learning_rate
    }
    pub fn weight_decay() -> f64 {
        Schedule::default().weight_decay
    }
    pub fn max_iterations() -> u64 {
        Schedule::default().max_iterations
    }
    pub fn eval_every() -> u64 {
        Schedule::default().eval_every
    }
    pub fn train_batch() -> usize {
        Schedule::default().train_batch
    }
    pub fn test_batch() -> usize {
        Schedule::default().test_batch
    }
    pub fn adam_beta1() -> f64 {
        Schedule::default().adam_beta1
    }
    pub fn adam_beta2() -> f64 {
        Schedule::default().adam_beta2
    }
    pub fn adam_eps() -> f64 {
        Schedule::default().adam_eps
    }
    pub fn output_dir() -> String {
        "runs".into()
    }
    pub fn split() -> Split {
        Split::Train
    }
    pub fn one() -> usize {
        1
    }
    pub fn leaky_slope() -> f64 {
        ArchConfig::default().leaky_slope
    }
    pub fn gen_init_std() -> f64 {
        ArchConfig::default().gen_init_std
    }
    pub fn checkpoint_every() -> u64 {
        1000
    }
    pub fn yes() -> bool {
        true
    }
    pub fn toy_per_class() -> usize {
        200
    }
    pub fn toy_test_per_class() -> usize {
        100
    }
}

/// Shipped configurations, keyed by file name.
pub const CANNED: [(&str, &str); 4] = [
    ("svhn2mnist.cfg", include_str!("../configs/svhn2mnist.cfg")),
    ("mnist2usps.cfg", include_str!("../configs/mnist2usps.cfg")),
    ("usps2mnist.cfg", include_str!("../configs/usps2mnist.cfg")),
    ("toy.cfg", include_str!("../configs/toy.cfg")),
];

/// Key named by a parse error: the key on the line the error points at, or
/// the field quoted in the message.
fn error_key(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    if let Some(span) = err.span() {
        let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
        let line = text[line_start..].lines().next().unwrap_or("");
        if let Some((k, _)) = line.split_once('=') {
            return k.trim().to_string();
        }
    }
    "<root>".into()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(error_key(text, &e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// A shipped configuration by name, with or without the `.cfg` suffix.
    pub fn canned(name: &str) -> Result<Self> {
        let file = if name.ends_with(".cfg") { name.to_string() } else { format!("{name}.cfg") };
        let (_, text) = CANNED
            .iter()
            .find(|(n, _)| *n == file)
            .ok_or_else(|| Error::Usage(format!("no canned config `{name}`")))?;
        Self::parse(text)
    }

    /// Every key with its effective value.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, msg))
            }
        };
        check(self.d_z >= 2, "d_z", "must be at least 2")?;
        for (k, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            check(v.is_finite() && v >= 0.0, k, "must be finite and non-negative")?;
        }
        check(self.sigma.is_finite() && self.sigma > 0.0, "sigma", "must be positive")?;
        check(self.learning_rate.is_finite() && self.learning_rate > 0.0, "learning_rate", "must be positive")?;
        check(self.weight_decay.is_finite() && self.weight_decay >= 0.0, "weight_decay", "must be non-negative")?;
        check(self.max_iterations > 0, "max_iterations", "must be positive")?;
        check(self.eval_every > 0, "eval_every", "must be positive")?;
        check(self.train_batch >= 2, "train_batch", "must be at least 2")?;
        check(self.test_batch > 0, "test_batch", "must be positive")?;
        check((0.0..1.0).contains(&self.adam_beta1), "adam_beta1", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&self.adam_beta2), "adam_beta2", "must lie in [0, 1)")?;
        check(self.adam_eps > 0.0, "adam_eps", "must be positive")?;
        check(self.width_divisor > 0, "width_divisor", "must be positive")?;
        check((0.0..1.0).contains(&self.leaky_slope), "leaky_slope", "must lie in [0, 1)")?;
        check(self.gen_init_std > 0.0, "gen_init_std", "must be positive")?;
        check(self.seed <= i64::MAX as u64, "seed", "must be below 2^63")?;
        check(!self.output_dir.trim().is_empty(), "output_dir", "must not be empty")?;
        match self.pair {
            Pair::Toy => {
                check(self.toy_per_class >= 10, "toy_per_class", "must be at least 10")?;
                check(self.toy_test_per_class > 0, "toy_test_per_class", "must be positive")?;
            }
            Pair::SvhnToMnist => {}
            _ => check(self.source_split != Split::Extra, "source_split", "only SVHN has an extra split")?,
        }
        check(self.source_split != Split::Test, "source_split", "training on the test split is not allowed")?;
        self.arch().validate().map_err(|e| Error::config("arch", e.to_string()))
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            d_z: self.d_z,
            width_divisor: self.width_divisor,
            image_size: crate::datasets::IMAGE_SIZE,
            leaky_slope: self.leaky_slope,
            gen_init_std: self.gen_init_std,
            latent_discriminator: self.scheme == SchemeName::Gan,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            recon: self.lambda0,
            latent: self.lambda1,
            gan: self.lambda2,
            feature: self.lambda3,
            cls: self.lambda4,
            sigma: self.sigma,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            max_iterations: self.max_iterations,
            eval_every: self.eval_every,
            train_batch: self.train_batch,
            test_batch: self.test_batch,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
        }
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions {
            weights: self.weights(),
            schedule: self.schedule(),
            classify_reconstructions: self.classify_reconstructions,
        }
    }

    /// `data_root`, else `XDOMAIN_DATA_ROOT`.
    pub fn resolved_data_root(&self) -> Option<PathBuf> {
        if !self.data_root.trim().is_empty() {
            return Some(PathBuf::from(&self.data_root));
        }
        std::env::var_os("XDOMAIN_DATA_ROOT").filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    /// Sets one key from its textual value, as for command-line overrides
    /// and search trials.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_text()).expect("config round-trips");
        if !table.contains_key(key) {
            return Err(Error::config(key, "unknown key"));
        }
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("single key"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        table.insert(key.to_string(), parsed);
        let text = toml::to_string(&table).expect("table serializes");
        *self = Self::parse(&text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canned_configs_parse_and_round_trip() {
        for (name, _) in CANNED {
            let cfg = ExperimentConfig::canned(name).unwrap();
            let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
    }

    #[test]
    fn unknown_and_missing_keys_are_rejected() {
        let base = CANNED[1].1;
        let err = ExperimentConfig::parse(&format!("{base}\nlambda9 = 1.0\n")).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "lambda9"), "{err}");
        let without: String = base.lines().filter(|l| !l.starts_with("d_z")).map(|l| format!("{l}\n")).collect();
        let err = ExperimentConfig::parse(&without).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "d_z"), "{err}");
        let bad_type = base.replace("d_z = 64", "d_z = \"wide\"");
        let err = ExperimentConfig::parse(&bad_type).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "d_z"), "{err}");
        let negative = base.replace("lambda2 = 0.1", "lambda2 = -0.1");
        let err = ExperimentConfig::parse(&negative).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "lambda2"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn set_overrides_one_key() {
        let mut cfg = ExperimentConfig::canned("toy").unwrap();
        cfg.set("d_z", "32").unwrap();
        cfg.set("lambda1", "0.5").unwrap();
        cfg.set("scheme", "gan").unwrap();
        assert_eq!((cfg.d_z, cfg.lambda1, cfg.scheme), (32, 0.5, SchemeName::Gan));
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("d_z", "1").is_err());
    }

    #[test]
    fn pair_names() {
        assert_eq!("mnist:usps".parse::<Pair>().unwrap(), Pair::MnistToUsps);
        assert_eq!("svhn2mnist".parse::<Pair>().unwrap(), Pair::SvhnToMnist);
        assert!("usps:svhn".parse::<Pair>().is_err());
    }
}
