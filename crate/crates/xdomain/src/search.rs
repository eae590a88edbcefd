//! Greedy one-parameter-at-a-time hyper-parameter search.
//!
//! A plan file is TOML:
//!
//! ```toml
//! budget_iterations = 1000
//!
//! [[stage]]
//! parameter = "d_z"
//! candidates = [32, 64]
//! objective = "target_accuracy"
//! ```
//!
//! Stages run in file order. Each candidate is trained for the budget with
//! every other key held at its current value; the best candidate is fixed
//! before the next stage starts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::train::{self, RunData, TrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Best target accuracy of the trial.
    TargetAccuracy,
    /// Relative drop of the 100-step moving average of the MMD penalty from
    /// the first window to the last, minus the coefficient of variation over
    /// the last window.
    MmdDescentStability,
    /// Negated final 100-step moving average of the reconstruction term;
    /// stands in for translated-image quality.
    Reconstruction,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::TargetAccuracy => "target_accuracy",
            Objective::MmdDescentStability => "mmd_descent_stability",
            Objective::Reconstruction => "reconstruction",
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::Value::String(s.into())
            .try_into()
            .map_err(|_| Error::config("objective", format!("unknown objective `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub parameter: String,
    pub candidates: Vec<toml::Value>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
}

fn default_objective() -> Objective {
    Objective::TargetAccuracy
}

fn default_budget() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchPlan {
    #[serde(default = "default_budget")]
    pub budget_iterations: u64,
    #[serde(rename = "stage", default)]
    pub stages: Vec<Stage>,
}

/// Candidate value as it would be written in a config file.
fn value_text(v: &toml::Value) -> String {
    v.to_string()
}

impl SearchPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let plan: SearchPlan = toml::from_str(text).map_err(|e| Error::config("plan", e.message().to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::config("stage", "plan has no stages"));
        }
        if self.budget_iterations == 0 {
            return Err(Error::config("budget_iterations", "must be positive"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.candidates.is_empty() {
                return Err(Error::config(format!("stage.{i}.candidates"), "empty candidate list"));
            }
            if self.stages[..i].iter().any(|p| p.parameter == s.parameter) {
                return Err(Error::config(format!("stage.{i}.parameter"), format!("`{}` searched twice", s.parameter)));
            }
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.stages.iter().map(|s| s.candidates.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub stage: usize,
    pub parameter: String,
    pub candidate: String,
    pub objective: Objective,
    /// `Err` holds the failure message of a skipped candidate.
    pub value: std::result::Result<f64, String>,
    pub chosen: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchTable {
    pub trials: Vec<Trial>,
    pub best: ExperimentConfig,
}

impl SearchTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,parameter,candidate,objective,value,chosen\n");
        for t in &self.trials {
            let v = match &t.value {
                Ok(v) => v.to_string(),
                Err(m) => format!("failed: {}", m.replace([',', '\n'], ";")),
            };
            let _ =
                writeln!(s, "{},{},{},{},{},{}", t.stage, t.parameter, t.candidate, t.objective.name(), v, t.chosen);
        }
        s
    }
}

/// Runs the plan with `trial` scoring one configuration under one objective;
/// higher scores win and ties keep the earlier candidate.
pub fn greedy_search_with<F>(plan: &SearchPlan, base: &ExperimentConfig, mut trial: F) -> Result<SearchTable>
where
    F: FnMut(&ExperimentConfig, Objective, &str) -> Result<f64>,
{
    plan.validate()?;
    let mut current = base.clone();
    current.max_iterations = plan.budget_iterations;
    let mut trials = Vec::new();
    for (si, stage) in plan.stages.iter().enumerate() {
        let first = trials.len();
        let mut best: Option<(usize, f64, ExperimentConfig)> = None;
        for (ci, cand) in stage.candidates.iter().enumerate() {
            let text = value_text(cand);
            let tag = format!("{si:02}_{}_{ci:02}", stage.parameter);
            let mut cfg = current.clone();
            let value = cfg.set(&stage.parameter, &text).and_then(|_| trial(&cfg, stage.objective, &tag));
            let value = match value {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(format!("objective is {v}")),
                Err(e) => Err(e.to_string()),
            };
            match &value {
                Ok(v) => {
                    log::info!("{} = {text}: {} {v:.6}", stage.parameter, stage.objective.name());
                    if best.as_ref().map_or(true, |(_, b, _)| v > b) {
                        best = Some((trials.len(), *v, cfg));
                    }
                }
                Err(m) => log::warn!("{} = {text} failed: {m}", stage.parameter),
            }
            trials.push(Trial {
                stage: si,
                parameter: stage.parameter.clone(),
                candidate: text,
                objective: stage.objective,
                value,
                chosen: false,
            });
        }
        match best {
            Some((i, _, cfg)) => {
                trials[i].chosen = true;
                current = cfg;
            }
            None => log::warn!("every candidate of stage {si} failed; `{}` keeps its value", stage.parameter),
        }
        debug_assert!(trials[first..].iter().filter(|t| t.chosen).count() <= 1);
    }
    current.max_iterations = base.max_iterations;
    current.output_dir = base.output_dir.clone();
    Ok(SearchTable { trials, best: current })
}

/// Scores one finished trial from its `metrics.csv`.
pub fn score(metrics: &Path, objective: Objective) -> Result<f64> {
    match objective {
        Objective::TargetAccuracy => train::read_accuracies(metrics)?
            .iter()
            .map(|(_, t, _)| *t)
            .fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.max(v))))
            .ok_or_else(|| Error::domain("trial recorded no evaluation")),
        Objective::MmdDescentStability => {
            let s = train::read_column(metrics, "raw_mmd")?;
            let end = s.last().map(|(k, _)| *k).ok_or_else(|| Error::domain("trial has no MMD values"))?;
            let first = train::moving_average(&s, 100, 100).ok_or_else(|| Error::domain("fewer than 100 steps"))?;
            let last = train::moving_average(&s, end, 100).expect("window inside the run");
            let tail: Vec<f64> = s.iter().filter(|(k, _)| k + 100 > end).map(|(_, v)| *v).collect();
            let var = tail.iter().map(|v| (v - last) * (v - last)).sum::<f64>() / (tail.len() - 1) as f64;
            Ok((first - last) / first.abs() - var.sqrt() / last.abs())
        }
        Objective::Reconstruction => {
            let s = train::read_column(metrics, "raw_recon")?;
            let end = s.last().map(|(k, _)| *k).ok_or_else(|| Error::domain("trial has no reconstruction values"))?;
            train::moving_average(&s, end, 100).map(|v| -v).ok_or_else(|| Error::domain("fewer than 100 steps"))
        }
    }
}

/// Data depends on these keys only; trials that leave them alone share it.
fn data_key(c: &ExperimentConfig) -> String {
    format!(
        "{} {} {} {} {} {:?} {} {}",
        c.pair,
        c.seed,
        c.data_root,
        c.augment_source,
        c.augment_target,
        c.source_split,
        c.toy_per_class,
        c.toy_test_per_class
    )
}

/// Trains every trial under `<output_dir>/search/` and writes
/// `<output_dir>/search_table.csv`.
pub fn greedy_search(plan: &SearchPlan, base: &ExperimentConfig) -> Result<SearchTable> {
    let root = PathBuf::from(&base.output_dir);
    let mut cache: Option<(String, RunData)> = None;
    let table = greedy_search_with(plan, base, |cfg, objective, tag| {
        let mut cfg = cfg.clone();
        cfg.output_dir = root.join("search").join(tag).to_string_lossy().into_owned();
        cfg.panels = false;
        cfg.checkpoint_every = 0;
        let key = data_key(&cfg);
        if cache.as_ref().map_or(true, |(k, _)| *k != key) {
            cache = Some((key, train::load_data(&cfg)?));
        }
        let data = &cache.as_ref().expect("just filled").1;
        let run = train::train(&cfg, data, &TrainOptions::default())?;
        score(&run.output_dir.join(train::METRICS_FILE), objective)
    })?;
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let path = root.join("search_table.csv");
    fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLAN: &str = r#"
budget_iterations = 50

[[stage]]
parameter = "d_z"
candidates = [32, 64]

[[stage]]
parameter = "lambda1"
candidates = [0.1, 1.0, 10.0]
objective = "mmd_descent_stability"

[[stage]]
parameter = "lambda2"
candidates = [20.0]
"#;

    #[test]
    fn plan_arithmetic_and_order() {
        let plan = SearchPlan::parse(PLAN).unwrap();
        assert_eq!(plan.trial_count(), 6);
        let base = ExperimentConfig::canned("toy").unwrap();
        let mut seen = Vec::new();
        let table = greedy_search_with(&plan, &base, |cfg, obj, _| {
            seen.push((cfg.d_z, cfg.lambda1, cfg.lambda2, obj, cfg.max_iterations));
            // favours d_z 64 and lambda1 1.0
            Ok(-((cfg.d_z as f64 - 64.0).abs()) - (cfg.lambda1 - 1.0).abs())
        })
        .unwrap();
        assert_eq!(table.trials.len(), 6);
        for s in 0..3 {
            assert_eq!(table.trials.iter().filter(|t| t.stage == s && t.chosen).count(), 1);
        }
        // later stages see the earlier choices
        assert_eq!(seen[2].0, 64);
        assert!(seen.iter().all(|s| s.4 == 50));
        assert_eq!(seen[3].3, Objective::MmdDescentStability);
        assert_eq!((table.best.d_z, table.best.lambda1, table.best.lambda2), (64, 1.0, 20.0));
        assert_eq!(table.best.max_iterations, base.max_iterations);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().any(|l| l.starts_with("1,lambda1,1.0,mmd_descent_stability,") && l.ends_with(",true")));
    }

    #[test]
    fn failures_are_recorded_and_skipped() {
        let plan = SearchPlan::parse(
            "[[stage]]\nparameter = \"d_z\"\ncandidates = [1, 8, 16]\n[[stage]]\nparameter = \"sigma\"\ncandidates = [2.0]\n",
        )
        .unwrap();
        assert_eq!(plan.budget_iterations, 1000);
        let base = ExperimentConfig::canned("toy").unwrap();
        let table =
            greedy_search_with(
                &plan,
                &base,
                |cfg, _, _| {
                    if cfg.d_z == 16 {
                        Err(Error::domain("diverged"))
                    } else {
                        Ok(1.0)
                    }
                },
            )
            .unwrap();
        // d_z = 1 violates the config invariant
        assert!(table.trials[0].value.is_err());
        assert!(table.trials[1].chosen);
        assert!(table.trials[2].value.as_ref().unwrap_err().contains("diverged"));
        assert!(table.trials[3].chosen);
        assert_eq!(table.best.d_z, 8);
    }

    #[test]
    fn bad_plans_are_rejected() {
        assert!(SearchPlan::parse("budget_iterations = 10").is_err());
        assert!(SearchPlan::parse("[[stage]]\nparameter = \"d_z\"\ncandidates = []").is_err());
        assert!(SearchPlan::parse(
            "[[stage]]\nparameter = \"d_z\"\ncandidates = [2]\n[[stage]]\nparameter = \"d_z\"\ncandidates = [4]"
        )
        .is_err());
        assert!(SearchPlan::parse("[[stage]]\nparameter = \"d_z\"\ncandidates = [2]\nobjective = \"fid\"").is_err());
        assert_eq!("reconstruction".parse::<Objective>().unwrap(), Objective::Reconstruction);
    }
}
