use std::fs;

use xdomain::config::ExperimentConfig;
use xdomain::train::{self, TrainOptions};

fn tiny(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::canned("toy").unwrap();
    cfg.d_z = 4;
    cfg.toy_per_class = 10;
    cfg.toy_test_per_class = 5;
    cfg.train_batch = 4;
    cfg.panels = false;
    cfg.output_dir = dir.to_string_lossy().into_owned();
    cfg
}

#[test]
fn evaluation_runs_every_hundred_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.max_iterations = 1000;
    cfg.eval_every = 100;
    cfg.checkpoint_every = 1000;
    let data = train::load_data(&cfg).unwrap();
    let run = train::train(&cfg, &data, &TrainOptions::default()).unwrap();
    assert_eq!(run.final_step, 1000);
    let steps: Vec<u64> = run.evals.iter().map(|e| e.step).collect();
    assert_eq!(steps, (1..=10).map(|k| 100 * k).collect::<Vec<_>>());
    let rows = train::read_accuracies(&dir.path().join(train::METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 10);
    let best = run.best.unwrap();
    assert!(run.evals.iter().all(|e| e.target_accuracy <= best.target_accuracy));
    assert!(dir.path().join(train::BEST_CHECKPOINT).exists());
}

#[test]
fn resume_in_another_process_state_continues_identically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (mut ca, mut cb) = (tiny(a.path()), tiny(b.path()));
    for c in [&mut ca, &mut cb] {
        c.max_iterations = 12;
        c.eval_every = 4;
        c.checkpoint_every = 5;
    }
    let data = train::load_data(&ca).unwrap();
    let full = train::train(&ca, &data, &TrainOptions::default()).unwrap();
    // an interruption after step 7 loses everything past the step-5 checkpoint
    train::train(&cb, &data, &TrainOptions { resume: None, stop_at: Some(7) }).unwrap();
    let ck = b.path().join(train::checkpoint_name(5));
    let resumed = train::train(&cb, &data, &TrainOptions { resume: Some(ck), stop_at: None }).unwrap();
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join(train::METRICS_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(full.best.unwrap().step, resumed.best.unwrap().step);
}

#[test]
fn resume_rejects_a_different_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.max_iterations = 2;
    cfg.checkpoint_every = 2;
    let data = train::load_data(&cfg).unwrap();
    train::train(&cfg, &data, &TrainOptions::default()).unwrap();
    cfg.lambda2 = 5.0;
    let ck = dir.path().join(train::checkpoint_name(2));
    assert!(train::train(&cfg, &data, &TrainOptions { resume: Some(ck), stop_at: None }).is_err());
}
