use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvalReport};
use super::train::{initial_params, train, RunResult, Validator};
use super::TrainConfig;
use crate::data::{split::resplit_train_group, Dataset};
use crate::error::{Error, Result};
use crate::rng;

/// Repeated training runs on fresh train/validation splits of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_test_triplets")]
    pub test_triplets: usize,
    /// Worker threads for runs in parallel; results do not depend on it.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_runs() -> usize {
    10
}
fn default_test_triplets() -> usize {
    5000
}
fn default_jobs() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            n_runs: default_runs(),
            test_triplets: default_test_triplets(),
            jobs: default_jobs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.n_runs == 0 || self.test_triplets == 0 || self.jobs == 0 {
            return Err(Error::config("n_runs, test_triplets and jobs must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub result: RunResult,
    pub untrained_val_violations: f64,
    pub test: EvalReport,
    pub untrained_test: EvalReport,
}

#[derive(Clone, Debug)]
pub enum RunOutcome {
    Completed(Box<RunRecord>),
    Failed { run: usize, seed: u64, error: String },
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: TrainConfig,
    pub runs: Vec<RunOutcome>,
}

impl ExperimentResult {
    pub fn completed(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter_map(|r| match r {
            RunOutcome::Completed(r) => Some(r.as_ref()),
            RunOutcome::Failed { .. } => None,
        })
    }

    /// Completed run with the lowest validation violations (earliest on ties).
    pub fn best_run(&self) -> Option<&RunRecord> {
        self.completed()
            .fold(None, |best: Option<&RunRecord>, r| match best {
                Some(b) if b.result.val_violations <= r.result.val_violations => Some(b),
                _ => Some(r),
            })
    }
}

/// Runs `n_runs` independent trainings. Run `r` uses seed
/// `derive_seed(train.seed, r)` for its split, initialization and sampling;
/// all runs share the test set and the test triplets.
///
/// A run that fails with a training error is recorded and excluded from the
/// aggregates; configuration errors abort the experiment.
pub fn run_experiment(config: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentResult> {
    config.validate()?;
    let (h, w) = dataset.image_dims();
    let model = &config.train.model;
    if (model.input_height, model.input_width) != (h, w) {
        return Err(Error::config(format!(
            "model expects {}x{} images, dataset has {h}x{w}",
            model.input_height, model.input_width
        )));
    }
    let group = dataset.split.train_group();
    let test = dataset.test_images()?;
    let one = |run: usize| -> Result<RunOutcome> {
        let seed = rng::derive_seed(config.train.seed, run as u64);
        let (train_ids, val_ids) = resplit_train_group(&group, rng::derive_named(seed, "split"))?;
        let train_images = dataset.select(&train_ids)?;
        let val_images = dataset.select(&val_ids)?;
        let train_config = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let eval_seed = rng::derive_named(config.train.seed, "test");
        let untrained = initial_params(&train_config)?;
        let untrained_val_violations = Validator::new(&train_config, &val_images)?.violations(&untrained)?;
        let untrained_test = evaluate(&untrained, &test, config.test_triplets, eval_seed)?;
        match train(&train_config, &train_images, &val_images) {
            Ok(result) => {
                let test = evaluate(&result.best_params, &test, config.test_triplets, eval_seed)?;
                Ok(RunOutcome::Completed(Box::new(RunRecord {
                    run,
                    seed,
                    result,
                    untrained_val_violations,
                    test,
                    untrained_test,
                })))
            }
            Err(Error::Training(msg)) => Ok(RunOutcome::Failed { run, seed, error: msg }),
            Err(e) => Err(e),
        }
    };
    let runs = if config.jobs == 1 {
        (0..config.n_runs).map(one).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::config(format!("cannot start {} workers: {e}", config.jobs)))?;
        pool.install(|| (0..config.n_runs).into_par_iter().map(one).collect::<Result<Vec<_>>>())?
    };
    Ok(ExperimentResult {
        config: config.train.clone(),
        runs,
    })
}
