use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::runner::{ExperimentResult, RunOutcome};
use super::TrainConfig;
use crate::error::Result;
use crate::sampling::TestScheme;

/// Linear-interpolation quantile of `values` (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MedianIqr {
    pub median: f64,
    /// Interquartile range.
    pub iqr: f64,
    pub n: usize,
}

impl MedianIqr {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            median: median(values)?,
            iqr: quantile(values, 0.75)? - quantile(values, 0.25)?,
            n: values.len(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub epochs_used: usize,
    pub best_epoch: usize,
    pub val_violations: f64,
    pub untrained_val_violations: f64,
    pub test: BTreeMap<String, Option<f64>>,
    pub untrained_test: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailedRun {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

/// Aggregate of an experiment. Contains no timings, so identical inputs give
/// byte-identical JSON.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub model: String,
    pub config: TrainConfig,
    pub n_runs: usize,
    pub completed_runs: usize,
    pub failed_runs: Vec<FailedRun>,
    pub best_run: Option<usize>,
    pub epochs: Option<MedianIqr>,
    pub val_violations: Option<MedianIqr>,
    pub untrained_val_violations: Option<MedianIqr>,
    /// Per scheme; `None` when no completed run could sample the scheme.
    pub test: BTreeMap<String, Option<MedianIqr>>,
    pub untrained_test: BTreeMap<String, Option<MedianIqr>>,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    pub fn from_result(result: &ExperimentResult) -> Self {
        let mut runs = Vec::new();
        let mut failed_runs = Vec::new();
        for outcome in &result.runs {
            match outcome {
                RunOutcome::Completed(r) => runs.push(RunSummary {
                    run: r.run,
                    seed: r.seed,
                    epochs_used: r.result.epochs_used,
                    best_epoch: r.result.best_epoch,
                    val_violations: r.result.val_violations,
                    untrained_val_violations: r.untrained_val_violations,
                    test: by_scheme(|s| r.test.get(s)),
                    untrained_test: by_scheme(|s| r.untrained_test.get(s)),
                }),
                RunOutcome::Failed { run, seed, error } => failed_runs.push(FailedRun {
                    run: *run,
                    seed: *seed,
                    error: error.clone(),
                }),
            }
        }
        let stat = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
            let values: Vec<f64> = runs.iter().filter_map(f).collect();
            MedianIqr::of(&values)
        };
        Self {
            model: result.config.model.label(),
            config: result.config.clone(),
            n_runs: result.runs.len(),
            completed_runs: runs.len(),
            best_run: result.best_run().map(|r| r.run),
            epochs: stat(&|r| Some(r.epochs_used as f64)),
            val_violations: stat(&|r| Some(r.val_violations)),
            untrained_val_violations: stat(&|r| Some(r.untrained_val_violations)),
            test: by_scheme(|s| stat(&|r| r.test[s.name()])),
            untrained_test: by_scheme(|s| stat(&|r| r.untrained_test[s.name()])),
            failed_runs,
            runs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn by_scheme<T>(f: impl Fn(TestScheme) -> T) -> BTreeMap<String, T> {
    TestScheme::ALL.iter().map(|&s| (s.name().to_string(), f(s))).collect()
}

/// `scheme,run,violations`, one row per completed run and available scheme.
pub fn write_violations_csv<W: Write>(out: W, result: &ExperimentResult, trained: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "run", "violations"])?;
    for &scheme in &TestScheme::ALL {
        for r in result.completed() {
            let report = if trained { &r.test } else { &r.untrained_test };
            if let Some(v) = report.get(scheme) {
                w.write_record([scheme.name().to_string(), r.run.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `run,epoch,train_loss,val_violations`.
pub fn write_history_csv<W: Write>(out: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "epoch", "train_loss", "val_violations"])?;
    for r in result.completed() {
        for e in &r.result.history {
            w.write_record([
                r.run.to_string(),
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_violations.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
