//! Finite-difference verification of the network's analytic gradients.
//!
//! Each trial builds a random network and a random image triplet, then
//! compares the backpropagated gradient of the clipped triplet loss with
//! central differences at sampled parameter coordinates. The dense head is
//! rescaled so the pre-clip argument sits mid-way between the clip bounds,
//! where the loss has a non-zero slope. Coordinates whose perturbation comes
//! within ten steps of a ReLU, max-pool or clip breakpoint are skipped and
//! replaced by fresh draws.

use std::collections::HashSet;

use rand::Rng;
use serde::Serialize;

use crate::data::synthetic::{synthesize, SyntheticConfig};
use crate::error::{Error, Result};
use crate::loss::{clipped_triplet_loss, loss_grad, triplet_margin, ClipBounds};
use crate::nn::{backward_triplet, FilterSchedule, ForwardCache, ModelConfig, NetworkParams};
use crate::rng;
use crate::sampling::ExtentScore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub trials: usize,
    pub coords_per_trial: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Fraction of checked coordinates that must pass.
    pub required_pass_rate: f64,
    pub image_height: usize,
    pub image_width: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 10,
            coords_per_trial: 100,
            step: 1e-5,
            tolerance: 1e-3,
            required_pass_rate: 0.99,
            image_height: 32,
            image_width: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub trial: usize,
    pub model: String,
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    pub skipped_near_kink: usize,
    pub worst: Option<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn pass_rate(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }
}

/// Gradient magnitudes below this are at the roundoff level of a central
/// difference with step `1e-5` and are compared on an absolute scale.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// Largest dense-head rescale accepted when setting up a trial; larger ones
/// mean the three embeddings nearly coincide and roundoff dominates.
const MAX_RESCALE: f64 = 30.0;

/// `|a - n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Architecture used by trial `t`: schedules alternate and depth cycles 3, 4, 5.
pub fn trial_model(config: &GradCheckConfig, trial: usize) -> Result<ModelConfig> {
    let schedule = if trial.is_multiple_of(2) {
        FilterSchedule::Fixed(6)
    } else {
        FilterSchedule::Increasing
    };
    ModelConfig::new(schedule, 3 + trial % 3, 2, config.image_height, config.image_width)
}

pub fn run_grad_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    if config.trials == 0 || config.coords_per_trial == 0 {
        return Err(Error::usage("gradient check needs at least one trial and coordinate"));
    }
    if config.step.is_nan() || config.step <= 0.0 {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let mut report = GradCheckReport {
        checked: 0,
        passed: 0,
        skipped_near_kink: 0,
        worst: None,
    };
    for trial in 0..config.trials {
        run_trial(config, trial, &mut report)?;
    }
    Ok(report)
}

struct TripletProblem {
    params: NetworkParams,
    images: [Tensor; 3],
    bounds: ClipBounds,
}

impl TripletProblem {
    fn caches(&self, params: &NetworkParams) -> Result<Vec<ForwardCache>> {
        self.images.iter().map(|im| params.forward(im)).collect()
    }

    fn margin(caches: &[ForwardCache]) -> Result<f64> {
        triplet_margin(caches[0].embedding(), caches[1].embedding(), caches[2].embedding())
    }

    fn loss(&self, caches: &[ForwardCache]) -> Result<f64> {
        clipped_triplet_loss(caches[0].embedding(), caches[1].embedding(), caches[2].embedding(), &self.bounds)
    }
}

fn build_problem(config: &GradCheckConfig, trial: usize) -> Result<TripletProblem> {
    let model = trial_model(config, trial)?;
    let trial_seed = rng::derive_seed(config.seed, trial as u64);
    let bounds = ClipBounds::DEFAULT;
    for attempt in 0..20u64 {
        let seed = rng::derive_seed(trial_seed, attempt);
        let mut params = NetworkParams::init(&model, seed)?;
        // Random biases so that no unit sits exactly at a ReLU breakpoint.
        let mut r = rng::stream(rng::derive_named(seed, "bias"));
        for t in params.tensors_mut().iter_mut().filter(|t| t.rank() == 1) {
            t.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.05..0.05));
        }
        let scores = rand::seq::index::sample(&mut r, ExtentScore::COUNT, 3);
        let images = (0..3)
            .map(|i| {
                let score = ExtentScore::new(scores.index(i) as u8).expect("index below COUNT");
                let cfg = SyntheticConfig::default();
                synthesize(format!("g{i}"), score, config.image_height, config.image_width, &cfg, &mut r)
                    .map(|s| s.image.pixels)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut images: [Tensor; 3] = images.try_into().expect("three images");
        let mut problem = TripletProblem { params, images: images.clone(), bounds };
        let margin = TripletProblem::margin(&problem.caches(&problem.params)?)?;
        if margin.abs() < 1e-9 || !margin.is_finite() {
            continue;
        }
        if margin < 0.0 {
            images.swap(1, 2);
            problem.images = images;
        }
        // The dense bias cancels in the margin, so scaling the dense weights
        // by s scales the margin by s^2.
        let target = 0.5 * (bounds.lower() + bounds.upper());
        let scale = (target / margin.abs()).sqrt();
        if scale > MAX_RESCALE {
            continue;
        }
        let dense = problem.params.tensors().len() - 2;
        problem.params.tensors_mut()[dense].scale(scale);
        // Shift the bias so the anchor embeds near the origin; large common
        // offsets only add roundoff to the squared distances.
        let anchor = problem.params.embed(&problem.images[0])?;
        for (b, a) in problem.params.tensors_mut()[dense + 1].data_mut().iter_mut().zip(anchor) {
            *b -= a;
        }
        let m = TripletProblem::margin(&problem.caches(&problem.params)?)?;
        if m > bounds.lower() + 0.01 && m < bounds.upper() - 0.01 {
            return Ok(problem);
        }
    }
    Err(Error::usage(format!("could not build a well-conditioned problem for trial {trial}")))
}

fn run_trial(config: &GradCheckConfig, trial: usize, report: &mut GradCheckReport) -> Result<()> {
    let problem = build_problem(config, trial)?;
    let model_label = problem.params.config().label();
    let base = problem.caches(&problem.params)?;
    let grads_at = loss_grad(base[0].embedding(), base[1].embedding(), base[2].embedding(), &problem.bounds)?;
    let analytic = backward_triplet(&problem.params, &base, &grads_at.into_array())?;

    let mut r = rng::stream(rng::derive_named(rng::derive_seed(config.seed, trial as u64), "coords"));
    let h = config.step;
    let guard = 10.0 * h;
    let mut accepted = 0;
    let mut attempts = 0;
    let mut tried = HashSet::new();
    let total = problem.params.num_scalars();
    while accepted < config.coords_per_trial && attempts < 20 * config.coords_per_trial && tried.len() < total {
        attempts += 1;
        let tensor = r.gen_range(0..problem.params.tensors().len());
        let index = r.gen_range(0..problem.params.tensors()[tensor].len());
        if !tried.insert((tensor, index)) {
            continue;
        }
        let mut probe = problem.params.clone();
        let original = probe.tensors()[tensor].data()[index];
        let mut eval_at = |delta: f64| -> Result<Vec<ForwardCache>> {
            probe.tensors_mut()[tensor].data_mut()[index] = original + delta;
            problem.caches(&probe)
        };
        let far_lo = eval_at(-guard)?;
        let far_hi = eval_at(guard)?;
        let lo = eval_at(-h)?;
        let hi = eval_at(h)?;
        let smooth = [&far_lo, &far_hi, &lo, &hi].iter().all(|caches| {
            caches.iter().zip(&base).all(|(c, b)| c.same_regime(b))
        });
        let clip_clear = [&far_lo, &far_hi]
            .iter()
            .map(|c| TripletProblem::margin(c))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .all(|&m| m > problem.bounds.lower() + guard && m < problem.bounds.upper() - guard);
        if !(smooth && clip_clear) {
            report.skipped_near_kink += 1;
            continue;
        }
        accepted += 1;
        let numeric = (problem.loss(&hi)? - problem.loss(&lo)?) / (2.0 * h);
        let a = analytic.tensors()[tensor].data()[index];
        let rel = relative_error(a, numeric);
        report.checked += 1;
        if rel < config.tolerance {
            report.passed += 1;
        }
        if report.worst.as_ref().is_none_or(|w| rel > w.rel_error) {
            report.worst = Some(CoordinateCheck {
                trial,
                model: model_label.clone(),
                tensor,
                index,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GradCheckConfig {
        GradCheckConfig {
            trials: 2,
            coords_per_trial: 25,
            image_height: 16,
            image_width: 24,
            ..GradCheckConfig::default()
        }
    }

    #[test]
    fn relative_error_uses_floor_for_tiny_values() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(0.0, 1e-9) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_runs() {
        let cfg = GradCheckConfig { trials: 0, ..small() };
        assert!(matches!(run_grad_check(&cfg), Err(Error::Usage(_))));
        let cfg = GradCheckConfig { step: 0.0, ..small() };
        assert!(matches!(run_grad_check(&cfg), Err(Error::Usage(_))));
    }

    #[test]
    fn small_check_passes_and_is_reproducible() {
        let a = run_grad_check(&small()).unwrap();
        assert_eq!(a.checked, 50);
        assert!(a.pass_rate() >= 0.99, "{a:?}");
        assert_eq!(a, run_grad_check(&small()).unwrap());
    }

    #[test]
    fn trial_models_cycle() {
        let labels: Vec<String> = (0..6).map(|t| trial_model(&GradCheckConfig::default(), t).unwrap().label()).collect();
        assert_eq!(labels, ["F3", "I4", "F5", "I3", "F4", "I5"]);
    }
}
