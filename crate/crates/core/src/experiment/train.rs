use std::collections::BTreeMap;

use serde::Serialize;

use super::{LossKind, SamplerKind, TrainConfig};
use crate::data::{scores_of, LabeledImage};
use crate::error::{Error, Result};
use crate::loss::{self, ClipBounds, TripletGrads};
use crate::nn::{adam_step, Gradients, NetworkParams};
use crate::rng::{self, StreamRng};
use crate::sampling::{self, ExtentScore, Triplet};

/// Patience-based stopping on a metric where lower is better.
///
/// Only a strict improvement of the best value so far resets the count.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if value >= best => {}
            _ => {
                self.best = Some((epoch, value));
                return StopDecision::Improved;
            }
        }
        let (best_epoch, _) = self.best.unwrap();
        if epoch - best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// `(epoch, value)` of the best observation.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_violations: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Weights from the epoch with the lowest validation violations.
    pub best_params: NetworkParams,
    pub best_epoch: usize,
    pub epochs_used: usize,
    pub val_violations: f64,
    pub history: Vec<EpochRecord>,
}

/// Freshly initialized weights for a run, as used before its first epoch.
pub fn initial_params(config: &TrainConfig) -> Result<NetworkParams> {
    NetworkParams::init(&config.model, rng::derive_named(config.seed, "init"))
}

/// Trains one model and selects the epoch with the lowest validation
/// violation rate on a fixed, seeded validation triplet set.
pub fn train(config: &TrainConfig, train_images: &[LabeledImage], val_images: &[LabeledImage]) -> Result<RunResult> {
    if val_images.is_empty() {
        return Err(Error::config("validation set is empty"));
    }
    let validator = Validator::new(config, val_images)?;
    train_with_validator(config, train_images, |params| validator.violations(params))
}

/// Validation embeds every image once and scores a fixed triplet set.
pub(crate) struct Validator<'a> {
    images: &'a [LabeledImage],
    triplets: Vec<Triplet>,
}

impl<'a> Validator<'a> {
    pub(crate) fn new(config: &TrainConfig, images: &'a [LabeledImage]) -> Result<Self> {
        let labels = scores_of(images);
        let mut rng = rng::stream(rng::derive_named(config.seed, "validation"));
        let triplets = sampling::sample_mixed(&labels, config.validation_triplets, &mut rng)
            .map_err(|e| Error::config(format!("cannot build validation triplets: {e}")))?;
        Ok(Self { images, triplets })
    }

    pub(crate) fn violations(&self, params: &NetworkParams) -> Result<f64> {
        let embeddings = self
            .images
            .iter()
            .map(|im| params.embed(&im.pixels))
            .collect::<Result<Vec<_>>>()?;
        loss::violation_rate(&embeddings, &self.triplets)
    }
}

/// The training loop with an arbitrary validation metric (lower is better),
/// evaluated after every epoch.
pub fn train_with_validator<V>(config: &TrainConfig, train_images: &[LabeledImage], mut validate: V) -> Result<RunResult>
where
    V: FnMut(&NetworkParams) -> Result<f64>,
{
    config.validate()?;
    if train_images.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let labels = scores_of(train_images);
    check_sampler(config.sampler, &labels)?;
    let mut params = initial_params(config)?;
    let mut rng = rng::stream(rng::derive_named(config.seed, "triplets"));
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        let triplets = (0..config.triplets_per_epoch)
            .map(|_| draw(config.sampler, &labels, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mut loss_sum = 0.0;
        for batch in triplets.chunks(config.batch_size) {
            loss_sum += train_step(&mut params, config, train_images, batch)?;
        }
        let train_loss = loss_sum / triplets.len() as f64;
        let val_violations = validate(&params)?;
        if !val_violations.is_finite() {
            return Err(Error::Training(format!("validation metric is {val_violations} at epoch {epoch}")));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_violations,
        });
        match stopper.observe(epoch, val_violations) {
            StopDecision::Improved => best_params = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let (best_epoch, val_violations) = stopper.best().expect("at least one epoch ran");
    Ok(RunResult {
        best_params,
        best_epoch,
        epochs_used: history.len(),
        val_violations,
        history,
    })
}

fn check_sampler(sampler: SamplerKind, labels: &[ExtentScore]) -> Result<()> {
    let feasible = match sampler {
        SamplerKind::Uniform if labels.len() < 3 => Err(Error::usage("uniform sampling needs 3 images")),
        SamplerKind::Uniform => Ok(()),
        SamplerKind::Extent => sampling::check_extent_feasible(labels),
    };
    feasible.map_err(|e| Error::config(format!("{sampler:?} sampler is infeasible on the training labels: {e}")))
}

fn draw(sampler: SamplerKind, labels: &[ExtentScore], rng: &mut StreamRng) -> Result<Triplet> {
    let t = match sampler {
        SamplerKind::Uniform => sampling::sample_uniform(labels, rng),
        SamplerKind::Extent => sampling::sample_extent(labels, rng),
    };
    t.map_err(|e| Error::config(format!("triplet sampling failed: {e}")))
}

/// One Adam step on the mean loss of `batch`. Returns the summed loss.
///
/// Each distinct image is forwarded once; gradients reaching its embedding
/// from every triplet it appears in are summed before a single backward pass.
fn train_step(
    params: &mut NetworkParams,
    config: &TrainConfig,
    images: &[LabeledImage],
    batch: &[Triplet],
) -> Result<f64> {
    let mut caches = BTreeMap::new();
    for t in batch {
        for i in t.indices() {
            if let std::collections::btree_map::Entry::Vacant(slot) = caches.entry(i) {
                slot.insert(params.forward(&images[i].pixels)?);
            }
        }
    }
    let dim = config.model.embed_dim;
    let mut upstream: BTreeMap<usize, Vec<f64>> = caches.keys().map(|&i| (i, vec![0.0; dim])).collect();
    let mut loss_sum = 0.0;
    for t in batch {
        let [a, n, f] = t.indices().map(|i| caches[&i].embedding());
        let (value, grads) = triplet_loss_and_grad(&config.loss, a, n, f)?;
        if !value.is_finite() {
            return Err(Error::Training(format!("non-finite loss on triplet {t:?}")));
        }
        loss_sum += value;
        for (i, g) in t.indices().into_iter().zip(grads.into_array()) {
            for (acc, v) in upstream.get_mut(&i).unwrap().iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(params);
    for (i, cache) in &caches {
        let g: Vec<f64> = upstream[i].iter().map(|v| v * scale).collect();
        params.backward(cache, &g, &mut grads)?;
    }
    if !grads.all_finite() {
        return Err(Error::Training("non-finite gradient".into()));
    }
    adam_step(params, &grads, &config.adam)?;
    Ok(loss_sum)
}

fn triplet_loss_and_grad(kind: &LossKind, a: &[f64], n: &[f64], f: &[f64]) -> Result<(f64, TripletGrads)> {
    match *kind {
        LossKind::Clipped { lower, upper } => {
            let bounds = ClipBounds::new(lower, upper)?;
            Ok((loss::clipped_triplet_loss(a, n, f, &bounds)?, loss::loss_grad(a, n, f, &bounds)?))
        }
        LossKind::Hinge { margin } => Ok((
            loss::hinge_triplet_loss(a, n, f, margin)?,
            loss::hinge_grad(a, n, f, margin)?,
        )),
    }
}
