//! Embedding dissimilarity, triplet losses and the violation metric.
//!
//! A triplet `(anchor, near, far)` asserts the anchor is at least as similar
//! to `near` as to `far`. Losses are functions of the pre-clip argument
//! `|h_a - h_n|^2 - |h_a - h_f|^2`, which is negative for satisfied triplets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Triplet;

/// Lower and upper breakpoints of the two-sided linear clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct ClipBounds {
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawBounds> for ClipBounds {
    type Error = Error;

    fn try_from(raw: RawBounds) -> Result<Self> {
        ClipBounds::new(raw.lower, raw.upper)
    }
}

impl ClipBounds {
    /// `[-0.01, 0.1]`, used for every experiment.
    pub const DEFAULT: ClipBounds = ClipBounds {
        lower: -0.01,
        upper: 0.1,
    };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::config(format!(
                "clip bounds need finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Default offset for the hinge loss.
pub const DEFAULT_HINGE_MARGIN: f64 = 0.01;

/// A point in embedding space with finite coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("embedding has non-finite coordinates"));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn sq_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "cannot compare embeddings of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Piecewise-linear map onto `[0, 1]`: 0 below `lower`, 1 above `upper`.
pub fn clip(x: f64, bounds: &ClipBounds) -> f64 {
    if x < bounds.lower {
        0.0
    } else if x > bounds.upper {
        1.0
    } else {
        (x - bounds.lower) / bounds.width()
    }
}

/// Pre-clip argument `d(a, n) - d(a, f)`.
pub fn triplet_margin(anchor: &[f64], near: &[f64], far: &[f64]) -> Result<f64> {
    Ok(sq_euclidean(anchor, near)? - sq_euclidean(anchor, far)?)
}

pub fn clipped_triplet_loss(anchor: &[f64], near: &[f64], far: &[f64], bounds: &ClipBounds) -> Result<f64> {
    Ok(clip(triplet_margin(anchor, near, far)?, bounds))
}

pub fn hinge_triplet_loss(anchor: &[f64], near: &[f64], far: &[f64], margin: f64) -> Result<f64> {
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::usage(format!("hinge margin must be non-negative, got {margin}")));
    }
    Ok((triplet_margin(anchor, near, far)? + margin).max(0.0))
}

/// Gradients of a triplet loss with respect to the anchor, near and far embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletGrads {
    pub anchor: Vec<f64>,
    pub near: Vec<f64>,
    pub far: Vec<f64>,
}

impl TripletGrads {
    fn zeros(dim: usize) -> Self {
        Self {
            anchor: vec![0.0; dim],
            near: vec![0.0; dim],
            far: vec![0.0; dim],
        }
    }

    /// Gradient of the pre-clip margin scaled by `slope`.
    fn of_margin(anchor: &[f64], near: &[f64], far: &[f64], slope: f64) -> Self {
        let mut g = Self::zeros(anchor.len());
        for i in 0..anchor.len() {
            g.anchor[i] = 2.0 * (far[i] - near[i]) * slope;
            g.near[i] = 2.0 * (near[i] - anchor[i]) * slope;
            g.far[i] = -2.0 * (far[i] - anchor[i]) * slope;
        }
        g
    }

    pub fn is_zero(&self) -> bool {
        self.anchor.iter().chain(&self.near).chain(&self.far).all(|&v| v == 0.0)
    }

    pub fn into_array(self) -> [Vec<f64>; 3] {
        [self.anchor, self.near, self.far]
    }
}

/// Analytic gradient of [`clipped_triplet_loss`]. Zero on both flat sides and
/// at the breakpoints themselves.
pub fn loss_grad(anchor: &[f64], near: &[f64], far: &[f64], bounds: &ClipBounds) -> Result<TripletGrads> {
    let x = triplet_margin(anchor, near, far)?;
    if x <= bounds.lower || x >= bounds.upper {
        return Ok(TripletGrads::zeros(anchor.len()));
    }
    Ok(TripletGrads::of_margin(anchor, near, far, 1.0 / bounds.width()))
}

/// Gradient of [`hinge_triplet_loss`]; zero where the hinge is inactive or at its kink.
pub fn hinge_grad(anchor: &[f64], near: &[f64], far: &[f64], margin: f64) -> Result<TripletGrads> {
    let x = triplet_margin(anchor, near, far)? + margin;
    if x <= 0.0 {
        return Ok(TripletGrads::zeros(anchor.len()));
    }
    Ok(TripletGrads::of_margin(anchor, near, far, 1.0))
}

/// True when the anchor is strictly closer to `far` than to `near`. Ties count
/// as satisfied.
pub fn is_violated(anchor: &[f64], near: &[f64], far: &[f64]) -> Result<bool> {
    Ok(sq_euclidean(anchor, near)? > sq_euclidean(anchor, far)?)
}

/// Percentage of `triplets` violated by `embeddings` (indexed by image).
pub fn violation_rate<E: AsRef<[f64]>>(embeddings: &[E], triplets: &[Triplet]) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::usage("violation rate of an empty triplet list"));
    }
    let n = embeddings.len();
    let mut violated = 0usize;
    for t in triplets {
        if t.anchor >= n || t.near >= n || t.far >= n {
            return Err(Error::usage(format!(
                "triplet {t:?} refers past the {n} available embeddings"
            )));
        }
        if is_violated(embeddings[t.anchor].as_ref(), embeddings[t.near].as_ref(), embeddings[t.far].as_ref())? {
            violated += 1;
        }
    }
    Ok(100.0 * violated as f64 / triplets.len() as f64)
}
