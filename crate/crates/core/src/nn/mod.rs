//! Convolutional embedding network: kernels, parameters, reverse-mode
//! gradients, the Adam optimizer and the weights file format.

pub mod adam;
pub mod kernels;
pub mod network;
pub mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{backward_triplet, ForwardCache, Gradients, NetworkParams};

/// Filter counts of the increasing schedule, one per layer.
pub const INCREASING_FILTERS: [usize; 5] = [8, 16, 32, 64, 128];
pub const DEFAULT_FIXED_FILTERS: usize = 16;
pub const MAX_LAYERS: usize = INCREASING_FILTERS.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterSchedule {
    /// The same number of filters in every layer.
    Fixed(usize),
    /// 8, 16, 32, 64, 128.
    Increasing,
}

impl FilterSchedule {
    pub fn filters(&self, layer: usize) -> usize {
        match *self {
            FilterSchedule::Fixed(n) => n,
            FilterSchedule::Increasing => INCREASING_FILTERS[layer],
        }
    }

    fn tag(&self) -> char {
        match self {
            FilterSchedule::Fixed(_) => 'F',
            FilterSchedule::Increasing => 'I',
        }
    }
}

impl Default for FilterSchedule {
    fn default() -> Self {
        FilterSchedule::Fixed(DEFAULT_FIXED_FILTERS)
    }
}

/// Architecture of the embedding network: `num_layers` blocks of
/// zero-padded 3x3 conv, ReLU and 2x2 max pool, then global average pooling
/// and a dense head producing `embed_dim` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub filter_schedule: FilterSchedule,
    pub num_layers: usize,
    pub embed_dim: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl ModelConfig {
    pub fn new(
        filter_schedule: FilterSchedule,
        num_layers: usize,
        embed_dim: usize,
        input_height: usize,
        input_width: usize,
    ) -> Result<Self> {
        let config = Self {
            filter_schedule,
            num_layers,
            embed_dim,
            input_height,
            input_width,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=MAX_LAYERS).contains(&self.num_layers) {
            return Err(Error::config(format!(
                "num_layers must be 3, 4 or 5, got {}",
                self.num_layers
            )));
        }
        if let FilterSchedule::Fixed(0) = self.filter_schedule {
            return Err(Error::config("fixed filter count must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim must be positive"));
        }
        let (mut h, mut w) = (self.input_height, self.input_width);
        for layer in 0..self.num_layers {
            if h < 2 || w < 2 {
                return Err(Error::config(format!(
                    "input {}x{} is too small: layer {} would pool a {h}x{w} map",
                    self.input_height,
                    self.input_width,
                    layer + 1
                )));
            }
            h /= 2;
            w /= 2;
        }
        Ok(())
    }

    /// Spatial size and channel count entering each layer, followed by the
    /// shape of the last pooled map.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w, mut c) = (self.input_height, self.input_width, 1);
        let mut shapes = vec![(h, w, c)];
        for layer in 0..self.num_layers {
            h /= 2;
            w /= 2;
            c = self.filter_schedule.filters(layer);
            shapes.push((h, w, c));
        }
        shapes
    }

    pub fn last_filters(&self) -> usize {
        self.filter_schedule.filters(self.num_layers - 1)
    }

    /// Short model label such as `F4` or `I3`.
    pub fn label(&self) -> String {
        format!("{}{}", self.filter_schedule.tag(), self.num_layers)
    }
}
