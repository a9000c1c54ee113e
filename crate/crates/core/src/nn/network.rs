use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{
    conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, global_avg_pool,
    global_avg_pool_backward, maxpool2x2_backward, maxpool2x2_forward, relu_inplace,
};
use super::{AdamState, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable weights of the embedding network together with optimizer state.
///
/// Tensors are kept in a flat list, `[kernel_0, bias_0, ..., kernel_{L-1},
/// bias_{L-1}, dense_weights, dense_bias]`. [`Gradients`] and the Adam
/// moments use the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    config: ModelConfig,
    pub(crate) tensors: Vec<Tensor>,
    pub adam: AdamState,
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for shape in param_shapes(config) {
            let t = if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                let (fan_in, fan_out) = fans(&shape);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(&shape, |_| rng.gen_range(-limit..limit))
            };
            tensors.push(t);
        }
        Self::from_tensors(*config, tensors)
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = param_shapes(config).iter().map(|s| Tensor::zeros(s)).collect();
        Self::from_tensors(*config, tensors)
    }

    /// Wraps existing tensors, checking them against the architecture.
    /// Optimizer state starts fresh.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != tensors.len() {
            return Err(Error::config(format!(
                "{} needs {} parameter tensors, got {}",
                config.label(),
                expected.len(),
                tensors.len()
            )));
        }
        for (i, (shape, t)) in expected.iter().zip(&tensors).enumerate() {
            if t.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter {i} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let adam = AdamState::for_tensors(&tensors);
        Ok(Self {
            config,
            tensors,
            adam,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn conv_kernel(&self, layer: usize) -> &Tensor {
        &self.tensors[2 * layer]
    }

    pub fn conv_bias(&self, layer: usize) -> &Tensor {
        &self.tensors[2 * layer + 1]
    }

    pub fn dense_weights(&self) -> &Tensor {
        &self.tensors[2 * self.config.num_layers]
    }

    pub fn dense_bias(&self) -> &Tensor {
        &self.tensors[2 * self.config.num_layers + 1]
    }

    /// Maps one image to its embedding.
    pub fn embed(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.embedding)
    }

    /// Forward pass that keeps everything the backward pass needs.
    pub fn forward(&self, image: &Tensor) -> Result<ForwardCache> {
        let (h, w, c) = image.hwc()?;
        if (h, w, c) != (self.config.input_height, self.config.input_width, 1) {
            return Err(Error::config(format!(
                "image is {h}x{w}x{c}, network expects {}x{}x1",
                self.config.input_height, self.config.input_width
            )));
        }
        let mut layers = Vec::with_capacity(self.config.num_layers);
        let mut current = image.clone();
        for layer in 0..self.config.num_layers {
            let mut pre = conv3x3_forward(&current, self.conv_kernel(layer), self.conv_bias(layer).data())?;
            let activation_mask = pre.data().iter().map(|&v| v > 0.0).collect();
            relu_inplace(&mut pre);
            let pooled = maxpool2x2_forward(&pre)?;
            layers.push(LayerCache {
                input: current,
                activated_shape: pre.shape().to_vec(),
                activation_mask,
                argmax: pooled.argmax,
            });
            current = pooled.output;
        }
        let features = global_avg_pool(&current)?;
        let embedding = dense_forward(&features, self.dense_weights(), self.dense_bias().data())?;
        Ok(ForwardCache {
            layers,
            pooled_shape: current.shape().to_vec(),
            features,
            embedding,
            num_params: self.tensors.len(),
        })
    }

    /// Reverse pass for one image, adding its contribution to `grads`.
    pub fn backward(&self, cache: &ForwardCache, grad_embedding: &[f64], grads: &mut Gradients) -> Result<()> {
        if cache.num_params != self.tensors.len() || cache.layers.len() != self.config.num_layers {
            return Err(Error::usage("forward cache was produced by a different network"));
        }
        if grad_embedding.len() != self.config.embed_dim {
            return Err(Error::usage(format!(
                "embedding gradient has length {}, expected {}",
                grad_embedding.len(),
                self.config.embed_dim
            )));
        }
        if grad_embedding.iter().all(|&g| g == 0.0) {
            return Ok(());
        }
        let n = self.config.num_layers;
        let (gw, gb) = grads.pair_mut(2 * n);
        let grad_features = dense_backward(&cache.features, self.dense_weights(), grad_embedding, gw, gb)?;
        let mut grad = global_avg_pool_backward(&grad_features, &cache.pooled_shape)?;
        for layer in (0..n).rev() {
            let lc = &cache.layers[layer];
            let mut grad_act = maxpool2x2_backward(&grad, &lc.argmax, &lc.activated_shape)?;
            for (g, &active) in grad_act.data_mut().iter_mut().zip(&lc.activation_mask) {
                if !active {
                    *g = 0.0;
                }
            }
            let mut grad_input = (layer > 0).then(|| Tensor::zeros(lc.input.shape()));
            let (gk, gb) = grads.pair_mut(2 * layer);
            conv3x3_backward(
                &lc.input,
                self.conv_kernel(layer),
                &grad_act,
                gk,
                gb,
                grad_input.as_mut().map(|t| t.data_mut()),
            )?;
            if let Some(gi) = grad_input {
                grad = gi;
            }
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.scale(factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    fn pair_mut(&mut self, first: usize) -> (&mut [f64], &mut [f64]) {
        let (a, b) = self.tensors[first..].split_at_mut(1);
        (a[0].data_mut(), b[0].data_mut())
    }
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Tensor,
    activated_shape: Vec<usize>,
    activation_mask: Vec<bool>,
    argmax: Vec<usize>,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    pooled_shape: Vec<usize>,
    features: Vec<f64>,
    embedding: Vec<f64>,
    num_params: usize,
}

impl ForwardCache {
    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    /// True when both passes took the same ReLU and max-pool branches, i.e.
    /// the network is the same smooth function of its parameters around both.
    pub fn same_regime(&self, other: &ForwardCache) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.activation_mask == b.activation_mask && a.argmax == b.argmax
            })
    }
}

/// Parameter gradients of a triplet loss from the three branch caches and the
/// loss gradient at each branch's embedding. The branches share parameters so
/// their contributions are summed.
pub fn backward_triplet(
    params: &NetworkParams,
    caches: &[ForwardCache],
    loss_grads: &[Vec<f64>],
) -> Result<Gradients> {
    if caches.len() != 3 {
        return Err(Error::usage(format!(
            "triplet backward needs 3 forward caches, got {}",
            caches.len()
        )));
    }
    if loss_grads.len() != 3 {
        return Err(Error::usage(format!(
            "triplet backward needs 3 embedding gradients, got {}",
            loss_grads.len()
        )));
    }
    let mut grads = Gradients::zeros_like(params);
    for (cache, g) in caches.iter().zip(loss_grads) {
        params.backward(cache, g, &mut grads)?;
    }
    Ok(grads)
}

pub(crate) fn param_shapes(config: &ModelConfig) -> Vec<Vec<usize>> {
    let mut shapes = Vec::with_capacity(2 * config.num_layers + 2);
    let mut channels = 1;
    for layer in 0..config.num_layers {
        let filters = config.filter_schedule.filters(layer);
        shapes.push(vec![3, 3, channels, filters]);
        shapes.push(vec![filters]);
        channels = filters;
    }
    shapes.push(vec![channels, config.embed_dim]);
    shapes.push(vec![config.embed_dim]);
    shapes
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [kh, kw, cin, cout] => (kh * kw * cin, kh * kw * cout),
        [cin, cout] => (*cin, *cout),
        _ => unreachable!("biases are zero-initialized"),
    }
}
