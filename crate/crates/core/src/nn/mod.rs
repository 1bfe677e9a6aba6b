//! Small dense feed-forward network with exact backpropagation.
//!
//! Layers compute `y = act(W x + b)` with `W` stored row-major as `(out, in)`.
//! [`Mlp::backward`] returns gradients for every weight and bias and also for
//! the input vector, which the actor-critic update needs to differentiate the
//! critic with respect to its action inputs.
//!
//! All math is `f64`.

mod checkpoint;
mod sgd;

pub use checkpoint::{read_mlp, write_mlp, CheckpointError};
pub use sgd::{Sgd, SgdConfig};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    Domain(&'static str),
    #[error("forward cache does not belong to these parameters")]
    StaleCache,
    #[error("training diverged: non-finite {0}")]
    Divergence(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Linear,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(NnError::InvalidArchitecture(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One dense layer. `weights` is row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    /// Glorot-uniform bound `sqrt(6 / (in + out))`.
    pub fn glorot_bound(&self) -> f64 {
        (6.0 / (self.in_dim + self.out_dim) as f64).sqrt()
    }
}

/// Layered weight/bias parameters of a feed-forward network.
///
/// `generation` is bumped by every in-place update so caches produced by an
/// earlier parameter version are rejected by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Vec<f64>] {
        &self.post
    }
}

/// Per-layer weight and bias gradients plus the gradient w.r.t. the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &Mlp) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
            input: vec![0.0; params.input_dim()],
        }
    }

    pub fn fill_zero(&mut self) {
        self.weights.iter_mut().flatten().for_each(|g| *g = 0.0);
        self.biases.iter_mut().flatten().for_each(|g| *g = 0.0);
        self.input.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().flatten().for_each(|g| *g *= factor);
        self.biases.iter_mut().flatten().for_each(|g| *g *= factor);
        self.input.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.input
            .iter_mut()
            .zip(&other.input)
            .for_each(|(x, y)| *x += y);
    }

    /// L2 norm over weight and bias gradients (input gradient excluded).
    pub fn param_norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn params_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|g| g.is_finite())
    }

    fn shape_matches(&self, params: &Mlp) -> bool {
        self.weights.len() == params.layers.len()
            && self.biases.len() == params.layers.len()
            && params.layers.iter().enumerate().all(|(k, l)| {
                self.weights[k].len() == l.weights.len() && self.biases[k].len() == l.bias.len()
            })
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, seeded ChaCha8 stream.
    pub fn init(
        layer_sizes: &[usize],
        activations: &[Activation],
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(layer_sizes, activations, &mut rng)
    }

    pub fn init_with_rng<R: rand::Rng + ?Sized>(
        layer_sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::InvalidArchitecture(format!(
                "need at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(NnError::InvalidArchitecture(format!(
                "{} layer sizes need {} activations, got {}",
                layer_sizes.len(),
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(NnError::InvalidArchitecture(
                "layer sizes must be positive".into(),
            ));
        }
        let layers = layer_sizes
            .windows(2)
            .zip(activations)
            .map(|(dims, &act)| {
                let mut layer = Layer::zeros(dims[0], dims[1], act);
                let bound = layer.glorot_bound();
                let dist = Uniform::new_inclusive(-bound, bound);
                layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
                layer
            })
            .collect();
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    /// Builds a network from explicit layers, checking the dimension chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidArchitecture("no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {k} has a zero dimension"
                )));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {k} storage does not match {}x{}",
                    l.out_dim, l.in_dim
                )));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {k} out {} does not chain into layer {} in {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Copies parameters from `other` (hard target sync). Shapes must match.
    pub fn copy_from(&mut self, other: &Mlp) -> Result<(), NnError> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(NnError::InvalidArchitecture(
                "copy between different shapes".into(),
            ));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.bias.copy_from_slice(&src.bias);
            dst.activation = src.activation;
        }
        self.generation += 1;
        Ok(())
    }

    /// Polyak averaging: `self <- tau * other + (1 - tau) * self`.
    pub fn blend_from(&mut self, other: &Mlp, tau: f64) -> Result<(), NnError> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(NnError::InvalidArchitecture(
                "blend between different shapes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(NnError::Domain("tau must be in [0, 1]"));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d += tau * (s - *d);
            }
            for (d, s) in dst.bias.iter_mut().zip(&src.bias) {
                *d += tau * (s - *d);
            }
        }
        self.generation += 1;
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Domain("network input"));
        }
        Ok(())
    }

    /// Output only; no cache is kept.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            affine(layer, &current, &mut next);
            next.iter_mut()
                .for_each(|z| *z = layer.activation.apply(*z));
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        self.check_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().map(Vec::as_slice).unwrap_or(input);
            let mut z = Vec::new();
            affine(layer, x, &mut z);
            let y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(y);
        }
        let output = post.last().cloned().unwrap_or_default();
        Ok((
            output,
            ForwardCache {
                input: input.to_vec(),
                pre,
                post,
                generation: self.generation,
            },
        ))
    }

    /// Gradients of `output · output_grad` with respect to all parameters and the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<GradientSet, NnError> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_accumulate(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but adds into `grads` (the input gradient is overwritten).
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut GradientSet,
    ) -> Result<(), NnError> {
        if cache.generation != self.generation
            || cache.pre.len() != self.layers.len()
            || cache.input.len() != self.input_dim()
            || cache
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(z, l)| z.len() != l.out_dim)
        {
            return Err(NnError::StaleCache);
        }
        if output_grad.len() != self.output_dim() {
            return Err(NnError::Shape {
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if !grads.shape_matches(self) {
            return Err(NnError::InvalidArchitecture("gradient buffer shape".into()));
        }

        let mut upstream = output_grad.to_vec();
        let mut delta = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = if k == 0 {
                &cache.input
            } else {
                &cache.post[k - 1]
            };
            delta.clear();
            delta.extend(
                upstream
                    .iter()
                    .zip(&cache.pre[k])
                    .zip(&cache.post[k])
                    .map(|((&g, &z), &y)| g * layer.activation.derivative(z, y)),
            );
            let wg = &mut grads.weights[k];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let off = row * layer.in_dim;
                wg[off..off + layer.in_dim]
                    .iter_mut()
                    .zip(x)
                    .for_each(|(g, &xi)| *g += d * xi);
            }
            grads.biases[k]
                .iter_mut()
                .zip(&delta)
                .for_each(|(g, &d)| *g += d);

            upstream.clear();
            upstream.resize(layer.in_dim, 0.0);
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let off = row * layer.in_dim;
                upstream
                    .iter_mut()
                    .zip(&layer.weights[off..off + layer.in_dim])
                    .for_each(|(u, &w)| *u += w * d);
            }
        }
        grads.input.copy_from_slice(&upstream);
        Ok(())
    }

    /// Applies `params -= step` for a shape-congruent step. Used by the optimizer.
    pub(crate) fn apply_step(&mut self, step: &GradientSet, scale: f64) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            layer
                .weights
                .iter_mut()
                .zip(&step.weights[k])
                .for_each(|(w, s)| *w -= scale * s);
            layer
                .bias
                .iter_mut()
                .zip(&step.biases[k])
                .for_each(|(b, s)| *b -= scale * s);
        }
        self.generation += 1;
    }
}

#[inline]
fn affine(layer: &Layer, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        layer
            .weights
            .chunks_exact(layer.in_dim)
            .zip(&layer.bias)
            .map(|(row, &b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()),
    );
}
