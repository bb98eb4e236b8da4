use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, LayerSpec, Shape};
use crate::data::{ImageTensor, UserImageBundle};
use crate::error::{Error, Result};

/// Input shape plus the ordered layer list of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl Default for Architecture {
    /// Three conv/ReLU/pool stages over a 3x60x60 image and a 128-wide dense
    /// feature layer.
    fn default() -> Self {
        use LayerSpec::*;
        Architecture {
            input: Shape::new(3, 60, 60),
            layers: vec![
                Conv { kernel: 5, channels: 16, stride: 1 },
                Relu,
                MaxPool { window: 2 },
                Conv { kernel: 5, channels: 32, stride: 1 },
                Relu,
                MaxPool { window: 2 },
                Conv { kernel: 3, channels: 64, stride: 1 },
                Relu,
                MaxPool { window: 2 },
                Flatten,
                Dense { out_dim: 128 },
            ],
        }
    }
}

impl Architecture {
    /// Activation shapes before each layer and after the last.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.shapes()?.last().expect("non-empty").len())
    }
}

/// Weights of one convolutional encoder, one flat array per layer
/// (empty for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    arch: Architecture,
    shapes: Vec<Shape>,
    weights: Vec<Vec<f64>>,
}

/// Activations cached by a forward pass for the backward pass.
pub(crate) struct Trace {
    activations: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl EncoderParams {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        let shapes = arch.shapes()?;
        let weights = arch
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| vec![0.0; l.param_count(s)])
            .collect();
        Ok(EncoderParams {
            arch: arch.clone(),
            shapes,
            weights,
        })
    }

    /// Gaussian weights with standard deviation `std`, zero biases.
    pub fn init(arch: &Architecture, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for ((layer, shape), w) in p.arch.layers.iter().zip(&p.shapes).zip(&mut p.weights) {
            let n_weights = w.len().saturating_sub(bias_len(layer, *shape));
            for x in &mut w[..n_weights] {
                *x = normal.sample(rng);
            }
        }
        Ok(p)
    }

    pub fn from_weights(arch: &Architecture, weights: Vec<Vec<f64>>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if weights.len() != p.weights.len()
            || weights.iter().zip(&p.weights).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::DimensionMismatch(
                "weight arrays do not match the layer list".into(),
            ));
        }
        p.weights = weights;
        Ok(p)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn feature_dim(&self) -> usize {
        self.shapes.last().expect("non-empty").len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        let s = self.arch.input;
        if (img.channels(), img.height(), img.width()) != (s.channels, s.height, s.width) {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{}x{}, encoder expects {}x{}x{}",
                img.channels(),
                img.height(),
                img.width(),
                s.channels,
                s.height,
                s.width
            )));
        }
        Ok(())
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(img)?;
        let mut act = img.pixels().to_vec();
        let mut scratch = Vec::new();
        for (l, layer) in self.arch.layers.iter().enumerate() {
            act = layers::forward(
                layer,
                self.shapes[l],
                self.shapes[l + 1],
                &self.weights[l],
                &act,
                &mut scratch,
            );
        }
        Ok(act)
    }

    pub(crate) fn forward_trace(&self, img: &ImageTensor) -> Result<Trace> {
        self.check_input(img)?;
        let n = self.arch.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut argmax = vec![Vec::new(); n];
        activations.push(img.pixels().to_vec());
        for (l, layer) in self.arch.layers.iter().enumerate() {
            let out = layers::forward(
                layer,
                self.shapes[l],
                self.shapes[l + 1],
                &self.weights[l],
                &activations[l],
                &mut argmax[l],
            );
            activations.push(out);
        }
        Ok(Trace {
            activations,
            argmax,
        })
    }

    /// Features plus the piecewise-linear regime the image falls in: the sign
    /// of every ReLU input and the winner of every pooling window.
    pub(crate) fn forward_pattern(&self, img: &ImageTensor) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut trace = self.forward_trace(img)?;
        let mut pattern = Vec::new();
        for (l, layer) in self.arch.layers.iter().enumerate() {
            match layer {
                LayerSpec::Relu => {
                    pattern.extend(trace.activations[l].iter().map(|&x| usize::from(x > 0.0)))
                }
                LayerSpec::MaxPool { .. } => pattern.extend_from_slice(&trace.argmax[l]),
                _ => {}
            }
        }
        let features = trace.activations.pop().expect("non-empty");
        Ok((features, pattern))
    }

    /// Accumulates d(loss)/d(weights) given d(loss)/d(features).
    pub(crate) fn backward(&self, trace: &Trace, grad_features: &[f64], grads: &mut [Vec<f64>]) {
        let mut g = grad_features.to_vec();
        for l in (0..self.arch.layers.len()).rev() {
            g = layers::backward(
                &self.arch.layers[l],
                self.shapes[l],
                self.shapes[l + 1],
                &self.weights[l],
                &trace.activations[l],
                &trace.argmax[l],
                &g,
                &mut grads[l],
                l > 0,
            );
        }
    }
}

fn bias_len(layer: &LayerSpec, _input: Shape) -> usize {
    match *layer {
        LayerSpec::Conv { channels, .. } => channels,
        LayerSpec::Dense { out_dim } => out_dim,
        _ => 0,
    }
}

/// Linear map from `slots` concatenated feature blocks to a latent vector.
///
/// The user side uses one slot per bundle image; the item side has a single
/// slot and therefore no concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    slots: usize,
    feature_dim: usize,
    latent_dim: usize,
    /// Row-major `[latent_dim][slots * feature_dim]`, then `latent_dim` biases.
    weights: Vec<f64>,
}

impl Head {
    pub fn zeros(slots: usize, feature_dim: usize, latent_dim: usize) -> Result<Self> {
        if slots == 0 || feature_dim == 0 || latent_dim == 0 {
            return Err(Error::InvalidConfig("head dimensions must be positive".into()));
        }
        Ok(Head {
            slots,
            feature_dim,
            latent_dim,
            weights: vec![0.0; latent_dim * (slots * feature_dim + 1)],
        })
    }

    /// User-side head over `slots` concatenated encoder outputs.
    pub fn user(slots: usize, feature_dim: usize, latent_dim: usize) -> Result<Self> {
        Self::zeros(slots, feature_dim, latent_dim)
    }

    /// Item-side head over a single encoder output.
    pub fn item(feature_dim: usize, latent_dim: usize) -> Result<Self> {
        Self::zeros(1, feature_dim, latent_dim)
    }

    pub fn init(mut self, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let n = self.latent_dim * self.concat_width();
        for w in &mut self.weights[..n] {
            *w = normal.sample(rng);
        }
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "head expects {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn concat_width(&self) -> usize {
        self.slots * self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

/// Gradient arrays matching a [`LatentNetwork`]'s parameter tensors: one per
/// encoder layer, then the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

/// An encoder shared across `head.slots()` input images, followed by a head.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentNetwork {
    pub encoder: EncoderParams,
    pub head: Head,
}

impl LatentNetwork {
    pub fn new(encoder: EncoderParams, head: Head) -> Result<Self> {
        if encoder.feature_dim() != head.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "encoder emits {} features, head expects {}",
                encoder.feature_dim(),
                head.feature_dim
            )));
        }
        Ok(LatentNetwork { encoder, head })
    }

    /// Seeded Gaussian initialization (zero biases).
    pub fn init(
        arch: &Architecture,
        slots: usize,
        latent_dim: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let encoder = EncoderParams::init(arch, std, rng)?;
        let head = Head::zeros(slots, encoder.feature_dim(), latent_dim)?.init(std, rng)?;
        Self::new(encoder, head)
    }

    pub fn zeros(arch: &Architecture, slots: usize, latent_dim: usize) -> Result<Self> {
        let encoder = EncoderParams::zeros(arch)?;
        let head = Head::zeros(slots, encoder.feature_dim(), latent_dim)?;
        Self::new(encoder, head)
    }

    pub fn slots(&self) -> usize {
        self.head.slots
    }

    pub fn latent_dim(&self) -> usize {
        self.head.latent_dim
    }

    pub fn num_tensors(&self) -> usize {
        self.encoder.weights.len() + 1
    }

    pub fn tensor(&self, t: usize) -> &[f64] {
        if t < self.encoder.weights.len() {
            &self.encoder.weights[t]
        } else {
            &self.head.weights
        }
    }

    pub fn tensor_mut(&mut self, t: usize) -> &mut [f64] {
        if t < self.encoder.weights.len() {
            &mut self.encoder.weights[t]
        } else {
            &mut self.head.weights
        }
    }

    pub fn num_params(&self) -> usize {
        (0..self.num_tensors()).map(|t| self.tensor(t).len()).sum()
    }

    /// Squared L2 norm of every weight, biases included.
    pub fn weight_sq_norm(&self) -> f64 {
        (0..self.num_tensors())
            .map(|t| self.tensor(t).iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            tensors: (0..self.num_tensors())
                .map(|t| vec![0.0; self.tensor(t).len()])
                .collect(),
        }
    }

    fn check_slots(&self, images: &[&ImageTensor]) -> Result<()> {
        if images.len() != self.head.slots {
            return Err(Error::DimensionMismatch(format!(
                "{} images for a head with {} slots",
                images.len(),
                self.head.slots
            )));
        }
        Ok(())
    }

    fn head_forward(&self, concat: &[f64]) -> Vec<f64> {
        let n = concat.len();
        let bias = &self.head.weights[self.head.latent_dim * n..];
        (0..self.head.latent_dim)
            .map(|o| {
                let row = &self.head.weights[o * n..(o + 1) * n];
                bias[o] + row.iter().zip(concat).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Latent vector for one input (a bundle of `slots` images).
    pub fn forward(&self, images: &[&ImageTensor]) -> Result<Vec<f64>> {
        self.check_slots(images)?;
        let mut concat = Vec::with_capacity(self.head.concat_width());
        for img in images {
            concat.extend(self.encoder.forward(img)?);
        }
        Ok(self.head_forward(&concat))
    }

    /// Output and activation pattern (see [`EncoderParams::forward_pattern`]).
    pub(crate) fn forward_pattern(&self, images: &[&ImageTensor]) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_slots(images)?;
        let mut concat = Vec::with_capacity(self.head.concat_width());
        let mut pattern = Vec::new();
        for img in images {
            let (f, p) = self.encoder.forward_pattern(img)?;
            concat.extend(f);
            pattern.extend(p);
        }
        Ok((self.head_forward(&concat), pattern))
    }

    /// Forward pass returning the output and accumulating
    /// `d(loss)/d(weights)` for `d(loss)/d(output) = grad_fn(output)`.
    pub fn forward_backward(
        &self,
        images: &[&ImageTensor],
        grad_fn: impl FnOnce(&[f64]) -> Vec<f64>,
        grads: &mut ParamGrads,
    ) -> Result<Vec<f64>> {
        self.check_slots(images)?;
        let traces = images
            .iter()
            .map(|img| self.encoder.forward_trace(img))
            .collect::<Result<Vec<_>>>()?;
        let f = self.head.feature_dim;
        let mut concat = Vec::with_capacity(self.head.concat_width());
        for t in &traces {
            concat.extend_from_slice(t.activations.last().expect("non-empty"));
        }
        let out = self.head_forward(&concat);
        let g_out = grad_fn(&out);

        let n = concat.len();
        let k = self.head.latent_dim;
        let n_enc = self.encoder.weights.len();
        let mut g_concat = vec![0.0; n];
        {
            let gh = &mut grads.tensors[n_enc];
            let (gw, gb) = gh.split_at_mut(k * n);
            for o in 0..k {
                let g = g_out[o];
                gb[o] += g;
                for ((w_acc, x), (gc, w)) in gw[o * n..(o + 1) * n]
                    .iter_mut()
                    .zip(&concat)
                    .zip(g_concat.iter_mut().zip(&self.head.weights[o * n..(o + 1) * n]))
                {
                    *w_acc += g * x;
                    *gc += g * w;
                }
            }
        }
        for (s, trace) in traces.iter().enumerate() {
            self.encoder.backward(
                trace,
                &g_concat[s * f..(s + 1) * f],
                &mut grads.tensors[..n_enc],
            );
        }
        Ok(out)
    }
}

/// Feature vector of one image.
pub fn encoder_forward(params: &EncoderParams, img: &ImageTensor) -> Result<Vec<f64>> {
    params.forward(img)
}

/// User latent prior mean from the images referenced by `bundle`.
pub fn user_cnn_forward(
    net: &LatentNetwork,
    bundle: &UserImageBundle,
    item_images: &[Option<Arc<ImageTensor>>],
) -> Result<Vec<f64>> {
    let images = bundle_images(bundle, item_images)?;
    net.forward(&images)
}

/// Item latent prior mean from the item's image.
pub fn item_cnn_forward(net: &LatentNetwork, img: &ImageTensor) -> Result<Vec<f64>> {
    net.forward(&[img])
}

pub fn bundle_images<'a>(
    bundle: &UserImageBundle,
    item_images: &'a [Option<Arc<ImageTensor>>],
) -> Result<Vec<&'a ImageTensor>> {
    bundle
        .items
        .iter()
        .map(|&j| {
            item_images
                .get(j)
                .and_then(|o| o.as_deref())
                .ok_or_else(|| Error::MissingImage(format!("item index {j}")))
        })
        .collect()
}
