//! The embedding network: six same-padded convolutions (ReLU after each,
//! 2x2 max pooling after the configured ones), a spatial softmax that turns
//! the last feature map into feature points, one dense layer and L2
//! normalization. No batch normalization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::digest::CRC64;
use crate::scenesim::ImageTensor;
use crate::seed;
use crate::tensorcore::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, l2_normalize_backward, l2_normalize_forward,
    maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, spatial_softmax_backward,
    spatial_softmax_forward, MaxPoolOutput, SpatialSoftmaxOutput,
};
use crate::{Tensor, TensorError};

pub const EMBED_DIM: usize = 32;
pub const CONV_LAYERS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub conv_channels: Vec<usize>,
    pub first_kernel: usize,
    pub other_kernels: usize,
    pub embed_dim: usize,
    /// 1-indexed conv layers followed by 2x2 max pooling.
    pub pool_after: Vec<usize>,
}

impl EmbedderConfig {
    /// The full-size architecture at input resolution `input_size`.
    pub fn standard(input_size: usize) -> Self {
        Self {
            input_size,
            in_channels: 3,
            conv_channels: vec![32, 32, 64, 64, 128, 128],
            first_kernel: 10,
            other_kernels: 3,
            embed_dim: EMBED_DIM,
            pool_after: vec![2, 3, 4, 5],
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let bad = |m: String| Err(TensorError::Invalid(m));
        if self.conv_channels.len() != CONV_LAYERS {
            return bad(format!("expected {CONV_LAYERS} conv layers, got {}", self.conv_channels.len()));
        }
        if self.embed_dim != EMBED_DIM {
            return bad(format!("embedding width must be {EMBED_DIM}, got {}", self.embed_dim));
        }
        if self.conv_channels.contains(&0) || self.in_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.first_kernel == 0 || self.other_kernels == 0 {
            return bad("kernel sizes must be positive".into());
        }
        if self.pool_after.iter().any(|&l| l == 0 || l > CONV_LAYERS) {
            return bad(format!("pool_after entries must lie in 1..={CONV_LAYERS}"));
        }
        // A 1x1 map has no spatial extent, so every feature point would be (0, 0).
        if self.final_map_size() < 2 {
            return bad(format!(
                "input size {} is too small for {} pooling stages",
                self.input_size,
                self.pool_after.len()
            ));
        }
        Ok(())
    }

    fn pools_after(&self, layer: usize) -> bool {
        self.pool_after.contains(&(layer + 1))
    }

    fn kernel(&self, layer: usize) -> usize {
        if layer == 0 {
            self.first_kernel
        } else {
            self.other_kernels
        }
    }

    /// Spatial side length of the map entering the spatial softmax.
    pub fn final_map_size(&self) -> usize {
        (0..CONV_LAYERS).fold(self.input_size, |s, l| if self.pools_after(l) { s / 2 } else { s })
    }

    /// Shape of the map entering the spatial softmax.
    pub fn final_map_shape(&self) -> [usize; 3] {
        let s = self.final_map_size();
        [self.conv_channels[CONV_LAYERS - 1], s, s]
    }

    /// Width of the feature-point vector (two coordinates per channel).
    pub fn feature_len(&self) -> usize {
        2 * self.conv_channels[CONV_LAYERS - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Network weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    pub config: EmbedderConfig,
    pub convs: Vec<ConvParams>,
    pub dense_weight: Tensor,
    pub dense_bias: Tensor,
}

impl EmbedderParams {
    /// All-zero parameters with the shapes `config` implies.
    pub fn zeros(config: &EmbedderConfig) -> Result<Self, TensorError> {
        config.validate()?;
        let mut c_in = config.in_channels;
        let convs = config
            .conv_channels
            .iter()
            .enumerate()
            .map(|(l, &c_out)| {
                let k = config.kernel(l);
                let p = ConvParams {
                    weight: Tensor::zeros(&[c_out, c_in, k, k]),
                    bias: Tensor::zeros(&[c_out]),
                };
                c_in = c_out;
                p
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            convs,
            dense_weight: Tensor::zeros(&[config.embed_dim, config.feature_len()]),
            dense_bias: Tensor::zeros(&[config.embed_dim]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Parameter names in a fixed order: `conv1.weight`, `conv1.bias`, ...,
    /// `dense.weight`, `dense.bias`.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 1..=self.convs.len() {
            names.push(format!("conv{l}.weight"));
            names.push(format!("conv{l}.bias"));
        }
        names.push("dense.weight".into());
        names.push("dense.bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out.push(&self.dense_weight);
        out.push(&self.dense_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.dense_weight);
        out.push(&mut self.dense_bias);
        out
    }

    /// Rebuilds parameters from named tensors, checking every shape.
    pub fn from_named(config: &EmbedderConfig, named: Vec<(String, Tensor)>) -> Result<Self, TensorError> {
        let mut params = Self::zeros(config)?;
        let names = params.names();
        if named.len() != names.len() {
            return Err(TensorError::Invalid(format!(
                "expected {} parameter tensors, got {}",
                names.len(),
                named.len()
            )));
        }
        for (slot, name) in params.tensors_mut().into_iter().zip(&names) {
            let (_, t) = named
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| TensorError::Invalid(format!("missing parameter {name}")))?;
            if t.shape() != slot.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load parameter",
                    expected: slot.shape().to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            *slot = t.clone();
        }
        Ok(params)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// CRC-64 over names, shapes and values.
    pub fn digest(&self) -> u64 {
        let mut d = CRC64.digest();
        for (name, t) in self.names().iter().zip(self.tensors()) {
            d.update(name.as_bytes());
            for &s in t.shape() {
                d.update(&(s as u64).to_le_bytes());
            }
            for v in t.data() {
                d.update(&v.to_le_bytes());
            }
        }
        d.finalize()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &EmbedderParams, scale: f32) -> Result<(), TensorError> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, scale)?;
        }
        Ok(())
    }
}

/// He-uniform weights (`|w| <= sqrt(6 / fan_in)`) and zero biases.
pub fn init_params(config: &EmbedderConfig, seed: u64) -> Result<EmbedderParams, TensorError> {
    let mut params = EmbedderParams::zeros(config)?;
    let mut rng = seed::rng(seed, "init", 0);
    let mut fill = |t: &mut Tensor, fan_in: usize| {
        let bound = libm::sqrtf(6.0 / fan_in as f32);
        t.data_mut().iter_mut().for_each(|w| *w = rng.random_range(-bound..=bound));
    };
    for conv in &mut params.convs {
        let s = conv.weight.shape();
        let fan_in = s[1] * s[2] * s[3];
        fill(&mut conv.weight, fan_in);
    }
    let fan_in = params.dense_weight.shape()[1];
    fill(&mut params.dense_weight, fan_in);
    Ok(params)
}

/// A unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f32 {
        libm::sqrtf(self.0.iter().map(|v| v * v).sum())
    }

    pub fn squared_distance(&self, other: &Embedding) -> f32 {
        squared_distance(&self.0, &other.0)
    }

    pub fn distance(&self, other: &Embedding) -> f32 {
        libm::sqrtf(self.squared_distance(other))
    }
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct LayerCache {
    input: Tensor,
    activation: Tensor,
    pool: Option<MaxPoolOutput>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    softmax: SpatialSoftmaxOutput,
    pre_norm: Tensor,
}

/// `[H, W, C]` image → `[C, H, W]` network input.
fn to_channels_first(config: &EmbedderConfig, image: &ImageTensor) -> Result<Tensor, TensorError> {
    let (s, c) = (config.input_size, config.in_channels);
    image.expect_shape("embed input", &[s, s, c])?;
    let src = image.data();
    let mut out = vec![0.0f32; s * s * c];
    for (p, px) in src.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            out[ch * s * s + p] = v;
        }
    }
    Tensor::new(vec![c, s, s], out)
}

fn forward(params: &EmbedderParams, image: &ImageTensor, keep: bool) -> Result<(Embedding, Option<ForwardCache>), TensorError> {
    let config = &params.config;
    let mut x = to_channels_first(config, image)?;
    let mut layers = Vec::new();
    for (l, conv) in params.convs.iter().enumerate() {
        let activation = relu_forward(&conv2d_forward(&x, &conv.weight, &conv.bias)?);
        let (next, pool) = if config.pools_after(l) {
            let p = maxpool2x2_forward(&activation)?;
            (p.output.clone(), Some(p))
        } else {
            (activation.clone(), None)
        };
        if keep {
            layers.push(LayerCache {
                input: x,
                activation,
                pool,
            });
        }
        x = next;
    }
    let softmax = spatial_softmax_forward(&x)?;
    let pre_norm = dense_forward(&softmax.points, &params.dense_weight, &params.dense_bias)?;
    let embedding = Embedding(l2_normalize_forward(&pre_norm).into_data());
    let cache = keep.then_some(ForwardCache {
        layers,
        softmax,
        pre_norm,
    });
    Ok((embedding, cache))
}

/// Embeds an `[S, S, 3]` image.
pub fn embed(params: &EmbedderParams, image: &ImageTensor) -> Result<Embedding, TensorError> {
    forward(params, image, false).map(|(e, _)| e)
}

/// Embeds an image and keeps what the backward pass needs.
pub fn embed_with_cache(params: &EmbedderParams, image: &ImageTensor) -> Result<(Embedding, ForwardCache), TensorError> {
    let (e, c) = forward(params, image, true)?;
    Ok((e, c.expect("cache requested")))
}

/// Adds `d(upstream . f(x)) / d(params)` into `grads`.
pub fn accumulate_backward(
    params: &EmbedderParams,
    cache: &ForwardCache,
    upstream: &[f32],
    grads: &mut EmbedderParams,
) -> Result<(), TensorError> {
    let up = Tensor::new(vec![upstream.len()], upstream.to_vec())?;
    let g = l2_normalize_backward(&cache.pre_norm, &up)?;
    let dense = dense_backward(&cache.softmax.points, &params.dense_weight, &g)?;
    grads.dense_weight.add_scaled(&dense.param_grads["weight"], 1.0)?;
    grads.dense_bias.add_scaled(&dense.param_grads["bias"], 1.0)?;
    let mut g = spatial_softmax_backward(&cache.softmax, &dense.input_grad)?.input_grad;
    for (l, layer) in cache.layers.iter().enumerate().rev() {
        if let Some(pool) = &layer.pool {
            g = maxpool2x2_backward(layer.activation.shape(), pool, &g)?;
        }
        g = relu_backward(&layer.activation, &g)?;
        let conv = conv2d_backward(&layer.input, &params.convs[l].weight, &g, l > 0)?;
        grads.convs[l].weight.add_scaled(&conv.param_grads["weight"], 1.0)?;
        grads.convs[l].bias.add_scaled(&conv.param_grads["bias"], 1.0)?;
        g = conv.input_grad;
    }
    Ok(())
}

/// Parameter gradients of `upstream . f(image)`.
pub fn embed_backward(params: &EmbedderParams, image: &ImageTensor, upstream: &[f32]) -> Result<EmbedderParams, TensorError> {
    let (_, cache) = embed_with_cache(params, image)?;
    let mut grads = params.zeros_like();
    accumulate_backward(params, &cache, upstream, &mut grads)?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbedderConfig {
        EmbedderConfig {
            input_size: 8,
            in_channels: 3,
            conv_channels: vec![2; 6],
            first_kernel: 10,
            other_kernels: 3,
            embed_dim: 32,
            pool_after: vec![2, 3],
        }
    }

    fn image(size: usize, seed_value: u64) -> Tensor {
        let mut rng = seed::rng(seed_value, "img", 0);
        let data = (0..size * size * 3).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::new(vec![size, size, 3], data).unwrap()
    }

    #[test]
    fn shape_chain() {
        assert_eq!(EmbedderConfig::standard(64).final_map_shape(), [128, 4, 4]);
        assert_eq!(EmbedderConfig::standard(48).final_map_shape(), [128, 3, 3]);
        assert_eq!(EmbedderConfig::standard(300).final_map_shape(), [128, 18, 18]);
        assert_eq!(EmbedderConfig::standard(64).feature_len(), 256);
    }

    #[test]
    fn config_invariants() {
        let mut c = EmbedderConfig::standard(64);
        c.conv_channels.pop();
        assert!(c.validate().is_err());
        let mut c = EmbedderConfig::standard(64);
        c.embed_dim = 16;
        assert!(c.validate().is_err());
        assert!(EmbedderConfig::standard(8).validate().is_err());
        assert!(toy().validate().is_ok());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = toy();
        let a = init_params(&c, 3).unwrap();
        assert_eq!(a.digest(), init_params(&c, 3).unwrap().digest());
        assert_ne!(a.digest(), init_params(&c, 4).unwrap().digest());
        for conv in &a.convs {
            let s = conv.weight.shape();
            let bound = libm::sqrtf(6.0 / (s[1] * s[2] * s[3]) as f32);
            assert!(conv.weight.data().iter().all(|w| w.abs() <= bound));
            assert!(conv.bias.data().iter().all(|&b| b == 0.0));
        }
        assert!(a.dense_bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn output_is_unit_norm_and_deterministic() {
        let p = init_params(&toy(), 1).unwrap();
        let x = image(8, 2);
        let e = embed(&p, &x).unwrap();
        assert_eq!(e.0.len(), 32);
        assert!((e.norm() - 1.0).abs() < 1e-5);
        assert_eq!(e, embed(&p, &x).unwrap());
    }

    #[test]
    fn rejects_wrong_image_size() {
        let p = init_params(&toy(), 1).unwrap();
        assert!(embed(&p, &image(9, 0)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = init_params(&toy(), 1).unwrap();
        let g = embed_backward(&p, &image(8, 5), &[0.0; 32]).unwrap();
        assert!(g.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dead_relu_path_has_zero_gradient() {
        // A strongly negative bias kills every unit of conv1's first channel;
        // nothing can flow into that channel's weights.
        let mut p = init_params(&toy(), 1).unwrap();
        p.convs[0].bias.data_mut()[0] = -1e3;
        let g = embed_backward(&p, &image(8, 5), &[1.0; 32]).unwrap();
        let w = &g.convs[0].weight;
        let per_out = w.len() / w.shape()[0];
        assert!(w.data()[..per_out].iter().all(|&v| v == 0.0));
        assert_eq!(g.convs[0].bias.data()[0], 0.0);
    }

    #[test]
    fn named_round_trip() {
        let p = init_params(&toy(), 7).unwrap();
        let named = p.names().into_iter().zip(p.tensors().into_iter().cloned()).collect();
        assert_eq!(EmbedderParams::from_named(&toy(), named).unwrap(), p);
    }
}
