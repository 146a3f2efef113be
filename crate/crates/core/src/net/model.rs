use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ops::{
    concat_channels, conv2d_backward_opt, conv2d_forward, leaky_relu_backward_inplace,
    leaky_relu_inplace, maxpool2, maxpool2_backward, split_channels, upsample2_backward,
    upsample2_nearest, Kernel, PoolMask,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grid::{mirror_index, ImageGrid};
use crate::seed::{self, tag};

/// Negative-side slope of every hidden activation.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Encoder–decoder shape. Every level carries `base_channels` feature maps;
/// decoder convolutions see twice that after the skip concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Number of 2x2 pooling levels.
    pub depth: u32,
    pub base_channels: u32,
    pub kernel_size: u32,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 32,
            kernel_size: 3,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth > 8 {
            return Err(Error::Config(format!(
                "network depth {} is above 8",
                self.depth
            )));
        }
        if self.base_channels == 0 || self.base_channels > 1024 {
            return Err(Error::Config(format!(
                "base_channels must be in 1..=1024, got {}",
                self.base_channels
            )));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size > 15 {
            return Err(Error::Config(format!(
                "kernel_size must be odd and at most 15, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// Spatial dimensions must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    /// `(out_ch, in_ch, size)` of every convolution in execution order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let c = self.base_channels as usize;
        let k = self.kernel_size as usize;
        let mut shapes = Vec::new();
        let mut input = 1;
        for _ in 0..self.depth {
            shapes.push((c, input, k));
            shapes.push((c, c, k));
            input = c;
        }
        shapes.push((c, input, k));
        shapes.push((c, c, k));
        for _ in 0..self.depth {
            shapes.push((c, 2 * c, k));
            shapes.push((c, c, k));
        }
        shapes.push((1, c, 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(o, i, k)| o * i * k * k + o)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Kernel,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out_ch: usize, in_ch: usize, size: usize) -> Self {
        Self {
            kernel: Kernel::zeros(out_ch, in_ch, size),
            bias: vec![0.0; out_ch],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.kernel.out_ch, self.kernel.in_ch, self.kernel.size)
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.kernel.data.iter().chain(&self.bias)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.kernel.data.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Per-layer gradients, same shapes as [`NetworkParams::layers`].
pub type Gradients = Vec<ConvLayer>;

/// Weights, biases and Adam state. All values are kept representable in
/// `f32` so that checkpoints round-trip exactly; arithmetic is in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub layers: Vec<ConvLayer>,
    pub adam_m: Vec<ConvLayer>,
    pub adam_v: Vec<ConvLayer>,
    pub step_count: u64,
}

/// Activations retained by a training-mode forward pass.
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    outputs: Vec<Tensor>,
    masks: Vec<PoolMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl NetworkParams {
    /// Glorot-uniform kernels, zero biases, zero Adam state.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng_from(&[tag::INIT, seed]);
        let shapes = spec.layer_shapes();
        let layers = shapes
            .iter()
            .map(|&(o, i, k)| {
                let limit = (6.0 / ((i + o) * k * k) as f64).sqrt();
                let data = (0..o * i * k * k)
                    .map(|_| to_f32(rng.gen_range(-limit..limit)))
                    .collect();
                ConvLayer {
                    kernel: Kernel {
                        out_ch: o,
                        in_ch: i,
                        size: k,
                        data,
                    },
                    bias: vec![0.0; o],
                }
            })
            .collect();
        let zeros: Vec<ConvLayer> = shapes
            .iter()
            .map(|&(o, i, k)| ConvLayer::zeros(o, i, k))
            .collect();
        Ok(Self {
            spec,
            layers,
            adam_m: zeros.clone(),
            adam_v: zeros,
            step_count: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let shapes = self.spec.layer_shapes();
        for set in [&self.layers, &self.adam_m, &self.adam_v] {
            if set.len() != shapes.len() {
                return Err(Error::Shape(format!(
                    "{} layers where the spec implies {}",
                    set.len(),
                    shapes.len()
                )));
            }
            for (l, &s) in set.iter().zip(&shapes) {
                if l.shape() != s
                    || l.bias.len() != s.0
                    || l.kernel.data.len() != s.0 * s.1 * s.2 * s.2
                {
                    return Err(Error::Shape(format!(
                        "layer shape {:?}, expected {s:?}",
                        l.shape()
                    )));
                }
                if l.values().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite network parameter".into()));
                }
            }
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers
            .iter()
            .map(|l| {
                let (o, i, k) = l.shape();
                ConvLayer::zeros(o, i, k)
            })
            .collect()
    }

    fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        let m = self.spec.multiple();
        if height == 0 || width == 0 || height % m != 0 || width % m != 0 {
            return Err(Error::Shape(format!(
                "network input {width}x{height} is not a positive multiple of {m}"
            )));
        }
        Ok(())
    }

    fn run(&self, x: Tensor, mut cache: Option<&mut ForwardCache>) -> Result<Tensor> {
        if x.channels != 1 {
            return Err(Error::Shape(format!(
                "network input has {} channels",
                x.channels
            )));
        }
        self.check_dims(x.height, x.width)?;
        let depth = self.spec.depth as usize;
        let c = self.spec.base_channels as usize;
        let mut li = 0;
        let mut layer = |h: Tensor, cache: &mut Option<&mut ForwardCache>| -> Result<Tensor> {
            let l = &self.layers[li];
            let last = li + 1 == self.layers.len();
            li += 1;
            let mut y = conv2d_forward(&h, &l.kernel, &l.bias)?;
            if !last {
                leaky_relu_inplace(&mut y, LEAKY_SLOPE);
            }
            if let Some(cache) = cache.as_deref_mut() {
                cache.inputs.push(h);
                cache.outputs.push(y.clone());
            }
            Ok(y)
        };

        let mut h = x;
        let mut skips = Vec::with_capacity(depth);
        for _ in 0..depth {
            h = layer(h, &mut cache)?;
            h = layer(h, &mut cache)?;
            let (pooled, mask) = maxpool2(&h)?;
            if let Some(cache) = cache.as_deref_mut() {
                cache.masks.push(mask);
            }
            skips.push(h);
            h = pooled;
        }
        h = layer(h, &mut cache)?;
        h = layer(h, &mut cache)?;
        for _ in 0..depth {
            let skip = skips.pop().expect("one skip per level");
            let up = upsample2_nearest(&h);
            debug_assert_eq!(up.channels, c);
            h = concat_channels(&up, &skip)?;
            drop((up, skip));
            h = layer(h, &mut cache)?;
            h = layer(h, &mut cache)?;
        }
        layer(h, &mut cache)
    }

    /// Forward pass on a tensor whose dimensions are multiples of
    /// `2^depth`.
    pub fn forward_tensor(&self, x: Tensor) -> Result<Tensor> {
        self.run(x, None)
    }

    /// Forward pass keeping the activations needed by [`Self::backward`].
    pub fn forward_train(&self, x: Tensor) -> Result<(Tensor, ForwardCache)> {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.spec.depth as usize),
        };
        let y = self.run(x, Some(&mut cache))?;
        Ok((y, cache))
    }

    /// Strict forward pass on an image: dimensions must be multiples of
    /// `2^depth`.
    pub fn forward(&self, img: &ImageGrid) -> Result<ImageGrid> {
        let y = self.forward_tensor(Tensor::from_image(img))?;
        Ok(ImageGrid {
            values: y.data,
            ..img.clone()
        })
    }

    /// Inference on any image size: mirror-pads to the next multiple of
    /// `2^depth`, runs the network and crops back. Output is unclamped.
    pub fn infer(&self, img: &ImageGrid) -> Result<ImageGrid> {
        let m = self.spec.multiple();
        let (w, h) = (img.width, img.height);
        let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
        if (pw, ph) == (w, h) {
            return self.forward(img);
        }
        let mut data = Vec::with_capacity(pw * ph);
        for r in 0..ph {
            for col in 0..pw {
                data.push(
                    img.values[mirror_index(r as isize, h) * w + mirror_index(col as isize, w)],
                );
            }
        }
        let y = self.forward_tensor(Tensor::from_vec(1, ph, pw, data)?)?;
        let mut values = Vec::with_capacity(w * h);
        for r in 0..h {
            values.extend_from_slice(&y.data[r * pw..r * pw + w]);
        }
        Ok(ImageGrid {
            values,
            ..img.clone()
        })
    }

    /// Parameter gradients for `grad_out = dL/d(output)`, and optionally
    /// the gradient with respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Tensor,
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<Tensor>)> {
        let n = self.layers.len();
        if cache.inputs.len() != n || grad_out.shape() != cache.outputs[n - 1].shape() {
            return Err(Error::Shape(
                "gradient does not match the cached forward pass".into(),
            ));
        }
        let depth = self.spec.depth as usize;
        let c = self.spec.base_channels as usize;
        let mut grads: Vec<Option<ConvLayer>> = vec![None; n];
        let mut li = n;

        let mut layer_back = |g: Tensor, grads: &mut Vec<Option<ConvLayer>>| -> Result<Tensor> {
            li -= 1;
            let mut g = g;
            if li + 1 != n {
                leaky_relu_backward_inplace(&mut g, &cache.outputs[li], LEAKY_SLOPE);
            }
            let l = &self.layers[li];
            let need_x = li != 0 || want_input_grad;
            let r = conv2d_backward_opt(&cache.inputs[li], &l.kernel, &g, need_x)?;
            grads[li] = Some(ConvLayer {
                kernel: r.grad_k,
                bias: r.grad_b,
            });
            Ok(r.grad_x.unwrap_or_else(|| Tensor::zeros(0, 0, 0)))
        };

        let mut g = layer_back(grad_out.clone(), &mut grads)?;
        let mut skip_grads = Vec::with_capacity(depth);
        for _ in 0..depth {
            g = layer_back(g, &mut grads)?;
            g = layer_back(g, &mut grads)?;
            let (g_up, g_skip) = split_channels(&g, c)?;
            skip_grads.push(g_skip);
            g = upsample2_backward(&g_up)?;
        }
        g = layer_back(g, &mut grads)?;
        g = layer_back(g, &mut grads)?;
        for level in (0..depth).rev() {
            let mut gx = maxpool2_backward(&cache.masks[level], &g)?;
            // the decoder is unwound shallowest level first
            gx.add_assign(&skip_grads[level]);
            g = layer_back(gx, &mut grads)?;
            g = layer_back(g, &mut grads)?;
        }
        let grads = grads
            .into_iter()
            .map(|g| g.expect("every layer visited"))
            .collect();
        Ok((grads, want_input_grad.then_some(g)))
    }

    /// Bias-corrected Adam update. Parameters and moments are rounded to
    /// `f32` afterwards. Non-finite gradients leave the parameters untouched
    /// and report divergence.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64, cfg: AdamConfig) -> Result<()> {
        if grads.len() != self.layers.len()
            || grads
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.shape() != l.shape())
        {
            return Err(Error::Shape(
                "gradient shapes do not match the network".into(),
            ));
        }
        if grads.iter().any(|g| g.values().any(|v| !v.is_finite())) {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let t = self.step_count + 1;
        let bc1 = 1.0 - cfg.beta1.powf(t as f64);
        let bc2 = 1.0 - cfg.beta2.powf(t as f64);
        for (((p, m), v), g) in self
            .layers
            .iter_mut()
            .zip(self.adam_m.iter_mut())
            .zip(self.adam_v.iter_mut())
            .zip(grads)
        {
            for (((p, m), v), &g) in p
                .values_mut()
                .zip(m.values_mut())
                .zip(v.values_mut())
                .zip(g.values())
            {
                let m1 = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                let v1 = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let step = lr * (m1 / bc1) / ((v1 / bc2).sqrt() + cfg.eps);
                *p = to_f32(*p - step);
                *m = to_f32(m1);
                *v = to_f32(v1);
            }
        }
        self.step_count = t;
        Ok(())
    }
}

pub fn add_gradients(acc: &mut Gradients, g: &Gradients) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.values_mut().zip(b.values()) {
            *x += y;
        }
    }
}

pub fn scale_gradients(acc: &mut Gradients, k: f64) {
    for a in acc.iter_mut() {
        for x in a.values_mut() {
            *x *= k;
        }
    }
}
