use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{axpy, col2im, dot, gemm_acc, gemm_nt_acc, im2col, sum};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Activation shape `(channels, height, width)`; vectors use `(n, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape3 { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serializable description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    Maxpool2,
    Gap,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Maxpool2 => "maxpool2",
            LayerSpec::Gap => "gap",
            LayerSpec::Linear { .. } => "linear",
        }
    }

    pub fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                if input.c != in_channels {
                    return Err(Error::ShapeMismatch(format!(
                        "conv expects {in_channels} channels, got {}",
                        input.c
                    )));
                }
                if kernel == 0 || kernel % 2 == 0 || 2 * padding + 1 != kernel {
                    return Err(Error::InvalidArgument(format!(
                        "conv supports odd kernels with same padding, got k={kernel} pad={padding}"
                    )));
                }
                Ok(Shape3::new(out_channels, input.h, input.w))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::Maxpool2 => {
                if input.h < 2 || input.w < 2 {
                    return Err(Error::ShapeMismatch(format!("cannot pool a {}x{} grid", input.h, input.w)));
                }
                Ok(Shape3::new(input.c, input.h / 2, input.w / 2))
            }
            LayerSpec::Gap => Ok(Shape3::new(input.c, 1, 1)),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if input.len() != in_features {
                    return Err(Error::ShapeMismatch(format!(
                        "linear expects {in_features} inputs, got {}",
                        input.len()
                    )));
                }
                Ok(Shape3::new(out_features, 1, 1))
            }
        }
    }

    /// `(weight, bias)` element counts, if the layer has parameters.
    pub fn param_sizes(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((out_channels * in_channels * kernel * kernel, out_channels)),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Some((out_features * in_features, out_features)),
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

/// A layer with its parameters (weights then bias), if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// What backward needs from the forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Conv { cols: Vec<T> },
    Relu { output: Vec<T> },
    Pool { argmax: Vec<u32> },
    Gap,
    Linear { input: Vec<T> },
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(spec: LayerSpec) -> Self {
        let (nw, nb) = spec.param_sizes().unwrap_or((0, 0));
        Layer {
            spec,
            weight: vec![T::zero(); nw],
            bias: vec![T::zero(); nb],
        }
    }

    /// Uniform `(-a, a)` weights with `a = scale / sqrt(fan_in)`; zero bias.
    pub fn init<R: Rng>(spec: LayerSpec, scale: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(spec);
        if !layer.weight.is_empty() {
            let a = scale / (spec.fan_in() as f64).sqrt();
            for w in &mut layer.weight {
                *w = T::from_f64_lossy(rng.random_range(-a..a));
            }
        }
        layer
    }

    pub fn has_params(&self) -> bool {
        !self.weight.is_empty()
    }

    pub(crate) fn forward(&self, input: &[T], shape: Shape3, keep: bool) -> (Vec<T>, Option<Cache<T>>) {
        match self.spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let n = shape.h * shape.w;
                let rows = in_channels * kernel * kernel;
                let mut cols = vec![T::zero(); rows * n];
                im2col(input, in_channels, shape.h, shape.w, kernel, padding, &mut cols);
                let mut out = vec![T::zero(); out_channels * n];
                gemm_acc(out_channels, rows, n, &self.weight, rows, 1, &cols, &mut out);
                for (co, dst) in out.chunks_exact_mut(n).enumerate() {
                    for v in dst {
                        *v += self.bias[co];
                    }
                }
                (out, keep.then_some(Cache::Conv { cols }))
            }
            LayerSpec::Relu => {
                let out: Vec<T> = input.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
                let cache = keep.then(|| Cache::Relu { output: out.clone() });
                (out, cache)
            }
            LayerSpec::Maxpool2 => {
                let (ho, wo) = (shape.h / 2, shape.w / 2);
                let mut out = Vec::with_capacity(shape.c * ho * wo);
                let mut argmax = Vec::with_capacity(shape.c * ho * wo);
                for c in 0..shape.c {
                    let plane = c * shape.h * shape.w;
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let base = plane + 2 * oy * shape.w + 2 * ox;
                            let mut best = base;
                            for idx in [base + 1, base + shape.w, base + shape.w + 1] {
                                if input[idx] > input[best] {
                                    best = idx;
                                }
                            }
                            out.push(input[best]);
                            argmax.push(best as u32);
                        }
                    }
                }
                (out, keep.then_some(Cache::Pool { argmax }))
            }
            LayerSpec::Gap => {
                let n = shape.h * shape.w;
                let inv = T::one() / T::from_usize(n).unwrap();
                let out = (0..shape.c).map(|c| sum(&input[c * n..(c + 1) * n]) * inv).collect();
                (out, keep.then_some(Cache::Gap))
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                let out = (0..out_features)
                    .map(|o| dot(&self.weight[o * in_features..(o + 1) * in_features], input) + self.bias[o])
                    .collect();
                (out, keep.then(|| Cache::Linear { input: input.to_vec() }))
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient when asked for.
    pub(crate) fn backward(
        &self,
        cache: &Cache<T>,
        in_shape: Shape3,
        grad_out: &[T],
        grad: &mut Layer<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        match (self.spec, cache) {
            (
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                },
                Cache::Conv { cols },
            ) => {
                let n = in_shape.h * in_shape.w;
                let rows = in_channels * kernel * kernel;
                for co in 0..out_channels {
                    grad.bias[co] += sum(&grad_out[co * n..(co + 1) * n]);
                }
                gemm_nt_acc(out_channels, rows, n, grad_out, cols, &mut grad.weight);
                if !need_input_grad {
                    return None;
                }
                let mut dcols = vec![T::zero(); rows * n];
                gemm_acc(rows, out_channels, n, &self.weight, 1, rows, grad_out, &mut dcols);
                let mut dx = vec![T::zero(); in_shape.len()];
                col2im(&dcols, in_channels, in_shape.h, in_shape.w, kernel, padding, &mut dx);
                Some(dx)
            }
            (LayerSpec::Relu, Cache::Relu { output }) => Some(
                grad_out
                    .iter()
                    .zip(output)
                    .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
                    .collect(),
            ),
            (LayerSpec::Maxpool2, Cache::Pool { argmax }) => {
                let mut dx = vec![T::zero(); in_shape.len()];
                for (&i, &g) in argmax.iter().zip(grad_out) {
                    dx[i as usize] += g;
                }
                Some(dx)
            }
            (LayerSpec::Gap, Cache::Gap) => {
                let n = in_shape.h * in_shape.w;
                let inv = T::one() / T::from_usize(n).unwrap();
                let mut dx = Vec::with_capacity(in_shape.len());
                for &g in grad_out {
                    dx.extend(std::iter::repeat_n(g * inv, n));
                }
                Some(dx)
            }
            (
                LayerSpec::Linear {
                    in_features,
                    out_features,
                },
                Cache::Linear { input },
            ) => {
                let mut dx = vec![T::zero(); in_features];
                for o in 0..out_features {
                    let g = grad_out[o];
                    grad.bias[o] += g;
                    axpy(&mut grad.weight[o * in_features..(o + 1) * in_features], g, input);
                    if need_input_grad {
                        axpy(&mut dx, g, &self.weight[o * in_features..(o + 1) * in_features]);
                    }
                }
                need_input_grad.then_some(dx)
            }
            _ => unreachable!("cache does not match layer kind"),
        }
    }
}

/// Fingerprint of the piecewise-linear decisions taken in a forward pass.
pub(crate) fn decision_pattern<T: Scalar>(caches: &[Cache<T>]) -> Vec<u32> {
    let mut pattern = Vec::new();
    for c in caches {
        match c {
            Cache::Relu { output } => pattern.extend(output.iter().map(|&o| (o > T::zero()) as u32)),
            Cache::Pool { argmax } => pattern.extend_from_slice(argmax),
            _ => {}
        }
    }
    pattern
}
