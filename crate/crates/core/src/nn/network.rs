use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Cache, Layer, LayerSpec, Shape3};
use super::loss::{self, Target};
use crate::array::Array;
use crate::cam::{ClassifierHead, FeatureStack, HeadMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output nonlinearity and loss of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossHead {
    Softmax,
    Sigmoid,
    /// Sigmoid on prior-corrected logits `n - log(p / (1 - p))`.
    PcSigmoid,
}

impl LossHead {
    pub fn cam_mode(self) -> HeadMode {
        match self {
            LossHead::Softmax => HeadMode::Softmax,
            LossHead::Sigmoid | LossHead::PcSigmoid => HeadMode::MultiLabel,
        }
    }
}

impl std::str::FromStr for LossHead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(LossHead::Softmax),
            "sigmoid" => Ok(LossHead::Sigmoid),
            "pc-sigmoid" | "pc_sigmoid" => Ok(LossHead::PcSigmoid),
            other => Err(Error::InvalidArgument(format!("unknown head {other:?}"))),
        }
    }
}

/// Default architecture for 1x28x56 multi-digit inputs: three 3x3 conv
/// blocks (16, 32, 64 channels, the first two pooled), GAP, linear to 10.
pub fn default_architecture() -> Vec<LayerSpec> {
    let conv = |i, o| LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 3,
        padding: 1,
    };
    vec![
        conv(1, 16),
        LayerSpec::Relu,
        LayerSpec::Maxpool2,
        conv(16, 32),
        LayerSpec::Relu,
        LayerSpec::Maxpool2,
        conv(32, 64),
        LayerSpec::Relu,
        LayerSpec::Gap,
        LayerSpec::Linear {
            in_features: 64,
            out_features: 10,
        },
    ]
}

/// A feed-forward CNN whose tail is `gap -> linear`, so every logit is a
/// spatial sum of class activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input: Shape3,
    layers: Vec<Layer<T>>,
    shapes: Vec<Shape3>,
    head: LossHead,
    class_priors: Option<Vec<T>>,
}

/// Logits together with the final feature stack.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub logits: Vec<T>,
    pub features: FeatureStack<T>,
}

/// Forward pass with everything backward needs.
pub(crate) struct Trace<T> {
    pub logits: Vec<T>,
    pub caches: Vec<Cache<T>>,
}

impl<T: Scalar> Network<T> {
    /// Assembles a network from layers; checks the shape chain and the tail.
    pub fn from_layers(
        input: Shape3,
        layers: Vec<Layer<T>>,
        head: LossHead,
        class_priors: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = layers.len();
        let tail_ok = n >= 2
            && layers[n - 2].spec == LayerSpec::Gap
            && matches!(layers[n - 1].spec, LayerSpec::Linear { .. })
            && layers[..n - 2]
                .iter()
                .all(|l| !matches!(l.spec, LayerSpec::Gap | LayerSpec::Linear { .. }));
        if !tail_ok {
            return Err(Error::InvalidArgument(
                "network must end in exactly one gap followed by one linear layer".into(),
            ));
        }
        let mut shapes = vec![input];
        for l in &layers {
            let next = l.spec.output_shape(*shapes.last().unwrap())?;
            let (nw, nb) = l.spec.param_sizes().unwrap_or((0, 0));
            if l.weight.len() != nw || l.bias.len() != nb {
                return Err(Error::ShapeMismatch(format!(
                    "{} layer has {}+{} parameters, expected {nw}+{nb}",
                    l.spec.kind_name(),
                    l.weight.len(),
                    l.bias.len()
                )));
            }
            shapes.push(next);
        }
        let classes = shapes.last().unwrap().c;
        match (head, &class_priors) {
            (LossHead::PcSigmoid, None) => {
                return Err(Error::InvalidArgument("pc-sigmoid needs class priors".into()))
            }
            (_, Some(p))
                if (p.len() != classes || p.iter().any(|&v| !(v > T::zero() && v < T::one()))) => {
                    return Err(Error::InvalidArgument(format!(
                        "class priors must be {classes} values in (0, 1)"
                    )));
                }
            _ => {}
        }
        if head == LossHead::Softmax && classes < 2 {
            return Err(Error::InvalidArgument("softmax needs at least 2 classes".into()));
        }
        Ok(Network {
            input,
            layers,
            shapes,
            head,
            class_priors,
        })
    }

    /// Fresh network with seeded fan-in uniform initialization.
    pub fn init(
        input: Shape3,
        specs: &[LayerSpec],
        head: LossHead,
        class_priors: Option<Vec<T>>,
        weight_init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(weight_init_scale > 0.0) {
            return Err(Error::InvalidArgument("weight_init_scale must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs.iter().map(|&s| Layer::init(s, weight_init_scale, &mut rng)).collect();
        Self::from_layers(input, layers, head, class_priors)
    }

    pub fn input_shape(&self) -> Shape3 {
        self.input
    }

    /// Shape of the grids feeding the pooling layer.
    pub fn feature_shape(&self) -> Shape3 {
        self.shapes[self.layers.len() - 2]
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().unwrap().c
    }

    pub fn head(&self) -> LossHead {
        self.head
    }

    pub fn class_priors(&self) -> Option<&[T]> {
        self.class_priors.as_deref()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All-zero gradient buffers with this network's layout.
    pub fn zero_grads(&self) -> Vec<Layer<T>> {
        self.layers.iter().map(|l| Layer::zeros(l.spec)).collect()
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input.len() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {:?} ({} values), got {}",
                self.input,
                self.input.len(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Logits and final-conv features for one `(C, H, W)` image.
    pub fn forward(&self, image: &Array<T>) -> Result<ForwardOutput<T>> {
        if image.shape() != [self.input.c, self.input.h, self.input.w] {
            return Err(Error::ShapeMismatch(format!(
                "network expects {:?}, got {:?}",
                self.input,
                image.shape()
            )));
        }
        self.forward_slice(image.data())
    }

    pub fn forward_slice(&self, input: &[T]) -> Result<ForwardOutput<T>> {
        self.check_input(input)?;
        let gap = self.layers.len() - 2;
        let mut x = input.to_vec();
        for (i, l) in self.layers[..gap].iter().enumerate() {
            x = l.forward(&x, self.shapes[i], false).0;
        }
        let fshape = self.shapes[gap];
        let features = FeatureStack::new(Array::from_vec(vec![fshape.c, fshape.h, fshape.w], x.clone())?)?;
        for (i, l) in self.layers.iter().enumerate().skip(gap) {
            x = l.forward(&x, self.shapes[i], false).0;
        }
        Ok(ForwardOutput { logits: x, features })
    }

    pub(crate) fn trace(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (y, c) = l.forward(&x, self.shapes[i], true);
            caches.push(c.expect("cache requested"));
            x = y;
        }
        Ok(Trace { logits: x, caches })
    }

    /// Reverse pass: accumulates `d loss / d params` into `grads`.
    pub(crate) fn backward(&self, trace: &Trace<T>, grad_logits: Vec<T>, grads: &mut [Layer<T>]) {
        let mut g = grad_logits;
        for i in (0..self.layers.len()).rev() {
            let need = i > 0;
            match self.layers[i].backward(&trace.caches[i], self.shapes[i], &g, &mut grads[i], need) {
                Some(dx) => g = dx,
                None => break,
            }
        }
    }

    /// Loss of one example under this network's head.
    pub fn loss(&self, logits: &[T], target: &Target) -> Result<T> {
        loss::loss_and_grad(self.head, logits, target, self.class_priors()).map(|(l, _)| l)
    }

    /// The linear head as seen by the CAM machinery.
    ///
    /// Weights are divided by the feature grid area so that the spatial sum
    /// of each class map plus bias reproduces this network's logits.
    pub fn classifier_head(&self) -> ClassifierHead<T> {
        let last = &self.layers[self.layers.len() - 1];
        let f = self.feature_shape();
        let area = T::from_usize(f.h * f.w).unwrap();
        let weights: Vec<T> = last.weight.iter().map(|&w| w / area).collect();
        ClassifierHead::new(
            Array::from_vec(vec![self.num_classes(), f.c], weights).expect("head shape"),
            Some(last.bias.clone()),
            self.head.cam_mode(),
        )
        .expect("validated head")
    }

    /// Converts parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.to_f64_lossless())).collect::<Vec<U>>();
        Network {
            input: self.input,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    weight: conv(&l.weight),
                    bias: conv(&l.bias),
                })
                .collect(),
            shapes: self.shapes.clone(),
            head: self.head,
            class_priors: self.class_priors.as_deref().map(conv),
        }
    }
}
