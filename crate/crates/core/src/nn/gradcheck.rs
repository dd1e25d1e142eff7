//! Central finite-difference verification of backpropagated gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layer::decision_pattern;
use super::loss::{loss_and_grad, Target};
use super::network::{LossHead, Network};
use super::train::{batch_gradients, Example};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    /// Number of parameter coordinates to compare.
    pub coordinates: usize,
    /// Central difference step.
    pub step: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            coordinates: 200,
            step: 1e-5,
            floor: 1e-6,
            seed: 0,
        }
    }
}

/// Location of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCoord {
    pub layer: usize,
    pub bias: bool,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU or max-pool switch.
    pub skipped_kinks: usize,
    pub worst: Option<ParamCoord>,
}

/// Uniform `[0, 1)` input with a random target suited to the network's head.
pub fn synthetic_example(net: &Network<f64>, seed: u64) -> Example<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = (0..net.input_shape().len()).map(|_| rng.random::<f64>()).collect();
    let m = net.num_classes();
    let target = match net.head() {
        LossHead::Softmax => Target::Class(rng.random_range(0..m)),
        LossHead::Sigmoid | LossHead::PcSigmoid => Target::Labels((0..m).map(|_| rng.random_bool(0.5)).collect()),
    };
    Example { input, target }
}

fn coords(net: &Network<f64>) -> Vec<ParamCoord> {
    let mut out = Vec::with_capacity(net.num_params());
    for (layer, l) in net.layers().iter().enumerate() {
        out.extend((0..l.weight.len()).map(|index| ParamCoord { layer, bias: false, index }));
        out.extend((0..l.bias.len()).map(|index| ParamCoord { layer, bias: true, index }));
    }
    out
}

fn param_mut(net: &mut Network<f64>, c: ParamCoord) -> &mut f64 {
    let l = &mut net.layers_mut()[c.layer];
    if c.bias {
        &mut l.bias[c.index]
    } else {
        &mut l.weight[c.index]
    }
}

/// Compares backprop against central differences on a random subset of
/// coordinates. Coordinates whose perturbation changes any piecewise-linear
/// decision are skipped, since the loss is not differentiable across them.
pub fn gradcheck(net: &Network<f64>, example: &Example<f64>, opts: GradcheckOptions) -> Result<GradcheckReport> {
    let (_, grads) = batch_gradients(net, std::slice::from_ref(example))?;
    let base_pattern = decision_pattern(&net.trace(&example.input)?.caches);

    let mut all = coords(net);
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let mut probe = net.clone();
    let eval = |probe: &Network<f64>| -> Result<(f64, bool)> {
        let trace = probe.trace(&example.input)?;
        let same = decision_pattern(&trace.caches) == base_pattern;
        let (loss, _) = loss_and_grad(probe.head(), &trace.logits, &example.target, probe.class_priors())?;
        Ok((loss, same))
    };

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };
    for c in all {
        if report.checked >= opts.coordinates {
            break;
        }
        let original = *param_mut(&mut probe, c);
        *param_mut(&mut probe, c) = original + opts.step;
        let (plus, same_plus) = eval(&probe)?;
        *param_mut(&mut probe, c) = original - opts.step;
        let (minus, same_minus) = eval(&probe)?;
        *param_mut(&mut probe, c) = original;
        if !(same_plus && same_minus) {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let l = &grads[c.layer];
        let analytic = if c.bias { l.bias[c.index] } else { l.weight[c.index] };
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(c);
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{LayerSpec, Shape3};
    use crate::nn::loss::Target;
    use crate::nn::network::LossHead;

    fn image(c: usize, h: usize, w: usize) -> Vec<f64> {
        (0..c * h * w).map(|i| ((i * 29) % 23) as f64 / 23.0 - 0.3).collect()
    }

    #[test]
    fn linear_net_is_tight() {
        let specs = [
            LayerSpec::Gap,
            LayerSpec::Linear {
                in_features: 4,
                out_features: 5,
            },
        ];
        let net = Network::<f64>::init(Shape3::new(4, 3, 3), &specs, LossHead::Softmax, None, 1.0, 1).unwrap();
        let ex = Example {
            input: image(4, 3, 3),
            target: Target::Class(2),
        };
        let r = gradcheck(&net, &ex, GradcheckOptions::default()).unwrap();
        assert_eq!(r.checked, 25);
        assert_eq!(r.skipped_kinks, 0);
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn conv_relu_gap_linear() {
        let specs = [
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 6,
                kernel: 3,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Maxpool2,
            LayerSpec::Conv2d {
                in_channels: 6,
                out_channels: 5,
                kernel: 3,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Gap,
            LayerSpec::Linear {
                in_features: 5,
                out_features: 4,
            },
        ];
        let priors = Some(vec![0.1, 0.3, 0.5, 0.8]);
        let net = Network::<f64>::init(Shape3::new(2, 8, 10), &specs, LossHead::PcSigmoid, priors, 1.0, 7).unwrap();
        let ex = Example {
            input: image(2, 8, 10),
            target: Target::Labels(vec![true, false, false, true]),
        };
        let r = gradcheck(&net, &ex, GradcheckOptions::default()).unwrap();
        assert!(r.checked >= 200, "{r:?}");
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
