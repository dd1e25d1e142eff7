//! Mini-batch SGD with momentum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::axpy;
use super::layer::Layer;
use super::loss::{loss_and_grad, predict, Target};
use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 4,
            batch_size: 64,
            learning_rate: 0.5,
            momentum: 0.9,
            // uniform(-a, a) with a = sqrt(6 / fan_in)
            weight_init_scale: 6f64.sqrt(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_init_scale > 0.0) {
            return bad("weight_init_scale must be positive");
        }
        Ok(())
    }
}

/// One training example: a flattened `(C, H, W)` image and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub input: Vec<T>,
    pub target: Target,
}

/// Random-access source of training examples.
pub trait Dataset<T> {
    fn len(&self) -> usize;

    fn example(&self, index: usize) -> Example<T>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradients of the mean loss over `batch`, plus that mean loss.
pub fn batch_gradients<T: Scalar>(net: &Network<T>, batch: &[Example<T>]) -> Result<(T, Vec<Layer<T>>)> {
    batch_pass(net, batch).map(|(loss, grads, _)| (loss, grads))
}

/// Fraction of the target matched by the prediction: 0 or 1 for a class,
/// the share of agreeing labels for a label vector.
fn agreement(pred: &Target, target: &Target) -> f64 {
    match (pred, target) {
        (Target::Class(p), Target::Class(t)) => (p == t) as u8 as f64,
        (Target::Labels(p), Target::Labels(t)) if !t.is_empty() => {
            p.iter().zip(t).filter(|(a, b)| a == b).count() as f64 / t.len() as f64
        }
        _ => 0.0,
    }
}

fn batch_pass<T: Scalar>(net: &Network<T>, batch: &[Example<T>]) -> Result<(T, Vec<Layer<T>>, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut grads = net.zero_grads();
    let mut total = T::zero();
    let mut agree = 0.0;
    for ex in batch {
        let trace = net.trace(&ex.input)?;
        let (loss, dlogits) = loss_and_grad(net.head(), &trace.logits, &ex.target, net.class_priors())?;
        agree += agreement(&predict(net.head(), &trace.logits, net.class_priors()), &ex.target);
        total += loss;
        net.backward(&trace, dlogits, &mut grads);
    }
    let inv = T::one() / T::from_usize(batch.len()).unwrap();
    for g in &mut grads {
        g.weight.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= inv);
    }
    Ok((total * inv, grads, agree / batch.len() as f64))
}

/// SGD with heavy-ball momentum: `v = mu v + g; p -= lr v`.
pub struct Trainer<T> {
    cfg: TrainConfig,
    velocity: Vec<Layer<T>>,
    steps: usize,
    last_accuracy: f64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: &Network<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            cfg,
            velocity: net.zero_grads(),
            steps: 0,
            last_accuracy: f64::NAN,
        })
    }

    /// Backpropagates one batch and updates the parameters; returns the batch loss.
    pub fn step(&mut self, net: &mut Network<T>, batch: &[Example<T>]) -> Result<T> {
        let (loss, grads, accuracy) = batch_pass(net, batch)?;
        self.last_accuracy = accuracy;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} at step {} (batch of {})",
                self.steps,
                batch.len()
            )));
        }
        let mu = T::from_f64_lossy(self.cfg.momentum);
        let lr = T::from_f64_lossy(self.cfg.learning_rate);
        for ((layer, v), g) in net.layers_mut().iter_mut().zip(&mut self.velocity).zip(&grads) {
            for (vv, gv) in [(&mut v.weight, &g.weight), (&mut v.bias, &g.bias)] {
                vv.iter_mut().zip(gv.iter()).for_each(|(a, &b)| *a = mu * *a + b);
            }
            if self.cfg.learning_rate > 0.0 {
                axpy(&mut layer.weight, -lr, &v.weight);
                axpy(&mut layer.bias, -lr, &v.bias);
            }
        }
        self.steps += 1;
        Ok(loss)
    }

    /// Prediction accuracy on the most recent batch, measured before its update.
    pub fn last_accuracy(&self) -> f64 {
        self.last_accuracy
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub first_batch_loss: f64,
    pub last_batch_loss: f64,
    /// Mean training-batch accuracy (per-label agreement for label vectors).
    pub train_accuracy: f64,
}

/// Runs `cfg.epochs` shuffled passes over `data`.
///
/// The shuffle order is a pure function of `cfg.seed`, so the whole run is
/// reproducible bit for bit.
pub fn fit<T: Scalar, D: Dataset<T>>(
    net: &mut Network<T>,
    data: &D,
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if data.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let mut trainer = Trainer::new(net, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4521);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut accuracy = 0.0;
        let mut batches = 0usize;
        let mut first = f64::NAN;
        let mut last = f64::NAN;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example<T>> = chunk.iter().map(|&i| data.example(i)).collect();
            let loss = trainer
                .step(net, &batch)
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}: {m}")),
                    other => other,
                })?
                .to_f64_lossless();
            if batches == 0 {
                first = loss;
            }
            last = loss;
            total += loss;
            accuracy += trainer.last_accuracy();
            batches += 1;
        }
        let log = EpochLog {
            epoch,
            mean_loss: total / batches as f64,
            first_batch_loss: first,
            last_batch_loss: last,
            train_accuracy: accuracy / batches as f64,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{LayerSpec, Shape3};
    use crate::nn::network::LossHead;

    fn linear_net() -> Network<f64> {
        let layers = vec![
            Layer::zeros(LayerSpec::Gap),
            Layer {
                spec: LayerSpec::Linear {
                    in_features: 3,
                    out_features: 2,
                },
                weight: vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1],
                bias: vec![0.05, -0.05],
            },
        ];
        Network::from_layers(Shape3::new(3, 1, 1), layers, LossHead::Softmax, None).unwrap()
    }

    #[test]
    fn linear_gradient_matches_analytic() {
        let net = linear_net();
        let x = vec![1.5, -0.5, 2.0];
        let ex = Example {
            input: x.clone(),
            target: Target::Class(1),
        };
        let (_, grads) = batch_gradients(&net, &[ex]).unwrap();
        let n: Vec<f64> = (0..2)
            .map(|o| (0..3).map(|i| net.layers()[1].weight[o * 3 + i] * x[i]).sum::<f64>() + net.layers()[1].bias[o])
            .collect();
        let z: f64 = n.iter().map(|v| v.exp()).sum();
        for o in 0..2 {
            let p = n[o].exp() / z;
            let residual = if o == 1 { 1.0 } else { 0.0 } - p;
            for i in 0..3 {
                // d loss / d w = -(target - softmax) x
                let want = -residual * x[i];
                assert!((grads[1].weight[o * 3 + i] - want).abs() < 1e-9);
            }
            assert!((grads[1].bias[o] + residual).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut net = linear_net();
        let before = net.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut t = Trainer::new(&net, cfg).unwrap();
        let ex = Example {
            input: vec![1.0, 2.0, 3.0],
            target: Target::Class(0),
        };
        for _ in 0..3 {
            t.step(&mut net, std::slice::from_ref(&ex)).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut net = linear_net();
        net.layers_mut()[1].weight[0] = f64::INFINITY;
        net.layers_mut()[1].weight[3] = f64::INFINITY;
        let mut t = Trainer::new(&net, TrainConfig::default()).unwrap();
        let ex = Example {
            input: vec![1.0, 0.0, 0.0],
            target: Target::Class(0),
        };
        assert!(matches!(t.step(&mut net, &[ex]), Err(Error::Numeric(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }

    struct Toy;

    impl Dataset<f64> for Toy {
        fn len(&self) -> usize {
            40
        }

        fn example(&self, i: usize) -> Example<f64> {
            let y = i % 2;
            let s = if y == 0 { 1.0 } else { -1.0 };
            Example {
                input: vec![s, 0.5 * s, (i as f64 * 0.1).sin()],
                target: Target::Class(y),
            }
        }
    }

    #[test]
    fn fit_is_reproducible_and_learns() {
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            learning_rate: 0.2,
            ..Default::default()
        };
        let mut a = linear_net();
        let mut b = linear_net();
        let la = fit(&mut a, &Toy, cfg, |_| {}).unwrap();
        let lb = fit(&mut b, &Toy, cfg, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.last().unwrap().mean_loss < la[0].mean_loss);
    }
}
