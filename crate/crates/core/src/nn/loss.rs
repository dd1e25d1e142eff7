use super::network::LossHead;
use crate::cam::log_sum_exp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Supervision for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// Single class index, for softmax heads.
    Class(usize),
    /// Per-label presence, for sigmoid heads.
    Labels(Vec<bool>),
}

/// `log(1 + e^z) - t z`, evaluated without overflow.
fn bce_with_logit<T: Scalar>(z: T, t: bool) -> T {
    let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
    if t {
        softplus - z
    } else {
        softplus
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Prior-corrected logit `n - log(p / (1 - p))`.
pub fn prior_corrected<T: Scalar>(n: T, prior: T) -> T {
    n - (prior / (T::one() - prior)).ln()
}

/// Loss of one example and its gradient with respect to the logits.
///
/// Softmax: cross-entropy. Sigmoid: binary cross-entropy averaged over
/// labels. PC-sigmoid: the same on prior-corrected logits.
pub fn loss_and_grad<T: Scalar>(
    head: LossHead,
    logits: &[T],
    target: &Target,
    priors: Option<&[T]>,
) -> Result<(T, Vec<T>)> {
    let m = logits.len();
    match (head, target) {
        (LossHead::Softmax, Target::Class(y)) => {
            if *y >= m {
                return Err(Error::LabelOutOfRange { label: *y, classes: m });
            }
            let lse = log_sum_exp(logits);
            let mut grad: Vec<T> = logits.iter().map(|&n| (n - lse).exp()).collect();
            grad[*y] -= T::one();
            Ok((lse - logits[*y], grad))
        }
        (LossHead::Sigmoid | LossHead::PcSigmoid, Target::Labels(t)) => {
            if t.len() != m {
                return Err(Error::InvalidArgument(format!("{} targets for {m} labels", t.len())));
            }
            let scale = T::one() / T::from_usize(m).unwrap();
            let mut total = T::zero();
            let mut grad = Vec::with_capacity(m);
            for (l, (&n, &present)) in logits.iter().zip(t).enumerate() {
                let z = match (head, priors) {
                    (LossHead::PcSigmoid, Some(p)) => prior_corrected(n, p[l]),
                    (LossHead::PcSigmoid, None) => {
                        return Err(Error::InvalidArgument("pc-sigmoid needs class priors".into()))
                    }
                    _ => n,
                };
                total += bce_with_logit(z, present);
                let t = if present { T::one() } else { T::zero() };
                grad.push((sigmoid(z) - t) * scale);
            }
            Ok((total * scale, grad))
        }
        (head, target) => Err(Error::InvalidArgument(format!(
            "target {target:?} does not fit a {head:?} head"
        ))),
    }
}

/// Label decisions: argmax for softmax, `p > 0.5` per label for sigmoid heads.
pub fn predict<T: Scalar>(head: LossHead, logits: &[T], priors: Option<&[T]>) -> Target {
    match head {
        LossHead::Softmax => {
            let mut best = 0;
            for (i, v) in logits.iter().enumerate() {
                if *v > logits[best] {
                    best = i;
                }
            }
            Target::Class(best)
        }
        LossHead::Sigmoid => Target::Labels(logits.iter().map(|&n| n > T::zero()).collect()),
        LossHead::PcSigmoid => Target::Labels(
            logits
                .iter()
                .enumerate()
                .map(|(l, &n)| {
                    let p = priors.map_or(T::from_f64_lossy(0.5), |p| p[l]);
                    prior_corrected(n, p) > T::zero()
                })
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_softmax_is_log2() {
        let (l, g) = loss_and_grad(LossHead::Softmax, &[0.0f64, 0.0], &Target::Class(0), None).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn sigmoid_zero_logit() {
        let (l, _) = loss_and_grad(LossHead::Sigmoid, &[0.0f64], &Target::Labels(vec![true]), None).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn balanced_priors_match_sigmoid() {
        let n = [1.3f64, -0.4, 2.2];
        let t = Target::Labels(vec![true, false, true]);
        let a = loss_and_grad(LossHead::Sigmoid, &n, &t, None).unwrap();
        let b = loss_and_grad(LossHead::PcSigmoid, &n, &t, Some(&[0.5, 0.5, 0.5])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prior_shift_direction() {
        // rare labels get their logits raised
        assert!(prior_corrected(0.0f64, 0.1) > 0.0);
        assert!((prior_corrected(0.0f64, 0.2) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let (l, g) = loss_and_grad(LossHead::Sigmoid, &[800.0f64, -800.0], &Target::Labels(vec![false, true]), None)
            .unwrap();
        assert!((l - 800.0).abs() < 1e-9);
        assert!(g.iter().all(|v| v.is_finite()));
        let (l, _) = loss_and_grad(LossHead::Softmax, &[1000.0f64, -1000.0], &Target::Class(1), None).unwrap();
        assert_eq!(l, 2000.0);
    }

    #[test]
    fn invalid_targets() {
        assert!(loss_and_grad(LossHead::Softmax, &[0.0f64, 0.0], &Target::Class(2), None).is_err());
        assert!(loss_and_grad(LossHead::Sigmoid, &[0.0f64, 0.0], &Target::Labels(vec![true]), None).is_err());
        assert!(loss_and_grad(LossHead::Sigmoid, &[0.0f64], &Target::Class(0), None).is_err());
    }

    #[test]
    fn softmax_gradient_is_probability_minus_onehot() {
        let n = [0.3f64, -1.2, 2.0];
        let (_, g) = loss_and_grad(LossHead::Softmax, &n, &Target::Class(2), None).unwrap();
        let z: f64 = n.iter().map(|v| v.exp()).sum();
        for (i, gi) in g.iter().enumerate() {
            let want = n[i].exp() / z - if i == 2 { 1.0 } else { 0.0 };
            assert!((gi - want).abs() < 1e-15);
        }
    }
}
