//! RMSProp parameter updates and critic weight clipping.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// RMSProp hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct RmsProp<F: Scalar> {
    /// Learning rate eta.
    pub lr: F,
    /// Squared-gradient decay rho.
    pub rho: F,
    /// Stabilizer added to the root of the accumulator.
    pub eps: F,
}

impl Default for RmsProp<f32> {
    fn default() -> Self {
        RmsProp {
            lr: 5e-5,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

/// Per-parameter squared-gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<F: Scalar> {
    pub acc: Vec<F>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn zeros(numel: usize) -> Self {
        OptimizerState {
            acc: vec![F::zero(); numel],
        }
    }
}

/// One RMSProp step:
/// `acc <- rho*acc + (1-rho)*g^2; param <- param - lr*g/(sqrt(acc)+eps)`.
pub fn rmsprop_step<F: Scalar>(
    param: &mut Tensor<F>,
    state: &mut OptimizerState<F>,
    hyper: &RmsProp<F>,
) -> Result<()> {
    let grad = param.grad.take().ok_or(Error::MissingGrad)?;
    if grad.len() != state.acc.len() || grad.len() != param.numel() {
        param.grad = Some(grad);
        return Err(Error::ShapeMismatch {
            op: "rmsprop_step",
            lhs: vec![param.numel()],
            rhs: vec![state.acc.len()],
        });
    }
    let one_minus_rho = F::one() - hyper.rho;
    for ((p, a), &g) in param
        .data_mut()
        .iter_mut()
        .zip(state.acc.iter_mut())
        .zip(grad.iter())
    {
        *a = hyper.rho * *a + one_minus_rho * g * g;
        *p = *p - hyper.lr * g / (a.sqrt() + hyper.eps);
    }
    param.grad = Some(grad);
    Ok(())
}

/// Clamp every entry of every tensor to `[-c, c]`. Idempotent.
pub fn clip_weights<'a, F: Scalar>(
    params: impl IntoIterator<Item = &'a mut Tensor<F>>,
    c: F,
) -> Result<()> {
    if c <= F::zero() {
        return Err(Error::InvalidArgument(format!(
            "clip bound must be positive, got {c}"
        )));
    }
    for t in params {
        for v in t.data_mut() {
            *v = v.min(c).max(-c);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_update() {
        // g=1, acc=0, rho=0.9, lr=5e-5, eps=1e-8:
        // acc=0.1, delta = -5e-5/(sqrt(0.1)+1e-8) ~ -1.5811e-4
        let mut p = Tensor::param(vec![1], vec![0.0f64]).unwrap();
        p.grad = Some(vec![1.0]);
        let mut st = OptimizerState::zeros(1);
        let hyper = RmsProp {
            lr: 5e-5,
            rho: 0.9,
            eps: 1e-8,
        };
        rmsprop_step(&mut p, &mut st, &hyper).unwrap();
        let expected = -5e-5 / (0.1f64.sqrt() + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-12);
        assert!((expected - (-1.5811e-4)).abs() < 1e-8);
        assert!((st.acc[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_decays_accumulator_only() {
        let mut p = Tensor::param(vec![2], vec![1.0f64, -2.0]).unwrap();
        p.grad = Some(vec![0.0, 0.0]);
        let mut st = OptimizerState {
            acc: vec![0.4, 0.8],
        };
        let hyper = RmsProp {
            lr: 5e-5,
            rho: 0.9,
            eps: 1e-8,
        };
        rmsprop_step(&mut p, &mut st, &hyper).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert!((st.acc[0] - 0.36).abs() < 1e-15);
        assert!((st.acc[1] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn missing_grad_rejected() {
        let mut p = Tensor::param(vec![1], vec![0.0f32]).unwrap();
        let mut st = OptimizerState::zeros(1);
        let res = rmsprop_step(&mut p, &mut st, &RmsProp::default());
        assert!(matches!(res, Err(Error::MissingGrad)));
    }

    #[test]
    fn clip_clamps_and_is_idempotent() {
        let mut t = Tensor::new(vec![3], vec![0.5f32, -0.005, -0.2]).unwrap();
        clip_weights([&mut t], 0.1).unwrap();
        assert_eq!(t.data(), &[0.1, -0.005, -0.1]);
        let once = t.clone();
        clip_weights([&mut t], 0.1).unwrap();
        assert_eq!(t.data(), once.data());
        // inside range, unchanged
        let mut u = Tensor::new(vec![1], vec![-0.005f32]).unwrap();
        clip_weights([&mut u], 0.01).unwrap();
        assert_eq!(u.data(), &[-0.005]);
    }

    #[test]
    fn clip_requires_positive_bound() {
        let mut t = Tensor::new(vec![1], vec![0.0f32]).unwrap();
        assert!(clip_weights([&mut t], 0.0).is_err());
        assert!(clip_weights([&mut t], -0.1).is_err());
    }
}
