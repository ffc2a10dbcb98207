//! Squared-error loss and first-order optimizers.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{contract, invalid, Result};
use crate::nn::{Gradients, LiftingNetwork};
use crate::scalar::Scalar;

/// Mean over the batch of the squared Euclidean error per sample, and its
/// gradient `2·(pred − target)/N`.
pub fn mse_loss<T: Scalar>(pred: ArrayView2<T>, target: ArrayView2<T>) -> Result<(T, Array2<T>)> {
    if pred.dim() != target.dim() {
        return Err(invalid(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(invalid("loss needs at least one sample"));
    }
    let n = T::from_usize(pred.nrows()).unwrap();
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| *d * *d).sum::<T>() / n;
    let grad = diff * (T::lit(2.0) / n);
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer together with its per-parameter state.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, net: &LiftingNetwork<T>) -> Self {
        let zeros = || net.parameters().iter().map(|p| vec![T::zero(); p.len()]).collect();
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (zeros(), zeros()),
        };
        Self {
            kind,
            first,
            second,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr`, then the max-norm
    /// projection when the network has it enabled.
    pub fn step(&mut self, net: &mut LiftingNetwork<T>, grads: &Gradients<T>, lr: T) -> Result<()> {
        {
            let params = net.parameters_mut();
            if params.len() != grads.tensors.len() || params.iter().zip(&grads.tensors).any(|(p, g)| p.len() != g.len())
            {
                return Err(contract("gradient shapes do not match the network parameters"));
            }
            self.step += 1;
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in params.into_iter().zip(&grads.tensors) {
                        for (w, d) in p.iter_mut().zip(g) {
                            *w -= lr * *d;
                        }
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                    let t = self.step as i32;
                    let c1 = T::one() - b1.powi(t);
                    let c2 = T::one() - b2.powi(t);
                    for (((p, g), m), v) in params
                        .into_iter()
                        .zip(&grads.tensors)
                        .zip(&mut self.first)
                        .zip(&mut self.second)
                    {
                        for (((w, d), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                            *m = b1 * *m + (T::one() - b1) * *d;
                            *v = b2 * *v + (T::one() - b2) * *d * *d;
                            let m_hat = *m / c1;
                            let v_hat = *v / c2;
                            *w -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
        }
        if net.arch.flags.max_norm {
            net.apply_max_norm(T::lit(net.arch.maxnorm_c));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, Flags};
    use ndarray::array;

    #[test]
    fn loss_examples() {
        let p = array![[1.0f64, 2.0], [3.0, 4.0]];
        let (l, g) = mse_loss(p.view(), p.view()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        let (l, g) = mse_loss(array![[3.0f64, 4.0]].view(), array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(l, 25.0);
        assert_eq!(g, array![[6.0, 8.0]]);
        assert!(mse_loss(p.view(), array![[1.0]].view()).is_err());
    }

    fn one_param_net() -> LiftingNetwork<f64> {
        let arch = Architecture {
            dropout_rate: 0.0,
            ..Architecture::new(1, 0, Flags::NONE)
        };
        let mut net = LiftingNetwork::init(1, 1, arch, 0).unwrap();
        for p in net.parameters_mut() {
            p.fill(1.0);
        }
        net
    }

    fn constant_grads(net: &LiftingNetwork<f64>, g: f64) -> Gradients<f64> {
        Gradients {
            tensors: net.parameters().iter().map(|p| vec![g; p.len()]).collect(),
        }
    }

    #[test]
    fn sgd_step() {
        let mut net = one_param_net();
        let grads = constant_grads(&net, 2.0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &net);
        opt.step(&mut net, &grads, 0.1).unwrap();
        assert!(net
            .parameters()
            .iter()
            .flat_map(|p| p.iter())
            .all(|w| (*w - 0.8).abs() < 1e-15));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m = 0.1·g, v = 0.001·g², bias-corrected to g and g²: step = lr·g/(|g| + eps)
        let mut net = one_param_net();
        let grads = constant_grads(&net, 0.37);
        let mut opt = Optimizer::new(OptimizerKind::default(), &net);
        opt.step(&mut net, &grads, 1e-3).unwrap();
        let want = 1.0 - 1e-3 * 0.37 / (0.37 + 1e-8);
        for w in net.parameters().iter().flat_map(|p| p.iter()) {
            assert!((w - want).abs() < 1e-15, "{w} vs {want}");
        }
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::default()] {
            let mut net = one_param_net();
            let before = net.clone();
            let mut opt = Optimizer::new(kind, &net);
            opt.step(&mut net, &constant_grads(&before, 0.0), 0.5).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut net = one_param_net();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &net);
        let bad = Gradients {
            tensors: vec![vec![0.0]],
        };
        assert!(matches!(
            opt.step(&mut net, &bad, 0.1),
            Err(crate::Error::ContractViolation(_))
        ));
    }
}
