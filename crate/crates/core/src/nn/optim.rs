use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    NAdam,
}

/// NAdam momentum decay.
const PSI: f64 = 0.004;

/// Adam or NAdam with bias correction. Moments are keyed by parameter name
/// and allocated on first use, so one optimizer can drive several stores.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    mu_product: f64,
    moments: HashMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            mu_product: 1.0,
            moments: HashMap::new(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn nadam(lr: f64) -> Self {
        Self::new(OptimizerKind::NAdam, lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter in `stores` from its
    /// accumulated gradient; gradients are zeroed afterwards.
    pub fn step(&mut self, stores: &mut [&mut ParamStore<T>]) {
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc2 = 1.0 - b2.powf(t);

        // Per-step scalar coefficients, computed in f64.
        let (c_m, c_g) = match self.kind {
            OptimizerKind::Adam => (1.0 / (1.0 - b1.powf(t)), 0.0),
            OptimizerKind::NAdam => {
                let mu = b1 * (1.0 - 0.5 * 0.96f64.powf(t * PSI));
                let mu_next = b1 * (1.0 - 0.5 * 0.96f64.powf((t + 1.0) * PSI));
                self.mu_product *= mu;
                (
                    mu_next / (1.0 - self.mu_product * mu_next),
                    (1.0 - mu) / (1.0 - self.mu_product),
                )
            }
        };
        let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
        let (one, lr, eps) = (T::one(), T::from_f64(self.lr), T::from_f64(self.eps));
        let (c_m, c_g, bc2) = (T::from_f64(c_m), T::from_f64(c_g), T::from_f64(bc2));

        for store in stores.iter_mut() {
            for p in store.params_mut().iter_mut() {
                if !p.trainable {
                    p.tensor.zero_grad();
                    continue;
                }
                let n = p.tensor.len();
                let (m, v) = self
                    .moments
                    .entry(p.name.clone())
                    .or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
                let grad = p.tensor.grad().to_vec();
                let data = p.tensor.data_mut();
                for i in 0..n {
                    let g = grad[i];
                    m[i] = b1t * m[i] + (one - b1t) * g;
                    v[i] = b2t * v[i] + (one - b2t) * g * g;
                    let m_hat = c_m * m[i] + c_g * g;
                    let v_hat = v[i] / bc2;
                    data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
                p.tensor.zero_grad();
            }
        }
    }
}

/// Rescales accumulated gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(stores: &mut [&mut ParamStore<T>], max_norm: f64) -> f64 {
    let total: f64 = stores
        .iter()
        .flat_map(|s| s.params().iter().filter(|p| p.trainable))
        .flat_map(|p| p.tensor.grad().iter())
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt();
    if total > max_norm {
        let scale = T::from_f64(max_norm / (total + 1e-6));
        for s in stores.iter_mut() {
            for p in s.params_mut().iter_mut().filter(|p| p.trainable) {
                p.tensor.grad_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::from_f64(&[1], &[v]).unwrap()).unwrap();
        s
    }

    fn set_grad(s: &mut ParamStore<f64>, g: f64) {
        s.get_mut("x").unwrap().tensor.grad_mut()[0] = g;
    }

    fn value(s: &ParamStore<f64>) -> f64 {
        s.get("x").unwrap().tensor.data()[0]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store(1.5);
        let mut opt = Optimizer::adam(1e-3);
        opt.step(&mut [&mut s]);
        assert_eq!(value(&s), 1.5);
    }

    #[test]
    fn first_adam_step_is_lr_times_sign() {
        for g in [3.0, -0.02] {
            let mut s = store(0.0);
            set_grad(&mut s, g);
            let mut opt = Optimizer::adam(0.01);
            opt.step(&mut [&mut s]);
            assert!((value(&s) + 0.01 * f64::signum(g)).abs() < 1e-6);
            assert_eq!(s.get("x").unwrap().tensor.grad()[0], 0.0);
        }
    }

    /// Hand-stepped reference over f(x) = (x - 3)^2.
    fn reference(kind: OptimizerKind, steps: usize) -> f64 {
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v, mut mu_prod) = (0.0f64, 0.0f64, 0.0f64, 1.0f64);
        for t in 1..=steps {
            let t = t as f64;
            let g = 2.0 * (x - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let v_hat = v / (1.0 - b2.powf(t));
            let m_hat = match kind {
                OptimizerKind::Adam => m / (1.0 - b1.powf(t)),
                OptimizerKind::NAdam => {
                    let mu = b1 * (1.0 - 0.5 * 0.96f64.powf(t * 0.004));
                    let mu1 = b1 * (1.0 - 0.5 * 0.96f64.powf((t + 1.0) * 0.004));
                    mu_prod *= mu;
                    mu1 * m / (1.0 - mu_prod * mu1) + (1.0 - mu) * g / (1.0 - mu_prod)
                }
            };
            x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        x
    }

    #[test]
    fn five_step_trajectories() {
        for kind in [OptimizerKind::Adam, OptimizerKind::NAdam] {
            let mut s = store(0.0);
            let mut opt = Optimizer::new(kind, 0.1);
            for _ in 0..5 {
                let x = value(&s);
                set_grad(&mut s, 2.0 * (x - 3.0));
                opt.step(&mut [&mut s]);
            }
            assert!((value(&s) - reference(kind, 5)).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut s = store(1.0);
        s.set_trainable(false);
        set_grad(&mut s, 5.0);
        Optimizer::adam(0.1).step(&mut [&mut s]);
        assert_eq!(value(&s), 1.0);
    }

    #[test]
    fn clipping() {
        let mut s = ParamStore::<f64>::new();
        s.add("v", Tensor::zeros(&[2])).unwrap();
        s.get_mut("v").unwrap().tensor.grad_mut().copy_from_slice(&[3.0, 4.0]);
        let n = clip_grad_norm(&mut [&mut s], 1.0);
        assert_eq!(n, 5.0);
        let g = s.get("v").unwrap().tensor.grad();
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
    }
}
