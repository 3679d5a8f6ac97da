use crate::error::{Result, TensorError};
use crate::network::Network;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Adaptive moments with bias correction.
    Adam,
    /// Plain gradient descent.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-buffer optimizer state. Buffers are addressed by the slot order of
/// [`Network::visit_params`].
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, steps: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update over explicit `(params, grads)` buffers. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step_buffers(&mut self, buffers: &mut [(&mut [T], &[T])]) -> Result<()> {
        if let Some(buffer) = buffers.iter().position(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(TensorError::NonFiniteGradient { buffer });
        }
        self.steps += 1;
        for (slot, (p, g)) in buffers.iter_mut().enumerate() {
            self.apply(slot, p, g);
        }
        Ok(())
    }

    /// One update over every parameter buffer of `net` using its
    /// accumulated gradients.
    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        if !net.grads_finite() {
            let mut bad = 0;
            net.visit_params(|slot, _, g| {
                if bad == 0 && g.iter().any(|v| !v.is_finite()) {
                    bad = slot;
                }
            });
            return Err(TensorError::NonFiniteGradient { buffer: bad });
        }
        self.steps += 1;
        net.visit_params(|slot, p, g| self.apply(slot, p, g));
        Ok(())
    }

    fn apply(&mut self, slot: usize, params: &mut [T], grads: &[T]) {
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                let lr = T::lit(lr);
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                while self.first.len() <= slot {
                    self.first.push(Vec::new());
                    self.second.push(Vec::new());
                }
                if self.first[slot].len() != params.len() {
                    self.first[slot] = vec![T::zero(); params.len()];
                    self.second[slot] = vec![T::zero(); params.len()];
                }
                let c = &self.config;
                let t = self.steps as i32;
                let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
                let correction1 = T::lit(1.0 - c.beta1.powi(t));
                let correction2 = T::lit(1.0 - c.beta2.powi(t));
                let (lr, eps) = (T::lit(lr), T::lit(c.epsilon));
                let one = T::one();
                let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let m_hat = m[i] / correction1;
                    let v_hat = v[i] / correction2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Optimizer::<f64>::new(OptimizerConfig::default());
        let mut p = vec![1.0, -2.0];
        let g = vec![0.0, 0.0];
        for _ in 0..10 {
            opt.step_buffers(&mut [(&mut p, &g)]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn quadratic_converges_to_minimum() {
        // loss (x - 3)^2, analytic minimum at 3
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let cfg = OptimizerConfig { kind, learning_rate: if kind == OptimizerKind::Adam { 0.05 } else { 0.1 }, ..Default::default() };
            let mut opt = Optimizer::<f64>::new(cfg);
            let mut x = vec![-4.0];
            for _ in 0..1000 {
                let g = vec![2.0 * (x[0] - 3.0)];
                opt.step_buffers(&mut [(&mut x, &g)]).unwrap();
            }
            assert!((x[0] - 3.0).abs() < 1e-4, "{kind:?} ended at {}", x[0]);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut opt = Optimizer::<f32>::new(OptimizerConfig::default());
        let mut p = vec![1.0f32];
        let g = vec![f32::NAN];
        assert!(matches!(
            opt.step_buffers(&mut [(&mut p, &g)]),
            Err(TensorError::NonFiniteGradient { buffer: 0 })
        ));
        assert_eq!(p, vec![1.0]);
        assert_eq!(opt.steps(), 0);
    }
}
