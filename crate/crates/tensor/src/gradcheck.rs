//! Central finite-difference checks of backpropagated gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

use crate::error::Result;
use crate::network::Network;
use crate::tensor::Tensor4;

/// Anything with a flat parameter vector and a reverse-mode pass.
pub trait Differentiable {
    fn eval(&self, x: &Tensor4<f64>) -> Result<Tensor4<f64>>;
    /// Clears parameter gradients, then backpropagates `grad_out` through a
    /// fresh forward pass of `x`. Returns the input gradient.
    fn eval_backward(&mut self, x: &Tensor4<f64>, grad_out: &Tensor4<f64>) -> Result<Tensor4<f64>>;
    fn param_count(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);
    fn grad(&self, i: usize) -> f64;
}

impl Differentiable for Network<f64> {
    fn eval(&self, x: &Tensor4<f64>) -> Result<Tensor4<f64>> {
        self.forward(x)
    }

    fn eval_backward(&mut self, x: &Tensor4<f64>, grad_out: &Tensor4<f64>) -> Result<Tensor4<f64>> {
        self.zero_grad();
        self.forward_train(x)?;
        self.backward(grad_out)
    }

    fn param_count(&self) -> usize {
        Network::param_count(self)
    }

    fn param(&self, i: usize) -> f64 {
        Network::param(self, i)
    }

    fn set_param(&mut self, i: usize, v: f64) {
        Network::set_param(self, i, v)
    }

    fn grad(&self, i: usize) -> f64 {
        Network::grad(self, i)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Parameter coordinates sampled (all of them if the model has fewer).
    pub param_coords: usize,
    /// Input coordinates sampled.
    pub input_coords: usize,
    /// Central-difference half step.
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { param_coords: 200, input_coords: 50, step: 1e-5, floor: 1e-3, seed: 0 }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Maximum relative error between backprop and central differences of the
/// scalar loss `sum(output * proj)` for a fixed random projection `proj`.
pub fn grad_check<M: Differentiable>(model: &mut M, input: &Tensor4<f64>, cfg: &GradCheckConfig) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let out_shape = model.eval(input)?.shape();
    let proj = Tensor4::from_fn(out_shape, |_, _, _, _| rng.gen_range(-1.0..1.0));
    let loss = |m: &M, x: &Tensor4<f64>| -> Result<f64> {
        Ok(m.eval(x)?.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
    };

    let grad_input = model.eval_backward(input, &proj)?;
    let h = cfg.step;
    let mut worst = 0.0f64;

    let n_params = model.param_count();
    let picks = sample(&mut rng, n_params, cfg.param_coords.min(n_params));
    for i in picks.iter() {
        let analytic = model.grad(i);
        let orig = model.param(i);
        model.set_param(i, orig + h);
        let up = loss(model, input)?;
        model.set_param(i, orig - h);
        let down = loss(model, input)?;
        model.set_param(i, orig);
        worst = worst.max(relative_error(analytic, (up - down) / (2.0 * h), cfg.floor));
    }

    let n_in = input.data().len();
    let picks = sample(&mut rng, n_in, cfg.input_coords.min(n_in));
    let mut x = input.clone();
    for i in picks.iter() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = loss(model, &x)?;
        x.data_mut()[i] = orig - h;
        let down = loss(model, &x)?;
        x.data_mut()[i] = orig;
        worst = worst.max(relative_error(grad_input.data()[i], (up - down) / (2.0 * h), cfg.floor));
    }
    Ok(worst)
}
