//! Finite-difference agreement of every layer's backward pass.

use areasweep_tensor::{grad_check, Differentiable, GradCheckConfig, LayerSpec, Network, SampleShape, Shape4, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAYER_TOL: f64 = 1e-6;

/// Values in `±[0.05, 1)`, keeping rectifier kinks well outside the
/// difference step.
fn random_input(rng: &mut impl Rng, shape: Shape4) -> Tensor4<f64> {
    Tensor4::from_fn(shape, |_, _, _, _| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) { v } else { -v }
    })
}

fn check(specs: &[LayerSpec], input: SampleShape, batch: usize, seed: u64) -> f64 {
    check_with(specs, input, batch, GradCheckConfig { seed, ..Default::default() })
}

fn check_with(specs: &[LayerSpec], input: SampleShape, batch: usize, cfg: GradCheckConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::<f64>::new(input, specs, &mut rng).unwrap();
    let x = random_input(&mut rng, input.batch(batch));
    grad_check(&mut net, &x, &cfg).unwrap()
}

fn random_layer_case(kind: usize, rng: &mut impl Rng) -> (Vec<LayerSpec>, SampleShape) {
    let c = rng.gen_range(1..4);
    let h = rng.gen_range(4..8);
    let w = rng.gen_range(4..8);
    let input = SampleShape::new(c, h, w);
    let specs = match kind {
        0 => {
            let kernel = rng.gen_range(1..4);
            vec![LayerSpec::Conv { filters: rng.gen_range(1..4), kernel, stride: rng.gen_range(1..3), padding: rng.gen_range(0..kernel) }]
        }
        1 => {
            let kernel = rng.gen_range(1..4);
            let stride = rng.gen_range(1..3);
            vec![LayerSpec::Deconv {
                filters: rng.gen_range(1..4),
                kernel,
                stride,
                padding: rng.gen_range(0..kernel.min(2)),
                output_padding: rng.gen_range(0..stride),
            }]
        }
        2 => vec![LayerSpec::MaxPool2],
        3 => vec![LayerSpec::Upsample2 { out_h: 2 * h + rng.gen_range(0..2), out_w: 2 * w + rng.gen_range(0..2) }],
        4 => vec![LayerSpec::Dense { units: rng.gen_range(1..6) }],
        _ => vec![LayerSpec::Relu],
    };
    (specs, input)
}

#[test]
fn every_layer_backward_matches_finite_differences() {
    let names = ["conv", "deconv", "maxpool", "upsample", "dense", "relu"];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (kind, name) in names.iter().enumerate() {
        let mut worst = 0.0f64;
        for trial in 0..100 {
            let (specs, input) = random_layer_case(kind, &mut rng);
            let err = check(&specs, input, 2, 1000 * kind as u64 + trial);
            assert!(err < LAYER_TOL, "{name} trial {trial}: {specs:?} on {input:?}: {err:e}");
            worst = worst.max(err);
        }
        println!("{name}: worst relative error {worst:e}");
    }
}

#[test]
fn linear_single_layer_is_exact() {
    // central differences are exact on a linear map up to rounding, so a
    // coarse step keeps rounding out of the comparison
    let cfg = GradCheckConfig { seed: 9, step: 1e-2, ..Default::default() };
    let err = check_with(&[LayerSpec::Dense { units: 3 }], SampleShape::new(2, 3, 3), 4, cfg);
    assert!(err < 1e-9, "{err:e}");
}

/// Backward pass scaled by 1.5: a deliberately wrong gradient.
struct Corrupted(Network<f64>);

impl Differentiable for Corrupted {
    fn eval(&self, x: &Tensor4<f64>) -> areasweep_tensor::Result<Tensor4<f64>> {
        self.0.forward(x)
    }
    fn eval_backward(&mut self, x: &Tensor4<f64>, g: &Tensor4<f64>) -> areasweep_tensor::Result<Tensor4<f64>> {
        let gi = self.0.eval_backward(x, g)?;
        Ok(Tensor4::from_fn(gi.shape(), |n, c, h, w| gi.at(n, c, h, w) * 1.5))
    }
    fn param_count(&self) -> usize {
        self.0.param_count()
    }
    fn param(&self, i: usize) -> f64 {
        self.0.param(i)
    }
    fn set_param(&mut self, i: usize, v: f64) {
        self.0.set_param(i, v)
    }
    fn grad(&self, i: usize) -> f64 {
        self.0.grad(i) * 1.5
    }
}

#[test]
fn corrupted_backward_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let specs = [LayerSpec::Conv { filters: 2, kernel: 3, stride: 1, padding: 1 }, LayerSpec::Relu, LayerSpec::Dense { units: 4 }];
    let net = Network::<f64>::new(SampleShape::new(1, 5, 5), &specs, &mut rng).unwrap();
    let x = random_input(&mut rng, Shape4::new(2, 1, 5, 5));
    let err = grad_check(&mut Corrupted(net), &x, &GradCheckConfig::default()).unwrap();
    assert!(err > 1e-2, "{err:e}");
}
