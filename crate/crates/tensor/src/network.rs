use rand::Rng;

use crate::error::{mismatch, Result, TensorError};
use crate::ops::{self, ConvGeometry};
use crate::tensor::{Scalar, Shape4, Tensor4};

/// Shape-free description of one layer. Input channel counts and extents
/// are resolved when a [`Network`] is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize, stride: usize, padding: usize },
    Deconv { filters: usize, kernel: usize, stride: usize, padding: usize, output_padding: usize },
    MaxPool2,
    Upsample2 { out_h: usize, out_w: usize },
    Dense { units: usize },
    Reshape { c: usize, h: usize, w: usize },
    Relu,
}

impl LayerSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TensorError::InvalidLayer(format!("{self:?}: {m}")));
        match *self {
            LayerSpec::Conv { filters, kernel, stride, .. }
            | LayerSpec::Deconv { filters, kernel, stride, .. } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad("filters, kernel and stride must be at least 1");
                }
            }
            LayerSpec::Dense { units } if units == 0 => return bad("dense width must be at least 1"),
            _ => {}
        }
        Ok(())
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Deconv { .. } | LayerSpec::Dense { .. })
    }
}

/// `(channels, height, width)` of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl SampleShape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn batch(&self, n: usize) -> Shape4 {
        Shape4::new(n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Empty,
    Input(Tensor4<T>),
    Argmax(Vec<usize>, Shape4),
}

#[derive(Debug, Clone)]
pub struct Layer<T> {
    spec: LayerSpec,
    input: SampleShape,
    output: SampleShape,
    weight: Vec<T>,
    bias: Vec<T>,
    grad_weight: Vec<T>,
    grad_bias: Vec<T>,
    cache: Cache<T>,
}

fn resolve(spec: &LayerSpec, input: SampleShape) -> Result<(SampleShape, usize, usize)> {
    spec.validate()?;
    let too_small = || mismatch(format!("{spec:?} cannot consume input {input:?}"));
    Ok(match *spec {
        LayerSpec::Conv { filters, kernel, stride, padding } => {
            let g = ConvGeometry::new(kernel, stride, padding);
            let h = g.conv_out(input.h).ok_or_else(too_small)?;
            let w = g.conv_out(input.w).ok_or_else(too_small)?;
            (SampleShape::new(filters, h, w), filters * input.c * kernel * kernel, filters)
        }
        LayerSpec::Deconv { filters, kernel, stride, padding, output_padding } => {
            if output_padding >= stride {
                return Err(too_small());
            }
            let g = ConvGeometry::new(kernel, stride, padding);
            let h = g.deconv_out(input.h, output_padding).ok_or_else(too_small)?;
            let w = g.deconv_out(input.w, output_padding).ok_or_else(too_small)?;
            (SampleShape::new(filters, h, w), input.c * filters * kernel * kernel, filters)
        }
        LayerSpec::MaxPool2 => {
            if input.h < 2 || input.w < 2 {
                return Err(too_small());
            }
            (SampleShape::new(input.c, input.h / 2, input.w / 2), 0, 0)
        }
        LayerSpec::Upsample2 { out_h, out_w } => {
            let ok = |i: usize, o: usize| o == 2 * i || o == 2 * i + 1;
            if !ok(input.h, out_h) || !ok(input.w, out_w) {
                return Err(too_small());
            }
            (SampleShape::new(input.c, out_h, out_w), 0, 0)
        }
        LayerSpec::Dense { units } => (SampleShape::new(units, 1, 1), units * input.len(), units),
        LayerSpec::Reshape { c, h, w } => {
            let out = SampleShape::new(c, h, w);
            if out.len() != input.len() {
                return Err(too_small());
            }
            (out, 0, 0)
        }
        LayerSpec::Relu => (input, 0, 0),
    })
}

impl<T: Scalar> Layer<T> {
    fn new(spec: LayerSpec, input: SampleShape, rng: &mut impl Rng) -> Result<Self> {
        let (output, n_weight, n_bias) = resolve(&spec, input)?;
        let fan_in = match spec {
            LayerSpec::Conv { kernel, .. } | LayerSpec::Deconv { kernel, .. } => input.c * kernel * kernel,
            LayerSpec::Dense { .. } => input.len(),
            _ => 1,
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = || T::lit(rng.gen_range(-bound..bound));
        let weight: Vec<T> = (0..n_weight).map(|_| draw()).collect();
        let bias: Vec<T> = (0..n_bias).map(|_| draw()).collect();
        Ok(Self {
            spec,
            input,
            output,
            grad_weight: vec![T::zero(); n_weight],
            grad_bias: vec![T::zero(); n_bias],
            weight,
            bias,
            cache: Cache::Empty,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn input_shape(&self) -> SampleShape {
        self.input
    }

    pub fn output_shape(&self) -> SampleShape {
        self.output
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    fn kernel_tensor(&self) -> Tensor4<T> {
        let (a, b, k) = match self.spec {
            LayerSpec::Conv { filters, kernel, .. } => (filters, self.input.c, kernel),
            LayerSpec::Deconv { filters, kernel, .. } => (self.input.c, filters, kernel),
            _ => unreachable!("kernel_tensor on a layer without kernels"),
        };
        Tensor4::from_vec(Shape4::new(a, b, k, k), self.weight.clone()).expect("kernel length fixed at build")
    }

    fn forward(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, Cache<T>)> {
        let xs = x.shape();
        if (xs.c, xs.h, xs.w) != (self.input.c, self.input.h, self.input.w) {
            return Err(mismatch(format!("{:?} expects {:?}, got {xs}", self.spec, self.input)));
        }
        Ok(match self.spec {
            LayerSpec::Conv { kernel, stride, padding, .. } => {
                let g = ConvGeometry::new(kernel, stride, padding);
                (ops::conv_forward(x, &self.kernel_tensor(), &self.bias, g)?, Cache::Input(x.clone()))
            }
            LayerSpec::Deconv { kernel, stride, padding, output_padding, .. } => {
                let g = ConvGeometry::new(kernel, stride, padding);
                let y = ops::deconv_forward(x, &self.kernel_tensor(), &self.bias, g, output_padding)?;
                (y, Cache::Input(x.clone()))
            }
            LayerSpec::MaxPool2 => {
                let p = ops::maxpool2_forward(x)?;
                (p.output, Cache::Argmax(p.argmax, xs))
            }
            LayerSpec::Upsample2 { out_h, out_w } => (ops::upsample2_forward(x, out_h, out_w)?, Cache::Argmax(Vec::new(), xs)),
            LayerSpec::Dense { .. } => (ops::dense_forward(x, &self.weight, &self.bias)?, Cache::Input(x.clone())),
            LayerSpec::Reshape { .. } => (x.clone().reshape(self.output.batch(xs.n))?, Cache::Argmax(Vec::new(), xs)),
            LayerSpec::Relu => (ops::relu_forward(x), Cache::Input(x.clone())),
        })
    }

    fn backward(&mut self, g: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = std::mem::replace(&mut self.cache, Cache::Empty);
        let missing = || mismatch(format!("{:?}: backward without a cached forward pass", self.spec));
        match (self.spec, cache) {
            (LayerSpec::Conv { kernel, stride, padding, .. }, Cache::Input(x)) => {
                let gr = ops::conv_backward(g, &x, &self.kernel_tensor(), ConvGeometry::new(kernel, stride, padding))?;
                self.accumulate(gr.grad_kernels.data(), &gr.grad_bias);
                Ok(gr.grad_input)
            }
            (LayerSpec::Deconv { kernel, stride, padding, .. }, Cache::Input(x)) => {
                let gr = ops::deconv_backward(g, &x, &self.kernel_tensor(), ConvGeometry::new(kernel, stride, padding))?;
                self.accumulate(gr.grad_kernels.data(), &gr.grad_bias);
                Ok(gr.grad_input)
            }
            (LayerSpec::Dense { .. }, Cache::Input(x)) => {
                let gr = ops::dense_backward(g, &x, &self.weight)?;
                self.accumulate(&gr.grad_weight, &gr.grad_bias);
                Ok(gr.grad_input)
            }
            (LayerSpec::Relu, Cache::Input(x)) => ops::relu_backward(g, &x),
            (LayerSpec::MaxPool2, Cache::Argmax(idx, s)) => ops::maxpool2_backward(g, &idx, s),
            (LayerSpec::Upsample2 { .. }, Cache::Argmax(_, s)) => ops::upsample2_backward(g, s),
            (LayerSpec::Reshape { .. }, Cache::Argmax(_, s)) => g.clone().reshape(s),
            _ => Err(missing()),
        }
    }

    fn accumulate(&mut self, gw: &[T], gb: &[T]) {
        for (a, &b) in self.grad_weight.iter_mut().zip(gw) {
            *a += b;
        }
        for (a, &b) in self.grad_bias.iter_mut().zip(gb) {
            *a += b;
        }
    }
}

/// A feed-forward chain of layers with cached activations for backprop.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input: SampleShape,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(input: SampleShape, specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for spec in specs {
            let layer = Layer::new(*spec, shape, rng)?;
            shape = layer.output;
            layers.push(layer);
        }
        Ok(Self { input, layers })
    }

    pub fn input_shape(&self) -> SampleShape {
        self.input
    }

    pub fn output_shape(&self) -> SampleShape {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Inference pass; leaves no cached state.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?.0;
        }
        debug_assert!(cur.is_finite(), "non-finite network output");
        Ok(cur)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let (y, cache) = layer.forward(&cur)?;
            layer.cache = cache;
            cur = y;
        }
        Ok(cur)
    }

    /// Backpropagates `grad_out` through the cached pass, adding parameter
    /// gradients into the gradient buffers. Returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.grad_weight.iter_mut().for_each(|v| *v = T::zero());
            l.grad_bias.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Visits every `(parameters, gradients)` buffer pair in a fixed order.
    pub fn visit_params(&mut self, mut f: impl FnMut(usize, &mut [T], &[T])) {
        let mut slot = 0;
        for l in &mut self.layers {
            if l.spec.has_params() {
                f(slot, &mut l.weight, &l.grad_weight);
                f(slot + 1, &mut l.bias, &l.grad_bias);
                slot += 2;
            }
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.grad_weight.iter().chain(&l.grad_bias).all(|v| v.is_finite()))
    }

    /// Copies parameter values from a network of identical architecture.
    pub fn copy_params_from(&mut self, other: &Network<T>) -> Result<()> {
        if self.specs() != other.specs() || self.input != other.input {
            return Err(mismatch("copy_params_from between different architectures"));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weight.copy_from_slice(&src.weight);
            dst.bias.copy_from_slice(&src.bias);
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        Network {
            input: self.input,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    input: l.input,
                    output: l.output,
                    weight: conv(&l.weight),
                    bias: conv(&l.bias),
                    grad_weight: conv(&l.grad_weight),
                    grad_bias: conv(&l.grad_bias),
                    cache: Cache::Empty,
                })
                .collect(),
        }
    }

    /// Rebuilds a network from specs and flat parameter buffers (weights then
    /// biases, layer by layer).
    pub(crate) fn from_parts(input: SampleShape, specs: &[LayerSpec], buffers: Vec<Vec<T>>) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        let mut bufs = buffers.into_iter();
        for spec in specs {
            let (output, n_weight, n_bias) = resolve(spec, shape)?;
            let (weight, bias) = if spec.has_params() {
                let w = bufs.next().ok_or_else(|| mismatch("missing weight buffer"))?;
                let b = bufs.next().ok_or_else(|| mismatch("missing bias buffer"))?;
                (w, b)
            } else {
                (Vec::new(), Vec::new())
            };
            if weight.len() != n_weight || bias.len() != n_bias {
                return Err(mismatch(format!("{spec:?}: parameter buffer lengths do not match")));
            }
            layers.push(Layer {
                spec: *spec,
                input: shape,
                output,
                grad_weight: vec![T::zero(); n_weight],
                grad_bias: vec![T::zero(); n_bias],
                weight,
                bias,
                cache: Cache::Empty,
            });
            shape = output;
        }
        if bufs.next().is_some() {
            return Err(mismatch("trailing parameter buffers"));
        }
        Ok(Self { input, layers })
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weight.len() {
                return (li, false, i);
            }
            i -= l.weight.len();
            if i < l.bias.len() {
                return (li, true, i);
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, i: usize) -> T {
        let (l, is_bias, j) = self.locate(i);
        if is_bias { self.layers[l].bias[j] } else { self.layers[l].weight[j] }
    }

    pub fn set_param(&mut self, i: usize, v: T) {
        let (l, is_bias, j) = self.locate(i);
        if is_bias {
            self.layers[l].bias[j] = v;
        } else {
            self.layers[l].weight[j] = v;
        }
    }

    pub fn grad(&self, i: usize) -> T {
        let (l, is_bias, j) = self.locate(i);
        if is_bias { self.layers[l].grad_bias[j] } else { self.layers[l].grad_weight[j] }
    }
}
