//! Strided 2-d cross-correlation and its transpose.
//!
//! Both layer kinds are expressed through one pairing of a "small" and a "big"
//! spatial tensor. For a convolution the big side is the input and the small
//! side the output; for a transposed convolution it is the other way around.
//! Kernels are always laid out `[small_channels][big_channels][k][k]`, which is
//! `(out, in, k, k)` for convolutions and `(in, out, k, k)` for deconvolutions.
//! Position `o` on the small side touches big position `o * stride + k - padding`.

use crate::error::{mismatch, Result};
use super::kernels::{axpy, dot};
use crate::tensor::{Scalar, Shape4, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self { kernel, stride, padding }
    }

    /// Output extent of a convolution over `input` cells, `None` if the
    /// kernel does not fit.
    pub fn conv_out(&self, input: usize) -> Option<usize> {
        if self.kernel == 0 || self.stride == 0 || input == 0 {
            return None;
        }
        let padded = input + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    /// Output extent of the transposed convolution.
    pub fn deconv_out(&self, input: usize, output_padding: usize) -> Option<usize> {
        if self.kernel == 0 || self.stride == 0 || input == 0 {
            return None;
        }
        ((input - 1) * self.stride + self.kernel + output_padding)
            .checked_sub(2 * self.padding)
            .filter(|&v| v > 0)
    }

    /// Output padding that makes the transposed convolution restore an
    /// extent of `input` from `conv_out(input)`.
    pub fn output_padding_for(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.kernel) % self.stride
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub grad_input: Tensor4<T>,
    pub grad_kernels: Tensor4<T>,
    pub grad_bias: Vec<T>,
}

#[derive(Clone, Copy)]
struct Pairing {
    n: usize,
    sc: usize,
    sh: usize,
    sw: usize,
    bc: usize,
    bh: usize,
    bw: usize,
    g: ConvGeometry,
}

/// Half-open range of small-side positions `o` for which
/// `o * stride + offset - padding` lands inside `[0, big)`.
#[inline]
fn valid_range(offset: usize, g: ConvGeometry, small: usize, big: usize) -> (usize, usize) {
    let s = g.stride;
    let start = if g.padding > offset { (g.padding - offset).div_ceil(s) } else { 0 };
    if big + g.padding < offset + 1 {
        return (0, 0);
    }
    let last = (big - 1 + g.padding - offset) / s;
    let end = small.min(last + 1);
    (start.min(end), end)
}

// The big side is unfolded into a `K x P` matrix with rows `(bc, kh, kw)` and
// columns `(n, oh, ow)`, and the small side is viewed as `sc x P`. All three
// primitives then reduce to long contiguous row operations.
impl Pairing {
    #[inline]
    fn ranges(&self, kh: usize, kw: usize) -> ((usize, usize), (usize, usize)) {
        (
            valid_range(kh, self.g, self.sh, self.bh),
            valid_range(kw, self.g, self.sw, self.bw),
        )
    }

    fn rows(&self) -> usize {
        self.bc * self.g.kernel * self.g.kernel
    }

    fn cols(&self) -> usize {
        self.n * self.sh * self.sw
    }

    /// Visits every in-bounds `(row, column run, big offset run)` of the unfolding.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let k = self.g.kernel;
        let (s, p) = (self.g.stride, self.g.padding);
        let (splane, bplane) = (self.sh * self.sw, self.bh * self.bw);
        for bc in 0..self.bc {
            for kh in 0..k {
                for kw in 0..k {
                    let row = (bc * k + kh) * k + kw;
                    let ((oh0, oh1), (ow0, ow1)) = self.ranges(kh, kw);
                    if ow0 >= ow1 {
                        continue;
                    }
                    for n in 0..self.n {
                        for oh in oh0..oh1 {
                            let ih = oh * s + kh - p;
                            let col = n * splane + oh * self.sw + ow0;
                            let b = (n * self.bc + bc) * bplane + ih * self.bw + ow0 * s + kw - p;
                            f(row, col, b, ow1 - ow0);
                        }
                    }
                }
            }
        }
    }

    fn unfold<T: Scalar>(&self, big: &[T]) -> Vec<T> {
        let (p, s) = (self.cols(), self.g.stride);
        let mut m = vec![T::zero(); self.rows() * p];
        self.for_each_run(|row, col, b, len| {
            let dst = &mut m[row * p + col..][..len];
            if s == 1 {
                dst.copy_from_slice(&big[b..b + len]);
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = big[b + j * s];
                }
            }
        });
        m
    }

    fn fold_add<T: Scalar>(&self, m: &[T], big: &mut [T]) {
        let (p, s) = (self.cols(), self.g.stride);
        self.for_each_run(|row, col, b, len| {
            let src = &m[row * p + col..][..len];
            if s == 1 {
                for (d, &v) in big[b..b + len].iter_mut().zip(src) {
                    *d += v;
                }
            } else {
                for (j, &v) in src.iter().enumerate() {
                    big[b + j * s] += v;
                }
            }
        });
    }

    /// `[n][sc][pix]` to `[sc][n][pix]`.
    fn small_rows<T: Scalar>(&self, small: &[T]) -> Vec<T> {
        let plane = self.sh * self.sw;
        let mut r = vec![T::zero(); self.sc * self.cols()];
        for n in 0..self.n {
            for c in 0..self.sc {
                r[(c * self.n + n) * plane..][..plane].copy_from_slice(&small[(n * self.sc + c) * plane..][..plane]);
            }
        }
        r
    }

    /// small += K (*) big
    fn gather<T: Scalar>(&self, big: &[T], kernels: &[T], small: &mut [T]) {
        let (kr, p) = (self.rows(), self.cols());
        let m = self.unfold(big);
        let plane = self.sh * self.sw;
        let mut acc = vec![T::zero(); p];
        for c in 0..self.sc {
            acc.iter_mut().for_each(|v| *v = T::zero());
            for r in 0..kr {
                axpy(&mut acc, kernels[c * kr + r], &m[r * p..][..p]);
            }
            for n in 0..self.n {
                let dst = &mut small[(n * self.sc + c) * plane..][..plane];
                for (d, &v) in dst.iter_mut().zip(&acc[n * plane..][..plane]) {
                    *d += v;
                }
            }
        }
    }

    /// big += K^T (*) small
    fn scatter<T: Scalar>(&self, small: &[T], kernels: &[T], big: &mut [T]) {
        let (kr, p) = (self.rows(), self.cols());
        let rows = self.small_rows(small);
        let mut m = vec![T::zero(); kr * p];
        for r in 0..kr {
            let dst = &mut m[r * p..][..p];
            for c in 0..self.sc {
                axpy(dst, kernels[c * kr + r], &rows[c * p..][..p]);
            }
        }
        self.fold_add(&m, big);
    }

    /// dK[sc][bc][kh][kw] += sum small * big
    fn kernel_grad<T: Scalar>(&self, small: &[T], big: &[T], grad: &mut [T]) {
        let (kr, p) = (self.rows(), self.cols());
        let rows = self.small_rows(small);
        let m = self.unfold(big);
        for c in 0..self.sc {
            let a = &rows[c * p..][..p];
            for r in 0..kr {
                grad[c * kr + r] += dot(a, &m[r * p..][..p]);
            }
        }
    }
}

fn check_kernels<T: Scalar>(kernels: &Tensor4<T>, g: ConvGeometry) -> Result<()> {
    let ks = kernels.shape();
    if ks.h != g.kernel || ks.w != g.kernel {
        return Err(mismatch(format!("kernel tensor {ks} does not match kernel size {}", g.kernel)));
    }
    if g.kernel == 0 || g.stride == 0 {
        return Err(mismatch("kernel size and stride must be at least 1"));
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut Tensor4<T>, bias: &[T]) {
    let sh = out.shape();
    let plane = sh.plane();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let b = bias[i % sh.c];
        chunk.iter_mut().for_each(|v| *v = b);
    }
}

fn bias_grad<T: Scalar>(grad_out: &Tensor4<T>) -> Vec<T> {
    let sh = grad_out.shape();
    let mut g = vec![T::zero(); sh.c];
    for (i, chunk) in grad_out.data().chunks(sh.plane()).enumerate() {
        g[i % sh.c] += chunk.iter().copied().sum::<T>();
    }
    g
}

/// Cross-correlation of `input (n, ic, h, w)` with `kernels (oc, ic, k, k)`.
pub fn conv_forward<T: Scalar>(
    input: &Tensor4<T>,
    kernels: &Tensor4<T>,
    bias: &[T],
    geom: ConvGeometry,
) -> Result<Tensor4<T>> {
    check_kernels(kernels, geom)?;
    let (is, ks) = (input.shape(), kernels.shape());
    if ks.c != is.c {
        return Err(mismatch(format!("conv kernels {ks} against input {is}")));
    }
    if bias.len() != ks.n {
        return Err(mismatch(format!("{} biases for {} filters", bias.len(), ks.n)));
    }
    let (oh, ow) = match (geom.conv_out(is.h), geom.conv_out(is.w)) {
        (Some(h), Some(w)) => (h, w),
        _ => return Err(mismatch(format!("input {is} smaller than kernel {}", geom.kernel))),
    };
    let mut out = Tensor4::zeros(Shape4::new(is.n, ks.n, oh, ow));
    add_bias(&mut out, bias);
    let pairing = Pairing { n: is.n, sc: ks.n, sh: oh, sw: ow, bc: is.c, bh: is.h, bw: is.w, g: geom };
    pairing.gather(input.data(), kernels.data(), out.data_mut());
    Ok(out)
}

pub fn conv_backward<T: Scalar>(
    grad_out: &Tensor4<T>,
    input: &Tensor4<T>,
    kernels: &Tensor4<T>,
    geom: ConvGeometry,
) -> Result<ConvGrads<T>> {
    check_kernels(kernels, geom)?;
    let (is, ks, gs) = (input.shape(), kernels.shape(), grad_out.shape());
    let expected = (geom.conv_out(is.h), geom.conv_out(is.w));
    if ks.c != is.c || gs.n != is.n || gs.c != ks.n || expected != (Some(gs.h), Some(gs.w)) {
        return Err(mismatch(format!("conv backward: grad {gs}, input {is}, kernels {ks}")));
    }
    let pairing = Pairing { n: is.n, sc: ks.n, sh: gs.h, sw: gs.w, bc: is.c, bh: is.h, bw: is.w, g: geom };
    let mut grad_input = Tensor4::zeros(is);
    pairing.scatter(grad_out.data(), kernels.data(), grad_input.data_mut());
    let mut grad_kernels = Tensor4::zeros(ks);
    pairing.kernel_grad(grad_out.data(), input.data(), grad_kernels.data_mut());
    Ok(ConvGrads { grad_input, grad_kernels, grad_bias: bias_grad(grad_out) })
}

/// Transposed convolution of `input (n, ic, h, w)` with `kernels (ic, oc, k, k)`.
pub fn deconv_forward<T: Scalar>(
    input: &Tensor4<T>,
    kernels: &Tensor4<T>,
    bias: &[T],
    geom: ConvGeometry,
    output_padding: usize,
) -> Result<Tensor4<T>> {
    check_kernels(kernels, geom)?;
    let (is, ks) = (input.shape(), kernels.shape());
    if ks.n != is.c {
        return Err(mismatch(format!("deconv kernels {ks} against input {is}")));
    }
    if bias.len() != ks.c {
        return Err(mismatch(format!("{} biases for {} filters", bias.len(), ks.c)));
    }
    if output_padding >= geom.stride.max(1) {
        return Err(mismatch(format!("output padding {output_padding} must be below stride {}", geom.stride)));
    }
    let (oh, ow) = match (geom.deconv_out(is.h, output_padding), geom.deconv_out(is.w, output_padding)) {
        (Some(h), Some(w)) => (h, w),
        _ => return Err(mismatch(format!("deconv of {is} produces an empty output"))),
    };
    let mut out = Tensor4::zeros(Shape4::new(is.n, ks.c, oh, ow));
    add_bias(&mut out, bias);
    let pairing = Pairing { n: is.n, sc: is.c, sh: is.h, sw: is.w, bc: ks.c, bh: oh, bw: ow, g: geom };
    pairing.scatter(input.data(), kernels.data(), out.data_mut());
    Ok(out)
}

pub fn deconv_backward<T: Scalar>(
    grad_out: &Tensor4<T>,
    input: &Tensor4<T>,
    kernels: &Tensor4<T>,
    geom: ConvGeometry,
) -> Result<ConvGrads<T>> {
    check_kernels(kernels, geom)?;
    let (is, ks, gs) = (input.shape(), kernels.shape(), grad_out.shape());
    if ks.n != is.c || gs.n != is.n || gs.c != ks.c {
        return Err(mismatch(format!("deconv backward: grad {gs}, input {is}, kernels {ks}")));
    }
    let pairing = Pairing { n: is.n, sc: is.c, sh: is.h, sw: is.w, bc: ks.c, bh: gs.h, bw: gs.w, g: geom };
    let mut grad_input = Tensor4::zeros(is);
    pairing.gather(grad_out.data(), kernels.data(), grad_input.data_mut());
    let mut grad_kernels = Tensor4::zeros(ks);
    pairing.kernel_grad(input.data(), grad_out.data(), grad_kernels.data_mut());
    Ok(ConvGrads { grad_input, grad_kernels, grad_bias: bias_grad(grad_out) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape4, v: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec(shape, v.to_vec()).unwrap()
    }

    /// Direct-sum reference, independent of the pairing kernels.
    fn naive_conv(x: &Tensor4<f64>, k: &Tensor4<f64>, b: &[f64], g: ConvGeometry) -> Tensor4<f64> {
        let (xs, ks) = (x.shape(), k.shape());
        let oh = g.conv_out(xs.h).unwrap();
        let ow = g.conv_out(xs.w).unwrap();
        Tensor4::from_fn(Shape4::new(xs.n, ks.n, oh, ow), |n, oc, i, j| {
            let mut acc = b[oc];
            for ic in 0..xs.c {
                for a in 0..g.kernel {
                    for c in 0..g.kernel {
                        let y = (i * g.stride + a) as isize - g.padding as isize;
                        let z = (j * g.stride + c) as isize - g.padding as isize;
                        if y >= 0 && z >= 0 && (y as usize) < xs.h && (z as usize) < xs.w {
                            acc += k.at(oc, ic, a, c) * x.at(n, ic, y as usize, z as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor4::from_fn(Shape4::new(1, 1, 3, 4), |_, _, h, w| (h * 4 + w) as f64);
        let k = t(Shape4::new(1, 1, 1, 1), &[1.0]);
        let y = conv_forward(&x, &k, &[0.0], ConvGeometry::new(1, 1, 0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_kernel_sums_windows() {
        let x = t(Shape4::new(1, 1, 3, 3), &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let k = Tensor4::filled(Shape4::new(1, 1, 2, 2), 1.0);
        let y = conv_forward(&x, &k, &[0.0], ConvGeometry::new(2, 1, 0)).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor4::zeros(Shape4::new(2, 3, 5, 5));
        let k = Tensor4::filled(Shape4::new(4, 3, 3, 3), 0.7);
        let bias = [0.1, -0.2, 0.3, 0.0];
        let y = conv_forward(&x, &k, &bias, ConvGeometry::new(3, 2, 1)).unwrap();
        for n in 0..2 {
            for c in 0..4 {
                for h in 0..3 {
                    for w in 0..3 {
                        assert_eq!(y.at(n, c, h, w), bias[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn matches_direct_sum_with_stride_and_padding() {
        for &(h, w, k, s, p) in &[(7, 6, 3, 2, 1), (20, 20, 5, 3, 0), (3, 3, 4, 2, 1), (1, 1, 4, 2, 2), (5, 4, 2, 1, 0)] {
            let x = Tensor4::from_fn(Shape4::new(2, 2, h, w), |n, c, i, j| ((n * 7 + c * 5 + i * 3 + j) % 11) as f64 - 5.0);
            let kern = Tensor4::from_fn(Shape4::new(3, 2, k, k), |o, c, a, b| ((o * 3 + c * 2 + a + b * 5) % 7) as f64 * 0.1 - 0.3);
            let b = [0.5, -1.0, 0.25];
            let g = ConvGeometry::new(k, s, p);
            let fast = conv_forward(&x, &kern, &b, g).unwrap();
            let slow = naive_conv(&x, &kern, &b, g);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_pixel_grad_recovers_input_patch() {
        let x = Tensor4::from_fn(Shape4::new(1, 1, 4, 4), |_, _, h, w| (h * 4 + w) as f64);
        let k = Tensor4::filled(Shape4::new(1, 1, 2, 2), 1.0);
        let g = ConvGeometry::new(2, 1, 0);
        let mut grad = Tensor4::zeros(Shape4::new(1, 1, 3, 3));
        grad.set(0, 0, 1, 2, 1.0);
        let grads = conv_backward(&grad, &x, &k, g).unwrap();
        // output (1, 2) reads input rows 1..3, cols 2..4
        assert_eq!(grads.grad_kernels.data(), &[6.0, 7.0, 10.0, 11.0]);
        assert_eq!(grads.grad_bias, vec![1.0]);
    }

    #[test]
    fn zero_grad_gives_zero_gradients() {
        let x = Tensor4::filled(Shape4::new(1, 2, 4, 4), 1.5);
        let k = Tensor4::filled(Shape4::new(3, 2, 3, 3), 0.5);
        let g = ConvGeometry::new(3, 1, 1);
        let grads = conv_backward(&Tensor4::zeros(Shape4::new(1, 3, 4, 4)), &x, &k, g).unwrap();
        assert!(grads.grad_input.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_kernels.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deconv_restores_conv_extent() {
        for input in 1..30 {
            for k in 1..6 {
                for s in 1..4 {
                    for p in 0..k {
                        let g = ConvGeometry::new(k, s, p);
                        if let Some(out) = g.conv_out(input) {
                            let op = g.output_padding_for(input);
                            assert!(op < s);
                            assert_eq!(g.deconv_out(out, op), Some(input), "in {input} k {k} s {s} p {p}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, deconv(y)> with shared kernels and zero bias
        let g = ConvGeometry::new(3, 2, 1);
        let x = Tensor4::from_fn(Shape4::new(1, 2, 7, 7), |_, c, i, j| ((c + 2 * i + 3 * j) % 5) as f64 - 2.0);
        let k = Tensor4::from_fn(Shape4::new(3, 2, 3, 3), |o, c, a, b| (o as f64 - c as f64) * 0.3 + (a * b) as f64 * 0.1);
        let cx = conv_forward(&x, &k, &[0.0; 3], g).unwrap();
        let y = Tensor4::from_fn(cx.shape(), |_, c, i, j| ((c * 3 + i + j) % 4) as f64 - 1.5);
        let dy = deconv_forward(&y, &k, &[0.0; 2], g, g.output_padding_for(7)).unwrap();
        assert_eq!(dy.shape(), x.shape());
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor4::<f64>::zeros(Shape4::new(1, 2, 4, 4));
        let k = Tensor4::zeros(Shape4::new(1, 3, 3, 3));
        assert!(conv_forward(&x, &k, &[0.0], ConvGeometry::new(3, 1, 0)).is_err());
        let k = Tensor4::zeros(Shape4::new(1, 2, 5, 5));
        assert!(conv_forward(&x, &k, &[0.0], ConvGeometry::new(5, 1, 0)).is_err());
        assert!(conv_forward(&x, &k, &[0.0, 1.0], ConvGeometry::new(5, 1, 1)).is_err());
    }
}
