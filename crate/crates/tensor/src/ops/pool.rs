use crate::error::{mismatch, Result};
use crate::tensor::{Scalar, Shape4, Tensor4};

/// Result of a 2x2 stride-2 max-pool: the pooled values and, for every
/// output element, the flat index of the input element that won.
#[derive(Debug, Clone)]
pub struct Pooled<T> {
    pub output: Tensor4<T>,
    pub argmax: Vec<usize>,
}

/// 2x2 window, stride 2, trailing odd rows/columns dropped. Ties go to the
/// first element in row-major window order.
pub fn maxpool2_forward<T: Scalar>(input: &Tensor4<T>) -> Result<Pooled<T>> {
    let s = input.shape();
    if s.h < 2 || s.w < 2 {
        return Err(mismatch(format!("max-pool needs at least 2x2 spatial input, got {s}")));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let out_shape = Shape4::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let x = input.data();
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + (2 * i) * s.w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * s.w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled { output: Tensor4::from_vec(out_shape, out)?, argmax })
}

pub fn maxpool2_backward<T: Scalar>(
    grad_out: &Tensor4<T>,
    argmax: &[usize],
    input_shape: Shape4,
) -> Result<Tensor4<T>> {
    let gs = grad_out.shape();
    let expected = Shape4::new(input_shape.n, input_shape.c, input_shape.h / 2, input_shape.w / 2);
    if gs != expected || argmax.len() != gs.len() {
        return Err(mismatch(format!("max-pool backward of {gs} for input {input_shape}")));
    }
    let mut grad = Tensor4::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(grad)
}

/// Nearest-neighbour upsampling by two onto an explicit target extent, so
/// odd extents lost by pooling can be restored. Source row is
/// `min(i / 2, h - 1)`.
pub fn upsample2_forward<T: Scalar>(input: &Tensor4<T>, out_h: usize, out_w: usize) -> Result<Tensor4<T>> {
    let s = input.shape();
    check_upsample(s, out_h, out_w)?;
    let x = input.data();
    let out_shape = Shape4::new(s.n, s.c, out_h, out_w);
    let mut out = Vec::with_capacity(out_shape.len());
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for i in 0..out_h {
            let si = (i / 2).min(s.h - 1);
            for j in 0..out_w {
                out.push(x[base + si * s.w + (j / 2).min(s.w - 1)]);
            }
        }
    }
    Tensor4::from_vec(out_shape, out)
}

pub fn upsample2_backward<T: Scalar>(grad_out: &Tensor4<T>, input_shape: Shape4) -> Result<Tensor4<T>> {
    let gs = grad_out.shape();
    check_upsample(input_shape, gs.h, gs.w)?;
    if gs.n != input_shape.n || gs.c != input_shape.c {
        return Err(mismatch(format!("upsample backward of {gs} for input {input_shape}")));
    }
    let mut grad = Tensor4::zeros(input_shape);
    let src = grad_out.data();
    let dst = grad.data_mut();
    for plane in 0..gs.n * gs.c {
        let (ib, ob) = (plane * input_shape.plane(), plane * gs.plane());
        for i in 0..gs.h {
            let si = (i / 2).min(input_shape.h - 1);
            for j in 0..gs.w {
                dst[ib + si * input_shape.w + (j / 2).min(input_shape.w - 1)] += src[ob + i * gs.w + j];
            }
        }
    }
    Ok(grad)
}

fn check_upsample(s: Shape4, out_h: usize, out_w: usize) -> Result<()> {
    let ok = |inp: usize, out: usize| inp >= 1 && (out == 2 * inp || out == 2 * inp + 1);
    if !ok(s.h, out_h) || !ok(s.w, out_w) {
        return Err(mismatch(format!("cannot upsample {s} to {out_h}x{out_w}")));
    }
    Ok(())
}
