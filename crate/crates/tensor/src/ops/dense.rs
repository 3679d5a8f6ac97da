use super::kernels::{axpy, dot};
use crate::error::{mismatch, Result};
use crate::tensor::{Scalar, Shape4, Tensor4};

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub grad_input: Tensor4<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

/// Fully connected layer over the flattened sample. `weight` is
/// `[units][inputs]` row-major; the output has shape `(n, units, 1, 1)`.
pub fn dense_forward<T: Scalar>(input: &Tensor4<T>, weight: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let s = input.shape();
    let fan_in = s.sample_len();
    let units = bias.len();
    if units == 0 || weight.len() != units * fan_in {
        return Err(mismatch(format!(
            "dense weight of {} for {units} units over input {s}",
            weight.len()
        )));
    }
    let mut out = Vec::with_capacity(s.n * units);
    for n in 0..s.n {
        let x = input.sample(n);
        for (row, &b) in weight.chunks_exact(fan_in).zip(bias) {
            out.push(b + dot(row, x));
        }
    }
    Tensor4::from_vec(Shape4::new(s.n, units, 1, 1), out)
}

pub fn dense_backward<T: Scalar>(grad_out: &Tensor4<T>, input: &Tensor4<T>, weight: &[T]) -> Result<DenseGrads<T>> {
    let (s, gs) = (input.shape(), grad_out.shape());
    let fan_in = s.sample_len();
    let units = gs.sample_len();
    if gs.n != s.n || weight.len() != units * fan_in {
        return Err(mismatch(format!("dense backward of {gs} for input {s}")));
    }
    let mut grad_input = Tensor4::zeros(s);
    let mut grad_weight = vec![T::zero(); weight.len()];
    let mut grad_bias = vec![T::zero(); units];
    for n in 0..s.n {
        let x = input.sample(n);
        let g = grad_out.sample(n);
        let gi = &mut grad_input.data_mut()[n * fan_in..(n + 1) * fan_in];
        for (u, &gu) in g.iter().enumerate() {
            if gu == T::zero() {
                continue;
            }
            grad_bias[u] += gu;
            let row = &weight[u * fan_in..(u + 1) * fan_in];
            let grow = &mut grad_weight[u * fan_in..(u + 1) * fan_in];
            axpy(grow, gu, x);
            axpy(gi, gu, row);
        }
    }
    Ok(DenseGrads { grad_input, grad_weight, grad_bias })
}

pub fn relu_forward<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

/// Gradient is passed where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor4<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    if grad_out.shape() != input.shape() {
        return Err(mismatch(format!("relu backward of {} for {}", grad_out.shape(), input.shape())));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_matches_hand_product() {
        let x = Tensor4::from_vec(Shape4::new(2, 1, 1, 3), vec![1.0f64, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let w = [1.0, 0.0, -1.0, 0.5, 0.5, 0.5];
        let y = dense_forward(&x, &w, &[0.0, 1.0]).unwrap();
        assert_eq!(y.shape(), Shape4::new(2, 2, 1, 1));
        assert_eq!(y.data(), &[-2.0, 4.0, -2.0, 1.0]);
    }

    #[test]
    fn relu_masks_nonpositive() {
        let x = Tensor4::from_vec(Shape4::new(1, 1, 1, 4), vec![-1.0f64, 0.0, 2.0, 3.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0, 3.0]);
        let g = relu_backward(&Tensor4::filled(x.shape(), 1.0), &x).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
