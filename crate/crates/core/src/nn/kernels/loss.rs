use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(Error::Shape(format!("{op}: empty tensors")));
    }
    Ok(())
}

/// Mean absolute error.
pub fn l1_forward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    same_shape(pred, target, "l1")?;
    let mut s = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        s += (p - t).abs();
    }
    Ok(s / T::of(pred.len() as f64))
}

/// Gradient with respect to `pred`, scaled by `gout`; `sign(0) = 0`.
pub fn l1_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, gout: T) -> Tensor<T> {
    let k = gout / T::of(pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            if d > T::zero() {
                k
            } else if d < T::zero() {
                -k
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::new(pred.shape(), data).expect("same shape")
}

/// Mean squared error.
pub fn l2_forward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    same_shape(pred, target, "l2")?;
    let mut s = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        s += d * d;
    }
    Ok(s / T::of(pred.len() as f64))
}

pub fn l2_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, gout: T) -> Tensor<T> {
    let k = T::of(2.0) * gout / T::of(pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| k * (p - t))
        .collect();
    Tensor::new(pred.shape(), data).expect("same shape")
}

/// `sum(x * weights)`; projects a tensor to a scalar for gradient checks.
pub fn weighted_sum_forward<T: Scalar>(x: &Tensor<T>, weights: &Tensor<T>) -> Result<T> {
    same_shape(x, weights, "weighted_sum")?;
    let mut s = T::zero();
    for (&a, &b) in x.data().iter().zip(weights.data()) {
        s += a * b;
    }
    Ok(s)
}
