use crate::error::{shape_err, Result};
use crate::nn::Tensor2D;

pub fn relu_forward(x: &Tensor2D) -> Tensor2D {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given the forward *input*; zero where the input was not positive.
pub fn relu_backward(input: &Tensor2D, upstream: &Tensor2D) -> Result<Tensor2D> {
    if input.shape() != upstream.shape() {
        return Err(shape_err!(
            "relu upstream {:?} vs input {:?}",
            upstream.shape(),
            input.shape()
        ));
    }
    let data = input
        .as_slice()
        .iter()
        .zip(upstream.as_slice())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor2D::from_vec(input.rows(), input.cols(), data)
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn sigmoid_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
