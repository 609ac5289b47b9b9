use crate::error::{shape_err, Result};
use crate::nn::Tensor2D;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Gradient of a loss with respect to one layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Tensor2D,
    pub bias: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(params: &LayerParams) -> Self {
        let (r, c) = params.weights.shape();
        Self {
            weights: Tensor2D::zeros(r, c),
            bias: vec![0.0; params.bias.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Trainable weights and bias of one layer, with gradient accumulators of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor2D,
    pub bias: Vec<f64>,
    pub grad_weights: Tensor2D,
    pub grad_bias: Vec<f64>,
}

impl LayerParams {
    pub fn new(weights: Tensor2D, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(shape_err!(
                "bias of length {} for {} output units",
                bias.len(),
                weights.rows()
            ));
        }
        let (r, c) = weights.shape();
        let nb = bias.len();
        Ok(Self {
            weights,
            bias,
            grad_weights: Tensor2D::zeros(r, c),
            grad_bias: vec![0.0; nb],
        })
    }

    /// He-normal initialisation with zero bias; `fan_in` is the number of inputs per output.
    pub fn he_normal<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        Self::new(
            Tensor2D::from_vec(rows, cols, data).expect("sized"),
            vec![0.0; rows],
        )
        .expect("sized")
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate(&mut self, grads: &ParamGrads, scale: f64) -> Result<()> {
        if grads.bias.len() != self.bias.len() {
            return Err(shape_err!("bias gradient length mismatch"));
        }
        self.grad_weights.add_scaled(&grads.weights, scale)?;
        for (g, d) in self.grad_bias.iter_mut().zip(&grads.bias) {
            *g += scale * d;
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}
