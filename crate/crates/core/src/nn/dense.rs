use crate::error::{shape_err, Result};
use crate::nn::{LayerParams, ParamGrads};
use rand::Rng;

/// Fully connected layer `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub params: LayerParams,
}

impl Dense {
    pub fn new(params: LayerParams) -> Self {
        Self { params }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self::new(LayerParams::he_normal(outputs, inputs, inputs, rng))
    }

    pub fn inputs(&self) -> usize {
        self.params.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.params.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(shape_err!("dense layer expects {} inputs, got {}", self.inputs(), x.len()));
        }
        Ok((0..self.outputs())
            .map(|o| {
                self.params.bias[o]
                    + self.params.weights.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect())
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, ParamGrads)> {
        if x.len() != self.inputs() || upstream.len() != self.outputs() {
            return Err(shape_err!(
                "dense backward with input {} / upstream {} for a {}->{} layer",
                x.len(),
                upstream.len(),
                self.inputs(),
                self.outputs()
            ));
        }
        let mut grads = ParamGrads::zeros_like(&self.params);
        let mut gx = vec![0.0; x.len()];
        for (o, &u) in upstream.iter().enumerate() {
            grads.bias[o] = u;
            let wrow = self.params.weights.row(o);
            for ((g, &w), (gw, &xv)) in gx
                .iter_mut()
                .zip(wrow)
                .zip(grads.weights.row_mut(o).iter_mut().zip(x))
            {
                *g += w * u;
                *gw = u * xv;
            }
        }
        Ok((gx, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::*;
    use crate::nn::Tensor2D;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let mut layer = Dense::init(5, 3, &mut rng);
            layer.params.bias = random_vec(3, &mut rng);
            let x = random_vec(5, &mut rng);
            let up = random_vec(3, &mut rng);
            let (gx, gp) = layer.backward(&x, &up).unwrap();
            let loss = |l: &Dense, x: &[f64]| -> f64 {
                l.forward(x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            check_grad(&x, &gx, |v| loss(&layer, v));
            check_grad(layer.params.weights.as_slice(), gp.weights.as_slice(), |v| {
                let mut l = layer.clone();
                l.params.weights = Tensor2D::from_vec(3, 5, v.to_vec()).unwrap();
                loss(&l, &x)
            });
            check_grad(&layer.params.bias, &gp.bias, |v| {
                let mut l = layer.clone();
                l.params.bias = v.to_vec();
                loss(&l, &x)
            });
        }
    }

    #[test]
    fn rejects_wrong_input_length() {
        let layer = Dense::init(4, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(layer.forward(&[1.0; 3]).is_err());
        assert!(layer.backward(&[1.0; 4], &[1.0; 3]).is_err());
    }
}
