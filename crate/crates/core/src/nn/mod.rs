//! Differentiable building blocks with hand-derived gradients.
//!
//! Every layer follows the same contract: `forward` is pure given the
//! parameters, and `backward(input, upstream)` returns the gradient with
//! respect to the input together with the parameter gradients. Accumulating
//! parameter gradients and applying updates is left to the caller.

mod activation;
mod adam;
mod conv;
mod cosine;
mod dense;
mod params;
mod tensor;

pub use activation::{
    log_softmax, relu_backward, relu_forward, sigmoid, sigmoid_derivative, softmax,
};
pub use adam::{adam_update, Adam, AdamConfig};
pub use conv::Conv1d;
pub use cosine::{cosine_similarity, cosine_similarity_backward, l2_normalize};
pub use dense::Dense;
pub use params::{LayerParams, ParamGrads};
pub use tensor::Tensor2D;

#[cfg(test)]
pub(crate) mod testing {
    pub use crate::gradcheck::{random_tensor, random_vec};

    pub fn check_grad(x: &[f64], analytic: &[f64], f: impl FnMut(&[f64]) -> f64) {
        let err = crate::gradcheck::gradient_error(x, analytic, f);
        assert!(err <= 1e-4, "gradient relative error {err:e}");
    }
}
