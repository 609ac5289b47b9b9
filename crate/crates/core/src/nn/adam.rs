use crate::error::{shape_err, Result};
use crate::nn::LayerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` in place. `step` is 1-based.
pub fn adam_update(
    cfg: &AdamConfig,
    step: u64,
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam optimiser state over an ordered list of layers.
///
/// The layer order passed to [`Adam::step`] must be the same on every call;
/// moment buffers are allocated on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies the accumulated gradients of `layers` and advances the step counter.
    pub fn step(&mut self, layers: &mut [&mut LayerParams]) -> Result<()> {
        let sizes: Vec<usize> = layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect();
        if self.moments.is_empty() {
            self.moments = sizes
                .iter()
                .map(|&n| Moments {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect();
        } else if self.moments.len() != sizes.len()
            || self.moments.iter().zip(&sizes).any(|(m, &n)| m.m.len() != n)
        {
            return Err(shape_err!("parameter layout changed between Adam steps"));
        }
        self.step += 1;
        let mut slots = self.moments.iter_mut();
        for layer in layers.iter_mut() {
            let LayerParams {
                weights,
                bias,
                grad_weights,
                grad_bias,
            } = &mut **layer;
            let mw = slots.next().expect("sized");
            adam_update(
                &self.config,
                self.step,
                weights.as_mut_slice(),
                grad_weights.as_slice(),
                &mut mw.m,
                &mut mw.v,
            );
            let mb = slots.next().expect("sized");
            adam_update(&self.config, self.step, bias, grad_bias, &mut mb.m, &mut mb.v);
        }
        Ok(())
    }
}
