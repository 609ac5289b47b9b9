use crate::error::{shape_err, Result};
use crate::nn::{LayerParams, ParamGrads, Tensor2D};
use rand::Rng;

/// 1-D convolution over time with same-length zero padding.
///
/// Weights are stored as a `out_channels x (in_channels * kernel)` matrix, the
/// tap `j` of input channel `c` living in column `c * kernel + j`. Tap `j`
/// reads frame `t + j - (kernel - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub params: LayerParams,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

impl Conv1d {
    pub fn new(params: LayerParams, in_channels: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(shape_err!("kernel size must be odd, got {kernel}"));
        }
        if params.weights.cols() != in_channels * kernel {
            return Err(shape_err!(
                "weight matrix has {} columns, expected {in_channels}x{kernel}",
                params.weights.cols()
            ));
        }
        let out_channels = params.weights.rows();
        Ok(Self {
            params,
            in_channels,
            out_channels,
            kernel,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel;
        let params = LayerParams::he_normal(out_channels, fan_in, fan_in, rng);
        Self::new(params, in_channels, kernel)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    #[inline]
    fn tap_range(&self, j: usize, frames: usize) -> (isize, usize, usize) {
        let shift = j as isize - (self.kernel as isize - 1) / 2;
        let t0 = (-shift).max(0) as usize;
        let t1 = (frames as isize - shift).clamp(0, frames as isize) as usize;
        (shift, t0, t1.max(t0))
    }

    fn check_input(&self, input: &Tensor2D) -> Result<()> {
        if input.rows() != self.in_channels {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.rows()
            ));
        }
        if input.cols() == 0 {
            return Err(shape_err!("conv input has no frames"));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor2D) -> Result<Tensor2D> {
        self.check_input(input)?;
        let frames = input.cols();
        let mut out = Tensor2D::zeros(self.out_channels, frames);
        let w = &self.params.weights;
        for d in 0..self.out_channels {
            let wrow = w.row(d);
            let orow = out.row_mut(d);
            orow.fill(self.params.bias[d]);
            for c in 0..self.in_channels {
                let x = input.row(c);
                for j in 0..self.kernel {
                    let wv = wrow[c * self.kernel + j];
                    let (shift, t0, t1) = self.tap_range(j, frames);
                    let src = &x[(t0 as isize + shift) as usize..(t1 as isize + shift) as usize];
                    for (o, &xv) in orow[t0..t1].iter_mut().zip(src) {
                        *o += wv * xv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns the gradient with respect to the input and the parameter gradients.
    pub fn backward(&self, input: &Tensor2D, upstream: &Tensor2D) -> Result<(Tensor2D, ParamGrads)> {
        self.check_input(input)?;
        let frames = input.cols();
        if upstream.shape() != (self.out_channels, frames) {
            return Err(shape_err!(
                "upstream gradient {:?} does not match conv output ({}, {frames})",
                upstream.shape(),
                self.out_channels
            ));
        }
        let mut grads = ParamGrads::zeros_like(&self.params);
        let mut grad_in = Tensor2D::zeros(self.in_channels, frames);
        for d in 0..self.out_channels {
            let up = upstream.row(d);
            grads.bias[d] = up.iter().sum();
            let wrow = self.params.weights.row(d);
            for c in 0..self.in_channels {
                for j in 0..self.kernel {
                    let col = c * self.kernel + j;
                    let (shift, t0, t1) = self.tap_range(j, frames);
                    let lo = (t0 as isize + shift) as usize;
                    let hi = (t1 as isize + shift) as usize;
                    let x = &input.row(c)[lo..hi];
                    let u = &up[t0..t1];
                    let gw: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum();
                    grads.weights.set(d, col, gw);
                    let wv = wrow[col];
                    for (g, &uv) in grad_in.row_mut(c)[lo..hi].iter_mut().zip(u) {
                        *g += wv * uv;
                    }
                }
            }
        }
        Ok((grad_in, grads))
    }
}
