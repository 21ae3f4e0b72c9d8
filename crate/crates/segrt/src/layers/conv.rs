//! Depthwise-separable 3x3 convolution and batch-norm folding.
//!
//! A separable layer factors a full convolution into a 3x3 *depthwise* stage
//! (one kernel per input channel, no bias) followed by a 1x1 *pointwise*
//! mixing stage with a single bias per output channel. Padding is zero
//! "same": stride 1 pads one pixel on every border; stride 2 (defined for
//! even spatial dims) pads only the bottom/right edge, so output `(y, x)`
//! reads input rows `2y .. 2y+2`.

use crate::error::{Error, Result};
use crate::tensor::{scalar, widen, Batch, Scalar, Shape, Tensor};

use super::norm::BatchNorm;

/// Parameters of one depthwise-separable convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableConv2d<F: Scalar = f32> {
    /// `3 x 3 x in_channels` depthwise kernels.
    pub depthwise: Tensor<F>,
    /// `in_channels x out_channels` pointwise weights, row-major by input
    /// channel.
    pub pointwise: Vec<F>,
    /// One bias per output channel (applied after the pointwise stage).
    pub bias: Vec<F>,
    stride: usize,
    in_channels: usize,
    out_channels: usize,
}

/// Parameter gradients produced by [`SeparableConv2d::backward`]; mirrors the
/// layer's own field layout.
#[derive(Debug, Clone)]
pub struct SeparableConvGrads<F: Scalar = f32> {
    pub depthwise: Tensor<F>,
    pub pointwise: Vec<F>,
    pub bias: Vec<F>,
}

/// Intermediates captured by [`SeparableConv2d::forward_cached`] and consumed
/// by the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<F: Scalar = f32> {
    input: Batch<F>,
    /// Depthwise-stage output (`in_channels` at output resolution).
    mid: Batch<F>,
}

impl<F: Scalar> SeparableConv2d<F> {
    /// Zero-initialized layer.
    ///
    /// # Errors
    /// Errors unless `stride` is 1 or 2 and the channel counts are positive.
    pub fn new(in_channels: usize, out_channels: usize, stride: usize) -> Result<Self> {
        if !(stride == 1 || stride == 2) {
            return Err(Error::Precondition(format!(
                "conv stride must be 1 or 2, got {stride}"
            )));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Precondition(
                "conv channel counts must be positive".into(),
            ));
        }
        Ok(SeparableConv2d {
            depthwise: Tensor::zeros(Shape::new(3, 3, in_channels)),
            pointwise: vec![F::zero(); in_channels * out_channels],
            bias: vec![F::zero(); out_channels],
            stride,
            in_channels,
            out_channels,
        })
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Trainable parameter count: `9*Cin` depthwise + `Cin*Cout` pointwise +
    /// `Cout` bias.
    pub fn parameter_count(&self) -> usize {
        9 * self.in_channels + self.in_channels * self.out_channels + self.out_channels
    }

    /// Pointwise weight for `(input_channel, output_channel)`.
    #[inline]
    pub fn pointwise_at(&self, i: usize, o: usize) -> F {
        self.pointwise[i * self.out_channels + o]
    }

    fn check_input(&self, shape: Shape) -> Result<Shape> {
        if shape.channels != self.in_channels {
            return Err(Error::ShapeMismatch {
                expected: shape.with_channels(self.in_channels),
                actual: shape,
            });
        }
        if self.stride == 2 && (shape.height % 2 != 0 || shape.width % 2 != 0) {
            return Err(Error::Precondition(format!(
                "stride-2 conv needs even spatial dims, got {shape}"
            )));
        }
        Ok(Shape::new(
            shape.height / self.stride,
            shape.width / self.stride,
            self.out_channels,
        ))
    }

    /// Convolves a batch.
    ///
    /// # Errors
    /// Errors on a channel mismatch or odd spatial dims with stride 2.
    pub fn forward(&self, input: &Batch<F>) -> Result<Batch<F>> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Convolves a batch, returning the intermediates [`Self::backward`]
    /// needs.
    pub fn forward_cached(&self, input: &Batch<F>) -> Result<(Batch<F>, ConvCache<F>)> {
        let out_shape = self.check_input(input.shape())?;
        let mut mids = Vec::with_capacity(input.len());
        let mut outs = Vec::with_capacity(input.len());
        for item in input.iter() {
            let mid = self.depthwise_forward(item, out_shape);
            let out = self.pointwise_forward(&mid);
            mids.push(mid);
            outs.push(out);
        }
        let output = Batch::new(outs).expect("conv outputs share a shape");
        let cache = ConvCache {
            input: input.clone(),
            mid: Batch::new(mids).expect("conv mids share a shape"),
        };
        Ok((output, cache))
    }

    /// Gradients of the convolution: returns the input gradient and the
    /// parameter gradients.
    ///
    /// # Errors
    /// Errors if `output_grad` does not match the cached forward's output
    /// shape.
    pub fn backward(
        &self,
        cache: &ConvCache<F>,
        output_grad: &Batch<F>,
    ) -> Result<(Batch<F>, SeparableConvGrads<F>)> {
        let out_shape = self.check_input(cache.input.shape())?;
        output_grad.assert_shape(out_shape)?;
        if output_grad.len() != cache.input.len() {
            return Err(Error::Precondition(format!(
                "gradient batch size {} does not match cached batch size {}",
                output_grad.len(),
                cache.input.len()
            )));
        }

        let mut grads = SeparableConvGrads {
            depthwise: Tensor::zeros(Shape::new(3, 3, self.in_channels)),
            pointwise: vec![F::zero(); self.pointwise.len()],
            bias: vec![F::zero(); self.out_channels],
        };
        let mut input_grads = Vec::with_capacity(output_grad.len());
        for ((x, u), dv) in cache
            .input
            .iter()
            .zip(cache.mid.iter())
            .zip(output_grad.iter())
        {
            let du = self.pointwise_backward(u, dv, &mut grads);
            input_grads.push(self.depthwise_backward(x, &du, &mut grads.depthwise));
        }
        Ok((
            Batch::new(input_grads).expect("input grads share a shape"),
            grads,
        ))
    }

    fn depthwise_forward(&self, input: &Tensor<F>, out_shape: Shape) -> Tensor<F> {
        let (h, w, c) = (input.height(), input.width(), input.channels());
        let (oh, ow) = (out_shape.height, out_shape.width);
        let pad = if self.stride == 1 { 1isize } else { 0 };
        let mut out = Tensor::zeros(Shape::new(oh, ow, c));
        let k = self.depthwise.data();
        let src = input.data();
        let dst = out.data_mut();
        for oy in 0..oh {
            for ky in 0..3 {
                let iy = (oy * self.stride + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let iy = iy as usize;
                for ox in 0..ow {
                    let out_base = (oy * ow + ox) * c;
                    for kx in 0..3 {
                        let ix = (ox * self.stride + kx) as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_base = (iy * w + ix as usize) * c;
                        let k_base = (ky * 3 + kx) * c;
                        for ch in 0..c {
                            dst[out_base + ch] += k[k_base + ch] * src[in_base + ch];
                        }
                    }
                }
            }
        }
        out
    }

    fn pointwise_forward(&self, mid: &Tensor<F>) -> Tensor<F> {
        let (ci, co) = (self.in_channels, self.out_channels);
        let pixels = mid.shape().pixels();
        let mut out = Tensor::zeros(mid.shape().with_channels(co));
        let src = mid.data();
        let dst = out.data_mut();
        for p in 0..pixels {
            let u = &src[p * ci..(p + 1) * ci];
            let v = &mut dst[p * co..(p + 1) * co];
            v.copy_from_slice(&self.bias);
            for (ui, row) in u.iter().zip(self.pointwise.chunks_exact(co)) {
                for (vo, wo) in v.iter_mut().zip(row) {
                    *vo += *ui * *wo;
                }
            }
        }
        out
    }

    /// Backward through the pointwise stage; accumulates into `grads` and
    /// returns the gradient w.r.t. the depthwise-stage output.
    fn pointwise_backward(
        &self,
        mid: &Tensor<F>,
        out_grad: &Tensor<F>,
        grads: &mut SeparableConvGrads<F>,
    ) -> Tensor<F> {
        let (ci, co) = (self.in_channels, self.out_channels);
        let pixels = mid.shape().pixels();
        let mut mid_grad = Tensor::zeros(mid.shape());
        let u_all = mid.data();
        let dv_all = out_grad.data();
        let du_all = mid_grad.data_mut();
        for p in 0..pixels {
            let u = &u_all[p * ci..(p + 1) * ci];
            let dv = &dv_all[p * co..(p + 1) * co];
            let du = &mut du_all[p * ci..(p + 1) * ci];
            for (bo, dvo) in grads.bias.iter_mut().zip(dv) {
                *bo += *dvo;
            }
            for i in 0..ci {
                let w_row = &self.pointwise[i * co..(i + 1) * co];
                let gw_row = &mut grads.pointwise[i * co..(i + 1) * co];
                let ui = u[i];
                let mut acc = F::zero();
                for o in 0..co {
                    gw_row[o] += ui * dv[o];
                    acc += w_row[o] * dv[o];
                }
                du[i] = acc;
            }
        }
        mid_grad
    }

    /// Backward through the depthwise stage; accumulates the kernel gradient
    /// and returns the gradient w.r.t. the layer input.
    fn depthwise_backward(
        &self,
        input: &Tensor<F>,
        mid_grad: &Tensor<F>,
        kernel_grad: &mut Tensor<F>,
    ) -> Tensor<F> {
        let (h, w, c) = (input.height(), input.width(), input.channels());
        let (oh, ow) = (mid_grad.height(), mid_grad.width());
        let pad = if self.stride == 1 { 1isize } else { 0 };
        let mut input_grad = Tensor::zeros(input.shape());
        let k = self.depthwise.data();
        let src = input.data();
        let du = mid_grad.data();
        let gk = kernel_grad.data_mut();
        let gx = input_grad.data_mut();
        for oy in 0..oh {
            for ky in 0..3 {
                let iy = (oy * self.stride + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let iy = iy as usize;
                for ox in 0..ow {
                    let du_base = (oy * ow + ox) * c;
                    for kx in 0..3 {
                        let ix = (ox * self.stride + kx) as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_base = (iy * w + ix as usize) * c;
                        let k_base = (ky * 3 + kx) * c;
                        for ch in 0..c {
                            let g = du[du_base + ch];
                            gk[k_base + ch] += src[in_base + ch] * g;
                            gx[in_base + ch] += k[k_base + ch] * g;
                        }
                    }
                }
            }
        }
        input_grad
    }

    /// Converts the layer's scalars (used to build `f64` verification twins).
    pub fn cast<G: Scalar>(&self) -> SeparableConv2d<G> {
        SeparableConv2d {
            depthwise: self.depthwise.cast(),
            pointwise: self.pointwise.iter().map(|&v| scalar(widen(v))).collect(),
            bias: self.bias.iter().map(|&v| scalar(widen(v))).collect(),
            stride: self.stride,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
        }
    }
}

/// Folds an inference-mode batch norm into the preceding separable
/// convolution.
///
/// With per-channel scale `s = gamma / sqrt(running_var + eps)`, the folded
/// layer uses `pointwise[:, o] * s[o]` and bias `s[o] * (bias[o] - mean[o]) +
/// beta[o]`, making `folded.forward(x) == bn.forward_infer(conv.forward(x))`.
/// The depthwise stage is untouched.
pub fn fold_batch_norm<F: Scalar>(
    conv: &SeparableConv2d<F>,
    bn: &BatchNorm<F>,
) -> Result<SeparableConv2d<F>> {
    if bn.channels() != conv.out_channels {
        return Err(Error::Precondition(format!(
            "batch norm over {} channels cannot fold into conv with {} outputs",
            bn.channels(),
            conv.out_channels
        )));
    }
    let co = conv.out_channels;
    let mut folded = conv.clone();
    let scale: Vec<F> = (0..co)
        .map(|o| bn.gamma[o] / (bn.running_var[o] + bn.epsilon()).sqrt())
        .collect();
    for row in folded.pointwise.chunks_exact_mut(co) {
        for (wo, s) in row.iter_mut().zip(&scale) {
            *wo *= *s;
        }
    }
    for o in 0..co {
        folded.bias[o] = scale[o] * (conv.bias[o] - bn.running_mean[o]) + bn.beta[o];
    }
    Ok(folded)
}
