//! Elementwise activations, resampling, concatenation, and the pixel-level
//! binary cross-entropy loss.

use crate::error::{Error, Result};
use crate::tensor::{scalar, widen, Batch, Scalar, Shape, Tensor};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss so
/// the logs stay finite.
pub const BCE_CLAMP: f64 = 1e-7;

/// Leaky rectifier: `x` for `x >= 0`, `alpha * x` otherwise.
pub fn leaky_relu<F: Scalar>(input: &Batch<F>, alpha: F) -> Batch<F> {
    input.map_items(|t| t.map(|v| if v >= F::zero() { v } else { alpha * v }))
}

/// Backward of [`leaky_relu`]: the slope is decided by the sign of the
/// **pre-activation** value (slope 1 at exactly zero).
pub fn leaky_relu_backward<F: Scalar>(
    pre_activation: &Batch<F>,
    output_grad: &Batch<F>,
    alpha: F,
) -> Result<Batch<F>> {
    output_grad.assert_shape(pre_activation.shape())?;
    let items = pre_activation
        .iter()
        .zip(output_grad.iter())
        .map(|(x, g)| {
            let mut out = Tensor::zeros(x.shape());
            for ((d, &xv), &gv) in out.data_mut().iter_mut().zip(x.data()).zip(g.data()) {
                *d = if xv >= F::zero() { gv } else { alpha * gv };
            }
            out
        })
        .collect();
    Batch::new(items)
}

/// Nearest-neighbor 2x upscale: each input pixel becomes a 2x2 block.
pub fn upsample2x<F: Scalar>(input: &Batch<F>) -> Batch<F> {
    input.map_items(|t| {
        let (h, w, c) = (t.height(), t.width(), t.channels());
        let mut out = Tensor::zeros(Shape::new(h * 2, w * 2, c));
        for y in 0..h {
            for x in 0..w {
                let src = t.pixel(y, x);
                for dy in 0..2 {
                    for dx in 0..2 {
                        out.pixel_mut(2 * y + dy, 2 * x + dx).copy_from_slice(src);
                    }
                }
            }
        }
        out
    })
}

/// Backward of [`upsample2x`]: sums each 2x2 block of the upstream gradient.
///
/// # Errors
/// Errors if the gradient's spatial dims are odd (it must be an upsampled
/// shape).
pub fn upsample2x_backward<F: Scalar>(output_grad: &Batch<F>) -> Result<Batch<F>> {
    let shape = output_grad.shape();
    if shape.height % 2 != 0 || shape.width % 2 != 0 {
        return Err(Error::Precondition(format!(
            "upsample gradient must have even spatial dims, got {shape}"
        )));
    }
    let items = output_grad
        .iter()
        .map(|g| {
            let (h, w, c) = (g.height() / 2, g.width() / 2, g.channels());
            let mut out = Tensor::zeros(Shape::new(h, w, c));
            for y in 0..h {
                for x in 0..w {
                    let dst = out.pixel_mut(y, x);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            for (d, &s) in dst.iter_mut().zip(g.pixel(2 * y + dy, 2 * x + dx)) {
                                *d += s;
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    Batch::new(items)
}

/// Concatenates two batches along the channel axis, `a`'s channels first.
///
/// # Errors
/// Errors unless both batches agree on spatial dims and batch size.
pub fn concat<F: Scalar>(a: &Batch<F>, b: &Batch<F>) -> Result<Batch<F>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.height != sb.height || sa.width != sb.width {
        return Err(Error::ShapeMismatch {
            expected: sa.with_channels(sb.channels),
            actual: sb,
        });
    }
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "concat batch sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (ca, cb) = (sa.channels, sb.channels);
    let items = a
        .iter()
        .zip(b.iter())
        .map(|(ta, tb)| {
            let mut out = Tensor::zeros(Shape::new(sa.height, sa.width, ca + cb));
            for ((dst, pa), pb) in out
                .data_mut()
                .chunks_exact_mut(ca + cb)
                .zip(ta.data().chunks_exact(ca))
                .zip(tb.data().chunks_exact(cb))
            {
                dst[..ca].copy_from_slice(pa);
                dst[ca..].copy_from_slice(pb);
            }
            out
        })
        .collect();
    Batch::new(items)
}

/// Backward of [`concat()`]: splits the upstream gradient back into the two
/// inputs' gradients.
///
/// # Errors
/// Errors if `a_channels` is not strictly inside the gradient's channel
/// count.
pub fn concat_backward<F: Scalar>(
    output_grad: &Batch<F>,
    a_channels: usize,
) -> Result<(Batch<F>, Batch<F>)> {
    let shape = output_grad.shape();
    if a_channels == 0 || a_channels >= shape.channels {
        return Err(Error::Precondition(format!(
            "cannot split {} channels at {a_channels}",
            shape.channels
        )));
    }
    let cb = shape.channels - a_channels;
    let mut ga_items = Vec::with_capacity(output_grad.len());
    let mut gb_items = Vec::with_capacity(output_grad.len());
    for g in output_grad.iter() {
        let mut ga = Tensor::zeros(Shape::new(shape.height, shape.width, a_channels));
        let mut gb = Tensor::zeros(Shape::new(shape.height, shape.width, cb));
        for ((src, da), db) in g
            .data()
            .chunks_exact(shape.channels)
            .zip(ga.data_mut().chunks_exact_mut(a_channels))
            .zip(gb.data_mut().chunks_exact_mut(cb))
        {
            da.copy_from_slice(&src[..a_channels]);
            db.copy_from_slice(&src[a_channels..]);
        }
        ga_items.push(ga);
        gb_items.push(gb);
    }
    Ok((Batch::new(ga_items)?, Batch::new(gb_items)?))
}

/// Elementwise logistic function `1 / (1 + exp(-x))`.
pub fn sigmoid<F: Scalar>(input: &Batch<F>) -> Batch<F> {
    input.map_items(|t| {
        t.map(|v| {
            // Split on sign so the exponential never overflows.
            if v >= F::zero() {
                F::one() / (F::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (F::one() + e)
            }
        })
    })
}

/// Backward of [`sigmoid`] given its **output** `s`: `grad * s * (1 - s)`.
pub fn sigmoid_backward<F: Scalar>(output: &Batch<F>, output_grad: &Batch<F>) -> Result<Batch<F>> {
    output_grad.assert_shape(output.shape())?;
    let items = output
        .iter()
        .zip(output_grad.iter())
        .map(|(s, g)| {
            let mut out = Tensor::zeros(s.shape());
            for ((d, &sv), &gv) in out.data_mut().iter_mut().zip(s.data()).zip(g.data()) {
                *d = gv * sv * (F::one() - sv);
            }
            out
        })
        .collect();
    Batch::new(items)
}

/// Mean binary cross-entropy over every `(item, pixel, channel)` slot, with
/// predictions clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
///
/// Returns the loss and the gradient with respect to the predictions (zero
/// where the clamp was active, since the clamped loss is locally constant
/// there).
///
/// # Errors
/// Errors on shape or batch-size mismatch between predictions and targets.
pub fn bce_loss<F: Scalar>(predictions: &Batch<F>, targets: &Batch<F>) -> Result<(f64, Batch<F>)> {
    check_pairing(predictions, targets)?;
    let n = predictions.total_len() as f64;
    let lo = scalar::<F>(BCE_CLAMP);
    let hi = F::one() - lo;
    let inv_n = scalar::<F>(1.0 / n);
    let mut loss = 0.0f64;
    let mut grad_items = Vec::with_capacity(predictions.len());
    for (p, t) in predictions.iter().zip(targets.iter()) {
        let mut g = Tensor::zeros(p.shape());
        for ((d, &pv), &tv) in g.data_mut().iter_mut().zip(p.data()).zip(t.data()) {
            let clamped = pv.max(lo).min(hi);
            let (c, y) = (widen(clamped), widen(tv));
            loss -= y * c.ln() + (1.0 - y) * (1.0 - c).ln();
            *d = if pv > lo && pv < hi {
                ((clamped - tv) / (clamped * (F::one() - clamped))) * inv_n
            } else {
                F::zero()
            };
        }
        grad_items.push(g);
    }
    Ok((loss / n, Batch::new(grad_items)?))
}

/// Fused sigmoid + binary cross-entropy.
///
/// Computes the same loss as `bce_loss(sigmoid(logits), targets)` but returns
/// the gradient with respect to the **logits**, which is the numerically
/// stable `(sigmoid(x) - y) / N` regardless of saturation. Training uses
/// this form.
pub fn bce_with_logits<F: Scalar>(
    logits: &Batch<F>,
    targets: &Batch<F>,
) -> Result<(f64, Batch<F>)> {
    check_pairing(logits, targets)?;
    let n = logits.total_len() as f64;
    let inv_n = scalar::<F>(1.0 / n);
    let probs = sigmoid(logits);
    let mut loss = 0.0f64;
    let mut grad_items = Vec::with_capacity(logits.len());
    for (p, t) in probs.iter().zip(targets.iter()) {
        let mut g = Tensor::zeros(p.shape());
        for ((d, &pv), &tv) in g.data_mut().iter_mut().zip(p.data()).zip(t.data()) {
            let c = widen(pv).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            let y = widen(tv);
            loss -= y * c.ln() + (1.0 - y) * (1.0 - c).ln();
            *d = (pv - tv) * inv_n;
        }
        grad_items.push(g);
    }
    Ok((loss / n, Batch::new(grad_items)?))
}

fn check_pairing<F: Scalar>(a: &Batch<F>, b: &Batch<F>) -> Result<()> {
    b.assert_shape(a.shape())?;
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "batch sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{max_relative_error, numeric_gradient, relative_error};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tensor1d(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, values.len(), 1), values.to_vec())
    }

    #[test]
    fn leaky_relu_scales_negatives_only() {
        let input = Batch::single(tensor1d(&[-2.0, -0.5, 0.0, 1.0]));
        let out = leaky_relu(&input, 0.1);
        assert_eq!(out.items()[0].data(), &[-0.2, -0.05, 0.0, 1.0]);
    }

    #[test]
    fn leaky_relu_backward_uses_preactivation_sign() {
        let pre = Batch::single(tensor1d(&[-2.0, 0.0, 3.0]));
        let grad = Batch::single(tensor1d(&[1.0, 1.0, 1.0]));
        let out = leaky_relu_backward(&pre, &grad, 0.25).unwrap();
        assert_eq!(out.items()[0].data(), &[0.25, 1.0, 1.0]);
    }

    #[test]
    fn upsample_replicates_into_blocks() {
        let t = Tensor::from_vec(Shape::new(2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]);
        let out = upsample2x(&Batch::single(t));
        let o = &out.items()[0];
        assert_eq!(o.shape(), Shape::new(4, 4, 1));
        for (y, x, v) in [
            (0, 0, 1.0),
            (0, 1, 1.0),
            (1, 1, 1.0),
            (0, 2, 2.0),
            (1, 3, 2.0),
            (2, 0, 3.0),
            (3, 3, 4.0),
        ] {
            assert_eq!(o.get(y, x, 0), v, "({y},{x})");
        }
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let g = Tensor::filled(Shape::new(4, 4, 2), 1.0);
        let out = upsample2x_backward(&Batch::single(g)).unwrap();
        assert_eq!(out.shape(), Shape::new(2, 2, 2));
        assert!(out.items()[0].data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn concat_orders_a_first() {
        let a = Tensor::from_vec(Shape::new(1, 2, 2), vec![1.0, 2.0, 5.0, 6.0]);
        let b = Tensor::from_vec(Shape::new(1, 2, 3), vec![3.0, 4.0, 9.0, 7.0, 8.0, 10.0]);
        let out = concat(&Batch::single(a), &Batch::single(b)).unwrap();
        let o = &out.items()[0];
        assert_eq!(o.shape(), Shape::new(1, 2, 5));
        assert_eq!(o.pixel(0, 0), &[1.0, 2.0, 3.0, 4.0, 9.0]);
        assert_eq!(o.pixel(0, 1), &[5.0, 6.0, 7.0, 8.0, 10.0]);
    }

    #[test]
    fn concat_backward_splits() {
        let g = Tensor::from_vec(Shape::new(1, 1, 5), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (ga, gb) = concat_backward(&Batch::single(g), 2).unwrap();
        assert_eq!(ga.items()[0].data(), &[1.0, 2.0]);
        assert_eq!(gb.items()[0].data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn concat_rejects_mismatched_spatial_dims() {
        let a: Batch<f64> = Batch::single(Tensor::zeros(Shape::new(2, 2, 1)));
        let b: Batch<f64> = Batch::single(Tensor::zeros(Shape::new(2, 3, 1)));
        assert!(concat(&a, &b).is_err());
    }

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        let input = Batch::single(tensor1d(&[0.0, 100.0, -100.0]));
        let out = sigmoid(&input);
        let o = out.items()[0].data();
        assert_eq!(o[0], 0.5);
        assert!(o[1] > 0.999999 && o[1].is_finite());
        assert!(o[2] < 1e-6 && o[2] >= 0.0);
    }

    #[test]
    fn bce_perfect_prediction_is_nearly_zero() {
        let pred = Batch::single(tensor1d(&[0.0, 1.0, 1.0, 0.0]));
        let target = Batch::single(tensor1d(&[0.0, 1.0, 1.0, 0.0]));
        let (loss, _) = bce_loss(&pred, &target).unwrap();
        // Clamping leaves -ln(1 - 1e-7) ~ 1e-7 per slot.
        assert!(loss > 0.0 && loss < 1e-6);
    }

    #[test]
    fn bce_uniform_half_is_ln_two() {
        let pred = Batch::single(Tensor::filled(Shape::new(2, 3, 4), 0.5));
        let target = Batch::single(tensor_with_alternating(Shape::new(2, 3, 4)));
        let (loss, _) = bce_loss(&pred, &target).unwrap();
        assert!(relative_error(loss, std::f64::consts::LN_2) < 1e-12);
    }

    fn tensor_with_alternating(shape: Shape) -> Tensor<f64> {
        let data = (0..shape.len()).map(|i| (i % 2) as f64).collect();
        Tensor::from_vec(shape, data)
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(33);
        let shape = Shape::new(2, 3, 2);
        let pred: Vec<f64> = (0..shape.len()).map(|_| r.gen_range(0.05..0.95)).collect();
        let target: Vec<f64> = (0..shape.len()).map(|_| f64::from(r.gen_bool(0.5))).collect();
        let t = Batch::single(Tensor::from_vec(shape, target));
        let (_, grad) = bce_loss(&Batch::single(Tensor::from_vec(shape, pred.clone())), &t).unwrap();
        let numeric = numeric_gradient(&pred, 1e-6, |p| {
            bce_loss(&Batch::single(Tensor::from_vec(shape, p.to_vec())), &t)
                .unwrap()
                .0
        });
        assert!(max_relative_error(grad.items()[0].data(), &numeric) < 1e-5);
    }

    #[test]
    fn fused_bce_matches_chained_form() {
        let mut r = ChaCha8Rng::seed_from_u64(41);
        let shape = Shape::new(3, 2, 2);
        let logits: Vec<f64> = (0..shape.len()).map(|_| r.gen_range(-3.0..3.0)).collect();
        let target: Vec<f64> = (0..shape.len()).map(|_| f64::from(r.gen_bool(0.5))).collect();
        let lb = Batch::single(Tensor::from_vec(shape, logits.clone()));
        let tb = Batch::single(Tensor::from_vec(shape, target));

        let (fused_loss, fused_grad) = bce_with_logits(&lb, &tb).unwrap();
        let probs = sigmoid(&lb);
        let (chained_loss, dprob) = bce_loss(&probs, &tb).unwrap();
        let chained_grad = sigmoid_backward(&probs, &dprob).unwrap();

        assert!(relative_error(fused_loss, chained_loss) < 1e-12);
        for (f, c) in fused_grad.items()[0]
            .data()
            .iter()
            .zip(chained_grad.items()[0].data())
        {
            assert!(relative_error(*f, *c) < 1e-9);
        }

        // And against finite differences of the composite.
        let numeric = numeric_gradient(&logits, 1e-6, |lv| {
            bce_with_logits(&Batch::single(Tensor::from_vec(shape, lv.to_vec())), &tb)
                .unwrap()
                .0
        });
        assert!(max_relative_error(fused_grad.items()[0].data(), &numeric) < 1e-5);
    }

    proptest! {
        #[test]
        fn sigmoid_stays_in_unit_interval(vals in proptest::collection::vec(-1e6f64..1e6, 1..32)) {
            let out = sigmoid(&Batch::single(tensor1d(&vals)));
            for &v in out.items()[0].data() {
                prop_assert!((0.0..=1.0).contains(&v) && v.is_finite());
            }
        }

        #[test]
        fn concat_channel_count_adds(ca in 1usize..5, cb in 1usize..5) {
            let a: Batch<f64> = Batch::single(Tensor::zeros(Shape::new(2, 2, ca)));
            let b: Batch<f64> = Batch::single(Tensor::zeros(Shape::new(2, 2, cb)));
            prop_assert_eq!(concat(&a, &b).unwrap().shape().channels, ca + cb);
        }
    }
}
