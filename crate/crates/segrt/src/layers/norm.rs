//! Per-channel batch normalization.
//!
//! Training mode standardizes each channel with the **batch** mean/variance
//! computed over every item and pixel, then applies the learned affine
//! `gamma * xhat + beta`, and folds the batch statistics into running
//! estimates with momentum [`BN_MOMENTUM`]. Inference mode uses the running
//! estimates only. Variance is the biased (`/N`) estimator in both roles.

use crate::error::{Error, Result};
use crate::tensor::{scalar, widen, Batch, Scalar, Tensor};

/// Exponential-moving-average momentum for the running statistics:
/// `running = momentum * running + (1 - momentum) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Stabilizer added to the variance before the square root.
pub const BN_EPSILON: f64 = 1e-5;

/// Learned and running state of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F: Scalar = f32> {
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    channels: usize,
}

/// Gradients for the affine parameters, from [`BatchNorm::backward`].
#[derive(Debug, Clone)]
pub struct BnGrads<F: Scalar = f32> {
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
}

/// Batch statistics captured by [`BatchNorm::forward_train`], needed by the
/// backward pass (together with the layer input).
#[derive(Debug, Clone)]
pub struct BnCache<F: Scalar = f32> {
    input: Batch<F>,
    mean: Vec<F>,
    var: Vec<F>,
}

impl<F: Scalar> BatchNorm<F> {
    /// Identity-initialized layer: gamma 1, beta 0, running mean 0, running
    /// variance 1.
    pub fn new(channels: usize) -> Self {
        assert!(channels > 0, "batch norm needs at least one channel");
        BatchNorm {
            gamma: vec![F::one(); channels],
            beta: vec![F::zero(); channels],
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
            channels,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn epsilon(&self) -> F {
        scalar(BN_EPSILON)
    }

    /// Trainable parameter count (gamma + beta).
    pub fn parameter_count(&self) -> usize {
        2 * self.channels
    }

    fn check(&self, input: &Batch<F>) -> Result<()> {
        let shape = input.shape();
        if shape.channels != self.channels {
            return Err(Error::ShapeMismatch {
                expected: shape.with_channels(self.channels),
                actual: shape,
            });
        }
        Ok(())
    }

    /// Normalizes with batch statistics, updates the running estimates, and
    /// returns the cache for [`Self::backward`].
    pub fn forward_train(&mut self, input: &Batch<F>) -> Result<(Batch<F>, BnCache<F>)> {
        self.check(input)?;
        let c = self.channels;
        let n = (input.len() * input.shape().pixels()) as f64;

        // Accumulate per-channel sums in f64 regardless of F: cheap, and it
        // keeps large-batch statistics honest at f32.
        let mut sum = vec![0.0f64; c];
        let mut sum_sq = vec![0.0f64; c];
        for item in input.iter() {
            for px in item.data().chunks_exact(c) {
                for (ch, v) in px.iter().enumerate() {
                    let v = widen(*v);
                    sum[ch] += v;
                    sum_sq[ch] += v * v;
                }
            }
        }
        let mean: Vec<F> = sum.iter().map(|&s| scalar(s / n)).collect();
        let var: Vec<F> = sum
            .iter()
            .zip(&sum_sq)
            .map(|(&s, &sq)| {
                let m = s / n;
                scalar((sq / n - m * m).max(0.0))
            })
            .collect();

        let momentum = scalar::<F>(BN_MOMENTUM);
        let one_minus = F::one() - momentum;
        for ch in 0..c {
            self.running_mean[ch] = momentum * self.running_mean[ch] + one_minus * mean[ch];
            self.running_var[ch] = momentum * self.running_var[ch] + one_minus * var[ch];
        }

        let output = self.normalize(input, &mean, &var);
        Ok((
            output,
            BnCache {
                input: input.clone(),
                mean,
                var,
            },
        ))
    }

    /// Normalizes with the running statistics; no state changes.
    pub fn forward_infer(&self, input: &Batch<F>) -> Result<Batch<F>> {
        self.check(input)?;
        Ok(self.normalize(input, &self.running_mean, &self.running_var))
    }

    fn normalize(&self, input: &Batch<F>, mean: &[F], var: &[F]) -> Batch<F> {
        let c = self.channels;
        let eps = self.epsilon();
        let scale: Vec<F> = (0..c)
            .map(|ch| self.gamma[ch] / (var[ch] + eps).sqrt())
            .collect();
        let shift: Vec<F> = (0..c)
            .map(|ch| self.beta[ch] - scale[ch] * mean[ch])
            .collect();
        input.map_items(|item| {
            let mut out = Tensor::zeros(item.shape());
            for (dst, src) in out
                .data_mut()
                .chunks_exact_mut(c)
                .zip(item.data().chunks_exact(c))
            {
                for ch in 0..c {
                    dst[ch] = scale[ch] * src[ch] + shift[ch];
                }
            }
            out
        })
    }

    /// Training-mode backward pass: gradients flow through the batch
    /// statistics as well as the affine.
    ///
    /// For channel totals over the `N = items * pixels` slots:
    /// `dX = inv_std / N * (N * dXhat - sum(dXhat) - xhat * sum(dXhat * xhat))`
    /// with `dXhat = dOut * gamma`.
    pub fn backward(
        &self,
        cache: &BnCache<F>,
        output_grad: &Batch<F>,
    ) -> Result<(Batch<F>, BnGrads<F>)> {
        self.check(output_grad)?;
        output_grad.assert_shape(cache.input.shape())?;
        if output_grad.len() != cache.input.len() {
            return Err(Error::Precondition(format!(
                "gradient batch size {} does not match cached batch size {}",
                output_grad.len(),
                cache.input.len()
            )));
        }
        let c = self.channels;
        let n = scalar::<F>((cache.input.len() * cache.input.shape().pixels()) as f64);
        let eps = self.epsilon();
        let inv_std: Vec<F> = (0..c)
            .map(|ch| F::one() / (cache.var[ch] + eps).sqrt())
            .collect();

        // First pass: per-channel reductions.
        let mut sum_dxhat = vec![F::zero(); c];
        let mut sum_dxhat_xhat = vec![F::zero(); c];
        let mut grads = BnGrads {
            gamma: vec![F::zero(); c],
            beta: vec![F::zero(); c],
        };
        for (item, grad) in cache.input.iter().zip(output_grad.iter()) {
            for (px, gpx) in item
                .data()
                .chunks_exact(c)
                .zip(grad.data().chunks_exact(c))
            {
                for ch in 0..c {
                    let xhat = (px[ch] - cache.mean[ch]) * inv_std[ch];
                    let dout = gpx[ch];
                    grads.beta[ch] += dout;
                    grads.gamma[ch] += dout * xhat;
                    let dxhat = dout * self.gamma[ch];
                    sum_dxhat[ch] += dxhat;
                    sum_dxhat_xhat[ch] += dxhat * xhat;
                }
            }
        }

        // Second pass: per-slot input gradient.
        let mut out_items = Vec::with_capacity(cache.input.len());
        for (item, grad) in cache.input.iter().zip(output_grad.iter()) {
            let mut gi = Tensor::zeros(item.shape());
            for ((px, gpx), dst) in item
                .data()
                .chunks_exact(c)
                .zip(grad.data().chunks_exact(c))
                .zip(gi.data_mut().chunks_exact_mut(c))
            {
                for ch in 0..c {
                    let xhat = (px[ch] - cache.mean[ch]) * inv_std[ch];
                    let dxhat = gpx[ch] * self.gamma[ch];
                    dst[ch] = inv_std[ch] / n
                        * (n * dxhat - sum_dxhat[ch] - xhat * sum_dxhat_xhat[ch]);
                }
            }
            out_items.push(gi);
        }
        Ok((
            Batch::new(out_items).expect("bn grads share a shape"),
            grads,
        ))
    }

    /// Converts the layer's scalars (used to build `f64` verification twins).
    pub fn cast<G: Scalar>(&self) -> BatchNorm<G> {
        let cv = |v: &[F]| v.iter().map(|&x| scalar(widen(x))).collect();
        BatchNorm {
            gamma: cv(&self.gamma),
            beta: cv(&self.beta),
            running_mean: cv(&self.running_mean),
            running_var: cv(&self.running_var),
            channels: self.channels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::verify::{max_relative_error, numeric_gradient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(seed: u64, items: usize, shape: Shape) -> Batch<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Batch::new(
            (0..items)
                .map(|_| {
                    Tensor::from_vec(
                        shape,
                        (0..shape.len()).map(|_| r.gen_range(-2.0..2.0)).collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    /// Freshly initialized inference-mode layer is the identity up to the
    /// epsilon stabilizer.
    #[test]
    fn infer_identity_initialization() {
        let bn = BatchNorm::<f64>::new(3);
        let input = random_batch(1, 2, Shape::new(3, 3, 3));
        let out = bn.forward_infer(&input).unwrap();
        for (o, i) in out.items()[0].data().iter().zip(input.items()[0].data()) {
            let expected = i / (1.0 + BN_EPSILON).sqrt();
            assert!((o - expected).abs() < 1e-12);
            assert!((o - i).abs() <= 1e-5 * i.abs().max(1.0));
        }
    }

    /// Training mode standardizes: per-channel batch mean ~0, variance ~1.
    #[test]
    fn train_mode_standardizes_batch() {
        let mut bn = BatchNorm::<f64>::new(4);
        let input = random_batch(2, 3, Shape::new(5, 4, 4));
        let (out, _) = bn.forward_train(&input).unwrap();
        let n = (3 * 5 * 4) as f64;
        for ch in 0..4 {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for item in out.iter() {
                for px in item.data().chunks_exact(4) {
                    sum += px[ch];
                    sum_sq += px[ch] * px[ch];
                }
            }
            let mean = sum / n;
            let var = sum_sq / n - mean * mean;
            assert!(mean.abs() < 1e-10, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    /// Running statistics move toward the batch statistics with momentum 0.9.
    #[test]
    fn running_stats_use_momentum() {
        let mut bn = BatchNorm::<f64>::new(1);
        let input = Batch::single(Tensor::from_vec(
            Shape::new(2, 2, 1),
            vec![1.0, 3.0, 5.0, 7.0],
        ));
        bn.forward_train(&input).unwrap();
        // Batch mean 4, biased variance 5.
        assert!((bn.running_mean[0] - (0.9 * 0.0 + 0.1 * 4.0)).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 * 1.0 + 0.1 * 5.0)).abs() < 1e-12);
    }

    /// With constant upstream gradient, d(beta) is that constant times the
    /// number of slots per channel, independent of gamma.
    #[test]
    fn beta_gradient_sums_upstream() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma = vec![1.7, 0.3];
        let input = random_batch(5, 2, Shape::new(3, 4, 2));
        let (_, cache) = bn.forward_train(&input).unwrap();
        let upstream = Batch::new(
            input
                .iter()
                .map(|t| Tensor::filled(t.shape(), 0.25))
                .collect(),
        )
        .unwrap();
        let (_, grads) = bn.backward(&cache, &upstream).unwrap();
        let slots = (2 * 3 * 4) as f64;
        for ch in 0..2 {
            assert!((grads.beta[ch] - 0.25 * slots).abs() < 1e-10);
        }
    }

    /// Finite-difference check of input, gamma, and beta gradients in
    /// training mode.
    #[test]
    fn gradients_match_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let shape = Shape::new(3, 4, 2);
        let input = random_batch(10, 2, shape);
        let proj: Vec<Tensor<f64>> = (0..2)
            .map(|_| {
                Tensor::from_vec(
                    shape,
                    (0..shape.len()).map(|_| r.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma = vec![1.3, 0.7];
        bn.beta = vec![0.2, -0.4];

        let base = bn.clone();
        let loss = |bn: &BatchNorm<f64>, input: &Batch<f64>| -> f64 {
            // Clone: forward_train mutates running stats, which the loss must
            // not depend on.
            let mut probe = bn.clone();
            let (out, _) = probe.forward_train(input).unwrap();
            out.iter()
                .zip(&proj)
                .flat_map(|(o, p)| o.data().iter().zip(p.data()).map(|(a, b)| a * b))
                .sum()
        };

        let (_, cache) = bn.clone().forward_train(&input).unwrap();
        let upstream = Batch::new(proj.clone()).unwrap();
        let (input_grad, grads) = bn.backward(&cache, &upstream).unwrap();

        let numeric = numeric_gradient(&base.gamma, 1e-5, |g| {
            let mut b = base.clone();
            b.gamma = g.to_vec();
            loss(&b, &input)
        });
        assert!(max_relative_error(&grads.gamma, &numeric) < 1e-5);

        let numeric = numeric_gradient(&base.beta, 1e-5, |g| {
            let mut b = base.clone();
            b.beta = g.to_vec();
            loss(&b, &input)
        });
        assert!(max_relative_error(&grads.beta, &numeric) < 1e-5);

        for idx in 0..input.len() {
            let flat = input.items()[idx].data().to_vec();
            let numeric = numeric_gradient(&flat, 1e-5, |xv| {
                let mut items = input.items().to_vec();
                items[idx] = Tensor::from_vec(shape, xv.to_vec());
                loss(&base, &Batch::new(items).unwrap())
            });
            let err = max_relative_error(input_grad.items()[idx].data(), &numeric);
            assert!(err < 1e-5, "input item {idx}: rel err {err}");
        }
    }
}
