//! The segmentation network: a fixed encoder-decoder over separable
//! convolutions with two skip connections.
//!
//! The layer stack (input `h x w x 3`, both dims divisible by 4):
//!
//! | stage   | layers                                   | scale | out ch |
//! |---------|------------------------------------------|-------|--------|
//! | stem    | sconv 8 *(skip A taken here)*            | 1     | 8      |
//! | encoder | sconv 8, sconv 8 /2                      | 1/2   | 8      |
//! |         | sconv 16 x2 *(skip B taken here)*        | 1/2   | 16     |
//! |         | sconv 16 /2, sconv 24 x6                 | 1/4   | 24     |
//! | decoder | up2x, concat B (24+16)                   | 1/2   | 40     |
//! |         | sconv 16 x3                              | 1/2   | 16     |
//! |         | up2x, concat A (16+8)                    | 1     | 24     |
//! |         | sconv 8 x3, sconv 5                      | 1     | 5      |
//! |
//!
//! Every separable convolution is followed by batch norm and a leaky
//! rectifier — including the final 5-filter layer. The network emits
//! **logits**; the sigmoid head is applied outside (see
//! [`crate::layers::sigmoid`] and [`crate::layers::bce_with_logits`]), so
//! there is no softmax anywhere and classes are independent per pixel.
//!
//! The five output channels are, in order: field, line, robot, ball,
//! goal post. Background has no channel; it is the absence of all five.
//!
//! A repeated row (`xN`) changes channel count on its first repetition and
//! keeps it for the rest. `concat(a, b)` places the decoder path `a` before
//! the skip `b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    bce_with_logits, concat, concat_backward, fold_batch_norm, leaky_relu, leaky_relu_backward,
    upsample2x, upsample2x_backward, BatchNorm, BnCache, BnGrads, ConvCache, SeparableConv2d,
    SeparableConvGrads, DEFAULT_LEAKY_ALPHA,
};
use crate::tensor::{scalar, Batch, Scalar, Shape, Tensor};

/// Number of predicted class channels (background is not one of them).
pub const CLASS_CHANNELS: usize = 5;

/// Class names per output channel, in channel order.
pub const CHANNEL_NAMES: [&str; CLASS_CHANNELS] = ["field", "line", "robot", "ball", "goal post"];

/// Input image channel count.
pub const INPUT_CHANNELS: usize = 3;

/// Input dims must be divisible by this (two stride-2 stages).
pub const RESOLUTION_DIVISOR: usize = 4;

/// `(in_channels, out_channels, stride)` of the 19 separable convolutions in
/// execution order.
pub const BLOCK_SPECS: [(usize, usize, usize); 19] = [
    (3, 8, 1),
    (8, 8, 1),
    (8, 8, 2),
    (8, 16, 1),
    (16, 16, 1),
    (16, 16, 2),
    (16, 24, 1),
    (24, 24, 1),
    (24, 24, 1),
    (24, 24, 1),
    (24, 24, 1),
    (24, 24, 1),
    (40, 16, 1),
    (16, 16, 1),
    (16, 16, 1),
    (24, 8, 1),
    (8, 8, 1),
    (8, 8, 1),
    (8, 5, 1),
];

/// One structural step of the execution plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Run conv block `i` (separable conv + batch norm + leaky rectifier).
    Conv(usize),
    /// Remember the current activation for a later skip join.
    SaveSkip,
    /// Nearest-neighbor 2x upscale.
    Up2x,
    /// Concatenate the current activation (first) with the most recently
    /// saved skip (second).
    ConcatSkip,
}

/// The fixed execution plan; skips are a stack, so the deeper (16-channel)
/// skip is consumed first.
pub fn execution_plan() -> Vec<Step> {
    use Step::*;
    vec![
        Conv(0),
        SaveSkip,
        Conv(1),
        Conv(2),
        Conv(3),
        Conv(4),
        SaveSkip,
        Conv(5),
        Conv(6),
        Conv(7),
        Conv(8),
        Conv(9),
        Conv(10),
        Conv(11),
        Up2x,
        ConcatSkip,
        Conv(12),
        Conv(13),
        Conv(14),
        Up2x,
        ConcatSkip,
        Conv(15),
        Conv(16),
        Conv(17),
        Conv(18),
    ]
}

/// Whether a forward pass caches what backprop needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm uses batch statistics and updates running estimates;
    /// forward caches activations for [`SegModel::backward`].
    Train,
    /// Batch-norm uses running statistics; nothing is cached or mutated.
    Infer,
}

/// Separable conv + optional batch norm (dropped after folding), activated by
/// a shared leaky rectifier.
#[derive(Debug, Clone)]
pub struct ConvBlock<F: Scalar = f32> {
    pub conv: SeparableConv2d<F>,
    pub norm: Option<BatchNorm<F>>,
}

struct BlockCache<F: Scalar> {
    conv: ConvCache<F>,
    bn: BnCache<F>,
    /// Batch-norm output: the leaky rectifier's input, whose sign picks the
    /// backward slope.
    pre_activation: Batch<F>,
}

enum StepCache<F: Scalar> {
    Conv(BlockCache<F>),
    SaveSkip,
    Up2x,
    ConcatSkip { a_channels: usize },
}

/// Parameter gradients for one block, mirroring its field layout.
#[derive(Debug, Clone)]
pub struct BlockGrads<F: Scalar = f32> {
    pub conv: SeparableConvGrads<F>,
    pub bn: BnGrads<F>,
}

/// Gradients for the whole model, in block order.
#[derive(Debug, Clone)]
pub struct ModelGradients<F: Scalar = f32> {
    pub blocks: Vec<BlockGrads<F>>,
}

impl<F: Scalar> ModelGradients<F> {
    /// Flat views of every gradient array, in the same order as
    /// [`SegModel::parameter_slices_mut`].
    pub fn slices(&self) -> Vec<&[F]> {
        let mut out = Vec::with_capacity(self.blocks.len() * 5);
        for b in &self.blocks {
            out.push(b.conv.depthwise.data());
            out.push(b.conv.pointwise.as_slice());
            out.push(b.conv.bias.as_slice());
            out.push(b.bn.gamma.as_slice());
            out.push(b.bn.beta.as_slice());
        }
        out
    }
}

/// Parameter tally for one conv block.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LayerParams {
    pub index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub depthwise: usize,
    pub pointwise: usize,
    pub bias: usize,
    /// gamma + beta when batch norm is present, 0 after folding.
    pub batch_norm: usize,
    pub trainable: usize,
}

/// Full parameter census of a model.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ParameterCount {
    pub layers: Vec<LayerParams>,
    pub trainable: usize,
    /// Running mean/var slots (not trained by gradient descent).
    pub running_stats: usize,
}

/// One row of the structural summary: a plan step with its output shape and
/// trainable parameter count.
#[derive(Debug, Clone)]
pub struct LayerRow {
    pub name: String,
    pub output: Shape,
    pub trainable: usize,
}

/// The segmentation network.
///
/// Built for one fixed input resolution; [`Self::forward`] validates inputs
/// against it. Train mode mutates (running statistics, cached activations)
/// and must stay on a single worker; an infer-mode model is immutable
/// through [`Self::forward_infer`] and freely shareable.
pub struct SegModel<F: Scalar = f32> {
    input_shape: Shape,
    alpha: F,
    blocks: Vec<ConvBlock<F>>,
    plan: Vec<Step>,
    mode: Mode,
    cache: Option<Vec<StepCache<F>>>,
}

impl<F: Scalar> Clone for SegModel<F> {
    /// Clones weights and configuration; cached activations are not carried
    /// over (the clone cannot run `backward` until it runs `forward`).
    fn clone(&self) -> Self {
        SegModel {
            input_shape: self.input_shape,
            alpha: self.alpha,
            blocks: self.blocks.clone(),
            plan: self.plan.clone(),
            mode: self.mode,
            cache: None,
        }
    }
}

impl<F: Scalar> std::fmt::Debug for SegModel<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegModel")
            .field("input_shape", &self.input_shape)
            .field("mode", &self.mode)
            .field("blocks", &self.blocks.len())
            .field("folded", &self.is_folded())
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl<F: Scalar> SegModel<F> {
    /// Model with all-zero weights and identity batch norms, in train mode.
    ///
    /// # Errors
    /// Errors unless both dims are positive multiples of
    /// [`RESOLUTION_DIVISOR`].
    pub fn new(input_height: usize, input_width: usize) -> Result<Self> {
        if input_height == 0
            || input_width == 0
            || input_height % RESOLUTION_DIVISOR != 0
            || input_width % RESOLUTION_DIVISOR != 0
        {
            return Err(Error::Precondition(format!(
                "input dims must be positive multiples of {RESOLUTION_DIVISOR}, got {input_height}x{input_width}"
            )));
        }
        let blocks = BLOCK_SPECS
            .iter()
            .map(|&(ci, co, stride)| {
                Ok(ConvBlock {
                    conv: SeparableConv2d::new(ci, co, stride)?,
                    norm: Some(BatchNorm::new(co)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SegModel {
            input_shape: Shape::new(input_height, input_width, INPUT_CHANNELS),
            alpha: scalar(DEFAULT_LEAKY_ALPHA),
            blocks,
            plan: execution_plan(),
            mode: Mode::Train,
            cache: None,
        })
    }

    /// Model with weights drawn from seeded fan-in-scaled uniform
    /// distributions (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`); biases zero,
    /// batch norms identity. Two builds with the same seed are bit-identical.
    pub fn seeded(input_height: usize, input_width: usize, seed: u64) -> Result<Self> {
        let mut model = Self::new(input_height, input_width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut model.blocks {
            let dw_limit = (6.0f64 / 9.0).sqrt();
            for v in block.conv.depthwise.data_mut() {
                *v = scalar(rng.gen_range(-dw_limit..dw_limit));
            }
            let pw_limit = (6.0 / block.conv.in_channels() as f64).sqrt();
            for v in &mut block.conv.pointwise {
                *v = scalar(rng.gen_range(-pw_limit..pw_limit));
            }
        }
        Ok(model)
    }

    /// The `h x w x 3` shape this model accepts.
    #[inline]
    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    /// The `h x w x 5` logit shape this model produces.
    #[inline]
    pub fn output_shape(&self) -> Shape {
        self.input_shape.with_channels(CLASS_CHANNELS)
    }

    #[inline]
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Switches mode; entering infer mode drops any cached activations.
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        if mode == Mode::Infer {
            self.cache = None;
        }
    }

    /// Negative slope of the shared leaky rectifier.
    #[inline]
    pub fn leaky_alpha(&self) -> F {
        self.alpha
    }

    /// Rebuilds the model with a different rectifier slope.
    ///
    /// The slope is a build-time choice, not a trained value: weight files
    /// do not store it, so a reloaded model starts back at the default and
    /// inference must be configured with the slope used in training. Larger
    /// slopes (0.1-0.3) let rare-class logits travel to confident values in
    /// far fewer optimizer steps, since the negative side of the rectifier
    /// divides the batch-norm output by the slope.
    ///
    /// # Errors
    /// Errors unless `0 < alpha < 1`.
    pub fn with_leaky_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Precondition(format!(
                "leaky slope must be in (0, 1), got {alpha}"
            )));
        }
        self.alpha = scalar(alpha);
        self.cache = None;
        Ok(self)
    }

    #[inline]
    pub fn blocks(&self) -> &[ConvBlock<F>] {
        &self.blocks
    }

    #[inline]
    pub fn blocks_mut(&mut self) -> &mut [ConvBlock<F>] {
        &mut self.blocks
    }

    #[inline]
    pub fn plan(&self) -> &[Step] {
        &self.plan
    }

    /// True once every batch norm has been folded away.
    pub fn is_folded(&self) -> bool {
        self.blocks.iter().all(|b| b.norm.is_none())
    }

    /// Runs the network according to [`Self::mode`]: train mode caches
    /// activations for [`Self::backward`] and updates batch-norm running
    /// statistics; infer mode is read-only.
    ///
    /// # Errors
    /// Errors if the input shape does not match [`Self::input_shape`], or in
    /// train mode if the model has been folded.
    pub fn forward(&mut self, input: &Batch<F>) -> Result<Batch<F>> {
        match self.mode {
            Mode::Infer => self.forward_infer(input),
            Mode::Train => self.forward_train(input),
        }
    }

    fn forward_train(&mut self, input: &Batch<F>) -> Result<Batch<F>> {
        input.assert_shape(self.input_shape)?;
        if self.is_folded() {
            return Err(Error::Precondition(
                "cannot train a folded model: batch norms were removed".into(),
            ));
        }
        let mut caches = Vec::with_capacity(self.plan.len());
        let mut skips: Vec<Batch<F>> = Vec::new();
        let mut current = input.clone();
        let plan = self.plan.clone();
        for step in plan {
            match step {
                Step::Conv(i) => {
                    let block = &mut self.blocks[i];
                    let (v, conv_cache) = block.conv.forward_cached(&current)?;
                    let norm = block
                        .norm
                        .as_mut()
                        .expect("unfolded model has batch norms");
                    let (w, bn_cache) = norm.forward_train(&v)?;
                    current = leaky_relu(&w, self.alpha);
                    caches.push(StepCache::Conv(BlockCache {
                        conv: conv_cache,
                        bn: bn_cache,
                        pre_activation: w,
                    }));
                }
                Step::SaveSkip => {
                    skips.push(current.clone());
                    caches.push(StepCache::SaveSkip);
                }
                Step::Up2x => {
                    current = upsample2x(&current);
                    caches.push(StepCache::Up2x);
                }
                Step::ConcatSkip => {
                    let skip = skips.pop().expect("plan balances skip saves and joins");
                    let a_channels = current.shape().channels;
                    current = concat(&current, &skip)?;
                    caches.push(StepCache::ConcatSkip { a_channels });
                }
            }
        }
        self.cache = Some(caches);
        Ok(current)
    }

    /// Read-only forward pass using running statistics (or folded weights);
    /// valid in either mode and shareable across threads.
    ///
    /// # Errors
    /// Errors if the input shape does not match [`Self::input_shape`].
    pub fn forward_infer(&self, input: &Batch<F>) -> Result<Batch<F>> {
        input.assert_shape(self.input_shape)?;
        let mut skips: Vec<Batch<F>> = Vec::new();
        let mut current = input.clone();
        for step in &self.plan {
            match step {
                Step::Conv(i) => {
                    let block = &self.blocks[*i];
                    let v = block.conv.forward(&current)?;
                    current = match &block.norm {
                        Some(norm) => leaky_relu(&norm.forward_infer(&v)?, self.alpha),
                        None => leaky_relu(&v, self.alpha),
                    };
                }
                Step::SaveSkip => skips.push(current.clone()),
                Step::Up2x => current = upsample2x(&current),
                Step::ConcatSkip => {
                    let skip = skips.pop().expect("plan balances skip saves and joins");
                    current = concat(&current, &skip)?;
                }
            }
        }
        Ok(current)
    }

    /// Backpropagates a loss gradient (w.r.t. the logits) through the cached
    /// train-mode forward, consuming the cache.
    ///
    /// # Errors
    /// Errors if no train-mode forward is cached or the gradient shape is
    /// wrong.
    pub fn backward(&mut self, loss_grad: &Batch<F>) -> Result<ModelGradients<F>> {
        let caches = self.cache.take().ok_or_else(|| {
            Error::Precondition("backward requires a cached train-mode forward".into())
        })?;
        loss_grad.assert_shape(self.output_shape())?;

        let mut block_grads: Vec<Option<BlockGrads<F>>> =
            (0..self.blocks.len()).map(|_| None).collect();
        let mut skip_grads: Vec<Batch<F>> = Vec::new();
        let mut grad = loss_grad.clone();
        for (step, cache) in self.plan.iter().zip(caches.iter()).rev() {
            match (step, cache) {
                (Step::Conv(i), StepCache::Conv(bc)) => {
                    let block = &self.blocks[*i];
                    let dw = leaky_relu_backward(&bc.pre_activation, &grad, self.alpha)?;
                    let norm = block.norm.as_ref().expect("unfolded model");
                    let (dv, bn_grads) = norm.backward(&bc.bn, &dw)?;
                    let (dx, conv_grads) = block.conv.backward(&bc.conv, &dv)?;
                    block_grads[*i] = Some(BlockGrads {
                        conv: conv_grads,
                        bn: bn_grads,
                    });
                    grad = dx;
                }
                (Step::SaveSkip, StepCache::SaveSkip) => {
                    let extra = skip_grads.pop().expect("skip gradients balance");
                    add_into(&mut grad, &extra);
                }
                (Step::Up2x, StepCache::Up2x) => {
                    grad = upsample2x_backward(&grad)?;
                }
                (Step::ConcatSkip, StepCache::ConcatSkip { a_channels }) => {
                    let (ga, gb) = concat_backward(&grad, *a_channels)?;
                    skip_grads.push(gb);
                    grad = ga;
                }
                _ => unreachable!("plan and cache walked in lockstep"),
            }
        }
        Ok(ModelGradients {
            blocks: block_grads
                .into_iter()
                .map(|g| g.expect("every block visited"))
                .collect(),
        })
    }

    /// Convenience composition for training: forward, fused
    /// sigmoid-cross-entropy, backward. Returns the mean loss and the
    /// parameter gradients.
    pub fn train_step_gradients(
        &mut self,
        input: &Batch<F>,
        targets: &Batch<F>,
    ) -> Result<(f64, ModelGradients<F>)> {
        let logits = self.forward_train(input)?;
        let (loss, grad) = bce_with_logits(&logits, targets)?;
        Ok((loss, self.backward(&grad)?))
    }

    /// Mutable flat views of every trainable array: per block, in order
    /// depthwise, pointwise, bias, gamma, beta. Alignment with
    /// [`ModelGradients::slices`] is what the optimizer relies on.
    ///
    /// Folded models have no gamma/beta slices, so optimizer state built
    /// against an unfolded model no longer lines up — another reason folded
    /// models refuse to train.
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::with_capacity(self.blocks.len() * 5);
        for b in &mut self.blocks {
            out.push(b.conv.depthwise.data_mut());
            out.push(b.conv.pointwise.as_mut_slice());
            out.push(b.conv.bias.as_mut_slice());
            if let Some(norm) = &mut b.norm {
                out.push(norm.gamma.as_mut_slice());
                out.push(norm.beta.as_mut_slice());
            }
        }
        out
    }

    /// Folds every batch norm into its convolution for faster inference.
    /// Idempotent: already-folded blocks pass through unchanged.
    ///
    /// # Errors
    /// Errors unless the model is in infer mode (folding bakes in the
    /// *running* statistics; folding a training model would silently change
    /// what it computes).
    pub fn prepare_inference(mut self) -> Result<SegModel<F>> {
        if self.mode != Mode::Infer {
            return Err(Error::Precondition(
                "prepare_inference requires infer mode".into(),
            ));
        }
        for block in &mut self.blocks {
            if let Some(norm) = block.norm.take() {
                block.conv = fold_batch_norm(&block.conv, &norm)?;
            }
        }
        Ok(self)
    }

    /// Census of trainable parameters (and running-stat slots) per layer.
    pub fn count_parameters(&self) -> ParameterCount {
        let mut layers = Vec::with_capacity(self.blocks.len());
        let mut trainable = 0;
        let mut running = 0;
        for (index, b) in self.blocks.iter().enumerate() {
            let (ci, co) = (b.conv.in_channels(), b.conv.out_channels());
            let depthwise = 9 * ci;
            let pointwise = ci * co;
            let bias = co;
            let batch_norm = b.norm.as_ref().map_or(0, |n| n.parameter_count());
            let layer_total = depthwise + pointwise + bias + batch_norm;
            trainable += layer_total;
            running += b.norm.as_ref().map_or(0, |n| 2 * n.channels());
            layers.push(LayerParams {
                index,
                in_channels: ci,
                out_channels: co,
                stride: b.conv.stride(),
                depthwise,
                pointwise,
                bias,
                batch_norm,
                trainable: layer_total,
            });
        }
        ParameterCount {
            layers,
            trainable,
            running_stats: running,
        }
    }

    /// Structural summary: every plan step with its output shape at this
    /// model's input resolution and its trainable parameter count.
    pub fn layer_table(&self) -> Vec<LayerRow> {
        let counts = self.count_parameters();
        let mut rows = Vec::with_capacity(self.plan.len() + 1);
        let mut shape = self.input_shape;
        let mut skips: Vec<Shape> = Vec::new();
        rows.push(LayerRow {
            name: "input".into(),
            output: shape,
            trainable: 0,
        });
        for step in &self.plan {
            match step {
                Step::Conv(i) => {
                    let b = &self.blocks[*i];
                    shape = Shape::new(
                        shape.height / b.conv.stride(),
                        shape.width / b.conv.stride(),
                        b.conv.out_channels(),
                    );
                    let bn = if b.norm.is_some() { "+bn" } else { "" };
                    rows.push(LayerRow {
                        name: format!(
                            "sconv{} {}->{}{bn}+lrelu",
                            if b.conv.stride() == 2 { "/2" } else { "" },
                            b.conv.in_channels(),
                            b.conv.out_channels(),
                        ),
                        output: shape,
                        trainable: counts.layers[*i].trainable,
                    });
                }
                Step::SaveSkip => {
                    skips.push(shape);
                    rows.push(LayerRow {
                        name: "skip save".into(),
                        output: shape,
                        trainable: 0,
                    });
                }
                Step::Up2x => {
                    shape = Shape::new(shape.height * 2, shape.width * 2, shape.channels);
                    rows.push(LayerRow {
                        name: "up2x".into(),
                        output: shape,
                        trainable: 0,
                    });
                }
                Step::ConcatSkip => {
                    let skip = skips.pop().expect("plan balances skips");
                    shape = shape.with_channels(shape.channels + skip.channels);
                    rows.push(LayerRow {
                        name: "concat skip".into(),
                        output: shape,
                        trainable: 0,
                    });
                }
            }
        }
        rows
    }

    /// Scalar-type conversion (drops any cached activations).
    pub fn cast<G: Scalar>(&self) -> SegModel<G> {
        SegModel {
            input_shape: self.input_shape,
            alpha: scalar(crate::tensor::widen(self.alpha)),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    conv: b.conv.cast(),
                    norm: b.norm.as_ref().map(|n| n.cast()),
                })
                .collect(),
            plan: self.plan.clone(),
            mode: self.mode,
            cache: None,
        }
    }
}

fn add_into<F: Scalar>(dst: &mut Batch<F>, src: &Batch<F>) {
    for (d, s) in dst.items_mut().iter_mut().zip(src.iter()) {
        for (dv, sv) in d.data_mut().iter_mut().zip(s.data()) {
            *dv += *sv;
        }
    }
}

/// Per-pixel hard decision: classes whose sigmoid probability reaches 0.5
/// are candidates, the highest-probability candidate wins, and a pixel with
/// no candidate is background (class index 0; channel `c` maps to class
/// `c + 1`).
///
/// Input is the `h x w x 5` **probability** tensor (sigmoid already
/// applied); output values are mask class indices `0..=5`.
pub fn probabilities_to_classes(probs: &Tensor) -> Vec<u8> {
    let c = probs.channels();
    probs
        .data()
        .chunks_exact(c)
        .map(|px| {
            let mut best: Option<(usize, f32)> = None;
            for (ch, &p) in px.iter().enumerate() {
                if p >= 0.5 && best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((ch, p));
                }
            }
            best.map_or(0, |(ch, _)| (ch + 1) as u8)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::sigmoid;
    use crate::verify::{max_relative_error, numeric_gradient, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(seed: u64, items: usize, shape: Shape) -> Batch<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Batch::new(
            (0..items)
                .map(|_| {
                    Tensor::from_vec(
                        shape,
                        (0..shape.len()).map(|_| r.gen_range(0.0..1.0)).collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_model_emits_zero_logits_and_half_probabilities() {
        let mut model = SegModel::<f64>::new(8, 8).unwrap();
        let input = random_batch(1, 1, Shape::new(8, 8, 3));
        let logits = model.forward(&input).unwrap();
        assert_eq!(logits.shape(), Shape::new(8, 8, 5));
        assert!(logits.items()[0].data().iter().all(|&v| v == 0.0));
        let probs = sigmoid(&logits);
        assert!(probs.items()[0].data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rejects_bad_resolutions() {
        assert!(SegModel::<f32>::new(10, 8).is_err());
        assert!(SegModel::<f32>::new(8, 6).is_err());
        assert!(SegModel::<f32>::new(0, 8).is_err());
        assert!(SegModel::<f32>::new(8, 8).is_ok());
    }

    #[test]
    fn rejects_mismatched_input() {
        let mut model = SegModel::<f64>::new(8, 8).unwrap();
        let input = random_batch(2, 1, Shape::new(8, 12, 3));
        assert!(model.forward(&input).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let model = SegModel::<f64>::seeded(8, 12, 5).unwrap();
        let input = random_batch(3, 2, Shape::new(8, 12, 3));
        let a = model.forward_infer(&input).unwrap();
        let b = model.forward_infer(&input).unwrap();
        for (x, y) in a.items().iter().zip(b.items()) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn seeded_builds_are_reproducible_and_seed_sensitive() {
        let a = SegModel::<f32>::seeded(8, 8, 1).unwrap();
        let b = SegModel::<f32>::seeded(8, 8, 1).unwrap();
        let c = SegModel::<f32>::seeded(8, 8, 2).unwrap();
        for (x, y) in a.blocks().iter().zip(b.blocks()) {
            assert_eq!(x.conv.depthwise.data(), y.conv.depthwise.data());
            assert_eq!(x.conv.pointwise, y.conv.pointwise);
        }
        assert_ne!(
            a.blocks()[0].conv.pointwise,
            c.blocks()[0].conv.pointwise,
            "different seeds should differ"
        );
    }

    /// Straight-line transliteration of the layer table, executed with the
    /// layer primitives directly; the plan-driven forward must match it.
    #[test]
    fn forward_matches_reference_interpreter() {
        let mut model = SegModel::<f64>::seeded(8, 8, 17).unwrap();
        // Give batch norms non-trivial running stats so inference is not an
        // identity.
        let mut r = ChaCha8Rng::seed_from_u64(18);
        for b in model.blocks_mut() {
            let norm = b.norm.as_mut().unwrap();
            for v in norm.running_mean.iter_mut() {
                *v = r.gen_range(-0.3..0.3);
            }
            for v in norm.running_var.iter_mut() {
                *v = r.gen_range(0.5..1.5);
            }
            for v in norm.gamma.iter_mut() {
                *v = r.gen_range(0.7..1.3);
            }
            for v in norm.beta.iter_mut() {
                *v = r.gen_range(-0.2..0.2);
            }
        }
        let input = random_batch(19, 1, Shape::new(8, 8, 3));

        let alpha = model.leaky_alpha();
        let infer_block = |i: usize, x: &Batch<f64>| -> Batch<f64> {
            let b = &model.blocks()[i];
            let v = b.conv.forward(x).unwrap();
            let w = b.norm.as_ref().unwrap().forward_infer(&v).unwrap();
            leaky_relu(&w, alpha)
        };

        // Encoder.
        let stem = infer_block(0, &input); // 8ch @ 1 (skip A)
        let e1 = infer_block(1, &stem);
        let e2 = infer_block(2, &e1); // 8ch @ 1/2
        let e3 = infer_block(3, &e2);
        let e4 = infer_block(4, &e3); // 16ch @ 1/2 (skip B)
        let e5 = infer_block(5, &e4); // 16ch @ 1/4
        let mut deep = infer_block(6, &e5);
        for i in 7..=11 {
            deep = infer_block(i, &deep); // 24ch @ 1/4
        }
        // Decoder.
        let up1 = upsample2x(&deep);
        let cat1 = concat(&up1, &e4).unwrap(); // 24 + 16 = 40
        let mut d = infer_block(12, &cat1);
        d = infer_block(13, &d);
        d = infer_block(14, &d);
        let up2 = upsample2x(&d);
        let cat2 = concat(&up2, &stem).unwrap(); // 16 + 8 = 24
        d = infer_block(15, &cat2);
        d = infer_block(16, &d);
        d = infer_block(17, &d);
        let reference = infer_block(18, &d);

        model.set_mode(Mode::Infer);
        let output = model.forward(&input).unwrap();
        assert_eq!(output.shape(), Shape::new(8, 8, 5));
        for (a, b) in output.items()[0]
            .data()
            .iter()
            .zip(reference.items()[0].data())
        {
            assert!(relative_error(*a, *b) < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn parameter_count_matches_independent_summation() {
        let model = SegModel::<f32>::new(8, 8).unwrap();
        let count = model.count_parameters();
        // Independent tally straight off the layer table.
        let mut expected = 0usize;
        for &(ci, co, _) in BLOCK_SPECS.iter() {
            expected += 9 * ci + ci * co + co + 2 * co;
        }
        assert_eq!(count.trainable, expected);
        assert_eq!(count.trainable, 9282);
        assert_eq!(count.layers[0].trainable, 75);
        assert_eq!(count.running_stats, 586);
    }

    #[test]
    fn folding_removes_batch_norm_parameters() {
        let mut model = SegModel::<f32>::seeded(8, 8, 7).unwrap();
        model.set_mode(Mode::Infer);
        let folded = model.prepare_inference().unwrap();
        assert!(folded.is_folded());
        let count = folded.count_parameters();
        assert_eq!(count.trainable, 9282 - 586);
        assert_eq!(count.running_stats, 0);
    }

    #[test]
    fn folded_model_matches_unfolded_inference() {
        let mut model = SegModel::<f64>::seeded(12, 8, 23).unwrap();
        // Non-trivial batch-norm state via a few training steps.
        let input = random_batch(24, 2, Shape::new(12, 8, 3));
        model.forward(&input).unwrap();
        model.forward(&input).unwrap();
        model.set_mode(Mode::Infer);
        let unfolded_out = model.forward_infer(&input).unwrap();
        let folded = model.prepare_inference().unwrap();
        let folded_out = folded.forward_infer(&input).unwrap();
        for (a, b) in unfolded_out.items()[0]
            .data()
            .iter()
            .zip(folded_out.items()[0].data())
        {
            assert!((a - b).abs() < 1e-9, "folded diverged: {a} vs {b}");
        }
        // Idempotent: folding again changes nothing.
        let again = folded.prepare_inference().unwrap();
        let again_out = again.forward_infer(&input).unwrap();
        assert_eq!(folded_out.items()[0].data(), again_out.items()[0].data());
    }

    #[test]
    fn prepare_inference_requires_infer_mode() {
        let model = SegModel::<f32>::new(8, 8).unwrap();
        assert!(model.prepare_inference().is_err());
    }

    #[test]
    fn every_parameter_gets_a_nonzero_gradient() {
        let mut model = SegModel::<f64>::seeded(8, 8, 31).unwrap();
        let input = random_batch(32, 2, Shape::new(8, 8, 3));
        let target = random_batch(33, 2, Shape::new(8, 8, 5))
            .map_items(|t| t.map(|v| f64::from(v > 0.5)));
        let (_, grads) = model.train_step_gradients(&input, &target).unwrap();
        for (i, slice) in grads.slices().iter().enumerate() {
            assert!(
                slice.iter().any(|&g| g != 0.0),
                "gradient slice {i} is all zeros"
            );
        }
    }

    /// Spot finite-difference check through the full network (the exhaustive
    /// sweep lives in the acceptance suite).
    #[test]
    fn sampled_model_gradients_match_finite_differences() {
        let model = SegModel::<f64>::seeded(4, 4, 37).unwrap();
        let input = random_batch(38, 1, Shape::new(4, 4, 3));
        let target = random_batch(39, 1, Shape::new(4, 4, 5))
            .map_items(|t| t.map(|v| f64::from(v > 0.5)));

        let mut probe = model.cast::<f64>();
        let (_, grads) = probe.train_step_gradients(&input, &target).unwrap();
        let grad_slices = grads.slices();

        let mut r = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..6 {
            let block = r.gen_range(0..grad_slices.len());
            let analytic = grad_slices[block];
            let idx = r.gen_range(0..analytic.len());
            // Perturb exactly one parameter via the slice interface.
            let base = {
                let mut m = model.cast::<f64>();
                let v = m.parameter_slices_mut()[block][idx];
                v
            };
            let numeric = numeric_gradient(&[base], 1e-4, |v| {
                let mut m = model.cast::<f64>();
                m.parameter_slices_mut()[block][idx] = v[0];
                let logits = m.forward(&input).unwrap();
                bce_with_logits(&logits, &target).unwrap().0
            });
            let err = max_relative_error(&[analytic[idx]], &numeric);
            assert!(err < 1e-4, "slice {block} index {idx}: rel err {err}");
        }
    }

    #[test]
    fn layer_table_reports_structure() {
        let model = SegModel::<f32>::new(16, 32).unwrap();
        let rows = model.layer_table();
        assert_eq!(rows.len(), 26); // input + 25 plan steps
        assert_eq!(rows[0].output, Shape::new(16, 32, 3));
        let concat_channels: Vec<usize> = rows
            .iter()
            .filter(|r| r.name == "concat skip")
            .map(|r| r.output.channels)
            .collect();
        assert_eq!(concat_channels, vec![40, 24]);
        let last = rows.last().unwrap();
        assert_eq!(last.output, Shape::new(16, 32, 5));
    }

    #[test]
    fn decision_rule_prefers_highest_confident_class() {
        let mut probs = Tensor::zeros(Shape::new(1, 3, 5));
        // Pixel 0: nothing confident -> background (0).
        probs.pixel_mut(0, 0).copy_from_slice(&[0.2, 0.3, 0.49, 0.1, 0.0]);
        // Pixel 1: channels 1 and 3 confident, 3 higher -> class 4 (ball).
        probs.pixel_mut(0, 1).copy_from_slice(&[0.2, 0.6, 0.3, 0.9, 0.1]);
        // Pixel 2: exactly 0.5 counts -> class 5 (goal post).
        probs.pixel_mut(0, 2).copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(probabilities_to_classes(&probs), vec![0, 4, 5]);
    }

    #[test]
    fn rectifier_slope_is_a_buildable_knob() {
        let base: SegModel<f32> = SegModel::seeded(4, 4, 3).unwrap();
        assert_eq!(base.leaky_alpha(), 0.01);
        assert!(base.clone().with_leaky_alpha(0.0).is_err());
        assert!(base.clone().with_leaky_alpha(1.0).is_err());
        assert!(base.clone().with_leaky_alpha(-0.5).is_err());

        let steep = base.clone().with_leaky_alpha(0.3).unwrap();
        assert_eq!(steep.leaky_alpha(), 0.3);
        assert_eq!(steep.clone().leaky_alpha(), 0.3, "clone keeps the slope");
        let widened = steep.cast::<f64>().leaky_alpha();
        assert!((widened - 0.3).abs() < 1e-6, "cast keeps the slope: {widened}");

        // Same weights, different slope: negative pre-activations scale
        // differently, so outputs must diverge.
        let input = Batch::single(Tensor::filled(Shape::new(4, 4, 3), 0.5));
        let a = base.forward_infer(&input).unwrap();
        let b = steep.forward_infer(&input).unwrap();
        assert_ne!(a.items()[0].data(), b.items()[0].data());
    }
}
