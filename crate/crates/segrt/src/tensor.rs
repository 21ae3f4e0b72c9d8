//! Dense rank-3 tensors in `height x width x channels` layout.
//!
//! Storage is a flat row-major buffer with channels innermost:
//! element `(y, x, c)` lives at `(y * width + x) * channels + c`. That layout
//! keeps one pixel's channel vector contiguous, which is what every kernel in
//! [`crate::layers`] iterates over in its inner loop.
//!
//! [`Tensor`] is generic over the scalar type but defaults to `f32`, the
//! storage precision used everywhere in production. The `f64` instantiation
//! exists for the gradient-verification paths, where finite differences need
//! more headroom than single precision provides.

use std::fmt;

/// Scalar types the numeric kernels can run on (`f32` in production, `f64`
/// for gradient verification).
///
/// Constants enter kernels through the usual num-traits idiom
/// (`F::from(0.5).unwrap()`); accumulators widen with `v.to_f64().unwrap()`.
pub trait Scalar:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Infallible narrowing of an `f64` constant into a kernel scalar.
#[inline]
pub(crate) fn scalar<F: Scalar>(v: f64) -> F {
    F::from(v).expect("f64 converts to every Scalar")
}

/// Infallible widening of a kernel scalar for f64 accumulation.
#[inline]
pub(crate) fn widen<F: Scalar>(v: F) -> f64 {
    v.to_f64().expect("every Scalar converts to f64")
}

/// Dimensions of a [`Tensor`]: all components are at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    /// Creates a shape.
    ///
    /// # Panics
    /// Panics if any component is zero; zero-sized tensors are a programmer
    /// error, not a runtime condition.
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        assert!(
            height > 0 && width > 0 && channels > 0,
            "shape components must be positive, got {height}x{width}x{channels}"
        );
        Shape {
            height,
            width,
            channels,
        }
    }

    /// Total number of scalar elements.
    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Number of pixels (`height * width`).
    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Same spatial extent with a different channel count.
    pub fn with_channels(&self, channels: usize) -> Self {
        Shape::new(self.height, self.width, channels)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Dense rank-3 array of scalars in `h x w x c` row-major, channel-innermost
/// layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar = f32> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Tensor of the given shape with every element set to `value`.
    pub fn filled(shape: Shape, value: F) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, F::zero())
    }

    /// All-zero tensor shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape)
    }

    /// Wraps an existing buffer.
    ///
    /// # Panics
    /// Panics if `data.len() != shape.len()`.
    pub fn from_vec(shape: Shape, data: Vec<F>) -> Self {
        assert_eq!(
            data.len(),
            shape.len(),
            "buffer length {} does not match shape {shape}",
            data.len()
        );
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    /// Flat offset of `(y, x, c)`.
    #[inline]
    pub fn offset(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(y < self.shape.height && x < self.shape.width && c < self.shape.channels);
        (y * self.shape.width + x) * self.shape.channels + c
    }

    /// Element at `(y, x, c)`.
    ///
    /// # Panics
    /// Panics (in debug builds via the offset assert, in release via the slice
    /// bound) if the index is out of range.
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> F {
        self.data[self.offset(y, x, c)]
    }

    /// Overwrites the element at `(y, x, c)`.
    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: F) {
        let i = self.offset(y, x, c);
        self.data[i] = value;
    }

    /// The contiguous channel vector of one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[F] {
        let start = (y * self.shape.width + x) * self.shape.channels;
        &self.data[start..start + self.shape.channels]
    }

    /// Mutable channel vector of one pixel.
    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [F] {
        let start = (y * self.shape.width + x) * self.shape.channels;
        &mut self.data[start..start + self.shape.channels]
    }

    /// Read-only view of the flat buffer.
    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// Mutable view of the flat buffer.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Consumes the tensor, returning its buffer.
    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    /// New tensor with `f` applied to every element.
    pub fn map(&self, mut f: impl FnMut(F) -> F) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Applies `f` to every element in place.
    pub fn map_in_place(&mut self, mut f: impl FnMut(F) -> F) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Errors unless the tensor has exactly `expected` shape.
    pub fn assert_shape(&self, expected: Shape) -> crate::Result<()> {
        if self.shape == expected {
            Ok(())
        } else {
            Err(crate::Error::ShapeMismatch {
                expected,
                actual: self.shape,
            })
        }
    }

    /// Converts element-by-element to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| scalar(widen(v))).collect(),
        }
    }
}

/// Non-empty list of same-shaped tensors processed together.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F: Scalar = f32> {
    items: Vec<Tensor<F>>,
}

impl<F: Scalar> Batch<F> {
    /// Wraps a list of tensors.
    ///
    /// # Errors
    /// Errors if the list is empty or the members disagree on shape.
    pub fn new(items: Vec<Tensor<F>>) -> crate::Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| crate::Error::Precondition("batch must be non-empty".into()))?;
        let shape = first.shape();
        for item in &items {
            item.assert_shape(shape)?;
        }
        Ok(Batch { items })
    }

    /// Batch holding a single tensor.
    pub fn single(item: Tensor<F>) -> Self {
        Batch { items: vec![item] }
    }

    /// Shape shared by every member.
    #[inline]
    pub fn shape(&self) -> Shape {
        self.items[0].shape()
    }

    /// Number of members.
    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Batches are never empty, but clippy insists.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn items(&self) -> &[Tensor<F>] {
        &self.items
    }

    #[inline]
    pub fn items_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.items
    }

    pub fn into_items(self) -> Vec<Tensor<F>> {
        self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tensor<F>> {
        self.items.iter()
    }

    /// New batch with `f` applied to every member.
    pub fn map_items(&self, mut f: impl FnMut(&Tensor<F>) -> Tensor<F>) -> Self {
        Batch {
            items: self.items.iter().map(|t| f(t)).collect(),
        }
    }

    /// Total scalar count across members (for loss normalization).
    pub fn total_len(&self) -> usize {
        self.len() * self.shape().len()
    }

    /// Errors unless every member has `expected` shape.
    pub fn assert_shape(&self, expected: Shape) -> crate::Result<()> {
        self.items[0].assert_shape(expected)
    }

    /// Converts every member to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Batch<G> {
        Batch {
            items: self.items.iter().map(|t| t.cast()).collect(),
        }
    }
}

impl<F: Scalar> From<Tensor<F>> for Batch<F> {
    fn from(t: Tensor<F>) -> Self {
        Batch::single(t)
    }
}
