//! Dense `(batch, channels, time)` tensors and a minimal reverse-mode
//! autodiff tape.
//!
//! Everything is generic over [`Scalar`] so the same kernels run in f32 for
//! training and in f64 for finite-difference gradient checking ("check
//! mode"). The tape in [`tape`] evaluates eagerly and replays recorded ops in
//! reverse with hand-derived gradients; [`gradcheck`] drives the central
//! finite-difference comparison used throughout the test suite.

pub mod gradcheck;
pub mod tape;

use crate::error::{Error, Result};

/// Element type for tensors: f32 for production, f64 for check mode.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major `(batch, channels, time)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Tensor {
            batch,
            channels,
            len,
            data: vec![T::zero(); batch * channels * len],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::invalid(format!(
                "data length {} does not match shape ({batch}, {channels}, {len})",
                data.len()
            )));
        }
        Ok(Tensor {
            batch,
            channels,
            len,
            data,
        })
    }

    pub fn from_fn(
        batch: usize,
        channels: usize,
        len: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor::zeros(batch, channels, len);
        for b in 0..batch {
            for c in 0..channels {
                for i in 0..len {
                    let v = f(b, c, i);
                    t.data[(b * channels + c) * len + i] = T::from_f64(v);
                }
            }
        }
        t
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let start = (b * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, i: usize) -> T {
        self.data[(b * self.channels + c) * self.len + i]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, i: usize, v: T) {
        self.data[(b * self.channels + c) * self.len + i] = v;
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scalar_value(&self) -> T {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    /// Cast every element through f64.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            batch: self.batch,
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Root mean square of all elements, in f64.
    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let e: f64 = self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum();
        (e / self.data.len() as f64).sqrt()
    }
}

/// Stable handle to one parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Named parameter tensors; the single owner of all trainable state.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (ParamId(i), self.names[i].as_str(), v))
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| v.cast()).collect(),
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}
