//! Minimal reverse-mode differentiable tensor engine.
//!
//! Values live in plain row-major buffers. A [`Tape`] records every operation
//! of a forward pass and replays it backwards to produce gradients. Trainable
//! arrays are kept in a [`ParamStore`] keyed by stable dotted paths.
//!
//! The engine is generic over the element type: models train in `f32`, while
//! gradient checks can re-run the identical code path in `f64`.

mod gradcheck;
mod tape;

use std::collections::BTreeMap;
use std::fmt::{Debug, Display};

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

pub use gradcheck::{grad_check, grad_check_with, GradCheck, GradCheckReport};
pub use tape::{Gradients, Tape, Var};

/// Floating point element type usable by the engine.
pub trait Real:
    Float + Default + Debug + Display + Send + Sync + std::iter::Sum + std::ops::AddAssign + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); numel],
            grad: None,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
            grad: None,
        }
    }

    /// Uniform values in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| T::of(rng.gen_range(-bound..=bound)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    /// Marks the tensor as trainable, allocating a zeroed gradient buffer.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![T::zero(); self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Converts the element type, keeping the trainable flag.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::of(v.as_f64())).collect()),
        }
    }
}

/// All trainable arrays of a model, keyed by dotted path.
///
/// Iteration is lexicographic by path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: BTreeMap::new(),
        }
    }

    /// Registers a parameter. Paths must be unique.
    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::Config(format!("duplicate parameter path `{path}`")));
        }
        let tensor = if tensor.requires_grad() {
            tensor
        } else {
            tensor.with_grad()
        };
        self.entries.insert(path, tensor);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(path)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{path}`")))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(path)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{path}`")))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.values_mut().for_each(Tensor::zero_grad);
    }

    /// Adds the parameter gradients recorded on `tape` into the stored
    /// gradient buffers.
    pub fn accumulate(&mut self, tape: &Tape<T>, grads: &Gradients<T>) -> Result<()> {
        for (path, var) in tape.param_vars() {
            let Some(g) = grads.get(var) else { continue };
            let tensor = self.get_mut(path)?;
            let buf = tensor
                .grad
                .get_or_insert_with(|| vec![T::zero(); g.len()]);
            for (b, v) in buf.iter_mut().zip(g) {
                *b += *v;
            }
        }
        Ok(())
    }

    /// Global L2 norm over all gradient buffers.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: T) {
        for t in self.entries.values_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v = *v * factor);
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Bitwise equality of all parameter values (gradients ignored).
    pub fn values_equal(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(other.entries.iter()).all(|(a, b)| {
                a.0 == b.0
                    && a.1.shape == b.1.shape
                    && a.1
                        .data
                        .iter()
                        .zip(&b.1.data)
                        .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }
}

#[cfg(test)]
mod store_tests {
    use super::*;

    #[test]
    fn tensor_rejects_bad_length() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
        assert!(!t.requires_grad());
    }

    #[test]
    fn store_paths_are_unique_and_sorted() {
        let mut store = ParamStore::<f32>::new();
        store.insert("b.weight", Tensor::zeros(&[2])).unwrap();
        store.insert("a.weight", Tensor::zeros(&[3])).unwrap();
        assert!(store.insert("a.weight", Tensor::zeros(&[1])).is_err());
        let paths: Vec<_> = store.iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(paths, vec!["a.weight", "b.weight"]);
        assert!(store.iter().all(|(_, t)| t.requires_grad()));
        assert_eq!(store.num_scalars(), 5);
    }

    #[test]
    fn cast_roundtrip_keeps_values() {
        let t = Tensor::<f32>::new(vec![2], vec![0.1, -3.5]).unwrap();
        let back: Tensor<f32> = t.cast::<f64>().cast();
        assert_eq!(t, back);
    }
}
