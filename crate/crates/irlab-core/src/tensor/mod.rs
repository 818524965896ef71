//! Minimal dense-array compute layer with reverse-mode gradients.
//!
//! The design is a flat tape: every forward op appends a node holding its
//! output values and whatever the backward pass needs (input node ids,
//! pooling argmaxes). Learnable parameters live outside the tape in a
//! [`ParamStore`] and are referenced by [`ParamId`], so a forward pass never
//! copies large tables. One tape scores one example; training builds a fresh
//! tape per example and accumulates gradients into the store.
//!
//! Conventions: row-major storage, valid-mode convolutions, non-overlapping
//! pooling windows (a short trailing window pools over the remainder), and
//! pooling ties broken toward the lowest input index. The relu and hinge
//! subgradients at exactly zero are zero.

mod gradcheck;
mod optim;
mod tape;
#[cfg(test)]
mod tests;

pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{Optimizer, OptimizerKind};
pub use tape::{NodeId, Tape};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Op received tensors whose shapes do not combine; names the op.
    ShapeMismatch { op: &'static str, detail: String },
    /// Backward or a gradient check was asked for on a non-scalar node.
    NonScalarLoss { shape: Vec<usize> },
    /// An optimizer step saw a non-finite gradient; fail fast.
    NonFiniteGradient { param: String },
    /// An op that requires data got an empty tensor.
    EmptyInput { op: &'static str },
    DuplicateParam { name: String },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, detail } => {
                write!(f, "shape mismatch in {op}: {detail}")
            }
            TensorError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            TensorError::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for parameter {param:?}")
            }
            TensorError::EmptyInput { op } => write!(f, "{op} received an empty tensor"),
            TensorError::DuplicateParam { name } => {
                write!(f, "parameter {name:?} registered twice")
            }
        }
    }
}

/// Dense row-major array. The value count always equals the shape product;
/// scalars have an empty shape and one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: alloc::vec![0.0; len] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: alloc::vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: alloc::vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// A named learnable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Owns every parameter of a model. Names are unique; gradients accumulate
/// across backward passes until [`ParamStore::zero_grads`] resets them, so
/// two backward calls without a reset double the gradient.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateParam { name: String::from(name) });
        }
        let id = self.params.len();
        let grad = Tensor::zeros(value.shape.clone());
        self.params.push(Param { name: String::from(name), value, grad });
        self.by_name.insert(String::from(name), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Adds `grads` into the stored gradients.
    pub fn accumulate(&mut self, grads: &ParamGrads) {
        for (id, g) in grads.iter() {
            let dst = self.params[id.0].grad.data_mut();
            for (d, s) in dst.iter_mut().zip(g.data()) {
                *d += s;
            }
        }
    }

    /// All parameter values are finite.
    pub fn values_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

/// Gradients produced by one backward pass, aligned with a store's params.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub(crate) fn new(n_params: usize) -> Self {
        ParamGrads { grads: alloc::vec![None; n_params] }
    }

    pub(crate) fn entry(&mut self, id: ParamId, shape: &[usize]) -> &mut Tensor {
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(shape.to_vec()))
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|t| (ParamId(i), t)))
    }
}
