use std::collections::HashMap;
use std::sync::Arc;

use crate::array::Array;
use crate::error::{NdError, Result};
use crate::graph::{Graph, Var};

/// Named parameter arrays in insertion order.
///
/// Values are reference counted so binding them into a graph is free; the
/// optimizer copies on write when a snapshot still holds the old value.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Array>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NdError::DuplicateParam(name));
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(Arc::new(value));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NdError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        Ok(&self.values[self.id(name)?])
    }

    pub fn value(&self, id: usize) -> &Arc<Array> {
        &self.values[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(|v| &**v))
    }

    /// Mutable access to one parameter (copy-on-write if shared).
    pub fn value_mut(&mut self, id: usize) -> &mut Array {
        Arc::make_mut(&mut self.values[id])
    }

    pub fn replace(&mut self, name: &str, value: Array) -> Result<()> {
        let id = self.id(name)?;
        if self.values[id].shape() != value.shape() {
            return Err(NdError::Shape {
                op: "replace",
                lhs: self.values[id].shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.values[id] = Arc::new(value);
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Inserts every parameter into `g` as a leaf; the returned handles are
    /// indexed by parameter id.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.param(Arc::clone(v))).collect()
    }

    /// Bit-level equality of names, shapes and values.
    pub fn bit_eq(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Gradient accumulator with one slot per parameter.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    grads: Vec<Array>,
}

impl GradBuffer {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            grads: params
                .values
                .iter()
                .map(|v| Array::zeros(v.shape()))
                .collect(),
        }
    }

    /// Moves the leaf gradients of a finished backward pass into the buffer.
    pub fn absorb(&mut self, g: &mut Graph, bound: &[Var]) {
        for (acc, &v) in self.grads.iter_mut().zip(bound) {
            if let Some(grad) = g.take_grad(v) {
                acc.add_assign(&grad);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }

    pub fn grads(&self) -> &[Array] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [Array] {
        &mut self.grads
    }

    pub fn reset(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }
}
