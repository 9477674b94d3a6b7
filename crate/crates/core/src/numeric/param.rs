use std::collections::HashMap;

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Result, TaasError};

/// Index of a [`Parameter`] inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable matrix together with its gradient and Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub gradient: Matrix,
    pub adam_m: Matrix,
    pub adam_v: Matrix,
    pub step_count: u64,
    /// Frozen parameters still receive gradients but the optimizer skips them.
    pub frozen: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let (r, c) = value.shape();
        Parameter {
            name: name.into(),
            gradient: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            value,
            step_count: 0,
            frozen: false,
        }
    }

    pub fn zero_grad(&mut self) {
        self.gradient.fill(0.0);
    }
}

/// Owns every parameter of a model, addressable by id or by dotted name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
    /// Seed the parameters were initialized from; recorded in checkpoints.
    pub seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            ..Default::default()
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TaasError::Contract(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter::new(name, value));
        Ok(id)
    }

    /// Glorot-uniform weight matrix.
    pub fn weight<R: Rng + ?Sized>(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> Result<ParamId> {
        self.add(name, Matrix::xavier(rows, cols, rng))
    }

    /// Zero-initialized `1 x width` bias.
    pub fn bias(&mut self, name: impl Into<String>, width: usize) -> Result<ParamId> {
        self.add(name, Matrix::zeros(1, width))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Sets the frozen flag on every parameter whose name starts with `prefix`.
    /// Returns how many parameters matched.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) -> usize {
        let mut n = 0;
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.frozen = frozen;
            n += 1;
        }
        n
    }

    pub(crate) fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub(crate) fn from_params(params: Vec<Parameter>, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(seed);
        for p in params {
            let name = p.name.clone();
            if store.by_name.contains_key(&name) {
                return Err(TaasError::Checkpoint(format!("duplicate parameter `{name}`")));
            }
            store.by_name.insert(name, ParamId(store.params.len()));
            store.params.push(p);
        }
        Ok(store)
    }
}
