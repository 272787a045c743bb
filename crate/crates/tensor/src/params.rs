use std::collections::HashMap;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;
use crate::Result;

/// A named trainable tensor.
///
/// Values are always carried as rank-4 tensors; `logical_dims` records the
/// tensor's declared rank (0 for scalars such as blend coefficients, 1 for
/// biases, 2 for projection matrices, 4 for convolution kernels) as written
/// to checkpoints.
#[derive(Clone, Debug)]
pub struct ParamTensor<S> {
    pub name: String,
    pub value: Tensor4<S>,
    pub logical_dims: Vec<u32>,
}

/// Ordered map of parameter tensors with deterministic (lexicographic by
/// name) iteration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    entries: Vec<ParamTensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Inserts a tensor, keeping entries sorted by name.
    pub fn insert(
        &mut self,
        name: impl Into<String>,
        value: Tensor4<S>,
        logical_dims: Vec<u32>,
    ) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::invalid(
                "param_store",
                format!("duplicate parameter name {name}"),
            ));
        }
        let logical_numel: usize = logical_dims.iter().map(|&d| d as usize).product();
        if logical_numel != value.numel() {
            return Err(TensorError::shape(
                "param_store",
                format!(
                    "{name}: logical dims {:?} do not cover {} elements",
                    logical_dims,
                    value.numel()
                ),
            ));
        }
        let pos = self
            .entries
            .binary_search_by(|e| e.name.as_str().cmp(&name))
            .unwrap_err();
        self.entries.insert(
            pos,
            ParamTensor {
                name,
                value,
                logical_dims,
            },
        );
        self.rebuild_index();
        Ok(())
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            self.index.insert(e.name.clone(), i);
        }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: usize) -> &ParamTensor<S> {
        &self.entries[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor4<S> {
        &mut self.entries[id].value
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamTensor<S>> {
        self.id(name).map(|i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor<S>> {
        self.entries.iter()
    }

    /// Total number of scalar parameters.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let entries: Vec<ParamTensor<T>> = self
            .entries
            .iter()
            .map(|e| ParamTensor {
                name: e.name.clone(),
                value: e.value.cast::<T>(),
                logical_dims: e.logical_dims.clone(),
            })
            .collect();
        let mut store = ParamStore {
            entries,
            index: HashMap::new(),
        };
        store.rebuild_index();
        store
    }
}

/// Per-parameter gradient accumulators, indexed like a [`ParamStore`].
/// Slots left `None` are exactly zero (the parameter did not participate).
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    slots: Vec<Option<Tensor4<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros(len: usize) -> Self {
        Gradients {
            slots: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn accumulate(&mut self, slot: usize, grad: &Tensor4<S>) {
        match &mut self.slots[slot] {
            Some(g) => g.add_assign(grad),
            s @ None => *s = Some(grad.clone()),
        }
    }

    pub fn get(&self, slot: usize) -> Option<&Tensor4<S>> {
        self.slots[slot].as_ref()
    }

    /// Adds another gradient set (same slot layout).
    pub fn add_from(&mut self, other: &Gradients<S>) {
        assert_eq!(self.slots.len(), other.slots.len());
        for (slot, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(slot, g);
            }
        }
    }

    pub fn scale(&mut self, k: S) {
        for g in self.slots.iter_mut().flatten() {
            g.scale_in_place(k);
        }
    }
}
