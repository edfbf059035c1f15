use std::collections::HashMap;
use std::sync::Arc;

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in a fixed insertion order.
///
/// The insertion order is the canonical parameter order used by checkpoints
/// and by the optimizer state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Arc<Tensor>>,
    lookup: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter, replacing the value if the name already exists.
    pub fn insert(&mut self, name: &str, value: Tensor) -> ParamId {
        if let Some(&id) = self.lookup.get(name) {
            self.tensors[id.0] = Arc::new(value);
            return id;
        }
        let id = ParamId(self.names.len());
        self.names.push(name.to_owned());
        self.tensors.push(Arc::new(value));
        self.lookup.insert(name.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    /// Mutable access; copies the tensor first if a graph still holds it.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.tensors[id.0])
    }

    pub(crate) fn shared(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.tensors[id.0])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Appends every parameter of `other` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamStore) {
        for id in other.ids() {
            self.insert(&format!("{prefix}{}", other.name(id)), other.get(id).clone());
        }
    }

    /// Parameters whose name starts with `prefix`, with the prefix removed.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new();
        for id in self.ids() {
            if let Some(rest) = self.name(id).strip_prefix(prefix) {
                out.insert(rest, self.get(id).clone());
            }
        }
        out
    }

    /// Bitwise equality of names, shapes and values.
    pub fn same_values(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
