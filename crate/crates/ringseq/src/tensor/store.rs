//! Named parameter storage shared across tapes.

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Handle to a parameter in a [`ParamStore`]; stable across save/load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered table of named parameter tensors. The order is the payload order
/// of checkpoints and the gradient order used by the optimizer, so it must
/// not change between construction and use.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub(crate) entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::invalid(
                "param",
                format!("{}: {} values do not fill shape {:?}", name, data.len(), shape),
            ));
        }
        if self.entries.iter().any(|p| p.name == name) {
            return Err(Error::invalid("param", format!("duplicate parameter name {}", name)));
        }
        self.entries.push(Param {
            name,
            shape: shape.to_vec(),
            data,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.data.len()).sum()
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn data(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].data
    }

    /// Iterates over `(name, shape, data)` in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.entries.iter().map(|p| (p.name.as_str(), &p.shape[..], &p.data[..]))
    }

    /// Copies every parameter onto a tape as a leaf, in registration order.
    /// The returned ids are indexed by [`ParamId`].
    pub fn stage(&self, tape: &mut Tape, requires_grad: bool) -> Vec<TensorId> {
        self.entries
            .iter()
            .map(|p| {
                tape.leaf(p.data.clone(), &p.shape, requires_grad)
                    .expect("parameter shapes are validated at registration")
            })
            .collect()
    }

    /// Collects the gradients of staged parameters after a backward pass.
    /// Parameters that received no gradient yield zero vectors.
    pub fn collect_grads(&self, tape: &Tape, staged: &[TensorId]) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .zip(staged)
            .map(|(p, &id)| match tape.grad(id) {
                Some(g) => g.to_vec(),
                None => vec![0.0; p.data.len()],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let mut s = ParamStore::new();
        s.add("w", &[2], vec![1.0, 2.0]).unwrap();
        assert!(s.add("w", &[2], vec![3.0, 4.0]).is_err());
    }

    #[test]
    fn staging_round_trips_values() {
        let mut s = ParamStore::new();
        let id = s.add("w", &[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut tape = Tape::new();
        let staged = s.stage(&mut tape, true);
        assert_eq!(tape.value(staged[id.0]), s.data(id));
    }
}
