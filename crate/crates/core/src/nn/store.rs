use super::tape::{Tape, TensorRef};
use super::{NnError, Real, Tensor};
use std::collections::BTreeMap;

/// Named map from dot-separated parameter paths to trainable tensors.
/// Iteration order is lexicographic (BTreeMap), which fixes the checkpoint
/// payload order and the optimizer traversal order.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<E: Real> {
    params: BTreeMap<String, Tensor<E>>,
}

impl<E: Real> ParameterStore<E> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new() }
    }

    pub fn insert(&mut self, path: &str, values: Vec<E>, shape: &[usize]) -> Result<(), NnError> {
        if self.params.contains_key(path) {
            return Err(NnError::InvalidArgument {
                op: "parameter_store",
                message: format!("duplicate parameter path {path:?}"),
            });
        }
        self.params.insert(path.to_string(), Tensor::new(values, shape, true)?);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&Tensor<E>> {
        self.params.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor<E>> {
        self.params.get_mut(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.params.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<E>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<E>)> {
        self.params.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.zero_grad();
        }
    }

    /// Insert every parameter as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<E>) -> BoundParams {
        let mut refs = BTreeMap::new();
        for (path, t) in &self.params {
            let r = tape
                .leaf(t.values().to_vec(), &t.shape().to_vec())
                .expect("parameter tensors are internally consistent");
            refs.insert(path.clone(), r);
        }
        BoundParams { refs }
    }

    /// Pull gradients off the tape after `backward`; parameters unreachable
    /// from the loss get zero gradients.
    pub fn collect_grads(&mut self, tape: &Tape<E>, bound: &BoundParams) {
        for (path, t) in self.params.iter_mut() {
            let r = bound.refs[path];
            t.grad = Some(match tape.grad(r) {
                Some(g) => g.to_vec(),
                None => vec![E::ZERO; t.numel()],
            });
        }
    }

    /// Map element type (f32 store -> f64 store for the gradient-check suite).
    pub fn map_elements<F: Real>(&self) -> ParameterStore<F> {
        let mut out = ParameterStore::new();
        for (path, t) in &self.params {
            let values: Vec<F> = t.values().iter().map(|&v| F::from_f64(v.to_f64())).collect();
            out.insert(path, values, &t.shape().to_vec()).expect("paths unique");
        }
        out
    }
}

/// Parameter leaves bound to one tape, by path.
pub struct BoundParams {
    refs: BTreeMap<String, TensorRef>,
}

impl BoundParams {
    pub fn get(&self, path: &str) -> TensorRef {
        *self
            .refs
            .get(path)
            .unwrap_or_else(|| panic!("parameter {path:?} not bound"))
    }

    pub fn try_get(&self, path: &str) -> Option<TensorRef> {
        self.refs.get(path).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_paths_rejected() {
        let mut store: ParameterStore<f32> = ParameterStore::new();
        store.insert("a.w", vec![1.0], &[1]).unwrap();
        assert!(store.insert("a.w", vec![2.0], &[1]).is_err());
    }

    #[test]
    fn iteration_is_lexicographic() {
        let mut store: ParameterStore<f32> = ParameterStore::new();
        store.insert("b", vec![0.0], &[1]).unwrap();
        store.insert("a.10", vec![0.0], &[1]).unwrap();
        store.insert("a.02", vec![0.0], &[1]).unwrap();
        let order: Vec<&String> = store.paths().collect();
        assert_eq!(order, ["a.02", "a.10", "b"]);
    }

    #[test]
    fn unreachable_params_get_zero_grads() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.insert("used", vec![2.0], &[1]).unwrap();
        store.insert("unused", vec![3.0], &[1]).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let loss = tape.sum_all(bound.get("used"));
        tape.backward(loss).unwrap();
        store.collect_grads(&tape, &bound);
        assert_eq!(store.get("used").unwrap().grad.as_deref().unwrap(), &[1.0]);
        assert_eq!(store.get("unused").unwrap().grad.as_deref().unwrap(), &[0.0]);
    }
}
