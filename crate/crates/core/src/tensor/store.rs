use super::{Gradients, Tensor, TensorError, TensorResult};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

/// Named trainable tensors with gradient buffers and Adam moments.
///
/// Each store carries a process-unique id; tapes tag parameter nodes with
/// it so gradients are only ever applied to the store that produced them.
/// Cloning yields an independent store with a new id.
#[derive(Debug)]
pub struct ParameterStore {
    uid: u64,
    names: Vec<String>,
    lookup: HashMap<String, usize>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    steps: u64,
}

impl Clone for ParameterStore {
    fn clone(&self) -> Self {
        Self {
            uid: fresh_uid(),
            names: self.names.clone(),
            lookup: self.lookup.clone(),
            values: self.values.clone(),
            grads: self.grads.clone(),
            first_moment: self.first_moment.clone(),
            second_moment: self.second_moment.clone(),
            steps: self.steps,
        }
    }
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self {
            uid: fresh_uid(),
            names: Vec::new(),
            lookup: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            steps: 0,
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> TensorResult<usize> {
        if self.lookup.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let n = value.len();
        let index = self.values.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), index);
        self.values.push(value);
        self.grads.push(vec![0.0; n]);
        self.first_moment.push(vec![0.0; n]);
        self.second_moment.push(vec![0.0; n]);
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub(crate) fn value_at(&self, index: usize) -> &Tensor {
        &self.values[index]
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(|i| &mut self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.grads[i].as_slice())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Adds gradients recorded against this store; repeated calls accumulate.
    pub fn accumulate(&mut self, grads: &Gradients) {
        self.accumulate_scaled(grads, 1.0);
    }

    pub fn accumulate_scaled(&mut self, grads: &Gradients, factor: f64) {
        for (index, g) in grads.for_store(self.uid) {
            self.grads[index].iter_mut().zip(g).for_each(|(a, b)| *a += factor * b);
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Bitwise equality of names, shapes, and values (ignores optimizer state).
    pub fn same_values(&self, other: &ParameterStore) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()))
    }

    /// Parameter and moment data in insertion order.
    pub(crate) fn entries(&self) -> impl Iterator<Item = (&str, &Tensor, &[f64], &[f64])> {
        (0..self.len()).map(move |i| {
            (
                self.names[i].as_str(),
                &self.values[i],
                self.first_moment[i].as_slice(),
                self.second_moment[i].as_slice(),
            )
        })
    }

    pub(crate) fn restore(
        entries: Vec<(String, Tensor, Vec<f64>, Vec<f64>)>,
        steps: u64,
    ) -> TensorResult<Self> {
        let mut store = Self::new();
        for (name, value, m, v) in entries {
            if m.len() != value.len() || v.len() != value.len() {
                return Err(TensorError::Checkpoint(format!("moment size mismatch for `{name}`")));
            }
            let i = store.insert(&name, value)?;
            store.first_moment[i] = m;
            store.second_moment[i] = v;
        }
        store.steps = steps;
        Ok(store)
    }

    fn check_compatible(&self, other: &ParameterStore) -> TensorResult<()> {
        if self.names != other.names {
            return Err(TensorError::Invalid {
                op: "soft_update",
                detail: "parameter names differ".into(),
            });
        }
        for (a, b) in self.values.iter().zip(&other.values) {
            if a.shape() != b.shape() {
                return Err(TensorError::ShapeMismatch { op: "soft_update", lhs: a.shape().to_vec(), rhs: b.shape().to_vec() });
            }
        }
        Ok(())
    }
}

/// `target ← rate·online + (1 − rate)·target`, elementwise.
pub fn soft_update(target: &mut ParameterStore, online: &ParameterStore, rate: f64) -> TensorResult<()> {
    target.check_compatible(online)?;
    for (t, o) in target.values.iter_mut().zip(&online.values) {
        t.data_mut()
            .iter_mut()
            .zip(o.data())
            .for_each(|(t, &o)| *t = rate * o + (1.0 - rate) * *t);
    }
    Ok(())
}

/// Adam with optional clipping of the global gradient norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: Some(5.0) }
    }

    pub fn without_clipping(self) -> Self {
        Self { max_grad_norm: None, ..self }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&self, store: &mut ParameterStore) {
        let scale = match self.max_grad_norm {
            Some(limit) => {
                let norm = store.grad_norm();
                if norm > limit { limit / norm } else { 1.0 }
            }
            None => 1.0,
        };
        store.steps += 1;
        let t = store.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..store.len() {
            let value = store.values[i].data_mut();
            let (m, v) = (&mut store.first_moment[i], &mut store.second_moment[i]);
            for (((p, g), m), v) in value.iter_mut().zip(&store.grads[i]).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g * scale;
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        store.zero_grads();
    }
}
