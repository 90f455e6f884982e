//! Trainable parameters and the gradients collected for them.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::tensor::Tensor;

static NEXT_KEY: AtomicU64 = AtomicU64::new(1);

/// Identity of a parameter inside a computation graph.
///
/// Keys only link graph leaves back to their parameter; they never influence
/// numeric results, so the global counter does not affect determinism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey(u64);

impl ParamKey {
    fn fresh() -> Self {
        ParamKey(NEXT_KEY.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug)]
pub struct Parameter {
    key: ParamKey,
    value: Rc<Tensor>,
    pub grad: Tensor,
    /// Adagrad sum of squared gradients.
    pub accumulator: Tensor,
    pub frozen: bool,
}

impl Clone for Parameter {
    /// A clone is a distinct parameter: it gets a fresh key so that two copies
    /// used in one graph collect separate gradients.
    fn clone(&self) -> Self {
        Self {
            key: ParamKey::fresh(),
            value: Rc::new((*self.value).clone()),
            grad: self.grad.clone(),
            accumulator: self.accumulator.clone(),
            frozen: self.frozen,
        }
    }
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let accumulator = Tensor::zeros(value.shape());
        Self {
            key: ParamKey::fresh(),
            value: Rc::new(value),
            grad,
            accumulator,
            frozen: false,
        }
    }

    pub fn key(&self) -> ParamKey {
        self.key
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub(crate) fn shared_value(&self) -> Rc<Tensor> {
        Rc::clone(&self.value)
    }

    /// Mutable access to the values. Copies on write if a graph still holds
    /// the previous values.
    pub fn value_mut(&mut self) -> &mut Tensor {
        Rc::make_mut(&mut self.value)
    }

    /// Values, gradient and accumulator borrowed together for optimizer updates.
    pub(crate) fn parts_mut(&mut self) -> (&mut Tensor, &Tensor, &mut Tensor) {
        (
            Rc::make_mut(&mut self.value),
            &self.grad,
            &mut self.accumulator,
        )
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Adds this parameter's share of `grads` into its gradient slot.
    pub fn accumulate(&mut self, grads: &Gradients) {
        if let Some(g) = grads.get(self.key) {
            self.grad.add_assign(g);
        }
    }
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    by_key: BTreeMap<ParamKey, Tensor>,
}

impl Gradients {
    pub(crate) fn add(&mut self, key: ParamKey, grad: Tensor) {
        match self.by_key.get_mut(&key) {
            Some(existing) => existing.add_assign(&grad),
            None => {
                self.by_key.insert(key, grad);
            }
        }
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor> {
        self.by_key.get(&key)
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }
}
