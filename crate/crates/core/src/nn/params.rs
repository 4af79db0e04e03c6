use std::collections::HashMap;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Handle to a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Role of a stored tensor; decides trainability and L2 regularization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Conv2D and Dense kernels: trainable, L2-regularized.
    Kernel,
    Bias,
    /// Batch-norm scale and shift.
    Norm,
    /// LSTM input and recurrent weights.
    Recurrent,
    /// Unconstrained block scalars (γ, κ before reparameterization).
    Scalar,
    /// Non-trainable state such as batch-norm running statistics.
    Buffer,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        self != ParamKind::Buffer
    }

    pub fn regularizable(self) -> bool {
        self == ParamKind::Kernel
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub kind: ParamKind,
}

/// Named model tensors. Names are unique path-like identifiers so a
/// checkpoint can address every tensor.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, kind: ParamKind) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            grad,
            kind,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind.trainable())
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// λ·Σ‖W‖² over regularizable kernels, evaluated directly.
    pub fn l2_penalty_value(&self, lambda: f64) -> f64 {
        lambda
            * self
                .params
                .iter()
                .filter(|p| p.kind.regularizable())
                .map(|p| p.value.sum_squares().f64())
                .sum::<f64>()
    }

    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<T>]) {
        assert_eq!(snapshot.len(), self.params.len(), "snapshot of another model");
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value.clone_from(v);
        }
    }

    /// Same names, kinds and values at another precision.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                    kind: p.kind,
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Whether layers normalize with batch statistics (and update running
/// statistics) or with the stored running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Binds a [`ParamStore`] to a [`Tape`] for one forward/backward pass.
///
/// Every parameter is placed on the tape at most once, so gradients from
/// all its uses accumulate into one leaf.
pub struct Session<'t, 's, T: Real> {
    tape: &'t Tape<T>,
    store: &'s mut ParamStore<T>,
    mode: Mode,
    grad: bool,
    bound: Vec<Option<Var<'t, T>>>,
}

impl<'t, 's, T: Real> Session<'t, 's, T> {
    /// Gradients are tracked in [`Mode::Train`] only; see [`Session::with_grad`].
    pub fn new(tape: &'t Tape<T>, store: &'s mut ParamStore<T>, mode: Mode) -> Self {
        let n = store.len();
        Self {
            tape,
            store,
            mode,
            grad: mode == Mode::Train,
            bound: vec![None; n],
        }
    }

    pub fn with_grad(mut self, grad: bool) -> Self {
        self.grad = grad;
        self
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var<'t, T> {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let p = self.store.get(id);
        let v = self.tape.leaf(p.value.clone(), self.grad && p.kind.trainable());
        self.bound[id.0] = Some(v);
        v
    }

    /// λ·Σ‖W‖² over regularizable kernels as a scalar on the tape.
    pub fn l2_penalty(&mut self, lambda: f64) -> Result<Var<'t, T>> {
        let ids: Vec<ParamId> = self
            .store
            .iter()
            .filter(|(_, p)| p.kind.regularizable())
            .map(|(id, _)| id)
            .collect();
        let mut total = self.tape.constant(Tensor::scalar(T::zero()));
        if lambda == 0.0 {
            return Ok(total);
        }
        for id in ids {
            let w = self.param(id);
            total = total.add(&w.mul(&w)?.sum())?;
        }
        Ok(total.scale(lambda))
    }

    /// Adds the gradients of every bound parameter into the store.
    pub fn accumulate_grads(&mut self, grads: &Gradients<T>) {
        for (i, v) in self.bound.iter().enumerate() {
            if let Some(g) = v.and_then(|v| grads.get(v)) {
                self.store.params[i].grad.add_assign(g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::<f32>::new();
        store.add("a/kernel", Tensor::zeros(&[2]), ParamKind::Kernel).unwrap();
        assert!(store.add("a/kernel", Tensor::zeros(&[2]), ParamKind::Kernel).is_err());
    }

    #[test]
    fn l2_penalty_values() {
        let mut store = ParamStore::<f64>::new();
        store
            .add("k", Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), ParamKind::Kernel)
            .unwrap();
        store.add("b", Tensor::ones(&[2]), ParamKind::Bias).unwrap();
        store.add("gamma_raw", Tensor::ones(&[1]), ParamKind::Scalar).unwrap();
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train);
        assert_eq!(s.l2_penalty(0.0).unwrap().value().item(), 0.0);
        let p = s.l2_penalty(1e-4).unwrap();
        assert!((p.value().item() - 5e-4).abs() < 1e-15);
        let g = tape.backward(p).unwrap();
        s.accumulate_grads(&g);
        assert_eq!(store.value(ParamId(0)).data(), &[1.0, 2.0]);
        assert!((store.get(ParamId(0)).grad.data()[1] - 4e-4).abs() < 1e-15);
        assert_eq!(store.get(ParamId(1)).grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn l2_penalty_is_degree_two_homogeneous() {
        let mut store = ParamStore::<f64>::new();
        let id = store
            .add("k", Tensor::from_f64(&[3], &[0.5, -1.0, 2.0]).unwrap(), ParamKind::Kernel)
            .unwrap();
        let before = store.l2_penalty_value(1e-4);
        let doubled = store.value(id).map(|v| 2.0 * v);
        store.get_mut(id).value = doubled;
        assert!((store.l2_penalty_value(1e-4) - 4.0 * before).abs() < 1e-15);
    }
}
