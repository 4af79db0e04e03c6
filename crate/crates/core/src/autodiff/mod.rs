//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles during a
//! forward pass. Nodes are appended in evaluation order, so the tape is a
//! topological order of the graph by construction; [`Tape::backward`] walks it
//! once in reverse and hands each node's accumulated output gradient to the
//! [`Function`] that produced it.
//!
//! ```
//! use shrinknet::autodiff::Tape;
//! use shrinknet::Tensor;
//!
//! let tape = Tape::<f64>::new();
//! let w = tape.var(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
//! let loss = w.mul(&w).unwrap().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
//! ```
//!
//! Operations whose inputs do not require gradients are evaluated eagerly
//! and never recorded, so inference runs through the same code without
//! keeping any backward state alive.

mod conv;
mod elementwise;
mod linalg;
mod pool;
mod structural;

pub use conv::{conv_output_len, ConvGeometry, Padding};
pub use elementwise::UnaryKind;
pub(crate) use elementwise::{sigmoid, softplus};

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Inputs available to a [`Function`] during the backward pass.
pub struct BackwardCtx<'a, T> {
    pub inputs: &'a [&'a Tensor<T>],
    pub output: &'a Tensor<T>,
    pub grad: &'a Tensor<T>,
    /// Which inputs require a gradient; others may be answered with `None`.
    pub needs: &'a [bool],
}

/// The backward rule of one recorded operation.
pub trait Function<T: Real> {
    fn name(&self) -> &'static str;

    /// One entry per input, shaped like that input.
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Real> {
    value: Rc<Tensor<T>>,
    inputs: Vec<usize>,
    func: Option<Box<dyn Function<T>>>,
    requires_grad: bool,
}

/// Recording context for one forward/backward pass.
pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    track_kinks: bool,
    kink_hash: Cell<u64>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            track_kinks: false,
            kink_hash: Cell::new(0xcbf2_9ce4_8422_2325),
        }
    }

    /// A tape that fingerprints the branch taken at every non-smooth point
    /// (relu sign, abs sign, max-pool argmax, threshold masks). Two forward
    /// passes with equal [`Tape::kink_signature`] ran through the same smooth
    /// piece of the function, which is what finite-difference checks need.
    pub fn with_kink_tracking() -> Self {
        Self {
            track_kinks: true,
            ..Self::new()
        }
    }

    pub fn kink_signature(&self) -> u64 {
        self.kink_hash.get()
    }

    pub fn tracks_kinks(&self) -> bool {
        self.track_kinks
    }

    pub(crate) fn record_kinks(&self, branches: impl IntoIterator<Item = u64>) {
        if !self.track_kinks {
            return;
        }
        let mut h = self.kink_hash.get();
        for b in branches {
            h ^= b;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.kink_hash.set(h);
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that receives a gradient.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// Leaf that does not.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push_node(Node {
            value: Rc::new(value),
            inputs: Vec::new(),
            func: None,
            requires_grad,
        })
    }

    /// Records the result of a custom operation. `func` is dropped right away
    /// when none of `inputs` requires a gradient.
    pub fn apply<'t>(
        &'t self,
        value: Tensor<T>,
        inputs: &[Var<'t, T>],
        func: impl Function<T> + 'static,
    ) -> Var<'t, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| {
                debug_assert!(std::ptr::eq(v.tape, self), "var from another tape");
                nodes[v.id].requires_grad
            })
        };
        self.push_node(Node {
            value: Rc::new(value),
            inputs: inputs.iter().map(|v| v.id).collect(),
            func: requires_grad.then(|| Box::new(func) as Box<dyn Function<T>>),
            requires_grad,
        })
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Propagates d`loss`/d(node) to every node reachable from `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.id + 1];
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(func) = node.func.as_ref() else {
                continue;
            };
            // Interior gradients are released once consumed; only leaves keep theirs.
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let inputs: Vec<&Tensor<T>> =
                node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let ctx = BackwardCtx {
                inputs: &inputs,
                output: &node.value,
                grad: &grad,
                needs: &needs,
            };
            let input_grads = func.backward(&ctx);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", func.name());
            for ((&input, g), &need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                let (Some(g), true) = (g, need) else {
                    continue;
                };
                debug_assert_eq!(
                    g.shape(),
                    nodes[input].value.shape(),
                    "gradient shape from {}",
                    func.name()
                );
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Tape::backward`], addressed by leaf.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }
}
