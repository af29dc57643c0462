use std::cell::{Cell, RefCell};

use crate::ops::{apply_backward, BackOp};
use crate::{Result, Tensor, TensorError};

pub(crate) struct Node {
    pub value: Tensor,
    pub requires_grad: bool,
    pub label: String,
    pub back: Option<BackOp>,
}

/// Single-threaded Wengert tape. Node ids are assigned in recording order,
/// so every operation's inputs precede it and one reverse sweep visits each
/// node exactly once.
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
    check_finite: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
            check_finite: Cell::new(false),
        }
    }

    /// When enabled, every recorded value is scanned and the first
    /// non-finite result aborts the computation with the node's name.
    pub fn set_check_finite(&self, on: bool) {
        self.check_finite.set(on);
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, requires_grad, None, "leaf".to_string())
            .expect("leaf insertion cannot fail before backward")
    }

    /// Leaf with a diagnostic name (typically a parameter name).
    pub fn leaf_named(&self, value: Tensor, requires_grad: bool, name: &str) -> Var<'_> {
        self.push(value, requires_grad, None, name.to_string())
            .expect("leaf insertion cannot fail before backward")
    }

    pub(crate) fn push(
        &self,
        value: Tensor,
        requires_grad: bool,
        back: Option<BackOp>,
        label: String,
    ) -> Result<Var<'_>> {
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        if self.check_finite.get() && !value.is_finite() {
            return Err(TensorError::NonFinite { node: label });
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            label,
            back: if requires_grad { back } else { None },
        });
        Ok(Var { tape: self, id })
    }

    /// First node holding a non-finite value, as (index, label).
    pub fn first_nonfinite(&self) -> Option<(usize, String)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.label.clone()))
    }

    /// Reverse sweep from a scalar loss. Populates a gradient for every
    /// gradient-tracked node the loss depends on and consumes the tape:
    /// no further recording or backward passes are accepted.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(self, loss.tape) {
            return Err(TensorError::ForeignTape);
        }
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if !loss_node.value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        if !loss_node.requires_grad {
            return Err(TensorError::LossNotOnTape);
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.id + 1);
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Tensor::full(loss_node.value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            if grads[id].is_none() {
                continue;
            }
            let Some(back) = nodes[id].back.as_ref() else {
                continue;
            };
            let dy = grads[id].take().expect("checked above");
            for (input, grad) in apply_backward(back, id, &nodes, &dy) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                            *a += g;
                        }
                    }
                    slot => *slot = Some(grad),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Clone the value out of the tape.
    pub fn tensor(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn item(&self) -> Result<f32> {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    pub(crate) fn tape(&self) -> &'t Tape {
        self.tape
    }
}

/// Gradients produced by one backward pass, indexed by tape node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}
