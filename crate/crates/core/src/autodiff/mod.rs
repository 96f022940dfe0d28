//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation in execution order together with its
//! output value. [`Graph::backward`] walks that record in exact reverse order
//! and accumulates gradients for every node that depends on a parameter leaf.
//!
//! ```
//! use sens_asr_core::{autodiff::Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let w = g.param(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
//! let loss = g.sum(w);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0]);
//! ```

mod backward;
mod ops;

use alloc::vec::Vec;

use crate::{Real, Tensor};

pub use backward::Gradients;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddRow(Var, Var),
    OuterAdd(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Swish(Var),
    Glu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    CausalConv {
        x: Var,
        w: Var,
        b: Var,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    LogSoftmax(Var),
    MaskedSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    BroadcastRows(Var),
    PadRows(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    /// Scalar whose gradient with respect to `input` was computed during the
    /// forward pass (used by the lattice loss).
    Precomputed {
        input: Var,
        grad: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of executed operations. Single-owner; build one per forward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest `|x|` over the inputs of every ReLU recorded so far.
    /// Finite differences taken closer than this to the kink are meaningless.
    pub fn relu_margin(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(&self.nodes[x.0].value),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|v| v.abs()))
            .reduce(T::min)
    }

    /// Smallest row standard deviation over the inputs of every layer norm.
    pub fn norm_spread(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::LayerNorm { inv_std, .. } => inv_std.iter().copied().reduce(T::max),
                _ => None,
            })
            .reduce(T::max)
            .map(|inv| T::one() / inv)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }
}
