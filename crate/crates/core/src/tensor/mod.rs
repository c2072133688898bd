//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Every op appends one node
//! whose inputs already live in the arena, so node ids are a topological
//! order and [`Graph::backward`] is a single reverse sweep. A fresh graph is
//! built for every forward pass; persistent state lives in [`Parameter`]s,
//! which are copied into the graph by [`Graph::param`] and receive their
//! gradients back through [`Graph::collect_grads`].
//!
//! All values are `f64`, row-major.

mod kernels;
mod ops;
mod param;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

pub use kernels::ghost_groups;
pub use ops::{sigmoid, GroupStats};
pub use param::{zero_grads, Module, Parameter};

use kernels::{numel, Bcast};

pub type NodeId = usize;

/// Plain-data snapshot of a graph value: shape, values and (if the node
/// requires grad) its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub node_id: NodeId,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(NodeId, NodeId, Bcast, Bcast),
    Sub(NodeId, NodeId, Bcast, Bcast),
    Mul(NodeId, NodeId, Bcast, Bcast),
    Affine {
        x: NodeId,
        scale: f64,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Bmm {
        a: NodeId,
        b: NodeId,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Transpose {
        x: NodeId,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    LeakyRelu {
        x: NodeId,
        slope: f64,
    },
    Sigmoid {
        x: NodeId,
    },
    Softmax {
        x: NodeId,
        cols: usize,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    SumAxis {
        x: NodeId,
        outer: usize,
        len: usize,
        inner: usize,
        mean: bool,
    },
    VarAxis {
        x: NodeId,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Concat {
        parts: Vec<(NodeId, usize)>,
        outer: usize,
    },
    Reshape {
        x: NodeId,
    },
    IndexSelect {
        x: NodeId,
        outer: usize,
        len: usize,
        inner: usize,
        indices: Vec<usize>,
    },
    Lookup {
        table: NodeId,
        codes: Vec<usize>,
        dim: usize,
    },
    GhostNorm {
        x: NodeId,
        groups: Vec<(usize, usize)>,
        cols: usize,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
        classes: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::MatMul { .. } => "matmul",
            Op::Bmm { .. } => "bmm",
            Op::Transpose { .. } => "transpose",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Softmax { .. } => "softmax",
            Op::Dropout { .. } => "dropout",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::SumAxis { .. } => "sum_axis",
            Op::VarAxis { .. } => "var_axis",
            Op::Concat { .. } => "concat",
            Op::Reshape { .. } => "reshape",
            Op::IndexSelect { .. } => "index_select",
            Op::Lookup { .. } => "lookup",
            Op::GhostNorm { .. } => "ghost_norm",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub requires_grad: bool,
    pub op: Op,
    pub grad: Option<Vec<f64>>,
}

pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    bound: RefCell<HashMap<String, NodeId>>,
    grad_enabled: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.borrow().len())
            .field("grad_enabled", &self.grad_enabled)
            .finish()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.graph.nodes.borrow();
        let node = &nodes[self.id];
        write!(f, "Var#{}({}, {:?})", self.id, node.op.name(), node.shape)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            bound: RefCell::new(HashMap::new()),
            grad_enabled: true,
        }
    }

    /// A graph in which parameters are bound without gradient tracking.
    pub fn no_grad() -> Self {
        Graph {
            grad_enabled: false,
            ..Graph::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var<'_> {
        debug_assert_eq!(numel(&shape), value.len(), "{}", op.name());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
            grad: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn leaf_node(&self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Var<'_>> {
        if numel(shape) != values.len() {
            return Err(Error::op(
                "leaf",
                format!("shape {:?} needs {} values, got {}", shape, numel(shape), values.len()),
            ));
        }
        Ok(self.push(shape.to_vec(), values, requires_grad, Op::Leaf))
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, shape: &[usize], values: Vec<f64>) -> Result<Var<'_>> {
        self.leaf_node(shape, values, false)
    }

    /// A free leaf that accumulates a gradient.
    pub fn leaf(&self, shape: &[usize], values: Vec<f64>) -> Result<Var<'_>> {
        self.leaf_node(shape, values, self.grad_enabled)
    }

    /// Binds a parameter into the graph. Binding the same name twice returns
    /// the same node.
    pub fn param(&self, p: &Parameter) -> Var<'_> {
        if let Some(&id) = self.bound.borrow().get(p.name()) {
            return Var { graph: self, id };
        }
        let v = self.push(
            p.shape().to_vec(),
            p.value.clone(),
            p.trainable() && self.grad_enabled,
            Op::Leaf,
        );
        self.bound.borrow_mut().insert(p.name().to_string(), v.id);
        v
    }

    /// Gradient accumulated on the node bound to parameter `name`.
    pub fn param_grad(&self, name: &str) -> Option<Vec<f64>> {
        let id = *self.bound.borrow().get(name)?;
        Var { graph: self, id }.grad()
    }

    /// Adds this graph's gradients into every trainable parameter's `grad`
    /// buffer. Parameters not bound in this graph receive zeros.
    pub fn collect_grads<'p>(&self, params: impl IntoIterator<Item = &'p mut Parameter>) {
        for p in params {
            if !p.trainable() {
                continue;
            }
            let g = self.param_grad(p.name()).unwrap_or_else(|| vec![0.0; p.value.len()]);
            match &mut p.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => p.grad = Some(g),
            }
        }
    }

    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    /// Reverse sweep from a scalar `loss`; gradients accumulate into every
    /// reachable node that requires grad.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        assert!(std::ptr::eq(loss.graph, self), "loss belongs to another graph");
        let local = {
            let nodes = self.nodes.borrow();
            let root = &nodes[loss.id];
            if root.value.len() != 1 {
                return Err(Error::NonScalarLoss(root.shape.clone()));
            }
            if !root.requires_grad {
                return Err(Error::NoGradient);
            }
            let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.id + 1);
            grads.resize_with(loss.id + 1, || None);
            grads[loss.id] = Some(vec![1.0]);
            let mut out: Vec<(NodeId, Vec<f64>)> = Vec::new();
            for id in (0..=loss.id).rev() {
                let Some(gout) = grads[id].take() else {
                    continue;
                };
                let node = &nodes[id];
                ops::propagate(&nodes, node, &gout, &mut |input, contrib| {
                    if !nodes[input].requires_grad {
                        return;
                    }
                    match &mut grads[input] {
                        Some(acc) => acc.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(contrib),
                    }
                });
                out.push((id, gout));
            }
            out
        };
        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in local {
            let node = &mut nodes[id];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.graph.nodes.borrow()[self.id].value.len()
    }

    pub fn value(&self) -> Vec<f64> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.graph.nodes.borrow()[self.id].value)
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.with_value(|v| v[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Accumulated gradient; zeros if the node requires grad but was not
    /// reached by any backward pass, `None` if it does not require grad.
    pub fn grad(&self) -> Option<Vec<f64>> {
        let nodes = self.graph.nodes.borrow();
        let node = &nodes[self.id];
        if !node.requires_grad {
            return None;
        }
        Some(node.grad.clone().unwrap_or_else(|| vec![0.0; node.value.len()]))
    }

    pub fn is_finite(&self) -> bool {
        self.with_value(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: self.shape(),
            values: self.value(),
            grad: self.grad(),
            node_id: self.id,
        }
    }
}
