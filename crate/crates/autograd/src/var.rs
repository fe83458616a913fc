use std::cmp::Reverse;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};

pub type Tensor = ArrayD<f64>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Maps the output gradient to one optional gradient per parent.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[Var], &Tensor) -> Vec<Option<Tensor>> + Send + Sync>;

struct Node {
    id: u64,
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// A node in the computation graph. Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Var(Arc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn new(value: Tensor, parents: Vec<Var>, backward: Option<BackwardFn>, requires_grad: bool) -> Var {
        Var(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            parents,
            backward,
            requires_grad,
        }))
    }

    /// A value that never receives a gradient.
    pub fn constant(value: Tensor) -> Var {
        Var::new(value, Vec::new(), None, false)
    }

    /// A leaf that accumulates a gradient during [`Var::backward`].
    pub fn leaf(value: Tensor) -> Var {
        Var::new(value, Vec::new(), None, true)
    }

    pub fn scalar(v: f64) -> Var {
        Var::constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    /// Records an operation. When no parent requires a gradient the graph is not kept.
    pub(crate) fn from_op(value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Var {
        if parents.iter().any(Var::requires_grad) {
            Var::new(value, parents, Some(backward), true)
        } else {
            Var::constant(value)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn ndim(&self) -> usize {
        self.0.value.ndim()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.0.value.len(), 1, "item() on a tensor with {} elements", self.0.value.len());
        *self.0.value.iter().next().unwrap()
    }

    /// Drops the graph behind this value.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    /// Back-propagates from this (scalar) node.
    pub fn backward(&self) -> Gradients {
        assert_eq!(self.0.value.len(), 1, "backward() requires a scalar output");
        let mut leaves = HashMap::new();
        if !self.requires_grad() {
            return Gradients { grads: leaves };
        }

        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut order = Vec::new();
        while let Some(v) = stack.pop() {
            if !v.requires_grad() || !seen.insert(v.id()) {
                continue;
            }
            stack.extend(v.0.parents.iter().cloned());
            order.push(v);
        }
        // parents are always created before their children
        order.sort_by_key(|v| Reverse(v.id()));

        let mut pending: HashMap<u64, Tensor> = HashMap::new();
        pending.insert(self.id(), ArrayD::ones(self.0.value.raw_dim()));
        for v in order {
            let Some(g) = pending.remove(&v.id()) else { continue };
            match &v.0.backward {
                None => {
                    leaves.insert(v.id(), g);
                }
                Some(f) => {
                    let parent_grads = f(&g, &v.0.parents, &v.0.value);
                    debug_assert_eq!(parent_grads.len(), v.0.parents.len());
                    for (p, pg) in v.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.shape(), p.shape(), "gradient shape mismatch");
                        match pending.get_mut(&p.id()) {
                            Some(acc) => *acc += &pg,
                            None => {
                                pending.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Gradients { grads: leaves }
    }
}

/// Leaf gradients produced by [`Var::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<u64, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        self.grads.get(&v.id())
    }

    /// Gradient of `v`, or zeros of the right shape when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: &Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| ArrayD::zeros(v.value().raw_dim()))
    }
}
