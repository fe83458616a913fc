//! Reverse-mode automatic differentiation over `f64` n-dimensional arrays.
//!
//! A [`Var`] wraps a value together with the operation that produced it. Calling
//! [`Var::backward`] on a scalar walks the recorded graph in reverse creation order
//! and returns the gradients of every leaf that requires them.
//!
//! The crate also carries the handful of layers ([`nn`]), the Adam optimizer
//! ([`optim`]) and a central finite-difference checker ([`gradcheck`]) that the
//! networks in `moda-core` are built from.

pub mod gradcheck;
pub mod nn;
mod ops;
pub mod optim;
mod var;

pub use var::{Gradients, Tensor, Var};

/// Builds a tensor from a flat vector and a shape. Panics if the sizes disagree.
pub fn tensor(data: Vec<f64>, shape: &[usize]) -> Tensor {
    Tensor::from_shape_vec(ndarray::IxDyn(shape), data).expect("tensor: data length does not match shape")
}

/// Reduces a broadcast gradient back to `shape` by summing the expanded axes.
pub(crate) fn reduce_to(grad: &Tensor, shape: &[usize]) -> Tensor {
    use ndarray::Axis;
    let mut r = grad.clone();
    while r.ndim() > shape.len() {
        r = r.sum_axis(Axis(0));
    }
    for (ax, &s) in shape.iter().enumerate() {
        if s == 1 && r.shape()[ax] != 1 {
            r = r.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    r
}
