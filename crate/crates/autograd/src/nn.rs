//! Named parameters and the small set of layers the networks are assembled from.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::var::{Gradients, Tensor, Var};

/// A flat, name-sorted collection of parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor. Panics on duplicate names, which always indicate a wiring bug.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        assert!(!self.map.contains_key(&name), "duplicate parameter {name}");
        self.map.insert(name, value);
    }

    /// Inserts or replaces.
    pub fn set(&mut self, name: impl Into<String>, value: Tensor) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Params {
        Params { map: self.map.iter().map(|(k, v)| (k.clone(), ArrayD::zeros(v.raw_dim()))).collect() }
    }

    /// Sets every tensor whose name starts with `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (k, v) in self.map.iter_mut() {
            if k.starts_with(prefix) {
                v.fill(0.0);
            }
        }
    }

    /// Wraps every tensor in a graph leaf (`trainable`) or a constant.
    pub fn bind(&self, trainable: bool) -> Bound {
        let vars = self
            .map
            .iter()
            .map(|(k, v)| {
                let var = if trainable { Var::leaf(v.clone()) } else { Var::constant(v.clone()) };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Parameters bound into a computation graph for one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> &Var {
        self.vars.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Collects the gradient of every bound parameter (zeros when unused).
    pub fn grads(&self, g: &Gradients) -> Params {
        let mut out = Params::new();
        for (k, v) in &self.vars {
            out.insert(k.clone(), g.get_or_zeros(v));
        }
        out
    }
}

/// Uniform init in `[-bound, bound]`.
pub fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

pub fn zeros(shape: &[usize]) -> Tensor {
    ArrayD::zeros(IxDyn(shape))
}

/// Pointwise nonlinearities used between layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Silu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, x: &Var) -> Var {
        match *self {
            Activation::Identity => x.clone(),
            Activation::Relu => x.relu(),
            Activation::LeakyRelu(a) => x.leaky_relu(a),
            Activation::Silu => x.silu(),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// `y = x W + b` over the last axis of a 2-D input `[rows, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(params: &mut Params, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = format!("{name}.weight");
        params.insert(weight.clone(), uniform(&[in_dim, out_dim], bound, rng));
        let bias = bias.then(|| {
            let b = format!("{name}.bias");
            params.insert(b.clone(), uniform(&[out_dim], bound, rng));
            b
        });
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        let y = x.matmul(p.get(&self.weight));
        match &self.bias {
            Some(b) => y.add(p.get(b)),
            None => y,
        }
    }
}

/// Stack of linear layers with an activation between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims` lists input, hidden and output widths.
    pub fn new(params: &mut Params, name: &str, dims: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Mlp { layers, activation }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, &h);
            if i < last {
                h = self.activation.apply(&h);
            }
        }
        h
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Name prefix shared by every parameter of the final layer.
    pub fn last_layer_prefix(&self) -> String {
        let w = &self.layers.last().unwrap().weight;
        w.trim_end_matches(".weight").to_string()
    }
}

/// Per-feature scale and shift after [`Var::layer_norm_last`].
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: String,
    pub shift: String,
}

impl LayerNorm {
    pub fn new(params: &mut Params, name: &str, dim: usize) -> Self {
        let gain = format!("{name}.gain");
        let shift = format!("{name}.shift");
        params.insert(gain.clone(), ArrayD::ones(IxDyn(&[dim])));
        params.insert(shift.clone(), zeros(&[dim]));
        LayerNorm { gain, shift }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        x.layer_norm_last(1e-5).mul(p.get(&self.gain)).add(p.get(&self.shift))
    }
}

/// Square-kernel 2-D convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: String,
    pub bias: String,
    pub stride: usize,
    pub padding: usize,
    pub out_channels: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut Params,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let bound = (3.0 / fan_in).sqrt();
        let weight = format!("{name}.weight");
        let bias = format!("{name}.bias");
        params.insert(weight.clone(), uniform(&[out_channels, in_channels, kernel, kernel], bound, rng));
        params.insert(bias.clone(), zeros(&[out_channels]));
        Conv2d { weight, bias, stride, padding, out_channels }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        let b = p.get(&self.bias).reshape(&[1, self.out_channels, 1, 1]);
        x.conv2d(p.get(&self.weight), self.stride, self.padding).add(&b)
    }
}
