//! Scaled dot-product attention with additive biases, and the transformer block
//! used inside the probabilistic branch.

use moda_autograd::nn::{Activation, Bound, LayerNorm, Linear, Mlp, Params};
use moda_autograd::Var;
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::masks::encoding_table;

/// Output of an attention call with the per-head weight matrices kept for inspection.
#[derive(Debug, Clone)]
pub struct Attended {
    pub output: Var,
    pub weights: Vec<Var>,
}

pub fn bias_var(bias: &Array2<f64>) -> Var {
    Var::constant(bias.clone().into_dyn())
}

/// `softmax(q_h k_hᵀ / sqrt(d_h) + bias) v_h` per head, heads concatenated.
///
/// `q` is `[tq, dk]`, `k` is `[tk, dk]`, `v` is `[tk, dv]`; both `dk` and `dv` must be
/// divisible by `heads`.
pub fn attend(q: &Var, k: &Var, v: &Var, bias: Option<&Var>, heads: usize) -> Attended {
    let dk = q.shape()[1];
    let dv = v.shape()[1];
    assert!(heads >= 1 && dk.is_multiple_of(heads) && dv.is_multiple_of(heads), "head count {heads} must divide {dk} and {dv}");
    let (hk, hv) = (dk / heads, dv / heads);
    let scale = 1.0 / (hk as f64).sqrt();
    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q.clone(), k.clone(), v.clone())
        } else {
            (q.narrow(1, h * hk, hk), k.narrow(1, h * hk, hk), v.narrow(1, h * hv, hv))
        };
        let mut scores = qh.matmul(&kh.t()).scale(scale);
        if let Some(b) = bias {
            scores = scores.add(b);
        }
        let w = scores.softmax_last();
        outputs.push(w.matmul(&vh));
        weights.push(w);
    }
    let output = if heads == 1 { outputs.pop().unwrap() } else { Var::concat(&outputs, 1) };
    Attended { output, weights }
}

/// Pre-norm transformer block: `x + MHA(LN(x))`, then `x + FFN(LN(x))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    norm1: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    norm2: LayerNorm,
    ffn: Mlp,
    heads: usize,
}

impl TransformerBlock {
    pub fn new(params: &mut Params, name: &str, d: usize, heads: usize, ffn_mult: usize, rng: &mut ChaCha8Rng) -> Self {
        TransformerBlock {
            norm1: LayerNorm::new(params, &format!("{name}.norm1"), d),
            wq: Linear::new(params, &format!("{name}.q"), d, d, false, rng),
            wk: Linear::new(params, &format!("{name}.k"), d, d, false, rng),
            wv: Linear::new(params, &format!("{name}.v"), d, d, false, rng),
            wo: Linear::new(params, &format!("{name}.o"), d, d, true, rng),
            norm2: LayerNorm::new(params, &format!("{name}.norm2"), d),
            ffn: Mlp::new(params, &format!("{name}.ffn"), &[d, ffn_mult * d, d], Activation::Silu, rng),
            heads,
        }
    }

    pub fn forward(&self, p: &Bound, x: &Var, bias: Option<&Var>) -> Var {
        let h = self.norm1.forward(p, x);
        let a = attend(&self.wq.forward(p, &h), &self.wk.forward(p, &h), &self.wv.forward(p, &h), bias, self.heads);
        let x = x.add(&self.wo.forward(p, &a.output));
        let h = self.norm2.forward(p, &x);
        x.add(&self.ffn.forward(p, &h))
    }
}

/// Adds the aperiodic sinusoidal table to a `[t, d]` sequence.
pub fn add_positions(x: &Var) -> Var {
    let (t, d) = (x.shape()[0], x.shape()[1]);
    x.add(&Var::constant(encoding_table(t, d, None).into_dyn()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use moda_autograd::tensor;

    #[test]
    fn weights_are_row_stochastic() {
        let q = Var::constant(tensor((0..12).map(|v| (v as f64 * 0.37).sin()).collect(), &[3, 4]));
        let k = Var::constant(tensor((0..16).map(|v| (v as f64 * 0.11).cos()).collect(), &[4, 4]));
        let v = Var::constant(tensor((0..8).map(|v| v as f64).collect(), &[4, 2]));
        let a = attend(&q, &k, &v, None, 2);
        assert_eq!(a.output.shape(), &[3, 2]);
        for w in &a.weights {
            for row in w.value().rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}
