use moda_autograd::Var;

use super::output::MotionVars;
use crate::error::{Error, Result};

/// Mean absolute error between two equally-shaped tensors.
pub fn mean_l1(a: &Var, b: &Var) -> Var {
    a.sub(b).abs().mean()
}

/// Weighted sum of per-stream mean L1 errors.
pub fn loss_tp(pred: &MotionVars, gt: &MotionVars, lambdas: &[f64; 4]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for ((p, g), &l) in pred.streams().into_iter().zip(gt.streams()).zip(lambdas) {
        if p.shape() != g.shape() {
            return Err(Error::shape(format!("{:?}", g.shape()), format!("{:?}", p.shape())));
        }
        let term = mean_l1(g, p).scale(l);
        total = Some(match total {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    Ok(total.expect("four streams"))
}

/// `-(1 / 2d_l) Σ (logσ - μ² - σ + 1)` with `σ = exp(logσ)`.
pub fn loss_kld(mu: &Var, logvar: &Var) -> Var {
    let d_l = mu.value().len() as f64;
    logvar.sub(&mu.square()).sub(&logvar.exp()).add_scalar(1.0).sum().scale(-0.5 / d_l)
}

/// Loss values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ModaLosses {
    pub tp: f64,
    pub kld: f64,
    pub total: f64,
}
