//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Bound, Params};
use crate::var::Var;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Allowed `|analytic - numeric| / max(|analytic|, |numeric|)`.
    pub rel_tol: f64,
    /// Differences below this are accepted regardless of the relative error.
    pub abs_floor: f64,
    /// Coordinates probed per tensor (all of them when the tensor is smaller).
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-6, rel_tol: 1e-4, abs_floor: 1e-8, samples_per_tensor: 6, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradMismatch {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub mismatches: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.mismatches.is_empty()
    }
}

/// Compares the gradient of the scalar `f(params)` against central differences.
///
/// `only` restricts the check to tensors whose name starts with one of the prefixes
/// (all tensors when empty).
pub fn check<F>(params: &Params, f: F, only: &[&str], cfg: GradCheckConfig) -> GradCheckReport
where
    F: Fn(&Bound) -> Var,
{
    let bound = params.bind(true);
    let out = f(&bound);
    let analytic = bound.grads(&out.backward());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    for (name, tensor) in params.iter() {
        if !only.is_empty() && !only.iter().any(|p| name.starts_with(p)) {
            continue;
        }
        let n = tensor.len();
        let picks: Vec<usize> = if n <= cfg.samples_per_tensor {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.samples_per_tensor).into_vec()
        };
        let grad = analytic.get(name).unwrap().as_standard_layout();
        for idx in picks {
            let orig = tensor.as_slice().expect("parameters are stored in standard layout")[idx];
            let eval = |probe: &mut Params, v: f64| {
                probe.get_mut(name).unwrap().as_slice_mut().unwrap()[idx] = v;
                f(&probe.bind(false)).item()
            };
            let plus = eval(&mut probe, orig + cfg.step);
            let minus = eval(&mut probe, orig - cfg.step);
            eval_restore(&mut probe, name, idx, orig);
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = grad.as_slice().unwrap()[idx];
            let diff = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel = if scale > 0.0 { diff / scale } else { 0.0 };
            report.checked += 1;
            if diff > cfg.abs_floor {
                report.max_rel_err = report.max_rel_err.max(rel);
                if rel > cfg.rel_tol {
                    report.mismatches.push(GradMismatch { name: name.clone(), index: idx, analytic: a, numeric });
                }
            }
        }
    }
    report
}

fn eval_restore(probe: &mut Params, name: &str, idx: usize, v: f64) {
    probe.get_mut(name).unwrap().as_slice_mut().unwrap()[idx] = v;
}
