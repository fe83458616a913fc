use moda_autograd::nn::{Bound, Params};
use moda_autograd::optim::Adam;
use moda_autograd::Var;
use ndarray::Array2;

use super::losses::{loss_kld, loss_tp, ModaLosses};
use super::network::{ModaNet, ProbMode};
use super::output::MotionOutput;
use crate::error::{Error, Result};
use crate::geometry::FacePoints;

/// One training clip: audio features, target displacements and the subject face.
#[derive(Debug, Clone)]
pub struct ModaSample {
    pub audio: Array2<f64>,
    pub target: MotionOutput,
    pub face: FacePoints,
}

/// `L_TP + L_KLD` for one sample, as a graph node plus plain values.
pub fn sample_loss(net: &ModaNet, p: &Bound, sample: &ModaSample, mode: ProbMode, seed: u64) -> Result<(Var, ModaLosses)> {
    if sample.target.frames() != sample.audio.nrows() {
        return Err(Error::LengthMismatch(format!(
            "{} audio frames vs {} motion frames",
            sample.audio.nrows(),
            sample.target.frames()
        )));
    }
    let trace = net.forward(p, &sample.audio, &sample.face, mode, seed)?;
    let tp = loss_tp(&trace.motion, &sample.target.to_vars(), &net.cfg.lambdas)?;
    let kld = loss_kld(&trace.moments.mu, &trace.moments.logvar);
    let total = tp.add(&kld);
    let rec = ModaLosses { tp: tp.item(), kld: kld.item(), total: total.item() };
    Ok((total, rec))
}

fn mean_losses(items: &[ModaLosses]) -> ModaLosses {
    let n = items.len().max(1) as f64;
    ModaLosses {
        tp: items.iter().map(|l| l.tp).sum::<f64>() / n,
        kld: items.iter().map(|l| l.kld).sum::<f64>() / n,
        total: items.iter().map(|l| l.total).sum::<f64>() / n,
    }
}

fn check_finite(step: u64, l: &ModaLosses) -> Result<()> {
    if l.total.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step, detail: format!("L_TP {} L_KLD {}", l.tp, l.kld) })
    }
}

/// Parameters, optimizer state and step counter for the motion network.
#[derive(Debug, Clone)]
pub struct ModaTrainer {
    pub net: ModaNet,
    pub params: Params,
    pub opt: Adam,
    pub step: u64,
    pub seed: u64,
}

impl ModaTrainer {
    pub fn new(net: ModaNet, params: Params, lr: f64, betas: (f64, f64), seed: u64) -> Self {
        let opt = Adam::new(&params, lr, betas);
        ModaTrainer { net, params, opt, step: 0, seed }
    }

    /// One Adam update on the batch-mean loss.
    pub fn train_step(&mut self, batch: &[ModaSample]) -> Result<ModaLosses> {
        if batch.is_empty() {
            return Err(Error::DatasetEmpty("empty MODA batch".into()));
        }
        let bound = self.params.bind(true);
        let mut terms = Vec::with_capacity(batch.len());
        let mut recs = Vec::with_capacity(batch.len());
        for (i, sample) in batch.iter().enumerate() {
            let noise_seed = self.seed ^ (self.step << 20) ^ i as u64;
            let (loss, rec) = sample_loss(&self.net, &bound, sample, ProbMode::Train, noise_seed)?;
            terms.push(loss);
            recs.push(rec);
        }
        let rec = mean_losses(&recs);
        check_finite(self.step, &rec)?;
        let mut total = terms[0].clone();
        for t in &terms[1..] {
            total = total.add(t);
        }
        let total = total.scale(1.0 / batch.len() as f64);
        let grads = bound.grads(&total.backward());
        self.opt.step(&mut self.params, &grads);
        self.step += 1;
        if !self.params.all_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, detail: "parameters became non-finite".into() });
        }
        Ok(rec)
    }

    /// Mean loss with the latent fixed at the encoder mean.
    pub fn validate(&self, samples: &[ModaSample]) -> Result<ModaLosses> {
        let bound = self.params.bind(false);
        let recs = samples
            .iter()
            .map(|s| sample_loss(&self.net, &bound, s, ProbMode::Mean, 0).map(|(_, r)| r))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_losses(&recs))
    }
}
