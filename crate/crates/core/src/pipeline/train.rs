//! Stage training with periodic validation, best/last checkpoints and a CSV log.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{stage_dir, CheckpointArchive};
use super::config::{PipelineConfig, Stage};
use crate::error::{Error, Result};
use crate::faco::{FacoConfig, FacoNet, FacoSample, FacoTrainer};
use crate::moda::{ModaConfig, ModaNet, ModaSample, ModaTrainer};
use crate::preprocess::dataset::{Dataset, Split};
use crate::render::{RenderSample, RendererConfig, RendererModel, RendererTrainer, CONDITION_CHANNELS};

/// What a finished (or resumed and finished) run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stage: Stage,
    pub steps: u64,
    pub best_val: f64,
    pub last_val: f64,
    pub best: PathBuf,
    pub last: PathBuf,
}

/// One trainable stage behind a uniform interface.
trait StageRun {
    fn train_len(&self) -> usize;
    /// Updates on the given training indices and returns the training loss.
    fn step(&mut self, batch: &[usize]) -> Result<f64>;
    fn validate(&self) -> Result<f64>;
    fn archive(&self, step: u64) -> Result<CheckpointArchive>;
}

struct ModaRun {
    trainer: ModaTrainer,
    train: Vec<ModaSample>,
    val: Vec<ModaSample>,
}

impl StageRun for ModaRun {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn step(&mut self, batch: &[usize]) -> Result<f64> {
        let samples: Vec<ModaSample> = batch.iter().map(|&i| self.train[i].clone()).collect();
        Ok(self.trainer.train_step(&samples)?.total)
    }

    fn validate(&self) -> Result<f64> {
        let set = if self.val.is_empty() { &self.train } else { &self.val };
        Ok(self.trainer.validate(set)?.tp)
    }

    fn archive(&self, step: u64) -> Result<CheckpointArchive> {
        Ok(CheckpointArchive::new(Stage::Moda, &self.trainer.net.cfg, step)?
            .with_group("gen", &self.trainer.params)
            .with_optimizer("gen", &self.trainer.opt))
    }
}

struct FacoRun {
    trainer: FacoTrainer,
    train: Vec<FacoSample>,
    val: Vec<FacoSample>,
}

impl StageRun for FacoRun {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn step(&mut self, batch: &[usize]) -> Result<f64> {
        let samples: Vec<FacoSample> = batch.iter().map(|&i| self.train[i].clone()).collect();
        Ok(self.trainer.train_step(&samples)?.gen)
    }

    fn validate(&self) -> Result<f64> {
        let set = if self.val.is_empty() { &self.train } else { &self.val };
        self.trainer.validate(set)
    }

    fn archive(&self, step: u64) -> Result<CheckpointArchive> {
        let t = &self.trainer;
        Ok(CheckpointArchive::new(Stage::Faco, &t.net.cfg, step)?
            .with_group("gen", &t.gen_params)
            .with_group("disc", &t.disc_params)
            .with_optimizer("gen", &t.gen_opt)
            .with_optimizer("disc", &t.disc_opt))
    }
}

struct RendererRun {
    trainer: RendererTrainer,
    train: Vec<RenderSample>,
    val: Vec<RenderSample>,
}

impl StageRun for RendererRun {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn step(&mut self, batch: &[usize]) -> Result<f64> {
        let samples: Vec<RenderSample> = batch.iter().map(|&i| self.train[i].clone()).collect();
        Ok(self.trainer.train_step(&samples)?.gen.total)
    }

    fn validate(&self) -> Result<f64> {
        let set = if self.val.is_empty() { &self.train } else { &self.val };
        let mut total = 0.0;
        for chunk in set.chunks(4) {
            total += self.trainer.validate(chunk)? * chunk.len() as f64;
        }
        Ok(total / set.len().max(1) as f64)
    }

    fn archive(&self, step: u64) -> Result<CheckpointArchive> {
        let t = &self.trainer;
        Ok(CheckpointArchive::new(Stage::Renderer, &t.model.cfg, step)?
            .with_group("gen", &t.gen_params)
            .with_group("disc", &t.disc_params)
            .with_optimizer("gen", &t.gen_opt)
            .with_optimizer("disc", &t.disc_opt))
    }
}

fn build_run(stage: Stage, ds: &Dataset, cfg: &PipelineConfig, resume: Option<&CheckpointArchive>) -> Result<Box<dyn StageRun>> {
    let (lr, betas) = (cfg.optimizer.lr, cfg.optimizer.betas);
    let seed = cfg.seed;
    Ok(match stage {
        Stage::Moda => {
            let mcfg: ModaConfig = match resume {
                Some(ck) => ck.config_as()?,
                None => cfg.moda.clone(),
            };
            if mcfg.audio_dim != ds.features.dim() {
                return Err(Error::Config(format!("moda.audio_dim {} but features have {} columns", mcfg.audio_dim, ds.features.dim())));
            }
            let (net, mut params) = ModaNet::new(mcfg, seed)?;
            let mut trainer = ModaTrainer::new(net, params.clone(), lr, betas, seed);
            if let Some(ck) = resume {
                params = ck.group("gen")?.clone();
                trainer.opt = ck.restore_optimizer("gen", &params, lr, betas)?;
                trainer.params = params;
                trainer.step = ck.manifest.step;
            }
            Box::new(ModaRun {
                trainer,
                train: ds.moda_samples(Split::Train, cfg.moda_clip_len),
                val: ds.moda_samples(Split::Val, cfg.moda_clip_len),
            })
        }
        Stage::Faco => {
            let fcfg: FacoConfig = match resume {
                Some(ck) => ck.config_as()?,
                None => cfg.faco.clone(),
            };
            let (net, gp, disc, dp) = FacoNet::new(fcfg, seed)?;
            let mut trainer = FacoTrainer::new(net, gp, disc, dp, lr, betas);
            if let Some(ck) = resume {
                trainer.gen_params = ck.group("gen")?.clone();
                trainer.disc_params = ck.group("disc")?.clone();
                trainer.gen_opt = ck.restore_optimizer("gen", &trainer.gen_params, lr, betas)?;
                trainer.disc_opt = ck.restore_optimizer("disc", &trainer.disc_params, lr, betas)?;
                trainer.step = ck.manifest.step;
            }
            Box::new(FacoRun { trainer, train: ds.faco_samples(Split::Train), val: ds.faco_samples(Split::Val) })
        }
        Stage::Renderer => {
            let rcfg: RendererConfig = match resume {
                Some(ck) => ck.config_as()?,
                None => cfg.renderer.clone(),
            };
            let m = &ds.manifest;
            if m.height != rcfg.resolution || m.width != rcfg.resolution {
                return Err(Error::Config(format!(
                    "renderer resolution {} but frames are {}x{}",
                    rcfg.resolution, m.width, m.height
                )));
            }
            let (model, gp, dp) = RendererModel::new(rcfg, CONDITION_CHANNELS, seed)?;
            let mut trainer = RendererTrainer::new(model, gp, dp, lr, betas);
            if let Some(ck) = resume {
                trainer.gen_params = ck.group("gen")?.clone();
                trainer.disc_params = ck.group("disc")?.clone();
                trainer.gen_opt = ck.restore_optimizer("gen", &trainer.gen_params, lr, betas)?;
                trainer.disc_opt = ck.restore_optimizer("disc", &trainer.disc_params, lr, betas)?;
                trainer.step = ck.manifest.step;
            }
            Box::new(RendererRun { trainer, train: ds.render_samples(Split::Train)?, val: ds.render_samples(Split::Val)? })
        }
    })
}

fn append_log(path: &Path, rows: &[String]) -> Result<()> {
    let new = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    if new {
        writeln!(f, "step,epoch,train_loss,val_loss").map_err(|e| Error::io(path, e))?;
    }
    for r in rows {
        writeln!(f, "{r}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Trains `stage` on the dataset in `dataset_dir`, writing `{out}/{stage}/{best,last}`
/// and `{out}/{stage}/log.csv`. With `resume`, continues from `last/`.
pub fn train(stage: Stage, dataset_dir: &Path, cfg: &PipelineConfig, out: &Path, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let ds = Dataset::load(dataset_dir)?;
    let dir = stage_dir(out, stage);
    let (best_dir, last_dir) = (dir.join("best"), dir.join("last"));
    let prior = if resume { Some(CheckpointArchive::load(&last_dir)?) } else { None };
    let mut run = build_run(stage, &ds, cfg, prior.as_ref())?;
    let n = run.train_len();
    if n == 0 {
        return Err(Error::DatasetEmpty(format!("no {stage} training samples in {}", dataset_dir.display())));
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let log = dir.join("log.csv");
    if !resume && log.exists() {
        std::fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
    }

    let sched = cfg.schedule.get(stage);
    let bs = sched.batch_size.min(n);
    let per_epoch = n.div_ceil(bs) as u64;
    let mut total = sched.epochs * per_epoch;
    if let Some(m) = sched.max_steps {
        total = total.min(m);
    }
    let mut step = prior.as_ref().map_or(0, |c| c.manifest.step);
    let mut best_val = match CheckpointArchive::load(&best_dir) {
        Ok(b) if resume => b.manifest.metrics.get("val_loss").copied().unwrap_or(f64::INFINITY),
        _ => f64::INFINITY,
    };
    let mut last_val = f64::NAN;
    let mut rows = Vec::new();
    log::info!("{stage}: {n} samples, {per_epoch} steps per epoch, training to step {total}");
    while step < total {
        let epoch = step / per_epoch;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let k = (step % per_epoch) as usize;
        let batch = &order[k * bs..((k + 1) * bs).min(n)];
        let loss = run.step(batch)?;
        step += 1;
        let validate = step % sched.val_every == 0 || step == total;
        let mut val_cell = String::new();
        if validate {
            last_val = run.validate()?;
            if !last_val.is_finite() {
                return Err(Error::NonFiniteLoss { step, detail: format!("validation loss {last_val}") });
            }
            val_cell = format!("{last_val}");
            if last_val <= best_val {
                best_val = last_val;
                run.archive(step)?.with_metric("val_loss", last_val).with_metric("train_loss", loss).save(&best_dir)?;
            }
            log::info!("{stage} step {step}: train {loss:.6} val {last_val:.6}");
        }
        rows.push(format!("{step},{epoch},{loss},{val_cell}"));
        if validate {
            append_log(&log, &rows)?;
            rows.clear();
        }
    }
    if last_val.is_nan() {
        last_val = run.validate()?;
        if last_val <= best_val {
            best_val = last_val;
            run.archive(step)?.with_metric("val_loss", last_val).save(&best_dir)?;
        }
    }
    run.archive(step)?.with_metric("val_loss", last_val).save(&last_dir)?;
    Ok(TrainSummary { stage, steps: step, best_val, last_val, best: best_dir, last: last_dir })
}
