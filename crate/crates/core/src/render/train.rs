use moda_autograd::nn::Params;
use moda_autograd::optim::Adam;
use moda_autograd::Var;
use ndarray::{Array2, Array3, Array4, Axis};

use super::config::RendererConfig;
use super::discriminator::{loss_disc, MultiScaleDiscriminator};
use super::generator::Generator;
use super::losses::{generator_terms, RenderLosses};
use super::perceptual::{PerceptualExtractor, RandomConvFeatures};
use crate::error::{Error, Result};
use crate::io::Raster;

/// One frame: assembled generator input, target frame and mouth mask.
#[derive(Debug, Clone)]
pub struct RenderSample {
    pub condition: Array3<f64>,
    pub target: Raster,
    pub mouth_mask: Array2<f64>,
}

/// Generator, discriminator and the fixed perceptual extractor.
pub struct RendererModel {
    pub cfg: RendererConfig,
    pub generator: Generator,
    pub discriminator: MultiScaleDiscriminator,
    pub extractor: Box<dyn PerceptualExtractor>,
}

impl std::fmt::Debug for RendererModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RendererModel").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl RendererModel {
    /// Returns the model with fresh generator and discriminator parameters.
    pub fn new(cfg: RendererConfig, in_channels: usize, seed: u64) -> Result<(Self, Params, Params)> {
        let mut gp = Params::new();
        let mut dp = Params::new();
        let generator = Generator::new(&cfg, in_channels, &mut gp, seed)?;
        let discriminator = MultiScaleDiscriminator::new(&cfg, 3 + in_channels, &mut dp, seed.wrapping_add(1));
        let extractor = Box::new(RandomConvFeatures::new(&cfg.perceptual_channels, seed.wrapping_add(2)));
        Ok((RendererModel { cfg, generator, discriminator, extractor }, gp, dp))
    }

    /// Renders a batch of conditions `[B, C, R, R]`.
    pub fn render(&self, gen_params: &Params, conditions: &Array4<f64>) -> Result<Array4<f64>> {
        let out = self.generator.forward(&gen_params.bind(false), &Var::constant(conditions.clone().into_dyn()))?;
        Ok(out.value().clone().into_dimensionality().expect("4-D output"))
    }

    pub fn render_one(&self, gen_params: &Params, condition: &Array3<f64>) -> Result<Raster> {
        let batch = condition.clone().insert_axis(Axis(0));
        Ok(self.render(gen_params, &batch)?.index_axis_move(Axis(0), 0))
    }
}

pub(crate) fn stack3(items: impl Iterator<Item = Array3<f64>>) -> Result<Var> {
    let items: Vec<_> = items.map(|a| a.insert_axis(Axis(0))).collect();
    let views: Vec<_> = items.iter().map(|a| a.view()).collect();
    let a = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Data(e.to_string()))?;
    Ok(Var::constant(a.into_dyn()))
}

fn batch_tensors(batch: &[RenderSample]) -> Result<(Var, Var, Var)> {
    let cond = stack3(batch.iter().map(|s| s.condition.clone()))?;
    let target = stack3(batch.iter().map(|s| s.target.clone()))?;
    let mask = stack3(batch.iter().map(|s| s.mouth_mask.clone().insert_axis(Axis(0))))?;
    Ok((cond, target, mask))
}

/// Alternating discriminator / generator updates.
pub struct RendererTrainer {
    pub model: RendererModel,
    pub gen_params: Params,
    pub disc_params: Params,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub step: u64,
}

/// Discriminator loss and generator terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct RenderStepRecord {
    pub disc: f64,
    pub gen: RenderLosses,
}

impl RendererTrainer {
    pub fn new(model: RendererModel, gen_params: Params, disc_params: Params, lr: f64, betas: (f64, f64)) -> Self {
        let gen_opt = Adam::new(&gen_params, lr, betas);
        let disc_opt = Adam::new(&disc_params, lr, betas);
        RendererTrainer { model, gen_params, disc_params, gen_opt, disc_opt, step: 0 }
    }

    pub fn train_step(&mut self, batch: &[RenderSample]) -> Result<RenderStepRecord> {
        if batch.is_empty() {
            return Err(Error::DatasetEmpty("empty renderer batch".into()));
        }
        let (cond, target, mask) = batch_tensors(batch)?;
        let m = &self.model;
        let adversarial = m.cfg.adversarial;
        let gp = self.gen_params.bind(true);
        let fake = m.generator.forward(&gp, &cond)?;

        let mut disc_loss = 0.0;
        if adversarial {
            let dp = self.disc_params.bind(true);
            let real_out = m.discriminator.forward(&dp, &target, &cond)?;
            let fake_out = m.discriminator.forward(&dp, &fake.detach(), &cond)?;
            let ld = loss_disc(&real_out, &fake_out);
            disc_loss = ld.item();
            if !disc_loss.is_finite() {
                return Err(Error::NonFiniteLoss { step: self.step, detail: format!("discriminator loss {disc_loss}") });
            }
            let grads = dp.grads(&ld.backward());
            self.disc_opt.step(&mut self.disc_params, &grads);
        }

        let terms = if adversarial {
            let dp = self.disc_params.bind(false);
            let real_out = m.discriminator.forward(&dp, &target, &cond)?;
            let fake_out = m.discriminator.forward(&dp, &fake, &cond)?;
            generator_terms(&fake, &target, &mask, Some((&real_out, &fake_out)), m.extractor.as_ref())?
        } else {
            generator_terms(&fake, &target, &mask, None, m.extractor.as_ref())?
        };
        let total = terms.total(&m.cfg.weights);
        let rec = terms.record(&m.cfg.weights);
        if !rec.total.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, detail: format!("generator terms {rec:?}") });
        }
        let grads = gp.grads(&total.backward());
        self.gen_opt.step(&mut self.gen_params, &grads);
        self.step += 1;
        Ok(RenderStepRecord { disc: disc_loss, gen: rec })
    }

    /// Mean colour L1 on held-out samples.
    pub fn validate(&self, samples: &[RenderSample]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let (cond, target, _) = batch_tensors(samples)?;
        let fake = self.model.generator.forward(&self.gen_params.bind(false), &cond)?;
        Ok(fake.sub(&target).abs().mean().item())
    }
}
