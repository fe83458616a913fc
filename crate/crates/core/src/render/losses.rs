use moda_autograd::Var;
use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use super::discriminator::{loss_feature_matching, loss_gan_gen, ScaleOutput};
use super::perceptual::{perceptual_loss, PerceptualExtractor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RenderLosses {
    pub gan: f64,
    pub color: f64,
    pub mouth: f64,
    pub perceptual: f64,
    pub feature_matching: f64,
    pub total: f64,
}

/// Generator objective terms as graph nodes.
#[derive(Debug, Clone)]
pub struct GeneratorTerms {
    pub gan: Var,
    pub color: Var,
    pub mouth: Var,
    pub perceptual: Var,
    pub feature_matching: Var,
}

impl GeneratorTerms {
    /// `L_GAN + w_C L_C + w_M L_M + w_P L_P + w_FM L_FM`.
    pub fn total(&self, w: &LossWeights) -> Var {
        self.gan
            .add(&self.color.scale(w.color))
            .add(&self.mouth.scale(w.mouth))
            .add(&self.perceptual.scale(w.perceptual))
            .add(&self.feature_matching.scale(w.feature_matching))
    }

    pub fn record(&self, w: &LossWeights) -> RenderLosses {
        RenderLosses {
            gan: self.gan.item(),
            color: self.color.item(),
            mouth: self.mouth.item(),
            perceptual: self.perceptual.item(),
            feature_matching: self.feature_matching.item(),
            total: self.total(w).item(),
        }
    }
}

/// Builds every generator term. `mask` is `[B, 1, H, W]`; the adversarial pair is
/// `(real, fake)` discriminator outputs, absent when adversarial training is off.
pub fn generator_terms(
    fake: &Var,
    real: &Var,
    mask: &Var,
    adversarial: Option<(&[ScaleOutput], &[ScaleOutput])>,
    extractor: &dyn PerceptualExtractor,
) -> Result<GeneratorTerms> {
    if fake.shape() != real.shape() {
        return Err(Error::shape(format!("{:?}", real.shape()), format!("{:?}", fake.shape())));
    }
    let s = fake.shape();
    if mask.shape() != [s[0], 1, s[2], s[3]] {
        return Err(Error::shape(format!("[{}, 1, {}, {}]", s[0], s[2], s[3]), format!("{:?}", mask.shape())));
    }
    let color = fake.sub(real).abs().mean();
    let mouth = fake.mul(mask).sub(&real.mul(mask)).abs().mean();
    let perceptual = perceptual_loss(extractor, fake, real);
    let (gan, feature_matching) = match adversarial {
        Some((r, f)) => (loss_gan_gen(f), loss_feature_matching(r, f)),
        None => (Var::scalar(0.0), Var::scalar(0.0)),
    };
    Ok(GeneratorTerms { gan, color, mouth, perceptual, feature_matching })
}
