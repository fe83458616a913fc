use moda_autograd::nn::{Bound, Conv2d, Params};
use moda_autograd::Var;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RendererConfig;
use crate::error::{Error, Result};

/// Patch scores and intermediate activations at one scale.
#[derive(Debug, Clone)]
pub struct ScaleOutput {
    pub score: Var,
    pub features: Vec<Var>,
}

/// Conditional PatchGAN evaluated on the input and on successive 2x average-pooled copies.
#[derive(Debug, Clone)]
pub struct MultiScaleDiscriminator {
    pub in_channels: usize,
    scales: Vec<(Vec<Conv2d>, Conv2d)>,
    slope: f64,
}

impl MultiScaleDiscriminator {
    /// `in_channels` counts image plus condition channels.
    pub fn new(cfg: &RendererConfig, in_channels: usize, params: &mut Params, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales = (0..cfg.disc_scales)
            .map(|s| {
                let mut convs = Vec::new();
                let mut c_in = in_channels;
                for (l, &c) in cfg.disc_channels.iter().enumerate() {
                    convs.push(Conv2d::new(params, &format!("disc.{s}.{l}"), c_in, c, 4, 2, 1, &mut rng));
                    c_in = c;
                }
                (convs, Conv2d::new(params, &format!("disc.{s}.score"), c_in, 1, 3, 1, 1, &mut rng))
            })
            .collect();
        MultiScaleDiscriminator { in_channels, scales, slope: cfg.leaky_slope }
    }

    pub fn forward(&self, p: &Bound, image: &Var, condition: &Var) -> Result<Vec<ScaleOutput>> {
        let mut x = Var::concat(&[image.clone(), condition.clone()], 1);
        if x.shape()[1] != self.in_channels {
            return Err(Error::shape(self.in_channels, x.shape()[1]));
        }
        let mut out = Vec::with_capacity(self.scales.len());
        for (i, (convs, score)) in self.scales.iter().enumerate() {
            if i > 0 {
                x = x.avg_pool2x();
            }
            let mut h = x.clone();
            let mut features = Vec::with_capacity(convs.len());
            for c in convs {
                h = c.forward(p, &h).leaky_relu(self.slope);
                features.push(h.clone());
            }
            out.push(ScaleOutput { score: score.forward(p, &h), features });
        }
        Ok(out)
    }
}

/// `Σ_scales mean((p* - 1)²) + mean(p²)`.
pub fn loss_disc(real: &[ScaleOutput], fake: &[ScaleOutput]) -> Var {
    let mut total = Var::scalar(0.0);
    for (r, f) in real.iter().zip(fake) {
        total = total.add(&r.score.add_scalar(-1.0).square().mean()).add(&f.score.square().mean());
    }
    total
}

/// `Σ_scales mean((p - 1)²)`.
pub fn loss_gan_gen(fake: &[ScaleOutput]) -> Var {
    let mut total = Var::scalar(0.0);
    for f in fake {
        total = total.add(&f.score.add_scalar(-1.0).square().mean());
    }
    total
}

/// `Σ_scales Σ_layers mean|y - y*|` with the real activations treated as constants.
pub fn loss_feature_matching(real: &[ScaleOutput], fake: &[ScaleOutput]) -> Var {
    let mut total = Var::scalar(0.0);
    for (r, f) in real.iter().zip(fake) {
        for (yr, yf) in r.features.iter().zip(&f.features) {
            total = total.add(&yf.sub(&yr.detach()).abs().mean());
        }
    }
    total
}
