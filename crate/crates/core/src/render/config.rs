use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator loss weights for the colour, mouth, perceptual and feature-matching terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub color: f64,
    pub mouth: f64,
    pub perceptual: f64,
    pub feature_matching: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { color: 50.0, mouth: 100.0, perceptual: 10.0, feature_matching: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RendererConfig {
    pub resolution: usize,
    /// Encoder width per level; one level per halving down to a 2x2 bottleneck.
    pub channels: Vec<usize>,
    pub weights: LossWeights,
    pub disc_scales: usize,
    pub disc_channels: Vec<usize>,
    /// Channels of the fixed random perceptual feature stack.
    pub perceptual_channels: Vec<usize>,
    pub mouth_dilation_px: f64,
    /// Neighbours per point when deriving mesh edges from the template.
    pub mesh_neighbors: usize,
    /// Train the adversarial terms; off reduces the objective to the reconstruction terms.
    pub adversarial: bool,
    pub leaky_slope: f64,
}

impl Default for RendererConfig {
    fn default() -> Self {
        RendererConfig {
            resolution: 256,
            channels: vec![64, 128, 256, 512, 512, 512, 512, 512],
            weights: LossWeights::default(),
            disc_scales: 2,
            disc_channels: vec![64, 128],
            perceptual_channels: vec![16, 32, 64],
            mouth_dilation_px: 8.0,
            mesh_neighbors: 3,
            adversarial: true,
            leaky_slope: 0.2,
        }
    }
}

impl RendererConfig {
    /// Number of encoder levels: `log2(resolution)`, ending at 2x2.
    pub fn levels(&self) -> usize {
        self.resolution.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        if r < 64 || !r.is_power_of_two() {
            return Err(Error::Config(format!("renderer resolution must be a power of two >= 64, got {r}")));
        }
        if self.channels.len() != self.levels() {
            return Err(Error::Config(format!(
                "{r}x{r} needs {} encoder widths, got {}",
                self.levels(),
                self.channels.len()
            )));
        }
        if self.channels.iter().chain(&self.disc_channels).chain(&self.perceptual_channels).any(|&c| c == 0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.disc_scales == 0 || self.disc_channels.is_empty() {
            return Err(Error::Config("discriminator needs at least one scale and one layer".into()));
        }
        let w = self.weights;
        if [w.color, w.mouth, w.perceptual, w.feature_matching].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}
