use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which operand the specific-attention branch reads its values from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueSource {
    /// Audio latents `s_a`.
    #[default]
    Audio,
    /// The causal self-attention output `Γ(s)`.
    Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModaConfig {
    /// Audio feature width fed to the audio encoder.
    pub audio_dim: usize,
    pub d: usize,
    pub d_latent: usize,
    /// Causal-bias slope.
    pub q: f64,
    /// Period of the positional encoding in `Γ`; `None` ties it to `round(q)`.
    pub ppe_period: Option<usize>,
    pub heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_mult: usize,
    /// Weights for the mouth, pose, eye and torso terms.
    pub lambdas: [f64; 4],
    pub value_source: ValueSource,
    /// Symmetric clamp applied to the predicted log-variance.
    pub logvar_clamp: f64,
}

impl Default for ModaConfig {
    fn default() -> Self {
        ModaConfig {
            audio_dim: 80,
            d: 256,
            d_latent: 64,
            q: 1.0,
            ppe_period: Some(25),
            heads: 1,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_mult: 2,
            lambdas: [1.0; 4],
            value_source: ValueSource::Audio,
            logvar_clamp: 10.0,
        }
    }
}

impl ModaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.audio_dim == 0 || self.d == 0 || self.d_latent == 0 {
            return bad(format!("widths must be positive (audio {}, d {}, d_l {})", self.audio_dim, self.d, self.d_latent));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad(format!("q must be positive, got {}", self.q));
        }
        if self.ppe_period == Some(0) {
            return bad("ppe_period must be at least 1".into());
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return bad(format!("{} heads do not divide d = {}", self.heads, self.d));
        }
        if self.ffn_mult == 0 {
            return bad("ffn_mult must be positive".into());
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad(format!("task weights must be non-negative, got {:?}", self.lambdas));
        }
        if !(self.logvar_clamp > 0.0) {
            return bad("logvar_clamp must be positive".into());
        }
        Ok(())
    }

    pub fn period(&self) -> usize {
        self.ppe_period.unwrap_or_else(|| (self.q.round() as usize).max(1))
    }
}
