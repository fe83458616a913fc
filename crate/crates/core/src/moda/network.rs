use moda_autograd::nn::{Activation, Bound, Linear, Mlp, Params};
use moda_autograd::Var;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::attention::{add_positions, attend, bias_var, Attended, TransformerBlock};
use super::config::{ModaConfig, ValueSource};
use super::masks::{alignment_bias, causal_bias, encoding_table};
use super::output::{MotionOutput, MotionVars, STREAMS, STREAM_WIDTHS};
use crate::error::{Error, Result};
use crate::geometry::FacePoints;

/// How the probabilistic branch chooses its latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbMode {
    /// `x = μ + σ ε`, differentiable in `μ` and `logσ`.
    Train,
    /// `x ~ N(0, I)` from the prior.
    Sample,
    /// `x = μ`; removes all sampling.
    Mean,
}

/// Encoder moments of the probabilistic branch, each `[1, d_l]`.
#[derive(Debug, Clone)]
pub struct VaeMoments {
    pub mu: Var,
    pub logvar: Var,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ModaTrace {
    pub s_a: Var,
    pub v_s: Var,
    pub s: Var,
    pub gamma: Attended,
    pub s_sa: Var,
    pub s_pa: Var,
    pub latent: Var,
    pub moments: VaeMoments,
    pub s_t: Var,
    pub motion: MotionVars,
}

/// `N(0, I)` draws of shape `[1, n]` from a seeded stream.
pub fn standard_normal(n: usize, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Var::constant(moda_autograd::tensor(data, &[1, n]))
}

/// `μ + exp(logσ / 2) ε`; `σ` is a variance.
pub fn reparameterize(mu: &Var, logvar: &Var, eps: &Var) -> Var {
    mu.add(&logvar.scale(0.5).exp().mul(eps))
}

/// Adds the style code to every row of `s_a`.
pub fn combine(s_a: &Var, v_s: &Var) -> Result<Var> {
    let d = s_a.shape()[1];
    if v_s.value().len() != d {
        return Err(Error::DimMismatch(format!("style code has {} entries, audio latents have {d}", v_s.value().len())));
    }
    Ok(s_a.add(&v_s.reshape(&[1, d])))
}

#[derive(Debug, Clone)]
pub struct ModaNet {
    pub cfg: ModaConfig,
    audio_enc: Mlp,
    subject_enc: Mlp,
    gamma_q: Linear,
    gamma_k: Linear,
    gamma_v: Linear,
    spec_q: Linear,
    spec_k: Linear,
    enc_blocks: Vec<TransformerBlock>,
    mu_head: Linear,
    logvar_head: Linear,
    dec_in: Linear,
    dec_blocks: Vec<TransformerBlock>,
    tails: Vec<Mlp>,
}

impl ModaNet {
    /// Builds the layer layout and a freshly initialized parameter set.
    pub fn new(cfg: ModaConfig, seed: u64) -> Result<(Self, Params)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        let (d, h, act) = (cfg.d, cfg.heads, Activation::Silu);
        let rng = &mut rng;
        let net = ModaNet {
            audio_enc: Mlp::new(&mut p, "audio_enc", &[cfg.audio_dim, d, d], act, rng),
            subject_enc: Mlp::new(&mut p, "subject_enc", &[FacePoints::COUNT * 3, d, d], act, rng),
            gamma_q: Linear::new(&mut p, "gamma.q", d, d, false, rng),
            gamma_k: Linear::new(&mut p, "gamma.k", d, d, false, rng),
            gamma_v: Linear::new(&mut p, "gamma.v", d, d, false, rng),
            spec_q: Linear::new(&mut p, "spec.q", d, d, false, rng),
            spec_k: Linear::new(&mut p, "spec.k", d, d, false, rng),
            enc_blocks: (0..cfg.n_enc_layers)
                .map(|i| TransformerBlock::new(&mut p, &format!("prob.enc.{i}"), d, h, cfg.ffn_mult, rng))
                .collect(),
            mu_head: Linear::new(&mut p, "prob.mu", d, cfg.d_latent, true, rng),
            logvar_head: Linear::new(&mut p, "prob.logvar", d, cfg.d_latent, true, rng),
            dec_in: Linear::new(&mut p, "prob.dec_in", cfg.d_latent, d, true, rng),
            dec_blocks: (0..cfg.n_dec_layers)
                .map(|i| TransformerBlock::new(&mut p, &format!("prob.dec.{i}"), d, h, cfg.ffn_mult, rng))
                .collect(),
            tails: STREAMS
                .iter()
                .zip(STREAM_WIDTHS)
                .map(|(name, w)| Mlp::new(&mut p, &format!("tail.{name}"), &[2 * d, d, w], act, rng))
                .collect(),
            cfg,
        };
        Ok((net, p))
    }

    /// Parameter-name prefixes of the four decoder tails.
    pub fn tail_prefixes() -> Vec<String> {
        STREAMS.iter().map(|s| format!("tail.{s}.")).collect()
    }

    pub fn encode_audio(&self, p: &Bound, a: &Var) -> Var {
        self.audio_enc.forward(p, a)
    }

    /// Style code `[1, d]` from the canonical subject face.
    pub fn encode_subject(&self, p: &Bound, face: &FacePoints) -> Var {
        let x = Var::constant(moda_autograd::tensor(face.to_flat(), &[1, FacePoints::COUNT * 3]));
        self.subject_enc.forward(p, &x)
    }

    /// `Γ(s)`: causal self-attention over the periodically encoded sequence.
    pub fn biased_causal_self_attention(&self, p: &Bound, s: &Var) -> Result<Attended> {
        let (t, d) = (s.shape()[0], s.shape()[1]);
        let x = s.add(&Var::constant(encoding_table(t, d, Some(self.cfg.period())).into_dyn()));
        let bias = bias_var(&causal_bias(t, self.cfg.q)?);
        Ok(attend(
            &self.gamma_q.forward(p, &x),
            &self.gamma_k.forward(p, &x),
            &self.gamma_v.forward(p, &x),
            Some(&bias),
            self.cfg.heads,
        ))
    }

    /// Cross-attention from `Γ(s)` to `s_a` under the alignment bias.
    pub fn specific_attention(&self, p: &Bound, s_a: &Var, gamma_s: &Var) -> Result<Attended> {
        let t = s_a.shape()[0];
        self.specific_attention_with_bias(p, s_a, gamma_s, &alignment_bias(t))
    }

    /// As [`Self::specific_attention`] with an arbitrary additive bias.
    pub fn specific_attention_with_bias(&self, p: &Bound, s_a: &Var, gamma_s: &Var, bias: &Array2<f64>) -> Result<Attended> {
        if s_a.shape() != gamma_s.shape() {
            return Err(Error::DimMismatch(format!("s_a {:?} vs Γ(s) {:?}", s_a.shape(), gamma_s.shape())));
        }
        let value = match self.cfg.value_source {
            ValueSource::Audio => s_a,
            ValueSource::Motion => gamma_s,
        };
        Ok(attend(
            &self.spec_q.forward(p, gamma_s),
            &self.spec_k.forward(p, s_a),
            value,
            Some(&bias_var(bias)),
            self.cfg.heads,
        ))
    }

    /// Encoder moments of the probabilistic branch.
    pub fn moments(&self, p: &Bound, s: &Var) -> VaeMoments {
        let mut h = add_positions(s);
        for blk in &self.enc_blocks {
            h = blk.forward(p, &h, None);
        }
        let pooled = h.mean_axis_keep(0);
        let c = self.cfg.logvar_clamp;
        VaeMoments { mu: self.mu_head.forward(p, &pooled), logvar: self.logvar_head.forward(p, &pooled).clamp(-c, c) }
    }

    /// Decodes a `[1, d_l]` latent into a `[t, d]` sequence.
    pub fn decode_latent(&self, p: &Bound, x: &Var, t: usize) -> Var {
        let table = Var::constant(encoding_table(t, self.cfg.d, None).into_dyn());
        let mut h = table.add(&self.dec_in.forward(p, x));
        for blk in &self.dec_blocks {
            h = blk.forward(p, &h, None);
        }
        h
    }

    /// Returns `(s_pa, moments, x)`.
    pub fn probabilistic_attention(&self, p: &Bound, s: &Var, mode: ProbMode, seed: u64) -> (Var, VaeMoments, Var) {
        let m = self.moments(p, s);
        let x = match mode {
            ProbMode::Train => reparameterize(&m.mu, &m.logvar, &standard_normal(self.cfg.d_latent, seed)),
            ProbMode::Sample => standard_normal(self.cfg.d_latent, seed),
            ProbMode::Mean => m.mu.clone(),
        };
        (self.decode_latent(p, &x, s.shape()[0]), m, x)
    }

    pub fn dual_attention(s_sa: &Var, s_pa: &Var) -> Result<Var> {
        if s_sa.shape() != s_pa.shape() {
            return Err(Error::DimMismatch(format!("s_sa {:?} vs s_pa {:?}", s_sa.shape(), s_pa.shape())));
        }
        Ok(Var::concat(&[s_sa.clone(), s_pa.clone()], 1))
    }

    pub fn decode_motion(&self, p: &Bound, s_t: &Var) -> MotionVars {
        let out: Vec<Var> = self.tails.iter().map(|m| m.forward(p, s_t)).collect();
        MotionVars { mouth: out[0].clone(), pose: out[1].clone(), eyes: out[2].clone(), torso: out[3].clone() }
    }

    pub fn forward(&self, p: &Bound, audio: &Array2<f64>, face: &FacePoints, mode: ProbMode, seed: u64) -> Result<ModaTrace> {
        let (t, da) = audio.dim();
        if t == 0 {
            return Err(Error::TooShort("audio has no frames".into()));
        }
        if da != self.cfg.audio_dim {
            return Err(Error::DimMismatch(format!("audio features have width {da}, network expects {}", self.cfg.audio_dim)));
        }
        if audio.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("audio features contain non-finite values".into()));
        }
        let s_a = self.encode_audio(p, &Var::constant(audio.clone().into_dyn()));
        let v_s = self.encode_subject(p, face);
        let s = combine(&s_a, &v_s)?;
        let gamma = self.biased_causal_self_attention(p, &s)?;
        let s_sa = self.specific_attention(p, &s_a, &gamma.output)?.output;
        let (s_pa, moments, latent) = self.probabilistic_attention(p, &s, mode, seed);
        let s_t = Self::dual_attention(&s_sa, &s_pa)?;
        let motion = self.decode_motion(p, &s_t);
        Ok(ModaTrace { s_a, v_s, s, gamma, s_sa, s_pa, latent, moments, s_t, motion })
    }

    /// Forward pass on frozen parameters, returning displacement streams.
    pub fn infer(&self, params: &Params, audio: &Array2<f64>, face: &FacePoints, mode: ProbMode, seed: u64) -> Result<MotionOutput> {
        let trace = self.forward(&params.bind(false), audio, face, mode, seed)?;
        let out = trace.motion.to_output();
        out.validate()?;
        Ok(out)
    }
}
