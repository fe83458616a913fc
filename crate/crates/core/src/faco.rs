//! Facial composer: dense 478-point landmarks from the subject face and generated
//! mouth and eye points, trained with an LSGAN objective plus an L1 term.

use moda_autograd::nn::{Activation, Bound, Mlp, Params};
use moda_autograd::optim::Adam;
use moda_autograd::Var;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EyePoints, FacePoints, MouthPoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacoConfig {
    pub d: usize,
    /// Weight of the L1 term in the generator objective.
    pub lambda: f64,
    /// Multiplier on the adversarial term; 0 turns training into plain L1 regression.
    pub gan_weight: f64,
    pub disc_hidden: usize,
}

impl Default for FacoConfig {
    fn default() -> Self {
        FacoConfig { d: 256, lambda: 10.0, gan_weight: 1.0, disc_hidden: 256 }
    }
}

impl FacoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.disc_hidden == 0 {
            return Err(Error::Config("FaCo widths must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !(self.gan_weight >= 0.0) {
            return Err(Error::Config(format!("FaCo weights must be non-negative (λ {}, gan {})", self.lambda, self.gan_weight)));
        }
        Ok(())
    }
}

const FACE_WIDTH: usize = FacePoints::COUNT * 3;

/// One training example.
#[derive(Debug, Clone)]
pub struct FacoSample {
    pub subject: FacePoints,
    pub mouth: MouthPoints,
    pub eyes: EyePoints,
    pub target: FacePoints,
}

#[derive(Debug, Clone)]
pub struct FacoNet {
    pub cfg: FacoConfig,
    mouth_enc: Mlp,
    eye_enc: Mlp,
    face_enc: Mlp,
    decoder: Mlp,
}

/// MLP scoring flattened dense points.
#[derive(Debug, Clone)]
pub struct FacoDiscriminator {
    mlp: Mlp,
}

fn row(values: Vec<f64>, width: usize) -> Var {
    Var::constant(moda_autograd::tensor(values, &[1, width]))
}

fn rows(values: Vec<Vec<f64>>, width: usize) -> Var {
    let n = values.len();
    Var::constant(moda_autograd::tensor(values.into_iter().flatten().collect(), &[n, width]))
}

impl FacoNet {
    pub fn new(cfg: FacoConfig, seed: u64) -> Result<(Self, Params, FacoDiscriminator, Params)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gp = Params::new();
        let d = cfg.d;
        let act = Activation::LeakyRelu(0.2);
        let mouth_enc = Mlp::new(&mut gp, "faco.mouth_enc", &[MouthPoints::COUNT * 3, d, d], act, &mut rng);
        let eye_enc = Mlp::new(&mut gp, "faco.eye_enc", &[EyePoints::COUNT * 3, d, d], act, &mut rng);
        let face_enc = Mlp::new(&mut gp, "faco.face_enc", &[FACE_WIDTH, d, d], act, &mut rng);
        let decoder = Mlp::new(&mut gp, "faco.decoder", &[2 * d, 2 * d, FACE_WIDTH], act, &mut rng);
        // start as the identity on the subject face
        gp.zero_prefix(&format!("{}.", decoder.last_layer_prefix()));
        let mut dp = Params::new();
        let disc = FacoDiscriminator {
            mlp: Mlp::new(&mut dp, "faco.disc", &[FACE_WIDTH, cfg.disc_hidden, cfg.disc_hidden, 1], act, &mut rng),
        };
        Ok((FacoNet { cfg, mouth_enc, eye_enc, face_enc, decoder }, gp, disc, dp))
    }

    /// Batched composition on `[B, 1434]`, `[B, 120]`, `[B, 180]` rows.
    pub fn compose_rows(&self, p: &Bound, subject: &Var, mouth: &Var, eyes: &Var) -> Var {
        let pm = self.mouth_enc.forward(p, mouth);
        let pe = self.eye_enc.forward(p, eyes);
        let pf = self.face_enc.forward(p, subject);
        let fused = Var::concat(&[pm, pe], 1).add(&Var::concat(&[pf.clone(), pf], 1));
        subject.add(&self.decoder.forward(p, &fused))
    }

    pub fn compose(&self, params: &Params, subject: &FacePoints, mouth: &MouthPoints, eyes: &EyePoints) -> Result<FacePoints> {
        let out = self.compose_rows(
            &params.bind(false),
            &row(subject.to_flat(), FACE_WIDTH),
            &row(mouth.to_flat(), MouthPoints::COUNT * 3),
            &row(eyes.to_flat(), EyePoints::COUNT * 3),
        );
        FacePoints::from_flat(out.value().as_slice().expect("contiguous"))
    }

    fn batch(samples: &[FacoSample]) -> (Var, Var, Var, Var) {
        (
            rows(samples.iter().map(|s| s.subject.to_flat()).collect(), FACE_WIDTH),
            rows(samples.iter().map(|s| s.mouth.to_flat()).collect(), MouthPoints::COUNT * 3),
            rows(samples.iter().map(|s| s.eyes.to_flat()).collect(), EyePoints::COUNT * 3),
            rows(samples.iter().map(|s| s.target.to_flat()).collect(), FACE_WIDTH),
        )
    }
}

impl FacoDiscriminator {
    /// Scores `[B, 1434]` rows, returning `[B, 1]`.
    pub fn score_rows(&self, p: &Bound, points: &Var) -> Var {
        self.mlp.forward(p, points)
    }

    pub fn discriminate(&self, params: &Params, points: &FacePoints) -> f64 {
        self.score_rows(&params.bind(false), &row(points.to_flat(), FACE_WIDTH)).item()
    }
}

/// `(z - 1)² + ẑ²`, batch-averaged.
pub fn loss_disc(z: &Var, z_hat: &Var) -> Var {
    z.add_scalar(-1.0).square().mean().add(&z_hat.square().mean())
}

/// `w_gan (ẑ - 1)² + λ mean|P_gt - P|`.
pub fn loss_gen(z_hat: &Var, pred: &Var, gt: &Var, lambda: f64, gan_weight: f64) -> Var {
    let l1 = gt.sub(pred).abs().mean().scale(lambda);
    if gan_weight == 0.0 {
        return l1;
    }
    z_hat.add_scalar(-1.0).square().mean().scale(gan_weight).add(&l1)
}

/// Mean Euclidean distance between corresponding points.
pub fn mean_point_error(a: &FacePoints, b: &FacePoints) -> f64 {
    let n = a.points().len() as f64;
    a.points().iter().zip(b.points()).map(|(p, q)| crate::geometry::distance(p, q)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FacoStepRecord {
    pub disc: f64,
    pub gen: f64,
    pub l1: f64,
}

pub struct FacoTrainer {
    pub net: FacoNet,
    pub disc: FacoDiscriminator,
    pub gen_params: Params,
    pub disc_params: Params,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub step: u64,
}

impl FacoTrainer {
    pub fn new(net: FacoNet, gen_params: Params, disc: FacoDiscriminator, disc_params: Params, lr: f64, betas: (f64, f64)) -> Self {
        let gen_opt = Adam::new(&gen_params, lr, betas);
        let disc_opt = Adam::new(&disc_params, lr, betas);
        FacoTrainer { net, disc, gen_params, disc_params, gen_opt, disc_opt, step: 0 }
    }

    /// One discriminator update on detached fakes, then one generator update.
    pub fn train_step(&mut self, batch: &[FacoSample]) -> Result<FacoStepRecord> {
        if batch.is_empty() {
            return Err(Error::DatasetEmpty("empty FaCo batch".into()));
        }
        let (subject, mouth, eyes, target) = FacoNet::batch(batch);
        let gp = self.gen_params.bind(true);
        let fake = self.net.compose_rows(&gp, &subject, &mouth, &eyes);
        let adversarial = self.net.cfg.gan_weight > 0.0;
        let mut disc = 0.0;
        if adversarial {
            let dp = self.disc_params.bind(true);
            let ld = loss_disc(&self.disc.score_rows(&dp, &target), &self.disc.score_rows(&dp, &fake.detach()));
            disc = ld.item();
            if !disc.is_finite() {
                return Err(Error::NonFiniteLoss { step: self.step, detail: format!("FaCo discriminator loss {disc}") });
            }
            let g = dp.grads(&ld.backward());
            self.disc_opt.step(&mut self.disc_params, &g);
        }
        let z_hat = if adversarial {
            self.disc.score_rows(&self.disc_params.bind(false), &fake)
        } else {
            Var::scalar(1.0)
        };
        let lg = loss_gen(&z_hat, &fake, &target, self.net.cfg.lambda, self.net.cfg.gan_weight);
        let rec = FacoStepRecord { disc, gen: lg.item(), l1: target.sub(&fake).abs().mean().item() };
        if !rec.gen.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, detail: format!("FaCo generator loss {}", rec.gen) });
        }
        let g = gp.grads(&lg.backward());
        self.gen_opt.step(&mut self.gen_params, &g);
        self.step += 1;
        Ok(rec)
    }

    /// Mean L1 between composed and target points.
    pub fn validate(&self, samples: &[FacoSample]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let (subject, mouth, eyes, target) = FacoNet::batch(samples);
        let fake = self.net.compose_rows(&self.gen_params.bind(false), &subject, &mouth, &eyes);
        Ok(target.sub(&fake).abs().mean().item())
    }
}
