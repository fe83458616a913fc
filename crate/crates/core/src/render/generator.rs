use moda_autograd::nn::{Bound, Conv2d, Params};
use moda_autograd::Var;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RendererConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct ResBlock {
    a: Conv2d,
    b: Conv2d,
}

impl ResBlock {
    fn new(p: &mut Params, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock {
            a: Conv2d::new(p, &format!("{name}.a"), c, c, 3, 1, 1, rng),
            b: Conv2d::new(p, &format!("{name}.b"), c, c, 3, 1, 1, rng),
        }
    }

    fn forward(&self, p: &Bound, x: &Var, slope: f64) -> Var {
        x.add(&self.b.forward(p, &self.a.forward(p, x).leaky_relu(slope)))
    }
}

#[derive(Debug, Clone)]
struct Up {
    conv: Conv2d,
    merge: Conv2d,
    res: ResBlock,
}

/// U-Net frame generator: one downsampling convolution and residual block per level,
/// mirrored decoder with nearest upsampling and skip concatenation.
#[derive(Debug, Clone)]
pub struct Generator {
    pub in_channels: usize,
    pub resolution: usize,
    down: Vec<(Conv2d, ResBlock)>,
    up: Vec<Up>,
    head: Conv2d,
    slope: f64,
}

/// Parameter prefix of the output convolution.
pub const HEAD: &str = "gen.head.";

impl Generator {
    pub fn new(cfg: &RendererConfig, in_channels: usize, params: &mut Params, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let ch = &cfg.channels;
        let mut down = Vec::with_capacity(ch.len());
        for (i, &c) in ch.iter().enumerate() {
            let conv = if i == 0 {
                Conv2d::new(params, "gen.down.0.conv", in_channels, c, 3, 1, 1, rng)
            } else {
                Conv2d::new(params, &format!("gen.down.{i}.conv"), ch[i - 1], c, 4, 2, 1, rng)
            };
            down.push((conv, ResBlock::new(params, &format!("gen.down.{i}.res"), c, rng)));
        }
        let mut up = Vec::with_capacity(ch.len() - 1);
        for i in (0..ch.len() - 1).rev() {
            up.push(Up {
                conv: Conv2d::new(params, &format!("gen.up.{i}.conv"), ch[i + 1], ch[i], 3, 1, 1, rng),
                merge: Conv2d::new(params, &format!("gen.up.{i}.merge"), 2 * ch[i], ch[i], 3, 1, 1, rng),
                res: ResBlock::new(params, &format!("gen.up.{i}.res"), ch[i], rng),
            });
        }
        let head = Conv2d::new(params, "gen.head", ch[0], 3, 3, 1, 1, rng);
        Ok(Generator { in_channels, resolution: cfg.resolution, down, up, head, slope: cfg.leaky_slope })
    }

    /// `[B, C_in, R, R]` -> `[B, 3, R, R]` in `(-1, 1)`.
    pub fn forward(&self, p: &Bound, x: &Var) -> Result<Var> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels || s[2] != self.resolution || s[3] != self.resolution {
            return Err(Error::shape(
                format!("[B, {}, {r}, {r}]", self.in_channels, r = self.resolution),
                format!("{s:?}"),
            ));
        }
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = x.clone();
        for (conv, res) in &self.down {
            h = conv.forward(p, &h).leaky_relu(self.slope);
            h = res.forward(p, &h, self.slope);
            skips.push(h.clone());
        }
        skips.pop();
        for (u, skip) in self.up.iter().zip(skips.iter().rev()) {
            h = u.conv.forward(p, &h.upsample2x()).leaky_relu(self.slope);
            h = Var::concat(&[h, skip.clone()], 1);
            h = u.merge.forward(p, &h).leaky_relu(self.slope);
            h = u.res.forward(p, &h, self.slope);
        }
        Ok(self.head.forward(p, &h).tanh())
    }

    /// Spatial size after each encoder level.
    pub fn ladder(&self) -> Vec<usize> {
        (0..self.down.len()).map(|i| self.resolution >> i).collect()
    }
}
