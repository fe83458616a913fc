use moda_autograd::nn::{Conv2d, Params};
use moda_autograd::Var;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Maps an image batch `[B, 3, H, W]` to a list of feature maps.
pub trait PerceptualExtractor: Send + Sync {
    fn features(&self, image: &Var) -> Vec<Var>;
}

/// Fixed, randomly initialised convolution stack with ReLU and 2x pooling between
/// stages. Its weights never train.
#[derive(Debug, Clone)]
pub struct RandomConvFeatures {
    params: Params,
    convs: Vec<Conv2d>,
}

impl RandomConvFeatures {
    pub fn new(channels: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut c_in = 3;
        let convs = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv2d::new(&mut params, &format!("perc.{i}"), c_in, c, 3, 1, 1, &mut rng);
                c_in = c;
                conv
            })
            .collect();
        RandomConvFeatures { params, convs }
    }
}

impl PerceptualExtractor for RandomConvFeatures {
    fn features(&self, image: &Var) -> Vec<Var> {
        let p = self.params.bind(false);
        let mut h = image.clone();
        let mut out = Vec::with_capacity(self.convs.len());
        for (i, c) in self.convs.iter().enumerate() {
            if i > 0 {
                h = h.avg_pool2x();
            }
            h = c.forward(&p, &h).relu();
            out.push(h.clone());
        }
        out
    }
}

/// `Σ_l mean|φ_l(a) - φ_l(b)|`.
pub fn perceptual_loss(extractor: &dyn PerceptualExtractor, a: &Var, b: &Var) -> Var {
    let mut total = Var::scalar(0.0);
    for (fa, fb) in extractor.features(a).iter().zip(extractor.features(b)) {
        total = total.add(&fa.sub(&fb).abs().mean());
    }
    total
}
