#![allow(dead_code)]

use moda_autograd::gradcheck::{check, GradCheckConfig, GradCheckReport};
use moda_autograd::nn::{uniform, Bound, Params};
use moda_autograd::{tensor, Var};
use moda_core::audio::{extract_features, LogMelExtractor};
use moda_core::faco::{loss_disc as faco_loss_disc, loss_gen, mean_point_error, FacoConfig, FacoNet, FacoSample, FacoTrainer};
use moda_core::geometry::{EyePoints, FacePoints, MouthPoints, Point2};
use moda_core::metrics::psnr;
use moda_core::moda::train::sample_loss;
use moda_core::moda::{FrameMotion, ModaConfig, ModaNet, ModaSample, ModaTrainer, MotionOutput, ProbMode, ValueSource};
use moda_core::pipeline::PipelineConfig;
use moda_core::preprocess::dataset::Split;
use moda_core::preprocess::polygon::segment_distance;
use moda_core::preprocess::segmentation::{SegmentationMap, BACKGROUND, BODY, FACE, HAIR};
use moda_core::preprocess::{build_dataset, DatasetConfig};
use moda_core::render::{
    generator_terms, loss_disc, MultiScaleDiscriminator, RandomConvFeatures, RendererConfig, RendererModel, RendererTrainer,
    CONDITION_CHANNELS,
};
use moda_core::synth::{generate, template_face, SynthConfig};
use ndarray::{Array2, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N: usize = 64;

fn grad_cfg(samples_per_tensor: usize) -> GradCheckConfig {
    GradCheckConfig { rel_tol: 1e-4, samples_per_tensor, ..Default::default() }
}

/// Adds uniform noise to every parameter so zero-initialised layers pass gradient through.
pub fn jitter(p: &mut Params, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = p.names().cloned().collect();
    for n in names {
        let t = p.get(&n).unwrap();
        let v = t + &uniform(t.shape(), scale, &mut rng);
        p.set(n, v);
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
    let n = shape.iter().product();
    tensor((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape)
}

fn toy_moda(value_source: ValueSource) -> (ModaNet, Params, ModaSample) {
    let mc = ModaConfig { audio_dim: 5, d: 8, d_latent: 4, n_enc_layers: 1, n_dec_layers: 1, value_source, ..Default::default() };
    let (net, params) = ModaNet::new(mc, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = 6;
    let audio = Array2::from_shape_fn((t, 5), |_| rng.random_range(-1.0..1.0));
    let mut target = MotionOutput::zeros(t);
    for s in target.streams_mut() {
        s.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    (net, params, ModaSample { audio, target, face: template_face() })
}

pub fn moda_gradients() -> Vec<(String, GradCheckReport)> {
    let mut out = Vec::new();
    for vs in [ValueSource::Audio, ValueSource::Motion] {
        let (net, params, sample) = toy_moda(vs);
        let groups = ["audio_enc", "subject_enc", "gamma.", "spec.", "prob.enc", "prob.mu", "prob.logvar", "prob.dec", "tail."];
        for g in groups {
            let r = check(&params, |b: &Bound| sample_loss(&net, b, &sample, ProbMode::Train, 11).unwrap().0, &[g], grad_cfg(4));
            out.push((format!("moda {g} ({vs:?} values)"), r));
        }
    }
    let (net, params, sample) = toy_moda(ValueSource::Audio);
    let r = check(&params, |b: &Bound| sample_loss(&net, b, &sample, ProbMode::Mean, 0).unwrap().0, &[], grad_cfg(2));
    out.push(("moda mean mode".into(), r));
    out
}

pub fn faco_gradients() -> Vec<(String, GradCheckReport)> {
    let fc = FacoConfig { d: 8, disc_hidden: 8, ..Default::default() };
    let (net, mut gp, disc, dp) = FacoNet::new(fc, 5).unwrap();
    jitter(&mut gp, 0.05, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rows = |w: usize| Var::constant(random(&mut rng, &[2, w], -1.0, 1.0));
    let subject = rows(FacePoints::COUNT * 3);
    let mouth = rows(MouthPoints::COUNT * 3);
    let eyes = rows(EyePoints::COUNT * 3);
    let target = rows(FacePoints::COUNT * 3);
    let gen_loss = |b: &Bound| {
        let fake = net.compose_rows(b, &subject, &mouth, &eyes);
        let z_hat = disc.score_rows(&dp.bind(false), &fake);
        loss_gen(&z_hat, &fake, &target, 10.0, 1.0)
    };
    let g = check(&gp, gen_loss, &[], grad_cfg(4));
    let fake = net.compose_rows(&gp.bind(false), &subject, &mouth, &eyes);
    let disc_loss = |b: &Bound| faco_loss_disc(&disc.score_rows(b, &target), &disc.score_rows(b, &fake));
    let d = check(&dp, disc_loss, &[], grad_cfg(4));
    vec![("faco generator".into(), g), ("faco discriminator".into(), d)]
}

pub fn renderer_gradients() -> Vec<(String, GradCheckReport)> {
    let rc = RendererConfig {
        resolution: 64,
        channels: vec![2; 6],
        disc_channels: vec![3, 4],
        perceptual_channels: vec![3, 4],
        adversarial: false,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (h, w) = (16, 16);
    let mut dp = Params::new();
    let disc = MultiScaleDiscriminator::new(&rc, 3 + 2, &mut dp, 1);
    let extractor = RandomConvFeatures::new(&rc.perceptual_channels, 2);
    let real = Var::constant(random(&mut rng, &[1, 3, h, w], -1.0, 1.0));
    let cond = Var::constant(random(&mut rng, &[1, 2, h, w], 0.0, 1.0));
    let mask = Var::constant(random(&mut rng, &[1, 1, h, w], 0.0, 1.0).mapv(|v| if v > 0.5 { 1.0 } else { 0.0 }));
    let mut fp = Params::new();
    fp.insert("fake", random(&mut rng, &[1, 3, h, w], -1.0, 1.0));
    let objective = |b: &Bound| {
        let fake = b.get("fake");
        let dpb = dp.bind(false);
        let r = disc.forward(&dpb, &real, &cond).unwrap();
        let f = disc.forward(&dpb, fake, &cond).unwrap();
        generator_terms(fake, &real, &mask, Some((&r, &f)), &extractor).unwrap().total(&rc.weights)
    };
    let image = check(&fp, objective, &[], grad_cfg(40));
    let fake = Var::constant(fp.get("fake").unwrap().clone());
    let dl = |b: &Bound| loss_disc(&disc.forward(b, &real, &cond).unwrap(), &disc.forward(b, &fake, &cond).unwrap());
    let discr = check(&dp, dl, &[], grad_cfg(4));

    let (model, gp, _) = RendererModel::new(rc, CONDITION_CHANNELS, 4).unwrap();
    let cond = Var::constant(random(&mut rng, &[1, CONDITION_CHANNELS, 64, 64], -1.0, 1.0));
    let head = Var::constant(random(&mut rng, &[1, 3, 64, 64], -1.0, 1.0));
    let gen = |b: &Bound| model.generator.forward(b, &cond).unwrap().mul(&head).sum();
    let generator = check(&gp, gen, &[], grad_cfg(2));
    vec![
        ("renderer objective on the image".into(), image),
        ("renderer discriminator".into(), discr),
        ("renderer generator".into(), generator),
    ]
}

pub fn gradient_suite() -> Vec<(String, GradCheckReport)> {
    let mut all = moda_gradients();
    all.extend(faco_gradients());
    all.extend(renderer_gradients());
    all
}

/// Trains the desk-size motion network on one 50-frame clip until `L_TP < 1e-2`.
/// Returns the number of updates and the last training `L_TP`.
pub fn overfit_moda(max_steps: usize) -> (usize, f64) {
    let clip = generate(&SynthConfig { frames: 50, ..Default::default() }).unwrap();
    let cfg = PipelineConfig::desk();
    let feats = extract_features(&clip.waveform, 25.0, &LogMelExtractor::default()).unwrap();
    let tmpl = clip.template();
    let frames: Vec<FrameMotion> = clip
        .motion
        .iter()
        .map(|m| FrameMotion { mouth: m.mouth.clone(), pose: m.pose, eyes: m.eyes.clone(), torso: m.torso.clone() })
        .collect();
    let sample = ModaSample { audio: feats.features, target: MotionOutput::from_frames(&frames, &tmpl), face: tmpl.face.clone() };
    let (net, params) = ModaNet::new(cfg.moda.clone(), cfg.seed).unwrap();
    let mut tr = ModaTrainer::new(net, params, cfg.optimizer.lr, cfg.optimizer.betas, cfg.seed);
    let mut tp = f64::INFINITY;
    for step in 1..=max_steps {
        tp = tr.train_step(std::slice::from_ref(&sample)).unwrap().tp;
        if tp < 1e-2 {
            return (step, tp);
        }
    }
    (max_steps, tp)
}

/// Trains FaCo-Net for `steps` full-batch updates on ten frames and returns the
/// mean point error over them.
pub fn overfit_faco(steps: usize) -> f64 {
    let clip = generate(&SynthConfig::default()).unwrap();
    let tmpl = clip.template();
    let samples: Vec<FacoSample> = clip
        .motion
        .iter()
        .step_by(5)
        .take(10)
        .map(|m| FacoSample { subject: tmpl.face.clone(), mouth: m.mouth.clone(), eyes: m.eyes.clone(), target: m.face.clone() })
        .collect();
    assert_eq!(samples.len(), 10);
    let cfg = PipelineConfig::desk();
    let (net, gp, disc, dp) = FacoNet::new(cfg.faco.clone(), cfg.seed).unwrap();
    let mut tr = FacoTrainer::new(net, gp, disc, dp, cfg.optimizer.lr, cfg.optimizer.betas);
    for _ in 0..steps {
        tr.train_step(&samples).unwrap();
    }
    let total: f64 = samples
        .iter()
        .map(|s| mean_point_error(&tr.net.compose(&tr.gen_params, &s.subject, &s.mouth, &s.eyes).unwrap(), &s.target))
        .sum();
    total / samples.len() as f64
}

/// Trains the desk renderer on a 20-frame 64x64 clip, checking the mean PSNR every
/// 25 updates, until it exceeds `target` or `max_steps` is reached.
pub fn overfit_renderer(max_steps: usize, target: f64) -> (usize, f64) {
    let dir = tempfile::tempdir().unwrap();
    let clip = generate(&SynthConfig { frames: 20, resolution: 64, ..Default::default() }).unwrap();
    clip.write_dir(&dir.path().join("clip")).unwrap();
    let dcfg = DatasetConfig { val_fraction: 0.0, ..Default::default() };
    let ds = build_dataset(&dir.path().join("clip"), &dir.path().join("ds"), &dcfg).unwrap();
    let samples = ds.render_samples(Split::Train).unwrap();
    assert_eq!(samples.len(), 20);
    let cfg = PipelineConfig::desk();
    let (model, gp, dp) = RendererModel::new(cfg.renderer.clone(), CONDITION_CHANNELS, cfg.seed).unwrap();
    let mut tr = RendererTrainer::new(model, gp, dp, cfg.optimizer.lr, cfg.optimizer.betas);
    let bs = cfg.schedule.renderer.batch_size;
    let mean_psnr = |tr: &RendererTrainer| {
        samples.iter().map(|s| psnr(&tr.model.render_one(&tr.gen_params, &s.condition).unwrap(), &s.target).unwrap()).sum::<f64>()
            / samples.len() as f64
    };
    let mut last = f64::NEG_INFINITY;
    for step in 1..=max_steps {
        let k = ((step - 1) * bs) % samples.len();
        let batch: Vec<_> = (0..bs).map(|i| samples[(k + i) % samples.len()].clone()).collect();
        tr.train_step(&batch).unwrap();
        if step % 25 == 0 || step == max_steps {
            last = mean_psnr(&tr);
            if last > target {
                return (step, last);
            }
        }
    }
    (max_steps, last)
}

pub fn random_labels(seed: u64) -> SegmentationMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..N * N).map(|_| rng.random_range(0..4u8)).collect();
    SegmentationMap::new(N, N, labels).unwrap()
}

fn label_at(seg: &SegmentationMap, y: isize, x: isize) -> Option<u8> {
    if y < 0 || x < 0 || y >= seg.height as isize || x >= seg.width as isize {
        None
    } else {
        Some(seg.labels[y as usize * seg.width + x as usize])
    }
}

/// Body pixels with a 4-neighbour labelled background or hair, by direct lookup.
pub fn boundary_oracle(seg: &SegmentationMap, y: usize, x: usize) -> bool {
    let (y, x) = (y as isize, x as isize);
    label_at(seg, y, x) == Some(BODY)
        && [(0, 1), (0, -1), (1, 0), (-1, 0)]
            .iter()
            .filter_map(|(dy, dx)| label_at(seg, y + dy, x + dx))
            .any(|l| l == BACKGROUND || l == HAIR)
}

/// Recursive Douglas-Peucker.
pub fn dp_oracle(points: &[Point2], eps: f64, out: &mut Vec<Point2>) {
    let (a, b) = (points[0], points[points.len() - 1]);
    let mut best = (0, -1.0);
    for (i, p) in points.iter().enumerate().take(points.len() - 1).skip(1) {
        let d = segment_distance(*p, a, b);
        if d > best.1 {
            best = (i, d);
        }
    }
    if best.1 > eps {
        dp_oracle(&points[..=best.0], eps, out);
        out.pop();
        dp_oracle(&points[best.0..], eps, out);
    } else {
        out.push(a);
        out.push(b);
    }
}

pub fn random_walk(seed: u64, n: usize) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = [32.0, 32.0];
    (0..n)
        .map(|_| {
            p = [p[0] + rng.random_range(-2.0..2.0), p[1] + rng.random_range(-2.0..2.0)];
            p
        })
        .collect()
}

/// Face ellipse above a parabolic shoulder line, symmetric about `x = 32`.
pub fn shoulder_map(drop: f64, curvature: f64) -> SegmentationMap {
    let mut labels = vec![BACKGROUND; N * N];
    for y in 0..N {
        for x in 0..N {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let u = (px - 32.0) / 10.0;
            let v = (py - 24.0) / 14.0;
            if py >= drop + (px - 32.0).powi(2) * curvature {
                labels[y * N + x] = BODY;
            } else if u * u + v * v <= 1.0 {
                labels[y * N + x] = FACE;
            }
        }
    }
    SegmentationMap::new(N, N, labels).unwrap()
}

pub const SHOULDER_SHAPES: [(f64, f64); 4] = [(44.0, 0.02), (40.0, 0.01), (46.0, 0.03), (42.0, 0.015)];
