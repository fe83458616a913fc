use std::path::Path;

use moda_core::metrics::diversity;
use moda_core::pipeline::{
    evaluate, find_checkpoint, infer, train, CheckpointArchive, EvalOptions, Models, PipelineConfig, Stage, Subject, FACES_FILE,
    FRAMES_DIR, MOTION_FILE,
};
use moda_core::preprocess::{build_dataset, DatasetConfig};
use moda_core::synth::{generate, SynthConfig};
use moda_core::{io, Error};

fn tiny_config(steps: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::desk();
    for s in [&mut cfg.schedule.moda, &mut cfg.schedule.faco, &mut cfg.schedule.renderer] {
        s.max_steps = Some(steps);
        s.val_every = 2;
    }
    cfg.schedule.renderer.batch_size = 2;
    cfg.moda_clip_len = 20;
    cfg.renderer.channels = vec![4, 4, 4, 4, 4, 4];
    cfg
}

fn dataset(root: &Path, frames: usize, seed: u64) -> std::path::PathBuf {
    let clip = generate(&SynthConfig { frames, seed, ..SynthConfig::default() }).unwrap();
    clip.write_dir(&root.join("clip")).unwrap();
    let ds = root.join("ds");
    build_dataset(&root.join("clip"), &ds, &DatasetConfig::default()).unwrap();
    ds
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn train_resume_infer_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 60, 1);
    let ck = tmp.path().join("ck");
    let cfg = tiny_config(4);
    for stage in Stage::ALL {
        let s = train(stage, &ds, &cfg, &ck, false).unwrap();
        assert_eq!(s.steps, 4);
        assert!(s.best_val <= s.last_val, "{stage}: best {} last {}", s.best_val, s.last_val);
        assert!(s.best.join("manifest.json").exists() && s.last.join("manifest.json").exists());
        assert_eq!(find_checkpoint(&ck, stage).unwrap(), s.best);
        let log = std::fs::read_to_string(ck.join(stage.name()).join("log.csv")).unwrap();
        assert_eq!(log.lines().count(), 5);
    }

    let resumed = train(Stage::Moda, &ds, &tiny_config(7), &ck, true).unwrap();
    assert_eq!(resumed.steps, 7);
    let last = CheckpointArchive::load(&resumed.last).unwrap();
    assert_eq!(last.manifest.step, 7);
    let log = std::fs::read_to_string(ck.join("moda").join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 8);

    let subject = Subject::from_dataset(&ds).unwrap();
    let models = Models::load(&ck).unwrap();
    let audio = tmp.path().join("clip").join("audio.wav");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let m = infer(&audio, &subject, &models, &cfg, 5, &a, true).unwrap();
    assert_eq!(m.frames, 60);
    infer(&audio, &subject, &models, &cfg, 5, &b, true).unwrap();
    infer(&audio, &subject, &models, &cfg, 6, &c, false).unwrap();
    assert_eq!(std::fs::read(a.join(MOTION_FILE)).unwrap(), std::fs::read(b.join(MOTION_FILE)).unwrap());
    assert_eq!(std::fs::read(a.join(FACES_FILE)).unwrap(), std::fs::read(b.join(FACES_FILE)).unwrap());
    assert_eq!(read_dir_bytes(&a.join(FRAMES_DIR)), read_dir_bytes(&b.join(FRAMES_DIR)));
    assert_eq!(read_dir_bytes(&a.join(FRAMES_DIR)).len(), 60);
    assert!(!c.join(FRAMES_DIR).exists());

    let opts = EvalOptions { tcm: true, samples: vec![c.clone()], ..Default::default() };
    let report = evaluate(&a, &ds, &opts).unwrap();
    assert_eq!(report.frames, 60);
    for v in [report.lmd, report.lmd_v, report.mouth_iou, report.tcm, report.psnr] {
        assert!(v.unwrap().is_finite());
    }
    let faces: Vec<_> = [&a, &c].iter().map(|d| io::read_landmarks(&d.join(FACES_FILE)).unwrap()).collect();
    assert_eq!(report.diversity, Some(diversity(&faces).unwrap()));
    assert!(report.diversity.unwrap() > 0.0);

    let missing = evaluate(&c, &ds, &EvalOptions { tcm: true, ..Default::default() });
    assert!(matches!(missing, Err(Error::MissingStream(_))), "{missing:?}");
}

#[test]
fn seeded_training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 40, 2);
    let cfg = tiny_config(3);
    let a = train(Stage::Faco, &ds, &cfg, &tmp.path().join("a"), false).unwrap();
    let b = train(Stage::Faco, &ds, &cfg, &tmp.path().join("b"), false).unwrap();
    assert_eq!(a.last_val, b.last_val);
    assert_eq!(std::fs::read(a.last.join("params.bin")).unwrap(), std::fs::read(b.last.join("params.bin")).unwrap());
}

#[test]
fn missing_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(Models::load(tmp.path()), Err(Error::MissingCheckpoint(_))));
    assert!(train(Stage::Moda, &tmp.path().join("nope"), &tiny_config(1), tmp.path(), false).is_err());
    let ds = dataset(tmp.path(), 30, 3);
    let resumed = train(Stage::Moda, &ds, &tiny_config(1), &tmp.path().join("ck"), true);
    assert!(matches!(resumed, Err(Error::MissingCheckpoint(_))), "{resumed:?}");
}
