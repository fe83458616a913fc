use moda_core::preprocess::dataset::{build_dataset, Dataset, DatasetConfig, Split};
use moda_core::synth::{generate, SynthConfig};
use moda_core::Error;

fn clip(frames: usize) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let clip_dir = dir.path().join("clip");
    generate(&SynthConfig { frames, ..Default::default() }).unwrap().write_dir(&clip_dir).unwrap();
    (dir, clip_dir)
}

#[test]
fn hundred_frames_split_eighty_twenty() {
    let (dir, clip_dir) = clip(100);
    let out = dir.path().join("ds");
    let ds = build_dataset(&clip_dir, &out, &DatasetConfig::default()).unwrap();
    assert_eq!(ds.records(Split::Train).count(), 80);
    assert_eq!(ds.records(Split::Val).count(), 20);
    let again = Dataset::load(&out).unwrap();
    assert_eq!(again.manifest, ds.manifest);
    let frames: Vec<usize> = again.manifest.records.iter().map(|r| r.frame).collect();
    assert_eq!(frames, (0..100).collect::<Vec<_>>());

    let moda = again.moda_samples(Split::Train, 50);
    assert_eq!(moda.iter().map(|s| s.audio.nrows()).sum::<usize>(), 80);
    assert_eq!(again.faco_samples(Split::Val).len(), 20);
    let r = again.render_sample(&again.manifest.records[3]).unwrap();
    assert_eq!(r.condition.dim(), (16, 64, 64));
    assert!(r.mouth_mask.sum() > 0.0);
}

#[test]
fn split_is_deterministic_per_seed() {
    let (dir, clip_dir) = clip(30);
    let cfg = DatasetConfig { seed: 7, ..Default::default() };
    let a = build_dataset(&clip_dir, &dir.path().join("a"), &cfg).unwrap();
    let b = build_dataset(&clip_dir, &dir.path().join("b"), &cfg).unwrap();
    assert_eq!(a.manifest.val_range, b.manifest.val_range);
}

#[test]
fn missing_pose_file_is_count_mismatch() {
    let (dir, clip_dir) = clip(10);
    std::fs::remove_file(clip_dir.join("poses.bin")).unwrap();
    match build_dataset(&clip_dir, &dir.path().join("ds"), &DatasetConfig::default()) {
        Err(Error::CountMismatch(msg)) => assert!(msg.contains("poses=0"), "{msg}"),
        other => panic!("expected CountMismatch, got {other:?}"),
    }
}
