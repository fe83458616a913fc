use std::path::Path;
use std::process::{Command, Output};

fn moda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moda")).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = "moda_clip_len = 20\n[renderer]\nchannels = [4, 4, 4, 4, 4, 4]\n[schedule.renderer]\nbatch_size = 2\n";

#[test]
fn synth_to_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    ok(moda(&["synth", "--out", "clip", "--frames", "40"], d));
    let pre = ok(moda(&["preprocess", "--clip", "clip", "--out", "ds"], d));
    assert!(pre.starts_with("40 frames"), "{pre}");
    let tr = ok(moda(&["--config", "small.toml", "train", "--data", "ds", "--out", "ck", "--max-steps", "2"], d));
    assert_eq!(tr.lines().count(), 3, "{tr}");
    let inspect = ok(moda(&["inspect-checkpoint", "ck/moda/best"], d));
    assert!(inspect.contains("stage:       moda"), "{inspect}");
    ok(moda(&["--config", "small.toml", "infer", "--audio", "clip/audio.wav", "--subject", "ds", "--checkpoints", "ck", "--out", "a"], d));
    ok(moda(&["--config", "small.toml", "--seed", "9", "infer", "--audio", "clip/audio.wav", "--subject", "ds", "--checkpoints", "ck", "--out", "b", "--no-render"], d));
    let table = ok(moda(&["evaluate", "--pred", "a", "--gt", "ds", "--tcm", "--sample", "b", "--out", "report"], d));
    assert!(table.lines().any(|l| l.starts_with("Diversity") && !l.ends_with("n/a")), "{table}");
    assert!(d.join("report").join("report.json").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[optimizer]\nlr = -1.0\n").unwrap();
    let bad = moda(&["--config", "bad.toml", "synth", "--out", "clip"], d);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(moda(&["--preset", "nope", "synth", "--out", "clip"], d).status.code(), Some(2));
    assert_eq!(moda(&["preprocess", "--clip", "missing", "--out", "ds"], d).status.code(), Some(3));
    assert_eq!(moda(&["inspect-checkpoint", "missing"], d).status.code(), Some(3));
}
