use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moda_core::error::{Error, Result};
use moda_core::pipeline::{self, CheckpointArchive, EvalOptions, Models, PipelineConfig, Preset, Stage, Subject};
use moda_core::preprocess::build_dataset;
use moda_core::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "moda", version, about = "Audio-driven talking-portrait pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Audio feature cache directory.
    #[arg(long, global = true, env = "MODA_CACHE")]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training dataset from a clip directory.
    Preprocess {
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage, or all three in order.
    Train {
        #[arg(long, default_value = "all")]
        stage: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
        /// Cap on updates for every trained stage.
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Generate motion and frames for an audio file.
    Infer {
        #[arg(long)]
        audio: PathBuf,
        /// Dataset directory of the depicted subject.
        #[arg(long)]
        subject: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Write motion only.
        #[arg(long)]
        no_render: bool,
    },
    /// Score an inference output against a dataset.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        tcm: bool,
        #[arg(long)]
        flow_ref: Option<PathBuf>,
        #[arg(long)]
        flow_gen: Option<PathBuf>,
        /// Additional inference outputs for the diversity score.
        #[arg(long = "sample")]
        samples: Vec<PathBuf>,
        /// JSON object of externally computed scores.
        #[arg(long)]
        external: Option<PathBuf>,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a checkpoint manifest.
    InspectCheckpoint { dir: PathBuf },
    /// Write a synthetic clip directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let base = PipelineConfig::preset(c.preset.parse::<Preset>()?);
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p, &base)?,
        None => base,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.dataset.seed = s;
    }
    if let Some(dir) = &c.cache {
        cfg.dataset.cache_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::NonFiniteLoss { .. } => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Preprocess { clip, out } => {
            let ds = build_dataset(&clip, &out, &cfg.dataset)?;
            let m = &ds.manifest;
            println!("{} frames ({}x{}), validation frames {}..{}", m.frames, m.width, m.height, m.val_range.0, m.val_range.1);
        }
        Command::Train { stage, data, out, resume, max_steps } => {
            let stages: Vec<Stage> = if stage == "all" { Stage::ALL.to_vec() } else { vec![stage.parse()?] };
            if let Some(m) = max_steps {
                for st in Stage::ALL {
                    let s = match st {
                        Stage::Moda => &mut cfg.schedule.moda,
                        Stage::Faco => &mut cfg.schedule.faco,
                        Stage::Renderer => &mut cfg.schedule.renderer,
                    };
                    s.max_steps = Some(m);
                }
                cfg.validate()?;
            }
            for st in stages {
                let s = pipeline::train(st, &data, &cfg, &out, resume)?;
                println!("{}: {} steps, best val {:.6}, last val {:.6}", s.stage, s.steps, s.best_val, s.last_val);
            }
        }
        Command::Infer { audio, subject, checkpoints, out, window, stride, no_render } => {
            if let Some(w) = window {
                cfg.window = w;
            }
            if let Some(s) = stride {
                cfg.stride = s;
            }
            cfg.validate()?;
            let subject = Subject::from_dataset(&subject)?;
            let models = Models::load(&checkpoints)?;
            let m = pipeline::infer(&audio, &subject, &models, &cfg, cfg.seed, &out, !no_render)?;
            println!("{} frames written to {}", m.frames, out.display());
        }
        Command::Evaluate { pred, gt, tcm, flow_ref, flow_gen, samples, external, out } => {
            let opts = EvalOptions { tcm, flow_ref, flow_gen, samples, external };
            let report = pipeline::evaluate(&pred, &gt, &opts)?;
            if let Some(out) = out {
                pipeline::write_report(&report, &out)?;
            }
            print!("{}", report.to_table());
        }
        Command::InspectCheckpoint { dir } => {
            let ck = CheckpointArchive::load(&dir)?;
            let m = &ck.manifest;
            let numel: usize = ck.groups.values().map(|g| g.numel()).sum();
            println!("stage:       {}", m.stage);
            println!("step:        {}", m.step);
            println!("config hash: {}", m.config_hash);
            for (k, v) in &m.metrics {
                println!("metric {k}: {v}");
            }
            for (name, g) in &ck.groups {
                println!("group {name}: {} tensors, {} values", g.len(), g.numel());
            }
            println!("total values: {numel}");
            println!("config: {}", serde_json::to_string(&ck.config)?);
        }
        Command::Synth { out, frames, resolution } => {
            let clip = generate(&SynthConfig { frames, resolution, seed: cfg.seed, ..SynthConfig::default() })?;
            clip.write_dir(&out)?;
            println!("{frames} frames written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_root_cause() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Config("x".into()).in_stage("moda")), 2);
        assert_eq!(exit_code(&Error::NonFiniteLoss { step: 3, detail: String::new() }.in_stage("faco")), 4);
        assert_eq!(exit_code(&Error::DatasetEmpty("d".into())), 3);
        assert_eq!(exit_code(&Error::MissingCheckpoint("c".into())), 3);
    }
}
