use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faco::FacoConfig;
use crate::moda::ModaConfig;
use crate::preprocess::DatasetConfig;
use crate::render::RendererConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Moda,
    Faco,
    Renderer,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Moda, Stage::Faco, Stage::Renderer];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Moda => "moda",
            Stage::Faco => "faco",
            Stage::Renderer => "renderer",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?} (expected moda, faco or renderer)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub betas: (f64, f64),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { lr: 1e-4, betas: (0.9, 0.99) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSchedule {
    pub epochs: u64,
    pub batch_size: usize,
    /// Stops early once this many updates have run.
    pub max_steps: Option<u64>,
    /// Validation interval in steps; validation also runs after the last step.
    pub val_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    pub moda: StageSchedule,
    pub faco: StageSchedule,
    pub renderer: StageSchedule,
}

impl Schedules {
    pub fn get(&self, stage: Stage) -> &StageSchedule {
        match stage {
            Stage::Moda => &self.moda,
            Stage::Faco => &self.faco,
            Stage::Renderer => &self.renderer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or paper)"))),
        }
    }
}

/// Every setting of a training or inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: Schedules,
    /// Inference window and stride in frames.
    pub window: usize,
    pub stride: usize,
    /// Length of the training clips cut from each contiguous run.
    pub moda_clip_len: usize,
    pub dataset: DatasetConfig,
    pub moda: ModaConfig,
    pub faco: FacoConfig,
    pub renderer: RendererConfig,
}

impl PipelineConfig {
    /// Full-size settings.
    pub fn paper() -> Self {
        let sched = |epochs, batch_size| StageSchedule { epochs, batch_size, max_steps: None, val_every: 1000 };
        PipelineConfig {
            seed: 0,
            optimizer: OptimizerConfig::default(),
            schedule: Schedules { moda: sched(200, 32), faco: sched(300, 32), renderer: sched(100, 4) },
            window: 300,
            stride: 150,
            moda_clip_len: 300,
            dataset: DatasetConfig::default(),
            moda: ModaConfig::default(),
            faco: FacoConfig::default(),
            renderer: RendererConfig::default(),
        }
    }

    /// CPU-sized settings: `d = 64`, 64x64 frames, at most 2000 updates per stage.
    pub fn desk() -> Self {
        let sched = |epochs, batch_size| StageSchedule { epochs, batch_size, max_steps: Some(2000), val_every: 100 };
        PipelineConfig {
            seed: 0,
            optimizer: OptimizerConfig { lr: 1e-3, betas: (0.9, 0.99) },
            schedule: Schedules { moda: sched(2000, 4), faco: sched(2000, 32), renderer: sched(2000, 2) },
            window: 300,
            stride: 150,
            moda_clip_len: 50,
            dataset: DatasetConfig::default(),
            moda: ModaConfig { d: 64, d_latent: 16, ..ModaConfig::default() },
            faco: FacoConfig { d: 64, disc_hidden: 64, ..FacoConfig::default() },
            renderer: RendererConfig {
                resolution: 64,
                channels: vec![8, 16, 32, 64, 64, 64],
                disc_channels: vec![16, 32],
                perceptual_channels: vec![8, 16, 16],
                ..RendererConfig::default()
            },
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    /// Parses TOML whose tables override `base` key by key.
    pub fn from_toml(text: &str, base: &PipelineConfig) -> Result<Self> {
        let overlay: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, overlay);
        let cfg: PipelineConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &PipelineConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.betas.0) || !(0.0..1.0).contains(&o.betas.1) {
            return Err(Error::Config(format!("betas must lie in [0, 1), got {:?}", o.betas)));
        }
        for st in Stage::ALL {
            let s = self.schedule.get(st);
            if s.epochs == 0 || s.batch_size == 0 || s.val_every == 0 || s.max_steps == Some(0) {
                return Err(Error::Config(format!("{st} schedule needs positive epochs, batch size and intervals: {s:?}")));
            }
        }
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!("need 0 < stride <= window, got {} / {}", self.stride, self.window)));
        }
        if self.moda_clip_len == 0 {
            return Err(Error::Config("moda_clip_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dataset.val_fraction) {
            return Err(Error::Config(format!("val_fraction must lie in [0, 1), got {}", self.dataset.val_fraction)));
        }
        self.moda.validate()?;
        self.faco.validate()?;
        self.renderer.validate()
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [PipelineConfig::paper(), PipelineConfig::desk()] {
            p.validate().unwrap();
            let text = p.to_toml().unwrap();
            assert_eq!(PipelineConfig::from_toml(&text, &PipelineConfig::paper()).unwrap(), p);
        }
        let paper = PipelineConfig::paper();
        assert_eq!(paper.optimizer.lr, 1e-4);
        assert_eq!(paper.optimizer.betas, (0.9, 0.99));
        let s = paper.schedule;
        assert_eq!((s.moda.epochs, s.faco.epochs, s.renderer.epochs), (200, 300, 100));
        assert_eq!((s.moda.batch_size, s.faco.batch_size, s.renderer.batch_size), (32, 32, 4));
    }

    #[test]
    fn partial_file_overrides_preset() {
        let cfg = PipelineConfig::from_toml("seed = 9\n[moda]\nd = 32\n[schedule.faco]\nbatch_size = 8\n", &PipelineConfig::desk()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.moda.d, 32);
        assert_eq!(cfg.moda.d_latent, 16);
        assert_eq!(cfg.schedule.faco.batch_size, 8);
        assert_eq!(cfg.schedule.faco.epochs, 2000);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["[optimizer]\nlr = 0.0", "[schedule.moda]\nepochs = 0", "stride = 400", "[moda]\nbogus = 1"] {
            assert!(matches!(PipelineConfig::from_toml(text, &PipelineConfig::desk()), Err(Error::Config(_))), "{text}");
        }
    }
}
