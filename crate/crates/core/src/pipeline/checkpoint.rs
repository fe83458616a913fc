//! Checkpoint directories: `manifest.json`, `config.json` (the stage's model
//! configuration) and `params.bin` (every tensor as little-endian f64, in manifest
//! order).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use moda_autograd::nn::Params;
use moda_autograd::optim::Adam;
use moda_autograd::Tensor;
use ndarray::IxDyn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Stage;
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub group: String,
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub stage: Stage,
    /// SHA-256 of `config.json`.
    pub config_hash: String,
    pub step: u64,
    pub metrics: BTreeMap<String, f64>,
    /// Adam step counts, keyed like the parameter groups they belong to.
    pub optimizer_steps: BTreeMap<String, u64>,
    pub tensors: Vec<TensorEntry>,
}

/// Named parameter groups plus the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointArchive {
    pub manifest: CheckpointManifest,
    pub config: serde_json::Value,
    pub groups: BTreeMap<String, Params>,
}

pub fn config_hash(config: &serde_json::Value) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl CheckpointArchive {
    pub fn new<C: Serialize>(stage: Stage, config: &C, step: u64) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let manifest = CheckpointManifest {
            stage,
            config_hash: config_hash(&config)?,
            step,
            metrics: BTreeMap::new(),
            optimizer_steps: BTreeMap::new(),
            tensors: Vec::new(),
        };
        Ok(CheckpointArchive { manifest, config, groups: BTreeMap::new() })
    }

    pub fn with_group(mut self, name: &str, params: &Params) -> Self {
        self.groups.insert(name.to_string(), params.clone());
        self
    }

    /// Stores optimizer moments as `{name}.m` / `{name}.v` groups.
    pub fn with_optimizer(mut self, name: &str, opt: &Adam) -> Self {
        self.groups.insert(format!("{name}.m"), opt.first_moment.clone());
        self.groups.insert(format!("{name}.v"), opt.second_moment.clone());
        self.manifest.optimizer_steps.insert(name.to_string(), opt.step);
        self
    }

    pub fn with_metric(mut self, key: &str, value: f64) -> Self {
        self.manifest.metrics.insert(key.to_string(), value);
        self
    }

    pub fn group(&self, name: &str) -> Result<&Params> {
        self.groups.get(name).ok_or_else(|| Error::Data(format!("checkpoint has no parameter group {name:?}")))
    }

    /// Rebuilds an optimizer from stored moments, keeping `lr` and `betas` from the caller.
    pub fn restore_optimizer(&self, name: &str, params: &Params, lr: f64, betas: (f64, f64)) -> Result<Adam> {
        let mut opt = Adam::new(params, lr, betas);
        if let (Some(m), Some(v), Some(&step)) = (
            self.groups.get(&format!("{name}.m")),
            self.groups.get(&format!("{name}.v")),
            self.manifest.optimizer_steps.get(name),
        ) {
            opt.first_moment = m.clone();
            opt.second_moment = v.clone();
            opt.step = step;
        }
        Ok(opt)
    }

    pub fn config_as<C: serde::de::DeserializeOwned>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = self.manifest.clone();
        manifest.config_hash = config_hash(&self.config)?;
        manifest.tensors.clear();
        let mut bytes = Vec::new();
        let mut offset = 0;
        for (group, params) in &self.groups {
            for (name, t) in params.iter() {
                manifest.tensors.push(TensorEntry { group: group.clone(), name: name.clone(), shape: t.shape().to_vec(), offset });
                for v in t.iter() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                offset += t.len();
            }
        }
        atomic_write(&dir.join("params.bin"), &bytes)?;
        write_json(&dir.join("config.json"), &self.config)?;
        write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            return Err(Error::MissingCheckpoint(dir.to_path_buf()));
        }
        let manifest: CheckpointManifest = read_json(&manifest_path)?;
        let config: serde_json::Value = read_json(&dir.join("config.json"))?;
        let hash = config_hash(&config)?;
        if hash != manifest.config_hash {
            return Err(Error::Data(format!("{}: config hash {hash} does not match manifest {}", dir.display(), manifest.config_hash)));
        }
        let bin = dir.join("params.bin");
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Data(format!("{}: truncated tensor data", bin.display())));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut groups: BTreeMap<String, Params> = BTreeMap::new();
        for e in &manifest.tensors {
            let n: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + n)
                .ok_or_else(|| Error::Data(format!("{}: tensor {} runs past the data", bin.display(), e.name)))?;
            let t = Tensor::from_shape_vec(IxDyn(&e.shape), data.to_vec()).map_err(|err| Error::Data(err.to_string()))?;
            groups.entry(e.group.clone()).or_default().insert(e.name.clone(), t);
        }
        Ok(CheckpointArchive { manifest, config, groups })
    }
}

/// `{root}/{stage}` holding `best/`, `last/` and `log.csv`.
pub fn stage_dir(root: &Path, stage: Stage) -> PathBuf {
    root.join(stage.name())
}

/// The best checkpoint of `stage`, falling back to the last one.
pub fn find_checkpoint(root: &Path, stage: Stage) -> Result<PathBuf> {
    let dir = stage_dir(root, stage);
    for sub in ["best", "last"] {
        if dir.join(sub).join("manifest.json").exists() {
            return Ok(dir.join(sub));
        }
    }
    Err(Error::MissingCheckpoint(dir.join("best")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use moda_autograd::tensor;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Params::new();
        p.insert("a.weight", tensor(vec![0.1, -2.5, 1e-300, f64::MAX], &[2, 2]));
        p.insert("b", tensor(vec![3.0], &[1]));
        let mut opt = Adam::new(&p, 1e-3, (0.9, 0.99));
        opt.step(&mut p.clone(), &p);
        let ck = CheckpointArchive::new(Stage::Faco, &serde_json::json!({"d": 4}), 17)
            .unwrap()
            .with_group("gen", &p)
            .with_optimizer("gen", &opt)
            .with_metric("val", 0.25);
        ck.save(dir.path()).unwrap();
        let back = CheckpointArchive::load(dir.path()).unwrap();
        assert_eq!(back.groups, ck.groups);
        assert_eq!(back.manifest.step, 17);
        assert_eq!(back.manifest.metrics["val"], 0.25);
        let opt2 = back.restore_optimizer("gen", &p, 1e-3, (0.9, 0.99)).unwrap();
        assert_eq!(opt2, opt);
    }

    #[test]
    fn tampered_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        CheckpointArchive::new(Stage::Moda, &serde_json::json!({"d": 4}), 0).unwrap().save(dir.path()).unwrap();
        std::fs::write(dir.path().join("config.json"), "{\"d\": 5}").unwrap();
        assert!(matches!(CheckpointArchive::load(dir.path()), Err(Error::Data(_))));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(CheckpointArchive::load(empty.path()), Err(Error::MissingCheckpoint(_))));
    }
}
