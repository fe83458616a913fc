use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_label_png, write_json, write_label_png};

pub const BACKGROUND: u8 = 0;
pub const FACE: u8 = 1;
pub const HAIR: u8 = 2;
pub const BODY: u8 = 3;

/// Class names by label id, as written to `palette.json`.
pub fn palette() -> BTreeMap<&'static str, u8> {
    BTreeMap::from([("background", BACKGROUND), ("face", FACE), ("hair", HAIR), ("upper_body", BODY)])
}

/// Per-pixel class labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl SegmentationMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(height * width, labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > BODY) {
            return Err(Error::Data(format!("unknown segmentation label {bad}")));
        }
        Ok(SegmentationMap { height, width, labels })
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, w, labels) = read_label_png(path)?;
        Self::new(h, w, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_label_png(path, self.height, self.width, &self.labels)
    }

    pub fn write_palette(path: &Path) -> Result<()> {
        write_json(path, &palette())
    }
}
