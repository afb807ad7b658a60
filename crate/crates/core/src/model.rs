//! JSON model files.
//!
//! A model is one self-describing document with an explicit
//! `format_version`. Indices are stored sorted ascending and floats use the
//! shortest round-trip representation, so `save → load → save` is
//! byte-stable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterMask, RegionWeights, TrainedClassifier};

pub const FORMAT_VERSION: u32 = 1;

/// How a model was trained. Informational only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub rule: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub iterations: usize,
    #[serde(default)]
    pub best_iteration: Option<usize>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub region: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub black_indices: Vec<usize>,
    pub white_indices: Vec<usize>,
    pub v1: f64,
    pub v2: f64,
    pub theta: f64,
    pub training: TrainingMetadata,
}

impl ModelFile {
    pub fn from_classifier(c: &TrainedClassifier, training: TrainingMetadata) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            width: c.mask.width(),
            height: c.mask.height(),
            black_indices: c.mask.black().to_vec(),
            white_indices: c.mask.white().to_vec(),
            v1: c.weights.v1,
            v2: c.weights.v2,
            theta: c.theta,
            training,
        }
    }

    pub fn classifier(&self) -> Result<TrainedClassifier> {
        let mask = FilterMask::new(
            self.width,
            self.height,
            self.black_indices.clone(),
            self.white_indices.clone(),
        )?;
        TrainedClassifier::new(
            mask,
            RegionWeights {
                v1: self.v1,
                v2: self.v2,
            },
            self.theta,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: ModelFile = serde_json::from_str(text)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::argument(format!(
                "unsupported model format_version {} (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        // Canonical form; FilterMask validates the rest.
        m.black_indices.sort_unstable();
        m.white_indices.sort_unstable();
        m.classifier()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
