//! Versioned JSON artifacts for trained pools and the manifest tying them to
//! a training configuration.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tubo_core::models::{BurstClassifier, Forecaster};
use tubo_core::pipeline::TrainedPool;
use tubo_core::selection::CalibrationMap;

use crate::config::sha256_hex;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "tubo-model/1";
pub const CLASSIFIER_FORMAT: &str = "tubo-classifier/1";
pub const CALIBRATION_FORMAT: &str = "tubo-calibration/1";
pub const MANIFEST_FORMAT: &str = "tubo-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct Tagged<T> {
    format: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    model: Forecaster,
}

#[derive(Serialize, Deserialize)]
struct ClassifierBody {
    classifier: BurstClassifier,
}

#[derive(Serialize, Deserialize)]
struct CalibrationBody {
    window: usize,
    threshold: f64,
    clip: bool,
    calibration: CalibrationMap,
    #[serde(with = "tubo_core::serde_float::vec")]
    validation_mae: Vec<f64>,
    empty_pairs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the models directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub name: String,
    pub clip: bool,
    pub models: Vec<Artifact>,
    pub classifier: Artifact,
    pub calibration: Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub training_hash: String,
    pub seed: u64,
    pub pools: Vec<PoolEntry>,
}

impl Manifest {
    pub fn pool(&self, clip: bool) -> Option<&PoolEntry> {
        self.pools.iter().find(|p| p.clip == clip)
    }
}

fn write_tagged<T: Serialize>(dir: &Path, file: String, format: &str, body: T) -> Result<Artifact> {
    let bytes = serde_json::to_vec(&Tagged { format: format.to_string(), body }).expect("artifact serializes");
    crate::write_file(&dir.join(&file), &bytes)?;
    Ok(Artifact { file, sha256: sha256_hex(&bytes) })
}

fn read_tagged<T: DeserializeOwned>(dir: &Path, art: &Artifact, format: &str) -> Result<T> {
    let path = dir.join(&art.file);
    let bytes = std::fs::read(&path).map_err(Error::io(&path))?;
    let found = sha256_hex(&bytes);
    if found != art.sha256 {
        return Err(Error::format(&path, format!("checksum {found} does not match manifest {}", art.sha256)));
    }
    let tagged: Tagged<T> = serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e))?;
    if tagged.format != format {
        return Err(Error::format(&path, format!("format `{}`, expected `{format}`", tagged.format)));
    }
    Ok(tagged.body)
}

/// Write one pool under `dir/name/`.
pub fn save_pool(dir: &Path, name: &str, pool: &TrainedPool) -> Result<PoolEntry> {
    let mut models = Vec::with_capacity(pool.models.len());
    for m in &pool.models {
        models.push(write_tagged(dir, format!("{name}/{}.json", m.model_id), MODEL_FORMAT, ModelBody {
            model: m.clone(),
        })?);
    }
    let classifier = write_tagged(dir, format!("{name}/classifier.json"), CLASSIFIER_FORMAT, ClassifierBody {
        classifier: pool.classifier.clone(),
    })?;
    let calibration = write_tagged(dir, format!("{name}/calibration.json"), CALIBRATION_FORMAT, CalibrationBody {
        window: pool.window,
        threshold: pool.threshold,
        clip: pool.clip,
        calibration: pool.calibration.clone(),
        validation_mae: pool.validation_mae.clone(),
        empty_pairs: pool.empty_pairs.clone(),
    })?;
    Ok(PoolEntry { name: name.to_string(), clip: pool.clip, models, classifier, calibration })
}

pub fn load_pool(dir: &Path, entry: &PoolEntry) -> Result<TrainedPool> {
    let models = entry
        .models
        .iter()
        .map(|a| read_tagged::<ModelBody>(dir, a, MODEL_FORMAT).map(|b| b.model))
        .collect::<Result<Vec<_>>>()?;
    let classifier = read_tagged::<ClassifierBody>(dir, &entry.classifier, CLASSIFIER_FORMAT)?.classifier;
    let cal: CalibrationBody = read_tagged(dir, &entry.calibration, CALIBRATION_FORMAT)?;
    Ok(TrainedPool {
        models,
        classifier,
        calibration: cal.calibration,
        window: cal.window,
        threshold: cal.threshold,
        clip: cal.clip,
        validation_mae: cal.validation_mae,
        empty_pairs: cal.empty_pairs,
    })
}

/// Write the manifest and return the hash of its bytes.
pub fn save_manifest(dir: &Path, manifest: &Manifest) -> Result<String> {
    let bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    crate::write_file(&dir.join(MANIFEST_FILE), &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(Error::io(&path))?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e))?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::format(&path, format!("format `{}`, expected `{MANIFEST_FORMAT}`", m.format)));
    }
    Ok(m)
}
