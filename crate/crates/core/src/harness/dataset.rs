use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_gray, GrayImage};
use crate::raster::{Connectivity, GroundTruth};

/// One `image_id,prediction_path,truth_path` manifest record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub prediction_path: PathBuf,
    pub truth_path: PathBuf,
}

/// Reads a manifest CSV. Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    for record in reader.deserialize() {
        let mut entry: ManifestEntry = record?;
        entry.prediction_path = base.join(&entry.prediction_path);
        entry.truth_path = base.join(&entry.truth_path);
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "manifest {} lists no images",
            path.display()
        )));
    }
    Ok(entries)
}

/// A raw prediction raster and the image's true bud.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    /// Probabilities as `sample / maxval`, or raw vote counts.
    pub prediction: GrayImage,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageError {
    pub image_id: String,
    pub message: String,
}

impl ImageError {
    pub fn new(image_id: &str, err: &Error) -> Self {
        Self {
            image_id: image_id.to_string(),
            message: err.to_string(),
        }
    }
}

fn load_one(entry: &ManifestEntry, connectivity: Connectivity) -> Result<Sample> {
    let prediction = read_gray(&entry.prediction_path)?;
    let truth = GroundTruth::from_mask(read_gray(&entry.truth_path)?.to_mask(), connectivity)?;
    Ok(Sample {
        image_id: entry.image_id.clone(),
        prediction,
        truth,
    })
}

/// Loads every entry; unreadable files and multi-bud truths become
/// per-image errors.
pub fn load_samples(
    entries: &[ManifestEntry],
    connectivity: Connectivity,
) -> (Vec<Sample>, Vec<ImageError>) {
    let loaded: Vec<Result<Sample>> = entries
        .par_iter()
        .map(|e| load_one(e, connectivity))
        .collect();
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for (entry, result) in entries.iter().zip(loaded) {
        match result {
            Ok(s) => samples.push(s),
            Err(e) => errors.push(ImageError::new(&entry.image_id, &e)),
        }
    }
    (samples, errors)
}
