use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ItmError, Result};

/// One model in a manifest: a name, its ITMF features, and optionally the
/// measured downstream accuracy used as ranking ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub features: PathBuf,
    #[serde(default)]
    pub ground_truth: Option<f64>,
}

/// A JSON list of [`ManifestEntry`] values. Relative feature paths resolve
/// against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(ItmError::Validation(format!("duplicate model name {:?}", e.name)));
            }
            if let Some(t) = e.ground_truth {
                if !t.is_finite() {
                    return Err(ItmError::Validation(format!(
                        "ground truth of {:?} is not finite",
                        e.name
                    )));
                }
            }
        }
        Ok(Self {
            entries,
            base_dir: PathBuf::new(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ItmError::io(path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
        let mut manifest = Self::new(entries)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.entries)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| ItmError::io(path, e))
    }

    /// Absolute (or cwd-relative) location of an entry's features.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.features.is_absolute() {
            entry.features.clone()
        } else {
            self.base_dir.join(&entry.features)
        }
    }
}
