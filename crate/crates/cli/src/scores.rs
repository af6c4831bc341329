//! On-disk score files: rank reports, flat `{name: value}` maps and manifests.

use std::fs;
use std::path::Path;

use itm_core::embedstore::ManifestEntry;
use itm_core::metrics::RankResult;
use itm_core::{ItmError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One scored model in a rank report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub name: String,
    pub ground_truth: Option<f64>,
    pub score: f64,
    pub n_used: usize,
}

/// Output of `rank`. `correlation` is null when fewer than two models carry
/// ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub models: Vec<RankedModel>,
    /// Scored but left out of the correlation for lack of ground truth.
    pub excluded: Vec<String>,
    pub correlation: Option<RankResult>,
    pub config: Value,
}

/// Which value a rank report contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Truth,
    Predicted,
}

/// Named values in file order (flat maps come out sorted by name).
pub fn load_scores(path: &Path, role: Role) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|source| ItmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text)?;
    let bad = |what: &str| ItmError::Format(format!("{}: {what}", path.display()));
    match value {
        Value::Array(_) => {
            let entries: Vec<ManifestEntry> = serde_json::from_value(value)?;
            Ok(entries
                .into_iter()
                .filter_map(|e| e.ground_truth.map(|t| (e.name, t)))
                .collect())
        }
        Value::Object(map) if map.contains_key("models") => {
            let report: RankReport = serde_json::from_value(Value::Object(map))?;
            Ok(report
                .models
                .into_iter()
                .filter_map(|m| match role {
                    Role::Truth => m.ground_truth.map(|t| (m.name, t)),
                    Role::Predicted => Some((m.name, m.score)),
                })
                .collect())
        }
        Value::Object(map) => map
            .into_iter()
            .map(|(name, v)| match v.as_f64() {
                Some(x) if x.is_finite() => Ok((name, x)),
                _ => Err(bad(&format!("value of {name:?} is not a finite number"))),
            })
            .collect(),
        _ => Err(bad("expected a manifest, a rank report or a name-to-score map")),
    }
}

/// Values of `names` looked up in `scores`; `None` for names it lacks.
pub fn lookup(scores: &[(String, f64)], names: &[String]) -> Vec<Option<f64>> {
    names
        .iter()
        .map(|n| scores.iter().find(|(m, _)| m == n).map(|&(_, v)| v))
        .collect()
}
