//! Pipeline configuration.
//!
//! On disk the configuration is a JSON object with flat dotted keys, e.g.
//! `{"alpha": 0.5, "low_level.weights": [0.4, 0.1, 0.1, 0.2, 0.2]}`. Keys that
//! are not present keep their defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::frame_io::DEFAULT_PATTERN;
use crate::low_level::LowLevelParams;
use crate::mid_level::MidLevelParams;
use crate::segmentation::SlicParams;
use crate::spatiotemporal::{AtwParams, McaParams};

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Exponent of the low-level map in the spatial combination.
    pub alpha: f64,
    /// Glob applied to file names in each `frames/` directory.
    pub frame_pattern: String,
    /// Superpixel targets, finest first; empty means derived from frame size.
    pub scale_targets: Vec<usize>,
    /// 1-based scale levels to run; empty means all.
    pub levels: Vec<usize>,
    pub atw_enabled: bool,
    pub mca_enabled: bool,
    /// Precomputed objectness maps, `<dir>/<stem>.png` or `<dir>/<video>/<stem>.png`.
    pub objectness_dir: Option<PathBuf>,
    pub flow: FlowParams,
    pub slic: SlicParams,
    pub low_level: LowLevelParams,
    pub mid_level: MidLevelParams,
    pub atw: AtwParams,
    pub mca: McaParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.5,
            frame_pattern: DEFAULT_PATTERN.to_string(),
            scale_targets: Vec::new(),
            levels: Vec::new(),
            atw_enabled: true,
            mca_enabled: true,
            objectness_dir: None,
            flow: FlowParams::default(),
            slic: SlicParams::default(),
            low_level: LowLevelParams::default(),
            mid_level: MidLevelParams::default(),
            atw: AtwParams::default(),
            mca: McaParams::default(),
        }
    }
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Map<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf.clone());
        }
    }
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), value.clone());
            } else {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("flattened keys never collide with leaves");
            }
        }
    }
    Value::Object(root)
}

impl PipelineConfig {
    /// Every parameter as `dotted.key → value`, sorted by key.
    pub fn to_flat(&self) -> Map<String, Value> {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = Map::new();
        flatten_into("", &value, &mut out);
        out
    }

    pub fn from_flat(flat: &Map<String, Value>) -> Result<Self> {
        Ok(serde_json::from_value(unflatten(flat))?)
    }

    /// Returns a copy with `key` replaced; the key must already exist.
    pub fn with_value(&self, key: &str, value: Value) -> Result<Self> {
        let mut flat = self.to_flat();
        match flat.get_mut(key) {
            Some(slot) => *slot = value,
            None => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Self::from_flat(&flat)
    }

    /// Applies `key=value`; the value is parsed as JSON, falling back to a string.
    pub fn with_assignment(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.with_value(key.trim(), value)
    }

    /// Overlays a flat JSON object on top of `self`.
    pub fn merged_with_json(&self, text: &str) -> Result<Self> {
        let overlay: Value = serde_json::from_str(text)?;
        let Value::Object(overlay) = overlay else {
            return Err(Error::Config("configuration must be a JSON object".into()));
        };
        let mut flat = self.to_flat();
        for (key, value) in overlay {
            match flat.get_mut(&key) {
                Some(slot) => *slot = value,
                None => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
        }
        Self::from_flat(&flat)
    }

    /// Defaults overlaid with the file at `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::default().merged_with_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&Value::Object(self.to_flat())).expect("config serializes")
    }

    /// SHA-256 of the canonical flat JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&Value::Object(self.to_flat())).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, weights) in [
            ("low_level.weights", &self.low_level.weights[..]),
            ("mid_level.weights", &self.mid_level.weights[..]),
        ] {
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE || weights.iter().any(|&w| w < 0.0) {
                return fail(format!("{name} must be non-negative and sum to 1 (sum {sum})"));
            }
        }
        let sigmas = [
            ("low_level.sigma_spdst", self.low_level.sigma_spdst),
            ("low_level.gabor.sigma_ratio", self.low_level.gabor.sigma_ratio),
            ("low_level.gabor.wavelength", self.low_level.gabor.wavelength),
            ("low_level.gabor.gamma", self.low_level.gabor.gamma),
            ("mid_level.sigma_cen", self.mid_level.sigma_cen),
            ("mid_level.sigma_bgr", self.mid_level.sigma_bgr),
            ("mid_level.sigma_clr", self.mid_level.sigma_clr),
            ("atw.sigma_tpdst", self.atw.sigma_tpdst),
        ];
        for (name, v) in sigmas {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.low_level.gabor.orientations != 8 {
            return fail("low_level.gabor.orientations must be 8".into());
        }
        if self.atw.lambda < 0.0 {
            return fail("atw.lambda must be non-negative".into());
        }
        if self.mca.iterations == 0 {
            return fail("mca.iterations must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.mid_level.objectness.min_side) || self.mid_level.objectness.windows == 0 {
            return fail("objectness needs windows ≥ 1 and min_side in [0, 1)".into());
        }
        if self.scale_targets.contains(&0) {
            return fail("scale_targets entries must be at least 1".into());
        }
        let available = if self.scale_targets.is_empty() {
            3
        } else {
            self.scale_targets.len()
        };
        if let Some(&bad) = self.levels.iter().find(|&&l| l == 0 || l > available) {
            return fail(format!("level {bad} outside 1..={available}"));
        }
        self.flow.validate()
    }

    /// 0-based indices of the scales to run, in ascending order.
    pub fn selected_levels(&self, available: usize) -> Vec<usize> {
        if self.levels.is_empty() {
            return (0..available).collect();
        }
        let mut levels: Vec<usize> = self.levels.iter().map(|l| l - 1).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }
}

/// Parses `--levels` values: `all`, a single level, or a comma list.
pub fn parse_levels(text: &str) -> Result<Vec<usize>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&l| l >= 1)
                .ok_or_else(|| Error::Config(format!("bad level {p:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_flat(&c.to_flat()).unwrap(), c);
        let flat = c.to_flat();
        assert_eq!(flat["alpha"], json!(0.5));
        assert_eq!(flat["atw.max_window"], json!(10));
        assert_eq!(flat["mca.coupling"], json!(0.15));
        assert_eq!(flat["low_level.gabor.wavelength"], json!(8.0));
    }

    #[test]
    fn overlay_and_assignment() {
        let c = PipelineConfig::default()
            .merged_with_json(r#"{"atw.lambda": 3, "mid_level.bndcon": "literal"}"#)
            .unwrap();
        assert_eq!(c.atw.lambda, 3.0);
        assert_eq!(c.mid_level.bndcon, crate::mid_level::BndConMode::Literal);
        let c = c.with_assignment("alpha=1").unwrap();
        assert_eq!(c.alpha, 1.0);
        assert!(c.with_assignment("nope=1").is_err());
        assert!(PipelineConfig::default().merged_with_json(r#"{"atw": {}}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_weights_and_sigmas() {
        let c = PipelineConfig::default();
        assert!(c.with_value("low_level.weights", json!([0.5, 0.5, 0.5, 0.0, 0.0])).unwrap().validate().is_err());
        assert!(c.with_value("mid_level.sigma_cen", json!(0.0)).unwrap().validate().is_err());
        assert!(c.with_value("levels", json!([4])).unwrap().validate().is_err());
    }

    #[test]
    fn hash_tracks_changes() {
        let a = PipelineConfig::default();
        assert_eq!(a.hash(), PipelineConfig::default().hash());
        assert_ne!(a.hash(), a.with_assignment("alpha=0.4").unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn level_parsing() {
        assert_eq!(parse_levels("all").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_levels("2").unwrap(), vec![2]);
        assert_eq!(parse_levels("1,3").unwrap(), vec![1, 3]);
        assert!(parse_levels("0").is_err());
        let c = PipelineConfig {
            levels: vec![3, 1],
            ..PipelineConfig::default()
        };
        assert_eq!(c.selected_levels(3), vec![0, 2]);
    }
}
