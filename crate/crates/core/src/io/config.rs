//! Pipeline configuration documents.
//!
//! ```json
//! {
//!   "window": {"width": 512, "height": 400, "stride": 256},
//!   "alpha": 0.3,
//!   "theta_default": 0.5,
//!   "theta_medium": 0.7,
//!   "medium_area": [100, 1000],
//!   "lambda": 0.2,
//!   "classes": ["road", "sidewalk", "..."]
//! }
//! ```
//!
//! Every key is optional. Unknown keys are reported as warnings, wrong
//! types and out-of-range values are errors naming the key.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::grid::ClassCatalog;
use crate::losses::{LossConfig, Reduction};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowConfig {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 400,
            stride: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub fusion: FusionConfig,
    pub losses: LossConfig,
    /// `None` when the document gave no names; see [`PipelineConfig::catalog_for`].
    pub classes: Option<ClassCatalog>,
}


impl PipelineConfig {
    /// Class names for data with `classes` channels: the configured names,
    /// else the 19-class street vocabulary when the count matches, else
    /// `class_0 ..`.
    pub fn catalog_for(&self, classes: usize) -> Result<ClassCatalog> {
        let catalog = match &self.classes {
            Some(c) => c.clone(),
            None if classes == 19 => ClassCatalog::cityscapes(),
            None => ClassCatalog::numbered(classes)?,
        };
        catalog.check_channels(classes)?;
        Ok(catalog)
    }

    /// The document form, with every key present.
    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "window": self.window,
            "alpha": self.losses.refine.alpha,
            "theta_default": self.fusion.theta_default,
            "theta_medium": self.fusion.theta_medium,
            "medium_area": [self.fusion.medium_area_min, self.fusion.medium_area_max],
            "lambda": self.losses.lambda,
            "ce_reduction": self.losses.ce_reduction,
            "classes": self.classes.as_ref().map(|c| c.names().to_vec()),
        })
    }
}

/// A parsed config plus the unknown keys it contained.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub warnings: Vec<String>,
}

const TOP_KEYS: [&str; 8] = [
    "window",
    "alpha",
    "theta_default",
    "theta_medium",
    "medium_area",
    "lambda",
    "ce_reduction",
    "classes",
];
const WINDOW_KEYS: [&str; 3] = ["width", "height", "stride"];

fn number(obj: &Map<String, Value>, key: &str, name: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::config(name, format!("expected a number, found {v}"))),
    }
}

fn count(obj: &Map<String, Value>, key: &str, name: &str) -> Result<Option<usize>> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| Error::config(name, format!("expected a non-negative integer, found {v}"))),
    }
}

fn unknown_keys(obj: &Map<String, Value>, known: &[&str], prefix: &str) -> Vec<String> {
    obj.keys()
        .filter(|k| !known.contains(&k.as_str()))
        .map(|k| format!("unknown config key `{prefix}{k}`"))
        .collect()
}

pub fn parse_config(value: &Value) -> Result<LoadedConfig> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("<root>", "config must be a JSON object"))?;
    let mut cfg = PipelineConfig::default();
    let mut warnings = unknown_keys(obj, &TOP_KEYS, "");

    if let Some(window) = obj.get("window") {
        let w = window
            .as_object()
            .ok_or_else(|| Error::config("window", "expected an object"))?;
        warnings.extend(unknown_keys(w, &WINDOW_KEYS, "window."));
        if let Some(v) = count(w, "width", "window.width")? {
            cfg.window.width = v;
        }
        if let Some(v) = count(w, "height", "window.height")? {
            cfg.window.height = v;
        }
        if let Some(v) = count(w, "stride", "window.stride")? {
            cfg.window.stride = v;
        }
    }
    if let Some(v) = number(obj, "alpha", "alpha")? {
        cfg.losses.refine.alpha = v;
    }
    if let Some(v) = number(obj, "theta_default", "theta_default")? {
        cfg.fusion.theta_default = v;
    }
    if let Some(v) = number(obj, "theta_medium", "theta_medium")? {
        cfg.fusion.theta_medium = v;
    }
    if let Some(v) = obj.get("medium_area") {
        let pair = v
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some((a[0].as_u64()?, a[1].as_u64()?)))
            .ok_or_else(|| Error::config("medium_area", format!("expected [min, max] integers, found {v}")))?;
        cfg.fusion.medium_area_min = pair.0 as usize;
        cfg.fusion.medium_area_max = pair.1 as usize;
    }
    if let Some(v) = number(obj, "lambda", "lambda")? {
        cfg.losses.lambda = v;
    }
    if let Some(v) = obj.get("ce_reduction") {
        cfg.losses.ce_reduction = match v.as_str() {
            Some("sum") => Reduction::Sum,
            Some("mean") => Reduction::Mean,
            _ => return Err(Error::config("ce_reduction", format!("expected \"sum\" or \"mean\", found {v}"))),
        };
    }
    if let Some(v) = obj.get("classes").filter(|v| !v.is_null()) {
        let names = v
            .as_array()
            .and_then(|a| a.iter().map(|n| n.as_str().map(str::to_owned)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| Error::config("classes", "expected an array of strings"))?;
        cfg.classes = Some(ClassCatalog::new(names).map_err(|e| Error::config("classes", e.to_string()))?);
    }

    validate(&cfg)?;
    Ok(LoadedConfig {
        config: cfg,
        warnings,
    })
}

pub fn validate(cfg: &PipelineConfig) -> Result<()> {
    let w = &cfg.window;
    if w.width == 0 {
        return Err(Error::config("window.width", "must be positive"));
    }
    if w.height == 0 {
        return Err(Error::config("window.height", "must be positive"));
    }
    if w.stride == 0 || w.stride > w.width {
        return Err(Error::config(
            "window.stride",
            format!("must be in 1..={} (window.width)", w.width),
        ));
    }
    if !(0.0..1.0).contains(&cfg.losses.refine.alpha) {
        return Err(Error::config("alpha", "must lie in [0, 1)"));
    }
    if !cfg.losses.lambda.is_finite() || cfg.losses.lambda < 0.0 {
        return Err(Error::config("lambda", "must be finite and non-negative"));
    }
    cfg.fusion.validate()
}

pub fn read_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::format(None, format!("{}: {e}", path.display())))?;
    parse_config(&value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_document_gives_defaults() {
        let loaded = parse_config(&json!({})).unwrap();
        let c = &loaded.config;
        assert_eq!(c.window, WindowConfig { width: 512, height: 400, stride: 256 });
        assert_eq!(c.losses.refine.alpha, 0.3);
        assert_eq!(c.fusion.theta_default, 0.5);
        assert_eq!(c.fusion.theta_medium, 0.7);
        assert_eq!((c.fusion.medium_area_min, c.fusion.medium_area_max), (100, 1000));
        assert_eq!(c.losses.lambda, 0.2);
        assert_eq!(c.catalog_for(19).unwrap().len(), 19);
        assert_eq!(c.catalog_for(4).unwrap().name(3), Some("class_3"));
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn out_of_range_names_key() {
        let err = parse_config(&json!({"alpha": 1.5})).unwrap_err();
        assert!(matches!(&err, Error::InvalidConfig { key, .. } if key == "alpha"));
        let err = parse_config(&json!({"window": {"width": 512, "stride": 600}})).unwrap_err();
        assert!(matches!(&err, Error::InvalidConfig { key, .. } if key == "window.stride"));
    }

    #[test]
    fn type_errors_fail() {
        assert!(parse_config(&json!({"lambda": "big"})).is_err());
        assert!(parse_config(&json!({"medium_area": [1]})).is_err());
        assert!(parse_config(&json!({"classes": [1, 2]})).is_err());
        assert!(parse_config(&json!([])).is_err());
    }

    #[test]
    fn unknown_keys_warn() {
        let loaded = parse_config(&json!({"beta": 1, "window": {"depth": 2}})).unwrap();
        assert_eq!(loaded.warnings.len(), 2);
        assert!(loaded.warnings[0].contains("beta"));
        assert!(loaded.warnings[1].contains("window.depth"));
    }

    #[test]
    fn to_json_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.losses.lambda = 0.5;
        cfg.classes = Some(ClassCatalog::numbered(3).unwrap());
        let back = parse_config(&cfg.to_json()).unwrap();
        assert_eq!(back.config, cfg);
        assert!(back.warnings.is_empty());
    }
}
