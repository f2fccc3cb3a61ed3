//! Experiment configuration: one JSON document with a `schema` field.
//!
//! A document may name a `preset`; its own fields are then merged over the
//! preset field by field (objects recursively, everything else replaced).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{uniform_edges, RegionOfInterest};
use crate::error::{Error, Result};
use crate::geometry::{GeometryLayout, Preset, MIN_SAMPLES};
use crate::physics::TransitionEnergies;
use crate::simulate::{BackgroundModel, DetectorResponse, RunPlan, SignalModel, VetoModel};

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometrySource {
    Preset(String),
    Layout(GeometryLayout),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binning {
    pub low_kev: f64,
    pub high_kev: f64,
    pub n_bins: usize,
}

impl Binning {
    pub fn edges(&self) -> Result<Vec<f64>> {
        uniform_edges(self.low_kev, self.high_kev, self.n_bins)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub roi: RegionOfInterest,
    pub binning: Binning,
    pub confidence_sigma: f64,
    /// Use this acceptance instead of the Monte Carlo estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_efficiency_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_factor_override: Option<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            roi: RegionOfInterest::default(),
            binning: Binning {
                low_kev: 1.0,
                high_kev: 20.0,
                n_bins: 1900,
            },
            confidence_sigma: 3.0,
            acceptance_override: None,
            detection_efficiency_override: None,
            capture_factor_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub geometry: GeometrySource,
    pub geometry_samples: u64,
    pub transitions: TransitionEnergies,
    pub run: RunPlan,
    pub signal: SignalModel,
    pub detector: DetectorResponse,
    pub background: BackgroundModel,
    pub veto: VetoModel,
    pub analysis: AnalysisSettings,
}

/// Named whole-experiment presets.
pub const CONFIG_PRESETS: [&str; 2] = ["vip2-2016", "vip2-upgrade"];

impl ExperimentConfig {
    pub fn vip2_2016() -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            geometry: GeometrySource::Preset(Preset::Vip2_2016.name().into()),
            geometry_samples: 1_000_000,
            transitions: TransitionEnergies::default(),
            run: RunPlan::vip2_2016(),
            signal: SignalModel::default(),
            detector: DetectorResponse::vip2_2016(),
            background: BackgroundModel::vip2_2016(),
            veto: VetoModel::underground(),
            analysis: AnalysisSettings::default(),
        }
    }

    pub fn vip2_upgrade() -> Self {
        Self {
            geometry: GeometrySource::Preset(Preset::Vip2Upgrade.name().into()),
            detector: DetectorResponse::vip2_upgrade(),
            background: BackgroundModel::vip2_upgrade(),
            ..Self::vip2_2016()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vip2-2016" => Ok(Self::vip2_2016()),
            "vip2-upgrade" => Ok(Self::vip2_upgrade()),
            other => Err(Error::Unknown {
                kind: "config preset",
                name: other.to_string(),
            }),
        }
    }

    pub fn layout(&self) -> Result<GeometryLayout> {
        match &self.geometry {
            GeometrySource::Preset(name) => GeometryLayout::preset(name),
            GeometrySource::Layout(layout) => Ok(layout.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::validation(
                "schema",
                format!(
                    "unsupported schema {}, expected {CONFIG_SCHEMA}",
                    self.schema
                ),
            ));
        }
        self.layout()?.validate().map_err(|e| match e {
            Error::Validation { path, message } => {
                Error::validation(format!("geometry.layout.{path}"), message)
            }
            Error::Unknown { .. } => Error::validation("geometry.preset", e.to_string()),
            other => other,
        })?;
        if self.geometry_samples < MIN_SAMPLES {
            return Err(Error::validation(
                "geometry_samples",
                format!("must be >= {MIN_SAMPLES}"),
            ));
        }
        let t = &self.transitions;
        for (name, v) in [
            ("transitions.normal_kalpha_kev", t.normal_kalpha_kev),
            ("transitions.non_paulian_kev", t.non_paulian_kev),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(name, "must be > 0"));
            }
        }
        let r = &self.run;
        for (name, v) in [
            ("run.current_a", r.current_a),
            ("run.duration_current_days", r.duration_current_days),
            ("run.duration_nocurrent_days", r.duration_nocurrent_days),
            ("run.injected_beta2_over_2", r.injected_beta2_over_2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, "must be finite and >= 0"));
            }
        }
        if !(self.signal.capture_probability > 0.0 && self.signal.capture_probability <= 1.0) {
            return Err(Error::validation(
                "signal.capture_probability",
                "must be in (0, 1]",
            ));
        }
        if !(self.signal.electron_mean_free_path_cm > 0.0) {
            return Err(Error::validation(
                "signal.electron_mean_free_path_cm",
                "must be > 0",
            ));
        }
        let d = &self.detector;
        for (name, v) in [
            ("detector.energy_fwhm_ev", d.energy_fwhm_ev),
            ("detector.time_fwhm_ns", d.time_fwhm_ns),
            ("detector.threshold_kev", d.threshold_kev),
        ] {
            if !(v >= 0.0) {
                return Err(Error::validation(name, "must be >= 0"));
            }
        }
        if !(d.depletion_depth_um > 0.0) {
            return Err(Error::validation(
                "detector.depletion_depth_um",
                "must be > 0",
            ));
        }
        self.background.validate()?;
        self.veto.validate()?;
        let a = &self.analysis;
        a.roi.validate()?;
        a.binning
            .edges()
            .map_err(|e| Error::validation("analysis.binning", e.to_string()))?;
        if !(a.confidence_sigma >= 0.0) {
            return Err(Error::validation(
                "analysis.confidence_sigma",
                "must be >= 0",
            ));
        }
        for (name, v) in [
            ("analysis.acceptance_override", a.acceptance_override),
            (
                "analysis.detection_efficiency_override",
                a.detection_efficiency_override,
            ),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::validation(name, "must be in (0, 1]"));
                }
            }
        }
        if let Some(v) = a.capture_factor_override {
            if !(v > 0.0) {
                return Err(Error::validation(
                    "analysis.capture_factor_override",
                    "must be > 0",
                ));
            }
        }
        Ok(())
    }

    /// Parses a config document, applying its `preset` (if any), and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let merged = match doc.get("preset").and_then(Value::as_str) {
            Some(name) => {
                let mut base = serde_json::to_value(Self::preset(name)?)?;
                let mut overrides = doc.clone();
                if let (Value::Object(map), Value::Object(b)) = (&mut overrides, &mut base) {
                    map.remove("preset");
                    // enum-valued: replace, never merge
                    if let Some(g) = map.remove("geometry") {
                        b.insert("geometry".into(), g);
                    }
                }
                merge(&mut base, overrides);
                base
            }
            None => doc,
        };
        let config: Self = serde_json::from_value(merged)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
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

/// Best-effort line number of the field at the end of a dotted `path`.
pub fn locate_field(text: &str, path: &str) -> Option<usize> {
    let leaf = path.rsplit('.').next()?;
    let key = leaf.split('[').next()?;
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}
