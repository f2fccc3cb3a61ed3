//! Command implementations behind the `pepsim` binary.
//!
//! Every command validates its inputs completely before touching the output
//! location, and every file is written to a temporary sibling and renamed
//! into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    gain_table_upgrade, gain_table_vip, histogram, limit_from_subtraction, project_limit, subtract,
    upgrade_steps, GainReport, LimitFactors, LimitResult, SignalFactors, Spectrum, Subtraction,
};
use crate::config::{locate_field, ExperimentConfig};
use crate::error::{Error, Result};
use crate::geometry::{geometric_acceptance, AcceptanceResult};
use crate::physics::{ElectronBudget, TransitionKind};
use crate::simulate::{
    read_events_csv, signal_factors, simulate_run, write_events_csv, EventRecord, Origin,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EVENTS_CURRENT: &str = "events_current.csv";
pub const EVENTS_NOCURRENT: &str = "events_nocurrent.csv";
pub const SPECTRUM_CURRENT: &str = "spectrum_current.csv";
pub const SPECTRUM_NOCURRENT: &str = "spectrum_nocurrent.csv";
pub const REPORT: &str = "report.json";
pub const TIMING: &str = "timing.json";

/// A config that failed to load, with the best line number we could find.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub source: Error,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.source),
            None => write!(f, "{}: {}", self.path.display(), self.source),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Loads and validates a config file, or resolves `preset:<name>`.
pub fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, ConfigError> {
    if let Some(name) = path.to_str().and_then(|s| s.strip_prefix("preset:")) {
        return ExperimentConfig::preset(name).map_err(|source| ConfigError {
            path: path.into(),
            line: None,
            source,
        });
    }
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.into(),
        line: None,
        source: Error::io(path, e),
    })?;
    ExperimentConfig::from_json(&text).map_err(|source| {
        let line = match &source {
            Error::Json(e) if e.line() > 0 => Some(e.line()),
            Error::Validation { path, .. } => locate_field(&text, path),
            _ => None,
        };
        ConfigError {
            path: path.into(),
            line,
            source,
        }
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Spectra, subtraction and limit derived from a pair of event streams.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub spectrum_current: Spectrum,
    pub spectrum_nocurrent: Spectrum,
    pub subtraction: Subtraction,
    pub limit: LimitResult,
}

/// Limit factors for a config, honouring the analysis overrides.
pub fn limit_factors(config: &ExperimentConfig) -> Result<LimitFactors> {
    let a = &config.analysis;
    let needs_mc = a.acceptance_override.is_none()
        || a.detection_efficiency_override.is_none()
        || a.capture_factor_override.is_none();
    let computed = if needs_mc {
        Some(signal_factors(config)?)
    } else {
        None
    };
    let pick = |ov: Option<f64>, f: fn(&(AcceptanceResult, f64, f64)) -> f64| {
        ov.unwrap_or_else(|| {
            f(computed
                .as_ref()
                .expect("computed when any override is missing"))
        })
    };
    Ok(LimitFactors {
        capture_factor: pick(a.capture_factor_override, |c| c.2),
        acceptance: pick(a.acceptance_override, |c| c.0.acceptance_with_attenuation),
        detection_efficiency: pick(a.detection_efficiency_override, |c| c.1),
    })
}

/// Histogram, subtraction and β²/2 limit for two event streams.
pub fn analyze_streams(
    config: &ExperimentConfig,
    events_current: &[EventRecord],
    events_nocurrent: &[EventRecord],
    factors: LimitFactors,
) -> Result<Analysis> {
    let edges = config.analysis.binning.edges()?;
    let area = config.layout()?.total_cell_area_cm2();
    let run = &config.run;
    let spectrum_current =
        histogram(events_current, &edges, false)?.with_exposure(run.duration_current_days, area);
    let spectrum_nocurrent = histogram(events_nocurrent, &edges, false)?
        .with_exposure(run.duration_nocurrent_days, area);
    let subtraction = subtract(&spectrum_current, &spectrum_nocurrent, &config.analysis.roi)?;
    let budget = ElectronBudget::from_days(run.current_a, run.duration_current_days)?;
    let limit = limit_from_subtraction(
        &subtraction,
        config.analysis.confidence_sigma,
        &budget,
        factors,
    )?;
    Ok(Analysis {
        spectrum_current,
        spectrum_nocurrent,
        subtraction,
        limit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFiles {
    pub events_current: String,
    pub events_nocurrent: String,
    pub spectrum_current: String,
    pub spectrum_nocurrent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub current_total: usize,
    pub current_signal: usize,
    pub current_vetoed: usize,
    pub nocurrent_total: usize,
    pub nocurrent_vetoed: usize,
}

/// Everything needed to replay a run: config, seed and tool version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub files: OutputFiles,
    pub acceptance: AcceptanceResult,
    pub expected_signal: f64,
    pub event_counts: EventCounts,
    /// Absent when either period has zero exposure.
    pub subtraction: Option<Subtraction>,
    pub limit: Option<LimitResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub workers: usize,
}

/// Runs a simulation and analysis and writes all artefacts into `out_dir`.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let started = Instant::now();
    let run = simulate_run(config)?;
    let factors = limit_factors_from_run(config, &run);
    let edges = config.analysis.binning.edges()?;
    let area = config.layout()?.total_cell_area_cm2();
    let plan = &config.run;
    let analysis = if plan.duration_current_days > 0.0 && plan.duration_nocurrent_days > 0.0 {
        Some(analyze_streams(
            config,
            &run.events_current,
            &run.events_nocurrent,
            factors,
        )?)
    } else {
        None
    };
    let (spectrum_current, spectrum_nocurrent) = match &analysis {
        Some(a) => (a.spectrum_current.clone(), a.spectrum_nocurrent.clone()),
        None => (
            histogram(&run.events_current, &edges, false)?
                .with_exposure(plan.duration_current_days, area),
            histogram(&run.events_nocurrent, &edges, false)?
                .with_exposure(plan.duration_nocurrent_days, area),
        ),
    };

    let mut ev_on = Vec::new();
    write_events_csv(&run.events_current, &mut ev_on)?;
    let mut ev_off = Vec::new();
    write_events_csv(&run.events_nocurrent, &mut ev_off)?;
    let mut sp_on = Vec::new();
    spectrum_current.write_csv(&mut sp_on)?;
    let mut sp_off = Vec::new();
    spectrum_nocurrent.write_csv(&mut sp_off)?;

    let count_vetoed = |ev: &[EventRecord]| ev.iter().filter(|e| e.vetoed).count();
    let report = RunReport {
        tool_version: TOOL_VERSION.into(),
        config: config.clone(),
        files: OutputFiles {
            events_current: EVENTS_CURRENT.into(),
            events_nocurrent: EVENTS_NOCURRENT.into(),
            spectrum_current: SPECTRUM_CURRENT.into(),
            spectrum_nocurrent: SPECTRUM_NOCURRENT.into(),
        },
        acceptance: run.acceptance.clone(),
        expected_signal: run.expected_signal,
        event_counts: EventCounts {
            current_total: run.events_current.len(),
            current_signal: run
                .events_current
                .iter()
                .filter(|e| e.origin == Origin::Signal)
                .count(),
            current_vetoed: count_vetoed(&run.events_current),
            nocurrent_total: run.events_nocurrent.len(),
            nocurrent_vetoed: count_vetoed(&run.events_nocurrent),
        },
        subtraction: analysis.as_ref().map(|a| a.subtraction),
        limit: analysis.map(|a| a.limit),
    };
    let report_bytes = json_bytes(&report)?;
    let timing = Timing {
        wall_seconds: started.elapsed().as_secs_f64(),
        workers: rayon::current_num_threads(),
    };

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, bytes) in [
        (EVENTS_CURRENT, &ev_on),
        (EVENTS_NOCURRENT, &ev_off),
        (SPECTRUM_CURRENT, &sp_on),
        (SPECTRUM_NOCURRENT, &sp_off),
        (REPORT, &report_bytes),
    ] {
        write_atomic(&out_dir.join(name), bytes)?;
    }
    // wall-clock data lives apart from the report so the report stays reproducible
    write_atomic(&out_dir.join(TIMING), &json_bytes(&timing)?)?;
    Ok(report)
}

fn limit_factors_from_run(
    config: &ExperimentConfig,
    run: &crate::simulate::RunOutput,
) -> LimitFactors {
    let a = &config.analysis;
    LimitFactors {
        capture_factor: a.capture_factor_override.unwrap_or(run.capture_factor),
        acceptance: a
            .acceptance_override
            .unwrap_or(run.acceptance.acceptance_with_attenuation),
        detection_efficiency: a
            .detection_efficiency_override
            .unwrap_or(run.detection_efficiency),
    }
}

fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events_csv(f).map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Re-analyses two event files with the exposures and factors of `config`.
pub fn cmd_analyze(
    config: &ExperimentConfig,
    events_current: &Path,
    events_nocurrent: &Path,
) -> Result<LimitResult> {
    let run = &config.run;
    if !(run.duration_current_days > 0.0 && run.duration_nocurrent_days > 0.0) {
        return Err(Error::validation(
            "run",
            "both exposures (duration_current_days, duration_nocurrent_days) must be > 0",
        ));
    }
    let on = read_events(events_current)?;
    let off = read_events(events_nocurrent)?;
    let factors = limit_factors(config)?;
    Ok(analyze_streams(config, &on, &off, factors)?.limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainVariant {
    /// CCD predecessor to the SDD setup.
    Vip,
    /// SDD, shielding and radon upgrades.
    Upgrade,
}

impl std::str::FromStr for GainVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vip" | "vip-vip2" => Ok(GainVariant::Vip),
            "upgrade" => Ok(GainVariant::Upgrade),
            other => Err(Error::Unknown {
                kind: "gain variant",
                name: other.to_string(),
            }),
        }
    }
}

pub fn cmd_gains(variant: GainVariant) -> Result<GainReport> {
    match variant {
        GainVariant::Vip => gain_table_vip(&SignalFactors::VIP, &SignalFactors::VIP2),
        GainVariant::Upgrade => gain_table_upgrade(&upgrade_steps()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub current_limit: f64,
    pub sensitivity_gain: f64,
    pub time_ratio: f64,
    pub projected_limit: f64,
}

pub fn cmd_project(
    current_limit: f64,
    sensitivity_gain: f64,
    time_ratio: f64,
) -> Result<Projection> {
    Ok(Projection {
        current_limit,
        sensitivity_gain,
        time_ratio,
        projected_limit: project_limit(current_limit, sensitivity_gain, time_ratio)?,
    })
}

/// Solid angle and attenuated acceptance at the forbidden-transition energy.
pub fn cmd_solid_angle(
    config: &ExperimentConfig,
    n_samples: u64,
    seed: u64,
) -> Result<AcceptanceResult> {
    let layout = config.layout()?;
    geometric_acceptance(
        &layout,
        config.transitions.energy(TransitionKind::NonPaulian),
        n_samples,
        seed,
    )
}

pub fn to_json_document<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    json_bytes(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_variants() {
        assert_eq!("vip".parse::<GainVariant>().unwrap(), GainVariant::Vip);
        assert_eq!(
            "upgrade".parse::<GainVariant>().unwrap(),
            GainVariant::Upgrade
        );
        assert!("vip3".parse::<GainVariant>().is_err());
        let a = cmd_gains(GainVariant::Vip).unwrap();
        let b = cmd_gains(GainVariant::Vip).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_doc() {
        let p = cmd_project(1.4e-29, 10.0, 27.4).unwrap();
        assert!(p.projected_limit > 1e-31 && p.projected_limit < 5e-31);
        assert!(cmd_project(1.4e-29, 0.0, 1.0).is_err());
    }

    #[test]
    fn preset_config_path() {
        let c = load_config(Path::new("preset:vip2-upgrade")).unwrap();
        assert_eq!(c, ExperimentConfig::vip2_upgrade());
        assert!(load_config(Path::new("preset:nope")).is_err());
    }

    #[test]
    fn config_errors_have_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        fs::write(&p, "{\n  \"preset\": \"vip2-2016\",\n  \"veto\": {\n    \"efficiency_photon\": 2.0\n  }\n}\n").unwrap();
        let err = load_config(&p).unwrap_err();
        assert_eq!(err.line, Some(4));
        assert!(err.to_string().contains("bad.json:4:"), "{err}");

        fs::write(
            &p,
            "{\n  \"preset\": \"vip2-2016\",\n  \"run\": { \"seed\": }\n}\n",
        )
        .unwrap();
        let err = load_config(&p).unwrap_err();
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
