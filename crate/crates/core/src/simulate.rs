//! Event generation for one configured run: signal injection, parametric
//! background, detector smearing and scintillator veto.
//!
//! Each period is cut into fixed one-day slices. Slice `k` draws from counter
//! stream `k` of a labelled family, so the merged, time-ordered stream does not
//! depend on how many workers process the slices.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::{geometric_acceptance, AcceptanceResult, GeometryLayout};
use crate::physics::{fwhm_to_sigma, ElectronBudget, Material, TransitionKind, SECONDS_PER_DAY};
use crate::rng::{StreamFamily, StreamRng};

/// Length of one generation slice in days.
pub const SLICE_DAYS: f64 = 1.0;

/// Energy range of the background continuum, keV.
pub const CONTINUUM_RANGE_KEV: (f64, f64) = (1.0, 20.0);

/// Veto efficiency measured for 500 MeV electrons at a beam test.
pub const BEAM_TEST_ELECTRON_EFFICIENCY: f64 = 0.97;

/// Scattering mean free path of conduction electrons in copper, cm.
pub const ELECTRON_MEAN_FREE_PATH_CU_CM: f64 = 3.9e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    pub current_a: f64,
    pub duration_current_days: f64,
    pub duration_nocurrent_days: f64,
    pub injected_beta2_over_2: f64,
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
}

impl RunPlan {
    pub fn vip2_2016() -> Self {
        Self {
            current_a: 100.0,
            duration_current_days: 40.0,
            duration_nocurrent_days: 70.0,
            injected_beta2_over_2: 0.0,
            seed: 1,
        }
    }

    pub fn budget(&self) -> Result<ElectronBudget> {
        ElectronBudget::from_days(self.current_a, self.duration_current_days)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorResponse {
    pub energy_fwhm_ev: f64,
    pub time_fwhm_ns: f64,
    pub depletion_depth_um: f64,
    /// Events below this energy are not recorded.
    pub threshold_kev: f64,
}

impl DetectorResponse {
    pub fn vip2_2016() -> Self {
        Self {
            energy_fwhm_ev: 150.0,
            time_fwhm_ns: 400.0,
            depletion_depth_um: 450.0,
            threshold_kev: 0.5,
        }
    }

    pub fn vip2_upgrade() -> Self {
        Self {
            energy_fwhm_ev: 200.0,
            ..Self::vip2_2016()
        }
    }

    pub fn energy_sigma_kev(&self) -> Result<f64> {
        Ok(fwhm_to_sigma(self.energy_fwhm_ev)? / 1000.0)
    }

    pub fn time_sigma_ns(&self) -> Result<f64> {
        fwhm_to_sigma(self.time_fwhm_ns)
    }
}

/// A Gaussian background line. Rates are per detector cm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundLine {
    pub name: String,
    pub energy_kev: f64,
    pub rate_per_day_cm2: f64,
    pub natural_width_ev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundModel {
    /// Flat continuum over [`CONTINUUM_RANGE_KEV`], counts/(keV·day·cm²).
    pub continuum_rate: f64,
    pub lines: Vec<BackgroundLine>,
    /// Fraction of background events from radiation that also crosses the
    /// scintillators.
    pub veto_correlated_fraction: f64,
    pub shielding_suppression: f64,
    pub rrs_suppression: f64,
}

impl BackgroundModel {
    /// Calibrated continuum rate for the 2016 configuration. Chosen so that the
    /// median 3σ limit of the `vip2-2016` run plan is about 1.4×10⁻²⁹.
    pub const VIP2_2016_CONTINUUM_RATE: f64 = 25.0;

    pub fn vip2_2016() -> Self {
        Self {
            continuum_rate: Self::VIP2_2016_CONTINUUM_RATE,
            lines: vec![
                BackgroundLine {
                    name: "Cu Ka".into(),
                    energy_kev: 8.05,
                    rate_per_day_cm2: 2.0,
                    natural_width_ev: 2.3,
                },
                BackgroundLine {
                    name: "Cu Kb".into(),
                    energy_kev: 8.90,
                    rate_per_day_cm2: 0.3,
                    natural_width_ev: 3.5,
                },
            ],
            veto_correlated_fraction: 1.0,
            shielding_suppression: 1.0,
            rrs_suppression: 1.0,
        }
    }

    /// Upgrade background: passive shielding (×20) and radon reduction (×3).
    pub fn vip2_upgrade() -> Self {
        Self {
            shielding_suppression: 20.0,
            rrs_suppression: 3.0,
            ..Self::vip2_2016()
        }
    }

    pub fn suppression(&self) -> f64 {
        self.shielding_suppression * self.rrs_suppression
    }

    /// Expected counts per cm² per day over the whole spectrum.
    pub fn total_rate_per_day_cm2(&self) -> f64 {
        let (lo, hi) = CONTINUUM_RANGE_KEV;
        let lines: f64 = self.lines.iter().map(|l| l.rate_per_day_cm2).sum();
        (self.continuum_rate * (hi - lo) + lines) / self.suppression()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.continuum_rate >= 0.0) || !self.continuum_rate.is_finite() {
            return Err(Error::validation(
                "background.continuum_rate",
                "must be >= 0",
            ));
        }
        for (i, l) in self.lines.iter().enumerate() {
            if !(l.rate_per_day_cm2 >= 0.0) {
                return Err(Error::validation(
                    format!("background.lines[{i}].rate_per_day_cm2"),
                    "must be >= 0",
                ));
            }
            if !(l.energy_kev > 0.0) {
                return Err(Error::validation(
                    format!("background.lines[{i}].energy_kev"),
                    "must be > 0",
                ));
            }
            if !(l.natural_width_ev >= 0.0) {
                return Err(Error::validation(
                    format!("background.lines[{i}].natural_width_ev"),
                    "must be >= 0",
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.veto_correlated_fraction) {
            return Err(Error::validation(
                "background.veto_correlated_fraction",
                "must be in [0, 1]",
            ));
        }
        if !(self.shielding_suppression >= 1.0) {
            return Err(Error::validation(
                "background.shielding_suppression",
                "must be >= 1",
            ));
        }
        if !(self.rrs_suppression >= 1.0) {
            return Err(Error::validation(
                "background.rrs_suppression",
                "must be >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VetoEnvironment {
    /// External gamma background; `efficiency_photon` applies.
    Underground,
    /// Cosmic-ray background; `efficiency_cosmic` applies.
    Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VetoModel {
    pub enabled: bool,
    pub environment: VetoEnvironment,
    pub window_halfwidth_ns: f64,
    pub efficiency_photon: f64,
    pub efficiency_cosmic: f64,
    pub accidental_rate_hz: f64,
}

impl VetoModel {
    pub fn underground() -> Self {
        Self {
            enabled: true,
            environment: VetoEnvironment::Underground,
            window_halfwidth_ns: 1000.0,
            efficiency_photon: 0.05,
            efficiency_cosmic: 0.95,
            accidental_rate_hz: 0.0,
        }
    }

    pub fn surface() -> Self {
        Self {
            environment: VetoEnvironment::Surface,
            ..Self::underground()
        }
    }

    /// Probability that a correlated event leaves a scintillator hit.
    pub fn efficiency(&self) -> f64 {
        match self.environment {
            VetoEnvironment::Underground => self.efficiency_photon,
            VetoEnvironment::Surface => self.efficiency_cosmic,
        }
    }

    /// Probability of at least one accidental hit inside the window.
    pub fn accidental_probability(&self) -> f64 {
        let mean = self.accidental_rate_hz * 2.0 * self.window_halfwidth_ns * 1e-9;
        -(-mean).exp_m1()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("veto.efficiency_photon", self.efficiency_photon),
            ("veto.efficiency_cosmic", self.efficiency_cosmic),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(name, "must be in [0, 1]"));
            }
        }
        if !(self.window_halfwidth_ns >= 0.0) {
            return Err(Error::validation(
                "veto.window_halfwidth_ns",
                "must be >= 0",
            ));
        }
        if !(self.accidental_rate_hz >= 0.0) {
            return Err(Error::validation("veto.accidental_rate_hz", "must be >= 0"));
        }
        Ok(())
    }
}

/// How many forbidden-transition photons the injected electrons produce.
///
/// The effective capture factor per injected electron is
/// `capture_probability × interactions`, with `interactions` the number of
/// scatterings an electron undergoes while crossing the strip
/// (strip length / mean free path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalModel {
    pub capture_probability: f64,
    pub electron_mean_free_path_cm: f64,
}

impl Default for SignalModel {
    fn default() -> Self {
        Self {
            capture_probability: 0.1,
            electron_mean_free_path_cm: ELECTRON_MEAN_FREE_PATH_CU_CM,
        }
    }
}

impl SignalModel {
    pub fn interactions(&self, layout: &GeometryLayout) -> f64 {
        let n = layout.strips.len() as f64;
        let mean_len_cm = layout.strips.iter().map(|s| s.length_mm).sum::<f64>() / n / 10.0;
        mean_len_cm / self.electron_mean_free_path_cm
    }

    pub fn capture_factor(&self, layout: &GeometryLayout) -> f64 {
        self.capture_probability * self.interactions(layout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Signal,
    Background,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Signal => "signal",
            Origin::Background => "background",
        })
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" => Ok(Origin::Signal),
            "background" => Ok(Origin::Background),
            other => Err(Error::Unknown {
                kind: "event origin",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time_s: f64,
    pub energy_kev: f64,
    pub cell_id: u32,
    pub origin: Origin,
    pub vetoed: bool,
    /// Shares its source with radiation crossing the scintillators.
    pub correlated: bool,
    /// Offset of the nearest recorded scintillator hit, if any.
    pub coincidence_ns: Option<f64>,
}

impl EventRecord {
    fn new(time_s: f64, energy_kev: f64, cell_id: u32, origin: Origin, correlated: bool) -> Self {
        Self {
            time_s,
            energy_kev,
            cell_id,
            origin,
            vetoed: false,
            correlated,
            coincidence_ns: None,
        }
    }
}

/// Expected number of detected forbidden-transition photons.
pub fn expected_signal_count(
    beta2_over_2: f64,
    budget: &ElectronBudget,
    capture_factor: f64,
    acceptance: f64,
    det_eff: f64,
) -> f64 {
    beta2_over_2 * budget.n_new * capture_factor * acceptance * det_eff
}

/// Probability that a photon is absorbed in `depth_um` of silicon.
pub fn detection_efficiency(energy_kev: f64, depth_um: f64) -> Result<f64> {
    if !(depth_um >= 0.0) {
        return Err(Error::domain(format!("depth must be >= 0, got {depth_um}")));
    }
    let mu = Material::silicon().linear_attenuation(energy_kev)?;
    Ok(-(-mu * depth_um * 1e-4).exp_m1())
}

/// Picks an index with probability proportional to `weights`.
fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-positive or non-finite means
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}

/// Gaussian smearing that never returns a non-positive energy.
fn smear<R: Rng + ?Sized>(energy_kev: f64, sigma_kev: f64, rng: &mut R) -> f64 {
    if sigma_kev <= 0.0 {
        return energy_kev;
    }
    let n = Normal::new(energy_kev, sigma_kev).expect("sigma is positive and finite");
    loop {
        let e = n.sample(rng);
        if e > 0.0 {
            return e;
        }
    }
}

/// Runs `per_slice` for every slice of a period in parallel and returns the
/// merged events ordered by time.
fn generate_sliced<F>(period_days: f64, family: &StreamFamily, per_slice: F) -> Vec<EventRecord>
where
    F: Fn(f64, f64, &mut StreamRng) -> Vec<EventRecord> + Sync,
{
    if !(period_days > 0.0) {
        return Vec::new();
    }
    let n_slices = (period_days / SLICE_DAYS).ceil() as u64;
    let parts: Vec<Vec<EventRecord>> = (0..n_slices)
        .into_par_iter()
        .map(|k| {
            let start = k as f64 * SLICE_DAYS;
            let end = ((k + 1) as f64 * SLICE_DAYS).min(period_days);
            let mut rng = family.stream(k);
            let mut ev = per_slice(start * SECONDS_PER_DAY, end * SECONDS_PER_DAY, &mut rng);
            ev.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
            ev
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// What the signal generator needs to know about a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSource {
    /// Expected detected count over the whole current-on period.
    pub expected_count: f64,
    pub energy_kev: f64,
    /// `(cell id, relative weight)`; events are distributed over cells with
    /// these weights.
    pub cells: Vec<(u32, f64)>,
}

impl SignalSource {
    pub fn from_acceptance(
        expected_count: f64,
        energy_kev: f64,
        acceptance: &AcceptanceResult,
    ) -> Self {
        let mut cells: Vec<(u32, f64)> = acceptance
            .per_cell
            .iter()
            .map(|c| (c.id, c.acceptance_with_attenuation))
            .collect();
        if cells.iter().all(|c| c.1 <= 0.0) {
            cells.iter_mut().for_each(|c| c.1 = 1.0);
        }
        Self {
            expected_count,
            energy_kev,
            cells,
        }
    }
}

/// Forbidden-transition photons over a current-on period of `period_days`.
pub fn generate_signal_events(
    source: &SignalSource,
    period_days: f64,
    response: &DetectorResponse,
    family: &StreamFamily,
) -> Result<Vec<EventRecord>> {
    if !(source.expected_count > 0.0) || source.cells.is_empty() {
        return Ok(Vec::new());
    }
    let sigma = response.energy_sigma_kev()?;
    let weights: Vec<f64> = source.cells.iter().map(|c| c.1).collect();
    let total_w: f64 = weights.iter().sum();
    let rate_per_s = source.expected_count / (period_days * SECONDS_PER_DAY);
    Ok(generate_sliced(period_days, family, |t0, t1, rng| {
        let n = poisson(rate_per_s * (t1 - t0), rng);
        (0..n)
            .filter_map(|_| {
                let time = t0 + rng.random::<f64>() * (t1 - t0);
                let energy = smear(source.energy_kev, sigma, rng);
                let cell = source.cells[pick_weighted(&weights, total_w, rng)].0;
                (energy >= response.threshold_kev)
                    .then(|| EventRecord::new(time, energy, cell, Origin::Signal, false))
            })
            .collect()
    }))
}

/// Background over `exposure_days` for the given `(cell id, area cm²)` list.
///
/// Rates scale with detector area; each event lands on a cell with
/// probability proportional to its area.
pub fn generate_background_events(
    model: &BackgroundModel,
    response: &DetectorResponse,
    exposure_days: f64,
    cells: &[(u32, f64)],
    family: &StreamFamily,
) -> Result<Vec<EventRecord>> {
    model.validate()?;
    let area: f64 = cells.iter().map(|c| c.1).sum();
    if !(area > 0.0) || !(exposure_days > 0.0) {
        return Ok(Vec::new());
    }
    let det_sigma = response.energy_sigma_kev()?;
    let (lo, hi) = CONTINUUM_RANGE_KEV;
    let suppression = model.suppression();
    // component 0 is the continuum, the rest are lines; rates per second
    let mut rates = vec![model.continuum_rate * (hi - lo) * area / suppression / SECONDS_PER_DAY];
    rates.extend(
        model
            .lines
            .iter()
            .map(|l| l.rate_per_day_cm2 * area / suppression / SECONDS_PER_DAY),
    );
    let line_sigmas: Vec<f64> = model
        .lines
        .iter()
        .map(|l| {
            // natural width folded in quadrature with the detector resolution
            let nat = fwhm_to_sigma(l.natural_width_ev).unwrap_or(0.0) / 1000.0;
            (nat * nat + det_sigma * det_sigma).sqrt()
        })
        .collect();
    let total_rate: f64 = rates.iter().sum();
    if !(total_rate > 0.0) {
        return Ok(Vec::new());
    }
    let areas: Vec<f64> = cells.iter().map(|c| c.1).collect();
    Ok(generate_sliced(exposure_days, family, |t0, t1, rng| {
        let n = poisson(total_rate * (t1 - t0), rng);
        (0..n)
            .filter_map(|_| {
                let time = t0 + rng.random::<f64>() * (t1 - t0);
                let component = pick_weighted(&rates, total_rate, rng);
                let energy = if component == 0 {
                    let e = lo + rng.random::<f64>() * (hi - lo);
                    smear(e, det_sigma, rng)
                } else {
                    let line = &model.lines[component - 1];
                    smear(line.energy_kev, line_sigmas[component - 1], rng)
                };
                let cell = cells[pick_weighted(&areas, area, rng)].0;
                let correlated = rng.random::<f64>() < model.veto_correlated_fraction;
                (energy >= response.threshold_kev)
                    .then(|| EventRecord::new(time, energy, cell, Origin::Background, correlated))
            })
            .collect()
    }))
}

/// Sets `vetoed` and `coincidence_ns` on every event.
///
/// Correlated events leave a scintillator hit with the environment's veto
/// efficiency, offset by the SDD timing jitter. Any event can additionally
/// see an accidental hit, uniform in the window. An event is vetoed when a
/// hit falls within ±`window_halfwidth_ns`.
pub fn apply_veto(
    events: &mut [EventRecord],
    veto: &VetoModel,
    time_sigma_ns: f64,
    family: &StreamFamily,
) -> Result<()> {
    veto.validate()?;
    let mut rng = family.stream(0);
    let jitter = (time_sigma_ns > 0.0)
        .then(|| Normal::new(0.0, time_sigma_ns))
        .transpose()
        .map_err(|e| Error::domain(format!("time sigma: {e}")))?;
    let eff = veto.efficiency();
    let p_acc = veto.accidental_probability();
    let w = veto.window_halfwidth_ns;
    for ev in events.iter_mut() {
        ev.vetoed = false;
        ev.coincidence_ns = None;
        if !veto.enabled {
            continue;
        }
        // draw both decisions for every event so streams stay aligned
        let u_corr: f64 = rng.random();
        let dt_corr = jitter.as_ref().map_or(0.0, |j| j.sample(&mut rng));
        let u_acc: f64 = rng.random();
        let dt_acc = (2.0 * rng.random::<f64>() - 1.0) * w;
        let mut hits = Vec::with_capacity(2);
        if ev.correlated && u_corr < eff {
            hits.push(dt_corr);
        }
        if u_acc < p_acc {
            hits.push(dt_acc);
        }
        ev.coincidence_ns = hits.into_iter().min_by(|a, b| a.abs().total_cmp(&b.abs()));
        ev.vetoed = ev.coincidence_ns.is_some_and(|dt| dt.abs() <= w);
    }
    Ok(())
}

/// Everything produced by [`simulate_run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events_current: Vec<EventRecord>,
    pub events_nocurrent: Vec<EventRecord>,
    pub acceptance: AcceptanceResult,
    pub detection_efficiency: f64,
    pub capture_factor: f64,
    pub budget: ElectronBudget,
    pub expected_signal: f64,
}

fn merge_by_time(mut a: Vec<EventRecord>, b: Vec<EventRecord>) -> Vec<EventRecord> {
    a.extend(b);
    // stable: equal times keep signal-before-background order
    a.sort_by(|x, y| x.time_s.total_cmp(&y.time_s));
    a
}

/// Acceptance, detection efficiency and capture factor for a config.
pub fn signal_factors(config: &ExperimentConfig) -> Result<(AcceptanceResult, f64, f64)> {
    let layout = config.layout()?;
    let energy = config.transitions.energy(TransitionKind::NonPaulian);
    let acceptance =
        geometric_acceptance(&layout, energy, config.geometry_samples, config.run.seed)?;
    let det_eff = detection_efficiency(energy, config.detector.depletion_depth_um)?;
    Ok((acceptance, det_eff, config.signal.capture_factor(&layout)))
}

/// Generates both data-taking periods of a run.
pub fn simulate_run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let layout = config.layout()?;
    let plan = &config.run;
    let seed = plan.seed;
    let budget = plan.budget()?;
    let (acceptance, det_eff, capture) = signal_factors(config)?;
    let expected = expected_signal_count(
        plan.injected_beta2_over_2,
        &budget,
        capture,
        acceptance.acceptance_with_attenuation,
        det_eff,
    );
    let energy = config.transitions.energy(TransitionKind::NonPaulian);
    let source = SignalSource::from_acceptance(expected, energy, &acceptance);
    let cells: Vec<(u32, f64)> = layout.cells.iter().map(|c| (c.id, c.area_cm2())).collect();
    let time_sigma = config.detector.time_sigma_ns()?;

    let signal = generate_signal_events(
        &source,
        plan.duration_current_days,
        &config.detector,
        &StreamFamily::new(seed, "signal/current"),
    )?;
    let bg_on = generate_background_events(
        &config.background,
        &config.detector,
        plan.duration_current_days,
        &cells,
        &StreamFamily::new(seed, "background/current"),
    )?;
    let bg_off = generate_background_events(
        &config.background,
        &config.detector,
        plan.duration_nocurrent_days,
        &cells,
        &StreamFamily::new(seed, "background/nocurrent"),
    )?;

    let mut events_current = merge_by_time(signal, bg_on);
    let mut events_nocurrent = bg_off;
    apply_veto(
        &mut events_current,
        &config.veto,
        time_sigma,
        &StreamFamily::new(seed, "veto/current"),
    )?;
    apply_veto(
        &mut events_nocurrent,
        &config.veto,
        time_sigma,
        &StreamFamily::new(seed, "veto/nocurrent"),
    )?;

    Ok(RunOutput {
        events_current,
        events_nocurrent,
        acceptance,
        detection_efficiency: det_eff,
        capture_factor: capture,
        budget,
        expected_signal: expected,
    })
}

pub const EVENTS_HEADER: [&str; 5] = ["time_s", "energy_keV", "cell_id", "origin", "vetoed"];

/// Writes events as `time_s,energy_keV,cell_id,origin,vetoed` CSV.
pub fn write_events_csv<W: Write>(events: &[EventRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([
            e.time_s.to_string(),
            e.energy_kev.to_string(),
            e.cell_id.to_string(),
            e.origin.to_string(),
            u8::from(e.vetoed).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<events>", e))?;
    Ok(())
}

/// Reads events written by [`write_events_csv`]. Scintillator bookkeeping
/// (`correlated`, `coincidence_ns`) is not part of the format.
pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(EVENTS_HEADER) {
        return Err(Error::domain(format!(
            "unexpected events header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let field = |k: usize| {
            rec.get(k)
                .ok_or_else(|| Error::domain(format!("events row {row}: missing column {k}")))
        };
        let bad = |what: &str| Error::domain(format!("events row {row}: bad {what}"));
        let time_s: f64 = field(0)?.parse().map_err(|_| bad("time_s"))?;
        let energy_kev: f64 = field(1)?.parse().map_err(|_| bad("energy_keV"))?;
        let cell_id: u32 = field(2)?.parse().map_err(|_| bad("cell_id"))?;
        let origin: Origin = field(3)?.parse()?;
        let vetoed = match field(4)? {
            "0" | "false" => false,
            "1" | "true" => true,
            _ => return Err(bad("vetoed")),
        };
        out.push(EventRecord {
            time_s,
            energy_kev,
            cell_id,
            origin,
            vetoed,
            correlated: false,
            coincidence_ns: None,
        });
    }
    Ok(out)
}
