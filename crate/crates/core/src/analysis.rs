//! Spectra, current-on/off subtraction, upper limits and sensitivity arithmetic.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::ElectronBudget;
use crate::simulate::EventRecord;

/// Energy window in keV, lower edge inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionOfInterest {
    pub low_kev: f64,
    pub high_kev: f64,
}

impl Default for RegionOfInterest {
    fn default() -> Self {
        Self {
            low_kev: 7.4,
            high_kev: 7.9,
        }
    }
}

impl RegionOfInterest {
    pub fn new(low_kev: f64, high_kev: f64) -> Result<Self> {
        let roi = Self { low_kev, high_kev };
        roi.validate()?;
        Ok(roi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low_kev < self.high_kev) {
            return Err(Error::validation(
                "analysis.roi",
                format!("low {} must be below high {}", self.low_kev, self.high_kev),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.high_kev - self.low_kev
    }

    pub fn contains(&self, energy_kev: f64) -> bool {
        energy_kev >= self.low_kev && energy_kev < self.high_kev
    }
}

/// Binned energy spectrum. A bin `[low, high)` holds events with
/// `low <= E < high`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub exposure_days: f64,
    pub detector_area_cm2: f64,
}

pub const SPECTRUM_HEADER: [&str; 3] = ["bin_low_keV", "bin_high_keV", "counts"];

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::domain("need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain(
            "bin edges must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// `n` equal-width bin edges from `low` to `high`.
pub fn uniform_edges(low: f64, high: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(low < high) {
        return Err(Error::domain(format!(
            "bad binning: {n} bins over [{low}, {high}]"
        )));
    }
    Ok((0..=n)
        .map(|i| low + (high - low) * i as f64 / n as f64)
        .collect())
}

pub fn histogram(
    events: &[EventRecord],
    bin_edges: &[f64],
    include_vetoed: bool,
) -> Result<Spectrum> {
    check_edges(bin_edges)?;
    let mut spec = Spectrum {
        bin_edges: bin_edges.to_vec(),
        counts: vec![0; bin_edges.len() - 1],
        underflow: 0,
        overflow: 0,
        exposure_days: 0.0,
        detector_area_cm2: 0.0,
    };
    for e in events.iter().filter(|e| include_vetoed || !e.vetoed) {
        spec.fill(e.energy_kev);
    }
    Ok(spec)
}

impl Spectrum {
    pub fn with_exposure(mut self, exposure_days: f64, detector_area_cm2: f64) -> Self {
        self.exposure_days = exposure_days;
        self.detector_area_cm2 = detector_area_cm2;
        self
    }

    fn fill(&mut self, energy_kev: f64) {
        let edges = &self.bin_edges;
        if !(energy_kev >= edges[0]) {
            self.underflow += 1;
        } else if energy_kev >= edges[edges.len() - 1] {
            self.overflow += 1;
        } else {
            // number of edges <= E, minus one, is the bin index
            let i = edges.partition_point(|&x| x <= energy_kev) - 1;
            self.counts[i] += 1;
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts in bins whose centre lies inside the ROI.
    pub fn roi_counts(&self, roi: &RegionOfInterest) -> u64 {
        self.bin_edges
            .windows(2)
            .zip(&self.counts)
            .filter(|(w, _)| roi.contains(0.5 * (w[0] + w[1])))
            .map(|(_, c)| *c)
            .sum()
    }

    /// Merges every `factor` adjacent bins; a short tail group becomes the
    /// last bin.
    pub fn rebin(&self, factor: usize) -> Result<Spectrum> {
        if factor == 0 {
            return Err(Error::domain("rebin factor must be >= 1"));
        }
        let mut edges = vec![self.bin_edges[0]];
        let mut counts = Vec::with_capacity(self.n_bins() / factor + 1);
        for (k, chunk) in self.counts.chunks(factor).enumerate() {
            counts.push(chunk.iter().sum());
            edges.push(self.bin_edges[(k * factor + chunk.len()).min(self.n_bins())]);
        }
        Ok(Spectrum {
            bin_edges: edges,
            counts,
            ..self.clone()
        })
    }

    pub fn same_binning(&self, other: &Spectrum) -> bool {
        self.bin_edges.len() == other.bin_edges.len()
            && self
                .bin_edges
                .iter()
                .zip(&other.bin_edges)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SPECTRUM_HEADER)?;
        for (edges, c) in self.bin_edges.windows(2).zip(&self.counts) {
            w.write_record([edges[0].to_string(), edges[1].to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<spectrum>", e))?;
        Ok(())
    }

    /// Reads the CSV form; exposure and area must be set by the caller.
    pub fn read_csv<R: Read>(input: R) -> Result<Spectrum> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().ne(SPECTRUM_HEADER) {
            return Err(Error::domain(format!(
                "unexpected spectrum header {header:?}"
            )));
        }
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::domain(format!("bad spectrum row {rec:?}")))
            };
            let (lo, hi) = (parse(0)?, parse(1)?);
            if let Some(&last) = edges.last() {
                if lo != last {
                    return Err(Error::domain(format!(
                        "spectrum bins not contiguous at {lo}"
                    )));
                }
            } else {
                edges.push(lo);
            }
            edges.push(hi);
            counts.push(
                rec.get(2)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::domain(format!("bad count in {rec:?}")))?,
            );
        }
        check_edges(&edges)?;
        Ok(Spectrum {
            bin_edges: edges,
            counts,
            underflow: 0,
            overflow: 0,
            exposure_days: 0.0,
            detector_area_cm2: 0.0,
        })
    }
}

/// Result of a current-on minus scaled current-off comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subtraction {
    pub n_on: u64,
    pub n_off: u64,
    /// exposure_on / exposure_off
    pub exposure_ratio: f64,
    pub excess: f64,
    pub sigma: f64,
}

pub fn subtract_counts(n_on: u64, n_off: u64, exposure_ratio: f64) -> Subtraction {
    let (on, off) = (n_on as f64, n_off as f64);
    let r = exposure_ratio;
    Subtraction {
        n_on,
        n_off,
        exposure_ratio: r,
        excess: on - r * off,
        sigma: (on + r * r * off).sqrt(),
    }
}

pub fn subtract(on: &Spectrum, off: &Spectrum, roi: &RegionOfInterest) -> Result<Subtraction> {
    roi.validate()?;
    if !on.same_binning(off) {
        return Err(Error::Incompatible("bin edges differ".into()));
    }
    if !(off.exposure_days > 0.0) {
        return Err(Error::Incompatible(
            "current-off exposure must be > 0".into(),
        ));
    }
    if !(on.exposure_days > 0.0) {
        return Err(Error::Incompatible(
            "current-on exposure must be > 0".into(),
        ));
    }
    Ok(subtract_counts(
        on.roi_counts(roi),
        off.roi_counts(roi),
        on.exposure_days / off.exposure_days,
    ))
}

/// Upper bound on signal counts: clamped excess plus `confidence_sigma` σ.
pub fn upper_limit_counts(excess: f64, sigma: f64, confidence_sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(excess.max(0.0) + confidence_sigma * sigma)
}

/// Multiplicative factors between detected photons and β²/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitFactors {
    pub capture_factor: f64,
    pub acceptance: f64,
    pub detection_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub beta2_over_2_upper: f64,
    pub n_x_upper: f64,
    pub excess: f64,
    pub sigma_excess: f64,
    pub confidence_sigma: f64,
    pub n_new: f64,
    pub current_a: f64,
    pub duration_s: f64,
    pub factors: LimitFactors,
}

impl LimitResult {
    fn bound(n_x_upper: f64, n_new: f64, f: &LimitFactors) -> f64 {
        n_x_upper / (n_new * f.capture_factor * f.acceptance * f.detection_efficiency)
    }

    /// Recomputes the bound from the stored fields.
    pub fn recompute(&self) -> f64 {
        let n_x = self.excess.max(0.0) + self.confidence_sigma * self.sigma_excess;
        Self::bound(n_x, self.n_new, &self.factors)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// β²/2 bound for an upper limit `n_x_upper` on detected forbidden photons.
pub fn beta_limit(
    n_x_upper: f64,
    budget: &ElectronBudget,
    factors: LimitFactors,
) -> Result<LimitResult> {
    limit_from_parts(n_x_upper, 0.0, 0.0, 0.0, budget, factors)
}

/// Full chain from a subtraction result.
pub fn limit_from_subtraction(
    sub: &Subtraction,
    confidence_sigma: f64,
    budget: &ElectronBudget,
    factors: LimitFactors,
) -> Result<LimitResult> {
    let n_x = upper_limit_counts(sub.excess, sub.sigma, confidence_sigma)?;
    limit_from_parts(
        n_x,
        sub.excess,
        sub.sigma,
        confidence_sigma,
        budget,
        factors,
    )
}

fn limit_from_parts(
    n_x_upper: f64,
    excess: f64,
    sigma: f64,
    confidence_sigma: f64,
    budget: &ElectronBudget,
    factors: LimitFactors,
) -> Result<LimitResult> {
    let denom =
        budget.n_new * factors.capture_factor * factors.acceptance * factors.detection_efficiency;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::domain(format!(
            "limit denominator must be > 0 (n_new {}, factors {factors:?})",
            budget.n_new
        )));
    }
    if !(n_x_upper >= 0.0) {
        return Err(Error::domain(format!(
            "n_x_upper must be >= 0, got {n_x_upper}"
        )));
    }
    Ok(LimitResult {
        beta2_over_2_upper: LimitResult::bound(n_x_upper, budget.n_new, &factors),
        n_x_upper,
        excess,
        sigma_excess: sigma,
        confidence_sigma,
        n_new: budget.n_new,
        current_a: budget.current_a,
        duration_s: budget.duration_s,
        factors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub name: String,
    pub signal_factor: f64,
    pub background_factor: f64,
    pub sensitivity_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub rows: Vec<GainRow>,
    pub total_signal: f64,
    pub total_background: f64,
    pub total_sensitivity: f64,
}

impl GainReport {
    fn from_rows(rows: Vec<GainRow>) -> Self {
        Self {
            total_signal: rows.iter().map(|r| r.signal_factor).product(),
            total_background: rows.iter().map(|r| r.background_factor).product(),
            total_sensitivity: rows.iter().map(|r| r.sensitivity_gain).product(),
            rows,
        }
    }

    pub fn row(&self, name: &str) -> Option<&GainRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Signal-strength factors of one experiment generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalFactors {
    pub geometry: f64,
    pub detector_efficiency: f64,
    pub current_a: f64,
}

impl SignalFactors {
    /// CCD-based predecessor.
    pub const VIP: SignalFactors = SignalFactors {
        geometry: 0.021,
        detector_efficiency: 0.48,
        current_a: 40.0,
    };
    /// SDD-based setup with the 100 A target.
    pub const VIP2: SignalFactors = SignalFactors {
        geometry: 0.03,
        detector_efficiency: 0.99,
        current_a: 100.0,
    };
}

/// Signal gain of `new` over `old`, factor by factor. Background is unchanged.
pub fn gain_table_vip(old: &SignalFactors, new: &SignalFactors) -> Result<GainReport> {
    let pairs = [
        ("geometry", old.geometry, new.geometry),
        (
            "detector efficiency",
            old.detector_efficiency,
            new.detector_efficiency,
        ),
        ("current", old.current_a, new.current_a),
    ];
    let mut rows = Vec::with_capacity(3);
    for (name, o, n) in pairs {
        if !(o > 0.0 && n > 0.0) {
            return Err(Error::domain(format!("{name}: factors must be > 0")));
        }
        let s = n / o;
        rows.push(GainRow {
            name: name.into(),
            signal_factor: s,
            background_factor: 1.0,
            sensitivity_gain: s,
        });
    }
    Ok(GainReport::from_rows(rows))
}

/// One upgrade step: signal and background multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpgradeStep {
    pub name: String,
    pub signal_factor: f64,
    pub background_factor: f64,
}

impl UpgradeStep {
    pub fn new(name: &str, signal_factor: f64, background_factor: f64) -> Self {
        Self {
            name: name.into(),
            signal_factor,
            background_factor,
        }
    }
}

/// Upgrade steps of the SDD, shielding and radon-reduction programme.
///
/// The new SDDs raise the background by their area ratio 23/6 and by 4/3 from
/// the wider ROI that 200 eV resolution needs.
pub fn upgrade_steps() -> Vec<UpgradeStep> {
    vec![
        UpgradeStep::new("new SDDs", 3.0, (23.0 / 6.0) * (4.0 / 3.0)),
        UpgradeStep::new("passive shielding", 1.0, 1.0 / 20.0),
        UpgradeStep::new("RRS", 1.0, 1.0 / 3.0),
    ]
}

/// Sensitivity gain `s / sqrt(b)` per step; the limit scales as `sqrt(B) / S`.
pub fn gain_table_upgrade(steps: &[UpgradeStep]) -> Result<GainReport> {
    let mut rows = Vec::with_capacity(steps.len());
    for st in steps {
        if !(st.background_factor > 0.0) {
            return Err(Error::domain(format!(
                "{}: background factor must be > 0",
                st.name
            )));
        }
        if !(st.signal_factor > 0.0) {
            return Err(Error::domain(format!(
                "{}: signal factor must be > 0",
                st.name
            )));
        }
        rows.push(GainRow {
            name: st.name.clone(),
            signal_factor: st.signal_factor,
            background_factor: st.background_factor,
            sensitivity_gain: st.signal_factor / st.background_factor.sqrt(),
        });
    }
    Ok(GainReport::from_rows(rows))
}

/// Background-dominated projection: the limit improves with the sensitivity
/// gain and with the square root of the running-time ratio.
pub fn project_limit(current_limit: f64, sensitivity_gain: f64, time_ratio: f64) -> Result<f64> {
    for (name, v) in [
        ("current limit", current_limit),
        ("sensitivity gain", sensitivity_gain),
        ("time ratio", time_ratio),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("{name} must be > 0, got {v}")));
        }
    }
    Ok(current_limit / (sensitivity_gain * time_ratio.sqrt()))
}
