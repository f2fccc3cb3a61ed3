//! Constants, transition energies, photon attenuation and unit conversions.
//!
//! Everything here is a pure function of its inputs.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact SI elementary charge in coulomb.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// 2·sqrt(2·ln 2), the Gaussian FWHM/sigma ratio.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Lower edge of tabulated data every shipped material must cover, keV.
pub const TABLE_MIN_SPAN_KEV: f64 = 1.0;
/// Upper edge of tabulated data every shipped material must cover, keV.
pub const TABLE_MAX_SPAN_KEV: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    /// Allowed 2p -> 1s (K-alpha) line of copper.
    NormalKAlpha,
    /// The same transition into an already doubly occupied 1s shell.
    NonPaulian,
}

/// Copper 2p -> 1s transition energies in keV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEnergies {
    pub normal_kalpha_kev: f64,
    pub non_paulian_kev: f64,
}

impl Default for TransitionEnergies {
    fn default() -> Self {
        Self {
            normal_kalpha_kev: 8.05,
            non_paulian_kev: 7.70,
        }
    }
}

impl TransitionEnergies {
    pub fn energy(&self, kind: TransitionKind) -> f64 {
        match kind {
            TransitionKind::NormalKAlpha => self.normal_kalpha_kev,
            TransitionKind::NonPaulian => self.non_paulian_kev,
        }
    }
}

/// Default energy of a transition in keV.
pub fn transition_energy(kind: TransitionKind) -> f64 {
    TransitionEnergies::default().energy(kind)
}

/// Number of electrons carried by `current_a` flowing for `duration_s`.
pub fn electron_count(current_a: f64, duration_s: f64) -> Result<f64> {
    if !(current_a >= 0.0) {
        return Err(Error::domain(format!(
            "current must be >= 0, got {current_a}"
        )));
    }
    if !(duration_s >= 0.0) {
        return Err(Error::domain(format!(
            "duration must be >= 0, got {duration_s}"
        )));
    }
    Ok(current_a * duration_s / ELEMENTARY_CHARGE)
}

/// Electrons injected into the conductor by a current over some time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronBudget {
    pub current_a: f64,
    pub duration_s: f64,
    pub n_new: f64,
}

impl ElectronBudget {
    pub fn new(current_a: f64, duration_s: f64) -> Result<Self> {
        let n_new = electron_count(current_a, duration_s)?;
        Ok(Self {
            current_a,
            duration_s,
            n_new,
        })
    }

    pub fn from_days(current_a: f64, days: f64) -> Result<Self> {
        Self::new(current_a, days * SECONDS_PER_DAY)
    }
}

/// Gaussian sigma from a full width at half maximum, in the same unit.
pub fn fwhm_to_sigma(fwhm: f64) -> Result<f64> {
    if !(fwhm >= 0.0) {
        return Err(Error::domain(format!("FWHM must be >= 0, got {fwhm}")));
    }
    Ok(fwhm / FWHM_PER_SIGMA)
}

/// A homogeneous absorber with a tabulated mass attenuation coefficient.
#[derive(Clone, PartialEq)]
pub struct Material {
    name: String,
    density_g_cm3: f64,
    // (ln E, ln mu/rho), strictly increasing in E
    log_table: Vec<(f64, f64)>,
    energy_range: (f64, f64),
}

impl fmt::Debug for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Material")
            .field("name", &self.name)
            .field("density_g_cm3", &self.density_g_cm3)
            .field("points", &self.log_table.len())
            .field("energy_range", &self.energy_range)
            .finish()
    }
}

impl Material {
    /// Builds a material from `(energy keV, mu/rho cm²/g)` pairs.
    pub fn new(name: impl Into<String>, density_g_cm3: f64, table: &[(f64, f64)]) -> Result<Self> {
        if !(density_g_cm3 > 0.0) || !density_g_cm3.is_finite() {
            return Err(Error::domain(format!(
                "density must be > 0, got {density_g_cm3}"
            )));
        }
        if table.len() < 2 {
            return Err(Error::Table {
                line: None,
                message: "need at least two points".into(),
            });
        }
        for (i, &(e, mu)) in table.iter().enumerate() {
            if !(e > 0.0) || !(mu > 0.0) || !e.is_finite() || !mu.is_finite() {
                return Err(Error::Table {
                    line: None,
                    message: format!("point {i}: energy and coefficient must be finite and > 0"),
                });
            }
            if i > 0 && !(e > table[i - 1].0) {
                return Err(Error::Table {
                    line: None,
                    message: format!("point {i}: energies must be strictly increasing"),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            density_g_cm3,
            log_table: table.iter().map(|&(e, mu)| (e.ln(), mu.ln())).collect(),
            energy_range: (table[0].0, table[table.len() - 1].0),
        })
    }

    /// Parses the two-column `energy_keV  mu_over_rho_cm2_per_g` format.
    pub fn parse_table(name: impl Into<String>, density_g_cm3: f64, text: &str) -> Result<Self> {
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let table_err = |message: String| Error::Table {
                line: Some(line_no),
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(table_err(format!(
                    "expected 2 columns, found {}",
                    cols.len()
                )));
            }
            let e: f64 = cols[0]
                .parse()
                .map_err(|_| table_err(format!("bad energy `{}`", cols[0])))?;
            let mu: f64 = cols[1]
                .parse()
                .map_err(|_| table_err(format!("bad coefficient `{}`", cols[1])))?;
            if !(e > 0.0) || !(mu > 0.0) {
                return Err(table_err("energy and coefficient must be > 0".into()));
            }
            if let Some(&(prev, _)) = points.last() {
                if !(e > prev) {
                    return Err(table_err(format!(
                        "energy {e} not strictly greater than previous {prev}"
                    )));
                }
            }
            points.push((e, mu));
        }
        Self::new(name, density_g_cm3, &points)
    }

    pub fn from_file(name: impl Into<String>, density_g_cm3: f64, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(name, density_g_cm3, &text)
    }

    /// Built-in copper, 8.96 g/cm³.
    pub fn copper() -> &'static Material {
        static CU: OnceLock<Material> = OnceLock::new();
        CU.get_or_init(|| {
            Material::parse_table("copper", 8.96, include_str!("../data/copper.txt"))
                .expect("shipped copper table is valid")
        })
    }

    /// Built-in silicon, 2.33 g/cm³.
    pub fn silicon() -> &'static Material {
        static SI: OnceLock<Material> = OnceLock::new();
        SI.get_or_init(|| {
            Material::parse_table("silicon", 2.33, include_str!("../data/silicon.txt"))
                .expect("shipped silicon table is valid")
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn density(&self) -> f64 {
        self.density_g_cm3
    }

    /// Tabulated energy range in keV, inclusive.
    pub fn energy_range(&self) -> (f64, f64) {
        self.energy_range
    }

    /// Mass attenuation coefficient in cm²/g, log-log interpolated.
    pub fn mass_attenuation(&self, energy_kev: f64) -> Result<f64> {
        let (lo, hi) = self.energy_range;
        if !(energy_kev >= lo && energy_kev <= hi) {
            return Err(Error::OutOfRange {
                quantity: "energy (keV)",
                value: energy_kev,
                low: lo,
                high: hi,
            });
        }
        let x = energy_kev.ln();
        let t = &self.log_table;
        // first index with ln E > x, clamped so [i-1, i] is a valid bracket
        let i = t.partition_point(|&(le, _)| le <= x).clamp(1, t.len() - 1);
        let (x0, y0) = t[i - 1];
        let (x1, y1) = t[i];
        let y = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        Ok(y.exp())
    }

    /// Linear attenuation coefficient in 1/cm.
    pub fn linear_attenuation(&self, energy_kev: f64) -> Result<f64> {
        Ok(self.mass_attenuation(energy_kev)? * self.density_g_cm3)
    }
}

/// Beer-Lambert transmission through `path_cm` of `material`.
pub fn attenuation_fraction(energy_kev: f64, material: &Material, path_cm: f64) -> Result<f64> {
    if !(path_cm >= 0.0) {
        return Err(Error::domain(format!(
            "path length must be >= 0, got {path_cm}"
        )));
    }
    let mu = material.linear_attenuation(energy_kev)?;
    Ok((-mu * path_cm).exp())
}
