//! Target strips, detector cells and Monte Carlo acceptance.
//!
//! Lengths are in millimetres throughout. A body is placed by its centre and
//! two orthonormal in-plane axes `u` and `v`; its normal is `u × v`.
//!
//! Acceptance is estimated by emitting photons uniformly in the strip volume
//! with isotropic directions and tracing straight lines to the detector
//! planes. Sample `i` draws from counter stream `i`, and samples are tallied in
//! fixed-size chunks reduced in index order, so the result is bit-identical for
//! any worker count.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{attenuation_fraction, Material};
use crate::rng::StreamFamily;

pub type Vec3 = [f64; 3];

pub const SCHEMA_VERSION: u32 = 1;

/// Smallest sample count accepted by the acceptance estimators.
pub const MIN_SAMPLES: u64 = 10_000;

const CHUNK: u64 = 1 << 16;
const AXIS_TOL: f64 = 1e-9;

/// Copper strip thickness used by the built-in presets, mm.
///
/// Calibrated with [`calibrate_strip_thickness`] on the `vip2-2016` preset at
/// 7.7 keV so the attenuated acceptance is 0.030 (10⁶ samples, seed 2016).
pub const DEFAULT_STRIP_THICKNESS_MM: f64 = 0.0183;

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn axpy(p: Vec3, t: f64, d: Vec3) -> Vec3 {
    [p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2]]
}

/// Rigid placement of a flat or box-shaped body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub center: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
}

impl Placement {
    pub fn new(center: Vec3, u_axis: Vec3, v_axis: Vec3) -> Self {
        Self {
            center,
            u_axis,
            v_axis,
        }
    }

    pub fn normal(&self) -> Vec3 {
        cross(self.u_axis, self.v_axis)
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation(
                format!("{path}.center"),
                "must be finite",
            ));
        }
        for (name, a) in [("u_axis", self.u_axis), ("v_axis", self.v_axis)] {
            if (dot(a, a).sqrt() - 1.0).abs() > AXIS_TOL {
                return Err(Error::validation(
                    format!("{path}.{name}"),
                    "must be a unit vector",
                ));
            }
        }
        if dot(self.u_axis, self.v_axis).abs() > AXIS_TOL {
            return Err(Error::validation(
                format!("{path}.v_axis"),
                "must be orthogonal to u_axis",
            ));
        }
        Ok(())
    }
}

/// A current-carrying copper strip: length along `u`, width along `v`,
/// thickness along the normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetStrip {
    pub length_mm: f64,
    pub width_mm: f64,
    pub thickness_mm: f64,
    pub placement: Placement,
}

impl TargetStrip {
    fn half_extents(&self) -> Vec3 {
        [
            0.5 * self.length_mm,
            0.5 * self.width_mm,
            0.5 * self.thickness_mm,
        ]
    }

    pub fn volume_mm3(&self) -> f64 {
        self.length_mm * self.width_mm * self.thickness_mm
    }

    /// Length of the segment `p + t·d`, `t ∈ [0, t_max]`, lying inside the strip.
    fn chord(&self, p: Vec3, d: Vec3, t_max: f64) -> f64 {
        let pl = &self.placement;
        let rel = sub(p, pl.center);
        let axes = [pl.u_axis, pl.v_axis, pl.normal()];
        let half = self.half_extents();
        let (mut t0, mut t1) = (0.0f64, t_max);
        for k in 0..3 {
            let o = dot(rel, axes[k]);
            let dk = dot(d, axes[k]);
            if dk.abs() < 1e-15 {
                if o.abs() > half[k] {
                    return 0.0;
                }
                continue;
            }
            let a = (-half[k] - o) / dk;
            let b = (half[k] - o) / dk;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 >= t1 {
                return 0.0;
            }
        }
        t1 - t0
    }
}

/// One SDD cell: active face `active_width_mm` along `u` by
/// `active_height_mm` along `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorCell {
    pub id: u32,
    pub active_width_mm: f64,
    pub active_height_mm: f64,
    pub depletion_depth_um: f64,
    pub placement: Placement,
}

impl DetectorCell {
    pub fn area_cm2(&self) -> f64 {
        self.active_width_mm * self.active_height_mm / 100.0
    }

    /// Distance along `t` to the active face, if the ray `p + t·d` crosses it.
    fn intersect(&self, p: Vec3, d: Vec3) -> Option<f64> {
        let pl = &self.placement;
        let n = pl.normal();
        let denom = dot(d, n);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = dot(sub(pl.center, p), n) / denom;
        if !(t > 0.0) {
            return None;
        }
        let rel = sub(axpy(p, t, d), pl.center);
        let (a, b) = (dot(rel, pl.u_axis), dot(rel, pl.v_axis));
        (a.abs() <= 0.5 * self.active_width_mm && b.abs() <= 0.5 * self.active_height_mm)
            .then_some(t)
    }

    /// Gap between the active face and the nearest face of `strip`, measured
    /// along the cell normal from the strip centre.
    pub fn gap_to(&self, strip: &TargetStrip) -> f64 {
        let n = self.placement.normal();
        let dist = dot(sub(self.placement.center, strip.placement.center), n).abs();
        let sn = strip.placement.normal();
        let proj = 0.5
            * (strip.length_mm * dot(strip.placement.u_axis, n).abs()
                + strip.width_mm * dot(strip.placement.v_axis, n).abs()
                + strip.thickness_mm * dot(sn, n).abs());
        dist - proj
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryLayout {
    pub schema: u32,
    pub preset_name: String,
    pub strips: Vec<TargetStrip>,
    pub cells: Vec<DetectorCell>,
}

/// Named built-in layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Six 10×10 mm cells, three facing each strip at a 6 mm gap.
    Vip2_2016,
    /// Four 3×3 units of 8×8 mm cells, two facing each strip.
    Vip2Upgrade,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Vip2_2016, Preset::Vip2Upgrade];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Vip2_2016 => "vip2-2016",
            Preset::Vip2Upgrade => "vip2-upgrade",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Unknown {
                kind: "geometry preset",
                name: name.to_string(),
            })
    }

    pub fn layout(self) -> GeometryLayout {
        self.layout_with_thickness(DEFAULT_STRIP_THICKNESS_MM)
    }

    pub fn layout_with_thickness(self, thickness_mm: f64) -> GeometryLayout {
        match self {
            Preset::Vip2_2016 => vip2_2016(thickness_mm),
            Preset::Vip2Upgrade => vip2_upgrade(thickness_mm),
        }
    }
}

const STRIP_LENGTH_MM: f64 = 91.0;
const STRIP_WIDTH_MM: f64 = 20.0;
/// Strip to SDD face distance.
const SDD_GAP_MM: f64 = 6.0;
/// Free space between the two strips, taken by the cooling line.
const INNER_GAP_MM: f64 = 16.0;
const SDD_DEPTH_UM: f64 = 450.0;

const X: Vec3 = [1.0, 0.0, 0.0];
const Y: Vec3 = [0.0, 1.0, 0.0];
const Z: Vec3 = [0.0, 0.0, 1.0];

/// Two strips parallel to the y-z plane, length along z, mirrored in x.
fn strip_pair(thickness_mm: f64) -> (Vec<TargetStrip>, f64) {
    let x = 0.5 * INNER_GAP_MM + 0.5 * thickness_mm;
    let strips = [x, -x]
        .into_iter()
        .map(|cx| TargetStrip {
            length_mm: STRIP_LENGTH_MM,
            width_mm: STRIP_WIDTH_MM,
            thickness_mm,
            placement: Placement::new([cx, 0.0, 0.0], Z, Y),
        })
        .collect();
    // x of the outer strip faces
    (strips, x + 0.5 * thickness_mm)
}

fn facing_cell(id: u32, side: f64, x_face: f64, y: f64, z: f64, size: f64) -> DetectorCell {
    // normal = u × v points back at the target
    let (u, v) = if side > 0.0 { (Z, Y) } else { (Y, Z) };
    debug_assert!(dot(cross(u, v), X) * side < 0.0);
    DetectorCell {
        id,
        active_width_mm: size,
        active_height_mm: size,
        depletion_depth_um: SDD_DEPTH_UM,
        placement: Placement::new([side * (x_face + SDD_GAP_MM), y, z], u, v),
    }
}

fn vip2_2016(thickness_mm: f64) -> GeometryLayout {
    const CELL_MM: f64 = 10.0;
    const PITCH_MM: f64 = 12.0;
    let (strips, x_face) = strip_pair(thickness_mm);
    let mut cells = Vec::with_capacity(6);
    for side in [1.0, -1.0] {
        for k in [-1.0, 0.0, 1.0] {
            let id = cells.len() as u32;
            cells.push(facing_cell(id, side, x_face, 0.0, k * PITCH_MM, CELL_MM));
        }
    }
    GeometryLayout {
        schema: SCHEMA_VERSION,
        preset_name: Preset::Vip2_2016.name().into(),
        strips,
        cells,
    }
}

fn vip2_upgrade(thickness_mm: f64) -> GeometryLayout {
    const CELL_MM: f64 = 8.0;
    // 9 cells of 64 mm² at 85 % active fraction -> 26 mm unit
    const UNIT_MM: f64 = 26.0;
    const UNIT_GAP_MM: f64 = 2.0;
    let pitch = UNIT_MM / 3.0;
    let (strips, x_face) = strip_pair(thickness_mm);
    let mut cells = Vec::with_capacity(36);
    for side in [1.0, -1.0] {
        for unit_z in [
            -0.5 * (UNIT_MM + UNIT_GAP_MM),
            0.5 * (UNIT_MM + UNIT_GAP_MM),
        ] {
            for i in [-1.0, 0.0, 1.0] {
                for j in [-1.0, 0.0, 1.0] {
                    let id = cells.len() as u32;
                    cells.push(facing_cell(
                        id,
                        side,
                        x_face,
                        i * pitch,
                        unit_z + j * pitch,
                        CELL_MM,
                    ));
                }
            }
        }
    }
    GeometryLayout {
        schema: SCHEMA_VERSION,
        preset_name: Preset::Vip2Upgrade.name().into(),
        strips,
        cells,
    }
}

impl GeometryLayout {
    pub fn preset(name: &str) -> Result<Self> {
        Ok(Preset::from_name(name)?.layout())
    }

    pub fn total_cell_area_cm2(&self) -> f64 {
        self.cells.iter().map(DetectorCell::area_cm2).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema",
                format!(
                    "unsupported schema {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        if self.strips.is_empty() {
            return Err(Error::validation("strips", "at least one strip required"));
        }
        if self.cells.is_empty() {
            return Err(Error::validation("cells", "at least one cell required"));
        }
        for (i, s) in self.strips.iter().enumerate() {
            let p = format!("strips[{i}]");
            if !(s.length_mm > 0.0 && s.width_mm > 0.0) {
                return Err(Error::validation(p, "length and width must be > 0"));
            }
            if !(s.thickness_mm >= 0.0) {
                return Err(Error::validation(
                    format!("{p}.thickness_mm"),
                    "must be >= 0",
                ));
            }
            s.placement.validate(&format!("{p}.placement"))?;
        }
        for (i, c) in self.cells.iter().enumerate() {
            let p = format!("cells[{i}]");
            if !(c.active_width_mm > 0.0 && c.active_height_mm > 0.0) {
                return Err(Error::validation(p, "active extents must be > 0"));
            }
            if !(c.depletion_depth_um > 0.0) {
                return Err(Error::validation(
                    format!("{p}.depletion_depth_um"),
                    "must be > 0",
                ));
            }
            c.placement.validate(&format!("{p}.placement"))?;
            if self.cells[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::validation(
                    format!("{p}.id"),
                    format!("duplicate id {}", c.id),
                ));
            }
        }
        for i in 0..self.cells.len() {
            for j in 0..i {
                if cells_overlap(&self.cells[i], &self.cells[j]) {
                    return Err(Error::validation(
                        format!("cells[{i}]"),
                        format!("overlaps cell {}", self.cells[j].id),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let layout: GeometryLayout = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }
}

/// Coplanar cells whose active rectangles share interior area.
fn cells_overlap(a: &DetectorCell, b: &DetectorCell) -> bool {
    let na = a.placement.normal();
    let nb = b.placement.normal();
    if (dot(na, nb).abs() - 1.0).abs() > 1e-9 {
        return false;
    }
    if dot(sub(b.placement.center, a.placement.center), na).abs() > 1e-9 {
        return false;
    }
    // separating axis test on the four in-plane edge directions
    let rel = sub(b.placement.center, a.placement.center);
    let ha = [0.5 * a.active_width_mm, 0.5 * a.active_height_mm];
    let hb = [0.5 * b.active_width_mm, 0.5 * b.active_height_mm];
    let axes_a = [a.placement.u_axis, a.placement.v_axis];
    let axes_b = [b.placement.u_axis, b.placement.v_axis];
    for axis in axes_a.iter().chain(axes_b.iter()) {
        let ra = ha[0] * dot(axes_a[0], *axis).abs() + ha[1] * dot(axes_a[1], *axis).abs();
        let rb = hb[0] * dot(axes_b[0], *axis).abs() + hb[1] * dot(axes_b[1], *axis).abs();
        if dot(rel, *axis).abs() >= ra + rb - 1e-12 {
            return false;
        }
    }
    true
}

/// Per-cell share of an acceptance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAcceptance {
    pub id: u32,
    pub solid_angle_fraction: f64,
    pub acceptance_with_attenuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceResult {
    pub solid_angle_fraction: f64,
    pub acceptance_with_attenuation: f64,
    /// Binomial standard error of `solid_angle_fraction`.
    pub mc_standard_error: f64,
    /// Standard error of the attenuation-weighted mean.
    pub acceptance_standard_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// Photon energy used for attenuation; `None` when attenuation is ignored.
    pub energy_kev: Option<f64>,
    pub per_cell: Vec<CellAcceptance>,
}

/// A uniformly sampled emission point with an isotropic direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub strip: usize,
    pub point: Vec3,
    pub direction: Vec3,
}

pub fn isotropic_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let cos_t = 2.0 * rng.random::<f64>() - 1.0;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
}

/// Draws a point uniformly over the union of strip volumes (area-weighted
/// when every strip has zero thickness) and an isotropic direction.
pub fn sample_emission<R: Rng + ?Sized>(layout: &GeometryLayout, rng: &mut R) -> Emission {
    let weights: Vec<f64> = {
        let vols: Vec<f64> = layout.strips.iter().map(TargetStrip::volume_mm3).collect();
        if vols.iter().sum::<f64>() > 0.0 {
            vols
        } else {
            layout
                .strips
                .iter()
                .map(|s| s.length_mm * s.width_mm)
                .collect()
        }
    };
    sample_emission_weighted(layout, &weights, rng)
}

fn sample_emission_weighted<R: Rng + ?Sized>(
    layout: &GeometryLayout,
    weights: &[f64],
    rng: &mut R,
) -> Emission {
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut strip = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if pick < *w {
            strip = i;
            break;
        }
        pick -= w;
    }
    let s = &layout.strips[strip];
    let pl = &s.placement;
    let a = (rng.random::<f64>() - 0.5) * s.length_mm;
    let b = (rng.random::<f64>() - 0.5) * s.width_mm;
    let c = (rng.random::<f64>() - 0.5) * s.thickness_mm;
    let point = axpy(
        axpy(axpy(pl.center, a, pl.u_axis), b, pl.v_axis),
        c,
        pl.normal(),
    );
    Emission {
        strip,
        point,
        direction: isotropic_direction(rng),
    }
}

#[derive(Debug, Clone)]
struct Tally {
    hits: u64,
    weight: f64,
    weight_sq: f64,
    cell_hits: Vec<u64>,
    cell_weight: Vec<f64>,
}

impl Tally {
    fn new(n_cells: usize) -> Self {
        Self {
            hits: 0,
            weight: 0.0,
            weight_sq: 0.0,
            cell_hits: vec![0; n_cells],
            cell_weight: vec![0.0; n_cells],
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.hits += o.hits;
        self.weight += o.weight;
        self.weight_sq += o.weight_sq;
        for (a, b) in self.cell_hits.iter_mut().zip(&o.cell_hits) {
            *a += b;
        }
        for (a, b) in self.cell_weight.iter_mut().zip(&o.cell_weight) {
            *a += b;
        }
    }
}

/// Traces one emission; returns the hit cell index and the in-copper path (mm).
fn trace(layout: &GeometryLayout, e: &Emission) -> Option<(usize, f64)> {
    let (cell, t) = layout
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.intersect(e.point, e.direction).map(|t| (i, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let path: f64 = layout
        .strips
        .iter()
        .map(|s| s.chord(e.point, e.direction, t))
        .sum();
    Some((cell, path))
}

fn estimate(
    layout: &GeometryLayout,
    mu_per_mm: Option<f64>,
    n_samples: u64,
    seed: u64,
    energy_kev: Option<f64>,
) -> Result<AcceptanceResult> {
    layout.validate()?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::domain(format!(
            "n_samples must be >= {MIN_SAMPLES}, got {n_samples}"
        )));
    }
    let family = StreamFamily::new(seed, "geometry/emission");
    let weights: Vec<f64> = {
        let vols: Vec<f64> = layout.strips.iter().map(TargetStrip::volume_mm3).collect();
        if vols.iter().sum::<f64>() > 0.0 {
            vols
        } else {
            layout
                .strips
                .iter()
                .map(|s| s.length_mm * s.width_mm)
                .collect()
        }
    };
    let n_cells = layout.cells.len();
    let n_chunks = n_samples.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut t = Tally::new(n_cells);
            let end = ((chunk + 1) * CHUNK).min(n_samples);
            for i in chunk * CHUNK..end {
                let mut rng = family.stream(i);
                let e = sample_emission_weighted(layout, &weights, &mut rng);
                if let Some((cell, path_mm)) = trace(layout, &e) {
                    let w = mu_per_mm.map_or(1.0, |mu| (-mu * path_mm).exp());
                    t.hits += 1;
                    t.weight += w;
                    t.weight_sq += w * w;
                    t.cell_hits[cell] += 1;
                    t.cell_weight[cell] += w;
                }
            }
            t
        })
        .collect();
    let mut total = Tally::new(n_cells);
    for t in &tallies {
        total.merge(t);
    }

    let n = n_samples as f64;
    let p = total.hits as f64 / n;
    let a = total.weight / n;
    let var_w = (total.weight_sq / n - a * a).max(0.0);
    let per_cell = layout
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| CellAcceptance {
            id: c.id,
            solid_angle_fraction: total.cell_hits[i] as f64 / n,
            acceptance_with_attenuation: total.cell_weight[i] / n,
        })
        .collect();
    Ok(AcceptanceResult {
        solid_angle_fraction: p,
        // weights never exceed 1; min() guards the last ulp of summation order
        acceptance_with_attenuation: a.min(p),
        mc_standard_error: (p * (1.0 - p) / n).sqrt(),
        acceptance_standard_error: (var_w / n).sqrt(),
        n_samples,
        seed,
        energy_kev,
        per_cell,
    })
}

/// Fraction of isotropically emitted rays crossing any cell face.
pub fn solid_angle_fraction(
    layout: &GeometryLayout,
    n_samples: u64,
    seed: u64,
) -> Result<AcceptanceResult> {
    estimate(layout, None, n_samples, seed, None)
}

/// Like [`solid_angle_fraction`], with each hit weighted by its transmission
/// through the copper it crosses on the way to the cell.
pub fn geometric_acceptance(
    layout: &GeometryLayout,
    energy_kev: f64,
    n_samples: u64,
    seed: u64,
) -> Result<AcceptanceResult> {
    let cu = Material::copper();
    // surface the range check as a physics error
    attenuation_fraction(energy_kev, cu, 0.0)?;
    let mu_per_mm = cu.linear_attenuation(energy_kev)? / 10.0;
    estimate(layout, Some(mu_per_mm), n_samples, seed, Some(energy_kev))
}

/// Finds the strip thickness for which `geometric_acceptance` equals `target`.
///
/// `build` maps a thickness in mm to a layout. Every trial reuses the same
/// seed, so the estimate is a smooth decreasing function of thickness and a
/// plain bisection converges.
pub fn calibrate_strip_thickness(
    build: impl Fn(f64) -> GeometryLayout,
    energy_kev: f64,
    target: f64,
    bracket_mm: (f64, f64),
    n_samples: u64,
    seed: u64,
) -> Result<f64> {
    let eval = |t: f64| -> Result<f64> {
        Ok(
            geometric_acceptance(&build(t), energy_kev, n_samples, seed)?
                .acceptance_with_attenuation,
        )
    };
    let (mut lo, mut hi) = bracket_mm;
    let (a_lo, a_hi) = (eval(lo)?, eval(hi)?);
    if !(a_lo >= target && a_hi <= target) {
        return Err(Error::domain(format!(
            "target {target} not bracketed: acceptance {a_lo} at {lo} mm, {a_hi} at {hi} mm"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cell(distance_mm: f64, thickness_mm: f64) -> GeometryLayout {
        GeometryLayout {
            schema: 1,
            preset_name: "single".into(),
            strips: vec![TargetStrip {
                length_mm: 1e-4,
                width_mm: 1e-4,
                thickness_mm,
                placement: Placement::new([0.0; 3], X, Y),
            }],
            cells: vec![DetectorCell {
                id: 0,
                active_width_mm: 10.0,
                active_height_mm: 10.0,
                depletion_depth_um: 450.0,
                placement: Placement::new([0.0, 0.0, distance_mm], X, Y),
            }],
        }
    }

    #[test]
    fn presets_validate() {
        for p in Preset::ALL {
            let l = p.layout();
            l.validate().unwrap();
            assert_eq!(l.strips.len(), 2);
            assert_eq!(l.preset_name, p.name());
        }
        let l = Preset::Vip2_2016.layout();
        assert_eq!(l.cells.len(), 6);
        assert!((l.total_cell_area_cm2() - 6.0).abs() < 1e-12);
        let u = Preset::Vip2Upgrade.layout();
        assert_eq!(u.cells.len(), 36);
        assert!((u.total_cell_area_cm2() - 23.04).abs() < 1e-12);
    }

    #[test]
    fn preset_gap_is_six_mm() {
        for p in Preset::ALL {
            let l = p.layout();
            for c in &l.cells {
                let gap = l
                    .strips
                    .iter()
                    .map(|s| c.gap_to(s))
                    .fold(f64::INFINITY, f64::min);
                assert!((gap - 6.0).abs() < 1e-9, "{gap}");
            }
        }
    }

    #[test]
    fn preset_cells_face_target() {
        for c in &Preset::Vip2Upgrade.layout().cells {
            let n = c.placement.normal();
            assert!(dot(n, c.placement.center) < 0.0);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            GeometryLayout::preset("vip"),
            Err(Error::Unknown { .. })
        ));
    }

    #[test]
    fn validation_rejects_bad_layouts() {
        let mut l = Preset::Vip2_2016.layout();
        l.cells[1].placement.center = l.cells[0].placement.center;
        l.cells[1].placement.center[2] += 5.0;
        assert!(l.validate().is_err(), "overlap");

        let mut l = Preset::Vip2_2016.layout();
        l.cells[1].id = l.cells[0].id;
        assert!(l.validate().is_err(), "duplicate id");

        let mut l = Preset::Vip2_2016.layout();
        l.strips[0].placement.u_axis = [1.0, 1.0, 0.0];
        assert!(l.validate().is_err(), "non-unit axis");

        let mut l = Preset::Vip2_2016.layout();
        l.cells.clear();
        assert!(l.validate().is_err());

        let mut l = Preset::Vip2_2016.layout();
        l.schema = 2;
        assert!(l.validate().is_err());

        let mut l = Preset::Vip2_2016.layout();
        l.strips[0].length_mm = 0.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        for p in Preset::ALL {
            let l = p.layout();
            let back = GeometryLayout::from_json(&l.to_json().unwrap()).unwrap();
            assert_eq!(back, l);
        }
    }

    #[test]
    fn chord_through_box() {
        let s = TargetStrip {
            length_mm: 10.0,
            width_mm: 10.0,
            thickness_mm: 2.0,
            placement: Placement::new([0.0; 3], X, Y),
        };
        // straight through the thickness
        assert!((s.chord([0.0, 0.0, -5.0], Z, 100.0) - 2.0).abs() < 1e-12);
        // starting inside, stopping at t_max
        assert!((s.chord([0.0, 0.0, 0.0], Z, 0.25) - 0.25).abs() < 1e-12);
        assert!((s.chord([0.0, 0.0, 0.0], Z, 100.0) - 1.0).abs() < 1e-12);
        // parallel and outside
        assert_eq!(s.chord([0.0, 0.0, 3.0], X, 100.0), 0.0);
        // 45 degrees through the slab
        let d = [
            std::f64::consts::FRAC_1_SQRT_2,
            0.0,
            std::f64::consts::FRAC_1_SQRT_2,
        ];
        assert!((s.chord([0.0, 0.0, -1.0], d, 100.0) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cell_intersection() {
        let l = single_cell(6.0, 0.0);
        let c = &l.cells[0];
        assert_eq!(c.intersect([0.0; 3], Z), Some(6.0));
        assert_eq!(c.intersect([0.0; 3], [0.0, 0.0, -1.0]), None);
        assert_eq!(c.intersect([0.0; 3], X), None);
        let d = [0.8, 0.0, 0.6];
        // hits the plane at x = 8, outside the 10 mm face
        assert_eq!(c.intersect([0.0; 3], d), None);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let l = Preset::Vip2_2016.layout();
        let a = geometric_acceptance(&l, 7.7, 100_000, 5).unwrap();
        let b = geometric_acceptance(&l, 7.7, 100_000, 5).unwrap();
        assert_eq!(a, b);
        let c = geometric_acceptance(&l, 7.7, 100_000, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_samples_rejected() {
        let l = Preset::Vip2_2016.layout();
        assert!(solid_angle_fraction(&l, 9_999, 1).is_err());
    }

    #[test]
    fn energy_out_of_table() {
        let l = Preset::Vip2_2016.layout();
        assert!(matches!(
            geometric_acceptance(&l, 0.2, 10_000, 1),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn attenuated_never_exceeds_geometric() {
        let l = Preset::Vip2_2016.layout_with_thickness(0.5);
        let r = geometric_acceptance(&l, 7.7, 50_000, 3).unwrap();
        assert!(r.acceptance_with_attenuation <= r.solid_angle_fraction);
        for c in &r.per_cell {
            assert!(c.acceptance_with_attenuation <= c.solid_angle_fraction + 1e-15);
        }
        let sum: f64 = r.per_cell.iter().map(|c| c.solid_angle_fraction).sum();
        assert!((sum - r.solid_angle_fraction).abs() < 1e-12);
    }
}
