//! Re-derives `DEFAULT_STRIP_THICKNESS_MM`.
//!
//! cargo run --release --example calibrate_thickness

use pepsim::geometry::{
    calibrate_strip_thickness, geometric_acceptance, solid_angle_fraction, Preset,
    DEFAULT_STRIP_THICKNESS_MM,
};

const ENERGY_KEV: f64 = 7.7;
const TARGET: f64 = 0.030;
const SAMPLES: u64 = 1_000_000;
const SEED: u64 = 2016;

fn main() -> pepsim::Result<()> {
    let thickness = calibrate_strip_thickness(
        |t| Preset::Vip2_2016.layout_with_thickness(t),
        ENERGY_KEV,
        TARGET,
        (0.001, 1.0),
        SAMPLES,
        SEED,
    )?;
    println!(
        "calibrated strip thickness: {thickness:.5} mm (shipped {DEFAULT_STRIP_THICKNESS_MM} mm)"
    );

    for preset in Preset::ALL {
        let layout = preset.layout();
        let omega = solid_angle_fraction(&layout, SAMPLES, SEED)?;
        let acc = geometric_acceptance(&layout, ENERGY_KEV, SAMPLES, SEED)?;
        println!(
            "{:>13}: solid angle {:.4} ± {:.4}, acceptance at {ENERGY_KEV} keV {:.4} ± {:.4}",
            preset.name(),
            omega.solid_angle_fraction,
            omega.mc_standard_error,
            acc.acceptance_with_attenuation,
            acc.acceptance_standard_error,
        );
    }
    Ok(())
}
