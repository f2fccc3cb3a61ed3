use pepsim::physics::{
    attenuation_fraction, electron_count, fwhm_to_sigma, transition_energy, ElectronBudget,
    Material, TransitionKind,
};
use pepsim::simulate::detection_efficiency;
use pepsim::Error;

fn close(got: f64, want: f64, rel: f64) -> bool {
    (got / want - 1.0).abs() <= rel
}

// energy keV, Cu μ/ρ, Cu 10 µm transmission, Si μ/ρ, Si eff 450 µm, Si eff 30 µm
const NIST: [(f64, f64, f64, f64, f64, f64); 3] = [
    (
        6.0,
        115.6,
        0.354_950_832,
        147.0,
        0.999_999_798,
        0.642_110_142,
    ),
    (
        7.7,
        58.352_804_8,
        0.592_833_834,
        72.134_098_2,
        0.999_480_820,
        0.396_021_904,
    ),
    (
        8.05,
        51.659_709_4,
        0.629_473_832,
        63.523_209_2,
        0.998_719_377,
        0.358_552_047,
    ),
];

#[test]
fn mass_attenuation_matches_nist_lookup() {
    for (e, cu, t10, si, eff450, eff30) in NIST {
        assert!(
            close(Material::copper().mass_attenuation(e).unwrap(), cu, 0.02),
            "Cu {e}"
        );
        assert!(
            close(Material::silicon().mass_attenuation(e).unwrap(), si, 0.02),
            "Si {e}"
        );
        assert!(close(
            attenuation_fraction(e, Material::copper(), 10e-4).unwrap(),
            t10,
            0.02
        ));
        assert!(close(detection_efficiency(e, 450.0).unwrap(), eff450, 0.02));
        assert!(close(detection_efficiency(e, 30.0).unwrap(), eff30, 0.02));
    }
}

#[test]
fn copper_k_edge_is_resolved() {
    let cu = Material::copper();
    assert!(cu.mass_attenuation(8.97).unwrap() < 40.0);
    assert!(cu.mass_attenuation(8.99).unwrap() > 250.0);
}

#[test]
fn attenuation_limits() {
    let cu = Material::copper();
    assert_eq!(attenuation_fraction(7.7, cu, 0.0).unwrap(), 1.0);
    assert!(attenuation_fraction(7.7, cu, 1.0).unwrap() < 1e-100);
    assert!(matches!(
        attenuation_fraction(0.5, cu, 1e-4),
        Err(Error::OutOfRange { .. })
    ));
    assert!(attenuation_fraction(7.7, cu, -1.0).is_err());
}

#[test]
fn detection_efficiency_edges() {
    assert_eq!(detection_efficiency(8.05, 0.0).unwrap(), 0.0);
    assert!(detection_efficiency(8.05, 450.0).unwrap() >= 0.98);
    let ratio =
        detection_efficiency(8.05, 450.0).unwrap() / detection_efficiency(8.05, 30.0).unwrap();
    assert!((ratio - 2.785).abs() < 0.01, "{ratio}");
}

#[test]
fn electron_counts() {
    assert!(close(
        electron_count(100.0, 1.0).unwrap(),
        6.241_509_074e20,
        1e-9
    ));
    let b = ElectronBudget::from_days(100.0, 40.0).unwrap();
    assert!(close(b.n_new, 2.157_065_536e27, 1e-9));
    assert_eq!(electron_count(0.0, 10.0).unwrap(), 0.0);
    assert!(electron_count(-1.0, 10.0).is_err());
}

#[test]
fn resolution_conversion() {
    assert!((fwhm_to_sigma(150.0).unwrap() - 63.699_135).abs() < 1e-5);
    assert!((fwhm_to_sigma(400.0).unwrap() - 169.864_360).abs() < 1e-5);
    assert!(fwhm_to_sigma(-1.0).is_err());
}

#[test]
fn transition_energies() {
    assert_eq!(transition_energy(TransitionKind::NormalKAlpha), 8.05);
    assert_eq!(transition_energy(TransitionKind::NonPaulian), 7.70);
}

#[test]
fn table_errors_carry_line_numbers() {
    let text = "# copper\n1.0 100\n2.0 50\n3.0 oops\n";
    match Material::parse_table("x", 1.0, text) {
        Err(Error::Table { line: Some(4), .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(Material::parse_table("x", 1.0, "1.0 100\n0.5 50\n").is_err());
}
