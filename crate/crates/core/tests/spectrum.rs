use proptest::prelude::*;
use wgmopo_core::constants::{hz_from_nm, C};
use wgmopo_core::data::default_resonator;
use wgmopo_core::material::Polarization::{self, Extraordinary, Ordinary};
use wgmopo_core::spectrum::{
    fsr, linewidth, mode_properties, nearest_mode, resonance_frequency, ModeIndex, Resonator, SpectrumError,
};

const AIRY_ZEROS: [f64; 5] = [
    2.338_107_410_459_767,
    4.087_949_444_130_971,
    5.520_559_828_095_551,
    6.786_708_090_071_759,
    7.944_133_587_120_853,
];

fn res() -> Resonator {
    default_resonator().unwrap()
}

fn mode(m: u32, q: u32, p: u32, pol: Polarization) -> ModeIndex {
    ModeIndex::new(m, q, p, pol).unwrap()
}

/// Bisection on the dispersion relation, written out independently.
fn oracle_frequency(r: &Resonator, md: &ModeIndex, t: f64) -> f64 {
    let model = r.model(md.polarization);
    let g = &r.geometry;
    let radius = g.r_mm * 1e-3 * (1.0 + g.alpha_thermal_per_k * (t - 25.0));
    let z = AIRY_ZEROS[md.q as usize - 1];
    let m = md.m as f64;
    let f = |nu: f64| {
        let n = model.index(C / nu * 1e9, t).unwrap();
        let pol = match md.polarization {
            Extraordinary => n,
            Ordinary => 1.0 / n,
        } / (n * n - 1.0).sqrt();
        let rhs = m + z * (m / 2.0).cbrt() + (md.p as f64 + 0.5) * (g.r_mm / g.rho()).sqrt() - pol
            + 0.15 * z * z * (m / 2.0).powf(-1.0 / 3.0);
        2.0 * std::f64::consts::PI * radius * n * nu / C - rhs
    };
    let (mut a, mut b) = (C / 3.9e-6, C / 0.51e-6);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(mid) > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

#[test]
fn frequency_matches_bisection_oracle() {
    let r = res();
    for md in [
        mode(66873, 1, 0, Extraordinary),
        mode(39000, 2, 1, Ordinary),
        mode(26000, 3, 0, Ordinary),
    ] {
        let nu = resonance_frequency(&r, &md, 140.0).unwrap();
        let o = oracle_frequency(&r, &md, 140.0);
        assert!((nu - o).abs() < 1e3, "{md:?}: {nu} vs {o}");
    }
}

#[test]
fn pump_mode_number_near_532() {
    let r = res();
    let m = nearest_mode(&r, hz_from_nm(532.0), 140.0, 1, 0, Extraordinary).unwrap();
    assert_eq!(m.m, 66873);
}

#[test]
fn fsr_against_group_index() {
    let r = res();
    let md = nearest_mode(&r, hz_from_nm(532.0), 140.0, 1, 0, Extraordinary).unwrap();
    let f = fsr(&r, &md, 140.0).unwrap();
    let nu = resonance_frequency(&r, &md, 140.0).unwrap();
    let ng = r.extraordinary.group_index(C / nu * 1e9, 140.0).unwrap();
    let simple = C / (2.0 * std::f64::consts::PI * r.geometry.radius_m(140.0) * ng);
    assert!((f / simple - 1.0).abs() < 5e-3, "{f} vs {simple}");
    assert!((f / 7.8e9 - 1.0).abs() < 0.02);
}

#[test]
fn neighbour_spacing_equals_fsr() {
    let r = res();
    let md = mode(66873, 1, 0, Extraordinary);
    let prev = ModeIndex { m: md.m - 1, ..md };
    let spacing = resonance_frequency(&r, &md, 140.0).unwrap() - resonance_frequency(&r, &prev, 140.0).unwrap();
    assert!((spacing / fsr(&r, &md, 140.0).unwrap() - 1.0).abs() < 0.01);
}

#[test]
fn second_difference_small() {
    let r = res();
    let nu = |m: u32| resonance_frequency(&r, &mode(m, 1, 0, Extraordinary), 140.0).unwrap();
    let (a, b, c) = (nu(64999), nu(65000), nu(65001));
    assert!(((c - b) - (b - a)).abs() * 100.0 < (c - b).abs());
}

#[test]
fn p_ladder_nearly_uniform() {
    let r = res();
    let nu = |p: u32| resonance_frequency(&r, &mode(39635, 1, p, Ordinary), 141.0).unwrap();
    let gaps: Vec<f64> = (0..5).map(|p| nu(p + 1) - nu(p)).collect();
    let max = gaps.iter().cloned().fold(f64::MIN, f64::max);
    let min = gaps.iter().cloned().fold(f64::MAX, f64::min);
    assert!((max - min) / min < 0.1);
}

#[test]
fn nearest_mode_fixed_point_and_detuning() {
    let r = res();
    let m0 = mode(39635, 1, 0, Ordinary);
    let nu0 = resonance_frequency(&r, &m0, 141.0).unwrap();
    assert_eq!(nearest_mode(&r, nu0, 141.0, 1, 0, Ordinary).unwrap(), m0);

    let target = hz_from_nm(895.0);
    let got = nearest_mode(&r, target, 141.0, 1, 0, Ordinary).unwrap();
    let det = (resonance_frequency(&r, &got, 141.0).unwrap() - target).abs();
    assert!(det <= 0.5 * fsr(&r, &got, 141.0).unwrap());
    for m in got.m - 20..=got.m + 20 {
        let d = (resonance_frequency(&r, &mode(m, 1, 0, Ordinary), 141.0).unwrap() - target).abs();
        assert!(d >= det);
    }
}

#[test]
fn linewidth_examples() {
    let k = linewidth(hz_from_nm(532.0), 1.6e7).unwrap();
    assert!((k / 35.2e6 - 1.0).abs() < 2e-3);
    assert!(matches!(linewidth(1e14, -1.0), Err(SpectrumError::InvalidQ(_))));
    assert_eq!(linewidth(2e14, 1e6).unwrap(), 2.0 * linewidth(1e14, 1e6).unwrap());
    let mut prev = f64::INFINITY;
    for q in [1e5, 1e6, 1e7, 1e8] {
        let k = linewidth(1e14, q).unwrap();
        assert!(k < prev);
        prev = k;
    }
}

#[test]
fn properties_linewidth_is_exact_ratio() {
    let r = res();
    let p = mode_properties(&r, &mode(66873, 1, 0, Extraordinary), 140.0).unwrap();
    assert_eq!(p.linewidth, p.frequency / p.q);
}

#[test]
fn small_azimuthal_rejected() {
    let r = res();
    let md = ModeIndex {
        m: 50,
        q: 1,
        p: 0,
        polarization: Ordinary,
    };
    assert!(matches!(resonance_frequency(&r, &md, 25.0), Err(SpectrumError::InvalidMode(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn radial_order_raises_frequency(m in 20000u32..70000, q in 1u32..5, t in 30.0f64..190.0) {
        let r = res();
        let a = resonance_frequency(&r, &mode(m, q, 0, Ordinary), t).unwrap();
        let b = resonance_frequency(&r, &mode(m, q + 1, 0, Ordinary), t).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn frequencies_fall_with_temperature(m in 30000u32..68000, t in 30.0f64..190.0) {
        let r = res();
        for pol in [Ordinary, Extraordinary] {
            let md = mode(m, 1, 0, pol);
            let a = resonance_frequency(&r, &md, t).unwrap();
            let b = resonance_frequency(&r, &md, t + 0.5).unwrap();
            prop_assert!(b < a);
        }
    }

    #[test]
    fn fsr_positive(m in 20000u32..70000, p in 0u32..4) {
        let r = res();
        prop_assert!(fsr(&r, &mode(m, 1, p, Ordinary), 100.0).unwrap() > 0.0);
    }
}
