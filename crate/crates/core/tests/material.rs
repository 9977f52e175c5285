use std::path::PathBuf;

use proptest::prelude::*;
use serde_json::Value;
use wgmopo_core::material::{
    group_index, refractive_index, CoefficientFile, MaterialDatabase, MaterialError, Polarization, SellmeierModel,
};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn model(pol: &str) -> SellmeierModel {
    let f = CoefficientFile::load(&data(&format!("materials/mgo_cln_{pol}.json"))).unwrap();
    SellmeierModel::from_file(&f).unwrap()
}

/// Straight evaluation of the published form from the raw JSON.
fn oracle_index(pol: &str, lambda_nm: f64, t: f64) -> f64 {
    let text = std::fs::read_to_string(data(&format!("materials/mgo_cln_{pol}.json"))).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let c = |k: &str| v["coefficients"][k].as_f64().unwrap();
    let f = (t - 24.5) * (t + 570.82);
    let l = lambda_nm / 1000.0;
    let n2 = c("a1") + c("b1") * f + (c("a2") + c("b2") * f) / (l * l - (c("a3") + c("b3") * f).powi(2))
        + (c("a4") + c("b4") * f) / (l * l - c("a5").powi(2))
        - c("a6") * l * l;
    n2.sqrt()
}

#[test]
fn extraordinary_index_matches_oracle() {
    let n = refractive_index(&model("e"), 532.0, 140.0).unwrap();
    assert!((n - oracle_index("e", 532.0, 140.0)).abs() < 1e-12);
    assert!((n - 2.26339).abs() < 1e-4);
}

#[test]
fn ordinary_index_matches_oracle() {
    let n = refractive_index(&model("o"), 1064.0, 25.0).unwrap();
    assert!((n - oracle_index("o", 1064.0, 25.0)).abs() < 1e-12);
    assert!((n - 2.23).abs() < 0.01);
}

#[test]
fn far_uv_is_rejected() {
    let err = refractive_index(&model("e"), 0.1, 25.0).unwrap_err();
    assert!(matches!(err, MaterialError::OutOfValidity { .. }));
}

#[test]
fn group_index_near_fsr_value() {
    let ng = group_index(&model("e"), 532.0, 140.0).unwrap();
    assert!((ng - 2.45).abs() < 0.05, "n_g = {ng}");
}

#[test]
fn group_index_stencil_must_fit() {
    let m = model("e");
    let (lmin, _) = m.wavelength_validity_um;
    assert!(group_index(&m, lmin * 1e3 + 1.0, 100.0).is_err());
}

#[test]
fn group_index_stable_under_step_halving() {
    let m = model("o");
    for &(l, t) in &[(795.0, 60.0), (1064.0, 140.0), (1600.0, 180.0)] {
        let n = m.index(l, t).unwrap();
        let est = |h: f64| n - l * (m.index(l + h, t).unwrap() - m.index(l - h, t).unwrap()) / (2.0 * h);
        let ng = group_index(&m, l, t).unwrap();
        assert!((est(0.5) - est(0.25)).abs() < 1e-5);
        assert!((ng - est(0.25)).abs() < 1e-5);
    }
}

#[test]
fn coefficient_files_round_trip_byte_identical() {
    for name in ["materials/mgo_cln_e.json", "materials/mgo_cln_o.json", "materials/zno.json"] {
        let text = std::fs::read_to_string(data(name)).unwrap();
        let parsed = CoefficientFile::from_json(&text).unwrap();
        assert_eq!(parsed.to_json(), text, "{name}");
    }
    let text = std::fs::read_to_string(data("materials/mgo_cln_e.json")).unwrap();
    assert_eq!(model("e").to_file().to_json(), text);
}

#[test]
fn unknown_field_rejected() {
    let text = std::fs::read_to_string(data("materials/mgo_cln_e.json")).unwrap();
    let bad = text.replacen("\"source\"", "\"extra\": 1,\n  \"source\"", 1);
    assert!(CoefficientFile::from_json(&bad).is_err());
}

#[test]
fn database_resolves_each_key_once() {
    let mut db = MaterialDatabase::new();
    for f in ["materials/mgo_cln_e.json", "materials/mgo_cln_o.json", "materials/zno.json"] {
        db.load_file(&data(f)).unwrap();
    }
    assert_eq!(db.len(), 3);
    assert_eq!(db.fixed_index("ZnO").unwrap(), 2.03);
    assert!(db.sellmeier("MgO:CLN", Polarization::Extraordinary).is_ok());
    assert!(db.load_file(&data("materials/zno.json")).is_err());
}

proptest! {
    #[test]
    fn index_physical_inside_validity(l in 500.0f64..4000.0, t in 20.0f64..200.0) {
        for pol in ["e", "o"] {
            let n = refractive_index(&model(pol), l, t).unwrap();
            prop_assert!(n > 1.0 && n < 3.0);
        }
    }

    #[test]
    fn index_continuous(l in 520.0f64..3900.0, t in 21.0f64..199.0) {
        let m = model("e");
        let n0 = m.index(l, t).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..6 {
            let eps = 10f64.powi(-k);
            let d = (m.index(l + eps, t + eps).unwrap() - n0).abs();
            prop_assert!(d <= prev + 1e-15);
            prev = d;
        }
        prop_assert!(prev < 1e-6);
    }

    #[test]
    fn normal_dispersion_group_index_exceeds_phase(l in 520.0f64..1700.0, t in 20.0f64..200.0) {
        for pol in ["e", "o"] {
            let m = model(pol);
            prop_assert!(group_index(&m, l, t).unwrap() > m.index(l, t).unwrap());
        }
    }

    #[test]
    fn deterministic(l in 500.0f64..4000.0, t in 20.0f64..200.0) {
        let m = model("o");
        prop_assert_eq!(m.index(l, t).unwrap().to_bits(), m.index(l, t).unwrap().to_bits());
    }
}
