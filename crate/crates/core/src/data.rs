//! Locating and loading the shipped data files.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::material::{MaterialDatabase, MaterialError};
use crate::spectrum::{Resonator, ResonatorGeometry, SpectrumError};

/// Environment variable overriding the data root.
pub const DATA_DIR_ENV: &str = "WGMOPO_DATA_DIR";

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Data root: `$WGMOPO_DATA_DIR` if set, else the directory shipped with this crate.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => shipped_data_dir(),
    }
}

pub fn shipped_data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Default material files relative to the data root.
pub const DEFAULT_MATERIALS: [&str; 3] = ["materials/mgo_cln_e.json", "materials/mgo_cln_o.json", "materials/zno.json"];
pub const DEFAULT_GEOMETRY: &str = "geometry/resonator.json";

pub fn load_materials(root: &Path, files: &[&str]) -> Result<MaterialDatabase, DataError> {
    let mut db = MaterialDatabase::new();
    for f in files {
        db.load_file(&root.join(f))?;
    }
    Ok(db)
}

/// Uncalibrated resonator from the shipped geometry and material files.
pub fn default_resonator() -> Result<Resonator, DataError> {
    let root = shipped_data_dir();
    let db = load_materials(&root, &DEFAULT_MATERIALS)?;
    let geom = ResonatorGeometry::load(&root.join(DEFAULT_GEOMETRY))?;
    Ok(Resonator::new(geom, &db)?)
}
