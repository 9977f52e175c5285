//! Temperature-dependent refractive index of the resonator and substrate materials.
//!
//! Dispersive entries use the extended Sellmeier form
//!
//! n² = a1 + b1·f + (a2 + b2·f)/(λ² − (a3 + b3·f)²) + (a4 + b4·f)/(λ² − a5²) − a6·λ²
//!
//! with λ in µm and f = (T − t0)(T + t1), T in °C. All coefficients, including
//! t0 and t1, come from the coefficient file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from material models.
#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("{quantity} {value} is outside the validity range [{min}, {max}]")]
    OutOfValidity {
        quantity: Quantity,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("refractive index {0} is not physical")]
    NonPhysical(f64),

    #[error("missing coefficient `{0}`")]
    MissingCoefficient(String),

    #[error("unknown polarization `{0}`")]
    UnknownPolarization(String),

    #[error("material not found: {0}")]
    NotFound(String),

    #[error("duplicate entry for {0}")]
    Duplicate(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Which argument violated a validity bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Wavelength in µm.
    WavelengthUm,
    /// Temperature in °C.
    TemperatureC,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::WavelengthUm => write!(f, "wavelength (µm)"),
            Quantity::TemperatureC => write!(f, "temperature (°C)"),
        }
    }
}

/// Field polarization relative to the crystal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Ordinary,
    Extraordinary,
}

impl Polarization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Polarization::Ordinary => "ordinary",
            Polarization::Extraordinary => "extraordinary",
        }
    }
}

/// On-disk coefficient file. Field names are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientFile {
    pub material: String,
    pub polarization: String,
    pub coefficients: BTreeMap<String, f64>,
    pub lambda_range_um: [f64; 2],
    pub temp_range_c: [f64; 2],
    pub source: String,
}

impl CoefficientFile {
    pub fn from_json(text: &str) -> Result<Self, MaterialError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Canonical serialization: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("coefficient file serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        let text = std::fs::read_to_string(path).map_err(|source| MaterialError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Coefs {
    a: [f64; 6],
    b: [f64; 4],
    t0: f64,
    t1: f64,
}

/// Temperature-dependent Sellmeier model for one polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct SellmeierModel {
    pub material: String,
    pub polarization: Polarization,
    pub wavelength_validity_um: (f64, f64),
    pub temperature_validity_c: (f64, f64),
    pub source_label: String,
    /// Constant additive index offset (calibration knob).
    pub delta_n: f64,
    coefficients: BTreeMap<String, f64>,
    coefs: Coefs,
}

impl SellmeierModel {
    pub fn from_file(file: &CoefficientFile) -> Result<Self, MaterialError> {
        let polarization = match file.polarization.as_str() {
            "ordinary" => Polarization::Ordinary,
            "extraordinary" => Polarization::Extraordinary,
            other => return Err(MaterialError::UnknownPolarization(other.to_string())),
        };
        let get = |k: &str| {
            file.coefficients
                .get(k)
                .copied()
                .ok_or_else(|| MaterialError::MissingCoefficient(k.to_string()))
        };
        let coefs = Coefs {
            a: [get("a1")?, get("a2")?, get("a3")?, get("a4")?, get("a5")?, get("a6")?],
            b: [get("b1")?, get("b2")?, get("b3")?, get("b4")?],
            t0: get("t0")?,
            t1: get("t1")?,
        };
        Ok(Self {
            material: file.material.clone(),
            polarization,
            wavelength_validity_um: (file.lambda_range_um[0], file.lambda_range_um[1]),
            temperature_validity_c: (file.temp_range_c[0], file.temp_range_c[1]),
            source_label: file.source.clone(),
            delta_n: 0.0,
            coefficients: file.coefficients.clone(),
            coefs,
        })
    }

    pub fn to_file(&self) -> CoefficientFile {
        CoefficientFile {
            material: self.material.clone(),
            polarization: self.polarization.as_str().to_string(),
            coefficients: self.coefficients.clone(),
            lambda_range_um: [self.wavelength_validity_um.0, self.wavelength_validity_um.1],
            temp_range_c: [self.temperature_validity_c.0, self.temperature_validity_c.1],
            source: self.source_label.clone(),
        }
    }

    pub fn with_delta_n(mut self, delta_n: f64) -> Self {
        self.delta_n = delta_n;
        self
    }

    fn check(&self, lambda_um: f64, t_c: f64) -> Result<(), MaterialError> {
        let (lmin, lmax) = self.wavelength_validity_um;
        if !(lambda_um >= lmin && lambda_um <= lmax) {
            return Err(MaterialError::OutOfValidity {
                quantity: Quantity::WavelengthUm,
                value: lambda_um,
                min: lmin,
                max: lmax,
            });
        }
        let (tmin, tmax) = self.temperature_validity_c;
        if !(t_c >= tmin && t_c <= tmax) {
            return Err(MaterialError::OutOfValidity {
                quantity: Quantity::TemperatureC,
                value: t_c,
                min: tmin,
                max: tmax,
            });
        }
        Ok(())
    }

    fn raw_index(&self, lambda_um: f64, t_c: f64) -> f64 {
        let Coefs { a, b, t0, t1 } = self.coefs;
        let f = (t_c - t0) * (t_c + t1);
        let l2 = lambda_um * lambda_um;
        let uv = a[2] + b[2] * f;
        let n2 = a[0] + b[0] * f + (a[1] + b[1] * f) / (l2 - uv * uv)
            + (a[3] + b[3] * f) / (l2 - a[4] * a[4])
            - a[5] * l2;
        n2.sqrt() + self.delta_n
    }

    /// Refractive index at vacuum wavelength `lambda_nm` and temperature `t_c`.
    pub fn index(&self, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
        let lambda_um = lambda_nm * 1e-3;
        self.check(lambda_um, t_c)?;
        let n = self.raw_index(lambda_um, t_c);
        if !n.is_finite() || n <= 1.0 || n >= 3.0 {
            return Err(MaterialError::NonPhysical(n));
        }
        Ok(n)
    }

    /// Group index n − λ·dn/dλ by central differences, halving the step until
    /// successive estimates agree to 1e-7.
    pub fn group_index(&self, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
        let n = self.index(lambda_nm, t_c)?;
        let mut h = 4.0;
        self.index(lambda_nm - h, t_c)?;
        self.index(lambda_nm + h, t_c)?;
        let estimate = |h: f64| -> Result<f64, MaterialError> {
            let dn = (self.index(lambda_nm + h, t_c)? - self.index(lambda_nm - h, t_c)?) / (2.0 * h);
            Ok(n - lambda_nm * dn)
        };
        let mut prev = estimate(h)?;
        for _ in 0..12 {
            h *= 0.5;
            let next = estimate(h)?;
            if (next - prev).abs() < 1e-7 {
                return Ok(next);
            }
            prev = next;
        }
        Ok(prev)
    }

    /// Thermo-optic coefficient dn/dT in 1/K by central difference.
    pub fn dn_dt(&self, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
        let h = 0.05;
        Ok((self.index(lambda_nm, t_c + h)? - self.index(lambda_nm, t_c - h)?) / (2.0 * h))
    }
}

/// Refractive index of `model` at `lambda_nm` (nm) and `t_c` (°C).
pub fn refractive_index(model: &SellmeierModel, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
    model.index(lambda_nm, t_c)
}

/// Group index of `model` at `lambda_nm` (nm) and `t_c` (°C).
pub fn group_index(model: &SellmeierModel, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
    model.group_index(lambda_nm, t_c)
}

/// Non-dispersive index used for coatings and substrates.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedIndex {
    pub material: String,
    pub n: f64,
    pub source_label: String,
}

/// A database entry.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialModel {
    Sellmeier(SellmeierModel),
    Fixed(FixedIndex),
}

impl MaterialModel {
    /// Dispatches on the `polarization` field: `isotropic` files carry a single `n`.
    pub fn from_file(file: &CoefficientFile) -> Result<Self, MaterialError> {
        if file.polarization == "isotropic" {
            let n = file
                .coefficients
                .get("n")
                .copied()
                .ok_or_else(|| MaterialError::MissingCoefficient("n".into()))?;
            if !(n > 1.0 && n.is_finite()) {
                return Err(MaterialError::NonPhysical(n));
            }
            Ok(MaterialModel::Fixed(FixedIndex {
                material: file.material.clone(),
                n,
                source_label: file.source.clone(),
            }))
        } else {
            Ok(MaterialModel::Sellmeier(SellmeierModel::from_file(file)?))
        }
    }

    pub fn material(&self) -> &str {
        match self {
            MaterialModel::Sellmeier(m) => &m.material,
            MaterialModel::Fixed(f) => &f.material,
        }
    }

    pub fn polarization(&self) -> Option<Polarization> {
        match self {
            MaterialModel::Sellmeier(m) => Some(m.polarization),
            MaterialModel::Fixed(_) => None,
        }
    }

    pub fn index(&self, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
        match self {
            MaterialModel::Sellmeier(m) => m.index(lambda_nm, t_c),
            MaterialModel::Fixed(f) => Ok(f.n),
        }
    }
}

/// Models keyed by (material, polarization); `None` marks an isotropic entry.
#[derive(Debug, Clone, Default)]
pub struct MaterialDatabase {
    entries: BTreeMap<(String, Option<Polarization>), MaterialModel>,
}

impl MaterialDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: MaterialModel) -> Result<(), MaterialError> {
        let key = (model.material().to_string(), model.polarization());
        if self.entries.contains_key(&key) {
            return Err(MaterialError::Duplicate(format!("{} / {:?}", key.0, key.1)));
        }
        self.entries.insert(key, model);
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), MaterialError> {
        let file = CoefficientFile::load(path)?;
        self.insert(MaterialModel::from_file(&file)?)
    }

    pub fn get(&self, material: &str, pol: Option<Polarization>) -> Result<&MaterialModel, MaterialError> {
        self.entries
            .get(&(material.to_string(), pol))
            .ok_or_else(|| MaterialError::NotFound(format!("{material} / {pol:?}")))
    }

    pub fn sellmeier(&self, material: &str, pol: Polarization) -> Result<&SellmeierModel, MaterialError> {
        match self.get(material, Some(pol))? {
            MaterialModel::Sellmeier(m) => Ok(m),
            MaterialModel::Fixed(_) => Err(MaterialError::NotFound(format!("{material} / {pol:?} (dispersive)"))),
        }
    }

    /// Index of a non-dispersive entry.
    pub fn fixed_index(&self, material: &str) -> Result<f64, MaterialError> {
        match self.get(material, None)? {
            MaterialModel::Fixed(f) => Ok(f.n),
            MaterialModel::Sellmeier(_) => Err(MaterialError::NotFound(format!("{material} (fixed)"))),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &(String, Option<Polarization>)> {
        self.entries.keys()
    }
}
