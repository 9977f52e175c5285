//! Whispering-gallery eigenfrequencies of a spheroidal resonator.
//!
//! Resonances solve the asymptotic dispersion relation
//!
//! 2π·R(T)·n(λ, T)·ν/c = m + ζ_q·(m/2)^{1/3} + (p + ½)·√(R/ρ) − P/√(n² − 1) + (3/20)·ζ_q²·(m/2)^{−1/3}
//!
//! where ζ_q = |a_q| is the q-th Airy zero magnitude, P = n for extraordinary
//! and P = 1/n for ordinary polarization, and R(T) = R·(1 + α·(T − 25 °C)).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::airy::airy_zero;
use crate::constants::C;
use crate::material::{MaterialDatabase, MaterialError, Polarization, SellmeierModel};

/// Reference temperature for the major radius, °C.
pub const RADIUS_REFERENCE_C: f64 = 25.0;
/// Smallest azimuthal number for which the asymptotic expansion is used.
pub const MIN_AZIMUTHAL: u32 = 100;

const MAX_ITER: usize = 60;
const NU_TOL_HZ: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Material(#[from] MaterialError),

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("frequency iteration for m={m} did not converge after {iterations} steps")]
    NoConvergence { m: u32, iterations: usize },

    #[error("quality factor must be positive, got {0}")]
    InvalidQ(f64),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Role of a field in the three-wave process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beam {
    Pump,
    Signal,
    Idler,
}

impl Beam {
    pub const ALL: [Beam; 3] = [Beam::Pump, Beam::Signal, Beam::Idler];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolMap {
    pub pump: Polarization,
    pub signal: Polarization,
    pub idler: Polarization,
}

impl PolMap {
    pub fn get(&self, beam: Beam) -> Polarization {
        match beam {
            Beam::Pump => self.pump,
            Beam::Signal => self.signal,
            Beam::Idler => self.idler,
        }
    }
}

impl Default for PolMap {
    fn default() -> Self {
        Self {
            pump: Polarization::Extraordinary,
            signal: Polarization::Ordinary,
            idler: Polarization::Ordinary,
        }
    }
}

/// Resonator geometry as stored in the geometry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorGeometry {
    #[serde(rename = "R_mm")]
    pub r_mm: f64,
    /// Rim curvature radius; defaults to R.
    #[serde(rename = "rho_mm", default, skip_serializing_if = "Option::is_none")]
    pub rho_mm: Option<f64>,
    pub material: String,
    pub pol_map: PolMap,
    #[serde(rename = "alpha_thermal_per_K")]
    pub alpha_thermal_per_k: f64,
    #[serde(rename = "Q_loaded")]
    pub q_loaded: f64,
}

impl ResonatorGeometry {
    pub fn new(r_mm: f64, rho_mm: Option<f64>, material: &str) -> Result<Self, SpectrumError> {
        let g = Self {
            r_mm,
            rho_mm,
            material: material.to_string(),
            pol_map: PolMap::default(),
            alpha_thermal_per_k: 1.54e-5,
            q_loaded: 1.6e7,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn rho(&self) -> f64 {
        self.rho_mm.unwrap_or(self.r_mm)
    }

    pub fn validate(&self) -> Result<(), SpectrumError> {
        let rho = self.rho();
        if !(self.r_mm > 0.0 && self.r_mm.is_finite()) {
            return Err(SpectrumError::InvalidGeometry(format!("R must be positive, got {}", self.r_mm)));
        }
        if !(rho > 0.0 && rho <= self.r_mm) {
            return Err(SpectrumError::InvalidGeometry(format!("need 0 < rho <= R, got rho = {rho}")));
        }
        if !(self.q_loaded > 0.0) {
            return Err(SpectrumError::InvalidQ(self.q_loaded));
        }
        if !self.alpha_thermal_per_k.is_finite() {
            return Err(SpectrumError::InvalidGeometry("thermal expansion must be finite".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SpectrumError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpectrumError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let g: Self = serde_json::from_str(&text)?;
        g.validate()?;
        Ok(g)
    }

    /// Major radius in metres at temperature `t_c`.
    pub fn radius_m(&self, t_c: f64) -> f64 {
        self.r_mm * 1e-3 * (1.0 + self.alpha_thermal_per_k * (t_c - RADIUS_REFERENCE_C))
    }
}

/// WGM label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub m: u32,
    pub q: u32,
    pub p: u32,
    pub polarization: Polarization,
}

impl ModeIndex {
    pub fn new(m: u32, q: u32, p: u32, polarization: Polarization) -> Result<Self, SpectrumError> {
        if m < MIN_AZIMUTHAL {
            return Err(SpectrumError::InvalidMode(format!("m = {m} is below {MIN_AZIMUTHAL}")));
        }
        if q < 1 {
            return Err(SpectrumError::InvalidMode("q starts at 1".into()));
        }
        Ok(Self { m, q, p, polarization })
    }

    pub fn with_m(self, m: u32) -> Result<Self, SpectrumError> {
        Self::new(m, self.q, self.p, self.polarization)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProperties {
    pub frequency: f64,
    pub fsr: f64,
    pub linewidth: f64,
    pub q: f64,
}

/// Geometry plus the two index models and a temperature calibration.
#[derive(Debug, Clone)]
pub struct Resonator {
    pub geometry: ResonatorGeometry,
    pub ordinary: SellmeierModel,
    pub extraordinary: SellmeierModel,
    /// Added to every lab temperature before evaluating the physics.
    pub dt_cal: f64,
}

impl Resonator {
    pub fn new(geometry: ResonatorGeometry, db: &MaterialDatabase) -> Result<Self, SpectrumError> {
        geometry.validate()?;
        let ordinary = db.sellmeier(&geometry.material, Polarization::Ordinary)?.clone();
        let extraordinary = db.sellmeier(&geometry.material, Polarization::Extraordinary)?.clone();
        Ok(Self {
            geometry,
            ordinary,
            extraordinary,
            dt_cal: 0.0,
        })
    }

    pub fn model(&self, pol: Polarization) -> &SellmeierModel {
        match pol {
            Polarization::Ordinary => &self.ordinary,
            Polarization::Extraordinary => &self.extraordinary,
        }
    }

    pub fn model_mut(&mut self, pol: Polarization) -> &mut SellmeierModel {
        match pol {
            Polarization::Ordinary => &mut self.ordinary,
            Polarization::Extraordinary => &mut self.extraordinary,
        }
    }

    /// Temperature seen by the physics for a lab temperature.
    pub fn physical_temperature(&self, t_c: f64) -> f64 {
        t_c + self.dt_cal
    }

    /// Index of a polarization at a lab temperature.
    pub fn index(&self, pol: Polarization, lambda_nm: f64, t_c: f64) -> Result<f64, MaterialError> {
        self.model(pol).index(lambda_nm, self.physical_temperature(t_c))
    }

    pub fn resonance_frequency(&self, mode: &ModeIndex, t_c: f64) -> Result<f64, SpectrumError> {
        resonance_frequency(self, mode, t_c)
    }
}

fn polarization_term(pol: Polarization, n: f64) -> f64 {
    let p = match pol {
        Polarization::Extraordinary => n,
        Polarization::Ordinary => 1.0 / n,
    };
    p / (n * n - 1.0).sqrt()
}

/// Right-hand side of the dispersion relation for a given index.
fn mode_number_rhs(mode: &ModeIndex, sqrt_r_rho: f64, n: f64) -> f64 {
    let z = airy_zero(mode.q);
    let half = mode.m as f64 / 2.0;
    let c13 = half.cbrt();
    mode.m as f64 + z * c13 + (mode.p as f64 + 0.5) * sqrt_r_rho - polarization_term(mode.polarization, n)
        + 0.15 * z * z / c13
}

/// Eigenfrequency in Hz of `mode` at lab temperature `t_c`.
pub fn resonance_frequency(res: &Resonator, mode: &ModeIndex, t_c: f64) -> Result<f64, SpectrumError> {
    if mode.m < MIN_AZIMUTHAL {
        return Err(SpectrumError::InvalidMode(format!("m = {} is below {MIN_AZIMUTHAL}", mode.m)));
    }
    let model = res.model(mode.polarization);
    let tp = res.physical_temperature(t_c);
    let g = &res.geometry;
    let a = 2.0 * std::f64::consts::PI * g.radius_m(tp) / C;
    let sqrt_r_rho = (g.r_mm / g.rho()).sqrt();
    let f = |nu: f64| -> Result<f64, SpectrumError> {
        let n = model.index(C / nu * 1e9, tp)?;
        Ok(a * n * nu - mode_number_rhs(mode, sqrt_r_rho, n))
    };

    // Starting point from a mid-range index guess, refined once.
    let (lmin, lmax) = model.wavelength_validity_um;
    let n_guess = model.index(0.5 * (lmin + lmax) * 1e3, tp)?;
    let mut nu = mode_number_rhs(mode, sqrt_r_rho, n_guess) / (a * n_guess);
    let lambda = (C / nu * 1e9).clamp(lmin * 1e3, lmax * 1e3);
    let n1 = model.index(lambda, tp)?;
    nu = mode_number_rhs(mode, sqrt_r_rho, n1) / (a * n1);

    let h = nu * 1e-6;
    let slope = (f(nu + h)? - f(nu - h)?) / (2.0 * h);
    for _ in 0..MAX_ITER {
        let step = f(nu)? / slope;
        nu -= step;
        if step.abs() < NU_TOL_HZ {
            return Ok(nu);
        }
    }
    Err(SpectrumError::NoConvergence {
        m: mode.m,
        iterations: MAX_ITER,
    })
}

/// Free spectral range ν(m+1) − ν(m) in Hz.
pub fn fsr(res: &Resonator, mode: &ModeIndex, t_c: f64) -> Result<f64, SpectrumError> {
    let next = ModeIndex { m: mode.m + 1, ..*mode };
    Ok(resonance_frequency(res, &next, t_c)? - resonance_frequency(res, mode, t_c)?)
}

/// Temperature slope dν/dT in Hz/K by central difference.
pub fn frequency_slope(res: &Resonator, mode: &ModeIndex, t_c: f64) -> Result<f64, SpectrumError> {
    let h = 0.01;
    Ok((resonance_frequency(res, mode, t_c + h)? - resonance_frequency(res, mode, t_c - h)?) / (2.0 * h))
}

/// Mode with azimuthal number closest in frequency to `nu_target`; ties go to the smaller m.
pub fn nearest_mode(
    res: &Resonator,
    nu_target: f64,
    t_c: f64,
    q: u32,
    p: u32,
    pol: Polarization,
) -> Result<ModeIndex, SpectrumError> {
    let model = res.model(pol);
    let tp = res.physical_temperature(t_c);
    let lambda = C / nu_target * 1e9;
    let n = model.index(lambda, tp)?;
    let a = 2.0 * std::f64::consts::PI * res.geometry.radius_m(tp) / C;
    let guess = (a * n * nu_target - airy_zero(q) * (a * n * nu_target / 2.0).cbrt()).round();
    let mut m = (guess.max(MIN_AZIMUTHAL as f64)) as u32;
    let freq = |m: u32| -> Result<f64, SpectrumError> { resonance_frequency(res, &ModeIndex::new(m, q, p, pol)?, t_c) };
    for _ in 0..20 {
        let nu = freq(m)?;
        let step = freq(m + 1)? - nu;
        let shift = ((nu_target - nu) / step).round() as i64;
        if shift == 0 {
            break;
        }
        m = (m as i64 + shift).max(MIN_AZIMUTHAL as i64) as u32;
    }
    let mut best = m;
    let mut best_det = (freq(m)? - nu_target).abs();
    for cand in [m.saturating_sub(1), m + 1] {
        if cand < MIN_AZIMUTHAL {
            continue;
        }
        let det = (freq(cand)? - nu_target).abs();
        if det < best_det || (det == best_det && cand < best) {
            best = cand;
            best_det = det;
        }
    }
    ModeIndex::new(best, q, p, pol)
}

/// Loaded linewidth κ = ν/Q in Hz.
pub fn linewidth(nu: f64, q: f64) -> Result<f64, SpectrumError> {
    if !(q > 0.0) {
        return Err(SpectrumError::InvalidQ(q));
    }
    Ok(nu / q)
}

pub fn mode_properties(res: &Resonator, mode: &ModeIndex, t_c: f64) -> Result<ModeProperties, SpectrumError> {
    let frequency = resonance_frequency(res, mode, t_c)?;
    let q = res.geometry.q_loaded;
    Ok(ModeProperties {
        frequency,
        fsr: fsr(res, mode, t_c)?,
        linewidth: linewidth(frequency, q)?,
        q,
    })
}
