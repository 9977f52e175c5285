//! Doppler-broadened alkali D1 absorption in a heated vapor cell.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{AMU, C, K_B, ZERO_CELSIUS};
use crate::voigt::{sigma_from_fwhm, voigt};

#[derive(Debug, Error)]
pub enum VaporError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cell temperature {t_c} °C is outside the vapor-pressure model range [{min}, {max}]")]
    OutOfValidity { t_c: f64, min: f64, max: f64 },

    #[error("spectrum weights sum to {0}, expected 1")]
    Unnormalized(f64),

    #[error("line {line} belongs to {line_element:?}, cell holds {cell_element:?}")]
    WrongElement {
        line: String,
        line_element: Element,
        cell_element: Element,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VaporError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Species {
    Cs133,
    Rb85,
    Rb87,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    Cs,
    Rb,
}

impl Species {
    pub fn element(&self) -> Element {
        match self {
            Species::Cs133 => Element::Cs,
            Species::Rb85 | Species::Rb87 => Element::Rb,
        }
    }
}

/// log10(P / Pa) = A − B / T(K), valid over `valid_C` (°C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct VaporPressureModel {
    pub A: f64,
    pub B: f64,
    pub valid_C: [f64; 2],
}

impl VaporPressureModel {
    pub fn pressure_pa(&self, t_c: f64) -> Result<f64> {
        let [min, max] = self.valid_C;
        if !(t_c >= min && t_c <= max) {
            return Err(VaporError::OutOfValidity { t_c, min, max });
        }
        Ok(10f64.powf(self.A - self.B / (t_c + ZERO_CELSIUS)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFile {
    pub label: String,
    #[serde(rename = "F")]
    pub f: u32,
    #[serde(rename = "F_prime")]
    pub f_prime: u32,
    #[serde(rename = "nu0_THz")]
    pub nu0_thz: f64,
    pub strength: f64,
}

/// Per-species line-data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineFile {
    pub species: Species,
    pub element: Element,
    pub mass_amu: f64,
    /// Isotopic fraction of the element.
    pub abundance: f64,
    #[serde(rename = "Gamma_nat_MHz")]
    pub gamma_nat_mhz: f64,
    pub vapor_pressure: VaporPressureModel,
    pub source: String,
    pub components: Vec<ComponentFile>,
}

impl LineFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| VaporError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let f: Self = serde_json::from_str(&text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.species.element() != self.element {
            return Err(VaporError::InvalidInput(format!("{:?} is not an isotope of {:?}", self.species, self.element)));
        }
        if !(self.gamma_nat_mhz > 0.0) {
            return Err(VaporError::InvalidInput("natural linewidth must be positive".into()));
        }
        if !(self.abundance > 0.0 && self.abundance <= 1.0) {
            return Err(VaporError::InvalidInput("abundance must lie in (0, 1]".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.strength).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(VaporError::InvalidInput(format!("component strengths sum to {total}")));
        }
        Ok(())
    }

    pub fn lines(&self) -> Vec<AtomicLine> {
        self.components
            .iter()
            .map(|c| AtomicLine {
                species: self.species,
                label: c.label.clone(),
                nu0: c.nu0_thz * 1e12,
                gamma_nat: self.gamma_nat_mhz * 1e6,
                strength: c.strength,
                mass_kg: self.mass_amu * AMU,
                abundance: self.abundance,
            })
            .collect()
    }

    /// Component whose label matches, e.g. "D1 F4'-F3".
    pub fn line(&self, label: &str) -> Option<AtomicLine> {
        self.lines().into_iter().find(|l| l.label == label)
    }
}

/// One hyperfine component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicLine {
    pub species: Species,
    pub label: String,
    /// Hz.
    pub nu0: f64,
    /// Natural linewidth (FWHM), Hz.
    pub gamma_nat: f64,
    /// Fraction of the D1 oscillator strength.
    pub strength: f64,
    pub mass_kg: f64,
    pub abundance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaporCell {
    pub element: Element,
    pub length_cm: f64,
    pub temperature_c: f64,
    pub vapor_pressure: VaporPressureModel,
}

impl VaporCell {
    pub fn new(element: Element, length_cm: f64, temperature_c: f64, vapor_pressure: VaporPressureModel) -> Result<Self> {
        let cell = Self {
            element,
            length_cm,
            temperature_c,
            vapor_pressure,
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_cm > 0.0) {
            return Err(VaporError::InvalidInput("cell length must be positive".into()));
        }
        self.vapor_pressure.pressure_pa(self.temperature_c)?;
        Ok(())
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_c + ZERO_CELSIUS
    }
}

/// Doppler FWHM ν₀·√(8 ln2 k_B T / (M c²)) in Hz.
pub fn doppler_fwhm(line: &AtomicLine, t_k: f64) -> Result<f64> {
    if !(t_k > 0.0) {
        return Err(VaporError::InvalidInput("temperature must be positive".into()));
    }
    Ok(line.nu0 * (8.0 * std::f64::consts::LN_2 * K_B * t_k / (line.mass_kg * C * C)).sqrt())
}

/// Total atom number density of the cell's element, m⁻³.
pub fn vapor_density(cell: &VaporCell) -> Result<f64> {
    let p = cell.vapor_pressure.pressure_pa(cell.temperature_c)?;
    Ok(p / (K_B * cell.temperature_k()))
}

/// Integrated cross-section of a component, m²·Hz: strength·λ²·A/(8π) with A = 2πΓ.
pub fn integrated_cross_section(line: &AtomicLine) -> f64 {
    let lambda = C / line.nu0;
    line.strength * lambda * lambda * (2.0 * std::f64::consts::PI * line.gamma_nat) / (8.0 * std::f64::consts::PI)
}

fn optical_depth_fn(cell: &VaporCell, lines: &[AtomicLine]) -> Result<impl Fn(f64) -> f64 + Sync> {
    cell.validate()?;
    for l in lines {
        if l.species.element() != cell.element {
            return Err(VaporError::WrongElement {
                line: l.label.clone(),
                line_element: l.species.element(),
                cell_element: cell.element,
            });
        }
    }
    let n = vapor_density(cell)?;
    let length_m = cell.length_cm * 1e-2;
    let t_k = cell.temperature_k();
    let terms: Vec<(f64, f64, f64, f64)> = lines
        .iter()
        .map(|l| {
            let sigma = sigma_from_fwhm(doppler_fwhm(l, t_k)?);
            Ok((l.nu0, sigma, 0.5 * l.gamma_nat, n * l.abundance * length_m * integrated_cross_section(l)))
        })
        .collect::<Result<_>>()?;
    Ok(move |nu: f64| terms.iter().map(|&(nu0, s, g, k)| k * voigt(nu - nu0, s, g)).sum())
}

/// Optical depth and transmission exp(−OD) on `nu_grid` (Hz).
pub fn absorption_spectrum(cell: &VaporCell, lines: &[AtomicLine], nu_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if nu_grid.iter().any(|x| !x.is_finite()) || nu_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(VaporError::InvalidInput("frequency grid must be finite and sorted".into()));
    }
    let od = optical_depth_fn(cell, lines)?;
    let ods: Vec<f64> = nu_grid.par_iter().map(|&nu| od(nu)).collect();
    let tr = ods.iter().map(|&d| (-d).exp()).collect();
    Ok((ods, tr))
}

/// 1 − Σ w(ν)·T(ν) for a normalized photon spectrum of (ν, weight) pairs.
pub fn absorbed_fraction(cell: &VaporCell, lines: &[AtomicLine], spectrum: &[(f64, f64)]) -> Result<f64> {
    let total: f64 = spectrum.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-9 || spectrum.iter().any(|p| p.1 < 0.0) {
        return Err(VaporError::Unnormalized(total));
    }
    let od = optical_depth_fn(cell, lines)?;
    let transmitted: f64 = spectrum.iter().map(|&(nu, w)| w * (-od(nu)).exp()).sum();
    Ok(1.0 - transmitted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vp() -> VaporPressureModel {
        VaporPressureModel {
            A: 9.17072,
            B: 3830.0,
            valid_C: [28.5, 400.0],
        }
    }

    #[test]
    fn pressure_out_of_range() {
        assert!(matches!(vp().pressure_pa(10.0), Err(VaporError::OutOfValidity { .. })));
    }

    #[test]
    fn unnormalized_weights_rejected() {
        let cell = VaporCell::new(Element::Cs, 5.0, 80.0, vp()).unwrap();
        assert!(matches!(
            absorbed_fraction(&cell, &[], &[(1.0, 0.5)]),
            Err(VaporError::Unnormalized(_))
        ));
    }
}
