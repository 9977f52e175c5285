//! Physical constants (SI, CODATA 2018 exact values where defined).

/// Speed of light in vacuum, m/s.
pub const C: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Zero of the Celsius scale, K.
pub const ZERO_CELSIUS: f64 = 273.15;

/// Vacuum wavelength in nm for a frequency in Hz.
pub fn nm_from_hz(nu: f64) -> f64 {
    C / nu * 1e9
}

/// Frequency in Hz for a vacuum wavelength in nm.
pub fn hz_from_nm(lambda_nm: f64) -> f64 {
    C / (lambda_nm * 1e-9)
}
