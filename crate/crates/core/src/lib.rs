//! Models for a triply resonant whispering-gallery parametric photon-pair source:
//! mode spectrum, phase matching and tuning, alkali vapor absorption, and
//! coincidence statistics.

pub mod airy;
pub mod coincidence;
pub mod constants;
pub mod correlations;
pub mod data;
pub mod evanescent;
pub mod fit;
pub mod material;
pub mod phase_matching;
pub mod spectrum;
pub mod vapor;
pub mod voigt;
