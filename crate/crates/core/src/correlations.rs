//! Signal-idler cross-correlation shapes, peak delay and bandwidth conversions.
//!
//! Both shapes are unit-area densities in τ = t_signal − t_idler (seconds);
//! amplitude and background only enter when fitting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad histogram: {0}")]
    Data(String),

    #[error("fit did not converge ({reason}); last iterate {last:?}")]
    FitFailed { reason: String, last: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, CorrelationError>;

/// Relative difference below which τ_f and τ_si are treated as equal.
pub const DEGENERATE_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectPairModel {
    pub tau_si: f64,
    pub amplitude: f64,
    pub background: f64,
}

impl DirectPairModel {
    pub fn new(tau_si: f64, amplitude: f64, background: f64) -> Result<Self> {
        if !(tau_si > 0.0) || amplitude < 0.0 || background < 0.0 {
            return Err(CorrelationError::InvalidParameter(format!(
                "need tau_si > 0, amplitude >= 0, background >= 0 (got {tau_si}, {amplitude}, {background})"
            )));
        }
        Ok(Self {
            tau_si,
            amplitude,
            background,
        })
    }

    pub fn unit(tau_si: f64) -> Result<Self> {
        Self::new(tau_si, 1.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceModel {
    pub tau_si: f64,
    pub tau_f: f64,
    pub amplitude: f64,
    pub background: f64,
}

impl FluorescenceModel {
    pub fn new(tau_si: f64, tau_f: f64, amplitude: f64, background: f64) -> Result<Self> {
        if !(tau_si > 0.0 && tau_f > 0.0) || amplitude < 0.0 || background < 0.0 {
            return Err(CorrelationError::InvalidParameter(format!(
                "need tau_si, tau_f > 0, amplitude, background >= 0 (got {tau_si}, {tau_f}, {amplitude}, {background})"
            )));
        }
        Ok(Self {
            tau_si,
            tau_f,
            amplitude,
            background,
        })
    }

    pub fn unit(tau_si: f64, tau_f: f64) -> Result<Self> {
        Self::new(tau_si, tau_f, 1.0, 0.0)
    }
}

/// e^{−|τ|/τ_si} / (2τ_si).
pub fn g2_direct(tau: f64, model: &DirectPairModel) -> f64 {
    0.5 * (-tau.abs() / model.tau_si).exp() / model.tau_si
}

/// (e^{−τ/a} − e^{−τ/b})/(a − b) for τ ≥ 0, with the a = b limit τ·e^{−τ/a}/a².
fn exp_difference(tau: f64, a: f64, b: f64) -> f64 {
    if ((a - b) / a).abs() < DEGENERATE_REL {
        let m = 0.5 * (a + b);
        return tau * (-tau / m).exp() / (m * m);
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    -(-tau / hi).exp() * (-tau * (hi - lo) / (hi * lo)).exp_m1() / (hi - lo)
}

/// Heralded-fluorescence shape: the direct shape convolved with a one-sided
/// exponential of mean τ_f on the signal side.
pub fn g2_fluorescence(tau: f64, model: &FluorescenceModel) -> f64 {
    let (a, b) = (model.tau_si, model.tau_f);
    if tau < 0.0 {
        0.5 * (tau / a).exp() / (a + b)
    } else {
        0.5 * ((-tau / b).exp() / (a + b) + exp_difference(tau, a, b))
    }
}

/// Cumulative distribution of the direct shape.
pub fn cdf_direct(tau: f64, tau_si: f64) -> f64 {
    if tau < 0.0 {
        0.5 * (tau / tau_si).exp()
    } else {
        1.0 - 0.5 * (-tau / tau_si).exp()
    }
}

/// Survival 1 − F(τ) of the fluorescence shape for τ ≥ 0.
fn survival_fluorescence(tau: f64, a: f64, b: f64) -> f64 {
    // (a e^{−τ/a} − b e^{−τ/b})/(a − b) = e^{−τ/a} + b·D(τ)
    0.5 * (b * (-tau / b).exp() / (a + b) + (-tau / a).exp() + b * exp_difference(tau, a, b))
}

/// Cumulative distribution of the fluorescence shape.
pub fn cdf_fluorescence(tau: f64, tau_si: f64, tau_f: f64) -> f64 {
    if tau < 0.0 {
        0.5 * tau_si * (tau / tau_si).exp() / (tau_f + tau_si)
    } else {
        1.0 - survival_fluorescence(tau, tau_si, tau_f)
    }
}

/// Position of the fluorescence maximum: τ_si·τ_f/(τ_si − τ_f)·ln(2τ_si/(τ_si + τ_f)).
pub fn peak_delay(tau_si: f64, tau_f: f64) -> Result<f64> {
    if !(tau_si > 0.0) || tau_f < 0.0 {
        return Err(CorrelationError::InvalidParameter("need tau_si > 0 and tau_f >= 0".into()));
    }
    if tau_f == 0.0 {
        return Ok(0.0);
    }
    let rel = (tau_si - tau_f) / tau_si;
    if rel.abs() < DEGENERATE_REL {
        return Ok(0.5 * tau_si);
    }
    // ln(2a/(a+b)) = ln1p((a−b)/(a+b))
    Ok(tau_si * tau_f / (tau_si - tau_f) * ((tau_si - tau_f) / (tau_si + tau_f)).ln_1p())
}

/// γ = 1/(2πτ).
pub fn bandwidth_from_decay(tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(CorrelationError::InvalidParameter(format!("decay time must be positive, got {tau}")));
    }
    Ok(1.0 / (2.0 * std::f64::consts::PI * tau))
}

/// τ = 1/(2πγ).
pub fn decay_from_bandwidth(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(CorrelationError::InvalidParameter(format!("bandwidth must be positive, got {gamma}")));
    }
    Ok(1.0 / (2.0 * std::f64::consts::PI * gamma))
}

/// (η_a, η_b) = (C/S_b, C/S_a).
pub fn klyshko_efficiency(singles_a: f64, singles_b: f64, coincidences: f64) -> Result<(f64, f64)> {
    if !(singles_a > 0.0 && singles_b > 0.0) {
        return Err(CorrelationError::InvalidParameter("singles rates must be positive".into()));
    }
    if coincidences < 0.0 {
        return Err(CorrelationError::InvalidParameter("coincidence rate must be non-negative".into()));
    }
    Ok((coincidences / singles_b, coincidences / singles_a))
}
