//! Resonance shifts from a dielectric substrate approaching the rim.
//!
//! Each beam shifts by σ·C·exp(−d/ℓ) where σ = ±1 is a global sign
//! convention, C > 0 the contact shift and ℓ the evanescent decay length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::nm_from_hz;
use crate::phase_matching::{PhaseMatchError, PhaseMatchSolution};
use crate::spectrum::{resonance_frequency, Beam, Resonator, SpectrumError};

#[derive(Debug, Error)]
pub enum TuningError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),

    #[error(transparent)]
    PhaseMatch(#[from] PhaseMatchError),

    #[error("invalid substrate: {0}")]
    InvalidSpec(String),

    #[error("distance must be non-negative, got {0} nm")]
    NegativeDistance(f64),

    #[error("target {target} Hz is out of reach; reachable signal shifts lie in [{min}, {max}] Hz (max |shift| {max_abs} Hz)")]
    Unreachable {
        target: f64,
        min: f64,
        max: f64,
        max_abs: f64,
    },

    #[error("phase matching lost while re-solving temperature")]
    NoRoot,
}

pub type Result<T> = std::result::Result<T, TuningError>;

/// One value per beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamTriple {
    pub pump: f64,
    pub signal: f64,
    pub idler: f64,
}

impl BeamTriple {
    pub fn get(&self, beam: Beam) -> f64 {
        match beam {
            Beam::Pump => self.pump,
            Beam::Signal => self.signal,
            Beam::Idler => self.idler,
        }
    }

    fn map(&self, f: impl Fn(Beam, f64) -> f64) -> Self {
        Self {
            pump: f(Beam::Pump, self.pump),
            signal: f(Beam::Signal, self.signal),
            idler: f(Beam::Idler, self.idler),
        }
    }
}

/// Substrate-to-rim distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gap {
    /// Substrate fully withdrawn: no shift.
    Retracted,
    Nm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateSpec {
    pub n_substrate: f64,
    /// Shift magnitude at contact, Hz.
    pub contact_shift_hz: BeamTriple,
    pub decay_length_nm: BeamTriple,
    /// Sign applied to every shift; −1 pulls resonances down.
    pub sign: f64,
}

/// Decay length λ/(4π·√(n² − 1)) in nm.
pub fn evanescent_decay_length(lambda_nm: f64, n: f64) -> f64 {
    lambda_nm / (4.0 * std::f64::consts::PI * (n * n - 1.0).sqrt())
}

fn beam_frequency(sol: &PhaseMatchSolution, beam: Beam) -> f64 {
    match beam {
        Beam::Pump => sol.nu_p,
        Beam::Signal => sol.nu_s,
        Beam::Idler => sol.nu_i,
    }
}

fn beam_index(res: &Resonator, sol: &PhaseMatchSolution, beam: Beam) -> Result<f64> {
    let mode = match beam {
        Beam::Pump => sol.channel.pump(),
        Beam::Signal => sol.channel.signal(),
        Beam::Idler => sol.channel.idler(),
    };
    Ok(res
        .index(mode.polarization, nm_from_hz(beam_frequency(sol, beam)), sol.t_c)
        .map_err(SpectrumError::from)?)
}

impl SubstrateSpec {
    /// Checks positivity and that the substrate index stays below the resonator
    /// index at all three wavelengths of `sol`.
    pub fn validate(&self, res: &Resonator, sol: &PhaseMatchSolution) -> Result<()> {
        if !(self.n_substrate > 1.0) {
            return Err(TuningError::InvalidSpec(format!("n_substrate = {} must exceed 1", self.n_substrate)));
        }
        for beam in Beam::ALL {
            let n = beam_index(res, sol, beam)?;
            if self.n_substrate >= n {
                return Err(TuningError::InvalidSpec(format!(
                    "n_substrate = {} >= resonator index {n} for the {beam:?} beam",
                    self.n_substrate
                )));
            }
            if !(self.decay_length_nm.get(beam) > 0.0) {
                return Err(TuningError::InvalidSpec(format!("{beam:?} decay length must be positive")));
            }
            if !(self.contact_shift_hz.get(beam) > 0.0) {
                return Err(TuningError::InvalidSpec(format!("{beam:?} contact shift must be positive")));
            }
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(TuningError::InvalidSpec(format!("sign must be ±1, got {}", self.sign)));
        }
        Ok(())
    }

    /// Spec with decay lengths from the beam indices and contact shifts
    /// proportional to the beam frequencies, scaled so the actuator sweep moves
    /// the signal by `sweep_hz`.
    pub fn default_for(
        res: &Resonator,
        sol: &PhaseMatchSolution,
        n_substrate: f64,
        actuator: &ActuatorCalibration,
        sweep_hz: f64,
        sign: f64,
    ) -> Result<Self> {
        let decay = BeamTriple {
            pump: evanescent_decay_length(sol.lambda_p_nm, beam_index(res, sol, Beam::Pump)?),
            signal: evanescent_decay_length(sol.lambda_s_nm, beam_index(res, sol, Beam::Signal)?),
            idler: evanescent_decay_length(sol.lambda_i_nm, beam_index(res, sol, Beam::Idler)?),
        };
        let freqs = BeamTriple {
            pump: sol.nu_p,
            signal: sol.nu_s,
            idler: sol.nu_i,
        };
        let mut eps = 1e-6;
        let mut spec = Self {
            n_substrate,
            contact_shift_hz: freqs.map(|_, nu| eps * nu),
            decay_length_nm: decay,
            sign,
        };
        spec.validate(res, sol)?;
        for _ in 0..4 {
            let (a, b) = sweep_ends(res, sol, &spec, actuator)?;
            let span = (b - a).abs();
            if span == 0.0 {
                return Err(TuningError::InvalidSpec("actuator sweep produces no shift".into()));
            }
            eps *= sweep_hz / span;
            spec.contact_shift_hz = freqs.map(|_, nu| eps * nu);
            if ((span - sweep_hz) / sweep_hz).abs() < 1e-6 {
                break;
            }
        }
        Ok(spec)
    }
}

/// Signed shift of `beam` at gap `d`.
pub fn mode_shift(spec: &SubstrateSpec, beam: Beam, d: Gap) -> Result<f64> {
    match d {
        Gap::Retracted => Ok(0.0),
        Gap::Nm(x) if x < 0.0 || x.is_nan() => Err(TuningError::NegativeDistance(x)),
        Gap::Nm(x) => Ok(spec.sign * spec.contact_shift_hz.get(beam) * (-x / spec.decay_length_nm.get(beam)).exp()),
    }
}

/// δν_s = δν_p − δν_i.
pub fn signal_shift(dnu_p: f64, dnu_i: f64) -> f64 {
    dnu_p - dnu_i
}

/// Piezo actuator: d(V) = gap_at_vmin − nm_per_volt·(V − V_min).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorCalibration {
    pub nm_per_volt: f64,
    pub voltage_range: (f64, f64),
    pub gap_at_vmin_nm: f64,
}

impl Default for ActuatorCalibration {
    fn default() -> Self {
        Self {
            nm_per_volt: 15.0,
            voltage_range: (0.0, 20.0),
            gap_at_vmin_nm: 400.0,
        }
    }
}

impl ActuatorCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.nm_per_volt > 0.0) {
            return Err(TuningError::InvalidSpec("nm_per_volt must be positive".into()));
        }
        let (a, b) = self.voltage_range;
        if !(b > a) {
            return Err(TuningError::InvalidSpec("voltage range must be increasing".into()));
        }
        if self.gap(b) < 0.0 {
            return Err(TuningError::InvalidSpec("actuator range drives the substrate through the rim".into()));
        }
        Ok(())
    }

    pub fn gap(&self, v: f64) -> f64 {
        self.gap_at_vmin_nm - self.nm_per_volt * (v - self.voltage_range.0)
    }

    pub fn voltage(&self, d_nm: f64) -> f64 {
        self.voltage_range.0 + (self.gap_at_vmin_nm - d_nm) / self.nm_per_volt
    }
}

/// Operating point after moving the substrate and re-establishing phase matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningPlan {
    pub d: Gap,
    pub voltage: Option<f64>,
    pub dt_c: f64,
    /// Pump-laser change needed to follow the pump mode (substrate plus thermal).
    pub dnu_p: f64,
    pub dnu_i: f64,
    pub dnu_s: f64,
}

impl TuningPlan {
    pub fn d_nm(&self) -> Option<f64> {
        match self.d {
            Gap::Retracted => None,
            Gap::Nm(x) => Some(x),
        }
    }
}

/// Temperature re-solve with shifted modes; returns the plan for gap `d`.
pub fn shifted_operating_point(res: &Resonator, sol: &PhaseMatchSolution, spec: &SubstrateSpec, d: Gap) -> Result<TuningPlan> {
    let dp = mode_shift(spec, Beam::Pump, d)?;
    let ds = mode_shift(spec, Beam::Signal, d)?;
    let di = mode_shift(spec, Beam::Idler, d)?;
    let ch = &sol.channel;
    let freqs = |t: f64| -> Result<(f64, f64, f64)> {
        Ok((
            resonance_frequency(res, &ch.pump(), t)? + dp,
            resonance_frequency(res, &ch.signal(), t)? + ds,
            resonance_frequency(res, &ch.idler(), t)? + di,
        ))
    };
    let r = |t: f64| -> Result<f64> {
        let (p, s, i) = freqs(t)?;
        Ok(p - s - i)
    };
    let h = 1e-3;
    let slope = (r(sol.t_c + h)? - r(sol.t_c - h)?) / (2.0 * h);
    let mut t = sol.t_c;
    let mut converged = false;
    for _ in 0..50 {
        let rv = r(t)?;
        if rv.abs() < 10.0 {
            converged = true;
            break;
        }
        t -= rv / slope;
        if (t - sol.t_c).abs() > 5.0 {
            return Err(TuningError::NoRoot);
        }
    }
    if !converged {
        return Err(TuningError::NoRoot);
    }
    let (p, s, i) = freqs(t)?;
    let voltage = None;
    Ok(TuningPlan {
        d,
        voltage,
        dt_c: t - sol.t_c,
        dnu_p: p - sol.nu_p,
        dnu_i: i - sol.nu_i,
        dnu_s: s - sol.nu_s,
    })
}

fn sweep_ends(res: &Resonator, sol: &PhaseMatchSolution, spec: &SubstrateSpec, cal: &ActuatorCalibration) -> Result<(f64, f64)> {
    let a = shifted_operating_point(res, sol, spec, Gap::Nm(cal.gap(cal.voltage_range.0)))?;
    let b = shifted_operating_point(res, sol, spec, Gap::Nm(cal.gap(cal.voltage_range.1)))?;
    Ok((a.dnu_s, b.dnu_s))
}

/// Signal shift at actuator voltage `v`.
pub fn signal_shift_at_voltage(
    res: &Resonator,
    sol: &PhaseMatchSolution,
    spec: &SubstrateSpec,
    cal: &ActuatorCalibration,
    v: f64,
) -> Result<f64> {
    Ok(shifted_operating_point(res, sol, spec, Gap::Nm(cal.gap(v)))?.dnu_s)
}

/// Finds the gap (and voltage) giving a signal shift of `target_hz`, with the
/// matching temperature change and pump-laser offset.
pub fn plan_continuous_tune(
    res: &Resonator,
    sol: &PhaseMatchSolution,
    spec: &SubstrateSpec,
    cal: &ActuatorCalibration,
    target_hz: f64,
) -> Result<TuningPlan> {
    spec.validate(res, sol)?;
    cal.validate()?;
    if target_hz == 0.0 {
        return Ok(TuningPlan {
            d: Gap::Retracted,
            voltage: None,
            dt_c: 0.0,
            dnu_p: 0.0,
            dnu_i: 0.0,
            dnu_s: 0.0,
        });
    }
    let (v0, v1) = cal.voltage_range;
    let (s0, s1) = sweep_ends(res, sol, spec, cal)?;
    let (lo, hi) = (s0.min(s1), s0.max(s1));
    if !(target_hz >= lo && target_hz <= hi) {
        return Err(TuningError::Unreachable {
            target: target_hz,
            min: lo,
            max: hi,
            max_abs: lo.abs().max(hi.abs()),
        });
    }
    let (mut a, mut fa) = (v0, s0 - target_hz);
    let mut b = v1;
    let mut best = shifted_operating_point(res, sol, spec, Gap::Nm(cal.gap(v0)))?;
    let mut best_v = v0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let plan = shifted_operating_point(res, sol, spec, Gap::Nm(cal.gap(m)))?;
        let fm = plan.dnu_s - target_hz;
        if fm.abs() < (best.dnu_s - target_hz).abs() {
            best = plan;
            best_v = m;
        }
        if fm.abs() < 1e3 || (b - a) < 1e-12 {
            break;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    best.voltage = Some(best_v);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SubstrateSpec {
        SubstrateSpec {
            n_substrate: 2.03,
            contact_shift_hz: BeamTriple {
                pump: 3e8,
                signal: 2e8,
                idler: 1e8,
            },
            decay_length_nm: BeamTriple {
                pump: 20.0,
                signal: 35.0,
                idler: 50.0,
            },
            sign: 1.0,
        }
    }

    #[test]
    fn contact_and_tail() {
        let s = spec();
        assert_eq!(mode_shift(&s, Beam::Pump, Gap::Nm(0.0)).unwrap(), 3e8);
        assert_eq!(mode_shift(&s, Beam::Pump, Gap::Retracted).unwrap(), 0.0);
        assert!(mode_shift(&s, Beam::Idler, Gap::Nm(1000.0)).unwrap() < 1e-8 * 1e8);
        assert!(matches!(mode_shift(&s, Beam::Pump, Gap::Nm(-1.0)), Err(TuningError::NegativeDistance(_))));
    }

    #[test]
    fn signal_shift_arithmetic() {
        assert_eq!(signal_shift(300e6, 100e6), 200e6);
        assert_eq!(signal_shift(5.0, 5.0), 0.0);
    }

    #[test]
    fn actuator_inverse() {
        let c = ActuatorCalibration::default();
        for v in [0.0, 3.3, 20.0] {
            assert!((c.voltage(c.gap(v)) - v).abs() < 1e-12);
        }
        assert_eq!(c.gap(1.0), 385.0);
    }
}
