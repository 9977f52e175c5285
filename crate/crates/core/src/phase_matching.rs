//! Energy and angular-momentum matching among pump, signal and idler modes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{hz_from_nm, nm_from_hz};
use crate::material::Polarization;
use crate::spectrum::{frequency_slope, nearest_mode, resonance_frequency, ModeIndex, Resonator, SpectrumError};

#[derive(Debug, Error)]
pub enum PhaseMatchError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("no phase-matched step in direction {direction} within ±{window_c} °C")]
    StepNotFound { direction: i32, window_c: f64 },

    #[error("calibration offset {value} °C exceeds the ±{limit} °C sanity bound")]
    CalibrationBound { value: f64, limit: f64 },

    #[error("calibration did not settle: {0}")]
    Calibration(String),

    #[error("channel budget exceeded: {count} candidates > {limit}")]
    Budget { count: usize, limit: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, PhaseMatchError>;

/// Bound on |ΔT_cal|, °C.
pub const CALIBRATION_BOUND_C: f64 = 20.0;

/// Pump, signal and idler modes with m_p = m_s + m_i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConversionChannel {
    pump: ModeIndex,
    signal: ModeIndex,
    idler: ModeIndex,
}

impl ConversionChannel {
    /// Type-I channel: extraordinary pump, ordinary signal and idler.
    pub fn new(pump: ModeIndex, signal: ModeIndex, idler: ModeIndex) -> Result<Self> {
        if pump.m != signal.m + idler.m {
            return Err(PhaseMatchError::InvalidChannel(format!(
                "m_p = {} but m_s + m_i = {}",
                pump.m,
                signal.m + idler.m
            )));
        }
        if pump.polarization != Polarization::Extraordinary
            || signal.polarization != Polarization::Ordinary
            || idler.polarization != Polarization::Ordinary
        {
            return Err(PhaseMatchError::InvalidChannel("expected e -> o + o".into()));
        }
        Ok(Self { pump, signal, idler })
    }

    /// Builds the channel from m_p, m_s and a family; m_i follows.
    pub fn from_family(m_p: u32, m_s: u32, family: &Family) -> Result<Self> {
        if m_s >= m_p {
            return Err(PhaseMatchError::InvalidChannel(format!("m_s = {m_s} >= m_p = {m_p}")));
        }
        let pump = ModeIndex::new(m_p, family.q_p, 0, Polarization::Extraordinary)?;
        let signal = ModeIndex::new(m_s, family.q_s, family.p_s, Polarization::Ordinary)?;
        let idler = ModeIndex::new(m_p - m_s, family.q_i, family.p_i, Polarization::Ordinary)?;
        Self::new(pump, signal, idler)
    }

    pub fn pump(&self) -> ModeIndex {
        self.pump
    }
    pub fn signal(&self) -> ModeIndex {
        self.signal
    }
    pub fn idler(&self) -> ModeIndex {
        self.idler
    }

    pub fn family(&self) -> Family {
        Family {
            q_p: self.pump.q,
            q_s: self.signal.q,
            q_i: self.idler.q,
            p_s: self.signal.p,
            p_i: self.idler.p,
        }
    }

    /// Same modes with the signal and idler roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pump: self.pump,
            signal: self.idler,
            idler: self.signal,
        }
    }

    fn shifted(&self, dm_p: i64, dm_s: i64, dm_i: i64) -> Result<Self> {
        let sh = |mode: ModeIndex, d: i64| -> Result<ModeIndex> {
            let m = mode.m as i64 + d;
            if m < 1 {
                return Err(PhaseMatchError::InvalidChannel("mode number underflow".into()));
            }
            Ok(mode.with_m(m as u32)?)
        };
        Self::new(sh(self.pump, dm_p)?, sh(self.signal, dm_s)?, sh(self.idler, dm_i)?)
    }
}

/// Radial and angular numbers shared by a branch of solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Family {
    pub q_p: u32,
    pub q_s: u32,
    pub q_i: u32,
    pub p_s: u32,
    pub p_i: u32,
}

impl Family {
    pub const FUNDAMENTAL: Family = Family {
        q_p: 1,
        q_s: 1,
        q_i: 1,
        p_s: 0,
        p_i: 0,
    };

    pub fn new(q_s: u32, q_i: u32, p_s: u32, p_i: u32) -> Self {
        Self {
            q_p: 1,
            q_s,
            q_i,
            p_s,
            p_i,
        }
    }

    pub fn label(&self) -> String {
        format!("{}{}{}-{}{}", self.q_p, self.q_s, self.q_i, self.p_s, self.p_i)
    }
}

/// How the pump frequency is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PumpDrive {
    /// Laser locked to the channel's pump mode: ν_p = ν(m_p, T).
    Locked,
    /// Laser near `nu` locked to whichever pump mode is nearest; a channel
    /// only counts while its pump mode is that nearest mode.
    Nearest(f64),
    /// Fixed pump frequency, no resonance condition on the pump.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseMatchSolution {
    pub channel: ConversionChannel,
    pub t_c: f64,
    pub nu_p: f64,
    pub nu_s: f64,
    pub nu_i: f64,
    pub lambda_p_nm: f64,
    pub lambda_s_nm: f64,
    pub lambda_i_nm: f64,
    /// ν_p − ν_s − ν_i, Hz.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub grid_step_c: f64,
    pub residual_tol_hz: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid_step_c: 0.01,
            residual_tol_hz: 1e6,
        }
    }
}

/// ν_p − ν_s(T) − ν_i(T); positive when the pump photon carries more energy than the pair.
pub fn energy_residual(res: &Resonator, channel: &ConversionChannel, t_c: f64, nu_p: f64) -> Result<f64> {
    let nu_s = resonance_frequency(res, &channel.signal, t_c)?;
    let nu_i = resonance_frequency(res, &channel.idler, t_c)?;
    Ok(nu_p - (nu_s + nu_i))
}

/// Residual with the pump at its own mode frequency.
pub fn locked_residual(res: &Resonator, channel: &ConversionChannel, t_c: f64) -> Result<f64> {
    let nu_p = resonance_frequency(res, &channel.pump, t_c)?;
    energy_residual(res, channel, t_c, nu_p)
}

fn drive_residual(res: &Resonator, channel: &ConversionChannel, drive: PumpDrive, t_c: f64) -> Result<f64> {
    match drive {
        PumpDrive::Fixed(nu) => energy_residual(res, channel, t_c, nu),
        PumpDrive::Locked | PumpDrive::Nearest(_) => locked_residual(res, channel, t_c),
    }
}

fn package(res: &Resonator, channel: &ConversionChannel, drive: PumpDrive, t_c: f64) -> Result<PhaseMatchSolution> {
    let nu_p = match drive {
        PumpDrive::Fixed(nu) => nu,
        _ => resonance_frequency(res, &channel.pump, t_c)?,
    };
    let nu_s = resonance_frequency(res, &channel.signal, t_c)?;
    let nu_i = resonance_frequency(res, &channel.idler, t_c)?;
    Ok(PhaseMatchSolution {
        channel: *channel,
        t_c,
        nu_p,
        nu_s,
        nu_i,
        lambda_p_nm: nm_from_hz(nu_p),
        lambda_s_nm: nm_from_hz(nu_s),
        lambda_i_nm: nm_from_hz(nu_i),
        residual: nu_p - (nu_s + nu_i),
    })
}

/// Temperature interval (lo, hi] on which `pump` is the mode nearest `nu_laser`,
/// clipped to `range`. Resonances fall with temperature, so the interval is contiguous.
pub fn pump_window(res: &Resonator, pump: &ModeIndex, nu_laser: f64, range: (f64, f64)) -> Result<Option<(f64, f64)>> {
    // g_m(T) = (ν_m + ν_{m+1})/2 − ν_L is decreasing in T; m is nearest on (T*(m−1), T*(m)].
    let g = |m: u32, t: f64| -> Result<f64> {
        let a = resonance_frequency(res, &pump.with_m(m)?, t)?;
        let b = resonance_frequency(res, &pump.with_m(m + 1)?, t)?;
        Ok(0.5 * (a + b) - nu_laser)
    };
    let crossing = |m: u32| -> Result<Option<f64>> {
        let (mut lo, mut hi) = range;
        let glo = g(m, lo)?;
        let ghi = g(m, hi)?;
        if glo < 0.0 {
            return Ok(Some(f64::NEG_INFINITY));
        }
        if ghi >= 0.0 {
            return Ok(Some(f64::INFINITY));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(m, mid)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        Ok(Some(lo))
    };
    let upper = crossing(pump.m)?.unwrap();
    let lower = crossing(pump.m - 1)?.unwrap();
    let lo = lower.max(range.0);
    let hi = upper.min(range.1);
    if hi <= lo || hi < range.0 || lo > range.1 {
        return Ok(None);
    }
    Ok(Some((lo, hi)))
}

fn bisect(
    f: &dyn Fn(f64) -> Result<f64>,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut best = (a, fa);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm.abs() < best.1.abs() {
            best = (m, fm);
        }
        if fm.abs() < tol || (b - a) < 1e-12 {
            return Ok((m, fm));
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(best)
}

/// All roots of `f` on [a, b]: grid of at most `step` spacing, then bisection.
fn grid_roots(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, step: f64, tol: f64) -> Result<Vec<(f64, f64)>> {
    let n = (((b - a) / step).ceil() as usize).max(1);
    let mut out = Vec::new();
    let mut t0 = a;
    let mut f0 = f(a)?;
    if f0 == 0.0 {
        out.push((a, 0.0));
    }
    for k in 1..=n {
        let t1 = if k == n { b } else { a + (b - a) * k as f64 / n as f64 };
        let f1 = f(t1)?;
        if f1 == 0.0 {
            out.push((t1, 0.0));
        } else if f0 != 0.0 && (f0 > 0.0) != (f1 > 0.0) {
            out.push(bisect(f, t0, f0, t1, tol)?);
        }
        t0 = t1;
        f0 = f1;
    }
    Ok(out)
}

/// Roots of the channel's residual in `range`, packaged as solutions sorted by T.
pub fn solve_temperature(
    res: &Resonator,
    channel: &ConversionChannel,
    drive: PumpDrive,
    range: (f64, f64),
    opts: &SolverOptions,
) -> Result<Vec<PhaseMatchSolution>> {
    if !(range.1 > range.0) || !(opts.grid_step_c > 0.0) {
        return Err(PhaseMatchError::InvalidInput(format!("bad range {range:?} or grid step")));
    }
    let (a, b) = match drive {
        PumpDrive::Nearest(nu_l) => match pump_window(res, &channel.pump, nu_l, range)? {
            Some(w) => w,
            None => return Ok(Vec::new()),
        },
        _ => range,
    };
    let f = |t: f64| drive_residual(res, channel, drive, t);
    let roots = grid_roots(&f, a, b, opts.grid_step_c, opts.residual_tol_hz)?;
    roots.into_iter().map(|(t, _)| package(res, channel, drive, t)).collect()
}

/// Bounds for a channel scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBounds {
    pub q_max: u32,
    pub p_max: u32,
    /// Inclusive signal azimuthal range.
    pub m_s_window: (u32, u32),
    #[serde(default = "default_budget")]
    pub max_candidates: usize,
}

fn default_budget() -> usize {
    2_000_000
}

impl ScanBounds {
    pub fn families(&self) -> Vec<Family> {
        let mut v = Vec::new();
        for q_s in 1..=self.q_max {
            for q_i in 1..=self.q_max {
                for p_s in 0..=self.p_max {
                    for p_i in 0..=self.p_max {
                        v.push(Family::new(q_s, q_i, p_s, p_i));
                    }
                }
            }
        }
        v
    }
}

/// Signal azimuthal range covering vacuum wavelengths `lambda_nm` at `t_c` for q = 1, p = 0.
pub fn m_s_window_for(res: &Resonator, lambda_nm: (f64, f64), t_c: f64) -> Result<(u32, u32)> {
    let a = nearest_mode(res, hz_from_nm(lambda_nm.1), t_c, 1, 0, Polarization::Ordinary)?;
    let b = nearest_mode(res, hz_from_nm(lambda_nm.0), t_c, 1, 0, Polarization::Ordinary)?;
    Ok((a.m.min(b.m), a.m.max(b.m)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningCurve {
    pub family: Family,
    /// Solutions sorted by temperature.
    pub solutions: Vec<PhaseMatchSolution>,
}

impl TuningCurve {
    /// (T, λ_s, λ_i) triples.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        self.solutions.iter().map(|s| (s.t_c, s.lambda_s_nm, s.lambda_i_nm)).collect()
    }
}

/// Successive pump modes and their nearest-to-laser windows across `range`.
pub fn pump_windows(res: &Resonator, nu_laser: f64, q_p: u32, range: (f64, f64)) -> Result<Vec<(ModeIndex, (f64, f64))>> {
    let first = nearest_mode(res, nu_laser, range.0, q_p, 0, Polarization::Extraordinary)?;
    let mut out = Vec::new();
    let mut m = first;
    loop {
        match pump_window(res, &m, nu_laser, range)? {
            Some(w) => {
                let done = w.1 >= range.1;
                out.push((m, w));
                if done {
                    break;
                }
            }
            None => {
                if !out.is_empty() {
                    break;
                }
            }
        }
        m = m.with_m(m.m + 1)?;
        if out.len() > 1_000_000 {
            return Err(PhaseMatchError::Budget {
                count: out.len(),
                limit: 1_000_000,
            });
        }
    }
    Ok(out)
}

/// Interval of m_s in [lo, hi] with r(m_s) ≤ 0 for a function convex in m_s.
fn nonpositive_interval(f: &dyn Fn(u32) -> Result<f64>, lo: u32, hi: u32) -> Result<Option<(u32, u32)>> {
    // Argmin: first m with f(m+1) − f(m) ≥ 0.
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if f(mid + 1)? - f(mid)? >= 0.0 {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let arg = a;
    if f(arg)? > 0.0 {
        return Ok(None);
    }
    // Left edge: smallest m in [lo, arg] with f ≤ 0 (f decreasing there).
    let (mut a, mut b) = (lo, arg);
    while a < b {
        let mid = a + (b - a) / 2;
        if f(mid)? <= 0.0 {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let left = a;
    // Right edge: largest m in [arg, hi] with f ≤ 0 (f increasing there).
    let (mut a, mut b) = (arg, hi);
    while a < b {
        let mid = a + (b - a).div_ceil(2);
        if f(mid)? <= 0.0 {
            a = mid;
        } else {
            b = mid - 1;
        }
    }
    Ok(Some((left, a)))
}

fn interval_members(iv: Option<(u32, u32)>) -> std::ops::RangeInclusive<u32> {
    match iv {
        Some((a, b)) => a..=b,
        #[allow(clippy::reversed_empty_ranges)]
        None => 1..=0,
    }
}

fn candidates_in_window(
    res: &Resonator,
    pump: &ModeIndex,
    family: &Family,
    window: (f64, f64),
    ms: (u32, u32),
) -> Result<Vec<u32>> {
    let hi = ms.1.min(pump.m.saturating_sub(crate::spectrum::MIN_AZIMUTHAL));
    let lo = ms.0.max(crate::spectrum::MIN_AZIMUTHAL);
    if lo > hi {
        return Ok(Vec::new());
    }
    let side = |t: f64| -> Result<Option<(u32, u32)>> {
        let nu_p = resonance_frequency(res, pump, t)?;
        let f = |m_s: u32| -> Result<f64> {
            let ch = ConversionChannel::from_family(pump.m, m_s, family)?;
            energy_residual(res, &ch, t, nu_p)
        };
        nonpositive_interval(&f, lo, hi)
    };
    let sa = side(window.0)?;
    let sb = side(window.1)?;
    let in_iv = |iv: Option<(u32, u32)>, m: u32| iv.is_some_and(|(a, b)| m >= a && m <= b);
    let mut out: Vec<u32> = interval_members(sa).filter(|&m| !in_iv(sb, m)).collect();
    out.extend(interval_members(sb).filter(|&m| !in_iv(sa, m)));
    out.sort_unstable();
    Ok(out)
}

/// Solutions for every family within `bounds` while the laser near `nu_laser`
/// follows the nearest pump mode across `range`. Only solutions with ν_s ≥ ν_i are kept.
pub fn scan_solutions(
    res: &Resonator,
    nu_laser: f64,
    range: (f64, f64),
    bounds: &ScanBounds,
    opts: &SolverOptions,
) -> Result<Vec<PhaseMatchSolution>> {
    let families = bounds.families();
    let windows = pump_windows(res, nu_laser, 1, range)?;
    let per_window: Vec<Result<(usize, Vec<PhaseMatchSolution>)>> = windows
        .par_iter()
        .map(|(pump, w)| {
            let mut sols = Vec::new();
            let mut count = 0usize;
            for fam in &families {
                let pump_mode = ModeIndex { q: fam.q_p, ..*pump };
                let cands = candidates_in_window(res, &pump_mode, fam, *w, bounds.m_s_window)?;
                count += cands.len();
                if count > bounds.max_candidates {
                    return Err(PhaseMatchError::Budget {
                        count,
                        limit: bounds.max_candidates,
                    });
                }
                for m_s in cands {
                    let ch = ConversionChannel::from_family(pump.m, m_s, fam)?;
                    for s in solve_temperature(res, &ch, PumpDrive::Locked, *w, opts)? {
                        if s.nu_s >= s.nu_i {
                            sols.push(s);
                        }
                    }
                }
            }
            Ok((count, sols))
        })
        .collect();
    let mut total = 0usize;
    let mut all = Vec::new();
    for r in per_window {
        let (c, s) = r?;
        total += c;
        if total > bounds.max_candidates {
            return Err(PhaseMatchError::Budget {
                count: total,
                limit: bounds.max_candidates,
            });
        }
        all.extend(s);
    }
    all.sort_by(|a, b| {
        a.channel
            .family()
            .cmp(&b.channel.family())
            .then(a.t_c.total_cmp(&b.t_c))
            .then(a.channel.cmp(&b.channel))
    });
    Ok(all)
}

/// Groups solutions into per-family curves sorted by temperature.
pub fn cluster(solutions: &[PhaseMatchSolution]) -> Vec<TuningCurve> {
    let mut map: BTreeMap<Family, Vec<PhaseMatchSolution>> = BTreeMap::new();
    for s in solutions {
        map.entry(s.channel.family()).or_default().push(*s);
    }
    map.into_iter()
        .map(|(family, mut solutions)| {
            solutions.sort_by(|a, b| a.t_c.total_cmp(&b.t_c).then(a.channel.cmp(&b.channel)));
            TuningCurve { family, solutions }
        })
        .collect()
}

/// Scan and group into tuning curves.
pub fn scan_channels(
    res: &Resonator,
    nu_laser: f64,
    range: (f64, f64),
    bounds: &ScanBounds,
    opts: &SolverOptions,
) -> Result<Vec<TuningCurve>> {
    Ok(cluster(&scan_solutions(res, nu_laser, range, bounds, opts)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub window_c: f64,
    pub solver: SolverOptions,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            window_c: 3.0,
            solver: SolverOptions {
                grid_step_c: 0.01,
                residual_tol_hz: 1e3,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepResult {
    pub solution: PhaseMatchSolution,
    pub dt_c: f64,
    pub dnu_s: f64,
    pub dnu_p: f64,
}

fn resolve_near(
    res: &Resonator,
    from: &PhaseMatchSolution,
    channel: ConversionChannel,
    direction: i32,
    opts: &StepOptions,
) -> Result<StepResult> {
    let (lo, hi) = res.extraordinary.temperature_validity_c;
    let range = (
        (from.t_c - opts.window_c).max(lo - res.dt_cal),
        (from.t_c + opts.window_c).min(hi - res.dt_cal),
    );
    let sols = solve_temperature(res, &channel, PumpDrive::Locked, range, &opts.solver)?;
    let best = sols
        .into_iter()
        .min_by(|a, b| (a.t_c - from.t_c).abs().total_cmp(&(b.t_c - from.t_c).abs()))
        .ok_or(PhaseMatchError::StepNotFound {
            direction,
            window_c: opts.window_c,
        })?;
    Ok(StepResult {
        dt_c: best.t_c - from.t_c,
        dnu_s: best.nu_s - from.nu_s,
        dnu_p: best.nu_p - from.nu_p,
        solution: best,
    })
}

fn check_direction(direction: i32) -> Result<()> {
    if direction != 1 && direction != -1 {
        return Err(PhaseMatchError::InvalidInput(format!("direction must be ±1, got {direction}")));
    }
    Ok(())
}

/// m_s → m_s ± 1, m_i → m_i ∓ 1 with the same pump mode.
pub fn step_fixed_pump(res: &Resonator, solution: &PhaseMatchSolution, direction: i32, opts: &StepOptions) -> Result<StepResult> {
    check_direction(direction)?;
    let d = direction as i64;
    let ch = solution.channel.shifted(0, d, -d)?;
    resolve_near(res, solution, ch, direction, opts)
}

/// m_p → m_p ± 1, m_i → m_i ± 1 with the signal mode unchanged.
pub fn step_pump_mode(res: &Resonator, solution: &PhaseMatchSolution, direction: i32, opts: &StepOptions) -> Result<StepResult> {
    check_direction(direction)?;
    let d = direction as i64;
    let ch = solution.channel.shifted(d, 0, d)?;
    resolve_near(res, solution, ch, direction, opts)
}

/// Pump excursion (Hz) needed to walk the signal from `a` to `b` by pump-mode steps,
/// interpolating the final partial step.
pub fn pump_tuning_requirement(
    res: &Resonator,
    a: &PhaseMatchSolution,
    b: &PhaseMatchSolution,
    opts: &StepOptions,
) -> Result<f64> {
    let gap = b.nu_s - a.nu_s;
    if gap.abs() < 1e3 {
        return Ok(0.0);
    }
    let first = step_pump_mode(res, a, 1, opts)?;
    let (direction, first) = if (first.dnu_s > 0.0) == (gap > 0.0) {
        (1, first)
    } else {
        (-1, step_pump_mode(res, a, -1, opts)?)
    };
    let mut covered = 0.0;
    let mut excursion = 0.0;
    let mut step = first;
    for _ in 0..100_000 {
        let ds = step.dnu_s.abs();
        if ds == 0.0 || (step.dnu_s > 0.0) != (gap > 0.0) {
            return Err(PhaseMatchError::InvalidInput("pump-mode steps do not move toward the target".into()));
        }
        if covered + ds >= gap.abs() {
            excursion += (gap.abs() - covered) / ds * step.dnu_p.abs();
            return Ok(excursion);
        }
        covered += ds;
        excursion += step.dnu_p.abs();
        step = step_pump_mode(res, &step.solution, direction, opts)?;
    }
    Err(PhaseMatchError::InvalidInput("too many pump-mode steps".into()))
}

/// Loaded linewidths (FWHM, Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linewidths {
    pub kappa_p: f64,
    pub kappa_s: f64,
    pub kappa_i: f64,
}

impl Linewidths {
    /// κ = ν/Q for each beam of a solution.
    pub fn from_q(sol: &PhaseMatchSolution, q: f64) -> Self {
        Self {
            kappa_p: sol.nu_p / q,
            kappa_s: sol.nu_s / q,
            kappa_i: sol.nu_i / q,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            kappa_p: self.kappa_p * k,
            kappa_s: self.kappa_s * k,
            kappa_i: self.kappa_i * k,
        }
    }
}

/// Relative pair rate vs temperature.
///
/// The pump sits on resonance, so only the signal and idler lineshapes enter.
/// The detuning Δ = ν_p − ν_s − ν_i is shared between signal and idler in
/// proportion to their temperature slopes; the rate is L_s(x_s)·L_i(x_i) with
/// L(x) = 1/(1 + (2x/κ)²), so the peak is 1.
pub fn spdc_rate_profile(
    res: &Resonator,
    channel: &ConversionChannel,
    drive: PumpDrive,
    t_grid: &[f64],
    lw: &Linewidths,
) -> Result<Vec<(f64, f64)>> {
    if !(lw.kappa_s > 0.0 && lw.kappa_i > 0.0 && lw.kappa_p > 0.0) {
        return Err(PhaseMatchError::InvalidInput("linewidths must be positive".into()));
    }
    if t_grid.is_empty() {
        return Ok(Vec::new());
    }
    let mid = 0.5 * (t_grid[0] + t_grid[t_grid.len() - 1]);
    let ks = frequency_slope(res, &channel.signal, mid)?.abs();
    let ki = frequency_slope(res, &channel.idler, mid)?.abs();
    let ws = ks / (ks + ki);
    t_grid
        .iter()
        .map(|&t| {
            let d = drive_residual(res, channel, drive, t)?;
            let xs = d * ws;
            let xi = d - xs;
            let ls = 1.0 / (1.0 + (2.0 * xs / lw.kappa_s).powi(2));
            let li = 1.0 / (1.0 + (2.0 * xi / lw.kappa_i).powi(2));
            Ok((t, ls * li))
        })
        .collect()
}

/// Full width at half maximum of a sampled unimodal profile, by linear interpolation.
pub fn profile_fwhm(profile: &[(f64, f64)]) -> Option<f64> {
    let (imax, &(_, ymax)) = profile.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    let half = 0.5 * ymax;
    let mut left = None;
    for i in (0..imax).rev() {
        let (x0, y0) = profile[i];
        let (x1, y1) = profile[i + 1];
        if y0 <= half && y1 > half {
            left = Some(x0 + (half - y0) / (y1 - y0) * (x1 - x0));
            break;
        }
    }
    let mut right = None;
    for i in imax..profile.len().saturating_sub(1) {
        let (x0, y0) = profile[i];
        let (x1, y1) = profile[i + 1];
        if y0 > half && y1 <= half {
            right = Some(x0 + (y0 - half) / (y0 - y1) * (x1 - x0));
            break;
        }
    }
    Some(right? - left?)
}

/// Global calibration applied on top of the shipped material data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationOffset {
    #[serde(rename = "dT_cal_C")]
    pub dt_cal_c: f64,
    pub dn_e: f64,
    pub dn_o: f64,
}

impl CalibrationOffset {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_cal_c.abs() < CALIBRATION_BOUND_C) {
            return Err(PhaseMatchError::CalibrationBound {
                value: self.dt_cal_c,
                limit: CALIBRATION_BOUND_C,
            });
        }
        Ok(())
    }

    /// Resonator with this calibration in place of any previous one.
    pub fn apply(&self, base: &Resonator) -> Result<Resonator> {
        self.validate()?;
        let mut r = base.clone();
        r.dt_cal = self.dt_cal_c;
        r.extraordinary.delta_n = self.dn_e;
        r.ordinary.delta_n = self.dn_o;
        Ok(r)
    }
}

/// Target operating point for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub t_c: f64,
    pub lambda_s_nm: f64,
    pub lambda_p_nm: f64,
    pub family: Family,
}

impl Default for Anchor {
    fn default() -> Self {
        Self {
            t_c: 141.0,
            lambda_s_nm: 895.0,
            lambda_p_nm: 532.0,
            family: Family::FUNDAMENTAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKnob {
    /// Extraordinary (pump) index offset.
    PumpIndex,
    /// Global temperature offset.
    Temperature,
}

/// Channel whose pump mode is nearest the laser and signal mode nearest the anchor wavelength.
pub fn anchor_channel(res: &Resonator, anchor: &Anchor) -> Result<ConversionChannel> {
    let f = &anchor.family;
    let pump = nearest_mode(res, hz_from_nm(anchor.lambda_p_nm), anchor.t_c, f.q_p, 0, Polarization::Extraordinary)?;
    let sig = nearest_mode(res, hz_from_nm(anchor.lambda_s_nm), anchor.t_c, f.q_s, f.p_s, Polarization::Ordinary)?;
    ConversionChannel::from_family(pump.m, sig.m, f)
}

/// Solves the chosen knob so the anchor channel is phase matched exactly at the anchor temperature.
pub fn calibrate(base: &Resonator, anchor: &Anchor, knob: CalibrationKnob) -> Result<(CalibrationOffset, PhaseMatchSolution)> {
    let mut cal = CalibrationOffset {
        dt_cal_c: base.dt_cal,
        dn_e: base.extraordinary.delta_n,
        dn_o: base.ordinary.delta_n,
    };
    let unchecked = |c: &CalibrationOffset| -> Resonator {
        let mut r = base.clone();
        r.dt_cal = c.dt_cal_c;
        r.extraordinary.delta_n = c.dn_e;
        r.ordinary.delta_n = c.dn_o;
        r
    };
    let mut last: Option<ConversionChannel> = None;
    for _ in 0..50 {
        let res = unchecked(&cal);
        let ch = anchor_channel(&res, anchor)?;
        // Newton on the knob with the modes held fixed.
        for _ in 0..30 {
            let res = unchecked(&cal);
            let r0 = locked_residual(&res, &ch, anchor.t_c)?;
            let (h, mut probe) = match knob {
                CalibrationKnob::PumpIndex => (1e-6, cal),
                CalibrationKnob::Temperature => (1e-3, cal),
            };
            match knob {
                CalibrationKnob::PumpIndex => probe.dn_e += h,
                CalibrationKnob::Temperature => probe.dt_cal_c += h,
            }
            let r1 = locked_residual(&unchecked(&probe), &ch, anchor.t_c)?;
            let step = -r0 * h / (r1 - r0);
            match knob {
                CalibrationKnob::PumpIndex => cal.dn_e += step,
                CalibrationKnob::Temperature => {
                    cal.dt_cal_c += step;
                    if cal.dt_cal_c.abs() > 4.0 * CALIBRATION_BOUND_C {
                        return Err(PhaseMatchError::CalibrationBound {
                            value: cal.dt_cal_c,
                            limit: CALIBRATION_BOUND_C,
                        });
                    }
                }
            }
            if r0.abs() < 1.0 {
                break;
            }
        }
        if last == Some(ch) {
            cal.validate()?;
            let res = cal.apply(base)?;
            let sol = package(&res, &ch, PumpDrive::Locked, anchor.t_c)?;
            return Ok((cal, sol));
        }
        last = Some(ch);
    }
    Err(PhaseMatchError::Calibration("mode assignment kept changing".into()))
}
