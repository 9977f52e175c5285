//! Event-level Monte Carlo of detector time tags and coincidence histogramming.
//!
//! Channel `a` is the idler (herald) and `b` the signal, so histogram offsets
//! are Δ = t_signal − t_idler.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlations::{klyshko_efficiency, CorrelationError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("bad stream data: {0}")]
    Data(String),

    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SimMode {
    Direct,
    Fluorescence { tau_f: f64, reemission_efficiency: f64 },
}

/// Times in seconds, rates in 1/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub pair_rate: f64,
    pub duration: f64,
    pub eta_signal: f64,
    pub eta_idler: f64,
    #[serde(default)]
    pub dark_rate_signal: f64,
    #[serde(default)]
    pub dark_rate_idler: f64,
    #[serde(default)]
    pub jitter_signal: f64,
    #[serde(default)]
    pub jitter_idler: f64,
    pub tau_si: f64,
    pub mode: SimMode,
    pub rng_seed: u64,
    /// Paralyzable dead time; none by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_time: Option<f64>,
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        non_negative("pair_rate", self.pair_rate)?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::InvalidConfig(format!("duration must be positive, got {}", self.duration)));
        }
        unit_interval("eta_signal", self.eta_signal)?;
        unit_interval("eta_idler", self.eta_idler)?;
        non_negative("dark_rate_signal", self.dark_rate_signal)?;
        non_negative("dark_rate_idler", self.dark_rate_idler)?;
        non_negative("jitter_signal", self.jitter_signal)?;
        non_negative("jitter_idler", self.jitter_idler)?;
        if !(self.tau_si > 0.0 && self.tau_si.is_finite()) {
            return Err(SimError::InvalidConfig(format!("tau_si must be positive, got {}", self.tau_si)));
        }
        if let SimMode::Fluorescence {
            tau_f,
            reemission_efficiency,
        } = self.mode
        {
            if !(tau_f > 0.0 && tau_f.is_finite()) {
                return Err(SimError::InvalidConfig(format!("tau_f must be positive, got {tau_f}")));
            }
            unit_interval("reemission_efficiency", reemission_efficiency)?;
        }
        if let Some(d) = self.dead_time {
            non_negative("dead_time", d)?;
        }
        Ok(())
    }

    /// Probability that an emitted signal photon is detected.
    pub fn signal_detection_probability(&self) -> f64 {
        match self.mode {
            SimMode::Direct => self.eta_signal,
            SimMode::Fluorescence {
                reemission_efficiency, ..
            } => self.eta_signal * reemission_efficiency,
        }
    }

    /// Expected detected pairs, pair_rate·duration·p_s·η_i.
    pub fn expected_pairs(&self) -> f64 {
        self.pair_rate * self.duration * self.signal_detection_probability() * self.eta_idler
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Idler,
}

impl Channel {
    pub fn name(&self) -> &'static str {
        match self {
            Channel::Signal => "signal",
            Channel::Idler => "idler",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub channel: Channel,
    timestamps: Vec<f64>,
}

impl TimeTagStream {
    /// Checks that timestamps are finite and strictly increasing.
    pub fn new(channel: Channel, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(SimError::Data(format!("{} stream has non-finite timestamps", channel.name())));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SimError::Data(format!(
                "{} stream is not strictly increasing at index {}",
                channel.name(),
                i + 1
            )));
        }
        Ok(Self { channel, timestamps })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Signed signal-minus-idler offset for one pair.
pub fn sample_offset<R: Rng + ?Sized>(rng: &mut R, tau_si: f64, mode: SimMode) -> f64 {
    let e: f64 = Exp::new(1.0).expect("unit rate").sample(rng);
    let base = if rng.random::<bool>() { tau_si * e } else { -tau_si * e };
    match mode {
        SimMode::Direct => base,
        SimMode::Fluorescence { tau_f, .. } => {
            let f: f64 = Exp::new(1.0).expect("unit rate").sample(rng);
            base + tau_f * f
        }
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
    } else {
        0.0
    }
}

fn apply_dead_time(times: Vec<f64>, dead: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut last: Option<f64> = None;
    for t in times {
        if last.is_none_or(|l| t - l >= dead) {
            out.push(t);
        }
        last = Some(t);
    }
    out
}

fn finish(mut times: Vec<f64>, duration: f64, dead_time: Option<f64>) -> Vec<f64> {
    times.retain(|&t| (0.0..=duration).contains(&t));
    times.sort_unstable_by(f64::total_cmp);
    times.dedup();
    match dead_time {
        Some(d) if d > 0.0 => apply_dead_time(times, d),
        _ => times,
    }
}

/// Runs one simulation and returns (signal, idler) streams.
///
/// Emitted pairs are split into both-detected, signal-only and idler-only
/// Poisson processes, which is exact thinning and skips undetected pairs.
pub fn simulate(config: &SimConfig) -> Result<(TimeTagStream, TimeTagStream)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let t_end = config.duration;
    let lambda = config.pair_rate * t_end;
    let ps = config.signal_detection_probability();
    let pi = config.eta_idler;
    let n_both = poisson(&mut rng, lambda * ps * pi);
    let n_s = poisson(&mut rng, lambda * ps * (1.0 - pi));
    let n_i = poisson(&mut rng, lambda * (1.0 - ps) * pi);
    let n_ds = poisson(&mut rng, config.dark_rate_signal * t_end);
    let n_di = poisson(&mut rng, config.dark_rate_idler * t_end);

    let mut sig = Vec::with_capacity(n_both + n_s + n_ds);
    let mut idl = Vec::with_capacity(n_both + n_i + n_di);
    for _ in 0..n_both {
        let t0 = rng.random::<f64>() * t_end;
        let off = sample_offset(&mut rng, config.tau_si, config.mode);
        idl.push(t0 + jitter(&mut rng, config.jitter_idler));
        sig.push(t0 + off + jitter(&mut rng, config.jitter_signal));
    }
    for _ in 0..n_s {
        let t0 = rng.random::<f64>() * t_end;
        let off = sample_offset(&mut rng, config.tau_si, config.mode);
        sig.push(t0 + off + jitter(&mut rng, config.jitter_signal));
    }
    for _ in 0..n_i {
        let t0 = rng.random::<f64>() * t_end;
        idl.push(t0 + jitter(&mut rng, config.jitter_idler));
    }
    for _ in 0..n_ds {
        sig.push(rng.random::<f64>() * t_end);
    }
    for _ in 0..n_di {
        idl.push(rng.random::<f64>() * t_end);
    }
    let sig = finish(sig, t_end, config.dead_time);
    let idl = finish(idl, t_end, config.dead_time);
    Ok((TimeTagStream::new(Channel::Signal, sig)?, TimeTagStream::new(Channel::Idler, idl)?))
}

/// `n` offsets drawn with the simulator's sampler, for distribution tests.
pub fn sample_offsets(tau_si: f64, mode: SimMode, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_offset(&mut rng, tau_si, mode)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    /// Seconds.
    pub bin_width: f64,
    /// Half-width, seconds.
    pub window: f64,
    /// Bin centres, seconds, ascending and contiguous.
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// (centre, count) pairs for fitting.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.centers.iter().zip(&self.counts).map(|(&c, &n)| (c, n as f64)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_ns,counts\n");
        for (c, n) in self.centers.iter().zip(&self.counts) {
            writeln!(s, "{},{}", c * 1e9, n).expect("write to string");
        }
        s
    }

    /// Reads `tau_ns,counts` rows; `#` lines are skipped.
    pub fn points_from_csv(text: &str) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        let mut header_seen = false;
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.replace(' ', "") != "tau_ns,counts" {
                    return Err(SimError::Data(format!("expected header tau_ns,counts, got {line:?}")));
                }
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| SimError::Data(format!("line {}: cannot parse {line:?}", k + 1)))
            };
            let tau = parse(parts.next())?;
            let count = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(SimError::Data(format!("line {}: too many columns", k + 1)));
            }
            out.push((tau * 1e-9, count));
        }
        if !header_seen {
            return Err(SimError::Data("empty histogram file".into()));
        }
        Ok(out)
    }
}

/// Histogram of Δ = t_b − t_a over all pairs with |Δ| ≤ window.
pub fn histogram_coincidences(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width: f64,
    window: f64,
) -> Result<CoincidenceHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(SimError::Data(format!("bin width must be positive, got {bin_width}")));
    }
    if !(window >= 0.0 && window.is_finite()) {
        return Err(SimError::Data(format!("window must be >= 0, got {window}")));
    }
    for s in [a, b] {
        if s.timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(SimError::Data(format!("{} stream is not sorted", s.channel.name())));
        }
    }
    // Smallest symmetric bin set covering the window; edge bins are complete
    // only when window = (K + 1/2)·bin_width.
    let k = (window / bin_width - 0.5).ceil().max(0.0) as i64;
    let nbins = (2 * k + 1) as usize;
    let mut counts = vec![0u64; nbins];
    let tb = b.timestamps();
    let mut start = 0usize;
    for &ta in a.timestamps() {
        while start < tb.len() && tb[start] - ta < -window {
            start += 1;
        }
        let mut j = start;
        while j < tb.len() {
            let d = tb[j] - ta;
            if d > window {
                break;
            }
            let idx = ((d / bin_width).round() as i64).clamp(-k, k) + k;
            counts[idx as usize] += 1;
            j += 1;
        }
    }
    let centers = (-k..=k).map(|i| i as f64 * bin_width).collect();
    Ok(CoincidenceHistogram {
        bin_width,
        window,
        centers,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateQuality {
    Ok,
    /// Accidental baseline at or above the peak mass.
    NoExcess,
    /// No bins outside the accidental window to estimate a baseline from.
    NoBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlyshkoEstimate {
    pub eta_a: f64,
    pub eta_b: f64,
    /// Background-subtracted coincidence count.
    pub coincidences: f64,
    pub baseline_per_bin: f64,
    pub quality: EstimateQuality,
}

/// Klyshko efficiencies from singles and the background-subtracted peak.
///
/// Bins with |centre| ≤ `accidental_window` form the peak, the rest the
/// accidental baseline.
pub fn estimate_klyshko(
    a: &TimeTagStream,
    b: &TimeTagStream,
    histogram: &CoincidenceHistogram,
    accidental_window: f64,
) -> Result<KlyshkoEstimate> {
    let mut peak = 0.0;
    let mut n_peak = 0usize;
    let mut outer = 0.0;
    let mut n_outer = 0usize;
    for (c, &n) in histogram.centers.iter().zip(&histogram.counts) {
        if c.abs() <= accidental_window {
            peak += n as f64;
            n_peak += 1;
        } else {
            outer += n as f64;
            n_outer += 1;
        }
    }
    let zero = |quality, baseline| KlyshkoEstimate {
        eta_a: 0.0,
        eta_b: 0.0,
        coincidences: 0.0,
        baseline_per_bin: baseline,
        quality,
    };
    if n_outer == 0 {
        return Ok(zero(EstimateQuality::NoBaseline, 0.0));
    }
    let baseline = outer / n_outer as f64;
    let excess = peak - baseline * n_peak as f64;
    if !(excess > 0.0) || a.is_empty() || b.is_empty() {
        return Ok(zero(EstimateQuality::NoExcess, baseline));
    }
    let (eta_a, eta_b) = klyshko_efficiency(a.len() as f64, b.len() as f64, excess)?;
    Ok(KlyshkoEstimate {
        eta_a,
        eta_b,
        coincidences: excess,
        baseline_per_bin: baseline,
        quality: EstimateQuality::Ok,
    })
}

/// `channel,timestamp_ns` CSV with a `# seed=... config=...` header.
pub fn streams_to_csv(config: &SimConfig, streams: &[&TimeTagStream]) -> String {
    let cfg = serde_json::to_string(config).expect("config serializes");
    let mut s = format!("# seed={} config={}\nchannel,timestamp_ns\n", config.rng_seed, cfg);
    for st in streams {
        for t in st.timestamps() {
            writeln!(s, "{},{}", st.channel.name(), t * 1e9).expect("write to string");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SimConfig {
        SimConfig {
            pair_rate: 1e4,
            duration: 1.0,
            eta_signal: 0.5,
            eta_idler: 0.5,
            dark_rate_signal: 10.0,
            dark_rate_idler: 10.0,
            jitter_signal: 0.0,
            jitter_idler: 0.0,
            tau_si: 9.4e-9,
            mode: SimMode::Direct,
            rng_seed: 7,
            dead_time: None,
        }
    }

    #[test]
    fn unsorted_rejected() {
        assert!(TimeTagStream::new(Channel::Signal, vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn deterministic() {
        let (s1, i1) = simulate(&cfg()).unwrap();
        let (s2, i2) = simulate(&cfg()).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(i1, i2);
    }

    #[test]
    fn dead_time_is_paralyzable() {
        let t = apply_dead_time(vec![0.0, 0.5, 1.2, 3.0], 1.0);
        assert_eq!(t, vec![0.0, 3.0]);
    }

    #[test]
    fn csv_round_trip() {
        let h = CoincidenceHistogram {
            bin_width: 2e-9,
            window: 2e-9,
            centers: vec![-2e-9, 0.0, 2e-9],
            counts: vec![1, 5, 2],
        };
        let p = CoincidenceHistogram::points_from_csv(&h.to_csv()).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p[2].0 - 2e-9).abs() < 1e-20);
        assert_eq!(p[1].1, 5.0);
    }

    #[test]
    fn bad_config() {
        let mut c = cfg();
        c.eta_idler = 1.5;
        assert!(matches!(simulate(&c), Err(SimError::InvalidConfig(_))));
    }
}
