use std::sync::OnceLock;

use proptest::prelude::*;
use wgmopo_core::constants::hz_from_nm;
use wgmopo_core::data::default_resonator;
use wgmopo_core::phase_matching::*;
use wgmopo_core::spectrum::{fsr, frequency_slope, Resonator};

struct Calibrated {
    res: Resonator,
    sol: PhaseMatchSolution,
}

fn calibrated() -> &'static Calibrated {
    static CELL: OnceLock<Calibrated> = OnceLock::new();
    CELL.get_or_init(|| {
        let base = default_resonator().unwrap();
        let (cal, sol) = calibrate(&base, &Anchor::default(), CalibrationKnob::PumpIndex).unwrap();
        Calibrated {
            res: cal.apply(&base).unwrap(),
            sol,
        }
    })
}

#[test]
fn anchor_solution_after_calibration() {
    let c = calibrated();
    let s = &c.sol;
    assert!((s.lambda_s_nm - 895.0).abs() < 1.0);
    assert!((s.lambda_i_nm - 1312.0).abs() < 2.0);
    assert!((s.t_c - 141.0).abs() < 2.0);
    assert!(s.residual.abs() < 1e6);
    assert_eq!(s.channel.family(), Family::FUNDAMENTAL);
}

#[test]
fn anchor_wavelengths_imply_pump() {
    let lp: f64 = 1.0 / (1.0 / 895.0 + 1.0 / 1312.0);
    assert!((lp - 532.0).abs() < 0.3);
    let s = &calibrated().sol;
    let lp_sol = 1.0 / (1.0 / s.lambda_s_nm + 1.0 / s.lambda_i_nm);
    let rel = (lp_sol - s.lambda_p_nm) / s.lambda_p_nm;
    assert!(rel.abs() < 1e6 / s.nu_p);
}

#[test]
fn solve_temperature_recovers_anchor() {
    let c = calibrated();
    let sols = solve_temperature(
        &c.res,
        &c.sol.channel,
        PumpDrive::Locked,
        (140.0, 142.0),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(sols.iter().any(|s| (s.t_c - c.sol.t_c).abs() < 0.01));
    for s in &sols {
        assert!(s.residual.abs() < 1e6);
    }
}

#[test]
fn fixed_drive_matches_locked_at_solution() {
    let c = calibrated();
    let sols = solve_temperature(
        &c.res,
        &c.sol.channel,
        PumpDrive::Fixed(c.sol.nu_p),
        (140.5, 141.5),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(sols.iter().any(|s| (s.t_c - c.sol.t_c).abs() < 0.01));
}

#[test]
fn no_root_is_empty_not_error() {
    let c = calibrated();
    let sols = solve_temperature(
        &c.res,
        &c.sol.channel,
        PumpDrive::Locked,
        (60.0, 61.0),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(sols.is_empty());
}

#[test]
fn residual_swap_symmetric() {
    let c = calibrated();
    let ch = c.sol.channel;
    for t in [130.0, 141.0, 150.0] {
        let a = energy_residual(&c.res, &ch, t, c.sol.nu_p).unwrap();
        let b = energy_residual(&c.res, &ch.swapped(), t, c.sol.nu_p).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn residual_monotone_near_solution() {
    let c = calibrated();
    let t0 = c.sol.t_c;
    let vals: Vec<f64> = (0..=200)
        .map(|k| locked_residual(&c.res, &c.sol.channel, t0 - 0.5 + k as f64 * 0.005).unwrap())
        .collect();
    let inc = vals.windows(2).all(|w| w[1] > w[0]);
    let dec = vals.windows(2).all(|w| w[1] < w[0]);
    assert!(inc || dec);
}

#[test]
fn channel_construction_enforces_momentum() {
    let c = calibrated().sol.channel;
    let bad = ConversionChannel::new(c.pump(), c.signal(), c.signal());
    assert!(matches!(bad, Err(PhaseMatchError::InvalidChannel(_))));
    let swapped_pol = ConversionChannel::new(c.signal(), c.pump(), c.idler());
    assert!(swapped_pol.is_err());
}

#[test]
fn fixed_pump_step_size_and_involution() {
    let c = calibrated();
    let o = StepOptions::default();
    let up = step_fixed_pump(&c.res, &c.sol, 1, &o).unwrap();
    assert!((up.dnu_s.abs() / 8.2e9 - 1.0).abs() < 0.2, "{}", up.dnu_s);
    let ch = up.solution.channel;
    assert_eq!(ch.pump().m, ch.signal().m + ch.idler().m);
    assert_eq!(ch.pump(), c.sol.channel.pump());
    let back = step_fixed_pump(&c.res, &up.solution, -1, &o).unwrap();
    assert_eq!(back.solution.channel, c.sol.channel);
    assert!((back.solution.t_c - c.sol.t_c).abs() < 1e-3);
}

#[test]
fn fixed_pump_step_matches_linearization() {
    let c = calibrated();
    let s = &c.sol;
    let ch = s.channel;
    let t = s.t_c;
    let fsr_s = fsr(&c.res, &ch.signal(), t).unwrap();
    let fsr_i = fsr(&c.res, &ch.idler(), t).unwrap();
    let kp = frequency_slope(&c.res, &ch.pump(), t).unwrap();
    let ks = frequency_slope(&c.res, &ch.signal(), t).unwrap();
    let ki = frequency_slope(&c.res, &ch.idler(), t).unwrap();
    let dt = (fsr_s - fsr_i) / (kp - ks - ki);
    let predicted = fsr_s + ks * dt;
    let step = step_fixed_pump(&c.res, s, 1, &StepOptions::default()).unwrap();
    assert!((step.dnu_s / predicted - 1.0).abs() < 0.25, "{} vs {predicted}", step.dnu_s);
    assert!((step.dt_c / dt - 1.0).abs() < 0.25);
}

#[test]
fn pump_mode_step_keeps_signal_mode() {
    let c = calibrated();
    let st = step_pump_mode(&c.res, &c.sol, 1, &StepOptions::default()).unwrap();
    assert_eq!(st.solution.channel.signal(), c.sol.channel.signal());
    assert_eq!(st.solution.channel.pump().m, c.sol.channel.pump().m + 1);
    assert!(st.solution.residual.abs() < 1e6);
    assert!(st.dnu_s.abs() > 0.0 && st.dnu_s.abs() < 1e9);
}

#[test]
fn bad_direction_rejected() {
    let c = calibrated();
    assert!(step_fixed_pump(&c.res, &c.sol, 2, &StepOptions::default()).is_err());
}

#[test]
fn step_not_found_in_tiny_window() {
    let c = calibrated();
    let o = StepOptions {
        window_c: 1e-4,
        ..StepOptions::default()
    };
    assert!(matches!(
        step_fixed_pump(&c.res, &c.sol, 1, &o),
        Err(PhaseMatchError::StepNotFound { .. })
    ));
}

#[test]
fn pump_excursion_consistent_with_substeps() {
    let c = calibrated();
    let o = StepOptions::default();
    assert_eq!(pump_tuning_requirement(&c.res, &c.sol, &c.sol, &o).unwrap(), 0.0);
    let target = step_fixed_pump(&c.res, &c.sol, 1, &o).unwrap();
    let exc = pump_tuning_requirement(&c.res, &c.sol, &target.solution, &o).unwrap();
    let sub = step_pump_mode(&c.res, &c.sol, 1, &o).unwrap();
    let sub = if (sub.dnu_s > 0.0) == (target.dnu_s > 0.0) {
        sub
    } else {
        step_pump_mode(&c.res, &c.sol, -1, &o).unwrap()
    };
    let predicted = target.dnu_s.abs() / sub.dnu_s.abs() * sub.dnu_p.abs();
    assert!((exc / predicted - 1.0).abs() < 0.05, "{exc} vs {predicted}");
}

fn anchor_profile(scale: f64) -> Vec<(f64, f64)> {
    let c = calibrated();
    let lw = Linewidths::from_q(&c.sol, c.res.geometry.q_loaded).scaled(scale);
    let grid: Vec<f64> = (-400..=400).map(|k| c.sol.t_c + k as f64 * 2e-5).collect();
    spdc_rate_profile(&c.res, &c.sol.channel, PumpDrive::Locked, &grid, &lw).unwrap()
}

#[test]
fn rate_profile_peaks_at_solution() {
    let c = calibrated();
    let p = anchor_profile(1.0);
    let (imax, &(tmax, ymax)) = p.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap();
    assert!((tmax - c.sol.t_c).abs() < 4e-5);
    assert!((ymax - 1.0).abs() < 1e-3);
    assert!(p[..imax].windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(p[imax..].windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn rate_profile_width_scales_with_linewidth() {
    let w1 = profile_fwhm(&anchor_profile(1.0)).unwrap();
    let w2 = profile_fwhm(&anchor_profile(2.0)).unwrap();
    let ratio = w2 / w1;
    assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn rate_profile_width_inside_doppler_line() {
    let c = calibrated();
    let w = profile_fwhm(&anchor_profile(1.0)).unwrap();
    let slope = frequency_slope(&c.res, &c.sol.channel.signal(), c.sol.t_c).unwrap().abs();
    let width_hz = w * slope;
    assert!(width_hz > 1e6 && width_hz < 500e6, "{width_hz}");
}

#[test]
fn temperature_knob_hits_bound() {
    let base = default_resonator().unwrap();
    let r = calibrate(&base, &Anchor::default(), CalibrationKnob::Temperature);
    assert!(matches!(r, Err(PhaseMatchError::CalibrationBound { .. })));
    let off = CalibrationOffset {
        dt_cal_c: 25.0,
        dn_e: 0.0,
        dn_o: 0.0,
    };
    assert!(off.apply(&base).is_err());
}

#[test]
fn narrow_scan_points_conserve_energy() {
    let c = calibrated();
    let ms = c.sol.channel.signal().m;
    let bounds = ScanBounds {
        q_max: 2,
        p_max: 1,
        m_s_window: (ms - 40, ms + 40),
        max_candidates: 100_000,
    };
    let curves = scan_channels(&c.res, hz_from_nm(532.0), (139.0, 143.0), &bounds, &SolverOptions::default()).unwrap();
    assert!(!curves.is_empty());
    for curve in &curves {
        assert!(curve.solutions.windows(2).all(|w| w[0].t_c <= w[1].t_c));
        for s in &curve.solutions {
            assert!(s.residual.abs() < 1e6);
            let ch = s.channel;
            assert_eq!(ch.pump().m, ch.signal().m + ch.idler().m);
            assert!(s.nu_s >= s.nu_i);
        }
    }
    assert!(curves
        .iter()
        .any(|c2| c2.family == Family::FUNDAMENTAL && c2.solutions.iter().any(|s| s.channel == c.sol.channel)));
}

#[test]
fn scan_budget_guard() {
    let c = calibrated();
    let bounds = ScanBounds {
        q_max: 3,
        p_max: 2,
        m_s_window: (30000, 50000),
        max_candidates: 10,
    };
    let r = scan_channels(&c.res, hz_from_nm(532.0), (125.0, 185.0), &bounds, &SolverOptions::default());
    assert!(matches!(r, Err(PhaseMatchError::Budget { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residual_swap_invariant(t in 100.0f64..180.0, dnu in -1e12f64..1e12) {
        let c = calibrated();
        let ch = c.sol.channel;
        let nu = c.sol.nu_p + dnu;
        prop_assert_eq!(
            energy_residual(&c.res, &ch, t, nu).unwrap(),
            energy_residual(&c.res, &ch.swapped(), t, nu).unwrap()
        );
    }
}
