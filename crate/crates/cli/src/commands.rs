//! Subcommand bodies.

use std::path::Path;

use serde_json::json;
use wgmopo_core::coincidence::{
    estimate_klyshko, histogram_coincidences, simulate, streams_to_csv, CoincidenceHistogram, SimConfig,
};
use wgmopo_core::constants::hz_from_nm;
use wgmopo_core::correlations::{bandwidth_from_decay, peak_delay};
use wgmopo_core::evanescent::{plan_continuous_tune, shifted_operating_point, Gap, SubstrateSpec, TuningPlan};
use wgmopo_core::fit::{fit_g2, FitKind};
use wgmopo_core::phase_matching::{
    calibrate, m_s_window_for, profile_fwhm, pump_tuning_requirement, scan_channels, spdc_rate_profile, step_fixed_pump,
    step_pump_mode, CalibrationOffset, Linewidths, PhaseMatchSolution, PumpDrive, ScanBounds, SolverOptions, StepOptions,
    StepResult,
};
use wgmopo_core::spectrum::{frequency_slope, Resonator};
use wgmopo_core::vapor::{absorption_spectrum, vapor_density, VaporCell};

use crate::error::{CliError, Result};
use crate::output::{Format, OutputDir, Table};
use crate::scenario::Loaded;

pub struct Ctx {
    pub loaded: Loaded,
    pub out: OutputDir,
    pub format: Format,
}

const NS: f64 = 1e-9;

impl Ctx {
    fn calibrated(&self) -> Result<(Resonator, CalibrationOffset, PhaseMatchSolution)> {
        let base = self.loaded.resonator()?;
        let c = &self.loaded.scenario.calibration;
        let (cal, sol) = calibrate(&base, &c.anchor, c.knob)?;
        Ok((cal.apply(&base)?, cal, sol))
    }
}

pub fn calibrate_cmd(ctx: &Ctx) -> Result<()> {
    let (_, cal, sol) = ctx.calibrated()?;
    ctx.out.write_json(
        "calibration.json",
        &json!({
            "knob": ctx.loaded.scenario.calibration.knob,
            "anchor": ctx.loaded.scenario.calibration.anchor,
            "offset": cal,
            "solution": sol,
        }),
    )?;
    Ok(())
}

pub fn tuning_curve(ctx: &Ctx, grid_step_c: Option<f64>) -> Result<()> {
    let (res, _, _) = ctx.calibrated()?;
    let s = &ctx.loaded.scenario;
    let t = &s.tuning;
    let step = grid_step_c.unwrap_or(t.grid_step_c);
    if !(step > 0.0) {
        return Err(CliError::Usage(format!("--grid-step-c must be positive, got {step}")));
    }
    let mid = 0.5 * (t.temperature_range_c.0 + t.temperature_range_c.1);
    let bounds = ScanBounds {
        q_max: t.q_max,
        p_max: t.p_max,
        m_s_window: m_s_window_for(&res, t.signal_range_nm, mid)?,
        max_candidates: t.max_candidates,
    };
    let opts = SolverOptions {
        grid_step_c: step,
        ..SolverOptions::default()
    };
    let curves = scan_channels(&res, hz_from_nm(s.pump_wavelength_nm), t.temperature_range_c, &bounds, &opts)?;
    let mut table = Table::new(&[
        "family",
        "q_p",
        "q_s",
        "q_i",
        "p_s",
        "p_i",
        "m_p",
        "m_s",
        "m_i",
        "T_C",
        "lambda_s_nm",
        "lambda_i_nm",
        "residual_Hz",
    ]);
    for c in &curves {
        let f = c.family;
        for sol in &c.solutions {
            let ch = sol.channel;
            table.push(vec![
                f.label().into(),
                f.q_p.into(),
                f.q_s.into(),
                f.q_i.into(),
                f.p_s.into(),
                f.p_i.into(),
                ch.pump().m.into(),
                ch.signal().m.into(),
                ch.idler().m.into(),
                sol.t_c.into(),
                sol.lambda_s_nm.into(),
                sol.lambda_i_nm.into(),
                sol.residual.into(),
            ]);
        }
    }
    ctx.out.write_table("tuning_curve", &table, ctx.format)?;
    Ok(())
}

fn chain(
    res: &Resonator,
    start: &PhaseMatchSolution,
    count: u32,
    direction: i32,
    opts: &StepOptions,
    step: fn(&Resonator, &PhaseMatchSolution, i32, &StepOptions) -> wgmopo_core::phase_matching::Result<StepResult>,
) -> Result<Vec<StepResult>> {
    let mut out = Vec::new();
    let mut cur = *start;
    for _ in 0..count {
        let st = step(res, &cur, direction, opts)?;
        cur = st.solution;
        out.push(st);
    }
    Ok(out)
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64
}

pub fn steps(ctx: &Ctx, grid_step_c: Option<f64>) -> Result<()> {
    let (res, _, sol) = ctx.calibrated()?;
    let spec = &ctx.loaded.scenario.steps;
    let mut opts = StepOptions {
        window_c: spec.window_c,
        ..StepOptions::default()
    };
    if let Some(g) = grid_step_c {
        if !(g > 0.0) {
            return Err(CliError::Usage(format!("--grid-step-c must be positive, got {g}")));
        }
        opts.solver.grid_step_c = g;
    }
    let mut table = Table::new(&[
        "kind",
        "step",
        "m_p",
        "m_s",
        "m_i",
        "T_C",
        "lambda_s_nm",
        "lambda_i_nm",
        "dT_C",
        "dnu_s_Hz",
        "dnu_p_Hz",
    ]);
    let mut fixed = Vec::new();
    let mut pump = Vec::new();
    for (kind, f) in [
        ("fixed_pump", step_fixed_pump as fn(&_, &_, _, &_) -> _),
        ("pump_mode", step_pump_mode as fn(&_, &_, _, &_) -> _),
    ] {
        for dir in [-1, 1] {
            for (k, st) in chain(&res, &sol, spec.count, dir, &opts, f)?.iter().enumerate() {
                let ch = st.solution.channel;
                table.push(vec![
                    kind.into(),
                    (dir as i64 * (k as i64 + 1)).into(),
                    ch.pump().m.into(),
                    ch.signal().m.into(),
                    ch.idler().m.into(),
                    st.solution.t_c.into(),
                    st.solution.lambda_s_nm.into(),
                    st.solution.lambda_i_nm.into(),
                    st.dt_c.into(),
                    st.dnu_s.into(),
                    st.dnu_p.into(),
                ]);
                if kind == "fixed_pump" {
                    fixed.push(st.dnu_s);
                } else {
                    pump.push(st.dnu_s);
                }
            }
        }
    }
    let target = step_fixed_pump(&res, &sol, 1, &opts)?;
    let excursion = pump_tuning_requirement(&res, &sol, &target.solution, &opts)?;
    ctx.out.write_table("steps", &table, ctx.format)?;
    ctx.out.write_json(
        "steps_summary.json",
        &json!({
            "start": sol,
            "mean_fixed_pump_step_Hz": mean_abs(&fixed),
            "mean_pump_mode_step_Hz": mean_abs(&pump),
            "fixed_pump_step_nm": (target.solution.lambda_s_nm - sol.lambda_s_nm).abs(),
            "pump_excursion_Hz": excursion,
        }),
    )?;
    Ok(())
}

fn plan_json(p: &TuningPlan) -> serde_json::Value {
    json!({
        "d_nm": p.d_nm(),
        "V": p.voltage,
        "dT_C": p.dt_c,
        "dnu_p_Hz": p.dnu_p,
        "dnu_s_Hz": p.dnu_s,
    })
}

pub fn perturb(ctx: &Ctx, bins: Option<usize>) -> Result<()> {
    let (res, _, sol) = ctx.calibrated()?;
    let sub = &ctx.loaded.scenario.substrate;
    let n_sub = ctx.loaded.substrate_index()?;
    let spec = SubstrateSpec::default_for(&res, &sol, n_sub, &sub.actuator, sub.sweep_hz, sub.sign)?;
    let act = sub.actuator;
    let n = bins.unwrap_or(sub.voltage_points);
    if n < 2 {
        return Err(CliError::Usage("--bins must be at least 2".into()));
    }
    let (v0, v1) = act.voltage_range;
    let mut table = Table::new(&["d_nm", "V", "dT_C", "dnu_p_Hz", "dnu_s_Hz"]);
    for k in 0..n {
        let v = v0 + (v1 - v0) * k as f64 / (n - 1) as f64;
        let d = act.gap(v);
        let p = shifted_operating_point(&res, &sol, &spec, Gap::Nm(d))?;
        table.push(vec![d.into(), v.into(), p.dt_c.into(), p.dnu_p.into(), p.dnu_s.into()]);
    }
    let mut plans = Vec::new();
    for &target in &sub.plan_targets_hz {
        let p = plan_continuous_tune(&res, &sol, &spec, &act, target)?;
        let mut j = plan_json(&p);
        j["target_Hz"] = json!(target);
        plans.push(j);
    }
    ctx.out.write_table("perturb", &table, ctx.format)?;
    ctx.out.write_json(
        "perturb_plans.json",
        &json!({ "substrate": spec, "actuator": act, "plans": plans }),
    )?;
    Ok(())
}

pub fn vapor(ctx: &Ctx, bins: Option<usize>) -> Result<()> {
    let mut summary = Vec::new();
    for c in &ctx.loaded.scenario.vapor {
        let (first, lines) = ctx.loaded.cell_lines(c)?;
        let cell = VaporCell::new(first.element, c.length_cm, c.temperature_c, first.vapor_pressure)?;
        let nu0 = lines
            .iter()
            .find(|l| l.label == c.center_line)
            .map(|l| l.nu0)
            .expect("checked at load");
        let n = bins.unwrap_or(c.points);
        if n < 2 {
            return Err(CliError::Usage("--bins must be at least 2".into()));
        }
        let grid: Vec<f64> = (0..n)
            .map(|k| nu0 + c.span_hz * (k as f64 / (n - 1) as f64 - 0.5))
            .collect();
        let (od, tr) = absorption_spectrum(&cell, &lines, &grid)?;
        let mut table = Table::new(&["nu_Hz", "OD", "transmission"]);
        for k in 0..n {
            table.push(vec![grid[k].into(), od[k].into(), tr[k].into()]);
        }
        ctx.out.write_table(&format!("vapor_{}", c.name), &table, ctx.format)?;
        let (_, t0) = absorption_spectrum(&cell, &lines, &[nu0])?;
        summary.push(json!({
            "name": c.name,
            "center_line": c.center_line,
            "nu0_Hz": nu0,
            "length_cm": c.length_cm,
            "temperature_C": c.temperature_c,
            "density_per_m3": vapor_density(&cell)?,
            "transmission_at_center": t0[0],
        }));
    }
    ctx.out.write_json("vapor_summary.json", &json!({ "cells": summary }))?;
    Ok(())
}

pub fn bandwidth(ctx: &Ctx, bins: Option<usize>) -> Result<()> {
    let (res, _, sol) = ctx.calibrated()?;
    let spec = &ctx.loaded.scenario.bandwidth;
    let n = bins.unwrap_or(spec.points);
    if n < 3 {
        return Err(CliError::Usage("--bins must be at least 3".into()));
    }
    let grid: Vec<f64> = (0..n)
        .map(|k| sol.t_c + spec.half_width_c * (2.0 * k as f64 / (n - 1) as f64 - 1.0))
        .collect();
    let lw = Linewidths::from_q(&sol, res.geometry.q_loaded);
    let profile = spdc_rate_profile(&res, &sol.channel, PumpDrive::Locked, &grid, &lw)?;
    let mut table = Table::new(&["T_C", "rate"]);
    for &(t, r) in &profile {
        table.push(vec![t.into(), r.into()]);
    }
    let fwhm = profile_fwhm(&profile);
    let slope = frequency_slope(&res, &sol.channel.signal(), sol.t_c)?;
    ctx.out.write_table("bandwidth", &table, ctx.format)?;
    ctx.out.write_json(
        "bandwidth_summary.json",
        &json!({
            "solution": sol,
            "linewidths": lw,
            "fwhm_C": fwhm,
            "signal_slope_Hz_per_C": slope,
            "fwhm_signal_Hz": fwhm.map(|w| w * slope.abs()),
        }),
    )?;
    Ok(())
}

pub fn simulate_cmd(ctx: &Ctx, seed: Option<u64>, bins: Option<usize>) -> Result<()> {
    let sim = &ctx.loaded.scenario.simulation;
    let w = sim.bin_width_ns * NS;
    let window = match bins {
        None => sim.window_ns * NS,
        Some(b) if b >= 3 && b % 2 == 1 => ((b - 1) / 2) as f64 * w + 0.5 * w,
        Some(b) => return Err(CliError::Usage(format!("--bins must be odd and >= 3, got {b}"))),
    };
    for (k, run) in sim.runs.iter().enumerate() {
        let config = SimConfig {
            rng_seed: seed.map_or(run.config.rng_seed, |s| s.wrapping_add(k as u64)),
            ..run.config.clone()
        };
        let (signal, idler) = simulate(&config)?;
        let hist = histogram_coincidences(&idler, &signal, w, window)?;
        let est = estimate_klyshko(&idler, &signal, &hist, sim.accidental_window_ns * NS)?;
        match ctx.format {
            Format::Csv => {
                let text = format!(
                    "{}# run={} seed={}\n{}",
                    ctx.out.csv_header(),
                    run.name,
                    config.rng_seed,
                    hist.to_csv()
                );
                ctx.out.write(&format!("hist_{}.csv", run.name), &text)?;
            }
            Format::Json => {
                ctx.out.write_json(&format!("hist_{}.json", run.name), &hist)?;
            }
        }
        if sim.write_streams {
            let text = format!("{}{}", ctx.out.csv_header(), streams_to_csv(&config, &[&signal, &idler]));
            ctx.out.write(&format!("streams_{}.csv", run.name), &text)?;
        }
        ctx.out.write_json(
            &format!("sim_{}.json", run.name),
            &json!({
                "run": run.name,
                "config": config,
                "singles_signal": signal.len(),
                "singles_idler": idler.len(),
                "histogram_total": hist.total(),
                "expected_detected_pairs": config.expected_pairs(),
                "klyshko": {
                    "eta_idler": est.eta_a,
                    "eta_signal": est.eta_b,
                    "coincidences": est.coincidences,
                    "baseline_per_bin": est.baseline_per_bin,
                    "quality": est.quality,
                },
            }),
        )?;
    }
    Ok(())
}

fn read_histogram(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let h: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut h = h;
        if let Some(obj) = h.as_object_mut() {
            obj.remove("meta");
        }
        let hist: CoincidenceHistogram =
            serde_json::from_value(h).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        return Ok(hist.points());
    }
    Ok(CoincidenceHistogram::points_from_csv(&text)?)
}

pub fn fit_cmd(ctx: &Ctx, input: &Path, kind: FitKind) -> Result<()> {
    let points = read_histogram(input)?;
    let r = fit_g2(&points, kind)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        .unwrap_or("histogram");
    let tau_si = r.param("tau_si");
    let mut derived = json!({ "bandwidth_Hz": bandwidth_from_decay(tau_si)? });
    if kind == FitKind::Fluorescence {
        let tau_f = r.param("tau_f");
        derived["tau_f_bandwidth_Hz"] = json!(bandwidth_from_decay(tau_f)?);
        derived["peak_delay_s"] = json!(peak_delay(tau_si, tau_f)?);
    }
    ctx.out.write_json(
        &format!("fit_{stem}.json"),
        &json!({
            "input": input.file_name().and_then(|s| s.to_str()),
            "result": r,
            "derived": derived,
        }),
    )?;
    Ok(())
}
