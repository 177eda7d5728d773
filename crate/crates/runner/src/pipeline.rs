//! The experiment pipelines. `run_*` functions compute artifacts; `write_*`
//! functions persist them below an output directory.

use std::path::Path;

use parasqueeze::bloch::{husimi, linspace, squeezing_factors, squeezing_report};
use parasqueeze::grape::{optimize, two_parameter_optimize, OctOptions, OctProblem, TwoParameterResult};
use parasqueeze::io::{self, PlotKind};
use parasqueeze::nelder_mead::NelderMeadOptions;
use parasqueeze::schedules::{calibrate_map, parametric_drive, system_josephson_frequency, ControlRamp};
use parasqueeze::two_mode::{evolve_with, step_grid, Static, TwoModeHamiltonian, TwoModeSchedule};
use parasqueeze::{
    ControlRamp64, HusimiGrid64, LambdaMap64, ManyBodyState64, OctTrace64, SqueezingReport64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::{RunError, RunResult};

fn jz2(r: &SqueezingReport64) -> f64 {
    r.var_jz + r.jz * r.jz
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationArtifact {
    pub n_atoms: usize,
    pub charging_ratio: f64,
    pub omega: f64,
    pub kappa: f64,
    pub xi_s: f64,
    pub josephson_khz: f64,
    /// Josephson frequency in rad/ms.
    pub omega_j: f64,
    pub map: LambdaMap64,
}

pub fn run_calibration(cfg: &ExperimentConfig, n_atoms: usize) -> RunResult<CalibrationArtifact> {
    let s = &cfg.system;
    let cal = calibrate_map(
        n_atoms,
        s.josephson_khz,
        s.target_xi_s,
        s.lambda0,
        s.map_decay,
        (s.lambda_min, s.lambda_max),
    )?;
    Ok(CalibrationArtifact {
        n_atoms,
        charging_ratio: cal.charging_ratio,
        omega: cal.omega,
        kappa: cal.kappa,
        xi_s: cal.xi_s,
        josephson_khz: cal.josephson_khz,
        omega_j: system_josephson_frequency(cal.omega, cal.kappa, n_atoms),
        map: cal.map,
    })
}

pub fn write_calibration(dir: &Path, cal: &CalibrationArtifact) -> RunResult<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(cal).expect("calibration serializes");
    std::fs::write(dir.join("calibration.json"), text + "\n")?;
    io::write_lambda_map(&dir.join("lambda_map.csv"), &cal.map, 141)?;
    Ok(())
}

/// State recorded at a requested time during amplification.
#[derive(Debug, Clone)]
pub struct Captured {
    pub t: f64,
    pub lambda: f64,
    pub state: ManyBodyState64,
}

#[derive(Debug, Clone)]
pub struct AmplificationArtifact {
    pub amplitude: f64,
    pub omega_drive: f64,
    pub initial_xi_s: f64,
    pub reports: Vec<SqueezingReport64>,
    pub husimi: Vec<(f64, HusimiGrid64)>,
    pub captured: Vec<Captured>,
    pub ramp: ControlRamp64,
    /// Smallest `xi_S` over every propagation step and its time.
    pub min_xi_s: (f64, f64),
    pub final_xi_s: f64,
    pub robertson_min: f64,
    pub max_norm_drift: f64,
}

impl AmplificationArtifact {
    pub fn state_at(&self, t: f64) -> Option<&Captured> {
        self.captured.iter().find(|c| (c.t - t).abs() < 1e-9)
    }

    /// Smallest `xi_S` reached no later than `t`.
    pub fn min_xi_s_until(&self, t: f64) -> f64 {
        self.reports
            .iter()
            .filter(|r| r.t <= t + 1e-9)
            .map(|r| r.xi_s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn xi_s_at(&self, t: f64) -> Option<f64> {
        self.reports
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .map(|r| r.xi_s)
    }
}

fn nearest_step(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Ground state at `lambda0` driven by `lambda0 (1 + amplitude sin(w t))`.
/// States are kept at `capture` times (snapped to the step grid).
pub fn run_amplification(
    cfg: &ExperimentConfig,
    cal: &CalibrationArtifact,
    amplitude: f64,
    capture: &[f64],
) -> RunResult<AmplificationArtifact> {
    let a = &cfg.amplification;
    let n = cal.n_atoms;
    let omega_drive = a.drive.resolve(cal.omega_j);
    let ramp = parametric_drive(
        cfg.system.lambda0,
        amplitude,
        omega_drive,
        (0.0, a.duration),
        a.dt_ctrl,
        Some(&cal.map),
    )?;
    let h0 = TwoModeHamiltonian::new(cal.omega, cal.kappa, n)?;
    let (psi0, _) = parasqueeze::two_mode::ground_state(&h0)?;
    let (steps, dt) = step_grid(a.duration, cfg.system.dt)?;
    let record = a.record_every.max(1);
    let capture_steps: Vec<(usize, f64)> = capture.iter().map(|&t| (nearest_step(t, dt), t)).collect();
    let husimi_steps: Vec<(usize, f64)> = a.husimi_times.iter().map(|&t| (nearest_step(t, dt), t)).collect();
    let theta = linspace(0.0, std::f64::consts::PI, a.husimi_theta_points);
    let phi = linspace(-std::f64::consts::PI, std::f64::consts::PI, a.husimi_phi_points);

    let schedule = ramp.schedule(&cal.map);
    let mut reports = Vec::new();
    let mut husimis = Vec::new();
    let mut captured = Vec::new();
    let mut min_xi = (0.0, f64::INFINITY);
    let mut robertson = f64::INFINITY;
    let mut failure = None;
    let (_, diag) = evolve_with(&psi0, &schedule, a.duration, cfg.system.dt, |s, psi| {
        let r = squeezing_factors(psi);
        robertson = robertson.min(r.robertson_margin());
        if r.xi_s < min_xi.1 {
            min_xi = (psi.time(), r.xi_s);
        }
        if s % record == 0 || s == steps {
            let (o, k) = schedule.params(psi.time());
            match TwoModeHamiltonian::new(o, k, n).and_then(|h| squeezing_report(psi, &h)) {
                Ok(r) => reports.push(r),
                Err(e) => failure = Some(e),
            }
        }
        for &(_, t) in capture_steps.iter().filter(|(cs, _)| *cs == s) {
            captured.push(Captured {
                t,
                lambda: ramp.value_at(psi.time()),
                state: psi.clone().with_time(t),
            });
        }
        if husimi_steps.iter().any(|(hs, _)| *hs == s) {
            match husimi(psi, &theta, &phi) {
                Ok(g) => husimis.push((psi.time(), g)),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let initial_xi_s = reports.first().map(|r| r.xi_s).unwrap_or(f64::NAN);
    let final_xi_s = reports.last().map(|r| r.xi_s).unwrap_or(f64::NAN);
    Ok(AmplificationArtifact {
        amplitude,
        omega_drive,
        initial_xi_s,
        reports,
        husimi: husimis,
        captured,
        ramp,
        min_xi_s: min_xi,
        final_xi_s,
        robertson_min: robertson,
        max_norm_drift: diag.max_norm_drift,
    })
}

pub fn write_amplification(dir: &Path, art: &AmplificationArtifact) -> RunResult<()> {
    std::fs::create_dir_all(dir)?;
    io::write_reports(&dir.join("squeezing.csv"), &art.reports)?;
    io::write_gnuplot_script(&dir.join("squeezing.gp"), PlotKind::Squeezing, "squeezing.csv", "Amplification")?;
    io::write_ramp(&dir.join("drive.csv"), &art.ramp)?;
    io::write_gnuplot_script(&dir.join("drive.gp"), PlotKind::Ramp, "drive.csv", "Drive")?;
    for (t, grid) in &art.husimi {
        let stem = format!("husimi_t{t:.3}");
        io::write_husimi(&dir.join(format!("{stem}.dat")), grid)?;
        io::write_gnuplot_script(
            &dir.join(format!("{stem}.gp")),
            PlotKind::HusimiSphere,
            &format!("{stem}.dat"),
            &format!("Husimi t = {t:.3} ms"),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrapRun {
    pub gamma: f64,
    pub trace: OctTrace64,
    pub ramp: ControlRamp64,
    pub linear_final: SqueezingReport64,
    pub optimized_final: SqueezingReport64,
    pub linear_jz2: f64,
    pub optimized_jz2: f64,
    pub linear_energy_per_atom: f64,
    pub energy_per_atom: f64,
    pub during: Vec<SqueezingReport64>,
    pub hold: Vec<SqueezingReport64>,
    /// Largest relative change of `xi_S` during the hold.
    pub hold_variation: f64,
    /// `Omega` at the end of the ramp over `Omega` at `lambda0`.
    pub omega_ratio: f64,
    pub robertson_min: f64,
}

#[derive(Debug, Clone)]
pub struct TrappingArtifact {
    pub t0: f64,
    pub lambda_start: f64,
    pub initial: SqueezingReport64,
    pub runs: Vec<TrapRun>,
    pub two_parameter: Option<TwoParameterResult<f64>>,
    pub two_parameter_ramp: Option<ControlRamp64>,
}

impl TrappingArtifact {
    pub fn stalled(&self) -> bool {
        self.runs.iter().any(|r| r.trace.stalled())
    }

    pub fn robertson_min(&self) -> f64 {
        self.runs.iter().map(|r| r.robertson_min).fold(f64::INFINITY, f64::min)
    }

    /// Best terminal `xi_S` among the optimized ramps.
    pub fn best_oct_xi_s(&self) -> f64 {
        self.runs
            .iter()
            .map(|r| r.optimized_final.xi_s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn run(&self, gamma: f64) -> Option<&TrapRun> {
        self.runs.iter().find(|r| r.gamma == gamma)
    }
}

struct Sampled {
    last: ManyBodyState64,
    reports: Vec<SqueezingReport64>,
    robertson: f64,
}

fn sample<S: TwoModeSchedule<f64>>(
    psi: &ManyBodyState64,
    schedule: &S,
    t_end: f64,
    dt: f64,
    every: usize,
) -> RunResult<Sampled> {
    let mut reports = Vec::new();
    let mut robertson = f64::INFINITY;
    let (steps, _) = step_grid(t_end - psi.time(), dt)?;
    let every = every.max(1);
    let (last, _) = evolve_with(psi, schedule, t_end, dt, |s, p| {
        let r = squeezing_factors(p);
        robertson = robertson.min(r.robertson_margin());
        if s % every == 0 || s == steps {
            reports.push(r);
        }
    })?;
    Ok(Sampled {
        last,
        reports,
        robertson,
    })
}

/// Linear ramp from `lambda_start` to the trapping end value starting at `t0`.
pub fn linear_trap_ramp(cfg: &ExperimentConfig, t0: f64, lambda_start: f64) -> RunResult<ControlRamp64> {
    let t = &cfg.trapping;
    Ok(ControlRamp::linear(t0, t0 + t.duration, t.dt_ctrl, lambda_start, t.lambda_end)?)
}

fn oct_options(cfg: &ExperimentConfig) -> OctOptions<f64> {
    let t = &cfg.trapping;
    OctOptions {
        max_iters: t.max_iters,
        grad_tol: t.grad_tol,
        rel_tol: t.rel_tol,
        initial_step: t.initial_step,
        ..Default::default()
    }
}

fn trap_one(
    cfg: &ExperimentConfig,
    cal: &CalibrationArtifact,
    psi0: &ManyBodyState64,
    linear: &ControlRamp64,
    gamma: f64,
    index: usize,
) -> RunResult<TrapRun> {
    let t = &cfg.trapping;
    let dt = cfg.system.dt;
    let n = cal.n_atoms as f64;
    let (lo, hi) = cal.map.support();
    let mut start = linear.clone();
    if t.perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
        let last = start.len() - 1;
        for v in &mut start.samples[1..last] {
            *v = (*v + rng.gen_range(-t.perturbation..=t.perturbation)).clamp(lo, hi);
        }
    }
    let problem = OctProblem::new(psi0.clone(), cal.map.clone(), start, gamma, t.nu, dt)?;
    let t_end = linear.t_end();

    let base = sample(psi0, &linear.schedule(&cal.map), t_end, dt, t.record_every)?;
    let (ramp, trace) = optimize(&problem, oct_options(cfg))?;
    let opt = sample(psi0, &ramp.schedule(&cal.map), t_end, dt, t.record_every)?;
    let h_t = problem.terminal_hamiltonian(&ramp)?;
    let (o_end, k_end) = cal.map.params(ramp.last());
    let hold = sample(&opt.last, &Static(o_end, k_end), t_end + t.hold, dt, t.record_every)?;

    let linear_final = squeezing_report(&base.last, &h_t)?;
    let optimized_final = squeezing_report(&opt.last, &h_t)?;
    let xi_t = optimized_final.xi_s;
    let hold_variation = hold
        .reports
        .iter()
        .map(|r| ((r.xi_s - xi_t) / xi_t).abs())
        .fold(0.0, f64::max);
    log::info!(
        "gamma {gamma}: {} iterations ({:?}), <Jz^2> {} -> {}",
        trace.iterations.len() - 1,
        trace.stop,
        jz2(&linear_final),
        jz2(&optimized_final)
    );
    Ok(TrapRun {
        gamma,
        linear_jz2: jz2(&linear_final),
        optimized_jz2: jz2(&optimized_final),
        linear_energy_per_atom: linear_final.energy.unwrap_or(f64::NAN) / n,
        energy_per_atom: optimized_final.energy.unwrap_or(f64::NAN) / n,
        linear_final,
        optimized_final,
        trace,
        ramp,
        during: opt.reports,
        hold: hold.reports,
        hold_variation,
        omega_ratio: o_end / cal.map.omega(cfg.system.lambda0),
        robertson_min: base.robertson.min(opt.robertson).min(hold.robertson),
    })
}

/// Optimizes a trapping ramp for every configured `gamma`, starting from
/// `psi0` at `t0` with `lambda(t0) = lambda_start`.
pub fn run_trapping(
    cfg: &ExperimentConfig,
    cal: &CalibrationArtifact,
    psi0: &ManyBodyState64,
    t0: f64,
    lambda_start: f64,
) -> RunResult<TrappingArtifact> {
    let psi0 = psi0.clone().with_time(t0);
    let linear = linear_trap_ramp(cfg, t0, lambda_start)?;
    let runs = cfg
        .trapping
        .gammas
        .par_iter()
        .enumerate()
        .map(|(i, &g)| trap_one(cfg, cal, &psi0, &linear, g, i))
        .collect::<RunResult<Vec<_>>>()?;
    let (two_parameter, two_parameter_ramp) = if cfg.trapping.two_parameter {
        let (r, ramp) = run_two_parameter(cfg, cal, &psi0, &linear)?;
        (Some(r), Some(ramp))
    } else {
        (None, None)
    };
    Ok(TrappingArtifact {
        t0,
        lambda_start,
        initial: squeezing_factors(&psi0),
        runs,
        two_parameter,
        two_parameter_ramp,
    })
}

/// Sinusoidal two-parameter search over the same window and boundary values.
pub fn run_two_parameter(
    cfg: &ExperimentConfig,
    cal: &CalibrationArtifact,
    psi0: &ManyBodyState64,
    linear: &ControlRamp64,
) -> RunResult<(TwoParameterResult<f64>, ControlRamp64)> {
    let t = &cfg.trapping;
    let problem = OctProblem::new(psi0.clone(), cal.map.clone(), linear.clone(), 0.0, t.nu, cfg.system.dt)?;
    let opts = NelderMeadOptions {
        max_evals: t.two_parameter_evals,
        ..Default::default()
    };
    let (lo, hi) = t.two_parameter_ratio;
    Ok(two_parameter_optimize(
        &problem,
        (0.0, t.two_parameter_amplitude_max),
        (lo * cal.omega_j, hi * cal.omega_j),
        opts,
    )?)
}

#[derive(Debug, Serialize)]
struct TrapSummaryRow {
    gamma: f64,
    iterations: usize,
    stop: String,
    linear_jz2: f64,
    jz2: f64,
    linear_xi_s: f64,
    xi_s: f64,
    linear_energy_per_atom: f64,
    energy_per_atom: f64,
    hold_variation: f64,
    omega_ratio: f64,
}

fn gamma_dir(g: f64) -> String {
    format!("gamma_{g}")
}

pub fn write_trapping(dir: &Path, art: &TrappingArtifact) -> RunResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("summary.csv"))?;
    for r in &art.runs {
        let sub = dir.join(gamma_dir(r.gamma));
        std::fs::create_dir_all(&sub)?;
        io::write_ramp(&sub.join("ramp.csv"), &r.ramp)?;
        io::write_gnuplot_script(&sub.join("ramp.gp"), PlotKind::Ramp, "ramp.csv", &format!("Ramp gamma = {}", r.gamma))?;
        io::write_oct_trace(&sub.join("oct_trace.csv"), &r.trace)?;
        io::write_gnuplot_script(&sub.join("oct_trace.gp"), PlotKind::OctTrace, "oct_trace.csv", "Objective")?;
        let mut series = r.during.clone();
        series.extend(r.hold.iter().skip(1).cloned());
        io::write_reports(&sub.join("squeezing.csv"), &series)?;
        io::write_gnuplot_script(&sub.join("squeezing.gp"), PlotKind::Squeezing, "squeezing.csv", "Trapping and hold")?;
        w.serialize(TrapSummaryRow {
            gamma: r.gamma,
            iterations: r.trace.iterations.len() - 1,
            stop: format!("{:?}", r.trace.stop),
            linear_jz2: r.linear_jz2,
            jz2: r.optimized_jz2,
            linear_xi_s: r.linear_final.xi_s,
            xi_s: r.optimized_final.xi_s,
            linear_energy_per_atom: r.linear_energy_per_atom,
            energy_per_atom: r.energy_per_atom,
            hold_variation: r.hold_variation,
            omega_ratio: r.omega_ratio,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    if let (Some(tp), Some(ramp)) = (&art.two_parameter, &art.two_parameter_ramp) {
        let sub = dir.join("two_parameter");
        std::fs::create_dir_all(&sub)?;
        io::write_ramp(&sub.join("ramp.csv"), ramp)?;
        let text = serde_json::to_string_pretty(tp).expect("serializes");
        std::fs::write(sub.join("result.json"), text + "\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct LinesearchRow {
    pub t0: f64,
    pub lambda_start: f64,
    pub xi_s: f64,
    pub jz2: f64,
}

#[derive(Debug, Clone)]
pub struct LinesearchArtifact {
    pub rows: Vec<LinesearchRow>,
    pub best_t0: f64,
    pub best_xi_s: f64,
    pub robertson_min: f64,
}

pub fn linesearch_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let l = &cfg.linesearch;
    if l.points == 1 || l.t0_min == l.t0_max {
        vec![l.t0_min]
    } else {
        linspace(l.t0_min, l.t0_max, l.points)
    }
}

/// Linear trapping ramp from each scanned `t0`; states come from `amp`,
/// which must have captured every scan time.
pub fn run_linesearch(
    cfg: &ExperimentConfig,
    cal: &CalibrationArtifact,
    amp: &AmplificationArtifact,
) -> RunResult<LinesearchArtifact> {
    let times = linesearch_times(cfg);
    let dt = cfg.system.dt;
    let results = times
        .par_iter()
        .map(|&t0| {
            let c = amp
                .state_at(t0)
                .ok_or_else(|| RunError::Config(format!("no amplified state captured at t0 = {t0}")))?;
            let ramp = linear_trap_ramp(cfg, t0, c.lambda)?;
            let out = sample(&c.state, &ramp.schedule(&cal.map), ramp.t_end(), dt, usize::MAX)?;
            let r = squeezing_factors(&out.last);
            Ok((
                LinesearchRow {
                    t0,
                    lambda_start: c.lambda,
                    xi_s: r.xi_s,
                    jz2: jz2(&r),
                },
                out.robertson,
            ))
        })
        .collect::<RunResult<Vec<_>>>()?;
    let robertson_min = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let rows: Vec<LinesearchRow> = results.into_iter().map(|r| r.0).collect();
    let best = rows
        .iter()
        .min_by(|a, b| a.xi_s.total_cmp(&b.xi_s))
        .expect("at least one scan point");
    Ok(LinesearchArtifact {
        best_t0: best.t0,
        best_xi_s: best.xi_s,
        rows,
        robertson_min,
    })
}

pub fn write_linesearch(dir: &Path, art: &LinesearchArtifact) -> RunResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("linesearch.csv"))?;
    for r in &art.rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonancePoint {
    pub ratio: f64,
    pub omega_drive: f64,
    /// Exponential growth rate of `Var(Jz)` in 1/ms; `None` if the fit failed.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ResonanceArtifact {
    pub calibration: CalibrationArtifact,
    pub points: Vec<ResonancePoint>,
    pub robertson_min: f64,
}

impl ResonanceArtifact {
    /// Drive ratio with the largest fitted rate.
    pub fn peak_ratio(&self) -> Option<f64> {
        self.points
            .iter()
            .filter_map(|p| p.rate.map(|r| (p.ratio, r)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|p| p.0)
    }

    pub fn rate_at(&self, ratio: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.ratio - ratio).abs() < 1e-9)
            .and_then(|p| p.rate)
    }
}

/// Least-squares slope of `log Var(Jz)` after averaging over consecutive
/// windows of one Josephson period.
pub fn growth_rate(times: &[f64], var_jz: &[f64], period: f64) -> Option<f64> {
    if times.len() < 2 || !(period > 0.0) {
        return None;
    }
    let mut centers = Vec::new();
    let mut logs = Vec::new();
    let mut start = 0;
    while start < times.len() {
        let t_start = times[start];
        let mut end = start;
        while end < times.len() && times[end] < t_start + period {
            end += 1;
        }
        if end == times.len() && times[end - 1] - t_start < 0.99 * period {
            break;
        }
        let m = var_jz[start..end].iter().sum::<f64>() / (end - start) as f64;
        if !(m > 0.0) || !m.is_finite() {
            return None;
        }
        centers.push(0.5 * (t_start + times[end - 1]));
        logs.push(m.ln());
        start = end;
    }
    if centers.len() < 3 {
        return None;
    }
    let k = centers.len() as f64;
    let mx = centers.iter().sum::<f64>() / k;
    let my = logs.iter().sum::<f64>() / k;
    let sxy: f64 = centers.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = centers.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

pub fn resonance_ratios(cfg: &ExperimentConfig) -> Vec<f64> {
    let r = &cfg.resonance;
    if r.points == 1 {
        vec![r.ratio_min]
    } else {
        linspace(r.ratio_min, r.ratio_max, r.points)
    }
}

/// Growth rate of `Var(Jz)` for drive frequencies around twice the Josephson
/// frequency, starting from the ground state at `lambda0`.
pub fn run_resonance(cfg: &ExperimentConfig) -> RunResult<ResonanceArtifact> {
    let r = &cfg.resonance;
    let cal = run_calibration(cfg, r.n_atoms)?;
    let h0 = TwoModeHamiltonian::new(cal.omega, cal.kappa, r.n_atoms)?;
    let (psi0, _) = parasqueeze::two_mode::ground_state(&h0)?;
    let period = std::f64::consts::TAU / cal.omega_j;
    let dt = cfg.system.dt;
    let results = resonance_ratios(cfg)
        .par_iter()
        .map(|&ratio| {
            let omega_drive = ratio * cal.omega_j;
            let ramp = parametric_drive(
                cfg.system.lambda0,
                r.amplitude,
                omega_drive,
                (0.0, r.duration),
                cfg.amplification.dt_ctrl,
                Some(&cal.map),
            )?;
            let mut times = Vec::new();
            let mut var = Vec::new();
            let mut robertson = f64::INFINITY;
            evolve_with(&psi0, &ramp.schedule(&cal.map), r.duration, dt, |_, p| {
                let s = squeezing_factors(p);
                robertson = robertson.min(s.robertson_margin());
                times.push(p.time());
                var.push(s.var_jz);
            })?;
            let rate = growth_rate(&times, &var, period);
            if rate.is_none() {
                log::warn!("growth-rate fit failed at drive ratio {ratio}");
            }
            Ok((
                ResonancePoint {
                    ratio,
                    omega_drive,
                    rate,
                },
                robertson,
            ))
        })
        .collect::<RunResult<Vec<_>>>()?;
    let robertson_min = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(ResonanceArtifact {
        calibration: cal,
        points: results.into_iter().map(|r| r.0).collect(),
        robertson_min,
    })
}

pub fn write_resonance(dir: &Path, art: &ResonanceArtifact) -> RunResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("resonance.csv"))?;
    for p in &art.points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    io::write_gnuplot_script(&dir.join("resonance.gp"), PlotKind::Resonance, "resonance.csv", "Resonance scan")?;
    Ok(())
}

fn csv_writer(path: &Path) -> RunResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> RunError {
    RunError::Output(e.to_string())
}

/// Capture times needed by trapping and the line search.
pub fn capture_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut t = linesearch_times(cfg);
    t.push(cfg.trapping.t0);
    t
}

/// Outcome of a CLI verb: the manifest summary and whether an optimizer stalled.
#[derive(Debug)]
pub struct VerbOutcome {
    pub summary: serde_json::Value,
    pub stalled: bool,
}

fn finish(dir: &Path, verb: &str, cfg: &ExperimentConfig, outcome: VerbOutcome) -> RunResult<VerbOutcome> {
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    Manifest::collect(dir, verb, cfg, outcome.stalled, outcome.summary.clone())?.write(dir)?;
    Ok(outcome)
}

fn calibration_summary(cal: &CalibrationArtifact) -> serde_json::Value {
    json!({
        "n_atoms": cal.n_atoms,
        "charging_ratio": cal.charging_ratio,
        "omega": cal.omega,
        "kappa": cal.kappa,
        "xi_s": cal.xi_s,
        "josephson_khz": cal.josephson_khz,
    })
}

fn amplification_summary(a: &AmplificationArtifact) -> serde_json::Value {
    json!({
        "amplitude": a.amplitude,
        "omega_drive": a.omega_drive,
        "initial_xi_s": a.initial_xi_s,
        "min_xi_s": a.min_xi_s.1,
        "min_xi_s_time": a.min_xi_s.0,
        "final_xi_s": a.final_xi_s,
    })
}

fn trapping_summary(t: &TrappingArtifact) -> serde_json::Value {
    json!({
        "t0": t.t0,
        "initial_xi_s": t.initial.xi_s,
        "runs": t.runs.iter().map(|r| json!({
            "gamma": r.gamma,
            "stop": format!("{:?}", r.trace.stop),
            "iterations": r.trace.iterations.len() - 1,
            "monotone": r.trace.is_monotone(),
            "linear_jz2": r.linear_jz2,
            "jz2": r.optimized_jz2,
            "xi_s": r.optimized_final.xi_s,
            "energy_per_atom": r.energy_per_atom,
            "hold_variation": r.hold_variation,
        })).collect::<Vec<_>>(),
        "two_parameter_xi_s": t.two_parameter.map(|r| r.xi_s),
    })
}

/// Runs `verb` and writes its outputs and manifest below `cfg.output_dir`.
pub fn run_verb(verb: &str, cfg: &ExperimentConfig) -> RunResult<VerbOutcome> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let n = cfg.system.n_atoms;
    let outcome = match verb {
        "calibrate" => {
            let cal = run_calibration(cfg, n)?;
            write_calibration(&dir, &cal)?;
            VerbOutcome {
                summary: calibration_summary(&cal),
                stalled: false,
            }
        }
        "amplify" => {
            let cal = run_calibration(cfg, n)?;
            let amp = run_amplification(cfg, &cal, cfg.amplification.amplitude, &[])?;
            write_calibration(&dir, &cal)?;
            write_amplification(&dir, &amp)?;
            VerbOutcome {
                summary: amplification_summary(&amp),
                stalled: false,
            }
        }
        "trap" => {
            let cal = run_calibration(cfg, n)?;
            let t0 = cfg.trapping.t0;
            let amp = run_amplification(cfg, &cal, cfg.amplification.amplitude, &[t0])?;
            let c = amp.state_at(t0).expect("captured");
            let trap = run_trapping(cfg, &cal, &c.state, t0, c.lambda)?;
            write_trapping(&dir, &trap)?;
            VerbOutcome {
                summary: trapping_summary(&trap),
                stalled: trap.stalled(),
            }
        }
        "linesearch" => {
            let cal = run_calibration(cfg, n)?;
            let amp = run_amplification(cfg, &cal, cfg.amplification.amplitude, &linesearch_times(cfg))?;
            let ls = run_linesearch(cfg, &cal, &amp)?;
            write_linesearch(&dir, &ls)?;
            VerbOutcome {
                summary: json!({ "best_t0": ls.best_t0, "best_xi_s": ls.best_xi_s }),
                stalled: false,
            }
        }
        "resonance" => {
            let res = run_resonance(cfg)?;
            write_resonance(&dir, &res)?;
            VerbOutcome {
                summary: json!({ "peak_ratio": res.peak_ratio(), "omega_j": res.calibration.omega_j }),
                stalled: false,
            }
        }
        "full-pipeline" => {
            let cal = run_calibration(cfg, n)?;
            write_calibration(&dir.join("calibrate"), &cal)?;
            let amp = run_amplification(cfg, &cal, cfg.amplification.amplitude, &capture_times(cfg))?;
            write_amplification(&dir.join("amplify"), &amp)?;
            let t0 = cfg.trapping.t0;
            let c = amp.state_at(t0).expect("captured");
            let trap = run_trapping(cfg, &cal, &c.state, t0, c.lambda)?;
            write_trapping(&dir.join("trap"), &trap)?;
            let ls = run_linesearch(cfg, &cal, &amp)?;
            write_linesearch(&dir.join("linesearch"), &ls)?;
            let res = run_resonance(cfg)?;
            write_resonance(&dir.join("resonance"), &res)?;
            VerbOutcome {
                summary: json!({
                    "calibration": calibration_summary(&cal),
                    "amplification": amplification_summary(&amp),
                    "trapping": trapping_summary(&trap),
                    "linesearch": { "best_t0": ls.best_t0, "best_xi_s": ls.best_xi_s },
                    "resonance": { "peak_ratio": res.peak_ratio() },
                }),
                stalled: trap.stalled(),
            }
        }
        other => return Err(RunError::Config(format!("unknown verb `{other}`"))),
    };
    finish(&dir, verb, cfg, outcome)
}
