use std::path::{Path, PathBuf};

use serde::Serialize;
use tdswanson::fock_su11::MetricState;
use tdswanson::lr_solver::{self, LrState, LrTrajectory};
use tdswanson::metric_flow::{FlowOptions, MetricTrajectory};
use tdswanson::model::CoefficientScenario;
use tdswanson::observables::{self, ObservableReport};
use tdswanson::oracle::{self, Check, FD_STEP};
use tdswanson::static_metric::{self, ForbiddenBand, StaticEpsilon, StaticMetricSolution, StaticSolution};

use crate::config::{LoadedConfig, Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{self, num};

pub const HERMITIZATION_TOL: f64 = 1e-8;
pub const DYSON_TOL: f64 = 1e-6;
pub const LR_DISCREPANCY_TOL: f64 = 1e-5;
pub const RHO_DRIFT_TOL: f64 = 1e-7;
pub const TDSE_TOL: f64 = 1e-6;
pub const INVARIANT_TOL: f64 = 1e-6;
pub const SPECTRUM_TOL: f64 = 1e-8;
pub const CUBIC_TOL: f64 = 1e-10;
pub const STATIC_RESIDUAL_TOL: f64 = 1e-8;
/// Invariant eigenpairs compared by the transfer check.
pub const INVARIANT_LEVELS: usize = 3;

pub const TRAJECTORY_HEADER: [&str; 11] =
    ["t", "Phi", "varphi", "epsilon", "W", "Re V", "Im V", "kappa", "zeta", "res_eq12", "res_TVstar"];
pub const LR_HEADER: [&str; 7] = ["t", "r", "phi_s", "Re theta", "Im theta", "varpi", "Omega"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub verify: bool,
    pub quiet: bool,
}

/// Checks with an error list for checks that could not be evaluated.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Verification {
    pub checks: Vec<Check>,
    pub errors: Vec<CheckError>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckError {
    pub check: String,
    pub message: String,
}

impl Verification {
    fn push(&mut self, name: impl Into<String>, residual: f64, threshold: f64) {
        let name = name.into();
        self.checks.push(Check { pass: residual <= threshold, name, residual, threshold });
    }

    fn fail(&mut self, name: impl Into<String>, e: impl std::fmt::Display) {
        self.errors.push(CheckError { check: name.into(), message: e.to_string() });
    }

    fn finish(mut self) -> Self {
        self.all_pass = self.errors.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }

    fn failures(&self) -> Vec<String> {
        let failed = self.checks.iter().filter(|c| !c.pass).map(|c| format!("{} = {:e} > {:e}", c.name, c.residual, c.threshold));
        failed.chain(self.errors.iter().map(|e| format!("{}: {}", e.check, e.message))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub verification: Option<Verification>,
}

/// Runs the pipeline of the config's mode and writes its artifacts to `out`.
pub fn run(loaded: &LoadedConfig, out: &Path, opts: RunOptions) -> CliResult<RunOutcome> {
    loaded.config.validate(None)?;
    loaded.check_scenario()?;
    output::ensure_dir(out)?;
    let verify = opts.verify || loaded.config.verify;
    match loaded.config.mode {
        Mode::Complex | Mode::Real | Mode::Identity => run_flow(loaded, out, verify),
        Mode::Static => run_static(loaded, out, verify),
        Mode::StaticReal => run_static_real(loaded, out, verify),
    }
}

/// Initial metric state of a time-dependent run.
pub fn initial_state(cfg: &RunConfig) -> CliResult<MetricState> {
    if cfg.mode == Mode::Identity {
        return Ok(MetricState::identity());
    }
    let z = cfg.z_abs.unwrap_or_default();
    let phi = cfg.initial.phi.unwrap_or_default();
    let st = MetricState::new(z, phi, cfg.initial.varphi).map_err(CliError::config)?;
    if let Some(r) = &st.infeasibility {
        return Err(CliError::Config(format!(
            "initial metric (|z|, Φ) = ({z}, {phi}) is infeasible: {r}; feasibility needs |z| > 2Φ/(1+Φ²)"
        )));
    }
    Ok(st)
}

/// Initial LR data: explicit squeeze, or the squeeze matched to η(t0).
pub fn initial_lr(cfg: &RunConfig, state: &MetricState) -> CliResult<LrState> {
    let theta = cfg.initial.theta.0;
    match cfg.initial.r {
        Some(r) => Ok(LrState::new(r, cfg.initial.phi_s.unwrap_or_default(), theta)),
        None => LrState::matched(state, theta).map_err(CliError::config),
    }
}

fn trajectory_rows(traj: &MetricTrajectory) -> Vec<Vec<String>> {
    traj.samples
        .iter()
        .map(|s| {
            let h = &s.hermitized;
            vec![
                num(s.t),
                num(s.state.phi_cap),
                num(s.state.varphi),
                output::opt(s.state.epsilon),
                num(h.w),
                num(h.v.re),
                num(h.v.im),
                num(h.kappa),
                num(s.zeta_unwrapped),
                num(s.res_imag_w),
                num(s.res_tv),
            ]
        })
        .collect()
}

fn lr_rows(traj: &LrTrajectory) -> Vec<Vec<String>> {
    traj.samples
        .iter()
        .map(|s| vec![num(s.t), num(s.lr.r), num(s.lr.phi_s), num(s.lr.theta.re), num(s.lr.theta.im), num(s.lr.varpi), num(s.omega)])
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct ObservableEntry {
    t: f64,
    report: Option<ObservableReport>,
    error: Option<String>,
}

fn observable_entries(scenario: &CoefficientScenario, traj: &MetricTrajectory, dim: usize) -> Vec<ObservableEntry> {
    let picks = match traj.samples.len() {
        0 => vec![],
        1 => vec![0],
        n => vec![0, n - 1],
    };
    picks
        .into_iter()
        .map(|i| {
            let s = &traj.samples[i];
            let result = scenario
                .coefficients(s.t)
                .and_then(|k| observables::observable_report(&s.state, k.omega.norm(), dim));
            match result {
                Ok(r) => ObservableEntry { t: s.t, report: Some(r), error: None },
                Err(e) => ObservableEntry { t: s.t, report: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}

/// Interior grid samples used for the Dyson and invariant checks.
fn probe_times(traj: &MetricTrajectory) -> Vec<f64> {
    let n = traj.samples.len();
    let mut idx: Vec<usize> = [n / 4, n / 2, (3 * n) / 4].into_iter().filter(|&i| i > 0 && i + 1 < n).collect();
    idx.dedup();
    idx.into_iter().map(|i| traj.samples[i].t).collect()
}

fn verify_flow(
    loaded: &LoadedConfig,
    flow: &FlowOptions,
    state0: &MetricState,
    lr0: &LrState,
    traj: &LrTrajectory,
) -> Verification {
    let cfg = &loaded.config;
    let sc = &loaded.scenario;
    let grid = cfg.grid.expect("validated");
    let mut v = Verification::default();
    v.push("hermitization.imag_w", traj.metric.max_imag_w(), HERMITIZATION_TOL);
    v.push("hermitization.t_minus_v_conj", traj.metric.max_t_minus_v_conj(), HERMITIZATION_TOL);
    let times = probe_times(&traj.metric);
    for &t in &times {
        match oracle::trajectory_residuals(sc, &traj.metric, flow, t, cfg.dim, FD_STEP) {
            Ok(r) => {
                v.push(format!("dyson.analytic@t={t}"), r.analytic, DYSON_TOL);
                v.push(format!("dyson.stencil@t={t}"), r.finite_difference, DYSON_TOL);
                v.push(format!("quasi_hermiticity@t={t}"), r.quasi_hermiticity, DYSON_TOL);
            }
            Err(e) => v.fail(format!("dyson@t={t}"), e),
        }
    }
    for &n in &cfg.levels {
        match oracle::lr_vs_direct(sc, state0, lr0, n, &grid, cfg.dim, flow, false) {
            Ok(r) => {
                v.push(format!("lr_vs_direct.n{n}.discrepancy"), r.max_discrepancy, LR_DISCREPANCY_TOL);
                v.push(format!("lr_vs_direct.n{n}.rho_norm_drift"), r.rho_norm_drift, RHO_DRIFT_TOL);
                v.push(format!("lr_vs_direct.n{n}.tdse"), r.max_tdse_residual, TDSE_TOL);
            }
            Err(e) => v.fail(format!("lr_vs_direct.n{n}"), e),
        }
    }
    if let Some(&t) = times.get(times.len() / 2) {
        match oracle::invariant_transfer_check(sc, traj, flow, t, cfg.dim, INVARIANT_LEVELS, FD_STEP) {
            Ok(r) => {
                v.push(format!("invariant.res_H@t={t}"), r.res_big, INVARIANT_TOL);
                v.push(format!("invariant.res_h@t={t}"), r.res_small, INVARIANT_TOL);
                v.push(format!("invariant.spectrum_gap@t={t}"), r.spectrum_gap, SPECTRUM_TOL);
            }
            Err(e) => v.fail(format!("invariant@t={t}"), e),
        }
    }
    v.finish()
}

fn finish_verification(out: &Path, files: &mut Vec<PathBuf>, v: Verification) -> CliResult<Verification> {
    files.push(output::write_json(out, "verification.json", &v)?);
    if v.all_pass {
        Ok(v)
    } else {
        Err(CliError::Check(v.failures().join("; ")))
    }
}

fn run_flow(loaded: &LoadedConfig, out: &Path, verify: bool) -> CliResult<RunOutcome> {
    let cfg = &loaded.config;
    let flow = cfg.flow_options().expect("time-dependent mode");
    let grid = cfg.grid.expect("validated");
    let state0 = initial_state(cfg)?;
    let lr0 = initial_lr(cfg, &state0)?;
    let traj = lr_solver::evolve(&loaded.scenario, &state0, &lr0, &grid, &flow).map_err(CliError::numerical)?;
    let mut files = vec![
        output::write_csv(out, "trajectory.csv", &TRAJECTORY_HEADER, trajectory_rows(&traj.metric))?,
        output::write_csv(out, "lr.csv", &LR_HEADER, lr_rows(&traj))?,
        output::write_json(out, "observables.json", &observable_entries(&loaded.scenario, &traj.metric, cfg.dim))?,
    ];
    if let Some((t, reason)) = &traj.stopped {
        let last = traj.samples.last().map_or(grid.t0, |s| s.t);
        return Err(CliError::Numerical(format!("flow halted at t = {t}: {reason}; last good output time {last}")));
    }
    let verification = if verify {
        Some(finish_verification(out, &mut files, verify_flow(loaded, &flow, &state0, &lr0, &traj))?)
    } else {
        None
    };
    Ok(RunOutcome { files, verification })
}

fn run_static(loaded: &LoadedConfig, out: &Path, verify: bool) -> CliResult<RunOutcome> {
    let z = loaded.config.z_abs.expect("validated");
    let (t0, _) = loaded.scenario.domain();
    let p = loaded.scenario.coefficients(t0).map_err(CliError::config)?.polar();
    let sol = static_metric::solve_static(z, &p).map_err(CliError::config)?;
    let mut files = vec![output::write_json(out, "static.json", &sol)?];
    let verification = if verify { Some(finish_verification(out, &mut files, verify_static(&sol))?) } else { None };
    if !sol.solutions.iter().any(|s| s.feasible) {
        return Err(CliError::Check(format!(
            "no feasible static metric at |z| = {z}: {} constraint solutions, none with λ0 > 0",
            sol.solutions.len()
        )));
    }
    Ok(RunOutcome { files, verification })
}

fn verify_static(sol: &StaticMetricSolution) -> Verification {
    let mut v = Verification::default();
    for (i, &phi) in sol.cubic.roots.iter().enumerate() {
        v.push(format!("cubic.root{i}"), static_metric::cubic_value(sol.z_abs, phi).abs(), CUBIC_TOL);
    }
    push_solution_checks(&mut v, "static", &sol.solutions);
    v.finish()
}

fn push_solution_checks(v: &mut Verification, prefix: &str, solutions: &[StaticSolution]) {
    for (i, s) in solutions.iter().enumerate() {
        v.push(format!("{prefix}.solution{i}.residual"), s.residuals.max(), STATIC_RESIDUAL_TOL);
    }
}

/// Static metric report for constant real coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct StaticRealReport {
    pub z_abs: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: StaticEpsilon,
    pub forbidden_band: Option<ForbiddenBand>,
    pub in_forbidden_band: bool,
    pub solutions: Vec<StaticSolution>,
}

/// Static-real quantities at one |z| and coefficient set.
pub fn static_real_report(z: f64, omega: f64, alpha: f64, beta: f64) -> CliResult<StaticRealReport> {
    let (w, a, b) = (omega.abs(), alpha.abs(), beta.abs());
    let band = static_metric::forbidden_band(w, a, b).map_err(CliError::config)?;
    Ok(StaticRealReport {
        z_abs: z,
        omega,
        alpha,
        beta,
        epsilon: static_metric::epsilon_static_real(z, w, a, b),
        in_forbidden_band: band.as_ref().is_some_and(|b| b.contains(z)),
        forbidden_band: band,
        solutions: static_metric::solve_static_real(z, omega, alpha, beta).map_err(CliError::config)?,
    })
}

/// Why a static-real point has no real ε, citing the band edges.
pub fn no_epsilon_message(r: &StaticRealReport) -> String {
    let reason = r.epsilon.reason.clone().unwrap_or_default();
    match &r.forbidden_band {
        Some(b) if r.in_forbidden_band => format!(
            "no real ε at |z| = {}: inside the forbidden band [z−, z+] = [{}, {}] of (|ω|, |α|, |β|) = ({}, {}, {}) ({reason})",
            r.z_abs,
            b.z_minus,
            b.z_plus,
            r.omega.abs(),
            r.alpha.abs(),
            r.beta.abs()
        ),
        _ => format!("no real ε at |z| = {}: {reason}", r.z_abs),
    }
}

fn run_static_real(loaded: &LoadedConfig, out: &Path, verify: bool) -> CliResult<RunOutcome> {
    let z = loaded.config.z_abs.expect("validated");
    let (t0, _) = loaded.scenario.domain();
    let k = loaded.scenario.coefficients(t0).map_err(CliError::config)?;
    let report = static_real_report(z, k.omega.re, k.alpha.re, k.beta.re)?;
    let mut files = vec![output::write_json(out, "static_real.json", &report)?];
    let verification = if verify {
        let mut v = Verification::default();
        push_solution_checks(&mut v, "static_real", &report.solutions);
        let consistent = report.in_forbidden_band == report.epsilon.value().is_none();
        v.push("static_real.band_consistency", if consistent { 0.0 } else { 1.0 }, 0.0);
        Some(finish_verification(out, &mut files, v.finish())?)
    } else {
        None
    };
    if report.epsilon.value().is_none() {
        return Err(CliError::Check(no_epsilon_message(&report)));
    }
    Ok(RunOutcome { files, verification })
}
