use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use tdswanson::metric_flow;
use tdswanson::model::{CoefficientScenario, FunctionSpec, ScenarioSpec};
use tdswanson::static_metric;

use crate::config::{LoadedConfig, Mode, RunConfig, SweepParam, SweepSpec};
use crate::error::{CliError, CliResult};
use crate::output::{self, num, opt};
use crate::run::{self, initial_state};

pub const SWEEP_HEADER: [&str; 19] = [
    "index",
    "value",
    "status",
    "z_abs",
    "n_cubic_roots",
    "cubic_roots",
    "epsilon",
    "in_forbidden_band",
    "n_solutions",
    "n_feasible",
    "max_residual",
    "t_end",
    "max_imag_w",
    "max_t_minus_v_conj",
    "final_phi",
    "final_varphi",
    "final_z_abs",
    "final_epsilon",
    "message",
];

/// One sweep point; fields that do not apply to the mode stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub status: String,
    pub z_abs: Option<f64>,
    pub cubic_roots: Option<Vec<f64>>,
    /// φ of each constraint solution.
    pub angles: Option<Vec<f64>>,
    /// Largest constraint residual of each solution.
    pub residuals: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub in_forbidden_band: Option<bool>,
    pub n_solutions: Option<usize>,
    pub n_feasible: Option<usize>,
    pub max_residual: Option<f64>,
    pub t_end: Option<f64>,
    pub max_imag_w: Option<f64>,
    pub max_t_minus_v_conj: Option<f64>,
    pub final_phi: Option<f64>,
    pub final_varphi: Option<f64>,
    pub final_z_abs: Option<f64>,
    pub final_epsilon: Option<f64>,
    pub message: String,
}

impl SweepRow {
    fn cells(&self) -> Vec<String> {
        let int = |x: Option<usize>| x.map(|n| n.to_string()).unwrap_or_default();
        vec![
            self.index.to_string(),
            num(self.value),
            self.status.clone(),
            opt(self.z_abs),
            int(self.cubic_roots.as_ref().map(Vec::len)),
            self.cubic_roots.as_ref().map(|r| r.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")).unwrap_or_default(),
            opt(self.epsilon),
            self.in_forbidden_band.map(|b| b.to_string()).unwrap_or_default(),
            int(self.n_solutions),
            int(self.n_feasible),
            opt(self.max_residual),
            opt(self.t_end),
            opt(self.max_imag_w),
            opt(self.max_t_minus_v_conj),
            opt(self.final_phi),
            opt(self.final_varphi),
            opt(self.final_z_abs),
            opt(self.final_epsilon),
            self.message.clone(),
        ]
    }
}

/// Change in the number of real cubic roots between neighbouring points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootCountTransition {
    pub from_value: f64,
    pub to_value: f64,
    pub from_roots: usize,
    pub to_roots: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub param: SweepParam,
    pub range: String,
    pub points: usize,
    pub ok: usize,
    pub not_ok: usize,
    pub transitions: Vec<RootCountTransition>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
    pub files: Vec<PathBuf>,
}

fn with_modulus(spec: &FunctionSpec, modulus: f64, name: &str) -> CliResult<FunctionSpec> {
    match spec {
        FunctionSpec::Constant { value } => {
            let arg = if value.0.norm() == 0.0 { 0.0 } else { value.0.arg() };
            Ok(FunctionSpec::constant(Complex64::from_polar(modulus, arg)))
        }
        _ => Err(CliError::Config(format!("sweeping {name}_abs needs a constant `{name}` coefficient"))),
    }
}

/// Scenario with the swept coefficient modulus replaced.
fn swept_scenario(spec: &ScenarioSpec, param: SweepParam, value: f64) -> CliResult<ScenarioSpec> {
    let mut s = spec.clone();
    match param {
        SweepParam::OmegaAbs => s.omega = with_modulus(&spec.omega, value, "omega")?,
        SweepParam::AlphaAbs => s.alpha = with_modulus(&spec.alpha, value, "alpha")?,
        SweepParam::BetaAbs => s.beta = with_modulus(&spec.beta, value, "beta")?,
        _ => {}
    }
    Ok(s)
}

fn swept_config(cfg: &RunConfig, param: SweepParam, value: f64) -> RunConfig {
    let mut c = cfg.clone();
    match param {
        SweepParam::ZAbs => c.z_abs = Some(value),
        SweepParam::Phi => c.initial.phi = Some(value),
        SweepParam::Varphi => c.initial.varphi = value,
        _ => {}
    }
    c
}

fn point(cfg: &RunConfig, scenario: &CoefficientScenario, index: usize, value: f64) -> SweepRow {
    let mut row = SweepRow { index, value, z_abs: cfg.z_abs, ..Default::default() };
    let result = match cfg.mode {
        Mode::Static => static_point(cfg, scenario, &mut row),
        Mode::StaticReal => static_real_point(cfg, scenario, &mut row),
        Mode::Complex | Mode::Real | Mode::Identity => flow_point(cfg, scenario, &mut row),
    };
    if let Err(e) = result {
        row.status = match e {
            CliError::Config(_) => "invalid",
            CliError::Check(_) => "failed",
            CliError::Numerical(_) => "numerical_failure",
        }
        .into();
        row.message = e.to_string();
    }
    row
}

fn z_in_open_unit(cfg: &RunConfig) -> CliResult<f64> {
    match cfg.z_abs {
        Some(z) if z > 0.0 && z < 1.0 => Ok(z),
        z => Err(CliError::Config(format!("static metric needs |z| in (0, 1), got {z:?}"))),
    }
}

fn static_point(cfg: &RunConfig, scenario: &CoefficientScenario, row: &mut SweepRow) -> CliResult<()> {
    let z = z_in_open_unit(cfg)?;
    let p = scenario.coefficients(scenario.domain().0).map_err(CliError::config)?.polar();
    let sol = static_metric::solve_static(z, &p).map_err(CliError::numerical)?;
    let feasible: Vec<_> = sol.solutions.iter().filter(|s| s.feasible).collect();
    row.cubic_roots = Some(sol.cubic.roots.clone());
    row.n_solutions = Some(sol.solutions.len());
    row.n_feasible = Some(feasible.len());
    row.angles = Some(sol.solutions.iter().map(|s| s.varphi).collect());
    row.residuals = Some(sol.solutions.iter().map(|s| s.residuals.max()).collect());
    row.max_residual = sol.solutions.iter().map(|s| s.residuals.max()).reduce(f64::max);
    row.epsilon = feasible.first().and_then(|s| s.epsilon);
    row.status = if feasible.is_empty() { "infeasible" } else { "ok" }.into();
    Ok(())
}

fn static_real_point(cfg: &RunConfig, scenario: &CoefficientScenario, row: &mut SweepRow) -> CliResult<()> {
    let z = z_in_open_unit(cfg)?;
    let k = scenario.coefficients(scenario.domain().0).map_err(CliError::config)?;
    let report = run::static_real_report(z, k.omega.re, k.alpha.re, k.beta.re)?;
    row.cubic_roots = Some(static_metric::solve_phi_cubic(z).map_err(CliError::numerical)?.roots);
    row.n_solutions = Some(report.solutions.len());
    row.n_feasible = Some(report.solutions.iter().filter(|s| s.feasible).count());
    row.angles = Some(report.solutions.iter().map(|s| s.varphi).collect());
    row.residuals = Some(report.solutions.iter().map(|s| s.residuals.max()).collect());
    row.max_residual = report.solutions.iter().map(|s| s.residuals.max()).reduce(f64::max);
    row.epsilon = report.epsilon.value();
    row.in_forbidden_band = Some(report.in_forbidden_band);
    if row.epsilon.is_some() {
        row.status = "ok".into();
    } else {
        row.status = "no_real_epsilon".into();
        row.message = run::no_epsilon_message(&report);
    }
    Ok(())
}

fn flow_point(cfg: &RunConfig, scenario: &CoefficientScenario, row: &mut SweepRow) -> CliResult<()> {
    let state0 = match initial_state(cfg) {
        Ok(s) => s,
        Err(e) => {
            row.status = "infeasible".into();
            row.message = e.to_string();
            return Ok(());
        }
    };
    row.epsilon = state0.epsilon;
    let opts = cfg.flow_options().expect("time-dependent mode");
    let grid = cfg.grid.expect("validated");
    let traj = metric_flow::integrate_metric(scenario, &state0, &grid, &opts).map_err(CliError::numerical)?;
    row.t_end = traj.samples.last().map(|s| s.t);
    row.max_imag_w = Some(traj.max_imag_w());
    row.max_t_minus_v_conj = Some(traj.max_t_minus_v_conj());
    if let Some(last) = traj.samples.last() {
        row.final_phi = Some(last.state.phi_cap);
        row.final_varphi = Some(last.state.varphi);
        row.final_z_abs = Some(last.state.z_abs);
        row.final_epsilon = last.state.epsilon;
    }
    match &traj.stopped {
        None => row.status = "complete".into(),
        Some((t, reason)) => {
            row.status = "halted".into();
            row.message = format!("halted at t = {t}: {reason}");
        }
    }
    Ok(())
}

fn transitions(rows: &[SweepRow]) -> Vec<RootCountTransition> {
    rows.windows(2)
        .filter_map(|w| {
            let a = w[0].cubic_roots.as_ref()?.len();
            let b = w[1].cubic_roots.as_ref()?.len();
            (a != b).then(|| RootCountTransition { from_value: w[0].value, to_value: w[1].value, from_roots: a, to_roots: b })
        })
        .collect()
}

/// Evaluates every sweep point in parallel; rows come back in sweep order.
pub fn evaluate(loaded: &LoadedConfig, spec: &SweepSpec) -> CliResult<Vec<SweepRow>> {
    let cfg = &loaded.config;
    cfg.validate(Some(spec.param))?;
    loaded.check_scenario()?;
    let values = spec.range.values();
    if spec.param.is_coefficient() {
        swept_scenario(loaded.scenario.spec(), spec.param, values[0])?;
    }
    let base_spec = loaded.scenario.spec();
    Ok(values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = swept_config(cfg, spec.param, v);
            let scenario = if spec.param.is_coefficient() {
                match swept_scenario(base_spec, spec.param, v).and_then(|s| CoefficientScenario::new(s).map_err(CliError::config)) {
                    Ok(s) => s,
                    Err(e) => {
                        return SweepRow { index: i, value: v, status: "invalid".into(), message: e.to_string(), ..Default::default() };
                    }
                }
            } else {
                loaded.scenario.clone()
            };
            point(&c, &scenario, i, v)
        })
        .collect())
}

#[derive(Serialize)]
struct SweepReport<'a> {
    param: SweepParam,
    range: String,
    points: &'a [SweepRow],
}

/// Runs a sweep and writes `sweep.csv`, `sweep.json` and `sweep_summary.json` to `out`.
pub fn sweep(loaded: &LoadedConfig, spec: &SweepSpec, out: &Path, quiet: bool) -> CliResult<SweepOutcome> {
    let rows = evaluate(loaded, spec)?;
    output::ensure_dir(out)?;
    let ok = rows.iter().filter(|r| matches!(r.status.as_str(), "ok" | "complete")).count();
    let summary = SweepSummary {
        param: spec.param,
        range: spec.range.to_string(),
        points: rows.len(),
        ok,
        not_ok: rows.len() - ok,
        transitions: transitions(&rows),
    };
    if !quiet {
        for t in &summary.transitions {
            eprintln!(
                "cubic root count {} -> {} between {} = {} and {}",
                t.from_roots,
                t.to_roots,
                spec.param.name(),
                t.from_value,
                t.to_value
            );
        }
    }
    let files = vec![
        output::write_csv(out, "sweep.csv", &SWEEP_HEADER, rows.iter().map(SweepRow::cells))?,
        output::write_json(out, "sweep.json", &SweepReport { param: spec.param, range: spec.range.to_string(), points: &rows })?,
        output::write_json(out, "sweep_summary.json", &summary)?,
    ];
    Ok(SweepOutcome { rows, summary, files })
}
