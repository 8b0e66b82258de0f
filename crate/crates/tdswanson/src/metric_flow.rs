//! Flow of the Dyson-map parameters that keeps η H η⁻¹ + iη̇η⁻¹ Hermitian.
//!
//! The flow carries (Φ, φ, λ0). Φ̇ and φ̇ come from the T = V* constraint and
//! λ̇0 from the reality of W; |z| = 2Φ/(1 + Φ² − λ0) follows the solution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_su11::{self, EpsilonForms, MetricRates, MetricState};
use crate::linalg::{self, c, I};
use crate::model::{CoefficientScenario, Coefficients, PolarCoefficients};
use crate::ode::{self, DenseSolution, Tolerances};

/// Coefficients ω, α, β that may depend on the metric state itself.
pub trait CoefficientSource: Sync {
    fn domain(&self) -> (f64, f64);
    fn coefficients_at(&self, t: f64, state: &MetricState) -> Result<Coefficients>;
}

impl CoefficientSource for CoefficientScenario {
    fn domain(&self) -> (f64, f64) {
        CoefficientScenario::domain(self)
    }

    fn coefficients_at(&self, t: f64, _state: &MetricState) -> Result<Coefficients> {
        self.coefficients(t)
    }
}

/// W, V, T of h = W(a†a + ½) + V a² + T a†² before any constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RawCoefficients {
    pub w: Complex64,
    pub v: Complex64,
    pub t: Complex64,
}

impl RawCoefficients {
    pub fn imag_w(&self) -> f64 {
        self.w.im.abs()
    }

    pub fn t_minus_v_conj(&self) -> f64 {
        (self.t - self.v.conj()).norm()
    }
}

/// Coefficients of a Hermitian h: W real and T = V* = κe^{−iζ}.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HermitizedCoefficients {
    pub w: f64,
    pub v: Complex64,
    pub t: Complex64,
    pub kappa: f64,
    pub zeta: f64,
}

impl HermitizedCoefficients {
    pub fn new(w: f64, v: Complex64) -> Self {
        Self { w, v, t: v.conj(), kappa: v.norm(), zeta: v.im.atan2(v.re) }
    }
}

/// λ̇+ and λ̇− from (Φ̇, φ̇).
pub fn lambda_rates(state: &MetricState, rates: &MetricRates) -> (Complex64, Complex64) {
    let (phi, vphi) = (state.phi_cap, state.varphi);
    let dp = c(-rates.phi_cap, phi * rates.varphi) * Complex64::from_polar(1.0, -vphi);
    let dm = c(-rates.phi_cap, -phi * rates.varphi) * Complex64::from_polar(1.0, vphi);
    (dp, dm)
}

/// W, V, T of η H η⁻¹ + iη̇η⁻¹ for given state, coefficients and rates.
pub fn raw_hvt(state: &MetricState, k: &Coefficients, rates: &MetricRates) -> Result<RawCoefficients> {
    if !(state.lambda_zero > 0.0) {
        return Err(Error::InfeasibleState(format!("λ0 = {} ≤ 0", state.lambda_zero)));
    }
    let (lp, lm, l0, chi) = (state.lambda_plus(), state.lambda_minus(), state.lambda_zero, state.chi);
    let (dlp, dlm) = lambda_rates(state, rates);
    let dl0 = rates.lambda_zero;
    let half_i = I * 0.5;
    let w = -(k.omega * (lp * lm + chi) + (k.alpha * lp + k.beta * chi * lm) * 2.0 - half_i * (dl0 - lp * dlm * 2.0)) / l0;
    let v = (k.alpha + k.omega * lm + k.beta * lm * lm + half_i * dlm) / l0;
    let t = (k.omega * chi * lp + k.alpha * lp * lp + k.beta * chi * chi + half_i * (dlp * l0 + lp * lp * dlm - lp * dl0)) / l0;
    Ok(RawCoefficients { w, v, t })
}

fn check_flow_state(state: &MetricState) -> Result<()> {
    if state.chi == 1.0 {
        return Err(Error::SingularFlow { t: f64::NAN, reason: "χ = 1".into() });
    }
    if state.phi_cap == 0.0 {
        return Err(Error::SingularFlow { t: f64::NAN, reason: "Φ = 0".into() });
    }
    Ok(())
}

/// (Φ̇, φ̇) from the T = V* constraint for complex coefficients.
pub fn metric_rhs(state: &MetricState, p: &PolarCoefficients) -> Result<(f64, f64)> {
    check_flow_state(state)?;
    let (phi, vphi, chi) = (state.phi_cap, state.varphi, state.chi);
    let sa = (vphi - p.varphi_alpha).sin();
    let sb = (vphi + p.varphi_beta).sin();
    let ca = (vphi - p.varphi_alpha).cos();
    let cb = (vphi + p.varphi_beta).cos();
    let phi2 = phi * phi;
    let dphi = 2.0 / (chi - 1.0)
        * ((p.omega_abs * phi * p.varphi_omega.sin() + p.alpha_abs * sa) * (1.0 - phi2)
            + p.beta_abs * ((2.0 * chi - 1.0) * phi2 - chi * chi) * sb);
    let dvphi = 2.0 / ((chi - 1.0) * phi) * (p.alpha_abs * (1.0 - phi2) * ca + p.beta_abs * (phi2 - chi * chi) * cb)
        + 2.0 * p.omega_abs * p.varphi_omega.cos();
    Ok((dphi, dvphi))
}

/// λ̇0 from the reality of W for complex coefficients.
pub fn lambda_zero_rate(state: &MetricState, p: &PolarCoefficients, phi_dot: f64) -> f64 {
    let (phi, vphi, chi) = (state.phi_cap, state.varphi, state.chi);
    2.0 * p.omega_abs * (chi + phi * phi) * p.varphi_omega.sin()
        + 2.0 * phi
            * (phi_dot + 2.0 * p.alpha_abs * (vphi - p.varphi_alpha).sin()
                - 2.0 * p.beta_abs * chi * (vphi + p.varphi_beta).sin())
}

/// (Φ̇, φ̇) for real ω, α, β.
pub fn metric_rhs_real(state: &MetricState, omega: f64, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    check_flow_state(state)?;
    let (phi, vphi, chi) = (state.phi_cap, state.varphi, state.chi);
    let phi2 = phi * phi;
    let dphi = 2.0 / (chi - 1.0) * (alpha * (1.0 - phi2) + beta * ((2.0 * chi - 1.0) * phi2 - chi * chi)) * vphi.sin();
    let dvphi =
        2.0 * omega - 2.0 / ((1.0 - chi) * phi) * (alpha * (1.0 - phi2) + beta * (phi2 - chi * chi)) * vphi.cos();
    Ok((dphi, dvphi))
}

/// λ̇0 from the reality of W for real coefficients.
pub fn lambda_zero_rate_real(state: &MetricState, alpha: f64, beta: f64, phi_dot: f64) -> f64 {
    2.0 * state.phi_cap * (phi_dot + 2.0 * (alpha - beta * state.chi) * state.varphi.sin())
}

/// λ̇0 implied by holding |z| fixed: d(Φ² − 2Φ/|z| + 1)/dt.
pub fn fixed_z_lambda_zero_rate(state: &MetricState, phi_dot: f64) -> f64 {
    (2.0 * state.phi_cap - 2.0 / state.z_abs) * phi_dot
}

/// |λ̇0 − RHS| of the W-reality relation with the supplied rates.
pub fn reality_residual(state: &MetricState, p: &PolarCoefficients, rates: &MetricRates) -> f64 {
    (rates.lambda_zero - lambda_zero_rate(state, p, rates.phi_cap)).abs()
}

/// Same residual with λ̇0 taken from the fixed-|z| chain rule.
pub fn fixed_z_tension(state: &MetricState, p: &PolarCoefficients, phi_dot: f64) -> f64 {
    (fixed_z_lambda_zero_rate(state, phi_dot) - lambda_zero_rate(state, p, phi_dot)).abs()
}

/// Real W and V = T* of the constrained flow for complex coefficients.
pub fn hermitized_w_v(state: &MetricState, p: &PolarCoefficients) -> Result<HermitizedCoefficients> {
    let (phi, vphi, chi) = (state.phi_cap, state.varphi, state.chi);
    if chi == 1.0 {
        return Err(Error::SingularFlow { t: f64::NAN, reason: "χ = 1".into() });
    }
    let w = p.omega_abs * p.varphi_omega.cos()
        + 2.0 * phi / (1.0 - chi)
            * (p.alpha_abs * (vphi - p.varphi_alpha).cos() - p.beta_abs * (vphi + p.varphi_beta).cos());
    let so = p.omega_abs * phi * p.varphi_omega.sin();
    let vr = (so * vphi.sin() + p.alpha_abs * p.varphi_alpha.cos() - p.beta_abs * chi * p.varphi_beta.cos()) / (1.0 - chi);
    let vi = (so * vphi.cos() - p.alpha_abs * p.varphi_alpha.sin() - p.beta_abs * chi * p.varphi_beta.sin()) / (chi - 1.0);
    Ok(HermitizedCoefficients::new(w, c(vr, vi)))
}

/// Real W and κ = V = T for real coefficients.
pub fn hermitized_w_v_real(state: &MetricState, omega: f64, alpha: f64, beta: f64) -> Result<HermitizedCoefficients> {
    let (phi, chi) = (state.phi_cap, state.chi);
    if chi == 1.0 {
        return Err(Error::SingularFlow { t: f64::NAN, reason: "χ = 1".into() });
    }
    let w = omega + 2.0 * phi / (1.0 - chi) * (alpha - beta) * state.varphi.cos();
    let v = (alpha - beta * chi) / (1.0 - chi);
    Ok(HermitizedCoefficients::new(w, c(v, 0.0)))
}

/// ε for a given (|z|, Φ), or the reason no real ε exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonResult {
    pub forms: Option<EpsilonForms>,
    pub reason: Option<String>,
}

impl EpsilonResult {
    pub fn value(&self) -> Option<f64> {
        self.forms.map(|f| f.arctanh)
    }
}

pub fn epsilon_from_phi(z_abs: f64, phi_cap: f64) -> EpsilonResult {
    if !(z_abs > 0.0 && z_abs < 1.0) {
        return EpsilonResult { forms: None, reason: Some(format!("|z| = {z_abs} outside (0, 1)")) };
    }
    let chi = 2.0 * phi_cap / z_abs - 1.0;
    if !(phi_cap * phi_cap - chi > 0.0) {
        return EpsilonResult {
            forms: None,
            reason: Some(format!("|z| = {z_abs} does not exceed 2Φ/(1+Φ²) = {}", 2.0 * phi_cap / (1.0 + phi_cap * phi_cap))),
        };
    }
    match fock_su11::epsilon_forms(z_abs, chi) {
        Ok(f) => EpsilonResult { forms: Some(f), reason: None },
        Err(r) => EpsilonResult { forms: None, reason: Some(r) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    /// Complex coefficients in polar form.
    #[default]
    Complex,
    /// Real coefficients.
    Real,
    /// η ≡ 1; only valid for Hermitian coefficients.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZPolicy {
    /// λ0 integrated from the W-reality relation; |z| follows.
    #[default]
    Dynamic,
    /// |z| held at its initial value; the W-reality relation is only monitored.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub mode: FlowMode,
    pub policy: ZPolicy,
    pub tol: Tolerances,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { mode: FlowMode::Complex, policy: ZPolicy::Dynamic, tol: Tolerances::default() }
    }
}

/// Uniform output grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, points: usize) -> Result<Self> {
        if points < 2 || !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidArgument(format!("grid [{t0}, {t1}] with {points} points")));
        }
        Ok(Self { t0, t1, points })
    }

    pub fn times(&self) -> Vec<f64> {
        let h = (self.t1 - self.t0) / (self.points - 1) as f64;
        (0..self.points).map(|i| if i + 1 == self.points { self.t1 } else { self.t0 + h * i as f64 }).collect()
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.points - 1) as f64
    }
}

fn real_parts(k: &Coefficients) -> Result<(f64, f64, f64)> {
    if !k.is_real(1e-12) {
        return Err(Error::InvalidArgument("real mode needs real ω, α, β".into()));
    }
    Ok((k.omega.re, k.alpha.re, k.beta.re))
}

/// Rates of (Φ, φ, λ0) at a state.
pub fn flow_rates<S: CoefficientSource + ?Sized>(
    src: &S,
    mode: FlowMode,
    policy: ZPolicy,
    t: f64,
    state: &MetricState,
) -> Result<MetricRates> {
    let k = src.coefficients_at(t, state)?;
    let with_t = |e: Error| match e {
        Error::SingularFlow { reason, .. } => Error::SingularFlow { t, reason },
        other => other,
    };
    let (dphi, dvphi, dl0) = match mode {
        FlowMode::Identity => return Ok(MetricRates::default()),
        FlowMode::Complex => {
            let p = k.polar();
            let (a, b) = metric_rhs(state, &p).map_err(with_t)?;
            (a, b, lambda_zero_rate(state, &p, a))
        }
        FlowMode::Real => {
            let (w, al, be) = real_parts(&k)?;
            let (a, b) = metric_rhs_real(state, w, al, be).map_err(with_t)?;
            (a, b, lambda_zero_rate_real(state, al, be, a))
        }
    };
    let dl0 = match policy {
        ZPolicy::Dynamic => dl0,
        ZPolicy::Frozen => fixed_z_lambda_zero_rate(state, dphi),
    };
    Ok(MetricRates { phi_cap: dphi, varphi: dvphi, lambda_zero: dl0 })
}

/// Hermitized W, V at a state.
pub fn hermitized_at<S: CoefficientSource + ?Sized>(
    src: &S,
    mode: FlowMode,
    t: f64,
    state: &MetricState,
) -> Result<HermitizedCoefficients> {
    let k = src.coefficients_at(t, state)?;
    match mode {
        FlowMode::Identity => {
            if !k.is_hermitian(1e-12) {
                return Err(Error::InvalidArgument("identity metric needs Hermitian coefficients".into()));
            }
            Ok(HermitizedCoefficients::new(k.omega.re, k.alpha))
        }
        FlowMode::Complex => hermitized_w_v(state, &k.polar()),
        FlowMode::Real => {
            let (w, a, b) = real_parts(&k)?;
            hermitized_w_v_real(state, w, a, b)
        }
    }
}

/// Minimum distances to the singular loci before integration halts.
pub const CHI_MARGIN: f64 = 1e-9;
pub const PHI_FLOOR: f64 = 1e-12;

/// Reason the flow must stop at this state, if any.
pub fn halt_reason(state: &MetricState) -> Option<String> {
    if let Some(r) = &state.infeasibility {
        return Some(r.clone());
    }
    if (state.chi - 1.0).abs() < CHI_MARGIN {
        return Some(format!("χ = {} reached 1", state.chi));
    }
    if state.phi_cap.abs() < PHI_FLOOR {
        return Some(format!("Φ = {:e} reached 0", state.phi_cap));
    }
    None
}

/// State from the integration variables under a policy.
pub fn state_from_vars(y: &[f64], policy: ZPolicy, z_fixed: f64) -> MetricState {
    match policy {
        ZPolicy::Dynamic => MetricState::from_parts(y[0], y[1], y[2]),
        ZPolicy::Frozen => {
            let chi = 2.0 * y[0] / z_fixed - 1.0;
            MetricState::from_parts(y[0], y[1], y[0] * y[0] - chi)
        }
    }
}

/// One output sample of a metric trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSample {
    pub t: f64,
    pub state: MetricState,
    pub rates: MetricRates,
    pub hermitized: HermitizedCoefficients,
    pub raw: RawCoefficients,
    /// |Im W| of the raw coefficients.
    pub res_imag_w: f64,
    /// |T − V*| of the raw coefficients.
    pub res_tv: f64,
    /// Mismatch between the W-reality λ̇0 and the fixed-|z| chain rule.
    pub tension: f64,
    /// ζ continued along the trajectory.
    pub zeta_unwrapped: f64,
}

#[derive(Debug, Clone)]
pub struct MetricTrajectory {
    pub samples: Vec<MetricSample>,
    pub mode: FlowMode,
    pub policy: ZPolicy,
    pub z_initial: f64,
    pub dense: Option<DenseSolution>,
    /// Time and reason of an early halt; samples end at the last good grid point.
    pub stopped: Option<(f64, String)>,
}

impl MetricTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_imag_w(&self) -> f64 {
        self.samples.iter().map(|s| s.res_imag_w).fold(0.0, f64::max)
    }

    pub fn max_t_minus_v_conj(&self) -> f64 {
        self.samples.iter().map(|s| s.res_tv).fold(0.0, f64::max)
    }

    pub fn max_tension(&self) -> f64 {
        self.samples.iter().map(|s| s.tension).fold(0.0, f64::max)
    }

    /// State at any time covered by the integration.
    pub fn state_at(&self, t: f64) -> Option<MetricState> {
        if self.mode == FlowMode::Identity {
            return Some(MetricState::identity());
        }
        match &self.dense {
            None => None,
            Some(d) => d.eval(t).map(|y| state_from_vars(&y, self.policy, self.z_initial)),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.stopped.is_none()
    }
}

/// Annotates a state at time t with rates, W/V/T and residuals.
pub fn sample_at<S: CoefficientSource + ?Sized>(
    src: &S,
    opts: &FlowOptions,
    t: f64,
    state: MetricState,
) -> Result<MetricSample> {
    let rates = flow_rates(src, opts.mode, opts.policy, t, &state)?;
    let hermitized = hermitized_at(src, opts.mode, t, &state)?;
    let k = src.coefficients_at(t, &state)?;
    let raw = raw_hvt(&state, &k, &rates)?;
    let tension = match opts.mode {
        FlowMode::Identity => 0.0,
        _ if state.z_abs == 0.0 => 0.0,
        _ => {
            let flow_dl0 = match opts.policy {
                ZPolicy::Dynamic => rates.lambda_zero,
                ZPolicy::Frozen => lambda_zero_rate(&state, &k.polar(), rates.phi_cap),
            };
            (fixed_z_lambda_zero_rate(&state, rates.phi_cap) - flow_dl0).abs()
        }
    };
    Ok(MetricSample {
        t,
        res_imag_w: raw.imag_w(),
        res_tv: raw.t_minus_v_conj(),
        zeta_unwrapped: hermitized.zeta,
        state,
        rates,
        hermitized,
        raw,
        tension,
    })
}

fn unwrap_zeta(samples: &mut [MetricSample]) {
    for i in 1..samples.len() {
        let prev = samples[i - 1].zeta_unwrapped;
        let raw = samples[i].hermitized.zeta;
        samples[i].zeta_unwrapped = prev + linalg::wrap_angle(raw - prev);
    }
}

/// Integrates the metric flow from `state0` across `grid`.
pub fn integrate_metric<S: CoefficientSource + ?Sized>(
    src: &S,
    state0: &MetricState,
    grid: &TimeGrid,
    opts: &FlowOptions,
) -> Result<MetricTrajectory> {
    let (d0, d1) = src.domain();
    let slack = 1e-9 * (d1 - d0).max(1.0);
    if grid.t0 < d0 - slack || grid.t1 > d1 + slack {
        return Err(Error::OutOfDomain { t: if grid.t0 < d0 { grid.t0 } else { grid.t1 }, t0: d0, t1: d1 });
    }
    let times = grid.times();
    if opts.mode == FlowMode::Identity {
        let mut samples = Vec::with_capacity(times.len());
        for &t in &times {
            samples.push(sample_at(src, opts, t, MetricState::identity())?);
        }
        unwrap_zeta(&mut samples);
        return Ok(MetricTrajectory {
            samples,
            mode: opts.mode,
            policy: opts.policy,
            z_initial: 0.0,
            dense: None,
            stopped: None,
        });
    }
    state0.require_feasible()?;
    if let Some(r) = halt_reason(state0) {
        return Err(Error::InfeasibleState(format!("initial state: {r}")));
    }
    if opts.policy == ZPolicy::Frozen && state0.z_abs == 0.0 {
        return Err(Error::InvalidArgument("frozen |z| policy needs |z| > 0".into()));
    }
    let z0 = state0.z_abs;
    let policy = opts.policy;
    let mode = opts.mode;
    let y0 = [state0.phi_cap, state0.varphi, state0.lambda_zero];
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let st = state_from_vars(y, policy, z0);
        if let Some(r) = halt_reason(&st) {
            return Err(Error::SingularFlow { t, reason: r });
        }
        let r = flow_rates(src, mode, policy, t, &st)?;
        dy[0] = r.phi_cap;
        dy[1] = r.varphi;
        dy[2] = r.lambda_zero;
        Ok(())
    };
    let check = |_t: f64, y: &[f64]| halt_reason(&state_from_vars(y, policy, z0));
    let dense = ode::integrate(rhs, grid.t0, &y0, grid.t1, &opts.tol, check)?;
    trajectory_from_dense(src, opts, z0, &times, dense)
}

/// Builds a trajectory whose first three dense components are the flow
/// variables; samples stop at the first grid time not covered.
pub(crate) fn trajectory_from_dense<S: CoefficientSource + ?Sized>(
    src: &S,
    opts: &FlowOptions,
    z0: f64,
    times: &[f64],
    dense: DenseSolution,
) -> Result<MetricTrajectory> {
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let Some(y) = dense.eval(t) else { break };
        let st = if opts.mode == FlowMode::Identity {
            MetricState::identity()
        } else {
            let st = state_from_vars(&y, opts.policy, z0);
            if halt_reason(&st).is_some() {
                break;
            }
            st
        };
        samples.push(sample_at(src, opts, t, st)?);
    }
    unwrap_zeta(&mut samples);
    Ok(MetricTrajectory {
        samples,
        mode: opts.mode,
        policy: opts.policy,
        z_initial: z0,
        stopped: dense.stopped.clone(),
        dense: Some(dense),
    })
}
