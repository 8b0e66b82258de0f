//! Brute-force checks: direct propagation in the truncated Fock space,
//! residuals of the Dyson and quasi-Hermiticity relations, conservation of
//! the ρ-norm and transfer of the Lewis–Riesenfeld invariant.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock_su11::{self, MetricState};
use crate::linalg::{self, c, StateVector, TruncatedOperator, I};
use crate::lr_solver::{self, LrState, LrTrajectory};
use crate::metric_flow::{self, CoefficientSource, FlowOptions, MetricTrajectory, TimeGrid};
use crate::model::{self, Coefficients};
use crate::observables;
use crate::ode::{self, DenseSolution, Tolerances};

/// Default step of the finite-difference stencils in t.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub tol: Tolerances,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest change of the sampled states when the tolerances are tightened 32×.
    pub defect: Option<f64>,
    dense: DenseSolution,
}

impl PropagationResult {
    pub fn state_at(&self, t: f64) -> Option<StateVector> {
        self.dense.eval(t).map(|y| unpack(&y))
    }
}

fn pack(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unpack(y: &[f64]) -> StateVector {
    DVector::from_iterator(y.len() / 2, y.chunks(2).map(|p| c(p[0], p[1])))
}

fn run_linear<A>(mut apply: A, psi0: &StateVector, grid: &TimeGrid, tol: &Tolerances) -> Result<(Vec<StateVector>, DenseSolution)>
where
    A: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
{
    let n = psi0.len();
    let mut buf_in = vec![Complex64::default(); n];
    let mut buf_out = vec![Complex64::default(); n];
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        for (k, z) in buf_in.iter_mut().enumerate() {
            *z = c(y[2 * k], y[2 * k + 1]);
        }
        apply(t, &buf_in, &mut buf_out)?;
        for (k, z) in buf_out.iter().enumerate() {
            let d = -I * z;
            dy[2 * k] = d.re;
            dy[2 * k + 1] = d.im;
        }
        Ok(())
    };
    let dense = ode::integrate(rhs, grid.t0, &pack(psi0.as_slice()), grid.t1, tol, |_, _| None)?;
    if let Some((t, reason)) = &dense.stopped {
        return Err(Error::SingularFlow { t: *t, reason: reason.clone() });
    }
    let states = grid
        .times()
        .iter()
        .map(|&t| dense.eval(t).map(|y| unpack(&y)).ok_or(Error::OutOfDomain { t, t0: grid.t0, t1: grid.t1 }))
        .collect::<Result<Vec<_>>>()?;
    Ok((states, dense))
}

/// i∂tψ = G(t)ψ with `apply(t, ψ, out)` writing G(t)ψ.
pub fn propagate_tdse<A>(
    mut apply: A,
    psi0: &StateVector,
    grid: &TimeGrid,
    tol: &Tolerances,
    estimate_defect: bool,
) -> Result<PropagationResult>
where
    A: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
{
    let (states, dense) = run_linear(&mut apply, psi0, grid, tol)?;
    let defect = if estimate_defect {
        let fine = Tolerances { rtol: tol.rtol / 32.0, atol: tol.atol / 32.0, ..*tol };
        let (ref_states, _) = run_linear(&mut apply, psi0, grid, &fine)?;
        Some(states.iter().zip(&ref_states).map(|(a, b)| (a - b).norm() / b.norm().max(1.0)).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(PropagationResult {
        times: grid.times(),
        states,
        tol: *tol,
        accepted: dense.accepted,
        rejected: dense.rejected,
        defect,
        dense,
    })
}

/// Propagation under a dense generator matrix function.
pub fn propagate_matrix<G>(mut generator: G, psi0: &StateVector, grid: &TimeGrid, tol: &Tolerances) -> Result<PropagationResult>
where
    G: FnMut(f64) -> Result<TruncatedOperator>,
{
    let apply = |t: f64, psi: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        let g = generator(t)?;
        let v = g * DVector::from_column_slice(psi);
        out.copy_from_slice(v.as_slice());
        Ok(())
    };
    propagate_tdse(apply, psi0, grid, tol, false)
}

/// Propagation under ω(a†a + ½) + αa² + βa†² using the banded structure.
pub fn propagate_swanson<S: CoefficientSource + ?Sized>(
    src: &S,
    psi0: &StateVector,
    grid: &TimeGrid,
    tol: &Tolerances,
    estimate_defect: bool,
) -> Result<PropagationResult> {
    let id = MetricState::identity();
    let apply = |t: f64, psi: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        let k = src.coefficients_at(t, &id)?;
        model::apply_hamiltonian(&k, psi, out);
        Ok(())
    };
    propagate_tdse(apply, psi0, grid, tol, estimate_defect)
}

/// Fourth-order derivative of `f` at t, centered where [lo, hi] allows and
/// one-sided otherwise.
pub fn fd_derivative<F>(mut f: F, t: f64, h: f64, lo: f64, hi: f64) -> Result<DMatrix<Complex64>>
where
    F: FnMut(f64) -> Result<DMatrix<Complex64>>,
{
    if !(h > 0.0) || hi - lo < 4.0 * h {
        return Err(Error::InvalidArgument(format!("stencil step {h} does not fit in [{lo}, {hi}]")));
    }
    let scale = c(1.0 / (12.0 * h), 0.0);
    if t - 2.0 * h >= lo && t + 2.0 * h <= hi {
        let d = (f(t - 2.0 * h)? - f(t + 2.0 * h)?) + (f(t + h)? - f(t - h)?) * c(8.0, 0.0);
        return Ok(d * scale);
    }
    let sgn = if t - 2.0 * h < lo { 1.0 } else { -1.0 };
    let w = [-25.0, 48.0, -36.0, 16.0, -3.0];
    let mut acc: Option<DMatrix<Complex64>> = None;
    for (k, wk) in w.iter().enumerate() {
        let term = f(t + sgn * k as f64 * h)? * c(*wk, 0.0);
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    Ok(acc.expect("five terms") * c(sgn, 0.0) * scale)
}

/// h = W(a†a + ½) + V a² + V* a†².
pub fn hermitian_generator(w: f64, v: Complex64, dim: usize) -> Result<TruncatedOperator> {
    model::hamiltonian_matrix(&Coefficients::new(c(w, 0.0), v, v.conj()), dim)
}

/// ‖hη − ηH − i∂tη‖ on the interior block relative to ‖ηH‖.
pub fn dyson_residual_matrices(
    eta: &TruncatedOperator,
    eta_dot: &TruncatedOperator,
    big_h: &TruncatedOperator,
    small_h: &TruncatedOperator,
) -> f64 {
    linalg::interior_distance(&(small_h * eta - eta_dot * I), &(eta * big_h))
}

/// Dyson residual with ∂tη from the stencil on `eta_at`.
pub fn dyson_residual<E, HN, HH>(mut eta_at: E, mut big_h: HN, mut small_h: HH, t: f64, step: f64, domain: (f64, f64)) -> Result<f64>
where
    E: FnMut(f64) -> Result<TruncatedOperator>,
    HN: FnMut(f64) -> Result<TruncatedOperator>,
    HH: FnMut(f64) -> Result<TruncatedOperator>,
{
    let eta = eta_at(t)?;
    let eta_dot = fd_derivative(&mut eta_at, t, step, domain.0, domain.1)?;
    Ok(dyson_residual_matrices(&eta, &eta_dot, &big_h(t)?, &small_h(t)?))
}

/// ‖H†ρ − ρH − i∂tρ‖ on the interior block relative to ‖ρH‖.
pub fn quasi_hermiticity_residual<R, HN>(mut rho_at: R, mut big_h: HN, t: f64, step: f64, domain: (f64, f64)) -> Result<f64>
where
    R: FnMut(f64) -> Result<TruncatedOperator>,
    HN: FnMut(f64) -> Result<TruncatedOperator>,
{
    let rho = rho_at(t)?;
    let h = big_h(t)?;
    let rho_dot = fd_derivative(&mut rho_at, t, step, domain.0, domain.1)?;
    Ok(linalg::interior_distance(&(h.adjoint() * &rho - &rho_dot * I), &(&rho * &h)))
}

/// ⟨ψ|ρ|ψ⟩ per sample.
pub fn rho_norm_series(psis: &[StateVector], rhos: &[TruncatedOperator]) -> Result<Vec<f64>> {
    if psis.len() != rhos.len() {
        return Err(Error::InvalidArgument(format!("{} states against {} metrics", psis.len(), rhos.len())));
    }
    Ok(psis.iter().zip(rhos).map(|(p, r)| p.dotc(&(r * p)).re).collect())
}

/// max |n(t) − n(0)| / |n(0)|.
pub fn relative_drift(series: &[f64]) -> f64 {
    match series.first() {
        None => 0.0,
        Some(&n0) => series.iter().map(|n| (n - n0).abs()).fold(0.0, f64::max) / n0.abs(),
    }
}

fn metric_state_or_err(traj: &MetricTrajectory, t: f64) -> Result<MetricState> {
    traj.state_at(t).ok_or(Error::SingularFlow { t, reason: "time outside the integrated trajectory".into() })
}

fn lr_state_or_err(traj: &LrTrajectory, t: f64) -> Result<LrState> {
    traj.lr_state_at(t).ok_or(Error::SingularFlow { t, reason: "time outside the integrated trajectory".into() })
}

fn covered(traj: &MetricTrajectory, grid_lo: f64) -> (f64, f64) {
    let hi = traj.samples.last().map_or(grid_lo, |s| s.t);
    let hi = traj.dense.as_ref().map_or(hi, |d| d.t_end().max(hi));
    (grid_lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DysonResiduals {
    pub t: f64,
    /// With ∂tη from the flow rates.
    pub analytic: f64,
    /// With ∂tη from the stencil on the trajectory.
    pub finite_difference: f64,
    /// ‖H†ρ − ρH − i∂tρ‖ with the stencil on ρ.
    pub quasi_hermiticity: f64,
}

/// Dyson and quasi-Hermiticity residuals of a metric trajectory at t.
pub fn trajectory_residuals<S: CoefficientSource + ?Sized>(
    src: &S,
    traj: &MetricTrajectory,
    opts: &FlowOptions,
    t: f64,
    dim: usize,
    step: f64,
) -> Result<DysonResiduals> {
    let domain = covered(traj, traj.samples.first().map_or(t, |s| s.t));
    let state = metric_state_or_err(traj, t)?;
    let sample = metric_flow::sample_at(src, opts, t, state.clone())?;
    let k = src.coefficients_at(t, &state)?;
    let big_h = model::hamiltonian_matrix(&k, dim)?;
    let small_h = hermitian_generator(sample.hermitized.w, sample.hermitized.v, dim)?;
    let eta = fock_su11::dyson_map(&state, dim)?;
    let eta_dot = if opts.mode == metric_flow::FlowMode::Identity {
        TruncatedOperator::zeros(dim, dim)
    } else {
        fock_su11::dyson_map_derivative(&state, &sample.rates, dim)?
    };
    let analytic = dyson_residual_matrices(&eta, &eta_dot, &big_h, &small_h);
    let eta_at = |s: f64| fock_su11::dyson_map(&metric_state_or_err(traj, s)?, dim);
    let finite_difference = dyson_residual(eta_at, |_| Ok(big_h.clone()), |_| Ok(small_h.clone()), t, step, domain)?;
    let rho_at = |s: f64| observables::metric_rho(&metric_state_or_err(traj, s)?, dim);
    let quasi_hermiticity = quasi_hermiticity_residual(rho_at, |_| Ok(big_h.clone()), t, step, domain)?;
    Ok(DysonResiduals { t, analytic, finite_difference, quasi_hermiticity })
}

/// Banded matrix of p a + q a† + s.
fn ladder_matrix(l: &lr_solver::Ladder, dim: usize) -> TruncatedOperator {
    linalg::annihilation(dim) * l.0 + linalg::creation(dim) * l.1 + linalg::identity(dim) * l.2
}

/// Invariants I_h = b†b of h and I_H = η⁻¹I_hη of H, both exact on the
/// interior block.
pub fn invariants(state: &MetricState, lr: &LrState, dim: usize) -> Result<(TruncatedOperator, TruncatedOperator)> {
    let b = ladder_matrix(&lr_solver::lr_invariant_ladder(lr), dim);
    let small = b.adjoint() * &b;
    let (lower, upper) = lr_solver::pulled_back_ladders(state, lr)?;
    Ok((small, ladder_matrix(&upper, dim) * ladder_matrix(&lower, dim)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantTransfer {
    pub t: f64,
    /// ‖∂tI_H + i[H, I_H]‖ relative to ‖[H, I_H]‖.
    pub res_big: f64,
    /// ‖∂tI_h + i[h, I_h]‖ relative to ‖[h, I_h]‖.
    pub res_small: f64,
    /// Largest eigenpair residual ‖Iψ_n − nψ_n‖/‖ψ_n‖ over both invariants.
    pub spectrum_gap: f64,
}

/// Invariant-transfer residuals at t for the first `levels` eigenvalues.
pub fn invariant_transfer_check<S: CoefficientSource + ?Sized>(
    src: &S,
    traj: &LrTrajectory,
    opts: &FlowOptions,
    t: f64,
    dim: usize,
    levels: usize,
    step: f64,
) -> Result<InvariantTransfer> {
    let domain = covered(&traj.metric, traj.samples.first().map_or(t, |s| s.t));
    let state = metric_state_or_err(&traj.metric, t)?;
    let lr = lr_state_or_err(traj, t)?;
    let sample = metric_flow::sample_at(src, opts, t, state.clone())?;
    let big_h = model::hamiltonian_matrix(&src.coefficients_at(t, &state)?, dim)?;
    let small_h = hermitian_generator(sample.hermitized.w, sample.hermitized.v, dim)?;
    let (i_small, i_big) = invariants(&state, &lr, dim)?;
    let at = |s: f64, big: bool| -> Result<TruncatedOperator> {
        let (a, b) = invariants(&metric_state_or_err(&traj.metric, s)?, &lr_state_or_err(traj, s)?, dim)?;
        Ok(if big { b } else { a })
    };
    let d_big = fd_derivative(|s| at(s, true), t, step, domain.0, domain.1)?;
    let d_small = fd_derivative(|s| at(s, false), t, step, domain.0, domain.1)?;
    let res_big = linalg::interior_distance(&d_big, &(linalg::commutator(&big_h, &i_big) * (-I)));
    let res_small = linalg::interior_distance(&d_small, &(linalg::commutator(&small_h, &i_small) * (-I)));
    let m = linalg::interior(dim);
    let mut gap: f64 = 0.0;
    for n in 0..levels.min(m) {
        let psi = lr_solver::psi_solution(n, &state, &lr, dim)?;
        let phi = lr_solver::psi_solution(n, &MetricState::identity(), &lr, dim)?;
        for (op, v) in [(&i_big, &psi), (&i_small, &phi)] {
            let r = op * v - v * c(n as f64, 0.0);
            let res = r.rows(0, m).norm() / v.rows(0, m).norm();
            gap = gap.max(res);
        }
    }
    Ok(InvariantTransfer { t, res_big, res_small, spectrum_gap: gap })
}

#[derive(Debug, Clone, Serialize)]
pub struct LrVsDirect {
    pub n: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Interior discrepancy between the closed-form and propagated states per time.
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
    /// ⟨ψ|ρ|ψ⟩ of the closed-form state per time.
    pub rho_norm: Vec<f64>,
    pub rho_norm_drift: f64,
    /// ‖i∂tψ − Hψ‖ relative to ‖Hψ‖ per time.
    pub tdse_residual: Vec<f64>,
    pub max_tdse_residual: f64,
    pub max_r: f64,
    pub propagation_defect: Option<f64>,
}

/// Closed-form state on the grid, together with its metric and LR data.
pub fn closed_form_states(traj: &LrTrajectory, n: usize, dim: usize) -> Result<Vec<StateVector>> {
    traj.samples
        .iter()
        .zip(&traj.metric.samples)
        .map(|(l, m)| lr_solver::psi_solution(n, &m.state, &l.lr, dim))
        .collect()
}

/// Propagates |ψ_n(t0)⟩ under H and compares with the closed form on the grid.
#[allow(clippy::too_many_arguments)]
pub fn lr_vs_direct<S: CoefficientSource + ?Sized>(
    src: &S,
    state0: &MetricState,
    lr0: &LrState,
    n: usize,
    grid: &TimeGrid,
    dim: usize,
    opts: &FlowOptions,
    estimate_defect: bool,
) -> Result<LrVsDirect> {
    let traj = lr_solver::evolve(src, state0, lr0, grid, opts)?;
    if let Some((t, reason)) = &traj.stopped {
        return Err(Error::SingularFlow { t: *t, reason: reason.clone() });
    }
    let closed = closed_form_states(&traj, n, dim)?;
    let times = traj.times();
    let direct = propagate_swanson(src, &closed[0], grid, &opts.tol, estimate_defect)?;
    let m = linalg::interior(dim);
    let discrepancy: Vec<f64> = closed.iter().zip(&direct.states).map(|(a, b)| linalg::vector_distance(a, b, m)).collect();

    let wide = linalg::oversampled(dim);
    let mut rho_norm = Vec::with_capacity(times.len());
    for (l, ms) in traj.samples.iter().zip(&traj.metric.samples) {
        let psi = lr_solver::psi_solution(n, &ms.state, &l.lr, wide)?;
        let rho = observables::metric_rho(&ms.state, wide)?;
        rho_norm.push(psi.dotc(&(rho * &psi)).re);
    }

    let domain = covered(&traj.metric, grid.t0);
    let psi_at = |s: f64| -> Result<DMatrix<Complex64>> {
        let st = metric_state_or_err(&traj.metric, s)?;
        let lr = lr_state_or_err(&traj, s)?;
        let v = lr_solver::psi_solution(n, &st, &lr, dim)?;
        Ok(DMatrix::from_column_slice(dim, 1, v.as_slice()))
    };
    let mut tdse_residual = Vec::with_capacity(times.len());
    let mut buf = vec![Complex64::default(); dim];
    for (psi, ms) in closed.iter().zip(&traj.metric.samples) {
        let dpsi = fd_derivative(psi_at, ms.t, FD_STEP, domain.0, domain.1)?;
        let k = src.coefficients_at(ms.t, &ms.state)?;
        model::apply_hamiltonian(&k, psi.as_slice(), &mut buf);
        let hpsi = DVector::from_column_slice(&buf);
        let lhs = DVector::from_column_slice(dpsi.as_slice()) * I;
        tdse_residual.push(linalg::vector_distance(&lhs, &hpsi, m));
    }

    Ok(LrVsDirect {
        n,
        dim,
        max_discrepancy: discrepancy.iter().cloned().fold(0.0, f64::max),
        discrepancy,
        rho_norm_drift: relative_drift(&rho_norm),
        rho_norm,
        max_tdse_residual: tdse_residual.iter().cloned().fold(0.0, f64::max),
        tdse_residual,
        max_r: traj.max_r(),
        propagation_defect: direct.defect,
        times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn push(&mut self, name: impl Into<String>, residual: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), residual, threshold, pass: residual <= threshold });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}
