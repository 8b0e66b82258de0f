//! Metric operator in quadrature form, the observable family O, and the
//! quasi-Hermitian position and momentum.
//!
//! x = (a + a†)/√(2ω) and p = i√(ω/2)(a† − a), with ω the modulus of the
//! frequency at the instant of the metric state.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock_su11::{self, Branch, MetricState};
use crate::linalg::{self, c, TruncatedOperator, I};

#[derive(Debug, Clone)]
pub struct QuadratureOperators {
    pub omega: f64,
    pub x: TruncatedOperator,
    pub p: TruncatedOperator,
    /// {x, p} = i(a†² − a²), exact on the truncated space.
    pub anticommutator: TruncatedOperator,
}

pub fn quadratures(omega: f64, dim: usize) -> Result<QuadratureOperators> {
    linalg::check_dim(dim, 2)?;
    check_omega(omega)?;
    let a = linalg::annihilation(dim);
    let ad = linalg::creation(dim);
    let x = (&a + &ad) * c(1.0 / (2.0 * omega).sqrt(), 0.0);
    let p = (&ad - &a) * (I * (omega / 2.0).sqrt());
    let anticommutator = (linalg::creation_sq(dim) - linalg::annihilation_sq(dim)) * I;
    Ok(QuadratureOperators { omega, x, p, anticommutator })
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("quadrature frequency ω = {omega} must be positive")));
    }
    Ok(())
}

/// c_p p² + c_x ω² x² + c_xp ω {x, p}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticForm {
    pub p2: Complex64,
    pub x2: Complex64,
    pub xp: Complex64,
}

impl QuadraticForm {
    /// Coefficients of (a†a + ½), a², a†² after multiplying out, divided by ω.
    pub fn ladder(&self) -> (Complex64, Complex64, Complex64) {
        let (a, b) = (self.p2, self.x2);
        let n = a + b;
        let down = (b - a) * 0.5 - I * self.xp;
        let up = (b - a) * 0.5 + I * self.xp;
        (n, down, up)
    }

    /// Matrix of the form; exact on the truncated space.
    pub fn to_matrix(&self, omega: f64, dim: usize) -> Result<TruncatedOperator> {
        linalg::check_dim(dim, 2)?;
        check_omega(omega)?;
        let (n, down, up) = self.ladder();
        let half = linalg::number(dim) + linalg::identity(dim) * c(0.5, 0.0);
        Ok((half * n + linalg::annihilation_sq(dim) * down + linalg::creation_sq(dim) * up) * c(omega, 0.0))
    }

    pub fn max_coefficient_distance(&self, other: &QuadraticForm) -> f64 {
        (self.p2 - other.p2).norm().max((self.x2 - other.x2).norm()).max((self.xp - other.xp).norm())
    }
}

/// c_x x + c_p p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearForm {
    pub x: Complex64,
    pub p: Complex64,
}

impl LinearForm {
    pub fn to_matrix(&self, q: &QuadratureOperators) -> TruncatedOperator {
        &q.x * self.x + &q.p * self.p
    }

    pub fn max_coefficient_distance(&self, other: &LinearForm) -> f64 {
        (self.x - other.x).norm().max((self.p - other.p).norm())
    }
}

/// Quadratic form in the exponent of the metric operator and of O.
pub fn observable_form(state: &MetricState) -> QuadraticForm {
    let (s, co) = state.varphi.sin_cos();
    let z = state.z_abs;
    QuadraticForm { p2: c(1.0 - z * co, 0.0), x2: c(1.0 + z * co, 0.0), xp: c(-z * s, 0.0) }
}

/// ((1 + s)Φ − |z|) / ((1 − s)Φ − |z|).
pub fn metric_base(state: &MetricState) -> Result<f64> {
    let s = (1.0 - state.z_abs * state.z_abs).sqrt();
    let num = (1.0 + s) * state.phi_cap - state.z_abs;
    let den = (1.0 - s) * state.phi_cap - state.z_abs;
    let base = num / den;
    if !(base > 0.0) || !base.is_finite() {
        return Err(Error::InfeasibleState(format!("metric base {base} is not positive")));
    }
    Ok(base)
}

/// η as the base raised to (quadratic form)/(4ω√(1−|z|²)).
pub fn metric_operator_quadrature(state: &MetricState, omega: f64, dim: usize) -> Result<TruncatedOperator> {
    state.require_feasible()?;
    check_omega(omega)?;
    linalg::check_dim(dim, 1)?;
    if state.z_abs == 0.0 {
        let eps = state.epsilon.unwrap_or(0.0);
        return Ok(TruncatedOperator::from_diagonal(&nalgebra::DVector::from_fn(dim, |n, _| {
            c((eps * (n as f64 + 0.5)).exp(), 0.0)
        })));
    }
    let base = metric_base(state)?;
    let s = (1.0 - state.z_abs * state.z_abs).sqrt();
    let (n, down, _) = observable_form(state).ladder();
    let z_eff = down * 2.0 / n;
    let t = base.ln() * n.re / (4.0 * s);
    fock_su11::exp_quadratic(z_eff, t, dim)
}

pub fn observable_o(state: &MetricState, omega: f64, dim: usize) -> Result<TruncatedOperator> {
    state.require_feasible()?;
    observable_form(state).to_matrix(omega, dim)
}

/// O for a time-independent metric and real coefficients.
pub fn observable_form_static_real(z_abs: f64) -> QuadraticForm {
    QuadraticForm { p2: c(1.0 - z_abs, 0.0), x2: c(1.0 + z_abs, 0.0), xp: c(0.0, 0.0) }
}

fn xp_prefactor(state: &MetricState, sign: f64) -> Result<f64> {
    state.require_feasible()?;
    if state.z_abs == 0.0 {
        return Err(Error::Branch("|z| = 0: position and momentum prefactor undefined".into()));
    }
    let rad = state.phi_cap * state.phi_cap - state.chi;
    if !(rad > 0.0) {
        return Err(Error::Branch(format!("Φ² − χ = {rad} ≤ 0")));
    }
    Ok(sign / (state.z_abs * rad.sqrt()))
}

fn xp_forms(state: &MetricState, omega: f64, pref: f64) -> (LinearForm, LinearForm) {
    let (s, co) = state.varphi.sin_cos();
    let (z, phi) = (state.z_abs, state.phi_cap);
    let x = LinearForm {
        x: (c(1.0, -z * s) * phi - z) * pref,
        p: I / omega * ((1.0 - z * co) * phi * pref),
    };
    let p = LinearForm {
        p: (c(1.0, z * s) * phi - z) * pref,
        x: -I * omega * ((1.0 + z * co) * phi * pref),
    };
    (x, p)
}

/// (X, P) = (η⁻¹xη, η⁻¹pη) as linear forms in x and p.
pub fn quasi_xp_forms(state: &MetricState, omega: f64) -> Result<(LinearForm, LinearForm)> {
    check_omega(omega)?;
    Ok(xp_forms(state, omega, xp_prefactor(state, -1.0)?))
}

/// The forms with a positive prefactor, equal to −η⁻¹xη and −η⁻¹pη.
pub fn quasi_xp_forms_literal(state: &MetricState, omega: f64) -> Result<(LinearForm, LinearForm)> {
    check_omega(omega)?;
    Ok(xp_forms(state, omega, xp_prefactor(state, 1.0)?))
}

pub fn quasi_xp(state: &MetricState, omega: f64, dim: usize) -> Result<(TruncatedOperator, TruncatedOperator)> {
    let q = quadratures(omega, dim)?;
    let (x, p) = quasi_xp_forms(state, omega)?;
    Ok((x.to_matrix(&q), p.to_matrix(&q)))
}

/// (X, P) for a time-independent metric with φ = 0, written through Ξ.
pub fn quasi_xp_forms_static_real(state: &MetricState, omega: f64) -> Result<(LinearForm, LinearForm)> {
    check_omega(omega)?;
    state.require_feasible()?;
    let xi = state.xi.ok_or_else(|| Error::InfeasibleState("Ξ undefined".into()))?;
    let z = state.z_abs;
    let s = (1.0 - z * z).sqrt();
    let (ch, sh) = (xi.cosh(), xi.sinh());
    let x = LinearForm { x: c(ch, 0.0), p: I / omega * ((1.0 - z) / s * sh) };
    let p = LinearForm { p: c(ch, 0.0), x: -I * omega * ((1.0 + z) / s * sh) };
    Ok((x, p))
}

/// ‖O†ρ − ρO‖ on the interior block, relative to ‖ρO‖.
pub fn quasi_hermiticity_check(candidate: &TruncatedOperator, rho: &TruncatedOperator) -> Result<f64> {
    if candidate.shape() != rho.shape() {
        return Err(Error::InvalidArgument(format!(
            "operator shapes {:?} and {:?} differ",
            candidate.shape(),
            rho.shape()
        )));
    }
    let d = linalg::interior_distance(&(candidate.adjoint() * rho), &(rho * candidate));
    if !d.is_finite() {
        return Err(Error::InfeasibleDomain("O†ρ − ρO overflows double precision".into()));
    }
    Ok(d)
}

/// ‖η·lhs − rhs·η‖ on the interior block, relative to ‖rhs·η‖; zero when
/// lhs = η⁻¹ rhs η.
pub fn intertwining_residual(eta: &TruncatedOperator, lhs: &TruncatedOperator, rhs: &TruncatedOperator) -> f64 {
    linalg::interior_distance(&(eta * lhs), &(rhs * eta))
}

/// ρ = η†η = η², in normal order while η² is on the convergent side of the
/// pole and through the exponential form otherwise.
pub fn metric_rho(state: &MetricState, dim: usize) -> Result<TruncatedOperator> {
    state.require_feasible()?;
    if state.phi_cap.abs() >= 1.0 {
        return Err(Error::InfeasibleState(format!(
            "|λ+| = {} ≥ 1: η|n⟩ is not normalizable, so η†η has no matrix elements",
            state.phi_cap.abs()
        )));
    }
    let rho = match state.squared() {
        Ok(sq) if sq.branch == Some(Branch::Convergent) => fock_su11::dyson_map(&sq, dim)?,
        _ => {
            let eps = state.epsilon.expect("feasible state carries ε");
            fock_su11::dyson_map_exponential(2.0 * eps, state.z() * eps, dim)?
        }
    };
    if rho.iter().any(|z| !z.is_finite()) {
        return Err(Error::InfeasibleDomain(format!("entries of η†η overflow double precision at dim {dim}")));
    }
    Ok(rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservableReport {
    pub z_abs: f64,
    pub phi_cap: f64,
    pub varphi: f64,
    pub omega: f64,
    pub omega_convention: &'static str,
    pub dim: usize,
    pub commutator_xp: f64,
    pub x_conjugation: f64,
    pub p_conjugation: f64,
    pub o_quasi_hermiticity: f64,
    pub x_quasi_hermiticity: f64,
    pub quadrature_vs_product: Option<f64>,
    pub rho_min_interior_eigenvalue: f64,
    /// Smallest eigenvalue of D^{-1/2}ρD^{-1/2}, D = diag ρ, on the interior
    /// block; same sign pattern as ρ, well conditioned.
    pub rho_scaled_min_eigenvalue: f64,
}

/// Residuals of the observable constructions at one metric state.
pub fn observable_report(state: &MetricState, omega: f64, dim: usize) -> Result<ObservableReport> {
    let q = quadratures(omega, dim)?;
    let eta = fock_su11::dyson_map(state, dim)?;
    let rho = metric_rho(state, dim)?;
    let o = observable_o(state, omega, dim)?;
    let (commutator_xp, x_conjugation, p_conjugation) = if state.z_abs > 0.0 {
        let (x, p) = quasi_xp(state, omega, dim)?;
        let comm = linalg::commutator(&x, &p);
        let m = linalg::interior(dim);
        let target = linalg::identity(m) * I;
        let comm_res = (linalg::top_left(&comm, m) - target).norm() / (m as f64).sqrt();
        (comm_res, intertwining_residual(&eta, &x, &q.x), intertwining_residual(&eta, &p, &q.p))
    } else {
        (0.0, 0.0, 0.0)
    };
    let quadrature_vs_product = match metric_operator_quadrature(state, omega, dim) {
        Ok(m) => Some(linalg::interior_distance(&m, &eta)),
        Err(_) => None,
    };
    Ok(ObservableReport {
        z_abs: state.z_abs,
        phi_cap: state.phi_cap,
        varphi: state.varphi,
        omega,
        omega_convention: "modulus of ω at the state's instant",
        dim,
        commutator_xp,
        x_conjugation,
        p_conjugation,
        o_quasi_hermiticity: quasi_hermiticity_check(&o, &rho)?,
        x_quasi_hermiticity: quasi_hermiticity_check(&q.x, &rho)?,
        quadrature_vs_product,
        rho_min_interior_eigenvalue: linalg::interior_min_eigenvalue(&rho),
        rho_scaled_min_eigenvalue: linalg::interior_min_scaled_eigenvalue(&rho),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convergent() -> MetricState {
        MetricState::new(0.5, -0.3, 0.7).unwrap()
    }

    #[test]
    fn quadratures_canonical() {
        let q = quadratures(1.7, 30).unwrap();
        let comm = linalg::commutator(&q.x, &q.p);
        let m = 20;
        assert!((linalg::top_left(&comm, m) - linalg::identity(m) * I).norm() < 1e-12);
        let ac = &q.x * &q.p + &q.p * &q.x;
        assert!((linalg::top_left(&ac, m) - linalg::top_left(&q.anticommutator, m)).norm() < 1e-12);
    }

    #[test]
    fn form_matrix_matches_products() {
        let st = convergent();
        let w = 1.3;
        let q = quadratures(w, 30).unwrap();
        let f = observable_form(&st);
        let direct = &q.p * &q.p * f.p2 + &q.x * &q.x * (f.x2 * w * w) + &q.anticommutator * (f.xp * w);
        let m = 25;
        assert!((linalg::top_left(&direct, m) - linalg::top_left(&f.to_matrix(w, 30).unwrap(), m)).norm() < 1e-12);
    }

    #[test]
    fn identity_state_metric_is_identity() {
        let m = metric_operator_quadrature(&MetricState::identity(), 1.0, 10).unwrap();
        assert!((m - linalg::identity(10)).norm() < 1e-15);
    }

    #[test]
    fn quadrature_form_matches_product_form() {
        for st in [convergent(), MetricState::new(0.9, 0.5, 0.0).unwrap(), MetricState::new(0.6, -0.4, 2.1).unwrap()] {
            let a = metric_operator_quadrature(&st, 1.0, 40).unwrap();
            let b = fock_su11::dyson_map(&st, 40).unwrap();
            assert!(linalg::interior_distance(&a, &b) < 1e-8);
        }
    }

    #[test]
    fn past_pole_state_has_no_quadrature_matrix() {
        let st = MetricState::new(0.9, 2.0, 0.0).unwrap();
        assert!(metric_operator_quadrature(&st, 1.0, 40).is_err());
    }

    #[test]
    fn observable_zero_z_is_harmonic() {
        let f = observable_form(&MetricState::identity());
        assert_eq!((f.p2, f.x2, f.xp), (c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)));
        let st = MetricState::new(0.6, 0.3, 0.0).unwrap();
        assert!(observable_form(&st).max_coefficient_distance(&observable_form_static_real(0.6)) < 1e-15);
        assert_eq!(observable_form(&st).xp.norm(), 0.0);
    }

    #[test]
    fn observable_is_quasi_hermitian() {
        assert!(metric_rho(&MetricState::new(0.9, 2.0, 0.4).unwrap(), 40).is_err());
        for st in [convergent(), MetricState::new(0.9, -0.6, 0.4).unwrap()] {
            let o = observable_o(&st, 1.0, 40).unwrap();
            let rho = metric_rho(&st, 40).unwrap();
            assert!(quasi_hermiticity_check(&o, &rho).unwrap() < 1e-8);
            let q = quadratures(1.0, 40).unwrap();
            assert!(quasi_hermiticity_check(&q.x, &rho).unwrap() > 1e-3);
            assert_eq!(quasi_hermiticity_check(&q.x, &linalg::identity(40)).unwrap(), 0.0);
        }
    }

    #[test]
    fn quasi_position_momentum() {
        for st in [convergent(), MetricState::new(0.9, 2.0, 0.4).unwrap()] {
            let (x, p) = quasi_xp(&st, 1.0, 40).unwrap();
            let q = quadratures(1.0, 40).unwrap();
            let eta = fock_su11::dyson_map(&st, 40).unwrap();
            assert!(intertwining_residual(&eta, &x, &q.x) < 1e-8);
            assert!(intertwining_residual(&eta, &p, &q.p) < 1e-8);
            let comm = linalg::commutator(&x, &p);
            let m = 30;
            assert!((linalg::top_left(&comm, m) - linalg::identity(m) * I).norm() < 1e-8);
            let (xl, _) = quasi_xp_forms_literal(&st, 1.0).unwrap();
            assert!(intertwining_residual(&eta, &xl.to_matrix(&q), &q.x) > 0.5);
        }
    }

    #[test]
    fn static_real_specialization() {
        let st = MetricState::new(0.4, 0.15, 0.0).unwrap();
        let (x, p) = quasi_xp_forms(&st, 1.3).unwrap();
        let (xs, ps) = quasi_xp_forms_static_real(&st, 1.3).unwrap();
        assert!(x.max_coefficient_distance(&xs) < 1e-12);
        assert!(p.max_coefficient_distance(&ps) < 1e-12);
    }

    #[test]
    fn xp_branch_errors() {
        assert!(quasi_xp_forms(&MetricState::identity(), 1.0).is_err());
        assert!(quadratures(0.0, 10).is_err());
    }
}
