//! SU(1,1) algebra on a truncated Fock space, the Iwasawa (normal-ordered)
//! form of the Dyson map and its action on ladder operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, TruncatedOperator};

/// K+ = a†²/2, K− = a²/2, K0 = a†a/2 + 1/4.
#[derive(Debug, Clone)]
pub struct Su11Generators {
    pub k_plus: TruncatedOperator,
    pub k_minus: TruncatedOperator,
    pub k_zero: TruncatedOperator,
}

pub fn su11_generators(dim: usize) -> Result<Su11Generators> {
    linalg::check_dim(dim, 2)?;
    let half = c(0.5, 0.0);
    Ok(Su11Generators {
        k_plus: linalg::creation_sq(dim) * half,
        k_minus: linalg::annihilation_sq(dim) * half,
        k_zero: DMatrix::from_fn(dim, dim, |i, j| if i == j { c(i as f64 / 2.0 + 0.25, 0.0) } else { c(0.0, 0.0) }),
    })
}

/// Coefficients of η = exp(λ+K+) λ0^{K0} exp(λ−K−).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IwasawaCoefficients {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub lambda_zero: f64,
    pub xi: f64,
    /// coshΞ − (ε/Ξ) sinhΞ; the normal-ordered form converges while positive.
    pub denominator: f64,
}

impl IwasawaCoefficients {
    pub fn is_convergent(&self) -> bool {
        self.denominator > 0.0
    }
}

fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// Normal-ordering coefficients of exp[ε(a†a + ½) + μa² + μ*a†²].
pub fn iwasawa_coeffs(epsilon: f64, mu: Complex64) -> Result<IwasawaCoefficients> {
    let xi_sq = epsilon * epsilon - 4.0 * mu.norm_sqr();
    let xi_sq = if xi_sq < 0.0 && xi_sq > -1e-14 * epsilon * epsilon { 0.0 } else { xi_sq };
    if xi_sq < 0.0 {
        return Err(Error::InfeasibleDomain(format!("ε² − 4|μ|² = {xi_sq:e} < 0")));
    }
    let xi = xi_sq.sqrt();
    let sc = sinhc(xi);
    let d = xi.cosh() - epsilon * sc;
    if d.abs() <= 1e-13 * xi.cosh() {
        return Err(Error::InfeasibleDomain("normal-ordering pole: coshΞ = (ε/Ξ)sinhΞ".into()));
    }
    let lambda_plus = mu.conj() * (2.0 * sc / d);
    Ok(IwasawaCoefficients { lambda_plus, lambda_minus: lambda_plus.conj(), lambda_zero: d.powi(-2), xi, denominator: d })
}

/// Which side of the normal-ordering pole a feasible state lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// exp(εQ) has convergent Fock matrix elements and equals the product form.
    Convergent,
    /// λ0 > 0 but ε is beyond the pole; the product form no longer represents exp(εQ).
    PastPole,
}

/// Time derivatives of the metric variables (Φ, φ, λ0).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricRates {
    pub phi_cap: f64,
    pub varphi: f64,
    pub lambda_zero: f64,
}

/// Both printed forms of ε(|z|, Φ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonForms {
    pub arctanh: f64,
    pub log: f64,
}

/// ε from (|z|, χ) through the arctanh and log forms; `Err` holds the reason
/// when no real ε exists.
pub fn epsilon_forms(z_abs: f64, chi: f64) -> std::result::Result<EpsilonForms, String> {
    if !(0.0..1.0).contains(&z_abs) {
        return Err(format!("|z| = {z_abs} outside [0, 1)"));
    }
    if chi == 1.0 {
        return Err("χ = 1 (Φ = |z|)".into());
    }
    let s = (1.0 - z_abs * z_abs).sqrt();
    let arg = s * (1.0 + chi) / (chi - 1.0);
    if arg.abs() >= 1.0 {
        return Err(format!("arctanh argument {arg} has modulus ≥ 1"));
    }
    let num = (1.0 + s) * (1.0 + chi) - 2.0;
    let den = (1.0 - s) * (1.0 + chi) - 2.0;
    if !(num / den > 0.0) {
        return Err(format!("log argument {} is not positive", num / den));
    }
    let (arctanh, log) = if s < 1e-6 {
        let q = (1.0 + chi) / (chi - 1.0);
        let v = q * (1.0 + s * s * q * q / 3.0);
        (v, v)
    } else {
        (arg.atanh() / s, (num / den).ln() / (2.0 * s))
    };
    Ok(EpsilonForms { arctanh, log })
}

/// Dyson-map parameters at one instant.
///
/// The state is stored through (Φ, φ, λ0); χ = Φ² − λ0 and |z| = 2Φ/(1+χ)
/// are derived. The representation is canonicalized so that |z| ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricState {
    pub phi_cap: f64,
    pub varphi: f64,
    pub lambda_zero: f64,
    pub chi: f64,
    pub z_abs: f64,
    pub epsilon: Option<f64>,
    pub xi: Option<f64>,
    pub gamma_plus: Option<f64>,
    pub gamma_minus: Option<f64>,
    pub branch: Option<Branch>,
    pub infeasibility: Option<String>,
}

impl MetricState {
    /// The identity map: λ± = 0, λ0 = 1.
    pub fn identity() -> Self {
        Self::from_parts(0.0, 0.0, 1.0)
    }

    /// State from the defining parameters (|z|, Φ, φ).
    pub fn new(z_abs: f64, phi_cap: f64, varphi: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&z_abs) {
            return Err(Error::InvalidArgument(format!("|z| = {z_abs} outside [0, 1)")));
        }
        if z_abs == 0.0 {
            if phi_cap != 0.0 {
                return Err(Error::DegenerateState("|z| = 0 with Φ ≠ 0 leaves χ undefined".into()));
            }
            let mut s = Self::identity();
            s.varphi = varphi;
            return Ok(s);
        }
        let chi = 2.0 * phi_cap / z_abs - 1.0;
        Ok(Self::build(phi_cap, varphi, phi_cap * phi_cap - chi, chi, z_abs))
    }

    /// State from (Φ, φ, λ0), the variables carried by the metric flow.
    pub fn from_parts(phi_cap: f64, varphi: f64, lambda_zero: f64) -> Self {
        let chi = phi_cap * phi_cap - lambda_zero;
        if phi_cap == 0.0 {
            return Self::build(0.0, varphi, lambda_zero, chi, 0.0);
        }
        let z_signed = 2.0 * phi_cap / (1.0 + chi);
        if z_signed < 0.0 {
            Self::build(-phi_cap, linalg::wrap_angle(varphi + std::f64::consts::PI), lambda_zero, chi, -z_signed)
        } else {
            Self::build(phi_cap, varphi, lambda_zero, chi, z_signed)
        }
    }

    /// State of exp[ε(a†a + ½) + μa² + μ*a†²].
    pub fn from_epsilon_mu(epsilon: f64, mu: Complex64) -> Result<Self> {
        let iw = iwasawa_coeffs(epsilon, mu)?;
        let phi_cap = -2.0 * mu.norm() * sinhc(iw.xi) / iw.denominator;
        Ok(Self::from_parts(phi_cap, linalg::arg(mu), iw.lambda_zero))
    }

    fn build(phi_cap: f64, varphi: f64, lambda_zero: f64, chi: f64, z_abs: f64) -> Self {
        let mut st = MetricState {
            phi_cap,
            varphi,
            lambda_zero,
            chi,
            z_abs,
            epsilon: None,
            xi: None,
            gamma_plus: None,
            gamma_minus: None,
            branch: None,
            infeasibility: None,
        };
        if 1.0 + chi != 0.0 {
            let gm = 2.0 / (1.0 + chi);
            st.gamma_minus = Some(gm);
            st.gamma_plus = Some(2.0 - gm);
        }
        if !(lambda_zero > 0.0) {
            st.infeasibility = Some(format!("λ0 = Φ² − χ = {lambda_zero} ≤ 0"));
            return st;
        }
        if !z_abs.is_finite() || z_abs >= 1.0 {
            st.infeasibility = Some(format!("|z| = {z_abs} ≥ 1"));
            return st;
        }
        let s = (1.0 - z_abs * z_abs).sqrt();
        let eps = if z_abs == 0.0 {
            Ok(0.5 * lambda_zero.ln())
        } else {
            epsilon_forms(z_abs, chi).map(|f| f.arctanh)
        };
        match eps {
            Ok(e) => {
                st.epsilon = Some(e);
                st.xi = Some(e * s);
            }
            Err(reason) => {
                st.infeasibility = Some(reason);
                return st;
            }
        }
        st.branch = Some(if phi_cap * z_abs > 1.0 + s { Branch::PastPole } else { Branch::Convergent });
        st
    }

    pub fn is_feasible(&self) -> bool {
        self.infeasibility.is_none()
    }

    pub fn require_feasible(&self) -> Result<()> {
        match &self.infeasibility {
            None => Ok(()),
            Some(r) => Err(Error::InfeasibleState(r.clone())),
        }
    }

    pub fn require_convergent(&self) -> Result<()> {
        self.require_feasible()?;
        if self.branch == Some(Branch::PastPole) {
            return Err(Error::InfeasibleState("state lies past the normal-ordering pole".into()));
        }
        Ok(())
    }

    /// λ+ = −Φe^{−iφ}.
    pub fn lambda_plus(&self) -> Complex64 {
        Complex64::from_polar(-self.phi_cap, -self.varphi)
    }

    /// λ− = −Φe^{iφ}.
    pub fn lambda_minus(&self) -> Complex64 {
        Complex64::from_polar(-self.phi_cap, self.varphi)
    }

    pub fn iwasawa(&self) -> IwasawaCoefficients {
        let d = self.lambda_zero.sqrt().recip();
        let d = if self.branch == Some(Branch::PastPole) { -d } else { d };
        IwasawaCoefficients {
            lambda_plus: self.lambda_plus(),
            lambda_minus: self.lambda_minus(),
            lambda_zero: self.lambda_zero,
            xi: self.xi.unwrap_or(f64::NAN),
            denominator: d,
        }
    }

    /// z = |z|e^{iφ}.
    pub fn z(&self) -> Complex64 {
        Complex64::from_polar(self.z_abs, self.varphi)
    }

    /// μ = εz/2, when ε exists.
    pub fn mu(&self) -> Option<Complex64> {
        self.epsilon.map(|e| self.z() * (e / 2.0))
    }

    /// State of η⁻¹ (parameters (Φ/χ, φ, λ0/χ²), i.e. ε → −ε).
    pub fn inverse(&self) -> Result<Self> {
        self.require_feasible()?;
        if self.chi == 0.0 {
            return Err(Error::DegenerateState("χ = 0 has no normal-ordered inverse".into()));
        }
        Ok(Self::from_parts(self.phi_cap / self.chi, self.varphi, self.lambda_zero / (self.chi * self.chi)))
    }

    /// State of η² = η†η (ε → 2ε at fixed z).
    pub fn squared(&self) -> Result<Self> {
        self.require_feasible()?;
        let eps = self.epsilon.expect("feasible state carries ε");
        Self::from_epsilon_mu(2.0 * eps, self.z() * eps)
    }
}

/// exp(λ a†²/2) on the truncated space (exact, lower triangular).
pub fn exp_creation_sq(lambda: Complex64, dim: usize) -> TruncatedOperator {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        let mut v = c(1.0, 0.0);
        let mut row = n;
        let mut k = 0usize;
        while row < dim {
            m[(row, n)] = v;
            row += 2;
            k += 1;
            v *= lambda * 0.5 * (((row - 1) * row) as f64).sqrt() / k as f64;
        }
    }
    m
}

fn product_factors(st: &MetricState, dim: usize) -> (TruncatedOperator, DVector<Complex64>, TruncatedOperator) {
    let lower = exp_creation_sq(st.lambda_plus(), dim);
    let upper = exp_creation_sq(st.lambda_minus(), dim).transpose();
    let diag = DVector::from_fn(dim, |n, _| c(st.lambda_zero.powf(n as f64 / 2.0 + 0.25), 0.0));
    (lower, diag, upper)
}

/// η = exp(λ+K+) λ0^{K0} exp(λ−K−); every entry equals the corresponding
/// matrix element of the untruncated operator.
pub fn dyson_map(state: &MetricState, dim: usize) -> Result<TruncatedOperator> {
    linalg::check_dim(dim, 2)?;
    state.require_feasible()?;
    let (lower, diag, upper) = product_factors(state, dim);
    Ok(lower * DMatrix::from_diagonal(&diag) * upper)
}

/// η⁻¹ in normal order through the inverse state.
pub fn dyson_map_inverse(state: &MetricState, dim: usize) -> Result<TruncatedOperator> {
    dyson_map(&state.inverse()?, dim)
}

/// Analytic ∂tη from the rates of (Φ, φ, λ0). Exact except in the last two columns.
pub fn dyson_map_derivative(state: &MetricState, rates: &MetricRates, dim: usize) -> Result<TruncatedOperator> {
    linalg::check_dim(dim, 2)?;
    if !(state.lambda_zero > 0.0) {
        return Err(Error::InfeasibleState(format!("λ0 = {} ≤ 0", state.lambda_zero)));
    }
    let (phi, vphi) = (state.phi_cap, state.varphi);
    let dlp = Complex64::new(-rates.phi_cap, phi * rates.varphi) * Complex64::from_polar(1.0, -vphi);
    let dlm = Complex64::new(-rates.phi_cap, -phi * rates.varphi) * Complex64::from_polar(1.0, vphi);
    let (lower, diag, upper) = product_factors(state, dim);
    let eta = &lower * DMatrix::from_diagonal(&diag) * &upper;
    let g = su11_generators(dim)?;
    let mid_diag = DVector::from_fn(dim, |n, _| diag[n] * (rates.lambda_zero / state.lambda_zero) * (n as f64 / 2.0 + 0.25));
    let mid = &lower * DMatrix::from_diagonal(&mid_diag) * &upper;
    Ok(&g.k_plus * &eta * dlp + mid + &eta * &g.k_minus * dlm)
}

/// Linear action of η on (a, a†): η (a, a†)ᵀ η⁻¹ = M (a, a†)ᵀ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bogoliubov {
    pub matrix: [[Complex64; 2]; 2],
    /// Overall sign relative to (1/√λ0)[[−1, λ+],[−λ−, χ]]; −1 is the branch
    /// that fixes a and a† at the identity state.
    pub branch: i8,
}

impl Bogoliubov {
    pub fn determinant(&self) -> Complex64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// M applied to the truncated ladder operators.
    pub fn apply(&self, dim: usize) -> (TruncatedOperator, TruncatedOperator) {
        let a = linalg::annihilation(dim);
        let ad = linalg::creation(dim);
        let m = &self.matrix;
        (&a * m[0][0] + &ad * m[0][1], &a * m[1][0] + &ad * m[1][1])
    }
}

pub fn bogoliubov_conjugation(state: &MetricState) -> Result<Bogoliubov> {
    if !(state.lambda_zero > 0.0) {
        return Err(Error::InfeasibleState(format!("λ0 = {} ≤ 0", state.lambda_zero)));
    }
    let k = -1.0 / state.lambda_zero.sqrt();
    let one = c(1.0, 0.0);
    Ok(Bogoliubov {
        matrix: [
            [-one * k, state.lambda_plus() * k],
            [-state.lambda_minus() * k, c(state.chi, 0.0) * k],
        ],
        branch: -1,
    })
}

/// exp{t[a†a + ½ + (z a² + z* a†²)/2]} for |z| < 1 on the first `dim` levels.
///
/// Uses Q = s S†(a†a + ½)S with s = √(1−|z|²) and S = exp[(ξa†² − ξ*a²)/2],
/// ξ = r e^{−i arg z}, tanh 2r = |z|: each column of e^{tQ/2} is generated
/// from a weighted squeezed vacuum, so no truncated generator is exponentiated.
pub fn exp_quadratic(z: Complex64, t: f64, dim: usize) -> Result<TruncatedOperator> {
    linalg::check_dim(dim, 1)?;
    let za = z.norm();
    if za >= 1.0 {
        return Err(Error::InfeasibleDomain(format!("|z| = {za} ≥ 1: quadratic form is not positive")));
    }
    let s = (1.0 - za * za).sqrt();
    let r = 0.5 * za.atanh();
    let theta = -linalg::arg(z);
    let q = (t * s).exp() * r.tanh();
    if q >= 1.0 {
        return Err(Error::InfeasibleState(format!("matrix elements diverge (ratio {q} ≥ 1)")));
    }
    let len = series_length(q, dim)?;
    let g = Complex64::from_polar(r.tanh() / 2.0, theta) * (t * s).exp();
    let mut vac = DVector::<Complex64>::zeros(len);
    vac[0] = c((t * s / 4.0).exp() / r.cosh().sqrt(), 0.0);
    let mut k = 0;
    while 2 * k + 2 < len {
        vac[2 * k + 2] = vac[2 * k] * g * (((2 * k + 1) * (2 * k + 2)) as f64).sqrt() / (k + 1) as f64;
        k += 1;
    }
    // Columns are B†^m|g⟩/√m! with B† = up·a† + down·a. Eliminating the a
    // term with the annihilator of |g⟩ leaves a recurrence whose weights
    // e^{ts/2}/cosh r and tanh r are both below one.
    let up = r.cosh() * (t * s / 2.0).exp();
    let down = Complex64::from_polar(-r.sinh() * (-t * s / 2.0).exp(), -theta);
    let shift = (t * s / 2.0).exp() / r.cosh();
    let back = Complex64::from_polar(-r.tanh(), -theta);
    let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(dim);
    cols.push(vac);
    if dim > 1 {
        let v = &cols[0];
        let mut first = DVector::<Complex64>::zeros(len);
        for k in 0..len {
            if k >= 1 {
                first[k] += v[k - 1] * (up * (k as f64).sqrt());
            }
            if k + 1 < len {
                first[k] += v[k + 1] * (down * ((k + 1) as f64).sqrt());
            }
        }
        cols.push(first);
    }
    for m in 1..dim.saturating_sub(1) {
        let norm = ((m + 1) as f64).sqrt();
        let sm = (m as f64).sqrt();
        let mut next = DVector::<Complex64>::zeros(len);
        for k in 0..len {
            let mut acc = cols[m - 1][k] * back * sm;
            if k >= 1 {
                acc += cols[m][k - 1] * (shift * (k as f64).sqrt());
            }
            next[k] = acc / norm;
        }
        cols.push(next);
    }
    let basis = DMatrix::from_columns(&cols);
    Ok(basis.adjoint() * basis)
}

fn series_length(q: f64, dim: usize) -> Result<usize> {
    if q <= 0.0 {
        return Ok(2 * dim + 8);
    }
    let lq = -q.ln();
    let p = dim as f64;
    let peak = (p / lq).max(1.0);
    let mut k = peak;
    while p * (k / peak).ln() - (k - peak) * lq > -45.0 {
        k += 1.0 + 0.05 * k;
        if k > 4.0e5 {
            return Err(Error::Truncation { defect: q, threshold: 1.0 });
        }
    }
    Ok(k.ceil() as usize + 2 * dim + 8)
}

/// exp[ε(a†a + ½) + μa² + μ*a†²] through [`exp_quadratic`].
pub fn dyson_map_exponential(epsilon: f64, mu: Complex64, dim: usize) -> Result<TruncatedOperator> {
    if epsilon == 0.0 {
        if mu.norm() == 0.0 {
            return Ok(linalg::identity(dim));
        }
        return Err(Error::InfeasibleDomain("ε = 0 with μ ≠ 0".into()));
    }
    exp_quadratic(mu * (2.0 / epsilon), epsilon, dim)
}

/// Generator ε(a†a + ½) + μa² + μ*a†² as a truncated matrix.
pub fn dyson_generator(epsilon: f64, mu: Complex64, dim: usize) -> TruncatedOperator {
    let n = linalg::number(dim) + linalg::identity(dim) * c(0.5, 0.0);
    n * c(epsilon, 0.0) + linalg::annihilation_sq(dim) * mu + linalg::creation_sq(dim) * mu.conj()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn generator_entries() {
        let g = su11_generators(4).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| g.k_zero[(i, i)].re).collect();
        assert_eq!(diag, vec![0.25, 0.75, 1.25, 1.75]);
        assert!((g.k_plus[(2, 0)].re - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(su11_generators(1).is_err());
    }

    #[test]
    fn generator_commutators_on_interior() {
        let dim = 20;
        let g = su11_generators(dim).unwrap();
        let r1 = linalg::commutator(&g.k_plus, &g.k_minus) + &g.k_zero * c(2.0, 0.0);
        let r2 = linalg::commutator(&g.k_zero, &g.k_plus) - &g.k_plus;
        let r3 = linalg::commutator(&g.k_zero, &g.k_minus) + &g.k_minus;
        for r in [r1, r2, r3] {
            assert!(linalg::top_left(&r, dim - 2).norm() < 1e-12);
        }
    }

    #[test]
    fn iwasawa_trivial_cases() {
        let id = iwasawa_coeffs(0.0, c(0.0, 0.0)).unwrap();
        assert_eq!(id.lambda_plus, c(0.0, 0.0));
        assert!((id.lambda_zero - 1.0).abs() < 1e-15);
        let e1 = iwasawa_coeffs(1.0, c(0.0, 0.0)).unwrap();
        assert!((e1.lambda_zero - 1f64.exp().powi(2)).abs() < 1e-12);
        assert!(iwasawa_coeffs(0.1, c(0.2, 0.0)).is_err());
    }

    #[test]
    fn iwasawa_small_xi_limit() {
        let eps = 0.8;
        let mu = c(0.4 - 1e-13, 0.0);
        let near = iwasawa_coeffs(eps, mu).unwrap();
        let at = iwasawa_coeffs(eps, c(0.4, 0.0)).unwrap();
        assert!(close(near.lambda_plus, at.lambda_plus, 1e-6));
        assert!((near.lambda_zero - at.lambda_zero).abs() < 1e-6);
        // Ξ = 0: λ+ = 2μ*/(1 − ε), λ0 = (1 − ε)^−2
        assert!(close(at.lambda_plus, c(0.8 / 0.2, 0.0), 1e-10));
        assert!((at.lambda_zero - 25.0).abs() < 1e-9);
    }

    #[test]
    fn metric_state_examples() {
        let s = MetricState::new(0.8, 0.9, 0.0).unwrap();
        assert!((s.chi - 1.25).abs() < 1e-15);
        assert!((s.lambda_zero + 0.44).abs() < 1e-12);
        assert!(!s.is_feasible());
        let s = MetricState::new(0.9, 2.0, 0.0).unwrap();
        assert!((s.chi - (4.0 / 0.9 - 1.0)).abs() < 1e-14);
        assert!((s.lambda_zero - (4.0 - s.chi)).abs() < 1e-14);
        assert!(close(s.lambda_plus(), c(-2.0, 0.0), 1e-15));
        assert!(close(s.lambda_minus(), c(-2.0, 0.0), 1e-15));
        assert_eq!(s.branch, Some(Branch::PastPole));
        assert!(matches!(MetricState::new(0.0, 0.3, 0.0), Err(Error::DegenerateState(_))));
        assert!(MetricState::new(1.0, 0.3, 0.0).is_err());
    }

    #[test]
    fn boundary_has_no_epsilon() {
        let z: f64 = 0.6;
        // |z| = 2Φ/(1+Φ²) ⇒ Φ = (1 − √(1−z²))/z
        let phi = (1.0 - (1.0 - z * z).sqrt()) / z;
        let s = MetricState::new(z, phi, 0.0).unwrap();
        assert!(s.lambda_zero.abs() < 1e-14);
        assert!(s.epsilon.is_none() || s.lambda_zero > 0.0);
    }

    #[test]
    fn from_epsilon_mu_round_trip() {
        for &(eps, mu) in &[(0.7, c(0.2, 0.1)), (-0.9, c(-0.3, 0.2)), (1.2, c(0.0, 0.05)), (0.3, c(0.0, 0.0))] {
            let st = MetricState::from_epsilon_mu(eps, mu).unwrap();
            let iw = iwasawa_coeffs(eps, mu).unwrap();
            assert!(close(st.lambda_plus(), iw.lambda_plus, 1e-12));
            assert!((st.lambda_zero - iw.lambda_zero).abs() < 1e-12 * iw.lambda_zero);
            assert!((st.epsilon.unwrap() - eps).abs() < 1e-10, "{eps} vs {:?}", st.epsilon);
            assert!((st.z_abs - 2.0 * mu.norm() / eps.abs()).abs() < 1e-12);
            assert_eq!(st.branch, Some(Branch::Convergent));
        }
    }

    #[test]
    fn inverse_state_negates_epsilon() {
        let st = MetricState::new(0.5, -0.3, 0.7).unwrap();
        let inv = st.inverse().unwrap();
        assert!((inv.epsilon.unwrap() + st.epsilon.unwrap()).abs() < 1e-12);
        assert!((inv.z_abs - st.z_abs).abs() < 1e-14);
    }

    #[test]
    fn exp_creation_sq_matches_matrix_exponential() {
        let dim = 16;
        let lam = c(0.3, -0.2);
        let gen = linalg::creation_sq(dim) * (lam * 0.5);
        assert!((exp_creation_sq(lam, dim) - gen.exp()).norm() < 1e-12);
    }

    #[test]
    fn identity_state_gives_identity_map() {
        let eta = dyson_map(&MetricState::identity(), 6).unwrap();
        assert!((eta - linalg::identity(6)).norm() < 1e-15);
    }

    #[test]
    fn bogoliubov_identity_fixes_ladders() {
        let b = bogoliubov_conjugation(&MetricState::identity()).unwrap();
        assert!(close(b.matrix[0][0], c(1.0, 0.0), 1e-15));
        assert!(close(b.matrix[1][1], c(1.0, 0.0), 1e-15));
        assert!(close(b.matrix[0][1], c(0.0, 0.0), 1e-15));
    }

    #[test]
    fn bogoliubov_determinant_is_one() {
        let st = MetricState::new(0.9, 2.0, 0.0).unwrap();
        let b = bogoliubov_conjugation(&st).unwrap();
        assert!(close(b.determinant(), c(1.0, 0.0), 1e-12));
        let expect = (st.lambda_plus() * st.lambda_minus() - st.chi) / st.lambda_zero;
        assert!(close(b.determinant(), expect, 1e-12));
    }

    #[test]
    fn bogoliubov_intertwines_truncated_ladders() {
        let st = MetricState::from_epsilon_mu(1.0, c(0.3, 0.0)).unwrap();
        let dim = 30;
        let eta = dyson_map(&st, dim).unwrap();
        let b = bogoliubov_conjugation(&st).unwrap();
        let (ma, mad) = b.apply(dim);
        let a = linalg::annihilation(dim);
        let ad = linalg::creation(dim);
        let r1 = &eta * &a - &ma * &eta;
        let r2 = &eta * &ad - &mad * &eta;
        let m = 22;
        let scale = linalg::top_left(&eta, m).norm();
        assert!(linalg::top_left(&r1, m).norm() / scale < 1e-12);
        assert!(linalg::top_left(&r2, m).norm() / scale < 1e-12);
    }

    #[test]
    fn exp_quadratic_matches_expm_for_decaying_exponent() {
        let dim = 30;
        let (eps, mu) = (-1.1, c(0.25, -0.3));
        let big = 160;
        let direct = linalg::top_left(&dyson_generator(eps, mu, big).exp(), dim);
        let spectral = dyson_map_exponential(eps, mu, dim).unwrap();
        assert!(linalg::interior_distance(&spectral, &direct) < 1e-12);
    }

    #[test]
    fn product_form_matches_exponential_form() {
        let dim = 30;
        for &(eps, mu) in &[(1.0, c(0.3, 0.0)), (-0.8, c(0.1, 0.3)), (0.6, c(-0.1, 0.2))] {
            let st = MetricState::from_epsilon_mu(eps, mu).unwrap();
            let prod = dyson_map(&st, dim).unwrap();
            let expo = dyson_map_exponential(eps, mu, dim).unwrap();
            assert!(linalg::interior_distance(&prod, &expo) < 1e-10, "ε={eps}");
            let herm = linalg::interior_distance(&prod, &prod.adjoint());
            assert!(herm < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let rates = MetricRates { phi_cap: 0.3, varphi: -0.7, lambda_zero: 0.4 };
        let (phi, vphi, l0) = (-0.3, 0.7, 2.29);
        let dim = 24;
        let h = 1e-5;
        let at = |s: f64| {
            let st = MetricState::from_parts(phi + s * rates.phi_cap, vphi + s * rates.varphi, l0 + s * rates.lambda_zero);
            dyson_map(&st, dim).unwrap()
        };
        let fd = (at(h) - at(-h)) / c(2.0 * h, 0.0);
        let st = MetricState::from_parts(phi, vphi, l0);
        let an = dyson_map_derivative(&st, &rates, dim).unwrap();
        let m = dim - 2;
        let diff = linalg::top_left(&(fd - &an), m).norm() / linalg::top_left(&an, m).norm();
        assert!(diff < 1e-8, "{diff}");
    }
}
