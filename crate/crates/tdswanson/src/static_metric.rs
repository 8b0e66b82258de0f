//! Time-independent Dyson maps: the algebraic constraint system at fixed |z|,
//! ε for real coefficients, the band of |z| without a real ε, and the
//! constancy condition on the coefficients.

use num_complex::Complex64;
use roots::{find_root_brent, find_roots_cubic, find_roots_quadratic, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_su11::{MetricRates, MetricState};
use crate::linalg;
use crate::metric_flow::{self, RawCoefficients};
use crate::model::{CoefficientScenario, Coefficients, PolarCoefficients};

/// Retention threshold for the constraint residuals.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// |z|Φ³ + (2 − |z|²)Φ² − 3|z|Φ + |z|².
pub fn cubic_value(z_abs: f64, phi: f64) -> f64 {
    ((z_abs * phi + (2.0 - z_abs * z_abs)) * phi - 3.0 * z_abs) * phi + z_abs * z_abs
}

fn cubic_slope(z_abs: f64, phi: f64) -> f64 {
    (3.0 * z_abs * phi + 2.0 * (2.0 - z_abs * z_abs)) * phi - 3.0 * z_abs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubicRoots {
    pub z_abs: f64,
    /// Real roots in ascending order, repeated by multiplicity where detected.
    pub roots: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Real roots of the angle-eliminated cubic in Φ.
pub fn solve_phi_cubic(z_abs: f64) -> Result<CubicRoots> {
    if !(0.0..=1.0).contains(&z_abs) {
        return Err(Error::InvalidArgument(format!("|z| = {z_abs} outside [0, 1]")));
    }
    let mut roots: Vec<f64> = if z_abs == 0.0 {
        vec![0.0, 0.0]
    } else {
        find_roots_cubic(z_abs, 2.0 - z_abs * z_abs, -3.0 * z_abs, z_abs * z_abs).as_ref().to_vec()
    };
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = cubic_slope(z_abs, *r);
            if d == 0.0 {
                break;
            }
            let step = cubic_value(z_abs, *r) / d;
            if !step.is_finite() || step.abs() > 1e-6 * (1.0 + r.abs()) {
                break;
            }
            *r -= step;
        }
    }
    roots.sort_by(f64::total_cmp);
    let residuals = roots.iter().map(|&r| cubic_value(z_abs, r).abs()).collect();
    Ok(CubicRoots { z_abs, roots, residuals })
}

/// Residuals of the static constraint system at (|z|, Φ, φ).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StaticResiduals {
    /// Reality of W.
    pub w_reality: f64,
    /// Real part of T = V*.
    pub tv_real: f64,
    /// Imaginary part of T = V*.
    pub tv_imag: f64,
    /// Combination of the reality and imaginary-part equations.
    pub combined: f64,
}

impl StaticResiduals {
    pub fn max(&self) -> f64 {
        self.w_reality.abs().max(self.tv_real.abs()).max(self.tv_imag.abs())
    }
}

pub fn static_residuals(z_abs: f64, phi: f64, varphi: f64, p: &PolarCoefficients) -> StaticResiduals {
    let chi = 2.0 * phi / z_abs - 1.0;
    let (sa, ca) = (varphi - p.varphi_alpha).sin_cos();
    let (sb, cb) = (varphi + p.varphi_beta).sin_cos();
    let (sw, cw) = p.varphi_omega.sin_cos();
    let (w, a, b) = (p.omega_abs, p.alpha_abs, p.beta_abs);
    let phi2 = phi * phi;
    StaticResiduals {
        w_reality: w * (chi + phi2) * sw + 2.0 * phi * (a * sa - b * chi * sb),
        tv_real: w * (1.0 - chi) * phi * cw - a * (1.0 - phi2) * ca + b * (chi * chi - phi2) * cb,
        tv_imag: w * (1.0 + chi) * phi * sw + a * (1.0 + phi2) * sa - b * (chi * chi + phi2) * sb,
        combined: a * (1.0 - phi2) * sa - b * (chi * chi - phi2) * sb,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleCandidate {
    pub varphi: f64,
    pub residuals: StaticResiduals,
    pub retained: bool,
}

/// Angles for a given Φ from the two sine relations, each checked against the
/// full constraint system.
pub fn recover_angles(phi: f64, z_abs: f64, p: &PolarCoefficients) -> Result<Vec<AngleCandidate>> {
    if z_abs == 0.0 {
        return Err(Error::InvalidArgument("|z| = 0 leaves χ undefined".into()));
    }
    let chi = 2.0 * phi / z_abs - 1.0;
    let denom = p.omega_abs * (1.0 - chi) * phi * p.varphi_omega.cos();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("|ω|cosφ_ω (1 − χ)Φ = 0".into()));
    }
    let s_ab = (p.varphi_alpha + p.varphi_beta).sin();
    let rhs_a = p.beta_abs * (chi * chi - phi * phi) / denom * s_ab;
    let rhs_b = p.alpha_abs * (1.0 - phi * phi) / denom * s_ab;
    if rhs_a.abs() > 1.0 || rhs_b.abs() > 1.0 {
        return Ok(Vec::new());
    }
    let base = rhs_a.asin();
    let mut out: Vec<AngleCandidate> = Vec::new();
    for vphi in [p.varphi_alpha + base, p.varphi_alpha + std::f64::consts::PI - base] {
        let vphi = linalg::wrap_angle(vphi);
        if ((vphi + p.varphi_beta).sin() - rhs_b).abs() > 1e-8 {
            continue;
        }
        if out.iter().any(|c| (c.varphi - vphi).abs() < 1e-12) {
            continue;
        }
        let residuals = static_residuals(z_abs, phi, vphi, p);
        out.push(AngleCandidate { varphi: vphi, retained: residuals.max() <= RESIDUAL_TOL, residuals });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    Cubic,
    Direct,
    RealQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticSolution {
    pub phi_cap: f64,
    pub varphi: f64,
    pub epsilon: Option<f64>,
    pub feasible: bool,
    pub residuals: StaticResiduals,
    pub source: SolutionSource,
}

fn make_solution(z_abs: f64, phi: f64, varphi: f64, p: &PolarCoefficients, source: SolutionSource) -> StaticSolution {
    let residuals = static_residuals(z_abs, phi, varphi, p);
    let state = MetricState::new(z_abs, phi, varphi).ok();
    let feasible = state.as_ref().is_some_and(|s| s.is_feasible());
    StaticSolution {
        phi_cap: phi,
        varphi,
        epsilon: state.and_then(|s| s.epsilon),
        feasible,
        residuals,
        source,
    }
}

/// Outcome of the static solver at one |z|.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticMetricSolution {
    pub z_abs: f64,
    pub cubic: CubicRoots,
    /// Angle candidates for each cubic root, retained or not.
    pub cubic_candidates: Vec<(f64, Vec<AngleCandidate>)>,
    /// (Φ, φ) pairs satisfying all constraints to [`RESIDUAL_TOL`].
    pub solutions: Vec<StaticSolution>,
}

/// Roots of the real-part constraint, which is quadratic in Φ at fixed φ.
fn real_part_roots(z_abs: f64, varphi: f64, p: &PolarCoefficients) -> Vec<f64> {
    let a_w = p.omega_abs * p.varphi_omega.cos();
    let ca = p.alpha_abs * (varphi - p.varphi_alpha).cos();
    let cb = p.beta_abs * (varphi + p.varphi_beta).cos();
    let c2 = -2.0 * a_w / z_abs + ca + cb * (4.0 / (z_abs * z_abs) - 1.0);
    let c1 = 2.0 * a_w - 4.0 * cb / z_abs;
    let c0 = cb - ca;
    let mut r = find_roots_quadratic(c2, c1, c0).as_ref().to_vec();
    r.sort_by(f64::total_cmp);
    r
}

fn push_unique(list: &mut Vec<StaticSolution>, s: StaticSolution) {
    if !list.iter().any(|o| (o.phi_cap - s.phi_cap).abs() < 1e-9 && linalg::wrap_angle(o.varphi - s.varphi).abs() < 1e-9) {
        list.push(s);
    }
}

/// Static solutions at fixed |z| by scanning φ along the branches of the
/// real-part constraint and locating zeros of the reality constraint.
pub fn solve_static_direct(z_abs: f64, p: &PolarCoefficients, samples: usize) -> Vec<StaticSolution> {
    let pi = std::f64::consts::PI;
    let n = samples.max(16);
    let grid: Vec<f64> = (0..=n).map(|i| -pi + 2.0 * pi * i as f64 / n as f64).collect();
    let branches: Vec<Vec<f64>> = grid.iter().map(|&v| real_part_roots(z_abs, v, p)).collect();
    let mut out = Vec::new();
    let reality_on = |k: usize, v: f64| -> f64 {
        let r = real_part_roots(z_abs, v, p);
        match r.get(k) {
            Some(&phi) => static_residuals(z_abs, phi, v, p).w_reality,
            None => f64::NAN,
        }
    };
    for i in 0..n {
        let (v0, v1) = (grid[i], grid[i + 1]);
        let nb = branches[i].len().min(branches[i + 1].len());
        if branches[i].len() != branches[i + 1].len() {
            continue;
        }
        for k in 0..nb {
            let g0 = reality_on(k, v0);
            let g1 = reality_on(k, v1);
            let root = if g0 == 0.0 {
                Some(v0)
            } else if g0 * g1 < 0.0 {
                let mut conv = SimpleConvergency { eps: 1e-15, max_iter: 200 };
                find_root_brent(v0, v1, |v| reality_on(k, v), &mut conv).ok()
            } else {
                None
            };
            if let Some(v) = root {
                if let Some(&phi) = real_part_roots(z_abs, v, p).get(k) {
                    let s = make_solution(z_abs, phi, linalg::wrap_angle(v), p, SolutionSource::Direct);
                    if s.residuals.max() <= RESIDUAL_TOL {
                        push_unique(&mut out, s);
                    }
                }
            }
        }
    }
    out
}

/// Full static solve at one |z|: cubic roots with their angles, plus the
/// direct scan.
pub fn solve_static(z_abs: f64, p: &PolarCoefficients) -> Result<StaticMetricSolution> {
    if !(z_abs > 0.0 && z_abs < 1.0) {
        return Err(Error::InvalidArgument(format!("|z| = {z_abs} outside (0, 1)")));
    }
    let cubic = solve_phi_cubic(z_abs)?;
    let mut solutions = Vec::new();
    let mut cubic_candidates = Vec::new();
    for &phi in &cubic.roots {
        let cands = recover_angles(phi, z_abs, p).unwrap_or_default();
        for cnd in cands.iter().filter(|c| c.retained) {
            push_unique(&mut solutions, make_solution(z_abs, phi, cnd.varphi, p, SolutionSource::Cubic));
        }
        cubic_candidates.push((phi, cands));
    }
    for s in solve_static_direct(z_abs, p, 720) {
        push_unique(&mut solutions, s);
    }
    Ok(StaticMetricSolution { z_abs, cubic, cubic_candidates, solutions })
}

/// Static solutions for real ω, α, β: φ = 0 and Φ from the real-part quadratic.
pub fn solve_static_real(z_abs: f64, omega: f64, alpha: f64, beta: f64) -> Result<Vec<StaticSolution>> {
    if !(z_abs > 0.0 && z_abs < 1.0) {
        return Err(Error::InvalidArgument(format!("|z| = {z_abs} outside (0, 1)")));
    }
    let c2 = (alpha - beta) - 2.0 * omega / z_abs + 4.0 * beta / (z_abs * z_abs);
    let c1 = 2.0 * omega - 4.0 * beta / z_abs;
    let c0 = beta - alpha;
    let p = Coefficients::real(omega, alpha, beta).polar();
    let mut roots = find_roots_quadratic(c2, c1, c0).as_ref().to_vec();
    roots.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for phi in roots {
        push_unique(&mut out, make_solution(z_abs, phi, 0.0, &p, SolutionSource::RealQuadratic));
    }
    Ok(out)
}

/// ε of a static metric with real coefficients, in both printed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticEpsilon {
    pub arctanh: Option<f64>,
    pub log: Option<f64>,
    pub reason: Option<String>,
}

impl StaticEpsilon {
    pub fn value(&self) -> Option<f64> {
        self.arctanh
    }
}

pub fn epsilon_static_real(z_abs: f64, omega_abs: f64, alpha_abs: f64, beta_abs: f64) -> StaticEpsilon {
    let absent = |r: String| StaticEpsilon { arctanh: None, log: None, reason: Some(r) };
    if !(0.0..1.0).contains(&z_abs) {
        return absent(format!("|z| = {z_abs} outside [0, 1)"));
    }
    let diff = alpha_abs - beta_abs;
    if diff == 0.0 {
        return StaticEpsilon { arctanh: Some(0.0), log: Some(0.0), reason: None };
    }
    let s = (1.0 - z_abs * z_abs).sqrt();
    let d = alpha_abs + beta_abs - z_abs * omega_abs;
    let x = diff * s / d;
    if !(x.abs() < 1.0) {
        return absent(format!("arctanh argument {x} has modulus ≥ 1"));
    }
    let ratio = (d + diff * s) / (d - diff * s);
    if !(ratio > 0.0) {
        return absent(format!("log argument {ratio} is not positive"));
    }
    StaticEpsilon { arctanh: Some(x.atanh() / (2.0 * s)), log: Some(ratio.ln() / (4.0 * s)), reason: None }
}

/// Interval of |z| without a real static ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForbiddenBand {
    pub z_minus: f64,
    pub z_plus: f64,
    /// Set when an endpoint lies outside [0, 1].
    pub advisory: Option<String>,
}

impl ForbiddenBand {
    fn ordered(a: f64, b: f64) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let advisory = if lo < 0.0 || hi > 1.0 {
            Some(format!("band endpoints ({lo}, {hi}) extend outside [0, 1]"))
        } else {
            None
        };
        ForbiddenBand { z_minus: lo, z_plus: hi, advisory }
    }

    /// Membership of |z| in the band clipped to [0, 1].
    pub fn contains(&self, z_abs: f64) -> bool {
        z_abs >= self.z_minus.max(0.0) && z_abs <= self.z_plus.min(1.0)
    }
}

fn band_denominator(omega_abs: f64, alpha_abs: f64, beta_abs: f64) -> Result<f64> {
    let den = omega_abs * omega_abs + (alpha_abs - beta_abs).powi(2);
    if den == 0.0 {
        return Err(Error::InvalidArgument("|ω|² + (|α| − |β|)² = 0: band undefined".into()));
    }
    Ok(den)
}

/// Band edges where the static ε stops being real. `None` when
/// |ω|² < 4|α||β|, in which case a real ε exists for every |z|.
pub fn forbidden_band(omega_abs: f64, alpha_abs: f64, beta_abs: f64) -> Result<Option<ForbiddenBand>> {
    let den = band_denominator(omega_abs, alpha_abs, beta_abs)?;
    let disc = omega_abs * omega_abs - 4.0 * alpha_abs * beta_abs;
    if disc < 0.0 {
        return Ok(None);
    }
    let centre = (alpha_abs + beta_abs) * omega_abs;
    let half = (alpha_abs - beta_abs) * disc.sqrt();
    Ok(Some(ForbiddenBand::ordered((centre + half) / den, (centre - half) / den)))
}

/// Band edges as printed, without the square root on |ω|² − 4|α||β|.
pub fn forbidden_band_literal(omega_abs: f64, alpha_abs: f64, beta_abs: f64) -> Result<ForbiddenBand> {
    let den = band_denominator(omega_abs, alpha_abs, beta_abs)?;
    let centre = (alpha_abs + beta_abs) * omega_abs;
    let half = (alpha_abs - beta_abs) * (omega_abs * omega_abs - 4.0 * alpha_abs * beta_abs);
    Ok(ForbiddenBand::ordered((centre + half) / den, (centre - half) / den))
}

/// How the overdots in the constancy condition are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstancyReading {
    /// d|α|/dt
    #[default]
    DerivativeOfModulus,
    /// |dα/dt|
    ModulusOfDerivative,
}

fn modulus_rate(z: Complex64, dz: Complex64, reading: ConstancyReading) -> f64 {
    match reading {
        ConstancyReading::ModulusOfDerivative => dz.norm(),
        ConstancyReading::DerivativeOfModulus => {
            let m = z.norm();
            if m == 0.0 {
                dz.norm()
            } else {
                (z.conj() * dz).re / m
            }
        }
    }
}

/// |LHS − RHS| of the condition keeping a static real-coefficient ε constant.
pub fn constancy_constraint_residual(
    scenario: &CoefficientScenario,
    z_abs: f64,
    t: f64,
    reading: ConstancyReading,
) -> Result<f64> {
    let k = scenario.coefficients(t)?;
    let dk = scenario.derivatives(t)?;
    let (w, a, b) = (k.omega.norm(), k.alpha.norm(), k.beta.norm());
    let dw = modulus_rate(k.omega, dk.omega, reading);
    let da = modulus_rate(k.alpha, dk.alpha, reading);
    let db = modulus_rate(k.beta, dk.beta, reading);
    let s = (1.0 - z_abs * z_abs).sqrt();
    let d_plus = a + b - z_abs * w + (a - b) * s;
    let d_minus = a + b - z_abs * w - (a - b) * s;
    if d_plus == 0.0 || d_minus == 0.0 {
        return Err(Error::SingularFlow { t, reason: "constancy condition has a vanishing denominator".into() });
    }
    let n_plus = da + db - z_abs * dw + (da - db) * s;
    let n_minus = da + db - z_abs * dw - (da - db) * s;
    Ok((n_plus / d_plus - n_minus / d_minus).abs())
}

/// W, V, T for a time-independent Dyson map.
pub fn static_hvt(state: &MetricState, k: &Coefficients) -> Result<RawCoefficients> {
    metric_flow::raw_hvt(state, k, &MetricRates::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn cubic_degenerates_at_zero() {
        let r = solve_phi_cubic(0.0).unwrap();
        assert_eq!(r.roots, vec![0.0, 0.0]);
    }

    #[test]
    fn cubic_roots_at_one() {
        let r = solve_phi_cubic(1.0).unwrap();
        let expect = [-1.0 - 2f64.sqrt(), -1.0 + 2f64.sqrt(), 1.0];
        assert_eq!(r.roots.len(), 3);
        for (a, b) in r.roots.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.residuals.iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn cubic_rejects_out_of_range() {
        assert!(solve_phi_cubic(1.2).is_err());
    }

    #[test]
    fn real_angles_are_zero_or_pi() {
        let p = Coefficients::real(1.0, 0.3, 0.1).polar();
        let cands = recover_angles(0.2, 0.5, &p).unwrap();
        let angles: Vec<f64> = cands.iter().map(|c| c.varphi.abs()).collect();
        assert!(angles.iter().all(|a| *a < 1e-15 || (a - std::f64::consts::PI).abs() < 1e-15));
    }

    #[test]
    fn real_quadratic_solutions_satisfy_constraints() {
        let sols = solve_static_real(0.1, 1.0, 0.3, 0.1).unwrap();
        let good: Vec<_> = sols.iter().filter(|s| s.feasible).collect();
        assert_eq!(good.len(), 1);
        assert!(good[0].residuals.max() < 1e-12);
        let eps36 = epsilon_static_real(0.1, 1.0, 0.3, 0.1).value().unwrap();
        assert!((good[0].epsilon.unwrap() - eps36).abs() < 1e-12);
    }

    #[test]
    fn direct_solver_finds_real_solutions() {
        let p = Coefficients::real(1.0, 0.3, 0.1).polar();
        let sols = solve_static_direct(0.1, &p, 720);
        let real = solve_static_real(0.1, 1.0, 0.3, 0.1).unwrap();
        for r in &real {
            assert!(sols.iter().any(|s| (s.phi_cap - r.phi_cap).abs() < 1e-9 && s.varphi.abs() < 1e-9));
        }
    }

    #[test]
    fn gauge_rotated_coefficients_have_static_solutions() {
        let th = 0.4;
        let k = Coefficients::new(c(1.0, 0.0), Complex64::from_polar(0.3, th), Complex64::from_polar(0.1, -th));
        let res = solve_static(0.1, &k.polar()).unwrap();
        let feas: Vec<_> = res.solutions.iter().filter(|s| s.feasible).collect();
        assert!(!feas.is_empty());
        for s in &feas {
            assert!(s.residuals.max() <= RESIDUAL_TOL);
            let st = MetricState::new(0.1, s.phi_cap, s.varphi).unwrap();
            let raw = static_hvt(&st, &k).unwrap();
            assert!(raw.imag_w() < 1e-10 && raw.t_minus_v_conj() < 1e-10);
        }
    }

    #[test]
    fn epsilon_static_examples() {
        assert_eq!(epsilon_static_real(0.4, 4.0, 1.0, 1.0).value(), Some(0.0));
        let e = epsilon_static_real(0.1, 1.0, 0.3, 0.1);
        assert!((e.arctanh.unwrap() - e.log.unwrap()).abs() < 1e-12);
        let band = forbidden_band(2.0, 0.6, 0.2).unwrap().unwrap();
        assert!(band.contains(0.3));
        assert!(epsilon_static_real(0.3, 2.0, 0.6, 0.2).value().is_none());
    }

    #[test]
    fn band_collapses_for_equal_moduli() {
        let b = forbidden_band(4.0, 1.0, 1.0).unwrap().unwrap();
        assert!((b.z_minus - 0.5).abs() < 1e-15 && (b.z_plus - 0.5).abs() < 1e-15);
    }

    #[test]
    fn band_edges() {
        let b = forbidden_band(2.0, 1.0, 0.0).unwrap().unwrap();
        assert!((b.z_minus - 0.0).abs() < 1e-15 && (b.z_plus - 0.8).abs() < 1e-15);
        let lit = forbidden_band_literal(2.0, 1.0, 0.0).unwrap();
        assert!((lit.z_minus + 0.4).abs() < 1e-15 && (lit.z_plus - 1.2).abs() < 1e-15);
        assert!(lit.advisory.is_some());
        assert!(forbidden_band(1.0, 0.4, 0.9).unwrap().is_none());
        assert!(forbidden_band(0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn constancy_residual_cases() {
        let s = CoefficientScenario::constant(c(2.0, 0.0), c(0.5, 0.0), c(0.2, 0.0), 0.0, 1.0).unwrap();
        assert_eq!(constancy_constraint_residual(&s, 0.3, 0.5, ConstancyReading::DerivativeOfModulus).unwrap(), 0.0);
        let json = r#"{"omega": {"kind": "polynomial", "coefficients": [2, 0.6]},
                       "alpha": {"kind": "polynomial", "coefficients": [0.5, 0.15]},
                       "beta": {"kind": "polynomial", "coefficients": [0.2, 0.06]}, "t0": 0, "t1": 1}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        for reading in [ConstancyReading::DerivativeOfModulus, ConstancyReading::ModulusOfDerivative] {
            assert!(constancy_constraint_residual(&s, 0.3, 0.5, reading).unwrap() < 1e-14);
        }
        let json = r#"{"omega": {"kind": "polynomial", "coefficients": [2, 0.6]},
                       "alpha": {"kind": "constant", "value": 0.5},
                       "beta": {"kind": "polynomial", "coefficients": [0.2, -0.06]}, "t0": 0, "t1": 1}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        assert!(constancy_constraint_residual(&s, 0.3, 0.5, ConstancyReading::DerivativeOfModulus).unwrap() > 1e-3);
    }

    #[test]
    fn identity_static_map_keeps_coefficients() {
        let k = Coefficients::new(c(1.0, 0.0), c(0.2, 0.1), c(0.2, -0.1));
        let raw = static_hvt(&MetricState::identity(), &k).unwrap();
        assert_eq!((raw.w, raw.v, raw.t), (k.omega, k.alpha, k.beta));
    }
}
