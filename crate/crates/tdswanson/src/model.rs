//! Time-dependent coefficients of H(t) = ω(a†a + ½) + αa² + βa†².

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, TruncatedOperator};
use crate::spline::Interpolant;

/// Complex number written in JSON as a bare real or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "ComplexRepr", into = "[f64; 2]")]
pub struct ComplexValue(pub Complex64);

#[derive(Deserialize)]
#[serde(untagged)]
enum ComplexRepr {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexRepr> for ComplexValue {
    fn from(r: ComplexRepr) -> Self {
        match r {
            ComplexRepr::Real(x) => ComplexValue(c(x, 0.0)),
            ComplexRepr::Pair([re, im]) => ComplexValue(c(re, im)),
        }
    }
}

impl From<ComplexValue> for [f64; 2] {
    fn from(v: ComplexValue) -> Self {
        [v.0.re, v.0.im]
    }
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        ComplexValue(z)
    }
}

impl From<f64> for ComplexValue {
    fn from(x: f64) -> Self {
        ComplexValue(c(x, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinusoidShape {
    /// A e^{i(νt+δ)}
    #[default]
    Exp,
    /// A cos(νt+δ)
    Cos,
    /// A sin(νt+δ)
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationRule {
    #[default]
    Cubic,
    Linear,
}

/// A coefficient as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant {
        value: ComplexValue,
    },
    /// Σ_k c_k t^k
    Polynomial {
        coefficients: Vec<ComplexValue>,
    },
    /// shape(νt + δ) scaled by `amplitude`, plus `offset`.
    Sinusoid {
        amplitude: ComplexValue,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: ComplexValue,
        #[serde(default)]
        shape: SinusoidShape,
    },
    Tabulated {
        times: Vec<f64>,
        values: Vec<ComplexValue>,
        #[serde(default)]
        interpolation: InterpolationRule,
    },
    Sum {
        terms: Vec<FunctionSpec>,
    },
}

impl FunctionSpec {
    pub fn constant(z: impl Into<ComplexValue>) -> Self {
        FunctionSpec::Constant { value: z.into() }
    }
}

/// Structural candidacy for PT symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PtCandidate {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Parity {
    /// f(−t) = f(t)
    even: bool,
    /// f(−t)* = f(t), i.e. a real function of it
    pt: bool,
}

const STRUCT_TOL: f64 = 1e-14;

fn is_zero(x: f64) -> bool {
    x.abs() <= STRUCT_TOL
}

#[derive(Debug, Clone)]
enum Compiled {
    Constant(Complex64),
    Polynomial(Vec<Complex64>),
    Sinusoid { amplitude: Complex64, frequency: f64, phase: f64, offset: Complex64, shape: SinusoidShape },
    Tabulated { re: Interpolant, im: Interpolant },
    Sum(Vec<Compiled>),
}

impl Compiled {
    fn eval(&self, t: f64) -> Complex64 {
        match self {
            Compiled::Constant(v) => *v,
            Compiled::Polynomial(cs) => cs.iter().rev().fold(Complex64::default(), |acc, k| acc * t + k),
            Compiled::Sinusoid { amplitude, frequency, phase, offset, shape } => {
                let x = frequency * t + phase;
                let s = match shape {
                    SinusoidShape::Exp => Complex64::from_polar(1.0, x),
                    SinusoidShape::Cos => c(x.cos(), 0.0),
                    SinusoidShape::Sin => c(x.sin(), 0.0),
                };
                amplitude * s + offset
            }
            Compiled::Tabulated { re, im } => c(re.eval(t), im.eval(t)),
            Compiled::Sum(terms) => terms.iter().map(|f| f.eval(t)).sum(),
        }
    }

    fn derivative(&self, t: f64) -> Complex64 {
        match self {
            Compiled::Constant(_) => Complex64::default(),
            Compiled::Polynomial(cs) => cs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(Complex64::default(), |acc, (k, ck)| acc * t + ck * k as f64),
            Compiled::Sinusoid { amplitude, frequency, phase, shape, .. } => {
                let x = frequency * t + phase;
                let s = match shape {
                    SinusoidShape::Exp => Complex64::from_polar(1.0, x) * linalg::I,
                    SinusoidShape::Cos => c(-x.sin(), 0.0),
                    SinusoidShape::Sin => c(x.cos(), 0.0),
                };
                amplitude * s * *frequency
            }
            Compiled::Tabulated { re, im } => c(re.derivative(t), im.derivative(t)),
            Compiled::Sum(terms) => terms.iter().map(|f| f.derivative(t)).sum(),
        }
    }

    fn parity(&self) -> Option<Parity> {
        match self {
            Compiled::Constant(v) => Some(Parity { even: true, pt: is_zero(v.im) }),
            Compiled::Polynomial(cs) => {
                let even = cs.iter().enumerate().all(|(k, v)| k % 2 == 0 || v.norm() <= STRUCT_TOL);
                let pt = cs.iter().enumerate().all(|(k, v)| if k % 2 == 0 { is_zero(v.im) } else { is_zero(v.re) });
                Some(Parity { even, pt })
            }
            Compiled::Sinusoid { amplitude, frequency, phase, offset, shape } => {
                let a = *amplitude;
                let (sd, cd) = phase.sin_cos();
                let trivial = a.norm() <= STRUCT_TOL || is_zero(*frequency);
                let (even, pt) = match shape {
                    SinusoidShape::Exp => (trivial, is_zero((a * Complex64::from_polar(1.0, *phase)).im)),
                    SinusoidShape::Cos => {
                        (trivial || is_zero(sd), (is_zero(cd) || is_zero(a.im)) && (is_zero(sd) || is_zero(a.re)))
                    }
                    SinusoidShape::Sin => {
                        (trivial || is_zero(cd), (is_zero(sd) || is_zero(a.im)) && (is_zero(cd) || is_zero(a.re)))
                    }
                };
                let pt = if trivial && is_zero((a * Complex64::from_polar(1.0, *phase)).im) { true } else { pt };
                Some(Parity { even, pt: pt && is_zero(offset.im) })
            }
            Compiled::Tabulated { .. } => None,
            Compiled::Sum(terms) => {
                let mut p = Parity { even: true, pt: true };
                for f in terms {
                    let q = f.parity()?;
                    p.even &= q.even;
                    p.pt &= q.pt;
                }
                Some(p)
            }
        }
    }
}

fn compile(spec: &FunctionSpec, path: &str, t0: f64, t1: f64) -> Result<Compiled> {
    let bad = |p: String, m: &str| Error::Scenario { path: p, message: m.to_string() };
    Ok(match spec {
        FunctionSpec::Constant { value } => Compiled::Constant(value.0),
        FunctionSpec::Polynomial { coefficients } => Compiled::Polynomial(coefficients.iter().map(|v| v.0).collect()),
        FunctionSpec::Sinusoid { amplitude, frequency, phase, offset, shape } => {
            if !frequency.is_finite() || !phase.is_finite() {
                return Err(bad(format!("{path}.frequency"), "frequency and phase must be finite"));
            }
            Compiled::Sinusoid { amplitude: amplitude.0, frequency: *frequency, phase: *phase, offset: offset.0, shape: *shape }
        }
        FunctionSpec::Tabulated { times, values, interpolation } => {
            if times.len() < 2 {
                return Err(bad(format!("{path}.times"), "need at least two samples"));
            }
            if times.len() != values.len() {
                return Err(bad(format!("{path}.values"), "length differs from `times`"));
            }
            if let Some(i) = times.iter().position(|x| !x.is_finite()) {
                return Err(bad(format!("{path}.times[{i}]"), "sample time is not finite"));
            }
            if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
                return Err(bad(format!("{path}.times[{}]", i + 1), "sample times must be strictly increasing"));
            }
            if times[0] > t0 || times[times.len() - 1] < t1 {
                return Err(bad(format!("{path}.times"), "samples do not cover [t0, t1]"));
            }
            let re: Vec<f64> = values.iter().map(|v| v.0.re).collect();
            let im: Vec<f64> = values.iter().map(|v| v.0.im).collect();
            match interpolation {
                InterpolationRule::Cubic => Compiled::Tabulated {
                    re: Interpolant::natural_cubic(times.clone(), re),
                    im: Interpolant::natural_cubic(times.clone(), im),
                },
                InterpolationRule::Linear => Compiled::Tabulated {
                    re: Interpolant::linear(times.clone(), re),
                    im: Interpolant::linear(times.clone(), im),
                },
            }
        }
        FunctionSpec::Sum { terms } => Compiled::Sum(
            terms
                .iter()
                .enumerate()
                .map(|(i, f)| compile(f, &format!("{path}.terms[{i}]"), t0, t1))
                .collect::<Result<_>>()?,
        ),
    })
}

/// A single compiled coefficient function.
#[derive(Debug, Clone)]
pub struct ScalarFunction(Compiled);

impl ScalarFunction {
    pub fn new(spec: &FunctionSpec, t0: f64, t1: f64) -> Result<Self> {
        compile(spec, "f", t0, t1).map(Self)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.0.eval(t)
    }

    pub fn derivative(&self, t: f64) -> Complex64 {
        self.0.derivative(t)
    }
}

/// Serializable description of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub omega: FunctionSpec,
    pub alpha: FunctionSpec,
    pub beta: FunctionSpec,
    pub t0: f64,
    pub t1: f64,
}

/// ω, α, β at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Coefficients {
    pub omega: Complex64,
    pub alpha: Complex64,
    pub beta: Complex64,
}

/// Moduli and polar angles of ω, α, β.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PolarCoefficients {
    pub omega_abs: f64,
    pub alpha_abs: f64,
    pub beta_abs: f64,
    pub varphi_omega: f64,
    pub varphi_alpha: f64,
    pub varphi_beta: f64,
}

impl Coefficients {
    pub fn new(omega: Complex64, alpha: Complex64, beta: Complex64) -> Self {
        Self { omega, alpha, beta }
    }

    pub fn real(omega: f64, alpha: f64, beta: f64) -> Self {
        Self::new(c(omega, 0.0), c(alpha, 0.0), c(beta, 0.0))
    }

    pub fn polar(&self) -> PolarCoefficients {
        PolarCoefficients {
            omega_abs: self.omega.norm(),
            alpha_abs: self.alpha.norm(),
            beta_abs: self.beta.norm(),
            varphi_omega: linalg::arg(self.omega),
            varphi_alpha: linalg::arg(self.alpha),
            varphi_beta: linalg::arg(self.beta),
        }
    }

    /// Im ω = 0 and α = β* to a relative tolerance.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = 1.0 + self.omega.norm() + self.alpha.norm() + self.beta.norm();
        self.omega.im.abs() <= tol * scale && (self.alpha - self.beta.conj()).norm() <= tol * scale
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let scale = 1.0 + self.omega.norm() + self.alpha.norm() + self.beta.norm();
        [self.omega, self.alpha, self.beta].iter().all(|z| z.im.abs() <= tol * scale)
    }
}

impl PolarCoefficients {
    pub fn to_cartesian(&self) -> Coefficients {
        Coefficients {
            omega: Complex64::from_polar(self.omega_abs, self.varphi_omega),
            alpha: Complex64::from_polar(self.alpha_abs, self.varphi_alpha),
            beta: Complex64::from_polar(self.beta_abs, self.varphi_beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HermiticityFlags {
    pub is_hermitian: bool,
    pub pt_candidate: PtCandidate,
}

/// Validated scenario with interpolants built.
#[derive(Debug, Clone)]
pub struct CoefficientScenario {
    spec: ScenarioSpec,
    omega: Compiled,
    alpha: Compiled,
    beta: Compiled,
}

impl CoefficientScenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        let (t0, t1) = (spec.t0, spec.t1);
        if !t0.is_finite() || !t1.is_finite() {
            return Err(Error::Scenario { path: "t0".into(), message: "domain bounds must be finite".into() });
        }
        if t1 <= t0 {
            return Err(Error::Scenario { path: "t1".into(), message: "need t1 > t0".into() });
        }
        Ok(Self {
            omega: compile(&spec.omega, "omega", t0, t1)?,
            alpha: compile(&spec.alpha, "alpha", t0, t1)?,
            beta: compile(&spec.beta, "beta", t0, t1)?,
            spec,
        })
    }

    /// Constant coefficients on [t0, t1].
    pub fn constant(omega: Complex64, alpha: Complex64, beta: Complex64, t0: f64, t1: f64) -> Result<Self> {
        Self::new(ScenarioSpec {
            omega: FunctionSpec::constant(omega),
            alpha: FunctionSpec::constant(alpha),
            beta: FunctionSpec::constant(beta),
            t0,
            t1,
        })
    }

    /// Parses scenario JSON; errors name the offending path.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Scenario {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        Self::new(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json_str(&text)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.spec.t0, self.spec.t1)
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (t0, t1) = self.domain();
        let slack = 1e-9 * (t1 - t0).max(1.0);
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(Error::OutOfDomain { t, t0, t1 });
        }
        Ok(())
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        self.check_time(t)?;
        Ok(Coefficients { omega: self.omega.eval(t), alpha: self.alpha.eval(t), beta: self.beta.eval(t) })
    }

    /// Cartesian and polar coefficients at t.
    pub fn eval_coefficients(&self, t: f64) -> Result<(Coefficients, PolarCoefficients)> {
        let k = self.coefficients(t)?;
        Ok((k, k.polar()))
    }

    /// (ω̇, α̇, β̇) at t.
    pub fn derivatives(&self, t: f64) -> Result<Coefficients> {
        self.check_time(t)?;
        Ok(Coefficients {
            omega: self.omega.derivative(t),
            alpha: self.alpha.derivative(t),
            beta: self.beta.derivative(t),
        })
    }

    pub fn hamiltonian_matrix(&self, t: f64, dim: usize) -> Result<TruncatedOperator> {
        hamiltonian_matrix(&self.coefficients(t)?, dim)
    }

    pub fn hermiticity_flags(&self, t: f64) -> Result<HermiticityFlags> {
        let k = self.coefficients(t)?;
        Ok(HermiticityFlags { is_hermitian: k.is_hermitian(1e-14), pt_candidate: self.pt_candidate() })
    }

    /// Structural parity of the coefficient specs.
    pub fn pt_candidate(&self) -> PtCandidate {
        let mut unknown = false;
        for f in [&self.omega, &self.alpha, &self.beta] {
            match f.parity() {
                None => unknown = true,
                Some(p) if !(p.even || p.pt) => return PtCandidate::No,
                Some(_) => {}
            }
        }
        if unknown {
            PtCandidate::Unknown
        } else {
            PtCandidate::Yes
        }
    }

    /// Whether every coefficient spec is constant.
    pub fn is_time_independent(&self) -> bool {
        [&self.omega, &self.alpha, &self.beta].iter().all(|f| matches!(f, Compiled::Constant(_)))
    }
}

/// Dense ω(a†a + ½) + αa² + βa†².
pub fn hamiltonian_matrix(k: &Coefficients, dim: usize) -> Result<TruncatedOperator> {
    linalg::check_dim(dim, 2)?;
    let mut h = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        h[(n, n)] = k.omega * (n as f64 + 0.5);
        if n + 2 < dim {
            let s = (((n + 1) * (n + 2)) as f64).sqrt();
            h[(n, n + 2)] = k.alpha * s;
            h[(n + 2, n)] = k.beta * s;
        }
    }
    Ok(h)
}

/// out = H ψ using the pentadiagonal structure.
pub fn apply_hamiltonian(k: &Coefficients, psi: &[Complex64], out: &mut [Complex64]) {
    let dim = psi.len();
    for n in 0..dim {
        let mut acc = k.omega * (n as f64 + 0.5) * psi[n];
        if n + 2 < dim {
            acc += k.alpha * (((n + 1) * (n + 2)) as f64).sqrt() * psi[n + 2];
        }
        if n >= 2 {
            acc += k.beta * (((n - 1) * n) as f64).sqrt() * psi[n - 2];
        }
        out[n] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn constant(w: f64, a: f64, b: f64) -> CoefficientScenario {
        CoefficientScenario::constant(c(w, 0.0), c(a, 0.0), c(b, 0.0), 0.0, 10.0).unwrap()
    }

    #[test]
    fn constant_coefficients_and_zero_angles() {
        let s = constant(1.0, 0.0, 0.0);
        let (k, p) = s.eval_coefficients(3.0).unwrap();
        assert_eq!(k, Coefficients::real(1.0, 0.0, 0.0));
        assert_eq!((p.varphi_omega, p.varphi_alpha, p.varphi_beta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sinusoid_polar_decomposition() {
        let json = r#"{"omega": {"kind": "sinusoid", "amplitude": 2, "frequency": 1},
                       "alpha": {"kind": "constant", "value": 0}, "beta": {"kind": "constant", "value": 0},
                       "t0": 0, "t1": 4}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        let (k, p) = s.eval_coefficients(PI / 2.0).unwrap();
        assert!((k.omega - c(0.0, 2.0)).norm() < 1e-15);
        assert!((p.varphi_omega - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear_table_interpolates() {
        let json = r#"{"omega": {"kind": "constant", "value": 1},
                       "alpha": {"kind": "tabulated", "times": [0, 1], "values": [0, 1], "interpolation": "linear"},
                       "beta": {"kind": "constant", "value": [0.1, -0.2]}, "t0": 0, "t1": 1}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        assert_eq!(s.coefficients(0.25).unwrap().alpha, c(0.25, 0.0));
        assert_eq!(s.coefficients(0.25).unwrap().beta, c(0.1, -0.2));
        assert_eq!(s.pt_candidate(), PtCandidate::Unknown);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let s = constant(1.0, 0.0, 0.0);
        assert!(matches!(s.coefficients(10.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn parse_errors_cite_paths() {
        let json = r#"{"omega": {"kind": "constant", "value": 1},
                       "alpha": {"kind": "polynomial", "coefficients": [1, "x"]},
                       "beta": {"kind": "constant", "value": 0}, "t0": 0, "t1": 1}"#;
        match CoefficientScenario::from_json_str(json) {
            Err(Error::Scenario { path, .. }) => assert!(path.starts_with("alpha"), "{path}"),
            other => panic!("{other:?}"),
        }
        let json = r#"{"omega": {"kind": "constant", "value": 1},
                       "alpha": {"kind": "tabulated", "times": [0, 0.5, 0.4, 1], "values": [0, 1, 2, 3]},
                       "beta": {"kind": "constant", "value": 0}, "t0": 0, "t1": 1}"#;
        match CoefficientScenario::from_json_str(json) {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "alpha.times[2]"),
            other => panic!("{other:?}"),
        }
        let json = r#"{"omega": {"kind": "constant", "value": 1},
                       "alpha": {"kind": "tabulated", "times": [0, 0.5], "values": [0, 1]},
                       "beta": {"kind": "constant", "value": 0}, "t0": 0, "t1": 1}"#;
        assert!(matches!(CoefficientScenario::from_json_str(json), Err(Error::Scenario { .. })));
    }

    #[test]
    fn harmonic_oscillator_matrix() {
        let h = hamiltonian_matrix(&Coefficients::real(1.0, 0.0, 0.0), 3).unwrap();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.5, 0.0), c(1.5, 0.0), c(2.5, 0.0)]));
        assert_eq!(h, expect);
    }

    #[test]
    fn hermitian_entries() {
        let h = hamiltonian_matrix(&Coefficients::real(1.0, 0.2, 0.2), 3).unwrap();
        assert!((h[(0, 2)] - c(0.2 * 2f64.sqrt(), 0.0)).norm() < 1e-15);
        assert_eq!(h[(0, 2)], h[(2, 0)]);
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn non_hermitian_flag() {
        let k = Coefficients::new(c(0.0, 1.0), c(0.1, 0.0), c(0.3, 0.0));
        let h = hamiltonian_matrix(&k, 10).unwrap();
        assert!((&h - h.adjoint()).norm() > 0.0);
        assert!(!k.is_hermitian(1e-14));
    }

    #[test]
    fn banded_apply_matches_dense() {
        let k = Coefficients::new(c(1.0, 0.2), c(0.1, -0.3), c(0.3, 0.05));
        let dim = 12;
        let psi: Vec<Complex64> = (0..dim).map(|i| c(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let mut out = vec![Complex64::default(); dim];
        apply_hamiltonian(&k, &psi, &mut out);
        let dense = hamiltonian_matrix(&k, dim).unwrap() * nalgebra::DVector::from_vec(psi);
        for i in 0..dim {
            assert!((dense[i] - out[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn hermiticity_and_pt_flags() {
        let f = constant(1.0, 0.2, 0.2).hermiticity_flags(0.0).unwrap();
        assert_eq!((f.is_hermitian, f.pt_candidate), (true, PtCandidate::Yes));
        let f = constant(1.0, 0.1, 0.3).hermiticity_flags(0.0).unwrap();
        assert_eq!((f.is_hermitian, f.pt_candidate), (false, PtCandidate::Yes));
        let json = r#"{"omega": {"kind": "polynomial", "coefficients": [1, 1]},
                       "alpha": {"kind": "constant", "value": 0.1}, "beta": {"kind": "constant", "value": 0.3},
                       "t0": -1, "t1": 1}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        assert_eq!(s.pt_candidate(), PtCandidate::No);
        let json = r#"{"omega": {"kind": "polynomial", "coefficients": [1, [0, 1]]},
                       "alpha": {"kind": "sinusoid", "amplitude": 0.2, "frequency": 1, "shape": "cos"},
                       "beta": {"kind": "constant", "value": 0.3}, "t0": -1, "t1": 1}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        assert_eq!(s.pt_candidate(), PtCandidate::Yes);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let json = r#"{"omega": {"kind": "sum", "terms": [
                            {"kind": "constant", "value": 1},
                            {"kind": "sinusoid", "amplitude": [0, 0.1], "frequency": 1, "shape": "cos"},
                            {"kind": "sinusoid", "amplitude": 0.2, "frequency": 0.5, "shape": "sin"}]},
                       "alpha": {"kind": "polynomial", "coefficients": [[0.2, 0.1], 0.05, [0, 0.01]]},
                       "beta": {"kind": "sinusoid", "amplitude": [0.1, 0.02], "frequency": 1.3, "phase": 0.4, "offset": 0.1},
                       "t0": 0, "t1": 3}"#;
        let s = CoefficientScenario::from_json_str(json).unwrap();
        let h = 1e-6;
        for &t in &[0.3, 1.1, 2.7] {
            let d = s.derivatives(t).unwrap();
            let (p, m) = (s.coefficients(t + h).unwrap(), s.coefficients(t - h).unwrap());
            assert!(((p.omega - m.omega) / (2.0 * h) - d.omega).norm() < 1e-8);
            assert!(((p.alpha - m.alpha) / (2.0 * h) - d.alpha).norm() < 1e-8);
            assert!(((p.beta - m.beta) / (2.0 * h) - d.beta).norm() < 1e-8);
        }
    }

    #[test]
    fn scenario_spec_round_trips_through_json() {
        let s = constant(1.0, 0.1, 0.3);
        let text = serde_json::to_string(s.spec()).unwrap();
        let back = CoefficientScenario::from_json_str(&text).unwrap();
        assert_eq!(back.spec(), s.spec());
    }
}
