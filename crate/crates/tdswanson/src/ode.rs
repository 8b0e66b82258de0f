//! Dormand–Prince 5(4) integrator with continuous output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-10, atol: 1e-10, h_min: 1e-14, max_steps: 2_000_000 }
    }
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Tolerances { rtol: tol, atol: tol, ..Default::default() }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone)]
struct Segment {
    t: f64,
    h: f64,
    rcont: Vec<f64>,
}

/// Continuous solution over the accepted steps.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    n: usize,
    t_start: f64,
    y_start: Vec<f64>,
    segments: Vec<Segment>,
    /// Reason and time when integration stopped before the requested end.
    pub stopped: Option<(f64, String)>,
    pub accepted: usize,
    pub rejected: usize,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.t_start, |s| s.t + s.h)
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t_end() >= self.t_start {
            (self.t_start, self.t_end())
        } else {
            (self.t_end(), self.t_start)
        };
        let span = (hi - lo).max(1.0);
        t >= lo - 1e-13 * span && t <= hi + 1e-13 * span
    }

    /// Interpolated state at `t`; `None` outside the integrated range.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        if !self.contains(t) {
            return None;
        }
        if self.segments.is_empty() {
            return Some(self.y_start.clone());
        }
        let forward = self.segments[0].h > 0.0;
        let idx = self
            .segments
            .partition_point(|s| if forward { s.t + s.h < t } else { s.t + s.h > t })
            .min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        let theta = ((t - seg.t) / seg.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let n = self.n;
        let r = &seg.rcont;
        Some(
            (0..n)
                .map(|i| {
                    r[i] + theta
                        * (r[n + i]
                            + theta1 * (r[2 * n + i] + theta * (r[3 * n + i] + theta1 * r[4 * n + i])))
                })
                .collect(),
        )
    }

    pub fn final_state(&self) -> Vec<f64> {
        self.eval(self.t_end()).expect("end is inside range")
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }
}

/// Takes one Dormand–Prince step from (t, y) with k[0] = f(t, y) already set.
/// Writes y1 and the error estimate, leaving f(t+h, y1) in k[6].
fn dp_step<F>(f: &mut F, t: f64, y: &[f64], h: f64, st: &mut Stages, y1: &mut [f64], err: &mut [f64]) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    macro_rules! stage {
        ($out:expr, $c:expr, [$($a:expr => $j:expr),*]) => {{
            for i in 0..n {
                st.tmp[i] = y[i] + h * (0.0 $(+ $a * st.k[$j][i])*);
            }
            let (tmp, k) = (&st.tmp, &mut st.k);
            f(t + $c * h, tmp, &mut k[$out])?;
        }};
    }
    stage!(1, C2, [A21 => 0]);
    stage!(2, C3, [A31 => 0, A32 => 1]);
    stage!(3, C4, [A41 => 0, A42 => 1, A43 => 2]);
    stage!(4, C5, [A51 => 0, A52 => 1, A53 => 2, A54 => 3]);
    stage!(5, 1.0, [A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4]);
    for i in 0..n {
        y1[i] = y[i]
            + h * (A71 * st.k[0][i] + A73 * st.k[2][i] + A74 * st.k[3][i] + A75 * st.k[4][i] + A76 * st.k[5][i]);
    }
    let (y1r, k) = (&*y1, &mut st.k);
    f(t + h, y1r, &mut k[6])?;
    for (i, e) in err.iter_mut().enumerate().take(n) {
        *e = h
            * (E1 * st.k[0][i] + E3 * st.k[2][i] + E4 * st.k[3][i] + E5 * st.k[4][i] + E6 * st.k[5][i]
                + E7 * st.k[6][i]);
    }
    Ok(())
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, tol: &Tolerances) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| tol.atol + tol.rtol * y.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(y, s)| (y / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(y, s)| (y / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + dir * h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + dir * h0, &y1, &mut f1)?;
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1))
}

/// Integrates y' = f(t, y) from t0 to t1 adaptively.
///
/// `check` runs after every accepted step; returning `Some(reason)` stops the
/// integration and keeps the steps accepted so far. A right-hand-side error
/// after the first accepted step is treated the same way.
pub fn integrate<F, S>(mut f: F, t0: f64, y0: &[f64], t1: f64, tol: &Tolerances, mut check: S) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    S: FnMut(f64, &[f64]) -> Option<String>,
{
    let n = y0.len();
    let mut sol = DenseSolution {
        n,
        t_start: t0,
        y_start: y0.to_vec(),
        segments: Vec::new(),
        stopped: None,
        accepted: 0,
        rejected: 0,
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let mut st = Stages::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    f(t, &y, &mut st.k[0])?;
    let mut h = initial_step(&mut f, t0, &y, &st.k[0].clone(), dir, tol)?.min((t1 - t0).abs());
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut err_old: f64 = 1e-4;
    let mut last_reject = false;
    let mut steps = 0usize;

    loop {
        if (t1 - t) * dir <= 1e-15 * t1.abs().max(1.0) {
            break;
        }
        steps += 1;
        if steps > tol.max_steps {
            return Err(Error::StepFailure { t, h });
        }
        if h < tol.h_min {
            return Err(Error::StepFailure { t, h });
        }
        let last = (t + dir * h - t1) * dir >= 0.0;
        let hs = if last { t1 - t } else { dir * h };
        match dp_step(&mut f, t, &y, hs, &mut st, &mut y1, &mut err) {
            Ok(()) => {}
            Err(e) => {
                if h > 4.0 * tol.h_min {
                    h *= 0.25;
                    last_reject = true;
                    sol.rejected += 1;
                    continue;
                }
                if sol.accepted > 0 {
                    sol.stopped = Some((t, e.to_string()));
                    return Ok(sol);
                }
                return Err(e);
            }
        }
        let e = error_norm(&err, &y, &y1, tol);
        if !e.is_finite() {
            h *= 0.2;
            last_reject = true;
            sol.rejected += 1;
            continue;
        }
        if e <= 1.0 {
            let mut rcont = vec![0.0; 5 * n];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = hs * st.k[0][i] - ydiff;
                rcont[i] = y[i];
                rcont[n + i] = ydiff;
                rcont[2 * n + i] = bspl;
                rcont[3 * n + i] = ydiff - hs * st.k[6][i] - bspl;
                rcont[4 * n + i] = hs
                    * (D1 * st.k[0][i] + D3 * st.k[2][i] + D4 * st.k[3][i] + D5 * st.k[4][i] + D6 * st.k[5][i]
                        + D7 * st.k[6][i]);
            }
            sol.segments.push(Segment { t, h: hs, rcont });
            sol.accepted += 1;
            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut y1);
            let k6 = std::mem::take(&mut st.k[6]);
            st.k[6] = std::mem::replace(&mut st.k[0], k6);
            if let Some(reason) = check(t, &y) {
                sol.stopped = Some((t, reason));
                return Ok(sol);
            }
            let mut fac = 0.9 * e.max(1e-10).powf(-0.17) * err_old.powf(0.04);
            fac = fac.clamp(0.2, if last_reject { 1.0 } else { 10.0 });
            err_old = e.max(1e-4);
            h = hs.abs() * fac;
            last_reject = false;
        } else {
            let fac = (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
            h = hs.abs() * fac;
            last_reject = true;
            sol.rejected += 1;
        }
    }
    Ok(sol)
}

/// Fixed-step Dormand–Prince (fifth-order solution) used for convergence studies.
pub fn integrate_fixed<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, steps: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let h = (t1 - t0) / steps as f64;
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut st.k[0])?;
        dp_step(&mut f, t, &y, h, &mut st, &mut y1, &mut err)?;
        std::mem::swap(&mut y, &mut y1);
    }
    Ok(y)
}
