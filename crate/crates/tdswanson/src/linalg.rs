//! Dense complex matrices on a truncated Fock basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix acting on the first `dim` Fock states.
pub type TruncatedOperator = DMatrix<Complex64>;
/// State vector in the truncated Fock basis.
pub type StateVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn check_dim(dim: usize, min: usize) -> Result<()> {
    if dim < min {
        return Err(Error::InvalidDimension { dim, min });
    }
    Ok(())
}

pub fn identity(dim: usize) -> TruncatedOperator {
    DMatrix::identity(dim, dim)
}

pub fn annihilation(dim: usize) -> TruncatedOperator {
    DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            c((j as f64).sqrt(), 0.0)
        } else {
            Complex64::default()
        }
    })
}

pub fn creation(dim: usize) -> TruncatedOperator {
    annihilation(dim).transpose()
}

pub fn number(dim: usize) -> TruncatedOperator {
    DMatrix::from_fn(dim, dim, |i, j| if i == j { c(i as f64, 0.0) } else { Complex64::default() })
}

/// a² on the truncated space.
pub fn annihilation_sq(dim: usize) -> TruncatedOperator {
    DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 2 {
            c(((j * (j - 1)) as f64).sqrt(), 0.0)
        } else {
            Complex64::default()
        }
    })
}

/// a†² on the truncated space.
pub fn creation_sq(dim: usize) -> TruncatedOperator {
    annihilation_sq(dim).transpose()
}

pub fn fock(dim: usize, n: usize) -> StateVector {
    let mut v = DVector::zeros(dim);
    v[n] = c(1.0, 0.0);
    v
}

/// Guard band width g = ceil(dim / 5) excluded from interior comparisons.
pub fn guard(dim: usize) -> usize {
    dim.div_ceil(5)
}

/// Size of the interior block `dim - guard(dim)`.
pub fn interior(dim: usize) -> usize {
    dim - guard(dim)
}

pub fn top_left(a: &TruncatedOperator, m: usize) -> TruncatedOperator {
    a.view((0, 0), (m, m)).into_owned()
}

pub fn head(v: &StateVector, m: usize) -> StateVector {
    v.rows(0, m).into_owned()
}

/// Frobenius norm of the interior block.
pub fn interior_norm(a: &TruncatedOperator) -> f64 {
    let m = interior(a.nrows());
    a.view((0, 0), (m, m)).norm()
}

/// Relative interior distance ‖A − B‖ / max(1, ‖B‖) on the guarded block.
pub fn interior_distance(a: &TruncatedOperator, b: &TruncatedOperator) -> f64 {
    let m = interior(a.nrows().min(b.nrows()));
    let a = a.view((0, 0), (m, m));
    let b = b.view((0, 0), (m, m));
    (a - b).norm() / b.norm().max(1.0)
}

/// Relative distance of interior blocks of two vectors.
pub fn vector_distance(a: &StateVector, b: &StateVector, m: usize) -> f64 {
    let a = a.rows(0, m);
    let b = b.rows(0, m);
    (a - b).norm() / b.norm().max(1.0)
}

pub fn commutator(a: &TruncatedOperator, b: &TruncatedOperator) -> TruncatedOperator {
    a * b - b * a
}

pub fn expm(a: &TruncatedOperator) -> TruncatedOperator {
    a.exp()
}

/// Smallest eigenvalue of the Hermitian part of the interior block.
pub fn interior_min_eigenvalue(a: &TruncatedOperator) -> f64 {
    let m = interior(a.nrows());
    let block = top_left(a, m);
    let herm = (&block + block.adjoint()) * c(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of the interior block after symmetric Jacobi scaling
/// by its diagonal; NaN when a diagonal entry is not positive.
pub fn interior_min_scaled_eigenvalue(a: &TruncatedOperator) -> f64 {
    let m = interior(a.nrows());
    let block = top_left(a, m);
    let d: Vec<f64> = (0..m).map(|i| block[(i, i)].re).collect();
    if d.iter().any(|&x| !(x > 0.0)) {
        return f64::NAN;
    }
    let scaled = TruncatedOperator::from_fn(m, m, |i, j| {
        (block[(i, j)] + block[(j, i)].conj()) * 0.5 / (d[i] * d[j]).sqrt()
    });
    scaled.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Internal working dimension used when an operator must be built in a larger
/// space and projected back.
pub fn oversampled(dim: usize) -> usize {
    (2 * dim).max(dim + 40)
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y <= -std::f64::consts::PI {
        y += two_pi;
    } else if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Polar angle with the convention arg(0) = 0.
pub fn arg(z: Complex64) -> f64 {
    if z.norm() == 0.0 {
        0.0
    } else {
        z.arg()
    }
}
