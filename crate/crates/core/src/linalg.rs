//! Small dense linear-algebra helpers on `d x d` blocks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Symplectic structure matrix `J = [[0, I], [-I, 0]]` of size `2d`.
pub fn symplectic_j(d: usize) -> RMat {
    let mut j = RMat::zeros(2 * d, 2 * d);
    for k in 0..d {
        j[(k, d + k)] = 1.0;
        j[(d + k, k)] = -1.0;
    }
    j
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn det(m: &CMat) -> Complex64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone().lu().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    let smallest = smallest_singular_value(m);
    if !(smallest > 1e-14 * (1.0 + m.norm())) {
        return Err(Error::Singular { smallest });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { smallest })
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm of a real square matrix.
///
/// Uses the closed form for `2 x 2` matrices and power iteration on `MᵀM`
/// (relative tolerance `1e-10`, at most `10⁴` iterations) otherwise.
pub fn spectral_norm(m: &RMat) -> f64 {
    if m.nrows() == 2 && m.ncols() == 2 {
        let fro2 = m.norm_squared();
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
        return ((fro2 + disc.sqrt()) / 2.0).sqrt();
    }
    let gram = m.transpose() * m;
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start vector with no special alignment
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-10 * next.abs().max(f64::MIN_POSITIVE) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Square root of a complex path, continued from step to step.
///
/// The radicand's argument is unwound so that successive square roots stay
/// closest to each other. A step that rotates the radicand by `π/2` or more
/// is rejected and must be refined by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtBranch {
    phase: f64,
}

impl SqrtBranch {
    /// Starts on the principal branch of `z`.
    pub fn principal(z: Complex64) -> Self {
        SqrtBranch { phase: z.arg() }
    }

    /// Starts from an explicit unwound argument of the radicand.
    pub fn with_phase(phase: f64) -> Self {
        SqrtBranch { phase }
    }

    /// Unwound argument of the current radicand.
    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Rotation of the radicand when moving to `z`.
    pub fn rotation_to(&self, z: Complex64) -> f64 {
        wrap_angle(z.arg() - self.phase)
    }

    /// Moves the branch to `z`; returns the rotation as an error when it is
    /// at least `π/2`.
    pub fn advance(&mut self, z: Complex64) -> std::result::Result<(), f64> {
        let rot = self.rotation_to(z);
        if rot.abs() >= FRAC_PI_2 {
            return Err(rot);
        }
        self.phase += rot;
        Ok(())
    }

    /// Square root of `z` on the current branch (call after `advance(z)`).
    pub fn sqrt(&self, z: Complex64) -> Complex64 {
        Complex64::from_polar(z.norm().sqrt(), self.phase / 2.0)
    }
}

/// Real symmetric positive-definiteness test with an absolute/relative floor.
pub fn is_positive_definite(m: &RMat, tol: f64) -> bool {
    if m.nrows() == 1 {
        return m[(0, 0)] > tol;
    }
    let eig = m.clone().symmetric_eigen();
    let scale = m.norm().max(1.0);
    eig.eigenvalues.iter().all(|&l| l > tol * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_closed_form_matches_power_iteration() {
        let m = RMat::from_row_slice(2, 2, &[0.3, 1.2, -0.7, 0.4]);
        let closed = spectral_norm(&m);
        let mut padded = RMat::zeros(3, 3);
        padded.view_mut((0, 0), (2, 2)).copy_from(&m);
        let iterated = spectral_norm(&padded);
        assert!((closed - iterated).abs() < 1e-8, "{closed} vs {iterated}");
        let svd = m.clone().singular_values().max();
        assert!((closed - svd).abs() < 1e-12);
    }

    #[test]
    fn branch_follows_full_rotation() {
        let mut b = SqrtBranch::principal(Complex64::new(2.0, 0.0));
        let n = 400;
        for k in 1..=n {
            let t = TAU * k as f64 / n as f64;
            let z = Complex64::from_polar(2.0, t);
            b.advance(z).unwrap();
        }
        let z = Complex64::from_polar(2.0, TAU);
        let s = b.sqrt(z);
        assert!((s - Complex64::new(-2f64.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn branch_rejects_large_rotation() {
        let mut b = SqrtBranch::principal(Complex64::new(1.0, 0.0));
        assert!(b.advance(Complex64::new(0.0, 1.0)).is_err());
        assert!(b.advance(Complex64::new(1.0, 0.9)).is_ok());
    }

    #[test]
    fn j_is_antisymmetric_square_root_of_minus_identity() {
        let j = symplectic_j(2);
        assert_eq!(&j * &j, -RMat::identity(4, 4));
        assert_eq!(j.transpose(), -j);
    }
}
