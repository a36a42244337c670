//! Two-level operator algebra on 2x2 complex matrices.

use nalgebra::Matrix2;
use num_complex::Complex64;

pub type Op = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn identity() -> Op {
    Op::new(ONE, ZERO, ZERO, ONE)
}

pub fn sigma_x() -> Op {
    Op::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Op {
    Op::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Op {
    Op::new(ONE, ZERO, ZERO, -ONE)
}

/// x X + y Y + z Z.
pub fn pauli_combination(x: f64, y: f64, z: f64) -> Op {
    sigma_x() * Complex64::from(x) + sigma_y() * Complex64::from(y) + sigma_z() * Complex64::from(z)
}

pub fn real_op(a00: f64, a01: f64, a10: f64, a11: f64) -> Op {
    Op::new(a00.into(), a01.into(), a10.into(), a11.into())
}

pub fn commutator(a: &Op, b: &Op) -> Op {
    a * b - b * a
}

/// Packs a Hermitian density matrix as [rho00, rho11, Re rho01, Im rho01].
pub fn pack(rho: &Op) -> [f64; 4] {
    [rho[(0, 0)].re, rho[(1, 1)].re, rho[(0, 1)].re, rho[(0, 1)].im]
}

pub fn unpack(y: &[f64; 4]) -> Op {
    let c = Complex64::new(y[2], y[3]);
    Op::new(y[0].into(), c, c.conj(), y[1].into())
}

/// Packs a general 2x2 complex matrix as eight reals, row-major.
pub fn pack_full(u: &Op) -> [f64; 8] {
    [
        u[(0, 0)].re,
        u[(0, 0)].im,
        u[(0, 1)].re,
        u[(0, 1)].im,
        u[(1, 0)].re,
        u[(1, 0)].im,
        u[(1, 1)].re,
        u[(1, 1)].im,
    ]
}

pub fn unpack_full(y: &[f64; 8]) -> Op {
    Op::new(
        Complex64::new(y[0], y[1]),
        Complex64::new(y[2], y[3]),
        Complex64::new(y[4], y[5]),
        Complex64::new(y[6], y[7]),
    )
}

/// Eigen-decomposition of a Hermitian 2x2 operator.
/// Returns (lower, upper) eigenvalues and the unitary whose columns are the matching eigenvectors.
pub fn hermitian_eigen(h: &Op) -> (f64, f64, Op) {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    let mean = 0.5 * (a + d);
    let hz = 0.5 * (a - d);
    let r = (hz * hz + b.norm_sqr()).sqrt();
    if r == 0.0 {
        return (mean, mean, identity());
    }
    // Ground vector along -n for H = mean + r n.sigma, written to avoid cancellation.
    let (g0, g1) = if hz <= 0.0 {
        (Complex64::from(r - hz), -b.conj())
    } else {
        (-b, Complex64::from(r + hz))
    };
    let norm = (g0.norm_sqr() + g1.norm_sqr()).sqrt();
    let (g0, g1) = (g0 / norm, g1 / norm);
    // Orthogonal partner.
    let (e0, e1) = (-g1.conj(), g0.conj());
    (mean - r, mean + r, Op::new(g0, e0, g1, e1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pauli_algebra() {
        let c = commutator(&sigma_x(), &sigma_y());
        assert_relative_eq!((c - sigma_z() * Complex64::new(0.0, 2.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eigen_decomposes_generic_hermitian() {
        let h = pauli_combination(0.3, -1.2, 0.7) + identity() * Complex64::from(0.25);
        let (lo, hi, v) = hermitian_eigen(&h);
        let r = (0.09f64 + 1.44 + 0.49).sqrt();
        assert_relative_eq!(lo, 0.25 - r, epsilon = 1e-14);
        assert_relative_eq!(hi, 0.25 + r, epsilon = 1e-14);
        let d = v.adjoint() * h * v;
        assert!(d[(0, 1)].norm() < 1e-14);
        assert_relative_eq!(d[(0, 0)].re, lo, epsilon = 1e-14);
        assert!((v.adjoint() * v - identity()).norm() < 1e-14);
    }

    #[test]
    fn eigen_of_diagonal_operators() {
        for h in [sigma_z(), -sigma_z()] {
            let (lo, _, v) = hermitian_eigen(&h);
            let d = v.adjoint() * h * v;
            assert_relative_eq!(d[(0, 0)].re, lo, epsilon = 1e-15);
            assert!(d[(0, 1)].norm() < 1e-15);
        }
    }

    #[test]
    fn pack_round_trip() {
        let rho = unpack(&[0.7, 0.3, 0.1, -0.2]);
        assert_eq!(pack(&rho), [0.7, 0.3, 0.1, -0.2]);
        let u = pauli_combination(0.1, 0.2, 0.3);
        assert_eq!(unpack_full(&pack_full(&u)), u);
    }
}
