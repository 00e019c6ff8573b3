//! Unit quaternions `Q = [q0, q]` (scalar first, Hamilton product) and the
//! map to rotation matrices.
//!
//! `Q` and `-Q` describe the same rotation; [`rot_to_quat`] returns the
//! representative with `q0 >= 0`.

use std::ops::Mul;

use crate::error::{Error, Result};
use crate::lie::{skew, Mat3, Rotation, Vec3};

/// Accepted deviation of `|Q|` from one at the API boundary.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub q0: f64,
    pub q: Vec3,
}

impl Quat {
    pub fn new(q0: f64, q: Vec3) -> Self {
        Self { q0, q }
    }

    pub fn identity() -> Self {
        Self::new(1.0, Vec3::zeros())
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], Vec3::new(a[1], a[2], a[3]))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q0, self.q.x, self.q.y, self.q.z]
    }

    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.q.norm_squared()).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.q0 / n, self.q / n)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    /// `[q0, -q]`.
    pub fn inverse(&self) -> Self {
        Self::new(self.q0, -self.q)
    }

    /// Quaternion of the rotation `exp([phi]x)`.
    pub fn exp(phi: &Vec3) -> Self {
        let theta = phi.norm();
        let half = 0.5 * theta;
        // sin(theta/2)/theta, series below 1e-4 rad
        let k = if theta < 1e-4 {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        Self::new(half.cos(), phi * k)
    }

    pub fn to_rotation(&self) -> Result<Rotation> {
        quat_to_rot(self)
    }
}

impl Default for Quat {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, rhs: Quat) -> Quat {
        quat_product(&self, &rhs)
    }
}

/// `Q1 (.) Q2 = [q01 q02 - q1.q2, q01 q2 + q02 q1 + q1 x q2]`, renormalized.
pub fn quat_product(a: &Quat, b: &Quat) -> Quat {
    debug_assert!(a.is_unit() && b.is_unit());
    Quat::new(
        a.q0 * b.q0 - a.q.dot(&b.q),
        b.q * a.q0 + a.q * b.q0 + a.q.cross(&b.q),
    )
    .normalized()
}

/// `R_Q = (q0^2 - |q|^2) I + 2 q q^T + 2 q0 [q]x`.
pub fn quat_to_rot(q: &Quat) -> Result<Rotation> {
    if !q.is_unit() {
        return Err(Error::NonUnitQuaternion { norm: q.norm() });
    }
    let q = q.normalized();
    let m = Mat3::identity() * (q.q0 * q.q0 - q.q.norm_squared())
        + q.q * q.q.transpose() * 2.0
        + skew(&q.q) * (2.0 * q.q0);
    Ok(Rotation::from_matrix_unchecked(m))
}

/// Inverse of [`quat_to_rot`] with the `q0 >= 0` sign convention.
///
/// Shepperd's method: branch on the largest of the trace and the diagonal
/// entries so the divisor stays well away from zero near half turns.
pub fn rot_to_quat(r: &Rotation) -> Quat {
    let m = r.matrix();
    let tr = m.trace();
    let d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let q = if tr >= d[0] && tr >= d[1] && tr >= d[2] {
        let s = 2.0 * (1.0 + tr).sqrt(); // 4 q0
        Quat::new(
            0.25 * s,
            Vec3::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ),
        )
    } else if d[0] >= d[1] && d[0] >= d[2] {
        let s = 2.0 * (1.0 + d[0] - d[1] - d[2]).sqrt(); // 4 qx
        Quat::new(
            (m[(2, 1)] - m[(1, 2)]) / s,
            Vec3::new(
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ),
        )
    } else if d[1] >= d[2] {
        let s = 2.0 * (1.0 + d[1] - d[0] - d[2]).sqrt(); // 4 qy
        Quat::new(
            (m[(0, 2)] - m[(2, 0)]) / s,
            Vec3::new(
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ),
        )
    } else {
        let s = 2.0 * (1.0 + d[2] - d[0] - d[1]).sqrt(); // 4 qz
        Quat::new(
            (m[(1, 0)] - m[(0, 1)]) / s,
            Vec3::new(
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ),
        )
    };
    let q = q.normalized();
    if q.q0 < 0.0 {
        Quat::new(-q.q0, -q.q)
    } else {
        q
    }
}
