//! Rotation and extended-pose algebra.
//!
//! Attitude lives on SO(3) as [`Rotation`]; the navigation state bundling
//! attitude, position and velocity lives on SE2(3) as [`NavState`], whose
//! materialized form is the 5x5 matrix
//!
//! ```text
//! | R  P  V |
//! | 0  1  0 |
//! | 0  0  1 |
//! ```
//!
//! Velocity inputs and correction terms are [`TangentElement`]s:
//!
//! ```text
//! | [w]x  v  a |
//! |  0    0  0 |
//! |  0    k  0 |
//! ```
//!
//! The `k` entry couples the velocity column into the position column when the
//! element is exponentiated, which is how position integrates velocity.

use std::ops::Mul;

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat5 = SMatrix<f64, 5, 5>;

/// Frobenius bound on `S + S^T` accepted by [`vex`].
pub const SKEW_TOL: f64 = 1e-9;

/// Frobenius bound on `R R^T - I` (and on `|det R - 1|`) accepted for a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Below this rotation angle (rad) Rodrigues' formula switches to its series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric cross-product matrix, `skew(a) * b == a x b`.
pub fn skew(x: &Vec3) -> Mat3 {
    Mat3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Inverse of [`skew`].
pub fn vex(s: &Mat3) -> Result<Vec3> {
    let residual = (s + s.transpose()).norm();
    if !(residual <= SKEW_TOL) {
        return Err(Error::NotSkewSymmetric { residual });
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Anti-symmetric projection `(A - A^T) / 2`.
pub fn anti_symmetric_part(a: &Mat3) -> Mat3 {
    (a - a.transpose()) * 0.5
}

/// `vex` of the anti-symmetric part of `a`. Zero iff `a` is symmetric.
pub fn upsilon(a: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

/// Element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthonormality and orientation to [`ROTATION_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let orthogonality = (m * m.transpose() - Mat3::identity()).norm();
        let det = m.determinant();
        if !(orthogonality <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::NotARotation { orthogonality, det });
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix the caller has produced by rotation-preserving operations.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        rodrigues_exp(&(axis * (angle / n)), 1.0)
    }

    /// Exponential of a rotation vector.
    pub fn exp(rotation_vector: &Vec3) -> Self {
        rodrigues_exp(rotation_vector, 1.0)
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Attitude distance `Tr(I - R) / 4`, in `[0, 1]`.
    pub fn distance(&self) -> f64 {
        dist_so3(self)
    }

    /// `|R R^T - I|_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0 * self.0.transpose() - Mat3::identity()).norm()
    }

    /// Gram-Schmidt re-orthonormalization of the rows.
    pub fn renormalized(&self) -> Self {
        let r0 = self.0.row(0).transpose().normalize();
        let r1 = self.0.row(1).transpose();
        let r1 = (r1 - r0 * r0.dot(&r1)).normalize();
        let r2 = r0.cross(&r1);
        Rotation(Mat3::from_rows(&[
            r0.transpose(),
            r1.transpose(),
            r2.transpose(),
        ]))
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;

    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for &Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// `Tr(I - R) / 4`. Equals `|I - R|_F^2 / 8` on SO(3).
pub fn dist_so3(r: &Rotation) -> f64 {
    // rounding can push the trace a hair past [-1, 3]
    ((3.0 - r.trace()) * 0.25).clamp(0.0, 1.0)
}

/// `exp([omega * dt]x)` by Rodrigues' formula.
pub fn rodrigues_exp(omega: &Vec3, dt: f64) -> Rotation {
    let phi = omega * dt;
    let theta = phi.norm();
    let k = skew(&phi);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Rotation(Mat3::identity() + k + k2 * 0.5);
    }
    let half = 0.5 * theta;
    let a = theta.sin() / theta;
    let b = 2.0 * (half.sin() / theta).powi(2);
    Rotation(Mat3::identity() + k * a + k2 * b)
}

/// Coefficients `(c0, c1, c2)` with `sum_j K^j / (j + order)! = c0 I + c1 K + c2 K^2`
/// for `K = [phi]x`, `theta = |phi|` and `order` in 1..=2.
fn series_coefficients(theta: f64, order: u32) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if t2 < 0.25 {
        // sum over m of (-t2)^m / (2m + order + 1)! and / (2m + order + 2)!
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        let mut pow = 1.0;
        for m in 0..12u32 {
            c1 += pow / factorial(2 * m + order + 1);
            c2 += pow / factorial(2 * m + order + 2);
            pow *= -t2;
        }
        return (1.0 / factorial(order), c1, c2);
    }
    let (s, c) = theta.sin_cos();
    match order {
        1 => (1.0, (1.0 - c) / t2, (theta - s) / (t2 * theta)),
        2 => (
            0.5,
            (theta - s) / (t2 * theta),
            (c - 1.0 + 0.5 * t2) / (t2 * t2),
        ),
        _ => unreachable!("only first and second integrals are used"),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `sum_j [phi]x^j / (j + 1)!`, the left Jacobian of SO(3).
pub fn so3_integral_1(phi: &Vec3) -> Mat3 {
    let (c0, c1, c2) = series_coefficients(phi.norm(), 1);
    let k = skew(phi);
    Mat3::identity() * c0 + k * c1 + k * k * c2
}

/// `sum_j [phi]x^j / (j + 2)!`.
pub fn so3_integral_2(phi: &Vec3) -> Mat3 {
    let (c0, c1, c2) = series_coefficients(phi.norm(), 2);
    let k = skew(phi);
    Mat3::identity() * c0 + k * c1 + k * k * c2
}

/// Element `u([omega]x, vcol, acol, kappa)` of the tangent submanifold.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TangentElement {
    pub omega: Vec3,
    pub vcol: Vec3,
    pub acol: Vec3,
    pub kappa: f64,
}

impl TangentElement {
    pub fn new(omega: Vec3, vcol: Vec3, acol: Vec3, kappa: f64) -> Self {
        Self {
            omega,
            vcol,
            acol,
            kappa,
        }
    }

    /// IMU input element `u([omega_m]x, 0, a_m, 1)`.
    pub fn imu(omega_m: &Vec3, a_m: &Vec3) -> Self {
        Self::new(*omega_m, Vec3::zeros(), *a_m, 1.0)
    }

    /// Gravity element `u(0, 0, -g, 1)`.
    pub fn gravity(g: &Vec3) -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros(), -g, 1.0)
    }

    pub fn to_matrix(&self) -> Mat5 {
        let mut m = Mat5::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&self.omega));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.vcol);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.acol);
        m[(4, 3)] = self.kappa;
        m
    }
}

/// `exp(u * dt)` of the 5x5 materialization by scaling and squaring.
pub fn expm5(u: &TangentElement, dt: f64) -> Mat5 {
    expm(&(u.to_matrix() * dt))
}

/// Matrix exponential of a 5x5 matrix: scale until `|A|_1 <= 1/2`, sum 13
/// Taylor terms, square back.
pub fn expm(a: &Mat5) -> Mat5 {
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = a * 0.5f64.powi(squarings);
    let eye = Mat5::identity();
    let mut e = eye;
    for k in (1..=13).rev() {
        e = eye + (b * e) / f64::from(k);
    }
    for _ in 0..squarings {
        e = e * e;
    }
    e
}

fn one_norm(a: &Mat5) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Closed-form `exp(u * dt)` assembled from Rodrigues and the SO(3)
/// integrals. Agrees with [`expm5`] to rounding.
pub fn expm5_closed_form(u: &TangentElement, dt: f64) -> Mat5 {
    let phi = u.omega * dt;
    let j1 = so3_integral_1(&phi);
    let j2 = so3_integral_2(&phi);
    let kappa = u.kappa * dt;
    let b = u.vcol * dt;
    let c = u.acol * dt;
    let mut m = Mat5::identity();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(rodrigues_exp(&u.omega, dt).matrix());
    m.fixed_view_mut::<3, 1>(0, 3)
        .copy_from(&(j1 * b + j2 * c * kappa));
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&(j1 * c));
    m[(4, 3)] = kappa;
    m
}

/// Element of SE2(3): attitude, position and velocity.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NavState {
    pub r: Rotation,
    pub p: Vec3,
    pub v: Vec3,
}

impl NavState {
    pub fn new(r: Rotation, p: Vec3, v: Vec3) -> Self {
        Self { r, p, v }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_matrix(&self) -> Mat5 {
        let mut m = Mat5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.r.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.p);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.v);
        m
    }

    /// Validates the block structure and the rotation block.
    pub fn from_matrix(m: &Mat5) -> Result<Self> {
        let bottom = m.fixed_view::<2, 5>(3, 0);
        let expected = Mat5::identity().fixed_view::<2, 5>(3, 0).into_owned();
        if (bottom - expected).amax() > 1e-12 {
            return Err(Error::NotNavState);
        }
        Self::from_top_rows(m)
    }

    /// Reads `R`, `P`, `V` from the top three rows, validating only `R`.
    pub(crate) fn from_top_rows(m: &Mat5) -> Result<Self> {
        let r = Rotation::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Self {
            r,
            p: m.fixed_view::<3, 1>(0, 3).into_owned(),
            v: m.fixed_view::<3, 1>(0, 4).into_owned(),
        })
    }

    /// `Psi(R^T, -R^T P, -R^T V)`.
    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        Self {
            r: rt,
            p: -(rt * self.p),
            v: -(rt * self.v),
        }
    }

    pub fn compose(&self, rhs: &NavState) -> Self {
        Self {
            r: self.r * rhs.r,
            p: self.r * rhs.p + self.p,
            v: self.r * rhs.v + self.v,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.r.matrix().iter().all(|x| x.is_finite())
            && self.p.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }
}

impl Mul for NavState {
    type Output = NavState;

    fn mul(self, rhs: NavState) -> NavState {
        self.compose(&rhs)
    }
}

/// Right-invariant error `X Xhat^-1`: `R~ = R Rhat^T`, `P~ = P - R~ Phat`,
/// `V~ = V - R~ Vhat`.
pub fn nav_error(x: &NavState, xhat: &NavState) -> NavState {
    x.compose(&xhat.inverse())
}

/// Trace identity `Tr(R [w]x) = -2 upsilon(R)^T w`.
pub fn trace_r_skew(r: &Mat3, w: &Vec3) -> f64 {
    (r * skew(w)).trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn skew_matches_displayed_layout() {
        let s = skew(&Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(s, Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0));
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        let c = skew(&Vec3::x()) * Vec3::y();
        assert_eq!(c, Vec3::z());
    }

    #[test]
    fn vex_inverts_skew() {
        let m = Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(vex(&m).unwrap(), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(vex(&Mat3::zeros()).unwrap(), Vec3::zeros());
        let x = Vec3::new(-0.1, 7.25, 1e-3);
        assert_eq!(vex(&skew(&x)).unwrap(), x);
    }

    #[test]
    fn vex_rejects_non_skew() {
        let err = vex(&Mat3::identity()).unwrap_err();
        assert!(matches!(err, Error::NotSkewSymmetric { .. }));
    }

    #[test]
    fn upsilon_cases() {
        assert_eq!(
            upsilon(&Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0))),
            Vec3::zeros()
        );
        assert_eq!(
            upsilon(&skew(&Vec3::new(4.0, 5.0, 6.0))),
            Vec3::new(4.0, 5.0, 6.0)
        );
        let a = Mat3::new(0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(upsilon(&a), Vec3::new(0.0, 0.0, 0.5));
    }

    #[test]
    fn distance_cases() {
        assert_eq!(Rotation::identity().distance(), 0.0);
        let flip = Rotation::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))).unwrap();
        assert_eq!(flip.distance(), 1.0);
        assert_relative_eq!(Rotation::rot_z(FRAC_PI_2).distance(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rodrigues_quarter_turn() {
        let r = rodrigues_exp(&Vec3::new(0.0, 0.0, FRAC_PI_2), 1.0);
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expected).amax() < 1e-15);
        assert_eq!(rodrigues_exp(&Vec3::zeros(), 1.0), Rotation::identity());
    }

    #[test]
    fn rodrigues_small_angle_branch_is_continuous() {
        let w = Vec3::new(1.0, -2.0, 0.5);
        let below = rodrigues_exp(&w, 0.99 * SMALL_ANGLE / w.norm());
        let above = rodrigues_exp(&w, 1.01 * SMALL_ANGLE / w.norm());
        assert!((below.matrix() - above.matrix()).amax() < 1e-9);
        assert!(below.orthonormality_error() < 1e-15);
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::from_matrix(Mat3::identity() * 2.0).is_err());
        // reflection
        assert!(Rotation::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))).is_err());
        assert!(Rotation::from_matrix(*Rotation::rot_x(0.3).matrix()).is_ok());
    }

    #[test]
    fn renormalize_removes_drift() {
        let mut m = *Rotation::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 1.1).matrix();
        m[(0, 1)] += 1e-6;
        m[(2, 2)] -= 2e-6;
        let r = Rotation::from_matrix_unchecked(m).renormalized();
        assert!(r.orthonormality_error() < 1e-15);
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-15);
        assert!((r.matrix() - m).amax() < 1e-5);
    }

    #[test]
    fn expm5_zero_is_identity() {
        assert_eq!(expm5(&TangentElement::default(), 1.0), Mat5::identity());
    }

    #[test]
    fn expm5_integrates_acceleration_into_position() {
        let u = TangentElement::new(Vec3::zeros(), Vec3::zeros(), Vec3::z(), 1.0);
        let e = expm5(&u, 1.0);
        assert_relative_eq!(
            e.fixed_view::<3, 1>(0, 3).into_owned(),
            Vec3::new(0.0, 0.0, 0.5),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            e.fixed_view::<3, 1>(0, 4).into_owned(),
            Vec3::z(),
            epsilon = 1e-15
        );
        assert_eq!(e[(4, 3)], 1.0);
    }

    #[test]
    fn closed_form_matches_scaling_and_squaring() {
        let u = TangentElement::new(
            Vec3::new(0.4, -1.3, 2.2),
            Vec3::new(0.5, 0.1, -0.7),
            Vec3::new(-3.0, 9.0, 1.5),
            1.0,
        );
        for dt in [1e-9, 1e-3, 0.005, 0.2, 1.0, -0.7] {
            let d = expm5(&u, dt) - expm5_closed_form(&u, dt);
            assert!(d.amax() < 1e-12, "dt = {dt}: {}", d.amax());
        }
    }

    #[test]
    fn so3_integrals_continuous_across_series_switch() {
        let axis = Vec3::new(0.3, -0.4, 0.5).normalize();
        let a = so3_integral_2(&(axis * 0.4999999));
        let b = so3_integral_2(&(axis * 0.5000001));
        assert!((a - b).amax() < 1e-7);
        let a = so3_integral_1(&(axis * 0.4999999));
        let b = so3_integral_1(&(axis * 0.5000001));
        assert!((a - b).amax() < 1e-7);
    }

    #[test]
    fn nav_inverse_cases() {
        assert_eq!(NavState::identity().inverse(), NavState::identity());
        let x = NavState::new(
            Rotation::identity(),
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(4.0, 5.0, 6.0),
        );
        let xi = x.inverse();
        assert_eq!(xi.p, Vec3::new(-1.0, -2.0, -3.0));
        assert_eq!(xi.v, Vec3::new(-4.0, -5.0, -6.0));
        let x = NavState::new(
            Rotation::from_axis_angle(&Vec3::new(1.0, -1.0, 2.0), 2.5),
            Vec3::new(3.0, -2.0, 7.0),
            Vec3::new(-1.0, 0.5, 0.25),
        );
        let prod = x.to_matrix() * x.inverse().to_matrix();
        assert!((prod - Mat5::identity()).amax() < 1e-12);
    }

    #[test]
    fn nav_error_cases() {
        let x = NavState::new(
            Rotation::rot_y(0.3),
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(0.1, 0.2, 0.3),
        );
        let e = nav_error(&x, &x);
        assert!((e.to_matrix() - Mat5::identity()).amax() < 1e-15);
        let x = NavState::new(Rotation::identity(), Vec3::x(), Vec3::zeros());
        let e = nav_error(&x, &NavState::identity());
        assert_eq!(e.p, Vec3::x());
    }

    #[test]
    fn nav_from_matrix_rejects_bad_rows() {
        let mut m = NavState::identity().to_matrix();
        m[(4, 3)] = 0.1;
        assert!(matches!(NavState::from_matrix(&m), Err(Error::NotNavState)));
        let x = NavState::new(
            Rotation::rot_x(PI / 3.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::z(),
        );
        assert_eq!(NavState::from_matrix(&x.to_matrix()).unwrap(), x);
    }
}
