//! Analytic reference trajectories.
//!
//! Each trajectory gives position, velocity and acceleration in closed form
//! plus an attitude profile with its body rate, so the apparent acceleration
//! `a = R^T (Vdot - g)` and the gyro signal are exact.
//!
//! Moving trajectories point the body x axis along the horizontal velocity
//! (yaw `psi = atan2(vy, vx)`), optionally with small roll/pitch oscillations.
//! With `R = Rz(psi) Ry(theta) Rx(phi)` the body rate is
//!
//! ```text
//! wx = phidot - psidot sin(theta)
//! wy = thetadot cos(phi) + psidot cos(theta) sin(phi)
//! wz = -thetadot sin(phi) + psidot cos(theta) cos(phi)
//! ```
//!
//! with `psidot = (vx ay - vy ax) / (vx^2 + vy^2)`.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::lie::{NavState, Rotation, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryKind {
    /// Static pose.
    Hover { position: Vec3, yaw: f64 },
    /// Horizontal circle at constant speed, counter-clockwise for `rate > 0`.
    Circle {
        center: Vec3,
        radius: f64,
        rate: f64,
    },
    /// `p_j = center_j + amplitude_j sin(n_j omega t)` with `n = (1, 2, 3)`,
    /// and roll/pitch oscillating with amplitude `tilt`.
    Lissajous {
        center: Vec3,
        amplitude: Vec3,
        omega: f64,
        tilt: f64,
    },
    /// Natural cubic spline through timed waypoints at constant yaw.
    Waypoints(Spline),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// Seconds.
    pub duration: f64,
}

/// Full kinematic state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub r: Rotation,
    pub p: Vec3,
    pub v: Vec3,
    /// Inertial acceleration `Vdot`.
    pub accel: Vec3,
    /// Body angular rate.
    pub omega: Vec3,
}

impl Kinematics {
    pub fn nav_state(&self) -> NavState {
        NavState::new(self.r, self.p, self.v)
    }

    /// Accelerometer reading `R^T (Vdot - g)`.
    pub fn specific_force(&self, gravity: &Vec3) -> Vec3 {
        self.r.transpose() * (self.accel - gravity)
    }
}

impl TrajectorySpec {
    /// The reference trajectory: 20 s lissajous figure through a 10 m box.
    pub fn lissajous(duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Lissajous {
                center: Vec3::new(5.0, 5.0, 2.0),
                amplitude: Vec3::new(3.0, 2.0, 0.5),
                omega: TAU / 20.0,
                tilt: 0.1,
            },
            duration,
        }
    }

    pub fn hover(position: Vec3, yaw: f64, duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Hover { position, yaw },
            duration,
        }
    }

    pub fn circle(center: Vec3, radius: f64, rate: f64, duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Circle {
                center,
                radius,
                rate,
            },
            duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::validation("duration", "must be positive"));
        }
        match &self.kind {
            TrajectoryKind::Circle { radius, rate, .. } => {
                if !(*radius > 0.0) || *rate == 0.0 {
                    return Err(Error::validation(
                        "trajectory",
                        "circle needs a positive radius and a non-zero rate",
                    ));
                }
            }
            TrajectoryKind::Lissajous {
                amplitude, omega, ..
            } => {
                if !(*omega > 0.0) || (amplitude.x == 0.0 && amplitude.y == 0.0) {
                    return Err(Error::validation(
                        "trajectory",
                        "lissajous needs a positive omega and horizontal motion",
                    ));
                }
            }
            TrajectoryKind::Waypoints(spline) => {
                if self.duration > spline.end_time() + 1e-12 {
                    return Err(Error::validation(
                        "duration",
                        format!("exceeds last waypoint time {}", spline.end_time()),
                    ));
                }
            }
            TrajectoryKind::Hover { .. } => {}
        }
        Ok(())
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        match &self.kind {
            TrajectoryKind::Hover { position, yaw } => Kinematics {
                r: Rotation::rot_z(*yaw),
                p: *position,
                v: Vec3::zeros(),
                accel: Vec3::zeros(),
                omega: Vec3::zeros(),
            },
            TrajectoryKind::Circle {
                center,
                radius,
                rate,
            } => {
                let (s, c) = (rate * t).sin_cos();
                let p = center + Vec3::new(c, s, 0.0) * *radius;
                let v = Vec3::new(-s, c, 0.0) * (radius * rate);
                let accel = Vec3::new(c, s, 0.0) * (-radius * rate * rate);
                heading_attitude(p, v, accel, Tilt::default())
            }
            TrajectoryKind::Lissajous {
                center,
                amplitude,
                omega,
                tilt,
            } => {
                let mut p = *center;
                let mut v = Vec3::zeros();
                let mut accel = Vec3::zeros();
                for j in 0..3 {
                    let n = (j + 1) as f64 * omega;
                    let (s, c) = (n * t).sin_cos();
                    p[j] += amplitude[j] * s;
                    v[j] = amplitude[j] * n * c;
                    accel[j] = -amplitude[j] * n * n * s;
                }
                let (s1, c1) = (omega * t).sin_cos();
                let (s2, c2) = (2.0 * omega * t).sin_cos();
                let tilt = Tilt {
                    roll: tilt * s1,
                    roll_rate: tilt * omega * c1,
                    pitch: tilt * c2,
                    pitch_rate: -2.0 * tilt * omega * s2,
                };
                heading_attitude(p, v, accel, tilt)
            }
            TrajectoryKind::Waypoints(spline) => {
                let (p, v, accel) = spline.evaluate(t);
                Kinematics {
                    r: Rotation::rot_z(spline.yaw),
                    p,
                    v,
                    accel,
                    omega: Vec3::zeros(),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Tilt {
    roll: f64,
    roll_rate: f64,
    pitch: f64,
    pitch_rate: f64,
}

fn heading_attitude(p: Vec3, v: Vec3, accel: Vec3, tilt: Tilt) -> Kinematics {
    let h2 = v.x * v.x + v.y * v.y;
    let (yaw, yaw_rate) = if h2 > 1e-12 {
        (v.y.atan2(v.x), (v.x * accel.y - v.y * accel.x) / h2)
    } else {
        (0.0, 0.0)
    };
    let r = Rotation::rot_z(yaw) * Rotation::rot_y(tilt.pitch) * Rotation::rot_x(tilt.roll);
    let (sr, cr) = tilt.roll.sin_cos();
    let (sp, cp) = tilt.pitch.sin_cos();
    let omega = Vec3::new(
        tilt.roll_rate - yaw_rate * sp,
        tilt.pitch_rate * cr + yaw_rate * cp * sr,
        -tilt.pitch_rate * sr + yaw_rate * cp * cr,
    );
    Kinematics {
        r,
        p,
        v,
        accel,
        omega,
    }
}

/// Natural cubic spline, one per axis, through `(times[i], points[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spline {
    times: Vec<f64>,
    points: Vec<Vec3>,
    /// Second derivatives at the knots.
    moments: Vec<Vec3>,
    pub yaw: f64,
}

impl Spline {
    pub fn new(times: Vec<f64>, points: Vec<Vec3>, yaw: f64) -> Result<Self> {
        if times.len() != points.len() || times.len() < 2 {
            return Err(Error::validation(
                "waypoints",
                "need at least two waypoints with matching times",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "waypoint_times",
                "must be strictly increasing",
            ));
        }
        let n = times.len();
        let mut moments = vec![Vec3::zeros(); n];
        if n > 2 {
            // Thomas algorithm on the interior knots, natural end conditions
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![Vec3::zeros(); m];
            for i in 0..m {
                let h0 = times[i + 1] - times[i];
                let h1 = times[i + 2] - times[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] =
                    ((points[i + 2] - points[i + 1]) / h1 - (points[i + 1] - points[i]) / h0) * 6.0;
            }
            for i in 1..m {
                let lower = times[i + 1] - times[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                let prev = rhs[i - 1];
                rhs[i] -= prev * f;
            }
            moments[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                moments[i + 1] = (rhs[i] - moments[i + 2] * upper[i]) / diag[i];
            }
        }
        Ok(Self {
            times,
            points,
            moments,
            yaw,
        })
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("at least two knots")
    }

    /// Position, velocity and acceleration at `t` (clamped to the knot range).
    pub fn evaluate(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let t = t.clamp(self.times[0], self.end_time());
        let i = match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(self.times.len() - 2),
        };
        let h = self.times[i + 1] - self.times[i];
        let a = (self.times[i + 1] - t) / h;
        let b = (t - self.times[i]) / h;
        let (y0, y1) = (self.points[i], self.points[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let p = y0 * a + y1 * b + (m0 * (a * a * a - a) + m1 * (b * b * b - b)) * (h * h / 6.0);
        let v = (y1 - y0) / h + (m1 * (3.0 * b * b - 1.0) - m0 * (3.0 * a * a - 1.0)) * (h / 6.0);
        let accel = m0 * a + m1 * b;
        (p, v, accel)
    }
}
