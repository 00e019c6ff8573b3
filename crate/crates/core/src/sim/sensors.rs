//! Ground truth and synthetic IMU streams.
//!
//! Timestamps are generated as integer nanoseconds and converted once, so a
//! stream written to disk and read back carries bit-identical times.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lie::{expm5, NavState, Rotation, TangentElement, Vec3};
use crate::quat::{quat_to_rot, rot_to_quat, Quat};

use super::trajectory::TrajectorySpec;

/// Nanoseconds to seconds; the single conversion used everywhere.
pub fn ns_to_s(t_ns: i64) -> f64 {
    t_ns as f64 * 1e-9
}

pub fn s_to_ns(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// Sample times `0, T, 2T, ...` up to `duration`, with `T` rounded to whole
/// nanoseconds.
pub fn time_grid(duration: f64, rate: f64) -> Result<Vec<i64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::validation("imu_rate", "must be positive"));
    }
    let period = (1e9 / rate).round() as i64;
    if period <= 0 {
        return Err(Error::validation("imu_rate", "period below one nanosecond"));
    }
    let steps = (duration * 1e9 / period as f64).round() as i64;
    Ok((0..=steps).map(|k| k * period).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub x: NavState,
    pub omega: Vec3,
    /// Specific force in the body frame.
    pub a: Vec3,
}

/// Ground-truth record as stored on disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthSample {
    pub t: f64,
    pub q: Quat,
    pub p: Vec3,
    pub v: Vec3,
}

impl GroundTruthSample {
    pub fn from_truth(t: f64, x: &NavState) -> Self {
        Self {
            t,
            q: rot_to_quat(&x.r),
            p: x.p,
            v: x.v,
        }
    }

    pub fn nav_state(&self) -> Result<NavState> {
        Ok(NavState::new(quat_to_rot(&self.q)?, self.p, self.v))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TruthModel {
    /// States sampled from the analytic trajectory.
    #[default]
    Analytic,
    /// States propagated from the initial analytic state with the sampled
    /// IMU signal held constant over each interval. This is the motion the
    /// recorded IMU data actually describes, so an exactly initialized
    /// observer reproduces it to rounding.
    Integrated,
}

pub fn generate_truth(
    spec: &TrajectorySpec,
    rate: f64,
    gravity: &Vec3,
) -> Result<Vec<TruthSample>> {
    spec.validate()?;
    Ok(time_grid(spec.duration, rate)?
        .into_iter()
        .map(|t_ns| {
            let t = ns_to_s(t_ns);
            let k = spec.kinematics(t);
            TruthSample {
                t,
                x: k.nav_state(),
                omega: k.omega,
                a: k.specific_force(gravity),
            }
        })
        .collect())
}

/// [`TruthModel::Integrated`] truth: `X_{k+1} = exp(-G dt) X_k exp(U_k dt)`
/// with `G = u(0, 0, -g, 1)` and `U_k` the analytic IMU signal at `t_k`.
pub fn integrate_truth(
    spec: &TrajectorySpec,
    rate: f64,
    gravity: &Vec3,
) -> Result<Vec<TruthSample>> {
    let mut samples = generate_truth(spec, rate, gravity)?;
    let g = TangentElement::gravity(gravity);
    for k in 1..samples.len() {
        let prev = samples[k - 1];
        let dt = samples[k].t - prev.t;
        let m = expm5(&g, -dt)
            * prev.x.to_matrix()
            * expm5(&TangentElement::imu(&prev.omega, &prev.a), dt);
        let mut r = Rotation::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned());
        if k % 1000 == 0 {
            r = r.renormalized();
        }
        samples[k].x = NavState::new(
            r,
            m.fixed_view::<3, 1>(0, 3).into_owned(),
            m.fixed_view::<3, 1>(0, 4).into_owned(),
        );
    }
    Ok(samples)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum NoiseProfile {
    #[default]
    Constant,
    /// Standard deviations scaled by `1 + amplitude sin(2 pi t / period)`.
    Sinusoidal { amplitude: f64, period: f64 },
}

impl NoiseProfile {
    pub fn scale(&self, t: f64) -> f64 {
        match *self {
            NoiseProfile::Constant => 1.0,
            NoiseProfile::Sinusoidal { amplitude, period } => {
                1.0 + amplitude * (TAU * t / period).sin()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseSpec {
    /// Gyro noise standard deviation (rad/s).
    pub std_omega: f64,
    /// Accelerometer noise standard deviation (m/s^2).
    pub std_accel: f64,
    pub seed: u64,
    pub profile: NoiseProfile,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    /// The noise levels of the reference experiment.
    pub fn reference(seed: u64) -> Self {
        Self {
            std_omega: 0.12,
            std_accel: 0.11,
            seed,
            profile: NoiseProfile::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std_omega >= 0.0 && self.std_omega.is_finite()) {
            return Err(Error::validation("std_omega", "must be non-negative"));
        }
        if !(self.std_accel >= 0.0 && self.std_accel.is_finite()) {
            return Err(Error::validation("std_accel", "must be non-negative"));
        }
        if let NoiseProfile::Sinusoidal { amplitude, period } = self.profile {
            if !(0.0..=1.0).contains(&amplitude) || !(period > 0.0) {
                return Err(Error::validation(
                    "noise_profile",
                    "sinusoidal amplitude must be in [0, 1] and period positive",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub omega_m: Vec3,
    pub a_m: Vec3,
}

/// Independent RNG streams derived from one seed.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const IMU_STREAM: u64 = 0;
pub(crate) const LANDMARK_STREAM: u64 = 1;

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> Vec3 {
    let mut n = Vec3::zeros();
    for k in 0..3 {
        let z: f64 = StandardNormal.sample(rng);
        n[k] = std * z;
    }
    n
}

pub fn synthesize_imu(truth: &[TruthSample], noise: &NoiseSpec) -> Vec<ImuSample> {
    let mut rng = rng_stream(noise.seed, IMU_STREAM);
    truth
        .iter()
        .map(|s| {
            let mut omega_m = s.omega;
            let mut a_m = s.a;
            if noise.std_omega > 0.0 || noise.std_accel > 0.0 {
                let scale = noise.profile.scale(s.t);
                omega_m += gaussian(&mut rng, noise.std_omega * scale);
                a_m += gaussian(&mut rng, noise.std_accel * scale);
            }
            ImuSample {
                t: s.t,
                omega_m,
                a_m,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: Vec3 = Vec3::new(0.0, 0.0, -9.81);

    #[test]
    fn time_grid_is_exact_in_nanoseconds() {
        let g = time_grid(1.0, 200.0).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g[1], 5_000_000);
        assert_eq!(*g.last().unwrap(), 1_000_000_000);
        for t_ns in [0, 5_000_000, 39_995_000_000] {
            assert_eq!(s_to_ns(ns_to_s(t_ns)), t_ns);
        }
    }

    #[test]
    fn zero_noise_reproduces_truth() {
        let truth = generate_truth(&TrajectorySpec::lissajous(1.0), 200.0, &G).unwrap();
        let imu = synthesize_imu(&truth, &NoiseSpec::noiseless());
        for (s, m) in truth.iter().zip(&imu) {
            assert_eq!(s.omega, m.omega_m);
            assert_eq!(s.a, m.a_m);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let truth = generate_truth(&TrajectorySpec::lissajous(1.0), 200.0, &G).unwrap();
        let a = synthesize_imu(&truth, &NoiseSpec::reference(7));
        let b = synthesize_imu(&truth, &NoiseSpec::reference(7));
        let c = synthesize_imu(&truth, &NoiseSpec::reference(8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn integrated_truth_tracks_analytic() {
        let spec = TrajectorySpec::lissajous(10.0);
        let a = generate_truth(&spec, 200.0, &G).unwrap();
        let b = integrate_truth(&spec, 200.0, &G).unwrap();
        assert_eq!(a[0].x, b[0].x);
        let last = a.len() - 1;
        assert!((a[last].x.p - b[last].x.p).norm() < 0.05);
        assert!((a[last].x.r * b[last].x.r.transpose()).distance() < 1e-4);
        assert!(b[last].x.r.orthonormality_error() < 1e-12);
    }

    #[test]
    fn sinusoidal_profile_scales_std() {
        let p = NoiseProfile::Sinusoidal {
            amplitude: 0.5,
            period: 4.0,
        };
        assert!((p.scale(1.0) - 1.5).abs() < 1e-15);
        assert!((p.scale(3.0) - 0.5).abs() < 1e-15);
        assert_eq!(NoiseProfile::Constant.scale(1.0), 1.0);
    }
}
