//! Landmark measurements and the per-step aggregates that drive the
//! observer's correction terms.
//!
//! A landmark `i` has a known inertial position `p_i` and a confidence weight
//! `s_i > 0`; the body-frame reading is `y_i = R^T (p_i - P) + noise`. From a
//! set of readings and an attitude/position estimate, [`aggregate`] forms:
//!
//! * `p_c = sum s_i p_i / s_T`, `s_T = sum s_i`
//! * `M = sum s_i p_i p_i^T - s_T p_c p_c^T`
//! * `M R~ = sum s_i (p_i - p_c) y_i^T Rhat^T`
//! * `R~^T P~_e = sum s_i (p_i - Rhat y_i - Phat) / s_T`
//! * `|M R~|_I = Tr(M - M R~) / 4`
//!
//! None of these need the true state: with noise-free readings
//! `M R~ = M (R Rhat^T)` exactly.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lie::{Mat3, NavState, Rotation, Vec3};

/// Minimum number of non-collinear landmarks for attitude observability.
pub const MIN_LANDMARKS: usize = 3;

/// Relative eigenvalue tolerance for the non-collinearity check.
pub const EIG_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vec3,
    pub confidence: f64,
}

impl Landmark {
    pub fn new(id: u64, position: Vec3, confidence: f64) -> Self {
        Self {
            id,
            position,
            confidence,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LandmarkMap {
    landmarks: Vec<Landmark>,
    index: HashMap<u64, usize>,
}

impl LandmarkMap {
    /// Ids must be unique, positions finite and confidences positive. The
    /// geometry is not checked here; see [`check_configuration`].
    pub fn new(landmarks: Vec<Landmark>) -> Result<Self> {
        let mut index = HashMap::with_capacity(landmarks.len());
        for (i, l) in landmarks.iter().enumerate() {
            if !l.position.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidLandmark {
                    id: l.id,
                    reason: "position is not finite".into(),
                });
            }
            if !(l.confidence > 0.0 && l.confidence.is_finite()) {
                return Err(Error::InvalidLandmark {
                    id: l.id,
                    reason: format!("confidence must be positive, got {}", l.confidence),
                });
            }
            if index.insert(l.id, i).is_some() {
                return Err(Error::DuplicateLandmarkId(l.id));
            }
        }
        Ok(Self { landmarks, index })
    }

    /// Landmarks with ids `0..n` sharing one confidence weight.
    pub fn from_positions(positions: &[Vec3], confidence: f64) -> Result<Self> {
        Self::new(
            positions
                .iter()
                .enumerate()
                .map(|(i, p)| Landmark::new(i as u64, *p, confidence))
                .collect(),
        )
    }

    pub fn get(&self, id: u64) -> Option<&Landmark> {
        self.index.get(&id).map(|&i| &self.landmarks[i])
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reading {
    pub id: u64,
    /// Body-frame landmark position (m).
    pub y: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkObservation {
    /// Seconds.
    pub t: f64,
    pub readings: Vec<Reading>,
}

/// Aggregates of one landmark epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSummary {
    pub p_c: Vec3,
    pub s_t: f64,
    pub m: Mat3,
    pub m_rtilde: Mat3,
    /// `R~^T P~_e`, the weighted mean landmark residual.
    pub rtp_eps: Vec3,
    /// `|M R~|_I`.
    pub dist_m: f64,
}

/// Readings `y_i = R^T (p_i - P) + n_i` with i.i.d. per-axis Gaussian noise.
pub fn synthesize_observation<R: Rng + ?Sized>(
    x_true: &NavState,
    map: &LandmarkMap,
    noise_std: f64,
    t: f64,
    rng: &mut R,
) -> LandmarkObservation {
    let rt = x_true.r.transpose();
    let readings = map
        .landmarks()
        .iter()
        .map(|l| {
            let mut y = rt * (l.position - x_true.p);
            if noise_std > 0.0 {
                for k in 0..3 {
                    let n: f64 = StandardNormal.sample(rng);
                    y[k] += noise_std * n;
                }
            }
            Reading { id: l.id, y }
        })
        .collect();
    LandmarkObservation { t, readings }
}

pub fn aggregate(
    map: &LandmarkMap,
    obs: &LandmarkObservation,
    rhat: &Rotation,
    phat: &Vec3,
) -> Result<MeasurementSummary> {
    if obs.readings.len() < MIN_LANDMARKS {
        return Err(Error::InsufficientLandmarks {
            found: obs.readings.len(),
            required: MIN_LANDMARKS,
        });
    }
    let matched = obs
        .readings
        .iter()
        .map(|r| {
            map.get(r.id)
                .map(|l| (l, r.y))
                .ok_or(Error::UnknownLandmarkId(r.id))
        })
        .collect::<Result<Vec<_>>>()?;

    let s_t: f64 = matched.iter().map(|(l, _)| l.confidence).sum();
    let p_c = matched
        .iter()
        .fold(Vec3::zeros(), |acc, (l, _)| acc + l.position * l.confidence)
        / s_t;

    let mut m = Mat3::zeros();
    let mut weighted_y = Mat3::zeros();
    let mut residual = Vec3::zeros();
    for (l, y) in &matched {
        let s = l.confidence;
        let d = l.position - p_c;
        m += d * d.transpose() * s;
        weighted_y += d * y.transpose() * s;
        residual += (l.position - rhat * *y - phat) * s;
    }
    let m_rtilde = weighted_y * rhat.matrix().transpose();
    let rtp_eps = residual / s_t;
    // Tr(M (I - R~)) >= 0 for exact readings; noise can push it just below
    let dist_m = (0.25 * (m.trace() - m_rtilde.trace())).max(0.0);

    Ok(MeasurementSummary {
        p_c,
        s_t,
        m,
        m_rtilde,
        rtp_eps,
        dist_m,
    })
}

/// Observability report for a landmark set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfigReport {
    pub landmark_count: usize,
    /// Eigenvalues of `M`, ascending.
    pub eigen_m: [f64; 3],
    /// Smallest eigenvalue of `Tr(M) I - M`, i.e. the sum of the two smallest of `M`.
    pub lambda_min_mbar: f64,
    pub lambda_max_mbar: f64,
    /// Fewer than three landmarks, or (near-)collinear ones.
    pub violates_assumption: bool,
}

/// `M` of the whole map with all landmarks in view.
pub fn landmark_scatter(map: &LandmarkMap) -> Mat3 {
    let s_t: f64 = map.landmarks().iter().map(|l| l.confidence).sum();
    if s_t == 0.0 {
        return Mat3::zeros();
    }
    let p_c = map
        .landmarks()
        .iter()
        .fold(Vec3::zeros(), |acc, l| acc + l.position * l.confidence)
        / s_t;
    map.landmarks().iter().fold(Mat3::zeros(), |acc, l| {
        let d = l.position - p_c;
        acc + d * d.transpose() * l.confidence
    })
}

pub fn check_configuration(map: &LandmarkMap) -> ConfigReport {
    let m = landmark_scatter(map);
    let eigen_m = symmetric_eigenvalues(&m);
    let (lambda_min_mbar, lambda_max_mbar) = mbar_extremes(&m, &eigen_m);
    let tol = EIG_REL_TOL * eigen_m[2].max(0.0);
    let violates_assumption =
        map.len() < MIN_LANDMARKS || eigen_m[2] <= 0.0 || lambda_min_mbar <= tol;
    ConfigReport {
        landmark_count: map.len(),
        eigen_m,
        lambda_min_mbar,
        lambda_max_mbar,
        violates_assumption,
    }
}

/// [`check_configuration`] as a precondition: errors unless the map has at
/// least three landmarks that are not all on one line.
pub fn require_observable(map: &LandmarkMap) -> Result<ConfigReport> {
    let report = check_configuration(map);
    if report.landmark_count < MIN_LANDMARKS {
        return Err(Error::InsufficientLandmarks {
            found: report.landmark_count,
            required: MIN_LANDMARKS,
        });
    }
    if report.violates_assumption {
        return Err(Error::CollinearLandmarks {
            lambda_min: report.lambda_min_mbar,
        });
    }
    Ok(report)
}

/// Extreme eigenvalues of `Tr(M) I - M` given the eigenvalues of `M`.
///
/// The smallest one is recovered from `det(Mbar)` divided by the two larger
/// ones, which keeps it accurate to relative precision when it is tiny.
pub fn mbar_extremes(m: &Mat3, eigen_m: &[f64; 3]) -> (f64, f64) {
    let tr = m.trace();
    let mbar = Mat3::identity() * tr - m;
    let largest = tr - eigen_m[0];
    let middle = tr - eigen_m[1];
    let smallest = if largest * middle > 0.0 {
        mbar.determinant() / (largest * middle)
    } else {
        0.0
    };
    (smallest, largest)
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending, from the trigonometric
/// solution of its characteristic polynomial.
pub fn symmetric_eigenvalues(a: &Mat3) -> [f64; 3] {
    let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    if off == 0.0 {
        let mut d = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let q = a.trace() / 3.0;
    let p2 =
        (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let b = (a - Mat3::identity() * q) / p;
    let r = (0.5 * b.determinant()).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    let mut e = [lo, mid, hi];
    e.sort_by(f64::total_cmp);
    e
}
