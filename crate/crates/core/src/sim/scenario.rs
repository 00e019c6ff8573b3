use crate::dataset::stream::{align, AlignedStream};
use crate::error::{Error, Result};
use crate::lie::{NavState, Rotation, Vec3};
use crate::measurement::{
    require_observable, synthesize_observation, LandmarkMap, LandmarkObservation,
};
use crate::observer::{GravityMode, Observer, ObserverState};

use super::sensors::{
    generate_truth, integrate_truth, rng_stream, synthesize_imu, GroundTruthSample, ImuSample,
    NoiseSpec, TruthModel, LANDMARK_STREAM,
};
use super::trajectory::TrajectorySpec;

/// Confidence weight of the reference landmarks.
///
/// The attitude gain grows like `exp(|M R~|_I)` with `|M R~|_I` up to
/// `Tr(M) / 2`. For landmarks spread over a 10 m box unit weights give
/// `Tr(M)` in the hundreds and the gain overflows during the initial
/// transient; 0.04 keeps `Tr(M)` around 11.
pub const DEFAULT_CONFIDENCE: f64 = 0.04;

pub const DEFAULT_GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.81);

/// Six landmarks in general position inside a 10 m box.
pub fn reference_landmarks() -> Vec<Vec3> {
    vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(10.0, 0.0, 1.0),
        Vec3::new(0.0, 10.0, 2.0),
        Vec3::new(10.0, 10.0, 0.5),
        Vec3::new(5.0, 2.0, 8.0),
        Vec3::new(3.0, 8.0, 6.0),
    ]
}

/// Initial estimation error `X~(0) = X(0) Xhat(0)^-1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitError {
    pub attitude_axis: Vec3,
    /// Radians.
    pub attitude_angle: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl Default for InitError {
    fn default() -> Self {
        Self::zero()
    }
}

impl InitError {
    pub fn zero() -> Self {
        Self {
            attitude_axis: Vec3::z(),
            attitude_angle: 0.0,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
        }
    }

    /// 170 degrees about `[1, 1, 1]`, 3.7 m position offset, no velocity error.
    pub fn reference() -> Self {
        Self {
            attitude_axis: Vec3::new(1.0, 1.0, 1.0),
            attitude_angle: 170f64.to_radians(),
            position: Vec3::new(3.0, -2.0, 1.0),
            velocity: Vec3::zeros(),
        }
    }

    pub fn r_tilde(&self) -> Rotation {
        Rotation::from_axis_angle(&self.attitude_axis, self.attitude_angle)
    }

    /// The estimate whose error against `x` is this one:
    /// `Rhat = R~^T R`, `Phat = R~^T (P - P~)`, `Vhat = R~^T (V - V~)`.
    pub fn apply(&self, x: &NavState) -> NavState {
        let rt = self.r_tilde().transpose();
        NavState::new(
            rt * x.r,
            rt * (x.p - self.position),
            rt * (x.v - self.velocity),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub trajectory: TrajectorySpec,
    pub truth_model: TruthModel,
    pub gravity: Vec3,
    /// Hz.
    pub imu_rate: f64,
    /// Hz; must divide `imu_rate`.
    pub landmark_rate: f64,
    pub map: LandmarkMap,
    pub noise: NoiseSpec,
    /// Per-axis std of landmark readings (m).
    pub landmark_noise: f64,
    pub init_error: InitError,
    pub observer: Observer,
    pub sigma_init: Vec3,
    /// Initial gravity estimate in adaptive mode.
    pub g_init: Vec3,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::reference()
    }
}

impl Scenario {
    /// 40 s lissajous flight, 200 Hz IMU, 20 Hz landmarks, large initial error.
    pub fn reference() -> Self {
        Self {
            trajectory: TrajectorySpec::lissajous(40.0),
            truth_model: TruthModel::Analytic,
            gravity: DEFAULT_GRAVITY,
            imu_rate: 200.0,
            landmark_rate: 20.0,
            map: LandmarkMap::from_positions(&reference_landmarks(), DEFAULT_CONFIDENCE)
                .expect("reference landmarks are valid"),
            noise: NoiseSpec::noiseless(),
            landmark_noise: 0.0,
            init_error: InitError::reference(),
            observer: Observer::default(),
            sigma_init: Vec3::zeros(),
            g_init: Vec3::zeros(),
        }
    }

    pub fn known_gravity(&self) -> GravityMode {
        GravityMode::Known(self.gravity)
    }

    /// IMU samples per landmark epoch.
    pub fn landmark_stride(&self) -> Result<usize> {
        if !(self.landmark_rate > 0.0) {
            return Err(Error::validation("landmark_rate", "must be positive"));
        }
        let ratio = self.imu_rate / self.landmark_rate;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
            return Err(Error::validation(
                "landmark_rate",
                format!(
                    "must divide imu_rate evenly ({} / {})",
                    self.imu_rate, self.landmark_rate
                ),
            ));
        }
        Ok(stride as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.observer.gains.validate()?;
        self.noise.validate()?;
        self.landmark_stride()?;
        if !(self.landmark_noise >= 0.0 && self.landmark_noise.is_finite()) {
            return Err(Error::validation("landmark_noise", "must be non-negative"));
        }
        require_observable(&self.map)?;
        Ok(())
    }

    pub fn initial_state(&self, truth0: &NavState, mode: GravityMode) -> ObserverState {
        ObserverState::new(
            self.init_error.apply(truth0),
            mode,
            self.sigma_init,
            self.g_init,
        )
    }
}

/// Everything the sensors of one simulated run produce.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorLog {
    pub truth: Vec<GroundTruthSample>,
    pub imu: Vec<ImuSample>,
    pub observations: Vec<LandmarkObservation>,
}

impl SensorLog {
    pub fn to_stream(&self) -> Result<AlignedStream> {
        align(
            self.imu.clone(),
            self.observations.clone(),
            Some(self.truth.clone()),
        )
    }
}

pub fn simulate_sensors(scenario: &Scenario) -> Result<SensorLog> {
    scenario.validate()?;
    let stride = scenario.landmark_stride()?;
    let truth = match scenario.truth_model {
        TruthModel::Analytic => {
            generate_truth(&scenario.trajectory, scenario.imu_rate, &scenario.gravity)?
        }
        TruthModel::Integrated => {
            integrate_truth(&scenario.trajectory, scenario.imu_rate, &scenario.gravity)?
        }
    };
    let imu = synthesize_imu(&truth, &scenario.noise);
    let mut rng = rng_stream(scenario.noise.seed, LANDMARK_STREAM);
    let observations = truth
        .iter()
        .step_by(stride)
        .map(|s| {
            synthesize_observation(&s.x, &scenario.map, scenario.landmark_noise, s.t, &mut rng)
        })
        .collect();
    Ok(SensorLog {
        truth: truth
            .iter()
            .map(|s| GroundTruthSample::from_truth(s.t, &s.x))
            .collect(),
        imu,
        observations,
    })
}
