//! Synthetic test bed: reference trajectories, IMU and landmark sensors, and
//! closed-loop runs of the observer against ground truth.

mod run;
mod scenario;
mod sensors;
mod trajectory;

pub use run::{
    initial_state, monte_carlo, run_closed_loop, run_stream, summarize, Row, RunResult, RunSummary,
    TrialOutcome, CONVERGENCE_THRESHOLDS, STEADY_STATE_FRACTION,
};
pub use scenario::{
    reference_landmarks, simulate_sensors, InitError, Scenario, SensorLog, DEFAULT_CONFIDENCE,
    DEFAULT_GRAVITY,
};
pub use sensors::{
    generate_truth, integrate_truth, ns_to_s, s_to_ns, synthesize_imu, time_grid,
    GroundTruthSample, ImuSample, NoiseProfile, NoiseSpec, TruthModel, TruthSample,
};
pub use trajectory::{Kinematics, Spline, TrajectoryKind, TrajectorySpec};
