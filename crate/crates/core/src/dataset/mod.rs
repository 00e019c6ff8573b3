//! Reading and writing logs, results and run configurations.

pub mod config;
pub mod formats;
pub mod stream;

pub use config::{parse_config, parse_config_str, ModeSelection, ReplayInputs, RunConfig};
pub use formats::{
    check_observation_ids, load_imu_csv, load_landmarks, load_map_csv, load_observations_csv,
    load_truth_csv, read_metrics, write_imu_csv, write_map_csv, write_metrics,
    write_observations_csv, write_trials, write_truth_csv, MetricsRecord,
};
pub use stream::{align, AlignedStream, Event, StreamStep};
