//! Driving the observer over a stream and summarizing the result.
//!
//! Simulation and log replay go through the same [`run_stream`], so a run
//! replayed from its own logs reproduces its metrics exactly.

use log::warn;
use rayon::prelude::*;

use crate::dataset::stream::AlignedStream;
use crate::error::{Error, Result};
use crate::lie::{NavState, Vec3};
use crate::measurement::{require_observable, LandmarkMap};
use crate::observer::{
    attitude_error, error_metrics, in_unstable_set, GravityMode, Metrics, Observer, ObserverState,
};

use super::scenario::{simulate_sensors, InitError, Scenario};

/// Levels below which an error counts as converged, in metric order.
pub const CONVERGENCE_THRESHOLDS: Metrics = Metrics {
    attitude: 0.01,
    position: 0.05,
    velocity: 0.05,
    gravity: 0.2,
};

/// Fraction of the run, at the end, treated as steady state.
pub const STEADY_STATE_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub t: f64,
    /// Present when ground truth is available at `t`.
    pub metrics: Option<Metrics>,
    pub state: ObserverState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub initial: Option<Metrics>,
    pub terminal: Option<Metrics>,
    /// Time after which each error stays below [`CONVERGENCE_THRESHOLDS`].
    pub convergence_time: [Option<f64>; 4],
    /// Mean squared error over the last [`STEADY_STATE_FRACTION`] of the rows
    /// that carry metrics.
    pub steady_state_mse: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub rows: Vec<Row>,
    pub final_state: ObserverState,
    pub summary: RunSummary,
    pub warnings: Vec<String>,
}

/// Estimate at the start of a stream: the configured error applied to the
/// truth at the first IMU sample, or the identity pose without truth.
pub fn initial_state(
    stream: &AlignedStream,
    init_error: &InitError,
    mode: GravityMode,
    sigma_init: Vec3,
    g_init: Vec3,
) -> Result<ObserverState> {
    let xhat = match stream.initial_truth() {
        Some(g) => init_error.apply(&g.nav_state()?),
        None => NavState::identity(),
    };
    Ok(ObserverState::new(xhat, mode, sigma_init, g_init))
}

pub fn run_stream(
    stream: &AlignedStream,
    map: &LandmarkMap,
    observer: &Observer,
    init: ObserverState,
    g_true: &Vec3,
) -> Result<RunResult> {
    require_observable(map)?;
    let t0 = stream
        .first_imu()
        .ok_or_else(|| Error::EmptyStream("no IMU samples".into()))?
        .t;

    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let initial_metrics = match stream.initial_truth() {
        Some(g) => {
            let x = g.nav_state()?;
            if in_unstable_set(&attitude_error(&x, &init.xhat)) {
                let msg = "initial attitude error is a half turn (unstable set); \
                           the attitude correction vanishes there and convergence is not guaranteed"
                    .to_string();
                warn!("{msg}");
                warnings.push(msg);
            }
            Some(error_metrics(&x, &init, g_true))
        }
        None => None,
    };
    rows.push(Row {
        t: t0,
        metrics: initial_metrics,
        state: init,
    });

    let mut state = init;
    for step in stream.steps() {
        state = observer.step(
            &state,
            &step.input.omega_m,
            &step.input.a_m,
            map,
            step.observation,
            step.dt(),
        )?;
        let metrics = match step.truth {
            Some(g) => Some(error_metrics(&g.nav_state()?, &state, g_true)),
            None => None,
        };
        rows.push(Row {
            t: step.t_end,
            metrics,
            state,
        });
    }

    Ok(RunResult {
        summary: summarize(&rows),
        final_state: state,
        rows,
        warnings,
    })
}

pub fn summarize(rows: &[Row]) -> RunSummary {
    let scored: Vec<(f64, Metrics)> = rows
        .iter()
        .filter_map(|r| r.metrics.map(|m| (r.t, m)))
        .collect();
    if scored.is_empty() {
        return RunSummary::default();
    }
    let thresholds = CONVERGENCE_THRESHOLDS.as_array();
    let mut convergence_time = [None; 4];
    for (j, slot) in convergence_time.iter_mut().enumerate() {
        // last sample above threshold; convergence is the sample after it
        let last_above = scored
            .iter()
            .rposition(|(_, m)| m.as_array()[j] >= thresholds[j]);
        *slot = match last_above {
            None => Some(scored[0].0),
            Some(i) if i + 1 < scored.len() => Some(scored[i + 1].0),
            Some(_) => None,
        };
    }
    let tail_len = ((scored.len() as f64 * STEADY_STATE_FRACTION).ceil() as usize).max(1);
    let tail = &scored[scored.len() - tail_len..];
    let mut mse = [0.0; 4];
    for (_, m) in tail {
        for (acc, x) in mse.iter_mut().zip(m.as_array()) {
            *acc += x * x / tail.len() as f64;
        }
    }
    RunSummary {
        initial: Some(scored[0].1),
        terminal: Some(scored[scored.len() - 1].1),
        convergence_time,
        steady_state_mse: Some(Metrics {
            attitude: mse[0],
            position: mse[1],
            velocity: mse[2],
            gravity: mse[3],
        }),
    }
}

/// Simulates the scenario's sensors and runs the observer on them.
pub fn run_closed_loop(scenario: &Scenario, mode: GravityMode) -> Result<RunResult> {
    let log = simulate_sensors(scenario)?;
    let stream = log.to_stream()?;
    let init = initial_state(
        &stream,
        &scenario.init_error,
        mode,
        scenario.sigma_init,
        scenario.g_init,
    )?;
    run_stream(
        &stream,
        &scenario.map,
        &scenario.observer,
        init,
        &scenario.gravity,
    )
}

/// Per-seed outcome of a Monte-Carlo batch; the time series is dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub summary: RunSummary,
    pub final_state: ObserverState,
}

impl TrialOutcome {
    pub fn terminal(&self) -> Metrics {
        self.summary.terminal.unwrap_or_default()
    }
}

/// Runs one trial per seed in parallel; results are sorted by seed.
pub fn monte_carlo(
    scenario: &Scenario,
    mode: GravityMode,
    seeds: &[u64],
) -> Result<Vec<TrialOutcome>> {
    let mut outcomes = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = scenario.clone();
            s.noise.seed = seed;
            let run = run_closed_loop(&s, mode)?;
            Ok(TrialOutcome {
                seed,
                summary: run.summary,
                final_state: run.final_state,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    outcomes.sort_by_key(|o| o.seed);
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TruthModel;

    #[test]
    fn exact_start_stays_exact() {
        let mut s = Scenario::reference();
        s.trajectory.duration = 5.0;
        s.truth_model = TruthModel::Integrated;
        s.init_error = InitError::zero();
        let run = run_closed_loop(&s, s.known_gravity()).unwrap();
        for row in &run.rows {
            let m = row.metrics.unwrap();
            assert!(
                m.as_array().iter().all(|e| *e < 1e-9),
                "t = {}: {m:?}",
                row.t
            );
        }
    }

    #[test]
    fn half_turn_start_warns() {
        let mut s = Scenario::reference();
        s.trajectory.duration = 0.1;
        s.init_error.attitude_axis = Vec3::x();
        s.init_error.attitude_angle = std::f64::consts::PI;
        let run = run_closed_loop(&s, s.known_gravity()).unwrap();
        assert_eq!(run.warnings.len(), 1);
    }

    #[test]
    fn summary_of_decaying_series() {
        let state = ObserverState::new(
            NavState::identity(),
            GravityMode::Adaptive,
            Vec3::zeros(),
            Vec3::zeros(),
        );
        let rows: Vec<Row> = (0..10)
            .map(|k| Row {
                t: k as f64,
                metrics: Some(Metrics {
                    attitude: 0.5f64.powi(k),
                    position: 1.0,
                    velocity: 0.0,
                    gravity: 0.0,
                }),
                state,
            })
            .collect();
        let s = summarize(&rows);
        // 0.5^7 = 0.0078 is the first value below 0.01
        assert_eq!(s.convergence_time[0], Some(7.0));
        assert_eq!(s.convergence_time[1], None);
        assert_eq!(s.convergence_time[2], Some(0.0));
        assert_eq!(s.steady_state_mse.unwrap().position, 1.0);
        assert_eq!(s.initial.unwrap().attitude, 1.0);
    }
}
