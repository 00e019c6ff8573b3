use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use navobs::dataset::{
    align, check_observation_ids, load_imu_csv, load_landmarks, load_observations_csv,
    load_truth_csv, write_imu_csv, write_map_csv, write_metrics, write_observations_csv,
    write_trials, write_truth_csv, RunConfig,
};
use navobs::measurement::require_observable;
use navobs::sim::{
    initial_state, monte_carlo, run_stream, simulate_sensors, RunResult, TrialOutcome,
};
use navobs::Error;

use crate::{Failure, EXIT_CONFIG};

const METRIC_NAMES: [&str; 4] = [
    "attitude",
    "position [m]",
    "velocity [m/s]",
    "gravity [m/s^2]",
];

/// Outcome of one gravity mode of a `simulate` or `replay` run.
#[derive(Clone, Debug)]
pub struct ModeReport {
    pub label: &'static str,
    pub metrics_path: PathBuf,
    pub run: RunResult,
    /// Monte-Carlo batch, when more than one trial was requested.
    pub trials: Vec<TrialOutcome>,
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| {
        Failure::runtime(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })?;
    Ok(dir)
}

/// Simulates the configured scenario, writes the sensor logs and one
/// metrics file per gravity mode, and prints a summary.
pub fn run_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ModeReport>, Failure> {
    let scenario = &cfg.scenario;
    let log = simulate_sensors(scenario).map_err(Failure::runtime)?;
    let dir = output_dir(cfg)?;
    write_imu_csv(&dir.join("imu.csv"), &log.imu).map_err(Failure::runtime)?;
    write_observations_csv(&dir.join("observations.csv"), &log.observations)
        .map_err(Failure::runtime)?;
    write_map_csv(&dir.join("map.csv"), &scenario.map).map_err(Failure::runtime)?;
    write_truth_csv(&dir.join("truth.csv"), &log.truth).map_err(Failure::runtime)?;

    let stream = log.to_stream().map_err(Failure::runtime)?;
    let mut reports = Vec::new();
    for (label, mode) in cfg.mode.modes(scenario.gravity) {
        let init = initial_state(
            &stream,
            &scenario.init_error,
            mode,
            scenario.sigma_init,
            scenario.g_init,
        )
        .map_err(Failure::runtime)?;
        let run = run_stream(
            &stream,
            &scenario.map,
            &scenario.observer,
            init,
            &scenario.gravity,
        )
        .map_err(Failure::runtime)?;
        let metrics_path = dir.join(format!("metrics_{label}.csv"));
        write_metrics(&metrics_path, &run.rows).map_err(Failure::runtime)?;

        let trials = if cfg.trials > 1 {
            let first = scenario.noise.seed;
            let seeds: Vec<u64> = (first..first + cfg.trials).collect();
            let batch = monte_carlo(scenario, mode, &seeds).map_err(Failure::runtime)?;
            write_trials(&dir.join(format!("trials_{label}.csv")), &batch)
                .map_err(Failure::runtime)?;
            batch
        } else {
            Vec::new()
        };
        reports.push(ModeReport {
            label,
            metrics_path,
            run,
            trials,
        });
    }
    print_summary(out, "simulate", &reports).map_err(stdout_failure)?;
    Ok(reports)
}

/// Runs the observer over the logs named in the config. Without a truth
/// log the metrics files carry the estimate columns only.
pub fn run_replay(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ModeReport>, Failure> {
    let inputs = &cfg.replay;
    let (Some(imu_path), Some(obs_path)) = (&inputs.imu, &inputs.observations) else {
        return Err(Failure::new(
            EXIT_CONFIG,
            "replay needs `imu_path` and `obs_path` in the config",
        ));
    };
    let scenario = &cfg.scenario;
    let imu = load_imu_csv(imu_path).map_err(Failure::runtime)?;
    let (map, observations) = match &inputs.map {
        Some(map_path) => {
            let (map, obs, _) = load_landmarks(map_path, obs_path).map_err(Failure::runtime)?;
            (map, obs)
        }
        None => {
            let obs = load_observations_csv(obs_path).map_err(Failure::runtime)?;
            check_observation_ids(&scenario.map, &obs).map_err(Failure::runtime)?;
            (scenario.map.clone(), obs)
        }
    };
    require_observable(&map).map_err(Failure::runtime)?;
    let truth = inputs
        .truth
        .as_deref()
        .map(load_truth_csv)
        .transpose()
        .map_err(Failure::runtime)?;
    let stream = align(imu, observations, truth).map_err(Failure::runtime)?;

    let dir = output_dir(cfg)?;
    let mut reports = Vec::new();
    for (label, mode) in cfg.mode.modes(scenario.gravity) {
        let init = initial_state(
            &stream,
            &scenario.init_error,
            mode,
            scenario.sigma_init,
            scenario.g_init,
        )
        .map_err(Failure::runtime)?;
        let run = run_stream(&stream, &map, &scenario.observer, init, &scenario.gravity)
            .map_err(Failure::runtime)?;
        let metrics_path = dir.join(format!("metrics_{label}.csv"));
        write_metrics(&metrics_path, &run.rows).map_err(Failure::runtime)?;
        reports.push(ModeReport {
            label,
            metrics_path,
            run,
            trials: Vec::new(),
        });
    }
    print_summary(out, "replay", &reports).map_err(stdout_failure)?;
    Ok(reports)
}

fn stdout_failure(e: std::io::Error) -> Failure {
    Failure::runtime(Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

fn print_summary(
    out: &mut dyn Write,
    command: &str,
    reports: &[ModeReport],
) -> std::io::Result<()> {
    for r in reports {
        let rows = &r.run.rows;
        let (t0, t1) = (rows[0].t, rows[rows.len() - 1].t);
        writeln!(out, "{command} [{}]", r.label)?;
        writeln!(out, "  steps       {:>12}", rows.len() - 1)?;
        writeln!(out, "  horizon     {:>12.3} s", t1 - t0)?;
        writeln!(out, "  metrics     {}", r.metrics_path.display())?;
        let s = &r.run.summary;
        match (s.initial, s.terminal) {
            (Some(initial), Some(terminal)) => {
                writeln!(
                    out,
                    "  {:<16} {:>12} {:>12} {:>12}",
                    "error", "initial", "final", "converged"
                )?;
                let rows = initial
                    .as_array()
                    .into_iter()
                    .zip(terminal.as_array())
                    .zip(s.convergence_time);
                for (name, ((a, b), tc)) in METRIC_NAMES.iter().zip(rows) {
                    let tc = tc.map_or("never".to_string(), |t| format!("{:.3} s", t - t0));
                    writeln!(out, "  {name:<16} {a:>12.4e} {b:>12.4e} {tc:>12}")?;
                }
            }
            _ => {
                let x = &r.run.final_state;
                let v = |v: &navobs::Vec3| format!("[{:.4}, {:.4}, {:.4}]", v.x, v.y, v.z);
                writeln!(out, "  final position  {}", v(&x.xhat.p))?;
                writeln!(out, "  final velocity  {}", v(&x.xhat.v))?;
                writeln!(out, "  final gravity   {}", v(&x.g_hat))?;
            }
        }
        if !r.trials.is_empty() {
            let n = r.trials.len() as f64;
            let mut mean = [0.0; 4];
            let mut mean_sq = [0.0; 4];
            for t in &r.trials {
                for (j, e) in t.terminal().as_array().into_iter().enumerate() {
                    mean[j] += e / n;
                    mean_sq[j] += e * e / n;
                }
            }
            let (first, last) = (r.trials[0].seed, r.trials[r.trials.len() - 1].seed);
            writeln!(
                out,
                "  monte carlo {:>12} trials, seeds {first}..={last}",
                r.trials.len()
            )?;
            writeln!(
                out,
                "  {:<16} {:>12} {:>12}",
                "final error", "mean", "mean square"
            )?;
            for (name, (m, m2)) in METRIC_NAMES.iter().zip(mean.into_iter().zip(mean_sq)) {
                writeln!(out, "  {name:<16} {m:>12.4e} {m2:>12.4e}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
