//! Built-in verification suites, runnable from a release binary.
//!
//! Each suite is deterministic: random cases come from a fixed-seed ChaCha
//! stream, so `--quick` and full runs are reproducible.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use navobs::lie::{dist_so3, expm5, rodrigues_exp, skew, upsilon, vex};
use navobs::measurement::{check_configuration, landmark_scatter};
use navobs::quat::{quat_to_rot, rot_to_quat};
use navobs::sim::{
    initial_state, run_closed_loop, simulate_sensors, InitError, NoiseSpec, Scenario, TruthModel,
};
use navobs::{LandmarkMap, Mat3, Mat5, Quat, QuatObserverState, Rotation, TangentElement, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelftestOptions {
    pub quick: bool,
    /// Run the closed-loop suites with the attitude correction sign flipped.
    pub inject_fault: bool,
}

impl SelftestOptions {
    fn samples(&self) -> usize {
        if self.quick {
            1_000
        } else {
            100_000
        }
    }

    fn oracle_samples(&self) -> usize {
        if self.quick {
            1_000
        } else {
            10_000
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub passed: bool,
    /// Worst observed value against its bound, or the failing check.
    pub detail: String,
    pub seconds: f64,
}

type Suite = fn(&SelftestOptions) -> (usize, Result<String, String>);

const SUITES: [(&str, Suite); 6] = [
    ("algebra", algebra),
    ("quaternion", quaternion),
    ("eigenvalue-bounds", eigenvalue_bounds),
    ("fixed-point", fixed_point),
    ("quaternion-matrix", quaternion_matrix),
    ("convergence", convergence),
];

/// Runs every suite (in parallel), prints the table to `out` and, with
/// `out_dir`, also writes it to `selftest.txt` there.
pub fn run_selftest(
    opts: &SelftestOptions,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Vec<SuiteResult>, Failure> {
    let results: Vec<SuiteResult> = SUITES
        .par_iter()
        .map(|(name, suite)| {
            let start = Instant::now();
            let (cases, outcome) = suite(opts);
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            SuiteResult {
                name,
                cases,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<20} {:>8} {:>6} {:>8}  detail",
        "suite", "cases", "result", "time"
    );
    for r in &results {
        let verdict = if r.passed { "pass" } else { "FAIL" };
        let _ = writeln!(
            table,
            "{:<20} {:>8} {:>6} {:>7.2}s  {}",
            r.name, r.cases, verdict, r.seconds, r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(
        table,
        "{} of {} suites passed",
        results.len() - failed,
        results.len()
    );

    let io_failure = |path: &Path, e| {
        Failure::runtime(navobs::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    out.write_all(table.as_bytes())
        .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        let path = dir.join("selftest.txt");
        std::fs::write(&path, &table).map_err(|e| io_failure(&path, e))?;
    }
    Ok(results)
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_7e57);
    rng.set_stream(stream);
    rng
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Uniformly distributed rotation from a normalized Gaussian 4-vector.
fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    Rotation::from_matrix(Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
    .expect("normalized quaternion gives a rotation")
}

/// Scaled 30-term Taylor series: `exp(A) = exp(A / 2^s)^(2^s)`.
fn series_exp(a: &Mat5) -> Mat5 {
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let mut term = Mat5::identity();
    let mut sum = Mat5::identity();
    for k in 1..=30 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

fn check(worst: f64, tol: f64, what: &str) -> Result<String, String> {
    let msg = format!("{what} {worst:.1e} (tol {tol:.0e})");
    if worst <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn algebra(opts: &SelftestOptions) -> (usize, Result<String, String>) {
    let n = opts.oracle_samples();
    let mut rng = rng(1);
    let (mut dist_err, mut exp_err, mut rod_err) = (0f64, 0f64, 0f64);
    for _ in 0..n {
        let x = normal3(&mut rng) * 10.0;
        if vex(&skew(&x)).ok() != Some(x) {
            return (
                n,
                Err(format!("vex(skew(x)) != x for x = {:?}", x.as_slice())),
            );
        }
        let r = random_rotation(&mut rng);
        let d = dist_so3(&r);
        if !(0.0..=1.0).contains(&d) {
            return (n, Err(format!("distance {d} outside [0, 1]")));
        }
        dist_err = dist_err.max((d - (Mat3::identity() - r.matrix()).norm_squared() / 8.0).abs());

        let u = TangentElement::new(
            normal3(&mut rng),
            normal3(&mut rng),
            normal3(&mut rng),
            rng.random(),
        );
        let dt: f64 = rng.random_range(0.0..1.0);
        let oracle = series_exp(&(u.to_matrix() * dt));
        let got = expm5(&u, dt);
        exp_err = exp_err.max((got - oracle).amax() / oracle.amax().max(1.0));
        let block = got.fixed_view::<3, 3>(0, 0).into_owned();
        rod_err = rod_err.max((rodrigues_exp(&u.omega, dt).matrix() - block).amax());
    }
    let result = check(dist_err, 1e-12, "distance")
        .and_then(|a| check(exp_err, 1e-10, "exp").map(|b| format!("{a}, {b}")))
        .and_then(|a| check(rod_err, 1e-12, "rodrigues").map(|b| format!("{a}, {b}")));
    (n, result)
}

fn quaternion(opts: &SelftestOptions) -> (usize, Result<String, String>) {
    let n = opts.oracle_samples();
    let mut rng = rng(2);
    let (mut round_trip, mut product, mut exp_err) = (0f64, 0f64, 0f64);
    for _ in 0..n {
        let (r1, r2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let (q1, q2) = (rot_to_quat(&r1), rot_to_quat(&r2));
        let back = quat_to_rot(&q1).expect("unit quaternion");
        round_trip = round_trip.max((back.matrix() - r1.matrix()).amax());
        let composed = quat_to_rot(&(q1 * q2)).expect("unit quaternion");
        product = product.max((composed.matrix() - (r1.matrix() * r2.matrix())).amax());
        let phi = normal3(&mut rng);
        let via_quat = quat_to_rot(&Quat::exp(&phi)).expect("unit quaternion");
        exp_err = exp_err.max((via_quat.matrix() - rodrigues_exp(&phi, 1.0).matrix()).amax());
    }
    let result = check(round_trip, 1e-12, "round trip")
        .and_then(|a| check(product, 1e-12, "product").map(|b| format!("{a}, {b}")))
        .and_then(|a| check(exp_err, 1e-12, "exp").map(|b| format!("{a}, {b}")));
    (n, result)
}

/// `lmin/2 (1 + Tr R) |MR|_I <= |Y(MR)|^2 <= 2 lmax |MR|_I` for random
/// observable landmark sets and attitude errors.
fn eigenvalue_bounds(opts: &SelftestOptions) -> (usize, Result<String, String>) {
    let n = opts.samples();
    let mut rng = rng(3);
    let mut violations = 0usize;
    let mut tightest = f64::INFINITY;
    let mut cases = 0;
    while cases < n {
        let count = rng.random_range(3..=8);
        let positions: Vec<Vec3> = (0..count)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-5.0..5.0)))
            .collect();
        let map = LandmarkMap::new(
            positions
                .iter()
                .enumerate()
                .map(|(i, p)| navobs::Landmark::new(i as u64, *p, rng.random_range(0.1..2.0)))
                .collect(),
        )
        .expect("valid landmarks");
        let report = check_configuration(&map);
        if report.violates_assumption {
            continue;
        }
        cases += 1;
        let m = landmark_scatter(&map);
        let r = random_rotation(&mut rng);
        let mr = m * r.matrix();
        let dist = 0.25 * (m * (Mat3::identity() - r.matrix())).trace();
        let y2 = upsilon(&mr).norm_squared();
        let lower = 0.5 * report.lambda_min_mbar * (1.0 + r.trace()) * dist;
        let upper = 2.0 * report.lambda_max_mbar * dist;
        let slack = 1e-12 * upper.max(1.0);
        if y2 < lower - slack || y2 > upper + slack {
            violations += 1;
        }
        if upper > 0.0 {
            tightest = tightest.min((y2 - lower).min(upper - y2) / upper);
        }
    }
    let msg = format!("{violations} violations, tightest margin {tightest:.1e}");
    (n, if violations == 0 { Ok(msg) } else { Err(msg) })
}

fn horizon(opts: &SelftestOptions, full: f64, quick: f64) -> f64 {
    if opts.quick {
        quick
    } else {
        full
    }
}

fn fixed_point(opts: &SelftestOptions) -> (usize, Result<String, String>) {
    let mut s = Scenario::reference();
    s.trajectory.duration = horizon(opts, 40.0, 5.0);
    s.truth_model = TruthModel::Integrated;
    s.init_error = InitError::zero();
    s.observer.invert_attitude_correction = opts.inject_fault;
    match run_closed_loop(&s, s.known_gravity()) {
        Ok(run) => {
            let worst = run
                .rows
                .iter()
                .filter_map(|r| r.metrics)
                .flat_map(|m| m.as_array())
                .fold(0f64, f64::max);
            (run.rows.len(), check(worst, 1e-9, "max error"))
        }
        Err(e) => (0, Err(e.to_string())),
    }
}

/// Matrix and quaternion forms of the observer on identical noisy inputs.
fn quaternion_matrix(opts: &SelftestOptions) -> (usize, Result<String, String>) {
    let steps = if opts.quick { 1_000 } else { 8_000 };
    let mut s = Scenario::reference();
    s.noise = NoiseSpec::reference(7);
    s.observer.invert_attitude_correction = opts.inject_fault;
    let run = || -> navobs::Result<(f64, f64)> {
        let log = simulate_sensors(&s)?;
        let stream = log.to_stream()?;
        let mut x = initial_state(
            &stream,
            &s.init_error,
            s.known_gravity(),
            s.sigma_init,
            s.g_init,
        )?;
        let mut q = QuatObserverState::from_matrix_state(&x);
        let (mut att, mut pv) = (0f64, 0f64);
        for step in stream.steps().iter().take(steps) {
            let (w, a, dt) = (&step.input.omega_m, &step.input.a_m, step.dt());
            x = s.observer.step(&x, w, a, &s.map, step.observation, dt)?;
            q = s
                .observer
                .step_quaternion(&q, w, a, &s.map, step.observation, dt)?;
            att = att.max(dist_so3(&(q.rotation() * x.xhat.r.transpose())));
            pv = pv.max((q.p - x.xhat.p).amax()).max((q.v - x.xhat.v).amax());
        }
        Ok((att, pv))
    };
    match run() {
        Ok((att, pv)) => (
            steps,
            check(att, 1e-8, "attitude")
                .and_then(|a| check(pv, 1e-7, "position/velocity").map(|b| format!("{a}, {b}"))),
        ),
        Err(e) => (0, Err(e.to_string())),
    }
}

/// Reference scenario from a 170 degree attitude error must converge.
fn convergence(opts: &SelftestOptions) -> (usize, Result<String, String>) {
    let mut s = Scenario::reference();
    s.trajectory.duration = horizon(opts, 40.0, 20.0);
    s.observer.invert_attitude_correction = opts.inject_fault;
    let run = match run_closed_loop(&s, s.known_gravity()) {
        Ok(run) => run,
        // a broken attitude law may blow the state up, which is a failure too
        Err(e) => return (0, Err(e.to_string())),
    };
    let m = run.summary.terminal.unwrap_or_default();
    let ok = m.attitude < 0.01 && m.position < 0.05 && m.velocity < 0.05;
    let msg = format!(
        "final attitude {:.1e}, position {:.1e} m, velocity {:.1e} m/s",
        m.attitude, m.position, m.velocity
    );
    (run.rows.len(), if ok { Ok(msg) } else { Err(msg) })
}
