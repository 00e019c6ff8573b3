//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, unknown keys are errors and
//! missing keys keep their defaults. Vectors are written `x, y, z`; relative
//! paths are resolved against the directory of the config file.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lie::Vec3;
use crate::measurement::LandmarkMap;
use crate::observer::{GravityMode, InnovationPoint};
use crate::sim::{
    reference_landmarks, NoiseProfile, NoiseSpec, Scenario, Spline, TrajectoryKind, TrajectorySpec,
    TruthModel, DEFAULT_CONFIDENCE,
};

use super::formats::load_map_csv;

/// Which gravity modes a run covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModeSelection {
    #[default]
    Known,
    Adaptive,
    Both,
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-gravity" => Ok(Self::Known),
            "adaptive-gravity" => Ok(Self::Adaptive),
            "both" => Ok(Self::Both),
            _ => Err(Error::validation(
                "mode",
                format!("expected known-gravity, adaptive-gravity or both, got `{s}`"),
            )),
        }
    }
}

impl ModeSelection {
    /// `(label, mode)` pairs in run order.
    pub fn modes(&self, gravity: Vec3) -> Vec<(&'static str, GravityMode)> {
        let known = ("known-gravity", GravityMode::Known(gravity));
        let adaptive = ("adaptive-gravity", GravityMode::Adaptive);
        match self {
            Self::Known => vec![known],
            Self::Adaptive => vec![adaptive],
            Self::Both => vec![known, adaptive],
        }
    }
}

/// Log files for replay.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayInputs {
    pub imu: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Set when the map came from a file rather than inline positions.
    pub map: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub mode: ModeSelection,
    /// Monte-Carlo trials, seeds `seed .. seed + trials`.
    pub trials: u64,
    pub replay: ReplayInputs,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut scenario = Scenario::reference();
        scenario.noise = NoiseSpec::reference(0);
        Self {
            scenario,
            mode: ModeSelection::Known,
            trials: 1,
            replay: ReplayInputs::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "k_w",
    "k_v",
    "k_a",
    "gamma_sigma",
    "k_sigma",
    "gamma_g",
    "mu",
    "sigma_init",
    "g_init",
    "gravity",
    "mode",
    "innovation",
    "trajectory",
    "duration",
    "center",
    "amplitude",
    "omega",
    "tilt",
    "radius",
    "rate",
    "position",
    "yaw_deg",
    "waypoints",
    "truth_model",
    "imu_rate",
    "landmark_rate",
    "std_omega",
    "std_accel",
    "noise_profile",
    "noise_amplitude",
    "noise_period",
    "seed",
    "trials",
    "landmark_noise",
    "landmarks",
    "landmark_confidence",
    "landmark_map",
    "init_attitude_axis",
    "init_attitude_angle_deg",
    "init_position_error",
    "init_velocity_error",
    "imu_path",
    "obs_path",
    "truth_path",
    "output_dir",
];

/// Keys that only make sense for some trajectory kinds.
const TRAJECTORY_KEYS: &[(&str, &[&str])] = &[
    ("center", &["lissajous", "circle"]),
    ("amplitude", &["lissajous"]),
    ("omega", &["lissajous"]),
    ("tilt", &["lissajous"]),
    ("radius", &["circle"]),
    ("rate", &["circle"]),
    ("position", &["hover"]),
    ("yaw_deg", &["hover", "waypoints"]),
    ("waypoints", &["waypoints"]),
];

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config_str(&text, path, base)
}

/// `path` only labels errors; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, path: &Path, base: &Path) -> Result<RunConfig> {
    let mut entries: Vec<(u64, &str, &str)> = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected `key = value`, found `{content}`"),
            });
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::ParseKey {
                path: path.to_path_buf(),
                line,
                key: key.to_string(),
            });
        }
        if !seen.insert(key) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        entries.push((line, key, value.trim()));
    }
    let entries = Entries(entries);
    let get = |k: &str| entries.get(k);

    let mut cfg = RunConfig::default();
    let s = &mut cfg.scenario;
    let gains = &mut s.observer.gains;
    for (key, slot) in [
        ("k_w", &mut gains.k_w),
        ("k_v", &mut gains.k_v),
        ("k_a", &mut gains.k_a),
        ("gamma_sigma", &mut gains.gamma_sigma),
        ("k_sigma", &mut gains.k_sigma),
        ("gamma_g", &mut gains.gamma_g),
        ("mu", &mut gains.mu),
    ] {
        if let Some(v) = get(key) {
            *slot = positive(key, v)?;
        }
    }
    if let Some(v) = get("sigma_init") {
        s.sigma_init = vector("sigma_init", v)?;
    }
    if let Some(v) = get("g_init") {
        s.g_init = vector("g_init", v)?;
    }
    if let Some(v) = get("gravity") {
        s.gravity = vector("gravity", v)?;
    }
    if let Some(v) = get("mode") {
        cfg.mode = v.parse()?;
    }
    if let Some(v) = get("innovation") {
        s.observer.innovation = match v {
            "predicted" => InnovationPoint::Predicted,
            "gravity-compensated" => InnovationPoint::GravityCompensated,
            _ => {
                return Err(Error::validation(
                    "innovation",
                    "expected predicted or gravity-compensated",
                ))
            }
        };
    }
    if let Some(v) = get("truth_model") {
        s.truth_model = match v {
            "analytic" => TruthModel::Analytic,
            "integrated" => TruthModel::Integrated,
            _ => {
                return Err(Error::validation(
                    "truth_model",
                    "expected analytic or integrated",
                ))
            }
        };
    }

    let duration = match get("duration") {
        Some(v) => positive("duration", v)?,
        None => s.trajectory.duration,
    };
    s.trajectory = trajectory(&entries, duration)?;

    if let Some(v) = get("imu_rate") {
        s.imu_rate = positive("imu_rate", v)?;
    }
    if let Some(v) = get("landmark_rate") {
        s.landmark_rate = positive("landmark_rate", v)?;
    }
    if let Some(v) = get("std_omega") {
        s.noise.std_omega = non_negative("std_omega", v)?;
    }
    if let Some(v) = get("std_accel") {
        s.noise.std_accel = non_negative("std_accel", v)?;
    }
    s.noise.profile = match get("noise_profile").unwrap_or("constant") {
        "constant" => NoiseProfile::Constant,
        "sinusoidal" => NoiseProfile::Sinusoidal {
            amplitude: get("noise_amplitude")
                .map_or(Ok(0.5), |v| non_negative("noise_amplitude", v))?,
            period: get("noise_period").map_or(Ok(10.0), |v| positive("noise_period", v))?,
        },
        other => {
            return Err(Error::validation(
                "noise_profile",
                format!("expected constant or sinusoidal, got `{other}`"),
            ))
        }
    };
    if let Some(v) = get("seed") {
        s.noise.seed = v
            .parse()
            .map_err(|_| Error::validation("seed", "expected a non-negative integer"))?;
    }
    if let Some(v) = get("trials") {
        cfg.trials = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::validation("trials", "expected a positive integer"))?;
    }
    if let Some(v) = get("landmark_noise") {
        s.landmark_noise = non_negative("landmark_noise", v)?;
    }

    let mut map_path = None;
    let confidence = match get("landmark_confidence") {
        Some(v) => positive("landmark_confidence", v)?,
        None => DEFAULT_CONFIDENCE,
    };
    s.map = match (get("landmarks"), get("landmark_map")) {
        (Some(_), Some(_)) => {
            return Err(Error::validation(
                "landmarks",
                "give either inline landmarks or landmark_map, not both",
            ))
        }
        (Some(v), None) => LandmarkMap::from_positions(&vector_list("landmarks", v)?, confidence)?,
        (None, Some(v)) => {
            let p = existing(base, v)?;
            map_path = Some(p.clone());
            load_map_csv(&p)?
        }
        (None, None) => LandmarkMap::from_positions(&reference_landmarks(), confidence)?,
    };

    let init = &mut s.init_error;
    if let Some(v) = get("init_attitude_axis") {
        init.attitude_axis = vector("init_attitude_axis", v)?;
        if init.attitude_axis.norm() == 0.0 {
            return Err(Error::validation("init_attitude_axis", "must be non-zero"));
        }
    }
    if let Some(v) = get("init_attitude_angle_deg") {
        init.attitude_angle = number("init_attitude_angle_deg", v)?.to_radians();
    }
    if let Some(v) = get("init_position_error") {
        init.position = vector("init_position_error", v)?;
    }
    if let Some(v) = get("init_velocity_error") {
        init.velocity = vector("init_velocity_error", v)?;
    }

    cfg.replay = ReplayInputs {
        imu: get("imu_path").map(|v| existing(base, v)).transpose()?,
        observations: get("obs_path").map(|v| existing(base, v)).transpose()?,
        truth: get("truth_path").map(|v| existing(base, v)).transpose()?,
        map: map_path,
    };
    if let Some(v) = get("output_dir") {
        cfg.output_dir = base.join(v);
    }
    Ok(cfg)
}

struct Entries<'a>(Vec<(u64, &'a str, &'a str)>);

impl<'a> Entries<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.0.iter().find(|e| e.1 == key).map(|e| e.2)
    }
}

fn trajectory(entries: &Entries<'_>, duration: f64) -> Result<TrajectorySpec> {
    let get = |k: &str| entries.get(k);
    let kind_name = get("trajectory").unwrap_or("lissajous");
    for (key, kinds) in TRAJECTORY_KEYS {
        if get(key).is_some() && !kinds.contains(&kind_name) {
            return Err(Error::validation(
                key,
                format!("does not apply to trajectory `{kind_name}`"),
            ));
        }
    }
    let vec_or = |key: &str, default: Vec3| get(key).map_or(Ok(default), |v| vector(key, v));
    let num_or = |key: &str, default: f64| get(key).map_or(Ok(default), |v| number(key, v));
    let center = vec_or("center", Vec3::new(5.0, 5.0, 2.0))?;
    let kind = match kind_name {
        "lissajous" => TrajectoryKind::Lissajous {
            center,
            amplitude: vec_or("amplitude", Vec3::new(3.0, 2.0, 0.5))?,
            omega: num_or("omega", TAU / 20.0)?,
            tilt: num_or("tilt", 0.1)?,
        },
        "circle" => TrajectoryKind::Circle {
            center,
            radius: num_or("radius", 3.0)?,
            rate: num_or("rate", 0.5)?,
        },
        "hover" => TrajectoryKind::Hover {
            position: vec_or("position", center)?,
            yaw: num_or("yaw_deg", 0.0)?.to_radians(),
        },
        "waypoints" => {
            let Some(v) = get("waypoints") else {
                return Err(Error::validation(
                    "waypoints",
                    "required for trajectory `waypoints`",
                ));
            };
            let mut times = Vec::new();
            let mut points = Vec::new();
            for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let (t, p) = item.split_once(':').ok_or_else(|| {
                    Error::validation("waypoints", format!("expected `t: x, y, z`, got `{item}`"))
                })?;
                times.push(number("waypoints", t.trim())?);
                points.push(vector("waypoints", p)?);
            }
            TrajectoryKind::Waypoints(Spline::new(
                times,
                points,
                num_or("yaw_deg", 0.0)?.to_radians(),
            )?)
        }
        other => {
            return Err(Error::validation(
                "trajectory",
                format!("expected lissajous, circle, hover or waypoints, got `{other}`"),
            ))
        }
    };
    let spec = TrajectorySpec { kind, duration };
    spec.validate()?;
    Ok(spec)
}

fn number(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::validation(key, format!("expected a number, got `{v}`")))
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x = number(key, v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::validation(key, format!("must be positive, got {x}")))
    }
}

fn non_negative(key: &str, v: &str) -> Result<f64> {
    let x = number(key, v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(Error::validation(
            key,
            format!("must be non-negative, got {x}"),
        ))
    }
}

fn vector(key: &str, v: &str) -> Result<Vec3> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::validation(
            key,
            format!("expected `x, y, z`, got `{}`", v.trim()),
        ));
    }
    Ok(Vec3::new(
        number(key, parts[0])?,
        number(key, parts[1])?,
        number(key, parts[2])?,
    ))
}

fn vector_list(key: &str, v: &str) -> Result<Vec<Vec3>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| vector(key, s))
        .collect()
}

fn existing(base: &Path, v: &str) -> Result<PathBuf> {
    let p = base.join(v);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}
