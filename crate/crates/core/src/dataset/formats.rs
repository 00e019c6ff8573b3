//! CSV layouts for IMU, ground truth, landmark maps, observations and metrics.
//!
//! Timestamps on disk are integer nanoseconds. Floats are written in the
//! shortest decimal form that parses back to the same value, so every
//! layout round-trips exactly.

use std::fs::File;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use crate::error::{Error, Result};
use crate::lie::Vec3;
use crate::measurement::{
    check_configuration, ConfigReport, Landmark, LandmarkMap, LandmarkObservation, Reading,
};
use crate::observer::Metrics;
use crate::quat::Quat;
use crate::sim::{ns_to_s, s_to_ns, GroundTruthSample, ImuSample, Row, TrialOutcome};

pub const IMU_HEADER: [&str; 7] = ["t_ns", "wx", "wy", "wz", "ax", "ay", "az"];
pub const TRUTH_HEADER: [&str; 11] = [
    "t_ns", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz",
];
pub const MAP_HEADER: [&str; 5] = ["id", "px", "py", "pz", "s"];
pub const OBS_HEADER: [&str; 5] = ["t_ns", "id", "yx", "yy", "yz"];
pub const METRICS_ERROR_HEADER: [&str; 5] = ["t", "att_err", "pos_err", "vel_err", "grav_err"];
pub const TRIALS_HEADER: [&str; 5] = ["seed", "att_err", "pos_err", "vel_err", "grav_err"];
pub const METRICS_ESTIMATE_HEADER: [&str; 16] = [
    "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "gx", "gy", "gz", "sx", "sy", "sz",
];

/// Data rows of a CSV file with a fixed column count, after its header.
struct Table {
    path: PathBuf,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    /// Reads `path`, checking that the first line is a header with `columns`
    /// fields whose first name is one of `first`.
    fn read(path: &Path, columns: usize, first: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut records = reader.records();
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let header = match records.next() {
            None => return Err(parse_err(1, "missing header".into())),
            Some(r) => r.map_err(|e| csv_error(path, e))?,
        };
        let name = header.get(0).unwrap_or("").trim_start_matches('#').trim();
        if header.len() != columns || !first.iter().any(|f| name.starts_with(f)) {
            return Err(parse_err(
                1,
                format!(
                    "expected a header with {columns} columns starting with `{}`",
                    first[0]
                ),
            ));
        }
        let mut rows = Vec::new();
        for record in records {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() != columns {
                return Err(parse_err(
                    line,
                    format!("expected {columns} fields, found {}", record.len()),
                ));
            }
            rows.push((line, record));
        }
        Ok(Self {
            path: path.to_path_buf(),
            rows,
        })
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn f64_at(&self, line: u64, record: &StringRecord, i: usize, column: &str) -> Result<f64> {
        let field = &record[i];
        field
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(line, format!("column `{column}`: invalid number `{field}`")))
    }

    fn i64_at(&self, line: u64, record: &StringRecord, i: usize, column: &str) -> Result<i64> {
        let field = &record[i];
        field.parse::<i64>().map_err(|_| {
            self.err(
                line,
                format!("column `{column}`: invalid integer `{field}`"),
            )
        })
    }

    fn vec3_at(&self, line: u64, record: &StringRecord, i: usize, names: &[&str]) -> Result<Vec3> {
        Ok(Vec3::new(
            self.f64_at(line, record, i, names[i])?,
            self.f64_at(line, record, i + 1, names[i + 1])?,
            self.f64_at(line, record, i + 2, names[i + 2])?,
        ))
    }

    /// Checks `t_ns` is strictly increasing (or non-decreasing when `allow_equal`).
    fn check_time(&self, line: u64, prev: Option<i64>, t_ns: i64, allow_equal: bool) -> Result<()> {
        match prev {
            Some(p) if t_ns < p || (t_ns == p && !allow_equal) => Err(Error::NonMonotonicTime {
                path: self.path.clone(),
                line,
            }),
            _ => Ok(()),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Accepts the plain layout and the EuRoC `#timestamp [ns],w_RS_S_x ...` one.
pub fn load_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let table = Table::read(path, IMU_HEADER.len(), &["t_ns", "timestamp"])?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut prev = None;
    for (line, r) in &table.rows {
        let t_ns = table.i64_at(*line, r, 0, "t_ns")?;
        table.check_time(*line, prev, t_ns, false)?;
        prev = Some(t_ns);
        out.push(ImuSample {
            t: ns_to_s(t_ns),
            omega_m: table.vec3_at(*line, r, 1, &IMU_HEADER)?,
            a_m: table.vec3_at(*line, r, 4, &IMU_HEADER)?,
        });
    }
    Ok(out)
}

pub fn load_truth_csv(path: &Path) -> Result<Vec<GroundTruthSample>> {
    let table = Table::read(path, TRUTH_HEADER.len(), &["t_ns", "timestamp"])?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut prev = None;
    for (line, r) in &table.rows {
        let t_ns = table.i64_at(*line, r, 0, "t_ns")?;
        table.check_time(*line, prev, t_ns, false)?;
        prev = Some(t_ns);
        let q = Quat::new(
            table.f64_at(*line, r, 1, "qw")?,
            table.vec3_at(*line, r, 2, &TRUTH_HEADER)?,
        );
        if !q.is_unit() {
            return Err(table.err(*line, format!("quaternion norm {} is not 1", q.norm())));
        }
        out.push(GroundTruthSample {
            t: ns_to_s(t_ns),
            q,
            p: table.vec3_at(*line, r, 5, &TRUTH_HEADER)?,
            v: table.vec3_at(*line, r, 8, &TRUTH_HEADER)?,
        });
    }
    Ok(out)
}

pub fn load_map_csv(path: &Path) -> Result<LandmarkMap> {
    let table = Table::read(path, MAP_HEADER.len(), &["id"])?;
    let mut landmarks = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let id = r[0]
            .parse::<u64>()
            .map_err(|_| table.err(*line, format!("column `id`: invalid id `{}`", &r[0])))?;
        landmarks.push(Landmark::new(
            id,
            table.vec3_at(*line, r, 1, &MAP_HEADER)?,
            table.f64_at(*line, r, 4, "s")?,
        ));
    }
    LandmarkMap::new(landmarks)
}

/// Rows sharing a timestamp form one epoch; epochs must be in time order.
pub fn load_observations_csv(path: &Path) -> Result<Vec<LandmarkObservation>> {
    let table = Table::read(path, OBS_HEADER.len(), &["t_ns", "timestamp"])?;
    let mut out: Vec<LandmarkObservation> = Vec::new();
    let mut prev = None;
    for (line, r) in &table.rows {
        let t_ns = table.i64_at(*line, r, 0, "t_ns")?;
        table.check_time(*line, prev, t_ns, true)?;
        let id = r[1]
            .parse::<u64>()
            .map_err(|_| table.err(*line, format!("column `id`: invalid id `{}`", &r[1])))?;
        let reading = Reading {
            id,
            y: table.vec3_at(*line, r, 2, &OBS_HEADER)?,
        };
        match out.last_mut() {
            Some(o) if prev == Some(t_ns) => o.readings.push(reading),
            _ => out.push(LandmarkObservation {
                t: ns_to_s(t_ns),
                readings: vec![reading],
            }),
        }
        prev = Some(t_ns);
    }
    Ok(out)
}

/// Map and observations together, with every observed id checked against
/// the map and the geometry report attached.
pub fn load_landmarks(
    map_path: &Path,
    obs_path: &Path,
) -> Result<(LandmarkMap, Vec<LandmarkObservation>, ConfigReport)> {
    let map = load_map_csv(map_path)?;
    let observations = load_observations_csv(obs_path)?;
    check_observation_ids(&map, &observations)?;
    let report = check_configuration(&map);
    Ok((map, observations, report))
}

pub fn check_observation_ids(
    map: &LandmarkMap,
    observations: &[LandmarkObservation],
) -> Result<()> {
    let unknown = observations
        .iter()
        .flat_map(|o| &o.readings)
        .find(|r| map.get(r.id).is_none());
    match unknown {
        Some(r) => Err(Error::UnknownLandmarkId(r.id)),
        None => Ok(()),
    }
}

/// CSV writer whose errors carry the file path.
struct Out {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Out {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = Self {
            path: path.to_path_buf(),
            writer: WriterBuilder::new().has_headers(false).from_writer(file),
        };
        out.row(header.iter().map(|s| s.to_string()))?;
        Ok(out)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.writer
            .write_record(fields)
            .map_err(|e| csv_error(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn vec3(v: &Vec3) -> [String; 3] {
    [num(v.x), num(v.y), num(v.z)]
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let mut out = Out::create(path, &IMU_HEADER)?;
    for s in samples {
        out.row(
            std::iter::once(s_to_ns(s.t).to_string())
                .chain(vec3(&s.omega_m))
                .chain(vec3(&s.a_m)),
        )?;
    }
    out.finish()
}

pub fn write_truth_csv(path: &Path, samples: &[GroundTruthSample]) -> Result<()> {
    let mut out = Out::create(path, &TRUTH_HEADER)?;
    for s in samples {
        out.row(
            [s_to_ns(s.t).to_string(), num(s.q.q0)]
                .into_iter()
                .chain(vec3(&s.q.q))
                .chain(vec3(&s.p))
                .chain(vec3(&s.v)),
        )?;
    }
    out.finish()
}

pub fn write_map_csv(path: &Path, map: &LandmarkMap) -> Result<()> {
    let mut out = Out::create(path, &MAP_HEADER)?;
    for l in map.landmarks() {
        out.row(
            std::iter::once(l.id.to_string())
                .chain(vec3(&l.position))
                .chain(std::iter::once(num(l.confidence))),
        )?;
    }
    out.finish()
}

pub fn write_observations_csv(path: &Path, observations: &[LandmarkObservation]) -> Result<()> {
    let mut out = Out::create(path, &OBS_HEADER)?;
    for o in observations {
        let t_ns = s_to_ns(o.t).to_string();
        for r in &o.readings {
            out.row(
                [t_ns.clone(), r.id.to_string()]
                    .into_iter()
                    .chain(vec3(&r.y)),
            )?;
        }
    }
    out.finish()
}

/// Metrics time series. With ground truth the four error columns follow
/// `t`; the estimate columns come after. Rows without truth leave the error
/// columns empty. Without any truth the error columns are omitted.
pub fn write_metrics(path: &Path, rows: &[Row]) -> Result<()> {
    let with_errors = rows.iter().any(|r| r.metrics.is_some());
    let header: Vec<&str> = if with_errors {
        METRICS_ERROR_HEADER
            .iter()
            .chain(&METRICS_ESTIMATE_HEADER)
            .copied()
            .collect()
    } else {
        std::iter::once("t")
            .chain(METRICS_ESTIMATE_HEADER)
            .collect()
    };
    let mut out = Out::create(path, &header)?;
    for row in rows {
        let mut fields = vec![num(row.t)];
        if with_errors {
            match row.metrics {
                Some(m) => fields.extend(m.as_array().map(num)),
                None => fields.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        let s = &row.state;
        let q = crate::quat::rot_to_quat(&s.xhat.r);
        fields.extend(vec3(&s.xhat.p));
        fields.extend(vec3(&s.xhat.v));
        fields.extend(q.to_array().map(num));
        fields.extend(vec3(&s.g_hat));
        fields.extend(vec3(&s.sigma_hat));
        out.row(fields)?;
    }
    out.finish()
}

/// Terminal errors of a Monte-Carlo batch, one row per seed.
pub fn write_trials(path: &Path, trials: &[TrialOutcome]) -> Result<()> {
    let mut out = Out::create(path, &TRIALS_HEADER)?;
    for t in trials {
        out.row(std::iter::once(t.seed.to_string()).chain(t.terminal().as_array().map(num)))?;
    }
    out.finish()
}

/// One parsed line of a metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub t: f64,
    pub metrics: Option<Metrics>,
    /// The sixteen estimate columns in file order.
    pub estimate: Vec<f64>,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let full = METRICS_ERROR_HEADER.len() + METRICS_ESTIMATE_HEADER.len();
    let short = 1 + METRICS_ESTIMATE_HEADER.len();
    let table = Table::read(path, full, &["t"]).or_else(|_| Table::read(path, short, &["t"]))?;
    let with_errors = table.rows.first().is_none_or(|(_, r)| r.len() == full);
    let offset = if with_errors { 5 } else { 1 };
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let t = table.f64_at(*line, r, 0, "t")?;
        let metrics = if with_errors && !r[1].is_empty() {
            let e: Vec<f64> = (1..5)
                .map(|i| table.f64_at(*line, r, i, METRICS_ERROR_HEADER[i]))
                .collect::<Result<_>>()?;
            Some(Metrics {
                attitude: e[0],
                position: e[1],
                velocity: e[2],
                gravity: e[3],
            })
        } else {
            None
        };
        let estimate = (0..METRICS_ESTIMATE_HEADER.len())
            .map(|i| table.f64_at(*line, r, offset + i, METRICS_ESTIMATE_HEADER[i]))
            .collect::<Result<_>>()?;
        out.push(MetricsRecord {
            t,
            metrics,
            estimate,
        });
    }
    Ok(out)
}
