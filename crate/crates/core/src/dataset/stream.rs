//! Time alignment of IMU, landmark and ground-truth streams.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::measurement::LandmarkObservation;
use crate::sim::{GroundTruthSample, ImuSample};

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Imu(ImuSample),
    Landmark(LandmarkObservation),
    Truth(GroundTruthSample),
}

impl Event {
    pub fn t(&self) -> f64 {
        match self {
            Event::Imu(s) => s.t,
            Event::Landmark(o) => o.t,
            Event::Truth(g) => g.t,
        }
    }

    /// Order among events with equal timestamps: the IMU sample closing an
    /// interval comes first, then the landmark epoch that corrects it, then
    /// the truth it is scored against.
    fn rank(&self) -> u8 {
        match self {
            Event::Imu(_) => 0,
            Event::Landmark(_) => 1,
            Event::Truth(_) => 2,
        }
    }
}

/// Merged, time-sorted event sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignedStream {
    pub events: Vec<Event>,
}

/// Stable merge of individually sorted streams.
pub fn align(
    imu: Vec<ImuSample>,
    observations: Vec<LandmarkObservation>,
    truth: Option<Vec<GroundTruthSample>>,
) -> Result<AlignedStream> {
    if imu.len() < 2 {
        return Err(Error::EmptyStream(
            "at least two IMU samples are required".into(),
        ));
    }
    if observations.is_empty() {
        return Err(Error::EmptyStream("no landmark observations".into()));
    }
    let mut events: Vec<Event> = imu
        .into_iter()
        .map(Event::Imu)
        .chain(observations.into_iter().map(Event::Landmark))
        .chain(truth.into_iter().flatten().map(Event::Truth))
        .collect();
    // sort_by is stable, so equal (t, rank) keep their input order
    events.sort_by(|a, b| {
        a.t()
            .partial_cmp(&b.t())
            .unwrap_or(Ordering::Equal)
            .then(a.rank().cmp(&b.rank()))
    });
    Ok(AlignedStream { events })
}

/// One observer step: the IMU input held over `(t_start, t_end]`, the
/// latest landmark epoch inside that interval and the truth at `t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamStep<'a> {
    pub input: &'a ImuSample,
    pub t_end: f64,
    pub observation: Option<&'a LandmarkObservation>,
    pub truth: Option<&'a GroundTruthSample>,
}

impl StreamStep<'_> {
    pub fn dt(&self) -> f64 {
        self.t_end - self.input.t
    }
}

impl AlignedStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_imu(&self) -> Option<&ImuSample> {
        self.events.iter().find_map(|e| match e {
            Event::Imu(s) => Some(s),
            _ => None,
        })
    }

    /// Truth sample stamped exactly at the first IMU sample, if any.
    pub fn initial_truth(&self) -> Option<&GroundTruthSample> {
        let t0 = self.first_imu()?.t;
        self.events.iter().find_map(|e| match e {
            Event::Truth(g) if g.t == t0 => Some(g),
            _ => None,
        })
    }

    /// Observer steps between consecutive IMU samples. Landmark epochs at or
    /// before the first IMU sample have no interval and are skipped.
    pub fn steps(&self) -> Vec<StreamStep<'_>> {
        let mut steps = Vec::new();
        let mut last_imu: Option<&ImuSample> = None;
        let mut pending: Option<StreamStep<'_>> = None;
        let mut carried: Option<&LandmarkObservation> = None;
        for event in &self.events {
            match event {
                Event::Imu(s) => {
                    steps.extend(pending.take());
                    if let Some(prev) = last_imu {
                        pending = Some(StreamStep {
                            input: prev,
                            t_end: s.t,
                            observation: carried.take(),
                            truth: None,
                        });
                    }
                    carried = None;
                    last_imu = Some(s);
                }
                Event::Landmark(o) => match pending.as_mut() {
                    Some(p) if o.t == p.t_end => p.observation = Some(o),
                    _ if last_imu.is_some_and(|prev| o.t > prev.t) => carried = Some(o),
                    _ => {}
                },
                Event::Truth(g) => {
                    if let Some(p) = pending.as_mut().filter(|p| p.t_end == g.t) {
                        p.truth = Some(g);
                    }
                }
            }
        }
        steps.extend(pending);
        steps
    }
}
