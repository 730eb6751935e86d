//! Core data types shared by every stage of the pipeline: detections,
//! tracklets, the tracker configuration, and per-frame assignment results.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{Matcher, Metric};
use crate::lifecycle::LifecycleMode;
use crate::motion::{FilterKind, FilterState};
use crate::score::UpdateFn;

/// One sensor observation: a 3D box with class label and confidence score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub class_label: String,
    /// Box center, meters, in one consistent frame per sequence.
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    /// Box extent, meters.
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Heading, radians in `(-pi, pi]`.
    pub yaw: f64,
    /// Detector confidence in `[0, 1]`.
    pub score: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("non-finite value in field `{0}`")]
    NonFiniteField(&'static str),
    #[error("non-positive box extent: {0} = {1}")]
    NonPositiveExtent(&'static str, f64),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Normalizes an angle to `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut y = yaw.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Checks a raw detection: rejects non-finite fields, degenerate boxes and
/// out-of-range scores; normalizes the yaw to `(-pi, pi]`.
pub fn validate_detection(mut d: Detection) -> Result<Detection, DomainError> {
    let fields: [(&'static str, f64); 8] = [
        ("cx", d.cx),
        ("cy", d.cy),
        ("cz", d.cz),
        ("length", d.length),
        ("width", d.width),
        ("height", d.height),
        ("yaw", d.yaw),
        ("score", d.score),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            return Err(DomainError::NonFiniteField(name));
        }
    }
    for (name, value) in [
        ("length", d.length),
        ("width", d.width),
        ("height", d.height),
    ] {
        if value <= 0.0 {
            return Err(DomainError::NonPositiveExtent(name, value));
        }
    }
    if !(0.0..=1.0).contains(&d.score) {
        return Err(DomainError::ScoreOutOfRange(d.score));
    }
    d.yaw = normalize_yaw(d.yaw);
    Ok(d)
}

/// A persistent object hypothesis accumulating matched detections under one
/// id. The kinematic state is owned by the configured motion filter; extent
/// and yaw are carried over from the latest matched detection.
#[derive(Clone, Debug)]
pub struct Tracklet {
    /// Unique within a sequence; never reused.
    pub id: u64,
    pub class_label: String,
    pub filter: FilterState,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    /// Refined confidence in `[0, 1]`.
    pub score: f64,
    /// Whether the tracklet is part of the frame output. Inactive tracklets
    /// stay in memory and keep participating in matching.
    pub active: bool,
    /// Consecutive-match count; resets on a miss.
    pub hits: u32,
    /// Update opportunities since the last match.
    pub misses: u32,
    /// Frames since creation.
    pub age: u32,
    /// Frame index of the last matched detection.
    pub last_match_frame: u64,
}

/// Every tracker hyperparameter: score update function, decay, lifecycle
/// thresholds, matcher and motion-filter choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub update_fn: UpdateFn,
    /// Constant subtracted from every live tracklet score during prediction.
    pub score_decay: f64,
    /// Activation threshold: a tracklet is emitted only while its score has
    /// exceeded this at birth or after a matched update.
    pub detection_threshold: f64,
    /// Confidence-based deletion: drop a tracklet whose score falls below.
    pub deletion_threshold: f64,
    /// Unmatched tracklets below this score are kept but deactivated.
    pub active_threshold: f64,
    /// Count-based deletion after this many consecutive misses. Absent
    /// means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age: Option<u32>,
    /// Consecutive matches required before a tracklet becomes active in
    /// count-based mode.
    pub min_hits: u32,
    pub matcher: Matcher,
    pub metric: Metric,
    /// Maximum cost of a legal match: meters for Euclidean metrics, squared
    /// distance for Mahalanobis.
    pub gate: f64,
    pub filter_kind: FilterKind,
    pub lifecycle: LifecycleMode,
    /// Process-noise jerk sigma for the Kalman filter, m/frame^3.
    #[serde(default = "default_jerk_sigma")]
    pub jerk_sigma: f64,
    /// Measurement-noise variance on x and y for the Kalman filter, m^2.
    #[serde(default = "default_measurement_noise")]
    pub measurement_noise: f64,
}

fn default_jerk_sigma() -> f64 {
    1.0
}

fn default_measurement_noise() -> f64 {
    0.25
}

impl Default for TrackerConfig {
    /// The count-based starting configuration: overwrite fusion, no decay,
    /// max-age 3, min-hits 1, greedy matching on 2D Euclidean distance.
    fn default() -> Self {
        TrackerConfig {
            update_fn: UpdateFn::Overwrite,
            score_decay: 0.0,
            detection_threshold: 0.0,
            deletion_threshold: 0.0,
            active_threshold: 1.0,
            max_age: Some(3),
            min_hits: 1,
            matcher: Matcher::Greedy,
            metric: Metric::Euclidean2d,
            gate: 2.0,
            filter_kind: FilterKind::PointTracker,
            lifecycle: LifecycleMode::CountBased,
            jerk_sigma: default_jerk_sigma(),
            measurement_noise: default_measurement_noise(),
        }
    }
}

impl TrackerConfig {
    /// Validates value ranges and cross-field constraints.
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.score_decay) {
            return Err(format!("score_decay {} outside [0, 1]", self.score_decay));
        }
        for (name, v) in [
            ("detection_threshold", self.detection_threshold),
            ("deletion_threshold", self.deletion_threshold),
            ("active_threshold", self.active_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.deletion_threshold > self.active_threshold {
            return Err(format!(
                "deletion_threshold {} exceeds active_threshold {}",
                self.deletion_threshold, self.active_threshold
            ));
        }
        if self.gate <= 0.0 || !self.gate.is_finite() {
            return Err(format!("gate {} must be finite and > 0", self.gate));
        }
        if self.min_hits == 0 {
            return Err("min_hits must be >= 1".to_string());
        }
        if self.max_age == Some(0) {
            return Err("max_age must be >= 1 (omit it for unbounded)".to_string());
        }
        if self.metric == Metric::Mahalanobis && self.filter_kind != FilterKind::KalmanCvca {
            return Err("mahalanobis metric requires filter_kind = \"kalman_cvca\"".to_string());
        }
        if self.jerk_sigma < 0.0 {
            return Err(format!("jerk_sigma {} must be >= 0", self.jerk_sigma));
        }
        if self.measurement_noise <= 0.0 {
            return Err(format!(
                "measurement_noise {} must be > 0",
                self.measurement_noise
            ));
        }
        Ok(())
    }
}

/// Output of one frame's matching stage: matched pairs plus the leftovers
/// on both sides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssignmentResult {
    /// `(tracklet_id, detection_index, cost)` triples.
    pub matches: Vec<(u64, usize, f64)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracklets: Vec<u64>,
}
