//! Tracklet lifecycle: birth, active-flag management, and the death module.
//!
//! Count-based mode reproduces the classic min-hits / max-age lifecycle:
//! only tracklets matched (or born) in the current frame are emitted, and a
//! tracklet dies after `max_age` consecutive misses. Confidence-based mode
//! drives everything off the refined score: activation above the detection
//! threshold, deactivation below the active threshold, deletion below the
//! deletion threshold. Mixed mode deletes when either rule fires.

use serde::{Deserialize, Serialize};

use crate::domain::{Detection, TrackerConfig, Tracklet};
use crate::motion::{FilterState, KalmanParams};

/// How birth, activation, and deletion are decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleMode {
    CountBased,
    ConfidenceBased,
    Mixed,
}

/// Result of the death module for an unmatched tracklet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MissOutcome {
    Kept,
    Deleted,
}

/// Creates a tracklet from an unmatched detection. The new tracklet always
/// enters memory; whether it is active (emitted) depends on the lifecycle
/// mode.
pub fn birth(d: &Detection, id: u64, cfg: &TrackerConfig) -> Tracklet {
    let params = KalmanParams {
        jerk_sigma: cfg.jerk_sigma,
        measurement_noise: cfg.measurement_noise,
    };
    let active = match cfg.lifecycle {
        LifecycleMode::CountBased => cfg.min_hits <= 1,
        LifecycleMode::ConfidenceBased | LifecycleMode::Mixed => d.score > cfg.detection_threshold,
    };
    Tracklet {
        id,
        class_label: d.class_label.clone(),
        filter: FilterState::from_detection(cfg.filter_kind, d, params),
        length: d.length,
        width: d.width,
        height: d.height,
        yaw: d.yaw,
        score: d.score,
        active,
        hits: 1,
        misses: 0,
        age: 0,
        last_match_frame: d.frame,
    }
}

/// Applied after a matched update; the tracklet score has already been
/// refined by the configured update function.
pub fn on_match(t: &mut Tracklet, cfg: &TrackerConfig) {
    t.hits += 1;
    t.misses = 0;
    t.active = match cfg.lifecycle {
        LifecycleMode::CountBased => t.hits >= cfg.min_hits,
        LifecycleMode::ConfidenceBased | LifecycleMode::Mixed => t.score > cfg.detection_threshold,
    };
}

/// Death module for an unmatched tracklet; the score has already been
/// decayed by the prediction step. In count-based mode a miss breaks the
/// consecutive-hit streak and ends emission until the next match; in
/// confidence-based mode the active flag is only ever cleared here, never
/// set.
pub fn on_miss(t: &mut Tracklet, cfg: &TrackerConfig) -> MissOutcome {
    t.misses += 1;
    let count_deleted = cfg.max_age.is_some_and(|max_age| t.misses > max_age);
    let score_deleted = t.score < cfg.deletion_threshold;
    match cfg.lifecycle {
        LifecycleMode::CountBased => {
            t.hits = 0;
            t.active = false;
            if count_deleted {
                MissOutcome::Deleted
            } else {
                MissOutcome::Kept
            }
        }
        LifecycleMode::ConfidenceBased => {
            if score_deleted {
                MissOutcome::Deleted
            } else {
                if t.score < cfg.active_threshold {
                    t.active = false;
                }
                MissOutcome::Kept
            }
        }
        LifecycleMode::Mixed => {
            t.hits = 0;
            if score_deleted || count_deleted {
                MissOutcome::Deleted
            } else {
                if t.score < cfg.active_threshold {
                    t.active = false;
                }
                MissOutcome::Kept
            }
        }
    }
}
