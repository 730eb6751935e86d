//! Tracklet score refinement: the per-frame score decay applied during
//! prediction and the update functions that fuse a decayed tracklet score
//! with a matched detection score.
//!
//! All update functions map `[0,1]² -> [0,1]` after clamping, and all of
//! them except `overwrite` satisfy the criterion `f(c, s) >= max(c, s)`:
//! a match must never make the system less confident than either input.

use serde::{Deserialize, Serialize};

/// Score update function applied when a tracklet is matched to a detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateFn {
    /// The matched detection score replaces the tracklet score (the
    /// count-based baseline behaviour).
    Overwrite,
    /// Sum of both scores, capped at 1.
    Add,
    /// Maximum of both scores.
    Max,
    /// Complement product: `1 - (1-c)(1-s)`.
    ComplementMult,
    /// Parallel addition of the complements: `1 - (1-c)(1-s)/((1-c)+(1-s))`.
    ComplementParallel,
}

impl UpdateFn {
    /// All variants, in the order they appear in configuration grids.
    pub const ALL: [UpdateFn; 5] = [
        UpdateFn::Overwrite,
        UpdateFn::Add,
        UpdateFn::Max,
        UpdateFn::ComplementMult,
        UpdateFn::ComplementParallel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            UpdateFn::Overwrite => "overwrite",
            UpdateFn::Add => "add",
            UpdateFn::Max => "max",
            UpdateFn::ComplementMult => "complement_mult",
            UpdateFn::ComplementParallel => "complement_parallel",
        }
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Estimated tracklet score after one unmatched prediction step:
/// `max(0, c_prev - sigma)`.
pub fn decay_score(c_prev: f64, sigma: f64) -> f64 {
    (c_prev - sigma).max(0.0)
}

/// Count-based baseline: the detection score replaces the tracklet score.
pub fn fuse_overwrite(_c_hat: f64, s: f64) -> f64 {
    s
}

/// Score sum, capped at 1.
pub fn fuse_add(c_hat: f64, s: f64) -> f64 {
    clamp_unit(c_hat + s)
}

/// Maximum of the two scores; the weakest function satisfying the
/// update criterion.
pub fn fuse_max(c_hat: f64, s: f64) -> f64 {
    c_hat.max(s)
}

/// Multiplies the score complements: `1 - (1-c)(1-s)`.
pub fn fuse_complement_mult(c_hat: f64, s: f64) -> f64 {
    clamp_unit(1.0 - (1.0 - c_hat) * (1.0 - s))
}

/// Parallel-adds the score complements. The degenerate case where both
/// scores are exactly 1 is defined as 1 (the limit inside the unit square).
pub fn fuse_complement_parallel(c_hat: f64, s: f64) -> f64 {
    let a = 1.0 - c_hat;
    let b = 1.0 - s;
    if a + b == 0.0 {
        return 1.0;
    }
    clamp_unit(1.0 - (a * b) / (a + b))
}

/// Applies `update_fn` to the decayed tracklet score and the matched
/// detection score. The caller is responsible for having already applied
/// [`decay_score`] during the prediction step.
pub fn refine_on_match(update_fn: UpdateFn, tracklet_score: f64, detection_score: f64) -> f64 {
    match update_fn {
        UpdateFn::Overwrite => fuse_overwrite(tracklet_score, detection_score),
        UpdateFn::Add => fuse_add(tracklet_score, detection_score),
        UpdateFn::Max => fuse_max(tracklet_score, detection_score),
        UpdateFn::ComplementMult => fuse_complement_mult(tracklet_score, detection_score),
        UpdateFn::ComplementParallel => fuse_complement_parallel(tracklet_score, detection_score),
    }
}
