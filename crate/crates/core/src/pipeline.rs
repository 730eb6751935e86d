//! Frame-by-frame tracking: predict (+ score decay), match, fuse scores and
//! update filters, birth, death, and emission of the active tracklets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::assoc::{greedy_assign, hungarian_assign, CostMatrix, Matcher, Metric};
use crate::domain::{Detection, TrackerConfig, Tracklet};
use crate::lifecycle::{self, MissOutcome};
use crate::motion::FilterError;
use crate::score::{decay_score, refine_on_match};

/// One emitted tracklet for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackRecord {
    pub id: u64,
    pub class_label: String,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    pub score: f64,
    pub active: bool,
}

/// All active tracklets of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameOutput {
    pub frame: u64,
    pub tracks: Vec<TrackRecord>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error("frame {frame} not after previous frame {previous}")]
    OutOfOrderFrame { frame: u64, previous: u64 },
    #[error("detection carries frame {detection_frame}, expected {frame}")]
    MixedFrame { detection_frame: u64, frame: u64 },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Sequential tracking state for one sequence.
#[derive(Clone, Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Tracklet>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, PipelineError> {
        cfg.validate().map_err(PipelineError::InvalidConfig)?;
        Ok(Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracklets, active or not.
    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracks
    }

    /// Advances the tracker by one frame: predict and decay every live
    /// tracklet, match against the detections, fuse scores and update the
    /// filters of matched tracklets, birth the unmatched detections, run the
    /// death module on unmatched tracklets, and emit the active set.
    pub fn step(
        &mut self,
        frame: u64,
        detections: &[Detection],
    ) -> Result<FrameOutput, PipelineError> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(PipelineError::OutOfOrderFrame {
                    frame,
                    previous: prev,
                });
            }
        }
        for d in detections {
            if d.frame != frame {
                return Err(PipelineError::MixedFrame {
                    detection_frame: d.frame,
                    frame,
                });
            }
        }
        let dt = self.last_frame.map_or(1, |prev| (frame - prev) as u32);

        // 1. Predict and decay every live tracklet, once per step.
        for t in &mut self.tracks {
            t.filter.predict(dt);
            t.score = decay_score(t.score, self.cfg.score_decay);
            t.age += dt;
        }

        // 2. Gated per-class cost matrix over all live tracklets (inactive
        //    ones keep matching with the same gate), then the configured
        //    assignment algorithm.
        let costs = self.build_costs(detections)?;
        let assignment = match self.cfg.matcher {
            Matcher::Greedy => {
                let scores: Vec<f64> = detections.iter().map(|d| d.score).collect();
                greedy_assign(&costs, &scores)
            }
            Matcher::Hungarian => hungarian_assign(&costs),
        };

        // 3. Matched tracklets: filter update, score fusion, lifecycle.
        let mut matched = vec![false; self.tracks.len()];
        for &(track_id, det_idx, _cost) in &assignment.matches {
            let idx = self
                .tracks
                .iter()
                .position(|t| t.id == track_id)
                .expect("matched id is live");
            matched[idx] = true;
            let t = &mut self.tracks[idx];
            let d = &detections[det_idx];
            let dt_since_match = (frame - t.last_match_frame).max(1) as u32;
            t.filter.update(d, dt_since_match)?;
            t.score = refine_on_match(self.cfg.update_fn, t.score, d.score);
            t.length = d.length;
            t.width = d.width;
            t.height = d.height;
            t.yaw = d.yaw;
            t.last_match_frame = frame;
            lifecycle::on_match(t, &self.cfg);
        }

        // 4. Unmatched detections are born, in detection order.
        for &det_idx in &assignment.unmatched_detections {
            let t = lifecycle::birth(&detections[det_idx], self.next_id, &self.cfg);
            self.next_id += 1;
            self.tracks.push(t);
            matched.push(true); // newborns are not misses this frame
        }

        // 5. Death module for unmatched tracklets.
        let mut keep = Vec::with_capacity(self.tracks.len());
        for (idx, t) in self.tracks.iter_mut().enumerate() {
            if matched[idx] {
                keep.push(true);
            } else {
                keep.push(lifecycle::on_miss(t, &self.cfg) == MissOutcome::Kept);
            }
        }
        let mut keep_iter = keep.into_iter();
        self.tracks.retain(|_| keep_iter.next().unwrap());

        // 6. Emit the active tracklets.
        let tracks = self
            .tracks
            .iter()
            .filter(|t| t.active)
            .map(|t| {
                let pos = t.filter.position();
                TrackRecord {
                    id: t.id,
                    class_label: t.class_label.clone(),
                    cx: pos[0],
                    cy: pos[1],
                    cz: pos[2],
                    length: t.length,
                    width: t.width,
                    height: t.height,
                    yaw: t.yaw,
                    score: t.score,
                    active: true,
                }
            })
            .collect();

        self.last_frame = Some(frame);
        Ok(FrameOutput { frame, tracks })
    }

    fn build_costs(&self, detections: &[Detection]) -> Result<CostMatrix, PipelineError> {
        let row_ids: Vec<u64> = self.tracks.iter().map(|t| t.id).collect();
        let mut costs = CostMatrix::new(row_ids, detections.len());
        for (row, t) in self.tracks.iter().enumerate() {
            let pos = t.filter.position();
            let innovation = t.filter.innovation_covariance();
            for (col, d) in detections.iter().enumerate() {
                if t.class_label != d.class_label {
                    continue;
                }
                let cost = match self.cfg.metric {
                    Metric::Euclidean2d => crate::assoc::euclidean_cost(pos, d, false),
                    Metric::Euclidean3d => crate::assoc::euclidean_cost(pos, d, true),
                    Metric::Mahalanobis => {
                        let s = innovation
                            .as_ref()
                            .expect("mahalanobis requires kalman filter");
                        crate::assoc::mahalanobis_cost([pos[0], pos[1]], s, d)
                            .map_err(FilterError::Singular)?
                    }
                };
                if cost <= self.cfg.gate {
                    costs.set(row, col, cost);
                }
            }
        }
        Ok(costs)
    }
}

/// Runs a full ordered detection stream through a fresh tracker.
pub fn run_sequence(
    cfg: &TrackerConfig,
    frames: &[(u64, Vec<Detection>)],
) -> Result<Vec<FrameOutput>, PipelineError> {
    let mut tracker = Tracker::new(cfg.clone())?;
    frames
        .iter()
        .map(|(frame, dets)| tracker.step(*frame, dets))
        .collect()
}

/// Tracks every sequence of a multi-sequence stream. Sequences are
/// independent and processed in parallel; the result ordering depends only
/// on the sequence keys.
pub fn run_sequences(
    cfg: &TrackerConfig,
    sequences: &BTreeMap<String, Vec<(u64, Vec<Detection>)>>,
) -> Result<BTreeMap<String, Vec<FrameOutput>>, PipelineError> {
    sequences
        .par_iter()
        .map(|(name, frames)| run_sequence(cfg, frames).map(|out| (name.clone(), out)))
        .collect()
}
