//! Late fusion of two per-frame track streams (e.g. a range-sensor tracker
//! and a camera tracker): voting strategies (affirmative, unanimous) and
//! confidence-based fusion where cross-matched pairs are fused with a score
//! update function and stray tracks are decayed per stream policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{greedy_assign, CostMatrix};
use crate::domain::AssignmentResult;
use crate::pipeline::{FrameOutput, TrackRecord};
use crate::score::{decay_score, refine_on_match, UpdateFn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Union of both streams' proposals.
    Affirmative,
    /// Intersection: only cross-matched pairs. With two streams the
    /// consensus (majority) strategy coincides with this one.
    Unanimous,
    /// Score fusion on pairs plus per-policy decay on strays.
    Confidence,
}

/// Which stream's scores receive the decay in confidence fusion. The first
/// three policies decay the chosen stream(s) unconditionally, matched or
/// not; the last one decays only cross-unmatched strays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayPolicy {
    DecayA,
    DecayB,
    DecayBoth,
    DecayBothIfUnmatched,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub strategy: Strategy,
    /// Only meaningful when `strategy` is `confidence`.
    pub decay_policy: DecayPolicy,
    pub sigma: f64,
    /// Cross-stream match gate on 2D center distance, meters.
    pub cross_gate: f64,
    pub update_fn: UpdateFn,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            strategy: Strategy::Confidence,
            decay_policy: DecayPolicy::DecayBothIfUnmatched,
            sigma: 0.2,
            cross_gate: 2.0,
            update_fn: UpdateFn::ComplementMult,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(format!("sigma {} must be finite and >= 0", self.sigma));
        }
        if self.cross_gate <= 0.0 || !self.cross_gate.is_finite() {
            return Err(format!(
                "cross_gate {} must be finite and > 0",
                self.cross_gate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("frame mismatch between streams: {a} vs {b}")]
    FrameMismatch { a: u64, b: u64 },
    #[error("invalid ensemble config: {0}")]
    InvalidConfig(String),
}

/// Greedy per-class matching of two frames on 2D center distance. In the
/// returned assignment, `tracklet_id` refers to stream-a track ids and
/// `detection_index` to positions in the stream-b track list.
pub fn cross_match(
    a: &FrameOutput,
    b: &FrameOutput,
    cross_gate: f64,
) -> Result<AssignmentResult, EnsembleError> {
    if a.frame != b.frame {
        return Err(EnsembleError::FrameMismatch {
            a: a.frame,
            b: b.frame,
        });
    }
    let row_ids: Vec<u64> = a.tracks.iter().map(|t| t.id).collect();
    let mut costs = CostMatrix::new(row_ids, b.tracks.len());
    for (row, ta) in a.tracks.iter().enumerate() {
        for (col, tb) in b.tracks.iter().enumerate() {
            if ta.class_label != tb.class_label {
                continue;
            }
            let d = ((ta.cx - tb.cx).powi(2) + (ta.cy - tb.cy).powi(2)).sqrt();
            if d <= cross_gate {
                costs.set(row, col, d);
            }
        }
    }
    let scores: Vec<f64> = b.tracks.iter().map(|t| t.score).collect();
    Ok(greedy_assign(&costs, &scores))
}

/// Stateful two-stream fuser. Owns the cross-stream id memory: a matched
/// (id_a, id_b) pair keeps one stable merged output id as long as it keeps
/// re-matching; on divorce the stream-a member inherits the merged id.
#[derive(Clone, Debug)]
pub struct EnsembleFuser {
    cfg: EnsembleConfig,
    merged: BTreeMap<(u64, u64), u64>,
    solo_a: BTreeMap<u64, u64>,
    solo_b: BTreeMap<u64, u64>,
    next_id: u64,
}

impl EnsembleFuser {
    pub fn new(cfg: EnsembleConfig) -> Result<Self, EnsembleError> {
        cfg.validate().map_err(EnsembleError::InvalidConfig)?;
        Ok(EnsembleFuser {
            cfg,
            merged: BTreeMap::new(),
            solo_a: BTreeMap::new(),
            solo_b: BTreeMap::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.cfg
    }

    /// Fuses one frame pair with the configured strategy.
    pub fn fuse_frame(
        &mut self,
        a: &FrameOutput,
        b: &FrameOutput,
    ) -> Result<FrameOutput, EnsembleError> {
        let matches = cross_match(a, b, self.cfg.cross_gate)?;
        Ok(match self.cfg.strategy {
            Strategy::Affirmative => self.fuse_affirmative(a, b, &matches),
            Strategy::Unanimous => self.fuse_unanimous(a, b, &matches),
            Strategy::Confidence => self.fuse_confidence(a, b, &matches),
        })
    }

    /// Union: matched pairs once (geometry of the higher-score member,
    /// score = max), then every stray from both streams.
    pub fn fuse_affirmative(
        &mut self,
        a: &FrameOutput,
        b: &FrameOutput,
        matches: &AssignmentResult,
    ) -> FrameOutput {
        let mut out = self.emit_pairs(a, b, matches, |sa, sb| sa.max(sb));
        self.emit_strays(a, b, matches, None, &mut out);
        FrameOutput {
            frame: a.frame,
            tracks: out,
        }
    }

    /// Intersection: matched pairs only.
    pub fn fuse_unanimous(
        &mut self,
        a: &FrameOutput,
        b: &FrameOutput,
        matches: &AssignmentResult,
    ) -> FrameOutput {
        let tracks = self.emit_pairs(a, b, matches, |sa, sb| sa.max(sb));
        FrameOutput {
            frame: a.frame,
            tracks,
        }
    }

    /// Confidence fusion: pairs are scored with the update function (after
    /// any per-stream decay the policy applies to matched tracks), strays
    /// are decayed per policy, and anything at score 0 is dropped.
    pub fn fuse_confidence(
        &mut self,
        a: &FrameOutput,
        b: &FrameOutput,
        matches: &AssignmentResult,
    ) -> FrameOutput {
        let (decay_matched_a, decay_matched_b) = match self.cfg.decay_policy {
            DecayPolicy::DecayA => (true, false),
            DecayPolicy::DecayB => (false, true),
            DecayPolicy::DecayBoth => (true, true),
            DecayPolicy::DecayBothIfUnmatched => (false, false),
        };
        let sigma = self.cfg.sigma;
        let update_fn = self.cfg.update_fn;
        let mut out = self.emit_pairs(a, b, matches, |sa, sb| {
            let sa = if decay_matched_a {
                decay_score(sa, sigma)
            } else {
                sa
            };
            let sb = if decay_matched_b {
                decay_score(sb, sigma)
            } else {
                sb
            };
            refine_on_match(update_fn, sa, sb)
        });
        self.emit_strays(a, b, matches, Some(sigma), &mut out);
        let tracks = out.into_iter().filter(|t| t.score > 0.0).collect();
        FrameOutput {
            frame: a.frame,
            tracks,
        }
    }

    fn emit_pairs(
        &mut self,
        a: &FrameOutput,
        b: &FrameOutput,
        matches: &AssignmentResult,
        score: impl Fn(f64, f64) -> f64,
    ) -> Vec<TrackRecord> {
        let mut out = Vec::new();
        for &(a_id, b_idx, _) in &matches.matches {
            let ta = a
                .tracks
                .iter()
                .find(|t| t.id == a_id)
                .expect("matched id in frame");
            let tb = &b.tracks[b_idx];
            let geometry = if tb.score > ta.score { tb } else { ta };
            let mut rec = geometry.clone();
            rec.id = self.pair_out_id(ta.id, tb.id);
            rec.score = score(ta.score, tb.score).clamp(0.0, 1.0);
            out.push(rec);
        }
        out
    }

    fn emit_strays(
        &mut self,
        a: &FrameOutput,
        b: &FrameOutput,
        matches: &AssignmentResult,
        sigma: Option<f64>,
        out: &mut Vec<TrackRecord>,
    ) {
        let matched_a: Vec<u64> = matches.matches.iter().map(|&(id, _, _)| id).collect();
        for ta in &a.tracks {
            if matched_a.contains(&ta.id) {
                continue;
            }
            let mut rec = ta.clone();
            rec.id = self.solo_out_id(StreamSide::A, ta.id);
            if let Some(sigma) = sigma {
                if self.decays_stray(StreamSide::A) {
                    rec.score = decay_score(rec.score, sigma);
                }
            }
            out.push(rec);
        }
        for &b_idx in &matches.unmatched_detections {
            let tb = &b.tracks[b_idx];
            let mut rec = tb.clone();
            rec.id = self.solo_out_id(StreamSide::B, tb.id);
            if let Some(sigma) = sigma {
                if self.decays_stray(StreamSide::B) {
                    rec.score = decay_score(rec.score, sigma);
                }
            }
            out.push(rec);
        }
    }

    fn decays_stray(&self, side: StreamSide) -> bool {
        matches!(
            (self.cfg.decay_policy, side),
            (DecayPolicy::DecayA, StreamSide::A)
                | (DecayPolicy::DecayB, StreamSide::B)
                | (
                    DecayPolicy::DecayBoth | DecayPolicy::DecayBothIfUnmatched,
                    _
                )
        )
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn pair_out_id(&mut self, a_id: u64, b_id: u64) -> u64 {
        let id = if let Some(&id) = self.merged.get(&(a_id, b_id)) {
            id
        } else if let Some(&id) = self.solo_a.get(&a_id) {
            id
        } else if let Some(&id) = self.solo_b.get(&b_id) {
            id
        } else {
            self.fresh_id()
        };
        self.merged.insert((a_id, b_id), id);
        // The merged id follows the stream-a member on divorce; the b member
        // loses its claim and will get a fresh id if it strays later.
        self.solo_a.insert(a_id, id);
        self.solo_b.remove(&b_id);
        id
    }

    fn solo_out_id(&mut self, side: StreamSide, id: u64) -> u64 {
        let map = match side {
            StreamSide::A => &self.solo_a,
            StreamSide::B => &self.solo_b,
        };
        if let Some(&out) = map.get(&id) {
            return out;
        }
        let out = self.fresh_id();
        match side {
            StreamSide::A => self.solo_a.insert(id, out),
            StreamSide::B => self.solo_b.insert(id, out),
        };
        out
    }
}

#[derive(Clone, Copy)]
enum StreamSide {
    A,
    B,
}

/// Fuses two whole per-sequence streams, aligning them on the union of
/// their frame indices (a frame missing from one stream counts as empty).
pub fn fuse_streams(
    cfg: &EnsembleConfig,
    a: &[FrameOutput],
    b: &[FrameOutput],
) -> Result<Vec<FrameOutput>, EnsembleError> {
    let mut fuser = EnsembleFuser::new(*cfg)?;
    let mut frames: BTreeMap<u64, (Option<&FrameOutput>, Option<&FrameOutput>)> = BTreeMap::new();
    for f in a {
        frames.entry(f.frame).or_default().0 = Some(f);
    }
    for f in b {
        frames.entry(f.frame).or_default().1 = Some(f);
    }
    frames
        .into_iter()
        .map(|(frame, (fa, fb))| {
            let empty = FrameOutput {
                frame,
                tracks: Vec::new(),
            };
            fuser.fuse_frame(fa.unwrap_or(&empty), fb.unwrap_or(&empty))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn track(id: u64, x: f64, y: f64, score: f64) -> TrackRecord {
        TrackRecord {
            id,
            class_label: "car".into(),
            cx: x,
            cy: y,
            cz: 0.8,
            length: 4.0,
            width: 2.0,
            height: 1.6,
            yaw: 0.0,
            score,
            active: true,
        }
    }

    fn frame(index: u64, tracks: Vec<TrackRecord>) -> FrameOutput {
        FrameOutput {
            frame: index,
            tracks,
        }
    }

    fn cfg(strategy: Strategy, policy: DecayPolicy, sigma: f64) -> EnsembleConfig {
        EnsembleConfig {
            strategy,
            decay_policy: policy,
            sigma,
            cross_gate: 2.0,
            update_fn: UpdateFn::ComplementMult,
        }
    }

    #[test]
    fn cross_match_identical_frames() {
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.9)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.8)]);
        let m = cross_match(&a, &b, 2.0).unwrap();
        assert_eq!(m.matches.len(), 1);
        assert_eq!(m.matches[0].0, 1);
        assert_eq!(m.matches[0].1, 0);
    }

    #[test]
    fn cross_match_respects_classes() {
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.9)]);
        let mut bt = track(5, 0.0, 0.0, 0.8);
        bt.class_label = "pedestrian".into();
        let b = frame(0, vec![bt]);
        let m = cross_match(&a, &b, 2.0).unwrap();
        assert!(m.matches.is_empty());
    }

    #[test]
    fn cross_match_takes_nearest_a_track() {
        // Single b track sits nearer to the higher-scoring a track; greedy
        // must pair them.
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.9), track(2, 1.5, 0.0, 0.4)]);
        let b = frame(0, vec![track(5, 0.3, 0.0, 0.8)]);
        let m = cross_match(&a, &b, 2.0).unwrap();
        assert_eq!(m.matches.len(), 1);
        assert_eq!(m.matches[0].0, 1);
    }

    #[test]
    fn cross_match_frame_mismatch() {
        let a = frame(0, vec![]);
        let b = frame(1, vec![]);
        assert_eq!(
            cross_match(&a, &b, 2.0),
            Err(EnsembleError::FrameMismatch { a: 0, b: 1 })
        );
    }

    #[test]
    fn affirmative_union_cardinality() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.0)).unwrap();
        let a = frame(
            0,
            vec![
                track(1, 0.0, 0.0, 0.9),
                track(2, 10.0, 0.0, 0.8),
                track(3, 20.0, 0.0, 0.7),
            ],
        );
        let b = frame(0, vec![track(5, 40.0, 0.0, 0.6), track(6, 50.0, 0.0, 0.5)]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        assert_eq!(out.tracks.len(), 5);

        // Fully matched frames of size 3 collapse to 3.
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.0)).unwrap();
        let b = frame(
            0,
            vec![
                track(5, 0.1, 0.0, 0.6),
                track(6, 10.1, 0.0, 0.5),
                track(7, 20.1, 0.0, 0.4),
            ],
        );
        let out = fuser.fuse_frame(&a, &b).unwrap();
        assert_eq!(out.tracks.len(), 3);
    }

    #[test]
    fn affirmative_pair_takes_max_score() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.2)).unwrap();
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.4)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.7)]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        assert_abs_diff_eq!(out.tracks[0].score, 0.7);
        // geometry follows the higher-score member
        assert_abs_diff_eq!(out.tracks[0].cx, 0.1);
    }

    #[test]
    fn unanimous_intersection_cardinality() {
        let cfg = cfg(Strategy::Unanimous, DecayPolicy::DecayBoth, 0.0);
        let mut fuser = EnsembleFuser::new(cfg).unwrap();
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.9), track(2, 10.0, 0.0, 0.8)]);
        let b = frame(0, vec![track(5, 40.0, 0.0, 0.6)]);
        assert!(fuser.fuse_frame(&a, &b).unwrap().tracks.is_empty());

        let b = frame(0, vec![track(5, 0.2, 0.0, 0.6), track(6, 30.0, 0.0, 0.9)]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        assert_eq!(out.tracks.len(), 1);
    }

    #[test]
    fn confidence_pair_fusion_and_policy_scoping() {
        let mut fuser = EnsembleFuser::new(cfg(
            Strategy::Confidence,
            DecayPolicy::DecayBothIfUnmatched,
            0.2,
        ))
        .unwrap();
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.6), track(2, 30.0, 0.0, 0.3)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.5), track(6, 50.0, 0.0, 0.4)]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        // matched pair: 1 - 0.4*0.5 = 0.8, never decayed under this policy
        let pair = out.tracks.iter().find(|t| t.cx == 0.0).unwrap();
        assert_abs_diff_eq!(pair.score, 0.8, epsilon = 1e-12);
        // both strays decayed by 0.2
        let stray_a = out.tracks.iter().find(|t| t.cx == 30.0).unwrap();
        assert_abs_diff_eq!(stray_a.score, 0.1, epsilon = 1e-12);
        let stray_b = out.tracks.iter().find(|t| t.cx == 50.0).unwrap();
        assert_abs_diff_eq!(stray_b.score, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn confidence_decay_a_leaves_b_strays_alone() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Confidence, DecayPolicy::DecayA, 0.2)).unwrap();
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.3)]);
        let b = frame(0, vec![track(5, 50.0, 0.0, 0.4)]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        let stray_a = out.tracks.iter().find(|t| t.cx == 0.0).unwrap();
        assert_abs_diff_eq!(stray_a.score, 0.1, epsilon = 1e-12);
        let stray_b = out.tracks.iter().find(|t| t.cx == 50.0).unwrap();
        assert_abs_diff_eq!(stray_b.score, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn confidence_decay_both_decays_matched_inputs() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Confidence, DecayPolicy::DecayBoth, 0.2)).unwrap();
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.6)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.5)]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        // 1 - (1-0.4)(1-0.3) = 0.58
        assert_abs_diff_eq!(out.tracks[0].score, 0.58, epsilon = 1e-12);
    }

    #[test]
    fn confidence_drops_zero_scores() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Confidence, DecayPolicy::DecayBoth, 0.2)).unwrap();
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.15)]);
        let b = frame(0, vec![]);
        let out = fuser.fuse_frame(&a, &b).unwrap();
        assert!(out.tracks.is_empty());
    }

    #[test]
    fn sigma_zero_collapses_all_policies() {
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.6), track(2, 30.0, 0.0, 0.3)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.5), track(6, 50.0, 0.0, 0.4)]);
        let mut outputs = Vec::new();
        for policy in [
            DecayPolicy::DecayA,
            DecayPolicy::DecayB,
            DecayPolicy::DecayBoth,
            DecayPolicy::DecayBothIfUnmatched,
        ] {
            let mut fuser = EnsembleFuser::new(cfg(Strategy::Confidence, policy, 0.0)).unwrap();
            outputs.push(fuser.fuse_frame(&a, &b).unwrap());
        }
        for o in &outputs[1..] {
            assert_eq!(o, &outputs[0]);
        }
        // ... and equals affirmative except pairs carry update-fn scores.
        let scores: BTreeSet<String> = outputs[0]
            .tracks
            .iter()
            .map(|t| format!("{:.12}", t.score))
            .collect();
        let expected: BTreeSet<String> =
            [0.8, 0.3, 0.4].iter().map(|s| format!("{s:.12}")).collect();
        assert_eq!(scores, expected);
    }

    #[test]
    fn matched_pair_score_dominates_inputs() {
        let fuser = EnsembleFuser::new(cfg(
            Strategy::Confidence,
            DecayPolicy::DecayBothIfUnmatched,
            0.3,
        ))
        .unwrap();
        for (sa, sb) in [(0.2, 0.9), (0.5, 0.5), (0.9, 0.1), (1.0, 1.0)] {
            let a = frame(0, vec![track(1, 0.0, 0.0, sa)]);
            let b = frame(0, vec![track(5, 0.1, 0.0, sb)]);
            let mut f2 = fuser.clone();
            let out = f2.fuse_frame(&a, &b).unwrap();
            assert!(out.tracks[0].score >= sa.max(sb) - 1e-12);
        }
    }

    #[test]
    fn stream_swap_preserves_score_multiset() {
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.6), track(2, 30.0, 0.0, 0.3)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.5), track(6, 50.0, 0.0, 0.4)]);
        let mut ab =
            EnsembleFuser::new(cfg(Strategy::Confidence, DecayPolicy::DecayA, 0.2)).unwrap();
        let mut ba =
            EnsembleFuser::new(cfg(Strategy::Confidence, DecayPolicy::DecayB, 0.2)).unwrap();
        let out_ab = ab.fuse_frame(&a, &b).unwrap();
        let out_ba = ba.fuse_frame(&b, &a).unwrap();
        let mut s1: Vec<String> = out_ab
            .tracks
            .iter()
            .map(|t| format!("{:.12}", t.score))
            .collect();
        let mut s2: Vec<String> = out_ba
            .tracks
            .iter()
            .map(|t| format!("{:.12}", t.score))
            .collect();
        s1.sort();
        s2.sort();
        assert_eq!(s1, s2);
    }

    #[test]
    fn pair_ids_stay_stable_and_survive_divorce() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.0)).unwrap();
        // Frame 0: pair forms.
        let a = frame(0, vec![track(1, 0.0, 0.0, 0.9)]);
        let b = frame(0, vec![track(5, 0.1, 0.0, 0.8)]);
        let out0 = fuser.fuse_frame(&a, &b).unwrap();
        let merged_id = out0.tracks[0].id;
        // Frame 1: pair persists, same output id.
        let a = frame(1, vec![track(1, 1.0, 0.0, 0.9)]);
        let b = frame(1, vec![track(5, 1.1, 0.0, 0.8)]);
        let out1 = fuser.fuse_frame(&a, &b).unwrap();
        assert_eq!(out1.tracks[0].id, merged_id);
        // Frame 2: divorce; the a member keeps the merged id, b gets fresh.
        let a = frame(2, vec![track(1, 2.0, 0.0, 0.9)]);
        let b = frame(2, vec![track(5, 20.0, 0.0, 0.8)]);
        let out2 = fuser.fuse_frame(&a, &b).unwrap();
        let id_of = |out: &FrameOutput, x: f64| {
            out.tracks
                .iter()
                .find(|t| (t.cx - x).abs() < 0.5)
                .unwrap()
                .id
        };
        assert_eq!(id_of(&out2, 2.0), merged_id);
        assert_ne!(id_of(&out2, 20.0), merged_id);
        // Frame 3: the same pair re-forms and recovers the merged id.
        let a = frame(3, vec![track(1, 3.0, 0.0, 0.9)]);
        let b = frame(3, vec![track(5, 3.1, 0.0, 0.8)]);
        let out3 = fuser.fuse_frame(&a, &b).unwrap();
        assert_eq!(out3.tracks[0].id, merged_id);
    }

    #[test]
    fn output_ids_unique_within_each_frame() {
        let mut fuser =
            EnsembleFuser::new(cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.0)).unwrap();
        // Exercise pairing, divorce, re-pairing with a different partner.
        let frames = vec![
            (
                frame(0, vec![track(1, 0.0, 0.0, 0.9), track(2, 10.0, 0.0, 0.8)]),
                frame(0, vec![track(5, 0.1, 0.0, 0.7)]),
            ),
            (
                frame(1, vec![track(1, 0.0, 0.0, 0.9)]),
                frame(1, vec![track(5, 10.0, 0.0, 0.7), track(6, 0.1, 0.0, 0.6)]),
            ),
            (
                frame(2, vec![track(1, 0.0, 0.0, 0.9), track(2, 10.0, 0.0, 0.8)]),
                frame(2, vec![track(5, 0.1, 0.0, 0.7), track(6, 10.1, 0.0, 0.6)]),
            ),
        ];
        for (a, b) in &frames {
            let out = fuser.fuse_frame(a, b).unwrap();
            let ids: BTreeSet<u64> = out.tracks.iter().map(|t| t.id).collect();
            assert_eq!(
                ids.len(),
                out.tracks.len(),
                "duplicate output id in frame {}",
                a.frame
            );
        }
    }

    #[test]
    fn cardinality_identities_hold_on_random_frames() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for case in 0..100 {
            let mk_frame = |rng: &mut rand_chacha::ChaCha8Rng, base_id: u64| {
                let n = rng.gen_range(0..6usize);
                let tracks = (0..n)
                    .map(|i| {
                        track(
                            base_id + i as u64,
                            rng.gen_range(-15.0..15.0),
                            rng.gen_range(-15.0..15.0),
                            rng.gen_range(0.01..1.0),
                        )
                    })
                    .collect();
                frame(0, tracks)
            };
            let a = mk_frame(&mut rng, 1);
            let b = mk_frame(&mut rng, 100);
            let matches = cross_match(&a, &b, 2.0).unwrap();
            let mut fuser =
                EnsembleFuser::new(cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.0))
                    .unwrap();
            let affirmative = fuser.fuse_affirmative(&a, &b, &matches);
            let unanimous = fuser.fuse_unanimous(&a, &b, &matches);
            assert_eq!(
                affirmative.tracks.len(),
                a.tracks.len() + b.tracks.len() - matches.matches.len(),
                "case {case}"
            );
            assert_eq!(unanimous.tracks.len(), matches.matches.len(), "case {case}");
        }
    }

    #[test]
    fn fuse_streams_aligns_missing_frames() {
        let cfg = cfg(Strategy::Affirmative, DecayPolicy::DecayBoth, 0.0);
        let a = vec![frame(0, vec![track(1, 0.0, 0.0, 0.9)])];
        let b = vec![frame(1, vec![track(5, 5.0, 0.0, 0.8)])];
        let out = fuse_streams(&cfg, &a, &b).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].tracks.len(), 1);
        assert_eq!(out[1].tracks.len(), 1);
    }
}
