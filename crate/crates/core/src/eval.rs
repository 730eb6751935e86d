//! CLEAR-style ground-truth association and the tracking metric suite:
//! MOTA, MOTAR, AMOTA, FP/FN/IDS counts, per-class recall sweeps, and the
//! aggregated metrics report.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::FrameOutput;

/// One ground-truth box of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtAnnotation {
    pub frame: u64,
    /// Stable per-object id across the whole sequence.
    pub instance_id: u64,
    pub class_label: String,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

/// Sign convention for the recall-normalized term of MOTAR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotarConvention {
    /// Subtracts `(1-r)*GT` from the error sum: misses explained by the
    /// recall target are not charged. This is the convention the reported
    /// AMOTA magnitudes follow.
    Devkit,
    /// Adds `(1-r)*GT` instead. Kept selectable for auditability; at low
    /// recall it floors MOTAR at 0 even for an otherwise perfect tracker.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    /// Center-distance match threshold, meters.
    pub dist_th: f64,
    /// Number of recall values `n`; MOTAR is averaged over the n-1 targets
    /// `1/(n-1) .. 1`.
    pub recall_points: usize,
    pub convention: MotarConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            dist_th: 2.0,
            recall_points: 40,
            convention: MotarConvention::Devkit,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no ground truth annotations")]
    ZeroGroundTruth,
    #[error("recall {0} outside (0, 1]")]
    RecallOutOfRange(f64),
    #[error("recall_points must be >= 2, got {0}")]
    TooFewRecallPoints(usize),
}

/// Aggregated association counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub ids: u64,
}

/// `MOTA = 1 - (FP + FN + IDS) / GT`; may be negative.
pub fn mota(fp: u64, fn_count: u64, ids: u64, gt: u64) -> Result<f64, EvalError> {
    if gt == 0 {
        return Err(EvalError::ZeroGroundTruth);
    }
    Ok(1.0 - (fp + fn_count + ids) as f64 / gt as f64)
}

/// Recall-normalized MOTA at target recall `r`, clamped to `[0, 1]`.
pub fn motar(
    ids_r: u64,
    fp_r: u64,
    fn_r: u64,
    gt: u64,
    r: f64,
    convention: MotarConvention,
) -> Result<f64, EvalError> {
    if gt == 0 {
        return Err(EvalError::ZeroGroundTruth);
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(EvalError::RecallOutOfRange(r));
    }
    let errors = (ids_r + fp_r + fn_r) as f64;
    let adjust = (1.0 - r) * gt as f64;
    let numerator = match convention {
        MotarConvention::Devkit => errors - adjust,
        MotarConvention::Paper => errors + adjust,
    };
    Ok((1.0 - numerator / (r * gt as f64)).clamp(0.0, 1.0))
}

/// One evaluated point of a recall sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecallPoint {
    /// The target recall this point was evaluated for.
    pub recall: f64,
    /// Highest score threshold achieving the target, if any.
    pub threshold: Option<f64>,
    pub motar: f64,
    pub achieved_recall: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

/// Mean of MOTAR over the sweep points (unachieved targets contribute 0).
pub fn amota(sweep: &[RecallPoint]) -> f64 {
    if sweep.is_empty() {
        return 0.0;
    }
    sweep.iter().map(|p| p.motar).sum::<f64>() / sweep.len() as f64
}

// ---------------------------------------------------------------------------
// CLEAR association
// ---------------------------------------------------------------------------

fn dist2d(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

#[derive(Clone, Debug)]
struct FrameSlice {
    /// (instance_id, x, y), ascending instance id.
    gts: Vec<(u64, f64, f64)>,
    /// (track_id, score, x, y), descending score (ties: ascending id).
    preds: Vec<(u64, f64, f64, f64)>,
    /// (dist, gt index, pred index) for pairs within the gate, sorted by
    /// (dist, gt instance, track id).
    pairs: Vec<(f64, usize, usize)>,
}

fn build_frame_slice(
    gts: Vec<(u64, f64, f64)>,
    mut preds: Vec<(u64, f64, f64, f64)>,
    dist_th: f64,
) -> FrameSlice {
    preds.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut pairs = Vec::new();
    for (gi, g) in gts.iter().enumerate() {
        for (pi, p) in preds.iter().enumerate() {
            let d = dist2d(g.1, g.2, p.2, p.3);
            if d <= dist_th {
                pairs.push((d, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(gts[a.1].0.cmp(&gts[b.1].0))
            .then(preds[a.2].0.cmp(&preds[b.2].0))
    });
    FrameSlice { gts, preds, pairs }
}

/// Associates one frame slice at a score threshold. `last_match` carries the
/// last (instance -> track id) pairing across frames for continuity and id
/// switch counting.
fn match_frame(
    slice: &FrameSlice,
    threshold: f64,
    last_match: &mut BTreeMap<u64, u64>,
    counts: &mut Counts,
) {
    // Predictions are sorted by descending score: the operating set at this
    // threshold is a prefix.
    let active = slice.preds.partition_point(|p| p.1 >= threshold);
    let mut gt_used = vec![false; slice.gts.len()];
    let mut pred_used = vec![false; active];
    let mut matched_pairs: Vec<(usize, usize)> = Vec::new();

    // Keep previous pairings first when still within the gate; the pair
    // list already encodes the gate.
    for (gi, g) in slice.gts.iter().enumerate() {
        if let Some(&tid) = last_match.get(&g.0) {
            if let Some(pi) = slice.preds[..active].iter().position(|p| p.0 == tid) {
                if !pred_used[pi]
                    && slice
                        .pairs
                        .iter()
                        .any(|&(_, pgi, ppi)| pgi == gi && ppi == pi)
                {
                    gt_used[gi] = true;
                    pred_used[pi] = true;
                    matched_pairs.push((gi, pi));
                }
            }
        }
    }

    // Remaining candidates greedily by ascending distance.
    for &(_d, gi, pi) in &slice.pairs {
        if pi >= active || gt_used[gi] || pred_used[pi] {
            continue;
        }
        gt_used[gi] = true;
        pred_used[pi] = true;
        matched_pairs.push((gi, pi));
    }

    for (gi, pi) in matched_pairs {
        let instance = slice.gts[gi].0;
        let tid = slice.preds[pi].0;
        if let Some(&prev) = last_match.get(&instance) {
            if prev != tid {
                counts.ids += 1;
            }
        }
        last_match.insert(instance, tid);
        counts.tp += 1;
    }
    counts.fp += pred_used.iter().filter(|&&u| !u).count() as u64;
    counts.fn_count += gt_used.iter().filter(|&&u| !u).count() as u64;
}

/// Per-class eval data for one sequence: frame slices in frame order.
type SequenceSlices = Vec<FrameSlice>;

/// Slices ground truth and predictions of one sequence by (frame, class).
type RawFrame = (Vec<(u64, f64, f64)>, Vec<(u64, f64, f64, f64)>);

fn build_slices(
    gt: &[GtAnnotation],
    preds: &[FrameOutput],
    dist_th: f64,
) -> BTreeMap<String, SequenceSlices> {
    // (class -> frame -> (gts, preds))
    let mut by_class: BTreeMap<String, BTreeMap<u64, RawFrame>> = BTreeMap::new();
    for g in gt {
        by_class
            .entry(g.class_label.clone())
            .or_default()
            .entry(g.frame)
            .or_default()
            .0
            .push((g.instance_id, g.cx, g.cy));
    }
    for frame in preds {
        for t in &frame.tracks {
            if !t.active {
                continue;
            }
            if let Some(class) = by_class.get_mut(&t.class_label) {
                class
                    .entry(frame.frame)
                    .or_default()
                    .1
                    .push((t.id, t.score, t.cx, t.cy));
            }
        }
    }
    by_class
        .into_iter()
        .map(|(class, frames)| {
            let slices = frames
                .into_values()
                .map(|(mut gts, preds)| {
                    gts.sort_by_key(|g| g.0);
                    build_frame_slice(gts, preds, dist_th)
                })
                .collect();
            (class, slices)
        })
        .collect()
}

/// CLEAR association of one sequence at a single operating point (no score
/// filtering): per-class TP/FP/FN/IDS counts. Predictions of classes absent
/// from the ground truth are ignored.
pub fn associate_frames(
    gt: &[GtAnnotation],
    preds: &[FrameOutput],
    dist_th: f64,
) -> BTreeMap<String, Counts> {
    let slices = build_slices(gt, preds, dist_th);
    slices
        .into_iter()
        .map(|(class, frames)| {
            let mut counts = Counts::default();
            let mut last_match = BTreeMap::new();
            for slice in &frames {
                match_frame(slice, f64::NEG_INFINITY, &mut last_match, &mut counts);
            }
            (class, counts)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Threshold sweeps
// ---------------------------------------------------------------------------

struct ClassData {
    gt_total: u64,
    /// One slice list per sequence.
    sequences: Vec<SequenceSlices>,
    /// Distinct prediction scores, descending.
    thresholds: Vec<f64>,
}

fn build_class_data(
    gt: &BTreeMap<String, Vec<GtAnnotation>>,
    preds: &BTreeMap<String, Vec<FrameOutput>>,
    dist_th: f64,
) -> BTreeMap<String, ClassData> {
    let empty_frames: Vec<FrameOutput> = Vec::new();
    let mut per_class: BTreeMap<String, ClassData> = BTreeMap::new();
    for (seq, seq_gt) in gt {
        let seq_preds = preds.get(seq).unwrap_or(&empty_frames);
        for (class, slices) in build_slices(seq_gt, seq_preds, dist_th) {
            let gt_count: u64 = slices.iter().map(|s| s.gts.len() as u64).sum();
            let entry = per_class.entry(class).or_insert_with(|| ClassData {
                gt_total: 0,
                sequences: Vec::new(),
                thresholds: Vec::new(),
            });
            entry.gt_total += gt_count;
            entry.sequences.push(slices);
        }
    }
    for data in per_class.values_mut() {
        let mut scores: Vec<f64> = data
            .sequences
            .iter()
            .flat_map(|s| s.iter())
            .flat_map(|slice| slice.preds.iter().map(|p| p.1))
            .collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        scores.dedup();
        data.thresholds = scores;
    }
    per_class
}

fn counts_at_threshold(data: &ClassData, threshold: f64) -> Counts {
    let mut counts = Counts::default();
    for seq in &data.sequences {
        let mut last_match = BTreeMap::new();
        for slice in seq {
            match_frame(slice, threshold, &mut last_match, &mut counts);
        }
    }
    counts
}

/// Counts at every distinct score threshold, descending.
fn threshold_stats(data: &ClassData) -> Vec<(f64, Counts)> {
    data.thresholds
        .par_iter()
        .map(|&t| (t, counts_at_threshold(data, t)))
        .collect()
}

fn sweep_from_stats(
    data: &ClassData,
    stats: &[(f64, Counts)],
    recall_points: usize,
    convention: MotarConvention,
) -> Result<Vec<RecallPoint>, EvalError> {
    if recall_points < 2 {
        return Err(EvalError::TooFewRecallPoints(recall_points));
    }
    let n1 = recall_points - 1;
    let gt = data.gt_total;
    let mut points = Vec::with_capacity(n1);
    for k in 1..=n1 {
        let target = k as f64 / n1 as f64;
        // Highest threshold whose operating set reaches the target recall:
        // stats are ordered by descending threshold, so the first hit wins.
        let hit = stats
            .iter()
            .find(|(_, c)| c.tp as f64 / gt as f64 >= target);
        match hit {
            Some(&(threshold, counts)) => points.push(RecallPoint {
                recall: target,
                threshold: Some(threshold),
                motar: motar(
                    counts.ids,
                    counts.fp,
                    counts.fn_count,
                    gt,
                    target,
                    convention,
                )?,
                achieved_recall: counts.tp as f64 / gt as f64,
                counts,
            }),
            None => points.push(RecallPoint {
                recall: target,
                threshold: None,
                motar: 0.0,
                achieved_recall: 0.0,
                counts: Counts::default(),
            }),
        }
    }
    Ok(points)
}

/// Recall sweep per class: for each target recall `r` in `{1/(n-1) .. 1}`
/// finds the highest score threshold whose filtered prediction set achieves
/// recall >= r and evaluates MOTAR there. Unreachable targets contribute 0.
pub fn recall_sweep(
    gt: &BTreeMap<String, Vec<GtAnnotation>>,
    preds: &BTreeMap<String, Vec<FrameOutput>>,
    recall_points: usize,
    dist_th: f64,
    convention: MotarConvention,
) -> Result<BTreeMap<String, Vec<RecallPoint>>, EvalError> {
    let per_class = build_class_data(gt, preds, dist_th);
    per_class
        .into_iter()
        .map(|(class, data)| {
            let stats = threshold_stats(&data);
            sweep_from_stats(&data, &stats, recall_points, convention).map(|s| (class, s))
        })
        .collect()
}

/// Best MOTA of one class over all distinct score thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassBest {
    pub threshold: f64,
    pub mota: f64,
    pub counts: Counts,
}

fn best_from_stats(data: &ClassData, stats: &[(f64, Counts)]) -> ClassBest {
    let gt = data.gt_total;
    // No predictions at all: everything is a miss, MOTA = 1 - GT/GT = 0.
    let mut best = ClassBest {
        threshold: 0.0,
        mota: 0.0,
        counts: Counts {
            tp: 0,
            fp: 0,
            fn_count: gt,
            ids: 0,
        },
    };
    let mut have_any = false;
    for &(threshold, counts) in stats {
        let m = mota(counts.fp, counts.fn_count, counts.ids, gt).expect("gt > 0 per class");
        if !have_any || m > best.mota {
            best = ClassBest {
                threshold,
                mota: m,
                counts,
            };
            have_any = true;
        }
    }
    if have_any && best.mota < 0.0 {
        // A threshold above every score (empty prediction set) is always
        // admissible and scores exactly 0.
        best = ClassBest {
            threshold: data.thresholds.first().copied().unwrap_or(0.0) + 1.0,
            mota: 0.0,
            counts: Counts {
                tp: 0,
                fp: 0,
                fn_count: gt,
                ids: 0,
            },
        };
    }
    best
}

/// Fine-tunes the score threshold per class and reports the class-wise
/// maximum MOTA.
pub fn best_mota(
    gt: &BTreeMap<String, Vec<GtAnnotation>>,
    preds: &BTreeMap<String, Vec<FrameOutput>>,
    dist_th: f64,
) -> BTreeMap<String, ClassBest> {
    let per_class = build_class_data(gt, preds, dist_th);
    per_class
        .into_iter()
        .map(|(class, data)| {
            let stats = threshold_stats(&data);
            let best = best_from_stats(&data, &stats);
            (class, best)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub amota: f64,
    pub mota: f64,
    pub best_threshold: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub ids: u64,
    pub gt: u64,
    pub curve: Vec<RecallPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    /// Unweighted mean of the per-class AMOTA values.
    pub amota: f64,
    /// Ground-truth-weighted mean of the per-class best MOTA values.
    pub mota: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub ids: u64,
    pub gt: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dist_th: f64,
    pub recall_points: usize,
    pub motar_convention: MotarConvention,
    pub per_class: BTreeMap<String, ClassReport>,
    pub mean: Summary,
}

/// Pretty-printed JSON encoding of a metrics report.
pub fn report_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Evaluates tracked output against ground truth over all sequences.
/// FP/FN/IDS are reported at the per-class MOTA-maximizing threshold.
pub fn evaluate(
    gt: &BTreeMap<String, Vec<GtAnnotation>>,
    preds: &BTreeMap<String, Vec<FrameOutput>>,
    cfg: &EvalConfig,
) -> Result<MetricsReport, EvalError> {
    let per_class_data = build_class_data(gt, preds, cfg.dist_th);
    if per_class_data.is_empty() {
        return Err(EvalError::ZeroGroundTruth);
    }
    let mut per_class = BTreeMap::new();
    for (class, data) in &per_class_data {
        let stats = threshold_stats(data);
        let curve = sweep_from_stats(data, &stats, cfg.recall_points, cfg.convention)?;
        let best = best_from_stats(data, &stats);
        per_class.insert(
            class.clone(),
            ClassReport {
                amota: amota(&curve),
                mota: best.mota,
                best_threshold: best.threshold,
                fp: best.counts.fp,
                fn_count: best.counts.fn_count,
                ids: best.counts.ids,
                gt: data.gt_total,
                curve,
            },
        );
    }
    let n_classes = per_class.len() as f64;
    let gt_total: u64 = per_class.values().map(|c| c.gt).sum();
    let mean = Summary {
        amota: per_class.values().map(|c| c.amota).sum::<f64>() / n_classes,
        mota: per_class
            .values()
            .map(|c| c.mota * c.gt as f64)
            .sum::<f64>()
            / gt_total as f64,
        fp: per_class.values().map(|c| c.fp).sum(),
        fn_count: per_class.values().map(|c| c.fn_count).sum(),
        ids: per_class.values().map(|c| c.ids).sum(),
        gt: gt_total,
    };
    Ok(MetricsReport {
        dist_th: cfg.dist_th,
        recall_points: cfg.recall_points,
        motar_convention: cfg.convention,
        per_class,
        mean,
    })
}
