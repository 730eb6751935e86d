//! Hyperparameter grid search: runs track + eval for every cell of an
//! (update function, score decay, max age) grid and tabulates the headline
//! metrics, one CSV row per cell.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::domain::TrackerConfig;
use crate::eval::{evaluate, EvalConfig, EvalError, GtAnnotation};
use crate::io::DetectionStreams;
use crate::pipeline::{run_sequences, PipelineError};
use crate::score::UpdateFn;

/// Grid axes plus the base configuration shared by every cell. A max-age of
/// 0 stands for unbounded.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub base: TrackerConfig,
    pub update_fns: Vec<UpdateFn>,
    pub score_decays: Vec<f64>,
    pub max_ages: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub update_fn: UpdateFn,
    pub score_decay: f64,
    pub max_age: Option<u32>,
    pub amota: f64,
    pub mota: f64,
    pub fp: u64,
    pub fn_count: u64,
    pub ids: u64,
}

#[derive(Debug, Error)]
pub enum AblateError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("empty grid axis: {0}")]
    EmptyAxis(&'static str),
}

/// Expands the grid in (update_fn, score_decay, max_age) order.
pub fn grid_cells(grid: &GridSpec) -> Result<Vec<TrackerConfig>, AblateError> {
    if grid.update_fns.is_empty() {
        return Err(AblateError::EmptyAxis("update_fns"));
    }
    if grid.score_decays.is_empty() {
        return Err(AblateError::EmptyAxis("score_decays"));
    }
    if grid.max_ages.is_empty() {
        return Err(AblateError::EmptyAxis("max_ages"));
    }
    let mut cells = Vec::new();
    for &update_fn in &grid.update_fns {
        for &score_decay in &grid.score_decays {
            for &max_age in &grid.max_ages {
                cells.push(TrackerConfig {
                    update_fn,
                    score_decay,
                    max_age: (max_age > 0).then_some(max_age),
                    ..grid.base.clone()
                });
            }
        }
    }
    Ok(cells)
}

/// Tracks and evaluates every grid cell; cells run in parallel and the row
/// order is the deterministic grid expansion order.
pub fn run_ablation(
    grid: &GridSpec,
    detections: &DetectionStreams,
    gt: &BTreeMap<String, Vec<GtAnnotation>>,
    eval_cfg: &EvalConfig,
) -> Result<Vec<AblationRow>, AblateError> {
    let cells = grid_cells(grid)?;
    cells
        .par_iter()
        .map(|cfg| {
            let tracks = run_sequences(cfg, detections)?;
            let report = evaluate(gt, &tracks, eval_cfg)?;
            Ok(AblationRow {
                update_fn: cfg.update_fn,
                score_decay: cfg.score_decay,
                max_age: cfg.max_age,
                amota: report.mean.amota,
                mota: report.mean.mota,
                fp: report.mean.fp,
                fn_count: report.mean.fn_count,
                ids: report.mean.ids,
            })
        })
        .collect()
}

/// Flat CSV of the grid results, ready for contour plotting.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("update_fn,score_decay,max_age,amota,mota,fp,fn,ids\n");
    for r in rows {
        let max_age = r.max_age.map_or("inf".to_string(), |m| m.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.update_fn.name(),
            r.score_decay,
            max_age,
            r.amota,
            r.mota,
            r.fp,
            r.fn_count,
            r.ids
        ));
    }
    out
}
