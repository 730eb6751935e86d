//! Shared helpers for the criterion benchmarks.

use motkit_core::domain::Detection;
use motkit_core::io::DetectionStreams;
use motkit_core::synth::{generate, ScenarioSpec};

/// Groups a flat detection stream into per-frame lists over `0..n_frames`.
pub fn group_frames(dets: Vec<Detection>, n_frames: u32) -> Vec<(u64, Vec<Detection>)> {
    let mut frames: Vec<(u64, Vec<Detection>)> =
        (0..n_frames as u64).map(|f| (f, Vec::new())).collect();
    for d in dets {
        frames[d.frame as usize].1.push(d);
    }
    frames
}

/// Generates a scenario and packages it as a single-sequence stream map.
pub fn scenario_streams(spec: &ScenarioSpec) -> DetectionStreams {
    let (_, dets) = generate(spec).expect("valid spec");
    let frames = group_frames(dets, spec.n_frames);
    std::iter::once((spec.name.clone(), frames)).collect()
}
