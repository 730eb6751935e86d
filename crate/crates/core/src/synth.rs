//! Seeded synthetic scenes: ground truth plus corrupted detections
//! (Gaussian position noise, dropout, occlusion windows, Poisson clutter,
//! Beta-distributed scores), so tracking claims are testable without any
//! external dataset.
//!
//! Streams are a pure function of the spec. The generator draws from a
//! ChaCha8 stream seeded with the spec's 64-bit seed, in a fixed order:
//! object initial states first (uniform-random placement only), then per
//! frame: per-object position noise, per-object dropout, clutter count,
//! per-clutter placement, and finally the scores (surviving objects, then
//! clutter). Degenerate parameters (zero clutter rate) skip their draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_yaw, Detection};
use crate::eval::GtAnnotation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

/// Initial object placement policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Positions, headings, speeds, and yaw rates drawn uniformly.
    UniformRandom,
    /// Deterministic parallel lanes, well separated, shared speed.
    Lanes,
    /// Deterministic object pairs on intersecting courses that pass through
    /// a common point mid-scenario.
    CrossingLanes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionWindow {
    pub object: u32,
    pub start: u32,
    /// Inclusive end frame.
    pub end: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub n_frames: u32,
    pub n_objects: u32,
    pub classes: Vec<ClassSpec>,
    pub placement: Placement,
    /// Speed range, meters per frame. Uniform-random placement draws from
    /// it; deterministic placements use the midpoint.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Maximum |yaw rate| in radians per frame; 0 keeps courses straight.
    pub yaw_rate_max: f64,
    /// (x_min, x_max, y_min, y_max), meters.
    pub arena: [f64; 4],
    pub position_noise_sigma: f64,
    pub dropout_prob: f64,
    /// Expected false positives per frame (Poisson).
    pub clutter_rate: f64,
    /// Beta(alpha, beta) for true-positive scores.
    pub tp_score_dist: (f64, f64),
    /// Beta(alpha, beta) for clutter scores.
    pub fp_score_dist: (f64, f64),
    #[serde(default)]
    pub occlusion_windows: Vec<OcclusionWindow>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.n_frames == 0 {
            return err("n_frames must be >= 1".into());
        }
        if self.classes.is_empty() {
            return err("at least one class is required".into());
        }
        for c in &self.classes {
            if c.length <= 0.0 || c.width <= 0.0 || c.height <= 0.0 {
                return err(format!("class {} has a non-positive extent", c.label));
            }
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return err(format!("dropout_prob {} outside [0, 1]", self.dropout_prob));
        }
        if self.clutter_rate < 0.0 {
            return err(format!("clutter_rate {} must be >= 0", self.clutter_rate));
        }
        if self.position_noise_sigma < 0.0 {
            return err(format!(
                "position_noise_sigma {} must be >= 0",
                self.position_noise_sigma
            ));
        }
        if self.speed_min < 0.0 || self.speed_max < self.speed_min {
            return err(format!(
                "bad speed range [{}, {}]",
                self.speed_min, self.speed_max
            ));
        }
        if self.yaw_rate_max < 0.0 {
            return err(format!("yaw_rate_max {} must be >= 0", self.yaw_rate_max));
        }
        if self.arena[1] <= self.arena[0] || self.arena[3] <= self.arena[2] {
            return err(format!("degenerate arena {:?}", self.arena));
        }
        for (name, (a, b)) in [
            ("tp_score_dist", self.tp_score_dist),
            ("fp_score_dist", self.fp_score_dist),
        ] {
            if a <= 0.0 || b <= 0.0 {
                return err(format!("{name} parameters must be > 0, got ({a}, {b})"));
            }
        }
        for w in &self.occlusion_windows {
            if w.object >= self.n_objects {
                return err(format!(
                    "occlusion window names object {} of {}",
                    w.object, self.n_objects
                ));
            }
            if w.end < w.start {
                return err(format!(
                    "occlusion window [{}, {}] is reversed",
                    w.start, w.end
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ObjectState {
    class_idx: usize,
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    yaw_rate: f64,
}

fn initial_states(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<ObjectState> {
    let [x_min, x_max, y_min, y_max] = spec.arena;
    let n = spec.n_objects as usize;
    let mid_speed = 0.5 * (spec.speed_min + spec.speed_max);
    match spec.placement {
        Placement::UniformRandom => (0..n)
            .map(|i| {
                let u: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>());
                ObjectState {
                    class_idx: i % spec.classes.len(),
                    x: x_min + u[0] * (x_max - x_min),
                    y: y_min + u[1] * (y_max - y_min),
                    heading: (2.0 * u[2] - 1.0) * std::f64::consts::PI,
                    speed: spec.speed_min + u[3] * (spec.speed_max - spec.speed_min),
                    yaw_rate: (2.0 * u[4] - 1.0) * spec.yaw_rate_max,
                }
            })
            .collect(),
        Placement::Lanes => (0..n)
            .map(|i| ObjectState {
                class_idx: i % spec.classes.len(),
                x: x_min + 5.0 + (i % 3) as f64 * 7.0,
                y: y_min + 6.0 + i as f64 * 6.0,
                heading: 0.0,
                speed: mid_speed,
                yaw_rate: 0.0,
            })
            .collect(),
        Placement::CrossingLanes => {
            let cx = 0.5 * (x_min + x_max);
            let cy = 0.5 * (y_min + y_max);
            let t_cross = spec.n_frames as f64 / 2.0;
            let theta = 20f64.to_radians();
            (0..n)
                .map(|i| {
                    let pair = (i / 2) as f64;
                    let heading = if i % 2 == 0 { theta } else { -theta };
                    let cross_x = cx;
                    let cross_y = cy + pair * 10.0;
                    ObjectState {
                        class_idx: i % spec.classes.len(),
                        x: cross_x - t_cross * mid_speed * heading.cos(),
                        y: cross_y - t_cross * mid_speed * heading.sin(),
                        heading,
                        speed: mid_speed,
                        yaw_rate: 0.0,
                    }
                })
                .collect()
        }
    }
}

/// Generates the ground-truth stream and the corrupted detection stream.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<GtAnnotation>, Vec<Detection>), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut objects = initial_states(spec, &mut rng);
    let tp_dist = Beta::new(spec.tp_score_dist.0, spec.tp_score_dist.1)
        .map_err(|e| SynthError::InvalidSpec(format!("tp_score_dist: {e}")))?;
    let fp_dist = Beta::new(spec.fp_score_dist.0, spec.fp_score_dist.1)
        .map_err(|e| SynthError::InvalidSpec(format!("fp_score_dist: {e}")))?;
    let poisson = if spec.clutter_rate > 0.0 {
        Some(
            Poisson::new(spec.clutter_rate)
                .map_err(|e| SynthError::InvalidSpec(format!("clutter_rate: {e}")))?,
        )
    } else {
        None
    };
    let [x_min, x_max, y_min, y_max] = spec.arena;

    let mut gt = Vec::new();
    let mut detections = Vec::new();
    for frame in 0..spec.n_frames {
        for (i, o) in objects.iter().enumerate() {
            let class = &spec.classes[o.class_idx];
            gt.push(GtAnnotation {
                frame: frame as u64,
                instance_id: i as u64 + 1,
                class_label: class.label.clone(),
                cx: o.x,
                cy: o.y,
                cz: class.height / 2.0,
                length: class.length,
                width: class.width,
                height: class.height,
                yaw: normalize_yaw(o.heading),
            });
        }

        // Position noise for every object, drawn regardless of survival.
        let noise: Vec<(f64, f64)> = objects
            .iter()
            .map(|_| {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                (
                    dx * spec.position_noise_sigma,
                    dy * spec.position_noise_sigma,
                )
            })
            .collect();
        // Dropout, then occlusion windows.
        let survives: Vec<bool> = objects
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let dropped = rng.gen::<f64>() < spec.dropout_prob;
                let occluded = spec
                    .occlusion_windows
                    .iter()
                    .any(|w| w.object as usize == i && (w.start..=w.end).contains(&frame));
                !dropped && !occluded
            })
            .collect();
        // Clutter count and placement.
        let n_clutter = match &poisson {
            Some(p) => p.sample(&mut rng) as usize,
            None => 0,
        };
        let clutter: Vec<(f64, f64, usize, f64)> = (0..n_clutter)
            .map(|_| {
                let x = x_min + rng.gen::<f64>() * (x_max - x_min);
                let y = y_min + rng.gen::<f64>() * (y_max - y_min);
                let class_idx = rng.gen_range(0..spec.classes.len());
                let yaw = normalize_yaw((2.0 * rng.gen::<f64>() - 1.0) * std::f64::consts::PI);
                (x, y, class_idx, yaw)
            })
            .collect();
        // Scores last: surviving objects first, then clutter.
        for (i, o) in objects.iter().enumerate() {
            if !survives[i] {
                continue;
            }
            let class = &spec.classes[o.class_idx];
            let score: f64 = tp_dist.sample(&mut rng);
            detections.push(Detection {
                frame: frame as u64,
                class_label: class.label.clone(),
                cx: o.x + noise[i].0,
                cy: o.y + noise[i].1,
                cz: class.height / 2.0,
                length: class.length,
                width: class.width,
                height: class.height,
                yaw: normalize_yaw(o.heading),
                score: score.clamp(0.0, 1.0),
            });
        }
        for &(x, y, class_idx, yaw) in &clutter {
            let class = &spec.classes[class_idx];
            let score: f64 = fp_dist.sample(&mut rng);
            detections.push(Detection {
                frame: frame as u64,
                class_label: class.label.clone(),
                cx: x,
                cy: y,
                cz: class.height / 2.0,
                length: class.length,
                width: class.width,
                height: class.height,
                yaw,
                score: score.clamp(0.0, 1.0),
            });
        }

        for o in objects.iter_mut() {
            o.heading += o.yaw_rate;
            o.x += o.speed * o.heading.cos();
            o.y += o.speed * o.heading.sin();
        }
    }
    Ok((gt, detections))
}

/// Named acceptance suites: fixed, versioned scenario lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Perfect detections; any sane tracker scores AMOTA 1.
    Easy,
    /// Detection gaps of 2-5 frames per object plus light noise.
    Occlusion,
    /// Heavy low-score clutter over randomly moving objects.
    Clutter,
    /// Object pairs passing within the match gate to provoke id switches.
    Crossing,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Easy,
        Suite::Occlusion,
        Suite::Clutter,
        Suite::Crossing,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Easy => "easy",
            Suite::Occlusion => "occlusion",
            Suite::Clutter => "clutter",
            Suite::Crossing => "crossing",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.iter().copied().find(|s| s.name() == name)
    }
}

fn car() -> ClassSpec {
    ClassSpec {
        label: "car".into(),
        length: 4.6,
        width: 1.9,
        height: 1.7,
    }
}

fn pedestrian() -> ClassSpec {
    ClassSpec {
        label: "pedestrian".into(),
        length: 0.8,
        width: 0.8,
        height: 1.8,
    }
}

/// The fixed scenario list behind a suite name.
pub fn scenario_suite(suite: Suite) -> Vec<ScenarioSpec> {
    match suite {
        Suite::Easy => (0..5)
            .map(|i| ScenarioSpec {
                name: format!("easy-{i:02}"),
                seed: 101 + i,
                n_frames: 40,
                n_objects: 4,
                classes: vec![car(), pedestrian()],
                placement: Placement::Lanes,
                speed_min: 0.8,
                speed_max: 0.8,
                yaw_rate_max: 0.0,
                arena: [-50.0, 50.0, -50.0, 50.0],
                position_noise_sigma: 0.0,
                dropout_prob: 0.0,
                clutter_rate: 0.0,
                tp_score_dist: (8.0, 2.0),
                fp_score_dist: (2.0, 5.0),
                occlusion_windows: vec![],
            })
            .collect(),
        Suite::Occlusion => (0..20)
            .map(|i| {
                let n_objects = 6;
                let occlusion_windows = (0..n_objects)
                    .map(|o| {
                        let start = 12 + 5 * o + (i as u32 % 3);
                        let len = 2 + (o + i as u32) % 4;
                        OcclusionWindow {
                            object: o,
                            start,
                            end: start + len - 1,
                        }
                    })
                    .collect();
                ScenarioSpec {
                    name: format!("occlusion-{i:02}"),
                    seed: 1000 + i,
                    n_frames: 60,
                    n_objects,
                    classes: vec![car()],
                    placement: Placement::Lanes,
                    speed_min: 0.9,
                    speed_max: 0.9,
                    yaw_rate_max: 0.0,
                    arena: [-50.0, 50.0, -50.0, 50.0],
                    position_noise_sigma: 0.08,
                    dropout_prob: 0.05,
                    clutter_rate: 1.0,
                    tp_score_dist: (8.0, 2.0),
                    fp_score_dist: (2.0, 5.0),
                    occlusion_windows,
                }
            })
            .collect(),
        Suite::Clutter => (0..20)
            .map(|i| ScenarioSpec {
                name: format!("clutter-{i:02}"),
                seed: 2000 + i,
                n_frames: 70,
                n_objects: 6,
                classes: vec![car()],
                placement: Placement::UniformRandom,
                speed_min: 0.4,
                speed_max: 1.0,
                yaw_rate_max: 0.0,
                arena: [-16.0, 16.0, -16.0, 16.0],
                position_noise_sigma: 0.1,
                dropout_prob: 0.05,
                clutter_rate: 10.0,
                tp_score_dist: (8.0, 2.0),
                fp_score_dist: (2.0, 4.0),
                occlusion_windows: vec![],
            })
            .collect(),
        Suite::Crossing => (0..10)
            .map(|i| ScenarioSpec {
                name: format!("crossing-{i:02}"),
                seed: 3000 + i,
                n_frames: 50,
                n_objects: 4,
                classes: vec![car()],
                placement: Placement::CrossingLanes,
                speed_min: 1.2,
                speed_max: 1.2,
                yaw_rate_max: 0.0,
                arena: [-40.0, 40.0, -40.0, 40.0],
                position_noise_sigma: 0.18,
                dropout_prob: 0.12,
                clutter_rate: 0.5,
                tp_score_dist: (8.0, 2.0),
                fp_score_dist: (2.0, 5.0),
                occlusion_windows: vec![],
            })
            .collect(),
    }
}
