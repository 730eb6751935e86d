//! Confidence-based 3D multi-object tracking.
//!
//! A tracking-by-detection engine built around tracklet score refinement:
//! matched tracklets have their score raised by a configurable update
//! function, unmatched tracklets decay by a constant per frame, and the
//! lifecycle (birth, activation, deletion) is driven either by those scores
//! or by classic hit/miss counting. The crate also ships a two-stream
//! late-fusion ensembler, a CLEAR/AMOTA evaluation suite, and a seeded
//! synthetic scenario generator so the whole pipeline is verifiable without
//! external datasets.

pub mod ablate;
pub mod assoc;
pub mod domain;
pub mod ensemble;
pub mod eval;
pub mod io;
pub mod lifecycle;
pub mod motion;
pub mod pipeline;
pub mod score;
pub mod synth;

pub use assoc::{greedy_assign, hungarian_assign, CostMatrix, Matcher, Metric};
pub use domain::{
    validate_detection, AssignmentResult, Detection, DomainError, TrackerConfig, Tracklet,
};
pub use ensemble::{DecayPolicy, EnsembleConfig, EnsembleFuser, Strategy};
pub use eval::{EvalConfig, EvalError, GtAnnotation, MetricsReport, MotarConvention};
pub use io::{ConfigError, FileError};
pub use lifecycle::LifecycleMode;
pub use motion::{FilterKind, FilterState, KalmanParams};
pub use pipeline::{FrameOutput, PipelineError, TrackRecord, Tracker};
pub use score::UpdateFn;
pub use synth::{ScenarioSpec, Suite};
