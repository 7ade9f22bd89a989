//! Session-replay analysis engine for intention–behaviour alignment.
//!
//! The engine consumes recorded (or synthetic) session bundles — per-step UI
//! evidence plus flow, HTTP, meminfo, and scheduler telemetry — and scores
//! each step for intention–behaviour misalignment:
//!
//! 1. [`evidence`] validates the per-screen EVIDENCE JSON contract.
//! 2. [`intent`] maps evidence deterministically to a `[net, mem, res]`
//!    intent vector.
//! 3. [`channels`] turns raw telemetry into per-channel evidence vectors
//!    (network H, memory M, resource R) with session-local streaming stats.
//! 4. [`alignment`] fuses the channels into a behaviour vector, computes the
//!    RBF alignment score, the backend magnitude, the triage quadrant, and a
//!    forensic-judge confidence.
//! 5. [`pipeline`] runs a whole session and emits the report model.
//!
//! [`calibration`] derives channel hyperparameters from paired-delta tables,
//! and [`providers`] abstracts remote/replay/built-in evidence and judge
//! backends. Numeric kernels are generic over [`num::Real`]; the engine
//! itself runs on the [`Scalar`] alias.

pub mod alignment;
pub mod calibration;
pub mod channels;
pub mod config;
pub mod evidence;
pub mod fixtures;
pub mod intent;
pub mod num;
pub mod pipeline;
pub mod providers;
pub mod report;
pub mod stats;
pub mod telemetry;

/// Scalar type used by the engine's domain types and wire formats.
pub type Scalar = f64;

pub use alignment::{AlignmentResult, BehaviourVector, FusionConfig, Quadrant, Verdict};
pub use evidence::{EvidencePack, IntentContext, ScreenSummary, StateIndicators, UIComponent};
pub use intent::{AxisConstants, IntentVector, StateParams, UIImpactPrior};
pub use pipeline::{SessionReport, StepRecord};
pub use telemetry::SessionBundle;
