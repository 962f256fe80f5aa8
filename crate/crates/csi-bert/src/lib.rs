//! Recovery of lost Wi-Fi CSI frames.
//!
//! Packet loss leaves holes in fixed-rate CSI captures. This crate recovers
//! those holes with a small bidirectional-transformer model pretrained by
//! masked reconstruction with an adversarial discriminator, and benchmarks it
//! against classical per-subcarrier interpolation (linear, ordinary kriging,
//! inverse-distance weighting) under a controlled deletion protocol.
//!
//! Module map:
//!
//! - [`data`] — CSI sequences, CSV ingestion, windowing, synthetic generation,
//!   packet-loss simulation.
//! - [`masking`] — mask plans and `[MASK]`/`[PAD]` materialization for
//!   pretraining and recovery.
//! - [`nn`] — the f64 neural-network building blocks (structured backprop,
//!   no framework).
//! - [`model`] — the CSI transformer: embedding stack, encoder trunk,
//!   recoverer / discriminator / classification heads, checkpoints.
//! - [`training`] — pretraining with the five-part mixed loss; head-only
//!   fine-tuning.
//! - [`recovery`] — inference-time `recover` / `replace` reconstruction.
//! - [`baselines`] — linear, kriging, and IDW interpolation over time.
//! - [`metrics`] — deletion protocol, pointwise errors, Fréchet shape
//!   similarity, loss-rate sweeps, downstream probe.
//!
//! Everything that draws randomness takes an explicit seed; identical seeds
//! give bit-identical results on one machine.

pub mod baselines;
pub mod data;
pub mod error;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod recovery;
pub mod seeding;
pub mod training;

pub use data::{CsiFrame, CsiSequence, Dataset, LossModel, LossStats, SynthConfig};
pub use error::{Error, Result};
pub use masking::MaskPlan;
pub use metrics::{EvalPlan, MethodMetrics, MetricsReport};
pub use model::{CsiBert, ModelConfig, StandardStats};
pub use recovery::{RecoveryMode, RecoveryResult, SlotProvenance};
pub use training::{LossBreakdown, TrainConfig};
