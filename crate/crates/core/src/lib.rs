//! Deterministic vertical federated learning simulator.
//!
//! A desk-scale testbed for label privacy in split learning: a minimal
//! dense NN engine, the VFL training protocol, a defense stack
//! (surrogate gradient substitution, anonymized label distillation,
//! gradient-norm outlier filtering, plus four classic baselines), three
//! label-inference attacks, and a config-driven experiment harness.
//!
//! Everything is seeded: identical configs produce identical results,
//! byte for byte, except wall-clock timing fields.

pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod protocol;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::Metric;
pub use nn::{MlpModel, MlpSpec, SgdConfig};
pub use protocol::{LabelOwner, LossKind, Party, VflSession};
