//! Core data model and evaluation machinery for AC security-constrained unit
//! commitment with market-surplus objective.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: instances, solutions, piecewise-linear curves, lookback
//!   windows and topology labelling.
//! - [`acpf`]: complex branch/shunt flow arithmetic, bus imbalances and a
//!   Newton-Raphson power flow.
//! - [`contingency`]: lossless DC post-contingency model, connectivity checks
//!   and line-outage distribution factor screening.
//! - [`objective`]: every objective and penalty term and their assembly.
//! - [`evaluator`]: hard-constraint gate, full objective, score and
//!   feasibility class.
//! - [`equilibrium`]: system-wide supply/demand clearing used as a reference
//!   bound.
//!
//! Per-interval and per-contingency work is spread over a rayon pool when the
//! `parallel` feature is enabled (the default); see [`par::Exec`].

pub mod acpf;
pub mod contingency;
pub mod equilibrium;
pub mod evaluator;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod par;

pub use acpf::C64;
pub use evaluator::{evaluate, evaluate_json, evaluate_with, EvalOptions, Evaluation, FeasibilityClass};
pub use model::{Instance, InstanceData, Solution};
pub use par::Exec;
