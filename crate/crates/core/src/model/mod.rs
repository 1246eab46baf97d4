//! Instance and solution data model.
//!
//! Files carry string ids; everything downstream works with dense indices
//! resolved once into [`Index`] when an [`Instance`] is built.

mod builder;
mod instance;
mod lookback;
mod pwl;
mod solution;
mod topology;
mod validate;

pub use builder::InstanceBuilder;
pub use instance::{
    AcBranch, Block, Bus, Contingency, DcBranch, Device, DeviceKind, EnergyConstraint, Index,
    Instance, InstanceData, Interval, PenaltyParams, ReserveZone, Shunt, SwitchLimit, BranchRef,
    FORMAT_VERSION,
};
pub use lookback::{derive_lookback_windows, LookbackWindows};
pub use pwl::{OutOfDomain, PwlCurve};
pub use solution::{
    AcBranchSolution, BusSolution, DcBranchSolution, DeviceSolution, MalformedSolution,
    ShuntSolution, Solution,
};
pub use topology::{build_topology, ComponentLabeling, UnionFind};
pub use validate::{validate_instance, ValidationReport, Violation, ViolationKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported format_version {0:?}")]
    Version(String),
    #[error("instance failed validation: {0}")]
    Invalid(ValidationReport),
}
