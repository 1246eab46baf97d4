//! Scenario generation, solver tournaments and penalty-breakdown reports.

pub mod generate;
pub mod io;
pub mod report;
pub mod tournament;

pub use generate::{generate_scenario, Division, ScenarioPreset, SizeClass, Stress};
pub use io::HarnessError;
pub use report::{BreakdownReport, BreakdownRow};
pub use tournament::{run_tournament, Limits, Manifest, RankingTable, RunRecord, SolverEntry, TournamentConfig};
