//! Per-run penalty breakdowns and equilibrium gaps, as CSV and JSON for
//! plotting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::{io_err, read_json, Result};
use crate::tournament::RunRecord;

/// One (instance, solver) row. Percentages are of `|z_ms|` for penalties and
/// of `z_ms` for consumer value and producer cost; all are absent when the
/// row is flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub instance: String,
    pub solver: String,
    pub division: u8,
    pub score: f64,
    pub z_ms: Option<f64>,
    /// No objective, or `z_ms == 0`: percentages are undefined.
    pub flagged: bool,
    pub p_imbalance_pct: Option<f64>,
    pub q_imbalance_pct: Option<f64>,
    pub branch_overload_pct: Option<f64>,
    pub reserve_shortfall_pct: Option<f64>,
    pub contingency_pct: Option<f64>,
    pub energy_limit_pct: Option<f64>,
    pub consumer_value_pct: Option<f64>,
    pub producer_cost_pct: Option<f64>,
    pub equilibrium_surplus: f64,
    pub abs_gap: Option<f64>,
    pub rel_gap_surplus: Option<f64>,
    pub rel_gap_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub rows: Vec<BreakdownRow>,
}

pub fn breakdown_row(r: &RunRecord) -> BreakdownRow {
    let obj = r.evaluation.as_ref().filter(|e| e.is_feasible()).and_then(|e| e.objective.as_ref());
    let z = obj.map(|o| o.z_ms);
    let flagged = z.is_none_or(|z| z == 0.0);
    let pct = |x: f64, denom: f64| (!flagged).then(|| 100.0 * x / denom);
    let (mut row_p, mut row_q, mut row_s, mut row_r, mut row_c, mut row_e, mut val, mut cost) =
        (None, None, None, None, None, None, None, None);
    if let (Some(o), Some(z)) = (obj, z) {
        let t = &o.totals;
        row_p = pct(t.z_p, z.abs());
        row_q = pct(t.z_q, z.abs());
        row_s = pct(t.z_s, z.abs());
        row_r = pct(t.z_rsv_zone, z.abs());
        row_c = pct(o.z_ctg_worst + o.z_ctg_avg, z.abs());
        row_e = pct(o.z_en, z.abs());
        val = pct(t.consumer_value, z);
        cost = pct(t.producer_cost, z);
    }
    let abs_gap = z.map(|z| r.equilibrium_surplus - z);
    BreakdownRow {
        instance: r.instance.clone(),
        solver: r.solver.clone(),
        division: r.division,
        score: r.score,
        z_ms: z,
        flagged,
        p_imbalance_pct: row_p,
        q_imbalance_pct: row_q,
        branch_overload_pct: row_s,
        reserve_shortfall_pct: row_r,
        contingency_pct: row_c,
        energy_limit_pct: row_e,
        consumer_value_pct: val,
        producer_cost_pct: cost,
        equilibrium_surplus: r.equilibrium_surplus,
        abs_gap,
        rel_gap_surplus: abs_gap.filter(|_| r.equilibrium_surplus != 0.0).map(|g| g / r.equilibrium_surplus),
        rel_gap_cost: abs_gap.filter(|_| r.equilibrium_gen_cost != 0.0).map(|g| g / r.equilibrium_gen_cost),
    }
}

impl BreakdownReport {
    pub fn from_runs(records: &[RunRecord]) -> Self {
        Self { rows: records.iter().map(breakdown_row).collect() }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
    }
}

/// Run records from every `*.json` file in `dir`, in file-name order.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}
