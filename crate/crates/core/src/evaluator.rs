//! Solution evaluation: hard-constraint gate, soft-penalty objective, score
//! and feasibility class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contingency::{
    base_dc_state, check_connectivity_with, ctg_aggregate, lodf_screen, overload_penalty, solve_dc, DcInputs,
};
use crate::model::{Instance, Solution};
use crate::objective::{assemble_objective, base_terms, total_energy_penalty, ObjectiveBreakdown};
use crate::par::{map_range, Exec};

pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    Integrality,
    MustRun,
    ForcedOutage,
    Transition,
    ShuntSteps,
    WindingRatio,
    PhaseShift,
    DcFlow,
    Voltage,
    RealPower,
    ReactivePower,
    Ramp,
    Reserve,
    ReserveHeadroom,
    MinUptime,
    MinDowntime,
    MaxStartups,
    MaxShutdowns,
    CurveDomain,
    Connectivity,
    ContingencySolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardViolation {
    pub family: ConstraintFamily,
    pub entity: String,
    pub interval: Option<usize>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub hard_violations: Vec<HardViolation>,
    pub max_violation_per_family: BTreeMap<ConstraintFamily, f64>,
    pub feasible: bool,
}

impl FeasibilityReport {
    fn push(&mut self, family: ConstraintFamily, entity: &str, interval: Option<usize>, magnitude: f64) {
        let m = self.max_violation_per_family.entry(family).or_insert(0.0);
        *m = m.max(magnitude);
        self.hard_violations.push(HardViolation { family, entity: entity.to_string(), interval, magnitude });
    }

    fn finish(mut self) -> Self {
        self.feasible = self.hard_violations.is_empty();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityClass {
    Infeasible,
    EvaluationFeasible,
    PhysicallyFeasible,
    EngineeringFeasible,
}

/// Largest soft-constraint residuals, used for classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SoftMetrics {
    pub max_p_imbalance: f64,
    pub max_q_imbalance: f64,
    pub max_base_overload: f64,
    pub max_ctg_overload: f64,
    pub max_reserve_shortfall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub feasibility: FeasibilityReport,
    pub objective: Option<ObjectiveBreakdown>,
    pub metrics: Option<SoftMetrics>,
    pub score: f64,
    pub feasibility_class: FeasibilityClass,
    /// Parse or shape error when the document could not be read.
    pub malformed: Option<String>,
}

impl Evaluation {
    fn rejected(feasibility: FeasibilityReport, malformed: Option<String>) -> Self {
        Self {
            feasibility,
            objective: None,
            metrics: None,
            score: 0.0,
            feasibility_class: FeasibilityClass::Infeasible,
            malformed,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility_class != FeasibilityClass::Infeasible
    }

    pub fn z_ms(&self) -> Option<f64> {
        self.objective.as_ref().map(|o| o.z_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub tol: f64,
    pub exec: Exec,
    /// Post-contingency flows by rank-1 updates of one factorization per
    /// interval instead of a fresh solve per outage.
    #[serde(default)]
    pub lodf: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, exec: Exec::default(), lodf: false }
    }
}

/// Score of an evaluation: zero when infeasible, else `max(0, z_ms)`.
pub fn score(ev: &Evaluation) -> f64 {
    match (&ev.objective, ev.feasibility_class) {
        (_, FeasibilityClass::Infeasible) | (None, _) => 0.0,
        (Some(o), _) => o.z_ms.max(0.0),
    }
}

fn round_binary(report: &mut FeasibilityReport, entity: &str, t: usize, x: f64, tol: f64) -> f64 {
    let r = x.round();
    let frac = (x - r).abs();
    if frac > tol {
        report.push(ConstraintFamily::Integrality, entity, Some(t), frac);
    }
    if !(r == 0.0 || r == 1.0) {
        report.push(ConstraintFamily::Integrality, entity, Some(t), (x - x.clamp(0.0, 1.0)).abs());
    }
    r.clamp(0.0, 1.0)
}

/// Copy of `sol` with every integer variable rounded to its nearest
/// admissible integer, plus the integrality violations found on the way.
fn rounded(inst: &Instance, sol: &Solution, tol: f64, report: &mut FeasibilityReport) -> Solution {
    let mut out = sol.clone();
    for d in &mut out.devices {
        let id = d.id.clone();
        for v in [&mut d.u, &mut d.u_su, &mut d.u_sd] {
            for (t, x) in v.iter_mut().enumerate() {
                *x = round_binary(report, &id, t, *x, tol);
            }
        }
    }
    for b in &mut out.ac_branches {
        let id = b.id.clone();
        for v in [&mut b.u, &mut b.u_su, &mut b.u_sd] {
            for (t, x) in v.iter_mut().enumerate() {
                *x = round_binary(report, &id, t, *x, tol);
            }
        }
    }
    for (s, sh) in out.shunts.iter_mut().zip(&inst.shunts) {
        for (t, x) in s.step.iter_mut().enumerate() {
            let r = x.round();
            if (*x - r).abs() > tol {
                report.push(ConstraintFamily::Integrality, &s.id, Some(t), (*x - r).abs());
            }
            let lo = sh.u_min as f64;
            let hi = sh.u_max as f64;
            if r < lo || r > hi {
                report.push(ConstraintFamily::ShuntSteps, &s.id, Some(t), (r - r.clamp(lo, hi)).abs());
            }
            *x = r;
        }
    }
    out
}

fn bound(report: &mut FeasibilityReport, fam: ConstraintFamily, id: &str, t: usize, x: f64, lo: f64, hi: f64, tol: f64) {
    let excess = (lo - x).max(x - hi).max(0.0);
    if excess > tol {
        report.push(fam, id, Some(t), excess);
    }
}

fn transitions(report: &mut FeasibilityReport, id: &str, u0: f64, u: &[f64], su: &[f64], sd: &[f64]) {
    let mut prev = u0;
    for t in 0..u.len() {
        let resid = (u[t] - prev - (su[t] - sd[t])).abs();
        if resid > 0.0 {
            report.push(ConstraintFamily::Transition, id, Some(t), resid);
        }
        if su[t] * sd[t] != 0.0 {
            report.push(ConstraintFamily::Transition, id, Some(t), 1.0);
        }
        prev = u[t];
    }
}

/// Checks every hard constraint with absolute tolerance `tol`. Integer
/// variables are rounded after their integrality check so the remaining
/// checks see exact statuses.
pub fn check_hard_constraints(inst: &Instance, sol: &Solution, tol: f64) -> FeasibilityReport {
    check_hard_constraints_with(inst, sol, tol, Exec::Sequential).0
}

fn check_hard_constraints_with(inst: &Instance, sol: &Solution, tol: f64, exec: Exec) -> (FeasibilityReport, Solution) {
    use ConstraintFamily::*;
    let mut r = FeasibilityReport::default();
    let sol = rounded(inst, sol, tol, &mut r);
    let nt = inst.num_intervals();
    let idx = inst.index();

    for (j, (dev, ds)) in inst.devices.iter().zip(&sol.devices).enumerate() {
        let id = dev.id.as_str();
        let lb = &idx.lookback[j];
        for &t in &dev.must_run {
            if ds.u[t] != 1.0 {
                r.push(MustRun, id, Some(t), 1.0);
            }
        }
        for &t in &dev.forced_outage {
            if ds.u[t] != 0.0 {
                r.push(ForcedOutage, id, Some(t), 1.0);
            }
        }
        transitions(&mut r, id, dev.u0 as f64, &ds.u, &ds.u_su, &ds.u_sd);
        let mut p_prev = dev.p0;
        for t in 0..nt {
            let (u, su, sd, p) = (ds.u[t], ds.u_su[t], ds.u_sd[t], ds.p[t]);
            let d = inst.duration(t);
            bound(&mut r, RealPower, id, t, p, dev.p_min[t] * u, dev.p_max[t] * u, tol);
            bound(&mut r, ReactivePower, id, t, ds.q[t], dev.q_min[t] * u, dev.q_max[t] * u, tol);
            let lo = -d * (dev.ramp_down * u + dev.ramp_shutdown * sd);
            let hi = d * (dev.ramp_up * (u - su) + dev.ramp_startup * su);
            bound(&mut r, Ramp, id, t, p - p_prev, lo, hi, tol);
            let rsv = ds.p_rsv[t];
            bound(&mut r, Reserve, id, t, rsv, 0.0, dev.reserve_max[t] * u, tol);
            if dev.is_producer() {
                bound(&mut r, ReserveHeadroom, id, t, p + rsv, f64::NEG_INFINITY, dev.p_max[t] * u, tol);
            } else {
                bound(&mut r, ReserveHeadroom, id, t, p - rsv, dev.p_min[t] * u, f64::INFINITY, tol);
            }
            bound(&mut r, CurveDomain, id, t, p, 0.0, dev.energy_curves[t].total_width(), tol);
            let downs: f64 = lb.down[t].clone().map(|s| ds.u_sd[s]).sum();
            if su + downs > 1.0 {
                r.push(MinDowntime, id, Some(t), su + downs - 1.0);
            }
            let ups: f64 = lb.up[t].clone().map(|s| ds.u_su[s]).sum();
            if sd + ups > 1.0 {
                r.push(MinUptime, id, Some(t), sd + ups - 1.0);
            }
            p_prev = p;
        }
        for lim in &dev.max_startups {
            let n: f64 = lim.intervals.iter().map(|&t| ds.u_su[t]).sum();
            if n > lim.max as f64 {
                r.push(MaxStartups, id, None, n - lim.max as f64);
            }
        }
        for lim in &dev.max_shutdowns {
            let n: f64 = lim.intervals.iter().map(|&t| ds.u_sd[t]).sum();
            if n > lim.max as f64 {
                r.push(MaxShutdowns, id, None, n - lim.max as f64);
            }
        }
    }

    for (br, bs) in inst.ac_branches.iter().zip(&sol.ac_branches) {
        transitions(&mut r, &br.id, br.u0 as f64, &bs.u, &bs.u_su, &bs.u_sd);
        for t in 0..nt {
            bound(&mut r, WindingRatio, &br.id, t, bs.tau[t], br.tau_min, br.tau_max, tol);
            bound(&mut r, PhaseShift, &br.id, t, bs.phi[t], br.phi_min, br.phi_max, tol);
        }
    }
    for (br, bs) in inst.dc_branches.iter().zip(&sol.dc_branches) {
        for t in 0..nt {
            bound(&mut r, DcFlow, &br.id, t, bs.p_fr[t], -br.p_max, br.p_max, tol);
            bound(&mut r, DcFlow, &br.id, t, bs.q_fr[t], br.q_fr_min, br.q_fr_max, tol);
            bound(&mut r, DcFlow, &br.id, t, bs.q_to[t], br.q_to_min, br.q_to_max, tol);
        }
    }
    for (bus, bsol) in inst.buses.iter().zip(&sol.buses) {
        for t in 0..nt {
            bound(&mut r, Voltage, &bus.id, t, bsol.v[t], bus.v_min, bus.v_max, tol);
        }
    }
    for island in check_connectivity_with(inst, &sol, exec).violations {
        let entity = match island.contingency {
            Some(k) => inst.contingencies[k].id.clone(),
            None => "base".to_string(),
        };
        r.push(Connectivity, &entity, Some(island.interval), island.components as f64);
    }
    (r.finish(), sol)
}

/// Evaluates with default options.
pub fn evaluate(inst: &Instance, sol: &Solution) -> Evaluation {
    evaluate_with(inst, sol, &EvalOptions::default())
}

/// Parses a solution document and evaluates it; unreadable or misshapen
/// documents score zero.
pub fn evaluate_json(inst: &Instance, bytes: &[u8], opts: &EvalOptions) -> Evaluation {
    match Solution::from_json_bytes(inst, bytes) {
        Ok(sol) => evaluate_with(inst, &sol, opts),
        Err(e) => Evaluation::rejected(FeasibilityReport::default(), Some(e.to_string())),
    }
}

/// Full evaluation. `sol` must already conform to `inst` (as produced by
/// [`Solution::from_json_bytes`] or [`Solution::conform`]).
pub fn evaluate_with(inst: &Instance, sol: &Solution, opts: &EvalOptions) -> Evaluation {
    let tol = opts.tol;
    let (mut report, sol) = check_hard_constraints_with(inst, sol, tol, opts.exec);
    if !report.feasible {
        return Evaluation::rejected(report, None);
    }
    let base = base_terms(inst, &sol, opts.exec);
    let nt = inst.num_intervals();
    let nk = inst.contingencies.len();
    let inputs: Vec<DcInputs> = map_range(opts.exec, nt, |t| DcInputs::from_solution(inst, &sol, t));
    let ctg = if opts.lodf {
        let states = map_range(opts.exec, nt, |t| base_dc_state(inst, inputs[t].clone()));
        map_range(opts.exec, nt * nk, |i| {
            let (t, k) = (i / nk, i % nk);
            let outage = inst.index().ctg_branch[k];
            let state = states[t].as_ref().map_err(Clone::clone)?;
            lodf_screen(inst, state, k)
                .map(|flows| overload_penalty(inst, inst.duration(t), Some(outage), &flows, &base[t].1.flows))
        })
    } else {
        map_range(opts.exec, nt * nk, |i| {
            let (t, k) = (i / nk, i % nk);
            let outage = inst.index().ctg_branch[k];
            solve_dc(inst, &inputs[t], Some(outage))
                .map(|dc| overload_penalty(inst, inst.duration(t), Some(outage), &dc.flows, &base[t].1.flows))
        })
    };

    let mut z_ctg = vec![Vec::with_capacity(nk); nt];
    let mut metrics = SoftMetrics::default();
    for (i, res) in ctg.into_iter().enumerate() {
        let (t, k) = (i / nk, i % nk);
        match res {
            Ok(pen) => {
                metrics.max_ctg_overload = metrics.max_ctg_overload.max(pen.max_excess);
                z_ctg[t].push(pen.z_ctg);
            }
            Err(_) => report.push(ConstraintFamily::ContingencySolve, &inst.contingencies[k].id, Some(t), 1.0),
        }
    }
    if !report.hard_violations.is_empty() {
        return Evaluation::rejected(report.finish(), None);
    }

    for (_, detail) in &base {
        for s in &detail.imbalance {
            metrics.max_p_imbalance = metrics.max_p_imbalance.max(s.re.abs());
            metrics.max_q_imbalance = metrics.max_q_imbalance.max(s.im.abs());
        }
        for (j, f) in detail.flows.iter().enumerate() {
            let excess = f.s_fr.norm().max(f.s_to.norm()) - inst.ac_branches[j].s_max;
            metrics.max_base_overload = metrics.max_base_overload.max(excess);
        }
        for &x in &detail.reserve.shortfall {
            metrics.max_reserve_shortfall = metrics.max_reserve_shortfall.max(x);
        }
    }

    let agg = ctg_aggregate(&z_ctg);
    let objective = assemble_objective(base.into_iter().map(|(z, _)| z).collect(), total_energy_penalty(inst, &sol), &agg);
    let physical = metrics.max_p_imbalance <= tol && metrics.max_q_imbalance <= tol;
    let engineering = physical
        && metrics.max_base_overload <= tol
        && metrics.max_ctg_overload <= tol
        && metrics.max_reserve_shortfall <= tol;
    let class = if engineering {
        FeasibilityClass::EngineeringFeasible
    } else if physical {
        FeasibilityClass::PhysicallyFeasible
    } else {
        FeasibilityClass::EvaluationFeasible
    };
    let mut ev = Evaluation {
        feasibility: report,
        objective: Some(objective),
        metrics: Some(metrics),
        score: 0.0,
        feasibility_class: class,
        malformed: None,
    };
    ev.score = score(&ev);
    ev
}
