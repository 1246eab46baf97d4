//! Base-case objective terms and their assembly into the market-surplus
//! objective `z_ms = z_base - z_ctg_worst - z_ctg_avg`.

use serde::{Deserialize, Serialize};

use crate::acpf::{all_branch_flows, bus_imbalance_at, bus_voltages, BranchFlowResult, IntervalSettings, C64};
use crate::contingency::CtgAggregate;
use crate::model::{AcBranch, Device, EnergyConstraint, Instance, OutOfDomain, PenaltyParams, PwlCurve, Solution};
use crate::par::{map_range, Exec};

/// `D_t C^en(p)`; fails outside `[0, total_width]`.
pub fn energy_term(curve: &PwlCurve, p: f64, duration: f64) -> Result<f64, OutOfDomain> {
    Ok(duration * curve.value_in_domain(p)?)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchedulingCosts {
    pub su: Vec<f64>,
    pub sd: Vec<f64>,
    pub on: Vec<f64>,
}

/// Startup and shutdown costs where the status rises or falls (relative to
/// `u0` at the first interval) and no-load cost `C^on u D_t`.
pub fn scheduling_costs(dev: &Device, u: &[f64], durations: &[f64]) -> SchedulingCosts {
    let mut out = SchedulingCosts::default();
    let mut prev = dev.u0 as f64;
    for (t, &x) in u.iter().enumerate() {
        out.su.push(dev.startup_cost * (x - prev).max(0.0));
        out.sd.push(dev.shutdown_cost * (prev - x).max(0.0));
        out.on.push(dev.on_cost * x * durations[t]);
        prev = x;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReserveTerms {
    pub device_cost: Vec<f64>,
    pub requirement: Vec<f64>,
    pub shortfall: Vec<f64>,
    pub zone_penalty: Vec<f64>,
}

/// Device reserve costs and zonal requirement, shortfall and penalty at `t`.
/// A zone without producers has zero requirement.
pub fn reserve_terms(inst: &Instance, sol: &Solution, t: usize) -> ReserveTerms {
    let d = inst.duration(t);
    let p: Vec<f64> = sol.devices.iter().map(|x| x.p[t]).collect();
    let rsv: Vec<f64> = sol.devices.iter().map(|x| x.p_rsv[t]).collect();
    reserve_terms_from(inst, d, &p, &rsv)
}

pub fn reserve_terms_from(inst: &Instance, duration: f64, p: &[f64], rsv: &[f64]) -> ReserveTerms {
    let idx = inst.index();
    let device_cost = inst.devices.iter().zip(rsv).map(|(dev, r)| duration * dev.reserve_cost * r).collect();
    let mut out = ReserveTerms { device_cost, ..Default::default() };
    for (n, zone) in inst.zones.iter().enumerate() {
        let members = &idx.zone_members[n];
        let max_p = members
            .iter()
            .filter(|&&j| inst.devices[j].is_producer())
            .map(|&j| p[j])
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            .unwrap_or(0.0);
        let req = zone.sigma * max_p;
        let provided: f64 = members.iter().map(|&j| rsv[j]).sum();
        let short = (req - provided).max(0.0);
        out.requirement.push(req);
        out.shortfall.push(short);
        out.zone_penalty.push(duration * zone.shortage_penalty * short);
    }
    out
}

/// `(D C^p |p_i|, D C^q |q_i|)` per bus.
pub fn imbalance_penalties(s: &[C64], duration: f64, pen: &PenaltyParams) -> (Vec<f64>, Vec<f64>) {
    s.iter()
        .map(|x| (duration * pen.c_p * x.re.abs(), duration * pen.c_q * x.im.abs()))
        .unzip()
}

/// `D C^s max(0, max(|s_fr|, |s_to|) - S^max)`.
pub fn base_overload_penalty(br: &AcBranch, flow: &BranchFlowResult, duration: f64, c_s: f64) -> f64 {
    let s = flow.s_fr.norm().max(flow.s_to.norm());
    duration * c_s * (s - br.s_max).max(0.0)
}

/// `D_t C^sw |u_t - u_{t-1}|` with `u0` before the first interval.
pub fn switching_cost(u: &[f64], u0: f64, durations: &[f64], c_sw: f64) -> Vec<f64> {
    let mut prev = u0;
    u.iter()
        .zip(durations)
        .map(|(&x, &d)| {
            let z = d * c_sw * (x - prev).abs();
            prev = x;
            z
        })
        .collect()
}

/// `C^en max(0, a0 + Σ a_t p_t)`.
pub fn multi_interval_energy_penalty(ec: &EnergyConstraint, p: &[f64], c_en: f64) -> f64 {
    c_en * ec.lhs(p).max(0.0)
}

/// Per-interval totals of every base-case term, each stored nonnegative as a
/// value, cost or penalty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalTerms {
    pub consumer_value: f64,
    pub producer_cost: f64,
    pub z_rsv: f64,
    pub z_su: f64,
    pub z_sd: f64,
    pub z_on: f64,
    pub z_sw: f64,
    pub z_s: f64,
    pub z_rsv_zone: f64,
    pub z_p: f64,
    pub z_q: f64,
}

impl IntervalTerms {
    pub fn z_time(&self) -> f64 {
        self.consumer_value
            - self.producer_cost
            - (self.z_rsv + self.z_su + self.z_sd + self.z_on)
            - (self.z_sw + self.z_s)
            - self.z_rsv_zone
            - (self.z_p + self.z_q)
    }

    fn add(&mut self, o: &IntervalTerms) {
        self.consumer_value += o.consumer_value;
        self.producer_cost += o.producer_cost;
        self.z_rsv += o.z_rsv;
        self.z_su += o.z_su;
        self.z_sd += o.z_sd;
        self.z_on += o.z_on;
        self.z_sw += o.z_sw;
        self.z_s += o.z_s;
        self.z_rsv_zone += o.z_rsv_zone;
        self.z_p += o.z_p;
        self.z_q += o.z_q;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub z_ms: f64,
    pub z_base: f64,
    pub z_ctg_worst: f64,
    pub z_ctg_avg: f64,
    pub z_time: Vec<f64>,
    pub z_en: f64,
    pub totals: IntervalTerms,
    pub per_interval: Vec<IntervalTerms>,
}

/// Composes per-interval tables, multi-interval energy penalties and
/// contingency aggregates. Sums run in index order.
pub fn assemble_objective(per_interval: Vec<IntervalTerms>, z_en: f64, ctg: &CtgAggregate) -> ObjectiveBreakdown {
    let z_time: Vec<f64> = per_interval.iter().map(IntervalTerms::z_time).collect();
    let mut totals = IntervalTerms::default();
    for x in &per_interval {
        totals.add(x);
    }
    let z_base = z_time.iter().sum::<f64>() - z_en;
    ObjectiveBreakdown {
        z_ms: z_base - ctg.worst - ctg.avg,
        z_base,
        z_ctg_worst: ctg.worst,
        z_ctg_avg: ctg.avg,
        z_time,
        z_en,
        totals,
        per_interval,
    }
}

/// Physical quantities recomputed while evaluating one interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalDetail {
    pub flows: Vec<BranchFlowResult>,
    pub imbalance: Vec<C64>,
    pub reserve: ReserveTerms,
}

/// Base-case terms of interval `t` with the recomputed flows and imbalances.
pub fn interval_terms(inst: &Instance, sol: &Solution, t: usize) -> (IntervalTerms, IntervalDetail) {
    let d = inst.duration(t);
    let pen = &inst.penalties;
    let mut z = IntervalTerms::default();
    for (j, dev) in inst.devices.iter().enumerate() {
        let ds = &sol.devices[j];
        let e = d * dev.energy_curves[t].value(ds.p[t]);
        if dev.is_producer() {
            z.producer_cost += e;
        } else {
            z.consumer_value += e;
        }
        let prev = if t == 0 { dev.u0 as f64 } else { ds.u[t - 1] };
        z.z_su += dev.startup_cost * (ds.u[t] - prev).max(0.0);
        z.z_sd += dev.shutdown_cost * (prev - ds.u[t]).max(0.0);
        z.z_on += dev.on_cost * ds.u[t] * d;
    }
    let rsv = reserve_terms(inst, sol, t);
    z.z_rsv = rsv.device_cost.iter().sum();
    z.z_rsv_zone = rsv.zone_penalty.iter().sum();

    let st = IntervalSettings::from_solution(sol, t);
    let w = bus_voltages(sol, t);
    let flows = all_branch_flows(inst, &st, &w);
    for (j, br) in inst.ac_branches.iter().enumerate() {
        let bs = &sol.ac_branches[j];
        let prev = if t == 0 { br.u0 as f64 } else { bs.u[t - 1] };
        z.z_sw += d * pen.c_sw * (bs.u[t] - prev).abs();
        z.z_s += base_overload_penalty(br, &flows[j], d, pen.c_s);
    }
    let s = bus_imbalance_at(inst, &st, &w);
    let (zp, zq) = imbalance_penalties(&s, d, pen);
    z.z_p = zp.iter().sum();
    z.z_q = zq.iter().sum();
    (z, IntervalDetail { flows, imbalance: s, reserve: rsv })
}

/// Sum of multi-interval energy penalties over all devices.
pub fn total_energy_penalty(inst: &Instance, sol: &Solution) -> f64 {
    inst.devices
        .iter()
        .zip(&sol.devices)
        .flat_map(|(dev, ds)| {
            dev.energy_constraints
                .iter()
                .map(move |ec| multi_interval_energy_penalty(ec, &ds.p, inst.penalties.c_en))
        })
        .sum()
}

/// Base-case terms for every interval, computed per interval under `exec`.
pub fn base_terms(inst: &Instance, sol: &Solution, exec: Exec) -> Vec<(IntervalTerms, IntervalDetail)> {
    map_range(exec, inst.num_intervals(), |t| interval_terms(inst, sol, t))
}
