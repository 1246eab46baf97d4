//! Convex system-wide market clearing: aggregate supply and demand step
//! curves per interval, ignoring network, losses, commitment and ramping,
//! and the resulting surplus bound.

use serde::{Deserialize, Serialize};

use crate::evaluator::Evaluation;
use crate::model::{Block, Instance};
use crate::par::{map_range, Exec};

/// Ordered price blocks; supply ascending, demand descending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCurve {
    pub blocks: Vec<Block>,
}

impl StepCurve {
    pub fn supply(mut blocks: Vec<Block>) -> Self {
        blocks.retain(|b| b.width > 0.0);
        blocks.sort_by(|a, b| a.price.total_cmp(&b.price));
        Self { blocks }
    }

    pub fn demand(mut blocks: Vec<Block>) -> Self {
        blocks.retain(|b| b.width > 0.0);
        blocks.sort_by(|a, b| b.price.total_cmp(&a.price));
        Self { blocks }
    }

    pub fn total_quantity(&self) -> f64 {
        self.blocks.iter().map(|b| b.width).sum()
    }

    /// Step vertices `(cumulative quantity, price)` for plotting: two points
    /// per block, at its left and right edge.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut q = 0.0;
        let mut out = Vec::with_capacity(2 * self.blocks.len());
        for b in &self.blocks {
            out.push((q, b.price));
            q += b.width;
            out.push((q, b.price));
        }
        out
    }
}

/// Supply from every producer's cost blocks on `[0, P^max_jt]` and demand
/// from every consumer's value blocks on `[0, P^max_jt]`.
pub fn aggregate_curves(inst: &Instance, t: usize) -> (StepCurve, StepCurve) {
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for dev in &inst.devices {
        let blocks = dev.energy_curves[t].truncated(dev.p_max[t]);
        if dev.is_producer() {
            supply.extend(blocks);
        } else {
            demand.extend(blocks);
        }
    }
    (StepCurve::supply(supply), StepCurve::demand(demand))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClearingResult {
    pub q_star: f64,
    pub price_lo: f64,
    pub price_hi: f64,
    /// $/h.
    pub surplus: f64,
    /// $/h.
    pub gen_cost: f64,
}

/// Clears at the largest quantity where the demand price is at least the
/// supply price. Surplus is the area between the curves on `[0, q*]`.
pub fn clear_market(supply: &StepCurve, demand: &StepCurve) -> ClearingResult {
    let (s, d) = (&supply.blocks, &demand.blocks);
    let (mut i, mut j) = (0, 0);
    let mut rem_s = s.first().map_or(0.0, |b| b.width);
    let mut rem_d = d.first().map_or(0.0, |b| b.width);
    let mut out = ClearingResult::default();
    let mut s_left = f64::NEG_INFINITY;
    let mut d_left = f64::INFINITY;
    while i < s.len() && j < d.len() && d[j].price >= s[i].price {
        let take = rem_s.min(rem_d);
        out.q_star += take;
        out.surplus += take * (d[j].price - s[i].price);
        out.gen_cost += take * s[i].price;
        s_left = s[i].price;
        d_left = d[j].price;
        rem_s -= take;
        rem_d -= take;
        if rem_s <= 0.0 {
            i += 1;
            rem_s = s.get(i).map_or(0.0, |b| b.width);
        }
        if rem_d <= 0.0 {
            j += 1;
            rem_d = d.get(j).map_or(0.0, |b| b.width);
        }
    }
    let s_right = s.get(i).map_or(f64::INFINITY, |b| b.price);
    let d_right = d.get(j).map_or(f64::NEG_INFINITY, |b| b.price);
    let lo = s_left.max(d_right);
    let hi = d_left.min(s_right);
    (out.price_lo, out.price_hi) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo),
        (false, true) => (hi, hi),
        (false, false) => (0.0, 0.0),
    };
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDump {
    pub interval: usize,
    pub supply: Vec<(f64, f64)>,
    pub demand: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `Σ_t D_t surplus_t`.
    pub equilibrium_surplus: f64,
    /// `Σ_t D_t gen_cost_t`.
    pub equilibrium_gen_cost: f64,
    pub z_ms: Option<f64>,
    pub abs_gap: Option<f64>,
    pub rel_gap_surplus: Option<f64>,
    /// Absent when the equilibrium generation cost is zero.
    pub rel_gap_cost: Option<f64>,
    /// The solution beat the equilibrium bound.
    pub negative_gap: bool,
    pub per_interval: Vec<ClearingResult>,
}

pub fn clear_all(inst: &Instance, exec: Exec) -> Vec<ClearingResult> {
    map_range(exec, inst.num_intervals(), |t| {
        let (s, d) = aggregate_curves(inst, t);
        clear_market(&s, &d)
    })
}

pub fn curve_dump(inst: &Instance) -> Vec<CurveDump> {
    (0..inst.num_intervals())
        .map(|t| {
            let (s, d) = aggregate_curves(inst, t);
            CurveDump { interval: t, supply: s.points(), demand: d.points() }
        })
        .collect()
}

/// Gap of a solution's objective against the horizon equilibrium surplus.
/// Without a feasible evaluation only the equilibrium side is filled in.
pub fn bound_report(inst: &Instance, ev: Option<&Evaluation>) -> GapReport {
    let per_interval = clear_all(inst, Exec::default());
    let mut surplus = 0.0;
    let mut cost = 0.0;
    for (t, c) in per_interval.iter().enumerate() {
        surplus += inst.duration(t) * c.surplus;
        cost += inst.duration(t) * c.gen_cost;
    }
    let z_ms = ev.filter(|e| e.is_feasible()).and_then(Evaluation::z_ms);
    let abs_gap = z_ms.map(|z| surplus - z);
    GapReport {
        equilibrium_surplus: surplus,
        equilibrium_gen_cost: cost,
        z_ms,
        abs_gap,
        rel_gap_surplus: abs_gap.filter(|_| surplus != 0.0).map(|g| g / surplus),
        rel_gap_cost: abs_gap.filter(|_| cost != 0.0).map(|g| g / cost),
        negative_gap: abs_gap.is_some_and(|g| g < 0.0),
        per_interval,
    }
}
