//! Real-power dispatch by merit-order clearing of committed devices inside
//! their ramp-feasible windows, and greedy reserve assignment.

use scuc_core::model::{Instance, PwlCurve};

use crate::schedule::{ramp_envelope, ramp_limits, CandidateSchedule, Envelope};

/// Admissible power range of one device in one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const FREE: Window = Window { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clearing {
    pub p: Vec<f64>,
    /// Price of the last accepted block (marginal price estimate).
    pub price: f64,
    /// Supply minus demand (including the loss adder) left unbalanced.
    pub residual: f64,
}

struct Offer {
    dev: usize,
    price: f64,
    width: f64,
}

/// Blocks of device `j`'s curve lying inside `[lo, hi]`.
fn offers(inst: &Instance, t: usize, j: usize, w: Window, out: &mut Vec<Offer>) {
    let mut left = 0.0_f64;
    for b in &inst.devices[j].energy_curves[t].blocks {
        let a = left.max(w.lo);
        let c = (left + b.width).min(w.hi);
        if c > a {
            out.push(Offer { dev: j, price: b.price, width: c - a });
        }
        left += b.width;
    }
}

/// Clears one interval: every device starts at its window floor; supply or
/// demand is first added to restore balance (the loss adder counts as fixed
/// demand), then matched block pairs are accepted while demand value covers
/// supply cost.
pub fn clear_interval(inst: &Instance, t: usize, win: &[Window], loss: f64) -> Clearing {
    let mut p: Vec<f64> = win.iter().map(|w| w.lo).collect();
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    let mut fixed_supply = 0.0;
    let mut fixed_demand = loss;
    for (j, d) in inst.devices.iter().enumerate() {
        if win[j].hi <= win[j].lo {
            p[j] = win[j].lo;
        }
        if d.is_producer() {
            fixed_supply += p[j];
            offers(inst, t, j, win[j], &mut supply);
        } else {
            fixed_demand += p[j];
            offers(inst, t, j, win[j], &mut demand);
        }
    }
    supply.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.dev.cmp(&b.dev)));
    demand.sort_by(|a, b| b.price.total_cmp(&a.price).then(a.dev.cmp(&b.dev)));
    let (mut i, mut k) = (0, 0);
    let mut price = f64::NAN;
    let mut gap = fixed_demand - fixed_supply;
    while gap > 0.0 && i < supply.len() {
        let take = gap.min(supply[i].width);
        p[supply[i].dev] += take;
        supply[i].width -= take;
        gap -= take;
        price = supply[i].price;
        if supply[i].width <= 0.0 {
            i += 1;
        }
    }
    while gap < 0.0 && k < demand.len() {
        let take = (-gap).min(demand[k].width);
        p[demand[k].dev] += take;
        demand[k].width -= take;
        gap += take;
        price = demand[k].price;
        if demand[k].width <= 0.0 {
            k += 1;
        }
    }
    while i < supply.len() && k < demand.len() && demand[k].price >= supply[i].price {
        let take = supply[i].width.min(demand[k].width);
        p[supply[i].dev] += take;
        p[demand[k].dev] += take;
        supply[i].width -= take;
        demand[k].width -= take;
        price = 0.5 * (supply[i].price + demand[k].price);
        if supply[i].width <= 1e-15 {
            i += 1;
        }
        if demand[k].width <= 1e-15 {
            k += 1;
        }
    }
    if price.is_nan() {
        price = match (supply.get(i), demand.get(k)) {
            (Some(s), Some(d)) => 0.5 * (s.price + d.price),
            (Some(s), None) => s.price,
            (None, Some(d)) => d.price,
            (None, None) => 0.0,
        };
    }
    for (j, w) in win.iter().enumerate() {
        p[j] = w.clamp(p[j]);
    }
    Clearing { p, price, residual: -gap }
}

/// Dispatch of one interval given the statuses at `t` and the previous
/// interval's output, clipped to ramp windows. Returns `(p, q, p_rsv)` per
/// device with `q` at the midpoint of its range and reserves assigned
/// greedily.
pub fn dispatch_phase(inst: &Instance, sched: &CandidateSchedule, t: usize, prev_p: &[f64]) -> Vec<(f64, f64, f64)> {
    let win: Vec<Window> = (0..inst.devices.len()).map(|j| step_window(inst, sched, j, t, prev_p[j], None)).collect();
    let c = clear_interval(inst, t, &win, 0.0);
    let rsv = assign_reserves(inst, t, &sched_column(sched, t), &c.p);
    (0..inst.devices.len())
        .map(|j| (c.p[j], mid_q(inst, j, t, sched.u[j][t]), rsv[j]))
        .collect()
}

fn sched_column(sched: &CandidateSchedule, t: usize) -> Vec<f64> {
    sched.u.iter().map(|r| r[t]).collect()
}

pub(crate) fn mid_q(inst: &Instance, j: usize, t: usize, u: f64) -> f64 {
    let d = &inst.devices[j];
    (0.0f64).clamp(d.q_min[t], d.q_max[t]) * u
}

/// Window for device `j` at `t` from the previous output and the status
/// bounds, intersected with the reachability envelope when given.
fn step_window(inst: &Instance, sched: &CandidateSchedule, j: usize, t: usize, prev: f64, env: Option<&Envelope>) -> Window {
    let d = &inst.devices[j];
    let u = sched.u[j][t];
    let (down, up) = ramp_limits(d, inst.duration(t), u, sched.u_su[j][t], sched.u_sd[j][t]);
    let mut lo = (d.p_min[t] * u).max(prev + down);
    let mut hi = (d.p_max[t].min(d.energy_curves[t].total_width()) * u).min(prev + up);
    if let Some(e) = env {
        lo = lo.max(e.floor[t]);
        hi = hi.min(e.cap[t]);
    }
    if hi < lo {
        // Unreachable window: stay as close as possible to the status bound.
        let m = lo.min(d.p_max[t] * u);
        return Window { lo: m, hi: m };
    }
    Window { lo, hi }
}

/// Real-power trajectory for a finalized schedule, `[t][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub p: Vec<Vec<f64>>,
    pub price: Vec<f64>,
    /// Per device and interval range the AC stage may move `p` within
    /// without breaking ramp limits against the neighbouring intervals.
    pub adjust: Vec<Vec<Window>>,
}

/// Forward ramp-chained dispatch of all intervals with per-interval loss
/// adders, followed by corrections for violated multi-interval energy
/// limits (up to three passes). With `hold`, producers are then capped
/// below their output until the zonal reserve requirements fit in the
/// headroom left (again up to three passes).
pub fn dispatch_all(inst: &Instance, sched: &CandidateSchedule, loss: &[f64], hold: bool) -> Trajectory {
    let nd = inst.devices.len();
    let nt = inst.num_intervals();
    let mut extra: Vec<Vec<Window>> = vec![vec![Window::FREE; nt]; nd];
    let mut traj = forward(inst, sched, loss, &extra);
    for _ in 0..3 {
        let mut changed = false;
        for (j, d) in inst.devices.iter().enumerate() {
            let pj: Vec<f64> = (0..nt).map(|t| traj.p[t][j]).collect();
            for ec in &d.energy_constraints {
                let v = ec.lhs(&pj);
                if v <= 1e-9 {
                    continue;
                }
                let norm: f64 = ec.coeffs.values().map(|a| a * a).sum();
                if norm <= 0.0 {
                    continue;
                }
                for (&t, &a) in &ec.coeffs {
                    let target = pj[t] - v * a / norm;
                    if a > 0.0 {
                        extra[j][t].hi = extra[j][t].hi.min(target);
                    } else if a < 0.0 {
                        extra[j][t].lo = extra[j][t].lo.max(target);
                    }
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
        traj = forward(inst, sched, loss, &extra);
    }
    if hold {
        for _ in 0..3 {
            if !hold_back(inst, sched, &traj, &mut extra) {
                break;
            }
            traj = forward(inst, sched, loss, &extra);
        }
    }
    traj
}

/// Price of the block holding the last unit of output `x`.
fn block_price(c: &PwlCurve, x: f64) -> f64 {
    let mut left = 0.0;
    for b in &c.blocks {
        left += b.width;
        if x <= left {
            return b.price;
        }
    }
    c.blocks.last().map_or(0.0, |b| b.price)
}

/// Lowers window caps of zone producers, costliest current block first, by
/// the zone's reserve shortfall plus a small margin. Returns whether any cap
/// moved.
fn hold_back(inst: &Instance, sched: &CandidateSchedule, traj: &Trajectory, extra: &mut [Vec<Window>]) -> bool {
    let idx = inst.index();
    let mut changed = false;
    for t in 0..inst.num_intervals() {
        let u = sched_column(sched, t);
        let p = &traj.p[t];
        let rsv = assign_reserves(inst, t, &u, p);
        for (z, zone) in inst.zones.iter().enumerate() {
            let members = &idx.zone_members[z];
            let need = zone.sigma
                * members.iter().filter(|&&j| inst.devices[j].is_producer()).map(|&j| p[j]).fold(0.0, f64::max);
            let have: f64 = members.iter().map(|&j| rsv[j]).sum();
            let mut short = need - have;
            if short <= 1e-9 {
                continue;
            }
            short = 1.05 * short + 1e-6;
            let mut order: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&j| {
                    let d = &inst.devices[j];
                    d.is_producer() && u[j] > 0.5 && d.reserve_cost < zone.shortage_penalty
                })
                .collect();
            let marginal = |j: usize| block_price(&inst.devices[j].energy_curves[t], p[j]);
            order.sort_by(|&a, &b| marginal(b).total_cmp(&marginal(a)).then(a.cmp(&b)));
            for j in order {
                if short <= 0.0 {
                    break;
                }
                let d = &inst.devices[j];
                // Only output that turns into usable reserve is held back.
                let room = (d.reserve_max[t] - rsv[j]).max(0.0);
                let floor = (d.p_min[t]).max(extra[j][t].lo);
                let cut = short.min(room).min(p[j] - floor).max(0.0);
                if cut <= 0.0 {
                    continue;
                }
                extra[j][t].hi = extra[j][t].hi.min(p[j] - cut);
                short -= cut;
                changed = true;
            }
        }
    }
    changed
}

fn forward(inst: &Instance, sched: &CandidateSchedule, loss: &[f64], extra: &[Vec<Window>]) -> Trajectory {
    let nd = inst.devices.len();
    let nt = inst.num_intervals();
    let envs: Vec<Option<Envelope>> = (0..nd)
        .map(|j| {
            let u = sched.status(j);
            ramp_envelope(inst, j, &u, Some(&extra[j])).or_else(|| ramp_envelope(inst, j, &u, None))
        })
        .collect();
    let mut prev: Vec<f64> = inst.devices.iter().map(|d| d.p0).collect();
    let mut p = Vec::with_capacity(nt);
    let mut price = Vec::with_capacity(nt);
    for t in 0..nt {
        let win: Vec<Window> = (0..nd).map(|j| step_window(inst, sched, j, t, prev[j], envs[j].as_ref())).collect();
        let c = clear_interval(inst, t, &win, loss.get(t).copied().unwrap_or(0.0));
        prev.clone_from(&c.p);
        p.push(c.p);
        price.push(c.price);
    }
    let adjust = adjust_windows(inst, sched, &p, &envs);
    Trajectory { p, price, adjust }
}

/// Independent per-interval adjustment ranges: each interval may use half of
/// the ramp slack it shares with each neighbour (all of it against the fixed
/// initial output).
fn adjust_windows(inst: &Instance, sched: &CandidateSchedule, p: &[Vec<f64>], envs: &[Option<Envelope>]) -> Vec<Vec<Window>> {
    let nd = inst.devices.len();
    let nt = inst.num_intervals();
    (0..nd)
        .map(|j| {
            let d = &inst.devices[j];
            // slack[t]: room on p_t - p_{t-1} before a ramp limit binds.
            let slack: Vec<f64> = (0..nt)
                .map(|t| {
                    let prev = if t == 0 { d.p0 } else { p[t - 1][j] };
                    let (down, up) = ramp_limits(d, inst.duration(t), sched.u[j][t], sched.u_su[j][t], sched.u_sd[j][t]);
                    let dp = p[t][j] - prev;
                    (dp - down).min(up - dp).max(0.0)
                })
                .collect();
            (0..nt)
                .map(|t| {
                    let u = sched.u[j][t];
                    if u == 0.0 {
                        return Window { lo: 0.0, hi: 0.0 };
                    }
                    let back = if t == 0 { slack[0] } else { 0.5 * slack[t] };
                    let ahead = if t + 1 < nt { 0.5 * slack[t + 1] } else { f64::INFINITY };
                    let e = back.min(ahead);
                    let mut lo = (p[t][j] - e).max(d.p_min[t]);
                    let mut hi = (p[t][j] + e).min(d.p_max[t].min(d.energy_curves[t].total_width()));
                    if let Some(env) = &envs[j] {
                        lo = lo.max(env.floor[t]);
                        hi = hi.min(env.cap[t]);
                    }
                    let x = p[t][j];
                    Window { lo: lo.min(x), hi: hi.max(x) }
                })
                .collect()
        })
        .collect()
}

/// Greedy reserve assignment: per zone, cheapest members first within their
/// headroom, while the reserve cost stays below the shortage penalty.
pub fn assign_reserves(inst: &Instance, t: usize, u: &[f64], p: &[f64]) -> Vec<f64> {
    let idx = inst.index();
    let mut rsv = vec![0.0; inst.devices.len()];
    for (z, zone) in inst.zones.iter().enumerate() {
        let members = &idx.zone_members[z];
        let need = zone.sigma
            * members
                .iter()
                .filter(|&&j| inst.devices[j].is_producer())
                .map(|&j| p[j])
                .fold(0.0, f64::max);
        let mut have: f64 = members.iter().map(|&j| rsv[j]).sum();
        let mut order: Vec<usize> = members.clone();
        order.sort_by(|&a, &b| inst.devices[a].reserve_cost.total_cmp(&inst.devices[b].reserve_cost).then(a.cmp(&b)));
        for j in order {
            if have >= need {
                break;
            }
            let d = &inst.devices[j];
            if d.reserve_cost >= zone.shortage_penalty {
                continue;
            }
            let room = if d.is_producer() { d.p_max[t] * u[j] - p[j] } else { p[j] - d.p_min[t] * u[j] };
            let cap = (d.reserve_max[t] * u[j]).min(room).max(0.0);
            let add = (cap - rsv[j]).max(0.0).min(need - have);
            rsv[j] += add;
            have += add;
        }
    }
    rsv
}
