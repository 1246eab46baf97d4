//! Commitment phase: relaxed merit-order commitment, rounding, and repair to
//! a schedule that satisfies every status-only hard constraint plus ramp
//! reachability.

use scuc_core::model::{build_topology, Device, Instance};

use crate::dispatch::{clear_interval, Window};

/// Statuses and transitions per device and AC branch, indexed `[entity][t]`.
/// Device statuses may be fractional before finalization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSchedule {
    pub u: Vec<Vec<f64>>,
    pub u_su: Vec<Vec<f64>>,
    pub u_sd: Vec<Vec<f64>>,
    pub branch_u: Vec<Vec<f64>>,
}

impl CandidateSchedule {
    /// Every device at its initial status, branches as initially set (all
    /// closed when the initial topology is disconnected in some interval).
    pub fn initial(inst: &Instance) -> Self {
        let nt = inst.num_intervals();
        let u = inst.devices.iter().map(|d| vec![d.u0 as f64; nt]).collect();
        let mut s = Self { u, branch_u: initial_branches(inst), ..Default::default() };
        s.derive_transitions(inst);
        s
    }

    pub fn is_integral(&self) -> bool {
        self.u.iter().flatten().all(|&x| x == 0.0 || x == 1.0)
    }

    pub fn derive_transitions(&mut self, inst: &Instance) {
        self.u_su.clear();
        self.u_sd.clear();
        for (d, u) in inst.devices.iter().zip(&self.u) {
            let mut prev = d.u0 as f64;
            let mut su = Vec::with_capacity(u.len());
            let mut sd = Vec::with_capacity(u.len());
            for &x in u {
                su.push((x - prev).max(0.0));
                sd.push((prev - x).max(0.0));
                prev = x;
            }
            self.u_su.push(su);
            self.u_sd.push(sd);
        }
    }

    /// Binary statuses of device `j`.
    pub fn status(&self, j: usize) -> Vec<u8> {
        self.u[j].iter().map(|&x| (x >= 0.5) as u8).collect()
    }

    pub fn set_status(&mut self, inst: &Instance, j: usize, u: &[u8]) {
        self.u[j] = u.iter().map(|&x| x as f64).collect();
        let mut prev = inst.devices[j].u0 as f64;
        for (t, &x) in self.u[j].iter().enumerate() {
            self.u_su[j][t] = (x - prev).max(0.0);
            self.u_sd[j][t] = (prev - x).max(0.0);
            prev = x;
        }
    }
}

pub(crate) fn initial_branches(inst: &Instance) -> Vec<Vec<f64>> {
    let nt = inst.num_intervals();
    let closed: Vec<bool> = inst.ac_branches.iter().map(|b| b.u0 == 1).collect();
    let ok = build_topology(inst, &closed, None).is_connected()
        && inst.index().ctg_branch.iter().all(|&k| build_topology(inst, &closed, Some(k)).is_connected());
    inst.ac_branches
        .iter()
        .map(|b| vec![if ok { b.u0 as f64 } else { 1.0 }; nt])
        .collect()
}

/// Reachable power range per interval for a fixed status sequence:
/// whatever `p_t` is chosen inside `[floor_t, cap_t]`, the rest of the
/// horizon can still be dispatched without breaking a ramp limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub floor: Vec<f64>,
    pub cap: Vec<f64>,
}

/// Ramp limits on `p_t - p_{t-1}` for status `u`, startup `su` and
/// shutdown `sd` in an interval of duration `d`.
pub fn ramp_limits(dev: &Device, d: f64, u: f64, su: f64, sd: f64) -> (f64, f64) {
    (-d * (dev.ramp_down * u + dev.ramp_shutdown * sd), d * (dev.ramp_up * (u - su) + dev.ramp_startup * su))
}

/// Backward ramp-reachability pass. `extra` tightens the per-interval range
/// (used for multi-interval energy limits). `None` when the statuses cannot
/// be followed from `p0`.
pub fn ramp_envelope(inst: &Instance, j: usize, u: &[u8], extra: Option<&[Window]>) -> Option<Envelope> {
    let dev = &inst.devices[j];
    let nt = u.len();
    let (su, sd) = transitions(dev.u0, u);
    let mut floor = vec![0.0; nt];
    let mut cap = vec![0.0; nt];
    for t in (0..nt).rev() {
        let on = u[t] as f64;
        let width = dev.energy_curves[t].total_width();
        let mut lo = dev.p_min[t] * on;
        let mut hi = dev.p_max[t].min(width) * on;
        if let Some(w) = extra {
            lo = lo.max(w[t].lo.min(hi));
            hi = hi.min(w[t].hi.max(lo));
        }
        if t + 1 < nt {
            let (down, up) = ramp_limits(dev, inst.duration(t + 1), u[t + 1] as f64, su[t + 1], sd[t + 1]);
            hi = hi.min(cap[t + 1] - down);
            lo = lo.max(floor[t + 1] - up);
        }
        if lo > hi + 1e-9 {
            return None;
        }
        floor[t] = lo;
        cap[t] = hi.max(lo);
    }
    let (down, up) = ramp_limits(dev, inst.duration(0), u[0] as f64, su[0], sd[0]);
    if dev.p0 + down > cap[0] + 1e-9 || dev.p0 + up < floor[0] - 1e-9 {
        return None;
    }
    Some(Envelope { floor, cap })
}

pub(crate) fn transitions(u0: u8, u: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let mut prev = u0 as f64;
    let mut su = Vec::with_capacity(u.len());
    let mut sd = Vec::with_capacity(u.len());
    for &x in u {
        let x = x as f64;
        su.push((x - prev).max(0.0));
        sd.push((prev - x).max(0.0));
        prev = x;
    }
    (su, sd)
}

/// First status-rule violation of a device schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Defect {
    MustRun(usize),
    Outage(usize),
    /// Startup at `t` too soon after the shutdown at `s`.
    MinDown { s: usize, t: usize },
    /// Shutdown at `t` too soon after the startup at `s`.
    MinUp { s: usize, t: usize },
    MaxStartups(usize),
    MaxShutdowns(usize),
    Ramp,
}

fn first_defect(inst: &Instance, j: usize, u: &[u8]) -> Option<Defect> {
    let dev = &inst.devices[j];
    if let Some(&t) = dev.must_run.iter().find(|&&t| u[t] != 1) {
        return Some(Defect::MustRun(t));
    }
    if let Some(&t) = dev.forced_outage.iter().find(|&&t| u[t] != 0) {
        return Some(Defect::Outage(t));
    }
    let (su, sd) = transitions(dev.u0, u);
    let lb = &inst.index().lookback[j];
    for t in 0..u.len() {
        if su[t] > 0.0 {
            if let Some(s) = lb.down[t].clone().find(|&s| sd[s] > 0.0) {
                return Some(Defect::MinDown { s, t });
            }
        }
        if sd[t] > 0.0 {
            if let Some(s) = lb.up[t].clone().find(|&s| su[s] > 0.0) {
                return Some(Defect::MinUp { s, t });
            }
        }
    }
    for (i, lim) in dev.max_startups.iter().enumerate() {
        if lim.intervals.iter().map(|&t| su[t]).sum::<f64>() > lim.max as f64 {
            return Some(Defect::MaxStartups(i));
        }
    }
    for (i, lim) in dev.max_shutdowns.iter().enumerate() {
        if lim.intervals.iter().map(|&t| sd[t]).sum::<f64>() > lim.max as f64 {
            return Some(Defect::MaxShutdowns(i));
        }
    }
    if ramp_envelope(inst, j, u, None).is_none() {
        return Some(Defect::Ramp);
    }
    None
}

/// True when the statuses of device `j` satisfy must-run, forced outage,
/// minimum up/down, startup/shutdown limits and ramp reachability.
pub fn device_schedule_ok(inst: &Instance, j: usize, u: &[u8]) -> bool {
    first_defect(inst, j, u).is_none()
}

/// Maximal runs of equal status as `(start, end_exclusive, status)`.
pub(crate) fn runs(u: &[u8]) -> Vec<(usize, usize, u8)> {
    let mut out = Vec::new();
    let mut s = 0;
    for t in 1..=u.len() {
        if t == u.len() || u[t] != u[s] {
            out.push((s, t, u[s]));
            s = t;
        }
    }
    out
}

fn run_containing(u: &[u8], t: usize) -> (usize, usize) {
    let mut a = t;
    while a > 0 && u[a - 1] == u[t] {
        a -= 1;
    }
    let mut b = t + 1;
    while b < u.len() && u[b] == u[t] {
        b += 1;
    }
    (a, b)
}

fn touches(set: &[usize], a: usize, b: usize) -> bool {
    set.iter().any(|&t| t >= a && t < b)
}

/// Sets `[a, b)` to `x` unless that would contradict a must-run or
/// forced-outage interval; returns whether it did.
fn try_set(dev: &Device, u: &mut [u8], a: usize, b: usize, x: u8) -> bool {
    let blocked = if x == 1 { touches(&dev.forced_outage, a, b) } else { touches(&dev.must_run, a, b) };
    if blocked || a >= b {
        return false;
    }
    u[a..b].iter_mut().for_each(|v| *v = x);
    true
}

/// Constant schedule at the initial status, bent only where must-run or
/// forced-outage intervals demand it.
pub fn fallback_status(inst: &Instance, j: usize) -> Vec<u8> {
    let dev = &inst.devices[j];
    let nt = inst.num_intervals();
    let mut u = vec![dev.u0; nt];
    if device_schedule_ok(inst, j, &u) {
        return u;
    }
    for &t in &dev.must_run {
        u[t] = 1;
    }
    for &t in &dev.forced_outage {
        u[t] = 0;
    }
    if device_schedule_ok(inst, j, &u) {
        return u;
    }
    // Stay on from the first must-run interval up to the first forced outage.
    let mut alt = vec![0u8; nt];
    if let Some(&first) = dev.must_run.iter().min() {
        let stop = dev.forced_outage.iter().copied().filter(|&t| t > first).min().unwrap_or(nt);
        let start = if dev.u0 == 1 { 0 } else { first };
        alt[start..stop].iter_mut().for_each(|v| *v = 1);
    }
    if device_schedule_ok(inst, j, &alt) {
        alt
    } else {
        u
    }
}

/// Repairs one device's statuses toward feasibility: fills short off-gaps,
/// extends short on-runs, drops the least valuable runs when a startup or
/// shutdown limit is exceeded. `value[t]` scores keeping the device on at
/// `t`. Falls back to [`fallback_status`] when local moves do not converge.
pub fn repair_device(inst: &Instance, j: usize, desired: &[u8], value: &[f64]) -> Vec<u8> {
    let dev = &inst.devices[j];
    let nt = desired.len();
    let mut u = desired.to_vec();
    for &t in &dev.must_run {
        u[t] = 1;
    }
    for &t in &dev.forced_outage {
        u[t] = 0;
    }
    let run_value = |a: usize, b: usize| -> f64 { (a..b).map(|t| value[t]).sum::<f64>() - dev.startup_cost };
    for _ in 0..4 * nt + 8 {
        let Some(defect) = first_defect(inst, j, &u) else {
            return u;
        };
        let fixed = match defect {
            Defect::MustRun(t) => try_set(dev, &mut u, t, t + 1, 1),
            Defect::Outage(t) => try_set(dev, &mut u, t, t + 1, 0),
            Defect::MinDown { s, t } => {
                // Either bridge the off-gap or drop the run that restarts too early.
                let (a, b) = run_containing(&u, t);
                let bridge_gain: f64 = (s..t).map(|x| value[x]).sum::<f64>() + dev.startup_cost;
                let drop_gain = -run_value(a, b);
                if bridge_gain >= drop_gain {
                    try_set(dev, &mut u, s, t, 1) || try_set(dev, &mut u, a, b, 0)
                } else {
                    try_set(dev, &mut u, a, b, 0) || try_set(dev, &mut u, s, t, 1)
                }
            }
            Defect::MinUp { s, t } => try_set(dev, &mut u, t, t + 1, 1) || try_set(dev, &mut u, s, t, 0),
            Defect::MaxStartups(i) | Defect::MaxShutdowns(i) => {
                let lim = if matches!(defect, Defect::MaxStartups(_)) { &dev.max_startups[i] } else { &dev.max_shutdowns[i] };
                let cand: Vec<(usize, usize)> = runs(&u)
                    .into_iter()
                    .filter(|&(a, _, x)| x == 1 && (a > 0 || dev.u0 == 0) && lim.intervals.contains(&a))
                    .map(|(a, b, _)| (a, b))
                    .collect();
                let mut order: Vec<(f64, usize, usize)> =
                    cand.iter().map(|&(a, b)| (run_value(a, b), a, b)).collect();
                order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                let mut done = false;
                for &(_, a, b) in &order {
                    if try_set(dev, &mut u, a, b, 0) {
                        done = true;
                        break;
                    }
                    // Merge with the previous on-run instead.
                    let prev_on = u[..a].iter().rposition(|&x| x == 1);
                    if let Some(p) = prev_on {
                        if try_set(dev, &mut u, p + 1, a, 1) {
                            done = true;
                            break;
                        }
                    }
                }
                done
            }
            Defect::Ramp => false,
        };
        if !fixed {
            break;
        }
    }
    if device_schedule_ok(inst, j, &u) {
        u
    } else {
        fallback_status(inst, j)
    }
}

/// Clearing of the relaxed problem: every device free on `[0, P^max]`
/// (commitment, network and ramps ignored). Returns the cleared power
/// `[t][j]` and the per-interval marginal price estimate.
pub fn relaxed_clearing(inst: &Instance) -> (Vec<Vec<f64>>, Vec<f64>) {
    let nt = inst.num_intervals();
    let mut cleared = Vec::with_capacity(nt);
    let mut prices = Vec::with_capacity(nt);
    for t in 0..nt {
        let win: Vec<Window> = inst
            .devices
            .iter()
            .map(|d| Window { lo: 0.0, hi: d.p_max[t].min(d.energy_curves[t].total_width()) })
            .collect();
        let c = clear_interval(inst, t, &win, 0.0);
        cleared.push(c.p);
        prices.push(c.price);
    }
    (cleared, prices)
}

/// Fractional commitment: cleared share of each device's capacity.
pub fn fractional_commitment(inst: &Instance) -> CandidateSchedule {
    let (cleared, _) = relaxed_clearing(inst);
    let nt = inst.num_intervals();
    let u = inst
        .devices
        .iter()
        .enumerate()
        .map(|(j, d)| (0..nt).map(|t| share(cleared[t][j], d.p_max[t])).collect())
        .collect();
    let mut s = CandidateSchedule { u, branch_u: initial_branches(inst), ..Default::default() };
    s.derive_transitions(inst);
    s
}

fn share(p: f64, p_max: f64) -> f64 {
    if p_max > 0.0 {
        (p / p_max).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Value of keeping each device on per interval at the relaxed clearing
/// prices: margin at full output less the no-load cost.
pub fn commitment_values(inst: &Instance) -> Vec<Vec<f64>> {
    let (_, prices) = relaxed_clearing(inst);
    inst.devices
        .iter()
        .map(|d| {
            (0..inst.num_intervals())
                .map(|t| {
                    let dur = inst.duration(t);
                    let c = &d.energy_curves[t];
                    let p = d.p_max[t].min(c.total_width());
                    let margin = if d.is_producer() { prices[t] * p - c.value(p) } else { c.value(p) - prices[t] * p };
                    dur * (margin.max(0.0) - d.on_cost)
                })
                .collect()
        })
        .collect()
}

/// Extra producer capacity committed per interval in merit order until the
/// largest zonal reserve requirement can be covered.
fn add_reserve_margin(inst: &Instance, u: &mut [Vec<u8>]) {
    let sigma = inst.zones.iter().map(|z| z.sigma).fold(0.0, f64::max);
    if sigma <= 0.0 {
        return;
    }
    let idx = inst.index();
    for t in 0..inst.num_intervals() {
        let on: Vec<usize> = idx.producers.iter().copied().filter(|&j| u[j][t] == 1).collect();
        let largest = on.iter().map(|&j| inst.devices[j].p_max[t]).fold(0.0, f64::max);
        let need = sigma * largest;
        let spare: f64 = on.iter().map(|&j| inst.devices[j].reserve_max[t]).sum();
        if spare >= need || on.is_empty() {
            continue;
        }
        let mut off: Vec<usize> = idx.producers.iter().copied().filter(|&j| u[j][t] == 0).collect();
        off.sort_by(|&a, &b| {
            let ca = avg_cost(&inst.devices[a], t);
            let cb = avg_cost(&inst.devices[b], t);
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let mut got = spare;
        for j in off {
            if got >= need {
                break;
            }
            if inst.devices[j].forced_outage.contains(&t) {
                continue;
            }
            u[j][t] = 1;
            got += inst.devices[j].reserve_max[t];
        }
    }
}

fn avg_cost(d: &Device, t: usize) -> f64 {
    let c = &d.energy_curves[t];
    c.average_price(d.p_max[t].min(c.total_width())) + d.on_cost / d.p_max[t].max(1e-9)
}

fn finalize(inst: &Instance, mut u: Vec<Vec<u8>>, branch_u: Vec<Vec<f64>>, margin: bool) -> CandidateSchedule {
    if margin {
        add_reserve_margin(inst, &mut u);
    }
    let values = commitment_values(inst);
    let mut s = CandidateSchedule {
        u: vec![Vec::new(); inst.devices.len()],
        u_su: vec![vec![0.0; inst.num_intervals()]; inst.devices.len()],
        u_sd: vec![vec![0.0; inst.num_intervals()]; inst.devices.len()],
        branch_u,
    };
    for j in 0..inst.devices.len() {
        let r = repair_device(inst, j, &u[j], &values[j]);
        s.set_status(inst, j, &r);
    }
    s
}

/// Merit-order commitment: per interval, producers in order of average cost
/// at full output until their capacity covers the relaxed consumption times
/// `1 + max σ`; consumers that clear any power in the relaxation are on. A
/// reserve margin and per-device repair follow.
pub fn uc_phase(inst: &Instance) -> CandidateSchedule {
    let (cleared, _) = relaxed_clearing(inst);
    let nd = inst.devices.len();
    let nt = inst.num_intervals();
    let sigma = inst.zones.iter().map(|z| z.sigma).fold(0.0, f64::max);
    let idx = inst.index();
    let mut u = vec![vec![0u8; nt]; nd];
    for t in 0..nt {
        let load: f64 = idx.consumers.iter().map(|&j| cleared[t][j]).sum();
        for &j in &idx.consumers {
            u[j][t] = (cleared[t][j] > 0.0) as u8;
        }
        let mut order: Vec<usize> = idx.producers.clone();
        order.sort_by(|&a, &b| {
            avg_cost(&inst.devices[a], t).total_cmp(&avg_cost(&inst.devices[b], t)).then(a.cmp(&b))
        });
        let need = load * (1.0 + sigma);
        let mut cap = 0.0;
        for j in order {
            if cap >= need {
                break;
            }
            let d = &inst.devices[j];
            if d.forced_outage.contains(&t) {
                continue;
            }
            u[j][t] = 1;
            cap += d.p_max[t].min(d.energy_curves[t].total_width());
        }
    }
    finalize(inst, u, initial_branches(inst), true)
}

/// One-shot rounding of a fractional schedule at `threshold`, then repair.
pub fn round_once(inst: &Instance, fractional: &CandidateSchedule, threshold: f64) -> CandidateSchedule {
    let u = fractional.u.iter().map(|row| row.iter().map(|&x| (x >= threshold) as u8).collect()).collect();
    finalize(inst, u, fractional.branch_u.clone(), false)
}

/// Default rounding threshold; shares at or above it round up.
pub const ROUND_UP_THRESHOLD: f64 = 0.4;

/// Iterative batch rounding: devices ordered by total capacity, rounded a
/// batch at a time with an upward bias, and the relaxation re-cleared with
/// the rounded devices fixed before the next batch.
pub fn batch_round(inst: &Instance, fractional: &CandidateSchedule, batches: usize) -> CandidateSchedule {
    let nd = inst.devices.len();
    let nt = inst.num_intervals();
    if fractional.is_integral() {
        let u = fractional.u.iter().map(|r| r.iter().map(|&x| x as u8).collect()).collect();
        return finalize(inst, u, fractional.branch_u.clone(), false);
    }
    let mut order: Vec<usize> = (0..nd).collect();
    let size = |j: usize| inst.devices[j].p_max.iter().sum::<f64>();
    order.sort_by(|&a, &b| size(b).total_cmp(&size(a)).then(a.cmp(&b)));
    let batches = batches.clamp(1, nd.max(1));
    let per = nd.div_ceil(batches).max(1);
    let mut fixed: Vec<Vec<Option<u8>>> = vec![vec![None; nd]; nt];
    let mut current = fractional.u.clone();
    for chunk in order.chunks(per) {
        for &j in chunk {
            for t in 0..nt {
                fixed[t][j] = Some((current[j][t] >= ROUND_UP_THRESHOLD) as u8);
            }
        }
        // Re-clear with the rounded devices held at their statuses.
        for t in 0..nt {
            let win: Vec<Window> = inst
                .devices
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    let hi = d.p_max[t].min(d.energy_curves[t].total_width());
                    match fixed[t][j] {
                        Some(1) => Window { lo: d.p_min[t].min(hi), hi },
                        Some(_) => Window { lo: 0.0, hi: 0.0 },
                        None => Window { lo: 0.0, hi },
                    }
                })
                .collect();
            let c = clear_interval(inst, t, &win, 0.0);
            for j in 0..nd {
                if fixed[t][j].is_none() {
                    current[j][t] = share(c.p[j], inst.devices[j].p_max[t]);
                }
            }
        }
    }
    let u = (0..nd).map(|j| (0..nt).map(|t| fixed[t][j].unwrap_or(0)).collect()).collect();
    finalize(inst, u, fractional.branch_u.clone(), true)
}
