//! AC refinement of one interval: Newton power flow with voltage-controlled
//! buses, distributed real slack over online producers, reactive limit
//! switching and greedy shunt stepping.

use scuc_core::acpf::{bus_imbalance_at, solve_power_flow_with, IntervalSettings, NewtonOptions, PowerFlowSetup};
use scuc_core::model::Instance;
use scuc_core::C64;

use crate::dispatch::Window;

/// Fixed settings and dispatch of one interval entering the AC stage.
#[derive(Debug, Clone)]
pub struct AcInput {
    pub t: usize,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Range each device's `p` may move in to absorb losses.
    pub adjust: Vec<Window>,
    pub branch_u: Vec<f64>,
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
    pub shunt_steps: Vec<f64>,
    pub warm: Option<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcResult {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub shunt_steps: Vec<f64>,
    pub dc_p_fr: Vec<f64>,
    pub dc_q_fr: Vec<f64>,
    pub dc_q_to: Vec<f64>,
    pub converged: bool,
    /// Net real injection absorbed by the network (series and shunt losses).
    pub losses: f64,
}

const OUTER_ITERS: usize = 12;
const SHUNT_ROUNDS: usize = 4;

struct BusQ {
    /// Online devices at the bus with a reactive range.
    devs: Vec<usize>,
    /// Net injection range.
    lo: f64,
    hi: f64,
}

fn net_q_injection(inst: &Instance, j: usize, q: f64) -> f64 {
    if inst.devices[j].is_producer() {
        q
    } else {
        -q
    }
}

/// Sets the reactive output of every device at a bus so that the net
/// injection equals `target` (clamped to the bus range); all devices move by
/// the same fraction of their range. Returns the net injection realised.
fn spread_q(inst: &Instance, t: usize, bus: &BusQ, target: f64, q: &mut [f64]) -> f64 {
    let span = bus.hi - bus.lo;
    let lam = if span > 0.0 { ((target - bus.lo) / span).clamp(0.0, 1.0) } else { 0.0 };
    for &j in &bus.devs {
        let d = &inst.devices[j];
        let (lo, hi) = (d.q_min[t], d.q_max[t]);
        q[j] = if d.is_producer() { lo + lam * (hi - lo) } else { hi - lam * (hi - lo) };
    }
    bus.lo + lam * span
}

/// Moves `amount` of extra real injection (negative: less) onto online
/// devices within their adjustment windows, producers first, each in
/// proportion to its available room. Returns the amount not placed.
fn spread_p(inst: &Instance, input: &AcInput, p: &mut [f64], amount: f64) -> f64 {
    let mut rest = amount;
    for producers in [true, false] {
        if rest.abs() < 1e-14 {
            break;
        }
        let rooms: Vec<(usize, f64)> = (0..p.len())
            .filter(|&j| input.u[j] > 0.5 && inst.devices[j].is_producer() == producers)
            .map(|j| {
                let w = input.adjust[j];
                // Injection of a consumer rises when its consumption falls.
                let room = match (rest > 0.0, producers) {
                    (true, true) => w.hi - p[j],
                    (false, true) => p[j] - w.lo,
                    (true, false) => p[j] - w.lo,
                    (false, false) => w.hi - p[j],
                };
                (j, room.max(0.0))
            })
            .collect();
        let total: f64 = rooms.iter().map(|r| r.1).sum();
        if total <= 0.0 {
            continue;
        }
        let frac = (rest.abs() / total).min(1.0);
        let mut placed = 0.0;
        for (j, room) in rooms {
            let delta = frac * room;
            let sign = if (rest > 0.0) == producers { 1.0 } else { -1.0 };
            p[j] = input.adjust[j].clamp(p[j] + sign * delta);
            placed += delta;
        }
        rest -= rest.signum() * placed.min(rest.abs());
    }
    rest
}

/// Fractions of the way from 1.0 to each bus's upper voltage bound tried as
/// set points; higher set points cut series losses when the network allows.
const VSET_LEVELS: [f64; 3] = [0.0, 0.5, 0.9];

/// Weight of residual mismatch against losses when picking a set point.
const MISMATCH_WEIGHT: f64 = 1e3;

/// Runs the AC stage for one interval at each set-point level and keeps the
/// result with the lowest losses plus weighted residual mismatch. Voltages
/// are always returned inside their bounds; any residual mismatch is left
/// to the imbalance penalties.
pub fn ac_refine(inst: &Instance, input: &AcInput, opts: &NewtonOptions) -> AcResult {
    let mut best: Option<(f64, AcResult)> = None;
    for level in VSET_LEVELS {
        let vset: Vec<f64> = inst
            .buses
            .iter()
            .map(|b| (1.0 + level * (b.v_max - 1.0).max(0.0)).clamp(b.v_min, b.v_max))
            .collect();
        let (r, mismatch) = refine_at(inst, input, opts, &vset);
        let merit = if r.converged { r.losses + MISMATCH_WEIGHT * mismatch } else { f64::INFINITY };
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, r));
        }
    }
    best.expect("at least one level").1
}

/// One AC refinement with the given voltage set points. Returns the result
/// and the summed absolute bus mismatch at the returned state.
fn refine_at(inst: &Instance, input: &AcInput, opts: &NewtonOptions, vset: &[f64]) -> (AcResult, f64) {
    let t = input.t;
    let n = inst.num_buses();
    let idx = inst.index();
    let mut p = input.p.clone();
    let mut q: Vec<f64> = (0..p.len()).map(|j| crate::dispatch::mid_q(inst, j, t, input.u[j])).collect();
    let mut steps = input.shunt_steps.clone();

    let mut buses: Vec<BusQ> = (0..n).map(|_| BusQ { devs: Vec::new(), lo: 0.0, hi: 0.0 }).collect();
    for (j, d) in inst.devices.iter().enumerate() {
        if input.u[j] < 0.5 || d.q_max[t] - d.q_min[t] <= 1e-9 {
            continue;
        }
        let b = &mut buses[idx.device_bus[j]];
        b.devs.push(j);
        let (a, c) = (net_q_injection(inst, j, d.q_min[t]), net_q_injection(inst, j, d.q_max[t]));
        b.lo += a.min(c);
        b.hi += a.max(c);
    }
    let room = |j: usize| input.adjust[j].hi - input.adjust[j].lo;
    let slack = (0..p.len())
        .filter(|&j| input.u[j] > 0.5 && inst.devices[j].is_producer())
        .max_by(|&a, &b| room(a).total_cmp(&room(b)).then(b.cmp(&a)))
        .map(|j| idx.device_bus[j])
        .or_else(|| (0..n).max_by(|&a, &b| (buses[a].hi - buses[a].lo).total_cmp(&(buses[b].hi - buses[b].lo)).then(b.cmp(&a))))
        .unwrap_or(0);
    let mut is_pv: Vec<bool> = (0..n).map(|i| i != slack && buses[i].hi - buses[i].lo > 1e-9).collect();

    let dc_q = |lo: f64, hi: f64| 0.0f64.clamp(lo, hi);
    let mut st = IntervalSettings {
        device_p: p.clone(),
        device_q: q.clone(),
        shunt_steps: steps.clone(),
        ac_u: input.branch_u.clone(),
        ac_tau: input.tau.clone(),
        ac_phi: input.phi.clone(),
        dc_p_fr: vec![0.0; inst.dc_branches.len()],
        dc_q_fr: inst.dc_branches.iter().map(|b| dc_q(b.q_fr_min, b.q_fr_max)).collect(),
        dc_q_to: inst.dc_branches.iter().map(|b| dc_q(b.q_to_min, b.q_to_max)).collect(),
    };
    let mut w: Vec<C64> = match &input.warm {
        Some(w0) if w0.len() == n => w0.clone(),
        _ => vset.iter().map(|&v| C64::new(v, 0.0)).collect(),
    };
    let mut converged = false;
    let mut shunt_rounds = 0;
    let mut outer = 0;
    while outer < OUTER_ITERS {
        outer += 1;
        st.device_p.clone_from(&p);
        st.device_q.clone_from(&q);
        st.shunt_steps.clone_from(&steps);
        let init: Vec<C64> = (0..n)
            .map(|i| if is_pv[i] || i == slack { C64::from_polar(vset[i], w[i].arg()) } else { w[i] })
            .collect();
        let pv: Vec<usize> = (0..n).filter(|&i| is_pv[i]).collect();
        let setup = PowerFlowSetup { slack_bus: slack, pv_buses: pv.clone(), initial: Some(init) };
        let state = solve_power_flow_with(inst, &st, &setup, opts).or_else(|_| {
            let flat = PowerFlowSetup {
                slack_bus: slack,
                pv_buses: pv,
                initial: Some(vset.iter().map(|&v| C64::new(v, 0.0)).collect()),
            };
            solve_power_flow_with(inst, &st, &flat, opts)
        });
        let Ok(state) = state else {
            converged = false;
            break;
        };
        w = state.w;
        converged = true;
        let s = bus_imbalance_at(inst, &st, &w);
        let mut changed = false;

        let unplaced = spread_p(inst, input, &mut p, s[slack].re);
        if (s[slack].re - unplaced).abs() > 1e-11 {
            changed = true;
        }
        for i in 0..n {
            if !(is_pv[i] || i == slack) || buses[i].devs.is_empty() {
                continue;
            }
            let cur: f64 = buses[i].devs.iter().map(|&j| net_q_injection(inst, j, q[j])).sum();
            let target = cur + s[i].im;
            let got = spread_q(inst, t, &buses[i], target, &mut q);
            if is_pv[i] && (got - target).abs() > 1e-9 {
                is_pv[i] = false;
                changed = true;
            }
        }
        if !changed && shunt_rounds < SHUNT_ROUNDS {
            if step_shunts(inst, &w, &is_pv, slack, &mut steps) {
                shunt_rounds += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let (v, theta): (Vec<f64>, Vec<f64>) = if converged {
        (0..n)
            .map(|i| (w[i].norm().clamp(inst.buses[i].v_min, inst.buses[i].v_max), w[i].arg()))
            .unzip()
    } else {
        (vset.to_vec(), vec![0.0; n])
    };
    st.device_p.clone_from(&p);
    st.device_q.clone_from(&q);
    st.shunt_steps.clone_from(&steps);
    let at: Vec<C64> = (0..n).map(|i| C64::from_polar(v[i], theta[i])).collect();
    let mismatch: f64 = bus_imbalance_at(inst, &st, &at).iter().map(|s| s.re.abs() + s.im.abs()).sum();
    let losses: f64 = inst
        .devices
        .iter()
        .enumerate()
        .map(|(j, d)| if d.is_producer() { p[j] } else { -p[j] })
        .sum();
    let r = AcResult {
        p,
        q,
        v,
        theta,
        shunt_steps: steps,
        dc_p_fr: st.dc_p_fr,
        dc_q_fr: st.dc_q_fr,
        dc_q_to: st.dc_q_to,
        converged,
        losses,
    };
    (r, mismatch)
}

/// One greedy shunt step at each voltage-uncontrolled bus whose magnitude
/// is outside its bounds, in the direction that pulls it back. Returns
/// whether any step changed.
fn step_shunts(inst: &Instance, w: &[C64], is_pv: &[bool], slack: usize, steps: &mut [f64]) -> bool {
    let idx = inst.index();
    let mut moved = false;
    for (k, sh) in inst.shunts.iter().enumerate() {
        let i = idx.shunt_bus[k];
        if is_pv[i] || i == slack || sh.y_step.im == 0.0 {
            continue;
        }
        let v = w[i].norm();
        let bus = &inst.buses[i];
        // Capacitive steps (positive susceptance) raise the voltage.
        let dir = if v < bus.v_min {
            sh.y_step.im.signum()
        } else if v > bus.v_max {
            -sh.y_step.im.signum()
        } else {
            continue;
        };
        let next = steps[k] + dir;
        if next >= sh.u_min as f64 && next <= sh.u_max as f64 {
            steps[k] = next;
            moved = true;
        }
    }
    moved
}
