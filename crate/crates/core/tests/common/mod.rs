#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use scuc_core::model::{
    AcBranch, Block, DcBranch, Device, DeviceKind, EnergyConstraint, Instance, InstanceBuilder, PwlCurve,
    ReserveZone, Shunt, Solution,
};
use scuc_core::C64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Two buses joined by a lossless line `y = -10i`, a producer at `b1` and a
/// consumer at `b2`.
pub fn two_bus(durations: &[f64]) -> InstanceBuilder {
    let nt = durations.len();
    let mut b = InstanceBuilder::new(durations);
    b.bus("b1", 0.9, 1.1).bus("b2", 0.8, 1.1);
    let mut g = Device::simple("g", DeviceKind::Producing, "b1", nt, 2.0, 10.0);
    g.q_min = vec![-2.0; nt];
    g.q_max = vec![2.0; nt];
    b.device(g);
    b.device(Device::simple("d", DeviceKind::Consuming, "b2", nt, 2.0, 50.0));
    b.ac_branch(AcBranch::simple("l", "b1", "b2", c(0.0, -10.0)));
    b
}

fn random_curve<R: Rng>(rng: &mut R, kind: DeviceKind, p_max: f64, base: f64) -> PwlCurve {
    let n = rng.gen_range(1..=4);
    let mut prices: Vec<f64> = (0..n).map(|_| base + rng.gen_range(0.0..20.0)).collect();
    prices.sort_by(|a, b| a.total_cmp(b));
    if kind == DeviceKind::Consuming {
        prices.reverse();
    }
    let w = p_max / n as f64;
    PwlCurve::new(prices.into_iter().map(|price| Block { width: w, price }).collect())
}

/// Meshed random instance: a ring plus chords, lossy lines with some
/// transformers and phase shifters, shunts, a DC link, one reserve zone,
/// energy constraints and a contingency per ring line.
pub fn random_instance<R: Rng>(rng: &mut R, n_bus: usize, nt: usize) -> Instance {
    let durations: Vec<f64> = (0..nt).map(|_| [0.25, 0.5, 1.0, 2.0][rng.gen_range(0..4)]).collect();
    let mut b = InstanceBuilder::new(&durations);
    for i in 0..n_bus {
        b.bus(&format!("b{i}"), 0.9, 1.1);
    }
    let mut devices = Vec::new();
    for i in 0..n_bus {
        let bus = format!("b{i}");
        let kind = if i % 2 == 0 { DeviceKind::Producing } else { DeviceKind::Consuming };
        let p_max = rng.gen_range(0.5..3.0);
        let mut d = Device::simple(&format!("d{i}"), kind, &bus, nt, p_max, 0.0);
        let base = if kind == DeviceKind::Producing { 5.0 } else { 40.0 };
        d.energy_curves = (0..nt).map(|_| random_curve(rng, kind, p_max, base)).collect();
        d.p_min = vec![rng.gen_range(0.0..0.3 * p_max); nt];
        d.q_min = vec![-0.5; nt];
        d.q_max = vec![0.5; nt];
        d.reserve_max = vec![0.3 * p_max; nt];
        d.reserve_cost = rng.gen_range(0.0..2.0);
        d.startup_cost = rng.gen_range(0.0..50.0);
        d.shutdown_cost = rng.gen_range(0.0..10.0);
        d.on_cost = rng.gen_range(0.0..5.0);
        if rng.gen_bool(0.5) {
            d.energy_constraints.push(EnergyConstraint {
                a0: -rng.gen_range(0.0..2.0) * nt as f64,
                coeffs: (0..nt).map(|t| (t, 1.0)).collect(),
            });
        }
        devices.push(d);
    }
    for d in devices {
        b.device(d);
    }
    let line = |b: &mut InstanceBuilder, id: String, f: usize, t: usize, rng: &mut R| {
        let mut br = AcBranch::simple(&id, &format!("b{f}"), &format!("b{t}"), c(rng.gen_range(0.0..2.0), -rng.gen_range(5.0..20.0)));
        br.y_fr = c(0.0, rng.gen_range(0.0..0.05));
        br.y_to = br.y_fr;
        if rng.gen_bool(0.3) {
            br.tau_min = 0.9;
            br.tau_max = 1.1;
        }
        if rng.gen_bool(0.3) {
            br.phi_min = -0.3;
            br.phi_max = 0.3;
        }
        br.s_max = rng.gen_range(0.3..2.0);
        br.s_max_ctg = br.s_max * 1.2;
        b.ac_branch(br);
    };
    for i in 0..n_bus {
        line(&mut b, format!("r{i}"), i, (i + 1) % n_bus, rng);
        b.contingency(&format!("k{i}"), &format!("r{i}"));
    }
    if n_bus >= 4 {
        line(&mut b, "chord".into(), 0, n_bus / 2, rng);
    }
    b.shunt(Shunt { id: "sh".into(), bus: "b1".into(), y_step: c(0.01, 0.05), u_min: 0, u_max: 3 });
    b.dc_branch(DcBranch {
        id: "hv".into(),
        from_bus: "b0".into(),
        to_bus: format!("b{}", n_bus - 1),
        p_max: 0.5,
        q_fr_min: -0.2,
        q_fr_max: 0.2,
        q_to_min: -0.2,
        q_to_max: 0.2,
    });
    b.contingency("khv", "hv");
    b.zone(ReserveZone {
        id: "z".into(),
        sigma: 0.3,
        shortage_penalty: 1e3,
        members: (0..n_bus).map(|i| format!("d{i}")).collect(),
    });
    b.build()
}

/// Random solution satisfying every hard constraint of an instance from
/// [`random_instance`] (all lines closed, unlimited ramping).
pub fn random_feasible_solution<R: Rng>(rng: &mut R, inst: &Instance) -> Solution {
    let nt = inst.num_intervals();
    let mut sol = Solution::blank(inst);
    for (dev, ds) in inst.devices.iter().zip(sol.devices.iter_mut()) {
        for t in 0..nt {
            let u = if rng.gen_bool(0.7) { 1.0 } else { 0.0 };
            ds.u[t] = u;
            if u == 1.0 {
                let p = rng.gen_range(dev.p_min[t]..=dev.p_max[t]);
                ds.p[t] = p;
                ds.q[t] = rng.gen_range(dev.q_min[t]..=dev.q_max[t]);
                let room = if dev.is_producer() { dev.p_max[t] - p } else { p - dev.p_min[t] };
                ds.p_rsv[t] = rng.gen_range(0.0..=dev.reserve_max[t].min(room));
            }
        }
    }
    for (bus, bs) in inst.buses.iter().zip(sol.buses.iter_mut()) {
        for t in 0..nt {
            bs.v[t] = rng.gen_range(bus.v_min..=bus.v_max);
            bs.theta[t] = rng.gen_range(-0.3..0.3);
        }
    }
    for (br, bs) in inst.ac_branches.iter().zip(sol.ac_branches.iter_mut()) {
        for t in 0..nt {
            bs.tau[t] = rng.gen_range(br.tau_min..=br.tau_max);
            bs.phi[t] = rng.gen_range(br.phi_min..=br.phi_max);
        }
    }
    for (sh, ss) in inst.shunts.iter().zip(sol.shunts.iter_mut()) {
        for t in 0..nt {
            ss.step[t] = rng.gen_range(sh.u_min..=sh.u_max) as f64;
        }
    }
    for (br, bs) in inst.dc_branches.iter().zip(sol.dc_branches.iter_mut()) {
        for t in 0..nt {
            bs.p_fr[t] = rng.gen_range(-br.p_max..=br.p_max);
            bs.q_fr[t] = rng.gen_range(br.q_fr_min..=br.q_fr_max);
            bs.q_to[t] = rng.gen_range(br.q_to_min..=br.q_to_max);
        }
    }
    sol.derive_transitions(inst);
    sol
}
