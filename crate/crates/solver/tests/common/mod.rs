#![allow(dead_code)]

use rand::Rng;
use scuc_core::model::{AcBranch, Device, DeviceKind, Instance, InstanceBuilder, PwlCurve, SwitchLimit};
use scuc_core::C64;
use scuc_solver::SolverConfig;

pub fn producer(id: &str, bus: &str, nt: usize, p_max: f64, price: f64) -> Device {
    let mut d = Device::simple(id, DeviceKind::Producing, bus, nt, p_max, price);
    d.q_min = vec![-p_max; nt];
    d.q_max = vec![p_max; nt];
    d
}

/// Consumer that takes exactly `load[t]` whenever it is on, valued at `price`.
pub fn fixed_load(id: &str, bus: &str, load: &[f64], price: f64) -> Device {
    let nt = load.len();
    let mut d = Device::simple(id, DeviceKind::Consuming, bus, nt, 1.0, price);
    d.p_min = load.to_vec();
    d.p_max = load.to_vec();
    d.energy_curves = load.iter().map(|&l| PwlCurve::from_pairs(&[(l, price)])).collect();
    d.u0 = 1;
    d.p0 = load[0];
    d
}

/// One bus, no network.
pub fn copper_plate(durations: &[f64]) -> InstanceBuilder {
    let mut b = InstanceBuilder::new(durations);
    b.bus("b0", 0.9, 1.1);
    b
}

/// Two buses joined by a line with series admittance `y`.
pub fn two_bus(durations: &[f64], y: C64) -> InstanceBuilder {
    let mut b = InstanceBuilder::new(durations);
    b.bus("b0", 0.9, 1.1).bus("b1", 0.9, 1.1);
    b.ac_branch(AcBranch::simple("l", "b0", "b1", y));
    b
}

/// Copper-plate instance with producers carrying every scheduling rule
/// (minimum up/down times, must-run, outages, startup limits, ramps) and a
/// price-responsive consumer.
pub fn random_scheduling_instance<R: Rng>(rng: &mut R, n_prod: usize, nt: usize) -> Instance {
    let durations: Vec<f64> = (0..nt).map(|_| [0.5, 1.0, 2.0][rng.gen_range(0..3)]).collect();
    let d_min = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let mut b = copper_plate(&durations);
    let mut total = 0.0;
    for k in 0..n_prod {
        let p_max = rng.gen_range(0.5..2.0);
        total += p_max;
        let mut d = producer(&format!("g{k}"), "b0", nt, p_max, rng.gen_range(5.0..40.0));
        let p_min = rng.gen_range(0.0..0.5) * p_max;
        d.p_min = vec![p_min; nt];
        d.on_cost = rng.gen_range(0.0..10.0);
        d.startup_cost = rng.gen_range(0.0..30.0);
        d.shutdown_cost = rng.gen_range(0.0..5.0);
        d.min_uptime = rng.gen_range(0.0..4.0);
        d.min_downtime = rng.gen_range(0.0..4.0);
        d.ramp_up = rng.gen_range(0.3..2.0) * p_max;
        d.ramp_down = rng.gen_range(0.3..2.0) * p_max;
        d.ramp_startup = (p_min / d_min) * rng.gen_range(1.0..2.0) + 1e-3;
        d.ramp_shutdown = (p_min / d_min) * rng.gen_range(1.0..2.0) + 1e-3;
        d.u0 = rng.gen_bool(0.5) as u8;
        d.p0 = if d.u0 == 1 { rng.gen_range(p_min..=p_max) } else { 0.0 };
        if rng.gen_bool(0.3) {
            d.max_startups.push(SwitchLimit { intervals: (0..nt).collect(), max: rng.gen_range(1..3) });
        }
        if rng.gen_bool(0.2) {
            d.max_shutdowns.push(SwitchLimit { intervals: (0..nt).collect(), max: rng.gen_range(1..3) });
        }
        if rng.gen_bool(0.2) {
            d.must_run.push(rng.gen_range(0..nt));
        } else if rng.gen_bool(0.2) {
            d.forced_outage.push(rng.gen_range(0..nt));
            // Starting at the minimum keeps an immediate shutdown reachable.
            d.p0 = if d.u0 == 1 { p_min } else { 0.0 };
        }
        b.device(d);
    }
    let mut c = Device::simple("load", DeviceKind::Consuming, "b0", nt, 1.0, 100.0);
    c.p_max = (0..nt).map(|_| rng.gen_range(0.2..0.8) * total).collect();
    c.energy_curves = c
        .p_max
        .iter()
        .map(|&p| PwlCurve::from_pairs(&[(0.7 * p, 200.0), (0.3 * p, rng.gen_range(5.0..60.0))]))
        .collect();
    c.u0 = 1;
    b.device(c);
    b.build()
}

/// Iteration-capped configuration for deterministic tests.
pub fn capped(iters: usize) -> SolverConfig {
    SolverConfig { polish_iters: Some(iters), ..SolverConfig::default() }
}
