//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scuc_core::acpf::{
    branch_flow, bus_imbalance_at, solve_power_flow, IntervalSettings, NewtonOptions, PowerFlowProblem, PowerFlowSetup,
};
use scuc_core::contingency::{base_dc_state, lodf_screen, solve_dc, DcInputs};
use scuc_core::equilibrium::bound_report;
use scuc_core::evaluator::{check_hard_constraints, DEFAULT_TOL};
use scuc_core::model::{build_topology, AcBranch, Device, DeviceKind, Instance, InstanceBuilder, PwlCurve, Solution};
use scuc_core::par::map_range;
use scuc_core::{evaluate, evaluate_json, EvalOptions, Evaluation, Exec, FeasibilityClass, C64};
use scuc_harness::tournament::{Entry, RunStatus};
use scuc_harness::{generate_scenario, run_tournament, Limits, RankingTable, ScenarioPreset, SizeClass, SolverEntry, TournamentConfig};
use scuc_solver::{refine_interval, solve, solve_with, SolverConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- 1

fn small_random_case(rng: &mut ChaCha8Rng) -> (Instance, Solution) {
    let n = rng.gen_range(3..=6);
    let nt = rng.gen_range(1..=4);
    let inst = common::random_instance(rng, n, nt);
    let mut data = inst.into_data();
    data.contingencies.shuffle(rng);
    data.contingencies.truncate(3);
    let inst = Instance::new(data);
    let sol = common::random_feasible_solution(rng, &inst);
    (inst, sol)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut matched = 0;
    let mut first_bad = None;
    for case in 0..200 {
        let (inst, sol) = small_random_case(&mut rng);
        let ev = evaluate(&inst, &sol);
        let Some(o) = ev.objective.as_ref() else {
            first_bad.get_or_insert(format!("case {case} rejected"));
            continue;
        };
        let or = common::oracle::oracle_objective(&inst, &sol);
        let t = &o.totals;
        let m = &or.terms;
        let pairs = [
            ("z_ms", o.z_ms, or.z_ms),
            ("z_base", o.z_base, or.z_base),
            ("ctg_worst", o.z_ctg_worst, or.worst),
            ("ctg_avg", o.z_ctg_avg, or.avg),
            ("value", t.consumer_value, m.consumer_value),
            ("cost", t.producer_cost, m.producer_cost),
            ("rsv", t.z_rsv, m.reserve_cost),
            ("su", t.z_su, m.startup),
            ("sd", t.z_sd, m.shutdown),
            ("on", t.z_on, m.on),
            ("sw", t.z_sw, m.switching),
            ("s", t.z_s, m.overload),
            ("rsv_zone", t.z_rsv_zone, m.zone_shortfall),
            ("p", t.z_p, m.p_imbalance),
            ("q", t.z_q, m.q_imbalance),
            ("en", o.z_en, m.energy),
        ];
        match pairs.iter().find(|(_, a, b)| !rel_close(*a, *b, 1e-9)) {
            None => matched += 1,
            Some((name, a, b)) => {
                first_bad.get_or_insert(format!("case {case} {name}: {a} vs {b}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        matched == 200 && secs < 60.0,
        format!("{matched}/200 pairs match on z_ms and 16 components to 1e-9 in {secs:.2}s{}", suffix(first_bad)),
    )
}

fn suffix(x: Option<String>) -> String {
    x.map(|s| format!("; first mismatch: {s}")).unwrap_or_default()
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let (mut residual, mut shift, mut lodf) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut outages = 0;
    let mut failures = 0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=8);
        let inst = common::random_instance(&mut rng, n, 1);
        let sol = common::random_feasible_solution(&mut rng, &inst);
        let inp = DcInputs::from_solution(&inst, &sol, 0);
        let Ok(base) = base_dc_state(&inst, inp.clone()) else {
            failures += 1;
            continue;
        };
        let closed = vec![true; inst.ac_branches.len()];
        for k in 0..inst.contingencies.len() {
            let outage = inst.index().ctg_branch[k];
            if !build_topology(&inst, &closed, Some(outage)).is_connected() {
                continue;
            }
            outages += 1;
            let (Ok(full), Ok(fast)) = (solve_dc(&inst, &inp, Some(outage)), lodf_screen(&inst, &base, k)) else {
                failures += 1;
                continue;
            };
            let r = inp.balance_residual(&inst, Some(outage), &full.theta);
            residual = r.iter().fold(residual, |m, x| m.max(x.abs()));
            let moved: Vec<f64> = full.theta.iter().map(|a| a + 0.37).collect();
            let r2 = inp.balance_residual(&inst, Some(outage), &moved);
            shift = r.iter().zip(&r2).fold(shift, |m, (a, b)| m.max((a - b).abs()));
            lodf = fast.iter().zip(&full.flows).fold(lodf, |m, (a, b)| m.max((a - b).abs()));
        }
    }
    outcome(
        failures == 0 && residual < 1e-8 && shift < 1e-10 && lodf < 1e-6,
        format!(
            "100 cases, {outages} non-bridge outages: max residual {residual:.1e}, shift change {shift:.1e}, lodf vs full {lodf:.1e}, {failures} solve failures"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let polar = |v: f64, a: f64| C64::from_polar(v, a);
    let mut lossless = 0.0_f64;
    let mut min_loss = f64::INFINITY;
    for _ in 0..2000 {
        let wf = polar(rng.gen_range(0.9..1.1), rng.gen_range(-0.5..0.5));
        let wt = polar(rng.gen_range(0.9..1.1), rng.gen_range(-0.5..0.5));
        let br = AcBranch::simple("l", "a", "b", C64::new(0.0, -rng.gen_range(1.0..30.0)));
        let f = branch_flow(&br, 1.0, 1.0, 0.0, wf, wt);
        lossless = lossless.max((f.p_fr() + f.s_to.re).abs());
        let br = AcBranch::simple("l", "a", "b", C64::new(rng.gen_range(0.01..5.0), -rng.gen_range(1.0..30.0)));
        let f = branch_flow(&br, 1.0, rng.gen_range(0.9..1.1), rng.gen_range(-0.5..0.5), wf, wt);
        min_loss = min_loss.min(f.s_fr.re + f.s_to.re);
    }

    let mut jac_err = 0.0_f64;
    for case in 0..20 {
        let inst = common::random_instance(&mut rng, 5, 1);
        let st = IntervalSettings {
            device_p: inst.devices.iter().map(|_| rng.gen_range(0.0..0.5)).collect(),
            device_q: inst.devices.iter().map(|_| rng.gen_range(-0.2..0.2)).collect(),
            shunt_steps: vec![1.0; inst.shunts.len()],
            ac_u: vec![1.0; inst.ac_branches.len()],
            ac_tau: inst.ac_branches.iter().map(|b| rng.gen_range(b.tau_min..=b.tau_max)).collect(),
            ac_phi: inst.ac_branches.iter().map(|b| rng.gen_range(b.phi_min..=b.phi_max)).collect(),
            dc_p_fr: vec![0.1; inst.dc_branches.len()],
            dc_q_fr: vec![0.0; inst.dc_branches.len()],
            dc_q_to: vec![0.0; inst.dc_branches.len()],
        };
        let setup = PowerFlowSetup { slack_bus: 0, pv_buses: if case % 2 == 0 { vec![2] } else { vec![] }, initial: None };
        let prob = PowerFlowProblem::new(&inst, &st, &setup).expect("problem builds");
        let n = inst.num_buses();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.9..1.1)).collect();
        let th: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let jac = prob.jacobian(&v, &th);
        let cols: Vec<(usize, bool)> = prob
            .angle_buses()
            .iter()
            .map(|&i| (i, true))
            .chain(prob.mag_buses().iter().map(|&i| (i, false)))
            .collect();
        let h = 1e-6;
        for (col, &(bus, is_angle)) in cols.iter().enumerate() {
            let (mut vp, mut tp, mut vm, mut tm) = (v.clone(), th.clone(), v.clone(), th.clone());
            if is_angle {
                tp[bus] += h;
                tm[bus] -= h;
            } else {
                vp[bus] += h;
                vm[bus] -= h;
            }
            let (fp, fm) = (prob.mismatch(&vp, &tp), prob.mismatch(&vm, &tm));
            for row in 0..cols.len() {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let an = jac.get(row, col);
                jac_err = jac_err.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
    }

    // Lossless two-bus line b = -10 with a purely real load p at the far
    // end: angle -asin(p/5)/2 and magnitude cos of that angle.
    let inst = common::two_bus(&[1.0]).build();
    let mut closed_form = 0.0_f64;
    for p in [0.1, 0.5, 1.0, 2.0, 3.0, 4.5] {
        let st = IntervalSettings {
            device_p: vec![0.0, p],
            device_q: vec![0.0, 0.0],
            ac_u: vec![1.0],
            ac_tau: vec![1.0],
            ac_phi: vec![0.0],
            ..Default::default()
        };
        match solve_power_flow(&inst, &st, 0, &NewtonOptions::default()) {
            Ok(r) => {
                let delta = -0.5 * (p / 5.0).asin();
                closed_form = closed_form.max((r.theta[1] - r.theta[0] - delta).abs()).max((r.v[1] - delta.cos()).abs());
                closed_form = closed_form.max(bus_imbalance_at(&inst, &st, &r.w)[1].norm());
            }
            Err(_) => closed_form = f64::INFINITY,
        }
    }
    outcome(
        lossless < 1e-10 && min_loss >= -1e-12 && jac_err < 1e-5 && closed_form < 1e-8,
        format!(
            "lossless |p_fr+p_to| max {lossless:.1e}, min series loss {min_loss:.1e}, jacobian rel err {jac_err:.1e}, two-bus closed form err {closed_form:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn nesting_ok(ev: &Evaluation) -> bool {
    let tol = DEFAULT_TOL;
    match (ev.feasibility_class, ev.metrics.as_ref()) {
        (FeasibilityClass::Infeasible, _) => ev.score == 0.0 && (ev.malformed.is_some() || !ev.feasibility.feasible),
        (_, None) => false,
        (c, Some(m)) => {
            let physical = m.max_p_imbalance <= tol && m.max_q_imbalance <= tol;
            let engineering = physical
                && m.max_base_overload <= tol
                && m.max_ctg_overload <= tol
                && m.max_reserve_shortfall <= tol;
            ev.feasibility.feasible
                && match c {
                    FeasibilityClass::EngineeringFeasible => engineering,
                    FeasibilityClass::PhysicallyFeasible => physical && !engineering,
                    _ => !physical,
                }
        }
    }
}

fn score_ok(ev: &Evaluation) -> bool {
    match ev.z_ms().filter(|_| ev.is_feasible()) {
        Some(z) => ev.score == z.max(0.0),
        None => ev.score == 0.0,
    }
}

fn criterion_4(sweep: &[SweepRun]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let mut evs: Vec<Evaluation> = Vec::new();
    let mut zero_ok = 0;
    let mut zero_cases = 0;
    for _ in 0..30 {
        let (inst, sol) = small_random_case(&mut rng);
        let json = sol.to_json_string();
        let mut bad = vec![
            Vec::new(),
            b"{}".to_vec(),
            json.as_bytes()[..json.len() / 2].to_vec(),
            json.replacen("\"format_version\": \"1\"", "\"format_version\": \"2\"", 1).into_bytes(),
        ];
        let mut frac = sol.clone();
        frac.devices[0].u[0] = 0.5;
        bad.push(frac.to_json_string().into_bytes());
        let mut over = sol.clone();
        over.devices[0].u[0] = 1.0;
        over.devices[0].p[0] = inst.devices[0].p_max[0] + 1.0;
        over.derive_transitions(&inst);
        bad.push(over.to_json_string().into_bytes());
        let mut dropped = sol.clone();
        dropped.buses.pop();
        bad.push(dropped.to_json_string().into_bytes());
        for b in bad {
            zero_cases += 1;
            let ev = evaluate_json(&inst, &b, &EvalOptions::default());
            if ev.score == 0.0 && ev.feasibility_class == FeasibilityClass::Infeasible {
                zero_ok += 1;
            }
            evs.push(ev);
        }
        evs.push(evaluate(&inst, &sol));
    }
    let mut negative = 0;
    for ev in evs.iter().chain(sweep.iter().flat_map(|r| &r.evaluation)) {
        if ev.z_ms().is_some_and(|z| z < 0.0) && ev.is_feasible() {
            negative += 1;
        }
    }
    let all: Vec<&Evaluation> = evs.iter().chain(sweep.iter().flat_map(|r| &r.evaluation)).collect();
    let scored = all.iter().filter(|e| score_ok(e)).count();
    let nested = all.iter().filter(|e| nesting_ok(e)).count();
    outcome(
        zero_ok == zero_cases && scored == all.len() && nested == all.len(),
        format!(
            "{zero_ok}/{zero_cases} malformed or hard-infeasible docs score 0; score = max(0, z_ms) on {scored}/{} evaluations ({negative} with z_ms < 0); class nesting on {nested}/{}",
            all.len(),
            all.len()
        ),
    )
}

// ---------------------------------------------------------------- 5, 6

struct SweepRun {
    label: String,
    secs: f64,
    budget: f64,
    hard_feasible: bool,
    p_share: Option<f64>,
    abs_gap: Option<f64>,
    rel_gap: Option<f64>,
    evaluation: Option<Evaluation>,
}

fn budget_for(p: ScenarioPreset) -> f64 {
    if p.size == SizeClass::Bus14 {
        60.0
    } else {
        300.0
    }
}

fn sweep() -> Vec<SweepRun> {
    let mut out = Vec::new();
    for p in ScenarioPreset::desk() {
        for seed in 0..10 {
            let inst = generate_scenario(p, seed);
            let budget = budget_for(p);
            let cfg = SolverConfig { budget_secs: budget, seed, polish_iters: Some(10), ..SolverConfig::default() };
            let start = Instant::now();
            let res = solve(&inst, &cfg);
            let secs = start.elapsed().as_secs_f64();
            let label = format!("{p} seed {seed}");
            match res {
                Ok(r) => {
                    let hard_feasible = check_hard_constraints(&inst, &r.solution, DEFAULT_TOL).feasible;
                    let o = r.evaluation.objective.as_ref();
                    let p_share = o.filter(|o| o.z_ms != 0.0).map(|o| o.totals.z_p / o.z_ms.abs());
                    let gap = bound_report(&inst, Some(&r.evaluation));
                    out.push(SweepRun {
                        label,
                        secs,
                        budget,
                        hard_feasible,
                        p_share,
                        abs_gap: gap.abs_gap,
                        rel_gap: gap.rel_gap_surplus,
                        evaluation: Some(r.evaluation),
                    });
                }
                Err(_) => out.push(SweepRun {
                    label,
                    secs,
                    budget,
                    hard_feasible: false,
                    p_share: None,
                    abs_gap: None,
                    rel_gap: None,
                    evaluation: None,
                }),
            }
        }
    }
    out
}

fn criterion_5(runs: &[SweepRun]) -> Outcome {
    let ok = runs.iter().filter(|r| r.hard_feasible && r.secs <= r.budget).count();
    let low_p = runs.iter().filter(|r| r.p_share.is_some_and(|s| s < 0.01)).count();
    let slowest = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    let first_bad = runs.iter().find(|r| !(r.hard_feasible && r.secs <= r.budget)).map(|r| r.label.clone());
    outcome(
        ok == runs.len() && low_p as f64 >= 0.9 * runs.len() as f64,
        format!(
            "{ok}/{} runs hard-feasible within budget (slowest {slowest:.2}s); p-imbalance < 1% of |z_ms| on {low_p}/{}{}",
            runs.len(),
            runs.len(),
            first_bad.map(|s| format!("; first failure {s}")).unwrap_or_default()
        ),
    )
}

fn criterion_6(runs: &[SweepRun]) -> Outcome {
    let nonneg = runs.iter().filter(|r| r.abs_gap.is_some_and(|g| g >= 0.0)).count();
    let mut rel: Vec<f64> = runs.iter().filter_map(|r| r.rel_gap).collect();
    rel.sort_by(f64::total_cmp);
    let median = if rel.is_empty() {
        f64::INFINITY
    } else if rel.len() % 2 == 1 {
        rel[rel.len() / 2]
    } else {
        0.5 * (rel[rel.len() / 2 - 1] + rel[rel.len() / 2])
    };
    outcome(
        nonneg as f64 >= 0.95 * runs.len() as f64 && median < 0.15,
        format!(
            "gap >= 0 on {nonneg}/{}; median relative gap {:.2}% (max {:.2}%)",
            runs.len(),
            100.0 * median,
            100.0 * rel.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

// ---------------------------------------------------------------- 7

struct Micro {
    inst: Instance,
    y: C64,
}

fn micro(seed: u64) -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = 2;
    let durations: Vec<f64> = (0..nt).map(|_| [0.5, 1.0][rng.gen_range(0..2)]).collect();
    let mut b = InstanceBuilder::new(&durations);
    b.bus("b0", 0.9, 1.1).bus("b1", 0.9, 1.1);
    let y = C64::new(rng.gen_range(0.005..0.03), rng.gen_range(0.05..0.15)).inv();
    b.ac_branch(AcBranch::simple("l", "b0", "b1", y));
    let p_max = rng.gen_range(1.0..2.0);
    let mut g = Device::simple("g", DeviceKind::Producing, "b0", nt, p_max, rng.gen_range(5.0..30.0));
    g.q_min = vec![-p_max; nt];
    g.q_max = vec![p_max; nt];
    g.p_min = vec![rng.gen_range(0.0..0.3) * p_max; nt];
    g.on_cost = rng.gen_range(0.0..20.0);
    g.startup_cost = rng.gen_range(0.0..20.0);
    g.u0 = rng.gen_bool(0.5) as u8;
    g.p0 = if g.u0 == 1 { g.p_min[0] } else { 0.0 };
    let mut d = Device::simple("d", DeviceKind::Consuming, "b1", nt, 1.0, 0.0);
    d.p_max = (0..nt).map(|_| rng.gen_range(0.5..1.5)).collect();
    let hi = rng.gen_range(60.0..100.0);
    let lo = rng.gen_range(10.0..40.0);
    d.energy_curves = d.p_max.iter().map(|&p| PwlCurve::from_pairs(&[(0.6 * p, hi), (0.4 * p, lo)])).collect();
    d.u0 = 1;
    d.p0 = 0.5 * d.p_max[0];
    b.device(g).device(d);
    Micro { inst: b.build(), y }
}

/// Far-end voltage and sending-end power for a real load `p` at bus 1 with
/// bus 0 held at `v0` angle 0, by Newton on the two bus-1 equations with a
/// finite-difference Jacobian.
fn two_bus_state(y: C64, v0: f64, p: f64) -> Option<(f64, C64)> {
    let w0 = C64::new(v0, 0.0);
    let f = |x: [f64; 2]| {
        let w1 = C64::from_polar(x[1], x[0]);
        // Power leaving bus 1 into the line plus the load must vanish.
        let s = w1 * (y * (w1 - w0)).conj() + C64::new(p, 0.0);
        [s.re, s.im]
    };
    let mut x = [0.0, v0];
    for _ in 0..50 {
        let r = f(x);
        if r[0].abs().max(r[1].abs()) < 1e-13 {
            let w1 = C64::from_polar(x[1], x[0]);
            return Some((x[1], w0 * (y * (w0 - w1)).conj()));
        }
        let h = 1e-7;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut xp = x;
            xp[c] += h;
            let rp = f(xp);
            j[0][c] = (rp[0] - r[0]) / h;
            j[1][c] = (rp[1] - r[1]) / h;
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        x[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        x[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
    }
    None
}

fn pwl(blocks: &[(f64, f64)], p: f64) -> f64 {
    let mut left = 0.0;
    let mut acc = 0.0;
    for &(w, price) in blocks {
        acc += (p.min(left + w) - left).max(0.0) * price;
        left += w;
    }
    acc
}

/// Best surplus over both devices' status sequences, the consumer's output
/// on a fine grid plus its block edges, and the sending-end voltage on a
/// grid, with exact two-bus physics and no penalties.
fn micro_oracle(m: &Micro) -> f64 {
    let inst = &m.inst;
    let nt = inst.num_intervals();
    let (g, d) = (&inst.devices[0], &inst.devices[1]);
    let best_interval = |t: usize, ug: u8, ud: u8| -> f64 {
        let dur = inst.duration(t);
        let blocks_d: Vec<(f64, f64)> = d.energy_curves[t].blocks.iter().map(|b| (b.width, b.price)).collect();
        let blocks_g: Vec<(f64, f64)> = g.energy_curves[t].blocks.iter().map(|b| (b.width, b.price)).collect();
        let mut grid: Vec<f64> = (0..=400).map(|k| d.p_max[t] * k as f64 / 400.0).collect();
        grid.push(0.6 * d.p_max[t]);
        let mut best = f64::NEG_INFINITY;
        for &pd in &grid {
            if ud == 0 && pd > 0.0 {
                continue;
            }
            for v0 in [0.9, 0.95, 1.0, 1.05, 1.1] {
                let (pg, qg) = if ug == 1 {
                    let Some((v1, s)) = two_bus_state(m.y, v0, pd) else { continue };
                    if !(0.9..=1.1).contains(&v1) {
                        continue;
                    }
                    (s.re, s.im)
                } else if pd == 0.0 {
                    (0.0, 0.0)
                } else {
                    continue;
                };
                if ug == 1 && (pg < g.p_min[t] || pg > g.p_max[t] || qg < g.q_min[t] || qg > g.q_max[t]) {
                    continue;
                }
                let z = dur * (pwl(&blocks_d, pd) - pwl(&blocks_g, pg) - g.on_cost * ug as f64);
                best = best.max(z);
            }
        }
        best
    };
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..16 {
        let ug: Vec<u8> = (0..nt).map(|t| (mask >> t & 1) as u8).collect();
        let ud: Vec<u8> = (0..nt).map(|t| (mask >> (2 + t) & 1) as u8).collect();
        let mut z = 0.0;
        let (mut pg, mut pdv) = (g.u0, d.u0);
        for t in 0..nt {
            z -= g.startup_cost * (ug[t] > pg) as u8 as f64 + g.shutdown_cost * (ug[t] < pg) as u8 as f64;
            z -= d.startup_cost * (ud[t] > pdv) as u8 as f64 + d.shutdown_cost * (ud[t] < pdv) as u8 as f64;
            z += best_interval(t, ug[t], ud[t]);
            pg = ug[t];
            pdv = ud[t];
        }
        best = best.max(z);
    }
    best.max(0.0)
}

fn criterion_7() -> Outcome {
    let results = map_range(Exec::Parallel, 20, |k| {
        let m = micro(7000 + k as u64);
        let oracle = micro_oracle(&m);
        let cfg = SolverConfig { polish_iters: Some(20), ..SolverConfig::default() };
        let got = solve(&m.inst, &cfg).map(|r| r.evaluation.score).unwrap_or(0.0);
        (got, oracle)
    });
    let ok = results.iter().filter(|(got, oracle)| *got >= 0.99 * oracle).count();
    let worst = results.iter().map(|(g, o)| if *o > 0.0 { g / o } else { 1.0 }).fold(f64::INFINITY, f64::min);
    let misses: Vec<String> = results
        .iter()
        .enumerate()
        .filter(|(_, (got, oracle))| *got < 0.99 * oracle)
        .map(|(k, (got, oracle))| format!("#{k} {got:.1} vs {oracle:.1}"))
        .collect();
    outcome(
        ok == 20,
        format!(
            "{ok}/20 micro instances within 1% of the exhaustive oracle (worst ratio {worst:.4}){}",
            if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");

    // Anytime trace on generated instances.
    let mut writes = 0;
    let mut monotone = true;
    for (preset, seed) in [("14-d2", 11), ("73-d1", 12), ("73-d2", 13)] {
        let inst = generate_scenario(preset.parse().unwrap(), seed);
        let out = dir.path().join(format!("trace-{preset}.json"));
        let cfg = SolverConfig { out: Some(out.clone()), polish_iters: Some(10), ..SolverConfig::default() };
        let mut scores: Vec<f64> = Vec::new();
        let mut valid = true;
        let mut seen = |_: &Solution, _: &Evaluation| match Solution::load(&inst, &out) {
            Ok(sol) => {
                valid &= check_hard_constraints(&inst, &sol, DEFAULT_TOL).feasible;
                scores.push(evaluate(&inst, &sol).score);
            }
            Err(_) => valid = false,
        };
        let _ = solve_with(&inst, &cfg, &mut seen);
        writes += scores.len();
        monotone &= valid && !scores.is_empty() && scores.windows(2).all(|w| w[1] > w[0]);
    }

    // Looping stub under a one-second limit.
    let inst = generate_scenario("14-d1".parse().unwrap(), 5);
    let inst_path = dir.path().join("stub-inst.json");
    std::fs::write(&inst_path, inst.to_json_string()).unwrap();
    let good = dir.path().join("good.json");
    let r = solve(&inst, &SolverConfig { polish_iters: Some(3), ..SolverConfig::default() }).unwrap();
    r.solution.write_atomic(&good).unwrap();
    let expected = evaluate(&inst, &r.solution).score;
    let stub = ["sh", "-c", "cp \"$0\" \"$1\"; while :; do :; done", good.to_str().unwrap(), "{out}"]
        .map(String::from)
        .to_vec();
    let entry = Entry { name: "stub".into(), path: inst_path, instance: inst };
    let cfg = TournamentConfig { scratch: dir.path().to_path_buf(), ..TournamentConfig::default() };
    let start = Instant::now();
    let runs = run_tournament(&[entry], &[SolverEntry { name: "loop".into(), command: stub }], &Limits::uniform(1.0), &cfg)
        .unwrap();
    let stub_secs = start.elapsed().as_secs_f64();
    let stub_score = runs[0].score;
    let killed = runs[0].status == RunStatus::Killed && stub_secs < 3.0 && stub_score == expected && expected > 0.0;

    // Ensemble against two solver configurations over four instances.
    let bin = env!("CARGO_BIN_EXE_scuc");
    let entries: Vec<Entry> = [("14-d1", 21), ("14-d2", 22), ("14-d3", 23), ("73-d1", 24)]
        .iter()
        .map(|&(p, seed)| {
            let inst = generate_scenario(p.parse().unwrap(), seed);
            let path = dir.path().join(format!("{p}-{seed}.json"));
            std::fs::write(&path, inst.to_json_string()).unwrap();
            Entry { name: format!("{p}-{seed}"), path, instance: inst }
        })
        .collect();
    let template = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = [bin, "solve", "--instance", "{instance}", "--out", "{out}", "--budget", "{budget}", "--seed", "{seed}"]
            .map(String::from)
            .to_vec();
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let solvers = vec![
        SolverEntry { name: "full".into(), command: template(&["--polish-iters", "4"]) },
        SolverEntry { name: "plain".into(), command: template(&["--polish-iters", "0", "--no-batch-rounding"]) },
    ];
    let runs = run_tournament(&entries, &solvers, &Limits::uniform(60.0), &cfg).unwrap();
    let table = RankingTable::from_runs(&runs);
    let mut ensemble_ok = true;
    for (di, &(div, _)) in table.feasible_scenarios.iter().enumerate() {
        let mut max_sum = 0.0;
        for e in &entries {
            let best = runs.iter().filter(|r| r.instance == e.name && r.division == div).map(|r| r.score).fold(0.0, f64::max);
            max_sum += best;
        }
        ensemble_ok &= (table.rows[0].cells[di].obj - max_sum).abs() <= 1e-9 * max_sum.abs().max(1.0);
    }
    ensemble_ok &= runs.iter().all(|r| r.feasible);
    outcome(
        monotone && killed && ensemble_ok,
        format!(
            "trace strictly increasing and feasible over {writes} writes: {monotone}; stub killed after {stub_secs:.2}s and scored {stub_score:.1} from its file: {killed}; ensemble equals per-instance max: {ensemble_ok}"
        ),
    )
}

// ---------------------------------------------------------------- 9

struct Triple {
    z: [f64; 3],
    classes: [FeasibilityClass; 3],
}

/// Engineering-feasible solver output E, then P by turning the phase
/// shifter at interval 0 until a limit is exceeded and re-solving the AC
/// state, then V by moving one voltage of E by 0.01.
fn triple(inst: &Instance, seed: u64) -> Option<Triple> {
    let cfg = SolverConfig { seed, polish_iters: Some(3), ..SolverConfig::default() };
    let e = solve(inst, &cfg).ok()?;
    let ev_e = e.evaluation.clone();
    let pst = inst.ac_branches.iter().position(|b| b.phi_max > b.phi_min)?;
    let br = &inst.ac_branches[pst];
    let phi0 = e.solution.ac_branches[pst].phi[0];
    let mut found = None;
    'search: for k in 1..=30 {
        for dir in [1.0, -1.0] {
            let phi = phi0 + dir * 0.02 * k as f64;
            if phi > br.phi_max || phi < br.phi_min {
                continue;
            }
            let mut sol = e.solution.clone();
            sol.ac_branches[pst].phi[0] = phi;
            refine_interval(inst, &mut sol, 0, &NewtonOptions::default());
            let ev = evaluate(inst, &sol);
            let overloaded = ev.metrics.as_ref().is_some_and(|m| m.max_base_overload > DEFAULT_TOL);
            if ev.feasibility_class == FeasibilityClass::PhysicallyFeasible && overloaded {
                found = Some(ev);
                break 'search;
            }
        }
    }
    let ev_p = found?;
    let mut v = e.solution.clone();
    let bus = &inst.buses[0];
    let x = v.buses[0].v[0];
    v.buses[0].v[0] = if x + 0.01 <= bus.v_max { x + 0.01 } else { x - 0.01 };
    let ev_v = evaluate(inst, &v);
    let z = |ev: &Evaluation| ev.z_ms().unwrap_or(f64::NEG_INFINITY);
    Some(Triple {
        z: [z(&ev_e), z(&ev_p), z(&ev_v)],
        classes: [ev_e.feasibility_class, ev_p.feasibility_class, ev_v.feasibility_class],
    })
}

fn criterion_9() -> Outcome {
    let presets = ScenarioPreset::desk();
    let triples = map_range(Exec::Sequential, 100, |i| {
        let inst = generate_scenario(presets[i % presets.len()], 900 + i as u64);
        triple(&inst, i as u64)
    });
    let expected =
        [FeasibilityClass::EngineeringFeasible, FeasibilityClass::PhysicallyFeasible, FeasibilityClass::EvaluationFeasible];
    let built = triples.iter().flatten().filter(|t| t.classes == expected).count();
    let ordered =
        triples.iter().flatten().filter(|t| t.classes == expected && t.z[0] > t.z[1] && t.z[1] > t.z[2]).count();
    let mut why = Vec::new();
    let not_engineering = triples.iter().flatten().filter(|t| t.classes[0] != expected[0]).count();
    let unbuilt = triples.iter().filter(|t| t.is_none()).count();
    if not_engineering > 0 {
        why.push(format!("{not_engineering} solver outputs not engineering-feasible"));
    }
    if unbuilt > 0 {
        why.push(format!("{unbuilt} without a physical-only variant"));
    }
    outcome(
        ordered >= 90,
        format!(
            "{ordered}/100 triples ordered E > P > V in z_ms ({built} with the intended classes){}",
            if why.is_empty() { String::new() } else { format!("; {}", why.join(", ")) }
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    // Run with `cargo test --test acceptance`; the libtest flags it passes
    // are ignored. ACCEPTANCE_ONLY=4,7 restricts the run to those criteria.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let started = Instant::now();
    let runs = if (4..=6).any(wanted) { sweep() } else { Vec::new() };
    let criteria: [(&str, &dyn Fn() -> Outcome); 9] = [
        ("evaluator oracle equivalence", &criterion_1),
        ("DC contingency correctness", &criterion_2),
        ("AC kernel checks", &criterion_3),
        ("scoring contract", &|| criterion_4(&runs)),
        ("solver pipeline sweep", &|| criterion_5(&runs)),
        ("equilibrium bound behavior", &|| criterion_6(&runs)),
        ("micro-instance optimality", &criterion_7),
        ("anytime and tournament behavior", &criterion_8),
        ("penalty ordering", &criterion_9),
    ];
    let results: Vec<(usize, &str, Outcome)> =
        criteria.iter().enumerate().filter(|(k, _)| wanted(k + 1)).map(|(k, (name, f))| (k + 1, *name, f())).collect();
    let mut failed = 0;
    for (k, name, o) in &results {
        println!("[{}] {k} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {}/{} criteria passed in {:.1}s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
