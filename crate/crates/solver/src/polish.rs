//! Local search around the incumbent: commitment run toggles and, when
//! enabled, single-branch open/close moves. Candidates are ranked by a
//! dispatch-only surrogate, the most promising are built and evaluated in
//! full, and the single best strict improvement is applied per round.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scuc_core::model::{build_topology, Instance};
use scuc_core::objective::{multi_interval_energy_penalty, reserve_terms_from};
use scuc_core::par::map_range;

use crate::dispatch::{assign_reserves, dispatch_all};
use crate::schedule::{commitment_values, repair_device, runs, CandidateSchedule};
use crate::{Adders, Ctx, Incumbent, SolverError};

#[derive(Debug, Clone, PartialEq)]
pub enum Move {
    /// New status sequence for one device.
    Device { j: usize, u: Vec<u8> },
    /// New status sequence for one AC branch.
    Branch { b: usize, u: Vec<f64> },
}

impl Move {
    /// Tie-break key: devices before branches, then entity index.
    fn key(&self) -> (u8, usize) {
        match self {
            Move::Device { j, .. } => (0, *j),
            Move::Branch { b, .. } => (1, *b),
        }
    }

    pub fn apply(&self, inst: &Instance, s: &CandidateSchedule) -> CandidateSchedule {
        let mut s = s.clone();
        match self {
            Move::Device { j, u } => s.set_status(inst, *j, u),
            Move::Branch { b, u } => s.branch_u[*b].clone_from(u),
        }
        s
    }
}

/// Run-level commitment changes for every device, each repaired to a
/// schedule-feasible sequence; duplicates and no-ops removed.
pub fn device_moves(inst: &Instance, s: &CandidateSchedule, values: &[Vec<f64>]) -> Vec<Move> {
    let nt = inst.num_intervals();
    let mut out = Vec::new();
    for j in 0..inst.devices.len() {
        let cur = s.status(j);
        let mut wants: Vec<Vec<u8>> = vec![vec![0; nt], vec![1; nt]];
        for (a, b, x) in runs(&cur) {
            let mut w = cur.clone();
            w[a..b].fill(1 - x);
            wants.push(w);
            if x == 1 {
                if b - a > 1 {
                    let mut w = cur.clone();
                    w[a] = 0;
                    wants.push(w);
                    let mut w = cur.clone();
                    w[b - 1] = 0;
                    wants.push(w);
                }
                if a > 0 {
                    let mut w = cur.clone();
                    w[a - 1] = 1;
                    wants.push(w);
                }
                if b < nt {
                    let mut w = cur.clone();
                    w[b] = 1;
                    wants.push(w);
                }
            }
        }
        let mut seen: Vec<Vec<u8>> = vec![cur.clone()];
        for w in wants {
            let r = repair_device(inst, j, &w, &values[j]);
            if !seen.contains(&r) {
                seen.push(r.clone());
                out.push(Move::Device { j, u: r });
            }
        }
    }
    out
}

/// Whether the AC branch status sequence keeps the base network and every
/// contingency network connected in every interval.
pub fn switch_allowed(inst: &Instance, s: &CandidateSchedule, b: usize, u: &[f64]) -> bool {
    let idx = inst.index();
    (0..inst.num_intervals()).all(|t| {
        let mut closed: Vec<bool> = s.branch_u.iter().map(|r| r[t] >= 0.5).collect();
        closed[b] = u[t] >= 0.5;
        build_topology(inst, &closed, None).is_connected()
            && idx.ctg_branch.iter().all(|&k| build_topology(inst, &closed, Some(k)).is_connected())
    })
}

/// Toggle of each branch over the whole horizon (open when closed anywhere,
/// else closed), kept only when connectivity survives.
pub fn branch_moves(inst: &Instance, s: &CandidateSchedule) -> Vec<Move> {
    (0..inst.ac_branches.len())
        .filter_map(|b| {
            let any_closed = s.branch_u[b].iter().any(|&x| x >= 0.5);
            let u = vec![if any_closed { 0.0 } else { 1.0 }; inst.num_intervals()];
            switch_allowed(inst, s, b, &u).then_some(Move::Branch { b, u })
        })
        .collect()
}

/// Surplus estimate of a schedule from the ramp-chained dispatch alone:
/// energy value less cost, commitment costs, copper-plate imbalance,
/// reserve and energy-limit penalties.
pub fn surrogate(inst: &Instance, s: &CandidateSchedule, a: &Adders) -> f64 {
    let loss = &a.loss;
    let traj = dispatch_all(inst, s, loss, a.hold);
    let pen = &inst.penalties;
    let mut z = 0.0;
    for t in 0..inst.num_intervals() {
        let dur = inst.duration(t);
        let p = &traj.p[t];
        let mut net = -loss.get(t).copied().unwrap_or(0.0);
        for (j, d) in inst.devices.iter().enumerate() {
            let e = dur * d.energy_curves[t].value(p[j]);
            if d.is_producer() {
                z -= e;
                net += p[j];
            } else {
                z += e;
                net -= p[j];
            }
            z -= dur * d.on_cost * s.u[j][t] + d.startup_cost * s.u_su[j][t] + d.shutdown_cost * s.u_sd[j][t];
        }
        z -= dur * pen.c_p * net.abs();
        let u: Vec<f64> = s.u.iter().map(|r| r[t]).collect();
        let rsv = assign_reserves(inst, t, &u, p);
        let r = reserve_terms_from(inst, dur, p, &rsv);
        z -= r.device_cost.iter().sum::<f64>() + r.zone_penalty.iter().sum::<f64>();
    }
    for (j, d) in inst.devices.iter().enumerate() {
        let pj: Vec<f64> = traj.p.iter().map(|row| row[j]).collect();
        for ec in &d.energy_constraints {
            z -= multi_interval_energy_penalty(ec, &pj, pen.c_en);
        }
    }
    z
}

/// Improves the incumbent until no candidate helps, the round cap is hit or
/// the budget runs out. A round evaluates one chunk of the ranked
/// candidates; the next chunk is tried only when the current one fails.
pub(crate) fn polish(ctx: &Ctx, best: &mut Incumbent) -> Result<(), SolverError> {
    let inst = ctx.inst;
    let cap = ctx.cfg.polish_iters.unwrap_or(usize::MAX);
    let width = ctx.cfg.polish_width.max(1);
    let values = commitment_values(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut rounds = 0;
    'outer: while rounds < cap && ctx.time_left(1.0) {
        let Some(sched) = best.schedule.clone() else { break };
        let adders = best.adders.clone();
        let mut moves = device_moves(inst, &sched, &values);
        moves.shuffle(&mut rng);
        let est = map_range(ctx.cfg.exec, moves.len(), |i| surrogate(inst, &moves[i].apply(inst, &sched), &adders));
        let mut order: Vec<usize> = (0..moves.len()).collect();
        order.sort_by(|&a, &b| est[b].total_cmp(&est[a]));
        let mut ranked: Vec<Move> = order.into_iter().map(|i| moves[i].clone()).collect();
        if ctx.cfg.flags.enable_switch_search {
            let mut br = branch_moves(inst, &sched);
            br.shuffle(&mut rng);
            // Interleave a couple of switching moves into the first chunk.
            for (k, m) in br.into_iter().enumerate() {
                ranked.insert((k * width / 2 + width - 1).min(ranked.len()), m);
            }
        }
        for chunk in ranked.chunks(width) {
            if rounds >= cap || !ctx.time_left(1.0) {
                break 'outer;
            }
            rounds += 1;
            let cands: Vec<CandidateSchedule> = chunk.iter().map(|m| m.apply(inst, &sched)).collect();
            let evals = map_range(ctx.cfg.exec, cands.len(), |i| {
                let built = ctx.build(&cands[i], &adders);
                let ev = ctx.evaluate(&built.solution);
                (built, ev)
            });
            let pick = (0..chunk.len())
                .filter(|&i| evals[i].1.is_feasible())
                .filter_map(|i| evals[i].1.z_ms().map(|z| (i, z)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(chunk[b.0].key().cmp(&chunk[a.0].key())));
            if let Some((i, _)) = pick {
                let (built, ev) = &evals[i];
                if best.offer(&built.solution, &cands[i], &adders, ev.clone(), "polish")? {
                    // Refresh the loss adders for the new commitment.
                    let fresh = Adders { loss: built.losses.clone(), hold: adders.hold };
                    let again = ctx.build(&cands[i], &fresh);
                    let ev2 = ctx.evaluate(&again.solution);
                    best.offer(&again.solution, &cands[i], &fresh, ev2, "polish")?;
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(())
}
