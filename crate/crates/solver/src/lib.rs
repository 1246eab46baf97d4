//! Anytime decomposition solver: merit-order commitment with rounding and
//! repair over the whole horizon, ramp-chained dispatch, per-interval AC
//! refinement with loss feedback, and evaluator-scored local search.
//!
//! Every strictly improving hard-feasible solution is handed to an observer
//! and, when an output path is set, written atomically.

pub mod ac;
pub mod dispatch;
pub mod polish;
pub mod schedule;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use scuc_core::acpf::NewtonOptions;
use scuc_core::evaluator::DEFAULT_TOL;
use scuc_core::model::{validate_instance, Instance, Solution};
use scuc_core::par::map_range;
use scuc_core::{evaluate_with, C64, EvalOptions, Evaluation, Exec};
use thiserror::Error;

use ac::{ac_refine, AcInput, AcResult};
use dispatch::{assign_reserves, dispatch_all, mid_q, Window};
pub use schedule::CandidateSchedule;
use schedule::{batch_round, fallback_status, fractional_commitment, initial_branches, uc_phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyFlags {
    pub enable_batch_rounding: bool,
    pub enable_switch_search: bool,
    pub enable_lodf_screen: bool,
}

impl Default for StrategyFlags {
    fn default() -> Self {
        Self { enable_batch_rounding: true, enable_switch_search: false, enable_lodf_screen: true }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Wall-clock budget in seconds; ignored when `polish_iters` is set.
    pub budget_secs: f64,
    pub seed: u64,
    pub flags: StrategyFlags,
    pub newton: NewtonOptions,
    /// Iteration-capped mode: at most this many polish rounds and no clock
    /// checks, which makes the output a function of the inputs alone.
    pub polish_iters: Option<usize>,
    pub batches: usize,
    /// Candidates per polish round that get a full evaluation.
    pub polish_width: usize,
    pub exec: Exec,
    pub out: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            budget_secs: 60.0,
            seed: 0,
            flags: StrategyFlags::default(),
            newton: NewtonOptions::default(),
            polish_iters: None,
            batches: 4,
            polish_width: 6,
            exec: Exec::default(),
            out: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("budget must be a positive number of seconds, got {0}")]
    BudgetTooSmall(f64),
    #[error("instance failed validation with {0} issue(s)")]
    InvalidInstance(usize),
    #[error("no hard-feasible solution was found")]
    NoFeasibleSolution,
    #[error("writing solution: {0}")]
    Io(#[from] std::io::Error),
}

/// One accepted improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub elapsed_secs: f64,
    pub stage: &'static str,
    pub score: f64,
    pub z_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Solution,
    pub evaluation: Evaluation,
    pub trace: Vec<TracePoint>,
}

pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    solve_with(inst, cfg, &mut |_, _| {})
}

/// Same as [`solve`], calling `observer` with every accepted improvement in
/// order.
pub fn solve_with(
    inst: &Instance,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Solution, &Evaluation),
) -> Result<SolveReport, SolverError> {
    if !(cfg.budget_secs > 0.0) || !cfg.budget_secs.is_finite() {
        return Err(SolverError::BudgetTooSmall(cfg.budget_secs));
    }
    let issues = validate_instance(inst);
    if !issues.is_empty() {
        return Err(SolverError::InvalidInstance(issues.len()));
    }
    let ctx = Ctx::new(inst, cfg);
    let mut best = Incumbent::new(cfg.out.as_deref(), observer, ctx.start);

    let fb = fallback_schedule(inst);
    let fb_sol = ctx.plain_solution(&fb);
    let ev = ctx.evaluate(&fb_sol);
    best.offer(&fb_sol, &fb, &Adders::zero(inst), ev, "fallback")?;

    // Commitment candidates, each dispatched with two loss-feedback passes.
    let mut scheds = Vec::new();
    if ctx.time_left(0.2) {
        scheds.push(("uc", uc_phase(inst)));
    }
    if cfg.flags.enable_batch_rounding && ctx.time_left(0.2) {
        scheds.push(("batch_round", batch_round(inst, &fractional_commitment(inst), cfg.batches)));
    }
    scheds.dedup_by(|a, b| a.1 == b.1);
    for (stage, s) in scheds {
        ctx.pipeline(&s, &mut best, stage)?;
    }

    polish::polish(&ctx, &mut best)?;

    best.finish()
}

/// Dispatch, AC refinement and evaluation of one finalized schedule over
/// the same passes as the solver pipeline. Returns the best pass.
pub fn evaluate_schedule(inst: &Instance, cfg: &SolverConfig, sched: &CandidateSchedule) -> (Solution, Evaluation) {
    let ctx = Ctx::new(inst, cfg);
    let z = |e: &Evaluation| e.z_ms().filter(|_| e.is_feasible()).unwrap_or(f64::NEG_INFINITY);
    let mut adders = Adders::zero(inst);
    let mut best: Option<(Solution, Evaluation)> = None;
    for pass in 0..3 {
        let built = ctx.build(sched, &adders);
        let ev = ctx.evaluate(&built.solution);
        if best.as_ref().is_none_or(|b| improves(z(&ev), z(&b.1))) {
            best = Some((built.solution, ev));
        }
        adders = Adders { loss: built.losses, hold: pass >= 1 };
    }
    best.expect("three passes ran")
}

/// Local search only, starting from the given schedule as incumbent.
pub fn polish_schedule(inst: &Instance, cfg: &SolverConfig, sched: &CandidateSchedule) -> Result<SolveReport, SolverError> {
    let ctx = Ctx::new(inst, cfg);
    let mut observer = |_: &Solution, _: &Evaluation| {};
    let mut best = Incumbent::new(cfg.out.as_deref(), &mut observer, ctx.start);
    ctx.pipeline(sched, &mut best, "incumbent")?;
    polish::polish(&ctx, &mut best)?;
    best.finish()
}

/// Dispatch adjustments carried from one build to the next: per-interval
/// loss adders and whether output is held back for reserves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adders {
    pub loss: Vec<f64>,
    pub hold: bool,
}

impl Adders {
    pub fn zero(inst: &Instance) -> Self {
        Self { loss: vec![0.0; inst.num_intervals()], hold: false }
    }
}

/// Shared state of one solve.
pub(crate) struct Ctx<'a> {
    pub inst: &'a Instance,
    pub cfg: &'a SolverConfig,
    pub start: Instant,
    ac_cache: Mutex<HashMap<Vec<u64>, AcResult>>,
}

/// A dispatched and AC-refined schedule.
pub(crate) struct Built {
    pub solution: Solution,
    /// Network losses per interval as realised by the AC stage.
    pub losses: Vec<f64>,
}

impl<'a> Ctx<'a> {
    fn new(inst: &'a Instance, cfg: &'a SolverConfig) -> Self {
        Self { inst, cfg, start: Instant::now(), ac_cache: Mutex::new(HashMap::new()) }
    }

    fn capped(&self) -> bool {
        self.cfg.polish_iters.is_some()
    }

    /// Whether the elapsed time is below `frac` of the budget. Always true
    /// in iteration-capped mode.
    pub fn time_left(&self, frac: f64) -> bool {
        self.capped() || self.start.elapsed() < Duration::from_secs_f64(self.cfg.budget_secs * frac)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions { tol: DEFAULT_TOL, exec: self.cfg.exec, lodf: self.cfg.flags.enable_lodf_screen }
    }

    pub fn evaluate(&self, sol: &Solution) -> Evaluation {
        evaluate_with(self.inst, sol, &self.eval_options())
    }

    /// Dispatch without the AC stage: flat voltages, reactive output at the
    /// midpoint of its range, no reserves.
    fn plain_solution(&self, s: &CandidateSchedule) -> Solution {
        let inst = self.inst;
        let traj = dispatch_all(inst, s, &vec![0.0; inst.num_intervals()], false);
        let mut sol = Solution::blank(inst);
        write_schedule(inst, s, &mut sol);
        for (j, dev) in sol.devices.iter_mut().enumerate() {
            for t in 0..inst.num_intervals() {
                dev.p[t] = traj.p[t][j];
                dev.q[t] = mid_q(inst, j, t, s.u[j][t]);
            }
        }
        sol
    }

    /// Full pipeline for a finalized schedule: dispatch with the given
    /// adders, then AC refinement and reserves per interval.
    pub fn build(&self, s: &CandidateSchedule, a: &Adders) -> Built {
        let inst = self.inst;
        let nt = inst.num_intervals();
        let traj = dispatch_all(inst, s, &a.loss, a.hold);
        let mut sol = Solution::blank(inst);
        write_schedule(inst, s, &mut sol);
        let results = map_range(self.cfg.exec, nt, |t| {
            let input = AcInput {
                t,
                u: s.u.iter().map(|r| r[t]).collect(),
                p: traj.p[t].clone(),
                adjust: traj.adjust.iter().map(|r| r[t]).collect(),
                branch_u: s.branch_u.iter().map(|r| r[t]).collect(),
                tau: sol.ac_branches.iter().map(|b| b.tau[t]).collect(),
                phi: sol.ac_branches.iter().map(|b| b.phi[t]).collect(),
                shunt_steps: sol.shunts.iter().map(|x| x.step[t]).collect(),
                warm: None,
            };
            let r = self.refine_cached(&input);
            let rsv = assign_reserves(inst, t, &input.u, &r.p);
            (r, rsv)
        });
        let mut losses = Vec::with_capacity(nt);
        for (t, (r, rsv)) in results.into_iter().enumerate() {
            apply_ac(&mut sol, t, &r);
            for (j, dev) in sol.devices.iter_mut().enumerate() {
                dev.p_rsv[t] = rsv[j];
            }
            losses.push(r.losses);
        }
        Built { solution: sol, losses }
    }

    /// Builds and offers `s` with zero loss adders, then again with the
    /// losses the first pass realised, then once more holding back output
    /// for reserves.
    fn pipeline(&self, s: &CandidateSchedule, best: &mut Incumbent, stage: &'static str) -> Result<(), SolverError> {
        let mut adders = Adders::zero(self.inst);
        for pass in 0..3 {
            if !self.time_left(0.7) {
                break;
            }
            let built = self.build(s, &adders);
            let ev = self.evaluate(&built.solution);
            best.offer(&built.solution, s, &adders, ev, stage)?;
            adders = Adders { loss: built.losses, hold: pass >= 1 };
        }
        Ok(())
    }

    fn refine_cached(&self, input: &AcInput) -> AcResult {
        let key = ac_key(input);
        if let Some(r) = self.ac_cache.lock().expect("cache lock").get(&key) {
            return r.clone();
        }
        let r = ac_refine(self.inst, input, &self.cfg.newton);
        self.ac_cache.lock().expect("cache lock").insert(key, r.clone());
        r
    }
}

fn ac_key(input: &AcInput) -> Vec<u64> {
    let mut k = vec![input.t as u64];
    let bits = |xs: &[f64], k: &mut Vec<u64>| k.extend(xs.iter().map(|x| x.to_bits()));
    bits(&input.u, &mut k);
    bits(&input.p, &mut k);
    k.extend(input.adjust.iter().flat_map(|w| [w.lo.to_bits(), w.hi.to_bits()]));
    bits(&input.branch_u, &mut k);
    bits(&input.tau, &mut k);
    bits(&input.phi, &mut k);
    bits(&input.shunt_steps, &mut k);
    k
}

fn write_schedule(inst: &Instance, s: &CandidateSchedule, sol: &mut Solution) {
    for (j, dev) in sol.devices.iter_mut().enumerate() {
        dev.u.clone_from(&s.u[j]);
        dev.u_su.clone_from(&s.u_su[j]);
        dev.u_sd.clone_from(&s.u_sd[j]);
    }
    for (b, br) in sol.ac_branches.iter_mut().enumerate() {
        let (su, sd) = schedule::transitions(inst.ac_branches[b].u0, &binary(&s.branch_u[b]));
        br.u.clone_from(&s.branch_u[b]);
        br.u_su = su;
        br.u_sd = sd;
    }
}

fn binary(x: &[f64]) -> Vec<u8> {
    x.iter().map(|&v| (v >= 0.5) as u8).collect()
}

fn apply_ac(sol: &mut Solution, t: usize, r: &AcResult) {
    for (j, dev) in sol.devices.iter_mut().enumerate() {
        dev.p[t] = r.p[j];
        dev.q[t] = r.q[j];
    }
    for (i, bus) in sol.buses.iter_mut().enumerate() {
        bus.v[t] = r.v[i];
        bus.theta[t] = r.theta[i];
    }
    for (k, sh) in sol.shunts.iter_mut().enumerate() {
        sh.step[t] = r.shunt_steps[k];
    }
    for (k, dc) in sol.dc_branches.iter_mut().enumerate() {
        dc.p_fr[t] = r.dc_p_fr[k];
        dc.q_fr[t] = r.dc_q_fr[k];
        dc.q_to[t] = r.dc_q_to[k];
    }
}

/// Initial statuses wherever they satisfy the schedule rules, otherwise the
/// nearest status sequence that does.
pub fn fallback_schedule(inst: &Instance) -> CandidateSchedule {
    let nt = inst.num_intervals();
    let nd = inst.devices.len();
    let mut s = CandidateSchedule {
        u: vec![vec![0.0; nt]; nd],
        u_su: vec![vec![0.0; nt]; nd],
        u_sd: vec![vec![0.0; nt]; nd],
        branch_u: initial_branches(inst),
    };
    for j in 0..nd {
        let u = fallback_status(inst, j);
        s.set_status(inst, j, &u);
    }
    s
}

/// Re-runs the AC stage for interval `t` of an existing solution, keeping
/// its statuses, branch settings and shunt steps as the starting point.
/// Real output may move within ramp room against the neighbouring
/// intervals, and producers keep the headroom behind their reserves;
/// reserves are reassigned.
pub fn refine_interval(inst: &Instance, sol: &mut Solution, t: usize, newton: &NewtonOptions) -> AcResult {
    let nt = inst.num_intervals();
    let adjust: Vec<Window> = inst
        .devices
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let ds = &sol.devices[j];
            let u = ds.u[t];
            if u < 0.5 {
                return Window { lo: 0.0, hi: 0.0 };
            }
            let x = ds.p[t];
            let prev = if t == 0 { d.p0 } else { sol.devices[j].p[t - 1] };
            let (down, up) = schedule::ramp_limits(d, inst.duration(t), u, ds.u_su[t], ds.u_sd[t]);
            let mut lo = (d.p_min[t]).max(prev + down);
            let mut hi = d.p_max[t].min(d.energy_curves[t].total_width()).min(prev + up);
            if d.is_producer() {
                // Keep the headroom behind the reserve already provided.
                hi = hi.min(d.p_max[t] - ds.p_rsv[t]);
            }
            if t + 1 < nt {
                let next = ds.p[t + 1];
                let (down, up) =
                    schedule::ramp_limits(d, inst.duration(t + 1), ds.u[t + 1], ds.u_su[t + 1], ds.u_sd[t + 1]);
                lo = lo.max(next - up);
                hi = hi.min(next - down);
            }
            Window { lo: lo.min(x), hi: hi.max(x) }
        })
        .collect();
    let input = AcInput {
        t,
        u: sol.devices.iter().map(|d| d.u[t]).collect(),
        p: sol.devices.iter().map(|d| d.p[t]).collect(),
        adjust,
        branch_u: sol.ac_branches.iter().map(|b| b.u[t]).collect(),
        tau: sol.ac_branches.iter().map(|b| b.tau[t]).collect(),
        phi: sol.ac_branches.iter().map(|b| b.phi[t]).collect(),
        shunt_steps: sol.shunts.iter().map(|x| x.step[t]).collect(),
        warm: Some(sol.buses.iter().map(|b| C64::from_polar(b.v[t], b.theta[t])).collect()),
    };
    let r = ac_refine(inst, &input, newton);
    apply_ac(sol, t, &r);
    let rsv = assign_reserves(inst, t, &input.u, &r.p);
    for (j, dev) in sol.devices.iter_mut().enumerate() {
        dev.p_rsv[t] = rsv[j];
    }
    r
}

/// Best solution so far, plus the file and observer it is published to.
pub(crate) struct Incumbent<'o> {
    out: Option<&'o Path>,
    observer: &'o mut dyn FnMut(&Solution, &Evaluation),
    start: Instant,
    pub best: Option<(Solution, Evaluation)>,
    pub schedule: Option<CandidateSchedule>,
    /// Adders the incumbent was dispatched with.
    pub adders: Adders,
    trace: Vec<TracePoint>,
}

/// Minimum score gain treated as an improvement; keeps near-ties from
/// flipping under evaluation round-off.
fn improves(new: f64, old: f64) -> bool {
    new > old + 1e-9 * (1.0 + old.abs())
}

impl<'o> Incumbent<'o> {
    fn new(out: Option<&'o Path>, observer: &'o mut dyn FnMut(&Solution, &Evaluation), start: Instant) -> Self {
        Self { out, observer, start, best: None, schedule: None, adders: Adders::default(), trace: Vec::new() }
    }

    pub fn z_ms(&self) -> f64 {
        self.best.as_ref().and_then(|b| b.1.z_ms()).unwrap_or(f64::NEG_INFINITY)
    }

    /// Accepts `sol` when it is hard-feasible and improves the surplus.
    /// Publishes it when its score is strictly higher than the last
    /// published one (or nothing was published yet). Returns whether it was
    /// accepted.
    pub fn offer(
        &mut self,
        sol: &Solution,
        sched: &CandidateSchedule,
        adders: &Adders,
        ev: Evaluation,
        stage: &'static str,
    ) -> Result<bool, SolverError> {
        let Some(z) = ev.z_ms().filter(|_| ev.is_feasible()) else {
            return Ok(false);
        };
        if self.best.is_some() && !improves(z, self.z_ms()) {
            return Ok(false);
        }
        let publish = self.trace.last().is_none_or(|last| improves(ev.score, last.score));
        if publish {
            if let Some(path) = self.out {
                sol.write_atomic(path)?;
            }
            (self.observer)(sol, &ev);
            self.trace.push(TracePoint { elapsed_secs: self.start.elapsed().as_secs_f64(), stage, score: ev.score, z_ms: z });
        }
        self.best = Some((sol.clone(), ev));
        self.schedule = Some(sched.clone());
        self.adders = adders.clone();
        Ok(true)
    }

    fn finish(self) -> Result<SolveReport, SolverError> {
        let (solution, evaluation) = self.best.ok_or(SolverError::NoFeasibleSolution)?;
        Ok(SolveReport { solution, evaluation, trace: self.trace })
    }
}
