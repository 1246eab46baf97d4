//! Solver tournaments. Every (instance, solver) pair runs as its own process
//! group under a wall-clock limit; whatever solution file exists when the
//! process exits or is killed is evaluated. Runs that leave no readable
//! file score zero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use scuc_core::equilibrium::bound_report;
use scuc_core::par::map_range;
use scuc_core::{evaluate_json, EvalOptions, Evaluation, Exec, Instance};
use serde::{Deserialize, Serialize};

use crate::generate::Division;
use crate::io::{io_err, read_json, scratch_root, HarnessError, Result};

/// One tournament entrant. `command` is an argument vector whose elements
/// may contain the placeholders `{instance}`, `{out}`, `{budget}` and
/// `{seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    pub name: String,
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub solvers: Vec<SolverEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.solvers.is_empty() {
            return Err(HarnessError::Config(format!("{}: no solvers listed", path.display())));
        }
        for s in &m.solvers {
            if s.command.is_empty() {
                return Err(HarnessError::Config(format!("solver {:?} has an empty command", s.name)));
            }
        }
        Ok(m)
    }
}

/// Wall-clock limit in seconds per division.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub division_1: f64,
    pub division_2: f64,
    pub division_3: f64,
}

impl Limits {
    pub fn uniform(secs: f64) -> Self {
        Self { division_1: secs, division_2: secs, division_3: secs }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let l: Limits = read_json(path)?;
        for x in [l.division_1, l.division_2, l.division_3] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(HarnessError::Config(format!("{}: limits must be positive, got {x}", path.display())));
            }
        }
        Ok(l)
    }

    pub fn get(&self, d: Division) -> f64 {
        match d {
            Division::D1 => self.division_1,
            Division::D2 => self.division_2,
            Division::D3 => self.division_3,
        }
    }
}

pub fn division_of(inst: &Instance) -> Division {
    Division::from_horizon((0..inst.num_intervals()).map(|t| inst.duration(t)).sum())
}

/// A named instance file.
#[derive(Debug, Clone)]
pub struct Entry {
    pub name: String,
    pub path: PathBuf,
    pub instance: Instance,
}

/// Every `*.json` file of `dir`, in file-name order.
pub fn load_instances(dir: &Path) -> Result<Vec<Entry>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let instance = Instance::load(&path)?;
            let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(Entry { name, path, instance })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Exited on its own before the limit.
    Exited,
    /// Killed at the limit.
    Killed,
    /// Could not be started.
    SpawnFailed,
}

/// Outcome of one (instance, solver) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub solver: String,
    pub division: u8,
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    pub elapsed_secs: f64,
    pub limit_secs: f64,
    pub score: f64,
    pub feasible: bool,
    pub z_ms: Option<f64>,
    pub equilibrium_surplus: f64,
    pub equilibrium_gen_cost: f64,
    /// Absent when no solution file was left behind.
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct TournamentConfig {
    pub seed: u64,
    /// Runs proceed concurrently under `Exec::Parallel`.
    pub exec: Exec,
    /// Parent of the per-tournament scratch directory.
    pub scratch: PathBuf,
    /// Where the final solution file of every run is copied, if set.
    pub keep_solutions: Option<PathBuf>,
    pub eval: EvalOptions,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        Self { seed: 0, exec: Exec::default(), scratch: scratch_root(), keep_solutions: None, eval: EvalOptions::default() }
    }
}

/// Substitutes the run placeholders into every argument.
pub fn expand(template: &[String], instance: &Path, out: &Path, budget: f64, seed: u64) -> Vec<String> {
    template
        .iter()
        .map(|a| {
            a.replace("{instance}", &instance.to_string_lossy())
                .replace("{out}", &out.to_string_lossy())
                .replace("{budget}", &budget.to_string())
                .replace("{seed}", &seed.to_string())
        })
        .collect()
}

/// Runs `argv` in a new process group and kills the whole group once
/// `limit` seconds have passed. Returns the status, exit code and elapsed
/// seconds.
pub fn run_limited(argv: &[String], limit: f64, stderr: Option<&Path>) -> (RunStatus, Option<i32>, f64) {
    let start = Instant::now();
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..]).stdin(Stdio::null()).stdout(Stdio::null());
    match stderr.and_then(|p| std::fs::File::create(p).ok()) {
        Some(f) => cmd.stderr(f),
        None => cmd.stderr(Stdio::null()),
    };
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(_) => return (RunStatus::SpawnFailed, None, start.elapsed().as_secs_f64()),
    };
    let deadline = Duration::from_secs_f64(limit);
    loop {
        if let Ok(Some(st)) = child.try_wait() {
            return (RunStatus::Exited, st.code(), start.elapsed().as_secs_f64());
        }
        let elapsed = start.elapsed();
        if elapsed >= deadline {
            kill_group(&mut child);
            let _ = child.wait();
            return (RunStatus::Killed, None, start.elapsed().as_secs_f64());
        }
        std::thread::sleep((deadline - elapsed).min(Duration::from_millis(10)));
    }
}

#[cfg(unix)]
fn kill_group(child: &mut std::process::Child) {
    // The child leads its own group, so its pid is the group id.
    // SAFETY: killpg has no memory-safety preconditions.
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(child: &mut std::process::Child) {
    let _ = child.kill();
}

/// Runs every solver on every instance and evaluates the results. Records
/// come back in (instance, solver) order whatever the execution order.
pub fn run_tournament(
    instances: &[Entry],
    solvers: &[SolverEntry],
    limits: &Limits,
    cfg: &TournamentConfig,
) -> Result<Vec<RunRecord>> {
    std::fs::create_dir_all(&cfg.scratch).map_err(io_err(&cfg.scratch))?;
    let scratch = tempfile::Builder::new().prefix("go3-").tempdir_in(&cfg.scratch).map_err(io_err(&cfg.scratch))?;
    if let Some(dir) = &cfg.keep_solutions {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let bounds = map_range(cfg.exec, instances.len(), |i| bound_report(&instances[i].instance, None));
    let ns = solvers.len();
    let records = map_range(cfg.exec, instances.len() * ns, |k| {
        let (e, s) = (&instances[k / ns], &solvers[k % ns]);
        let division = division_of(&e.instance);
        let limit = limits.get(division);
        let dir = scratch.path().join(format!("run-{k}"));
        let out = dir.join("solution.json");
        let (status, exit_code, elapsed_secs) = match std::fs::create_dir_all(&dir) {
            Ok(()) => {
                let argv = expand(&s.command, &e.path, &out, limit, cfg.seed);
                run_limited(&argv, limit, Some(&dir.join("stderr.log")))
            }
            Err(_) => (RunStatus::SpawnFailed, None, 0.0),
        };
        let evaluation = std::fs::read(&out).ok().map(|bytes| evaluate_json(&e.instance, &bytes, &cfg.eval));
        if let (Some(keep), true) = (&cfg.keep_solutions, out.exists()) {
            let _ = std::fs::copy(&out, keep.join(format!("{}__{}.json", e.name, s.name)));
        }
        let b = &bounds[k / ns];
        RunRecord {
            instance: e.name.clone(),
            solver: s.name.clone(),
            division: division.number(),
            status,
            exit_code,
            elapsed_secs,
            limit_secs: limit,
            score: evaluation.as_ref().map_or(0.0, |ev| ev.score),
            feasible: evaluation.as_ref().is_some_and(Evaluation::is_feasible),
            z_ms: evaluation.as_ref().filter(|ev| ev.is_feasible()).and_then(Evaluation::z_ms),
            equilibrium_surplus: b.equilibrium_surplus,
            equilibrium_gen_cost: b.equilibrium_gen_cost,
            evaluation,
        }
    });
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionCell {
    pub division: u8,
    /// Sum of scores.
    pub obj: f64,
    /// Scenarios on which this row attains the best feasible score.
    pub nb: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub solver: String,
    pub cells: Vec<DivisionCell>,
    pub total_obj: f64,
    pub total_nb: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    /// Scenarios per division that have at least one feasible run, in
    /// division order.
    pub feasible_scenarios: Vec<(u8, usize)>,
    /// The ensemble first, then solvers in order of first appearance.
    pub rows: Vec<RankingRow>,
}

pub const ENSEMBLE: &str = "ensemble";

impl RankingTable {
    /// Aggregates run records. Every solver tied for the best feasible
    /// score on a scenario is credited in NB.
    pub fn from_runs(records: &[RunRecord]) -> Self {
        let mut solvers: Vec<&str> = Vec::new();
        for r in records {
            if !solvers.contains(&r.solver.as_str()) {
                solvers.push(&r.solver);
            }
        }
        let mut by_inst: BTreeMap<(u8, &str), Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            by_inst.entry((r.division, &r.instance)).or_default().push(r);
        }
        let divisions: Vec<u8> = by_inst.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let ns = solvers.len();
        // cells[row][division] with row 0 the ensemble.
        let mut cells: Vec<Vec<DivisionCell>> =
            vec![divisions.iter().map(|&division| DivisionCell { division, obj: 0.0, nb: 0 }).collect(); ns + 1];
        let mut feasible_scenarios: Vec<(u8, usize)> = divisions.iter().map(|&d| (d, 0)).collect();
        for ((div, _), runs) in &by_inst {
            let di = divisions.iter().position(|d| d == div).expect("division listed");
            let best = runs.iter().map(|r| r.score).fold(0.0, f64::max);
            cells[0][di].obj += best;
            let best_feasible = runs.iter().filter(|r| r.feasible).map(|r| r.score).fold(f64::NEG_INFINITY, f64::max);
            if best_feasible.is_finite() {
                cells[0][di].nb += 1;
                feasible_scenarios[di].1 += 1;
            }
            for r in runs {
                let si = 1 + solvers.iter().position(|s| *s == r.solver).expect("solver listed");
                cells[si][di].obj += r.score;
                if r.feasible && r.score == best_feasible {
                    cells[si][di].nb += 1;
                }
            }
        }
        let rows = std::iter::once(ENSEMBLE)
            .chain(solvers.iter().copied())
            .zip(cells)
            .map(|(name, cells)| RankingRow {
                solver: name.to_string(),
                total_obj: cells.iter().map(|c| c.obj).sum(),
                total_nb: cells.iter().map(|c| c.nb).sum(),
                cells,
            })
            .collect();
        Self { feasible_scenarios, rows }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["solver".to_string()];
        for &(d, _) in &self.feasible_scenarios {
            header.push(format!("obj_d{d}"));
            header.push(format!("nb_d{d}"));
        }
        header.extend(["obj_total".to_string(), "nb_total".to_string()]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.solver.clone()];
            for c in &row.cells {
                rec.push(c.obj.to_string());
                rec.push(c.nb.to_string());
            }
            rec.push(row.total_obj.to_string());
            rec.push(row.total_nb.to_string());
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
    }
}
