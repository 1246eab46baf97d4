//! Post-contingency lossless DC model, connectivity enforcement and
//! line-outage distribution factor screening.
//!
//! Post-contingency flows on AC branch `j` are `-u_j B_j (θ_fr - θ_to - φ_j)`.
//! Device injections, shunt draws and surviving DC branch flows are held at
//! their base-case values and the system mismatch `p_sl` is spread uniformly
//! over the buses. Angles are referenced to bus 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acpf::{shunt_flow, BranchFlowResult};
use crate::linalg::{DenseMatrix, Lu};
use crate::model::{build_topology, BranchRef, Instance, Solution};
use crate::par::{map_range, Exec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContingencyError {
    #[error("outage splits the network into {components} components")]
    Disconnected { components: usize },
    #[error("post-contingency DC system is singular")]
    SingularSystem,
    #[error("outaged branch is a bridge; rank-1 update undefined")]
    BridgeOutage,
    #[error("contingency branch does not resolve")]
    UnresolvedBranch,
}

/// Base-case quantities that stay fixed across contingencies of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DcInputs {
    /// Per-bus producer minus consumer minus shunt real power.
    pub net: Vec<f64>,
    pub p_sl: f64,
    /// `-u_j B_j` per AC branch.
    pub weight: Vec<f64>,
    pub phi: Vec<f64>,
    pub dc_p_fr: Vec<f64>,
    pub closed: Vec<bool>,
}

impl DcInputs {
    pub fn new(inst: &Instance, device_p: &[f64], shunt_steps: &[f64], v: &[f64], ac_u: &[f64], ac_phi: &[f64], dc_p_fr: &[f64]) -> Self {
        let idx = inst.index();
        let mut net = vec![0.0; inst.num_buses()];
        let mut p_sl = 0.0;
        for (j, d) in inst.devices.iter().enumerate() {
            let p = if d.is_producer() { device_p[j] } else { -device_p[j] };
            net[idx.device_bus[j]] += p;
            p_sl += p;
        }
        for (j, sh) in inst.shunts.iter().enumerate() {
            let i = idx.shunt_bus[j];
            let p = shunt_flow(sh, shunt_steps[j], v[i]).re;
            net[i] -= p;
            p_sl -= p;
        }
        Self {
            net,
            p_sl,
            weight: inst.ac_branches.iter().zip(ac_u).map(|(b, &u)| -u * b.b_sr()).collect(),
            phi: ac_phi.to_vec(),
            dc_p_fr: dc_p_fr.to_vec(),
            closed: ac_u.iter().map(|&u| u != 0.0).collect(),
        }
    }

    pub fn from_solution(inst: &Instance, sol: &Solution, t: usize) -> Self {
        let col = |f: &dyn Fn(usize) -> f64, n: usize| (0..n).map(f).collect::<Vec<f64>>();
        Self::new(
            inst,
            &col(&|j| sol.devices[j].p[t], inst.devices.len()),
            &col(&|j| sol.shunts[j].step[t], inst.shunts.len()),
            &col(&|i| sol.buses[i].v[t], inst.num_buses()),
            &col(&|j| sol.ac_branches[j].u[t], inst.ac_branches.len()),
            &col(&|j| sol.ac_branches[j].phi[t], inst.ac_branches.len()),
            &col(&|j| sol.dc_branches[j].p_fr[t], inst.dc_branches.len()),
        )
    }

    fn ac_active(&self, j: usize, outage: Option<BranchRef>) -> bool {
        self.closed[j] && outage != Some(BranchRef::Ac(j))
    }

    /// Per-bus right-hand side `inj - α p_sl + phase-shift terms`.
    fn rhs(&self, inst: &Instance, outage: Option<BranchRef>) -> Vec<f64> {
        let idx = inst.index();
        let alpha = inst.alpha();
        let mut r: Vec<f64> = self.net.iter().map(|x| x - alpha * self.p_sl).collect();
        for j in 0..self.dc_p_fr.len() {
            if outage == Some(BranchRef::Dc(j)) {
                continue;
            }
            r[idx.dc_fr[j]] -= self.dc_p_fr[j];
            r[idx.dc_to[j]] += self.dc_p_fr[j];
        }
        for j in 0..self.weight.len() {
            if self.ac_active(j, outage) {
                let bp = self.weight[j] * self.phi[j];
                r[idx.ac_fr[j]] += bp;
                r[idx.ac_to[j]] -= bp;
            }
        }
        r
    }

    /// Weighted Laplacian with the reference bus row and column removed.
    fn reduced_laplacian(&self, inst: &Instance, outage: Option<BranchRef>) -> DenseMatrix {
        let idx = inst.index();
        let mut l = DenseMatrix::zeros(inst.num_buses() - 1);
        for j in 0..self.weight.len() {
            if !self.ac_active(j, outage) {
                continue;
            }
            let (f, t, b) = (idx.ac_fr[j], idx.ac_to[j], self.weight[j]);
            if f > 0 {
                l.add(f - 1, f - 1, b);
            }
            if t > 0 {
                l.add(t - 1, t - 1, b);
            }
            if f > 0 && t > 0 {
                l.add(f - 1, t - 1, -b);
                l.add(t - 1, f - 1, -b);
            }
        }
        l
    }

    fn flows(&self, inst: &Instance, theta: &[f64], outage: Option<BranchRef>) -> Vec<f64> {
        let idx = inst.index();
        (0..self.weight.len())
            .map(|j| {
                if self.ac_active(j, outage) {
                    self.weight[j] * (theta[idx.ac_fr[j]] - theta[idx.ac_to[j]] - self.phi[j])
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Per-bus DC balance residual of a candidate angle vector.
    pub fn balance_residual(&self, inst: &Instance, outage: Option<BranchRef>, theta: &[f64]) -> Vec<f64> {
        let idx = inst.index();
        let alpha = inst.alpha();
        let flows = self.flows(inst, theta, outage);
        let mut res: Vec<f64> = self.net.iter().map(|x| -x + alpha * self.p_sl).collect();
        for (j, p) in flows.iter().enumerate() {
            res[idx.ac_fr[j]] += p;
            res[idx.ac_to[j]] -= p;
        }
        for j in 0..self.dc_p_fr.len() {
            if outage != Some(BranchRef::Dc(j)) {
                res[idx.dc_fr[j]] += self.dc_p_fr[j];
                res[idx.dc_to[j]] -= self.dc_p_fr[j];
            }
        }
        res
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcContingencyResult {
    pub theta: Vec<f64>,
    /// Post-contingency real flow per AC branch; zero for open or outaged branches.
    pub flows: Vec<f64>,
    pub p_sl: f64,
}

/// `Σ producers − Σ consumers − Σ shunt real draw` at interval `t`.
pub fn system_slack(inst: &Instance, sol: &Solution, t: usize) -> f64 {
    let idx = inst.index();
    let mut s = 0.0;
    for (j, d) in inst.devices.iter().enumerate() {
        s += if d.is_producer() { sol.devices[j].p[t] } else { -sol.devices[j].p[t] };
    }
    for (j, sh) in inst.shunts.iter().enumerate() {
        s -= shunt_flow(sh, sol.shunts[j].step[t], sol.buses[idx.shunt_bus[j]].v[t]).re;
    }
    s
}

fn connected_or_err(inst: &Instance, inp: &DcInputs, outage: Option<BranchRef>) -> Result<(), ContingencyError> {
    let labels = build_topology(inst, &inp.closed, outage);
    if labels.is_connected() {
        Ok(())
    } else {
        Err(ContingencyError::Disconnected { components: labels.count })
    }
}

/// Full DC solve with the given branch removed (or none for the base topology).
pub fn solve_dc(inst: &Instance, inp: &DcInputs, outage: Option<BranchRef>) -> Result<DcContingencyResult, ContingencyError> {
    if outage == Some(BranchRef::Unresolved) {
        return Err(ContingencyError::UnresolvedBranch);
    }
    connected_or_err(inst, inp, outage)?;
    let n = inst.num_buses();
    let mut theta = vec![0.0; n];
    if n > 1 {
        let lu = Lu::factor(&inp.reduced_laplacian(inst, outage)).map_err(|_| ContingencyError::SingularSystem)?;
        let rhs = inp.rhs(inst, outage);
        let x = lu.solve(&rhs[1..]);
        theta[1..].copy_from_slice(&x);
    }
    let flows = inp.flows(inst, &theta, outage);
    Ok(DcContingencyResult { theta, flows, p_sl: inp.p_sl })
}

/// Post-contingency DC state of contingency `k` at interval `t`.
pub fn solve_dc_contingency(inst: &Instance, sol: &Solution, t: usize, k: usize) -> Result<DcContingencyResult, ContingencyError> {
    let inp = DcInputs::from_solution(inst, sol, t);
    solve_dc(inst, &inp, Some(inst.index().ctg_branch[k]))
}

/// Overload penalty of one contingency.
#[derive(Debug, Clone, PartialEq)]
pub struct CtgPenalty {
    pub z_ctg: f64,
    pub per_branch: Vec<f64>,
    /// Largest apparent-power excess over the post-contingency rating.
    pub max_excess: f64,
}

/// `D_t C^s max(0, sqrt(p_k^2 + max(|q_fr|, |q_to|)^2) - S^max,ctg)` summed
/// over surviving AC branches, with base-case reactive flows.
pub fn overload_penalty(inst: &Instance, duration: f64, outage: Option<BranchRef>, flows: &[f64], base: &[BranchFlowResult]) -> CtgPenalty {
    let cs = inst.penalties.c_s;
    let mut max_excess = 0.0_f64;
    let per_branch: Vec<f64> = inst
        .ac_branches
        .iter()
        .enumerate()
        .map(|(j, br)| {
            if outage == Some(BranchRef::Ac(j)) {
                return 0.0;
            }
            let q = base[j].q_fr().abs().max(base[j].q_to().abs());
            let excess = ((flows[j] * flows[j] + q * q).sqrt() - br.s_max_ctg).max(0.0);
            max_excess = max_excess.max(excess);
            duration * cs * excess
        })
        .collect();
    CtgPenalty { z_ctg: per_branch.iter().sum(), per_branch, max_excess }
}

pub fn contingency_overload_penalty(inst: &Instance, dc: &DcContingencyResult, sol: &Solution, t: usize, k: usize) -> CtgPenalty {
    let st = crate::acpf::IntervalSettings::from_solution(sol, t);
    let base = crate::acpf::all_branch_flows(inst, &st, &crate::acpf::bus_voltages(sol, t));
    overload_penalty(inst, inst.duration(t), Some(inst.index().ctg_branch[k]), &dc.flows, &base)
}

/// Worst-case and average contingency penalties.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CtgAggregate {
    pub worst_t: Vec<f64>,
    pub avg_t: Vec<f64>,
    pub worst: f64,
    pub avg: f64,
}

/// Aggregates `z[t][k]`; with no contingencies both are zero.
pub fn ctg_aggregate(z: &[Vec<f64>]) -> CtgAggregate {
    let worst_t: Vec<f64> = z.iter().map(|row| row.iter().copied().fold(0.0_f64, f64::max)).collect();
    let avg_t: Vec<f64> = z
        .iter()
        .map(|row| if row.is_empty() { 0.0 } else { row.iter().sum::<f64>() / row.len() as f64 })
        .collect();
    CtgAggregate { worst: worst_t.iter().sum(), avg: avg_t.iter().sum(), worst_t, avg_t }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub interval: usize,
    pub contingency: Option<usize>,
    pub components: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub violations: Vec<Island>,
}

impl ConnectivityReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Base-case and per-contingency connectivity of every interval.
pub fn check_connectivity(inst: &Instance, sol: &Solution) -> ConnectivityReport {
    check_connectivity_with(inst, sol, Exec::Sequential)
}

pub fn check_connectivity_with(inst: &Instance, sol: &Solution, exec: Exec) -> ConnectivityReport {
    let per_t = map_range(exec, inst.num_intervals(), |t| {
        let closed: Vec<bool> = sol.ac_branches.iter().map(|b| b.u[t] >= 0.5).collect();
        let mut out = Vec::new();
        let base = build_topology(inst, &closed, None);
        if !base.is_connected() {
            out.push(Island { interval: t, contingency: None, components: base.count });
            return out;
        }
        for (k, &br) in inst.index().ctg_branch.iter().enumerate() {
            let lab = build_topology(inst, &closed, Some(br));
            if !lab.is_connected() {
                out.push(Island { interval: t, contingency: Some(k), components: lab.count });
            }
        }
        out
    });
    ConnectivityReport { violations: per_t.into_iter().flatten().collect() }
}

/// Base-topology DC state with its factorization, reused by [`lodf_screen`].
#[derive(Debug, Clone)]
pub struct DcBaseState {
    lu: Option<Lu>,
    pub inputs: DcInputs,
    pub theta: Vec<f64>,
    pub flows: Vec<f64>,
}

pub fn base_dc_state(inst: &Instance, inputs: DcInputs) -> Result<DcBaseState, ContingencyError> {
    connected_or_err(inst, &inputs, None)?;
    let n = inst.num_buses();
    let mut theta = vec![0.0; n];
    let lu = if n > 1 {
        let lu = Lu::factor(&inputs.reduced_laplacian(inst, None)).map_err(|_| ContingencyError::SingularSystem)?;
        let rhs = inputs.rhs(inst, None);
        theta[1..].copy_from_slice(&lu.solve(&rhs[1..]));
        Some(lu)
    } else {
        None
    };
    let flows = inputs.flows(inst, &theta, None);
    Ok(DcBaseState { lu, inputs, theta, flows })
}

impl DcBaseState {
    /// Angle response (reference bus 0 fixed) to a per-bus injection change.
    fn angle_response(&self, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; delta.len()];
        if let Some(lu) = &self.lu {
            out[1..].copy_from_slice(&lu.solve(&delta[1..]));
        }
        out
    }
}

/// Approximate post-contingency flows by a rank-1 update of the base
/// factorization (line outage distribution factors).
pub fn lodf_screen(inst: &Instance, base: &DcBaseState, k: usize) -> Result<Vec<f64>, ContingencyError> {
    let idx = inst.index();
    let outage = idx.ctg_branch[k];
    if outage == BranchRef::Unresolved {
        return Err(ContingencyError::UnresolvedBranch);
    }
    if !build_topology(inst, &base.inputs.closed, Some(outage)).is_connected() {
        return Err(ContingencyError::BridgeOutage);
    }
    let n = inst.num_buses();
    let mut delta = vec![0.0; n];
    let scale = match outage {
        BranchRef::Ac(m) => {
            if !base.inputs.closed[m] || base.inputs.weight[m] == 0.0 {
                return Ok(base.flows.clone());
            }
            delta[idx.ac_fr[m]] = 1.0;
            delta[idx.ac_to[m]] = -1.0;
            let x = base.angle_response(&delta);
            let ptdf_mm = base.inputs.weight[m] * (x[idx.ac_fr[m]] - x[idx.ac_to[m]]);
            let denom = 1.0 - ptdf_mm;
            if denom.abs() < 1e-10 {
                return Err(ContingencyError::BridgeOutage);
            }
            base.flows[m] / denom
        }
        BranchRef::Dc(m) => {
            let p = base.inputs.dc_p_fr[m];
            delta[idx.dc_fr[m]] = p;
            delta[idx.dc_to[m]] = -p;
            1.0
        }
        BranchRef::Unresolved => unreachable!(),
    };
    let dtheta = base.angle_response(&delta);
    Ok((0..inst.ac_branches.len())
        .map(|j| {
            if outage == BranchRef::Ac(j) || !base.inputs.closed[j] {
                0.0
            } else {
                base.flows[j] + scale * base.inputs.weight[j] * (dtheta[idx.ac_fr[j]] - dtheta[idx.ac_to[j]])
            }
        })
        .collect())
}
