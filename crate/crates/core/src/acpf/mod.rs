//! AC power-flow arithmetic: complex voltages, branch and shunt flows and
//! bus balance residuals, plus a Newton-Raphson power flow.

mod newton;

pub use newton::{
    solve_power_flow, solve_power_flow_with, ComplexVoltageState, NewtonOptions, PowerFlowError,
    PowerFlowProblem, PowerFlowSetup,
};

use num_complex::Complex64;

use crate::model::{AcBranch, Instance, Shunt, Solution};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `v (cos θ + i sin θ)`.
pub fn complex_voltage(v: f64, theta: f64) -> C64 {
    let (s, c) = theta.sin_cos();
    C64::new(v * c, v * s)
}

/// Complex power into a closed unit-ratio branch at the end with voltage `w`:
/// `conj(y_sh) w conj(w) + conj(y) w conj(w - w_other)`.
pub fn s_function(w: C64, w_other: C64, y: C64, y_sh: C64) -> C64 {
    y_sh.conj() * w * w.conj() + y.conj() * w * (w - w_other).conj()
}

/// Complex power entering an AC branch at each end.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchFlowResult {
    pub s_fr: C64,
    pub s_to: C64,
}

impl BranchFlowResult {
    pub fn p_fr(&self) -> f64 {
        self.s_fr.re
    }
    pub fn q_fr(&self) -> f64 {
        self.s_fr.im
    }
    pub fn p_to(&self) -> f64 {
        self.s_to.re
    }
    pub fn q_to(&self) -> f64 {
        self.s_to.im
    }
    /// Series real-power loss `p_fr + p_to`.
    pub fn loss(&self) -> f64 {
        self.s_fr.re + self.s_to.re
    }
}

/// Flows of an AC branch with status `u`, winding ratio `tau` and phase
/// shift `phi`. An open branch carries exactly zero.
pub fn branch_flow(br: &AcBranch, u: f64, tau: f64, phi: f64, w_fr: C64, w_to: C64) -> BranchFlowResult {
    if u == 0.0 {
        return BranchFlowResult::default();
    }
    let nu = C64::from_polar(tau, phi);
    let w_int = w_fr / nu;
    BranchFlowResult {
        s_fr: u * s_function(w_int, w_to, br.y_sr, br.y_fr),
        s_to: u * s_function(w_to, w_int, br.y_sr, br.y_to),
    }
}

/// Complex power drawn by a shunt: `conj(Y) u v^2`.
pub fn shunt_flow(sh: &Shunt, steps: f64, v: f64) -> C64 {
    sh.y_step.conj() * (steps * v * v)
}

/// Every fixed setting needed to evaluate network physics in one interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSettings {
    pub device_p: Vec<f64>,
    pub device_q: Vec<f64>,
    pub shunt_steps: Vec<f64>,
    pub ac_u: Vec<f64>,
    pub ac_tau: Vec<f64>,
    pub ac_phi: Vec<f64>,
    pub dc_p_fr: Vec<f64>,
    pub dc_q_fr: Vec<f64>,
    pub dc_q_to: Vec<f64>,
}

impl IntervalSettings {
    pub fn from_solution(sol: &Solution, t: usize) -> Self {
        Self {
            device_p: sol.devices.iter().map(|d| d.p[t]).collect(),
            device_q: sol.devices.iter().map(|d| d.q[t]).collect(),
            shunt_steps: sol.shunts.iter().map(|s| s.step[t]).collect(),
            ac_u: sol.ac_branches.iter().map(|b| b.u[t]).collect(),
            ac_tau: sol.ac_branches.iter().map(|b| b.tau[t]).collect(),
            ac_phi: sol.ac_branches.iter().map(|b| b.phi[t]).collect(),
            dc_p_fr: sol.dc_branches.iter().map(|b| b.p_fr[t]).collect(),
            dc_q_fr: sol.dc_branches.iter().map(|b| b.q_fr[t]).collect(),
            dc_q_to: sol.dc_branches.iter().map(|b| b.q_to[t]).collect(),
        }
    }
}

/// Per-bus withdrawal that does not depend on voltage: consumers minus
/// producers plus DC branch terminal flows.
pub fn fixed_withdrawal(inst: &Instance, st: &IntervalSettings) -> Vec<C64> {
    let idx = inst.index();
    let mut s = vec![ZERO; inst.num_buses()];
    for (j, d) in inst.devices.iter().enumerate() {
        let sj = C64::new(st.device_p[j], st.device_q[j]);
        if d.is_producer() {
            s[idx.device_bus[j]] -= sj;
        } else {
            s[idx.device_bus[j]] += sj;
        }
    }
    for j in 0..inst.dc_branches.len() {
        s[idx.dc_fr[j]] += C64::new(st.dc_p_fr[j], st.dc_q_fr[j]);
        s[idx.dc_to[j]] += C64::new(-st.dc_p_fr[j], st.dc_q_to[j]);
    }
    s
}

/// All AC branch flows for given settings and bus voltages.
pub fn all_branch_flows(inst: &Instance, st: &IntervalSettings, w: &[C64]) -> Vec<BranchFlowResult> {
    let idx = inst.index();
    inst.ac_branches
        .iter()
        .enumerate()
        .map(|(j, br)| branch_flow(br, st.ac_u[j], st.ac_tau[j], st.ac_phi[j], w[idx.ac_fr[j]], w[idx.ac_to[j]]))
        .collect()
}

/// Bus complex imbalance `s_i` for given settings and voltages, with branch
/// and shunt flows recomputed from the voltages.
pub fn bus_imbalance_at(inst: &Instance, st: &IntervalSettings, w: &[C64]) -> Vec<C64> {
    let idx = inst.index();
    let mut s = fixed_withdrawal(inst, st);
    for (j, sh) in inst.shunts.iter().enumerate() {
        let i = idx.shunt_bus[j];
        s[i] += shunt_flow(sh, st.shunt_steps[j], w[i].norm());
    }
    for (j, f) in all_branch_flows(inst, st, w).iter().enumerate() {
        s[idx.ac_fr[j]] += f.s_fr;
        s[idx.ac_to[j]] += f.s_to;
    }
    s
}

pub fn bus_voltages(sol: &Solution, t: usize) -> Vec<C64> {
    sol.buses.iter().map(|b| complex_voltage(b.v[t], b.theta[t])).collect()
}

/// Bus imbalance of a solution at interval `t`.
pub fn bus_imbalance(inst: &Instance, sol: &Solution, t: usize) -> Vec<C64> {
    let st = IntervalSettings::from_solution(sol, t);
    bus_imbalance_at(inst, &st, &bus_voltages(sol, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn complex_voltage_cases() {
        assert_eq!(complex_voltage(1.0, 0.0), c(1.0, 0.0));
        let w = complex_voltage(1.0, std::f64::consts::FRAC_PI_2);
        assert!(w.re.abs() < 1e-16 && (w.im - 1.0).abs() < 1e-16);
    }

    #[test]
    fn s_function_trivial_cases() {
        let w = c(1.01, -0.2);
        assert_eq!(s_function(w, w, c(3.0, -7.0), ZERO), ZERO);
        assert_eq!(s_function(c(1.0, 0.0), ZERO, c(1.0, 0.0), ZERO), c(1.0, 0.0));
    }

    #[test]
    fn shunt_flow_cases() {
        let sh = Shunt { id: "s".into(), bus: "b".into(), y_step: c(0.1, 0.2), u_min: 0, u_max: 3 };
        assert_eq!(shunt_flow(&sh, 0.0, 1.0), ZERO);
        let s = shunt_flow(&sh, 2.0, 1.0);
        assert!((s - c(0.2, -0.4)).norm() < 1e-15);
    }
}
