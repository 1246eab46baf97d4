use thiserror::Error;

use super::{complex_voltage, fixed_withdrawal, IntervalSettings, C64};
use crate::linalg::{DenseMatrix, Lu};
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on the largest enforced mismatch (pu).
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried when the mismatch norm grows.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 30, max_halvings: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e})")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("invalid bus role setup: {0}")]
    Setup(String),
}

/// Which buses hold voltage fixed and where to start.
///
/// The slack bus fixes magnitude and angle (angle 0 unless a warm start is
/// given); PV buses fix magnitude only. Magnitudes are taken from `initial`
/// when present, 1.0 otherwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerFlowSetup {
    pub slack_bus: usize,
    pub pv_buses: Vec<usize>,
    pub initial: Option<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVoltageState {
    pub w: Vec<C64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl ComplexVoltageState {
    fn from_polar(v: Vec<f64>, theta: Vec<f64>, iterations: usize, mismatch: f64) -> Self {
        let w = v.iter().zip(&theta).map(|(&m, &a)| complex_voltage(m, a)).collect();
        Self { w, v, theta, iterations, mismatch }
    }
}

/// Bus admittance model of one interval with the unknown layout used by the
/// Newton iteration: angles of all non-slack buses, then magnitudes of PQ buses.
#[derive(Debug, Clone)]
pub struct PowerFlowProblem {
    n: usize,
    ybus: Vec<C64>,
    fixed: Vec<C64>,
    angle_buses: Vec<usize>,
    mag_buses: Vec<usize>,
    slack: usize,
}

impl PowerFlowProblem {
    pub fn new(inst: &Instance, st: &IntervalSettings, setup: &PowerFlowSetup) -> Result<Self, PowerFlowError> {
        let n = inst.num_buses();
        if setup.slack_bus >= n {
            return Err(PowerFlowError::Setup(format!("slack bus {} out of range", setup.slack_bus)));
        }
        let idx = inst.index();
        let mut ybus = vec![C64::new(0.0, 0.0); n * n];
        for (j, br) in inst.ac_branches.iter().enumerate() {
            let u = st.ac_u[j];
            if u == 0.0 {
                continue;
            }
            let (f, t) = (idx.ac_fr[j], idx.ac_to[j]);
            let nu = C64::from_polar(st.ac_tau[j], st.ac_phi[j]);
            let tau2 = st.ac_tau[j] * st.ac_tau[j];
            ybus[f * n + f] += u * (br.y_sr + br.y_fr) / tau2;
            ybus[f * n + t] -= u * br.y_sr / nu.conj();
            ybus[t * n + f] -= u * br.y_sr / nu;
            ybus[t * n + t] += u * (br.y_sr + br.y_to);
        }
        for (j, sh) in inst.shunts.iter().enumerate() {
            let i = idx.shunt_bus[j];
            ybus[i * n + i] += sh.y_step * st.shunt_steps[j];
        }
        let mut is_pv = vec![false; n];
        for &i in &setup.pv_buses {
            if i >= n {
                return Err(PowerFlowError::Setup(format!("pv bus {i} out of range")));
            }
            is_pv[i] = true;
        }
        let angle_buses: Vec<usize> = (0..n).filter(|&i| i != setup.slack_bus).collect();
        let mag_buses: Vec<usize> = (0..n).filter(|&i| i != setup.slack_bus && !is_pv[i]).collect();
        Ok(Self { n, ybus, fixed: fixed_withdrawal(inst, st), angle_buses, mag_buses, slack: setup.slack_bus })
    }

    pub fn num_unknowns(&self) -> usize {
        self.angle_buses.len() + self.mag_buses.len()
    }

    fn currents(&self, w: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row = &self.ybus[i * n..(i + 1) * n];
                row.iter().zip(w).map(|(y, x)| y * x).sum()
            })
            .collect()
    }

    /// Complex imbalance at every bus.
    pub fn imbalance(&self, w: &[C64]) -> Vec<C64> {
        let cur = self.currents(w);
        (0..self.n).map(|i| self.fixed[i] + w[i] * cur[i].conj()).collect()
    }

    /// Enforced mismatch vector: real parts at angle buses, imaginary parts at
    /// PQ buses.
    pub fn mismatch(&self, v: &[f64], theta: &[f64]) -> Vec<f64> {
        let w: Vec<C64> = v.iter().zip(theta).map(|(&m, &a)| complex_voltage(m, a)).collect();
        let s = self.imbalance(&w);
        self.angle_buses
            .iter()
            .map(|&i| s[i].re)
            .chain(self.mag_buses.iter().map(|&i| s[i].im))
            .collect()
    }

    /// Analytic Jacobian of [`Self::mismatch`] with respect to the unknowns.
    pub fn jacobian(&self, v: &[f64], theta: &[f64]) -> DenseMatrix {
        let n = self.n;
        let w: Vec<C64> = v.iter().zip(theta).map(|(&m, &a)| complex_voltage(m, a)).collect();
        let cur = self.currents(&w);
        let j = C64::new(0.0, 1.0);
        // dS_i/dθ_k and dS_i/dv_k
        let ds_da = |i: usize, k: usize| -> C64 {
            let y = self.ybus[i * n + k];
            if i == k {
                j * w[i] * (cur[i] - y * w[i]).conj()
            } else {
                -j * w[i] * (y * w[k]).conj()
            }
        };
        let ds_dm = |i: usize, k: usize| -> C64 {
            let y = self.ybus[i * n + k];
            let dir = w[k] / v[k];
            if i == k {
                w[i] * (y * dir).conj() + cur[i].conj() * dir
            } else {
                w[i] * (y * dir).conj()
            }
        };
        let na = self.angle_buses.len();
        let m = self.num_unknowns();
        let mut jac = DenseMatrix::zeros(m);
        let rows = self
            .angle_buses
            .iter()
            .map(|&i| (i, true))
            .chain(self.mag_buses.iter().map(|&i| (i, false)));
        for (r, (i, real)) in rows.enumerate() {
            let part = |z: C64| if real { z.re } else { z.im };
            for (c, &k) in self.angle_buses.iter().enumerate() {
                if i == k || self.ybus[i * n + k] != C64::new(0.0, 0.0) {
                    jac.set(r, c, part(ds_da(i, k)));
                }
            }
            for (c, &k) in self.mag_buses.iter().enumerate() {
                if i == k || self.ybus[i * n + k] != C64::new(0.0, 0.0) {
                    jac.set(r, na + c, part(ds_dm(i, k)));
                }
            }
        }
        jac
    }

    fn apply(&self, v: &mut [f64], theta: &mut [f64], dx: &[f64], step: f64) {
        let na = self.angle_buses.len();
        for (c, &i) in self.angle_buses.iter().enumerate() {
            theta[i] += step * dx[c];
        }
        for (c, &i) in self.mag_buses.iter().enumerate() {
            v[i] += step * dx[na + c];
        }
    }

    pub fn slack_bus(&self) -> usize {
        self.slack
    }

    /// Buses whose angle is an unknown, in unknown order.
    pub fn angle_buses(&self) -> &[usize] {
        &self.angle_buses
    }

    /// Buses whose magnitude is an unknown, following the angle block.
    pub fn mag_buses(&self) -> &[usize] {
        &self.mag_buses
    }
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Newton-Raphson power flow from a flat start with every non-slack bus PQ.
pub fn solve_power_flow(
    inst: &Instance,
    st: &IntervalSettings,
    slack_bus: usize,
    opts: &NewtonOptions,
) -> Result<ComplexVoltageState, PowerFlowError> {
    let setup = PowerFlowSetup { slack_bus, pv_buses: Vec::new(), initial: None };
    solve_power_flow_with(inst, st, &setup, opts)
}

/// Newton-Raphson power flow with explicit bus roles and optional warm start.
///
/// The step is halved (up to `max_halvings` times) whenever the full step
/// increases the mismatch norm; otherwise it is taken undamped.
pub fn solve_power_flow_with(
    inst: &Instance,
    st: &IntervalSettings,
    setup: &PowerFlowSetup,
    opts: &NewtonOptions,
) -> Result<ComplexVoltageState, PowerFlowError> {
    let prob = PowerFlowProblem::new(inst, st, setup)?;
    let n = inst.num_buses();
    let (mut v, mut theta) = match &setup.initial {
        Some(w0) if w0.len() == n => (w0.iter().map(|w| w.norm()).collect::<Vec<_>>(), w0.iter().map(|w| w.arg()).collect::<Vec<_>>()),
        _ => (vec![1.0; n], vec![0.0; n]),
    };
    // Reference angle pinned at the slack bus.
    let shift = theta[setup.slack_bus];
    theta.iter_mut().for_each(|a| *a -= shift);

    let mut f = prob.mismatch(&v, &theta);
    let mut err = max_abs(&f);
    for iter in 0..=opts.max_iter {
        if !err.is_finite() {
            return Err(PowerFlowError::NonConvergence { iterations: iter, mismatch: err });
        }
        if err < opts.tol {
            return Ok(ComplexVoltageState::from_polar(v, theta, iter, err));
        }
        if iter == opts.max_iter {
            break;
        }
        let jac = prob.jacobian(&v, &theta);
        let lu = Lu::factor(&jac).map_err(|_| PowerFlowError::SingularJacobian { iteration: iter })?;
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let dx = lu.solve(&neg);
        let base = norm2(&f);
        let mut step = 1.0;
        let mut attempt = 0;
        loop {
            let (mut v2, mut th2) = (v.clone(), theta.clone());
            prob.apply(&mut v2, &mut th2, &dx, step);
            let f2 = prob.mismatch(&v2, &th2);
            let n2 = norm2(&f2);
            let usable = v2.iter().all(|x| *x > 0.0) && n2.is_finite();
            if (usable && n2 <= base) || attempt >= opts.max_halvings {
                if !usable {
                    return Err(PowerFlowError::NonConvergence { iterations: iter + 1, mismatch: f64::INFINITY });
                }
                v = v2;
                theta = th2;
                f = f2;
                break;
            }
            step *= 0.5;
            attempt += 1;
        }
        err = max_abs(&f);
    }
    Err(PowerFlowError::NonConvergence { iterations: opts.max_iter, mismatch: err })
}
