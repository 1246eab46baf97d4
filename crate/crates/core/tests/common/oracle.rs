//! Single-pass recomputation of the market-surplus objective straight from
//! the instance and solution documents. Shares no code with the library
//! beyond the data types: branch flows use the pi-model current form, bus
//! balance uses a bus admittance matrix, and post-contingency angles come
//! from a full Gaussian elimination with the reference row replaced.

#![allow(dead_code)]

use std::collections::HashMap;

use scuc_core::model::{Instance, Solution};
use scuc_core::C64;

fn polar(v: f64, th: f64) -> C64 {
    C64::new(v * th.cos(), v * th.sin())
}

/// Integral of the marginal-price steps from 0 to `p`, extending the last
/// price to the right and the first price to the left.
fn curve_value(blocks: &[(f64, f64)], p: f64) -> f64 {
    if blocks.is_empty() {
        return 0.0;
    }
    if p <= 0.0 {
        return p * blocks[0].1;
    }
    let mut left = 0.0;
    let mut acc = 0.0;
    for &(w, price) in blocks {
        let right = left + w;
        let seg = (p.min(right) - left).max(0.0);
        acc += seg * price;
        left = right;
    }
    if p > left {
        acc += (p - left) * blocks[blocks.len() - 1].1;
    }
    acc
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Horizon totals of each term, every one stored nonnegative.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleTerms {
    pub consumer_value: f64,
    pub producer_cost: f64,
    pub reserve_cost: f64,
    pub startup: f64,
    pub shutdown: f64,
    pub on: f64,
    pub switching: f64,
    pub overload: f64,
    pub zone_shortfall: f64,
    pub p_imbalance: f64,
    pub q_imbalance: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleResult {
    pub z_ms: f64,
    pub z_base: f64,
    pub worst: f64,
    pub avg: f64,
    pub terms: OracleTerms,
}

pub fn oracle_objective(inst: &Instance, sol: &Solution) -> OracleResult {
    let d = inst.data();
    let n = d.buses.len();
    let nt = d.intervals.len();
    let bus: HashMap<&str, usize> = d.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    let dev_pos: HashMap<&str, usize> = d.devices.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    let pen = &d.penalties;
    let mut z_base = 0.0;
    let mut worst = 0.0;
    let mut avg = 0.0;
    let mut tm = OracleTerms::default();

    for t in 0..nt {
        let dt = d.intervals[t].duration;
        let mut zt = 0.0;
        let mut inj = vec![C64::new(0.0, 0.0); n];

        for dev in &d.devices {
            let ds = sol.devices.iter().find(|x| x.id == dev.id).unwrap();
            let blocks: Vec<(f64, f64)> = dev.energy_curves[t].blocks.iter().map(|b| (b.width, b.price)).collect();
            let e = dt * curve_value(&blocks, ds.p[t]);
            let prev = if t == 0 { dev.u0 as f64 } else { ds.u[t - 1] };
            let s = C64::new(ds.p[t], ds.q[t]);
            let i = bus[dev.bus.as_str()];
            if dev.is_producer() {
                zt -= e;
                tm.producer_cost += e;
                inj[i] += s;
            } else {
                zt += e;
                tm.consumer_value += e;
                inj[i] -= s;
            }
            let su = dev.startup_cost * f64::max(ds.u[t] - prev, 0.0);
            let sd = dev.shutdown_cost * f64::max(prev - ds.u[t], 0.0);
            let on = dev.on_cost * ds.u[t] * dt;
            let rsv = dt * dev.reserve_cost * ds.p_rsv[t];
            zt -= su + sd + on + rsv;
            tm.startup += su;
            tm.shutdown += sd;
            tm.on += on;
            tm.reserve_cost += rsv;
        }

        for z in &d.zones {
            let mut req: f64 = 0.0;
            let mut have = 0.0;
            let mut any = false;
            for m in &z.members {
                let j = dev_pos[m.as_str()];
                let ds = sol.devices.iter().find(|x| &x.id == m).unwrap();
                if d.devices[j].is_producer() {
                    req = if any { req.max(ds.p[t]) } else { ds.p[t] };
                    any = true;
                }
                have += ds.p_rsv[t];
            }
            let short = dt * z.shortage_penalty * (z.sigma * req - have).max(0.0);
            zt -= short;
            tm.zone_shortfall += short;
        }

        let w: Vec<C64> = d
            .buses
            .iter()
            .map(|b| {
                let bs = sol.buses.iter().find(|x| x.id == b.id).unwrap();
                polar(bs.v[t], bs.theta[t])
            })
            .collect();

        let mut ybus = vec![vec![C64::new(0.0, 0.0); n]; n];
        let mut q_ctg = Vec::new();
        for br in &d.ac_branches {
            let bs = sol.ac_branches.iter().find(|x| x.id == br.id).unwrap();
            let (f, to) = (bus[br.from_bus.as_str()], bus[br.to_bus.as_str()]);
            let prev = if t == 0 { br.u0 as f64 } else { bs.u[t - 1] };
            let sw = dt * pen.c_sw * (bs.u[t] - prev).abs();
            zt -= sw;
            tm.switching += sw;
            if bs.u[t] == 0.0 {
                q_ctg.push(0.0);
                continue;
            }
            let nu = polar(bs.tau[t], bs.phi[t]);
            let yff = (br.y_sr + br.y_fr) / (bs.tau[t] * bs.tau[t]);
            let yft = -br.y_sr / nu.conj();
            let ytf = -br.y_sr / nu;
            let ytt = br.y_sr + br.y_to;
            ybus[f][f] += yff;
            ybus[f][to] += yft;
            ybus[to][f] += ytf;
            ybus[to][to] += ytt;
            let s_fr = w[f] * (yff * w[f] + yft * w[to]).conj();
            let s_to = w[to] * (ytf * w[f] + ytt * w[to]).conj();
            let over = dt * pen.c_s * (s_fr.norm().max(s_to.norm()) - br.s_max).max(0.0);
            zt -= over;
            tm.overload += over;
            q_ctg.push(s_fr.im.abs().max(s_to.im.abs()));
        }
        let mut shunt_re = 0.0;
        for sh in &d.shunts {
            let ss = sol.shunts.iter().find(|x| x.id == sh.id).unwrap();
            let i = bus[sh.bus.as_str()];
            ybus[i][i] += sh.y_step * ss.step[t];
            shunt_re += (sh.y_step * ss.step[t]).re * w[i].norm_sqr();
        }
        for br in &d.dc_branches {
            let bs = sol.dc_branches.iter().find(|x| x.id == br.id).unwrap();
            inj[bus[br.from_bus.as_str()]] -= C64::new(bs.p_fr[t], bs.q_fr[t]);
            inj[bus[br.to_bus.as_str()]] -= C64::new(-bs.p_fr[t], bs.q_to[t]);
        }
        for i in 0..n {
            let cur: C64 = (0..n).map(|k| ybus[i][k] * w[k]).sum();
            let mis = w[i] * cur.conj() - inj[i];
            zt -= dt * (pen.c_p * mis.re.abs() + pen.c_q * mis.im.abs());
            tm.p_imbalance += dt * pen.c_p * mis.re.abs();
            tm.q_imbalance += dt * pen.c_q * mis.im.abs();
        }
        z_base += zt;

        // post-contingency DC
        let p_sl: f64 = inj.iter().map(|x| x.re).sum::<f64>() - shunt_re;
        let mut zk = Vec::new();
        for ctg in &d.contingencies {
            let mut lap = vec![vec![0.0; n]; n];
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                rhs[i] = inj[i].re - p_sl / n as f64;
            }
            for sh in &d.shunts {
                let ss = sol.shunts.iter().find(|x| x.id == sh.id).unwrap();
                let i = bus[sh.bus.as_str()];
                rhs[i] -= (sh.y_step * ss.step[t]).re * w[i].norm_sqr();
            }
            for br in &d.dc_branches {
                if br.id == ctg.branch {
                    let bs = sol.dc_branches.iter().find(|x| x.id == br.id).unwrap();
                    rhs[bus[br.from_bus.as_str()]] += bs.p_fr[t];
                    rhs[bus[br.to_bus.as_str()]] -= bs.p_fr[t];
                }
            }
            let mut live = Vec::new();
            for br in &d.ac_branches {
                let bs = sol.ac_branches.iter().find(|x| x.id == br.id).unwrap();
                if br.id == ctg.branch || bs.u[t] == 0.0 {
                    live.push(None);
                    continue;
                }
                let b = -bs.u[t] * br.y_sr.im;
                let (f, to) = (bus[br.from_bus.as_str()], bus[br.to_bus.as_str()]);
                lap[f][f] += b;
                lap[to][to] += b;
                lap[f][to] -= b;
                lap[to][f] -= b;
                rhs[f] += b * bs.phi[t];
                rhs[to] -= b * bs.phi[t];
                live.push(Some((f, to, b, bs.phi[t])));
            }
            lap[0] = vec![0.0; n];
            lap[0][0] = 1.0;
            rhs[0] = 0.0;
            let th = gauss_solve(lap, rhs);
            let mut z = 0.0;
            for (j, br) in d.ac_branches.iter().enumerate() {
                if let Some((f, to, b, phi)) = live[j] {
                    let p = b * (th[f] - th[to] - phi);
                    z += dt * pen.c_s * ((p * p + q_ctg[j] * q_ctg[j]).sqrt() - br.s_max_ctg).max(0.0);
                }
            }
            zk.push(z);
        }
        if !zk.is_empty() {
            worst += zk.iter().cloned().fold(f64::MIN, f64::max);
            avg += zk.iter().sum::<f64>() / zk.len() as f64;
        }
    }

    for dev in &d.devices {
        let ds = sol.devices.iter().find(|x| x.id == dev.id).unwrap();
        for ec in &dev.energy_constraints {
            let mut lhs = ec.a0;
            for (&t, &a) in &ec.coeffs {
                lhs += a * ds.p[t];
            }
            z_base -= pen.c_en * lhs.max(0.0);
            tm.energy += pen.c_en * lhs.max(0.0);
        }
    }
    OracleResult { z_ms: z_base - worst - avg, z_base, worst, avg, terms: tm }
}
