use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Instance, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MalformedSolution {
    #[error("not a solution document: {0}")]
    Parse(String),
    #[error("unsupported format_version {0:?}")]
    Version(String),
    #[error("{collection}: expected {expected} entries, found {found}")]
    Count { collection: &'static str, expected: usize, found: usize },
    #[error("{collection}: unknown or duplicate id {id:?}")]
    UnknownId { collection: &'static str, id: String },
    #[error("{id}.{field}: expected {expected} values, found {found}")]
    Length { id: String, field: &'static str, expected: usize, found: usize },
    #[error("{id}.{field}[{t}] is not finite")]
    NonFinite { id: String, field: &'static str, t: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSolution {
    pub id: String,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSolution {
    pub id: String,
    pub u: Vec<f64>,
    pub u_su: Vec<f64>,
    pub u_sd: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub p_rsv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuntSolution {
    pub id: String,
    pub step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcBranchSolution {
    pub id: String,
    pub u: Vec<f64>,
    pub u_su: Vec<f64>,
    pub u_sd: Vec<f64>,
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
}

/// DC branch flows; `p_to = -p_fr` is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcBranchSolution {
    pub id: String,
    pub p_fr: Vec<f64>,
    pub q_fr: Vec<f64>,
    pub q_to: Vec<f64>,
}

/// Per-interval values of every decision variable.
///
/// After [`Solution::conform`] each collection is in instance order, so
/// `sol.devices[j]` belongs to `inst.devices[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub format_version: String,
    pub buses: Vec<BusSolution>,
    pub devices: Vec<DeviceSolution>,
    pub shunts: Vec<ShuntSolution>,
    pub ac_branches: Vec<AcBranchSolution>,
    pub dc_branches: Vec<DcBranchSolution>,
}

fn reorder<T>(
    collection: &'static str,
    items: Vec<T>,
    ids: &[&str],
    id_of: impl Fn(&T) -> &str,
) -> Result<Vec<T>, MalformedSolution> {
    if items.len() != ids.len() {
        return Err(MalformedSolution::Count { collection, expected: ids.len(), found: items.len() });
    }
    if items.iter().zip(ids).all(|(x, id)| id_of(x) == *id) {
        return Ok(items);
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut slots: Vec<Option<T>> = (0..ids.len()).map(|_| None).collect();
    for x in items {
        let id = id_of(&x).to_string();
        match pos.get(id.as_str()) {
            Some(&i) if slots[i].is_none() => slots[i] = Some(x),
            _ => return Err(MalformedSolution::UnknownId { collection, id }),
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
}

fn check_field(id: &str, field: &'static str, v: &[f64], nt: usize) -> Result<(), MalformedSolution> {
    if v.len() != nt {
        return Err(MalformedSolution::Length { id: id.to_string(), field, expected: nt, found: v.len() });
    }
    if let Some(t) = v.iter().position(|x| !x.is_finite()) {
        return Err(MalformedSolution::NonFinite { id: id.to_string(), field, t });
    }
    Ok(())
}

impl Solution {
    /// A correctly shaped solution: everything off or at U^0, flat voltages
    /// clamped into bounds, nominal taps, zero flows.
    pub fn blank(inst: &Instance) -> Self {
        let nt = inst.num_intervals();
        let zeros = || vec![0.0; nt];
        Self {
            format_version: FORMAT_VERSION.to_string(),
            buses: inst
                .buses
                .iter()
                .map(|b| BusSolution { id: b.id.clone(), v: vec![1.0_f64.clamp(b.v_min, b.v_max); nt], theta: zeros() })
                .collect(),
            devices: inst
                .devices
                .iter()
                .map(|d| DeviceSolution {
                    id: d.id.clone(),
                    u: zeros(),
                    u_su: zeros(),
                    u_sd: zeros(),
                    p: zeros(),
                    q: zeros(),
                    p_rsv: zeros(),
                })
                .collect(),
            shunts: inst
                .shunts
                .iter()
                .map(|s| ShuntSolution { id: s.id.clone(), step: vec![0_i64.clamp(s.u_min, s.u_max) as f64; nt] })
                .collect(),
            ac_branches: inst
                .ac_branches
                .iter()
                .map(|b| AcBranchSolution {
                    id: b.id.clone(),
                    u: vec![b.u0 as f64; nt],
                    u_su: zeros(),
                    u_sd: zeros(),
                    tau: vec![1.0_f64.clamp(b.tau_min, b.tau_max); nt],
                    phi: vec![0.0_f64.clamp(b.phi_min, b.phi_max); nt],
                })
                .collect(),
            dc_branches: inst
                .dc_branches
                .iter()
                .map(|b| DcBranchSolution {
                    id: b.id.clone(),
                    p_fr: zeros(),
                    q_fr: vec![0.0_f64.clamp(b.q_fr_min, b.q_fr_max); nt],
                    q_to: vec![0.0_f64.clamp(b.q_to_min, b.q_to_max); nt],
                })
                .collect(),
        }
    }

    /// Parses a JSON document and conforms it to the instance.
    pub fn from_json_bytes(inst: &Instance, bytes: &[u8]) -> Result<Self, MalformedSolution> {
        let mut sol: Solution =
            serde_json::from_slice(bytes).map_err(|e| MalformedSolution::Parse(e.to_string()))?;
        sol.conform(inst)?;
        Ok(sol)
    }

    pub fn load(inst: &Instance, path: impl AsRef<Path>) -> Result<Self, MalformedSolution> {
        let bytes = std::fs::read(path).map_err(|e| MalformedSolution::Parse(e.to_string()))?;
        Self::from_json_bytes(inst, &bytes)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    /// Writes to `path` via a temporary file and rename so readers never see
    /// a partially written document.
    pub fn write_atomic(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_json_string())?;
        std::fs::rename(&tmp, path)
    }

    /// Reorders every collection into instance order and checks completeness
    /// and finiteness of every cell.
    pub fn conform(&mut self, inst: &Instance) -> Result<(), MalformedSolution> {
        if self.format_version != FORMAT_VERSION {
            return Err(MalformedSolution::Version(self.format_version.clone()));
        }
        let nt = inst.num_intervals();
        self.buses = reorder(
            "buses",
            std::mem::take(&mut self.buses),
            &inst.buses.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(),
            |x| &x.id,
        )?;
        self.devices = reorder(
            "devices",
            std::mem::take(&mut self.devices),
            &inst.devices.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(),
            |x| &x.id,
        )?;
        self.shunts = reorder(
            "shunts",
            std::mem::take(&mut self.shunts),
            &inst.shunts.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(),
            |x| &x.id,
        )?;
        self.ac_branches = reorder(
            "ac_branches",
            std::mem::take(&mut self.ac_branches),
            &inst.ac_branches.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(),
            |x| &x.id,
        )?;
        self.dc_branches = reorder(
            "dc_branches",
            std::mem::take(&mut self.dc_branches),
            &inst.dc_branches.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(),
            |x| &x.id,
        )?;
        for b in &self.buses {
            check_field(&b.id, "v", &b.v, nt)?;
            check_field(&b.id, "theta", &b.theta, nt)?;
        }
        for d in &self.devices {
            for (f, v) in [("u", &d.u), ("u_su", &d.u_su), ("u_sd", &d.u_sd), ("p", &d.p), ("q", &d.q), ("p_rsv", &d.p_rsv)] {
                check_field(&d.id, f, v, nt)?;
            }
        }
        for s in &self.shunts {
            check_field(&s.id, "step", &s.step, nt)?;
        }
        for b in &self.ac_branches {
            for (f, v) in [("u", &b.u), ("u_su", &b.u_su), ("u_sd", &b.u_sd), ("tau", &b.tau), ("phi", &b.phi)] {
                check_field(&b.id, f, v, nt)?;
            }
        }
        for b in &self.dc_branches {
            for (f, v) in [("p_fr", &b.p_fr), ("q_fr", &b.q_fr), ("q_to", &b.q_to)] {
                check_field(&b.id, f, v, nt)?;
            }
        }
        Ok(())
    }

    /// Recomputes device and AC branch startup/shutdown indicators from the
    /// status sequences and the initial statuses.
    pub fn derive_transitions(&mut self, inst: &Instance) {
        for (d, ds) in inst.devices.iter().zip(self.devices.iter_mut()) {
            let (su, sd) = transitions(d.u0 as f64, &ds.u);
            ds.u_su = su;
            ds.u_sd = sd;
        }
        for (b, bs) in inst.ac_branches.iter().zip(self.ac_branches.iter_mut()) {
            let (su, sd) = transitions(b.u0 as f64, &bs.u);
            bs.u_su = su;
            bs.u_sd = sd;
        }
    }
}

/// Startup and shutdown indicators of a status sequence.
pub(crate) fn transitions(u0: f64, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut prev = u0;
    let mut su = Vec::with_capacity(u.len());
    let mut sd = Vec::with_capacity(u.len());
    for &x in u {
        let d = x - prev;
        su.push(d.max(0.0));
        sd.push((-d).max(0.0));
        prev = x;
    }
    (su, sd)
}
