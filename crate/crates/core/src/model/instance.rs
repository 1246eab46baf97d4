use std::collections::{BTreeMap, HashMap};
use std::ops::Deref;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::lookback::{derive_lookback_windows, LookbackWindows};
use super::pwl::PwlCurve;
use super::ModelError;

pub const FORMAT_VERSION: &str = "1";

/// One time interval of the horizon; `duration` is in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub id: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub v_min: f64,
    pub v_max: f64,
    /// Share of the system real-power mismatch absorbed by this bus in the
    /// post-contingency DC model; uniform `1/|buses|`.
    pub alpha: f64,
}

/// Marginal-price block: `width` per-unit at `price` $/pu-h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub width: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Producing,
    Consuming,
}

/// Upper limit on the number of startups (or shutdowns) over a set of intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchLimit {
    pub intervals: Vec<usize>,
    pub max: u32,
}

/// Soft multi-interval energy limit `a0 + sum_t coeffs[t] * p_t <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstraint {
    pub a0: f64,
    pub coeffs: BTreeMap<usize, f64>,
}

impl EnergyConstraint {
    /// Constraint left-hand side for a power trajectory.
    pub fn lhs(&self, p: &[f64]) -> f64 {
        self.a0 + self.coeffs.iter().map(|(&t, &a)| a * p[t]).sum::<f64>()
    }
}

/// Producing or consuming device. Per-interval vectors have one entry per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub kind: DeviceKind,
    pub bus: String,
    pub u0: u8,
    pub p0: f64,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    /// Ramp rates in pu/h.
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub ramp_startup: f64,
    pub ramp_shutdown: f64,
    pub reserve_max: Vec<f64>,
    pub reserve_cost: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub on_cost: f64,
    pub energy_curves: Vec<PwlCurve>,
    pub must_run: Vec<usize>,
    pub forced_outage: Vec<usize>,
    /// Hours.
    pub min_uptime: f64,
    pub min_downtime: f64,
    pub max_startups: Vec<SwitchLimit>,
    pub max_shutdowns: Vec<SwitchLimit>,
    pub energy_constraints: Vec<EnergyConstraint>,
}

impl Device {
    pub fn is_producer(&self) -> bool {
        self.kind == DeviceKind::Producing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shunt {
    pub id: String,
    pub bus: String,
    /// Admittance to ground per activated step.
    pub y_step: Complex64,
    pub u_min: i64,
    pub u_max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcBranch {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub y_sr: Complex64,
    pub y_fr: Complex64,
    pub y_to: Complex64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub s_max: f64,
    pub s_max_ctg: f64,
    pub u0: u8,
}

impl AcBranch {
    /// Series susceptance `Im(y_sr)`.
    pub fn b_sr(&self) -> f64 {
        self.y_sr.im
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcBranch {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub p_max: f64,
    pub q_fr_min: f64,
    pub q_fr_max: f64,
    pub q_to_min: f64,
    pub q_to_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveZone {
    pub id: String,
    pub sigma: f64,
    pub shortage_penalty: f64,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub id: String,
    /// Id of the outaged AC or DC branch.
    pub branch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub c_p: f64,
    pub c_q: f64,
    pub c_s: f64,
    pub c_sw: f64,
    pub c_en: f64,
}

/// Serialized instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub format_version: String,
    /// System MVA base for all per-unit quantities.
    pub base_mva: f64,
    pub intervals: Vec<Interval>,
    pub buses: Vec<Bus>,
    pub devices: Vec<Device>,
    pub shunts: Vec<Shunt>,
    pub ac_branches: Vec<AcBranch>,
    pub dc_branches: Vec<DcBranch>,
    pub zones: Vec<ReserveZone>,
    pub contingencies: Vec<Contingency>,
    pub penalties: PenaltyParams,
}

/// Reference to a branch in either branch collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchRef {
    Ac(usize),
    Dc(usize),
    Unresolved,
}

/// Marker stored for references that did not resolve.
pub(crate) const UNRESOLVED: usize = usize::MAX;

/// Dense-index bookkeeping derived from an [`InstanceData`].
#[derive(Debug, Clone, Default)]
pub struct Index {
    pub bus_of_id: HashMap<String, usize>,
    pub device_of_id: HashMap<String, usize>,
    pub shunt_of_id: HashMap<String, usize>,
    pub ac_of_id: HashMap<String, usize>,
    pub dc_of_id: HashMap<String, usize>,
    pub device_bus: Vec<usize>,
    pub shunt_bus: Vec<usize>,
    pub ac_fr: Vec<usize>,
    pub ac_to: Vec<usize>,
    pub dc_fr: Vec<usize>,
    pub dc_to: Vec<usize>,
    pub zone_members: Vec<Vec<usize>>,
    pub device_zones: Vec<Vec<usize>>,
    pub ctg_branch: Vec<BranchRef>,
    pub producers: Vec<usize>,
    pub consumers: Vec<usize>,
    /// Start time (hours from horizon start) of each interval.
    pub interval_start: Vec<f64>,
    pub lookback: Vec<LookbackWindows>,
}

fn id_map<'a>(ids: impl Iterator<Item = &'a String>) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for (i, id) in ids.enumerate() {
        m.entry(id.clone()).or_insert(i);
    }
    m
}

fn resolve(map: &HashMap<String, usize>, id: &str) -> usize {
    map.get(id).copied().unwrap_or(UNRESOLVED)
}

impl Index {
    pub fn build(d: &InstanceData) -> Self {
        let bus_of_id = id_map(d.buses.iter().map(|b| &b.id));
        let device_of_id = id_map(d.devices.iter().map(|x| &x.id));
        let shunt_of_id = id_map(d.shunts.iter().map(|x| &x.id));
        let ac_of_id = id_map(d.ac_branches.iter().map(|x| &x.id));
        let dc_of_id = id_map(d.dc_branches.iter().map(|x| &x.id));
        let zone_members: Vec<Vec<usize>> = d
            .zones
            .iter()
            .map(|z| z.members.iter().map(|m| resolve(&device_of_id, m)).collect())
            .collect();
        let mut device_zones = vec![Vec::new(); d.devices.len()];
        for (n, members) in zone_members.iter().enumerate() {
            for &j in members {
                if j != UNRESOLVED {
                    device_zones[j].push(n);
                }
            }
        }
        let ctg_branch = d
            .contingencies
            .iter()
            .map(|c| {
                if let Some(&j) = ac_of_id.get(&c.branch) {
                    BranchRef::Ac(j)
                } else if let Some(&j) = dc_of_id.get(&c.branch) {
                    BranchRef::Dc(j)
                } else {
                    BranchRef::Unresolved
                }
            })
            .collect();
        let mut interval_start = Vec::with_capacity(d.intervals.len());
        let mut acc = 0.0;
        for iv in &d.intervals {
            interval_start.push(acc);
            acc += iv.duration;
        }
        Self {
            device_bus: d.devices.iter().map(|x| resolve(&bus_of_id, &x.bus)).collect(),
            shunt_bus: d.shunts.iter().map(|x| resolve(&bus_of_id, &x.bus)).collect(),
            ac_fr: d.ac_branches.iter().map(|x| resolve(&bus_of_id, &x.from_bus)).collect(),
            ac_to: d.ac_branches.iter().map(|x| resolve(&bus_of_id, &x.to_bus)).collect(),
            dc_fr: d.dc_branches.iter().map(|x| resolve(&bus_of_id, &x.from_bus)).collect(),
            dc_to: d.dc_branches.iter().map(|x| resolve(&bus_of_id, &x.to_bus)).collect(),
            producers: (0..d.devices.len()).filter(|&j| d.devices[j].is_producer()).collect(),
            consumers: (0..d.devices.len()).filter(|&j| !d.devices[j].is_producer()).collect(),
            lookback: d
                .devices
                .iter()
                .map(|dev| derive_lookback_windows(dev, &d.intervals))
                .collect(),
            zone_members,
            device_zones,
            ctg_branch,
            interval_start,
            bus_of_id,
            device_of_id,
            shunt_of_id,
            ac_of_id,
            dc_of_id,
        }
    }
}

/// An instance together with its resolved index. Immutable once built.
#[derive(Debug, Clone)]
pub struct Instance {
    data: InstanceData,
    index: Index,
}

impl Deref for Instance {
    type Target = InstanceData;
    fn deref(&self) -> &InstanceData {
        &self.data
    }
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl Instance {
    /// Builds the index. Unresolved references are kept as markers so that
    /// [`super::validate_instance`] can report them.
    pub fn new(data: InstanceData) -> Self {
        let index = Index::build(&data);
        Self { data, index }
    }

    pub fn data(&self) -> &InstanceData {
        &self.data
    }

    pub fn into_data(self) -> InstanceData {
        self.data
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn num_intervals(&self) -> usize {
        self.data.intervals.len()
    }

    pub fn num_buses(&self) -> usize {
        self.data.buses.len()
    }

    pub fn duration(&self, t: usize) -> f64 {
        self.data.intervals[t].duration
    }

    /// Uniform slack share `1/|buses|`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.data.buses.len() as f64
    }

    /// Parses a JSON document without validating it.
    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let data: InstanceData = serde_json::from_str(s)?;
        if data.format_version != FORMAT_VERSION {
            return Err(ModelError::Version(data.format_version));
        }
        Ok(Self::new(data))
    }

    /// Parses and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let inst = Self::from_json_str(&text)?;
        let report = super::validate_instance(&inst);
        if !report.is_empty() {
            return Err(ModelError::Invalid(report));
        }
        Ok(inst)
    }

    /// Canonical pretty-printed JSON.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.data).expect("instance serializes")
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.data.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        InstanceData::deserialize(d).map(Instance::new)
    }
}
