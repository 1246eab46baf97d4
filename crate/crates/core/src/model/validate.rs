use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::instance::UNRESOLVED;
use super::{BranchRef, DeviceKind, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DanglingReference,
    DuplicateId,
    Shape,
    BoundOrder,
    NegativeParameter,
    Curve,
    Schedule,
    Intervals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub entity: String,
    pub interval: Option<usize>,
    pub detail: String,
}

/// Problems found by [`validate_instance`]; empty iff the instance is well formed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, kind: ViolationKind, entity: &str, interval: Option<usize>, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            entity: entity.to_string(),
            interval,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(10) {
            write!(f, "; {:?} {}", v.kind, v.entity)?;
            if let Some(t) = v.interval {
                write!(f, "@{t}")?;
            }
            write!(f, ": {}", v.detail)?;
        }
        Ok(())
    }
}

fn check_dupes<'a>(r: &mut ValidationReport, what: &str, ids: impl Iterator<Item = &'a String>) {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            r.push(ViolationKind::DuplicateId, id, None, format!("duplicate {what} id"));
        }
    }
}

fn finite(x: f64) -> bool {
    x.is_finite()
}

/// Checks every structural invariant of the data model.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    use ViolationKind::*;
    let mut r = ValidationReport::default();
    let idx = inst.index();
    let nt = inst.intervals.len();

    if nt == 0 {
        r.push(Intervals, "intervals", None, "horizon has no intervals");
    }
    for (t, iv) in inst.intervals.iter().enumerate() {
        if iv.id != t {
            r.push(Intervals, "intervals", Some(t), format!("id {} is not contiguous", iv.id));
        }
        if !(iv.duration > 0.0 && finite(iv.duration)) {
            r.push(Intervals, "intervals", Some(t), format!("duration {} not positive", iv.duration));
        }
    }
    if inst.buses.is_empty() {
        r.push(Shape, "buses", None, "no buses");
    }
    if !(inst.base_mva > 0.0) {
        r.push(NegativeParameter, "base_mva", None, "base must be positive");
    }

    check_dupes(&mut r, "bus", inst.buses.iter().map(|x| &x.id));
    check_dupes(&mut r, "device", inst.devices.iter().map(|x| &x.id));
    check_dupes(&mut r, "shunt", inst.shunts.iter().map(|x| &x.id));
    check_dupes(&mut r, "branch", inst.ac_branches.iter().map(|x| &x.id).chain(inst.dc_branches.iter().map(|x| &x.id)));
    check_dupes(&mut r, "zone", inst.zones.iter().map(|x| &x.id));
    check_dupes(&mut r, "contingency", inst.contingencies.iter().map(|x| &x.id));

    let alpha = 1.0 / inst.buses.len().max(1) as f64;
    for b in &inst.buses {
        if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
            r.push(BoundOrder, &b.id, None, format!("voltage bounds [{}, {}]", b.v_min, b.v_max));
        }
        if (b.alpha - alpha).abs() > 1e-12 {
            r.push(Shape, &b.id, None, format!("alpha {} != 1/|I|", b.alpha));
        }
    }

    for (j, d) in inst.devices.iter().enumerate() {
        let id = d.id.as_str();
        if idx.device_bus[j] == UNRESOLVED {
            r.push(DanglingReference, id, None, format!("unknown bus {}", d.bus));
        }
        let vectors = [
            ("p_min", d.p_min.len()),
            ("p_max", d.p_max.len()),
            ("q_min", d.q_min.len()),
            ("q_max", d.q_max.len()),
            ("reserve_max", d.reserve_max.len()),
            ("energy_curves", d.energy_curves.len()),
        ];
        let mut shaped = true;
        for (name, len) in vectors {
            if len != nt {
                shaped = false;
                r.push(Shape, id, None, format!("{name} has {len} entries, expected {nt}"));
            }
        }
        if d.u0 > 1 {
            r.push(Schedule, id, None, "u0 must be 0 or 1");
        }
        if d.u0 == 0 && d.p0 != 0.0 {
            r.push(Schedule, id, None, "offline initial state with nonzero p0");
        }
        for (name, v) in [
            ("ramp_up", d.ramp_up),
            ("ramp_down", d.ramp_down),
            ("ramp_startup", d.ramp_startup),
            ("ramp_shutdown", d.ramp_shutdown),
            ("min_uptime", d.min_uptime),
            ("min_downtime", d.min_downtime),
            ("reserve_cost", d.reserve_cost),
        ] {
            if !(v >= 0.0 && finite(v)) {
                r.push(NegativeParameter, id, None, format!("{name} = {v}"));
            }
        }
        for &t in d.must_run.iter().chain(&d.forced_outage) {
            if t >= nt {
                r.push(Schedule, id, Some(t), "interval out of range");
            }
        }
        for &t in &d.must_run {
            if d.forced_outage.contains(&t) {
                r.push(Schedule, id, Some(t), "both must-run and forced outage");
            }
        }
        for lim in d.max_startups.iter().chain(&d.max_shutdowns) {
            for &t in &lim.intervals {
                if t >= nt {
                    r.push(Schedule, id, Some(t), "switch limit interval out of range");
                }
            }
        }
        for ec in &d.energy_constraints {
            for &t in ec.coeffs.keys() {
                if t >= nt {
                    r.push(Schedule, id, Some(t), "energy constraint interval out of range");
                }
            }
        }
        if !shaped {
            continue;
        }
        for t in 0..nt {
            if !(d.p_min[t] <= d.p_max[t]) {
                r.push(BoundOrder, id, Some(t), format!("p_min {} > p_max {}", d.p_min[t], d.p_max[t]));
            }
            if d.p_min[t] < 0.0 {
                r.push(BoundOrder, id, Some(t), "p_min below curve domain start 0");
            }
            if !(d.q_min[t] <= d.q_max[t]) {
                r.push(BoundOrder, id, Some(t), format!("q_min {} > q_max {}", d.q_min[t], d.q_max[t]));
            }
            if !(d.reserve_max[t] >= 0.0) {
                r.push(NegativeParameter, id, Some(t), "reserve_max negative");
            }
            let curve = &d.energy_curves[t];
            if curve.blocks.iter().any(|b| !(b.width >= 0.0) || !finite(b.width) || !finite(b.price)) {
                r.push(Curve, id, Some(t), "negative or non-finite block");
            }
            let shape_ok = match d.kind {
                DeviceKind::Producing => curve.is_nondecreasing(),
                DeviceKind::Consuming => curve.is_nonincreasing(),
            };
            if !shape_ok {
                r.push(Curve, id, Some(t), "marginal prices not monotone for device kind");
            }
            if curve.total_width() + 1e-12 < d.p_max[t] {
                r.push(Curve, id, Some(t), "curve does not cover [p_min, p_max]");
            }
        }
    }

    for (j, s) in inst.shunts.iter().enumerate() {
        if idx.shunt_bus[j] == UNRESOLVED {
            r.push(DanglingReference, &s.id, None, format!("unknown bus {}", s.bus));
        }
        if s.u_min > s.u_max {
            r.push(BoundOrder, &s.id, None, "u_min > u_max");
        }
    }

    for (j, b) in inst.ac_branches.iter().enumerate() {
        for (bus, end) in [(idx.ac_fr[j], &b.from_bus), (idx.ac_to[j], &b.to_bus)] {
            if bus == UNRESOLVED {
                r.push(DanglingReference, &b.id, None, format!("unknown bus {end}"));
            }
        }
        if b.from_bus == b.to_bus {
            r.push(BoundOrder, &b.id, None, "from_bus == to_bus");
        }
        if !(b.tau_min > 0.0 && b.tau_min <= b.tau_max) {
            r.push(BoundOrder, &b.id, None, "tau bounds");
        }
        if !(b.phi_min <= b.phi_max) {
            r.push(BoundOrder, &b.id, None, "phi bounds");
        }
        if !(b.s_max > 0.0 && b.s_max_ctg > 0.0) {
            r.push(NegativeParameter, &b.id, None, "flow limits must be positive");
        }
        if b.u0 > 1 {
            r.push(Schedule, &b.id, None, "u0 must be 0 or 1");
        }
    }

    for (j, b) in inst.dc_branches.iter().enumerate() {
        for (bus, end) in [(idx.dc_fr[j], &b.from_bus), (idx.dc_to[j], &b.to_bus)] {
            if bus == UNRESOLVED {
                r.push(DanglingReference, &b.id, None, format!("unknown bus {end}"));
            }
        }
        if b.from_bus == b.to_bus {
            r.push(BoundOrder, &b.id, None, "from_bus == to_bus");
        }
        if !(b.p_max >= 0.0) {
            r.push(NegativeParameter, &b.id, None, "p_max negative");
        }
        if !(b.q_fr_min <= b.q_fr_max && b.q_to_min <= b.q_to_max) {
            r.push(BoundOrder, &b.id, None, "reactive bounds");
        }
    }

    for (n, z) in inst.zones.iter().enumerate() {
        if !(z.sigma >= 0.0 && z.shortage_penalty >= 0.0) {
            r.push(NegativeParameter, &z.id, None, "sigma and shortage penalty must be >= 0");
        }
        for (m, &j) in idx.zone_members[n].iter().enumerate() {
            if j == UNRESOLVED {
                r.push(DanglingReference, &z.id, None, format!("unknown device {}", z.members[m]));
            }
        }
    }

    for (k, c) in inst.contingencies.iter().enumerate() {
        if idx.ctg_branch[k] == BranchRef::Unresolved {
            r.push(DanglingReference, &c.id, None, format!("unknown branch {}", c.branch));
        }
    }

    let p = &inst.penalties;
    for (name, v) in [("c_p", p.c_p), ("c_q", p.c_q), ("c_s", p.c_s), ("c_sw", p.c_sw), ("c_en", p.c_en)] {
        if !(v >= 0.0 && finite(v)) {
            r.push(NegativeParameter, name, None, format!("penalty {v}"));
        }
    }
    r
}
