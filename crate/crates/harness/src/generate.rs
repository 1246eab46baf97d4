//! Seeded synthetic scenarios: a meshed ring network with chords, thermal
//! and renewable producers, price-responsive consumers with a daily load
//! shape, one phase shifter, one DC link, switched shunts and reserve zones.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scuc_core::model::{
    build_topology, AcBranch, Block, Bus, Contingency, DcBranch, Device, DeviceKind, EnergyConstraint, Instance,
    InstanceData, Interval, PenaltyParams, PwlCurve, ReserveZone, Shunt, SwitchLimit, BranchRef, FORMAT_VERSION,
};
use scuc_core::C64;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeClass {
    Bus14,
    Bus73,
    Bus617,
    Bus1576,
}

impl SizeClass {
    pub fn buses(self) -> usize {
        match self {
            SizeClass::Bus14 => 14,
            SizeClass::Bus73 => 73,
            SizeClass::Bus617 => 617,
            SizeClass::Bus1576 => 1576,
        }
    }
}

/// Competition division: 1 real-time, 2 day-ahead, 3 week-ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Division {
    D1 = 1,
    D2 = 2,
    D3 = 3,
}

impl Division {
    pub fn number(self) -> u8 {
        self as u8
    }

    /// Interval durations in hours.
    pub fn durations(self) -> Vec<f64> {
        match self {
            // 4.5 h in 15 min to 1 h steps.
            Division::D1 => vec![0.25, 0.25, 0.5, 0.5, 1.0, 1.0, 1.0],
            // 24 h in 1 h and 2 h steps.
            Division::D2 => [vec![1.0; 4], vec![2.0; 10]].concat(),
            // 5 days in 4 h and 6 h steps.
            Division::D3 => [vec![4.0; 3], vec![6.0; 18]].concat(),
        }
    }

    /// Division a horizon of `hours` belongs to.
    pub fn from_horizon(hours: f64) -> Self {
        if hours <= 8.0 + 1e-9 {
            Division::D1
        } else if hours <= 48.0 + 1e-9 {
            Division::D2
        } else {
            Division::D3
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stress {
    Normal,
    /// Load +40%, renewable capacity halved.
    ExtremeWeather,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScenarioPreset {
    pub size: SizeClass,
    pub division: Division,
    pub stress: Stress,
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown preset {0:?}; expected <14|73|617|1576>-d<1|2|3>[-extreme]")]
pub struct PresetParseError(pub String);

impl FromStr for ScenarioPreset {
    type Err = PresetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PresetParseError(s.to_string());
        let mut parts = s.split('-');
        let size = match parts.next() {
            Some("14") => SizeClass::Bus14,
            Some("73") => SizeClass::Bus73,
            Some("617") => SizeClass::Bus617,
            Some("1576") => SizeClass::Bus1576,
            _ => return Err(err()),
        };
        let division = match parts.next() {
            Some("d1") => Division::D1,
            Some("d2") => Division::D2,
            Some("d3") => Division::D3,
            _ => return Err(err()),
        };
        let stress = match parts.next() {
            None => Stress::Normal,
            Some("extreme") => Stress::ExtremeWeather,
            Some(_) => return Err(err()),
        };
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(Self { size, division, stress })
    }
}

impl fmt::Display for ScenarioPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-d{}", self.size.buses(), self.division.number())?;
        if self.stress == Stress::ExtremeWeather {
            write!(f, "-extreme")?;
        }
        Ok(())
    }
}

impl ScenarioPreset {
    pub fn new(size: SizeClass, division: Division) -> Self {
        Self { size, division, stress: Stress::Normal }
    }

    /// The six normal desk-scale presets (14 and 73 buses, all divisions).
    pub fn desk() -> Vec<Self> {
        [SizeClass::Bus14, SizeClass::Bus73]
            .into_iter()
            .flat_map(|s| [Division::D1, Division::D2, Division::D3].map(|d| Self::new(s, d)))
            .collect()
    }
}

/// Daily load shape in `[0.6, 1.0]`, peaking mid-afternoon.
fn load_shape(hour: f64) -> f64 {
    0.8 + 0.2 * (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin()
}

/// Renewable availability in `[0.3, 1.0]`: a wind floor plus daylight.
fn renewable_shape(hour: f64) -> f64 {
    let sun = (std::f64::consts::PI * ((hour % 24.0) - 6.0) / 12.0).sin().max(0.0);
    0.3 + 0.7 * sun
}

fn bus_id(i: usize) -> String {
    format!("bus{i}")
}

/// Builds the scenario for `preset` deterministically from `seed`.
pub fn generate_scenario(preset: ScenarioPreset, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((preset.size.buses() as u64) << 32) ^ ((preset.division as u64) << 48));
    let n = preset.size.buses();
    let durations = preset.division.durations();
    let nt = durations.len();
    let d_min = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let mut mid_hour = Vec::with_capacity(nt);
    let mut h = 0.0;
    for &d in &durations {
        mid_hour.push(h + 0.5 * d);
        h += d;
    }
    let extreme = preset.stress == Stress::ExtremeWeather;
    let load_scale = if extreme { 1.4 } else { 1.0 };
    let ren_scale = if extreme { 0.5 } else { 1.0 };

    let buses: Vec<Bus> =
        (0..n).map(|i| Bus { id: bus_id(i), v_min: 0.94, v_max: 1.06, alpha: 1.0 / n as f64 }).collect();

    // Ring plus random chords.
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let n_chords = (n / 4).max(2);
    let mut guard = 0;
    while pairs.len() < n + n_chords && guard < 100 * n {
        guard += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if b - a < 2 || (a == 0 && b == n - 1) || pairs.iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)) {
            continue;
        }
        pairs.push((a, b));
    }
    let ac_branches: Vec<AcBranch> = pairs
        .iter()
        .enumerate()
        .map(|(m, &(a, b))| {
            let x = rng.gen_range(0.03..0.10);
            let r = x * rng.gen_range(0.05..0.12);
            let charging = rng.gen_range(0.0..0.04);
            let s_max = rng.gen_range(4.0..6.0);
            let y = C64::new(r, x).inv();
            AcBranch {
                id: format!("line{m}"),
                from_bus: bus_id(a),
                to_bus: bus_id(b),
                y_sr: y,
                y_fr: C64::new(0.0, 0.5 * charging),
                y_to: C64::new(0.0, 0.5 * charging),
                tau_min: 1.0,
                tau_max: 1.0,
                phi_min: 0.0,
                phi_max: 0.0,
                s_max,
                s_max_ctg: 1.2 * s_max,
                u0: 1,
            }
        })
        .collect();
    let mut ac_branches = ac_branches;
    // The first chord is a phase-shifting transformer with an adjustable
    // ratio and a rating well below the lines'.
    let pst = n;
    ac_branches[pst].s_max = rng.gen_range(1.0..1.5);
    ac_branches[pst].s_max_ctg = 1.2 * ac_branches[pst].s_max;
    ac_branches[pst].phi_min = -0.6;
    ac_branches[pst].phi_max = 0.6;
    ac_branches[pst].tau_min = 0.95;
    ac_branches[pst].tau_max = 1.05;

    let dc_branches = vec![DcBranch {
        id: "dc0".into(),
        from_bus: bus_id(1),
        to_bus: bus_id(n / 2),
        p_max: 1.0,
        q_fr_min: -0.3,
        q_fr_max: 0.3,
        q_to_min: -0.3,
        q_to_max: 0.3,
    }];

    let mut shunts = Vec::new();
    for i in (2..n).step_by(5) {
        shunts.push(Shunt { id: format!("sh{}", shunts.len()), bus: bus_id(i), y_step: C64::new(0.0, 0.05), u_min: 0, u_max: 3 });
    }
    shunts.push(Shunt { id: format!("sh{}", shunts.len()), bus: bus_id(n - 1), y_step: C64::new(0.0, -0.05), u_min: 0, u_max: 2 });

    // Consumers.
    let mut consumers = Vec::new();
    for i in (0..n).filter(|i| i % 3 != 0) {
        let peak = rng.gen_range(0.2..0.5) * load_scale;
        let mid = rng.gen_range(4000.0..6000.0);
        let low = rng.gen_range(1500.0..3000.0);
        let p_max: Vec<f64> = mid_hour.iter().map(|&h| peak * load_shape(h)).collect();
        let k = consumers.len();
        consumers.push(Device {
            id: format!("l{k}"),
            kind: DeviceKind::Consuming,
            bus: bus_id(i),
            u0: 1,
            p0: 0.0,
            p_min: vec![0.0; nt],
            p_max: p_max.clone(),
            q_min: vec![0.0; nt],
            q_max: p_max.iter().map(|p| 0.2 * p).collect(),
            ramp_up: 2.0 * peak,
            ramp_down: 2.0 * peak,
            ramp_startup: peak / d_min,
            ramp_shutdown: peak / d_min,
            reserve_max: vec![0.0; nt],
            reserve_cost: 0.0,
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            on_cost: 0.0,
            energy_curves: p_max
                .iter()
                .map(|&p| PwlCurve::new(vec![
                    Block { width: 0.5 * p, price: 20000.0 },
                    Block { width: 0.3 * p, price: mid },
                    Block { width: 0.2 * p, price: low },
                ]))
                .collect(),
            must_run: Vec::new(),
            forced_outage: Vec::new(),
            min_uptime: 0.0,
            min_downtime: 0.0,
            max_startups: Vec::new(),
            max_shutdowns: Vec::new(),
            energy_constraints: Vec::new(),
        });
    }
    // Starting consumption: the firm block of the first interval.
    for c in &mut consumers {
        c.p0 = 0.5 * c.p_max[0];
    }
    let peak_load: f64 = (0..nt).map(|t| consumers.iter().map(|c| c.p_max[t]).sum::<f64>()).fold(0.0, f64::max);

    // Producers: every third bus; every fifth producer is renewable.
    let sites: Vec<usize> = (0..n).filter(|i| i % 3 == 0).collect();
    let weights: Vec<f64> = sites.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let fleet = 1.6 * peak_load / load_scale;
    let all: Vec<usize> = (0..nt).collect();
    let mut producers = Vec::new();
    for (k, (&i, &w)) in sites.iter().zip(&weights).enumerate() {
        let cap = fleet * w / wsum;
        let renewable = k % 5 == 4;
        let dev = if renewable {
            let cap = cap * ren_scale;
            let p_max: Vec<f64> = mid_hour.iter().map(|&h| cap * renewable_shape(h)).collect();
            Device {
                id: format!("g{k}"),
                kind: DeviceKind::Producing,
                bus: bus_id(i),
                u0: 1,
                p0: 0.0,
                p_min: vec![0.0; nt],
                p_max: p_max.clone(),
                q_min: vec![-0.2 * cap; nt],
                q_max: vec![0.2 * cap; nt],
                ramp_up: 10.0 * cap,
                ramp_down: 10.0 * cap,
                ramp_startup: cap / d_min,
                ramp_shutdown: cap / d_min,
                reserve_max: vec![0.0; nt],
                reserve_cost: 0.0,
                startup_cost: 0.0,
                shutdown_cost: 0.0,
                on_cost: 0.0,
                energy_curves: p_max.iter().map(|&p| PwlCurve::from_pairs(&[(p, 10.0)])).collect(),
                must_run: Vec::new(),
                forced_outage: Vec::new(),
                min_uptime: 0.0,
                min_downtime: 0.0,
                max_startups: Vec::new(),
                max_shutdowns: Vec::new(),
                energy_constraints: Vec::new(),
            }
        } else {
            let c = rng.gen_range(1500.0..4000.0);
            let p_min = 0.3 * cap;
            Device {
                id: format!("g{k}"),
                kind: DeviceKind::Producing,
                bus: bus_id(i),
                u0: 0,
                p0: 0.0,
                p_min: vec![p_min; nt],
                p_max: vec![cap; nt],
                q_min: vec![-0.3 * cap; nt],
                q_max: vec![0.5 * cap; nt],
                ramp_up: rng.gen_range(0.5..1.0) * cap,
                ramp_down: rng.gen_range(0.5..1.0) * cap,
                ramp_startup: cap / d_min,
                ramp_shutdown: cap / d_min,
                reserve_max: vec![0.2 * cap; nt],
                reserve_cost: rng.gen_range(100.0..400.0),
                startup_cost: rng.gen_range(2.0..6.0) * c * cap,
                shutdown_cost: rng.gen_range(0.1..0.5) * c * cap,
                on_cost: rng.gen_range(0.05..0.15) * c * cap,
                energy_curves: vec![
                    PwlCurve::new(vec![
                        Block { width: 0.4 * cap, price: c },
                        Block { width: 0.3 * cap, price: 1.1 * c },
                        Block { width: 0.3 * cap, price: 1.25 * c },
                    ]);
                    nt
                ],
                must_run: Vec::new(),
                forced_outage: Vec::new(),
                min_uptime: rng.gen_range(1.0..4.0),
                min_downtime: rng.gen_range(1.0..4.0),
                max_startups: vec![SwitchLimit { intervals: all.clone(), max: 2 }],
                max_shutdowns: Vec::new(),
                energy_constraints: Vec::new(),
            }
        };
        producers.push(dev);
    }

    // Initial state: renewables at their first-interval availability, then
    // thermal units in merit order covering the remaining starting load.
    let load0: f64 = consumers.iter().map(|c| c.p0).sum();
    let mut residual = load0;
    for g in producers.iter_mut().filter(|g| g.p_min[0] == 0.0) {
        g.p0 = g.p_max[0].min(residual.max(0.0));
        residual -= g.p0;
    }
    let mut thermal: Vec<usize> = (0..producers.len()).filter(|&k| producers[k].p_min[0] > 0.0).collect();
    thermal.sort_by(|&a, &b| {
        producers[a].energy_curves[0].blocks[0].price.total_cmp(&producers[b].energy_curves[0].blocks[0].price)
    });
    let mut on = Vec::new();
    let mut cap_on = 0.0;
    for &k in &thermal {
        if cap_on >= 1.2 * residual {
            break;
        }
        on.push(k);
        cap_on += producers[k].p_max[0];
    }
    let frac = if cap_on > 0.0 { (residual / cap_on).clamp(0.0, 1.0) } else { 0.0 };
    for &k in &on {
        let g = &mut producers[k];
        g.u0 = 1;
        g.p0 = (frac * g.p_max[0]).clamp(g.p_min[0], g.p_max[0]);
    }
    if let Some(&k) = on.first() {
        producers[k].must_run = all.clone();
        producers[k].max_startups.clear();
    }
    if let Some(&k) = thermal.iter().rev().find(|k| !on.contains(k)) {
        producers[k].forced_outage = vec![nt / 3, nt / 3 + 1];
    }
    // Energy limits: one thermal unit capped at half its horizon energy, one
    // consumer required to take 60% of its maximum.
    if let Some(&k) = on.get(1).or(thermal.last()) {
        let g = &mut producers[k];
        let e_max: f64 = (0..nt).map(|t| durations[t] * g.p_max[t]).sum();
        g.energy_constraints.push(EnergyConstraint {
            a0: -0.5 * e_max,
            coeffs: (0..nt).map(|t| (t, durations[t])).collect::<BTreeMap<_, _>>(),
        });
    }
    {
        let c = &mut consumers[0];
        let e: f64 = (0..nt).map(|t| durations[t] * c.p_max[t]).sum();
        c.energy_constraints.push(EnergyConstraint {
            a0: 0.6 * e,
            coeffs: (0..nt).map(|t| (t, -durations[t])).collect::<BTreeMap<_, _>>(),
        });
    }

    let mut devices = producers;
    devices.extend(consumers);

    let n_zones = if n > 20 { 2 } else { 1 };
    let zones: Vec<ReserveZone> = (0..n_zones)
        .map(|z| ReserveZone {
            id: format!("z{z}"),
            sigma: 0.05,
            shortage_penalty: 10000.0,
            members: devices
                .iter()
                .filter(|d| {
                    let i: usize = d.bus[3..].parse().expect("generated bus id");
                    i * n_zones / n == z
                })
                .map(|d| d.id.clone())
                .collect(),
        })
        .collect();

    let mut data = InstanceData {
        format_version: FORMAT_VERSION.to_string(),
        base_mva: 100.0,
        intervals: durations.iter().enumerate().map(|(id, &duration)| Interval { id, duration }).collect(),
        buses,
        devices,
        shunts,
        ac_branches,
        dc_branches,
        zones,
        contingencies: Vec::new(),
        penalties: PenaltyParams { c_p: 1e6, c_q: 1e6, c_s: 5e4, c_sw: 1000.0, c_en: 1e5 },
    };

    // Contingencies on a random subset of non-bridge lines, at least one per
    // independent cycle.
    let probe = Instance::new(data.clone());
    let closed = vec![true; data.ac_branches.len()];
    let mut candidates: Vec<usize> = (0..data.ac_branches.len())
        .filter(|&m| build_topology(&probe, &closed, Some(BranchRef::Ac(m))).is_connected())
        .collect();
    candidates.shuffle(&mut rng);
    let cycles = data.ac_branches.len() + data.dc_branches.len() + 1 - n;
    let want = cycles.max(data.ac_branches.len() / 3).min(candidates.len());
    candidates.truncate(want);
    candidates.sort_unstable();
    data.contingencies = candidates
        .into_iter()
        .map(|m| Contingency { id: format!("ctg{m}"), branch: data.ac_branches[m].id.clone() })
        .collect();
    Instance::new(data)
}
