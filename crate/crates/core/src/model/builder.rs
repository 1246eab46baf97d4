//! Programmatic construction of small instances with permissive defaults.

use num_complex::Complex64;

use super::{
    AcBranch, Bus, Contingency, DcBranch, Device, DeviceKind, Instance, InstanceData, Interval, PenaltyParams,
    PwlCurve, ReserveZone, Shunt, FORMAT_VERSION,
};

impl Device {
    /// Device with one flat-priced block covering `[0, p_max]` in every
    /// interval, zero minimum output, no reactive capability, unlimited
    /// ramping and no scheduling restrictions. Starts offline.
    pub fn simple(id: &str, kind: DeviceKind, bus: &str, nt: usize, p_max: f64, price: f64) -> Self {
        Self {
            id: id.to_string(),
            kind,
            bus: bus.to_string(),
            u0: 0,
            p0: 0.0,
            p_min: vec![0.0; nt],
            p_max: vec![p_max; nt],
            q_min: vec![0.0; nt],
            q_max: vec![0.0; nt],
            ramp_up: 1e3,
            ramp_down: 1e3,
            ramp_startup: 1e3,
            ramp_shutdown: 1e3,
            reserve_max: vec![0.0; nt],
            reserve_cost: 0.0,
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            on_cost: 0.0,
            energy_curves: vec![PwlCurve::from_pairs(&[(p_max, price)]); nt],
            must_run: Vec::new(),
            forced_outage: Vec::new(),
            min_uptime: 0.0,
            min_downtime: 0.0,
            max_startups: Vec::new(),
            max_shutdowns: Vec::new(),
            energy_constraints: Vec::new(),
        }
    }
}

impl AcBranch {
    /// Closed line with series admittance `y_sr`, nominal fixed ratio and
    /// generous ratings.
    pub fn simple(id: &str, from: &str, to: &str, y_sr: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            id: id.to_string(),
            from_bus: from.to_string(),
            to_bus: to.to_string(),
            y_sr,
            y_fr: zero,
            y_to: zero,
            tau_min: 1.0,
            tau_max: 1.0,
            phi_min: 0.0,
            phi_max: 0.0,
            s_max: 1e3,
            s_max_ctg: 1e3,
            u0: 1,
        }
    }
}

/// Accumulates components and produces an [`Instance`] with uniform slack
/// shares.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    data: InstanceData,
}

impl InstanceBuilder {
    pub fn new(durations: &[f64]) -> Self {
        Self {
            data: InstanceData {
                format_version: FORMAT_VERSION.to_string(),
                base_mva: 100.0,
                intervals: durations.iter().enumerate().map(|(id, &duration)| Interval { id, duration }).collect(),
                buses: Vec::new(),
                devices: Vec::new(),
                shunts: Vec::new(),
                ac_branches: Vec::new(),
                dc_branches: Vec::new(),
                zones: Vec::new(),
                contingencies: Vec::new(),
                penalties: PenaltyParams { c_p: 1e6, c_q: 1e6, c_s: 5e3, c_sw: 0.0, c_en: 1e4 },
            },
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.data.intervals.len()
    }

    pub fn bus(&mut self, id: &str, v_min: f64, v_max: f64) -> &mut Self {
        self.data.buses.push(Bus { id: id.to_string(), v_min, v_max, alpha: 0.0 });
        self
    }

    pub fn device(&mut self, d: Device) -> &mut Self {
        self.data.devices.push(d);
        self
    }

    pub fn shunt(&mut self, s: Shunt) -> &mut Self {
        self.data.shunts.push(s);
        self
    }

    pub fn ac_branch(&mut self, b: AcBranch) -> &mut Self {
        self.data.ac_branches.push(b);
        self
    }

    pub fn dc_branch(&mut self, b: DcBranch) -> &mut Self {
        self.data.dc_branches.push(b);
        self
    }

    pub fn zone(&mut self, z: ReserveZone) -> &mut Self {
        self.data.zones.push(z);
        self
    }

    pub fn contingency(&mut self, id: &str, branch: &str) -> &mut Self {
        self.data.contingencies.push(Contingency { id: id.to_string(), branch: branch.to_string() });
        self
    }

    pub fn penalties(&mut self, p: PenaltyParams) -> &mut Self {
        self.data.penalties = p;
        self
    }

    pub fn data_mut(&mut self) -> &mut InstanceData {
        &mut self.data
    }

    pub fn build(&self) -> Instance {
        let mut data = self.data.clone();
        let alpha = 1.0 / data.buses.len().max(1) as f64;
        for b in &mut data.buses {
            b.alpha = alpha;
        }
        Instance::new(data)
    }
}
