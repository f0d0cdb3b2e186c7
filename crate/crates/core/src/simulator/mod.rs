//! Discrete-time water-tank process with injectable component faults.
//!
//! Valves move water from the source or from a tank into another tank or
//! the sink. Tank-fed valves follow Torricelli's law, `q = u·k·√h`; the
//! source valve delivers `sourceFlow·u`. Levels advance by explicit Euler.
//! Flows for a step are always computed from the state at step start.

mod knowledge;
mod scenario;

pub use knowledge::{DiagnosisKnowledge, NOMINAL_BAND};
pub use scenario::{
    catalogue, Command, InitialLevels, LabelRow, Labels, NoiseSpec, Params, Scenario, ScenarioError, SimRun,
    StartKeyword, TankConfig,
};

use serde::{Deserialize, Serialize};

use crate::data_model::{SignalSchema, Timestamp};
use crate::prediction::{Component, ComponentKind};

/// Mass-balance tolerance, relative.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Source,
    Sink,
    Tank(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    pub id: String,
    pub area: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valve {
    pub id: String,
    pub from: Node,
    pub to: Node,
    /// Flow coefficient; unused for source valves.
    pub k: f64,
    /// Commanded opening in `[0, 1]`.
    pub opening: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub tanks: Vec<Tank>,
    pub valves: Vec<Valve>,
    /// Pump delivery at full opening, m³/s.
    pub source_flow: f64,
    pub pump: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FaultMode {
    ValveBlock,
    ValveStuck,
    TankLeak,
    PipeJam,
    PumpSlow,
    PumpFast,
}

impl FaultMode {
    pub const ALL: [FaultMode; 6] = [
        FaultMode::ValveBlock,
        FaultMode::ValveStuck,
        FaultMode::TankLeak,
        FaultMode::PipeJam,
        FaultMode::PumpSlow,
        FaultMode::PumpFast,
    ];

    pub fn kind(self) -> ComponentKind {
        match self {
            FaultMode::ValveBlock | FaultMode::ValveStuck | FaultMode::PipeJam => ComponentKind::Valve,
            FaultMode::TankLeak => ComponentKind::Tank,
            FaultMode::PumpSlow | FaultMode::PumpFast => ComponentKind::Pump,
        }
    }

    /// The component failure-mode name this fault activates.
    pub fn mode_name(self) -> &'static str {
        match self {
            FaultMode::ValveBlock => "blocked",
            FaultMode::ValveStuck => "stuck",
            FaultMode::PipeJam => "jammed",
            FaultMode::TankLeak => "leaking",
            FaultMode::PumpSlow => "slow",
            FaultMode::PumpFast => "fast",
        }
    }

    pub fn from_mode_name(name: &str) -> Option<FaultMode> {
        FaultMode::ALL.into_iter().find(|m| m.mode_name() == name)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::ValveBlock => "valveBlock",
            FaultMode::ValveStuck => "valveStuck",
            FaultMode::TankLeak => "tankLeak",
            FaultMode::PipeJam => "pipeJam",
            FaultMode::PumpSlow => "pumpSlow",
            FaultMode::PumpFast => "pumpFast",
        }
    }

    /// Magnitude assumed when a fault is named without one.
    pub fn default_magnitude(self) -> f64 {
        match self {
            FaultMode::ValveBlock | FaultMode::ValveStuck => 1.0,
            FaultMode::PipeJam => 0.3,
            FaultMode::TankLeak => 0.03,
            FaultMode::PumpSlow => 0.5,
            FaultMode::PumpFast => 1.5,
        }
    }
}

impl std::fmt::Display for FaultMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fault active from `onset` on.
///
/// `magnitude` means: k scale for `pipeJam`, leak coefficient for
/// `tankLeak`, delivery factor for pump faults, and a factor on the
/// opening frozen at onset for `valveStuck` (0 closes the valve).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub component: String,
    pub mode: FaultMode,
    pub onset: f64,
    pub magnitude: f64,
}

/// Commands and faults over time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Drive {
    pub commands: Vec<Command>,
    pub faults: Vec<Fault>,
}

/// Effective actuation of every element at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuation {
    pub opening: Vec<f64>,
    pub blocked: Vec<bool>,
    pub k_scale: Vec<f64>,
    pub leak: Vec<f64>,
    pub pump_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: Timestamp,
    /// Head per tank, m.
    pub levels: Vec<f64>,
    /// Flow per valve during the step starting at `t`, m³/s.
    pub flows: Vec<f64>,
    /// Leak outflow per tank during that step, m³/s.
    pub leaks: Vec<f64>,
}

/// Volume accounting for one step, all in m³.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepBalance {
    pub stored: f64,
    pub inflow: f64,
    pub outflow: f64,
    pub leaked: f64,
    pub spilled: f64,
}

impl StepBalance {
    /// `|Δstored − (in − out − leak − spill)|` relative to the step's volume turnover.
    pub fn relative_error(&self) -> f64 {
        let net = self.inflow - self.outflow - self.leaked - self.spilled;
        let scale =
            self.stored.abs().max(self.inflow.abs() + self.outflow.abs() + self.leaked.abs() + self.spilled.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.stored - net).abs() / scale
        }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.source_flow.is_finite() && self.source_flow >= 0.0) {
            return Err("source flow must be finite and non-negative".into());
        }
        let mut ids = std::collections::HashSet::new();
        ids.insert(self.pump.as_str());
        for t in &self.tanks {
            if !(t.area > 0.0 && t.h_max > 0.0 && t.area.is_finite() && t.h_max.is_finite()) {
                return Err(format!("tank {}: area and hMax must be positive", t.id));
            }
            if !ids.insert(&t.id) {
                return Err(format!("duplicate component id {}", t.id));
            }
        }
        for v in &self.valves {
            if !ids.insert(&v.id) {
                return Err(format!("duplicate component id {}", v.id));
            }
            for node in [v.from, v.to] {
                if let Node::Tank(i) = node {
                    if i >= self.tanks.len() {
                        return Err(format!("valve {} references missing tank #{i}", v.id));
                    }
                }
            }
            if v.from == Node::Sink || v.to == Node::Source {
                return Err(format!("valve {} flows against the source/sink direction", v.id));
            }
            if v.from != Node::Source && !(v.k > 0.0 && v.k.is_finite()) {
                return Err(format!("valve {}: k must be positive", v.id));
            }
            if !(0.0..=1.0).contains(&v.opening) {
                return Err(format!("valve {}: opening must lie in [0, 1]", v.id));
            }
        }
        Ok(())
    }

    pub fn tank_index(&self, id: &str) -> Option<usize> {
        self.tanks.iter().position(|t| t.id == id)
    }

    pub fn valve_index(&self, id: &str) -> Option<usize> {
        self.valves.iter().position(|v| v.id == id)
    }

    /// Tanks first, then valves, then the pump.
    pub fn components(&self) -> Vec<Component> {
        let tanks = self.tanks.iter().map(|t| Component::new(&t.id, ComponentKind::Tank));
        let valves = self.valves.iter().map(|v| Component::new(&v.id, ComponentKind::Valve));
        tanks.chain(valves).chain(std::iter::once(Component::new(&self.pump, ComponentKind::Pump))).collect()
    }

    /// One flow signal per valve, then one level signal per tank.
    pub fn schema(&self) -> SignalSchema {
        let flows = self.valves.iter().map(|v| (format!("{}_flow", v.id), "m3/s"));
        let levels = self.tanks.iter().map(|t| (format!("{}_level", t.id), "m"));
        SignalSchema::new(flows.chain(levels)).expect("component ids are unique identifiers")
    }

    pub fn signal_count(&self) -> usize {
        self.valves.len() + self.tanks.len()
    }

    pub fn level_signal(&self, tank: usize) -> usize {
        self.valves.len() + tank
    }

    /// Emitted signal vector for a state.
    pub fn signals(&self, state: &SimState) -> Vec<f64> {
        state.flows.iter().chain(&state.levels).copied().collect()
    }

    /// Valves entering and leaving tank `i`.
    pub fn valves_of(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let inflow = (0..self.valves.len()).filter(|&j| self.valves[j].to == Node::Tank(i)).collect();
        let outflow = (0..self.valves.len()).filter(|&j| self.valves[j].from == Node::Tank(i)).collect();
        (inflow, outflow)
    }

    /// Flows and leaks for a step from `levels` under `act`. Outflows of a
    /// tank are scaled down together when they would empty it within `dt`.
    pub fn flows(&self, levels: &[f64], act: &Actuation, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let mut flows: Vec<f64> = self
            .valves
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if act.blocked[j] {
                    return 0.0;
                }
                let u = act.opening[j];
                match v.from {
                    Node::Source => self.source_flow * act.pump_factor * u * act.k_scale[j],
                    Node::Tank(i) => u * v.k * act.k_scale[j] * levels[i].max(0.0).sqrt(),
                    Node::Sink => 0.0,
                }
            })
            .collect();
        let mut leaks: Vec<f64> = levels.iter().zip(&act.leak).map(|(&h, &c)| c * h.max(0.0).sqrt()).collect();
        for (i, tank) in self.tanks.iter().enumerate() {
            let outs: Vec<usize> = (0..self.valves.len()).filter(|&j| self.valves[j].from == Node::Tank(i)).collect();
            let total: f64 = outs.iter().map(|&j| flows[j]).sum::<f64>() + leaks[i];
            let available = levels[i].max(0.0) * tank.area / dt;
            if total > available {
                let s = available / total;
                for &j in &outs {
                    flows[j] *= s;
                }
                leaks[i] *= s;
            }
        }
        (flows, leaks)
    }

    /// State at `t` with the given levels and the flows they drive.
    pub fn state_at(&self, t: f64, levels: Vec<f64>, drive: &Drive, dt: f64) -> SimState {
        let act = drive.actuation_at(self, t);
        let (flows, leaks) = self.flows(&levels, &act, dt);
        SimState { t: Timestamp::new(t).expect("valid time"), levels, flows, leaks }
    }

    /// Advances `state` by `dt`.
    pub fn step(&self, state: &SimState, drive: &Drive, dt: f64) -> SimState {
        self.step_with_balance(state, drive, dt).0
    }

    pub fn step_with_balance(&self, state: &SimState, drive: &Drive, dt: f64) -> (SimState, StepBalance) {
        let mut balance = StepBalance::default();
        let mut levels = state.levels.clone();
        let mut net = vec![0.0; self.tanks.len()];
        for (j, v) in self.valves.iter().enumerate() {
            let q = state.flows[j];
            match v.from {
                Node::Source => balance.inflow += q * dt,
                Node::Tank(i) => net[i] -= q,
                Node::Sink => {}
            }
            match v.to {
                Node::Sink => balance.outflow += q * dt,
                Node::Tank(i) => net[i] += q,
                Node::Source => {}
            }
        }
        for (i, tank) in self.tanks.iter().enumerate() {
            net[i] -= state.leaks[i];
            balance.leaked += state.leaks[i] * dt;
            let before = levels[i];
            let mut h = before + dt * net[i] / tank.area;
            if h > tank.h_max {
                balance.spilled += (h - tank.h_max) * tank.area;
                h = tank.h_max;
            }
            let h = h.max(0.0);
            levels[i] = h;
            balance.stored += (h - before) * tank.area;
        }
        let t = state.t.secs() + dt;
        (self.state_at(t, levels, drive, dt), balance)
    }

    /// Fault-free equilibrium reached from empty tanks, or `None` if the
    /// levels still move after `max_steps`.
    pub fn steady_state(&self, drive: &Drive, dt: f64, max_steps: usize) -> Option<SimState> {
        let mut s = self.state_at(0.0, vec![0.0; self.tanks.len()], drive, dt);
        for _ in 0..max_steps {
            let next = self.step(&s, drive, dt);
            let moved = next.levels.iter().zip(&s.levels).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            s = next;
            if moved < 1e-13 {
                return Some(s);
            }
        }
        None
    }
}

impl Drive {
    pub fn commanded_opening(&self, topo: &Topology, valve: usize, t: f64) -> f64 {
        let id = &topo.valves[valve].id;
        self.commands
            .iter()
            .filter(|c| &c.valve == id && c.at <= t + 1e-9)
            .max_by(|a, b| a.at.total_cmp(&b.at))
            .map_or(topo.valves[valve].opening, |c| c.opening)
    }

    pub fn actuation_at(&self, topo: &Topology, t: f64) -> Actuation {
        let nv = topo.valves.len();
        let mut act = Actuation {
            opening: (0..nv).map(|j| self.commanded_opening(topo, j, t)).collect(),
            blocked: vec![false; nv],
            k_scale: vec![1.0; nv],
            leak: vec![0.0; topo.tanks.len()],
            pump_factor: 1.0,
        };
        for f in self.faults.iter().filter(|f| t + 1e-9 >= f.onset) {
            match f.mode {
                FaultMode::ValveBlock | FaultMode::ValveStuck | FaultMode::PipeJam => {
                    let Some(j) = topo.valve_index(&f.component) else { continue };
                    match f.mode {
                        FaultMode::ValveBlock => act.blocked[j] = true,
                        FaultMode::PipeJam => act.k_scale[j] *= f.magnitude,
                        _ => act.opening[j] = f.magnitude * self.commanded_opening(topo, j, f.onset),
                    }
                }
                FaultMode::TankLeak => {
                    if let Some(i) = topo.tank_index(&f.component) {
                        act.leak[i] += f.magnitude;
                    }
                }
                FaultMode::PumpSlow | FaultMode::PumpFast => act.pump_factor *= f.magnitude,
            }
        }
        act
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_tank(q: f64) -> Topology {
        Topology {
            tanks: vec![Tank { id: "t0".into(), area: 2.0, h_max: 100.0 }],
            valves: vec![Valve { id: "v0".into(), from: Node::Source, to: Node::Tank(0), k: 1.0, opening: 1.0 }],
            source_flow: q,
            pump: "pump".into(),
        }
    }

    #[test]
    fn zero_inflow_fixed_point() {
        let topo = closed_tank(0.0);
        let drive = Drive::default();
        let mut s = topo.state_at(0.0, vec![0.0], &drive, 1.0);
        for _ in 0..10 {
            s = topo.step(&s, &drive, 1.0);
        }
        assert_eq!(s.levels, vec![0.0]);
    }

    #[test]
    fn closed_tank_fills_linearly() {
        let (q, area, dt) = (0.25, 2.0, 0.5);
        let topo = closed_tank(q);
        let drive = Drive::default();
        let mut s = topo.state_at(0.0, vec![0.0], &drive, dt);
        for _ in 0..40 {
            s = topo.step(&s, &drive, dt);
        }
        assert_eq!(s.levels[0], q * 20.0 / area);
    }

    #[test]
    fn spill_is_accounted_at_the_rim() {
        let mut topo = closed_tank(1.0);
        topo.tanks[0].h_max = 1.0;
        let drive = Drive::default();
        let mut s = topo.state_at(0.0, vec![0.9], &drive, 1.0);
        let (next, bal) = topo.step_with_balance(&s, &drive, 1.0);
        assert_eq!(next.levels[0], 1.0);
        // 0.9 + 1·1/A overshoots the rim; the excess volume spills
        let area = topo.tanks[0].area;
        assert!((bal.spilled - ((0.9 + 1.0 / area - 1.0) * area)).abs() < 1e-12);
        assert!(bal.relative_error() < 1e-12);
        s = next;
        assert_eq!(topo.step(&s, &drive, 1.0).levels[0], 1.0);
    }

    #[test]
    fn outflow_never_overdraws_a_tank() {
        let topo = Topology {
            tanks: vec![Tank { id: "t0".into(), area: 1.0, h_max: 2.0 }],
            valves: vec![Valve { id: "v0".into(), from: Node::Tank(0), to: Node::Sink, k: 5.0, opening: 1.0 }],
            source_flow: 0.0,
            pump: "pump".into(),
        };
        let drive = Drive {
            faults: vec![Fault { component: "t0".into(), mode: FaultMode::TankLeak, onset: 0.0, magnitude: 3.0 }],
            ..Drive::default()
        };
        let s = topo.state_at(0.0, vec![0.01], &drive, 1.0);
        let (next, bal) = topo.step_with_balance(&s, &drive, 1.0);
        assert_eq!(next.levels[0], 0.0);
        assert!(bal.relative_error() < 1e-12);
        assert!(s.flows[0] >= 0.0 && s.leaks[0] >= 0.0);
    }

    #[test]
    fn stuck_valve_freezes_commanded_opening() {
        let topo = closed_tank(1.0);
        let drive = Drive {
            commands: vec![Command { valve: "v0".into(), at: 10.0, opening: 0.2 }],
            faults: vec![Fault { component: "v0".into(), mode: FaultMode::ValveStuck, onset: 5.0, magnitude: 1.0 }],
        };
        assert_eq!(drive.actuation_at(&topo, 20.0).opening[0], 1.0);
        let closed = Drive { faults: vec![Fault { magnitude: 0.0, ..drive.faults[0].clone() }], ..drive.clone() };
        assert_eq!(closed.actuation_at(&topo, 20.0).opening[0], 0.0);
        assert_eq!(Drive { faults: vec![], ..drive }.actuation_at(&topo, 20.0).opening[0], 0.2);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in FaultMode::ALL {
            assert_eq!(FaultMode::from_mode_name(m.mode_name()), Some(m));
        }
    }
}
