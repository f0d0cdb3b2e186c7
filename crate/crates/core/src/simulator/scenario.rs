//! Scenario files, the built-in plant configurations and the fault catalogue.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Drive, Fault, FaultMode, Node, SimState, StepBalance, Tank, Topology, Valve};
use crate::data_model::{DataError, DataStore, Sample};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TankConfig {
    #[serde(rename = "a_tank")]
    ATank,
    #[serde(rename = "3_tanks")]
    ThreeTanks,
    #[serde(rename = "4_tanks")]
    FourTanks,
}

impl TankConfig {
    pub const ALL: [TankConfig; 3] = [TankConfig::ATank, TankConfig::ThreeTanks, TankConfig::FourTanks];

    pub fn as_str(self) -> &'static str {
        match self {
            TankConfig::ATank => "a_tank",
            TankConfig::ThreeTanks => "3_tanks",
            TankConfig::FourTanks => "4_tanks",
        }
    }

    pub fn parse(s: &str) -> Option<TankConfig> {
        TankConfig::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Plant fixture. Valve coefficients put the fault-free equilibrium of
    /// every tank well inside `(0.2, 1.8)` m.
    pub fn topology(self) -> Topology {
        let tank = |id: &str| Tank { id: id.into(), area: 1.0, h_max: 2.0 };
        let valve = |id: &str, from, to, k| Valve { id: id.into(), from, to, k, opening: 1.0 };
        use Node::{Sink, Source, Tank as T};
        match self {
            TankConfig::ATank => Topology {
                tanks: vec![tank("t1")],
                valves: vec![valve("v0", Source, T(0), 1.0), valve("v1", T(0), Sink, 0.1)],
                source_flow: 0.1,
                pump: "pump".into(),
            },
            TankConfig::ThreeTanks => Topology {
                tanks: vec![tank("t1"), tank("t2"), tank("t3")],
                valves: vec![
                    valve("v0", Source, T(0), 1.0),
                    valve("v1", T(0), T(1), 0.0913),
                    valve("v2", T(1), T(2), 0.1),
                    valve("v3", T(2), Sink, 0.1118),
                ],
                source_flow: 0.1,
                pump: "pump".into(),
            },
            TankConfig::FourTanks => Topology {
                tanks: vec![tank("t0"), tank("t1"), tank("t2"), tank("t3")],
                valves: vec![
                    valve("v0", Source, T(0), 1.0),
                    valve("v1", T(0), T(1), 0.05),
                    valve("v2", T(0), T(2), 0.05),
                    valve("v3", T(0), T(3), 0.05),
                    valve("v4", T(1), T(3), 0.0559),
                    valve("v5", T(2), T(3), 0.0559),
                    valve("v6", T(3), Sink, 0.1369),
                ],
                source_flow: 0.15,
                pump: "pump".into(),
            },
        }
    }
}

impl std::fmt::Display for TankConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named faults per configuration, onset left at zero.
pub fn catalogue(config: TankConfig) -> Vec<(&'static str, Fault)> {
    let f = |c: &str, mode, magnitude| Fault { component: c.into(), mode, onset: 0.0, magnitude };
    use FaultMode::*;
    match config {
        TankConfig::ATank => vec![
            ("pumpSlow", f("pump", PumpSlow, 0.5)),
            ("tank1_leak", f("t1", TankLeak, 0.05)),
            ("valve0Block", f("v0", ValveBlock, 1.0)),
            ("valve1Block", f("v1", ValveBlock, 1.0)),
            ("valve1Stuck", f("v1", ValveStuck, 1.0)),
        ],
        TankConfig::FourTanks => vec![
            ("pipe4_jam", f("v4", PipeJam, 0.3)),
            ("tank2_leak", f("t2", TankLeak, 0.03)),
            ("valve3_jam", f("v3", ValveStuck, 0.4)),
            ("valve6_jam", f("v6", ValveStuck, 0.5)),
            ("valve0Block", f("v0", ValveBlock, 1.0)),
        ],
        TankConfig::ThreeTanks => vec![
            ("pumpFast", f("pump", PumpFast, 1.3)),
            ("pumpSlow", f("pump", PumpSlow, 0.6)),
            ("tank1Leak", f("t1", TankLeak, 0.04)),
            ("tank2Leak", f("t2", TankLeak, 0.04)),
            ("valve2Closed", f("v2", ValveStuck, 0.0)),
            ("valve3Closed", f("v3", ValveStuck, 0.0)),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Command {
    pub valve: String,
    pub at: f64,
    pub opening: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NoiseKeyword {
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NoiseRepr {
    Uniform(f64),
    PerSignal(Vec<f64>),
    Keyword(NoiseKeyword),
}

/// Measurement noise: `"auto"` is 1 % of each signal's fault-free
/// steady-state magnitude; a number applies to every signal; a list gives
/// one σ per signal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "NoiseRepr", into = "NoiseRepr")]
pub enum NoiseSpec {
    Uniform(f64),
    PerSignal(Vec<f64>),
    #[default]
    Auto,
}

impl From<NoiseRepr> for NoiseSpec {
    fn from(r: NoiseRepr) -> Self {
        match r {
            NoiseRepr::Uniform(s) => NoiseSpec::Uniform(s),
            NoiseRepr::PerSignal(v) => NoiseSpec::PerSignal(v),
            NoiseRepr::Keyword(NoiseKeyword::Auto) => NoiseSpec::Auto,
        }
    }
}

impl From<NoiseSpec> for NoiseRepr {
    fn from(n: NoiseSpec) -> Self {
        match n {
            NoiseSpec::Uniform(s) => NoiseRepr::Uniform(s),
            NoiseSpec::PerSignal(v) => NoiseRepr::PerSignal(v),
            NoiseSpec::Auto => NoiseRepr::Keyword(NoiseKeyword::Auto),
        }
    }
}

pub const AUTO_NOISE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartKeyword {
    Empty,
    Steady,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialLevels {
    Keyword(StartKeyword),
    Explicit(BTreeMap<String, f64>),
}

impl Default for InitialLevels {
    fn default() -> Self {
        InitialLevels::Keyword(StartKeyword::Empty)
    }
}

/// Overrides of the plant fixture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_flow: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub valve_k: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub valve_opening: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tank_area: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tank_h_max: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultEntry {
    component: String,
    mode: FaultMode,
    onset: f64,
    magnitude: Option<f64>,
}

impl From<FaultEntry> for Fault {
    fn from(e: FaultEntry) -> Self {
        Fault {
            magnitude: e.magnitude.unwrap_or_else(|| e.mode.default_magnitude()),
            component: e.component,
            mode: e.mode,
            onset: e.onset,
        }
    }
}

fn deserialize_faults<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Fault>, D::Error> {
    Vec::<FaultEntry>::deserialize(d).map(|v| v.into_iter().map(Fault::from).collect())
}

fn default_dt() -> f64 {
    1.0
}
fn default_duration() -> f64 {
    600.0
}
fn default_backend() -> String {
    "knn-kde".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub config: TankConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default)]
    pub noise_sigma: NoiseSpec,
    #[serde(default)]
    pub initial: InitialLevels,
    #[serde(default)]
    pub params: Params,
    #[serde(default, deserialize_with = "deserialize_faults")]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub commands: Vec<Command>,
}

impl Scenario {
    /// Fault-free defaults for `config`.
    pub fn new(config: TankConfig) -> Self {
        Scenario {
            config,
            name: None,
            dt: default_dt(),
            duration: default_duration(),
            seed: 0,
            backend: default_backend(),
            noise_sigma: NoiseSpec::Auto,
            initial: InitialLevels::default(),
            params: Params::default(),
            faults: Vec::new(),
            commands: Vec::new(),
        }
    }

    /// Adds the catalogue fault `name` with the given onset.
    pub fn with_fault(mut self, name: &str, onset: f64) -> Result<Self, ScenarioError> {
        let (_, mut fault) = catalogue(self.config)
            .into_iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::Invalid(format!("no fault `{name}` for {}", self.config)))?;
        fault.onset = onset;
        self.faults.push(fault);
        self.name.get_or_insert_with(|| name.to_string());
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Scenario::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return bad(format!("duration {} must be at least dt {}", self.duration, self.dt));
        }
        let topo = self.topology()?;
        let components = topo.components();
        for f in &self.faults {
            let Some(c) = components.iter().find(|c| c.id == f.component) else {
                return bad(format!("fault on unknown component `{}`", f.component));
            };
            if c.kind != f.mode.kind() {
                return bad(format!("mode {} does not apply to {:?} `{}`", f.mode, c.kind, c.id));
            }
            if !(f.onset >= 0.0 && f.onset.is_finite()) {
                return bad(format!("fault onset must be non-negative, got {}", f.onset));
            }
            if !(f.magnitude >= 0.0 && f.magnitude.is_finite()) {
                return bad(format!("fault magnitude must be non-negative, got {}", f.magnitude));
            }
            match f.mode {
                FaultMode::PumpSlow if f.magnitude > 1.0 => return bad("pumpSlow magnitude must be ≤ 1".into()),
                FaultMode::PumpFast if f.magnitude < 1.0 => return bad("pumpFast magnitude must be ≥ 1".into()),
                _ => {}
            }
        }
        for c in &self.commands {
            if topo.valve_index(&c.valve).is_none() {
                return bad(format!("command for unknown valve `{}`", c.valve));
            }
            if !(0.0..=1.0).contains(&c.opening) || c.at.is_nan() || c.at < 0.0 {
                return bad(format!("command for `{}` out of range", c.valve));
            }
        }
        let n = topo.signal_count();
        match &self.noise_sigma {
            NoiseSpec::Uniform(s) if !(*s >= 0.0 && s.is_finite()) => return bad("noise sigma must be ≥ 0".into()),
            NoiseSpec::PerSignal(v) if v.len() != n => {
                return bad(format!("noise_sigma lists {} values for {n} signals", v.len()))
            }
            NoiseSpec::PerSignal(v) if v.iter().any(|s| !(*s >= 0.0 && s.is_finite())) => {
                return bad("noise sigma must be ≥ 0".into())
            }
            _ => {}
        }
        if let InitialLevels::Explicit(m) = &self.initial {
            for (id, h) in m {
                let Some(i) = topo.tank_index(id) else { return bad(format!("initial level for unknown tank `{id}`")) };
                if !(0.0..=topo.tanks[i].h_max).contains(h) {
                    return bad(format!("initial level of `{id}` outside [0, hMax]"));
                }
            }
        }
        Ok(())
    }

    /// The plant fixture with this scenario's overrides applied.
    pub fn topology(&self) -> Result<Topology, ScenarioError> {
        let mut topo = self.config.topology();
        let p = &self.params;
        if let Some(q) = p.source_flow {
            topo.source_flow = q;
        }
        let unknown = |what: &str, id: &str| ScenarioError::Invalid(format!("{what} override for unknown `{id}`"));
        for (id, &k) in &p.valve_k {
            let j = topo.valve_index(id).ok_or_else(|| unknown("k", id))?;
            topo.valves[j].k = k;
        }
        for (id, &u) in &p.valve_opening {
            let j = topo.valve_index(id).ok_or_else(|| unknown("opening", id))?;
            topo.valves[j].opening = u;
        }
        for (id, &a) in &p.tank_area {
            let i = topo.tank_index(id).ok_or_else(|| unknown("area", id))?;
            topo.tanks[i].area = a;
        }
        for (id, &h) in &p.tank_h_max {
            let i = topo.tank_index(id).ok_or_else(|| unknown("hMax", id))?;
            topo.tanks[i].h_max = h;
        }
        topo.validate().map_err(ScenarioError::Invalid)?;
        Ok(topo)
    }

    pub fn drive(&self) -> Drive {
        Drive { commands: self.commands.clone(), faults: self.faults.clone() }
    }

    /// Commands only; the fault-free counterpart of [`Scenario::drive`].
    pub fn nominal_drive(&self) -> Drive {
        Drive { commands: self.commands.clone(), faults: Vec::new() }
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    /// Fault-free equilibrium of the plant.
    pub fn steady_state(&self) -> Result<SimState, ScenarioError> {
        let topo = self.topology()?;
        topo.steady_state(&self.nominal_drive(), self.dt, 1_000_000)
            .ok_or_else(|| ScenarioError::Invalid("plant has no steady state".into()))
    }

    pub fn noise_sigmas(&self) -> Result<Vec<f64>, ScenarioError> {
        let topo = self.topology()?;
        Ok(match &self.noise_sigma {
            NoiseSpec::Uniform(s) => vec![*s; topo.signal_count()],
            NoiseSpec::PerSignal(v) => v.clone(),
            NoiseSpec::Auto => {
                let ss = self.steady_state()?;
                topo.signals(&ss).iter().map(|v| AUTO_NOISE_FRACTION * v.abs()).collect()
            }
        })
    }

    pub fn initial_state(&self) -> Result<SimState, ScenarioError> {
        let topo = self.topology()?;
        let levels = match &self.initial {
            InitialLevels::Keyword(StartKeyword::Empty) => vec![0.0; topo.tanks.len()],
            InitialLevels::Keyword(StartKeyword::Steady) => self.steady_state()?.levels,
            InitialLevels::Explicit(m) => topo.tanks.iter().map(|t| m.get(&t.id).copied().unwrap_or(0.0)).collect(),
        };
        Ok(topo.state_at(0.0, levels, &self.drive(), self.dt))
    }

    /// Label of time `t`: the active faults' modes, or `stable`.
    pub fn label_at(&self, t: f64) -> (bool, String) {
        let active: Vec<&str> = self.faults.iter().filter(|f| t + 1e-9 >= f.onset).map(|f| f.mode.as_str()).collect();
        if active.is_empty() {
            (false, "stable".into())
        } else {
            (true, active.join("+"))
        }
    }

    /// Runs the scenario: samples at `0, dt, 2dt, …` with seeded
    /// measurement noise on the emitted signals only.
    pub fn run(&self) -> Result<SimRun, ScenarioError> {
        self.validate()?;
        let topo = self.topology()?;
        let drive = self.drive();
        let sigmas = self.noise_sigmas()?;
        let noise: Vec<Option<Normal<f64>>> =
            sigmas.iter().map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite sigma"))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let schema = topo.schema();
        let mut data = DataStore::new(schema.clone());
        let mut clean = DataStore::new(schema);
        let mut labels = Labels::default();
        let mut balances = Vec::new();
        let mut state = self.initial_state()?;
        let n = self.sample_count();
        for k in 0..n {
            let t = k as f64 * self.dt;
            if k > 0 {
                let (mut next, bal) = topo.step_with_balance(&state, &drive, self.dt);
                // keep sample times on the exact grid
                if (next.t.secs() - t).abs() > 0.0 {
                    next = topo.state_at(t, next.levels, &drive, self.dt);
                }
                balances.push(bal);
                state = next;
            }
            let truth = topo.signals(&state);
            let noisy = truth.iter().zip(&noise).map(|(&v, d)| d.map_or(v, |d| v + d.sample(&mut rng))).collect();
            let insert = |store: &mut DataStore, x| store.ingest(Sample::new(t, x)?);
            insert(&mut data, noisy).map_err(data_err)?;
            insert(&mut clean, truth).map_err(data_err)?;
            let (anomalous, label) = self.label_at(t);
            labels.rows.push(LabelRow { t, is_anomalous: anomalous, label });
        }
        Ok(SimRun { data, clean, labels, balances })
    }
}

fn data_err(e: DataError) -> ScenarioError {
    ScenarioError::Invalid(e.to_string())
}

#[derive(Debug, Clone)]
pub struct SimRun {
    /// Emitted signals, noise included.
    pub data: DataStore,
    /// Internal state signals, noise-free.
    pub clean: DataStore,
    pub labels: Labels,
    /// One entry per step between consecutive samples.
    pub balances: Vec<StepBalance>,
}

impl SimRun {
    pub fn max_balance_error(&self) -> f64 {
        self.balances.iter().map(StepBalance::relative_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub t: f64,
    pub is_anomalous: bool,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labels {
    pub rows: Vec<LabelRow>,
}

impl Labels {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ScenarioError> {
        let io = |e: csv::Error| ScenarioError::Io(e.to_string());
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "is_anomalous", "label"]).map_err(io)?;
        for r in &self.rows {
            let flag = if r.is_anomalous { "1" } else { "0" };
            out.write_record([crate::data_model::format_value(r.t).as_str(), flag, &r.label]).map_err(io)?;
        }
        out.flush().map_err(|e| ScenarioError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ScenarioError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ScenarioError::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let parse_err = |m: &str| ScenarioError::Parse { line, message: m.to_string() };
            let t: f64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("bad time"))?;
            let is_anomalous = match rec.get(1) {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(parse_err("is_anomalous must be 0 or 1")),
            };
            let label = rec.get(2).unwrap_or("").to_string();
            rows.push(LabelRow { t, is_anomalous, label });
        }
        Ok(Labels { rows })
    }

    pub fn load_csv(path: impl AsRef<std::path::Path>) -> Result<Self, ScenarioError> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Labels::read_csv(std::io::BufReader::new(f))
    }

    /// Label at time `t`, matched within a nanosecond.
    pub fn at(&self, t: f64) -> Option<&LabelRow> {
        let i = self.rows.partition_point(|r| r.t < t - 1e-9);
        self.rows.get(i).filter(|r| (r.t - t).abs() <= 1e-9)
    }
}
