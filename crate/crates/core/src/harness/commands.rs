//! File-level commands. Each writes a JSON artifact and returns a value the
//! binary renders as a table.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{detect, DetectReport, HarnessError, Split};
use crate::causality::{parse_multiset, CausalModel};
use crate::data_model::DataStore;
use crate::diagnosis::{self, format_rules, parse_rules, Diagnosis};
use crate::planning::{apply_step, plan, ProductMultiset};
use crate::prediction::PlantModel;
use crate::simulator::{DiagnosisKnowledge, Fault, Labels, Scenario};

pub const DATA_FILE: &str = "data.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const RULES_FILE: &str = "model.rules";
pub const DEFINITIONS_FILE: &str = "model.defs";
pub const DETECT_FILE: &str = "detect.json";
pub const DIAGNOSIS_FILE: &str = "diagnosis.json";
pub const REPORT_FILE: &str = "report.json";

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::validation(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    serde_json::from_str(&read(path)?).map_err(|e| HarnessError::validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config: String,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub backend: String,
    pub faults: Vec<Fault>,
    pub samples: usize,
    pub max_balance_error: f64,
    pub files: Vec<String>,
}

/// Runs the scenario file and writes data, labels, manifest, a copy of the
/// scenario and the generated diagnosis knowledge into `out`.
pub fn simulate(scenario_path: &Path, out: &Path) -> Result<Manifest, HarnessError> {
    let sc = Scenario::parse(&read(scenario_path)?)?;
    let run = sc.run()?;
    let knowledge = DiagnosisKnowledge::for_scenario(&sc)?;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(format!("{}: {e}", out.display())))?;
    run.data.save_csv(out.join(DATA_FILE))?;
    let labels = fs::File::create(out.join(LABELS_FILE))?;
    run.labels.write_csv(std::io::BufWriter::new(labels))?;
    fs::write(out.join(SCENARIO_FILE), sc.to_toml())?;
    fs::write(out.join(RULES_FILE), format_rules(&knowledge.rules))?;
    fs::write(out.join(DEFINITIONS_FILE), knowledge.model.to_definitions(&knowledge.bindings))?;
    let name = sc.name.clone().unwrap_or_else(|| {
        scenario_path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    });
    let manifest = Manifest {
        name,
        config: sc.config.as_str().into(),
        seed: sc.seed,
        dt: sc.dt,
        duration: sc.duration,
        backend: sc.backend.clone(),
        faults: sc.faults.clone(),
        samples: run.data.len(),
        max_balance_error: run.max_balance_error(),
        files: [DATA_FILE, LABELS_FILE, SCENARIO_FILE, RULES_FILE, DEFINITIONS_FILE, MANIFEST_FILE]
            .map(String::from)
            .to_vec(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// [`detect`] over CSV files. The scenario file, when given, names the
/// configuration and supplies the plant for the physics backend.
pub fn detect_files(
    train: &Path,
    test: &Path,
    labels: &Path,
    backend: &str,
    scenario: Option<&Path>,
    split: Split,
) -> Result<DetectReport, HarnessError> {
    let sc = scenario.map(|p| read(p).and_then(|t| Ok(Scenario::parse(&t)?))).transpose()?;
    let plant = match &sc {
        Some(sc) => Some(PlantModel { topology: sc.topology()?, commands: sc.commands.clone(), dt: sc.dt }),
        None => None,
    };
    let train = DataStore::load_csv(train)?;
    let test = DataStore::load_csv(test)?;
    let labels = Labels::load_csv(labels)?;
    let report = detect(&train, &test, &labels, backend, plant.as_ref(), split)?;
    Ok(report.with_config(sc.as_ref().map_or("-", |s| s.config.as_str())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointResult {
    pub t: f64,
    pub observed_true: Vec<String>,
    pub observed_false: Vec<String>,
    /// Whether the observations fit the all-OK model.
    pub nominal: bool,
    pub cardinality: usize,
    pub diagnoses: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub run: String,
    pub components: Vec<String>,
    pub checkpoints: Vec<CheckpointResult>,
}

/// Checkpoint times: `at` when given, otherwise every `every` seconds after
/// the first sample plus the last sample.
fn checkpoints(store: &DataStore, at: &[f64], every: f64) -> Result<Vec<f64>, HarnessError> {
    if !at.is_empty() {
        return Ok(at.to_vec());
    }
    if every.is_nan() || every <= 0.0 {
        return Err(HarnessError::validation("checkpoint spacing must be positive"));
    }
    let (first, last) = store.time_range()?;
    let (first, last) = (first.secs(), last.secs());
    let mut out = Vec::new();
    let mut k = 1.0;
    while first + k * every < last {
        out.push(first + k * every);
        k += 1.0;
    }
    out.push(last);
    Ok(out)
}

/// Diagnoses a simulated run at each checkpoint. Concepts and predicate
/// bindings come from the definitions file `bindings_path`; the component
/// set from the run's scenario copy, or from the rule guards without one.
pub fn diagnose_run(
    rules_path: &Path,
    run_dir: &Path,
    bindings_path: &Path,
    at: &[f64],
    every: f64,
) -> Result<DiagnosisReport, HarnessError> {
    let rules = parse_rules(&read(rules_path)?)?;
    let store = DataStore::load_csv(run_dir.join(DATA_FILE))?;
    let scenario_path = run_dir.join(SCENARIO_FILE);
    let components: BTreeSet<String> = if scenario_path.exists() {
        let sc = Scenario::parse(&read(&scenario_path)?)?;
        sc.topology()?.components().into_iter().map(|c| c.id).collect()
    } else {
        rules.iter().flat_map(|r| r.ok.iter().cloned()).collect()
    };
    let names = store.schema().names().map(String::from).collect();
    let mut model = CausalModel::new(names, components.iter().cloned());
    let bindings = model.load_definitions(&read(bindings_path)?)?;
    let mut out = Vec::new();
    for t in checkpoints(&store, at, every)? {
        let obs = diagnosis::observations_at(&store, &model, &bindings, t)?;
        let found = diagnosis::diagnose(&rules, &obs, &components)?;
        let nominal = found.first().is_some_and(|d| d.suspects.is_empty());
        out.push(CheckpointResult {
            t,
            observed_true: obs.as_true.into_iter().collect(),
            observed_false: obs.as_false.into_iter().collect(),
            nominal,
            cardinality: found.first().map_or(0, Diagnosis::cardinality),
            diagnoses: found.into_iter().map(|d| d.suspects.into_iter().collect()).collect(),
        });
    }
    Ok(DiagnosisReport {
        run: run_dir.display().to_string(),
        components: components.into_iter().collect(),
        checkpoints: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub initial: String,
    pub goal: String,
    pub steps: Vec<String>,
    pub final_state: String,
}

/// Plans over the `step` records of a definitions file. `available` limits
/// the usable components; `None` means every declared component.
pub fn plan_files(
    steps_path: &Path,
    initial: &str,
    goal: &str,
    available: Option<&[String]>,
    max_depth: usize,
) -> Result<PlanReport, HarnessError> {
    let mut model = CausalModel::default();
    model.load_definitions(&read(steps_path)?)?;
    let initial_set: ProductMultiset = parse_multiset(initial)?;
    let goal_set: ProductMultiset = parse_multiset(goal)?;
    let known: BTreeSet<&str> = model.products().map(|p| p.as_str()).collect();
    for p in initial_set.ids().chain(goal_set.ids()) {
        if !known.contains(p.as_str()) {
            return Err(HarnessError::validation(format!("unknown product `{p}`")));
        }
    }
    let available: BTreeSet<String> = match available {
        Some(list) => list.iter().cloned().collect(),
        None => model.components().cloned().collect(),
    };
    let steps = model.product_causalities();
    let found = plan(steps, &initial_set, &goal_set, &available, max_depth)?;
    let mut state = initial_set.clone();
    for name in &found.steps {
        let step = steps.iter().find(|s| &s.name == name).expect("plan uses known steps");
        state = apply_step(&state, step)?;
    }
    Ok(PlanReport {
        initial: initial_set.to_string(),
        goal: goal_set.to_string(),
        steps: found.steps,
        final_state: state.to_string(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<Manifest>,
    pub detection: Vec<DetectReport>,
    pub diagnosis: Vec<DiagnosisReport>,
}

fn collect(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() && depth > 0 {
            collect(&p, depth - 1, out)?;
        } else if p.is_file() {
            out.push(p);
        }
    }
    Ok(())
}

/// Gathers manifests, detection and diagnosis results below `dir` (three
/// levels deep) and writes them together to `dir/report.json`.
pub fn report_dir(dir: &Path) -> Result<Report, HarnessError> {
    let mut files = Vec::new();
    collect(dir, 3, &mut files)?;
    let mut report = Report::default();
    for f in files {
        match f.file_name().and_then(|n| n.to_str()) {
            Some(MANIFEST_FILE) => report.runs.push(read_json(&f)?),
            Some(DETECT_FILE) => report.detection.push(read_json(&f)?),
            Some(DIAGNOSIS_FILE) => report.diagnosis.push(read_json(&f)?),
            _ => {}
        }
    }
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

pub fn render_detect(r: &DetectReport) -> String {
    let mut s = String::new();
    let _ =
        writeln!(s, "config   fault              backend  mode     AUC    F1     FPR    threshold  TP   FP   TN   FN");
    for e in std::iter::once(&r.static_report).chain(r.dynamic_report.as_ref()) {
        let c = &e.counts;
        let _ = writeln!(
            s,
            "{:<8} {:<18} {:<8} {:<8} {:<6} {:<6.3} {:<6} {:<10.4} {:<4} {:<4} {:<4} {:<4}",
            r.config,
            r.fault,
            r.backend,
            e.mode,
            opt(e.auc),
            e.f1,
            opt(e.fpr),
            e.threshold,
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        );
    }
    s
}

pub fn render_diagnosis(r: &DiagnosisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "t        status      size  diagnoses");
    for c in &r.checkpoints {
        let status = if c.nominal { "nominal" } else { "symptoms" };
        let ds: Vec<String> = c.diagnoses.iter().map(|d| format!("{{{}}}", d.join(", "))).collect();
        let _ = writeln!(s, "{:<8} {:<11} {:<5} {}", c.t, status, c.cardinality, ds.join(" "));
    }
    s
}

pub fn render_plan(r: &PlanReport) -> String {
    let mut s = String::new();
    for (i, step) in r.steps.iter().enumerate() {
        let _ = writeln!(s, "{}. {step}", i + 1);
    }
    let _ = writeln!(s, "final state: {}", r.final_state);
    s
}

pub fn render_report(r: &Report) -> String {
    let mut s = String::new();
    if !r.runs.is_empty() {
        let _ = writeln!(s, "runs");
        let _ = writeln!(s, "  name                     config   seed  samples  faults");
        for m in &r.runs {
            let faults: Vec<String> =
                m.faults.iter().map(|f| format!("{}:{}@{}", f.component, f.mode, f.onset)).collect();
            let faults = if faults.is_empty() { "-".to_string() } else { faults.join(" ") };
            let _ = writeln!(s, "  {:<24} {:<8} {:<5} {:<8} {}", m.name, m.config, m.seed, m.samples, faults);
        }
    }
    if !r.detection.is_empty() {
        let _ = writeln!(s, "detection");
        let _ = writeln!(s, "  config   fault              backend  static AUC/F1  dynamic AUC/F1");
        for d in &r.detection {
            let dy = d.dynamic_report.as_ref().map_or_else(|| "-".into(), |e| format!("{}/{:.3}", opt(e.auc), e.f1));
            let st = format!("{}/{:.3}", opt(d.static_report.auc), d.static_report.f1);
            let _ = writeln!(s, "  {:<8} {:<18} {:<8} {:<14} {}", d.config, d.fault, d.backend, st, dy);
        }
    }
    if !r.diagnosis.is_empty() {
        let _ = writeln!(s, "diagnosis");
        for d in &r.diagnosis {
            let last = d.checkpoints.last();
            let summary = last.map_or_else(
                || "-".into(),
                |c| c.diagnoses.iter().map(|d| format!("{{{}}}", d.join(", "))).collect::<Vec<_>>().join(" "),
            );
            let _ = writeln!(s, "  {}: {summary}", d.run);
        }
    }
    s
}
