//! Evaluation harness behind the command-line tool: anomaly scoring with
//! AUC/F1, and the file-level `simulate`, `detect`, `diagnose`, `plan` and
//! `report` commands.

mod commands;
pub mod eval;

pub use commands::{
    detect_files, diagnose_run, plan_files, render_detect, render_diagnosis, render_plan, render_report, report_dir,
    simulate, write_json, CheckpointResult, DiagnosisReport, Manifest, PlanReport, Report, DETECT_FILE, DIAGNOSIS_FILE,
};
pub use eval::{auc, evaluate_anomaly, percentile, Counts, EvalReport, THRESHOLD_PERCENTILE};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::CausalityError;
use crate::data_model::{DataError, DataStore};
use crate::diagnosis::DiagnosisError;
use crate::planning::PlanError;
use crate::prediction::{backend_by_name, FittedModel, PlantModel, PredictionError, Session};
use crate::simulator::{Labels, Scenario, ScenarioError, TankConfig};
use crate::TwinError;

/// Dynamic scoring window, in samples.
pub const WINDOW_LEN: usize = 20;
/// Training uses fault-free samples before this time.
pub const TRAIN_UNTIL: f64 = 400.0;
/// Scored test points start here.
pub const TEST_FROM: f64 = 400.0;
/// Fault onset in benchmark test runs.
pub const FAULT_ONSET: f64 = 450.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorKind {
    /// Malformed input or failed validation.
    Invalid,
    /// No plan exists or no consistent answer was found.
    NoResult,
    Io,
}

#[derive(Debug, Error, PartialEq)]
#[error("{message}")]
pub struct HarnessError {
    pub kind: ErrorKind,
    pub message: String,
}

impl HarnessError {
    pub fn validation(message: impl Into<String>) -> Self {
        HarnessError { kind: ErrorKind::Invalid, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        HarnessError { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Invalid => 2,
            ErrorKind::NoResult => 3,
            ErrorKind::Io => 4,
        }
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => HarnessError::io(e.to_string()),
            _ => HarnessError::validation(e.to_string()),
        }
    }
}

impl From<ScenarioError> for HarnessError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) => HarnessError::io(e.to_string()),
            _ => HarnessError::validation(e.to_string()),
        }
    }
}

impl From<CausalityError> for HarnessError {
    fn from(e: CausalityError) -> Self {
        HarnessError::validation(e.to_string())
    }
}

impl From<PredictionError> for HarnessError {
    fn from(e: PredictionError) -> Self {
        HarnessError::validation(e.to_string())
    }
}

impl From<DiagnosisError> for HarnessError {
    fn from(e: DiagnosisError) -> Self {
        match e {
            DiagnosisError::Data(d) => d.into(),
            other => HarnessError::validation(other.to_string()),
        }
    }
}

impl From<PlanError> for HarnessError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::NoPlanFound(_) => HarnessError { kind: ErrorKind::NoResult, message: e.to_string() },
            other => HarnessError::validation(other.to_string()),
        }
    }
}

impl From<TwinError> for HarnessError {
    fn from(e: TwinError) -> Self {
        match e {
            TwinError::Data(e) => e.into(),
            TwinError::Prediction(e) => e.into(),
            TwinError::Causality(e) => e.into(),
            TwinError::Diagnosis(e) => e.into(),
            TwinError::Scenario(e) => e.into(),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::io(e.to_string())
    }
}

/// Where training ends and scoring starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub train_until: f64,
    pub test_from: f64,
    pub window: usize,
}

impl Default for Split {
    fn default() -> Self {
        Split { train_until: TRAIN_UNTIL, test_from: TEST_FROM, window: WINDOW_LEN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub config: String,
    pub fault: String,
    pub backend: String,
    pub train_samples: usize,
    pub static_report: EvalReport,
    /// Missing when no test point has a full window before it.
    pub dynamic_report: Option<EvalReport>,
}

/// Fits `backend` on the fault-free `train` samples before `split.train_until`
/// and scores every `test` sample from `split.test_from` on, statically per
/// point and dynamically per trailing window.
pub fn detect(
    train: &DataStore,
    test: &DataStore,
    labels: &Labels,
    backend: &str,
    plant: Option<&PlantModel>,
    split: Split,
) -> Result<DetectReport, HarnessError> {
    if !train.schema().names().eq(test.schema().names()) {
        return Err(DataError::SchemaMismatch("training and test data have different signals".into()).into());
    }
    if split.window < 2 {
        return Err(HarnessError::validation("dynamic window needs at least 2 samples"));
    }
    let history = train.slice(f64::NEG_INFINITY, split.train_until);
    let model = Arc::new(FittedModel::fit(backend_by_name(backend, plant)?, history)?);
    let session = Session::new(Some(model.clone()), Arc::new(Vec::new()), train.schema().len());

    let samples = test.samples();
    let first = samples.partition_point(|s| s.at.secs() < split.test_from);
    let label_of =
        |t: f64| labels.at(t).ok_or_else(|| HarnessError::validation(format!("labels have no row for t = {t}")));
    let mut static_scored = Vec::new();
    let mut dynamic_scored = Vec::new();
    let mut faults: Vec<String> = Vec::new();
    for idx in first..samples.len() {
        let s = &samples[idx];
        let row = label_of(s.at.secs())?;
        if row.is_anomalous && !faults.contains(&row.label) {
            faults.push(row.label.clone());
        }
        static_scored.push((session.anomaly_score_static(&s.x)?, row.is_anomalous));
        if idx + 1 >= split.window {
            match session.anomaly_score_dynamic(&samples[idx + 1 - split.window..=idx]) {
                Ok(score) => dynamic_scored.push((score, row.is_anomalous)),
                Err(PredictionError::NotComputable) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    let fault = if faults.is_empty() { "stable".to_string() } else { faults.join("+") };
    let threshold = |scores: &[f64]| {
        let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
        percentile(&finite, THRESHOLD_PERCENTILE).unwrap_or(0.0)
    };
    let label = |mut r: EvalReport, mode: &str| {
        r.fault = fault.clone();
        r.mode = mode.into();
        r
    };
    let static_report = label(evaluate_anomaly(&static_scored, threshold(model.static_training_scores()))?, "static");
    let dynamic_report = if dynamic_scored.is_empty() {
        None
    } else {
        Some(label(evaluate_anomaly(&dynamic_scored, threshold(model.dynamic_training_scores()))?, "dynamic"))
    };
    Ok(DetectReport {
        config: String::new(),
        fault: fault.clone(),
        backend: backend.to_string(),
        train_samples: history.len(),
        static_report,
        dynamic_report,
    })
}

impl DetectReport {
    pub fn with_config(mut self, config: &str) -> Self {
        self.config = config.to_string();
        self.static_report.config = config.to_string();
        if let Some(d) = self.dynamic_report.as_mut() {
            d.config = config.to_string();
        }
        self
    }
}

/// One benchmark cell: train on a fault-free run with `seed`, test on a
/// fresh run (`seed + 1`) with the catalogue fault `fault` (or none) injected
/// at [`FAULT_ONSET`].
pub fn benchmark_case(
    config: TankConfig,
    fault: Option<&str>,
    backend: &str,
    seed: u64,
) -> Result<DetectReport, HarnessError> {
    let train_sc = Scenario::new(config).with_seed(seed);
    let mut test_sc = Scenario::new(config).with_seed(seed.wrapping_add(1));
    if let Some(name) = fault {
        test_sc = test_sc.with_fault(name, FAULT_ONSET)?;
    }
    let train = train_sc.run()?;
    let test = test_sc.run()?;
    let plant = PlantModel { topology: train_sc.topology()?, commands: train_sc.commands.clone(), dt: train_sc.dt };
    let report = detect(&train.data, &test.data, &test.labels, backend, Some(&plant), Split::default())?;
    Ok(report.with_config(config.as_str()))
}
