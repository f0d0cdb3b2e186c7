//! Extrapolation with per-entry probabilities, anomaly scoring and
//! failure-mode activation over pluggable predictor backends.
//!
//! A [`FittedModel`] is immutable once built and can be shared between
//! threads; each [`Session`] carries its own [`FailureAssignment`], so
//! concurrent what-if queries never see each other's failure modes.

mod knn_kde;
mod physics;

pub use knn_kde::{Kde, KnnKde, Normalizer};
pub use physics::{Physics, PlantModel};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Sample, SignalVector};

/// Floor for every standard deviation used to normalize.
pub const SIGMA_MIN: f64 = 1e-6;

pub const OK: &str = "OK";

#[derive(Debug, Error, PartialEq)]
pub enum PredictionError {
    #[error("backend not fitted")]
    NotFitted,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("window is empty")]
    EmptyWindow,
    #[error("window timestamps are not strictly increasing")]
    NonMonotonicWindow,
    #[error("invalid horizon {0}: must be positive and finite")]
    InvalidHorizon(f64),
    #[error("window needs at least 2 samples, got {0}")]
    WindowTooShort(usize),
    #[error("vector has missing entries")]
    IncompleteVector,
    #[error("history is empty")]
    EmptyHistory,
    #[error("history timestamps are not strictly increasing")]
    UnorderedHistory,
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{component}` has no mode `{mode}`")]
    UnknownMode { component: String, mode: String },
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{0}` needs a plant model")]
    MissingPlant(String),
    #[error("prediction not computable")]
    NotComputable,
}

pub type Result<T, E = PredictionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Valve,
    Tank,
    Pipe,
    Pump,
    Sensor,
}

impl ComponentKind {
    /// Failure modes a component of this kind can be put into.
    pub fn failure_modes(self) -> &'static [&'static str] {
        match self {
            ComponentKind::Valve => &["blocked", "stuck", "jammed"],
            ComponentKind::Tank => &["leaking"],
            ComponentKind::Pipe => &["jammed"],
            ComponentKind::Pump => &["slow", "fast"],
            ComponentKind::Sensor => &["biased"],
        }
    }
}

/// A component that may fail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub kind: ComponentKind,
    /// Always contains [`OK`].
    pub modes: BTreeSet<String>,
}

impl Component {
    pub fn new(id: &str, kind: ComponentKind) -> Self {
        let modes = std::iter::once(OK).chain(kind.failure_modes().iter().copied()).map(String::from).collect();
        Component { id: id.to_string(), kind, modes }
    }
}

/// Active failure modes, by component id. Never maps to `OK`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureAssignment(BTreeMap<String, String>);

impl FailureAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, component: &str, mode: &str) -> Self {
        self.0.insert(component.to_string(), mode.to_string());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(c, m)| (c.as_str(), m.as_str()))
    }

    pub fn mode_of(&self, component: &str) -> Option<&str> {
        self.0.get(component).map(String::as_str)
    }

    pub fn components(&self) -> BTreeSet<String> {
        self.0.keys().cloned().collect()
    }

    pub fn validate(&self, comps: &[Component]) -> Result<()> {
        for (id, mode) in &self.0 {
            let c = comps.iter().find(|c| &c.id == id).ok_or_else(|| PredictionError::UnknownComponent(id.clone()))?;
            if mode == OK || !c.modes.contains(mode) {
                return Err(PredictionError::UnknownMode { component: id.clone(), mode: mode.clone() });
            }
        }
        Ok(())
    }
}

impl<C: Into<String>, M: Into<String>> FromIterator<(C, M)> for FailureAssignment {
    fn from_iter<I: IntoIterator<Item = (C, M)>>(iter: I) -> Self {
        FailureAssignment(iter.into_iter().map(|(c, m)| (c.into(), m.into())).collect())
    }
}

/// Predicted vector with per-entry probabilities; an entry and its
/// probability are either both present or both missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub x: SignalVector,
    pub p: Vec<Option<f64>>,
}

impl PredictionResult {
    pub fn missing(n: usize) -> Self {
        PredictionResult { x: SignalVector::missing(n), p: vec![None; n] }
    }

    pub fn certain(x: &[f64]) -> Self {
        PredictionResult { x: SignalVector::complete(x), p: vec![Some(1.0); x.len()] }
    }

    /// Pairs up nullity and clamps probabilities into `[0, 1]`.
    fn normalized(mut self) -> Self {
        for (x, p) in self.x.0.iter_mut().zip(self.p.iter_mut()) {
            match (x.filter(|v| v.is_finite()), p.filter(|v| !v.is_nan())) {
                (Some(v), Some(q)) => {
                    *x = Some(v);
                    *p = Some(q.clamp(0.0, 1.0));
                }
                _ => {
                    *x = None;
                    *p = None;
                }
            }
        }
        self
    }
}

/// A prediction model behind the twin's extrapolation API.
pub trait PredictorBackend: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Whether predictions change under the failure modes the backend is asked for.
    fn honors_failures(&self) -> bool;

    fn fit(&mut self, history: &[Sample]) -> Result<()>;

    /// Completes `partial`; given entries may be returned as they are.
    fn predict_static(&self, partial: &SignalVector, failures: &FailureAssignment) -> Result<PredictionResult>;

    /// Predicts the sample `horizon` seconds after the window's last one.
    fn predict_dynamic(
        &self,
        window: &[Sample],
        horizon: f64,
        failures: &FailureAssignment,
    ) -> Result<PredictionResult>;

    /// One-step prediction residuals over the training history, one row
    /// per predicted sample. Backends that memorize their training data
    /// override this to exclude each sample's own neighborhood.
    fn training_residuals(&self, history: &[Sample]) -> Vec<Vec<f64>> {
        let none = FailureAssignment::new();
        history
            .windows(2)
            .filter_map(|w| {
                let pred = self.predict_dynamic(&w[..1], w[1].at.secs() - w[0].at.secs(), &none).ok()?;
                let full = pred.x.to_complete()?;
                Some(w[1].x.iter().zip(full).map(|(a, b)| a - b).collect())
            })
            .collect()
    }
}

/// Creates a backend by its scenario-file name.
pub fn backend_by_name(name: &str, plant: Option<&PlantModel>) -> Result<Box<dyn PredictorBackend>> {
    match name {
        "knn-kde" => Ok(Box::new(KnnKde::default())),
        "physics" => {
            let plant = plant.ok_or_else(|| PredictionError::MissingPlant(name.into()))?;
            Ok(Box::new(Physics::new(plant.clone())))
        }
        other => Err(PredictionError::UnknownBackend(other.into())),
    }
}

/// A fitted backend plus the statistics every session scores against.
#[derive(Debug)]
pub struct FittedModel {
    backend: Box<dyn PredictorBackend>,
    n: usize,
    kde: Kde,
    residual_sigma: Vec<f64>,
    static_training_scores: Vec<f64>,
    dynamic_training_scores: Vec<f64>,
}

impl FittedModel {
    pub fn fit(mut backend: Box<dyn PredictorBackend>, history: &[Sample]) -> Result<Self> {
        let n = check_history(history)?;
        backend.fit(history)?;
        let kde = Kde::fit(history)?;
        let residuals = backend.training_residuals(history);
        let residual_sigma: Vec<f64> = (0..n)
            .map(|i| {
                if residuals.is_empty() {
                    return SIGMA_MIN;
                }
                let ms = residuals.iter().map(|r| r[i] * r[i]).sum::<f64>() / residuals.len() as f64;
                ms.sqrt().max(SIGMA_MIN)
            })
            .collect();
        let dynamic_training_scores =
            residuals.iter().map(|r| residual_score(r.iter().copied().map(Some), &residual_sigma)).collect();
        let static_training_scores = kde.training_scores();
        Ok(FittedModel { backend, n, kde, residual_sigma, static_training_scores, dynamic_training_scores })
    }

    pub fn backend(&self) -> &dyn PredictorBackend {
        self.backend.as_ref()
    }

    pub fn signal_count(&self) -> usize {
        self.n
    }

    pub fn kde(&self) -> &Kde {
        &self.kde
    }

    /// Per-signal RMS of one-step training residuals, floored at [`SIGMA_MIN`].
    pub fn residual_sigma(&self) -> &[f64] {
        &self.residual_sigma
    }

    /// Static scores of the training samples, each ranked leave-one-out.
    pub fn static_training_scores(&self) -> &[f64] {
        &self.static_training_scores
    }

    pub fn dynamic_training_scores(&self) -> &[f64] {
        &self.dynamic_training_scores
    }
}

fn check_history(history: &[Sample]) -> Result<usize> {
    let first = history.first().ok_or(PredictionError::EmptyHistory)?;
    let n = first.x.len();
    if history.iter().any(|s| s.x.len() != n || s.x.iter().any(|v| !v.is_finite())) {
        return Err(PredictionError::SchemaMismatch("history samples differ in length or are incomplete".into()));
    }
    if history.windows(2).any(|w| w[1].at.secs() <= w[0].at.secs()) {
        return Err(PredictionError::UnorderedHistory);
    }
    Ok(n)
}

/// `exp(−½·mean(r²))` over the entries that could be predicted: the
/// geometric mean of the per-signal Gaussian confidences.
fn residual_score(residuals: impl Iterator<Item = Option<f64>>, sigma: &[f64]) -> f64 {
    let (sum, count) = residuals
        .zip(sigma)
        .filter_map(|(r, s)| r.map(|r| (r / s).powi(2)))
        .fold((0.0, 0usize), |(a, c), v| (a + v, c + 1));
    if count == 0 {
        return f64::NAN;
    }
    (-0.5 * sum / count as f64).exp()
}

/// A single-owner view of a fitted model with its own failure modes.
#[derive(Debug, Clone)]
pub struct Session {
    model: Option<Arc<FittedModel>>,
    components: Arc<Vec<Component>>,
    failures: FailureAssignment,
    n: usize,
}

impl Session {
    pub fn new(model: Option<Arc<FittedModel>>, components: Arc<Vec<Component>>, n: usize) -> Self {
        Session { model, components, failures: FailureAssignment::new(), n }
    }

    pub fn get_comps(&self) -> &[Component] {
        &self.components
    }

    pub fn failures(&self) -> &FailureAssignment {
        &self.failures
    }

    /// Replaces the active failure modes; unchanged on error.
    pub fn set_failed_comps(&mut self, fa: FailureAssignment) -> Result<()> {
        fa.validate(&self.components)?;
        self.failures = fa;
        Ok(())
    }

    pub fn model(&self) -> Result<&FittedModel> {
        self.model.as_deref().ok_or(PredictionError::NotFitted)
    }

    fn refuses_failures(&self, model: &FittedModel) -> bool {
        !self.failures.is_empty() && !model.backend.honors_failures()
    }

    /// Fills the missing entries of `partial`. Given entries come back
    /// unchanged with probability 1; entries the backend cannot compute
    /// stay missing.
    pub fn extrapolate_static(&self, partial: &SignalVector) -> Result<PredictionResult> {
        let model = self.model()?;
        partial.check(self.n).map_err(|e| PredictionError::SchemaMismatch(e.to_string()))?;
        let mut out = if self.refuses_failures(model) {
            PredictionResult::missing(self.n)
        } else {
            model.backend.predict_static(partial, &self.failures)?
        };
        if out.x.len() != self.n || out.p.len() != self.n {
            return Err(PredictionError::SchemaMismatch("backend returned wrong length".into()));
        }
        for (i, given) in partial.0.iter().enumerate() {
            if let Some(v) = given {
                out.x.0[i] = Some(*v);
                out.p[i] = Some(1.0);
            }
        }
        Ok(out.normalized())
    }

    /// Predicts the sample `horizon` seconds after the window's end.
    pub fn extrapolate_dynamic(&self, window: &[Sample], horizon: f64) -> Result<PredictionResult> {
        let model = self.model()?;
        check_window(window, self.n)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PredictionError::InvalidHorizon(horizon));
        }
        if self.refuses_failures(model) {
            return Ok(PredictionResult::missing(self.n));
        }
        let out = model.backend.predict_dynamic(window, horizon, &self.failures)?;
        if out.x.len() != self.n || out.p.len() != self.n {
            return Err(PredictionError::SchemaMismatch("backend returned wrong length".into()));
        }
        Ok(out.normalized())
    }

    /// Rank-calibrated density score in `[0, 1]`; low means anomalous.
    pub fn anomaly_score_static(&self, x: &[f64]) -> Result<f64> {
        let model = self.model()?;
        if x.len() != self.n {
            return Err(PredictionError::SchemaMismatch(format!("{} entries for {} signals", x.len(), self.n)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PredictionError::IncompleteVector);
        }
        Ok(model.kde.score(x))
    }

    /// Confidence that the window's last sample continues its predecessors.
    pub fn anomaly_score_dynamic(&self, window: &[Sample]) -> Result<f64> {
        let model = self.model()?;
        if window.len() < 2 {
            return Err(PredictionError::WindowTooShort(window.len()));
        }
        let (head, last) = window.split_at(window.len() - 1);
        let last = &last[0];
        let prev = head.last().expect("len >= 2");
        let pred = self.extrapolate_dynamic(head, last.at.secs() - prev.at.secs())?;
        let residuals = pred.x.0.iter().zip(&last.x).map(|(p, a)| p.map(|p| a - p));
        let s = residual_score(residuals, &model.residual_sigma);
        if s.is_nan() {
            Err(PredictionError::NotComputable)
        } else {
            Ok(s)
        }
    }
}

fn check_window(window: &[Sample], n: usize) -> Result<()> {
    if window.is_empty() {
        return Err(PredictionError::EmptyWindow);
    }
    if window.iter().any(|s| s.x.len() != n) {
        return Err(PredictionError::SchemaMismatch(format!("window samples must have {n} entries")));
    }
    if window.windows(2).any(|w| w[1].at.secs() <= w[0].at.secs()) {
        return Err(PredictionError::NonMonotonicWindow);
    }
    Ok(())
}
