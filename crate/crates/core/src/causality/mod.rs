//! Symbolic layer: events are halfspaces of the signal space, concepts are
//! convex regions (conjunctions of halfspaces), and causalities are guarded
//! transitions between concepts or between product configurations.

mod parse;

pub use parse::{format_inequality, parse_halfspace, parse_multiset, parse_region, Bindings};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::SignalVector;
use crate::planning::ProductMultiset;

#[derive(Debug, Error, PartialEq)]
pub enum CausalityError {
    #[error("halfspace has an all-zero coefficient vector")]
    ZeroCoefficientVector,
    #[error("inequality has {got} coefficients, signal space has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inequality has non-finite coefficients or bound")]
    NonFinite,
    #[error("concept region is empty")]
    EmptyRegion,
    #[error("vector has missing entries")]
    IncompleteVector,
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("`{0}` is already defined")]
    DuplicateName(String),
    #[error("process step `{0}` consumes nothing")]
    EmptyInputs(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = CausalityError> = std::result::Result<T, E>;

/// `coeffs · x < bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearInequality {
    coeffs: Vec<f64>,
    bound: f64,
}

impl LinearInequality {
    pub fn new(coeffs: Vec<f64>, bound: f64) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) || !bound.is_finite() {
            return Err(CausalityError::NonFinite);
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(CausalityError::ZeroCoefficientVector);
        }
        Ok(LinearInequality { coeffs, bound })
    }

    /// `x[index] < bound`, in an `n`-dimensional space.
    pub fn upper(n: usize, index: usize, bound: f64) -> Result<Self> {
        let mut c = vec![0.0; n];
        c[index] = 1.0;
        LinearInequality::new(c, bound)
    }

    /// `x[index] > bound`.
    pub fn lower(n: usize, index: usize, bound: f64) -> Result<Self> {
        let mut c = vec![0.0; n];
        c[index] = -1.0;
        LinearInequality::new(c, -bound)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dimension(&self) -> usize {
        self.coeffs.len()
    }

    /// `f·x − c`; negative inside the halfspace.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(f, v)| f * v).sum::<f64>() - self.bound
    }

    /// Strict: points on the boundary are outside.
    pub fn holds(&self, x: &[f64]) -> bool {
        self.margin(x) < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductId(pub String);

impl ProductId {
    pub fn new(id: &str) -> Self {
        ProductId(id.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ProductId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub name: String,
    pub halfspace: LinearInequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub name: String,
    pub region: Vec<LinearInequality>,
}

impl Concept {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.region.iter().all(|h| h.holds(x))
    }
}

/// `from --event--> to`, valid while every component in `ok` works.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemCausality {
    pub name: String,
    pub from: ConceptId,
    /// `None` is an immediate transition.
    pub event: Option<EventId>,
    pub to: ConceptId,
    pub info: BTreeMap<String, String>,
    pub ok: BTreeSet<String>,
}

/// A process step consuming `inputs` and producing `outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCausality {
    pub name: String,
    pub inputs: ProductMultiset,
    pub event: Option<EventId>,
    pub outputs: ProductMultiset,
    pub info: BTreeMap<String, String>,
    pub ok: BTreeSet<String>,
}

/// Events, concepts, products and causalities over one signal space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CausalModel {
    signals: Vec<String>,
    components: BTreeSet<String>,
    events: Vec<Event>,
    concepts: Vec<Concept>,
    products: BTreeSet<ProductId>,
    system: Vec<SystemCausality>,
    steps: Vec<ProductCausality>,
}

fn complete(x: &SignalVector) -> Result<Vec<f64>> {
    x.to_complete().ok_or(CausalityError::IncompleteVector)
}

impl CausalModel {
    /// `signals` names the dimensions in order; `components` are the ids
    /// OK-guards may mention.
    pub fn new(signals: Vec<String>, components: impl IntoIterator<Item = String>) -> Self {
        CausalModel { signals, components: components.into_iter().collect(), ..Default::default() }
    }

    /// Adds a component id that OK-guards may mention.
    pub fn declare_component(&mut self, id: &str) {
        self.components.insert(id.to_string());
    }

    pub fn components(&self) -> impl Iterator<Item = &String> {
        self.components.iter()
    }

    pub fn dimension(&self) -> usize {
        self.signals.len()
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signals
    }

    fn check_dimension(&self, h: &LinearInequality) -> Result<()> {
        if h.dimension() != self.dimension() {
            return Err(CausalityError::DimensionMismatch { expected: self.dimension(), got: h.dimension() });
        }
        Ok(())
    }

    fn check_components(&self, ok: &BTreeSet<String>) -> Result<()> {
        match ok.iter().find(|c| !self.components.contains(*c)) {
            Some(c) => Err(CausalityError::DanglingReference(format!("component `{c}`"))),
            None => Ok(()),
        }
    }

    fn check_event(&self, e: Option<EventId>) -> Result<()> {
        match e {
            Some(e) if self.event(e).is_none() => Err(CausalityError::DanglingReference(format!("event #{}", e.0))),
            _ => Ok(()),
        }
    }

    pub fn define_event(&mut self, halfspace: LinearInequality, name: &str) -> Result<EventId> {
        self.check_dimension(&halfspace)?;
        if self.event_by_name(name).is_some() {
            return Err(CausalityError::DuplicateName(name.into()));
        }
        let id = EventId(self.events.len() as u32);
        self.events.push(Event { id, name: name.into(), halfspace });
        Ok(id)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, id: EventId) -> Option<&Event> {
        self.events.get(id.0 as usize)
    }

    pub fn event_by_name(&self, name: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.name == name)
    }

    /// Events whose boundary lies between `x` and `x2`: the endpoints fall
    /// on different sides of the strict halfspace.
    pub fn events_crossed(&self, x: &[f64], x2: &[f64]) -> Vec<EventId> {
        self.events.iter().filter(|e| e.halfspace.holds(x) != e.halfspace.holds(x2)).map(|e| e.id).collect()
    }

    pub fn get_event(&self, x: &SignalVector, x2: &SignalVector) -> Result<Vec<EventId>> {
        Ok(self.events_crossed(&complete(x)?, &complete(x2)?))
    }

    pub fn define_concept(&mut self, region: Vec<LinearInequality>, name: &str) -> Result<ConceptId> {
        if region.is_empty() {
            return Err(CausalityError::EmptyRegion);
        }
        for h in &region {
            self.check_dimension(h)?;
        }
        if self.concept_by_name(name).is_some() {
            return Err(CausalityError::DuplicateName(name.into()));
        }
        let id = ConceptId(self.concepts.len() as u32);
        self.concepts.push(Concept { id, name: name.into(), region });
        Ok(id)
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept(&self, id: ConceptId) -> Option<&Concept> {
        self.concepts.get(id.0 as usize)
    }

    pub fn concept_by_name(&self, name: &str) -> Option<&Concept> {
        self.concepts.iter().find(|c| c.name == name)
    }

    /// Concepts containing `x`, in definition order.
    pub fn concepts_at(&self, x: &[f64]) -> Vec<ConceptId> {
        self.concepts.iter().filter(|c| c.contains(x)).map(|c| c.id).collect()
    }

    pub fn get_concepts(&self, x: &SignalVector) -> Result<Vec<ConceptId>> {
        Ok(self.concepts_at(&complete(x)?))
    }

    pub fn add_system_causality(&mut self, sc: SystemCausality) -> Result<()> {
        for c in [sc.from, sc.to] {
            if self.concept(c).is_none() {
                return Err(CausalityError::DanglingReference(format!("concept #{}", c.0)));
            }
        }
        self.check_event(sc.event)?;
        self.check_components(&sc.ok)?;
        if self.system.iter().any(|s| s.name == sc.name) {
            return Err(CausalityError::DuplicateName(sc.name));
        }
        self.system.push(sc);
        Ok(())
    }

    /// Causalities starting in `s`, in insertion order.
    pub fn get_system_causalities(&self, s: ConceptId) -> Result<Vec<&SystemCausality>> {
        if self.concept(s).is_none() {
            return Err(CausalityError::UnknownConcept(format!("#{}", s.0)));
        }
        Ok(self.system.iter().filter(|c| c.from == s).collect())
    }

    /// Every system causality, unfiltered.
    pub fn system_causalities(&self) -> &[SystemCausality] {
        &self.system
    }

    pub fn define_product(&mut self, name: &str) -> ProductId {
        let id = ProductId::new(name);
        self.products.insert(id.clone());
        id
    }

    pub fn products(&self) -> impl Iterator<Item = &ProductId> {
        self.products.iter()
    }

    pub fn add_product_causality(&mut self, pc: ProductCausality) -> Result<()> {
        if pc.inputs.is_empty() {
            return Err(CausalityError::EmptyInputs(pc.name));
        }
        for p in pc.inputs.ids().chain(pc.outputs.ids()) {
            if !self.products.contains(p) {
                return Err(CausalityError::DanglingReference(format!("product `{p}`")));
            }
        }
        self.check_event(pc.event)?;
        self.check_components(&pc.ok)?;
        if self.steps.iter().any(|s| s.name == pc.name) {
            return Err(CausalityError::DuplicateName(pc.name));
        }
        self.steps.push(pc);
        Ok(())
    }

    /// Process steps consuming `p`, in insertion order.
    pub fn get_product_causalities(&self, p: &ProductId) -> Result<Vec<&ProductCausality>> {
        if !self.products.contains(p) {
            return Err(CausalityError::UnknownProduct(p.0.clone()));
        }
        Ok(self.steps.iter().filter(|s| s.inputs.count(p) > 0).collect())
    }

    pub fn product_causalities(&self) -> &[ProductCausality] {
        &self.steps
    }

    /// Parses and registers `text` as an event.
    pub fn define_event_str(&mut self, text: &str, name: &str) -> Result<EventId> {
        let h = parse_halfspace(text, &self.signals)?;
        self.define_event(h, name)
    }

    pub fn define_concept_str(&mut self, text: &str, name: &str) -> Result<ConceptId> {
        let region = parse_region(text, &self.signals)?;
        self.define_concept(region, name)
    }
}
