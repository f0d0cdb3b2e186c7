//! Breadth-first planning over process steps (product causalities).

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::{ProductCausality, ProductId};

/// Default cap on distinct states visited by [`plan`].
pub const MAX_STATES: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("step `{0}` needs inputs that are not available")]
    InputsUnavailable(String),
    #[error("no plan reaches the goal within {0} steps")]
    NoPlanFound(usize),
    #[error("search exceeded {0} states")]
    SizeLimitExceeded(usize),
    #[error("maximum depth must be at least 1")]
    InvalidDepth,
}

/// Product counts; zero counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductMultiset(BTreeMap<ProductId, u32>);

impl ProductMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: &[(&str, u32)]) -> Self {
        let mut m = Self::new();
        for &(p, n) in counts {
            m.add(&ProductId::new(p), n);
        }
        m
    }

    pub fn add(&mut self, p: &ProductId, n: u32) {
        if n > 0 {
            *self.0.entry(p.clone()).or_insert(0) += n;
        }
    }

    pub fn count(&self, p: &ProductId) -> u32 {
        self.0.get(p).copied().unwrap_or(0)
    }

    pub fn ids(&self) -> impl Iterator<Item = &ProductId> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProductId, u32)> {
        self.0.iter().map(|(p, &n)| (p, n))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    /// Multiset inclusion `other ⊆ self`.
    pub fn contains(&self, other: &ProductMultiset) -> bool {
        other.iter().all(|(p, n)| self.count(p) >= n)
    }

    /// `self − other + added`, or `None` when `other ⊄ self`.
    fn rewrite(&self, other: &ProductMultiset, added: &ProductMultiset) -> Option<ProductMultiset> {
        if !self.contains(other) {
            return None;
        }
        let mut out = self.clone();
        for (p, n) in other.iter() {
            let left = out.count(p) - n;
            if left == 0 {
                out.0.remove(p);
            } else {
                out.0.insert(p.clone(), left);
            }
        }
        for (p, n) in added.iter() {
            out.add(p, n);
        }
        Some(out)
    }
}

impl std::fmt::Display for ProductMultiset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return f.write_str("{}");
        }
        let parts: Vec<String> =
            self.iter().map(|(p, n)| if n == 1 { p.to_string() } else { format!("{n}*{p}") }).collect();
        f.write_str(&parts.join(" + "))
    }
}

/// Ordered step names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<String>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn apply_step(state: &ProductMultiset, step: &ProductCausality) -> Result<ProductMultiset, PlanError> {
    state.rewrite(&step.inputs, &step.outputs).ok_or_else(|| PlanError::InputsUnavailable(step.name.clone()))
}

/// Shortest step sequence turning `initial` into a superset of `goal`, using
/// only steps whose OK-guard lies within `available`. Among shortest plans
/// the lexicographically smallest sequence of step names wins.
pub fn plan(
    steps: &[ProductCausality],
    initial: &ProductMultiset,
    goal: &ProductMultiset,
    available: &BTreeSet<String>,
    max_depth: usize,
) -> Result<Plan, PlanError> {
    plan_bounded(steps, initial, goal, available, max_depth, MAX_STATES)
}

pub fn plan_bounded(
    steps: &[ProductCausality],
    initial: &ProductMultiset,
    goal: &ProductMultiset,
    available: &BTreeSet<String>,
    max_depth: usize,
    max_states: usize,
) -> Result<Plan, PlanError> {
    if max_depth == 0 {
        return Err(PlanError::InvalidDepth);
    }
    let mut usable: Vec<&ProductCausality> = steps.iter().filter(|s| s.ok.is_subset(available)).collect();
    usable.sort_by(|a, b| a.name.cmp(&b.name));

    // FIFO over (state, path) with steps tried in name order keeps each
    // layer sorted, so the first goal hit is the smallest shortest plan.
    let mut seen: HashSet<ProductMultiset> = HashSet::from([initial.clone()]);
    let mut queue: VecDeque<(ProductMultiset, Vec<usize>)> = VecDeque::from([(initial.clone(), vec![])]);
    while let Some((state, path)) = queue.pop_front() {
        if state.contains(goal) {
            return Ok(Plan { steps: path.iter().map(|&i| usable[i].name.clone()).collect() });
        }
        if path.len() == max_depth {
            continue;
        }
        for (i, step) in usable.iter().enumerate() {
            let Some(next) = state.rewrite(&step.inputs, &step.outputs) else { continue };
            if seen.insert(next.clone()) {
                if seen.len() > max_states {
                    return Err(PlanError::SizeLimitExceeded(max_states));
                }
                let mut p = path.clone();
                p.push(i);
                queue.push_back((next, p));
            }
        }
    }
    Err(PlanError::NoPlanFound(max_depth))
}
