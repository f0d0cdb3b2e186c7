//! Consistency-based diagnosis with weak fault models.
//!
//! Rules read `OK(c1) ∧ … ∧ OK(ck) → (a1 ∧ … → s1 ∧ …)`. A failed component
//! retracts every rule it guards; a suspect set is a diagnosis when forward
//! chaining over the remaining rules derives nothing observed false.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::{Bindings, CausalModel};
use crate::data_model::{is_identifier, DataError, DataStore};

/// Component sets above this size are refused by [`diagnose`].
pub const MAX_COMPONENTS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosisError {
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("{0} components exceed the diagnosis limit of {MAX_COMPONENTS}")]
    SizeLimitExceeded(usize),
    #[error("predicate `{0}` is observed both true and false")]
    ContradictoryObservation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = DiagnosisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardedRule {
    pub ok: BTreeSet<String>,
    pub antecedent: BTreeSet<String>,
    pub consequent: BTreeSet<String>,
}

fn set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items.iter().map(|s| s.as_ref().to_string()).collect()
}

impl GuardedRule {
    pub fn new<S: AsRef<str>>(ok: &[S], antecedent: &[S], consequent: &[S]) -> Self {
        GuardedRule { ok: set(ok), antecedent: set(antecedent), consequent: set(consequent) }
    }
}

impl fmt::Display for GuardedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let guard: Vec<String> = self.ok.iter().map(|c| format!("OK({c})")).collect();
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(" & ");
        write!(f, "{} -> {} => {}", guard.join(" & "), join(&self.antecedent), join(&self.consequent))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub as_true: BTreeSet<String>,
    pub as_false: BTreeSet<String>,
}

impl ObservationSet {
    pub fn new<S: AsRef<str>>(as_true: &[S], as_false: &[S]) -> Self {
        ObservationSet { as_true: set(as_true), as_false: set(as_false) }
    }

    fn check(&self) -> Result<()> {
        match self.as_true.intersection(&self.as_false).next() {
            Some(p) => Err(DiagnosisError::ContradictoryObservation(p.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnosis {
    pub suspects: BTreeSet<String>,
}

impl Diagnosis {
    pub fn cardinality(&self) -> usize {
        self.suspects.len()
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.suspects.iter().cloned().collect::<Vec<_>>().join(", "))
    }
}

/// Predicates derivable from the true observations with rules not guarded by
/// a failed component.
pub fn derive(rules: &[GuardedRule], as_true: &BTreeSet<String>, failed: &BTreeSet<String>) -> BTreeSet<String> {
    let active: Vec<&GuardedRule> = rules.iter().filter(|r| r.ok.is_disjoint(failed)).collect();
    let mut known = as_true.clone();
    let mut fired = vec![false; active.len()];
    loop {
        let mut changed = false;
        for (r, done) in active.iter().zip(fired.iter_mut()) {
            if !*done && r.antecedent.is_subset(&known) {
                *done = true;
                for c in &r.consequent {
                    changed |= known.insert(c.clone());
                }
            }
        }
        if !changed {
            return known;
        }
    }
}

pub fn is_consistent(rules: &[GuardedRule], obs: &ObservationSet, failed: &BTreeSet<String>) -> Result<bool> {
    obs.check()?;
    Ok(derive(rules, &obs.as_true, failed).is_disjoint(&obs.as_false))
}

fn check_rules(rules: &[GuardedRule], comps: &BTreeSet<String>) -> Result<()> {
    for r in rules {
        if let Some(c) = r.ok.iter().find(|c| !comps.contains(*c)) {
            return Err(DiagnosisError::DanglingReference(format!("component `{c}` in rule `{r}`")));
        }
        if r.consequent.is_empty() {
            return Err(DiagnosisError::Parse { line: 0, message: format!("rule `{r}` has no consequent") });
        }
    }
    Ok(())
}

/// All consistent suspect sets of the smallest cardinality, sorted.
pub fn diagnose(rules: &[GuardedRule], obs: &ObservationSet, comps: &BTreeSet<String>) -> Result<Vec<Diagnosis>> {
    if comps.len() > MAX_COMPONENTS {
        return Err(DiagnosisError::SizeLimitExceeded(comps.len()));
    }
    check_rules(rules, comps)?;
    obs.check()?;
    let ids: Vec<&String> = comps.iter().collect();
    let n = ids.len();
    for k in 0..=n {
        let mut found = Vec::new();
        // lexicographic k-combinations of indices
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let failed: BTreeSet<String> = idx.iter().map(|&i| ids[i].clone()).collect();
            if derive(rules, &obs.as_true, &failed).is_disjoint(&obs.as_false) {
                found.push(Diagnosis { suspects: failed });
            }
            let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else { break };
            idx[pos] += 1;
            for q in pos + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
        }
        if !found.is_empty() {
            found.sort();
            return Ok(found);
        }
    }
    Ok(Vec::new())
}

/// Marks each bound predicate true iff the stored vector at `t` lies in its concept.
pub fn observations_at(store: &DataStore, model: &CausalModel, bindings: &Bindings, t: f64) -> Result<ObservationSet> {
    let x = store.get_all(t)?;
    let mut obs = ObservationSet::default();
    for (pred, concept) in bindings {
        let c = model
            .concept_by_name(concept)
            .ok_or_else(|| DiagnosisError::DanglingReference(format!("concept `{concept}` bound to `{pred}`")))?;
        if c.contains(&x) {
            obs.as_true.insert(pred.clone());
        } else {
            obs.as_false.insert(pred.clone());
        }
    }
    Ok(obs)
}

fn parse_rule(line: &str) -> std::result::Result<GuardedRule, String> {
    let (lhs, rhs) = line.split_once("=>").ok_or("expected `=>`")?;
    let mut rule = GuardedRule { ok: BTreeSet::new(), antecedent: BTreeSet::new(), consequent: BTreeSet::new() };
    let (guard, antecedent) = lhs.split_once("->").unwrap_or(("", lhs));
    for item in guard.split('&').map(str::trim).filter(|s| !s.is_empty()) {
        let c = item
            .strip_prefix("OK(")
            .and_then(|s| s.strip_suffix(')'))
            .map(str::trim)
            .ok_or_else(|| format!("guard item `{item}` is not OK(component)"))?;
        if !is_identifier(c) {
            return Err(format!("bad component id `{c}`"));
        }
        rule.ok.insert(c.to_string());
    }
    let preds = |text: &str, into: &mut BTreeSet<String>| -> std::result::Result<(), String> {
        for p in text.split('&').map(str::trim).filter(|s| !s.is_empty()) {
            if !is_identifier(p) {
                return Err(format!("bad predicate `{p}`"));
            }
            into.insert(p.to_string());
        }
        Ok(())
    };
    preds(antecedent, &mut rule.antecedent)?;
    preds(rhs, &mut rule.consequent)?;
    if rule.consequent.is_empty() {
        return Err("rule has no consequent".into());
    }
    Ok(rule)
}

/// One rule per line: `OK(a) & OK(b) -> s1 & s2 => s3`. The antecedent may
/// be empty; `#` starts a comment.
pub fn parse_rules(text: &str) -> Result<Vec<GuardedRule>> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        rules.push(parse_rule(line).map_err(|message| DiagnosisError::Parse { line: i + 1, message })?);
    }
    Ok(rules)
}

pub fn format_rules(rules: &[GuardedRule]) -> String {
    rules.iter().map(|r| format!("{r}\n")).collect()
}
