//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls the code it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::Rng;

use aitwin::causality::ProductCausality;
use aitwin::diagnosis::{GuardedRule, ObservationSet};
use aitwin::planning::ProductMultiset;

pub const SEGMENT_STEPS: usize = 10_000;
pub const BOUNDARY_BAND: f64 = 1e-9;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Every `*.toml` below `scenarios/`, sorted.
pub fn shipped_scenarios() -> Vec<PathBuf> {
    fn walk(dir: &std::path::Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).expect("scenario directory") {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else if p.extension().is_some_and(|e| e == "toml") {
                out.push(p);
            }
        }
    }
    let mut out = Vec::new();
    walk(&workspace_root().join("scenarios"), &mut out);
    out.sort();
    out
}

// ---------------------------------------------------------------- geometry

/// A halfspace `coeffs·x < bound`, kept as raw numbers.
#[derive(Debug, Clone)]
pub struct RawHalfspace {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

impl RawHalfspace {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.bound
    }

    pub fn inside(&self, x: &[f64]) -> bool {
        self.value(x) < 0.0
    }
}

pub fn random_halfspace(rng: &mut impl Rng, n: usize) -> RawHalfspace {
    loop {
        let coeffs: Vec<f64> =
            (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-2.0..2.0) }).collect();
        if coeffs.iter().any(|&c| c != 0.0) {
            return RawHalfspace { coeffs, bound: rng.random_range(-1.5..1.5) };
        }
    }
}

pub fn random_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Walks `x → x2` in [`SEGMENT_STEPS`] steps. Returns `None` when a walked
/// point lies within the boundary band of some halfspace, otherwise the
/// indices of halfspaces whose membership changes somewhere on the walk.
pub fn dense_crossings(events: &[RawHalfspace], x: &[f64], x2: &[f64]) -> Option<Vec<usize>> {
    let mut crossed = vec![false; events.len()];
    let mut prev: Vec<bool> = events.iter().map(|e| e.inside(x)).collect();
    for j in 0..=SEGMENT_STEPS {
        let s = j as f64 / SEGMENT_STEPS as f64;
        let p: Vec<f64> = x.iter().zip(x2).map(|(a, b)| a + s * (b - a)).collect();
        for (k, e) in events.iter().enumerate() {
            let v = e.value(&p);
            if v.abs() < BOUNDARY_BAND {
                return None;
            }
            let inside = v < 0.0;
            if inside != prev[k] {
                crossed[k] = true;
                prev[k] = inside;
            }
        }
    }
    Some(crossed.iter().enumerate().filter(|(_, &c)| c).map(|(k, _)| k).collect())
}

// --------------------------------------------------------------- diagnosis

pub struct DiagnosisInstance {
    pub comps: BTreeSet<String>,
    pub predicates: Vec<String>,
    pub rules: Vec<GuardedRule>,
    pub obs: ObservationSet,
}

fn pick<'a>(rng: &mut impl Rng, pool: &'a [String], lo: usize, hi: usize) -> Vec<&'a str> {
    let k = rng.random_range(lo..=hi.min(pool.len()));
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| pool[i].as_str()).collect()
}

pub fn random_diagnosis_instance(rng: &mut impl Rng, max_comps: usize) -> DiagnosisInstance {
    let n_comps = rng.random_range(1..=max_comps);
    let n_preds = rng.random_range(2..=7);
    let comps: Vec<String> = (0..n_comps).map(|i| format!("c{i}")).collect();
    let predicates: Vec<String> = (0..n_preds).map(|i| format!("p{i}")).collect();
    let rules = (0..rng.random_range(1..=8))
        .map(|_| {
            let ok = pick(rng, &comps, 0, 2);
            let ante = pick(rng, &predicates, 0, 2);
            let cons = pick(rng, &predicates, 1, 2);
            GuardedRule::new(&ok, &ante, &cons)
        })
        .collect();
    let mut as_true = Vec::new();
    let mut as_false = Vec::new();
    for p in &predicates {
        match rng.random_range(0..3) {
            0 => as_true.push(p.clone()),
            1 => as_false.push(p.clone()),
            _ => {}
        }
    }
    DiagnosisInstance {
        comps: comps.into_iter().collect(),
        predicates,
        rules,
        obs: ObservationSet::new(&as_true, &as_false),
    }
}

/// Consistency by truth table: some assignment of every predicate satisfies
/// the observations and every rule whose guard is intact.
pub fn truth_table_consistent(
    predicates: &[String],
    rules: &[GuardedRule],
    obs: &ObservationSet,
    failed: &BTreeSet<String>,
) -> bool {
    let n = predicates.len();
    'assignments: for bits in 0u32..(1 << n) {
        let holds = |p: &String| {
            let i = predicates.iter().position(|q| q == p).expect("known predicate");
            bits & (1 << i) != 0
        };
        if !obs.as_true.iter().all(holds) || obs.as_false.iter().any(holds) {
            continue;
        }
        for r in rules {
            if !r.ok.is_disjoint(failed) {
                continue;
            }
            if r.antecedent.iter().all(holds) && !r.consequent.iter().all(holds) {
                continue 'assignments;
            }
        }
        return true;
    }
    false
}

/// All consistent subsets of the smallest size, found by enumerating every subset.
pub fn exhaustive_min_diagnoses(inst: &DiagnosisInstance) -> Vec<BTreeSet<String>> {
    let ids: Vec<&String> = inst.comps.iter().collect();
    let mut best: Vec<BTreeSet<String>> = Vec::new();
    let mut best_size = usize::MAX;
    for mask in 0u32..(1 << ids.len()) {
        let size = mask.count_ones() as usize;
        if size > best_size {
            continue;
        }
        let failed: BTreeSet<String> =
            ids.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| (*c).clone()).collect();
        if truth_table_consistent(&inst.predicates, &inst.rules, &inst.obs, &failed) {
            if size < best_size {
                best.clear();
                best_size = size;
            }
            best.push(failed);
        }
    }
    best.sort();
    best
}

// ---------------------------------------------------------------- planning

pub type Counts = BTreeMap<String, u32>;

pub fn counts_of(m: &ProductMultiset) -> Counts {
    m.iter().map(|(p, n)| (p.as_str().to_string(), n)).collect()
}

/// `state − inputs + outputs` on plain maps, `None` if inputs are missing.
pub fn rewrite(state: &Counts, inputs: &Counts, outputs: &Counts) -> Option<Counts> {
    let mut next = state.clone();
    for (p, &n) in inputs {
        let have = next.get(p).copied().unwrap_or(0);
        if have < n {
            return None;
        }
        if have == n {
            next.remove(p);
        } else {
            next.insert(p.clone(), have - n);
        }
    }
    for (p, &n) in outputs {
        *next.entry(p.clone()).or_insert(0) += n;
    }
    Some(next)
}

pub fn contains(state: &Counts, goal: &Counts) -> bool {
    goal.iter().all(|(p, &n)| state.get(p).copied().unwrap_or(0) >= n)
}

/// Length of the shortest usable sequence reaching `goal`, by trying every
/// sequence up to `max_depth` (no state deduplication).
pub fn exhaustive_plan_length(
    steps: &[ProductCausality],
    initial: &Counts,
    goal: &Counts,
    available: &BTreeSet<String>,
    max_depth: usize,
) -> Option<usize> {
    let usable: Vec<(Counts, Counts)> = steps
        .iter()
        .filter(|s| s.ok.is_subset(available))
        .map(|s| (counts_of(&s.inputs), counts_of(&s.outputs)))
        .collect();
    fn search(usable: &[(Counts, Counts)], state: &Counts, goal: &Counts, depth: usize, limit: usize) -> bool {
        if depth == limit {
            return contains(state, goal);
        }
        usable
            .iter()
            .any(|(i, o)| rewrite(state, i, o).is_some_and(|next| search(usable, &next, goal, depth + 1, limit)))
    }
    (0..=max_depth).find(|&limit| search(&usable, initial, goal, 0, limit))
}

pub const PRODUCTS: [&str; 4] = ["a", "b", "c", "d"];
pub const MACHINES: [&str; 3] = ["m0", "m1", "m2"];

fn random_multiset(rng: &mut impl Rng, max_items: usize) -> ProductMultiset {
    let mut m = ProductMultiset::new();
    for _ in 0..rng.random_range(1..=max_items) {
        let p = PRODUCTS[rng.random_range(0..PRODUCTS.len())];
        m.add(&aitwin::causality::ProductId::new(p), rng.random_range(1..=2));
    }
    m
}

pub struct PlanInstance {
    pub steps: Vec<ProductCausality>,
    pub initial: ProductMultiset,
    pub goal: ProductMultiset,
    pub available: BTreeSet<String>,
}

/// Up to 6 random steps over four products. Half of the goals are reached by
/// a random walk from the initial state, so most instances are solvable.
pub fn random_plan_instance(rng: &mut impl Rng) -> PlanInstance {
    let steps: Vec<ProductCausality> = (0..rng.random_range(1..=6))
        .map(|i| ProductCausality {
            name: format!("s{i}"),
            inputs: random_multiset(rng, 2),
            event: None,
            outputs: random_multiset(rng, 2),
            info: BTreeMap::new(),
            ok: MACHINES.iter().filter(|_| rng.random_bool(0.3)).map(|m| m.to_string()).collect(),
        })
        .collect();
    let available: BTreeSet<String> = MACHINES.iter().filter(|_| rng.random_bool(0.8)).map(|m| m.to_string()).collect();
    let initial = random_multiset(rng, 3);
    let goal = if rng.random_bool(0.5) {
        let mut state = counts_of(&initial);
        for _ in 0..rng.random_range(1..=5) {
            let s = &steps[rng.random_range(0..steps.len())];
            if !s.ok.is_subset(&available) {
                continue;
            }
            if let Some(next) = rewrite(&state, &counts_of(&s.inputs), &counts_of(&s.outputs)) {
                state = next;
            }
        }
        let (p, n) = state.iter().next_back().map(|(p, &n)| (p.clone(), n)).unwrap_or(("a".into(), 1));
        ProductMultiset::from_counts(&[(p.as_str(), n)])
    } else {
        random_multiset(rng, 2)
    };
    PlanInstance { steps, initial, goal, available }
}
