mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aitwin::causality::{format_inequality, parse_halfspace, CausalModel, LinearInequality};
use aitwin::data_model::{DataStore, Sample, SignalSchema, SignalVector};
use aitwin::diagnosis::{diagnose, is_consistent};
use aitwin::harness::auc;
use aitwin::planning::{apply_step, plan, PlanError, ProductMultiset};
use aitwin::prediction::{FailureAssignment, FittedModel, KnnKde, Session};
use aitwin::simulator::{NoiseSpec, Scenario, TankConfig};
use aitwin::Twin;

use common::*;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn halfspace(n: usize) -> impl Strategy<Value = LinearInequality> {
    (prop::collection::vec(-2.0f64..2.0, n), -2.0f64..2.0)
        .prop_filter("nonzero coefficients", |(c, _)| c.iter().any(|v| v.abs() > 1e-6))
        .prop_map(|(c, b)| LinearInequality::new(c, b).unwrap())
}

/// Dimension, a few events, and two points.
fn event_case() -> impl Strategy<Value = (usize, Vec<LinearInequality>, Vec<f64>, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|n| (Just(n), prop::collection::vec(halfspace(n), 1..6), vector(n), vector(n)))
}

fn event_model(n: usize, events: &[LinearInequality]) -> CausalModel {
    let mut m = CausalModel::new(names(n), []);
    for (k, h) in events.iter().enumerate() {
        m.define_event(h.clone(), &format!("e{k}")).unwrap();
    }
    m
}

proptest! {
    #[test]
    fn get_event_is_symmetric((n, events, x, x2) in event_case()) {
        let m = event_model(n, &events);
        let a = m.get_event(&SignalVector::complete(&x), &SignalVector::complete(&x2)).unwrap();
        let b = m.get_event(&SignalVector::complete(&x2), &SignalVector::complete(&x)).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(m.get_event(&SignalVector::complete(&x), &SignalVector::complete(&x)).unwrap().is_empty());
    }

    #[test]
    fn concepts_are_convex((n, region, a, b) in (1usize..=4).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(halfspace(n), 1..5), vector(n), vector(n))
    })) {
        let mut m = CausalModel::new(names(n), []);
        let id = m.define_concept(region.clone(), "s").unwrap();
        let inside = |x: &[f64]| m.get_concepts(&SignalVector::complete(x)).unwrap().contains(&id);
        // membership duality
        prop_assert_eq!(inside(&a), region.iter().all(|h| h.holds(&a)));
        if inside(&a) && inside(&b) {
            let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p + q) / 2.0).collect();
            prop_assert!(inside(&mid));
        }
    }

    #[test]
    fn inequality_text_round_trips(h in (1usize..=4).prop_flat_map(halfspace)) {
        let names = names(h.dimension());
        let text = format_inequality(&h, &names);
        prop_assert_eq!(parse_halfspace(&text, &names).unwrap(), h);
    }

    #[test]
    fn diagnosis_matches_exhaustive_search(seed in any::<u64>()) {
        let inst = random_diagnosis_instance(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let got: Vec<BTreeSet<String>> =
            diagnose(&inst.rules, &inst.obs, &inst.comps).unwrap().into_iter().map(|d| d.suspects).collect();
        prop_assert_eq!(&got, &exhaustive_min_diagnoses(&inst));
        // soundness and minimality
        for d in &got {
            prop_assert!(is_consistent(&inst.rules, &inst.obs, d).unwrap());
            for c in d {
                let mut smaller = d.clone();
                smaller.remove(c);
                prop_assert!(!is_consistent(&inst.rules, &inst.obs, &smaller).unwrap());
            }
        }
    }

    #[test]
    fn retracting_more_guards_keeps_consistency(seed in any::<u64>(), mask in any::<u8>(), extra in any::<u8>()) {
        let inst = random_diagnosis_instance(&mut ChaCha8Rng::seed_from_u64(seed), 6);
        let ids: Vec<&String> = inst.comps.iter().collect();
        let subset = |m: u8| -> BTreeSet<String> {
            ids.iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, c)| (*c).clone()).collect()
        };
        let d = subset(mask);
        let sup = subset(mask | extra);
        let direct = is_consistent(&inst.rules, &inst.obs, &d).unwrap();
        prop_assert_eq!(direct, truth_table_consistent(&inst.predicates, &inst.rules, &inst.obs, &d));
        if direct {
            prop_assert!(is_consistent(&inst.rules, &inst.obs, &sup).unwrap());
        }
    }

    #[test]
    fn empty_rules_diagnose_nothing(seed in any::<u64>()) {
        let inst = random_diagnosis_instance(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let d = diagnose(&[], &inst.obs, &inst.comps).unwrap();
        prop_assert_eq!(d.len(), 1);
        prop_assert!(d[0].suspects.is_empty());
    }

    #[test]
    fn plans_are_optimal_and_replay(seed in any::<u64>()) {
        let inst = random_plan_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let expected = exhaustive_plan_length(
            &inst.steps, &counts_of(&inst.initial), &counts_of(&inst.goal), &inst.available, 6,
        );
        match plan(&inst.steps, &inst.initial, &inst.goal, &inst.available, 6) {
            Ok(p) => {
                prop_assert_eq!(Some(p.len()), expected);
                let mut state = inst.initial.clone();
                for name in &p.steps {
                    let step = inst.steps.iter().find(|s| &s.name == name).unwrap();
                    prop_assert!(step.ok.is_subset(&inst.available));
                    state = apply_step(&state, step).unwrap();
                }
                prop_assert!(state.contains(&inst.goal));
            }
            Err(PlanError::NoPlanFound(_)) => prop_assert_eq!(expected, None),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn fewer_machines_never_shorten_plans(seed in any::<u64>(), drop in 0usize..3) {
        let inst = random_plan_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fewer = inst.available.clone();
        fewer.remove(MACHINES[drop]);
        let len = |avail: &BTreeSet<String>| plan(&inst.steps, &inst.initial, &inst.goal, avail, 6).ok().map(|p| p.len());
        match (len(&inst.available), len(&fewer)) {
            (None, Some(_)) => prop_assert!(false, "restricting machines made the goal reachable"),
            (Some(a), Some(b)) => prop_assert!(b >= a),
            _ => {}
        }
    }

    #[test]
    fn apply_step_is_multiset_arithmetic(seed in any::<u64>()) {
        let inst = random_plan_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        for step in &inst.steps {
            let expected = rewrite(&counts_of(&inst.initial), &counts_of(&step.inputs), &counts_of(&step.outputs));
            let got = apply_step(&inst.initial, step).ok().map(|m| counts_of(&m));
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn auc_ignores_monotone_rescaling_and_flips_with_labels(
        scored in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
    ) {
        let Some(a) = auc(&scored) else { return Ok(()) };
        let rescaled: Vec<(f64, bool)> = scored.iter().map(|&(s, l)| ((3.0 * s).exp() - 7.0, l)).collect();
        prop_assert!((auc(&rescaled).unwrap() - a).abs() < 1e-12);
        let flipped: Vec<(f64, bool)> = scored.iter().map(|&(s, l)| (s, !l)).collect();
        prop_assert!((auc(&flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------- data model

fn affine_store(slopes: &[f64], times: &[f64]) -> DataStore {
    let schema = SignalSchema::new(names(slopes.len()).into_iter().map(|n| (n, "u"))).unwrap();
    let mut store = DataStore::new(schema);
    for &t in times {
        store
            .ingest(Sample::new(t, slopes.iter().enumerate().map(|(i, a)| a * t + i as f64).collect()).unwrap())
            .unwrap();
    }
    store
}

fn increasing_times() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..5.0, 2..30).prop_map(|gaps| {
        gaps.iter()
            .scan(0.0, |t, g| {
                *t += g;
                Some(*t)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn interpolation_is_exact_on_affine_signals(
        slopes in prop::collection::vec(-5.0f64..5.0, 1..5),
        times in increasing_times(),
        frac in 0.0f64..1.0,
    ) {
        let store = affine_store(&slopes, &times);
        let t = times[0] + frac * (times[times.len() - 1] - times[0]);
        let all = store.get_all(t).unwrap();
        for (i, a) in slopes.iter().enumerate() {
            prop_assert!((all[i] - (a * t + i as f64)).abs() <= 1e-9);
            prop_assert_eq!(store.get(i, t).unwrap().to_bits(), all[i].to_bits());
        }
        for s in store.samples() {
            prop_assert_eq!(&store.get_all(s.at.secs()).unwrap(), &s.x);
        }
    }

    #[test]
    fn csv_round_trip_preserves_samples(slopes in prop::collection::vec(-5.0f64..5.0, 1..4), times in increasing_times()) {
        let store = affine_store(&slopes, &times);
        let mut buf = Vec::new();
        store.write_csv(&mut buf).unwrap();
        let back = DataStore::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.samples(), store.samples());
    }

    #[test]
    fn out_of_order_ingest_leaves_store_unchanged(times in increasing_times(), back in 0.0f64..1.0) {
        let mut store = affine_store(&[1.0], &times);
        let before = store.samples().to_vec();
        let last = times[times.len() - 1];
        prop_assert!(store.ingest(Sample::new(last - back * last, vec![0.0]).unwrap()).is_err());
        prop_assert_eq!(store.samples(), before.as_slice());
    }
}

// ---------------------------------------------------------------- prediction

struct Fixture {
    knn: Session,
    physics: Session,
    n: usize,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut sc = Scenario::new(TankConfig::FourTanks);
        sc.duration = 200.0;
        sc.noise_sigma = NoiseSpec::Uniform(0.0);
        let mut twin = Twin::from_scenario(&sc).unwrap();
        let history = twin.store().samples().to_vec();
        twin.fit_named("knn-kde", &history).unwrap();
        let knn = twin.session();
        twin.fit_named("physics", &history).unwrap();
        Fixture { knn, physics: twin.session(), n: history[0].x.len() }
    })
}

fn partial_vector(n: usize) -> impl Strategy<Value = SignalVector> {
    prop::collection::vec(prop::option::of(-1.0f64..3.0), n).prop_map(SignalVector)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn static_predictions_echo_and_pair_nullity(partial in partial_vector(fixture().n)) {
        for session in [&fixture().knn, &fixture().physics] {
            let r = session.extrapolate_static(&partial).unwrap();
            for i in 0..partial.len() {
                prop_assert_eq!(r.x.0[i].is_some(), r.p[i].is_some());
                if let Some(p) = r.p[i] {
                    prop_assert!((0.0..=1.0).contains(&p));
                }
                if let Some(v) = partial.0[i] {
                    prop_assert_eq!(r.x.0[i].map(f64::to_bits), Some(v.to_bits()));
                    prop_assert_eq!(r.p[i], Some(1.0));
                }
            }
        }
    }

    #[test]
    fn empty_failure_assignment_changes_nothing(partial in partial_vector(fixture().n)) {
        for session in [&fixture().knn, &fixture().physics] {
            let mut cleared = session.clone();
            cleared.set_failed_comps(FailureAssignment::new()).unwrap();
            prop_assert_eq!(cleared.extrapolate_static(&partial).unwrap(), session.extrapolate_static(&partial).unwrap());
        }
    }

    #[test]
    fn kernel_density_falls_off_with_distance(
        centre in prop::collection::vec(-2.0f64..2.0, 3),
        dir in prop::collection::vec(-1.0f64..1.0, 3),
        mut radii in prop::collection::vec(0.0f64..2.0, 2..8),
    ) {
        let model = FittedModel::fit(Box::new(KnnKde::default()), &[Sample::new(0.0, centre.clone()).unwrap()]).unwrap();
        let session = Session::new(Some(std::sync::Arc::new(model)), std::sync::Arc::new(vec![]), 3);
        radii.sort_by(f64::total_cmp);
        let at = |r: f64| -> Vec<f64> { centre.iter().zip(&dir).map(|(c, d)| c + r * d).collect() };
        for w in radii.windows(2) {
            let (near, far) = (at(w[0]), at(w[1]));
            prop_assert!(session.anomaly_score_static(&far).unwrap() <= session.anomaly_score_static(&near).unwrap());
            let kde = session.model().unwrap().kde();
            prop_assert!(kde.log_density(&far) <= kde.log_density(&near));
        }
    }
}

#[test]
fn unmodelled_failure_modes_give_missing_predictions() {
    let f = fixture();
    let mut s = f.knn.clone();
    s.set_failed_comps(FailureAssignment::new().with("v0", "blocked")).unwrap();
    let r = s.extrapolate_static(&SignalVector::missing(f.n)).unwrap();
    assert!(r.x.0.iter().all(Option::is_none) && r.p.iter().all(Option::is_none));

    let mut p = f.physics.clone();
    p.set_failed_comps(FailureAssignment::new().with("v0", "blocked")).unwrap();
    let r = p.extrapolate_static(&SignalVector::missing(f.n)).unwrap();
    assert_eq!(r.x.0[0], Some(0.0));
}

#[test]
fn goal_multiset_already_present_needs_no_steps() {
    let m = ProductMultiset::from_counts(&[("a", 2)]);
    let p = plan(&[], &m, &ProductMultiset::from_counts(&[("a", 1)]), &BTreeSet::new(), 3).unwrap();
    assert!(p.is_empty());
}
