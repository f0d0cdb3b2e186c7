//! Symbolic plant knowledge generated from a scenario's topology: nominal
//! concepts, OK-guarded diagnosis rules, predicate bindings and the system
//! causalities used for state-consistency checks.

use std::collections::{BTreeMap, BTreeSet};

use super::{Node, Scenario, ScenarioError};
use crate::causality::{Bindings, CausalModel, LinearInequality, SystemCausality};
use crate::diagnosis::GuardedRule;

/// Relative half-width of the nominal band around the fault-free steady state.
pub const NOMINAL_BAND: f64 = 0.2;

/// Band half-width used for signals whose nominal value is zero.
const ZERO_BAND: f64 = 1e-3;

/// Level fraction of hMax above which a tank counts as full.
const FULL_FRACTION: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct DiagnosisKnowledge {
    pub model: CausalModel,
    pub rules: Vec<GuardedRule>,
    pub bindings: Bindings,
}

fn band(model: &mut CausalModel, index: usize, nominal: f64, name: &str) -> Result<(), ScenarioError> {
    let n = model.dimension();
    let w = if nominal == 0.0 { ZERO_BAND } else { NOMINAL_BAND * nominal.abs() };
    let invalid = |e: crate::causality::CausalityError| ScenarioError::Invalid(e.to_string());
    let region = vec![
        LinearInequality::lower(n, index, nominal - w).map_err(invalid)?,
        LinearInequality::upper(n, index, nominal + w).map_err(invalid)?,
    ];
    model.define_concept(region, name).map_err(invalid)?;
    Ok(())
}

impl DiagnosisKnowledge {
    pub fn for_scenario(sc: &Scenario) -> Result<Self, ScenarioError> {
        let topo = sc.topology()?;
        let nominal = topo.signals(&sc.steady_state()?);
        let schema = topo.schema();
        let names: Vec<String> = schema.names().map(String::from).collect();
        let comps = topo.components().into_iter().map(|c| c.id);
        let mut model = CausalModel::new(names.clone(), comps);
        let invalid = |e: crate::causality::CausalityError| ScenarioError::Invalid(e.to_string());

        let mut bindings = Bindings::new();
        for (i, name) in names.iter().enumerate() {
            band(&mut model, i, nominal[i], &format!("{name}_nominal"))?;
            bindings.insert(format!("{name}_ok"), format!("{name}_nominal"));
        }

        let flow_ok = |j: usize| format!("{}_flow_ok", topo.valves[j].id);
        let mut rules = Vec::new();
        let mut system = Vec::new();
        let ok_of = |ids: Vec<&str>| ids.into_iter().map(String::from).collect::<BTreeSet<String>>();
        let hold = |signal: &str, ok: BTreeSet<String>, model: &CausalModel| {
            let c = model.concept_by_name(&format!("{signal}_nominal")).expect("defined above").id;
            SystemCausality { name: format!("{signal}_hold"), from: c, event: None, to: c, info: BTreeMap::new(), ok }
        };

        for (j, v) in topo.valves.iter().enumerate() {
            if v.from == Node::Source {
                let ok = ok_of(vec![topo.pump.as_str(), v.id.as_str()]);
                rules.push(GuardedRule {
                    ok: ok.clone(),
                    antecedent: BTreeSet::new(),
                    consequent: [flow_ok(j)].into(),
                });
                system.push(hold(&names[j], ok, &model));
            }
        }
        for (i, tank) in topo.tanks.iter().enumerate() {
            let (inflow, outflow) = topo.valves_of(i);
            let mut ok = ok_of(vec![tank.id.as_str()]);
            ok.extend(outflow.iter().map(|&j| topo.valves[j].id.clone()));
            let mut consequent: BTreeSet<String> = outflow.iter().map(|&j| flow_ok(j)).collect();
            consequent.insert(format!("{}_level_ok", tank.id));
            rules.push(GuardedRule {
                ok: ok.clone(),
                antecedent: inflow.iter().map(|&j| flow_ok(j)).collect(),
                consequent,
            });

            let level = topo.level_signal(i);
            let mut level_ok = ok.clone();
            level_ok.extend(inflow.iter().map(|&j| topo.valves[j].id.clone()));
            system.push(hold(&names[level], level_ok, &model));
            for &j in &outflow {
                system.push(hold(&names[j], ok_of(vec![tank.id.as_str(), topo.valves[j].id.as_str()]), &model));
            }

            // filling/full pair with the overflow event between them
            let n = model.dimension();
            let full_at = FULL_FRACTION * tank.h_max;
            let high = model
                .define_event(
                    LinearInequality::lower(n, level, full_at).map_err(invalid)?,
                    &format!("{}_high", tank.id),
                )
                .map_err(invalid)?;
            let filling = model
                .define_concept(
                    vec![LinearInequality::upper(n, level, full_at).map_err(invalid)?],
                    &format!("{}_filling", tank.id),
                )
                .map_err(invalid)?;
            let full = model
                .define_concept(
                    vec![LinearInequality::lower(n, level, full_at).map_err(invalid)?],
                    &format!("{}_full", tank.id),
                )
                .map_err(invalid)?;
            let mut fill_ok = ok_of(vec![tank.id.as_str()]);
            fill_ok.extend(inflow.iter().map(|&j| topo.valves[j].id.clone()));
            system.push(SystemCausality {
                name: format!("{}_fill", tank.id),
                from: filling,
                event: Some(high),
                to: full,
                info: BTreeMap::new(),
                ok: fill_ok,
            });
        }
        for sc in system {
            model.add_system_causality(sc).map_err(invalid)?;
        }
        Ok(DiagnosisKnowledge { model, rules, bindings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::TankConfig;

    #[test]
    fn four_tank_knowledge() {
        let k = DiagnosisKnowledge::for_scenario(&Scenario::new(TankConfig::FourTanks)).unwrap();
        assert_eq!(k.bindings.len(), 11);
        assert_eq!(k.bindings["v0_flow_ok"], "v0_flow_nominal");
        assert_eq!(k.bindings["t3_level_ok"], "t3_level_nominal");
        // one source rule plus one per tank
        assert_eq!(k.rules.len(), 5);
        let filling = k.model.concept_by_name("t0_filling").unwrap().id;
        let fill = k.model.get_system_causalities(filling).unwrap();
        assert_eq!(fill.len(), 1);
        assert_eq!(fill[0].ok, ["t0", "v0"].map(String::from).into());
        assert_eq!(k.model.event(fill[0].event.unwrap()).unwrap().name, "t0_high");
    }

    #[test]
    fn steady_state_lies_in_every_nominal_concept() {
        let sc = Scenario::new(TankConfig::ThreeTanks);
        let k = DiagnosisKnowledge::for_scenario(&sc).unwrap();
        let x = sc.topology().unwrap().signals(&sc.steady_state().unwrap());
        for c in k.bindings.values() {
            assert!(k.model.concept_by_name(c).unwrap().contains(&x), "{c}");
        }
    }
}
