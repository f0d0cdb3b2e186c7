//! Failure-aware backend that runs the plant's own discrete dynamics.

use super::{FailureAssignment, PredictionError, PredictionResult, PredictorBackend, Result};
use crate::data_model::{Sample, SignalVector};
use crate::simulator::{Command, Drive, Fault, FaultMode, Node, Topology};

const STEADY_STATE_STEPS: usize = 200_000;

/// What the physics backend knows about the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub topology: Topology,
    pub commands: Vec<Command>,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct Physics {
    plant: PlantModel,
    fitted: bool,
}

impl Physics {
    pub fn new(plant: PlantModel) -> Self {
        Physics { plant, fitted: false }
    }

    /// Failure modes as faults active from `onset` with catalogue-default magnitudes.
    fn drive(&self, failures: &FailureAssignment, onset: f64) -> Drive {
        let faults = failures
            .iter()
            .filter_map(|(component, mode)| {
                let mode = FaultMode::from_mode_name(mode)?;
                Some(Fault { component: component.to_string(), mode, onset, magnitude: mode.default_magnitude() })
            })
            .collect();
        Drive { commands: self.plant.commands.clone(), faults }
    }

    fn levels_of(&self, x: &[f64]) -> Vec<f64> {
        let topo = &self.plant.topology;
        topo.tanks.iter().enumerate().map(|(i, t)| x[topo.level_signal(i)].clamp(0.0, t.h_max)).collect()
    }
}

impl PredictorBackend for Physics {
    fn name(&self) -> &'static str {
        "physics"
    }

    fn honors_failures(&self) -> bool {
        true
    }

    fn fit(&mut self, history: &[Sample]) -> Result<()> {
        let n = history.first().ok_or(PredictionError::EmptyHistory)?.x.len();
        if n != self.plant.topology.signal_count() {
            return Err(PredictionError::SchemaMismatch(format!(
                "plant has {} signals, history has {n}",
                self.plant.topology.signal_count()
            )));
        }
        self.fitted = true;
        Ok(())
    }

    /// Equilibrium of the plant under the active failure modes. A given
    /// source-valve flow replaces the pump delivery.
    fn predict_static(&self, partial: &SignalVector, failures: &FailureAssignment) -> Result<PredictionResult> {
        if !self.fitted {
            return Err(PredictionError::NotFitted);
        }
        let mut topo = self.plant.topology.clone();
        let mut drive = self.drive(failures, 0.0);
        let source = topo.valves.iter().position(|v| v.from == Node::Source);
        if let Some((j, q)) = source.and_then(|j| partial.get(j).map(|q| (j, q))) {
            topo.source_flow = q.max(0.0);
            topo.valves[j].opening = 1.0;
            let source_id = topo.valves[j].id.clone();
            drive.faults.retain(|f| f.component != source_id && f.component != topo.pump);
            drive.commands.retain(|c| c.valve != source_id);
        }
        match topo.steady_state(&drive, self.plant.dt, STEADY_STATE_STEPS) {
            Some(ss) => Ok(PredictionResult::certain(&topo.signals(&ss))),
            None => Ok(PredictionResult::missing(partial.len())),
        }
    }

    fn predict_dynamic(
        &self,
        window: &[Sample],
        horizon: f64,
        failures: &FailureAssignment,
    ) -> Result<PredictionResult> {
        if !self.fitted {
            return Err(PredictionError::NotFitted);
        }
        let last = window.last().ok_or(PredictionError::EmptyWindow)?;
        let topo = &self.plant.topology;
        let dt = self.plant.dt;
        let t0 = last.at.secs();
        let drive = self.drive(failures, t0);
        let mut state = topo.state_at(t0, self.levels_of(&last.x), &drive, dt);
        let steps = (horizon / dt + 1e-9).floor() as usize;
        for _ in 0..steps {
            state = topo.step(&state, &drive, dt);
        }
        let rest = horizon - steps as f64 * dt;
        if rest > 1e-9 * dt {
            // partial step; the flows of the landing state use the regular dt
            let partial = topo.state_at(state.t.secs(), state.levels.clone(), &drive, rest);
            let next = topo.step(&partial, &drive, rest);
            state = topo.state_at(next.t.secs(), next.levels, &drive, dt);
        }
        Ok(PredictionResult::certain(&topo.signals(&state)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{NoiseSpec, Scenario, TankConfig};

    fn backend(sc: &Scenario) -> Physics {
        let mut b = Physics::new(PlantModel { topology: sc.topology().unwrap(), commands: vec![], dt: sc.dt });
        let run = sc.run().unwrap();
        b.fit(run.data.samples()).unwrap();
        b
    }

    #[test]
    fn reproduces_the_simulator() {
        let mut sc = Scenario::new(TankConfig::FourTanks);
        sc.noise_sigma = NoiseSpec::Uniform(0.0);
        sc.duration = 100.0;
        let b = backend(&sc);
        let run = sc.run().unwrap();
        let none = FailureAssignment::new();
        for w in run.data.samples().windows(2) {
            let r = b.predict_dynamic(&w[..1], 1.0, &none).unwrap();
            for (p, a) in r.x.0.iter().zip(&w[1].x) {
                assert!((p.unwrap() - a).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn blocked_source_valve_predicts_no_flow() {
        let sc = Scenario::new(TankConfig::FourTanks);
        let b = backend(&sc);
        let run = sc.run().unwrap();
        let fa = FailureAssignment::new().with("v0", "blocked");
        let r = b.predict_dynamic(run.data.slice(300.0, 320.0), 1.0, &fa).unwrap();
        assert_eq!(r.x.get(0), Some(0.0));
    }

    #[test]
    fn steady_state_balances_source_and_drain() {
        let sc = Scenario::new(TankConfig::FourTanks);
        let b = backend(&sc);
        let mut partial = SignalVector::missing(11);
        partial.0[0] = Some(0.12);
        let r = b.predict_static(&partial, &FailureAssignment::new()).unwrap();
        assert!((r.x.get(6).unwrap() - 0.12).abs() < 1e-9);
    }

    #[test]
    fn fractional_horizon() {
        let mut sc = Scenario::new(TankConfig::ATank);
        sc.noise_sigma = NoiseSpec::Uniform(0.0);
        let b = backend(&sc);
        let run = sc.run().unwrap();
        let w = &run.data.samples()[..1];
        let r = b.predict_dynamic(w, 2.5, &FailureAssignment::new()).unwrap();
        // the tank is still filling, so the level lands between the 2 s and 3 s samples
        let level = r.x.get(2).unwrap();
        assert!(level > run.data.get(2, 2.0).unwrap() && level < run.data.get(2, 3.0).unwrap());
    }
}
