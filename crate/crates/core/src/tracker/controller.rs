//! Track lifecycle: link states gate when the particle filter starts and stops.

use super::filter::ParticleFilter;
use super::measurement::LinkObservation;
use super::particles::KinematicState;
use crate::error::{DflError, Result};
use crate::link_state::{gate_events, GateEvent, HmmConfig, LinkStateEstimate, LinkStateFilter};
use crate::rss_model::PropagationState;
use crate::spectral::FrequencyMeasurement;

/// Per-link input at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInput {
    pub rss: Option<f64>,
    pub freq: FrequencyMeasurement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub estimate: Option<KinematicState>,
    pub event: GateEvent,
    pub link_states: Vec<LinkStateEstimate>,
}

/// Decides what the filter does given the current link states, and does it.
pub fn controller_step(
    filter: &mut ParticleFilter,
    observations: &[LinkObservation],
    heading_hint: f64,
) -> Result<(Option<KinematicState>, GateEvent)> {
    let states: Vec<PropagationState> = observations.iter().map(|o| o.state).collect();
    let event = gate_events(&states, filter.is_running());
    match event {
        GateEvent::StopTracking => {
            filter.stop();
            Ok((None, event))
        }
        GateEvent::StartTracking => {
            let trigger = states
                .iter()
                .position(|&s| s == PropagationState::Shadowing)
                .expect("start implies a shadowed link");
            Ok((Some(filter.initialize(trigger, heading_hint, observations)?), event))
        }
        GateEvent::None if filter.is_running() => Ok((Some(filter.step(observations)?), event)),
        GateEvent::None => Ok((None, event)),
    }
}

/// HMM-gated tracker: one link-state filter per link plus the particle filter.
#[derive(Debug, Clone)]
pub struct Tracker {
    filter: ParticleFilter,
    link_states: Vec<LinkStateFilter>,
    heading_hint: f64,
}

impl Tracker {
    pub fn new(filter: ParticleFilter, hmm: HmmConfig, heading_hint: f64) -> Result<Self> {
        let link_states = (0..filter.links().len())
            .map(|_| LinkStateFilter::new(hmm.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            filter,
            link_states,
            heading_hint,
        })
    }

    pub fn filter(&self) -> &ParticleFilter {
        &self.filter
    }

    pub fn step(&mut self, inputs: &[LinkInput]) -> Result<StepOutput> {
        if inputs.len() != self.link_states.len() {
            return Err(DflError::LengthMismatch {
                expected: self.link_states.len(),
                got: inputs.len(),
            });
        }
        let link_states: Vec<LinkStateEstimate> = self
            .link_states
            .iter_mut()
            .zip(inputs)
            .map(|(hmm, inp)| hmm.step(inp.rss))
            .collect();
        let obs: Vec<LinkObservation> = inputs
            .iter()
            .zip(&link_states)
            .map(|(inp, est)| LinkObservation {
                rss: inp.rss,
                freq: inp.freq,
                state: est.state,
            })
            .collect();
        let (estimate, event) = controller_step(&mut self.filter, &obs, self.heading_hint)?;
        Ok(StepOutput {
            estimate,
            event,
            link_states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Link, Point2};
    use crate::rss_model::{EllipseParams, ReflectionParams};
    use crate::spectral::SpectralConfig;
    use crate::tracker::{MeasurementModel, TrackerConfig};
    use PropagationState::*;

    fn filter() -> ParticleFilter {
        let links = vec![
            Link::new(0, Point2::new(0.0, 0.0), Point2::new(0.0, 3.0), 2.4e9).unwrap(),
            Link::new(1, Point2::new(0.0, 0.0), Point2::new(1.0, 3.0), 2.4e9).unwrap(),
        ];
        let model = MeasurementModel {
            reflection: ReflectionParams::default(),
            ellipse: EllipseParams::default(),
            spectral: SpectralConfig::default(),
        };
        let cfg = TrackerConfig { particles: 64, ..Default::default() };
        ParticleFilter::new(cfg, model, links, 3).unwrap()
    }

    fn obs(states: [PropagationState; 2]) -> Vec<LinkObservation> {
        states
            .iter()
            .map(|&state| LinkObservation {
                rss: Some(if state == Shadowing { -8.0 } else { 0.0 }),
                freq: FrequencyMeasurement::INVALID,
                state,
            })
            .collect()
    }

    #[test]
    fn lifecycle() {
        let mut f = filter();
        let (e, ev) = controller_step(&mut f, &obs([NonFading, NonFading]), 0.0).unwrap();
        assert!(e.is_none() && ev == GateEvent::None);

        let (e, ev) = controller_step(&mut f, &obs([Shadowing, Reflection]), 0.0).unwrap();
        assert!(e.is_some() && ev == GateEvent::StartTracking && f.is_running());

        let (e, ev) = controller_step(&mut f, &obs([Reflection, Reflection]), 0.0).unwrap();
        assert!(e.is_some() && ev == GateEvent::None);

        let (e, ev) = controller_step(&mut f, &obs([NonFading, NonFading]), 0.0).unwrap();
        assert!(e.is_none() && ev == GateEvent::StopTracking && !f.is_running());

        let (e, _) = controller_step(&mut f, &obs([NonFading, Reflection]), 0.0).unwrap();
        assert!(e.is_none());
    }

    #[test]
    fn tracker_rejects_wrong_arity() {
        let mut t = Tracker::new(filter(), HmmConfig::default(), 0.0).unwrap();
        let inp = LinkInput { rss: Some(0.0), freq: FrequencyMeasurement::INVALID };
        assert!(t.step(&[inp]).is_err());
        assert!(t.step(&[inp, inp]).is_ok());
    }
}
