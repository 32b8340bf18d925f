use std::f64::consts::FRAC_PI_4;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::measurement::{
    predict_all, update_weights, LinkObservation, MeasurementModel, MeasurementNoiseConfig, PredictedMeasurement,
};
use super::particles::{estimate, normalize, predict, resample, KinematicState, ParticleSet, ProcessNoiseConfig};
use crate::error::{DflError, Result};
use crate::geometry::{from_link_local, Link, LinkLocalCoords, Velocity2};

/// Prior used when a track is started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Speeds are drawn from U(0, max_speed), m/s.
    pub max_speed: f64,
    /// Headings are drawn from U(hint - spread, hint + spread), rad.
    pub heading_spread: f64,
    /// Std of the initial offset from the triggering LoS, m.
    pub perp_std: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            max_speed: 2.0,
            heading_spread: FRAC_PI_4,
            perp_std: 0.3,
        }
    }
}

impl InitConfig {
    /// The narrower prior: U(0, 1) m/s and ±π/8.
    pub fn narrow() -> Self {
        Self {
            max_speed: 1.0,
            heading_spread: FRAC_PI_4 / 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed >= 0.0 && self.heading_spread >= 0.0 && self.perp_std >= 0.0) {
            return Err(DflError::config("init prior widths must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub particles: usize,
    pub process_noise: ProcessNoiseConfig,
    pub measurement_noise: MeasurementNoiseConfig,
    pub init: InitConfig,
    /// Fuse the frequency-domain measurement R(k).
    pub use_frequency: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            particles: 512,
            process_noise: ProcessNoiseConfig::default(),
            measurement_noise: MeasurementNoiseConfig::default(),
            init: InitConfig::default(),
            use_frequency: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(DflError::config("particle count must be >= 1"));
        }
        if !(self.process_noise.sigma > 0.0) {
            return Err(DflError::config("process noise sigma must be > 0"));
        }
        self.init.validate()
    }
}

/// Draws the initial hypotheses around the LoS of `trigger`.
pub fn initialize<R: Rng + ?Sized>(
    trigger: &Link,
    heading_hint: f64,
    init: &InitConfig,
    n: usize,
    rng: &mut R,
) -> ParticleSet {
    let perp = Normal::new(0.0, init.perp_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let states: Vec<KinematicState> = (0..n)
        .map(|_| {
            let along = rng.random::<f64>() * trigger.length();
            let offset = if init.perp_std > 0.0 { perp.sample(rng) } else { 0.0 };
            let speed = rng.random::<f64>() * init.max_speed;
            let heading = heading_hint + (2.0 * rng.random::<f64>() - 1.0) * init.heading_spread;
            let p = from_link_local(LinkLocalCoords { along, perp: offset }, trigger);
            KinematicState::new(p, Velocity2::from_polar(speed, heading))
        })
        .collect();
    ParticleSet::uniform(states)
}

/// Bootstrap particle filter over the constant-velocity state.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    cfg: TrackerConfig,
    model: MeasurementModel,
    links: Vec<Link>,
    rng: ChaCha8Rng,
    set: Option<ParticleSet>,
    predictions: Vec<Option<PredictedMeasurement>>,
    degenerate_resets: usize,
}

impl ParticleFilter {
    pub fn new(cfg: TrackerConfig, model: MeasurementModel, links: Vec<Link>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        model.spectral.validate()?;
        model.reflection.validate()?;
        model.ellipse.validate()?;
        if links.is_empty() {
            return Err(DflError::config("tracker needs at least one link"));
        }
        Ok(Self {
            cfg,
            model,
            links,
            rng: ChaCha8Rng::seed_from_u64(seed),
            set: None,
            predictions: Vec::new(),
            degenerate_resets: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn is_running(&self) -> bool {
        self.set.is_some()
    }

    pub fn particles(&self) -> Option<&ParticleSet> {
        self.set.as_ref()
    }

    /// Times the weights collapsed to zero and were reset to uniform.
    pub fn degenerate_resets(&self) -> usize {
        self.degenerate_resets
    }

    fn check_observations(&self, obs: &[LinkObservation]) -> Result<()> {
        if obs.len() != self.links.len() {
            return Err(DflError::LengthMismatch {
                expected: self.links.len(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    fn masked(&self, obs: &[LinkObservation]) -> Vec<LinkObservation> {
        let mut obs = obs.to_vec();
        if !self.cfg.use_frequency {
            obs.iter_mut().for_each(|o| o.freq.valid = false);
        }
        obs
    }

    /// Measure, weight, normalize, resample, estimate.
    fn correct(&mut self, obs: &[LinkObservation]) -> Result<KinematicState> {
        let obs = self.masked(obs);
        let set = self.set.as_mut().expect("filter running");
        predict_all(set, &self.links, &obs, &self.model, &mut self.predictions);
        let outcome = update_weights(set, &obs, &self.predictions, &self.cfg.measurement_noise)?;
        if outcome.degenerate {
            self.degenerate_resets += 1;
        }
        if normalize(set).is_err() {
            set.reset_uniform();
            self.degenerate_resets += 1;
        }
        resample(set, &mut self.rng);
        Ok(estimate(set))
    }

    /// Starts a track on `trigger` (index into the links).
    ///
    /// Positions are drawn around the trigger LoS and velocities from the speed and
    /// heading prior. One correction pass on `obs` yields a velocity estimate; the
    /// track then starts from the drawn positions, all carrying that velocity.
    pub fn initialize(&mut self, trigger: usize, heading_hint: f64, obs: &[LinkObservation]) -> Result<KinematicState> {
        self.check_observations(obs)?;
        let link = self
            .links
            .get(trigger)
            .ok_or_else(|| DflError::config(format!("no link with index {trigger}")))?
            .clone();
        let prior = initialize(&link, heading_hint, &self.cfg.init, self.cfg.particles, &mut self.rng);
        self.set = Some(prior.clone());
        let est = self.correct(obs)?;
        let mut set = prior;
        for p in &mut set.particles {
            p.state.vx = est.vx;
            p.state.vy = est.vy;
        }
        let out = estimate(&set);
        self.set = Some(set);
        Ok(out)
    }

    /// One predict/correct cycle on a running filter.
    pub fn step(&mut self, obs: &[LinkObservation]) -> Result<KinematicState> {
        self.check_observations(obs)?;
        let dt = self.model.spectral.sample_interval;
        let set = self
            .set
            .as_mut()
            .ok_or_else(|| DflError::config("particle filter is not initialized"))?;
        predict(set, dt, &self.cfg.process_noise, &mut self.rng);
        self.correct(obs)
    }

    pub fn stop(&mut self) {
        self.set = None;
    }
}
