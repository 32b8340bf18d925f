//! Scenario synthesis: constant-velocity walker, per-channel RSS over all links.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::geometry::{Link, Point2, Velocity2};
use crate::rss_model::{
    raw_rss, three_state_gain, true_state, ChannelParams, EllipseParams, PropagationState, ReflectionParams,
};
use crate::trace::{RssTrace, TraceRow, TruthRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub tx: Point2,
    pub rx: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub start: Point2,
    /// m/s
    pub speed: f64,
    /// Direction of motion, radians from +x.
    pub heading: f64,
    /// s
    pub duration: f64,
}

impl TrajectoryConfig {
    /// Straight walk of `duration` seconds whose midpoint is `center`.
    pub fn through(center: Point2, speed: f64, heading: f64, duration: f64) -> Self {
        let v = Velocity2::from_polar(speed, heading);
        Self {
            start: center + v.displacement(-0.5 * duration),
            speed,
            heading,
            duration,
        }
    }

    pub fn velocity(&self) -> Velocity2 {
        Velocity2::from_polar(self.speed, self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub links: Vec<LinkConfig>,
    pub carrier_frequency: f64,
    pub channels: usize,
    /// Per-channel sampling interval T_s, s.
    pub sample_interval: f64,
    /// P(c) of channel 0, dB.
    pub system_gain: f64,
    /// P(c) decreases linearly by this much from the first to the last channel, dB.
    pub system_gain_spread: f64,
    /// Per-channel noise std, dB.
    pub noise_std: f64,
    pub trajectory: TrajectoryConfig,
    pub reflection: ReflectionParams,
    /// Person model; the orientation follows the walking direction.
    pub ellipse: EllipseParams,
    /// Reflection state extends over this many Fresnel zones.
    pub max_fresnel_zone: u32,
    /// Empty-room lead-in before the person appears, s.
    pub preamble: f64,
    /// Round RSS to whole dB like a radio's RSSI register.
    pub quantize: bool,
    pub seed: u64,
}

/// Node layout along a corridor of the given width: TX at the origin, receivers
/// on the opposite wall one meter apart, optionally a third one between them.
pub fn corridor_links(width: f64, midway_receiver: bool) -> Vec<LinkConfig> {
    let tx = Point2::new(0.0, 0.0);
    let mut links = vec![
        LinkConfig { tx, rx: Point2::new(0.0, width) },
        LinkConfig { tx, rx: Point2::new(1.0, width) },
    ];
    if midway_receiver {
        links.push(LinkConfig { tx, rx: Point2::new(0.5, width) });
    }
    links
}

/// Point the default walk passes through: between the two outer links at mid-corridor.
pub fn corridor_center(width: f64) -> Point2 {
    Point2::new(0.25, 0.5 * width)
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let width = 3.0;
        Self {
            links: corridor_links(width, false),
            carrier_frequency: 2.4e9,
            channels: 16,
            sample_interval: 0.032,
            system_gain: -55.0,
            system_gain_spread: 6.0,
            noise_std: 2.0,
            trajectory: TrajectoryConfig::through(corridor_center(width), 0.5, 20f64.to_radians(), 10.0),
            reflection: ReflectionParams::default(),
            ellipse: EllipseParams::default(),
            max_fresnel_zone: 12,
            preamble: 5.0,
            quantize: false,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(DflError::config("scenario needs at least one link"));
        }
        if self.channels == 0 {
            return Err(DflError::config("channels must be >= 1"));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(DflError::config("sample_interval must be > 0"));
        }
        if !(self.trajectory.duration > 0.0) {
            return Err(DflError::config("trajectory duration must be > 0"));
        }
        if !(self.trajectory.speed >= 0.0) {
            return Err(DflError::config("trajectory speed must be >= 0"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(DflError::config("noise_std must be >= 0"));
        }
        if !(self.preamble >= 0.0) {
            return Err(DflError::config("preamble must be >= 0"));
        }
        self.reflection.validate()?;
        self.ellipse.validate()?;
        self.build_links().map(|_| ())
    }

    pub fn build_links(&self) -> Result<Vec<Link>> {
        self.links
            .iter()
            .enumerate()
            .map(|(i, l)| Link::new(i, l.tx, l.rx, self.carrier_frequency))
            .collect()
    }

    pub fn channel_params(&self) -> Vec<ChannelParams> {
        let denom = (self.channels.max(2) - 1) as f64;
        (0..self.channels)
            .map(|c| ChannelParams {
                channel_id: c,
                system_gain: self.system_gain - self.system_gain_spread * c as f64 / denom,
                noise_std: self.noise_std,
            })
            .collect()
    }

    pub fn preamble_samples(&self) -> usize {
        (self.preamble / self.sample_interval).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Point2,
    pub velocity: Velocity2,
}

/// Positions start + v·t sampled every T_s over the walk.
pub fn generate_trajectory(cfg: &ScenarioConfig) -> Vec<TrajectorySample> {
    let tr = &cfg.trajectory;
    let v = tr.velocity();
    let n = (tr.duration / cfg.sample_interval + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let t = k as f64 * cfg.sample_interval;
            TrajectorySample {
                t,
                position: tr.start + v.displacement(t),
                velocity: v,
            }
        })
        .collect()
}

/// Person-present gain and ground-truth state on one link.
pub fn link_gain(p: Point2, heading: f64, link: &Link, cfg: &ScenarioConfig) -> Result<(f64, PropagationState)> {
    let ell = cfg.ellipse.aligned(heading, link);
    let state = true_state(p, link, &ell, cfg.max_fresnel_zone)?;
    Ok((three_state_gain(state, p, link, &cfg.reflection, &ell)?, state))
}

/// Synthesizes the per-channel RSS trace and its ground truth.
///
/// The first `preamble` seconds are an empty room; the walk starts right after.
pub fn synthesize_trace(cfg: &ScenarioConfig) -> Result<RssTrace> {
    cfg.validate()?;
    let links = cfg.build_links()?;
    let channels = cfg.channel_params();
    let walk = generate_trajectory(cfg);
    let pre = cfg.preamble_samples();
    let total = pre + walk.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut rows = Vec::with_capacity(total * links.len() * channels.len());
    let mut truth = Vec::with_capacity(total);
    for k in 0..total {
        let t = k as f64 * cfg.sample_interval;
        let person = k.checked_sub(pre).map(|i| walk[i]);
        let mut states = Vec::with_capacity(links.len());
        for link in &links {
            let (g, state) = match person {
                Some(s) => link_gain(s.position, s.velocity.heading(), link, cfg)?,
                None => (0.0, PropagationState::NonFading),
            };
            states.push(state);
            for ch in &channels {
                let mut rss = raw_rss(g, ch, &mut rng);
                if cfg.quantize {
                    rss = rss.round();
                }
                rows.push(TraceRow {
                    t,
                    link: link.id,
                    channel: ch.channel_id,
                    rss,
                });
            }
        }
        truth.push(TruthRow {
            t,
            position: person.map(|s| s.position),
            velocity: person.map(|s| s.velocity).unwrap_or_default(),
            states,
        });
    }
    Ok(RssTrace { rows, truth })
}

/// Heading in degrees to radians, wrapped to (-π, π].
pub fn heading_from_degrees(deg: f64) -> f64 {
    let r = deg.to_radians();
    (r + PI).rem_euclid(2.0 * PI) - PI
}
