use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::geometry::{Point2, Velocity2};

/// Constant-velocity state, ordered [px vx py vy].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub px: f64,
    pub vx: f64,
    pub py: f64,
    pub vy: f64,
}

impl KinematicState {
    pub fn new(position: Point2, velocity: Velocity2) -> Self {
        Self {
            px: position.x,
            vx: velocity.vx,
            py: position.y,
            vy: velocity.vy,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.px, self.py)
    }

    pub fn velocity(&self) -> Velocity2 {
        Velocity2::new(self.vx, self.vy)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.px, self.vx, self.py, self.vy]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// x(k) = A x(k-1) + B u(k-1) for the discrete constant-velocity model.
    pub fn propagate(&self, dt: f64, accel: [f64; 2]) -> Self {
        let half = 0.5 * dt * dt;
        Self {
            px: self.px + dt * self.vx + half * accel[0],
            vx: self.vx + dt * accel[0],
            py: self.py + dt * self.vy + half * accel[1],
            vy: self.vy + dt * accel[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: KinematicState,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub normalized: bool,
}

impl ParticleSet {
    /// Equally weighted set over `states`.
    pub fn uniform(states: impl IntoIterator<Item = KinematicState>) -> Self {
        let mut particles: Vec<Particle> = states
            .into_iter()
            .map(|state| Particle { state, weight: 1.0 })
            .collect();
        let w = 1.0 / particles.len().max(1) as f64;
        particles.iter_mut().for_each(|p| p.weight = w);
        Self {
            particles,
            normalized: true,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.particles.iter().map(|p| p.state.position())
    }

    pub(crate) fn reset_uniform(&mut self) {
        let w = 1.0 / self.len() as f64;
        self.particles.iter_mut().for_each(|p| p.weight = w);
        self.normalized = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoiseConfig {
    /// Std of the acceleration noise, m/s².
    pub sigma: f64,
}

impl Default for ProcessNoiseConfig {
    fn default() -> Self {
        Self { sigma: 0.4 }
    }
}

/// Advances every particle through the constant-velocity model with its own
/// acceleration draw.
pub fn predict<R: Rng + ?Sized>(set: &mut ParticleSet, dt: f64, noise: &ProcessNoiseConfig, rng: &mut R) {
    for p in &mut set.particles {
        let accel = if noise.sigma > 0.0 {
            let ax: f64 = StandardNormal.sample(rng);
            let ay: f64 = StandardNormal.sample(rng);
            [noise.sigma * ax, noise.sigma * ay]
        } else {
            [0.0, 0.0]
        };
        p.state = p.state.propagate(dt, accel);
    }
}

pub fn normalize(set: &mut ParticleSet) -> Result<()> {
    let sum = set.weight_sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(DflError::DegenerateWeights);
    }
    set.particles.iter_mut().for_each(|p| p.weight /= sum);
    set.normalized = true;
    Ok(())
}

/// Systematic resampling; leaves N equally weighted particles.
pub fn resample<R: Rng + ?Sized>(set: &mut ParticleSet, rng: &mut R) {
    let n = set.len();
    if n == 0 {
        return;
    }
    let counts = systematic_counts(set.particles.iter().map(|p| p.weight), n, rng.random::<f64>());
    let mut out = Vec::with_capacity(n);
    for (p, &c) in set.particles.iter().zip(&counts) {
        out.extend(std::iter::repeat_n(p.state, c));
    }
    *set = ParticleSet::uniform(out);
}

/// Offspring counts of systematic resampling for normalized `weights` and offset `u` in [0, 1).
pub fn systematic_counts(weights: impl IntoIterator<Item = f64>, n: usize, u: f64) -> Vec<usize> {
    let weights: Vec<f64> = weights.into_iter().collect();
    let mut counts = vec![0usize; weights.len()];
    if weights.is_empty() || n == 0 {
        return counts;
    }
    let step = 1.0 / n as f64;
    let mut pointer = u * step;
    let mut cum = 0.0;
    let mut drawn = 0;
    let last = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        while drawn < n && (pointer < cum || i == last) {
            counts[i] += 1;
            drawn += 1;
            pointer += step;
        }
    }
    counts
}

/// Mean of the particle states; after resampling every weight is 1/N.
pub fn estimate(set: &ParticleSet) -> KinematicState {
    let n = set.len().max(1) as f64;
    let mut acc = [0.0; 4];
    for p in &set.particles {
        for (a, v) in acc.iter_mut().zip(p.state.as_array()) {
            *a += v;
        }
    }
    KinematicState {
        px: acc[0] / n,
        vx: acc[1] / n,
        py: acc[2] / n,
        vy: acc[3] / n,
    }
}
