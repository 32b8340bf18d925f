//! Per-link propagation state estimation with a three-state HMM.
//!
//! Observations are two statistics of the combined RSS over a short sliding
//! window: its standard deviation and the magnitude of its mean. Noise alone gives
//! a small std and mean, reflection fading a large std around zero mean, and
//! shadowing a large negative offset.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::rss_model::PropagationState;

/// Independent Gaussian emission densities for the two window features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub std_mean: f64,
    pub std_sd: f64,
    pub abs_mean_mean: f64,
    pub abs_mean_sd: f64,
}

impl Emission {
    fn likelihood(&self, f: &WindowFeatures) -> f64 {
        gauss(f.std, self.std_mean, self.std_sd) * gauss(f.abs_mean, self.abs_mean_mean, self.abs_mean_sd)
    }
}

fn gauss(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmConfig {
    /// Row-stochastic; `transition[i][j]` = P(next = j | current = i), states ordered s1, s2, s3.
    pub transition: [[f64; 3]; 3],
    pub emissions: [Emission; 3],
    pub initial: [f64; 3],
    /// Samples in the feature window.
    pub feature_window: usize,
}

/// Default transition matrix: strong self-transition, s1 <-> s3 nearly forbidden.
pub fn default_transition() -> [[f64; 3]; 3] {
    let stay = 0.98;
    let jump = 1e-4;
    [
        [stay, 1.0 - stay - jump, jump],
        [(1.0 - stay) / 2.0, stay, (1.0 - stay) / 2.0],
        [jump, 1.0 - stay - jump, stay],
    ]
}

impl HmmConfig {
    /// Emission defaults scaled to the combined noise std `noise` (dB) of an empty room.
    pub fn for_noise_level(noise: f64) -> Self {
        let feature_window = 10;
        let noise = noise.max(0.05);
        let mean_sd = noise / (feature_window as f64).sqrt();
        Self {
            transition: default_transition(),
            emissions: [
                Emission {
                    std_mean: noise,
                    std_sd: 0.35 * noise + 0.05,
                    abs_mean_mean: 0.0,
                    abs_mean_sd: 1.2 * mean_sd + 0.05,
                },
                Emission {
                    std_mean: 1.8_f64.max(2.0 * noise),
                    std_sd: 1.0,
                    abs_mean_mean: 0.0,
                    abs_mean_sd: 2.0,
                },
                Emission {
                    std_mean: 2.0_f64.max(2.0 * noise),
                    std_sd: 2.5,
                    abs_mean_mean: 7.0,
                    abs_mean_sd: 3.0,
                },
            ],
            initial: [0.98, 0.01, 0.01],
            feature_window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.transition.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(DflError::config(format!("transition row {i} is not a distribution")));
            }
        }
        if self.emissions.iter().any(|e| !(e.std_sd > 0.0 && e.abs_mean_sd > 0.0)) {
            return Err(DflError::config("emission standard deviations must be positive"));
        }
        let s: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(DflError::config("initial state distribution must sum to 1"));
        }
        if self.feature_window < 2 {
            return Err(DflError::config("feature_window must be >= 2"));
        }
        Ok(())
    }
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self::for_noise_level(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFeatures {
    pub std: f64,
    pub abs_mean: f64,
}

impl WindowFeatures {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a f64>) -> Self {
        let (mut n, mut sum, mut sum2) = (0usize, 0.0, 0.0);
        for &x in samples {
            n += 1;
            sum += x;
            sum2 += x * x;
        }
        if n == 0 {
            return Self { std: 0.0, abs_mean: 0.0 };
        }
        let mean = sum / n as f64;
        let var = if n > 1 {
            ((sum2 - n as f64 * mean * mean) / (n - 1) as f64).max(0.0)
        } else {
            0.0
        };
        Self { std: var.sqrt(), abs_mean: mean.abs() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStateEstimate {
    pub state: PropagationState,
    pub posterior: [f64; 3],
}

/// One forward-filter step: posterior ∝ likelihood ⊙ (Aᵀ prior).
///
/// Falls back to the predicted distribution when every likelihood underflows.
pub fn forward_update(likelihood: [f64; 3], prior: &[f64; 3], transition: &[[f64; 3]; 3]) -> LinkStateEstimate {
    let mut predicted = [0.0; 3];
    for (i, p) in prior.iter().enumerate() {
        for (j, slot) in predicted.iter_mut().enumerate() {
            *slot += transition[i][j] * p;
        }
    }
    let mut post = [0.0; 3];
    for j in 0..3 {
        post[j] = likelihood[j] * predicted[j];
    }
    let total: f64 = post.iter().sum();
    if total > 0.0 && total.is_finite() {
        post.iter_mut().for_each(|p| *p /= total);
    } else {
        let t: f64 = predicted.iter().sum();
        post = predicted.map(|p| p / t);
    }
    let best = (0..3)
        .max_by(|&a, &b| post[a].total_cmp(&post[b]))
        .unwrap_or(0);
    LinkStateEstimate {
        state: PropagationState::from_index(best).expect("index < 3"),
        posterior: post,
    }
}

/// Forward-filter step for a single feature observation.
pub fn hmm_step(features: &WindowFeatures, prior: &[f64; 3], cfg: &HmmConfig) -> LinkStateEstimate {
    let lik = [
        cfg.emissions[0].likelihood(features),
        cfg.emissions[1].likelihood(features),
        cfg.emissions[2].likelihood(features),
    ];
    forward_update(lik, prior, &cfg.transition)
}

/// Online state estimator for one link; owns the feature window.
#[derive(Debug, Clone)]
pub struct LinkStateFilter {
    cfg: HmmConfig,
    window: VecDeque<f64>,
    posterior: [f64; 3],
}

impl LinkStateFilter {
    pub fn new(cfg: HmmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            window: VecDeque::with_capacity(cfg.feature_window),
            posterior: cfg.initial,
            cfg,
        })
    }

    pub fn posterior(&self) -> [f64; 3] {
        self.posterior
    }

    /// Feeds one combined RSS sample. A missing sample (`None`), or a window that is
    /// not yet full, only runs the prediction step.
    pub fn step(&mut self, r: Option<f64>) -> LinkStateEstimate {
        let est = match r {
            Some(r) => {
                if self.window.len() == self.cfg.feature_window {
                    self.window.pop_front();
                }
                self.window.push_back(r);
                if self.window.len() < self.cfg.feature_window {
                    forward_update([1.0; 3], &self.posterior, &self.cfg.transition)
                } else {
                    let f = WindowFeatures::from_samples(&self.window);
                    hmm_step(&f, &self.posterior, &self.cfg)
                }
            }
            None => forward_update([1.0; 3], &self.posterior, &self.cfg.transition),
        };
        self.posterior = est.posterior;
        est
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateEvent {
    StartTracking,
    StopTracking,
    None,
}

/// Lifecycle rule: stop when every link is non-fading, start when any link is shadowed.
pub fn gate_events(states: &[PropagationState], filter_running: bool) -> GateEvent {
    if filter_running {
        if !states.is_empty() && states.iter().all(|&s| s == PropagationState::NonFading) {
            GateEvent::StopTracking
        } else {
            GateEvent::None
        }
    } else if states.iter().any(|&s| s == PropagationState::Shadowing) {
        GateEvent::StartTracking
    } else {
        GateEvent::None
    }
}
