//! Measurement model h(x) = [g(x), G(x)] and the weight update.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::particles::{KinematicState, ParticleSet};
use crate::error::{DflError, Result};
use crate::geometry::Link;
use crate::rss_model::{three_state_gain, EllipseParams, PropagationState, ReflectionParams};
use crate::spectral::{model_frequency_avg, FrequencyMeasurement, SpectralConfig};

/// Spatial model parameters shared by the simulator and the tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub reflection: ReflectionParams,
    /// Person ellipse; the orientation is taken from each hypothesis' heading.
    pub ellipse: EllipseParams,
    pub spectral: SpectralConfig,
}

/// Covariance of the (time-domain dB, frequency Hz) residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct MeasurementNoiseConfig {
    covariance: [[f64; 2]; 2],
    inverse: [[f64; 2]; 2],
    log_det: f64,
}

impl MeasurementNoiseConfig {
    pub fn new(covariance: [[f64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = covariance;
        if (b - c).abs() > 1e-12 * (1.0 + b.abs()) {
            return Err(DflError::config("measurement covariance must be symmetric"));
        }
        let det = a * d - b * c;
        if !(a > 0.0 && det > 0.0) {
            return Err(DflError::config("measurement covariance must be positive definite"));
        }
        Ok(Self {
            covariance,
            inverse: [[d / det, -b / det], [-c / det, a / det]],
            log_det: det.ln(),
        })
    }

    pub fn diagonal(time_var: f64, freq_var: f64) -> Result<Self> {
        Self::new([[time_var, 0.0], [0.0, freq_var]])
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.covariance
    }

    /// Log of the bivariate normal density of `residual` = (dB, Hz).
    pub fn log_density(&self, residual: [f64; 2]) -> f64 {
        let [x, y] = residual;
        let [[p, q], [r, s]] = self.inverse;
        let maha = x * (p * x + q * y) + y * (r * x + s * y);
        -(2.0 * PI).ln() - 0.5 * self.log_det - 0.5 * maha
    }

    /// Log of the marginal density of the time-domain residual alone.
    pub fn log_density_time(&self, residual: f64) -> f64 {
        let var = self.covariance[0][0];
        -0.5 * (2.0 * PI * var).ln() - 0.5 * residual * residual / var
    }

    pub fn density(&self, residual: [f64; 2]) -> f64 {
        self.log_density(residual).exp()
    }
}

impl Default for MeasurementNoiseConfig {
    fn default() -> Self {
        Self::diagonal(2.0, 1.5).expect("positive definite")
    }
}

impl TryFrom<[[f64; 2]; 2]> for MeasurementNoiseConfig {
    type Error = DflError;
    fn try_from(c: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(c)
    }
}

impl From<MeasurementNoiseConfig> for [[f64; 2]; 2] {
    fn from(c: MeasurementNoiseConfig) -> Self {
        c.covariance
    }
}

/// What the tracker observes on one link at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkObservation {
    /// Mean-removed, channel-combined RSS r(k); `None` when no channel reported.
    pub rss: Option<f64>,
    /// Periodogram peak R(k) over the last window.
    pub freq: FrequencyMeasurement,
    /// Estimated propagation state of the link.
    pub state: PropagationState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedMeasurement {
    pub gain: f64,
    /// |G| at the window-average position, Hz.
    pub freq: f64,
    pub freq_valid: bool,
}

/// h(x) for one link under the estimated propagation state.
pub fn predict_measurement(
    x: &KinematicState,
    link: &Link,
    model: &MeasurementModel,
    state: PropagationState,
) -> Result<PredictedMeasurement> {
    let p = x.position();
    let v = x.velocity();
    let ell = model.ellipse.aligned(v.heading(), link);
    let gain = three_state_gain(state, p, link, &model.reflection, &ell)?;
    let (freq, freq_valid) = if state == PropagationState::Reflection {
        match model_frequency_avg(p, v, link, &model.spectral) {
            Ok(g) => (g.abs(), true),
            Err(_) => (0.0, false),
        }
    } else {
        (0.0, false)
    };
    Ok(PredictedMeasurement {
        gain,
        freq,
        freq_valid,
    })
}

/// Evaluates h(x) for every particle and link, row-major by particle.
///
/// Hypotheses sitting on a transceiver get `None`.
pub fn predict_all(
    set: &ParticleSet,
    links: &[Link],
    observations: &[LinkObservation],
    model: &MeasurementModel,
    out: &mut Vec<Option<PredictedMeasurement>>,
) {
    out.clear();
    for p in &set.particles {
        for (link, obs) in links.iter().zip(observations) {
            out.push(predict_measurement(&p.state, link, model, obs.state).ok());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateOutcome {
    /// Every particle had zero likelihood; weights were reset to uniform.
    pub degenerate: bool,
}

/// Multiplies each weight by the product over links of the residual density.
///
/// A link contributes the bivariate density when both the measured and the
/// predicted frequency are valid, the time-domain marginal otherwise, and nothing
/// when its RSS is missing. Likelihoods are accumulated in the log domain and only
/// rescaled by a common factor when the exact products would underflow.
pub fn update_weights(
    set: &mut ParticleSet,
    observations: &[LinkObservation],
    predictions: &[Option<PredictedMeasurement>],
    noise: &MeasurementNoiseConfig,
) -> Result<UpdateOutcome> {
    let links = observations.len();
    if predictions.len() != set.len() * links {
        return Err(DflError::LengthMismatch {
            expected: set.len() * links,
            got: predictions.len(),
        });
    }
    let mut log_w: Vec<f64> = Vec::with_capacity(set.len());
    for (i, p) in set.particles.iter().enumerate() {
        let mut lw = p.weight.ln();
        for (obs, pred) in observations.iter().zip(&predictions[i * links..(i + 1) * links]) {
            let Some(r) = obs.rss else { continue };
            let Some(pred) = pred else {
                lw = f64::NEG_INFINITY;
                break;
            };
            let dg = r - pred.gain;
            lw += if obs.freq.valid && pred.freq_valid {
                noise.log_density([dg, obs.freq.freq - pred.freq])
            } else {
                noise.log_density_time(dg)
            };
        }
        log_w.push(lw);
    }

    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        set.reset_uniform();
        return Ok(UpdateOutcome { degenerate: true });
    }
    // Keep exact densities unless the best particle would underflow.
    let shift = if max < -600.0 { max } else { 0.0 };
    for (p, lw) in set.particles.iter_mut().zip(log_w) {
        p.weight = (lw - shift).exp();
    }
    set.normalized = false;
    Ok(UpdateOutcome { degenerate: false })
}
