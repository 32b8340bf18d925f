//! Frequency-domain measurement of the channel change rate.
//!
//! A person moving at constant velocity near a link makes the combined RSS oscillate
//! at roughly (1/λ)·dΔ/dt. [`PsdEstimator`] measures that rate as the peak of the
//! periodogram of a short window; [`model_frequency`] predicts it from a
//! position/velocity hypothesis.

use std::f64::consts::{LN_10, PI};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::geometry::{path_length_rate, Link, Point2, Velocity2};
use crate::rss_model::{reflection_gain_from_excess, ReflectionParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    #[default]
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    /// Samples per window, N_f.
    pub window_len: usize,
    /// Sampling interval T_s, seconds.
    pub sample_interval: f64,
    /// Zero-padded DFT length.
    pub dft_len: usize,
    /// Bins below this frequency are excluded from the peak search, Hz.
    pub min_freq: f64,
    /// Required peak-over-median power ratio, dB.
    pub snr_gate: f64,
    pub taper: Taper,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            window_len: 20,
            sample_interval: 0.032,
            dft_len: 256,
            min_freq: 0.5,
            snr_gate: 6.0,
            taper: Taper::Rectangular,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 4 {
            return Err(DflError::config("spectral window_len must be >= 4"));
        }
        if self.dft_len < self.window_len {
            return Err(DflError::config("dft_len must be >= window_len"));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(DflError::config("sample_interval must be positive"));
        }
        if !(self.min_freq >= 0.0 && self.min_freq < self.nyquist()) {
            return Err(DflError::config("min_freq must lie in [0, Nyquist)"));
        }
        Ok(())
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.sample_interval
    }

    /// Spacing of the zero-padded DFT grid, Hz.
    pub fn bin_width(&self) -> f64 {
        1.0 / (self.dft_len as f64 * self.sample_interval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMeasurement {
    /// Peak frequency R(k), Hz. Unsigned.
    pub freq: f64,
    pub valid: bool,
    /// Periodogram value at the peak bin, dB.
    pub peak_power: f64,
}

impl FrequencyMeasurement {
    pub const INVALID: FrequencyMeasurement = FrequencyMeasurement {
        freq: 0.0,
        valid: false,
        peak_power: f64::NEG_INFINITY,
    };
}

/// Reusable periodogram peak picker; holds the FFT plan and scratch buffers.
pub struct PsdEstimator {
    cfg: SpectralConfig,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    taper: Vec<f64>,
    power: Vec<f64>,
    scratch: Vec<f64>,
}

impl std::fmt::Debug for PsdEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PsdEstimator").field("cfg", &self.cfg).finish()
    }
}

impl Clone for PsdEstimator {
    fn clone(&self) -> Self {
        PsdEstimator::new(self.cfg.clone()).expect("config already validated")
    }
}

impl PsdEstimator {
    pub fn new(cfg: SpectralConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.dft_len);
        let n = cfg.window_len;
        let taper = match cfg.taper {
            Taper::Rectangular => vec![1.0; n],
            Taper::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
                .collect(),
        };
        Ok(Self {
            buf: vec![Complex::default(); cfg.dft_len],
            power: vec![0.0; cfg.dft_len / 2 + 1],
            scratch: Vec::with_capacity(cfg.dft_len / 2 + 1),
            fft,
            taper,
            cfg,
        })
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.cfg
    }

    /// Periodogram peak of one window of mean-removed, combined RSS.
    ///
    /// The window mean is subtracted before the transform, so the result does not
    /// depend on a constant offset. The peak bin is refined by a parabola through
    /// the log-power of the bin and its two neighbours.
    pub fn estimate(&mut self, window: &[f64]) -> Result<FrequencyMeasurement> {
        let n = self.cfg.window_len;
        if window.len() != n {
            return Err(DflError::LengthMismatch { expected: n, got: window.len() });
        }
        if window.iter().any(|x| !x.is_finite()) {
            return Ok(FrequencyMeasurement::INVALID);
        }
        let mean = window.iter().sum::<f64>() / n as f64;
        let spread = window.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        // Only round-off left after removing the mean: no spectral line to find.
        if spread <= 1e-12 * mean.abs().max(1.0) {
            return Ok(FrequencyMeasurement::INVALID);
        }
        for (slot, (x, w)) in self.buf.iter_mut().zip(window.iter().zip(&self.taper)) {
            *slot = Complex::new((x - mean) * w, 0.0);
        }
        for slot in &mut self.buf[n..] {
            *slot = Complex::default();
        }
        self.fft.process(&mut self.buf);
        for (p, c) in self.power.iter_mut().zip(&self.buf) {
            *p = c.norm_sqr();
        }

        let df = self.cfg.bin_width();
        let first = (self.cfg.min_freq / df).ceil() as usize;
        let last = self.power.len() - 1;
        if first > last {
            return Ok(FrequencyMeasurement::INVALID);
        }
        let (peak, peak_pow) = self.power[first..=last]
            .iter()
            .enumerate()
            .fold((first, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
                if p > bp {
                    (first + i, p)
                } else {
                    (bi, bp)
                }
            });
        if !(peak_pow > 0.0) {
            return Ok(FrequencyMeasurement::INVALID);
        }

        self.scratch.clear();
        self.scratch.extend_from_slice(&self.power[first..=last]);
        let mid = self.scratch.len() / 2;
        let (_, median, _) = self.scratch.select_nth_unstable_by(mid, f64::total_cmp);
        let median = *median;
        let snr_db = if median > 0.0 {
            10.0 * (peak_pow / median).log10()
        } else {
            f64::INFINITY
        };

        let offset = if peak > first && peak < last {
            let l = self.power[peak - 1].max(f64::MIN_POSITIVE).ln();
            let c = peak_pow.ln();
            let r = self.power[peak + 1].max(f64::MIN_POSITIVE).ln();
            let denom = l - 2.0 * c + r;
            if denom < 0.0 {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        } else {
            0.0
        };
        let freq = ((peak as f64 + offset) * df).clamp(0.0, self.cfg.nyquist());

        Ok(FrequencyMeasurement {
            freq,
            valid: snr_db >= self.cfg.snr_gate,
            peak_power: 10.0 * peak_pow.log10(),
        })
    }
}

/// One-shot convenience wrapper around [`PsdEstimator::estimate`].
pub fn psd_peak(window: &[f64], cfg: &SpectralConfig) -> Result<FrequencyMeasurement> {
    PsdEstimator::new(cfg.clone())?.estimate(window)
}

/// Modeled dominant RSS frequency (1/λ)·(p̃_rx + p̃_tx)ᵀv, signed, Hz.
pub fn model_frequency(p: Point2, v: Velocity2, link: &Link) -> Result<f64> {
    Ok(path_length_rate(p, v, link)? / link.wavelength())
}

/// [`model_frequency`] at the window-average position, half a window back along `v`.
pub fn model_frequency_avg(p: Point2, v: Velocity2, link: &Link, cfg: &SpectralConfig) -> Result<f64> {
    let back = v.displacement(-(cfg.window_len as f64 / 2.0) * cfg.sample_interval);
    model_frequency(p + back, v, link)
}

/// Truncated Fourier series of the two-ray reflection gain, dB.
///
/// Terms are a_i = (-Ψ)^i / i; the series converges to the closed form for Ψ < 1.
pub fn fourier_series_gain(delta: f64, wavelength: f64, refl: &ReflectionParams, n_terms: usize) -> f64 {
    let e_hat = 10.0 / LN_10;
    let mut coeff_pow = 1.0;
    let mut sum = 0.0;
    for i in 1..=n_terms {
        coeff_pow *= -refl.psi;
        let a_i = coeff_pow / i as f64;
        sum += a_i * (2.0 * PI * i as f64 * delta / wavelength).cos();
    }
    -2.0 * e_hat * sum
}

/// One window of a [`SpectrumCheck`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCheck {
    /// Index of the last sample in the window.
    pub end: usize,
    pub measured: FrequencyMeasurement,
    /// |G| at the window-average position, Hz.
    pub modeled: f64,
}

impl WindowCheck {
    pub fn abs_error(&self) -> f64 {
        (self.measured.freq - self.modeled).abs()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SpectrumCheck {
    pub windows: Vec<WindowCheck>,
    pub bin_width: f64,
}

impl SpectrumCheck {
    pub fn valid(&self) -> impl Iterator<Item = &WindowCheck> {
        self.windows.iter().filter(|w| w.measured.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }

    /// Fraction of valid windows whose error is within `bins` DFT bins.
    pub fn fraction_within_bins(&self, bins: f64) -> f64 {
        let n = self.valid_count();
        if n == 0 {
            return 0.0;
        }
        let tol = bins * self.bin_width;
        self.valid().filter(|w| w.abs_error() <= tol).count() as f64 / n as f64
    }

    pub fn valid_errors(&self) -> Vec<f64> {
        self.valid().map(WindowCheck::abs_error).collect()
    }

    pub fn median_abs_error(&self) -> Option<f64> {
        median(self.valid_errors())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Synthesizes the noiseless reflection gain along `trajectory` and compares the
/// periodogram peak of every full window against the modeled frequency.
///
/// `trajectory` holds consecutive samples spaced by `cfg.sample_interval`.
pub fn first_order_spectrum_check(
    trajectory: &[(Point2, Velocity2)],
    link: &Link,
    refl: &ReflectionParams,
    cfg: &SpectralConfig,
) -> Result<SpectrumCheck> {
    let mut est = PsdEstimator::new(cfg.clone())?;
    let gains = trajectory
        .iter()
        .map(|&(p, _)| {
            crate::geometry::excess_path_length(p, link)
                .map(|d| reflection_gain_from_excess(d, link.wavelength(), refl))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = cfg.window_len;
    let mut windows = Vec::new();
    for end in n.saturating_sub(1)..gains.len() {
        let window = &gains[end + 1 - n..=end];
        let (p, v) = trajectory[end];
        windows.push(WindowCheck {
            end,
            measured: est.estimate(window)?,
            modeled: model_frequency_avg(p, v, link, cfg)?.abs(),
        });
    }
    Ok(SpectrumCheck {
        windows,
        bin_width: cfg.bin_width(),
    })
}
