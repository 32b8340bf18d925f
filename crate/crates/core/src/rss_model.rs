//! Time-domain RSS models: raw per-channel samples, calibration and channel
//! combining, and the three-state gain (non-fading / reflection / shadowing).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::geometry::{excess_path_length, to_link_local, Link, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub channel_id: usize,
    /// System dependent gain P(c), dB.
    pub system_gain: f64,
    /// Standard deviation of the wideband noise on this channel, dB.
    pub noise_std: f64,
}

/// Amplitude ratio between the reflected and the LoS component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionParams {
    pub psi: f64,
}

impl ReflectionParams {
    pub fn new(psi: f64) -> Result<Self> {
        let p = Self { psi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi > 0.0 && self.psi < 1.0 {
            Ok(())
        } else {
            Err(DflError::config(format!("psi must lie in (0, 1), got {}", self.psi)))
        }
    }
}

impl Default for ReflectionParams {
    fn default() -> Self {
        Self { psi: 0.4 }
    }
}

/// Elliptical person model with uniform attenuation.
///
/// `theta` is the angle between the semi-minor axis and the normal of the link,
/// so `theta = 0` for a person walking straight across the LoS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub semi_minor: f64,
    pub semi_major: f64,
    /// Attenuation per meter of body traversed, dB/m.
    pub rho: f64,
    pub theta: f64,
}

impl EllipseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.semi_minor > 0.0 && self.semi_minor <= self.semi_major) {
            return Err(DflError::config(format!(
                "ellipse axes must satisfy 0 < A <= B, got A={} B={}",
                self.semi_minor, self.semi_major
            )));
        }
        if !(self.rho >= 0.0) {
            return Err(DflError::config(format!("rho must be >= 0, got {}", self.rho)));
        }
        Ok(())
    }

    /// Same shape, oriented for a person moving along `heading` relative to `link`.
    pub fn aligned(self, heading: f64, link: &Link) -> Self {
        Self {
            theta: heading - link.angle() - 0.5 * PI,
            ..self
        }
    }

    /// Half-width a(θ) of the ellipse perpendicular to the link.
    pub fn half_width(&self) -> f64 {
        let (s, c) = self.theta.sin_cos();
        (self.semi_minor.powi(2) * c * c + self.semi_major.powi(2) * s * s).sqrt()
    }
}

impl Default for EllipseParams {
    fn default() -> Self {
        Self {
            semi_minor: 0.15,
            semi_major: 0.25,
            rho: 25.0,
            theta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropagationState {
    NonFading,
    Reflection,
    Shadowing,
}

impl PropagationState {
    pub const ALL: [PropagationState; 3] = [
        PropagationState::NonFading,
        PropagationState::Reflection,
        PropagationState::Shadowing,
    ];

    pub fn index(self) -> usize {
        match self {
            PropagationState::NonFading => 0,
            PropagationState::Reflection => 1,
            PropagationState::Shadowing => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Label used in CSV files: s1, s2, s3.
    pub fn label(self) -> &'static str {
        match self {
            PropagationState::NonFading => "s1",
            PropagationState::Reflection => "s2",
            PropagationState::Shadowing => "s3",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "s1" => Some(PropagationState::NonFading),
            "s2" => Some(PropagationState::Reflection),
            "s3" => Some(PropagationState::Shadowing),
            _ => None,
        }
    }
}

/// One raw RSS sample: P(c) + g + noise.
pub fn raw_rss<R: Rng + ?Sized>(g: f64, ch: &ChannelParams, rng: &mut R) -> f64 {
    let noise = if ch.noise_std > 0.0 {
        Normal::new(0.0, ch.noise_std)
            .expect("noise std is finite and positive")
            .sample(rng)
    } else {
        0.0
    };
    ch.system_gain + g + noise
}

/// Removes the per-channel calibration mean and averages across channels.
pub fn mean_remove_and_combine(samples: &[f64], calibration_means: &[f64]) -> Result<f64> {
    if samples.len() != calibration_means.len() {
        return Err(DflError::LengthMismatch {
            expected: calibration_means.len(),
            got: samples.len(),
        });
    }
    if samples.is_empty() {
        return Err(DflError::LengthMismatch { expected: 1, got: 0 });
    }
    let sum: f64 = samples
        .iter()
        .zip(calibration_means)
        .map(|(s, m)| s - m)
        .sum();
    Ok(sum / samples.len() as f64)
}

/// Two-ray interference gain for a given excess path length.
pub fn reflection_gain_from_excess(delta: f64, wavelength: f64, refl: &ReflectionParams) -> f64 {
    let psi = refl.psi;
    let phase = 2.0 * PI * delta / wavelength;
    10.0 * (psi * psi + 2.0 * psi * phase.cos() + 1.0).log10()
}

pub fn reflection_gain(p: Point2, link: &Link, refl: &ReflectionParams) -> Result<f64> {
    let delta = excess_path_length(p, link)?;
    Ok(reflection_gain_from_excess(delta, link.wavelength(), refl))
}

/// Attenuation magnitude of a ray passing at perpendicular offset `d` from the ellipse center.
pub fn shadow_gain_at_offset(d: f64, ell: &EllipseParams) -> f64 {
    let a2 = {
        let a = ell.half_width();
        a * a
    };
    let rem = a2 - d * d;
    if rem < 0.0 {
        return 0.0;
    }
    2.0 * ell.rho * ell.semi_minor * ell.semi_major / a2 * rem.sqrt()
}

/// Line integral of the ellipse attenuation along the LoS segment; a positive loss in dB.
///
/// Zero when the person's center is beyond either end of the segment.
pub fn shadow_gain(p: Point2, link: &Link, ell: &EllipseParams) -> f64 {
    let c = to_link_local(p, link);
    if c.along < 0.0 || c.along > link.length() {
        return 0.0;
    }
    shadow_gain_at_offset(c.perp, ell)
}

pub fn three_state_gain(
    state: PropagationState,
    p: Point2,
    link: &Link,
    refl: &ReflectionParams,
    ell: &EllipseParams,
) -> Result<f64> {
    match state {
        PropagationState::NonFading => Ok(0.0),
        PropagationState::Reflection => reflection_gain(p, link, refl),
        PropagationState::Shadowing => Ok(-shadow_gain(p, link, ell)),
    }
}

/// Ground-truth state of a link for a person at `p`.
///
/// Shadowing when the oriented ellipse footprint intersects the LoS segment,
/// reflection when the excess path length is within the first `max_zone`
/// Fresnel zones, non-fading otherwise.
pub fn true_state(p: Point2, link: &Link, ell: &EllipseParams, max_zone: u32) -> Result<PropagationState> {
    let delta = excess_path_length(p, link)?;
    let c = to_link_local(p, link);
    if c.perp.abs() <= ell.half_width() && c.along >= 0.0 && c.along <= link.length() {
        Ok(PropagationState::Shadowing)
    } else if delta < max_zone as f64 * 0.5 * link.wavelength() {
        Ok(PropagationState::Reflection)
    } else {
        Ok(PropagationState::NonFading)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn link() -> Link {
        Link::new(0, Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), 2.4e9).unwrap()
    }

    #[test]
    fn raw_rss_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = ChannelParams { channel_id: 0, system_gain: -50.0, noise_std: 0.0 };
        assert_eq!(raw_rss(3.0, &ch, &mut rng), -47.0);
        assert_eq!(raw_rss(0.0, &ch, &mut rng), -50.0);
    }

    #[test]
    fn raw_rss_mean_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = ChannelParams { channel_id: 3, system_gain: -60.0, noise_std: 2.0 };
        let n = 100_000;
        let mean = (0..n).map(|_| raw_rss(1.5, &ch, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - (-58.5)).abs() < 3.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn combine_examples() {
        let means = [-50.0, -60.0];
        assert_eq!(mean_remove_and_combine(&[-50.0, -60.0], &means).unwrap(), 0.0);
        assert_eq!(mean_remove_and_combine(&[-48.0, -62.0], &means).unwrap(), 0.0);
        assert!(matches!(
            mean_remove_and_combine(&[1.0], &means),
            Err(DflError::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn combine_reduces_variance_by_channel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let means = [0.0; 16];
        let trials = 100_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..trials {
            let s: Vec<f64> = (0..16).map(|_| normal.sample(&mut rng)).collect();
            let r = mean_remove_and_combine(&s, &means).unwrap();
            acc += r;
            acc2 += r * r;
        }
        let mean = acc / trials as f64;
        let var = acc2 / trials as f64 - mean * mean;
        // Sample variance of 1e5 draws has relative std ~ sqrt(2/1e5) ~ 0.45%.
        assert!((var - 1.0 / 16.0).abs() < 0.03 / 16.0, "var {var}");
    }

    #[test]
    fn reflection_extrema() {
        let l = link();
        let r = ReflectionParams::new(0.5).unwrap();
        let lambda = l.wavelength();
        assert!((reflection_gain_from_excess(0.0, lambda, &r) - 3.521_825).abs() < 1e-6);
        assert!((reflection_gain_from_excess(0.5 * lambda, lambda, &r) + 6.020_600).abs() < 1e-6);
        let tiny = ReflectionParams::new(1e-12).unwrap();
        assert!(reflection_gain_from_excess(0.3, lambda, &tiny).abs() < 1e-10);
        assert!(ReflectionParams::new(1.0).is_err());
        assert!(ReflectionParams::new(0.0).is_err());
    }

    #[test]
    fn shadow_examples() {
        let ell = EllipseParams { semi_minor: 0.15, semi_major: 0.25, rho: 20.0, theta: 0.0 };
        let a = ell.half_width();
        assert!((a - 0.15).abs() < 1e-15);
        assert_eq!(shadow_gain_at_offset(a, &ell), 0.0);
        assert_eq!(shadow_gain_at_offset(a + 1e-9, &ell), 0.0);
        assert!((shadow_gain_at_offset(0.0, &ell) - 2.0 * 20.0 * 0.25).abs() < 1e-12);
        let half = shadow_gain_at_offset(a / 2.0, &ell);
        assert!((half - 2.0 * 20.0 * 0.15 * 0.25 / a * 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    /// Line integral of rho times the ellipse indicator along the ray at offset `d`,
    /// by midpoint quadrature in the link frame.
    fn chord_quadrature(d: f64, ell: &EllipseParams) -> f64 {
        let (s, c) = ell.theta.sin_cos();
        // Semi-minor axis direction makes angle theta with the link normal (0, 1).
        let e1 = (-s, c);
        let e2 = (c, s);
        let n = 200_000;
        let span = 2.0 * ell.semi_major;
        let h = 2.0 * span / n as f64;
        let mut inside = 0usize;
        for i in 0..n {
            let x = -span + (i as f64 + 0.5) * h;
            let u = (x * e1.0 + d * e1.1) / ell.semi_minor;
            let w = (x * e2.0 + d * e2.1) / ell.semi_major;
            if u * u + w * w <= 1.0 {
                inside += 1;
            }
        }
        ell.rho * inside as f64 * h
    }

    #[test]
    fn shadow_matches_line_integral() {
        for &theta in &[0.0, 0.4, 1.1, PI / 2.0] {
            let ell = EllipseParams { semi_minor: 0.15, semi_major: 0.25, rho: 25.0, theta };
            let a = ell.half_width();
            for &frac in &[0.0, 0.5, 0.9] {
                let d = frac * a;
                let closed = shadow_gain_at_offset(d, &ell);
                let quad = chord_quadrature(d, &ell);
                assert!((closed - quad).abs() < 1e-3, "theta {theta} d {d}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn shadow_axes_swap_at_right_angle() {
        let e0 = EllipseParams { theta: 0.0, ..Default::default() };
        let e90 = EllipseParams { theta: PI / 2.0, ..Default::default() };
        assert!((e0.half_width() - e0.semi_minor).abs() < 1e-12);
        assert!((e90.half_width() - e90.semi_major).abs() < 1e-12);
    }

    #[test]
    fn three_state_examples() {
        let l = link();
        let r = ReflectionParams::new(0.5).unwrap();
        let ell = EllipseParams::default();
        let p = Point2::new(1.0, 0.7);
        assert_eq!(three_state_gain(PropagationState::NonFading, p, &l, &r, &ell).unwrap(), 0.0);
        let on_los = Point2::new(2.0, 0.0);
        let g2 = three_state_gain(PropagationState::Reflection, on_los, &l, &r, &ell).unwrap();
        assert!((g2 - 20.0 * 1.5f64.log10()).abs() < 1e-12);
        let g3 = three_state_gain(PropagationState::Shadowing, on_los, &l, &r, &ell).unwrap();
        assert!((g3 + 2.0 * ell.rho * ell.semi_major).abs() < 1e-12);
        assert!(three_state_gain(PropagationState::Reflection, l.tx, &l, &r, &ell).is_err());
    }

    #[test]
    fn state_rule() {
        let l = link();
        let ell = EllipseParams::default().aligned(PI / 2.0, &l);
        assert!(ell.theta.cos().abs() > 1.0 - 1e-12);
        let st = |x, y| true_state(Point2::new(x, y), &l, &ell, 12).unwrap();
        assert_eq!(st(2.0, 0.1), PropagationState::Shadowing);
        assert_eq!(st(2.0, 0.5), PropagationState::Reflection);
        assert_eq!(st(2.0, 3.0), PropagationState::NonFading);
        // Beyond the RX end the footprint misses the segment.
        assert_ne!(st(4.5, 0.0), PropagationState::Shadowing);
    }

    proptest! {
        #[test]
        fn reflection_periodic_and_bounded(delta in 0.0..5.0f64, psi in 0.01..0.99f64, n in 1u32..20) {
            let r = ReflectionParams::new(psi).unwrap();
            let lambda = 0.125;
            let g = reflection_gain_from_excess(delta, lambda, &r);
            let g2 = reflection_gain_from_excess(delta + n as f64 * lambda, lambda, &r);
            prop_assert!((g - g2).abs() < 1e-9);
            prop_assert!(g <= 20.0 * (1.0 + psi).log10() + 1e-12);
            prop_assert!(g >= 20.0 * (1.0 - psi).log10() - 1e-12);
        }

        #[test]
        fn shadow_even_in_offset(d in -0.5..0.5f64, theta in -3.2..3.2f64) {
            let ell = EllipseParams { theta, ..Default::default() };
            prop_assert_eq!(shadow_gain_at_offset(d, &ell), shadow_gain_at_offset(-d, &ell));
            prop_assert!(shadow_gain_at_offset(d, &ell) >= 0.0);
        }
    }
}
