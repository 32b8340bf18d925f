//! Coordinate errors and the particle-in-ellipse ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::geometry::Point2;
use crate::rss_model::EllipseParams;

/// Mean absolute coordinate errors and their standard deviations, in centimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateErrors {
    pub eps_x: f64,
    pub eps_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub count: usize,
}

pub fn mae(truth: &[Point2], estimates: &[Point2]) -> Result<CoordinateErrors> {
    if truth.len() != estimates.len() {
        return Err(DflError::Alignment(format!(
            "{} truth positions but {} estimates",
            truth.len(),
            estimates.len()
        )));
    }
    if truth.is_empty() {
        return Err(DflError::Alignment("no estimates to score".into()));
    }
    let ex: Vec<f64> = truth.iter().zip(estimates).map(|(t, e)| (t.x - e.x).abs() * 100.0).collect();
    let ey: Vec<f64> = truth.iter().zip(estimates).map(|(t, e)| (t.y - e.y).abs() * 100.0).collect();
    let (eps_x, sigma_x) = mean_std(&ex);
    let (eps_y, sigma_y) = mean_std(&ey);
    Ok(CoordinateErrors {
        eps_x,
        eps_y,
        sigma_x,
        sigma_y,
        count: truth.len(),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Whether `p` lies in the person ellipse centered at `center`.
///
/// The `semi_minor` axis points along `heading`; `semi_major` spans the shoulders.
pub fn inside_ellipse(p: Point2, center: Point2, heading: f64, ellipse: &EllipseParams) -> bool {
    let d = p - center;
    let (s, c) = heading.sin_cos();
    let along = d.x * c + d.y * s;
    let across = -d.x * s + d.y * c;
    (along / ellipse.semi_minor).powi(2) + (across / ellipse.semi_major).powi(2) <= 1.0
}

/// Running particle-in-ellipse count over a track.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParticleRatio {
    inside: u64,
    total: u64,
}

impl ParticleRatio {
    pub fn add(&mut self, particles: impl IntoIterator<Item = Point2>, center: Point2, heading: f64, ellipse: &EllipseParams) {
        for p in particles {
            self.total += 1;
            if inside_ellipse(p, center, heading, ellipse) {
                self.inside += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &ParticleRatio) {
        self.inside += other.inside;
        self.total += other.total;
    }

    /// Percentage in `[0, 100]`; zero when nothing was recorded.
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.inside as f64 / self.total as f64
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Particle ratio over a sequence of (particle positions, true center, true heading).
pub fn particle_ratio<'a>(
    steps: impl IntoIterator<Item = (&'a [Point2], Point2, f64)>,
    ellipse: &EllipseParams,
) -> f64 {
    let mut acc = ParticleRatio::default();
    for (ps, c, h) in steps {
        acc.add(ps.iter().copied(), c, h, ellipse);
    }
    acc.percent()
}

/// Scores of one tracked run. Errors are `NaN` when the track never started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub eps_x: f64,
    pub eps_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub eps_pct: f64,
    /// Number of scored estimates.
    pub k: usize,
    pub seed: u64,
}

impl RunResult {
    pub fn untracked(seed: u64) -> Self {
        Self {
            eps_x: f64::NAN,
            eps_y: f64::NAN,
            sigma_x: f64::NAN,
            sigma_y: f64::NAN,
            eps_pct: 0.0,
            k: 0,
            seed,
        }
    }
}

pub const RESULT_HEADER: [&str; 7] = ["eps_x", "sigma_x", "eps_y", "sigma_y", "eps_pct", "k", "seed"];

/// Run scores in the column order of a results table: each error next to its spread.
pub fn write_results_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in results {
        w.write_record([
            r.eps_x.to_string(),
            r.sigma_x.to_string(),
            r.eps_y.to_string(),
            r.sigma_y.to_string(),
            r.eps_pct.to_string(),
            r.k.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        let truth = vec![Point2::new(0.0, 1.0), Point2::new(0.5, 1.2)];
        let r = mae(&truth, &truth).unwrap();
        assert_eq!((r.eps_x, r.eps_y), (0.0, 0.0));

        let shifted: Vec<Point2> = truth.iter().map(|p| *p + Point2::new(0.1, 0.0)).collect();
        let r = mae(&truth, &shifted).unwrap();
        assert!((r.eps_x - 10.0).abs() < 1e-9 && r.eps_y == 0.0);
        assert!(r.sigma_x < 1e-9);

        let alt: Vec<Point2> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| *p + Point2::new(0.0, if i % 2 == 0 { 0.2 } else { -0.2 }))
            .collect();
        assert!((mae(&truth, &alt).unwrap().eps_y - 20.0).abs() < 1e-9);
    }

    #[test]
    fn mae_alignment_errors() {
        assert!(matches!(mae(&[Point2::default()], &[]), Err(DflError::Alignment(_))));
        assert!(matches!(mae(&[], &[]), Err(DflError::Alignment(_))));
    }

    #[test]
    fn ratio_extremes() {
        let ell = EllipseParams::default();
        let c = Point2::new(1.0, 2.0);
        let at_center = vec![c; 10];
        assert_eq!(particle_ratio([(&at_center[..], c, 0.3)], &ell), 100.0);
        let far = vec![c + Point2::new(10.0, 0.0); 10];
        assert_eq!(particle_ratio([(&far[..], c, 0.3)], &ell), 0.0);
        assert_eq!(particle_ratio(std::iter::empty(), &ell), 0.0);
    }

    #[test]
    fn ellipse_axes_follow_heading() {
        let ell = EllipseParams::default();
        let c = Point2::default();
        assert!(inside_ellipse(Point2::new(0.14, 0.0), c, 0.0, &ell));
        assert!(!inside_ellipse(Point2::new(0.16, 0.0), c, 0.0, &ell));
        assert!(inside_ellipse(Point2::new(0.0, 0.24), c, 0.0, &ell));
        let h = std::f64::consts::FRAC_PI_2;
        assert!(inside_ellipse(Point2::new(0.24, 0.0), c, h, &ell));
        assert!(!inside_ellipse(Point2::new(0.0, 0.16), c, h, &ell));
    }
}
