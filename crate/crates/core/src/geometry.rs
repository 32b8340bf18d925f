//! Planar link geometry.
//!
//! A link is a fixed transmitter/receiver pair. The person acts as a single-bounce
//! reflector, so every model downstream is driven by the excess length of the
//! TX -> person -> RX path over the direct path, and by its rate of change.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Positions closer than this to a transceiver are treated as coincident with it.
const ENDPOINT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Planar velocity in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity2 {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity2 {
    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    /// Velocity of the given speed along `heading` (radians from +x).
    pub fn from_polar(speed: f64, heading: f64) -> Self {
        Self::new(speed * heading.cos(), speed * heading.sin())
    }

    pub fn speed(self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn heading(self) -> f64 {
        self.vy.atan2(self.vx)
    }

    /// Displacement covered in `dt` seconds.
    pub fn displacement(self, dt: f64) -> Point2 {
        Point2::new(self.vx * dt, self.vy * dt)
    }
}

impl Mul<f64> for Velocity2 {
    type Output = Velocity2;
    fn mul(self, rhs: f64) -> Velocity2 {
        Velocity2::new(self.vx * rhs, self.vy * rhs)
    }
}

/// A TX/RX pair at fixed positions, operating at one carrier frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: usize,
    pub tx: Point2,
    pub rx: Point2,
    carrier_frequency: f64,
    wavelength: f64,
    length: f64,
}

impl Link {
    pub fn new(id: usize, tx: Point2, rx: Point2, carrier_frequency: f64) -> Result<Self> {
        if !tx.is_finite() || !rx.is_finite() {
            return Err(DflError::config(format!("link {id}: non-finite node position")));
        }
        let length = tx.distance(rx);
        if length <= ENDPOINT_EPS {
            return Err(DflError::config(format!("link {id}: TX and RX coincide")));
        }
        if !(carrier_frequency.is_finite() && carrier_frequency > 0.0) {
            return Err(DflError::config(format!(
                "link {id}: carrier frequency must be positive, got {carrier_frequency}"
            )));
        }
        Ok(Self {
            id,
            tx,
            rx,
            carrier_frequency,
            wavelength: SPEED_OF_LIGHT / carrier_frequency,
            length,
        })
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    /// Carrier wavelength c0 / f_c in meters.
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Length of the line-of-sight segment.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Unit vector pointing from TX to RX.
    pub fn direction(&self) -> Point2 {
        (self.rx - self.tx) * (1.0 / self.length)
    }

    /// Angle of the TX -> RX direction, radians from +x.
    pub fn angle(&self) -> f64 {
        let d = self.rx - self.tx;
        d.y.atan2(d.x)
    }

    fn check_off_endpoints(&self, p: Point2) -> Result<()> {
        if p.distance(self.tx) <= ENDPOINT_EPS || p.distance(self.rx) <= ENDPOINT_EPS {
            Err(DflError::DegeneratePosition { x: p.x, y: p.y })
        } else {
            Ok(())
        }
    }
}

/// Coordinates in the frame anchored at TX with the first axis along the LoS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLocalCoords {
    /// Signed distance along the LoS, measured from TX.
    pub along: f64,
    /// Signed distance from the LoS line, positive to the left of TX -> RX.
    pub perp: f64,
}

pub fn to_link_local(p: Point2, link: &Link) -> LinkLocalCoords {
    let u = link.direction();
    let d = p - link.tx;
    LinkLocalCoords {
        along: d.dot(u),
        perp: u.x * d.y - u.y * d.x,
    }
}

pub fn from_link_local(c: LinkLocalCoords, link: &Link) -> Point2 {
    let u = link.direction();
    let n = Point2::new(-u.y, u.x);
    link.tx + u * c.along + n * c.perp
}

/// Excess length of the TX -> p -> RX path over the direct TX -> RX path.
pub fn excess_path_length(p: Point2, link: &Link) -> Result<f64> {
    link.check_off_endpoints(p)?;
    Ok(excess_unchecked(p, link))
}

#[inline]
fn excess_unchecked(p: Point2, link: &Link) -> f64 {
    // Clamp tiny negative round-off for points on the segment.
    (p.distance(link.rx) + p.distance(link.tx) - link.length).max(0.0)
}

/// Sum of the unit vectors pointing from RX and from TX toward `p`.
///
/// This is the inward normal of the Fresnel ellipse through `p`, scaled so that
/// its dot product with the reflector velocity is the path length rate.
pub fn fresnel_normal(p: Point2, link: &Link) -> Result<Point2> {
    link.check_off_endpoints(p)?;
    let from_rx = p - link.rx;
    let from_tx = p - link.tx;
    Ok(from_rx * (1.0 / from_rx.norm()) + from_tx * (1.0 / from_tx.norm()))
}

/// Time derivative of the excess path length for a reflector at `p` moving with `v`.
pub fn path_length_rate(p: Point2, v: Velocity2, link: &Link) -> Result<f64> {
    let n = fresnel_normal(p, link)?;
    Ok(n.x * v.vx + n.y * v.vy)
}

/// 1-based Fresnel zone index: zone n spans excess lengths [(n-1)λ/2, nλ/2).
pub fn fresnel_zone_index(p: Point2, link: &Link) -> Result<u32> {
    let delta = excess_path_length(p, link)?;
    Ok(zone_of_excess(delta, link.wavelength()))
}

pub(crate) fn zone_of_excess(delta: f64, wavelength: f64) -> u32 {
    (delta / (0.5 * wavelength)).floor() as u32 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link4() -> Link {
        Link::new(0, Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), 2.4e9).unwrap()
    }

    #[test]
    fn local_frame_examples() {
        let l = link4();
        let c = to_link_local(l.tx, &l);
        assert_eq!((c.along, c.perp), (0.0, 0.0));
        let c = to_link_local(l.rx, &l);
        assert!((c.along - 4.0).abs() < 1e-12 && c.perp.abs() < 1e-12);
        let c = to_link_local(Point2::new(2.0, 1.5), &l);
        assert!((c.along - 2.0).abs() < 1e-12 && (c.perp - 1.5).abs() < 1e-12);
    }

    #[test]
    fn excess_examples() {
        let l = link4();
        assert_eq!(excess_path_length(Point2::new(1.3, 0.0), &l).unwrap(), 0.0);
        let d = excess_path_length(Point2::new(2.0, 1.5), &l).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(matches!(
            excess_path_length(l.tx, &l),
            Err(DflError::DegeneratePosition { .. })
        ));
        assert!(excess_path_length(l.rx, &l).is_err());
    }

    #[test]
    fn rate_examples() {
        let l = link4();
        let p = Point2::new(2.0, 1.5);
        let r = path_length_rate(p, Velocity2::new(0.0, -0.5), &l).unwrap();
        assert!((r + 0.6).abs() < 1e-12);
        assert_eq!(path_length_rate(p, Velocity2::new(0.7, 0.0), &l).unwrap(), 0.0);
        assert_eq!(path_length_rate(p, Velocity2::default(), &l).unwrap(), 0.0);
        assert!(path_length_rate(l.rx, Velocity2::new(1.0, 0.0), &l).is_err());
    }

    #[test]
    fn zone_examples() {
        let lambda = link4().wavelength();
        assert_eq!(zone_of_excess(0.0, lambda), 1);
        assert_eq!(zone_of_excess(2.0 * lambda, lambda), 5);
        assert_eq!(zone_of_excess(0.5 * lambda, lambda), 2);
        assert_eq!(fresnel_zone_index(Point2::new(2.0, 0.0), &link4()).unwrap(), 1);
    }

    #[test]
    fn wavelength_is_c_over_f() {
        assert!((link4().wavelength() - 0.124_913_524).abs() < 1e-8);
    }

    #[test]
    fn rejects_degenerate_links() {
        assert!(Link::new(0, Point2::new(1.0, 1.0), Point2::new(1.0, 1.0), 2.4e9).is_err());
        assert!(Link::new(0, Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), 0.0).is_err());
    }

    fn coord() -> impl Strategy<Value = f64> {
        -5.0..5.0f64
    }

    fn off_endpoints(p: Point2, l: &Link) -> bool {
        p.distance(l.tx) > 1e-3 && p.distance(l.rx) > 1e-3
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn local_coords_round_trip(px in coord(), py in coord(), rx in coord(), ry in coord()) {
            prop_assume!(rx.hypot(ry) > 0.1);
            let l = Link::new(0, Point2::new(0.3, -0.2), Point2::new(rx, ry), 2.4e9).unwrap();
            let p = Point2::new(px, py);
            let back = from_link_local(to_link_local(p, &l), &l);
            prop_assert!(back.distance(p) < 1e-9);
        }

        #[test]
        fn excess_symmetric_in_endpoints(px in coord(), py in coord(), rx in coord(), ry in coord()) {
            let tx = Point2::new(-1.0, 0.5);
            let rxp = Point2::new(rx, ry);
            prop_assume!(tx.distance(rxp) > 0.1);
            let a = Link::new(0, tx, rxp, 2.4e9).unwrap();
            let b = Link::new(0, rxp, tx, 2.4e9).unwrap();
            let p = Point2::new(px, py);
            prop_assume!(off_endpoints(p, &a));
            let da = excess_path_length(p, &a).unwrap();
            let db = excess_path_length(p, &b).unwrap();
            prop_assert!(da >= 0.0);
            prop_assert!((da - db).abs() < 1e-9);
        }

        #[test]
        fn rate_is_linear_and_bounded(px in coord(), py in coord(), vx in -2.0..2.0f64, vy in -2.0..2.0f64, s in -3.0..3.0f64) {
            let l = link4();
            let p = Point2::new(px, py);
            prop_assume!(off_endpoints(p, &l));
            let v = Velocity2::new(vx, vy);
            let r = path_length_rate(p, v, &l).unwrap();
            let rs = path_length_rate(p, v * s, &l).unwrap();
            let rn = path_length_rate(p, v * -1.0, &l).unwrap();
            prop_assert!((rs - s * r).abs() < 1e-9);
            prop_assert!((rn + r).abs() < 1e-12);
            prop_assert!(r.abs() <= 2.0 * v.speed() + 1e-12);
        }

        #[test]
        fn rate_matches_finite_difference(px in coord(), py in coord(), vx in -1.5..1.5f64, vy in -1.5..1.5f64) {
            let l = link4();
            let p = Point2::new(px, py);
            prop_assume!(p.distance(l.tx) > 0.2 && p.distance(l.rx) > 0.2);
            // Points on the segment have a kink in the excess length.
            prop_assume!(to_link_local(p, &l).perp.abs() > 0.05);
            let v = Velocity2::new(vx, vy);
            prop_assume!(v.speed() > 0.05);
            let h = 1e-4;
            let fwd = excess_path_length(p + v.displacement(h), &l).unwrap();
            let bwd = excess_path_length(p + v.displacement(-h), &l).unwrap();
            let fd = (fwd - bwd) / (2.0 * h);
            let an = path_length_rate(p, v, &l).unwrap();
            prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {} analytic {}", fd, an);
        }
    }
}
