//! Streamlines, cylindrical frames and bundle diagnostics.
//!
//! Everything here works on any [`VectorField`]; nothing assumes the tube
//! construction from [`crate::fields`].

use crate::export::{fmt_real, Table};
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

/// A point or a vector in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub type Vec3 = Point3;

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Point3 {
        Point3 { x, y, z }
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Cylindrical radius about the z axis.
    pub fn radius(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn from_cylindrical(r: f64, theta: f64, z: f64) -> Point3 {
        Point3::new(r * theta.cos(), r * theta.sin(), z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        self * -1.0
    }
}

/// Anything that can be sampled pointwise. Non-finite output marks a point
/// where the field cannot be evaluated.
pub trait VectorField {
    fn eval(&self, p: Point3) -> Vec3;
}

impl<F: Fn(Point3) -> Vec3> VectorField for F {
    fn eval(&self, p: Point3) -> Vec3 {
        self(p)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("field vanishes at the streamline start")]
    ZeroVelocityAtStart,
    #[error("integrator step fell below 1e-14")]
    StepUnderflow,
    #[error("point lies on the tube axis")]
    OnAxis,
    #[error("field vanishes or is not finite at the evaluation point")]
    ZeroVelocity,
    #[error("a traced sub-bundle collapsed below area 1e-12")]
    DegenerateSection,
    #[error("streamline did not reach the section plane z = {0}")]
    NoCrossing(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Orthonormal cylindrical frame `(e_r, e_theta, e_z)`, right-handed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub e_r: Vec3,
    pub e_theta: Vec3,
    pub e_z: Vec3,
}

impl Frame {
    /// Gram matrix of the three basis vectors.
    pub fn gram(&self) -> [[f64; 3]; 3] {
        let b = [self.e_r, self.e_theta, self.e_z];
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = b[i].dot(b[j]);
            }
        }
        g
    }
}

/// Arclength-parameterized polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub samples: Vec<(f64, Point3)>,
    pub step: f64,
}

impl Streamline {
    pub fn end(&self) -> Point3 {
        self.samples.last().expect("streamline has its start sample").1
    }

    pub fn arclength(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }
}

const STEP_FLOOR: f64 = 1e-14;
const STALL_FRACTION: f64 = 1e-12;

fn unit_direction<F: VectorField + ?Sized>(field: &F, p: Point3, floor: f64) -> Option<Vec3> {
    let u = field.eval(p);
    let n = u.norm();
    if !n.is_finite() || !u.is_finite() || n <= floor {
        None
    } else {
        Some(u * (1.0 / n))
    }
}

fn rk4<F: VectorField + ?Sized>(field: &F, p: Point3, h: f64, floor: f64) -> Option<Point3> {
    let k1 = unit_direction(field, p, floor)?;
    let k2 = unit_direction(field, p + k1 * (0.5 * h), floor)?;
    let k3 = unit_direction(field, p + k2 * (0.5 * h), floor)?;
    let k4 = unit_direction(field, p + k3 * h, floor)?;
    Some(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// One output step of length `h`, subdivided while a full step and two half
/// steps disagree by more than `1e-3 h`.
fn monitored_step<F: VectorField + ?Sized>(
    field: &F,
    p: Point3,
    h: f64,
    floor: f64,
) -> Result<Option<Point3>, GeometryError> {
    if h < STEP_FLOOR {
        return Err(GeometryError::StepUnderflow);
    }
    let Some(full) = rk4(field, p, h, floor) else {
        return Ok(None);
    };
    let half = match rk4(field, p, 0.5 * h, floor) {
        Some(m) => rk4(field, m, 0.5 * h, floor),
        None => None,
    };
    let Some(half) = half else {
        return Ok(None);
    };
    if (full - half).norm() <= 1e-3 * h {
        return Ok(Some(half));
    }
    match monitored_step(field, p, 0.5 * h, floor)? {
        Some(m) => monitored_step(field, m, 0.5 * h, floor),
        None => Ok(None),
    }
}

/// Traces `d gamma / ds = u/|u|` from `start` with classical RK4.
///
/// The step is shrunk to `s_max / ceil(s_max / step)` so the last sample lands
/// on `s_max`. Integration stops early where `|u|` falls below `1e-12` times
/// its starting magnitude.
pub fn integrate_streamline<F: VectorField + ?Sized>(
    field: &F,
    start: Point3,
    step: f64,
    s_max: f64,
) -> Result<Streamline, GeometryError> {
    if !(step > 0.0 && s_max > 0.0) {
        return Err(GeometryError::InvalidArgument("step and s_max must be positive"));
    }
    if step < STEP_FLOOR {
        return Err(GeometryError::StepUnderflow);
    }
    let u0 = field.eval(start).norm();
    if !(u0 > 0.0) || !u0.is_finite() {
        return Err(GeometryError::ZeroVelocityAtStart);
    }
    let floor = STALL_FRACTION * u0;
    let n = (s_max / step).ceil().max(1.0) as usize;
    let h = s_max / n as f64;
    let mut samples = Vec::with_capacity(n + 1);
    samples.push((0.0, start));
    let mut p = start;
    for i in 1..=n {
        match monitored_step(field, p, h, floor)? {
            Some(next) => {
                p = next;
                samples.push((i as f64 * h, p));
            }
            None => break,
        }
    }
    Ok(Streamline { samples, step: h })
}

fn unit_axis(axis: Vec3) -> Result<Vec3, GeometryError> {
    let n = axis.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(GeometryError::InvalidArgument("tube axis must be a nonzero vector"));
    }
    Ok(axis * (1.0 / n))
}

/// Cylindrical frame about the line through the origin with direction `axis`.
/// `e_theta = e_z x e_r`, so the triple is right-handed.
pub fn local_frame<F: VectorField + ?Sized>(field: &F, x: Point3, axis: Vec3) -> Result<Frame, GeometryError> {
    let e_z = unit_axis(axis)?;
    let radial = x - e_z * x.dot(e_z);
    let d = radial.norm();
    if d < 1e-12 {
        return Err(GeometryError::OnAxis);
    }
    let u = field.eval(x);
    if !u.is_finite() || u.norm() == 0.0 {
        return Err(GeometryError::ZeroVelocity);
    }
    let e_r = radial * (1.0 / d);
    let e_theta = e_z.cross(e_r);
    Ok(Frame { e_r, e_theta, e_z })
}

/// Components of `u/|u|` in `frame`: `(omega_r, omega_theta, omega_z)`.
pub fn decompose_direction<F: VectorField + ?Sized>(
    field: &F,
    x: Point3,
    frame: &Frame,
) -> Result<(f64, f64, f64), GeometryError> {
    let u = field.eval(x);
    let n = u.norm();
    if !u.is_finite() || !(n > 0.0) || !n.is_finite() {
        return Err(GeometryError::ZeroVelocity);
    }
    let d = u * (1.0 / n);
    Ok((d.dot(frame.e_r), d.dot(frame.e_theta), d.dot(frame.e_z)))
}

/// Streamline samples with the direction decomposition at each point.
/// Points on the axis get `NaN` components.
pub fn streamline_table<F: VectorField + ?Sized>(field: &F, line: &Streamline, axis: Vec3) -> Table {
    let mut t = Table::new(&["s", "x", "y", "z", "omega_r", "omega_theta", "omega_z"]);
    for &(s, p) in &line.samples {
        let om = local_frame(field, p, axis)
            .and_then(|f| decompose_direction(field, p, &f))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        t.push(
            [s, p.x, p.y, p.z, om.0, om.1, om.2]
                .iter()
                .map(|&v| fmt_real(v))
                .collect(),
        );
    }
    t
}

/// Straight tube along the z axis: incoming section at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeGeometry {
    pub radius: f64,
    pub length: f64,
}

/// Sampling density for [`bundle_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleSampling {
    /// Number of nested rings splitting the section into sub-bundles.
    pub rings: usize,
    /// Boundary points per ring, at least 16.
    pub points_per_ring: usize,
    /// Downstream sections, evenly spaced in `(0, length]`.
    pub sections: usize,
    pub step: f64,
}

impl Default for BundleSampling {
    fn default() -> Self {
        BundleSampling {
            rings: 4,
            points_per_ring: 32,
            sections: 4,
            step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleReport {
    pub area_ratio_min: f64,
    pub area_ratio_max: f64,
    pub flux_sup_over_inf: f64,
    pub bundle_constant: f64,
}

/// Follows a streamline from `p` until it crosses the plane `z = z_target`.
pub fn advect_to_plane<F: VectorField + ?Sized>(
    field: &F,
    p: Point3,
    z_target: f64,
    step: f64,
) -> Result<Point3, GeometryError> {
    if (p.z - z_target).abs() < 1e-15 {
        return Ok(p);
    }
    let u0 = field.eval(p).norm();
    if !(u0 > 0.0) || !u0.is_finite() {
        return Err(GeometryError::ZeroVelocityAtStart);
    }
    let floor = STALL_FRACTION * u0;
    let mut cur = p;
    for _ in 0..10_000_000usize {
        let next = monitored_step(field, cur, step, floor)?.ok_or(GeometryError::NoCrossing(z_target))?;
        if (next.z - z_target) * (cur.z - z_target) <= 0.0 {
            // Secant refinement of the partial step that lands on the plane.
            let (mut a, mut b) = (0.0, step);
            let (mut za, mut zb) = (cur.z - z_target, next.z - z_target);
            let mut best = next;
            for _ in 0..60 {
                if (zb - za).abs() < 1e-300 {
                    break;
                }
                let c = b - zb * (b - a) / (zb - za);
                let q = rk4(field, cur, c, floor).ok_or(GeometryError::NoCrossing(z_target))?;
                best = q;
                let zc = q.z - z_target;
                if zc.abs() < 1e-14 {
                    break;
                }
                a = b;
                za = zb;
                b = c;
                zb = zc;
            }
            return Ok(best);
        }
        cur = next;
    }
    Err(GeometryError::NoCrossing(z_target))
}

fn shoelace(points: &[Point3]) -> f64 {
    let n = points.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a.abs()
}

/// Area ratios of advected ring sub-bundles and the flux spread over the
/// incoming section.
///
/// The section at `z = 0` is split into `rings` nested annuli (the innermost
/// is a disc). Each ring boundary is sampled by `points_per_ring` points,
/// carried along streamlines to every downstream plane, and its area is
/// recomputed with the shoelace formula. Flux is `u . e_z` at every boundary
/// sample plus the centre.
pub fn bundle_report<F: VectorField + ?Sized>(
    field: &F,
    tube: &TubeGeometry,
    sampling: &BundleSampling,
) -> Result<BundleReport, GeometryError> {
    if sampling.points_per_ring < 16 {
        return Err(GeometryError::InvalidArgument("need at least 16 samples per section"));
    }
    if sampling.rings == 0 || sampling.sections == 0 {
        return Err(GeometryError::InvalidArgument("rings and sections must be positive"));
    }
    let m = sampling.points_per_ring;
    let radii: Vec<f64> = (1..=sampling.rings)
        .map(|i| tube.radius * i as f64 / sampling.rings as f64)
        .collect();
    let circles: Vec<Vec<Point3>> = radii
        .iter()
        .map(|&r| {
            (0..m)
                .map(|i| Point3::from_cylindrical(r, 2.0 * std::f64::consts::PI * i as f64 / m as f64, 0.0))
                .collect()
        })
        .collect();

    let mut flux: Vec<f64> = vec![field.eval(Point3::default()).z];
    flux.extend(circles.iter().flatten().map(|&p| field.eval(p).z));
    let fmax = flux.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fmin = flux.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(fmin > 0.0) {
        return Err(GeometryError::ZeroVelocity);
    }

    let ring_areas = |cs: &[Vec<Point3>]| -> Vec<f64> {
        let outer: Vec<f64> = cs.iter().map(|c| shoelace(c)).collect();
        (0..outer.len())
            .map(|i| if i == 0 { outer[0] } else { outer[i] - outer[i - 1] })
            .collect()
    };
    let a0 = ring_areas(&circles);
    if a0.iter().any(|&a| a < 1e-12) {
        return Err(GeometryError::DegenerateSection);
    }

    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut current = circles.clone();
    let mut z_prev = 0.0;
    for s in 1..=sampling.sections {
        let z = tube.length * s as f64 / sampling.sections as f64;
        let mut next = Vec::with_capacity(current.len());
        for c in &current {
            let moved: Result<Vec<Point3>, GeometryError> = c
                .iter()
                .map(|&p| advect_to_plane(field, Point3::new(p.x, p.y, z_prev), z, sampling.step))
                .collect();
            next.push(moved?);
        }
        for (a, a_init) in ring_areas(&next).iter().zip(&a0) {
            if *a < 1e-12 {
                return Err(GeometryError::DegenerateSection);
            }
            let ratio = a / a_init;
            rmin = rmin.min(ratio);
            rmax = rmax.max(ratio);
        }
        current = next;
        z_prev = z;
    }
    let flux_ratio = fmax / fmin;
    Ok(BundleReport {
        area_ratio_min: rmin,
        area_ratio_max: rmax,
        flux_sup_over_inf: flux_ratio,
        bundle_constant: rmax.max(1.0 / rmin).max(flux_ratio),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn helix(p: Point3) -> Vec3 {
        Point3::new(-p.y, p.x, 1.0) * (1.0 / (p.x * p.x + p.y * p.y + 1.0).sqrt())
    }

    fn helix_exact(s: f64) -> Point3 {
        let t = s / 2f64.sqrt();
        Point3::new(t.cos(), t.sin(), t)
    }

    #[test]
    fn straight_line() {
        let f = |_: Point3| Point3::new(0.0, 0.0, 1.0);
        let l = integrate_streamline(&f, Point3::default(), 0.1, 1.0).unwrap();
        assert!((l.end() - Point3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert_eq!(l.samples.len(), 11);
    }

    #[test]
    fn helix_closed_form() {
        let l = integrate_streamline(&helix, Point3::new(1.0, 0.0, 0.0), 0.01, 5.0).unwrap();
        for &(s, p) in &l.samples {
            assert!((p - helix_exact(s)).norm() < 1e-8, "s = {s}");
        }
    }

    #[test]
    fn helix_fourth_order() {
        let err = |h: f64| {
            let l = integrate_streamline(&helix, Point3::new(1.0, 0.0, 0.0), h, 8.0).unwrap();
            (l.end() - helix_exact(8.0)).norm()
        };
        let ratio = err(0.2) / err(0.1);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_start_rejected() {
        let f = |_: Point3| Point3::default();
        assert_eq!(
            integrate_streamline(&f, Point3::default(), 0.1, 1.0),
            Err(GeometryError::ZeroVelocityAtStart)
        );
    }

    #[test]
    fn stalls_early() {
        // Speed drops to zero at z = 0.5.
        let f = |p: Point3| Point3::new(0.0, 0.0, (0.5 - p.z).max(0.0));
        let l = integrate_streamline(&f, Point3::default(), 0.1, 2.0).unwrap();
        assert!(l.arclength() < 1.0);
    }

    #[test]
    fn frames() {
        let f = |_: Point3| Point3::new(0.0, 0.0, 1.0);
        let ez = Point3::new(0.0, 0.0, 1.0);
        let a = local_frame(&f, Point3::new(1.0, 0.0, 0.0), ez).unwrap();
        assert_eq!(a.e_r, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(a.e_theta, Point3::new(0.0, 1.0, 0.0));
        let b = local_frame(&f, Point3::new(0.0, 1.0, 0.0), ez).unwrap();
        assert!((b.e_r - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((b.e_theta - Point3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(
            local_frame(&f, Point3::new(0.0, 0.0, 3.0), ez),
            Err(GeometryError::OnAxis)
        );
        let d = decompose_direction(&f, Point3::new(0.3, 0.2, 0.0), &a).unwrap();
        assert_relative_eq!(d.2, 1.0);
    }

    #[test]
    fn uniform_bundle() {
        let f = |_: Point3| Point3::new(0.0, 0.0, 1.0);
        let r = bundle_report(
            &f,
            &TubeGeometry {
                radius: 1.0,
                length: 1.0,
            },
            &BundleSampling {
                step: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.bundle_constant - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bundle_needs_16_samples() {
        let f = |_: Point3| Point3::new(0.0, 0.0, 1.0);
        let s = BundleSampling {
            points_per_ring: 8,
            ..Default::default()
        };
        assert!(bundle_report(
            &f,
            &TubeGeometry {
                radius: 1.0,
                length: 1.0
            },
            &s
        )
        .is_err());
    }

    #[test]
    fn streamline_csv_columns() {
        let l = integrate_streamline(&helix, Point3::new(1.0, 0.0, 0.0), 0.5, 1.0).unwrap();
        let t = streamline_table(&helix, &l, Point3::new(0.0, 0.0, 1.0));
        assert_eq!(t.header, ["s", "x", "y", "z", "omega_r", "omega_theta", "omega_z"]);
        assert_eq!(t.rows.len(), 3);
    }
}
