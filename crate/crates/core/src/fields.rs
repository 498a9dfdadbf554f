//! Swirl profiles and the divergence-free tube field built from them.
//!
//! The tube is the cylinder `r <= r_1 = 1`, `0 <= z < S` around the z axis.
//! Inside it the velocity is
//!
//! ```text
//! u = flux(r) * sqrt(1 - w^2) / w * e_theta + flux(r) * e_z,    w = omega_z(r, z)
//! ```
//!
//! so `u_r = 0` and `u_z` does not depend on `z`, which makes `div u = 0`
//! exactly, `|u| = flux / w`, and `div(u/|u|) = dw/dz`.
//!
//! Profiles are evaluated in log-depth `lx = ln(S - z)`. Milestones of the
//! inner annuli sit at depths like `1e-190` that no `f64` value of `z` can
//! reach, while their log-depths are ordinary numbers.

use crate::export::{fmt_real, Table};
use crate::geometry::{integrate_streamline, GeometryError, Point3, Vec3, VectorField};
use std::f64::consts::PI;
use thiserror::Error;

/// Steepness slope multiplier minus one.
pub const STEEPNESS_MARGIN: f64 = 0.05;
/// Width of the radial blending band, as a fraction of the outer radius.
pub const BLEND_FRACTION: f64 = 0.05;
/// Below this swirl component the speed is treated as non-representable.
pub const SINGULAR_SWIRL: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("annulus {0}: the steepness descent reaches the lower envelope before its window ends")]
    InfeasibleAnnulus(usize),
    #[error("epsilon = {epsilon} must be below 1/2 - 1/alpha = {limit}")]
    EpsilonTooLarge { epsilon: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("omega_z = {0:e} is too small to evaluate the speed")]
    SingularSwirl(f64),
    #[error("point lies outside the tube support")]
    OutsideSupport,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Cubic ramp `3x^2 - 2x^3` clamped to `[0, 1]`; C^1 with slope at most 1.5.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

pub fn smoothstep_slope(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        6.0 * x * (1.0 - x)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Radius `r_j = 2^{1-j}` of the outer edge of annulus `j`.
pub fn annulus_radius(j: usize) -> f64 {
    2f64.powi(1 - j as i32)
}

/// Cross-section area `pi (r_j^2 - r_{j+1}^2)` of annulus `j`.
pub fn annulus_area(j: usize) -> f64 {
    let (a, b) = (annulus_radius(j), annulus_radius(j + 1));
    PI * (a * a - b * b)
}

/// One annulus `r_{j+1} < r <= r_j` with its milestones.
#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub j: usize,
    pub r_outer: f64,
    pub r_inner: f64,
    pub area: f64,
    /// `ln(S - S_j)`.
    pub ln_depth_start: f64,
    /// `ln(S - S~_j)`.
    pub ln_depth_end: f64,
    pub s_j: f64,
    pub s_tilde_j: f64,
    /// `ln omega_z` held after the steepness window.
    pub ln_omega_end: f64,
    /// Log-depth where the descent met the clamp, if it did.
    pub crossing: Option<f64>,
}

impl Annulus {
    fn new(j: usize, s: f64, c_budget: f64) -> Annulus {
        let area = annulus_area(j);
        let ln_depth_start = s.ln() - c_budget / area;
        let ln_depth_end = ln_depth_start - c_budget / area;
        Annulus {
            j,
            r_outer: annulus_radius(j),
            r_inner: annulus_radius(j + 1),
            area,
            ln_depth_start,
            ln_depth_end,
            s_j: s - ln_depth_start.exp(),
            s_tilde_j: s - ln_depth_end.exp(),
            ln_omega_end: f64::NAN,
            crossing: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.crossing.is_none()
    }

    pub fn status(&self) -> Result<(), FieldError> {
        match self.crossing {
            None => Ok(()),
            Some(_) => Err(FieldError::InfeasibleAnnulus(self.j)),
        }
    }

    /// Inner edge of the blending band.
    pub fn band_outer(&self) -> f64 {
        self.r_inner + BLEND_FRACTION * self.r_outer
    }

    /// A radius inside the annulus but outside its blending band.
    pub fn core_radius(&self) -> f64 {
        0.5 * (self.band_outer() + self.r_outer)
    }
}

/// How `omega_z` depends on position.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// The annulus schedule from [`build_reference_profile`].
    Reference,
    /// `omega_z = c` everywhere.
    Constant(f64),
    /// `omega_z = (S - z)^gamma`.
    Power(f64),
    /// `omega_z = scale * exp(-rate * z)`.
    Exponential { scale: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwirlProfile {
    pub alpha: f64,
    pub epsilon: f64,
    pub s: f64,
    pub c_budget: f64,
    pub margin: f64,
    pub annuli: Vec<Annulus>,
    pub shape: Shape,
}

/// Where a radius falls in the annulus layout.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    /// Annulus index (0-based) and the weight of that annulus; the rest goes
    /// to the next one inward.
    Annulus(usize, f64),
    /// Inside the innermost annulus: upper envelope for all `z`.
    Core,
}

fn check_params(alpha: f64, epsilon: f64, c_budget: f64) -> Result<(), FieldError> {
    if !(alpha > 2.0 && alpha < 3.0) {
        return Err(FieldError::InvalidParameter(format!(
            "alpha = {alpha} must lie in (2, 3)"
        )));
    }
    let limit = 0.5 - 1.0 / alpha;
    if epsilon >= limit {
        return Err(FieldError::EpsilonTooLarge { epsilon, limit });
    }
    if !(epsilon > 0.0) {
        return Err(FieldError::InvalidParameter(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    if !(c_budget > 0.0 && c_budget.is_finite()) {
        return Err(FieldError::InvalidParameter(format!(
            "C_budget = {c_budget} must be positive"
        )));
    }
    Ok(())
}

/// Builds the reference schedule with `S = 1` and `r_j = 2^{1-j}`.
///
/// On annulus `j`, `omega_z` follows `(S-z)^{1/alpha}` up to `S_j`, then
/// descends with `d omega/dz = -(1 + margin)(S-z)^{-1/6}` up to `S~_j`, then
/// holds the value it reached. The descent is never allowed below
/// `(1 + margin)` times the lower envelope (a smaller factor if that would
/// start above `omega_z(S_j)`); an annulus where that clamp engages is kept
/// but marked infeasible (see [`Annulus::status`]).
pub fn build_reference_profile(
    alpha: f64,
    epsilon: f64,
    j_max: usize,
    c_budget: f64,
) -> Result<SwirlProfile, FieldError> {
    check_params(alpha, epsilon, c_budget)?;
    if j_max == 0 {
        return Err(FieldError::InvalidParameter("J_max must be at least 1".into()));
    }
    let mut p = SwirlProfile {
        alpha,
        epsilon,
        s: 1.0,
        c_budget,
        margin: STEEPNESS_MARGIN,
        annuli: (1..=j_max).map(|j| Annulus::new(j, 1.0, c_budget)).collect(),
        shape: Shape::Reference,
    };
    for i in 0..p.annuli.len() {
        let crossing = p.find_crossing(&p.annuli[i]);
        let a = &mut p.annuli[i];
        a.crossing = crossing;
        let end = a.ln_depth_end;
        let ln_end = p.descent_ln_omega(&p.annuli[i], end);
        p.annuli[i].ln_omega_end = ln_end;
    }
    Ok(p)
}

impl SwirlProfile {
    /// A profile with the reference milestones but a different `omega_z`.
    pub fn with_shape(
        alpha: f64,
        epsilon: f64,
        j_max: usize,
        c_budget: f64,
        shape: Shape,
    ) -> Result<SwirlProfile, FieldError> {
        check_params(alpha, epsilon, c_budget)?;
        Ok(SwirlProfile {
            alpha,
            epsilon,
            s: 1.0,
            c_budget,
            margin: STEEPNESS_MARGIN,
            annuli: (1..=j_max).map(|j| Annulus::new(j, 1.0, c_budget)).collect(),
            shape,
        })
    }

    /// Exponent `1/2 - epsilon` of the lower envelope.
    pub fn lower_exponent(&self) -> f64 {
        0.5 - self.epsilon
    }

    /// `ln` of the lower envelope `(S-z)^{1/2-eps}`.
    pub fn ln_lower(&self, lx: f64) -> f64 {
        self.lower_exponent() * lx
    }

    /// `ln` of the upper envelope `(S-z)^{1/alpha}`.
    pub fn ln_upper(&self, lx: f64) -> f64 {
        lx / self.alpha
    }

    /// `ln` of the clamp factor: `1 + margin`, lowered where that would put
    /// the clamp above `omega_z(S_j)` (outer annuli, where `S - S_j` is close
    /// to 1 and the envelopes nearly meet).
    fn ln_clamp_factor(&self, a: &Annulus) -> f64 {
        let lx0 = a.ln_depth_start;
        (1.0 + self.margin).ln().min(self.ln_upper(lx0) - self.ln_lower(lx0))
    }

    fn ln_clamp(&self, a: &Annulus, lx: f64) -> f64 {
        self.ln_clamp_factor(a) + self.ln_lower(lx)
    }

    /// Unclamped descent value; `-inf` once it would go nonpositive.
    fn raw_descent(&self, a: &Annulus, lx: f64) -> f64 {
        let k = (1.0 + self.margin) * 1.2;
        let lx0 = a.ln_depth_start;
        let q = k * ((5.0 / 6.0 - 1.0 / self.alpha) * lx0).exp() * -((5.0 / 6.0) * (lx - lx0)).exp_m1();
        if q < 1.0 {
            lx0 / self.alpha + (-q).ln_1p()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn descent_ln_omega(&self, a: &Annulus, lx: f64) -> f64 {
        self.raw_descent(a, lx).max(self.ln_clamp(a, lx))
    }

    fn find_crossing(&self, a: &Annulus) -> Option<f64> {
        let (lo, hi) = (a.ln_depth_end, a.ln_depth_start);
        let gap = |lx: f64| self.raw_descent(a, lx) - self.ln_clamp(a, lx);
        const N: usize = 4096;
        let mut prev = hi;
        if gap(hi) <= 0.0 {
            return Some(hi);
        }
        for i in 1..=N {
            let lx = hi - (hi - lo) * i as f64 / N as f64;
            if gap(lx) <= 0.0 {
                let (mut a_, mut b_) = (prev, lx);
                for _ in 0..100 {
                    let m = 0.5 * (a_ + b_);
                    if gap(m) > 0.0 {
                        a_ = m;
                    } else {
                        b_ = m;
                    }
                }
                return Some(b_);
            }
            prev = lx;
        }
        None
    }

    /// `ln omega_z` of annulus `a` alone, without radial blending.
    pub fn annulus_ln_omega(&self, a: &Annulus, lx: f64) -> f64 {
        if lx >= a.ln_depth_start {
            self.ln_upper(lx)
        } else if lx >= a.ln_depth_end {
            self.descent_ln_omega(a, lx)
        } else {
            a.ln_omega_end.max(self.ln_clamp(a, lx))
        }
    }

    /// `ln |d omega_z / dz|` of annulus `a` alone; `-inf` where it is flat.
    pub fn annulus_ln_abs_f(&self, a: &Annulus, lx: f64) -> f64 {
        let clamp_slope = self.ln_clamp_factor(a) + self.lower_exponent().ln() + (self.lower_exponent() - 1.0) * lx;
        if lx >= a.ln_depth_start {
            (1.0 / self.alpha).ln() + (1.0 / self.alpha - 1.0) * lx
        } else if lx >= a.ln_depth_end {
            if self.raw_descent(a, lx) >= self.ln_clamp(a, lx) {
                (1.0 + self.margin).ln() - lx / 6.0
            } else {
                clamp_slope
            }
        } else if a.ln_omega_end >= self.ln_clamp(a, lx) {
            f64::NEG_INFINITY
        } else {
            clamp_slope
        }
    }

    fn slot(&self, r: f64) -> Slot {
        for (i, a) in self.annuli.iter().enumerate() {
            if r > a.r_inner {
                let w = smoothstep((r - a.r_inner) / (BLEND_FRACTION * a.r_outer));
                return Slot::Annulus(i, w);
            }
        }
        Slot::Core
    }

    /// Index (1-based) of the annulus containing radius `r`, if any.
    pub fn annulus_of(&self, r: f64) -> Option<usize> {
        match self.slot(r) {
            Slot::Annulus(i, _) => Some(i + 1),
            Slot::Core => None,
        }
    }

    /// Weight of the containing annulus in the radial blend at `r`: below 1
    /// only inside a blending band, 1 in the core.
    pub fn blend_weight(&self, r: f64) -> f64 {
        match self.slot(r) {
            Slot::Annulus(_, w) => w,
            Slot::Core => 1.0,
        }
    }

    /// True inside a blending band (where `omega_z` mixes two annuli).
    pub fn in_blend_band(&self, r: f64) -> bool {
        matches!(self.slot(r), Slot::Annulus(_, w) if w < 1.0)
    }

    fn slot_pair(&self, r: f64) -> (Option<&Annulus>, f64, Option<&Annulus>) {
        match self.slot(r) {
            Slot::Annulus(i, w) => (Some(&self.annuli[i]), w, self.annuli.get(i + 1)),
            Slot::Core => (None, 1.0, None),
        }
    }

    /// `ln omega_z` at radius `r` and log-depth `lx = ln(S - z)`.
    pub fn ln_omega(&self, r: f64, lx: f64) -> f64 {
        match self.shape {
            Shape::Constant(c) => c.ln(),
            Shape::Power(g) => g * lx,
            Shape::Exponential { scale, rate } => scale.ln() - rate * (self.s - lx.exp()),
            Shape::Reference => {
                let one = |a: Option<&Annulus>| match a {
                    Some(a) => self.annulus_ln_omega(a, lx),
                    None => self.ln_upper(lx),
                };
                let (here, w, next) = self.slot_pair(r);
                if w >= 1.0 {
                    one(here)
                } else {
                    log_add_exp(w.ln() + one(here), (1.0 - w).ln() + one(next))
                }
            }
        }
    }

    /// `ln |F|` where `F = d omega_z/dz`; `-inf` where `F = 0`.
    pub fn ln_abs_f(&self, r: f64, lx: f64) -> f64 {
        match self.shape {
            Shape::Constant(_) => f64::NEG_INFINITY,
            Shape::Power(g) => {
                if g == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    g.abs().ln() + (g - 1.0) * lx
                }
            }
            Shape::Exponential { rate, .. } => {
                if rate == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.abs().ln() + self.ln_omega(r, lx)
                }
            }
            Shape::Reference => {
                let one = |a: Option<&Annulus>| match a {
                    Some(a) => self.annulus_ln_abs_f(a, lx),
                    None => (1.0 / self.alpha).ln() + (1.0 / self.alpha - 1.0) * lx,
                };
                let (here, w, next) = self.slot_pair(r);
                if w >= 1.0 {
                    one(here)
                } else {
                    log_add_exp(w.ln() + one(here), (1.0 - w).ln() + one(next))
                }
            }
        }
    }

    /// Sign of `F`: every shape here has `omega_z` non-increasing in `z`
    /// except an exponential with negative rate.
    fn f_sign(&self) -> f64 {
        match self.shape {
            Shape::Exponential { rate, .. } if rate < 0.0 => 1.0,
            _ => -1.0,
        }
    }

    /// `omega_z(r, z)` for `0 <= z < S`.
    pub fn omega_z(&self, r: f64, z: f64) -> f64 {
        self.ln_omega(r, (self.s - z).ln()).exp()
    }

    /// `F = d omega_z / dz` at `(r, z)`.
    pub fn f_value(&self, r: f64, z: f64) -> f64 {
        self.f_sign() * self.ln_abs_f(r, (self.s - z).ln()).exp()
    }

    /// Annuli that passed construction, i.e. whose descent never met the clamp.
    pub fn infeasible(&self) -> Vec<FieldError> {
        self.annuli.iter().filter_map(|a| a.status().err()).collect()
    }

    /// Structured text: scalar keys, then one `[[annulus]]` table per annulus.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("alpha = {}\n", fmt_real(self.alpha)));
        s.push_str(&format!("epsilon = {}\n", fmt_real(self.epsilon)));
        s.push_str(&format!("S = {}\n", fmt_real(self.s)));
        s.push_str(&format!("C_budget = {}\n", fmt_real(self.c_budget)));
        s.push_str(&format!("margin = {}\n", fmt_real(self.margin)));
        for a in &self.annuli {
            s.push_str("\n[[annulus]]\n");
            s.push_str(&format!("j = {}\n", a.j));
            s.push_str(&format!("r_j = {}\n", fmt_real(a.r_outer)));
            s.push_str(&format!("S_j = {}\n", fmt_real(a.s_j)));
            s.push_str(&format!("S_tilde_j = {}\n", fmt_real(a.s_tilde_j)));
            s.push_str(&format!("ln_depth_S_j = {}\n", fmt_real(a.ln_depth_start)));
            s.push_str(&format!("ln_depth_S_tilde_j = {}\n", fmt_real(a.ln_depth_end)));
            s.push_str(&format!("feasible = {}\n", a.is_feasible()));
        }
        s
    }
}

/// Axial flux `u . e_z` as a function of radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxProfile {
    /// 1 for `r <= 0.9 r_1`, smooth C^1 descent to 1/2 at `r_1`.
    Bump,
    Constant(f64),
}

impl FluxProfile {
    pub fn value(&self, r: f64, tube_radius: f64) -> f64 {
        match *self {
            FluxProfile::Constant(c) => c,
            FluxProfile::Bump => {
                let t = (r / tube_radius - 0.9) / 0.1;
                1.0 - 0.5 * smoothstep(t)
            }
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            FluxProfile::Constant(c) => c,
            FluxProfile::Bump => 1.0,
        }
    }
}

/// Velocity assembled from a swirl profile and a flux profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeField {
    pub profile: SwirlProfile,
    pub flux: FluxProfile,
    pub tube_radius: f64,
}

/// Cylindrical velocity components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylVelocity {
    pub u_r: f64,
    pub u_theta: f64,
    pub u_z: f64,
}

impl TubeField {
    pub fn new(profile: SwirlProfile, flux: FluxProfile) -> TubeField {
        let tube_radius = profile.annuli.first().map_or(1.0, |a| a.r_outer);
        TubeField {
            profile,
            flux,
            tube_radius,
        }
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.radius() <= self.tube_radius && p.z >= 0.0 && p.z < self.profile.s
    }

    /// Cylindrical components at radius `r` and log-depth `lx`.
    pub fn cylindrical(&self, r: f64, lx: f64) -> Result<CylVelocity, FieldError> {
        let w = self.profile.ln_omega(r, lx).exp();
        if !(w >= SINGULAR_SWIRL) {
            return Err(FieldError::SingularSwirl(w));
        }
        let w = w.min(1.0);
        let q = self.flux.value(r, self.tube_radius);
        Ok(CylVelocity {
            u_r: 0.0,
            u_theta: q * (1.0 - w * w).sqrt() / w,
            u_z: q,
        })
    }

    /// `ln |u| = ln flux - ln omega_z`, finite even where `|u|` overflows.
    pub fn ln_speed(&self, r: f64, lx: f64) -> f64 {
        self.flux.value(r, self.tube_radius).ln() - self.profile.ln_omega(r, lx)
    }

    /// Cartesian velocity; zero outside the tube.
    pub fn evaluate_velocity(&self, p: Point3) -> Result<Vec3, FieldError> {
        if !self.contains(p) {
            return Ok(Vec3::default());
        }
        let r = p.radius();
        let c = self.cylindrical(r, (self.profile.s - p.z).ln())?;
        if r == 0.0 {
            return Ok(Vec3::new(0.0, 0.0, c.u_z));
        }
        let (ct, st) = (p.x / r, p.y / r);
        Ok(Vec3::new(-c.u_theta * st, c.u_theta * ct, c.u_z))
    }

    /// `F = div(u/|u|) = d omega_z/dz`, analytically.
    pub fn evaluate_f(&self, p: Point3) -> Result<f64, FieldError> {
        if !self.contains(p) {
            return Err(FieldError::OutsideSupport);
        }
        Ok(self.profile.f_value(p.radius(), p.z))
    }

    /// CSV of samples on a tensor lattice: `r, theta, z, u_r, u_theta, u_z, F`.
    pub fn sample_table(&self, rs: &[f64], thetas: &[f64], zs: &[f64]) -> Result<Table, FieldError> {
        let mut t = Table::new(&["r", "theta", "z", "u_r", "u_theta", "u_z", "F"]);
        for &r in rs {
            for &th in thetas {
                for &z in zs {
                    let p = Point3::from_cylindrical(r, th, z);
                    let c = self.cylindrical(r, (self.profile.s - z).ln())?;
                    let f = self.evaluate_f(p)?;
                    t.push_reals(&[r, th, z, c.u_r, c.u_theta, c.u_z, f]);
                }
            }
        }
        Ok(t)
    }
}

impl VectorField for TubeField {
    fn eval(&self, p: Point3) -> Vec3 {
        self.evaluate_velocity(p)
            .unwrap_or(Vec3::new(f64::NAN, f64::NAN, f64::NAN))
    }
}

/// Pass/fail with the sampled extreme of the defining inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    /// Worst sampled slack, in the log domain for the envelope conditions and
    /// relative for the budget. Nonnegative slack is required for `<=`/`>=`
    /// conditions and positive slack for strict ones.
    pub margin: f64,
    pub samples: usize,
}

impl Verdict {
    fn strict(margin: f64, samples: usize) -> Verdict {
        Verdict {
            pass: margin > 0.0,
            margin,
            samples,
        }
    }

    fn weak(margin: f64, samples: usize) -> Verdict {
        Verdict {
            pass: margin >= -1e-12,
            margin,
            samples,
        }
    }

    fn vacuous() -> Verdict {
        Verdict {
            pass: true,
            margin: f64::INFINITY,
            samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusVerdict {
    pub j: usize,
    pub lower: Verdict,
    pub upper: Verdict,
    pub steepness: Verdict,
    pub budget: Verdict,
    /// Smallest sampled `omega_z` stays above [`SINGULAR_SWIRL`].
    pub evaluable: bool,
    pub min_ln_omega: f64,
}

impl AnnulusVerdict {
    pub fn certified(&self) -> bool {
        self.lower.pass && self.upper.pass && self.steepness.pass && self.budget.pass && self.evaluable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub annuli: Vec<AnnulusVerdict>,
    pub samples_per_window: usize,
    /// Worst margins over all annuli: lower, upper, steepness, budget.
    pub worst: [f64; 4],
    /// Largest `j` whose annulus passed every check; 0 when none did.
    pub feasible_j_max: usize,
}

impl ConditionReport {
    pub fn certified(&self, j: usize) -> bool {
        self.annuli.get(j.wrapping_sub(1)).is_some_and(|a| a.certified())
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "j",
            "lower_pass",
            "lower_margin",
            "upper_pass",
            "upper_margin",
            "steep_pass",
            "steep_margin",
            "budget_pass",
            "budget_margin",
            "evaluable",
            "certified",
        ]);
        for a in &self.annuli {
            t.push(vec![
                a.j.to_string(),
                a.lower.pass.to_string(),
                fmt_real(a.lower.margin),
                a.upper.pass.to_string(),
                fmt_real(a.upper.margin),
                a.steepness.pass.to_string(),
                fmt_real(a.steepness.margin),
                a.budget.pass.to_string(),
                fmt_real(a.budget.margin),
                a.evaluable.to_string(),
                a.certified().to_string(),
            ]);
        }
        t
    }
}

/// Points strictly inside each dyadic window `[lx - ln 2, lx)` of log-depth
/// between `hi` and `lo`.
fn dyadic_lattice(hi: f64, lo: f64, per_window: usize) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut out = Vec::new();
    let mut top = hi;
    while top > lo {
        let bottom = (top - ln2).max(lo);
        for i in 0..per_window {
            out.push(top - (top - bottom) * (i as f64 + 0.5) / per_window as f64);
        }
        top = bottom;
    }
    out
}

/// Checks the envelope, steepness and budget conditions on a lattice with
/// `per_window` log-depth samples in every dyadic window of `S - z`.
///
/// Lower and upper envelopes are sampled at three radii per annulus (edge,
/// band, core); steepness is sampled on the core profile only. The lower
/// envelope lattice extends 16 dyadic windows past `S~_j`.
pub fn validate_profile(profile: &SwirlProfile, per_window: usize) -> ConditionReport {
    let per_window = per_window.max(64);
    let ln_s = profile.s.ln();
    let mut out = Vec::with_capacity(profile.annuli.len());
    for a in &profile.annuli {
        let radii = [a.r_outer, 0.5 * (a.r_inner + a.band_outer()), a.core_radius()];
        let deep = a.ln_depth_end - 16.0 * std::f64::consts::LN_2;
        let all = dyadic_lattice(ln_s, deep, per_window);
        let mut low = f64::INFINITY;
        let mut min_ln = f64::INFINITY;
        for &r in &radii {
            for &lx in &all {
                let lw = profile.ln_omega(r, lx);
                low = low
                    .min(lw - profile.ln_lower(lx))
                    .min(-lw + if lw <= 0.0 { f64::INFINITY } else { 0.0 });
                min_ln = min_ln.min(lw);
            }
        }
        let lower = Verdict::strict(low, all.len() * radii.len());

        let before = dyadic_lattice(ln_s, a.ln_depth_start, per_window);
        let mut up = f64::INFINITY;
        for &r in &radii {
            for &lx in &before {
                up = up.min(profile.ln_upper(lx) - profile.ln_omega(r, lx));
            }
        }
        let upper = Verdict::weak(up, before.len() * radii.len());

        let window = dyadic_lattice(a.ln_depth_start, a.ln_depth_end, per_window);
        let steepness = if window.is_empty() {
            Verdict::vacuous()
        } else {
            let r = a.core_radius();
            let m = window
                .iter()
                .map(|&lx| 6.0 * profile.ln_abs_f(r, lx) + lx)
                .fold(f64::INFINITY, f64::min);
            Verdict::strict(m, window.len())
        };

        let integral = a.ln_depth_start - a.ln_depth_end;
        let budget = Verdict::weak(a.area * integral / profile.c_budget - 1.0, 1);

        out.push(AnnulusVerdict {
            j: a.j,
            lower,
            upper,
            steepness,
            budget,
            evaluable: min_ln >= SINGULAR_SWIRL.ln(),
            min_ln_omega: min_ln,
        });
    }
    let worst = [
        out.iter().map(|v| v.lower.margin).fold(f64::INFINITY, f64::min),
        out.iter().map(|v| v.upper.margin).fold(f64::INFINITY, f64::min),
        out.iter().map(|v| v.steepness.margin).fold(f64::INFINITY, f64::min),
        out.iter().map(|v| v.budget.margin).fold(f64::INFINITY, f64::min),
    ];
    let feasible_j_max = out.iter().filter(|v| v.certified()).map(|v| v.j).max().unwrap_or(0);
    ConditionReport {
        annuli: out,
        samples_per_window: per_window,
        worst,
        feasible_j_max,
    }
}

/// Sampling plan for [`streamline_growth_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthSampling {
    pub starts: Vec<Point3>,
    pub step: f64,
    /// Arclength budget per streamline.
    pub s_max: f64,
    /// Samples beyond this axial position are discarded.
    pub z_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthWitness {
    pub point: Point3,
    pub f: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub a_emp: f64,
    pub exceeded: bool,
    /// The largest ratios seen, at most eight, largest first.
    pub witnesses: Vec<GrowthWitness>,
    pub samples_used: usize,
}

/// Supremum of `|dF/ds| / |F|` along streamlines, over samples with
/// `|F| >= level`. The derivative is the forward difference of the analytic
/// `F` between consecutive samples, divided by `|F|` at the first of the two.
/// No qualifying samples gives `a_emp = 0`.
pub fn streamline_growth_report(
    field: &TubeField,
    level: f64,
    a_cap: f64,
    sampling: &GrowthSampling,
) -> Result<GrowthReport, FieldError> {
    if !(level > 0.0) {
        return Err(FieldError::InvalidParameter("L must be positive".into()));
    }
    let mut witnesses: Vec<GrowthWitness> = Vec::new();
    let mut used = 0;
    for &start in &sampling.starts {
        if !field.contains(start) {
            return Err(FieldError::OutsideSupport);
        }
        let line = integrate_streamline(field, start, sampling.step, sampling.s_max)?;
        let pts: Vec<(f64, Point3)> = line
            .samples
            .iter()
            .copied()
            .take_while(|(_, p)| p.z <= sampling.z_max && field.contains(*p))
            .collect();
        let fs: Vec<f64> = pts
            .iter()
            .map(|(_, p)| field.evaluate_f(*p))
            .collect::<Result<_, _>>()?;
        for i in 0..pts.len().saturating_sub(1) {
            let f = fs[i];
            if f.abs() < level {
                continue;
            }
            used += 1;
            let ds = pts[i + 1].0 - pts[i].0;
            let ratio = (fs[i + 1] - f).abs() / (ds * f.abs());
            witnesses.push(GrowthWitness {
                point: pts[i].1,
                f,
                ratio,
            });
        }
    }
    witnesses.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    witnesses.truncate(8);
    let a_emp = witnesses.first().map_or(0.0, |w| w.ratio);
    Ok(GrowthReport {
        a_emp,
        exceeded: a_emp > a_cap,
        witnesses,
        samples_used: used,
    })
}
