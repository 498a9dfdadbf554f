//! Truncation levels, dissipation densities and truncation energies on sampled
//! space-time fields, the inequality checkers built on them, the cutoff
//! functions and an iteration driver that fits recurrence exponents.

use crate::export::{fmt_real, key_values, Table};
use crate::geometry::Point3;
use crate::norms::CylGrid;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeGiorgiError {
    #[error("invalid ledger: {0}")]
    InvalidLedger(String),
    #[error("array shapes do not match: {0}")]
    ShapeMismatch(String),
    #[error("non-finite sample at time index {time}, node {node}")]
    NonFiniteSample { time: usize, node: usize },
    #[error("|grad |u|| = {grad_speed} exceeds |grad u| = {grad_full} at time index {time}, node {node}")]
    GradientInvariant {
        time: usize,
        node: usize,
        grad_speed: f64,
        grad_full: f64,
    },
    #[error("time nodes must be strictly increasing inside [0, 1]")]
    TimesUnsorted,
    #[error("time nodes do not cover [{from}, 1]")]
    TimeRangeUncovered { from: f64 },
    #[error("speed {0} is not positive where the truncation is active")]
    NonpositiveSpeed(f64),
    #[error("delta = {0} outside (0, 4/3)")]
    DeltaOutOfRange(f64),
    #[error("q = {0} must exceed 1")]
    QOutOfRange(f64),
    #[error("k = {k} must be at least {min}")]
    KOutOfRange { k: usize, min: usize },
    #[error("alpha = {0} outside (2, 3)")]
    AlphaOutOfRange(f64),
    #[error("fewer than 3 positive energies ({0})")]
    DegenerateFit(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Truncation levels and time gates for one De Giorgi run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLedger {
    pub r: f64,
    pub beta: f64,
    pub k_max: usize,
}

/// Which truncation: `V` uses levels `R(1 - 2^-k)`, `W` uses `R^beta(1 - 2^-k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    V,
    W,
}

impl TruncationLedger {
    /// `beta = 1` is allowed; it makes the two truncations coincide.
    pub fn new(r: f64, beta: f64, k_max: usize) -> Result<TruncationLedger, DeGiorgiError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(DeGiorgiError::InvalidLedger(format!("R = {r} must be positive")));
        }
        if !(beta >= 1.0 && beta.is_finite()) {
            return Err(DeGiorgiError::InvalidLedger(format!(
                "beta = {beta} must be at least 1"
            )));
        }
        Ok(TruncationLedger { r, beta, k_max })
    }

    pub fn c_k(&self, k: usize) -> f64 {
        self.r * (1.0 - 0.5f64.powi(k as i32))
    }

    pub fn c_beta_k(&self, k: usize) -> f64 {
        self.r.powf(self.beta) * (1.0 - 0.5f64.powi(k as i32))
    }

    pub fn cutoff(&self, k: usize, which: Which) -> f64 {
        match which {
            Which::V => self.c_k(k),
            Which::W => self.c_beta_k(k),
        }
    }

    /// `T_k = 3/4 - 4^-(k+1)`.
    pub fn t_k(&self, k: usize) -> f64 {
        0.75 - 0.25f64.powi(k as i32 + 1)
    }

    pub fn with_r(&self, r: f64) -> TruncationLedger {
        TruncationLedger { r, ..*self }
    }
}

/// `(speed - cutoff)_+`.
pub fn truncate(speed: f64, ledger: &TruncationLedger, k: usize, which: Which) -> f64 {
    (speed - ledger.cutoff(k, which)).max(0.0)
}

/// Squared dissipation density
/// `(c/|u|) 1{|u| > c} |grad |u||^2 + ((|u| - c)_+/|u|) |grad u|^2`,
/// with `c` the `V` or `W` level (`d_k^2` or `D_k^2`).
pub fn dissipation_density(
    speed: f64,
    grad_speed: f64,
    grad_full: f64,
    ledger: &TruncationLedger,
    k: usize,
    which: Which,
) -> Result<f64, DeGiorgiError> {
    let c = ledger.cutoff(k, which);
    if speed <= c {
        return Ok(0.0);
    }
    if !(speed > 0.0) {
        return Err(DeGiorgiError::NonpositiveSpeed(speed));
    }
    Ok(c / speed * grad_speed * grad_speed + (speed - c) / speed * grad_full * grad_full)
}

/// Weighted spatial nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub points: Vec<Point3>,
    pub weights: Vec<f64>,
}

impl SpatialGrid {
    pub fn from_cyl(grid: &CylGrid) -> SpatialGrid {
        let samples = grid.sample(|p| p.x);
        let mut points = Vec::with_capacity(samples.len());
        let mut weights = Vec::with_capacity(samples.len());
        // CylGrid::sample visits r, then theta, then z.
        for &r in &grid.r_nodes {
            for &th in &grid.theta_nodes {
                for &z in &grid.z_nodes {
                    points.push(Point3::from_cylindrical(r, th, z));
                }
            }
        }
        for (_, w) in samples {
            weights.push(w);
        }
        SpatialGrid { points, weights }
    }

    /// Spherical shells on `[rho_min, rho_max]`, one node per shell at the
    /// shell midpoint with the exact shell volume as weight. Shell radii are
    /// geometric when `rho_min > 0`, uniform otherwise.
    pub fn radial_shells(rho_min: f64, rho_max: f64, shells: usize) -> Result<SpatialGrid, DeGiorgiError> {
        if !(rho_min >= 0.0 && rho_max > rho_min) || shells == 0 {
            return Err(DeGiorgiError::InvalidArgument(
                "need 0 <= rho_min < rho_max and shells > 0".into(),
            ));
        }
        let edge = |i: usize| {
            let t = i as f64 / shells as f64;
            if rho_min > 0.0 {
                rho_min * (rho_max / rho_min).powf(t)
            } else {
                rho_max * t
            }
        };
        let mut points = Vec::with_capacity(shells);
        let mut weights = Vec::with_capacity(shells);
        for i in 0..shells {
            let (a, b) = (edge(i), edge(i + 1));
            points.push(Point3::new(0.5 * (a + b), 0.0, 0.0));
            weights.push(4.0 * PI / 3.0 * (b.powi(3) - a.powi(3)));
        }
        Ok(SpatialGrid { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pointwise data at one space-time node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSample {
    pub speed: f64,
    pub grad_speed: f64,
    pub grad_full: f64,
}

/// Speed and gradient magnitudes on a fixed spatial grid at a set of times.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    /// `samples[time][node]`.
    pub samples: Vec<Vec<NodeSample>>,
}

impl SpaceTimeField {
    /// Validates shapes, finiteness, time ordering and `|grad |u|| <= |grad u|`.
    pub fn new(
        times: Vec<f64>,
        weights: Vec<f64>,
        samples: Vec<Vec<NodeSample>>,
    ) -> Result<SpaceTimeField, DeGiorgiError> {
        if times.is_empty() || times.len() != samples.len() {
            return Err(DeGiorgiError::ShapeMismatch(format!(
                "{} times, {} slices",
                times.len(),
                samples.len()
            )));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) || times[0] < 0.0 || times[times.len() - 1] > 1.0 {
            return Err(DeGiorgiError::TimesUnsorted);
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(DeGiorgiError::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        for (t, slice) in samples.iter().enumerate() {
            if slice.len() != weights.len() {
                return Err(DeGiorgiError::ShapeMismatch(format!(
                    "slice {t} has {} nodes, grid has {}",
                    slice.len(),
                    weights.len()
                )));
            }
            for (node, s) in slice.iter().enumerate() {
                if !(s.speed.is_finite() && s.grad_speed.is_finite() && s.grad_full.is_finite()) {
                    return Err(DeGiorgiError::NonFiniteSample { time: t, node });
                }
                if s.grad_speed > s.grad_full * (1.0 + 1e-12) {
                    return Err(DeGiorgiError::GradientInvariant {
                        time: t,
                        node,
                        grad_speed: s.grad_speed,
                        grad_full: s.grad_full,
                    });
                }
            }
        }
        Ok(SpaceTimeField {
            times,
            weights,
            samples,
        })
    }

    /// Samples `f(t, x)` on `grid` at every time.
    pub fn sample<F>(times: &[f64], grid: &SpatialGrid, f: F) -> Result<SpaceTimeField, DeGiorgiError>
    where
        F: Fn(f64, Point3) -> NodeSample + Sync,
    {
        let samples = times
            .iter()
            .map(|&t| grid.points.par_iter().map(|&p| f(t, p)).collect())
            .collect();
        SpaceTimeField::new(times.to_vec(), grid.weights.clone(), samples)
    }

    /// `(speed, weight)` pairs of one time slice.
    pub fn snapshot(&self, time_index: usize) -> Vec<(f64, f64)> {
        self.samples[time_index]
            .iter()
            .zip(&self.weights)
            .map(|(s, &w)| (s.speed, w))
            .collect()
    }

    /// Scales speeds and gradients by `c`.
    pub fn scaled(&self, c: f64) -> SpaceTimeField {
        let samples = self
            .samples
            .iter()
            .map(|slice| {
                slice
                    .iter()
                    .map(|s| NodeSample {
                        speed: c * s.speed,
                        grad_speed: c * s.grad_speed,
                        grad_full: c * s.grad_full,
                    })
                    .collect()
            })
            .collect();
        SpaceTimeField {
            times: self.times.clone(),
            weights: self.weights.clone(),
            samples,
        }
    }

    fn spatial_sum<G>(&self, time_index: usize, g: G) -> Result<f64, DeGiorgiError>
    where
        G: Fn(&NodeSample) -> Result<f64, DeGiorgiError> + Sync,
    {
        let terms: Vec<Result<f64, DeGiorgiError>> = self.samples[time_index]
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(s, &w)| Ok(g(s)? * w))
            .collect();
        let mut acc = 0.0;
        for t in terms {
            acc += t?;
        }
        Ok(acc)
    }

    /// Weights of the piecewise-linear interpolant integrated over `[from, 1]`.
    pub fn time_weights(&self, from: f64) -> Result<Vec<f64>, DeGiorgiError> {
        let n = self.times.len();
        if self.times[0] > from + 1e-12 || self.times[n - 1] < 1.0 - 1e-12 {
            return Err(DeGiorgiError::TimeRangeUncovered { from });
        }
        let mut w = vec![0.0; n];
        if n == 1 {
            return Ok(w);
        }
        for i in 0..n - 1 {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let a = t0.max(from);
            let b = t1.min(1.0);
            if b <= a {
                continue;
            }
            let h = t1 - t0;
            let la = (a - t0) / h;
            let lb = (b - t0) / h;
            let mean = 0.5 * (la + lb);
            w[i] += (b - a) * (1.0 - mean);
            w[i + 1] += (b - a) * mean;
        }
        Ok(w)
    }

    /// Space-time integral of `g` over `[from, 1] x space`.
    fn space_time<G>(&self, from: f64, g: G) -> Result<f64, DeGiorgiError>
    where
        G: Fn(&NodeSample) -> Result<f64, DeGiorgiError> + Sync,
    {
        let tw = self.time_weights(from)?;
        let mut acc = 0.0;
        for (i, &w) in tw.iter().enumerate() {
            if w > 0.0 {
                acc += w * self.spatial_sum(i, &g)?;
            }
        }
        Ok(acc)
    }

    /// Max over time nodes in `[from, 1]` of a spatial integral, including
    /// the interpolated value at `from`.
    fn sup_in_time<G>(&self, from: f64, g: G) -> Result<f64, DeGiorgiError>
    where
        G: Fn(&NodeSample) -> Result<f64, DeGiorgiError> + Sync,
    {
        self.time_weights(from)?;
        let vals: Vec<f64> = (0..self.times.len())
            .map(|i| self.spatial_sum(i, &g))
            .collect::<Result<_, _>>()?;
        let mut best = 0.0f64;
        for (i, &t) in self.times.iter().enumerate() {
            if t >= from - 1e-12 {
                best = best.max(vals[i]);
            } else if i + 1 < self.times.len() && self.times[i + 1] > from {
                let lam = (from - t) / (self.times[i + 1] - t);
                best = best.max((1.0 - lam) * vals[i] + lam * vals[i + 1]);
            }
        }
        Ok(best)
    }
}

/// Radial power profile `|u| = A rho^(-3/alpha)` of the field `u = |u| e_rho`,
/// so `|grad |u|| = |f'|` and `|grad u|^2 = f'^2 + 2 f^2 / rho^2`. Static in time.
pub fn radial_power_family(
    alpha: f64,
    amplitude: f64,
    grid: &SpatialGrid,
    times: &[f64],
) -> Result<SpaceTimeField, DeGiorgiError> {
    if grid.points.iter().any(|p| p.norm() <= 0.0) {
        return Err(DeGiorgiError::InvalidArgument(
            "the power family needs rho > 0 at every node".into(),
        ));
    }
    let e = 3.0 / alpha;
    SpaceTimeField::sample(times, grid, |_, p| {
        let rho = p.norm();
        let f = amplitude * rho.powf(-e);
        let g = e * f / rho;
        NodeSample {
            speed: f,
            grad_speed: g,
            grad_full: (g * g + 2.0 * f * f / (rho * rho)).sqrt(),
        }
    })
}

/// Static bump `|u| = height * max(0, 1 - rho)` with zero gradients.
pub fn radial_bump(height: f64, grid: &SpatialGrid, times: &[f64]) -> Result<SpaceTimeField, DeGiorgiError> {
    SpaceTimeField::sample(times, grid, |_, p| NodeSample {
        speed: height * (1.0 - p.norm()).max(0.0),
        grad_speed: 0.0,
        grad_full: 0.0,
    })
}

/// `U_k = 1/2 sup_{[T_k,1]} int v_k^2 + int_{T_k}^1 int d_k^2` (or the `W`
/// analog with `w_k` and `D_k`).
pub fn energy_u(
    field: &SpaceTimeField,
    ledger: &TruncationLedger,
    k: usize,
    which: Which,
) -> Result<f64, DeGiorgiError> {
    let from = ledger.t_k(k);
    let sup = field.sup_in_time(from, |s| Ok(truncate(s.speed, ledger, k, which).powi(2)))?;
    let diss = field.space_time(from, |s| {
        dissipation_density(s.speed, s.grad_speed, s.grad_full, ledger, k, which)
    })?;
    Ok(0.5 * sup + diss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationReport {
    pub max_ratio: f64,
    pub holds: bool,
}

/// `max D_k / d_k` over nodes with `d_k > 0`.
pub fn check_domination(
    field: &SpaceTimeField,
    ledger: &TruncationLedger,
    k: usize,
) -> Result<DominationReport, DeGiorgiError> {
    if !(ledger.beta > 1.0) {
        return Err(DeGiorgiError::InvalidLedger("domination needs beta > 1".into()));
    }
    let mut max_ratio = 0.0f64;
    for slice in &field.samples {
        for s in slice {
            let d2 = dissipation_density(s.speed, s.grad_speed, s.grad_full, ledger, k, Which::V)?;
            if d2 > 0.0 {
                let big = dissipation_density(s.speed, s.grad_speed, s.grad_full, ledger, k, Which::W)?;
                max_ratio = max_ratio.max((big / d2).sqrt());
            }
        }
    }
    Ok(DominationReport {
        max_ratio,
        holds: max_ratio <= 5f64.sqrt() + 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn check_alpha(alpha: f64) -> Result<(), DeGiorgiError> {
    if alpha > 2.0 && alpha < 3.0 {
        Ok(())
    } else {
        Err(DeGiorgiError::AlphaOutOfRange(alpha))
    }
}

fn check_delta(delta: f64) -> Result<(), DeGiorgiError> {
    if delta > 0.0 && delta < 4.0 / 3.0 {
        Ok(())
    } else {
        Err(DeGiorgiError::DeltaOutOfRange(delta))
    }
}

/// `2^(alpha-1) / (alpha-2)`.
pub fn layercake_constant(alpha: f64) -> f64 {
    2f64.powf(alpha - 1.0) / (alpha - 2.0)
}

/// `lhs = sup_t int w_{k-1}^2`, `rhs = 2^(alpha-1)/(alpha-2) N R^(-beta(alpha-2))`
/// where `N = sup_r r^alpha |{|u| > r}|`. Holds with 5% slack.
pub fn second_moment_layercake_bound(
    field: &SpaceTimeField,
    ledger: &TruncationLedger,
    k: usize,
    alpha: f64,
    weak_norm: f64,
) -> Result<InequalityReport, DeGiorgiError> {
    if k < 2 {
        return Err(DeGiorgiError::KOutOfRange { k, min: 2 });
    }
    check_alpha(alpha)?;
    let mut lhs = 0.0f64;
    for i in 0..field.times.len() {
        lhs = lhs.max(field.spatial_sum(i, |s| Ok(truncate(s.speed, ledger, k - 1, Which::W).powi(2)))?);
    }
    let rhs = layercake_constant(alpha) * weak_norm * ledger.r.powf(-ledger.beta * (alpha - 2.0));
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs * 1.05,
    })
}

/// Right side of the `L^{10/3}` bound without `C0`:
/// `[2^(alpha-1)/(alpha-2) N]^(2/3-delta) U_{k-1}^(1+delta) / R^(beta(alpha-2)(2/3-delta))`.
fn weaklp_rhs_unit(ledger: &TruncationLedger, alpha: f64, delta: f64, weak_norm: f64, u_prev: f64) -> f64 {
    let s = 2.0 / 3.0 - delta;
    (layercake_constant(alpha) * weak_norm).powf(s) * u_prev.powf(1.0 + delta)
        / ledger.r.powf(ledger.beta * (alpha - 2.0) * s)
}

/// `lhs = int_{Q_{k-1}} w_{k-1}^{10/3}` against `C0` times the bound. With
/// `beta = 1` in the ledger this is the `v_k` variant.
pub fn check_weaklp(
    field: &SpaceTimeField,
    ledger: &TruncationLedger,
    k: usize,
    alpha: f64,
    delta: f64,
    weak_norm: f64,
    c0: f64,
) -> Result<InequalityReport, DeGiorgiError> {
    if k < 2 {
        return Err(DeGiorgiError::KOutOfRange { k, min: 2 });
    }
    check_alpha(alpha)?;
    check_delta(delta)?;
    let lhs = field.space_time(ledger.t_k(k - 1), |s| {
        Ok(truncate(s.speed, ledger, k - 1, Which::W).powf(10.0 / 3.0))
    })?;
    let u_prev = energy_u(field, ledger, k - 1, Which::W)?;
    let rhs = c0 * weaklp_rhs_unit(ledger, alpha, delta, weak_norm, u_prev);
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

/// Smallest `C0` for which [`check_weaklp`] holds at each `k` in `ks`.
pub fn calibrate_c0(
    field: &SpaceTimeField,
    ledger: &TruncationLedger,
    ks: &[usize],
    alpha: f64,
    delta: f64,
    weak_norm: f64,
) -> Result<Vec<f64>, DeGiorgiError> {
    ks.iter()
        .map(|&k| {
            let r = check_weaklp(field, ledger, k, alpha, delta, weak_norm, 1.0)?;
            Ok(if r.rhs > 0.0 { r.lhs / r.rhs } else { 0.0 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `|{w_k > 0}| <= |{w_{k-1} > R^beta 2^-k}|` on the space-time samples.
    pub inclusion_holds: bool,
    /// `|{w_{k-1} > R^beta 2^-k}| <= (2^k/R^beta)^(10/3) int w_{k-1}^(10/3)`.
    pub chebyshev_holds: bool,
}

/// `lhs = ||1{w_k > 0}||_{L^q(Q_{k-1})}` against
/// `C0^(1/q) [2^(alpha-1)/(alpha-2)]^((2/3-delta)/q)` times the remaining
/// factors of the Chebyshev-raised bound.
#[allow(clippy::too_many_arguments)]
pub fn check_cheb(
    field: &SpaceTimeField,
    ledger: &TruncationLedger,
    k: usize,
    alpha: f64,
    delta: f64,
    q: f64,
    weak_norm: f64,
    c0: f64,
) -> Result<ChebReport, DeGiorgiError> {
    if !(q > 1.0) {
        return Err(DeGiorgiError::QOutOfRange(q));
    }
    if k < 2 {
        return Err(DeGiorgiError::KOutOfRange { k, min: 2 });
    }
    check_alpha(alpha)?;
    check_delta(delta)?;
    let from = ledger.t_k(k - 1);
    let gap = ledger.r.powf(ledger.beta) * 0.5f64.powi(k as i32);
    let support = field.space_time(from, |s| {
        Ok(if truncate(s.speed, ledger, k, Which::W) > 0.0 {
            1.0
        } else {
            0.0
        })
    })?;
    let above = field.space_time(from, |s| {
        Ok(if truncate(s.speed, ledger, k - 1, Which::W) > gap {
            1.0
        } else {
            0.0
        })
    })?;
    let moment = field.space_time(
        from,
        |s| Ok(truncate(s.speed, ledger, k - 1, Which::W).powf(10.0 / 3.0)),
    )?;
    let cheb = (1.0 / gap).powf(10.0 / 3.0) * moment;
    let u_prev = energy_u(field, ledger, k - 1, Which::W)?;
    let lhs = support.powf(1.0 / q);
    let rhs =
        ((1.0 / gap).powf(10.0 / 3.0) * c0 * weaklp_rhs_unit(ledger, alpha, delta, weak_norm, u_prev)).powf(1.0 / q);
    let tol = 1e-12 * above.max(1e-300);
    Ok(ChebReport {
        lhs,
        rhs,
        holds: lhs <= rhs,
        inclusion_holds: support <= above + tol,
        chebyshev_holds: above <= cheb * (1.0 + 1e-12) + tol,
    })
}

/// The cutoff `psi` (odd C^1 ramp from 0 at `L` to 1 at `L + 1`) and the
/// piecewise-linear `phi_k` (0 up to `C_k`, 1 from `C_k + 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffPair {
    pub l: f64,
    pub c_k: f64,
}

pub fn make_cutoffs(l: f64, ledger: &TruncationLedger, k: usize) -> Result<CutoffPair, DeGiorgiError> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(DeGiorgiError::InvalidArgument(format!("L = {l} must be positive")));
    }
    Ok(CutoffPair { l, c_k: ledger.c_k(k) })
}

impl CutoffPair {
    pub fn psi(&self, t: f64) -> f64 {
        let s = (t.abs() - self.l).clamp(0.0, 1.0);
        t.signum() * s * s * (3.0 - 2.0 * s)
    }

    pub fn psi_prime(&self, t: f64) -> f64 {
        let s = t.abs() - self.l;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            6.0 * s * (1.0 - s)
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        (t - self.c_k).clamp(0.0, 1.0)
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        if t > self.c_k && t < self.c_k + 1.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Anything that can report truncation energies for a ledger.
pub trait EnergySource {
    fn energy(&self, ledger: &TruncationLedger, k: usize) -> Result<f64, DeGiorgiError>;
}

impl EnergySource for SpaceTimeField {
    fn energy(&self, ledger: &TruncationLedger, k: usize) -> Result<f64, DeGiorgiError> {
        energy_u(self, ledger, k, Which::V)
    }
}

/// Fixed energies `U_0, U_1, ...`, independent of the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescribedEnergies(pub Vec<f64>);

impl EnergySource for PrescribedEnergies {
    fn energy(&self, _ledger: &TruncationLedger, k: usize) -> Result<f64, DeGiorgiError> {
        self.0
            .get(k)
            .copied()
            .ok_or_else(|| DeGiorgiError::InvalidArgument(format!("no prescribed energy for k = {k}")))
    }
}

/// Least-squares fit of `ln U_k = k ln C0 + c + beta ln U_{k-1}`, where the
/// intercept `c` stands for `-lambda ln R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceFit {
    pub beta_emp: f64,
    pub c0_emp: f64,
    pub intercept: f64,
    /// `-d ln U_1 / d ln R` from the R sweep, when every sweep energy is positive.
    pub lambda_emp: Option<f64>,
    /// Root-mean-square residual in `ln U_k`.
    pub residual: f64,
    pub equations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySequence {
    pub ledger: TruncationLedger,
    pub u: Vec<f64>,
    /// `None` when `U_k = 0` for every `k >= 1`.
    pub fit: Option<RecurrenceFit>,
}

impl EnergySequence {
    pub fn trivial_decay(&self) -> bool {
        self.fit.is_none()
    }

    /// `k, T_k, U_k`.
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["k", "T_k", "U_k"]);
        for (k, u) in self.u.iter().enumerate() {
            t.push(vec![k.to_string(), fmt_real(self.ledger.t_k(k)), fmt_real(*u)]);
        }
        t
    }

    pub fn fit_key_values(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "NaN".to_string(), fmt_real);
        match &self.fit {
            None => key_values(&[
                ("beta_emp", "NaN".into()),
                ("lambda_emp", "NaN".into()),
                ("C0_emp", "NaN".into()),
                ("residual", "NaN".into()),
                ("trivial_decay", "true".into()),
            ]),
            Some(f) => key_values(&[
                ("beta_emp", fmt_real(f.beta_emp)),
                ("lambda_emp", opt(f.lambda_emp)),
                ("C0_emp", fmt_real(f.c0_emp)),
                ("residual", fmt_real(f.residual)),
                ("trivial_decay", "false".into()),
            ]),
        }
    }
}

fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rows.len();
    let m = rows.first()?.len();
    let a = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    let x = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some(x.iter().copied().collect())
}

/// Fits `(beta, ln C0, intercept)` from positive consecutive energies. With
/// only two equations `C0` is pinned to 1.
pub fn fit_recurrence(u: &[f64]) -> Result<RecurrenceFit, DeGiorgiError> {
    let positive = u.iter().filter(|&&x| x > 0.0).count();
    if positive < 3 {
        return Err(DeGiorgiError::DegenerateFit(positive));
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for k in 1..u.len() {
        if u[k] > 0.0 && u[k - 1] > 0.0 {
            rows.push(vec![1.0, k as f64, u[k - 1].ln()]);
            y.push(u[k].ln());
        }
    }
    if rows.len() < 2 {
        return Err(DeGiorgiError::DegenerateFit(positive));
    }
    let full = rows.len() >= 3;
    if !full {
        for r in &mut rows {
            r.remove(1);
        }
    }
    let x = least_squares(&rows, &y).ok_or(DeGiorgiError::DegenerateFit(positive))?;
    let (intercept, ln_c0, beta) = if full { (x[0], x[1], x[2]) } else { (x[0], 0.0, x[1]) };
    let mut ss = 0.0;
    for (r, yy) in rows.iter().zip(&y) {
        let pred: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
        ss += (pred - yy).powi(2);
    }
    Ok(RecurrenceFit {
        beta_emp: beta,
        c0_emp: ln_c0.exp(),
        intercept,
        lambda_emp: None,
        residual: (ss / rows.len() as f64).sqrt(),
        equations: rows.len(),
    })
}

/// `-slope` of `ln U_1` against `ln R` over `rs`; `None` if any `U_1` is zero.
pub fn lambda_sweep<S: EnergySource>(
    source: &S,
    ledger: &TruncationLedger,
    rs: &[f64],
) -> Result<Option<f64>, DeGiorgiError> {
    let mut pts = Vec::with_capacity(rs.len());
    for &r in rs {
        let u1 = source.energy(&ledger.with_r(r), 1)?;
        if !(u1 > 0.0) {
            return Ok(None);
        }
        pts.push((r.ln(), u1.ln()));
    }
    if pts.len() < 2 {
        return Ok(None);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(Some(-sxy / sxx))
}

/// Computes `U_0..U_{k_max}`, fits the recurrence and sweeps `R, 2R, 4R` for
/// `lambda`.
pub fn degiorgi_driver<S: EnergySource>(
    source: &S,
    ledger: &TruncationLedger,
) -> Result<EnergySequence, DeGiorgiError> {
    if ledger.k_max < 3 {
        return Err(DeGiorgiError::KOutOfRange {
            k: ledger.k_max,
            min: 3,
        });
    }
    let u: Vec<f64> = (0..=ledger.k_max)
        .map(|k| source.energy(ledger, k))
        .collect::<Result<_, _>>()?;
    if u[1..].iter().all(|&x| x == 0.0) {
        return Ok(EnergySequence {
            ledger: *ledger,
            u,
            fit: None,
        });
    }
    let mut fit = fit_recurrence(&u)?;
    fit.lambda_emp = lambda_sweep(source, ledger, &[ledger.r, 2.0 * ledger.r, 4.0 * ledger.r])?;
    Ok(EnergySequence {
        ledger: *ledger,
        u,
        fit: Some(fit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::weak_norm_from_samples;
    use approx::assert_relative_eq;

    fn ledger(r: f64, beta: f64) -> TruncationLedger {
        TruncationLedger::new(r, beta, 6).unwrap()
    }

    #[test]
    fn truncation_examples() {
        let l = ledger(10.0, 1.2);
        assert_relative_eq!(truncate(9.0, &l, 2, Which::V), 1.5);
        assert_eq!(truncate(7.0, &l, 2, Which::V), 0.0);
        assert_relative_eq!(
            truncate(9.0, &l, 1, Which::W),
            9.0 - 10f64.powf(1.2) / 2.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(truncate(9.0, &l, 1, Which::W), 1.07553, epsilon = 1e-5);
    }

    #[test]
    fn ledger_gates() {
        let l = ledger(10.0, 1.2);
        assert_eq!(l.t_k(0), 0.5);
        for k in 0..10 {
            assert!(l.c_k(k + 1) > l.c_k(k) && l.c_k(k) < 10.0);
            assert!(l.t_k(k + 1) > l.t_k(k) && l.t_k(k) < 0.75);
        }
        assert!(TruncationLedger::new(-1.0, 1.2, 3).is_err());
    }

    #[test]
    fn density_examples() {
        let l = ledger(10.0, 1.2);
        assert_relative_eq!(dissipation_density(10.0, 1.0, 2.0, &l, 1, Which::V).unwrap(), 2.5);
        assert_eq!(dissipation_density(3.0, 1.0, 2.0, &l, 1, Which::V).unwrap(), 0.0);
    }

    #[test]
    fn single_node_domination() {
        // speed 2R = 20, R = 10, beta = 1.1, k = 1, both gradients 1.
        let l = ledger(10.0, 1.1);
        let c = 10.0 / 2.0;
        let cb = 10f64.powf(1.1) / 2.0;
        let d2 = c / 20.0 + (20.0 - c) / 20.0;
        let big2 = cb / 20.0 + (20.0 - cb) / 20.0;
        assert_relative_eq!(d2, 1.0);
        assert_relative_eq!(big2, 1.0);
        let node = NodeSample {
            speed: 20.0,
            grad_speed: 1.0,
            grad_full: 1.0,
        };
        let f = SpaceTimeField::new(vec![0.0, 1.0], vec![1.0], vec![vec![node], vec![node]]).unwrap();
        let r = check_domination(&f, &l, 1).unwrap();
        assert_relative_eq!(r.max_ratio, (big2 / d2).sqrt(), epsilon = 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn ingest_rejects_bad_gradients() {
        let node = NodeSample {
            speed: 1.0,
            grad_speed: 2.0,
            grad_full: 1.0,
        };
        let e = SpaceTimeField::new(vec![0.0], vec![1.0], vec![vec![node]]).unwrap_err();
        assert!(matches!(e, DeGiorgiError::GradientInvariant { .. }));
    }

    #[test]
    fn bump_energy() {
        let g = SpatialGrid::radial_shells(0.0, 1.0, 400).unwrap();
        let f = radial_bump(2.0, &g, &[0.0, 0.5, 1.0]).unwrap();
        let u0 = energy_u(&f, &ledger(1.0, 1.0), 0, Which::V).unwrap();
        assert_relative_eq!(u0, 4.0 * PI / 15.0, max_relative = 1e-3);
    }

    #[test]
    fn uncovered_time_range() {
        let g = SpatialGrid::radial_shells(0.0, 1.0, 4).unwrap();
        let f = radial_bump(2.0, &g, &[0.6, 1.0]).unwrap();
        assert_eq!(
            energy_u(&f, &ledger(1.0, 1.0), 0, Which::V),
            Err(DeGiorgiError::TimeRangeUncovered { from: 0.5 })
        );
    }

    #[test]
    fn time_weights_integrate_linear() {
        let g = SpatialGrid::radial_shells(0.0, 1.0, 1).unwrap();
        let f = radial_bump(1.0, &g, &[0.0, 0.3, 0.55, 0.8, 1.0]).unwrap();
        let w = f.time_weights(0.5).unwrap();
        assert_relative_eq!(w.iter().sum::<f64>(), 0.5, epsilon = 1e-14);
        let m: f64 = w.iter().zip(&f.times).map(|(w, t)| w * t).sum();
        assert_relative_eq!(m, (1.0 - 0.25) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn cutoff_examples() {
        let l = ledger(10.0, 1.2);
        let c = make_cutoffs(2.0, &l, 1).unwrap();
        assert_eq!(c.psi(2.0), 0.0);
        assert_eq!(c.psi(3.0), 1.0);
        assert_eq!(c.psi(-4.0), -1.0);
        assert_eq!(c.psi_prime(0.0), 0.0);
        assert_eq!(c.psi_prime(4.0), 0.0);
        let max_slope = (0..=10000)
            .map(|i| c.psi_prime(-5.0 + 1e-3 * i as f64))
            .fold(0.0, f64::max);
        assert_relative_eq!(max_slope, 1.5, epsilon = 1e-6);
        assert_eq!(c.phi(c.c_k), 0.0);
        assert_eq!(c.phi(c.c_k + 1.0), 1.0);
    }

    #[test]
    fn exact_recurrence_fit() {
        let u: Vec<f64> = (0..=6).map(|k| 0.5f64.powf((5.0f64 / 3.0).powi(k))).collect();
        let s = degiorgi_driver(&PrescribedEnergies(u), &ledger(10.0, 1.2)).unwrap();
        let fit = s.fit.unwrap();
        assert_relative_eq!(fit.beta_emp, 5.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(fit.lambda_emp.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bounded_field_decays_trivially() {
        let g = SpatialGrid::radial_shells(0.0, 1.0, 16).unwrap();
        // |u| <= 4 < C_1 = 5 for R = 10.
        let f = radial_bump(4.0, &g, &[0.0, 0.5, 1.0]).unwrap();
        let s = degiorgi_driver(&f, &TruncationLedger::new(10.0, 1.2, 4).unwrap()).unwrap();
        assert!(s.trivial_decay());
        assert!(s.u[0] > 0.0);
        assert!(s.fit_key_values().contains("trivial_decay = true"));
        let s = degiorgi_driver(
            &PrescribedEnergies(vec![1.0, 0.5, 0.0, 0.0]),
            &TruncationLedger::new(10.0, 1.2, 3).unwrap(),
        );
        assert_eq!(s, Err(DeGiorgiError::DegenerateFit(2)));
    }

    #[test]
    fn layercake_on_power_family() {
        let g = SpatialGrid::radial_shells(1e-3, 20.0, 2000).unwrap();
        for &alpha in &[2.4, 2.5, 2.8] {
            let l = ledger(10.0, 1.25);
            let f = radial_power_family(alpha, l.r.powf(l.beta), &g, &[0.0, 1.0]).unwrap();
            let n = weak_norm_from_samples(&f.snapshot(0), alpha, 64).unwrap().value;
            for k in 2..=6 {
                let r = second_moment_layercake_bound(&f, &l, k, alpha, n).unwrap();
                assert!(r.holds, "alpha {alpha} k {k}: {r:?}");
                assert!(r.lhs > 0.0);
            }
        }
    }

    #[test]
    fn cheb_inclusion_and_chebyshev() {
        let g = SpatialGrid::radial_shells(1e-2, 10.0, 400).unwrap();
        let l = ledger(10.0, 1.25);
        let f = radial_power_family(2.5, l.r.powf(l.beta), &g, &[0.0, 0.5, 1.0]).unwrap();
        let n = weak_norm_from_samples(&f.snapshot(0), 2.5, 64).unwrap().value;
        for k in 2..=6 {
            let r = check_cheb(&f, &l, k, 2.5, 0.1, 2.5, n, 1.0).unwrap();
            assert!(r.inclusion_holds && r.chebyshev_holds, "{r:?}");
        }
        assert_eq!(
            check_cheb(&f, &l, 2, 2.5, 0.1, 1.0, n, 1.0),
            Err(DeGiorgiError::QOutOfRange(1.0))
        );
        assert_eq!(
            check_weaklp(&f, &l, 2, 2.5, 1.5, n, 1.0),
            Err(DeGiorgiError::DeltaOutOfRange(1.5))
        );
    }
}
