//! Cylindrical quadrature, truncated `L^p` norms, annulus partial sums and the
//! weak-`L^alpha` estimator.
//!
//! All sums are evaluated per radial node (possibly in parallel), collected in
//! node order and then added sequentially, so results do not depend on the
//! thread count.

use crate::export::{fmt_real, Table};
use crate::fields::{validate_profile, FieldError, Shape, SwirlProfile, TubeField};
use crate::geometry::Point3;
use rayon::prelude::*;
use std::f64::consts::{LN_2, PI};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("non-finite integrand at r = {r}, z = {z}")]
    NonFiniteSample { r: f64, z: f64 },
    #[error("annulus {0} is not certified for this profile")]
    AnnulusNotCertified(usize),
    #[error("levels must be strictly increasing")]
    UnsortedLevels,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Panel breakpoints and the number of midpoint cells per panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub r_breaks: Vec<f64>,
    pub z_breaks: Vec<f64>,
    pub per_panel: usize,
    pub n_theta: usize,
}

/// Tensor-product midpoint rule on `[r_0, r_n] x [0, 2 pi) x [z_0, z_cut]`
/// with the Jacobian `r` folded into the radial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CylGrid {
    pub spec: GridSpec,
    pub r_nodes: Vec<f64>,
    pub r_weights: Vec<f64>,
    pub theta_nodes: Vec<f64>,
    pub theta_weight: f64,
    pub z_nodes: Vec<f64>,
    pub z_weights: Vec<f64>,
    pub z_cut: f64,
}

fn midpoints(breaks: &[f64], per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::new();
    let mut widths = Vec::new();
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / per_panel as f64;
        for i in 0..per_panel {
            nodes.push(w[0] + (i as f64 + 0.5) * h);
            widths.push(h);
        }
    }
    (nodes, widths)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl CylGrid {
    pub fn new(spec: GridSpec) -> Result<CylGrid, NormError> {
        if spec.r_breaks.len() < 2 || spec.z_breaks.len() < 2 {
            return Err(NormError::InvalidArgument("need at least one panel per axis".into()));
        }
        if !strictly_increasing(&spec.r_breaks) || !strictly_increasing(&spec.z_breaks) {
            return Err(NormError::InvalidArgument("breakpoints must increase".into()));
        }
        if spec.r_breaks[0] < 0.0 || spec.per_panel == 0 || spec.n_theta == 0 {
            return Err(NormError::InvalidArgument("bad radial range or counts".into()));
        }
        let (r_nodes, dr) = midpoints(&spec.r_breaks, spec.per_panel);
        let r_weights = r_nodes.iter().zip(&dr).map(|(r, h)| r * h).collect();
        let (z_nodes, z_weights) = midpoints(&spec.z_breaks, spec.per_panel);
        let n = spec.n_theta;
        let theta_nodes = (0..n).map(|i| 2.0 * PI * (i as f64 + 0.5) / n as f64).collect();
        let z_cut = *spec.z_breaks.last().expect("checked length");
        Ok(CylGrid {
            theta_weight: 2.0 * PI / n as f64,
            spec,
            r_nodes,
            r_weights,
            theta_nodes,
            z_nodes,
            z_weights,
            z_cut,
        })
    }

    /// Uniform panels: one radial panel and one axial panel.
    pub fn uniform(r: (f64, f64), z: (f64, f64), n_r: usize, n_theta: usize, n_z: usize) -> Result<CylGrid, NormError> {
        if n_r != n_z {
            let rb: Vec<f64> = (0..=n_r).map(|i| r.0 + (r.1 - r.0) * i as f64 / n_r as f64).collect();
            let zb: Vec<f64> = (0..=n_z).map(|i| z.0 + (z.1 - z.0) * i as f64 / n_z as f64).collect();
            return CylGrid::new(GridSpec {
                r_breaks: rb,
                z_breaks: zb,
                per_panel: 1,
                n_theta,
            });
        }
        CylGrid::new(GridSpec {
            r_breaks: vec![r.0, r.1],
            z_breaks: vec![z.0, z.1],
            per_panel: n_r,
            n_theta,
        })
    }

    /// Same panels with half the cells per panel (at least one).
    pub fn half_resolution(&self) -> CylGrid {
        let mut spec = self.spec.clone();
        spec.per_panel = (spec.per_panel / 2).max(1);
        spec.n_theta = (spec.n_theta / 2).max(1);
        CylGrid::new(spec).expect("coarsening keeps a valid spec")
    }

    pub fn cells(&self) -> usize {
        self.r_nodes.len() * self.theta_nodes.len() * self.z_nodes.len()
    }

    pub fn volume(&self) -> f64 {
        let r: f64 = self.r_weights.iter().sum();
        let z: f64 = self.z_weights.iter().sum();
        r * z * self.theta_weight * self.theta_nodes.len() as f64
    }

    /// Evaluates `f` at every cell centre: `(value, weight)` in a fixed order.
    pub fn sample<F>(&self, f: F) -> Vec<(f64, f64)>
    where
        F: Fn(Point3) -> f64 + Sync,
    {
        let per_r: Vec<Vec<(f64, f64)>> = self
            .r_nodes
            .par_iter()
            .zip(self.r_weights.par_iter())
            .map(|(&r, &wr)| {
                let mut out = Vec::with_capacity(self.theta_nodes.len() * self.z_nodes.len());
                for &th in &self.theta_nodes {
                    for (&z, &wz) in self.z_nodes.iter().zip(&self.z_weights) {
                        out.push((f(Point3::from_cylindrical(r, th, z)), wr * self.theta_weight * wz));
                    }
                }
                out
            })
            .collect();
        per_r.into_iter().flatten().collect()
    }
}

/// Depth-halving breakpoints from `z_start` to `z_cut`, merged with `extra`
/// positions inside that range.
pub fn dyadic_z_breaks(s: f64, z_start: f64, z_cut: f64, extra: &[f64]) -> Vec<f64> {
    let x_cut = s - z_cut;
    let mut x = s - z_start;
    let mut zs = vec![z_start];
    while x * 0.5 > x_cut {
        x *= 0.5;
        zs.push(s - x);
    }
    zs.push(z_cut);
    zs.extend(extra.iter().copied().filter(|&z| z > z_start && z < z_cut));
    zs.sort_by(f64::total_cmp);
    zs.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    zs
}

/// Radial breakpoints at every annulus edge, blending band edge and the flux
/// plateau edge `0.9 r_1`, in `[r_lo, r_hi]`.
pub fn profile_r_breaks(profile: &SwirlProfile, r_lo: f64, r_hi: f64) -> Vec<f64> {
    let mut rs = vec![r_lo, r_hi, 0.9];
    if profile.shape == Shape::Reference {
        for a in &profile.annuli {
            rs.push(a.r_inner);
            rs.push(a.band_outer());
        }
    }
    rs.retain(|&r| r >= r_lo && r <= r_hi);
    rs.sort_by(f64::total_cmp);
    rs.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    rs
}

impl CylGrid {
    /// Grid over the whole tube cross-section up to `z_cut`, with panels
    /// aligned to the profile's radial structure and to every milestone that
    /// is representable in `z`.
    pub fn for_tube(field: &TubeField, z_cut: f64, per_panel: usize) -> Result<CylGrid, NormError> {
        let p = &field.profile;
        let milestones: Vec<f64> = p.annuli.iter().flat_map(|a| [a.s_j, a.s_tilde_j]).collect();
        CylGrid::new(GridSpec {
            r_breaks: profile_r_breaks(p, 0.0, field.tube_radius),
            z_breaks: dyadic_z_breaks(p.s, 0.0, z_cut, &milestones),
            per_panel,
            n_theta: 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub value: f64,
    /// `|value - value on the half-resolution grid|`.
    pub error_estimate: f64,
    pub cells: usize,
    pub z_cut: f64,
}

fn lp_sum(field: &TubeField, p: f64, grid: &CylGrid) -> Result<f64, NormError> {
    let s = field.profile.s;
    let ntheta = grid.theta_nodes.len() as f64;
    let per_r: Vec<Result<f64, NormError>> = grid
        .r_nodes
        .par_iter()
        .zip(grid.r_weights.par_iter())
        .map(|(&r, &wr)| {
            let mut acc = 0.0;
            for (&z, &wz) in grid.z_nodes.iter().zip(&grid.z_weights) {
                if r > field.tube_radius || z < 0.0 || z >= s {
                    continue;
                }
                let v = (p * field.ln_speed(r, (s - z).ln())).exp();
                if !v.is_finite() {
                    return Err(NormError::NonFiniteSample { r, z });
                }
                acc += v * wz;
            }
            Ok(acc * wr * grid.theta_weight * ntheta)
        })
        .collect();
    let mut total = 0.0;
    for v in per_r {
        total += v?;
    }
    Ok(total)
}

/// `(int_{tube, z <= z_cut} |u|^p dV)^{1/p}` on `grid`.
///
/// The tube field is axisymmetric, so the angular sum is folded into a factor.
pub fn lp_norm_tube(field: &TubeField, p: f64, grid: &CylGrid) -> Result<NormReport, NormError> {
    if !(p >= 1.0) {
        return Err(NormError::InvalidArgument(format!("p = {p} must be at least 1")));
    }
    let fine = lp_sum(field, p, grid)?.powf(1.0 / p);
    let coarse = lp_sum(field, p, &grid.half_resolution())?.powf(1.0 / p);
    Ok(NormReport {
        value: fine,
        error_estimate: (fine - coarse).abs(),
        cells: grid.cells(),
        z_cut: grid.z_cut,
    })
}

/// `flux_max^2 * pi r_1^2 * int_0^{z_cut} (S - z)^{-1 + 2 eps} dz`, which
/// bounds `||u||^2_{L^2}` over `z <= z_cut` whenever the lower envelope holds.
pub fn l2_envelope_bound(field: &TubeField, z_cut: f64) -> f64 {
    let p = &field.profile;
    let two_eps = 2.0 * p.epsilon;
    let integral = (p.s.powf(two_eps) - (p.s - z_cut).powf(two_eps)) / two_eps;
    field.flux.max().powi(2) * PI * field.tube_radius.powi(2) * integral
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumMode {
    /// `int |u|^alpha` over `A_j x [0, S_j]`.
    Alpha,
    /// `int |F|^6` over `A_j x [S_j, S~_j]`. In the blending band at the
    /// inner edge of `A_j` the integrand is `(w |F_j|)^6`, with `w` the blend
    /// weight and `F_j` this annulus's own slope. Both blended slopes have the
    /// same sign, so this is a lower bound there, and it stays finite where
    /// the inner neighbour's `|F|^6` overflows.
    FSix,
}

impl SumMode {
    pub fn name(&self) -> &'static str {
        match self {
            SumMode::Alpha => "alpha",
            SumMode::FSix => "f6",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub mode: SumMode,
    /// Cumulative sums for `J = 1, 2, ...`.
    pub sums: Vec<f64>,
    /// Richardson estimate for each cumulative sum.
    pub errors: Vec<f64>,
}

impl PartialSums {
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.sums
            .iter()
            .map(|&s| {
                let d = s - prev;
                prev = s;
                d
            })
            .collect()
    }

    /// Least-squares slope of the partial sums against `J`.
    pub fn slope(&self) -> f64 {
        let n = self.sums.len() as f64;
        if self.sums.len() < 2 {
            return f64::NAN;
        }
        let xs: Vec<f64> = (1..=self.sums.len()).map(|j| j as f64).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = self.sums.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&self.sums).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    /// Two-column curve `J, partial_sum`.
    pub fn curve_table(&self) -> Table {
        let mut t = Table::new(&["J", "partial_sum"]);
        for (i, s) in self.sums.iter().enumerate() {
            t.push(vec![(i + 1).to_string(), fmt_real(*s)]);
        }
        t
    }

    /// Report rows `mode, J_or_zcut, value, error_estimate`.
    pub fn report_table(&self) -> Table {
        let mut t = Table::new(&["mode", "J_or_zcut", "value", "error_estimate"]);
        for (i, (s, e)) in self.sums.iter().zip(&self.errors).enumerate() {
            t.push(vec![
                self.mode.name().into(),
                (i + 1).to_string(),
                fmt_real(*s),
                fmt_real(*e),
            ]);
        }
        t
    }
}

/// Midpoint nodes in log-depth over `[lo, hi]` in windows of width `ln 2`,
/// `per_window` cells each, `refine` times more in the window closest to
/// `refine_at`.
fn log_depth_nodes(lo: f64, hi: f64, per_window: usize, refine_at: Option<f64>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut top = hi;
    while top > lo {
        let bottom = (top - LN_2).max(lo);
        let near = refine_at.is_some_and(|t| (bottom - t).abs() < 1e-12 || (top - t).abs() < 1e-12);
        let n = if near { 4 * per_window } else { per_window };
        let h = (top - bottom) / n as f64;
        for i in 0..n {
            out.push((top - (i as f64 + 0.5) * h, h));
        }
        top = bottom;
    }
    out
}

fn annulus_integral(field: &TubeField, j: usize, mode: SumMode, density: usize) -> Result<f64, NormError> {
    let p = &field.profile;
    let a = &p.annuli[j - 1];
    let (lo, hi) = match mode {
        SumMode::Alpha => (a.ln_depth_start, p.s.ln()),
        SumMode::FSix => (a.ln_depth_end, a.ln_depth_start),
    };
    let lnodes = log_depth_nodes(lo, hi, density, Some(a.ln_depth_start));
    let rb = profile_r_breaks(p, a.r_inner, a.r_outer);
    let (rn, dr) = midpoints(&rb, density);
    let per_r: Vec<Result<f64, NormError>> = rn
        .par_iter()
        .zip(dr.par_iter())
        .map(|(&r, &h)| {
            let mut acc = 0.0;
            let ln_w = p.blend_weight(r).ln();
            for &(lx, w) in &lnodes {
                let ln_integrand = match mode {
                    SumMode::Alpha => p.alpha * field.ln_speed(r, lx) + lx,
                    SumMode::FSix => 6.0 * (ln_w + p.annulus_ln_abs_f(a, lx)) + lx,
                };
                let v = ln_integrand.exp();
                if !v.is_finite() {
                    return Err(NormError::NonFiniteSample { r, z: p.s - lx.exp() });
                }
                acc += v * w;
            }
            Ok(acc * 2.0 * PI * r * h)
        })
        .collect();
    let mut total = 0.0;
    for v in per_r {
        total += v?;
    }
    Ok(total)
}

/// Cumulative per-annulus integrals for `J = 1..=j`.
///
/// The axial integral runs in log-depth (`dz = (S - z) d lx`), so windows far
/// below `f64` resolution in `z` are integrated exactly like the rest. Each
/// dyadic window gets `density` cells, four times that next to `S_j`.
pub fn annulus_partial_sums(
    field: &TubeField,
    mode: SumMode,
    j: usize,
    density: usize,
) -> Result<PartialSums, NormError> {
    if density < 2 {
        return Err(NormError::InvalidArgument("density must be at least 2".into()));
    }
    if j == 0 {
        return Ok(PartialSums {
            mode,
            sums: Vec::new(),
            errors: Vec::new(),
        });
    }
    let report = validate_profile(&field.profile, 64);
    if j > report.feasible_j_max {
        return Err(NormError::AnnulusNotCertified(report.feasible_j_max + 1));
    }
    let mut sums = Vec::with_capacity(j);
    let mut errors = Vec::with_capacity(j);
    let (mut acc, mut acc_err) = (0.0, 0.0);
    for jj in 1..=j {
        let fine = annulus_integral(field, jj, mode, density)?;
        let coarse = annulus_integral(field, jj, mode, density / 2)?;
        acc += fine;
        acc_err += (fine - coarse).abs();
        sums.push(acc);
        errors.push(acc_err);
    }
    Ok(PartialSums { mode, sums, errors })
}

/// `m(r) = |{f > r}|` for strictly increasing `levels`, from samples.
pub fn distribution_from_samples(samples: &[(f64, f64)], levels: &[f64]) -> Result<Vec<f64>, NormError> {
    if !strictly_increasing(levels) {
        return Err(NormError::UnsortedLevels);
    }
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Suffix sums of weight: tail[i] = total weight of samples i.. in sorted order.
    let mut tail = vec![0.0; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        tail[i] = tail[i + 1] + sorted[i].1;
    }
    Ok(levels
        .iter()
        .map(|&r| {
            let idx = sorted.partition_point(|s| s.0 <= r);
            tail[idx]
        })
        .collect())
}

/// Superlevel measures of `snapshot` on `grid`, by cell-centre classification.
pub fn distribution_function<F>(snapshot: F, levels: &[f64], grid: &CylGrid) -> Result<Vec<f64>, NormError>
where
    F: Fn(Point3) -> f64 + Sync,
{
    if !strictly_increasing(levels) {
        return Err(NormError::UnsortedLevels);
    }
    distribution_from_samples(&grid.sample(snapshot), levels)
}

/// Levels and the curve `r^alpha m(r)` behind a weak-norm estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakNormCurve {
    pub levels: Vec<f64>,
    pub measures: Vec<f64>,
    pub value: f64,
}

impl WeakNormCurve {
    pub fn table(&self, alpha: f64) -> Table {
        let mut t = Table::new(&["level", "r_alpha_measure"]);
        for (r, m) in self.levels.iter().zip(&self.measures) {
            t.push_reals(&[*r, r.powf(alpha) * m]);
        }
        t
    }
}

/// Fraction of the sampled volume above the top weak-norm level. Superlevel
/// sets thinner than this are a handful of cells, and `r^alpha m(r)` there
/// measures cell shape rather than the function.
pub const WEAK_NORM_TAIL: f64 = 1e-3;

/// Smallest sample value `v` with `|{f <= v}| >= q * total`.
fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let total: f64 = sorted.iter().map(|x| x.1).sum();
    let mut acc = 0.0;
    for &(v, w) in sorted {
        acc += w;
        if acc >= q * total {
            return v;
        }
    }
    sorted.last().map_or(0.0, |x| x.0)
}

/// `sup_r r^alpha |{f > r}|` over geometric levels from `samples`.
///
/// Levels span the volume-weighted median to the `1 - WEAK_NORM_TAIL`
/// quantile. When the median is not positive the smallest positive sample is
/// used instead.
pub fn weak_norm_from_samples(samples: &[(f64, f64)], alpha: f64, levels: usize) -> Result<WeakNormCurve, NormError> {
    if !(alpha > 0.0) {
        return Err(NormError::InvalidArgument(format!("alpha = {alpha} must be positive")));
    }
    if levels < 32 {
        return Err(NormError::InvalidArgument("need at least 32 levels".into()));
    }
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max = sorted.last().map_or(0.0, |s| s.0);
    if !(max > 0.0) {
        return Ok(WeakNormCurve {
            levels: Vec::new(),
            measures: Vec::new(),
            value: 0.0,
        });
    }
    let mut lo = weighted_quantile(&sorted, 0.5);
    if !(lo > 0.0) {
        lo = sorted.iter().map(|s| s.0).find(|&v| v > 0.0).unwrap_or(max);
    }
    let hi = weighted_quantile(&sorted, 1.0 - WEAK_NORM_TAIL).max(lo);
    let ratio = hi / lo;
    let mut lv: Vec<f64> = if ratio > 1.0 {
        (0..levels)
            .map(|i| lo * ratio.powf(i as f64 / (levels - 1) as f64))
            .collect()
    } else {
        vec![lo]
    };
    lv.dedup_by(|a, b| *a <= *b);
    let m = distribution_from_samples(&sorted, &lv)?;
    let value = lv.iter().zip(&m).map(|(r, m)| r.powf(alpha) * m).fold(0.0, f64::max);
    Ok(WeakNormCurve {
        levels: lv,
        measures: m,
        value,
    })
}

/// Weak-`L^alpha` quasi-norm `sup_r r^alpha |{|u| > r}|` of a scalar snapshot.
pub fn weak_lp_norm<F>(snapshot: F, alpha: f64, grid: &CylGrid, levels: usize) -> Result<f64, NormError>
where
    F: Fn(Point3) -> f64 + Sync,
{
    Ok(weak_norm_from_samples(&grid.sample(snapshot), alpha, levels)?.value)
}

/// `2 sum r m(r) dr` over the given levels (left Riemann sum).
pub fn layer_cake_second_moment(levels: &[f64], measures: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..levels.len().saturating_sub(1) {
        acc += 2.0 * levels[i] * measures[i] * (levels[i + 1] - levels[i]);
    }
    acc
}

/// Table rows for truncated `L^2` norms: `mode, J_or_zcut, value, error_estimate`.
pub fn truncation_table(reports: &[NormReport]) -> Table {
    let mut t = Table::new(&["mode", "J_or_zcut", "value", "error_estimate"]);
    for r in reports {
        t.push(vec![
            "l2".into(),
            fmt_real(r.z_cut),
            fmt_real(r.value),
            fmt_real(r.error_estimate),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_reference_profile, FluxProfile};
    use approx::assert_relative_eq;

    fn straight() -> TubeField {
        let p = SwirlProfile::with_shape(2.5, 0.05, 3, 1.0, Shape::Constant(1.0)).unwrap();
        TubeField::new(p, FluxProfile::Constant(1.0))
    }

    #[test]
    fn weights_sum_to_volume() {
        let g = CylGrid::uniform((0.0, 1.0), (0.0, 0.7), 16, 8, 16).unwrap();
        assert_relative_eq!(g.volume(), PI * 0.7, max_relative = 1e-12);
        let f = TubeField::new(build_reference_profile(2.5, 0.05, 4, 1.0).unwrap(), FluxProfile::Bump);
        let g = CylGrid::for_tube(&f, 1.0 - 1e-5, 4).unwrap();
        assert_relative_eq!(g.volume(), PI * (1.0 - 1e-5), max_relative = 1e-10);
        let w: f64 = g.sample(|_| 1.0).iter().map(|s| s.1).sum();
        assert_relative_eq!(w, g.volume(), max_relative = 1e-12);
    }

    #[test]
    fn constant_field_l2() {
        let g = CylGrid::uniform((0.0, 1.0), (0.0, 1.0), 8, 4, 8).unwrap();
        let r = lp_norm_tube(&straight(), 2.0, &g).unwrap();
        assert_relative_eq!(r.value, PI.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn single_annulus_alpha_log_integral() {
        let p = SwirlProfile::with_shape(2.5, 0.05, 3, 1.0, Shape::Power(0.4)).unwrap();
        let a = p.annuli[1].clone();
        let f = TubeField::new(p, FluxProfile::Constant(1.0));
        let g = CylGrid::new(GridSpec {
            r_breaks: vec![a.r_inner, a.r_outer],
            z_breaks: dyadic_z_breaks(1.0, 0.0, a.s_j, &[]),
            per_panel: 16,
            n_theta: 1,
        })
        .unwrap();
        let v = lp_norm_tube(&f, 2.5, &g).unwrap().value.powf(2.5);
        let exact = a.area * (1.0 / (1.0 - a.s_j)).ln();
        assert_relative_eq!(v, exact, max_relative = 0.02);
    }

    #[test]
    fn empty_partial_sum() {
        let f = TubeField::new(
            build_reference_profile(2.5, 0.05, 3, 1.0).unwrap(),
            FluxProfile::Constant(1.0),
        );
        let s = annulus_partial_sums(&f, SumMode::Alpha, 0, 8).unwrap();
        assert!(s.sums.is_empty());
        assert_eq!(s.report_table().rows.len(), 0);
    }

    #[test]
    fn first_annulus_alpha_sum_is_the_budget() {
        let f = TubeField::new(
            build_reference_profile(2.5, 0.05, 8, 1.0).unwrap(),
            FluxProfile::Constant(1.0),
        );
        let s = annulus_partial_sums(&f, SumMode::Alpha, 1, 8).unwrap();
        assert_relative_eq!(s.sums[0], 1.0, max_relative = 0.03);
    }

    #[test]
    fn uncertified_request_rejected() {
        let f = TubeField::new(
            build_reference_profile(2.5, 0.05, 8, 1.0).unwrap(),
            FluxProfile::Constant(1.0),
        );
        assert_eq!(
            annulus_partial_sums(&f, SumMode::FSix, 7, 8),
            Err(NormError::AnnulusNotCertified(7))
        );
    }

    #[test]
    fn distribution_examples() {
        let g = CylGrid::uniform((0.0, 1.0), (0.0, 1.0), 8, 8, 8).unwrap();
        let f = |p: Point3| 1.0 + p.z;
        let m = distribution_function(f, &[1e-9, 0.5, 1.5, 3.0], &g).unwrap();
        assert_relative_eq!(m[0], PI, max_relative = 1e-12);
        assert_relative_eq!(m[2], PI / 2.0, max_relative = 1e-12);
        assert_eq!(m[3], 0.0);
        assert_eq!(
            distribution_function(f, &[1.0, 0.5], &g),
            Err(NormError::UnsortedLevels)
        );
    }

    #[test]
    fn bounded_weak_norm() {
        let g = CylGrid::uniform((0.0, 1.0), (0.0, 1.0), 8, 8, 8).unwrap();
        let v = weak_lp_norm(|p: Point3| 2.0 * p.z, 2.5, &g, 64).unwrap();
        assert!(v <= 2f64.powf(2.5) * PI);
        assert_eq!(weak_lp_norm(|_| 0.0, 2.5, &g, 64).unwrap(), 0.0);
    }
}

#[cfg(test)]
mod ball_tests {
    use super::*;

    pub(crate) fn graded_ball_grid(n_theta: usize) -> CylGrid {
        let r_breaks: Vec<f64> = std::iter::once(0.0)
            .chain((0..8).rev().map(|k| 0.5f64.powi(k)))
            .collect();
        let mut z_breaks: Vec<f64> = (0..4).map(|k| -(0.5f64.powi(k))).collect();
        z_breaks.push(0.0);
        z_breaks.extend((0..4).rev().map(|k| 0.5f64.powi(k)));
        CylGrid::new(GridSpec {
            r_breaks,
            z_breaks,
            per_panel: 8,
            n_theta,
        })
        .unwrap()
    }

    #[test]
    fn power_ball_weak_norm() {
        let g = graded_ball_grid(64);
        let alpha = 2.5;
        let f = |p: Point3| {
            let rho = p.norm();
            if rho < 1.0 {
                rho.powf(-3.0 / alpha)
            } else {
                0.0
            }
        };
        let v = weak_lp_norm(f, alpha, &g, 64).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((v / exact - 1.0).abs() < 0.05, "{v} vs {exact}");
        let v2 = weak_lp_norm(|p| 2.0 * f(p), alpha, &g, 64).unwrap();
        assert!((v2 / (2f64.powf(alpha) * v) - 1.0).abs() < 1e-10);
    }
}
