//! Recurrence threshold and exponent feasibility arithmetic.
//!
//! Two independent pieces live here. The first is the extremal recurrence
//! `a_k = B^k a_{k-1}^beta`, whose decay threshold on `a_1` has a closed form.
//! The second is the bookkeeping that decides whether exponents
//! `(alpha, beta, p, delta)` make all three power-of-R exponents positive.

use crate::export::{fmt_real, key_values, Table};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("alpha = {0} lies outside the open interval (2, 3)")]
    AlphaOutOfRange(f64),
    #[error("alpha = {0} is not admissible (beta interval is empty)")]
    NotAdmissible(f64),
    #[error("p = {0} lies outside (1, 5/4)")]
    POutOfRange(f64),
    #[error("delta = {0} lies outside (0, 2/3)")]
    DeltaOutOfRange(f64),
    #[error("no feasible exponents found for alpha = {0}")]
    NotFound(f64),
    #[error("recurrence needs B > 1, beta > 1 and a1 >= 0 (got B = {b}, beta = {beta}, a1 = {a1})")]
    InvalidRecurrence { b: f64, beta: f64, a1: f64 },
}

/// Slack used when comparing interval endpoints.
pub const INTERVAL_SLACK: f64 = 1e-9;

/// `(3/4)(sqrt(17) - 1)`, the positive root of `2a^2 + 3a - 18`.
pub fn alpha_star() -> f64 {
    0.75 * (17f64.sqrt() - 1.0)
}

/// `1 + 2(alpha/3 - 3/alpha)`; positive exactly when `alpha > alpha_star()`.
pub fn admissibility_value(alpha: f64) -> f64 {
    1.0 + 2.0 * (alpha / 3.0 - 3.0 / alpha)
}

/// `1 + 2(alpha/3 + 3/alpha)`, the sign-flipped variant. Positive for every
/// `alpha > 0`, so it never constrains anything; kept for comparison only.
pub fn admissibility_value_plus(alpha: f64) -> f64 {
    1.0 + 2.0 * (alpha / 3.0 + 3.0 / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    pub value: f64,
    pub alpha_star: f64,
}

fn check_alpha(alpha: f64) -> Result<(), AnalysisError> {
    if alpha > 2.0 && alpha < 3.0 {
        Ok(())
    } else {
        Err(AnalysisError::AlphaOutOfRange(alpha))
    }
}

pub fn alpha_admissible(alpha: f64) -> Result<Admissibility, AnalysisError> {
    check_alpha(alpha)?;
    let value = admissibility_value(alpha);
    Ok(Admissibility {
        admissible: value > 0.0,
        value,
        alpha_star: alpha_star(),
    })
}

/// The open interval `(3/alpha, 1/2 + alpha/3)` of usable De Giorgi exponents.
pub fn beta_interval(alpha: f64) -> Result<(f64, f64), AnalysisError> {
    let adm = alpha_admissible(alpha)?;
    let lo = 3.0 / alpha;
    let hi = 0.5 + alpha / 3.0;
    if !adm.admissible || hi - lo <= INTERVAL_SLACK {
        return Err(AnalysisError::NotAdmissible(alpha));
    }
    Ok((lo, hi))
}

/// Exponent choice together with the criterion constants carried for reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentParams {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub delta: f64,
    pub r0: f64,
    pub m0: f64,
    pub a: f64,
    pub l: f64,
}

impl ExponentParams {
    pub fn new(alpha: f64, beta: f64, p: f64, delta: f64) -> ExponentParams {
        ExponentParams {
            alpha,
            beta,
            p,
            delta,
            r0: 1.0,
            m0: 1.0,
            a: 1.0,
            l: 1.0,
        }
    }
}

/// The three powers of `R` that must be positive for the energy recurrence to
/// close.
pub fn exponent_triple(params: &ExponentParams) -> Result<(f64, f64, f64), AnalysisError> {
    let ExponentParams {
        alpha, beta, p, delta, ..
    } = *params;
    if !(p > 1.0 && p < 1.25) {
        return Err(AnalysisError::POutOfRange(p));
    }
    if !(delta > 0.0 && delta < 2.0 / 3.0) {
        return Err(AnalysisError::DeltaOutOfRange(delta));
    }
    let gap = (alpha - 2.0) * (2.0 / 3.0 - delta);
    let e1 = beta * ((10.0 - 8.0 * p) / (3.0 * p) + (2.0 - p) / (2.0 * p) * gap) - (2.0 - p) / p;
    let e2 = 10.0 / 3.0 - 2.0 * p * beta + gap - p;
    let e3 = 10.0 / 3.0 - 2.0 * beta + gap - 1.0;
    Ok((e1, e2, e3))
}

/// Limits of the triple as `p -> 1` and `delta -> 0`: `(E1, E2 = E3)`.
pub fn exponent_limits(alpha: f64, beta: f64) -> (f64, f64) {
    (beta * alpha / 3.0 - 1.0, 2.0 * (0.5 + alpha / 3.0 - beta))
}

/// Picks the midpoint of the beta interval, then shrinks `(p - 1, delta)`
/// geometrically until all three exponents are positive.
pub fn find_feasible(alpha: f64) -> Result<ExponentParams, AnalysisError> {
    let (lo, hi) = match beta_interval(alpha) {
        Ok(iv) => iv,
        Err(AnalysisError::AlphaOutOfRange(a)) => return Err(AnalysisError::AlphaOutOfRange(a)),
        Err(_) => return Err(AnalysisError::NotFound(alpha)),
    };
    let beta = 0.5 * (lo + hi);
    let mut dp = 0.2;
    let mut delta = 0.5;
    for _ in 0..80 {
        let params = ExponentParams::new(alpha, beta, 1.0 + dp, delta);
        let (e1, e2, e3) = exponent_triple(&params)?;
        if e1 > 0.0 && e2 > 0.0 && e3 > 0.0 {
            return Ok(params);
        }
        dp *= 0.5;
        delta *= 0.5;
    }
    Err(AnalysisError::NotFound(alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub alpha: f64,
    pub alpha_admissible: bool,
    pub alpha_star: f64,
    pub beta_interval: Option<(f64, f64)>,
    /// The evaluated exponent choice; `None` when nothing feasible was found.
    pub params: Option<ExponentParams>,
    pub exponents: Option<(f64, f64, f64)>,
    pub limits: Option<(f64, f64)>,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// Evaluates a given exponent choice.
    pub fn evaluate(params: &ExponentParams) -> Result<FeasibilityReport, AnalysisError> {
        let adm = alpha_admissible(params.alpha)?;
        let iv = beta_interval(params.alpha).ok();
        let (e1, e2, e3) = exponent_triple(params)?;
        let in_iv = iv.is_some_and(|(lo, hi)| params.beta > lo && params.beta < hi);
        let feasible = adm.admissible && in_iv && e1 > 0.0 && e2 > 0.0 && e3 > 0.0;
        Ok(FeasibilityReport {
            alpha: params.alpha,
            alpha_admissible: adm.admissible,
            alpha_star: adm.alpha_star,
            beta_interval: iv,
            params: Some(*params),
            exponents: Some((e1, e2, e3)),
            limits: Some(exponent_limits(params.alpha, params.beta)),
            feasible,
        })
    }

    /// Runs [`find_feasible`] and reports either the witness or a negative
    /// verdict.
    pub fn search(alpha: f64) -> Result<FeasibilityReport, AnalysisError> {
        let adm = alpha_admissible(alpha)?;
        match find_feasible(alpha) {
            Ok(p) => FeasibilityReport::evaluate(&p),
            Err(AnalysisError::NotFound(_)) => Ok(FeasibilityReport {
                alpha,
                alpha_admissible: adm.admissible,
                alpha_star: adm.alpha_star,
                beta_interval: beta_interval(alpha).ok(),
                params: None,
                exponents: None,
                limits: None,
                feasible: false,
            }),
            Err(e) => Err(e),
        }
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "alpha",
        "alpha_star",
        "beta_lo",
        "beta_hi",
        "beta",
        "p",
        "delta",
        "E1",
        "E2",
        "E3",
        "feasible",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let nan = f64::NAN;
        let (lo, hi) = self.beta_interval.unwrap_or((nan, nan));
        let (beta, p, delta) = self.params.map_or((nan, nan, nan), |q| (q.beta, q.p, q.delta));
        let (e1, e2, e3) = self.exponents.unwrap_or((nan, nan, nan));
        let mut row: Vec<String> = [self.alpha, self.alpha_star, lo, hi, beta, p, delta, e1, e2, e3]
            .iter()
            .map(|&x| fmt_real(x))
            .collect();
        row.push(self.feasible.to_string());
        row
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&Self::CSV_HEADER);
        t.push(self.csv_row());
        t
    }

    pub fn to_key_values(&self) -> String {
        let row = self.csv_row();
        let mut pairs: Vec<(&str, String)> = Self::CSV_HEADER.iter().zip(row).map(|(k, v)| (*k, v)).collect();
        pairs.insert(1, ("alpha_admissible", self.alpha_admissible.to_string()));
        if let Some((l1, l23)) = self.limits {
            pairs.push(("E1_lim", fmt_real(l1)));
            pairs.push(("E23_lim", fmt_real(l23)));
        }
        key_values(&pairs)
    }
}

/// Parameters of the extremal recurrence `a_k = B^k a_{k-1}^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceParams {
    pub b: f64,
    pub beta: f64,
    pub a1: f64,
}

impl RecurrenceParams {
    pub fn new(b: f64, beta: f64, a1: f64) -> Result<RecurrenceParams, AnalysisError> {
        if !(b > 1.0 && beta > 1.0 && a1 >= 0.0 && b.is_finite() && beta.is_finite()) {
            return Err(AnalysisError::InvalidRecurrence { b, beta, a1 });
        }
        Ok(RecurrenceParams { b, beta, a1 })
    }
}

/// `B^{1 - beta^2/(beta-1)^2}`: sequences started strictly below decay to
/// zero, sequences started above blow up.
pub fn vass_threshold(b: f64, beta: f64) -> Result<f64, AnalysisError> {
    RecurrenceParams::new(b, beta, 0.0)?;
    Ok(b.powf(1.0 - beta * beta / ((beta - 1.0) * (beta - 1.0))))
}

/// Iterates in log space so that double-exponential decay or growth neither
/// underflows nor overflows. Index 0 holds `a_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceSequence {
    pub ln_a: Vec<f64>,
}

impl RecurrenceSequence {
    /// `a_k` for `k >= 1`; may round to 0 or infinity.
    pub fn a(&self, k: usize) -> f64 {
        self.ln_a[k - 1].exp()
    }

    pub fn ln(&self, k: usize) -> f64 {
        self.ln_a[k - 1]
    }

    pub fn len(&self) -> usize {
        self.ln_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_a.is_empty()
    }

    /// First index whose value drops below `level`.
    pub fn first_below(&self, level: f64) -> Option<usize> {
        let l = level.ln();
        self.ln_a.iter().position(|&x| x < l).map(|i| i + 1)
    }

    /// First index whose value exceeds `level`.
    pub fn first_above(&self, level: f64) -> Option<usize> {
        let l = level.ln();
        self.ln_a.iter().position(|&x| x > l).map(|i| i + 1)
    }
}

/// `a_k = B^k a_{k-1}^beta` for `k = 2..=k_max`. Unlike [`vass_threshold`]
/// this accepts `B = 1`, the pure power map.
pub fn iterate_recurrence(b: f64, beta: f64, a1: f64, k_max: usize) -> RecurrenceSequence {
    let lb = b.ln();
    let mut ln_a = Vec::with_capacity(k_max);
    let mut cur = a1.ln();
    ln_a.push(cur);
    for k in 2..=k_max {
        cur = if cur == f64::NEG_INFINITY {
            cur
        } else {
            k as f64 * lb + beta * cur
        };
        ln_a.push(cur);
    }
    RecurrenceSequence { ln_a }
}

/// Outcome of bisecting on `a_1` with the iteration itself as the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdBracket {
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl ThresholdBracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Classifies a start value by where the sequence sits at `k_max`.
/// `Some(true)` means decay below `1e-30`, `Some(false)` growth past `1e30`.
pub fn decays(b: f64, beta: f64, a1: f64, k_max: usize) -> Option<bool> {
    let seq = iterate_recurrence(b, beta, a1, k_max);
    let last = *seq.ln_a.last().expect("k_max >= 1");
    if last < 1e-30f64.ln() {
        Some(true)
    } else if last > 1e30f64.ln() {
        Some(false)
    } else {
        None
    }
}

/// Bisection on `ln a_1` between `1e-300` and `1`, classifying by
/// [`decays`] at `k_max`. Stops when the bracket is narrower than `rel_tol`
/// relative to its midpoint.
pub fn bisect_threshold(b: f64, beta: f64, k_max: usize, rel_tol: f64) -> Result<ThresholdBracket, AnalysisError> {
    RecurrenceParams::new(b, beta, 0.0)?;
    let mut lo = 1e-300f64.ln();
    let mut hi = 0.0f64;
    let mut iterations = 0;
    while (hi - lo) > rel_tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if decays(b, beta, mid.exp(), k_max) == Some(true) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(ThresholdBracket {
        lo: lo.exp(),
        hi: hi.exp(),
        iterations,
    })
}
