//! Subcommand bodies. Each writes its files under the output directory and
//! returns a `key = value` summary for stdout.

use std::fs;
use std::path::{Path, PathBuf};

use swirl_core::analysis::{bisect_threshold, iterate_recurrence, vass_threshold, FeasibilityReport};
use swirl_core::degiorgi::{
    calibrate_c0, check_cheb, check_domination, check_weaklp, degiorgi_driver, radial_bump, radial_power_family,
    second_moment_layercake_bound, SpaceTimeField, SpatialGrid, TruncationLedger,
};
use swirl_core::export::{fmt_real, key_values, Table};
use swirl_core::fields::{
    build_reference_profile, streamline_growth_report, validate_profile, GrowthSampling, Shape, SwirlProfile, TubeField,
};
use swirl_core::norms::{
    annulus_partial_sums, l2_envelope_bound, lp_norm_tube, truncation_table, weak_norm_from_samples, CylGrid,
    PartialSums, SumMode,
};
use swirl_core::Point3;

use crate::config::{Family, RunConfig, ShapeKind};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NormMode {
    L2,
    Alpha,
    F6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CheckKind {
    Weaklp,
    Cheb,
    Domination,
    Layercake,
}

/// Output directory plus the comment header shared by every file of one run.
struct Output {
    dir: PathBuf,
    header: Vec<String>,
}

impl Output {
    fn new(cfg: &RunConfig, command: &str) -> Result<Output, CliError> {
        fs::create_dir_all(&cfg.output_dir).map_err(|source| CliError::Output {
            path: cfg.output_dir.display().to_string(),
            source,
        })?;
        Ok(Output {
            dir: cfg.output_dir.clone(),
            header: cfg.header_lines(command),
        })
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut text = String::new();
        for l in &self.header {
            text.push_str("# ");
            text.push_str(l);
            text.push('\n');
        }
        text.push_str(body);
        fs::write(&path, text).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }

    fn table(&self, name: &str, t: &Table) -> Result<PathBuf, CliError> {
        self.write(name, &t.to_csv_string(&[]))
    }
}

fn wrote(paths: &[PathBuf]) -> (&'static str, String) {
    let names: Vec<String> = paths.iter().map(|p| file_name(p)).collect();
    ("wrote", names.join(" "))
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn profile(cfg: &RunConfig) -> Result<SwirlProfile, CliError> {
    let p = &cfg.profile;
    Ok(match p.shape {
        ShapeKind::Reference => build_reference_profile(p.alpha, p.epsilon, p.j_max, p.c_budget)?,
        _ => SwirlProfile::with_shape(p.alpha, p.epsilon, p.j_max, p.c_budget, p.shape())?,
    })
}

fn tube_field(cfg: &RunConfig) -> Result<TubeField, CliError> {
    Ok(TubeField::new(profile(cfg)?, cfg.profile.flux()))
}

pub fn field_build(cfg: &RunConfig) -> Result<String, CliError> {
    let p = profile(cfg)?;
    let out = Output::new(cfg, "field build")?;
    let mut files = vec![out.write("profile.txt", &p.to_text())?];
    let mut pairs = vec![("annuli", p.annuli.len().to_string())];
    if p.shape == Shape::Reference {
        let rep = validate_profile(&p, 64);
        files.push(out.table("conditions.csv", &rep.to_table())?);
        let certified: Vec<String> = rep
            .annuli
            .iter()
            .filter(|a| a.certified())
            .map(|a| a.j.to_string())
            .collect();
        pairs.push(("feasible_j_max", rep.feasible_j_max.to_string()));
        pairs.push(("certified", certified.join(" ")));
    }
    pairs.push(wrote(&files));
    Ok(key_values(&pairs))
}

pub fn field_norms(cfg: &RunConfig, mode: NormMode) -> Result<String, CliError> {
    match mode {
        NormMode::L2 => l2_norms(cfg),
        NormMode::Alpha => partial_sums(cfg, SumMode::Alpha),
        NormMode::F6 => partial_sums(cfg, SumMode::FSix),
    }
}

fn l2_norms(cfg: &RunConfig) -> Result<String, CliError> {
    let field = tube_field(cfg)?;
    let s = field.profile.s;
    let mut reports = Vec::new();
    let mut curve = Table::new(&["z_cut", "norm_sq", "envelope_bound"]);
    let mut bounded = true;
    for &h in &cfg.grid.l2_depths {
        let z_cut = s - h;
        let grid = CylGrid::for_tube(&field, z_cut, cfg.grid.per_panel)?;
        let r = lp_norm_tube(&field, 2.0, &grid)?;
        let bound = l2_envelope_bound(&field, z_cut);
        bounded &= r.value * r.value <= bound;
        curve.push_reals(&[z_cut, r.value * r.value, bound]);
        reports.push(r);
    }
    let monotone = reports.windows(2).all(|w| w[1].value >= w[0].value);
    let out = Output::new(cfg, "field norms --mode l2")?;
    let files = [
        out.table("norms_l2.csv", &truncation_table(&reports))?,
        out.table("curve_l2.csv", &curve)?,
    ];
    Ok(key_values(&[
        ("mode", "l2".into()),
        ("cuts", reports.len().to_string()),
        ("monotone", monotone.to_string()),
        ("below_envelope", bounded.to_string()),
        wrote(&files),
    ]))
}

fn partial_sums(cfg: &RunConfig, mode: SumMode) -> Result<String, CliError> {
    let (sums, feasible) = if cfg.profile.j_max == 0 {
        (
            PartialSums {
                mode,
                sums: Vec::new(),
                errors: Vec::new(),
            },
            0,
        )
    } else {
        let field = tube_field(cfg)?;
        if field.profile.shape != Shape::Reference {
            return Err(CliError::Validation(
                "annulus sums need profile.shape = \"reference\"".into(),
            ));
        }
        let feasible = validate_profile(&field.profile, 64).feasible_j_max;
        let j = cfg.profile.j_max.min(feasible);
        (annulus_partial_sums(&field, mode, j, cfg.grid.density)?, feasible)
    };
    let name = mode.name();
    let out = Output::new(cfg, &format!("field norms --mode {name}"))?;
    let files = [
        out.table(&format!("norms_{name}.csv"), &sums.report_table())?,
        out.table(&format!("curve_{name}.csv"), &sums.curve_table())?,
    ];
    let inc = sums.increments();
    let mut pairs = vec![
        ("mode", name.to_string()),
        ("feasible_j_max", feasible.to_string()),
        ("annuli", sums.sums.len().to_string()),
    ];
    if let Some(last) = sums.sums.last() {
        pairs.push(("partial_sum", fmt_real(*last)));
        pairs.push((
            "min_increment",
            fmt_real(inc.iter().cloned().fold(f64::INFINITY, f64::min)),
        ));
    }
    if sums.sums.len() >= 2 {
        pairs.push(("slope", fmt_real(sums.slope())));
    }
    pairs.push(wrote(&files));
    Ok(key_values(&pairs))
}

pub fn field_growth(cfg: &RunConfig) -> Result<String, CliError> {
    let field = tube_field(cfg)?;
    let g = &cfg.growth;
    let s = field.profile.s;
    let alpha = field.profile.alpha;
    let step = g.step_fraction * g.depth.powf(1.0 - 1.0 / alpha);
    let z0 = s - g.start_factor * g.depth;
    let sampling = GrowthSampling {
        starts: g.start_radii.iter().map(|&r| Point3::new(r, 0.0, z0)).collect(),
        step,
        s_max: g.max_steps as f64 * step,
        z_max: s - g.depth,
    };
    let rep = streamline_growth_report(&field, g.level, g.cap, &sampling)?;
    let mut t = Table::new(&["x", "y", "z", "F", "ratio"]);
    for w in &rep.witnesses {
        t.push_reals(&[w.point.x, w.point.y, w.point.z, w.f, w.ratio]);
    }
    let out = Output::new(cfg, "field growth")?;
    let files = [out.table("growth.csv", &t)?];
    Ok(key_values(&[
        ("A_emp", fmt_real(rep.a_emp)),
        ("A_cap", fmt_real(g.cap)),
        ("exceeded", rep.exceeded.to_string()),
        ("samples_used", rep.samples_used.to_string()),
        wrote(&files),
    ]))
}

fn ledger(cfg: &RunConfig) -> Result<TruncationLedger, CliError> {
    Ok(TruncationLedger::new(cfg.ledger.r, cfg.ledger.beta, cfg.ledger.k_max)?)
}

/// Builds the test field and fills in the amplitude in `cfg`.
fn space_time_field(cfg: &mut RunConfig, l: &TruncationLedger) -> Result<SpaceTimeField, CliError> {
    let d = &mut cfg.degiorgi;
    let amplitude = *d.amplitude.get_or_insert(l.r.powf(l.beta));
    let grid = SpatialGrid::radial_shells(d.rho_min, d.rho_max, d.shells)?;
    Ok(match d.family {
        Family::Power => radial_power_family(d.alpha, amplitude, &grid, &d.times)?,
        Family::Bump => radial_bump(amplitude, &grid, &d.times)?,
    })
}

pub fn degiorgi_energy(mut cfg: RunConfig) -> Result<String, CliError> {
    let l = ledger(&cfg)?;
    let field = space_time_field(&mut cfg, &l)?;
    let seq = degiorgi_driver(&field, &l)?;
    let out = Output::new(&cfg, "degiorgi energy")?;
    let fit = seq.fit_key_values();
    let files = [out.table("energy.csv", &seq.table())?, out.write("fit.txt", &fit)?];
    let mut s = fit;
    s.push_str(&key_values(&[wrote(&files)]));
    Ok(s)
}

pub fn degiorgi_check(mut cfg: RunConfig, which: CheckKind) -> Result<String, CliError> {
    let l = ledger(&cfg)?;
    let field = space_time_field(&mut cfg, &l)?;
    let d = cfg.degiorgi.clone();
    let mut weak = 0.0f64;
    for i in 0..field.times.len() {
        weak = weak.max(weak_norm_from_samples(&field.snapshot(i), d.alpha, d.weak_levels)?.value);
    }
    let ks: Vec<usize> = (2..=l.k_max).collect();
    let (table, all) = match which {
        CheckKind::Domination => {
            let mut t = Table::new(&["k", "max_ratio", "holds"]);
            let mut all = true;
            for k in 1..=l.k_max {
                let r = check_domination(&field, &l, k)?;
                all &= r.holds;
                t.push(vec![k.to_string(), fmt_real(r.max_ratio), r.holds.to_string()]);
            }
            (t, all)
        }
        CheckKind::Layercake => {
            let mut t = Table::new(&["k", "lhs", "rhs", "holds"]);
            let mut all = true;
            for &k in &ks {
                let r = second_moment_layercake_bound(&field, &l, k, d.alpha, weak)?;
                all &= r.holds;
                t.push(vec![
                    k.to_string(),
                    fmt_real(r.lhs),
                    fmt_real(r.rhs),
                    r.holds.to_string(),
                ]);
            }
            (t, all)
        }
        CheckKind::Weaklp | CheckKind::Cheb => {
            let c0 = match d.c0 {
                Some(c) => c,
                None => {
                    let c = calibrate_c0(&field, &l, &ks, d.alpha, d.delta, weak)?
                        .into_iter()
                        .fold(0.0, f64::max);
                    // One ulp of slack so the calibrating k passes its own check.
                    let c = if c > 0.0 { c * (1.0 + 1e-12) } else { 1.0 };
                    cfg.degiorgi.c0 = Some(c);
                    c
                }
            };
            let mut all = true;
            let t = if which == CheckKind::Weaklp {
                let mut t = Table::new(&["k", "lhs", "rhs", "holds"]);
                for &k in &ks {
                    let r = check_weaklp(&field, &l, k, d.alpha, d.delta, weak, c0)?;
                    all &= r.holds;
                    t.push(vec![
                        k.to_string(),
                        fmt_real(r.lhs),
                        fmt_real(r.rhs),
                        r.holds.to_string(),
                    ]);
                }
                t
            } else {
                let mut t = Table::new(&["k", "lhs", "rhs", "holds", "inclusion_holds", "chebyshev_holds"]);
                for &k in &ks {
                    let r = check_cheb(&field, &l, k, d.alpha, d.delta, d.q, weak, c0)?;
                    all &= r.holds;
                    t.push(vec![
                        k.to_string(),
                        fmt_real(r.lhs),
                        fmt_real(r.rhs),
                        r.holds.to_string(),
                        r.inclusion_holds.to_string(),
                        r.chebyshev_holds.to_string(),
                    ]);
                }
                t
            };
            (t, all)
        }
    };
    let name = which.name();
    let out = Output::new(&cfg, &format!("degiorgi check --which {name}"))?;
    let files = [out.table(&format!("check_{name}.csv"), &table)?];
    let mut pairs = vec![
        ("which", name.to_string()),
        ("weak_norm", fmt_real(weak)),
        ("rows", table.rows.len().to_string()),
        ("all_hold", all.to_string()),
    ];
    if let Some(c0) = cfg.degiorgi.c0 {
        pairs.push(("C0", fmt_real(c0)));
    }
    pairs.push(wrote(&files));
    Ok(key_values(&pairs))
}

impl CheckKind {
    fn name(self) -> &'static str {
        match self {
            CheckKind::Weaklp => "weaklp",
            CheckKind::Cheb => "cheb",
            CheckKind::Domination => "domination",
            CheckKind::Layercake => "layercake",
        }
    }
}

pub fn analysis_feasibility(cfg: &RunConfig) -> Result<String, CliError> {
    let rep = FeasibilityReport::search(cfg.analysis.alpha)?;
    let out = Output::new(cfg, "analysis feasibility")?;
    let files = [out.table("feasibility.csv", &rep.to_table())?];
    let mut s = rep.to_key_values();
    s.push_str(&key_values(&[wrote(&files)]));
    Ok(s)
}

pub fn analysis_recurrence(cfg: &RunConfig) -> Result<String, CliError> {
    let a = &cfg.analysis;
    let c = vass_threshold(a.b, a.beta)?;
    let br = bisect_threshold(a.b, a.beta, a.k_max, a.rel_tol)?;
    let below = iterate_recurrence(a.b, a.beta, (1.0 - a.offset) * c, a.k_max);
    let above = iterate_recurrence(a.b, a.beta, (1.0 + a.offset) * c, a.k_max);
    let mut t = Table::new(&["k", "ln_a_below", "ln_a_above"]);
    for k in 1..=below.len() {
        t.push(vec![k.to_string(), fmt_real(below.ln(k)), fmt_real(above.ln(k))]);
    }
    let out = Output::new(cfg, "analysis recurrence")?;
    let files = [out.table("recurrence.csv", &t)?];
    let opt = |k: Option<usize>| k.map_or_else(|| "none".to_string(), |k| k.to_string());
    Ok(key_values(&[
        ("C_star", fmt_real(c)),
        ("bisect_lo", fmt_real(br.lo)),
        ("bisect_hi", fmt_real(br.hi)),
        ("rel_gap", fmt_real((br.mid() / c - 1.0).abs())),
        ("below_under_1e-30_at", opt(below.first_below(1e-30))),
        ("above_over_1e30_at", opt(above.first_above(1e30))),
        wrote(&files),
    ]))
}
