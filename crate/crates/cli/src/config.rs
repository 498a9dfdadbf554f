//! Run configuration: a TOML file, then `--set` overrides, then subcommand flags.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use swirl_core::fields::{FluxProfile, Shape};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub output_dir: PathBuf,
    pub profile: ProfileConfig,
    pub grid: GridConfig,
    pub growth: GrowthConfig,
    pub ledger: LedgerConfig,
    pub degiorgi: DeGiorgiConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: "reference".into(),
            output_dir: PathBuf::from("out"),
            profile: ProfileConfig::default(),
            grid: GridConfig::default(),
            growth: GrowthConfig::default(),
            ledger: LedgerConfig::default(),
            degiorgi: DeGiorgiConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Reference,
    Constant,
    Power,
    Exponential,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FluxKind {
    Bump,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub j_max: usize,
    pub c_budget: f64,
    pub shape: ShapeKind,
    /// Constant value, power exponent or exponential rate, depending on `shape`.
    pub shape_param: f64,
    pub flux: FluxKind,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            alpha: 2.5,
            epsilon: 0.05,
            j_max: 8,
            c_budget: 1.0,
            shape: ShapeKind::Reference,
            shape_param: 1.0,
            flux: FluxKind::Constant,
        }
    }
}

impl ProfileConfig {
    pub fn shape(&self) -> Shape {
        match self.shape {
            ShapeKind::Reference => Shape::Reference,
            ShapeKind::Constant => Shape::Constant(self.shape_param),
            ShapeKind::Power => Shape::Power(self.shape_param),
            ShapeKind::Exponential => Shape::Exponential {
                scale: 1.0,
                rate: self.shape_param,
            },
        }
    }

    pub fn flux(&self) -> FluxProfile {
        match self.flux {
            FluxKind::Bump => FluxProfile::Bump,
            FluxKind::Constant => FluxProfile::Constant(1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Midpoint cells per panel of the `L^2` grid.
    pub per_panel: usize,
    /// Cells per dyadic log-depth window for the annulus sums.
    pub density: usize,
    /// `L^2` norms are computed on `z <= S - h` for each `h` here.
    pub l2_depths: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            per_panel: 8,
            density: 8,
            l2_depths: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    /// Only samples with `|F| >= level` enter the supremum.
    pub level: f64,
    pub cap: f64,
    /// Streamlines stop at `z = S - depth`.
    pub depth: f64,
    /// Streamlines start at `z = S - start_factor * depth`.
    pub start_factor: f64,
    pub start_radii: Vec<f64>,
    /// Step as a fraction of `depth^(1 - 1/alpha)`.
    pub step_fraction: f64,
    pub max_steps: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            level: 1.0,
            cap: 10.0,
            depth: 1e-3,
            start_factor: 2.0,
            start_radii: vec![0.1],
            step_fraction: 0.01,
            max_steps: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerConfig {
    pub r: f64,
    pub beta: f64,
    pub k_max: usize,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            r: 10.0,
            beta: 1.25,
            k_max: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Power,
    Bump,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DeGiorgiConfig {
    pub family: Family,
    pub alpha: f64,
    /// Field amplitude; `R^beta` when absent.
    pub amplitude: Option<f64>,
    pub rho_min: f64,
    pub rho_max: f64,
    pub shells: usize,
    pub times: Vec<f64>,
    pub delta: f64,
    pub q: f64,
    /// Interpolation constant; calibrated on the field when absent.
    pub c0: Option<f64>,
    pub weak_levels: usize,
}

impl Default for DeGiorgiConfig {
    fn default() -> Self {
        DeGiorgiConfig {
            family: Family::Power,
            alpha: 2.5,
            amplitude: None,
            rho_min: 1e-2,
            rho_max: 20.0,
            shells: 2000,
            times: vec![0.0, 0.5, 0.7, 0.85, 1.0],
            delta: 0.1,
            q: 2.5,
            c0: None,
            weak_levels: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub k_max: usize,
    pub rel_tol: f64,
    /// Sequences are iterated from `(1 -+ offset) * C_star`.
    pub offset: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 2.5,
            b: 2.0,
            beta: 5.0 / 3.0,
            k_max: 200,
            rel_tol: 1e-10,
            offset: 0.1,
        }
    }
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CliError::Config(format!("empty key in '{key}'")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{p}' in '{key}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Layered configuration: file, then `key=value` overrides in order.
#[derive(Debug, Default)]
pub struct ConfigBuilder {
    table: toml::Table,
}

impl ConfigBuilder {
    pub fn from_file(path: Option<&Path>) -> Result<ConfigBuilder, CliError> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        Ok(ConfigBuilder { table })
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not key=value")))?;
        set_path(&mut self.table, k.trim(), parse_value(v.trim()))
    }

    pub fn set_value(&mut self, key: &str, value: toml::Value) -> Result<(), CliError> {
        set_path(&mut self.table, key, value)
    }

    pub fn build(self) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = toml::Value::Table(self.table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn require(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

impl RunConfig {
    /// Checks what the library does not check itself before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        require(g.per_panel >= 2, "grid.per_panel must be at least 2")?;
        require(g.density >= 2, "grid.density must be at least 2")?;
        require(
            g.l2_depths.iter().all(|&h| h > 0.0 && h < 1.0),
            "grid.l2_depths must lie in (0, 1)",
        )?;
        let w = &self.growth;
        require(
            w.level > 0.0 && w.cap > 0.0,
            "growth.level and growth.cap must be positive",
        )?;
        require(w.depth > 0.0 && w.depth < 1.0, "growth.depth must lie in (0, 1)")?;
        require(w.start_factor > 1.0, "growth.start_factor must exceed 1")?;
        require(
            w.step_fraction > 0.0 && w.max_steps > 0,
            "growth step settings must be positive",
        )?;
        require(!w.start_radii.is_empty(), "growth.start_radii is empty")?;
        let d = &self.degiorgi;
        require(
            d.rho_max > d.rho_min && d.rho_min >= 0.0,
            "degiorgi needs 0 <= rho_min < rho_max",
        )?;
        require(d.shells > 0, "degiorgi.shells must be positive")?;
        require(d.weak_levels >= 32, "degiorgi.weak_levels must be at least 32")?;
        require(
            d.amplitude.is_none_or(|a| a >= 0.0),
            "degiorgi.amplitude must be non-negative",
        )?;
        require(d.c0.is_none_or(|c| c > 0.0), "degiorgi.c0 must be positive")?;
        let a = &self.analysis;
        require(a.rel_tol > 0.0, "analysis.rel_tol must be positive")?;
        require(a.offset > 0.0 && a.offset < 1.0, "analysis.offset must lie in (0, 1)")?;
        Ok(())
    }

    /// `# `-ready lines describing the resolved configuration.
    pub fn header_lines(&self, command: &str) -> Vec<String> {
        let mut lines = vec![format!("swirl {command}")];
        let text = toml::to_string(self).expect("config serializes");
        lines.extend(text.lines().filter(|l| !l.is_empty()).map(str::to_string));
        lines
    }
}
