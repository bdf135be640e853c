//! Run configuration: a small key = value text format (with optional
//! [homotopy] and [solver] sections and # comments) plus command-line
//! overrides. Flags win over file values; unknown keys are rejected.

use crate::homotopy::HomotopySchedule;
use crate::solver::SolverSettings;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}` (set it in the config file or pass the flag)")]
    MissingKey(&'static str),
    #[error("invalid value for `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_controls: usize,
    pub alpha: f64,
    pub horizon: f64,
    pub time_intervals: usize,
    pub mesh_edge: f64,
    pub homotopy: HomotopySchedule,
    pub solver: SolverSettings,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
}

/// Optional command-line overrides applied on top of the file values.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub n_controls: Option<usize>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
    pub time_intervals: Option<usize>,
    pub mesh_edge: Option<f64>,
    pub gamma_start: Option<f64>,
    pub gamma_min: Option<f64>,
    pub reduction_factor: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub emit_svg: Option<bool>,
}

#[derive(Debug, Default)]
struct PartialConfig {
    n_controls: Option<usize>,
    alpha: Option<f64>,
    horizon: Option<f64>,
    time_intervals: Option<usize>,
    mesh_edge: Option<f64>,
    gamma_start: Option<f64>,
    reduction_factor: Option<f64>,
    gamma_min: Option<f64>,
    newton_tol_rel: Option<f64>,
    newton_max_iter: Option<usize>,
    cg_tol_rel: Option<f64>,
    cg_max_iter: Option<usize>,
    linesearch_factor: Option<f64>,
    linesearch_max: Option<usize>,
    output_dir: Option<PathBuf>,
    emit_svg: Option<bool>,
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, ConfigError> {
    raw.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        msg: format!("`{raw}` is not a number"),
    })
}

fn parse_usize(key: &str, raw: &str) -> Result<usize, ConfigError> {
    raw.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        msg: format!("`{raw}` is not a nonnegative integer"),
    })
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.into(),
            msg: format!("`{raw}` is not a boolean"),
        }),
    }
}

impl PartialConfig {
    fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<(), ConfigError> {
        let qualified = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        match (section, key) {
            ("", "N") => self.n_controls = Some(parse_usize(&qualified, raw)?),
            ("", "alpha") => self.alpha = Some(parse_f64(&qualified, raw)?),
            ("", "T") => self.horizon = Some(parse_f64(&qualified, raw)?),
            ("", "time_intervals") => self.time_intervals = Some(parse_usize(&qualified, raw)?),
            ("", "mesh_edge") => self.mesh_edge = Some(parse_f64(&qualified, raw)?),
            ("" | "homotopy", "gamma_start") => {
                self.gamma_start = Some(parse_f64(&qualified, raw)?)
            }
            ("" | "homotopy", "reduction_factor") => {
                self.reduction_factor = Some(parse_f64(&qualified, raw)?)
            }
            ("" | "homotopy", "gamma_min") => self.gamma_min = Some(parse_f64(&qualified, raw)?),
            ("" | "solver", "newton_tol_rel") => {
                self.newton_tol_rel = Some(parse_f64(&qualified, raw)?)
            }
            ("" | "solver", "newton_max_iter") => {
                self.newton_max_iter = Some(parse_usize(&qualified, raw)?)
            }
            ("" | "solver", "cg_tol_rel") => self.cg_tol_rel = Some(parse_f64(&qualified, raw)?),
            ("" | "solver", "cg_max_iter") => {
                self.cg_max_iter = Some(parse_usize(&qualified, raw)?)
            }
            ("" | "solver", "linesearch_factor") => {
                self.linesearch_factor = Some(parse_f64(&qualified, raw)?)
            }
            ("" | "solver", "linesearch_max") => {
                self.linesearch_max = Some(parse_usize(&qualified, raw)?)
            }
            ("", "output_dir") => self.output_dir = Some(PathBuf::from(raw)),
            ("", "emit_svg") => self.emit_svg = Some(parse_bool(&qualified, raw)?),
            _ => return Err(ConfigError::UnknownKey(qualified)),
        }
        Ok(())
    }
}

fn parse_file(text: &str) -> Result<PartialConfig, ConfigError> {
    let mut partial = PartialConfig::default();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(ConfigError::Parse {
                    line: line_no,
                    msg: format!("malformed section header `{line}`"),
                });
            }
            section = line[1..line.len() - 1].trim().to_string();
            if !matches!(section.as_str(), "homotopy" | "solver") {
                return Err(ConfigError::UnknownKey(format!("[{section}]")));
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        partial.set(&section, key.trim(), value.trim())?;
    }
    Ok(partial)
}

fn positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::InvalidValue { key: key.into(), msg: format!("{v} must be positive") })
    }
}

/// Resolves the configuration from an optional file and flag overrides.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<RunConfig, ConfigError> {
    let mut partial = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
            parse_file(&text)?
        }
        None => PartialConfig::default(),
    };
    // flags win over file values
    if let Some(v) = overrides.n_controls {
        partial.n_controls = Some(v);
    }
    if let Some(v) = overrides.alpha {
        partial.alpha = Some(v);
    }
    if let Some(v) = overrides.horizon {
        partial.horizon = Some(v);
    }
    if let Some(v) = overrides.time_intervals {
        partial.time_intervals = Some(v);
    }
    if let Some(v) = overrides.mesh_edge {
        partial.mesh_edge = Some(v);
    }
    if let Some(v) = overrides.gamma_start {
        partial.gamma_start = Some(v);
    }
    if let Some(v) = overrides.gamma_min {
        partial.gamma_min = Some(v);
    }
    if let Some(v) = overrides.reduction_factor {
        partial.reduction_factor = Some(v);
    }
    if let Some(v) = &overrides.output_dir {
        partial.output_dir = Some(v.clone());
    }
    if let Some(v) = overrides.emit_svg {
        partial.emit_svg = Some(v);
    }

    let n_controls = partial.n_controls.ok_or(ConfigError::MissingKey("N"))?;
    if n_controls == 0 || n_controls > 64 {
        return Err(ConfigError::InvalidValue {
            key: "N".into(),
            msg: format!("{n_controls} outside 1..=64"),
        });
    }
    let alpha = positive("alpha", partial.alpha.ok_or(ConfigError::MissingKey("alpha"))?)?;
    let horizon = positive("T", partial.horizon.unwrap_or(10.0))?;
    let time_intervals = partial.time_intervals.unwrap_or(200);
    if time_intervals == 0 {
        return Err(ConfigError::InvalidValue {
            key: "time_intervals".into(),
            msg: "must be at least 1".into(),
        });
    }
    let mesh_edge = positive("mesh_edge", partial.mesh_edge.unwrap_or(0.1))?;
    if mesh_edge > 2.0 {
        return Err(ConfigError::InvalidValue {
            key: "mesh_edge".into(),
            msg: format!("{mesh_edge} exceeds the domain size 2"),
        });
    }
    let defaults_h = HomotopySchedule::default();
    let homotopy = HomotopySchedule {
        gamma_start: positive("gamma_start", partial.gamma_start.unwrap_or(defaults_h.gamma_start))?,
        reduction_factor: positive(
            "reduction_factor",
            partial.reduction_factor.unwrap_or(defaults_h.reduction_factor),
        )?,
        gamma_min: positive("gamma_min", partial.gamma_min.unwrap_or(defaults_h.gamma_min))?,
    };
    homotopy.validate().map_err(|e| ConfigError::InvalidValue {
        key: "homotopy".into(),
        msg: e.to_string(),
    })?;
    let defaults_s = SolverSettings::default();
    let solver = SolverSettings {
        newton_tol_rel: positive(
            "newton_tol_rel",
            partial.newton_tol_rel.unwrap_or(defaults_s.newton_tol_rel),
        )?,
        newton_max_iter: partial.newton_max_iter.unwrap_or(defaults_s.newton_max_iter),
        cg_tol_rel: positive("cg_tol_rel", partial.cg_tol_rel.unwrap_or(defaults_s.cg_tol_rel))?,
        cg_max_iter: partial.cg_max_iter.unwrap_or(defaults_s.cg_max_iter),
        linesearch_factor: partial.linesearch_factor.unwrap_or(defaults_s.linesearch_factor),
        linesearch_max: partial.linesearch_max.unwrap_or(defaults_s.linesearch_max),
    };
    solver.validate().map_err(|e| ConfigError::InvalidValue {
        key: "solver".into(),
        msg: e,
    })?;
    Ok(RunConfig {
        n_controls,
        alpha,
        horizon,
        time_intervals,
        mesh_edge,
        homotopy,
        solver,
        output_dir: partial.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        emit_svg: partial.emit_svg.unwrap_or(false),
    })
}
