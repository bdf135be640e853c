//! Experiment orchestration: assemble the discrete system from a `RunConfig`,
//! run the homotopy, and emit result files — `controls.csv` with the control
//! trajectories, a structured `summary.json`, an optional `controls.svg`
//! step plot, and sweep tables over α or γ.

use crate::config::RunConfig;
use crate::geometry::assemble_control_geometry;
use crate::homotopy::{run_homotopy, HomotopyError, SolveReport, StageRecord};
use crate::mesh::{build_mesh, MeshError};
use crate::prox::PenaltyParams;
use crate::solver::{solve_fixed_gamma, switching_diagnostics, SolveError};
use crate::system::{HeatSystem, SystemError, TimeGrid, TimeProfile};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Solver(#[from] HomotopyError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn write_file(path: &Path, content: &str) -> Result<(), RunError> {
    std::fs::write(path, content).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

/// Builds mesh, geometry, grid, and target for a configuration.
pub fn assemble_system(config: &RunConfig) -> Result<HeatSystem, RunError> {
    let mesh = build_mesh(config.mesh_edge)?;
    let geometry = assemble_control_geometry(&mesh, config.n_controls);
    let grid = TimeGrid::new(config.horizon, config.time_intervals)
        .map_err(RunError::System)?;
    Ok(HeatSystem::new(mesh, geometry, grid)?)
}

#[derive(Debug)]
pub struct ExperimentArtifacts {
    pub report: SolveReport,
    pub objective: f64,
    pub controls_csv: PathBuf,
    pub summary_json: PathBuf,
    pub controls_svg: Option<PathBuf>,
}

#[derive(Serialize)]
struct StageSummary {
    gamma: f64,
    converged: bool,
    newton_iterations: usize,
    cg_last: Option<usize>,
    residual_norm: f64,
    residual_history: Vec<f64>,
    tau_counts: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    n_controls: usize,
    alpha: f64,
    horizon: f64,
    time_intervals: usize,
    mesh_edge: f64,
    gamma_last: f64,
    tau: &'a [usize],
    switch_points: usize,
    never_active: &'a [bool],
    objective: f64,
    stages: Vec<StageSummary>,
}

fn stage_summary(stage: &StageRecord) -> StageSummary {
    StageSummary {
        gamma: stage.gamma,
        converged: stage.converged,
        newton_iterations: stage.newton_iterations,
        cg_last: stage.cg_last,
        residual_norm: stage.residual_norm,
        residual_history: stage.history.iter().map(|r| r.residual_norm).collect(),
        tau_counts: stage.diagnostics.as_ref().map(|d| d.tau_counts.clone()),
    }
}

/// 17 significant digits: enough for an exact f64 round-trip through text.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn controls_csv_text(grid: &TimeGrid, u: &TimeProfile) -> String {
    let mut out = String::new();
    out.push('t');
    for i in 1..=u.components() {
        let _ = write!(out, ",u{i}");
    }
    out.push('\n');
    for m in 0..u.intervals() {
        let _ = write!(out, "{}", fmt_full(grid.midpoint_time(m)));
        for v in u.slice(m) {
            let _ = write!(out, ",{}", fmt_full(*v));
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// Step plot of the control components; intervals where more than one
/// component is active are marked on the t-axis.
fn controls_svg_text(grid: &TimeGrid, u: &TimeProfile, tau_markers: &[bool]) -> String {
    let (width, height) = (900.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 40.0);
    let t_max = grid.horizon();
    let mut lo = u.data().iter().cloned().fold(0.0f64, f64::min);
    let mut hi = u.data().iter().cloned().fold(0.0f64, f64::max);
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let x = |t: f64| ml + (width - ml - mr) * t / t_max;
    let y = |v: f64| mt + (height - mt - mb) * (hi - v) / (hi - lo);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    let _ = write!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n");
    // axes
    let y0 = y(0.0f64.clamp(lo, hi));
    let _ = write!(
        svg,
        "<line x1=\"{ml}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        width - mr
    );
    let _ = write!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        height - mb
    );
    for k in 0..=10 {
        let t = t_max * k as f64 / 10.0;
        let xt = x(t);
        let yb = height - mb;
        let _ = write!(
            svg,
            "<line x1=\"{xt:.2}\" y1=\"{yb:.2}\" x2=\"{xt:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            yb + 5.0
        );
        let _ = write!(
            svg,
            "<text x=\"{xt:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{t:.0}</text>\n",
            yb + 18.0
        );
    }
    for (label, v) in [(format!("{hi:.2}"), hi), (format!("{lo:.2}"), lo)] {
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{label}</text>\n",
            ml - 6.0,
            y(v) + 4.0
        );
    }
    // markers for intervals without perfect switching
    for (m, &marked) in tau_markers.iter().enumerate() {
        if marked {
            let x0 = x(grid.node_time(m));
            let x1 = x(grid.node_time(m + 1));
            let yb = height - mb;
            let _ = write!(
                svg,
                "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"4\" fill=\"#d62728\"/>\n",
                yb - 2.0,
                (x1 - x0).max(1.0)
            );
        }
    }
    // step curves for the components that ever act
    let ever_active: Vec<usize> = (0..u.components())
        .filter(|&i| (0..u.intervals()).any(|m| u.slice(m)[i] != 0.0))
        .collect();
    for &i in &ever_active {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        let _ = write!(path, "M {:.2} {:.2}", x(0.0), y(u.slice(0)[i]));
        for m in 0..u.intervals() {
            let v = u.slice(m)[i];
            if m > 0 {
                let _ = write!(path, " L {:.2} {:.2}", x(grid.node_time(m)), y(v));
            }
            let _ = write!(path, " L {:.2} {:.2}", x(grid.node_time(m + 1)), y(v));
        }
        let _ = write!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        );
    }
    // legend
    for (slot, &i) in ever_active.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let lx = ml + 10.0 + 60.0 * slot as f64;
        let _ = write!(
            svg,
            "<rect x=\"{lx:.2}\" y=\"{mt}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n"
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">u{}</text>\n",
            lx + 18.0,
            mt + 6.0,
            i + 1
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Runs the homotopy for a configuration and writes the result files.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentArtifacts, RunError> {
    let system = assemble_system(config)?;
    let report = run_homotopy(&system, config.alpha, &config.homotopy, &config.solver)?;
    let objective = system.evaluate_objective(&report.control, config.alpha);

    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    let controls_csv = config.output_dir.join("controls.csv");
    write_file(&controls_csv, &controls_csv_text(system.grid(), &report.control))?;

    let summary = Summary {
        n_controls: config.n_controls,
        alpha: config.alpha,
        horizon: config.horizon,
        time_intervals: config.time_intervals,
        mesh_edge: config.mesh_edge,
        gamma_last: report.last_gamma,
        tau: &report.diagnostics.tau_counts,
        switch_points: report.diagnostics.switch_points,
        never_active: &report.diagnostics.never_active,
        objective,
        stages: report.stages.iter().map(stage_summary).collect(),
    };
    let summary_json = config.output_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&summary_json, &json)?;

    let controls_svg = if config.emit_svg {
        let params = PenaltyParams::new(config.alpha, report.last_gamma).unwrap();
        let markers: Vec<bool> = (0..report.dual.intervals())
            .map(|m| crate::prox::prox_gstar(report.dual.slice(m), &params).d > 1)
            .collect();
        let path = config.output_dir.join("controls.svg");
        write_file(&path, &controls_svg_text(system.grid(), &report.control, &markers))?;
        Some(path)
    } else {
        None
    };

    Ok(ExperimentArtifacts { report, objective, controls_csv, summary_json, controls_svg })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Gamma,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "gamma" => Ok(SweepParam::Gamma),
            _ => Err(format!("unknown sweep parameter `{s}` (use alpha or gamma)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub tau1: usize,
    pub tau2: usize,
    pub tau3: usize,
    pub gamma_last: f64,
    pub ssn: usize,
    pub cg: Option<usize>,
    pub converged: bool,
}

fn sweep_csv_text(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,tau1,tau2,tau3,gamma_last,ssn,cg,converged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_full(r.value),
            r.tau1,
            r.tau2,
            r.tau3,
            fmt_full(r.gamma_last),
            r.ssn,
            r.cg.map(|c| c.to_string()).unwrap_or_default(),
            r.converged
        );
    }
    out
}

/// Sweeps α (independent homotopy runs, in parallel) or γ (fixed-γ solves in
/// the given order, each warm-started from the previous solution) and writes
/// one table row per value.
pub fn run_table_sweep(
    config: &RunConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<(PathBuf, Vec<SweepRow>), RunError> {
    let system = assemble_system(config)?;
    let rows = match param {
        SweepParam::Alpha => {
            let results: Vec<Result<SweepRow, RunError>> = values
                .par_iter()
                .map(|&alpha| {
                    let report =
                        run_homotopy(&system, alpha, &config.homotopy, &config.solver)?;
                    let stage = report.last_converged_stage();
                    Ok(SweepRow {
                        value: alpha,
                        tau1: report.diagnostics.tau(1),
                        tau2: report.diagnostics.tau(2),
                        tau3: report.diagnostics.tau(3),
                        gamma_last: report.last_gamma,
                        ssn: stage.newton_iterations,
                        cg: stage.cg_last,
                        converged: true,
                    })
                })
                .collect();
            results.into_iter().collect::<Result<Vec<_>, _>>()?
        }
        SweepParam::Gamma => {
            let m = system.grid().intervals();
            let n = system.geometry().n_controls();
            let mut p = TimeProfile::zeros(m, n);
            let mut rows = Vec::with_capacity(values.len());
            for &gamma in values {
                let params = PenaltyParams::new(config.alpha, gamma)
                    .map_err(|_| HomotopyError::InvalidAlpha(config.alpha))?;
                match solve_fixed_gamma(p.clone(), &system, &params, &config.solver) {
                    Ok(sol) => {
                        let diag = switching_diagnostics(&sol.control, &sol.state.p, &params);
                        rows.push(SweepRow {
                            value: gamma,
                            tau1: diag.tau(1),
                            tau2: diag.tau(2),
                            tau3: diag.tau(3),
                            gamma_last: gamma,
                            ssn: sol.state.iteration,
                            cg: sol.state.history.last().and_then(|r| r.cg_iterations),
                            converged: true,
                        });
                        p = sol.state.p;
                    }
                    Err(err) => {
                        let state = match &err {
                            SolveError::NotConverged(s) | SolveError::LineSearchFailed(s) => s,
                        };
                        rows.push(SweepRow {
                            value: gamma,
                            tau1: 0,
                            tau2: 0,
                            tau3: 0,
                            gamma_last: gamma,
                            ssn: state.iteration,
                            cg: state.history.last().and_then(|r| r.cg_iterations),
                            converged: false,
                        });
                    }
                }
            }
            rows
        }
    };

    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    let name = match param {
        SweepParam::Alpha => "sweep_alpha.csv",
        SweepParam::Gamma => "sweep_gamma.csv",
    };
    let path = config.output_dir.join(name);
    write_file(&path, &sweep_csv_text(&rows))?;
    Ok((path, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, ConfigOverrides};

    fn tiny_config(dir: &Path) -> RunConfig {
        let ov = ConfigOverrides {
            n_controls: Some(2),
            alpha: Some(0.1),
            horizon: Some(1.0),
            time_intervals: Some(6),
            mesh_edge: Some(0.5),
            gamma_min: Some(1e-4),
            output_dir: Some(dir.to_path_buf()),
            emit_svg: Some(true),
            ..Default::default()
        };
        parse_config(None, &ov).unwrap()
    }

    #[test]
    fn experiment_writes_deterministic_files() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let a1 = run_experiment(&config).unwrap();
        let csv1 = std::fs::read(&a1.controls_csv).unwrap();
        let sum1 = std::fs::read(&a1.summary_json).unwrap();
        let svg1 = std::fs::read(a1.controls_svg.as_ref().unwrap()).unwrap();
        let a2 = run_experiment(&config).unwrap();
        let csv2 = std::fs::read(&a2.controls_csv).unwrap();
        let sum2 = std::fs::read(&a2.summary_json).unwrap();
        let svg2 = std::fs::read(a2.controls_svg.as_ref().unwrap()).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(sum1, sum2);
        assert_eq!(svg1, svg2);
        assert!(svg1.starts_with(b"<svg"));
    }

    #[test]
    fn controls_roundtrip_through_csv_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let artifacts = run_experiment(&config).unwrap();
        let text = std::fs::read_to_string(&artifacts.controls_csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,u1,u2");
        let u = &artifacts.report.control;
        for (m, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 3);
            for (i, cell) in cells[1..].iter().enumerate() {
                let parsed: f64 = cell.parse().unwrap();
                assert_eq!(parsed.to_bits(), u.slice(m)[i].to_bits(), "row {m} col {i}");
            }
        }
    }

    #[test]
    fn summary_tau_matches_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let artifacts = run_experiment(&config).unwrap();
        let text = std::fs::read_to_string(&artifacts.summary_json).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        let tau: Vec<usize> = parsed["tau"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect();
        assert_eq!(tau, artifacts.report.diagnostics.tau_counts);
        assert_eq!(
            parsed["switch_points"].as_u64().unwrap() as usize,
            artifacts.report.diagnostics.switch_points
        );
        assert_eq!(parsed["gamma_last"].as_f64().unwrap(), artifacts.report.last_gamma);
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let (path, rows) = run_table_sweep(&config, SweepParam::Alpha, &[]).unwrap();
        assert!(rows.is_empty());
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "value,tau1,tau2,tau3,gamma_last,ssn,cg,converged\n");
    }

    #[test]
    fn gamma_sweep_warm_starts_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let (_, rows) =
            run_table_sweep(&config, SweepParam::Gamma, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.converged));
        assert_eq!(rows[2].gamma_last, 1e-4);
        let covered: usize = rows[2].tau1 + rows[2].tau2;
        assert_eq!(covered, 6);
    }
}
