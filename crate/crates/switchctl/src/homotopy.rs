//! Continuation in the Moreau–Yosida parameter: solve at γ = γ_start, divide γ
//! by the reduction factor, warm-start the Newton method from the previous
//! dual iterate, and stop when a stage fails to converge or γ_min is reached.
//! The result is the last successful stage's solution together with a record
//! of every attempted stage.

use crate::prox::PenaltyParams;
use crate::solver::{
    solve_fixed_gamma, switching_diagnostics, FixedGammaSolution, IterationRecord, SolverSettings,
    SwitchingDiagnostics,
};
use crate::system::{HeatSystem, TimeProfile};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopySchedule {
    pub gamma_start: f64,
    pub reduction_factor: f64,
    pub gamma_min: f64,
}

impl Default for HomotopySchedule {
    fn default() -> Self {
        Self { gamma_start: 1e-2, reduction_factor: 10.0, gamma_min: 1e-12 }
    }
}

impl HomotopySchedule {
    pub fn validate(&self) -> Result<(), HomotopyError> {
        let ok = self.gamma_start.is_finite()
            && self.gamma_min.is_finite()
            && self.gamma_start > self.gamma_min
            && self.gamma_min > 0.0
            && self.reduction_factor > 1.0;
        if ok {
            Ok(())
        } else {
            Err(HomotopyError::InvalidSchedule(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error)]
pub enum HomotopyError {
    #[error("invalid homotopy schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid penalty weight alpha = {0}")]
    InvalidAlpha(f64),
    #[error("newton method failed at the first stage (gamma = {gamma:.3e})")]
    FirstStageFailed { gamma: f64 },
}

/// Outcome of one attempted γ-stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub gamma: f64,
    pub converged: bool,
    /// Number of semismooth Newton steps taken at this stage.
    pub newton_iterations: usize,
    pub residual_norm: f64,
    /// CG iterations of the last Newton step.
    pub cg_last: Option<usize>,
    pub diagnostics: Option<SwitchingDiagnostics>,
    pub history: Vec<IterationRecord>,
}

/// Full homotopy result: per-stage records plus the last successful solution.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub stages: Vec<StageRecord>,
    /// Smallest γ at which the Newton method converged.
    pub last_gamma: f64,
    pub control: TimeProfile,
    pub dual: TimeProfile,
    pub diagnostics: SwitchingDiagnostics,
}

impl SolveReport {
    /// Stage record of the last converged stage.
    pub fn last_converged_stage(&self) -> &StageRecord {
        self.stages
            .iter()
            .rev()
            .find(|s| s.converged)
            .expect("report always holds one converged stage")
    }
}

pub fn run_homotopy(
    system: &HeatSystem,
    alpha: f64,
    schedule: &HomotopySchedule,
    settings: &SolverSettings,
) -> Result<SolveReport, HomotopyError> {
    schedule.validate()?;
    let intervals = system.grid().intervals();
    let n = system.geometry().n_controls();
    let mut p = TimeProfile::zeros(intervals, n);
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut last: Option<(f64, FixedGammaSolution)> = None;
    let mut gamma = schedule.gamma_start;

    loop {
        let params =
            PenaltyParams::new(alpha, gamma).map_err(|_| HomotopyError::InvalidAlpha(alpha))?;
        match solve_fixed_gamma(p.clone(), system, &params, settings) {
            Ok(sol) => {
                let diag = switching_diagnostics(&sol.control, &sol.state.p, &params);
                stages.push(StageRecord {
                    gamma,
                    converged: true,
                    newton_iterations: sol.state.iteration,
                    residual_norm: sol.state.residual_norm,
                    cg_last: sol.state.history.last().and_then(|r| r.cg_iterations),
                    diagnostics: Some(diag),
                    history: sol.state.history.clone(),
                });
                p = sol.state.p.clone();
                last = Some((gamma, sol));
                // powers of ten accumulate rounding, so leave slack in the
                // γ_min comparison
                if gamma <= schedule.gamma_min * (1.0 + 1e-9) {
                    break;
                }
                gamma /= schedule.reduction_factor;
            }
            Err(err) => {
                let state = err.state();
                stages.push(StageRecord {
                    gamma,
                    converged: false,
                    newton_iterations: state.iteration,
                    residual_norm: state.residual_norm,
                    cg_last: state.history.last().and_then(|r| r.cg_iterations),
                    diagnostics: None,
                    history: state.history.clone(),
                });
                break;
            }
        }
    }

    let (last_gamma, sol) = last.ok_or(HomotopyError::FirstStageFailed {
        gamma: schedule.gamma_start,
    })?;
    let params = PenaltyParams::new(alpha, last_gamma).unwrap();
    let diagnostics = switching_diagnostics(&sol.control, &sol.state.p, &params);
    Ok(SolveReport {
        stages,
        last_gamma,
        control: sol.control,
        dual: sol.state.p,
        diagnostics,
    })
}
