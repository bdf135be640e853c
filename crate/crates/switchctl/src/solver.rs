//! Fixed-γ semismooth Newton solver for the reduced optimality system
//!
//!   F(p) = p + S*(S H_γ(p) − y^d) = 0,
//!
//! where H_γ applies the regularized subdifferential slice by slice. Each
//! Newton step solves (I + S*S₀ D) δp = −F(p) matrix-free with CG in the
//! inner product generated by the block-diagonal Newton derivative D, followed
//! by a backtracking line search on the residual norm.
//!
//! D is positive semidefinite with kernel spanned by the inactive components
//! of each slice. On that kernel the Newton operator reduces to the identity,
//! so CG runs on the active subspace only and the kernel part of δp is
//! assigned directly from the right-hand side.

use crate::prox::{hgamma, newton_derivative, prox_gstar, PenaltyParams};
use crate::system::{HeatSystem, TimeProfile};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    pub newton_tol_rel: f64,
    pub newton_max_iter: usize,
    pub cg_tol_rel: f64,
    pub cg_max_iter: usize,
    pub linesearch_factor: f64,
    pub linesearch_max: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            newton_tol_rel: 1e-6,
            newton_max_iter: 30,
            cg_tol_rel: 1e-6,
            cg_max_iter: 50,
            linesearch_factor: 0.5,
            linesearch_max: 20,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.newton_tol_rel > 0.0 && self.cg_tol_rel > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.newton_max_iter == 0 || self.cg_max_iter == 0 || self.linesearch_max == 0 {
            return Err("iteration limits must be positive".into());
        }
        if !(self.linesearch_factor > 0.0 && self.linesearch_factor < 1.0) {
            return Err("line search factor must lie in (0,1)".into());
        }
        Ok(())
    }
}

/// One row of the Newton history. Iterate 0 carries only the residual.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub step_size: Option<f64>,
    pub cg_iterations: Option<usize>,
    /// Number of intervals whose set of nonzero control components changed
    /// relative to the previous iterate.
    pub active_changes: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct NewtonState {
    pub p: TimeProfile,
    pub residual_norm: f64,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("newton method did not converge in {} iterations (residual {:.3e})",
            .0.iteration, .0.residual_norm)]
    NotConverged(Box<NewtonState>),
    #[error("line search failed after iteration {} (residual {:.3e})",
            .0.iteration, .0.residual_norm)]
    LineSearchFailed(Box<NewtonState>),
}

impl SolveError {
    pub fn state(&self) -> &NewtonState {
        match self {
            SolveError::NotConverged(s) | SolveError::LineSearchFailed(s) => s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedGammaSolution {
    pub state: NewtonState,
    /// The regularized control u_γ = H_γ(p) at the final iterate.
    pub control: TimeProfile,
}

/// H_γ(p): the regularized control, slice by slice.
pub fn control_from_dual(params: &PenaltyParams, p: &TimeProfile) -> TimeProfile {
    let mut u = TimeProfile::zeros(p.intervals(), p.components());
    for m in 0..p.intervals() {
        u.slice_mut(m).copy_from_slice(&hgamma(p.slice(m), params));
    }
    u
}

/// Residual of the reduced optimality system: F(p) = p + S*(S H_γ(p) − y^d).
pub fn residual_f(system: &HeatSystem, params: &PenaltyParams, p: &TimeProfile) -> TimeProfile {
    let u = control_from_dual(params, p);
    let y = system.apply_s(&u);
    let misfit = system.subtract_target(&y);
    let back = system.apply_sstar(&misfit);
    p.add_scaled(1.0, &back)
}

/// Slice-wise Newton derivative D = D_N H_γ(p), block diagonal in time.
#[derive(Debug, Clone)]
pub struct DerivativeBlocks {
    blocks: Vec<DMatrix<f64>>,
    active: Vec<Vec<usize>>,
}

impl DerivativeBlocks {
    pub fn compute(params: &PenaltyParams, p: &TimeProfile) -> Self {
        let mut blocks = Vec::with_capacity(p.intervals());
        let mut active = Vec::with_capacity(p.intervals());
        for m in 0..p.intervals() {
            let q = p.slice(m);
            blocks.push(newton_derivative(q, params));
            active.push(prox_gstar(q, params).active_set);
        }
        Self { blocks, active }
    }

    pub fn block(&self, m: usize) -> &DMatrix<f64> {
        &self.blocks[m]
    }

    pub fn active_set(&self, m: usize) -> &[usize] {
        &self.active[m]
    }

    /// D v, slice by slice.
    pub fn apply(&self, v: &TimeProfile) -> TimeProfile {
        let mut out = TimeProfile::zeros(v.intervals(), v.components());
        for m in 0..v.intervals() {
            let vm = v.slice(m);
            let block = &self.blocks[m];
            let om = out.slice_mut(m);
            for &j in &self.active[m] {
                let mut acc = 0.0;
                for &i in &self.active[m] {
                    acc += block[(j, i)] * vm[i];
                }
                om[j] = acc;
            }
        }
        out
    }

    /// Keeps the entries on the active components, zeroes the rest.
    pub fn project_active(&self, v: &TimeProfile) -> TimeProfile {
        let mut out = TimeProfile::zeros(v.intervals(), v.components());
        for m in 0..v.intervals() {
            let vm = v.slice(m);
            let om = out.slice_mut(m);
            for &j in &self.active[m] {
                om[j] = vm[j];
            }
        }
        out
    }

    /// Zeroes the entries on the active components, in place.
    fn zero_active(&self, v: &mut TimeProfile) {
        for m in 0..v.intervals() {
            let vm = v.slice_mut(m);
            for &j in &self.active[m] {
                vm[j] = 0.0;
            }
        }
    }

    /// ⟨a, b⟩_D = τ Σ_m a_mᵀ D_m b_m, the inner product generated by D.
    pub fn weighted_inner(&self, a: &TimeProfile, b: &TimeProfile, tau: f64) -> f64 {
        let mut acc = 0.0;
        for m in 0..a.intervals() {
            let am = a.slice(m);
            let bm = b.slice(m);
            let block = &self.blocks[m];
            for &j in &self.active[m] {
                let mut row = 0.0;
                for &i in &self.active[m] {
                    row += block[(j, i)] * bm[i];
                }
                acc += am[j] * row;
            }
        }
        tau * acc
    }
}

/// The Newton operator of the reduced step: dp + S*(obs(S₀(D dp))).
pub fn newton_apply(
    system: &HeatSystem,
    blocks: &DerivativeBlocks,
    dp: &TimeProfile,
) -> TimeProfile {
    let v = blocks.apply(dp);
    let y = system.apply_s0(&v);
    let back = system.apply_sstar(&y);
    dp.add_scaled(1.0, &back)
}

/// Solves (I + S*S₀D) δp = rhs by CG in the D-inner product on the active
/// subspace; on the kernel of D the operator is the identity, so that part of
/// δp is set directly from rhs − S*S₀D δp_active. Returns (δp, CG iterations).
/// CG convergence is monitored in the τ-weighted Euclidean residual norm.
pub fn solve_newton_step(
    system: &HeatSystem,
    blocks: &DerivativeBlocks,
    rhs: &TimeProfile,
    settings: &SolverSettings,
) -> (TimeProfile, usize) {
    let tau = system.grid().tau();
    let b_active = blocks.project_active(rhs);
    let mut x = TimeProfile::zeros(rhs.intervals(), rhs.components());
    let mut iterations = 0;

    let r0_norm = b_active.weighted_norm(tau);
    if r0_norm > 0.0 {
        let mut r = b_active.clone();
        let mut rho = blocks.weighted_inner(&r, &r, tau);
        let mut dir = r.clone();
        while iterations < settings.cg_max_iter && rho > 0.0 {
            let coupled = {
                let v = blocks.apply(&dir);
                let y = system.apply_s0(&v);
                let back = system.apply_sstar(&y);
                blocks.project_active(&back)
            };
            let a_dir = dir.add_scaled(1.0, &coupled);
            let denom = blocks.weighted_inner(&dir, &a_dir, tau);
            if !(denom > 0.0) {
                break;
            }
            let alpha = rho / denom;
            x.axpy(alpha, &dir);
            r.axpy(-alpha, &a_dir);
            iterations += 1;
            if r.weighted_norm(tau) <= settings.cg_tol_rel * r0_norm {
                break;
            }
            let rho_next = blocks.weighted_inner(&r, &r, tau);
            if !(rho_next > 0.0) {
                break;
            }
            let beta = rho_next / rho;
            let mut next_dir = r.clone();
            next_dir.axpy(beta, &dir);
            dir = next_dir;
            rho = rho_next;
        }
    }

    // kernel completion: δp = x + P_K(rhs − S*S₀ D x)
    let mut dp = if x.data().iter().any(|&v| v != 0.0) {
        let v = blocks.apply(&x);
        let y = system.apply_s0(&v);
        let back = system.apply_sstar(&y);
        let mut kernel = rhs.add_scaled(-1.0, &back);
        blocks.zero_active(&mut kernel);
        kernel
    } else {
        let mut kernel = rhs.clone();
        blocks.zero_active(&mut kernel);
        kernel
    };
    dp.axpy(1.0, &x);
    (dp, iterations)
}

/// Backtracking line search on the residual norm: accepts the largest step in
/// {1, 1/2, 1/4, …} that strictly decreases ‖F‖, or gives up after
/// `linesearch_max` trials.
pub fn line_search(
    system: &HeatSystem,
    params: &PenaltyParams,
    p: &TimeProfile,
    dp: &TimeProfile,
    current_norm: f64,
    settings: &SolverSettings,
) -> Option<(TimeProfile, f64, TimeProfile, f64)> {
    let tau = system.grid().tau();
    let mut step = 1.0;
    for _ in 0..settings.linesearch_max {
        let cand = p.add_scaled(step, dp);
        let f = residual_f(system, params, &cand);
        let norm = f.weighted_norm(tau);
        if norm < current_norm {
            return Some((cand, step, f, norm));
        }
        step *= settings.linesearch_factor;
    }
    None
}

/// Bitmask of nonzero control components per interval.
fn control_support(u: &TimeProfile) -> Vec<u64> {
    assert!(u.components() <= 64);
    (0..u.intervals())
        .map(|m| {
            u.slice(m)
                .iter()
                .enumerate()
                .fold(0u64, |mask, (i, &v)| if v != 0.0 { mask | (1 << i) } else { mask })
        })
        .collect()
}

/// Newton iteration at fixed γ, stopping at ‖F‖ ≤ tol_rel ‖F(p⁰)‖.
pub fn solve_fixed_gamma(
    p0: TimeProfile,
    system: &HeatSystem,
    params: &PenaltyParams,
    settings: &SolverSettings,
) -> Result<FixedGammaSolution, SolveError> {
    let tau = system.grid().tau();
    let mut p = p0;
    let mut f = residual_f(system, params, &p);
    let f0 = f.weighted_norm(tau);
    let mut norm = f0;
    let mut history = vec![IterationRecord {
        iteration: 0,
        residual_norm: f0,
        step_size: None,
        cg_iterations: None,
        active_changes: None,
    }];
    let mut support = control_support(&control_from_dual(params, &p));

    if f0 == 0.0 {
        let control = control_from_dual(params, &p);
        return Ok(FixedGammaSolution {
            state: NewtonState { p, residual_norm: 0.0, iteration: 0, history },
            control,
        });
    }

    for k in 1..=settings.newton_max_iter {
        let blocks = DerivativeBlocks::compute(params, &p);
        let rhs = f.negated();
        let (dp, cg_iterations) = solve_newton_step(system, &blocks, &rhs, settings);
        let Some((p_next, step, f_next, norm_next)) =
            line_search(system, params, &p, &dp, norm, settings)
        else {
            return Err(SolveError::LineSearchFailed(Box::new(NewtonState {
                p,
                residual_norm: norm,
                iteration: k - 1,
                history,
            })));
        };
        let u_next = control_from_dual(params, &p_next);
        let support_next = control_support(&u_next);
        let active_changes = support
            .iter()
            .zip(&support_next)
            .filter(|(a, b)| a != b)
            .count();
        history.push(IterationRecord {
            iteration: k,
            residual_norm: norm_next,
            step_size: Some(step),
            cg_iterations: Some(cg_iterations),
            active_changes: Some(active_changes),
        });
        p = p_next;
        f = f_next;
        norm = norm_next;
        support = support_next;
        if norm <= settings.newton_tol_rel * f0 {
            return Ok(FixedGammaSolution {
                state: NewtonState { p, residual_norm: norm, iteration: k, history },
                control: u_next,
            });
        }
    }

    Err(SolveError::NotConverged(Box::new(NewtonState {
        p,
        residual_norm: norm,
        iteration: settings.newton_max_iter,
        history,
    })))
}

/// Per-interval switching structure of a solution pair (u, p).
#[derive(Debug, Clone, Serialize)]
pub struct SwitchingDiagnostics {
    /// tau_counts[j−1] = number of intervals on which exactly j components
    /// are clamped by the proximal mapping.
    pub tau_counts: Vec<usize>,
    /// Sign changes of the dominant adjoint component, counted only between
    /// intervals whose maximizer is unique (d = 1 on both sides).
    pub switch_points: usize,
    /// Components whose control value is zero on every interval.
    pub never_active: Vec<bool>,
}

impl SwitchingDiagnostics {
    /// Number of intervals with exactly j active components (1-based j).
    pub fn tau(&self, j: usize) -> usize {
        self.tau_counts.get(j - 1).copied().unwrap_or(0)
    }
}

pub fn switching_diagnostics(
    u: &TimeProfile,
    p: &TimeProfile,
    params: &PenaltyParams,
) -> SwitchingDiagnostics {
    let n = p.components();
    let mut tau_counts = vec![0usize; n];
    let mut dominant: Vec<Option<usize>> = Vec::with_capacity(p.intervals());
    for m in 0..p.intervals() {
        let prox = prox_gstar(p.slice(m), params);
        tau_counts[prox.d - 1] += 1;
        dominant.push(if prox.d == 1 { Some(prox.active_set[0]) } else { None });
    }
    let mut switch_points = 0;
    for m in 1..p.intervals() {
        if let (Some(a), Some(b)) = (dominant[m - 1], dominant[m]) {
            if a != b {
                switch_points += 1;
            }
        }
    }
    let mut never_active = vec![true; n];
    for m in 0..u.intervals() {
        for (i, &v) in u.slice(m).iter().enumerate() {
            if v != 0.0 {
                never_active[i] = false;
            }
        }
    }
    SwitchingDiagnostics { tau_counts, switch_points, never_active }
}
