//! Discrete forward solver S, its homogeneous variant S₀, and the exact
//! algebraic transpose S* for y_t − Δy = Bu on (0,T]×(−1,1)² with Neumann
//! boundary and zero initial data.
//!
//! Time stepping is Crank–Nicolson with piecewise-constant controls:
//! (M + τ/2 K) y^{m+1} = (M − τ/2 K) y^m + τ B u_m. The adjoint is the exact
//! transpose of the discrete map u ↦ observed y — a backward sweep with the
//! same factorization followed by B* — so the adjoint identity holds to
//! rounding and the reduced Newton operator is exactly self-adjoint.

use crate::geometry::{control_centers, ControlGeometry};
use crate::mesh::SpatialMesh;
use crate::sparse::{BandCholesky, CsrMatrix, SparseError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("time grid invalid: horizon {horizon}, {intervals} intervals")]
    InvalidGrid { horizon: f64, intervals: usize },
    #[error("factorization of the time-step matrix failed: {0}")]
    Factorization(#[from] SparseError),
}

/// Uniform time grid on [0, T].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self, SystemError> {
        if !(horizon.is_finite() && horizon > 0.0) || intervals == 0 {
            return Err(SystemError::InvalidGrid { horizon, intervals });
        }
        Ok(Self { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn node_time(&self, m: usize) -> f64 {
        self.tau() * m as f64
    }

    pub fn midpoint_time(&self, m: usize) -> f64 {
        self.tau() * (m as f64 + 0.5)
    }
}

/// Interval-wise values in ℝ^{M×N}, row-major by time interval. Used for both
/// controls u and the dual variable p.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeProfile {
    intervals: usize,
    components: usize,
    data: Vec<f64>,
}

pub type ControlTrajectory = TimeProfile;
pub type DualTrajectory = TimeProfile;

impl TimeProfile {
    pub fn zeros(intervals: usize, components: usize) -> Self {
        Self { intervals, components, data: vec![0.0; intervals * components] }
    }

    pub fn from_fn(
        intervals: usize,
        components: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut p = Self::zeros(intervals, components);
        for m in 0..intervals {
            for i in 0..components {
                p.data[m * components + i] = f(m, i);
            }
        }
        p
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.data[m * self.components..(m + 1) * self.components]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.components..(m + 1) * self.components]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// self + scale · other.
    pub fn add_scaled(&self, scale: f64, other: &Self) -> Self {
        debug_assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self { intervals: self.intervals, components: self.components, data }
    }

    pub fn axpy(&mut self, scale: f64, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn negated(&self) -> Self {
        let data = self.data.iter().map(|a| -a).collect();
        Self { intervals: self.intervals, components: self.components, data }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Discrete L²(0,T;ℝ^N) norm: sqrt(τ Σ_m |v_m|²).
    pub fn weighted_norm(&self, tau: f64) -> f64 {
        (tau * self.dot(self)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }
}

/// Nodal state values at the M+1 time nodes, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    n_nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl StateTrajectory {
    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        Self { n_nodes, dim, data: vec![0.0; n_nodes * dim] }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn node_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.dim..(m + 1) * self.dim]
    }

    /// Immutable node m together with mutable node m+1.
    fn step_pair_mut(&mut self, m: usize) -> (&[f64], &mut [f64]) {
        let (head, tail) = self.data.split_at_mut((m + 1) * self.dim);
        (&head[m * self.dim..], &mut tail[..self.dim])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Nodal interpolation of the target Σ_{i=1..N} cos(i+t) sin²(2πt/T) |x−x_i|².
pub fn target_yd(grid: &TimeGrid, mesh: &SpatialMesh, n: usize) -> StateTrajectory {
    let centers = control_centers(n);
    let mut yd = StateTrajectory::zeros(grid.intervals() + 1, mesh.n_vertices());
    for m in 0..=grid.intervals() {
        let t = grid.node_time(m);
        let envelope = (2.0 * std::f64::consts::PI * t / grid.horizon()).sin().powi(2);
        let node = yd.node_mut(m);
        for (k, x) in mesh.vertices().iter().enumerate() {
            let mut v = 0.0;
            for (i, c) in centers.iter().enumerate() {
                let dx = x[0] - c[0];
                let dy = x[1] - c[1];
                v += ((i + 1) as f64 + t).cos() * envelope * (dx * dx + dy * dy);
            }
            node[k] = v;
        }
    }
    yd
}

/// The assembled discrete problem: mesh, geometry, time grid, target, and the
/// factorized Crank–Nicolson step matrix. Immutable after construction and
/// shareable across threads; each sweep allocates its own workspace.
#[derive(Debug)]
pub struct HeatSystem {
    mesh: SpatialMesh,
    geometry: ControlGeometry,
    grid: TimeGrid,
    target: StateTrajectory,
    /// Cholesky factor of M + (τ/2)K, reused by every forward and adjoint step.
    lhs: BandCholesky,
    /// M − (τ/2)K.
    rhs_op: CsrMatrix,
    /// Trapezoidal weights w_0 = w_M = τ/2, w_m = τ otherwise.
    time_weights: Vec<f64>,
    /// M·1, for the mass-balance functional 1ᵀM y.
    mass_times_one: Vec<f64>,
}

impl HeatSystem {
    pub fn new(
        mesh: SpatialMesh,
        geometry: ControlGeometry,
        grid: TimeGrid,
    ) -> Result<Self, SystemError> {
        let target = target_yd(&grid, &mesh, geometry.n_controls());
        Self::with_target(mesh, geometry, grid, target)
    }

    pub fn with_target(
        mesh: SpatialMesh,
        geometry: ControlGeometry,
        grid: TimeGrid,
        target: StateTrajectory,
    ) -> Result<Self, SystemError> {
        assert_eq!(target.n_nodes(), grid.intervals() + 1);
        assert_eq!(target.dim(), mesh.n_vertices());
        let tau = grid.tau();
        let lhs_mat = CsrMatrix::linear_combination(1.0, mesh.mass(), tau / 2.0, mesh.stiffness());
        let rhs_op = CsrMatrix::linear_combination(1.0, mesh.mass(), -tau / 2.0, mesh.stiffness());
        let lhs = BandCholesky::factor(&lhs_mat)?;
        let m = grid.intervals();
        let mut time_weights = vec![tau; m + 1];
        time_weights[0] = tau / 2.0;
        time_weights[m] = tau / 2.0;
        let ones = vec![1.0; mesh.n_vertices()];
        let mass_times_one = mesh.mass().mul(&ones);
        Ok(Self { mesh, geometry, grid, target, lhs, rhs_op, time_weights, mass_times_one })
    }

    pub fn mesh(&self) -> &SpatialMesh {
        &self.mesh
    }

    pub fn geometry(&self) -> &ControlGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn target(&self) -> &StateTrajectory {
        &self.target
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Forward sweep y = S u with y⁰ = 0.
    pub fn apply_s(&self, u: &TimeProfile) -> StateTrajectory {
        let m = self.grid.intervals();
        let nv = self.mesh.n_vertices();
        assert_eq!(u.intervals(), m, "control has wrong number of intervals");
        assert_eq!(u.components(), self.geometry.n_controls(), "control component mismatch");
        let tau = self.grid.tau();
        let mut y = StateTrajectory::zeros(m + 1, nv);
        let mut rhs = vec![0.0; nv];
        for step in 0..m {
            {
                let (prev, _) = y.step_pair_mut(step);
                self.rhs_op.mul_into(prev, &mut rhs);
            }
            let mut load = vec![0.0; nv];
            self.geometry.accumulate_load(u.slice(step), &mut load);
            for (r, l) in rhs.iter_mut().zip(&load) {
                *r += tau * l;
            }
            self.lhs.solve_in_place(&mut rhs);
            let (_, next) = y.step_pair_mut(step);
            next.copy_from_slice(&rhs);
        }
        y
    }

    /// The homogeneous solution operator S₀. With zero initial data and a
    /// linear equation it coincides with S; kept as a named operation so the
    /// Newton step reads like the reduced optimality system.
    pub fn apply_s0(&self, u: &TimeProfile) -> StateTrajectory {
        self.apply_s(u)
    }

    /// Exact transpose of u ↦ observed y: backward sweep with loads
    /// w_m M_obs r^m followed by B*. The m = 0 slot of r never enters
    /// because y⁰ is fixed at zero.
    pub fn apply_sstar(&self, r: &StateTrajectory) -> TimeProfile {
        let m = self.grid.intervals();
        let nv = self.mesh.n_vertices();
        assert_eq!(r.n_nodes(), m + 1, "residual trajectory has wrong node count");
        assert_eq!(r.dim(), nv, "residual trajectory has wrong dimension");
        let n = self.geometry.n_controls();
        let mut p = TimeProfile::zeros(m, n);
        let mut lambda = vec![0.0; nv];
        let mut rhs = vec![0.0; nv];
        let mut obs = vec![0.0; nv];
        for step in (1..=m).rev() {
            self.rhs_op.mul_into(&lambda, &mut rhs);
            self.geometry.obs_mass().mul_into(r.node(step), &mut obs);
            let w = self.time_weights[step];
            for (dst, o) in rhs.iter_mut().zip(&obs) {
                *dst += w * o;
            }
            self.lhs.solve_in_place(&mut rhs);
            lambda.copy_from_slice(&rhs);
            self.geometry.project_loads(&lambda, p.slice_mut(step - 1));
        }
        p
    }

    /// y − y^d.
    pub fn subtract_target(&self, y: &StateTrajectory) -> StateTrajectory {
        let mut out = y.clone();
        for (a, b) in out.data_mut().iter_mut().zip(self.target.data()) {
            *a -= b;
        }
        out
    }

    /// ½ Σ_m w_m (y^m − y^d_m)ᵀ M_obs (y^m − y^d_m).
    pub fn tracking_value(&self, y: &StateTrajectory) -> f64 {
        let mut acc = 0.0;
        let mut diff = vec![0.0; self.mesh.n_vertices()];
        for m in 0..y.n_nodes() {
            for ((d, a), b) in diff.iter_mut().zip(y.node(m)).zip(self.target.node(m)) {
                *d = a - b;
            }
            acc += self.time_weights[m] * self.geometry.obs_mass().bilinear(&diff, &diff);
        }
        0.5 * acc
    }

    /// Σ_m w_m a^mᵀ M_obs b^m — the observation-space inner product.
    pub fn obs_inner(&self, a: &StateTrajectory, b: &StateTrajectory) -> f64 {
        let mut acc = 0.0;
        for m in 0..a.n_nodes() {
            acc += self.time_weights[m] * self.geometry.obs_mass().bilinear(a.node(m), b.node(m));
        }
        acc
    }

    /// Tracking term plus the switching penalty (α/2) τ Σ_m |u_m|₁².
    pub fn evaluate_objective(&self, u: &TimeProfile, alpha: f64) -> f64 {
        let y = self.apply_s(u);
        let tau = self.grid.tau();
        let mut penalty = 0.0;
        for m in 0..u.intervals() {
            let l1: f64 = u.slice(m).iter().map(|x| x.abs()).sum();
            penalty += l1 * l1;
        }
        self.tracking_value(&y) + 0.5 * alpha * tau * penalty
    }

    /// Relative defect of the discrete balance 1ᵀM y^M = τ Σ_m Σ_i u_mi |ω_i|,
    /// with the discrete domain measures |ω_i| = Σ_k (b_i)_k. Exact for
    /// Crank–Nicolson with pure Neumann data up to rounding.
    pub fn mass_balance_residual(&self, u: &TimeProfile, y: &StateTrajectory) -> f64 {
        let tau = self.grid.tau();
        let final_mass: f64 = self
            .mass_times_one
            .iter()
            .zip(y.node(y.n_nodes() - 1))
            .map(|(a, b)| a * b)
            .sum();
        let mut injected = 0.0;
        for m in 0..u.intervals() {
            for (i, v) in u.slice(m).iter().enumerate() {
                injected += tau * v * self.geometry.domain_measure(i);
            }
        }
        (final_mass - injected).abs() / final_mass.abs().max(1.0)
    }
}
