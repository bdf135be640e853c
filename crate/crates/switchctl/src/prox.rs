//! Pointwise convex-analysis kernels for the switching penalty g(v) = (α/2)|v|₁².
//!
//! The Fenchel conjugate is g*(q) = (1/2α)|q|∞², whose proximal mapping clamps
//! the d largest components of q to a common magnitude. All kernels operate on
//! a single time slice q ∈ ℝ^N; looping over time slices is the caller's job.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProxError {
    #[error("dimension mismatch: q has {expected} components, u has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid penalty parameter: {0}")]
    InvalidParameter(String),
}

/// Penalty weight α and Moreau–Yosida parameter γ, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl PenaltyParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self, ProxError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ProxError::InvalidParameter(format!("alpha = {alpha}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ProxError::InvalidParameter(format!("gamma = {gamma}")));
        }
        Ok(Self { alpha, gamma })
    }
}

/// Value of prox_{γg*} at one slice, together with the clamped index set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    /// The proximal point: clamped on `active_set`, pass-through elsewhere.
    pub w: Vec<f64>,
    /// Number of clamped components (1 ≤ d ≤ N).
    pub d: usize,
    /// Indices of the clamped components, ascending.
    pub active_set: Vec<usize>,
}

impl ProxResult {
    /// Shared magnitude of the clamped components.
    pub fn clamp_level(&self) -> f64 {
        self.w[self.active_set[0]].abs()
    }
}

fn sign(x: f64) -> f64 {
    // sign(0) = 0 so that hgamma(0) = 0 and the Newton derivative keeps
    // zero off-diagonal couplings for zero components.
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// g(v) = (α/2)(Σ|v_i|)².
pub fn g_value(v: &[f64], alpha: f64) -> f64 {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    0.5 * alpha * l1 * l1
}

/// g*(q) = (1/2α)(max_i |q_i|)².
pub fn gstar_value(q: &[f64], alpha: f64) -> f64 {
    let linf = q.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    linf * linf / (2.0 * alpha)
}

/// Membership test u ∈ ∂g*(q), with all comparisons within `tol`.
///
/// Componentwise characterization: u_j = q_j/α at a unique maximizer of |q_i|,
/// u_j = 0 at non-maximal components, and on ties u_j = (s_j/α) q_j with
/// s_j ≥ 0 summing to one over the tied set.
pub fn subdiff_contains(q: &[f64], u: &[f64], alpha: f64, tol: f64) -> Result<bool, ProxError> {
    if q.len() != u.len() {
        return Err(ProxError::DimensionMismatch {
            expected: q.len(),
            found: u.len(),
        });
    }
    let mx = q.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if mx <= tol {
        // ∂g*(0) = {0}
        return Ok(u.iter().all(|x| x.abs() <= tol));
    }
    let tied: Vec<usize> = (0..q.len()).filter(|&j| q[j].abs() >= mx - tol).collect();
    for j in 0..q.len() {
        if !tied.contains(&j) && u[j].abs() > tol {
            return Ok(false);
        }
    }
    if tied.len() == 1 {
        let j = tied[0];
        return Ok((u[j] - q[j] / alpha).abs() <= tol);
    }
    // Tie case: each equation u_j = (s_j/α) q_j determines s_j, so the least
    // squares fit degenerates to s_j = α u_j / q_j; check the simplex side
    // conditions. Tolerances are rescaled by α/mx, the u → s sensitivity.
    let s_tol = tol * (1.0 + alpha / mx);
    let mut sum = 0.0;
    for &j in &tied {
        let s_j = alpha * u[j] / q[j];
        if s_j < -s_tol {
            return Ok(false);
        }
        sum += s_j;
    }
    Ok((sum - 1.0).abs() <= s_tol * tied.len() as f64)
}

/// prox_{γg*}(q): sort by decreasing magnitude, find the smallest d with
/// |q_(d+1)| < (α/(dα+γ)) Σ_{i≤d} |q_(i)| (d = N if none), then clamp the
/// first d sorted components to that common level. O(N log N).
pub fn prox_gstar(q: &[f64], params: &PenaltyParams) -> ProxResult {
    let n = q.len();
    assert!(n >= 1, "prox_gstar needs at least one component");
    let PenaltyParams { alpha, gamma } = *params;

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps tie order deterministic; the clamped value itself is
    // tie-independent.
    order.sort_by(|&a, &b| q[b].abs().total_cmp(&q[a].abs()));

    let mut prefix = 0.0;
    let mut d = n;
    for k in 1..=n {
        prefix += q[order[k - 1]].abs();
        if k < n {
            let level = alpha / (k as f64 * alpha + gamma) * prefix;
            if q[order[k]].abs() < level {
                d = k;
                break;
            }
        }
    }
    let sum_d: f64 = order[..d].iter().map(|&j| q[j].abs()).sum();
    let level = alpha / (d as f64 * alpha + gamma) * sum_d;

    let mut w = q.to_vec();
    let mut active_set: Vec<usize> = order[..d].to_vec();
    active_set.sort_unstable();
    for &j in &active_set {
        w[j] = sign(q[j]) * level;
    }
    ProxResult { w, d, active_set }
}

/// Moreau–Yosida regularized subdifferential h_γ(q) = (q − prox_{γg*}(q))/γ;
/// equals the regularized control value for the adjoint slice q.
///
/// Evaluated in the algebraically equivalent form
///   u_j = α Σ_{i∈A}(|q_j| − |q_i|) / (γ(dα+γ)) + q_j/(dα+γ)   for active j,
/// which avoids the cancellation in (q_j − w_j)/γ when γ ≪ |q_j|. For d = 1
/// this reduces to u_j = q_j/(α+γ) exactly.
pub fn hgamma(q: &[f64], params: &PenaltyParams) -> Vec<f64> {
    let PenaltyParams { alpha, gamma } = *params;
    let prox = prox_gstar(q, params);
    let d = prox.d as f64;
    let denom = d * alpha + gamma;
    let mut u = vec![0.0; q.len()];
    for &j in &prox.active_set {
        let spread: f64 = prox
            .active_set
            .iter()
            .map(|&i| q[j].abs() - q[i].abs())
            .sum();
        u[j] = sign(q[j]) * alpha * spread / (gamma * denom) + q[j] / denom;
    }
    u
}

/// A Newton derivative of h_γ at q: on the clamped set the block is
/// ((d−1)α+γ)/(γ(dα+γ)) on the diagonal and −α sign(q_j q_i)/(γ(dα+γ))
/// off the diagonal; zero on rows/columns of pass-through components.
/// Symmetric positive semidefinite with eigenvalues 1/γ and 1/(dα+γ).
pub fn newton_derivative(q: &[f64], params: &PenaltyParams) -> DMatrix<f64> {
    let PenaltyParams { alpha, gamma } = *params;
    let n = q.len();
    let prox = prox_gstar(q, params);
    let d = prox.d as f64;
    let denom = gamma * (d * alpha + gamma);
    let diag = ((d - 1.0) * alpha + gamma) / denom;
    let off = -alpha / denom;
    let mut m = DMatrix::zeros(n, n);
    for &j in &prox.active_set {
        for &i in &prox.active_set {
            if i == j {
                m[(j, j)] = diag;
            } else {
                m[(j, i)] = off * sign(q[j]) * sign(q[i]);
            }
        }
    }
    m
}
