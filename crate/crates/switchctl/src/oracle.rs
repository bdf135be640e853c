//! Independent brute-force verifiers used by the test suite: an active-set
//! enumeration oracle for the proximal mapping, a grid oracle for the Fenchel
//! conjugate, a dense direct solver for the reduced Newton system, and a
//! proximal-gradient reference solver for tiny instances.
//!
//! Nothing in this module calls the solver kernels it is meant to verify;
//! it relies only on the discrete heat system and elementary arithmetic.
//! Everything here is exponential or dense by design and meant for small N.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::system::{HeatSystem, TimeProfile};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dense newton matrix is singular")]
    SingularMatrix,
}

fn prox_objective(w: &[f64], q: &[f64], alpha: f64, gamma: f64) -> f64 {
    let dist2: f64 = w.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    let linf = w.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    dist2 / (2.0 * gamma) + linf * linf / (2.0 * alpha)
}

/// Brute-force minimizer of w ↦ (1/2γ)|w−q|₂² + (1/2α)|w|∞².
///
/// Enumerates all 2^N − 1 nonempty candidate clamp sets: on the set all
/// components share the magnitude (α/(kα+γ)) Σ_{i∈A}|q_i| with the signs of q,
/// off the set they pass through. The candidate with the least objective wins.
/// Exponential in N; intended for N ≤ 8.
pub fn prox_oracle(q: &[f64], alpha: f64, gamma: f64) -> Vec<f64> {
    let n = q.len();
    assert!(n >= 1 && n <= 20, "prox_oracle is exponential in N");
    let mut best = q.to_vec();
    let mut best_val = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as f64;
        let sum: f64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| q[i].abs())
            .sum();
        let level = alpha / (k * alpha + gamma) * sum;
        let mut w = q.to_vec();
        for i in 0..n {
            if mask & (1 << i) != 0 {
                w[i] = level * if q[i] > 0.0 { 1.0 } else if q[i] < 0.0 { -1.0 } else { 0.0 };
            }
        }
        let val = prox_objective(&w, q, alpha, gamma);
        if val < best_val {
            best_val = val;
            best = w;
        }
    }
    best
}

/// Grid lower bound for g*(q) = sup_v ⟨q,v⟩ − (α/2)|v|₁², over the cube
/// [−radius, radius]^N with `points` nodes per axis. Converges to the
/// conjugate from below under grid refinement. Intended for N ≤ 3.
pub fn conjugate_oracle(q: &[f64], alpha: f64, grid_radius: f64, grid_points: usize) -> f64 {
    let n = q.len();
    assert!(n >= 1 && n <= 3, "conjugate_oracle grids are exponential in N");
    assert!(grid_points >= 2);
    let h = 2.0 * grid_radius / (grid_points - 1) as f64;
    let coord = |k: usize| -grid_radius + k as f64 * h;
    let mut sup = f64::NEG_INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let mut ip = 0.0;
        let mut l1 = 0.0;
        for (dim, &k) in idx.iter().enumerate() {
            let v = coord(k);
            ip += q[dim] * v;
            l1 += v.abs();
        }
        sup = sup.max(ip - 0.5 * alpha * l1 * l1);
        // odometer increment
        let mut dim = 0;
        loop {
            if dim == n {
                return sup;
            }
            idx[dim] += 1;
            if idx[dim] < grid_points {
                break;
            }
            idx[dim] = 0;
            dim += 1;
        }
    }
}

/// Direct dense solve of the reduced Newton system (I + S*S₀D) δp = rhs.
///
/// S*S₀ is assembled column by column by applying the forward and adjoint
/// sweeps to unit vectors, so the only shared code with the matrix-free path
/// is the heat system itself. The per-slice derivative blocks are supplied by
/// the caller. Intended for M·N ≤ 60.
pub fn dense_newton_oracle(
    system: &HeatSystem,
    d_blocks: &[DMatrix<f64>],
    rhs: &TimeProfile,
) -> Result<TimeProfile, OracleError> {
    let m = rhs.intervals();
    let n = rhs.components();
    let dim = m * n;
    assert!(dim <= 60, "dense oracle limited to M*N <= 60");
    assert_eq!(d_blocks.len(), m);

    // Dense matrix of v ↦ S*(obs(S₀ v)).
    let mut gmat = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut e = TimeProfile::zeros(m, n);
        e.data_mut()[col] = 1.0;
        let y = system.apply_s0(&e);
        let back = system.apply_sstar(&y);
        for row in 0..dim {
            gmat[(row, col)] = back.data()[row];
        }
    }
    // Block-diagonal D.
    let mut dmat = DMatrix::zeros(dim, dim);
    for (k, block) in d_blocks.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                dmat[(k * n + j, k * n + i)] = block[(j, i)];
            }
        }
    }
    let a = DMatrix::identity(dim, dim) + gmat * dmat;
    let b = DVector::from_column_slice(rhs.data());
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(OracleError::SingularMatrix)?;
    let mut out = TimeProfile::zeros(m, n);
    out.data_mut().copy_from_slice(x.as_slice());
    Ok(out)
}

/// Objective of the regularized problem: tracking + g-penalty + (γ/2)‖u‖²
/// in the τ-weighted control norm.
pub fn regularized_objective(system: &HeatSystem, u: &TimeProfile, alpha: f64, gamma: f64) -> f64 {
    let tau = system.grid().tau();
    let quad: f64 = u.data().iter().map(|x| x * x).sum();
    system.evaluate_objective(u, alpha) + 0.5 * gamma * tau * quad
}

/// prox of σ·[(α/2)|·|₁² + (γ/2)|·|₂²] per slice, via the Moreau identity and
/// `prox_oracle`: with c = σγ, x = v/(1+c), λ = σα/(1+c) the value is
/// x − λ prox_oracle(x/λ; α=λ, γ=1).
fn prox_penalty_slice(v: &[f64], sigma: f64, alpha: f64, gamma: f64) -> Vec<f64> {
    let c = sigma * gamma;
    let lambda = sigma * alpha / (1.0 + c);
    let x: Vec<f64> = v.iter().map(|a| a / (1.0 + c)).collect();
    let scaled: Vec<f64> = x.iter().map(|a| a / lambda).collect();
    let p = prox_oracle(&scaled, lambda, 1.0);
    x.iter().zip(&p).map(|(a, b)| a - lambda * b).collect()
}

/// Proximal-gradient reference solver for the regularized problem, entirely
/// independent of the Newton path. Backtracks the step until the standard
/// quadratic upper bound holds, which makes the objective non-increasing.
pub fn proxgrad_reference(
    system: &HeatSystem,
    alpha: f64,
    gamma: f64,
    iterations: usize,
) -> TimeProfile {
    let m = system.grid().intervals();
    let n = system.geometry().n_controls();
    let tau = system.grid().tau();
    let mut u = TimeProfile::zeros(m, n);
    let mut sigma = 1.0 / alpha.max(1e-12);

    let tracking = |u: &TimeProfile| -> f64 {
        let y = system.apply_s(u);
        system.tracking_value(&y)
    };
    let mut f_u = tracking(&u);
    for _ in 0..iterations {
        let y = system.apply_s(&u);
        let diff = system.subtract_target(&y);
        let grad = system.apply_sstar(&diff);
        // grow the trial step but keep σγ and σα finite
        sigma = (sigma * 2.0).min(1e12);
        loop {
            let mut cand = TimeProfile::zeros(m, n);
            for k in 0..m {
                let step: Vec<f64> = u
                    .slice(k)
                    .iter()
                    .zip(grad.slice(k))
                    .map(|(a, g)| a - sigma * g)
                    .collect();
                cand.slice_mut(k).copy_from_slice(&prox_penalty_slice(
                    &step, sigma, alpha, gamma,
                ));
            }
            let f_cand = tracking(&cand);
            // F(cand) ≤ F(u) + <∇F(u), cand−u> + 1/(2σ)‖cand−u‖²  (τ-weighted)
            let mut lin = 0.0;
            let mut dist2 = 0.0;
            for (dc, (du, dg)) in cand
                .data()
                .iter()
                .zip(u.data().iter().zip(grad.data()))
            {
                let d = dc - du;
                lin += dg * d;
                dist2 += d * d;
            }
            let bound = f_u + tau * lin + tau * dist2 / (2.0 * sigma);
            if f_cand.is_finite() && f_cand <= bound + 1e-14 * (1.0 + f_cand.abs()) {
                f_u = f_cand;
                u = cand;
                break;
            }
            sigma *= 0.5;
            if sigma < 1e-14 {
                // no acceptable step; keep the current iterate
                break;
            }
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{prox_gstar, PenaltyParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prox_oracle_matches_grid_search() {
        // Cross-validation of the oracle itself on a 2D instance: dense grid
        // plus one local refinement pass around the best cell.
        let q = [3.0, 1.0];
        let (alpha, gamma) = (1.0, 1.0);
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let mut lo = [-5.0, -5.0];
        let mut hi = [5.0, 5.0];
        for _ in 0..4 {
            let steps = 400;
            for i in 0..=steps {
                for j in 0..=steps {
                    let w = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64,
                    ];
                    let val = prox_objective(&w, &q, alpha, gamma);
                    if val < best.0 {
                        best = (val, w);
                    }
                }
            }
            let cell = [(hi[0] - lo[0]) / steps as f64, (hi[1] - lo[1]) / steps as f64];
            lo = [best.1[0] - 2.0 * cell[0], best.1[1] - 2.0 * cell[1]];
            hi = [best.1[0] + 2.0 * cell[0], best.1[1] + 2.0 * cell[1]];
        }
        let w = prox_oracle(&q, alpha, gamma);
        assert!((w[0] - 1.5).abs() < 1e-3 && (w[1] - 1.0).abs() < 1e-3);
        assert!((best.1[0] - w[0]).abs() < 1e-3 && (best.1[1] - w[1]).abs() < 1e-3);
    }

    #[test]
    fn prox_oracle_zero() {
        assert_eq!(prox_oracle(&[0.0, 0.0, 0.0], 0.3, 2.0), vec![0.0; 3]);
    }

    #[test]
    fn oracle_objective_never_above_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.gen_range(1..=6);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let alpha = 10f64.powf(rng.gen_range(-3.0..2.0));
            let gamma = 10f64.powf(rng.gen_range(-3.0..2.0));
            let params = PenaltyParams::new(alpha, gamma).unwrap();
            let w_closed = prox_gstar(&q, &params).w;
            let w_oracle = prox_oracle(&q, alpha, gamma);
            let f_oracle = prox_objective(&w_oracle, &q, alpha, gamma);
            let f_closed = prox_objective(&w_closed, &q, alpha, gamma);
            assert!(f_oracle <= f_closed + 1e-12 * (1.0 + f_closed.abs()));
        }
    }

    #[test]
    fn prox_oracle_agrees_with_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=8);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
            let alpha = 10f64.powf(rng.gen_range(-4.0..2.0));
            let gamma = 10f64.powf(rng.gen_range(-4.0..2.0));
            let params = PenaltyParams::new(alpha, gamma).unwrap();
            let w_closed = prox_gstar(&q, &params).w;
            let w_oracle = prox_oracle(&q, alpha, gamma);
            let dev = w_closed
                .iter()
                .zip(&w_oracle)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(dev <= 1e-6, "closed form vs oracle deviation {dev:.2e} at q={q:?}");
        }
    }

    #[test]
    fn conjugate_oracle_examples() {
        let v = conjugate_oracle(&[3.0, 4.0], 1.0, 10.0, 201);
        assert!((v - 8.0).abs() < 0.05, "grid sup {v}");
        assert_eq!(conjugate_oracle(&[0.0, 0.0], 1.0, 5.0, 51), 0.0);
    }

    #[test]
    fn conjugate_oracle_monotone_under_refinement() {
        let q = [2.0, -1.0, 0.5];
        let coarse = conjugate_oracle(&q, 0.7, 6.0, 41);
        let fine = conjugate_oracle(&q, 0.7, 6.0, 81);
        assert!(fine >= coarse - 1e-12);
    }

    #[test]
    fn conjugate_oracle_approaches_closed_form_from_below() {
        let q = [2.0, -1.0];
        let alpha = 0.7;
        let exact = crate::prox::gstar_value(&q, alpha);
        let v = conjugate_oracle(&q, alpha, 8.0, 401);
        assert!(v <= exact + 1e-12);
        assert!((v - exact).abs() < 0.02);
    }
}
