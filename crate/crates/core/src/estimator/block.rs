//! Solver for one coefficient block of the node problem.
//!
//! With the other blocks held fixed, block `k` solves
//!
//! ```text
//! min_b  S(b) + λ_T ‖R b‖₂ + λ_H ‖b‖₂
//! ```
//!
//! where `S` is the likelihood part. The two norms are split off through
//! consensus copies `u = R b` and `w = b` and handled by scaled ADMM. The
//! splitting state is kept between outer sweeps so that each call resumes
//! where the previous one stopped.

use nalgebra::{DMatrix, DVector};

use crate::glm::Family;
use crate::kernels::DesignBlock;

/// Newton steps allowed per smooth sub-step for non-quadratic families.
const NEWTON_STEPS: usize = 5;

/// Primal and dual residual tolerance of the splitting iterations.
pub(crate) const INNER_TOL: f64 = 1e-8;

/// Splitting variables carried across calls.
#[derive(Debug, Clone)]
pub(crate) struct SplitState {
    u: DVector<f64>,
    w: DVector<f64>,
    p: DVector<f64>,
    q: DVector<f64>,
}

impl SplitState {
    pub(crate) fn zeros(m: usize) -> Self {
        Self {
            u: DVector::zeros(m),
            w: DVector::zeros(m),
            p: DVector::zeros(m),
            q: DVector::zeros(m),
        }
    }

    fn reset(&mut self) {
        self.u.fill(0.0);
        self.w.fill(0.0);
        self.p.fill(0.0);
        self.q.fill(0.0);
    }
}

/// Data of one block subproblem.
pub(crate) struct BlockProblem<'a> {
    pub family: Family,
    pub block: &'a DesignBlock,
    /// Linear predictor with this block removed.
    pub eta_rest: &'a DVector<f64>,
    pub y: &'a DVector<f64>,
    pub lambda_t: f64,
    pub lambda_h: f64,
    pub rho: f64,
    pub max_inner: usize,
}

pub(crate) struct BlockOutcome {
    pub beta: DVector<f64>,
    /// True when the zero test fired or the residuals met [`INNER_TOL`].
    pub converged: bool,
}

impl BlockProblem<'_> {
    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn eta(&self, b: &DVector<f64>) -> DVector<f64> {
        self.eta_rest + &self.block.psi * b
    }

    /// `S(b)`, or `+∞` when the predictor leaves the family's safe range.
    fn smooth(&self, b: &DVector<f64>) -> f64 {
        let eta = self.eta(b);
        if eta.iter().any(|&e| !self.family.eta_in_range(e)) {
            return f64::INFINITY;
        }
        let s: f64 = eta
            .iter()
            .zip(self.y.iter())
            .map(|(&e, &v)| self.family.log_partition(e) - e * v)
            .sum();
        s / (2.0 * self.n())
    }

    fn smooth_grad_at_eta(&self, eta: &DVector<f64>) -> DVector<f64> {
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.y.iter()).map(|(&e, &v)| self.family.mean(e) - v),
        );
        self.block.psi.tr_mul(&resid) / (2.0 * self.n())
    }

    fn smooth_hessian_at_eta(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let psi = &self.block.psi;
        let mut weighted = psi.clone();
        for (t, &e) in eta.iter().enumerate() {
            let w = self.family.variance(e);
            weighted.row_mut(t).scale_mut(w);
        }
        psi.tr_mul(&weighted) / (2.0 * self.n())
    }

    /// Gradient of `S` at `b = 0`.
    pub fn zero_gradient(&self) -> DVector<f64> {
        self.smooth_grad_at_eta(self.eta_rest)
    }

    /// Block objective `S(b) + λ_T‖Rb‖ + λ_H‖b‖`.
    pub fn value(&self, b: &DVector<f64>) -> f64 {
        self.smooth(b) + self.lambda_t * self.block.empirical_norm(b) + self.lambda_h * b.norm()
    }

    /// Sufficient condition for `b = 0` to be optimal: the subdifferential of
    /// the two norms at zero contains a ball of radius `λ_T σ_min(R) + λ_H`.
    pub fn zero_is_optimal(&self) -> bool {
        let g = self.zero_gradient();
        g.norm() <= self.lambda_t * self.block.sigma_min + self.lambda_h
    }

    pub fn solve(&self, start: &DVector<f64>, state: &mut SplitState) -> BlockOutcome {
        let m = self.block.rank();
        if self.zero_is_optimal() {
            state.reset();
            return BlockOutcome { beta: DVector::zeros(m), converged: true };
        }
        let r = &self.block.r;
        let rho = self.rho;
        let gram = self.block.gram();
        if self.family == Family::Gaussian && self.lambda_t == 0.0 && self.lambda_h == 0.0 {
            // Unpenalized least squares; singular designs fall through to the splitting.
            if let Some(chol) = (&gram * 0.5).cholesky() {
                state.reset();
                let beta = -chol.solve(&self.smooth_grad_at_eta(self.eta_rest));
                return BlockOutcome { beta, converged: true };
            }
        }
        let mut penalty_hess = &gram * rho;
        for i in 0..m {
            penalty_hess[(i, i)] += rho;
        }

        // Quadratic likelihood: the smooth sub-step is one linear solve with a fixed matrix.
        let gaussian = match self.family {
            Family::Gaussian => {
                let a = &gram * 0.5 + &penalty_hess;
                let chol = a.cholesky().expect("ρ(RᵀR + I) keeps the system positive definite");
                let lin = self.smooth_grad_at_eta(self.eta_rest);
                Some((chol, lin))
            }
            _ => None,
        };

        let mut b = start.clone();
        let mut converged = false;
        for _ in 0..self.max_inner {
            let target_u = &state.u - &state.p;
            let target_w = &state.w - &state.q;
            match &gaussian {
                Some((chol, lin)) => {
                    let rhs = r.tr_mul(&target_u) * rho + &target_w * rho - lin;
                    b = chol.solve(&rhs);
                }
                None => {
                    b = self.newton_substep(b, &target_u, &target_w, &penalty_hess);
                }
            }

            let rb = r * &b;
            let u_old = state.u.clone();
            let w_old = state.w.clone();
            state.u = shrink(&(&rb + &state.p), self.lambda_t / rho);
            state.w = shrink(&(&b + &state.q), self.lambda_h / rho);
            let ru = &rb - &state.u;
            let rw = &b - &state.w;
            state.p += &ru;
            state.q += &rw;

            let primal = (ru.norm_squared() + rw.norm_squared()).sqrt();
            let dual = rho * (r.tr_mul(&(&state.u - &u_old)) + (&state.w - &w_old)).norm();
            if primal < INNER_TOL && dual < INNER_TOL {
                converged = true;
                break;
            }
        }

        // The proximal copies carry exact zeros; prefer them when a norm is active.
        let beta = if (self.lambda_h > 0.0 && state.w.iter().all(|&v| v == 0.0))
            || (self.lambda_t > 0.0 && !self.block.rank_deficient && state.u.iter().all(|&v| v == 0.0))
        {
            DVector::zeros(m)
        } else {
            b
        };
        BlockOutcome { beta, converged }
    }

    /// Damped Newton iterations on
    /// `S(b) + (ρ/2)‖Rb − target_u‖² + (ρ/2)‖b − target_w‖²`.
    fn newton_substep(
        &self,
        mut b: DVector<f64>,
        target_u: &DVector<f64>,
        target_w: &DVector<f64>,
        penalty_hess: &DMatrix<f64>,
    ) -> DVector<f64> {
        let r = &self.block.r;
        let rho = self.rho;
        let aug = |b: &DVector<f64>| {
            let s = self.smooth(b);
            s + 0.5 * rho * ((r * b - target_u).norm_squared() + (b - target_w).norm_squared())
        };
        let mut current = aug(&b);
        if !current.is_finite() {
            // Start from a feasible point: the zero block keeps the rest of η unchanged.
            b.fill(0.0);
            current = aug(&b);
        }
        for _ in 0..NEWTON_STEPS {
            let eta = self.eta(&b);
            let grad = self.smooth_grad_at_eta(&eta)
                + r.tr_mul(&(r * &b - target_u)) * rho
                + (&b - target_w) * rho;
            let hess = self.smooth_hessian_at_eta(&eta) + penalty_hess;
            let step = match hess.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -&grad,
            };
            let slope = grad.dot(&step);
            if step.norm() <= 1e-14 * (1.0 + b.norm()) || slope >= 0.0 {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let cand = &b + &step * t;
                let val = aug(&cand);
                if val <= current + 1e-4 * t * slope {
                    b = cand;
                    current = val;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        b
    }
}

/// Block soft-threshold: `max(0, 1 − τ/‖v‖)·v`.
pub(crate) fn shrink(v: &DVector<f64>, tau: f64) -> DVector<f64> {
    let n = v.norm();
    if n <= tau {
        DVector::zeros(v.len())
    } else {
        v * (1.0 - tau / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_kills_small_vectors() {
        let v = DVector::from_vec(vec![0.3, 0.4]);
        assert!(shrink(&v, 0.5).iter().all(|&x| x == 0.0));
        let s = shrink(&v, 0.25);
        assert!((s.norm() - 0.25).abs() < 1e-15);
        assert!((s[0] / s[1] - 0.75).abs() < 1e-15);
        assert_eq!(shrink(&v, 0.0), v);
    }
}
