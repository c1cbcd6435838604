//! Penalized maximum-likelihood estimation of the additive network.
//!
//! For each response node `j` the estimator minimizes
//!
//! ```text
//! (1/(2T)) Σ_{t<T} ( Z(η_t) − η_t·y_t ) + λ_T Σ_k ‖f_{j,k}‖_T + λ_H Σ_k ‖f_{j,k}‖_H
//! η_t = v_j + Σ_k f_{j,k}(X_{t,k}),   y_t = X_{t+1,j}
//! ```
//!
//! with every `f_{j,k}` expanded in the kernel's truncated Mercer basis, so that
//! `‖f_{j,k}‖_H = ‖β_{j,k}‖₂` and `‖f_{j,k}‖_T = ‖R_k β_{j,k}‖₂`. The problem is
//! solved by block coordinate descent over `k`; see [`block`] for the inner
//! solver.

mod block;
pub mod cv;
pub mod representer;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{self, Family};
use crate::kernels::{design_block, DesignBlock, KernelSpec};
use crate::series::TimeSeries;

use block::{BlockProblem, SplitState};

pub use cv::{cross_validate, pearson_chi2, CvResult, CvRow};

/// Solver and penalty settings shared by all nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lambda_t: f64,
    pub lambda_h: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol_rel_obj: f64,
    pub admm_rho: f64,
    /// Centre each basis column over the training rows.
    pub center: bool,
    /// Known offsets `v`; empty means all zeros.
    pub offsets: Vec<f64>,
    /// Add an unpenalized intercept to every node.
    pub intercept_column: bool,
    /// Support threshold relative to the largest block norm of the node.
    pub support_eps_rel: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_t: 0.0,
            lambda_h: 0.0,
            max_outer: 500,
            max_inner: 200,
            tol_rel_obj: 1e-6,
            admm_rho: 1.0,
            center: true,
            offsets: Vec::new(),
            intercept_column: false,
            support_eps_rel: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn with_lambdas(lambda_t: f64, lambda_h: f64) -> Self {
        Self { lambda_t, lambda_h, ..Self::default() }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.lambda_t >= 0.0 && self.lambda_t.is_finite()) {
            return bad("lambda_t must be a finite non-negative number");
        }
        if !(self.lambda_h >= 0.0 && self.lambda_h.is_finite()) {
            return bad("lambda_h must be a finite non-negative number");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.tol_rel_obj > 0.0) || !(self.admm_rho > 0.0) || !(self.support_eps_rel > 0.0) {
            return bad("tolerances and admm_rho must be positive");
        }
        if !self.offsets.is_empty() && self.offsets.len() != d {
            return Err(Error::Config(format!(
                "offsets has {} entries but the series has d = {d}",
                self.offsets.len()
            )));
        }
        if self.offsets.iter().any(|v| !v.is_finite()) {
            return bad("offsets must be finite");
        }
        Ok(())
    }

    pub fn offset(&self, j: usize) -> f64 {
        self.offsets.get(j).copied().unwrap_or(0.0)
    }
}

/// Fitted additive function for one response node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    pub node: usize,
    /// `beta[k]` holds the basis coefficients of `f_{j,k}`.
    pub beta: Vec<Vec<f64>>,
    /// Unpenalized intercept (zero unless `intercept_column` is set).
    pub intercept: f64,
    pub norms_t: Vec<f64>,
    pub norms_h: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub support: Vec<usize>,
}

impl NodeFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Fits for all nodes plus what is needed to evaluate them at new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFit {
    pub node_fits: Vec<NodeFit>,
    pub kernel: KernelSpec,
    pub family: Family,
    pub config: FitConfig,
    /// Column means subtracted from each predictor block during training.
    pub centering_means: Vec<Vec<f64>>,
    pub column_names: Vec<String>,
    pub transitions: usize,
}

impl NetworkFit {
    pub fn dim(&self) -> usize {
        self.node_fits.len()
    }

    /// `A[j][k] = 1` iff `max(‖f_{j,k}‖_T, ‖f_{j,k}‖_H) > threshold`.
    pub fn adjacency(&self, threshold: f64) -> Vec<Vec<u8>> {
        self.node_fits
            .iter()
            .map(|nf| {
                nf.norms_t
                    .iter()
                    .zip(&nf.norms_h)
                    .map(|(a, b)| u8::from(a.max(*b) > threshold))
                    .collect()
            })
            .collect()
    }

    /// Fitted function `f̂_j(x) = η_j − v_j` at a single state vector.
    pub fn function_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::InvalidArgument(format!("state has {} entries, expected {d}", x.len())));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("state entry {k} is not finite")));
        }
        let feats: Vec<Vec<f64>> = x
            .iter()
            .zip(&self.centering_means)
            .map(|(&xk, means)| {
                self.kernel
                    .features(xk)
                    .iter()
                    .zip(means)
                    .map(|(f, m)| f - m)
                    .collect()
            })
            .collect();
        Ok(self
            .node_fits
            .iter()
            .map(|nf| {
                nf.intercept
                    + nf.beta
                        .iter()
                        .zip(&feats)
                        .map(|(b, f)| b.iter().zip(f).map(|(bi, fi)| bi * fi).sum::<f64>())
                        .sum::<f64>()
            })
            .collect())
    }
}

/// Linear predictors and conditional means at a state vector.
pub fn predict(fit: &NetworkFit, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = fit.function_values(x)?;
    let eta: Vec<f64> = f.iter().enumerate().map(|(j, v)| v + fit.config.offset(j)).collect();
    for (j, &e) in eta.iter().enumerate() {
        fit.family.check_eta(j, e)?;
    }
    let mean = eta.iter().map(|&e| fit.family.mean(e)).collect();
    Ok((eta, mean))
}

/// Design blocks for every predictor column over the transition rows `0..T`.
pub fn build_designs(data: &TimeSeries, kernel: &KernelSpec, center: bool) -> Result<Vec<DesignBlock>> {
    let t = data.transitions();
    if t == 0 {
        return Err(Error::Data("need at least two rows (one transition)".into()));
    }
    (0..data.dim())
        .map(|k| design_block(kernel, &data.column_slice(k, 0, t), center))
        .collect()
}

/// The node-`j` objective over a fixed data set, usable for any coefficients.
pub struct NodeProblem<'a> {
    family: Family,
    blocks: std::borrow::Cow<'a, [DesignBlock]>,
    y: DVector<f64>,
    offset: f64,
    lambda_t: f64,
    lambda_h: f64,
    intercept: bool,
}

impl<'a> NodeProblem<'a> {
    /// Build the problem for node `j`, constructing design blocks from `data`.
    pub fn new(j: usize, data: &TimeSeries, kernel: &KernelSpec, family: Family, cfg: &FitConfig) -> Result<NodeProblem<'static>> {
        cfg.validate(data.dim())?;
        let blocks = build_designs(data, kernel, cfg.center)?;
        NodeProblem::build(j, data, std::borrow::Cow::Owned(blocks), family, cfg)
    }

    pub(crate) fn with_blocks(
        j: usize,
        data: &TimeSeries,
        blocks: &'a [DesignBlock],
        family: Family,
        cfg: &FitConfig,
    ) -> Result<Self> {
        Self::build(j, data, std::borrow::Cow::Borrowed(blocks), family, cfg)
    }

    fn build(
        j: usize,
        data: &TimeSeries,
        blocks: std::borrow::Cow<'a, [DesignBlock]>,
        family: Family,
        cfg: &FitConfig,
    ) -> Result<Self> {
        if j >= data.dim() {
            return Err(Error::InvalidArgument(format!("node {j} out of range (d = {})", data.dim())));
        }
        let t = data.transitions();
        let y = DVector::from_vec(data.column_slice(j, 1, t + 1));
        for (i, &v) in y.iter().enumerate() {
            family.check_response(i + 1, v)?;
        }
        Ok(Self {
            family,
            blocks,
            y,
            offset: cfg.offset(j),
            lambda_t: cfg.lambda_t,
            lambda_h: cfg.lambda_h,
            intercept: cfg.intercept_column,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[DesignBlock] {
        &self.blocks
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.y
    }

    /// `η = v_j + c + Σ_k Ψ_k β_k` over the training rows.
    pub fn linear_predictor(&self, betas: &[DVector<f64>], intercept: f64) -> DVector<f64> {
        let mut eta = DVector::from_element(self.y.len(), self.offset + intercept);
        for (blk, b) in self.blocks.iter().zip(betas) {
            eta += &blk.psi * b;
        }
        eta
    }

    /// Penalty part `λ_T Σ‖R_k β_k‖ + λ_H Σ‖β_k‖`.
    pub fn penalty(&self, betas: &[DVector<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(betas)
            .map(|(blk, b)| self.lambda_t * blk.empirical_norm(b) + self.lambda_h * b.norm())
            .sum()
    }

    /// Full objective; errors if the linear predictor leaves the safe range.
    pub fn value(&self, betas: &[DVector<f64>], intercept: f64) -> Result<f64> {
        if betas.len() != self.blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficient blocks for {} design blocks",
                betas.len(),
                self.blocks.len()
            )));
        }
        let eta = self.linear_predictor(betas, intercept);
        let nll = glm::negloglik(self.family, eta.as_slice(), self.y.as_slice())?;
        Ok(nll + self.penalty(betas))
    }

    fn value_or_inf(&self, betas: &[DVector<f64>], intercept: f64) -> f64 {
        let eta = self.linear_predictor(betas, intercept);
        if eta.iter().any(|&e| !self.family.eta_in_range(e)) {
            return f64::INFINITY;
        }
        glm::negloglik_unchecked(self.family, eta.as_slice(), self.y.as_slice()) + self.penalty(betas)
    }

    /// `‖∇_{β_k} S‖₂` at all-zero coefficients (intercept fixed at zero).
    pub fn zero_gradient_norms(&self) -> Vec<f64> {
        let eta = DVector::from_element(self.y.len(), self.offset);
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.y.iter()).map(|(&e, &v)| self.family.mean(e) - v),
        );
        let n = self.y.len() as f64;
        self.blocks
            .iter()
            .map(|blk| (blk.psi.tr_mul(&resid) / (2.0 * n)).norm())
            .collect()
    }

    fn zero_betas(&self) -> Vec<DVector<f64>> {
        self.blocks.iter().map(|b| DVector::zeros(b.rank())).collect()
    }

    /// One-dimensional damped Newton on the unpenalized intercept.
    fn update_intercept(&self, eta: &mut DVector<f64>, intercept: &mut f64) {
        let n = self.y.len() as f64;
        let loss = |eta: &DVector<f64>| -> f64 {
            if eta.iter().any(|&e| !self.family.eta_in_range(e)) {
                return f64::INFINITY;
            }
            glm::negloglik_unchecked(self.family, eta.as_slice(), self.y.as_slice())
        };
        let mut current = loss(eta);
        for _ in 0..50 {
            let g: f64 = eta.iter().zip(self.y.iter()).map(|(&e, &v)| self.family.mean(e) - v).sum::<f64>() / (2.0 * n);
            let h: f64 = eta.iter().map(|&e| self.family.variance(e)).sum::<f64>() / (2.0 * n);
            if g.abs() <= 1e-13 || h <= 0.0 {
                break;
            }
            let step = -g / h;
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand = eta.add_scalar(t * step);
                let val = loss(&cand);
                if val <= current - 1e-4 * t * g * g / h {
                    *eta = cand;
                    *intercept += t * step;
                    current = val;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }
}

/// Block coordinate descent for one node.
fn solve_node(j: usize, problem: &NodeProblem<'_>, cfg: &FitConfig) -> Result<NodeFit> {
    let d = problem.n_blocks();
    let mut betas = problem.zero_betas();
    let mut intercept = 0.0;
    let mut eta = problem.linear_predictor(&betas, intercept);
    let initial = problem.value(&betas, intercept)?;
    let mut trace = vec![initial];
    let mut states: Vec<SplitState> = problem.blocks.iter().map(|b| SplitState::zeros(b.rank())).collect();
    let mut converged = false;

    for outer in 0..cfg.max_outer {
        let before = *trace.last().unwrap();
        let mut inner_ok = true;
        if problem.intercept {
            problem.update_intercept(&mut eta, &mut intercept);
        }
        for k in 0..d {
            let blk = &problem.blocks[k];
            let old_fit = &blk.psi * &betas[k];
            let eta_rest = &eta - &old_fit;
            let sub = BlockProblem {
                family: problem.family,
                block: blk,
                eta_rest: &eta_rest,
                y: &problem.y,
                lambda_t: cfg.lambda_t,
                lambda_h: cfg.lambda_h,
                rho: cfg.admm_rho,
                max_inner: cfg.max_inner,
            };
            let out = sub.solve(&betas[k], &mut states[k]);
            inner_ok &= out.converged;
            // Keep the old block unless the new one does at least as well.
            if out.beta != betas[k] && sub.value(&out.beta) <= sub.value(&betas[k]) {
                eta = &eta_rest + &blk.psi * &out.beta;
                betas[k] = out.beta;
            }
        }
        let now = problem.value_or_inf(&betas, intercept);
        if !now.is_finite() {
            return Err(Error::Numerical(format!(
                "node {j}: objective became non-finite at outer iteration {outer}; trace = {trace:?}"
            )));
        }
        trace.push(now);
        let change = (before - now).abs();
        if inner_ok && change <= cfg.tol_rel_obj * before.abs().max(1e-8) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("node {j}: block coordinate descent stopped after {} sweeps", cfg.max_outer);
    }

    let norms_t: Vec<f64> = problem.blocks.iter().zip(&betas).map(|(b, beta)| b.empirical_norm(beta)).collect();
    let norms_h: Vec<f64> = betas.iter().map(|b| b.norm()).collect();
    let largest = norms_t.iter().zip(&norms_h).map(|(a, b)| a.max(*b)).fold(0.0, f64::max);
    let eps = cfg.support_eps_rel * largest;
    let support = (0..d).filter(|&k| norms_t[k].max(norms_h[k]) > eps).collect();

    Ok(NodeFit {
        node: j,
        beta: betas.iter().map(|b| b.as_slice().to_vec()).collect(),
        intercept,
        norms_t,
        norms_h,
        objective_trace: trace,
        converged,
        support,
    })
}

/// Fit the additive function of a single response node.
pub fn fit_node(j: usize, data: &TimeSeries, kernel: &KernelSpec, family: Family, cfg: &FitConfig) -> Result<NodeFit> {
    let problem = NodeProblem::new(j, data, kernel, family, cfg)?;
    solve_node(j, &problem, cfg)
}

/// Fit every node. Nodes are solved in parallel; the result does not depend
/// on scheduling.
pub fn fit_network(data: &TimeSeries, kernel: &KernelSpec, family: Family, cfg: &FitConfig) -> Result<NetworkFit> {
    cfg.validate(data.dim())?;
    let blocks = build_designs(data, kernel, cfg.center)?;
    let node_fits = (0..data.dim())
        .into_par_iter()
        .map(|j| {
            NodeProblem::with_blocks(j, data, &blocks, family, cfg)
                .and_then(|p| solve_node(j, &p, cfg))
                .map_err(|e| Error::Node { node: j, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkFit {
        node_fits,
        kernel: kernel.clone(),
        family,
        config: cfg.clone(),
        centering_means: blocks.iter().map(|b| b.centering_means.as_slice().to_vec()).collect(),
        column_names: data.column_names().to_vec(),
        transitions: data.transitions(),
    })
}

/// Objective of node `j` of a fit, re-evaluated on `data`.
pub fn node_objective(fit: &NetworkFit, j: usize, data: &TimeSeries) -> Result<f64> {
    let problem = NodeProblem::new(j, data, &fit.kernel, fit.family, &fit.config)?;
    let nf = fit
        .node_fits
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("node {j} out of range")))?;
    let betas: Vec<DVector<f64>> = nf.beta.iter().map(|b| DVector::from_column_slice(b)).collect();
    problem.value(&betas, nf.intercept)
}

/// Sum of the node objectives of a fit on `data`.
pub fn objective(fit: &NetworkFit, data: &TimeSeries) -> Result<f64> {
    (0..fit.dim()).map(|j| node_objective(fit, j, data)).sum()
}
