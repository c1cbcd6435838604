//! Kernel-matrix form of the Gaussian node problem, for small cross-checks.
//!
//! Here each additive component is `f_k = K_k α_k` on the training points,
//! with `‖f_k‖_T = √((1/T)‖K_k α_k‖²)` and `‖f_k‖_H = √(α_kᵀ K_k α_k)`. The
//! problem has `d·T` unknowns, so this is only meant for small `T`. It is
//! solved by a primal–dual (Chambolle–Pock) iteration: the quadratic loss is
//! handled through its proximal map and both norms through projections of
//! the dual variables onto balls.

use nalgebra::{DMatrix, DVector};

use super::FitConfig;
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::kernels::{empirical_kernel_matrix, KernelSpec};
use crate::series::TimeSeries;

#[derive(Debug, Clone)]
pub struct RepresenterFit {
    pub alphas: Vec<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

struct Blocks {
    kernels: Vec<DMatrix<f64>>,
    /// `L_k` with `K_k = L_k L_kᵀ`, one column per positive eigenvalue.
    roots: Vec<DMatrix<f64>>,
}

fn centered(k: DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let c = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - 1.0 / n as f64);
    &c * k * &c
}

fn kernel_root(k: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = k.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * top.max(f64::MIN_POSITIVE))
        .collect();
    let mut root = DMatrix::zeros(k.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        root.set_column(c, &(eig.eigenvectors.column(i) * eig.eigenvalues[i].sqrt()));
    }
    root
}

/// Objective of the kernel-matrix form at the given weights.
fn objective(blocks: &Blocks, y: &DVector<f64>, offset: f64, alphas: &[DVector<f64>], cfg: &FitConfig) -> f64 {
    let t = y.len() as f64;
    let mut eta = DVector::from_element(y.len(), offset);
    let mut pen = 0.0;
    for (k, a) in blocks.kernels.iter().zip(alphas) {
        let f = k * a;
        pen += cfg.lambda_t * (f.norm_squared() / t).sqrt() + cfg.lambda_h * a.dot(&f).max(0.0).sqrt();
        eta += f;
    }
    let loss: f64 = eta.iter().zip(y.iter()).map(|(&e, &v)| 0.5 * e * e - e * v).sum::<f64>() / (2.0 * t);
    loss + pen
}

/// Solve the kernel-matrix form of node `j` for the Gaussian family.
pub fn fit_node_representer(
    j: usize,
    data: &TimeSeries,
    kernel: &KernelSpec,
    family: Family,
    cfg: &FitConfig,
    iterations: usize,
) -> Result<RepresenterFit> {
    if family != Family::Gaussian {
        return Err(Error::InvalidArgument("the kernel-matrix solver handles the Gaussian family only".into()));
    }
    if cfg.intercept_column {
        return Err(Error::InvalidArgument("the kernel-matrix solver does not fit an intercept".into()));
    }
    if j >= data.dim() {
        return Err(Error::InvalidArgument(format!("node {j} out of range")));
    }
    cfg.validate(data.dim())?;
    let t = data.transitions();
    let d = data.dim();
    let y = DVector::from_vec(data.column_slice(j, 1, t + 1));
    let offset = cfg.offset(j);

    let kernels: Vec<DMatrix<f64>> = (0..d)
        .map(|k| {
            let raw = empirical_kernel_matrix(kernel, &data.column_slice(k, 0, t))?;
            Ok(if cfg.center { centered(raw) } else { raw })
        })
        .collect::<Result<_>>()?;
    let roots: Vec<DMatrix<f64>> = kernels.iter().map(kernel_root).collect();
    let blocks = Blocks { kernels, roots };

    let n = d * t;
    let tf = t as f64;
    // Stacked K = [K_1 … K_d] (T × dT).
    let mut kcat = DMatrix::zeros(t, n);
    for (k, km) in blocks.kernels.iter().enumerate() {
        kcat.view_mut((0, k * t), (t, t)).copy_from(km);
    }
    // Linear operator A: x ↦ (K_k α_k / √T, L_kᵀ α_k)_k.
    let dual_dims: Vec<(usize, usize)> = blocks.roots.iter().map(|r| (t, r.ncols())).collect();
    let apply = |x: &DVector<f64>| -> Vec<(DVector<f64>, DVector<f64>)> {
        (0..d)
            .map(|k| {
                let a = x.rows(k * t, t);
                (&blocks.kernels[k] * a / tf.sqrt(), blocks.roots[k].tr_mul(&a))
            })
            .collect()
    };
    let apply_t = |z: &[(DVector<f64>, DVector<f64>)]| -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for k in 0..d {
            let v = blocks.kernels[k].tr_mul(&z[k].0) / tf.sqrt() + &blocks.roots[k] * &z[k].1;
            out.rows_mut(k * t, t).copy_from(&v);
        }
        out
    };

    // ‖A‖ by power iteration.
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut op_norm = 0.0;
    for _ in 0..500 {
        let w = apply_t(&apply(&v));
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        op_norm = nw.sqrt();
        v = w / nw;
    }
    if op_norm == 0.0 {
        let alphas = vec![DVector::zeros(t); d];
        let objective = objective(&blocks, &y, offset, &alphas, cfg);
        return Ok(RepresenterFit { alphas, objective, iterations: 0 });
    }
    let tau = 0.99 / op_norm;
    let sigma = 0.99 / op_norm;

    // prox of τF: (H + I/τ) x = z/τ − (1/(2T)) Kᵀ(v − y), with H = KᵀK/(2T).
    let mut sys = kcat.tr_mul(&kcat) / (2.0 * tf);
    for i in 0..n {
        sys[(i, i)] += 1.0 / tau;
    }
    let chol = sys
        .cholesky()
        .ok_or_else(|| Error::Numerical("kernel-matrix proximal system is not positive definite".into()))?;
    let lin = kcat.tr_mul(&(DVector::from_element(t, offset) - &y)) / (2.0 * tf);

    let mut x = DVector::zeros(n);
    let mut xbar = x.clone();
    let mut dual: Vec<(DVector<f64>, DVector<f64>)> =
        dual_dims.iter().map(|&(a, b)| (DVector::zeros(a), DVector::zeros(b))).collect();
    for _ in 0..iterations {
        let ax = apply(&xbar);
        for (zk, axk) in dual.iter_mut().zip(ax) {
            zk.0 = project_ball(&(&zk.0 + axk.0 * sigma), cfg.lambda_t);
            zk.1 = project_ball(&(&zk.1 + axk.1 * sigma), cfg.lambda_h);
        }
        let z = &x - apply_t(&dual) * tau;
        let x_new = chol.solve(&(z / tau - &lin));
        xbar = &x_new * 2.0 - &x;
        x = x_new;
    }
    let alphas: Vec<DVector<f64>> = (0..d).map(|k| x.rows(k * t, t).into_owned()).collect();
    let objective = objective(&blocks, &y, offset, &alphas, cfg);
    Ok(RepresenterFit { alphas, objective, iterations })
}

fn project_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = v.norm();
    if n <= radius {
        v.clone()
    } else {
        v * (radius / n)
    }
}
