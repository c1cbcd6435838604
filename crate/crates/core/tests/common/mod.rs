//! Helpers shared by the integration tests, including an independent
//! reference solver for the Gaussian node problem.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spamnet::TimeSeries;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Series with i.i.d. entries from `draw`.
pub fn random_series(rows: usize, d: usize, seed: u64, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> TimeSeries {
    let mut r = rng(seed);
    let values = DMatrix::from_fn(rows, d, |_, _| draw(&mut r));
    TimeSeries::from_matrix(values).unwrap()
}

pub fn uniform_series(rows: usize, d: usize, seed: u64) -> TimeSeries {
    random_series(rows, d, seed, |r| r.random_range(-1.0..1.0))
}

/// `(1/n) Σ (o − m)² / m`, written out term by term.
pub fn pearson_brute_force(means: &[f64], observed: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i < means.len() {
        let diff = observed[i] - means[i];
        total += diff * diff / means[i];
        i += 1;
    }
    total / means.len() as f64
}

/// Gaussian node problem assembled from raw data, without the library's design code.
pub struct ReferenceProblem {
    /// Centred features per predictor: `T × M`, entries `√μ_i x^i / i!`.
    pub psi: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub lambda_t: f64,
    pub lambda_h: f64,
}

impl ReferenceProblem {
    /// Polynomial features `√μ_i x^i/i!`, centred over the transition rows.
    pub fn new(data: &TimeSeries, j: usize, eigenvalues: &[f64], lambda_t: f64, lambda_h: f64) -> Self {
        let t = data.transitions();
        let psi = (0..data.dim())
            .map(|k| {
                let x = data.column_slice(k, 0, t);
                let mut m = DMatrix::from_fn(t, eigenvalues.len(), |row, i| {
                    let mut fact = 1.0;
                    for l in 1..=i + 1 {
                        fact *= l as f64;
                    }
                    eigenvalues[i].sqrt() * x[row].powi(i as i32 + 1) / fact
                });
                for mut col in m.column_iter_mut() {
                    let mean = col.sum() / t as f64;
                    col.add_scalar_mut(-mean);
                }
                m
            })
            .collect();
        let y = DVector::from_vec(data.column_slice(j, 1, t + 1));
        Self { psi, y, lambda_t, lambda_h }
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn eta(&self, betas: &[DVector<f64>]) -> DVector<f64> {
        let mut eta = DVector::zeros(self.y.len());
        for (p, b) in self.psi.iter().zip(betas) {
            eta += p * b;
        }
        eta
    }

    /// `(1/2T) Σ (η²/2 − η y) + λ_T Σ √(‖Ψβ‖²/T) + λ_H Σ ‖β‖`.
    pub fn objective(&self, betas: &[DVector<f64>]) -> f64 {
        let eta = self.eta(betas);
        let loss: f64 = eta.iter().zip(self.y.iter()).map(|(e, y)| 0.5 * e * e - e * y).sum::<f64>() / (2.0 * self.n());
        let pen: f64 = self
            .psi
            .iter()
            .zip(betas)
            .map(|(p, b)| self.lambda_t * ((p * b).norm_squared() / self.n()).sqrt() + self.lambda_h * b.norm())
            .sum();
        loss + pen
    }

    /// Condat–Vũ primal–dual iterations with constant steps.
    ///
    /// The dual variables for `λ_T‖Ψβ/√T‖` live in `R^T` and those for
    /// `λ_H‖β‖` in `R^M`; their conjugates are ball projections.
    pub fn solve(&self, iterations: usize) -> (Vec<DVector<f64>>, f64) {
        let t = self.n();
        let d = self.psi.len();
        let stacked = {
            let m: usize = self.psi.iter().map(|p| p.ncols()).sum();
            let mut s = DMatrix::zeros(self.y.len(), m);
            let mut c = 0;
            for p in &self.psi {
                s.view_mut((0, c), (p.nrows(), p.ncols())).copy_from(p);
                c += p.ncols();
            }
            s
        };
        let lip = (stacked.transpose() * &stacked).symmetric_eigenvalues().max() / (2.0 * t);
        let op_sq = self
            .psi
            .iter()
            .map(|p| (p.transpose() * p / t).symmetric_eigenvalues().max() + 1.0)
            .fold(0.0, f64::max);
        let sigma = 1.0 / op_sq.sqrt();
        let tau = 0.99 / (lip / 2.0 + sigma * op_sq);

        let mut betas: Vec<DVector<f64>> = self.psi.iter().map(|p| DVector::zeros(p.ncols())).collect();
        let mut z_t: Vec<DVector<f64>> = (0..d).map(|_| DVector::zeros(self.y.len())).collect();
        let mut z_h: Vec<DVector<f64>> = self.psi.iter().map(|p| DVector::zeros(p.ncols())).collect();
        let sqrt_t = t.sqrt();
        for _ in 0..iterations {
            let resid = self.eta(&betas) - &self.y;
            let mut next = Vec::with_capacity(d);
            for k in 0..d {
                let grad = self.psi[k].tr_mul(&resid) / (2.0 * t);
                let adj = self.psi[k].tr_mul(&z_t[k]) / sqrt_t + &z_h[k];
                next.push(&betas[k] - (grad + adj) * tau);
            }
            for k in 0..d {
                let ext = &next[k] * 2.0 - &betas[k];
                z_t[k] = project(&(&z_t[k] + (&self.psi[k] * &ext) * (sigma / sqrt_t)), self.lambda_t);
                z_h[k] = project(&(&z_h[k] + ext * sigma), self.lambda_h);
            }
            betas = next;
        }
        let obj = self.objective(&betas);
        (betas, obj)
    }
}

fn project(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = v.norm();
    if n <= radius {
        v.clone()
    } else {
        v * (radius / n)
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
