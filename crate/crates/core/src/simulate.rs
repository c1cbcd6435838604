//! Synthetic sparse additive networks and the experiment grid.
//!
//! Both generators build `f*_j(x) = Σ_k A*_{j,k} Σ_{i≤r} b^i_{j,k} Φ_i(x_k)`
//! with the polynomial basis `Φ_i(x) = x^i / i!` and zero offsets.
//!
//! - Gaussian: `A*` has ones on the diagonal and `s` off-diagonal entries per
//!   row drawn from `U[−1/(2s), 1/(2s)]`; `X_{t+1,j} = f*_j(X_t) + w` with
//!   `w ~ U[−0.4, 0.4]`.
//! - Poisson: `A*` has `s` entries per row equal to `−2`;
//!   `X_{t+1,j} ~ Poisson(exp(f*_j(X_t)))`.
//!
//! Each `(b^1_{j,k}, b^2_{j,k}, …)` is one standardized (unit-norm) vector of
//! length `max(r, 3)`, and the first `r` entries are used, so fits with
//! different `r` share the same underlying draws. Poisson draws use absolute
//! values so that `f*` is non-positive and the count process stays bounded.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_network, FitConfig, NetworkFit};
use crate::glm::Family;
use crate::kernels::{Basis, KernelSpec};
use crate::series::TimeSeries;

/// Half-width of the uniform noise of the Gaussian process.
pub const GAUSSIAN_NOISE: f64 = 0.4;
/// Value of every non-zero entry of the Poisson `A*`.
pub const POISSON_WEIGHT: f64 = -2.0;
/// The replication penalties are quoted for a loss `(1/T)Σ(Z(η) − ηφ(y))`,
/// twice the node objective minimized here, so they are halved before fitting.
pub const REPLICATION_LOSS_SCALE: f64 = 0.5;
/// Trajectories with an entry above this magnitude are rejected.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub family: Family,
    pub d: usize,
    pub t: usize,
    pub r: usize,
    #[serde(default = "default_sparsity")]
    pub s: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_sparsity() -> usize {
    3
}

fn default_burn_in() -> usize {
    200
}

impl SimSpec {
    pub fn new(family: Family, d: usize, t: usize, r: usize, seed: u64) -> Self {
        Self { family, d, t, r, s: default_sparsity(), seed, burn_in: default_burn_in() }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t == 0 || self.r == 0 {
            return Err(Error::Config("simulation needs positive d, T and r".into()));
        }
        let room = match self.family {
            Family::Gaussian => self.d - 1,
            Family::Poisson => self.d,
            Family::Bernoulli => {
                return Err(Error::Config("no simulation recipe for the Bernoulli family".into()))
            }
        };
        if self.s > room {
            return Err(Error::Config(format!(
                "sparsity s = {} does not fit in a row of a {}-node {} network",
                self.s,
                self.d,
                self.family.name()
            )));
        }
        Ok(())
    }
}

/// The generating network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub family: Family,
    /// Row-major `d × d` weights `A*`.
    pub a_star: Vec<Vec<f64>>,
    /// `b[j][k]` is the standardized vector of length `max(r, 3)`.
    pub b: Vec<Vec<Vec<f64>>>,
    pub r: usize,
    /// `{k : A*_{j,k} ≠ 0}` for each row `j`.
    pub true_supports: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn dim(&self) -> usize {
        self.a_star.len()
    }

    /// `f*_{j,k}(x)`.
    pub fn component(&self, j: usize, k: usize, x: f64) -> f64 {
        let a = self.a_star[j][k];
        if a == 0.0 {
            return 0.0;
        }
        let mut phi = 1.0;
        let mut acc = 0.0;
        for (i, b) in self.b[j][k].iter().take(self.r).enumerate() {
            phi *= x / (i + 1) as f64;
            acc += b * phi;
        }
        a * acc
    }

    /// `(f*_j(x))_j`.
    pub fn f_star(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.true_supports[j].iter().map(|&k| self.component(j, k, x[k])).sum())
            .collect()
    }

    /// The matching kernel: rank `r`, unit eigenvalues, polynomial basis.
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::finite_rank(self.r, Basis::PolyFactorial).expect("r ≥ 1")
    }
}

fn draw_truth(spec: &SimSpec, rng: &mut ChaCha8Rng) -> GroundTruth {
    let d = spec.d;
    let mut a = vec![vec![0.0; d]; d];
    let half = if spec.s > 0 { 1.0 / (2.0 * spec.s as f64) } else { 0.0 };
    for (j, row) in a.iter_mut().enumerate() {
        match spec.family {
            Family::Gaussian => {
                row[j] = 1.0;
                let picks = sample(rng, d - 1, spec.s);
                for p in picks.iter() {
                    let k = if p >= j { p + 1 } else { p };
                    row[k] = rng.random_range(-half..=half);
                }
            }
            _ => {
                for k in sample(rng, d, spec.s).iter() {
                    row[k] = POISSON_WEIGHT;
                }
            }
        }
    }
    let q = spec.r.max(3);
    let b: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let mut v: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    for x in v.iter_mut() {
                        *x /= n;
                        if spec.family == Family::Poisson {
                            *x = x.abs();
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();
    let true_supports = a
        .iter()
        .map(|row| (0..d).filter(|&k| row[k] != 0.0).collect())
        .collect();
    GroundTruth { family: spec.family, a_star: a, b, r: spec.r, true_supports }
}

fn run_chain(
    spec: &SimSpec,
    truth: &GroundTruth,
    rng: &mut ChaCha8Rng,
    mut step: impl FnMut(&[f64], &mut ChaCha8Rng) -> Result<Vec<f64>>,
    x0: Vec<f64>,
) -> Result<TimeSeries> {
    let d = spec.d;
    let mut values = DMatrix::zeros(spec.t + 1, d);
    let mut x = x0;
    for n in 0..spec.burn_in + spec.t + 1 {
        if n > 0 {
            let f = truth.f_star(&x);
            x = step(&f, rng)?;
            if let Some(k) = x.iter().position(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(Error::Numerical(format!(
                    "simulated trajectory diverged at step {n} (node {k}, value {}); \
                     use a smaller r or d, or a different seed",
                    x[k]
                )));
            }
        }
        if n >= spec.burn_in {
            let row = n - spec.burn_in;
            for k in 0..d {
                values[(row, k)] = x[k];
            }
        }
    }
    TimeSeries::from_matrix(values)
}

/// Gaussian network with uniform noise.
pub fn gen_gaussian(spec: &SimSpec) -> Result<(TimeSeries, GroundTruth)> {
    if spec.family != Family::Gaussian {
        return Err(Error::Config("gen_gaussian needs family = gaussian".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = draw_truth(spec, &mut rng);
    let noise = Uniform::new_inclusive(-GAUSSIAN_NOISE, GAUSSIAN_NOISE).expect("valid bounds");
    let x0: Vec<f64> = (0..spec.d).map(|_| rng.random::<f64>()).collect();
    let series = run_chain(
        spec,
        &truth,
        &mut rng,
        |f, rng| Ok(f.iter().map(|&m| m + noise.sample(rng)).collect()),
        x0,
    )?;
    Ok((series.with_family_hint(Family::Gaussian)?, truth))
}

/// Poisson count network.
pub fn gen_poisson(spec: &SimSpec) -> Result<(TimeSeries, GroundTruth)> {
    if spec.family != Family::Poisson {
        return Err(Error::Config("gen_poisson needs family = poisson".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = draw_truth(spec, &mut rng);
    let unit = Poisson::new(1.0).expect("positive rate");
    let x0: Vec<f64> = (0..spec.d).map(|_| unit.sample(&mut rng)).collect();
    let series = run_chain(
        spec,
        &truth,
        &mut rng,
        |f, rng| {
            f.iter()
                .map(|&m| {
                    let rate = m.exp();
                    Poisson::new(rate)
                        .map(|p| p.sample(rng))
                        .map_err(|_| Error::Numerical(format!("invalid Poisson rate exp({m})")))
                })
                .collect()
        },
        x0,
    )?;
    Ok((series.with_family_hint(Family::Poisson)?, truth))
}

/// Dispatch on `spec.family`.
pub fn generate(spec: &SimSpec) -> Result<(TimeSeries, GroundTruth)> {
    match spec.family {
        Family::Gaussian => gen_gaussian(spec),
        Family::Poisson => gen_poisson(spec),
        Family::Bernoulli => Err(Error::Config("no simulation recipe for the Bernoulli family".into())),
    }
}

/// Mean over nodes of `‖f̂_j − f*_j‖²_T` on the transition rows of `data`.
pub fn mse(fit: &NetworkFit, truth: &GroundTruth, data: &TimeSeries) -> Result<f64> {
    let d = truth.dim();
    if fit.dim() != d || data.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: fit has {} nodes, truth {d}, data {}",
            fit.dim(),
            data.dim()
        )));
    }
    mse_with(|x| fit.function_values(x), truth, data)
}

/// [`mse`] for an arbitrary evaluator of `f̂`.
pub fn mse_with(
    mut f_hat: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    truth: &GroundTruth,
    data: &TimeSeries,
) -> Result<f64> {
    let d = truth.dim();
    let t = data.transitions().max(1);
    let mut acc = 0.0;
    for row in 0..t {
        let x = data.row(row);
        let est = f_hat(&x)?;
        let tru = truth.f_star(&x);
        acc += est.iter().zip(&tru).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(acc / (d as f64 * t as f64))
}

/// Penalty used in replication runs: `3√(log(dr)/T)` for Gaussian data and
/// `1.3·log d·log T·√r/√T` for counts.
pub fn replication_lambda(family: Family, d: usize, t: usize, r: usize) -> f64 {
    let (d, t, r) = (d as f64, t as f64, r as f64);
    match family {
        Family::Poisson => 1.3 * d.ln() * t.ln() * r.sqrt() / t.sqrt(),
        _ => 3.0 * ((d * r).ln() / t).sqrt(),
    }
}

/// How the penalty of each grid cell is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GridMode {
    /// [`replication_lambda`] with `λ_H = 0`.
    Replication,
    /// Theory tuning from the rates module under the given mixing assumption.
    Theory { mixing: crate::rates::MixingSpec },
}

/// Fit configuration used for one simulated cell.
pub fn cell_config(mode: &GridMode, family: Family, d: usize, t: usize, r: usize) -> Result<FitConfig> {
    let (lt, lh) = match mode {
        GridMode::Replication => (REPLICATION_LOSS_SCALE * replication_lambda(family, d, t, r), 0.0),
        GridMode::Theory { mixing } => {
            let kernel = KernelSpec::finite_rank(r, Basis::PolyFactorial)?;
            let rep = crate::rates::tuning(&kernel, mixing, t, d, 1.0)?;
            (rep.lambda_t, rep.lambda_h)
        }
    };
    Ok(FitConfig { lambda_t: lt, lambda_h: lh, intercept_column: true, ..FitConfig::default() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub family: Family,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub r: usize,
    pub trial: usize,
    pub mse: f64,
    pub precision: f64,
    pub recall: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Precision and recall of estimated supports against the truth, pooled over nodes.
pub fn support_scores(estimated: &[Vec<usize>], truth: &[Vec<usize>]) -> (f64, f64) {
    let mut hits = 0usize;
    let mut est_total = 0usize;
    let mut true_total = 0usize;
    for (e, t) in estimated.iter().zip(truth) {
        hits += e.iter().filter(|k| t.contains(k)).count();
        est_total += e.len();
        true_total += t.len();
    }
    let precision = if est_total == 0 { 1.0 } else { hits as f64 / est_total as f64 };
    let recall = if true_total == 0 { 1.0 } else { hits as f64 / true_total as f64 };
    (precision, recall)
}

/// Simulate, fit and score one cell of the grid.
pub fn run_cell(mode: &GridMode, family: Family, d: usize, t: usize, r: usize, trial: usize, seed0: u64) -> GridRow {
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64, f64)> {
        let spec = SimSpec::new(family, d, t, r, seed0.wrapping_add(trial as u64));
        let (data, truth) = generate(&spec)?;
        let cfg = cell_config(mode, family, d, t, r)?;
        let fit = fit_network(&data, &truth.kernel(), family, &cfg)?;
        let err = mse(&fit, &truth, &data)?;
        let supports: Vec<Vec<usize>> = fit.node_fits.iter().map(|n| n.support.clone()).collect();
        let (p, rc) = support_scores(&supports, &truth.true_supports);
        Ok((err, p, rc))
    })();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((mse, precision, recall)) => GridRow { family, d, t, r, trial, mse, precision, recall, seconds, error: None },
        Err(e) => GridRow {
            family,
            d,
            t,
            r,
            trial,
            mse: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            seconds,
            error: Some(e.to_string()),
        },
    }
}

/// Grid axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub families: Vec<Family>,
    pub d_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub trials: usize,
    pub seed0: u64,
}

/// Run every `(family, d, T, r, trial)` cell. Trial `i` uses seed `seed0 + i`.
/// Failed cells are reported in the `error` column and the grid continues.
pub fn run_grid(grid: &GridSpec, mode: &GridMode) -> Result<Vec<GridRow>> {
    if grid.families.is_empty() || grid.d_list.is_empty() || grid.t_list.is_empty() || grid.r_list.is_empty() || grid.trials == 0 {
        return Err(Error::Config("experiment grid is empty".into()));
    }
    let mut cells = Vec::new();
    for &family in &grid.families {
        for &d in &grid.d_list {
            for &t in &grid.t_list {
                for &r in &grid.r_list {
                    for trial in 0..grid.trials {
                        cells.push((family, d, t, r, trial));
                    }
                }
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(family, d, t, r, trial)| run_cell(mode, family, d, t, r, trial, grid.seed0))
        .collect())
}

/// Median MSE of one `(family, d, T, r)` cell over its successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub family: Family,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub r: usize,
    pub median_mse: f64,
    pub successes: usize,
    pub failures: usize,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn summarize(rows: &[GridRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(Family, usize, usize, usize)> = Vec::new();
    for row in rows {
        let key = (row.family, row.d, row.t, row.r);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(family, d, t, r)| {
            let cell: Vec<&GridRow> = rows.iter().filter(|x| (x.family, x.d, x.t, x.r) == (family, d, t, r)).collect();
            let mut ok: Vec<f64> = cell.iter().filter(|x| x.error.is_none()).map(|x| x.mse).collect();
            let successes = ok.len();
            CellSummary { family, d, t, r, median_mse: median(&mut ok), successes, failures: cell.len() - successes }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Slope of log median MSE against log T for one `(family, d, r)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSlope {
    pub family: Family,
    pub d: usize,
    pub r: usize,
    pub slope: f64,
}

pub fn trend_slopes(summary: &[CellSummary]) -> Vec<TrendSlope> {
    let mut keys: Vec<(Family, usize, usize)> = Vec::new();
    for c in summary {
        if !keys.contains(&(c.family, c.d, c.r)) {
            keys.push((c.family, c.d, c.r));
        }
    }
    keys.into_iter()
        .map(|(family, d, r)| {
            let pts: Vec<(f64, f64)> = summary
                .iter()
                .filter(|c| (c.family, c.d, c.r) == (family, d, r))
                .map(|c| (c.t as f64, c.median_mse))
                .collect();
            TrendSlope { family, d, r, slope: loglog_slope(&pts) }
        })
        .collect()
}
