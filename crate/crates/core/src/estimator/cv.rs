//! Rolling-back validation for choosing `(λ_T, λ_H)`.
//!
//! Three folds are used. With `N` rows and horizon `h`, fold `f ∈ {1, 2, 3}`
//! tests on the `h` transitions that end `(f−1)·h` steps before the end of the
//! data, and trains on the `N − 1 − 3h` transitions immediately preceding
//! them. Every fold therefore has the same training length, and the folds
//! step back through time one horizon at a time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_network, predict, FitConfig};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::kernels::KernelSpec;
use crate::series::TimeSeries;

/// Number of validation folds.
pub const FOLDS: usize = 3;

/// Average Pearson statistic `(1/n) Σ (observed − mean)² / mean`.
pub fn pearson_chi2(means: &[f64], observed: &[f64]) -> Result<f64> {
    if means.len() != observed.len() || means.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need equal non-zero lengths (got {} means, {} observations)",
            means.len(),
            observed.len()
        )));
    }
    let mut acc = 0.0;
    for (i, (&mu, &x)) in means.iter().zip(observed).enumerate() {
        if !(mu > 0.0) {
            return Err(Error::Domain(format!("predicted mean {mu} at index {i} is not positive")));
        }
        acc += (x - mu) * (x - mu) / mu;
    }
    Ok(acc / means.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda_t: f64,
    pub lambda_h: f64,
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_t: f64,
    pub lambda_h: f64,
    pub horizon: usize,
    pub train_len: usize,
    /// One row per distinct grid entry, in first-appearance order.
    pub table: Vec<CvRow>,
}

/// Row ranges `(train_start, split, test_end)` for each fold: training rows
/// are `train_start..=split`, test transitions start at rows `split..test_end−1`.
pub fn fold_windows(n_rows: usize, horizon: usize) -> Result<Vec<(usize, usize, usize)>> {
    let required = (FOLDS + 1) * horizon + 1;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if n_rows < required {
        return Err(Error::Data(format!(
            "cross-validation with horizon {horizon} needs at least {required} rows (T ≥ {}), got {n_rows}",
            required - 1
        )));
    }
    let last = n_rows - 1;
    let train_len = last - FOLDS * horizon;
    Ok((1..=FOLDS)
        .map(|f| {
            let split = last - f * horizon;
            (split - train_len, split, split + horizon + 1)
        })
        .collect())
}

fn fold_loss(
    data: &TimeSeries,
    window: (usize, usize, usize),
    kernel: &KernelSpec,
    family: Family,
    cfg: &FitConfig,
) -> Result<f64> {
    let (start, split, end) = window;
    let train = data.window(start, split + 1)?;
    let fit = fit_network(&train, kernel, family, cfg)?;
    let d = data.dim();
    let mut means = vec![Vec::new(); d];
    let mut observed = vec![Vec::new(); d];
    for t in split..end - 1 {
        let x = data.row(t);
        let next = data.row(t + 1);
        match predict(&fit, &x) {
            Ok((_, mu)) => {
                for j in 0..d {
                    means[j].push(mu[j]);
                    observed[j].push(next[j]);
                }
            }
            // A predictor outside the safe range scores as an unusable fit.
            Err(Error::Domain(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    let per_node: Result<Vec<f64>> = (0..d)
        .map(|j| match family {
            Family::Poisson => pearson_chi2(&means[j], &observed[j]),
            _ => Ok(means[j]
                .iter()
                .zip(&observed[j])
                .map(|(m, x)| (x - m) * (x - m))
                .sum::<f64>()
                / means[j].len() as f64),
        })
        .collect();
    let per_node = per_node?;
    Ok(per_node.iter().sum::<f64>() / d as f64)
}

/// Pick the penalty pair with the smallest mean validation loss.
///
/// The loss is the Pearson statistic for Poisson models and the mean squared
/// prediction error otherwise, averaged over nodes. Exact ties go to the
/// larger `λ_T`, then the larger `λ_H`.
pub fn cross_validate(
    data: &TimeSeries,
    grid: &[(f64, f64)],
    horizon: usize,
    kernel: &KernelSpec,
    family: Family,
    cfg: &FitConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Config("cross-validation grid is empty".into()));
    }
    let mut unique: Vec<(f64, f64)> = Vec::new();
    for &pair in grid {
        if !unique.contains(&pair) {
            unique.push(pair);
        }
    }
    let windows = fold_windows(data.n_rows(), horizon)?;
    let train_len = windows[0].1 - windows[0].0;

    let table = unique
        .par_iter()
        .map(|&(lt, lh)| {
            let fold_cfg = FitConfig { lambda_t: lt, lambda_h: lh, ..cfg.clone() };
            let fold_losses = windows
                .iter()
                .map(|&w| fold_loss(data, w, kernel, family, &fold_cfg))
                .collect::<Result<Vec<f64>>>()?;
            let mean_loss = fold_losses.iter().sum::<f64>() / fold_losses.len() as f64;
            Ok(CvRow { lambda_t: lt, lambda_h: lh, fold_losses, mean_loss })
        })
        .collect::<Result<Vec<CvRow>>>()?;

    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_loss
                .total_cmp(&b.mean_loss)
                .then(b.lambda_t.total_cmp(&a.lambda_t))
                .then(b.lambda_h.total_cmp(&a.lambda_h))
        })
        .expect("grid is non-empty");

    Ok(CvResult {
        lambda_t: best.lambda_t,
        lambda_h: best.lambda_h,
        horizon,
        train_len,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_chi2(&[1.0, 2.0, 3.5], &[1.0, 2.0, 3.5]).unwrap(), 0.0);
        assert_eq!(pearson_chi2(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(pearson_chi2(&[4.0], &[2.0]).unwrap(), 1.0);
    }

    #[test]
    fn pearson_rejects_nonpositive_means() {
        assert!(matches!(pearson_chi2(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::Domain(_))));
        assert!(pearson_chi2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn folds_step_back_one_horizon() {
        let w = fold_windows(41, 5).unwrap();
        // 40 transitions, 25 used for training in every fold
        assert_eq!(w, vec![(10, 35, 41), (5, 30, 36), (0, 25, 31)]);
        for (s, split, _) in &w {
            assert_eq!(split - s, 25);
        }
    }

    #[test]
    fn short_series_reports_required_length() {
        let err = fold_windows(20, 5).unwrap_err();
        assert!(err.to_string().contains("at least 21 rows"));
    }
}
