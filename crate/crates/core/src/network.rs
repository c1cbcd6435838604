//! Influence networks from fitted models, and spectral clustering of them.
//!
//! Plain clustering symmetrizes the adjacency, `S = (A + Aᵀ)/2`, and embeds
//! nodes with the eigenvectors of the `k` smallest eigenvalues of the
//! normalized Laplacian `I − D^{-1/2} S D^{-1/2}`. Covariate-assisted
//! clustering adds `λ·X Xᵀ` to the normalized similarity `D^{-1/2} S D^{-1/2}`
//! and embeds with the eigenvectors of the `k` largest eigenvalues, so that
//! `λ = 0` gives the same embedding as plain clustering. In both cases rows
//! are normalized to unit length and grouped by k-means.
//!
//! Nodes without any edge (and, when assisted, without covariate signal)
//! receive the label [`ISOLATED`].

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::NetworkFit;

/// Label given to nodes that cannot be embedded.
pub const ISOLATED: i64 = -1;

const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    #[serde(default)]
    pub lambda_cov: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
}

fn default_restarts() -> usize {
    10
}

impl ClusterConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, lambda_cov: 0.0, seed, kmeans_restarts: default_restarts() }
    }

    pub fn with_lambda_cov(mut self, lambda_cov: f64) -> Self {
        self.lambda_cov = lambda_cov;
        self
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.k < 2 || self.k > d {
            return Err(Error::Config(format!("need 2 ≤ k ≤ d, got k = {} with d = {d}", self.k)));
        }
        if !(self.lambda_cov >= 0.0) || !self.lambda_cov.is_finite() {
            return Err(Error::Config(format!("lambda_cov must be finite and non-negative, got {}", self.lambda_cov)));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be positive".into()));
        }
        Ok(())
    }
}

/// `A[j][k] = 1` iff `max(‖f_{j,k}‖_T, ‖f_{j,k}‖_H) > threshold`, as a matrix.
pub fn adjacency(fit: &NetworkFit, threshold: f64) -> DMatrix<f64> {
    let rows = fit.adjacency(threshold);
    let d = rows.len();
    DMatrix::from_fn(d, d, |j, k| f64::from(rows[j][k]))
}

/// Number of non-zero entries of each row (in-degree of each response node).
pub fn in_degrees(a: &DMatrix<f64>) -> Vec<usize> {
    a.row_iter().map(|r| r.iter().filter(|&&v| v != 0.0).count()).collect()
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidArgument(format!("adjacency must be square, got {}×{}", a.nrows(), a.ncols())));
    }
    if let Some(v) = a.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("adjacency entries must be finite and non-negative, found {v}")));
    }
    Ok(())
}

/// `D^{-1/2} S D^{-1/2}` with `S = (A + Aᵀ)/2`, plus the degree vector.
fn normalized_similarity(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let s = (a + a.transpose()) * 0.5;
    let mut deg: Vec<f64> = s.row_iter().map(|r| r.sum()).collect();
    // Self-loops alone do not connect a node to anything.
    for (i, d) in deg.iter_mut().enumerate() {
        if *d - s[(i, i)] <= 0.0 {
            *d = 0.0;
        }
    }
    let n = s.nrows();
    let scale: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let norm = DMatrix::from_fn(n, n, |i, j| s[(i, j)] * scale[i] * scale[j]);
    (norm, deg)
}

/// Eigenvectors for the `k` largest (or smallest) eigenvalues, as columns.
fn extreme_eigenvectors(m: &DMatrix<f64>, k: usize, largest: bool) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        let c = eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]);
        if largest { c.reverse() } else { c }
    });
    let mut out = DMatrix::zeros(m.nrows(), k);
    for (c, &i) in order.iter().take(k).enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

fn normalize_rows(mut x: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in x.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    x
}

/// Cluster the rows of `embedding` for the nodes in `active`; others get [`ISOLATED`].
fn label_nodes(d: usize, active: &[usize], embedding: &DMatrix<f64>, cfg: &ClusterConfig) -> Result<Vec<i64>> {
    if cfg.k > active.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the number of connected nodes ({})",
            cfg.k,
            active.len()
        )));
    }
    let points: Vec<Vec<f64>> = embedding.row_iter().map(|r| r.iter().copied().collect()).collect();
    let km = kmeans(&points, cfg.k, cfg.kmeans_restarts, cfg.seed)?;
    let mut labels = vec![ISOLATED; d];
    for (&node, &l) in active.iter().zip(&km.labels) {
        labels[node] = l as i64;
    }
    Ok(canonical_labels(&labels))
}

/// Relabel clusters `0, 1, …` in order of first appearance; [`ISOLATED`] is kept.
pub fn canonical_labels(labels: &[i64]) -> Vec<i64> {
    let mut seen: Vec<i64> = Vec::new();
    labels
        .iter()
        .map(|&l| {
            if l == ISOLATED {
                return ISOLATED;
            }
            match seen.iter().position(|&s| s == l) {
                Some(p) => p as i64,
                None => {
                    seen.push(l);
                    (seen.len() - 1) as i64
                }
            }
        })
        .collect()
}

/// Spectral clustering of an adjacency matrix.
pub fn spectral_cluster(a: &DMatrix<f64>, cfg: &ClusterConfig) -> Result<Vec<i64>> {
    check_square(a)?;
    let d = a.nrows();
    cfg.validate(d)?;
    let (norm, deg) = normalized_similarity(a);
    let active: Vec<usize> = (0..d).filter(|&i| deg[i] > 0.0).collect();
    if cfg.k > active.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the number of connected nodes ({})",
            cfg.k,
            active.len()
        )));
    }
    let sub = norm.select_rows(&active).select_columns(&active);
    let lap = DMatrix::identity(active.len(), active.len()) - sub;
    let emb = normalize_rows(extreme_eigenvectors(&lap, cfg.k, false));
    label_nodes(d, &active, &emb, cfg)
}

/// Spectral clustering of `D^{-1/2} S D^{-1/2} + λ·X Xᵀ`, with node covariates `X` (`d × p`).
pub fn covariate_cluster(a: &DMatrix<f64>, coords: &DMatrix<f64>, cfg: &ClusterConfig) -> Result<Vec<i64>> {
    check_square(a)?;
    let d = a.nrows();
    cfg.validate(d)?;
    if coords.nrows() != d {
        return Err(Error::InvalidArgument(format!("{} coordinate rows for {d} nodes", coords.nrows())));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("coordinates must be finite".into()));
    }
    if cfg.lambda_cov == 0.0 {
        return spectral_cluster(a, cfg);
    }
    let (norm, _) = normalized_similarity(a);
    let m = norm + (coords * coords.transpose()) * cfg.lambda_cov;
    let active: Vec<usize> = (0..d).filter(|&i| m.row(i).iter().any(|&v| v != 0.0)).collect();
    if cfg.k > active.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the number of nodes with any similarity ({})",
            cfg.k,
            active.len()
        )));
    }
    let sub = m.select_rows(&active).select_columns(&active);
    let emb = normalize_rows(extreme_eigenvectors(&sub, cfg.k, true));
    label_nodes(d, &active, &emb, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub objective: f64,
    /// Within-cluster sum of squares after each Lloyd iteration of the kept restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// k-means++ seeding; stops early when every point already coincides with a center.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centers).1).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("total > 0");
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        centers.push(points[pick].clone());
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> KMeansResult {
    let dim = points[0].len();
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut obj = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, dist) = nearest(p, &centers);
            if c != labels[i] {
                changed = true;
                labels[i] = c;
            }
            obj += dist;
        }
        history.push(obj);
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            if counts[c] > 0 {
                *center = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed && history.len() > 1 {
            break;
        }
    }
    let objective = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    history.push(objective);
    KMeansResult { labels, centers, objective, history }
}

/// Lloyd's algorithm from `restarts` k-means++ starts; the best run is kept.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if points.is_empty() || k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("points must be finite and of equal dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_centers(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
