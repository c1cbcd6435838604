use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitConfig;
use crate::glm::Family;
use crate::kernels::{Basis, KernelSpec};
use crate::network::ClusterConfig;
use crate::rates::{MixingKind, MixingSpec};
use crate::simulate::GridMode;

/// Contents of a run configuration file (TOML). Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory, relative to the configuration file.
    pub out: Option<PathBuf>,
    pub family: Family,
    pub kernel: Option<KernelSection>,
    pub mixing: Option<MixingSection>,
    pub lambda: LambdaSection,
    pub solver: SolverSection,
    pub rates: RatesSection,
    pub simulate: Option<SimulateSection>,
    pub experiment: Option<ExperimentSection>,
    pub cluster: Option<ClusterSection>,
    pub predict: Option<PredictSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKindName {
    FiniteRank,
    EigenDecay,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKindName,
    /// Number of unit eigenvalues (`finite_rank`).
    pub rank: Option<usize>,
    /// Decay exponent (`eigen_decay`).
    pub alpha: Option<f64>,
    /// Number of retained eigenvalues (`eigen_decay`); chosen automatically if absent.
    pub truncation: Option<usize>,
    /// Explicit spectrum (`custom`, or `finite_rank` with non-unit eigenvalues).
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default = "default_basis")]
    pub basis: Basis,
}

fn default_basis() -> Basis {
    Basis::PolyFactorial
}

impl KernelSection {
    pub fn build(&self) -> Result<KernelSpec> {
        let cfg = |e: Error| Error::Config(format!("[kernel]: {e}"));
        let unused = |key: &str, present: bool| {
            if present {
                Err(Error::Config(format!("[kernel]: `{key}` does not apply to kind = {:?}", self.kind)))
            } else {
                Ok(())
            }
        };
        match self.kind {
            KernelKindName::FiniteRank => {
                unused("alpha", self.alpha.is_some())?;
                unused("truncation", self.truncation.is_some())?;
                match (&self.eigenvalues, self.rank) {
                    (Some(_), Some(_)) => Err(Error::Config("[kernel]: give either `rank` or `eigenvalues`".into())),
                    (Some(ev), None) => KernelSpec::finite_rank_with(ev.clone(), self.basis).map_err(cfg),
                    (None, Some(r)) => KernelSpec::finite_rank(r, self.basis).map_err(cfg),
                    (None, None) => Err(Error::Config("[kernel]: finite_rank needs `rank`".into())),
                }
            }
            KernelKindName::EigenDecay => {
                unused("rank", self.rank.is_some())?;
                unused("eigenvalues", self.eigenvalues.is_some())?;
                let alpha = self.alpha.ok_or_else(|| Error::Config("[kernel]: eigen_decay needs `alpha`".into()))?;
                match self.truncation {
                    Some(n) => KernelSpec::eigen_decay_truncated(alpha, n, self.basis),
                    None => KernelSpec::eigen_decay(alpha, self.basis),
                }
                .map_err(cfg)
            }
            KernelKindName::Custom => {
                unused("rank", self.rank.is_some())?;
                unused("alpha", self.alpha.is_some())?;
                unused("truncation", self.truncation.is_some())?;
                let ev = self
                    .eigenvalues
                    .clone()
                    .ok_or_else(|| Error::Config("[kernel]: custom needs `eigenvalues`".into()))?;
                KernelSpec::custom(ev, self.basis).map_err(cfg)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub kind: MixingKind,
    pub r: f64,
    pub c0: Option<f64>,
}

impl MixingSection {
    pub fn build(&self) -> MixingSpec {
        MixingSpec { kind: self.kind, r: self.r, c0: self.c0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    #[default]
    Theory,
    Fixed,
    Cv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSection {
    pub mode: LambdaMode,
    pub lambda_t: Option<f64>,
    pub lambda_h: Option<f64>,
    /// Constant in `γ_m` for theory tuning.
    pub c1: f64,
    /// Cross-validation grid: every pair from `grid_t × grid_h`.
    pub grid_t: Vec<f64>,
    pub grid_h: Vec<f64>,
    pub horizon: Option<usize>,
}

impl Default for LambdaSection {
    fn default() -> Self {
        Self {
            mode: LambdaMode::Theory,
            lambda_t: None,
            lambda_h: None,
            c1: 1.0,
            grid_t: Vec::new(),
            grid_h: vec![0.0],
            horizon: None,
        }
    }
}

impl LambdaSection {
    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.grid_t
            .iter()
            .flat_map(|&t| self.grid_h.iter().map(move |&h| (t, h)))
            .collect()
    }

    pub fn cv_horizon(&self) -> Result<usize> {
        if self.grid_t.is_empty() || self.grid_h.is_empty() {
            return Err(Error::Config("[lambda]: cross-validation needs non-empty `grid_t` and `grid_h`".into()));
        }
        self.horizon
            .ok_or_else(|| Error::Config("[lambda]: cross-validation needs `horizon`".into()))
    }
}

/// Solver options; mirrors [`FitConfig`] without the penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol_rel_obj: f64,
    pub admm_rho: f64,
    pub center: bool,
    pub intercept: bool,
    pub support_eps_rel: f64,
    pub offsets: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            max_outer: f.max_outer,
            max_inner: f.max_inner,
            tol_rel_obj: f.tol_rel_obj,
            admm_rho: f.admm_rho,
            center: f.center,
            intercept: f.intercept_column,
            support_eps_rel: f.support_eps_rel,
            offsets: f.offsets,
        }
    }
}

impl SolverSection {
    pub fn fit_config(&self, lambda_t: f64, lambda_h: f64) -> FitConfig {
        FitConfig {
            lambda_t,
            lambda_h,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            tol_rel_obj: self.tol_rel_obj,
            admm_rho: self.admm_rho,
            center: self.center,
            offsets: self.offsets.clone(),
            intercept_column: self.intercept,
            support_eps_rel: self.support_eps_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesSection {
    /// Number of transitions; taken from `--data` when absent.
    pub t: Option<usize>,
    /// Number of series; taken from `--data` when absent.
    pub d: Option<usize>,
    /// In-degree assumed for every node when reporting per-node bounds.
    pub sparsity: Option<usize>,
    /// Strong-convexity constant for the per-node bounds.
    pub theta: f64,
    pub c4: f64,
    pub c: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        Self { t: None, d: None, sparsity: None, theta: 1.0, c4: 1.0, c: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub d: usize,
    pub t: usize,
    pub r: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_s() -> usize {
    3
}

fn default_burn_in() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    #[default]
    Replication,
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Defaults to the top-level `family`.
    #[serde(default)]
    pub families: Vec<Family>,
    pub d_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub trials: usize,
    /// Defaults to the top-level `seed`.
    pub seed0: Option<u64>,
    #[serde(default)]
    pub mode: ExperimentMode,
}

impl ExperimentSection {
    pub fn grid_mode(&self, mixing: Option<&MixingSection>) -> Result<GridMode> {
        match self.mode {
            ExperimentMode::Replication => Ok(GridMode::Replication),
            ExperimentMode::Theory => {
                let mixing = mixing
                    .ok_or_else(|| Error::Config("[experiment]: mode = \"theory\" needs a [mixing] section".into()))?;
                Ok(GridMode::Theory { mixing: mixing.build() })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub k: usize,
    #[serde(default)]
    pub lambda_cov: f64,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    /// Edge threshold on `max(‖f‖_T, ‖f‖_H)`.
    #[serde(default)]
    pub threshold: f64,
    /// Fitted network (`fit.json`), relative to the configuration file.
    pub fit: PathBuf,
    /// Optional node covariates: CSV with a header and one row per node.
    pub coords: Option<PathBuf>,
}

fn default_restarts() -> usize {
    10
}

impl ClusterSection {
    pub fn cluster_config(&self, seed: u64) -> ClusterConfig {
        ClusterConfig { k: self.k, lambda_cov: self.lambda_cov, seed, kmeans_restarts: self.kmeans_restarts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    /// Fitted network (`fit.json`), relative to the configuration file.
    pub fit: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read and parse a configuration file; returns the config and the raw bytes.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read configuration {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Config(format!("{} is not valid UTF-8", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        self.kernel
            .as_ref()
            .ok_or_else(|| Error::Config("missing [kernel] section".into()))?
            .build()
    }

    pub fn mixing(&self) -> Result<MixingSpec> {
        Ok(self
            .mixing
            .as_ref()
            .ok_or_else(|| Error::Config("missing [mixing] section".into()))?
            .build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("bogus"));
        let err = RunConfig::parse("[kernel]\nkind = \"finite_rank\"\nrank = 2\nsize = 3\n").unwrap_err();
        assert!(err.to_string().contains("size"));
    }

    #[test]
    fn full_config_parses() {
        let cfg = RunConfig::parse(
            r#"
            seed = 7
            family = "poisson"
            [kernel]
            kind = "eigen_decay"
            alpha = 1.0
            basis = "cosine"
            [mixing]
            kind = "beta"
            r = 2.0
            c0 = 1.0
            [lambda]
            mode = "cv"
            grid_t = [0.1, 0.2]
            grid_h = [0.0, 0.01]
            horizon = 5
            [solver]
            intercept = true
            "#,
        )
        .unwrap();
        assert_eq!(cfg.family, Family::Poisson);
        assert_eq!(cfg.lambda.grid().len(), 4);
        assert!(cfg.kernel().is_ok());
        assert_eq!(cfg.mixing().unwrap(), MixingSpec::beta(2.0, 1.0));
        assert!(cfg.solver.fit_config(0.1, 0.0).intercept_column);
    }

    #[test]
    fn kernel_section_rejects_mixed_keys() {
        let k = KernelSection {
            kind: KernelKindName::FiniteRank,
            rank: Some(2),
            alpha: Some(1.0),
            truncation: None,
            eigenvalues: None,
            basis: Basis::Cosine,
        };
        assert!(k.build().is_err());
    }
}
