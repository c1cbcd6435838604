//! Univariate reproducing kernels represented by truncated Mercer expansions.
//!
//! A kernel is stored as a list of eigenvalues `μ_1 ≥ μ_2 ≥ … ≥ μ_M > 0`
//! together with a choice of eigenfunction family `Φ_i`. The kernel value is
//! `K(x, y) = Σ_i μ_i Φ_i(x) Φ_i(y)` and a function in the space is written
//! `f(x) = Σ_i β_i √μ_i Φ_i(x)`, so that `‖f‖_H = ‖β‖₂`.
//!
//! [`design_block`] turns one time-series column into the feature matrix
//! `Ψ[t, i] = √μ_i Φ_i(x_t)` and a triangular factor `R` of `Ψ/√T`, which
//! gives the empirical norm as `‖f‖_T = ‖Rβ‖₂`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of retained eigenpairs for infinite-rank kernels.
pub const DEFAULT_TRUNCATION_CAP: usize = 256;

/// Relative tail mass below which an infinite expansion is truncated.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

/// Which eigenvalue sequence a kernel uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Finitely many eigenvalues; the listed ones are the whole spectrum.
    FiniteRank,
    /// `μ_ℓ = ℓ^(−2α)` for every `ℓ ≥ 1`; the listed ones are a truncation.
    EigenDecay { alpha: f64 },
    /// User-supplied eigenvalues, treated as the whole spectrum.
    Custom,
}

/// Eigenfunction family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `Φ_i(x) = x^i / i!`
    PolyFactorial,
    /// `Φ_i(x) = cos(iπx)`, bounded by one in absolute value.
    Cosine,
}

impl Basis {
    /// Value of the `i`-th eigenfunction (`i ≥ 1`).
    pub fn value(self, i: usize, x: f64) -> f64 {
        debug_assert!(i >= 1);
        match self {
            Basis::PolyFactorial => {
                let mut v = 1.0;
                for l in 1..=i {
                    v *= x / l as f64;
                }
                v
            }
            Basis::Cosine => (i as f64 * std::f64::consts::PI * x).cos(),
        }
    }
}

/// A univariate RKHS given by a (truncated) Mercer eigen-system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    kind: KernelKind,
    eigenvalues: Vec<f64>,
    basis: Basis,
}

impl KernelSpec {
    /// Validating constructor.
    pub fn new(kind: KernelKind, eigenvalues: Vec<f64>, basis: Basis) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one eigenvalue".into()));
        }
        for (i, &mu) in eigenvalues.iter().enumerate() {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalue {} is {mu}; eigenvalues must be positive and finite",
                    i + 1
                )));
            }
            if i > 0 && mu > eigenvalues[i - 1] {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalues must be non-increasing (μ_{} = {} > μ_{} = {})",
                    i + 1,
                    mu,
                    i,
                    eigenvalues[i - 1]
                )));
            }
        }
        if let KernelKind::EigenDecay { alpha } = kind {
            check_alpha(alpha)?;
            for (i, &mu) in eigenvalues.iter().enumerate() {
                let want = decay_eigenvalue(alpha, i + 1);
                if mu != want {
                    return Err(Error::InvalidArgument(format!(
                        "eigen-decay eigenvalue {} is {mu}, expected {want}",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { kind, eigenvalues, basis })
    }

    /// Rank-`rank` kernel with all eigenvalues equal to one.
    pub fn finite_rank(rank: usize, basis: Basis) -> Result<Self> {
        Self::new(KernelKind::FiniteRank, vec![1.0; rank], basis)
    }

    /// Finite-rank kernel with explicit eigenvalues.
    pub fn finite_rank_with(eigenvalues: Vec<f64>, basis: Basis) -> Result<Self> {
        Self::new(KernelKind::FiniteRank, eigenvalues, basis)
    }

    /// Eigenvalue-decay kernel `μ_ℓ = ℓ^(−2α)` truncated with the default rule:
    /// the smallest `M` whose tail mass is at most `1e-8` of the trace, capped
    /// at [`DEFAULT_TRUNCATION_CAP`].
    pub fn eigen_decay(alpha: f64, basis: Basis) -> Result<Self> {
        check_alpha(alpha)?;
        let m = choose_truncation(alpha, DEFAULT_TAIL_TOLERANCE, DEFAULT_TRUNCATION_CAP);
        Self::eigen_decay_truncated(alpha, m, basis)
    }

    /// Eigenvalue-decay kernel with an explicit truncation level.
    pub fn eigen_decay_truncated(alpha: f64, truncation: usize, basis: Basis) -> Result<Self> {
        check_alpha(alpha)?;
        let eigs = (1..=truncation).map(|l| decay_eigenvalue(alpha, l)).collect();
        Self::new(KernelKind::EigenDecay { alpha }, eigs, basis)
    }

    /// Kernel with arbitrary eigenvalues.
    pub fn custom(eigenvalues: Vec<f64>, basis: Basis) -> Result<Self> {
        Self::new(KernelKind::Custom, eigenvalues, basis)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Retained eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained eigenpairs `M`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// True when the listed eigenvalues are the full spectrum.
    pub fn is_finite_rank(&self) -> bool {
        !matches!(self.kind, KernelKind::EigenDecay { .. })
    }

    /// The `i`-th eigenvalue of the untruncated spectrum (1-based).
    pub fn eigenvalue(&self, i: usize) -> f64 {
        assert!(i >= 1, "eigenvalues are 1-indexed");
        match self.kind {
            KernelKind::EigenDecay { alpha } => decay_eigenvalue(alpha, i),
            _ => self.eigenvalues.get(i - 1).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_{i>n} μ_i` over the untruncated spectrum.
    pub fn tail_sum(&self, n: usize) -> f64 {
        match self.kind {
            KernelKind::EigenDecay { alpha } => power_tail(2.0 * alpha, n),
            _ => self.eigenvalues.iter().skip(n).sum(),
        }
    }

    /// Trace `H_μ = Σ_i μ_i` of the untruncated spectrum.
    pub fn trace(&self) -> f64 {
        self.tail_sum(0)
    }

    /// Feature vector `(√μ_i Φ_i(x))_{i=1..M}` written into `out`.
    pub fn features_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rank());
        match self.basis {
            Basis::PolyFactorial => {
                let mut phi = 1.0;
                for (i, (o, mu)) in out.iter_mut().zip(&self.eigenvalues).enumerate() {
                    phi *= x / (i + 1) as f64;
                    *o = mu.sqrt() * phi;
                }
            }
            Basis::Cosine => {
                for (i, (o, mu)) in out.iter_mut().zip(&self.eigenvalues).enumerate() {
                    *o = mu.sqrt() * Basis::Cosine.value(i + 1, x);
                }
            }
        }
    }

    pub fn features(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rank()];
        self.features_into(x, &mut out);
        out
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    // The decay must be summable for the trace to exist, which rules out α = 1/2.
    if !(alpha.is_finite() && alpha > 0.5) {
        return Err(Error::InvalidArgument(format!(
            "eigen-decay exponent α = {alpha} must exceed 1/2 for a finite trace"
        )));
    }
    Ok(())
}

fn decay_eigenvalue(alpha: f64, l: usize) -> f64 {
    (l as f64).powf(-2.0 * alpha)
}

/// `Σ_{i>n} i^(−s)` for `s > 1`.
///
/// Terms below 64 are summed directly; the remainder uses the Euler–Maclaurin
/// expansion through the third derivative, accurate to roughly `N^(−s−5)`.
pub fn power_tail(s: f64, n: usize) -> f64 {
    assert!(s > 1.0, "power tail diverges for s ≤ 1");
    const SWITCH: usize = 64;
    let start = n + 1;
    let big_n = start.max(SWITCH);
    let mut direct = 0.0;
    // Sum small terms from the smallest upwards for accuracy.
    for i in (start..big_n).rev() {
        direct += (i as f64).powf(-s);
    }
    let nf = big_n as f64;
    let em = nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * nf.powf(-s - 3.0) / 720.0;
    direct + em
}

/// Smallest truncation `M ≤ cap` with `Σ_{i>M} i^(−2α) ≤ tail_rel · Σ_i i^(−2α)`.
pub fn choose_truncation(alpha: f64, tail_rel: f64, cap: usize) -> usize {
    let s = 2.0 * alpha;
    let total = power_tail(s, 0);
    (1..=cap)
        .find(|&m| power_tail(s, m) <= tail_rel * total)
        .unwrap_or(cap)
}

/// Truncated Mercer sum `Σ_{i≤M} μ_i Φ_i(x) Φ_i(y)`.
pub fn mercer_eval(spec: &KernelSpec, x: f64, y: f64) -> Result<f64> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!("kernel arguments must be finite (got {x}, {y})")));
    }
    let fx = spec.features(x);
    let fy = spec.features(y);
    Ok(fx.iter().zip(&fy).map(|(a, b)| a * b).sum())
}

/// Feature matrix of one predictor column plus the factor used for empirical norms.
#[derive(Debug, Clone)]
pub struct DesignBlock {
    /// `T × M` matrix with `Ψ[t, i] = √μ_i Φ_i(x_t)` (column-centred if requested).
    pub psi: DMatrix<f64>,
    /// Column means that were subtracted (zeros when centring is off).
    pub centering_means: DVector<f64>,
    /// `M × M` upper-triangular factor with `RᵀR = ΨᵀΨ / T`.
    pub r: DMatrix<f64>,
    /// Smallest singular value of `R`.
    pub sigma_min: f64,
    /// Set when `T < M` or `R` is numerically singular.
    pub rank_deficient: bool,
}

impl DesignBlock {
    pub fn n_rows(&self) -> usize {
        self.psi.nrows()
    }

    pub fn rank(&self) -> usize {
        self.psi.ncols()
    }

    /// `‖f‖_T = ‖Rβ‖₂` for the function with coefficients `beta`.
    pub fn empirical_norm(&self, beta: &DVector<f64>) -> f64 {
        (&self.r * beta).norm()
    }

    /// `ΨᵀΨ / T`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.r.transpose() * &self.r
    }
}

fn check_column(column: &[f64]) -> Result<()> {
    if column.is_empty() {
        return Err(Error::Data("design column is empty".into()));
    }
    if let Some(t) = column.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {} at row {t}", column[t])));
    }
    Ok(())
}

fn raw_features(spec: &KernelSpec, column: &[f64]) -> DMatrix<f64> {
    let m = spec.rank();
    let mut psi = DMatrix::zeros(column.len(), m);
    let mut row = vec![0.0; m];
    for (t, &x) in column.iter().enumerate() {
        spec.features_into(x, &mut row);
        for (i, v) in row.iter().enumerate() {
            psi[(t, i)] = *v;
        }
    }
    psi
}

/// Build the feature matrix and empirical-norm factor for one column.
pub fn design_block(spec: &KernelSpec, column: &[f64], center: bool) -> Result<DesignBlock> {
    check_column(column)?;
    let t = column.len();
    let m = spec.rank();
    if t < m {
        log::warn!("design block has T = {t} rows but M = {m} eigenpairs; R is rank deficient");
    }
    let mut psi = raw_features(spec, column);
    let mut means = DVector::zeros(m);
    if center {
        for i in 0..m {
            let mean = psi.column(i).sum() / t as f64;
            means[i] = mean;
            psi.column_mut(i).add_scalar_mut(-mean);
        }
    }

    let scaled = &psi / (t as f64).sqrt();
    let qr_r = scaled.qr().r();
    let mut r = DMatrix::zeros(m, m);
    let rows = qr_r.nrows().min(m);
    r.view_mut((0, 0), (rows, m)).copy_from(&qr_r.rows(0, rows));

    let sv = r.clone().singular_values();
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let rank_deficient = t < m || sigma_min <= 1e-12 * sigma_max.max(f64::MIN_POSITIVE);

    Ok(DesignBlock {
        psi,
        centering_means: means,
        r,
        sigma_min,
        rank_deficient,
    })
}

/// `T × T` matrix with entries `K(x_{t1}, x_{t2})`.
pub fn empirical_kernel_matrix(spec: &KernelSpec, column: &[f64]) -> Result<DMatrix<f64>> {
    check_column(column)?;
    let psi = raw_features(spec, column);
    Ok(&psi * psi.transpose())
}
