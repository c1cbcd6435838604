//! Critical rates, mixing block counts and theory-driven tuning parameters.
//!
//! All quantities here are "up to constants": the constants `c1`, `c4` and
//! `C` that the theory leaves unspecified default to one and can be
//! overridden.
//!
//! The two critical radii are the smallest `σ > 0` satisfying
//!
//! ```text
//! ε_m :  (1/√m) · √(Σ_i min(μ_i, σ²))                                   ≤ σ²
//! ε̃_m :  log(dT) · { 3·log(M₀dT)/√m · √(Σ_{i≤M₀} min(μ_i, σ²))
//!                  + √(T/m) · √(Σ_{i>M₀} min(μ_i, σ²)) }                ≤ σ²   for some M₀ ≥ 1
//! ```
//!
//! Both left sides divided by `σ²` decrease in `σ`, so each radius is found
//! by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{power_tail, KernelKind, KernelSpec};

/// Relative bisection tolerance for [`epsilon_m`].
pub const EPSILON_TOL: f64 = 1e-8;
/// Relative bisection tolerance for [`epsilon_tilde_m`].
pub const EPSILON_TILDE_TOL: f64 = 1e-6;
/// Minimum upper end of the `M₀` search grid.
pub const M0_GRID_CAP: usize = 4096;
/// Smallest `φ`-mixing exponent covered by the theory.
pub const PHI_MIN_EXPONENT: f64 = 0.781;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingKind {
    Beta,
    Phi,
}

/// Algebraic mixing assumption: coefficients decay like `ℓ^(−r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingSpec {
    pub kind: MixingKind,
    pub r: f64,
    /// Split parameter of the β-mixing bound; also used by φ-mixing with `r > 2`.
    pub c0: Option<f64>,
}

impl MixingSpec {
    pub fn beta(r: f64, c0: f64) -> Self {
        Self { kind: MixingKind::Beta, r, c0: Some(c0) }
    }

    pub fn phi(r: f64) -> Self {
        Self { kind: MixingKind::Phi, r, c0: None }
    }

    /// Exponent `e` with `m = T^e`.
    pub fn block_exponent(&self) -> Result<f64> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::InvalidArgument(format!("mixing exponent r = {} must be positive", self.r)));
        }
        match self.kind {
            MixingKind::Beta => beta_exponent(self.r, self.c0),
            MixingKind::Phi => {
                if self.r < PHI_MIN_EXPONENT {
                    return Err(Error::InvalidArgument(format!(
                        "φ-mixing requires r ≥ {PHI_MIN_EXPONENT} (got r = {})",
                        self.r
                    )));
                }
                if self.r <= 2.0 {
                    Ok(self.r / (self.r + 2.0))
                } else {
                    beta_exponent(self.r, self.c0)
                }
            }
        }
    }
}

fn beta_exponent(r: f64, c0: Option<f64>) -> Result<f64> {
    let c0 = c0.ok_or_else(|| {
        Error::InvalidArgument("the β-mixing block count needs the split parameter c0".into())
    })?;
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("c0 = {c0} must lie in (0, 1]")));
    }
    if c0 * r < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "β-mixing requires r ≥ 1/c0 (got r = {r}, 1/c0 = {})",
            1.0 / c0
        )));
    }
    Ok((c0 * r - 1.0) / (c0 * r))
}

/// Effective number of independent blocks `m = ⌊T^e⌋`, clamped to `[1, T]`.
pub fn block_count(mix: &MixingSpec, t: usize) -> Result<usize> {
    if t == 0 {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    let e = mix.block_exponent()?;
    let p = (t as f64).powf(e);
    // Snap values that are integers up to rounding, e.g. 10000^(1/2).
    let rounded = p.round();
    let m = if (p - rounded).abs() <= 1e-9 * rounded.max(1.0) { rounded } else { p.floor() };
    Ok((m as usize).clamp(1, t))
}

/// `Σ_i min(μ_i, s)` over the untruncated spectrum.
fn clipped_trace(spec: &KernelSpec, s: f64) -> f64 {
    match spec.kind() {
        KernelKind::EigenDecay { alpha } => {
            let n = count_above(alpha, s);
            n as f64 * s + power_tail(2.0 * alpha, n)
        }
        _ => spec.eigenvalues().iter().map(|&mu| mu.min(s)).sum(),
    }
}

/// Number of decay eigenvalues `ℓ^(−2α)` strictly above `s`.
fn count_above(alpha: f64, s: f64) -> usize {
    let guess = s.powf(-1.0 / (2.0 * alpha));
    if !guess.is_finite() || guess > 1e15 {
        return usize::MAX / 4;
    }
    let mut n = guess.floor().max(0.0) as usize;
    let mu = |l: usize| (l as f64).powf(-2.0 * alpha);
    while n > 0 && mu(n) <= s {
        n -= 1;
    }
    while mu(n + 1) > s {
        n += 1;
    }
    n
}

/// Smallest `σ` with `g(σ) ≤ σ²`, assuming `g(σ)/σ²` decreases in `σ`.
fn bisect_radius(mut g: impl FnMut(f64) -> f64, rel_tol: f64) -> f64 {
    let ok = |g: &mut dyn FnMut(f64) -> f64, s: f64| g(s) <= s * s;
    let mut hi = 1.0;
    while !ok(&mut g, hi) {
        hi *= 2.0;
        assert!(hi < 1e300, "radius bracket diverged");
    }
    let mut lo = hi / 2.0;
    while ok(&mut g, lo) {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-300 {
            return hi;
        }
    }
    for _ in 0..400 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ok(&mut g, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Left side of the defining inequality of `ε_m` at radius `sigma`.
pub fn epsilon_m_lhs(spec: &KernelSpec, m: usize, sigma: f64) -> f64 {
    (clipped_trace(spec, sigma * sigma) / m as f64).sqrt()
}

/// Critical univariate rate `ε_m`.
pub fn epsilon_m(spec: &KernelSpec, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    Ok(bisect_radius(|s| epsilon_m_lhs(spec, m, s), EPSILON_TOL))
}

/// `Σ_{i≤M₀} min(μ_i, s)` and `Σ_{i>M₀} min(μ_i, s)`.
///
/// For decay kernels the infinite tail uses the integral bound
/// `L^(1−2α)/(2α−1)` past `L = max(M₀, #{μ_i > s})`.
fn split_clipped(spec: &KernelSpec, m0: usize, s: f64) -> (f64, f64) {
    match spec.kind() {
        KernelKind::EigenDecay { alpha } => {
            let p = 2.0 * alpha;
            let n = count_above(alpha, s);
            let head = if m0 <= n {
                m0 as f64 * s
            } else {
                n as f64 * s + (power_tail(p, n) - power_tail(p, m0))
            };
            let l = m0.max(n);
            let tail = (l - m0) as f64 * s + (l as f64).powf(1.0 - p) / (p - 1.0);
            (head, tail)
        }
        _ => {
            let eigs = spec.eigenvalues();
            let head = eigs.iter().take(m0).map(|&mu| mu.min(s)).sum();
            let tail = eigs.iter().skip(m0).map(|&mu| mu.min(s)).sum();
            (head, tail)
        }
    }
}

/// Left side of the `ε̃_m` inequality for a given `M₀`.
pub fn epsilon_tilde_lhs(spec: &KernelSpec, m: usize, t: usize, d: usize, m0: usize, sigma: f64) -> f64 {
    let (head, tail) = split_clipped(spec, m0, sigma * sigma);
    let ldt = (d as f64 * t as f64).ln();
    let lm0 = (m0 as f64 * d as f64 * t as f64).ln();
    let mf = m as f64;
    ldt * (3.0 * lm0 / mf.sqrt() * head.sqrt() + (t as f64 / mf).sqrt() * tail.sqrt())
}

/// Candidate values of `M₀`: powers of two up to the cap, plus the rank for
/// finite-rank kernels.
pub fn m0_grid(spec: &KernelSpec) -> Vec<usize> {
    let xi = if spec.is_finite_rank() { Some(spec.rank()) } else { None };
    let cap = M0_GRID_CAP.max(2 * xi.unwrap_or(0));
    let mut grid: Vec<usize> = std::iter::successors(Some(1usize), |&g| Some(g * 2))
        .take_while(|&g| g <= cap)
        .collect();
    if let Some(xi) = xi {
        grid.push(xi);
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

fn best_m0(spec: &KernelSpec, grid: &[usize], m: usize, t: usize, d: usize, sigma: f64) -> (f64, usize) {
    grid.iter()
        .map(|&m0| (epsilon_tilde_lhs(spec, m, t, d, m0, sigma), m0))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// Modified critical rate `ε̃_m` and the `M₀` that witnesses it.
pub fn epsilon_tilde_m(spec: &KernelSpec, m: usize, t: usize, d: usize) -> Result<(f64, usize)> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument("m and d must be at least 1".into()));
    }
    if m > t {
        return Err(Error::InvalidArgument(format!("block count m = {m} exceeds T = {t}")));
    }
    let grid = m0_grid(spec);
    let sigma = bisect_radius(|s| best_m0(spec, &grid, m, t, d, s).0, EPSILON_TILDE_TOL);
    let (_, m0) = best_m0(spec, &grid, m, t, d, sigma);
    Ok((sigma, m0))
}

/// `δ_{m,j} = √(c4·(s_j log d / m + s_j ε_m²))`.
pub fn delta_mj(s_j: usize, d: usize, m: usize, eps_m: f64, c4: f64) -> f64 {
    let s = s_j as f64;
    (c4 * (s * (d as f64).ln() / m as f64 + s * eps_m * eps_m)).sqrt()
}

/// High-probability bound on `‖f̂_j − f*_j‖²_T`:
/// `C·(s_j/ϑ²)·(log(dT)/√(mT) + √(m/T)·ε̃_m²)`.
pub fn error_bound(s_j: usize, theta: f64, d: usize, m: usize, t: usize, eps_tilde: f64, c: f64) -> Result<f64> {
    if m == 0 || m > t {
        return Err(Error::InvalidArgument(format!("need 1 ≤ m ≤ T (got m = {m}, T = {t})")));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("ϑ = {theta} must lie in (0, 1]")));
    }
    let (mf, tf) = (m as f64, t as f64);
    let ldt = (d as f64 * tf).ln();
    Ok(c * s_j as f64 / (theta * theta) * (ldt / (mf * tf).sqrt() + (mf / tf).sqrt() * eps_tilde * eps_tilde))
}

/// Unspecified theory constants, all defaulting to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c1: f64,
    pub c4: f64,
    pub c: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self { c1: 1.0, c4: 1.0, c: 1.0 }
    }
}

/// Everything the theory says about one `(kernel, mixing, T, d)` setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub t: usize,
    pub d: usize,
    pub m: usize,
    pub epsilon_m: f64,
    pub epsilon_tilde_m: f64,
    pub m0: usize,
    pub gamma_m: f64,
    pub gamma_tilde_m: f64,
    pub lambda_t: f64,
    pub lambda_h: f64,
    pub constants: TheoryConstants,
    /// Per-node `δ_{m,j}`; empty until [`RatesReport::with_nodes`] is called.
    pub delta_mj: Vec<f64>,
    /// Per-node error bound; empty until [`RatesReport::with_nodes`] is called.
    pub bound: Vec<f64>,
}

/// Theory tuning: `λ_T = 8√2·√(m/T)·γ̃_m` and `λ_H = 8√2·√(m/T)·γ̃_m²` with
/// `γ_m = c1·max(ε_m, √(log(dT)/m))` and `γ̃_m = max(γ_m, ε̃_m)`.
pub fn tuning(spec: &KernelSpec, mix: &MixingSpec, t: usize, d: usize, c1: f64) -> Result<RatesReport> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    let m = block_count(mix, t)?;
    let eps = epsilon_m(spec, m)?;
    let (eps_tilde, m0) = epsilon_tilde_m(spec, m, t, d)?;
    let ldt = (d as f64 * t as f64).ln();
    let gamma = c1 * eps.max((ldt / m as f64).sqrt());
    let gamma_tilde = gamma.max(eps_tilde);
    let scale = 8.0 * 2f64.sqrt() * (m as f64 / t as f64).sqrt();
    Ok(RatesReport {
        t,
        d,
        m,
        epsilon_m: eps,
        epsilon_tilde_m: eps_tilde,
        m0,
        gamma_m: gamma,
        gamma_tilde_m: gamma_tilde,
        lambda_t: scale * gamma_tilde,
        lambda_h: scale * gamma_tilde * gamma_tilde,
        constants: TheoryConstants { c1, ..Default::default() },
        delta_mj: Vec::new(),
        bound: Vec::new(),
    })
}

impl RatesReport {
    /// Fill the per-node quantities for the given in-degrees.
    pub fn with_nodes(mut self, in_degrees: &[usize], theta: f64, c4: f64, c: f64) -> Result<Self> {
        self.constants.c4 = c4;
        self.constants.c = c;
        self.delta_mj = in_degrees
            .iter()
            .map(|&s| delta_mj(s, self.d, self.m, self.epsilon_m, c4))
            .collect();
        self.bound = in_degrees
            .iter()
            .map(|&s| error_bound(s, theta, self.d, self.m, self.t, self.epsilon_tilde_m, c))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Flat `key = value` listing, one entry per line, in a fixed order.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("T".to_string(), self.t.to_string()),
            ("d".to_string(), self.d.to_string()),
            ("m".to_string(), self.m.to_string()),
            ("epsilon_m".to_string(), fmt(self.epsilon_m)),
            ("epsilon_tilde_m".to_string(), fmt(self.epsilon_tilde_m)),
            ("M0".to_string(), self.m0.to_string()),
            ("gamma_m".to_string(), fmt(self.gamma_m)),
            ("gamma_tilde_m".to_string(), fmt(self.gamma_tilde_m)),
            ("lambda_T".to_string(), fmt(self.lambda_t)),
            ("lambda_H".to_string(), fmt(self.lambda_h)),
            ("c1".to_string(), fmt(self.constants.c1)),
            ("c4".to_string(), fmt(self.constants.c4)),
            ("C".to_string(), fmt(self.constants.c)),
            ("note".to_string(), "\"values hold up to the constants c1, c4, C\"".to_string()),
        ];
        for (j, v) in self.delta_mj.iter().enumerate() {
            kv.push((format!("delta_mj.{j}"), fmt(*v)));
        }
        for (j, v) in self.bound.iter().enumerate() {
            kv.push((format!("bound.{j}"), fmt(*v)));
        }
        kv
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Basis;

    #[test]
    fn finite_rank_closed_form() {
        let k = KernelSpec::finite_rank(5, Basis::PolyFactorial).unwrap();
        let e = epsilon_m(&k, 1000).unwrap();
        assert!((e - (5.0f64 / 1000.0).sqrt()).abs() < 1e-7);
        let one = KernelSpec::finite_rank(1, Basis::PolyFactorial).unwrap();
        assert!((epsilon_m(&one, 1).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn block_count_examples() {
        assert_eq!(block_count(&MixingSpec::beta(2.0, 1.0), 10_000).unwrap(), 100);
        assert_eq!(block_count(&MixingSpec::beta(2.0, 0.5), 10_000).unwrap(), 1);
        assert_eq!(block_count(&MixingSpec::beta(2.0, 0.5), 7).unwrap(), 1);
        assert_eq!(block_count(&MixingSpec::phi(2.0), 10_000).unwrap(), 100);
    }

    #[test]
    fn block_count_preconditions() {
        let err = block_count(&MixingSpec::beta(1.5, 0.5), 100).unwrap_err();
        assert!(err.to_string().contains("r ≥ 1/c0"));
        assert!(block_count(&MixingSpec::phi(0.7), 100).unwrap_err().to_string().contains("0.781"));
        // φ-mixing beyond 2 falls back to the β formula and needs c0
        assert!(block_count(&MixingSpec::phi(3.0), 100).is_err());
        let phi3 = MixingSpec { kind: MixingKind::Phi, r: 3.0, c0: Some(1.0) };
        assert_eq!(block_count(&phi3, 1000).unwrap(), block_count(&MixingSpec::beta(3.0, 1.0), 1000).unwrap());
        assert!(block_count(&MixingSpec::beta(2.0, 1.0), 0).is_err());
    }

    #[test]
    fn count_above_is_exact() {
        for &alpha in &[0.75, 1.0, 2.0] {
            for &s in &[0.5, 0.1, 1e-3, 1.0 / 9.0, 0.25] {
                let n = count_above(alpha, s);
                let brute = (1..100_000).take_while(|&l| (l as f64).powf(-2.0 * alpha) > s).count();
                assert_eq!(n, brute, "alpha={alpha} s={s}");
            }
        }
    }

    #[test]
    fn epsilon_tilde_rejects_m_above_t() {
        let k = KernelSpec::finite_rank(2, Basis::Cosine).unwrap();
        assert!(epsilon_tilde_m(&k, 20, 10, 3).is_err());
    }

    #[test]
    fn finite_rank_witness_is_rank() {
        let k = KernelSpec::finite_rank(5, Basis::PolyFactorial).unwrap();
        let (_, m0) = epsilon_tilde_m(&k, 100, 1000, 8).unwrap();
        assert_eq!(m0, 5);
    }

    #[test]
    fn delta_examples() {
        let e = std::f64::consts::E;
        assert!((delta_mj(1, 3, 1, 0.0, 1.0) - 3f64.ln().sqrt()).abs() < 1e-15);
        // d = e is not an integer; check the formula with log d = 1 directly
        let direct = (1.0f64 * e.ln() / 1.0 + 0.0).sqrt();
        assert!((direct - 1.0).abs() < 1e-15);
        assert_eq!(delta_mj(3, 1, 5, 0.0, 1.0), 0.0);
        let a = delta_mj(2, 10, 50, 0.3, 1.7);
        let b = delta_mj(8, 10, 50, 0.3, 1.7);
        assert!((b / a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn error_bound_scalings() {
        let base = error_bound(1, 1.0, 4, 100, 100, 0.0, 1.0).unwrap();
        assert!((base - (400f64).ln() / 100.0).abs() < 1e-15);
        let b1 = error_bound(3, 0.7, 5, 20, 200, 0.4, 2.0).unwrap();
        let b2 = error_bound(6, 0.7, 5, 20, 200, 0.4, 2.0).unwrap();
        let b3 = error_bound(3, 0.35, 5, 20, 200, 0.4, 2.0).unwrap();
        assert!((b2 / b1 - 2.0).abs() < 1e-14);
        assert!((b3 / b1 - 4.0).abs() < 1e-12);
        assert!(error_bound(1, 1.0, 4, 101, 100, 0.0, 1.0).is_err());
        assert!(error_bound(1, 1.5, 4, 10, 100, 0.0, 1.0).is_err());
    }

    #[test]
    fn tuning_ratios() {
        let k = KernelSpec::finite_rank(5, Basis::PolyFactorial).unwrap();
        let rep = tuning(&k, &MixingSpec::beta(2.0, 1.0), 10_000, 8, 1.0).unwrap();
        assert_eq!(rep.m, 100);
        assert!((rep.lambda_h / rep.lambda_t - rep.gamma_tilde_m).abs() < 1e-12 * rep.gamma_tilde_m);
        assert_eq!(rep.gamma_tilde_m, rep.gamma_m.max(rep.epsilon_tilde_m));
        assert!(rep.epsilon_m <= rep.epsilon_tilde_m);
    }

    #[test]
    fn tuning_with_full_blocks() {
        // exponent → 1 as r → ∞; use a huge r so that m = T
        let k = KernelSpec::finite_rank(2, Basis::Cosine).unwrap();
        let rep = tuning(&k, &MixingSpec::beta(1e12, 1.0), 50, 3, 1.0).unwrap();
        assert_eq!(rep.m, 50);
        assert!((rep.lambda_t - 8.0 * 2f64.sqrt() * rep.gamma_tilde_m).abs() < 1e-12);
    }
}
