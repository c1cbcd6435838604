//! Canonical exponential families used as link machinery.
//!
//! Every family is written through its log-partition function `Z`: the
//! conditional density of a response `y` given a linear predictor `η` is
//! proportional to `exp(η·φ(y) − Z(η))`, with `φ` the identity here. The base
//! measure is dropped throughout since it does not depend on `η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `|η|` accepted for the Poisson family before `exp` is deemed unsafe.
pub const POISSON_ETA_LIMIT: f64 = 30.0;

/// Largest argument of `exp` tolerated by [`bregman`].
pub const EXP_OVERFLOW_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `Z(x) = x²/2`, real responses.
    #[default]
    Gaussian,
    /// `Z(x) = eˣ`, non-negative integer responses.
    Poisson,
    /// `Z(x) = log(1 + eˣ)`, responses in `{0, 1}`.
    Bernoulli,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
            Family::Bernoulli => "bernoulli",
        }
    }

    /// Log-partition function `Z`.
    pub fn log_partition(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * x * x,
            Family::Poisson => x.exp(),
            Family::Bernoulli => softplus(x),
        }
    }

    /// `Z′`, the conditional mean.
    pub fn mean(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => x,
            Family::Poisson => x.exp(),
            Family::Bernoulli => sigmoid(x),
        }
    }

    /// `Z″`, the conditional variance.
    pub fn variance(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Poisson => x.exp(),
            Family::Bernoulli => {
                let p = sigmoid(x);
                p * (1.0 - p)
            }
        }
    }

    /// Sufficient statistic `φ` (the identity for every supported family).
    pub fn sufficient_stat(self, y: f64) -> f64 {
        y
    }

    /// Bound on `|η|` inside which likelihood evaluations are trusted.
    pub fn eta_limit(self) -> f64 {
        match self {
            Family::Gaussian => f64::INFINITY,
            Family::Poisson => POISSON_ETA_LIMIT,
            Family::Bernoulli => EXP_OVERFLOW_LIMIT,
        }
    }

    pub fn eta_in_range(self, eta: f64) -> bool {
        eta.is_finite() && eta.abs() <= self.eta_limit()
    }

    pub fn check_eta(self, index: usize, eta: f64) -> Result<()> {
        if self.eta_in_range(eta) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "linear predictor η[{index}] = {eta} outside the safe range ±{} for the {} family",
                self.eta_limit(),
                self.name()
            )))
        }
    }

    /// Whether `y` lies in the family's response domain.
    pub fn response_ok(self, y: f64) -> bool {
        match self {
            Family::Gaussian => y.is_finite(),
            Family::Poisson => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
            Family::Bernoulli => y == 0.0 || y == 1.0,
        }
    }

    pub fn check_response(self, index: usize, y: f64) -> Result<()> {
        if self.response_ok(y) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "response y[{index}] = {y} is outside the {} response domain",
                self.name()
            )))
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "poisson" => Ok(Family::Poisson),
            "bernoulli" => Ok(Family::Bernoulli),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bregman divergence `B_Z(x‖y) = Z(x) − Z(y) − Z′(y)(x − y)`.
pub fn bregman(fam: Family, x: f64, y: f64) -> Result<f64> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!("Bregman arguments must be finite (got {x}, {y})")));
    }
    if fam != Family::Gaussian && (x.abs() > EXP_OVERFLOW_LIMIT || y.abs() > EXP_OVERFLOW_LIMIT) {
        return Err(Error::Domain(format!(
            "Bregman arguments ({x}, {y}) exceed ±{EXP_OVERFLOW_LIMIT} for the {} family",
            fam.name()
        )));
    }
    let value = match fam {
        Family::Gaussian => 0.5 * (x - y) * (x - y),
        // e^y (e^(x−y) − 1 − (x−y)), written to avoid cancellation near x = y.
        Family::Poisson => {
            let h = x - y;
            y.exp() * (h.exp_m1() - h)
        }
        Family::Bernoulli => {
            fam.log_partition(x) - fam.log_partition(y) - fam.mean(y) * (x - y)
        }
    };
    Ok(value.max(0.0))
}

/// Modulus `ϑ` of strong convexity of `Z` over the range reachable by the
/// linear predictor, following the closed forms for each family.
///
/// `trace_mu` is the kernel trace `H_μ` and `s_max` the maximum in-degree.
/// The Poisson value is capped at one, which only matters for `v_min > reach`.
pub fn strong_convexity(fam: Family, v_min: f64, v_max: f64, s_max: usize, trace_mu: f64) -> Result<f64> {
    if !(v_min.is_finite() && v_max.is_finite() && trace_mu.is_finite()) || v_min > v_max || trace_mu <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need finite v_min ≤ v_max and positive trace (got {v_min}, {v_max}, {trace_mu})"
        )));
    }
    let reach = (16.0 * trace_mu.sqrt() + 1.0) * s_max as f64;
    Ok(match fam {
        Family::Gaussian => 1.0,
        Family::Bernoulli => 1.0 / ((v_max.max(-v_min) + reach).exp() + 3.0),
        Family::Poisson => (v_min - reach).exp().min(1.0),
    })
}

fn check_pairs(fam: Family, eta: &[f64], y: &[f64]) -> Result<()> {
    if eta.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "predictor length {} differs from response length {}",
            eta.len(),
            y.len()
        )));
    }
    if eta.is_empty() {
        return Err(Error::InvalidArgument("empty likelihood".into()));
    }
    for (t, (&e, &v)) in eta.iter().zip(y).enumerate() {
        fam.check_eta(t, e)?;
        fam.check_response(t, v)?;
    }
    Ok(())
}

/// `(1/(2n)) Σ_t (Z(η_t) − η_t φ(y_t))`.
pub fn negloglik(fam: Family, eta: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(fam, eta, y)?;
    Ok(negloglik_unchecked(fam, eta, y))
}

pub(crate) fn negloglik_unchecked(fam: Family, eta: &[f64], y: &[f64]) -> f64 {
    let n = eta.len() as f64;
    let s: f64 = eta
        .iter()
        .zip(y)
        .map(|(&e, &v)| fam.log_partition(e) - e * fam.sufficient_stat(v))
        .sum();
    s / (2.0 * n)
}

/// Gradient of [`negloglik`] with respect to `η`.
pub fn negloglik_grad(fam: Family, eta: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_pairs(fam, eta, y)?;
    let n = eta.len() as f64;
    Ok(eta
        .iter()
        .zip(y)
        .map(|(&e, &v)| (fam.mean(e) - fam.sufficient_stat(v)) / (2.0 * n))
        .collect())
}
