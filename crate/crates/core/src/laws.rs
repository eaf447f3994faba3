//! Reference laws and total-variation distances on the nonnegative integers.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const MODULE: &str = "limit-laws";

/// Both tails must fall below this mass before an analytic law is truncated.
pub const TAIL_EPS: f64 = 1e-12;
/// Hard cap on the truncation point of an analytic law.
pub const MAX_SUPPORT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DiscreteLaw {
    Poisson { lambda: f64 },
    /// `Geo(ρ)(k) = ρ (1 − ρ)^k`, `k ≥ 0`
    Geometric { rho: f64 },
    /// Table `pmf[k]` for `k < pmf.len()` plus mass `tail` at unknown points beyond.
    Explicit { pmf: Vec<f64>, tail: f64 },
}

impl DiscreteLaw {
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::input(MODULE, format!("Poisson parameter must be positive, got {lambda}")));
        }
        Ok(DiscreteLaw::Poisson { lambda })
    }

    pub fn geometric(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::input(MODULE, format!("geometric parameter must lie in (0,1), got {rho}")));
        }
        Ok(DiscreteLaw::Geometric { rho })
    }

    pub fn explicit(pmf: Vec<f64>, tail: f64) -> Result<Self> {
        if pmf.iter().any(|p| p.is_nan() || *p < 0.0) || tail.is_nan() || tail < 0.0 {
            return Err(Error::input(MODULE, "explicit law has a negative or NaN mass"));
        }
        let total: f64 = pmf.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::input(MODULE, format!("explicit law sums to {total}, not 1")));
        }
        Ok(DiscreteLaw::Explicit { pmf, tail })
    }

    /// Point mass at `k`.
    pub fn point(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        DiscreteLaw::Explicit { pmf, tail: 0.0 }
    }

    /// `ln pmf(k)`; `-inf` where the mass is zero.
    pub fn ln_pmf(&self, k: usize) -> f64 {
        match self {
            DiscreteLaw::Poisson { lambda } => {
                let kf = k as f64;
                kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)
            }
            DiscreteLaw::Geometric { rho } => rho.ln() + k as f64 * (-rho).ln_1p(),
            DiscreteLaw::Explicit { .. } => self.pmf(k).ln(),
        }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match self {
            DiscreteLaw::Poisson { .. } => self.ln_pmf(k).exp(),
            DiscreteLaw::Geometric { rho } => rho * (1.0 - rho).powf(k as f64),
            DiscreteLaw::Explicit { pmf, .. } => pmf.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Mass strictly above `k` (for explicit laws: table mass above `k` plus `tail`).
    pub fn tail_above(&self, k: usize) -> f64 {
        match self {
            DiscreteLaw::Geometric { rho } => (1.0 - rho).powf(k as f64 + 1.0),
            DiscreteLaw::Poisson { lambda } => {
                // pmf(j+1)/pmf(j) = λ/(j+1) ≤ λ/(k+2) for j ≥ k+1, a geometric majorant
                let ratio = lambda / (k as f64 + 2.0);
                if ratio < 1.0 {
                    self.pmf(k + 1) / (1.0 - ratio)
                } else {
                    let head: f64 = (0..=k).map(|j| self.pmf(j)).sum();
                    (1.0 - head).max(0.0)
                }
            }
            DiscreteLaw::Explicit { pmf, tail } => {
                pmf.iter().skip(k + 1).sum::<f64>() + tail
            }
        }
    }

    /// Largest index that a TV computation needs to visit.
    pub fn truncation_point(&self) -> usize {
        match self {
            DiscreteLaw::Explicit { pmf, .. } => pmf.len().saturating_sub(1),
            DiscreteLaw::Geometric { rho } => {
                let k = (TAIL_EPS.ln() / (1.0 - rho).ln()).ceil();
                (k.max(0.0) as usize).min(MAX_SUPPORT)
            }
            DiscreteLaw::Poisson { lambda } => {
                let mut k = lambda.ceil() as usize;
                while k < MAX_SUPPORT && self.tail_above(k) >= TAIL_EPS {
                    k += 1;
                }
                k
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DiscreteLaw::Poisson { lambda } => *lambda,
            DiscreteLaw::Geometric { rho } => (1.0 - rho) / rho,
            DiscreteLaw::Explicit { pmf, .. } => pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }
}

/// Half the ℓ¹ distance, plus an upper bound on what the ignored tails could add.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvDistance {
    pub value: f64,
    pub uncertainty: f64,
}

pub fn tv_distance(a: &DiscreteLaw, b: &DiscreteLaw) -> TvDistance {
    let end = a.truncation_point().max(b.truncation_point());
    let sum: f64 = (0..=end).map(|k| (a.pmf(k) - b.pmf(k)).abs()).sum();
    TvDistance {
        value: (0.5 * sum).min(1.0),
        uncertainty: 0.5 * (a.tail_above(end) + b.tail_above(end)),
    }
}

/// `λ = N·P(V)`, `ρ = P(W)/(P(V)+P(W))` and the independent-coupling
/// parameter `ϱ = P(W)/(P(W) + P(V)(1 − P(W)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub lambda: f64,
    pub rho: Option<f64>,
    pub varrho: Option<f64>,
}

pub fn limit_params(p_v: f64, p_w: Option<f64>, n: u64) -> Result<LimitParams> {
    if !(p_v > 0.0 && p_v < 1.0) {
        return Err(Error::input(MODULE, format!("P(V) must lie in (0,1), got {p_v}")));
    }
    if n == 0 {
        return Err(Error::input(MODULE, "N must be >= 1"));
    }
    let (rho, varrho) = match p_w {
        None => (None, None),
        Some(p_w) => {
            if !(p_w > 0.0 && p_w < 1.0) {
                return Err(Error::input(MODULE, format!("P(W) must lie in (0,1), got {p_w}")));
            }
            (Some(p_w / (p_v + p_w)), Some(p_w / (p_w + p_v * (1.0 - p_w))))
        }
    };
    Ok(LimitParams { lambda: n as f64 * p_v, rho, varrho })
}
