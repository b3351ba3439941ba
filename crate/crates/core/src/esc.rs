//! Error-rate based stopping: U′ values, wrong-sign probabilities, the
//! Poisson-binomial bound on the relative error of P̂_f, and the COV check.
//!
//! A candidate counts as failed when its predicted response reaches the
//! threshold (`mean >= res_critical`, i.e. `g <= 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::Prediction;
use crate::prob::{std_normal_cdf, PoissonBinomial};

/// How a limit state maps a pool row before the response is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputTransform {
    Identity,
    /// Adds the row's upgrade variable to each listed column (the cross-section
    /// areas for the bridge). The dimension is unchanged.
    ImperfectUpgrade { columns: Vec<usize> },
}

impl InputTransform {
    pub fn apply(&self, row: &[f64], upgrade: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(row);
        if let InputTransform::ImperfectUpgrade { columns } = self {
            for &c in columns {
                out[c] += upgrade;
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, InputTransform::Identity)
    }
}

/// `g(X) = res_critical - Res(T(X))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitState {
    pub name: String,
    pub res_critical: f64,
    pub transform: InputTransform,
}

impl LimitState {
    pub fn new(name: impl Into<String>, res_critical: f64, transform: InputTransform) -> Result<Self> {
        if !res_critical.is_finite() {
            return Err(Error::invalid("res_critical", "must be finite"));
        }
        Ok(Self {
            name: name.into(),
            res_critical,
            transform,
        })
    }

    pub fn fails(&self, response: f64) -> bool {
        response >= self.res_critical
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscReport {
    pub limit_state: String,
    pub n_hat_f: usize,
    pub s_f_upper: usize,
    pub s_s_upper: usize,
    pub eps_max: f64,
    pub p_hat_f: f64,
    pub cov_pf: f64,
    pub alpha: f64,
    pub pool_size: usize,
}

/// `|t - mean| / sd`, with `+∞` for a deterministic prediction off the threshold.
pub fn u_prime(pred: Prediction, res_critical: f64) -> f64 {
    let d = (res_critical - pred.mean).abs();
    if pred.sd > 0.0 {
        d / pred.sd
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn wrong_sign_prob(pred: Prediction, res_critical: f64) -> f64 {
    std_normal_cdf(-u_prime(pred, res_critical))
}

pub fn wrong_sign_probs(preds: &[Prediction], res_critical: f64) -> Vec<f64> {
    preds.iter().map(|&p| wrong_sign_prob(p, res_critical)).collect()
}

/// Relative-error bound from the predicted failure count and the upper
/// quantiles of the wrong-sign counts in the failure and safe domains.
///
/// `+∞` when `n_hat_f <= s_f_upper` (the bound is uninformative), except for
/// the wrong-sign-free case `n_hat_f = s_f_upper = s_s_upper = 0`, which is 0.
pub fn eps_max_from_counts(n_hat_f: usize, s_f_upper: usize, s_s_upper: usize) -> f64 {
    if n_hat_f == 0 && s_f_upper == 0 && s_s_upper == 0 {
        return 0.0;
    }
    if n_hat_f <= s_f_upper {
        return f64::INFINITY;
    }
    let n = n_hat_f as f64;
    let lo = (n / (n - s_f_upper as f64) - 1.0).abs();
    let hi = (n / (n + s_s_upper as f64) - 1.0).abs();
    lo.max(hi)
}

/// `sqrt((1 - p) / (p n))`; `+∞` for `p = 0`.
pub fn cov_check(p_hat_f: f64, pool_size: usize) -> f64 {
    if p_hat_f <= 0.0 || pool_size == 0 {
        return f64::INFINITY;
    }
    ((1.0 - p_hat_f) / (p_hat_f * pool_size as f64)).sqrt()
}

pub fn max_error_rate(name: &str, preds: &[Prediction], res_critical: f64, alpha: f64) -> Result<EscReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    if preds.is_empty() {
        return Err(Error::invalid("predictions", "pool is empty"));
    }
    let mut fail_probs = Vec::new();
    let mut safe_probs = Vec::new();
    for &p in preds {
        let w = wrong_sign_prob(p, res_critical);
        if p.mean >= res_critical {
            fail_probs.push(w);
        } else {
            safe_probs.push(w);
        }
    }
    let n_hat_f = fail_probs.len();
    let q = 1.0 - alpha / 2.0;
    let s_f_upper = PoissonBinomial::new(fail_probs)?.inverse_cdf(q)?;
    let s_s_upper = PoissonBinomial::new(safe_probs)?.inverse_cdf(q)?;
    let pool_size = preds.len();
    let p_hat_f = n_hat_f as f64 / pool_size as f64;
    Ok(EscReport {
        limit_state: name.to_string(),
        n_hat_f,
        s_f_upper,
        s_s_upper,
        eps_max: eps_max_from_counts(n_hat_f, s_f_upper, s_s_upper),
        p_hat_f,
        cov_pf: cov_check(p_hat_f, pool_size),
        alpha,
        pool_size,
    })
}
