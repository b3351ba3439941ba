//! Event algebra, cost model, prior and posterior decisions, and the Monte
//! Carlo value-of-information estimator with likelihood weighting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::std_normal_quantile;
use crate::rng::{open_unit, stream_rng, Stream};

pub const N_EVENTS: usize = 6;
pub const N_ACTIONS: usize = 3;
pub const EVENT_NAMES: [&str; N_EVENTS] = ["E1'", "E2'", "E3'", "E4'", "E5'", "E6'"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Do nothing.
    A0,
    /// Perfect repair.
    APer,
    /// Imperfect upgrade.
    AImp,
}

impl Action {
    /// Declaration order, which is also the tie-break order.
    pub const ALL: [Action; N_ACTIONS] = [Action::A0, Action::APer, Action::AImp];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::A0 => "a0",
            Action::APer => "a_per",
            Action::AImp => "a_imp",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScalars {
    /// Serviceability failure.
    pub c_fser: f64,
    /// Structural failure.
    pub c_fstr: f64,
    /// Perfect repair.
    pub c_rper: f64,
    /// Imperfect upgrade.
    pub c_rimp: f64,
}

impl Default for CostScalars {
    fn default() -> Self {
        Self {
            c_fser: 220_000.0,
            c_fstr: 920_000.0,
            c_rper: 400_000.0,
            c_rimp: 120_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostPreset {
    /// Costs implied by the event definitions.
    Derived,
    /// The published cost table, entry for entry.
    Table2AsPrinted,
}

/// Event × action costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub costs: [[f64; N_ACTIONS]; N_EVENTS],
}

impl CostMatrix {
    pub fn new(costs: [[f64; N_ACTIONS]; N_EVENTS]) -> Result<Self> {
        if costs.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("cost_matrix", "costs must be finite and nonnegative"));
        }
        Ok(Self { costs })
    }

    pub fn preset(preset: CostPreset, s: &CostScalars) -> Result<Self> {
        match preset {
            CostPreset::Derived => Self::derived(s),
            CostPreset::Table2AsPrinted => Self::table2_as_printed(s),
        }
    }

    /// Doing nothing pays for whichever failure occurs; the upgrade pays for
    /// failures that persist after upgrading.
    pub fn derived(s: &CostScalars) -> Result<Self> {
        let (fser, fstr, rper, rimp) = (s.c_fser, s.c_fstr, s.c_rper, s.c_rimp);
        Self::new([
            [0.0, rper, rimp],
            [fser, rper, rimp],
            [fser, rper, rimp + fser],
            [fstr, rper, rimp],
            [fstr, rper, rimp + fser],
            [fstr, rper, rimp + fstr],
        ])
    }

    pub fn table2_as_printed(s: &CostScalars) -> Result<Self> {
        let (fser, fstr, rper, rimp) = (s.c_fser, s.c_fstr, s.c_rper, s.c_rimp);
        Self::new([
            [0.0, rper, rimp],
            [fser, rper, rimp],
            [fser, rper, rimp + fser],
            [fser, rper, rimp],
            [fser, rper, rimp + fstr],
            [fser, rper, rimp + fstr],
        ])
    }

    /// `Σ_i c(E_i, a) p_i` for every action.
    pub fn expected_costs(&self, probs: &[f64; N_EVENTS]) -> [f64; N_ACTIONS] {
        let mut out = [0.0; N_ACTIONS];
        for (row, p) in self.costs.iter().zip(probs) {
            for a in 0..N_ACTIONS {
                out[a] += row[a] * p;
            }
        }
        out
    }

    /// Cheapest action (first in declaration order on ties) and its cost.
    pub fn best_action(&self, probs: &[f64; N_EVENTS]) -> (Action, f64) {
        let costs = self.expected_costs(probs);
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if costs[a] < costs[best] {
                best = a;
            }
        }
        (Action::ALL[best], costs[best])
    }
}

/// Event index (0 for E1′ … 5 for E6′) of `(g_ser, g_str, g_ser′, g_str′)`;
/// `g <= 0` counts as failure.
///
/// The tuple "serviceability failed, structure intact, both failed after the
/// upgrade" falls outside the six published events; it is assigned to E3′,
/// the event sharing its before-upgrade state and serviceability outcome.
pub fn classify_event(g: [f64; 4]) -> Result<usize> {
    let [ser, st, ser_u, st_u] = g;
    if g.iter().any(|v| v.is_nan()) {
        return Err(Error::InconsistentEvent("NaN limit-state value".into()));
    }
    if st < ser || st_u < ser_u {
        return Err(Error::InconsistentEvent(format!(
            "structural margin below serviceability margin in {g:?}"
        )));
    }
    let fail = |v: f64| v <= 0.0;
    Ok(if !fail(ser) {
        0
    } else if !fail(st) {
        if !fail(ser_u) {
            1
        } else {
            2
        }
    } else if !fail(ser_u) {
        3
    } else if !fail(st_u) {
        4
    } else {
        5
    })
}

fn check_probs(probs: &[f64]) -> Result<[f64; N_EVENTS]> {
    if probs.len() != N_EVENTS {
        return Err(Error::InvalidProbabilities(format!("expected {N_EVENTS} entries, got {}", probs.len())));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidProbabilities("negative or non-finite entry".into()));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities(format!("sum is {s}")));
    }
    let mut out = [0.0; N_EVENTS];
    out.copy_from_slice(probs);
    Ok(out)
}

pub fn prior_decision(probs: &[f64], costs: &CostMatrix) -> Result<(Action, f64)> {
    Ok(costs.best_action(&check_probs(probs)?))
}

/// Value of perfect information about the event.
pub fn vopi(probs: &[f64], costs: &CostMatrix) -> Result<f64> {
    let p = check_probs(probs)?;
    let (_, c_prior) = costs.best_action(&p);
    let perfect: f64 = costs
        .costs
        .iter()
        .zip(&p)
        .map(|(row, pi)| pi * row.iter().cloned().fold(f64::INFINITY, f64::min))
        .sum();
    Ok((c_prior - perfect).max(0.0))
}

/// Normal measurement-error density of `y - res′_k`.
pub fn likelihood_weights(y: f64, res_prime: &[f64], sigma_eps: f64) -> Result<Vec<f64>> {
    if !(sigma_eps > 0.0) {
        return Err(Error::invalid("sigma_eps", "must be positive"));
    }
    let c = 1.0 / (sigma_eps * (2.0 * std::f64::consts::PI).sqrt());
    Ok(res_prime
        .iter()
        .map(|r| {
            let z = (y - r) / sigma_eps;
            c * (-0.5 * z * z).exp()
        })
        .collect())
}

/// Likelihood-weighted event frequencies.
pub fn posterior_event_probs(weights: &[f64], events: &[u8]) -> Result<[f64; N_EVENTS]> {
    if weights.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: events.len(),
            got: weights.len(),
        });
    }
    let mut sums = [0.0; N_EVENTS];
    for (w, &e) in weights.iter().zip(events) {
        sums[e as usize] += w;
    }
    let total: f64 = sums.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::ZeroWeight);
    }
    for s in &mut sums {
        *s /= total;
    }
    Ok(sums)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementPlan {
    /// Loads applied during the test, N.
    pub test_loads: [f64; 6],
    /// Measurement-error standard deviation, m.
    pub sigma_eps: f64,
    /// Number of simulated test outcomes.
    pub n_sy: usize,
}

impl Default for MeasurementPlan {
    fn default() -> Self {
        Self {
            test_loads: [4.0e4; 6],
            sigma_eps: 0.005,
            n_sy: 10_000,
        }
    }
}

impl MeasurementPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps > 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::invalid("sigma_eps", "must be positive and finite"));
        }
        if self.n_sy == 0 {
            return Err(Error::invalid("n_sy", "must be at least 1"));
        }
        if self.test_loads.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("test_loads", "must be finite"));
        }
        Ok(())
    }
}

/// Per-sample quantities the estimator needs: the predicted test response
/// `Res′(m_k)` and the event index of `(m_k, p_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiInputs {
    pub res_prime: Vec<f64>,
    pub events: Vec<u8>,
}

impl VoiInputs {
    /// Builds the event indicators from responses before and after the upgrade.
    pub fn from_responses(
        res_prime: Vec<f64>,
        res_before: &[f64],
        res_after: &[f64],
        ser_threshold: f64,
        str_threshold: f64,
    ) -> Result<Self> {
        let n = res_prime.len();
        if res_before.len() != n || res_after.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: res_before.len().min(res_after.len()),
            });
        }
        let events = res_before
            .iter()
            .zip(res_after)
            .map(|(&b, &a)| {
                classify_event([ser_threshold - b, str_threshold - b, ser_threshold - a, str_threshold - a])
                    .map(|e| e as u8)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { res_prime, events })
    }

    pub fn n_mcs(&self) -> usize {
        self.events.len()
    }

    pub fn prior_event_probs(&self) -> [f64; N_EVENTS] {
        let mut p = [0.0; N_EVENTS];
        for &e in &self.events {
            p[e as usize] += 1.0;
        }
        let n = self.events.len() as f64;
        p.map(|c| c / n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiResult {
    pub c_prior: f64,
    pub a_opt_prior: Action,
    pub prior_event_probs: [f64; N_EVENTS],
    pub vopi: f64,
    /// Clamped at zero.
    pub voi: f64,
    pub voi_raw: f64,
    pub voi_mc_stderr: f64,
    pub n_mcs: usize,
    pub n_sy: usize,
    pub seed: u64,
    pub n_degenerate: usize,
    /// More than 10% of outcomes had no usable likelihood weight.
    pub invalid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDiagnostic {
    pub outcome: usize,
    pub anchor: usize,
    pub y: f64,
    pub posterior: [f64; N_EVENTS],
    pub action: Action,
    pub cost: f64,
}

/// Monte Carlo VoI: outcome `j` is simulated from pool sample `j mod n_MCS`
/// plus normal measurement noise drawn from the measurement stream of `seed`.
pub fn estimate_voi(
    inputs: &VoiInputs,
    costs: &CostMatrix,
    plan: &MeasurementPlan,
    seed: u64,
    keep_diagnostics: bool,
) -> Result<(VoiResult, Vec<OutcomeDiagnostic>)> {
    plan.validate()?;
    let n_mcs = inputs.n_mcs();
    if n_mcs == 0 || inputs.res_prime.len() != n_mcs {
        return Err(Error::invalid("voi pool", "empty or inconsistent"));
    }
    let prior = inputs.prior_event_probs();
    let (a_opt_prior, c_prior) = costs.best_action(&prior);
    let vopi = vopi(&prior, costs)?;

    let mut rng = stream_rng(seed, Stream::Measurement, 0);
    let inv_s = 1.0 / plan.sigma_eps;
    let mut diags = Vec::new();
    let mut gains = Vec::with_capacity(plan.n_sy);
    let mut n_degenerate = 0;
    for j in 0..plan.n_sy {
        let anchor = j % n_mcs;
        let y = inputs.res_prime[anchor] + plan.sigma_eps * std_normal_quantile(open_unit(&mut rng));
        // weights relative to the largest one; normalization cancels the constant
        let zmin = inputs
            .res_prime
            .iter()
            .map(|r| ((y - r) * inv_s).abs())
            .fold(f64::INFINITY, f64::min);
        let mut sums = [0.0; N_EVENTS];
        for (r, &e) in inputs.res_prime.iter().zip(&inputs.events) {
            let z = (y - r) * inv_s;
            sums[e as usize] += (-0.5 * (z * z - zmin * zmin)).exp();
        }
        let total: f64 = sums.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            n_degenerate += 1;
            continue;
        }
        let post = sums.map(|s| s / total);
        let (action, cost) = costs.best_action(&post);
        gains.push(c_prior - cost);
        if keep_diagnostics {
            diags.push(OutcomeDiagnostic {
                outcome: j,
                anchor,
                y,
                posterior: post,
                action,
                cost,
            });
        }
    }
    let n = gains.len();
    let (voi_raw, stderr) = if n == 0 {
        (0.0, f64::INFINITY)
    } else {
        let mean = gains.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        (mean, (var / n as f64).sqrt())
    };
    Ok((
        VoiResult {
            c_prior,
            a_opt_prior,
            prior_event_probs: prior,
            vopi,
            voi: voi_raw.max(0.0),
            voi_raw,
            voi_mc_stderr: stderr,
            n_mcs,
            n_sy: plan.n_sy,
            seed,
            n_degenerate,
            invalid: n_degenerate as f64 > 0.1 * plan.n_sy as f64,
        },
        diags,
    ))
}
