//! Persisted results: the JSON run record and delimiter-separated tables.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::decision::VoiResult;
use crate::error::{Error, Result};
use crate::trainer::{FrameworkResult, GroupStatus};

pub const RECORD_FORMAT: &str = "krigvoi-run-record/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub members: Vec<String>,
    pub status: GroupStatus,
    pub added_points: usize,
    pub iterations: usize,
    pub enrichments: usize,
    pub pool_size: usize,
    pub zero_probability: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitStateSummary {
    pub name: String,
    pub p_hat_f: f64,
    /// `None` when the bound is unbounded.
    pub eps_max: Option<f64>,
    pub cov_pf: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub groups: Vec<GroupSummary>,
    pub n_evaluations: usize,
    pub added_points: usize,
    pub limit_states: Vec<LimitStateSummary>,
    pub voi: Option<VoiResult>,
    pub error: Option<String>,
    pub invalid: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl RepetitionRecord {
    pub fn from_result(index: usize, seed: u64, fw: &FrameworkResult, voi: Option<VoiResult>) -> Self {
        let mut limit_states = Vec::new();
        let groups = fw
            .groups
            .iter()
            .map(|g| {
                for r in &g.reports {
                    limit_states.push(LimitStateSummary {
                        name: r.limit_state.clone(),
                        p_hat_f: r.p_hat_f,
                        eps_max: finite(r.eps_max),
                        cov_pf: finite(r.cov_pf),
                    });
                }
                GroupSummary {
                    members: g.reports.iter().map(|r| r.limit_state.clone()).collect(),
                    status: g.status,
                    added_points: g.added_points,
                    iterations: g.log.len(),
                    enrichments: g.log.iter().filter(|r| r.enriched).count(),
                    pool_size: g.pool_size,
                    zero_probability: g.zero_probability.clone(),
                }
            })
            .collect();
        let voi_invalid = voi.as_ref().is_none_or(|v| v.invalid);
        let error = (!fw.converged).then(|| "training did not converge".to_string());
        Self {
            index,
            seed,
            converged: fw.converged,
            groups,
            n_evaluations: fw.n_evaluations,
            added_points: fw.added_points,
            limit_states,
            voi,
            error,
            invalid: !fw.converged || voi_invalid,
        }
    }

    pub fn failed(index: usize, seed: u64, error: &Error) -> Self {
        Self {
            index,
            seed,
            converged: false,
            groups: Vec::new(),
            n_evaluations: 0,
            added_points: 0,
            limit_states: Vec::new(),
            voi: None,
            error: Some(error.to_string()),
            invalid: true,
        }
    }
}

/// Summary statistics over the valid repetitions, in repetition order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_repetitions: usize,
    pub n_valid: usize,
    pub n_invalid: usize,
    pub voi_mean: Option<f64>,
    pub voi_sd: Option<f64>,
    pub voi_raw_mean: Option<f64>,
    pub evaluations_mean: Option<f64>,
    pub evaluations_sd: Option<f64>,
    pub evaluations_min: Option<usize>,
    pub evaluations_max: Option<usize>,
    /// Mean P̂_f per limit state, in the order of the first valid repetition.
    pub p_hat_f_mean: Vec<(String, f64)>,
}

/// Sample mean and (n − 1) standard deviation.
pub fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

impl Aggregate {
    pub fn from_rows(rows: &[RepetitionRecord]) -> Self {
        let valid: Vec<&RepetitionRecord> = rows.iter().filter(|r| !r.invalid).collect();
        let voi: Vec<f64> = valid.iter().filter_map(|r| r.voi.as_ref().map(|v| v.voi)).collect();
        let voi_raw: Vec<f64> = valid.iter().filter_map(|r| r.voi.as_ref().map(|v| v.voi_raw)).collect();
        let evals: Vec<f64> = valid.iter().map(|r| r.n_evaluations as f64).collect();
        let (voi_mean, voi_sd) = mean_sd(&voi);
        let (evaluations_mean, evaluations_sd) = mean_sd(&evals);
        let p_hat_f_mean = match valid.first() {
            Some(first) => first
                .limit_states
                .iter()
                .enumerate()
                .map(|(i, ls)| {
                    let v: Vec<f64> = valid.iter().map(|r| r.limit_states[i].p_hat_f).collect();
                    (ls.name.clone(), mean_sd(&v).0.expect("nonempty"))
                })
                .collect(),
            None => Vec::new(),
        };
        Self {
            n_repetitions: rows.len(),
            n_valid: valid.len(),
            n_invalid: rows.len() - valid.len(),
            voi_mean,
            voi_sd,
            voi_raw_mean: mean_sd(&voi_raw).0,
            evaluations_mean,
            evaluations_sd,
            evaluations_min: valid.iter().map(|r| r.n_evaluations).min(),
            evaluations_max: valid.iter().map(|r| r.n_evaluations).max(),
            p_hat_f_mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub config: RunConfig,
    pub repetitions: Vec<RepetitionRecord>,
    pub aggregate: Aggregate,
}

impl RunRecord {
    pub fn new(config: RunConfig, repetitions: Vec<RepetitionRecord>) -> Self {
        let aggregate = Aggregate::from_rows(&repetitions);
        Self {
            format: RECORD_FORMAT.to_string(),
            config,
            repetitions,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: RunRecord = serde_json::from_str(s).map_err(|e| Error::Record(e.to_string()))?;
        if r.format != RECORD_FORMAT {
            return Err(Error::Record(format!("unsupported format `{}`", r.format)));
        }
        r.config.validate()?;
        Ok(r)
    }

    /// Whether the stored aggregate equals the one recomputed from the rows.
    pub fn audit(&self) -> bool {
        Aggregate::from_rows(&self.repetitions) == self.aggregate
    }

    pub fn invalid_fraction(&self) -> f64 {
        self.aggregate.n_invalid as f64 / self.aggregate.n_repetitions.max(1) as f64
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "inf".to_string())
}

pub const REPETITION_HEADER: &str =
    "repetition,seed,converged,invalid,n_evaluations,added_points,voi,voi_raw,voi_stderr,vopi,c_prior,a_opt_prior,p_hat_f";

/// One row per repetition; `p_hat_f` lists `name=value` pairs separated by `;`.
pub fn repetition_row(r: &RepetitionRecord) -> String {
    let v = r.voi.as_ref();
    let f = |g: fn(&VoiResult) -> f64| v.map(|v| fmt_f64(g(v))).unwrap_or_default();
    let pf: Vec<String> = r.limit_states.iter().map(|l| format!("{}={}", l.name, fmt_f64(l.p_hat_f))).collect();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.index,
        r.seed,
        r.converged,
        r.invalid,
        r.n_evaluations,
        r.added_points,
        f(|v| v.voi),
        f(|v| v.voi_raw),
        f(|v| v.voi_mc_stderr),
        f(|v| v.vopi),
        f(|v| v.c_prior),
        v.map(|v| v.a_opt_prior.to_string()).unwrap_or_default(),
        pf.join(";"),
    )
}

pub const TRACE_HEADER: &str =
    "repetition,group,iteration,member,active,eps_max,p_hat_f,cov_pf,pool_size,n_training,n_evaluations,enriched";

/// One row per iteration and member; members whose error estimate was
/// skipped have empty estimate columns.
pub fn trace_rows(repetition: usize, fw: &FrameworkResult) -> Vec<String> {
    let mut out = Vec::new();
    for g in &fw.groups {
        for rec in &g.log {
            for m in &rec.members {
                let (eps, pf, cov) = match &m.esc {
                    Some(e) => (opt(finite(e.eps_max)), fmt_f64(e.p_hat_f), opt(finite(e.cov_pf))),
                    None => Default::default(),
                };
                out.push(format!(
                    "{repetition},{},{},{},{},{eps},{pf},{cov},{},{},{},{}",
                    rec.group, rec.iteration, m.name, m.active, rec.pool_size, rec.n_training, rec.n_evaluations, rec.enriched
                ));
            }
        }
    }
    out
}

/// Header for [`point_rows`] with `dim` input columns.
pub fn points_header(dim: usize) -> String {
    let xs: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
    format!("repetition,group,iteration,{},y", xs.join(","))
}

/// One row per training point added by the active-learning loop.
pub fn point_rows(repetition: usize, fw: &FrameworkResult) -> Vec<String> {
    let mut out = Vec::new();
    for g in &fw.groups {
        let t = g.model.training();
        for rec in &g.log {
            for x in &rec.added {
                let y = t.find(x).map(|i| t.outputs()[i]).unwrap_or(f64::NAN);
                let xs: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
                out.push(format!("{repetition},{},{},{},{}", rec.group, rec.iteration, xs.join(","), fmt_f64(y)));
            }
        }
    }
    out
}
