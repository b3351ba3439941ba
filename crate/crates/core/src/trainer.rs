//! Adaptive training of shared response surrogates for groups of limit states.
//!
//! Each group trains one Kriging model of the response against all of its
//! limit-state thresholds. Per iteration every still-active member checks its
//! error bound on the candidate pool and, if not yet accurate enough,
//! contributes its minimum-U′ candidate as a new training point. When all
//! members are accurate the COV of each P̂_f is checked, enriching the pool
//! where it is too coarse. A finished group's training points seed the next.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esc::{cov_check, max_error_rate, u_prime, EscReport, InputTransform, LimitState};
use crate::kriging::{FitOptions, KrigingModel, Prediction, Scaling, TrainingSet};
use crate::prob::{lhs_sample, DistKind, Distribution, SampleMatrix};
use crate::rng::{derive_seed, index_below, open_unit, stream_rng, Stream};
use crate::truss::BridgeModel;

/// The expensive model being replaced by the surrogate.
pub trait ResponseOracle {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

impl ResponseOracle for BridgeModel {
    fn dim(&self) -> usize {
        crate::truss::BRIDGE_DIM
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.deflection(x)
    }
}

/// Wraps a closure as an oracle.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnOracle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> ResponseOracle for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let y = (self.f)(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Oracle(format!("non-finite response at {x:?}")))
        }
    }
}

/// Oracle calls keyed by the exact bits of the input row; each distinct input
/// is evaluated once.
pub struct EvaluationCache<'a> {
    oracle: &'a dyn ResponseOracle,
    seen: HashMap<Vec<u64>, f64>,
    calls: Vec<(Vec<f64>, f64)>,
}

impl<'a> EvaluationCache<'a> {
    pub fn new(oracle: &'a dyn ResponseOracle) -> Self {
        Self {
            oracle,
            seen: HashMap::new(),
            calls: Vec::new(),
        }
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&y) = self.seen.get(&key) {
            return Ok(y);
        }
        let y = self.oracle.evaluate(x)?;
        self.seen.insert(key, y);
        self.calls.push((x.to_vec(), y));
        Ok(y)
    }

    pub fn n_evaluations(&self) -> usize {
        self.calls.len()
    }

    pub fn calls(&self) -> &[(Vec<f64>, f64)] {
        &self.calls
    }
}

/// Input distributions of a problem plus the optional upgrade variable.
#[derive(Clone, Debug)]
pub struct InputModel {
    pub dists: Vec<Distribution>,
    pub upgrade: Option<Distribution>,
}

impl InputModel {
    pub fn dim(&self) -> usize {
        self.dists.len()
    }
}

/// Candidate rows and their upgrade-variable draws.
#[derive(Clone, Debug)]
pub struct CandidatePool {
    pub base: SampleMatrix,
    pub upgrade: Vec<f64>,
}

impl CandidatePool {
    /// LHS rows from the pool stream `index`, upgrade draws from the upgrade stream.
    pub fn generate(inputs: &InputModel, n: usize, seed: u64, index: u64) -> Result<Self> {
        Self::generate_in(inputs, n, seed, Stream::Pool, index)
    }

    /// As [`CandidatePool::generate`], with rows from `stream`.
    pub fn generate_in(inputs: &InputModel, n: usize, seed: u64, stream: Stream, index: u64) -> Result<Self> {
        let row_seed = derive_seed(seed, stream, index);
        let base = lhs_sample(&inputs.dists, n, row_seed)?;
        let upgrade = match &inputs.upgrade {
            Some(d) => {
                let mut rng = stream_rng(row_seed, Stream::Upgrade, index);
                (0..n).map(|_| d.quantile(open_unit(&mut rng))).collect::<Result<Vec<_>>>()?
            }
            None => vec![0.0; n],
        };
        Ok(Self { base, upgrade })
    }

    pub fn len(&self) -> usize {
        self.base.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&mut self, other: CandidatePool) -> Result<()> {
        self.base.append(&other.base)?;
        self.upgrade.extend(other.upgrade);
        Ok(())
    }

    /// Rows mapped through `transform`.
    pub fn transformed(&self, transform: &InputTransform) -> SampleMatrix {
        if transform.is_identity() {
            return self.base.clone();
        }
        let mut out = Vec::with_capacity(self.base.as_slice().len());
        let mut row = Vec::new();
        for (i, x) in self.base.rows().enumerate() {
            transform.apply(x, self.upgrade[i], &mut row);
            out.extend_from_slice(&row);
        }
        SampleMatrix::from_rows(self.base.n_cols(), out, self.base.seed()).expect("same shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// One minimum-U′ point per active member.
    PerMember,
    /// Only the single smallest-U′ point over all active members.
    SingleBest,
}

/// How pool rows are mapped to Kriging inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMap {
    /// Affine standardization of every input.
    Standardized,
    /// `ln x` for lognormal inputs, then affine standardization.
    LogLognormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub eps_thr: f64,
    pub alpha: f64,
    pub cov_thr: f64,
    pub n_initial: usize,
    pub n_delta_s: usize,
    /// Added points allowed per group before giving up.
    pub max_added: usize,
    pub max_enrichments: usize,
    pub selection: Selection,
    /// Multi-start lengthscale search every this many refits; warm-started
    /// local search in between.
    pub full_refit_every: usize,
    /// Exact predictive variance is computed only where a threshold lies
    /// within this many upper-bound deviations of the mean.
    pub screen_k: f64,
    pub input_map: InputMap,
    pub fit: FitOptions,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            eps_thr: 0.05,
            alpha: 0.05,
            cov_thr: 0.05,
            n_initial: 12,
            n_delta_s: 100_000,
            max_added: 600,
            max_enrichments: 10,
            selection: Selection::PerMember,
            full_refit_every: 10,
            screen_k: 8.0,
            input_map: InputMap::Standardized,
            fit: FitOptions::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.eps_thr) {
            return Err(Error::invalid("eps_thr", "must lie in (0, 1)"));
        }
        if !unit(self.alpha) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        if !unit(self.cov_thr) {
            return Err(Error::invalid("cov_thr", "must lie in (0, 1)"));
        }
        if self.n_initial < 2 {
            return Err(Error::invalid("n_initial", "must be at least 2"));
        }
        if self.n_delta_s == 0 {
            return Err(Error::invalid("n_delta_s", "must be at least 1"));
        }
        if self.full_refit_every == 0 {
            return Err(Error::invalid("full_refit_every", "must be at least 1"));
        }
        if !(self.screen_k >= 6.0) {
            return Err(Error::invalid("screen_k", "must be at least 6"));
        }
        Ok(())
    }
}

/// Limit states trained together on one shared model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitStateGroup {
    pub members: Vec<LimitState>,
    /// Position in the training order (0 first).
    pub priority: usize,
    /// Size of the group's initial candidate pool.
    pub pool_size: usize,
}

/// Groups states whose pilot failure probabilities are within `ratio_threshold`
/// of each other (transitively), smallest probabilities first. Returns member
/// indices.
pub fn group_limit_states(pilot_pfs: &[f64], ratio_threshold: f64) -> Result<Vec<Vec<usize>>> {
    if pilot_pfs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::invalid("pilot_pfs", "must lie in (0, 1]"));
    }
    if !(ratio_threshold >= 1.0) {
        return Err(Error::invalid("ratio_threshold", "must be at least 1"));
    }
    let n = pilot_pfs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (pilot_pfs[i], pilot_pfs[j]);
            if a.max(b) / a.min(b) <= ratio_threshold {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        let g = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let min_pf = |g: &Vec<usize>| g.iter().map(|&i| pilot_pfs[i]).fold(f64::INFINITY, f64::min);
    groups.sort_by(|a, b| min_pf(a).total_cmp(&min_pf(b)));
    Ok(groups)
}

/// Pool indices to evaluate next, given per-member U′ values.
///
/// `u[i]` holds member `i`'s U′ over its (transformed) pool; `view[i]` names
/// the pool the member reads, and `excluded[v]` the indices of pool `v` that
/// are already training points. Returns `(view, index)` pairs, deduplicated,
/// ties broken by lowest index.
pub fn select_next_points(
    u: &[Vec<f64>],
    view: &[usize],
    active: &[bool],
    excluded: &[HashSet<usize>],
    selection: Selection,
) -> Result<Vec<(usize, usize)>> {
    let mut picks: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..u.len() {
        if !active[i] {
            continue;
        }
        let v = view[i];
        let mut best: Option<(usize, f64)> = None;
        for (k, &val) in u[i].iter().enumerate() {
            if excluded[v].contains(&k) {
                continue;
            }
            if best.is_none_or(|(_, b)| val < b) {
                best = Some((k, val));
            }
        }
        let (k, val) = best.ok_or(Error::PoolExhausted)?;
        picks.push((v, k, val));
    }
    if selection == Selection::SingleBest {
        if let Some(&best) = picks.iter().min_by(|a, b| a.2.total_cmp(&b.2)) {
            picks = vec![best];
        }
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (v, k, _) in picks {
        if !out.contains(&(v, k)) {
            out.push((v, k));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberState {
    pub name: String,
    /// `None` when the error estimate was skipped (member already accurate).
    pub esc: Option<EscReport>,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub group: usize,
    pub iteration: usize,
    pub n_training: usize,
    /// Cumulative oracle evaluations over the whole run.
    pub n_evaluations: usize,
    pub pool_size: usize,
    pub members: Vec<MemberState>,
    pub enriched: bool,
    pub added: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    Converged,
    IterationCap,
    EnrichmentLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupResult {
    pub status: GroupStatus,
    pub model: KrigingModel,
    pub log: Vec<IterationRecord>,
    /// Final error report per member, in member order.
    pub reports: Vec<EscReport>,
    /// Members accepted with P̂_f = 0 after an enrichment turned up no failures.
    pub zero_probability: Vec<bool>,
    pub added_points: usize,
    pub pool_size: usize,
}

struct View {
    transform: InputTransform,
    rows: SampleMatrix,
    excluded: HashSet<usize>,
}

/// Called with each finished iteration record.
pub type Observer<'a> = &'a mut dyn FnMut(&IterationRecord);

struct GroupRun<'c, 'o> {
    group_index: usize,
    members: &'c [LimitState],
    cfg: &'c TrainerConfig,
    scaling: &'c Scaling,
    cache: &'c mut EvaluationCache<'o>,
    seed: u64,
}

impl GroupRun<'_, '_> {
    fn fit(&self, training: &TrainingSet, refits: usize, last: Option<&KrigingModel>) -> Result<KrigingModel> {
        let mut opts = self.cfg.fit.clone();
        opts.seed = derive_seed(self.seed, Stream::KrigingStarts, self.group_index as u64);
        match last {
            Some(m) if refits % self.cfg.full_refit_every != 0 => {
                KrigingModel::refit_from(training, self.scaling, &opts, &m.log10_theta())
            }
            _ => KrigingModel::fit(training, self.scaling, &opts),
        }
    }

    fn predict(&self, model: &KrigingModel, view: &View, thresholds: &[f64]) -> Result<Vec<Prediction>> {
        let preds = model.predict_screened(&view.rows, thresholds, self.cfg.screen_k)?;
        // the screen only preserves the argmin when some exact U′ falls below k
        let resolved = thresholds
            .iter()
            .all(|&t| preds.iter().any(|&p| u_prime(p, t) < self.cfg.screen_k));
        if resolved {
            Ok(preds)
        } else {
            model.predict(&view.rows)
        }
    }

    fn run(
        self,
        pool_size: usize,
        mut training: TrainingSet,
        pool_index: u64,
        inputs: &InputModel,
        observer: &mut Option<Observer<'_>>,
    ) -> Result<GroupResult> {
        let cfg = self.cfg;
        let members = self.members;
        let n = members.len();
        let mut pool = CandidatePool::generate(inputs, pool_size, self.seed, pool_index)?;
        let mut transforms: Vec<InputTransform> = Vec::new();
        let member_view: Vec<usize> = members
            .iter()
            .map(|m| match transforms.iter().position(|t| *t == m.transform) {
                Some(v) => v,
                None => {
                    transforms.push(m.transform.clone());
                    transforms.len() - 1
                }
            })
            .collect();
        let mut views: Vec<View> = transforms
            .iter()
            .map(|t| View {
                transform: t.clone(),
                rows: pool.transformed(t),
                excluded: HashSet::new(),
            })
            .collect();
        let view_thresholds: Vec<Vec<f64>> = (0..views.len())
            .map(|v| {
                (0..n)
                    .filter(|&i| member_view[i] == v)
                    .map(|i| members[i].res_critical)
                    .collect()
            })
            .collect();

        if training.is_empty() {
            // initial design: random distinct pool rows, read through the first member's transform
            let v = member_view[0];
            let mut rng = stream_rng(self.seed, Stream::InitialPoints, self.group_index as u64);
            while training.len() < cfg.n_initial.min(pool.len()) {
                let k = index_below(&mut rng, pool.len());
                if views[v].excluded.insert(k) {
                    let x = views[v].rows.row(k).to_vec();
                    let y = self.cache.evaluate(&x)?;
                    training.push(&x, y)?;
                }
            }
        }
        let start_size = training.len();

        let mut active = vec![true; n];
        let mut last_reports: Vec<Option<EscReport>> = vec![None; n];
        let mut zero_enrichments = vec![0usize; n];
        let mut zero_probability = vec![false; n];
        let mut enrichments = 0;
        let mut log = Vec::new();
        let mut model: Option<KrigingModel> = None;
        let mut refits = 0;
        let mut need_fit = true;
        let mut iteration = 0;
        let status = loop {
            if need_fit {
                model = Some(self.fit(&training, refits, model.as_ref())?);
                refits += 1;
                need_fit = false;
            }
            let m = model.as_ref().expect("fitted");
            let preds: Vec<Vec<Prediction>> = views
                .iter()
                .zip(&view_thresholds)
                .map(|(v, t)| self.predict(m, v, t))
                .collect::<Result<_>>()?;

            let mut states = Vec::with_capacity(n);
            for i in 0..n {
                let mut esc = None;
                if active[i] {
                    let r = max_error_rate(&members[i].name, &preds[member_view[i]], members[i].res_critical, cfg.alpha)?;
                    if r.eps_max <= cfg.eps_thr {
                        active[i] = false;
                    }
                    last_reports[i] = Some(r.clone());
                    esc = Some(r);
                }
                states.push(MemberState {
                    name: members[i].name.clone(),
                    esc,
                    active: active[i],
                });
            }
            let mut record = IterationRecord {
                group: self.group_index,
                iteration,
                n_training: training.len(),
                n_evaluations: self.cache.n_evaluations(),
                pool_size: pool.len(),
                members: states,
                enriched: false,
                added: Vec::new(),
            };
            iteration += 1;

            if active.iter().all(|a| !a) {
                // every member meets the error target; check the pool is fine enough
                let mut failing = Vec::new();
                for i in 0..n {
                    let p_hat = preds[member_view[i]]
                        .iter()
                        .filter(|p| p.mean >= members[i].res_critical)
                        .count() as f64
                        / pool.len() as f64;
                    let cov = cov_check(p_hat, pool.len());
                    if cov > cfg.cov_thr {
                        if p_hat == 0.0 && zero_enrichments[i] >= 1 {
                            zero_probability[i] = true;
                        } else {
                            failing.push(i);
                        }
                    }
                }
                if failing.is_empty() {
                    push_record(&mut log, record, observer);
                    break GroupStatus::Converged;
                }
                if enrichments >= cfg.max_enrichments {
                    push_record(&mut log, record, observer);
                    break GroupStatus::EnrichmentLimit;
                }
                let extra_index = pool_index + 1000 * (enrichments as u64 + 1);
                pool.append(CandidatePool::generate(inputs, cfg.n_delta_s, self.seed, extra_index)?)?;
                for v in &mut views {
                    v.rows = pool.transformed(&v.transform);
                }
                for &i in &failing {
                    if last_reports[i].as_ref().is_some_and(|r| r.n_hat_f == 0) {
                        zero_enrichments[i] += 1;
                    }
                    active[i] = true;
                }
                enrichments += 1;
                record.enriched = true;
                record.pool_size = pool.len();
                push_record(&mut log, record, observer);
                continue;
            }

            if training.len() - start_size >= cfg.max_added {
                push_record(&mut log, record, observer);
                break GroupStatus::IterationCap;
            }
            let u: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let t = members[i].res_critical;
                    preds[member_view[i]].iter().map(|&p| u_prime(p, t)).collect()
                })
                .collect();
            let excluded: Vec<HashSet<usize>> = views.iter().map(|v| v.excluded.clone()).collect();
            let picks = select_next_points(&u, &member_view, &active, &excluded, cfg.selection)?;
            for (v, k) in picks {
                views[v].excluded.insert(k);
                let x = views[v].rows.row(k).to_vec();
                if training.find(&x).is_some() {
                    continue;
                }
                let y = self.cache.evaluate(&x)?;
                training.push(&x, y)?;
                record.added.push(x);
            }
            need_fit = !record.added.is_empty();
            push_record(&mut log, record, observer);
        };
        let model = model.expect("fitted");
        let preds: Vec<Vec<Prediction>> = views
            .iter()
            .map(|v| model.predict_mean(&v.rows).map(|ms| ms.into_iter().map(|mean| Prediction { mean, sd: 0.0 }).collect()))
            .collect::<Result<_>>()?;
        let reports = (0..n)
            .map(|i| {
                let mut r = last_reports[i].clone().expect("every member evaluated at least once");
                let n_f = preds[member_view[i]].iter().filter(|p| p.mean >= members[i].res_critical).count();
                r.n_hat_f = n_f;
                r.pool_size = pool.len();
                r.p_hat_f = n_f as f64 / pool.len() as f64;
                r.cov_pf = cov_check(r.p_hat_f, pool.len());
                r
            })
            .collect();
        Ok(GroupResult {
            status,
            added_points: training.len() - start_size,
            model,
            log,
            reports,
            zero_probability,
            pool_size: pool.len(),
        })
    }
}

fn push_record(log: &mut Vec<IterationRecord>, record: IterationRecord, observer: &mut Option<Observer<'_>>) {
    if let Some(f) = observer {
        f(&record);
    }
    log.push(record);
}

/// How knowledge passes between groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SharingScheme {
    /// Every group starts from its own random initial points.
    Separate,
    /// The next group starts from a random subset of `k` previous training points.
    ShareK { k: usize },
    /// The next group starts from all previous training points.
    ShareAll,
    /// All limit states in one group and one model.
    SharedModel,
}

/// A framework problem: limit states, their grouping, and the inputs.
#[derive(Clone, Debug)]
pub struct Problem {
    pub limit_states: Vec<LimitState>,
    /// Member indices per group, in training order.
    pub groups: Vec<Vec<usize>>,
    /// Initial pool size per group.
    pub pool_sizes: Vec<usize>,
    pub inputs: InputModel,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        let n = self.limit_states.len();
        let mut seen = vec![false; n];
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::invalid("groups", "a group is empty"));
            }
            for &i in g {
                if i >= n || seen[i] {
                    return Err(Error::invalid("groups", "each limit state must belong to exactly one group"));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("groups", "each limit state must belong to exactly one group"));
        }
        if self.pool_sizes.len() != self.groups.len() || self.pool_sizes.contains(&0) {
            return Err(Error::invalid("pool_sizes", "one positive size per group"));
        }
        Ok(())
    }

    /// Regroups for a sharing scheme: `SharedModel` merges all groups (keeping
    /// the first pool size), the other schemes split every member into its own
    /// group in the original order.
    pub fn with_scheme(&self, scheme: SharingScheme) -> Problem {
        let mut p = self.clone();
        match scheme {
            SharingScheme::SharedModel => {
                p.groups = vec![self.groups.concat()];
                p.pool_sizes = vec![self.pool_sizes[0]];
            }
            _ => {
                p.groups = Vec::new();
                p.pool_sizes = Vec::new();
                for (g, &size) in self.groups.iter().zip(&self.pool_sizes) {
                    for &i in g {
                        p.groups.push(vec![i]);
                        p.pool_sizes.push(size);
                    }
                }
            }
        }
        p
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameworkResult {
    pub groups: Vec<GroupResult>,
    /// Scaling shared by all models of the run.
    pub scaling: Scaling,
    /// Per limit state (problem order), taken from the group that trained it.
    pub p_hat_f: Vec<f64>,
    pub n_evaluations: usize,
    /// Evaluations beyond the first group's initial design.
    pub added_points: usize,
    pub converged: bool,
}

impl FrameworkResult {
    /// The model with the most training points (the last one on ties).
    pub fn final_model(&self) -> &KrigingModel {
        self.groups
            .iter()
            .map(|g| &g.model)
            .rev()
            .max_by_key(|m| m.training().len())
            .expect("at least one group")
    }
}

pub fn run_framework(
    problem: &Problem,
    oracle: &dyn ResponseOracle,
    cfg: &TrainerConfig,
    scheme: SharingScheme,
    seed: u64,
) -> Result<FrameworkResult> {
    run_framework_observed(problem, oracle, cfg, scheme, seed, None)
}

pub fn run_framework_observed(
    problem: &Problem,
    oracle: &dyn ResponseOracle,
    cfg: &TrainerConfig,
    scheme: SharingScheme,
    seed: u64,
    mut observer: Option<Observer<'_>>,
) -> Result<FrameworkResult> {
    problem.validate()?;
    cfg.validate()?;
    if oracle.dim() != problem.inputs.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.inputs.dim(),
            got: oracle.dim(),
        });
    }
    let mut cache = EvaluationCache::new(oracle);
    // input map from the first group's pool, kept for the whole run
    let log: Vec<bool> = problem
        .inputs
        .dists
        .iter()
        .map(|d| cfg.input_map == InputMap::LogLognormal && d.kind() == DistKind::Lognormal)
        .collect();
    let first_pool = CandidatePool::generate(&problem.inputs, problem.pool_sizes[0], seed, 0)?;
    let scaling = Scaling::from_samples_log(&first_pool.base, &log)?;
    let mut groups: Vec<GroupResult> = Vec::new();
    let mut p_hat_f = vec![f64::NAN; problem.limit_states.len()];
    let dim = problem.inputs.dim();
    for (gi, member_idx) in problem.groups.iter().enumerate() {
        let initial = match (groups.last(), scheme) {
            (None, _) | (_, SharingScheme::Separate) => TrainingSet::new(dim),
            (Some(prev), SharingScheme::ShareK { k }) => {
                let t = prev.model.training();
                let mut idx: Vec<usize> = (0..t.len()).collect();
                let mut rng = stream_rng(seed, Stream::Sharing, gi as u64);
                for i in (1..idx.len()).rev() {
                    idx.swap(i, index_below(&mut rng, i + 1));
                }
                let mut set = TrainingSet::new(dim);
                for &i in idx.iter().take(k) {
                    set.push(t.input(i), t.outputs()[i])?;
                }
                set
            }
            (Some(prev), _) => prev.model.training().clone(),
        };
        let members: Vec<LimitState> = member_idx.iter().map(|&i| problem.limit_states[i].clone()).collect();
        let run = GroupRun {
            group_index: gi,
            members: &members,
            cfg,
            scaling: &scaling,
            cache: &mut cache,
            seed,
        };
        let result = run.run(problem.pool_sizes[gi], initial, gi as u64, &problem.inputs, &mut observer)?;
        for (j, &i) in member_idx.iter().enumerate() {
            p_hat_f[i] = result.reports[j].p_hat_f;
        }
        let ok = result.status == GroupStatus::Converged;
        groups.push(result);
        if !ok {
            break;
        }
    }
    let converged = groups.len() == problem.groups.len() && groups.iter().all(|g| g.status == GroupStatus::Converged);
    let n_evaluations = cache.n_evaluations();
    Ok(FrameworkResult {
        groups,
        scaling,
        p_hat_f,
        n_evaluations,
        added_points: n_evaluations.saturating_sub(cfg.n_initial),
        converged,
    })
}
