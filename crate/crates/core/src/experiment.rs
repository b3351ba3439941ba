//! The bridge study: framework runs followed by VoI, the true-model
//! baselines, calibration sweeps and the sharing-scheme comparison.

use serde::{Deserialize, Serialize};

use crate::config::{Grouping, RunConfig};
use crate::decision::{estimate_voi, VoiInputs, VoiResult};
use crate::error::{Error, Result};
use crate::esc::{InputTransform, LimitState};
use crate::kriging::KrigingModel;
use crate::prob::SampleMatrix;
use crate::record::{mean_sd, RepetitionRecord, RunRecord};
use crate::rng::{derive_seed, Stream};
use crate::trainer::{
    group_limit_states, run_framework_observed, CandidatePool, FrameworkResult, InputModel, Observer, Problem,
    SharingScheme,
};
use crate::truss::{BridgeModel, TrussGeometry, AREA_COLUMNS, LOAD_COLUMNS};

pub const LIMIT_STATE_NAMES: [&str; 4] = ["ser", "str", "ser_up", "str_up"];

pub fn bridge_model(cfg: &RunConfig) -> Result<BridgeModel> {
    match &cfg.geometry {
        Some(path) => BridgeModel::new(TrussGeometry::from_file(path)?),
        None => Ok(BridgeModel::default()),
    }
}

pub fn input_model(cfg: &RunConfig) -> InputModel {
    InputModel {
        dists: cfg.inputs.marginals(),
        upgrade: Some(cfg.inputs.upgrade_area),
    }
}

fn upgrade() -> InputTransform {
    InputTransform::ImperfectUpgrade {
        columns: AREA_COLUMNS.to_vec(),
    }
}

/// `[ser, str, ser′, str′]`.
pub fn limit_states(cfg: &RunConfig) -> Vec<LimitState> {
    let t = &cfg.thresholds;
    let up = upgrade();
    vec![
        LimitState { name: LIMIT_STATE_NAMES[0].into(), res_critical: t.serviceability, transform: InputTransform::Identity },
        LimitState { name: LIMIT_STATE_NAMES[1].into(), res_critical: t.structural, transform: InputTransform::Identity },
        LimitState { name: LIMIT_STATE_NAMES[2].into(), res_critical: t.serviceability, transform: up.clone() },
        LimitState { name: LIMIT_STATE_NAMES[3].into(), res_critical: t.structural, transform: up },
    ]
}

fn pool_size(cfg: &RunConfig, states: &[LimitState], group: &[usize]) -> usize {
    if group.iter().any(|&i| !states[i].transform.is_identity()) {
        cfg.training.pool_after_upgrade
    } else {
        cfg.training.pool_before_upgrade
    }
}

/// The four-state bridge problem, grouped per the config and regrouped for
/// the configured sharing scheme.
pub fn bridge_problem(cfg: &RunConfig) -> Result<Problem> {
    let states = limit_states(cfg);
    let groups = match &cfg.training.grouping {
        Grouping::Explicit => vec![vec![2, 3], vec![0, 1]],
        Grouping::Ratio { pilot_pfs, ratio_threshold } => group_limit_states(pilot_pfs, *ratio_threshold)?,
    };
    let pool_sizes = groups.iter().map(|g| pool_size(cfg, &states, g)).collect();
    let p = Problem {
        limit_states: states,
        groups,
        pool_sizes,
        inputs: input_model(cfg),
    };
    Ok(regroup(p, cfg.training.scheme))
}

/// The before-upgrade pair `[ser, str]` as one group.
pub fn pair_problem(cfg: &RunConfig) -> Problem {
    let states: Vec<LimitState> = limit_states(cfg).into_iter().take(2).collect();
    Problem {
        limit_states: states,
        groups: vec![vec![1, 0]],
        pool_sizes: vec![cfg.training.pool_before_upgrade],
        inputs: input_model(cfg),
    }
}

fn regroup(p: Problem, scheme: SharingScheme) -> Problem {
    match scheme {
        // an already grouped problem keeps its groups when points are shared in full
        SharingScheme::ShareAll => p,
        s => p.with_scheme(s),
    }
}

pub fn repetition_seed(cfg: &RunConfig, index: usize) -> u64 {
    derive_seed(cfg.seed, Stream::Repetition, index as u64)
}

/// Prior samples for the VoI estimate, with their upgrade draws.
pub fn voi_pool(cfg: &RunConfig, seed: u64) -> Result<CandidatePool> {
    CandidatePool::generate_in(&input_model(cfg), cfg.measurement.n_mcs, seed, Stream::VoiPool, 0)
}

/// The three input matrices behind the VoI inputs: test-load rows, rows as
/// sampled, and upgraded rows.
pub fn voi_matrices(cfg: &RunConfig, pool: &CandidatePool) -> Result<[SampleMatrix; 3]> {
    let mut test = pool.base.as_slice().to_vec();
    let dim = pool.base.n_cols();
    for row in test.chunks_mut(dim) {
        for (c, &p) in LOAD_COLUMNS.iter().zip(&cfg.measurement.test_loads) {
            row[*c] = p;
        }
    }
    let test = SampleMatrix::from_rows(dim, test, pool.base.seed())?;
    Ok([test, pool.base.clone(), pool.transformed(&upgrade())])
}

fn voi_inputs_with(
    cfg: &RunConfig,
    pool: &CandidatePool,
    response: &dyn Fn(&SampleMatrix) -> Result<Vec<f64>>,
) -> Result<VoiInputs> {
    let [test, before, after] = voi_matrices(cfg, pool)?;
    let t = &cfg.thresholds;
    VoiInputs::from_responses(response(&test)?, &response(&before)?, &response(&after)?, t.serviceability, t.structural)
}

/// VoI inputs from surrogate mean predictions.
pub fn surrogate_voi_inputs(cfg: &RunConfig, pool: &CandidatePool, model: &KrigingModel) -> Result<VoiInputs> {
    voi_inputs_with(cfg, pool, &|m| model.predict_mean(m))
}

/// VoI inputs from the truss itself.
pub fn truth_voi_inputs(cfg: &RunConfig, pool: &CandidatePool, bridge: &BridgeModel) -> Result<VoiInputs> {
    voi_inputs_with(cfg, pool, &|m| m.rows().map(|x| bridge.deflection(x)).collect())
}

pub fn voi_with_sigma(cfg: &RunConfig, inputs: &VoiInputs, sigma_eps: f64, seed: u64) -> Result<VoiResult> {
    let mut plan = cfg.measurement.plan();
    plan.sigma_eps = sigma_eps;
    Ok(estimate_voi(inputs, &cfg.costs.cost_matrix()?, &plan, seed, false)?.0)
}

/// A finished repetition with the artifacts behind its record.
pub struct Repetition {
    pub record: RepetitionRecord,
    pub framework: Option<FrameworkResult>,
    pub voi_inputs: Option<VoiInputs>,
}

pub fn run_repetition(cfg: &RunConfig, index: usize, observer: Option<Observer<'_>>) -> Result<Repetition> {
    let seed = repetition_seed(cfg, index);
    let bridge = bridge_model(cfg)?;
    let problem = bridge_problem(cfg)?;
    let fw = match run_framework_observed(&problem, &bridge, &cfg.trainer_config(), cfg.training.scheme, seed, observer) {
        Ok(fw) => fw,
        Err(e) if e.is_numerical() => {
            return Ok(Repetition {
                record: RepetitionRecord::failed(index, seed, &e),
                framework: None,
                voi_inputs: None,
            })
        }
        Err(e) => return Err(e),
    };
    let pool = voi_pool(cfg, seed)?;
    let inputs = surrogate_voi_inputs(cfg, &pool, fw.final_model())?;
    let voi = voi_with_sigma(cfg, &inputs, cfg.measurement.sigma_eps, seed)?;
    Ok(Repetition {
        record: RepetitionRecord::from_result(index, seed, &fw, Some(voi)),
        framework: Some(fw),
        voi_inputs: Some(inputs),
    })
}

/// All repetitions in order, single-threaded.
pub fn run_experiment(cfg: &RunConfig, mut on_repetition: impl FnMut(&Repetition)) -> Result<RunRecord> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.repetitions);
    for i in 0..cfg.repetitions {
        let rep = run_repetition(cfg, i, None)?;
        on_repetition(&rep);
        rows.push(rep.record);
    }
    Ok(RunRecord::new(cfg.clone(), rows))
}

/// Result of re-running a record's configuration.
pub struct Replay {
    pub identical: bool,
    pub record: RunRecord,
}

pub fn replay(original: &RunRecord) -> Result<Replay> {
    let mut cfg = original.config.clone();
    cfg.threads = 1;
    let mut record = run_experiment(&cfg, |_| {})?;
    record.config = original.config.clone();
    Ok(Replay {
        identical: record.to_json() == original.to_json(),
        record,
    })
}

/// True-model failure probabilities of `[ser, str, ser′, str′]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorProbabilities {
    pub n: usize,
    pub seed: u64,
    pub load_sd: f64,
    pub p: [f64; 4],
}

/// Plain Monte Carlo on the truss, `n` independent draws from the oracle stream.
pub fn prior_probabilities(cfg: &RunConfig, n: usize, seed: u64) -> Result<PriorProbabilities> {
    let bridge = bridge_model(cfg)?;
    let inputs = input_model(cfg);
    let dists = &inputs.dists;
    let up = inputs.upgrade.expect("bridge inputs have an upgrade");
    let mut rng = crate::rng::stream_rng(seed, Stream::Pool, u64::MAX);
    let mut counts = [0usize; 4];
    let t = &cfg.thresholds;
    let mut x = vec![0.0; dists.len()];
    for _ in 0..n {
        for (v, d) in x.iter_mut().zip(dists) {
            *v = d.quantile(crate::rng::open_unit(&mut rng))?;
        }
        let a = up.quantile(crate::rng::open_unit(&mut rng))?;
        let before = bridge.deflection(&x)?;
        let mut xu = x.clone();
        for &c in AREA_COLUMNS.iter() {
            xu[c] += a;
        }
        let after = bridge.deflection(&xu)?;
        for (k, (res, thr)) in [(before, t.serviceability), (before, t.structural), (after, t.serviceability), (after, t.structural)]
            .into_iter()
            .enumerate()
        {
            if res >= thr {
                counts[k] += 1;
            }
        }
    }
    Ok(PriorProbabilities {
        n,
        seed,
        load_sd: cfg.inputs.load.sd(),
        p: counts.map(|c| c as f64 / n as f64),
    })
}

/// The true-model baseline: prior probabilities and VoI without a surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub config: RunConfig,
    pub prior: PriorProbabilities,
    pub voi: Vec<VoiResult>,
    pub voi_mean: Option<f64>,
    pub voi_sd: Option<f64>,
}

/// Prior probabilities from `oracle.n_prior` samples, then one true-model VoI
/// per repetition on the repetition's VoI pool and noise seed.
pub fn mcs_oracle(cfg: &RunConfig, mut on_repetition: impl FnMut(usize, &VoiResult)) -> Result<OracleRecord> {
    cfg.validate()?;
    let bridge = bridge_model(cfg)?;
    let prior = prior_probabilities(cfg, cfg.oracle.n_prior, cfg.seed)?;
    let mut voi = Vec::new();
    for i in 0..cfg.repetitions {
        let seed = repetition_seed(cfg, i);
        let inputs = truth_voi_inputs(cfg, &voi_pool(cfg, seed)?, &bridge)?;
        let v = voi_with_sigma(cfg, &inputs, cfg.measurement.sigma_eps, seed)?;
        on_repetition(i, &v);
        voi.push(v);
    }
    let (voi_mean, voi_sd) = mean_sd(&voi.iter().map(|v| v.voi).collect::<Vec<_>>());
    Ok(OracleRecord {
        config: cfg.clone(),
        prior,
        voi,
        voi_mean,
        voi_sd,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma_eps: f64,
    pub voi: f64,
    pub voi_raw: f64,
    pub stderr: f64,
    pub vopi: f64,
}

/// True-model VoI for each grid value of σ_ε, all on the first repetition's
/// VoI pool and noise seed.
pub fn calibrate_sigma_eps(cfg: &RunConfig) -> Result<Vec<SigmaRow>> {
    cfg.validate()?;
    if cfg.calibration.sigma_eps_grid.is_empty() {
        return Err(Error::Config("calibration.sigma_eps_grid: must not be empty".into()));
    }
    let bridge = bridge_model(cfg)?;
    let seed = repetition_seed(cfg, 0);
    let inputs = truth_voi_inputs(cfg, &voi_pool(cfg, seed)?, &bridge)?;
    cfg.calibration
        .sigma_eps_grid
        .iter()
        .map(|&s| {
            let v = voi_with_sigma(cfg, &inputs, s, seed)?;
            Ok(SigmaRow {
                sigma_eps: s,
                voi: v.voi,
                voi_raw: v.voi_raw,
                stderr: v.voi_mc_stderr,
                vopi: v.vopi,
            })
        })
        .collect()
}

/// Prior probabilities for each grid value of the load standard deviation.
pub fn calibrate_load_sd(cfg: &RunConfig) -> Result<Vec<PriorProbabilities>> {
    cfg.validate()?;
    if cfg.calibration.load_sd_grid.is_empty() {
        return Err(Error::Config("calibration.load_sd_grid: must not be empty".into()));
    }
    cfg.calibration
        .load_sd_grid
        .iter()
        .map(|&sd| {
            let mut c = cfg.clone();
            c.inputs.load = crate::prob::Distribution::new(c.inputs.load.kind(), c.inputs.load.mean(), sd)?;
            prior_probabilities(&c, cfg.oracle.n_prior, cfg.seed)
        })
        .collect()
}

/// Largest absolute log ratio between estimated and target probabilities;
/// infinite when an estimate is zero.
pub fn log_misfit(p: &[f64; 4], target: &[f64; 4]) -> f64 {
    p.iter()
        .zip(target)
        .map(|(p, t)| if *p > 0.0 { (p / t).ln().abs() } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

/// Index of the grid row with the smallest [`log_misfit`]; the first on ties.
pub fn select_load_sd(rows: &[PriorProbabilities], target: &[f64; 4]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        let m = log_misfit(&r.p, target);
        if best.map_or(true, |(_, b)| m < b) {
            best = Some((i, m));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeRow {
    pub scheme: SharingScheme,
    /// True-model evaluations per repetition.
    pub evaluations: Vec<usize>,
    /// Points added by active learning per repetition, summed over groups.
    pub added: Vec<usize>,
    pub converged: Vec<bool>,
    pub mean_evaluations: Option<f64>,
    pub mean_added: Option<f64>,
}

/// The scheme sweep on the before-upgrade pair: separate models, sharing
/// `sweep_share_k` points, sharing all points and one shared model.
pub fn sweep_schemes(cfg: &RunConfig, mut on_run: impl FnMut(SharingScheme, usize, &FrameworkResult)) -> Result<Vec<SchemeRow>> {
    cfg.validate()?;
    let bridge = bridge_model(cfg)?;
    let base = pair_problem(cfg);
    let schemes = [
        SharingScheme::Separate,
        SharingScheme::ShareK { k: cfg.training.sweep_share_k },
        SharingScheme::ShareAll,
        SharingScheme::SharedModel,
    ];
    let tc = cfg.trainer_config();
    schemes
        .iter()
        .map(|&scheme| {
            let problem = base.with_scheme(scheme);
            let mut evaluations = Vec::new();
            let mut added = Vec::new();
            let mut converged = Vec::new();
            for i in 0..cfg.repetitions {
                let fw = run_framework_observed(&problem, &bridge, &tc, scheme, repetition_seed(cfg, i), None)?;
                on_run(scheme, i, &fw);
                evaluations.push(fw.n_evaluations);
                added.push(fw.groups.iter().map(|g| g.added_points).sum());
                converged.push(fw.converged);
            }
            let mean = |v: &[usize]| mean_sd(&v.iter().map(|&e| e as f64).collect::<Vec<_>>()).0;
            Ok(SchemeRow {
                scheme,
                mean_evaluations: mean(&evaluations),
                mean_added: mean(&added),
                evaluations,
                added,
                converged,
            })
        })
        .collect()
}
