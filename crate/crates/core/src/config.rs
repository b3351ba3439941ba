//! Run configuration for the bridge study, read from TOML.
//!
//! Every key is optional; omitted keys take the bridge defaults. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decision::{CostMatrix, CostPreset, CostScalars, MeasurementPlan, N_ACTIONS, N_EVENTS};
use crate::error::{Error, Result};
use crate::kriging::FitOptions;
use crate::prob::Distribution;
use crate::trainer::{InputMap, Selection, SharingScheme, TrainerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub repetitions: usize,
    /// Worker threads for independent repetitions.
    pub threads: usize,
    pub output_dir: PathBuf,
    /// Fraction of invalid repetitions above which a run is reported as failed.
    pub max_invalid_fraction: f64,
    /// Truss geometry file; the built-in bridge when absent.
    pub geometry: Option<PathBuf>,
    pub inputs: InputsConfig,
    pub thresholds: Thresholds,
    pub costs: CostsConfig,
    pub esc: EscConfig,
    pub training: TrainingConfig,
    pub measurement: MeasurementConfig,
    pub oracle: OracleConfig,
    pub calibration: CalibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            repetitions: 20,
            threads: 1,
            output_dir: PathBuf::from("out"),
            max_invalid_fraction: 0.1,
            geometry: None,
            inputs: InputsConfig::default(),
            thresholds: Thresholds::default(),
            costs: CostsConfig::default(),
            esc: EscConfig::default(),
            training: TrainingConfig::default(),
            measurement: MeasurementConfig::default(),
            oracle: OracleConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

/// Marginals of `[P1..P6, A1, A2, E1, E2]` and of the upgrade plate area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputsConfig {
    /// Each of the six loads, N.
    pub load: Distribution,
    /// Chord cross-section area, m².
    pub area_chord: Distribution,
    /// Diagonal cross-section area, m².
    pub area_diagonal: Distribution,
    /// Chord Young's modulus, Pa.
    pub modulus_chord: Distribution,
    /// Diagonal Young's modulus, Pa.
    pub modulus_diagonal: Distribution,
    /// Plate area added to both areas by the upgrade, m².
    pub upgrade_area: Distribution,
}

impl Default for InputsConfig {
    fn default() -> Self {
        let d = |r: Result<Distribution>| r.expect("valid default");
        Self {
            load: d(Distribution::gumbel(4.0e4, 4.0e4)),
            area_chord: d(Distribution::lognormal(4.0e-3, 2.0e-3)),
            area_diagonal: d(Distribution::lognormal(3.0e-3, 1.5e-3)),
            modulus_chord: d(Distribution::lognormal(2.1e11, 2.1e10)),
            modulus_diagonal: d(Distribution::lognormal(2.1e11, 2.1e10)),
            upgrade_area: d(Distribution::lognormal(1.0e-4, 1.0e-5)),
        }
    }
}

impl InputsConfig {
    pub fn marginals(&self) -> Vec<Distribution> {
        let mut v = vec![self.load; 6];
        v.extend([self.area_chord, self.area_diagonal, self.modulus_chord, self.modulus_diagonal]);
        v
    }
}

/// Deflection limits, m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub serviceability: f64,
    pub structural: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            serviceability: 0.09,
            structural: 0.11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostsConfig {
    pub c_fser: f64,
    pub c_fstr: f64,
    pub c_rper: f64,
    pub c_rimp: f64,
    pub preset: CostPreset,
    /// Full event × action override, one `[a0, a_per, a_imp]` row per event.
    pub matrix: Option<Vec<[f64; N_ACTIONS]>>,
}

impl Default for CostsConfig {
    fn default() -> Self {
        let s = CostScalars::default();
        Self {
            c_fser: s.c_fser,
            c_fstr: s.c_fstr,
            c_rper: s.c_rper,
            c_rimp: s.c_rimp,
            preset: CostPreset::Derived,
            matrix: None,
        }
    }
}

impl CostsConfig {
    pub fn scalars(&self) -> CostScalars {
        CostScalars {
            c_fser: self.c_fser,
            c_fstr: self.c_fstr,
            c_rper: self.c_rper,
            c_rimp: self.c_rimp,
        }
    }

    pub fn cost_matrix(&self) -> Result<CostMatrix> {
        match &self.matrix {
            Some(rows) => {
                if rows.len() != N_EVENTS {
                    return Err(Error::invalid("costs.matrix", format!("need {N_EVENTS} rows, got {}", rows.len())));
                }
                let mut costs = [[0.0; N_ACTIONS]; N_EVENTS];
                costs.copy_from_slice(rows);
                CostMatrix::new(costs).map_err(|e| Error::invalid("costs.matrix", e.to_string()))
            }
            None => CostMatrix::preset(self.preset, &self.scalars()).map_err(|e| Error::invalid("costs", e.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EscConfig {
    pub eps_thr: f64,
    pub alpha: f64,
    pub cov_thr: f64,
}

impl Default for EscConfig {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            eps_thr: t.eps_thr,
            alpha: t.alpha,
            cov_thr: t.cov_thr,
        }
    }
}

/// Which limit states train together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Grouping {
    /// After-upgrade pair first, then the before-upgrade pair.
    Explicit,
    /// Grouped by pilot failure probabilities, ordered `[ser, str, ser′, str′]`.
    Ratio { pilot_pfs: [f64; 4], ratio_threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub n_initial: usize,
    /// Initial pool for groups containing an after-upgrade state.
    pub pool_after_upgrade: usize,
    /// Initial pool for before-upgrade groups.
    pub pool_before_upgrade: usize,
    pub n_delta_s: usize,
    pub max_added: usize,
    pub max_enrichments: usize,
    pub selection: Selection,
    pub full_refit_every: usize,
    pub screen_k: f64,
    pub input_map: InputMap,
    pub scheme: SharingScheme,
    pub grouping: Grouping,
    /// Points shared by the `share_k` entry of a scheme sweep.
    pub sweep_share_k: usize,
    pub fit: FitOptions,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            n_initial: t.n_initial,
            pool_after_upgrade: 100_000,
            pool_before_upgrade: 10_000,
            n_delta_s: t.n_delta_s,
            max_added: t.max_added,
            max_enrichments: t.max_enrichments,
            selection: t.selection,
            full_refit_every: t.full_refit_every,
            screen_k: t.screen_k,
            // the truss response is close to a power law in the lognormal inputs
            input_map: InputMap::LogLognormal,
            scheme: SharingScheme::ShareAll,
            grouping: Grouping::Explicit,
            sweep_share_k: 50,
            fit: t.fit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    /// Measurement-error standard deviation, m.
    pub sigma_eps: f64,
    /// Simulated test outcomes.
    pub n_sy: usize,
    /// Prior samples behind the posterior estimates.
    pub n_mcs: usize,
    /// Loads applied during the test, N.
    pub test_loads: [f64; 6],
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        let p = MeasurementPlan::default();
        Self {
            sigma_eps: p.sigma_eps,
            n_sy: p.n_sy,
            n_mcs: 100_000,
            test_loads: p.test_loads,
        }
    }
}

impl MeasurementConfig {
    pub fn plan(&self) -> MeasurementPlan {
        MeasurementPlan {
            test_loads: self.test_loads,
            sigma_eps: self.sigma_eps,
            n_sy: self.n_sy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// True-model samples behind the prior failure probabilities.
    pub n_prior: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_prior: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub sigma_eps_grid: Vec<f64>,
    pub load_sd_grid: Vec<f64>,
    /// Reference failure probabilities `[ser, str, ser′, str′]` the load
    /// standard deviation is matched against.
    pub target_pfs: [f64; 4],
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            sigma_eps_grid: vec![0.002, 0.005, 0.01, 0.02],
            load_sd_grid: vec![4.0e3, 7.5e3, 1.0e4, 4.0e4],
            target_pfs: [4.6e-2, 3.8e-2, 5.8e-3, 4.4e-3],
        }
    }
}

fn field(name: &str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name}: {reason}")))
    }
}

fn unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    /// The effective configuration, defaults resolved.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        field("repetitions", self.repetitions >= 1, "must be at least 1")?;
        field("threads", self.threads >= 1, "must be at least 1")?;
        field("max_invalid_fraction", (0.0..=1.0).contains(&self.max_invalid_fraction), "must lie in [0, 1]")?;
        let t = &self.thresholds;
        field("thresholds.serviceability", positive(t.serviceability), "must be positive")?;
        field("thresholds.structural", positive(t.structural), "must be positive")?;
        field(
            "thresholds.structural",
            t.structural >= t.serviceability,
            "must not be below thresholds.serviceability",
        )?;
        let c = &self.costs;
        for (name, v) in [("costs.c_fser", c.c_fser), ("costs.c_fstr", c.c_fstr), ("costs.c_rper", c.c_rper), ("costs.c_rimp", c.c_rimp)] {
            field(name, v >= 0.0 && v.is_finite(), "must be nonnegative and finite")?;
        }
        c.cost_matrix()?;
        let e = &self.esc;
        field("esc.eps_thr", unit(e.eps_thr), "must lie in (0, 1)")?;
        field("esc.alpha", unit(e.alpha), "must lie in (0, 1)")?;
        field("esc.cov_thr", unit(e.cov_thr), "must lie in (0, 1)")?;
        let tr = &self.training;
        field("training.n_initial", tr.n_initial >= 2, "must be at least 2")?;
        field("training.pool_after_upgrade", tr.pool_after_upgrade >= tr.n_initial, "must be at least n_initial")?;
        field("training.pool_before_upgrade", tr.pool_before_upgrade >= tr.n_initial, "must be at least n_initial")?;
        field("training.n_delta_s", tr.n_delta_s >= 1, "must be at least 1")?;
        field("training.full_refit_every", tr.full_refit_every >= 1, "must be at least 1")?;
        field("training.screen_k", tr.screen_k >= 6.0, "must be at least 6")?;
        if let Grouping::Ratio { pilot_pfs, ratio_threshold } = &tr.grouping {
            field("training.grouping.pilot_pfs", pilot_pfs.iter().all(|p| *p > 0.0 && *p <= 1.0), "must lie in (0, 1]")?;
            field("training.grouping.ratio_threshold", *ratio_threshold >= 1.0, "must be at least 1")?;
        }
        let f = &tr.fit;
        field("training.fit.log10_theta_min", f.log10_theta_min < f.log10_theta_max, "must be below log10_theta_max")?;
        field("training.fit.n_starts", f.n_starts >= 1, "must be at least 1")?;
        field("training.fit.tol", positive(f.tol) && positive(f.warm_step), "search steps must be positive")?;
        field("training.fit.nugget", f.nugget > 0.0 && f.nugget <= f.max_nugget, "need 0 < nugget <= max_nugget")?;
        let m = &self.measurement;
        field("measurement.sigma_eps", positive(m.sigma_eps), "must be positive and finite")?;
        field("measurement.n_sy", m.n_sy >= 1, "must be at least 1")?;
        field("measurement.n_mcs", m.n_mcs >= 1, "must be at least 1")?;
        field("measurement.test_loads", m.test_loads.iter().all(|p| p.is_finite()), "must be finite")?;
        field("oracle.n_prior", self.oracle.n_prior >= 1, "must be at least 1")?;
        let cal = &self.calibration;
        field("calibration.sigma_eps_grid", cal.sigma_eps_grid.iter().all(|v| positive(*v)), "values must be positive")?;
        field("calibration.load_sd_grid", cal.load_sd_grid.iter().all(|v| positive(*v)), "values must be positive")?;
        field(
            "calibration.target_pfs",
            cal.target_pfs.iter().all(|p| *p > 0.0 && *p < 1.0),
            "values must lie in (0, 1)",
        )?;
        Ok(())
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.training;
        TrainerConfig {
            eps_thr: self.esc.eps_thr,
            alpha: self.esc.alpha,
            cov_thr: self.esc.cov_thr,
            n_initial: t.n_initial,
            n_delta_s: t.n_delta_s,
            max_added: t.max_added,
            max_enrichments: t.max_enrichments,
            selection: t.selection,
            full_refit_every: t.full_refit_every,
            screen_k: t.screen_k,
            input_map: t.input_map,
            fit: t.fit.clone(),
        }
    }
}
