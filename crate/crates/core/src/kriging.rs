//! Ordinary Kriging with a Gaussian kernel.
//!
//! Inputs are standardized with caller-supplied [`Scaling`] constants (normally
//! the candidate-pool moments) and outputs with the training moments. The
//! lengthscales are fitted by minimizing the concentrated likelihood
//! `ln σ² + ln|R| / m` with a bounded compass search in `log10 θ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::SampleMatrix;
use crate::rng::{open_unit, stream_rng, Stream};

/// Gaussian correlation `∏ exp(-θ_k (a_k - b_k)²)`.
pub fn correlation(a: &[f64], b: &[f64], theta: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: if a.len() != theta.len() {
                a.len()
            } else {
                b.len()
            },
        });
    }
    if theta.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    Ok(kernel(a, b, theta))
}

#[inline]
fn kernel(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(theta)
        .map(|((x, y), t)| t * (x - y) * (x - y))
        .sum();
    (-s).exp()
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(&x, &y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

/// Training inputs (row-major, physical units) and observed outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>], outputs: &[f64]) -> Result<Self> {
        if rows.len() != outputs.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: outputs.len(),
            });
        }
        let mut set = Self::new(dim);
        for (x, &y) in rows.iter().zip(outputs) {
            set.push(x, y)?;
        }
        Ok(set)
    }

    /// Adds a point; rejects a row equal to an existing one within 1e-12 relative.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training point", "must be finite"));
        }
        if let Some(i) = self.find(x) {
            return Err(Error::DuplicateTrainingPoint(i));
        }
        self.inputs.extend_from_slice(x);
        self.outputs.push(y);
        Ok(())
    }

    /// Index of a stored row equal to `x`, if any.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        (0..self.len()).find(|&i| same_point(self.input(i), x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }
}

/// Per-dimension input map `(f(x) - shift) / scale`, where `f` is `ln` for
/// the columns flagged in `log` and the identity otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(default)]
    pub log: Vec<bool>,
}

impl Scaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
            log: vec![false; dim],
        }
    }

    /// Column means and standard deviations of `samples`; constant columns get scale 1.
    pub fn from_samples(samples: &SampleMatrix) -> Self {
        Self::from_samples_log(samples, &vec![false; samples.n_cols()])
            .expect("no log columns")
    }

    /// As [`Scaling::from_samples`], with the moments of `ln x` for the `log` columns.
    pub fn from_samples_log(samples: &SampleMatrix, log: &[bool]) -> Result<Self> {
        if log.len() != samples.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: samples.n_cols(),
                got: log.len(),
            });
        }
        let n = samples.n_rows() as f64;
        let mut shift = Vec::with_capacity(log.len());
        let mut scale = Vec::with_capacity(log.len());
        for (k, &lg) in log.iter().enumerate() {
            let col: Vec<f64> = samples.column(k).collect();
            if lg && col.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("scaling", format!("log column {k} has nonpositive values")));
            }
            let f = |v: f64| if lg { v.ln() } else { v };
            let mean = col.iter().map(|&v| f(v)).sum::<f64>() / n;
            let var = col.iter().map(|&v| (f(v) - mean).powi(2)).sum::<f64>() / n;
            shift.push(mean);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Self {
            shift,
            scale,
            log: log.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Maps one input row; log columns of nonpositive inputs give NaN.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..x.len() {
            let v = if self.log.get(k).copied().unwrap_or(false) {
                x[k].ln()
            } else {
                x[k]
            };
            out[k] = (v - self.shift[k]) / self.scale[k];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub log10_theta_min: f64,
    pub log10_theta_max: f64,
    pub n_starts: usize,
    /// Compass step below which the search stops, in log10 units.
    pub tol: f64,
    /// Initial compass step for a warm-started local search.
    pub warm_step: f64,
    pub max_evals_per_start: usize,
    pub nugget: f64,
    pub max_nugget: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            log10_theta_min: -4.0,
            log10_theta_max: 3.0,
            n_starts: 5,
            tol: 1e-4,
            warm_step: 0.25,
            max_evals_per_start: 4000,
            nugget: 1e-8,
            max_nugget: 1e-4,
            seed: 0,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.log10_theta_min < self.log10_theta_max) {
            return Err(Error::invalid(
                "log10_theta_min",
                "must be below log10_theta_max",
            ));
        }
        if self.n_starts == 0 {
            return Err(Error::invalid("n_starts", "must be at least 1"));
        }
        if !(self.tol > 0.0) || !(self.warm_step > 0.0) {
            return Err(Error::invalid("tol", "search steps must be positive"));
        }
        if !(self.nugget > 0.0 && self.nugget <= self.max_nugget) {
            return Err(Error::invalid("nugget", "need 0 < nugget <= max_nugget"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

/// Pairwise squared differences of the standardized training inputs, laid
/// out pair-major so each correlation is one short dot product.
struct Likelihood<'a> {
    m: usize,
    dim: usize,
    d2: Vec<f64>,
    y: &'a [f64],
    nugget: f64,
    max_nugget: f64,
}

struct Factored {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    nugget: f64,
}

impl<'a> Likelihood<'a> {
    fn new(x: &[f64], dim: usize, y: &'a [f64], opts: &FitOptions) -> Self {
        let m = y.len();
        let mut d2 = Vec::with_capacity(m * (m - 1) / 2 * dim);
        for i in 0..m {
            for j in 0..i {
                for k in 0..dim {
                    let d = x[i * dim + k] - x[j * dim + k];
                    d2.push(d * d);
                }
            }
        }
        Self {
            m,
            dim,
            d2,
            y,
            nugget: opts.nugget,
            max_nugget: opts.max_nugget,
        }
    }

    fn factor(&self, theta: &[f64]) -> Option<Factored> {
        let m = self.m;
        let mut r = DMatrix::<f64>::zeros(m, m);
        let mut p = 0;
        for i in 0..m {
            for j in 0..i {
                let d = &self.d2[p * self.dim..(p + 1) * self.dim];
                let s: f64 = d.iter().zip(theta).map(|(a, t)| a * t).sum();
                let v = (-s).exp();
                r[(i, j)] = v;
                r[(j, i)] = v;
                p += 1;
            }
        }
        let mut nugget = self.nugget;
        loop {
            let mut reg = r.clone();
            for i in 0..m {
                reg[(i, i)] = 1.0 + nugget;
            }
            if let Some(chol) = reg.cholesky() {
                return Some(Factored { chol, nugget });
            }
            nugget *= 10.0;
            if nugget > self.max_nugget * (1.0 + 1e-9) {
                return None;
            }
        }
    }

    /// Concentrated objective `ln σ² + ln|R| / m`; `None` when R stays singular.
    fn objective(&self, log_theta: &[f64]) -> Option<f64> {
        let theta: Vec<f64> = log_theta.iter().map(|l| 10f64.powf(*l)).collect();
        let f = self.factor(&theta)?;
        let (_, sigma2) = gls(&f.chol, self.y);
        let log_det: f64 = 2.0
            * f.chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let obj = sigma2.max(f64::MIN_POSITIVE).ln() + log_det / self.m as f64;
        obj.is_finite().then_some(obj)
    }
}

/// Generalized least-squares constant trend and process variance.
fn gls(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, y: &[f64]) -> (f64, f64) {
    let m = y.len();
    let ones = DVector::from_element(m, 1.0);
    let yv = DVector::from_column_slice(y);
    let ri1 = chol.solve(&ones);
    let riy = chol.solve(&yv);
    let beta = riy.sum() / ri1.sum();
    let resid = yv.add_scalar(-beta);
    let sigma2 = resid.dot(&chol.solve(&resid)) / m as f64;
    (beta, sigma2)
}

/// Bounded opportunistic compass search; returns the best point and value.
fn compass_search(
    f: &dyn Fn(&[f64]) -> Option<f64>,
    start: &[f64],
    step0: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let mut x: Vec<f64> = start.iter().map(|v| v.clamp(lo, hi)).collect();
    let mut fx = f(&x).unwrap_or(f64::INFINITY);
    let mut evals = 1;
    let mut step = step0;
    while step >= tol && evals < max_evals {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                let cand = (x[k] + dir * step).clamp(lo, hi);
                if cand == x[k] {
                    continue;
                }
                let mut xt = x.clone();
                xt[k] = cand;
                let ft = f(&xt).unwrap_or(f64::INFINITY);
                evals += 1;
                if ft < fx {
                    x = xt;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// A fitted ordinary Kriging model.
///
/// Serializes its defining parameters only; the factorization is rebuilt
/// (deterministically) on deserialization.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ModelParams", into = "ModelParams")]
pub struct KrigingModel {
    params: ModelParams,
    /// Standardized training inputs, column-major (one column per input).
    x_cols: Vec<f64>,
    /// Packed row-major lower Cholesky factor of the regularized correlation.
    l: Vec<f64>,
    /// `R⁻¹ (y - β)` in standardized output units.
    alpha: Vec<f64>,
    /// `R⁻¹ 1`.
    ri1: Vec<f64>,
    /// `1ᵀ R⁻¹ 1`.
    c: f64,
    beta_std: f64,
    sigma2_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub training: TrainingSet,
    pub scaling: Scaling,
    pub theta: Vec<f64>,
    pub nugget: f64,
    pub y_shift: f64,
    pub y_scale: f64,
    /// Trend constant, physical output units.
    pub beta: f64,
    /// Process variance, physical output units squared.
    pub sigma2: f64,
    pub objective: f64,
}

impl TryFrom<ModelParams> for KrigingModel {
    type Error = Error;

    fn try_from(p: ModelParams) -> Result<Self> {
        let (y_shift, y_scale) = output_moments(&p.training);
        let (std_x, y_std) = standardize(&p.training, &p.scaling, y_shift, y_scale);
        let opts = FitOptions {
            nugget: p.nugget,
            max_nugget: p.nugget,
            ..FitOptions::default()
        };
        let lik = Likelihood::new(&std_x, p.training.dim(), &y_std, &opts);
        let log_theta: Vec<f64> = p.theta.iter().map(|t| t.log10()).collect();
        let objective = p.objective;
        let model = KrigingModel::assemble(&p.training, &p.scaling, &lik, &log_theta, objective)?;
        Ok(model)
    }
}

impl From<KrigingModel> for ModelParams {
    fn from(m: KrigingModel) -> Self {
        m.params
    }
}

fn output_moments(training: &TrainingSet) -> (f64, f64) {
    let y = training.outputs();
    let m = y.len() as f64;
    let shift = y.iter().sum::<f64>() / m;
    let var = y.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / m;
    (shift, if var > 0.0 { var.sqrt() } else { 1.0 })
}

fn standardize(
    training: &TrainingSet,
    scaling: &Scaling,
    y_shift: f64,
    y_scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let dim = training.dim();
    let mut x = vec![0.0; training.len() * dim];
    for (i, row) in training.inputs().enumerate() {
        scaling.apply_into(row, &mut x[i * dim..(i + 1) * dim]);
    }
    let y = training
        .outputs()
        .iter()
        .map(|v| (v - y_shift) / y_scale)
        .collect();
    (x, y)
}

impl KrigingModel {
    /// Multi-start maximum-likelihood fit.
    pub fn fit(training: &TrainingSet, scaling: &Scaling, opts: &FitOptions) -> Result<Self> {
        Self::fit_inner(training, scaling, opts, None)
    }

    /// Single local search started from `log10_theta` (e.g. the previous fit's).
    pub fn refit_from(
        training: &TrainingSet,
        scaling: &Scaling,
        opts: &FitOptions,
        log10_theta: &[f64],
    ) -> Result<Self> {
        if log10_theta.len() != training.dim() {
            return Err(Error::DimensionMismatch {
                expected: training.dim(),
                got: log10_theta.len(),
            });
        }
        Self::fit_inner(training, scaling, opts, Some(log10_theta))
    }

    fn fit_inner(
        training: &TrainingSet,
        scaling: &Scaling,
        opts: &FitOptions,
        warm: Option<&[f64]>,
    ) -> Result<Self> {
        opts.validate()?;
        let dim = training.dim();
        if scaling.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: scaling.dim(),
            });
        }
        if !scaling.log.is_empty() && scaling.log.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: scaling.log.len(),
            });
        }
        let m = training.len();
        if m < 2 {
            return Err(Error::invalid("training", "need at least 2 points"));
        }
        let (y_shift, y_scale) = output_moments(training);
        let (std_x, y_std) = standardize(training, scaling, y_shift, y_scale);
        if std_x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training", "input outside the domain of the input map"));
        }
        let lik = Likelihood::new(&std_x, dim, &y_std, opts);
        let (lo, hi) = (opts.log10_theta_min, opts.log10_theta_max);
        let obj = |lt: &[f64]| lik.objective(lt);

        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut consider = |x: Vec<f64>, fx: f64| {
            if best.as_ref().is_none_or(|(_, fb)| fx < *fb) {
                best = Some((x, fx));
            }
        };
        match warm {
            Some(start) => {
                let (x, fx) = compass_search(
                    &obj,
                    start,
                    opts.warm_step,
                    lo,
                    hi,
                    opts.tol,
                    opts.max_evals_per_start,
                );
                consider(x, fx);
            }
            None => {
                let mut rng = stream_rng(opts.seed, Stream::KrigingStarts, m as u64);
                for s in 0..opts.n_starts {
                    let start: Vec<f64> = if s == 0 {
                        vec![0.5 * (lo + hi); dim]
                    } else {
                        (0..dim)
                            .map(|_| lo + (hi - lo) * open_unit(&mut rng))
                            .collect()
                    };
                    let (x, fx) = compass_search(
                        &obj,
                        &start,
                        0.25 * (hi - lo),
                        lo,
                        hi,
                        opts.tol,
                        opts.max_evals_per_start,
                    );
                    consider(x, fx);
                }
            }
        }
        let (log_theta, fx) = best.expect("at least one start");
        if !fx.is_finite() {
            return Err(Error::SingularCorrelation {
                nugget: opts.max_nugget,
            });
        }
        Self::assemble(training, scaling, &lik, &log_theta, fx)
    }

    fn assemble(
        training: &TrainingSet,
        scaling: &Scaling,
        lik: &Likelihood,
        log_theta: &[f64],
        objective: f64,
    ) -> Result<Self> {
        let m = training.len();
        let theta: Vec<f64> = log_theta.iter().map(|l| 10f64.powf(*l)).collect();
        let f = lik.factor(&theta).ok_or(Error::SingularCorrelation {
            nugget: lik.max_nugget,
        })?;
        let (beta_std, sigma2_raw) = gls(&f.chol, lik.y);
        let sigma2_std = sigma2_raw.max(f64::MIN_POSITIVE);
        let resid = DVector::from_iterator(m, lik.y.iter().map(|v| v - beta_std));
        let alpha = f.chol.solve(&resid);
        let ri1 = f.chol.solve(&DVector::from_element(m, 1.0));
        let lm = f.chol.l();
        let mut l = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in 0..=i {
                l.push(lm[(i, j)]);
            }
        }
        let (y_shift, y_scale) = output_moments(training);
        let (std_x, _) = standardize(training, scaling, y_shift, y_scale);
        Ok(Self {
            params: ModelParams {
                training: training.clone(),
                scaling: scaling.clone(),
                theta,
                nugget: f.nugget,
                y_shift,
                y_scale,
                beta: y_shift + y_scale * beta_std,
                sigma2: y_scale * y_scale * sigma2_std,
                objective,
            },
            x_cols: columns(&std_x, training.dim()),
            l,
            alpha: alpha.as_slice().to_vec(),
            ri1: ri1.as_slice().to_vec(),
            c: ri1.sum(),
            beta_std,
            sigma2_std,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn training(&self) -> &TrainingSet {
        &self.params.training
    }

    pub fn dim(&self) -> usize {
        self.params.training.dim()
    }

    pub fn theta(&self) -> &[f64] {
        &self.params.theta
    }

    pub fn log10_theta(&self) -> Vec<f64> {
        self.params.theta.iter().map(|t| t.log10()).collect()
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.params.sigma2
    }

    pub fn nugget(&self) -> f64 {
        self.params.nugget
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Correlations to the training points; returns (standardized mean, 1ᵀR⁻¹r).
    fn correlations(&self, x: &[f64], z: &mut [f64], r: &mut [f64]) -> (f64, f64) {
        self.params.scaling.apply_into(x, z);
        let m = r.len();
        r.fill(0.0);
        for (k, (&zk, &t)) in z.iter().zip(&self.params.theta).enumerate() {
            let col = &self.x_cols[k * m..(k + 1) * m];
            for (ri, &xi) in r.iter_mut().zip(col) {
                let d = zk - xi;
                *ri += t * d * d;
            }
        }
        let mut mean = self.beta_std;
        let mut u1 = 0.0;
        let self_corr = 1.0 + self.params.nugget;
        for ((ri, &a), &b) in r.iter_mut().zip(&self.alpha).zip(&self.ri1) {
            // a training input correlates with itself through the regularized diagonal
            let v = if *ri == 0.0 { self_corr } else { (-*ri).exp() };
            *ri = v;
            mean += v * a;
            u1 += v * b;
        }
        (mean, u1)
    }

    /// `rᵀ R⁻¹ r` by forward substitution on the packed factor (overwrites `r`).
    fn quad_form(&self, r: &mut [f64]) -> f64 {
        self.quad_form_until(r, |_| false).0
    }

    /// Forward substitution that may stop early. The partial sums of squares
    /// grow towards `rᵀ R⁻¹ r`; at each checkpoint `stop(partial)` is asked
    /// whether to give up. Returns the (possibly partial) sum and whether it
    /// is complete.
    fn quad_form_until(&self, r: &mut [f64], stop: impl Fn(f64) -> bool) -> (f64, bool) {
        let mut acc = 0.0;
        let mut off = 0;
        for i in 0..r.len() {
            if i % 8 == 0 && i > 0 && stop(acc) {
                return (acc, false);
            }
            let row = &self.l[off..off + i + 1];
            let s = dot(&row[..i], &r[..i]);
            let v = (r[i] - s) / row[i];
            r[i] = v;
            acc += v * v;
            off += i + 1;
        }
        (acc, true)
    }

    fn to_prediction(&self, mean_std: f64, var_std: f64) -> Prediction {
        Prediction {
            mean: self.params.y_shift + self.params.y_scale * mean_std,
            sd: self.params.y_scale * var_std.max(0.0).sqrt(),
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x.len())?;
        let mut z = vec![0.0; self.dim()];
        let mut r = vec![0.0; self.training().len()];
        Ok(self.predict_buf(x, &mut z, &mut r))
    }

    fn predict_buf(&self, x: &[f64], z: &mut [f64], r: &mut [f64]) -> Prediction {
        let (mean, u1) = self.correlations(x, z, r);
        let q = self.quad_form(r);
        let u = u1 - 1.0;
        self.to_prediction(mean, self.sigma2_std * (1.0 - q + u * u / self.c))
    }

    pub fn predict(&self, points: &SampleMatrix) -> Result<Vec<Prediction>> {
        self.check_dim(points.n_cols())?;
        let mut z = vec![0.0; self.dim()];
        let mut r = vec![0.0; self.training().len()];
        Ok(points
            .rows()
            .map(|x| self.predict_buf(x, &mut z, &mut r))
            .collect())
    }

    /// Predictive means only.
    pub fn predict_mean(&self, points: &SampleMatrix) -> Result<Vec<f64>> {
        self.check_dim(points.n_cols())?;
        let mut z = vec![0.0; self.dim()];
        let mut r = vec![0.0; self.training().len()];
        Ok(points
            .rows()
            .map(|x| {
                let (mean, _) = self.correlations(x, &mut z, &mut r);
                self.params.y_shift + self.params.y_scale * mean
            })
            .collect())
    }

    /// Predictions whose standard deviation is exact wherever some threshold
    /// lies within `k` upper-bound deviations of the mean, and otherwise is
    /// replaced by that upper bound. Means are always exact.
    ///
    /// The bound starts as the smaller of the ordinary-Kriging variance given
    /// the nearest training point alone and `σ²(1 + u²/c)`, and is tightened
    /// with the partial sums of the forward substitution behind `rᵀR⁻¹r`. All
    /// of these dominate the full variance, so `|t - mean| / sd` never
    /// overstates the exact value.
    pub fn predict_screened(
        &self,
        points: &SampleMatrix,
        thresholds: &[f64],
        k: f64,
    ) -> Result<Vec<Prediction>> {
        self.check_dim(points.n_cols())?;
        let mut z = vec![0.0; self.dim()];
        let mut r = vec![0.0; self.training().len()];
        let y_scale = self.params.y_scale;
        Ok(points
            .rows()
            .map(|x| {
                let (mean, u1) = self.correlations(x, &mut z, &mut r);
                let u = u1 - 1.0;
                let r_max = r.iter().fold(0.0f64, |a, &b| a.max(b));
                let var_bound = (1.0 + u * u / self.c)
                    .min(2.0 * (1.0 - r_max) + self.params.nugget)
                    .max(0.0);
                let mean_phys = self.params.y_shift + y_scale * mean;
                // smallest standardized variance that keeps some threshold within k sd
                let gap = thresholds
                    .iter()
                    .map(|t| (t - mean_phys).abs())
                    .fold(f64::INFINITY, f64::min)
                    / y_scale;
                let var_needed = (gap / k).powi(2) / self.sigma2_std;
                let far = |var: f64| var < var_needed;
                if far(var_bound) {
                    return self.to_prediction(mean, self.sigma2_std * var_bound);
                }
                let (q, complete) = self.quad_form_until(&mut r, |q| far((1.0 - q + u * u / self.c).min(var_bound)));
                let var = 1.0 - q + u * u / self.c;
                let var = if complete { var } else { var.min(var_bound) };
                self.to_prediction(mean, self.sigma2_std * var)
            })
            .collect())
    }
}

fn columns(rows: &[f64], dim: usize) -> Vec<f64> {
    let m = rows.len() / dim;
    let mut out = vec![0.0; rows.len()];
    for i in 0..m {
        for k in 0..dim {
            out[k * m + i] = rows[i * dim + k];
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let n4 = a.len() / 4 * 4;
    for i in (0..n4).step_by(4) {
        s[0] += a[i] * b[i];
        s[1] += a[i + 1] * b[i + 1];
        s[2] += a[i + 2] * b[i + 2];
        s[3] += a[i + 3] * b[i + 3];
    }
    let mut t = (s[0] + s[1]) + (s[2] + s[3]);
    for i in n4..a.len() {
        t += a[i] * b[i];
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sin_set(n: usize) -> TrainingSet {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|x| x[0].sin()).collect();
        TrainingSet::from_rows(1, &rows, &y).unwrap()
    }

    #[test]
    fn interpolates_training_points_under_a_large_nugget() {
        let tr = sin_set(9);
        let opts = FitOptions {
            nugget: 1e-4,
            ..FitOptions::default()
        };
        let model = KrigingModel::fit(&tr, &Scaling::identity(1), &opts).unwrap();
        assert!(model.nugget() >= 1e-4);
        for (x, y) in tr.inputs().zip(tr.outputs()) {
            let p = model.predict_one(x).unwrap();
            assert!((p.mean - y).abs() <= 1e-9, "{} vs {y}", p.mean);
            assert_eq!(p.sd, 0.0);
        }
    }

    #[test]
    fn correlation_values() {
        assert_eq!(
            correlation(&[0.3, 1.0], &[0.3, 1.0], &[2.0, 3.0]).unwrap(),
            1.0
        );
        assert_relative_eq!(
            correlation(&[0.0], &[1.0], &[1.0]).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            correlation(&[1.0, 1.0], &[0.0, 0.0], &[2.0, 3.0]).unwrap(),
            (-5.0f64).exp(),
            max_relative = 1e-15
        );
        assert!(correlation(&[0.0], &[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn duplicates_are_rejected() {
        let mut t = TrainingSet::new(2);
        t.push(&[1.0, 2.0], 0.0).unwrap();
        assert!(matches!(
            t.push(&[1.0, 2.0 + 1e-14], 1.0),
            Err(Error::DuplicateTrainingPoint(0))
        ));
        t.push(&[1.0, 2.0 + 1e-9], 1.0).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn constant_outputs_recovered() {
        let t = TrainingSet::from_rows(1, &[vec![0.0], vec![1.0]], &[2.5, 2.5]).unwrap();
        let m = KrigingModel::fit(&t, &Scaling::identity(1), &FitOptions::default()).unwrap();
        assert_relative_eq!(m.beta(), 2.5, epsilon = 1e-9);
        for i in 0..=10 {
            let p = m.predict_one(&[i as f64 / 10.0]).unwrap();
            assert!((p.mean - 2.5).abs() <= 1e-9);
        }
        assert!(m.sigma2() > 0.0);
    }

    #[test]
    fn interpolates_training_points() {
        let t = sin_set(6);
        let m = KrigingModel::fit(&t, &Scaling::identity(1), &FitOptions::default()).unwrap();
        let range = 2.0;
        for (x, y) in t.inputs().zip(t.outputs()) {
            let p = m.predict_one(x).unwrap();
            assert!((p.mean - y).abs() <= 1e-6 * range, "{} vs {}", p.mean, y);
            assert!(p.sd <= (m.sigma2() * m.nugget() * 10.0).sqrt());
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let t = sin_set(6);
        let m = KrigingModel::fit(&t, &Scaling::identity(1), &FitOptions::default()).unwrap();
        let p = m.predict_one(&[1e6]).unwrap();
        assert_relative_eq!(p.mean, m.beta(), max_relative = 1e-12);
        assert!(p.sd * p.sd >= m.sigma2() * (1.0 - 1e-12));
    }

    #[test]
    fn batch_equals_single_and_screening_is_conservative() {
        let t = sin_set(8);
        let m = KrigingModel::fit(&t, &Scaling::identity(1), &FitOptions::default()).unwrap();
        let pts: Vec<f64> = (0..50).map(|i| -1.0 + 0.17 * i as f64).collect();
        let sm = SampleMatrix::from_rows(1, pts.clone(), 0).unwrap();
        let batch = m.predict(&sm).unwrap();
        let screened = m.predict_screened(&sm, &[0.5], 3.0).unwrap();
        let means = m.predict_mean(&sm).unwrap();
        for (i, x) in pts.iter().enumerate() {
            let p = m.predict_one(&[*x]).unwrap();
            assert_eq!(p, batch[i]);
            assert_eq!(means[i], p.mean);
            assert_eq!(screened[i].mean, p.mean);
            assert!(screened[i].sd >= p.sd * (1.0 - 1e-9));
            if (0.5 - p.mean).abs() <= 3.0 * p.sd {
                assert_eq!(screened[i].sd, p.sd);
            }
        }
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let t = sin_set(7);
        let m = KrigingModel::fit(&t, &Scaling::identity(1), &FitOptions::default()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: KrigingModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.params(), m.params());
        for x in [0.1, 1.3, 4.4, 9.0] {
            assert_eq!(
                back.predict_one(&[x]).unwrap(),
                m.predict_one(&[x]).unwrap()
            );
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let t = sin_set(8);
        let opts = FitOptions {
            seed: 11,
            ..FitOptions::default()
        };
        let a = KrigingModel::fit(&t, &Scaling::identity(1), &opts).unwrap();
        let b = KrigingModel::fit(&t, &Scaling::identity(1), &opts).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn warm_refit_does_not_worsen_objective() {
        let t = sin_set(8);
        let opts = FitOptions::default();
        let a = KrigingModel::fit(&t, &Scaling::identity(1), &opts).unwrap();
        let b =
            KrigingModel::refit_from(&t, &Scaling::identity(1), &opts, &a.log10_theta()).unwrap();
        assert!(b.params().objective <= a.params().objective);
    }
}
