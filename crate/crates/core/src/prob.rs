//! Marginal distributions, Latin Hypercube sampling and the Poisson binomial
//! distribution.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::rng::{index_below, open_unit};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile for `u` in (0, 1).
pub fn std_normal_quantile(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Normal,
    Lognormal,
    /// Max-type (right-skewed) Gumbel.
    Gumbel,
}

/// A marginal distribution parameterized by its mean and standard deviation.
///
/// Internal `location`/`scale` are derived by moment matching:
/// the mean/sd of the underlying normal for lognormal, location/scale for Gumbel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentSpec", into = "MomentSpec")]
pub struct Distribution {
    kind: DistKind,
    mean: f64,
    sd: f64,
    location: f64,
    scale: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentSpec {
    kind: DistKind,
    mean: f64,
    sd: f64,
}

impl TryFrom<MomentSpec> for Distribution {
    type Error = Error;
    fn try_from(s: MomentSpec) -> Result<Self> {
        Distribution::new(s.kind, s.mean, s.sd)
    }
}

impl From<Distribution> for MomentSpec {
    fn from(d: Distribution) -> Self {
        MomentSpec {
            kind: d.kind,
            mean: d.mean,
            sd: d.sd,
        }
    }
}

impl Distribution {
    pub fn new(kind: DistKind, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::invalid(
                "sd",
                format!("must be positive and finite, got {sd}"),
            ));
        }
        if !mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        let (location, scale) = match kind {
            DistKind::Normal => (mean, sd),
            DistKind::Lognormal => {
                if mean <= 0.0 {
                    return Err(Error::invalid(
                        "mean",
                        format!("lognormal mean must be positive, got {mean}"),
                    ));
                }
                let var = ((sd / mean).powi(2)).ln_1p();
                (mean.ln() - 0.5 * var, var.sqrt())
            }
            DistKind::Gumbel => {
                let scale = sd * 6f64.sqrt() / PI;
                (mean - EULER_GAMMA * scale, scale)
            }
        };
        Ok(Self {
            kind,
            mean,
            sd,
            location,
            scale,
        })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(DistKind::Normal, mean, sd)
    }

    pub fn lognormal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(DistKind::Lognormal, mean, sd)
    }

    pub fn gumbel(mean: f64, sd: f64) -> Result<Self> {
        Self::new(DistKind::Gumbel, mean, sd)
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Mean recomputed from the internal parameters.
    pub fn implied_mean(&self) -> f64 {
        match self.kind {
            DistKind::Normal => self.location,
            DistKind::Lognormal => (self.location + 0.5 * self.scale * self.scale).exp(),
            DistKind::Gumbel => self.location + EULER_GAMMA * self.scale,
        }
    }

    /// Standard deviation recomputed from the internal parameters.
    pub fn implied_sd(&self) -> f64 {
        match self.kind {
            DistKind::Normal => self.scale,
            DistKind::Lognormal => self.implied_mean() * (self.scale * self.scale).exp_m1().sqrt(),
            DistKind::Gumbel => self.scale * PI / 6f64.sqrt(),
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match self.kind {
            DistKind::Lognormal => x > 0.0 && x.is_finite(),
            _ => x.is_finite(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            DistKind::Normal => std_normal_cdf((x - self.location) / self.scale),
            DistKind::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - self.location) / self.scale)
                }
            }
            DistKind::Gumbel => (-(-(x - self.location) / self.scale).exp()).exp(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.kind {
            DistKind::Normal => std_normal_pdf((x - self.location) / self.scale) / self.scale,
            DistKind::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((x.ln() - self.location) / self.scale) / (x * self.scale)
                }
            }
            DistKind::Gumbel => {
                let z = (x - self.location) / self.scale;
                (-z - (-z).exp()).exp() / self.scale
            }
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(
                "u",
                format!("quantile level must lie in (0, 1), got {u}"),
            ));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match self.kind {
            DistKind::Normal => self.location + self.scale * std_normal_quantile(u),
            DistKind::Lognormal => (self.location + self.scale * std_normal_quantile(u)).exp(),
            DistKind::Gumbel => self.location - self.scale * (-u.ln()).ln(),
        }
    }
}

/// Dense row-major sample matrix, one column per variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    seed: u64,
}

impl SampleMatrix {
    pub fn from_rows(n_cols: usize, values: Vec<f64>, seed: u64) -> Result<Self> {
        if n_cols == 0 || values.len() % n_cols != 0 {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: values.len(),
            });
        }
        Ok(Self {
            n_rows: values.len() / n_cols,
            n_cols,
            values,
            seed,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.n_cols).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Append the rows of `other` (same column count).
    pub fn append(&mut self, other: &SampleMatrix) -> Result<()> {
        if other.n_cols != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: other.n_cols,
            });
        }
        self.values.extend_from_slice(&other.values);
        self.n_rows += other.n_rows;
        Ok(())
    }

    /// Per-column (mean, population sd).
    pub fn column_moments(&self) -> Vec<(f64, f64)> {
        (0..self.n_cols)
            .map(|j| {
                let n = self.n_rows as f64;
                let mean = self.column(j).sum::<f64>() / n;
                let var = self.column(j).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .collect()
    }
}

/// Latin Hypercube sample: per column one uniform draw inside each of the `n`
/// equiprobable strata, strata randomly permuted independently per column.
pub fn lhs_sample(dists: &[Distribution], n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::invalid("n", "sample size must be at least 1"));
    }
    if dists.is_empty() {
        return Err(Error::invalid(
            "dists",
            "at least one distribution is required",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cols = dists.len();
    let mut values = vec![0.0; n * n_cols];
    let mut perm: Vec<usize> = (0..n).collect();
    let nf = n as f64;
    for (j, dist) in dists.iter().enumerate() {
        for i in (1..n).rev() {
            perm.swap(i, index_below(&mut rng, i + 1));
        }
        for i in 0..n {
            let stratum = perm[i];
            let mut u = (stratum as f64 + open_unit(&mut rng)) / nf;
            // Rounding may land exactly on the upper stratum edge.
            let upper = (stratum + 1) as f64 / nf;
            if u >= upper {
                u = upper.next_down();
            }
            values[i * n_cols + j] = dist.quantile_unchecked(u);
        }
    }
    SampleMatrix::from_rows(n_cols, values, seed)
}

/// Distribution of the number of successes in independent, non-identical
/// Bernoulli trials.
#[derive(Clone, Debug)]
pub struct PoissonBinomial {
    probs: Vec<f64>,
    mean: f64,
    variance: f64,
}

/// Above this many DP cell updates the refined normal approximation is used.
const EXACT_DP_BUDGET: usize = 50_000_000;

impl PoissonBinomial {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidProbabilities(format!(
                "trial probability {p} outside [0, 1]"
            )));
        }
        let mean = probs.iter().sum();
        let variance = probs.iter().map(|p| p * (1.0 - p)).sum();
        Ok(Self {
            probs,
            mean,
            variance,
        })
    }

    pub fn n_trials(&self) -> usize {
        self.probs.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Full probability mass function by O(n²) convolution.
    pub fn pmf(&self) -> Vec<f64> {
        let n = self.probs.len();
        let mut pmf = vec![0.0; n + 1];
        pmf[0] = 1.0;
        for (i, &p) in self.probs.iter().enumerate() {
            for k in (1..=i + 1).rev() {
                pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
            }
            pmf[0] *= 1.0 - p;
        }
        pmf
    }

    /// Exact CDF at every support point 0..=n.
    pub fn cdf_table(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .pmf()
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        cdf
    }

    fn check_level(q: f64) -> Result<()> {
        if q > 0.0 && q < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(
                "q",
                format!("quantile level must lie in (0, 1), got {q}"),
            ))
        }
    }

    /// Trials with p in (0, 1) plus the count of certain successes.
    fn random_part(&self) -> (Vec<f64>, usize) {
        let certain = self.probs.iter().filter(|&&p| p == 1.0).count();
        let random = self
            .probs
            .iter()
            .copied()
            .filter(|&p| p > 0.0 && p < 1.0)
            .collect();
        (random, certain)
    }

    /// Smallest k with CDF(k) >= q. Exact DP when affordable, otherwise the
    /// refined normal approximation.
    pub fn inverse_cdf(&self, q: f64) -> Result<usize> {
        Self::check_level(q)?;
        let (random, _) = self.random_part();
        let cap = truncation_cap(self.mean, self.variance, random.len());
        if random.len().saturating_mul(cap + 1) <= EXACT_DP_BUDGET {
            self.inverse_cdf_exact(q)
        } else {
            self.inverse_cdf_approx(q)
        }
    }

    /// Exact inverse CDF via a DP whose support is truncated at a cap far in
    /// the upper tail. Mass only flows upward, so lumping everything at or
    /// above the cap into one cell leaves CDF(k) exact for every k below it.
    pub fn inverse_cdf_exact(&self, q: f64) -> Result<usize> {
        Self::check_level(q)?;
        let (random, certain) = self.random_part();
        let n = random.len();
        let mut cap = truncation_cap(self.mean, self.variance, n);
        loop {
            let mut pmf = vec![0.0; cap + 1];
            pmf[0] = 1.0;
            let mut top = 0usize;
            for &p in &random {
                let q1 = 1.0 - p;
                if top < cap {
                    top += 1;
                    pmf[top] = pmf[top - 1] * p;
                    for k in (1..top).rev() {
                        pmf[k] = pmf[k] * q1 + pmf[k - 1] * p;
                    }
                } else {
                    pmf[cap] += pmf[cap - 1] * p;
                    for k in (1..cap).rev() {
                        pmf[k] = pmf[k] * q1 + pmf[k - 1] * p;
                    }
                }
                pmf[0] *= q1;
            }
            let mut acc = 0.0;
            for (k, &mass) in pmf.iter().enumerate().take(cap.max(1)) {
                acc += mass;
                if acc >= q {
                    return Ok(k + certain);
                }
            }
            if cap >= n {
                return Ok(n + certain);
            }
            cap = (2 * cap).min(n);
        }
    }

    /// Refined normal approximation with continuity and skewness correction.
    pub fn inverse_cdf_approx(&self, q: f64) -> Result<usize> {
        Self::check_level(q)?;
        let (random, certain) = self.random_part();
        let n = random.len();
        let mean: f64 = random.iter().sum();
        let var: f64 = random.iter().map(|p| p * (1.0 - p)).sum();
        if n == 0 || var <= 0.0 {
            return Ok(certain);
        }
        let sd = var.sqrt();
        let gamma = random
            .iter()
            .map(|p| p * (1.0 - p) * (1.0 - 2.0 * p))
            .sum::<f64>()
            / (sd * sd * sd);
        let refined_cdf = |k: usize| {
            let x = (k as f64 + 0.5 - mean) / sd;
            (std_normal_cdf(x) + gamma * (1.0 - x * x) * std_normal_pdf(x) / 6.0).clamp(0.0, 1.0)
        };
        let start = (mean - 12.0 * sd - 10.0).floor().max(0.0) as usize;
        for k in start..=n {
            if refined_cdf(k) >= q {
                return Ok(k + certain);
            }
        }
        Ok(n + certain)
    }
}

fn truncation_cap(mean: f64, variance: f64, n: usize) -> usize {
    let cap = (mean + 12.0 * variance.sqrt() + 32.0).ceil() as usize;
    cap.min(n).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lognormal_moment_match() {
        let d = Distribution::lognormal(2.1e11, 2.1e10).unwrap();
        assert_relative_eq!(d.scale() * d.scale(), 1.01f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            d.scale() * d.scale(),
            9.950_330_853_168_092e-3,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            d.location(),
            2.1e11f64.ln() - 0.5 * 1.01f64.ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn standard_normal_identity() {
        let d = Distribution::normal(0.0, 1.0).unwrap();
        assert_eq!(d.location(), 0.0);
        assert_eq!(d.scale(), 1.0);
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn gumbel_parameters_match_high_precision_values() {
        // mpmath, 40 digits: sd*sqrt(6)/pi and mean - euler_gamma*scale
        let d = Distribution::gumbel(4.0e4, 4.0e4).unwrap();
        assert_relative_eq!(d.scale(), 31_187.872_049_347_044, max_relative = 1e-13);
        assert_relative_eq!(d.location(), 21_997.871_698_172_214, max_relative = 1e-13);
    }

    #[test]
    fn gumbel_mode_quantile() {
        let d = Distribution::gumbel(4.0e4, 4.0e4).unwrap();
        let u = (-1.0f64).exp();
        assert_relative_eq!(d.quantile(u).unwrap(), d.location(), max_relative = 1e-12);
    }

    #[test]
    fn lognormal_median_is_exp_location() {
        let d = Distribution::lognormal(2.1e11, 2.1e10).unwrap();
        assert_relative_eq!(
            d.quantile(0.5).unwrap(),
            d.location().exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::normal(0.0, -1.0).is_err());
        assert!(Distribution::lognormal(0.0, 1.0).is_err());
        assert!(Distribution::lognormal(-1.0, 1.0).is_err());
        let d = Distribution::normal(0.0, 1.0).unwrap();
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
        assert!(d.quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip_all_families() {
        let dists = [
            Distribution::normal(3.0, 2.0).unwrap(),
            Distribution::lognormal(4.0e-3, 2.0e-3).unwrap(),
            Distribution::lognormal(2.1e11, 2.1e10).unwrap(),
            Distribution::gumbel(4.0e4, 4.0e4).unwrap(),
        ];
        let levels = [
            1e-6,
            1e-4,
            0.01,
            0.1,
            0.3,
            0.5,
            0.7,
            0.9,
            0.99,
            1.0 - 1e-4,
            1.0 - 1e-6,
        ];
        for d in &dists {
            let mut last = f64::NEG_INFINITY;
            for &u in &levels {
                let x = d.quantile(u).unwrap();
                assert!(x > last, "quantile not monotone for {d:?}");
                last = x;
                assert_relative_eq!(d.cdf(x), u, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn moment_round_trip() {
        for d in [
            Distribution::normal(-1.5, 0.2).unwrap(),
            Distribution::lognormal(3.0e-3, 1.5e-3).unwrap(),
            Distribution::lognormal(1e-4, 1e-5).unwrap(),
            Distribution::gumbel(4.0e4, 7.5e3).unwrap(),
        ] {
            assert_relative_eq!(d.implied_mean(), d.mean(), max_relative = 1e-12);
            assert_relative_eq!(d.implied_sd(), d.sd(), max_relative = 1e-12);
        }
    }

    #[test]
    fn lhs_single_sample() {
        let d = Distribution::normal(0.0, 1.0).unwrap();
        let s = lhs_sample(&[d], 1, 3).unwrap();
        assert_eq!(s.n_rows(), 1);
        let u = d.cdf(s.get(0, 0));
        assert!(u > 0.0 && u < 1.0);
    }

    #[test]
    fn lhs_one_point_per_stratum() {
        let dists = [
            Distribution::normal(0.0, 1.0).unwrap(),
            Distribution::lognormal(4.0e-3, 2.0e-3).unwrap(),
            Distribution::gumbel(4.0e4, 4.0e4).unwrap(),
        ];
        for seed in 0..20 {
            for n in [4usize, 17, 250] {
                let s = lhs_sample(&dists, n, seed).unwrap();
                for (j, d) in dists.iter().enumerate() {
                    let mut hits = vec![0u32; n];
                    for x in s.column(j) {
                        assert!(d.in_support(x));
                        let k = (d.cdf(x) * n as f64).floor() as usize;
                        hits[k.min(n - 1)] += 1;
                    }
                    assert!(hits.iter().all(|&h| h == 1), "seed {seed} n {n} col {j}");
                }
            }
        }
    }

    #[test]
    fn lhs_is_deterministic_and_rejects_bad_input() {
        let dists = [Distribution::normal(0.0, 1.0).unwrap(); 3];
        let a = lhs_sample(&dists, 100, 11).unwrap();
        let b = lhs_sample(&dists, 100, 11).unwrap();
        let c = lhs_sample(&dists, 100, 12).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), c.as_slice());
        assert!(lhs_sample(&dists, 0, 1).is_err());
        assert!(lhs_sample(&[], 5, 1).is_err());
    }

    #[test]
    fn pb_degenerate_cases() {
        let zeros = PoissonBinomial::new(vec![0.0; 100]).unwrap();
        assert_eq!(zeros.inverse_cdf(0.975).unwrap(), 0);
        assert_eq!(zeros.inverse_cdf_approx(0.975).unwrap(), 0);
        let ones = PoissonBinomial::new(vec![1.0; 5]).unwrap();
        assert_eq!(ones.inverse_cdf(0.5).unwrap(), 5);
        assert_eq!(ones.inverse_cdf_approx(0.5).unwrap(), 5);
    }

    #[test]
    fn pb_rejects_bad_input() {
        assert!(PoissonBinomial::new(vec![0.2, 1.1]).is_err());
        assert!(PoissonBinomial::new(vec![-0.1]).is_err());
        let pb = PoissonBinomial::new(vec![0.5]).unwrap();
        assert!(pb.inverse_cdf(0.0).is_err());
        assert!(pb.inverse_cdf(1.0).is_err());
    }

    #[test]
    fn pb_summaries() {
        let pb = PoissonBinomial::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_relative_eq!(pb.mean(), 1.5, max_relative = 1e-15);
        assert_relative_eq!(
            pb.variance(),
            0.09 + 0.16 + 0.21 + 0.24 + 0.25,
            max_relative = 1e-15
        );
        let cdf = pb.cdf_table();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*cdf.last().unwrap(), 1.0);
    }

    #[test]
    fn truncated_dp_matches_full_dp() {
        let probs: Vec<f64> = (0..3000)
            .map(|i| ((i * 7919) % 1000) as f64 * 1e-5)
            .collect();
        let pb = PoissonBinomial::new(probs).unwrap();
        let cdf = pb.cdf_table();
        for q in [0.025, 0.5, 0.975, 0.999] {
            let expected = cdf.iter().position(|&c| c >= q).unwrap();
            assert_eq!(pb.inverse_cdf_exact(q).unwrap(), expected);
        }
    }
}
