//! Reference implementations used as test oracles. Written from the textbook
//! formulas with dense matrix inverses, sharing no code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Ordinary Kriging from the bordered (Lagrange) system
/// `[R 1; 1ᵀ 0] [w; μ] = [r; 1]`, prediction `wᵀy`, variance `σ²(1 - wᵀr - μ)`.
pub struct TextbookOk {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    theta: Vec<f64>,
    sigma2: f64,
    inv: DMatrix<f64>,
}

impl TextbookOk {
    /// `x` must already be in the coordinates the lengthscales refer to.
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, theta: Vec<f64>, nugget: f64, sigma2: f64) -> Self {
        let m = x.len();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = corr(&x[i], &x[j], &theta) + if i == j { nugget } else { 0.0 };
            }
            a[(i, m)] = 1.0;
            a[(m, i)] = 1.0;
        }
        let inv = a.try_inverse().expect("bordered system invertible");
        Self {
            x,
            y,
            theta,
            sigma2,
            inv,
        }
    }

    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let m = self.x.len();
        let mut rhs = DVector::zeros(m + 1);
        for i in 0..m {
            rhs[i] = corr(&self.x[i], p, &self.theta);
        }
        rhs[m] = 1.0;
        let sol = &self.inv * &rhs;
        let mean: f64 = (0..m).map(|i| sol[i] * self.y[i]).sum();
        let wr: f64 = (0..m).map(|i| sol[i] * rhs[i]).sum();
        (mean, self.sigma2 * (1.0 - wr - sol[m]))
    }
}

pub fn corr(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += theta[k] * (a[k] - b[k]).powi(2);
    }
    (-s).exp()
}

/// Concentrated likelihood objective `ln σ̂² + ln|R| / m` computed with an
/// explicit inverse and LU determinant.
pub fn textbook_objective(x: &[Vec<f64>], y: &[f64], theta: &[f64], nugget: f64) -> f64 {
    let m = x.len();
    let r = DMatrix::from_fn(m, m, |i, j| {
        corr(&x[i], &x[j], theta) + if i == j { nugget } else { 0.0 }
    });
    let ri = r.clone().try_inverse().unwrap();
    let one = DVector::from_element(m, 1.0);
    let yv = DVector::from_column_slice(y);
    let beta = (one.transpose() * &ri * &yv)[0] / (one.transpose() * &ri * &one)[0];
    let res = yv - one * beta;
    let s2 = (res.transpose() * &ri * &res)[0] / m as f64;
    s2.ln() + r.determinant().ln() / m as f64
}

/// Variance of `Z(p)` given `Z(x_1..x_m)` for the Gaussian field
/// `β + Z`, `β ~ N(0, τ²)`, `cov Z = σ²R`, from a plain Schur complement.
pub fn conditional_variance(
    x: &[Vec<f64>],
    p: &[f64],
    theta: &[f64],
    nugget: f64,
    sigma2: f64,
    tau2: f64,
) -> f64 {
    let m = x.len();
    let k = DMatrix::from_fn(m, m, |i, j| {
        sigma2 * (corr(&x[i], &x[j], theta) + if i == j { nugget } else { 0.0 }) + tau2
    });
    let kx = DVector::from_fn(m, |i, _| sigma2 * corr(&x[i], p, theta) + tau2);
    let sol = k.lu().solve(&kx).unwrap();
    sigma2 + tau2 - kx.dot(&sol)
}

/// Synthetic candidate pool with known truths: each truth is drawn from the
/// prediction's own normal distribution, so wrong signs occur with exactly the
/// modelled probabilities.
pub fn synthetic_pool(
    rng: &mut impl rand::RngCore,
    n: usize,
) -> (Vec<krigvoi::kriging::Prediction>, Vec<f64>) {
    use krigvoi::prob::std_normal_quantile;
    use krigvoi::rng::open_unit;
    let mut preds = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let mean = std_normal_quantile(open_unit(rng));
        let sd = 0.02 + 0.3 * open_unit(rng);
        preds.push(krigvoi::kriging::Prediction { mean, sd });
        truth.push(mean + sd * std_normal_quantile(open_unit(rng)));
    }
    (preds, truth)
}
