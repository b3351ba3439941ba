mod common;

use common::{conditional_variance, textbook_objective, TextbookOk};
use krigvoi::kriging::{FitOptions, KrigingModel, ModelParams, Scaling, TrainingSet};
use krigvoi::prob::SampleMatrix;
use krigvoi::rng::{open_unit, stream_rng, Stream};

fn scaled_rows(p: &ModelParams) -> Vec<Vec<f64>> {
    p.training.inputs().map(|x| scale(p, x)).collect()
}

fn scale(p: &ModelParams, x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(k, v)| (v - p.scaling.shift[k]) / p.scaling.scale[k])
        .collect()
}

fn sin_rows(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64])
        .collect();
    let y = rows.iter().map(|x| x[0].sin()).collect();
    (rows, y)
}

#[test]
fn leave_one_out_matches_textbook_kriging() {
    let (rows, y) = sin_rows(8);
    for out in 0..rows.len() {
        let keep: Vec<usize> = (0..rows.len()).filter(|&i| i != out).collect();
        let tr = TrainingSet::from_rows(
            1,
            &keep.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>(),
            &keep.iter().map(|&i| y[i]).collect::<Vec<_>>(),
        )
        .unwrap();
        let model = KrigingModel::fit(&tr, &Scaling::identity(1), &FitOptions::default()).unwrap();
        let p = model.params();
        let oracle = TextbookOk::new(
            scaled_rows(p),
            tr.outputs().to_vec(),
            p.theta.clone(),
            p.nugget,
            p.sigma2,
        );
        let (mean, _) = oracle.predict(&scale(p, &rows[out]));
        let got = model.predict_one(&rows[out]).unwrap().mean;
        assert!((got - mean).abs() <= 1e-6, "point {out}: {got} vs {mean}");
    }
}

#[test]
fn fitted_lengthscale_is_a_local_minimum_of_the_textbook_objective() {
    let (rows, y) = sin_rows(8);
    let tr = TrainingSet::from_rows(1, &rows, &y).unwrap();
    let model = KrigingModel::fit(&tr, &Scaling::identity(1), &FitOptions::default()).unwrap();
    let p = model.params();
    let x = scaled_rows(p);
    let at = textbook_objective(&x, &y, &p.theta, p.nugget);
    for f in [0.9, 1.1] {
        let theta: Vec<f64> = p.theta.iter().map(|t| t * f).collect();
        assert!(textbook_objective(&x, &y, &theta, p.nugget) >= at - 1e-9);
    }
}

#[test]
fn variance_matches_conditional_gaussian() {
    let mut rng = stream_rng(3, Stream::Synthetic, 0);
    let rows = vec![vec![0.0], vec![0.5], vec![1.0]];
    let y: Vec<f64> = (0..3).map(|_| open_unit(&mut rng) * 2.0 - 1.0).collect();
    let tr = TrainingSet::from_rows(1, &rows, &y).unwrap();
    let fitted = KrigingModel::fit(&tr, &Scaling::identity(1), &FitOptions::default()).unwrap();
    // also at a lengthscale where the points are strongly correlated
    let mut params = fitted.params().clone();
    params.theta = vec![3.0];
    let manual = KrigingModel::try_from(params).unwrap();
    for model in [&fitted, &manual] {
        let p = model.params();
        let x = scaled_rows(p);
        for _ in 0..10 {
            let q = open_unit(&mut rng) * 1.6 - 0.3;
            let sd = model.predict_one(&[q]).unwrap().sd;
            let got = sd * sd / p.sigma2;
            // second-order Richardson extrapolation of the diffuse-trend limit τ² → ∞
            let v = |t: f64| conditional_variance(&x, &scale(p, &[q]), &p.theta, p.nugget, 1.0, t);
            let want = (8.0 * v(4e3) - 6.0 * v(2e3) + v(1e3)) / 3.0;
            assert!((got - want).abs() <= 1e-8, "at {q}: {got} vs {want}");
        }
    }
}

#[test]
fn affine_rescaling_with_standardization_leaves_predictions_unchanged() {
    let mut rng = stream_rng(5, Stream::Synthetic, 1);
    let f = |x: &[f64]| (1.5 * x[0]).sin() + 0.5 * x[1] * x[1];
    let pool: Vec<f64> = (0..400).map(|_| open_unit(&mut rng) * 4.0 - 2.0).collect();
    let pool = SampleMatrix::from_rows(2, pool, 0).unwrap();
    let (a, b) = ([3.0e4, 2.0e-3], [1.0e5, 7.0e-3]);
    let mapped: Vec<f64> = pool
        .rows()
        .flat_map(|r| [a[0] * r[0] + b[0], a[1] * r[1] + b[1]])
        .collect();
    let mapped = SampleMatrix::from_rows(2, mapped, 0).unwrap();
    let idx: Vec<usize> = (0..15).map(|i| i * 7).collect();
    let t1 = TrainingSet::from_rows(
        2,
        &idx.iter()
            .map(|&i| pool.row(i).to_vec())
            .collect::<Vec<_>>(),
        &idx.iter().map(|&i| f(pool.row(i))).collect::<Vec<_>>(),
    )
    .unwrap();
    let t2 = TrainingSet::from_rows(
        2,
        &idx.iter()
            .map(|&i| mapped.row(i).to_vec())
            .collect::<Vec<_>>(),
        &idx.iter().map(|&i| f(pool.row(i))).collect::<Vec<_>>(),
    )
    .unwrap();
    let opts = FitOptions::default();
    let m1 = KrigingModel::fit(&t1, &Scaling::from_samples(&pool), &opts).unwrap();
    let m2 = KrigingModel::fit(&t2, &Scaling::from_samples(&mapped), &opts).unwrap();
    let p1 = m1.predict(&pool).unwrap();
    let p2 = m2.predict(&mapped).unwrap();
    let scale = p1.iter().map(|p| p.mean.abs()).fold(0.0, f64::max);
    for (u, v) in p1.iter().zip(&p2) {
        assert!(
            (u.mean - v.mean).abs() <= 1e-6 * scale,
            "{} vs {}",
            u.mean,
            v.mean
        );
    }
}

#[test]
fn adding_a_point_collapses_its_uncertainty() {
    let (rows, y) = sin_rows(6);
    let tr = TrainingSet::from_rows(1, &rows, &y).unwrap();
    let opts = FitOptions::default();
    let before = KrigingModel::fit(&tr, &Scaling::identity(1), &opts).unwrap();
    let x_new = [2.2];
    let sd_before = before.predict_one(&x_new).unwrap().sd;
    let mut tr2 = tr.clone();
    tr2.push(&x_new, x_new[0].sin()).unwrap();
    let after = KrigingModel::fit(&tr2, &Scaling::identity(1), &opts).unwrap();
    let sd_after = after.predict_one(&x_new).unwrap().sd;
    assert!(sd_after <= sd_before);
    assert!(sd_after <= (after.sigma2() * after.nugget() * 10.0).sqrt());
}
