use krigvoi::esc::{InputTransform, LimitState};
use krigvoi::prob::{std_normal_cdf, Distribution};
use krigvoi::trainer::{
    run_framework, FnOracle, GroupStatus, InputModel, Problem, SharingScheme, TrainerConfig,
};

fn gaussian_inputs(dim: usize) -> InputModel {
    InputModel {
        dists: vec![Distribution::normal(0.0, 1.0).unwrap(); dim],
        upgrade: None,
    }
}

fn state(name: &str, t: f64) -> LimitState {
    LimitState::new(name, t, InputTransform::Identity).unwrap()
}

/// Negated four-branch series system; fails when the response reaches 0.
fn four_branch(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let g = [
        3.0 + 0.1 * (a - b).powi(2) - (a + b) * r,
        3.0 + 0.1 * (a - b).powi(2) + (a + b) * r,
        (a - b) + 6.0 * r,
        (b - a) + 6.0 * r,
    ];
    -g.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn quick_config() -> TrainerConfig {
    TrainerConfig {
        n_delta_s: 20_000,
        ..TrainerConfig::default()
    }
}

#[test]
fn linear_response_matches_closed_form() {
    // Res = x0 + x1, x ~ N(0, I): P(Res >= t) = Φ(-t/√2)
    let oracle = FnOracle::new(2, |x: &[f64]| x[0] + x[1]);
    let (t1, t2) = (2.0, 3.0);
    let problem = Problem {
        limit_states: vec![state("a", t1), state("b", t2)],
        groups: vec![vec![0, 1]],
        pool_sizes: vec![200_000],
        inputs: gaussian_inputs(2),
    };
    let r = run_framework(&problem, &oracle, &quick_config(), SharingScheme::SharedModel, 11).unwrap();
    assert!(r.converged);
    for (p_hat, t) in r.p_hat_f.iter().zip([t1, t2]) {
        let exact = std_normal_cdf(-t / 2f64.sqrt());
        assert!((p_hat / exact - 1.0).abs() <= 0.05, "{p_hat} vs {exact}");
    }
    assert!(r.n_evaluations < 60, "{}", r.n_evaluations);
}

#[test]
fn training_log_invariants() {
    let oracle = FnOracle::new(2, |x: &[f64]| x[0] * x[0] + 0.5 * x[1]);
    let problem = Problem {
        limit_states: vec![state("a", 3.0), state("b", 4.0)],
        groups: vec![vec![0, 1]],
        pool_sizes: vec![50_000],
        inputs: gaussian_inputs(2),
    };
    let r = run_framework(&problem, &oracle, &quick_config(), SharingScheme::SharedModel, 5).unwrap();
    let g = &r.groups[0];
    assert_eq!(g.status, GroupStatus::Converged);
    assert_eq!(r.n_evaluations, g.model.training().len());
    let mut prev = 0;
    for (i, rec) in g.log.iter().enumerate() {
        assert!(rec.n_evaluations >= prev);
        prev = rec.n_evaluations;
        assert_eq!(rec.n_training, rec.n_evaluations);
        assert!(rec.added.len() <= 2);
        let terminal = i + 1 == g.log.len();
        if !terminal && !rec.enriched {
            assert!(!rec.added.is_empty());
            assert_eq!(g.log[i + 1].n_training, rec.n_training + rec.added.len());
        }
    }
    let last = g.log.last().unwrap();
    assert!(last.members.iter().all(|m| !m.active));
    for rep in &g.reports {
        assert!(rep.cov_pf <= 0.05);
    }
}

#[test]
fn constant_response_below_thresholds() {
    let oracle = FnOracle::new(2, |_: &[f64]| 0.01);
    let problem = Problem {
        limit_states: vec![state("ser", 0.09), state("str", 0.11)],
        groups: vec![vec![0, 1]],
        pool_sizes: vec![10_000],
        inputs: gaussian_inputs(2),
    };
    let cfg = quick_config();
    let r = run_framework(&problem, &oracle, &cfg, SharingScheme::SharedModel, 1).unwrap();
    let g = &r.groups[0];
    assert_eq!(g.status, GroupStatus::Converged);
    assert_eq!(g.added_points, 0);
    assert_eq!(r.n_evaluations, cfg.n_initial);
    assert_eq!(g.log.iter().filter(|rec| rec.enriched).count(), 1);
    assert_eq!(g.zero_probability, vec![true, true]);
    for rep in &g.reports {
        assert_eq!((rep.n_hat_f, rep.eps_max), (0, 0.0));
    }
    assert_eq!(g.pool_size, 10_000 + cfg.n_delta_s);
}

#[test]
fn constant_response_above_thresholds() {
    let oracle = FnOracle::new(2, |_: &[f64]| 1.0);
    let problem = Problem {
        limit_states: vec![state("ser", 0.09), state("str", 0.11)],
        groups: vec![vec![0, 1]],
        pool_sizes: vec![10_000],
        inputs: gaussian_inputs(2),
    };
    let r = run_framework(&problem, &oracle, &quick_config(), SharingScheme::SharedModel, 1).unwrap();
    assert!(r.converged);
    assert_eq!(r.groups[0].log.len(), 1);
    assert_eq!(r.p_hat_f, vec![1.0, 1.0]);
}

#[test]
fn second_group_with_same_truth_reuses_knowledge() {
    let oracle = FnOracle::new(2, four_branch);
    let problem = Problem {
        limit_states: vec![state("a", 0.0), state("b", 0.0)],
        groups: vec![vec![0], vec![1]],
        pool_sizes: vec![100_000, 100_000],
        inputs: gaussian_inputs(2),
    };
    let r = run_framework(&problem, &oracle, &quick_config(), SharingScheme::ShareAll, 3).unwrap();
    assert!(r.converged);
    let (a, b) = (r.groups[0].added_points, r.groups[1].added_points);
    assert!(a > 0);
    assert!(4 * b <= a, "group 1 added {a}, group 2 added {b}");
    assert_eq!(r.n_evaluations, r.groups[1].model.training().len());
}

#[test]
fn single_state_single_group_is_plain_active_learning() {
    let oracle = FnOracle::new(2, |x: &[f64]| x[0] + 0.2 * x[1]);
    let problem = Problem {
        limit_states: vec![state("a", 2.0)],
        groups: vec![vec![0]],
        pool_sizes: vec![50_000],
        inputs: gaussian_inputs(2),
    };
    let cfg = quick_config();
    let a = run_framework(&problem, &oracle, &cfg, SharingScheme::Separate, 9).unwrap();
    let b = run_framework(&problem, &oracle, &cfg, SharingScheme::SharedModel, 9).unwrap();
    assert_eq!(a.n_evaluations, b.n_evaluations);
    assert_eq!(a.p_hat_f, b.p_hat_f);
    assert!(a.groups[0].log.iter().all(|rec| rec.added.len() <= 1));
}

#[test]
fn rejects_bad_grouping() {
    let oracle = FnOracle::new(2, |x: &[f64]| x[0]);
    let problem = Problem {
        limit_states: vec![state("a", 2.0), state("b", 1.0)],
        groups: vec![vec![0]],
        pool_sizes: vec![100],
        inputs: gaussian_inputs(2),
    };
    assert!(run_framework(&problem, &oracle, &quick_config(), SharingScheme::Separate, 0).is_err());
}
