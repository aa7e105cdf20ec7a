use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smtgp::datasets::{generate_toy1, Dataset, MetricKind, ToyShape};
use smtgp::divergence::SMParams;
use smtgp::evaluation::*;
use smtgp::kernels::KernelConfig;
use smtgp::optimizer::OptimizerOptions;
use smtgp::tgp::Method;

fn toy_config() -> ExperimentConfig {
    ExperimentConfig {
        cfg_x: KernelConfig::new(5.0, 1e-4).unwrap(),
        cfg_y: KernelConfig::new(0.05, 1e-4).unwrap(),
        params: SMParams::new(0.9, 1.5).unwrap(),
        scorer: Scorer::Toy(ToyShape::Toy1),
        k_tr: None,
        opts: OptimizerOptions::default(),
    }
}

fn small_toy(n: usize) -> Dataset {
    let (data, _) = generate_toy1(2);
    data.select(&(0..n).collect::<Vec<_>>())
}

#[test]
fn report_statistics_match_points() {
    let train = small_toy(80);
    let test = TestSet::scalar_inputs(&[0.1, 0.3, 0.5, 0.7, 0.9]);
    for reg in [Regressor::Tgp(Method::Kl), Regressor::Tgp(Method::SmQuadratic), Regressor::Gpr, Regressor::Wknn(5)] {
        let r = run_experiment(&train, &test, reg, &toy_config()).unwrap();
        let errors: Vec<f64> = r.points.iter().map(|p| p.error.unwrap()).collect();
        let mean = errors.iter().sum::<f64>() / 5.0;
        let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((r.mean_error - mean).abs() < 1e-15);
        assert!((r.std_error - std).abs() < 1e-12);
        assert_eq!(r.failures, 0);
        assert_eq!(r.points.iter().map(|p| p.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert_eq!(r.points[0].phi.is_some(), reg == Regressor::Tgp(Method::SmQuadratic));
    }
}

#[test]
fn empty_test_set_gives_empty_report() {
    let r = run_experiment(&small_toy(30), &TestSet::scalar_inputs(&[]), Regressor::Gpr, &toy_config()).unwrap();
    assert!(r.points.is_empty());
    assert_eq!(r.failures, 0);
}

#[test]
fn missing_targets_leave_points_unscored() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
    let ys = DMatrix::from_fn(40, 16, |i, j| xs[(i, j % 2)] * (j as f64 + 1.0));
    let train = Dataset::new("u", xs, ys).unwrap();
    let cfg = ExperimentConfig {
        cfg_x: KernelConfig::new(2.0, 5e-4).unwrap(),
        cfg_y: KernelConfig::new(200.0, 5e-4).unwrap(),
        scorer: Scorer::Targets(MetricKind::UspsCenterNorm),
        ..toy_config()
    };
    let test = TestSet {
        inputs: DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.4]),
        targets: None,
    };
    let r = run_experiment(&train, &test, Regressor::Tgp(Method::Kl), &cfg).unwrap();
    assert_eq!(r.failures, 0);
    assert!(r.points.iter().all(|p| p.error.is_none() && p.y_hat.is_some()));
    assert!(r.mean_error.is_nan());
}

#[test]
fn local_subsets_with_full_size_match_the_global_model() {
    let train = small_toy(60);
    let test = TestSet::scalar_inputs(&[0.2, 0.8]);
    let global = run_experiment(&train, &test, Regressor::Tgp(Method::Kl), &toy_config()).unwrap();
    let cfg = ExperimentConfig { k_tr: Some(60), ..toy_config() };
    let same = run_experiment(&train, &test, Regressor::Tgp(Method::Kl), &cfg).unwrap();
    for (a, b) in global.points.iter().zip(&same.points) {
        assert_eq!(a.y_hat, b.y_hat);
    }
    let cfg = ExperimentConfig { k_tr: Some(20), ..toy_config() };
    let local = run_experiment(&train, &test, Regressor::Tgp(Method::Kl), &cfg).unwrap();
    assert_eq!(local.failures, 0);
}

#[test]
fn cross_validation_is_deterministic() {
    let train = small_toy(60);
    let cfg = toy_config();
    let run = |seed| {
        cross_validate(&train, cfg.cfg_x, cfg.cfg_y, &[0.3, 0.9], &[0.5, 1.5], 3, seed, cfg.scorer, &cfg.opts).unwrap()
    };
    let (a, b) = (run(9), run(9));
    assert_eq!(a.grid.len(), 4);
    for (x, y) in a.grid.iter().zip(&b.grid) {
        assert_eq!(x, y);
    }
    assert_eq!((a.best_alpha, a.best_beta), (b.best_alpha, b.best_beta));
    let best = best_cell(&a.grid).unwrap();
    assert!(a.grid.iter().all(|c| c.mean_error >= best.mean_error));
}

#[test]
fn single_cell_grid_is_best() {
    let train = small_toy(40);
    let cfg = toy_config();
    let cv = cross_validate(&train, cfg.cfg_x, cfg.cfg_y, &[0.0], &[0.99], 2, 1, cfg.scorer, &cfg.opts).unwrap();
    assert_eq!(cv.grid.len(), 1);
    assert_eq!((cv.best_alpha, cv.best_beta), (0.01, 0.99));
    assert!(cross_validate(&train, cfg.cfg_x, cfg.cfg_y, &[0.5], &[0.5], 1, 1, cfg.scorer, &cfg.opts).is_err());
}

#[test]
fn wknn_with_one_neighbour_copies_it() {
    let train = small_toy(50);
    let cfg = KernelConfig::new(5.0, 1e-4).unwrap();
    for i in 0..50 {
        let x = train.inputs()[(i, 0)];
        let y = wknn_predict(&train, &[x], 1, cfg).unwrap();
        let nearest = (0..50)
            .min_by(|&a, &b| (train.inputs()[(a, 0)] - x).abs().total_cmp(&(train.inputs()[(b, 0)] - x).abs()))
            .unwrap();
        assert_eq!(y[0], train.outputs()[(nearest, 0)]);
    }
}

#[test]
fn gpr_interpolates_with_small_noise() {
    let xs = DMatrix::from_fn(20, 1, |i, _| i as f64 / 19.0);
    let ys = xs.map(|x| (3.0 * x).sin());
    let train = Dataset::new("s", xs.clone(), ys.clone()).unwrap();
    let g = Gpr::fit(&train, KernelConfig::new(0.05, 1e-8).unwrap()).unwrap();
    for i in 0..20 {
        let y = g.predict(&[xs[(i, 0)]]).unwrap();
        assert!((y[0] - ys[(i, 0)]).abs() < 1e-5);
    }
    let mid = g.predict(&[0.5 / 19.0]).unwrap();
    assert!((mid[0] - (1.5f64 / 19.0).sin()).abs() < 1e-3);
}

#[test]
fn spearman_examples() {
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
}

#[test]
fn certainty_needs_a_sharma_mittal_run() {
    let train = small_toy(60);
    let test = TestSet::scalar_inputs(&[0.2, 0.4, 0.6, 0.8]);
    let kl = run_experiment(&train, &test, Regressor::Tgp(Method::Kl), &toy_config()).unwrap();
    assert!(certainty_report(&kl).is_err());
    let sm = run_experiment(&train, &test, Regressor::Tgp(Method::SmQuadratic), &toy_config()).unwrap();
    let c = certainty_report(&sm).unwrap();
    assert_eq!(c.pairs.len(), 4);
    assert!(c.pairs.iter().all(|&(l, _)| l <= 1e-12));
}

#[test]
fn blend_curves_with_equal_variances_are_flat() {
    let s = emit_eta_blend_curves(0.3, 0.3).unwrap();
    assert_eq!(s.len(), 101);
    assert!(s.iter().all(|b| (b.geometric - 0.3).abs() < 1e-15 && (b.arithmetic - 0.3).abs() < 1e-15));
    let s = emit_eta_blend_curves(0.1, 0.9).unwrap();
    assert!(s.iter().all(|b| b.geometric <= b.arithmetic + 1e-15));
    assert!(emit_eta_blend_curves(0.0, 1.0).is_err());
}
