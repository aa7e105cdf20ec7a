//! Cross-validation of the divergence parameters, baseline regressors,
//! batch experiments and the certainty-versus-error analysis.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{error_metric, knn_indices, knn_subset, toy_ground_truth_error, Dataset, MetricKind, ToyShape};
use crate::divergence::SMParams;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{kernel_matrix, kernel_vector, KernelConfig, KernelMatrix};
use crate::optimizer::OptimizerOptions;
use crate::tgp::{predict, train, Method, TrainedModel};

/// How a prediction is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    /// Distance to the nearest exact inverse of a toy relation.
    Toy(ToyShape),
    /// A metric against known target outputs.
    Targets(MetricKind),
}

impl Scorer {
    pub fn score(&self, x: &[f64], y_hat: &[f64], target: Option<&[f64]>) -> Result<f64> {
        match self {
            Scorer::Toy(shape) => {
                check_dim("toy input", 1, x.len())?;
                check_dim("toy output", 1, y_hat.len())?;
                toy_ground_truth_error(x[0], y_hat[0], *shape)
            }
            Scorer::Targets(kind) => {
                let t = target.ok_or_else(|| Error::invalid("scorer", "target outputs are required"))?;
                error_metric(y_hat, t, *kind)
            }
        }
    }
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// One `(alpha, beta)` cell of a cross-validation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CVCell {
    pub alpha: f64,
    pub beta: f64,
    pub mean_error: f64,
    pub mean_iterations: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct CVResult {
    pub best_alpha: f64,
    pub best_beta: f64,
    pub grid: Vec<CVCell>,
    pub folds: usize,
}

/// `0, 0.05, ..., 1`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

pub const DEFAULT_BETA_SET: [f64; 3] = [0.5, 0.99, 1.5];

fn clamp_alpha(a: f64) -> f64 {
    if a <= 0.0 {
        0.01
    } else if a >= 1.0 {
        0.99
    } else {
        a
    }
}

/// Picks the lowest-error cell, preferring smaller `alpha` and then smaller
/// `|beta - 1|` among exact ties.
pub fn best_cell(grid: &[CVCell]) -> Option<&CVCell> {
    grid.iter().min_by(|a, b| {
        a.mean_error
            .total_cmp(&b.mean_error)
            .then(a.alpha.total_cmp(&b.alpha))
            .then((a.beta - 1.0).abs().total_cmp(&(b.beta - 1.0).abs()))
    })
}

struct Fold {
    model: TrainedModel,
    validation: Vec<usize>,
    /// KL predictions used to start every Sharma-Mittal fit; they do not
    /// depend on the divergence parameters.
    starts: Vec<Option<DVector<f64>>>,
}

/// K-fold cross-validation of the Sharma-Mittal parameters over
/// `alpha_grid x beta_set`. Grid endpoints 0 and 1 map to 0.01 and 0.99.
/// Cells whose fits fail score as infinite rather than aborting.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    data: &Dataset,
    cfg_x: KernelConfig,
    cfg_y: KernelConfig,
    alpha_grid: &[f64],
    beta_set: &[f64],
    folds: usize,
    seed: u64,
    scorer: Scorer,
    opts: &OptimizerOptions,
) -> Result<CVResult> {
    if folds < 2 || folds > data.len() {
        return Err(Error::invalid("folds", format!("need 2 <= folds <= {}", data.len())));
    }
    if alpha_grid.is_empty() || beta_set.is_empty() {
        return Err(Error::invalid("grid", "alpha grid and beta set must be non-empty"));
    }
    let cells: Vec<SMParams> = alpha_grid
        .iter()
        .flat_map(|&a| beta_set.iter().map(move |&b| SMParams::new(clamp_alpha(a), b)))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = |pos: usize| pos % folds;

    let prepared: Vec<Fold> = (0..folds)
        .map(|f| {
            let (mut train_idx, mut validation): (Vec<usize>, Vec<usize>) = (0..order.len())
                .partition::<Vec<_>, _>(|&pos| fold_of(pos) != f);
            train_idx.iter_mut().for_each(|p| *p = order[*p]);
            validation.iter_mut().for_each(|p| *p = order[*p]);
            let part = data.select(&train_idx);
            let (xs, ys) = part.into_parts();
            let model = train(xs, ys, cfg_x, cfg_y, cells[0])?;
            let starts = validation
                .par_iter()
                .map(|&i| {
                    predict(&model, &row(data.inputs(), i), Method::Kl, None, opts)
                        .ok()
                        .map(|p| p.y_hat)
                })
                .collect();
            Ok(Fold { model, validation, starts })
        })
        .collect::<Result<_>>()?;

    let grid: Vec<CVCell> = cells
        .par_iter()
        .map(|&params| evaluate_cell(data, &prepared, params, scorer, opts))
        .collect();
    let best = best_cell(&grid).expect("grid is non-empty");
    Ok(CVResult {
        best_alpha: best.alpha,
        best_beta: best.beta,
        folds,
        grid,
    })
}

fn evaluate_cell(data: &Dataset, folds: &[Fold], params: SMParams, scorer: Scorer, opts: &OptimizerOptions) -> CVCell {
    let mut total = 0.0;
    let mut iterations = 0usize;
    let mut count = 0usize;
    let mut failures = 0usize;
    for fold in folds {
        let Ok(model) = fold.model.with_params(params) else {
            failures += fold.validation.len();
            continue;
        };
        for (&i, start) in fold.validation.iter().zip(&fold.starts) {
            let x = row(data.inputs(), i);
            let target = row(data.outputs(), i);
            let scored = start
                .as_ref()
                .ok_or(Error::NonFinite("KL start"))
                .and_then(|s| predict(&model, &x, Method::SmQuadratic, Some(s), opts))
                .and_then(|p| Ok((scorer.score(&x, p.y_hat.as_slice(), Some(&target))?, p.iterations)));
            match scored {
                Ok((e, it)) => {
                    total += e;
                    iterations += it;
                    count += 1;
                }
                Err(_) => failures += 1,
            }
        }
    }
    let mean_error = if failures > 0 || count == 0 {
        f64::INFINITY
    } else {
        total / count as f64
    };
    CVCell {
        alpha: params.alpha(),
        beta: params.beta(),
        mean_error,
        mean_iterations: if count > 0 { iterations as f64 / count as f64 } else { 0.0 },
        failures,
    }
}

/// Zero-mean Gaussian process regression with the RBF kernel.
#[derive(Debug, Clone)]
pub struct Gpr {
    inputs: DMatrix<f64>,
    weights: DMatrix<f64>,
    cfg: KernelConfig,
}

impl Gpr {
    pub fn fit(train: &Dataset, cfg: KernelConfig) -> Result<Gpr> {
        let k: KernelMatrix = kernel_matrix(train.inputs(), &cfg)?;
        Ok(Gpr {
            inputs: train.inputs().clone(),
            weights: k.inverse() * train.outputs(),
            cfg,
        })
    }

    /// Posterior mean `K_X^x' K_X^-1 Y`.
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        let kvec = kernel_vector(&self.inputs, x, &self.cfg)?;
        Ok(self.weights.tr_mul(&kvec))
    }
}

pub fn gpr_predict(train: &Dataset, x: &[f64], cfg_x: KernelConfig) -> Result<DVector<f64>> {
    Gpr::fit(train, cfg_x)?.predict(x)
}

/// Mean of the `k` nearest outputs weighted by `exp(-|x - x_i|^2 / bandwidth2)`.
pub fn wknn_predict(train: &Dataset, x: &[f64], k: usize, cfg_x: KernelConfig) -> Result<DVector<f64>> {
    let idx = knn_indices(train.inputs(), x, k)?;
    let mut acc = DVector::zeros(train.output_dim());
    let mut total = 0.0;
    for &i in &idx {
        let d2 = crate::kernels::sq_dist_to(train.inputs(), i, x);
        let w = (-d2 / cfg_x.bandwidth2()).exp();
        acc += train.outputs().row(i).transpose() * w;
        total += w;
    }
    if total > 0.0 {
        Ok(acc / total)
    } else {
        // Every weight underflowed; fall back to the plain mean.
        let mut acc = DVector::zeros(train.output_dim());
        for &i in &idx {
            acc += train.outputs().row(i).transpose();
        }
        Ok(acc / idx.len() as f64)
    }
}

/// Default neighbour count for the weighted k-NN baseline: `round(sqrt(N))`.
pub fn default_wknn_k(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(1, n.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regressor {
    Tgp(Method),
    Gpr,
    Wknn(usize),
}

impl Regressor {
    pub fn name(&self) -> String {
        match self {
            Regressor::Tgp(m) => m.name().to_string(),
            Regressor::Gpr => "gpr".into(),
            Regressor::Wknn(k) => format!("wknn{k}"),
        }
    }
}

/// Test inputs with optional reference outputs.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub inputs: DMatrix<f64>,
    pub targets: Option<DMatrix<f64>>,
}

impl TestSet {
    pub fn scalar_inputs(xs: &[f64]) -> TestSet {
        TestSet {
            inputs: DMatrix::from_column_slice(xs.len(), 1, xs),
            targets: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub index: usize,
    pub y_hat: Option<DVector<f64>>,
    pub error: Option<f64>,
    pub phi: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub regressor: Regressor,
    pub points: Vec<PointResult>,
    pub mean_error: f64,
    /// Sample standard deviation of the per-point errors.
    pub std_error: f64,
    pub failures: usize,
    pub wall_secs: f64,
}

/// Settings shared by every test point of an experiment.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentConfig {
    pub cfg_x: KernelConfig,
    pub cfg_y: KernelConfig,
    pub params: SMParams,
    pub scorer: Scorer,
    pub k_tr: Option<usize>,
    pub opts: OptimizerOptions,
}

enum Fitted {
    Tgp(Box<TrainedModel>),
    Gpr(Gpr),
    None,
}

fn fit(train_set: &Dataset, reg: Regressor, cfg: &ExperimentConfig) -> Result<Fitted> {
    Ok(match reg {
        Regressor::Tgp(_) => {
            let (xs, ys) = train_set.clone().into_parts();
            Fitted::Tgp(Box::new(train(xs, ys, cfg.cfg_x, cfg.cfg_y, cfg.params)?))
        }
        Regressor::Gpr => Fitted::Gpr(Gpr::fit(train_set, cfg.cfg_x)?),
        Regressor::Wknn(_) => Fitted::None,
    })
}

fn predict_point(
    fitted: &Fitted,
    train_set: &Dataset,
    reg: Regressor,
    x: &[f64],
    cfg: &ExperimentConfig,
) -> Result<(DVector<f64>, Option<f64>, usize, bool)> {
    match (reg, fitted) {
        (Regressor::Tgp(method), Fitted::Tgp(model)) => {
            let p = predict(model, x, method, None, &cfg.opts)?;
            let phi = method.is_sharma_mittal().then_some(p.phi);
            Ok((p.y_hat, phi, p.iterations, p.converged))
        }
        (Regressor::Gpr, Fitted::Gpr(g)) => Ok((g.predict(x)?, None, 0, true)),
        (Regressor::Wknn(k), _) => Ok((wknn_predict(train_set, x, k, cfg.cfg_x)?, None, 0, true)),
        _ => unreachable!("fitted model matches its regressor"),
    }
}

/// `(y_hat, error, phi, iterations, converged)`
type ScoredPoint = (DVector<f64>, Option<f64>, Option<f64>, usize, bool);

fn run_point(
    shared: Option<&Fitted>,
    train_set: &Dataset,
    test: &TestSet,
    i: usize,
    reg: Regressor,
    cfg: &ExperimentConfig,
) -> Result<ScoredPoint> {
    let x = row(&test.inputs, i);
    let (y_hat, phi, iterations, converged) = match (shared, cfg.k_tr) {
        (Some(fitted), _) => predict_point(fitted, train_set, reg, &x, cfg)?,
        (None, Some(k)) => {
            let local = knn_subset(train_set, &x, k)?;
            let fitted = fit(&local, reg, cfg)?;
            predict_point(&fitted, &local, reg, &x, cfg)?
        }
        (None, None) => unreachable!("model is shared without a subset size"),
    };
    let target = test.targets.as_ref().map(|t| row(t, i));
    let error = match (cfg.scorer, &target) {
        (Scorer::Targets(_), None) => None,
        _ => Some(cfg.scorer.score(&x, y_hat.as_slice(), target.as_deref())?),
    };
    Ok((y_hat, error, phi, iterations, converged))
}

/// Predicts every test point and scores it. With `k_tr`, each point gets its
/// own model trained on its `k_tr` nearest training pairs. Failed points are
/// counted and left out of the summary statistics; points stay unscored when
/// the scorer needs targets the test set lacks.
pub fn run_experiment(
    train_set: &Dataset,
    test: &TestSet,
    reg: Regressor,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    check_dim("test input dimension", train_set.input_dim(), test.inputs.ncols())?;
    if let Some(t) = &test.targets {
        check_dim("test target rows", test.len(), t.nrows())?;
        check_dim("test target dimension", train_set.output_dim(), t.ncols())?;
    }
    let start = Instant::now();
    let shared = match cfg.k_tr {
        Some(k) if k < train_set.len() => None,
        _ => Some(fit(train_set, reg, cfg)?),
    };
    let points: Vec<PointResult> = (0..test.len())
        .into_par_iter()
        .map(|i| match run_point(shared.as_ref(), train_set, test, i, reg, cfg) {
            Ok((y_hat, error, phi, iterations, converged)) => PointResult {
                index: i,
                y_hat: Some(y_hat),
                error,
                phi,
                iterations,
                converged,
                message: None,
            },
            Err(e) => PointResult {
                index: i,
                y_hat: None,
                error: None,
                phi: None,
                iterations: 0,
                converged: false,
                message: Some(e.to_string()),
            },
        })
        .collect();
    let errors: Vec<f64> = points.iter().filter_map(|p| p.error).collect();
    let (mean_error, std_error) = mean_std(&errors);
    Ok(ExperimentReport {
        regressor: reg,
        failures: points.iter().filter(|p| p.y_hat.is_none()).count(),
        points,
        mean_error,
        std_error,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct CertaintyReport {
    /// `(ln phi, error)` per successfully predicted point.
    pub pairs: Vec<(f64, f64)>,
    pub spearman_rho: f64,
    /// Set when either variable has constant ranks and the correlation is
    /// undefined; `spearman_rho` is then 0.
    pub degenerate: bool,
}

pub fn certainty_report(report: &ExperimentReport) -> Result<CertaintyReport> {
    if !matches!(report.regressor, Regressor::Tgp(m) if m.is_sharma_mittal()) {
        return Err(Error::invalid(
            "report",
            "certainty analysis needs a Sharma-Mittal experiment",
        ));
    }
    let pairs: Vec<(f64, f64)> = report
        .points
        .iter()
        .filter_map(|p| Some((p.phi?.ln(), p.error?)))
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let (spearman_rho, degenerate) = match spearman(&a, &b) {
        Some(r) => (r, false),
        None => (0.0, true),
    };
    Ok(CertaintyReport {
        pairs,
        spearman_rho,
        degenerate,
    })
}

/// Ranks starting at 1, with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation, or `None` when it is undefined.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

/// Geometric and arithmetic blends of two uncertainty extensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSample {
    pub alpha: f64,
    /// `eta1^(1-alpha) eta2^alpha`
    pub geometric: f64,
    /// `(1-alpha) eta1 + alpha eta2`
    pub arithmetic: f64,
}

/// Samples both blends at `alpha = 0, 0.01, ..., 1`.
pub fn emit_eta_blend_curves(eta1: f64, eta2: f64) -> Result<Vec<BlendSample>> {
    if !(eta1 > 0.0 && eta2 > 0.0) {
        return Err(Error::NonPositive {
            what: "eta",
            value: eta1.min(eta2),
        });
    }
    Ok((0..=100)
        .map(|i| {
            let alpha = i as f64 / 100.0;
            BlendSample {
                alpha,
                geometric: eta1 * (eta2 / eta1).powf(alpha),
                arithmetic: (1.0 - alpha) * eta1 + alpha * eta2,
            }
        })
        .collect())
}
