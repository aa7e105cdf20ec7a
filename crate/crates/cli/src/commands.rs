use std::path::Path;

use nalgebra::{DMatrix, DVector};
use smtgp::datasets::{
    generate_toy1, generate_toy2, load_csv, load_matrix_csv, load_test_csv, write_csv, MetricKind, ToyShape,
};
use smtgp::divergence::{
    benchmark_forms, bhattacharyya_divergence, flop_model, kl_divergence, renyi_divergence, sm_divergence_original,
    sm_divergence_simplified, tsallis_divergence, GaussianSpec, SMParams,
};
use smtgp::evaluation::{
    certainty_report, cross_validate, default_wknn_k, emit_eta_blend_curves, run_experiment, ExperimentConfig,
    ExperimentReport, Regressor, Scorer, TestSet,
};
use smtgp::tgp::Method;

use crate::config::{Preset, RunConfig};
use crate::output::{fraction, full, sig, write_atomic, write_table};
use crate::{ConfigArgs, CrossvalArgs, DivergenceArgs, Failure, Form, MethodArg, MetricArg, PredictArgs};

pub fn gen_toy(which: u8, seed: u64, train_out: &Path, test_out: &Path) -> Result<(), Failure> {
    let (train, test) = match which {
        1 => generate_toy1(seed),
        2 => generate_toy2(seed),
        _ => return Err(Failure::Usage(format!("--which must be 1 or 2, got {which}"))),
    };
    write_atomic(train_out, |w| write_csv(&train, w))?;
    let rows: Vec<Vec<String>> = test.iter().map(|&x| vec![full(x)]).collect();
    write_table(test_out, &["x1".to_string()], &rows)?;
    println!("wrote {} training rows and {} test inputs", train.len(), test.len());
    Ok(())
}

fn scorer(args: &ConfigArgs) -> Scorer {
    let metric = args.metric.or(args.preset.map(|p| match p {
        Preset::Toy1 => MetricArg::Toy1,
        Preset::Toy2 => MetricArg::Toy2,
        Preset::Usps => MetricArg::Usps,
        Preset::Poser => MetricArg::Poser,
        Preset::Heva => MetricArg::Heva,
    }));
    match metric.unwrap_or(MetricArg::MeanAbs1d) {
        MetricArg::Toy1 => Scorer::Toy(ToyShape::Toy1),
        MetricArg::Toy2 => Scorer::Toy(ToyShape::Toy2),
        MetricArg::MeanAbs1d => Scorer::Targets(MetricKind::MeanAbs1d),
        MetricArg::Usps => Scorer::Targets(MetricKind::UspsCenterNorm),
        MetricArg::Poser => Scorer::Targets(MetricKind::PoserDegMod360),
        MetricArg::Heva => Scorer::Targets(MetricKind::HevaMarkerMm),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        RunConfig::resolve(self.preset, self.config.as_deref())
    }
}

fn check_scorer(scorer: Scorer, d_x: usize, d_y: usize, has_targets: bool) -> Result<(), Failure> {
    match scorer {
        Scorer::Toy(_) if d_x != 1 || d_y != 1 => Err(Failure::Runtime(format!(
            "toy metric needs one input and one output column, data has {d_x} and {d_y}"
        ))),
        Scorer::Targets(kind) if has_targets && kind.dim() != d_y => Err(Failure::Runtime(format!(
            "metric {kind} expects {} output columns, data has {d_y}",
            kind.dim()
        ))),
        _ => Ok(()),
    }
}

struct Run {
    report: ExperimentReport,
    scored: bool,
    output_dim: usize,
}

fn run_predict(args: &PredictArgs) -> Result<Run, Failure> {
    let cfg = args.config.resolve()?;
    let train = load_csv(&args.train, args.dx)?;
    let (inputs, targets) = load_test_csv(&args.test, args.dx)?;
    if let Some(t) = &targets {
        if t.ncols() != train.output_dim() {
            return Err(Failure::Runtime(format!(
                "test file has {} output columns, training file has {}",
                t.ncols(),
                train.output_dim()
            )));
        }
    }
    let scorer = scorer(&args.config);
    check_scorer(scorer, train.input_dim(), train.output_dim(), targets.is_some())?;
    let k_tr = args.ktr.or(cfg.k_tr);
    if k_tr == Some(0) {
        return Err(Failure::Usage("--ktr must be at least 1".into()));
    }
    let regressor = match args.method {
        MethodArg::Kl => Regressor::Tgp(Method::Kl),
        MethodArg::Ikl => Regressor::Tgp(Method::Ikl),
        MethodArg::Sm => Regressor::Tgp(Method::SmQuadratic),
        MethodArg::SmCubic => Regressor::Tgp(Method::SmCubic),
        MethodArg::Gpr => Regressor::Gpr,
        MethodArg::Wknn => {
            let n = k_tr.map_or(train.len(), |k| k.min(train.len()));
            let k = args.k.unwrap_or_else(|| default_wknn_k(n));
            if k == 0 {
                return Err(Failure::Usage("--k must be at least 1".into()));
            }
            Regressor::Wknn(k)
        }
    };
    let (cfg_x, cfg_y) = cfg.kernels()?;
    let exp = ExperimentConfig {
        cfg_x,
        cfg_y,
        params: cfg.params()?,
        scorer,
        k_tr,
        opts: cfg.optimizer()?,
    };
    let scored = targets.is_some() || matches!(scorer, Scorer::Toy(_));
    let report = run_experiment(&train, &TestSet { inputs, targets }, regressor, &exp)?;
    if !report.points.is_empty() && report.failures == report.points.len() {
        let msg = report.points[0].message.clone().unwrap_or_default();
        return Err(Failure::Runtime(format!("every test point failed; first: {msg}")));
    }
    Ok(Run {
        report,
        scored,
        output_dim: train.output_dim(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

fn print_summary(run: &Run) {
    let r = &run.report;
    println!("method: {}", r.regressor.name());
    println!("points: {} (failures {})", r.points.len(), r.failures);
    if run.scored {
        println!("mean error: {}", sig(r.mean_error, 6));
        println!("std error: {}", sig(r.std_error, 6));
    }
    println!("wall time: {} s", sig(r.wall_secs, 6));
    for p in r.points.iter().filter(|p| p.message.is_some()).take(5) {
        eprintln!("point {}: {}", p.index, p.message.as_deref().unwrap_or_default());
    }
}

pub fn predict(args: &PredictArgs) -> Result<(), Failure> {
    let run = run_predict(args)?;
    let with_phi = matches!(run.report.regressor, Regressor::Tgp(m) if m.is_sharma_mittal());
    let mut header = vec!["index".to_string()];
    header.extend((1..=run.output_dim).map(|i| format!("y{i}")));
    if run.scored {
        header.push("error".into());
    }
    if with_phi {
        header.push("phi".into());
    }
    header.push("iterations".into());
    let rows: Vec<Vec<String>> = run
        .report
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.index.to_string()];
            match &p.y_hat {
                Some(y) => row.extend(y.iter().map(|&v| full(v))),
                None => row.extend(std::iter::repeat_n(String::new(), run.output_dim)),
            }
            if run.scored {
                row.push(opt(p.error));
            }
            if with_phi {
                row.push(opt(p.phi));
            }
            row.push(p.iterations.to_string());
            row
        })
        .collect();
    write_table(&args.out, &header, &rows)?;
    print_summary(&run);
    Ok(())
}

pub fn certainty(args: &PredictArgs) -> Result<(), Failure> {
    if !matches!(args.method, MethodArg::Sm | MethodArg::SmCubic) {
        return Err(Failure::Usage("certainty needs --method sm or sm-cubic".into()));
    }
    let run = run_predict(args)?;
    if !run.scored {
        return Err(Failure::Runtime("certainty needs test targets or a toy metric".into()));
    }
    let c = certainty_report(&run.report)?;
    let rows: Vec<Vec<String>> = c.pairs.iter().map(|&(l, e)| vec![full(l), full(e)]).collect();
    write_table(&args.out, &["ln_phi".to_string(), "error".to_string()], &rows)?;
    print_summary(&run);
    if c.degenerate {
        println!("spearman rho: undefined (constant ranks)");
    } else {
        println!("spearman rho: {}", sig(c.spearman_rho, 6));
    }
    Ok(())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("cannot parse {what} {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop): (f64, f64, f64) = (
                start.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
                stop.trim().parse().map_err(|_| bad())?,
            );
            if ![start, step, stop].iter().all(|v| v.is_finite()) || step <= 0.0 || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| start + i as f64 * step).collect()
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

pub fn crossval(args: &CrossvalArgs) -> Result<(), Failure> {
    if args.folds < 2 {
        return Err(Failure::Usage(format!("--folds must be at least 2, got {}", args.folds)));
    }
    let alphas = parse_list(&args.alpha_grid, "alpha grid")?;
    let betas = parse_list(&args.betas, "beta list")?;
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Failure::Usage("alpha grid values must lie in [0, 1]".into()));
    }
    let cfg = args.config.resolve()?;
    let train = load_csv(&args.train, args.dx)?;
    let scorer = scorer(&args.config);
    check_scorer(scorer, train.input_dim(), train.output_dim(), true)?;
    if args.folds > train.len() {
        return Err(Failure::Usage(format!(
            "--folds {} exceeds the {} training rows",
            args.folds,
            train.len()
        )));
    }
    let (cfg_x, cfg_y) = cfg.kernels()?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let cv = cross_validate(&train, cfg_x, cfg_y, &alphas, &betas, args.folds, seed, scorer, &cfg.optimizer()?)?;
    let header: Vec<String> = ["alpha", "beta", "mean_error", "mean_iterations", "failures"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = cv
        .grid
        .iter()
        .map(|c| {
            vec![
                full(c.alpha),
                full(c.beta),
                full(c.mean_error),
                full(c.mean_iterations),
                c.failures.to_string(),
            ]
        })
        .collect();
    write_table(&args.out, &header, &rows)?;
    let best = cv
        .grid
        .iter()
        .find(|c| c.alpha == cv.best_alpha && c.beta == cv.best_beta)
        .expect("best cell is in the grid");
    println!("cells: {} over {} folds", cv.grid.len(), cv.folds);
    println!("best alpha: {}", sig(best.alpha, 6));
    println!("best beta: {}", sig(best.beta, 6));
    println!("best mean error: {}", sig(best.mean_error, 6));
    Ok(())
}

fn load_cov(path: &Path, dim: usize) -> Result<DMatrix<f64>, Failure> {
    let m = load_matrix_csv(path)?;
    if m.shape() != (dim, dim) {
        return Err(Failure::Runtime(format!(
            "{}: expected a {dim}x{dim} matrix, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

fn load_mean(path: Option<&Path>, dim: usize) -> Result<DVector<f64>, Failure> {
    let Some(path) = path else {
        return Ok(DVector::zeros(dim));
    };
    let m = load_matrix_csv(path)?;
    if m.len() != dim || (m.nrows() != 1 && m.ncols() != 1) {
        return Err(Failure::Runtime(format!(
            "{}: expected a vector of length {dim}, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(DVector::from_iterator(dim, m.iter().copied()))
}

pub fn divergence(args: &DivergenceArgs) -> Result<(), Failure> {
    if args.dim == 0 {
        return Err(Failure::Usage("--dim must be at least 1".into()));
    }
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| Failure::Usage(format!("this form needs --{flag}")));
    let spec = |cov: &Path, mean: Option<&Path>| -> Result<GaussianSpec, Failure> {
        Ok(GaussianSpec::new(load_mean(mean, args.dim)?, load_cov(cov, args.dim)?)?)
    };
    let p = spec(&args.p_cov, args.p_mean.as_deref())?;
    let q = spec(&args.q_cov, args.q_mean.as_deref())?;
    let value = match args.form {
        Form::Original | Form::Simplified => {
            let params = SMParams::new(need(args.alpha, "alpha")?, need(args.beta, "beta")?)?;
            if args.form == Form::Original {
                sm_divergence_original(&p, &q, params)?
            } else {
                sm_divergence_simplified(&p, &q, params)?
            }
        }
        Form::Renyi => renyi_divergence(&p, &q, need(args.alpha, "alpha")?)?,
        Form::Tsallis => tsallis_divergence(&p, &q, need(args.alpha, "alpha")?)?,
        Form::Kl => kl_divergence(&p, &q)?,
        Form::Bhatt => bhattacharyya_divergence(&p, &q)?,
    };
    println!("{}", sig(value, 12));
    Ok(())
}

pub fn bench(dim: usize, reps: usize, nonzero_mean: bool) -> Result<(), Failure> {
    if dim < 16 || reps < 3 {
        return Err(Failure::Usage("bench-divergence needs --dim >= 16 and --reps >= 3".into()));
    }
    let (orig, simp) = flop_model(!nonzero_mean);
    let r = benchmark_forms(dim, reps, !nonzero_mean)?;
    println!("dim: {dim}, reps: {reps}, mean difference: {}", if nonzero_mean { "nonzero" } else { "zero" });
    println!("flop model: original {} N^3, simplified {} N^3", fraction(orig), fraction(simp));
    println!("flop model ratio: {} ({})", fraction(r.model_ratio), sig(r.model_ratio, 6));
    println!(
        "median time: original {} s, simplified {} s",
        sig(r.original_median_secs, 6),
        sig(r.simplified_median_secs, 6)
    );
    println!("measured ratio: {}", sig(r.measured_ratio, 6));
    Ok(())
}

pub fn eta_curves(eta1: f64, eta2: f64, out: &Path) -> Result<(), Failure> {
    let samples = emit_eta_blend_curves(eta1, eta2)?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| vec![full(s.alpha), full(s.geometric), full(s.arithmetic)])
        .collect();
    write_table(out, &["alpha", "geometric", "arithmetic"].map(String::from), &rows)?;
    println!("wrote {} samples", samples.len());
    Ok(())
}
