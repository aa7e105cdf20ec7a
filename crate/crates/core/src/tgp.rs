//! Twin Gaussian Process prediction: the KL, inverse-KL and Sharma-Mittal
//! costs over a test output `y`, their analytic gradients, and the
//! `phi` certainty measure.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::divergence::SMParams;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{
    extend_inverse, guard_schur, kernel_matrix, kernel_vector, kernel_vector_jacobian, symmetrize,
    KernelConfig, KernelMatrix,
};
use crate::optimizer::{minimize, OptimResult, OptimizerOptions, Termination};

/// Raw Schur complements below this are errors rather than round-off.
const LOG_ARG_LIMIT: f64 = 1e-8;

/// Training data with every kernel factorization a prediction needs.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
    kx: KernelMatrix,
    ky: KernelMatrix,
    mixed: KernelMatrix,
    cfg_x: KernelConfig,
    cfg_y: KernelConfig,
    params: SMParams,
}

/// Factorizes both kernel matrices and the `alpha`-blend `(1-a) K_X + a K_Y`.
pub fn train(
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
    cfg_x: KernelConfig,
    cfg_y: KernelConfig,
    params: SMParams,
) -> Result<TrainedModel> {
    check_dim("train outputs rows", inputs.nrows(), outputs.nrows())?;
    if inputs.nrows() < 2 {
        return Err(Error::invalid("train", "need at least two training pairs"));
    }
    let kx = kernel_matrix(&inputs, &cfg_x)?;
    let ky = kernel_matrix(&outputs, &cfg_y)?;
    let mixed = mixed_kernel(&kx, &ky, params.alpha())?;
    Ok(TrainedModel {
        inputs,
        outputs,
        kx,
        ky,
        mixed,
        cfg_x,
        cfg_y,
        params,
    })
}

fn mixed_kernel(kx: &KernelMatrix, ky: &KernelMatrix, alpha: f64) -> Result<KernelMatrix> {
    let mut m = kx.matrix() * (1.0 - alpha) + ky.matrix() * alpha;
    symmetrize(&mut m);
    KernelMatrix::from_spd(m, "mixed kernel matrix")
}

impl TrainedModel {
    /// Returns a model for other divergence parameters. A new `alpha`
    /// refactorizes the mixed kernel, which costs O(N^3).
    pub fn with_params(&self, params: SMParams) -> Result<TrainedModel> {
        let mixed = if params.alpha() == self.params.alpha() {
            self.mixed.clone()
        } else {
            mixed_kernel(&self.kx, &self.ky, params.alpha())?
        };
        Ok(TrainedModel {
            mixed,
            params,
            ..self.clone()
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn kx(&self) -> &KernelMatrix {
        &self.kx
    }

    pub fn ky(&self) -> &KernelMatrix {
        &self.ky
    }

    pub fn mixed_inverse(&self) -> &DMatrix<f64> {
        self.mixed.inverse()
    }

    pub fn mixed_log_det(&self) -> f64 {
        self.mixed.log_det()
    }

    pub fn cfg_x(&self) -> &KernelConfig {
        &self.cfg_x
    }

    pub fn cfg_y(&self) -> &KernelConfig {
        &self.cfg_y
    }

    pub fn params(&self) -> SMParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.ncols()
    }

    /// Quantities that depend on the test input only.
    pub fn input_context(&self, x: &[f64]) -> Result<InputContext> {
        let kvec = kernel_vector(&self.inputs, x, &self.cfg_x)?;
        let (u, q) = self.kx.solve_with_quad(&kvec);
        let kxx = self.cfg_x.self_similarity();
        let eta = guard_schur(kxx - q, LOG_ARG_LIMIT, "eta_x")?;
        Ok(InputContext { kvec, u, kxx, eta })
    }

    /// Training output whose input is nearest to `x` (lowest index on ties).
    pub fn nearest_output(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim("test input", self.input_dim(), x.len())?;
        let best = (0..self.len())
            .map(|i| (i, crate::kernels::sq_dist_to(&self.inputs, i, x)))
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
        Ok(self.outputs.row(best.0).transpose())
    }
}

/// Test-input side of a prediction: `K_X^x`, `K_X^-1 K_X^x` and `eta_x`.
#[derive(Debug, Clone)]
pub struct InputContext {
    pub kvec: DVector<f64>,
    pub u: DVector<f64>,
    pub kxx: f64,
    pub eta: f64,
}

struct OutputSide {
    kvec: DVector<f64>,
    u: DVector<f64>,
    kyy: f64,
    eta: f64,
    jac: DMatrix<f64>,
}

fn output_side(model: &TrainedModel, y: &DVector<f64>) -> Result<OutputSide> {
    check_dim("test output", model.output_dim(), y.len())?;
    let ys = y.as_slice();
    let kvec = kernel_vector(&model.outputs, ys, &model.cfg_y)?;
    let (u, q) = model.ky.solve_with_quad(&kvec);
    let kyy = model.cfg_y.self_similarity();
    let eta = guard_schur(kyy - q, LOG_ARG_LIMIT, "eta_y")?;
    let jac = kernel_vector_jacobian(&model.outputs, ys, &kvec, &model.cfg_y);
    Ok(OutputSide {
        kvec,
        u,
        kyy,
        eta,
        jac,
    })
}

fn mixed_side(model: &TrainedModel, cx: &InputContext, oy: &OutputSide) -> Result<(DVector<f64>, f64)> {
    let a = model.params.alpha();
    let v = &cx.kvec * (1.0 - a) + &oy.kvec * a;
    let (s, q) = model.mixed.solve_with_quad(&v);
    let raw = (1.0 - a) * cx.kxx + a * oy.kyy - q;
    Ok((s, guard_schur(raw, LOG_ARG_LIMIT, "eta_xy")?))
}

type CostGrad = (f64, DVector<f64>);

pub fn kltgp_cost_grad_ctx(model: &TrainedModel, cx: &InputContext, y: &DVector<f64>) -> Result<CostGrad> {
    let oy = output_side(model, y)?;
    let cost = oy.kyy - 2.0 * oy.kvec.dot(&cx.u) - cx.eta * oy.eta.ln();
    let w = &cx.u * -2.0 + &oy.u * (2.0 * cx.eta / oy.eta);
    Ok((cost, oy.jac.tr_mul(&w)))
}

pub fn ikltgp_cost_grad_ctx(model: &TrainedModel, cx: &InputContext, y: &DVector<f64>) -> Result<CostGrad> {
    let oy = output_side(model, y)?;
    let kx_u = model.kx.matrix() * &oy.u;
    let log_ratio = oy.eta.ln() - cx.eta.ln();
    let cost = -2.0 * cx.kvec.dot(&oy.u) + oy.u.dot(&kx_u) + oy.eta * log_ratio;
    let w = model.ky.solve(&((&kx_u - &cx.kvec) * 2.0)) - &oy.u * (2.0 * (log_ratio + 1.0));
    Ok((cost, oy.jac.tr_mul(&w)))
}

pub fn smtgp_quadratic_cost_grad_ctx(
    model: &TrainedModel,
    cx: &InputContext,
    y: &DVector<f64>,
) -> Result<CostGrad> {
    let (alpha, beta) = (model.params.alpha(), model.params.beta());
    let oy = output_side(model, y)?;
    let (s, eta_xy) = mixed_side(model, cx, &oy)?;
    let b = -(1.0 - beta) / (2.0 * (1.0 - alpha));
    let a = -alpha * b;
    let power = (a * oy.eta.ln() + b * eta_xy.ln()).exp();
    let cost = power / (beta - 1.0);
    let w = &oy.u * (-2.0 * a / oy.eta) + &s * (-2.0 * alpha * b / eta_xy);
    Ok((cost, oy.jac.tr_mul(&w) * cost))
}

/// Log of the cubic-form cost, with the gradient obtained through the
/// factored `(N+1)`-size precision blend.
pub fn smtgp_cubic_cost_grad_ctx(
    model: &TrainedModel,
    cx: &InputContext,
    y: &DVector<f64>,
) -> Result<CostGrad> {
    let (alpha, beta) = (model.params.alpha(), model.params.beta());
    let oy = output_side(model, y)?;
    let n = model.len();
    let kxx_inv = extend_inverse(&model.kx, &cx.kvec, cx.kxx)?;
    let kyy_inv = extend_inverse(&model.ky, &oy.kvec, oy.kyy)?;
    let mut blend = &kxx_inv * alpha + &kyy_inv * (1.0 - alpha);
    symmetrize(&mut blend);
    let chol = blend.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: "extended precision blend".into(),
        hint: "increase the regularizer lambda",
    })?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let cost = -0.5 * (1.0 - beta) * oy.eta.ln() - (1.0 - beta) / (2.0 * (1.0 - alpha)) * log_det;

    let last = kyy_inv.column(n).into_owned();
    let mu_ext = &kyy_inv * chol.solve(&last);
    let mu = mu_ext.rows(0, n);
    let w = &oy.u / oy.eta + mu;
    Ok((cost, oy.jac.tr_mul(&w) * (1.0 - beta)))
}

macro_rules! with_context {
    ($(#[$doc:meta])* $name:ident, $inner:ident) => {
        $(#[$doc])*
        pub fn $name(model: &TrainedModel, x: &[f64], y: &DVector<f64>) -> Result<CostGrad> {
            let cx = model.input_context(x)?;
            $inner(model, &cx, y)
        }
    };
}

with_context!(
    /// KL-based cost `k(y,y) - 2 K_Y^y' u_x - eta_x ln eta_y` and its gradient.
    kltgp_cost_grad,
    kltgp_cost_grad_ctx
);
with_context!(
    /// Inverse-KL cost and its gradient.
    ikltgp_cost_grad,
    ikltgp_cost_grad_ctx
);
with_context!(
    /// Sharma-Mittal cost in the O(N^2) form built on the mixed kernel.
    smtgp_quadratic_cost_grad,
    smtgp_quadratic_cost_grad_ctx
);
with_context!(
    /// Sharma-Mittal log-cost in the O(N^3) form built on extended inverses.
    smtgp_cubic_cost_grad,
    smtgp_cubic_cost_grad_ctx
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Kl,
    Ikl,
    SmQuadratic,
    SmCubic,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kl, Method::Ikl, Method::SmQuadratic, Method::SmCubic];

    pub fn is_sharma_mittal(self) -> bool {
        matches!(self, Method::SmQuadratic | Method::SmCubic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Kl => "kl",
            Method::Ikl => "ikl",
            Method::SmQuadratic => "sm_quadratic",
            Method::SmCubic => "sm_cubic",
        }
    }

    fn cost_grad(self, model: &TrainedModel, cx: &InputContext, y: &DVector<f64>) -> Result<CostGrad> {
        match self {
            Method::Kl => kltgp_cost_grad_ctx(model, cx, y),
            Method::Ikl => ikltgp_cost_grad_ctx(model, cx, y),
            Method::SmQuadratic => smtgp_quadratic_cost_grad_ctx(model, cx, y),
            Method::SmCubic => smtgp_cubic_cost_grad_ctx(model, cx, y),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "kl" => Ok(Method::Kl),
            "ikl" => Ok(Method::Ikl),
            "sm" | "sm_quadratic" => Ok(Method::SmQuadratic),
            "sm_cubic" => Ok(Method::SmCubic),
            _ => Err(Error::invalid(
                "method",
                format!("unknown method {s:?} (expected kl, ikl, sm_quadratic or sm_cubic)"),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub y_hat: DVector<f64>,
    pub final_cost: f64,
    pub phi: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    pub eta_xy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Certainty `phi = eta_x^(1-a) eta_y^a / eta_xy` of a pair, returned
/// together with its three uncertainty extensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certainty {
    pub phi: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    pub eta_xy: f64,
}

pub fn certainty_phi(model: &TrainedModel, x: &[f64], y: &DVector<f64>) -> Result<Certainty> {
    let cx = model.input_context(x)?;
    certainty_with(model, &cx, y)
}

fn certainty_with(model: &TrainedModel, cx: &InputContext, y: &DVector<f64>) -> Result<Certainty> {
    let a = model.params.alpha();
    let oy = output_side(model, y)?;
    let (_, eta_xy) = mixed_side(model, cx, &oy)?;
    let phi = ((1.0 - a) * cx.eta.ln() + a * oy.eta.ln() - eta_xy.ln()).exp();
    Ok(Certainty {
        phi,
        eta_x: cx.eta,
        eta_y: oy.eta,
        eta_xy,
    })
}

/// Log of the upper bound `|(1-a) K_X + a K_Y| / (|K_X|^(1-a) |K_Y|^a)` on `phi`.
pub fn log_phi_bound(model: &TrainedModel) -> f64 {
    let a = model.params.alpha();
    model.mixed.log_det() - (1.0 - a) * model.kx.log_det() - a * model.ky.log_det()
}

/// Predicts the output for `x` by minimizing the chosen cost.
///
/// Without `init`, KL and inverse-KL start from the output of the nearest
/// training input, and the Sharma-Mittal methods start from the KL
/// prediction.
pub fn predict(
    model: &TrainedModel,
    x: &[f64],
    method: Method,
    init: Option<&DVector<f64>>,
    opts: &OptimizerOptions,
) -> Result<Prediction> {
    let cx = model.input_context(x)?;
    let y0 = match init {
        Some(y) => {
            check_dim("initial output", model.output_dim(), y.len())?;
            y.clone()
        }
        None if method.is_sharma_mittal() => {
            let start = model.nearest_output(x)?;
            optimize(model, &cx, Method::Kl, start, opts)?.x
        }
        None => model.nearest_output(x)?,
    };
    let r = optimize(model, &cx, method, y0, opts)?;
    let (final_cost, _) = method.cost_grad(model, &cx, &r.x)?;
    let c = certainty_with(model, &cx, &r.x)?;
    Ok(Prediction {
        y_hat: r.x,
        final_cost,
        phi: c.phi,
        eta_x: c.eta_x,
        eta_y: c.eta_y,
        eta_xy: c.eta_xy,
        iterations: r.iterations,
        converged: r.converged,
        termination: r.termination,
    })
}

fn optimize(
    model: &TrainedModel,
    cx: &InputContext,
    method: Method,
    y0: DVector<f64>,
    opts: &OptimizerOptions,
) -> Result<OptimResult> {
    // The cubic log-cost decreases toward better fits only for beta > 1;
    // dividing by (beta - 1) orients it for every beta.
    let scale = match method {
        Method::SmCubic => 1.0 / (model.params.beta() - 1.0),
        _ => 1.0,
    };
    let objective = |y: &DVector<f64>| {
        let (c, g) = method.cost_grad(model, cx, y)?;
        Ok((c * scale, g * scale))
    };
    minimize(objective, y0, opts)
}
