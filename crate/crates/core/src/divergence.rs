//! Sharma-Mittal divergence between multivariate Gaussians.
//!
//! Two closed forms are provided. The *original* form works with the
//! precision blend `alpha Sp^-1 + (1 - alpha) Sq^-1` and needs both
//! covariance inverses. The *simplified* form rewrites the determinant
//! ratio as `|Sp|^(1-alpha) |Sq|^alpha / |alpha Sq + (1 - alpha) Sp|`, which
//! needs three Cholesky factorizations and no inversion when the means agree.
//!
//! All determinant arithmetic stays in log space; the final power is taken
//! as `expm1` of a scaled log so that large dimensions cannot overflow.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

const BETA_GUARD: f64 = 1e-12;

/// A multivariate Gaussian `N(mean, cov)` with a validated SPD covariance.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("GaussianSpec covariance rows", mean.len(), cov.nrows())?;
        check_dim("GaussianSpec covariance cols", mean.len(), cov.ncols())?;
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..cov.nrows() {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::invalid("cov", "covariance is not symmetric"));
                }
            }
        }
        if cov.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                what: "covariance".into(),
                hint: "supply a symmetric positive-definite matrix",
            });
        }
        Ok(GaussianSpec { mean, cov })
    }

    /// Zero-mean Gaussian.
    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        Self::new(DVector::zeros(d), cov)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Divergence order parameters, `alpha` in (0, 1) and `beta != 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SMParams {
    alpha: f64,
    beta: f64,
}

impl SMParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !beta.is_finite() || (beta - 1.0).abs() <= BETA_GUARD {
            return Err(Error::invalid(
                "beta",
                format!("must differ from 1 (use the Renyi/KL limits instead), got {beta}"),
            ));
        }
        Ok(SMParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `(1 - beta) / (1 - alpha)`, the power applied to the alpha-integral.
    pub fn order_ratio(&self) -> f64 {
        (1.0 - self.beta) / (1.0 - self.alpha)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "alpha",
            format!("must lie strictly inside (0, 1), got {alpha}"),
        ))
    }
}

struct Factor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

fn factor(m: DMatrix<f64>, what: &str) -> Result<Factor> {
    let chol = m.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: what.to_string(),
        hint: "check that both covariances are SPD",
    })?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Factor { chol, log_det })
}

fn same_dims(p: &GaussianSpec, q: &GaussianSpec) -> Result<()> {
    check_dim("divergence", p.dim(), q.dim())
}

fn delta_mu(p: &GaussianSpec, q: &GaussianSpec) -> Option<DVector<f64>> {
    let d = p.mean() - q.mean();
    if d.iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(d)
    }
}

fn from_exponent(t: f64, beta: f64) -> f64 {
    t.exp_m1() / (beta - 1.0)
}

/// Evaluates the original closed form: two explicit covariance inversions,
/// the precision blend and its log-determinant, plus (for distinct means)
/// the inverse of the precision blend for the Mahalanobis term.
pub fn sm_divergence_original(p: &GaussianSpec, q: &GaussianSpec, params: SMParams) -> Result<f64> {
    same_dims(p, q)?;
    let (a, b) = (params.alpha, params.beta);
    let fp = factor(p.cov.clone(), "Sigma_p")?;
    let fq = factor(q.cov.clone(), "Sigma_q")?;
    let p_inv = fp.chol.inverse();
    let q_inv = fq.chol.inverse();
    let precision = &p_inv * a + &q_inv * (1.0 - a);
    let fl = factor(precision, "precision blend")?;

    // log of |Sp|^a |Sq|^(1-a) / |(a Sp^-1 + (1-a) Sq^-1)^-1|
    let log_base = a * fp.log_det + (1.0 - a) * fq.log_det + fl.log_det;
    let mut t = -0.5 * params.order_ratio() * log_base;
    if let Some(dmu) = delta_mu(p, q) {
        // (a Sq + (1-a) Sp)^-1 = Sq^-1 (a Sp^-1 + (1-a) Sq^-1)^-1 Sp^-1
        let l_inv = fl.chol.inverse();
        let left = &q_inv * &dmu;
        let right = &p_inv * &dmu;
        let quad = left.dot(&(&l_inv * right));
        t -= 0.5 * a * (1.0 - b) * quad;
    }
    Ok(from_exponent(t, b))
}

/// Log of the squared alpha-coefficient term `|Sp|^(1-a)|Sq|^a / |a Sq + (1-a) Sp|`
/// and, for distinct means, the Mahalanobis form under `a Sq + (1-a) Sp`.
struct SimplifiedTerms {
    log_ratio: f64,
    mahalanobis: f64,
}

fn simplified_terms(p: &GaussianSpec, q: &GaussianSpec, alpha: f64) -> Result<SimplifiedTerms> {
    same_dims(p, q)?;
    let fp = factor(p.cov.clone(), "Sigma_p")?;
    let fq = factor(q.cov.clone(), "Sigma_q")?;
    let mixed = &q.cov * alpha + &p.cov * (1.0 - alpha);
    let fm = factor(mixed, "covariance blend")?;
    let log_ratio = (1.0 - alpha) * fp.log_det + alpha * fq.log_det - fm.log_det;
    let mahalanobis = match delta_mu(p, q) {
        Some(dmu) => dmu.dot(&fm.chol.solve(&dmu)),
        None => 0.0,
    };
    Ok(SimplifiedTerms {
        log_ratio,
        mahalanobis,
    })
}

/// Evaluates the simplified closed form: three log-determinants, and one
/// extra solve when the means differ.
pub fn sm_divergence_simplified(
    p: &GaussianSpec,
    q: &GaussianSpec,
    params: SMParams,
) -> Result<f64> {
    let (a, b) = (params.alpha, params.beta);
    let terms = simplified_terms(p, q, a)?;
    let t = 0.5 * params.order_ratio() * terms.log_ratio - 0.5 * a * (1.0 - b) * terms.mahalanobis;
    Ok(from_exponent(t, b))
}

/// `ln \int p^alpha q^(1-alpha)` in closed form.
pub fn log_alpha_integral(p: &GaussianSpec, q: &GaussianSpec, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let terms = simplified_terms(p, q, alpha)?;
    Ok(0.5 * terms.log_ratio - 0.5 * alpha * (1.0 - alpha) * terms.mahalanobis)
}

/// Renyi divergence of order `alpha`, the `beta -> 1` limit.
pub fn renyi_divergence(p: &GaussianSpec, q: &GaussianSpec, alpha: f64) -> Result<f64> {
    Ok(log_alpha_integral(p, q, alpha)? / (alpha - 1.0))
}

/// Tsallis divergence, the `beta = alpha` member of the family.
pub fn tsallis_divergence(p: &GaussianSpec, q: &GaussianSpec, alpha: f64) -> Result<f64> {
    sm_divergence_simplified(p, q, SMParams::new(alpha, alpha)?)
}

/// Kullback-Leibler divergence `KL(p || q)` via the classical Gaussian formula.
pub fn kl_divergence(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    same_dims(p, q)?;
    let fp = factor(p.cov.clone(), "Sigma_p")?;
    let fq = factor(q.cov.clone(), "Sigma_q")?;
    let trace = fq.chol.solve(&p.cov).trace();
    let dmu = p.mean() - q.mean();
    let maha = dmu.dot(&fq.chol.solve(&dmu));
    Ok(0.5 * (trace + maha - p.dim() as f64 + fq.log_det - fp.log_det))
}

/// Classical Bhattacharyya distance `-ln \int sqrt(p q)`, computed through
/// the averaged covariance `(Sp + Sq) / 2`.
pub fn bhattacharyya_distance(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    same_dims(p, q)?;
    let fp = factor(p.cov.clone(), "Sigma_p")?;
    let fq = factor(q.cov.clone(), "Sigma_q")?;
    let avg = (&p.cov + &q.cov) * 0.5;
    let fa = factor(avg, "averaged covariance")?;
    let dmu = p.mean() - q.mean();
    let maha = dmu.dot(&fa.chol.solve(&dmu));
    Ok(0.125 * maha + 0.5 * (fa.log_det - 0.5 * (fp.log_det + fq.log_det)))
}

/// Bhattacharyya member of the family, normalized as twice the order-1/2
/// Renyi divergence. This is `4 *` [`bhattacharyya_distance`].
pub fn bhattacharyya_divergence(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    Ok(4.0 * bhattacharyya_distance(p, q)?)
}

/// Wall-clock comparison of the two closed forms, with the cubic-term
/// operation-count model alongside.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub dim: usize,
    pub reps: usize,
    pub delta_mu_zero: bool,
    pub original_median_secs: f64,
    pub simplified_median_secs: f64,
    pub measured_ratio: f64,
    /// Cubic-term coefficients `c` in `c * N^3` for each form.
    pub flops_original: f64,
    pub flops_simplified: f64,
    pub model_ratio: f64,
}

/// Cubic-term operation counts `(original, simplified)` as multiples of N^3.
pub fn flop_model(delta_mu_zero: bool) -> (f64, f64) {
    if delta_mu_zero {
        (5.0 / 3.0, 1.0)
    } else {
        (2.0, 4.0 / 3.0)
    }
}

fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let mut m = &g * g.transpose() / dim as f64;
    for i in 0..dim {
        m[(i, i)] += 0.5;
    }
    crate::kernels::symmetrize(&mut m);
    m
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times both forms on a seeded random SPD pair and reports medians.
pub fn benchmark_forms(dim: usize, reps: usize, delta_mu_zero: bool) -> Result<BenchReport> {
    if dim < 16 {
        return Err(Error::invalid("dim", "benchmark needs dim >= 16"));
    }
    if reps < 3 {
        return Err(Error::invalid("reps", "benchmark needs reps >= 3"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ dim as u64);
    let mean_q = if delta_mu_zero {
        DVector::zeros(dim)
    } else {
        DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5))
    };
    let p = GaussianSpec::centered(random_spd(dim, &mut rng))?;
    let q = GaussianSpec::new(mean_q, random_spd(dim, &mut rng))?;
    let params = SMParams::new(0.5, 0.5)?;

    let mut t_orig = Vec::with_capacity(reps);
    let mut t_simp = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let a = sm_divergence_original(&p, &q, params)?;
        t_orig.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        let b = sm_divergence_simplified(&p, &q, params)?;
        t_simp.push(start.elapsed().as_secs_f64());
        std::hint::black_box((a, b));
    }
    let original_median_secs = median(t_orig);
    let simplified_median_secs = median(t_simp);
    let (fo, fs) = flop_model(delta_mu_zero);
    Ok(BenchReport {
        dim,
        reps,
        delta_mu_zero,
        original_median_secs,
        simplified_median_secs,
        measured_ratio: original_median_secs / simplified_median_secs,
        flops_original: fo,
        flops_simplified: fs,
        model_ratio: fo / fs,
    })
}
