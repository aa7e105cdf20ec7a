//! Regularized Gaussian-RBF kernels and the kernel-matrix algebra used by
//! the twin-process costs: cached Cholesky factors, inverses and
//! log-determinants, the rank-1 bordered inverse, and the uncertainty
//! extension `eta`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Round-off band below zero that `eta` silently clamps.
pub const ETA_ROUNDOFF: f64 = 1e-10;

/// Positive floor for Schur complements of the form `k(z,z) - v' K^-1 v`.
pub const SCHUR_FLOOR: f64 = 1e-12;

const SPD_HINT: &str = "increase the regularizer lambda";

/// RBF kernel parameters for one space.
///
/// `bandwidth2` is the full denominator `2 rho^2` of the exponent, so the
/// kernel is `exp(-|a-b|^2 / bandwidth2) + lambda * [same index]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    bandwidth2: f64,
    lambda: f64,
}

impl KernelConfig {
    pub fn new(bandwidth2: f64, lambda: f64) -> Result<Self> {
        if !(bandwidth2 > 0.0 && bandwidth2.is_finite()) {
            return Err(Error::invalid("bandwidth2", format!("must be > 0, got {bandwidth2}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be >= 0, got {lambda}")));
        }
        Ok(KernelConfig { bandwidth2, lambda })
    }

    pub fn bandwidth2(&self) -> f64 {
        self.bandwidth2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `k(z, z)` for a point paired with itself.
    pub fn self_similarity(&self) -> f64 {
        1.0 + self.lambda
    }

    #[inline]
    fn eval_sq(&self, sq_dist: f64) -> f64 {
        (-sq_dist / self.bandwidth2).exp()
    }
}

/// Evaluates the regularized RBF kernel between two points.
///
/// `same_point` marks identity of *indices* (the Kronecker delta), not
/// equality of values.
pub fn rbf_kernel(a: &[f64], b: &[f64], same_point: bool, cfg: &KernelConfig) -> Result<f64> {
    check_dim("rbf_kernel", a.len(), b.len())?;
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    let reg = if same_point { cfg.lambda } else { 0.0 };
    Ok(cfg.eval_sq(d2) + reg)
}

fn sq_dist_rows(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..points.ncols())
        .map(|c| {
            let d = points[(i, c)] - points[(j, c)];
            d * d
        })
        .sum()
}

pub(crate) fn sq_dist_to(points: &DMatrix<f64>, i: usize, z: &[f64]) -> f64 {
    z.iter()
        .enumerate()
        .map(|(c, zc)| {
            let d = points[(i, c)] - zc;
            d * d
        })
        .sum()
}

/// A symmetric positive-definite matrix together with its Cholesky factor,
/// inverse and log-determinant. Immutable once built.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    chol_factor: DMatrix<f64>,
    log_det: f64,
}

impl KernelMatrix {
    /// Factorizes an arbitrary SPD matrix. `what` names it in errors.
    pub fn from_spd(matrix: DMatrix<f64>, what: &str) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                context: "KernelMatrix::from_spd",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                what: what.to_string(),
                hint: SPD_HINT,
            })?;
        let chol_factor = chol.l();
        let log_det = 2.0 * chol_factor.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite {
                what: what.to_string(),
                hint: SPD_HINT,
            });
        }
        let mut inverse = chol.inverse();
        symmetrize(&mut inverse);
        Ok(KernelMatrix {
            matrix,
            inverse,
            chol_factor,
            log_det,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol_factor
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `L^-1 v` for the Cholesky factor `K = L L'`, O(N^2).
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = v.clone();
        self.chol_factor.solve_lower_triangular_mut(&mut w);
        w
    }

    /// `K^-1 v` by two triangular solves, O(N^2).
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = self.whiten(v);
        self.chol_factor.tr_solve_lower_triangular_mut(&mut w);
        w
    }

    /// `v' K^-1 v`, accurate even when it nearly cancels against a diagonal term.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.whiten(v).norm_squared()
    }

    /// `(K^-1 v, v' K^-1 v)` sharing one forward substitution.
    pub fn solve_with_quad(&self, v: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut w = self.whiten(v);
        let q = w.norm_squared();
        self.chol_factor.tr_solve_lower_triangular_mut(&mut w);
        (w, q)
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Dense kernel matrix over the rows of `points`, with `lambda` on the
/// diagonal.
pub fn kernel_matrix(points: &DMatrix<f64>, cfg: &KernelConfig) -> Result<KernelMatrix> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::invalid("points", "need at least one row"));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0 + cfg.lambda;
        for j in 0..i {
            let k = cfg.eval_sq(sq_dist_rows(points, i, j));
            m[(i, j)] = k;
            m[(j, i)] = k;
        }
    }
    KernelMatrix::from_spd(m, "kernel matrix")
}

/// Kernel vector between every training row and a new point `z` (a distinct
/// index, so no regularizer).
pub fn kernel_vector(points: &DMatrix<f64>, z: &[f64], cfg: &KernelConfig) -> Result<DVector<f64>> {
    check_dim("kernel_vector", points.ncols(), z.len())?;
    Ok(DVector::from_fn(points.nrows(), |i, _| {
        cfg.eval_sq(sq_dist_to(points, i, z))
    }))
}

/// Jacobian of [`kernel_vector`] with respect to `z`: column `d` holds
/// `-(2 / bandwidth2) (z_d - p_{i,d}) k_i`.
pub fn kernel_vector_jacobian(
    points: &DMatrix<f64>,
    z: &[f64],
    kvec: &DVector<f64>,
    cfg: &KernelConfig,
) -> DMatrix<f64> {
    let scale = -2.0 / cfg.bandwidth2;
    DMatrix::from_fn(points.nrows(), z.len(), |i, d| {
        scale * (z[d] - points[(i, d)]) * kvec[i]
    })
}

/// The blend `(1 - alpha) K_x + alpha K_y` of two kernel matrices over the
/// same index set; a valid kernel on the product space for `alpha` in [0, 1].
pub fn blend(kx: &KernelMatrix, ky: &KernelMatrix, alpha: f64) -> Result<KernelMatrix> {
    check_dim("blend", kx.dim(), ky.dim())?;
    let m = kx.matrix() * (1.0 - alpha) + ky.matrix() * alpha;
    KernelMatrix::from_spd(m, "mixed kernel matrix")
}

fn schur(k: &KernelMatrix, v: &DVector<f64>, kzz: f64) -> Result<(DVector<f64>, f64)> {
    check_dim("kernel extension", k.dim(), v.len())?;
    let (u, q) = k.solve_with_quad(v);
    Ok((u, kzz - q))
}

/// Inverse of the bordered matrix `[[K, v], [v', kzz]]` from the cached
/// `K^-1` in O(N^2) via the matrix inversion lemma.
pub fn extend_inverse(k: &KernelMatrix, v: &DVector<f64>, kzz: f64) -> Result<DMatrix<f64>> {
    let (u, c) = schur(k, v, kzz)?;
    if c.is_nan() || c <= 0.0 {
        return Err(Error::NonPositive {
            what: "bordered-matrix Schur complement",
            value: c,
        });
    }
    let n = k.dim();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n))
        .copy_from(&(k.inverse() + (&u * u.transpose()) / c));
    for i in 0..n {
        out[(i, n)] = -u[i] / c;
        out[(n, i)] = -u[i] / c;
    }
    out[(n, n)] = 1.0 / c;
    Ok(out)
}

/// Applies the Schur-complement guard: values below `-hard_limit` are
/// errors, everything else is floored at [`SCHUR_FLOOR`].
pub(crate) fn guard_schur(raw: f64, hard_limit: f64, what: &'static str) -> Result<f64> {
    if raw.is_nan() || raw < -hard_limit {
        Err(Error::NonPositive { what, value: raw })
    } else {
        Ok(raw.max(SCHUR_FLOOR))
    }
}

/// Uncertainty extension `eta = kzz - v' K^-1 v`, the factor by which the
/// determinant grows when `K` is bordered by a new point.
pub fn eta(k: &KernelMatrix, v: &DVector<f64>, kzz: f64) -> Result<f64> {
    let (_, raw) = schur(k, v, kzz)?;
    guard_schur(raw, ETA_ROUNDOFF, "eta")
}

/// Builds the bordered matrix `[[K, v], [v', kzz]]` densely.
pub fn bordered(k: &DMatrix<f64>, v: &DVector<f64>, kzz: f64) -> DMatrix<f64> {
    let n = k.nrows();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(k);
    for i in 0..n {
        out[(i, n)] = v[i];
        out[(n, i)] = v[i];
    }
    out[(n, n)] = kzz;
    out
}
