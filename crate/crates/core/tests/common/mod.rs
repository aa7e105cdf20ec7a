//! Independent numerical oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on `[a, b]`.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 40)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Tensor-product Gauss-Legendre rule over a rectangle.
pub fn integrate_2d(
    f: impl Fn(f64, f64) -> f64,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    n: usize,
) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let (cx, hx) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
    let (cy, hy) = (0.5 * (y0 + y1), 0.5 * (y1 - y0));
    let mut total = 0.0;
    for (i, xi) in nodes.iter().enumerate() {
        let x = cx + hx * xi;
        let mut row = 0.0;
        for (j, yj) in nodes.iter().enumerate() {
            row += weights[j] * f(x, cy + hy * yj);
        }
        total += weights[i] * row;
    }
    total * hx * hy
}

/// Log-density of `N(mean, cov)` at `t`.
pub fn log_gauss(t: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = t.len() as f64;
    let chol = cov.clone().cholesky().unwrap();
    let diff = t - mean;
    let maha = diff.dot(&chol.solve(&diff));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (maha + log_det + d * (2.0 * std::f64::consts::PI).ln())
}

/// `\int p^alpha q^(1-alpha)` by quadrature, for one- or two-dimensional
/// Gaussians.
pub fn alpha_integral(
    mp: &DVector<f64>,
    sp: &DMatrix<f64>,
    mq: &DVector<f64>,
    sq: &DMatrix<f64>,
    alpha: f64,
) -> f64 {
    let integrand = |t: &DVector<f64>| {
        (alpha * log_gauss(t, mp, sp) + (1.0 - alpha) * log_gauss(t, mq, sq)).exp()
    };
    match mp.len() {
        1 => {
            let sigma = sp[(0, 0)].max(sq[(0, 0)]).sqrt();
            let lo = mp[0].min(mq[0]) - 40.0 * sigma;
            let hi = mp[0].max(mq[0]) + 40.0 * sigma;
            integrate_1d(|x| integrand(&DVector::from_element(1, x)), lo, hi, 1e-13)
        }
        2 => {
            let range = |k: usize| {
                let sigma = sp[(k, k)].max(sq[(k, k)]).sqrt();
                (
                    mp[k].min(mq[k]) - 12.0 * sigma,
                    mp[k].max(mq[k]) + 12.0 * sigma,
                )
            };
            integrate_2d(
                |x, y| integrand(&DVector::from_vec(vec![x, y])),
                range(0),
                range(1),
                400,
            )
        }
        d => panic!("quadrature oracle supports d <= 2, got {d}"),
    }
}

/// The divergence defined directly from the alpha-integral.
pub fn sm_from_integral(integral: f64, alpha: f64, beta: f64) -> f64 {
    (integral.powf((1.0 - beta) / (1.0 - alpha)) - 1.0) / (beta - 1.0)
}

/// Random SPD matrix with eigenvalues drawn from `[lo, hi]`.
pub fn random_spd(d: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let eig = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Central finite-difference gradient.
pub fn central_diff(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}
