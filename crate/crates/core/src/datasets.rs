//! Toy data generators, CSV input/output, nearest-neighbour subsets and
//! error metrics.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};

/// Paired training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: DMatrix<f64>, outputs: DMatrix<f64>) -> Result<Self> {
        check_dim("dataset output rows", inputs.nrows(), outputs.nrows())?;
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset entry"));
        }
        Ok(Dataset {
            name: name.into(),
            inputs,
            outputs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.ncols()
    }

    /// The rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            inputs: self.inputs.select_rows(idx),
            outputs: self.outputs.select_rows(idx),
        }
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.inputs, self.outputs)
    }
}

const TOY_NOISE_STD: f64 = 0.005;

/// The S-shaped forward relation `x = y + 0.3 sin(2 pi y)`.
pub fn toy_forward(y: f64) -> f64 {
    y + 0.3 * (2.0 * PI * y).sin()
}

fn toy_pairs(rng: &mut ChaCha8Rng, n: usize, shift: f64, out: &mut Vec<(f64, f64)>) {
    let noise = Normal::new(0.0, TOY_NOISE_STD).expect("valid normal");
    for _ in 0..n {
        let y: f64 = rng.random_range(0.0..1.0);
        let x = toy_forward(y) + noise.sample(rng) + shift;
        out.push((x, y));
    }
}

fn pairs_to_dataset(name: &str, pairs: &[(f64, f64)]) -> Dataset {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Dataset {
        name: name.to_string(),
        inputs: DMatrix::from_vec(xs.len(), 1, xs),
        outputs: DMatrix::from_vec(ys.len(), 1, ys),
    }
}

fn open_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect()
}

/// 250 noisy samples of the S relation with `y ~ U(0, 1)`, plus 250 equally
/// spaced test inputs strictly inside (0, 1).
pub fn generate_toy1(seed: u64) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(250);
    toy_pairs(&mut rng, 250, 0.0, &mut pairs);
    (pairs_to_dataset("toy1", &pairs), open_grid(0.0, 1.0, 250))
}

/// Two S shapes side by side: 250 samples shifted left by one and 250
/// unshifted, down-sampled by two to 250 pairs. Test inputs are 500 equally
/// spaced points strictly inside (-1, 1).
pub fn generate_toy2(seed: u64) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(500);
    toy_pairs(&mut rng, 250, -1.0, &mut pairs);
    toy_pairs(&mut rng, 250, 0.0, &mut pairs);
    let kept: Vec<_> = pairs.into_iter().step_by(2).collect();
    (pairs_to_dataset("toy2", &kept), open_grid(-1.0, 1.0, 500))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyShape {
    Toy1,
    Toy2,
}

impl ToyShape {
    fn shifts(self) -> &'static [f64] {
        match self {
            ToyShape::Toy1 => &[0.0],
            ToyShape::Toy2 => &[-1.0, 0.0],
        }
    }
}

const ROOT_GRID: usize = 10_000;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every `y` in [0, 1] that the toy relation maps to `x`.
pub fn toy_roots(x: f64, shape: ToyShape) -> Vec<f64> {
    let mut roots = Vec::new();
    for &shift in shape.shifts() {
        let f = |y: f64| toy_forward(y) + shift - x;
        let mut prev_y = 0.0;
        let mut prev = f(prev_y);
        if prev == 0.0 {
            roots.push(0.0);
        }
        for i in 1..=ROOT_GRID {
            let y = i as f64 / ROOT_GRID as f64;
            let cur = f(y);
            if cur == 0.0 {
                roots.push(y);
            } else if prev != 0.0 && (cur < 0.0) != (prev < 0.0) {
                roots.push(bisect(f, prev_y, y));
            }
            prev_y = y;
            prev = cur;
        }
    }
    roots
}

/// Distance from `y_hat` to the nearest exact inverse of the toy relation at `x`.
pub fn toy_ground_truth_error(x: f64, y_hat: f64, shape: ToyShape) -> Result<f64> {
    toy_roots(x, shape)
        .into_iter()
        .map(|r| (y_hat - r).abs())
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::invalid("test_x", format!("{x} is outside the toy relation's range")))
}

fn parse_cell(s: &str, path: &Path, line: u64, col: usize) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Csv {
            path: path.to_path_buf(),
            line,
            msg: format!("column {}: {s:?} is not a finite number", col + 1),
        }),
    }
}

fn read_table(path: &Path, headed: bool) -> Result<DMatrix<f64>> {
    let csv_err = |line: u64, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(headed)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => csv_err(1, format!("{other:?}")),
        })?;
    let mut width = None;
    if headed {
        let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?;
        if header.iter().all(|h| h.trim().parse::<f64>().is_ok()) {
            return Err(csv_err(1, "missing header row".into()));
        }
        width = Some(header.len());
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let width = *width.get_or_insert(record.len());
        if record.len() != width {
            return Err(csv_err(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            values.push(parse_cell(cell, path, line, col)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width.unwrap_or(0), &values))
}

fn split_columns(path: &Path, all: &DMatrix<f64>, d_x: usize, min_outputs: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let width = all.ncols();
    if d_x == 0 || d_x + min_outputs > width {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("file has {width} columns, too few for d_x = {d_x}"),
        });
    }
    Ok((
        all.columns(0, d_x).into_owned(),
        all.columns(d_x, width - d_x).into_owned(),
    ))
}

/// Reads a headed CSV whose first `d_x` columns are inputs and whose
/// remaining columns are outputs.
pub fn load_csv(path: impl AsRef<Path>, d_x: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let all = read_table(path, true)?;
    let (inputs, outputs) = split_columns(path, &all, d_x, 1)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    Dataset::new(stem, inputs, outputs).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

/// Like [`load_csv`], but the output columns may be absent.
pub fn load_test_csv(path: impl AsRef<Path>, d_x: usize) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let path = path.as_ref();
    let all = read_table(path, true)?;
    let (inputs, outputs) = split_columns(path, &all, d_x, 0)?;
    Ok((inputs, (outputs.ncols() > 0).then_some(outputs)))
}

/// Reads a headerless numeric CSV as a matrix. A single row or column
/// serves as a vector.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_table(path.as_ref(), false)
}

/// Writes `dataset` as CSV with 17 significant digits per value.
pub fn write_csv(dataset: &Dataset, out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=dataset.input_dim())
        .map(|i| format!("x{i}"))
        .chain((1..=dataset.output_dim()).map(|i| format!("y{i}")))
        .collect();
    w.write_record(&header)?;
    for r in 0..dataset.len() {
        let row = dataset
            .inputs
            .row(r)
            .iter()
            .chain(dataset.outputs.row(r).iter())
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>();
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Indices of the `k` training inputs nearest to `x`, in ascending index
/// order. Equal distances favour the lower index.
pub fn knn_indices(inputs: &DMatrix<f64>, x: &[f64], k: usize) -> Result<Vec<usize>> {
    check_dim("knn query", inputs.ncols(), x.len())?;
    let n = inputs.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid("k_tr", format!("must be in 1..={n}, got {k}")));
    }
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| (crate::kernels::sq_dist_to(inputs, i, x), i))
        .collect();
    if k < n {
        order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut idx: Vec<usize> = order[..k].iter().map(|p| p.1).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// The `k_tr` training rows nearest to `x` (see [`knn_indices`]).
pub fn knn_subset(train: &Dataset, x: &[f64], k_tr: usize) -> Result<Dataset> {
    Ok(train.select(&knn_indices(&train.inputs, x, k_tr)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// `|y_hat - y|` on scalar outputs.
    MeanAbs1d,
    /// Euclidean norm over 16 centre pixel values.
    UspsCenterNorm,
    /// Mean absolute angle error over 54 joint angles in degrees, wrapped.
    PoserDegMod360,
    /// Mean 3-D distance over 20 markers (60 coordinates).
    HevaMarkerMm,
}

impl MetricKind {
    pub fn dim(self) -> usize {
        match self {
            MetricKind::MeanAbs1d => 1,
            MetricKind::UspsCenterNorm => 16,
            MetricKind::PoserDegMod360 => 54,
            MetricKind::HevaMarkerMm => 60,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::MeanAbs1d => "mean_abs_1d",
            MetricKind::UspsCenterNorm => "usps_center_norm",
            MetricKind::PoserDegMod360 => "poser_deg_mod360",
            MetricKind::HevaMarkerMm => "heva_marker_mm",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            MetricKind::MeanAbs1d,
            MetricKind::UspsCenterNorm,
            MetricKind::PoserDegMod360,
            MetricKind::HevaMarkerMm,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::invalid("metric", format!("unknown metric {s:?}")))
    }
}

/// Wraps an angle difference in degrees into (-180, 180].
pub fn wrap_degrees(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

pub fn error_metric(y_hat: &[f64], y_star: &[f64], kind: MetricKind) -> Result<f64> {
    check_dim("error metric prediction", kind.dim(), y_hat.len())?;
    check_dim("error metric target", kind.dim(), y_star.len())?;
    let diff = y_hat.iter().zip(y_star).map(|(a, b)| a - b);
    Ok(match kind {
        MetricKind::MeanAbs1d => (y_hat[0] - y_star[0]).abs(),
        MetricKind::UspsCenterNorm => diff.map(|d| d * d).sum::<f64>().sqrt(),
        MetricKind::PoserDegMod360 => diff.map(|d| wrap_degrees(d).abs()).sum::<f64>() / 54.0,
        MetricKind::HevaMarkerMm => {
            let d: Vec<f64> = diff.collect();
            d.chunks(3)
                .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / 20.0
        }
    })
}
