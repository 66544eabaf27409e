//! Datasets, projections, sample splitting and parameter grids.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SphereLattice;

/// Tolerance used when checking that a direction vector is unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-9;

// ============================================================================
// Samples
// ============================================================================

/// A multivariate regression dataset: design points with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    dim: usize,
}

impl RegressionSample {
    /// Builds a sample, checking that `xs` and `ys` have equal length and
    /// that every design point has the same dimension `d >= 1`.
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let dim = xs[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "design points must have dimension >= 1".into(),
            ));
        }
        for (i, x) in xs.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "design point {i} has dimension {} (expected {dim})",
                    x.len()
                )));
            }
        }
        Ok(Self { xs, ys, dim })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    /// Sub-sample at the given indices (in the given order).
    pub fn subset(&self, indices: &[usize]) -> RegressionSample {
        RegressionSample {
            xs: indices.iter().map(|&i| self.xs[i].clone()).collect(),
            ys: indices.iter().map(|&i| self.ys[i]).collect(),
            dim: self.dim,
        }
    }

    /// Reads a sample from a CSV file with header `x_1,...,x_d,y`.
    ///
    /// The file must be UTF-8 with `.` as the decimal separator. `dim` is
    /// the expected number of covariate columns.
    pub fn from_csv_path(path: &Path, dim: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::malformed(path, format!("{other:?}")),
        })?;
        let headers = reader
            .headers()
            .map_err(|e| Error::malformed(path, e.to_string()))?
            .clone();
        if headers.len() != dim + 1 {
            return Err(Error::malformed(
                path,
                format!("expected {} columns (x_1..x_{dim},y), found {}", dim + 1, headers.len()),
            ));
        }
        for (j, name) in headers.iter().enumerate() {
            let expected = if j < dim {
                format!("x_{}", j + 1)
            } else {
                "y".to_string()
            };
            if name.trim() != expected {
                return Err(Error::malformed(
                    path,
                    format!("column {} is named {name:?}, expected {expected:?}", j + 1),
                ));
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::malformed(path, e.to_string()))?;
            let mut x = Vec::with_capacity(dim);
            for (j, field) in record.iter().enumerate() {
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::malformed(path, format!("row {}: bad number {field:?}", row + 2))
                })?;
                if j < dim {
                    x.push(value);
                } else {
                    ys.push(value);
                }
            }
            xs.push(x);
        }
        RegressionSample::new(xs, ys)
    }
}

/// A univariate view of a sample along one direction: `zs[i] = v . x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    zs: Vec<f64>,
    ys: Vec<f64>,
    direction: Vec<f64>,
}

impl ProjectedSample {
    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn len(&self) -> usize {
        self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zs.is_empty()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Projections of every design point, without the unit-norm check.
pub(crate) fn project_unchecked(sample: &RegressionSample, v: &[f64]) -> Vec<f64> {
    sample.xs().iter().map(|x| dot(v, x)).collect()
}

/// Projects a sample onto a unit direction, keeping responses aligned.
pub fn project(sample: &RegressionSample, v: &[f64]) -> Result<ProjectedSample> {
    if v.len() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            got: v.len(),
        });
    }
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let norm = norm2(v);
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidArgument(format!(
            "direction must be unit-norm (|v| = {norm})"
        )));
    }
    Ok(ProjectedSample {
        zs: project_unchecked(sample, v),
        ys: sample.ys().to_vec(),
        direction: v.to_vec(),
    })
}

// ============================================================================
// Splitting
// ============================================================================

/// Rule for the training-sample size `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// `m = ceil(train_fraction * n)`.
    Fraction { train_fraction: f64 },
    /// `m = floor(n * (1 - (ln n)^{-alpha}))`.
    Schedule { alpha: f64 },
}

/// Seeded rule for splitting a sample into training and learning halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            mode: SplitMode::Fraction {
                train_fraction: 0.75,
            },
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn fraction(train_fraction: f64, seed: u64) -> Self {
        SplitConfig {
            mode: SplitMode::Fraction { train_fraction },
            seed,
        }
    }

    /// Training-sample size for a sample of size `n`.
    pub fn training_size(&self, n: usize) -> Result<usize> {
        let m = match self.mode {
            SplitMode::Fraction { train_fraction } => {
                if !(train_fraction > 0.0 && train_fraction < 1.0) {
                    return Err(Error::InvalidSplit(format!(
                        "train_fraction must lie in (0,1), got {train_fraction}"
                    )));
                }
                (train_fraction * n as f64).ceil() as usize
            }
            SplitMode::Schedule { alpha } => {
                if alpha <= 0.0 {
                    return Err(Error::InvalidSplit(format!(
                        "schedule alpha must be positive, got {alpha}"
                    )));
                }
                let ell = (n as f64).ln().powf(-alpha);
                (n as f64 * (1.0 - ell)).floor() as usize
            }
        };
        if m == 0 || m >= n {
            return Err(Error::InvalidSplit(format!(
                "training size {m} of {n} leaves no data in one half"
            )));
        }
        Ok(m)
    }
}

/// Result of splitting a sample: both halves plus the index sets that
/// produced them (sorted ascending).
#[derive(Debug, Clone)]
pub struct SampleSplit {
    pub training: RegressionSample,
    pub learning: RegressionSample,
    pub train_indices: Vec<usize>,
    pub learn_indices: Vec<usize>,
}

/// Splits a sample into a training half (weak-estimator fitting) and a
/// learning half (risk evaluation) by a seeded Fisher-Yates shuffle.
pub fn split(sample: &RegressionSample, cfg: &SplitConfig) -> Result<SampleSplit> {
    let n = sample.len();
    if n < 4 {
        return Err(Error::InvalidSplit(format!("need n >= 4, got {n}")));
    }
    let m = cfg.training_size(n)?;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    indices.shuffle(&mut rng);
    let mut train_indices = indices[..m].to_vec();
    let mut learn_indices = indices[m..].to_vec();
    train_indices.sort_unstable();
    learn_indices.sort_unstable();
    Ok(SampleSplit {
        training: sample.subset(&train_indices),
        learning: sample.subset(&learn_indices),
        train_indices,
        learn_indices,
    })
}

// ============================================================================
// Grids
// ============================================================================

/// Arithmetic smoothness grid from `s_min` with step `1/ln(n)`, capped at
/// `s_max`; `s_max` is appended when the cap truncates the progression.
pub fn smoothness_grid(s_min: f64, s_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "smoothness grid needs n >= 3, got {n}"
        )));
    }
    smoothness_grid_with_log(s_min, s_max, (n as f64).ln())
}

pub(crate) fn smoothness_grid_with_log(s_min: f64, s_max: f64, ln_n: f64) -> Result<Vec<f64>> {
    if !(s_min > 0.0 && s_min <= s_max) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < s_min <= s_max, got s_min={s_min}, s_max={s_max}"
        )));
    }
    let step = 1.0 / ln_n;
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let value = s_min + k as f64 * step;
        if value > s_max {
            break;
        }
        grid.push(value);
        k += 1;
    }
    match grid.last() {
        Some(&last) if (last - s_max).abs() <= 1e-12 => {}
        _ => grid.push(s_max),
    }
    Ok(grid)
}

/// The full weak-estimator parameter grid: smoothness values, radius
/// values and candidate directions.
#[derive(Debug, Clone)]
pub struct ParamGrid {
    smoothness_values: Vec<f64>,
    radius_values: Vec<f64>,
    directions: SphereLattice,
}

impl ParamGrid {
    pub fn new(
        smoothness_values: Vec<f64>,
        radius_values: Vec<f64>,
        directions: SphereLattice,
    ) -> Result<Self> {
        if smoothness_values.is_empty() {
            return Err(Error::InvalidArgument("empty smoothness grid".into()));
        }
        if smoothness_values[0] <= 0.0 {
            return Err(Error::InvalidArgument(
                "smoothness values must be positive".into(),
            ));
        }
        if !smoothness_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "smoothness grid must be strictly increasing".into(),
            ));
        }
        if radius_values.is_empty() {
            return Err(Error::InvalidArgument("empty radius grid".into()));
        }
        if radius_values.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidArgument(
                "radius values must be positive".into(),
            ));
        }
        Ok(ParamGrid {
            smoothness_values,
            radius_values,
            directions,
        })
    }

    pub fn smoothness_values(&self) -> &[f64] {
        &self.smoothness_values
    }

    pub fn radius_values(&self) -> &[f64] {
        &self.radius_values
    }

    pub fn directions(&self) -> &SphereLattice {
        &self.directions
    }

    /// Number of `(direction, smoothness, radius)` triples.
    pub fn param_count(&self) -> usize {
        self.directions.len() * self.smoothness_values.len() * self.radius_values.len()
    }
}
