//! Gibbs-weight aggregation of weak estimators.
//!
//! A dictionary of weak estimators — one truncated local polynomial fit
//! per `(direction, smoothness, radius)` triple — is fitted on the
//! training half of the sample and scored by its unnormalized sum of
//! squared errors over the learning half. The aggregate is the convex
//! combination with weights proportional to `exp(-T * risk)`. Small `T`
//! flattens the weights towards uniform; large `T` concentrates them on
//! the empirical risk minimizer.
//!
//! Risks are plain sums (no division by the learning-sample size), so the
//! effective temperature scales with the learning-sample size: comparing
//! `T` across different `n` requires rescaling.
//!
//! The module also provides the iterative direction preselection (shrink
//! the half-sphere lattice around the current empirical-risk minimizer
//! while halving the step) and leave-one-out cross-validation of the
//! temperature.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    dot, norm2, project, project_unchecked, split, ParamGrid, RegressionSample, SplitConfig,
    UNIT_NORM_TOL,
};
use crate::error::{Error, Result};
use crate::lattice::{
    build_lattice, build_lattice_section, lattice_step, SphereLattice,
};
use crate::lpe::{
    lpe_predict, lpe_predict_on, truncate, LpeConfig, SortedProjection, Truncation,
    DEFAULT_DEGENERACY_TOL,
};

// ============================================================================
// Weak estimators and the ensemble
// ============================================================================

/// One fitted weak estimator: a truncated univariate local polynomial fit
/// along a fixed direction, tagged by its `(direction, smoothness, radius)`
/// label.
#[derive(Debug, Clone)]
pub struct WeakEstimator {
    direction: Vec<f64>,
    lpe_cfg: LpeConfig,
    training_data: Arc<SortedProjection>,
}

impl WeakEstimator {
    /// Wraps an already-projected, sorted training sample. The config must
    /// carry an explicit truncation level.
    pub fn new(
        direction: Vec<f64>,
        lpe_cfg: LpeConfig,
        training_data: Arc<SortedProjection>,
    ) -> Result<Self> {
        lpe_cfg.validate()?;
        if training_data.is_empty() {
            return Err(Error::EmptyInput);
        }
        if (norm2(&direction) - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(
                "weak-estimator direction must be unit-norm".into(),
            ));
        }
        if !matches!(lpe_cfg.truncation, Truncation::Explicit(_)) {
            return Err(Error::InvalidArgument(
                "weak estimators need a resolved truncation level".into(),
            ));
        }
        Ok(WeakEstimator {
            direction,
            lpe_cfg,
            training_data,
        })
    }

    /// Projects the training sample onto `direction` and freezes it; a
    /// data-driven truncation sentinel is resolved to `max |y_i|` here.
    pub fn fit(training: &RegressionSample, direction: &[f64], cfg: &LpeConfig) -> Result<Self> {
        let q = resolve_truncation(&cfg.truncation, training.ys())?;
        let projected = project(training, direction)?;
        let sorted = Arc::new(SortedProjection::from_projected(&projected));
        let resolved = cfg.clone().with_truncation(Truncation::Explicit(q));
        WeakEstimator::new(direction.to_vec(), resolved, sorted)
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn smoothness(&self) -> f64 {
        self.lpe_cfg.smoothness
    }

    pub fn radius(&self) -> f64 {
        self.lpe_cfg.radius
    }

    pub fn lpe_config(&self) -> &LpeConfig {
        &self.lpe_cfg
    }

    pub fn training_data(&self) -> &SortedProjection {
        &self.training_data
    }

    /// The `(direction, smoothness, radius)` triple identifying this member.
    pub fn label(&self) -> (&[f64], f64, f64) {
        (&self.direction, self.lpe_cfg.smoothness, self.lpe_cfg.radius)
    }

    /// Resolved truncation level `Q`.
    pub fn truncation_level(&self) -> f64 {
        match self.lpe_cfg.truncation {
            Truncation::Explicit(q) => q,
            Truncation::DataDriven => unreachable!("constructor resolves the sentinel"),
        }
    }

    /// Untruncated local fit at the projected coordinate `z`.
    pub fn raw_value(&self, z: f64) -> f64 {
        lpe_predict(&self.training_data, z, &self.lpe_cfg).value
    }

    /// Truncated prediction at the projected coordinate `z`.
    pub fn predict_projected(&self, z: f64) -> f64 {
        truncate(self.raw_value(z), self.truncation_level())
    }

    /// Truncated prediction at a design point.
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.direction.len());
        self.predict_projected(dot(&self.direction, x))
    }
}

/// The aggregated predictor: weak estimators, their learning-sample risks,
/// a temperature, and the resulting simplex weights.
#[derive(Debug, Clone)]
pub struct GibbsEnsemble {
    members: Vec<WeakEstimator>,
    risks: Vec<f64>,
    temperature: f64,
    weights: Vec<f64>,
}

impl GibbsEnsemble {
    pub fn new(members: Vec<WeakEstimator>, risks: Vec<f64>, temperature: f64) -> Result<Self> {
        if members.len() != risks.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                got: risks.len(),
            });
        }
        let weights = gibbs_weights(&risks, temperature)?;
        Ok(GibbsEnsemble {
            members,
            risks,
            temperature,
            weights,
        })
    }

    pub fn members(&self) -> &[WeakEstimator] {
        &self.members
    }

    pub fn risks(&self) -> &[f64] {
        &self.risks
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shared truncation level of the members (they are fitted on the same
    /// training half).
    pub fn truncation_level(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.truncation_level())
            .fold(0.0, f64::max)
    }

    /// Index of the heaviest member; its direction estimates the index.
    pub fn top_weight_index(&self) -> usize {
        let mut best = 0;
        for k in 1..self.weights.len() {
            if self.weights[k] > self.weights[best] {
                best = k;
            }
        }
        best
    }

    /// Convex combination of the member predictions at `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (member, &w) in self.members.iter().zip(&self.weights) {
            acc += w * member.predict(x);
        }
        acc
    }
}

// ============================================================================
// Risks and weights
// ============================================================================

/// Unnormalized sum of squared errors of a predictor over a sample.
pub fn empirical_risk<P: Fn(&[f64]) -> f64>(predictor: P, learning: &RegressionSample) -> f64 {
    debug_assert!(!learning.is_empty());
    let mut total = 0.0;
    for i in 0..learning.len() {
        let e = learning.y(i) - predictor(learning.x(i));
        total += e * e;
    }
    total
}

/// Gibbs weights `exp(-T R_k) / sum_j exp(-T R_j)`, computed after
/// shifting every risk by the minimum so the largest exponent is zero.
pub fn gibbs_weights(risks: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if risks.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    for (index, r) in risks.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFiniteRisk { index });
        }
    }
    let r_min = risks.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = risks
        .iter()
        .map(|&r| (-temperature * (r - r_min)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Index of the smallest risk; ties break to the lowest index.
pub fn erm_select(risks: &[f64]) -> usize {
    assert!(!risks.is_empty());
    let mut best = 0;
    for k in 1..risks.len() {
        if risks[k] < risks[best] {
            best = k;
        }
    }
    best
}

// ============================================================================
// Temperature grid
// ============================================================================

/// Leave-one-out flavor used by the temperature cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// Refit weak estimators when the held-out point sits in the training
    /// half; weights are always recomputed.
    ExactLoo,
    /// Only recompute weights for learning-half points; training-half
    /// points are skipped. Fast approximation for large samples.
    WeightsOnlyLoo,
}

/// Candidate temperatures for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    pub values: Vec<f64>,
    pub cv_mode: CvMode,
}

impl TemperatureGrid {
    pub fn new(values: Vec<f64>, cv_mode: CvMode) -> Result<Self> {
        let grid = TemperatureGrid { values, cv_mode };
        grid.validate()?;
        Ok(grid)
    }

    /// `{0.1, 0.2, ..., 5.0}` with exact leave-one-out.
    pub fn default_cv() -> Self {
        TemperatureGrid {
            values: (1..=50).map(|k| k as f64 / 10.0).collect(),
            cv_mode: CvMode::ExactLoo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("empty temperature grid".into()));
        }
        if self.values[0] <= 0.0 {
            return Err(Error::InvalidConfig(
                "temperatures must be positive".into(),
            ));
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "temperature grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

// ============================================================================
// Pipeline configuration
// ============================================================================

/// Smoothness grid specification.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothnessSpec {
    /// Verbatim list of smoothness values.
    Explicit(Vec<f64>),
    /// Arithmetic grid from `s_min` with step `1/ln(n)`, capped at `s_max`.
    Formula { s_min: f64, s_max: f64 },
}

/// How the aggregate temperature is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum TemperatureSelection {
    Fixed(f64),
    CrossValidated(TemperatureGrid),
}

/// How candidate directions are chosen.
#[derive(Debug, Clone)]
pub enum DirectionPolicy {
    /// Iterative lattice preselection around the empirical-risk minimizer.
    Preselect,
    /// The full half-sphere lattice at step `(n ln n)^{-1/(2 s_min)}`.
    FullLattice,
    /// A caller-provided direction set.
    Explicit(SphereLattice),
}

/// End-to-end configuration of the single-index fit.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub split: SplitConfig,
    pub smoothness: SmoothnessSpec,
    pub radii: Vec<f64>,
    pub degree: usize,
    pub noise_bound: f64,
    pub truncation: Truncation,
    pub degeneracy_tol: f64,
    pub temperature: TemperatureSelection,
    pub directions: DirectionPolicy,
    /// Smoothness used for the lattice step; defaults to the smallest grid
    /// value.
    pub lattice_s_min: Option<f64>,
}

impl FitConfig {
    /// Bench defaults: 3/4 training split, `G = {1,2,3,4}`,
    /// `L = {0.1, 0.5, 1, 1.5}`, degree 5, data-driven truncation and
    /// lattice preselection.
    pub fn new(noise_bound: f64, temperature: TemperatureSelection) -> Self {
        FitConfig {
            split: SplitConfig::default(),
            smoothness: SmoothnessSpec::Explicit(vec![1.0, 2.0, 3.0, 4.0]),
            radii: vec![0.1, 0.5, 1.0, 1.5],
            degree: 5,
            noise_bound,
            truncation: Truncation::DataDriven,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
            temperature,
            directions: DirectionPolicy::Preselect,
            lattice_s_min: None,
        }
    }
}

/// Weak-learner grid without directions: what preselection searches over.
#[derive(Debug, Clone)]
pub struct WeakParams {
    pub smoothness_values: Vec<f64>,
    pub radius_values: Vec<f64>,
    pub degree: usize,
    pub noise_bound: f64,
    pub truncation: Truncation,
    pub degeneracy_tol: f64,
}

pub(crate) fn resolve_truncation(truncation: &Truncation, train_ys: &[f64]) -> Result<f64> {
    match truncation {
        Truncation::Explicit(q) => {
            if *q > 0.0 {
                Ok(*q)
            } else {
                Err(Error::InvalidConfig(format!(
                    "truncation level must be positive, got {q}"
                )))
            }
        }
        Truncation::DataDriven => {
            let q = train_ys.iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
            if q > 0.0 {
                Ok(q)
            } else {
                Err(Error::InvalidConfig(
                    "data-driven truncation needs a nonzero training response".into(),
                ))
            }
        }
    }
}

// ============================================================================
// Dictionary fitting
// ============================================================================

struct DirectionCache {
    sorted_train: Arc<SortedProjection>,
    /// Sorted-array rank of each training point (training-half order).
    train_ranks: Vec<usize>,
    /// Projection of each training point, training-half order.
    train_z: Vec<f64>,
    /// Projection of each learning point, learning-half order.
    learn_z: Vec<f64>,
}

struct DictionaryFit {
    dirs: Vec<DirectionCache>,
    members: Vec<WeakEstimator>,
    /// Untruncated member values at the learning points, member-major.
    learn_values: Vec<Vec<f64>>,
    /// Bandwidths behind those values, member-major.
    learn_bandwidths: Vec<Vec<f64>>,
    risks: Vec<f64>,
}

fn fit_dictionary(
    training: &RegressionSample,
    learning: &RegressionSample,
    lattice: &SphereLattice,
    params: &WeakParams,
    q: f64,
) -> Result<DictionaryFit> {
    if lattice.is_empty() {
        return Err(Error::InvalidConfig("empty direction set".into()));
    }
    struct PerDirection {
        cache: DirectionCache,
        members: Vec<WeakEstimator>,
        learn_values: Vec<Vec<f64>>,
        learn_bandwidths: Vec<Vec<f64>>,
        risks: Vec<f64>,
    }
    let learn_ys = learning.ys();
    let per_direction: Vec<PerDirection> = lattice
        .points()
        .par_iter()
        .map(|v| -> Result<PerDirection> {
            let train_z = project_unchecked(training, v);
            let learn_z = project_unchecked(learning, v);
            let train_ranks = SortedProjection::ranks_of(&train_z);
            let sorted_train = Arc::new(SortedProjection::from_pairs(
                train_z.clone(),
                training.ys().to_vec(),
            ));
            let mut members = Vec::new();
            let mut learn_values = Vec::new();
            let mut learn_bandwidths = Vec::new();
            let mut risks = Vec::new();
            for &s in &params.smoothness_values {
                for &l in &params.radius_values {
                    let cfg = LpeConfig {
                        degree: params.degree,
                        smoothness: s,
                        radius: l,
                        noise_bound: params.noise_bound,
                        truncation: Truncation::Explicit(q),
                        degeneracy_tol: params.degeneracy_tol,
                    };
                    cfg.validate()?;
                    let mut values = Vec::with_capacity(learn_z.len());
                    let mut bandwidths = Vec::with_capacity(learn_z.len());
                    for &z in &learn_z {
                        let fit = lpe_predict(&sorted_train, z, &cfg);
                        values.push(fit.value);
                        bandwidths.push(fit.bandwidth);
                    }
                    let mut risk = 0.0;
                    for (j, &value) in values.iter().enumerate() {
                        let e = learn_ys[j] - truncate(value, q);
                        risk += e * e;
                    }
                    members.push(WeakEstimator::new(
                        v.clone(),
                        cfg,
                        Arc::clone(&sorted_train),
                    )?);
                    learn_values.push(values);
                    learn_bandwidths.push(bandwidths);
                    risks.push(risk);
                }
            }
            Ok(PerDirection {
                cache: DirectionCache {
                    sorted_train,
                    train_ranks,
                    train_z,
                    learn_z,
                },
                members,
                learn_values,
                learn_bandwidths,
                risks,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fit = DictionaryFit {
        dirs: Vec::with_capacity(per_direction.len()),
        members: Vec::new(),
        learn_values: Vec::new(),
        learn_bandwidths: Vec::new(),
        risks: Vec::new(),
    };
    for pd in per_direction {
        fit.dirs.push(pd.cache);
        fit.members.extend(pd.members);
        fit.learn_values.extend(pd.learn_values);
        fit.learn_bandwidths.extend(pd.learn_bandwidths);
        fit.risks.extend(pd.risks);
    }
    Ok(fit)
}

// ============================================================================
// Preselection
// ============================================================================

/// Iterative preselection of candidate directions: start from a coarse
/// lattice at step `Delta_0 = (2 d n)^{-1/(2(d-1))}`, repeatedly pick the
/// direction of the empirical-risk minimizer over the current candidate
/// set, halve the step, and keep only the lattice section inside the ball
/// of radius `2 Delta_0` around that direction; stop once the step reaches
/// the target `Delta = (n ln n)^{-1/(2 s_min)}`.
pub fn preselect(
    training: &RegressionSample,
    learning: &RegressionSample,
    params: &WeakParams,
    n: usize,
    s_min: f64,
) -> Result<SphereLattice> {
    let d = training.dim();
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "preselection needs dimension >= 2, got {d}"
        )));
    }
    let delta = lattice_step(n, s_min);
    let delta0 = (2.0 * d as f64 * n as f64).powf(-1.0 / (2.0 * (d as f64 - 1.0)));
    preselect_impl(training, learning, params, delta0, delta)
}

pub(crate) fn preselect_impl(
    training: &RegressionSample,
    learning: &RegressionSample,
    params: &WeakParams,
    delta0_init: f64,
    delta: f64,
) -> Result<SphereLattice> {
    let d = training.dim();
    let q = resolve_truncation(&params.truncation, training.ys())?;
    let mut delta0 = delta0_init;
    let mut lattice = build_lattice(d, delta0)?;
    while delta0 > delta {
        let dict = fit_dictionary(training, learning, &lattice, params, q)?;
        let best = erm_select(&dict.risks);
        let vhat = dict.members[best].direction().to_vec();
        delta0 /= 2.0;
        let section = build_lattice_section(d, delta0, &vhat, 2.0 * delta0)?;
        lattice = if section.is_empty() {
            // documented recovery: keep the current minimizer alone
            SphereLattice::from_points(vec![vhat], delta0, d)?
        } else {
            section
        };
    }
    Ok(lattice)
}

// ============================================================================
// Fitted pipeline
// ============================================================================

/// Everything the fit produced before a temperature is chosen: the member
/// dictionary with risks, the split, the direction set and the caches the
/// leave-one-out scorer needs.
pub struct FittedPipeline {
    dim: usize,
    q: f64,
    q_data_driven: bool,
    train_indices: Vec<usize>,
    learn_indices: Vec<usize>,
    grid: ParamGrid,
    members: Vec<WeakEstimator>,
    members_per_direction: usize,
    risks: Vec<f64>,
    dirs: Vec<DirectionCache>,
    learn_values: Vec<Vec<f64>>,
    learn_bandwidths: Vec<Vec<f64>>,
    train_ys: Vec<f64>,
    learn_ys: Vec<f64>,
    /// `(index of max |y| in the training half, max, second max)`.
    train_abs_max: (usize, f64, f64),
}

/// Runs split, direction selection and dictionary fitting; the result can
/// be turned into an ensemble at any temperature.
pub fn fit_pipeline(sample: &RegressionSample, cfg: &FitConfig) -> Result<FittedPipeline> {
    let n = sample.len();
    let d = sample.dim();
    if n < 8 {
        return Err(Error::InvalidConfig(format!("need n >= 8, got {n}")));
    }
    if d < 2 {
        return Err(Error::InvalidConfig(format!(
            "single-index fitting needs dimension >= 2, got {d}"
        )));
    }
    let smoothness_values = match &cfg.smoothness {
        SmoothnessSpec::Explicit(values) => values.clone(),
        SmoothnessSpec::Formula { s_min, s_max } => {
            crate::data::smoothness_grid(*s_min, *s_max, n)?
        }
    };
    if smoothness_values.is_empty() {
        return Err(Error::InvalidConfig("empty smoothness grid".into()));
    }
    let s_max = *smoothness_values
        .last()
        .expect("non-empty smoothness grid");
    if (cfg.degree as f64) + 1.0 < s_max {
        return Err(Error::InvalidConfig(format!(
            "degree {} too small for s_max = {s_max} (need r + 1 >= s_max)",
            cfg.degree
        )));
    }
    let s_min = cfg.lattice_s_min.unwrap_or(smoothness_values[0]);
    let params = WeakParams {
        smoothness_values: smoothness_values.clone(),
        radius_values: cfg.radii.clone(),
        degree: cfg.degree,
        noise_bound: cfg.noise_bound,
        truncation: cfg.truncation,
        degeneracy_tol: cfg.degeneracy_tol,
    };

    let halves = split(sample, &cfg.split)?;
    let directions = match &cfg.directions {
        DirectionPolicy::Preselect => {
            preselect(&halves.training, &halves.learning, &params, n, s_min)?
        }
        DirectionPolicy::FullLattice => build_lattice(d, lattice_step(n, s_min))?,
        DirectionPolicy::Explicit(lat) => {
            if lat.dimension() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: lat.dimension(),
                });
            }
            lat.clone()
        }
    };
    let grid = ParamGrid::new(smoothness_values, cfg.radii.clone(), directions)?;
    let q = resolve_truncation(&cfg.truncation, halves.training.ys())?;
    let dict = fit_dictionary(&halves.training, &halves.learning, grid.directions(), &params, q)?;

    let train_ys = halves.training.ys().to_vec();
    let learn_ys = halves.learning.ys().to_vec();
    let mut abs_idx = 0usize;
    let (mut abs_max, mut abs_second) = (0.0f64, 0.0f64);
    for (i, y) in train_ys.iter().enumerate() {
        let a = y.abs();
        if a > abs_max {
            abs_second = abs_max;
            abs_max = a;
            abs_idx = i;
        } else if a > abs_second {
            abs_second = a;
        }
    }

    Ok(FittedPipeline {
        dim: d,
        q,
        q_data_driven: matches!(cfg.truncation, Truncation::DataDriven),
        train_indices: halves.train_indices,
        learn_indices: halves.learn_indices,
        grid,
        members: dict.members,
        members_per_direction: params.smoothness_values.len() * params.radius_values.len(),
        risks: dict.risks,
        dirs: dict.dirs,
        learn_values: dict.learn_values,
        learn_bandwidths: dict.learn_bandwidths,
        train_ys,
        learn_ys,
        train_abs_max: (abs_idx, abs_max, abs_second),
    })
}

impl FittedPipeline {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[WeakEstimator] {
        &self.members
    }

    pub fn risks(&self) -> &[f64] {
        &self.risks
    }

    pub fn truncation_level(&self) -> f64 {
        self.q
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn learn_indices(&self) -> &[usize] {
        &self.learn_indices
    }

    pub fn param_grid(&self) -> &ParamGrid {
        &self.grid
    }

    /// Untruncated member values at the learning points, member-major.
    pub fn learning_values(&self) -> &[Vec<f64>] {
        &self.learn_values
    }

    /// The ensemble at temperature `t`.
    pub fn ensemble(&self, t: f64) -> Result<GibbsEnsemble> {
        GibbsEnsemble::new(self.members.clone(), self.risks.clone(), t)
    }

    /// Truncation level after removing training point `t` (training-half
    /// order).
    fn q_minus(&self, t: usize) -> Result<f64> {
        if !self.q_data_driven {
            return Ok(self.q);
        }
        let (idx, max, second) = self.train_abs_max;
        let q = if t == idx { second } else { max };
        if q > 0.0 {
            Ok(q)
        } else {
            Err(Error::InvalidConfig(
                "data-driven truncation degenerates when the only nonzero response is held out"
                    .into(),
            ))
        }
    }

    /// Leave-one-out totals per candidate temperature, per the chosen mode.
    /// `sample` must be the sample this pipeline was fitted on.
    pub fn loo_totals(&self, sample: &RegressionSample, grid: &TemperatureGrid) -> Result<Vec<f64>> {
        grid.validate()?;
        if sample.len() != self.train_indices.len() + self.learn_indices.len() {
            return Err(Error::InvalidConfig(
                "leave-one-out needs the sample the pipeline was fitted on".into(),
            ));
        }
        if self.learn_indices.len() < 2 {
            return Err(Error::InvalidConfig(
                "leave-one-out would empty the learning half".into(),
            ));
        }
        let n = sample.len();
        let temps = &grid.values;
        let n_members = self.members.len();
        let n_learn = self.learn_indices.len();

        // squared member errors at learning points under the full-data Q
        let err2: Vec<Vec<f64>> = self
            .learn_values
            .iter()
            .map(|values| {
                values
                    .iter()
                    .zip(&self.learn_ys)
                    .map(|(&v, &y)| {
                        let e = y - truncate(v, self.q);
                        e * e
                    })
                    .collect()
            })
            .collect();

        let mut side = vec![None::<(bool, usize)>; n];
        for (t, &i) in self.train_indices.iter().enumerate() {
            side[i] = Some((true, t));
        }
        for (j, &i) in self.learn_indices.iter().enumerate() {
            side[i] = Some((false, j));
        }

        let contributions: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let (in_training, pos) = side[i].expect("split covers every index");
                if in_training {
                    if grid.cv_mode == CvMode::WeightsOnlyLoo {
                        return Ok(vec![0.0; temps.len()]);
                    }
                    self.training_fold(sample, i, pos, temps)
                } else {
                    self.learning_fold(sample, i, pos, &err2, n_learn, n_members, temps)
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut totals = vec![0.0; temps.len()];
        for contrib in &contributions {
            for (k, &c) in contrib.iter().enumerate() {
                totals[k] += c;
            }
        }
        Ok(totals)
    }

    fn learning_fold(
        &self,
        sample: &RegressionSample,
        i: usize,
        j: usize,
        err2: &[Vec<f64>],
        n_learn: usize,
        n_members: usize,
        temps: &[f64],
    ) -> Result<Vec<f64>> {
        let mut risks_minus = Vec::with_capacity(n_members);
        for member_err in err2 {
            let mut acc = 0.0;
            for (j2, &e2) in member_err.iter().enumerate().take(n_learn) {
                if j2 != j {
                    acc += e2;
                }
            }
            risks_minus.push(acc);
        }
        let preds: Vec<f64> = self
            .learn_values
            .iter()
            .map(|values| truncate(values[j], self.q))
            .collect();
        self.fold_errors(sample.y(i), &risks_minus, &preds, temps)
    }

    fn training_fold(
        &self,
        sample: &RegressionSample,
        i: usize,
        t: usize,
        temps: &[f64],
    ) -> Result<Vec<f64>> {
        let q_minus = self.q_minus(t)?;
        let n_members = self.members.len();
        let n_learn = self.learn_ys.len();
        let mut risks_minus = vec![0.0; n_members];
        let mut preds = vec![0.0; n_members];
        let mut scratch_z: Vec<f64> = Vec::with_capacity(self.train_ys.len());
        let mut scratch_y: Vec<f64> = Vec::with_capacity(self.train_ys.len());
        for (d_idx, dc) in self.dirs.iter().enumerate() {
            dc.sorted_train
                .remove_rank_into(dc.train_ranks[t], &mut scratch_z, &mut scratch_y);
            let t_z = dc.train_z[t];
            let first = d_idx * self.members_per_direction;
            let last = first + self.members_per_direction;
            for member_idx in first..last {
                let cfg = self.members[member_idx].lpe_config();
                let fresh = lpe_predict_on(&scratch_z, &scratch_y, t_z, cfg);
                preds[member_idx] = truncate(fresh.value, q_minus);
                let values = &self.learn_values[member_idx];
                let bandwidths = &self.learn_bandwidths[member_idx];
                let mut acc = 0.0;
                for j in 0..n_learn {
                    // a removed training point only disturbs fits whose
                    // window reached it
                    let value = if (dc.learn_z[j] - t_z).abs() <= bandwidths[j] {
                        lpe_predict_on(&scratch_z, &scratch_y, dc.learn_z[j], cfg).value
                    } else {
                        values[j]
                    };
                    let e = self.learn_ys[j] - truncate(value, q_minus);
                    acc += e * e;
                }
                risks_minus[member_idx] = acc;
            }
        }
        self.fold_errors(sample.y(i), &risks_minus, &preds, temps)
    }

    fn fold_errors(
        &self,
        y_i: f64,
        risks_minus: &[f64],
        preds: &[f64],
        temps: &[f64],
    ) -> Result<Vec<f64>> {
        temps
            .iter()
            .map(|&t| {
                let weights = gibbs_weights(risks_minus, t)?;
                let mut pred = 0.0;
                for (w, p) in weights.iter().zip(preds) {
                    pred += w * p;
                }
                let e = y_i - pred;
                Ok(e * e)
            })
            .collect()
    }

    /// Leave-one-out choice of the temperature over the grid; ties break to
    /// the smallest value. A single-value grid returns immediately.
    pub fn cv_temperature(&self, sample: &RegressionSample, grid: &TemperatureGrid) -> Result<f64> {
        grid.validate()?;
        if grid.values.len() == 1 {
            return Ok(grid.values[0]);
        }
        let totals = self.loo_totals(sample, grid)?;
        let mut best = 0;
        for k in 1..totals.len() {
            if totals[k] < totals[best] {
                best = k;
            }
        }
        Ok(grid.values[best])
    }
}

/// Cross-validates the temperature for a fresh pipeline on `sample`.
pub fn cv_temperature(
    sample: &RegressionSample,
    grid: &TemperatureGrid,
    cfg: &FitConfig,
) -> Result<f64> {
    let pipeline = fit_pipeline(sample, cfg)?;
    pipeline.cv_temperature(sample, grid)
}

/// The end-to-end fit: split, select directions, fit the dictionary, score
/// it on the learning half, choose the temperature and weight the members.
pub fn fit_single_index(sample: &RegressionSample, cfg: &FitConfig) -> Result<GibbsEnsemble> {
    let pipeline = fit_pipeline(sample, cfg)?;
    let t = match &cfg.temperature {
        TemperatureSelection::Fixed(t) => *t,
        TemperatureSelection::CrossValidated(grid) => pipeline.cv_temperature(sample, grid)?,
    };
    pipeline.ensemble(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empirical_risk_examples() {
        let sample =
            RegressionSample::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1.0, 2.0]).unwrap();
        assert_eq!(empirical_risk(|_| 0.0, &sample), 5.0);
        assert_eq!(empirical_risk(|x| 1.0 + x[0], &sample), 0.0);
    }

    #[test]
    fn empirical_risk_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sample = RegressionSample::new(xs.clone(), ys.clone()).unwrap();
        let predictor = |x: &[f64]| 0.3 * x[0] - 1.2 * x[1] + 0.1;
        let mut naive = 0.0;
        for i in 0..50 {
            let e = ys[i] - predictor(&xs[i]);
            naive += e * e;
        }
        assert!((empirical_risk(predictor, &sample) - naive).abs() <= 1e-12);
    }

    #[test]
    fn gibbs_weights_symmetry_and_examples() {
        let w = gibbs_weights(&[3.0, 3.0, 3.0], 0.7).unwrap();
        for &x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let w = gibbs_weights(&[0.0, 1.0], 1.0).unwrap();
        assert!((w[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((w[1] - 0.2689414213699951).abs() < 1e-12);
        let w = gibbs_weights(&[17.0], 2.0).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn gibbs_weights_rejects_bad_input() {
        assert!(gibbs_weights(&[], 1.0).is_err());
        assert!(gibbs_weights(&[1.0], 0.0).is_err());
        assert!(matches!(
            gibbs_weights(&[1.0, f64::NAN], 1.0),
            Err(Error::NonFiniteRisk { index: 1 })
        ));
        assert!(gibbs_weights(&[1.0, f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn gibbs_weights_form_a_simplex_across_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let risks: Vec<f64> = (0..40)
                .map(|_| {
                    let scale = 10f64.powi(rng.gen_range(-6..7));
                    rng.gen_range(0.0..1.0) * scale
                })
                .collect();
            let t = 10f64.powi(rng.gen_range(-3..4));
            let w = gibbs_weights(&risks, t).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gibbs_weights_are_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // dyadic risks keep the shifted subtraction exact
        for &shift in &[1.0f64, 4096.0, 1048576.0] {
            let risks: Vec<f64> = (0..30)
                .map(|_| (rng.gen_range(0..100_000_000) as f64) / 1048576.0)
                .collect();
            let shifted: Vec<f64> = risks.iter().map(|r| r + shift).collect();
            let w1 = gibbs_weights(&risks, 0.37).unwrap();
            let w2 = gibbs_weights(&shifted, 0.37).unwrap();
            let b1: Vec<u64> = w1.iter().map(|x| x.to_bits()).collect();
            let b2: Vec<u64> = w2.iter().map(|x| x.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn gibbs_weights_temperature_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let risks: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..100.0)).collect();
        let w = gibbs_weights(&risks, 1e-9).unwrap();
        for &x in &w {
            assert!((x - 1.0 / 20.0).abs() < 1e-6);
        }
        let best = erm_select(&risks);
        let mut sorted = risks.clone();
        sorted.sort_by(f64::total_cmp);
        let gap = sorted[1] - sorted[0];
        let w = gibbs_weights(&risks, 1e6 / gap).unwrap();
        assert!(w[best] > 1.0 - 1e-6);
    }

    #[test]
    fn erm_select_examples_and_large_t_agreement() {
        assert_eq!(erm_select(&[3.0, 1.0, 2.0]), 1);
        assert_eq!(erm_select(&[1.0, 1.0]), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let mut risks: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
            risks.dedup_by(|a, b| a == b);
            let w = gibbs_weights(&risks, 1e6).unwrap();
            let mut argmax = 0;
            for k in 1..w.len() {
                if w[k] > w[argmax] {
                    argmax = k;
                }
            }
            assert_eq!(argmax, erm_select(&risks));
        }
    }

    #[test]
    fn temperature_grid_validation() {
        assert!(TemperatureGrid::new(vec![0.1, 0.2], CvMode::ExactLoo).is_ok());
        assert!(TemperatureGrid::new(vec![], CvMode::ExactLoo).is_err());
        assert!(TemperatureGrid::new(vec![0.2, 0.1], CvMode::ExactLoo).is_err());
        assert!(TemperatureGrid::new(vec![0.0, 0.1], CvMode::ExactLoo).is_err());
        let grid = TemperatureGrid::default_cv();
        assert_eq!(grid.values.len(), 50);
        assert!((grid.values[0] - 0.1).abs() < 1e-15);
        assert!((grid.values[49] - 5.0).abs() < 1e-15);
    }

    fn toy_members(risks: &[f64]) -> Vec<WeakEstimator> {
        let training = RegressionSample::new(
            vec![vec![0.0, 0.5], vec![0.4, 0.1], vec![-0.3, 0.2], vec![0.2, -0.4]],
            vec![1.0, 2.0, -1.0, 0.5],
        )
        .unwrap();
        let cfg = LpeConfig::new(1, 1.0, 1.0, 0.5).unwrap();
        risks
            .iter()
            .map(|_| WeakEstimator::fit(&training, &[1.0, 0.0], &cfg).unwrap())
            .collect()
    }

    #[test]
    fn ensemble_predict_matches_naive_weighted_sum() {
        let risks = vec![0.5, 1.5, 0.2];
        let ens = GibbsEnsemble::new(toy_members(&risks), risks.clone(), 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let mut naive = 0.0;
            for (m, &w) in ens.members().iter().zip(ens.weights()) {
                naive += w * m.predict(&x);
            }
            assert!((ens.predict(&x) - naive).abs() <= 1e-12);
            assert!(ens.predict(&x).abs() <= ens.truncation_level() + 1e-12);
        }
    }

    #[test]
    fn ensemble_single_member_and_even_pair() {
        let risks = vec![1.0];
        let ens = GibbsEnsemble::new(toy_members(&risks), risks, 1.0).unwrap();
        let x = [0.3, -0.2];
        let member_pred = ens.members()[0].predict(&x);
        assert_eq!(ens.predict(&x), member_pred);

        let risks = vec![2.0, 2.0];
        let ens = GibbsEnsemble::new(toy_members(&risks), risks, 1.0).unwrap();
        let a = ens.members()[0].predict(&x);
        let b = ens.members()[1].predict(&x);
        assert!((ens.predict(&x) - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn weak_estimator_prediction_is_truncated_lpe() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let xs: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() * 4.0).collect();
        let training = RegressionSample::new(xs, ys).unwrap();
        let cfg = LpeConfig::new(2, 2.0, 1.0, 0.5).unwrap();
        let member = WeakEstimator::fit(&training, &[1.0, 0.0], &cfg).unwrap();
        let q = member.truncation_level();
        let expected_q = training.ys().iter().fold(0.0f64, |a, y| a.max(y.abs()));
        assert_eq!(q, expected_q);
        for _ in 0..20 {
            let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let z = x[0];
            let by_hand = truncate(member.raw_value(z), q);
            assert_eq!(member.predict(&x), by_hand);
            assert!(member.predict(&x).abs() <= q);
        }
    }

    fn synthetic_sample(n: usize, seed: u64) -> RegressionSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let z = theta[0] * x[0] + theta[1] * x[1];
                let f = 2.0 * (1.0 + z).sin() * (2.0 * std::f64::consts::PI * z * z + 1.0).sin();
                f + 0.05 * rng.gen_range(-1.0..1.0)
            })
            .collect();
        RegressionSample::new(xs, ys).unwrap()
    }

    #[test]
    fn preselect_returns_initial_lattice_when_step_already_fine() {
        // for d = 2 the initial step (4n)^{-1/2} is below the target step
        // (n ln n)^{-1/2} whenever ln n < 4
        let sample = synthetic_sample(40, 3);
        let halves = split(&sample, &SplitConfig::default()).unwrap();
        let params = WeakParams {
            smoothness_values: vec![1.0, 2.0],
            radius_values: vec![0.5],
            degree: 2,
            noise_bound: 0.3,
            truncation: Truncation::DataDriven,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        };
        let lat = preselect(&halves.training, &halves.learning, &params, 40, 1.0).unwrap();
        let delta0 = (2.0 * 2.0 * 40.0f64).powf(-1.0 / 2.0);
        assert!(delta0 <= lattice_step(40, 1.0));
        let full = build_lattice(2, delta0).unwrap();
        assert_eq!(lat.points(), full.points());
    }

    #[test]
    fn preselect_halves_until_target_step() {
        let sample = synthetic_sample(60, 4);
        let halves = split(&sample, &SplitConfig::default()).unwrap();
        let params = WeakParams {
            smoothness_values: vec![1.0],
            radius_values: vec![0.5],
            degree: 2,
            noise_bound: 0.3,
            truncation: Truncation::DataDriven,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        };
        let lat =
            preselect_impl(&halves.training, &halves.learning, &params, 0.4, 0.05).unwrap();
        // ceil(log2(0.4 / 0.05)) = 3 halvings
        assert_eq!(lat.step(), 0.05);
        assert!(!lat.is_empty());
    }
}
