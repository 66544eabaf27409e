//! Synthetic single-index benchmarks.
//!
//! Each replication draws a fresh uniform design on `[-1,1]^d`, evaluates
//! the link along the projected index, calibrates homoscedastic Gaussian
//! noise so the root-signal-to-noise ratio matches `rsnr`, fits the full
//! pipeline once, and measures the MISE of the aggregate at each reported
//! temperature (plus the large-temperature ERM surrogate, the
//! cross-validated temperature, and the exact argmin member) via fresh
//! Monte Carlo design draws. Member predictions at the evaluation points
//! are computed once per replication and shared across every temperature
//! column.
//!
//! Replications run in parallel; each owns its RNG streams (see
//! [`crate::rng`]), and every reduction is carried out in a fixed index
//! order, so reports are byte-identical across runs and thread counts.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    erm_select, fit_pipeline, gibbs_weights, DirectionPolicy, FitConfig, SmoothnessSpec,
    TemperatureGrid, TemperatureSelection,
};
use crate::data::{dot, norm2, RegressionSample, SplitConfig};
use crate::error::{Error, Result};
use crate::lpe::{Truncation, DEFAULT_DEGENERACY_TOL};
use crate::report::{ExperimentReport, ReplicationRow};
use crate::rng::{replication_rng, CHANNEL_DATA, CHANNEL_SPLIT, CHANNEL_TEST};

// ============================================================================
// Link functions
// ============================================================================

/// Univariate link applied along the index direction.
#[derive(Clone)]
pub enum LinkFunction {
    /// `2 sin(1 + x) sin(2 pi x^2 + 1)`
    Hardsine,
    /// `4 (x + 1) sin(4 pi x^2)`
    Oscsine,
    /// Caller-provided link (library use only; not expressible in config
    /// files).
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl LinkFunction {
    pub fn eval(&self, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            LinkFunction::Hardsine => 2.0 * (1.0 + t).sin() * (2.0 * PI * t * t + 1.0).sin(),
            LinkFunction::Oscsine => 4.0 * (t + 1.0) * (4.0 * PI * t * t).sin(),
            LinkFunction::Custom { f, .. } => f(t),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LinkFunction::Hardsine => "hardsine",
            LinkFunction::Oscsine => "oscsine",
            LinkFunction::Custom { name, .. } => name,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "hardsine" => Ok(LinkFunction::Hardsine),
            "oscsine" => Ok(LinkFunction::Oscsine),
            other => Err(Error::InvalidConfig(format!(
                "unknown link function {other:?} (expected \"hardsine\" or \"oscsine\")"
            ))),
        }
    }
}

impl fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinkFunction({})", self.name())
    }
}

impl Serialize for LinkFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for LinkFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        LinkFunction::from_name(&name).map_err(serde::de::Error::custom)
    }
}

// ============================================================================
// Configuration
// ============================================================================

/// Configuration of one benchmark experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub dim: usize,
    /// Index direction; normalized on use, last coordinate must be >= 0.
    pub theta: Vec<f64>,
    pub link: LinkFunction,
    pub rsnr: f64,
    pub replications: usize,
    /// Fixed temperatures reported as table columns.
    pub report_temperatures: Vec<f64>,
    /// Large temperature whose aggregate serves as the ERM column.
    pub erm_temperature: f64,
    /// Cross-validation grid (the aggCVT column).
    pub cv_grid: TemperatureGrid,
    pub smoothness_values: Vec<f64>,
    pub radius_values: Vec<f64>,
    pub degree: usize,
    pub train_fraction: f64,
    pub truncation: Truncation,
    pub seed: u64,
    /// Fresh Monte Carlo design draws per MISE evaluation.
    pub test_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        preset_table1()
    }
}

/// Hardsine, `d = 2`, index `(1, 1)/sqrt(2)`.
pub fn preset_table1() -> ExperimentConfig {
    let s = 1.0 / 2f64.sqrt();
    base_config(100, 2, vec![s, s])
}

/// Hardsine, `d = 3`, index `(2, 1, 3)/sqrt(14)`.
pub fn preset_table2() -> ExperimentConfig {
    let s = 1.0 / 14f64.sqrt();
    base_config(100, 3, vec![2.0 * s, s, 3.0 * s])
}

/// Hardsine, `d = 4`, index `(1, -2, 0, 4)/sqrt(21)`.
pub fn preset_table3() -> ExperimentConfig {
    let s = 1.0 / 21f64.sqrt();
    base_config(100, 4, vec![s, -2.0 * s, 0.0, 4.0 * s])
}

pub fn preset_by_name(name: &str) -> Result<ExperimentConfig> {
    match name {
        "table1" => Ok(preset_table1()),
        "table2" => Ok(preset_table2()),
        "table3" => Ok(preset_table3()),
        other => Err(Error::InvalidConfig(format!(
            "unknown preset {other:?} (expected table1, table2 or table3)"
        ))),
    }
}

fn base_config(n: usize, dim: usize, theta: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        n,
        dim,
        theta,
        link: LinkFunction::Hardsine,
        rsnr: 5.0,
        replications: 100,
        report_temperatures: vec![0.1, 0.5, 0.7, 1.0, 1.5, 2.0],
        erm_temperature: 30.0,
        cv_grid: TemperatureGrid::default_cv(),
        smoothness_values: vec![1.0, 2.0, 3.0, 4.0],
        radius_values: vec![0.1, 0.5, 1.0, 1.5],
        degree: 5,
        train_fraction: 0.75,
        truncation: Truncation::DataDriven,
        seed: 0,
        test_points: 10_000,
    }
}

fn normalized_theta(theta: &[f64], dim: usize) -> Result<Vec<f64>> {
    if theta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: theta.len(),
        });
    }
    let norm = norm2(theta);
    if !(norm > 0.0) {
        return Err(Error::InvalidConfig("theta must be nonzero".into()));
    }
    let mut unit: Vec<f64> = theta.iter().map(|v| v / norm).collect();
    if unit[dim - 1] < -1e-12 {
        return Err(Error::InvalidConfig(
            "theta must lie on the half-sphere (last coordinate >= 0); use the mirrored direction"
                .into(),
        ));
    }
    if unit[dim - 1] < 0.0 {
        unit[dim - 1] = 0.0;
    }
    Ok(unit)
}

fn validate_config(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    if cfg.n < 8 {
        return Err(Error::InvalidConfig(format!("need n >= 8, got {}", cfg.n)));
    }
    if cfg.replications == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if cfg.test_points == 0 {
        return Err(Error::InvalidConfig("need at least one test point".into()));
    }
    if !(cfg.rsnr > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "rsnr must be positive, got {}",
            cfg.rsnr
        )));
    }
    if cfg.report_temperatures.is_empty() {
        return Err(Error::InvalidConfig("no report temperatures".into()));
    }
    cfg.cv_grid.validate()?;
    normalized_theta(&cfg.theta, cfg.dim)
}

// ============================================================================
// Data generation and MISE
// ============================================================================

/// The quantities a simulated dataset was generated from.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub theta: Vec<f64>,
    pub link: LinkFunction,
    pub sigma: f64,
}

impl TruthRecord {
    /// The noiseless regression function `f(theta . x)`.
    pub fn regression(&self, x: &[f64]) -> f64 {
        self.link.eval(dot(&self.theta, x))
    }
}

/// Draws `n` design points uniformly on `[-1,1]^d`, calibrates the noise
/// level so that `sigma^2 = sum_i f(theta.x_i)^2 / (n rsnr)`, and returns
/// the noisy sample together with the generating truth.
pub fn gen_dataset(
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(RegressionSample, TruthRecord)> {
    let theta = normalized_theta(&cfg.theta, cfg.dim)?;
    if !(cfg.rsnr > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "rsnr must be positive, got {}",
            cfg.rsnr
        )));
    }
    let xs: Vec<Vec<f64>> = (0..cfg.n)
        .map(|_| (0..cfg.dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let signal: Vec<f64> = xs.iter().map(|x| cfg.link.eval(dot(&theta, x))).collect();
    let energy: f64 = signal.iter().map(|g| g * g).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let sigma = (energy / (cfg.n as f64 * cfg.rsnr)).sqrt();
    let ys: Vec<f64> = signal
        .iter()
        .map(|&g| g + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let sample = RegressionSample::new(xs, ys)?;
    Ok((
        sample,
        TruthRecord {
            theta,
            link: cfg.link.clone(),
            sigma,
        },
    ))
}

/// A sampler drawing uniformly on `[-1,1]^dim`.
pub fn uniform_design(dim: usize) -> impl FnMut(&mut ChaCha8Rng) -> Vec<f64> {
    move |rng| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Monte Carlo estimate of the squared `L2(P_X)` distance between a
/// predictor and the noiseless truth, over `n_points` fresh design draws.
pub fn mise<P, S>(
    predictor: P,
    truth: &TruthRecord,
    mut design_sampler: S,
    n_points: usize,
    rng: &mut ChaCha8Rng,
) -> f64
where
    P: Fn(&[f64]) -> f64,
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    debug_assert!(n_points >= 1);
    let mut total = 0.0;
    for _ in 0..n_points {
        let x = design_sampler(rng);
        let e = predictor(&x) - truth.regression(&x);
        total += e * e;
    }
    total / n_points as f64
}

fn mean_squared_error(preds: &[f64], truths: &[f64]) -> f64 {
    debug_assert_eq!(preds.len(), truths.len());
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        let e = p - t;
        total += e * e;
    }
    total / preds.len() as f64
}

// ============================================================================
// The replication harness
// ============================================================================

fn format_temperature(t: f64) -> String {
    let tenths = t * 10.0;
    if (tenths - tenths.round()).abs() < 1e-9 {
        format!("{t:.1}")
    } else {
        format!("{t}")
    }
}

/// Column labels in report order: the fixed temperatures, the
/// large-temperature ERM surrogate, the cross-validated aggregate, and the
/// exact argmin member.
pub fn column_labels(cfg: &ExperimentConfig) -> Vec<String> {
    let mut columns: Vec<String> = cfg
        .report_temperatures
        .iter()
        .map(|&t| format!("T={}", format_temperature(t)))
        .collect();
    columns.push("ERM".to_string());
    columns.push("aggCVT".to_string());
    columns.push("ERM_argmin".to_string());
    columns
}

fn aggregate_mise(
    risks: &[f64],
    temperature: f64,
    member_preds: &[Vec<f64>],
    truth_vals: &[f64],
) -> Result<f64> {
    let weights = gibbs_weights(risks, temperature)?;
    let mut total = 0.0;
    for (k, &truth) in truth_vals.iter().enumerate() {
        let mut pred = 0.0;
        for (member, w) in member_preds.iter().zip(&weights) {
            pred += w * member[k];
        }
        let e = pred - truth;
        total += e * e;
    }
    Ok(total / truth_vals.len() as f64)
}

fn fit_config_for(cfg: &ExperimentConfig, sigma: f64, split_seed: u64) -> FitConfig {
    FitConfig {
        split: SplitConfig::fraction(cfg.train_fraction, split_seed),
        smoothness: SmoothnessSpec::Explicit(cfg.smoothness_values.clone()),
        radii: cfg.radius_values.clone(),
        degree: cfg.degree,
        noise_bound: sigma,
        truncation: cfg.truncation,
        degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        temperature: TemperatureSelection::Fixed(1.0),
        directions: DirectionPolicy::Preselect,
        lattice_s_min: None,
    }
}

fn try_replication(cfg: &ExperimentConfig, rep: usize) -> Result<(Vec<f64>, f64, f64)> {
    let mut data_rng = replication_rng(cfg.seed, rep, CHANNEL_DATA);
    let (sample, truth) = gen_dataset(cfg, &mut data_rng)?;
    let split_seed = replication_rng(cfg.seed, rep, CHANNEL_SPLIT).next_u64();
    let pipeline = fit_pipeline(&sample, &fit_config_for(cfg, truth.sigma, split_seed))?;

    let mut test_rng = replication_rng(cfg.seed, rep, CHANNEL_TEST);
    let mut sampler = uniform_design(cfg.dim);
    let test_xs: Vec<Vec<f64>> = (0..cfg.test_points).map(|_| sampler(&mut test_rng)).collect();
    let truth_vals: Vec<f64> = test_xs.iter().map(|x| truth.regression(x)).collect();

    let member_preds: Vec<Vec<f64>> = pipeline
        .members()
        .par_iter()
        .map(|m| test_xs.iter().map(|x| m.predict(x)).collect())
        .collect();

    let risks = pipeline.risks();
    let mut values = Vec::with_capacity(cfg.report_temperatures.len() + 3);
    for &t in &cfg.report_temperatures {
        values.push(aggregate_mise(risks, t, &member_preds, &truth_vals)?);
    }
    values.push(aggregate_mise(
        risks,
        cfg.erm_temperature,
        &member_preds,
        &truth_vals,
    )?);
    let t_hat = pipeline.cv_temperature(&sample, &cfg.cv_grid)?;
    values.push(aggregate_mise(risks, t_hat, &member_preds, &truth_vals)?);
    values.push(mean_squared_error(
        &member_preds[erm_select(risks)],
        &truth_vals,
    ));
    Ok((values, t_hat, pipeline.truncation_level()))
}

fn run_replication(cfg: &ExperimentConfig, rep: usize) -> ReplicationRow {
    match try_replication(cfg, rep) {
        Ok((values, t_hat, q)) => ReplicationRow {
            replication: rep,
            values,
            cv_temperature: Some(t_hat),
            truncation_q: Some(q),
            error: None,
        },
        Err(e) => ReplicationRow {
            replication: rep,
            values: Vec::new(),
            cv_temperature: None,
            truncation_q: None,
            error: Some(e.to_string()),
        },
    }
}

fn summarize(rows: &[ReplicationRow], n_cols: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let ok: Vec<&ReplicationRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let mut means = vec![None; n_cols];
    let mut sds = vec![None; n_cols];
    if ok.is_empty() {
        return (means, sds);
    }
    let count = ok.len() as f64;
    for col in 0..n_cols {
        let mut total = 0.0;
        for row in &ok {
            total += row.values[col];
        }
        let mean = total / count;
        means[col] = Some(mean);
        if ok.len() >= 2 {
            let mut ss = 0.0;
            for row in &ok {
                let e = row.values[col] - mean;
                ss += e * e;
            }
            sds[col] = Some((ss / (count - 1.0)).sqrt());
        }
    }
    (means, sds)
}

/// Runs every replication (in parallel, each on its own seeded streams)
/// and assembles the MISE-versus-temperature report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    validate_config(cfg)?;
    let columns = column_labels(cfg);
    let rows: Vec<ReplicationRow> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect();
    let (means, sds) = summarize(&rows, columns.len());
    Ok(ExperimentReport {
        config: cfg.clone(),
        columns,
        rows,
        means,
        sds,
        cv_mode: cfg.cv_grid.cv_mode,
        versions: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
