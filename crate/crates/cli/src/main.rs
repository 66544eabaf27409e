//! Command-line harness for single-index aggregation.
//!
//! Subcommands:
//! * `lattice`  — dump the half-sphere direction lattice as CSV;
//! * `fit`      — fit the aggregated estimator to a CSV dataset;
//! * `simulate` — run one MISE-versus-temperature benchmark;
//! * `bench`    — run the benchmark sweep over n in {100, 200, 400}.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use siagg::aggregation::{
    fit_pipeline, CvMode, FitConfig, SmoothnessSpec, TemperatureGrid, TemperatureSelection,
};
use siagg::data::{RegressionSample, SplitConfig};
use siagg::lattice::build_lattice;
use siagg::lpe::Truncation;
use siagg::report::{emit_report, fmt_float};
use siagg::simbench::{preset_by_name, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "siagg",
    about = "Single-index regression by Gibbs aggregation of local polynomial estimators",
    version
)]
struct Cli {
    /// Number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the half-sphere direction lattice, one point per row.
    Lattice(LatticeArgs),
    /// Fit the aggregated estimator to a CSV dataset (columns x_1..x_d,y).
    Fit(FitArgs),
    /// Run one benchmark experiment and write its report files.
    Simulate(SimulateArgs),
    /// Run the benchmark sweep over n in {100, 200, 400}.
    Bench(BenchArgs),
}

#[derive(Args)]
struct LatticeArgs {
    /// Ambient dimension (>= 2).
    #[arg(long)]
    dim: usize,
    /// Discretization step (0 < step <= 2).
    #[arg(long)]
    step: f64,
    /// Write the points to this CSV file instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Print how the angular steps are derived, then exit.
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with header x_1,...,x_d,y.
    #[arg(long)]
    input: PathBuf,
    /// Ambient dimension.
    #[arg(long)]
    dim: usize,
    /// Fixed Gibbs temperature.
    #[arg(long, conflicts_with = "cv")]
    temperature: Option<f64>,
    /// Cross-validate the temperature over {0.1, 0.2, ..., 5.0}.
    #[arg(long)]
    cv: bool,
    /// Known noise standard-deviation bound (overrides the config file).
    #[arg(long)]
    noise_bound: Option<f64>,
    /// TOML file with fit settings (see README).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write ensemble.csv and metadata.json here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Named preset: table1 (d=2), table2 (d=3) or table3 (d=4).
    #[arg(long, default_value = "table1")]
    preset: String,
    /// TOML file overriding the preset (see README).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Signal-energy to noise-variance ratio used by the calibration.
    #[arg(long)]
    rsnr: Option<f64>,
    /// Fresh Monte Carlo design draws per MISE evaluation.
    #[arg(long)]
    test_points: Option<usize>,
    /// Leave-one-out flavor for the temperature cross-validation.
    #[arg(long, value_parser = parse_cv_mode)]
    cv_mode: Option<CvMode>,
    /// Output directory for the report files.
    #[arg(long, default_value = "siagg-report")]
    out: PathBuf,
    /// Overwrite existing report files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Named preset: table1, table2 or table3.
    #[arg(long, default_value = "table1")]
    preset: String,
    /// Replications per sample size.
    #[arg(long)]
    reps: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Signal-energy to noise-variance ratio used by the calibration.
    #[arg(long)]
    rsnr: Option<f64>,
    /// Fresh Monte Carlo design draws per MISE evaluation.
    #[arg(long)]
    test_points: Option<usize>,
    /// Output directory; one subdirectory per sample size.
    #[arg(long, default_value = "siagg-bench")]
    out: PathBuf,
    /// Overwrite existing report files.
    #[arg(long)]
    force: bool,
}

fn parse_cv_mode(s: &str) -> Result<CvMode, String> {
    match s {
        "exact" => Ok(CvMode::ExactLoo),
        "weights-only" => Ok(CvMode::WeightsOnlyLoo),
        other => Err(format!(
            "unknown cv mode {other:?} (expected \"exact\" or \"weights-only\")"
        )),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("building the thread pool")?;
    }
    match cli.command {
        Command::Lattice(args) => run_lattice(args),
        Command::Fit(args) => run_fit(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Bench(args) => run_bench(args),
    }
}

// ============================================================================
// lattice
// ============================================================================

const LATTICE_EXPLANATION: &str = "\
The lattice enumerates spherical angles (phi_{d-1}, ..., phi_1), each in
[0, pi], and maps them to unit vectors whose last coordinate sin(phi_{d-1})
is nonnegative (the half-sphere).

  * The outermost angle runs over multiples of arccos(1 - step^2/2): two
    points one angular increment apart on the outer circle then sit at a
    Euclidean (chord) distance of exactly `step`.
  * At fixed outer angles, the remaining coordinates trace a circle whose
    radius is the product of the outer cosines. Each inner angle therefore
    runs over multiples of step / max(product of |cos|, step/pi): dividing
    the chord target by the slice radius keeps neighbors about `step`
    apart, and the step/pi floor caps the angular increment at pi so
    near-polar slices still emit points.
  * Points closer than step/8 to an already-emitted point are dropped;
    this removes the coincident points that polar slices generate.";

fn run_lattice(args: LatticeArgs) -> Result<()> {
    if args.explain {
        println!("{LATTICE_EXPLANATION}");
        return Ok(());
    }
    let lattice = build_lattice(args.dim, args.step)?;
    let mut out = String::new();
    for k in 1..=args.dim {
        if k > 1 {
            out.push(',');
        }
        out.push_str(&format!("v_{k}"));
    }
    out.push('\n');
    for point in lattice.points() {
        for (k, value) in point.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&fmt_float(*value));
        }
        out.push('\n');
    }
    match args.csv {
        Some(path) => {
            fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} points to {}", lattice.len(), path.display());
        }
        None => print!("{out}"),
    }
    Ok(())
}

// ============================================================================
// fit
// ============================================================================

/// TOML schema for `fit --config`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitFileConfig {
    noise_bound: Option<f64>,
    degree: Option<usize>,
    smoothness: Option<Vec<f64>>,
    radii: Option<Vec<f64>>,
    train_fraction: Option<f64>,
    seed: Option<u64>,
    truncation: Option<Truncation>,
    cv_temperatures: Option<Vec<f64>>,
    cv_mode: Option<CvMode>,
}

fn run_fit(args: FitArgs) -> Result<()> {
    let file_cfg: FitFileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FitFileConfig {
            noise_bound: None,
            degree: None,
            smoothness: None,
            radii: None,
            train_fraction: None,
            seed: None,
            truncation: None,
            cv_temperatures: None,
            cv_mode: None,
        },
    };
    let noise_bound = args
        .noise_bound
        .or(file_cfg.noise_bound)
        .context("a noise bound is required (--noise-bound or config key noise_bound)")?;

    let mut grid = TemperatureGrid::default_cv();
    if let Some(values) = file_cfg.cv_temperatures {
        grid.values = values;
    }
    if let Some(mode) = file_cfg.cv_mode {
        grid.cv_mode = mode;
    }
    let temperature = match (args.temperature, args.cv) {
        (Some(t), false) => TemperatureSelection::Fixed(t),
        (None, true) => TemperatureSelection::CrossValidated(grid),
        (None, false) => bail!("choose a temperature: --temperature T or --cv"),
        (Some(_), true) => unreachable!("clap rejects the combination"),
    };

    let mut cfg = FitConfig::new(noise_bound, temperature);
    if let Some(degree) = file_cfg.degree {
        cfg.degree = degree;
    }
    if let Some(smoothness) = file_cfg.smoothness {
        cfg.smoothness = SmoothnessSpec::Explicit(smoothness);
    }
    if let Some(radii) = file_cfg.radii {
        cfg.radii = radii;
    }
    if let Some(truncation) = file_cfg.truncation {
        cfg.truncation = truncation;
    }
    cfg.split = SplitConfig::fraction(
        file_cfg.train_fraction.unwrap_or(0.75),
        file_cfg.seed.unwrap_or(0),
    );

    let sample = RegressionSample::from_csv_path(&args.input, args.dim)?;
    let pipeline = fit_pipeline(&sample, &cfg)?;
    let chosen_t = match &cfg.temperature {
        TemperatureSelection::Fixed(t) => *t,
        TemperatureSelection::CrossValidated(grid) => pipeline.cv_temperature(&sample, grid)?,
    };
    let ensemble = pipeline.ensemble(chosen_t)?;

    // ensemble summary CSV
    let mut csv = String::new();
    for k in 1..=args.dim {
        csv.push_str(&format!("dir_{k},"));
    }
    csv.push_str("smoothness,radius,risk,weight\n");
    for (member, (&risk, &weight)) in ensemble
        .members()
        .iter()
        .zip(ensemble.risks().iter().zip(ensemble.weights()))
    {
        for value in member.direction() {
            csv.push_str(&fmt_float(*value));
            csv.push(',');
        }
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_float(member.smoothness()),
            fmt_float(member.radius()),
            fmt_float(risk),
            fmt_float(weight)
        ));
    }

    let top = ensemble.top_weight_index();
    let metadata = serde_json::json!({
        "n": sample.len(),
        "dim": args.dim,
        "members": ensemble.members().len(),
        "chosen_temperature": chosen_t,
        "truncation_q": pipeline.truncation_level(),
        "index_estimate": ensemble.members()[top].direction(),
        "top_weight": ensemble.weights()[top],
        "train_size": pipeline.train_indices().len(),
        "learn_size": pipeline.learn_indices().len(),
    });
    let metadata_line = serde_json::to_string(&metadata)?;

    match args.out {
        Some(dir) => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let csv_path = dir.join("ensemble.csv");
            let meta_path = dir.join("metadata.json");
            for path in [&csv_path, &meta_path] {
                if path.exists() && !args.force {
                    bail!("{} exists (pass --force to overwrite)", path.display());
                }
            }
            fs::write(&csv_path, csv)
                .with_context(|| format!("writing {}", csv_path.display()))?;
            fs::write(&meta_path, metadata_line + "\n")
                .with_context(|| format!("writing {}", meta_path.display()))?;
            eprintln!("wrote {} and {}", csv_path.display(), meta_path.display());
        }
        None => {
            print!("{csv}");
            println!("{metadata_line}");
        }
    }
    Ok(())
}

// ============================================================================
// simulate / bench
// ============================================================================

fn load_experiment_config(
    preset: &str,
    config: Option<&Path>,
) -> Result<ExperimentConfig> {
    let mut cfg = preset_by_name(preset)?;
    if let Some(path) = config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        // the file overrides preset fields; unknown keys are rejected
        let table: toml::Table =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut value = toml::Table::try_from(&cfg).context("serializing the preset")?;
        for (key, item) in table {
            if !value.contains_key(&key) {
                bail!("{}: unknown config key {key:?}", path.display());
            }
            value.insert(key, item);
        }
        cfg = toml::Value::Table(value)
            .try_into()
            .with_context(|| format!("interpreting {}", path.display()))?;
    }
    Ok(cfg)
}

fn apply_simulate_overrides(cfg: &mut ExperimentConfig, args: &SimulateArgs) {
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(reps) = args.reps {
        cfg.replications = reps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rsnr) = args.rsnr {
        cfg.rsnr = rsnr;
    }
    if let Some(test_points) = args.test_points {
        cfg.test_points = test_points;
    }
    if let Some(mode) = args.cv_mode {
        cfg.cv_grid.cv_mode = mode;
    }
}

fn print_summary(report: &siagg::report::ExperimentReport) {
    let fmt_cell = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    };
    println!(
        "n = {}, d = {}, link = {}, {} replications ({} failed), {:.1}s",
        report.config.n,
        report.config.dim,
        report.config.link.name(),
        report.rows.len(),
        report.rows.iter().filter(|r| r.error.is_some()).count(),
        report.wall_clock_secs
    );
    let mut header = String::from("      ");
    let mut means = String::from("mean  ");
    let mut sds = String::from("sd    ");
    for (c, (&m, &s)) in report
        .columns
        .iter()
        .zip(report.means.iter().zip(&report.sds))
    {
        header.push_str(&format!("{c:>11}"));
        means.push_str(&format!("{:>11}", fmt_cell(m)));
        sds.push_str(&format!("{:>11}", fmt_cell(s)));
    }
    println!("{header}\n{means}\n{sds}");
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_experiment_config(&args.preset, args.config.as_deref())?;
    apply_simulate_overrides(&mut cfg, &args);
    let report = run_experiment(&cfg)?;
    print_summary(&report);
    let written = emit_report(&report, &args.out, args.force)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    for n in [100usize, 200, 400] {
        let mut cfg = preset_by_name(&args.preset)?;
        cfg.n = n;
        if let Some(reps) = args.reps {
            cfg.replications = reps;
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(rsnr) = args.rsnr {
            cfg.rsnr = rsnr;
        }
        if let Some(test_points) = args.test_points {
            cfg.test_points = test_points;
        }
        let report = run_experiment(&cfg)?;
        print_summary(&report);
        let dir = args.out.join(format!("n{n}"));
        let written = emit_report(&report, &dir, args.force)?;
        for path in written {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}
