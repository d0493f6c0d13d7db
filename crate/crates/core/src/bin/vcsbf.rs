use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vcsbf::bandwidth::{select_bandwidths, SelectionConfig, DEFAULT_PILOT_DEGREE};
use vcsbf::sbf::{fit_sbf, fit_sbf_local_linear, EstimatorKind, SbfConfig};
use vcsbf::sieve::fit_spline;
use vcsbf::sim::{fit_oracle_b, run_experiment, BandwidthMode, ExperimentConfig, SimModel, TruthSpec};
use vcsbf::{build_group_view, check_design, Dataset, Error, Grid, KernelSpec, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "vcsbf", version, about = "Smooth backfitting for generalized varying coefficient models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated simulation on one of the two built-in designs.
    Simulate(SimulateArgs),
    /// Fit one dataset.
    Fit(FitArgs),
    /// Plug-in bandwidth selection.
    Bandwidth(BandwidthArgs),
    /// Smallest local design eigenvalues per axis and grid point.
    CheckDesign(CheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "a")]
    model: String,
    /// Comma-separated list of sbf, ll, spline, oracle.
    #[arg(long, default_value = "sbf")]
    estimator: String,
    /// Comma-separated sample sizes.
    #[arg(long, default_value = "500")]
    n: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `paper`, `auto` (plug-in per dataset) or `h1,h2`.
    #[arg(long, default_value = "paper")]
    bandwidths: String,
    #[arg(long, default_value_t = 1)]
    knots: usize,
    #[arg(long, default_value_t = 101)]
    grid_size: usize,
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// CSV with header `y,x1,...,xD`.
    #[arg(long)]
    data: PathBuf,
    /// Model TOML file, or one of the presets `a`, `b`, `b-oracle`.
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "sbf")]
    estimator: String,
    /// `auto` or comma-separated, one per smoothing axis.
    #[arg(long, default_value = "auto")]
    bandwidths: String,
    #[arg(long, default_value_t = 1)]
    knots: usize,
    #[arg(long, default_value_t = 101)]
    grid_size: usize,
    #[arg(long, default_value = "fit-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BandwidthArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_PILOT_DEGREE)]
    pilot_degree: u32,
    #[arg(long, default_value = "bandwidth-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One value for all axes, or one per axis.
    #[arg(long)]
    bandwidths: String,
    #[arg(long, default_value_t = 101)]
    grid_size: usize,
    #[arg(long, default_value_t = vcsbf::model::DESIGN_EIGEN_THRESHOLD)]
    threshold: f64,
    /// Optional CSV of all eigenvalues.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse {what} `{v}`")))
        })
        .collect()
}

fn load_model(name: &str) -> Result<ModelSpec> {
    match name {
        "a" => Ok(TruthSpec::model_a().spec),
        "b" => Ok(TruthSpec::model_b().spec),
        "b-oracle" => Ok(TruthSpec::model_b_oracle().spec),
        path => ModelSpec::from_file(path),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model = SimModel::parse(&args.model)?;
    let estimators = args
        .estimator
        .split(',')
        .map(|e| EstimatorKind::parse(e.trim()))
        .collect::<Result<Vec<_>>>()?;
    let mut config = ExperimentConfig::new(model, estimators, parse_list(&args.n, "sample size")?, args.reps);
    config.base_seed = args.seed;
    config.knots = args.knots;
    config.sbf.grid_size = args.grid_size;
    config.bandwidths = match args.bandwidths.as_str() {
        "paper" => BandwidthMode::Paper,
        "auto" => BandwidthMode::Plugin(SelectionConfig::default()),
        list => BandwidthMode::Fixed(parse_list(list, "bandwidth")?),
    };
    let report = run_experiment(&config)?;
    report.write(&args.out)?;
    print!("{}", report.metrics_csv());
    for cell in report.cells.iter().filter(|c| !c.is_complete()) {
        eprintln!(
            "cell {} n={} incomplete: {} failed replications",
            cell.kind.name(),
            cell.n,
            cell.failures.len()
        );
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let spec = load_model(&args.model.model)?;
    let view = build_group_view(&spec)?;
    let data = Dataset::read_csv(&args.model.data)?;
    let kind = EstimatorKind::parse(&args.estimator)?;
    let config = SbfConfig {
        grid_size: args.grid_size,
        ..SbfConfig::default()
    };
    let bandwidths = || -> Result<Vec<f64>> {
        if args.bandwidths == "auto" {
            let sel = select_bandwidths(&data, &spec, &view, &SelectionConfig::default())?;
            Ok(sel.bandwidths.iter().map(|h| h.min(0.5)).collect())
        } else {
            parse_list(&args.bandwidths, "bandwidth")
        }
    };
    let result = match kind {
        EstimatorKind::Spline => fit_spline(&data, &spec, &view, args.knots, args.grid_size)?,
        EstimatorKind::Nw => fit_sbf(&data, &spec, &view, &KernelSpec::epanechnikov(bandwidths()?)?, &config)?,
        EstimatorKind::Ll => {
            fit_sbf_local_linear(&data, &spec, &view, &KernelSpec::epanechnikov(bandwidths()?)?, &config)?
        }
        EstimatorKind::Oracle => {
            let h = parse_list(&args.bandwidths, "bandwidth")?;
            fit_oracle_b(&data, &KernelSpec::epanechnikov(h)?, &config)?
        }
    };
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("components.csv"), result.components_csv())?;
    fs::write(args.out.join("parametric.csv"), result.parametric_csv())?;
    fs::write(args.out.join("convergence.csv"), result.convergence_csv())?;
    println!(
        "{} fit: converged = {}, outer iterations = {}, bandwidths = {:?}",
        kind.name(),
        result.converged,
        result.outer_iterations(),
        result.bandwidths
    );
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn bandwidth(args: BandwidthArgs) -> Result<()> {
    let spec = load_model(&args.model.model)?;
    let view = build_group_view(&spec)?;
    let data = Dataset::read_csv(&args.model.data)?;
    let config = SelectionConfig {
        pilot_degree: args.pilot_degree,
        ..SelectionConfig::default()
    };
    let sel = select_bandwidths(&data, &spec, &view, &config)?;
    fs::create_dir_all(&args.out)?;
    let mut chosen = String::from("axis,covariate,c,h,at_upper_bound\n");
    for k in 0..view.n_axes() {
        chosen.push_str(&format!(
            "{},x{},{},{},{}\n",
            k + 1,
            view.axis(k) + 1,
            sel.constants[k],
            sel.bandwidths[k],
            sel.at_upper_bound[k]
        ));
    }
    fs::write(args.out.join("bandwidths.csv"), &chosen)?;
    let mut surface = String::from("sweep,axis");
    for k in 0..view.n_axes() {
        surface.push_str(&format!(",c{}", k + 1));
    }
    surface.push_str(",objective\n");
    for pt in &sel.surface {
        surface.push_str(&format!("{},{}", pt.sweep + 1, pt.axis + 1));
        for c in &pt.c {
            surface.push_str(&format!(",{c}"));
        }
        surface.push_str(&format!(",{}\n", pt.objective));
    }
    fs::write(args.out.join("surface.csv"), surface)?;
    print!("{chosen}");
    Ok(())
}

fn check(args: CheckArgs) -> Result<bool> {
    let spec = load_model(&args.model.model)?;
    let view = build_group_view(&spec)?;
    let data = Dataset::read_csv(&args.model.data)?;
    let h: Vec<f64> = parse_list(&args.bandwidths, "bandwidth")?;
    let grid = Grid::uniform(args.grid_size)?;
    let report = check_design(&data, &spec, &view, &h, &grid, args.threshold)?;
    if let Some(path) = &args.out {
        let mut s = String::from("axis,z,min_eigenvalue\n");
        for (k, row) in report.min_eigenvalues.iter().enumerate() {
            for (g, v) in row.iter().enumerate() {
                let v = v.map_or_else(String::new, |v| v.to_string());
                s.push_str(&format!("{},{},{v}\n", k + 1, grid.points()[g]));
            }
        }
        fs::write(path, s)?;
    }
    println!("smallest eigenvalue: {:?}", report.minimum());
    for (k, g) in report.flagged() {
        println!("axis {} z = {}: below {}", k + 1, grid.points()[g], args.threshold);
    }
    for (k, g) in report.undefined() {
        println!("axis {} z = {}: no observations in the kernel support", k + 1, grid.points()[g]);
    }
    println!("{}", if report.passes() { "design ok" } else { "design flagged" });
    Ok(report.passes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Bandwidth(a) => bandwidth(a).map(|_| true),
        Command::CheckDesign(a) => check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
