//! Replicated simulation runs and their report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::{compute_metrics, fit_oracle_b, generate, MetricTable, SimModel, TruthSpec};
use crate::bandwidth::{select_bandwidths, SelectionConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::build_group_view;
use crate::sbf::{fit_sbf, fit_sbf_local_linear, EstimatorKind, FitResult, SbfConfig};
use crate::sieve::fit_spline;

/// Reference bandwidths per axis for the two designs at `n = 500` and
/// `n = 1000`; other sample sizes rescale the nearest entry by `n^{-1/5}`.
pub fn paper_bandwidths(model: SimModel, n: usize) -> Vec<f64> {
    let table: [(usize, [f64; 2]); 2] = match model {
        SimModel::A => [(500, [0.4328, 0.2789]), (1000, [0.3768, 0.2428])],
        SimModel::B => [(500, [0.2405, 0.2469]), (1000, [0.2093, 0.2149])],
    };
    let (n0, h) = if n >= 750 { table[1] } else { table[0] };
    let scale = (n as f64 / n0 as f64).powf(-0.2);
    h.iter().map(|v| (v * scale).min(0.5)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthMode {
    /// The reference bandwidths of [`paper_bandwidths`].
    Paper,
    Fixed(Vec<f64>),
    /// Plug-in selection on every simulated dataset.
    Plugin(SelectionConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: SimModel,
    pub estimators: Vec<EstimatorKind>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    /// Replication `r` simulates with seed `base_seed + r`.
    pub base_seed: u64,
    pub bandwidths: BandwidthMode,
    pub sbf: SbfConfig,
    pub knots: usize,
}

impl ExperimentConfig {
    pub fn new(model: SimModel, estimators: Vec<EstimatorKind>, sample_sizes: Vec<usize>, replications: usize) -> Self {
        Self {
            model,
            estimators,
            sample_sizes,
            replications,
            base_seed: 0,
            bandwidths: BandwidthMode::Paper,
            sbf: SbfConfig::default(),
            knots: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.sample_sizes.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("empty experiment".into()));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        if self.estimators.contains(&EstimatorKind::Oracle) && self.model != SimModel::B {
            return Err(Error::Config("the oracle estimator exists for design b only".into()));
        }
        if let BandwidthMode::Fixed(h) = &self.bandwidths {
            if h.len() != 2 {
                return Err(Error::Config("two bandwidths required".into()));
            }
        }
        self.sbf.validate()
    }

    fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", self.model.name());
        let names: Vec<&str> = self.estimators.iter().map(|e| e.name()).collect();
        let _ = writeln!(s, "estimators = {}", names.join(","));
        let sizes: Vec<String> = self.sample_sizes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "sample_sizes = {}", sizes.join(","));
        let _ = writeln!(s, "replications = {}", self.replications);
        let _ = writeln!(s, "base_seed = {}", self.base_seed);
        let _ = writeln!(
            s,
            "seeds = {}..={}",
            self.base_seed,
            self.base_seed + self.replications as u64 - 1
        );
        let _ = writeln!(s, "rng = ChaCha20, one generator per replication seeded with base_seed + r");
        let bw = match &self.bandwidths {
            BandwidthMode::Paper => "paper".to_string(),
            BandwidthMode::Fixed(h) => format!("fixed {h:?}"),
            BandwidthMode::Plugin(c) => format!("plugin (pilot degree {})", c.pilot_degree),
        };
        let _ = writeln!(s, "bandwidths = {bw}");
        let _ = writeln!(s, "grid_size = {}", self.sbf.grid_size);
        let _ = writeln!(s, "outer_tol = {}", self.sbf.outer_tol);
        let _ = writeln!(s, "inner_tol = {}", self.sbf.inner.tol);
        let _ = writeln!(s, "max_outer = {}", self.sbf.max_outer);
        let _ = writeln!(s, "max_inner = {}", self.sbf.inner.max_sweeps);
        let _ = writeln!(s, "knots = {}", self.knots);
        s
    }
}

/// Outcome of one `(estimator, n)` cell.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub kind: EstimatorKind,
    pub n: usize,
    /// Successful fits, in replication order, with their replication index.
    pub fits: Vec<(usize, FitResult)>,
    pub failures: Vec<(usize, String)>,
    pub metrics: Option<MetricTable>,
    pub seconds: f64,
}

impl CellReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn outer_iterations(&self) -> Vec<usize> {
        self.fits.iter().map(|(_, f)| f.outer_iterations()).collect()
    }

    pub fn inner_sweeps(&self) -> Vec<usize> {
        self.fits.iter().flat_map(|(_, f)| f.inner_sweeps.iter().copied()).collect()
    }

    pub fn max_inner_ratio(&self) -> Option<f64> {
        self.fits
            .iter()
            .flat_map(|(_, f)| f.inner_ratios.iter().flatten().copied())
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
}

fn median(mut v: Vec<usize>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let m = v.len();
    Some(if m % 2 == 1 {
        v[m / 2] as f64
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2]) as f64
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl ExperimentReport {
    pub fn cell(&self, kind: EstimatorKind, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.kind == kind && c.n == n)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("model,estimator,n,replications,component,imse,isb,iv\n");
        for cell in &self.cells {
            let Some(table) = &cell.metrics else { continue };
            for row in &table.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    self.config.model.name(),
                    cell.kind.name(),
                    cell.n,
                    table.replications,
                    row.label,
                    row.imse,
                    row.isb,
                    fmt_opt(row.iv)
                );
            }
        }
        s
    }

    pub fn convergence_csv(&self) -> String {
        let mut s = String::from(
            "model,estimator,n,replication,seed,status,converged,outer_iterations,median_inner_sweeps,max_inner_ratio,final_criterion,final_residual,bandwidths\n",
        );
        for cell in &self.cells {
            let mut rows: Vec<(usize, String)> = Vec::new();
            for (r, fit) in &cell.fits {
                let ratio = fit.inner_ratios.iter().flatten().copied().reduce(f64::max);
                let bw: Vec<String> = fit.bandwidths.iter().map(|h| h.to_string()).collect();
                rows.push((
                    *r,
                    format!(
                        "ok,{},{},{},{},{},{},{}",
                        fit.converged,
                        fit.outer_iterations(),
                        fmt_opt(median(fit.inner_sweeps.clone())),
                        fmt_opt(ratio),
                        fmt_opt(fit.final_criterion()),
                        fmt_opt(fit.final_residual()),
                        bw.join(" ")
                    ),
                ));
            }
            for (r, err) in &cell.failures {
                rows.push((*r, format!("error: {},,,,,,,", err.replace([',', '\n'], ";"))));
            }
            rows.sort_by_key(|(r, _)| *r);
            for (r, body) in rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    self.config.model.name(),
                    cell.kind.name(),
                    cell.n,
                    r,
                    self.config.base_seed + r as u64,
                    body
                );
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "model,estimator,n,fits,failures,complete,median_outer_iterations,median_inner_sweeps,max_inner_ratio\n",
        );
        for cell in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.config.model.name(),
                cell.kind.name(),
                cell.n,
                cell.fits.len(),
                cell.failures.len(),
                cell.is_complete(),
                fmt_opt(median(cell.outer_iterations())),
                fmt_opt(median(cell.inner_sweeps())),
                fmt_opt(cell.max_inner_ratio())
            );
        }
        s
    }

    pub fn curves_csv(table: &MetricTable) -> String {
        let mut s = String::from("z");
        for row in &table.rows {
            let _ = write!(s, ",{0}_mean,{0}_truth", row.label);
        }
        s.push('\n');
        for (g, z) in table.grid.points().iter().enumerate() {
            let _ = write!(s, "{z}");
            for (mean, truth) in table.mean_curves.iter().zip(&table.truth_curves) {
                let _ = write!(s, ",{},{}", mean[g], truth[g]);
            }
            s.push('\n');
        }
        s
    }

    pub fn manifest(&self) -> String {
        let mut s = format!("vcsbf {}\n", env!("CARGO_PKG_VERSION"));
        s.push_str(&self.config.describe());
        for cell in &self.cells {
            let _ = writeln!(
                s,
                "cell {} n={}: {} fits, {} failures{}",
                cell.kind.name(),
                cell.n,
                cell.fits.len(),
                cell.failures.len(),
                if cell.is_complete() { "" } else { " (incomplete)" }
            );
        }
        s
    }

    /// Writes `metrics.csv`, `convergence.csv`, `summary.csv`,
    /// `curves_<estimator>_<n>.csv` and `manifest.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("convergence.csv"), self.convergence_csv())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        for cell in &self.cells {
            if let Some(table) = &cell.metrics {
                let name = format!("curves_{}_{}.csv", cell.kind.name(), cell.n);
                fs::write(dir.join(name), Self::curves_csv(table))?;
            }
        }
        fs::write(dir.join("manifest.txt"), self.manifest())?;
        Ok(())
    }
}

fn fit_one(config: &ExperimentConfig, truth: &TruthSpec, kind: EstimatorKind, n: usize, r: usize) -> Result<FitResult> {
    let data = generate(truth, n, config.base_seed + r as u64);
    let view = build_group_view(&truth.spec)?;
    let h = match &config.bandwidths {
        BandwidthMode::Paper => paper_bandwidths(config.model, n),
        BandwidthMode::Fixed(h) => h.clone(),
        BandwidthMode::Plugin(sel) => select_bandwidths(&data, &truth.spec, &view, sel)?
            .bandwidths
            .iter()
            .map(|h| h.min(0.5))
            .collect(),
    };
    let kernel = KernelSpec::epanechnikov(h)?;
    match kind {
        EstimatorKind::Nw => fit_sbf(&data, &truth.spec, &view, &kernel, &config.sbf),
        EstimatorKind::Ll => fit_sbf_local_linear(&data, &truth.spec, &view, &kernel, &config.sbf),
        EstimatorKind::Spline => fit_spline(&data, &truth.spec, &view, config.knots, config.sbf.grid_size),
        EstimatorKind::Oracle => fit_oracle_b(&data, &kernel, &config.sbf),
    }
}

/// Runs every `(estimator, n)` cell. Replications run in parallel and are
/// collected in replication order; a failed replication is recorded and the
/// cell marked incomplete.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let truth = TruthSpec::for_model(config.model);
    let mut cells = Vec::new();
    for &n in &config.sample_sizes {
        for &kind in &config.estimators {
            let start = Instant::now();
            let outcomes: Vec<Result<FitResult>> = (0..config.replications)
                .into_par_iter()
                .map(|r| fit_one(config, &truth, kind, n, r))
                .collect();
            let mut fits = Vec::new();
            let mut failures = Vec::new();
            for (r, outcome) in outcomes.into_iter().enumerate() {
                match outcome {
                    Ok(fit) => fits.push((r, fit)),
                    Err(e) => failures.push((r, e.to_string())),
                }
            }
            let metrics = if fits.is_empty() {
                None
            } else {
                let only: Vec<FitResult> = fits.iter().map(|(_, f)| f.clone()).collect();
                Some(compute_metrics(&only, &truth, n)?)
            };
            cells.push(CellReport {
                kind,
                n,
                fits,
                failures,
                metrics,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        cells,
    })
}
