//! Smooth backfitting: outer Newton-Raphson steps around inner backfitting
//! sweeps, for Nadaraya-Watson and local-linear smoothing.

pub mod inner;
pub mod smoother;

use crate::error::{Error, Result};
use crate::family::Family;
use crate::kernel::{Grid, KernelSpec, DEFAULT_GRID_SIZE};
use crate::model::{validate_dataset, Dataset, GroupView, ModelSpec};
use crate::tuple::{FunctionTuple, Normalizer, ParametricPart};

pub use inner::{inner_solve, InnerConfig, InnerOutcome, InnerStart, PreparedSystem};
pub use smoother::{compute_f, compute_w, SmootherContext, SmootherMatrices};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Nw,
    Ll,
    Spline,
    Oracle,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nw" | "sbf" => Ok(Self::Nw),
            "ll" => Ok(Self::Ll),
            "spline" | "spl" => Ok(Self::Spline),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Nw => "nw",
            Self::Ll => "ll",
            Self::Spline => "spline",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbfConfig {
    pub grid_size: usize,
    /// Bound on the squared norm of the normalized outer update.
    pub outer_tol: f64,
    /// Bound on `max |F^|` at the returned tuple; ten times `outer_tol` when unset.
    pub residual_tol: Option<f64>,
    pub max_outer: usize,
    pub inner: InnerConfig,
    pub inner_start: InnerStart,
    /// Starting tuple in raw form; zero when unset.
    pub initial: Option<FunctionTuple>,
}

impl Default for SbfConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            outer_tol: 1e-4,
            residual_tol: None,
            max_outer: 50,
            inner: InnerConfig::default(),
            inner_start: InnerStart::default(),
            initial: None,
        }
    }
}

impl SbfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.inner.tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.residual_tol.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("residual tolerance must be positive".into()));
        }
        if self.max_outer == 0 || self.inner.max_sweeps == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }

    pub fn residual_tolerance(&self) -> f64 {
        self.residual_tol.unwrap_or(10.0 * self.outer_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: EstimatorKind,
    pub family: Family,
    pub bandwidths: Vec<f64>,
    pub grids: Vec<Grid>,
    /// Covariate index of each smoothing axis.
    pub axes: Vec<usize>,
    /// Members of `x~_k` per axis.
    pub members: Vec<Vec<usize>>,
    /// Normalized tuple; local-linear fits keep their slope rows.
    pub components: FunctionTuple,
    pub parametric: ParametricPart,
    /// Un-normalized working tuple the iteration ended with.
    pub raw: FunctionTuple,
    pub outer_criteria: Vec<f64>,
    /// `max |F^|` at the tuple entering each outer step, then at the final tuple.
    pub residuals: Vec<f64>,
    pub inner_sweeps: Vec<usize>,
    pub inner_ratios: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub converged: bool,
}

impl FitResult {
    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    /// Normalized values of `f_{jl}` on the axis grid of `l` (0-based).
    pub fn component(&self, j: usize, l: usize) -> Option<Vec<f64>> {
        let k = self.axes.iter().position(|&a| a == l)?;
        let slot = self.members[k].iter().position(|&m| m == j)?;
        Some(self.components.component(k, slot))
    }

    pub fn slope(&self, j: usize, l: usize) -> Option<Vec<f64>> {
        let k = self.axes.iter().position(|&a| a == l)?;
        let slot = self.members[k].iter().position(|&m| m == j)?;
        self.components.slope(k, slot)
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer_criteria.len()
    }

    pub fn final_criterion(&self) -> Option<f64> {
        self.outer_criteria.last().copied()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }

    /// Long-format CSV: `covariate,axis,z,value[,slope]`, one row per
    /// component and grid point.
    pub fn components_csv(&self) -> String {
        let ll = self.components.is_local_linear();
        let mut s = String::from(if ll { "covariate,axis,z,value,slope\n" } else { "covariate,axis,z,value\n" });
        for (k, &axis) in self.axes.iter().enumerate() {
            for (slot, &j) in self.members[k].iter().enumerate() {
                let values = self.components.component(k, slot);
                let slopes = self.components.slope(k, slot);
                for (g, z) in self.grids[k].points().iter().enumerate() {
                    s.push_str(&format!("x{},x{},{z},{}", j + 1, axis + 1, values[g]));
                    if let Some(sl) = &slopes {
                        s.push_str(&format!(",{}", sl[g]));
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    /// `term,value` rows for the constant and product coefficients.
    pub fn parametric_csv(&self) -> String {
        let mut s = String::from("term,value\n");
        for (j, v) in self.parametric.linear.iter().enumerate() {
            if *v != 0.0 {
                s.push_str(&format!("x{},{v}\n", j + 1));
            }
        }
        for ((j, l), v) in &self.parametric.products {
            s.push_str(&format!("x{}*x{},{v}\n", j + 1, l + 1));
        }
        s
    }

    /// One row per outer step.
    pub fn convergence_csv(&self) -> String {
        let mut s = String::from("step,residual,criterion,inner_sweeps,max_inner_ratio\n");
        for (t, crit) in self.outer_criteria.iter().enumerate() {
            let ratio = self.inner_ratios[t].iter().copied().reduce(f64::max);
            s.push_str(&format!(
                "{},{},{crit},{},{}\n",
                t + 1,
                self.residuals[t],
                self.inner_sweeps[t],
                ratio.map_or_else(String::new, |r| r.to_string())
            ));
        }
        s
    }

    /// Linear predictor and mean at a covariate vector.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let mut u = self.parametric.eval(x);
        for (k, &axis) in self.axes.iter().enumerate() {
            let z = x[axis];
            if !(0.0..=1.0).contains(&z) {
                return Err(Error::Domain(format!("x{} = {z} outside [0, 1]", axis + 1)));
            }
            for (slot, &j) in self.members[k].iter().enumerate() {
                u += x[j] * self.grids[k].interpolate(&self.components.component(k, slot), z);
            }
        }
        Ok((u, self.family.inverse_link(u)))
    }
}

pub fn predict(fit: &FitResult, x: &[f64]) -> Result<(f64, f64)> {
    fit.predict(x)
}

pub fn standard_grids(size: usize, p: usize) -> Result<Vec<Grid>> {
    let grid = Grid::uniform(size)?;
    Ok(vec![grid; p])
}

fn max_abs(t: &FunctionTuple) -> f64 {
    t.max_abs()
}

fn check_inputs(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    let violations = validate_dataset(data, spec);
    if let Some(v) = violations.first() {
        return Err(Error::Dataset(format!(
            "{} violation(s), first: {v}",
            violations.len()
        )));
    }
    Ok(())
}

/// Nadaraya-Watson smooth backfitting.
pub fn fit_sbf(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    kernel: &KernelSpec,
    config: &SbfConfig,
) -> Result<FitResult> {
    fit_backfitting(data, spec, view, kernel, config, false)
}

/// Local-linear smooth backfitting.
pub fn fit_sbf_local_linear(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    kernel: &KernelSpec,
    config: &SbfConfig,
) -> Result<FitResult> {
    fit_backfitting(data, spec, view, kernel, config, true)
}

fn fit_backfitting(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    kernel: &KernelSpec,
    config: &SbfConfig,
    local_linear: bool,
) -> Result<FitResult> {
    config.validate()?;
    check_inputs(data, spec)?;
    let grids = standard_grids(config.grid_size, view.n_axes())?;
    let ctx = SmootherContext::new(data, view, &grids, kernel, spec.family(), local_linear)?;
    let normalizer = Normalizer::new(spec, view, &grids, &kernel.bandwidths)?;
    let kind = if local_linear { EstimatorKind::Ll } else { EstimatorKind::Nw };
    run_outer(&ctx, &normalizer, view, config, kind)
}

/// The outer Newton-Raphson loop on a prepared smoother.
pub fn run_outer(
    ctx: &SmootherContext,
    normalizer: &Normalizer,
    view: &GroupView,
    config: &SbfConfig,
    kind: EstimatorKind,
) -> Result<FitResult> {
    let mut f = match &config.initial {
        Some(t) => {
            if t.n_axes() != ctx.n_axes() || t.is_local_linear() != ctx.is_local_linear() {
                return Err(Error::Config("initial tuple has the wrong shape".into()));
            }
            t.clone()
        }
        None => ctx.zero_tuple(),
    };
    let measure = |t: &FunctionTuple| normalizer.measure(t);
    let residual_tol = config.residual_tolerance();
    let mut outer_criteria = Vec::new();
    let mut residuals = Vec::new();
    let mut inner_sweeps = Vec::new();
    let mut inner_ratios = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut previous_delta: Option<FunctionTuple> = None;
    let mut converged = false;

    let (mut f_hat, mut w_hat) = ctx.evaluate(&f, true)?;
    for _ in 0..config.max_outer {
        let residual = max_abs(&f_hat);
        residuals.push(residual);
        if let Some(&crit) = outer_criteria.last() {
            if crit <= config.outer_tol && residual <= residual_tol {
                converged = true;
                break;
            }
        }
        let system = PreparedSystem::new(w_hat.as_ref().unwrap(), ctx.grids(), &config.inner)?;
        for w in &system.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        let delta_tilde = system.delta_tilde(&f_hat);
        let start = match config.inner_start {
            InnerStart::Zero => Some(ctx.zero_tuple()),
            InnerStart::DeltaTilde => None,
            InnerStart::Warm => previous_delta.clone(),
        };
        let outcome = inner_solve(&system, &delta_tilde, start.as_ref(), measure, &config.inner)?;
        if !outcome.converged {
            warnings.push(format!(
                "inner iteration hit {} sweeps in outer step {}",
                outcome.sweeps,
                outer_criteria.len() + 1
            ));
        }
        f.axpy(1.0, &outcome.delta);
        outer_criteria.push(measure(&outcome.delta));
        inner_sweeps.push(outcome.sweeps);
        inner_ratios.push(outcome.ratios);
        previous_delta = Some(outcome.delta);
        let (fh, wh) = ctx.evaluate(&f, true)?;
        f_hat = fh;
        w_hat = wh;
    }
    if !converged {
        let residual = max_abs(&f_hat);
        residuals.push(residual);
        converged = outer_criteria
            .last()
            .is_some_and(|&c| c <= config.outer_tol)
            && residual <= residual_tol;
    }
    let (components, parametric) = normalizer.normalize(&f);
    Ok(FitResult {
        kind,
        family: ctx.family(),
        bandwidths: ctx.bandwidths().to_vec(),
        grids: ctx.grids().to_vec(),
        axes: view.axes().to_vec(),
        members: view.groups().to_vec(),
        components,
        parametric,
        raw: f,
        outer_criteria,
        residuals,
        inner_sweeps,
        inner_ratios,
        warnings,
        converged,
    })
}
