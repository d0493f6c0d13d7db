//! Simulation designs, the oracle fit for design B, and Monte-Carlo metrics.

mod runner;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::bandwidth::{pilot_from_functions, PilotFit};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::kernel::{Grid, KernelSpec};
use crate::model::{build_group_view, CovariateKind, Dataset, GroupView, ModelSpec};
use crate::sbf::{
    run_outer, standard_grids, EstimatorKind, FitResult, SbfConfig, SmootherContext,
};
use crate::tuple::{FunctionTuple, Normalizer};

pub use runner::{
    paper_bandwidths, run_experiment, BandwidthMode, CellReport, ExperimentConfig, ExperimentReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimModel {
    /// Logit model with an intercept, a binary covariate and two uniform axes,
    /// every pair of covariates interacting.
    A,
    /// Logit model with a binary and a normal covariate whose coefficients
    /// vary over two further uniform axes.
    B,
}

impl SimModel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Self::A),
            "b" | "B" => Ok(Self::B),
            other => Err(Error::Config(format!("unknown simulation model `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
        }
    }
}

/// One true coefficient function `f_{jl}`, 0-based covariates.
#[derive(Debug, Clone, Copy)]
pub struct TrueComponent {
    pub label: &'static str,
    pub j: usize,
    pub l: usize,
    pub f: fn(f64) -> f64,
}

#[derive(Debug, Clone)]
pub struct TruthSpec {
    pub model: SimModel,
    pub spec: ModelSpec,
    /// Components reported in metric tables, in table order.
    pub components: Vec<TrueComponent>,
    pub law: &'static str,
}

fn square(z: f64) -> f64 {
    z * z
}
fn centered_parabola(z: f64) -> f64 {
    4.0 * (z - 0.5) * (z - 0.5)
}
fn identity(z: f64) -> f64 {
    z
}
fn cosine(z: f64) -> f64 {
    (2.0 * PI * z).cos()
}
fn exponential(z: f64) -> f64 {
    (2.0 * z - 1.0).exp()
}
fn sine(z: f64) -> f64 {
    (2.0 * PI * z).sin()
}

impl TruthSpec {
    /// Columns `(1, X1, X2, X3)`.
    pub fn model_a() -> Self {
        use CovariateKind::*;
        let spec = ModelSpec::new(
            vec![Intercept, Discrete, Continuous, Continuous],
            vec![vec![3, 4], vec![3, 4], vec![4], vec![3]],
            Family::Logit,
        )
        .expect("design A is valid");
        let components = vec![
            TrueComponent { label: "f02", j: 0, l: 2, f: square },
            TrueComponent { label: "f12", j: 1, l: 2, f: identity },
            TrueComponent { label: "f32", j: 3, l: 2, f: exponential },
            TrueComponent { label: "f03", j: 0, l: 3, f: centered_parabola },
            TrueComponent { label: "f13", j: 1, l: 3, f: cosine },
            TrueComponent { label: "f23", j: 2, l: 3, f: sine },
        ];
        Self {
            model: SimModel::A,
            spec,
            components,
            law: "X1 ~ Bernoulli(0.5), X2, X3 ~ Uniform(0, 1), independent",
        }
    }

    /// Columns `(1, X1, X2, Z1, Z2)` with the full working model.
    pub fn model_b() -> Self {
        Self::model_b_with(vec![vec![4, 5], vec![4, 5], vec![4, 5]])
    }

    /// Design B fitted with only the two nonzero coefficient functions.
    pub fn model_b_oracle() -> Self {
        Self::model_b_with(vec![vec![], vec![4], vec![5]])
    }

    fn model_b_with(index_sets: Vec<Vec<usize>>) -> Self {
        use CovariateKind::*;
        let spec = ModelSpec::new(
            vec![Intercept, Discrete, Continuous, Continuous, Continuous],
            index_sets,
            Family::Logit,
        )
        .expect("design B is valid");
        let components = vec![
            TrueComponent { label: "f11", j: 1, l: 3, f: cosine },
            TrueComponent { label: "f22", j: 2, l: 4, f: sine },
        ];
        Self {
            model: SimModel::B,
            spec,
            components,
            law: "X1 ~ Bernoulli(0.5), X2 ~ N(0, 1), Z1, Z2 ~ Uniform(0, 1), independent",
        }
    }

    pub fn for_model(model: SimModel) -> Self {
        match model {
            SimModel::A => Self::model_a(),
            SimModel::B => Self::model_b(),
        }
    }

    pub fn labels(&self) -> Vec<&'static str> {
        self.components.iter().map(|c| c.label).collect()
    }

    /// True linear predictor.
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| x[c.j] * (c.f)(x[c.l])).sum()
    }

    /// True tuple sampled on the grids of `view`; components absent from the
    /// truth are zero.
    pub fn tuple(&self, view: &GroupView, grids: &[Grid]) -> FunctionTuple {
        FunctionTuple::from_fn(view, grids, false, |k, slot, z| {
            let (j, l) = (view.group(k)[slot], view.axis(k));
            self.components
                .iter()
                .find(|c| c.j == j && c.l == l)
                .map_or(0.0, |c| (c.f)(z))
        })
    }
}

pub(crate) fn generate(truth: &TruthSpec, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_cov = truth.spec.n_covariates();
    let mut columns = vec![Vec::with_capacity(n); n_cov];
    let mut response = Vec::with_capacity(n);
    let mut x = vec![0.0; n_cov];
    for _ in 0..n {
        x[0] = 1.0;
        x[1] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        match truth.model {
            SimModel::A => {
                x[2] = rng.random::<f64>();
                x[3] = rng.random::<f64>();
            }
            SimModel::B => {
                x[2] = rng.sample(StandardNormal);
                x[3] = rng.random::<f64>();
                x[4] = rng.random::<f64>();
            }
        }
        let mu = Family::Logit.inverse_link(truth.linear_predictor(&x));
        response.push(if rng.random::<f64>() < mu { 1.0 } else { 0.0 });
        for (col, &v) in columns.iter_mut().zip(&x) {
            col.push(v);
        }
    }
    Dataset::new(response, columns).expect("generated columns have equal length")
}

/// Plug-in pilot built from the true functions and the uniform axis law.
pub fn truth_pilot(truth: &TruthSpec, data: &Dataset, grid_size: usize) -> Result<PilotFit> {
    let view = build_group_view(&truth.spec)?;
    let eta = |x: &[f64]| truth.linear_predictor(x);
    let component = |k: usize, slot: usize, z: f64| {
        let (j, l) = (view.group(k)[slot], view.axis(k));
        truth
            .components
            .iter()
            .find(|c| c.j == j && c.l == l)
            .map_or(0.0, |c| (c.f)(z))
    };
    let uniform = |_: usize, _: f64| (1.0, 0.0);
    pilot_from_functions(data, &truth.spec, &view, grid_size, &eta, &component, Some(&uniform))
}

pub fn gen_model_a(n: usize, seed: u64) -> Dataset {
    generate(&TruthSpec::model_a(), n, seed)
}

pub fn gen_model_b(n: usize, seed: u64) -> Dataset {
    generate(&TruthSpec::model_b(), n, seed)
}

/// Design-B fit that estimates only `f_11` and `f_22`; every curvature block
/// is scalar.
pub fn fit_oracle_b(data: &Dataset, kernel: &KernelSpec, config: &SbfConfig) -> Result<FitResult> {
    let truth = TruthSpec::model_b_oracle();
    let view = build_group_view(&truth.spec)?;
    let grids = standard_grids(config.grid_size, view.n_axes())?;
    let ctx = SmootherContext::new(data, &view, &grids, kernel, Family::Logit, false)?;
    let normalizer = Normalizer::new(&truth.spec, &view, &grids, &kernel.bandwidths)?;
    run_outer(&ctx, &normalizer, &view, config, EstimatorKind::Oracle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMetrics {
    pub label: String,
    pub imse: f64,
    pub isb: f64,
    /// Absent for a single replication.
    pub iv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub kind: EstimatorKind,
    pub n: usize,
    pub replications: usize,
    pub rows: Vec<ComponentMetrics>,
    /// Pointwise mean curves per component, on `grid`.
    pub mean_curves: Vec<Vec<f64>>,
    pub truth_curves: Vec<Vec<f64>>,
    pub grid: Grid,
}

impl MetricTable {
    pub fn row(&self, label: &str) -> Option<&ComponentMetrics> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// IMSE, ISB and IV of each reported component over replicated fits. The
/// truth is normalized with the same map as the estimates.
pub fn compute_metrics(fits: &[FitResult], truth: &TruthSpec, n: usize) -> Result<MetricTable> {
    let first = fits
        .first()
        .ok_or_else(|| Error::Metric("no fits to summarize".into()))?;
    if fits.iter().any(|f| f.grids != first.grids || f.axes != first.axes) {
        return Err(Error::Metric("fits use different grids".into()));
    }
    let mut fit_spec = truth.spec.clone();
    if first.kind == EstimatorKind::Oracle {
        fit_spec = TruthSpec::model_b_oracle().spec;
    }
    let view = build_group_view(&fit_spec)?;
    if view.axes() != first.axes.as_slice() {
        return Err(Error::Metric("fits do not match the model's smoothing axes".into()));
    }
    let normalizer = Normalizer::new(&fit_spec, &view, &first.grids, &first.bandwidths)?;
    let (truth_tuple, _) = normalizer.normalize(&truth.tuple(&view, &first.grids));
    let m = fits.len() as f64;
    let mut rows = Vec::new();
    let mut mean_curves = Vec::new();
    let mut truth_curves = Vec::new();
    let mut grid_out = None;
    for c in &truth.components {
        let k = view
            .axis_of(c.l)
            .ok_or_else(|| Error::Metric(format!("{} is not estimated", c.label)))?;
        let slot = view
            .slot(k, c.j)
            .ok_or_else(|| Error::Metric(format!("{} is not estimated", c.label)))?;
        let grid = &first.grids[k];
        let target = truth_tuple.component(k, slot);
        let curves: Vec<Vec<f64>> = fits.iter().map(|f| f.components.component(k, slot)).collect();
        let mean: Vec<f64> = (0..grid.len())
            .map(|g| curves.iter().map(|c| c[g]).sum::<f64>() / m)
            .collect();
        let sq = |a: &[f64], b: &[f64]| {
            let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
            grid.integrate(&v)
        };
        let isb = sq(&mean, &target);
        let imse = curves.iter().map(|c| sq(c, &target)).sum::<f64>() / m;
        let iv = (fits.len() > 1).then(|| curves.iter().map(|c| sq(c, &mean)).sum::<f64>() / m);
        rows.push(ComponentMetrics {
            label: c.label.to_string(),
            imse,
            isb,
            iv,
        });
        mean_curves.push(mean);
        truth_curves.push(target);
        grid_out.get_or_insert_with(|| grid.clone());
    }
    Ok(MetricTable {
        kind: first.kind,
        n,
        replications: fits.len(),
        rows,
        mean_curves,
        truth_curves,
        grid: grid_out.unwrap(),
    })
}
