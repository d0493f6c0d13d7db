//! Plug-in bandwidths from estimated asymptotic bias and variance.
//!
//! With `h_k = c_k n^{-1/5}` the bias tuple is `sum_k c_k^2 beta^(k)` where
//! `beta^(k)` solves the bias integral equations for the `k`-th unit source,
//! and the variance of axis `j` is `Sigma_j(1) / c_j`. Both are assembled
//! once, after which the objective in `c` is a closed-form quartic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::family::{Family, LinkFn};
use crate::kernel::{normalized_kernel_matrix, Grid, Kernel, KernelMatrix};
use crate::model::{validate_dataset, Dataset, GroupView, ModelSpec};
use crate::sbf::{inner_solve, standard_grids, InnerConfig, PreparedSystem, SmootherMatrices};
use crate::sieve::{fit_sieve, SieveFit, SplineBasis};
use crate::tuple::{FunctionTuple, Normalizer, ParametricPart};

pub const DEFAULT_PILOT_DEGREE: u32 = 3;

/// Normal-reference bandwidth for the Epanechnikov kernel, `2.34 sd n^{-1/5}`,
/// kept inside `[0.05, 0.5]`.
pub fn reference_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (2.34 * var.sqrt() * n.powf(-0.2)).clamp(0.05, 0.5)
}

/// Kernel density on `[0, 1]` with reflection at both ends, and its derivative.
pub fn reflected_density(sample: &[f64], bandwidth: f64, z: f64) -> (f64, f64) {
    let n = sample.len() as f64;
    let (mut p, mut dp) = (0.0, 0.0);
    for &x in sample {
        for center in [x, -x, 2.0 - x] {
            let t = (z - center) / bandwidth;
            if t.abs() < 1.0 {
                p += Kernel::Epanechnikov.eval(t) / bandwidth;
                dp += -1.5 * t / (bandwidth * bandwidth);
            }
        }
    }
    (p / n, dp / n)
}

/// Plug-in ingredients evaluated at the sample.
#[derive(Debug, Clone)]
pub struct PilotFit {
    pub family: Family,
    /// Degree of the polynomial pilot; `None` for pilots built from known functions.
    pub degree: Option<u32>,
    pub grids: Vec<Grid>,
    /// Normalized pilot components on `grids`.
    pub components: FunctionTuple,
    pub parametric: ParametricPart,
    pub eta: Vec<f64>,
    /// Per axis: first and second partial of the linear predictor along the
    /// axis covariate, at each observation.
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    /// Per axis `k`: coefficient function of `x_{axis k}` at each observation.
    pub own: Vec<Vec<f64>>,
    /// Per axis: density on the grid.
    pub density: Vec<Vec<f64>>,
    /// Per axis: `p'/p` at each observation.
    pub score: Vec<Vec<f64>>,
    /// Residual variance for the identity family; 1 otherwise.
    pub dispersion: f64,
    pub sieve: Option<SieveFit>,
}

/// Known density of an axis, `(p, p')` at a point.
pub type DensityFn<'a> = &'a dyn Fn(usize, f64) -> (f64, f64);

fn assemble(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    grids: &[Grid],
    eta_partials: &dyn Fn(&[f64], usize) -> (f64, f64, f64),
    raw: &FunctionTuple,
    density: Option<DensityFn>,
) -> Result<PilotFit> {
    let p = view.n_axes();
    let n = data.n();
    let normalizer = Normalizer::new(spec, view, grids, &vec![0.1; p])?;
    let (components, parametric) = normalizer.normalize(raw);
    let mut eta = Vec::with_capacity(n);
    let mut d1 = vec![Vec::with_capacity(n); p];
    let mut d2 = vec![Vec::with_capacity(n); p];
    let mut own = vec![Vec::with_capacity(n); p];
    for i in 0..n {
        let x = data.row(i);
        for k in 0..p {
            let (u, a, b) = eta_partials(&x, view.axis(k));
            if k == 0 {
                eta.push(u);
            }
            d1[k].push(a);
            d2[k].push(b);
            let cov = view.axis(k);
            let mut s = 0.0;
            for k2 in 0..p {
                if let Some(slot) = view.slot(k2, cov) {
                    let z = x[view.axis(k2)];
                    s += grids[k2].interpolate(&components.component(k2, slot), z);
                }
            }
            own[k].push(s);
        }
        if p == 0 {
            eta.push(eta_partials(&x, 0).0);
        }
    }
    if eta.iter().any(|u| !u.is_finite()) {
        return Err(Error::Numeric {
            quantity: "pilot linear predictor",
            location: "sample".into(),
        });
    }
    let mut dens = Vec::with_capacity(p);
    let mut score = Vec::with_capacity(p);
    for k in 0..p {
        let obs = data.column(view.axis(k));
        let (on_grid, at_obs): (Vec<f64>, Vec<f64>) = match density {
            Some(f) => (
                grids[k].points().iter().map(|&z| f(k, z).0).collect(),
                obs.iter()
                    .map(|&z| {
                        let (a, b) = f(k, z);
                        b / a
                    })
                    .collect(),
            ),
            None => {
                let h = reference_bandwidth(obs);
                (
                    grids[k].points().iter().map(|&z| reflected_density(obs, h, z).0).collect(),
                    obs.iter()
                        .map(|&z| {
                            let (a, b) = reflected_density(obs, h, z);
                            b / a
                        })
                        .collect(),
                )
            }
        };
        let interior = grids[k].interior_mask(0.0);
        if on_grid
            .iter()
            .zip(&interior)
            .any(|(&v, &inside)| inside && !(v > 0.0))
        {
            return Err(Error::Numeric {
                quantity: "pilot density",
                location: format!("axis {}", k + 1),
            });
        }
        dens.push(on_grid);
        score.push(at_obs);
    }
    let family = spec.family();
    let dispersion = match family {
        Family::Identity => {
            let rss: f64 = data.response().iter().zip(&eta).map(|(y, u)| (y - u) * (y - u)).sum();
            rss / n as f64
        }
        Family::Logit => 1.0,
    };
    Ok(PilotFit {
        family,
        degree: None,
        grids: grids.to_vec(),
        components,
        parametric,
        eta,
        d1,
        d2,
        own,
        density: dens,
        score,
        dispersion,
        sieve: None,
    })
}

/// Polynomial pilot of the given degree, fitted by maximizing the sample
/// quasi-likelihood.
pub fn pilot_fit(data: &Dataset, spec: &ModelSpec, view: &GroupView, degree: u32, grid_size: usize) -> Result<PilotFit> {
    if let Some(v) = validate_dataset(data, spec).first() {
        return Err(Error::Dataset(v.to_string()));
    }
    let p = view.n_axes();
    let grids = standard_grids(grid_size, p)?;
    let normalizer = Normalizer::new(spec, view, &grids, &vec![0.1; p])?;
    let bases = (0..p)
        .map(|k| SplineBasis::polynomial(degree, spec.weight(view.axis(k))))
        .collect();
    let sieve = fit_sieve(data, spec, view, &normalizer, bases).map_err(|e| match e {
        Error::NewtonDivergence(msg) => Error::NewtonDivergence(format!(
            "pilot of degree {degree}: {msg}; try a lower degree"
        )),
        other => other,
    })?;
    let raw = sieve.sample(view, &grids);
    let partials = |x: &[f64], l: usize| {
        let (a, b) = sieve.partials(x, l);
        (sieve.linear_predictor(x), a, b)
    };
    let mut pilot = assemble(data, spec, view, &grids, &partials, &raw, None)?;
    // the sieve's own constants and products sit outside the sampled tuple
    let sieve_par = sieve.parametric(spec.n_covariates());
    for (j, v) in sieve_par.linear.iter().enumerate() {
        pilot.parametric.linear[j] += v;
    }
    for (key, v) in sieve_par.products {
        *pilot.parametric.products.entry(key).or_insert(0.0) += v;
    }
    pilot.degree = Some(degree);
    pilot.sieve = Some(sieve);
    Ok(pilot)
}

/// Pilot built from a known linear predictor and known raw components, with
/// partials by central differences. Densities are known when given,
/// otherwise estimated.
pub fn pilot_from_functions(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    grid_size: usize,
    eta: &dyn Fn(&[f64]) -> f64,
    component: &dyn Fn(usize, usize, f64) -> f64,
    density: Option<DensityFn>,
) -> Result<PilotFit> {
    let grids = standard_grids(grid_size, view.n_axes())?;
    let raw = FunctionTuple::from_fn(view, &grids, false, component);
    let step = 1e-4;
    let partials = |x: &[f64], l: usize| {
        let mut y = x.to_vec();
        let u = eta(x);
        y[l] = x[l] + step;
        let up = eta(&y);
        y[l] = x[l] - step;
        let dn = eta(&y);
        (u, (up - dn) / (2.0 * step), (up - 2.0 * u + dn) / (step * step))
    };
    assemble(data, spec, view, &grids, &partials, &raw, density)
}

/// `(V, V', g', g'')` at a mean.
fn link_terms(family: Family, mu: f64) -> Result<(f64, f64, f64, f64)> {
    Ok((
        family.link_eval(LinkFn::Variance, mu)?,
        family.link_eval(LinkFn::VarianceDeriv, mu)?,
        family.link_eval(LinkFn::Deriv1, mu)?,
        family.link_eval(LinkFn::Deriv2, mu)?,
    ))
}

/// Bias and variance at one vector of bandwidth constants.
#[derive(Debug, Clone)]
pub struct BiasVariance {
    pub constants: Vec<f64>,
    pub beta_tilde: FunctionTuple,
    pub beta_star: FunctionTuple,
    /// Normalized bias tuple.
    pub beta: FunctionTuple,
    pub beta_parametric: ParametricPart,
    /// `Sigma_j` per axis and grid point.
    pub sigma: Vec<Vec<DMatrix<f64>>>,
}

/// Everything the objective needs, assembled once from a pilot.
#[derive(Debug, Clone)]
pub struct PlugIn {
    pub grids: Vec<Grid>,
    /// Kernel bandwidths used for the conditional expectations.
    pub smoothing: Vec<f64>,
    pub w: SmootherMatrices,
    /// `beta~` for a unit constant on axis `k` and zero elsewhere.
    pub unit_tilde: Vec<FunctionTuple>,
    pub unit_star: Vec<FunctionTuple>,
    pub unit_beta: Vec<FunctionTuple>,
    pub unit_parametric: Vec<ParametricPart>,
    /// `Sigma_j` at `c_j = 1`.
    pub unit_sigma: Vec<Vec<DMatrix<f64>>>,
    /// `int trace(Sigma_j(1)) p_j`.
    pub variance_mass: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    pub inner_sweeps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugInOptions {
    /// Drop the bias system and use `beta = beta~`.
    pub decoupled: bool,
    /// Force the bias to zero.
    pub variance_only: bool,
}

impl Default for PlugInOptions {
    fn default() -> Self {
        Self {
            decoupled: false,
            variance_only: false,
        }
    }
}

impl PlugIn {
    pub fn new(data: &Dataset, spec: &ModelSpec, view: &GroupView, pilot: &PilotFit, options: PlugInOptions) -> Result<Self> {
        if pilot.degree.is_some_and(|d| d < 2) {
            return Err(Error::BiasSystem(format!(
                "pilot degree {} has no curvature; use degree 2 or more",
                pilot.degree.unwrap()
            )));
        }
        let p = view.n_axes();
        let n = data.n();
        let family = pilot.family;
        let grids = pilot.grids.clone();
        let smoothing: Vec<f64> = (0..p).map(|k| reference_bandwidth(data.column(view.axis(k)))).collect();
        let kernels: Vec<KernelMatrix> = (0..p)
            .map(|k| normalized_kernel_matrix(data.column(view.axis(k)), &grids[k], smoothing[k], Kernel::Epanechnikov))
            .collect::<Result<_>>()?;
        let dims: Vec<usize> = (0..p).map(|k| view.group_size(k)).collect();
        let lens: Vec<usize> = grids.iter().map(Grid::len).collect();
        let mut w = SmootherMatrices::zeros(&dims, &lens);
        let mut b_var: Vec<Vec<DMatrix<f64>>> = (0..p)
            .map(|k| vec![DMatrix::zeros(dims[k], dims[k]); lens[k]])
            .collect();
        // numerators of E(b_jk | X_j = z) p_j(z), one tuple per source axis k
        let mut numer: Vec<FunctionTuple> = (0..p)
            .map(|_| FunctionTuple::zeros_with_sizes(&dims, &lens, false))
            .collect();
        let inv_n = 1.0 / n as f64;
        let mu2 = Kernel::Epanechnikov.second_moment();
        for i in 0..n {
            let x = data.row(i);
            let u = family.clamp(pilot.eta[i]);
            let mu = family.inverse_link(u);
            let (v, dv, g1, g2) = link_terms(family, mu)?;
            let weight = 1.0 / (v * g1 * g1);
            let cond_var = match family {
                Family::Identity => pilot.dispersion,
                Family::Logit => v,
            };
            let var_weight = cond_var / (v * v * g1 * g1);
            let tildes: Vec<Vec<f64>> = (0..p).map(|k| view.tilde(k, &x)).collect();
            for j in 0..p {
                let row = &kernels[j].rows[i];
                let xt = &tildes[j];
                for (s, &kv) in row.values.iter().enumerate() {
                    let g = row.start + s;
                    let target = w.diag_mut(j, g);
                    let bt = &mut b_var[j][g];
                    for a in 0..dims[j] {
                        for b in 0..dims[j] {
                            target[(a, b)] += kv * weight * xt[a] * xt[b] * inv_n;
                            bt[(a, b)] += kv * var_weight * xt[a] * xt[b] * inv_n;
                        }
                    }
                }
                for k in j + 1..p {
                    let (rj, rk) = (&kernels[j].rows[i], &kernels[k].rows[i]);
                    let (mj, mk) = (dims[j], dims[k]);
                    let block = w.stored_cross_mut(j, k);
                    for (sj, &kj) in rj.values.iter().enumerate() {
                        let gj = rj.start + sj;
                        for (sk, &kk) in rk.values.iter().enumerate() {
                            let gk = rk.start + sk;
                            let coef = kj * kk * weight * inv_n;
                            for b in 0..mk {
                                for a in 0..mj {
                                    block[(gj * mj + a, gk * mk + b)] += coef * tildes[j][a] * tildes[k][b];
                                }
                            }
                        }
                    }
                }
            }
            if options.variance_only {
                continue;
            }
            for k in 0..p {
                let own = pilot.own[k][i];
                let (e1, e2) = (pilot.d1[k][i], pilot.d2[k][i]);
                let m1 = e1 / g1;
                let m2 = e2 / g1 - g2 / (g1 * g1 * g1) * e1 * e1;
                let lead = m1 - own / g1;
                let curvature = dv / (v * v * g1 * g1) + g2 / (v * g1 * g1 * g1);
                let vg = v * g1;
                let tail = 0.5 / vg * (m2 + g2 * own * own / (g1 * g1 * g1));
                for j in 0..p {
                    let row = &kernels[j].rows[i];
                    let xt = &tildes[j];
                    let delta = view.delta(j, k);
                    let bjk: Vec<f64> = (0..dims[j])
                        .map(|a| {
                            let bracket = xt[a] * pilot.score[k][i] / vg - xt[a] * own * curvature + delta[a] / vg;
                            lead * bracket + xt[a] * tail
                        })
                        .collect();
                    let block = numer[k].block_mut(j);
                    for (s, &kv) in row.values.iter().enumerate() {
                        let g = row.start + s;
                        for a in 0..dims[j] {
                            block[(a, g)] += kv * bjk[a] * inv_n * mu2;
                        }
                    }
                }
            }
        }
        let normalizer = Normalizer::new(spec, view, &grids, &smoothing)?;
        let config = InnerConfig::default();
        let system = PreparedSystem::new(&w, &grids, &config)?;
        let measure = |t: &FunctionTuple| normalizer.measure(t);
        let mut unit_tilde = Vec::with_capacity(p);
        let mut unit_star = Vec::with_capacity(p);
        let mut unit_beta = Vec::with_capacity(p);
        let mut unit_parametric = Vec::with_capacity(p);
        let mut inner_sweeps = Vec::new();
        for num in &numer {
            let tilde = system.delta_tilde(num);
            let star = if options.decoupled || tilde.max_abs() == 0.0 {
                tilde.clone()
            } else {
                let outcome = inner_solve(&system, &tilde, None, measure, &config).map_err(|e| {
                    Error::BiasSystem(format!("bias equations did not contract: {e}"))
                })?;
                inner_sweeps.push(outcome.sweeps);
                if !outcome.converged {
                    return Err(Error::BiasSystem(format!(
                        "no convergence in {} sweeps",
                        outcome.sweeps
                    )));
                }
                outcome.delta
            };
            let (beta, par) = normalizer.normalize(&star);
            unit_tilde.push(tilde);
            unit_star.push(star);
            unit_beta.push(beta);
            unit_parametric.push(par);
        }
        let roughness = Kernel::Epanechnikov.roughness();
        let mut unit_sigma = Vec::with_capacity(p);
        let mut variance_mass = Vec::with_capacity(p);
        for j in 0..p {
            let mut per_grid = Vec::with_capacity(lens[j]);
            let mut traces = Vec::with_capacity(lens[j]);
            for g in 0..lens[j] {
                let inv = system.diagonal_inverse(j, g);
                let s = inv * &b_var[j][g] * inv * roughness;
                traces.push(s.trace() * pilot.density[j][g]);
                per_grid.push(s);
            }
            variance_mass.push(grids[j].integrate(&traces));
            unit_sigma.push(per_grid);
        }
        Ok(Self {
            grids,
            smoothing,
            w,
            unit_tilde,
            unit_star,
            unit_beta,
            unit_parametric,
            unit_sigma,
            variance_mass,
            density: pilot.density.clone(),
            inner_sweeps,
        })
    }

    pub fn n_axes(&self) -> usize {
        self.grids.len()
    }

    fn combine(parts: &[FunctionTuple], c: &[f64]) -> FunctionTuple {
        let mut out = parts[0].sub(&parts[0]);
        for k in 0..parts.len() {
            out.axpy(c[k] * c[k], &parts[k]);
        }
        out
    }

    /// `Sigma_j(z, c_j)` on the grid of axis `j`.
    pub fn sigma(&self, j: usize, c_j: f64) -> Vec<DMatrix<f64>> {
        self.unit_sigma[j].iter().map(|s| s.map(|v| v / c_j)).collect()
    }

    pub fn bias_variance(&self, c: &[f64]) -> BiasVariance {
        let mut par = ParametricPart::zeros(self.unit_parametric[0].linear.len());
        for (k, part) in self.unit_parametric.iter().enumerate() {
            let s = c[k] * c[k];
            for (j, v) in part.linear.iter().enumerate() {
                par.linear[j] += s * v;
            }
            for (key, v) in &part.products {
                *par.products.entry(*key).or_insert(0.0) += s * v;
            }
        }
        BiasVariance {
            constants: c.to_vec(),
            beta_tilde: Self::combine(&self.unit_tilde, c),
            beta_star: Self::combine(&self.unit_star, c),
            beta: Self::combine(&self.unit_beta, c),
            beta_parametric: par,
            sigma: (0..self.n_axes()).map(|j| self.sigma(j, c[j])).collect(),
        }
    }

    /// Squared bias and variance parts of the objective.
    pub fn objective_parts(&self, c: &[f64]) -> (f64, f64) {
        let beta = Self::combine(&self.unit_beta, c);
        let mut bias = 0.0;
        for j in 0..self.n_axes() {
            let block = beta.block(j);
            let vals: Vec<f64> = (0..self.grids[j].len())
                .map(|g| block.column(g).norm_squared() * self.density[j][g])
                .collect();
            bias += self.grids[j].integrate(&vals);
        }
        let variance: f64 = self.variance_mass.iter().zip(c).map(|(m, c)| m / c).sum();
        (bias, variance)
    }

    pub fn objective(&self, c: &[f64]) -> f64 {
        let (b, v) = self.objective_parts(c);
        b + v
    }
}

/// Bias and variance of the Nadaraya-Watson fit at constants `c`.
pub fn estimate_bias_variance(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    pilot: &PilotFit,
    c: &[f64],
) -> Result<BiasVariance> {
    if c.len() != view.n_axes() || c.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("one positive constant per axis required".into()));
    }
    Ok(PlugIn::new(data, spec, view, pilot, PlugInOptions::default())?.bias_variance(c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub pilot_degree: u32,
    pub grid_size: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub c_points: usize,
    pub sweeps: usize,
    /// Golden-section refinement between the neighbours of each grid minimizer.
    pub refine: bool,
    pub options: PlugInOptions,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            pilot_degree: DEFAULT_PILOT_DEGREE,
            grid_size: 51,
            c_min: 0.1,
            c_max: 3.0,
            c_points: 15,
            sweeps: 3,
            refine: true,
            options: PlugInOptions::default(),
        }
    }
}

impl SelectionConfig {
    pub fn c_grid(&self) -> Vec<f64> {
        let (a, b) = (self.c_min.ln(), self.c_max.ln());
        let m = self.c_points;
        (0..m)
            .map(|i| {
                if i == 0 {
                    self.c_min
                } else if i + 1 == m {
                    self.c_max
                } else {
                    (a + (b - a) * i as f64 / (m - 1) as f64).exp()
                }
            })
            .collect()
    }
}

/// One evaluation of the objective during coordinate descent.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub sweep: usize,
    pub axis: usize,
    pub c: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub bandwidths: Vec<f64>,
    pub constants: Vec<f64>,
    pub objective: f64,
    /// Constants that ended on the upper end of the search grid.
    pub at_upper_bound: Vec<bool>,
    pub surface: Vec<SurfacePoint>,
    pub plugin: PlugIn,
    pub pilot: PilotFit,
}

fn golden(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
        if b - a < 1e-6 * (a + b) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Coordinate descent on a plug-in objective over a log-spaced grid of
/// constants, each sweep updating one axis at a time.
pub fn minimize_objective(
    objective: &dyn Fn(&[f64]) -> f64,
    p: usize,
    config: &SelectionConfig,
) -> Result<(Vec<f64>, f64, Vec<bool>, Vec<SurfacePoint>)> {
    let grid = config.c_grid();
    let mut c = vec![grid[grid.len() / 2]; p];
    let mut surface = Vec::new();
    let mut chosen = vec![grid.len() / 2; p];
    for sweep in 0..config.sweeps {
        for j in 0..p {
            let mut best: Option<(usize, f64)> = None;
            for (idx, &value) in grid.iter().enumerate() {
                let mut trial = c.clone();
                trial[j] = value;
                let obj = objective(&trial);
                surface.push(SurfacePoint {
                    sweep,
                    axis: j,
                    c: trial,
                    objective: obj,
                });
                if obj.is_finite() && best.is_none_or(|(_, b)| obj < b) {
                    best = Some((idx, obj));
                }
            }
            let (idx, _) = best.ok_or_else(|| {
                Error::Selection(format!("objective not finite anywhere on the grid of axis {}", j + 1))
            })?;
            c[j] = grid[idx];
            chosen[j] = idx;
        }
    }
    let at_upper: Vec<bool> = chosen.iter().map(|&i| i + 1 == grid.len()).collect();
    if config.refine {
        for j in 0..p {
            let lo = grid[chosen[j].saturating_sub(1)];
            let hi = grid[(chosen[j] + 1).min(grid.len() - 1)];
            let mut trial = c.clone();
            let best = golden(lo, hi, |v| {
                trial[j] = v;
                objective(&trial)
            });
            let mut candidate = c.clone();
            candidate[j] = best;
            if objective(&candidate) <= objective(&c) {
                c = candidate;
            }
        }
    }
    let value = objective(&c);
    Ok((c, value, at_upper, surface))
}

/// Plug-in bandwidths `h_k = c_k n^{-1/5}` from a polynomial pilot.
pub fn select_bandwidths(data: &Dataset, spec: &ModelSpec, view: &GroupView, config: &SelectionConfig) -> Result<Selection> {
    let pilot = pilot_fit(data, spec, view, config.pilot_degree, config.grid_size)?;
    select_with_pilot(data, spec, view, pilot, config)
}

/// As [`select_bandwidths`] with a prepared pilot.
pub fn select_with_pilot(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    pilot: PilotFit,
    config: &SelectionConfig,
) -> Result<Selection> {
    let plugin = PlugIn::new(data, spec, view, &pilot, config.options)?;
    let p = view.n_axes();
    let (constants, objective, at_upper_bound, surface) =
        minimize_objective(&|c: &[f64]| plugin.objective(c), p, config)?;
    let scale = (data.n() as f64).powf(-0.2);
    Ok(Selection {
        bandwidths: constants.iter().map(|c| c * scale).collect(),
        constants,
        objective,
        at_upper_bound,
        surface,
        plugin,
        pilot,
    })
}
