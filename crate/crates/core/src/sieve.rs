//! Sieve estimators: cubic regression splines and plain polynomials in an
//! adjusted power basis, fitted by Newton iteration on the sample
//! quasi-likelihood.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::model::{validate_dataset, Dataset, GroupView, ModelSpec, WeightFn};
use crate::sbf::{standard_grids, EstimatorKind, FitResult};
use crate::tuple::{FunctionTuple, Normalizer, ParametricPart};

pub const NEWTON_MAX_STEPS: usize = 50;
pub const NEWTON_GRADIENT_TOL: f64 = 1e-8;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(m, m);
    for i in 1..m {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Raw function before orthogonalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawFn {
    /// `z^r`
    Power(u32),
    /// `(z - knot)_+^3`
    Truncated(f64),
}

impl RawFn {
    /// `order`-th derivative at `z`.
    pub fn eval(self, z: f64, order: u32) -> f64 {
        match self {
            RawFn::Power(r) => {
                if order > r {
                    return 0.0;
                }
                let factor: f64 = (r - order + 1..=r).map(f64::from).product();
                factor * z.powi((r - order) as i32)
            }
            RawFn::Truncated(knot) => {
                let t = (z - knot).max(0.0);
                match order {
                    0 => t * t * t,
                    1 => 3.0 * t * t,
                    2 => 6.0 * t,
                    3 => {
                        if z > knot {
                            6.0
                        } else {
                            0.0
                        }
                    }
                    _ => 0.0,
                }
            }
        }
    }
}

/// `s_0 = 1`, `s_1` centered, and every further `s_r` orthogonal to both in
/// `L^2([0, 1], w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
    raw: Vec<RawFn>,
    /// Row `r` holds the raw coefficients of `s_r`.
    coef: DMatrix<f64>,
    nodes: Vec<f64>,
    node_weights: Vec<f64>,
}

impl SplineBasis {
    /// Cubic regression spline with `knots` equispaced interior knots.
    pub fn cubic(knots: usize, weight: WeightFn) -> Result<Self> {
        if knots == 0 {
            return Err(Error::Config("a cubic spline needs at least one knot".into()));
        }
        let xi: Vec<f64> = (1..=knots).map(|k| k as f64 / (knots + 1) as f64).collect();
        let mut raw: Vec<RawFn> = (0..=3).map(RawFn::Power).collect();
        raw.extend(xi.iter().map(|&k| RawFn::Truncated(k)));
        Ok(Self::build(xi, raw, weight))
    }

    /// Polynomials of the given degree.
    pub fn polynomial(degree: u32, weight: WeightFn) -> Self {
        Self::build(Vec::new(), (0..=degree).map(RawFn::Power).collect(), weight)
    }

    fn build(knots: Vec<f64>, raw: Vec<RawFn>, weight: WeightFn) -> Self {
        // piecewise rule, exact for the products of two cubic pieces
        let (gl_x, gl_w) = gauss_legendre(6);
        let mut breaks = vec![0.0];
        breaks.extend(knots.iter().copied());
        breaks.push(1.0);
        let mut nodes = Vec::new();
        let mut node_weights = Vec::new();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for (x, w) in gl_x.iter().zip(&gl_w) {
                let z = 0.5 * (a + b) + 0.5 * (b - a) * x;
                nodes.push(z);
                node_weights.push(0.5 * (b - a) * w * weight.eval(z));
            }
        }
        let q = raw.len();
        let mut coef = DMatrix::<f64>::identity(q, q);
        let mut basis = Self {
            knots,
            raw,
            coef: coef.clone(),
            nodes,
            node_weights,
        };
        if q >= 2 {
            let c = basis.inner_rows(1, 0) / basis.inner_rows(0, 0);
            coef[(1, 0)] -= c;
            basis.coef = coef.clone();
        }
        for r in 2..q {
            for s in 0..2.min(q) {
                let c = basis.inner_rows(r, s) / basis.inner_rows(s, s);
                let sub = basis.coef.row(s) * c;
                let mut row = coef.row_mut(r);
                row -= &sub;
            }
            basis.coef = coef.clone();
        }
        basis
    }

    fn inner_rows(&self, a: usize, b: usize) -> f64 {
        self.nodes
            .iter()
            .zip(&self.node_weights)
            .map(|(&z, &w)| w * self.eval(a, z, 0) * self.eval(b, z, 0))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `order`-th derivative of `s_r` at `z`.
    pub fn eval(&self, r: usize, z: f64, order: u32) -> f64 {
        self.raw
            .iter()
            .enumerate()
            .map(|(q, f)| {
                let c = self.coef[(r, q)];
                if c == 0.0 {
                    0.0
                } else {
                    c * f.eval(z, order)
                }
            })
            .sum()
    }

    /// Gram matrix of the adjusted basis in `L^2([0, 1], w)`.
    pub fn gram(&self) -> DMatrix<f64> {
        let q = self.len();
        DMatrix::from_fn(q, q, |a, b| self.inner_rows(a, b))
    }
}

/// One column of a sieve design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    /// `x_j`
    Linear(usize),
    /// `x_j x_l`, `j < l`
    Product(usize, usize),
    /// `x_j s_r(x_l)` for the component in `slot` of axis `k`
    Basis { k: usize, slot: usize, r: usize },
}

/// Free coefficients of a sieve fit. Constant parts of the components are
/// carried by `x_j` columns, linear parts of `C_0` pairs by product columns,
/// and `x_j` columns of covariates absorbed into an intercept component are
/// left out; the design is then free of exact collinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveLayout {
    pub columns: Vec<Column>,
    pub axes: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub bases: Vec<SplineBasis>,
}

impl SieveLayout {
    pub fn new(spec: &ModelSpec, view: &GroupView, normalizer: &Normalizer, bases: Vec<SplineBasis>) -> Result<Self> {
        if bases.len() != view.n_axes() {
            return Err(Error::Specification("one basis per smoothing axis required".into()));
        }
        let mut columns = Vec::new();
        for j in 0..spec.n_covariates() {
            if spec.index_set(j).is_empty() {
                continue;
            }
            let absorbed = normalizer.is_absorbed(j) && bases[view.axis_of(j).unwrap()].len() >= 2;
            if !absorbed {
                columns.push(Column::Linear(j));
            }
        }
        for j in 0..spec.n_covariates() {
            for l in j + 1..spec.n_covariates() {
                let present = spec.index_set(j).contains(&l) || spec.index_set(l).contains(&j);
                if present && spec.is_c0_pair(j, l) {
                    columns.push(Column::Product(j, l));
                }
            }
        }
        for k in 0..view.n_axes() {
            for slot in 0..view.group_size(k) {
                let first = if view.is_c0_pair(k, slot) { 2 } else { 1 };
                for r in first..bases[k].len() {
                    columns.push(Column::Basis { k, slot, r });
                }
            }
        }
        Ok(Self {
            columns,
            axes: view.axes().to_vec(),
            members: view.groups().to_vec(),
            bases,
        })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| match *c {
                Column::Linear(j) => x[j],
                Column::Product(j, l) => x[j] * x[l],
                Column::Basis { k, slot, r } => {
                    x[self.members[k][slot]] * self.bases[k].eval(r, x[self.axes[k]], 0)
                }
            })
            .collect()
    }

    pub fn design(&self, data: &Dataset) -> DMatrix<f64> {
        let n = data.n();
        let mut out = DMatrix::zeros(n, self.len());
        for i in 0..n {
            let row = self.row(&data.row(i));
            for (c, v) in row.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        out
    }
}

/// Coefficients of a sieve fit together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveFit {
    pub layout: SieveLayout,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl SieveFit {
    /// `order`-th derivative of the component in `slot` of axis `k`.
    pub fn component(&self, k: usize, slot: usize, z: f64, order: u32) -> f64 {
        self.layout
            .columns
            .iter()
            .zip(&self.coefficients)
            .filter_map(|(c, b)| match *c {
                Column::Basis { k: ck, slot: cs, r } if ck == k && cs == slot => {
                    Some(b * self.layout.bases[k].eval(r, z, order))
                }
                _ => None,
            })
            .sum()
    }

    pub fn parametric(&self, n_covariates: usize) -> ParametricPart {
        let mut par = ParametricPart::zeros(n_covariates);
        for (c, &b) in self.layout.columns.iter().zip(&self.coefficients) {
            match *c {
                Column::Linear(j) => par.linear[j] += b,
                Column::Product(j, l) => {
                    *par.products.entry((j, l)).or_insert(0.0) += b;
                }
                Column::Basis { .. } => {}
            }
        }
        par
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.layout
            .row(x)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// First and second partial derivative of the linear predictor along
    /// covariate `l`.
    pub fn partials(&self, x: &[f64], l: usize) -> (f64, f64) {
        let (mut d1, mut d2) = (0.0, 0.0);
        for (c, &b) in self.layout.columns.iter().zip(&self.coefficients) {
            match *c {
                Column::Linear(j) if j == l => d1 += b,
                Column::Product(j, m) if j == l => d1 += b * x[m],
                Column::Product(j, m) if m == l => d1 += b * x[j],
                Column::Basis { k, slot, r } => {
                    let (axis, j) = (self.layout.axes[k], self.layout.members[k][slot]);
                    let basis = &self.layout.bases[k];
                    if axis == l {
                        d1 += b * x[j] * basis.eval(r, x[axis], 1);
                        d2 += b * x[j] * basis.eval(r, x[axis], 2);
                    }
                    if j == l {
                        d1 += b * basis.eval(r, x[axis], 0);
                    }
                }
                _ => {}
            }
        }
        (d1, d2)
    }

    /// Components sampled on `grids`, in raw tuple form.
    pub fn sample(&self, view: &GroupView, grids: &[crate::kernel::Grid]) -> FunctionTuple {
        FunctionTuple::from_fn(view, grids, false, |k, slot, z| self.component(k, slot, z, 0))
    }
}

/// Newton iteration with step-halving for the quasi-likelihood of a linear
/// predictor `X beta`. Returns the coefficients, the number of steps and any
/// ridge warnings.
pub fn fit_glm(design: &DMatrix<f64>, y: &[f64], family: Family) -> Result<(Vec<f64>, usize, Vec<String>)> {
    let (n, q) = design.shape();
    let mut beta = DVector::zeros(q);
    let mut warnings = Vec::new();
    let objective = |eta: &DVector<f64>| -> f64 {
        eta.iter().zip(y).map(|(&u, &yi)| family.quasi_likelihood(u, yi)).sum()
    };
    let mut eta = design * &beta;
    let mut current = objective(&eta);
    for step in 0..=NEWTON_MAX_STEPS {
        let mut score = DVector::zeros(n);
        let mut curv = DVector::zeros(n);
        for i in 0..n {
            let (q1, q2) = family.q_derivs_unchecked(eta[i], y[i]);
            score[i] = q1;
            curv[i] = -q2;
        }
        let grad = design.tr_mul(&score);
        if grad.amax() / n as f64 <= NEWTON_GRADIENT_TOL {
            return Ok((beta.as_slice().to_vec(), step, warnings));
        }
        if step == NEWTON_MAX_STEPS {
            break;
        }
        let mut weighted = design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= curv[i];
        }
        let mut hess = design.tr_mul(&weighted);
        let direction = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                let scale = (hess.trace() / q as f64).max(f64::MIN_POSITIVE);
                for a in 0..q {
                    hess[(a, a)] += 1e-8 * scale;
                }
                let msg = "ridge jitter applied to the sieve information matrix".to_string();
                if !warnings.contains(&msg) {
                    warnings.push(msg);
                }
                hess.clone()
                    .cholesky()
                    .map(|c| c.solve(&grad))
                    .or_else(|| hess.lu().solve(&grad))
                    .ok_or_else(|| Error::NewtonDivergence("singular information matrix".into()))?
            }
        };
        let mut t = 1.0;
        loop {
            let trial = &beta + &direction * t;
            let trial_eta = design * &trial;
            let value = objective(&trial_eta);
            if value.is_finite() && value >= current - 1e-12 * current.abs() {
                beta = trial;
                eta = trial_eta;
                current = value;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::NewtonDivergence(format!(
                    "step-halving failed at step {}",
                    step + 1
                )));
            }
        }
    }
    Err(Error::NewtonDivergence(format!(
        "gradient above {NEWTON_GRADIENT_TOL} after {NEWTON_MAX_STEPS} steps"
    )))
}

/// Sieve fit with one basis per axis.
pub fn fit_sieve(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    normalizer: &Normalizer,
    bases: Vec<SplineBasis>,
) -> Result<SieveFit> {
    let layout = SieveLayout::new(spec, view, normalizer, bases)?;
    let design = layout.design(data);
    let (coefficients, iterations, warnings) = fit_glm(&design, data.response(), spec.family())?;
    Ok(SieveFit {
        layout,
        coefficients,
        iterations,
        warnings,
    })
}

/// Cubic regression spline estimator with `knots` equispaced knots per axis,
/// reported on standard grids of `grid_size` points.
pub fn fit_spline(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    knots: usize,
    grid_size: usize,
) -> Result<FitResult> {
    if let Some(v) = validate_dataset(data, spec).first() {
        return Err(Error::Dataset(v.to_string()));
    }
    let p = view.n_axes();
    let grids = standard_grids(grid_size, p)?;
    let spacing = 1.0 / (knots + 1) as f64;
    let bandwidths = vec![spacing.min(0.5); p];
    let normalizer = Normalizer::new(spec, view, &grids, &bandwidths)?;
    let bases = (0..p)
        .map(|k| SplineBasis::cubic(knots, spec.weight(view.axis(k))))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_sieve(data, spec, view, &normalizer, bases)?;
    let raw = fit.sample(view, &grids);
    let (components, shift) = normalizer.normalize(&raw);
    let mut parametric = fit.parametric(spec.n_covariates());
    for (j, v) in shift.linear.iter().enumerate() {
        parametric.linear[j] += v;
    }
    for (key, v) in shift.products {
        *parametric.products.entry(key).or_insert(0.0) += v;
    }
    Ok(FitResult {
        kind: EstimatorKind::Spline,
        family: spec.family(),
        bandwidths,
        grids,
        axes: view.axes().to_vec(),
        members: view.groups().to_vec(),
        components,
        parametric,
        raw,
        outer_criteria: Vec::new(),
        residuals: Vec::new(),
        inner_sweeps: Vec::new(),
        inner_ratios: Vec::new(),
        warnings: fit.warnings,
        converged: true,
    })
}
