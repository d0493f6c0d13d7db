//! Brute-force reference computations shared by the integration tests.
//!
//! Nothing here calls the smoother, the backfitting iteration or the kernel
//! module of the library; the discretized smoothed quasi-likelihood is summed
//! over the full tensor grid directly from its definition.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcsbf::sbf::{fit_sbf, fit_sbf_local_linear, standard_grids, FitResult, SbfConfig};
use vcsbf::{
    build_group_view, check_design, CovariateKind, Dataset, Family, FunctionTuple, Grid, GroupView, KernelSpec,
    ModelSpec, Normalizer,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link {
    Identity,
    Logit,
}

/// `(Q, dQ/du, d2Q/du2)` for the canonical quasi-likelihoods.
pub fn q_terms(link: Link, u: f64, y: f64) -> (f64, f64, f64) {
    match link {
        Link::Identity => (-0.5 * (y - u) * (y - u), y - u, -1.0),
        Link::Logit => {
            let mu = 1.0 / (1.0 + (-u).exp());
            (y * u - (1.0 + u.exp()).ln(), y - mu, -mu * (1.0 - mu))
        }
    }
}

pub fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|g| {
            let lo = if g == 0 { points[0] } else { points[g - 1] };
            let hi = if g + 1 == n { points[n - 1] } else { points[g + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}

/// Epanechnikov weights of one observation on a grid, rescaled to unit
/// trapezoid mass.
pub fn kernel_column(x: f64, points: &[f64], h: f64) -> Vec<f64> {
    let q = trapezoid_weights(points);
    let raw: Vec<f64> = points
        .iter()
        .map(|&z| {
            let t = (x - z) / h;
            if t.abs() < 1.0 {
                0.75 * (1.0 - t * t) / h
            } else {
                0.0
            }
        })
        .collect();
    let mass: f64 = raw.iter().zip(&q).map(|(k, w)| k * w).sum();
    raw.iter().map(|k| k / mass).collect()
}

/// The discretized smoothed quasi-likelihood of one dataset.
pub struct Problem {
    pub link: Link,
    pub local_linear: bool,
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    sizes: Vec<usize>,
    /// `kern[k][i]`: support start and values.
    kern: Vec<Vec<(usize, Vec<f64>)>>,
    axis_obs: Vec<Vec<f64>>,
    tilde: Vec<Vec<Vec<f64>>>,
    y: Vec<f64>,
}

pub struct Curvature {
    pub diag: Vec<Vec<DMatrix<f64>>>,
    /// `cross[j][k][(gj, gk)]` for `j < k`.
    pub cross: Vec<Vec<Vec<Vec<DMatrix<f64>>>>>,
}

impl Problem {
    pub fn new(data: &Dataset, view: &GroupView, grids: &[Grid], h: &[f64], local_linear: bool, link: Link) -> Self {
        let p = view.n_axes();
        let n = data.n();
        let points: Vec<Vec<f64>> = grids.iter().map(|g| g.points().to_vec()).collect();
        let q = points.iter().map(|z| trapezoid_weights(z)).collect();
        let mut kern = Vec::new();
        let mut axis_obs = Vec::new();
        let mut tilde = Vec::new();
        for k in 0..p {
            let obs = data.column(view.axis(k)).to_vec();
            kern.push(
                obs.iter()
                    .map(|&x| {
                        let col = kernel_column(x, &points[k], h[k]);
                        let start = col.iter().position(|&v| v > 0.0).unwrap();
                        let end = col.iter().rposition(|&v| v > 0.0).unwrap() + 1;
                        (start, col[start..end].to_vec())
                    })
                    .collect(),
            );
            axis_obs.push(obs);
            tilde.push(
                (0..n)
                    .map(|i| view.group(k).iter().map(|&j| data.column(j)[i]).collect())
                    .collect(),
            );
        }
        Self {
            link,
            local_linear,
            n,
            points,
            q,
            h: h.to_vec(),
            sizes: (0..p).map(|k| view.group_size(k)).collect(),
            kern,
            axis_obs,
            tilde,
            y: data.response().to_vec(),
        }
    }

    pub fn n_axes(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self, k: usize) -> usize {
        if self.local_linear {
            2 * self.sizes[k]
        } else {
            self.sizes[k]
        }
    }

    pub fn zeros(&self) -> FunctionTuple {
        let lens: Vec<usize> = self.points.iter().map(Vec::len).collect();
        FunctionTuple::zeros_with_sizes(&self.sizes, &lens, self.local_linear)
    }

    fn basis(&self, k: usize, i: usize, g: usize) -> Vec<f64> {
        let mut b = self.tilde[k][i].clone();
        if self.local_linear {
            let t = (self.axis_obs[k][i] - self.points[k][g]) / self.h[k];
            b.extend(self.tilde[k][i].iter().map(|x| t * x));
        }
        b
    }

    /// Sum over every observation of the tensor-grid contributions.
    fn accumulate(&self, theta: &FunctionTuple, mut visit: impl FnMut(usize, &[usize], &[Vec<f64>], f64, f64)) {
        let p = self.n_axes();
        for i in 0..self.n {
            let lens: Vec<usize> = (0..p).map(|k| self.kern[k][i].1.len()).collect();
            let bases: Vec<Vec<Vec<f64>>> = (0..p)
                .map(|k| {
                    let start = self.kern[k][i].0;
                    (0..lens[k]).map(|s| self.basis(k, i, start + s)).collect()
                })
                .collect();
            let mut pos = vec![0usize; p];
            'tensor: loop {
                let mut weight = 1.0;
                let mut u = 0.0;
                let mut idx = Vec::with_capacity(p);
                let mut b = Vec::with_capacity(p);
                for k in 0..p {
                    let (start, vals) = &self.kern[k][i];
                    let g = start + pos[k];
                    weight *= self.q[k][g] * vals[pos[k]];
                    let bk = &bases[k][pos[k]];
                    let block = theta.block(k);
                    u += bk.iter().enumerate().map(|(r, v)| v * block[(r, g)]).sum::<f64>();
                    idx.push(g);
                    b.push(bk.clone());
                }
                visit(i, &idx, &b, weight, u);
                let mut k = p;
                loop {
                    if k == 0 {
                        break 'tensor;
                    }
                    k -= 1;
                    pos[k] += 1;
                    if pos[k] < lens[k] {
                        break;
                    }
                    pos[k] = 0;
                }
            }
        }
    }

    /// Objective value and its gradient in the grid values.
    pub fn value_and_gradient(&self, theta: &FunctionTuple) -> (f64, FunctionTuple) {
        let inv_n = 1.0 / self.n as f64;
        let mut value = 0.0;
        let mut grad = self.zeros();
        self.accumulate(theta, |i, idx, b, weight, u| {
            let (q0, q1, _) = q_terms(self.link, u, self.y[i]);
            value += weight * q0 * inv_n;
            for (k, &g) in idx.iter().enumerate() {
                let block = grad.block_mut(k);
                for (r, v) in b[k].iter().enumerate() {
                    block[(r, g)] += weight * q1 * v * inv_n;
                }
            }
        });
        (value, grad)
    }

    /// Gradient divided by the quadrature weight of the differentiated point.
    pub fn estimating_function(&self, theta: &FunctionTuple) -> FunctionTuple {
        let (_, mut grad) = self.value_and_gradient(theta);
        for k in 0..self.n_axes() {
            let block = grad.block_mut(k);
            for (g, &w) in self.q[k].iter().enumerate() {
                for r in 0..block.nrows() {
                    block[(r, g)] /= w;
                }
            }
        }
        grad
    }

    pub fn curvature(&self, theta: &FunctionTuple) -> Curvature {
        let p = self.n_axes();
        let inv_n = 1.0 / self.n as f64;
        let mut diag: Vec<Vec<DMatrix<f64>>> = (0..p)
            .map(|k| vec![DMatrix::zeros(self.dim(k), self.dim(k)); self.points[k].len()])
            .collect();
        let mut cross: Vec<Vec<Vec<Vec<DMatrix<f64>>>>> = (0..p)
            .map(|j| {
                (0..p)
                    .map(|k| {
                        if k > j {
                            vec![vec![DMatrix::zeros(self.dim(j), self.dim(k)); self.points[k].len()]; self.points[j].len()]
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        self.accumulate(theta, |i, idx, b, weight, u| {
            let (_, _, q2) = q_terms(self.link, u, self.y[i]);
            for j in 0..p {
                let bj = DVector::from_column_slice(&b[j]);
                let c = -q2 * weight / self.q[j][idx[j]] * inv_n;
                diag[j][idx[j]] += &bj * bj.transpose() * c;
                for k in j + 1..p {
                    let bk = DVector::from_column_slice(&b[k]);
                    let c = -q2 * weight / (self.q[j][idx[j]] * self.q[k][idx[k]]) * inv_n;
                    cross[j][k][idx[j]][idx[k]] += &bj * bk.transpose() * c;
                }
            }
        });
        Curvature { diag, cross }
    }

    fn flatten(t: &FunctionTuple) -> Vec<f64> {
        t.blocks().iter().flat_map(|b| b.as_slice().to_vec()).collect()
    }

    fn unflatten(&self, v: &[f64]) -> FunctionTuple {
        let mut out = self.zeros();
        let mut off = 0;
        for k in 0..self.n_axes() {
            let block = out.block_mut(k);
            let len = block.len();
            block.as_mut_slice().copy_from_slice(&v[off..off + len]);
            off += len;
        }
        out
    }

    /// Maximizer by BFGS with exact line searches, exploiting that the
    /// gradient is affine in the parameters for the identity link.
    pub fn maximize_quadratic(&self) -> FunctionTuple {
        assert_eq!(self.link, Link::Identity);
        let grad_at = |v: &[f64]| -> DVector<f64> {
            let (_, g) = self.value_and_gradient(&self.unflatten(v));
            -DVector::from_vec(Self::flatten(&g))
        };
        let dim = Self::flatten(&self.zeros()).len();
        let mut x = DVector::zeros(dim);
        let mut g = grad_at(x.as_slice());
        let scale = g.amax().max(1.0);
        let mut hinv = DMatrix::<f64>::identity(dim, dim);
        for _ in 0..20 * dim {
            if g.amax() <= 1e-14 * scale {
                break;
            }
            let d = -(&hinv * &g);
            let hd = grad_at((&x + &d).as_slice()) - &g;
            let curv = d.dot(&hd);
            if !(curv > 0.0) {
                break;
            }
            let alpha = -g.dot(&d) / curv;
            let s = &d * alpha;
            x += &s;
            let g_new = grad_at(x.as_slice());
            let yv = &g_new - &g;
            g = g_new;
            let sy = s.dot(&yv);
            if !(sy > 0.0) {
                break;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - &s * yv.transpose() * rho;
            let right = &eye - &yv * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        self.unflatten(x.as_slice())
    }
}

/// A small identity-link instance with two smoothing axes.
pub struct Instance {
    pub spec: ModelSpec,
    pub view: GroupView,
    pub data: Dataset,
    pub bandwidths: Vec<f64>,
    pub grids: Vec<Grid>,
}

pub fn random_instance(seed: u64) -> Instance {
    use CovariateKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(30..=50);
        let variant = rng.random_range(0..2);
        let (kinds, sets) = if variant == 0 {
            (vec![Intercept, Continuous, Continuous], vec![vec![2, 3], vec![3]])
        } else {
            (vec![Intercept, Discrete, Continuous, Continuous], vec![vec![3, 4], vec![4]])
        };
        let spec = ModelSpec::new(kinds.clone(), sets, Family::Identity).unwrap();
        let view = build_group_view(&spec).unwrap();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); kinds.len()];
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = kinds
                .iter()
                .map(|k| match k {
                    Intercept => 1.0,
                    Discrete => f64::from(rng.random_bool(0.5) as u8),
                    Continuous => rng.random::<f64>(),
                })
                .collect();
            let (a, b) = (row[kinds.len() - 2], row[kinds.len() - 1]);
            let signal = (3.0 * a).sin() + b * b + row[1] * (b - 0.5);
            y.push(signal + 0.3 * (rng.random::<f64>() - 0.5));
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        let data = Dataset::new(y, cols).unwrap();
        let bandwidths: Vec<f64> = (0..2).map(|_| rng.random_range(0.25..0.45)).collect();
        let grids = standard_grids(21, 2).unwrap();
        let report = check_design(&data, &spec, &view, &bandwidths, &grids[0], 1e-3).unwrap();
        if report.passes() {
            return Instance {
                spec,
                view,
                data,
                bandwidths,
                grids,
            };
        }
    }
}

pub struct OracleCheck {
    pub gap: f64,
    pub converged: bool,
    pub reported_residual: f64,
    /// `max |F|` at the returned tuple, recomputed by brute force.
    pub brute_residual: f64,
}

pub fn fit_instance(inst: &Instance, local_linear: bool) -> FitResult {
    let kernel = KernelSpec::epanechnikov(inst.bandwidths.clone()).unwrap();
    let config = SbfConfig {
        grid_size: 21,
        ..SbfConfig::default()
    };
    if local_linear {
        fit_sbf_local_linear(&inst.data, &inst.spec, &inst.view, &kernel, &config).unwrap()
    } else {
        fit_sbf(&inst.data, &inst.spec, &inst.view, &kernel, &config).unwrap()
    }
}

/// Backfitting fit against direct maximization, both normalized.
pub fn check_against_oracle(inst: &Instance, local_linear: bool) -> OracleCheck {
    let fit = fit_instance(inst, local_linear);
    let problem = Problem::new(&inst.data, &inst.view, &inst.grids, &inst.bandwidths, local_linear, Link::Identity);
    let direct = problem.maximize_quadratic();
    let normalizer = Normalizer::new(&inst.spec, &inst.view, &inst.grids, &inst.bandwidths).unwrap();
    let (tuple, par) = normalizer.normalize(&direct);
    let mut gap = tuple.max_abs_diff(&fit.components);
    for (a, b) in par.linear.iter().zip(&fit.parametric.linear) {
        gap = gap.max((a - b).abs());
    }
    for (key, a) in &par.products {
        let b = fit.parametric.products.get(key).copied().unwrap_or(0.0);
        gap = gap.max((a - b).abs());
    }
    OracleCheck {
        gap,
        converged: fit.converged,
        reported_residual: fit.final_residual().unwrap(),
        brute_residual: problem.estimating_function(&fit.raw).max_abs(),
    }
}

/// Identity-link design A covariates with a response built by `f`.
pub fn identity_design_a(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> (ModelSpec, GroupView, Dataset) {
    use CovariateKind::*;
    let spec = ModelSpec::new(
        vec![Intercept, Discrete, Continuous, Continuous],
        vec![vec![3, 4], vec![3, 4], vec![4], vec![3]],
        Family::Identity,
    )
    .unwrap();
    let view = build_group_view(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); 4];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [1.0, f64::from(rng.random_bool(0.5) as u8), rng.random::<f64>(), rng.random::<f64>()];
        y.push(f(&row));
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    (spec, view, Dataset::new(y, cols).unwrap())
}
