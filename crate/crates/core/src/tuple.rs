//! Discretized coefficient-function tuples and the identifiability
//! normalization.
//!
//! A [`FunctionTuple`] stores, for every smoothing axis `k`, a block whose
//! rows are the components of `f_k` (one per member of `x~_k`) sampled on the
//! axis grid. Local-linear tuples append one slope row per component holding
//! `h_k f'_{jl}`.
//!
//! [`Normalizer`] maps a raw tuple to the constrained representative and the
//! parametric terms it removed: constants become coefficients of `x_j`, linear
//! trends of `C_0` pairs become coefficients of `x_j x_l`. When the model has an
//! intercept column `x_0` whose index set contains an axis `x_j`, the
//! coefficient of `x_j` is moved back into `f_{0j}` as a centered linear trend.
//! The map is linear, idempotent and leaves the linear predictor unchanged.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::Grid;
use crate::model::{CovariateKind, GroupView, ModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTuple {
    blocks: Vec<DMatrix<f64>>,
    sizes: Vec<usize>,
    local_linear: bool,
}

impl FunctionTuple {
    pub fn zeros(view: &GroupView, grid_sizes: &[usize], local_linear: bool) -> Self {
        let sizes: Vec<usize> = (0..view.n_axes()).map(|k| view.group_size(k)).collect();
        Self::zeros_with_sizes(&sizes, grid_sizes, local_linear)
    }

    /// Tuple with `sizes[k]` components on axis `k`.
    pub fn zeros_with_sizes(sizes: &[usize], grid_sizes: &[usize], local_linear: bool) -> Self {
        assert_eq!(sizes.len(), grid_sizes.len());
        let factor = if local_linear { 2 } else { 1 };
        let blocks = sizes
            .iter()
            .zip(grid_sizes)
            .map(|(&d, &g)| DMatrix::zeros(factor * d, g))
            .collect();
        Self {
            blocks,
            sizes: sizes.to_vec(),
            local_linear,
        }
    }

    /// Samples `f(k, slot, z)` on the grids; slope rows stay zero.
    pub fn from_fn(
        view: &GroupView,
        grids: &[Grid],
        local_linear: bool,
        f: impl Fn(usize, usize, f64) -> f64,
    ) -> Self {
        let sizes: Vec<usize> = grids.iter().map(Grid::len).collect();
        let mut out = Self::zeros(view, &sizes, local_linear);
        for (k, grid) in grids.iter().enumerate() {
            for slot in 0..view.group_size(k) {
                for (g, &z) in grid.points().iter().enumerate() {
                    out.blocks[k][(slot, g)] = f(k, slot, z);
                }
            }
        }
        out
    }

    pub fn n_axes(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_local_linear(&self) -> bool {
        self.local_linear
    }

    /// Number of components on axis `k`.
    pub fn group_size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn grid_len(&self, k: usize) -> usize {
        self.blocks[k].ncols()
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.blocks[k]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn value(&self, k: usize, slot: usize, g: usize) -> f64 {
        self.blocks[k][(slot, g)]
    }

    pub fn component(&self, k: usize, slot: usize) -> Vec<f64> {
        self.blocks[k].row(slot).iter().copied().collect()
    }

    /// Slope row `h_k f'` of a local-linear tuple.
    pub fn slope(&self, k: usize, slot: usize) -> Option<Vec<f64>> {
        self.local_linear
            .then(|| self.blocks[k].row(self.sizes[k] + slot).iter().copied().collect())
    }

    /// Level part only.
    pub fn levels(&self) -> Self {
        if !self.local_linear {
            return self.clone();
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&self.sizes)
            .map(|(b, &d)| b.rows(0, d).into_owned())
            .collect();
        Self {
            blocks,
            sizes: self.sizes.clone(),
            local_linear: false,
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.blocks.iter_mut().zip(&other.blocks) {
            *x += y * a;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// `sum_k int |f_k|^2` with the given per-axis quadrature weights.
    pub fn squared_norm(&self, weights: &[Vec<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(weights)
            .map(|(b, w)| {
                b.row_iter()
                    .map(|row| row.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Parametric terms split off by the normalization, 0-based covariates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParametricPart {
    /// Coefficient of `x_j`.
    pub linear: Vec<f64>,
    /// Coefficient of `x_j x_l`, keyed by `(min, max)`.
    pub products: BTreeMap<(usize, usize), f64>,
}

impl ParametricPart {
    pub fn zeros(n_covariates: usize) -> Self {
        Self {
            linear: vec![0.0; n_covariates],
            products: BTreeMap::new(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(a, v)| a * v).sum();
        let prod: f64 = self.products.iter().map(|(&(j, l), a)| a * x[j] * x[l]).sum();
        lin + prod
    }

    pub fn squared_norm(&self) -> f64 {
        self.linear.iter().map(|a| a * a).sum::<f64>()
            + self.products.values().map(|a| a * a).sum::<f64>()
    }

    fn add_product(&mut self, j: usize, l: usize, value: f64) {
        *self.products.entry((j.min(l), j.max(l))).or_insert(0.0) += value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Absorb {
    axis: usize,
    slot: usize,
    intercept: usize,
}

/// The normalization map for one model, grid set and bandwidth vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    points: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    quadrature: Vec<Vec<f64>>,
    means: Vec<f64>,
    variances: Vec<f64>,
    members: Vec<Vec<usize>>,
    axis_cov: Vec<usize>,
    c0: Vec<Vec<bool>>,
    absorb: Vec<Option<Absorb>>,
    bandwidths: Vec<f64>,
    n_covariates: usize,
}

impl Normalizer {
    /// `bandwidths` scale the slope rows of local-linear tuples; any positive
    /// values will do for Nadaraya-Watson tuples.
    pub fn new(spec: &ModelSpec, view: &GroupView, grids: &[Grid], bandwidths: &[f64]) -> Result<Self> {
        let p = view.n_axes();
        if grids.len() != p || bandwidths.len() != p {
            return Err(Error::Normalization(format!(
                "{} grids and {} bandwidths for {p} axes",
                grids.len(),
                bandwidths.len()
            )));
        }
        let mut weights = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut variances = Vec::with_capacity(p);
        for (k, grid) in grids.iter().enumerate() {
            let w_fn = spec.weight(view.axis(k));
            let raw: Vec<f64> = grid
                .points()
                .iter()
                .zip(grid.weights())
                .map(|(&z, &q)| q * w_fn.eval(z))
                .collect();
            let mass: f64 = raw.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::Normalization(format!("weight of axis {} has no mass", k + 1)));
            }
            let w: Vec<f64> = raw.iter().map(|v| v / mass).collect();
            let mean: f64 = w.iter().zip(grid.points()).map(|(w, z)| w * z).sum();
            let var: f64 = w
                .iter()
                .zip(grid.points())
                .map(|(w, z)| w * (z - mean) * (z - mean))
                .sum();
            if !(var > 1e-14) {
                return Err(Error::Normalization(format!(
                    "weight of axis {} has zero variance",
                    k + 1
                )));
            }
            weights.push(w);
            means.push(mean);
            variances.push(var);
        }
        let mut absorb = vec![None; spec.n_covariates()];
        for (j, slot_absorb) in absorb.iter_mut().enumerate() {
            if !spec.in_c0(j) {
                continue;
            }
            let k = view.axis_of(j).unwrap();
            *slot_absorb = view
                .group(k)
                .iter()
                .position(|&j0| spec.kind(j0) == CovariateKind::Intercept)
                .map(|slot| Absorb {
                    axis: k,
                    slot,
                    intercept: view.group(k)[slot],
                });
        }
        Ok(Self {
            points: grids.iter().map(|g| g.points().to_vec()).collect(),
            quadrature: grids.iter().map(|g| g.weights().to_vec()).collect(),
            weights,
            means,
            variances,
            members: view.groups().to_vec(),
            axis_cov: view.axes().to_vec(),
            c0: (0..p)
                .map(|k| (0..view.group_size(k)).map(|s| view.is_c0_pair(k, s)).collect())
                .collect(),
            absorb,
            bandwidths: bandwidths.to_vec(),
            n_covariates: spec.n_covariates(),
        })
    }

    /// Normalized weights `w_l` times trapezoid weights, per axis.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Plain trapezoid weights, per axis.
    pub fn quadrature(&self) -> &[Vec<f64>] {
        &self.quadrature
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.means[k]
    }

    /// Whether `alpha_j x_j` is folded into an intercept component.
    pub fn is_absorbed(&self, j: usize) -> bool {
        self.absorb.get(j).is_some_and(Option::is_some)
    }

    pub fn normalize(&self, raw: &FunctionTuple) -> (FunctionTuple, ParametricPart) {
        let mut out = raw.clone();
        let mut par = ParametricPart::zeros(self.n_covariates);
        for k in 0..out.n_axes() {
            let d = out.group_size(k);
            let w = &self.weights[k];
            let z = &self.points[k];
            let (mu, var) = (self.means[k], self.variances[k]);
            let h = self.bandwidths[k];
            for slot in 0..d {
                let j = self.members[k][slot];
                let l = self.axis_cov[k];
                let a: f64 = out.blocks[k].row(slot).iter().zip(w).map(|(f, w)| f * w).sum();
                if self.c0[k][slot] {
                    let b: f64 = out.blocks[k]
                        .row(slot)
                        .iter()
                        .zip(w)
                        .zip(z)
                        .map(|((f, w), z)| f * w * (z - mu))
                        .sum::<f64>()
                        / var;
                    for (g, &zg) in z.iter().enumerate() {
                        out.blocks[k][(slot, g)] -= a + b * (zg - mu);
                    }
                    if out.local_linear {
                        for g in 0..z.len() {
                            out.blocks[k][(d + slot, g)] -= b * h;
                        }
                    }
                    par.linear[j] += a - b * mu;
                    par.add_product(j, l, b);
                } else {
                    for g in 0..z.len() {
                        out.blocks[k][(slot, g)] -= a;
                    }
                    par.linear[j] += a;
                }
            }
        }
        for (j, target) in self.absorb.iter().enumerate() {
            let Some(t) = target else { continue };
            let alpha = par.linear[j];
            if alpha == 0.0 {
                continue;
            }
            let mu = self.means[t.axis];
            let d = out.group_size(t.axis);
            for (g, &zg) in self.points[t.axis].iter().enumerate() {
                out.blocks[t.axis][(t.slot, g)] += alpha * (zg - mu);
            }
            if out.local_linear {
                let h = self.bandwidths[t.axis];
                for g in 0..self.points[t.axis].len() {
                    out.blocks[t.axis][(d + t.slot, g)] += alpha * h;
                }
            }
            par.linear[t.intercept] += alpha * mu;
            par.linear[j] = 0.0;
        }
        (out, par)
    }

    /// Squared norm of the normalized tuple plus its parametric part; the
    /// distance used by the convergence criteria.
    pub fn measure(&self, raw: &FunctionTuple) -> f64 {
        let (t, par) = self.normalize(raw);
        t.squared_norm(&self.weights) + par.squared_norm()
    }

    /// Largest violation of the centering and first-moment constraints over
    /// the level rows of a normalized tuple.
    pub fn constraint_violation(&self, normalized: &FunctionTuple) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..normalized.n_axes() {
            let w = &self.weights[k];
            let z = &self.points[k];
            for slot in 0..normalized.group_size(k) {
                let row = normalized.blocks[k].row(slot);
                let c: f64 = row.iter().zip(w).map(|(f, w)| f * w).sum();
                worst = worst.max(c.abs());
                if self.c0[k][slot] {
                    let m: f64 = row.iter().zip(w).zip(z).map(|((f, w), z)| f * w * z).sum();
                    worst = worst.max(m.abs());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::model::build_group_view;
    use CovariateKind::*;

    fn model_a() -> (ModelSpec, GroupView, Vec<Grid>) {
        let spec = ModelSpec::new(
            vec![Intercept, Discrete, Continuous, Continuous],
            vec![vec![3, 4], vec![3, 4], vec![4], vec![3]],
            Family::Logit,
        )
        .unwrap();
        let view = build_group_view(&spec).unwrap();
        let grids = vec![Grid::uniform(51).unwrap(), Grid::uniform(41).unwrap()];
        (spec, view, grids)
    }

    fn predictor(
        view: &GroupView,
        grids: &[Grid],
        t: &FunctionTuple,
        par: &ParametricPart,
        x: &[f64],
    ) -> f64 {
        let mut s = par.eval(x);
        for k in 0..view.n_axes() {
            for (slot, &j) in view.group(k).iter().enumerate() {
                s += x[j] * grids[k].interpolate(&t.component(k, slot), x[view.axis(k)]);
            }
        }
        s
    }

    #[test]
    fn zero_constant_and_linear_examples() {
        let (spec, view, grids) = model_a();
        let norm = Normalizer::new(&spec, &view, &grids, &[0.3, 0.3]).unwrap();
        let zero = FunctionTuple::zeros(&view, &[51, 41], false);
        assert_eq!(norm.normalize(&zero).0, zero);
        // x2 on the x3 axis only carries the centering constraint
        let kd = view.axis_of(2).unwrap();
        let sd = view.slot(kd, 1).unwrap();
        let constant =
            FunctionTuple::from_fn(&view, &grids, false, |k, s, _| if (k, s) == (kd, sd) { 2.5 } else { 0.0 });
        let (n, par) = norm.normalize(&constant);
        assert!(n.max_abs() < 1e-14);
        assert!((par.linear[1] - 2.5).abs() < 1e-14);
        // x4 on the x3 axis is a C_0 pair
        let k = view.axis_of(2).unwrap();
        let slot = view.slot(k, 3).unwrap();
        assert!(view.is_c0_pair(k, slot));
        let lin = FunctionTuple::from_fn(&view, &grids, false, |kk, s, z| {
            if kk == k && s == slot {
                z
            } else {
                0.0
            }
        });
        let (n, par) = norm.normalize(&lin);
        // a = 1/2 and b = 1 cancel in the x4 coefficient a - b * mean
        assert!(n.max_abs() < 1e-14);
        assert!((par.products[&(2, 3)] - 1.0).abs() < 1e-14);
        assert!(par.linear.iter().all(|a| a.abs() < 1e-14));
    }

    #[test]
    fn idempotent_constraint_satisfying_and_predictor_preserving() {
        let (spec, view, grids) = model_a();
        for ll in [false, true] {
            let norm = Normalizer::new(&spec, &view, &grids, &[0.3, 0.2]).unwrap();
            let mut t = FunctionTuple::from_fn(&view, &grids, ll, |k, s, z| {
                ((k + 1) as f64 * z).exp() * (s as f64 + 1.0) + (7.0 * z + s as f64).sin()
            });
            if ll {
                for k in 0..2 {
                    let d = t.group_size(k);
                    for s in 0..d {
                        for g in 0..t.grid_len(k) {
                            t.block_mut(k)[(d + s, g)] = (g as f64 * 0.1 + s as f64).cos();
                        }
                    }
                }
            }
            let (n1, p1) = norm.normalize(&t);
            let (n2, p2) = norm.normalize(&n1);
            assert!(n1.max_abs_diff(&n2) < 1e-12);
            assert!(p2.squared_norm() < 1e-24);
            assert!(norm.constraint_violation(&n1) < 1e-10);
            let zero = ParametricPart::zeros(4);
            for x in [[1.0, 0.0, 0.3, 0.8], [1.0, 1.0, 0.01, 0.5], [1.0, 1.0, 0.77, 0.99]] {
                let raw = predictor(&view, &grids, &t, &zero, &x);
                let normalized = predictor(&view, &grids, &n1, &p1, &x);
                assert!((raw - normalized).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn null_directions_are_removed() {
        let (spec, view, grids) = model_a();
        let norm = Normalizer::new(&spec, &view, &grids, &[0.3, 0.2]).unwrap();
        // c on f_{1,3}, -c on f_{1,4}; b u on f_{4,3}, -b u on f_{3,4};
        // c u on f_{1,3} and -c on f_{3,4}
        let k3 = view.axis_of(2).unwrap();
        let k4 = view.axis_of(3).unwrap();
        let t = FunctionTuple::from_fn(&view, &grids, false, |k, s, z| {
            let j = view.group(k)[s];
            match (k == k3, j) {
                (true, 0) => 1.3 + 0.7 * z,
                (false, 0) => -1.3,
                (true, 3) => 0.4 * z,
                (false, 2) => -0.4 * z - 0.7,
                _ => 0.0,
            }
        });
        let _ = k4;
        assert!(norm.measure(&t) < 1e-24);
    }
}
