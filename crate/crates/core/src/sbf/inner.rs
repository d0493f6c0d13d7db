//! Inner backfitting iteration for the linearized estimating equations
//! `W_jj d_j + sum_{k != j} int W_jk d_k = F_j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernel::Grid;
use crate::sbf::smoother::SmootherMatrices;
use crate::tuple::FunctionTuple;

/// Condition number above which a diagonal block receives ridge jitter.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Consecutive non-contracting sweeps tolerated before giving up.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerStart {
    /// Start from zero.
    Zero,
    /// Start from `W_jj^{-1} F_j`.
    #[default]
    DeltaTilde,
    /// Start from the previous outer step's solution.
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    /// Relative change of the normalized update, in norm, at which sweeps stop.
    pub tol: f64,
    pub max_sweeps: usize,
    pub jitter: f64,
    /// Follow every sweep with a Galerkin correction on the span of constant
    /// and linear functions per component. The fixed point is unchanged.
    pub coarse_correction: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 200,
            jitter: 1e-8,
            coarse_correction: true,
        }
    }
}

/// Inverted diagonal blocks and the coupling operators
/// `M_jk = W_jj^{-1} W_jk diag(quadrature weights of axis k)`.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    dims: Vec<usize>,
    grid_lens: Vec<usize>,
    diagonal: Vec<Vec<DMatrix<f64>>>,
    inverses: Vec<Vec<DMatrix<f64>>>,
    /// `W_jk diag(quadrature weights of axis k)`
    weighted_cross: Vec<Vec<Option<DMatrix<f64>>>>,
    coupling: Vec<Vec<Option<DMatrix<f64>>>>,
    quadrature: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    coarse: Option<Coarse>,
    pub warnings: Vec<String>,
}

/// Pseudo-inverse of the operator restricted to the coarse space.
#[derive(Debug, Clone)]
struct Coarse {
    pinv: DMatrix<f64>,
}

fn guarded_inverse(
    w: &DMatrix<f64>,
    jitter: f64,
    warnings: &mut Vec<String>,
    at: &str,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = w.nrows();
    let sym = (w + w.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let mut target = sym;
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        let scale = (target.trace() / m as f64).max(f64::MIN_POSITIVE.sqrt());
        for a in 0..m {
            target[(a, a)] += jitter * scale;
        }
        warnings.push(format!("ridge jitter applied to W_jj at {at}"));
    }
    let inverse = target
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| target.clone().try_inverse())
        .ok_or_else(|| Error::Numeric {
            quantity: "inverse of W_jj",
            location: at.to_string(),
        })?;
    Ok((target, inverse))
}

impl PreparedSystem {
    /// `grids` supply the quadrature weights of the coupling integrals and the
    /// points of the coarse space.
    pub fn new(w: &SmootherMatrices, grids: &[Grid], config: &InnerConfig) -> Result<Self> {
        let p = w.n_axes();
        let mut warnings = Vec::new();
        let mut diagonal = Vec::with_capacity(p);
        let mut inverses = Vec::with_capacity(p);
        for k in 0..p {
            let mut dia = Vec::with_capacity(w.grid_len(k));
            let mut inv = Vec::with_capacity(w.grid_len(k));
            for g in 0..w.grid_len(k) {
                let at = format!("axis {} grid point {g}", k + 1);
                let (d, i) = guarded_inverse(w.diag(k, g), config.jitter, &mut warnings, &at)?;
                dia.push(d);
                inv.push(i);
            }
            diagonal.push(dia);
            inverses.push(inv);
        }
        let mut weighted_cross = vec![vec![None; p]; p];
        let mut coupling = vec![vec![None; p]; p];
        for j in 0..p {
            for k in 0..p {
                if j == k {
                    continue;
                }
                let mut m = w.cross_matrix(j, k);
                let (mj, mk) = (w.dim(j), w.dim(k));
                for gk in 0..w.grid_len(k) {
                    let q = grids[k].weights()[gk];
                    m.columns_mut(gk * mk, mk).scale_mut(q);
                }
                weighted_cross[j][k] = Some(m.clone());
                for gj in 0..w.grid_len(j) {
                    let mut rows = m.rows_mut(gj * mj, mj);
                    let updated = &inverses[j][gj] * &rows;
                    rows.copy_from(&updated);
                }
                coupling[j][k] = Some(m);
            }
        }
        warnings.sort();
        warnings.dedup();
        let mut system = Self {
            dims: w.dims().to_vec(),
            grid_lens: w.grid_lens().to_vec(),
            diagonal,
            inverses,
            weighted_cross,
            coupling,
            quadrature: grids.iter().map(|g| g.weights().to_vec()).collect(),
            points: grids.iter().map(|g| g.points().to_vec()).collect(),
            coarse: None,
            warnings,
        };
        if config.coarse_correction {
            system.coarse = Some(system.build_coarse());
        }
        Ok(system)
    }

    /// Inverse of the (possibly jittered) diagonal block at grid point `g`.
    pub fn diagonal_inverse(&self, k: usize, g: usize) -> &DMatrix<f64> {
        &self.inverses[k][g]
    }

    fn zero_like(&self) -> Vec<DVector<f64>> {
        (0..self.n_axes())
            .map(|k| DVector::zeros(self.dims[k] * self.grid_lens[k]))
            .collect()
    }

    /// `(A v)_j = W_jj v_j + sum_k int W_jk v_k`, blocks flattened column-major.
    fn apply(&self, v: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let p = self.n_axes();
        let mut out = self.zero_like();
        for j in 0..p {
            let m = self.dims[j];
            for g in 0..self.grid_lens[j] {
                let part = &self.diagonal[j][g] * v[j].rows(g * m, m);
                out[j].rows_mut(g * m, m).copy_from(&part);
            }
            for k in 0..p {
                if k != j {
                    out[j].gemv(1.0, self.weighted_cross[j][k].as_ref().unwrap(), &v[k], 1.0);
                }
            }
        }
        out
    }

    fn inner_product(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.n_axes() {
            let m = self.dims[k];
            for g in 0..self.grid_lens[k] {
                s += self.quadrature[k][g] * a[k].rows(g * m, m).dot(&b[k].rows(g * m, m));
            }
        }
        s
    }

    /// `(axis, row, power)` for each coarse basis function `(z - 1/2)^power`.
    fn coarse_basis(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.n_axes() {
            for r in 0..self.dims[k] {
                out.push((k, r, 0));
                out.push((k, r, 1));
            }
        }
        out
    }

    fn coarse_vector(&self, (k, r, power): (usize, usize, usize)) -> Vec<DVector<f64>> {
        let mut v = self.zero_like();
        let m = self.dims[k];
        for (g, &z) in self.points[k].iter().enumerate() {
            v[k][g * m + r] = if power == 0 { 1.0 } else { z - 0.5 };
        }
        v
    }

    fn coarse_rhs(&self, residual: &[DVector<f64>]) -> DVector<f64> {
        let basis = self.coarse_basis();
        DVector::from_iterator(
            basis.len(),
            basis.iter().map(|&(k, r, power)| {
                let m = self.dims[k];
                (0..self.grid_lens[k])
                    .map(|g| {
                        let phi = if power == 0 { 1.0 } else { self.points[k][g] - 0.5 };
                        self.quadrature[k][g] * phi * residual[k][g * m + r]
                    })
                    .sum::<f64>()
            }),
        )
    }

    fn build_coarse(&self) -> Coarse {
        let basis = self.coarse_basis();
        let vectors: Vec<Vec<DVector<f64>>> = basis.iter().map(|&b| self.coarse_vector(b)).collect();
        let images: Vec<Vec<DVector<f64>>> = vectors.iter().map(|v| self.apply(v)).collect();
        let nc = basis.len();
        let mut a = DMatrix::zeros(nc, nc);
        for x in 0..nc {
            for y in 0..nc {
                a[(x, y)] = self.inner_product(&vectors[x], &images[y]);
            }
        }
        let sym = (&a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut inv_vals = eig.eigenvalues.clone();
        for v in inv_vals.iter_mut() {
            *v = if v.abs() > 1e-10 * top { 1.0 / *v } else { 0.0 };
        }
        let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
        Coarse { pinv }
    }

    fn coarse_correct(&self, delta: &mut FunctionTuple, rhs: &[DVector<f64>]) {
        let Some(coarse) = &self.coarse else { return };
        let p = self.n_axes();
        let current: Vec<DVector<f64>> = (0..p)
            .map(|k| DVector::from_column_slice(delta.block(k).as_slice()))
            .collect();
        let image = self.apply(&current);
        let residual: Vec<DVector<f64>> = rhs.iter().zip(&image).map(|(b, a)| b - a).collect();
        let c = &coarse.pinv * self.coarse_rhs(&residual);
        for (idx, &(k, r, power)) in self.coarse_basis().iter().enumerate() {
            let m = self.dims[k];
            let block = delta.block_mut(k);
            let slice = block.as_mut_slice();
            for (g, &z) in self.points[k].iter().enumerate() {
                let phi = if power == 0 { 1.0 } else { z - 0.5 };
                slice[g * m + r] += c[idx] * phi;
            }
        }
    }

    /// `W_jj delta~_j`, the right-hand side of the linear system.
    fn rhs(&self, delta_tilde: &FunctionTuple) -> Vec<DVector<f64>> {
        (0..self.n_axes())
            .map(|k| {
                let m = self.dims[k];
                let mut out = DVector::zeros(m * self.grid_lens[k]);
                for g in 0..self.grid_lens[k] {
                    let col = delta_tilde.block(k).column(g);
                    out.rows_mut(g * m, m).copy_from(&(&self.diagonal[k][g] * col));
                }
                out
            })
            .collect()
    }

    /// Residual `F - A delta` in max norm.
    pub fn residual_max(&self, delta: &FunctionTuple, delta_tilde: &FunctionTuple) -> f64 {
        let rhs = self.rhs(delta_tilde);
        let current: Vec<DVector<f64>> = (0..self.n_axes())
            .map(|k| DVector::from_column_slice(delta.block(k).as_slice()))
            .collect();
        let image = self.apply(&current);
        rhs.iter()
            .zip(&image)
            .map(|(b, a)| (b - a).amax())
            .fold(0.0, f64::max)
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    /// `W_jj^{-1} F_j` at every grid point.
    pub fn delta_tilde(&self, f: &FunctionTuple) -> FunctionTuple {
        let mut out = f.clone();
        for k in 0..self.n_axes() {
            let block = out.block_mut(k);
            for g in 0..self.grid_lens[k] {
                let col = block.column(g).into_owned();
                block.set_column(g, &(&self.inverses[k][g] * col));
            }
        }
        out
    }

    fn sweep(&self, delta: &mut FunctionTuple, delta_tilde: &FunctionTuple) {
        let p = self.n_axes();
        for j in 0..p {
            let len = self.dims[j] * self.grid_lens[j];
            let mut acc = DVector::from_column_slice(delta_tilde.block(j).as_slice());
            for k in 0..p {
                if k == j {
                    continue;
                }
                let m = self.coupling[j][k].as_ref().unwrap();
                let v = DVector::from_column_slice(delta.block(k).as_slice());
                acc.gemv(-1.0, m, &v, 1.0);
            }
            debug_assert_eq!(acc.len(), len);
            delta.block_mut(j).as_mut_slice().copy_from_slice(acc.as_slice());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub delta: FunctionTuple,
    pub sweeps: usize,
    /// Ratios of successive normalized sweep differences.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

/// Gauss-Seidel sweeps until the relative change of the update, measured by
/// `measure` (a squared norm), drops below `config.tol`.
pub fn inner_solve(
    system: &PreparedSystem,
    delta_tilde: &FunctionTuple,
    start: Option<&FunctionTuple>,
    measure: impl Fn(&FunctionTuple) -> f64,
    config: &InnerConfig,
) -> Result<InnerOutcome> {
    let mut delta = start.cloned().unwrap_or_else(|| delta_tilde.clone());
    let rhs = system.coarse.is_some().then(|| system.rhs(delta_tilde));
    let mut ratios = Vec::new();
    let mut previous_diff: Option<f64> = None;
    let mut streak = 0;
    for sweep in 1..=config.max_sweeps {
        let before = delta.clone();
        system.sweep(&mut delta, delta_tilde);
        if let Some(rhs) = &rhs {
            system.coarse_correct(&mut delta, rhs);
        }
        if !delta.is_finite() {
            return Err(Error::Numeric {
                quantity: "inner update",
                location: format!("sweep {sweep}"),
            });
        }
        let diff = measure(&delta.sub(&before)).max(0.0).sqrt();
        let size = measure(&delta).max(0.0).sqrt();
        if let Some(prev) = previous_diff {
            if prev > 0.0 {
                let ratio = diff / prev;
                ratios.push(ratio);
                if ratio >= 1.0 {
                    streak += 1;
                    if streak >= DIVERGENCE_WINDOW {
                        return Err(Error::InnerDivergence { ratios });
                    }
                } else {
                    streak = 0;
                }
            }
        }
        if diff <= config.tol * size || diff == 0.0 {
            return Ok(InnerOutcome {
                delta,
                sweeps: sweep,
                ratios,
                converged: true,
            });
        }
        previous_diff = Some(diff);
    }
    Ok(InnerOutcome {
        delta,
        sweeps: config.max_sweeps,
        ratios,
        converged: false,
    })
}
