//! Empirical estimating functions `F^` and curvature blocks `W^`.
//!
//! Each observation contributes only on the tensor product of its kernel
//! supports. The linear predictor is evaluated at every point of that tensor
//! support, so the marginal integrals are exact trapezoid sums for any link.
//! Per observation the contributions are accumulated as scalars over the
//! support and then spread with rank-one updates in `x~` (or `a (x) x~` for
//! local-linear fits).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::family::Family;
use crate::kernel::{normalized_kernel_matrix, Grid, KernelMatrix, KernelSpec};
use crate::model::{Dataset, GroupView};
use crate::tuple::FunctionTuple;

/// `W^_jj(z_j)` and `W^_jk(z_j, z_k)` on the grids.
///
/// The cross block of `(j, k)`, `j < k`, is a `(G_j m_j) x (G_k m_k)` matrix
/// with row `g_j m_j + a` and column `g_k m_k + b`, where `m` is the block
/// dimension (`d` or `2d`).
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherMatrices {
    dims: Vec<usize>,
    grid_lens: Vec<usize>,
    diag: Vec<Vec<DMatrix<f64>>>,
    cross: Vec<Vec<Option<DMatrix<f64>>>>,
}

impl SmootherMatrices {
    pub fn zeros(dims: &[usize], grid_lens: &[usize]) -> Self {
        let p = dims.len();
        let diag = (0..p)
            .map(|k| vec![DMatrix::zeros(dims[k], dims[k]); grid_lens[k]])
            .collect();
        let cross = (0..p)
            .map(|j| {
                (0..p)
                    .map(|k| {
                        (j < k).then(|| {
                            DMatrix::zeros(grid_lens[j] * dims[j], grid_lens[k] * dims[k])
                        })
                    })
                    .collect()
            })
            .collect();
        Self {
            dims: dims.to_vec(),
            grid_lens: grid_lens.to_vec(),
            diag,
            cross,
        }
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, k: usize) -> usize {
        self.dims[k]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn grid_len(&self, k: usize) -> usize {
        self.grid_lens[k]
    }

    pub fn grid_lens(&self) -> &[usize] {
        &self.grid_lens
    }

    pub fn diag(&self, k: usize, g: usize) -> &DMatrix<f64> {
        &self.diag[k][g]
    }

    pub fn diag_mut(&mut self, k: usize, g: usize) -> &mut DMatrix<f64> {
        &mut self.diag[k][g]
    }

    /// Full cross matrix of `(j, k)`, transposing the stored block if `j > k`.
    pub fn cross_matrix(&self, j: usize, k: usize) -> DMatrix<f64> {
        assert_ne!(j, k);
        if j < k {
            self.cross[j][k].clone().unwrap()
        } else {
            self.cross[k][j].as_ref().unwrap().transpose()
        }
    }

    pub fn stored_cross(&self, j: usize, k: usize) -> &DMatrix<f64> {
        assert!(j < k);
        self.cross[j][k].as_ref().unwrap()
    }

    pub fn stored_cross_mut(&mut self, j: usize, k: usize) -> &mut DMatrix<f64> {
        assert!(j < k);
        self.cross[j][k].as_mut().unwrap()
    }

    /// `W^_jk(z_{g_j}, z_{g_k})` as a `m_j x m_k` matrix.
    pub fn cross_block(&self, j: usize, k: usize, gj: usize, gk: usize) -> DMatrix<f64> {
        if j < k {
            let (mj, mk) = (self.dims[j], self.dims[k]);
            self.stored_cross(j, k)
                .view((gj * mj, gk * mk), (mj, mk))
                .into_owned()
        } else {
            self.cross_block(k, j, gk, gj).transpose()
        }
    }
}

/// Precomputed kernel rows and regrouped covariates for one dataset.
#[derive(Debug, Clone)]
pub struct SmootherContext {
    family: Family,
    local_linear: bool,
    n: usize,
    grids: Vec<Grid>,
    bandwidths: Vec<f64>,
    sizes: Vec<usize>,
    kernels: Vec<KernelMatrix>,
    axis_obs: Vec<Vec<f64>>,
    /// Per axis, `n x d_k` row-major values of `x~_k`.
    tilde: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl SmootherContext {
    pub fn new(
        data: &Dataset,
        view: &GroupView,
        grids: &[Grid],
        kernel: &KernelSpec,
        family: Family,
        local_linear: bool,
    ) -> Result<Self> {
        let p = view.n_axes();
        kernel.validate()?;
        if grids.len() != p || kernel.bandwidths.len() != p {
            return Err(Error::Specification(format!(
                "{} grids and {} bandwidths for {p} smoothing axes",
                grids.len(),
                kernel.bandwidths.len()
            )));
        }
        let n = data.n();
        let mut kernels = Vec::with_capacity(p);
        let mut axis_obs = Vec::with_capacity(p);
        let mut tilde = Vec::with_capacity(p);
        for k in 0..p {
            let obs = data.column(view.axis(k)).to_vec();
            kernels.push(normalized_kernel_matrix(
                &obs,
                &grids[k],
                kernel.bandwidths[k],
                kernel.kernel,
            )?);
            axis_obs.push(obs);
            let members = view.group(k);
            let mut xt = Vec::with_capacity(n * members.len());
            for i in 0..n {
                xt.extend(members.iter().map(|&j| data.column(j)[i]));
            }
            tilde.push(xt);
        }
        for (i, &y) in data.response().iter().enumerate() {
            if family.check_response(y).is_err() {
                return Err(Error::Dataset(format!(
                    "response {y} in row {i} outside the {} family support",
                    family.name()
                )));
            }
        }
        Ok(Self {
            family,
            local_linear,
            n,
            grids: grids.to_vec(),
            bandwidths: kernel.bandwidths.clone(),
            sizes: (0..p).map(|k| view.group_size(k)).collect(),
            kernels,
            axis_obs,
            tilde,
            response: data.response().to_vec(),
        })
    }

    pub fn n_axes(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn is_local_linear(&self) -> bool {
        self.local_linear
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Block dimension `m_k`.
    pub fn dim(&self, k: usize) -> usize {
        if self.local_linear {
            2 * self.sizes[k]
        } else {
            self.sizes[k]
        }
    }

    pub fn grid_lens(&self) -> Vec<usize> {
        self.grids.iter().map(Grid::len).collect()
    }

    pub fn zero_tuple(&self) -> FunctionTuple {
        FunctionTuple::zeros_with_sizes(&self.sizes, &self.grid_lens(), self.local_linear)
    }

    fn xt(&self, k: usize, i: usize) -> &[f64] {
        let d = self.sizes[k];
        &self.tilde[k][i * d..(i + 1) * d]
    }

    /// `F^(eta)` and, when asked, `W^(eta)`.
    pub fn evaluate(
        &self,
        eta: &FunctionTuple,
        with_w: bool,
    ) -> Result<(FunctionTuple, Option<SmootherMatrices>)> {
        let p = self.n_axes();
        if eta.n_axes() != p || eta.is_local_linear() != self.local_linear {
            return Err(Error::Specification("tuple shape does not match the smoother".into()));
        }
        if !eta.is_finite() {
            return Err(Error::Numeric {
                quantity: "coefficient tuple",
                location: "smoother input".into(),
            });
        }
        let dims: Vec<usize> = (0..p).map(|k| self.dim(k)).collect();
        let grid_lens = self.grid_lens();
        let mut f_out = self.zero_tuple();
        let mut w_out = with_w.then(|| SmootherMatrices::zeros(&dims, &grid_lens));
        let inv_n = 1.0 / self.n as f64;

        let mut a = vec![Vec::new(); p];
        let mut kw = vec![Vec::new(); p];
        let mut s_f = vec![Vec::new(); p];
        let mut s_w = vec![Vec::new(); p];
        let mut s_x: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); p]; p];
        let mut idx = vec![0usize; p];
        let mut prefix = vec![0.0; p + 1];
        let mut suffix = vec![0.0; p + 1];
        let mut basis: Vec<Vec<f64>> = vec![Vec::new(); p];

        for i in 0..self.n {
            let y = self.response[i];
            for k in 0..p {
                let row = &self.kernels[k].rows[i];
                let d = self.sizes[k];
                let xt = self.xt(k, i);
                let q = self.grids[k].weights();
                let z = self.grids[k].points();
                let block = eta.block(k);
                a[k].clear();
                kw[k].clear();
                for (s, &kv) in row.values.iter().enumerate() {
                    let g = row.start + s;
                    let mut v = 0.0;
                    for (slot, &x) in xt.iter().enumerate() {
                        v += x * block[(slot, g)];
                    }
                    if self.local_linear {
                        let t = (self.axis_obs[k][i] - z[g]) / self.bandwidths[k];
                        for (slot, &x) in xt.iter().enumerate() {
                            v += t * x * block[(d + slot, g)];
                        }
                    }
                    a[k].push(v);
                    kw[k].push(kv * q[g]);
                }
                let len = row.values.len();
                s_f[k].clear();
                s_f[k].resize(len, 0.0);
                s_w[k].clear();
                s_w[k].resize(len, 0.0);
            }
            if with_w {
                for j in 0..p {
                    for k in j + 1..p {
                        let len = a[j].len() * a[k].len();
                        s_x[j][k].clear();
                        s_x[j][k].resize(len, 0.0);
                    }
                }
            }

            if p == 2 {
                let (a0, a1) = (&a[0], &a[1]);
                let (kw0, kw1) = (&kw[0], &kw[1]);
                let len1 = a1.len();
                let (sf_lo, sf_hi) = s_f.split_at_mut(1);
                let (sw_lo, sw_hi) = s_w.split_at_mut(1);
                let (sf0, sf1) = (&mut sf_lo[0], &mut sf_hi[0]);
                let (sw0, sw1) = (&mut sw_lo[0], &mut sw_hi[0]);
                let sx = &mut s_x[0][1];
                for (i0, (&u0, &k0)) in a0.iter().zip(kw0).enumerate() {
                    let mut acc_f = 0.0;
                    let mut acc_w = 0.0;
                    for i1 in 0..len1 {
                        let (q1, q2) = self.family.q_derivs_unchecked(u0 + a1[i1], y);
                        acc_f += q1 * kw1[i1];
                        acc_w -= q2 * kw1[i1];
                        sf1[i1] += q1 * k0;
                        sw1[i1] -= q2 * k0;
                        if with_w {
                            sx[i0 * len1 + i1] -= q2;
                        }
                    }
                    sf0[i0] += acc_f;
                    sw0[i0] += acc_w;
                }
            } else {
                let lens: Vec<usize> = a.iter().map(Vec::len).collect();
                idx.iter_mut().for_each(|v| *v = 0);
                'walk: loop {
                    let mut u = 0.0;
                    for k in 0..p {
                        u += a[k][idx[k]];
                    }
                    let (q1, q2) = self.family.q_derivs_unchecked(u, y);
                    prefix[0] = 1.0;
                    for k in 0..p {
                        prefix[k + 1] = prefix[k] * kw[k][idx[k]];
                    }
                    suffix[p] = 1.0;
                    for k in (0..p).rev() {
                        suffix[k] = suffix[k + 1] * kw[k][idx[k]];
                    }
                    for k in 0..p {
                        let others = prefix[k] * suffix[k + 1];
                        s_f[k][idx[k]] += q1 * others;
                        s_w[k][idx[k]] -= q2 * others;
                    }
                    if with_w {
                        for j in 0..p {
                            for k in j + 1..p {
                                let mut others = 1.0;
                                for l in 0..p {
                                    if l != j && l != k {
                                        others *= kw[l][idx[l]];
                                    }
                                }
                                s_x[j][k][idx[j] * lens[k] + idx[k]] -= q2 * others;
                            }
                        }
                    }
                    let mut k = p;
                    loop {
                        if k == 0 {
                            break 'walk;
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < lens[k] {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
            }

            for k in 0..p {
                if s_f[k].iter().any(|v| !v.is_finite()) || s_w[k].iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric {
                        quantity: "quasi-likelihood derivative",
                        location: format!("observation {i}"),
                    });
                }
            }

            // basis vectors b_k(g) laid out per support position
            for k in 0..p {
                let row = &self.kernels[k].rows[i];
                let m = dims[k];
                let xt = self.xt(k, i);
                let z = self.grids[k].points();
                basis[k].clear();
                for s in 0..row.values.len() {
                    basis[k].extend_from_slice(xt);
                    if self.local_linear {
                        let t = (self.axis_obs[k][i] - z[row.start + s]) / self.bandwidths[k];
                        basis[k].extend(xt.iter().map(|x| t * x));
                    }
                    debug_assert_eq!(basis[k].len(), (s + 1) * m);
                }
            }

            for k in 0..p {
                let row = &self.kernels[k].rows[i];
                let m = dims[k];
                let fb = f_out.block_mut(k);
                for (s, &kv) in row.values.iter().enumerate() {
                    let g = row.start + s;
                    let b = &basis[k][s * m..(s + 1) * m];
                    let cf = kv * s_f[k][s] * inv_n;
                    for (r, &bv) in b.iter().enumerate() {
                        fb[(r, g)] += cf * bv;
                    }
                    if let Some(w) = w_out.as_mut() {
                        let cw = kv * s_w[k][s] * inv_n;
                        let target = w.diag_mut(k, g);
                        for c in 0..m {
                            let bc = cw * b[c];
                            for r in 0..m {
                                target[(r, c)] += bc * b[r];
                            }
                        }
                    }
                }
            }

            if let Some(w) = w_out.as_mut() {
                for j in 0..p {
                    for k in j + 1..p {
                        let (rj, rk) = (&self.kernels[j].rows[i], &self.kernels[k].rows[i]);
                        let (mj, mk) = (dims[j], dims[k]);
                        let len_k = rk.values.len();
                        let block = w.stored_cross_mut(j, k);
                        let nrows = block.nrows();
                        let data = block.as_mut_slice();
                        for (sj, &kj) in rj.values.iter().enumerate() {
                            let gj = rj.start + sj;
                            let bj = &basis[j][sj * mj..(sj + 1) * mj];
                            for (sk, &kk) in rk.values.iter().enumerate() {
                                let coef = kj * kk * s_x[j][k][sj * len_k + sk] * inv_n;
                                if coef == 0.0 {
                                    continue;
                                }
                                let gk = rk.start + sk;
                                let bk = &basis[k][sk * mk..(sk + 1) * mk];
                                for (c, &bkc) in bk.iter().enumerate() {
                                    let col = gk * mk + c;
                                    let base = col * nrows + gj * mj;
                                    let cb = coef * bkc;
                                    for (r, &bjr) in bj.iter().enumerate() {
                                        data[base + r] += cb * bjr;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((f_out, w_out))
    }
}

/// `F^(eta)` on the grids.
pub fn compute_f(ctx: &SmootherContext, eta: &FunctionTuple) -> Result<FunctionTuple> {
    Ok(ctx.evaluate(eta, false)?.0)
}

/// `W^(eta)` on the grids.
pub fn compute_w(ctx: &SmootherContext, eta: &FunctionTuple) -> Result<SmootherMatrices> {
    Ok(ctx.evaluate(eta, true)?.1.unwrap())
}
