//! Evaluation grids, trapezoid quadrature and boundary-normalized kernels.
//!
//! Every integral over a smoothing axis is discretized with the trapezoid rule
//! on that axis' [`Grid`]. The normalized kernel divides by the trapezoid mass
//! of the raw kernel row, so `sum_g w_g K_h(u, z_g) = 1` holds to rounding for
//! every observation `u`, including those near the boundary of `[0, 1]`.

use crate::error::{Error, Result};

/// Default number of grid points per smoothing axis.
pub const DEFAULT_GRID_SIZE: usize = 101;

/// Point set on `[0, 1]` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// `size` equispaced points including both endpoints.
    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Specification(format!(
                "grid needs at least 2 points, got {size}"
            )));
        }
        let cells = (size - 1) as f64;
        let points = (0..size).map(|g| g as f64 / cells).collect();
        let mut grid = Self::new(points)?;
        let step = 1.0 / cells;
        for (g, w) in grid.weights.iter_mut().enumerate() {
            *w = if g == 0 || g + 1 == size { 0.5 * step } else { step };
        }
        Ok(grid)
    }

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Specification("grid needs at least 2 points".into()));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::Specification(
                "grid must include both endpoints 0 and 1".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Specification(
                "grid points must be strictly increasing".into(),
            ));
        }
        let weights = trapezoid_weights(&points);
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoid quadrature weights; they sum to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest spacing between neighbouring points.
    pub fn spacing(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Trapezoid rule with compensated summation.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let mut sum = 0.0;
        let mut carry = 0.0;
        for (v, w) in values.iter().zip(&self.weights) {
            let term = v * w;
            let t = sum + term;
            if f64::abs(sum) >= f64::abs(term) {
                carry += (sum - t) + term;
            } else {
                carry += (term - t) + sum;
            }
            sum = t;
        }
        sum + carry
    }

    /// Locate `x` for linear interpolation: returns `(g, t)` with
    /// `x = (1 - t) z_g + t z_{g+1}`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.points.len() - 1;
        if x <= 0.0 {
            return (0, 0.0);
        }
        if x >= 1.0 {
            return (last - 1, 1.0);
        }
        let g = match self
            .points
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(g) => g.min(last - 1),
            Err(g) => g - 1,
        };
        let t = (x - self.points[g]) / (self.points[g + 1] - self.points[g]);
        (g, t)
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (g, t) = self.locate(x);
        values[g] * (1.0 - t) + values[g + 1] * t
    }

    /// Mask of grid points in `[2h, 1 - 2h]`, the region where interior
    /// uniform error statements apply.
    pub fn interior_mask(&self, bandwidth: f64) -> Vec<bool> {
        self.points
            .iter()
            .map(|&z| z >= 2.0 * bandwidth && z <= 1.0 - 2.0 * bandwidth)
            .collect()
    }
}

fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; points.len()];
    for (g, pair) in points.windows(2).enumerate() {
        let half = 0.5 * (pair[1] - pair[0]);
        w[g] += half;
        w[g + 1] += half;
    }
    w
}

/// Trapezoid rule of `values` sampled on `grid`.
pub fn trapezoid_integrate(values: &[f64], grid: &Grid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::Specification(format!(
            "trapezoid: {} values for a grid of {} points",
            values.len(),
            grid.len()
        )));
    }
    Ok(grid.integrate(values))
}

/// Symmetric base kernel on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if t.abs() < 1.0 {
                    0.75 * (1.0 - t * t)
                } else {
                    0.0
                }
            }
        }
    }

    /// `int t^2 K(t) dt`
    pub fn second_moment(self) -> f64 {
        match self {
            Kernel::Epanechnikov => 0.2,
        }
    }

    /// `int K(t)^2 dt`
    pub fn roughness(self) -> f64 {
        match self {
            Kernel::Epanechnikov => 0.6,
        }
    }
}

/// Base kernel plus one bandwidth per smoothing axis.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub bandwidths: Vec<f64>,
}

impl KernelSpec {
    pub fn epanechnikov(bandwidths: Vec<f64>) -> Result<Self> {
        let spec = Self {
            kernel: Kernel::Epanechnikov,
            bandwidths,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &h) in self.bandwidths.iter().enumerate() {
            if !(h > 0.0 && h <= 0.5) {
                return Err(Error::Specification(format!(
                    "bandwidth {} = {h} outside (0, 0.5]",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// One observation's normalized kernel values over the grid points it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    /// Index of the first grid point with a nonzero value.
    pub start: usize,
    pub values: Vec<f64>,
}

impl KernelRow {
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }

    pub fn get(&self, g: usize) -> f64 {
        if g >= self.start && g < self.end() {
            self.values[g - self.start]
        } else {
            0.0
        }
    }
}

/// Sparse `n x G` matrix of `K_h(X_i, z_g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub bandwidth: f64,
    pub grid_len: usize,
    pub rows: Vec<KernelRow>,
}

impl KernelMatrix {
    pub fn get(&self, i: usize, g: usize) -> f64 {
        self.rows[i].get(g)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| (0..self.grid_len).map(|g| row.get(g)).collect())
            .collect()
    }
}

/// Boundary-normalized kernel `K_h(u, v) = K_h(u - v) / int K_h(u - w) dw`
/// evaluated for every observation against every grid point.
pub fn normalized_kernel_matrix(
    observations: &[f64],
    grid: &Grid,
    bandwidth: f64,
    kernel: Kernel,
) -> Result<KernelMatrix> {
    if !(bandwidth > 0.0) {
        return Err(Error::Specification(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let points = grid.points();
    let weights = grid.weights();
    let mut rows = Vec::with_capacity(observations.len());
    for (i, &u) in observations.iter().enumerate() {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!(
                "observation {i} = {u} outside [0, 1]"
            )));
        }
        let lo = points.partition_point(|&z| z <= u - bandwidth);
        let hi = points.partition_point(|&z| z < u + bandwidth);
        let mut values: Vec<f64> = points[lo..hi]
            .iter()
            .map(|&z| kernel.eval((u - z) / bandwidth) / bandwidth)
            .collect();
        let mass: f64 = values
            .iter()
            .zip(&weights[lo..hi])
            .map(|(k, w)| k * w)
            .sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateBandwidth {
                observation: i,
                bandwidth,
            });
        }
        for v in &mut values {
            *v /= mass;
        }
        rows.push(KernelRow { start: lo, values });
    }
    Ok(KernelMatrix {
        bandwidth,
        grid_len: grid.len(),
        rows,
    })
}
