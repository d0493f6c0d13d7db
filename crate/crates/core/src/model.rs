//! Model specification, the regrouping of coefficient functions by smoothing
//! axis, datasets and design diagnostics.
//!
//! A model is `g(m(x)) = sum_j x_j sum_{l in I_j} f_{jl}(x_l)` for the
//! `d` coefficient-bearing covariates `x_1..x_d`. The covariates that appear in
//! some index set are the smoothing axes. Collecting, for each axis `l`, every
//! `x_j` with `l in I_j` gives the regrouped form `sum_k x~_k' f_k(x_{axis k})`
//! on which the smoother operates.
//!
//! Public constructors take 1-based covariate indices (matching the `x1..xD`
//! column names); everything stored is 0-based.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::family::Family;
use crate::kernel::{normalized_kernel_matrix, Grid, Kernel};

/// Eigenvalues below this are flagged by [`check_design`].
pub const DESIGN_EIGEN_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    /// Supported on `[0, 1]` when used as a smoothing axis.
    Continuous,
    /// Finitely many numeric values.
    Discrete,
    /// The constant 1. A coefficient function of an intercept column absorbs
    /// linear trends of its axis, which keeps normalized components
    /// identifiable when the model has an intercept.
    Intercept,
}

impl CovariateKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "discrete" => Ok(Self::Discrete),
            "intercept" | "constant" => Ok(Self::Intercept),
            other => Err(Error::Config(format!("unknown covariate type `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Continuous => "continuous",
            Self::Discrete => "discrete",
            Self::Intercept => "intercept",
        }
    }
}

/// Weight function of the identifiability constraints, normalized to unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightFn {
    #[default]
    Uniform,
}

impl WeightFn {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            WeightFn::Uniform => {
                if (0.0..=1.0).contains(&z) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kinds: Vec<CovariateKind>,
    index_sets: Vec<Vec<usize>>,
    family: Family,
    weights: Vec<WeightFn>,
}

impl ModelSpec {
    /// `index_sets[j]` lists the 1-based covariates `l` with a function
    /// `f_{j+1, l}`; its length is the number `d` of coefficient-bearing
    /// covariates.
    pub fn new(
        kinds: Vec<CovariateKind>,
        index_sets: Vec<Vec<usize>>,
        family: Family,
    ) -> Result<Self> {
        let n_cov = kinds.len();
        let d = index_sets.len();
        if d == 0 || d > n_cov {
            return Err(Error::Specification(format!(
                "need 1 <= d <= D, got d = {d}, D = {n_cov}"
            )));
        }
        let mut sets = Vec::with_capacity(d);
        for (j, set) in index_sets.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &l in set {
                if l == 0 || l > n_cov {
                    return Err(Error::Specification(format!(
                        "index set I_{} refers to covariate {l}, outside 1..={n_cov}",
                        j + 1
                    )));
                }
                if l == j + 1 {
                    return Err(Error::Specification(format!(
                        "index set I_{} contains its own index",
                        j + 1
                    )));
                }
                if !seen.insert(l - 1) {
                    return Err(Error::Specification(format!(
                        "index set I_{} lists covariate {l} twice",
                        j + 1
                    )));
                }
            }
            sets.push(seen.into_iter().collect::<Vec<_>>());
        }
        let spec = Self {
            weights: vec![WeightFn::Uniform; n_cov],
            kinds,
            index_sets: sets,
            family,
        };
        let axes = spec.axes();
        if axes.is_empty() {
            return Err(Error::Specification("no covariate enters an index set".into()));
        }
        for &l in &axes {
            if spec.kinds[l] != CovariateKind::Continuous {
                return Err(Error::Specification(format!(
                    "covariate x{} is a smoothing axis but is flagged {}",
                    l + 1,
                    spec.kinds[l].name()
                )));
            }
        }
        if axes.len() < 2 {
            return Err(Error::Specification(format!(
                "need at least two smoothing axes, got {}",
                axes.len()
            )));
        }
        Ok(spec)
    }

    pub fn with_weights(mut self, weights: Vec<WeightFn>) -> Result<Self> {
        if weights.len() != self.kinds.len() {
            return Err(Error::Specification(format!(
                "{} weight functions for {} covariates",
                weights.len(),
                self.kinds.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    /// `D`
    pub fn n_covariates(&self) -> usize {
        self.kinds.len()
    }

    /// `d`
    pub fn n_coefficient_covariates(&self) -> usize {
        self.index_sets.len()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn kind(&self, l: usize) -> CovariateKind {
        self.kinds[l]
    }

    /// 0-based index set of covariate `j`.
    pub fn index_set(&self, j: usize) -> &[usize] {
        &self.index_sets[j]
    }

    pub fn index_sets(&self) -> &[Vec<usize>] {
        &self.index_sets
    }

    pub fn weight(&self, l: usize) -> WeightFn {
        self.weights[l]
    }

    /// The smoothing axes `C`, ascending.
    pub fn axes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.index_sets.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// `p = |C|`
    pub fn n_axes(&self) -> usize {
        self.axes().len()
    }

    /// `r = D - p`
    pub fn n_plain(&self) -> usize {
        self.n_covariates() - self.n_axes()
    }

    pub fn is_axis(&self, l: usize) -> bool {
        self.index_sets.iter().any(|s| s.contains(&l))
    }

    /// Membership in `C_0`: a smoothing axis that also carries coefficients.
    pub fn in_c0(&self, l: usize) -> bool {
        l < self.n_coefficient_covariates() && self.is_axis(l)
    }

    /// Both constraints (centering and zero first moment) apply to `f_{jl}`.
    pub fn is_c0_pair(&self, j: usize, l: usize) -> bool {
        self.in_c0(j) && self.in_c0(l)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.into_spec()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let sets: Vec<String> = self
            .index_sets
            .iter()
            .map(|s| {
                let items: Vec<String> = s.iter().map(|l| (l + 1).to_string()).collect();
                format!("[{}]", items.join(", "))
            })
            .collect();
        let kinds: Vec<String> = self
            .kinds
            .iter()
            .map(|k| format!("\"{}\"", k.name()))
            .collect();
        format!(
            "D = {}\nd = {}\nindex_sets = [{}]\nlink = \"{}\"\nweights = \"uniform\"\ncovariate_types = [{}]\n",
            self.n_covariates(),
            self.n_coefficient_covariates(),
            sets.join(", "),
            self.family.name(),
            kinds.join(", ")
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WeightsField {
    One(String),
    PerCovariate(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    #[serde(rename = "D")]
    n_covariates: usize,
    d: usize,
    index_sets: Vec<Vec<usize>>,
    link: String,
    weights: Option<WeightsField>,
    covariate_types: Vec<String>,
}

impl ModelConfig {
    fn into_spec(self) -> Result<ModelSpec> {
        if self.covariate_types.len() != self.n_covariates {
            return Err(Error::Config(format!(
                "D = {} but {} covariate types given",
                self.n_covariates,
                self.covariate_types.len()
            )));
        }
        if self.index_sets.len() != self.d {
            return Err(Error::Config(format!(
                "d = {} but {} index sets given",
                self.d,
                self.index_sets.len()
            )));
        }
        let kinds = self
            .covariate_types
            .iter()
            .map(|s| CovariateKind::parse(s))
            .collect::<Result<Vec<_>>>()?;
        let parse_weight = |s: &str| match s {
            "uniform" => Ok(WeightFn::Uniform),
            other => Err(Error::Config(format!("unknown weight function `{other}`"))),
        };
        let weights = match self.weights {
            None => vec![WeightFn::Uniform; self.n_covariates],
            Some(WeightsField::One(s)) => vec![parse_weight(&s)?; self.n_covariates],
            Some(WeightsField::PerCovariate(v)) => {
                v.iter().map(|s| parse_weight(s)).collect::<Result<Vec<_>>>()?
            }
        };
        ModelSpec::new(kinds, self.index_sets, Family::parse(&self.link)?)?.with_weights(weights)
    }
}

/// Coefficient functions regrouped by smoothing axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupView {
    axes: Vec<usize>,
    groups: Vec<Vec<usize>>,
    c0_pairs: Vec<Vec<bool>>,
    deltas: Vec<Vec<Vec<f64>>>,
}

impl GroupView {
    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    /// Covariate index of axis `k`.
    pub fn axis(&self, k: usize) -> usize {
        self.axes[k]
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    /// Members of `x~_k` (ascending covariate indices).
    pub fn group(&self, k: usize) -> &[usize] {
        &self.groups[k]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// `d_k`
    pub fn group_size(&self, k: usize) -> usize {
        self.groups[k].len()
    }

    pub fn total_components(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_c0_pair(&self, k: usize, slot: usize) -> bool {
        self.c0_pairs[k][slot]
    }

    /// Slot of covariate `j` inside `x~_k`.
    pub fn slot(&self, k: usize, j: usize) -> Option<usize> {
        self.groups[k].iter().position(|&m| m == j)
    }

    /// Axis index of covariate `l`, if it is a smoothing axis.
    pub fn axis_of(&self, l: usize) -> Option<usize> {
        self.axes.iter().position(|&a| a == l)
    }

    /// `Delta_{jk}`: indicator of the slot of `x_{axis k}` inside `x~_j`.
    pub fn delta(&self, j: usize, k: usize) -> &[f64] {
        &self.deltas[j][k]
    }

    /// `Delta_k`: the `Delta_{jk}` stacked over `j`.
    pub fn delta_stacked(&self, k: usize) -> Vec<f64> {
        (0..self.n_axes())
            .flat_map(|j| self.deltas[j][k].iter().copied())
            .collect()
    }

    /// Values of `x~_k` at a covariate vector.
    pub fn tilde(&self, k: usize, x: &[f64]) -> Vec<f64> {
        self.groups[k].iter().map(|&j| x[j]).collect()
    }

    /// Human-readable component label `f_{j,l}` with 1-based indices.
    pub fn component_label(&self, k: usize, slot: usize) -> String {
        format!("f_{}_{}", self.groups[k][slot] + 1, self.axes[k] + 1)
    }
}

pub fn build_group_view(spec: &ModelSpec) -> Result<GroupView> {
    let axes = spec.axes();
    if axes.len() < 2 {
        return Err(Error::Specification(format!(
            "need at least two smoothing axes, got {}",
            axes.len()
        )));
    }
    let groups: Vec<Vec<usize>> = axes
        .iter()
        .map(|&l| {
            (0..spec.n_coefficient_covariates())
                .filter(|&j| spec.index_set(j).contains(&l))
                .collect()
        })
        .collect();
    let c0_pairs = axes
        .iter()
        .zip(&groups)
        .map(|(&l, members)| members.iter().map(|&j| spec.is_c0_pair(j, l)).collect())
        .collect();
    let deltas = groups
        .iter()
        .map(|members| {
            axes.iter()
                .map(|&l| {
                    members
                        .iter()
                        .map(|&j| if j == l { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(GroupView {
        axes,
        groups,
        c0_pairs,
        deltas,
    })
}

/// Observations stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(response: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::Dataset("empty dataset".into()));
        }
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::Dataset(format!(
                "column x{} has {} rows, response has {n}",
                j + 1,
                c.len()
            )));
        }
        Ok(Self { response, columns })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.columns.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// First `n` observations.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.n());
        Self {
            response: self.response[..n].to_vec(),
            columns: self.columns.iter().map(|c| c[..n].to_vec()).collect(),
        }
    }

    /// Reads a CSV with header `y,x1,...,xD`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("y") {
            return Err(Error::Dataset("first CSV column must be `y`".into()));
        }
        for (j, h) in headers.iter().skip(1).enumerate() {
            if h != format!("x{}", j + 1) {
                return Err(Error::Dataset(format!(
                    "expected header x{}, found `{h}`",
                    j + 1
                )));
            }
        }
        let n_cov = headers.len() - 1;
        let mut response = Vec::new();
        let mut columns = vec![Vec::new(); n_cov];
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != n_cov + 1 {
                return Err(Error::Dataset(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    record.len(),
                    n_cov + 1
                )));
            }
            let mut values = record.iter().map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    Error::Dataset(format!("row {}: cannot parse `{f}`: {e}", row + 1))
                })
            });
            response.push(values.next().unwrap()?);
            for col in columns.iter_mut() {
                col.push(values.next().unwrap()?);
            }
        }
        Self::new(response, columns)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.n_covariates()).map(|j| format!("x{j}")));
        writer.write_record(&header)?;
        for i in 0..self.n() {
            let mut record = vec![format!("{}", self.response[i])];
            record.extend(self.columns.iter().map(|c| format!("{}", c[i])));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ColumnCount { expected: usize, found: usize },
    NonFinite { row: usize, column: usize },
    OutOfUnitInterval { row: usize, column: usize, value: f64 },
    NotIntercept { row: usize, column: usize, value: f64 },
    ResponseSupport { row: usize, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::ColumnCount { expected, found } => {
                write!(f, "expected {expected} covariate columns, found {found}")
            }
            Violation::NonFinite { row, column } => {
                write!(f, "row {row}, x{}: non-finite value", column + 1)
            }
            Violation::OutOfUnitInterval { row, column, value } => {
                write!(f, "row {row}, x{}: {value} outside [0, 1]", column + 1)
            }
            Violation::NotIntercept { row, column, value } => {
                write!(f, "row {row}, x{}: intercept column holds {value}", column + 1)
            }
            Violation::ResponseSupport { row, value } => {
                write!(f, "row {row}, y: {value} outside the family support")
            }
        }
    }
}

/// Checks every dataset invariant; an empty list means the data are usable.
/// Rows are 0-based.
pub fn validate_dataset(data: &Dataset, spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if data.n_covariates() != spec.n_covariates() {
        out.push(Violation::ColumnCount {
            expected: spec.n_covariates(),
            found: data.n_covariates(),
        });
        return out;
    }
    for (row, &y) in data.response().iter().enumerate() {
        if !y.is_finite() {
            out.push(Violation::NonFinite { row, column: usize::MAX });
        } else if spec.family().check_response(y).is_err() {
            out.push(Violation::ResponseSupport { row, value: y });
        }
    }
    for column in 0..spec.n_covariates() {
        let kind = spec.kind(column);
        let axis = spec.is_axis(column);
        for (row, &v) in data.column(column).iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFinite { row, column });
            } else if axis && !(0.0..=1.0).contains(&v) {
                out.push(Violation::OutOfUnitInterval { row, column, value: v });
            } else if kind == CovariateKind::Intercept && v != 1.0 {
                out.push(Violation::NotIntercept { row, column, value: v });
            }
        }
    }
    out
}

/// Smallest eigenvalue of `n^-1 sum_i x~_k x~_k' K_h(X_{axis k}^i, z)` per
/// axis and grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub grid: Grid,
    pub threshold: f64,
    /// `min_eigenvalues[k][g]`; `None` where no observation has kernel weight.
    pub min_eigenvalues: Vec<Vec<Option<f64>>>,
}

impl DesignReport {
    pub fn flagged(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, row) in self.min_eigenvalues.iter().enumerate() {
            for (g, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if *v < self.threshold {
                        out.push((k, g));
                    }
                }
            }
        }
        out
    }

    pub fn undefined(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, row) in self.min_eigenvalues.iter().enumerate() {
            for (g, v) in row.iter().enumerate() {
                if v.is_none() {
                    out.push((k, g));
                }
            }
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.flagged().is_empty() && self.undefined().is_empty()
    }

    pub fn minimum(&self) -> Option<f64> {
        self.min_eigenvalues
            .iter()
            .flatten()
            .flatten()
            .copied()
            .reduce(f64::min)
    }
}

/// `bandwidths` holds one value per axis, or a single value used for all.
pub fn check_design(
    data: &Dataset,
    spec: &ModelSpec,
    view: &GroupView,
    bandwidths: &[f64],
    grid: &Grid,
    threshold: f64,
) -> Result<DesignReport> {
    let p = view.n_axes();
    if data.n_covariates() != spec.n_covariates() {
        return Err(Error::Dataset("column count does not match the model".into()));
    }
    if bandwidths.len() != 1 && bandwidths.len() != p {
        return Err(Error::Specification(format!(
            "{} bandwidths for {p} axes",
            bandwidths.len()
        )));
    }
    let n = data.n() as f64;
    let mut min_eigenvalues = Vec::with_capacity(p);
    for k in 0..p {
        let h = if bandwidths.len() == 1 { bandwidths[0] } else { bandwidths[k] };
        let members = view.group(k);
        let dk = members.len();
        let obs = data.column(view.axis(k));
        let mut sums = vec![DMatrix::<f64>::zeros(dk, dk); grid.len()];
        let mut mass = vec![0.0; grid.len()];
        // Observations whose support misses every grid point contribute nothing;
        // cells without any weight are reported as undefined.
        for (i, &u) in obs.iter().enumerate() {
            let row = match normalized_kernel_matrix(&[u], grid, h, Kernel::Epanechnikov) {
                Ok(m) => m.rows.into_iter().next().unwrap(),
                Err(Error::DegenerateBandwidth { .. }) => continue,
                Err(e) => return Err(e),
            };
            let xt: Vec<f64> = members.iter().map(|&j| data.column(j)[i]).collect();
            for (off, &kv) in row.values.iter().enumerate() {
                let g = row.start + off;
                mass[g] += kv;
                let m = &mut sums[g];
                for a in 0..dk {
                    for b in 0..dk {
                        m[(a, b)] += kv * xt[a] * xt[b];
                    }
                }
            }
        }
        let row = sums
            .into_iter()
            .zip(&mass)
            .map(|(m, &w)| {
                if w > 0.0 {
                    let eig = SymmetricEigen::new(m / n);
                    Some(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
                } else {
                    None
                }
            })
            .collect();
        min_eigenvalues.push(row);
    }
    Ok(DesignReport {
        grid: grid.clone(),
        threshold,
        min_eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use CovariateKind::*;

    pub(crate) fn three_covariate_example() -> ModelSpec {
        ModelSpec::new(
            vec![Discrete, Continuous, Continuous],
            vec![vec![2, 3], vec![3], vec![2]],
            Family::Identity,
        )
        .unwrap()
    }

    #[test]
    fn regrouping_of_the_three_covariate_example() {
        let spec = three_covariate_example();
        let view = build_group_view(&spec).unwrap();
        assert_eq!(spec.n_plain(), 1);
        assert_eq!(view.axes(), &[1, 2]);
        // x~_1 = (x1, x3), x~_2 = (x1, x2)
        assert_eq!(view.group(0), &[0, 2]);
        assert_eq!(view.group(1), &[0, 1]);
        assert_eq!(view.delta(0, 1), &[0.0, 1.0]);
        assert_eq!(view.delta(1, 0), &[0.0, 1.0]);
        assert_eq!(view.delta(0, 0), &[0.0, 0.0]);
        assert_eq!(view.total_components(), 4);
        assert!(view.is_c0_pair(0, 1) && !view.is_c0_pair(0, 0));
    }

    #[test]
    fn single_axis_is_rejected() {
        let err = ModelSpec::new(vec![Discrete, Continuous], vec![vec![2]], Family::Identity);
        assert!(matches!(err, Err(Error::Specification(_))));
    }

    #[test]
    fn self_interaction_is_rejected() {
        let err = ModelSpec::new(
            vec![Continuous, Continuous, Continuous],
            vec![vec![1, 2]],
            Family::Identity,
        );
        assert!(err.is_err());
    }

    #[test]
    fn discrete_axis_is_rejected() {
        let err = ModelSpec::new(
            vec![Discrete, Discrete, Continuous],
            vec![vec![2, 3]],
            Family::Identity,
        );
        assert!(err.is_err());
    }

    #[test]
    fn toml_round_trip() {
        let spec = three_covariate_example();
        let again = ModelSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(spec, again);
        let text = r#"
            D = 3
            d = 1
            index_sets = [[2, 3]]
            link = "logit"
            weights = ["uniform", "uniform", "uniform"]
            covariate_types = ["intercept", "continuous", "continuous"]
        "#;
        let spec = ModelSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.family(), Family::Logit);
        assert_eq!(spec.n_axes(), 2);
        assert!(ModelSpec::from_toml_str("D = 2").is_err());
    }

    #[test]
    fn validation_reports_cells() {
        let spec = three_covariate_example();
        let data = Dataset::new(
            vec![0.1, 0.2],
            vec![vec![1.0, 0.0], vec![0.3, 1.2], vec![0.5, 0.5]],
        )
        .unwrap();
        let v = validate_dataset(&data, &spec);
        assert_eq!(
            v,
            vec![Violation::OutOfUnitInterval { row: 1, column: 1, value: 1.2 }]
        );
        let logit = ModelSpec::new(
            vec![Discrete, Continuous, Continuous],
            vec![vec![2, 3], vec![3], vec![2]],
            Family::Logit,
        )
        .unwrap();
        let data = Dataset::new(
            vec![0.5, 1.0],
            vec![vec![1.0, 0.0], vec![0.3, 0.2], vec![0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(
            validate_dataset(&data, &logit),
            vec![Violation::ResponseSupport { row: 0, value: 0.5 }]
        );
    }

    #[test]
    fn duplicated_column_is_flagged() {
        // x~ for axis x3 is (x1, x2) with x2 == x1
        let spec = ModelSpec::new(
            vec![Continuous, Continuous, Continuous],
            vec![vec![3], vec![3], vec![1, 2]],
            Family::Identity,
        );
        // x3 interacts with x1,x2 which are both axes; build data where x1 == x2
        let spec = spec.unwrap();
        let view = build_group_view(&spec).unwrap();
        let k = view.axis_of(2).unwrap();
        assert_eq!(view.group(k), &[0, 1]);
        let n = 400;
        let a: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 53) % 97) as f64 / 96.0).collect();
        let data = Dataset::new(vec![0.0; n], vec![a.clone(), a, b]).unwrap();
        let grid = Grid::uniform(21).unwrap();
        let report = check_design(&data, &spec, &view, &[0.3], &grid, DESIGN_EIGEN_THRESHOLD).unwrap();
        let row = &report.min_eigenvalues[k];
        assert!(row.iter().all(|v| v.unwrap().abs() < 1e-10));
        assert!(!report.flagged().is_empty());
    }

    #[test]
    fn scalar_group_reports_density_mass() {
        let spec = ModelSpec::new(
            vec![Intercept, Continuous, Continuous],
            vec![vec![2, 3]],
            Family::Identity,
        )
        .unwrap();
        let view = build_group_view(&spec).unwrap();
        let n = 200;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let data = Dataset::new(vec![0.0; n], vec![vec![1.0; n], u.clone(), u]).unwrap();
        let grid = Grid::uniform(11).unwrap();
        let report = check_design(&data, &spec, &view, &[0.2], &grid, DESIGN_EIGEN_THRESHOLD).unwrap();
        for g in 0..11 {
            let expected: f64 = normalized_kernel_matrix(data.column(1), &grid, 0.2, Kernel::Epanechnikov)
                .unwrap()
                .rows
                .iter()
                .map(|r| r.get(g))
                .sum::<f64>()
                / n as f64;
            let got = report.min_eigenvalues[0][g].unwrap();
            assert!((got - expected).abs() < 1e-12);
            assert!(got > 0.0);
        }
    }

    #[test]
    fn empty_neighbourhood_is_undefined() {
        let spec = three_covariate_example();
        let view = build_group_view(&spec).unwrap();
        let n = 50;
        let low: Vec<f64> = (0..n).map(|i| 0.3 * i as f64 / n as f64).collect();
        let data = Dataset::new(vec![0.0; n], vec![vec![1.0; n], low.clone(), low]).unwrap();
        let grid = Grid::uniform(11).unwrap();
        let report = check_design(&data, &spec, &view, &[0.1], &grid, DESIGN_EIGEN_THRESHOLD).unwrap();
        assert!(report.min_eigenvalues[0][10].is_none());
        assert!(!report.passes());
    }
}
