//! Smooth backfitting for flexible generalized varying coefficient models.

pub mod error;
pub mod family;
pub mod kernel;
pub mod model;
pub mod tuple;

pub use error::{Error, Result};
pub use family::{Family, LinkFn};
pub use kernel::{normalized_kernel_matrix, trapezoid_integrate, Grid, Kernel, KernelSpec};
pub use model::{
    build_group_view, check_design, validate_dataset, CovariateKind, Dataset, DesignReport,
    GroupView, ModelSpec, Violation,
};
pub use tuple::{FunctionTuple, Normalizer, ParametricPart};
pub mod bandwidth;
pub mod sbf;
pub mod sieve;
pub mod sim;
