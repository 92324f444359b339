//! Discretised nonlocal operators of fractional order, their energies, and
//! stability diagnostics for layer solutions of nonlocal Allen-Cahn type
//! equations on `R` and `R^2`.

// `!(a < b)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod field;
pub mod kernel;
pub mod nonlinearity;
pub mod operator;
pub mod scalar;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use field::{
    eval_test, gradient, sample_profile, BallDomain, FarField, Field, Grid, Point, Profile, ProfileParams, TestFunction,
};
pub use kernel::{check_kernel_class, eval_kernel, tail_mass, Coefficient, KernelSpec, KernelVariant};
pub use nonlinearity::{PhiKind, PhiSpec, ReactionSpec};
pub use scalar::{pairwise_sum, Interval, Real};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type FarField64 = FarField<f64>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type PhiSpec64 = PhiSpec<f64>;
pub type ReactionSpec64 = ReactionSpec<f64>;
pub type TestFunction64 = TestFunction<f64>;
