//! Series estimation of partially linear varying coefficient models
//!
//! `y_i = w_i' gamma + x_i' beta(z_i) + u_i`
//!
//! The constant coefficients `gamma` and the coefficient curves `beta(.)` are
//! estimated by least squares on a B-spline (or power series) expansion of
//! each curve. Around that estimator the crate provides robust and
//! homoskedastic covariance estimates, leave-one-out basis selection, a
//! feasible weighted estimator for heteroskedastic errors, a kernel profile
//! baseline, a wild-bootstrap specification test and a Monte Carlo harness.

pub mod basis;
pub mod cli;
pub mod design;
pub mod error;
pub mod estimator;
pub mod kernel_profile;
pub mod linalg;
pub mod montecarlo;
pub mod selection;
pub mod testing;

pub use basis::{BasisSpec, BasisTemplate, DomainMode, KnotVector};
pub use design::{ColumnRoles, Dataset, DesignMatrix, InterceptMode, SpecSet};
pub use error::{PlvcError, Result};
pub use estimator::{fit, fit_weighted, FitOptions, FitResult, VarianceModel};
pub use kernel_profile::{Kernel, KernelSpec, LocalOrder, ProfileFit};
pub use selection::{CvReport, CvRow};
pub use testing::{ModelClass, TestOptions, TestResult};
