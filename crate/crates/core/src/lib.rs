//! Monte Carlo estimators of Gaussian mixture centroids fitted to pure
//! noise, their closed-form predictions, and numerical reference values.
//!
//! Given unit-norm templates `x_0, …, x_{L-1}` and noise `n ~ N(0, I_d)`,
//! each observation is assigned to the template with the largest
//! projection (hard) or spread by a softmax (soft). The resulting centroid
//! estimates correlate with the templates even though the data contain no
//! signal.

pub mod engine;
pub mod error;
pub mod gram;
pub mod io;
pub mod oracle;
pub mod rng;
pub mod special;
pub mod templates;
pub mod theory;

pub use engine::{
    assign, assign_gram, hard_assign, hard_assign_gram, soft_assign, soft_assign_gram, AssignmentEstimate, CorrScope,
    ExperimentConfig, Mode,
};
pub use error::{Error, Result};
pub use gram::GramModel;
pub use oracle::{hard_moments, soft_moments, OracleResult};
pub use templates::{TemplateSet, TemplateSpec};
