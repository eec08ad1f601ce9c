//! Unsupervised domain adaptation when the labeled source domain has no
//! samples at all in one label-background cell (`y = 1, a = 1`).
//!
//! Pipeline:
//!
//! 1. [`dataset`]: load and validate rows `(r, y, a, x)`.
//! 2. [`adapt::fit_nuisance`]: fit five logistic nuisance models.
//! 3. [`proportions`]: estimate source `alpha`, `pi` and target `beta`,
//!    `rho`, `b1` (KL distribution matching, moment matching, anchor rule).
//! 4. [`adapt::TargetPredictor`]: closed-form target predictors `eta1`,
//!    `eta0`, `eta` next to the naive source models `xi1`, `xi0`, `xi`.
//! 5. [`reweight`]: importance weights and plug-in target risks.
//!
//! [`synthgen`] reproduces the four-Gaussian simulation design and the
//! rate-based split of a labeled pool.

pub mod adapt;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod proportions;
pub mod reweight;
pub mod synthgen;

pub use adapt::{fit_nuisance, NuisanceBundle, Nuisances, TargetPredictor};
pub use classify::{fit_logistic, FitOptions, ProbModel, Probability};
pub use dataset::{CellCounts, CellKey, Dataset, Sample};
pub use error::{DataError, EstimationError, FitError};
pub use proportions::{SourceProportions, TargetProportions};
