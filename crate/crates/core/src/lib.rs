//! Prognostic-score stratification pilot designs for observational studies.
//!
//! The pipeline: split a pilot set out of the controls, fit a prognostic
//! model on it, score and quantile-stratify the analysis set, diagnose the
//! strata, then optimally match treated to control units on propensity
//! score within each stratum.
//!
//! ```
//! use stratmatch::dataset::Formula;
//! use stratmatch::simgen::{make_sample_data, SimConfig};
//! use stratmatch::stratifier::{auto_stratify, AutoStratifyConfig, Prognosis};
//! use stratmatch::matcher::{strata_match, PropensityInput};
//!
//! let dat = make_sample_data(&SimConfig { n: 2000, seed: 7 }).unwrap();
//! let strata = auto_stratify(
//!     &dat,
//!     Prognosis::Formula(Formula::parse("outcome ~ X1 + X2").unwrap()),
//!     None,
//!     &AutoStratifyConfig { size: 200, ..AutoStratifyConfig::new("treat") },
//! ).unwrap();
//! let matched = strata_match(
//!     &strata,
//!     &PropensityInput::Formula(Formula::parse("treat ~ X1 + X2 + B1 + B2").unwrap()),
//!     1,
//! ).unwrap();
//! assert!(matched.effective_pairs > 0.0);
//! ```

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod glm;
pub mod matcher;
pub mod numfmt;
pub mod sampler;
pub mod simgen;
pub mod stratifier;

mod linalg;

pub use error::{Error, MatchWarning, Result, StrataWarning};
