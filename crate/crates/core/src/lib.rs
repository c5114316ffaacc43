//! Lifelong learning over a coupled dictionary of model parameters and task
//! descriptors.
//!
//! Each task contributes a single-task solution `(alpha, gamma)` and a
//! descriptor `phi`. Both are sparse-coded against a shared pair of bases
//! `L` (model space) and `D` (descriptor space) so that a new task's model can
//! be predicted from its descriptor alone.
//!
//! Module map:
//! - [`sparse`]: soft-thresholding, LASSO, whitening, mutual coherence.
//! - [`dictionary`]: the coupled bases and their recursive accumulators.
//! - [`learners`]: single-task ridge, logistic and policy-gradient learners.
//! - [`environments`]: simulated task domains and their descriptors.
//! - [`lifelong`]: the online engine, batch multi-task solver and zero-shot.

pub mod dictionary;
pub mod environments;
mod error;
pub mod learners;
pub mod lifelong;
pub mod linalg;
pub mod sparse;

pub use error::{Error, Result};
