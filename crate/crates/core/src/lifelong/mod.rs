//! Online and batch lifelong learners over the coupled dictionary.

mod batch;
mod engine;
mod transfer;

pub use batch::{batch_mtl, BatchOptions, BatchOutcome, BatchTask};
pub use engine::{EncounterReport, Hyper, LearnerState, Mode};
pub use transfer::{warm_start, zero_shot, ZeroShotPrediction};
