//! Simultaneous experiment selection and imputation of missing design
//! entries by deterministic annealing.

pub mod anneal;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod extensions;
pub mod io;
pub mod linalg;

pub use anneal::{anneal, harden, AnnealSchedule, AnnealState, TraceEntry};
pub use error::{Result, SsioError};
pub use extensions::{constrained_anneal, d_anneal, BudgetSpec};
pub use linalg::{Criterion, FisherMatrix, HardDesign, IncompleteMatrix, MissingCell, SelectionWeights};
