//! Bayesian optimisation over architecture codes.

pub mod gp;
pub mod kernel;
pub mod propose;
pub mod run;
pub mod space;
pub mod table;

pub use gp::{gp_fit, log_marginal_likelihood, GpConfig, GpModel, Likelihood, Observation, PriorMean};
pub use kernel::{hamming_distance, hamming_kernel, KernelParams, NUM_GENES};
pub use propose::{acquisition, propose_batch, AcquisitionKind, ProposeOptions, Proposal};
pub use run::{evaluations_to, read_history, search, HistoryEntry, HistoryLog, Phase, SearchConfig, SearchOutcome};
pub use space::SearchSpace;
pub use table::TableObjective;
