//! Trans-dimensional MCMC sampler.

pub mod chain;
pub mod config;
pub mod kernels;
pub mod sweep;
pub mod trace;

pub use chain::{chain_rng, initial_state, resample_z, run_chain, run_chain_from, run_chains, run_chains_fixed_z, sample_prior_state};
pub use config::{ColumnMoves, MUpdate, SamplerConfig};
pub use kernels::{a_log_odds, z_log_odds, Sampler, TreeConstants};
pub use sweep::b_log_odds;
pub use trace::{Counter, IterationRecord, KernelDiagnostics, Snapshot, Trace};
