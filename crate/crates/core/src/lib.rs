//! Bayesian multinomial matrix factorization of host-by-taxon count tables.
//!
//! Counts are Dirichlet-multinomial given a binary presence matrix `Z`, and
//! `Z` follows a logistic factor model `c_j + Σ_k a_ik w_jk b_jk`. The taxon
//! loadings `B` get a phylogenetic Indian buffet process prior on a rank
//! tree, so related taxa tend to share clusters.

pub mod assignment;
pub mod error;
pub mod estimate;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod pibp;
pub mod simgen;
pub mod special;
pub mod tree;

pub use error::{MmfError, Result};
pub use estimate::{PointEstimates, RecoveryReport};
pub use mcmc::{run_chain, run_chains, SamplerConfig, Trace};
pub use model::{log_joint, Cluster, CountMatrix, Hyperparameters, ModelState};
pub use tree::{parse_newick, RankTree};
