use crate::model::ModelState;

/// Proposal/acceptance counters for the Metropolis-Hastings kernels and
/// column birth/death counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelDiagnostics {
    pub w: Counter,
    pub c: Counter,
    pub st: Counter,
    pub pk: Counter,
    pub new_columns: Counter,
    pub m: Counter,
    pub columns_born: u64,
    pub columns_deleted: u64,
    pub sweep_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    /// Fraction accepted; 0 when nothing was proposed.
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub k: usize,
    pub log_joint: f64,
    pub m: f64,
    pub rho: f64,
    /// Cumulative acceptance rates: w, c, (s,t), p_k, new columns.
    pub acceptance: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub state: ModelState,
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub chain_id: u32,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: KernelDiagnostics,
}

impl Trace {
    /// K at each retained snapshot.
    pub fn snapshot_ks(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.state.k()).collect()
    }
}
