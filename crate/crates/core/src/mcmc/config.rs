use crate::error::{MmfError, Result};

/// How the pIBP mass m is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MUpdate {
    /// Exact draw from Gamma(shape + K, rate + H).
    Conjugate,
    /// Random walk on log m with the same target.
    RandomWalk,
}

/// How columns are opened and closed in the B sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnMoves {
    /// Columns active at taxon j only are left out of the Gibbs scan and
    /// replaced as a block by fresh prior columns. Leaves the posterior
    /// invariant.
    Replace,
    /// Every column is Gibbs-scanned (a singleton can empty and close) and
    /// fresh columns are only ever added. Births and deaths are not a
    /// reversible pair, so the posterior is only approximately invariant.
    AddOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Random-walk scales on log w, c, (log s, log t) and log m.
    pub scale_w: f64,
    pub scale_c: f64,
    pub scale_st: f64,
    pub scale_m: f64,
    /// p_k proposal variance c p (1 - p) + δ.
    pub pk_c: f64,
    pub pk_delta: f64,
    pub init_clusters: usize,
    pub refit_iterations: usize,
    pub refit_burn_in: usize,
    pub m_update: MUpdate,
    pub column_moves: ColumnMoves,
    /// When false, every data-dependent factor is dropped and the sampler
    /// targets the prior. Used by invariance tests.
    pub use_likelihood: bool,
    /// Z held fixed (two-step baseline on a pre-dichotomised matrix); s and t
    /// are not updated either.
    pub freeze_z: bool,
    /// B held fixed (conditional refit); Steps i-iii are skipped.
    pub freeze_b: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 5,
            seed: 1,
            n_chains: 2,
            scale_w: 0.3,
            scale_c: 0.3,
            scale_st: 0.3,
            scale_m: 0.3,
            pk_c: 0.06,
            pk_delta: 0.08,
            init_clusters: 10,
            refit_iterations: 2_000,
            refit_burn_in: 500,
            m_update: MUpdate::Conjugate,
            column_moves: ColumnMoves::Replace,
            use_likelihood: true,
            freeze_z: false,
            freeze_b: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(MmfError::InvalidInput(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(MmfError::InvalidInput("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(MmfError::InvalidInput("need at least one chain".into()));
        }
        for (name, v) in [
            ("scale_w", self.scale_w),
            ("scale_c", self.scale_c),
            ("scale_st", self.scale_st),
            ("scale_m", self.scale_m),
            ("pk_c", self.pk_c),
            ("pk_delta", self.pk_delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MmfError::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of retained snapshots: floor((iterations - burn_in) / thin).
    pub fn snapshot_count(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether iteration `it` (1-based) is retained.
    pub fn keeps(&self, it: usize) -> bool {
        it > self.burn_in && (it - self.burn_in) % self.thin == 0
    }
}
