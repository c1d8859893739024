//! Flat `key = value` configuration shared by all four commands.
//!
//! `#` starts a comment. Unknown or repeated keys are errors. Relative paths
//! are resolved against the directory of the config file.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mmf::mcmc::{ColumnMoves, MUpdate};
use mmf::simgen::{SimMode, SimScenario};
use mmf::{Hyperparameters, SamplerConfig};

use crate::error::CliError;

/// Where the sampler gets Z from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZSource {
    /// Latent and sampled (the full model).
    Model,
    /// Fixed at the dichotomised count table (two-step baseline).
    Tsmf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub counts: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub out: PathBuf,
    /// Directory holding the trace archives; defaults to `out`.
    pub traces: Option<PathBuf>,
    pub truth_a: Option<PathBuf>,
    pub truth_b: Option<PathBuf>,
    /// Two-column TSV (host, group) used to colour heatmap rows.
    pub host_labels: Option<PathBuf>,
    pub heatmaps: bool,
    pub z_source: ZSource,
    pub tsmf_floor: f64,
    pub tsmf_quantile: f64,
    pub sampler: SamplerConfig,
    pub hp: Hyperparameters,
    pub scenario: SimScenario,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            counts: None,
            tree: None,
            out: PathBuf::from("mmf_out"),
            traces: None,
            truth_a: None,
            truth_b: None,
            host_labels: None,
            heatmaps: true,
            z_source: ZSource::Model,
            tsmf_floor: 1e-5,
            tsmf_quantile: 0.25,
            sampler: SamplerConfig::default(),
            hp: Hyperparameters::default(),
            scenario: SimScenario::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{value}` is not a valid value for {key}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key} expects true or false, got `{value}`")),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", ln + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(format!("line {}: `{key}` set twice", ln + 1));
            }
            cfg.set(key, value, base).map_err(|e| format!("line {}: {e}", ln + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = || Some(base.join(value));
        let sc = &mut self.scenario;
        let sm = &mut self.sampler;
        let hp = &mut self.hp;
        match key {
            "counts" => self.counts = path(),
            "tree" => self.tree = path(),
            "out" => self.out = base.join(value),
            "traces" => self.traces = path(),
            "truth_a" => self.truth_a = path(),
            "truth_b" => self.truth_b = path(),
            "host_labels" => self.host_labels = path(),
            "heatmaps" => self.heatmaps = parse_bool(key, value)?,
            "z_source" => {
                self.z_source = match value {
                    "model" => ZSource::Model,
                    "tsmf" => ZSource::Tsmf,
                    _ => return Err(format!("z_source must be model or tsmf, got `{value}`")),
                }
            }
            "tsmf_floor" => self.tsmf_floor = parse(key, value)?,
            "tsmf_quantile" => self.tsmf_quantile = parse(key, value)?,

            "seed" => {
                sm.seed = parse(key, value)?;
                sc.seed = sm.seed;
            }
            "iterations" => sm.iterations = parse(key, value)?,
            "burn_in" => sm.burn_in = parse(key, value)?,
            "thin" => sm.thin = parse(key, value)?,
            "chains" => sm.n_chains = parse(key, value)?,
            "scale_w" => sm.scale_w = parse(key, value)?,
            "scale_c" => sm.scale_c = parse(key, value)?,
            "scale_st" => sm.scale_st = parse(key, value)?,
            "scale_m" => sm.scale_m = parse(key, value)?,
            "pk_c" => sm.pk_c = parse(key, value)?,
            "pk_delta" => sm.pk_delta = parse(key, value)?,
            "init_clusters" => sm.init_clusters = parse(key, value)?,
            "refit_iterations" => sm.refit_iterations = parse(key, value)?,
            "refit_burn_in" => sm.refit_burn_in = parse(key, value)?,
            "m_update" => {
                sm.m_update = match value {
                    "conjugate" => MUpdate::Conjugate,
                    "random_walk" => MUpdate::RandomWalk,
                    _ => return Err(format!("m_update must be conjugate or random_walk, got `{value}`")),
                }
            }
            "column_moves" => {
                sm.column_moves = match value {
                    "replace" => ColumnMoves::Replace,
                    "add_only" => ColumnMoves::AddOnly,
                    _ => return Err(format!("column_moves must be replace or add_only, got `{value}`")),
                }
            }

            "alpha_s" => hp.alpha_s = parse(key, value)?,
            "beta_s" => hp.beta_s = parse(key, value)?,
            "alpha_t" => hp.alpha_t = parse(key, value)?,
            "beta_t" => hp.beta_t = parse(key, value)?,
            "mu_c" => hp.mu_c = parse(key, value)?,
            "sigma2_c" => hp.sigma2_c = parse(key, value)?,
            "alpha_w" => hp.alpha_w = parse(key, value)?,
            "beta_w" => hp.beta_w = parse(key, value)?,
            "alpha_rho" => hp.alpha_rho = parse(key, value)?,
            "beta_rho" => hp.beta_rho = parse(key, value)?,
            "m_shape" => hp.m_shape = parse(key, value)?,
            "m_rate" => hp.m_rate = parse(key, value)?,

            "n" => sc.n = parse(key, value)?,
            "p" => sc.p = parse(key, value)?,
            "k" => sc.k = parse(key, value)?,
            "block_size" => sc.block_size = parse(key, value)?,
            "flip_frac" => sc.flip_frac = parse(key, value)?,
            "p_k_true" => sc.p_k_true = parse(key, value)?,
            "w_true" => {
                sc.w_true = value
                    .split(',')
                    .map(|v| parse::<f64>(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "c_true" => sc.c_true = parse(key, value)?,
            "s_true" => sc.s = parse(key, value)?,
            "t_true" => sc.t = parse(key, value)?,
            "n_min" => sc.n_range.0 = parse(key, value)?,
            "n_max" => sc.n_range.1 = parse(key, value)?,
            "mode" => {
                sc.mode = match value {
                    "dm" => SimMode::WellSpecified,
                    "negbin" => SimMode::NegBinMisspecified,
                    _ => return Err(format!("mode must be dm or negbin, got `{value}`")),
                }
            }
            "tree_depth" => sc.tree_depth = parse(key, value)?,
            "tree_arity" => sc.tree_arity = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.sampler.seed = seed;
            self.scenario.seed = seed;
        }
        if let Some(v) = o.chains {
            self.sampler.n_chains = v;
        }
        if let Some(v) = o.iters {
            self.sampler.iterations = v;
        }
        if let Some(v) = o.burnin {
            self.sampler.burn_in = v;
        }
        if let Some(v) = o.thin {
            self.sampler.thin = v;
        }
    }

    pub fn trace_dir(&self) -> &Path {
        self.traces.as_deref().unwrap_or(&self.out)
    }
}

/// The scenario as a config file that `simulate` reads back unchanged.
pub fn scenario_text(sc: &SimScenario) -> String {
    let mut out = String::new();
    let w: Vec<String> = sc.w_true.iter().map(|v| v.to_string()).collect();
    let mode = match sc.mode {
        SimMode::WellSpecified => "dm",
        SimMode::NegBinMisspecified => "negbin",
    };
    // Display of f64 round-trips exactly
    let _ = writeln!(out, "seed = {}", sc.seed);
    let _ = writeln!(out, "n = {}", sc.n);
    let _ = writeln!(out, "p = {}", sc.p);
    let _ = writeln!(out, "k = {}", sc.k);
    let _ = writeln!(out, "block_size = {}", sc.block_size);
    let _ = writeln!(out, "flip_frac = {}", sc.flip_frac);
    let _ = writeln!(out, "p_k_true = {}", sc.p_k_true);
    let _ = writeln!(out, "w_true = {}", w.join(","));
    let _ = writeln!(out, "c_true = {}", sc.c_true);
    let _ = writeln!(out, "s_true = {}", sc.s);
    let _ = writeln!(out, "t_true = {}", sc.t);
    let _ = writeln!(out, "n_min = {}", sc.n_range.0);
    let _ = writeln!(out, "n_max = {}", sc.n_range.1);
    let _ = writeln!(out, "mode = {mode}");
    let _ = writeln!(out, "tree_depth = {}", sc.tree_depth);
    let _ = writeln!(out, "tree_arity = {}", sc.tree_arity);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_paths() {
        let cfg = RunConfig::parse("# header\n\ncounts = data/x.tsv  # trailing\niterations=50\n", Path::new("/base")).unwrap();
        assert_eq!(cfg.counts.as_deref(), Some(Path::new("/base/data/x.tsv")));
        assert_eq!(cfg.sampler.iterations, 50);
        let cfg = RunConfig::parse("column_moves = add_only\nm_update = random_walk\n", Path::new(".")).unwrap();
        assert_eq!((cfg.sampler.column_moves, cfg.sampler.m_update), (ColumnMoves::AddOnly, MUpdate::RandomWalk));
    }

    #[test]
    fn unknown_and_repeated_keys_fail() {
        let err = RunConfig::parse("iteratons = 5\n", Path::new(".")).unwrap_err();
        assert!(err.contains("unknown key `iteratons`"), "{err}");
        assert!(RunConfig::parse("thin = 2\nthin = 3\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("thin 2\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("thin = two\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("column_moves = sometimes\n", Path::new(".")).is_err());
    }

    #[test]
    fn seed_sets_both_seeds_and_overrides_win() {
        let mut cfg = RunConfig::parse("seed = 9\nchains = 3\n", Path::new(".")).unwrap();
        assert_eq!((cfg.sampler.seed, cfg.scenario.seed), (9, 9));
        cfg.apply(&Overrides { seed: Some(4), chains: Some(1), ..Default::default() });
        assert_eq!((cfg.sampler.seed, cfg.scenario.seed, cfg.sampler.n_chains), (4, 4, 1));
    }

    #[test]
    fn scenario_text_round_trips() {
        let sc = SimScenario { mode: SimMode::NegBinMisspecified, c_true: 0.5f64.ln(), ..Default::default() };
        let back = RunConfig::parse(&scenario_text(&sc), Path::new(".")).unwrap();
        assert_eq!(back.scenario, sc);
    }
}
