//! The four commands. Each one reads and checks every input, computes its
//! results in memory, and only then creates the output directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mmf::estimate::{posterior_predictive, psrf_k, psrf_q, recovery_report, summarize, PointEstimates};
use mmf::io::{binary_csv, float_csv, fmt_f64, read_binary_csv, read_counts, read_trace, scalars_csv, write_counts, write_trace};
use mmf::mcmc::{chain_rng, run_chains, run_chains_fixed_z};
use mmf::simgen::{simulate, tsmf_dichotomize};
use mmf::{parse_newick, CountMatrix, RankTree, SamplerConfig, Trace};
use ndarray::Array2;

use crate::config::{scenario_text, RunConfig, ZSource};
use crate::error::CliError;
use crate::svg::heatmap;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Output directory that is removed again unless the command completes,
/// provided this command created it.
struct OutputDir {
    path: PathBuf,
    created: bool,
    done: bool,
}

impl OutputDir {
    fn create(path: &Path) -> Result<Self, CliError> {
        let created = !path.exists();
        fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        Ok(OutputDir { path: path.to_path_buf(), created, done: false })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn finish(mut self) {
        self.done = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.created && !self.done {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let p = path.as_deref().ok_or_else(|| invalid(format!("config key `{key}` is required")))?;
    if !p.exists() {
        return Err(invalid(format!("{key} file {} does not exist", p.display())));
    }
    Ok(p)
}

fn load_tree(path: &Path) -> Result<RankTree, CliError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let tree = parse_newick(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if tree.inserted_unary() > 0 {
        eprintln!(
            "note: {} has leaves at unequal depth; {} unary nodes inserted to reach depth {}",
            path.display(),
            tree.inserted_unary(),
            tree.depth()
        );
    }
    Ok(tree)
}

fn load_counts(path: &Path) -> Result<CountMatrix, CliError> {
    read_counts(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Counts and tree with the tree's taxon order aligned to the count columns.
fn load_data(cfg: &RunConfig) -> Result<(CountMatrix, RankTree), CliError> {
    let data = load_counts(require(&cfg.counts, "counts")?)?;
    let tree = load_tree(require(&cfg.tree, "tree")?)?;
    let in_counts: BTreeSet<&String> = data.taxa().iter().collect();
    let names = tree.leaf_names();
    let in_tree: BTreeSet<&String> = names.iter().collect();
    if in_counts != in_tree {
        let only_counts: Vec<&str> = in_counts.difference(&in_tree).map(|s| s.as_str()).collect();
        let only_tree: Vec<&str> = in_tree.difference(&in_counts).map(|s| s.as_str()).collect();
        return Err(invalid(format!(
            "tree leaves and count columns differ; only in counts: [{}]; only in tree: [{}]",
            only_counts.join(", "),
            only_tree.join(", ")
        )));
    }
    let tree = tree.with_taxon_order(data.taxa())?;
    Ok((data, tree))
}

fn trace_name(c: usize) -> String {
    format!("trace_chain{c}.bin")
}

fn load_traces(dir: &Path, data: &CountMatrix) -> Result<Vec<Trace>, CliError> {
    let mut traces = Vec::new();
    while dir.join(trace_name(traces.len())).exists() {
        let path = dir.join(trace_name(traces.len()));
        let trace = read_trace(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if trace.snapshots.iter().any(|s| s.state.z.dim() != (data.n_hosts(), data.n_taxa())) {
            return Err(invalid(format!("{} does not match the counts table dimensions", path.display())));
        }
        traces.push(trace);
    }
    if traces.is_empty() {
        return Err(invalid(format!("no {} in {}", trace_name(0), dir.display())));
    }
    Ok(traces)
}

fn validate_sampling(cfg: &RunConfig) -> Result<SamplerConfig, CliError> {
    cfg.sampler.validate()?;
    cfg.hp.validate()?;
    let mut sampler = cfg.sampler.clone();
    if cfg.z_source == ZSource::Tsmf {
        sampler.freeze_z = true;
    }
    Ok(sampler)
}

fn cluster_names(k: usize) -> Vec<String> {
    (1..=k).map(|c| format!("k{c}")).collect()
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let sc = &cfg.scenario;
    sc.validate()?;
    let tree = match &cfg.tree {
        Some(_) => {
            let t = load_tree(require(&cfg.tree, "tree")?)?;
            if t.n_leaves() != sc.p {
                return Err(invalid(format!("tree has {} leaves but p = {}", t.n_leaves(), sc.p)));
            }
            Some(t)
        }
        None => None,
    };
    let mut rng = chain_rng(sc.seed, 0);
    let sim = simulate(sc, tree, &mut rng)?;

    let out = OutputDir::create(&cfg.out)?;
    write_counts(&out.file("counts.tsv"), &sim.data)?;
    let ks = cluster_names(sc.k);
    out.write("truth_A.csv", binary_csv(&sim.a, Some(&ks), Some(sim.data.hosts())))?;
    out.write("truth_B.csv", binary_csv(&sim.b, Some(&ks), Some(sim.data.taxa())))?;
    match &sim.z {
        Some(z) => out.write("truth_Z.csv", binary_csv(z, Some(sim.data.taxa()), Some(sim.data.hosts())))?,
        None => eprintln!("note: the negative-binomial generator has no latent Z; truth_Z.csv not written"),
    }
    out.write("tree.nwk", format!("{}\n", sim.tree.to_newick()))?;
    out.write("scenario.cfg", scenario_text(sc))?;
    out.finish();
    eprintln!("simulated {} hosts x {} taxa into {}", sc.n, sc.p, cfg.out.display());
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig, threads: usize) -> Result<(), CliError> {
    let (data, tree) = load_data(cfg)?;
    let sampler = validate_sampling(cfg)?;
    let fixed_z = match cfg.z_source {
        ZSource::Model => None,
        ZSource::Tsmf => Some(tsmf_dichotomize(&data, cfg.tsmf_floor, cfg.tsmf_quantile)?),
    };
    eprintln!(
        "fitting {} chain(s) of {} iterations on {} hosts x {} taxa ({} thread(s))",
        sampler.n_chains,
        sampler.iterations,
        data.n_hosts(),
        data.n_taxa(),
        threads
    );
    let traces = match &fixed_z {
        None => run_chains(&data, &tree, &cfg.hp, &sampler, threads)?,
        Some(z) => run_chains_fixed_z(&data, &tree, &cfg.hp, &sampler, threads, z)?,
    };

    let out = OutputDir::create(&cfg.out)?;
    for (c, trace) in traces.iter().enumerate() {
        write_trace(&out.file(&trace_name(c)), &out.file(&format!("trace_chain{c}.idx")), trace, data.n_hosts(), data.n_taxa())?;
        out.write(&format!("scalars_chain{c}.csv"), scalars_csv(trace))?;
        let last_k = trace.records.last().map_or(0, |r| r.k);
        eprintln!(
            "chain {c}: {} snapshots, final K = {last_k}, {:.1} s in sweeps",
            trace.snapshots.len(),
            trace.diagnostics.sweep_seconds
        );
    }
    out.finish();
    Ok(())
}

fn read_host_groups(path: &Path, data: &CountMatrix) -> Result<Vec<bool>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut label_of = std::collections::HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (host, label) = line
            .split_once('\t')
            .ok_or_else(|| invalid(format!("{}: line {}: expected host<TAB>group", path.display(), ln + 1)))?;
        label_of.insert(host.trim().to_string(), label.trim().to_string());
    }
    let labels: Vec<String> = data
        .hosts()
        .iter()
        .map(|h| label_of.get(h).cloned().ok_or_else(|| invalid(format!("{}: no group for host {h}", path.display()))))
        .collect::<Result<_, _>>()?;
    let distinct: BTreeSet<&String> = labels.iter().collect();
    if distinct.len() > 2 {
        return Err(invalid(format!("{}: heatmaps support two host groups, found {}", path.display(), distinct.len())));
    }
    // the alphabetically first group is drawn red, the other green
    let first = *distinct.iter().next().expect("at least one host");
    Ok(labels.iter().map(|l| l != first).collect())
}

fn params_csv(est: &PointEstimates, data: &CountMatrix) -> String {
    let mut out = String::from("parameter,taxon,cluster,value\n");
    for (j, taxon) in data.taxa().iter().enumerate() {
        out.push_str(&format!("c,{taxon},,{}\n", fmt_f64(est.c_hat[j])));
        out.push_str(&format!("s,{taxon},,{}\n", fmt_f64(est.s_hat[j])));
        out.push_str(&format!("t,{taxon},,{}\n", fmt_f64(est.t_hat[j])));
        for k in 0..est.k_hat {
            out.push_str(&format!("w,{taxon},k{},{}\n", k + 1, fmt_f64(est.w_hat[[j, k]])));
        }
    }
    out.push_str(&format!("m,,,{}\n", fmt_f64(est.m_hat)));
    out.push_str(&format!("rho,,,{}\n", fmt_f64(est.rho_hat)));
    out
}

pub fn cmd_summarize(cfg: &RunConfig) -> Result<(), CliError> {
    let (data, tree) = load_data(cfg)?;
    let sampler = validate_sampling(cfg)?;
    let traces = load_traces(cfg.trace_dir(), &data)?;
    let truth = match (&cfg.truth_a, &cfg.truth_b) {
        (None, None) => None,
        (Some(_), Some(_)) => {
            let a = read_binary_csv(require(&cfg.truth_a, "truth_a")?)?;
            let b = read_binary_csv(require(&cfg.truth_b, "truth_b")?)?;
            if a.nrows() != data.n_hosts() || b.nrows() != data.n_taxa() || a.ncols() != b.ncols() {
                return Err(invalid("truth_a / truth_b shapes do not match the data"));
            }
            Some((a, b))
        }
        _ => return Err(invalid("truth_a and truth_b must be given together")),
    };
    let groups = match &cfg.host_labels {
        Some(_) => Some(read_host_groups(require(&cfg.host_labels, "host_labels")?, &data)?),
        None => None,
    };

    let est = summarize(&data, &tree, &cfg.hp, &sampler, &traces)?;
    let report = match &truth {
        Some((a, b)) => Some(recovery_report(&est.a_hat, &est.b_hat, a, b)?),
        None => None,
    };

    let out = OutputDir::create(&cfg.out)?;
    let ks = cluster_names(est.k_hat);
    out.write("K_hat.txt", format!("{}\n", est.k_hat))?;
    out.write("B_hat.csv", binary_csv(&est.b_hat, Some(&ks), Some(data.taxa())))?;
    out.write("A_hat.csv", binary_csv(&est.a_hat, Some(&ks), Some(data.hosts())))?;
    out.write("Z_hat.csv", float_csv(&est.z_hat, Some(data.taxa()), Some(data.hosts())))?;
    out.write("params_hat.csv", params_csv(&est, &data))?;
    if let Some(r) = &report {
        out.write(
            "recovery_report.csv",
            format!("k_true,k_hat,error_A,error_B\n{},{},{},{}\n", r.k_true, r.k_hat, fmt_f64(r.error_a), fmt_f64(r.error_b)),
        )?;
        eprintln!("error_A = {:.4}, error_B = {:.4}", r.error_a, r.error_b);
    }
    if cfg.heatmaps {
        out.write("B_hat.svg", heatmap(&est.b_hat, &tree.display_order(), data.taxa(), &ks, None))?;
        let mut host_order: Vec<usize> = (0..data.n_hosts()).collect();
        if let Some(g) = &groups {
            host_order.sort_by_key(|&i| g[i]);
        }
        out.write("A_hat.svg", heatmap(&est.a_hat, &host_order, data.hosts(), &ks, groups.as_deref()))?;
    }
    out.finish();
    eprintln!("K_hat = {}", est.k_hat);
    Ok(())
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_counts(require(&cfg.counts, "counts")?)?;
    let traces = load_traces(cfg.trace_dir(), &data)?;
    let psrf = if traces.len() >= 2 {
        let k = psrf_k(&traces)?;
        let (q_med, q_sd) = psrf_q(&traces)?;
        Some(format!("quantity,psrf\nK,{}\nq_median,{}\nq_sd,{}\n", fmt_f64(k), fmt_f64(q_med), fmt_f64(q_sd)))
    } else {
        None
    };
    let warning = "warning: only one chain found; PSRF needs at least two, psrf.csv not written";
    let states = traces.iter().flat_map(|t| t.snapshots.iter().map(|s| &s.state));
    let (pred, r): (Array2<f64>, f64) = posterior_predictive(&data, states)?;

    let out = OutputDir::create(&cfg.out)?;
    let mut summary = format!("pearson_r,{}\nsnapshots,{}\n", fmt_f64(r), traces.iter().map(|t| t.snapshots.len()).sum::<usize>());
    match &psrf {
        Some(text) => out.write("psrf.csv", text)?,
        None => {
            eprintln!("{warning}");
            summary.push_str(warning);
            summary.push('\n');
        }
    }
    out.write("ppc.csv", float_csv(&pred, Some(data.taxa()), Some(data.hosts())))?;
    out.write("ppc_summary.txt", summary)?;
    out.finish();
    eprintln!("posterior predictive correlation {r:.4}");
    Ok(())
}
