//! Command-line surface: data simulation, chain execution, trace
//! diagnostics and the G-Wishart sampler benchmark.
//!
//! Exit codes: 0 on success, 2 on configuration/usage errors, 1 on runtime
//! errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{run_chain, Algorithm, ChainConfig, ClInner};
use crate::data::{
    gen_bench_graph, gen_cycle_dataset, gen_model_dataset, load_matrix_csv, quantile_normalize,
    write_matrix_csv, BenchGraphKind, Dataset,
};
use crate::decompose::atom_decomposition;
use crate::diagnostics::{build_report, inclusion_probabilities, write_inclusion_csv};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphPrior};
use crate::gwishart::{
    sample_decomposed, ApproxVariant, Decomposition, GWishartParams, PosteriorParams,
    SamplerConfig,
};

#[derive(Parser)]
#[command(
    name = "gwmcmc",
    version,
    about = "MCMC for Gaussian graphical models under the G-Wishart prior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data (with truth sidecars) or benchmark graphs.
    SimulateData {
        /// cycle | model | bench-graph
        #[arg(long)]
        kind: String,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Graph family for kind=bench-graph: chorded-cycle | er:RHO
        #[arg(long)]
        graph_kind: Option<String>,
        /// Degrees of freedom for kind=model
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one MCMC chain and write its trace and manifest.
    Run {
        /// wwa | wwa-no-informed | wwa-no-da | exchange-plain | dcbf | cl
        #[arg(long)]
        algo: String,
        /// Numeric CSV of observations, one row per sample.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        /// Prior rate matrix D = scale · I.
        #[arg(long, default_value_t = 1.0)]
        d_scale: f64,
        /// uniform | bernoulli:RHO
        #[arg(long, default_value = "uniform")]
        prior: String,
        /// Recorded iterations (the trace length).
        #[arg(long)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        burnin: usize,
        /// Single-edge updates per iteration (default: p).
        #[arg(long)]
        n_e: Option<usize>,
        /// mohammadi | unit
        #[arg(long, default_value = "mohammadi")]
        approx: String,
        /// direct | block-gibbs:T
        #[arg(long, default_value = "block-gibbs:10")]
        cl_inner: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads for the informed-proposal scan.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Scan all pairs per iteration instead of n-e random ones
        /// (original DCBF/CL sweep form).
        #[arg(long, default_value_t = false)]
        full_sweep: bool,
        /// Center each data column before forming the posterior.
        #[arg(long, default_value_t = false)]
        demean: bool,
        /// Quantile-normalize each column to a standard Gaussian.
        #[arg(long, default_value_t = false)]
        quantile_normalize: bool,
        /// Initial graph as a 1-based edge-list file (default: empty graph).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out_trace: PathBuf,
        #[arg(long)]
        out_manifest: PathBuf,
        /// Also write the posterior-mean precision matrix as CSV.
        #[arg(long)]
        out_khat: Option<PathBuf>,
    },
    /// Summarize a trace: IACT, ESS, cost of an independent sample,
    /// inclusion probabilities, and accuracy measures when truth is given.
    Diagnose {
        #[arg(long)]
        trace: PathBuf,
        /// Stem of the truth sidecars written by simulate-data
        /// (<stem>.truth-edges.txt and <stem>.truth-k.csv).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Posterior-mean precision matrix CSV from `run --out-khat`.
        #[arg(long)]
        khat: Option<PathBuf>,
        /// Node count; inferred from the trace or truth when omitted.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the inclusion matrix as CSV.
        #[arg(long)]
        inclusion_csv: Option<PathBuf>,
    },
    /// Time G-Wishart draws with and without graph decomposition.
    BenchGwishart {
        /// chorded-cycle | er:RHO
        #[arg(long)]
        graph_kind: String,
        /// Comma-separated node counts, e.g. 20,40,80.
        #[arg(long)]
        p_list: String,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// on | off
        #[arg(long)]
        decomposition: String,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_prior(s: &str) -> Result<GraphPrior> {
    if s == "uniform" {
        return Ok(GraphPrior::Uniform);
    }
    if let Some(rho) = s.strip_prefix("bernoulli:") {
        let rho: f64 = rho
            .parse()
            .map_err(|_| Error::Config(format!("bad edge probability '{rho}'")))?;
        let prior = GraphPrior::Bernoulli(rho);
        prior.validate()?;
        return Ok(prior);
    }
    Err(Error::Config(format!(
        "unknown prior '{s}' (expected uniform or bernoulli:RHO)"
    )))
}

fn parse_approx(s: &str) -> Result<ApproxVariant> {
    match s {
        "mohammadi" => Ok(ApproxVariant::Mohammadi),
        "unit" => Ok(ApproxVariant::Unit),
        other => Err(Error::Config(format!("unknown approximation '{other}'"))),
    }
}

fn parse_cl_inner(s: &str) -> Result<ClInner> {
    if s == "direct" {
        return Ok(ClInner::Direct);
    }
    if let Some(t) = s.strip_prefix("block-gibbs:") {
        let sweeps: usize = t
            .parse()
            .map_err(|_| Error::Config(format!("bad sweep count '{t}'")))?;
        if sweeps == 0 {
            return Err(Error::Config("sweep count must be positive".into()));
        }
        return Ok(ClInner::BlockGibbs(sweeps));
    }
    Err(Error::Config(format!(
        "unknown inner kernel '{s}' (expected direct or block-gibbs:T)"
    )))
}

fn parse_graph_kind(s: &str) -> Result<BenchGraphKind> {
    if s == "chorded-cycle" {
        return Ok(BenchGraphKind::ChordedCycle);
    }
    if let Some(rho) = s.strip_prefix("er:") {
        let rho: f64 = rho
            .parse()
            .map_err(|_| Error::Config(format!("bad edge probability '{rho}'")))?;
        return Ok(BenchGraphKind::Er(rho));
    }
    Err(Error::Config(format!(
        "unknown graph kind '{s}' (expected chorded-cycle or er:RHO)"
    )))
}

/// Truth sidecar paths derived from a data path: `<stem>.truth-edges.txt`
/// and `<stem>.truth-k.csv`.
fn truth_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let base = stem.with_extension("");
    let mut edges = base.clone().into_os_string();
    edges.push(".truth-edges.txt");
    let mut kmat = base.into_os_string();
    kmat.push(".truth-k.csv");
    (PathBuf::from(edges), PathBuf::from(kmat))
}

fn atomic_write(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Resolved run description written next to every trace.
#[derive(Debug, Serialize)]
struct RunManifest {
    code_version: String,
    algorithm: String,
    data_path: String,
    p: usize,
    n_rows: usize,
    delta: f64,
    d_scale: f64,
    prior: String,
    iterations: usize,
    burn_in: usize,
    n_edge_updates: usize,
    approx: String,
    cl_inner: String,
    seed: u64,
    threads: usize,
    full_sweep: bool,
    demean: bool,
    quantile_normalize: bool,
    init_path: Option<String>,
    out_trace: String,
    out_khat: Option<String>,
    started_at: String,
    finished_at: String,
}

fn cmd_simulate_data(
    kind: &str,
    p: usize,
    seed: u64,
    graph_kind: Option<&str>,
    delta: f64,
    out: &Path,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset: Dataset = match kind {
        "cycle" => gen_cycle_dataset(p, &mut rng)?,
        "model" => gen_model_dataset(p, delta, &mut rng)?,
        "bench-graph" => {
            let gk = parse_graph_kind(graph_kind.ok_or_else(|| {
                Error::Config("--graph-kind is required for kind=bench-graph".into())
            })?)?;
            let g = gen_bench_graph(gk, p, &mut rng)?;
            atomic_write(out, g.to_edge_list().as_bytes())?;
            return Ok(());
        }
        other => {
            return Err(Error::Config(format!(
                "unknown kind '{other}' (expected cycle, model or bench-graph)"
            )))
        }
    };
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, &dataset.y)?;
    atomic_write(out, &buf)?;
    if let Some(truth) = &dataset.truth {
        let (edges_path, k_path) = truth_paths(out);
        atomic_write(&edges_path, truth.graph.to_edge_list().as_bytes())?;
        let mut kbuf = Vec::new();
        write_matrix_csv(&mut kbuf, &truth.k_true)?;
        atomic_write(&k_path, &kbuf)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    algo: &str,
    data: &Path,
    delta: f64,
    d_scale: f64,
    prior: &str,
    iters: usize,
    burnin: usize,
    n_e: Option<usize>,
    approx: &str,
    cl_inner: &str,
    seed: u64,
    threads: usize,
    full_sweep: bool,
    demean: bool,
    do_quantile: bool,
    init: Option<&Path>,
    out_trace: &Path,
    out_manifest: &Path,
    out_khat: Option<&Path>,
) -> Result<()> {
    if !(d_scale > 0.0) {
        return Err(Error::Config(format!(
            "--d-scale must be positive, got {d_scale}"
        )));
    }
    let algorithm = Algorithm::parse(algo)?;
    let graph_prior = parse_prior(prior)?;
    let approx = parse_approx(approx)?;
    let cl_inner_parsed = parse_cl_inner(cl_inner)?;

    let mut dataset = load_matrix_csv(data, demean)?;
    if do_quantile {
        dataset.y = quantile_normalize(&dataset.y);
    }
    let p = dataset.y.ncols();
    let n_rows = dataset.y.nrows();
    let prior_params = GWishartParams::identity_scaled(delta, p, d_scale)?;
    let posterior = PosteriorParams::from_data(&prior_params, &dataset.y)?;
    let init_graph = match init {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Graph::from_edge_list(p, &text)?
        }
        None => Graph::empty(p),
    };

    let config = ChainConfig {
        algorithm,
        n_edge_updates: n_e.unwrap_or(0),
        iterations: iters,
        burn_in: burnin,
        seed,
        approx,
        cl_inner: cl_inner_parsed,
        threads,
        prior: graph_prior,
        full_sweep,
    };
    config.validate()?;

    let started_at = chrono::Utc::now().to_rfc3339();
    let run = run_chain(&config, &prior_params, &posterior, &init_graph)?;
    let finished_at = chrono::Utc::now().to_rfc3339();

    let mut trace_buf = Vec::new();
    crate::chain::write_trace_csv(&mut trace_buf, &run.records)?;
    atomic_write(out_trace, &trace_buf)?;

    if let Some(khat_path) = out_khat {
        let mut kbuf = Vec::new();
        write_matrix_csv(&mut kbuf, &run.k_hat)?;
        atomic_write(khat_path, &kbuf)?;
    }

    let manifest = RunManifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        algorithm: algorithm.name().to_string(),
        data_path: data.display().to_string(),
        p,
        n_rows,
        delta,
        d_scale,
        prior: prior.to_string(),
        iterations: iters,
        burn_in: burnin,
        n_edge_updates: if let Some(k) = n_e { k } else { p },
        approx: match approx {
            ApproxVariant::Mohammadi => "mohammadi".into(),
            ApproxVariant::Unit => "unit".into(),
        },
        cl_inner: cl_inner.to_string(),
        seed,
        threads,
        full_sweep,
        demean,
        quantile_normalize: do_quantile,
        init_path: init.map(|pth| pth.display().to_string()),
        out_trace: out_trace.display().to_string(),
        out_khat: out_khat.map(|pth| pth.display().to_string()),
        started_at,
        finished_at,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    atomic_write(out_manifest, json.as_bytes())?;
    Ok(())
}

/// Node count from a hex bit-vector width: the triangular number consistent
/// with `⌈m/4⌉` digits. Ambiguous only for a single digit (p = 2 or 3).
fn infer_p_from_hex(hex: &str) -> Result<usize> {
    let digits = hex.len();
    let mut candidates = Vec::new();
    for p in 2..=2048usize {
        let m = p * (p - 1) / 2;
        if m.div_ceil(4) == digits {
            candidates.push(p);
        }
    }
    match candidates.len() {
        1 => Ok(candidates[0]),
        0 => Err(Error::Config(format!(
            "no node count matches a {digits}-digit trace encoding"
        ))),
        _ => Err(Error::Config(format!(
            "ambiguous node count {candidates:?} for a {digits}-digit trace encoding; pass --p"
        ))),
    }
}

fn cmd_diagnose(
    trace_path: &Path,
    truth: Option<&Path>,
    khat: Option<&Path>,
    p_flag: Option<usize>,
    out: &Path,
    inclusion_csv: Option<&Path>,
) -> Result<()> {
    let file = std::fs::File::open(trace_path)?;
    let rows = crate::chain::read_trace_csv(file)?;
    if rows.is_empty() {
        return Err(Error::Config("trace has no rows".into()));
    }
    let truth_data = match truth {
        Some(stem) => {
            let (edges_path, k_path) = truth_paths(stem);
            let k = load_matrix_csv(&k_path, false)?.y;
            let p = k.ncols();
            let text = std::fs::read_to_string(&edges_path)?;
            let g = Graph::from_edge_list(p, &text)?;
            Some((g, k))
        }
        None => None,
    };
    let p = match (p_flag, &truth_data) {
        (Some(p), _) => p,
        (None, Some((g, _))) => g.p(),
        (None, None) => infer_p_from_hex(&rows[0].edges_hex)?,
    };
    let k_hat = match khat {
        Some(path) => Some(load_matrix_csv(path, false)?.y),
        None => None,
    };
    let report = build_report(
        &rows,
        p,
        k_hat.as_ref(),
        truth_data.as_ref().map(|(_, k)| k),
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    atomic_write(out, json.as_bytes())?;
    if let Some(csv_path) = inclusion_csv {
        let m = inclusion_probabilities(&rows, p)?;
        let mut buf = Vec::new();
        write_inclusion_csv(&mut buf, &m)?;
        atomic_write(csv_path, &buf)?;
    }
    Ok(())
}

/// The benchmark rate matrix `D = I + 100 A⁻¹` with `A` the cycle pattern.
fn bench_rate_matrix(p: usize) -> Result<DMatrix<f64>> {
    let a = crate::data::cycle_precision(p);
    let a_inv = crate::linalg::pd_inverse(&a)?;
    Ok(DMatrix::identity(p, p) + a_inv * 100.0)
}

fn cmd_bench_gwishart(
    graph_kind: &str,
    p_list: &str,
    reps: usize,
    decomposition: &str,
    delta: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let kind = parse_graph_kind(graph_kind)?;
    let decomp = match decomposition {
        "on" => Decomposition::Enabled,
        "off" => Decomposition::Disabled,
        other => {
            return Err(Error::Config(format!(
                "unknown decomposition mode '{other}' (expected on or off)"
            )))
        }
    };
    let ps: Vec<usize> = p_list
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad node count '{s}'")))
        })
        .collect::<Result<_>>()?;
    if reps == 0 {
        return Err(Error::Config("--reps must be positive".into()));
    }

    let mut csv = String::from("kind,p,rep,decomposition,nanos,largest_prime_fraction\n");
    for &p in &ps {
        let d = bench_rate_matrix(p)?;
        let params = GWishartParams::new(delta, d)?;
        let cfg = SamplerConfig {
            decomposition: decomp,
            ..SamplerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ p as u64);
        for rep in 0..reps {
            let g = gen_bench_graph(kind, p, &mut rng)?;
            let dec = atom_decomposition(&g)?;
            let fraction = dec.largest_atom_size() as f64 / p as f64;
            let start = Instant::now();
            let k = sample_decomposed(&g, &params, &cfg, &mut rng)?;
            let nanos = start.elapsed().as_nanos() as u64;
            std::hint::black_box(&k);
            csv.push_str(&format!(
                "{graph_kind},{p},{rep},{decomposition},{nanos},{fraction}\n"
            ));
        }
    }
    match out {
        Some(path) => atomic_write(path, csv.as_bytes())?,
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulateData {
            kind,
            p,
            seed,
            graph_kind,
            delta,
            out,
        } => cmd_simulate_data(&kind, p, seed, graph_kind.as_deref(), delta, &out),
        Command::Run {
            algo,
            data,
            delta,
            d_scale,
            prior,
            iters,
            burnin,
            n_e,
            approx,
            cl_inner,
            seed,
            threads,
            full_sweep,
            demean,
            quantile_normalize,
            init,
            out_trace,
            out_manifest,
            out_khat,
        } => cmd_run(
            &algo,
            &data,
            delta,
            d_scale,
            &prior,
            iters,
            burnin,
            n_e,
            &approx,
            &cl_inner,
            seed,
            threads,
            full_sweep,
            demean,
            quantile_normalize,
            init.as_deref(),
            &out_trace,
            &out_manifest,
            out_khat.as_deref(),
        ),
        Command::Diagnose {
            trace,
            truth,
            khat,
            p,
            out,
            inclusion_csv,
        } => cmd_diagnose(
            &trace,
            truth.as_deref(),
            khat.as_deref(),
            p,
            &out,
            inclusion_csv.as_deref(),
        ),
        Command::BenchGwishart {
            graph_kind,
            p_list,
            reps,
            decomposition,
            delta,
            seed,
            out,
        } => cmd_bench_gwishart(
            &graph_kind,
            &p_list,
            reps,
            &decomposition,
            delta,
            seed,
            out.as_deref(),
        ),
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
