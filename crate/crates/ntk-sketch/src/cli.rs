//! Command-line front end.
//!
//! One thin binary with five subcommands, all seed-reproducible:
//!
//! * `synth`    — write a synthetic unit-sphere dataset (optionally labeled);
//! * `features` — generate NTK random features for a CSV/LIBSVM dataset;
//! * `exact`    — compute the exact NTK or NNGP kernel matrix;
//! * `bench`    — sweep feature dimensions, comparing the sketched map
//!   against the naive tensor construction and exact-kernel ridge regression;
//! * `active`   — greedy design selection with the exact or low-rank
//!   criterion.
//!
//! Every run writes its primary output plus a JSON manifest echoing the full
//! configuration, sufficient to reproduce the run exactly. Exit codes:
//! 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::active_learning::{greedy_select, GreedySource, LowRankState};
use crate::data::{load_dataset, normalize_rows, write_matrix_csv, DataMatrix, DatasetFormat};
use crate::diagnostics::{entrywise_mse, generalized_condition_number};
use crate::error::Error;
use crate::kernels::{nngp_matrix, ntk_matrix, KernelMatrix};
use crate::krr::{fit_exact, fit_features, mse};
use crate::ntk_features::{ntk_naive_features, ntk_random_features, NtkFeatureConfig};
use crate::synthetic::{clustered_sphere_data, split_indices, synthetic_labels, unit_sphere_data};

#[derive(Parser)]
#[command(
    name = "ntk-sketch",
    about = "Exact and sketched neural tangent kernels on tabular data",
    version
)]
struct Cli {
    /// Cap the rayon thread pool (RAYON_NUM_THREADS works too).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Synth(SynthArgs),
    Features(FeaturesArgs),
    Exact(ExactArgs),
    Bench(BenchArgs),
    Active(ActiveArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Csv,
    Libsvm,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DatasetFormat::Csv,
            FormatArg::Libsvm => DatasetFormat::Libsvm,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum KindArg {
    Ntk,
    Nngp,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Number of points.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Input dimension.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Cluster count; 0 means uniform on the sphere.
    #[arg(long, default_value_t = 0)]
    clusters: usize,
    /// Gaussian spread around cluster centers.
    #[arg(long, default_value_t = 0.3)]
    spread: f64,
    /// Append a regression label column.
    #[arg(long)]
    labels: bool,
    /// Label noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct FeaturesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// 0-based label column to strip from CSV input.
    #[arg(long)]
    label_column: Option<usize>,
    /// Normalize rows to the unit sphere before featurizing.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Total feature budget, split as m_cs = m/2 and m0 = m1 = m - m_cs.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    mcs: Option<usize>,
    /// Use the leverage-weighted Gibbs sampler for the order-1 blocks.
    #[arg(long)]
    gibbs: bool,
    #[arg(long, default_value_t = 1)]
    gibbs_sweeps: usize,
    /// Normalize output feature rows to unit norm.
    #[arg(long)]
    normalize_output: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ExactArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long)]
    label_column: Option<usize>,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Ntk)]
    kind: KindArg,
    /// Echoed into the manifest; the exact kernel itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    /// Synthetic pool size.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Comma-separated feature budgets.
    #[arg(long, default_value = "64,128,256", value_delimiter = ',')]
    m_grid: Vec<usize>,
    /// Seeds per grid point.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    lambda_prime: f64,
    /// Test points held out of the pool.
    #[arg(long, default_value_t = 50)]
    holdout: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Write zeros instead of wall-clock timings (for byte-reproducible output).
    #[arg(long)]
    no_timing: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ActiveArgs {
    /// Pool dataset; omitted means a synthetic unit-sphere pool.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long)]
    label_column: Option<usize>,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Design budget k.
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[arg(long, default_value_t = 1e-4)]
    lambda_prime: f64,
    /// Candidates scanned per iteration (omit to scan the whole pool).
    #[arg(long)]
    subsample: Option<usize>,
    /// Evaluate J through a rank-m feature factorization instead of the
    /// exact kernel.
    #[arg(long)]
    lowrank_m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <prefix>.indices.txt, <prefix>.trace.csv,
    /// <prefix>.manifest.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_entry<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        // Ignore the error if a pool already exists (tests call this twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Synth(args) => run_synth(&args),
        Command::Features(args) => run_features(&args),
        Command::Exact(args) => run_exact(&args),
        Command::Bench(args) => run_bench(&args),
        Command::Active(args) => run_active(&args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult = Result<(), CliError>;

fn write_manifest<C: Serialize>(out: &Path, command: &str, config: &C) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Manifest<'a, C: Serialize> {
        command: &'a str,
        config: &'a C,
    }
    let path = manifest_path(out);
    let body = serde_json::to_string_pretty(&Manifest { command, config })
        .expect("manifest serializes");
    std::fs::write(&path, body + "\n").map_err(|source| {
        CliError::Lib(Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

/// `<out>.manifest.json` next to the primary output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn load_inputs(
    path: &Path,
    format: FormatArg,
    label_column: Option<usize>,
    normalize: bool,
) -> Result<DataMatrix, CliError> {
    let (x, _labels) = load_dataset(path, format.into(), label_column)?;
    let x = if normalize {
        normalize_rows(&x)?
    } else {
        if !x.rows_have_unit_norm() {
            eprintln!(
                "note: input rows are not normalized; kernel guarantees assume unit norms \
                 (pass --normalize)"
            );
        }
        x
    };
    Ok(x)
}

fn run_synth(args: &SynthArgs) -> CliResult {
    let x = if args.clusters == 0 {
        unit_sphere_data(args.n, args.d, args.seed)?
    } else {
        clustered_sphere_data(args.n, args.d, args.clusters, args.spread, args.seed)?
    };
    if args.labels {
        let y = synthetic_labels(&x, args.noise, args.seed)?;
        let mut m = ndarray::Array2::zeros((args.n, args.d + 1));
        m.slice_mut(ndarray::s![.., ..args.d]).assign(&x.values());
        m.slice_mut(ndarray::s![.., args.d]).assign(&y.values());
        write_matrix_csv(&args.out, m.view())?;
    } else {
        write_matrix_csv(&args.out, x.values())?;
    }
    write_manifest(&args.out, "synth", args)
}

fn feature_config(args: &FeaturesArgs) -> Result<NtkFeatureConfig, CliError> {
    let mut cfg = match (args.m, args.m0, args.m1, args.mcs) {
        (Some(m), None, None, None) => {
            NtkFeatureConfig::from_total_budget(args.depth, m, args.seed)?
        }
        (None, Some(m0), Some(m1), Some(mcs)) => {
            NtkFeatureConfig::new(args.depth, m0, m1, mcs, args.seed)?
        }
        _ => {
            return Err(CliError::Usage(
                "pass either --m or all of --m0/--m1/--mcs".into(),
            ))
        }
    };
    if args.gibbs {
        cfg = cfg.with_gibbs(args.gibbs_sweeps);
    }
    cfg.normalize_output = args.normalize_output;
    Ok(cfg)
}

fn run_features(args: &FeaturesArgs) -> CliResult {
    let x = load_inputs(&args.input, args.format, args.label_column, args.normalize)?;
    let cfg = feature_config(args)?;
    let phi = ntk_random_features(&x, &cfg)?;
    write_matrix_csv(&args.out, phi.values())?;
    #[derive(Serialize)]
    struct FeaturesManifest<'a> {
        args: &'a FeaturesArgs,
        resolved: &'a NtkFeatureConfig,
        rows: usize,
        cols: usize,
    }
    write_manifest(
        &args.out,
        "features",
        &FeaturesManifest {
            args,
            resolved: &cfg,
            rows: phi.rows(),
            cols: phi.cols(),
        },
    )
}

fn run_exact(args: &ExactArgs) -> CliResult {
    let x = load_inputs(&args.input, args.format, args.label_column, args.normalize)?;
    let kernel = match args.kind {
        KindArg::Ntk => ntk_matrix(&x, args.depth)?,
        KindArg::Nngp => nngp_matrix(&x, args.depth)?,
    };
    write_matrix_csv(&args.out, kernel.values())?;
    write_manifest(&args.out, "exact", args)
}

fn naive_dims_for_budget(depth: usize, d: usize, budget: usize) -> (usize, usize) {
    // Pick m0 so that m0^depth * d stays within half the budget, then spend
    // the rest on m1; both at least 1.
    let mut m0 = 1usize;
    while (m0 + 1).pow(depth as u32).saturating_mul(d) <= budget / 2 {
        m0 += 1;
    }
    let geom: usize = (0..depth).map(|k| m0.pow(k as u32)).sum();
    let used = m0.pow(depth as u32) * d;
    let m1 = (budget.saturating_sub(used) / geom.max(1)).max(1);
    (m0, m1)
}

fn run_bench(args: &BenchArgs) -> CliResult {
    if args.holdout >= args.n {
        return Err(CliError::Usage(format!(
            "holdout {} must be smaller than n {}",
            args.holdout, args.n
        )));
    }
    let pool = unit_sphere_data(args.n, args.d, args.seed)?;
    let labels = synthetic_labels(&pool, args.noise, args.seed.wrapping_add(1))?;
    let (train_idx, test_idx) = split_indices(args.n, args.holdout, args.seed.wrapping_add(2));
    let train = pool.select_rows(&train_idx)?;
    let test = pool.select_rows(&test_idx)?;
    let y_train = labels.select(&train_idx)?;
    let y_test = labels.select(&test_idx)?;
    let n_train = train.rows();
    let lambda = args.lambda_prime * n_train as f64;

    let exact_kernel = ntk_matrix(&train, args.depth)?;
    let mut csv = String::from("method,m,seed,mse_entries,cond_number,fit_time_ms,test_mse\n");
    let push_row =
        |csv: &mut String, method: &str, m: usize, seed: u64, e: f64, c: f64, t: f64, tm: f64| {
            csv.push_str(&format!("{method},{m},{seed},{e},{c},{t},{tm}\n"));
        };

    for seed_offset in 0..args.seeds {
        let seed = args.seed.wrapping_add(seed_offset);
        // Exact path: build kernel + dual fit + predict.
        let t0 = Instant::now();
        let k = ntk_matrix(&train, args.depth)?;
        let model = fit_exact(&k, &train, &y_train, args.lambda_prime)?;
        let preds = model.predict(&test)?;
        let exact_ms = if args.no_timing {
            0.0
        } else {
            t0.elapsed().as_secs_f64() * 1e3
        };
        let exact_mse = mse(&preds, &y_test)?;
        push_row(&mut csv, "exact", 0, seed, 0.0, 1.0, exact_ms, exact_mse);

        for &m in &args.m_grid {
            // Sketched pipeline at total budget m.
            let cfg = NtkFeatureConfig::from_total_budget(args.depth, m, seed)?;
            let t1 = Instant::now();
            let phi = ntk_random_features(&train, &cfg)?;
            let model = fit_features(&phi, &y_train, args.lambda_prime)?;
            let preds = model.predict(&test)?;
            let sketch_ms = if args.no_timing {
                0.0
            } else {
                t1.elapsed().as_secs_f64() * 1e3
            };
            let sketch_mse = mse(&preds, &y_test)?;
            let gram = KernelMatrix::from_array(phi.gram(), crate::kernels::KernelKind::Approx)?;
            let sketch_entry_mse = entrywise_mse(&gram, &exact_kernel)?;
            let sketch_cond = generalized_condition_number(&gram, &exact_kernel, lambda)?;
            push_row(
                &mut csv,
                "sketch",
                m,
                seed,
                sketch_entry_mse,
                sketch_cond,
                sketch_ms,
                sketch_mse,
            );

            // Naive tensor construction at a matched budget.
            let (m0, m1) = naive_dims_for_budget(args.depth, args.d, m);
            let t2 = Instant::now();
            let phi_naive = ntk_naive_features(&train, args.depth, m0, m1, seed)?;
            let naive_test = ntk_naive_features(&test, args.depth, m0, m1, seed)?;
            let model = fit_features(&phi_naive, &y_train, args.lambda_prime)?;
            let preds = model.predict_with_features(&naive_test)?;
            let naive_ms = if args.no_timing {
                0.0
            } else {
                t2.elapsed().as_secs_f64() * 1e3
            };
            let naive_mse = mse(&preds, &y_test)?;
            let gram =
                KernelMatrix::from_array(phi_naive.gram(), crate::kernels::KernelKind::Approx)?;
            let naive_entry_mse = entrywise_mse(&gram, &exact_kernel)?;
            let naive_cond = generalized_condition_number(&gram, &exact_kernel, lambda)?;
            push_row(
                &mut csv,
                "naive",
                m,
                seed,
                naive_entry_mse,
                naive_cond,
                naive_ms,
                naive_mse,
            );
        }
    }
    std::fs::write(&args.out, csv).map_err(|source| {
        CliError::Lib(Error::Io {
            path: args.out.display().to_string(),
            source,
        })
    })?;
    write_manifest(&args.out, "bench", args)
}

fn run_active(args: &ActiveArgs) -> CliResult {
    let pool = match &args.input {
        Some(path) => load_inputs(path, args.format, args.label_column, args.normalize)?,
        None => unit_sphere_data(args.n, args.d, args.seed)?,
    };
    let n = pool.rows();
    let lambda = args.lambda_prime * n as f64;
    let (design, trace) = match args.lowrank_m {
        Some(m) => {
            let cfg = NtkFeatureConfig::from_total_budget(args.depth, m, args.seed)?;
            let phi = ntk_random_features(&pool, &cfg)?;
            let state = LowRankState::new(&phi);
            greedy_select(
                &GreedySource::LowRank(&state),
                args.budget,
                lambda,
                args.subsample,
                args.seed,
            )?
        }
        None => {
            let kernel = ntk_matrix(&pool, args.depth)?;
            greedy_select(
                &GreedySource::Exact(&kernel),
                args.budget,
                lambda,
                args.subsample,
                args.seed,
            )?
        }
    };

    let indices_path = args.out_prefix.with_extension("indices.txt");
    let trace_path = args.out_prefix.with_extension("trace.csv");
    let mut indices_body = String::new();
    for i in &design.indices {
        indices_body.push_str(&format!("{i}\n"));
    }
    std::fs::write(&indices_path, indices_body).map_err(|source| {
        CliError::Lib(Error::Io {
            path: indices_path.display().to_string(),
            source,
        })
    })?;
    let mut trace_body = String::from("iteration,chosen_index,criterion\n");
    for step in &trace {
        trace_body.push_str(&format!(
            "{},{},{}\n",
            step.iteration, step.chosen, step.criterion
        ));
    }
    std::fs::write(&trace_path, trace_body).map_err(|source| {
        CliError::Lib(Error::Io {
            path: trace_path.display().to_string(),
            source,
        })
    })?;
    write_manifest(&args.out_prefix.with_extension("out"), "active", args)
}
