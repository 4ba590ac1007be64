//! `rsvm`: train, screen and benchmark robust SVMs from the command line.
//!
//! Exit codes: 0 on success, 1 when a solve fails to certify its gap, 2 for
//! usage and input errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsvm_core::bench::{self, GridConfig, DEFAULT_C_GRID, DEFAULT_RHO_GRID};
use rsvm_core::data::{self, FeatureScale};
use rsvm_core::screening::{dynamic_screen, ScreenConfig};
use rsvm_core::{par, solve, Dataset, Error, FrozenAssignment, Hyperparams, Rho};
use serde::Serialize;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rsvm",
    version,
    about = "Robust SVM with per-sample feature uncertainty and safe sample screening"
)]
struct Cli {
    /// Worker threads for per-sample loops (default: all cores).
    #[arg(long, global = true, env = "RSVM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one (C, rho) problem to the requested duality gap and save the model.
    Train(TrainArgs),
    /// Solve with dynamic safe screening; write the screening trace and final partition.
    Screen(ScreenArgs),
    /// Time plain and screened solves over C and rho grids.
    Bench(BenchArgs),
    /// Write two Gaussian classes in LIBSVM format.
    GenData(GenDataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Libsvm,
    Csv,
}

#[derive(Args)]
struct InputArgs {
    /// Training data file.
    #[arg(long)]
    input: PathBuf,

    /// Input file format.
    #[arg(long, value_enum, default_value = "libsvm")]
    format: Format,

    /// Zero-based label column for CSV input.
    #[arg(long, default_value_t = 0)]
    label_col: usize,

    /// The CSV input starts with a header row.
    #[arg(long)]
    header: bool,

    /// Standardize every feature to zero mean and unit variance.
    #[arg(long)]
    standardize: bool,

    /// Append a constant 1 feature (it is perturbed like the others).
    #[arg(long)]
    bias: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Loss weight C.
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,

    /// Duality gap at which the solve stops.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,

    /// Maximum projected gradient steps.
    #[arg(long, default_value_t = 100_000)]
    max_epochs: usize,
}

#[derive(Args)]
struct RhoArgs {
    /// Uncertainty radius shared by every sample.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true, conflicts_with = "rho_file")]
    rho: f64,

    /// File with one radius per sample (one value per line).
    #[arg(long)]
    rho_file: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rho: RhoArgs,
    #[command(flatten)]
    solve: SolveArgs,

    /// Where to write the model JSON.
    #[arg(long, default_value = "model.json")]
    model_out: PathBuf,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rho: RhoArgs,
    #[command(flatten)]
    solve: SolveArgs,

    /// Stop screening once at most this many samples remain free.
    #[arg(long, default_value_t = 0)]
    fmin: usize,

    /// Maximum solver epochs between screening passes.
    #[arg(long, default_value_t = 10)]
    screen_every: usize,

    /// Where to write the per-iteration screening trace (CSV).
    #[arg(long, default_value = "trace.csv")]
    trace_out: PathBuf,

    /// Where to write the final partition (JSON index lists).
    #[arg(long, default_value = "partition.json")]
    partition_out: PathBuf,

    /// Where to write the model JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_C_GRID)]
    c_grid: Vec<f64>,

    /// Comma-separated rho values.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RHO_GRID, allow_hyphen_values = true)]
    rho_grid: Vec<f64>,

    /// Timed runs per (C, rho) cell and mode.
    #[arg(long, default_value_t = 10)]
    repeats: usize,

    /// Duality gap at which every run stops.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,

    /// Maximum projected gradient steps per run.
    #[arg(long, default_value_t = 100_000)]
    max_epochs: usize,

    /// Maximum solver epochs between screening passes.
    #[arg(long, default_value_t = 10)]
    screen_every: usize,

    /// Run grid cells concurrently (timings are then marked as contended).
    #[arg(long)]
    parallel: bool,

    /// Dataset name used in the output; "breast-cancer" and "spambase" also
    /// print published screening-rate ranges (default: input file stem).
    #[arg(long)]
    name: Option<String>,

    /// Where to write one row per run (CSV).
    #[arg(long, default_value = "records.csv")]
    records_out: PathBuf,

    /// Where to write one row per (C, rho) cell (CSV).
    #[arg(long, default_value = "summary.csv")]
    summary_out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of samples (even; labels alternate +1, -1).
    #[arg(long, default_value_t = 2000, allow_hyphen_values = true)]
    n: i64,

    /// Number of features.
    #[arg(long, default_value_t = 20, allow_hyphen_values = true)]
    d: i64,

    /// Distance between the two class means along the first axis.
    #[arg(long, default_value_t = 3.0)]
    sep: f64,

    /// Standard deviation of the isotropic noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,

    /// Random seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Uncertified(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Uncertified(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
#[serde(untagged)]
enum RhoJson {
    Uniform(f64),
    PerSample(Vec<f64>),
}

#[derive(Serialize)]
struct ModelJson<'a> {
    schema: u32,
    #[serde(rename = "C")]
    c: f64,
    rho: RhoJson,
    eps: f64,
    gap: f64,
    primal: f64,
    dual: f64,
    converged: bool,
    n: usize,
    d: usize,
    bias: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature_scales: Option<&'a [FeatureScale]>,
    w: &'a [f64],
}

struct Loaded {
    ds: Dataset,
    rho: RhoJson,
    scales: Option<Vec<FeatureScale>>,
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn load_features(args: &InputArgs) -> Result<(Dataset, Option<Vec<FeatureScale>>), Failure> {
    let text = read_text(&args.input)?;
    let ds = match args.format {
        Format::Libsvm => data::parse_libsvm(&text),
        Format::Csv => data::parse_csv(&text, args.label_col, args.header),
    }
    .map_err(|e| Failure::Usage(format!("{}: {e}", args.input.display())))?;
    let (ds, scales) = if args.standardize {
        let (ds, scales) = ds.standardize()?;
        (ds, Some(scales))
    } else {
        (ds, None)
    };
    let ds = if args.bias { ds.augment_bias() } else { ds };
    Ok((ds, scales))
}

fn load(input: &InputArgs, rho: &RhoArgs) -> Result<Loaded, Failure> {
    let (ds, scales) = load_features(input)?;
    let (radii_spec, json) = match &rho.rho_file {
        Some(path) => {
            let radii =
                data::parse_radii(&read_text(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            (Rho::PerSample(radii.clone()), RhoJson::PerSample(radii))
        }
        None => (Rho::Uniform(rho.rho), RhoJson::Uniform(rho.rho)),
    };
    let ds = ds.with_radii(&radii_spec)?;
    Ok(Loaded { ds, rho: json, scales })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_model(path: &Path, model: &ModelJson<'_>) -> Result<(), Failure> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, model).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_failure(path, e))
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let hp = Hyperparams::new(args.solve.c, args.solve.eps, args.solve.max_epochs)?;
    let loaded = load(&args.input, &args.rho)?;
    let ds = &loaded.ds;
    let report = solve(ds, &hp, &FrozenAssignment::none(), &vec![0.0; ds.n()])?;
    let it = &report.iterate;
    println!("primal  {:.12e}", it.primal_value);
    println!("dual    {:.12e}", it.dual_value);
    println!("gap     {:.3e}", it.gap);
    println!("epochs  {}", report.epochs);
    write_model(
        &args.model_out,
        &ModelJson {
            schema: 1,
            c: hp.c,
            rho: loaded.rho,
            eps: hp.gap_tol,
            gap: it.gap,
            primal: it.primal_value,
            dual: it.dual_value,
            converged: report.converged,
            n: ds.n(),
            d: ds.dim(),
            bias: args.input.bias,
            feature_scales: loaded.scales.as_deref(),
            w: &it.w,
        },
    )?;
    if report.converged {
        Ok(())
    } else {
        Err(Failure::Uncertified(format!(
            "gap {:.3e} above {:.1e} after {} epochs",
            it.gap, hp.gap_tol, report.epochs
        )))
    }
}

fn cmd_screen(args: ScreenArgs) -> Result<(), Failure> {
    let hp = Hyperparams::new(args.solve.c, args.solve.eps, args.solve.max_epochs)?;
    let config = ScreenConfig {
        f_min: args.fmin,
        screen_every: args.screen_every,
        ..ScreenConfig::default()
    };
    let loaded = load(&args.input, &args.rho)?;
    let ds = &loaded.ds;
    let outcome = dynamic_screen(ds, &hp, &config)?;
    let it = &outcome.report.iterate;

    let mut trace = create(&args.trace_out)?;
    outcome.trace.write_csv(&mut trace)?;
    trace.flush().map_err(|e| io_failure(&args.trace_out, e))?;
    let mut partition = create(&args.partition_out)?;
    serde_json::to_writer_pretty(&mut partition, &outcome.partition.to_sets())
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.partition_out.display())))?;
    writeln!(partition)
        .and_then(|_| partition.flush())
        .map_err(|e| io_failure(&args.partition_out, e))?;

    let p = &outcome.partition;
    println!("primal            {:.12e}", it.primal_value);
    println!("dual              {:.12e}", it.dual_value);
    println!("gap               {:.3e}", it.gap);
    println!("screened zero     {}", p.n_zero());
    println!("screened C        {}", p.n_c());
    println!("free              {}", p.n_free());
    println!("screened fraction {:.4}", p.screened_fraction());

    if let Some(path) = &args.model_out {
        write_model(
            path,
            &ModelJson {
                schema: 1,
                c: hp.c,
                rho: loaded.rho,
                eps: hp.gap_tol,
                gap: it.gap,
                primal: it.primal_value,
                dual: it.dual_value,
                converged: outcome.converged(),
                n: ds.n(),
                d: ds.dim(),
                bias: args.input.bias,
                feature_scales: loaded.scales.as_deref(),
                w: &outcome.w,
            },
        )?;
    }
    if outcome.converged() {
        Ok(())
    } else {
        Err(Failure::Uncertified(format!(
            "gap {:.3e} above {:.1e}",
            it.gap, hp.gap_tol
        )))
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let config = GridConfig {
        c_grid: args.c_grid,
        rho_grid: args.rho_grid,
        repeats: args.repeats,
        eps: args.eps,
        max_epochs: args.max_epochs,
        screen: ScreenConfig {
            screen_every: args.screen_every,
            ..ScreenConfig::default()
        },
        parallel: args.parallel,
    };
    if let Some(c) = config.c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Failure::Usage(format!("C grid value {c} must be finite and > 0")));
    }
    let name = args.name.clone().unwrap_or_else(|| {
        args.input
            .input
            .file_stem()
            .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let (ds, _) = load_features(&args.input)?;
    let records = bench::run_grid(&ds, &name, &config)?;
    let summary = bench::summarize(&records)?;

    let mut out = create(&args.records_out)?;
    bench::write_records_csv(&records, &mut out)?;
    out.flush().map_err(|e| io_failure(&args.records_out, e))?;
    let mut out = create(&args.summary_out)?;
    summary.write_csv(&mut out)?;
    out.flush().map_err(|e| io_failure(&args.summary_out, e))?;

    print!("{}", summary.to_markdown());
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<(), Failure> {
    let n = usize::try_from(args.n).map_err(|_| Failure::Usage(format!("--n must be positive, got {}", args.n)))?;
    let d = usize::try_from(args.d).map_err(|_| Failure::Usage(format!("--d must be positive, got {}", args.d)))?;
    let ds = data::gen_gaussian(n, d, args.sep, args.noise, args.seed)?;
    let text = ds.to_libsvm();
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Usage(format!("stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: RSVM_THREADS / --threads must be at least 1");
            return ExitCode::from(2);
        }
        par::configure_threads(threads);
    }
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Screen(args) => cmd_screen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::GenData(args) => cmd_gen_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Uncertified(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
