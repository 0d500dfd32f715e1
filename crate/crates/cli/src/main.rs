use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use embia::init::{AnnealSchedule, BurninConfig};
use embia::{
    builtin_karate, load_edgelist, load_matrix, summarize, CovarianceStructure, DataKind, Dataset, LoadOptions,
};
use embia_cli::report::{render_comparison, render_report, render_summary, render_sweep, write_output, ReportFormat};
use embia_cli::{
    compare_solutions, fit_once, run_experiment_with, sweep, ExperimentSpec, HarnessError, InitKind, InitOptions,
    Model, RunOptions, SweepGrid, DATA_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "embia", version, about = "Mixture-model EM with competing initialization strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit once and report the solution.
    Fit(FitArgs),
    /// Repeat fits from independent starts and tabulate the convergent objectives.
    Restarts(FitArgs),
    /// Grid over two init parameters (nu0 x rate for annealing, starts x pre-iterations for bia).
    Sweep(SweepArgs),
    /// Fit with two init strategies and count membership changes between the solutions.
    Compare(CompareArgs),
    /// Describe a dataset.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Data file, `karate` for the embedded network, or a file name looked up in $EMBIA_DATA_DIR.
    #[arg(long)]
    data: Option<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long, default_value = "vvv")]
    structure: CovarianceStructure,
    #[arg(long)]
    groups: usize,
    #[arg(long, value_enum, default_value = "random")]
    init: InitKind,
    /// Candidate starts for bia and burnin.
    #[arg(long)]
    starts: Option<usize>,
    /// Preliminary iterations for bia, or iterations per stage for burnin.
    #[arg(long = "pre-iters")]
    pre_iters: Option<usize>,
    /// Fraction of burn-in candidates kept after each stage.
    #[arg(long, default_value_t = 0.5)]
    retain: f64,
    #[arg(long, default_value_t = 0.12)]
    nu0: f64,
    #[arg(long, default_value_t = 0.87)]
    rate: f64,
    #[arg(long, default_value_t = 10)]
    stage: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative-change tolerance; defaults to 1e-9 for lca and 1e-5 otherwise.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "max-iter", default_value_t = 10_000)]
    max_iter: usize,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock time per run (reports stop being byte-reproducible).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    io: DataArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Comma-separated starting exponents (annealing rows).
    #[arg(long = "nu0-grid", value_delimiter = ',')]
    nu0_grid: Vec<f64>,
    /// Comma-separated rates (annealing columns).
    #[arg(long = "rate-grid", value_delimiter = ',')]
    rate_grid: Vec<f64>,
    /// Comma-separated start counts (bia rows).
    #[arg(long = "starts-grid", value_delimiter = ',')]
    starts_grid: Vec<usize>,
    /// Comma-separated preliminary iteration counts (bia columns).
    #[arg(long = "pre-iters-grid", value_delimiter = ',')]
    pre_iters_grid: Vec<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Init strategy of the second solution; `--init` sets the first.
    #[arg(long = "init-b", value_enum)]
    init_b: InitKind,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[command(flatten)]
    io: DataArgs,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    Continuous,
    Binary,
    Network,
}

impl From<Kind> for DataKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Continuous => DataKind::Continuous,
            Kind::Binary => DataKind::Binary,
            Kind::Network => DataKind::Network,
        }
    }
}

fn resolve_path(name: &str) -> PathBuf {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return direct;
    }
    embia_cli::locate_fixture(name, None).unwrap_or(direct)
}

fn load(data: Option<&str>, kind: DataKind) -> Result<Dataset, HarnessError> {
    let name = match (data, kind) {
        (None | Some("karate"), DataKind::Network) => return Ok(builtin_karate()),
        (Some(name), _) => name,
        (None, _) => {
            return Err(HarnessError::Validation(format!("--data is required for {kind} data (or set {DATA_DIR_ENV})")))
        }
    };
    let path = resolve_path(name);
    let is_edgelist = matches!(path.extension().and_then(|e| e.to_str()), Some("edgelist" | "edges"));
    Ok(if kind == DataKind::Network && is_edgelist {
        load_edgelist(&path, None)?
    } else {
        load_matrix(&path, kind, &LoadOptions::default())?
    })
}

fn init_options(args: &FitArgs, kind: InitKind) -> Result<InitOptions, HarnessError> {
    Ok(match kind {
        InitKind::Random => InitOptions::Random,
        InitKind::Hclust => InitOptions::Hclust,
        InitKind::Burnin => {
            InitOptions::Burnin(BurninConfig::new(args.starts.unwrap_or(64), args.pre_iters.unwrap_or(5), args.retain)?)
        }
        InitKind::Anneal => InitOptions::Anneal(AnnealSchedule::new(args.nu0, args.rate, args.stage)?),
        InitKind::Bia => {
            InitOptions::Bia { starts: args.starts.unwrap_or(30), pre_iterations: args.pre_iters.unwrap_or(10) }
        }
    })
}

fn build_spec(args: &FitArgs, init: InitKind) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = ExperimentSpec::new(args.model, args.groups)
        .with_init(init_options(args, init)?)
        .with_repetitions(args.reps)
        .with_seed(args.seed)
        .with_max_iter(args.max_iter);
    if args.model == Model::Gmm {
        spec = spec.with_structure(args.structure);
    }
    if let Some(eps) = args.epsilon {
        spec = spec.with_epsilon(eps);
    }
    Ok(spec)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), HarnessError> {
    match out {
        Some(path) => write_output(text, path),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_pool<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Fit(args) => {
            let spec = build_spec(&args, args.init)?;
            let ds = load(args.io.data.as_deref(), args.model.data_kind())?;
            if args.reps == 1 && args.io.format == ReportFormat::Json {
                let fit = with_pool(args.threads, || fit_once(&spec, &ds, 0))??;
                let text = serde_json::to_string_pretty(&fit).expect("fit serializes") + "\n";
                return emit(&text, args.io.out.as_deref());
            }
            let opts = RunOptions { parallel: true, timing: args.timing };
            let report = with_pool(args.threads, || run_experiment_with(&spec, &ds, opts))??;
            emit(&render_report(&[report], args.io.format)?, args.io.out.as_deref())
        }
        Command::Restarts(args) => {
            let spec = build_spec(&args, args.init)?;
            let ds = load(args.io.data.as_deref(), args.model.data_kind())?;
            let opts = RunOptions { parallel: true, timing: args.timing };
            let report = with_pool(args.threads, || run_experiment_with(&spec, &ds, opts))??;
            emit(&render_report(&[report], args.io.format)?, args.io.out.as_deref())
        }
        Command::Sweep(sa) => {
            let args = &sa.fit;
            let grid = match args.init {
                InitKind::Anneal => SweepGrid::Anneal {
                    nu0: if sa.nu0_grid.is_empty() { vec![args.nu0] } else { sa.nu0_grid.clone() },
                    rate: if sa.rate_grid.is_empty() { vec![args.rate] } else { sa.rate_grid.clone() },
                    stage: args.stage,
                },
                InitKind::Bia => SweepGrid::Bia {
                    starts: if sa.starts_grid.is_empty() {
                        vec![args.starts.unwrap_or(30)]
                    } else {
                        sa.starts_grid.clone()
                    },
                    pre_iterations: if sa.pre_iters_grid.is_empty() {
                        vec![args.pre_iters.unwrap_or(10)]
                    } else {
                        sa.pre_iters_grid.clone()
                    },
                },
                other => {
                    return Err(HarnessError::Validation(format!("sweeps are defined for anneal and bia, not {other}")))
                }
            };
            let spec = build_spec(args, args.init)?;
            let ds = load(args.io.data.as_deref(), args.model.data_kind())?;
            let result = with_pool(args.threads, || sweep(&spec, &grid, &ds))??;
            emit(&render_sweep(&result, args.io.format), args.io.out.as_deref())
        }
        Command::Compare(ca) => {
            let args = &ca.fit;
            let spec_a = build_spec(args, args.init)?;
            let spec_b = build_spec(args, ca.init_b)?;
            let ds = load(args.io.data.as_deref(), args.model.data_kind())?;
            let (a, b) =
                with_pool(args.threads, || rayon::join(|| fit_once(&spec_a, &ds, 0), || fit_once(&spec_b, &ds, 0)))?;
            let cmp = compare_solutions(&a?, &b?, &ds)?;
            emit(&render_comparison(&cmp, args.io.format), args.io.out.as_deref())
        }
        Command::Summarize(sa) => {
            let kind = sa.kind.map_or(DataKind::Continuous, DataKind::from);
            let kind = if sa.kind.is_none() && sa.io.data.as_deref().is_none_or(|d| d == "karate") {
                DataKind::Network
            } else {
                kind
            };
            let ds = load(sa.io.data.as_deref(), kind)?;
            emit(&render_summary(&summarize(&ds), sa.io.format), sa.io.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
