//! Command-line front ends for `termforge` and `termforge-worker`.

use std::io::{self, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{gen_benchmark, run_bench, BenchShape, DEFAULT_TERM_CAP};
use crate::lang::compile_source;
use crate::parallel::transport::tcp_endpoint;
use crate::parallel::worker::{worker_loop, WorkerConfig};
use crate::parallel::{run_program_parallel, ClusterConfig, TransportKind, WorkerLaunch, DEFAULT_CHUNK_SIZE};
use crate::runner::{run_program_sequential, PrintTo, RunConfig};
use crate::store::ExpressionStore;
use crate::{Error, Program};

pub const SCRATCH_ENV: &str = "TERMFORGE_SCRATCH";
/// Exit code for command-line usage errors.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "termforge", version, about = "Term-stream algebra engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a program and print its `print` output.
    Run(RunArgs),
    /// Time a program at several worker counts.
    Bench(BenchArgs),
    /// Write a synthetic benchmark program.
    GenBench(GenBenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Inproc,
    Tcp,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Terms per chunk dealt to a worker.
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, value_enum, default_value_t = Transport::Inproc)]
    pub transport: Transport,
    /// Listen address for TCP workers. When given, workers are expected to
    /// be started separately with `termforge-worker --connect`.
    #[arg(long)]
    pub listen: Option<String>,
    /// Scratch directory (default: $TERMFORGE_SCRATCH, else a temporary one).
    #[arg(long)]
    pub scratch: Option<PathBuf>,
    /// Sort buffer budget per worker, in bytes. Unbounded if omitted.
    #[arg(long)]
    pub sort_memory: Option<usize>,
    #[arg(long)]
    pub keep_scratch: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    /// Number of workers; 1 runs sequentially unless TCP is requested.
    #[arg(short = 'p', long = "workers", default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Print per-module statistics to stderr.
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub file: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct GenBenchArgs {
    #[command(subcommand)]
    pub shape: GenShape,
}

#[derive(Debug, Subcommand)]
pub enum GenShape {
    /// (a1 + ... + ak)^n by repeated multiplication.
    Expand {
        #[arg(long)]
        symbols: usize,
        #[arg(long)]
        power: usize,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// A chain of alternating substitutions over (x + y + z)^width.
    SubstituteChain {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        width: usize,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
}

#[derive(Debug, Parser)]
#[command(name = "termforge-worker", version, about = "termforge TCP worker")]
pub struct WorkerArgs {
    /// Master address, HOST:PORT.
    #[arg(long)]
    pub connect: String,
    #[arg(long)]
    pub scratch: PathBuf,
}

/// Scratch root for a run: explicit, from the environment, or a temporary
/// directory that lives as long as the returned guard.
struct Scratch {
    path: PathBuf,
    _temp: Option<tempfile::TempDir>,
}

fn scratch_root(explicit: Option<&Path>, keep: bool) -> Result<Scratch, Error> {
    if let Some(p) = explicit.map(Path::to_path_buf).or_else(|| std::env::var_os(SCRATCH_ENV).map(PathBuf::from)) {
        std::fs::create_dir_all(&p)?;
        return Ok(Scratch { path: p, _temp: None });
    }
    let temp = tempfile::Builder::new().prefix("termforge-").tempdir()?;
    if keep {
        let path = temp.keep();
        eprintln!("scratch kept in {}", path.display());
        return Ok(Scratch { path, _temp: None });
    }
    Ok(Scratch { path: temp.path().to_path_buf(), _temp: Some(temp) })
}

fn load_program(file: &Path) -> Result<Program, Error> {
    let source = std::fs::read_to_string(file)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", file.display()))))?;
    Ok(compile_source(&source)?)
}

fn worker_binary() -> Result<PathBuf, Error> {
    let exe = std::env::current_exe()?;
    let name = format!("termforge-worker{}", std::env::consts::EXE_SUFFIX);
    let candidate = exe.with_file_name(name);
    if candidate.is_file() {
        Ok(candidate)
    } else {
        Err(Error::Config(format!("worker binary not found at {}", candidate.display())))
    }
}

fn cluster_config(workers: usize, exec: &ExecArgs, scratch: PathBuf) -> Result<ClusterConfig, Error> {
    let transport = match (exec.transport, &exec.listen) {
        (Transport::Inproc, None) => TransportKind::InProcess,
        (Transport::Inproc, Some(_)) => return Err(Error::Config("--listen requires --transport tcp".into())),
        (Transport::Tcp, Some(addr)) => TransportKind::Tcp { listen: addr.clone(), launch: WorkerLaunch::External },
        (Transport::Tcp, None) => TransportKind::Tcp {
            listen: "127.0.0.1:0".into(),
            launch: WorkerLaunch::Processes(worker_binary()?),
        },
    };
    let cfg = ClusterConfig {
        workers,
        chunk_size: exec.chunk_size,
        transport,
        scratch,
        sort_memory: exec.sort_memory,
        keep_scratch: exec.keep_scratch,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let program = load_program(&args.file)?;
    let root = scratch_root(args.exec.scratch.as_deref(), args.exec.keep_scratch)?;
    let mut store = ExpressionStore::open(root.path.join("store"))?;
    let work = root.path.join("work");
    let cfg = cluster_config(args.workers, &args.exec, work.clone())?;
    let stdout = io::stdout();
    let mut out = PrintTo(stdout.lock());
    let report = if args.workers == 1 && cfg.transport == TransportKind::InProcess {
        let rc = RunConfig { sort_memory: cfg.sort_memory, scratch: work, keep_scratch: cfg.keep_scratch };
        run_program_sequential(&program, &mut store, &rc, &mut out)?
    } else {
        run_program_parallel(&program, &mut store, &cfg, &mut out)?
    };
    out.0.flush()?;
    if args.report {
        eprint!("{}", report.to_text());
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let program = load_program(&args.file)?;
    let root = scratch_root(args.exec.scratch.as_deref(), args.exec.keep_scratch)?;
    let cfg = cluster_config(1, &args.exec, root.path.clone())?;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if let Some(&max) = args.workers.iter().max() {
        if max > cores {
            eprintln!("note: {cores} hardware threads available, timings above p={cores} are oversubscribed");
        }
    }
    let (table, _) = run_bench(&program, &args.workers, args.reps, &cfg)?;
    print!("{}", table.to_text());
    if let Some(path) = &args.csv {
        std::fs::write(path, table.to_csv())?;
    }
    Ok(())
}

fn gen_bench(args: &GenBenchArgs) -> Result<(), Error> {
    let (shape, output) = match &args.shape {
        GenShape::Expand { symbols, power, output } => {
            (BenchShape::Expand { symbols: *symbols, power: *power }, output)
        }
        GenShape::SubstituteChain { depth, width, output } => {
            (BenchShape::SubstituteChain { depth: *depth, width: *width }, output)
        }
    };
    let text = gen_benchmark(shape, DEFAULT_TERM_CAP)?;
    std::fs::write(output, text)?;
    Ok(())
}

fn report_error(e: &Error, file: Option<&Path>) -> i32 {
    match (e, file) {
        (Error::Lang(le), Some(f)) => eprintln!("{}:{le}", f.display()),
        _ => eprintln!("termforge: {e}"),
    }
    e.exit_code()
}

/// Entry point of `termforge`; returns the process exit code.
pub fn main_termforge<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let (result, file) = match &cli.command {
        Command::Run(a) => (run(a), Some(a.file.as_path())),
        Command::Bench(a) => (bench(a), Some(a.file.as_path())),
        Command::GenBench(a) => (gen_bench(a), None),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report_error(&e, file),
    }
}

/// Entry point of `termforge-worker`.
pub fn main_worker<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match WorkerArgs::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = TcpStream::connect(&args.connect)
        .map_err(|e| Error::Transport(format!("cannot connect to {}: {e}", args.connect)))
        .and_then(tcp_endpoint)
        .and_then(|ep| worker_loop(ep, &WorkerConfig { id: 0, scratch: args.scratch.clone() }));
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("termforge-worker: {e}");
            e.exit_code()
        }
    }
}
