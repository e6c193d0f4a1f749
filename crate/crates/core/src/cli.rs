//! Command-line front end: `eagerfs SOURCE MOUNTPOINT` and `eagerfs bench`.
//!
//! Exit status is 0 on success, 1 when deferred operations failed (or a
//! benchmark replicate did), and 2 for usage and mount errors.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use signal_hook::consts::{SIGHUP, SIGINT, SIGTERM};
use signal_hook::iterator::Signals;

use crate::bench::{self, BenchConfig, Mode, ReportFormat, Scenario, Workload, DEFAULT_MEAN_SIZE};
use crate::bridge::{mount_with_store, MountConfig};
use crate::engine::StderrSink;
use crate::fs::{EagerPolicy, FsStats};
use crate::kind::OpKind;
use crate::store::{FaultRule, InjectedStore, LatencyProfile, LocalStore};

pub const EXIT_OK: u8 = 0;
pub const EXIT_DEFERRED_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

const FOREGROUND_ENV: &str = "EAGERFS_DETACHED";

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "eagerfs", version, about = "Mount a directory with eager write-behind", args_conflicts_with_subcommands = true)]
#[command(subcommand_negates_reqs = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub mount: MountArgs,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Time a synthetic workload under each I/O mode.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct MountArgs {
    /// Directory to expose.
    #[arg(required = true)]
    pub source: Option<PathBuf>,
    /// Where to mount it.
    #[arg(required = true)]
    pub mountpoint: Option<PathBuf>,
    #[command(flatten)]
    pub eager: EagerFlags,
    /// Do not answer attribute queries from pending operations.
    #[arg(long)]
    pub no_mock_attr: bool,
    /// Maximum operations queued or running at once.
    #[arg(long, default_value_t = crate::engine::DEFAULT_MAX_PENDING, value_parser = parse_limit)]
    pub max_pending: usize,
    /// Fail every later operation after the first deferred error.
    #[arg(long)]
    pub abort_on_error: bool,
    /// Print queue and ledger counters at teardown.
    #[arg(long)]
    pub stats: bool,
    /// Return once mounted and keep serving in a detached process.
    #[arg(long)]
    pub background: bool,
    /// Request small kernel writes instead of the largest available.
    #[arg(long)]
    pub no_big_writes: bool,
    /// Fault rule `KIND:GLOB[:NTH][=ERROR]` applied to the source.
    #[arg(long, hide = true, value_parser = parse_fault)]
    pub inject_fault: Vec<String>,
    /// Latency added to every metadata operation on the source.
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub inject_latency_ms: f64,
}

/// One `--no-eager-<kind>` switch per eager-capable operation kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EagerFlags {
    pub disabled: Vec<OpKind>,
}

fn flag_id(kind: OpKind) -> String {
    format!("no-eager-{kind}")
}

impl FromArgMatches for EagerFlags {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let disabled = OpKind::EAGER_CAPABLE.into_iter().filter(|k| m.get_flag(&flag_id(*k))).collect();
        Ok(EagerFlags { disabled })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = EagerFlags::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for EagerFlags {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        OpKind::EAGER_CAPABLE.into_iter().fold(cmd, |cmd, kind| {
            let id = flag_id(kind);
            cmd.arg(
                clap::Arg::new(id.clone())
                    .long(id)
                    .action(clap::ArgAction::SetTrue)
                    .help(format!("Run {kind} synchronously")),
            )
        })
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        EagerFlags::augment_args(cmd)
    }
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "extract")]
    pub scenario: Scenario,
    /// Comma-separated; defaults to every mode the scenario supports.
    #[arg(long, value_delimiter = ',')]
    pub mode: Vec<Mode>,
    #[arg(long, default_value_t = 1000)]
    pub files: usize,
    #[arg(long, default_value_t = 16, value_parser = parse_limit)]
    pub fanout: usize,
    #[arg(long, default_value_t = DEFAULT_MEAN_SIZE)]
    pub mean_size: u64,
    #[arg(long, default_value_t = 0.0)]
    pub symlink_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fixed latency on every metadata operation.
    #[arg(long, default_value_t = 2.0)]
    pub latency_ms: f64,
    #[arg(long, default_value_t = 5)]
    pub replicates: usize,
    /// Write CSV rows here and print the summary table to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Format for stdout when `--out` is absent.
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    /// Run against fresh directories under this path instead of memory.
    #[arg(long)]
    pub backing: Option<PathBuf>,
}

fn parse_limit(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_fault(s: &str) -> Result<String, String> {
    s.parse::<FaultRule>().map(|_| s.to_owned()).map_err(|e| e.to_string())
}

fn non_negative(v: f64, what: &str) -> Result<f64, String> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("invalid {what} `{v}`"))
    }
}

impl MountArgs {
    pub fn policy(&self) -> EagerPolicy {
        let mut p = EagerPolicy::default()
            .with_mock_attr(!self.no_mock_attr)
            .with_max_pending(self.max_pending)
            .with_abort_on_error(self.abort_on_error);
        for k in &self.eager.disabled {
            p.set(*k, false);
        }
        p
    }

    pub fn mount_config(&self) -> MountConfig {
        MountConfig {
            source: self.source.clone().unwrap_or_default(),
            mountpoint: self.mountpoint.clone().unwrap_or_default(),
            policy: self.policy(),
            big_writes: !self.no_big_writes,
            foreground: !self.background,
        }
    }
}

impl BenchArgs {
    pub fn config(&self) -> Result<BenchConfig, String> {
        let workload = Workload {
            files: self.files,
            fanout: self.fanout,
            mean_size: self.mean_size,
            symlink_fraction: non_negative(self.symlink_fraction, "symlink fraction")?.min(1.0),
            seed: self.seed,
            ..Workload::default()
        };
        let latency = LatencyProfile::metadata_ms(non_negative(self.latency_ms, "latency")?);
        let cfg = BenchConfig::new(self.scenario, workload, latency, self.replicates);
        Ok(if self.mode.is_empty() { cfg } else { cfg.with_modes(&self.mode) })
    }
}

/// Parses `args`, the program name included.
pub fn parse_from<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

pub fn command() -> clap::Command {
    Cli::command()
}

/// Entry point of the `eagerfs` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    ExitCode::from(run(&cli))
}

/// Runs a parsed command line and returns the exit status.
pub fn run(cli: &Cli) -> u8 {
    match &cli.command {
        Some(Command::Bench(b)) => run_bench(b),
        None if !cli.mount.mount_config().foreground && std::env::var_os(FOREGROUND_ENV).is_none() => detach(&cli.mount),
        None => run_mount(&cli.mount),
    }
}

fn run_mount(args: &MountArgs) -> u8 {
    let cfg = args.mount_config();
    if let Err(e) = cfg.validate() {
        eprintln!("eagerfs: {e}");
        return EXIT_USAGE;
    }
    let local = match LocalStore::new(&cfg.source) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("eagerfs: cannot open {}: {e}", cfg.source.display());
            return EXIT_USAGE;
        }
    };
    let store = InjectedStore::new(local);
    store.set_logging(false);
    if args.inject_latency_ms > 0.0 {
        store.set_latency(LatencyProfile::metadata_ms(args.inject_latency_ms));
    }
    for spec in &args.inject_fault {
        store.add_fault(spec.parse().expect("validated by the parser"));
    }
    let mut signals = match Signals::new([SIGINT, SIGTERM, SIGHUP]) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("eagerfs: cannot install signal handlers: {e}");
            return EXIT_USAGE;
        }
    };
    let mut session = match mount_with_store(&cfg, Arc::new(store), Arc::new(StderrSink)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("eagerfs: {e}");
            return EXIT_USAGE;
        }
    };
    let fs = session.fs().clone();
    let handle = signals.handle();
    let mut unmounter = session.unmounter();
    let watcher = std::thread::spawn(move || {
        if signals.forever().next().is_some() {
            if let Some(u) = unmounter.as_mut() {
                let _ = u.unmount();
            }
        }
    });
    let result = session.wait();
    handle.close();
    let _ = watcher.join();
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            eprintln!("eagerfs: session ended with error: {e}");
            fs.drain()
        }
    };
    if args.stats {
        eprintln!("{}", format_stats(&fs.stats(), summary.len()));
    }
    summary.exit_code() as u8
}

/// One-line counter summary printed by `--stats`.
pub fn format_stats(s: &FsStats, ledger: usize) -> String {
    let e = &s.engine;
    format!(
        "eagerfs stats: enqueued={} executed={} failed={} ledger={} max_pending={} peak_pending={} blocked_enqueues={} peak_workers={} cached_attrs={}",
        e.enqueued,
        e.executed,
        e.failed,
        ledger,
        e.throttle.limit,
        e.throttle.high_water,
        e.throttle.blocked_acquires,
        e.peak_workers,
        s.cached_attrs
    )
}

/// Re-runs this command in a new session and returns once the mount is
/// visible.
fn detach(args: &MountArgs) -> u8 {
    use std::os::unix::process::CommandExt;
    let exe = match std::env::current_exe() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("eagerfs: {e}");
            return EXIT_USAGE;
        }
    };
    let mut cmd = std::process::Command::new(exe);
    cmd.args(std::env::args_os().skip(1))
        .env(FOREGROUND_ENV, "1")
        .stdin(std::process::Stdio::null())
        .stdout(std::process::Stdio::null());
    unsafe {
        cmd.pre_exec(|| {
            libc::setsid();
            Ok(())
        });
    }
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("eagerfs: {e}");
            return EXIT_USAGE;
        }
    };
    let mountpoint = args.mountpoint.as_ref().and_then(|m| std::fs::canonicalize(m).ok());
    for _ in 0..100 {
        if let Ok(Some(status)) = child.try_wait() {
            return status.code().map_or(EXIT_USAGE, |c| c as u8);
        }
        if mountpoint.as_ref().is_some_and(|m| is_mounted(m)) {
            return EXIT_OK;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    eprintln!("eagerfs: mount did not appear");
    EXIT_USAGE
}

/// True if `path` is listed as a mount point in `/proc/self/mountinfo`.
pub fn is_mounted(path: &std::path::Path) -> bool {
    let Ok(info) = std::fs::read_to_string("/proc/self/mountinfo") else { return false };
    let target = path.to_string_lossy();
    info.lines().any(|l| l.split(' ').nth(4) == Some(target.as_ref()))
}

fn run_bench(args: &BenchArgs) -> u8 {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("eagerfs bench: {e}");
            return EXIT_USAGE;
        }
    };
    let result = match &args.backing {
        None => bench::run_scenario(&cfg),
        Some(dir) => {
            let mut made = Vec::new();
            let mut n = 0;
            let r = bench::run_scenario_with(&cfg, || {
                n += 1;
                let d = dir.join(format!("eagerfs-bench-{}-{n}", std::process::id()));
                std::fs::create_dir(&d)?;
                made.push(d.clone());
                Ok(InjectedStore::new(LocalStore::new(&d)?))
            });
            for d in made {
                let _ = std::fs::remove_dir_all(d);
            }
            r
        }
    };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("eagerfs bench: {e}");
            return EXIT_USAGE;
        }
    };
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, report.to_csv()) {
                eprintln!("eagerfs bench: cannot write {}: {e}", path.display());
                return EXIT_USAGE;
            }
            print!("{}", report.to_table());
        }
        None => print!("{}", report.emit(args.format)),
    }
    if report.failures() > 0 {
        EXIT_DEFERRED_FAILURE
    } else {
        EXIT_OK
    }
}
