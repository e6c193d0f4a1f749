//! Timed scenarios over a latency-injected store.
//!
//! Each replicate gets a fresh store, is prepared with latency switched
//! off, then timed from the first operation until every deferred operation
//! has reached the store. Modes are interleaved round-robin so slow drift
//! in the host affects all of them alike.

mod report;
mod workload;

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

pub use report::{BenchReport, BenchRow, CsvError, Mode, ParseNameError, ReportFormat, Scenario, Summary, CSV_HEADER};
pub use workload::{file_content, Plan, PlanEntry, Workload, DEFAULT_MEAN_SIZE};

use crate::engine::{EngineConfig, MemorySink};
use crate::error::{FsError, FsResult};
use crate::fs::{EagerFs, EagerPolicy, OpenFlags};
use crate::path::NormPath;
use crate::store::{BackingStore, FileKind, InjectedStore, LatencyProfile, MemTree, StoreRequest, TreeDigest};

/// Pending-operation limit used for the eager mode.
pub const EAGER_MAX_PENDING: usize = 4000;

/// Largest single write issued while writing file content.
pub const WRITE_CHUNK: usize = 64 * 1024;

const DIR_MODE: u32 = 0o755;
const FILE_MODE: u32 = 0o644;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenario: Scenario,
    /// Interleaved in this order within every replicate round.
    pub modes: Vec<Mode>,
    pub workload: Workload,
    pub latency: LatencyProfile,
    pub replicates: usize,
    /// Directory the tree lives under; created during setup.
    pub dest: NormPath,
}

impl BenchConfig {
    pub fn new(scenario: Scenario, workload: Workload, latency: LatencyProfile, replicates: usize) -> Self {
        let modes = Mode::ALL.into_iter().filter(|m| supports(scenario, *m)).collect();
        BenchConfig { scenario, modes, workload, latency, replicates, dest: NormPath::new("/tree").expect("valid") }
    }

    pub fn with_modes(mut self, modes: &[Mode]) -> Self {
        self.modes = modes.to_vec();
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("mode {mode} does not apply to scenario {scenario}")]
    Unsupported { scenario: Scenario, mode: Mode },
    #[error("no modes selected")]
    NoModes,
    #[error("cannot create store: {0}")]
    Store(FsError),
}

/// Staging only makes sense for writing a tree.
pub fn supports(scenario: Scenario, mode: Mode) -> bool {
    mode != Mode::Staged || scenario == Scenario::Extract
}

/// Runs against fresh in-memory stores.
pub fn run_scenario(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    run_scenario_with(cfg, || Ok(InjectedStore::fake()))
}

/// Runs against stores from `make_store`, one per replicate. Each must
/// start out empty.
pub fn run_scenario_with<S, F>(cfg: &BenchConfig, mut make_store: F) -> Result<BenchReport, BenchError>
where
    S: BackingStore,
    F: FnMut() -> FsResult<InjectedStore<S>>,
{
    if cfg.modes.is_empty() {
        return Err(BenchError::NoModes);
    }
    if let Some(&mode) = cfg.modes.iter().find(|m| !supports(cfg.scenario, **m)) {
        return Err(BenchError::Unsupported { scenario: cfg.scenario, mode });
    }
    let plan = cfg.workload.plan(&cfg.dest);
    let expected = reference_digests(&plan);
    let mut report = BenchReport::new();
    for replicate in 0..cfg.replicates {
        for &mode in &cfg.modes {
            let store = Arc::new(make_store().map_err(BenchError::Store)?);
            let (seconds, ok) = match run_replicate(cfg, &plan, &expected, mode, replicate, &store) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("{} {} replicate {replicate} failed: {e}", cfg.scenario, mode);
                    (0.0, false)
                }
            };
            report.push(BenchRow { scenario: cfg.scenario, mode, replicate, seconds, ok });
        }
    }
    Ok(report)
}

struct Expected {
    /// Store with nothing below the root.
    empty: TreeDigest,
    /// Store holding `dest` and the whole tree.
    full: TreeDigest,
}

fn reference_digests(plan: &Plan) -> Expected {
    let tree = MemTree::new();
    let empty = tree.snapshot_tree();
    tree.apply(&StoreRequest::Mkdir { path: plan.dest.clone(), mode: DIR_MODE }).expect("fresh tree");
    populate(&tree, plan).expect("plan applies to a fresh tree");
    Expected { empty, full: tree.snapshot_tree() }
}

/// Writes `plan` straight into `store`, bypassing the shim.
pub fn populate<S: BackingStore + ?Sized>(store: &S, plan: &Plan) -> FsResult<()> {
    for entry in &plan.entries {
        match entry {
            PlanEntry::Dir { path } => {
                store.apply(&StoreRequest::Mkdir { path: path.clone(), mode: DIR_MODE })?;
            }
            PlanEntry::File { path, size, content_seed } => {
                store.apply(&StoreRequest::Create { path: path.clone(), mode: FILE_MODE, truncate: true, exclusive: false })?;
                let data = file_content(*content_seed, *size);
                for (i, chunk) in data.chunks(WRITE_CHUNK).enumerate() {
                    let offset = (i * WRITE_CHUNK) as u64;
                    store.apply(&StoreRequest::Write { path: path.clone(), offset, data: chunk.to_vec().into() })?;
                }
                store.apply(&StoreRequest::Release { path: path.clone() })?;
            }
            PlanEntry::Symlink { path, target } => {
                store.apply(&StoreRequest::Symlink { target: target.clone(), link: path.clone() })?;
            }
        }
    }
    Ok(())
}

fn run_replicate<S: BackingStore>(
    cfg: &BenchConfig,
    plan: &Plan,
    expected: &Expected,
    mode: Mode,
    replicate: usize,
    store: &Arc<InjectedStore<S>>,
) -> FsResult<(f64, bool)> {
    store.set_logging(false);
    store.set_latency(LatencyProfile::zero());
    store.apply(&StoreRequest::Mkdir { path: cfg.dest.clone(), mode: DIR_MODE })?;
    if cfg.scenario != Scenario::Extract {
        populate(store.as_ref(), plan)?;
    }
    store.drop_caches();
    store.set_latency(cfg.latency.clone());
    store.seed_latency(replicate as u64);

    let start = Instant::now();
    let visited = timed_task(cfg.scenario, mode, plan, store)?;
    let seconds = start.elapsed().as_secs_f64();

    store.set_latency(LatencyProfile::zero());
    let digest = store.snapshot_tree();
    let ok = match cfg.scenario {
        Scenario::Extract => digest == expected.full,
        Scenario::Remove => digest == expected.empty,
        Scenario::Traverse => digest == expected.full && visited == plan.entries.len(),
    };
    Ok((seconds, ok))
}

/// Returns the number of entries visited below `dest`.
fn timed_task<S: BackingStore>(scenario: Scenario, mode: Mode, plan: &Plan, store: &Arc<InjectedStore<S>>) -> FsResult<usize> {
    if mode == Mode::Staged {
        let scratch = Arc::new(MemTree::new());
        scratch.apply(&StoreRequest::Mkdir { path: plan.dest.clone(), mode: DIR_MODE })?;
        let staging = shim(scratch.clone(), Mode::Direct);
        let n = extract(&staging, plan)?;
        finish(&staging)?;
        let target = shim(store.clone(), Mode::Direct);
        copy_tree(scratch.as_ref(), &plan.dest, &target)?;
        finish(&target)?;
        return Ok(n);
    }
    let fs = shim(store.clone(), mode);
    let n = match scenario {
        Scenario::Extract => extract(&fs, plan),
        Scenario::Remove => remove_tree(&fs, &plan.dest),
        Scenario::Traverse => traverse(&fs, &plan.dest),
    };
    let drained = finish(&fs);
    let n = n?;
    drained?;
    Ok(n)
}

fn shim<S: BackingStore>(store: Arc<S>, mode: Mode) -> EagerFs<S> {
    let policy = match mode {
        Mode::Eager => EagerPolicy::default().with_max_pending(EAGER_MAX_PENDING),
        Mode::Direct | Mode::Staged => EagerPolicy::passthrough(),
    };
    let sink = MemorySink::new();
    EagerFs::with_engine_config(store, policy, EngineConfig { sink, ..EngineConfig::default() })
}

fn finish<S: BackingStore>(fs: &EagerFs<S>) -> FsResult<()> {
    match fs.drain().records.first() {
        None => Ok(()),
        Some(rec) => Err(rec.error),
    }
}

/// Creates the tree of `plan` through `fs` the way an archive extractor
/// would.
pub fn extract<S: BackingStore>(fs: &EagerFs<S>, plan: &Plan) -> FsResult<usize> {
    for entry in &plan.entries {
        match entry {
            PlanEntry::Dir { path } => fs.mkdir(path, DIR_MODE)?,
            PlanEntry::File { path, size, content_seed } => {
                let data = file_content(*content_seed, *size);
                write_file(fs, path, FILE_MODE, &data)?;
            }
            PlanEntry::Symlink { path, target } => fs.symlink(target, path)?,
        }
    }
    Ok(plan.entries.len())
}

fn write_file<S: BackingStore>(fs: &EagerFs<S>, path: &NormPath, mode: u32, data: &[u8]) -> FsResult<()> {
    let fh = fs.open(path, OpenFlags::create(mode))?;
    for (i, chunk) in data.chunks(WRITE_CHUNK).enumerate() {
        fs.write_handle(fh, (i * WRITE_CHUNK) as u64, chunk)?;
    }
    fs.release(fh)
}

/// Deletes `dir` and everything below it, statting each entry first.
pub fn remove_tree<S: BackingStore>(fs: &EagerFs<S>, dir: &NormPath) -> FsResult<usize> {
    let mut removed = 0;
    for entry in fs.readdir(dir)? {
        let path = dir.join(&entry.name).map_err(|_| FsError::InvalidArgument)?;
        if fs.getattr(&path)?.kind == FileKind::Dir {
            removed += remove_tree(fs, &path)?;
        } else {
            fs.unlink(&path)?;
        }
        removed += 1;
    }
    fs.rmdir(dir)?;
    Ok(removed)
}

/// Lists and stats every entry below `dir`.
pub fn traverse<S: BackingStore>(fs: &EagerFs<S>, dir: &NormPath) -> FsResult<usize> {
    let mut seen = 0;
    let mut queue = VecDeque::from([dir.clone()]);
    while let Some(d) = queue.pop_front() {
        for entry in fs.readdir(&d)? {
            let path = d.join(&entry.name).map_err(|_| FsError::InvalidArgument)?;
            if fs.getattr(&path)?.kind == FileKind::Dir {
                queue.push_back(path);
            }
            seen += 1;
        }
    }
    Ok(seen)
}

/// Copies the tree below `dir` from `src` into `fs`, creating `dir` if
/// needed. Directories come before their contents.
pub fn copy_tree<S: BackingStore, T: BackingStore + ?Sized>(src: &T, dir: &NormPath, fs: &EagerFs<S>) -> FsResult<usize> {
    let mut copied = 0;
    match fs.getattr(dir) {
        Ok(_) => {}
        Err(FsError::NotFound) => fs.mkdir(dir, DIR_MODE)?,
        Err(e) => return Err(e),
    }
    let mut queue = VecDeque::from([dir.clone()]);
    while let Some(d) = queue.pop_front() {
        for entry in src.apply(&StoreRequest::Readdir { path: d.clone() })?.into_entries()? {
            let path = d.join(&entry.name).map_err(|_| FsError::InvalidArgument)?;
            let attr = src.apply(&StoreRequest::Getattr { path: path.clone() })?.into_attr()?;
            match attr.kind {
                FileKind::Dir => {
                    fs.mkdir(&path, attr.perm())?;
                    queue.push_back(path);
                }
                FileKind::Symlink => {
                    let target = src.apply(&StoreRequest::Readlink { path: path.clone() })?.into_target()?;
                    fs.symlink(&target, &path)?;
                }
                _ => {
                    let mut data = Vec::with_capacity(attr.size as usize);
                    while (data.len() as u64) < attr.size {
                        let req = StoreRequest::Read { path: path.clone(), offset: data.len() as u64, size: WRITE_CHUNK as u32 };
                        let chunk = src.apply(&req)?.into_data()?;
                        if chunk.is_empty() {
                            break;
                        }
                        data.extend_from_slice(&chunk);
                    }
                    write_file(fs, &path, attr.perm(), &data)?;
                }
            }
            copied += 1;
        }
    }
    Ok(copied)
}
