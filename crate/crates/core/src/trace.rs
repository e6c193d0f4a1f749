//! Randomized operation traces and a synchronous replay oracle.
//!
//! [`Trace::generate`] produces traces that are valid by construction: each
//! candidate mutation is tried on a scratch [`MemTree`] and kept only if it
//! succeeds there. Reads are kept whether or not they succeed, so the
//! oracle also checks error results. Hard links are never generated.
//!
//! ```
//! use std::sync::Arc;
//! use eagerfs::fs::{EagerFs, EagerPolicy};
//! use eagerfs::store::{BackingStore, MemTree};
//! use eagerfs::trace::{replay_fs, replay_sync, Trace, TraceConfig};
//!
//! let trace = Trace::generate(7, &TraceConfig::default());
//! let oracle = MemTree::new();
//! let expected = replay_sync(&trace, &oracle).unwrap();
//!
//! let fs = EagerFs::new(Arc::new(MemTree::new()), EagerPolicy::default());
//! assert_eq!(replay_fs(&trace, &fs), expected);
//! assert!(fs.drain().is_empty());
//! assert_eq!(fs.store().snapshot_tree(), oracle.snapshot_tree());
//! ```

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Seq;
use crate::error::{FsError, FsResult};
use crate::fs::{EagerFs, OpenFlags};
use crate::kind::OpKind;
use crate::path::NormPath;
use crate::store::{AttrRecord, BackingStore, FileKind, MemTree, StoreReply, StoreRequest};

const DIR_MODES: [u32; 4] = [0o755, 0o700, 0o750, 0o711];
const FILE_MODES: [u32; 4] = [0o644, 0o600, 0o640, 0o664];
const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOp {
    /// Creating open followed by release.
    Create { path: NormPath, mode: u32, truncate: bool },
    Write { path: NormPath, offset: u64, data: Vec<u8> },
    Truncate { path: NormPath, size: u64 },
    Fallocate { path: NormPath, offset: u64, len: u64 },
    Mkdir { path: NormPath, mode: u32 },
    Rmdir { path: NormPath },
    Unlink { path: NormPath },
    Rename { from: NormPath, to: NormPath },
    Symlink { target: String, link: NormPath },
    Chmod { path: NormPath, mode: u32 },
    Setxattr { path: NormPath, name: String, value: Vec<u8> },
    Read { path: NormPath, offset: u64, size: u32 },
    Readdir { path: NormPath },
    Getattr { path: NormPath },
    Readlink { path: NormPath },
}

impl TraceOp {
    pub fn is_read(&self) -> bool {
        matches!(
            self,
            TraceOp::Read { .. } | TraceOp::Readdir { .. } | TraceOp::Getattr { .. } | TraceOp::Readlink { .. }
        )
    }

    /// Store requests a synchronous execution issues for this op.
    pub fn requests(&self) -> Vec<StoreRequest> {
        use StoreRequest as R;
        match self.clone() {
            TraceOp::Create { path, mode, truncate } => vec![
                R::Create { path: path.clone(), mode, truncate, exclusive: false },
                R::Release { path },
            ],
            TraceOp::Write { path, offset, data } => vec![R::Write { path, offset, data: data.into() }],
            TraceOp::Truncate { path, size } => vec![R::Truncate { path, size }],
            TraceOp::Fallocate { path, offset, len } => vec![R::Fallocate { path, offset, len, mode: 0 }],
            TraceOp::Mkdir { path, mode } => vec![R::Mkdir { path, mode }],
            TraceOp::Rmdir { path } => vec![R::Rmdir { path }],
            TraceOp::Unlink { path } => vec![R::Unlink { path }],
            TraceOp::Rename { from, to } => vec![R::Rename { from, to }],
            TraceOp::Symlink { target, link } => vec![R::Symlink { target, link }],
            TraceOp::Chmod { path, mode } => vec![R::Chmod { path, mode }],
            TraceOp::Setxattr { path, name, value } => {
                vec![R::Setxattr { path, name, value: value.into(), flags: 0 }]
            }
            TraceOp::Read { path, offset, size } => vec![R::Read { path, offset, size }],
            TraceOp::Readdir { path } => vec![R::Readdir { path }],
            TraceOp::Getattr { path } => vec![R::Getattr { path }],
            TraceOp::Readlink { path } => vec![R::Readlink { path }],
        }
    }
}

/// Attribute fields that are stable across stores: timestamps, ownership
/// and link counts are left out, as is the size of directories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrView {
    pub kind: FileKind,
    pub perm: u32,
    pub size: Option<u64>,
}

impl From<&AttrRecord> for AttrView {
    fn from(a: &AttrRecord) -> Self {
        AttrView { kind: a.kind, perm: a.perm(), size: (a.kind != FileKind::Dir).then_some(a.size) }
    }
}

/// Result of one read-type op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Data(FsResult<Vec<u8>>),
    Listing(FsResult<Vec<(String, FileKind)>>),
    Attr(FsResult<AttrView>),
    Target(FsResult<String>),
}

#[derive(Debug, Clone)]
pub struct TraceConfig {
    pub max_ops: usize,
    pub max_paths: usize,
    pub symlinks: bool,
    /// Probability that a step is a read-type op.
    pub read_fraction: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { max_ops: 500, max_paths: 20, symlinks: true, read_fraction: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub seed: u64,
    pub paths: Vec<NormPath>,
    pub ops: Vec<TraceOp>,
}

impl Trace {
    /// Deterministic in `seed`. The trace has at most `max_ops` ops over at
    /// most `max_paths` distinct paths (plus the root for listings).
    pub fn generate(seed: u64, cfg: &TraceConfig) -> Trace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = path_pool(&mut rng, cfg.max_paths.max(1));
        let n_ops = rng.random_range(cfg.max_ops / 2..=cfg.max_ops).max(1);
        let model = MemTree::new();
        let mut ops = Vec::with_capacity(n_ops);
        let mut attempts = 0;
        while ops.len() < n_ops && attempts < n_ops * 20 {
            attempts += 1;
            let op = if rng.random_bool(cfg.read_fraction) {
                random_read(&mut rng, &paths)
            } else {
                random_mutation(&mut rng, &paths, cfg.symlinks)
            };
            if op.is_read() {
                ops.push(op);
                continue;
            }
            if op.requests().iter().all(|r| model.apply(r).is_ok()) {
                ops.push(op);
            }
        }
        Trace { seed, paths, ops }
    }

    /// Distinct paths the ops touch.
    pub fn touched_paths(&self) -> Vec<NormPath> {
        let mut out: Vec<NormPath> =
            self.ops.iter().flat_map(|o| o.requests()).flat_map(|r| r.paths()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn mutation_count(&self) -> usize {
        self.ops.iter().filter(|o| !o.is_read()).count()
    }
}

fn path_pool(rng: &mut ChaCha8Rng, max: usize) -> Vec<NormPath> {
    let target = rng.random_range(max.min(4)..=max);
    let mut pool: Vec<NormPath> = Vec::new();
    while pool.len() < target {
        let parent = if pool.is_empty() || rng.random_bool(0.4) {
            NormPath::root()
        } else {
            let p = pool.choose(rng).expect("nonempty").clone();
            if p.depth() >= 3 {
                NormPath::root()
            } else {
                p
            }
        };
        let name = NAMES.choose(rng).expect("nonempty");
        let path = parent.join(name).expect("valid name");
        if !pool.contains(&path) {
            pool.push(path);
        }
    }
    pool
}

fn random_read(rng: &mut ChaCha8Rng, paths: &[NormPath]) -> TraceOp {
    let path = if rng.random_bool(0.1) { NormPath::root() } else { paths.choose(rng).expect("nonempty").clone() };
    match rng.random_range(0..10) {
        0..=3 => TraceOp::Read { path, offset: rng.random_range(0..64), size: rng.random_range(1..256) },
        4..=5 => TraceOp::Readdir { path },
        6..=8 => TraceOp::Getattr { path },
        _ => TraceOp::Readlink { path },
    }
}

fn random_mutation(rng: &mut ChaCha8Rng, paths: &[NormPath], symlinks: bool) -> TraceOp {
    let path = paths.choose(rng).expect("nonempty").clone();
    match rng.random_range(0..100) {
        0..=17 => TraceOp::Mkdir { path, mode: *DIR_MODES.choose(rng).expect("nonempty") },
        18..=35 => TraceOp::Create {
            path,
            mode: *FILE_MODES.choose(rng).expect("nonempty"),
            truncate: rng.random_bool(0.7),
        },
        36..=55 => {
            let len = rng.random_range(1..96);
            let data = (0..len).map(|_| rng.random()).collect();
            TraceOp::Write { path, offset: rng.random_range(0..128), data }
        }
        56..=60 => TraceOp::Truncate { path, size: rng.random_range(0..160) },
        61..=62 => TraceOp::Fallocate { path, offset: rng.random_range(0..64), len: rng.random_range(1..200) },
        63..=70 => TraceOp::Unlink { path },
        71..=76 => TraceOp::Rmdir { path },
        77..=84 => TraceOp::Rename { from: path, to: paths.choose(rng).expect("nonempty").clone() },
        85..=89 if symlinks => {
            let target = paths.choose(rng).expect("nonempty").relative().to_owned();
            TraceOp::Symlink { target, link: path }
        }
        85..=94 => {
            let modes = if rng.random_bool(0.5) { DIR_MODES } else { FILE_MODES };
            TraceOp::Chmod { path, mode: *modes.choose(rng).expect("nonempty") }
        }
        _ => TraceOp::Setxattr {
            path,
            name: format!("user.k{}", rng.random_range(0..3)),
            value: vec![rng.random(); rng.random_range(0..8)],
        },
    }
}

fn observe_store<S: BackingStore>(store: &S, req: &StoreRequest) -> Observation {
    let r = store.apply(req);
    match req {
        StoreRequest::Read { .. } => Observation::Data(r.and_then(StoreReply::into_data).map(|b| b.to_vec())),
        StoreRequest::Readdir { .. } => Observation::Listing(
            r.and_then(StoreReply::into_entries).map(|es| es.into_iter().map(|e| (e.name, e.kind)).collect()),
        ),
        StoreRequest::Getattr { .. } => {
            Observation::Attr(r.and_then(StoreReply::into_attr).map(|a| AttrView::from(&a)))
        }
        StoreRequest::Readlink { .. } => Observation::Target(r.and_then(StoreReply::into_target)),
        _ => unreachable!("not a read request"),
    }
}

/// Runs the trace directly against `store`, in order. Fails with the index
/// of the first mutation the store rejects.
pub fn replay_sync<S: BackingStore>(trace: &Trace, store: &S) -> Result<Vec<Observation>, (usize, FsError)> {
    let mut out = Vec::new();
    for (i, op) in trace.ops.iter().enumerate() {
        for req in op.requests() {
            if op.is_read() {
                out.push(observe_store(store, &req));
            } else {
                store.apply(&req).map_err(|e| (i, e))?;
            }
        }
    }
    Ok(out)
}

/// Runs the trace through the filesystem layer. Mutation results are
/// ignored; read results are collected.
pub fn replay_fs<S: BackingStore>(trace: &Trace, fs: &EagerFs<S>) -> Vec<Observation> {
    let mut out = Vec::new();
    for op in &trace.ops {
        match op {
            TraceOp::Create { path, mode, truncate } => {
                let flags = OpenFlags { write: true, create: true, truncate: *truncate, exclusive: false, mode: *mode };
                if let Ok(fh) = fs.open(path, flags) {
                    let _ = fs.release(fh);
                }
            }
            TraceOp::Write { path, offset, data } => {
                let _ = fs.write(path, *offset, data);
            }
            TraceOp::Truncate { path, size } => {
                let _ = fs.truncate(path, *size);
            }
            TraceOp::Fallocate { path, offset, len } => {
                let _ = fs.fallocate(path, *offset, *len, 0);
            }
            TraceOp::Mkdir { path, mode } => {
                let _ = fs.mkdir(path, *mode);
            }
            TraceOp::Rmdir { path } => {
                let _ = fs.rmdir(path);
            }
            TraceOp::Unlink { path } => {
                let _ = fs.unlink(path);
            }
            TraceOp::Rename { from, to } => {
                let _ = fs.rename(from, to);
            }
            TraceOp::Symlink { target, link } => {
                let _ = fs.symlink(target, link);
            }
            TraceOp::Chmod { path, mode } => {
                let _ = fs.chmod(path, *mode);
            }
            TraceOp::Setxattr { path, name, value } => {
                let _ = fs.setxattr(path, name, value, 0);
            }
            TraceOp::Read { path, offset, size } => {
                out.push(Observation::Data(fs.read(path, *offset, *size).map(|b| b.to_vec())))
            }
            TraceOp::Readdir { path } => out.push(Observation::Listing(
                fs.readdir(path).map(|es| es.into_iter().map(|e| (e.name, e.kind)).collect()),
            )),
            TraceOp::Getattr { path } => out.push(Observation::Attr(fs.getattr(path).map(|a| AttrView::from(&a)))),
            TraceOp::Readlink { path } => out.push(Observation::Target(fs.readlink(path))),
        }
    }
    out
}

/// Paths whose executed mutation sequence differs from their enqueue
/// sequence. Only kinds that have an eager flag are compared, so
/// synchronous reads and background attribute fetches are ignored.
pub fn ordering_violations(enqueued: &[(Seq, StoreRequest)], executed: &[StoreRequest]) -> Vec<NormPath> {
    let mut want: HashMap<NormPath, Vec<&StoreRequest>> = HashMap::new();
    let mut got: HashMap<NormPath, Vec<&StoreRequest>> = HashMap::new();
    let mut seqs: Vec<Seq> = enqueued.iter().map(|(s, _)| *s).collect();
    seqs.dedup();
    debug_assert!(seqs.windows(2).all(|w| w[0] < w[1]), "enqueue log is in seq order");
    for (_, req) in enqueued {
        for p in req.paths() {
            want.entry(p).or_default().push(req);
        }
    }
    for req in executed.iter().filter(|r| OpKind::is_eager_capable(r.kind())) {
        for p in req.paths() {
            got.entry(p).or_default().push(req);
        }
    }
    let mut bad: Vec<NormPath> = want
        .keys()
        .chain(got.keys())
        .filter(|p| want.get(*p) != got.get(*p))
        .cloned()
        .collect();
    bad.sort();
    bad.dedup();
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let cfg = TraceConfig::default();
        let a = Trace::generate(11, &cfg);
        assert_eq!(a, Trace::generate(11, &cfg));
        assert!(a.ops.len() <= 500);
        assert!(a.paths.len() <= 20);
        assert!(a.touched_paths().iter().filter(|p| !p.is_root()).count() <= 20);
        assert!(a.mutation_count() > 50, "{}", a.mutation_count());
    }

    #[test]
    fn generated_mutations_replay_cleanly() {
        for seed in 0..20 {
            let t = Trace::generate(seed, &TraceConfig { symlinks: false, ..TraceConfig::default() });
            assert!(t.ops.iter().all(|o| !matches!(o, TraceOp::Symlink { .. })));
            replay_sync(&t, &MemTree::new()).unwrap();
        }
    }

    #[test]
    fn ordering_check_detects_swaps() {
        use crate::path::p;
        let a = StoreRequest::Mkdir { path: p("/x"), mode: 0o755 };
        let b = StoreRequest::Chmod { path: p("/x"), mode: 0o700 };
        let enq = vec![(1, a.clone()), (2, b.clone())];
        assert!(ordering_violations(&enq, &[a.clone(), b.clone()]).is_empty());
        assert_eq!(ordering_violations(&enq, &[b, a]), vec![p("/x")]);
    }
}
