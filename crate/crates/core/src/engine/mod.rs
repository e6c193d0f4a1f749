//! The ordering engine.
//!
//! Deferred operations are acknowledged by [`Engine::enqueue`] and executed
//! later on a pool of workers. Operations touching the same normalized path
//! run strictly in enqueue order; operations on unrelated paths run in
//! parallel. Namespace structure adds two more edges: an operation waits for
//! pending work on every ancestor of its paths, and a destructive operation
//! (`rmdir`, `rename`) also waits for pending work below its paths.
//!
//! ```
//! use eagerfs::engine::{DeferredOp, Engine, EngineConfig};
//! use eagerfs::kind::OpKind;
//! use eagerfs::path::p;
//!
//! let engine = Engine::new(EngineConfig::default());
//! let seq = engine
//!     .enqueue(DeferredOp::new(OpKind::Write, vec![p("/f")], || Ok(())))
//!     .unwrap();
//! assert_eq!(seq, 1);
//! engine.barrier(&p("/f"));
//! assert_eq!(engine.watermark(&p("/f")).executed, 1);
//! assert!(engine.drain_all().is_empty());
//! ```

mod ledger;
mod throttle;

use std::collections::{HashMap, HashSet, VecDeque};
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use parking_lot::{Condvar, Mutex};

use crate::error::{FsError, FsResult};
use crate::kind::OpKind;
use crate::path::NormPath;
use crate::store::StoreRequest;

pub use ledger::{
    DiagnosticSink, ErrorLedger, LedgerRecord, LedgerSummary, MemorySink, ReportPhase, StderrSink,
    DIAGNOSTIC_PREFIX,
};
pub use throttle::{ThrottleGate, ThrottleStats};

/// Global sequence id; the first enqueued op gets 1.
pub type Seq = u64;

/// Deferred action run against the backing store.
pub type Thunk = Box<dyn FnOnce() -> FsResult<()> + Send + 'static>;

pub const DEFAULT_MAX_PENDING: usize = 300;

/// One deferred operation before it is enqueued.
pub struct DeferredOp {
    kind: OpKind,
    paths: Vec<NormPath>,
    thunk: Thunk,
    request: Option<StoreRequest>,
}

impl DeferredOp {
    pub fn new(kind: OpKind, paths: Vec<NormPath>, thunk: impl FnOnce() -> FsResult<()> + Send + 'static) -> Self {
        let mut paths = paths;
        paths.dedup();
        DeferredOp { kind, paths, thunk: Box::new(thunk), request: None }
    }

    /// Op whose kind and paths come from `req`. The request is retained for
    /// the enqueue log.
    pub fn for_request(req: StoreRequest, thunk: impl FnOnce() -> FsResult<()> + Send + 'static) -> Self {
        let mut op = DeferredOp::new(req.kind(), req.paths(), thunk);
        op.request = Some(req);
        op
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn paths(&self) -> &[NormPath] {
        &self.paths
    }

    fn destructive(&self) -> bool {
        matches!(self.kind, OpKind::Rmdir | OpKind::Rename)
    }
}

impl std::fmt::Debug for DeferredOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeferredOp").field("kind", &self.kind).field("paths", &self.paths).finish()
    }
}

/// Per-path counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Watermark {
    pub executed: u64,
    pub enqueued: u64,
}

impl Watermark {
    pub fn is_idle(&self) -> bool {
        self.executed == self.enqueued
    }
}

/// Which pending operations a [`Engine::fence`] waits for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FenceScope {
    /// Only the paths' own queues; same as [`Engine::barrier`].
    Path,
    /// The paths and every ancestor directory.
    WithAncestors,
    /// Ancestors plus everything pending below the paths.
    Subtree,
}

#[derive(Clone)]
pub struct EngineConfig {
    pub max_pending: usize,
    pub abort_on_error: bool,
    /// Upper bound on concurrently executing operations.
    pub max_workers: usize,
    /// Idle workers retire after this long.
    pub idle_timeout: Duration,
    pub sink: Arc<dyn DiagnosticSink>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_pending: DEFAULT_MAX_PENDING,
            abort_on_error: false,
            max_workers: 128,
            idle_timeout: Duration::from_millis(200),
            sink: Arc::new(StderrSink),
        }
    }
}

impl std::fmt::Debug for EngineConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EngineConfig")
            .field("max_pending", &self.max_pending)
            .field("abort_on_error", &self.abort_on_error)
            .field("max_workers", &self.max_workers)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineStats {
    pub throttle: ThrottleStats,
    pub enqueued: u64,
    pub executed: u64,
    pub failed: u64,
    pub queues: usize,
    pub workers: usize,
    pub peak_workers: usize,
    pub aborted: bool,
}

struct Slot {
    kind: OpKind,
    paths: Vec<NormPath>,
    thunk: Option<Thunk>,
    unmet: usize,
    dependents: Vec<Seq>,
}

#[derive(Default)]
struct Queue {
    ops: VecDeque<Seq>,
    mark: Watermark,
}

#[derive(Default)]
struct State {
    next_seq: Seq,
    queues: HashMap<NormPath, Queue>,
    live: HashMap<Seq, Slot>,
    /// For each directory, live ops on paths strictly below it.
    below: HashMap<NormPath, HashSet<Seq>>,
    ready: VecDeque<Seq>,
    workers: usize,
    peak_workers: usize,
    idle: usize,
    wake_tokens: usize,
    closed: bool,
    shutdown: bool,
    enqueue_log: Option<Vec<(Seq, StoreRequest)>>,
}

struct Inner {
    cfg: EngineConfig,
    state: Mutex<State>,
    work: Condvar,
    done: Condvar,
    throttle: ThrottleGate,
    ledger: ErrorLedger,
    aborted: AtomicBool,
    enqueued: AtomicU64,
    executed: AtomicU64,
    failed: AtomicU64,
}

/// Handle to the engine. Dropping it drains all pending work first.
pub struct Engine {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("stats", &self.stats()).finish()
    }
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Self {
        let throttle = ThrottleGate::new(cfg.max_pending);
        let ledger = ErrorLedger::new(cfg.sink.clone());
        let state = State { next_seq: 1, ..State::default() };
        Engine {
            inner: Arc::new(Inner {
                cfg,
                state: Mutex::new(state),
                work: Condvar::new(),
                done: Condvar::new(),
                throttle,
                ledger,
                aborted: AtomicBool::new(false),
                enqueued: AtomicU64::new(0),
                executed: AtomicU64::new(0),
                failed: AtomicU64::new(0),
            }),
        }
    }

    /// Acknowledges `op` and schedules it. Blocks only while the throttle is
    /// full. Fails with `IoFailure` after an abort or once draining started.
    pub fn enqueue(&self, op: DeferredOp) -> FsResult<Seq> {
        let inner = &self.inner;
        if op.paths.is_empty() {
            return Err(FsError::InvalidArgument);
        }
        if inner.aborted.load(Ordering::SeqCst) || inner.state.lock().closed {
            return Err(FsError::IoFailure);
        }
        inner.throttle.acquire();
        let mut st = inner.state.lock();
        if st.closed || inner.aborted.load(Ordering::SeqCst) {
            drop(st);
            inner.throttle.release();
            return Err(FsError::IoFailure);
        }
        let seq = st.next_seq;
        st.next_seq += 1;

        let mut deps: HashSet<Seq> = HashSet::new();
        for path in &op.paths {
            if let Some(tail) = st.queues.get(path).and_then(|q| q.ops.back()) {
                deps.insert(*tail);
            }
            for anc in path.ancestors() {
                if let Some(tail) = st.queues.get(&anc).and_then(|q| q.ops.back()) {
                    deps.insert(*tail);
                }
            }
            if op.destructive() {
                if let Some(below) = st.below.get(path) {
                    deps.extend(below.iter().copied());
                }
            }
        }
        let mut unmet = 0;
        for dep in deps {
            if let Some(slot) = st.live.get_mut(&dep) {
                slot.dependents.push(seq);
                unmet += 1;
            }
        }
        for path in &op.paths {
            let q = st.queues.entry(path.clone()).or_default();
            q.ops.push_back(seq);
            q.mark.enqueued += 1;
            for anc in path.ancestors() {
                st.below.entry(anc).or_default().insert(seq);
            }
        }
        if let (Some(log), Some(req)) = (st.enqueue_log.as_mut(), op.request) {
            log.push((seq, req));
        }
        st.live.insert(seq, Slot { kind: op.kind, paths: op.paths, thunk: Some(op.thunk), unmet, dependents: Vec::new() });
        inner.enqueued.fetch_add(1, Ordering::SeqCst);
        if unmet == 0 {
            Inner::make_ready(inner, &mut st, seq);
        }
        Ok(seq)
    }

    /// Current counters for `path`; (0, 0) for unknown paths.
    pub fn watermark(&self, path: &NormPath) -> Watermark {
        self.inner.state.lock().queues.get(path).map(|q| q.mark).unwrap_or_default()
    }

    /// Waits until every op enqueued on `path` before this call has executed.
    pub fn barrier(&self, path: &NormPath) {
        self.fence(std::slice::from_ref(path), FenceScope::Path);
    }

    /// Like [`barrier`](Self::barrier) over several paths, optionally
    /// widened to ancestors or whole subtrees.
    pub fn fence(&self, paths: &[NormPath], scope: FenceScope) {
        let mut st = self.inner.state.lock();
        let mut waiting: Vec<Seq> = Vec::new();
        for path in paths {
            if let Some(tail) = st.queues.get(path).and_then(|q| q.ops.back()) {
                waiting.push(*tail);
            }
            if scope != FenceScope::Path {
                for anc in path.ancestors() {
                    if let Some(tail) = st.queues.get(&anc).and_then(|q| q.ops.back()) {
                        waiting.push(*tail);
                    }
                }
            }
            if scope == FenceScope::Subtree {
                if let Some(below) = st.below.get(path) {
                    waiting.extend(below.iter().copied());
                }
            }
        }
        loop {
            waiting.retain(|s| st.live.contains_key(s));
            if waiting.is_empty() {
                return;
            }
            self.inner.done.wait(&mut st);
        }
    }

    /// Rejects further enqueues, waits for every queue to empty, reports the
    /// ledger a second time and returns it.
    pub fn drain_all(&self) -> LedgerSummary {
        let mut st = self.inner.state.lock();
        st.closed = true;
        while !st.live.is_empty() {
            self.inner.done.wait(&mut st);
        }
        drop(st);
        self.inner.ledger.report_teardown();
        self.inner.ledger.summary()
    }

    /// Waits for all pending work without closing the engine.
    pub fn quiesce(&self) {
        let mut st = self.inner.state.lock();
        while !st.live.is_empty() {
            self.inner.done.wait(&mut st);
        }
    }

    pub fn is_aborted(&self) -> bool {
        self.inner.aborted.load(Ordering::SeqCst)
    }

    pub fn is_closed(&self) -> bool {
        self.inner.state.lock().closed
    }

    pub fn ledger(&self) -> &ErrorLedger {
        &self.inner.ledger
    }

    pub fn config(&self) -> &EngineConfig {
        &self.inner.cfg
    }

    pub fn throttle(&self) -> ThrottleStats {
        self.inner.throttle.stats()
    }

    pub fn stats(&self) -> EngineStats {
        let st = self.inner.state.lock();
        EngineStats {
            throttle: self.inner.throttle.stats(),
            enqueued: self.inner.enqueued.load(Ordering::SeqCst),
            executed: self.inner.executed.load(Ordering::SeqCst),
            failed: self.inner.failed.load(Ordering::SeqCst),
            queues: st.queues.len(),
            workers: st.workers,
            peak_workers: st.peak_workers,
            aborted: self.is_aborted(),
        }
    }

    /// Starts recording `(seq, request)` for ops built with
    /// [`DeferredOp::for_request`].
    pub fn record_enqueues(&self) {
        self.inner.state.lock().enqueue_log.get_or_insert_with(Vec::new);
    }

    pub fn enqueue_log(&self) -> Vec<(Seq, StoreRequest)> {
        self.inner.state.lock().enqueue_log.clone().unwrap_or_default()
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.drain_all();
        let mut st = self.inner.state.lock();
        st.shutdown = true;
        drop(st);
        self.inner.work.notify_all();
    }
}

impl Inner {
    fn make_ready(this: &Arc<Inner>, st: &mut State, seq: Seq) {
        st.ready.push_back(seq);
        if st.idle > 0 {
            st.idle -= 1;
            st.wake_tokens += 1;
            this.work.notify_one();
        } else if st.workers < this.cfg.max_workers.max(1) {
            st.workers += 1;
            st.peak_workers = st.peak_workers.max(st.workers);
            let inner = this.clone();
            std::thread::Builder::new()
                .name("eagerfs-drain".into())
                .spawn(move || inner.worker())
                .expect("spawn drain worker");
        }
    }

    fn worker(self: Arc<Self>) {
        let mut st = self.state.lock();
        loop {
            if let Some(seq) = st.ready.pop_front() {
                let slot = st.live.get_mut(&seq).expect("ready op is live");
                let thunk = slot.thunk.take().expect("op runs once");
                let (kind, paths) = (slot.kind, slot.paths.clone());
                drop(st);
                let result = std::panic::catch_unwind(AssertUnwindSafe(thunk)).unwrap_or(Err(FsError::IoFailure));
                if let Err(err) = result {
                    self.record_failure(seq, kind, paths, err);
                }
                st = self.state.lock();
                self.complete(&mut st, seq);
                continue;
            }
            if st.shutdown {
                break;
            }
            st.idle += 1;
            let timed_out = loop {
                let res = self.work.wait_for(&mut st, self.cfg.idle_timeout);
                if st.wake_tokens > 0 {
                    st.wake_tokens -= 1;
                    break false;
                }
                if res.timed_out() || st.shutdown {
                    st.idle -= 1;
                    break true;
                }
            };
            if timed_out && st.ready.is_empty() {
                break;
            }
        }
        st.workers -= 1;
    }

    fn record_failure(&self, seq: Seq, kind: OpKind, paths: Vec<NormPath>, err: FsError) {
        self.failed.fetch_add(1, Ordering::SeqCst);
        self.ledger.record(LedgerRecord {
            seq,
            kind,
            paths,
            error: err,
            message: err.to_string(),
            at: SystemTime::now(),
        });
        if self.cfg.abort_on_error {
            self.aborted.store(true, Ordering::SeqCst);
        }
    }

    fn complete(self: &Arc<Self>, st: &mut State, seq: Seq) {
        let slot = st.live.remove(&seq).expect("completed op is live");
        for path in &slot.paths {
            let q = st.queues.get_mut(path).expect("queue exists");
            debug_assert_eq!(q.ops.front(), Some(&seq), "per-path order violated");
            if let Some(pos) = q.ops.iter().position(|s| *s == seq) {
                q.ops.remove(pos);
            }
            q.mark.executed += 1;
            for anc in path.ancestors() {
                if let Some(set) = st.below.get_mut(&anc) {
                    set.remove(&seq);
                    if set.is_empty() {
                        st.below.remove(&anc);
                    }
                }
            }
        }
        for dep in slot.dependents {
            let ready = match st.live.get_mut(&dep) {
                Some(d) => {
                    d.unmet -= 1;
                    d.unmet == 0
                }
                None => false,
            };
            if ready {
                Inner::make_ready(self, st, dep);
            }
        }
        self.executed.fetch_add(1, Ordering::SeqCst);
        self.throttle.release();
        self.done.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::p;
    use std::time::Instant;

    fn quiet() -> (Engine, Arc<MemorySink>) {
        let sink = MemorySink::new();
        let engine = Engine::new(EngineConfig { sink: sink.clone(), ..EngineConfig::default() });
        (engine, sink)
    }

    fn noop(kind: OpKind, path: &str) -> DeferredOp {
        DeferredOp::new(kind, vec![p(path)], || Ok(()))
    }

    #[test]
    fn first_enqueue_gets_seq_one() {
        let (e, _) = quiet();
        let gate = Arc::new(Mutex::new(()));
        let hold = gate.lock();
        let g = gate.clone();
        let seq = e
            .enqueue(DeferredOp::new(OpKind::Create, vec![p("/a/f")], move || {
                drop(g.lock());
                Ok(())
            }))
            .unwrap();
        assert_eq!(seq, 1);
        assert_eq!(e.watermark(&p("/a/f")), Watermark { executed: 0, enqueued: 1 });
        drop(hold);
        e.drain_all();
        assert_eq!(e.watermark(&p("/a/f")), Watermark { executed: 1, enqueued: 1 });
    }

    #[test]
    fn unknown_path_watermark_is_zero() {
        let (e, _) = quiet();
        assert_eq!(e.watermark(&p("/nothing")), Watermark::default());
        e.barrier(&p("/nothing"));
    }

    #[test]
    fn two_path_op_advances_both_queues_once() {
        let (e, _) = quiet();
        let runs = Arc::new(AtomicU64::new(0));
        let r = runs.clone();
        e.enqueue(DeferredOp::new(OpKind::Rename, vec![p("/a"), p("/b")], move || {
            r.fetch_add(1, Ordering::SeqCst);
            Ok(())
        }))
        .unwrap();
        e.drain_all();
        assert_eq!(runs.load(Ordering::SeqCst), 1);
        assert_eq!(e.watermark(&p("/a")), Watermark { executed: 1, enqueued: 1 });
        assert_eq!(e.watermark(&p("/b")), Watermark { executed: 1, enqueued: 1 });
        assert_eq!(e.stats().throttle.high_water, 1);
    }

    #[test]
    fn same_path_ops_run_in_order() {
        let (e, _) = quiet();
        let order = Arc::new(Mutex::new(Vec::new()));
        for i in 0..50 {
            let o = order.clone();
            e.enqueue(DeferredOp::new(OpKind::Write, vec![p("/f")], move || {
                std::thread::sleep(Duration::from_micros(50));
                o.lock().push(i);
                Ok(())
            }))
            .unwrap();
        }
        e.barrier(&p("/f"));
        assert_eq!(*order.lock(), (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn children_wait_for_parent_and_rmdir_waits_for_children() {
        let (e, _) = quiet();
        let log = Arc::new(Mutex::new(Vec::new()));
        let push = |name: &'static str, kind, path: &str, delay: u64| {
            let l = log.clone();
            DeferredOp::new(kind, vec![p(path)], move || {
                std::thread::sleep(Duration::from_millis(delay));
                l.lock().push(name);
                Ok(())
            })
        };
        e.enqueue(push("mkdir", OpKind::Mkdir, "/d", 20)).unwrap();
        e.enqueue(push("create", OpKind::Create, "/d/f", 0)).unwrap();
        e.enqueue(push("unlink", OpKind::Unlink, "/d/f", 10)).unwrap();
        e.enqueue(push("rmdir", OpKind::Rmdir, "/d", 0)).unwrap();
        e.drain_all();
        assert_eq!(*log.lock(), ["mkdir", "create", "unlink", "rmdir"]);
    }

    #[test]
    fn barrier_does_not_wait_for_later_ops() {
        let (e, _) = quiet();
        e.enqueue(noop(OpKind::Write, "/f")).unwrap();
        e.barrier(&p("/f"));
        let release = Arc::new(AtomicBool::new(false));
        let r = release.clone();
        e.enqueue(DeferredOp::new(OpKind::Write, vec![p("/f")], move || {
            while !r.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(1));
            }
            Ok(())
        }))
        .unwrap();
        assert_eq!(e.watermark(&p("/f")), Watermark { executed: 1, enqueued: 2 });
        release.store(true, Ordering::SeqCst);
    }

    #[test]
    fn barrier_waits_for_latency() {
        let (e, _) = quiet();
        let t = Instant::now();
        e.enqueue(DeferredOp::new(OpKind::Write, vec![p("/f")], || {
            std::thread::sleep(Duration::from_millis(5));
            Ok(())
        }))
        .unwrap();
        e.barrier(&p("/f"));
        assert!(t.elapsed() >= Duration::from_millis(5));
    }

    #[test]
    fn failure_is_ledgered_and_barrier_returns() {
        let (e, sink) = quiet();
        let seq = e
            .enqueue(DeferredOp::new(OpKind::Write, vec![p("/f")], || Err(FsError::IoFailure)))
            .unwrap();
        e.barrier(&p("/f"));
        assert_eq!(e.ledger().len(), 1);
        assert_eq!(sink.count_seq(seq), 1);
        let summary = e.drain_all();
        assert_eq!(summary.len(), 1);
        assert_eq!(summary.exit_code(), 1);
        assert_eq!(sink.count_seq(seq), 2);
    }

    #[test]
    fn panicking_thunk_counts_as_failure() {
        let (e, _) = quiet();
        e.enqueue(DeferredOp::new(OpKind::Write, vec![p("/f")], || panic!("boom"))).unwrap();
        let summary = e.drain_all();
        assert_eq!(summary.records[0].error, FsError::IoFailure);
    }

    #[test]
    fn abort_mode_rejects_new_work_but_drains_old() {
        let sink = MemorySink::new();
        let e = Engine::new(EngineConfig { abort_on_error: true, sink, ..EngineConfig::default() });
        e.enqueue(DeferredOp::new(OpKind::Unlink, vec![p("/x")], || Err(FsError::PermissionDenied)))
            .unwrap();
        let ran = Arc::new(AtomicBool::new(false));
        let r = ran.clone();
        e.enqueue(DeferredOp::new(OpKind::Write, vec![p("/y")], move || {
            std::thread::sleep(Duration::from_millis(20));
            r.store(true, Ordering::SeqCst);
            Ok(())
        }))
        .unwrap();
        e.barrier(&p("/x"));
        assert!(e.is_aborted());
        assert_eq!(e.enqueue(noop(OpKind::Write, "/z")), Err(FsError::IoFailure));
        e.drain_all();
        assert!(ran.load(Ordering::SeqCst));
        assert!(e.is_aborted());
    }

    #[test]
    fn enqueue_after_drain_is_rejected() {
        let (e, _) = quiet();
        assert!(e.drain_all().is_empty());
        assert_eq!(e.enqueue(noop(OpKind::Write, "/f")), Err(FsError::IoFailure));
    }

    #[test]
    fn throttle_blocks_at_limit() {
        let sink = MemorySink::new();
        let e = Arc::new(Engine::new(EngineConfig { max_pending: 3, sink, ..EngineConfig::default() }));
        let gate = Arc::new(AtomicBool::new(false));
        for i in 0..3 {
            let g = gate.clone();
            e.enqueue(DeferredOp::new(OpKind::Write, vec![p(&format!("/f{i}"))], move || {
                while !g.load(Ordering::SeqCst) {
                    std::thread::sleep(Duration::from_millis(1));
                }
                Ok(())
            }))
            .unwrap();
        }
        let e2 = e.clone();
        let fourth = std::thread::spawn(move || e2.enqueue(noop(OpKind::Write, "/g")).unwrap());
        std::thread::sleep(Duration::from_millis(30));
        assert!(!fourth.is_finished());
        gate.store(true, Ordering::SeqCst);
        assert_eq!(fourth.join().unwrap(), 4);
        assert_eq!(e.stats().throttle.high_water, 3);
    }

    #[test]
    fn parallel_queues_drain_concurrently() {
        let (e, _) = quiet();
        let t = Instant::now();
        for i in 0..100 {
            e.enqueue(DeferredOp::new(OpKind::Write, vec![p(&format!("/q{}", i % 10))], || {
                std::thread::sleep(Duration::from_millis(1));
                Ok(())
            }))
            .unwrap();
        }
        e.drain_all();
        assert!(t.elapsed() < Duration::from_millis(60), "{:?}", t.elapsed());
    }

    #[test]
    fn idle_workers_retire() {
        let sink = MemorySink::new();
        let e = Engine::new(EngineConfig { idle_timeout: Duration::from_millis(10), sink, ..EngineConfig::default() });
        for i in 0..20 {
            e.enqueue(noop(OpKind::Write, &format!("/f{i}"))).unwrap();
        }
        e.quiesce();
        let deadline = Instant::now() + Duration::from_secs(2);
        while e.stats().workers > 0 && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(5));
        }
        assert_eq!(e.stats().workers, 0);
        e.enqueue(noop(OpKind::Write, "/again")).unwrap();
        e.barrier(&p("/again"));
        assert_eq!(e.watermark(&p("/again")).executed, 1);
    }
}
