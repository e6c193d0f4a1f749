//! Latency and fault injection around any store, plus an execution log.
//!
//! Each call sleeps its injected latency first, then consults the fault
//! rules, then executes against the wrapped store. A slow server that then
//! rejects is the modeled failure.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackingStore, StoreReply, StoreRequest, TreeDigest};
use crate::error::{FsError, FsResult};
use crate::kind::OpKind;
use crate::path::NormPath;

const KIND_COUNT: usize = OpKind::EAGER_CAPABLE.len() + OpKind::SYNCHRONOUS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Latency {
    #[default]
    Zero,
    Fixed(Duration),
    /// Uniform over `[lo, hi]`.
    Uniform(Duration, Duration),
}

impl Latency {
    pub fn fixed_ms(ms: f64) -> Latency {
        if ms <= 0.0 {
            Latency::Zero
        } else {
            Latency::Fixed(Duration::from_secs_f64(ms / 1000.0))
        }
    }

    fn sample(&self, rng: &Mutex<ChaCha8Rng>) -> Duration {
        match *self {
            Latency::Zero => Duration::ZERO,
            Latency::Fixed(d) => d,
            Latency::Uniform(lo, hi) if hi <= lo => lo,
            Latency::Uniform(lo, hi) => {
                let nanos = rng.lock().random_range(lo.as_nanos() as u64..=hi.as_nanos() as u64);
                Duration::from_nanos(nanos)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindSelector {
    All,
    /// Everything except read, write and fallocate.
    Metadata,
    Data,
    Kind(OpKind),
}

impl KindSelector {
    fn matches(&self, kind: OpKind) -> bool {
        match self {
            KindSelector::All => true,
            KindSelector::Metadata => kind.is_metadata(),
            KindSelector::Data => kind.is_data(),
            KindSelector::Kind(k) => *k == kind,
        }
    }
}

/// Per-kind latency distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyProfile {
    per_kind: [Latency; KIND_COUNT],
}

impl Default for LatencyProfile {
    fn default() -> Self {
        LatencyProfile::zero()
    }
}

impl LatencyProfile {
    pub fn zero() -> Self {
        LatencyProfile { per_kind: [Latency::Zero; KIND_COUNT] }
    }

    pub fn uniform_all(lat: Latency) -> Self {
        LatencyProfile { per_kind: [lat; KIND_COUNT] }
    }

    /// Fixed latency on metadata kinds only.
    pub fn metadata_ms(ms: f64) -> Self {
        LatencyProfile::zero().with(KindSelector::Metadata, Latency::fixed_ms(ms))
    }

    pub fn with(mut self, selector: KindSelector, lat: Latency) -> Self {
        for kind in OpKind::all() {
            if selector.matches(kind) {
                self.per_kind[kind as usize] = lat;
            }
        }
        self
    }

    pub fn get(&self, kind: OpKind) -> Latency {
        self.per_kind[kind as usize]
    }

    pub fn is_zero(&self) -> bool {
        self.per_kind.iter().all(|l| *l == Latency::Zero)
    }
}

/// Makes matching requests fail with a chosen error.
#[derive(Debug)]
pub struct FaultRule {
    kind: Option<OpKind>,
    path: Option<glob::Pattern>,
    nth: Option<u64>,
    error: FsError,
    persistent: bool,
    seen: AtomicU64,
    fired: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FaultSpecError {
    #[error("fault spec must look like KIND:GLOB[:NTH][=ERROR], got {0:?}")]
    Syntax(String),
    #[error("unknown operation kind {0:?}")]
    Kind(String),
    #[error("bad path glob {0:?}")]
    Glob(String),
    #[error("bad occurrence number {0:?}")]
    Nth(String),
    #[error("unknown error code {0:?}")]
    Error(String),
}

impl FaultRule {
    /// A one-shot rule matching every request; narrow it with the builder
    /// methods.
    pub fn new(error: FsError) -> Self {
        FaultRule {
            kind: None,
            path: None,
            nth: None,
            error,
            persistent: false,
            seen: AtomicU64::new(0),
            fired: AtomicU64::new(0),
        }
    }

    pub fn on_kind(mut self, kind: OpKind) -> Self {
        self.kind = Some(kind);
        self
    }

    /// Glob over normalized paths; `*` also crosses separators.
    pub fn on_path(mut self, pattern: &str) -> Result<Self, FaultSpecError> {
        self.path = Some(glob::Pattern::new(pattern).map_err(|_| FaultSpecError::Glob(pattern.into()))?);
        Ok(self)
    }

    /// Fire on the `n`th matching request (1-based) instead of the first.
    pub fn nth(mut self, n: u64) -> Self {
        self.nth = Some(n.max(1));
        self
    }

    /// Keep firing on every match from the `nth` onwards.
    pub fn persistent(mut self) -> Self {
        self.persistent = true;
        self
    }

    pub fn error(&self) -> FsError {
        self.error
    }

    pub fn fired(&self) -> u64 {
        self.fired.load(Ordering::SeqCst)
    }

    fn matches(&self, req: &StoreRequest) -> bool {
        if self.kind.is_some_and(|k| k != req.kind()) {
            return false;
        }
        match &self.path {
            None => true,
            Some(pat) => req.paths().iter().any(|p| pat.matches(p.as_str())),
        }
    }

    /// Records one matching occurrence and reports whether the rule fires.
    fn observe(&self) -> bool {
        let count = self.seen.fetch_add(1, Ordering::SeqCst) + 1;
        let nth = self.nth.unwrap_or(1);
        let fire = if self.persistent {
            count >= nth
        } else {
            count == nth
        };
        if fire {
            self.fired.fetch_add(1, Ordering::SeqCst);
        }
        fire
    }
}

impl FromStr for FaultRule {
    type Err = FaultSpecError;

    /// `KIND:GLOB[:NTH][=ERROR]`, with `*` as a wildcard kind. The error
    /// defaults to `IOFailure`.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let (body, err) = match spec.rsplit_once('=') {
            Some((b, e)) => {
                (b, FsError::from_code(e).ok_or_else(|| FaultSpecError::Error(e.into()))?)
            }
            None => (spec, FsError::IoFailure),
        };
        let mut parts = body.splitn(3, ':');
        let kind = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| FaultSpecError::Syntax(spec.into()))?;
        let glob = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| FaultSpecError::Syntax(spec.into()))?;
        let mut rule = FaultRule::new(err);
        if kind != "*" {
            rule = rule.on_kind(kind.parse().map_err(|_| FaultSpecError::Kind(kind.into()))?);
        }
        rule = rule.on_path(glob)?;
        if let Some(n) = parts.next() {
            rule = rule.nth(n.parse().map_err(|_| FaultSpecError::Nth(n.into()))?);
        }
        Ok(rule)
    }
}

#[derive(Debug, Clone)]
pub struct ExecEntry {
    pub request: StoreRequest,
    pub start: Instant,
    pub end: Option<Instant>,
    pub result: Option<Result<(), FsError>>,
}

impl ExecEntry {
    pub fn duration(&self) -> Option<Duration> {
        self.end.map(|e| e - self.start)
    }
}

/// Append-only record of executed requests, in execution-start order.
#[derive(Debug, Default)]
pub struct ExecLog {
    entries: Mutex<Vec<ExecEntry>>,
}

impl ExecLog {
    fn begin(&self, request: &StoreRequest) -> usize {
        let mut entries = self.entries.lock();
        entries.push(ExecEntry { request: request.clone(), start: Instant::now(), end: None, result: None });
        entries.len() - 1
    }

    fn finish(&self, slot: usize, result: Result<(), FsError>) {
        let mut entries = self.entries.lock();
        let e = &mut entries[slot];
        e.end = Some(Instant::now());
        e.result = Some(result);
    }

    pub fn entries(&self) -> Vec<ExecEntry> {
        self.entries.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.lock().clear();
    }

    pub fn count(&self, kind: OpKind) -> usize {
        self.entries.lock().iter().filter(|e| e.request.kind() == kind).count()
    }

    pub fn requests(&self) -> Vec<StoreRequest> {
        self.entries.lock().iter().map(|e| e.request.clone()).collect()
    }

    /// Requests touching `path`, in execution-start order.
    pub fn projection(&self, path: &NormPath, filter: impl Fn(&StoreRequest) -> bool) -> Vec<StoreRequest> {
        self.entries
            .lock()
            .iter()
            .filter(|e| e.request.touches(path) && filter(&e.request))
            .map(|e| e.request.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Enter,
    Exit,
}

/// Observer called on entry to and exit from every `apply`. Runs on the
/// calling thread, so it can block to pause execution.
pub type StoreHook = Arc<dyn Fn(&StoreRequest, Phase) + Send + Sync>;

/// A store wrapped with latency, faults, an execution log and a hook.
pub struct InjectedStore<S> {
    inner: S,
    latency: RwLock<LatencyProfile>,
    faults: RwLock<Vec<Arc<FaultRule>>>,
    log: ExecLog,
    logging: std::sync::atomic::AtomicBool,
    hook: RwLock<Option<StoreHook>>,
    rng: Mutex<ChaCha8Rng>,
}

impl<S: BackingStore> InjectedStore<S> {
    pub fn new(inner: S) -> Self {
        InjectedStore {
            inner,
            latency: RwLock::new(LatencyProfile::zero()),
            faults: RwLock::new(Vec::new()),
            log: ExecLog::default(),
            logging: std::sync::atomic::AtomicBool::new(true),
            hook: RwLock::new(None),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0x5eed)),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    /// Applies to subsequent calls.
    pub fn set_latency(&self, profile: LatencyProfile) {
        *self.latency.write() = profile;
    }

    pub fn latency(&self) -> LatencyProfile {
        self.latency.read().clone()
    }

    pub fn seed_latency(&self, seed: u64) {
        *self.rng.lock() = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Adds a rule; returns a handle for inspecting how often it fired.
    pub fn add_fault(&self, rule: FaultRule) -> Arc<FaultRule> {
        let rule = Arc::new(rule);
        self.faults.write().push(rule.clone());
        rule
    }

    pub fn clear_faults(&self) {
        self.faults.write().clear();
    }

    pub fn set_hook(&self, hook: Option<StoreHook>) {
        *self.hook.write() = hook;
    }

    pub fn log(&self) -> &ExecLog {
        &self.log
    }

    pub fn set_logging(&self, on: bool) {
        self.logging.store(on, Ordering::SeqCst);
    }

    fn injected_fault(&self, req: &StoreRequest) -> Option<FsError> {
        let faults = self.faults.read();
        let mut hit = None;
        for rule in faults.iter().filter(|r| r.matches(req)) {
            if hit.is_none() && rule.observe() {
                hit = Some(rule.error);
            } else if hit.is_some() {
                rule.seen.fetch_add(1, Ordering::SeqCst);
            }
        }
        hit
    }
}

impl InjectedStore<super::MemTree> {
    /// An instrumented in-memory store.
    pub fn fake() -> Self {
        InjectedStore::new(super::MemTree::new())
    }
}

impl<S: BackingStore> BackingStore for InjectedStore<S> {
    fn apply(&self, req: &StoreRequest) -> FsResult<StoreReply> {
        let hook = self.hook.read().clone();
        if let Some(h) = &hook {
            h(req, Phase::Enter);
        }
        let slot = self.logging.load(Ordering::SeqCst).then(|| self.log.begin(req));
        let delay = self.latency.read().get(req.kind()).sample(&self.rng);
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        let result = match self.injected_fault(req) {
            Some(err) => Err(err),
            None => self.inner.apply(req),
        };
        if let Some(slot) = slot {
            self.log.finish(slot, result.as_ref().map(|_| ()).map_err(|e| *e));
        }
        if let Some(h) = &hook {
            h(req, Phase::Exit);
        }
        result
    }

    fn snapshot_tree(&self) -> TreeDigest {
        self.inner.snapshot_tree()
    }

    fn drop_caches(&self) {
        self.inner.drop_caches()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::p;
    use crate::store::MemTree;

    fn unlink(path: &str) -> StoreRequest {
        StoreRequest::Unlink { path: p(path) }
    }

    fn create(path: &str) -> StoreRequest {
        StoreRequest::Create { path: p(path), mode: 0o644, truncate: true, exclusive: false }
    }

    #[test]
    fn one_shot_rule_fires_once() {
        let s = InjectedStore::fake();
        s.apply(&create("/f")).unwrap();
        let rule = s.add_fault(
            FaultRule::new(FsError::PermissionDenied).on_kind(OpKind::Unlink).on_path("/f").unwrap(),
        );
        assert_eq!(s.apply(&unlink("/f")), Err(FsError::PermissionDenied));
        assert_eq!(s.apply(&unlink("/f")), Ok(StoreReply::Done));
        assert_eq!(rule.fired(), 1);
    }

    #[test]
    fn nth_and_persistent_rules() {
        let s = InjectedStore::fake();
        s.add_fault(FaultRule::new(FsError::QuotaExceeded).on_kind(OpKind::Create).nth(2).persistent());
        assert!(s.apply(&create("/a")).is_ok());
        assert_eq!(s.apply(&create("/b")), Err(FsError::QuotaExceeded));
        assert_eq!(s.apply(&create("/c")), Err(FsError::QuotaExceeded));
    }

    #[test]
    fn fault_spec_parsing() {
        let r: FaultRule = "unlink:/d/*:3=PermissionDenied".parse().unwrap();
        assert_eq!(r.kind, Some(OpKind::Unlink));
        assert_eq!(r.nth, Some(3));
        assert_eq!(r.error, FsError::PermissionDenied);
        assert!(r.matches(&unlink("/d/x/y")));
        assert!(!r.matches(&unlink("/e/x")));
        let r: FaultRule = "*:/x".parse().unwrap();
        assert_eq!(r.error, FsError::IoFailure);
        assert!(r.matches(&create("/x")));
        assert!("unlink".parse::<FaultRule>().is_err());
        assert!("bogus:/x".parse::<FaultRule>().is_err());
        assert!("unlink:/x=Nope".parse::<FaultRule>().is_err());
    }

    #[test]
    fn latency_is_applied_before_execution() {
        let s = InjectedStore::fake();
        s.set_latency(LatencyProfile::uniform_all(Latency::fixed_ms(5.0)));
        let t = Instant::now();
        s.apply(&StoreRequest::Mkdir { path: p("/d"), mode: 0o755 }).unwrap();
        assert!(t.elapsed() >= Duration::from_millis(5));
        let e = &s.log().entries()[0];
        assert!(e.duration().unwrap() >= Duration::from_millis(5));
    }

    #[test]
    fn zero_latency_adds_no_sleep() {
        let s = InjectedStore::fake();
        let t = Instant::now();
        for i in 0..200 {
            s.apply(&StoreRequest::Mkdir { path: p(&format!("/d{i}")), mode: 0o755 }).unwrap();
        }
        assert!(t.elapsed() < Duration::from_millis(200));
    }

    #[test]
    fn metadata_latency_leaves_writes_alone() {
        let prof = LatencyProfile::metadata_ms(2.0);
        assert_eq!(prof.get(OpKind::Write), Latency::Zero);
        assert_eq!(prof.get(OpKind::Read), Latency::Zero);
        assert_eq!(prof.get(OpKind::Create), Latency::fixed_ms(2.0));
        assert_eq!(prof.get(OpKind::Getattr), Latency::fixed_ms(2.0));

        let s = InjectedStore::new(MemTree::new());
        s.set_latency(prof);
        s.apply(&create("/f")).unwrap();
        let t = Instant::now();
        for i in 0..100 {
            s.apply(&StoreRequest::Write { path: p("/f"), offset: i, data: bytes::Bytes::from_static(b"x") })
                .unwrap();
        }
        assert!(t.elapsed() < Duration::from_millis(100));
    }

    #[test]
    fn hook_sees_enter_and_exit() {
        let s = InjectedStore::fake();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink = seen.clone();
        s.set_hook(Some(Arc::new(move |r: &StoreRequest, ph| sink.lock().push((r.kind(), ph)))));
        s.apply(&create("/f")).unwrap();
        assert_eq!(*seen.lock(), [(OpKind::Create, Phase::Enter), (OpKind::Create, Phase::Exit)]);
    }
}
