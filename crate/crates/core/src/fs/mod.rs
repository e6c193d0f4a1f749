//! Filesystem operations over a backing store.
//!
//! [`EagerFs`] is the layer a kernel bridge or a benchmark drives. Each
//! mutation consults the [`EagerPolicy`]: eager kinds are queued on the
//! [`Engine`] and acknowledged at once; the rest wait for pending work on the
//! affected paths and run synchronously. Reads always wait for earlier
//! writes to the same path.
//!
//! ```
//! use std::sync::Arc;
//! use eagerfs::fs::{EagerFs, EagerPolicy, OpenFlags};
//! use eagerfs::path::p;
//! use eagerfs::store::MemTree;
//!
//! let fs = EagerFs::new(Arc::new(MemTree::new()), EagerPolicy::default());
//! let fh = fs.open(&p("/hello"), OpenFlags::create(0o644)).unwrap();
//! assert_eq!(fs.write_handle(fh, 0, b"hi there").unwrap(), 8);
//! assert_eq!(fs.getattr(&p("/hello")).unwrap().size, 8);
//! fs.release(fh).unwrap();
//! assert_eq!(&fs.read(&p("/hello"), 0, 2).unwrap()[..], b"hi");
//! assert!(fs.drain().is_empty());
//! ```
//!
//! An acknowledged `fsync` only means the request was queued. It carries no
//! durability guarantee until the engine has drained.

mod attr_cache;
mod policy;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::SystemTime;

use bytes::Bytes;
use parking_lot::Mutex;

use crate::engine::{
    DeferredOp, DiagnosticSink, Engine, EngineConfig, EngineStats, FenceScope, LedgerSummary,
};
use crate::error::{FsError, FsResult};
use crate::kind::OpKind;
use crate::path::NormPath;
use crate::store::{
    current_owner, AttrRecord, BackingStore, DirEntry, FileKind, StatFs, StoreReply, StoreRequest,
    FALLOC_KEEP_SIZE,
};

pub use attr_cache::{synthesize, AttrCache, AttrSource, CachedAttr, Ticket};
pub use policy::EagerPolicy;

/// Opaque open-file handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Handle(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpenFlags {
    pub write: bool,
    pub create: bool,
    pub truncate: bool,
    pub exclusive: bool,
    /// Permission bits for a created file.
    pub mode: u32,
}

impl OpenFlags {
    pub fn read_only() -> Self {
        OpenFlags::default()
    }

    pub fn write_only() -> Self {
        OpenFlags { write: true, ..OpenFlags::default() }
    }

    /// `O_WRONLY | O_CREAT | O_TRUNC`.
    pub fn create(mode: u32) -> Self {
        OpenFlags { write: true, create: true, truncate: true, exclusive: false, mode }
    }

    /// Decodes POSIX `open(2)` flags.
    pub fn from_posix(flags: i32, mode: u32) -> Self {
        OpenFlags {
            write: flags & libc::O_ACCMODE != libc::O_RDONLY,
            create: flags & libc::O_CREAT != 0,
            truncate: flags & libc::O_TRUNC != 0,
            exclusive: flags & libc::O_EXCL != 0,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FsStats {
    pub engine: EngineStats,
    pub cached_attrs: usize,
    pub open_handles: usize,
}

#[derive(Default)]
struct HandleTable {
    next: AtomicU64,
    open: Mutex<HashMap<u64, (NormPath, OpenFlags)>>,
}

impl HandleTable {
    fn insert(&self, path: NormPath, flags: OpenFlags) -> Handle {
        let id = self.next.fetch_add(1, Ordering::SeqCst) + 1;
        self.open.lock().insert(id, (path, flags));
        Handle(id)
    }

    fn path(&self, fh: Handle) -> FsResult<NormPath> {
        self.open.lock().get(&fh.0).map(|(p, _)| p.clone()).ok_or(FsError::InvalidArgument)
    }

    fn remove(&self, fh: Handle) -> FsResult<NormPath> {
        self.open.lock().remove(&fh.0).map(|(p, _)| p).ok_or(FsError::InvalidArgument)
    }

    fn rebase(&self, from: &NormPath, to: &NormPath) {
        for (path, _) in self.open.lock().values_mut() {
            if let Some(moved) = path.rebase(from, to) {
                *path = moved;
            }
        }
    }
}

/// Eager passthrough over a backing store.
pub struct EagerFs<S: BackingStore> {
    store: Arc<S>,
    engine: Engine,
    policy: EagerPolicy,
    cache: Arc<AttrCache>,
    handles: HandleTable,
    owner: (u32, u32),
}

impl<S: BackingStore> std::fmt::Debug for EagerFs<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EagerFs").field("policy", &self.policy).field("engine", &self.engine).finish()
    }
}

impl<S: BackingStore> EagerFs<S> {
    /// Diagnostics go to standard error.
    pub fn new(store: Arc<S>, policy: EagerPolicy) -> Self {
        EagerFs::with_engine_config(store, policy, EngineConfig::default())
    }

    pub fn with_sink(store: Arc<S>, policy: EagerPolicy, sink: Arc<dyn DiagnosticSink>) -> Self {
        EagerFs::with_engine_config(store, policy, EngineConfig { sink, ..EngineConfig::default() })
    }

    /// `max_pending` and `abort_on_error` are taken from the policy.
    pub fn with_engine_config(store: Arc<S>, policy: EagerPolicy, cfg: EngineConfig) -> Self {
        let cfg = EngineConfig { max_pending: policy.max_pending, abort_on_error: policy.abort_on_error, ..cfg };
        EagerFs {
            store,
            engine: Engine::new(cfg),
            policy,
            cache: Arc::new(AttrCache::new()),
            handles: HandleTable::default(),
            owner: current_owner(),
        }
    }

    pub fn store(&self) -> &Arc<S> {
        &self.store
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn policy(&self) -> &EagerPolicy {
        &self.policy
    }

    pub fn attr_cache(&self) -> &AttrCache {
        &self.cache
    }

    pub fn stats(&self) -> FsStats {
        FsStats {
            engine: self.engine.stats(),
            cached_attrs: self.cache.len(),
            open_handles: self.handles.open.lock().len(),
        }
    }

    /// Flushes everything and reports the ledger. Later calls fail.
    pub fn drain(&self) -> LedgerSummary {
        self.engine.drain_all()
    }

    fn live(&self) -> FsResult<()> {
        if self.engine.is_aborted() {
            Err(FsError::IoFailure)
        } else {
            Ok(())
        }
    }

    fn wait_for(&self, req: &StoreRequest) {
        let scope = match req.kind() {
            OpKind::Rmdir | OpKind::Rename => FenceScope::Subtree,
            _ => FenceScope::WithAncestors,
        };
        self.engine.fence(&req.paths(), scope);
    }

    /// Queues or runs one mutation. Eager replies are synthesized.
    fn mutate(&self, req: StoreRequest) -> FsResult<StoreReply> {
        self.live()?;
        if self.policy.is_eager(req.kind()) {
            let reply = match &req {
                StoreRequest::Write { data, .. } => StoreReply::Written(data.len()),
                _ => StoreReply::Done,
            };
            let store = self.store.clone();
            let exec = req.clone();
            self.engine.enqueue(DeferredOp::for_request(req.clone(), move || store.apply(&exec).map(|_| ())))?;
            self.note_eager(&req);
            Ok(reply)
        } else {
            self.wait_for(&req);
            let result = self.store.apply(&req);
            self.note_sync(&req);
            result
        }
    }

    /// Optimistic cache update for a queued mutation.
    fn note_eager(&self, req: &StoreRequest) {
        use StoreRequest as R;
        let c = &self.cache;
        if !self.policy.mock_attr {
            for p in req.paths() {
                c.invalidate(&p);
            }
            if let R::Rename { from, to } = req {
                c.invalidate_subtree(from);
                c.invalidate_subtree(to);
            }
            return;
        }
        let now = SystemTime::now();
        match req {
            R::Create { path, mode, truncate, exclusive } => {
                if *exclusive || c.known_absent(path) {
                    c.synthesize(path, synthesize(FileKind::File, *mode, 0, self.owner));
                } else if !c.update(path, |a| {
                    if *truncate {
                        a.size = 0;
                    }
                    a.mtime = now;
                }) {
                    c.invalidate(path);
                }
            }
            R::Open { path, .. } | R::Truncate { path, size: 0 } => {
                if !c.update(path, |a| {
                    a.size = 0;
                    a.mtime = now;
                }) {
                    c.invalidate(path);
                }
            }
            R::Truncate { path, size } => {
                if !c.update(path, |a| {
                    a.size = *size;
                    a.mtime = now;
                }) {
                    c.invalidate(path);
                }
            }
            R::Write { path, offset, data } => {
                let end = offset + data.len() as u64;
                c.update(path, |a| {
                    a.size = a.size.max(end);
                    a.mtime = now;
                });
            }
            R::Fallocate { path, offset, len, mode } => {
                let end = offset + len;
                c.update(path, |a| {
                    if mode & FALLOC_KEEP_SIZE == 0 {
                        a.size = a.size.max(end);
                    }
                });
            }
            R::Mkdir { path, mode } => c.synthesize(path, synthesize(FileKind::Dir, *mode, 0, self.owner)),
            R::Mknod { path, mode, .. } => c.synthesize(path, synthesize(FileKind::File, *mode, 0, self.owner)),
            R::Symlink { target, link } => {
                c.synthesize(link, synthesize(FileKind::Symlink, 0o777, target.len() as u64, self.owner))
            }
            R::Rmdir { path } | R::Unlink { path } => c.mark_absent(path),
            R::Rename { from, to } => c.rename(from, to),
            R::Link { existing, new } => {
                c.invalidate(existing);
                c.invalidate(new);
            }
            R::Chmod { path, mode } => {
                c.update(path, |a| {
                    a.mode = (a.mode & libc::S_IFMT) | (mode & 0o7777);
                    a.ctime = now;
                });
            }
            R::Chown { path, uid, gid } => {
                c.update(path, |a| {
                    if let Some(u) = uid {
                        a.uid = *u;
                    }
                    if let Some(g) = gid {
                        a.gid = *g;
                    }
                    a.ctime = now;
                });
            }
            R::Utimens { path, atime, mtime } => {
                c.update(path, |a| {
                    if let Some(t) = atime {
                        a.atime = *t;
                    }
                    if let Some(t) = mtime {
                        a.mtime = *t;
                    }
                    a.ctime = now;
                });
            }
            R::Setxattr { .. } | R::Removexattr { .. } | R::Flush { .. } | R::Release { .. } | R::Fsync { .. } => {}
            R::Read { .. }
            | R::Readdir { .. }
            | R::Getattr { .. }
            | R::Readlink { .. }
            | R::Statfs { .. }
            | R::Getxattr { .. }
            | R::Listxattr { .. } => {}
        }
        self.rebind_handles(req);
    }

    /// Cache upkeep after a mutation ran synchronously.
    fn note_sync(&self, req: &StoreRequest) {
        match req {
            StoreRequest::Flush { .. } | StoreRequest::Release { .. } | StoreRequest::Fsync { .. } => {}
            StoreRequest::Rename { from, to } => {
                self.cache.invalidate_subtree(from);
                self.cache.invalidate_subtree(to);
            }
            _ => {
                for p in req.paths() {
                    self.cache.invalidate(&p);
                }
            }
        }
        self.rebind_handles(req);
    }

    fn rebind_handles(&self, req: &StoreRequest) {
        if let StoreRequest::Rename { from, to } = req {
            self.handles.rebase(from, to);
        }
    }

    /// Synchronous passthrough after waiting for the path and its ancestors.
    fn query(&self, req: StoreRequest) -> FsResult<StoreReply> {
        self.live()?;
        self.engine.fence(&req.paths(), FenceScope::WithAncestors);
        self.store.apply(&req)
    }

    // ---- attribute and namespace queries ----

    pub fn getattr(&self, path: &NormPath) -> FsResult<AttrRecord> {
        self.live()?;
        if self.policy.mock_attr {
            if let Some(c) = self.cache.get(path) {
                return Ok(c.attr);
            }
        }
        self.engine.fence(std::slice::from_ref(path), FenceScope::WithAncestors);
        if !self.policy.mock_attr {
            return self.store.apply(&StoreRequest::Getattr { path: path.clone() })?.into_attr();
        }
        if let Some(c) = self.cache.get(path) {
            return Ok(c.attr);
        }
        let ticket = self.cache.ticket(path);
        match self.store.apply(&StoreRequest::Getattr { path: path.clone() }) {
            Ok(reply) => {
                let attr = reply.into_attr()?;
                self.cache.insert_if_current(path, ticket, attr.clone());
                Ok(attr)
            }
            Err(FsError::NotFound) => {
                self.cache.note_missing(path, ticket);
                Err(FsError::NotFound)
            }
            Err(e) => Err(e),
        }
    }

    /// Lists a directory once everything pending inside it has run. With
    /// attribute mocking on, attributes of the entries are fetched in the
    /// background.
    pub fn readdir(&self, path: &NormPath) -> FsResult<Vec<DirEntry>> {
        self.live()?;
        self.engine.fence(std::slice::from_ref(path), FenceScope::Subtree);
        let entries = self.store.apply(&StoreRequest::Readdir { path: path.clone() })?.into_entries()?;
        if self.policy.mock_attr {
            for e in &entries {
                let Ok(child) = path.join(&e.name) else { continue };
                if self.cache.contains(&child) {
                    continue;
                }
                let ticket = self.cache.ticket(&child);
                let (store, cache, target) = (self.store.clone(), self.cache.clone(), child.clone());
                let prefetch = DeferredOp::new(OpKind::Getattr, vec![child], move || {
                    if let Ok(StoreReply::Attr(attr)) = store.apply(&StoreRequest::Getattr { path: target.clone() }) {
                        cache.insert_if_current(&target, ticket, attr);
                    }
                    Ok(())
                });
                if self.engine.enqueue(prefetch).is_err() {
                    break;
                }
            }
        }
        Ok(entries)
    }

    pub fn readlink(&self, path: &NormPath) -> FsResult<String> {
        self.query(StoreRequest::Readlink { path: path.clone() })?.into_target()
    }

    pub fn statfs(&self, path: &NormPath) -> FsResult<StatFs> {
        self.live()?;
        self.store.apply(&StoreRequest::Statfs { path: path.clone() })?.into_statfs()
    }

    pub fn getxattr(&self, path: &NormPath, name: &str) -> FsResult<Bytes> {
        self.query(StoreRequest::Getxattr { path: path.clone(), name: name.to_owned() })?.into_value()
    }

    pub fn listxattr(&self, path: &NormPath) -> FsResult<Vec<String>> {
        self.query(StoreRequest::Listxattr { path: path.clone() })?.into_names()
    }

    // ---- file data ----

    /// Creating and truncating opens follow their eager flags; any other
    /// open waits for pending work and opens for real.
    pub fn open(&self, path: &NormPath, flags: OpenFlags) -> FsResult<Handle> {
        if flags.create {
            self.mutate(StoreRequest::Create {
                path: path.clone(),
                mode: flags.mode,
                truncate: flags.truncate,
                exclusive: flags.exclusive,
            })?;
        } else if flags.truncate {
            self.mutate(StoreRequest::Open { path: path.clone(), write: true, truncate: true })?;
        } else {
            self.query(StoreRequest::Open { path: path.clone(), write: flags.write, truncate: false })?;
        }
        Ok(self.handles.insert(path.clone(), flags))
    }

    /// Path a handle is currently bound to.
    pub fn handle_path(&self, fh: Handle) -> FsResult<NormPath> {
        self.handles.path(fh)
    }

    pub fn read(&self, path: &NormPath, offset: u64, size: u32) -> FsResult<Bytes> {
        self.query(StoreRequest::Read { path: path.clone(), offset, size })?.into_data()
    }

    pub fn read_handle(&self, fh: Handle, offset: u64, size: u32) -> FsResult<Bytes> {
        self.read(&self.handles.path(fh)?, offset, size)
    }

    /// The payload is copied before this returns.
    pub fn write(&self, path: &NormPath, offset: u64, data: &[u8]) -> FsResult<usize> {
        let req = StoreRequest::Write { path: path.clone(), offset, data: Bytes::copy_from_slice(data) };
        match self.mutate(req)? {
            StoreReply::Written(n) => Ok(n),
            _ => Ok(data.len()),
        }
    }

    pub fn write_handle(&self, fh: Handle, offset: u64, data: &[u8]) -> FsResult<usize> {
        self.write(&self.handles.path(fh)?, offset, data)
    }

    pub fn truncate(&self, path: &NormPath, size: u64) -> FsResult<()> {
        self.mutate(StoreRequest::Truncate { path: path.clone(), size }).map(drop)
    }

    pub fn flush(&self, fh: Handle) -> FsResult<()> {
        let path = self.handles.path(fh)?;
        self.mutate(StoreRequest::Flush { path }).map(drop)
    }

    /// Closes the handle.
    pub fn release(&self, fh: Handle) -> FsResult<()> {
        let path = self.handles.remove(fh)?;
        self.mutate(StoreRequest::Release { path }).map(drop)
    }

    /// When eager, acknowledges without any durability guarantee.
    pub fn fsync(&self, fh: Handle, datasync: bool) -> FsResult<()> {
        let path = self.handles.path(fh)?;
        self.mutate(StoreRequest::Fsync { path, datasync }).map(drop)
    }

    pub fn fallocate(&self, path: &NormPath, offset: u64, len: u64, mode: u32) -> FsResult<()> {
        self.mutate(StoreRequest::Fallocate { path: path.clone(), offset, len, mode }).map(drop)
    }

    // ---- namespace ----

    pub fn mkdir(&self, path: &NormPath, mode: u32) -> FsResult<()> {
        self.mutate(StoreRequest::Mkdir { path: path.clone(), mode }).map(drop)
    }

    pub fn rmdir(&self, path: &NormPath) -> FsResult<()> {
        self.mutate(StoreRequest::Rmdir { path: path.clone() }).map(drop)
    }

    pub fn unlink(&self, path: &NormPath) -> FsResult<()> {
        self.mutate(StoreRequest::Unlink { path: path.clone() }).map(drop)
    }

    pub fn rename(&self, from: &NormPath, to: &NormPath) -> FsResult<()> {
        self.mutate(StoreRequest::Rename { from: from.clone(), to: to.clone() }).map(drop)
    }

    pub fn symlink(&self, target: &str, link: &NormPath) -> FsResult<()> {
        self.mutate(StoreRequest::Symlink { target: target.to_owned(), link: link.clone() }).map(drop)
    }

    pub fn link(&self, existing: &NormPath, new: &NormPath) -> FsResult<()> {
        self.mutate(StoreRequest::Link { existing: existing.clone(), new: new.clone() }).map(drop)
    }

    pub fn mknod(&self, path: &NormPath, mode: u32, rdev: u64) -> FsResult<()> {
        self.mutate(StoreRequest::Mknod { path: path.clone(), mode, rdev }).map(drop)
    }

    // ---- metadata ----

    pub fn chmod(&self, path: &NormPath, mode: u32) -> FsResult<()> {
        self.mutate(StoreRequest::Chmod { path: path.clone(), mode }).map(drop)
    }

    pub fn chown(&self, path: &NormPath, uid: Option<u32>, gid: Option<u32>) -> FsResult<()> {
        self.mutate(StoreRequest::Chown { path: path.clone(), uid, gid }).map(drop)
    }

    pub fn utimens(&self, path: &NormPath, atime: Option<SystemTime>, mtime: Option<SystemTime>) -> FsResult<()> {
        self.mutate(StoreRequest::Utimens { path: path.clone(), atime, mtime }).map(drop)
    }

    pub fn setxattr(&self, path: &NormPath, name: &str, value: &[u8], flags: u32) -> FsResult<()> {
        self.mutate(StoreRequest::Setxattr {
            path: path.clone(),
            name: name.to_owned(),
            value: Bytes::copy_from_slice(value),
            flags,
        })
        .map(drop)
    }

    pub fn removexattr(&self, path: &NormPath, name: &str) -> FsResult<()> {
        self.mutate(StoreRequest::Removexattr { path: path.clone(), name: name.to_owned() }).map(drop)
    }
}
