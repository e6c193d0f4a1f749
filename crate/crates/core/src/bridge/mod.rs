//! FUSE front end.
//!
//! The kernel speaks in inode numbers; [`InodeTable`] turns them back into
//! paths for [`EagerFs`]. Calls that the policy acknowledges eagerly run on
//! the session thread, so they enter the engine in arrival order. Anything
//! that may block on the store runs on a worker pool so the session keeps
//! reading requests.

mod inodes;

use std::collections::HashMap;
use std::ffi::OsStr;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime};

use fuser::{
    FileAttr, FileType, Filesystem, KernelConfig, MountOption, ReplyAttr, ReplyCreate, ReplyData, ReplyDirectory,
    ReplyEmpty, ReplyEntry, ReplyOpen, ReplyStatfs, ReplyWrite, ReplyXattr, Request, Session, SessionUnmounter,
    TimeOrNow,
};
use parking_lot::{Condvar, Mutex};

pub use inodes::{InodeTable, ROOT_INO};

use crate::engine::{DiagnosticSink, EngineConfig, LedgerSummary, StderrSink};
use crate::error::{FsError, FsResult};
use crate::fs::{EagerFs, EagerPolicy, FsStats, Handle, OpenFlags};
use crate::kind::OpKind;
use crate::path::NormPath;
use crate::store::{AttrRecord, BackingStore, FileKind, LocalStore};

const TTL: Duration = Duration::from_secs(1);
const POOL_THREADS: usize = 16;

/// Host error number for a semantic error.
pub fn translate_error(err: FsError) -> i32 {
    match err {
        FsError::NotFound => libc::ENOENT,
        FsError::PermissionDenied => libc::EACCES,
        FsError::QuotaExceeded => libc::EDQUOT,
        FsError::NotADirectory => libc::ENOTDIR,
        FsError::IsADirectory => libc::EISDIR,
        FsError::AlreadyExists => libc::EEXIST,
        FsError::NotEmpty => libc::ENOTEMPTY,
        FsError::InvalidArgument => libc::EINVAL,
        FsError::NotSupported => libc::EOPNOTSUPP,
        FsError::NoAttribute => libc::ENODATA,
        FsError::CrossDevice => libc::EXDEV,
        FsError::IoFailure => libc::EIO,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MountConfig {
    pub source: PathBuf,
    pub mountpoint: PathBuf,
    pub policy: EagerPolicy,
    /// Ask the kernel for the largest write size it supports.
    pub big_writes: bool,
    /// Serve on the calling thread instead of in the background.
    pub foreground: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum MountError {
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("source and mount point must be distinct and not nested")]
    Overlap,
    #[error("cannot open source: {0}")]
    Source(FsError),
    #[error("mount failed: {0}")]
    Io(#[from] io::Error),
}

impl MountConfig {
    pub fn new(source: impl Into<PathBuf>, mountpoint: impl Into<PathBuf>) -> Self {
        MountConfig {
            source: source.into(),
            mountpoint: mountpoint.into(),
            policy: EagerPolicy::default(),
            big_writes: true,
            foreground: false,
        }
    }

    pub fn with_policy(mut self, policy: EagerPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Both paths must be existing directories, and neither may contain
    /// the other.
    pub fn validate(&self) -> Result<(), MountError> {
        let canon = |p: &Path| match std::fs::canonicalize(p) {
            Ok(c) if c.is_dir() => Ok(c),
            _ => Err(MountError::NotADirectory(p.to_owned())),
        };
        let src = canon(&self.source)?;
        let mnt = canon(&self.mountpoint)?;
        if src.starts_with(&mnt) || mnt.starts_with(&src) {
            return Err(MountError::Overlap);
        }
        Ok(())
    }

    fn options(&self) -> Vec<MountOption> {
        vec![
            MountOption::FSName(format!("eagerfs:{}", self.source.display())),
            MountOption::Subtype("eagerfs".into()),
            MountOption::RW,
        ]
    }
}

/// Counts pool jobs so teardown can wait for them.
#[derive(Default)]
struct InFlight {
    count: Mutex<usize>,
    idle: Condvar,
}

impl InFlight {
    fn begin(&self) {
        *self.count.lock() += 1;
    }

    fn end(&self) {
        let mut n = self.count.lock();
        *n -= 1;
        if *n == 0 {
            self.idle.notify_all();
        }
    }

    fn wait_idle(&self) {
        let mut n = self.count.lock();
        while *n > 0 {
            self.idle.wait(&mut n);
        }
    }
}

type Listing = Vec<(u64, FileType, String)>;

struct Shared<S: BackingStore> {
    fs: Arc<EagerFs<S>>,
    inodes: Mutex<InodeTable>,
    listings: Mutex<HashMap<u64, Option<Listing>>>,
    next_dir_handle: Mutex<u64>,
    in_flight: InFlight,
    summary: Mutex<Option<LedgerSummary>>,
}

impl<S: BackingStore> Shared<S> {
    fn path(&self, ino: u64) -> FsResult<NormPath> {
        self.inodes.lock().path(ino).ok_or(FsError::NotFound)
    }

    fn child(&self, parent: u64, name: &OsStr) -> FsResult<NormPath> {
        let name = name.to_str().ok_or(FsError::InvalidArgument)?;
        self.path(parent)?.join(name).map_err(|_| FsError::InvalidArgument)
    }

    fn file_attr(&self, path: &NormPath, attr: &AttrRecord) -> FileAttr {
        let ino = self.inodes.lock().ino(path);
        to_file_attr(ino, attr)
    }

    fn lookup_attr(&self, path: &NormPath) -> FsResult<FileAttr> {
        let attr = self.fs.getattr(path)?;
        Ok(self.file_attr(path, &attr))
    }

    fn teardown(&self) -> LedgerSummary {
        self.in_flight.wait_idle();
        let mut slot = self.summary.lock();
        slot.get_or_insert_with(|| self.fs.drain()).clone()
    }
}

fn file_type(kind: FileKind, mode: u32) -> FileType {
    match kind {
        FileKind::File => FileType::RegularFile,
        FileKind::Dir => FileType::Directory,
        FileKind::Symlink => FileType::Symlink,
        FileKind::Other => match mode & libc::S_IFMT {
            libc::S_IFIFO => FileType::NamedPipe,
            libc::S_IFCHR => FileType::CharDevice,
            libc::S_IFBLK => FileType::BlockDevice,
            libc::S_IFSOCK => FileType::Socket,
            _ => FileType::RegularFile,
        },
    }
}

fn to_file_attr(ino: u64, a: &AttrRecord) -> FileAttr {
    FileAttr {
        ino,
        size: a.size,
        blocks: a.size.div_ceil(512),
        atime: a.atime,
        mtime: a.mtime,
        ctime: a.ctime,
        crtime: a.ctime,
        kind: file_type(a.kind, a.mode),
        perm: a.perm() as u16,
        nlink: a.nlink,
        uid: a.uid,
        gid: a.gid,
        rdev: 0,
        blksize: 4096,
        flags: 0,
    }
}

fn time_or_now(t: TimeOrNow) -> SystemTime {
    match t {
        TimeOrNow::SpecificTime(t) => t,
        TimeOrNow::Now => SystemTime::now(),
    }
}

/// The [`fuser::Filesystem`] implementation.
pub struct Bridge<S: BackingStore> {
    shared: Arc<Shared<S>>,
    pool: rayon::ThreadPool,
    big_writes: bool,
}

impl<S: BackingStore> Bridge<S> {
    pub fn new(fs: Arc<EagerFs<S>>, big_writes: bool) -> Self {
        let shared = Arc::new(Shared {
            fs,
            inodes: Mutex::new(InodeTable::default()),
            listings: Mutex::new(HashMap::new()),
            next_dir_handle: Mutex::new(1),
            in_flight: InFlight::default(),
            summary: Mutex::new(None),
        });
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(POOL_THREADS)
            .thread_name(|i| format!("eagerfs-bridge-{i}"))
            .build()
            .expect("thread pool");
        Bridge { shared, pool, big_writes }
    }

    /// Runs `f` on the session thread when `kind` is acknowledged eagerly,
    /// otherwise on the pool.
    fn dispatch<F>(&self, kind: Option<OpKind>, f: F)
    where
        F: FnOnce(&Shared<S>) + Send + 'static,
    {
        if kind.is_some_and(|k| self.shared.fs.policy().is_eager(k)) {
            f(&self.shared);
            return;
        }
        let shared = self.shared.clone();
        shared.in_flight.begin();
        self.pool.spawn(move || {
            f(&shared);
            shared.in_flight.end();
        });
    }
}

macro_rules! tri {
    ($reply:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return $reply.error(translate_error(err)),
        }
    };
}

impl<S: BackingStore> Filesystem for Bridge<S> {
    fn init(&mut self, _req: &Request<'_>, config: &mut KernelConfig) -> Result<(), libc::c_int> {
        let size = if self.big_writes { u32::MAX } else { 4096 };
        if let Err(max) = config.set_max_write(size) {
            let _ = config.set_max_write(max);
        }
        Ok(())
    }

    fn destroy(&mut self) {
        self.shared.teardown();
    }

    fn lookup(&mut self, _req: &Request<'_>, parent: u64, name: &OsStr, reply: ReplyEntry) {
        let name = name.to_owned();
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.child(parent, &name));
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.entry(&TTL, &attr, 0);
        });
    }

    fn getattr(&mut self, _req: &Request<'_>, ino: u64, _fh: Option<u64>, reply: ReplyAttr) {
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.path(ino));
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.attr(&TTL, &attr);
        });
    }

    fn setattr(
        &mut self,
        _req: &Request<'_>,
        ino: u64,
        mode: Option<u32>,
        uid: Option<u32>,
        gid: Option<u32>,
        size: Option<u64>,
        atime: Option<TimeOrNow>,
        mtime: Option<TimeOrNow>,
        _ctime: Option<SystemTime>,
        _fh: Option<u64>,
        _crtime: Option<SystemTime>,
        _chgtime: Option<SystemTime>,
        _bkuptime: Option<SystemTime>,
        _flags: Option<u32>,
        reply: ReplyAttr,
    ) {
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.path(ino));
            if let Some(mode) = mode {
                tri!(reply, s.fs.chmod(&path, mode & 0o7777));
            }
            if uid.is_some() || gid.is_some() {
                tri!(reply, s.fs.chown(&path, uid, gid));
            }
            if let Some(size) = size {
                tri!(reply, s.fs.truncate(&path, size));
            }
            if atime.is_some() || mtime.is_some() {
                tri!(reply, s.fs.utimens(&path, atime.map(time_or_now), mtime.map(time_or_now)));
            }
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.attr(&TTL, &attr);
        });
    }

    fn readlink(&mut self, _req: &Request<'_>, ino: u64, reply: ReplyData) {
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.path(ino));
            let target = tri!(reply, s.fs.readlink(&path));
            reply.data(target.as_bytes());
        });
    }

    fn mknod(
        &mut self,
        _req: &Request<'_>,
        parent: u64,
        name: &OsStr,
        mode: u32,
        umask: u32,
        rdev: u32,
        reply: ReplyEntry,
    ) {
        let name = name.to_owned();
        self.dispatch(Some(OpKind::Mknod), move |s| {
            let path = tri!(reply, s.child(parent, &name));
            tri!(reply, s.fs.mknod(&path, mode & !(umask & 0o7777), rdev.into()));
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.entry(&TTL, &attr, 0);
        });
    }

    fn mkdir(&mut self, _req: &Request<'_>, parent: u64, name: &OsStr, mode: u32, umask: u32, reply: ReplyEntry) {
        let name = name.to_owned();
        self.dispatch(Some(OpKind::Mkdir), move |s| {
            let path = tri!(reply, s.child(parent, &name));
            tri!(reply, s.fs.mkdir(&path, mode & !umask & 0o7777));
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.entry(&TTL, &attr, 0);
        });
    }

    fn unlink(&mut self, _req: &Request<'_>, parent: u64, name: &OsStr, reply: ReplyEmpty) {
        let name = name.to_owned();
        self.dispatch(Some(OpKind::Unlink), move |s| {
            let path = tri!(reply, s.child(parent, &name));
            tri!(reply, s.fs.unlink(&path));
            s.inodes.lock().remove(&path);
            reply.ok();
        });
    }

    fn rmdir(&mut self, _req: &Request<'_>, parent: u64, name: &OsStr, reply: ReplyEmpty) {
        let name = name.to_owned();
        self.dispatch(Some(OpKind::Rmdir), move |s| {
            let path = tri!(reply, s.child(parent, &name));
            tri!(reply, s.fs.rmdir(&path));
            s.inodes.lock().remove(&path);
            reply.ok();
        });
    }

    fn symlink(&mut self, _req: &Request<'_>, parent: u64, link_name: &OsStr, target: &Path, reply: ReplyEntry) {
        let name = link_name.to_owned();
        let target = target.to_str().map(str::to_owned);
        self.dispatch(Some(OpKind::Symlink), move |s| {
            let path = tri!(reply, s.child(parent, &name));
            let target = tri!(reply, target.ok_or(FsError::InvalidArgument));
            tri!(reply, s.fs.symlink(&target, &path));
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.entry(&TTL, &attr, 0);
        });
    }

    fn rename(
        &mut self,
        _req: &Request<'_>,
        parent: u64,
        name: &OsStr,
        newparent: u64,
        newname: &OsStr,
        flags: u32,
        reply: ReplyEmpty,
    ) {
        if flags != 0 {
            return reply.error(libc::EINVAL);
        }
        let (name, newname) = (name.to_owned(), newname.to_owned());
        self.dispatch(Some(OpKind::Rename), move |s| {
            let from = tri!(reply, s.child(parent, &name));
            let to = tri!(reply, s.child(newparent, &newname));
            tri!(reply, s.fs.rename(&from, &to));
            s.inodes.lock().rename(&from, &to);
            reply.ok();
        });
    }

    fn link(&mut self, _req: &Request<'_>, ino: u64, newparent: u64, newname: &OsStr, reply: ReplyEntry) {
        let newname = newname.to_owned();
        self.dispatch(Some(OpKind::Link), move |s| {
            let existing = tri!(reply, s.path(ino));
            let new = tri!(reply, s.child(newparent, &newname));
            tri!(reply, s.fs.link(&existing, &new));
            let attr = tri!(reply, s.lookup_attr(&new));
            reply.entry(&TTL, &attr, 0);
        });
    }

    fn open(&mut self, _req: &Request<'_>, ino: u64, flags: i32, reply: ReplyOpen) {
        let flags = OpenFlags::from_posix(flags, 0);
        let kind = flags.truncate.then_some(OpKind::OpenTruncating);
        self.dispatch(kind, move |s| {
            let path = tri!(reply, s.path(ino));
            let fh = tri!(reply, s.fs.open(&path, flags));
            reply.opened(fh.0, 0);
        });
    }

    fn read(
        &mut self,
        _req: &Request<'_>,
        _ino: u64,
        fh: u64,
        offset: i64,
        size: u32,
        _flags: i32,
        _lock_owner: Option<u64>,
        reply: ReplyData,
    ) {
        self.dispatch(None, move |s| {
            let data = tri!(reply, s.fs.read_handle(Handle(fh), offset.max(0) as u64, size));
            reply.data(&data);
        });
    }

    fn write(
        &mut self,
        _req: &Request<'_>,
        _ino: u64,
        fh: u64,
        offset: i64,
        data: &[u8],
        _write_flags: u32,
        _flags: i32,
        _lock_owner: Option<u64>,
        reply: ReplyWrite,
    ) {
        let data = data.to_vec();
        self.dispatch(Some(OpKind::Write), move |s| {
            let n = tri!(reply, s.fs.write_handle(Handle(fh), offset.max(0) as u64, &data));
            reply.written(n as u32);
        });
    }

    fn flush(&mut self, _req: &Request<'_>, _ino: u64, fh: u64, _lock_owner: u64, reply: ReplyEmpty) {
        self.dispatch(Some(OpKind::Flush), move |s| {
            tri!(reply, s.fs.flush(Handle(fh)));
            reply.ok();
        });
    }

    fn release(
        &mut self,
        _req: &Request<'_>,
        _ino: u64,
        fh: u64,
        _flags: i32,
        _lock_owner: Option<u64>,
        _flush: bool,
        reply: ReplyEmpty,
    ) {
        self.dispatch(Some(OpKind::Release), move |s| {
            tri!(reply, s.fs.release(Handle(fh)));
            reply.ok();
        });
    }

    fn fsync(&mut self, _req: &Request<'_>, _ino: u64, fh: u64, datasync: bool, reply: ReplyEmpty) {
        self.dispatch(Some(OpKind::Fsync), move |s| {
            tri!(reply, s.fs.fsync(Handle(fh), datasync));
            reply.ok();
        });
    }

    fn opendir(&mut self, _req: &Request<'_>, ino: u64, _flags: i32, reply: ReplyOpen) {
        let s = &self.shared;
        if s.inodes.lock().path(ino).is_none() {
            return reply.error(libc::ENOENT);
        }
        let mut next = s.next_dir_handle.lock();
        let dh = *next;
        *next += 1;
        s.listings.lock().insert(dh, None);
        reply.opened(dh, 0);
    }

    fn readdir(&mut self, _req: &Request<'_>, ino: u64, fh: u64, offset: i64, mut reply: ReplyDirectory) {
        self.dispatch(None, move |s| {
            let cached = s.listings.lock().get(&fh).cloned().flatten();
            let listing = match cached {
                Some(l) if offset > 0 => l,
                _ => {
                    let path = tri!(reply, s.path(ino));
                    let entries = tri!(reply, s.fs.readdir(&path));
                    let parent = path.parent().unwrap_or_else(NormPath::root);
                    let mut inodes = s.inodes.lock();
                    let mut l = vec![
                        (ino, FileType::Directory, ".".to_owned()),
                        (inodes.ino(&parent), FileType::Directory, "..".to_owned()),
                    ];
                    for e in entries {
                        let Ok(child) = path.join(&e.name) else { continue };
                        let kind = file_type(e.kind, if e.kind == FileKind::Other { libc::S_IFREG } else { 0 });
                        l.push((inodes.ino(&child), kind, e.name));
                    }
                    drop(inodes);
                    s.listings.lock().insert(fh, Some(l.clone()));
                    l
                }
            };
            for (i, (ino, kind, name)) in listing.iter().enumerate().skip(offset.max(0) as usize) {
                if reply.add(*ino, (i + 1) as i64, *kind, name) {
                    break;
                }
            }
            reply.ok();
        });
    }

    fn releasedir(&mut self, _req: &Request<'_>, _ino: u64, fh: u64, _flags: i32, reply: ReplyEmpty) {
        self.shared.listings.lock().remove(&fh);
        reply.ok();
    }

    fn statfs(&mut self, _req: &Request<'_>, ino: u64, reply: ReplyStatfs) {
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.path(ino));
            let st = tri!(reply, s.fs.statfs(&path));
            reply.statfs(st.blocks, st.bfree, st.bavail, st.files, st.ffree, st.bsize, st.namelen, st.frsize);
        });
    }

    fn setxattr(
        &mut self,
        _req: &Request<'_>,
        ino: u64,
        name: &OsStr,
        value: &[u8],
        flags: i32,
        _position: u32,
        reply: ReplyEmpty,
    ) {
        let name = name.to_str().map(str::to_owned);
        let value = value.to_vec();
        self.dispatch(Some(OpKind::Setxattr), move |s| {
            let path = tri!(reply, s.path(ino));
            let name = tri!(reply, name.ok_or(FsError::InvalidArgument));
            tri!(reply, s.fs.setxattr(&path, &name, &value, flags as u32));
            reply.ok();
        });
    }

    fn getxattr(&mut self, _req: &Request<'_>, ino: u64, name: &OsStr, size: u32, reply: ReplyXattr) {
        let name = name.to_str().map(str::to_owned);
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.path(ino));
            let name = tri!(reply, name.ok_or(FsError::NoAttribute));
            let value = tri!(reply, s.fs.getxattr(&path, &name));
            xattr_reply(reply, size, &value);
        });
    }

    fn listxattr(&mut self, _req: &Request<'_>, ino: u64, size: u32, reply: ReplyXattr) {
        self.dispatch(None, move |s| {
            let path = tri!(reply, s.path(ino));
            let names = tri!(reply, s.fs.listxattr(&path));
            let mut buf = Vec::new();
            for n in names {
                buf.extend_from_slice(n.as_bytes());
                buf.push(0);
            }
            xattr_reply(reply, size, &buf);
        });
    }

    fn removexattr(&mut self, _req: &Request<'_>, ino: u64, name: &OsStr, reply: ReplyEmpty) {
        let name = name.to_str().map(str::to_owned);
        self.dispatch(Some(OpKind::Removexattr), move |s| {
            let path = tri!(reply, s.path(ino));
            let name = tri!(reply, name.ok_or(FsError::NoAttribute));
            tri!(reply, s.fs.removexattr(&path, &name));
            reply.ok();
        });
    }

    fn create(
        &mut self,
        _req: &Request<'_>,
        parent: u64,
        name: &OsStr,
        mode: u32,
        umask: u32,
        flags: i32,
        reply: ReplyCreate,
    ) {
        let name = name.to_owned();
        let flags = OpenFlags::from_posix(flags | libc::O_CREAT, mode & !umask & 0o7777);
        self.dispatch(Some(OpKind::Create), move |s| {
            let path = tri!(reply, s.child(parent, &name));
            let fh = tri!(reply, s.fs.open(&path, flags));
            let attr = tri!(reply, s.lookup_attr(&path));
            reply.created(&TTL, &attr, 0, fh.0, 0);
        });
    }

    fn fallocate(
        &mut self,
        _req: &Request<'_>,
        ino: u64,
        _fh: u64,
        offset: i64,
        length: i64,
        mode: i32,
        reply: ReplyEmpty,
    ) {
        self.dispatch(Some(OpKind::Fallocate), move |s| {
            let path = tri!(reply, s.path(ino));
            tri!(reply, s.fs.fallocate(&path, offset.max(0) as u64, length.max(0) as u64, mode as u32));
            reply.ok();
        });
    }
}

fn xattr_reply(reply: ReplyXattr, size: u32, value: &[u8]) {
    if size == 0 {
        reply.size(value.len() as u32);
    } else if value.len() > size as usize {
        reply.error(libc::ERANGE);
    } else {
        reply.data(value);
    }
}

/// A live mount. Dropping it unmounts and drains.
pub struct MountSession<S: BackingStore> {
    shared: Arc<Shared<S>>,
    unmounter: Option<SessionUnmounter>,
    thread: Option<JoinHandle<io::Result<()>>>,
    mountpoint: PathBuf,
}

impl<S: BackingStore> std::fmt::Debug for MountSession<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MountSession").field("mountpoint", &self.mountpoint).finish()
    }
}

impl<S: BackingStore> MountSession<S> {
    pub fn mountpoint(&self) -> &Path {
        &self.mountpoint
    }

    pub fn fs(&self) -> &Arc<EagerFs<S>> {
        &self.shared.fs
    }

    /// Queue, throttle and cache counters.
    pub fn stats(&self) -> FsStats {
        self.shared.fs.stats()
    }

    /// Something other than this session has unmounted the filesystem.
    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    /// Blocks until the filesystem is unmounted from outside, then drains.
    pub fn wait(mut self) -> io::Result<LedgerSummary> {
        let res = self.join();
        let summary = self.shared.teardown();
        res.map(|_| summary)
    }

    /// Unmounts, waits for every pending operation, and returns the ledger.
    pub fn unmount(mut self) -> io::Result<LedgerSummary> {
        if let Some(mut u) = self.unmounter.take() {
            u.unmount()?;
        }
        let res = self.join();
        let summary = self.shared.teardown();
        res.map(|_| summary)
    }

    /// Handle that unmounts from another thread, e.g. a signal handler loop.
    pub fn unmounter(&mut self) -> Option<SessionUnmounter> {
        self.unmounter.take()
    }

    fn join(&mut self) -> io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("session thread panicked"))),
            None => Ok(()),
        }
    }
}

impl<S: BackingStore> Drop for MountSession<S> {
    fn drop(&mut self) {
        if let Some(mut u) = self.unmounter.take() {
            let _ = u.unmount();
        }
        let _ = self.join();
        self.shared.teardown();
    }
}

/// Mounts `cfg.source` through a [`LocalStore`], reporting to stderr.
pub fn mount(cfg: &MountConfig) -> Result<MountSession<LocalStore>, MountError> {
    cfg.validate()?;
    let store = LocalStore::new(&cfg.source).map_err(MountError::Source)?;
    mount_with_store(cfg, Arc::new(store), Arc::new(StderrSink))
}

/// Mounts an arbitrary store at `cfg.mountpoint`. `cfg.source` is only
/// used as the mount's display name.
pub fn mount_with_store<S: BackingStore>(
    cfg: &MountConfig,
    store: Arc<S>,
    sink: Arc<dyn DiagnosticSink>,
) -> Result<MountSession<S>, MountError> {
    let fs = Arc::new(EagerFs::with_engine_config(store, cfg.policy.clone(), EngineConfig { sink, ..EngineConfig::default() }));
    let bridge = Bridge::new(fs, cfg.big_writes);
    let shared = bridge.shared.clone();
    let mut session = Session::new(bridge, &cfg.mountpoint, &cfg.options())?;
    let unmounter = session.unmount_callable();
    let thread = std::thread::Builder::new().name("eagerfs-session".into()).spawn(move || {
        let res = session.run();
        drop(session);
        res
    })?;
    Ok(MountSession { shared, unmounter: Some(unmounter), thread: Some(thread), mountpoint: cfg.mountpoint.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_error_has_a_distinct_errno() {
        let mut seen = std::collections::HashSet::new();
        for e in FsError::ALL {
            assert!(seen.insert(translate_error(e)), "{e:?}");
        }
        assert_eq!(translate_error(FsError::NotFound), libc::ENOENT);
        assert_eq!(translate_error(FsError::QuotaExceeded), libc::EDQUOT);
        assert_eq!(translate_error(FsError::IoFailure), libc::EIO);
    }

    #[test]
    fn errno_round_trip() {
        for e in FsError::ALL {
            assert_eq!(FsError::from_errno(translate_error(e)), e);
        }
    }

    #[test]
    fn config_validation() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(MountConfig::new(a.path(), b.path()).validate().is_ok());
        assert!(matches!(MountConfig::new(a.path(), a.path()).validate(), Err(MountError::Overlap)));
        let inner = a.path().join("m");
        std::fs::create_dir(&inner).unwrap();
        assert!(matches!(MountConfig::new(a.path(), &inner).validate(), Err(MountError::Overlap)));
        assert!(matches!(
            MountConfig::new(a.path(), b.path().join("missing")).validate(),
            Err(MountError::NotADirectory(_))
        ));
    }

    #[test]
    fn attr_conversion() {
        let a = crate::fs::synthesize(FileKind::File, 0o640, 1000, (5, 6));
        let f = to_file_attr(9, &a);
        assert_eq!((f.ino, f.size, f.blocks, f.perm, f.uid, f.gid), (9, 1000, 2, 0o640, 5, 6));
        assert_eq!(f.kind, FileType::RegularFile);
        assert_eq!(file_type(FileKind::Other, libc::S_IFIFO), FileType::NamedPipe);
    }
}
