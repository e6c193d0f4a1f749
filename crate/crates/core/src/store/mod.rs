//! Synchronous execution targets.
//!
//! A [`BackingStore`] executes one [`StoreRequest`] at a time per call and
//! blocks until it is done. Two implementations exist: [`LocalStore`], a
//! passthrough onto a real directory, and [`MemTree`], an in-memory tree. Either
//! can be wrapped in an [`InjectedStore`] to add latency, faults and an
//! execution log.

mod digest;
mod inject;
mod local;
mod mem;

use std::time::SystemTime;

use bytes::Bytes;

use crate::error::FsResult;
use crate::kind::OpKind;
use crate::path::NormPath;

pub use digest::{digest_entries, DigestEntry, TreeDigest};
pub use inject::{
    ExecEntry, ExecLog, FaultRule, FaultSpecError, InjectedStore, KindSelector, Latency,
    LatencyProfile, Phase, StoreHook,
};
pub use local::LocalStore;
pub use mem::MemTree;
pub(crate) use mem::current_owner;

/// `FALLOC_FL_KEEP_SIZE`.
pub const FALLOC_KEEP_SIZE: u32 = 1;
/// `XATTR_CREATE`.
pub const XATTR_CREATE: u32 = 1;
/// `XATTR_REPLACE`.
pub const XATTR_REPLACE: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileKind {
    File,
    Dir,
    Symlink,
    Other,
}

impl FileKind {
    pub fn type_bits(self) -> u32 {
        match self {
            FileKind::File => libc::S_IFREG,
            FileKind::Dir => libc::S_IFDIR,
            FileKind::Symlink => libc::S_IFLNK,
            FileKind::Other => 0,
        }
    }

    pub fn from_mode(mode: u32) -> FileKind {
        match mode & libc::S_IFMT {
            libc::S_IFREG => FileKind::File,
            libc::S_IFDIR => FileKind::Dir,
            libc::S_IFLNK => FileKind::Symlink,
            _ => FileKind::Other,
        }
    }
}

/// Stat-style metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrRecord {
    pub kind: FileKind,
    /// Full `st_mode`, type bits included.
    pub mode: u32,
    pub size: u64,
    pub nlink: u32,
    pub uid: u32,
    pub gid: u32,
    pub atime: SystemTime,
    pub mtime: SystemTime,
    pub ctime: SystemTime,
}

impl AttrRecord {
    pub fn perm(&self) -> u32 {
        self.mode & 0o7777
    }

    /// Kind agrees with the type bits of `mode`.
    pub fn is_consistent(&self) -> bool {
        self.kind == FileKind::Other || FileKind::from_mode(self.mode) == self.kind
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirEntry {
    pub name: String,
    pub kind: FileKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatFs {
    pub blocks: u64,
    pub bfree: u64,
    pub bavail: u64,
    pub files: u64,
    pub ffree: u64,
    pub bsize: u32,
    pub namelen: u32,
    pub frsize: u32,
}

/// One synchronous request against a store. Paths are normalized; write
/// payloads are owned, immutable copies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreRequest {
    Create { path: NormPath, mode: u32, truncate: bool, exclusive: bool },
    Open { path: NormPath, write: bool, truncate: bool },
    Write { path: NormPath, offset: u64, data: Bytes },
    Truncate { path: NormPath, size: u64 },
    Flush { path: NormPath },
    Release { path: NormPath },
    Fsync { path: NormPath, datasync: bool },
    Mkdir { path: NormPath, mode: u32 },
    Rmdir { path: NormPath },
    Unlink { path: NormPath },
    Rename { from: NormPath, to: NormPath },
    Symlink { target: String, link: NormPath },
    Link { existing: NormPath, new: NormPath },
    Mknod { path: NormPath, mode: u32, rdev: u64 },
    Chmod { path: NormPath, mode: u32 },
    Chown { path: NormPath, uid: Option<u32>, gid: Option<u32> },
    Utimens { path: NormPath, atime: Option<SystemTime>, mtime: Option<SystemTime> },
    Setxattr { path: NormPath, name: String, value: Bytes, flags: u32 },
    Removexattr { path: NormPath, name: String },
    Fallocate { path: NormPath, offset: u64, len: u64, mode: u32 },
    Read { path: NormPath, offset: u64, size: u32 },
    Readdir { path: NormPath },
    Getattr { path: NormPath },
    Readlink { path: NormPath },
    Statfs { path: NormPath },
    Getxattr { path: NormPath, name: String },
    Listxattr { path: NormPath },
}

impl StoreRequest {
    pub fn kind(&self) -> OpKind {
        match self {
            StoreRequest::Create { .. } => OpKind::Create,
            StoreRequest::Open { truncate: true, .. } => OpKind::OpenTruncating,
            StoreRequest::Open { .. } => OpKind::Open,
            StoreRequest::Write { .. } => OpKind::Write,
            StoreRequest::Truncate { .. } => OpKind::Truncate,
            StoreRequest::Flush { .. } => OpKind::Flush,
            StoreRequest::Release { .. } => OpKind::Release,
            StoreRequest::Fsync { .. } => OpKind::Fsync,
            StoreRequest::Mkdir { .. } => OpKind::Mkdir,
            StoreRequest::Rmdir { .. } => OpKind::Rmdir,
            StoreRequest::Unlink { .. } => OpKind::Unlink,
            StoreRequest::Rename { .. } => OpKind::Rename,
            StoreRequest::Symlink { .. } => OpKind::Symlink,
            StoreRequest::Link { .. } => OpKind::Link,
            StoreRequest::Mknod { .. } => OpKind::Mknod,
            StoreRequest::Chmod { .. } => OpKind::Chmod,
            StoreRequest::Chown { .. } => OpKind::Chown,
            StoreRequest::Utimens { .. } => OpKind::Utimens,
            StoreRequest::Setxattr { .. } => OpKind::Setxattr,
            StoreRequest::Removexattr { .. } => OpKind::Removexattr,
            StoreRequest::Fallocate { .. } => OpKind::Fallocate,
            StoreRequest::Read { .. } => OpKind::Read,
            StoreRequest::Readdir { .. } => OpKind::Readdir,
            StoreRequest::Getattr { .. } => OpKind::Getattr,
            StoreRequest::Readlink { .. } => OpKind::Readlink,
            StoreRequest::Statfs { .. } => OpKind::Statfs,
            StoreRequest::Getxattr { .. } => OpKind::Getxattr,
            StoreRequest::Listxattr { .. } => OpKind::Listxattr,
        }
    }

    /// Paths touched, in queue-assignment order. Two entries for rename and
    /// link.
    pub fn paths(&self) -> Vec<NormPath> {
        match self {
            StoreRequest::Rename { from, to } => vec![from.clone(), to.clone()],
            StoreRequest::Link { existing, new } => vec![existing.clone(), new.clone()],
            StoreRequest::Symlink { link, .. } => vec![link.clone()],
            StoreRequest::Create { path, .. }
            | StoreRequest::Open { path, .. }
            | StoreRequest::Write { path, .. }
            | StoreRequest::Truncate { path, .. }
            | StoreRequest::Flush { path }
            | StoreRequest::Release { path }
            | StoreRequest::Fsync { path, .. }
            | StoreRequest::Mkdir { path, .. }
            | StoreRequest::Rmdir { path }
            | StoreRequest::Unlink { path }
            | StoreRequest::Mknod { path, .. }
            | StoreRequest::Chmod { path, .. }
            | StoreRequest::Chown { path, .. }
            | StoreRequest::Utimens { path, .. }
            | StoreRequest::Setxattr { path, .. }
            | StoreRequest::Removexattr { path, .. }
            | StoreRequest::Fallocate { path, .. }
            | StoreRequest::Read { path, .. }
            | StoreRequest::Readdir { path }
            | StoreRequest::Getattr { path }
            | StoreRequest::Readlink { path }
            | StoreRequest::Statfs { path }
            | StoreRequest::Getxattr { path, .. }
            | StoreRequest::Listxattr { path } => vec![path.clone()],
        }
    }

    /// First touched path.
    pub fn primary_path(&self) -> NormPath {
        self.paths().swap_remove(0)
    }

    pub fn touches(&self, path: &NormPath) -> bool {
        self.paths().iter().any(|p| p == path)
    }
}

/// Successful result of a request. Mutations answer `Done`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreReply {
    Done,
    Written(usize),
    Data(Bytes),
    Attr(AttrRecord),
    Entries(Vec<DirEntry>),
    Target(String),
    StatFs(StatFs),
    Value(Bytes),
    Names(Vec<String>),
}

macro_rules! reply_accessor {
    ($fn:ident, $variant:ident, $ty:ty) => {
        pub fn $fn(self) -> FsResult<$ty> {
            match self {
                StoreReply::$variant(v) => Ok(v),
                _ => Err(crate::error::FsError::IoFailure),
            }
        }
    };
}

impl StoreReply {
    reply_accessor!(into_attr, Attr, AttrRecord);
    reply_accessor!(into_data, Data, Bytes);
    reply_accessor!(into_entries, Entries, Vec<DirEntry>);
    reply_accessor!(into_target, Target, String);
    reply_accessor!(into_statfs, StatFs, StatFs);
    reply_accessor!(into_value, Value, Bytes);
    reply_accessor!(into_names, Names, Vec<String>);
}

pub trait BackingStore: Send + Sync + 'static {
    /// Performs `req` synchronously.
    fn apply(&self, req: &StoreRequest) -> FsResult<StoreReply>;

    /// Canonical digest of the whole tree. Callers must not run `apply`
    /// concurrently.
    fn snapshot_tree(&self) -> TreeDigest;

    /// Drops any internal memoization between benchmark replicates.
    fn drop_caches(&self) {}
}

impl<S: BackingStore + ?Sized> BackingStore for std::sync::Arc<S> {
    fn apply(&self, req: &StoreRequest) -> FsResult<StoreReply> {
        (**self).apply(req)
    }

    fn snapshot_tree(&self) -> TreeDigest {
        (**self).snapshot_tree()
    }

    fn drop_caches(&self) {
        (**self).drop_caches()
    }
}
