use std::ffi::CString;
use std::fs::{self, File, OpenOptions};
use std::io;
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::{DirBuilderExt, FileExt, MetadataExt, OpenOptionsExt, PermissionsExt};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use bytes::Bytes;

use super::{
    digest_entries, AttrRecord, BackingStore, DigestEntry, DirEntry, FileKind, StatFs,
    StoreReply, StoreRequest, TreeDigest,
};
use crate::error::{FsError, FsResult};
use crate::path::NormPath;

/// Passthrough onto a real directory. Every request path is resolved below
/// the root given at construction.
#[derive(Debug, Clone)]
pub struct LocalStore {
    root: PathBuf,
}

fn last_os_error() -> FsError {
    FsError::from(io::Error::last_os_error())
}

fn cstr(path: &Path) -> FsResult<CString> {
    CString::new(path.as_os_str().as_bytes()).map_err(|_| FsError::InvalidArgument)
}

fn attr_from(meta: &fs::Metadata) -> AttrRecord {
    let ts = |secs: i64, nanos: i64| {
        if secs >= 0 {
            UNIX_EPOCH + Duration::new(secs as u64, nanos as u32)
        } else {
            UNIX_EPOCH - Duration::from_secs(secs.unsigned_abs())
        }
    };
    AttrRecord {
        kind: FileKind::from_mode(meta.mode()),
        mode: meta.mode(),
        size: meta.size(),
        nlink: meta.nlink() as u32,
        uid: meta.uid(),
        gid: meta.gid(),
        atime: ts(meta.atime(), meta.atime_nsec()),
        mtime: ts(meta.mtime(), meta.mtime_nsec()),
        ctime: ts(meta.ctime(), meta.ctime_nsec()),
    }
}

fn timespec(t: Option<SystemTime>) -> libc::timespec {
    match t {
        None => libc::timespec { tv_sec: 0, tv_nsec: libc::UTIME_OMIT },
        Some(t) => {
            let d = t.duration_since(UNIX_EPOCH).unwrap_or_default();
            libc::timespec { tv_sec: d.as_secs() as libc::time_t, tv_nsec: d.subsec_nanos() as _ }
        }
    }
}

impl LocalStore {
    /// Fails if `root` is not an existing directory.
    pub fn new(root: impl AsRef<Path>) -> FsResult<Self> {
        let root = fs::canonicalize(root.as_ref())?;
        if !fs::metadata(&root)?.is_dir() {
            return Err(FsError::NotADirectory);
        }
        Ok(LocalStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Host path for `path`. Normalized paths cannot climb above the root.
    pub fn host_path(&self, path: &NormPath) -> PathBuf {
        if path.is_root() {
            self.root.clone()
        } else {
            self.root.join(path.relative())
        }
    }

    fn set_exact_mode(&self, host: &Path, mode: u32) -> FsResult<()> {
        fs::set_permissions(host, fs::Permissions::from_mode(mode & 0o7777))?;
        Ok(())
    }

    fn getxattr(&self, host: &Path, name: &str) -> FsResult<Bytes> {
        let p = cstr(host)?;
        let n = CString::new(name).map_err(|_| FsError::InvalidArgument)?;
        loop {
            let size = unsafe { libc::lgetxattr(p.as_ptr(), n.as_ptr(), std::ptr::null_mut(), 0) };
            if size < 0 {
                return Err(last_os_error());
            }
            let mut buf = vec![0u8; size as usize];
            let got = unsafe {
                libc::lgetxattr(p.as_ptr(), n.as_ptr(), buf.as_mut_ptr().cast(), buf.len())
            };
            if got < 0 {
                let err = io::Error::last_os_error();
                if err.raw_os_error() == Some(libc::ERANGE) {
                    continue;
                }
                return Err(err.into());
            }
            buf.truncate(got as usize);
            return Ok(Bytes::from(buf));
        }
    }

    fn listxattr(&self, host: &Path) -> FsResult<Vec<String>> {
        let p = cstr(host)?;
        loop {
            let size = unsafe { libc::llistxattr(p.as_ptr(), std::ptr::null_mut(), 0) };
            if size < 0 {
                return Err(last_os_error());
            }
            let mut buf = vec![0u8; size as usize];
            let got = unsafe { libc::llistxattr(p.as_ptr(), buf.as_mut_ptr().cast(), buf.len()) };
            if got < 0 {
                let err = io::Error::last_os_error();
                if err.raw_os_error() == Some(libc::ERANGE) {
                    continue;
                }
                return Err(err.into());
            }
            buf.truncate(got as usize);
            let mut names: Vec<String> = buf
                .split(|b| *b == 0)
                .filter(|s| !s.is_empty())
                .map(|s| String::from_utf8_lossy(s).into_owned())
                .collect();
            names.sort();
            return Ok(names);
        }
    }

    fn read(&self, host: &Path, offset: u64, size: u32) -> FsResult<Bytes> {
        let meta = fs::symlink_metadata(host)?;
        if meta.file_type().is_symlink() {
            return Err(FsError::InvalidArgument);
        }
        if meta.is_dir() {
            return Err(FsError::IsADirectory);
        }
        let file = File::open(host)?;
        let mut buf = vec![0u8; size as usize];
        let mut filled = 0;
        while filled < buf.len() {
            let n = file.read_at(&mut buf[filled..], offset + filled as u64)?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        buf.truncate(filled);
        Ok(Bytes::from(buf))
    }
}

impl BackingStore for LocalStore {
    fn apply(&self, req: &StoreRequest) -> FsResult<StoreReply> {
        use StoreRequest as R;
        match req {
            R::Create { path, mode, truncate, exclusive } => {
                let host = self.host_path(path);
                let existed = !*exclusive && fs::symlink_metadata(&host).is_ok();
                let mut opts = OpenOptions::new();
                opts.write(true).mode(*mode & 0o7777);
                if *exclusive {
                    opts.create_new(true);
                } else {
                    opts.create(true).truncate(*truncate);
                }
                opts.open(&host)?;
                if !existed {
                    self.set_exact_mode(&host, *mode)?;
                }
                Ok(StoreReply::Done)
            }
            R::Open { path, write, truncate } => {
                let host = self.host_path(path);
                let mut opts = OpenOptions::new();
                if *write || *truncate {
                    opts.write(true).truncate(*truncate);
                } else {
                    opts.read(true);
                }
                opts.open(&host)?;
                Ok(StoreReply::Done)
            }
            R::Write { path, offset, data } => {
                let file = OpenOptions::new().write(true).open(self.host_path(path))?;
                file.write_all_at(data, *offset)?;
                Ok(StoreReply::Written(data.len()))
            }
            R::Truncate { path, size } => {
                let file = OpenOptions::new().write(true).open(self.host_path(path))?;
                file.set_len(*size)?;
                Ok(StoreReply::Done)
            }
            R::Flush { .. } | R::Release { .. } => Ok(StoreReply::Done),
            R::Fsync { path, datasync } => {
                let file = File::open(self.host_path(path))?;
                if *datasync {
                    file.sync_data()?;
                } else {
                    file.sync_all()?;
                }
                Ok(StoreReply::Done)
            }
            R::Mkdir { path, mode } => {
                let host = self.host_path(path);
                fs::DirBuilder::new().mode(*mode & 0o7777).create(&host)?;
                self.set_exact_mode(&host, *mode)?;
                Ok(StoreReply::Done)
            }
            R::Rmdir { path } => {
                if path.is_root() {
                    return Err(FsError::InvalidArgument);
                }
                fs::remove_dir(self.host_path(path))?;
                Ok(StoreReply::Done)
            }
            R::Unlink { path } => {
                if path.is_root() {
                    return Err(FsError::IsADirectory);
                }
                fs::remove_file(self.host_path(path))?;
                Ok(StoreReply::Done)
            }
            R::Rename { from, to } => {
                if from.is_root() || to.is_root() {
                    return Err(FsError::InvalidArgument);
                }
                fs::rename(self.host_path(from), self.host_path(to))?;
                Ok(StoreReply::Done)
            }
            R::Symlink { target, link } => {
                std::os::unix::fs::symlink(target, self.host_path(link))?;
                Ok(StoreReply::Done)
            }
            R::Link { existing, new } => {
                fs::hard_link(self.host_path(existing), self.host_path(new))?;
                Ok(StoreReply::Done)
            }
            R::Mknod { path, mode, rdev } => {
                let fmt = mode & libc::S_IFMT;
                if fmt != 0 && fmt != libc::S_IFREG {
                    return Err(FsError::NotSupported);
                }
                let host = self.host_path(path);
                let p = cstr(&host)?;
                let rc = unsafe { libc::mknod(p.as_ptr(), libc::S_IFREG | (mode & 0o7777), *rdev as libc::dev_t) };
                if rc != 0 {
                    return Err(last_os_error());
                }
                self.set_exact_mode(&host, *mode)?;
                Ok(StoreReply::Done)
            }
            R::Chmod { path, mode } => {
                let host = self.host_path(path);
                if fs::symlink_metadata(&host)?.file_type().is_symlink() {
                    return Err(FsError::NotSupported);
                }
                self.set_exact_mode(&host, *mode)?;
                Ok(StoreReply::Done)
            }
            R::Chown { path, uid, gid } => {
                std::os::unix::fs::lchown(self.host_path(path), *uid, *gid)?;
                Ok(StoreReply::Done)
            }
            R::Utimens { path, atime, mtime } => {
                let p = cstr(&self.host_path(path))?;
                let times = [timespec(*atime), timespec(*mtime)];
                let rc = unsafe {
                    libc::utimensat(libc::AT_FDCWD, p.as_ptr(), times.as_ptr(), libc::AT_SYMLINK_NOFOLLOW)
                };
                if rc != 0 {
                    return Err(last_os_error());
                }
                Ok(StoreReply::Done)
            }
            R::Setxattr { path, name, value, flags } => {
                let p = cstr(&self.host_path(path))?;
                let n = CString::new(name.as_str()).map_err(|_| FsError::InvalidArgument)?;
                let rc = unsafe {
                    libc::lsetxattr(p.as_ptr(), n.as_ptr(), value.as_ptr().cast(), value.len(), *flags as i32)
                };
                if rc != 0 {
                    return Err(last_os_error());
                }
                Ok(StoreReply::Done)
            }
            R::Removexattr { path, name } => {
                let p = cstr(&self.host_path(path))?;
                let n = CString::new(name.as_str()).map_err(|_| FsError::InvalidArgument)?;
                if unsafe { libc::lremovexattr(p.as_ptr(), n.as_ptr()) } != 0 {
                    return Err(last_os_error());
                }
                Ok(StoreReply::Done)
            }
            R::Fallocate { path, offset, len, mode } => {
                use std::os::fd::AsRawFd;
                let file = OpenOptions::new().write(true).open(self.host_path(path))?;
                let rc = unsafe {
                    libc::fallocate(file.as_raw_fd(), *mode as i32, *offset as libc::off_t, *len as libc::off_t)
                };
                if rc != 0 {
                    return Err(last_os_error());
                }
                Ok(StoreReply::Done)
            }
            R::Read { path, offset, size } => {
                self.read(&self.host_path(path), *offset, *size).map(StoreReply::Data)
            }
            R::Readdir { path } => {
                let mut out = Vec::new();
                for entry in fs::read_dir(self.host_path(path))? {
                    let entry = entry?;
                    let ft = entry.file_type()?;
                    let kind = if ft.is_dir() {
                        FileKind::Dir
                    } else if ft.is_file() {
                        FileKind::File
                    } else if ft.is_symlink() {
                        FileKind::Symlink
                    } else {
                        FileKind::Other
                    };
                    out.push(DirEntry { name: entry.file_name().to_string_lossy().into_owned(), kind });
                }
                out.sort_by(|a, b| a.name.cmp(&b.name));
                Ok(StoreReply::Entries(out))
            }
            R::Getattr { path } => {
                Ok(StoreReply::Attr(attr_from(&fs::symlink_metadata(self.host_path(path))?)))
            }
            R::Readlink { path } => {
                let target = fs::read_link(self.host_path(path))?;
                Ok(StoreReply::Target(target.to_string_lossy().into_owned()))
            }
            R::Statfs { path } => {
                let p = cstr(&self.host_path(path))?;
                let mut st: libc::statvfs = unsafe { std::mem::zeroed() };
                if unsafe { libc::statvfs(p.as_ptr(), &mut st) } != 0 {
                    return Err(last_os_error());
                }
                Ok(StoreReply::StatFs(StatFs {
                    blocks: st.f_blocks as u64,
                    bfree: st.f_bfree as u64,
                    bavail: st.f_bavail as u64,
                    files: st.f_files as u64,
                    ffree: st.f_ffree as u64,
                    bsize: st.f_bsize as u32,
                    namelen: st.f_namemax as u32,
                    frsize: st.f_frsize as u32,
                }))
            }
            R::Getxattr { path, name } => self.getxattr(&self.host_path(path), name).map(StoreReply::Value),
            R::Listxattr { path } => self.listxattr(&self.host_path(path)).map(StoreReply::Names),
        }
    }

    fn snapshot_tree(&self) -> TreeDigest {
        let mut entries = Vec::new();
        for entry in walkdir::WalkDir::new(&self.root).follow_links(false).min_depth(1) {
            let Ok(entry) = entry else { continue };
            let rel = entry.path().strip_prefix(&self.root).expect("below root");
            let path = format!("/{}", rel.to_string_lossy());
            let ft = entry.file_type();
            let Ok(meta) = entry.metadata() else { continue };
            if ft.is_dir() {
                entries.push(DigestEntry::dir(path, meta.mode()));
            } else if ft.is_file() {
                let content = fs::read(entry.path()).unwrap_or_default();
                entries.push(DigestEntry::file(path, meta.mode(), &content));
            } else if ft.is_symlink() {
                let target = fs::read_link(entry.path()).unwrap_or_default();
                entries.push(DigestEntry::symlink(path, target.to_string_lossy()));
            } else {
                entries.push(DigestEntry::other(path));
            }
        }
        digest_entries(entries)
    }
}
