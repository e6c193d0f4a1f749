//! In-memory POSIX-like tree: directories, regular files, symlinks and hard
//! links. Device nodes are not modeled. The tree does not follow symlinks;
//! callers (the kernel) resolve them before a request reaches a store.

use std::collections::{BTreeMap, HashMap};
use std::time::SystemTime;

use bytes::Bytes;
use parking_lot::Mutex;

use super::digest::{digest_entries, DigestEntry};
use super::{
    AttrRecord, BackingStore, DirEntry, FileKind, StatFs, StoreReply, StoreRequest, TreeDigest,
    FALLOC_KEEP_SIZE, XATTR_CREATE, XATTR_REPLACE,
};
use crate::error::{FsError, FsResult};
use crate::path::NormPath;

type Ino = u64;

#[derive(Debug, Clone)]
enum NodeData {
    File(Vec<u8>),
    Dir,
    Symlink(String),
}

#[derive(Debug, Clone)]
struct Node {
    data: NodeData,
    perm: u32,
    uid: u32,
    gid: u32,
    atime: SystemTime,
    mtime: SystemTime,
    ctime: SystemTime,
    nlink: u32,
    xattrs: BTreeMap<String, Bytes>,
}

impl Node {
    fn new(data: NodeData, perm: u32, owner: (u32, u32)) -> Self {
        let now = SystemTime::now();
        Node {
            data,
            perm: perm & 0o7777,
            uid: owner.0,
            gid: owner.1,
            atime: now,
            mtime: now,
            ctime: now,
            nlink: 1,
            xattrs: BTreeMap::new(),
        }
    }

    fn kind(&self) -> FileKind {
        match self.data {
            NodeData::File(_) => FileKind::File,
            NodeData::Dir => FileKind::Dir,
            NodeData::Symlink(_) => FileKind::Symlink,
        }
    }

    fn is_dir(&self) -> bool {
        matches!(self.data, NodeData::Dir)
    }

    fn size(&self) -> u64 {
        match &self.data {
            NodeData::File(d) => d.len() as u64,
            NodeData::Dir => 0,
            NodeData::Symlink(t) => t.len() as u64,
        }
    }

    fn attr(&self) -> AttrRecord {
        let kind = self.kind();
        AttrRecord {
            kind,
            mode: kind.type_bits() | self.perm,
            size: self.size(),
            nlink: self.nlink,
            uid: self.uid,
            gid: self.gid,
            atime: self.atime,
            mtime: self.mtime,
            ctime: self.ctime,
        }
    }

    fn file_mut(&mut self) -> FsResult<&mut Vec<u8>> {
        match &mut self.data {
            NodeData::File(d) => Ok(d),
            NodeData::Dir => Err(FsError::IsADirectory),
            NodeData::Symlink(_) => Err(FsError::InvalidArgument),
        }
    }

    fn touch(&mut self) {
        let now = SystemTime::now();
        self.mtime = now;
        self.ctime = now;
    }
}

#[derive(Debug, Clone)]
struct Tree {
    entries: BTreeMap<NormPath, Ino>,
    nodes: HashMap<Ino, Node>,
    next_ino: Ino,
}

/// Range bounds covering exactly the strict descendants of `dir`.
fn descendant_range(dir: &NormPath) -> (String, String) {
    if dir.is_root() {
        ("/".to_owned() + "\u{1}", "0".to_owned())
    } else {
        (format!("{dir}/"), format!("{dir}0"))
    }
}

impl Tree {
    fn new(owner: (u32, u32)) -> Self {
        let mut t = Tree { entries: BTreeMap::new(), nodes: HashMap::new(), next_ino: 2 };
        t.entries.insert(NormPath::root(), 1);
        t.nodes.insert(1, Node::new(NodeData::Dir, 0o755, owner));
        t
    }

    /// Resolves `path` top-down so a non-directory ancestor reports
    /// `NotADirectory` rather than `NotFound`.
    fn ino(&self, path: &NormPath) -> FsResult<Ino> {
        if let Some(ino) = self.entries.get(path) {
            return Ok(*ino);
        }
        if let Some(parent) = path.parent() {
            self.check_parent(&parent)?;
        }
        Err(FsError::NotFound)
    }

    fn node(&self, path: &NormPath) -> FsResult<&Node> {
        let ino = self.ino(path)?;
        Ok(&self.nodes[&ino])
    }

    fn node_mut(&mut self, path: &NormPath) -> FsResult<&mut Node> {
        let ino = self.ino(path)?;
        Ok(self.nodes.get_mut(&ino).expect("entry points at live node"))
    }

    /// The parent must exist and be a directory; the path itself must be
    /// free.
    fn check_new(&self, path: &NormPath) -> FsResult<()> {
        let parent = path.parent().ok_or(FsError::AlreadyExists)?;
        self.check_parent(&parent)?;
        if self.entries.contains_key(path) {
            return Err(FsError::AlreadyExists);
        }
        Ok(())
    }

    fn check_parent(&self, parent: &NormPath) -> FsResult<()> {
        let mut chain: Vec<NormPath> = parent.ancestors().collect();
        chain.reverse();
        chain.push(parent.clone());
        for dir in &chain {
            match self.entries.get(dir) {
                None => return Err(FsError::NotFound),
                Some(ino) if !self.nodes[ino].is_dir() => return Err(FsError::NotADirectory),
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn insert(&mut self, path: NormPath, node: Node) {
        let ino = self.next_ino;
        self.next_ino += 1;
        self.nodes.insert(ino, node);
        self.entries.insert(path, ino);
    }

    fn drop_link(&mut self, path: &NormPath) {
        if let Some(ino) = self.entries.remove(path) {
            let node = self.nodes.get_mut(&ino).expect("live node");
            node.nlink = node.nlink.saturating_sub(1);
            node.ctime = SystemTime::now();
            if node.nlink == 0 {
                self.nodes.remove(&ino);
            }
        }
    }

    fn has_children(&self, dir: &NormPath) -> bool {
        let (lo, hi) = descendant_range(dir);
        self.entries
            .range::<str, _>((std::ops::Bound::Included(lo.as_str()), std::ops::Bound::Excluded(hi.as_str())))
            .next()
            .is_some()
    }

    fn descendants(&self, dir: &NormPath) -> Vec<NormPath> {
        let (lo, hi) = descendant_range(dir);
        self.entries
            .range::<str, _>((std::ops::Bound::Included(lo.as_str()), std::ops::Bound::Excluded(hi.as_str())))
            .map(|(k, _)| k.clone())
            .collect()
    }

    fn apply(&mut self, req: &StoreRequest, owner: (u32, u32)) -> FsResult<StoreReply> {
        use StoreRequest as R;
        match req {
            R::Create { path, mode, truncate, exclusive } => {
                match self.entries.get(path) {
                    Some(ino) => {
                        if *exclusive {
                            return Err(FsError::AlreadyExists);
                        }
                        let node = self.nodes.get_mut(ino).expect("live node");
                        let data = node.file_mut()?;
                        if *truncate {
                            data.clear();
                            node.touch();
                        }
                    }
                    None => {
                        self.check_new(path)?;
                        self.insert(path.clone(), Node::new(NodeData::File(Vec::new()), *mode, owner));
                    }
                }
                Ok(StoreReply::Done)
            }
            R::Open { path, write, truncate } => {
                let node = self.node_mut(path)?;
                if node.is_dir() {
                    if *write || *truncate {
                        return Err(FsError::IsADirectory);
                    }
                    return Ok(StoreReply::Done);
                }
                if *truncate {
                    node.file_mut()?.clear();
                    node.touch();
                }
                Ok(StoreReply::Done)
            }
            R::Write { path, offset, data } => {
                let node = self.node_mut(path)?;
                let buf = node.file_mut()?;
                let off = *offset as usize;
                let end = off + data.len();
                if buf.len() < end {
                    buf.resize(end, 0);
                }
                buf[off..end].copy_from_slice(data);
                node.touch();
                Ok(StoreReply::Written(data.len()))
            }
            R::Truncate { path, size } => {
                let node = self.node_mut(path)?;
                node.file_mut()?.resize(*size as usize, 0);
                node.touch();
                Ok(StoreReply::Done)
            }
            R::Flush { .. } | R::Release { .. } => Ok(StoreReply::Done),
            R::Fsync { path, .. } => {
                self.node(path)?;
                Ok(StoreReply::Done)
            }
            R::Mkdir { path, mode } => {
                self.check_new(path)?;
                self.insert(path.clone(), Node::new(NodeData::Dir, *mode, owner));
                Ok(StoreReply::Done)
            }
            R::Rmdir { path } => {
                if path.is_root() {
                    return Err(FsError::InvalidArgument);
                }
                if !self.node(path)?.is_dir() {
                    return Err(FsError::NotADirectory);
                }
                if self.has_children(path) {
                    return Err(FsError::NotEmpty);
                }
                self.drop_link(path);
                Ok(StoreReply::Done)
            }
            R::Unlink { path } => {
                if self.node(path)?.is_dir() {
                    return Err(FsError::IsADirectory);
                }
                self.drop_link(path);
                Ok(StoreReply::Done)
            }
            R::Rename { from, to } => self.rename(from, to).map(|_| StoreReply::Done),
            R::Symlink { target, link } => {
                self.check_new(link)?;
                self.insert(link.clone(), Node::new(NodeData::Symlink(target.clone()), 0o777, owner));
                Ok(StoreReply::Done)
            }
            R::Link { existing, new } => {
                let ino = self.ino(existing)?;
                if self.nodes[&ino].is_dir() {
                    return Err(FsError::PermissionDenied);
                }
                self.check_new(new)?;
                self.entries.insert(new.clone(), ino);
                let node = self.nodes.get_mut(&ino).expect("live node");
                node.nlink += 1;
                node.ctime = SystemTime::now();
                Ok(StoreReply::Done)
            }
            R::Mknod { path, mode, .. } => {
                let fmt = mode & libc::S_IFMT;
                if fmt != 0 && fmt != libc::S_IFREG {
                    return Err(FsError::NotSupported);
                }
                self.check_new(path)?;
                self.insert(path.clone(), Node::new(NodeData::File(Vec::new()), *mode, owner));
                Ok(StoreReply::Done)
            }
            R::Chmod { path, mode } => {
                let node = self.node_mut(path)?;
                if node.kind() == FileKind::Symlink {
                    return Err(FsError::NotSupported);
                }
                node.perm = mode & 0o7777;
                node.ctime = SystemTime::now();
                Ok(StoreReply::Done)
            }
            R::Chown { path, uid, gid } => {
                let node = self.node_mut(path)?;
                if let Some(u) = uid {
                    node.uid = *u;
                }
                if let Some(g) = gid {
                    node.gid = *g;
                }
                node.ctime = SystemTime::now();
                Ok(StoreReply::Done)
            }
            R::Utimens { path, atime, mtime } => {
                let node = self.node_mut(path)?;
                if let Some(a) = atime {
                    node.atime = *a;
                }
                if let Some(m) = mtime {
                    node.mtime = *m;
                }
                node.ctime = SystemTime::now();
                Ok(StoreReply::Done)
            }
            R::Setxattr { path, name, value, flags } => {
                if name.is_empty() {
                    return Err(FsError::InvalidArgument);
                }
                let node = self.node_mut(path)?;
                let exists = node.xattrs.contains_key(name);
                if flags & XATTR_CREATE != 0 && exists {
                    return Err(FsError::AlreadyExists);
                }
                if flags & XATTR_REPLACE != 0 && !exists {
                    return Err(FsError::NoAttribute);
                }
                node.xattrs.insert(name.clone(), value.clone());
                node.ctime = SystemTime::now();
                Ok(StoreReply::Done)
            }
            R::Removexattr { path, name } => {
                let node = self.node_mut(path)?;
                node.xattrs.remove(name).ok_or(FsError::NoAttribute)?;
                node.ctime = SystemTime::now();
                Ok(StoreReply::Done)
            }
            R::Fallocate { path, offset, len, mode } => {
                if *len == 0 {
                    return Err(FsError::InvalidArgument);
                }
                let node = self.node_mut(path)?;
                let buf = node.file_mut()?;
                match *mode {
                    0 => {
                        let end = (offset + len) as usize;
                        if buf.len() < end {
                            buf.resize(end, 0);
                        }
                    }
                    FALLOC_KEEP_SIZE => {}
                    _ => return Err(FsError::NotSupported),
                }
                node.touch();
                Ok(StoreReply::Done)
            }
            R::Read { path, offset, size } => {
                let node = self.node(path)?;
                match &node.data {
                    NodeData::File(d) => {
                        let start = (*offset as usize).min(d.len());
                        let end = start.saturating_add(*size as usize).min(d.len());
                        Ok(StoreReply::Data(Bytes::copy_from_slice(&d[start..end])))
                    }
                    NodeData::Dir => Err(FsError::IsADirectory),
                    NodeData::Symlink(_) => Err(FsError::InvalidArgument),
                }
            }
            R::Readdir { path } => {
                if !self.node(path)?.is_dir() {
                    return Err(FsError::NotADirectory);
                }
                let depth = path.depth() + 1;
                let (lo, hi) = descendant_range(path);
                let mut out: Vec<DirEntry> = self
                    .entries
                    .range::<str, _>((
                        std::ops::Bound::Included(lo.as_str()),
                        std::ops::Bound::Excluded(hi.as_str()),
                    ))
                    .filter(|(k, _)| k.depth() == depth)
                    .map(|(k, ino)| DirEntry {
                        name: k.file_name().unwrap_or_default().to_owned(),
                        kind: self.nodes[ino].kind(),
                    })
                    .collect();
                out.sort_by(|a, b| a.name.cmp(&b.name));
                Ok(StoreReply::Entries(out))
            }
            R::Getattr { path } => Ok(StoreReply::Attr(self.node(path)?.attr())),
            R::Readlink { path } => match &self.node(path)?.data {
                NodeData::Symlink(t) => Ok(StoreReply::Target(t.clone())),
                _ => Err(FsError::InvalidArgument),
            },
            R::Statfs { path } => {
                self.node(path)?;
                let used: u64 = self.nodes.values().map(|n| n.size().div_ceil(4096)).sum();
                let total = 1u64 << 30;
                Ok(StoreReply::StatFs(StatFs {
                    blocks: total,
                    bfree: total - used.min(total),
                    bavail: total - used.min(total),
                    files: 1 << 24,
                    ffree: (1u64 << 24).saturating_sub(self.nodes.len() as u64),
                    bsize: 4096,
                    namelen: 255,
                    frsize: 4096,
                }))
            }
            R::Getxattr { path, name } => {
                let node = self.node(path)?;
                node.xattrs.get(name).cloned().map(StoreReply::Value).ok_or(FsError::NoAttribute)
            }
            R::Listxattr { path } => {
                let node = self.node(path)?;
                Ok(StoreReply::Names(node.xattrs.keys().cloned().collect()))
            }
        }
    }

    fn rename(&mut self, from: &NormPath, to: &NormPath) -> FsResult<()> {
        if from.is_root() || to.is_root() {
            return Err(FsError::InvalidArgument);
        }
        let src = self.ino(from)?;
        let parent = to.parent().expect("non-root");
        self.check_parent(&parent)?;
        if from == to {
            return Ok(());
        }
        if to.is_descendant_of(from) {
            return Err(FsError::InvalidArgument);
        }
        let src_dir = self.nodes[&src].is_dir();
        if let Some(&dst) = self.entries.get(to) {
            if dst == src {
                return Ok(());
            }
            let dst_dir = self.nodes[&dst].is_dir();
            match (src_dir, dst_dir) {
                (true, false) => return Err(FsError::NotADirectory),
                (false, true) => return Err(FsError::IsADirectory),
                (true, true) if self.has_children(to) => return Err(FsError::NotEmpty),
                _ => {}
            }
            self.drop_link(to);
        }
        let mut moved = vec![from.clone()];
        if src_dir {
            moved.extend(self.descendants(from));
        }
        for old in moved {
            let ino = self.entries.remove(&old).expect("listed above");
            let new = old.rebase(from, to).expect("under source");
            self.entries.insert(new, ino);
        }
        self.nodes.get_mut(&src).expect("live node").ctime = SystemTime::now();
        Ok(())
    }

    fn digest(&self) -> TreeDigest {
        let entries = self
            .entries
            .iter()
            .map(|(path, ino)| {
                let node = &self.nodes[ino];
                match &node.data {
                    NodeData::Dir => DigestEntry::dir(path.as_str(), node.perm),
                    NodeData::File(d) => DigestEntry::file(path.as_str(), node.perm, d),
                    NodeData::Symlink(t) => DigestEntry::symlink(path.as_str(), t.as_str()),
                }
            })
            .collect();
        digest_entries(entries)
    }
}

/// In-memory store. Structural mutations are serialized by one lock; calls on
/// distinct paths are safe from any thread.
pub struct MemTree {
    tree: Mutex<Tree>,
    owner: (u32, u32),
}

impl MemTree {
    pub fn new() -> Self {
        let owner = current_owner();
        MemTree { tree: Mutex::new(Tree::new(owner)), owner }
    }

    /// Independent deep copy of the current contents.
    pub fn fork(&self) -> MemTree {
        MemTree { tree: Mutex::new(self.tree.lock().clone()), owner: self.owner }
    }

    pub fn len(&self) -> usize {
        self.tree.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 1
    }
}

impl Default for MemTree {
    fn default() -> Self {
        MemTree::new()
    }
}

impl BackingStore for MemTree {
    fn apply(&self, req: &StoreRequest) -> FsResult<StoreReply> {
        self.tree.lock().apply(req, self.owner)
    }

    fn snapshot_tree(&self) -> TreeDigest {
        self.tree.lock().digest()
    }
}

pub(crate) fn current_owner() -> (u32, u32) {
    // SAFETY: geteuid/getegid have no preconditions and cannot fail.
    unsafe { (libc::geteuid(), libc::getegid()) }
}
