use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Bound;
use std::time::SystemTime;

use parking_lot::Mutex;

use crate::path::NormPath;
use crate::store::{AttrRecord, FileKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrSource {
    /// Read from the store.
    Prefetched,
    /// Built from pending operations.
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedAttr {
    pub attr: AttrRecord,
    pub source: AttrSource,
}

/// Snapshot of a path's generation, taken before a store read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ticket {
    gen: u64,
    epoch: u64,
}

#[derive(Default)]
struct Inner {
    entries: BTreeMap<NormPath, CachedAttr>,
    gens: HashMap<NormPath, u64>,
    next_gen: u64,
    /// Bumped by renames, which move whole subtrees.
    epoch: u64,
    /// Directories made by a pending mkdir whose children are all tracked
    /// here, so an uncached child is known not to exist.
    fresh: HashSet<NormPath>,
    /// Paths removed by a pending unlink or rmdir.
    absent: HashSet<NormPath>,
}

impl Inner {
    fn bump(&mut self, path: &NormPath) {
        self.next_gen += 1;
        self.gens.insert(path.clone(), self.next_gen);
    }

    /// Forget what is known about `path` existing.
    fn forget(&mut self, path: &NormPath) {
        self.entries.remove(path);
        self.absent.remove(path);
        self.fresh.remove(path);
        if let Some(parent) = path.parent() {
            self.fresh.remove(&parent);
        }
    }

    fn forget_subtree(&mut self, dir: &NormPath) {
        self.forget(dir);
        self.drop_below(dir);
    }

    fn drop_below(&mut self, dir: &NormPath) {
        for k in self.subtree_keys(dir) {
            self.entries.remove(&k);
        }
        self.absent.retain(|p| !p.is_descendant_of(dir));
        self.fresh.retain(|p| !p.is_descendant_of(dir));
    }

    fn subtree_keys(&self, dir: &NormPath) -> Vec<NormPath> {
        let lo = if dir.is_root() { "/".to_owned() } else { format!("{dir}/") };
        self.entries
            .range::<str, _>((Bound::Excluded(lo.as_str()), Bound::Unbounded))
            .take_while(|(k, _)| k.as_str().starts_with(&lo))
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// Attribute records served without a store round trip.
#[derive(Default)]
pub struct AttrCache {
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for AttrCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AttrCache").field("entries", &self.len()).finish()
    }
}

/// Attribute record for an object created by a pending operation.
pub fn synthesize(kind: FileKind, perm: u32, size: u64, owner: (u32, u32)) -> AttrRecord {
    let now = SystemTime::now();
    AttrRecord {
        kind,
        mode: kind.type_bits() | (perm & 0o7777),
        size,
        nlink: 1,
        uid: owner.0,
        gid: owner.1,
        atime: now,
        mtime: now,
        ctime: now,
    }
}

impl AttrCache {
    pub fn new() -> Self {
        AttrCache::default()
    }

    pub fn get(&self, path: &NormPath) -> Option<CachedAttr> {
        self.inner.lock().entries.get(path).cloned()
    }

    pub fn contains(&self, path: &NormPath) -> bool {
        self.inner.lock().entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, source: AttrSource) -> usize {
        self.inner.lock().entries.values().filter(|c| c.source == source).count()
    }

    pub fn ticket(&self, path: &NormPath) -> Ticket {
        let inner = self.inner.lock();
        Ticket { gen: inner.gens.get(path).copied().unwrap_or(0), epoch: inner.epoch }
    }

    /// Stores a record read from the store unless `path` changed since
    /// `ticket` was taken.
    pub fn insert_if_current(&self, path: &NormPath, ticket: Ticket, attr: AttrRecord) -> bool {
        let mut inner = self.inner.lock();
        let current = Ticket { gen: inner.gens.get(path).copied().unwrap_or(0), epoch: inner.epoch };
        if current != ticket {
            return false;
        }
        inner.entries.insert(path.clone(), CachedAttr { attr, source: AttrSource::Prefetched });
        true
    }

    pub fn synthesize(&self, path: &NormPath, attr: AttrRecord) {
        let mut inner = self.inner.lock();
        inner.bump(path);
        inner.absent.remove(path);
        if attr.kind == FileKind::Dir {
            inner.fresh.insert(path.clone());
        } else {
            inner.fresh.remove(path);
        }
        inner.entries.insert(path.clone(), CachedAttr { attr, source: AttrSource::Synthesized });
    }

    /// True when pending operations guarantee `path` does not exist.
    pub fn known_absent(&self, path: &NormPath) -> bool {
        let inner = self.inner.lock();
        if inner.entries.contains_key(path) {
            return false;
        }
        inner.absent.contains(path) || path.parent().is_some_and(|p| inner.fresh.contains(&p))
    }

    /// Records that the store reported `path` missing, unless it changed
    /// since `ticket` was taken.
    pub fn note_missing(&self, path: &NormPath, ticket: Ticket) {
        let mut inner = self.inner.lock();
        let current = Ticket { gen: inner.gens.get(path).copied().unwrap_or(0), epoch: inner.epoch };
        if current == ticket && !inner.entries.contains_key(path) {
            inner.absent.insert(path.clone());
        }
    }

    /// Records a pending removal of `path`.
    pub fn mark_absent(&self, path: &NormPath) {
        let mut inner = self.inner.lock();
        inner.bump(path);
        inner.forget_subtree(path);
        inner.absent.insert(path.clone());
    }

    /// Applies `f` to the entry if one is cached. Either way the path is
    /// marked changed. Returns whether an entry was updated.
    pub fn update(&self, path: &NormPath, f: impl FnOnce(&mut AttrRecord)) -> bool {
        let mut inner = self.inner.lock();
        inner.bump(path);
        match inner.entries.get_mut(path) {
            Some(c) => {
                f(&mut c.attr);
                c.source = AttrSource::Synthesized;
                true
            }
            None => false,
        }
    }

    pub fn invalidate(&self, path: &NormPath) {
        let mut inner = self.inner.lock();
        inner.bump(path);
        inner.forget(path);
    }

    pub fn invalidate_subtree(&self, path: &NormPath) {
        let mut inner = self.inner.lock();
        inner.epoch += 1;
        inner.bump(path);
        inner.forget_subtree(path);
    }

    /// Moves the entry for `from` and everything below it to `to`.
    pub fn rename(&self, from: &NormPath, to: &NormPath) {
        let mut inner = self.inner.lock();
        inner.epoch += 1;
        inner.bump(from);
        inner.bump(to);
        if from == to {
            return;
        }
        let source_known = inner.entries.contains_key(from);
        inner.entries.remove(to);
        inner.absent.remove(to);
        inner.fresh.remove(to);
        inner.drop_below(to);
        if !source_known {
            if let Some(parent) = to.parent() {
                inner.fresh.remove(&parent);
            }
        }
        inner.fresh.retain(|p| p != from && !p.is_descendant_of(from));
        inner.absent.retain(|p| !p.is_descendant_of(from));
        let mut moved = Vec::new();
        if let Some(c) = inner.entries.remove(from) {
            moved.push((to.clone(), c));
        }
        for k in inner.subtree_keys(from) {
            let c = inner.entries.remove(&k).expect("listed");
            moved.push((k.rebase(from, to).expect("below source"), c));
        }
        let now = SystemTime::now();
        for (k, mut c) in moved {
            if &k == to {
                c.attr.ctime = now;
                c.source = AttrSource::Synthesized;
            }
            inner.entries.insert(k, c);
        }
        inner.absent.insert(from.clone());
    }

    pub fn clear(&self) {
        let mut inner = self.inner.lock();
        inner.epoch += 1;
        inner.entries.clear();
        inner.fresh.clear();
        inner.absent.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::p;

    fn file(size: u64) -> AttrRecord {
        synthesize(FileKind::File, 0o644, size, (1, 1))
    }

    #[test]
    fn stale_tickets_are_rejected() {
        let c = AttrCache::new();
        let t = c.ticket(&p("/f"));
        c.invalidate(&p("/f"));
        assert!(!c.insert_if_current(&p("/f"), t, file(1)));
        let t = c.ticket(&p("/f"));
        assert!(c.insert_if_current(&p("/f"), t, file(1)));
        assert_eq!(c.get(&p("/f")).unwrap().source, AttrSource::Prefetched);
    }

    #[test]
    fn rename_moves_subtree_and_bumps_epoch() {
        let c = AttrCache::new();
        c.synthesize(&p("/a"), synthesize(FileKind::Dir, 0o755, 0, (0, 0)));
        c.synthesize(&p("/a/x"), file(3));
        c.synthesize(&p("/ab"), file(4));
        let t = c.ticket(&p("/a/y"));
        c.rename(&p("/a"), &p("/b"));
        assert!(c.get(&p("/a/x")).is_none());
        assert_eq!(c.get(&p("/b/x")).unwrap().attr.size, 3);
        assert_eq!(c.get(&p("/ab")).unwrap().attr.size, 4);
        assert!(!c.insert_if_current(&p("/a/y"), t, file(0)));
    }

    #[test]
    fn absence_tracking() {
        let c = AttrCache::new();
        assert!(!c.known_absent(&p("/d/x")));
        c.synthesize(&p("/d"), synthesize(FileKind::Dir, 0o755, 0, (0, 0)));
        assert!(c.known_absent(&p("/d/x")));
        c.synthesize(&p("/d/x"), file(0));
        assert!(!c.known_absent(&p("/d/x")));
        c.mark_absent(&p("/d/x"));
        assert!(c.known_absent(&p("/d/x")));
        c.invalidate(&p("/d/y"));
        assert!(!c.known_absent(&p("/d/z")));
        assert!(c.known_absent(&p("/d/x")));
        c.rename(&p("/q"), &p("/d/x"));
        assert!(!c.known_absent(&p("/d/x")));
        assert!(c.known_absent(&p("/q")));
    }

    #[test]
    fn synthesized_record_is_consistent() {
        let a = synthesize(FileKind::Symlink, 0o777, 5, (3, 4));
        assert!(a.is_consistent());
        assert_eq!(a.nlink, 1);
        assert_eq!((a.uid, a.gid), (3, 4));
    }
}
