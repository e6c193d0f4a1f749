use std::collections::HashMap;

use crate::path::NormPath;

pub const ROOT_INO: u64 = 1;

/// Two-way map between kernel inode numbers and paths. Numbers are never
/// reused within a session.
#[derive(Debug)]
pub struct InodeTable {
    by_ino: HashMap<u64, NormPath>,
    by_path: HashMap<NormPath, u64>,
    next: u64,
}

impl Default for InodeTable {
    fn default() -> Self {
        let mut t = InodeTable { by_ino: HashMap::new(), by_path: HashMap::new(), next: ROOT_INO + 1 };
        t.by_ino.insert(ROOT_INO, NormPath::root());
        t.by_path.insert(NormPath::root(), ROOT_INO);
        t
    }
}

impl InodeTable {
    pub fn path(&self, ino: u64) -> Option<NormPath> {
        self.by_ino.get(&ino).cloned()
    }

    pub fn ino(&mut self, path: &NormPath) -> u64 {
        if let Some(&ino) = self.by_path.get(path) {
            return ino;
        }
        let ino = self.next;
        self.next += 1;
        self.by_ino.insert(ino, path.clone());
        self.by_path.insert(path.clone(), ino);
        ino
    }

    pub fn len(&self) -> usize {
        self.by_ino.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ino.is_empty()
    }

    /// Drops `path` and everything below it.
    pub fn remove(&mut self, path: &NormPath) {
        let doomed: Vec<NormPath> =
            self.by_path.keys().filter(|p| *p == path || p.is_descendant_of(path)).cloned().collect();
        for p in doomed {
            if let Some(ino) = self.by_path.remove(&p) {
                self.by_ino.remove(&ino);
            }
        }
    }

    /// Moves `from` and its subtree to `to`, keeping inode numbers.
    pub fn rename(&mut self, from: &NormPath, to: &NormPath) {
        if from == to {
            return;
        }
        self.remove(to);
        let moving: Vec<(NormPath, u64)> = self
            .by_path
            .iter()
            .filter(|(p, _)| *p == from || p.is_descendant_of(from))
            .map(|(p, i)| (p.clone(), *i))
            .collect();
        for (old, ino) in moving {
            self.by_path.remove(&old);
            let new = old.rebase(from, to).expect("below source");
            self.by_ino.insert(ino, new.clone());
            self.by_path.insert(new, ino);
        }
    }
}
