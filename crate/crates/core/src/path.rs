//! Lexically normalized, root-relative paths.
//!
//! Queue identity is purely lexical: two spellings of the same object through
//! hard links or symlinks are different keys.

use std::fmt;

use crate::error::PathError;

/// An absolute path with no `.`/`..` components, no empty components and no
/// trailing separator. The root is `/`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormPath(String);

impl NormPath {
    pub fn root() -> Self {
        NormPath("/".to_owned())
    }

    /// Normalizes `raw`. Relative input is taken relative to the root; `..`
    /// that would climb above the root is rejected rather than clamped.
    pub fn new(raw: &str) -> Result<Self, PathError> {
        if raw.contains('\0') {
            return Err(PathError::Nul);
        }
        let mut parts: Vec<&str> = Vec::new();
        for comp in raw.split('/') {
            match comp {
                "" | "." => {}
                ".." => {
                    if parts.pop().is_none() {
                        return Err(PathError::EscapesRoot(raw.to_owned()));
                    }
                }
                c => parts.push(c),
            }
        }
        let mut s = String::with_capacity(raw.len() + 1);
        for p in &parts {
            s.push('/');
            s.push_str(p);
        }
        if s.is_empty() {
            s.push('/');
        }
        Ok(NormPath(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == "/"
    }

    /// Path relative to the root, without the leading separator (empty for root).
    pub fn relative(&self) -> &str {
        &self.0[1..]
    }

    pub fn file_name(&self) -> Option<&str> {
        if self.is_root() {
            None
        } else {
            self.0.rsplit('/').next()
        }
    }

    pub fn parent(&self) -> Option<NormPath> {
        if self.is_root() {
            return None;
        }
        let idx = self.0.rfind('/').expect("normalized paths are absolute");
        if idx == 0 {
            Some(NormPath::root())
        } else {
            Some(NormPath(self.0[..idx].to_owned()))
        }
    }

    /// Strict ancestors, nearest first, ending with the root.
    pub fn ancestors(&self) -> Ancestors {
        Ancestors { next: self.parent() }
    }

    /// Appends a single component.
    pub fn join(&self, name: &str) -> Result<NormPath, PathError> {
        if name.is_empty() || name == "." || name == ".." || name.contains('/') {
            return Err(PathError::BadComponent(name.to_owned()));
        }
        if name.contains('\0') {
            return Err(PathError::Nul);
        }
        let mut s = self.0.clone();
        if !self.is_root() {
            s.push('/');
        }
        s.push_str(name);
        Ok(NormPath(s))
    }

    /// True when `self` lies strictly below `ancestor`.
    pub fn is_descendant_of(&self, ancestor: &NormPath) -> bool {
        if ancestor.is_root() {
            return !self.is_root();
        }
        self.0.len() > ancestor.0.len()
            && self.0.starts_with(&ancestor.0)
            && self.0.as_bytes()[ancestor.0.len()] == b'/'
    }

    /// Rewrites a path under `from` to the same position under `to`.
    pub fn rebase(&self, from: &NormPath, to: &NormPath) -> Option<NormPath> {
        if self == from {
            return Some(to.clone());
        }
        if !self.is_descendant_of(from) {
            return None;
        }
        let tail = if from.is_root() {
            &self.0[1..]
        } else {
            &self.0[from.0.len() + 1..]
        };
        let mut s = to.0.clone();
        if !to.is_root() {
            s.push('/');
        }
        s.push_str(tail);
        Some(NormPath(s))
    }

    pub fn depth(&self) -> usize {
        if self.is_root() {
            0
        } else {
            self.0.matches('/').count()
        }
    }
}

pub struct Ancestors {
    next: Option<NormPath>,
}

impl Iterator for Ancestors {
    type Item = NormPath;

    fn next(&mut self) -> Option<NormPath> {
        let cur = self.next.take()?;
        self.next = cur.parent();
        Some(cur)
    }
}

impl fmt::Display for NormPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NormPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl std::borrow::Borrow<str> for NormPath {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for NormPath {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::str::FromStr for NormPath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NormPath::new(s)
    }
}

/// Shorthand for tests and examples. Panics on invalid input.
pub fn p(raw: &str) -> NormPath {
    NormPath::new(raw).unwrap_or_else(|e| panic!("bad path {raw:?}: {e}"))
}
