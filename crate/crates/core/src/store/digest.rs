use std::fmt;

use sha2::{Digest, Sha256};

use super::FileKind;

/// One line of a canonical tree listing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DigestEntry {
    pub path: String,
    pub kind: DigestKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DigestKind {
    Dir { perm: u32 },
    File { perm: u32, size: u64, content: [u8; 32] },
    Symlink { target: String },
    Other,
}

impl DigestEntry {
    pub fn dir(path: impl Into<String>, perm: u32) -> Self {
        DigestEntry { path: path.into(), kind: DigestKind::Dir { perm: perm & 0o7777 } }
    }

    pub fn file(path: impl Into<String>, perm: u32, content: &[u8]) -> Self {
        DigestEntry {
            path: path.into(),
            kind: DigestKind::File {
                perm: perm & 0o7777,
                size: content.len() as u64,
                content: Sha256::digest(content).into(),
            },
        }
    }

    pub fn symlink(path: impl Into<String>, target: impl Into<String>) -> Self {
        DigestEntry { path: path.into(), kind: DigestKind::Symlink { target: target.into() } }
    }

    pub fn other(path: impl Into<String>) -> Self {
        DigestEntry { path: path.into(), kind: DigestKind::Other }
    }

    pub fn file_kind(&self) -> FileKind {
        match self.kind {
            DigestKind::Dir { .. } => FileKind::Dir,
            DigestKind::File { .. } => FileKind::File,
            DigestKind::Symlink { .. } => FileKind::Symlink,
            DigestKind::Other => FileKind::Other,
        }
    }
}

impl fmt::Display for DigestEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DigestKind::Dir { perm } => write!(f, "d {:o} {}", perm, self.path),
            DigestKind::File { perm, size, content } => {
                write!(f, "f {:o} {} {} {}", perm, size, hex::encode(content), self.path)
            }
            DigestKind::Symlink { target } => write!(f, "l {} -> {}", self.path, target),
            DigestKind::Other => write!(f, "o {}", self.path),
        }
    }
}

/// Deterministic digest of paths, kinds, permission bits, sizes and content
/// hashes. Timestamps, ownership, link counts and xattrs are excluded.
#[derive(Clone)]
pub struct TreeDigest {
    hash: [u8; 32],
    entries: Vec<DigestEntry>,
}

impl TreeDigest {
    pub fn hex(&self) -> String {
        hex::encode(self.hash)
    }

    pub fn entries(&self) -> &[DigestEntry] {
        &self.entries
    }

    /// Human-readable differences, for assertion messages.
    pub fn diff(&self, other: &TreeDigest) -> Vec<String> {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.path == y.path => {
                    if x != y {
                        out.push(format!("~ {x}  vs  {y}"));
                    }
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x.path < y.path => {
                    out.push(format!("- {x}"));
                    i += 1;
                }
                (Some(_), Some(y)) => {
                    out.push(format!("+ {y}"));
                    j += 1;
                }
                (Some(x), None) => {
                    out.push(format!("- {x}"));
                    i += 1;
                }
                (None, Some(y)) => {
                    out.push(format!("+ {y}"));
                    j += 1;
                }
                (None, None) => break,
            }
        }
        out
    }
}

impl PartialEq for TreeDigest {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
    }
}

impl Eq for TreeDigest {}

impl fmt::Debug for TreeDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TreeDigest({}, {} entries)", &self.hex()[..16], self.entries.len())
    }
}

/// Builds a digest from entries in any order. The root entry, if present, is
/// ignored so stores with different root permissions compare equal.
pub fn digest_entries(mut entries: Vec<DigestEntry>) -> TreeDigest {
    entries.retain(|e| e.path != "/");
    entries.sort();
    let mut h = Sha256::new();
    for e in &entries {
        h.update(e.to_string().as_bytes());
        h.update(b"\n");
    }
    TreeDigest { hash: h.finalize().into(), entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_digest_is_constant() {
        let a = digest_entries(vec![]);
        let b = digest_entries(vec![DigestEntry::dir("/", 0o700)]);
        assert_eq!(a, b);
        assert_eq!(
            a.hex(),
            // sha256 of the empty string
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn order_independent_and_content_sensitive() {
        let x = digest_entries(vec![
            DigestEntry::file("/b", 0o644, b"hi"),
            DigestEntry::dir("/a", 0o755),
        ]);
        let y = digest_entries(vec![
            DigestEntry::dir("/a", 0o755),
            DigestEntry::file("/b", 0o644, b"hi"),
        ]);
        let z = digest_entries(vec![
            DigestEntry::dir("/a", 0o755),
            DigestEntry::file("/b", 0o644, b"ho"),
        ]);
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_eq!(x.diff(&z).len(), 1);
    }
}
