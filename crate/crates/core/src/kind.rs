//! Operation kinds. The first twenty variants are the mutations that can be
//! acknowledged eagerly; the rest are inherently synchronous.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Create,
    OpenTruncating,
    Write,
    Truncate,
    Flush,
    Release,
    Fsync,
    Mkdir,
    Rmdir,
    Unlink,
    Rename,
    Symlink,
    Link,
    Mknod,
    Chmod,
    Chown,
    Utimens,
    Setxattr,
    Removexattr,
    Fallocate,
    // synchronous kinds
    Open,
    Read,
    Readdir,
    Getattr,
    Readlink,
    Statfs,
    Getxattr,
    Listxattr,
}

impl OpKind {
    /// The operations with an eagerness flag, in flag-table order.
    pub const EAGER_CAPABLE: [OpKind; 20] = [
        OpKind::Create,
        OpKind::OpenTruncating,
        OpKind::Write,
        OpKind::Truncate,
        OpKind::Flush,
        OpKind::Release,
        OpKind::Fsync,
        OpKind::Mkdir,
        OpKind::Rmdir,
        OpKind::Unlink,
        OpKind::Rename,
        OpKind::Symlink,
        OpKind::Link,
        OpKind::Mknod,
        OpKind::Chmod,
        OpKind::Chown,
        OpKind::Utimens,
        OpKind::Setxattr,
        OpKind::Removexattr,
        OpKind::Fallocate,
    ];

    pub const SYNCHRONOUS: [OpKind; 8] = [
        OpKind::Open,
        OpKind::Read,
        OpKind::Readdir,
        OpKind::Getattr,
        OpKind::Readlink,
        OpKind::Statfs,
        OpKind::Getxattr,
        OpKind::Listxattr,
    ];

    pub fn all() -> impl Iterator<Item = OpKind> {
        Self::EAGER_CAPABLE.into_iter().chain(Self::SYNCHRONOUS)
    }

    pub fn is_eager_capable(self) -> bool {
        (self as usize) < Self::EAGER_CAPABLE.len()
    }

    /// Index into the flag table.
    pub fn flag_index(self) -> Option<usize> {
        self.is_eager_capable().then_some(self as usize)
    }

    /// Data-moving kinds. Everything else counts as metadata for latency
    /// profiles.
    pub fn is_data(self) -> bool {
        matches!(self, OpKind::Read | OpKind::Write | OpKind::Fallocate)
    }

    pub fn is_metadata(self) -> bool {
        !self.is_data()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Create => "create",
            OpKind::OpenTruncating => "open-truncating",
            OpKind::Write => "write",
            OpKind::Truncate => "truncate",
            OpKind::Flush => "flush",
            OpKind::Release => "release",
            OpKind::Fsync => "fsync",
            OpKind::Mkdir => "mkdir",
            OpKind::Rmdir => "rmdir",
            OpKind::Unlink => "unlink",
            OpKind::Rename => "rename",
            OpKind::Symlink => "symlink",
            OpKind::Link => "link",
            OpKind::Mknod => "mknod",
            OpKind::Chmod => "chmod",
            OpKind::Chown => "chown",
            OpKind::Utimens => "utimens",
            OpKind::Setxattr => "setxattr",
            OpKind::Removexattr => "removexattr",
            OpKind::Fallocate => "fallocate",
            OpKind::Open => "open",
            OpKind::Read => "read",
            OpKind::Readdir => "readdir",
            OpKind::Getattr => "getattr",
            OpKind::Readlink => "readlink",
            OpKind::Statfs => "statfs",
            OpKind::Getxattr => "getxattr",
            OpKind::Listxattr => "listxattr",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown operation kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for OpKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::all()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_table_has_twenty_entries_in_order() {
        assert_eq!(OpKind::EAGER_CAPABLE.len(), 20);
        for (i, k) in OpKind::EAGER_CAPABLE.iter().enumerate() {
            assert_eq!(k.flag_index(), Some(i));
        }
        for k in OpKind::SYNCHRONOUS {
            assert!(!k.is_eager_capable());
        }
    }

    #[test]
    fn names_parse_back() {
        for k in OpKind::all() {
            assert_eq!(k.as_str().parse::<OpKind>().unwrap(), k);
        }
        assert!("frobnicate".parse::<OpKind>().is_err());
    }

    #[test]
    fn reads_are_not_eager() {
        assert!(!OpKind::Read.is_eager_capable());
        assert!(!OpKind::Readdir.is_eager_capable());
    }
}
