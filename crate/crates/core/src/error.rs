//! Semantic error vocabulary shared by the store, the ordering engine and the
//! filesystem layer. Host error numbers only appear at the edges: the local
//! passthrough store maps `io::Error` into these codes, and the kernel bridge
//! maps them back out.

use std::io;

/// Result alias used throughout the crate.
pub type FsResult<T> = Result<T, FsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, thiserror::Error)]
pub enum FsError {
    #[error("no such file or directory")]
    NotFound,
    #[error("permission denied")]
    PermissionDenied,
    #[error("disk quota exceeded")]
    QuotaExceeded,
    #[error("not a directory")]
    NotADirectory,
    #[error("is a directory")]
    IsADirectory,
    #[error("file exists")]
    AlreadyExists,
    #[error("directory not empty")]
    NotEmpty,
    #[error("invalid argument")]
    InvalidArgument,
    #[error("operation not supported")]
    NotSupported,
    #[error("no such attribute")]
    NoAttribute,
    #[error("cross-device link")]
    CrossDevice,
    #[error("input/output error")]
    IoFailure,
}

impl FsError {
    pub const ALL: [FsError; 12] = [
        FsError::NotFound,
        FsError::PermissionDenied,
        FsError::QuotaExceeded,
        FsError::NotADirectory,
        FsError::IsADirectory,
        FsError::AlreadyExists,
        FsError::NotEmpty,
        FsError::InvalidArgument,
        FsError::NotSupported,
        FsError::NoAttribute,
        FsError::CrossDevice,
        FsError::IoFailure,
    ];

    /// Stable identifier used in diagnostics and fault specifications.
    pub fn code(&self) -> &'static str {
        match self {
            FsError::NotFound => "NotFound",
            FsError::PermissionDenied => "PermissionDenied",
            FsError::QuotaExceeded => "QuotaExceeded",
            FsError::NotADirectory => "NotADirectory",
            FsError::IsADirectory => "IsADirectory",
            FsError::AlreadyExists => "AlreadyExists",
            FsError::NotEmpty => "NotEmpty",
            FsError::InvalidArgument => "InvalidArgument",
            FsError::NotSupported => "NotSupported",
            FsError::NoAttribute => "NoAttribute",
            FsError::CrossDevice => "CrossDevice",
            FsError::IoFailure => "IOFailure",
        }
    }

    pub fn from_code(code: &str) -> Option<FsError> {
        FsError::ALL
            .into_iter()
            .find(|e| e.code().eq_ignore_ascii_case(code))
    }

    /// Maps a host error number into the semantic vocabulary. Anything
    /// without a dedicated code collapses into `IoFailure`.
    pub fn from_errno(errno: i32) -> FsError {
        match errno {
            libc::ENOENT => FsError::NotFound,
            libc::EACCES | libc::EPERM | libc::EROFS => FsError::PermissionDenied,
            libc::EDQUOT | libc::ENOSPC => FsError::QuotaExceeded,
            libc::ENOTDIR => FsError::NotADirectory,
            libc::EISDIR => FsError::IsADirectory,
            libc::EEXIST => FsError::AlreadyExists,
            libc::ENOTEMPTY => FsError::NotEmpty,
            libc::EINVAL | libc::ENAMETOOLONG | libc::ELOOP => FsError::InvalidArgument,
            libc::EOPNOTSUPP | libc::ENOSYS => FsError::NotSupported,
            libc::ENODATA => FsError::NoAttribute,
            libc::EXDEV => FsError::CrossDevice,
            _ => FsError::IoFailure,
        }
    }
}

impl From<io::Error> for FsError {
    fn from(err: io::Error) -> Self {
        match err.raw_os_error() {
            Some(errno) => FsError::from_errno(errno),
            None => match err.kind() {
                io::ErrorKind::NotFound => FsError::NotFound,
                io::ErrorKind::PermissionDenied => FsError::PermissionDenied,
                io::ErrorKind::AlreadyExists => FsError::AlreadyExists,
                io::ErrorKind::InvalidInput => FsError::InvalidArgument,
                io::ErrorKind::Unsupported => FsError::NotSupported,
                _ => FsError::IoFailure,
            },
        }
    }
}

/// Rejected path syntax.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path escapes the filesystem root: {0}")]
    EscapesRoot(String),
    #[error("path contains a NUL byte")]
    Nul,
    #[error("invalid path component {0:?}")]
    BadComponent(String),
}

impl From<PathError> for FsError {
    fn from(_: PathError) -> Self {
        FsError::InvalidArgument
    }
}
