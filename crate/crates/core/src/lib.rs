//! A passthrough filesystem layer that acknowledges metadata-changing calls
//! immediately and applies them to the backing directory in the background.
//!
//! Operations touching the same path run in the order they were issued;
//! unrelated paths proceed in parallel. Reads wait for every earlier
//! operation on the paths they depend on, so callers always see their own
//! writes. Failures that surface after a call returned are collected in a
//! ledger, reported on stderr, and turned into a non-zero exit status.
//!
//! The `examples/` directory is the quickest tour:
//!
//! - `ordering_engine`: per-path ordering in the deferred-operation engine
//! - `eager_fs_ops`: latency hidden from callers, compared with passthrough
//! - `deferred_errors`: late failures and how they are reported
//! - `readdir_prefetch`: listings that warm the attribute cache
//! - `flush_equivalence`: random traces checked against a synchronous reference
//! - `bench_extract`: the small-file benchmark harness
//! - `mount_passthrough`: a real kernel mount
//!
//! ```bash
//! cargo run -p eagerfs --example eager_fs_ops
//! ```

pub mod error;
pub mod kind;
pub mod path;
pub mod store;
pub mod engine;
pub mod fs;
pub mod trace;
pub mod bench;
pub mod bridge;
pub mod cli;
