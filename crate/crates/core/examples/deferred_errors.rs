//! A failure that happens after the call returned is reported twice: once
//! when it happens and again at teardown. The exit code reflects it.

use std::sync::Arc;

use eagerfs::engine::MemorySink;
use eagerfs::error::FsError;
use eagerfs::fs::{EagerFs, EagerPolicy, OpenFlags};
use eagerfs::kind::OpKind;
use eagerfs::path::NormPath;
use eagerfs::store::{FaultRule, InjectedStore};

fn main() {
    let store = Arc::new(InjectedStore::fake());
    store.add_fault(FaultRule::new(FsError::QuotaExceeded).on_kind(OpKind::Write).on_path("/big*").unwrap());
    let sink = MemorySink::new();
    let fs = EagerFs::with_sink(store, EagerPolicy::default(), sink.clone());

    for name in ["/small", "/big"] {
        let path = NormPath::new(name).unwrap();
        let fh = fs.open(&path, OpenFlags::create(0o644)).unwrap();
        let written = fs.write_handle(fh, 0, &[7; 4096]).unwrap();
        fs.release(fh).unwrap();
        println!("write to {name} returned {written}");
    }

    let summary = fs.drain();
    for line in sink.lines() {
        println!("{line}");
    }
    println!("exit code {}", summary.exit_code());
}
