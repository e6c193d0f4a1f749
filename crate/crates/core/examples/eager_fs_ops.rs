//! Metadata calls return at once; the backing store catches up in the
//! background. Compare wall time against plain passthrough.

use std::sync::Arc;
use std::time::Instant;

use eagerfs::fs::{EagerFs, EagerPolicy, OpenFlags};
use eagerfs::path::NormPath;
use eagerfs::store::{InjectedStore, LatencyProfile};

fn run(label: &str, policy: EagerPolicy) {
    let store = Arc::new(InjectedStore::fake());
    store.set_latency(LatencyProfile::metadata_ms(2.0));
    let fs = EagerFs::new(store.clone(), policy);

    let start = Instant::now();
    fs.mkdir(&NormPath::new("/out").unwrap(), 0o755).unwrap();
    for i in 0..50 {
        let path = NormPath::new(&format!("/out/file{i}")).unwrap();
        let fh = fs.open(&path, OpenFlags::create(0o644)).unwrap();
        fs.write_handle(fh, 0, format!("contents of {i}\n").as_bytes()).unwrap();
        fs.release(fh).unwrap();
        fs.chmod(&path, 0o600).unwrap();
    }
    let returned = start.elapsed();
    let summary = fs.drain();
    println!(
        "{label:<12} calls returned after {returned:?}, durable after {:?}, {} errors, {} backend calls",
        start.elapsed(),
        summary.len(),
        store.log().len()
    );
}

fn main() {
    run("eager", EagerPolicy::default());
    run("passthrough", EagerPolicy::passthrough());
}
