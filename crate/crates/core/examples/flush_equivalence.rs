//! Replays random traces through the eager layer and through a synchronous
//! reference, then compares every read and the final tree.

use std::sync::Arc;
use std::time::Duration;

use eagerfs::fs::{EagerFs, EagerPolicy};
use eagerfs::store::{BackingStore, InjectedStore, Latency, LatencyProfile, MemTree};
use eagerfs::trace::{replay_fs, replay_sync, Trace, TraceConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = TraceConfig::default();
    let mut mismatches = 0;
    for seed in 0..seeds {
        let trace = Trace::generate(seed, &cfg);
        let reference = MemTree::new();
        let expected = replay_sync(&trace, &reference).expect("traces are valid");

        let store = Arc::new(InjectedStore::fake());
        store.set_latency(LatencyProfile::uniform_all(Latency::Uniform(Duration::ZERO, Duration::from_micros(200))));
        store.seed_latency(seed);
        let fs = EagerFs::new(store.clone(), EagerPolicy::default());
        let observed = replay_fs(&trace, &fs);
        fs.drain();

        let same_reads = observed == expected;
        let same_tree = store.snapshot_tree() == reference.snapshot_tree();
        if !(same_reads && same_tree) {
            mismatches += 1;
        }
        println!("seed {seed:>3}: {:>3} ops, reads {}, tree {}", trace.ops.len(), ok(same_reads), ok(same_tree));
    }
    println!("{mismatches} mismatching traces");
}

fn ok(b: bool) -> &'static str {
    if b { "match" } else { "DIFFER" }
}
