use std::sync::Arc;

use eagerfs::engine::MemorySink;
use eagerfs::fs::{EagerFs, EagerPolicy};
use eagerfs::store::{BackingStore, InjectedStore, LocalStore, MemTree};
use eagerfs::trace::{replay_fs, replay_sync, Trace, TraceConfig};

fn no_symlinks() -> TraceConfig {
    TraceConfig { symlinks: false, ..TraceConfig::default() }
}

#[test]
fn memtree_and_local_store_agree() {
    let cfg = no_symlinks();
    for seed in 0..25 {
        let trace = Trace::generate(seed, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let local = LocalStore::new(dir.path()).unwrap();
        let fake = MemTree::new();
        let on_local = replay_sync(&trace, &local).unwrap();
        let on_fake = replay_sync(&trace, &fake).unwrap();
        assert_eq!(on_local, on_fake, "seed {seed}");
        let (a, b) = (local.snapshot_tree(), fake.snapshot_tree());
        assert_eq!(a, b, "seed {seed}: {:?}", a.diff(&b));
    }
}

#[test]
fn eager_over_local_store_matches_sync_oracle() {
    let cfg = no_symlinks();
    for seed in 100..108 {
        let trace = Trace::generate(seed, &cfg);
        let oracle = MemTree::new();
        let expected = replay_sync(&trace, &oracle).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(InjectedStore::new(LocalStore::new(dir.path()).unwrap()));
        let fs = EagerFs::with_sink(store.clone(), EagerPolicy::default(), MemorySink::new());
        let got = replay_fs(&trace, &fs);
        assert!(fs.drain().is_empty(), "seed {seed}");
        assert_eq!(got, expected, "seed {seed}");
        let (a, b) = (store.snapshot_tree(), oracle.snapshot_tree());
        assert_eq!(a, b, "seed {seed}: {:?}", a.diff(&b));
    }
}
