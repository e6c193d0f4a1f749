//! Listing a directory caches the attributes of its entries, so the stat
//! calls that usually follow never reach the store.

use std::sync::Arc;

use eagerfs::bench::{populate, Workload};
use eagerfs::fs::{EagerFs, EagerPolicy};
use eagerfs::kind::OpKind;
use eagerfs::path::NormPath;
use eagerfs::store::{BackingStore, InjectedStore, StoreRequest};

fn main() {
    let store = Arc::new(InjectedStore::fake());
    let dir = NormPath::new("/photos").unwrap();
    store.apply(&StoreRequest::Mkdir { path: dir.clone(), mode: 0o755 }).unwrap();
    populate(&*store, &Workload { files: 200, fanout: 200, ..Workload::default() }.plan(&dir)).unwrap();

    let fs = EagerFs::new(store.clone(), EagerPolicy::default());
    let entries = fs.readdir(&dir).unwrap();
    fs.engine().quiesce();
    store.log().clear();

    let mut bytes = 0;
    for entry in &entries {
        bytes += fs.getattr(&dir.join(&entry.name).unwrap()).unwrap().size;
    }
    println!("{} entries, {bytes} bytes", entries.len());
    println!("store getattr calls after listing: {}", store.log().count(OpKind::Getattr));
    println!("cached attributes: {}", fs.stats().cached_attrs);
}
