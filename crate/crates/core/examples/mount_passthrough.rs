//! Mounts a directory through the kernel, writes a few files via ordinary
//! std::fs calls, unmounts, and shows the result in the source directory.
//!
//! Needs permission to mount FUSE filesystems.

use eagerfs::bridge::{mount, MountConfig};

fn main() {
    let root = tempfile::tempdir().unwrap();
    let (source, mnt) = (root.path().join("source"), root.path().join("mnt"));
    std::fs::create_dir(&source).unwrap();
    std::fs::create_dir(&mnt).unwrap();

    let session = match mount(&MountConfig::new(&source, &mnt)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot mount: {e}");
            std::process::exit(2);
        }
    };
    std::fs::create_dir(mnt.join("notes")).unwrap();
    for day in ["mon", "tue", "wed"] {
        std::fs::write(mnt.join("notes").join(day), format!("{day}\n")).unwrap();
    }
    println!("pending while mounted: {:?}", session.stats().engine);

    let summary = session.unmount().unwrap();
    println!("unmounted with {} deferred errors", summary.len());
    for entry in std::fs::read_dir(source.join("notes")).unwrap() {
        let entry = entry.unwrap();
        println!("{} {} bytes", entry.file_name().to_string_lossy(), entry.metadata().unwrap().len());
    }
}
