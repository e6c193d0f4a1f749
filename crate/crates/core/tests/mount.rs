//! Real kernel mounts. Each test skips (with a note on stderr) when the
//! environment cannot mount.

use std::io::{Read, Seek, SeekFrom, Write};
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use eagerfs::bridge::{mount, mount_with_store, MountConfig, MountSession};
use eagerfs::cli::is_mounted;
use eagerfs::engine::MemorySink;
use eagerfs::fs::EagerPolicy;
use eagerfs::store::{InjectedStore, LatencyProfile, LocalStore};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

struct Dirs {
    _root: tempfile::TempDir,
    source: std::path::PathBuf,
    mnt: std::path::PathBuf,
}

fn dirs() -> Dirs {
    let root = tempfile::tempdir().unwrap();
    let source = root.path().join("src");
    let mnt = root.path().join("mnt");
    std::fs::create_dir(&source).unwrap();
    std::fs::create_dir(&mnt).unwrap();
    Dirs { _root: root, source, mnt }
}

fn try_mount(cfg: &MountConfig) -> Option<MountSession<LocalStore>> {
    match mount(cfg) {
        Ok(s) => Some(s),
        Err(e) => {
            eprintln!("skipping: cannot mount here ({e})");
            None
        }
    }
}

#[test]
fn files_created_through_the_mount_reach_the_source() {
    let _g = serial();
    let d = dirs();
    let Some(session) = try_mount(&MountConfig::new(&d.source, &d.mnt)) else { return };
    std::fs::create_dir(d.mnt.join("sub")).unwrap();
    std::fs::write(d.mnt.join("sub/hello.txt"), b"hello").unwrap();
    std::fs::set_permissions(d.mnt.join("sub/hello.txt"), std::fs::Permissions::from_mode(0o600)).unwrap();
    assert_eq!(std::fs::read(d.mnt.join("sub/hello.txt")).unwrap(), b"hello");
    let names: Vec<_> = std::fs::read_dir(d.mnt.join("sub")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["hello.txt"]);
    let summary = session.unmount().unwrap();
    assert!(summary.is_empty());
    assert_eq!(std::fs::read(d.source.join("sub/hello.txt")).unwrap(), b"hello");
    let mode = std::fs::metadata(d.source.join("sub/hello.txt")).unwrap().permissions().mode();
    assert_eq!(mode & 0o777, 0o600);
}

#[test]
fn pending_limit_is_configurable() {
    let _g = serial();
    let d = dirs();
    let cfg = MountConfig::new(&d.source, &d.mnt).with_policy(EagerPolicy::default().with_max_pending(4000));
    let Some(session) = try_mount(&cfg) else { return };
    assert_eq!(session.stats().engine.throttle.limit, 4000);
    session.unmount().unwrap();
}

#[test]
fn unmount_waits_for_pending_operations() {
    let _g = serial();
    let d = dirs();
    let store = InjectedStore::new(LocalStore::new(&d.source).unwrap());
    store.set_latency(LatencyProfile::metadata_ms(20.0));
    let cfg = MountConfig::new(&d.source, &d.mnt);
    let session = match mount_with_store(&cfg, Arc::new(store), MemorySink::new()) {
        Ok(s) => s,
        Err(e) => return eprintln!("skipping: cannot mount here ({e})"),
    };
    for i in 0..40 {
        let path = d.mnt.join(format!("f{i}"));
        std::fs::write(&path, format!("payload {i}")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o640)).unwrap();
    }
    let summary = session.unmount().unwrap();
    assert!(summary.is_empty());
    for i in 0..40 {
        let path = d.source.join(format!("f{i}"));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("payload {i}"));
        assert_eq!(std::fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o640);
    }
}

#[test]
fn unsupported_requests_do_not_break_the_mount() {
    let _g = serial();
    let d = dirs();
    let Some(session) = try_mount(&MountConfig::new(&d.source, &d.mnt)) else { return };
    std::fs::write(d.mnt.join("a"), b"0123456789").unwrap();
    std::fs::copy(d.mnt.join("a"), d.mnt.join("b")).unwrap();
    let _ = std::fs::File::open(&d.mnt).and_then(|f| f.sync_all());
    let mut f = std::fs::OpenOptions::new().read(true).write(true).open(d.mnt.join("b")).unwrap();
    f.seek(SeekFrom::Start(4)).unwrap();
    f.write_all(b"xy").unwrap();
    f.seek(SeekFrom::Start(0)).unwrap();
    let mut back = String::new();
    f.read_to_string(&mut back).unwrap();
    assert_eq!(back, "0123xy6789");
    drop(f);
    session.unmount().unwrap();
    assert_eq!(std::fs::read(d.source.join("b")).unwrap(), b"0123xy6789");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eagerfs"))
}

fn wait_mounted(child: &mut Child, mnt: &Path) -> bool {
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if is_mounted(mnt) {
            return true;
        }
        if child.try_wait().unwrap().is_some() {
            return false;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    false
}

fn terminate(child: Child) -> std::process::Output {
    unsafe { libc::kill(child.id() as i32, libc::SIGTERM) };
    child.wait_with_output().unwrap()
}

fn spawn_cli(d: &Dirs, extra: &[&str]) -> Option<Child> {
    let mut child = binary()
        .args(extra)
        .arg(&d.source)
        .arg(&d.mnt)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    if wait_mounted(&mut child, &d.mnt) {
        Some(child)
    } else {
        let _ = child.kill();
        let out = child.wait_with_output().unwrap();
        eprintln!("skipping: cli could not mount: {}", String::from_utf8_lossy(&out.stderr));
        None
    }
}

#[test]
fn cli_clean_run_exits_zero() {
    let _g = serial();
    let d = dirs();
    let Some(child) = spawn_cli(&d, &[]) else { return };
    std::fs::write(d.mnt.join("f"), b"data").unwrap();
    let out = terminate(child);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(d.source.join("f")).unwrap(), b"data");
}

#[test]
fn cli_deferred_failure_exits_one_and_reports_twice() {
    let _g = serial();
    let d = dirs();
    let Some(child) = spawn_cli(&d, &["--inject-fault", "chmod:/f*=PermissionDenied"]) else { return };
    std::fs::write(d.mnt.join("f1"), b"data").unwrap();
    std::fs::set_permissions(d.mnt.join("f1"), std::fs::Permissions::from_mode(0o600)).unwrap();
    let out = terminate(child);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().filter(|l| l.starts_with("EAGERFS-ERR")).collect();
    assert_eq!(lines.len(), 2, "{stderr}");
    assert!(lines[0].contains("op=chmod") && lines[0].contains("phase=immediate"));
    assert!(lines[1].contains("phase=teardown"));
    let seq = |l: &str| l.split_whitespace().nth(1).map(str::to_owned);
    assert_eq!(seq(lines[0]), seq(lines[1]));
    assert_eq!(std::fs::read(d.source.join("f1")).unwrap(), b"data");
}

#[test]
fn cli_sigterm_drains_pending_operations() {
    let _g = serial();
    let d = dirs();
    let Some(child) = spawn_cli(&d, &["--inject-latency-ms", "10"]) else { return };
    for i in 0..30 {
        std::fs::create_dir(d.mnt.join(format!("d{i}"))).unwrap();
        std::fs::write(d.mnt.join(format!("d{i}/f")), b"x").unwrap();
    }
    let out = terminate(child);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..30 {
        assert_eq!(std::fs::read(d.source.join(format!("d{i}/f"))).unwrap(), b"x");
    }
}

#[test]
fn cli_usage_errors_exit_two() {
    let out = binary().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = binary().arg("--max-pending").arg("0").arg("/tmp").arg("/mnt").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = binary().arg("/definitely/missing").arg("/also/missing").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let d = dirs();
    let out = binary().arg(&d.source).arg(&d.source).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_bench_writes_csv() {
    let root = tempfile::tempdir().unwrap();
    let csv = root.path().join("out.csv");
    let out = binary()
        .args(["bench", "--scenario", "extract", "--files", "20", "--latency-ms", "0.1", "--replicates", "2", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("scenario,mode,replicate,seconds,ok"));
    assert_eq!(lines.count(), 6);
}
