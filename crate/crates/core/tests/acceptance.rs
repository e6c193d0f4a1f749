//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to the real
//! stdout (bypassing capture) and then asserts. A global lock keeps the
//! timing-sensitive criteria from competing for the CPU.

use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eagerfs::bench::{run_scenario, BenchConfig, Mode, Scenario, Workload};
use eagerfs::engine::{DeferredOp, Engine, EngineConfig, MemorySink};
use eagerfs::error::FsError;
use eagerfs::fs::{AttrSource, EagerFs, EagerPolicy, OpenFlags};
use eagerfs::kind::OpKind;
use eagerfs::path::NormPath;
use eagerfs::store::{BackingStore, FaultRule, InjectedStore, Latency, LatencyProfile, MemTree, StoreRequest};
use eagerfs::trace::{ordering_violations, replay_fs, replay_sync, Trace, TraceConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, pass: bool, detail: String) -> bool {
    let line = format!("criterion {id:>2} {name:<28} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}

fn p(s: &str) -> NormPath {
    NormPath::new(s).unwrap()
}

fn quiet_fs<S: BackingStore>(store: Arc<S>, policy: EagerPolicy) -> EagerFs<S> {
    EagerFs::with_sink(store, policy, MemorySink::new())
}

struct TraceRun {
    digests_equal: usize,
    observations_equal: usize,
    ordered: usize,
    total: usize,
    elapsed: Duration,
}

/// Shared by criteria 1 and 2: 100 traces through the eager engine.
fn trace_run() -> &'static TraceRun {
    static RUN: OnceLock<TraceRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = TraceConfig::default();
        let start = Instant::now();
        let (mut digests_equal, mut observations_equal, mut ordered) = (0, 0, 0);
        for seed in 0..100 {
            let trace = Trace::generate(seed, &cfg);
            assert!(trace.ops.len() <= 500 && trace.paths.len() <= 20);
            let oracle = MemTree::new();
            let expected = replay_sync(&trace, &oracle).expect("generated traces replay cleanly");

            let store = Arc::new(InjectedStore::fake());
            store.set_latency(LatencyProfile::uniform_all(Latency::Uniform(Duration::ZERO, Duration::from_micros(200))));
            store.seed_latency(seed);
            let fs = quiet_fs(store.clone(), EagerPolicy::default());
            fs.engine().record_enqueues();
            let got = replay_fs(&trace, &fs);
            let ledger = fs.drain();

            digests_equal += usize::from(ledger.is_empty() && store.snapshot_tree() == oracle.snapshot_tree());
            observations_equal += usize::from(got == expected);
            let violations = ordering_violations(&fs.engine().enqueue_log(), &store.log().requests());
            ordered += usize::from(violations.is_empty());
        }
        TraceRun { digests_equal, observations_equal, ordered, total: 100, elapsed: start.elapsed() }
    })
}

#[test]
fn c01_flush_equivalence() {
    let _g = serial();
    let r = trace_run();
    let pass = r.digests_equal == r.total && r.elapsed < Duration::from_secs(60);
    let detail = format!(
        "digests {}/{} observations {}/{} in {:.1}s",
        r.digests_equal,
        r.total,
        r.observations_equal,
        r.total,
        r.elapsed.as_secs_f64()
    );
    assert!(verdict(1, "flush equivalence", pass, detail));
}

#[test]
fn c02_per_path_ordering() {
    let _g = serial();
    let r = trace_run();
    let pass = r.ordered == r.total;
    assert!(verdict(2, "per-path ordering", pass, format!("{}/{} traces", r.ordered, r.total)));
}

fn median(report: &eagerfs::bench::BenchReport, scenario: Scenario, mode: Mode) -> (f64, f64) {
    let s = report.summary(scenario, mode).expect("successful replicates");
    (s.median, s.max)
}

#[test]
fn c03_latency_hiding_ratio() {
    let _g = serial();
    let start = Instant::now();
    let cfg = BenchConfig::new(Scenario::Extract, Workload::with_files(1000), LatencyProfile::metadata_ms(2.0), 5);
    let report = run_scenario(&cfg).unwrap();
    let elapsed = start.elapsed();
    let ok_rows = report.failures() == 0 && report.rows().len() == 15;
    let (eager, _) = median(&report, Scenario::Extract, Mode::Eager);
    let (direct, _) = median(&report, Scenario::Extract, Mode::Direct);
    let (staged, _) = median(&report, Scenario::Extract, Mode::Staged);
    let pass = ok_rows && eager <= 0.2 * direct && elapsed < Duration::from_secs(300);
    let detail = format!(
        "median eager {eager:.3}s direct {direct:.3}s staged {staged:.3}s ratio {:.3} in {:.0}s",
        eager / direct,
        elapsed.as_secs_f64()
    );
    assert!(verdict(3, "latency hiding ratio", pass, detail));
}

#[test]
fn c04_removal_direction() {
    let _g = serial();
    let cfg = BenchConfig::new(Scenario::Remove, Workload::with_files(1000), LatencyProfile::metadata_ms(2.0), 5);
    let report = run_scenario(&cfg).unwrap();
    let (eager_med, eager_max) = median(&report, Scenario::Remove, Mode::Eager);
    let (direct_med, direct_max) = median(&report, Scenario::Remove, Mode::Direct);
    let pass = report.failures() == 0 && eager_med < direct_med && eager_max < direct_max;
    let detail = format!(
        "median {eager_med:.3}s vs {direct_med:.3}s, max {eager_max:.3}s vs {direct_max:.3}s"
    );
    assert!(verdict(4, "removal direction", pass, detail));
}

#[test]
fn c05_acknowledgment_independence() {
    let _g = serial();
    let store = Arc::new(InjectedStore::fake());
    store.set_latency(LatencyProfile::uniform_all(Latency::fixed_ms(50.0)));
    let fs = quiet_fs(store.clone(), EagerPolicy::default());
    let mut fast = 0;
    let mut worst = Duration::ZERO;
    for i in 0..100 {
        let path = p(&format!("/f{i}"));
        let fh = fs.open(&path, OpenFlags::create(0o644)).unwrap();
        let t = Instant::now();
        fs.write_handle(fh, 0, b"payload").unwrap();
        let ack = t.elapsed();
        fs.release(fh).unwrap();
        worst = worst.max(ack);
        fast += usize::from(ack < Duration::from_millis(5));
    }
    let ledger = fs.drain();
    let pass = fast >= 99 && ledger.is_empty();
    assert!(verdict(5, "acknowledgment independence", pass, format!("{fast}/100 under 5 ms, worst {worst:?}")));
}

/// One schedule: `faults` one-shot rules on distinct files, each matching
/// exactly one executed request.
fn ledger_schedule(rng: &mut ChaCha8Rng, faults: usize) -> (usize, usize, bool, u8) {
    const FILES: usize = 20;
    let store = Arc::new(InjectedStore::fake());
    let mut victims: Vec<usize> = (0..FILES).collect();
    for i in 0..faults {
        let j = rng.random_range(i..FILES);
        victims.swap(i, j);
        let kind = [OpKind::Write, OpKind::Chmod, OpKind::Truncate][rng.random_range(0..3)];
        let error = FsError::ALL[rng.random_range(0..FsError::ALL.len())];
        store.add_fault(FaultRule::new(error).on_kind(kind).on_path(&format!("/f{}", victims[i])).unwrap());
    }
    let sink = MemorySink::new();
    let fs = EagerFs::with_sink(store.clone(), EagerPolicy::default(), sink.clone());
    for i in 0..FILES {
        let path = p(&format!("/f{i}"));
        let fh = fs.open(&path, OpenFlags::create(0o644)).unwrap();
        fs.write_handle(fh, 0, b"0123456789").unwrap();
        fs.release(fh).unwrap();
        fs.truncate(&path, 4).unwrap();
        fs.chmod(&path, 0o600).unwrap();
    }
    let summary = fs.drain();
    let twice = summary.records.iter().all(|r| sink.count_seq(r.seq) == 2)
        && sink.lines().len() == 2 * summary.len()
        && summary.records.iter().all(|r| {
            let lines: Vec<_> = sink.lines().into_iter().filter(|l| l.contains(&format!("seq={} ", r.seq))).collect();
            lines.iter().any(|l| l.contains("phase=immediate")) && lines.iter().any(|l| l.contains("phase=teardown"))
        });
    (faults, summary.len(), twice, summary.exit_code() as u8)
}

#[test]
fn c06_error_ledger_contract() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    let mut bad = Vec::new();
    for faults in 0..=10 {
        for _ in 0..3 {
            let (want, got, twice, exit) = ledger_schedule(&mut rng, faults);
            checked += 1;
            let exit_ok = (exit != 0) == (want > 0);
            if want != got || !twice || !exit_ok {
                bad.push(format!("faults={want} ledger={got} twice={twice} exit={exit}"));
            }
        }
    }
    let pass = bad.is_empty();
    let detail = format!("{}/{checked} schedules {}", checked - bad.len(), bad.join("; "));
    assert!(verdict(6, "error ledger contract", pass, detail));
}

/// Floods an engine with `ops` short operations over 64 paths while a
/// sampler watches the pending count.
fn burst(limit: usize, ops: usize) -> (usize, usize, u64, bool) {
    let engine = Arc::new(Engine::new(EngineConfig { max_pending: limit, sink: MemorySink::new(), ..EngineConfig::default() }));
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let sampler = {
        let (engine, stop) = (engine.clone(), stop.clone());
        std::thread::spawn(move || {
            let mut max = 0;
            while !stop.load(std::sync::atomic::Ordering::Relaxed) {
                max = max.max(engine.throttle().in_flight);
                std::thread::sleep(Duration::from_micros(50));
            }
            max
        })
    };
    let executed = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    for i in 0..ops {
        let executed = executed.clone();
        let path = p(&format!("/p{}", i % 64));
        engine
            .enqueue(DeferredOp::new(OpKind::Write, vec![path], move || {
                std::thread::sleep(Duration::from_micros(100));
                executed.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                Ok(())
            }))
            .unwrap();
    }
    let summary = engine.drain_all();
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    let sampled = sampler.join().unwrap();
    let stats = engine.throttle();
    let complete = summary.is_empty() && executed.load(std::sync::atomic::Ordering::SeqCst) == ops;
    (sampled, stats.high_water, stats.blocked_acquires, complete)
}

#[test]
fn c07_throttle_bound() {
    let _g = serial();
    let (sampled, high, blocked, complete) = burst(300, 10_000);
    let bounded = sampled <= 300 && high <= 300 && complete;
    let (s4, h4, b4, c4) = burst(4000, 10_000);
    let deep = s4 <= 4000 && h4 <= 4000 && b4 <= 6000 && c4;
    let (_, _, b_fit, c_fit) = burst(4000, 4000);
    let pass = bounded && deep && b_fit == 0 && c_fit;
    let detail = format!(
        "limit 300: sampled {sampled} high {high} blocked {blocked}; limit 4000: high {h4} blocked {b4}, 4000-op burst blocked {b_fit}"
    );
    assert!(verdict(7, "throttle bound", pass, detail));
}

#[test]
fn c08_barrier_read_your_writes() {
    let _g = serial();
    let store = Arc::new(InjectedStore::fake());
    store.set_latency(LatencyProfile::uniform_all(Latency::Uniform(Duration::from_millis(1), Duration::from_millis(10))));
    let fs = Arc::new(quiet_fs(store, EagerPolicy::default()));
    let threads: Vec<_> = (0..10u64)
        .map(|t| {
            let fs = fs.clone();
            std::thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(t);
                let files: Vec<NormPath> = (0..2).map(|i| p(&format!("/t{t}_{i}"))).collect();
                for f in &files {
                    let fh = fs.open(f, OpenFlags::create(0o644)).unwrap();
                    fs.release(fh).unwrap();
                }
                let mut good = 0;
                for _ in 0..100 {
                    let f = &files[rng.random_range(0..files.len())];
                    let offset = rng.random_range(0..4096u64);
                    let len = rng.random_range(1..512usize);
                    let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                    fs.write(f, offset, &data).unwrap();
                    let back = fs.read(f, offset, len as u32).unwrap();
                    good += usize::from(back.as_ref() == data.as_slice());
                }
                good
            })
        })
        .collect();
    let good: usize = threads.into_iter().map(|t| t.join().unwrap()).sum();
    let ledger = fs.drain();
    let pass = good == 1000 && ledger.is_empty();
    assert!(verdict(8, "barrier read-your-writes", pass, format!("{good}/1000 pairs")));
}

#[test]
fn c09_readdir_prefetch() {
    let _g = serial();
    let store = Arc::new(InjectedStore::fake());
    store.apply(&StoreRequest::Mkdir { path: p("/d"), mode: 0o755 }).unwrap();
    for i in 0..200 {
        let path = p(&format!("/d/e{i:03}"));
        store.apply(&StoreRequest::Create { path: path.clone(), mode: 0o644, truncate: false, exclusive: true }).unwrap();
        store.apply(&StoreRequest::Write { path, offset: 0, data: vec![7; i].into() }).unwrap();
    }
    let fs = quiet_fs(store.clone(), EagerPolicy::default());
    let entries = fs.readdir(&p("/d")).unwrap();
    fs.engine().quiesce();
    let prefetched = fs.attr_cache().count(AttrSource::Prefetched);
    store.log().clear();
    let mut right = 0;
    for (i, e) in entries.iter().enumerate() {
        let a = fs.getattr(&p(&format!("/d/{}", e.name))).unwrap();
        right += usize::from(a.size == i as u64);
    }
    let stats = store.log().count(OpKind::Getattr);
    let pass = entries.len() == 200 && prefetched == 200 && stats == 0 && right == 200;
    let detail = format!("{} entries, {prefetched} prefetched, backend getattr during lookups {stats}", entries.len());
    assert!(verdict(9, "readdir prefetch", pass, detail));
}

#[test]
fn c10_passthrough_purity() {
    let _g = serial();
    let cfg = TraceConfig { max_ops: 500, ..TraceConfig::default() };
    let trace = (0..).map(|s| Trace::generate(s, &cfg)).find(|t| t.ops.len() == 500).unwrap();
    let store = Arc::new(InjectedStore::fake());
    let fs = quiet_fs(store.clone(), EagerPolicy::passthrough());
    replay_fs(&trace, &fs);
    fs.drain();
    let expected: Vec<StoreRequest> = trace.ops.iter().flat_map(|op| op.requests()).collect();
    let actual = store.log().requests();
    let first_diff = expected.iter().zip(&actual).position(|(a, b)| a != b);
    let pass = expected == actual;
    let detail = format!("{} requests, {} backend calls, first mismatch {first_diff:?}", expected.len(), actual.len());
    assert!(verdict(10, "passthrough purity", pass, detail));
}
