//! Deferred operations on one path run in submission order, while different
//! paths proceed in parallel.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use eagerfs::engine::{DeferredOp, Engine, EngineConfig};
use eagerfs::kind::OpKind;
use eagerfs::path::NormPath;

fn main() {
    let engine = Engine::new(EngineConfig { max_pending: 64, ..EngineConfig::default() });
    let log = Arc::new(Mutex::new(Vec::new()));
    let start = Instant::now();

    for file in ["/a", "/b", "/c", "/d"] {
        let path = NormPath::new(file).unwrap();
        for step in 0..5 {
            let log = log.clone();
            let name = file.to_owned();
            let op = DeferredOp::new(OpKind::Write, vec![path.clone()], move || {
                std::thread::sleep(Duration::from_millis(10));
                log.lock().unwrap().push((name, step));
                Ok(())
            });
            engine.enqueue(op).unwrap();
        }
    }
    println!("enqueued 20 ops in {:?}", start.elapsed());

    let summary = engine.drain_all();
    println!("drained in {:?}, {} errors", start.elapsed(), summary.len());
    let log = log.lock().unwrap();
    for file in ["/a", "/b", "/c", "/d"] {
        let steps: Vec<_> = log.iter().filter(|(n, _)| n == file).map(|(_, s)| *s).collect();
        println!("{file}: {steps:?}");
    }
}
