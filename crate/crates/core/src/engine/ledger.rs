use std::fmt::Write as _;
use std::io::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::SystemTime;

use parking_lot::Mutex;

use super::Seq;
use crate::error::FsError;
use crate::kind::OpKind;
use crate::path::NormPath;

/// Line prefix of every deferred-failure diagnostic.
pub const DIAGNOSTIC_PREFIX: &str = "EAGERFS-ERR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportPhase {
    Immediate,
    Teardown,
}

impl ReportPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportPhase::Immediate => "immediate",
            ReportPhase::Teardown => "teardown",
        }
    }
}

/// One failed deferred operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    pub seq: Seq,
    pub kind: OpKind,
    pub paths: Vec<NormPath>,
    pub error: FsError,
    pub message: String,
    pub at: SystemTime,
}

impl LedgerRecord {
    /// `EAGERFS-ERR seq=.. op=.. path=..[,..] errno=.. phase=.. msg=..`
    pub fn diagnostic(&self, phase: ReportPhase) -> String {
        let mut line = format!("{DIAGNOSTIC_PREFIX} seq={} op={} path=", self.seq, self.kind);
        for (i, p) in self.paths.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(p.as_str());
        }
        let _ = write!(line, " errno={} phase={} msg={}", self.error.code(), phase.as_str(), self.message);
        line
    }
}

/// Destination for diagnostic lines.
pub trait DiagnosticSink: Send + Sync {
    fn emit(&self, line: &str);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StderrSink;

impl DiagnosticSink for StderrSink {
    fn emit(&self, line: &str) {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{line}");
    }
}

/// Captures lines in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    lines: Mutex<Vec<String>>,
}

impl MemorySink {
    pub fn new() -> Arc<Self> {
        Arc::new(MemorySink::default())
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().clone()
    }

    /// Lines reporting the given sequence id.
    pub fn count_seq(&self, seq: Seq) -> usize {
        let needle = format!("{DIAGNOSTIC_PREFIX} seq={seq} ");
        self.lines.lock().iter().filter(|l| l.starts_with(&needle)).count()
    }
}

impl DiagnosticSink for MemorySink {
    fn emit(&self, line: &str) {
        self.lines.lock().push(line.to_owned());
    }
}

/// Append-only record of deferred failures, kept in sequence order.
pub struct ErrorLedger {
    records: Mutex<Vec<LedgerRecord>>,
    sink: Arc<dyn DiagnosticSink>,
    reported_at_teardown: AtomicBool,
}

impl std::fmt::Debug for ErrorLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ErrorLedger").field("records", &self.records.lock().len()).finish()
    }
}

impl ErrorLedger {
    pub fn new(sink: Arc<dyn DiagnosticSink>) -> Self {
        ErrorLedger { records: Mutex::new(Vec::new()), sink, reported_at_teardown: AtomicBool::new(false) }
    }

    /// Appends a record and reports it once immediately.
    pub fn record(&self, rec: LedgerRecord) {
        let line = rec.diagnostic(ReportPhase::Immediate);
        {
            let mut records = self.records.lock();
            let at = records.partition_point(|r| r.seq < rec.seq);
            records.insert(at, rec);
        }
        self.sink.emit(&line);
    }

    /// Re-reports every record. Only the first call emits.
    pub fn report_teardown(&self) {
        if self.reported_at_teardown.swap(true, Ordering::SeqCst) {
            return;
        }
        for rec in self.records.lock().iter() {
            self.sink.emit(&rec.diagnostic(ReportPhase::Teardown));
        }
    }

    pub fn reported_at_teardown(&self) -> bool {
        self.reported_at_teardown.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.records.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary { records: self.records.lock().clone() }
    }
}

/// Snapshot of the ledger returned by a drain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerSummary {
    pub records: Vec<LedgerRecord>,
}

impl LedgerSummary {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Process exit status: 0 when clean, 1 when any deferred op failed.
    pub fn exit_code(&self) -> i32 {
        if self.is_empty() {
            0
        } else {
            1
        }
    }
}
