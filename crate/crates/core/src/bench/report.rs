use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Write a fresh tree.
    Extract,
    /// Recursively delete a tree.
    Remove,
    /// List and stat every entry of a tree.
    Traverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Through the shim with every flag on.
    Eager,
    /// Through the shim as a plain passthrough.
    Direct,
    /// Into a zero-latency scratch store, then copied out.
    Staged,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Extract, Scenario::Remove, Scenario::Traverse];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Extract => "extract",
            Scenario::Remove => "remove",
            Scenario::Traverse => "traverse",
        }
    }
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Eager, Mode::Direct, Mode::Staged];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Eager => "eager",
            Mode::Direct => "direct",
            Mode::Staged => "staged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {what} `{value}`")]
pub struct ParseNameError {
    what: &'static str,
    value: String,
}

impl FromStr for Scenario {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| ParseNameError { what: "scenario", value: s.to_owned() })
    }
}

impl FromStr for Mode {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| ParseNameError { what: "mode", value: s.to_owned() })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub mode: Mode,
    pub replicate: usize,
    pub seconds: f64,
    /// False when the replicate failed or left the wrong tree behind.
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(samples: &[f64]) -> Option<Summary> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Summary { n, min: v[0], mean: v.iter().sum::<f64>() / n as f64, median, max: v[n - 1] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "table" => Ok(ReportFormat::Table),
            _ => Err(ParseNameError { what: "format", value: s.to_owned() }),
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["scenario", "mode", "replicate", "seconds", "ok"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header")]
    Header,
    #[error("bad field `{0}`")]
    Field(String),
}

/// Timing rows in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn new() -> Self {
        BenchReport::default()
    }

    pub fn push(&mut self, row: BenchRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
    }

    pub fn rows(&self) -> &[BenchRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Modes in the order replicates ran.
    pub fn execution_order(&self) -> Vec<Mode> {
        self.rows.iter().map(|r| r.mode).collect()
    }

    /// (scenario, mode) pairs in order of first appearance.
    pub fn groups(&self) -> Vec<(Scenario, Mode)> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&(r.scenario, r.mode)) {
                out.push((r.scenario, r.mode));
            }
        }
        out
    }

    pub fn seconds(&self, scenario: Scenario, mode: Mode) -> Vec<f64> {
        self.rows.iter().filter(|r| r.scenario == scenario && r.mode == mode && r.ok).map(|r| r.seconds).collect()
    }

    /// Statistics over successful replicates.
    pub fn summary(&self, scenario: Scenario, mode: Mode) -> Option<Summary> {
        Summary::of(&self.seconds(scenario, mode))
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }

    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Table => self.to_table(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.scenario.as_str(),
                r.mode.as_str(),
                &r.replicate.to_string(),
                &format!("{:.6}", r.seconds),
                if r.ok { "true" } else { "false" },
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn from_csv(text: &str) -> Result<BenchReport, CsvError> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        if rd.headers()?.iter().ne(CSV_HEADER) {
            return Err(CsvError::Header);
        }
        let mut report = BenchReport::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| CsvError::Field(format!("column {i}")));
            let bad = |s: &str| CsvError::Field(s.to_owned());
            report.push(BenchRow {
                scenario: field(0)?.parse().map_err(|_| bad(&rec[0]))?,
                mode: field(1)?.parse().map_err(|_| bad(&rec[1]))?,
                replicate: field(2)?.parse().map_err(|_| bad(&rec[2]))?,
                seconds: field(3)?.parse().map_err(|_| bad(&rec[3]))?,
                ok: field(4)?.parse().map_err(|_| bad(&rec[4]))?,
            });
        }
        Ok(report)
    }

    /// Summary table, one line per (scenario, mode).
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:<8} {:>4} {:>10} {:>10} {:>10} {:>10}\n",
            "scenario", "mode", "n", "min", "mean", "median", "max"
        );
        for (scenario, mode) in self.groups() {
            let failed = self.rows.iter().filter(|r| r.scenario == scenario && r.mode == mode && !r.ok).count();
            let line = match self.summary(scenario, mode) {
                Some(s) => format!(
                    "{:<10} {:<8} {:>4} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                    scenario.as_str(),
                    mode.as_str(),
                    s.n,
                    s.min,
                    s.mean,
                    s.median,
                    s.max
                ),
                None => format!("{:<10} {:<8} {:>4} {:>10} {:>10} {:>10} {:>10}", scenario.as_str(), mode.as_str(), 0, "-", "-", "-", "-"),
            };
            out.push_str(&line);
            if failed > 0 {
                out.push_str(&format!("  ({failed} failed)"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: Mode, replicate: usize, seconds: f64, ok: bool) -> BenchRow {
        BenchRow { scenario: Scenario::Extract, mode, replicate, seconds, ok }
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = BenchReport::new();
        assert_eq!(r.to_csv(), "scenario,mode,replicate,seconds,ok\n");
        assert_eq!(r.to_table().lines().count(), 1);
    }

    #[test]
    fn single_row_summary() {
        let mut r = BenchReport::new();
        r.push(row(Mode::Eager, 0, 1.5, true));
        let s = r.summary(Scenario::Extract, Mode::Eager).unwrap();
        assert_eq!((s.min, s.mean, s.median, s.max), (1.5, 1.5, 1.5, 1.5));
    }

    #[test]
    fn arithmetic() {
        let s = Summary::of(&[30.0, 10.0, 20.0]).unwrap();
        assert_eq!((s.min, s.mean, s.median, s.max), (10.0, 20.0, 20.0, 30.0));
        assert_eq!(Summary::of(&[1.0, 2.0, 3.0, 10.0]).unwrap().median, 2.5);
    }

    #[test]
    fn failed_rows_are_excluded_and_flagged() {
        let mut r = BenchReport::new();
        r.push(row(Mode::Direct, 0, 1.0, true));
        r.push(row(Mode::Direct, 1, 100.0, false));
        assert_eq!(r.summary(Scenario::Extract, Mode::Direct).unwrap().max, 1.0);
        assert!(r.to_table().contains("(1 failed)"));
        assert!(r.to_csv().ends_with("extract,direct,1,100.000000,false\n"));
    }

    #[test]
    fn csv_round_trips() {
        let mut r = BenchReport::new();
        r.push(row(Mode::Eager, 0, 0.25, true));
        r.push(row(Mode::Staged, 0, 2.0, false));
        assert_eq!(BenchReport::from_csv(&r.to_csv()).unwrap(), r);
        assert!(matches!(BenchReport::from_csv("a,b\n"), Err(CsvError::Header)));
    }

    #[test]
    fn names_parse() {
        for s in Scenario::ALL {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("tmpfs".parse::<Mode>().is_err());
    }
}
