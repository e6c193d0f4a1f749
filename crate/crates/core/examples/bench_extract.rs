//! Small version of the extract benchmark: write a tree of files under
//! simulated metadata latency in each mode and print a summary table.

use eagerfs::bench::{run_scenario, BenchConfig, ReportFormat, Scenario, Workload};
use eagerfs::store::LatencyProfile;

fn main() {
    let workload = Workload::with_files(200);
    let cfg = BenchConfig::new(Scenario::Extract, workload, LatencyProfile::metadata_ms(1.0), 3);
    let report = run_scenario(&cfg).expect("extract supports every mode");
    print!("{}", report.emit(ReportFormat::Table));
    println!();
    print!("{}", report.emit(ReportFormat::Csv));
}
