//! A short benchmark across direct, poll and push modes.
//!
//! Pass `--full` for the default 500-step workload with a 5 s poll period.

use lcq::bench::{run_bench, BenchConfig};
use lcq::toolchain::WorkloadScript;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = BenchConfig::default();
    if !std::env::args().any(|a| a == "--full") {
        config.poll_period_ms = 250;
        config.settle_timeout_ms = 3_000;
        config.workload = WorkloadScript {
            seed: 7,
            steps: 60,
            rate: 100.0,
            ..WorkloadScript::default()
        };
    }
    let report = run_bench(&config)?;
    print!("{}", report.to_table());
    if !report.all_converged() {
        std::process::exit(1);
    }
    Ok(())
}
