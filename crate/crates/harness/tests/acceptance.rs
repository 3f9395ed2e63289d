//! Runs every acceptance criterion under the compressed virtual clock and
//! prints one line per criterion. Set `ABFT_SEED` to change the master seed.

use std::io::Write;

use abft_harness::config::SEED_ENV;
use abft_harness::gates::run_all;
use abft_harness::suites::{SuiteOptions, Timing};

#[test]
fn acceptance_criteria() {
    let seed = std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0);
    let opts = SuiteOptions {
        timing: Timing::Compressed,
        trials: 10,
        seed,
    };
    // Written straight to stdout so the lines survive the test harness capture.
    let mut stdout = std::io::stdout();
    let criteria = run_all(&opts, |line| {
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
    })
    .expect("acceptance run failed to execute");

    let failed: Vec<String> = criteria
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.to_string())
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
