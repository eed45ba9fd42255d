//! Numerical checks of the analysis module, printed as a table.
//!
//! `cargo run --release --example verify_analysis`

use orlab::analysis::{verify_suite, VerifyOptions};
use orlab::harness::{verify_table, Format};

fn main() -> anyhow::Result<()> {
    let opts = VerifyOptions {
        lemma_trials: 100_000,
        regularizer_trials: 200_000,
        fd_error_trials: 200_000,
        calibration_trials: 100_000,
        ..Default::default()
    };
    let rows = verify_suite(&opts)?;
    print!("{}", verify_table(&rows).render(Format::Text));
    let failed = rows.iter().filter(|r| !r.passed()).count();
    println!("{failed} failing checks");
    Ok(())
}
