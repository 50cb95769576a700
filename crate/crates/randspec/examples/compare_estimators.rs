//! Run the recursion, the closed-form least squares, and the naive scan
//! average on one noisy sequence and print the comparison report.
//!
//! The naive average stays biased inside the noise window however many
//! scans are taken; the randomized estimators do not.
//!
//! ```bash
//! cargo run -p randspec --example compare_estimators
//! ```

use randspec::{run_experiment, Config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let experiment = Config::default().to_experiment(Some(42))?;
    let result = run_experiment(&experiment)?;
    print!("{}", result.report.to_text());

    // the same experiment without the contamination, for contrast
    let mut clean = Config::default();
    clean.noise.enabled = false;
    let clean_result = run_experiment(&clean.to_experiment(Some(42))?)?;
    println!("--- noise disabled ---");
    print!("{}", clean_result.report.to_text());
    Ok(())
}
