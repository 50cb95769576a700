//! Generate a synthetic 50-scan sequence with the default models and
//! write it as a scan file.
//!
//! ```bash
//! cargo run -p randspec --example simulate_scans
//! ```

use randspec::io::{write_scans, ScanFile};
use randspec::{Config, ScanGenerator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let experiment = Config::default().to_experiment(Some(42))?;
    let generator = ScanGenerator::new(
        &experiment.dos,
        &experiment.grid,
        experiment.intensity.clone(),
        &experiment.noise,
        experiment.disturbance,
        experiment.seed,
    );

    let scans = generator.scans(experiment.n_scans);
    let clamped: u64 = scans.iter().map(|s| s.clamped_bins).sum();

    println!(
        "generated {} scans over {} bins ({} clamped parameter draws)",
        scans.len(),
        experiment.grid.len(),
        clamped
    );
    for scan in scans.iter().take(5) {
        let j = scan.record.photocurrent();
        println!(
            "  intensity {:+.4}  photocurrent range [{:.4}, {:.4}]",
            scan.record.intensity(),
            j.iter().cloned().fold(f64::INFINITY, f64::min),
            j.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
    }

    let out = std::env::temp_dir().join("randspec_scans.csv");
    let file = ScanFile {
        grid: experiment.grid.clone(),
        declared_mean: Some(experiment.intensity.mean()),
        declared_dispersion: Some(experiment.intensity.implied_dispersion()),
        records: scans.into_iter().map(|s| s.record).collect(),
    };
    write_scans(&out, &file)?;
    println!("wrote {}", out.display());
    Ok(())
}
