//! Fold the recursion over a noisy scan sequence and compare the final
//! estimate with the ground truth, bin by bin.
//!
//! ```bash
//! cargo run -p randspec --example estimate_spectrum
//! ```

use randspec::{
    run_estimation, Config, EstimationConfig, IntensityStats, ScanGenerator,
};

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
    let records: Vec<_> = generator
        .scans(experiment.n_scans)
        .into_iter()
        .map(|s| s.record)
        .collect();

    let estimation = EstimationConfig {
        stats: IntensityStats::fixed_known(
            experiment.intensity.mean(),
            experiment.intensity.implied_dispersion(),
        )?,
        initial_guess: experiment.initial_guess.clone(),
        control_bins: vec![],
    };
    let (state, _) = run_estimation(&records, &estimation)?;

    println!("energy (eV)   truth     estimate   noise");
    let truth = generator.theta_bar();
    let noise = generator.noise_profile();
    for bin in (0..experiment.grid.len()).step_by(30) {
        println!(
            "{:>10.2} {:>9.4} {:>10.4} {:>7.4}",
            experiment.grid.energy_at(bin),
            truth[bin],
            state.theta_hat()[bin],
            noise[bin],
        );
    }
    let max_rel = state
        .theta_hat()
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs() / t)
        .fold(0.0f64, f64::max);
    println!(
        "max relative deviation after {} scans: {:.2}%",
        records.len(),
        100.0 * max_rel
    );
    Ok(())
}
