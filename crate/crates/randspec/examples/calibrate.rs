//! Seeded calibration sweep over the default experiment.
//!
//! Prints the seed-to-seed distributions that the regression thresholds
//! in the test suite were frozen from: in-window RMSE ratios against the
//! naive baseline, stabilization statistics, large-sample consistency,
//! and the Monte-Carlo unbiasedness margins. Rerun after changing the
//! default config or the draw order to re-derive those numbers.
//!
//! ```bash
//! cargo run --release -p randspec --example calibrate
//! ```

use randspec::{run_experiment, Config, DisturbanceModel, ExperimentConfig, NoiseProfile};

fn default_experiment(seed: u64) -> ExperimentConfig {
    Config::default().to_experiment(Some(seed)).unwrap()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

fn main() {
    let t0 = std::time::Instant::now();

    // 100-seed sweep of the default 50-scan experiment
    let mut ratios = Vec::new();
    let mut stabs = Vec::new();
    let mut trails = Vec::new();
    for seed in 0..100u64 {
        let result = run_experiment(&default_experiment(seed)).unwrap();
        ratios.push(result.report.spsa.rmse_in_window / result.report.naive_mean.rmse_in_window);
        stabs.push(result.report.stabilization_iteration);
        let mut worst = 0.0f64;
        for cp in 0..result.trace.control_bins().len() {
            let series = result.trace.series(cp);
            let n = series.len();
            for i in (n - 4)..n {
                worst = worst.max((series[i] - series[i - 1]).abs() / series[i - 1].abs());
            }
        }
        trails.push(worst);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    println!(
        "in-window rmse ratio (spsa/naive): q50={:.4} q90={:.4} q95={:.4} max={:.4}",
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.9),
        quantile(&sorted, 0.95),
        sorted.last().unwrap(),
    );
    println!(
        "ratio counts: <=0.1: {}  <=0.5: {}  <=1: {}  <=2: {}  <=8: {}",
        ratios.iter().filter(|&&r| r <= 0.1).count(),
        ratios.iter().filter(|&&r| r <= 0.5).count(),
        ratios.iter().filter(|&&r| r <= 1.0).count(),
        ratios.iter().filter(|&&r| r <= 2.0).count(),
        ratios.iter().filter(|&&r| r <= 8.0).count(),
    );
    let stab_le = |n: u64| {
        stabs
            .iter()
            .filter(|s| s.map(|v| v <= n).unwrap_or(false))
            .count()
    };
    println!(
        "stabilization (rel_tol 0.05, window 5): <=20: {}  <=25: {}  <=30: {}  never: {}",
        stab_le(20),
        stab_le(25),
        stab_le(30),
        stabs.iter().filter(|s| s.is_none()).count()
    );
    let mut st: Vec<f64> = trails.clone();
    st.sort_by(f64::total_cmp);
    println!(
        "trailing-5 change at n=50: q50={:.4} q90={:.4}; <0.02: {}  <0.025: {}",
        quantile(&st, 0.5),
        quantile(&st, 0.9),
        trails.iter().filter(|&&t| t < 0.02).count(),
        trails.iter().filter(|&&t| t < 0.025).count(),
    );
    println!("  [100-seed sweep took {:?}]", t0.elapsed());

    // averaging the per-seed final spectra: the bias survives averaging
    // for the naive estimate but not for the recursion
    let mut spsa_avg = vec![0.0f64; 241];
    let mut naive_avg = vec![0.0f64; 241];
    let mut reference = Vec::new();
    for seed in 0..100u64 {
        let r = run_experiment(&default_experiment(seed)).unwrap();
        for (acc, v) in spsa_avg.iter_mut().zip(&r.spectra.spsa) {
            *acc += v / 100.0;
        }
        for (acc, v) in naive_avg.iter_mut().zip(&r.spectra.naive_mean) {
            *acc += v / 100.0;
        }
        reference = r.reference;
    }
    let rmse_win = |est: &[f64]| {
        let mut sq = 0.0;
        for bin in 60..=202 {
            sq += (est[bin] - reference[bin]).powi(2);
        }
        (sq / 143.0).sqrt()
    };
    println!(
        "seed-averaged in-window rmse: spsa={:.5} naive={:.5} (naive/spsa = {:.1})",
        rmse_win(&spsa_avg),
        rmse_win(&naive_avg),
        rmse_win(&naive_avg) / rmse_win(&spsa_avg)
    );

    // clean-run (noise off, no disturbance) deviation per seed
    let mut clean_devs = Vec::new();
    for seed in 0..60u64 {
        let mut config = default_experiment(seed);
        config.noise = NoiseProfile::disabled(28.8, 35.9).unwrap();
        config.disturbance = DisturbanceModel::new(0.0).unwrap();
        let clean = run_experiment(&config).unwrap();
        let max_rel = clean
            .spectra
            .spsa
            .iter()
            .zip(&clean.reference)
            .map(|(e, t)| (e - t).abs() / t)
            .fold(0.0f64, f64::max);
        clean_devs.push((seed, max_rel));
    }
    clean_devs.sort_by(|a, b| a.1.total_cmp(&b.1));
    println!("smallest clean-run deviations: {:?}", &clean_devs[..4]);

    // reference seed 42: the values pinned as regressions
    let result = run_experiment(&default_experiment(42)).unwrap();
    println!(
        "seed 42: stabilization={:?} naive/spsa in-window ratio={:.3} clamps={}",
        result.report.stabilization_iteration,
        result.report.naive_mean.rmse_in_window / result.report.spsa.rmse_in_window,
        result.report.theta_clamp_events
    );

    // 200-seed unbiasedness margins, each estimator against its own
    // standard error
    let t1 = std::time::Instant::now();
    let seeds: Vec<u64> = (1000..1200).collect();
    let mut spsa_all: Vec<Vec<f64>> = Vec::new();
    let mut naive_all: Vec<Vec<f64>> = Vec::new();
    for &seed in &seeds {
        let r = run_experiment(&default_experiment(seed)).unwrap();
        spsa_all.push(r.spectra.spsa);
        naive_all.push(r.spectra.naive_mean);
    }
    let n = seeds.len() as f64;
    let band = |all: &[Vec<f64>], bin: usize| -> (f64, f64) {
        let mean = all.iter().map(|v| v[bin]).sum::<f64>() / n;
        let var = all.iter().map(|v| (v[bin] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let mut spsa_worst_z = 0.0f64;
    let mut naive_min_margin = f64::INFINITY;
    for bin in 0..reference.len() {
        let truth = reference[bin];
        let (mean_spsa, se_spsa) = band(&spsa_all, bin);
        spsa_worst_z = spsa_worst_z.max((mean_spsa - truth).abs() / se_spsa);
        if (60..=202).contains(&bin) {
            let (mean_naive, se_naive) = band(&naive_all, bin);
            naive_min_margin = naive_min_margin.min((mean_naive - truth).abs() / (3.0 * se_naive));
        }
    }
    println!(
        "unbiasedness margins over 200 seeds: spsa worst |z|={:.2}, naive min bias/(3se)={:.2}  [{:?}]",
        spsa_worst_z,
        naive_min_margin,
        t1.elapsed()
    );

    // 50-seed consistency sweep at n = 5000
    let t2 = std::time::Instant::now();
    let mut worst = Vec::new();
    for seed in 0..50u64 {
        let mut config = default_experiment(seed);
        config.n_scans = 5000;
        let r = run_experiment(&config).unwrap();
        let max_rel = r
            .spectra
            .spsa
            .iter()
            .zip(&r.reference)
            .map(|(e, t)| (e - t).abs() / t)
            .fold(0.0f64, f64::max);
        worst.push(max_rel);
    }
    let under = worst.iter().filter(|&&w| w < 0.01).count();
    worst.sort_by(f64::total_cmp);
    println!(
        "consistency at n=5000: {}/50 under 1%; q50={:.4} max={:.4}  [{:?}]",
        under,
        quantile(&worst, 0.5),
        worst.last().unwrap(),
        t2.elapsed()
    );
}
