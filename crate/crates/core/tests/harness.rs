use nj_core::harness::dgp::{CycleDgpConfig, Decay, DecayDgpConfig, DecayDraw, SwitchbackDgpConfig};
use nj_core::harness::experiments::{
    run_cycle_experiment, run_decay_experiment, run_sutva_experiment, run_switchback_experiment,
};
use nj_core::harness::oracle_suite::run_oracle_suite;
use nj_core::harness::results::{read_csv, to_csv_string};
use nj_core::util::substream;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let cfg = CycleDgpConfig {
        n: 40,
        seed: 9,
        ..Default::default()
    };
    let grid: Vec<usize> = (1..=8).collect();
    let csv = |t| in_pool(t, || to_csv_string(&run_cycle_experiment(&cfg, &grid, 200).unwrap().all_rows()));
    let one = csv(1);
    assert_eq!(one, csv(4));
    assert_eq!(one, csv(3));

    let sb = SwitchbackDgpConfig {
        horizon: 2000,
        seed: 9,
        ..Default::default()
    };
    let grid: Vec<usize> = (1..=6).collect();
    let csv = |t| in_pool(t, || to_csv_string(&run_switchback_experiment(&sb, &grid, 150).unwrap().all_rows()));
    assert_eq!(csv(1), csv(4));

    // Parsing and rewriting is exact.
    let rows = read_csv(one.as_bytes()).unwrap();
    assert_eq!(to_csv_string(&rows), one);
}

/// The larger row of the cycle table: covariates help, and both curves are
/// conservative at their best block length.
#[test]
fn cycle_with_500_units() {
    let cfg = CycleDgpConfig {
        n: 500,
        seed: 500,
        ..Default::default()
    };
    let grid: Vec<usize> = (1..=30).collect();
    let out = run_cycle_experiment(&cfg, &grid, 2000).unwrap();
    let avg = out.best_for("nj_avg").unwrap();
    let cov = out.best_for("nj_cov").unwrap();
    println!(
        "n=500 truth={:.5} nj_avg L={} ratio={:.3}; nj_cov L={} ratio={:.3}",
        out.true_var, avg.l, avg.ratio, cov.l, cov.ratio
    );
    assert!(cov.mean_vhat <= avg.mean_vhat);
    assert!(avg.ratio >= 1.0 - 2.0 * avg.ratio_se);
    assert!(cov.ratio >= 0.95 - 2.0 * cov.ratio_se);
    assert!(avg.ratio <= 1.6);
}

#[test]
fn covariates_help_at_100_units() {
    for seed in [1u64, 2] {
        let cfg = CycleDgpConfig {
            n: 100,
            seed,
            ..Default::default()
        };
        let grid: Vec<usize> = (1..=30).collect();
        let out = run_cycle_experiment(&cfg, &grid, 1000).unwrap();
        assert!(out.best_for("nj_cov").unwrap().mean_vhat <= out.best_for("nj_avg").unwrap().mean_vhat);
    }
}

/// Every block length of the published grid, at short, half and full burn-in.
#[test]
fn switchback_is_conservative_across_block_lengths() {
    let grid: Vec<usize> = (1..=20).collect();
    for ell in [40usize, 50, 80, 100, 125, 200] {
        for b in [5, ell / 2, ell.min(50)] {
            let cfg = SwitchbackDgpConfig {
                horizon: 10_000,
                ell,
                burn_in: b,
                seed: 77,
                ..Default::default()
            };
            let out = run_switchback_experiment(&cfg, &grid, 300).unwrap();
            let best = out.best_for("nj_hajek").unwrap();
            println!("ell={ell} b={b}: L={} ratio={:.3} ± {:.3}", best.l, best.ratio, best.ratio_se);
            assert!(best.ratio + 2.0 * best.ratio_se >= 1.0, "ell={ell} b={b}: {best:?}");
        }
    }
}

#[test]
fn polynomial_decay_with_a_long_buffer() {
    // r^(2α−1) = 50² against T/ℓ = 40.
    let cfg = DecayDgpConfig {
        horizon: 2000,
        ell: 50,
        buffer: 50,
        decay: Decay::Polynomial { alpha: 1.5 },
        seed: 31,
        ..Default::default()
    };
    let out = run_decay_experiment(&cfg, 0, 1000).unwrap();
    let with = out.best_for("nj_buffer_50").unwrap();
    let without = out.best_for("nj_buffer_0").unwrap();
    println!("polynomial: r=50 ratio={:.3}, r=0 ratio={:.3}", with.ratio, without.ratio);
    assert!(with.ratio >= 0.95);
}

/// The sampled truth of the decay experiment against its closed form.
#[test]
fn decay_truth_matches_closed_form() {
    let cfg = DecayDgpConfig {
        seed: 12,
        ..Default::default()
    };
    let out = run_decay_experiment(&cfg, cfg.buffer, 500).unwrap();
    // Same draw as the experiment: stream 0 of the seed.
    let draw = DecayDraw::sample(&cfg, &mut substream(cfg.seed, 0)).unwrap();
    let exact = draw.variance_closed_form().unwrap();
    let rel = (out.true_var - exact).abs() / exact;
    // 5000 draws: the relative standard error of a variance is about sqrt(2/5000).
    assert!(rel < 4.0 * (2.0f64 / 5000.0).sqrt(), "{} vs {exact}", out.true_var);
}

#[test]
fn sutva_jackknife_is_conservative() {
    let out = run_sutva_experiment(40, 16, 500, 3).unwrap();
    let nj = out.rows.iter().find(|r| r.estimator == "nj_pair").unwrap();
    let ney = out.rows.iter().find(|r| r.estimator == "neyman").unwrap();
    assert!(nj.ratio >= 1.0 - 2.0 * nj.ratio_se);
    assert!(ney.ratio >= 1.0 - 2.0 * ney.ratio_se);
}

#[test]
fn default_oracle_suite_passes() {
    let report = run_oracle_suite(2024);
    for c in &report.checks {
        println!("{}", c.line());
    }
    assert!(report.all_passed);
}
