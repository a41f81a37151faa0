//! Small Monte Carlo checks that run in seconds. The full-size studies live
//! in the acceptance suite.

use nalgebra::DMatrix;
use tvreg_core::processes::{simulate_model_i, simulate_tvar_coupled, TvarSpec};
use tvreg_core::selection::{default_chi, select_subset, Search};
use tvreg_core::testing::{evaluate_delta, null_dataset, simulate_null, PipelineConfig};
use tvreg_core::{rng, Kernel, RegressionData, Target, WeightScheme};

fn config() -> PipelineConfig {
    let mut c = PipelineConfig::new(Kernel::Epanechnikov, 0.3);
    c.grid_size = Some(50);
    c
}

#[test]
fn simulated_calibration_holds_its_level_on_fresh_noise() {
    let a = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let cfg = config();
    let null = simulate_null(150, &a, &Target::Estimate, &[WeightScheme::Identity], &cfg, 400, 1).unwrap();
    let q = null.distribution(WeightScheme::Identity).unwrap().quantile(0.10).unwrap();
    let reps = 200;
    let rejections = (0..reps)
        .filter(|&r| {
            let data = null_dataset(150, 2, 999, r).unwrap();
            evaluate_delta(&data, &a, &Target::Estimate, &[WeightScheme::Identity], &cfg).unwrap().components[0].delta > q
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    assert!((0.04..=0.18).contains(&rate), "rejection rate {rate}");
}

#[test]
fn strong_alternative_is_rejected() {
    let n = 200;
    let mut r = rng::stream(77);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0, rng::gaussian(&mut r)]).collect();
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let t = (i + 1) as f64 / n as f64;
            (2.0 * std::f64::consts::PI * t).sin() * 2.0 * x[1] + 0.5 * rng::gaussian(&mut r)
        })
        .collect();
    let data = RegressionData::from_rows(y, &rows).unwrap();
    let a = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let cfg = config();
    let null = simulate_null(n, &a, &Target::Estimate, &WeightScheme::ALL, &cfg, 200, 3).unwrap();
    let eval = evaluate_delta(&data, &a, &Target::Estimate, &WeightScheme::ALL, &cfg).unwrap();
    for c in &eval.components {
        let d = null.distribution(c.scheme).unwrap().decision(c.delta, 0.05).unwrap();
        assert!(d.reject, "{} not rejected: Δ = {}", c.scheme, c.delta);
    }
}

#[test]
fn selection_recovers_model_i_support() {
    let n = 300;
    let correct = (0..20)
        .filter(|&r| {
            let s = simulate_model_i(n, rng::derive_seed(5, "mc", r)).unwrap();
            let rep = select_subset(&s.data, &Kernel::Epanechnikov, 0.2, default_chi(n), Search::Exhaustive).unwrap();
            rep.chosen == s.truth
        })
        .count();
    assert!(correct >= 16, "{correct} of 20 correct");
}

#[test]
fn coupled_tvar_gap_shrinks_with_n() {
    let spec = TvarSpec::example();
    let gap = |n: usize, seed: u64| {
        let c = simulate_tvar_coupled(&spec, n, 200, seed).unwrap();
        c.path.iter().zip(&c.frozen).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let mut ratios: Vec<f64> = (0..20).map(|s| gap(500, s) / gap(1000, s)).collect();
    ratios.sort_by(f64::total_cmp);
    assert!(ratios[10] > 1.0, "median ratio {}", ratios[10]);
}
