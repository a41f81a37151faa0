//! Empirical check against the Hong Kong pollution and hospital admission
//! data (730 daily observations, 1994 to 1995). The dataset is not shipped;
//! the test runs only when `TVREG_HONG_KONG_CSV` names a CSV file.
//!
//! Column names default to `y,so2,no2,dust,ozone` (response first) and can
//! be overridden with `TVREG_HONG_KONG_COLUMNS`.

use nalgebra::DMatrix;
use tvreg_core::cli::{ingest_csv, CsvSchema};
use tvreg_core::locfit::integrate_coefficients;
use tvreg_core::selection::{default_b_grid, default_chi, two_stage_bandwidth, select_subset, Search};
use tvreg_core::{local_linear_fit, EvaluationGrid, Kernel};

#[test]
fn hong_kong_selection_and_integrated_coefficient() {
    let Ok(path) = std::env::var("TVREG_HONG_KONG_CSV") else {
        eprintln!("TVREG_HONG_KONG_CSV not set; skipping");
        return;
    };
    let columns = std::env::var("TVREG_HONG_KONG_COLUMNS").unwrap_or_else(|_| "y,so2,no2,dust,ozone".into());
    let names: Vec<String> = columns.split(',').map(|s| s.trim().to_owned()).collect();
    let mut schema = CsvSchema::new(names[0].clone());
    schema.predictors = names[1..].to_vec();
    schema.standardize = true;
    schema.intercept = true;
    let data = ingest_csv(&path, &schema).expect("dataset parses");
    assert_eq!(data.n(), 730);

    let chi = default_chi(data.n());
    assert!((chi - 0.072).abs() < 5e-4, "chi {chi}");

    let kernel = Kernel::Epanechnikov;
    let stages = two_stage_bandwidth(&data, &kernel, chi, &default_b_grid(), Search::Exhaustive).unwrap();
    assert!((stages.final_bandwidth - 0.13).abs() <= 0.01 + 1e-12, "bandwidth {}", stages.final_bandwidth);

    let chosen = select_subset(&data, &kernel, stages.pilot_bandwidth, chi, Search::Exhaustive).unwrap().chosen;
    // Intercept, nitrogen dioxide and dust.
    assert_eq!(chosen, vec![0, 2, 3]);

    let reduced = data.select_columns(&chosen).unwrap();
    let fit = local_linear_fit(&reduced, &kernel, 0.13, &EvaluationGrid::observation(reduced.n()).unwrap()).unwrap();
    let a = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
    let beta3 = integrate_coefficients(&fit, &a).unwrap()[0];
    assert!((beta3 - 0.15).abs() < 0.005, "integrated coefficient {beta3}");
}
