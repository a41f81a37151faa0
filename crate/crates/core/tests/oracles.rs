//! Independent dense or brute-force computations checked against the
//! library's fast paths.

use nalgebra::{DMatrix, DVector};
use tvreg_core::covariance::{CovarianceBandwidths, CovarianceField};
use tvreg_core::locfit::local_linear_fit;
use tvreg_core::rng;
use tvreg_core::selection::{banded_gamma, gcv};
use tvreg_core::testing::compute_tn;
use tvreg_core::{EvaluationGrid, Kernel, RegressionData};

fn random_data(n: usize, seed: u64, beta: impl Fn(f64) -> [f64; 2], noise: f64) -> RegressionData {
    let mut r = rng::stream(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0 + 0.3 * rng::gaussian(&mut r), rng::gaussian(&mut r)]).collect();
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let b = beta((i + 1) as f64 / n as f64);
            b[0] * x[0] + b[1] * x[1] + noise * rng::gaussian(&mut r)
        })
        .collect();
    RegressionData::from_rows(y, &rows).unwrap()
}

#[test]
fn local_fit_matches_weighted_normal_equations() {
    let n = 20;
    let data = random_data(n, 3, |t| [t.sin(), 1.0 - t * t], 0.2);
    let kernel = Kernel::Epanechnikov;
    let b = 0.5;
    let grid = EvaluationGrid::new(vec![0.3, 0.5, 0.72]).unwrap();
    let fit = local_linear_fit(&data, &kernel, b, &grid).unwrap();
    for (k, &t0) in grid.points().iter().enumerate() {
        // Weighted least squares on [x_i, x_i (t_i − t0)/b]; the second block estimates b β′(t0).
        let mut z = DMatrix::zeros(n, 4);
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let u = (data.time(i) - t0) / b;
            for j in 0..2 {
                z[(i, j)] = data.x()[(i, j)];
                z[(i, j + 2)] = data.x()[(i, j)] * u;
            }
            w[(i, i)] = kernel.eval(u);
        }
        let lhs = z.transpose() * &w * &z;
        let rhs = z.transpose() * &w * data.y();
        let theta = lhs.lu().solve(&rhs).unwrap();
        for j in 0..2 {
            assert!((fit.beta()[(k, j)] - theta[j]).abs() < 1e-8, "t0 = {t0}, column {j}");
            assert!((fit.beta_deriv()[(k, j)] - theta[j + 2] / b).abs() < 1e-8);
        }
    }
}

#[test]
fn tn_matches_fine_quadrature() {
    // Local linear fits reproduce affine coefficients exactly, so β̃ is known.
    let c0 = [0.4, -1.0];
    let c1 = [1.5, 2.0];
    let data = random_data(200, 8, |t| [c0[0] + c1[0] * t, c0[1] + c1[1] * t], 0.0);
    let grid = EvaluationGrid::uniform(4000).unwrap();
    let fit = local_linear_fit(&data, &Kernel::Epanechnikov, 0.2, &grid).unwrap();
    let a = DMatrix::identity(2, 2);
    let target = DVector::from_vec(vec![0.3, -0.2]);
    let wmat = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let w = vec![wmat.clone(); grid.len()];
    let tn = compute_tn(&fit, &a, &target, &w, &grid.trapezoid_weights()).unwrap();

    let integrand = |t: f64| {
        let d = DVector::from_vec(vec![c0[0] + c1[0] * t - 0.3, c0[1] + c1[1] * t + 0.2]);
        (d.transpose() * &wmat * &d)[(0, 0)]
    };
    let m = 100_000;
    let oracle: f64 = (0..m).map(|k| integrand((k as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64;
    assert!(((tn - oracle) / oracle).abs() < 1e-6, "T_n {tn} vs {oracle}");
}

#[test]
fn gcv_matches_dense_hat_matrix() {
    let n = 50;
    let data = random_data(n, 21, |t| [1.0 + t, (3.0 * t).cos()], 0.5);
    let kernel = Kernel::Epanechnikov;
    let b = 0.4;
    let subset = [0usize, 1];
    let obs = EvaluationGrid::observation(n).unwrap();
    let fitted = |y: &DVector<f64>| -> DVector<f64> {
        let d = data.with_response(y.clone()).unwrap();
        let fit = local_linear_fit(&d, &kernel, b, &obs).unwrap();
        DVector::from_fn(n, |i, _| (0..2).map(|j| fit.beta()[(i, j)] * data.x()[(i, j)]).sum())
    };
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        h.set_column(j, &fitted(&e));
    }
    let resid = data.y() - &h * data.y();
    let gamma = banded_gamma(resid.as_slice(), 3).unwrap();
    let dense = gamma.to_dense();
    let quad = (resid.transpose() * dense.clone().lu().solve(&resid).unwrap())[(0, 0)];
    let oracle = quad / n as f64 / (1.0 - h.trace() / n as f64).powi(2);
    let got = gcv(&data, &subset, &kernel, b, &gamma).unwrap();
    assert!(((got - oracle) / oracle).abs() < 1e-9, "{got} vs {oracle}");
}

#[test]
fn sandwich_matches_dense_inverse() {
    let grid = EvaluationGrid::uniform(5).unwrap();
    let mut r = rng::stream(4);
    let mut spd = |p: usize| {
        let g = DMatrix::from_fn(p, p, |_, _| rng::gaussian(&mut r));
        &g * g.transpose() + DMatrix::identity(p, p) * 0.5
    };
    let m: Vec<_> = (0..5).map(|_| spd(3)).collect();
    let lambda: Vec<_> = (0..5).map(|_| spd(3)).collect();
    let bw = CovarianceBandwidths {
        varpi: 0.3,
        tau: 0.3,
        rho: 0.0,
    };
    let field = CovarianceField::from_parts(grid, m.clone(), lambda.clone(), bw, 0).unwrap();
    for k in 0..5 {
        let inv = m[k].clone().try_inverse().unwrap();
        let oracle = &inv * &lambda[k] * &inv;
        let err = (field.xi(k) - &oracle).abs().max() / oracle.abs().max();
        assert!(err < 1e-10, "point {k}: relative error {err}");
        assert!(!field.flags()[k]);
    }
}
