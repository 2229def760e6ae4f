use rand::Rng as _;
use tmvnlab::basis::{self, FitKind};
use tmvnlab::rng::rng_for;
use tmvnlab::{linalg, BasisGrid, BasisGrid32, MaternParams};

/// Simpson's rule on each piece between consecutive breakpoints. The
/// integrands here are piecewise polynomials of degree ≤ 2 with those
/// breakpoints, so the result is exact up to rounding.
fn piecewise_simpson(f: impl Fn(f64) -> f64, x: f64, breaks: &[f64]) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && *b < x).collect();
    pts.push(0.0);
    pts.push(x);
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|w| (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1]))).sum()
}

#[test]
fn integrated_bases_match_quadrature() {
    let mut rng = rng_for(41, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=40usize);
        let grid = BasisGrid::new(n).unwrap();
        let j = rng.random_range(0..n);
        let x: f64 = rng.random();
        let u = grid.knots()[j];
        let d = grid.delta();
        let breaks = [u - d, u, u + d];
        let psi = piecewise_simpson(|t| grid.hat_j(j, t).unwrap(), x, &breaks);
        assert!((grid.psi(j, x).unwrap() - psi).abs() < 1e-10, "psi n={n} j={j} x={x}");
        // ψ_j is piecewise quadratic, so Simpson is still exact for φ_j.
        let phi = piecewise_simpson(|t| grid.psi(j, t).unwrap(), x, &breaks);
        assert!((grid.phi(j, x).unwrap() - phi).abs() < 1e-10, "phi n={n} j={j} x={x}");
    }
}

#[test]
fn nonnegative_coefficients_give_monotone_and_convex_fits() {
    let mut rng = rng_for(42, 0);
    let xs: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    for _ in 0..50 {
        let n = rng.random_range(2..=30usize);
        let grid = BasisGrid::new(n).unwrap();
        let theta: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random() }).collect();
        let f = basis::evaluate_fit(0.3, &theta, &xs, &grid, FitKind::Monotone).unwrap();
        assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-12));

        let mut ctheta = vec![2.0 * rng.random::<f64>() - 1.0];
        ctheta.extend(&theta);
        let g = basis::evaluate_fit(-1.0, &ctheta, &xs, &grid, FitKind::Convex).unwrap();
        assert!(g.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-12));
    }
}

#[test]
fn slope_at_each_knot_is_its_coefficient() {
    let grid = BasisGrid::new(12).unwrap();
    let theta: Vec<f64> = (0..12).map(|j| (j as f64 * 0.7).sin().abs()).collect();
    let e = 1e-7;
    for (j, &u) in grid.knots().iter().enumerate() {
        let (a, b) = ((u - e).max(0.0), (u + e).min(1.0));
        let f = basis::evaluate_fit(0.0, &theta, &[a, b], &grid, FitKind::Monotone).unwrap();
        let slope = (f[1] - f[0]) / (b - a);
        assert!((slope - theta[j]).abs() < 1e-5, "knot {j}: {slope} vs {}", theta[j]);
    }
}

#[test]
fn hat_design_gram_is_tridiagonal() {
    let mut rng = rng_for(43, 0);
    let xs: Vec<f64> = (0..300).map(|_| rng.random()).collect();
    let grid = BasisGrid::new(15).unwrap();
    let phi = basis::design_hat(&xs, &grid).unwrap();
    let gram = phi.transpose() * &phi;
    assert_eq!(linalg::bandwidth(&gram, 0.0), 1);
}

#[test]
fn matern_kernel_properties() {
    for (nu, ell) in [(0.5, 0.2), (0.75, 0.5), (1.0, 1.0)] {
        let p = MaternParams::new(nu, ell).unwrap();
        assert!((basis::matern(0.0, p).unwrap() - 1.0).abs() < 1e-12);
        let ks: Vec<f64> = (0..50).map(|i| basis::matern(i as f64 * 0.05, p).unwrap()).collect();
        assert!(ks.windows(2).all(|w| w[1] < w[0]));
    }
    let p = MaternParams::new(0.5, 0.3).unwrap();
    for r in [0.01, 0.2, 0.9] {
        assert!((basis::matern(r, p).unwrap() - (-r / 0.3f64).exp()).abs() < 1e-10);
    }
    let ell = basis::ell_for_correlation(0.75, 0.5, 0.3).unwrap();
    let k = basis::matern(0.5, MaternParams::new(0.75, ell).unwrap()).unwrap();
    assert!((k - 0.3).abs() < 1e-9);
    assert!(MaternParams::new(0.4, 0.5).is_err());
    assert!(MaternParams::new(0.7, 1.5).is_err());
}

#[test]
fn prior_covariance_is_positive_definite() {
    for n in [5usize, 20, 50] {
        let grid = BasisGrid::new(n).unwrap();
        let k = basis::prior_covariance(&grid, MaternParams::fixed_default()).unwrap();
        assert!(linalg::is_positive_definite(&k.matrix));
        assert!((0..n).all(|i| (k.matrix[(i, i)] - 1.0 - k.jitter).abs() < 1e-12));
    }
}

#[test]
fn single_precision_grid_agrees() {
    let g64 = BasisGrid::new(9).unwrap();
    let g32 = BasisGrid32::new(9).unwrap();
    for j in 0..9 {
        for x in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert!((g64.psi(j, x).unwrap() - g32.psi(j, x as f32).unwrap() as f64).abs() < 1e-6);
        }
    }
    assert!(g64.psi(9, 0.5).is_err());
    assert!(g64.psi(0, 1.5).is_err());
}
