use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use tmvnlab::matrices::{self, BandedPosteriorOptions};
use tmvnlab::rng::rng_for;
use tmvnlab::{basis, linalg, BasisGrid, CorrelationBand, CorrelationBand32};

fn sorted_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

proptest! {
    #[test]
    fn compound_symmetry_spectrum(d in 2usize..40, rho in 0.01f64..0.99) {
        let cs = matrices::compound_symmetry(d, rho).unwrap();
        let mut want = cs.eigenvalues();
        want.sort_by(f64::total_cmp);
        let mut expect = vec![1.0 - rho; d - 1];
        expect.push(1.0 + (d as f64 - 1.0) * rho);
        for (a, b) in want.iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in sorted_eigs(&cs.matrix()).iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-12 * d as f64);
        }
    }

    #[test]
    fn block_approx_is_psd_and_dominated(n in 5usize..40, k in 2usize..8, rho in 0.05f64..0.6) {
        let k = k.min((n - 1) / 2);
        let band = CorrelationBand::tapered(n, k, rho).unwrap();
        let approx = matrices::block_independent_approx(&band).unwrap();
        prop_assert!(linalg::is_symmetric(&approx, 0.0));
        prop_assert!(sorted_eigs(&approx)[0] >= -1e-12);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    prop_assert!(approx[(i, j)] <= band.matrix()[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn neumann_error_bound(seed in 0u64..10_000, d in 1usize..30, n in 0usize..=10) {
        let mut rng = rng_for(seed, 0);
        let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let spd = &a * a.transpose() + DMatrix::<f64>::identity(d, d) * (0.05 + rng.random::<f64>());
        let b = matrices::neumann_inverse_approx(&spd, n).unwrap();
        let gap = linalg::operator_norm(&(spd.clone().try_inverse().unwrap() - &b.matrix));
        prop_assert!(gap <= b.error_bound() * (1.0 + 1e-9) + 1e-12, "gap {gap} > bound {}", b.error_bound());
    }
}

fn ar1(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
}

fn hat_design(n: usize, n_knots: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, 0);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    basis::design_hat(&xs, &BasisGrid::new(n_knots).unwrap()).unwrap()
}

/// On a well-conditioned prior (AR(1), eigenvalues in [1/3, 3]) the construction
/// behaves as the approximation result describes: banded output within the
/// stated width and a gap that shrinks with the Neumann degree.
#[test]
fn banded_posterior_well_conditioned() {
    let omega = ar1(40, 0.5);
    let phi = hat_design(400, 40, 3);
    let eps = 0.01;
    let mut gaps = Vec::new();
    for n0 in 1..=12 {
        let (m, rep) = matrices::banded_posterior_approx(&omega, &phi, eps, n0, BandedPosteriorOptions::default()).unwrap();
        assert!(linalg::is_positive_definite(&m));
        assert_eq!(rep.q, 1);
        assert!(rep.bandwidth <= (n0 * n0 * rep.r).max(n0 * rep.q), "n0={n0}: {} > bound", rep.bandwidth);
        assert!(rep.bandwidth <= rep.bandwidth_bound);
        gaps.push(rep.gap);
    }
    assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{gaps:?}");
    assert!(gaps[11] < 0.1 * gaps[0], "{gaps:?}");
}

#[test]
fn banded_posterior_identity_case() {
    let omega = DMatrix::<f64>::identity(6, 6);
    let phi = DMatrix::<f64>::zeros(10, 6);
    for n0 in [1, 3, 7] {
        let (m, rep) = matrices::banded_posterior_approx(&omega, &phi, 0.1, n0, BandedPosteriorOptions::default()).unwrap();
        assert_eq!(m, omega);
        assert_eq!(rep.gap, 0.0);
    }
}

#[test]
fn indefinite_truncation_is_an_error() {
    let grid = BasisGrid::new(50).unwrap();
    let omega = basis::prior_covariance(&grid, tmvnlab::MaternParams::fixed_default()).unwrap().matrix;
    let phi = hat_design(500, 50, 1);
    let err = matrices::banded_posterior_approx(&omega, &phi, 0.01, 2, BandedPosteriorOptions::default()).unwrap_err();
    assert!(matches!(err, tmvnlab::Error::NotPositiveDefinite(_)));
    let r = matrices::positive_definite_band_from(&omega, matrices::default_band(0.01)).unwrap();
    assert!(linalg::is_positive_definite(&linalg::band_truncate(&omega, r)));
}

#[test]
fn single_precision_band() {
    let band = CorrelationBand32::block_compound(12, 4, 0.6).unwrap();
    let stats = matrices::band_stats(&band).unwrap();
    assert_eq!((stats.rho_min, stats.rho_max), (0.6f32, 0.6f32));
    let b = matrices::neumann_inverse_approx(band.matrix(), 6).unwrap();
    let exact = band.matrix().clone().try_inverse().unwrap();
    assert!(linalg::operator_norm(&(exact - &b.matrix)) <= b.error_bound() * 1.001 + 1e-5);
}
