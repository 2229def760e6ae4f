//! Hat-function basis on an equally spaced knot grid and the Matérn prior.
//!
//! With knots u_j = j/(N−1) and spacing δ = 1/(N−1), h_j(x) = h((x − u_j)/δ)
//! for the hat h(x) = (1 − |x|)₊. Monotone fits use ψ_j(x) = ∫₀ˣ h_j, convex
//! fits φ_j(x) = ∫₀ˣ ψ_j; nonnegative coefficients are equivalent to the shape
//! constraint. All three are evaluated in closed form.
//!
//! The Matérn correlation uses the scaling
//! k(r) = 2^{1−ν}/Γ(ν) · (√(2ν) r/ℓ)^ν · K_ν(√(2ν) r/ℓ), so that ν = ½ gives exp(−r/ℓ).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisGrid<T> {
    n: usize,
    delta: T,
    knots: Vec<T>,
}

impl<T: Scalar> BasisGrid<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("basis grid needs at least 2 knots, got {n}")));
        }
        let delta = T::one() / T::of_usize(n - 1);
        let knots = (0..n).map(|j| if j == n - 1 { T::one() } else { T::of_usize(j) * delta }).collect();
        Ok(Self { n, delta, knots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    fn check(&self, j: usize, x: T) -> Result<()> {
        if j >= self.n {
            return Err(invalid(format!("basis index {j} out of range 0..{}", self.n)));
        }
        check_unit(x)
    }

    fn scaled(&self, j: usize, x: T) -> T {
        (x - self.knots[j]) / self.delta
    }

    /// h_j(x) = h((x − u_j)/δ).
    pub fn hat_j(&self, j: usize, x: T) -> Result<T> {
        self.check(j, x)?;
        Ok(hat(self.scaled(j, x)))
    }

    /// ψ_j(x) = ∫₀ˣ h_j(t) dt.
    pub fn psi(&self, j: usize, x: T) -> Result<T> {
        self.check(j, x)?;
        Ok(self.psi_unchecked(j, x))
    }

    fn psi_unchecked(&self, j: usize, x: T) -> T {
        self.delta * (hat_cdf(self.scaled(j, x)) - hat_cdf(self.scaled(j, T::zero())))
    }

    /// φ_j(x) = ∫₀ˣ ψ_j(t) dt.
    pub fn phi(&self, j: usize, x: T) -> Result<T> {
        self.check(j, x)?;
        Ok(self.phi_unchecked(j, x))
    }

    fn phi_unchecked(&self, j: usize, x: T) -> T {
        let s0 = self.scaled(j, T::zero());
        self.delta * (self.delta * (hat_cdf2(self.scaled(j, x)) - hat_cdf2(s0)) - x * hat_cdf(s0))
    }
}

fn check_unit<T: Scalar>(x: T) -> Result<()> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(invalid(format!("covariate {} outside [0, 1]", x.as_f64())));
    }
    Ok(())
}

/// h(x) = (1 − |x|)·1[−1,1](x).
pub fn hat<T: Scalar>(x: T) -> T {
    let a = x.abs();
    if a >= T::one() {
        T::zero()
    } else {
        T::one() - a
    }
}

/// ∫_{−∞}^{s} h.
fn hat_cdf<T: Scalar>(s: T) -> T {
    let half = T::lit(0.5);
    if s <= -T::one() {
        T::zero()
    } else if s <= T::zero() {
        half * (s + T::one()).powi(2)
    } else if s < T::one() {
        T::one() - half * (T::one() - s).powi(2)
    } else {
        T::one()
    }
}

/// ∫_{−∞}^{s} ∫_{−∞}^{t} h.
fn hat_cdf2<T: Scalar>(s: T) -> T {
    let sixth = T::one() / T::lit(6.0);
    if s <= -T::one() {
        T::zero()
    } else if s <= T::zero() {
        sixth * (s + T::one()).powi(3)
    } else if s < T::one() {
        s + sixth * (T::one() - s).powi(3)
    } else {
        s
    }
}

/// Ψ with Ψ_{ij} = ψ_{j}(x_i) (0-based columns).
pub fn design_monotone<T: Scalar>(xs: &[T], grid: &BasisGrid<T>) -> Result<DMatrix<T>> {
    for &x in xs {
        check_unit(x)?;
    }
    Ok(DMatrix::from_fn(xs.len(), grid.n, |i, j| grid.psi_unchecked(j, xs[i])))
}

/// Design for convex fits: first column x (linear term θ*), then φ_j(x).
pub fn design_convex<T: Scalar>(xs: &[T], grid: &BasisGrid<T>) -> Result<DMatrix<T>> {
    for &x in xs {
        check_unit(x)?;
    }
    Ok(DMatrix::from_fn(xs.len(), grid.n + 1, |i, j| {
        if j == 0 {
            xs[i]
        } else {
            grid.phi_unchecked(j - 1, xs[i])
        }
    }))
}

/// Design with Φ_{ij} = h_j(x_i); ΦᵀΦ is tridiagonal.
pub fn design_hat<T: Scalar>(xs: &[T], grid: &BasisGrid<T>) -> Result<DMatrix<T>> {
    for &x in xs {
        check_unit(x)?;
    }
    Ok(DMatrix::from_fn(xs.len(), grid.n, |i, j| hat(grid.scaled(j, xs[i]))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Monotone,
    Convex,
}

/// f(x) = ξ₀ + Σ θ_{j+1} ψ_j(x) (monotone), or ξ₀ + θ*·x + Σ θ_{j+1} φ_j(x)
/// (convex, with `theta = [θ*, θ_1, …, θ_N]`).
pub fn evaluate_fit<T: Scalar>(xi0: T, theta: &[T], xs: &[T], grid: &BasisGrid<T>, kind: FitKind) -> Result<Vec<T>> {
    let expected = match kind {
        FitKind::Monotone => grid.n,
        FitKind::Convex => grid.n + 1,
    };
    if theta.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: theta.len() });
    }
    let design = match kind {
        FitKind::Monotone => design_monotone(xs, grid)?,
        FitKind::Convex => design_convex(xs, grid)?,
    };
    let f = design * DVector::from_column_slice(theta);
    Ok(f.iter().map(|v| *v + xi0).collect())
}

/// Smoothness ν and length-scale ℓ of the Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams<T> {
    pub nu: T,
    pub ell: T,
}

pub const NU_SUPPORT: (f64, f64) = (0.5, 1.0);
pub const ELL_SUPPORT: (f64, f64) = (0.1, 1.0);

impl<T: Scalar> MaternParams<T> {
    /// Accepts ν ∈ [0.5, 1] and ℓ ∈ [0.1, 1] (the closed prior supports).
    pub fn new(nu: T, ell: T) -> Result<Self> {
        let (nu64, ell64) = (nu.as_f64(), ell.as_f64());
        if !(NU_SUPPORT.0..=NU_SUPPORT.1).contains(&nu64) || !(ELL_SUPPORT.0..=ELL_SUPPORT.1).contains(&ell64) {
            return Err(invalid(format!("Matérn parameters (nu={nu64}, ell={ell64}) outside [0.5,1]x[0.1,1]")));
        }
        Ok(Self { nu, ell })
    }

    /// ν = 0.75 with ℓ chosen so that k(1) = 0.05.
    pub fn fixed_default() -> Self {
        let ell = ell_for_correlation(0.75, 1.0, 0.05).expect("k(1)=0.05 solvable at nu=0.75");
        Self { nu: T::lit(0.75), ell: T::lit(ell) }
    }
}

fn matern_f64(r: f64, nu: f64, ell: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let x = (2.0 * nu).sqrt() * r / ell;
    if x > 600.0 {
        return 0.0;
    }
    let (_, k_nu, _, _) = puruspe::besselik(nu, x);
    let ln = (1.0 - nu) * std::f64::consts::LN_2 - puruspe::ln_gamma(nu) + nu * x.ln() + k_nu.ln();
    ln.exp().min(1.0)
}

/// Matérn correlation at distance r.
pub fn matern<T: Scalar>(r: T, p: MaternParams<T>) -> Result<T> {
    let r64 = r.as_f64();
    if !(r64 >= 0.0) {
        return Err(invalid(format!("distance must be nonnegative, got {r64}")));
    }
    MaternParams::new(p.nu, p.ell)?;
    Ok(T::lit(matern_f64(r64, p.nu.as_f64(), p.ell.as_f64())))
}

/// ℓ with k(r) = target at smoothness ν, by bisection (k is increasing in ℓ).
pub fn ell_for_correlation(nu: f64, r: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) || !(r > 0.0) {
        return Err(invalid("target correlation must lie in (0,1) and r > 0"));
    }
    let (mut lo, mut hi) = (1e-4 * r, 1e4 * r);
    if matern_f64(r, nu, lo) > target || matern_f64(r, nu, hi) < target {
        return Err(Error::Numerical("length-scale bracket does not contain the target".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if matern_f64(r, nu, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorCovariance<T: Scalar> {
    pub matrix: DMatrix<T>,
    /// Diagonal jitter that had to be added (0 when none).
    pub jitter: f64,
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;

/// Σ_{jj'} = k(u_j − u_{j'}), made numerically SPD by escalating diagonal jitter.
pub fn prior_covariance<T: Scalar>(grid: &BasisGrid<T>, p: MaternParams<T>) -> Result<PriorCovariance<T>> {
    MaternParams::new(p.nu, p.ell)?;
    let n = grid.n;
    let (nu, ell) = (p.nu.as_f64(), p.ell.as_f64());
    // Stationary on a regular grid: one kernel evaluation per lag.
    let by_lag: Vec<T> = (0..n).map(|m| T::lit(matern_f64(m as f64 * grid.delta.as_f64(), nu, ell))).collect();
    let base = DMatrix::from_fn(n, n, |i, j| by_lag[i.abs_diff(j)]);
    if linalg::is_positive_definite(&base) {
        return Ok(PriorCovariance { matrix: base, jitter: 0.0 });
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * 1.000_001 {
        let m = &base + DMatrix::<T>::identity(n, n) * T::lit(jitter);
        if linalg::is_positive_definite(&m) {
            return Ok(PriorCovariance { matrix: m, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(format!(
        "Matérn covariance (nu={nu}, ell={ell}, N={n}) not positive definite after jitter {JITTER_MAX}"
    )))
}
