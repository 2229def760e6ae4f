//! Structured matrices: compound symmetry, banded nonnegative correlation
//! matrices, block-independent approximations and Neumann-series inverses.

use nalgebra::DMatrix;
#[cfg(test)]
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Equicorrelation matrix (1−ρ)I + ρ11ᵀ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundSymmetry<T> {
    pub d: usize,
    pub rho: T,
}

pub fn compound_symmetry<T: Scalar>(d: usize, rho: T) -> Result<CompoundSymmetry<T>> {
    if d == 0 {
        return Err(invalid("compound symmetry dimension must be >= 1"));
    }
    if !(rho > T::zero() && rho < T::one()) {
        return Err(invalid(format!("compound symmetry rho must lie in (0,1), got {}", rho.as_f64())));
    }
    Ok(CompoundSymmetry { d, rho })
}

impl<T: Scalar> CompoundSymmetry<T> {
    pub fn matrix(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.d, self.d, |i, j| if i == j { T::one() } else { self.rho })
    }

    /// Eigenvalues in decreasing order: 1+(d−1)ρ once, then 1−ρ repeated d−1 times.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev = vec![T::one() - self.rho; self.d];
        ev[0] = T::one() + T::of_usize(self.d - 1) * self.rho;
        ev
    }
}

/// A member of B_{N,K}: unit-diagonal, nonnegative, positive definite, with
/// zeros wherever |i − j| ≥ K.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationBand<T: Scalar> {
    n: usize,
    k: usize,
    entries: DMatrix<T>,
}

impl<T: Scalar> CorrelationBand<T> {
    pub fn new(entries: DMatrix<T>, k: usize) -> Result<Self> {
        linalg::require_square(&entries, "correlation matrix")?;
        let n = entries.nrows();
        if n < 3 || k < 2 || k > n - 1 {
            return Err(invalid(format!("band requires 2 <= K <= N-1, got N={n}, K={k}")));
        }
        for i in 0..n {
            if entries[(i, i)] != T::one() {
                return Err(invalid(format!("diagonal entry {i} is {}, expected 1", entries[(i, i)].as_f64())));
            }
            for j in 0..n {
                let v = entries[(i, j)];
                if v != entries[(j, i)] {
                    return Err(invalid(format!("matrix not symmetric at ({i},{j})")));
                }
                if i != j && v < T::zero() {
                    return Err(invalid(format!("negative correlation at ({i},{j})")));
                }
                if i.abs_diff(j) >= k && v != T::zero() {
                    return Err(invalid(format!("entry ({i},{j}) lies outside the band K={k} but is nonzero")));
                }
            }
        }
        linalg::cholesky(&entries)?;
        Ok(Self { n, k, entries })
    }

    /// Toeplitz band with correlation `rho` at every lag 1..K−1. Positive
    /// definite only for small ρ relative to K; construction fails otherwise.
    pub fn constant(n: usize, k: usize, rho: T) -> Result<Self> {
        Self::toeplitz(n, k, |_| rho)
    }

    /// Toeplitz band with lag-m correlation `f(m)` for 1 ≤ m ≤ K−1.
    pub fn toeplitz(n: usize, k: usize, f: impl Fn(usize) -> T) -> Result<Self> {
        let m = DMatrix::from_fn(n, n, |i, j| {
            let lag = i.abs_diff(j);
            match lag {
                0 => T::one(),
                l if l < k => f(l),
                _ => T::zero(),
            }
        });
        Self::new(m, k)
    }

    /// Triangular taper ρ·(1 − m/K) at lag m: the banded Toeplitz family whose
    /// symbol is a Fejér kernel, positive definite for every ρ in (0,1).
    pub fn tapered(n: usize, k: usize, rho: T) -> Result<Self> {
        let kk = T::of_usize(k);
        Self::toeplitz(n, k, |m| rho * (T::one() - T::of_usize(m) / kk))
    }

    /// Block-diagonal compound symmetry: consecutive blocks of size K (the last
    /// may be shorter) with in-block correlation ρ. Every nonzero correlation
    /// equals ρ and the matrix is positive definite for every ρ in (0,1).
    pub fn block_compound(n: usize, k: usize, rho: T) -> Result<Self> {
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                T::one()
            } else if i / k == j / k {
                rho
            } else {
                T::zero()
            }
        });
        Self::new(m, k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.entries
    }
}

/// Smallest nonzero and largest off-diagonal correlation within the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStats<T> {
    pub rho_min: T,
    pub rho_max: T,
}

/// ρ_min is the smallest *nonzero* correlation with 1 ≤ |i−j| ≤ K−1; ρ_max the
/// largest off-diagonal entry.
pub fn band_stats<T: Scalar>(sigma: &CorrelationBand<T>) -> Result<BandStats<T>> {
    let mut rho_min: Option<T> = None;
    let mut rho_max = T::zero();
    let (n, k) = (sigma.n, sigma.k);
    for i in 0..n {
        for j in (i + 1)..n.min(i + k) {
            let v = sigma.entries[(i, j)];
            if v > T::zero() {
                rho_min = Some(rho_min.map_or(v, |m: T| m.min(v)));
                rho_max = rho_max.max(v);
            }
        }
    }
    rho_min
        .map(|rho_min| BandStats { rho_min, rho_max })
        .ok_or_else(|| invalid("band statistics undefined: all off-diagonal entries are zero"))
}

/// Keeps the diagonal blocks over [1:K], [K+1:2K] and [2K+1:N] and zeroes the rest.
pub fn block_independent_approx<T: Scalar>(sigma: &CorrelationBand<T>) -> Result<DMatrix<T>> {
    let (n, k) = (sigma.n, sigma.k);
    if n < 2 * k + 1 {
        return Err(invalid(format!("block approximation needs N >= 2K+1, got N={n}, K={k}")));
    }
    let block = |i: usize| (i / k).min(2);
    Ok(DMatrix::from_fn(n, n, |i, j| if block(i) == block(j) { sigma.entries[(i, j)] } else { T::zero() }))
}

/// Truncated Neumann series B_n = γ Σ_{j=0}^{n} (I − γA)^j for A⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannApprox<T: Scalar> {
    pub degree: usize,
    pub gamma: T,
    pub kappa: T,
    /// Smallest eigenvalue m of the input.
    pub lambda_min: T,
    /// Largest eigenvalue M of the input.
    pub lambda_max: T,
    pub bandwidth: usize,
    pub matrix: DMatrix<T>,
}

impl<T: Scalar> NeumannApprox<T> {
    /// Guaranteed operator-norm error κ^{n+1}/m.
    pub fn error_bound(&self) -> T {
        self.kappa.powi(self.degree as i32 + 1) / self.lambda_min
    }
}

pub fn neumann_inverse_approx<T: Scalar>(a: &DMatrix<T>, n: usize) -> Result<NeumannApprox<T>> {
    linalg::require_square(a, "Neumann input")?;
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if !linalg::is_symmetric(a, T::lit(1e-12) * (T::one() + scale)) {
        return Err(invalid("Neumann input must be symmetric"));
    }
    linalg::cholesky(a)?;
    let (m, big_m) = linalg::eigen_range(a);
    if m <= T::zero() {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {}", m.as_f64())));
    }
    let gamma = T::lit(2.0) / (big_m + m);
    let kappa = ((big_m - m) / (big_m + m)).max(T::zero());
    let d = a.nrows();
    let eye = DMatrix::<T>::identity(d, d);
    let step = &eye - a * gamma;
    // Horner: B ← γI + (I − γA)B, n times.
    let mut b = &eye * gamma;
    for _ in 0..n {
        b = &eye * gamma + &step * &b;
    }
    linalg::symmetrize(&mut b);
    let bandwidth = linalg::bandwidth(&b, T::zero());
    Ok(NeumannApprox {
        degree: n,
        gamma,
        kappa,
        lambda_min: m,
        lambda_max: big_m,
        bandwidth,
        matrix: b,
    })
}

/// Σ_N = (Ω⁻¹ + ΦᵀΦ)⁻¹ computed as L (I + LᵀΦᵀΦL)⁻¹ Lᵀ with Ω = LLᵀ, so Ω is
/// never inverted explicitly.
pub fn posterior_scale<T: Scalar>(omega: &DMatrix<T>, phi: &DMatrix<T>) -> Result<DMatrix<T>> {
    linalg::require_square(omega, "prior covariance")?;
    if phi.ncols() != omega.nrows() {
        return Err(Error::DimensionMismatch {
            expected: omega.nrows(),
            got: phi.ncols(),
        });
    }
    let l = linalg::cholesky(omega)?.l();
    let pl = phi * &l;
    let n = omega.nrows();
    let inner = DMatrix::<T>::identity(n, n) + pl.tr_mul(&pl);
    let chol = linalg::cholesky(&inner)?;
    let x = chol.solve(&l.transpose());
    let mut s = &l * x;
    linalg::symmetrize(&mut s);
    Ok(s)
}

/// Tunable constants of the three-stage banded construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BandedPosteriorOptions {
    /// Band half-width kept when truncating Ω; default 2·⌈ln(1/ε)⌉.
    pub r: Option<usize>,
    /// Neumann degree for the prior precision (default n0).
    pub n1: Option<usize>,
    /// Neumann degree for the posterior scale (default n0).
    pub m1: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedPosteriorReport {
    pub eps: f64,
    pub r: usize,
    pub q: usize,
    pub n0: usize,
    pub n1: usize,
    pub m1: usize,
    /// ‖Ω − Ω_r‖.
    pub truncation_error: f64,
    /// min(λ_min(Ω), 1/λ_max(Ω)).
    pub lambda0: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub bandwidth: usize,
    pub bandwidth_bound: usize,
    /// ‖Σ_N − Σ′‖ against the exact posterior scale.
    pub gap: f64,
}

/// Banded SPD approximation Σ′ of Σ_N = (Ω⁻¹+ΦᵀΦ)⁻¹: band-truncate Ω at r,
/// Neumann-invert, add ΦᵀΦ, Neumann-invert again.
pub fn banded_posterior_approx<T: Scalar>(
    omega: &DMatrix<T>,
    phi: &DMatrix<T>,
    eps: f64,
    n0: usize,
    opts: BandedPosteriorOptions,
) -> Result<(DMatrix<T>, BandedPosteriorReport)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    if n0 == 0 {
        return Err(invalid("n0 must be positive"));
    }
    let sigma_n = posterior_scale(omega, phi)?;
    let r = opts.r.unwrap_or_else(|| default_band(eps));
    let n1 = opts.n1.unwrap_or(n0);
    let m1 = opts.m1.unwrap_or(n0);

    let (om_lo, om_hi) = linalg::eigen_range(omega);
    let omega_r = linalg::band_truncate(omega, r);
    let truncation_error = linalg::operator_norm(&(omega - &omega_r)).as_f64();
    if !linalg::is_positive_definite(&omega_r) {
        return Err(Error::NotPositiveDefinite(format!(
            "band truncation of the prior covariance at r={r} (eps={eps}) is not positive definite"
        )));
    }
    let prec = neumann_inverse_approx(&omega_r, n1)?;
    let ptp = phi.tr_mul(phi);
    let q = linalg::bandwidth(&ptp, T::zero());
    let mut post_prec = &prec.matrix + &ptp;
    linalg::symmetrize(&mut post_prec);
    let post = neumann_inverse_approx(&post_prec, m1)?;
    let gap = linalg::operator_norm(&(&sigma_n - &post.matrix)).as_f64();
    let report = BandedPosteriorReport {
        eps,
        r,
        q,
        n0,
        n1,
        m1,
        truncation_error,
        lambda0: om_lo.as_f64().min(1.0 / om_hi.as_f64()),
        kappa0: prec.kappa.as_f64(),
        kappa1: post.kappa.as_f64(),
        bandwidth: post.bandwidth,
        bandwidth_bound: (n1 * r).max(q) * m1,
        gap,
    };
    Ok((post.matrix, report))
}

/// Default truncation band 2·⌈ln(1/ε)⌉.
pub fn default_band(eps: f64) -> usize {
    2 * (1.0 / eps).ln().ceil() as usize
}

/// Smallest r ≥ `r_min` whose band truncation of Ω is positive definite. The
/// untruncated matrix (r = N−1) always qualifies when Ω is SPD.
pub fn positive_definite_band_from<T: Scalar>(omega: &DMatrix<T>, r_min: usize) -> Option<usize> {
    let n = omega.nrows();
    (r_min.min(n.saturating_sub(1))..n).find(|&r| linalg::is_positive_definite(&linalg::band_truncate(omega, r)))
}

/// Smallest r for which the band truncation of Ω is positive definite and
/// within `eps` of Ω in operator norm.
pub fn smallest_admissible_band<T: Scalar>(omega: &DMatrix<T>, eps: f64) -> Option<usize> {
    let n = omega.nrows();
    (0..n).find(|&r| {
        let t = linalg::band_truncate(omega, r);
        linalg::operator_norm(&(omega - &t)).as_f64() <= eps && linalg::is_positive_definite(&t)
    })
}

/// Screens Ω against the tail-decay part of the well-conditioned class:
/// returns the smallest C with max_j Σ_{|i−j|>k} |Ω_ij| ≤ C k^{−α} for all k ≥ 1.
pub fn tail_decay_constant<T: Scalar>(omega: &DMatrix<T>, alpha: f64) -> f64 {
    let n = omega.nrows();
    let mut c: f64 = 0.0;
    for k in 1..n {
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let s: f64 = (0..n).filter(|&i| i.abs_diff(j) > k).map(|i| omega[(i, j)].abs().as_f64()).sum();
            worst = worst.max(s);
        }
        c = c.max(worst * (k as f64).powf(alpha));
    }
    c
}
