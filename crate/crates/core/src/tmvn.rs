//! The orthant-truncated normal law N_C(γ, Ω), C = [0, ∞)^N.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussprob::{self, Method, ProbEstimate, Rectangle};
use crate::linalg;
use crate::normal;
use crate::rng::{derive_seed, rng_for, Rng};

/// Default lattice size for normalizers and conditional probabilities.
pub const DEFAULT_MC_SAMPLES: u64 = 200_000;

#[derive(Debug)]
pub struct TruncatedMVN {
    location: DVector<f64>,
    scale: DMatrix<f64>,
    mc_samples: u64,
    seed: u64,
    normalizer: OnceLock<ProbEstimate>,
}

impl Clone for TruncatedMVN {
    fn clone(&self) -> Self {
        let normalizer = OnceLock::new();
        if let Some(m) = self.normalizer.get() {
            let _ = normalizer.set(*m);
        }
        Self {
            location: self.location.clone(),
            scale: self.scale.clone(),
            mc_samples: self.mc_samples,
            seed: self.seed,
            normalizer,
        }
    }
}

impl TruncatedMVN {
    pub fn new(location: DVector<f64>, scale: DMatrix<f64>) -> Result<Self> {
        linalg::require_square(&scale, "scale matrix")?;
        if location.len() != scale.nrows() {
            return Err(Error::DimensionMismatch { expected: scale.nrows(), got: location.len() });
        }
        if scale.nrows() == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !linalg::is_symmetric(&scale, 1e-12 * (1.0 + scale.amax())) {
            return Err(invalid("scale matrix must be symmetric"));
        }
        linalg::cholesky(&scale)?;
        Ok(Self { location, scale, mc_samples: DEFAULT_MC_SAMPLES, seed: 0, normalizer: OnceLock::new() })
    }

    /// Zero-location law with scale Σ.
    pub fn centered(scale: DMatrix<f64>) -> Result<Self> {
        let n = scale.nrows();
        Self::new(DVector::zeros(n), scale)
    }

    /// Monte Carlo settings used for m_C and for conditional probabilities.
    pub fn with_mc(mut self, n_samples: u64, seed: u64) -> Self {
        self.mc_samples = n_samples;
        self.seed = seed;
        self.normalizer = OnceLock::new();
        self
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &DVector<f64> {
        &self.location
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// m_C = P(X ∈ C) for X ~ N(γ, Ω), computed once and cached.
    pub fn normalizer(&self) -> Result<ProbEstimate> {
        if let Some(m) = self.normalizer.get() {
            return Ok(*m);
        }
        let n = self.dim();
        let rect = Rectangle {
            lower: self.location.iter().map(|g| -g).collect(),
            upper: vec![f64::INFINITY; n],
        };
        let m = gaussprob::rect_prob_sov(&self.scale, &rect, self.mc_samples, derive_seed(self.seed, 0xC0))?;
        if m.value <= 0.0 {
            return Err(Error::Numerical("truncation region has zero estimated mass".into()));
        }
        Ok(*self.normalizer.get_or_init(|| m))
    }

    /// log density on C (−∞ outside), including −log m_C.
    pub fn log_density(&self, theta: &DVector<f64>) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        if theta.iter().any(|t| *t < 0.0 || t.is_nan()) {
            return Ok(f64::NEG_INFINITY);
        }
        let chol = linalg::cholesky(&self.scale)?;
        let z = chol.l().solve_lower_triangular(&(theta - &self.location)).expect("triangular solve");
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        let m = self.normalizer()?;
        Ok(-(self.dim() as f64) * normal::LN_SQRT_2PI - log_det - 0.5 * z.norm_squared() - m.value.ln())
    }

    /// Coordinate-wise Gibbs sampler; draws are the rows of the result.
    pub fn gibbs_sample(&self, n_draws: usize, burn_in: usize, thin: usize, seed: u64) -> Result<GibbsSample> {
        if n_draws == 0 {
            return Err(invalid("n_draws must be >= 1"));
        }
        let thin = thin.max(1);
        let n = self.dim();
        let prec = linalg::cholesky(&self.scale)?.inverse();
        let mut rng = rng_for(seed, 0);
        let mut theta: Vec<f64> = self.location.iter().map(|g| g.max(0.01)).collect();
        let mut draws = DMatrix::zeros(n_draws, n);
        let total = burn_in + n_draws * thin;
        for it in 0..total {
            for j in 0..n {
                let pjj = prec[(j, j)];
                let mut s = 0.0;
                for k in 0..n {
                    if k != j {
                        s += prec[(j, k)] * (theta[k] - self.location[k]);
                    }
                }
                let mu = self.location[j] - s / pjj;
                theta[j] = sample_univ_truncnorm(mu, pjj.sqrt().recip(), 0.0, &mut rng);
            }
            if it >= burn_in && (it - burn_in + 1).is_multiple_of(thin) {
                let row = (it - burn_in) / thin;
                for j in 0..n {
                    draws[(row, j)] = theta[j];
                }
            }
        }
        let lag1_autocorr = (0..n).map(|j| lag1(draws.column(j).iter().copied())).collect();
        Ok(GibbsSample { draws, burn_in, thin, seed, lag1_autocorr })
    }

    fn require_centered(&self) -> Result<()> {
        if self.location.iter().any(|g| *g != 0.0) {
            return Err(invalid("marginal densities are implemented for zero location only"));
        }
        Ok(())
    }

    /// Marginal density of θ_{1:k} at `point`, with its Monte Carlo standard error.
    pub fn marginal_density(&self, k: usize, point: &[f64]) -> Result<DensityEstimate> {
        self.require_centered()?;
        let n = self.dim();
        if k == 0 || k >= n {
            return Err(invalid(format!("marginal order k must lie in [1, N-1], got k={k}, N={n}")));
        }
        if point.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: point.len() });
        }
        if point.iter().any(|t| *t < 0.0 || t.is_nan()) {
            return Ok(DensityEstimate { density: 0.0, std_error: 0.0 });
        }
        let skk = self.scale.view((0, 0), (k, k)).into_owned();
        let srk = self.scale.view((k, 0), (n - k, k)).into_owned();
        let srr = self.scale.view((k, k), (n - k, n - k)).into_owned();
        let chol = linalg::cholesky(&skk).map_err(|_| Error::Numerical("leading block is singular".into()))?;
        let theta = DVector::from_column_slice(point);
        let w = chol.solve(&theta);
        let quad = theta.dot(&w);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let cond_mean = &srk * &w;
        let mut schur = &srr - &srk * chol.solve(&srk.transpose());
        linalg::symmetrize(&mut schur);
        let cond = if n - k == 1 {
            ProbEstimate::exact(normal::cdf(cond_mean[0] / schur[(0, 0)].sqrt()), Method::ClosedForm)
        } else {
            let rect = Rectangle { lower: vec![f64::NEG_INFINITY; n - k], upper: cond_mean.iter().copied().collect() };
            gaussprob::rect_prob_sov(&schur, &rect, self.mc_samples, derive_seed(self.seed, 0xC1))?
        };
        let m = self.normalizer()?;
        let base = (-(k as f64) * normal::LN_SQRT_2PI - 0.5 * log_det - 0.5 * quad).exp() / m.value;
        let density = base * cond.value;
        let rel = ((cond.std_error / cond.value.max(f64::MIN_POSITIVE)).powi(2) + (m.std_error / m.value).powi(2)).sqrt();
        Ok(DensityEstimate { density, std_error: density * rel })
    }

    /// Mode of the first univariate marginal by golden-section search on [0, 10].
    pub fn univariate_marginal_mode(&self) -> Result<f64> {
        self.require_centered()?;
        let n = self.dim();
        if n < 2 {
            return Ok(0.0);
        }
        if (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).any(|(i, j)| i != j && self.scale[(i, j)] < 0.0) {
            return Err(invalid("mode search requires nonnegative correlations"));
        }
        let f = |t: f64| self.marginal_density(1, &[t]).map(|d| d.density);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0f64, 10.0f64);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        while b - a > 1e-7 {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d)?;
            }
        }
        let mut mode = 0.5 * (a + b);
        if f(0.0)? >= f(mode)? {
            mode = 0.0;
        }
        if mode >= 10.0 - 1e-6 {
            return Err(Error::Optimization("marginal mode hit the upper end of the search bracket".into()));
        }
        let coupled = (1..n).any(|j| self.scale[(0, j)] > 0.0);
        if coupled && mode <= 0.0 {
            return Err(Error::Optimization("expected a strictly positive mode for a coupled first coordinate".into()));
        }
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub density: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct GibbsSample {
    pub draws: DMatrix<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub lag1_autocorr: Vec<f64>,
}

pub(crate) fn lag1(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.len() < 3 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let den: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    if den == 0.0 {
        return 0.0;
    }
    v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / den
}

/// Exact draw from N(μ, σ²) conditioned on [lo, ∞).
pub fn sample_univ_truncnorm(mu: f64, sigma: f64, lo: f64, rng: &mut Rng) -> f64 {
    debug_assert!(sigma > 0.0);
    let a = (lo - mu) / sigma;
    let z = if a == f64::NEG_INFINITY {
        normal::quantile(open_uniform(rng))
    } else if normal::sf(a) >= 1e-10 {
        if a > 0.0 {
            let z = -normal::quantile(normal::sf(a) * open_uniform(rng));
            z.max(a)
        } else {
            let ca = normal::cdf(a);
            normal::quantile(ca + (1.0 - ca) * open_uniform(rng)).max(a)
        }
    } else {
        // Exponential proposal with the optimal rate for the tail beyond a.
        let lam = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let z = a - open_uniform(rng).ln() / lam;
            if open_uniform(rng).ln() <= -0.5 * (z - lam).powi(2) {
                break z;
            }
        }
    };
    mu + sigma * z
}

fn open_uniform(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// α_{N,δ} = P(θ₁ ≤ δ) under N_C(0, Σ).
pub fn alpha_mass(sigma: &DMatrix<f64>, delta: f64, n_samples: u64, seed: u64) -> Result<ProbEstimate> {
    corner_mass(sigma, 1, delta, n_samples, seed)
}

/// β_{N,k,δ} = P(θ₁ ≤ δ, …, θ_k ≤ δ) under N_C(0, Σ).
pub fn corner_mass(sigma: &DMatrix<f64>, k: usize, delta: f64, n_samples: u64, seed: u64) -> Result<ProbEstimate> {
    validate_delta(delta)?;
    linalg::require_square(sigma, "scale matrix")?;
    let n = sigma.nrows();
    if k == 0 || k > n {
        return Err(invalid(format!("corner order must lie in [1, N], got k={k}, N={n}")));
    }
    let mut num = Rectangle::orthant(n, 0.0);
    for i in 0..k {
        num.upper[i] = delta;
    }
    if n == 1 {
        linalg::cholesky(sigma)?;
        let s = sigma[(0, 0)].sqrt();
        return Ok(ProbEstimate::exact(2.0 * normal::interval(0.0, delta / s), Method::ClosedForm));
    }
    let r = gaussprob::rect_ratio_sov(sigma, &num, &Rectangle::orthant(n, 0.0), n_samples, seed)?;
    Ok(r.ratio)
}

/// α_{d,δ} for Σ_d(ρ) by one-dimensional quadrature.
pub fn alpha_mass_cs(d: usize, rho: f64, delta: f64) -> Result<ProbEstimate> {
    validate_delta(delta)?;
    let num = gaussprob::cs_strip_prob(d, rho, delta)?;
    let den = gaussprob::cs_orthant_prob(d, rho, 0.0)?;
    Ok(ProbEstimate { value: num.value / den.value, std_error: 0.0, method: Method::CsQuadrature, n_samples: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::compound_symmetry;

    #[test]
    fn half_normal_density() {
        let t = TruncatedMVN::centered(DMatrix::identity(1, 1)).unwrap();
        let ld = t.log_density(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((ld - (2.0 * normal::pdf(0.0)).ln()).abs() < 1e-14);
        assert_eq!(t.log_density(&DVector::from_vec(vec![-0.1])).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn skew_normal_marginal() {
        let s = compound_symmetry(2, 0.5).unwrap().matrix();
        let t = TruncatedMVN::centered(s).unwrap().with_mc(100_000, 5);
        let d0 = t.marginal_density(1, &[0.0]).unwrap();
        let m = t.normalizer().unwrap();
        assert!((d0.density - normal::pdf(0.0) * 0.5 / m.value).abs() < 1e-14);
        assert!((d0.density - 0.598_413_556_530_204_2).abs() < 5e-3);
        let rho: f64 = 0.5;
        for &x in &[0.2, 0.7, 1.5, 3.0] {
            let expect = 3.0 * normal::pdf(x) * normal::cdf(rho * x / (1.0 - rho * rho).sqrt());
            let got = t.marginal_density(1, &[x]).unwrap().density * m.value * 3.0;
            assert!((got - expect).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn truncnorm_regimes() {
        let mut rng = rng_for(9, 0);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| sample_univ_truncnorm(0.0, 1.0, 8.0, &mut rng)).sum::<f64>() / n as f64;
        let exact = normal::pdf(8.0) / normal::sf(8.0);
        assert!((mean - exact).abs() < 0.01, "{mean} vs {exact}");
        let xs: Vec<f64> = (0..n).map(|_| sample_univ_truncnorm(1.0, 2.0, 50.0, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x >= 50.0));
        let hn: f64 = (0..n).map(|_| sample_univ_truncnorm(0.0, 1.0, 0.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((hn - (2.0 / std::f64::consts::PI).sqrt()).abs() < 4.0 * 0.6 / (n as f64).sqrt());
    }

    #[test]
    fn alpha_diagonal_closed_form() {
        let a = alpha_mass(&DMatrix::identity(5, 5), 0.1, 2000, 1).unwrap();
        assert!((a.value - 2.0 * (normal::cdf(0.1) - 0.5)).abs() < 1e-12);
        assert!(alpha_mass(&DMatrix::identity(5, 5), 0.0, 2000, 1).is_err());
    }

    #[test]
    fn mode_zero_for_diagonal() {
        let t = TruncatedMVN::centered(DMatrix::identity(3, 3)).unwrap().with_mc(4000, 1);
        assert_eq!(t.univariate_marginal_mode().unwrap(), 0.0);
    }
}
