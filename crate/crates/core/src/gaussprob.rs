//! Gaussian probability engines.
//!
//! * [`rect_prob_sov`]: rectangle probabilities for a general covariance by
//!   separation of variables with randomized lattice rules.
//! * [`cs_orthant_prob`] / [`cs_strip_prob`]: deterministic one-dimensional
//!   quadrature for equicorrelated Gaussians, using X_i = √ρ·W + √(1−ρ)·W_i.
//! * Analytic tail bounds ([`mills_bounds`], [`max_gaussian_bounds`]).

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::quad;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SovMc,
    CsQuadrature,
    ClosedForm,
}

impl Method {
    pub fn is_deterministic(self) -> bool {
        !matches!(self, Method::SovMc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    pub n_samples: u64,
}

impl ProbEstimate {
    pub fn exact(value: f64, method: Method) -> Self {
        Self { value, std_error: 0.0, method, n_samples: 0 }
    }
}

/// Box lower ≤ x ≤ upper; entries may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l >= u {
                return Err(invalid(format!("rectangle needs lower < upper, coordinate {i}: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The orthant [a, ∞)^d.
    pub fn orthant(d: usize, a: f64) -> Self {
        Self { lower: vec![a; d], upper: vec![f64::INFINITY; d] }
    }

    /// {lo ≤ x_1 ≤ hi, x_i ≥ 0 for i ≥ 2}.
    pub fn strip(d: usize, lo: f64, hi: f64) -> Self {
        let mut r = Self::orthant(d, 0.0);
        r.lower[0] = lo;
        r.upper[0] = hi;
        r
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn is_full_space(&self) -> bool {
        self.lower.iter().all(|l| *l == f64::NEG_INFINITY) && self.upper.iter().all(|u| *u == f64::INFINITY)
    }
}

/// Number of randomly shifted lattice replicates behind each SOV estimate.
pub const SOV_BATCHES: usize = 32;

/// Smallest sample count accepted by the SOV estimator.
pub const MIN_SOV_SAMPLES: u64 = 1000;

/// Separation-of-variables problem after reordering and Cholesky factorization,
/// with bounds and factor rescaled so the factor has unit diagonal.
///
/// Each coordinate is drawn from a truncated normal whose location is shifted
/// by a tilting vector μ (minimax exponential tilting): μ is the saddle point
/// of ψ(x, μ) = Σ_k [log P(l̃_k ≤ Z ≤ ũ_k) + μ_k²/2 − x_k μ_k], which makes the
/// likelihood-ratio weights nearly constant even for tiny probabilities.
/// μ = 0 recovers the classical separation-of-variables estimator.
struct SovProblem {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Row i holds the strictly-lower entries L[i, start_i..i].
    rows: Vec<(usize, Vec<f64>)>,
    mu: Vec<f64>,
}

/// log P(a ≤ Z ≤ b) without cancellation in either tail.
fn ln_interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        let (la, lb) = (normal::ln_cdf(-a), normal::ln_cdf(-b));
        la + (-(lb - la).exp()).ln_1p()
    } else if b < 0.0 {
        let (la, lb) = (normal::ln_cdf(a), normal::ln_cdf(b));
        lb + (-(la - lb).exp()).ln_1p()
    } else {
        (-normal::cdf(a) - normal::sf(b)).ln_1p()
    }
}

/// Inverse-CDF draw of a standard normal restricted to [a, b].
fn truncated_quantile(a: f64, b: f64, u: f64) -> f64 {
    let y = if a > 0.0 {
        let (sa, sb) = (normal::sf(a), normal::sf(b));
        -normal::quantile((sa - u * (sa - sb)).max(f64::MIN_POSITIVE))
    } else if b < 0.0 {
        let (ca, cb) = (normal::cdf(a), normal::cdf(b));
        normal::quantile((ca + u * (cb - ca)).max(f64::MIN_POSITIVE))
    } else {
        let ca = normal::cdf(a);
        let p = ca + u * (normal::cdf(b) - ca);
        if p > 0.5 {
            -normal::quantile((1.0 - p).max(f64::MIN_POSITIVE))
        } else {
            normal::quantile(p.max(f64::MIN_POSITIVE))
        }
    };
    y.clamp(a, b)
}

impl SovProblem {
    fn new(sigma: &DMatrix<f64>, rect: &Rectangle) -> Result<Self> {
        let d = rect.dim();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
        }
        // Increasing unconditional interval probability; the stable sort keeps
        // banded structure intact when the probabilities tie.
        let mut order: Vec<usize> = (0..d).collect();
        let p: Vec<f64> = (0..d)
            .map(|i| {
                let s = sigma[(i, i)].sqrt();
                normal::interval(rect.lower[i] / s, rect.upper[i] / s)
            })
            .collect();
        order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
        let permuted = DMatrix::from_fn(d, d, |i, j| sigma[(order[i], order[j])]);
        let l = crate::linalg::cholesky(&permuted)?.l();
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        let mut rows = Vec::with_capacity(d);
        for i in 0..d {
            let dii = l[(i, i)];
            lower.push(rect.lower[order[i]] / dii);
            upper.push(rect.upper[order[i]] / dii);
            let start = (0..i).find(|&j| (l[(i, j)] / dii).abs() > 1e-15).unwrap_or(i);
            rows.push((start, (start..i).map(|j| l[(i, j)] / dii).collect()));
        }
        let mut problem = Self { lower, upper, rows, mu: vec![0.0; d] };
        if d >= 2 {
            if let Some(mu) = problem.tilting() {
                problem.mu = mu;
            }
        }
        Ok(problem)
    }

    fn l_entry(&self, i: usize, j: usize) -> f64 {
        let (start, ref row) = self.rows[i];
        if j >= start && j < i {
            row[j - start]
        } else {
            0.0
        }
    }

    /// Gradient and Jacobian of ψ in the unknowns (x_1..x_{d−1}, μ_1..μ_{d−1}).
    #[allow(clippy::needless_range_loop)]
    fn grad_jac(&self, y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.rows.len();
        let m = d - 1;
        let mut x = vec![0.0; d];
        let mut mu = vec![0.0; d];
        x[..m].copy_from_slice(&y[..m]);
        mu[..m].copy_from_slice(&y[m..]);
        let mut pvec = vec![0.0; d];
        let mut dp = vec![0.0; d];
        for k in 0..d {
            let (start, ref row) = self.rows[k];
            let c: f64 = row.iter().zip(&x[start..k]).map(|(a, b)| a * b).sum();
            let lt = self.lower[k] - mu[k] - c;
            let ut = self.upper[k] - mu[k] - c;
            let w = ln_interval(lt, ut);
            let pl = if lt.is_finite() { (-0.5 * lt * lt - w).exp() * normal::INV_SQRT_2PI } else { 0.0 };
            let pu = if ut.is_finite() { (-0.5 * ut * ut - w).exp() * normal::INV_SQRT_2PI } else { 0.0 };
            let p = pl - pu;
            pvec[k] = p;
            let lt0 = if lt.is_finite() { lt } else { 0.0 };
            let ut0 = if ut.is_finite() { ut } else { 0.0 };
            dp[k] = -p * p + lt0 * pl - ut0 * pu;
        }
        let mut grad = vec![0.0; 2 * m];
        for j in 0..m {
            // dψ/dx_j = −μ_j + Σ_k P_k L_kj
            let mut s = -mu[j];
            for k in (j + 1)..d {
                s += pvec[k] * self.l_entry(k, j);
            }
            grad[j] = s;
            grad[m + j] = mu[j] - x[j] + pvec[j];
        }
        // DL = diag(dP)·L; xx = LᵀDL; mx = −I + DL.
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let mut xx = 0.0;
                for k in (i.max(j) + 1)..d {
                    let lki = self.l_entry(k, i);
                    if lki != 0.0 {
                        xx += lki * dp[k] * self.l_entry(k, j);
                    }
                }
                jac[(i, j)] = xx;
                let mx_ij = dp[i] * self.l_entry(i, j) - if i == j { 1.0 } else { 0.0 };
                jac[(m + i, j)] = mx_ij;
                jac[(j, m + i)] = mx_ij;
            }
            jac[(m + i, m + i)] = 1.0 + dp[i];
        }
        (grad, jac)
    }

    /// Newton iterations for the saddle point; None when they fail to converge
    /// (the estimator then falls back to the untilted recursion).
    fn tilting(&self) -> Option<Vec<f64>> {
        let d = self.rows.len();
        let m = d - 1;
        let mut y = vec![0.0; 2 * m];
        for _ in 0..100 {
            let (grad, jac) = self.grad_jac(&y);
            let err: f64 = grad.iter().map(|g| g * g).sum();
            if !err.is_finite() {
                return None;
            }
            if err < 1e-20 {
                break;
            }
            let rhs = nalgebra::DVector::from_iterator(2 * m, grad.iter().map(|g| -g));
            let step = jac.lu().solve(&rhs)?;
            for (yi, si) in y.iter_mut().zip(step.iter()) {
                *yi += si;
            }
            if err < 1e-10 {
                // One more Newton step has been taken past the tolerance.
                let (g2, _) = self.grad_jac(&y);
                if g2.iter().map(|g| g * g).sum::<f64>() < 1e-10 {
                    break;
                }
            }
        }
        let (grad, _) = self.grad_jac(&y);
        if grad.iter().map(|g| g * g).sum::<f64>() > 1e-8 || y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut mu = vec![0.0; d];
        mu[..m].copy_from_slice(&y[m..]);
        Some(mu)
    }

    /// Importance weight at a point of [0,1]^{d−1}.
    fn integrand(&self, u: &[f64], z: &mut [f64]) -> f64 {
        let d = self.rows.len();
        let mut lw = 0.0;
        for k in 0..d {
            let (start, ref row) = self.rows[k];
            let c: f64 = row.iter().zip(&z[start..k]).map(|(a, b)| a * b).sum();
            let mu = self.mu[k];
            let lt = self.lower[k] - mu - c;
            let ut = self.upper[k] - mu - c;
            let w = ln_interval(lt, ut);
            if w == f64::NEG_INFINITY {
                return 0.0;
            }
            lw += w;
            if k + 1 == d {
                break;
            }
            let t = truncated_quantile(lt, ut, u[k]);
            z[k] = mu + t;
            lw += 0.5 * mu * mu - mu * z[k];
        }
        lw.exp()
    }
}

const PRIMES: [u32; 64] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311,
];

/// Richtmyer generator: fractional parts of √p for the first primes, extended
/// past the table with √ of further primes found by trial division.
fn richtmyer(dim: usize) -> Vec<f64> {
    let mut primes: Vec<u64> = PRIMES.iter().map(|&p| p as u64).collect();
    let mut c = *primes.last().unwrap() + 2;
    while primes.len() < dim {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 2;
    }
    primes.iter().take(dim).map(|&p| (p as f64).sqrt().fract()).collect()
}

/// Per-replicate means of the SOV integrand. Each replicate uses the same
/// lattice with its own uniform shift drawn from stream `(seed, b)`, so two
/// calls with the same seed share shifts (useful for ratios).
fn sov_batches(problem: &SovProblem, n_samples: u64, seed: u64) -> Vec<f64> {
    let d = problem.rows.len();
    let m = (n_samples as usize).div_ceil(SOV_BATCHES).max(1);
    let gen = richtmyer(d.saturating_sub(1).max(1));
    (0..SOV_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, b as u64);
            let shift: Vec<f64> = (0..gen.len()).map(|_| rng.random::<f64>()).collect();
            let mut u = vec![0.0; gen.len()];
            let mut z = vec![0.0; d];
            let mut acc = 0.0;
            for k in 1..=m {
                for (t, ut) in u.iter_mut().enumerate() {
                    let x = (k as f64 * gen[t] + shift[t]).fract();
                    // Baker's (tent) transform.
                    *ut = 1.0 - (2.0 * x - 1.0).abs();
                }
                acc += problem.integrand(&u, &mut z);
            }
            acc / m as f64
        })
        .collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let b = v.len() as f64;
    let mean = v.iter().sum::<f64>() / b;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

fn exact_cases(sigma: &DMatrix<f64>, rect: &Rectangle) -> Option<ProbEstimate> {
    if rect.is_full_space() {
        return Some(ProbEstimate::exact(1.0, Method::ClosedForm));
    }
    if rect.dim() == 1 {
        let s = sigma[(0, 0)].sqrt();
        return Some(ProbEstimate::exact(normal::interval(rect.lower[0] / s, rect.upper[0] / s), Method::ClosedForm));
    }
    None
}

pub(crate) fn check_samples(n_samples: u64) -> Result<()> {
    if n_samples < MIN_SOV_SAMPLES {
        return Err(invalid(format!("n_samples must be >= {MIN_SOV_SAMPLES}, got {n_samples}")));
    }
    Ok(())
}

/// P(lower ≤ X ≤ upper) for X ~ N(0, Σ) by randomized-lattice separation of variables.
pub fn rect_prob_sov(sigma: &DMatrix<f64>, rect: &Rectangle, n_samples: u64, seed: u64) -> Result<ProbEstimate> {
    check_samples(n_samples)?;
    if sigma.nrows() != rect.dim() || sigma.ncols() != rect.dim() {
        return Err(Error::DimensionMismatch { expected: rect.dim(), got: sigma.nrows() });
    }
    crate::linalg::cholesky(sigma)?;
    if let Some(e) = exact_cases(sigma, rect) {
        return Ok(e);
    }
    let problem = SovProblem::new(sigma, rect)?;
    let batches = sov_batches(&problem, n_samples, seed);
    let (value, se) = mean_se(&batches);
    Ok(ProbEstimate {
        value: value.clamp(0.0, 1.0),
        // A constant integrand (e.g. independent coordinates) has zero
        // replicate spread; report rounding-level uncertainty instead of 0.
        std_error: se.max(f64::EPSILON * value),
        method: Method::SovMc,
        n_samples: (n_samples as usize).div_ceil(SOV_BATCHES) as u64 * SOV_BATCHES as u64,
    })
}

/// Ratio P(num)/P(den) with both estimated on shared lattice shifts, and its
/// delta-method standard error from the replicate pairs.
pub fn rect_ratio_sov(
    sigma: &DMatrix<f64>,
    num: &Rectangle,
    den: &Rectangle,
    n_samples: u64,
    seed: u64,
) -> Result<RatioEstimate> {
    check_samples(n_samples)?;
    crate::linalg::cholesky(sigma)?;
    let pn = SovProblem::new(sigma, num)?;
    let pd = SovProblem::new(sigma, den)?;
    let nb = sov_batches(&pn, n_samples, seed);
    let db = sov_batches(&pd, n_samples, seed);
    ratio_from_batches(&nb, &db, n_samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: ProbEstimate,
    pub numerator: ProbEstimate,
    pub denominator: ProbEstimate,
}

pub(crate) fn ratio_from_batches(nb: &[f64], db: &[f64], n_samples: u64) -> Result<RatioEstimate> {
    let (nm, nse) = mean_se(nb);
    let (dm, dse) = mean_se(db);
    let dse = dse.max(f64::EPSILON * dm);
    let nse = nse.max(f64::EPSILON * nm);
    if dm < 10.0 * dse || dm <= 0.0 {
        return Err(Error::UnreliableRatio { value: dm, std_error: dse });
    }
    let r = nm / dm;
    let resid: Vec<f64> = nb.iter().zip(db).map(|(n, d)| n - r * d).collect();
    let (_, rse) = mean_se(&resid);
    let used = (n_samples as usize).div_ceil(SOV_BATCHES) as u64 * SOV_BATCHES as u64;
    let est = |value: f64, std_error: f64| ProbEstimate { value, std_error, method: Method::SovMc, n_samples: used };
    Ok(RatioEstimate {
        ratio: est(r, (rse / dm).max(f64::EPSILON * r)),
        numerator: est(nm, nse),
        denominator: est(dm, dse),
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0,1), got {rho}")));
    }
    Ok(())
}

fn cs_quadrature<F: Fn(f64) -> f64>(d: usize, f: F) -> Result<ProbEstimate> {
    let w_max = 8.0 + (2.0 * (d as f64).ln()).sqrt();
    let r = quad::integrate(f, -w_max, w_max, 1e-13, 0.0, 4000);
    if r.abs_error > 1e-10 {
        return Err(Error::Quadrature { value: r.value, achieved: r.abs_error });
    }
    Ok(ProbEstimate {
        value: r.value.clamp(0.0, 1.0),
        std_error: 0.0,
        method: Method::CsQuadrature,
        n_samples: r.evaluations as u64,
    })
}

/// P(X ≥ a·1) for X ~ N(0, Σ_d(ρ)).
pub fn cs_orthant_prob(d: usize, rho: f64, a: f64) -> Result<ProbEstimate> {
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    check_rho(rho)?;
    if a.is_nan() {
        return Err(invalid("threshold is NaN"));
    }
    if d == 1 {
        return Ok(ProbEstimate::exact(normal::sf(a), Method::ClosedForm));
    }
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let df = d as f64;
    cs_quadrature(d, move |w| (normal::ln_pdf(w) + df * normal::ln_cdf((sr * w - a) / sc)).exp())
}

/// P(0 ≤ X_1 ≤ δ, X_2 ≥ 0, …, X_d ≥ 0) for X ~ N(0, Σ_d(ρ)).
pub fn cs_strip_prob(d: usize, rho: f64, delta: f64) -> Result<ProbEstimate> {
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    check_rho(rho)?;
    if delta.is_nan() || delta < 0.0 {
        return Err(invalid(format!("strip width must be nonnegative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(ProbEstimate::exact(0.0, Method::ClosedForm));
    }
    if delta == f64::INFINITY {
        return cs_orthant_prob(d, rho, 0.0);
    }
    if d == 1 {
        return Ok(ProbEstimate::exact(normal::interval(0.0, delta), Method::ClosedForm));
    }
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let rest = (d - 1) as f64;
    cs_quadrature(d, move |w| {
        let strip = normal::interval(-sr * w / sc, (delta - sr * w) / sc);
        if strip <= 0.0 {
            return 0.0;
        }
        (normal::ln_pdf(w) + rest * normal::ln_cdf(sr * w / sc)).exp() * strip
    })
}

/// Mill's-ratio bracket x/(x²+1)·φ(x) ≤ 1 − Φ(x) ≤ φ(x)/x.
pub fn mills_bounds(x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(invalid(format!("Mill's ratio bounds need x > 0, got {x}")));
    }
    let p = normal::pdf(x);
    Ok((x / (x * x + 1.0) * p, p / x))
}

/// Default constant in the lower bound C₁√(2 log N) of E[max_i Z_i].
pub const DEFAULT_MAX_GAUSSIAN_C1: f64 = 0.23;

/// (C₁√(2 log N), √(2 log N)) bracketing E[max_{i≤N} Z_i] for iid standard normals.
pub fn max_gaussian_bounds(n: usize, c1: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid(format!("need N >= 2, got {n}")));
    }
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(invalid(format!("C1 must lie in (0,1), got {c1}")));
    }
    let u = (2.0 * (n as f64).ln()).sqrt();
    Ok((c1 * u, u))
}
