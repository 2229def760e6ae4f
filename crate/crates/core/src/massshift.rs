//! Analytic side of the mass-shifting theorem: the admissible correlation
//! region Q, compound-symmetry bounds, the full bound chain
//! α ≤ R ≤ R′ ≤ (closed form), and Monte Carlo checks of the Slepian-type
//! comparison inequalities.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussprob::{self, ProbEstimate, Rectangle};
use crate::linalg;
use crate::matrices::{band_stats, CorrelationBand};
use crate::normal;
use crate::rng::derive_seed;
use crate::tmvn;

/// (u, v) ∈ Q ⇔ u ≤ v and u/(2(1−u)) ≥ v, for u, v in (0,1).
pub fn in_region_q(rho_min: f64, rho_max: f64) -> bool {
    let open = |x: f64| x > 0.0 && x < 1.0;
    open(rho_min) && open(rho_max) && rho_min <= rho_max && rho_min / (2.0 * (1.0 - rho_min)) >= rho_max
}

fn rho_bar(rho: f64) -> f64 {
    (1.0 - rho) / rho
}

fn check_unit_open(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("{name} must lie in (0,1), got {x}")));
    }
    Ok(())
}

/// Upper bound on P(0 ≤ X₁ < δ, X_{2:d} ≥ 0) for X ~ N(0, Σ_d(ρ)):
/// δ{2(1−α)ρ̄ log(d−1)}^{−1/2}(d−1)^{−(1−α)/ρ} + exp(−d^α). Infinite at d = 2.
pub fn lemma2_upper(d: usize, rho: f64, delta: f64, alpha: f64) -> Result<f64> {
    if d < 2 {
        return Err(invalid(format!("need d >= 2, got {d}")));
    }
    check_unit_open("rho", rho)?;
    check_unit_open("alpha", alpha)?;
    if !(delta >= 0.0) {
        return Err(invalid(format!("delta must be nonnegative, got {delta}")));
    }
    if d == 2 {
        return Ok(f64::INFINITY);
    }
    let dm1 = (d - 1) as f64;
    let rb = rho_bar(rho);
    let first = if delta == 0.0 {
        0.0
    } else {
        delta * (2.0 * (1.0 - alpha) * rb * dm1.ln()).powf(-0.5) * dm1.powf(-(1.0 - alpha) / rho)
    };
    Ok(first + (-(d as f64).powf(alpha)).exp())
}

/// Lower bound on P(X ≥ a·1) for X ~ N(0, Σ_d(ρ)): x/(x²+1)·φ(x) with
/// x = aρ^{−1/2} + (2ρ̄ log d)^{1/2}, i.e. the Mill's-ratio lower bound at x.
pub fn lemma2_lower(d: usize, rho: f64, a: f64) -> Result<f64> {
    if d < 2 {
        return Err(invalid(format!("need d >= 2, got {d}")));
    }
    check_unit_open("rho", rho)?;
    if !(a >= 0.0) {
        return Err(invalid(format!("threshold must be nonnegative, got {a}")));
    }
    let x = a / rho.sqrt() + (2.0 * rho_bar(rho) * (d as f64).ln()).sqrt();
    Ok(x / (x * x + 1.0) * normal::pdf(x))
}

/// Midpoint of the α-interval on which (1−α)/ρ_max − 2ρ̄_min > 0; 0.5 when
/// the interval is empty.
pub fn default_lemma_alpha(rho_min: f64, rho_max: f64) -> f64 {
    let hi = (1.0 - 2.0 * rho_bar(rho_min) * rho_max).min(1.0);
    if hi > 0.0 {
        0.5 * hi
    } else {
        0.5
    }
}

/// Exponent G = (1−α)/ρ_max − 2ρ̄_min of the polynomial decay in K.
pub fn decay_exponent(rho_min: f64, rho_max: f64, alpha: f64) -> f64 {
    (1.0 - alpha) / rho_max - 2.0 * rho_bar(rho_min)
}

/// The two summands of the final closed-form bound on R′.
pub fn final_bound_terms(k: usize, rho_min: f64, rho_max: f64, delta: f64, alpha: f64) -> (f64, f64) {
    let kf = k as f64;
    let (rb_min, rb_max) = (rho_bar(rho_min), rho_bar(rho_max));
    let c = 5.0 * rb_min / ((1.0 - alpha) * rb_max).sqrt();
    let t1 = c * delta * kf.ln().sqrt() * kf.powf(-decay_exponent(rho_min, rho_max, alpha));
    let t2 = 4.0 * rb_min * (-(kf - 1.0).powf(alpha)).exp() * kf.powf(2.0 * rb_min) * kf.ln();
    (t1, t2)
}

/// Smallest K (searched on a logarithmic grid up to e^700) beyond which the
/// second summand of the final bound stays below the first.
pub fn analytic_k0(rho_min: f64, rho_max: f64, delta: f64, alpha: f64) -> Option<f64> {
    let g = decay_exponent(rho_min, rho_max, alpha);
    if !(g > 0.0) {
        return None;
    }
    let (rb_min, rb_max) = (rho_bar(rho_min), rho_bar(rho_max));
    let ln_c = (5.0 * rb_min / ((1.0 - alpha) * rb_max).sqrt()).ln();
    // Work in t = ln K to reach astronomically large K.
    let diff = |t: f64| {
        let ln_t1 = ln_c + delta.ln() + 0.5 * t.ln() - g * t;
        let km1 = (t.exp() - 1.0).max(1.0);
        let ln_t2 = (4.0 * rb_min).ln() - (alpha * km1.ln()).exp() + 2.0 * rb_min * t + t.ln();
        ln_t2 - ln_t1
    };
    let grid: Vec<f64> = (0..=7000).map(|i| (3f64).ln() + i as f64 * 0.1).collect();
    let last_bad = grid.iter().rposition(|&t| diff(t) >= 0.0);
    match last_bad {
        None => Some(3.0),
        Some(i) if i + 1 < grid.len() => {
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if diff(mid) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(hi.exp().ceil())
        }
        _ => None,
    }
}

/// Compound-symmetry bound R′ at block size K.
pub fn cs_ratio_bound(k: usize, rho_min: f64, rho_max: f64, delta: f64) -> Result<f64> {
    let strip = gaussprob::cs_strip_prob(k, rho_max, delta)?;
    let orth = gaussprob::cs_orthant_prob(k, rho_min, 0.0)?;
    Ok(strip.value / (orth.value * orth.value))
}

/// Scans K′ = k_max, k_max−1, …, 2 and returns the smallest K′ such that the
/// closed-form bound dominates R′ on all of [K′, k_max].
pub fn observed_k0(k_max: usize, rho_min: f64, rho_max: f64, delta: f64, alpha: f64) -> Result<Option<usize>> {
    let mut best = None;
    for k in (2..=k_max).rev() {
        let (t1, t2) = final_bound_terms(k, rho_min, rho_max, delta, alpha);
        if cs_ratio_bound(k, rho_min, rho_max, delta)? <= t1 + t2 {
            best = Some(k);
        } else {
            break;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChainReport {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    #[serde(rename = "in_Q")]
    pub in_q: bool,
    pub alpha_used: f64,
    pub alpha_hat: ProbEstimate,
    /// Block ratio bound, with its Monte Carlo standard error.
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "R_std_error")]
    pub r_std_error: f64,
    /// Compound-symmetry bound (deterministic quadrature).
    #[serde(rename = "R_prime")]
    pub r_prime: f64,
    pub final_term1: f64,
    pub final_term2: f64,
    /// K beyond which final_term2 < final_term1 (None if no such K).
    pub k0_analytic: Option<f64>,
    /// Smallest K′ ≤ K from which R′ ≤ final_term1 + final_term2 holds at every
    /// K″ in [K′, K], evaluated at this report's (ρ_min, ρ_max, δ, α).
    pub k0_observed: Option<usize>,
    /// α̂ ≤ R and R ≤ R′, each allowing 4 combined standard errors.
    pub chain_ordered: bool,
    /// R′ ≤ final_term1 + final_term2; None when the pair is outside Q.
    pub final_bound_holds: Option<bool>,
}

/// Evaluates every link of the bound chain for a banded correlation matrix.
pub fn theorem1_chain(
    sigma: &CorrelationBand<f64>,
    delta: f64,
    alpha: Option<f64>,
    n_samples: u64,
    seed: u64,
) -> Result<BoundChainReport> {
    let (n, k) = (sigma.n(), sigma.k());
    if n < 2 * k + 1 {
        return Err(invalid(format!("bound chain needs N >= 2K+1, got N={n}, K={k}")));
    }
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let stats = band_stats(sigma)?;
    let in_q = in_region_q(stats.rho_min, stats.rho_max);
    let alpha_used = match alpha {
        Some(a) => {
            check_unit_open("alpha", a)?;
            a
        }
        None => default_lemma_alpha(stats.rho_min, stats.rho_max),
    };
    let m = sigma.matrix();
    let alpha_hat = tmvn::alpha_mass(m, delta, n_samples, derive_seed(seed, 1))?;

    let block = |lo: usize| m.view((lo, lo), (k, k)).into_owned();
    let num = gaussprob::rect_prob_sov(&block(0), &Rectangle::strip(k, 0.0, delta), n_samples, derive_seed(seed, 2))?;
    let d1 = gaussprob::rect_prob_sov(&block(0), &Rectangle::orthant(k, 0.0), n_samples, derive_seed(seed, 3))?;
    let d2 = gaussprob::rect_prob_sov(&block(k), &Rectangle::orthant(k, 0.0), n_samples, derive_seed(seed, 4))?;
    let r = num.value / (d1.value * d2.value);
    let r_rel = ((num.std_error / num.value).powi(2)
        + (d1.std_error / d1.value).powi(2)
        + (d2.std_error / d2.value).powi(2))
    .sqrt();
    let r_std_error = r * r_rel;

    let r_prime = cs_ratio_bound(k, stats.rho_min, stats.rho_max, delta)?;

    let (final_term1, final_term2) = final_bound_terms(k, stats.rho_min, stats.rho_max, delta, alpha_used);
    let chain_ordered = alpha_hat.value <= r + 4.0 * (alpha_hat.std_error.powi(2) + r_std_error.powi(2)).sqrt()
        && r <= r_prime + 4.0 * r_std_error;
    Ok(BoundChainReport {
        n,
        k,
        delta,
        rho_min: stats.rho_min,
        rho_max: stats.rho_max,
        in_q,
        alpha_used,
        alpha_hat,
        r,
        r_std_error,
        r_prime,
        final_term1,
        final_term2,
        k0_analytic: analytic_k0(stats.rho_min, stats.rho_max, delta, alpha_used),
        k0_observed: if in_q { observed_k0(k, stats.rho_min, stats.rho_max, delta, alpha_used)? } else { None },
        chain_ordered,
        final_bound_holds: in_q.then_some(r_prime <= final_term1 + final_term2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlepianReport {
    /// Probability of the event under the less correlated law X.
    pub p_x: ProbEstimate,
    /// Probability of the event under the more correlated law Y.
    pub p_y: ProbEstimate,
    /// (p_y − p_x) in combined standard errors; the inequality predicts ≥ 0.
    pub margin_se: f64,
    /// False when p_x exceeds p_y by more than 4 combined standard errors.
    pub holds: bool,
}

pub const SLEPIAN_MAX_DIM: usize = 10;

/// Compares P(ℓ₁ ≤ X₁ ≤ u₁, X_i ≥ t_i) under Σ_x and Σ_y, where Σ_x ≤ Σ_y off the
/// diagonal and the diagonals agree. `thresholds` holds t_2, …, t_d.
pub fn slepian_check(
    sigma_x: &DMatrix<f64>,
    sigma_y: &DMatrix<f64>,
    lower1: f64,
    upper1: f64,
    thresholds: &[f64],
    n_mc: u64,
    seed: u64,
) -> Result<SlepianReport> {
    linalg::require_square(sigma_x, "sigma_x")?;
    linalg::require_square(sigma_y, "sigma_y")?;
    let d = sigma_x.nrows();
    if sigma_y.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma_y.nrows() });
    }
    if thresholds.len() + 1 != d {
        return Err(Error::DimensionMismatch { expected: d - 1, got: thresholds.len() });
    }
    if !(2..=SLEPIAN_MAX_DIM).contains(&d) {
        return Err(invalid(format!("dimension must lie in [2, {SLEPIAN_MAX_DIM}], got {d}")));
    }
    if !(lower1 >= 0.0 && lower1 < upper1) {
        return Err(invalid(format!("need 0 <= lower1 < upper1, got [{lower1}, {upper1}]")));
    }
    for i in 0..d {
        if (sigma_x[(i, i)] - sigma_y[(i, i)]).abs() > 1e-12 * sigma_x[(i, i)].abs().max(1.0) {
            return Err(invalid(format!("hypothesis violated: variances differ at coordinate {i}")));
        }
        for j in 0..d {
            if i != j && sigma_x[(i, j)] > sigma_y[(i, j)] + 1e-12 {
                return Err(invalid(format!("hypothesis violated: Σx[{i},{j}] > Σy[{i},{j}]")));
            }
        }
    }
    let mut lower = vec![lower1];
    lower.extend_from_slice(thresholds);
    let mut upper = vec![f64::INFINITY; d];
    upper[0] = upper1;
    let rect = Rectangle::new(lower, upper)?;
    let p_x = gaussprob::rect_prob_sov(sigma_x, &rect, n_mc, derive_seed(seed, 0))?;
    let p_y = gaussprob::rect_prob_sov(sigma_y, &rect, n_mc, derive_seed(seed, 1))?;
    let se = (p_x.std_error.powi(2) + p_y.std_error.powi(2)).sqrt();
    let diff = p_y.value - p_x.value;
    let margin_se = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
    Ok(SlepianReport { p_x, p_y, margin_se, holds: margin_se >= -4.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::compound_symmetry;

    #[test]
    fn region_q_examples() {
        assert!(in_region_q(0.6, 0.6));
        assert!(!in_region_q(0.4, 0.4));
        assert!(in_region_q(0.8, 0.9));
        assert!(!in_region_q(0.9, 0.8));
        assert!(!in_region_q(0.0, 0.5));
    }

    #[test]
    fn lemma2_closed_forms() {
        let v = lemma2_lower(4, 0.5, 0.0).unwrap();
        let l = 2.0 * 4f64.ln();
        assert!((v - l.sqrt() / (l + 1.0) * 0.25 * normal::INV_SQRT_2PI).abs() < 1e-15);
        assert!(lemma2_lower(4, 1.0 - 1e-15, 0.0).unwrap().is_finite());
        assert_eq!(lemma2_upper(2, 0.7, 0.1, 0.5).unwrap(), f64::INFINITY);
        let tiny = lemma2_upper(16, 0.7, 1e-300, 0.5).unwrap();
        assert!((tiny - (-(16f64).sqrt()).exp()).abs() < 1e-15);
    }

    #[test]
    fn default_alpha_is_feasible() {
        let a = default_lemma_alpha(0.6, 0.6);
        assert!((a - 0.1).abs() < 1e-12);
        assert!(decay_exponent(0.6, 0.6, a) > 0.0);
    }

    #[test]
    fn slepian_equal_and_hypotheses() {
        let s = compound_symmetry(3, 0.4).unwrap().matrix();
        let r = slepian_check(&s, &s, 0.0, 0.5, &[0.0, 0.0], 4000, 2).unwrap();
        assert!(r.margin_se.abs() <= 4.0);
        let t = compound_symmetry(3, 0.2).unwrap().matrix();
        assert!(slepian_check(&s, &t, 0.0, 0.5, &[0.0, 0.0], 4000, 2).is_err());
        assert!(slepian_check(&t, &s, -0.1, 0.5, &[0.0, 0.0], 4000, 2).is_err());
    }
}
