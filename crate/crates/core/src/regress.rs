//! Bayesian monotone regression on the integrated-hat basis.
//!
//! Model: y = ξ₀ 1 + τ Ψ Λ θ + ε, ε ~ N(0, σ² I), with θ ~ N_C(0, K(ν, ℓ)),
//! half-Cauchy τ and λ_j (normal–gamma augmented), π(σ²) ∝ 1/σ², flat ξ₀ and
//! uniform (ν, ℓ). Four nested variants switch parts of the hierarchy on.
//! Every update except the (ν, ℓ) Metropolis move is an exact draw from a
//! univariate full conditional.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{self, BasisGrid, MaternParams, ELL_SUPPORT, NU_SUPPORT};
use crate::error::{invalid, Error, Result};
use crate::gaussprob::{self, Rectangle};
use crate::io::{csv_string, write_atomic};
use crate::linalg;
use crate::matrices;
use crate::rng::{derive_seed, rng_for, Rng};
use crate::tmvn::{lag1, sample_univ_truncnorm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl RegressionData {
    pub const MIN_LEN: usize = 10;

    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        if xs.len() < Self::MIN_LEN {
            return Err(invalid(format!("need at least {} observations, got {}", Self::MIN_LEN, xs.len())));
        }
        if let Some(x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(invalid(format!("covariates must lie in [0,1], got {x}")));
        }
        if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
            return Err(invalid(format!("responses must be finite, got {y}")));
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Random partition into `n_train` and the remaining observations.
    pub fn split(&self, n_train: usize, seed: u64) -> Result<(Self, Self)> {
        let n = self.len();
        if n_train < Self::MIN_LEN || n - n_train.min(n) < Self::MIN_LEN {
            return Err(invalid(format!("cannot split {n} observations into {n_train} and {}", n.saturating_sub(n_train))));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_for(seed, 0x5B));
        let take = |ix: &[usize]| Self {
            xs: ix.iter().map(|&i| self.xs[i]).collect(),
            ys: ix.iter().map(|&i| self.ys[i]).collect(),
        };
        Ok((take(&idx[..n_train]), take(&idx[n_train..])))
    }

    /// Two-column (x, y) CSV; a non-numeric first row is treated as a header.
    pub fn from_csv_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("row {}: expected 2 columns, got {}", line + 1, rec.len())));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if line == 0 => continue,
                _ => return Err(Error::Parse(format!("row {}: non-numeric value", line + 1))),
            }
        }
        Self::new(xs, ys)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        csv_string(&["x", "y"], self.xs.iter().zip(&self.ys).map(|(x, y)| vec![*x, *y]))
    }
}

/// The two simulation truths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    F1,
    F2,
}

impl Truth {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Truth::F1 => f1(x),
            Truth::F2 => f2(x),
        }
    }
}

impl FromStr for Truth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Truth::F1),
            "f2" => Ok(Truth::F2),
            _ => Err(invalid(format!("unknown truth '{s}' (expected f1 or f2)"))),
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::F1 => "f1",
            Truth::F2 => "f2",
        })
    }
}

/// (5x − 3)³ on [0.6, 1], zero before.
pub fn f1(x: f64) -> f64 {
    if x >= 0.6 {
        (5.0 * x - 3.0).powi(3)
    } else {
        0.0
    }
}

/// √2 Σ_{l=1}^{100} l^{−1.7} sin(l) cos(π(l − 0.5)(1 − x)).
pub fn f2(x: f64) -> f64 {
    let s: f64 = (1..=100)
        .map(|l| {
            let l = l as f64;
            l.powf(-1.7) * l.sin() * (std::f64::consts::PI * (l - 0.5) * (1.0 - x)).cos()
        })
        .sum();
    std::f64::consts::SQRT_2 * s
}

/// Uniform covariates with f(x) + N(0, σ²) responses.
pub fn simulate_truth(truth: Truth, n: usize, sigma: f64, seed: u64) -> Result<RegressionData> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise sd must be finite and nonnegative, got {sigma}")));
    }
    if n < RegressionData::MIN_LEN {
        return Err(invalid(format!("need n >= {}, got {n}", RegressionData::MIN_LEN)));
    }
    let mut rng = rng_for(seed, 0x51);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ys = xs
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            truth.eval(x) + sigma * e
        })
        .collect();
    RegressionData::new(xs, ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    TnFixed,
    TnHyper,
    Global,
    GlobalLocal,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::TnFixed, Variant::TnHyper, Variant::Global, Variant::GlobalLocal];

    pub fn updates_hyper(self) -> bool {
        self != Variant::TnFixed
    }

    pub fn updates_tau(self) -> bool {
        matches!(self, Variant::Global | Variant::GlobalLocal)
    }

    pub fn updates_lambda(self) -> bool {
        self == Variant::GlobalLocal
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tn_fixed" => Ok(Variant::TnFixed),
            "tn_hyper" => Ok(Variant::TnHyper),
            "global" => Ok(Variant::Global),
            "global_local" => Ok(Variant::GlobalLocal),
            _ => Err(invalid(format!("unknown variant '{s}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::TnFixed => "tn_fixed",
            Variant::TnHyper => "tn_hyper",
            Variant::Global => "global",
            Variant::GlobalLocal => "global_local",
        })
    }
}

pub const DEFAULT_DRAWS: usize = 5000;
pub const DEFAULT_BURN_IN: usize = 2000;
pub const DEFAULT_THIN: usize = 2;
/// Proposal sds for (ν, ℓ) as a fraction of the prior support widths.
pub const DEFAULT_HYPER_STEP_FRACTION: f64 = 0.05;
pub const DEFAULT_NORMALIZER_SAMPLES: u64 = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_knots: usize,
    pub variant: Variant,
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Random-walk sds for (ν, ℓ).
    pub hyper_step: [f64; 2],
    /// Kernel parameters of tn_fixed, and the starting point otherwise.
    pub matern: MaternParams<f64>,
    /// Include −log P(N(0, K) ∈ C) in the (ν, ℓ) target, tabulated on a grid.
    pub include_normalizer: bool,
    pub normalizer_samples: u64,
    /// Sigmoid sharpness of the embedding approximation to the orthant
    /// indicator. Never read: the θ and λ updates here are exact.
    pub eta: Option<f64>,
}

impl FitConfig {
    pub fn new(n_knots: usize, variant: Variant, seed: u64) -> Self {
        Self {
            n_knots,
            variant,
            n_draws: DEFAULT_DRAWS,
            burn_in: DEFAULT_BURN_IN,
            thin: DEFAULT_THIN,
            seed,
            hyper_step: [
                DEFAULT_HYPER_STEP_FRACTION * (NU_SUPPORT.1 - NU_SUPPORT.0),
                DEFAULT_HYPER_STEP_FRACTION * (ELL_SUPPORT.1 - ELL_SUPPORT.0),
            ],
            matern: MaternParams::fixed_default(),
            include_normalizer: true,
            normalizer_samples: DEFAULT_NORMALIZER_SAMPLES,
            eta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_knots < 2 {
            return Err(invalid(format!("need at least 2 knots, got {}", self.n_knots)));
        }
        if self.n_draws == 0 || self.thin == 0 {
            return Err(invalid("n_draws and thin must be positive"));
        }
        if !self.hyper_step.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(invalid("proposal sds must be finite and nonnegative"));
        }
        MaternParams::new(self.matern.nu, self.matern.ell)?;
        if self.include_normalizer && self.variant.updates_hyper() {
            gaussprob::check_samples(self.normalizer_samples)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    pub xi0: f64,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Augmentation precisions for λ.
    pub w: Vec<f64>,
    pub tau: f64,
    /// Augmentation precision for τ.
    pub u: f64,
    pub sigma2: f64,
    pub nu: f64,
    pub ell: f64,
}

impl ShrinkageState {
    /// ξ_j = τ λ_j θ_j.
    pub fn effective_coefficients(&self) -> Vec<f64> {
        self.theta.iter().zip(&self.lambda).map(|(t, l)| self.tau * l * t).collect()
    }

    pub fn is_valid(&self) -> bool {
        let n = self.theta.len();
        self.lambda.len() == n
            && self.w.len() == n
            && self.xi0.is_finite()
            && self.theta.iter().all(|t| t.is_finite() && *t >= 0.0)
            && self.lambda.iter().all(|l| l.is_finite() && *l >= 0.0)
            && self.w.iter().all(|w| w.is_finite() && *w > 0.0)
            && self.tau.is_finite()
            && self.tau > 0.0
            && self.u.is_finite()
            && self.u > 0.0
            && self.sigma2.is_finite()
            && self.sigma2 > 0.0
            && (NU_SUPPORT.0..=NU_SUPPORT.1).contains(&self.nu)
            && (ELL_SUPPORT.0..=ELL_SUPPORT.1).contains(&self.ell)
    }
}

/// log P(N(0, K(ν, ℓ)) ≥ 0) tabulated on a grid uniform in ν and in log ℓ
/// (the surface is steep at small ℓ) and interpolated bilinearly in (ν, log ℓ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOrthantSurface {
    pub nus: Vec<f64>,
    pub ells: Vec<f64>,
    /// Row-major in ν.
    pub values: Vec<f64>,
}

pub const SURFACE_NU_POINTS: usize = 6;
pub const SURFACE_ELL_POINTS: usize = 12;

impl LogOrthantSurface {
    pub fn build(grid: &BasisGrid<f64>, n_samples: u64, seed: u64) -> Result<Self> {
        let lin = |(a, b): (f64, f64), m: usize| -> Vec<f64> { (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect() };
        let nus = lin(NU_SUPPORT, SURFACE_NU_POINTS);
        let ells: Vec<f64> = lin((ELL_SUPPORT.0.ln(), ELL_SUPPORT.1.ln()), SURFACE_ELL_POINTS).into_iter().map(f64::exp).collect();
        let nodes: Vec<(usize, f64, f64)> = nus
            .iter()
            .flat_map(|&nu| ells.iter().map(move |&ell| (nu, ell)))
            .enumerate()
            .map(|(i, (nu, ell))| (i, nu, ell))
            .collect();
        let n = grid.n();
        let values = nodes
            .par_iter()
            .map(|&(i, nu, ell)| {
                let cov = basis::prior_covariance(grid, MaternParams::new(nu, ell)?)?;
                let p = gaussprob::rect_prob_sov(&cov.matrix, &Rectangle::orthant(n, 0.0), n_samples, derive_seed(seed, i as u64))?;
                Ok(p.value.ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { nus, ells, values })
    }

    pub fn eval(&self, nu: f64, ell: f64) -> f64 {
        let locate = |xs: &[f64], x: f64| -> (usize, f64) {
            let m = xs.len();
            let x = x.clamp(xs[0], xs[m - 1]);
            let i = xs.partition_point(|v| *v <= x).clamp(1, m - 1) - 1;
            (i, (x - xs[i]) / (xs[i + 1] - xs[i]))
        };
        let log_ells: Vec<f64> = self.ells.iter().map(|e| e.ln()).collect();
        let (i, s) = locate(&self.nus, nu);
        let (j, t) = locate(&log_ells, ell.ln());
        let m = self.ells.len();
        let v = |a: usize, b: usize| self.values[a * m + b];
        (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1)) + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
    }
}

/// Prior quantities that change only when (ν, ℓ) moves.
#[derive(Debug, Clone)]
struct PriorCache {
    precision: DMatrix<f64>,
    log_det: f64,
    jitter: f64,
}

impl PriorCache {
    fn new(grid: &BasisGrid<f64>, p: MaternParams<f64>) -> Result<Self> {
        let cov = basis::prior_covariance(grid, p)?;
        let chol = linalg::cholesky(&cov.matrix)?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut precision = chol.inverse();
        linalg::symmetrize(&mut precision);
        Ok(Self { precision, log_det, jitter: cov.jitter })
    }
}

/// Reflects x into [lo, hi] (repeatedly, for very large steps).
fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    x = (x - lo).rem_euclid(2.0 * w);
    if x > w {
        x = 2.0 * w - x;
    }
    lo + x
}

/// One random-walk Metropolis move on (ν, ℓ) with reflection at the support
/// boundaries. Returns the new point and whether the proposal was accepted;
/// a zero step is a null move and counts as accepted.
pub fn rw_metropolis_reflect(
    current: (f64, f64),
    step: [f64; 2],
    mut log_target: impl FnMut(f64, f64) -> Option<f64>,
    current_lp: f64,
    rng: &mut Rng,
) -> ((f64, f64), bool, f64) {
    if step[0] == 0.0 && step[1] == 0.0 {
        return (current, true, current_lp);
    }
    let z0: f64 = StandardNormal.sample(rng);
    let z1: f64 = StandardNormal.sample(rng);
    let nu = reflect(current.0 + step[0] * z0, NU_SUPPORT.0, NU_SUPPORT.1);
    let ell = reflect(current.1 + step[1] * z1, ELL_SUPPORT.0, ELL_SUPPORT.1);
    match log_target(nu, ell) {
        Some(lp) if rng.random::<f64>().ln() < lp - current_lp => ((nu, ell), true, lp),
        _ => (current, false, current_lp),
    }
}

/// Single-chain Gibbs sampler. The residual r = y − ξ₀ − τΨΛθ and K⁻¹θ are
/// maintained incrementally, so a full sweep costs O(N(n + N)).
pub struct GibbsSampler {
    variant: Variant,
    hyper_step: [f64; 2],
    include_normalizer: bool,
    grid: BasisGrid<f64>,
    ys: DVector<f64>,
    psi: DMatrix<f64>,
    col_norm2: Vec<f64>,
    state: ShrinkageState,
    prior: PriorCache,
    surface: Option<LogOrthantSurface>,
    noise_fixed: bool,
    resid: DVector<f64>,
    q_theta: DVector<f64>,
    rng: Rng,
    pub hyper_proposals: usize,
    pub hyper_accepted: usize,
    pub rejected_factorizations: usize,
    pub sigma2_floor_hits: usize,
    pub log: Vec<String>,
}

pub const SIGMA2_FLOOR: f64 = 1e-12;

impl GibbsSampler {
    pub fn new(data: &RegressionData, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = BasisGrid::<f64>::new(cfg.n_knots)?;
        let psi = basis::design_monotone(data.xs(), &grid)?;
        let col_norm2 = (0..psi.ncols()).map(|j| psi.column(j).norm_squared()).collect();
        let prior = PriorCache::new(&grid, cfg.matern)?;
        let surface = if cfg.variant.updates_hyper() && cfg.include_normalizer {
            Some(LogOrthantSurface::build(&grid, cfg.normalizer_samples, derive_seed(cfg.seed, 0xA1))?)
        } else {
            None
        };
        let ys = DVector::from_column_slice(data.ys());
        let state = initial_state(data, &psi, &grid, cfg)?;
        let n_knots = cfg.n_knots;
        let mut s = Self {
            variant: cfg.variant,
            hyper_step: cfg.hyper_step,
            include_normalizer: cfg.include_normalizer,
            grid,
            ys,
            psi,
            col_norm2,
            state,
            prior,
            surface,
            noise_fixed: false,
            resid: DVector::zeros(data.len()),
            q_theta: DVector::zeros(n_knots),
            rng: rng_for(cfg.seed, 0xB0),
            hyper_proposals: 0,
            hyper_accepted: 0,
            rejected_factorizations: 0,
            sigma2_floor_hits: 0,
            log: Vec::new(),
        };
        s.refresh();
        Ok(s)
    }

    pub fn state(&self) -> &ShrinkageState {
        &self.state
    }

    pub fn prior_jitter(&self) -> f64 {
        self.prior.jitter
    }

    /// Replaces the state (e.g. to pin θ = 0 in conditional checks).
    pub fn set_state(&mut self, state: ShrinkageState) -> Result<()> {
        if state.theta.len() != self.grid.n() {
            return Err(Error::DimensionMismatch { expected: self.grid.n(), got: state.theta.len() });
        }
        if !state.is_valid() {
            return Err(invalid("state violates positivity or support constraints"));
        }
        if (state.nu, state.ell) != (self.state.nu, self.state.ell) {
            self.prior = PriorCache::new(&self.grid, MaternParams::new(state.nu, state.ell)?)?;
        }
        self.state = state;
        self.refresh();
        Ok(())
    }

    /// Pins σ² (and ξ₀ at its current value) so sweeps leave both untouched.
    /// A huge σ² switches the likelihood off, which turns the sampler into a
    /// prior simulator.
    pub fn fix_noise(&mut self, sigma2: f64) -> Result<()> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!("sigma2 must be positive and finite, got {sigma2}")));
        }
        self.state.sigma2 = sigma2;
        self.noise_fixed = true;
        Ok(())
    }

    fn refresh(&mut self) {
        let s = &self.state;
        let coef = DVector::from_vec(s.effective_coefficients());
        self.resid = self.ys.add_scalar(-s.xi0) - &self.psi * coef;
        self.q_theta = &self.prior.precision * DVector::from_column_slice(&s.theta);
    }

    /// Exact coordinate-wise update of each θ_j from its truncated normal
    /// full conditional.
    pub fn step_theta(&mut self) {
        let n = self.state.theta.len();
        let inv_s2 = 1.0 / self.state.sigma2;
        for j in 0..n {
            let scale = self.state.tau * self.state.lambda[j];
            let old = self.state.theta[j];
            let qjj = self.prior.precision[(j, j)];
            let psi_r = self.psi.column(j).dot(&self.resid);
            let a2 = scale * scale * self.col_norm2[j];
            let prec = qjj + a2 * inv_s2;
            let lin = scale * (psi_r + scale * old * self.col_norm2[j]) * inv_s2 - (self.q_theta[j] - qjj * old);
            let new = sample_univ_truncnorm(lin / prec, prec.sqrt().recip(), 0.0, &mut self.rng);
            let d = new - old;
            if d != 0.0 {
                self.resid.axpy(-d * scale, &self.psi.column(j), 1.0);
                self.q_theta.axpy(d, &self.prior.precision.column(j), 1.0);
                self.state.theta[j] = new;
            }
        }
    }

    /// Random-scan update of (λ_j, w_j): λ_j | rest is truncated normal,
    /// then w_j | λ_j ~ Exp(rate (λ_j² + 1)/2).
    pub fn step_lambda(&mut self) {
        let n = self.state.lambda.len();
        let inv_s2 = 1.0 / self.state.sigma2;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        for j in order {
            let c = self.state.tau * self.state.theta[j];
            let old = self.state.lambda[j];
            let psi_r = self.psi.column(j).dot(&self.resid);
            let prec = self.state.w[j] + c * c * self.col_norm2[j] * inv_s2;
            let lin = c * (psi_r + c * old * self.col_norm2[j]) * inv_s2;
            let new = sample_univ_truncnorm(lin / prec, prec.sqrt().recip(), 0.0, &mut self.rng);
            let d = new - old;
            if d != 0.0 {
                self.resid.axpy(-d * c, &self.psi.column(j), 1.0);
                self.state.lambda[j] = new;
            }
            self.state.w[j] = draw_exp(0.5 * (new * new + 1.0), &mut self.rng);
        }
    }

    /// τ | rest is truncated normal given u; then u | τ ~ Exp(rate (τ² + 1)/2).
    pub fn step_tau(&mut self) {
        let s = &self.state;
        let lt: DVector<f64> = DVector::from_iterator(s.theta.len(), s.theta.iter().zip(&s.lambda).map(|(t, l)| t * l));
        let g = &self.psi * lt;
        let old = s.tau;
        let partial = &self.resid + &g * old;
        let prec = s.u + g.norm_squared() / s.sigma2;
        let lin = g.dot(&partial) / s.sigma2;
        let mut tau = sample_univ_truncnorm(lin / prec, prec.sqrt().recip(), 0.0, &mut self.rng);
        if tau <= 0.0 {
            tau = f64::MIN_POSITIVE;
        }
        self.resid = partial - g * tau;
        self.state.tau = tau;
        self.state.u = draw_exp(0.5 * (tau * tau + 1.0), &mut self.rng);
    }

    /// σ² | rest ~ IG(n/2, RSS/2), then ξ₀ | rest ~ N(mean residual, σ²/n).
    pub fn step_sigma2_xi0(&mut self) {
        let n = self.resid.len() as f64;
        let mut rss = self.resid.norm_squared();
        if !(rss >= SIGMA2_FLOOR) {
            rss = SIGMA2_FLOOR;
            self.sigma2_floor_hits += 1;
        }
        let g = Gamma::new(0.5 * n, 2.0 / rss).expect("valid gamma parameters").sample(&mut self.rng);
        let mut sigma2 = 1.0 / g;
        if !(sigma2 >= SIGMA2_FLOOR) {
            sigma2 = SIGMA2_FLOOR;
            self.sigma2_floor_hits += 1;
        }
        self.state.sigma2 = sigma2;
        let old = self.state.xi0;
        let mean = old + self.resid.mean();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let xi0 = mean + (sigma2 / n).sqrt() * z;
        self.resid.add_scalar_mut(old - xi0);
        self.state.xi0 = xi0;
    }

    fn log_hyper_target(&self, cache: &PriorCache, nu: f64, ell: f64) -> f64 {
        let theta = DVector::from_column_slice(&self.state.theta);
        let quad = theta.dot(&(&cache.precision * &theta));
        let mut lp = -0.5 * cache.log_det - 0.5 * quad;
        if self.include_normalizer {
            if let Some(s) = &self.surface {
                lp -= s.eval(nu, ell);
            }
        }
        lp
    }

    /// Random-walk Metropolis move on (ν, ℓ) targeting the θ-prior density
    /// under the uniform hyperprior.
    pub fn step_hyper(&mut self) {
        self.hyper_proposals += 1;
        let cur = (self.state.nu, self.state.ell);
        let cur_lp = self.log_hyper_target(&self.prior, cur.0, cur.1);
        let mut proposed: Option<PriorCache> = None;
        let mut failures = Vec::new();
        let grid = self.grid.clone();
        let step = self.hyper_step;
        let mut rng = self.rng.clone();
        let ((nu, ell), accepted, _) = rw_metropolis_reflect(
            cur,
            step,
            |nu, ell| match MaternParams::new(nu, ell).and_then(|p| PriorCache::new(&grid, p)) {
                Ok(c) => {
                    let lp = self.log_hyper_target(&c, nu, ell);
                    proposed = Some(c);
                    Some(lp)
                }
                Err(e) => {
                    failures.push(format!("(nu={nu}, ell={ell}) rejected: {e}"));
                    None
                }
            },
            cur_lp,
            &mut rng,
        );
        self.rng = rng;
        self.rejected_factorizations += failures.len();
        self.log.extend(failures);
        if accepted {
            self.hyper_accepted += 1;
            if (nu, ell) != cur {
                self.prior = proposed.expect("accepted proposal has a cache");
                self.state.nu = nu;
                self.state.ell = ell;
                self.q_theta = &self.prior.precision * DVector::from_column_slice(&self.state.theta);
            }
        }
    }

    /// One full sweep in the order θ, λ, τ, (σ², ξ₀), (ν, ℓ), skipping blocks
    /// the variant keeps fixed.
    pub fn sweep(&mut self) -> Result<()> {
        self.step_theta();
        if self.variant.updates_lambda() {
            self.step_lambda();
        }
        if self.variant.updates_tau() {
            self.step_tau();
        }
        if !self.noise_fixed {
            self.step_sigma2_xi0();
        }
        if self.variant.updates_hyper() {
            self.step_hyper();
        }
        if !self.state.is_valid() || !self.resid.iter().all(|r| r.is_finite()) {
            return Err(Error::Numerical(format!(
                "divergent sampler state: xi0={}, tau={}, sigma2={}, max theta={}",
                self.state.xi0,
                self.state.tau,
                self.state.sigma2,
                self.state.theta.iter().cloned().fold(f64::NAN, f64::max)
            )));
        }
        Ok(())
    }
}

fn draw_exp(rate: f64, rng: &mut Rng) -> f64 {
    let v = Exp::new(rate).expect("positive rate").sample(rng);
    v.max(f64::MIN_POSITIVE)
}

/// ξ₀ from the left-most decile of responses, θ from the clamped
/// unconstrained conjugate mean.
fn initial_state(data: &RegressionData, psi: &DMatrix<f64>, grid: &BasisGrid<f64>, cfg: &FitConfig) -> Result<ShrinkageState> {
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.xs()[a].total_cmp(&data.xs()[b]));
    let m = (n / 10).max(1);
    let xi0 = order[..m].iter().map(|&i| data.ys()[i]).sum::<f64>() / m as f64;
    let ys = data.ys();
    let ybar = ys.iter().sum::<f64>() / n as f64;
    let var = (ys.iter().map(|y| (y - ybar).powi(2)).sum::<f64>() / (n - 1) as f64).max(1e-6);
    let sd = var.sqrt();
    let cov = basis::prior_covariance(grid, cfg.matern)?;
    let y0 = DVector::from_iterator(n, ys.iter().map(|y| (y - xi0) / sd));
    let (mu, _) = conjugate_posterior(&cov.matrix, &(psi / sd), &y0)?;
    let k = grid.n();
    Ok(ShrinkageState {
        xi0,
        theta: mu.iter().map(|v| v.max(1e-3)).collect(),
        lambda: vec![1.0; k],
        w: vec![1.0; k],
        tau: 1.0,
        u: 1.0,
        sigma2: var,
        nu: cfg.matern.nu,
        ell: cfg.matern.ell,
    })
}

/// μ_N = Σ_N Φᵀ y and Σ_N = (Ω⁻¹ + ΦᵀΦ)⁻¹, computed from the Cholesky factor
/// of Ω without inverting it.
pub fn conjugate_posterior(omega: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y.len() != phi.nrows() {
        return Err(Error::DimensionMismatch { expected: phi.nrows(), got: y.len() });
    }
    let sigma = matrices::posterior_scale(omega, phi)?;
    let mu = &sigma * (phi.transpose() * y);
    Ok((mu, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageChain {
    pub config: FitConfig,
    pub states: Vec<ShrinkageState>,
    /// Post-burn-in acceptance rate of the (ν, ℓ) moves; None when they are
    /// not updated.
    pub hyper_acceptance: Option<f64>,
    pub rejected_factorizations: usize,
    pub sigma2_floor_hits: usize,
    pub prior_jitter: f64,
    /// Lag-1 autocorrelations of scalar summaries of the stored draws.
    pub lag1: BTreeMap<String, f64>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCurve {
    pub xs: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Monte Carlo standard error of `mean` (20 batch means).
    pub mean_se: Vec<f64>,
}

impl ShrinkageChain {
    fn draws_at(&self, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let grid = BasisGrid::<f64>::new(self.config.n_knots)?;
        let design = basis::design_monotone(xs, &grid)?;
        Ok(self
            .states
            .iter()
            .map(|s| {
                let f = &design * DVector::from_vec(s.effective_coefficients());
                f.iter().map(|v| v + s.xi0).collect()
            })
            .collect())
    }

    /// Posterior-mean prediction at `xs`.
    pub fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if self.states.is_empty() {
            return Err(invalid("empty chain"));
        }
        let draws = self.draws_at(xs)?;
        let m = draws.len() as f64;
        Ok((0..xs.len()).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / m).collect())
    }

    pub fn fit_curve(&self, xs: &[f64]) -> Result<FitCurve> {
        if self.states.is_empty() {
            return Err(invalid("empty chain"));
        }
        let draws = self.draws_at(xs)?;
        let m = draws.len();
        let batches = 20.min(m);
        let bsize = m / batches;
        let mut out = FitCurve { xs: xs.to_vec(), mean: vec![], lower: vec![], upper: vec![], mean_se: vec![] };
        for i in 0..xs.len() {
            let mut col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let bm: Vec<f64> = (0..batches).map(|b| col[b * bsize..(b + 1) * bsize].iter().sum::<f64>() / bsize as f64).collect();
            let bmean = bm.iter().sum::<f64>() / batches as f64;
            let se = if batches > 1 {
                (bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / ((batches - 1) * batches) as f64).sqrt()
            } else {
                0.0
            };
            col.sort_by(f64::total_cmp);
            out.mean.push(mean);
            out.lower.push(quantile_sorted(&col, 0.025));
            out.upper.push(quantile_sorted(&col, 0.975));
            out.mean_se.push(se);
        }
        Ok(out)
    }

    /// Writes `meta.json`, `draws.csv` and `fit_curve.csv` (201-point grid).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = serde_json::json!({
            "config": self.config,
            "n_states": self.states.len(),
            "hyper_acceptance": self.hyper_acceptance,
            "rejected_factorizations": self.rejected_factorizations,
            "sigma2_floor_hits": self.sigma2_floor_hits,
            "prior_jitter": self.prior_jitter,
            "lag1": self.lag1,
            "log": self.log,
        });
        let meta = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        write_atomic(&dir.join("meta.json"), meta.as_bytes())?;

        let k = self.config.n_knots;
        let mut header: Vec<String> = ["xi0", "sigma2", "tau", "u", "nu", "ell"].iter().map(|s| s.to_string()).collect();
        for name in ["theta", "lambda", "w"] {
            header.extend((1..=k).map(|j| format!("{name}_{j}")));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.states.iter().map(|s| {
            let mut r = vec![s.xi0, s.sigma2, s.tau, s.u, s.nu, s.ell];
            r.extend(&s.theta);
            r.extend(&s.lambda);
            r.extend(&s.w);
            r
        });
        write_atomic(&dir.join("draws.csv"), csv_string(&header, rows).as_bytes())?;

        let xs: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let c = self.fit_curve(&xs)?;
        let rows = (0..xs.len()).map(|i| vec![c.xs[i], c.mean[i], c.lower[i], c.upper[i]]);
        write_atomic(&dir.join("fit_curve.csv"), csv_string(&["x", "mean", "lower", "upper"], rows).as_bytes())?;
        Ok(())
    }
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Runs the sampler: `burn_in` sweeps, then `n_draws` stored states taken
/// every `thin` sweeps.
pub fn fit(data: &RegressionData, cfg: &FitConfig) -> Result<ShrinkageChain> {
    let mut s = GibbsSampler::new(data, cfg)?;
    for _ in 0..cfg.burn_in {
        s.sweep()?;
    }
    s.hyper_proposals = 0;
    s.hyper_accepted = 0;
    let mut states = Vec::with_capacity(cfg.n_draws);
    for i in 0..cfg.n_draws * cfg.thin {
        s.sweep()?;
        if (i + 1) % cfg.thin == 0 {
            states.push(s.state().clone());
        }
    }
    let mut lag = BTreeMap::new();
    lag.insert("xi0".to_string(), lag1(states.iter().map(|s| s.xi0)));
    lag.insert("sigma2".to_string(), lag1(states.iter().map(|s| s.sigma2)));
    lag.insert("tau".to_string(), lag1(states.iter().map(|s| s.tau)));
    lag.insert("mean_theta".to_string(), lag1(states.iter().map(|s| s.theta.iter().sum::<f64>() / s.theta.len() as f64)));
    if cfg.variant.updates_hyper() {
        lag.insert("nu".to_string(), lag1(states.iter().map(|s| s.nu)));
        lag.insert("ell".to_string(), lag1(states.iter().map(|s| s.ell)));
    }
    Ok(ShrinkageChain {
        config: cfg.clone(),
        states,
        hyper_acceptance: cfg
            .variant
            .updates_hyper()
            .then(|| if s.hyper_proposals == 0 { 1.0 } else { s.hyper_accepted as f64 / s.hyper_proposals as f64 }),
        rejected_factorizations: s.rejected_factorizations,
        sigma2_floor_hits: s.sigma2_floor_hits,
        prior_jitter: s.prior_jitter(),
        lag1: lag,
        log: std::mem::take(&mut s.log),
    })
}

/// Independent chains on derived seeds, run in parallel.
pub fn fit_chains(data: &RegressionData, cfg: &FitConfig, n_chains: usize) -> Result<Vec<ShrinkageChain>> {
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut cc = cfg.clone();
            cc.seed = derive_seed(cfg.seed, 0xC4A1 + c as u64);
            fit(data, &cc)
        })
        .collect()
}

/// Potential scale reduction factor of a scalar summary across chains.
pub fn rhat(chains: &[ShrinkageChain], f: impl Fn(&ShrinkageState) -> f64) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(invalid("need at least two chains"));
    }
    let n = chains.iter().map(|c| c.states.len()).min().unwrap_or(0);
    if n < 2 {
        return Err(invalid("chains too short"));
    }
    let means: Vec<f64> = chains.iter().map(|c| c.states[..n].iter().map(&f).sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64 * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.states[..n].iter().map(|s| (f(s) - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    let var = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Ok(if w > 0.0 { (var / w).sqrt() } else { 1.0 })
}

/// Mean squared error of predictions against responses.
pub fn mean_squared_error(pred: &[f64], ys: &[f64]) -> f64 {
    pred.iter().zip(ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / ys.len() as f64
}

/// MSPE of the posterior-mean predictor on held-out data.
pub fn mspe(chain: &ShrinkageChain, test: &RegressionData) -> Result<f64> {
    Ok(mean_squared_error(&chain.predict(test.xs())?, test.ys()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub n_knots: usize,
    pub trials: usize,
    /// Fraction of trials with ‖μ_N‖_∞ within the bound.
    pub frequency: f64,
    /// Per-trial ‖μ_N‖_∞ divided by that trial's bound.
    pub ratios: Vec<f64>,
    /// Per-trial (c₁, c₂) from the spectrum of ΦᵀΦ scaled by N/n.
    pub spectrum: Vec<(f64, f64)>,
    /// Trials whose spectrum does not satisfy 0 < c₁ < c₂.
    pub spectrum_violations: usize,
    /// Smallest λ_min(Ω)·n/N seen (the prior-covariance assumption).
    pub prior_eig_ratio: f64,
}

impl ConcentrationReport {
    /// Frequency with the bound constant multiplied by `scale`.
    pub fn frequency_at(&self, scale: f64) -> f64 {
        self.ratios.iter().filter(|r| **r <= scale).count() as f64 / self.ratios.len() as f64
    }
}

/// Under θ₀ = 0 (pure N(0,1) noise), the fraction of simulated datasets with
/// ‖μ_N‖_∞ ≤ 2 (c₂/c₁²)^{1/2} (N log N / n)^{1/2}, using the hat design Φ and
/// the default Matérn prior covariance.
pub fn mu_concentration_check(n: usize, n_knots: usize, trials: usize, seed: u64) -> Result<ConcentrationReport> {
    if n_knots < 2 {
        return Err(invalid(format!("the hat basis needs at least 2 knots, got {n_knots}")));
    }
    if n < 2 * n_knots || trials == 0 {
        return Err(invalid(format!("need n >= 2N and trials > 0 (n={n}, N={n_knots}, trials={trials})")));
    }
    let grid = BasisGrid::<f64>::new(n_knots)?;
    let omega = basis::prior_covariance(&grid, MaternParams::fixed_default())?.matrix;
    let (omega_min, _) = linalg::eigen_range(&omega);
    let scale = n_knots as f64 / n as f64;
    let rate = (n_knots as f64 * (n_knots as f64).ln() / n as f64).sqrt();
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, t as u64);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            let phi = basis::design_hat(&xs, &grid)?;
            let (lo, hi) = linalg::eigen_range(&(phi.transpose() * &phi));
            let (c1, c2) = (lo * scale, hi * scale);
            let (mu, _) = conjugate_posterior(&omega, &phi, &y)?;
            let bound = 2.0 * (c2 / (c1 * c1)).sqrt() * rate;
            Ok((mu.amax() / bound, (c1, c2)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = results.iter().map(|r| r.0).collect();
    let spectrum: Vec<(f64, f64)> = results.iter().map(|r| r.1).collect();
    let spectrum_violations = spectrum.iter().filter(|(a, b)| !(*a > 0.0 && a < b)).count();
    let mut rep = ConcentrationReport {
        n,
        n_knots,
        trials,
        frequency: 0.0,
        ratios,
        spectrum,
        spectrum_violations,
        prior_eig_ratio: omega_min / scale,
    };
    rep.frequency = rep.frequency_at(1.0);
    Ok(rep)
}
