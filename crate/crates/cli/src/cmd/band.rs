use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tmvnlab::error::Error;
use tmvnlab::matrices::{self, BandedPosteriorOptions, BandedPosteriorReport};
use tmvnlab::rng::{derive_seed, rng_for};
use tmvnlab::{basis, linalg, BasisGrid, MaternParams, Matrix, Result};

use super::clap_defaults;
use crate::output::{Global, OutDir};

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandArgs {
    /// Sample size behind ΦᵀΦ.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Dimensions N of the posterior scale matrix.
    #[arg(long, value_delimiter = ',', default_value = "50,250,500")]
    pub knots: Vec<usize>,
    /// Accuracy target ε of the construction (sets the truncation band).
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Largest Neumann degree n0 in the sweep 1..=n0_max.
    #[arg(long, default_value_t = 6)]
    pub n0_max: usize,
    /// Truncation band r; by default the smallest r ≥ 2⌈ln(1/ε)⌉ whose
    /// truncation stays positive definite.
    #[arg(long)]
    pub r: Option<usize>,
    /// Fixed Neumann degree of the prior-precision stage (default: n0).
    #[arg(long)]
    pub n1: Option<usize>,
    /// Fixed Neumann degree of the posterior stage (default: n0).
    #[arg(long)]
    pub m1: Option<usize>,
    /// Use Φ = 0: the posterior scale is then the prior covariance.
    #[arg(long)]
    pub phi_zero: bool,
}

impl Default for BandArgs {
    fn default() -> Self {
        clap_defaults()
    }
}

struct Panel {
    n_knots: usize,
    sigma: Matrix,
    r_default: usize,
    reports: Vec<BandedPosteriorReport>,
}

fn panel(a: &BandArgs, n_knots: usize, seed: u64) -> Result<Panel> {
    use rand::Rng as _;
    let grid = BasisGrid::new(n_knots)?;
    let omega = basis::prior_covariance(&grid, MaternParams::fixed_default())?.matrix;
    let phi = if a.phi_zero {
        Matrix::zeros(a.n, n_knots)
    } else {
        let mut rng = rng_for(seed, 0);
        let xs: Vec<f64> = (0..a.n).map(|_| rng.random::<f64>()).collect();
        basis::design_hat(&xs, &grid)?
    };
    let sigma = if a.phi_zero { omega.clone() } else { matrices::posterior_scale(&omega, &phi)? };
    let r_default = matrices::default_band(a.eps);
    let r = match a.r {
        Some(r) => r,
        None => matrices::positive_definite_band_from(&omega, r_default).ok_or_else(|| {
            Error::NotPositiveDefinite(format!("no band truncation of the N={n_knots} prior covariance is positive definite"))
        })?,
    };
    let opts = BandedPosteriorOptions { r: Some(r), n1: a.n1, m1: a.m1 };
    let reports = (1..=a.n0_max)
        .map(|n0| matrices::banded_posterior_approx(&omega, &phi, a.eps, n0, opts).map(|r| r.1))
        .collect::<Result<Vec<_>>>()?;
    Ok(Panel { n_knots, sigma, r_default, reports })
}

pub fn run(a: BandArgs, g: &Global) -> Result<()> {
    if a.knots.is_empty() || a.n0_max == 0 {
        return Err(Error::InvalidArgument("need at least one N and n0_max >= 1".into()));
    }
    let panels = a
        .knots
        .par_iter()
        .map(|&k| panel(&a, k, derive_seed(g.seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = OutDir::new(g)?;
    let mut summary = serde_json::Map::new();
    for p in &panels {
        let mut buf = Vec::new();
        linalg::write_matrix_csv(&mut buf, &p.sigma)?;
        out.write(&format!("sigma_N{}.csv", p.n_knots), &buf)?;
        let scaled = &p.sigma * (a.n as f64 / p.n_knots as f64);
        let mut buf = Vec::new();
        linalg::write_matrix_csv(&mut buf, &scaled)?;
        out.write(&format!("sigma_scaled_N{}.csv", p.n_knots), &buf)?;
        out.write_json(&format!("band_report_N{}.json", p.n_knots), &p.reports)?;
        let gaps: Vec<f64> = p.reports.iter().map(|r| r.gap).collect();
        summary.insert(
            format!("N{}", p.n_knots),
            json!({
                "r": p.reports[0].r,
                "r_default": p.r_default,
                "gaps": gaps,
                "gap_nonincreasing": gaps.windows(2).all(|w| w[1] <= w[0] + 1e-10),
                "bandwidths": p.reports.iter().map(|r| r.bandwidth).collect::<Vec<_>>(),
            }),
        );
    }
    out.finish("posterior-band", &a, serde_json::Value::Object(summary))
}
