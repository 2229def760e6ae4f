use std::collections::BTreeMap;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tmvnlab::error::Error;
use tmvnlab::rng::derive_seed;
use tmvnlab::{tmvn, Matrix, ProbEstimate, Result, TruncatedMVN};

use super::{clap_defaults, linspace, Family};
use crate::output::{Global, OutDir};
use crate::row;

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalArgs {
    /// Band family of the scale matrix.
    #[arg(long, value_enum, default_value = "block")]
    pub family: Family,
    /// In-band correlation.
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,
    /// Width of the near-origin window [0, δ].
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    /// Lattice points for each α estimate.
    #[arg(long, default_value_t = 200_000)]
    pub alpha_samples: u64,
    /// Lattice points for each density ordinate.
    #[arg(long, default_value_t = 20_000)]
    pub density_samples: u64,
    /// Density ordinates per curve, on [0, theta_max].
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 3.0)]
    pub theta_max: f64,
    /// Also run the identity-scale control for N ∈ {10, 50, 100}.
    #[arg(long)]
    pub diagonal_control: bool,
}

impl Default for MarginalArgs {
    fn default() -> Self {
        clap_defaults()
    }
}

/// (N, K) pairs along each ladder.
pub const LADDERS: [[(usize, usize); 3]; 3] = [
    [(100, 2), (100, 5), (100, 20)],
    [(10, 5), (50, 5), (100, 5)],
    [(25, 5), (100, 20), (250, 50)],
];
pub const CONTROL_NS: [usize; 3] = [10, 50, 100];

struct Curve {
    alpha: ProbEstimate,
    density: Vec<(f64, f64, f64)>,
}

fn curve(sigma: Matrix, a: &MarginalArgs, thetas: &[f64], seed: u64) -> Result<Curve> {
    let alpha = tmvn::alpha_mass(&sigma, a.delta, a.alpha_samples, derive_seed(seed, 0))?;
    let law = TruncatedMVN::centered(sigma)?.with_mc(a.density_samples, derive_seed(seed, 1));
    let density = thetas
        .iter()
        .map(|&t| law.marginal_density(1, &[t]).map(|d| (t, d.density, d.std_error)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve { alpha, density })
}

/// Separations (α_i − α_{i+1}) / combined se along a ladder.
fn separations(alphas: &[ProbEstimate]) -> Vec<f64> {
    alphas
        .windows(2)
        .map(|w| {
            let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
            let d = w[0].value - w[1].value;
            if se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn validate(a: &MarginalArgs) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    if !(a.rho > 0.0 && a.rho < 1.0) {
        return bad(format!("rho must lie in (0,1), got {}", a.rho));
    }
    if !(a.delta > 0.0) {
        return bad(format!("delta must be positive, got {}", a.delta));
    }
    if a.grid_points == 0 || !(a.theta_max > 0.0) {
        return bad("density grid needs grid_points >= 1 and theta_max > 0".into());
    }
    Ok(())
}

pub fn run(a: MarginalArgs, g: &Global) -> Result<()> {
    validate(&a)?;
    let thetas = linspace(0.0, a.theta_max, a.grid_points);
    let mut pairs: Vec<(usize, usize)> = LADDERS.iter().flatten().copied().collect();
    pairs.sort();
    pairs.dedup();
    let curves: BTreeMap<(usize, usize), Curve> = pairs
        .par_iter()
        .map(|&(n, k)| {
            let sigma = a.family.build(n, k, a.rho)?.into_matrix();
            Ok(((n, k), curve(sigma, &a, &thetas, derive_seed(g.seed, (n * 1000 + k) as u64))?))
        })
        .collect::<Result<_>>()?;

    let mut out = OutDir::new(g)?;
    let mut alpha_rows = Vec::new();
    let mut summary = serde_json::Map::new();
    for (li, ladder) in LADDERS.iter().enumerate() {
        let name = format!("ladder{}", li + 1);
        let mut rows = Vec::new();
        for &(n, k) in ladder {
            let c = &curves[&(n, k)];
            for &(t, d, se) in &c.density {
                rows.push(row![n, k, t, d, se]);
            }
            alpha_rows.push(row![name.as_str(), n, k, c.alpha.value, c.alpha.std_error]);
        }
        out.write_table(&format!("{name}_density"), &["n", "k", "theta", "density", "se"], &rows)?;
        let alphas: Vec<ProbEstimate> = ladder.iter().map(|p| curves[p].alpha).collect();
        let sep = separations(&alphas);
        summary.insert(
            name,
            json!({
                "pairs": ladder,
                "alpha": alphas.iter().map(|p| p.value).collect::<Vec<_>>(),
                "std_error": alphas.iter().map(|p| p.std_error).collect::<Vec<_>>(),
                "separation_se": sep.iter().map(|s| if s.is_finite() { json!(s) } else { json!(s.to_string()) }).collect::<Vec<_>>(),
                "strictly_decreasing": alphas.windows(2).all(|w| w[0].value > w[1].value),
                "decreasing_by_4se": sep.iter().all(|s| *s >= 4.0),
            }),
        );
    }

    if a.diagonal_control {
        let ctrl: Vec<Curve> = CONTROL_NS
            .par_iter()
            .map(|&n| curve(Matrix::identity(n, n), &a, &thetas, derive_seed(g.seed, 0xD1A6 + n as u64)))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (&n, c) in CONTROL_NS.iter().zip(&ctrl) {
            for &(t, d, se) in &c.density {
                rows.push(row![n, 0usize, t, d, se]);
            }
            alpha_rows.push(row!["control", n, 0usize, c.alpha.value, c.alpha.std_error]);
        }
        out.write_table("control_density", &["n", "k", "theta", "density", "se"], &rows)?;
        let (first, last) = (&ctrl[0], &ctrl[ctrl.len() - 1]);
        let diff = (first.alpha.value - last.alpha.value).abs();
        let se = (first.alpha.std_error.powi(2) + last.alpha.std_error.powi(2)).sqrt();
        let max_curve_diff = first
            .density
            .iter()
            .zip(&last.density)
            .map(|(x, y)| (x.1 - y.1).abs())
            .fold(0.0, f64::max);
        summary.insert(
            "control".into(),
            json!({
                "alpha_diff": diff,
                "std_error": se,
                "within_4se": diff <= (4.0 * se).max(1e-12),
                "max_density_diff": max_curve_diff,
            }),
        );
    }
    out.write_table("alpha", &["ladder", "n", "k", "alpha", "se"], &alpha_rows)?;
    out.finish("marginal", &a, serde_json::Value::Object(summary))
}
