use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tmvnlab::error::Error;
use tmvnlab::{gaussprob, massshift, Result};

use super::{clap_defaults, Family};
use crate::output::{Global, OutDir};
use crate::row;

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value = "block")]
    pub family: Family,
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,
    #[arg(long, default_value_t = 205)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Free exponent of the strip bound; defaults to the midpoint of the
    /// admissible interval.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Exponent used in the bracket sweep.
    #[arg(long, default_value_t = 0.5)]
    pub sweep_alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,16,64,256")]
    pub sweep_d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.55,0.7,0.9")]
    pub sweep_rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.25")]
    pub sweep_delta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5")]
    pub sweep_a: Vec<f64>,
    /// Resolution of the region-Q membership mask.
    #[arg(long, default_value_t = 200)]
    pub region_grid: usize,
}

impl Default for BoundsArgs {
    fn default() -> Self {
        clap_defaults()
    }
}

pub fn run(a: BoundsArgs, g: &Global) -> Result<()> {
    if !(a.rho > 0.0 && a.rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0,1), got {}", a.rho)));
    }
    if a.region_grid < 2 {
        return Err(Error::InvalidArgument("region grid needs at least 2 points".into()));
    }
    let sigma = a.family.build(a.n, a.k, a.rho)?;
    let report = massshift::theorem1_chain(&sigma, a.delta, a.alpha, a.samples, g.seed)?;

    let mut grid = Vec::new();
    for &d in &a.sweep_d {
        for &rho in &a.sweep_rho {
            for &delta in &a.sweep_delta {
                for &t in &a.sweep_a {
                    grid.push((d, rho, delta, t));
                }
            }
        }
    }
    let sweep = grid
        .par_iter()
        .map(|&(d, rho, delta, t)| {
            let lower = massshift::lemma2_lower(d, rho, t)?;
            let upper = massshift::lemma2_upper(d, rho, delta, a.sweep_alpha)?;
            let orth = gaussprob::cs_orthant_prob(d, rho, t)?.value;
            let strip = gaussprob::cs_strip_prob(d, rho, delta)?.value;
            Ok((d, rho, delta, t, lower, orth, strip, upper))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = sweep.iter().filter(|r| r.5 < r.4 || r.6 > r.7).count();

    let mut out = OutDir::new(g)?;
    out.write_json("bound_chain.json", &report)?;
    let rows: Vec<_> = sweep
        .iter()
        .map(|&(d, rho, delta, t, lo, orth, strip, up)| row![d, rho, delta, t, lo, orth, strip, up, orth >= lo && strip <= up])
        .collect();
    out.write_table(
        "lemma2_sweep",
        &["d", "rho", "delta", "a", "lower", "orthant", "strip", "upper", "bracketed"],
        &rows,
    )?;
    let m = a.region_grid;
    let coord = |i: usize| (i as f64 + 0.5) / m as f64;
    let mut mask = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let (u, v) = (coord(i), coord(j));
            mask.push(row![u, v, massshift::in_region_q(u, v)]);
        }
    }
    out.write_table("region_q", &["rho_min", "rho_max", "in_q"], &mask)?;
    let summary = json!({
        "in_q": report.in_q,
        "chain_ordered": report.chain_ordered,
        "final_bound_holds": report.final_bound_holds,
        "lemma2_violations": violations,
    });
    out.finish("bounds", &a, summary)
}
