pub mod band;
pub mod bounds;
pub mod fit;
pub mod marginal;

use clap::{Args, Parser};
use serde::{Deserialize, Serialize};
use tmvnlab::{CorrelationBand, Result};

/// Defaults of an argument struct, taken from its clap declarations so that
/// config files and flags share one source of truth.
pub fn clap_defaults<A: Args>() -> A {
    #[derive(Parser)]
    struct Wrap<A: Args> {
        #[command(flatten)]
        inner: A,
    }
    Wrap::<A>::parse_from(["tmvnlab"]).inner
}

/// Banded correlation families available from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Independent compound-symmetric blocks of size K (every nonzero
    /// correlation equals ρ).
    Block,
    /// Toeplitz with ρ(1 − m/K) at lag m < K.
    Taper,
}

impl Family {
    pub fn build(self, n: usize, k: usize, rho: f64) -> Result<CorrelationBand> {
        match self {
            Family::Block => CorrelationBand::block_compound(n, k, rho),
            Family::Taper => CorrelationBand::tapered(n, k, rho),
        }
    }
}

pub fn linspace(a: f64, b: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![a];
    }
    (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect()
}
