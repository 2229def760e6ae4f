use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tmvnlab::error::Error;
use tmvnlab::regress::{self, FitConfig, RegressionData, Truth, Variant};
use tmvnlab::rng::derive_seed;
use tmvnlab::Result;

use super::{clap_defaults, linspace};
use crate::output::{Global, OutDir};
use crate::row;

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Named design; `paper-sec4` = n 500 split 300/200, 150 knots, σ 0.5.
    #[arg(long)]
    pub preset: Option<String>,
    /// Simulate from a built-in truth (f1 or f2).
    #[arg(long, conflicts_with = "data")]
    pub truth: Option<String>,
    /// Two-column (x, y) CSV with training data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Optional held-out (x, y) CSV used for the MSPE.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// tn_fixed, tn_hyper, global, global_local, or all.
    #[arg(long, default_value = "tn_fixed")]
    pub variant: String,
    /// Simulated sample size.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Size of the training split of simulated data (default: all of it).
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub knots: usize,
    /// Noise sd of simulated data.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = regress::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = regress::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, default_value_t = regress::DEFAULT_THIN)]
    pub thin: usize,
    /// Leave the orthant normalizer out of the (ν, ℓ) updates.
    #[arg(long)]
    pub no_normalizer: bool,
    #[arg(long, default_value_t = regress::DEFAULT_NORMALIZER_SAMPLES)]
    pub normalizer_samples: u64,
}

impl Default for FitArgs {
    fn default() -> Self {
        clap_defaults()
    }
}

fn apply_preset(a: &mut FitArgs) -> Result<()> {
    match a.preset.as_deref() {
        None => Ok(()),
        Some("paper-sec4") => {
            a.n = 500;
            a.n_train = Some(300);
            a.knots = 150;
            a.sigma = 0.5;
            if a.truth.is_none() && a.data.is_none() {
                a.truth = Some("f1".into());
            }
            Ok(())
        }
        Some(p) => Err(Error::InvalidArgument(format!("unknown preset '{p}' (known: paper-sec4)"))),
    }
}

fn variants(s: &str) -> Result<Vec<Variant>> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',').map(|v| v.trim().parse()).collect()
}

pub fn run(mut a: FitArgs, g: &Global) -> Result<()> {
    apply_preset(&mut a)?;
    let variants = variants(&a.variant)?;
    let truth: Option<Truth> = a.truth.as_deref().map(str::parse).transpose()?;
    let (train, test) = match (&a.data, truth) {
        (Some(path), _) => {
            let train = RegressionData::read_csv(path)?;
            let test = a.test_data.as_deref().map(RegressionData::read_csv).transpose()?;
            (train, test)
        }
        (None, Some(t)) => {
            let all = regress::simulate_truth(t, a.n, a.sigma, derive_seed(g.seed, 0xDA7A))?;
            match a.n_train {
                Some(m) if m < a.n => {
                    let (tr, te) = all.split(m, derive_seed(g.seed, 0x5B17))?;
                    (tr, Some(te))
                }
                _ => (all, None),
            }
        }
        (None, None) => return Err(Error::InvalidArgument("either --truth or --data is required".into())),
    };

    let chains = variants
        .par_iter()
        .map(|&v| {
            let mut cfg = FitConfig::new(a.knots, v, derive_seed(g.seed, v as u64));
            cfg.n_draws = a.draws;
            cfg.burn_in = a.burn_in;
            cfg.thin = a.thin;
            cfg.include_normalizer = !a.no_normalizer;
            cfg.normalizer_samples = a.normalizer_samples;
            regress::fit(&train, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutDir::new(g)?;
    out.write("data_train.csv", train.to_csv().as_bytes())?;
    if let Some(t) = &test {
        out.write("data_test.csv", t.to_csv().as_bytes())?;
    }
    let xs = linspace(0.0, 1.0, 201);
    let mut mspe_rows = Vec::new();
    let mut summary = serde_json::Map::new();
    for (v, chain) in variants.iter().zip(&chains) {
        let dir = format!("chain_{v}");
        chain.write_dir(&out.path(&dir))?;
        out.record(&dir);
        let c = chain.fit_curve(&xs)?;
        let rows: Vec<_> = (0..xs.len())
            .map(|i| {
                let f = truth.map(|t| t.eval(xs[i])).unwrap_or(f64::NAN);
                row![xs[i], c.mean[i], c.lower[i], c.upper[i], c.mean_se[i], f]
            })
            .collect();
        out.write_table(&format!("fit_curve_{v}"), &["x", "mean", "lower", "upper", "mean_se", "truth"], &rows)?;
        let mspe = test.as_ref().map(|t| regress::mspe(chain, t)).transpose()?;
        if let Some(m) = mspe {
            mspe_rows.push(row![v.to_string().as_str(), m]);
        }
        let max_bias = truth.map(|t| {
            xs.iter()
                .zip(&c.mean)
                .filter(|(x, _)| **x <= 0.6 + 1e-12)
                .map(|(x, m)| (m - t.eval(*x)).abs())
                .fold(0.0, f64::max)
        });
        summary.insert(
            v.to_string(),
            json!({
                "mspe": mspe,
                "max_abs_bias_0_0.6": max_bias,
                "hyper_acceptance": chain.hyper_acceptance,
                "lag1": chain.lag1,
            }),
        );
    }
    if !mspe_rows.is_empty() {
        out.write_table("mspe", &["variant", "mspe"], &mspe_rows)?;
    }
    out.finish("fit", &a, serde_json::Value::Object(summary))
}
