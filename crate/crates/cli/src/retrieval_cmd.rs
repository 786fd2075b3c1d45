//! `hopdream retrieval theory` — GA magnetization curves over a sweep.

use crate::common::{csv_writer, fmt, parse_sweep, sidecar_path, RunMetadata};
use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use dreaming_hopfield::{
    ga_validity_bound, m1_theory, moments, predict_curve, retrieval::CurveFamily,
    RetrievalScenario,
};
use std::path::Path;

#[derive(Subcommand)]
pub enum RetrievalCmd {
    /// One-step magnetization curve under the Gaussian approximation.
    Theory(TheoryArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Pattern stability (p = 1); sweeps the load alpha.
    StoringStability,
    /// Ball-probe attractiveness; sweeps p.
    StoringAttractiveness,
    /// Ground-truth attractiveness from fresh examples; sweeps r.
    Supervised,
    /// Same against the unsupervised coupling; sweeps r.
    Unsupervised,
}

#[derive(Args, serde::Serialize, serde::Deserialize, Clone)]
pub struct TheoryArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Load alpha (ignored by storing-stability, which sweeps it).
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long)]
    pub t: f64,
    /// Sweep spec, e.g. `p=0:1:0.02`, `r=0.1:1:0.05`, `alpha=0.05:1:0.05`.
    #[arg(long)]
    pub sweep: String,
    #[arg(long, default_value = "retrieval_theory.csv")]
    pub out: String,
}

pub fn run(cmd: RetrievalCmd, out_dir: &Path) -> Result<()> {
    let RetrievalCmd::Theory(args) = cmd;
    let sweep = parse_sweep(&args.sweep)?;
    let expected_var = match args.scenario {
        Scenario::StoringStability => "alpha",
        Scenario::StoringAttractiveness => "p",
        Scenario::Supervised | Scenario::Unsupervised => "r",
    };
    if sweep.var != expected_var {
        bail!(
            "scenario sweeps `{expected_var}`, got `{}` (use --sweep {expected_var}=lo:hi:step)",
            sweep.var
        );
    }
    let path = out_dir.join(&args.out);
    let mut w = csv_writer(&path, &["x", "m1_theory", "ga_bound"])?;
    match args.scenario {
        Scenario::StoringStability => {
            for &alpha in &sweep.values {
                let sc = RetrievalScenario::storing_stability(alpha, args.t)?;
                let pair = moments(&sc, &Default::default())?;
                let pred = m1_theory(&pair);
                // Stability is the p = 1 case: the GA obstruction vanishes.
                let ga = ga_validity_bound(sc.law(), 1.0, &Default::default())?;
                w.write_record([fmt(alpha), fmt(pred.m1), fmt(ga)])?;
            }
        }
        Scenario::StoringAttractiveness | Scenario::Supervised | Scenario::Unsupervised => {
            let family = match args.scenario {
                Scenario::StoringAttractiveness => CurveFamily::StoringAttractiveness,
                Scenario::Supervised => CurveFamily::SupervisedAttractiveness,
                _ => CurveFamily::UnsupervisedAttractiveness,
            };
            let curve = predict_curve(family, args.alpha, args.t, &sweep.values, &Default::default())?;
            for pt in curve {
                w.write_record([fmt(pt.x), fmt(pt.m1_theory), fmt(pt.ga_bound)])?;
            }
        }
    }
    w.flush()?;
    RunMetadata::new("retrieval-theory", &args, false, vec![args.out.clone()])?
        .write(&sidecar_path(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}
