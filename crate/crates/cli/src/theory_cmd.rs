//! `hopdream theory density` — tabulate the limiting spectral law.

use crate::common::{csv_writer, fmt, sidecar_path, RunMetadata};
use anyhow::Result;
use clap::{Args, Subcommand};
use dreaming_hopfield::spectral::bulk_density;
use dreaming_hopfield::{law_for, ModelSetting, SettingKind};
use std::path::Path;

#[derive(Subcommand)]
pub enum TheoryCmd {
    /// Emit (lambda, density, peak_location, peak_mass) on a support grid.
    Density(DensityArgs),
}

#[derive(Args, serde::Serialize, serde::Deserialize, Clone)]
pub struct DensityArgs {
    #[arg(long)]
    pub setting: SettingKind,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Dreaming time; accepts `inf`.
    #[arg(long)]
    pub t: f64,
    /// Number of interior grid points across the bulk support.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Output CSV name.
    #[arg(long, default_value = "density.csv")]
    pub out: String,
}

pub fn run(cmd: TheoryCmd, out_dir: &Path) -> Result<()> {
    let TheoryCmd::Density(args) = cmd;
    let setting = ModelSetting::new(args.setting, args.alpha, args.r, 1)?;
    let law = law_for(&setting, args.t)?;
    let sup = law.support();
    let path = out_dir.join(&args.out);
    let mut w = csv_writer(&path, &["lambda", "density", "peak_location", "peak_mass"])?;
    let peak = law.peak();
    let mass = law.peak_mass();
    let k = args.grid.max(2);
    for i in 0..k {
        // Interior midpoints: the density vanishes at the exact edges.
        let frac = (i as f64 + 0.5) / k as f64;
        let lambda = sup.lambda_minus + frac * (sup.lambda_plus - sup.lambda_minus);
        // Density of the absolutely continuous part of the full law.
        let density = law.bulk_mass() * bulk_density(&law, lambda);
        w.write_record([fmt(lambda), fmt(density), fmt(peak), fmt(mass)])?;
    }
    w.flush()?;
    RunMetadata::new("theory-density", &args, false, vec![args.out.clone()])?
        .write(&sidecar_path(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}
