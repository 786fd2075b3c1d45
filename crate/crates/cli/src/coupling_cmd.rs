//! `hopdream coupling build` — construct `J(t)` and dump it.

use crate::common::{check_memory_budget, RunMetadata};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use dreaming_hopfield::coupling::DataSource;
use dreaming_hopfield::{
    build_coupling, build_information_matrix, io, make_examples, make_ground_truths,
    ModelSetting, RngSpec, SettingKind,
};
use std::path::Path;

#[derive(Subcommand)]
pub enum CouplingCmd {
    /// Generate a seeded dataset, build the coupling, write matrix dumps.
    Build(BuildArgs),
}

#[derive(Args, serde::Serialize, serde::Deserialize, Clone)]
pub struct BuildArgs {
    /// Which scenario to build: storing | supervised | unsupervised.
    #[arg(long)]
    pub setting: SettingKind,
    /// System size N.
    #[arg(long)]
    pub n: usize,
    /// Load alpha = P/N in (0, 1].
    #[arg(long)]
    pub alpha: f64,
    /// Example quality r (ignored for storing).
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Examples per class M (ignored for storing).
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Dreaming time; accepts `inf` for the projector limit.
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base name of the dump files (`<name>.bin` / `<name>.json`).
    #[arg(long, default_value = "coupling")]
    pub name: String,
    /// Also dump the generating dataset.
    #[arg(long, default_value_t = false)]
    pub dump_dataset: bool,
    /// Skip the memory guardrail.
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

pub fn run(cmd: CouplingCmd, out_dir: &Path) -> Result<()> {
    let CouplingCmd::Build(args) = cmd;
    check_memory_budget(args.n, 3, args.force)?;
    let setting = ModelSetting::new(args.setting, args.alpha, args.r, args.m)?;
    let p = setting.num_classes(args.n);
    let rng = RngSpec::new(args.seed, 0);
    let gt = make_ground_truths(args.n, p, &rng.substream(1))?;

    let info = match setting.kind {
        SettingKind::BasicStoring => {
            build_information_matrix(DataSource::Patterns(&gt), setting.kind)?
        }
        _ => {
            let ex = make_examples(&gt, setting.m, setting.r, &rng.substream(2))?;
            if args.dump_dataset {
                io::write_dataset_dump(
                    out_dir,
                    &format!("{}_dataset", args.name),
                    &gt,
                    Some(&ex),
                    setting.kind,
                    Some(rng),
                )?;
            }
            build_information_matrix(DataSource::Examples(&ex), setting.kind)?
        }
    };
    if args.dump_dataset && setting.kind == SettingKind::BasicStoring {
        io::write_dataset_dump(
            out_dir,
            &format!("{}_dataset", args.name),
            &gt,
            None,
            setting.kind,
            Some(rng),
        )?;
    }

    let j = build_coupling(&info, args.t)?;
    let (bin, json) =
        io::write_matrix_dump(out_dir, &args.name, &j, Some(rng)).context("writing dump")?;
    let meta = RunMetadata::new(
        "coupling-build",
        &args,
        false,
        vec![
            bin.file_name().unwrap().to_string_lossy().into_owned(),
            json.file_name().unwrap().to_string_lossy().into_owned(),
        ],
    )?;
    meta.write(&out_dir.join(format!("{}.meta.json", args.name)))?;
    println!("wrote {} and {}", bin.display(), json.display());
    Ok(())
}
