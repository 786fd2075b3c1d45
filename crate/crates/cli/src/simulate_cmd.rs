//! `hopdream simulate` — Monte Carlo runs at a single parameter point,
//! emitted as CSV with theory columns alongside the simulation estimates.

use crate::common::{check_memory_budget, csv_writer, fmt, sidecar_path, RunMetadata};
use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use dreaming_hopfield::spectral::QuadSpec;
use dreaming_hopfield::{
    empirical_spectrum_histogram, ga_validity_bound, law_for, m1_theory, make_examples,
    make_ground_truths, moments, run_retrieval_trials, se_empirical, se_theory, ModelSetting,
    ProbeKind, RetrievalScenario, RetrievalTrialParams, RngSpec, SettingKind,
};
use rayon::prelude::*;
use std::path::Path;

#[derive(Subcommand)]
pub enum SimulateCmd {
    /// One-step retrieval trials against the GA prediction.
    Retrieval(RetrievalConfig),
    /// Empirical spectrum of one realization against the limiting law.
    Spectrum(SpectrumConfig),
    /// Finite-M squared error against the big-data formula.
    Se(SeConfig),
}

#[derive(Args, Clone, serde::Serialize, serde::Deserialize)]
pub struct RetrievalConfig {
    #[arg(long)]
    pub setting: SettingKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long)]
    pub t: f64,
    /// Ball-probe overlap p (basic storing only).
    #[arg(long)]
    pub p: Option<f64>,
    /// Disorder realizations.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Probe draws per realization.
    #[arg(long, default_value_t = 10)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the self-interaction-free coupling (J_ii = 0).
    #[arg(long, default_value_t = false)]
    pub zero_diagonal: bool,
    #[arg(long, default_value = "retrieval_sim.csv")]
    pub out: String,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

#[derive(Args, Clone, serde::Serialize, serde::Deserialize)]
pub struct SpectrumConfig {
    #[arg(long)]
    pub setting: SettingKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
    /// Eigenvalues this close to the predicted peak count as peak mass.
    #[arg(long, default_value_t = 1e-6)]
    pub peak_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "spectrum_sim.csv")]
    pub out: String,
    /// Also write the raw sorted eigenvalues.
    #[arg(long, default_value_t = false)]
    pub dump_eigenvalues: bool,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

#[derive(Args, Clone, serde::Serialize, serde::Deserialize)]
pub struct SeConfig {
    /// supervised | unsupervised.
    #[arg(long)]
    pub setting: SettingKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub t: f64,
    /// Disorder realizations to average over.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "se_sim.csv")]
    pub out: String,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

pub fn run(cmd: SimulateCmd, out_dir: &Path) -> Result<()> {
    match cmd {
        SimulateCmd::Retrieval(cfg) => run_retrieval_config(cfg, out_dir),
        SimulateCmd::Spectrum(cfg) => run_spectrum_config(cfg, out_dir),
        SimulateCmd::Se(cfg) => run_se_config(cfg, out_dir),
    }
}

pub fn run_retrieval_config(cfg: RetrievalConfig, out_dir: &Path) -> Result<()> {
    check_memory_budget(cfg.n, 2, cfg.force)?;
    let setting = ModelSetting::new(cfg.setting, cfg.alpha, cfg.r, cfg.m)?;
    let (probe, x) = match setting.kind {
        SettingKind::BasicStoring => {
            let p = cfg.p.unwrap_or(1.0);
            (ProbeKind::Ball { p }, p)
        }
        _ => {
            if cfg.p.is_some() {
                bail!("--p applies to the storing setting; example probes use the dataset r");
            }
            (ProbeKind::FreshExample, cfg.r)
        }
    };
    let params = RetrievalTrialParams {
        setting,
        n: cfg.n,
        t: cfg.t,
        probe,
        datasets: cfg.trials,
        probes_per_dataset: cfg.probes,
        zero_diagonal: cfg.zero_diagonal,
    };
    let agg = run_retrieval_trials(&params, &RngSpec::new(cfg.seed, 0))?;

    let quad = QuadSpec::default();
    let scenario = match setting.kind {
        SettingKind::BasicStoring => RetrievalScenario::storing_attractiveness(cfg.alpha, cfg.t, x)?,
        SettingKind::Supervised => {
            RetrievalScenario::supervised_attractiveness(cfg.alpha, cfg.r, cfg.t)?
        }
        SettingKind::Unsupervised => {
            RetrievalScenario::unsupervised_attractiveness(cfg.alpha, cfg.r, cfg.t)?
        }
    };
    let pair = moments(&scenario, &quad)?;
    let pred = m1_theory(&pair);
    let ga = ga_validity_bound(scenario.law(), x, &quad)?;

    let path = out_dir.join(&cfg.out);
    let mut w = csv_writer(
        &path,
        &[
            "setting",
            "n",
            "alpha",
            "r",
            "m",
            "t",
            "x",
            "datasets",
            "probes",
            "m0_mean",
            "m0_stderr",
            "m1_theory",
            "ga_bound",
            "m1_sim",
            "m1_stderr",
            "between_dataset_var",
            "within_dataset_var",
            "delta_mean",
            "delta_second",
            "delta_third_central",
        ],
    )?;
    w.write_record([
        setting.kind.to_string(),
        cfg.n.to_string(),
        fmt(cfg.alpha),
        fmt(cfg.r),
        cfg.m.to_string(),
        fmt(cfg.t),
        fmt(x),
        agg.datasets.to_string(),
        agg.probes_per_dataset.to_string(),
        fmt(agg.m0_mean),
        fmt(agg.m0_stderr),
        fmt(pred.m1),
        fmt(ga),
        fmt(agg.m1_mean),
        fmt(agg.m1_stderr),
        fmt(agg.between_dataset_var),
        fmt(agg.within_dataset_var),
        fmt(agg.delta_mean),
        fmt(agg.delta_second),
        fmt(agg.delta_third_central),
    ])?;
    w.flush()?;
    RunMetadata::new("simulate-retrieval", &cfg, false, vec![cfg.out.clone()])?
        .write(&sidecar_path(&path))?;
    println!(
        "m1_sim = {:.4} +- {:.4} (theory {:.4}) -> {}",
        agg.m1_mean,
        agg.m1_stderr,
        pred.m1,
        path.display()
    );
    Ok(())
}

pub fn run_spectrum_config(cfg: SpectrumConfig, out_dir: &Path) -> Result<()> {
    check_memory_budget(cfg.n, 3, cfg.force)?;
    let setting = ModelSetting::new(cfg.setting, cfg.alpha, cfg.r, cfg.m)?;
    let law = law_for(&setting, cfg.t)?;
    let report = empirical_spectrum_histogram(
        &setting,
        cfg.n,
        cfg.t,
        &law,
        cfg.bins,
        cfg.peak_tol,
        &RngSpec::new(cfg.seed, 0),
    )?;
    let path = out_dir.join(&cfg.out);
    let mut w = csv_writer(&path, &["bin_lo", "bin_hi", "density"])?;
    for (lo, hi, d) in &report.bins {
        w.write_record([fmt(*lo), fmt(*hi), fmt(*d)])?;
    }
    w.flush()?;
    if cfg.dump_eigenvalues {
        let eig_path = path.with_extension("eigenvalues.csv");
        let mut we = csv_writer(&eig_path, &["eigenvalue"])?;
        for l in &report.eigenvalues {
            we.write_record([fmt(*l)])?;
        }
        we.flush()?;
    }
    let mut meta = RunMetadata::new("simulate-spectrum", &cfg, false, vec![cfg.out.clone()])?;
    meta.config["summary"] = serde_json::json!({
        "w1_bulk": report.w1_bulk,
        "peak_mass_estimate": report.peak_mass_estimate,
        "predicted_peak": report.predicted_peak,
        "predicted_peak_mass": law.peak_mass(),
    });
    meta.write(&sidecar_path(&path))?;
    println!(
        "W1(bulk) = {:.4}, peak mass = {:.4} (predicted {:.4}) -> {}",
        report.w1_bulk,
        report.peak_mass_estimate,
        law.peak_mass(),
        path.display()
    );
    Ok(())
}

pub fn run_se_config(cfg: SeConfig, out_dir: &Path) -> Result<()> {
    check_memory_budget(cfg.n, 4, cfg.force)?;
    if cfg.setting == SettingKind::BasicStoring {
        bail!("squared error compares example-built couplings; use supervised or unsupervised");
    }
    let setting = ModelSetting::new(cfg.setting, cfg.alpha, cfg.r, cfg.m)?;
    let base = RngSpec::new(cfg.seed, 0);
    let p = setting.num_classes(cfg.n);
    let samples: Result<Vec<f64>, dreaming_hopfield::Error> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let rng = base.substream(trial as u64);
            let gt = make_ground_truths(cfg.n, p, &rng.substream(1))?;
            let ex = make_examples(&gt, cfg.m, cfg.r, &rng.substream(2))?;
            se_empirical(&gt, &ex, setting.kind, cfg.t)
        })
        .collect();
    let samples = samples?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
    } else {
        0.0
    };
    let stderr = (var / samples.len() as f64).sqrt();
    let theory = se_theory(setting.kind, cfg.alpha, cfg.r, cfg.t, &QuadSpec::default())?;

    let path = out_dir.join(&cfg.out);
    let mut w = csv_writer(
        &path,
        &[
            "setting", "n", "alpha", "r", "m", "t", "trials", "se_theory", "se_sim_mean",
            "se_sim_stderr",
        ],
    )?;
    w.write_record([
        setting.kind.to_string(),
        cfg.n.to_string(),
        fmt(cfg.alpha),
        fmt(cfg.r),
        cfg.m.to_string(),
        fmt(cfg.t),
        cfg.trials.to_string(),
        fmt(theory),
        fmt(mean),
        fmt(stderr),
    ])?;
    w.flush()?;
    RunMetadata::new("simulate-se", &cfg, false, vec![cfg.out.clone()])?
        .write(&sidecar_path(&path))?;
    println!(
        "SE sim = {mean:.5} +- {stderr:.5} (theory {theory:.5}) -> {}",
        path.display()
    );
    Ok(())
}
