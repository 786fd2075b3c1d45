//! `hopdream reproduce` — regenerate the data behind the reference figures.
//!
//! Each figure writes `<fig>_theory.csv` and (where simulation is involved)
//! `<fig>_sim.csv` plus one metadata sidecar holding the fully resolved
//! configuration. Grid values that are read off the figures rather than
//! stated in the text are marked `figure_inferred_defaults` in the sidecar.
//!
//! Configuration is layered: per-figure defaults, then an optional TOML
//! file (`--config`), then command-line flags.

use crate::common::{check_memory_budget, csv_writer, fmt, RunMetadata};
use crate::verify;
use anyhow::{bail, Context, Result};
use clap::Args;
use dreaming_hopfield::retrieval::CurveFamily;
use dreaming_hopfield::spectral::QuadSpec;
use dreaming_hopfield::{
    ga_validity_bound, law_for, m1_theory, make_examples, make_ground_truths, moments,
    predict_curve, se_empirical, se_theory, simulate, ModelSetting, PreparedTrial, ProbeKind,
    RetrievalScenario, RngSpec, SettingKind,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Args)]
pub struct ReproduceCmd {
    /// fig1 | fig2 | fig3 | fig4 | verify
    pub experiment: String,
    /// TOML file with the same optional keys as the flags below.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset (disorder) realizations behind each simulated point.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Probe draws per realization.
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Restrict to a single dreaming time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Restrict fig1 to one setting row or fig3 to one panel.
    #[arg(long)]
    pub panel: Option<String>,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

/// Fully resolved figure configuration; serialized into the sidecar and
/// sufficient to re-run the experiment (`hopdream rerun`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub experiment: String,
    pub seed: u64,
    pub trials: usize,
    pub probes: usize,
    pub n: usize,
    pub m: usize,
    pub alphas: Vec<f64>,
    pub ts: Vec<f64>,
    pub rs: Vec<f64>,
    /// Probe-overlap grid for simulated attractiveness points (fig3).
    pub xs: Vec<f64>,
    /// Load grid for the simulated stability panel (fig3).
    pub stability_alphas: Vec<f64>,
    pub panel: Option<String>,
    pub force: bool,
}

/// Subset of keys accepted from the TOML config file.
#[derive(Debug, Default, Deserialize)]
struct FileOverrides {
    seed: Option<u64>,
    trials: Option<usize>,
    probes: Option<usize>,
    n: Option<usize>,
    m: Option<usize>,
    alphas: Option<Vec<f64>>,
    ts: Option<Vec<f64>>,
    rs: Option<Vec<f64>>,
    xs: Option<Vec<f64>>,
    stability_alphas: Option<Vec<f64>>,
    panel: Option<String>,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}

fn defaults_for(experiment: &str) -> Result<ReproduceConfig> {
    let base = ReproduceConfig {
        experiment: experiment.to_string(),
        seed: 0,
        trials: 0,
        probes: 0,
        n: 0,
        m: 0,
        alphas: vec![],
        ts: vec![],
        rs: vec![],
        xs: vec![],
        stability_alphas: vec![],
        panel: None,
        force: false,
    };
    Ok(match experiment {
        "fig1" => ReproduceConfig {
            trials: 1,
            probes: 1,
            n: 1000,
            m: 200,
            alphas: vec![0.1, 0.3, 0.5],
            ts: vec![0.0, 1.0, 10.0],
            rs: vec![0.4, 0.7, 0.9],
            ..base
        },
        "fig2" => ReproduceConfig {
            trials: 3,
            probes: 1,
            n: 1000,
            m: 0, // per-point M grid is fixed to {50, 100, 200}
            alphas: vec![0.1, 0.2, 0.3],
            ts: vec![0.0, 10.0],
            rs: vec![0.2, 0.4, 0.6, 0.8],
            ..base
        },
        "fig3" => ReproduceConfig {
            trials: 20,
            probes: 8,
            n: 5000,
            m: 1,
            alphas: vec![0.1, 0.2, 0.3],
            ts: vec![0.0, 1.0, 10.0],
            xs: grid(0.1, 1.0, 0.1),
            stability_alphas: grid(0.1, 0.9, 0.1),
            ..base
        },
        "fig4" => ReproduceConfig {
            trials: 5,
            probes: 20,
            n: 1000,
            m: 1000,
            alphas: vec![0.1, 0.2, 0.3],
            ts: vec![0.0, 10.0],
            rs: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            ..base
        },
        other => bail!("unknown experiment `{other}` (fig1|fig2|fig3|fig4|verify)"),
    })
}

pub fn run(cmd: ReproduceCmd, out_dir: &Path) -> Result<()> {
    if cmd.experiment == "verify" {
        return verify::run(verify::VerifyCmd {
            level: verify::Level::Full,
            quad_nodes: None,
            json: false,
            seed: cmd.seed.unwrap_or(0),
        });
    }
    let mut cfg = defaults_for(&cmd.experiment)?;
    if let Some(path) = &cmd.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let file: FileOverrides = toml::from_str(&text)?;
        apply_file_overrides(&mut cfg, file);
    }
    if let Some(v) = cmd.seed {
        cfg.seed = v;
    }
    if let Some(v) = cmd.trials {
        cfg.trials = v;
    }
    if let Some(v) = cmd.probes {
        cfg.probes = v;
    }
    if let Some(v) = cmd.n {
        cfg.n = v;
    }
    if let Some(v) = cmd.m {
        cfg.m = v;
    }
    if let Some(t) = cmd.t {
        cfg.ts = vec![t];
    }
    if cmd.panel.is_some() {
        cfg.panel = cmd.panel;
    }
    cfg.force = cmd.force;
    run_config(cfg, out_dir)
}

fn apply_file_overrides(cfg: &mut ReproduceConfig, file: FileOverrides) {
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = file.$field { cfg.$field = v; })*
        };
    }
    set!(seed, trials, probes, n, m, alphas, ts, rs, xs, stability_alphas);
    if file.panel.is_some() {
        cfg.panel = file.panel;
    }
}

pub fn run_config(cfg: ReproduceConfig, out_dir: &Path) -> Result<()> {
    check_memory_budget(cfg.n, 4, cfg.force)?;
    let outputs = match cfg.experiment.as_str() {
        "fig1" => fig1(&cfg, out_dir)?,
        "fig2" => fig2(&cfg, out_dir)?,
        "fig3" => fig3(&cfg, out_dir)?,
        "fig4" => fig4(&cfg, out_dir)?,
        other => bail!("unknown experiment `{other}`"),
    };
    let meta = RunMetadata::new("reproduce", &cfg, true, outputs.clone())?;
    meta.write(&out_dir.join(format!("{}.meta.json", cfg.experiment)))?;
    for o in &outputs {
        println!("wrote {}", out_dir.join(o).display());
    }
    Ok(())
}

/// Limiting spectral densities vs one seeded empirical histogram per panel.
fn fig1(cfg: &ReproduceConfig, out_dir: &Path) -> Result<Vec<String>> {
    let name = "fig1.csv".to_string();
    let path = out_dir.join(&name);
    let mut w = csv_writer(
        &path,
        &[
            "setting",
            "alpha",
            "r",
            "t",
            "lambda",
            "theory_density",
            "sim_density",
            "peak_location",
            "peak_mass",
        ],
    )?;
    let mut panels: Vec<(SettingKind, f64, f64, f64)> = Vec::new();
    let row_wanted = |row: &str| cfg.panel.as_deref().is_none_or(|p| p == row);
    if row_wanted("storing") {
        for &alpha in &cfg.alphas {
            for &t in &cfg.ts {
                panels.push((SettingKind::BasicStoring, alpha, 1.0, t));
            }
        }
    }
    for (kind, row) in [
        (SettingKind::Supervised, "supervised"),
        (SettingKind::Unsupervised, "unsupervised"),
    ] {
        if row_wanted(row) {
            for &t in &cfg.ts {
                for &r in &cfg.rs {
                    panels.push((kind, cfg.alphas[0], r, t));
                }
            }
        }
    }
    if panels.is_empty() {
        bail!("panel filter matched nothing (storing|supervised|unsupervised)");
    }
    let rng = RngSpec::new(cfg.seed, 0);
    for (idx, &(kind, alpha, r, t)) in panels.iter().enumerate() {
        let setting = ModelSetting::new(kind, alpha, r, if kind == SettingKind::BasicStoring { 1 } else { cfg.m })?;
        let law = law_for(&setting, t)?;
        let report = simulate::empirical_spectrum_histogram(
            &setting,
            cfg.n,
            t,
            &law,
            60,
            1e-6,
            &rng.substream(idx as u64),
        )?;
        for &(lo, hi, sim_density) in &report.bins {
            let center = 0.5 * (lo + hi);
            let theory = law.bulk_mass() * dreaming_hopfield::spectral::bulk_density(&law, center);
            w.write_record([
                kind.to_string(),
                fmt(alpha),
                fmt(r),
                fmt(t),
                fmt(center),
                fmt(theory),
                fmt(sim_density),
                fmt(law.peak()),
                fmt(law.peak_mass()),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![name])
}

/// Squared error vs r: exact big-data curves and finite-M markers.
fn fig2(cfg: &ReproduceConfig, out_dir: &Path) -> Result<Vec<String>> {
    let theory_name = "fig2_theory.csv".to_string();
    let sim_name = "fig2_sim.csv".to_string();
    let quad = QuadSpec::default();
    let kinds = [SettingKind::Supervised, SettingKind::Unsupervised];

    let mut wt = csv_writer(
        &out_dir.join(&theory_name),
        &["setting", "alpha", "t", "r", "se_theory"],
    )?;
    for kind in kinds {
        for &alpha in &cfg.alphas {
            for &t in &cfg.ts {
                for r in grid(0.02, 1.0, 0.02) {
                    let se = se_theory(kind, alpha, r, t, &quad)?;
                    wt.write_record([
                        kind.to_string(),
                        fmt(alpha),
                        fmt(t),
                        fmt(r),
                        fmt(se),
                    ])?;
                }
            }
        }
    }
    wt.flush()?;

    let m_grid = [50usize, 100, 200];
    let mut ws = csv_writer(
        &out_dir.join(&sim_name),
        &[
            "setting",
            "alpha",
            "t",
            "m",
            "r",
            "se_theory",
            "se_sim_mean",
            "se_sim_stderr",
        ],
    )?;
    let base = RngSpec::new(cfg.seed, 1);
    let mut point = 0u64;
    for kind in kinds {
        for &alpha in &cfg.alphas {
            for &t in &cfg.ts {
                for &m in &m_grid {
                    for &r in &cfg.rs {
                        point += 1;
                        let point_rng = base.substream(point);
                        let p = ModelSetting::new(kind, alpha, r, m)?.num_classes(cfg.n);
                        let samples: std::result::Result<Vec<f64>, dreaming_hopfield::Error> =
                            (0..cfg.trials)
                                .into_par_iter()
                                .map(|trial| {
                                    let rng = point_rng.substream(trial as u64);
                                    let gt =
                                        make_ground_truths(cfg.n, p, &rng.substream(1))?;
                                    let ex = make_examples(&gt, m, r, &rng.substream(2))?;
                                    se_empirical(&gt, &ex, kind, t)
                                })
                                .collect();
                        let samples = samples?;
                        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
                        let var = if samples.len() > 1 {
                            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                                / (samples.len() - 1) as f64
                        } else {
                            0.0
                        };
                        let se_th = se_theory(kind, alpha, r, t, &quad)?;
                        ws.write_record([
                            kind.to_string(),
                            fmt(alpha),
                            fmt(t),
                            m.to_string(),
                            fmt(r),
                            fmt(se_th),
                            fmt(mean),
                            fmt((var / samples.len() as f64).sqrt()),
                        ])?;
                    }
                }
            }
        }
    }
    ws.flush()?;
    Ok(vec![theory_name, sim_name])
}

/// Aggregate of simulated probes at one (t, x) cell.
struct CellStat {
    m0: f64,
    m1: f64,
    m1_sq: f64,
}

/// Stability and ball-probe attractiveness in the basic storing setting.
fn fig3(cfg: &ReproduceConfig, out_dir: &Path) -> Result<Vec<String>> {
    let quad = QuadSpec::default();
    let theory_name = "fig3_theory.csv".to_string();
    let sim_name = "fig3_sim.csv".to_string();
    let want = |p: &str| cfg.panel.as_deref().is_none_or(|f| f == p);

    let mut wt = csv_writer(
        &out_dir.join(&theory_name),
        &["panel", "alpha", "t", "x", "m1_theory", "ga_bound"],
    )?;
    if want("stability") {
        for &t in &cfg.ts {
            for alpha in grid(0.02, 1.0, 0.02) {
                let pair = moments(&RetrievalScenario::storing_stability(alpha, t)?, &quad)?;
                let m1 = m1_theory(&pair).m1;
                wt.write_record([
                    "stability".into(),
                    fmt(alpha),
                    fmt(t),
                    fmt(alpha),
                    fmt(m1),
                    fmt(0.0),
                ])?;
            }
        }
    }
    if want("attractiveness") {
        for &alpha in &cfg.alphas {
            for &t in &cfg.ts {
                let curve = predict_curve(
                    CurveFamily::StoringAttractiveness,
                    alpha,
                    t,
                    &grid(0.02, 1.0, 0.02),
                    &quad,
                )?;
                for pt in curve {
                    wt.write_record([
                        "attractiveness".into(),
                        fmt(alpha),
                        fmt(t),
                        fmt(pt.x),
                        fmt(pt.m1_theory),
                        fmt(pt.ga_bound),
                    ])?;
                }
            }
        }
    }
    wt.flush()?;

    let mut ws = csv_writer(
        &out_dir.join(&sim_name),
        &[
            "panel",
            "alpha",
            "t",
            "x",
            "m0_mean",
            "m1_mean",
            "m1_stderr",
            "m1_theory",
            "ga_bound",
        ],
    )?;
    let base = RngSpec::new(cfg.seed, 2);
    if want("stability") {
        // Stability simulates at a reduced default N; the alpha sweep up to
        // 0.9 factors a P x P correlation per realization.
        let n = cfg.n.min(1000);
        for (ai, &alpha) in cfg.stability_alphas.iter().enumerate() {
            let setting = ModelSetting::storing(alpha)?;
            let cells = sweep_datasets(
                &setting,
                n,
                cfg.trials,
                cfg.probes,
                &cfg.ts,
                &[1.0],
                ProbeKind::Ball { p: 1.0 },
                &base.substream(ai as u64),
            )?;
            for (ti, &t) in cfg.ts.iter().enumerate() {
                let stat = &cells[ti][0];
                let pair = moments(&RetrievalScenario::storing_stability(alpha, t)?, &quad)?;
                ws.write_record([
                    "stability".into(),
                    fmt(alpha),
                    fmt(t),
                    fmt(alpha),
                    fmt(stat.m0),
                    fmt(stat.m1),
                    fmt(stat.m1_sq),
                    fmt(m1_theory(&pair).m1),
                    fmt(0.0),
                ])?;
            }
        }
    }
    if want("attractiveness") {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let setting = ModelSetting::storing(alpha)?;
            let cells = sweep_datasets(
                &setting,
                cfg.n,
                cfg.trials,
                cfg.probes,
                &cfg.ts,
                &cfg.xs,
                ProbeKind::Ball { p: f64::NAN }, // placeholder; xs supply p
                &base.substream(1000 + ai as u64),
            )?;
            for (ti, &t) in cfg.ts.iter().enumerate() {
                for (xi, &p) in cfg.xs.iter().enumerate() {
                    let stat = &cells[ti][xi];
                    let pair = moments(
                        &RetrievalScenario::storing_attractiveness(alpha, t, p)?,
                        &quad,
                    )?;
                    let law = law_for(&setting, t)?;
                    ws.write_record([
                        "attractiveness".into(),
                        fmt(alpha),
                        fmt(t),
                        fmt(p),
                        fmt(stat.m0),
                        fmt(stat.m1),
                        fmt(stat.m1_sq),
                        fmt(m1_theory(&pair).m1),
                        fmt(ga_validity_bound(&law, p, &quad)?),
                    ])?;
                }
            }
        }
    }
    ws.flush()?;
    Ok(vec![theory_name, sim_name])
}

/// Ground-truth attractiveness from fresh testing examples.
fn fig4(cfg: &ReproduceConfig, out_dir: &Path) -> Result<Vec<String>> {
    let quad = QuadSpec::default();
    let theory_name = "fig4_theory.csv".to_string();
    let sim_name = "fig4_sim.csv".to_string();

    let mut wt = csv_writer(
        &out_dir.join(&theory_name),
        &["setting", "alpha", "t", "r", "m1_theory", "ga_bound"],
    )?;
    for (kind, family) in [
        (SettingKind::Supervised, CurveFamily::SupervisedAttractiveness),
        (
            SettingKind::Unsupervised,
            CurveFamily::UnsupervisedAttractiveness,
        ),
    ] {
        for &alpha in &cfg.alphas {
            for &t in &cfg.ts {
                let curve = predict_curve(family, alpha, t, &grid(0.06, 1.0, 0.02), &quad)?;
                for pt in curve {
                    wt.write_record([
                        kind.to_string(),
                        fmt(alpha),
                        fmt(t),
                        fmt(pt.x),
                        fmt(pt.m1_theory),
                        fmt(pt.ga_bound),
                    ])?;
                }
            }
        }
    }
    wt.flush()?;

    let mut ws = csv_writer(
        &out_dir.join(&sim_name),
        &[
            "setting",
            "alpha",
            "t",
            "r",
            "m0_mean",
            "m1_mean",
            "m1_stderr",
            "m1_theory",
            "ga_bound",
        ],
    )?;
    let base = RngSpec::new(cfg.seed, 3);
    let mut cell_id = 0u64;
    for kind in [SettingKind::Supervised, SettingKind::Unsupervised] {
        for &alpha in &cfg.alphas {
            for &r in &cfg.rs {
                cell_id += 1;
                let setting = ModelSetting::new(kind, alpha, r, cfg.m)?;
                let cells = sweep_datasets(
                    &setting,
                    cfg.n,
                    cfg.trials,
                    cfg.probes,
                    &cfg.ts,
                    &[r],
                    ProbeKind::FreshExample,
                    &base.substream(cell_id),
                )?;
                for (ti, &t) in cfg.ts.iter().enumerate() {
                    let stat = &cells[ti][0];
                    let scenario = match kind {
                        SettingKind::Supervised => {
                            RetrievalScenario::supervised_attractiveness(alpha, r, t)?
                        }
                        _ => RetrievalScenario::unsupervised_attractiveness(alpha, r, t)?,
                    };
                    let pair = moments(&scenario, &quad)?;
                    ws.write_record([
                        kind.to_string(),
                        fmt(alpha),
                        fmt(t),
                        fmt(r),
                        fmt(stat.m0),
                        fmt(stat.m1),
                        fmt(stat.m1_sq),
                        fmt(m1_theory(&pair).m1),
                        fmt(ga_validity_bound(scenario.law(), r, &quad)?),
                    ])?;
                }
            }
        }
    }
    ws.flush()?;
    Ok(vec![theory_name, sim_name])
}

/// Run `datasets` realizations, probing every `(t, x)` cell on the shared
/// factorization. Returns per-cell means with the dataset-spread stderr in
/// `m1_sq`.
#[allow(clippy::too_many_arguments)]
fn sweep_datasets(
    setting: &ModelSetting,
    n: usize,
    datasets: usize,
    probes: usize,
    ts: &[f64],
    xs: &[f64],
    probe: ProbeKind,
    rng: &RngSpec,
) -> Result<Vec<Vec<CellStat>>> {
    let allow_flow = ts.iter().any(|&t| t > 0.0);
    // per dataset -> per (t, x) -> (m0, m1) means over probes
    let per_dataset: std::result::Result<Vec<Vec<Vec<(f64, f64)>>>, dreaming_hopfield::Error> =
        (0..datasets)
            .into_par_iter()
            .map(|d| {
                let dataset_rng = rng.substream(d as u64);
                let trial = PreparedTrial::prepare(setting, n, allow_flow, &dataset_rng)?;
                let mut cells = Vec::with_capacity(ts.len());
                for &t in ts {
                    let mut row = Vec::with_capacity(xs.len());
                    for (xi, &x) in xs.iter().enumerate() {
                        let kind = match probe {
                            ProbeKind::Ball { .. } => ProbeKind::Ball { p: x },
                            ProbeKind::FreshExample => ProbeKind::FreshExample,
                        };
                        let (mut m0, mut m1) = (0.0, 0.0);
                        for k in 0..probes {
                            // Distinct probe indices per x keep streams apart.
                            let res =
                                trial.probe(t, kind, xi * probes + k, &dataset_rng, None)?;
                            m0 += res.m0;
                            m1 += res.m1;
                        }
                        row.push((m0 / probes as f64, m1 / probes as f64));
                    }
                    cells.push(row);
                }
                Ok(cells)
            })
            .collect();
    let per_dataset = per_dataset?;
    let d = datasets as f64;
    let mut out = Vec::with_capacity(ts.len());
    for ti in 0..ts.len() {
        let mut row = Vec::with_capacity(xs.len());
        for xi in 0..xs.len() {
            let m0 = per_dataset.iter().map(|c| c[ti][xi].0).sum::<f64>() / d;
            let m1 = per_dataset.iter().map(|c| c[ti][xi].1).sum::<f64>() / d;
            let var = if datasets > 1 {
                per_dataset
                    .iter()
                    .map(|c| (c[ti][xi].1 - m1).powi(2))
                    .sum::<f64>()
                    / (d - 1.0)
            } else {
                0.0
            };
            row.push(CellStat {
                m0,
                m1,
                m1_sq: (var / d).sqrt(),
            });
        }
        out.push(row);
    }
    Ok(out)
}
