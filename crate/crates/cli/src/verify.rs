//! `hopdream verify` — built-in verification suite.
//!
//! `fast` runs the closed-form and identity checks in seconds; `full` adds
//! finite-size spectrum statistics and simulation spot checks at desk scale.
//! Any failed check makes the process exit nonzero.

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use dreaming_hopfield::coupling::{
    build_coupling, build_information_matrix, eigen_map, eigen_map_inverse, spectrum, DataSource,
};
use dreaming_hopfield::spectral::{f_unsupervised, integrate_bulk, QuadSpec};
use dreaming_hopfield::{
    integrate_dreaming_ode, integrate_full, law_for, m1_theory, make_ground_truths, moments,
    mp_moment_checks, run_retrieval_trials, se_theory, ModelSetting, PreparedTrial, ProbeKind,
    RetrievalScenario, RetrievalTrialParams, RngSpec, SettingKind,
};
use serde::Serialize;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Level {
    /// Closed forms, identities and normalization (seconds).
    Fast,
    /// Adds W1 spectrum checks and simulation spot reproductions (minutes).
    Full,
}

#[derive(Args)]
pub struct VerifyCmd {
    #[arg(long, value_enum, default_value_t = Level::Fast)]
    pub level: Level,
    /// Force a fixed quadrature rule with this many nodes (no refinement).
    /// Exists as a negative control: tiny rules must fail the checks.
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    /// Emit the report as JSON instead of text lines.
    #[arg(long, default_value_t = false)]
    pub json: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub details: String,
}

fn check(name: &str, value: f64, tolerance: f64, details: String) -> CheckReport {
    CheckReport {
        name: name.into(),
        passed: value.is_finite() && value <= tolerance,
        value,
        tolerance,
        details,
    }
}

pub fn run(cmd: VerifyCmd) -> Result<()> {
    let quad = match cmd.quad_nodes {
        Some(nodes) => QuadSpec::fixed(nodes),
        None => QuadSpec::default(),
    };
    let mut reports = fast_checks(&quad, cmd.seed)?;
    if matches!(cmd.level, Level::Full) {
        reports.extend(full_checks(&quad, cmd.seed)?);
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if cmd.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            println!(
                "[{}] {}: value {:.3e} (tol {:.3e}) {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.value,
                r.tolerance,
                r.details
            );
        }
        println!(
            "{} checks, {} failed",
            reports.len(),
            failed
        );
    }
    if failed > 0 {
        bail!("{failed} verification check(s) failed");
    }
    Ok(())
}

fn fast_checks(quad: &QuadSpec, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let rng = RngSpec::new(seed, 0);

    // Eigen-map round trip over random (lambda0, t) pairs.
    {
        let mut max_err = 0.0f64;
        let mut r = rng.rng();
        use rand::Rng;
        for _ in 0..1000 {
            let l0: f64 = r.random_range(0.0..3.0);
            let t: f64 = r.random_range(0.0..100.0);
            let l = eigen_map(l0, t);
            let back = eigen_map_inverse(l, t).unwrap_or(f64::NAN);
            max_err = max_err.max((back - l0).abs());
        }
        out.push(check(
            "eigen_map_round_trip",
            max_err,
            1e-12,
            "1000 random (lambda0, t) pairs".into(),
        ));
    }

    // Full-law normalization across settings and times.
    {
        let mut worst = 0.0f64;
        for alpha in [0.1, 0.3, 0.8] {
            for r in [0.3, 0.7, 1.0] {
                for t in [0.0, 1.0, 10.0] {
                    for setting in [
                        ModelSetting::storing(alpha)?,
                        ModelSetting::supervised(alpha, r, 10)?,
                        ModelSetting::unsupervised(alpha, r, 10)?,
                    ] {
                        let law = law_for(&setting, t)?;
                        let one = integrate_full(&law, |_| 1.0, quad)?;
                        worst = worst.max((one - 1.0).abs());
                    }
                }
            }
        }
        out.push(check(
            "law_normalization",
            worst,
            1e-10,
            "integrate_full(law, 1) over 3x3x3 grid, all settings".into(),
        ));
    }

    // Closed stability moments and the erf magnetization at t = 0.
    {
        let mut worst = 0.0f64;
        for alpha in [0.1, 0.2, 0.3] {
            let law = law_for(&ModelSetting::storing(alpha)?, 0.0)?;
            let report = mp_moment_checks(&law, quad)?;
            worst = worst
                .max((report.mu1 - (1.0 + alpha)).abs())
                .max((report.mu2 - (alpha * alpha + 3.0 * alpha + 1.0)).abs());
            let pair = moments(&RetrievalScenario::storing_stability(alpha, 0.0)?, quad)?;
            let m1 = m1_theory(&pair).m1;
            let closed = libm::erf((1.0 + alpha) / (2.0 * alpha).sqrt());
            worst = worst.max((m1 - closed).abs());
        }
        out.push(check(
            "closed_moments_t0",
            worst,
            1e-6,
            "mu1 = 1+alpha, mu2 = alpha^2+3alpha+1, erf magnetization".into(),
        ));
    }

    // Eigen-flow exactness on a small instance.
    {
        let gt = make_ground_truths(120, 24, &rng.substream(1))?;
        let info = build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)?;
        let e0 = spectrum(&build_coupling(&info, 0.0)?)?;
        let mut worst = 0.0f64;
        for t in [0.5, 1.0, 10.0] {
            let et = spectrum(&build_coupling(&info, t)?)?;
            for (&l0, &lt) in e0.iter().zip(&et) {
                worst = worst.max((eigen_map(l0, t) - lt).abs());
            }
        }
        out.push(check(
            "eigen_flow_exactness",
            worst,
            1e-8,
            "N=120, P=24, t in {0.5, 1, 10}".into(),
        ));
    }

    // Squared error: exact zero at r = 1 and the bulk + constant split.
    {
        let mut worst = 0.0f64;
        for t in [0.0, 10.0] {
            worst = worst.max(se_theory(SettingKind::Supervised, 0.1, 1.0, t, quad)?.abs());
            worst = worst.max(se_theory(SettingKind::Unsupervised, 0.1, 1.0, t, quad)?.abs());
        }
        let (alpha, r, t) = (0.2, 0.5, 3.0);
        let full = se_theory(SettingKind::Unsupervised, alpha, r, t, quad)?;
        let ground = law_for(&ModelSetting::storing(alpha)?, t)?;
        let bulk = integrate_bulk(
            &ground,
            |l| {
                let d = l - f_unsupervised(l, alpha, r, t);
                d * d
            },
            quad,
        )?;
        let c = alpha * (r * r - 1.0) * (t + 1.0) / (alpha * (r * r - 1.0) * t - 1.0);
        worst = worst.max((full - ((1.0 - alpha) * c * c + alpha * bulk)).abs());
        out.push(check(
            "squared_error_identities",
            worst,
            1e-10,
            "zero at r=1; peak term equals the closed constant".into(),
        ));
    }
    Ok(out)
}

fn full_checks(quad: &QuadSpec, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let rng = RngSpec::new(seed, 7);

    // W1 distance of the positive spectrum to the bulk law at N = 2000.
    {
        let setting = ModelSetting::storing(0.2)?;
        let trial = PreparedTrial::prepare(&setting, 2000, true, &rng.substream(1))?;
        let mut worst = 0.0f64;
        let mut zero_err = 0usize;
        for t in [0.0, 1.0, 10.0] {
            let evals = trial.eigenvalues_at(t)?;
            let zeros = evals.iter().filter(|l| l.abs() < 1e-10).count();
            zero_err = zero_err.max(zeros.abs_diff(2000 - 400));
            let bulk: Vec<f64> = evals.iter().copied().filter(|l| l.abs() > 1e-10).collect();
            let law = law_for(&setting, t)?;
            let w1 = dreaming_hopfield::simulate::wasserstein_to_bulk(&bulk, &law)?;
            worst = worst.max(w1);
        }
        out.push(check(
            "spectrum_w1_n2000",
            worst,
            0.05,
            format!("zero-count error {zero_err}; t in {{0,1,10}}"),
        ));
        out.push(check(
            "spectrum_zero_degeneracy",
            zero_err as f64,
            0.0,
            "exactly N-P eigenvalues below 1e-10".into(),
        ));
    }

    // RK4 flow agrees with the closed form.
    {
        let gt = make_ground_truths(100, 20, &rng.substream(2))?;
        let info = build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)?;
        let j0 = build_coupling(&info, 0.0)?;
        let ode = integrate_dreaming_ode(&j0, 2.0, 2000)?;
        let closed = build_coupling(&info, 2.0)?;
        let rel = (ode.matrix() - closed.matrix()).norm_l2() / closed.matrix().norm_l2();
        out.push(check(
            "ode_vs_closed_form",
            rel,
            1e-6,
            "N=100, P=20, RK4 with 2000 steps to t=2".into(),
        ));
    }

    // Simulation spot check: storing attractiveness at alpha = 0.1.
    {
        let params = RetrievalTrialParams {
            setting: ModelSetting::storing(0.1)?,
            n: 2000,
            t: 0.0,
            probe: ProbeKind::Ball { p: 0.8 },
            datasets: 20,
            probes_per_dataset: 5,
            zero_diagonal: false,
        };
        let agg = run_retrieval_trials(&params, &rng.substream(3))?;
        let pair = moments(&RetrievalScenario::storing_attractiveness(0.1, 0.0, 0.8)?, quad)?;
        let m1 = m1_theory(&pair).m1;
        out.push(check(
            "retrieval_spot_storing",
            (agg.m1_mean - m1).abs(),
            0.03,
            format!("sim {:.4} vs GA {:.4} at p=0.8", agg.m1_mean, m1),
        ));
    }

    // Unsupervised low bulk edge collapses onto alpha (1 - r^2).
    {
        let setting = ModelSetting::unsupervised(0.1, 0.6, 100)?;
        let trial = PreparedTrial::prepare(&setting, 500, true, &rng.substream(4))?;
        let evals = trial.eigenvalues_at(0.0)?;
        let low: f64 = evals[..450].iter().sum::<f64>() / 450.0;
        let predicted = 0.1 * (1.0 - 0.36);
        out.push(check(
            "unsupervised_peak_location",
            (low - predicted).abs() / predicted,
            0.1,
            format!("mean of lowest N-P eigenvalues {low:.4} vs {predicted:.4}"),
        ));
    }
    Ok(out)
}
