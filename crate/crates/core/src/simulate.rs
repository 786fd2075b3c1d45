//! Finite-size Monte Carlo counterparts of the theory.
//!
//! Everything here mirrors a prediction from [`crate::spectral`] or
//! [`crate::retrieval`]: empirical spectra against the limiting law,
//! finite-`M` squared errors against the big-data formula, and one-step
//! parallel dynamics against the Gaussian-approximation magnetization.
//!
//! Trials are independent tasks keyed by `(seed, trial index)`; datasets for
//! large runs are generated class-block by class-block so memory stays at one
//! `N x N` matrix (plus one block) per concurrent trial.

use crate::coupling::{
    build_coupling, build_information_matrix, CouplingMatrix, DataSource, InformationMatrix,
    SpectralCoupling,
};
use crate::data::{
    fill_rademacher, make_ground_truths, perturb_on_ball, BinaryConfig, ExampleSet,
    GroundTruthSet,
};
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::setting::{ModelSetting, SettingKind};
use crate::spectral::{bulk_quantile, SpectralLaw};
use faer::{Mat, Scale};
use rayon::prelude::*;
use serde::Serialize;

/// Anything that can produce the local field `J sigma`.
pub trait CouplingOp: Sync {
    fn num_neurons(&self) -> usize;
    fn local_field(&self, spins: &[i8]) -> Vec<f64>;
}

impl CouplingOp for CouplingMatrix {
    fn num_neurons(&self) -> usize {
        self.num_neurons()
    }

    fn local_field(&self, spins: &[i8]) -> Vec<f64> {
        self.apply_spins(spins)
    }
}

/// A factored coupling pinned to a dreaming time.
pub struct FlowedCoupling<'a> {
    pub coupling: &'a SpectralCoupling,
    pub t: f64,
}

impl CouplingOp for FlowedCoupling<'_> {
    fn num_neurons(&self) -> usize {
        self.coupling.num_neurons()
    }

    fn local_field(&self, spins: &[i8]) -> Vec<f64> {
        self.coupling.apply_spins_at(self.t, spins)
    }
}

/// `sign(0) -> +1`; a probability-zero event for continuous couplings, fixed
/// for reproducibility.
fn sign_spin(h: f64) -> i8 {
    if h >= 0.0 {
        1
    } else {
        -1
    }
}

/// One sweep of the deterministic parallel dynamics
/// `sigma' = sign(J sigma)`.
pub fn one_step(j: &impl CouplingOp, sigma0: &BinaryConfig) -> BinaryConfig {
    let h = j.local_field(sigma0.spins());
    BinaryConfig::from_spins(h.into_iter().map(sign_spin).collect())
        .expect("sign output is always +-1")
}

/// State after `n` sweeps of the parallel dynamics. Multi-step runs carry no
/// theoretical prediction in this crate; they are exploration output only.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub config: BinaryConfig,
    pub step: usize,
}

pub fn iterate_dynamics(
    j: &impl CouplingOp,
    sigma0: &BinaryConfig,
    steps: usize,
) -> DynamicsState {
    let mut config = sigma0.clone();
    for _ in 0..steps {
        config = one_step(j, &config);
    }
    DynamicsState {
        config,
        step: steps,
    }
}

/// Per-site stability `Delta_i = (J sigma)_i sigma_i`. All entries
/// nonnegative means `sigma` is a fixed point.
pub fn stability_field(j: &impl CouplingOp, sigma: &BinaryConfig) -> Vec<f64> {
    let h = j.local_field(sigma.spins());
    h.into_iter()
        .zip(sigma.spins())
        .map(|(hi, &s)| hi * s as f64)
        .collect()
}

/// Per-site attractiveness of `x` w.r.t. `sigma`:
/// `Delta_i = (J sigma)_i x_i`. Reduces to the stability at `x = sigma`.
pub fn attractiveness_field(
    j: &impl CouplingOp,
    x: &BinaryConfig,
    sigma: &BinaryConfig,
) -> Vec<f64> {
    assert_eq!(x.len(), sigma.len(), "probe/reference length mismatch");
    let h = j.local_field(sigma.spins());
    h.into_iter()
        .zip(x.spins())
        .map(|(hi, &xi)| hi * xi as f64)
        .collect()
}

/// Outcome of a single probe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrialResult {
    pub m0: f64,
    pub m1: f64,
    /// Raw moments of the per-site attractiveness field.
    pub delta_mean: f64,
    pub delta_second: f64,
    pub delta_third: f64,
}

fn run_probe(j: &impl CouplingOp, x: &BinaryConfig, sigma0: &BinaryConfig) -> TrialResult {
    let n = x.len() as f64;
    let h = j.local_field(sigma0.spins());
    let mut m1_acc = 0i64;
    let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
    for (hi, &xi) in h.iter().zip(x.spins()) {
        let delta = hi * xi as f64;
        d1 += delta;
        d2 += delta * delta;
        d3 += delta * delta * delta;
        m1_acc += (sign_spin(*hi) * xi) as i64;
    }
    TrialResult {
        m0: x.overlap(sigma0),
        m1: m1_acc as f64 / n,
        delta_mean: d1 / n,
        delta_second: d2 / n,
        delta_third: d3 / n,
    }
}

/// How the probe configuration is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProbeKind {
    /// Perturb a stored pattern on the Hamming ball of expected overlap `p`
    /// (basic storing).
    Ball { p: f64 },
    /// A fresh testing example `chi ⊙ zeta` with the dataset's quality `r`;
    /// drawn from an independent stream, never from the training set.
    FreshExample,
}

/// Parameters of a nested retrieval experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RetrievalTrialParams {
    pub setting: ModelSetting,
    pub n: usize,
    pub t: f64,
    pub probe: ProbeKind,
    /// Disorder (dataset) realizations.
    pub datasets: usize,
    /// Probe draws within each realization.
    pub probes_per_dataset: usize,
    /// Zero out self-interactions before the dynamics.
    pub zero_diagonal: bool,
}

/// Aggregate over datasets and probe draws, with both variance components of
/// the nested design (probes within datasets).
#[derive(Debug, Clone, Serialize)]
pub struct RetrievalAggregate {
    pub datasets: usize,
    pub probes_per_dataset: usize,
    pub m0_mean: f64,
    pub m1_mean: f64,
    /// Standard error of the grand mean, from the spread of dataset means.
    pub m1_stderr: f64,
    pub m0_stderr: f64,
    /// Variance of per-dataset means (disorder component).
    pub between_dataset_var: f64,
    /// Mean within-dataset variance of probe results.
    pub within_dataset_var: f64,
    /// Pooled raw moments of the attractiveness field.
    pub delta_mean: f64,
    pub delta_second: f64,
    /// Third centered moment derived from the pooled raw moments.
    pub delta_third_central: f64,
}

// Stream tags inside one dataset realization.
const TAG_GROUND_TRUTHS: u64 = 1;
const TAG_TRAINING: u64 = 2;
const TAG_PROBES: u64 = 3;

/// How a realization keeps its coupling.
enum TrialRep {
    /// Row matrix only; serves `t = 0` fields as `X^T (X sigma) / D`.
    HebbianRows { x: Mat<f64>, d_n: f64 },
    /// Dense Hebbian Gram; serves `t = 0` fields directly.
    HebbianGram { g: Mat<f64> },
    /// Eigen-factored; serves any `t`.
    Factored(SpectralCoupling),
}

/// One disorder realization, reusable across dreaming times and probes.
///
/// Preparing with `allow_flow = false` skips the eigendecomposition and can
/// only be probed at `t = 0`; with `allow_flow = true` the realization is
/// factored once and serves every `t`.
pub struct PreparedTrial {
    gt: GroundTruthSet,
    rep: TrialRep,
    setting: ModelSetting,
}

/// The local-field operator of a prepared realization at a fixed time.
pub struct PreparedOp<'a> {
    rep: &'a TrialRep,
    t: f64,
}

impl CouplingOp for PreparedOp<'_> {
    fn num_neurons(&self) -> usize {
        match self.rep {
            TrialRep::HebbianRows { x, .. } => x.ncols(),
            TrialRep::HebbianGram { g } => g.nrows(),
            TrialRep::Factored(sc) => sc.num_neurons(),
        }
    }

    fn local_field(&self, spins: &[i8]) -> Vec<f64> {
        match self.rep {
            TrialRep::HebbianRows { x, d_n } => {
                let v = faer::Col::from_fn(spins.len(), |i| spins[i] as f64);
                let proj = x.as_ref() * v;
                let h = Scale(1.0 / d_n) * (x.transpose() * proj);
                h.iter().copied().collect()
            }
            TrialRep::HebbianGram { g } => {
                let v = faer::Col::from_fn(spins.len(), |i| spins[i] as f64);
                let h = g.as_ref() * v;
                h.iter().copied().collect()
            }
            TrialRep::Factored(sc) => sc.apply_spins_at(self.t, spins),
        }
    }
}

impl PreparedTrial {
    /// Draw one dataset realization and set up its coupling. Large example
    /// sets are streamed class block by class block, so memory stays at one
    /// `N x N` matrix plus one block.
    pub fn prepare(
        setting: &ModelSetting,
        n: usize,
        allow_flow: bool,
        dataset_rng: &RngSpec,
    ) -> Result<Self> {
        let p = setting.num_classes(n);
        let gt = make_ground_truths(n, p, &dataset_rng.substream(TAG_GROUND_TRUTHS))?;
        let train_rng = dataset_rng.substream(TAG_TRAINING);
        let rep = match setting.kind {
            SettingKind::BasicStoring | SettingKind::Supervised => {
                let x = if setting.kind == SettingKind::BasicStoring {
                    Mat::from_fn(p, n, |mu, i| gt.pattern(mu)[i] as f64)
                } else {
                    supervised_mean_matrix(&gt, setting.m, setting.r, &train_rng)
                };
                if allow_flow {
                    let info = InformationMatrix::from_parts(x, n as f64, *setting)?;
                    TrialRep::Factored(SpectralCoupling::from_information(&info)?)
                } else {
                    TrialRep::HebbianRows { x, d_n: n as f64 }
                }
            }
            SettingKind::Unsupervised => {
                let g = unsupervised_gram(&gt, setting.m, setting.r, &train_rng);
                if allow_flow {
                    TrialRep::Factored(SpectralCoupling::from_gram(g, *setting)?)
                } else {
                    TrialRep::HebbianGram { g }
                }
            }
        };
        Ok(Self {
            gt,
            rep,
            setting: *setting,
        })
    }

    pub fn ground_truths(&self) -> &GroundTruthSet {
        &self.gt
    }

    pub fn setting(&self) -> &ModelSetting {
        &self.setting
    }

    /// Field operator at time `t` (only `t = 0` unless prepared with flow).
    pub fn op_at(&self, t: f64) -> Result<PreparedOp<'_>> {
        match (&self.rep, t) {
            (TrialRep::Factored(_), t) if t >= 0.0 => Ok(PreparedOp { rep: &self.rep, t }),
            (_, 0.0) => Ok(PreparedOp {
                rep: &self.rep,
                t: 0.0,
            }),
            _ => Err(Error::ParameterDomain {
                name: "t",
                value: t,
                domain: "prepare with allow_flow for t > 0",
            }),
        }
    }

    /// Diagonal of `J(t)`, for the self-interaction-free variant.
    pub fn diagonal_at(&self, t: f64) -> Result<Vec<f64>> {
        match &self.rep {
            TrialRep::HebbianRows { x, d_n } => {
                self.op_at(t)?;
                let (k, n) = (x.nrows(), x.ncols());
                Ok((0..n)
                    .map(|i| (0..k).map(|r| x[(r, i)] * x[(r, i)]).sum::<f64>() / d_n)
                    .collect())
            }
            TrialRep::HebbianGram { g } => {
                self.op_at(t)?;
                Ok((0..g.nrows()).map(|i| g[(i, i)]).collect())
            }
            TrialRep::Factored(sc) => {
                let dense = sc.coupling_at(t)?;
                Ok((0..dense.num_neurons())
                    .map(|i| dense.matrix()[(i, i)])
                    .collect())
            }
        }
    }

    /// Spectrum of `J(t)` for this realization (needs flow preparation).
    pub fn eigenvalues_at(&self, t: f64) -> Result<Vec<f64>> {
        match &self.rep {
            TrialRep::Factored(sc) => Ok(sc.eigenvalues_at(t)),
            TrialRep::HebbianGram { g } => {
                self.op_at(t)?;
                let sc = SpectralCoupling::from_gram(g.clone(), self.setting)?;
                Ok(sc.eigenvalues_at(0.0))
            }
            TrialRep::HebbianRows { x, d_n } => {
                self.op_at(t)?;
                let info = InformationMatrix::from_parts(x.clone(), *d_n, self.setting)?;
                let sc = SpectralCoupling::from_information(&info)?;
                Ok(sc.eigenvalues_at(0.0))
            }
        }
    }

    /// Run probe number `probe_idx` at time `t`. The reference cycles
    /// through the stored classes; the perturbation stream is derived from
    /// this realization's probe stream and the probe index, so results do
    /// not depend on evaluation order.
    pub fn probe(
        &self,
        t: f64,
        probe: ProbeKind,
        probe_idx: usize,
        dataset_rng: &RngSpec,
        zero_diagonal: Option<&[f64]>,
    ) -> Result<TrialResult> {
        let op = self.op_at(t)?;
        let p = self.gt.num_patterns();
        let reference = self.gt.pattern_config(probe_idx % p);
        let local = dataset_rng
            .substream(TAG_PROBES)
            .substream(probe_idx as u64);
        let overlap = match probe {
            ProbeKind::Ball { p: overlap } => {
                if self.setting.kind != SettingKind::BasicStoring {
                    return Err(Error::ShapeMismatch(
                        "ball probes target stored patterns; use FreshExample for \
                         example-built couplings"
                            .into(),
                    ));
                }
                overlap
            }
            ProbeKind::FreshExample => self.setting.r,
        };
        let sigma0 = perturb_on_ball(&reference, overlap, &local)?;
        Ok(match zero_diagonal {
            Some(diag) => {
                let free = DiagonalFree {
                    inner: &op,
                    diag,
                };
                run_probe(&free, &reference, &sigma0)
            }
            None => run_probe(&op, &reference, &sigma0),
        })
    }
}

struct DiagonalFree<'a, O: CouplingOp> {
    inner: &'a O,
    diag: &'a [f64],
}

impl<O: CouplingOp> CouplingOp for DiagonalFree<'_, O> {
    fn num_neurons(&self) -> usize {
        self.inner.num_neurons()
    }

    fn local_field(&self, spins: &[i8]) -> Vec<f64> {
        let mut h = self.inner.local_field(spins);
        for ((hi, &d), &s) in h.iter_mut().zip(self.diag).zip(spins) {
            *hi -= d * s as f64;
        }
        h
    }
}

/// Empirical-mean information rows `(1/M) sum_A chi ⊙ zeta`, streamed.
///
/// Uses the same `(class, example)` stream layout as
/// [`crate::data::make_examples`], so it reproduces
/// `build_information_matrix` on the materialized tensor bit for bit.
pub fn supervised_mean_matrix(gt: &GroundTruthSet, m: usize, r: f64, rng: &RngSpec) -> Mat<f64> {
    let (p, n) = (gt.num_patterns(), gt.num_neurons());
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p);
    (0..p)
        .into_par_iter()
        .map(|mu| {
            let mut acc = vec![0.0f64; n];
            let mut row = vec![0i8; n];
            for a in 0..m {
                let mut local = rng.substream2(mu as u64, a as u64).rng();
                fill_rademacher(&mut row, r, &mut local);
                for (s, &chi) in acc.iter_mut().zip(&row) {
                    *s += chi as f64;
                }
            }
            let zeta = gt.pattern(mu);
            for (s, &z) in acc.iter_mut().zip(zeta) {
                *s *= z as f64 / m as f64;
            }
            acc
        })
        .collect_into_vec(&mut rows);
    Mat::from_fn(p, n, |mu, i| rows[mu][i])
}

/// Hebbian Gram `J(0) = (1/(N M)) X^T X` for the unsupervised setting,
/// accumulated class block by class block so `X` is never materialized.
pub fn unsupervised_gram(gt: &GroundTruthSet, m: usize, r: f64, rng: &RngSpec) -> Mat<f64> {
    let (p, n) = (gt.num_patterns(), gt.num_neurons());
    let mut g = Mat::<f64>::zeros(n, n);
    let mut block = Mat::<f64>::zeros(m, n);
    let mut row = vec![0i8; n];
    for mu in 0..p {
        let zeta = gt.pattern(mu);
        for a in 0..m {
            let mut local = rng.substream2(mu as u64, a as u64).rng();
            fill_rademacher(&mut row, r, &mut local);
            for i in 0..n {
                block[(a, i)] = (row[i] * zeta[i]) as f64;
            }
        }
        g += block.transpose() * &block;
    }
    let g = Scale(1.0 / (n * m) as f64) * g;
    let gt_ = g.transpose().to_owned();
    Scale(0.5) * (g + gt_)
}

/// Run the nested retrieval experiment: `datasets` disorder realizations,
/// each probed `probes_per_dataset` times from independent streams.
pub fn run_retrieval_trials(
    params: &RetrievalTrialParams,
    rng: &RngSpec,
) -> Result<RetrievalAggregate> {
    if params.datasets == 0 || params.probes_per_dataset == 0 {
        return Err(Error::ParameterDomain {
            name: "trials",
            value: 0.0,
            domain: ">= 1 dataset and probe",
        });
    }
    if let (ProbeKind::Ball { .. }, kind) = (params.probe, params.setting.kind) {
        if kind != SettingKind::BasicStoring {
            return Err(Error::ShapeMismatch(
                "ball probes target stored patterns; use FreshExample for example-built couplings"
                    .into(),
            ));
        }
    }
    let summaries: Result<Vec<DatasetSummary>> = (0..params.datasets)
        .into_par_iter()
        .map(|d| run_dataset(params, &rng.substream(d as u64)))
        .collect();
    let summaries = summaries?;
    Ok(aggregate(&summaries, params))
}

struct DatasetSummary {
    m0_mean: f64,
    m1_mean: f64,
    m1_var: f64,
    delta_mean: f64,
    delta_second: f64,
    delta_third: f64,
}

fn run_dataset(params: &RetrievalTrialParams, dataset_rng: &RngSpec) -> Result<DatasetSummary> {
    let trial = PreparedTrial::prepare(&params.setting, params.n, params.t > 0.0, dataset_rng)?;
    let diag = if params.zero_diagonal {
        Some(trial.diagonal_at(params.t)?)
    } else {
        None
    };
    let mut results = Vec::with_capacity(params.probes_per_dataset);
    for k in 0..params.probes_per_dataset {
        results.push(trial.probe(params.t, params.probe, k, dataset_rng, diag.as_deref())?);
    }
    let nf = results.len() as f64;
    let m1_mean = results.iter().map(|r| r.m1).sum::<f64>() / nf;
    let m1_var = results.iter().map(|r| (r.m1 - m1_mean).powi(2)).sum::<f64>() / nf;
    Ok(DatasetSummary {
        m0_mean: results.iter().map(|r| r.m0).sum::<f64>() / nf,
        m1_mean,
        m1_var,
        delta_mean: results.iter().map(|r| r.delta_mean).sum::<f64>() / nf,
        delta_second: results.iter().map(|r| r.delta_second).sum::<f64>() / nf,
        delta_third: results.iter().map(|r| r.delta_third).sum::<f64>() / nf,
    })
}

fn aggregate(summaries: &[DatasetSummary], params: &RetrievalTrialParams) -> RetrievalAggregate {
    let d = summaries.len() as f64;
    let m0_mean = summaries.iter().map(|s| s.m0_mean).sum::<f64>() / d;
    let m1_mean = summaries.iter().map(|s| s.m1_mean).sum::<f64>() / d;
    let between = if summaries.len() > 1 {
        summaries
            .iter()
            .map(|s| (s.m1_mean - m1_mean).powi(2))
            .sum::<f64>()
            / (d - 1.0)
    } else {
        0.0
    };
    let within = summaries.iter().map(|s| s.m1_var).sum::<f64>() / d;
    let m0_var = if summaries.len() > 1 {
        summaries
            .iter()
            .map(|s| (s.m0_mean - m0_mean).powi(2))
            .sum::<f64>()
            / (d - 1.0)
    } else {
        0.0
    };
    let d1 = summaries.iter().map(|s| s.delta_mean).sum::<f64>() / d;
    let d2 = summaries.iter().map(|s| s.delta_second).sum::<f64>() / d;
    let d3 = summaries.iter().map(|s| s.delta_third).sum::<f64>() / d;
    RetrievalAggregate {
        datasets: summaries.len(),
        probes_per_dataset: params.probes_per_dataset,
        m0_mean,
        m1_mean,
        m1_stderr: (between / d).sqrt(),
        m0_stderr: (m0_var / d).sqrt(),
        between_dataset_var: between,
        within_dataset_var: within,
        delta_mean: d1,
        delta_second: d2,
        delta_third_central: d3 - 3.0 * d2 * d1 + 2.0 * d1 * d1 * d1,
    }
}

/// Hebbian Gram `(1/(N M)) X^T X` from a materialized example set, one class
/// block at a time (the `P M x N` float matrix is never formed).
pub fn gram_from_examples(ex: &ExampleSet) -> Mat<f64> {
    let (p, m, n) = (ex.num_classes(), ex.per_class(), ex.num_neurons());
    let mut g = Mat::<f64>::zeros(n, n);
    let mut block = Mat::<f64>::zeros(m, n);
    for mu in 0..p {
        for a in 0..m {
            let row = ex.example(mu, a);
            for i in 0..n {
                block[(a, i)] = row[i] as f64;
            }
        }
        g += block.transpose() * &block;
    }
    let g = Scale(1.0 / (n * m) as f64) * g;
    let gt = g.transpose().to_owned();
    Scale(0.5) * (g + gt)
}

/// Finite-`M` squared error `(1/N) ||J_zeta(t) - J_{s,u}(t)||_F^2` from a
/// concrete dataset.
pub fn se_empirical(
    gt: &GroundTruthSet,
    ex: &ExampleSet,
    kind: SettingKind,
    t: f64,
) -> Result<f64> {
    if kind == SettingKind::BasicStoring {
        return Err(Error::ParameterDomain {
            name: "setting",
            value: 0.0,
            domain: "supervised or unsupervised",
        });
    }
    if gt.num_neurons() != ex.num_neurons() || gt.num_patterns() != ex.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "ground truths {}x{} vs examples {}x{}x{}",
            gt.num_patterns(),
            gt.num_neurons(),
            ex.num_classes(),
            ex.per_class(),
            ex.num_neurons()
        )));
    }
    let info_gt = build_information_matrix(DataSource::Patterns(gt), SettingKind::BasicStoring)?;
    let j_gt = build_coupling(&info_gt, t)?;
    let j_ex = match kind {
        SettingKind::Supervised => {
            let info_ex = build_information_matrix(DataSource::Examples(ex), kind)?;
            build_coupling(&info_ex, t)?
        }
        _ => {
            // Gram route: same coupling, bounded memory for large P*M.
            let setting =
                ModelSetting::unsupervised(gt.load(), ex.quality(), ex.per_class())?;
            let g = gram_from_examples(ex);
            if t == 0.0 {
                CouplingMatrix::from_matrix(g, 0.0, setting)?
            } else {
                SpectralCoupling::from_gram(g, setting)?.coupling_at(t)?
            }
        }
    };
    Ok(j_gt.squared_error_to(&j_ex))
}

/// Histogram plus law-comparison summary of one empirical spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// `(lo, hi, density)` per bin over the full eigenvalue range.
    pub bins: Vec<(f64, f64, f64)>,
    pub eigenvalues: Vec<f64>,
    pub predicted_peak: f64,
    pub peak_tol: f64,
    /// Fraction of eigenvalues within `peak_tol` of the predicted peak.
    pub peak_mass_estimate: f64,
    /// Wasserstein-1 distance of the non-peak eigenvalues to the bulk law.
    pub w1_bulk: f64,
}

/// Eigendecompose one realization and compare with the limiting law.
pub fn empirical_spectrum_histogram(
    setting: &ModelSetting,
    n: usize,
    t: f64,
    law: &SpectralLaw,
    num_bins: usize,
    peak_tol: f64,
    rng: &RngSpec,
) -> Result<SpectrumReport> {
    let trial = PreparedTrial::prepare(setting, n, true, rng)?;
    let eigenvalues = trial.eigenvalues_at(t)?;
    spectrum_report(&eigenvalues, law, num_bins, peak_tol)
}

/// Build the report from an already-computed (ascending) spectrum.
pub fn spectrum_report(
    eigenvalues: &[f64],
    law: &SpectralLaw,
    num_bins: usize,
    peak_tol: f64,
) -> Result<SpectrumReport> {
    let predicted_peak = law.peak();
    let bulk: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|l| (l - predicted_peak).abs() > peak_tol)
        .collect();
    let peak_mass_estimate = 1.0 - bulk.len() as f64 / eigenvalues.len() as f64;
    let w1_bulk = wasserstein_to_bulk(&bulk, law)?;
    Ok(SpectrumReport {
        bins: histogram(eigenvalues, num_bins),
        eigenvalues: eigenvalues.to_vec(),
        predicted_peak,
        peak_tol,
        peak_mass_estimate,
        w1_bulk,
    })
}

/// Quantile-coupling W1 distance between a sorted sample and the bulk law:
/// `(1/K) sum_k |l_(k) - Q((k - 1/2)/K)|`.
pub fn wasserstein_to_bulk(sorted_bulk: &[f64], law: &SpectralLaw) -> Result<f64> {
    if sorted_bulk.is_empty() {
        return Ok(f64::NAN);
    }
    let k = sorted_bulk.len();
    let mut acc = 0.0;
    for (i, &l) in sorted_bulk.iter().enumerate() {
        let q = bulk_quantile(law, (i as f64 + 0.5) / k as f64)?;
        acc += (l - q).abs();
    }
    Ok(acc / k as f64)
}

/// Plain density histogram (integrates to 1 over the sample range).
pub fn histogram(values: &[f64], num_bins: usize) -> Vec<(f64, f64, f64)> {
    assert!(num_bins >= 1 && !values.is_empty());
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / num_bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; num_bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(num_bins - 1);
        counts[idx] += 1;
    }
    let norm = 1.0 / (values.len() as f64 * width);
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            (
                lo + i as f64 * width,
                lo + (i + 1) as f64 * width,
                c as f64 * norm,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_examples;
    use crate::spectral::law_for;
    use approx::assert_abs_diff_eq;
    use faer::Mat;

    fn spec() -> RngSpec {
        RngSpec::new(99, 0)
    }

    fn identity_coupling(n: usize) -> CouplingMatrix {
        CouplingMatrix::from_matrix(
            Mat::identity(n, n),
            0.0,
            ModelSetting::storing(0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn one_step_identity_fixes_everything() {
        let j = identity_coupling(10);
        let sigma = crate::data::sample_rademacher(0.0, 10, &spec()).unwrap();
        assert_eq!(one_step(&j, &sigma), sigma);
        let stab = stability_field(&j, &sigma);
        for d in stab {
            assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn flip_fraction_identity() {
        // (1/2)[1 - (1/N) sum sigma1 sigma0] equals the Hamming fraction.
        let gt = make_ground_truths(60, 12, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let j = build_coupling(&info, 0.0).unwrap();
        let sigma0 = crate::data::sample_rademacher(0.0, 60, &spec().substream(5)).unwrap();
        let sigma1 = one_step(&j, &sigma0);
        let flip_frac = sigma0.hamming(&sigma1) as f64 / 60.0;
        assert_abs_diff_eq!(
            0.5 * (1.0 - sigma0.overlap(&sigma1)),
            flip_frac,
            epsilon = 1e-14
        );
    }

    #[test]
    fn attractiveness_reduces_to_stability() {
        let gt = make_ground_truths(40, 8, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let j = build_coupling(&info, 1.0).unwrap();
        let sigma = gt.pattern_config(0);
        let a = attractiveness_field(&j, &sigma, &sigma);
        let s = stability_field(&j, &sigma);
        assert_eq!(a, s);
    }

    #[test]
    fn attractiveness_sign_average_is_m1() {
        let gt = make_ground_truths(50, 10, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let j = build_coupling(&info, 0.0).unwrap();
        let x = gt.pattern_config(3);
        let sigma = perturb_on_ball(&x, 0.6, &spec().substream(9)).unwrap();
        let delta = attractiveness_field(&j, &x, &sigma);
        let sign_avg: f64 =
            delta.iter().map(|&d| sign_spin(d) as f64).sum::<f64>() / delta.len() as f64;
        let m1 = x.overlap(&one_step(&j, &sigma));
        assert_abs_diff_eq!(sign_avg, m1, epsilon = 1e-14);
    }

    #[test]
    fn nonnegative_stability_implies_fixed_point() {
        let gt = make_ground_truths(30, 6, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        // Projector: patterns are exact fixed points with Delta_i = 1.
        let j = build_coupling(&info, f64::INFINITY).unwrap();
        for mu in 0..6 {
            let sigma = gt.pattern_config(mu);
            let stab = stability_field(&j, &sigma);
            assert!(stab.iter().all(|&d| d >= 0.0));
            assert_eq!(one_step(&j, &sigma), sigma);
        }
    }

    #[test]
    fn below_capacity_pattern_is_nearly_fixed() {
        let (n, p) = (500, 25);
        let gt = make_ground_truths(n, p, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let j = build_coupling(&info, 0.0).unwrap();
        let xi = gt.pattern_config(0);
        let m1 = xi.overlap(&one_step(&j, &xi));
        assert!(m1 >= 0.99, "m1 = {m1}");
    }

    #[test]
    fn empirical_stability_mean_matches_theory_at_t0() {
        let (n, p) = (500, 25);
        let alpha = p as f64 / n as f64;
        let gt = make_ground_truths(n, p, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let j = build_coupling(&info, 0.0).unwrap();
        let mut acc = 0.0;
        for mu in 0..p {
            let sigma = gt.pattern_config(mu);
            acc += stability_field(&j, &sigma).iter().sum::<f64>() / n as f64;
        }
        let mean = acc / p as f64;
        let tol = 3.0 / ((n * p) as f64).sqrt();
        assert!(
            (mean - (1.0 + alpha)).abs() < tol,
            "mean {mean} vs {} +- {tol}",
            1.0 + alpha
        );
    }

    #[test]
    fn zero_diagonal_removes_self_interaction() {
        let setting = ModelSetting::storing(0.2).unwrap();
        let trial = PreparedTrial::prepare(&setting, 80, false, &spec()).unwrap();
        let gt = trial.ground_truths().clone();
        let diag = trial.diagonal_at(0.0).unwrap();
        // Storing at t = 0: J_ii = P/N = alpha exactly.
        for d in &diag {
            assert_abs_diff_eq!(*d, 0.2, epsilon = 1e-12);
        }
        let sigma = gt.pattern_config(0);
        let op = trial.op_at(0.0).unwrap();
        let with = stability_field(&op, &sigma);
        let free = stability_field(
            &DiagonalFree {
                inner: &op,
                diag: &diag,
            },
            &sigma,
        );
        for (w, f) in with.iter().zip(&free) {
            assert_abs_diff_eq!(w - f, 0.2, epsilon = 1e-12);
        }
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let j = build_coupling(&info, 0.0).unwrap();
        for i in 0..80 {
            assert_abs_diff_eq!(j.matrix()[(i, i)], diag[i], epsilon = 1e-13);
        }
        // Flow preparation must be requested for t > 0.
        let frozen = PreparedTrial::prepare(&setting, 40, false, &spec()).unwrap();
        assert!(frozen.op_at(1.0).is_err());
        let flowed = PreparedTrial::prepare(&setting, 40, true, &spec()).unwrap();
        assert!(flowed.op_at(1.0).is_ok());
    }

    #[test]
    fn streamed_supervised_matrix_matches_tensor_path() {
        let gt = make_ground_truths(24, 4, &spec()).unwrap();
        let rng = spec().substream(77);
        let ex = make_examples(&gt, 6, 0.4, &rng).unwrap();
        let info =
            build_information_matrix(DataSource::Examples(&ex), SettingKind::Supervised).unwrap();
        let streamed = supervised_mean_matrix(&gt, 6, 0.4, &rng);
        assert!((info.x() - &streamed).norm_max() == 0.0, "paths must agree bit for bit");
    }

    #[test]
    fn streamed_unsupervised_gram_matches_tensor_path() {
        let gt = make_ground_truths(18, 3, &spec()).unwrap();
        let rng = spec().substream(78);
        let ex = make_examples(&gt, 5, 0.6, &rng).unwrap();
        let info =
            build_information_matrix(DataSource::Examples(&ex), SettingKind::Unsupervised)
                .unwrap();
        let j0 = build_coupling(&info, 0.0).unwrap();
        let g = unsupervised_gram(&gt, 5, 0.6, &rng);
        assert!((j0.matrix() - &g).norm_max() < 1e-13);
    }

    #[test]
    fn se_is_zero_for_perfect_supervised_examples() {
        let gt = make_ground_truths(40, 4, &spec()).unwrap();
        let ex = make_examples(&gt, 7, 1.0, &spec().substream(1)).unwrap();
        for t in [0.0, 3.0] {
            let se = se_empirical(&gt, &ex, SettingKind::Supervised, t).unwrap();
            assert!(se < 1e-24, "se = {se}");
        }
    }

    #[test]
    fn se_unsupervised_gram_route_matches_dense_route() {
        let gt = make_ground_truths(20, 3, &spec()).unwrap();
        let ex = make_examples(&gt, 4, 0.6, &spec().substream(3)).unwrap();
        let t = 1.5;
        let se = se_empirical(&gt, &ex, SettingKind::Unsupervised, t).unwrap();
        let info_gt =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        let info_ex =
            build_information_matrix(DataSource::Examples(&ex), SettingKind::Unsupervised)
                .unwrap();
        let direct = build_coupling(&info_gt, t)
            .unwrap()
            .squared_error_to(&build_coupling(&info_ex, t).unwrap());
        assert_abs_diff_eq!(se, direct, epsilon = 1e-12);
    }

    #[test]
    fn se_invariant_under_pattern_sign_flip() {
        let gt = make_ground_truths(30, 3, &spec()).unwrap();
        let ex = make_examples(&gt, 4, 0.7, &spec().substream(2)).unwrap();
        for kind in [SettingKind::Supervised, SettingKind::Unsupervised] {
            let se = se_empirical(&gt, &ex, kind, 1.0).unwrap();
            let mut gt_flipped = gt.clone();
            let mut ex_flipped = ex.clone();
            gt_flipped.flip_pattern(1);
            ex_flipped.flip_class(1);
            let se_flipped = se_empirical(&gt_flipped, &ex_flipped, kind, 1.0).unwrap();
            assert_abs_diff_eq!(se, se_flipped, epsilon = 1e-12);
        }
    }

    #[test]
    fn retrieval_trials_are_deterministic_and_nested() {
        let params = RetrievalTrialParams {
            setting: ModelSetting::storing(0.1).unwrap(),
            n: 200,
            t: 0.0,
            probe: ProbeKind::Ball { p: 0.8 },
            datasets: 4,
            probes_per_dataset: 5,
            zero_diagonal: false,
        };
        let a = run_retrieval_trials(&params, &spec()).unwrap();
        let b = run_retrieval_trials(&params, &spec()).unwrap();
        assert_eq!(a.m1_mean, b.m1_mean);
        assert_eq!(a.between_dataset_var, b.between_dataset_var);
        assert!(a.m1_mean > 0.8 && a.m1_mean <= 1.0, "m1 = {}", a.m1_mean);
        assert!((a.m0_mean - 0.8).abs() < 0.05, "m0 = {}", a.m0_mean);
        assert!(a.m1_stderr >= 0.0 && a.within_dataset_var >= 0.0);
    }

    #[test]
    fn ball_probe_rejected_for_example_settings() {
        let params = RetrievalTrialParams {
            setting: ModelSetting::supervised(0.1, 0.8, 5).unwrap(),
            n: 50,
            t: 0.0,
            probe: ProbeKind::Ball { p: 0.5 },
            datasets: 1,
            probes_per_dataset: 1,
            zero_diagonal: false,
        };
        assert!(run_retrieval_trials(&params, &spec()).is_err());
    }

    #[test]
    fn spectrum_histogram_storing_smoke() {
        let setting = ModelSetting::storing(0.2).unwrap();
        let law = law_for(&setting, 0.0).unwrap();
        let report = empirical_spectrum_histogram(
            &setting,
            300,
            0.0,
            &law,
            24,
            1e-6,
            &spec().substream(4),
        )
        .unwrap();
        assert_eq!(report.eigenvalues.len(), 300);
        // 1 - alpha of the eigenvalues are exact zeros.
        assert_abs_diff_eq!(report.peak_mass_estimate, 0.8, epsilon = 1e-12);
        assert!(report.w1_bulk < 0.15, "W1 = {}", report.w1_bulk);
        let mass: f64 = report
            .bins
            .iter()
            .map(|(lo, hi, d)| (hi - lo) * d)
            .sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn dynamics_iteration_counts_steps() {
        let j = identity_coupling(8);
        let sigma = crate::data::sample_rademacher(0.0, 8, &spec()).unwrap();
        let state = iterate_dynamics(&j, &sigma, 3);
        assert_eq!(state.step, 3);
        assert_eq!(state.config, sigma);
    }
}
