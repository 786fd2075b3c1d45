//! Dreaming Hopfield couplings: construction, exact spectral theory, and
//! finite-size Monte Carlo verification.
//!
//! The crate is organized around the pipeline used by the experiment CLI:
//!
//! * [`rng`] / [`data`] — seeded, stream-splittable generation of patterns,
//!   noisy examples and probe configurations;
//! * [`coupling`] — the coupling matrix `J(t)` in the basic-storing,
//!   supervised and unsupervised settings, its eigenvalue flow in the
//!   dreaming time `t` and an ODE cross-check;
//! * [`spectral`] — limiting spectral laws (shifted Marchenko–Pastur bulk
//!   plus a delta peak), quadrature against them, and the squared-error
//!   predictions for empirical couplings;
//! * [`retrieval`] — Gaussian-approximation moments of stability and
//!   attractiveness and the one-step magnetization curve;
//! * [`simulate`] — finite-`N` counterparts of all of the above: parallel
//!   dynamics, empirical spectra, squared errors and retrieval trials;
//! * [`io`] — dump formats (binary matrix + JSON sidecar) used by the CLI.

pub mod coupling;
pub mod data;
pub mod error;
pub mod io;
pub mod retrieval;
pub mod rng;
pub mod setting;
pub mod simulate;
pub mod spectral;

pub use coupling::{
    build_coupling, build_information_matrix, eigen_map, eigen_map_inverse,
    integrate_dreaming_ode, spectrum, CouplingMatrix, InformationMatrix,
};
pub use data::{
    make_examples, make_ground_truths, perturb_on_ball, sample_rademacher, BinaryConfig,
    ExampleSet, GroundTruthSet,
};
pub use error::{Error, Result};
pub use retrieval::{
    ga_validity_bound, m1_theory, moments, predict_curve, CurvePoint, MomentPair,
    RetrievalScenario,
};
pub use rng::RngSpec;
pub use setting::{ModelSetting, SettingKind};
pub use simulate::{
    attractiveness_field, empirical_spectrum_histogram, iterate_dynamics, one_step,
    run_retrieval_trials, se_empirical, stability_field, CouplingOp, DynamicsState,
    PreparedTrial, ProbeKind, RetrievalAggregate, RetrievalTrialParams, SpectrumReport,
    TrialResult,
};
pub use spectral::{
    integrate_bulk, integrate_full, law_for, mp_moment_checks, se_theory, BulkSupport,
    QuadSpec, SpectralLaw,
};
