//! Limiting spectral laws and quadrature against them.
//!
//! Every coupling matrix in this crate has, in the thermodynamic (and
//! big-data) limit, an empirical spectral distribution of the form
//!
//! ```text
//!   d mu^t = (1 - alpha) * delta(lambda - peak(t)) + alpha * d mu_bulk^t
//! ```
//!
//! where the bulk is a shifted Marchenko–Pastur law pushed forward through
//! the dreaming eigenvalue map. The bulk is parametrized by the load
//! `alpha`, a scale `sigma^2`, a shift `delta` and the peak location
//! `lambda_peak0` at `t = 0`; the three settings fix these as
//!
//! | setting      | sigma^2 | delta             | lambda_peak0      |
//! |--------------|---------|-------------------|-------------------|
//! | storing      | 1       | 0                 | 0                 |
//! | supervised   | r^2     | 0                 | 0                 |
//! | unsupervised | r^2     | alpha (1 - r^2)   | alpha (1 - r^2)   |
//!
//! Integrals against the bulk use the substitution `lambda = m + rho sin
//! theta`, which absorbs the square-root edge factors into `cos^2 theta` and
//! leaves a smooth integrand for Gauss–Legendre.

pub mod quad;

use crate::coupling::eigen_map;
use crate::error::{Error, Result};
use crate::setting::{ModelSetting, SettingKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

pub use quad::{legendre_rule, LegendreRule, QuadSpec};

/// Parameters of the limiting law at dreaming time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLaw {
    pub alpha: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub lambda_peak0: f64,
    pub t: f64,
}

/// Bulk support edges at the law's dreaming time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkSupport {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl SpectralLaw {
    /// Bulk edges at `t = 0`: `sigma^2 (1 -+ sqrt(alpha))^2 + delta`.
    pub fn edges0(&self) -> (f64, f64) {
        let root = self.alpha.sqrt();
        (
            self.sigma2 * (1.0 - root) * (1.0 - root) + self.delta,
            self.sigma2 * (1.0 + root) * (1.0 + root) + self.delta,
        )
    }

    /// Bulk edges at time `t` (push-forward of the `t = 0` edges).
    pub fn support(&self) -> BulkSupport {
        let (lm0, lp0) = self.edges0();
        BulkSupport {
            lambda_minus: eigen_map(lm0, self.t),
            lambda_plus: eigen_map(lp0, self.t),
        }
    }

    /// Peak location at time `t`.
    pub fn peak(&self) -> f64 {
        eigen_map(self.lambda_peak0, self.t)
    }

    pub fn peak_mass(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn bulk_mass(&self) -> f64 {
        self.alpha
    }

    /// Same law parameters at a different dreaming time.
    pub fn at_time(&self, t: f64) -> Self {
        Self { t, ..*self }
    }

    /// `sigma^2 = 0` collapses the bulk to a point mass at `map(delta, t)`.
    fn degenerate_bulk(&self) -> bool {
        self.sigma2 == 0.0
    }
}

/// Limiting law for a setting at dreaming time `t`.
///
/// For the supervised and unsupervised settings this is the `M -> infinity`
/// (big-data) law; finite-`M` deviations are the simulation module's job.
pub fn law_for(setting: &ModelSetting, t: f64) -> Result<SpectralLaw> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::ParameterDomain {
            name: "t",
            value: t,
            domain: "[0, +inf]",
        });
    }
    let (alpha, r) = (setting.alpha, setting.r);
    let (sigma2, delta, lambda_peak0) = match setting.kind {
        SettingKind::BasicStoring => (1.0, 0.0, 0.0),
        SettingKind::Supervised => (r * r, 0.0, 0.0),
        SettingKind::Unsupervised => {
            let shift = alpha * (1.0 - r * r);
            (r * r, shift, shift)
        }
    };
    Ok(SpectralLaw {
        alpha,
        sigma2,
        delta,
        lambda_peak0,
        t,
    })
}

/// Density of the (unit-mass) bulk at `lambda`; zero outside the open
/// support. The full law's absolutely continuous part is `alpha` times this.
pub fn bulk_density(law: &SpectralLaw, lambda: f64) -> f64 {
    if law.t.is_infinite() || law.degenerate_bulk() {
        return 0.0;
    }
    let sup = law.support();
    if lambda <= sup.lambda_minus || lambda >= sup.lambda_plus {
        return 0.0;
    }
    let (lm0, lp0) = law.edges0();
    let t = law.t;
    let d = 1.0 + t * (1.0 - lambda);
    // (1 + t delta) lambda - (1 + t) delta, written in a form that stays
    // positive all the way to the lower edge even when delta == lambda_-^0.
    let core = (1.0 + t * lm0) * (lambda - sup.lambda_minus) + d * (lm0 - law.delta);
    let pref = (1.0 + t) * ((1.0 + t * lm0) * (1.0 + t * lp0)).sqrt()
        / (2.0 * PI * law.sigma2 * law.alpha);
    pref * ((sup.lambda_plus - lambda) * (lambda - sup.lambda_minus)).sqrt() / (d * d * core)
}

/// Integrate `f` against the unit-mass bulk via the sine substitution.
pub fn integrate_bulk<F: Fn(f64) -> f64>(
    law: &SpectralLaw,
    f: F,
    quad: &QuadSpec,
) -> Result<f64> {
    if law.t < 0.0 || law.t.is_nan() {
        return Err(Error::ParameterDomain {
            name: "t",
            value: law.t,
            domain: "[0, +inf]",
        });
    }
    if law.t.is_infinite() {
        // All positive eigenvalues concentrate at 1.
        return Ok(f(1.0));
    }
    if law.degenerate_bulk() {
        return Ok(f(eigen_map(law.delta, law.t)));
    }
    let (lm0, lp0) = law.edges0();
    let d0 = lm0 - law.delta;
    if d0 < -1e-12 * law.sigma2.max(1.0) {
        let sup = law.support();
        return Err(Error::PoleInsideSupport {
            delta: law.delta,
            lambda_minus: sup.lambda_minus,
        });
    }
    let d0 = d0.max(0.0);
    let sup = law.support();
    let m = 0.5 * (sup.lambda_plus + sup.lambda_minus);
    let rho = 0.5 * (sup.lambda_plus - sup.lambda_minus);
    let t = law.t;
    let edge_factor = 1.0 + t * lm0;
    let pref =
        (1.0 + t) * (edge_factor * (1.0 + t * lp0)).sqrt() / (2.0 * PI * law.sigma2 * law.alpha);
    let g = move |theta: f64| {
        // lambda - lambda_- = 2 rho sp^2 and lambda_+ - lambda = 2 rho cp^2,
        // so sqrt((lambda_+ - lambda)(lambda - lambda_-)) = rho cos(theta)
        // exactly and the edge square roots never suffer cancellation.
        let sp = (0.5 * theta + FRAC_PI_4).sin();
        let cp = (0.5 * theta + FRAC_PI_4).cos();
        let (sp2, cp2) = (sp * sp, cp * cp);
        let lambda = m + rho * (sp2 - cp2);
        let d = 1.0 + t * (1.0 - lambda);
        let core = 2.0 * rho * edge_factor * sp2 + d * d0;
        pref * f(lambda) * 4.0 * rho * rho * sp2 * cp2 / (d * d * core)
    };
    quad.integrate(g, -0.5 * PI, 0.5 * PI)
}

/// Integrate `f` against the bulk by pulling back to the `t = 0` frame:
/// `int f(map(l0, t)) d mu^0_bulk(l0)`. Algebraically identical to
/// [`integrate_bulk`]; kept as an independent route for consistency checks
/// and for integrands that are simplest in the Marchenko–Pastur frame.
pub fn integrate_bulk_pullback<F: Fn(f64) -> f64>(
    law: &SpectralLaw,
    f: F,
    quad: &QuadSpec,
) -> Result<f64> {
    let t = law.t;
    if t.is_infinite() {
        return Ok(f(1.0));
    }
    integrate_bulk(&law.at_time(0.0), |l0| f(eigen_map(l0, t)), quad)
}

/// Integrate `f` against the full law: peak plus bulk.
pub fn integrate_full<F: Fn(f64) -> f64>(
    law: &SpectralLaw,
    f: F,
    quad: &QuadSpec,
) -> Result<f64> {
    let peak_term = law.peak_mass() * f(law.peak());
    let bulk = integrate_bulk(law, f, quad)?;
    Ok(peak_term + law.bulk_mass() * bulk)
}

/// Bulk CDF at `x` (mass of the unit bulk below `x`).
pub fn bulk_cdf(law: &SpectralLaw, x: f64) -> Result<f64> {
    let sup = law.support();
    if x <= sup.lambda_minus {
        return Ok(0.0);
    }
    if x >= sup.lambda_plus {
        return Ok(1.0);
    }
    if law.degenerate_bulk() || law.t.is_infinite() {
        // Point-mass bulk: CDF is a step handled by the edge cases above.
        return Ok(0.0);
    }
    let (lm0, lp0) = law.edges0();
    let d0 = (lm0 - law.delta).max(0.0);
    let m = 0.5 * (sup.lambda_plus + sup.lambda_minus);
    let rho = 0.5 * (sup.lambda_plus - sup.lambda_minus);
    let t = law.t;
    let edge_factor = 1.0 + t * lm0;
    let pref =
        (1.0 + t) * (edge_factor * (1.0 + t * lp0)).sqrt() / (2.0 * PI * law.sigma2 * law.alpha);
    let theta_x = ((x - m) / rho).clamp(-1.0, 1.0).asin();
    let g = move |theta: f64| {
        let sp = (0.5 * theta + FRAC_PI_4).sin();
        let cp = (0.5 * theta + FRAC_PI_4).cos();
        let (sp2, cp2) = (sp * sp, cp * cp);
        let lambda = m + rho * (sp2 - cp2);
        let d = 1.0 + t * (1.0 - lambda);
        let core = 2.0 * rho * edge_factor * sp2 + d * d0;
        pref * 4.0 * rho * rho * sp2 * cp2 / (d * d * core)
    };
    // The integrand is smooth; a fixed fine rule is plenty for 1e-12.
    Ok(legendre_rule(512).integrate(g, -0.5 * PI, theta_x))
}

/// Bulk quantile by bisection on the CDF to absolute tolerance `1e-10`.
pub fn bulk_quantile(law: &SpectralLaw, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::ParameterDomain {
            name: "q",
            value: q,
            domain: "[0,1]",
        });
    }
    let sup = law.support();
    if law.degenerate_bulk() || law.t.is_infinite() {
        return Ok(if law.t.is_infinite() {
            1.0
        } else {
            eigen_map(law.delta, law.t)
        });
    }
    let (mut lo, mut hi) = (sup.lambda_minus, sup.lambda_plus);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if bulk_cdf(law, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Eigenvalue relation for the supervised coupling in terms of the
/// ground-truth eigenvalue at the same dreaming time.
pub fn f_supervised(lambda: f64, r: f64, t: f64) -> f64 {
    let r2 = r * r;
    lambda * r2 * (t + 1.0) / (lambda * (r2 - 1.0) * t + t + 1.0)
}

/// Same relation for the unsupervised coupling.
pub fn f_unsupervised(lambda: f64, alpha: f64, r: f64, t: f64) -> f64 {
    let r2 = r * r;
    let num = (t + 1.0) * (lambda * r2 + alpha * (r2 - 1.0) * ((lambda - 1.0) * t - 1.0));
    let den = lambda * (r2 - 1.0) * t * (alpha * t + 1.0) - alpha * (r2 - 1.0) * (t + 1.0) * t
        + t
        + 1.0;
    num / den
}

/// Exact squared error between the empirical coupling and the ground-truth
/// coupling in the big-data limit:
/// `int [lambda - f(lambda)]^2 d mu_zeta^t` against the ground-truth
/// (basic-storing) law. The unsupervised peak term contributes the constant
/// `(1-alpha) f_u(0)^2`; it is included automatically by the full-law
/// integral.
pub fn se_theory(kind: SettingKind, alpha: f64, r: f64, t: f64, quad: &QuadSpec) -> Result<f64> {
    if t.is_infinite() {
        return Err(Error::ParameterDomain {
            name: "t",
            value: t,
            domain: "finite t for squared-error theory",
        });
    }
    let setting = match kind {
        SettingKind::Supervised => ModelSetting::supervised(alpha, r, 1)?,
        SettingKind::Unsupervised => ModelSetting::unsupervised(alpha, r, 1)?,
        SettingKind::BasicStoring => {
            return Err(Error::ParameterDomain {
                name: "setting",
                value: 0.0,
                domain: "supervised or unsupervised",
            })
        }
    };
    let ground = law_for(&ModelSetting::storing(alpha)?, t)?;
    let residual: Box<dyn Fn(f64) -> f64> = match setting.kind {
        SettingKind::Supervised => Box::new(move |l: f64| {
            let d = l - f_supervised(l, r, t);
            d * d
        }),
        _ => Box::new(move |l: f64| {
            let d = l - f_unsupervised(l, alpha, r, t);
            d * d
        }),
    };
    integrate_full(&ground, residual, quad)
}

/// Result of checking the quadrature against the closed stability moments.
#[derive(Debug, Clone, Serialize)]
pub struct MomentCheckReport {
    pub alpha: f64,
    pub t: f64,
    pub mu1: f64,
    pub mu1_ref: f64,
    pub mu2: f64,
    pub mu2_ref: f64,
    pub tol_mu1: f64,
    pub tol_mu2: f64,
    pub passed: bool,
}

/// Verify the quadrature against closed-form stability moments of the
/// basic-storing law, computed in the Marchenko–Pastur frame:
/// `mu_1 = int (1+t) l^2 / (1+t l) d mu_MP`,
/// `mu_2 = int (1+t)^2 l^3 / (1+t l)^2 d mu_MP`.
///
/// At `t = 0` the references are `mu_1 = 1 + alpha`,
/// `mu_2 = alpha^2 + 3 alpha + 1` (tolerance `1e-6`); for `t > 0` the
/// references are the `t >> 1` expansions `1 - alpha/((alpha-1) t^2)` and
/// `1 - 3 alpha/((alpha-1) t^2)` with `O(t^-3)` tolerance bands, so the
/// check is meaningful for large `t` only.
pub fn mp_moment_checks(law: &SpectralLaw, quad: &QuadSpec) -> Result<MomentCheckReport> {
    if law.delta != 0.0 || law.sigma2 != 1.0 {
        return Err(Error::ParameterDomain {
            name: "law",
            value: law.delta,
            domain: "basic-storing law (delta = 0, sigma^2 = 1)",
        });
    }
    let (alpha, t) = (law.alpha, law.t);
    // The integrands are already written in the t = 0 frame, so integrate
    // against the plain Marchenko-Pastur bulk.
    let mp = law.at_time(0.0);
    let mu1 = integrate_bulk(&mp, |l0| (1.0 + t) * l0 * l0 / (1.0 + t * l0), quad)?;
    let mu2 = integrate_bulk(
        &mp,
        |l0| {
            let d = 1.0 + t * l0;
            (1.0 + t) * (1.0 + t) * l0 * l0 * l0 / (d * d)
        },
        quad,
    )?;
    let (mu1_ref, mu2_ref, tol_mu1, tol_mu2) = if t == 0.0 {
        (1.0 + alpha, alpha * alpha + 3.0 * alpha + 1.0, 1e-6, 1e-6)
    } else {
        let t3 = t * t * t;
        (
            1.0 - alpha / ((alpha - 1.0) * t * t),
            1.0 - 3.0 * alpha / ((alpha - 1.0) * t * t),
            10.0 / t3,
            30.0 / t3,
        )
    };
    let passed = (mu1 - mu1_ref).abs() < tol_mu1 && (mu2 - mu2_ref).abs() < tol_mu2;
    Ok(MomentCheckReport {
        alpha,
        t,
        mu1,
        mu1_ref,
        mu2,
        mu2_ref,
        tol_mu1,
        tol_mu2,
        passed,
    })
}
