//! Gaussian-approximation predictions for one-step retrieval.
//!
//! Treating the per-site stability/attractiveness fields as i.i.d. Gaussians
//! with moments `(mu_1, mu_2)` turns the one-step Mattis magnetization into
//! `m1 = erf(mu_1 / sqrt(2 (mu_2 - mu_1^2)))`. The moments are integrals of
//! rational functions against the limiting spectral law of the coupling, so
//! everything here reduces to quadrature from [`crate::spectral`].

use crate::error::{Error, Result};
use crate::setting::ModelSetting;
use crate::spectral::{integrate_full, law_for, QuadSpec, SpectralLaw};
use serde::Serialize;

/// First and (non-centered) second moment of the per-site field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPair {
    pub mu1: f64,
    pub mu2: f64,
}

impl MomentPair {
    pub fn variance(&self) -> f64 {
        self.mu2 - self.mu1 * self.mu1
    }
}

/// Which field is being predicted, with the law it integrates against.
#[derive(Debug, Clone, Copy)]
pub enum RetrievalScenario {
    /// Stability of a stored pattern (basic storing).
    StoringStability { law: SpectralLaw },
    /// Attractiveness of a pattern for a ball probe of expected overlap `p`.
    StoringAttractiveness { law: SpectralLaw, p: f64 },
    /// Attractiveness of a ground truth for a fresh testing example of
    /// quality `r` (supervised law at the same `r`).
    SupervisedAttractiveness { law: SpectralLaw, r: f64 },
    /// Same probe against the unsupervised law.
    UnsupervisedAttractiveness { law: SpectralLaw, r: f64 },
}

impl RetrievalScenario {
    pub fn storing_stability(alpha: f64, t: f64) -> Result<Self> {
        Ok(Self::StoringStability {
            law: law_for(&ModelSetting::storing(alpha)?, t)?,
        })
    }

    pub fn storing_attractiveness(alpha: f64, t: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::ParameterDomain {
                name: "p",
                value: p,
                domain: "[0,1]",
            });
        }
        Ok(Self::StoringAttractiveness {
            law: law_for(&ModelSetting::storing(alpha)?, t)?,
            p,
        })
    }

    pub fn supervised_attractiveness(alpha: f64, r: f64, t: f64) -> Result<Self> {
        Ok(Self::SupervisedAttractiveness {
            law: law_for(&ModelSetting::supervised(alpha, r, 1)?, t)?,
            r,
        })
    }

    pub fn unsupervised_attractiveness(alpha: f64, r: f64, t: f64) -> Result<Self> {
        Ok(Self::UnsupervisedAttractiveness {
            law: law_for(&ModelSetting::unsupervised(alpha, r, 1)?, t)?,
            r,
        })
    }

    pub fn law(&self) -> &SpectralLaw {
        match self {
            Self::StoringStability { law }
            | Self::StoringAttractiveness { law, .. }
            | Self::SupervisedAttractiveness { law, .. }
            | Self::UnsupervisedAttractiveness { law, .. } => law,
        }
    }
}

/// The recurring law integrals:
/// `i1 = int l`, `i2 = int l^2`, `i2d = int l^2/(1+t(1-l))`,
/// `i3d = int l^3/(1+t(1-l))`, all against the full law.
struct LawIntegrals {
    i1: f64,
    i2: f64,
    i2d: f64,
    i3d: f64,
}

fn law_integrals(law: &SpectralLaw, quad: &QuadSpec) -> Result<LawIntegrals> {
    let t = law.t;
    if t.is_infinite() {
        return Err(Error::ParameterDomain {
            name: "t",
            value: t,
            domain: "finite t for moment integrals",
        });
    }
    // 1 + t(1 - l) = (1+t)/(1+t l0) > 0 holds on the whole support; guard
    // against parameter corruption anyway.
    let sup = law.support();
    let d_plus = 1.0 + t * (1.0 - sup.lambda_plus);
    if d_plus <= 0.0 {
        return Err(Error::ParameterDomain {
            name: "lambda_plus",
            value: sup.lambda_plus,
            domain: "1 + t(1 - lambda) > 0 on the bulk support",
        });
    }
    let i1 = integrate_full(law, |l| l, quad)?;
    let i2 = integrate_full(law, |l| l * l, quad)?;
    let i2d = integrate_full(law, |l| l * l / (1.0 + t * (1.0 - l)), quad)?;
    let i3d = integrate_full(law, |l| l * l * l / (1.0 + t * (1.0 - l)), quad)?;
    Ok(LawIntegrals { i1, i2, i2d, i3d })
}

/// Moments of the stability/attractiveness field under the GA.
///
/// All integrals run against the full law (peak plus bulk): for storing and
/// supervised laws the peak sits at 0 and the `l^2`, `l^3` integrands kill it
/// automatically, while the unsupervised peak sits at `map(alpha(1-r^2))` and
/// contributes.
pub fn moments(scenario: &RetrievalScenario, quad: &QuadSpec) -> Result<MomentPair> {
    let law = scenario.law();
    let alpha = law.alpha;
    let ints = law_integrals(law, quad)?;
    let pair = match *scenario {
        RetrievalScenario::StoringStability { .. } => MomentPair {
            mu1: ints.i2d / alpha,
            mu2: ints.i3d / alpha,
        },
        RetrievalScenario::StoringAttractiveness { p, .. } => MomentPair {
            mu1: p * ints.i2d / alpha,
            mu2: (1.0 - p * p) * ints.i2 + p * p * ints.i3d / alpha,
        },
        RetrievalScenario::SupervisedAttractiveness { r, .. } => {
            check_r_positive(r)?;
            MomentPair {
                mu1: ints.i2d / (alpha * r),
                mu2: (1.0 - r * r) * ints.i2 + ints.i3d / alpha,
            }
        }
        RetrievalScenario::UnsupervisedAttractiveness { r, .. } => {
            check_r_positive(r)?;
            MomentPair {
                mu1: ints.i2d / (alpha * r) - (1.0 - r * r) / r * ints.i1,
                mu2: ints.i3d / alpha,
            }
        }
    };
    Ok(pair)
}

fn check_r_positive(r: f64) -> Result<()> {
    if r <= 0.0 {
        return Err(Error::ParameterDomain {
            name: "r",
            value: r,
            domain: "(0,1] (mu_1 carries a 1/r)",
        });
    }
    Ok(())
}

/// One-step magnetization from GA moments.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct M1Prediction {
    pub m1: f64,
    /// Set when `mu_2 <= mu_1^2`: the Gaussian degenerates to a point mass
    /// and the magnetization is the deterministic sign of `mu_1`. Large-`t`
    /// limits approach this, so it is a flag rather than an error.
    pub degenerate_variance: bool,
}

/// `m1 = erf(mu_1 / sqrt(2 (mu_2 - mu_1^2)))`.
pub fn m1_theory(moments: &MomentPair) -> M1Prediction {
    let var = moments.variance();
    if var <= 0.0 {
        return M1Prediction {
            m1: if moments.mu1 >= 0.0 { 1.0 } else { -1.0 },
            degenerate_variance: true,
        };
    }
    M1Prediction {
        m1: libm::erf(moments.mu1 / (2.0 * var).sqrt()),
        degenerate_variance: false,
    }
}

/// Necessary-condition diagnostic for GA validity: the third-centered-moment
/// bound `2 alpha p (1 - p^2) int l^2 d mu^t`. Predictions where this is not
/// small are annotated by the experiment runner, never corrected.
pub fn ga_validity_bound(law: &SpectralLaw, p: f64, quad: &QuadSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::ParameterDomain {
            name: "p",
            value: p,
            domain: "[0,1]",
        });
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let i2 = integrate_full(law, |l| l * l, quad)?;
    Ok(2.0 * law.alpha * p * (1.0 - p * p) * i2)
}

/// One row of a theory curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    /// Grid value (`p` for ball probes, `r` for testing examples).
    pub x: f64,
    /// Expected initial overlap, equal to the grid value.
    pub m0: f64,
    pub m1_theory: f64,
    pub ga_bound: f64,
    pub degenerate_variance: bool,
}

/// Which curve a sweep belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFamily {
    /// Ball-probe attractiveness of a stored pattern; sweeps `p`.
    StoringAttractiveness,
    /// Ground-truth attractiveness from fresh examples; sweeps `r` (the law
    /// moves with the grid point).
    SupervisedAttractiveness,
    UnsupervisedAttractiveness,
}

/// Evaluate a theory curve over a monotone grid (order is preserved).
pub fn predict_curve(
    family: CurveFamily,
    alpha: f64,
    t: f64,
    grid: &[f64],
    quad: &QuadSpec,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(grid.len());
    for &x in grid {
        let scenario = match family {
            CurveFamily::StoringAttractiveness => {
                RetrievalScenario::storing_attractiveness(alpha, t, x)?
            }
            CurveFamily::SupervisedAttractiveness => {
                RetrievalScenario::supervised_attractiveness(alpha, x, t)?
            }
            CurveFamily::UnsupervisedAttractiveness => {
                RetrievalScenario::unsupervised_attractiveness(alpha, x, t)?
            }
        };
        let pair = moments(&scenario, quad)?;
        let pred = m1_theory(&pair);
        let ga = ga_validity_bound(scenario.law(), x, quad)?;
        out.push(CurvePoint {
            x,
            m0: x,
            m1_theory: pred.m1,
            ga_bound: ga,
            degenerate_variance: pred.degenerate_variance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::mp_moment_checks;
    use approx::assert_abs_diff_eq;

    fn quad() -> QuadSpec {
        QuadSpec::default()
    }

    #[test]
    fn storing_stability_closed_forms_at_t0() {
        for alpha in [0.1, 0.2, 0.3] {
            let sc = RetrievalScenario::storing_stability(alpha, 0.0).unwrap();
            let m = moments(&sc, &quad()).unwrap();
            assert_abs_diff_eq!(m.mu1, 1.0 + alpha, epsilon = 1e-9);
            assert_abs_diff_eq!(m.mu2, alpha * alpha + 3.0 * alpha + 1.0, epsilon = 1e-9);
            let pred = m1_theory(&m);
            assert_abs_diff_eq!(
                pred.m1,
                libm::erf((1.0 + alpha) / (2.0 * alpha).sqrt()),
                epsilon = 1e-10
            );
            assert!(!pred.degenerate_variance);
        }
    }

    #[test]
    fn stability_moments_agree_with_mp_frame_route() {
        // Same quantities through the independent Marchenko-Pastur-frame
        // integrals used by the moment checker.
        for (alpha, t) in [(0.2, 0.0), (0.2, 1.5), (0.35, 7.0), (0.2, 100.0)] {
            let sc = RetrievalScenario::storing_stability(alpha, t).unwrap();
            let m = moments(&sc, &quad()).unwrap();
            let report = mp_moment_checks(sc.law(), &quad()).unwrap();
            assert_abs_diff_eq!(m.mu1, report.mu1, epsilon = 1e-9);
            assert_abs_diff_eq!(m.mu2, report.mu2, epsilon = 1e-9);
        }
    }

    #[test]
    fn large_t_expansions() {
        let (alpha, t) = (0.2, 100.0);
        let sc = RetrievalScenario::storing_stability(alpha, t).unwrap();
        let m = moments(&sc, &quad()).unwrap();
        let mu1_ref = 1.0 - alpha / ((alpha - 1.0) * t * t);
        let mu2_ref = 1.0 - 3.0 * alpha / ((alpha - 1.0) * t * t);
        assert!((m.mu1 - mu1_ref).abs() < 10.0 / t.powi(3));
        assert!((m.mu2 - mu2_ref).abs() < 30.0 / t.powi(3));
    }

    #[test]
    fn attractiveness_at_p1_is_stability_exactly() {
        let stab = moments(
            &RetrievalScenario::storing_stability(0.25, 2.0).unwrap(),
            &quad(),
        )
        .unwrap();
        let attr = moments(
            &RetrievalScenario::storing_attractiveness(0.25, 2.0, 1.0).unwrap(),
            &quad(),
        )
        .unwrap();
        assert_eq!(stab.mu1, attr.mu1);
        assert_eq!(stab.mu2, attr.mu2);
    }

    #[test]
    fn m1_zero_at_zero_mean_and_monotonicity() {
        assert_eq!(m1_theory(&MomentPair { mu1: 0.0, mu2: 1.0 }).m1, 0.0);
        let base = m1_theory(&MomentPair { mu1: 1.0, mu2: 2.0 }).m1;
        let larger_mean = m1_theory(&MomentPair { mu1: 1.2, mu2: 2.0 + 0.44 }).m1;
        assert!(larger_mean > base, "same variance, larger mean");
        let larger_var = m1_theory(&MomentPair { mu1: 1.0, mu2: 2.5 }).m1;
        assert!(larger_var < base, "same mean, larger variance");
    }

    #[test]
    fn degenerate_variance_flags() {
        let pred = m1_theory(&MomentPair { mu1: 0.5, mu2: 0.25 });
        assert!(pred.degenerate_variance);
        assert_eq!(pred.m1, 1.0);
        let neg = m1_theory(&MomentPair {
            mu1: -0.5,
            mu2: 0.2,
        });
        assert_eq!(neg.m1, -1.0);
    }

    #[test]
    fn m1_large_t_asymptotic_agreement() {
        let (alpha, t) = (0.5, 20.0);
        let m = moments(
            &RetrievalScenario::storing_stability(alpha, t).unwrap(),
            &quad(),
        )
        .unwrap();
        let m1 = m1_theory(&m).m1;
        let scale = (1.0 - alpha) / (2.0 * alpha);
        let asym = 1.0 - (1.0 / t) * (-scale * t * t).exp() / (std::f64::consts::PI * scale).sqrt();
        // Agreement to three significant digits.
        assert!((m1 - asym).abs() < 5e-4, "m1={m1}, asym={asym}");
    }

    #[test]
    fn supervised_and_unsupervised_coincide_at_r1() {
        let sup = moments(
            &RetrievalScenario::supervised_attractiveness(0.15, 1.0, 2.0).unwrap(),
            &quad(),
        )
        .unwrap();
        let unsup = moments(
            &RetrievalScenario::unsupervised_attractiveness(0.15, 1.0, 2.0).unwrap(),
            &quad(),
        )
        .unwrap();
        assert_abs_diff_eq!(sup.mu1, unsup.mu1, epsilon = 1e-12);
    }

    #[test]
    fn r_zero_is_a_domain_error() {
        let sc = RetrievalScenario::supervised_attractiveness(0.1, 0.0, 0.0);
        // Law construction succeeds; the moments carry the 1/r.
        let sc = sc.unwrap();
        assert!(moments(&sc, &quad()).is_err());
    }

    #[test]
    fn variance_nonnegative_across_grid() {
        for alpha in [0.1, 0.3] {
            for t in [0.0, 1.0, 10.0] {
                for p in [0.2, 0.5, 0.9, 1.0] {
                    let m = moments(
                        &RetrievalScenario::storing_attractiveness(alpha, t, p).unwrap(),
                        &quad(),
                    )
                    .unwrap();
                    assert!(m.variance() >= -1e-9, "var {}", m.variance());
                }
                for r in [0.3, 0.7, 1.0] {
                    for sc in [
                        RetrievalScenario::supervised_attractiveness(alpha, r, t).unwrap(),
                        RetrievalScenario::unsupervised_attractiveness(alpha, r, t).unwrap(),
                    ] {
                        let m = moments(&sc, &quad()).unwrap();
                        assert!(m.variance() >= -1e-9, "var {}", m.variance());
                    }
                }
            }
        }
    }

    #[test]
    fn ga_bound_vanishes_at_endpoints() {
        let law = RetrievalScenario::storing_stability(0.3, 0.0)
            .unwrap()
            .law()
            .to_owned();
        assert_eq!(ga_validity_bound(&law, 1.0, &quad()).unwrap(), 0.0);
        assert_eq!(ga_validity_bound(&law, 0.0, &quad()).unwrap(), 0.0);
        let mid = ga_validity_bound(&law, 0.5, &quad()).unwrap();
        // 2 * 0.3 * 0.5 * 0.75 * int l^2 with int l^2 = alpha(1+alpha).
        assert_abs_diff_eq!(mid, 0.225 * 0.3 * 1.3, epsilon = 1e-9);
    }

    #[test]
    fn curves_preserve_grid_order_and_zero_at_p0() {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let curve = predict_curve(
            CurveFamily::StoringAttractiveness,
            0.1,
            0.0,
            &grid,
            &quad(),
        )
        .unwrap();
        assert_eq!(curve.len(), grid.len());
        for (pt, &x) in curve.iter().zip(&grid) {
            assert_eq!(pt.x, x);
            assert_eq!(pt.m0, x);
        }
        assert_eq!(curve[0].m1_theory, 0.0);
        // Low load: the curve lies above the identity everywhere inside.
        for pt in &curve[1..4] {
            assert!(pt.m1_theory > pt.x, "m1({}) = {}", pt.x, pt.m1_theory);
        }
    }

    #[test]
    fn dreaming_helps_supervised_retrieval() {
        let at = |t: f64| {
            predict_curve(
                CurveFamily::SupervisedAttractiveness,
                0.1,
                t,
                &[0.9],
                &quad(),
            )
            .unwrap()[0]
                .m1_theory
        };
        assert!(at(10.0) > at(0.0), "t=10 should beat t=0 at alpha=0.1");
    }
}
