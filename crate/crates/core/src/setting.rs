//! Model settings: which of the three scenarios is being run and with which
//! parameters.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The three ways of filling the coupling matrix with information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingKind {
    /// Store `P` Rademacher patterns directly.
    BasicStoring,
    /// Store per-class empirical means of `M` noisy examples.
    Supervised,
    /// Store all `P*M` noisy examples as individual patterns.
    Unsupervised,
}

impl std::fmt::Display for SettingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SettingKind::BasicStoring => write!(f, "storing"),
            SettingKind::Supervised => write!(f, "supervised"),
            SettingKind::Unsupervised => write!(f, "unsupervised"),
        }
    }
}

impl std::str::FromStr for SettingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "storing" | "basic" | "basic_storing" => Ok(SettingKind::BasicStoring),
            "supervised" => Ok(SettingKind::Supervised),
            "unsupervised" => Ok(SettingKind::Unsupervised),
            other => Err(Error::Format(format!("unknown setting `{other}`"))),
        }
    }
}

/// A scenario with its parameters: load `alpha = P/N`, example quality `r`
/// and sample size `M` (the latter two are fixed to 1 for basic storing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSetting {
    pub kind: SettingKind,
    pub alpha: f64,
    pub r: f64,
    pub m: usize,
}

impl ModelSetting {
    pub fn storing(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            kind: SettingKind::BasicStoring,
            alpha,
            r: 1.0,
            m: 1,
        })
    }

    pub fn supervised(alpha: f64, r: f64, m: usize) -> Result<Self> {
        check_alpha(alpha)?;
        check_r(r)?;
        check_m(m)?;
        Ok(Self {
            kind: SettingKind::Supervised,
            alpha,
            r,
            m,
        })
    }

    pub fn unsupervised(alpha: f64, r: f64, m: usize) -> Result<Self> {
        check_alpha(alpha)?;
        check_r(r)?;
        check_m(m)?;
        Ok(Self {
            kind: SettingKind::Unsupervised,
            alpha,
            r,
            m,
        })
    }

    pub fn new(kind: SettingKind, alpha: f64, r: f64, m: usize) -> Result<Self> {
        match kind {
            SettingKind::BasicStoring => Self::storing(alpha),
            SettingKind::Supervised => Self::supervised(alpha, r, m),
            SettingKind::Unsupervised => Self::unsupervised(alpha, r, m),
        }
    }

    /// Number of stored classes for a system of `n` neurons, `P = alpha N`
    /// rounded to the nearest admissible count.
    pub fn num_classes(&self, n: usize) -> usize {
        ((self.alpha * n as f64).round() as usize).clamp(1, n)
    }

    /// Re-validate a setting that bypassed the constructors (deserialized
    /// from a sidecar or config file).
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_r(self.r)?;
        check_m(self.m)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ParameterDomain {
            name: "alpha",
            value: alpha,
            domain: "(0,1]",
        });
    }
    Ok(())
}

fn check_r(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) || !r.is_finite() {
        return Err(Error::ParameterDomain {
            name: "r",
            value: r,
            domain: "[0,1]",
        });
    }
    Ok(())
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::ParameterDomain {
            name: "M",
            value: 0.0,
            domain: "M >= 1",
        });
    }
    Ok(())
}
