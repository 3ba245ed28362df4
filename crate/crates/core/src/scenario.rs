//! Stack-current profiles, the measured oxygen excess ratio and its
//! reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedConstants;

/// Default guard below which the excess ratio is not computed, A.
pub const XI_MIN: f64 = 1.0;

/// Piecewise-constant stack current: `(start time s, current A)` breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentProfile {
    breakpoints: Vec<(f64, f64)>,
    duration: f64,
}

impl CurrentProfile {
    pub fn new(breakpoints: Vec<(f64, f64)>, duration: f64) -> Result<Self> {
        let bad = |msg: String| Err(Error::Config(msg));
        match breakpoints.first() {
            None => return bad("profile has no breakpoints".into()),
            Some(&(t0, _)) if t0 != 0.0 => {
                return bad(format!("first breakpoint must start at 0 s, got {t0}"))
            }
            _ => {}
        }
        if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("breakpoint times must be strictly increasing".into());
        }
        if let Some(&(t, xi)) = breakpoints
            .iter()
            .find(|(_, xi)| !(xi.is_finite() && *xi > 0.0))
        {
            return bad(format!(
                "current at {t} s must be strictly positive, got {xi}"
            ));
        }
        let last = breakpoints[breakpoints.len() - 1].0;
        if !(duration.is_finite() && duration >= last && duration > 0.0) {
            return bad(format!(
                "duration {duration} s must cover the last breakpoint at {last} s"
            ));
        }
        Ok(CurrentProfile {
            breakpoints,
            duration,
        })
    }

    /// A single current held for `duration`.
    pub fn constant(xi: f64, duration: f64) -> Result<Self> {
        Self::new(vec![(0.0, xi)], duration)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn initial_current(&self) -> f64 {
        self.breakpoints[0].1
    }

    /// Zero-order hold: the current of the last breakpoint at or before `t`.
    pub fn current_at(&self, t: f64) -> Result<f64> {
        // tolerate the round-off of k * ts landing just past the end
        if !(t >= 0.0 && t <= self.duration * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        let idx = self.breakpoints.partition_point(|&(start, _)| start <= t);
        Ok(self.breakpoints[idx - 1].1)
    }

    /// Instants at which the current changes.
    pub fn step_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.iter().skip(1).map(|&(t, _)| t)
    }
}

/// How the desired excess ratio is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceSpec {
    Constant {
        lambda_const: f64,
    },
    /// Cubic in the stack current.
    Polynomial,
}

/// Recommended band for a constant reference.
pub const RECOMMENDED_BAND: (f64, f64) = (2.0, 2.5);

impl ReferenceSpec {
    pub fn validate(&self) -> Result<()> {
        if let ReferenceSpec::Constant { lambda_const } = *self {
            if !(lambda_const > 1.0 && lambda_const < 4.0) {
                return Err(Error::Config(format!(
                    "constant reference {lambda_const} outside (1, 4)"
                )));
            }
            if !(RECOMMENDED_BAND.0..=RECOMMENDED_BAND.1).contains(&lambda_const) {
                log::warn!(
                    "constant reference {lambda_const} outside the recommended band [{}, {}]",
                    RECOMMENDED_BAND.0,
                    RECOMMENDED_BAND.1
                );
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            ReferenceSpec::Constant { lambda_const } => format!("constant {lambda_const}"),
            ReferenceSpec::Polynomial => "polynomial".into(),
        }
    }
}

/// Oxygen excess ratio `c19 (y2 - y1) / (c20 xi)` from the two pressure
/// readings.
///
/// Non-positive results are returned as-is; callers flag them as a
/// starvation risk.
pub fn compute_stoichiometry(y1: f64, y2: f64, xi: f64, c: &DerivedConstants) -> Result<f64> {
    compute_stoichiometry_guarded(y1, y2, xi, c, XI_MIN)
}

pub fn compute_stoichiometry_guarded(
    y1: f64,
    y2: f64,
    xi: f64,
    c: &DerivedConstants,
    xi_min: f64,
) -> Result<f64> {
    if !(xi > xi_min) {
        return Err(Error::CurrentGuard { xi, xi_min });
    }
    Ok(c.c19 * (y2 - y1) / (c.c20 * xi))
}

/// Desired excess ratio at stack current `xi`.
pub fn desired_stoichiometry(xi: f64, spec: &ReferenceSpec) -> f64 {
    match *spec {
        ReferenceSpec::Constant { lambda_const } => lambda_const,
        ReferenceSpec::Polynomial => ((5e-8 * xi - 2.87e-5) * xi + 2.23e-3) * xi + 2.5,
    }
}
