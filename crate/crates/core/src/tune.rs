//! Gain sizing for the iP loop from open-loop probes of the plant.
//!
//! At each distinct current of a profile the plant is trimmed to its
//! reference ratio, then the motor current is raised by a small step and
//! the ratio's rate of change recorded. The peak of that rate per ampere is
//! the input gain seen by the ultra-local model at that load. `alpha` is set
//! to the geometric mean over the profile so that `alpha * u` has the same
//! magnitude as `dlambda/dt`; `kp` follows from the wanted restoration time
//! and the settling band, and `tau` from the sample period.

use crate::error::{Error, Result};
use crate::params::DerivedConstants;
use crate::plant::plant_dynamics;
use crate::plant::PlantState;
use crate::scenario::{desired_stoichiometry, CurrentProfile, ReferenceSpec};
use crate::sim::rk4_step;
use crate::sim::trim::{state_stoichiometry, trim_for_ratio};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub reference: ReferenceSpec,
    /// Settling band, fraction of the reference.
    pub band: f64,
    /// Wanted restoration time, s.
    pub target_restoration: f64,
    pub ts: f64,
    pub h: f64,
    /// Motor current step of the probe, A.
    pub probe: f64,
    /// Length of each probe, s.
    pub horizon: f64,
    /// Estimator window in sample periods.
    pub window_samples: usize,
    /// Motor current range searched when trimming, A.
    pub u_bounds: (f64, f64),
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            reference: ReferenceSpec::Constant { lambda_const: 2.2 },
            band: 0.02,
            target_restoration: 2.0,
            ts: 0.01,
            h: 1e-3,
            probe: 1.0,
            horizon: 2.0,
            window_samples: 50,
            u_bounds: (0.0, 400.0),
        }
    }
}

/// Open-loop response at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub xi: f64,
    pub lambda_ref: f64,
    /// Motor current holding the reference, A.
    pub u_trim: f64,
    /// Peak of `dlambda/dt` per ampere of input step, 1/(s A).
    pub input_gain: f64,
    /// Time of that peak after the step, s.
    pub peak_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub probes: Vec<Probe>,
    pub alpha: f64,
    pub kp: f64,
    pub tau: f64,
    pub ts: f64,
    /// Largest trim current over the profile, A.
    pub u_trim_max: f64,
}

/// Rounds to one significant digit.
fn round1(v: f64) -> f64 {
    let scale = 10f64.powf(v.abs().log10().floor());
    (v / scale).round() * scale
}

fn probe_at(c: &DerivedConstants, xi: f64, opts: &TuneOptions) -> Result<Probe> {
    let lambda_ref = desired_stoichiometry(xi, &opts.reference);
    let (x0, u_trim) = trim_for_ratio(c, xi, lambda_ref, opts.u_bounds, opts.h)?;
    let u = u_trim + opts.probe;
    let substeps = (opts.ts / opts.h).round() as usize;
    let samples = (opts.horizon / opts.ts).round() as usize;
    let f = |s: &[f64; 4]| plant_dynamics(&PlantState::from_array(*s), u, xi, c);

    let mut x = x0.to_array();
    let mut last = lambda_ref;
    let (mut peak, mut peak_time) = (0.0_f64, 0.0);
    for k in 1..=samples {
        for _ in 0..substeps {
            x = rk4_step(f, &x, opts.h)?;
        }
        let lambda = state_stoichiometry(&PlantState::from_array(x), xi, c);
        let rate = (lambda - last) / opts.ts;
        if rate.abs() > peak.abs() {
            peak = rate;
            peak_time = k as f64 * opts.ts;
        }
        last = lambda;
    }
    Ok(Probe {
        xi,
        lambda_ref,
        u_trim,
        input_gain: peak / opts.probe,
        peak_time,
    })
}

pub fn suggest(
    c: &DerivedConstants,
    profile: &CurrentProfile,
    opts: &TuneOptions,
) -> Result<Suggestion> {
    if !(opts.band > 0.0 && opts.band < 1.0 && opts.target_restoration > 0.0 && opts.probe != 0.0) {
        return Err(Error::Config(
            "tuning needs a band in (0, 1), a positive target time and a non-zero probe".into(),
        ));
    }
    let mut currents: Vec<f64> = profile.breakpoints().iter().map(|&(_, xi)| xi).collect();
    currents.sort_by(f64::total_cmp);
    currents.dedup();

    let probes = currents
        .into_iter()
        .map(|xi| probe_at(c, xi, opts))
        .collect::<Result<Vec<_>>>()?;
    if probes.iter().any(|p| !(p.input_gain > 0.0)) {
        return Err(Error::Config(
            "excess ratio does not rise with motor current".into(),
        ));
    }
    let log_mean = probes.iter().map(|p| p.input_gain.ln()).sum::<f64>() / probes.len() as f64;
    let kp = (1.0 / opts.band).ln() / opts.target_restoration;
    Ok(Suggestion {
        alpha: round1(log_mean.exp()),
        kp: round1(kp),
        tau: opts.window_samples as f64 * opts.ts,
        ts: opts.ts,
        u_trim_max: probes.iter().map(|p| p.u_trim).fold(0.0, f64::max),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round1(0.0734), 0.07);
        assert_eq!(round1(1.956), 2.0);
        assert_eq!(round1(0.096), 0.1);
    }
}
