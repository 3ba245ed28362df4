//! Four-state air-feed plant: cathode oxygen and nitrogen partial pressures,
//! compressor speed and supply-manifold pressure, plus the noisy pressure
//! sensors.
//!
//! The plant only emulates the process. Nothing in [`crate::mfc`] reads it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedConstants;

/// Negative radicand tolerated (and clamped to zero) under the outlet-flow
/// square root, as a fraction of atmospheric pressure.
pub const RADICAND_TOLERANCE: f64 = 1e-6;

/// Noise stream used by [`measure`]. ChaCha8 has a documented, portable
/// output sequence for a given seed.
pub type NoiseRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Oxygen partial pressure in the cathode, Pa.
    pub p_o2: f64,
    /// Nitrogen partial pressure in the cathode, Pa.
    pub p_n2: f64,
    /// Compressor angular speed, rad/s.
    pub omega_cp: f64,
    /// Supply-manifold pressure, Pa.
    pub p_sm: f64,
}

impl PlantState {
    pub const fn from_array(x: [f64; 4]) -> Self {
        PlantState {
            p_o2: x[0],
            p_n2: x[1],
            omega_cp: x[2],
            p_sm: x[3],
        }
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.p_o2, self.p_n2, self.omega_cp, self.p_sm]
    }

    /// Total cathode pressure including saturated vapor.
    pub fn cathode_pressure(&self, c: &DerivedConstants) -> f64 {
        self.p_o2 + self.p_n2 + c.c2
    }

    /// The zero-flow equilibrium: both volumes at atmospheric pressure and the
    /// compressor at rest. `o2_share` splits the dry partial pressure.
    pub fn no_flow_equilibrium(c: &DerivedConstants, o2_share: f64) -> Self {
        let dry = c.c11 - c.c2;
        let p_o2 = o2_share * dry;
        PlantState {
            p_o2,
            p_n2: dry - p_o2,
            omega_cp: 0.0,
            p_sm: c.c11,
        }
    }

    pub fn validate(&self, c: &DerivedConstants) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if !finite || self.p_o2 < 0.0 || self.p_n2 < 0.0 || self.omega_cp < 0.0 {
            return Err(Error::Config(format!(
                "plant state {self:?} must be finite with non-negative pressures and speed"
            )));
        }
        let radicand = self.cathode_pressure(c) - c.c11;
        if self.p_sm <= 0.0 || radicand < -RADICAND_TOLERANCE * c.c11 {
            return Err(Error::PlantDomain {
                radicand,
                p_sm: self.p_sm,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
thread_local! {
    pub(crate) static SQRT_EVALS: std::cell::Cell<usize> = const { std::cell::Cell::new(0) };
}

fn outlet_sqrt(radicand: f64) -> f64 {
    #[cfg(test)]
    SQRT_EVALS.with(|n| n.set(n.get() + 1));
    radicand.sqrt()
}

/// Time derivative of the plant state under motor current `u` and stack
/// current `xi`.
///
/// Fails with [`Error::PlantDomain`] when the cathode drops below
/// atmospheric pressure by more than [`RADICAND_TOLERANCE`] or the manifold
/// pressure is not positive.
pub fn plant_dynamics(x: &PlantState, u: f64, xi: f64, c: &DerivedConstants) -> Result<[f64; 4]> {
    let PlantState {
        p_o2: x1,
        p_n2: x2,
        omega_cp: x3,
        p_sm: x4,
    } = *x;

    let mut radicand = x1 + x2 + c.c2 - c.c11;
    if !(x4 > 0.0) || !(radicand >= -RADICAND_TOLERANCE * c.c11) {
        return Err(Error::PlantDomain { radicand, p_sm: x4 });
    }
    if radicand < 0.0 {
        radicand = 0.0;
    }

    let outlet = c.c17 * outlet_sqrt(radicand);
    let mix = c.c4 * x1 + c.c5 * x2 + c.c6;
    let inlet_drop = x4 - x1 - x2 - c.c2;
    let ratio_term = (x4 / c.c11).powf(c.c12) - 1.0;

    let dx1 = c.c1 * inlet_drop - c.c7 * xi - c.c3 * x1 / mix * outlet;
    let dx2 = c.c8 * inlet_drop - c.c3 * x2 / mix * outlet;
    let dx3 = -c.c9 * x3 - c.c10 * ratio_term + c.c13 * u;
    let dx4 = c.c14 * (1.0 + c.c15 * ratio_term) * (c.c21 * x3 - c.c16 * inlet_drop);
    Ok([dx1, dx2, dx3, dx4])
}

/// Pressure sensor readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Cathode total pressure, Pa.
    pub y1: f64,
    /// Supply-manifold pressure, Pa.
    pub y2: f64,
}

/// Standard deviations of the two additive sensor noises and the seed of
/// their stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub sigma_w1: f64,
    #[serde(default)]
    pub sigma_w2: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("sigma_w1", self.sigma_w1), ("sigma_w2", self.sigma_w2)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> NoiseRng {
        NoiseRng::seed_from_u64(self.seed)
    }
}

/// Samples both sensors. Two standard normals are drawn per call, `w1`
/// first, whatever the configured deviations, so the stream position only
/// depends on the number of calls.
pub fn measure(
    x: &PlantState,
    c: &DerivedConstants,
    noise: &NoiseConfig,
    rng: &mut NoiseRng,
) -> Measurement {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    Measurement {
        y1: x.cathode_pressure(c) + noise.sigma_w1 * z1,
        y2: x.p_sm + noise.sigma_w2 * z2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_constants, fixtures::default_params};

    fn constants() -> DerivedConstants {
        derive_constants(&default_params()).unwrap()
    }

    #[test]
    fn no_flow_state_has_zero_derivative() {
        let c = constants();
        let x = PlantState::no_flow_equilibrium(&c, 0.21);
        let d = plant_dynamics(&x, 0.0, 0.0, &c).unwrap();
        for v in d {
            assert!(v.abs() < 1e-9, "{d:?}");
        }
    }

    #[test]
    fn speed_derivative_vanishes_at_rest_and_unit_ratio() {
        let c = constants();
        for (x1, x2) in [(21_000.0, 80_000.0), (30_000.0, 95_000.0)] {
            let x = PlantState {
                p_o2: x1,
                p_n2: x2,
                omega_cp: 0.0,
                p_sm: c.c11,
            };
            let d = plant_dynamics(&x, 0.0, 150.0, &c).unwrap();
            assert_eq!(d[2], 0.0);
        }
    }

    #[test]
    fn speed_derivative_increases_with_current() {
        let c = constants();
        let x = PlantState {
            p_o2: 25_000.0,
            p_n2: 95_000.0,
            omega_cp: 5_000.0,
            p_sm: 140_000.0,
        };
        let mut last = f64::NEG_INFINITY;
        for u in [-50.0, 0.0, 10.0, 80.0, 200.0] {
            let d = plant_dynamics(&x, u, 200.0, &c).unwrap()[2];
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn domain_violations() {
        let c = constants();
        let mut x = PlantState::no_flow_equilibrium(&c, 0.21);
        x.p_o2 -= 1_000.0;
        assert!(matches!(
            plant_dynamics(&x, 0.0, 0.0, &c),
            Err(Error::PlantDomain { .. })
        ));
        let mut x = PlantState::no_flow_equilibrium(&c, 0.21);
        x.p_sm = 0.0;
        assert!(plant_dynamics(&x, 0.0, 0.0, &c).is_err());
        // inside the clamp tolerance
        let mut x = PlantState::no_flow_equilibrium(&c, 0.21);
        x.p_o2 -= 0.5 * RADICAND_TOLERANCE * c.c11;
        assert!(plant_dynamics(&x, 0.0, 0.0, &c).is_ok());
    }

    #[test]
    fn outlet_root_is_evaluated_once_per_call() {
        let c = constants();
        let x = PlantState {
            p_o2: 25_000.0,
            p_n2: 95_000.0,
            omega_cp: 5_000.0,
            p_sm: 140_000.0,
        };
        SQRT_EVALS.with(|n| n.set(0));
        for _ in 0..7 {
            plant_dynamics(&x, 60.0, 200.0, &c).unwrap();
        }
        assert_eq!(SQRT_EVALS.with(|n| n.get()), 7);
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let mut c = constants();
        c.c2 = 3_140.0;
        let x = PlantState {
            p_o2: 10_000.0,
            p_n2: 80_000.0,
            omega_cp: 1_000.0,
            p_sm: 150_000.0,
        };
        let noise = NoiseConfig::noiseless();
        let m = measure(&x, &c, &noise, &mut noise.rng());
        assert_eq!(
            m,
            Measurement {
                y1: 93_140.0,
                y2: 150_000.0
            }
        );
    }

    #[test]
    fn seeded_noise_repeats() {
        let c = constants();
        let x = PlantState::no_flow_equilibrium(&c, 0.21);
        let noise = NoiseConfig {
            sigma_w1: 50.0,
            sigma_w2: 20.0,
            seed: 7,
        };
        let run = || {
            let mut rng = noise.rng();
            (0..100)
                .map(|_| measure(&x, &c, &noise, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn noise_statistics() {
        let c = constants();
        let x = PlantState::no_flow_equilibrium(&c, 0.21);
        let noise = NoiseConfig {
            sigma_w1: 100.0,
            sigma_w2: 0.0,
            seed: 2024,
        };
        let mut rng = noise.rng();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| measure(&x, &c, &noise, &mut rng).y1)
            .collect();
        let truth = x.cathode_pressure(&c);
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - truth).abs() <= 3.0 * 100.0 / (n as f64).sqrt());
        assert!((var.sqrt() - 100.0).abs() <= 5.0);
    }
}
