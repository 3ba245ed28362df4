//! Physical parameters of the air-feed system, the twenty-one lumped
//! constants the plant model is written in, and multiplicative parameter
//! uncertainties.
//!
//! Everything here is a pure value transformation. Temperatures are kelvin
//! internally; file loaders convert from Celsius where needed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw fuel-cell and compressor parameters, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Universal gas constant, J/(mol K).
    pub r_gas: f64,
    /// Stack temperature, K.
    #[serde(deserialize_with = "crate::config::kelvin")]
    pub t_fc: f64,
    /// Atmospheric temperature, K.
    #[serde(deserialize_with = "crate::config::kelvin")]
    pub t_atm: f64,
    /// Atmospheric pressure, Pa.
    pub p_atm: f64,
    /// Vapor saturation pressure, Pa.
    pub p_sat: f64,
    /// Cathode volume, m^3.
    pub v_ca: f64,
    /// Supply manifold volume, m^3.
    pub v_sm: f64,
    /// Molar masses, kg/mol.
    pub m_o2: f64,
    pub m_n2: f64,
    pub m_v: f64,
    pub m_a: f64,
    /// Oxygen mass fraction of dry air.
    pub x_o2: f64,
    /// Atmospheric humidity ratio.
    pub omega_atm: f64,
    /// Cathode inlet flow constant, kg/(s Pa).
    pub k_ca_in: f64,
    /// Cathode outlet flow constant.
    pub k_ca_out: f64,
    /// Faraday constant, C/mol.
    pub faraday: f64,
    pub n_cells: u32,
    /// Motor friction, N m s.
    pub f_motor: f64,
    /// Compressor inertia, kg m^2.
    pub j_cp: f64,
    /// Motor torque constant, N m / A.
    pub k_t: f64,
    /// Motor mechanical efficiency.
    pub eta_cm: f64,
    /// Compressor efficiency.
    pub eta_cp: f64,
    /// Compressor volumetric efficiency.
    pub eta_vc: f64,
    /// Compressor displaced volume per revolution, m^3.
    pub v_cpr: f64,
    /// Air density, kg/m^3.
    pub rho_a: f64,
    /// Specific heat of air, J/(kg K).
    pub c_p: f64,
    /// Heat-capacity ratio.
    pub gamma: f64,
}

impl PhysicalParams {
    /// Named view of every real-valued field, in declaration order.
    pub fn fields(&self) -> [(&'static str, f64); 26] {
        [
            ("r_gas", self.r_gas),
            ("t_fc", self.t_fc),
            ("t_atm", self.t_atm),
            ("p_atm", self.p_atm),
            ("p_sat", self.p_sat),
            ("v_ca", self.v_ca),
            ("v_sm", self.v_sm),
            ("m_o2", self.m_o2),
            ("m_n2", self.m_n2),
            ("m_v", self.m_v),
            ("m_a", self.m_a),
            ("x_o2", self.x_o2),
            ("omega_atm", self.omega_atm),
            ("k_ca_in", self.k_ca_in),
            ("k_ca_out", self.k_ca_out),
            ("faraday", self.faraday),
            ("f_motor", self.f_motor),
            ("j_cp", self.j_cp),
            ("k_t", self.k_t),
            ("eta_cm", self.eta_cm),
            ("eta_cp", self.eta_cp),
            ("eta_vc", self.eta_vc),
            ("v_cpr", self.v_cpr),
            ("rho_a", self.rho_a),
            ("c_p", self.c_p),
            ("gamma", self.gamma),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        for (name, value) in [
            ("eta_cm", self.eta_cm),
            ("eta_cp", self.eta_cp),
            ("eta_vc", self.eta_vc),
        ] {
            if value > 1.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("efficiency must lie in (0, 1], got {value}"),
                });
            }
        }
        if self.gamma <= 1.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must exceed 1, got {}", self.gamma),
            });
        }
        if self.x_o2 >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "x_o2",
                reason: format!("must lie in (0, 1), got {}", self.x_o2),
            });
        }
        if self.n_cells == 0 {
            return Err(Error::InvalidParameter {
                name: "n_cells",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// The lumped constants `c1..c21` of the air-feed model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c11: f64,
    pub c12: f64,
    pub c13: f64,
    pub c14: f64,
    pub c15: f64,
    pub c16: f64,
    pub c17: f64,
    pub c18: f64,
    pub c19: f64,
    pub c20: f64,
    pub c21: f64,
}

impl DerivedConstants {
    /// `c1..c21` as an array; index 0 holds `c1`.
    pub fn as_array(&self) -> [f64; 21] {
        [
            self.c1, self.c2, self.c3, self.c4, self.c5, self.c6, self.c7, self.c8, self.c9,
            self.c10, self.c11, self.c12, self.c13, self.c14, self.c15, self.c16, self.c17,
            self.c18, self.c19, self.c20, self.c21,
        ]
    }

    /// Constant `c{index}`, 1-based.
    pub fn get(&self, index: usize) -> Option<f64> {
        index
            .checked_sub(1)
            .and_then(|i| self.as_array().get(i).copied())
    }
}

/// Evaluates the twenty-one model constants on `p`.
pub fn derive_constants(p: &PhysicalParams) -> Result<DerivedConstants> {
    p.validate()?;
    let n = f64::from(p.n_cells);
    let humid = 1.0 + p.omega_atm;
    // c7 carries k_ca,in rather than the cell count; kept as tabulated.
    let c = DerivedConstants {
        c1: p.r_gas * p.t_fc * p.k_ca_in * p.x_o2 / (p.v_ca * p.m_o2 * humid),
        c2: p.p_sat,
        c3: p.r_gas * p.t_fc / p.v_ca,
        c4: p.m_o2,
        c5: p.m_n2,
        c6: p.m_v * p.p_sat,
        c7: p.r_gas * p.t_fc * p.k_ca_in / (p.v_ca * 4.0 * p.faraday),
        c8: p.r_gas * p.t_fc * p.k_ca_in * (1.0 - p.x_o2) / (p.v_ca * p.m_n2 * humid),
        c9: p.f_motor / p.j_cp,
        c10: p.eta_vc * p.v_cpr * p.rho_a * p.c_p * p.t_atm / (2.0 * PI * p.j_cp * p.eta_cp),
        c11: p.p_atm,
        c12: (p.gamma - 1.0) / p.gamma,
        c13: p.eta_cm * p.k_t / p.j_cp,
        c14: p.r_gas * p.t_atm / (p.m_a * p.v_sm),
        c15: 1.0 / p.eta_cp,
        c16: p.k_ca_in,
        c17: p.k_ca_out,
        c18: p.eta_cm * p.k_t,
        c19: p.k_ca_in * p.x_o2 / humid,
        c20: n * p.m_o2 / (4.0 * p.faraday),
        c21: p.eta_vc * p.v_cpr * p.rho_a / (2.0 * PI),
    };
    for (i, value) in c.as_array().into_iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidConstant {
                index: i + 1,
                value,
            });
        }
    }
    Ok(c)
}

/// Signed multiplicative deltas on the nine parameters subject to
/// uncertainty. `0.2` means +20 %.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySet {
    pub f_motor: f64,
    pub k_t: f64,
    pub eta_cp: f64,
    pub eta_cm: f64,
    pub k_ca_out: f64,
    pub t_atm: f64,
    pub v_ca: f64,
    pub v_sm: f64,
    pub t_fc: f64,
}

impl UncertaintySet {
    /// The reference robustness case: friction +20 %, motor constant -5 %,
    /// compressor efficiency -10 %, motor efficiency -20 %, outlet constant
    /// +10 %, ambient temperature +10 %, cathode volume +10 %, manifold
    /// volume -10 %, stack temperature +12 %.
    pub const fn reference_case() -> Self {
        UncertaintySet {
            f_motor: 0.20,
            k_t: -0.05,
            eta_cp: -0.10,
            eta_cm: -0.20,
            k_ca_out: 0.10,
            t_atm: 0.10,
            v_ca: 0.10,
            v_sm: -0.10,
            t_fc: 0.12,
        }
    }

    pub fn deltas(&self) -> [(&'static str, f64); 9] {
        [
            ("f_motor", self.f_motor),
            ("k_t", self.k_t),
            ("eta_cp", self.eta_cp),
            ("eta_cm", self.eta_cm),
            ("k_ca_out", self.k_ca_out),
            ("t_atm", self.t_atm),
            ("v_ca", self.v_ca),
            ("v_sm", self.v_sm),
            ("t_fc", self.t_fc),
        ]
    }

    pub fn is_identity(&self) -> bool {
        self.deltas().iter().all(|&(_, d)| d == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in self.deltas() {
            if !(d > -1.0 && d < 1.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("uncertainty delta must lie in (-1, 1), got {d}"),
                });
            }
        }
        Ok(())
    }
}

/// Scales each parameter listed in `u` by `1 + delta`, leaving every other
/// field untouched.
pub fn apply_uncertainties(p: &PhysicalParams, u: &UncertaintySet) -> Result<PhysicalParams> {
    p.validate()?;
    u.validate()?;
    let scale = |value: f64, delta: f64| value * (1.0 + delta);
    let out = PhysicalParams {
        f_motor: scale(p.f_motor, u.f_motor),
        k_t: scale(p.k_t, u.k_t),
        eta_cp: scale(p.eta_cp, u.eta_cp),
        eta_cm: scale(p.eta_cm, u.eta_cm),
        k_ca_out: scale(p.k_ca_out, u.k_ca_out),
        t_atm: scale(p.t_atm, u.t_atm),
        v_ca: scale(p.v_ca, u.v_ca),
        v_sm: scale(p.v_sm, u.v_sm),
        t_fc: scale(p.t_fc, u.t_fc),
        ..*p
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::PhysicalParams;

    /// Same values as the shipped default parameter file.
    pub fn default_params() -> PhysicalParams {
        PhysicalParams {
            r_gas: 8.314,
            t_fc: 353.15,
            t_atm: 298.15,
            p_atm: 101_325.0,
            p_sat: 3_140.0,
            v_ca: 0.01,
            v_sm: 0.02,
            m_o2: 32e-3,
            m_n2: 28e-3,
            m_v: 18e-3,
            m_a: 29e-3,
            x_o2: 0.23,
            omega_atm: 0.0098,
            k_ca_in: 0.3629e-5,
            k_ca_out: 3.0e-4,
            faraday: 96_485.0,
            n_cells: 381,
            f_motor: 2.0e-5,
            j_cp: 5.0e-5,
            k_t: 0.0153,
            eta_cm: 0.98,
            eta_cp: 0.8,
            eta_vc: 0.95,
            v_cpr: 5.4e-5,
            rho_a: 1.23,
            c_p: 1004.0,
            gamma: 1.4,
        }
    }
}
