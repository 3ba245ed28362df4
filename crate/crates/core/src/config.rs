//! TOML file formats: parameter, uncertainty and profile files, and the
//! controller and simulation blocks shared by plan files.
//!
//! Temperatures may be written as a bare number (kelvin) or as a string
//! carrying a unit, `"80 C"`, `"80 degC"` or `"353.15 K"`. They are kelvin
//! from ingestion on.

use std::fmt;
use std::path::Path;

use serde::de::{self, DeserializeOwned, Deserializer, Visitor};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mfc::{ControllerConfig, Warmup};
use crate::params::{PhysicalParams, UncertaintySet};
use crate::plant::NoiseConfig;
use crate::scenario::CurrentProfile;
use crate::sim::{DomainPolicy, InitialCondition, SimConfig, DEFAULT_BAND};

const ZERO_CELSIUS: f64 = 273.15;

/// Parses a temperature string into kelvin.
pub fn parse_temperature(text: &str) -> std::result::Result<f64, String> {
    let s = text.trim();
    let (number, unit) = match s.find(|ch: char| ch.is_ascii_alphabetic() || ch == '°') {
        Some(i) => (s[..i].trim(), s[i..].trim()),
        None => (s, "K"),
    };
    let value: f64 = number
        .parse()
        .map_err(|_| format!("`{text}` is not a temperature"))?;
    let kelvin = match unit {
        "K" => value,
        "C" | "degC" | "°C" => value + ZERO_CELSIUS,
        other => return Err(format!("unknown temperature unit `{other}` in `{text}`")),
    };
    if !(kelvin.is_finite() && kelvin > 0.0) {
        return Err(format!("`{text}` is not above absolute zero"));
    }
    Ok(kelvin)
}

/// Serde hook for temperature fields.
pub fn kelvin<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    struct Temperature;

    impl Visitor<'_> for Temperature {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a temperature in kelvin or a string such as \"80 C\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
            parse_temperature(v).map_err(E::custom)
        }
    }

    d.deserialize_any(Temperature)
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Deserializes a whole TOML document. Errors carry the file path and the
/// line and column reported by the parser.
pub fn from_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_owned(),
    })
}

pub fn params_from_str(text: &str, path: &Path) -> Result<PhysicalParams> {
    let p: PhysicalParams = from_toml(text, path)?;
    p.validate()?;
    Ok(p)
}

pub fn load_params(path: &Path) -> Result<PhysicalParams> {
    params_from_str(&read(path)?, path)
}

/// Uncertainty files hold any subset of the nine keys as signed fractions;
/// missing keys are zero.
pub fn uncertainty_from_str(text: &str, path: &Path) -> Result<UncertaintySet> {
    let u: UncertaintySet = from_toml(text, path)?;
    u.validate()?;
    Ok(u)
}

pub fn load_uncertainty(path: &Path) -> Result<UncertaintySet> {
    uncertainty_from_str(&read(path)?, path)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    duration: f64,
    /// `[start time s, current A]` pairs.
    breakpoints: Vec<(f64, f64)>,
}

pub fn profile_from_str(text: &str, path: &Path) -> Result<CurrentProfile> {
    let f: ProfileFile = from_toml(text, path)?;
    CurrentProfile::new(f.breakpoints, f.duration)
}

pub fn load_profile(path: &Path) -> Result<CurrentProfile> {
    profile_from_str(&read(path)?, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupValue(pub Warmup);

impl Default for WarmupValue {
    fn default() -> Self {
        WarmupValue(Warmup::Trim)
    }
}

impl<'de> Deserialize<'de> for WarmupValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Current(f64),
            Keyword(String),
        }
        match Raw::deserialize(d)? {
            Raw::Current(u) => Ok(WarmupValue(Warmup::Fixed(u))),
            Raw::Keyword(k) if k == "trim" => Ok(WarmupValue(Warmup::Trim)),
            Raw::Keyword(k) => Err(de::Error::custom(format!(
                "u_warmup must be a current or \"trim\", got \"{k}\""
            ))),
        }
    }
}

/// `[controller]` block.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerBlock {
    pub alpha: f64,
    pub kp: f64,
    pub tau: f64,
    pub ts: f64,
    pub u_min: f64,
    pub u_max: f64,
    #[serde(default)]
    pub u_warmup: WarmupValue,
    #[serde(default)]
    pub strict: bool,
}

impl ControllerBlock {
    pub fn resolve(&self) -> ControllerConfig {
        ControllerConfig {
            alpha: self.alpha,
            kp: self.kp,
            tau: self.tau,
            ts: self.ts,
            u_min: self.u_min,
            u_max: self.u_max,
            u_warmup: self.u_warmup.0,
            strict: self.strict,
        }
    }
}

fn default_band() -> f64 {
    DEFAULT_BAND
}

/// `[sim]` block. The controller period comes from the controller block and
/// the noise seed from the run.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub h: f64,
    /// Defaults to the profile duration.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default)]
    pub policy: DomainPolicy,
    #[serde(default)]
    pub sigma_w1: f64,
    #[serde(default)]
    pub sigma_w2: f64,
}

impl SimBlock {
    pub fn resolve(&self, ts: f64, profile: &CurrentProfile, seed: u64) -> SimConfig {
        SimConfig {
            h: self.h,
            ts,
            duration: self.duration.unwrap_or(profile.duration()),
            initial: InitialCondition::Trim,
            noise: NoiseConfig {
                sigma_w1: self.sigma_w1,
                sigma_w2: self.sigma_w2,
                seed,
            },
            policy: self.policy,
            band: self.band,
        }
    }
}
