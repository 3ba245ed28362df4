//! Closed-loop execution: the controller runs every `ts`, the plant is
//! integrated with fixed-step RK4 at `h` in between with the motor current
//! held.

pub mod metrics;
pub mod rk4;
pub mod trim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mfc::{ControllerConfig, ControllerState, Warmup};
use crate::params::DerivedConstants;
use crate::plant::{measure, plant_dynamics, NoiseConfig, PlantState};
use crate::scenario::{
    compute_stoichiometry, desired_stoichiometry, CurrentProfile, ReferenceSpec,
};

pub use metrics::{restoration_times, Restoration, RunMetrics};
pub use rk4::{rk4_step, rk4_step_with_retry};

/// Default settling band, as a fraction of the reference.
pub const DEFAULT_BAND: f64 = 0.02;
/// Halvings allowed per plant step under [`DomainPolicy::Lenient`].
pub const MAX_HALVINGS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainPolicy {
    /// Abort on the first plant domain error.
    Strict,
    /// Retry a rejected step with halved sub-steps before aborting.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Settle the plant at the initial load under the warm-up current first.
    Trim,
    State(PlantState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Integrator step, s.
    pub h: f64,
    /// Controller period, s; a whole multiple of `h`.
    pub ts: f64,
    pub duration: f64,
    pub initial: InitialCondition,
    pub noise: NoiseConfig,
    pub policy: DomainPolicy,
    pub band: f64,
}

impl SimConfig {
    pub fn substeps(&self) -> usize {
        (self.ts / self.h).round() as usize
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("h must be strictly positive, got {}", self.h));
        }
        let m = self.ts / self.h;
        if !(m.round() >= 1.0 && (m - m.round()).abs() <= 1e-9 * m) {
            return bad(format!(
                "ts = {} must be a whole multiple of h = {}",
                self.ts, self.h
            ));
        }
        if !(self.duration.is_finite() && self.duration >= tau) {
            return bad(format!(
                "duration {} s is shorter than tau = {tau} s",
                self.duration
            ));
        }
        if !(self.band > 0.0 && self.band < 1.0) {
            return bad(format!(
                "settling band must lie in (0, 1), got {}",
                self.band
            ));
        }
        self.noise.validate()
    }
}

/// One controller tick. Field names are the CSV column names.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub xi: f64,
    pub u_applied: f64,
    pub u_raw: f64,
    pub lambda: f64,
    pub lambda_ref: f64,
    pub e: f64,
    pub f_est: f64,
    pub y1: f64,
    pub y2: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

pub const TRACE_COLUMNS: [&str; 14] = [
    "t",
    "xi",
    "u_applied",
    "u_raw",
    "lambda",
    "lambda_ref",
    "e",
    "f_est",
    "y1",
    "y2",
    "x1",
    "x2",
    "x3",
    "x4",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        if self.records.is_empty() {
            out.write_record(TRACE_COLUMNS)?;
        }
        out.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != TRACE_COLUMNS {
            return Err(Error::Config(format!("unexpected trace header {header:?}")));
        }
        let records = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Trace { records })
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct AbortedRun {
    pub time: f64,
    pub cause: String,
    pub partial: Trace,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: RunMetrics,
    pub initial_state: PlantState,
    pub u_warmup: f64,
}

/// Initial plant state and warm-up current for a run.
pub fn initial_operating_point(
    c: &DerivedConstants,
    profile: &CurrentProfile,
    reference: &ReferenceSpec,
    ctrl: &ControllerConfig,
    sim: &SimConfig,
) -> Result<(PlantState, f64)> {
    let xi0 = profile.initial_current();
    let lambda0 = desired_stoichiometry(xi0, reference);
    match (sim.initial, ctrl.u_warmup) {
        (InitialCondition::Trim, Warmup::Trim) => {
            let (x, u) = trim::trim_for_ratio(c, xi0, lambda0, (ctrl.u_min, ctrl.u_max), sim.h)?;
            Ok((x, u))
        }
        (InitialCondition::Trim, Warmup::Fixed(u)) => {
            Ok((trim::trim_fixed(c, xi0, lambda0, u, sim.h)?, u))
        }
        (InitialCondition::State(x), Warmup::Fixed(u)) => {
            x.validate(c)?;
            Ok((x, u))
        }
        (InitialCondition::State(_), Warmup::Trim) => Err(Error::Config(
            "a trimmed warm-up current needs a trimmed initial state".into(),
        )),
    }
}

/// Runs one closed-loop experiment.
///
/// At every tick: sample the sensors, form the excess ratio and its
/// reference, step the controller, record, then integrate the plant over
/// one period with the new current held.
pub fn run_closed_loop(
    c: &DerivedConstants,
    profile: &CurrentProfile,
    reference: &ReferenceSpec,
    ctrl_cfg: &ControllerConfig,
    sim: &SimConfig,
) -> Result<RunOutput> {
    ctrl_cfg.validate()?;
    reference.validate()?;
    sim.validate(ctrl_cfg.tau)?;
    if (sim.ts - ctrl_cfg.ts).abs() > 1e-12 * ctrl_cfg.ts {
        return Err(Error::Config(format!(
            "simulation period {} s differs from controller period {} s",
            sim.ts, ctrl_cfg.ts
        )));
    }
    if sim.duration > profile.duration() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "duration {} s exceeds the profile's {} s",
            sim.duration,
            profile.duration()
        )));
    }

    let (x0, u0) = initial_operating_point(c, profile, reference, ctrl_cfg, sim)?;
    let mut ctrl = ControllerState::new(*ctrl_cfg, u0)?;
    let mut rng = sim.noise.rng();
    let substeps = sim.substeps();
    let ticks = sim.ticks();
    let halvings = match sim.policy {
        DomainPolicy::Strict => 0,
        DomainPolicy::Lenient => MAX_HALVINGS,
    };
    // the load seen by the plant over a step is the one at its midpoint
    let load_at = |t: f64| profile.current_at((t + 0.5 * sim.h).min(sim.duration));

    let mut x = x0;
    let mut trace = Trace {
        records: Vec::with_capacity(ticks + 1),
    };
    let abort = |time: f64, cause: Error, trace: Trace| {
        Error::Aborted(Box::new(AbortedRun {
            time,
            cause: cause.to_string(),
            partial: trace,
        }))
    };

    for k in 0..=ticks {
        let t = k as f64 * sim.ts;
        let tick = (|| -> Result<TraceRecord> {
            let xi = load_at(t)?;
            let m = measure(&x, c, &sim.noise, &mut rng);
            let lambda = compute_stoichiometry(m.y1, m.y2, xi, c)?;
            let lambda_ref = desired_stoichiometry(xi, reference);
            let out = ctrl.step(lambda, lambda_ref, 0.0)?;
            Ok(TraceRecord {
                t,
                xi,
                u_applied: out.u,
                u_raw: out.u_raw,
                lambda,
                lambda_ref,
                e: lambda - lambda_ref,
                f_est: out.f_est,
                y1: m.y1,
                y2: m.y2,
                x1: x.p_o2,
                x2: x.p_n2,
                x3: x.omega_cp,
                x4: x.p_sm,
            })
        })();
        let record = match tick {
            Ok(r) => r,
            Err(e) => return Err(abort(t, e, trace)),
        };
        trace.records.push(record);
        if k == ticks {
            break;
        }

        let u = record.u_applied;
        let mut state = x.to_array();
        for i in 0..substeps {
            let ti = (k * substeps + i) as f64 * sim.h;
            let stepped = load_at(ti).and_then(|xi| {
                let mut f = |s: &[f64; 4]| plant_dynamics(&PlantState::from_array(*s), u, xi, c);
                rk4_step_with_retry(&mut f, &state, sim.h, halvings)
            });
            match stepped {
                Ok(next) if next.iter().all(|v| v.is_finite()) => state = next,
                Ok(next) => {
                    let e = Error::Config(format!("non-finite plant state {next:?}"));
                    return Err(abort(ti, e, trace));
                }
                Err(e) => return Err(abort(ti, e, trace)),
            }
        }
        x = PlantState::from_array(state);
    }

    let metrics = RunMetrics::from_records(&trace.records, sim.band);
    Ok(RunOutput {
        trace,
        metrics,
        initial_state: x0,
        u_warmup: u0,
    })
}
