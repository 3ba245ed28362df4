//! Model-free control: the ultra-local model `dy/dt = F + alpha * u`, a
//! windowed integral estimator of `F`, and the intelligent proportional (iP)
//! law closing the loop.
//!
//! Nothing in this module knows about the fuel cell.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Control held while the estimator window fills.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Warmup {
    /// A fixed motor current, A.
    Fixed(f64),
    /// Solve for the current that holds the initial reference in steady
    /// state (see [`crate::sim::trim`]).
    Trim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Input gain of the ultra-local model.
    pub alpha: f64,
    /// Proportional gain, 1/s.
    pub kp: f64,
    /// Estimation window length, s.
    pub tau: f64,
    /// Controller sample period, s.
    pub ts: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub u_warmup: Warmup,
    /// Fail on a degenerate estimate instead of falling back to the warm-up
    /// control.
    pub strict: bool,
}

impl ControllerConfig {
    /// Number of sample intervals spanning the window.
    pub fn window_intervals(&self) -> usize {
        (self.tau / self.ts).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha.is_finite() && self.alpha != 0.0) {
            return bad(format!(
                "alpha must be finite and non-zero, got {}",
                self.alpha
            ));
        }
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return bad(format!("kp must be strictly positive, got {}", self.kp));
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return bad(format!("ts must be strictly positive, got {}", self.ts));
        }
        if !(self.tau.is_finite() && self.tau >= 2.0 * self.ts) {
            return bad(format!(
                "tau = {} must be at least 2 ts = {}",
                self.tau,
                2.0 * self.ts
            ));
        }
        let ratio = self.tau / self.ts;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!("tau / ts = {ratio} must be an integer"));
        }
        if !(self.u_min.is_finite() && self.u_max.is_finite() && self.u_min < self.u_max) {
            return bad(format!(
                "need u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            ));
        }
        if let Warmup::Fixed(u0) = self.u_warmup {
            if !(u0 >= self.u_min && u0 <= self.u_max) {
                return bad(format!(
                    "u_warmup = {u0} outside [{}, {}]",
                    self.u_min, self.u_max
                ));
            }
        }
        Ok(())
    }
}

/// One estimator node: time, output and input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: f64,
    pub u: f64,
}

/// Composite-trapezoid estimate of
///
/// ```text
/// F = -(6 / tau^3) * integral_0^tau [ (tau - 2s) y(t - tau + s) + alpha s (tau - s) u(t - tau + s) ] ds
/// ```
///
/// over uniformly spaced `samples`, oldest first, spanning exactly `tau`.
pub fn estimate_f(samples: &[Sample], alpha: f64, tau: f64) -> Result<f64> {
    let len = samples.len();
    if len < 3 {
        return Err(Error::Window(format!("need at least 3 samples, got {len}")));
    }
    let n = len - 1;
    let span = samples[n].t - samples[0].t;
    if !(tau > 0.0) || (span - tau).abs() > 1e-6 * tau {
        return Err(Error::Window(format!(
            "samples span {span} s, expected {tau} s"
        )));
    }
    let ts = tau / n as f64;
    if samples
        .windows(2)
        .any(|w| ((w[1].t - w[0].t) - ts).abs() > 1e-6 * ts)
    {
        return Err(Error::Window(format!(
            "samples not uniformly spaced at {ts} s"
        )));
    }

    let nf = n as f64;
    let weight = |j: usize| if j == 0 || j == n { 0.5 } else { 1.0 };

    // The output kernel is odd about the window centre; pairing j with n - j
    // makes constants cancel exactly.
    let mut y_sum = 0.0;
    for j in 0..n.div_ceil(2) {
        let k = (n - 2 * j) as f64;
        y_sum += weight(j) * k * (samples[j].y - samples[n - j].y);
    }
    let u_sum: f64 = (1..n).map(|j| (j * (n - j)) as f64 * samples[j].u).sum();

    let n3 = nf * nf * nf;
    Ok(-6.0 / (n3 * ts) * y_sum - 6.0 * alpha / n3 * u_sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpOutput {
    /// Saturated control.
    pub u: f64,
    /// Control before saturation.
    pub u_raw: f64,
}

/// The iP law `u = -(F_est - dy_ref/dt + kp e) / alpha`, clamped to
/// `[u_min, u_max]`.
pub fn ip_control(f_est: f64, y_ref_dot: f64, error: f64, cfg: &ControllerConfig) -> IpOutput {
    let u_raw = -(f_est - y_ref_dot + cfg.kp * error) / cfg.alpha;
    IpOutput {
        u: u_raw.clamp(cfg.u_min, cfg.u_max),
        u_raw,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub u_raw: f64,
    /// Latest estimate of `F`; zero until the window first fills.
    pub f_est: f64,
    pub warming_up: bool,
}

/// Sliding window and last applied input of one iP loop.
#[derive(Debug, Clone)]
pub struct ControllerState {
    cfg: ControllerConfig,
    u_warmup: f64,
    /// `(y_k, u_{k-1})`: each output with the input held up to its instant.
    window: VecDeque<(f64, f64)>,
    ticks: u64,
    f_est: f64,
    last_u: f64,
    scratch: Vec<Sample>,
}

impl ControllerState {
    /// `u_warmup` is the resolved warm-up current; it must lie within the
    /// saturation bounds.
    pub fn new(cfg: ControllerConfig, u_warmup: f64) -> Result<Self> {
        cfg.validate()?;
        if !(u_warmup >= cfg.u_min && u_warmup <= cfg.u_max) {
            return Err(Error::Config(format!(
                "warm-up current {u_warmup} outside [{}, {}]",
                cfg.u_min, cfg.u_max
            )));
        }
        let capacity = cfg.window_intervals() + 1;
        Ok(ControllerState {
            cfg,
            u_warmup,
            window: VecDeque::with_capacity(capacity),
            ticks: 0,
            f_est: 0.0,
            last_u: u_warmup,
            scratch: Vec::with_capacity(capacity),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn capacity(&self) -> usize {
        self.cfg.window_intervals() + 1
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn f_est(&self) -> f64 {
        self.f_est
    }

    pub fn last_u(&self) -> f64 {
        self.last_u
    }

    /// Timestamps currently held, oldest first.
    pub fn timestamps(&self) -> Vec<f64> {
        let first = self.ticks - self.window.len() as u64;
        (0..self.window.len() as u64)
            .map(|i| (first + i) as f64 * self.cfg.ts)
            .collect()
    }

    /// One controller tick. Must be called every `ts` seconds with the latest
    /// output `y`, the reference `y_ref` and its derivative.
    pub fn step(&mut self, y: f64, y_ref: f64, y_ref_dot: f64) -> Result<ControlOutput> {
        let capacity = self.capacity();
        if self.window.len() == capacity {
            self.window.pop_front();
        }
        self.window.push_back((y, self.last_u));
        self.ticks += 1;

        if self.window.len() < capacity {
            return Ok(self.hold_warmup());
        }

        // Node inputs: the held input is piecewise constant, so each interior
        // node takes the mean of the values on either side of it.
        let n = capacity - 1;
        let first = self.ticks - capacity as u64;
        self.scratch.clear();
        for (j, &(yj, u_left)) in self.window.iter().enumerate() {
            let u_right = if j < n { self.window[j + 1].1 } else { u_left };
            self.scratch.push(Sample {
                t: (first + j as u64) as f64 * self.cfg.ts,
                y: yj,
                u: 0.5 * (u_left + u_right),
            });
        }
        let estimate =
            estimate_f(&self.scratch, self.cfg.alpha, n as f64 * self.cfg.ts).and_then(|f| {
                if f.is_finite() {
                    Ok(f)
                } else {
                    Err(Error::Window(format!("non-finite estimate {f}")))
                }
            });
        let f_est = match estimate {
            Ok(f) => f,
            Err(e) if self.cfg.strict => return Err(e),
            Err(e) => {
                log::warn!("estimator degraded to warm-up control: {e}");
                return Ok(self.hold_warmup());
            }
        };

        let out = ip_control(f_est, y_ref_dot, y - y_ref, &self.cfg);
        self.f_est = f_est;
        self.last_u = out.u;
        Ok(ControlOutput {
            u: out.u,
            u_raw: out.u_raw,
            f_est,
            warming_up: false,
        })
    }

    fn hold_warmup(&mut self) -> ControlOutput {
        self.last_u = self.u_warmup;
        ControlOutput {
            u: self.u_warmup,
            u_raw: self.u_warmup,
            f_est: self.f_est,
            warming_up: true,
        }
    }
}
