//! Steady operating points of the plant, used to start experiments from
//! rest at the initial load.

use crate::error::{Error, Result};
use crate::params::DerivedConstants;
use crate::plant::{plant_dynamics, PlantState};
use crate::sim::rk4::rk4_step;

/// Relative rate, 1/s, below which every state counts as settled.
pub const SETTLE_RATE: f64 = 1e-10;
/// Longest simulated time spent settling one input, s.
pub const SETTLE_HORIZON: f64 = 300.0;

/// Noise-free excess ratio at state `x`.
pub fn state_stoichiometry(x: &PlantState, xi: f64, c: &DerivedConstants) -> f64 {
    c.c19 * (x.p_sm - x.cathode_pressure(c)) / (c.c20 * xi)
}

fn settled(x: &[f64; 4], dx: &[f64; 4], c: &DerivedConstants) -> bool {
    let scale = [c.c11, c.c11, 1.0, c.c11];
    x.iter()
        .zip(dx)
        .zip(scale)
        .all(|((v, d), s)| d.abs() <= SETTLE_RATE * v.abs().max(s))
}

/// Integrates the plant under constant `u` and `xi` until every derivative
/// is negligible.
pub fn settle(
    c: &DerivedConstants,
    start: PlantState,
    u: f64,
    xi: f64,
    h: f64,
) -> Result<PlantState> {
    let f = |x: &[f64; 4]| plant_dynamics(&PlantState::from_array(*x), u, xi, c);
    let mut x = start.to_array();
    let steps = (SETTLE_HORIZON / h).ceil() as usize;
    for _ in 0..steps {
        let dx = f(&x).map_err(|e| Error::Trim(format!("u = {u} A: {e}")))?;
        if settled(&x, &dx, c) {
            return Ok(PlantState::from_array(x));
        }
        x = rk4_step(f, &x, h).map_err(|e| Error::Trim(format!("u = {u} A: {e}")))?;
    }
    Err(Error::Trim(format!(
        "u = {u} A did not settle within {SETTLE_HORIZON} s"
    )))
}

/// Approximate steady state delivering excess ratio `lambda` at `xi`,
/// neglecting the oxygen consumption term, together with the motor current
/// that holds it.
pub fn operating_point_guess(c: &DerivedConstants, xi: f64, lambda: f64) -> (PlantState, f64) {
    let inlet_drop = lambda * c.c20 * xi / c.c19;
    let omega = c.c16 * inlet_drop / c.c21;
    let o2_share = c.c1 / (c.c1 + c.c8);
    let mix_slope = c.c4 * o2_share + c.c5 * (1.0 - o2_share);
    // (c1 + c8) drop = c3 s / (a s + c6) c17 sqrt(s + c2 - c11), increasing in s
    let residual = |s: f64| {
        (c.c1 + c.c8) * inlet_drop
            - c.c3 * s / (mix_slope * s + c.c6) * c.c17 * (s + c.c2 - c.c11).max(0.0).sqrt()
    };
    let mut lo = c.c11 - c.c2;
    let mut hi = 2.0 * lo;
    while residual(hi) > 0.0 && hi < 1e3 * c.c11 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let dry = 0.5 * (lo + hi);
    let x = PlantState {
        p_o2: o2_share * dry,
        p_n2: (1.0 - o2_share) * dry,
        omega_cp: omega,
        p_sm: dry + c.c2 + inlet_drop,
    };
    let ratio_term = (x.p_sm / c.c11).powf(c.c12) - 1.0;
    let u = (c.c9 * omega + c.c10 * ratio_term) / c.c13;
    (x, u)
}

/// Steady state under a prescribed current `u`.
pub fn trim_fixed(
    c: &DerivedConstants,
    xi: f64,
    lambda_hint: f64,
    u: f64,
    h: f64,
) -> Result<PlantState> {
    let (guess, _) = operating_point_guess(c, xi, lambda_hint);
    settle(c, guess, u, xi, h)
}

/// Motor current and steady state holding the excess ratio at
/// `lambda_target`, found by a safeguarded secant iteration on the settled
/// ratio, which increases with `u`.
pub fn trim_for_ratio(
    c: &DerivedConstants,
    xi: f64,
    lambda_target: f64,
    bounds: (f64, f64),
    h: f64,
) -> Result<(PlantState, f64)> {
    let (guess, u_guess) = operating_point_guess(c, xi, lambda_target);
    let clamp = |u: f64| u.clamp(bounds.0, bounds.1);

    let mut state = guess;
    let eval = |u: f64, from: PlantState| -> Result<(PlantState, f64)> {
        let x = settle(c, from, u, xi, h)?;
        Ok((x, state_stoichiometry(&x, xi, c) - lambda_target))
    };

    let mut u0 = clamp(u_guess);
    let (x0, mut r0) = eval(u0, state)?;
    state = x0;
    let mut u1 = clamp(u0 * 1.01 + 1e-3);
    if u1 == u0 {
        u1 = clamp(u0 * 0.99 - 1e-3);
    }
    // bracket [lo, hi] with residual(lo) < 0 < residual(hi), once known
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let note = |u: f64, r: f64, lo: &mut Option<f64>, hi: &mut Option<f64>| {
        if r < 0.0 {
            *lo = Some(lo.map_or(u, |l: f64| l.max(u)));
        } else {
            *hi = Some(hi.map_or(u, |v: f64| v.min(u)));
        }
    };
    note(u0, r0, &mut lo, &mut hi);

    for _ in 0..100 {
        let (x1, r1) = eval(u1, state)?;
        state = x1;
        note(u1, r1, &mut lo, &mut hi);
        if r1.abs() <= 1e-11 * lambda_target {
            return Ok((x1, u1));
        }
        let secant = if r1 != r0 {
            u1 - r1 * (u1 - u0) / (r1 - r0)
        } else {
            f64::NAN
        };
        let next = match (lo, hi) {
            (Some(l), Some(h)) if !(secant > l && secant < h) => 0.5 * (l + h),
            _ if secant.is_finite() => clamp(secant),
            _ => return Err(Error::Trim("flat response to motor current".into())),
        };
        if next == u1 {
            if u1 == bounds.0 || u1 == bounds.1 {
                return Err(Error::Trim(format!(
                    "ratio {lambda_target} unreachable within current bounds [{}, {}]",
                    bounds.0, bounds.1
                )));
            }
            // stalled at float resolution; settling accuracy limits the residual
            return Ok((x1, u1));
        }
        u0 = u1;
        r0 = r1;
        u1 = next;
    }
    Err(Error::Trim(format!(
        "no convergence to ratio {lambda_target} at {xi} A"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_constants, fixtures::default_params};

    #[test]
    fn trims_to_target_ratio() {
        let c = derive_constants(&default_params()).unwrap();
        for (xi, lambda) in [(60.0, 2.54), (200.0, 2.2), (340.0, 1.9)] {
            let (x, u) = trim_for_ratio(&c, xi, lambda, (0.0, 400.0), 1e-3).unwrap();
            assert!((state_stoichiometry(&x, xi, &c) - lambda).abs() < 1e-9);
            let dx = plant_dynamics(&x, u, xi, &c).unwrap();
            assert!(settled(&x.to_array(), &dx, &c));
            assert!(x.p_sm > x.cathode_pressure(&c));
            assert!(x.cathode_pressure(&c) > c.c11);
        }
    }

    #[test]
    fn guess_is_close() {
        let c = derive_constants(&default_params()).unwrap();
        let (g, u) = operating_point_guess(&c, 200.0, 2.2);
        let x = settle(&c, g, u, 200.0, 1e-3).unwrap();
        let l = state_stoichiometry(&x, 200.0, &c);
        assert!((l - 2.2).abs() < 0.05, "{l}");
    }

    #[test]
    fn unreachable_ratio_is_reported() {
        let c = derive_constants(&default_params()).unwrap();
        assert!(trim_for_ratio(&c, 200.0, 2.2, (0.0, 1.0), 1e-3).is_err());
    }
}
