#![allow(dead_code, clippy::excessive_precision)]

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::path::PathBuf;

use airfeed::mfc::{ControllerConfig, ControllerState, Warmup};
use airfeed::params::PhysicalParams;
use airfeed::sim::rk4_step;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn default_plan() -> PathBuf {
    repo_root().join("configs/plans/default.toml")
}

pub fn default_params() -> PhysicalParams {
    airfeed::config::load_params(&repo_root().join("configs/params/default.toml")).unwrap()
}

/// Values produced by `tests/data/oracle.py` (50-digit arithmetic).
pub struct ConstantsCase {
    pub params: PhysicalParams,
    pub constants: [f64; 21],
}

pub fn oracle_constants() -> Vec<ConstantsCase> {
    vec![
        ConstantsCase {
            params: PhysicalParams {
                r_gas: 4.566553503106407,
                t_fc: 636.9291858101317,
                t_atm: 565.4628308507015,
                p_atm: 92743.4612587801,
                p_sat: 2880.903584777309,
                v_ca: 0.014771402089675135,
                v_sm: 0.026873059415043553,
                m_o2: 0.037208001958283235,
                m_n2: 0.026494655200302464,
                m_v: 0.03187459381036893,
                m_a: 0.04036235325862542,
                x_o2: 0.21641996911435551,
                omega_atm: 0.01608923910532916,
                k_ca_in: 4.737678881071375e-06,
                k_ca_out: 0.0004342865274262518,
                faraday: 172358.7890490851,
                n_cells: 350,
                f_motor: 3.5614661761288584e-05,
                j_cp: 8.834039664812316e-05,
                k_t: 0.02214652567481885,
                eta_cm: 0.5157021311891001,
                eta_cp: 0.6859087718390803,
                eta_vc: 0.5783657763629455,
                v_cpr: 7.026467950059337e-05,
                rho_a: 0.6639708703512851,
                c_p: 1564.5993916646382,
                gamma: 1.1064149009690905,
            },
            constants: [
                5.3401410765582936,
                2880.9035847773089,
                196905.56028699482,
                0.037208001958283235,
                0.026494655200302464,
                91.827631571612475,
                1.3531008770773408e-6,
                27.152938550143888,
                0.40315261321667654,
                62703.29057534084,
                92743.461258780095,
                0.096179923892821226,
                129.28412054148108,
                2380669.0281729357,
                1.4579198299487677,
                4.7376788810713747e-6,
                0.0004342865274262518,
                0.011421010488938205,
                1.0090927820650942e-6,
                1.8889087056782524e-5,
                4.294462495468905e-6,
            ],
        },
        ConstantsCase {
            params: PhysicalParams {
                r_gas: 15.835190597981333,
                t_fc: 334.24505855073846,
                t_atm: 266.0104478798513,
                p_atm: 80360.33436169385,
                p_sat: 4589.250579296074,
                v_ca: 0.011464298860504851,
                v_sm: 0.033467688954441584,
                m_o2: 0.022677579336159936,
                m_n2: 0.048073068697475616,
                m_v: 0.020839291752534336,
                m_a: 0.04807364934953397,
                x_o2: 0.15193433343930166,
                omega_atm: 0.016711183821717983,
                k_ca_in: 2.5649004972501185e-06,
                k_ca_out: 0.0005300242117166652,
                faraday: 56986.29369151489,
                n_cells: 564,
                f_motor: 3.7592063400108394e-05,
                j_cp: 3.083689326373118e-05,
                k_t: 0.027867563300566663,
                eta_cm: 0.9263886476688867,
                eta_cp: 0.7490596448129281,
                eta_vc: 0.7885930166898918,
                v_cpr: 7.445886871195114e-05,
                rho_a: 1.1038412838569267,
                c_p: 551.1655428789691,
                gamma: 1.170703188782259,
            },
            constants: [
                7.8032036651235874,
                4589.2505792960737,
                461679.71308027244,
                0.022677579336159936,
                0.048073068697475616,
                95.636731747438095,
                5.1949444723503816e-6,
                20.54666537206324,
                1.2190613068120682,
                65477.163954370499,
                80360.334361693851,
                0.14581252568366272,
                837.18531756902934,
                2618117.7437620756,
                1.3350071745618366,
                2.5649004972501185e-6,
                0.00053002421171666517,
                0.025816194279839049,
                3.8329119772539459e-7,
                5.6110662393800428e-5,
                1.0315638746838448e-5,
            ],
        },
        ConstantsCase {
            params: PhysicalParams {
                r_gas: 10.46959306700961,
                t_fc: 346.0230054704847,
                t_atm: 223.85784378368496,
                p_atm: 142256.92000011718,
                p_sat: 3600.2423762950834,
                v_ca: 0.009951050903295578,
                v_sm: 0.025296165877308735,
                m_o2: 0.04951395162661601,
                m_n2: 0.01620413907976347,
                m_v: 0.010822056347998217,
                m_a: 0.03515958882027784,
                x_o2: 0.1549745305245308,
                omega_atm: 0.010618244684450062,
                k_ca_in: 4.232746761185357e-06,
                k_ca_out: 0.0005587575516368972,
                faraday: 156658.3131126111,
                n_cells: 222,
                f_motor: 1.775198811045246e-05,
                j_cp: 5.5081540256118295e-05,
                k_t: 0.02788597860046578,
                eta_cm: 0.9003541807252267,
                eta_cp: 0.7369286187841204,
                eta_vc: 0.9114608944172262,
                v_cpr: 0.00010307053052304565,
                rho_a: 2.003336459951595,
                c_p: 726.9336366527322,
                gamma: 1.1015421398677405,
            },
            constants: [
                4.7723657596651167,
                3600.2423762950834,
                364054.01744049428,
                0.04951395162661601,
                0.016204139079763469,
                38.962025862716393,
                2.4590914337723107e-6,
                79.514222494336277,
                0.32228561561476343,
                120083.17467249356,
                142256.92000011718,
                0.092181802395623683,
                455.8198136762294,
                2635139.6162162201,
                1.35698353206845,
                4.2327467611853569e-6,
                0.00055875755163689719,
                0.02510725741654357,
                6.4907589546708101e-7,
                1.7541516059232804e-5,
                2.9953431197494296e-5,
            ],
        },
    ]
}

/// `(state, u, xi, derivative)` on the default parameters, same source.
pub fn oracle_rhs() -> Vec<([f64; 4], f64, f64, [f64; 4])> {
    vec![
        (
            [25000.0, 120000.0, 5000.0, 160000.0],
            40.0,
            200.0,
            [
                -23051.18691242306,
                -198245.58469469031,
                -483.3073580441361,
                35997.278120299793,
            ],
        ),
        (
            [18000.0, 90000.0, 9000.0, 190000.0],
            120.0,
            60.0,
            [
                548249.4013878342,
                2039159.2648363024,
                17597.606070446869,
                -1042641.4102372623,
            ],
        ),
    ]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Double-double number: an unevaluated sum `hi + lo`, about 106 bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd {
        hi: s,
        lo: b - (s - a),
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

impl Dd {
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `exp(-1)` from its Taylor series.
    pub fn exp_minus_one() -> Dd {
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        for k in 1..40 {
            term = term / Dd::from(-(k as f64));
            sum = sum + term;
        }
        sum
    }
}

/// Global error of RK4 on `dy/dt = -y`, `y(0) = 1`, at `t = 1` with `n`
/// steps, evaluated in double-double.
pub fn rk4_decay_error(n: usize) -> f64 {
    let h = Dd::from(1.0) / Dd::from(n as f64);
    let mut x = [Dd::from(1.0)];
    for _ in 0..n {
        x = rk4_step(|y: &[Dd; 1]| Ok::<_, ()>([-y[0]]), &x, h).unwrap();
    }
    (x[0] - Dd::exp_minus_one()).abs().to_f64()
}

pub struct SurrogateTick {
    pub t: f64,
    pub y: f64,
    pub e: f64,
    pub u: f64,
    pub f_est: f64,
    pub warming_up: bool,
}

/// Drives `dy/dt = sin t + alpha u` with the iP loop regulating `y` to zero.
/// The plant is integrated with RK4 at `ts / 20` between ticks.
pub fn surrogate_loop(alpha: f64, kp: f64, tau: f64, ts: f64, duration: f64) -> Vec<SurrogateTick> {
    let cfg = ControllerConfig {
        alpha,
        kp,
        tau,
        ts,
        u_min: -1e6,
        u_max: 1e6,
        u_warmup: Warmup::Fixed(0.0),
        strict: true,
    };
    let mut ctrl = ControllerState::new(cfg, 0.0).unwrap();
    let ticks = (duration / ts).round() as usize;
    let sub = 20;
    let h = ts / sub as f64;
    let mut y = [0.0_f64, 0.0];
    let mut out = Vec::with_capacity(ticks + 1);
    for k in 0..=ticks {
        let t = k as f64 * ts;
        let step = ctrl.step(y[0], 0.0, 0.0).unwrap();
        out.push(SurrogateTick {
            t,
            y: y[0],
            e: y[0],
            u: step.u,
            f_est: step.f_est,
            warming_up: step.warming_up,
        });
        // second state is time, so the field stays autonomous
        y[1] = t;
        for _ in 0..sub {
            y = rk4_step(
                |s: &[f64; 2]| Ok::<_, ()>([s[1].sin() + alpha * step.u, 1.0]),
                &y,
                h,
            )
            .unwrap();
        }
    }
    out
}
