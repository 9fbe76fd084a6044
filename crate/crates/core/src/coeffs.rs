//! Distortion coefficients and the comparison functions built on them.
//!
//! For a curvature ratio `kappa = K/N`, the functions here are
//!
//! | function | kappa > 0 | kappa = 0 | kappa < 0 |
//! |----------|-----------|-----------|-----------|
//! | [`s_kappa`] | `sin(sqrt(k) t) / sqrt(k)` | `t` | `sinh(sqrt(-k) t) / sqrt(-k)` |
//! | [`c_kappa`] | `cos(sqrt(k) t)` | `1` | `cosh(sqrt(-k) t)` |
//!
//! and `sigma_kappa^(t)(theta) = s_kappa(t theta) / s_kappa(theta)`, which is
//! singular (reported as [`ExtendedReal::PosInf`]) once `kappa theta^2 >= pi^2`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul};

use crate::error::{Error, Result};

/// Below this `|kappa theta^2|` the distortion coefficient is evaluated by its
/// Taylor series instead of the sine ratio.
pub const SIGMA_SERIES_THRESHOLD: f64 = 1e-6;

/// A real number or the `+inf` sentinel of the singular distortion regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInf => None,
        }
    }

    /// Lossy conversion, `PosInf` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    /// Multiplication by a nonnegative scalar. `+inf * 0` is taken as `0`
    /// (the convention used when a singular coefficient hits a vanishing
    /// endpoint value).
    pub fn scale(self, factor: f64) -> ExtendedReal {
        debug_assert!(factor >= 0.0);
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(v * factor),
            ExtendedReal::PosInf if factor == 0.0 => ExtendedReal::Finite(0.0),
            ExtendedReal::PosInf => ExtendedReal::PosInf,
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        ExtendedReal::Finite(v)
    }
}

impl Add for ExtendedReal {
    type Output = ExtendedReal;
    fn add(self, rhs: ExtendedReal) -> ExtendedReal {
        match (self, rhs) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => ExtendedReal::Finite(a + b),
            _ => ExtendedReal::PosInf,
        }
    }
}

impl Mul<f64> for ExtendedReal {
    type Output = ExtendedReal;
    fn mul(self, rhs: f64) -> ExtendedReal {
        self.scale(rhs)
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => a.partial_cmp(b),
            (ExtendedReal::PosInf, ExtendedReal::PosInf) => Some(Ordering::Equal),
            (ExtendedReal::PosInf, _) => Some(Ordering::Greater),
            (_, ExtendedReal::PosInf) => Some(Ordering::Less),
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInf => write!(f, "+inf"),
        }
    }
}

/// Inputs of the distortion coefficient `sigma_kappa^(t)(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionParams {
    pub kappa: f64,
    pub t: f64,
    pub theta: f64,
}

impl DistortionParams {
    pub fn new(kappa: f64, t: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
        }
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!(
                "theta = {theta} must be nonnegative"
            )));
        }
        Ok(DistortionParams { kappa, t, theta })
    }

    pub fn is_singular(&self) -> bool {
        self.kappa * self.theta * self.theta >= PI * PI
    }

    pub fn sigma(&self) -> ExtendedReal {
        sigma(self.kappa, self.t, self.theta)
    }
}

pub fn s_kappa(kappa: f64, theta: f64) -> f64 {
    if kappa > 0.0 {
        let r = kappa.sqrt();
        (r * theta).sin() / r
    } else if kappa < 0.0 {
        let r = (-kappa).sqrt();
        (r * theta).sinh() / r
    } else {
        theta
    }
}

pub fn c_kappa(kappa: f64, theta: f64) -> f64 {
    if kappa > 0.0 {
        (kappa.sqrt() * theta).cos()
    } else if kappa < 0.0 {
        ((-kappa).sqrt() * theta).cosh()
    } else {
        1.0
    }
}

pub fn sigma(kappa: f64, t: f64, theta: f64) -> ExtendedReal {
    let u = kappa * theta * theta;
    if u >= PI * PI {
        return ExtendedReal::PosInf;
    }
    if u == 0.0 {
        return ExtendedReal::Finite(t);
    }
    if u.abs() < SIGMA_SERIES_THRESHOLD {
        // sin(a t)/sin(a) with a^2 = u, to second order in u
        let t2 = t * t;
        let first = u * (1.0 - t2) / 6.0;
        let second = u * u * (7.0 - 10.0 * t2 + 3.0 * t2 * t2) / 360.0;
        return ExtendedReal::Finite(t * (1.0 + first + second));
    }
    ExtendedReal::Finite(s_kappa(kappa, t * theta) / s_kappa(kappa, theta))
}

/// `e_kappa(t) = int_0^t exp(kappa s) ds`.
pub fn e_kappa(kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        t
    } else {
        (kappa * t).exp_m1() / kappa
    }
}

/// `(exp(x) - 1) / x`, continuous through `x = 0`.
pub fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// `G_t(x, y, kappa) = log[sigma^(1-t)_kappa(1) e^x + sigma^(t)_kappa(1) e^y]`.
pub fn g_interp(t: f64, x: f64, y: f64, kappa: f64) -> Result<f64> {
    if !(kappa < PI * PI) {
        return Err(Error::Domain(format!(
            "kappa = {kappa} >= pi^2, distortion coefficient is singular"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    // both finite since kappa < pi^2 and theta = 1
    let a = sigma(kappa, 1.0 - t, 1.0).to_f64();
    let b = sigma(kappa, t, 1.0).to_f64();
    let terms = [(a, x), (b, y)];
    let peak = terms
        .iter()
        .filter(|(c, _)| *c > 0.0)
        .map(|(_, e)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms
        .iter()
        .filter(|(c, _)| *c > 0.0)
        .map(|(c, e)| c * (e - peak).exp())
        .sum();
    Ok(peak + sum.ln())
}
