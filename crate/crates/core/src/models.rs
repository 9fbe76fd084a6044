//! Exact one-dimensional (K,N)-convex model functions.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarFunctionGrid;

/// A potential on an open interval of the real line, with a derivative.
pub trait Potential: Sync {
    /// `+inf` outside the open domain.
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// Open interval `(lo, hi)`, possibly unbounded.
    fn domain(&self) -> (f64, f64);

    fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x > lo && x < hi
    }
}

/// The four maximal-domain model functions.
///
/// * `Cos`: `-N log cos(x sqrt(K/N))` on `|x| < (pi/2) sqrt(N/K)`, `K > 0`
/// * `Log`: `-N log x` on `x > 0` (`K = 0`)
/// * `Sinh`: `-N log sinh(x sqrt(-K/N))` on `x > 0`, `K < 0`
/// * `Cosh`: `-N log cosh(x sqrt(-K/N))` on the whole line, `K < 0`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelFunction {
    Cos { k: f64, n: f64 },
    Log { n: f64 },
    Sinh { k: f64, n: f64 },
    Cosh { k: f64, n: f64 },
}

pub fn cos_model(k: f64, n: f64) -> Result<ModelFunction> {
    if !(k > 0.0 && n > 0.0) {
        return Err(Error::Domain(format!(
            "cos model needs K > 0, N > 0 (got {k}, {n})"
        )));
    }
    Ok(ModelFunction::Cos { k, n })
}

pub fn log_model(n: f64) -> Result<ModelFunction> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("log model needs N > 0 (got {n})")));
    }
    Ok(ModelFunction::Log { n })
}

pub fn sinh_model(k: f64, n: f64) -> Result<ModelFunction> {
    if !(k < 0.0 && n > 0.0) {
        return Err(Error::Domain(format!(
            "sinh model needs K < 0, N > 0 (got {k}, {n})"
        )));
    }
    Ok(ModelFunction::Sinh { k, n })
}

pub fn cosh_model(k: f64, n: f64) -> Result<ModelFunction> {
    if !(k < 0.0 && n > 0.0) {
        return Err(Error::Domain(format!(
            "cosh model needs K < 0, N > 0 (got {k}, {n})"
        )));
    }
    Ok(ModelFunction::Cosh { k, n })
}

impl ModelFunction {
    /// The curvature parameter `K` the model is sharp for.
    pub fn curvature(&self) -> f64 {
        match *self {
            ModelFunction::Cos { k, .. }
            | ModelFunction::Sinh { k, .. }
            | ModelFunction::Cosh { k, .. } => k,
            ModelFunction::Log { .. } => 0.0,
        }
    }

    pub fn dimension(&self) -> f64 {
        match *self {
            ModelFunction::Cos { n, .. }
            | ModelFunction::Log { n }
            | ModelFunction::Sinh { n, .. }
            | ModelFunction::Cosh { n, .. } => n,
        }
    }

    fn rate(&self) -> f64 {
        match *self {
            ModelFunction::Cos { k, n } => (k / n).sqrt(),
            ModelFunction::Sinh { k, n } | ModelFunction::Cosh { k, n } => (-k / n).sqrt(),
            ModelFunction::Log { .. } => 1.0,
        }
    }

    /// `U_N = exp(-S/N)` in closed form.
    pub fn u(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let a = self.rate();
        match self {
            ModelFunction::Cos { .. } => (a * x).cos(),
            ModelFunction::Log { .. } => x,
            ModelFunction::Sinh { .. } => (a * x).sinh(),
            ModelFunction::Cosh { .. } => (a * x).cosh(),
        }
    }

    /// Samples on the whole natural domain; only valid for bounded domains.
    pub fn grid(&self, n: usize) -> Result<ScalarFunctionGrid> {
        let (lo, hi) = self.domain();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Invalid("unbounded model domain, use grid_on".into()));
        }
        self.grid_on(lo, hi, n)
    }

    /// Samples on `[lo, hi]`; nodes outside the open domain become `+inf`
    /// (allowed only at the two ends).
    pub fn grid_on(&self, lo: f64, hi: f64, n: usize) -> Result<ScalarFunctionGrid> {
        ScalarFunctionGrid::from_fn(lo, hi, n, |x| self.value(x))
    }
}

impl Potential for ModelFunction {
    fn value(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return f64::INFINITY;
        }
        let n = self.dimension();
        let a = self.rate();
        match self {
            ModelFunction::Cos { .. } => -n * (a * x).cos().ln(),
            ModelFunction::Log { .. } => -n * x.ln(),
            ModelFunction::Sinh { .. } => -n * (a * x).sinh().ln(),
            ModelFunction::Cosh { .. } => -n * (a * x).cosh().ln(),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let n = self.dimension();
        let a = self.rate();
        match self {
            ModelFunction::Cos { .. } => n * a * (a * x).tan(),
            ModelFunction::Log { .. } => -n / x,
            ModelFunction::Sinh { .. } => -n * a / (a * x).tanh(),
            ModelFunction::Cosh { .. } => -n * a * (a * x).tanh(),
        }
    }

    fn domain(&self) -> (f64, f64) {
        match *self {
            ModelFunction::Cos { .. } => {
                let half = FRAC_PI_2 / self.rate();
                (-half, half)
            }
            ModelFunction::Log { .. } | ModelFunction::Sinh { .. } => (0.0, f64::INFINITY),
            ModelFunction::Cosh { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Grid functions act as potentials through linear interpolation of values
/// and of central-difference derivatives.
impl Potential for ScalarFunctionGrid {
    fn value(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return f64::INFINITY;
        }
        self.interpolate(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        let h = self.step();
        let s = ((x - self.lo()) / h).clamp(0.0, self.n() as f64);
        let i = (s.floor() as usize).min(self.n() - 1);
        let w = s - i as f64;
        let d = |j: usize| self.derivative(j);
        if w == 0.0 {
            d(i)
        } else {
            (1.0 - w) * d(i) + w * d(i + 1)
        }
    }

    fn domain(&self) -> (f64, f64) {
        let v = self.values();
        let lo = self.lo();
        let hi = self.hi();
        // boundary nodes with +inf are excluded endpoints
        let lo = if v[0].is_finite() {
            lo - f64::EPSILON * lo.abs().max(1.0)
        } else {
            lo
        };
        let hi = if v[v.len() - 1].is_finite() {
            hi + f64::EPSILON * hi.abs().max(1.0)
        } else {
            hi
        };
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn u_matches_exp_of_s() {
        let models = [
            cos_model(2.0, 3.0).unwrap(),
            log_model(2.0).unwrap(),
            sinh_model(-1.0, 2.0).unwrap(),
            cosh_model(-1.0, 2.0).unwrap(),
        ];
        for m in models {
            for &x in &[0.1, 0.4, 0.9] {
                let n = m.dimension();
                assert_relative_eq!(m.u(x), (-m.value(x) / n).exp(), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let models = [
            cos_model(1.0, 1.0).unwrap(),
            log_model(3.0).unwrap(),
            sinh_model(-2.0, 1.5).unwrap(),
            cosh_model(-1.0, 1.0).unwrap(),
        ];
        let h = 1e-6;
        for m in models {
            for &x in &[0.2, 0.7] {
                let fd = (m.value(x + h) - m.value(x - h)) / (2.0 * h);
                assert_relative_eq!(m.derivative(x), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn cos_grid_marks_endpoints_infinite() {
        let g = cos_model(1.0, 1.0).unwrap().grid(64).unwrap();
        assert_eq!(g.value(0), f64::INFINITY);
        assert_eq!(g.value(64), f64::INFINITY);
        assert!(g.value(32).abs() < 1e-15);
    }

    #[test]
    fn constructors_validate_signs() {
        assert!(cos_model(-1.0, 1.0).is_err());
        assert!(sinh_model(1.0, 1.0).is_err());
        assert!(cosh_model(0.0, 1.0).is_err());
        assert!(log_model(0.0).is_err());
    }
}
