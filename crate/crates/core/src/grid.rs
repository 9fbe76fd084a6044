//! Real functions sampled on a uniform 1D grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of grid intervals.
pub const MIN_INTERVALS: usize = 4;

/// A function sampled at `n + 1` equispaced nodes of `[lo, hi]`.
///
/// Values must be finite at interior nodes. The two boundary nodes may carry
/// `+inf`, which marks the excluded endpoint of a model function's natural
/// domain (e.g. `-N log cos` at `+-pi/2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFunctionGrid {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl ScalarFunctionGrid {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_INTERVALS + 1 {
            return Err(Error::GridTooCoarse {
                nodes: values.len(),
                min: MIN_INTERVALS + 1,
            });
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Invalid(format!("bad grid domain [{lo}, {hi}]")));
        }
        let last = values.len() - 1;
        for (i, &v) in values.iter().enumerate() {
            let boundary = i == 0 || i == last;
            if v.is_nan() || v == f64::NEG_INFINITY || (v == f64::INFINITY && !boundary) {
                return Err(Error::Invalid(format!(
                    "grid value {v} at node {i} (only boundary nodes may be +inf)"
                )));
            }
        }
        Ok(ScalarFunctionGrid { lo, hi, values })
    }

    /// Samples `f` at `n + 1` nodes. Non-finite samples at the boundary are
    /// stored as `+inf`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (hi - lo) / n as f64;
        let values = (0..=n)
            .map(|i| {
                let x = if i == n { hi } else { lo + i as f64 * h };
                let v = f(x);
                if (i == 0 || i == n) && !v.is_finite() {
                    f64::INFINITY
                } else {
                    v
                }
            })
            .collect();
        Self::new(lo, hi, values)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.n() as f64
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n() {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n()).map(move |i| self.x(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn same_domain(&self, other: &ScalarFunctionGrid) -> bool {
        self.n() == other.n() && self.lo == other.lo && self.hi == other.hi
    }

    /// Pointwise map, keeping the domain. `f` must respect the boundary rule.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.lo,
            self.hi,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        self.map(|v| v * lambda)
    }

    pub fn try_add(&self, other: &ScalarFunctionGrid) -> Result<Self> {
        if !self.same_domain(other) {
            return Err(Error::Invalid("grids do not share a domain".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.lo, self.hi, values)
    }

    /// Largest finite absolute value.
    pub fn scale(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Piecewise-linear interpolation; `+inf` propagates from an infinite node.
    pub fn interpolate(&self, x: f64) -> f64 {
        let h = self.step();
        let s = ((x - self.lo) / h).clamp(0.0, self.n() as f64);
        let i = (s.floor() as usize).min(self.n() - 1);
        let w = s - i as f64;
        let (a, b) = (self.values[i], self.values[i + 1]);
        if w == 0.0 {
            return a;
        }
        if w == 1.0 {
            return b;
        }
        if !a.is_finite() || !b.is_finite() {
            return f64::INFINITY;
        }
        (1.0 - w) * a + w * b
    }

    /// First derivative by central differences (second-order one-sided
    /// stencils at the ends). Non-finite where a stencil touches `+inf`.
    pub fn derivative(&self, i: usize) -> f64 {
        let h = self.step();
        let v = &self.values;
        let n = self.n();
        if i == 0 {
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        } else if i == n {
            (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h)
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * h)
        }
    }

    /// Second derivative by the three-point stencil, interior nodes only.
    pub fn second_derivative(&self, i: usize) -> f64 {
        assert!(
            i > 0 && i < self.n(),
            "second derivative needs an interior node"
        );
        let h = self.step();
        (self.values[i + 1] - 2.0 * self.values[i] + self.values[i - 1]) / (h * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_and_interior_infinity() {
        assert!(matches!(
            ScalarFunctionGrid::new(0.0, 1.0, vec![0.0; 4]),
            Err(Error::GridTooCoarse { .. })
        ));
        let mut v = vec![0.0; 6];
        v[2] = f64::INFINITY;
        assert!(ScalarFunctionGrid::new(0.0, 1.0, v).is_err());
        let mut v = vec![0.0; 6];
        v[0] = f64::INFINITY;
        v[5] = f64::INFINITY;
        assert!(ScalarFunctionGrid::new(0.0, 1.0, v).is_ok());
    }

    #[test]
    fn derivatives_of_quadratic_are_exact() {
        let g = ScalarFunctionGrid::from_fn(-1.0, 1.0, 10, |x| x * x).unwrap();
        for i in 0..=10 {
            assert!((g.derivative(i) - 2.0 * g.x(i)).abs() < 1e-12);
        }
        for i in 1..10 {
            assert!((g.second_derivative(i) - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = ScalarFunctionGrid::from_fn(0.0, 2.0, 8, |x| 3.0 * x + 1.0).unwrap();
        assert_eq!(g.interpolate(0.0), 1.0);
        assert!((g.interpolate(1.3) - 4.9).abs() < 1e-12);
        assert_eq!(g.interpolate(2.0), 7.0);
    }
}
