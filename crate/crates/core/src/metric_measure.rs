//! Finite metric measure spaces, weighted intervals, and the geometric
//! consequences of a curvature-dimension bound (Brunn-Minkowski,
//! Bishop-Gromov, Bonnet-Myers).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::coeffs::{s_kappa, sigma, ExtendedReal};
use crate::error::{Error, Result};
use crate::grid::ScalarFunctionGrid;

/// Anything carrying a finite reference measure as point weights.
pub trait MeasureSpace {
    fn weights(&self) -> &[f64];

    fn total_mass(&self) -> f64 {
        self.weights().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape {
        detail: String,
    },
    NonPositiveWeight {
        i: usize,
        weight: f64,
    },
    Diagonal {
        i: usize,
        value: f64,
    },
    Negative {
        i: usize,
        j: usize,
        value: f64,
    },
    Asymmetric {
        i: usize,
        j: usize,
    },
    Triangle {
        i: usize,
        j: usize,
        k: usize,
        excess: f64,
    },
}

/// Returns every structural, symmetry and triangle-inequality violation.
pub fn validate_mms(dist: &[Vec<f64>], weights: &[f64]) -> Vec<Violation> {
    let n = weights.len();
    let mut out = Vec::new();
    if dist.len() != n || dist.iter().any(|r| r.len() != n) {
        out.push(Violation::Shape {
            detail: format!("distance matrix is not {n}x{n}"),
        });
        return out;
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            out.push(Violation::NonPositiveWeight { i, weight: w });
        }
    }
    let scale = dist.iter().flatten().fold(0.0f64, |a, &d| a.max(d.abs()));
    let eps = 1e-12 * scale.max(1.0);
    for i in 0..n {
        if dist[i][i] != 0.0 {
            out.push(Violation::Diagonal {
                i,
                value: dist[i][i],
            });
        }
        for j in 0..n {
            let d = dist[i][j];
            if !(d >= 0.0 && d.is_finite()) {
                out.push(Violation::Negative { i, j, value: d });
            }
            if j > i && (d - dist[j][i]).abs() > eps {
                out.push(Violation::Asymmetric { i, j });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let excess = dist[i][j] - dist[i][k] - dist[k][j];
                if excess > eps {
                    out.push(Violation::Triangle { i, j, k, excess });
                }
            }
        }
    }
    out
}

/// A finite metric measure space `(X, d, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMMS {
    dist: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMMS {
    pub fn new(dist: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let violations = validate_mms(&dist, &weights);
        if !violations.is_empty() {
            return Err(Error::InvalidSpace(violations.len()));
        }
        Ok(DiscreteMMS { dist, weights })
    }

    /// Points on the real line with the absolute-value metric.
    pub fn from_line(points: &[f64], weights: Vec<f64>) -> Result<Self> {
        let dist = points
            .iter()
            .map(|a| points.iter().map(|b| (a - b).abs()).collect())
            .collect();
        Self::new(dist, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn distances(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().flatten().fold(0.0, |a: f64, &d| a.max(d))
    }
}

impl MeasureSpace for DiscreteMMS {
    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// An interval `[lo, hi]` with reference measure `exp(-V) dx`, discretized
/// on the grid of `V`. Node weights are composite-trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedInterval {
    potential: ScalarFunctionGrid,
    density: Vec<f64>,
    weights: Vec<f64>,
    log_normalizer: f64,
}

impl WeightedInterval {
    pub fn new(potential: ScalarFunctionGrid) -> Result<Self> {
        let density: Vec<f64> = potential
            .values()
            .iter()
            .map(|&v| if v == f64::INFINITY { 0.0 } else { (-v).exp() })
            .collect();
        let h = potential.step();
        let last = density.len() - 1;
        let weights: Vec<f64> = density
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                if i == 0 || i == last {
                    0.5 * h * r
                } else {
                    h * r
                }
            })
            .collect();
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Invalid(format!(
                "reference mass {mass} is not positive and finite"
            )));
        }
        Ok(WeightedInterval {
            potential,
            density,
            weights,
            log_normalizer: 0.0,
        })
    }

    /// `V = 0` on `[lo, hi]`.
    pub fn lebesgue(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(ScalarFunctionGrid::from_fn(lo, hi, n, |_| 0.0)?)
    }

    /// The one-dimensional model space of curvature `K > 0` and dimension
    /// `N > 1`: `V = -(N-1) log cos(x sqrt(K/(N-1)))` on
    /// `|x| <= (pi/2) sqrt((N-1)/K)`, i.e. `m = cos^(N-1)(x sqrt(K/(N-1))) dx`.
    pub fn model(k: f64, n_dim: f64, n: usize) -> Result<Self> {
        if !(k > 0.0 && n_dim > 1.0) {
            return Err(Error::Domain(format!(
                "model space needs K > 0, N > 1 (got {k}, {n_dim})"
            )));
        }
        let a = (k / (n_dim - 1.0)).sqrt();
        let half = FRAC_PI_2 / a;
        let grid = ScalarFunctionGrid::from_fn(-half, half, n, |x| {
            let c = (a * x).cos();
            if c <= 0.0 || x.abs() >= half {
                f64::INFINITY
            } else {
                -(n_dim - 1.0) * c.ln()
            }
        })?;
        Self::new(grid)
    }

    /// Same space with the measure rescaled to total mass one. The shift of
    /// `V` by `log Z` moves every entropy by `log Z`; it is recorded in
    /// [`WeightedInterval::log_normalizer`].
    pub fn normalized(&self) -> Result<Self> {
        let z = self.total_mass();
        let log_z = z.ln();
        let potential = self.potential.map(|v| v + log_z)?;
        let mut out = Self::new(potential)?;
        // exact renormalization of the trapezoid weights
        let mass = out.total_mass();
        for w in &mut out.weights {
            *w /= mass;
        }
        for d in &mut out.density {
            *d /= mass;
        }
        out.log_normalizer = self.log_normalizer + log_z;
        Ok(out)
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn potential(&self) -> &ScalarFunctionGrid {
        &self.potential
    }

    pub fn lo(&self) -> f64 {
        self.potential.lo()
    }

    pub fn hi(&self) -> f64 {
        self.potential.hi()
    }

    pub fn n(&self) -> usize {
        self.potential.n()
    }

    pub fn step(&self) -> f64 {
        self.potential.step()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.potential.x(i)
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.potential.nodes().collect()
    }

    /// Lebesgue density `exp(-V)` at the nodes.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `exp(-V)` at an arbitrary point, by linear interpolation.
    pub fn density_at(&self, x: f64) -> f64 {
        let h = self.step();
        let s = ((x - self.lo()) / h).clamp(0.0, self.n() as f64);
        let i = (s.floor() as usize).min(self.n() - 1);
        let w = s - i as f64;
        (1.0 - w) * self.density[i] + w * self.density[i + 1]
    }

    /// `int_a^b exp(-V) dx` by the trapezoid rule on the grid, with linearly
    /// interpolated density at off-grid endpoints.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.lo());
        let b = b.min(self.hi());
        if b <= a {
            return 0.0;
        }
        let h = self.step();
        let ia = ((a - self.lo()) / h).floor() as usize;
        let ib = (((b - self.lo()) / h).ceil() as usize).min(self.n());
        let mut total = 0.0;
        for i in ia..ib {
            let x0 = self.x(i).max(a);
            let x1 = self.x(i + 1).min(b);
            if x1 > x0 {
                total += 0.5 * (x1 - x0) * (self.density_at(x0) + self.density_at(x1));
            }
        }
        total
    }

    /// Support of the measure: closure of the cells on which `exp(-V)` is
    /// not identically zero.
    pub fn support(&self) -> (f64, f64) {
        let d = &self.density;
        let n = self.n();
        let first = (0..n).find(|&i| d[i] > 0.0 || d[i + 1] > 0.0).unwrap_or(0);
        let last = (0..n)
            .rev()
            .find(|&i| d[i] > 0.0 || d[i + 1] > 0.0)
            .unwrap_or(0);
        (self.x(first), self.x(last + 1))
    }

    /// Constant-speed geodesic between two points of the interval.
    pub fn geodesic(&self, a: f64, b: f64, t_grid: &[f64]) -> Result<GeodesicSample> {
        if a < self.lo() || a > self.hi() || b < self.lo() || b > self.hi() {
            return Err(Error::Domain(format!(
                "geodesic endpoints {a}, {b} outside the interval"
            )));
        }
        GeodesicSample::segment(a, b, t_grid)
    }
}

impl MeasureSpace for WeightedInterval {
    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A sampled constant-speed geodesic on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSample {
    pub t_grid: Vec<f64>,
    pub points: Vec<f64>,
}

impl GeodesicSample {
    pub fn segment(a: f64, b: f64, t_grid: &[f64]) -> Result<Self> {
        if t_grid.windows(2).any(|w| w[1] <= w[0])
            || t_grid.iter().any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::Invalid("t grid must be increasing in [0, 1]".into()));
        }
        Ok(GeodesicSample {
            t_grid: t_grid.to_vec(),
            points: t_grid.iter().map(|t| (1.0 - t) * a + t * b).collect(),
        })
    }

    /// Largest relative deviation from `|g_s - g_t| = |s - t| d(g_0, g_1)`.
    pub fn speed_defect(&self, d: f64) -> f64 {
        let mut worst = 0.0f64;
        for (i, (&s, &x)) in self.t_grid.iter().zip(&self.points).enumerate() {
            for (&t, &y) in self.t_grid.iter().zip(&self.points).skip(i + 1) {
                let want = (t - s) * d;
                worst = worst.max(((x - y).abs() - want).abs() / d.max(f64::MIN_POSITIVE));
            }
        }
        worst
    }
}

/// `v(r) = m(closed ball of radius r around x0)`.
pub fn ball_volume(space: &WeightedInterval, x0: f64, r: f64) -> Result<f64> {
    if x0 < space.lo() || x0 > space.hi() {
        return Err(Error::Domain(format!("center {x0} outside the interval")));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius {r} must be nonnegative")));
    }
    Ok(space.interval_mass(x0 - r, x0 + r))
}

/// `int_0^r s_kappa(t)^N dt`, composite Simpson with 2048 panels.
pub fn model_volume(kappa: f64, n_dim: f64, r: f64) -> f64 {
    const PANELS: usize = 2048;
    if r <= 0.0 {
        return 0.0;
    }
    let h = r / PANELS as f64;
    let f = |t: f64| s_kappa(kappa, t).max(0.0).powf(n_dim);
    let mut acc = f(0.0) + f(r);
    for i in 1..PANELS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// `v(r)/v(R) - int_0^r s^N / int_0^R s^N` with `s = s_{K/N}`.
pub fn check_bishop_gromov(
    space: &WeightedInterval,
    x0: f64,
    r: f64,
    big_r: f64,
    k: f64,
    n_dim: f64,
) -> Result<f64> {
    let limit = if k > 0.0 {
        PI * (n_dim / k).sqrt()
    } else {
        f64::INFINITY
    };
    if !(0.0 < r && r <= big_r && big_r <= limit) {
        return Err(Error::Domain(format!(
            "need 0 < r <= R <= {limit} (got r = {r}, R = {big_r})"
        )));
    }
    if r == big_r {
        return Ok(0.0);
    }
    let lhs = ball_volume(space, x0, r)? / ball_volume(space, x0, big_r)?;
    let kappa = k / n_dim;
    let rhs = model_volume(kappa, n_dim, r) / model_volume(kappa, n_dim, big_r);
    Ok(lhs - rhs)
}

/// A space whose support diameter can be measured.
pub enum DiameterSource<'a> {
    Interval(&'a WeightedInterval),
    Discrete(&'a DiscreteMMS),
}

impl DiameterSource<'_> {
    pub fn support_diameter(&self) -> f64 {
        match self {
            DiameterSource::Interval(s) => {
                let (a, b) = s.support();
                b - a
            }
            DiameterSource::Discrete(s) => s.diameter(),
        }
    }
}

/// `pi sqrt(N/K) - diam(supp m)`.
pub fn check_bonnet_myers(space: DiameterSource<'_>, k: f64, n_dim: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("Bonnet-Myers needs K > 0 (got {k})")));
    }
    Ok(PI * (n_dim / k).sqrt() - space.support_diameter())
}

/// A closed interval `[a, b]`, `a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a <= b) {
            return Err(Error::Invalid(format!("empty interval [{a}, {b}]")));
        }
        Ok(Interval { a, b })
    }

    /// Set of `t`-midpoints between this interval and `other` on the line.
    pub fn midpoints(&self, other: &Interval, t: f64) -> Interval {
        Interval {
            a: (1.0 - t) * self.a + t * other.a,
            b: (1.0 - t) * self.b + t * other.b,
        }
    }

    pub fn min_distance(&self, other: &Interval) -> f64 {
        (other.a - self.b).max(self.a - other.b).max(0.0)
    }

    pub fn max_distance(&self, other: &Interval) -> f64 {
        (other.b - self.a).abs().max((self.b - other.a).abs())
    }
}

/// `m(A_t)^(1/N) - [sigma^(1-t)(Theta) m(A_0)^(1/N) + sigma^(t)(Theta) m(A_1)^(1/N)]`.
///
/// `Theta` is the minimal distance between the sets for `K >= 0` and the
/// maximal one for `K < 0`. A singular coefficient gives `-inf`.
pub fn check_brunn_minkowski(
    space: &WeightedInterval,
    a0: Interval,
    a1: Interval,
    t: f64,
    k: f64,
    n_dim: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    let m0 = space.interval_mass(a0.a, a0.b);
    let m1 = space.interval_mass(a1.a, a1.b);
    if !(m0 > 0.0 && m1 > 0.0) {
        return Err(Error::Invalid("sets must have positive measure".into()));
    }
    let at = a0.midpoints(&a1, t);
    if at.b <= at.a {
        return Err(Error::Invalid("empty midpoint set".into()));
    }
    let theta = if k >= 0.0 {
        a0.min_distance(&a1)
    } else {
        a0.max_distance(&a1)
    };
    let kappa = k / n_dim;
    let rhs = sigma(kappa, 1.0 - t, theta).scale(m0.powf(1.0 / n_dim))
        + sigma(kappa, t, theta).scale(m1.powf(1.0 / n_dim));
    let lhs = space.interval_mass(at.a, at.b).powf(1.0 / n_dim);
    Ok(match rhs {
        ExtendedReal::Finite(r) => lhs - r,
        ExtendedReal::PosInf => f64::NEG_INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validate_examples() {
        assert!(validate_mms(&[vec![0.0]], &[1.0]).is_empty());
        let d = vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.0],
        ];
        let v = validate_mms(&d, &[1.0; 3]);
        assert!(v.iter().any(|x| matches!(
            x,
            Violation::Triangle {
                i: 0,
                j: 2,
                k: 1,
                ..
            }
        )));
        assert!(DiscreteMMS::new(d, vec![1.0; 3]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..6)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let d: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| {
                pts.iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                    .collect()
            })
            .collect();
        assert!(validate_mms(&d, &[0.5; 6]).is_empty());
    }

    #[test]
    fn validate_reports_weights_and_asymmetry() {
        let d = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        let v = validate_mms(&d, &[1.0, 0.0]);
        assert!(v.iter().any(|x| matches!(x, Violation::Asymmetric { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::NonPositiveWeight { i: 1, .. })));
    }

    #[test]
    fn ball_volume_examples() {
        let leb = WeightedInterval::lebesgue(0.0, 1.0, 40).unwrap();
        assert_eq!(ball_volume(&leb, 0.3, 0.0).unwrap(), 0.0);
        assert_relative_eq!(ball_volume(&leb, 0.5, 0.25).unwrap(), 0.5, epsilon = 1e-14);

        let model = WeightedInterval::model(2.0, 3.0, 2000).unwrap();
        let v = ball_volume(&model, 0.0, std::f64::consts::FRAC_PI_4).unwrap();
        assert_relative_eq!(v, 1.285_398_163_397_448_3, epsilon = 1e-6);
    }

    #[test]
    fn ball_volume_monotone_and_additive() {
        let model = WeightedInterval::model(2.0, 3.0, 500).unwrap();
        let mut prev = 0.0;
        for i in 1..30 {
            let r = i as f64 * 0.05;
            let v = ball_volume(&model, 0.1, r).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let whole = model.interval_mass(-0.7, 0.9);
        let parts = model.interval_mass(-0.7, 0.123) + model.interval_mass(0.123, 0.9);
        assert_relative_eq!(whole, parts, epsilon = 1e-14);
    }

    #[test]
    fn bishop_gromov_flat_margin() {
        // v(r)/v(R) = r/R against the bound (r/R)^2
        let leb = WeightedInterval::lebesgue(-2.0, 2.0, 400).unwrap();
        let m = check_bishop_gromov(&leb, 0.0, 0.5, 1.5, 0.0, 1.0).unwrap();
        assert_relative_eq!(m, 1.0 / 3.0 - 1.0 / 9.0, epsilon = 1e-12);
        assert_eq!(
            check_bishop_gromov(&leb, 0.0, 1.0, 1.0, 0.0, 1.0).unwrap(),
            0.0
        );
        assert!(check_bishop_gromov(&leb, 0.0, 1.0, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn bonnet_myers_examples() {
        let model = WeightedInterval::model(2.0, 3.0, 400).unwrap();
        let (a, b) = model.support();
        assert_relative_eq!(b - a, PI, epsilon = 1e-12);
        let m = check_bonnet_myers(DiameterSource::Interval(&model), 2.0, 3.0).unwrap();
        assert_relative_eq!(m, PI * 1.5f64.sqrt() - PI, epsilon = 1e-12);

        let two = DiscreteMMS::from_line(&[0.0, 10.0], vec![0.5, 0.5]).unwrap();
        assert!(check_bonnet_myers(DiameterSource::Discrete(&two), 1.0, 1.0).unwrap() < 0.0);

        let edge = DiscreteMMS::from_line(&[0.0, PI], vec![0.5, 0.5]).unwrap();
        assert_eq!(
            check_bonnet_myers(DiameterSource::Discrete(&edge), 1.0, 1.0).unwrap(),
            0.0
        );
        assert!(check_bonnet_myers(DiameterSource::Discrete(&edge), 0.0, 1.0).is_err());
    }

    #[test]
    fn brunn_minkowski_lebesgue_equality() {
        let leb = WeightedInterval::lebesgue(0.0, 4.0, 400).unwrap();
        let a0 = Interval::new(0.0, 0.7).unwrap();
        let a1 = Interval::new(2.0, 3.1).unwrap();
        let m = check_brunn_minkowski(&leb, a0, a1, 0.5, 0.0, 1.0).unwrap();
        assert!(m.abs() < 1e-12, "{m}");
        for &t in &[0.0, 0.3, 1.0] {
            let m = check_brunn_minkowski(&leb, a0, a0, t, 0.0, 2.0).unwrap();
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn geodesic_constant_speed() {
        let leb = WeightedInterval::lebesgue(0.0, 1.0, 10).unwrap();
        let t: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let g = leb.geodesic(0.9, 0.1, &t).unwrap();
        assert!(g.speed_defect(0.8) < 1e-9);
        assert!(leb.geodesic(0.0, 2.0, &t).is_err());
    }

    #[test]
    fn normalized_has_unit_mass() {
        let model = WeightedInterval::model(2.0, 3.0, 300).unwrap();
        let p = model.normalized().unwrap();
        assert_relative_eq!(p.total_mass(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.log_normalizer(), model.total_mass().ln(), epsilon = 1e-14);
    }
}
