//! Relative entropy, Fisher information, the entropic curvature-dimension
//! certifier along Wasserstein geodesics and the dimensional functional
//! inequalities.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{c_kappa, s_kappa, sigma, ExtendedReal};
use crate::error::{Error, Result};
use crate::grid::ScalarFunctionGrid;
use crate::metric_measure::{MeasureSpace, WeightedInterval};
use crate::transport::{displacement_interpolate_1d, w2_quantile_1d, DensityVector};

/// Densities below this are treated as zero inside `rho log rho`.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `Ent(mu)` together with `U_N(mu) = exp(-Ent/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub ent: f64,
    pub u_n: f64,
}

impl EntropyValue {
    pub fn new(ent: f64, n_dim: f64) -> Self {
        let u_n = if ent == f64::INFINITY {
            0.0
        } else {
            (-ent / n_dim).exp()
        };
        EntropyValue { ent, u_n }
    }
}

/// `sum rho_i log rho_i w_i` with `0 log 0 = 0`.
pub fn entropy(space: &impl MeasureSpace, mu: &DensityVector, n_dim: f64) -> EntropyValue {
    let ent = mu
        .rho
        .iter()
        .zip(space.weights())
        .filter(|&(&r, &w)| r >= DENSITY_FLOOR && w > 0.0)
        .map(|(&r, &w)| r * r.ln() * w)
        .sum();
    EntropyValue::new(ent, n_dim)
}

/// `4 int ((sqrt rho)')^2 exp(-V) dx` by central differences and the
/// trapezoid rule.
pub fn fisher_information(space: &WeightedInterval, mu: &DensityVector) -> Result<f64> {
    let root: Vec<f64> = mu.rho.iter().map(|r| r.sqrt()).collect();
    let g = ScalarFunctionGrid::new(space.lo(), space.hi(), root)?;
    Ok(4.0
        * (0..=space.n())
            .map(|i| {
                let d = g.derivative(i);
                let w = space.weights()[i];
                if w > 0.0 {
                    d * d * w
                } else {
                    0.0
                }
            })
            .sum::<f64>())
}

/// Margins of a curvature-dimension check along one displacement
/// interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdeReport {
    pub t_grid: Vec<f64>,
    /// `U_N(mu_t)` along the interpolation.
    pub u: Vec<f64>,
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub w2: f64,
    /// `(K/N) W_2^2 >= pi^2`: the distortion coefficients are infinite.
    pub singular: bool,
}

impl CdeReport {
    pub fn passed(&self, tol: f64) -> bool {
        !self.singular && self.min_margin >= -tol
    }
}

struct Path {
    t_grid: Vec<f64>,
    u: Vec<f64>,
    w2: f64,
}

fn interpolate_entropies(
    space: &WeightedInterval,
    mu0: &DensityVector,
    mu1: &DensityVector,
    n_dim: f64,
    t_grid: &[f64],
) -> Result<Path> {
    if !(n_dim > 0.0) {
        return Err(Error::Domain(format!("N must be positive (got {n_dim})")));
    }
    if t_grid.len() < 2 || t_grid[0] != 0.0 || t_grid[t_grid.len() - 1] != 1.0 {
        return Err(Error::Invalid("t grid must run from 0 to 1".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("t grid must be increasing".into()));
    }
    let path = displacement_interpolate_1d(space, mu0, mu1, t_grid)?;
    let u = path.iter().map(|m| entropy(space, m, n_dim).u_n).collect();
    let w2 = w2_quantile_1d(space, mu0, mu1)?.max(0.0).sqrt();
    Ok(Path {
        t_grid: t_grid.to_vec(),
        u,
        w2,
    })
}

fn report(path: Path, margins: Vec<f64>, singular: bool) -> CdeReport {
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    CdeReport {
        t_grid: path.t_grid,
        u: path.u,
        margins,
        min_margin,
        w2: path.w2,
        singular,
    }
}

/// `U_N(mu_t) - sigma^(1-t) U_N(mu_0) - sigma^(t) U_N(mu_1)` along the
/// displacement interpolation, with `sigma = sigma_{K/N}(W_2)`. Endpoint
/// values are taken from the interpolation itself.
pub fn check_cde(
    space: &WeightedInterval,
    mu0: &DensityVector,
    mu1: &DensityVector,
    k: f64,
    n_dim: f64,
    t_grid: &[f64],
) -> Result<CdeReport> {
    let path = interpolate_entropies(space, mu0, mu1, n_dim, t_grid)?;
    let kappa = k / n_dim;
    let (u0, u1) = (path.u[0], path.u[path.u.len() - 1]);
    let mut singular = false;
    let margins = path
        .t_grid
        .iter()
        .zip(&path.u)
        .map(|(&t, &ut)| {
            let a = sigma(kappa, 1.0 - t, path.w2);
            let b = sigma(kappa, t, path.w2);
            singular |= !(a.is_finite() && b.is_finite());
            match a.scale(u0) + b.scale(u1) {
                ExtendedReal::Finite(rhs) => ut - rhs,
                ExtendedReal::PosInf => f64::NEG_INFINITY,
            }
        })
        .collect();
    Ok(report(path, margins, singular))
}

/// Green-function form:
/// `U(r) - (1-r) U(0) - r U(1) - (K/N) W_2^2 int_0^1 g(s,r) U(s) ds`,
/// the integral by the trapezoid rule on `t_grid`.
pub fn check_green_cde(
    space: &WeightedInterval,
    mu0: &DensityVector,
    mu1: &DensityVector,
    k: f64,
    n_dim: f64,
    t_grid: &[f64],
) -> Result<CdeReport> {
    let path = interpolate_entropies(space, mu0, mu1, n_dim, t_grid)?;
    let ts = &path.t_grid;
    let u = &path.u;
    let (u0, u1) = (u[0], u[u.len() - 1]);
    let coef = k / n_dim * path.w2 * path.w2;
    let margins = ts
        .iter()
        .zip(u)
        .map(|(&r, &ur)| {
            let integrand: Vec<f64> = ts
                .iter()
                .zip(u)
                .map(|(&s, &us)| ((1.0 - r) * s).min((1.0 - s) * r) * us)
                .collect();
            let integral: f64 = ts
                .windows(2)
                .zip(integrand.windows(2))
                .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
                .sum();
            ur - (1.0 - r) * u0 - r * u1 - coef * integral
        })
        .collect();
    Ok(report(path, margins, false))
}

fn require_probability(space: &WeightedInterval) -> Result<()> {
    let mass = space.total_mass();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!(
            "functional inequalities need a probability reference measure (mass {mass})"
        )));
    }
    Ok(())
}

fn require_positive_k(k: f64) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("K must be positive (got {k})")));
    }
    Ok(())
}

/// `c_{K/N}(W) + s_{K/N}(W) sqrt(I(mu_0)) / N - U_N(mu_1)/U_N(mu_0)`.
pub fn check_nhwi(
    space: &WeightedInterval,
    mu0: &DensityVector,
    mu1: &DensityVector,
    k: f64,
    n_dim: f64,
) -> Result<f64> {
    require_probability(space)?;
    let kappa = k / n_dim;
    let w = w2_quantile_1d(space, mu0, mu1)?.max(0.0).sqrt();
    let fisher = fisher_information(space, mu0)?;
    let ratio = entropy(space, mu1, n_dim).u_n / entropy(space, mu0, n_dim).u_n;
    Ok(c_kappa(kappa, w) + s_kappa(kappa, w) * fisher.sqrt() / n_dim - ratio)
}

/// Both log-Sobolev margins for `K > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsiMargins {
    /// `I - K N (exp(2 Ent/N) - 1)`.
    pub dimensional: f64,
    /// `I - 2 K Ent`.
    pub classical: f64,
}

pub fn check_nlsi(
    space: &WeightedInterval,
    mu: &DensityVector,
    k: f64,
    n_dim: f64,
) -> Result<LsiMargins> {
    require_probability(space)?;
    require_positive_k(k)?;
    let ent = entropy(space, mu, n_dim).ent;
    let fisher = fisher_information(space, mu)?;
    Ok(LsiMargins {
        dimensional: fisher - k * n_dim * (2.0 * ent / n_dim).exp_m1(),
        classical: fisher - 2.0 * k * ent,
    })
}

/// Talagrand margins against the reference measure `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalagrandMargins {
    pub w2: f64,
    /// `sqrt(N/K) pi/2 - W_2(mu, m)`.
    pub diam_margin: f64,
    /// `Ent(mu) + N log cos(sqrt(K/N) W_2)`.
    pub ent_margin: f64,
    /// `-N log cos(sqrt(K/N) W_2) - (K/2) W_2^2`.
    pub weak_margin: f64,
    /// The entropy bound rewritten in distance units:
    /// `sqrt((N/K)(exp(2 Ent/N) - 1)) - sqrt(N/K) tan(sqrt(K/N) W_2)`.
    pub distance_margin: f64,
}

impl TalagrandMargins {
    pub fn passed(&self, tol: f64) -> bool {
        self.diam_margin >= -tol && self.ent_margin >= -tol
    }
}

fn reference_density(space: &WeightedInterval) -> Result<DensityVector> {
    DensityVector::reference(space)
}

fn lsi_radius(ent: f64, k: f64, n_dim: f64) -> f64 {
    (n_dim / k * (2.0 * ent / n_dim).exp_m1()).max(0.0).sqrt()
}

pub fn check_ntalagrand(
    space: &WeightedInterval,
    mu: &DensityVector,
    k: f64,
    n_dim: f64,
) -> Result<TalagrandMargins> {
    require_probability(space)?;
    require_positive_k(k)?;
    let m = reference_density(space)?;
    let w = w2_quantile_1d(space, mu, &m)?.max(0.0).sqrt();
    let ent = entropy(space, mu, n_dim).ent;
    let a = (k / n_dim).sqrt();
    let half = std::f64::consts::FRAC_PI_2 / a;
    let (bound, tangent) = if w < half {
        (-n_dim * (a * w).cos().ln(), (a * w).tan() / a)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(TalagrandMargins {
        w2: w,
        diam_margin: half - w,
        ent_margin: ent - bound,
        weak_margin: bound - 0.5 * k * w * w,
        distance_margin: lsi_radius(ent, k, n_dim) - tangent,
    })
}

/// `sqrt((N/K)(exp(2 Ent/N) - 1)) - W_2(mu, m)`.
pub fn check_talagrand_from_lsi(
    space: &WeightedInterval,
    mu: &DensityVector,
    k: f64,
    n_dim: f64,
) -> Result<f64> {
    require_probability(space)?;
    require_positive_k(k)?;
    let m = reference_density(space)?;
    let w = w2_quantile_1d(space, mu, &m)?.max(0.0).sqrt();
    Ok(lsi_radius(entropy(space, mu, n_dim).ent, k, n_dim) - w)
}

/// Reads densities from CSV: a header row with the grid nodes, then one
/// density per row. Each row is normalized to a probability density.
pub fn read_density_csv(
    space: &WeightedInterval,
    input: impl BufRead,
) -> Result<Vec<DensityVector>> {
    let mut lines = input.lines();
    let parse = |line: &str| -> Result<Vec<f64>> {
        line.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("bad CSV number {s:?}: {e}")))
            })
            .collect()
    };
    let header = lines
        .next()
        .ok_or_else(|| Error::Invalid("empty density CSV".into()))??;
    let grid = parse(&header)?;
    let nodes = space.nodes();
    if grid.len() != nodes.len()
        || grid
            .iter()
            .zip(&nodes)
            .any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::Invalid("CSV grid does not match the space".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(DensityVector::normalized(space, parse(&line)?)?);
    }
    Ok(out)
}

/// Seeded smooth densities `rho ~ exp(-(x-c)^2 / 2s^2 + sum_k a_k cos(k pi y))`
/// with `y` the relative position in the support of `m`; centers in the
/// middle 60%, widths between 8% and 20% of the support length.
pub fn smooth_density_family(
    space: &WeightedInterval,
    count: usize,
    seed: u64,
) -> Result<Vec<DensityVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (space.lo(), space.hi());
    let len = hi - lo;
    (0..count)
        .map(|_| {
            let c = lo + len * rng.gen_range(0.2..0.8);
            let s = len * rng.gen_range(0.08..0.2);
            let a: [f64; 3] = [
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.1..0.1),
            ];
            DensityVector::from_fn(space, |x| {
                let y = (x - lo) / len;
                let z = (x - c) / s;
                let wave: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(k, ak)| ak * ((k + 1) as f64 * std::f64::consts::PI * y).cos())
                    .sum();
                (-0.5 * z * z + wave).exp()
            })
        })
        .collect()
}
