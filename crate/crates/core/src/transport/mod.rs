//! Exact quadratic Wasserstein distance, optimal couplings and displacement
//! interpolation on desk-scale spaces.

pub mod quantile;
pub mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_measure::{DiscreteMMS, MeasureSpace, WeightedInterval};

use quantile::{cell_quantile, deposit_dual_cells, merge, w2_squared_pieces, QuantilePiece};

/// Tolerance on the total mass of a probability density.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// A density `rho` with respect to a space's reference measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    pub rho: Vec<f64>,
    pub mass: f64,
}

impl DensityVector {
    /// Wraps `rho` and records `sum rho_i w_i`. No normalization.
    pub fn new(space: &impl MeasureSpace, rho: Vec<f64>) -> Result<Self> {
        let w = space.weights();
        if rho.len() != w.len() {
            return Err(Error::Invalid(format!(
                "density has {} entries, space has {}",
                rho.len(),
                w.len()
            )));
        }
        if rho.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::Invalid(
                "densities must be nonnegative and finite".into(),
            ));
        }
        let mass = rho.iter().zip(w).map(|(r, w)| r * w).sum();
        Ok(DensityVector { rho, mass })
    }

    /// Requires unit mass to [`MASS_TOLERANCE`].
    pub fn probability(space: &impl MeasureSpace, rho: Vec<f64>) -> Result<Self> {
        let d = Self::new(space, rho)?;
        if (d.mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::MassMismatch(d.mass, 1.0));
        }
        Ok(d)
    }

    /// Rescales `rho` to unit mass.
    pub fn normalized(space: &impl MeasureSpace, rho: Vec<f64>) -> Result<Self> {
        let d = Self::new(space, rho)?;
        if !(d.mass > 0.0) {
            return Err(Error::Invalid("zero total mass".into()));
        }
        let rho = d.rho.iter().map(|r| r / d.mass).collect();
        Self::new(space, rho)
    }

    /// The reference measure itself, scaled to unit mass.
    pub fn reference(space: &impl MeasureSpace) -> Result<Self> {
        Self::normalized(space, vec![1.0; space.weights().len()])
    }

    /// Normalized `f(x_i)` on the nodes of an interval.
    pub fn from_fn(space: &WeightedInterval, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::normalized(space, space.nodes().into_iter().map(f).collect())
    }

    /// Point masses `rho_i w_i`.
    pub fn masses(&self, space: &impl MeasureSpace) -> Vec<f64> {
        self.rho
            .iter()
            .zip(space.weights())
            .map(|(r, w)| r * w)
            .collect()
    }
}

/// A transport plan between two discrete marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub q: Vec<Vec<f64>>,
}

impl Coupling {
    pub fn row_marginals(&self) -> Vec<f64> {
        self.q.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_marginals(&self) -> Vec<f64> {
        let n = self.q.first().map_or(0, |r| r.len());
        (0..n).map(|j| self.q.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn cost(&self, cost: impl Fn(usize, usize) -> f64) -> f64 {
        self.q
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &m)| (i, j, m)))
            .filter(|&(_, _, m)| m > 0.0)
            .map(|(i, j, m)| m * cost(i, j))
            .sum()
    }

    /// CSV rows `i,j,mass,cost_contrib` for every positive entry.
    pub fn write_csv(
        &self,
        out: &mut impl Write,
        cost: impl Fn(usize, usize) -> f64,
    ) -> Result<()> {
        writeln!(out, "i,j,mass,cost_contrib")?;
        for (i, row) in self.q.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m > 0.0 {
                    writeln!(out, "{i},{j},{m:e},{:e}", m * cost(i, j))?;
                }
            }
        }
        Ok(())
    }
}

/// Exact `W_2^2` and an optimal plan for the cost `d(x, y)^2`.
pub fn w2_discrete(
    space: &DiscreteMMS,
    mu: &DensityVector,
    nu: &DensityVector,
) -> Result<(f64, Coupling)> {
    let a = mu.masses(space);
    let b = nu.masses(space);
    let cost: Vec<Vec<f64>> = space
        .distances()
        .iter()
        .map(|r| r.iter().map(|d| d * d).collect())
        .collect();
    let q = simplex::solve_transport(&a, &b, &cost)?;
    let plan = Coupling { q };
    let w2 = plan.cost(|i, j| cost[i][j]);
    Ok((w2, plan))
}

/// Lebesgue cell masses `h (f_i + f_{i+1}) / 2` with `f = rho exp(-V)`;
/// they sum to the trapezoid mass of the density.
fn cell_masses(space: &WeightedInterval, mu: &DensityVector) -> Vec<f64> {
    let f: Vec<f64> = mu
        .rho
        .iter()
        .zip(space.density())
        .map(|(r, d)| r * d)
        .collect();
    let h = space.step();
    f.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).collect()
}

fn quantile_of(space: &WeightedInterval, mu: &DensityVector) -> Result<Vec<QuantilePiece>> {
    cell_quantile(&space.nodes(), &cell_masses(space, mu))
}

/// `W_2^2` between densities on an interval, each taken uniform on grid
/// cells (piecewise-linear CDF); computed exactly from the quantile
/// functions.
pub fn w2_quantile_1d(
    space: &WeightedInterval,
    mu: &DensityVector,
    nu: &DensityVector,
) -> Result<f64> {
    Ok(w2_squared_pieces(
        &quantile_of(space, mu)?,
        &quantile_of(space, nu)?,
    ))
}

/// `W_2^2` between the atomic measures `sum rho_i w_i delta_{x_i}` on the
/// nodes of an interval (the discretization used by [`w2_discrete`] on
/// [`interval_atoms`]).
pub fn w2_quantile_atoms(
    space: &WeightedInterval,
    mu: &DensityVector,
    nu: &DensityVector,
) -> Result<f64> {
    let x = space.nodes();
    quantile::w2_squared_atoms(&x, &mu.masses(space), &x, &nu.masses(space))
}

/// The nodes of an interval with positive weight, as a discrete space with
/// the trapezoid weights; returns the kept node indices as well.
pub fn interval_atoms(space: &WeightedInterval) -> Result<(DiscreteMMS, Vec<usize>)> {
    let keep: Vec<usize> = (0..=space.n())
        .filter(|&i| space.weights()[i] > 0.0)
        .collect();
    let x: Vec<f64> = keep.iter().map(|&i| space.x(i)).collect();
    let w: Vec<f64> = keep.iter().map(|&i| space.weights()[i]).collect();
    Ok((DiscreteMMS::from_line(&x, w)?, keep))
}

/// Wasserstein geodesic `mu_t = ((1-t) id + t T)_# mu` for the monotone map
/// `T`, re-binned onto the grid by dual-cell averages.
///
/// Mass falling on nodes where the reference density vanishes is moved to
/// the nearest node of positive weight, so every output is a probability
/// density.
pub fn displacement_interpolate_1d(
    space: &WeightedInterval,
    mu: &DensityVector,
    nu: &DensityVector,
    t_grid: &[f64],
) -> Result<Vec<DensityVector>> {
    let merged = merge(&quantile_of(space, mu)?, &quantile_of(space, nu)?);
    let w = space.weights();
    let positive: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::Invalid(
            "reference measure has no positive weight".into(),
        ));
    }
    t_grid
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
            }
            let pieces: Vec<(f64, f64, f64)> = merged
                .iter()
                .map(|&(u0, u1, (a0, a1), (b0, b1))| {
                    ((1.0 - t) * a0 + t * b0, (1.0 - t) * a1 + t * b1, u1 - u0)
                })
                .collect();
            let mut mass = deposit_dual_cells(space.lo(), space.step(), space.n(), &pieces);
            for i in 0..mass.len() {
                if w[i] == 0.0 && mass[i] > 0.0 {
                    let target = positive
                        .iter()
                        .copied()
                        .min_by_key(|&p| p.abs_diff(i))
                        .expect("nonempty");
                    mass[target] += mass[i];
                    mass[i] = 0.0;
                }
            }
            let total: f64 = mass.iter().sum();
            let rho = mass
                .iter()
                .zip(w)
                .map(|(&m, &wi)| if wi > 0.0 { m / total / wi } else { 0.0 })
                .collect();
            DensityVector::new(space, rho)
        })
        .collect()
}
