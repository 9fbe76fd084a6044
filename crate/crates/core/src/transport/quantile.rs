//! Monotone rearrangement on the line: quantile functions, `W_2` by
//! quantile coupling, and displacement interpolation.

use crate::error::{Error, Result};

/// One linear piece `u in [u0, u1] -> x in [x0, x1]` of a quantile function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePiece {
    pub u0: f64,
    pub u1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl QuantilePiece {
    fn at(&self, u: f64) -> f64 {
        if self.u1 == self.u0 {
            return self.x0;
        }
        let w = ((u - self.u0) / (self.u1 - self.u0)).clamp(0.0, 1.0);
        (1.0 - w) * self.x0 + w * self.x1
    }
}

/// Piecewise-linear quantile function of a measure that is uniform on each
/// cell `[x_i, x_{i+1}]` with mass `cell_mass[i]`, normalized to mass one.
/// Zero-mass cells are skipped, which makes the inverse left-continuous at
/// gaps.
pub fn cell_quantile(nodes: &[f64], cell_mass: &[f64]) -> Result<Vec<QuantilePiece>> {
    assert_eq!(nodes.len(), cell_mass.len() + 1);
    let total: f64 = cell_mass.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Invalid(format!(
            "total mass {total} must be positive"
        )));
    }
    let mut out = Vec::new();
    let mut acc = 0.0;
    for (i, &c) in cell_mass.iter().enumerate() {
        if c <= 0.0 {
            continue;
        }
        let u0 = acc / total;
        acc += c;
        let u1 = if i + 1 == cell_mass.len() {
            1.0
        } else {
            (acc / total).min(1.0)
        };
        out.push(QuantilePiece {
            u0,
            u1,
            x0: nodes[i],
            x1: nodes[i + 1],
        });
    }
    if let Some(last) = out.last_mut() {
        last.u1 = 1.0;
    }
    Ok(out)
}

/// Merged pieces of two quantile functions: on each returned `u`-interval
/// both are linear. Yields `(u0, u1, (a0, a1), (b0, b1))`.
pub fn merge(
    qa: &[QuantilePiece],
    qb: &[QuantilePiece],
) -> Vec<(f64, f64, (f64, f64), (f64, f64))> {
    let mut out = Vec::with_capacity(qa.len() + qb.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    while i < qa.len() && j < qb.len() {
        let end = qa[i].u1.min(qb[j].u1);
        if end > u {
            out.push((
                u,
                end,
                (qa[i].at(u), qa[i].at(end)),
                (qb[j].at(u), qb[j].at(end)),
            ));
            u = end;
        }
        if qa[i].u1 <= end {
            i += 1;
        }
        if qb[j].u1 <= end {
            j += 1;
        }
    }
    out
}

/// `int_0^1 |Q_a - Q_b|^2 du` for piecewise-linear quantiles (exact).
pub fn w2_squared_pieces(qa: &[QuantilePiece], qb: &[QuantilePiece]) -> f64 {
    merge(qa, qb)
        .into_iter()
        .map(|(u0, u1, (a0, a1), (b0, b1))| {
            let d0 = a0 - b0;
            let d1 = a1 - b1;
            (u1 - u0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0
        })
        .sum()
}

/// `W_2^2` between two atomic measures on the line via the step quantile
/// coupling. Masses are normalized to one.
pub fn w2_squared_atoms(xa: &[f64], ma: &[f64], xb: &[f64], mb: &[f64]) -> Result<f64> {
    let sorted = |x: &[f64], m: &[f64]| -> Result<Vec<(f64, f64)>> {
        let total: f64 = m.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("zero total mass".into()));
        }
        let mut v: Vec<(f64, f64)> = x
            .iter()
            .zip(m)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| (x, w / total))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(v)
    };
    let a = sorted(xa, ma)?;
    let b = sorted(xb, mb)?;
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    loop {
        let dm = ra.min(rb);
        total += dm * (a[i].0 - b[j].0).powi(2);
        ra -= dm;
        rb -= dm;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    Ok(total)
}

/// Deposits a family of uniform pieces `(z0, z1, mass)` onto the dual cells
/// `[x_i - h/2, x_i + h/2]` of a uniform grid. Returns per-node mass.
pub fn deposit_dual_cells(lo: f64, h: f64, n: usize, pieces: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut mass = vec![0.0; n + 1];
    // dual cell k spans [lo + (k - 1/2) h, lo + (k + 1/2) h] clipped to the grid
    let cell_of = |z: f64| -> usize { (((z - lo) / h + 0.5).floor().max(0.0) as usize).min(n) };
    for &(z0, z1, p) in pieces {
        if p <= 0.0 {
            continue;
        }
        let (z0, z1) = if z0 <= z1 { (z0, z1) } else { (z1, z0) };
        let width = z1 - z0;
        if width <= 1e-14 * h {
            mass[cell_of(0.5 * (z0 + z1))] += p;
            continue;
        }
        let (k0, k1) = (cell_of(z0), cell_of(z1));
        if k0 == k1 {
            mass[k0] += p;
            continue;
        }
        for (k, slot) in mass.iter_mut().enumerate().take(k1 + 1).skip(k0) {
            let left = if k == 0 {
                f64::NEG_INFINITY
            } else {
                lo + (k as f64 - 0.5) * h
            };
            let right = if k == n {
                f64::INFINITY
            } else {
                lo + (k as f64 + 0.5) * h
            };
            let overlap = z1.min(right) - z0.max(left);
            if overlap > 0.0 {
                *slot += p * overlap / width;
            }
        }
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_quantile_matches_hand_values() {
        let w = w2_squared_atoms(&[0.0, 1.0], &[0.5, 0.5], &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
        let w = w2_squared_atoms(&[0.0], &[1.0], &[3.0], &[2.0]).unwrap();
        assert!((w - 9.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_translation() {
        let nodes: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let qa = cell_quantile(&nodes, &[0.1; 10]).unwrap();
        let shifted: Vec<f64> = nodes.iter().map(|x| x + 0.25).collect();
        let qb = cell_quantile(&shifted, &[0.1; 10]).unwrap();
        assert!((w2_squared_pieces(&qa, &qb) - 0.0625).abs() < 1e-14);
    }

    #[test]
    fn deposit_preserves_mass() {
        let pieces = [(0.05, 0.33, 0.4), (0.33, 0.9, 0.5), (0.97, 0.97, 0.1)];
        let m = deposit_dual_cells(0.0, 0.1, 10, &pieces);
        let total: f64 = m.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((m[10] - 0.1).abs() < 1e-15);
    }
}
