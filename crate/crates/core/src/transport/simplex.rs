//! Transportation simplex (MODI / stepping-stone on a spanning-tree basis).
//!
//! Rows are supplies, columns are demands. The basis is kept as a spanning
//! tree over the `m + n` row/column nodes with `m + n - 1` basic cells,
//! degenerate zero flows included.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Reduced-cost threshold relative to the largest cost.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

struct Basis {
    m: usize,
    cells: Vec<Cell>,
    // adjacency over nodes 0..m (rows) and m..m+n (columns), values index `cells`
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn northwest_corner(supply: &[f64], demand: &[f64]) -> Basis {
        let (m, n) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut basis = Basis {
            m,
            cells: Vec::with_capacity(m + n - 1),
            adj: vec![Vec::new(); m + n],
        };
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]).max(0.0);
            basis.push(Cell {
                row: i,
                col: j,
                flow: x,
            });
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && a[i] <= b[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        basis
    }

    fn push(&mut self, cell: Cell) {
        let idx = self.cells.len();
        self.adj[cell.row].push(idx);
        self.adj[self.m + cell.col].push(idx);
        self.cells.push(cell);
    }

    fn replace(&mut self, idx: usize, cell: Cell) {
        let old = self.cells[idx];
        let m = self.m;
        self.adj[old.row].retain(|&e| e != idx);
        self.adj[m + old.col].retain(|&e| e != idx);
        self.adj[cell.row].push(idx);
        self.adj[m + cell.col].push(idx);
        self.cells[idx] = cell;
    }

    fn other_end(&self, idx: usize, node: usize) -> usize {
        let c = self.cells[idx];
        if node == c.row {
            self.m + c.col
        } else {
            c.row
        }
    }

    fn potentials(&self, cost: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut u = vec![0.0; m];
        let mut v = vec![0.0; n];
        let mut seen = vec![false; m + n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(node) = queue.pop_front() {
            for &e in &self.adj[node] {
                let next = self.other_end(e, node);
                if seen[next] {
                    continue;
                }
                let c = self.cells[e];
                if next >= m {
                    v[c.col] = cost[c.row][c.col] - u[c.row];
                } else {
                    u[c.row] = cost[c.row][c.col] - v[c.col];
                }
                seen[next] = true;
                queue.push_back(next);
            }
        }
        (u, v)
    }

    /// Basis cells on the tree path from `from` to `to`, in order.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent: Vec<Option<usize>> = vec![None; self.adj.len()];
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(node) = queue.pop_front() {
            if node == to {
                break;
            }
            for &e in &self.adj[node] {
                let next = self.other_end(e, node);
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some(e);
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = to;
        while node != from {
            let e = parent[node].expect("basis is a spanning tree");
            out.push(e);
            node = self.other_end(e, node);
        }
        out.reverse();
        out
    }
}

/// Minimizes `sum q_ij c_ij` over couplings with the given marginals.
/// Returns the dense optimal plan.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Invalid("empty marginal".into()));
    }
    if cost.len() != m || cost.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid(
            "cost matrix shape does not match marginals".into(),
        ));
    }
    if supply
        .iter()
        .chain(demand)
        .any(|&x| !(x >= 0.0 && x.is_finite()))
    {
        return Err(Error::Invalid(
            "marginals must be nonnegative and finite".into(),
        ));
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (sa - sb).abs() > 1e-10 * sa.max(sb).max(1.0) {
        return Err(Error::MassMismatch(sa, sb));
    }
    let cmax = cost.iter().flatten().fold(0.0f64, |a, &c| a.max(c.abs()));
    let tol = PIVOT_TOLERANCE * cmax.max(f64::MIN_POSITIVE);

    let mut basis = Basis::northwest_corner(supply, demand);
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    for _ in 0..max_iter {
        let (u, v) = basis.potentials(cost, n);
        let mut best = (-tol, None);
        for (i, row) in cost.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                let r = c - u[i] - v[j];
                if r < best.0 {
                    best = (r, Some((i, j)));
                }
            }
        }
        let Some((ei, ej)) = best.1 else {
            let mut plan = vec![vec![0.0; n]; m];
            for c in &basis.cells {
                plan[c.row][c.col] += c.flow;
            }
            return Ok(plan);
        };
        // cycle: entering (+), then path cells from column ej back to row ei
        // alternate (-), (+), ...
        let path = basis.path(m + ej, ei);
        let (mut theta, mut leave) = (f64::INFINITY, usize::MAX);
        for &e in path.iter().step_by(2) {
            let f = basis.cells[e].flow;
            if f < theta {
                theta = f;
                leave = e;
            }
        }
        let theta = theta.max(0.0);
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis.cells[e].flow -= theta;
            } else {
                basis.cells[e].flow += theta;
            }
        }
        basis.replace(
            leave,
            Cell {
                row: ei,
                col: ej,
                flow: theta,
            },
        );
    }
    Err(Error::NoConvergence(max_iter))
}
