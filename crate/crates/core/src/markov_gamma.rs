//! Finite reversible Markov generators, the heat semigroup, carré du champ
//! calculus, Bakry-Émery and Bakry-Ledoux checks, the one-dimensional
//! `Ric_{N,V}` criterion and the spectral gap.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{e_kappa, expm1_ratio};
use crate::error::{Error, Result};
use crate::grid::ScalarFunctionGrid;
use crate::metric_measure::{MeasureSpace, WeightedInterval};

/// Relative tolerance for detailed balance and conservativeness.
pub const BALANCE_TOLERANCE: f64 = 1e-10;

/// Minimum interior node count for finite-difference generators.
pub const MIN_FD_INTERIOR: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Graph,
    FiniteDifference,
    Imported,
}

#[derive(Debug, Clone)]
struct Eigen {
    /// Ascending eigenvalues of `-D^{1/2} L D^{-1/2}`.
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// A reversible generator `L` on `n` states with reversing measure `m`,
/// stored as sparse off-diagonal rates (`L_ii = -sum_j L_ij`).
#[derive(Debug, Clone)]
pub struct MarkovGenerator {
    m: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    coords: Vec<f64>,
    kind: GeneratorKind,
    /// All off-diagonal rates are nonnegative.
    positive: bool,
    eigen: OnceLock<Eigen>,
}

impl MeasureSpace for MarkovGenerator {
    fn weights(&self) -> &[f64] {
        &self.m
    }
}

impl MarkovGenerator {
    fn assemble(
        m: Vec<f64>,
        rates: BTreeMap<(usize, usize), f64>,
        coords: Vec<f64>,
        kind: GeneratorKind,
    ) -> Result<Self> {
        let n = m.len();
        if n < 2 {
            return Err(Error::Invalid(
                "a generator needs at least two states".into(),
            ));
        }
        if m.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid("reversing measure must be positive".into()));
        }
        let mut rows = vec![Vec::new(); n];
        let mut positive = true;
        for (&(i, j), &r) in &rates {
            if i >= n || j >= n || !r.is_finite() {
                return Err(Error::Invalid(format!("bad rate ({i}, {j}) = {r}")));
            }
            if i == j || r == 0.0 {
                continue;
            }
            positive &= r > 0.0;
            let back = rates.get(&(j, i)).copied().unwrap_or(0.0);
            let (a, b) = (m[i] * r, m[j] * back);
            if (a - b).abs() > BALANCE_TOLERANCE * a.abs().max(b.abs()) {
                return Err(Error::DetailedBalance(i, j));
            }
            rows[i].push((j, r));
        }
        Ok(MarkovGenerator {
            m,
            rows,
            coords,
            kind,
            positive,
            eigen: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    /// Positions of the states (grid nodes for finite-difference
    /// generators, `0, 1, ...` otherwise).
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Whether every off-diagonal entry is nonnegative (needed for the
    /// maximum principle).
    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return -self.rows[i].iter().map(|&(_, r)| r).sum::<f64>();
        }
        self.rows[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, r)| r)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[i].iter().copied()
    }

    /// `(Lf)(i) = sum_j L_ij (f_j - f_i)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.apply_at(i, f)).collect()
    }

    fn apply_at(&self, i: usize, f: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, r)| r * (f[j] - f[i])).sum()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.rate(i, j))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.rows[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn is_path(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&(j, _)| j + 1 == i || i + 1 == j))
    }

    fn eigen(&self) -> &Eigen {
        self.eigen.get_or_init(|| {
            let n = self.len();
            let sq: Vec<f64> = self.m.iter().map(|w| w.sqrt()).collect();
            let s = DMatrix::from_fn(n, n, |i, j| -self.rate(i, j) * sq[i] / sq[j]);
            let s = 0.5 * (&s + s.transpose());
            let eig = SymmetricEigen::new(s);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
            Eigen { values, vectors }
        })
    }

    /// Builds a generator from a dense matrix (rows summing to zero).
    pub fn from_matrix(matrix: &[Vec<f64>], m: Vec<f64>) -> Result<Self> {
        let n = m.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("matrix and weights disagree in size".into()));
        }
        let mut rates = BTreeMap::new();
        for (i, row) in matrix.iter().enumerate() {
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sum: f64 = row.iter().sum();
            if sum.abs() > BALANCE_TOLERANCE * scale.max(f64::MIN_POSITIVE) * n as f64 {
                return Err(Error::Invalid(format!("row {i} sums to {sum}, not 0")));
            }
            for (j, &r) in row.iter().enumerate() {
                if i != j && r != 0.0 {
                    rates.insert((i, j), r);
                }
            }
        }
        Self::assemble(
            m,
            rates,
            (0..n).map(|i| i as f64).collect(),
            GeneratorKind::Imported,
        )
    }

    /// Reads `{"matrix": [[..]], "weights": [..]}`.
    pub fn from_json(reader: impl Read) -> Result<Self> {
        let GeneratorJson { matrix, weights } = serde_json::from_reader(reader)?;
        Self::from_matrix(&matrix, weights)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorJson {
    pub matrix: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Generator from directed rates `(i, j, L_ij)`. A missing reverse rate is
/// filled in by detailed balance, `L_ji = m_i L_ij / m_j`; a given one must
/// agree with it.
pub fn build_graph_generator(
    edges: &[(usize, usize, f64)],
    m: Vec<f64>,
) -> Result<MarkovGenerator> {
    let n = m.len();
    let mut given = BTreeMap::new();
    for &(i, j, r) in edges {
        if i >= n || j >= n || i == j {
            return Err(Error::Invalid(format!("bad edge ({i}, {j})")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!(
                "rate on ({i}, {j}) must be positive (got {r})"
            )));
        }
        if given.insert((i, j), r).is_some() {
            return Err(Error::Invalid(format!("duplicate edge ({i}, {j})")));
        }
    }
    let mut rates = given.clone();
    for (&(i, j), &r) in &given {
        if m[j] > 0.0 {
            rates.entry((j, i)).or_insert(m[i] * r / m[j]);
        }
    }
    let g = MarkovGenerator::assemble(
        m,
        rates,
        (0..n).map(|i| i as f64).collect(),
        GeneratorKind::Graph,
    )?;
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(g)
}

/// Two states with rate `q` both ways and uniform probability measure.
pub fn two_point(q: f64) -> Result<MarkovGenerator> {
    build_graph_generator(&[(0, 1, q)], vec![0.5, 0.5])
}

/// Neumann discretization of `f'' - V' f'` on a weighted interval in
/// conservative form: conductances `rho_{i+1/2} / h` with the arithmetic
/// mean of `exp(-V)`, masses equal to the trapezoid weights. Nodes where
/// the reference density vanishes are dropped. The result is exactly
/// reversible for the trapezoid weights.
pub fn build_fd_generator(space: &WeightedInterval) -> Result<MarkovGenerator> {
    let n = space.n();
    if n < MIN_FD_INTERIOR + 1 {
        return Err(Error::GridTooCoarse {
            nodes: n + 1,
            min: MIN_FD_INTERIOR + 2,
        });
    }
    let h = space.step();
    let rho = space.density();
    let w = space.weights();
    let keep: Vec<usize> = (0..=n).filter(|&i| w[i] > 0.0).collect();
    let local: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut rates = BTreeMap::new();
    for i in 0..n {
        let (Some(&a), Some(&b)) = (local.get(&i), local.get(&(i + 1))) else {
            continue;
        };
        let c = 0.5 * (rho[i] + rho[i + 1]) / h;
        rates.insert((a, b), c / w[i]);
        rates.insert((b, a), c / w[i + 1]);
    }
    let m = keep.iter().map(|&i| w[i]).collect();
    let coords = keep.iter().map(|&i| space.x(i)).collect();
    let g = MarkovGenerator::assemble(m, rates, coords, GeneratorKind::FiniteDifference)?;
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEvaluation {
    pub t: f64,
    pub ptf: Vec<f64>,
}

/// `P_t f = exp(tL) f` through the eigendecomposition of the symmetrized
/// generator.
pub fn heat_semigroup(gen: &MarkovGenerator, t: f64, f: &[f64]) -> Result<SemigroupEvaluation> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t = {t} must be nonnegative")));
    }
    check_len(gen, f)?;
    if t == 0.0 {
        return Ok(SemigroupEvaluation { t, ptf: f.to_vec() });
    }
    let eig = gen.eigen();
    let n = gen.len();
    let sq: Vec<f64> = gen.m.iter().map(|w| w.sqrt()).collect();
    let g: Vec<f64> = f.iter().zip(&sq).map(|(a, b)| a * b).collect();
    let mut out = vec![0.0; n];
    for (k, &lam) in eig.values.iter().enumerate() {
        let col = eig.vectors.column(k);
        let c: f64 = col.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() * (-t * lam).exp();
        for (o, v) in out.iter_mut().zip(col.iter()) {
            *o += c * v;
        }
    }
    let ptf = out.iter().zip(&sq).map(|(a, b)| a / b).collect();
    Ok(SemigroupEvaluation { t, ptf })
}

fn check_len(gen: &MarkovGenerator, f: &[f64]) -> Result<()> {
    if f.len() != gen.len() {
        return Err(Error::Invalid(format!(
            "function has {} entries, generator has {} states",
            f.len(),
            gen.len()
        )));
    }
    Ok(())
}

/// `Gamma(f, g)(i) = (1/2) sum_j L_ij (f_j - f_i)(g_j - g_i)`, which equals
/// `(1/2)(L(fg) - f Lg - g Lf)`.
pub fn gamma_pair(gen: &MarkovGenerator, f: &[f64], g: &[f64]) -> Vec<f64> {
    (0..gen.len())
        .map(|i| gamma_pair_at(gen, i, f, g))
        .collect()
}

fn gamma_pair_at(gen: &MarkovGenerator, i: usize, f: &[f64], g: &[f64]) -> f64 {
    0.5 * gen.rows[i]
        .iter()
        .map(|&(j, r)| r * (f[j] - f[i]) * (g[j] - g[i]))
        .sum::<f64>()
}

pub fn gamma(gen: &MarkovGenerator, f: &[f64]) -> Vec<f64> {
    gamma_pair(gen, f, f)
}

/// `Gamma_2(f) = (1/2) L Gamma(f) - Gamma(f, Lf)`.
pub fn gamma2(gen: &MarkovGenerator, f: &[f64]) -> Vec<f64> {
    let g = gamma(gen, f);
    let lf = gen.apply(f);
    let lg = gen.apply(&g);
    let cross = gamma_pair(gen, f, &lf);
    lg.iter().zip(&cross).map(|(a, b)| 0.5 * a - b).collect()
}

/// `Gamma_2(f) - K Gamma(f) - (Lf)^2 / N` at every state.
pub fn bochner_margins(gen: &MarkovGenerator, f: &[f64], k: f64, n_dim: f64) -> Vec<f64> {
    let g2 = gamma2(gen, f);
    let g = gamma(gen, f);
    let lf = gen.apply(f);
    (0..gen.len())
        .map(|i| g2[i] - k * g[i] - lf[i] * lf[i] / n_dim)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeReport {
    /// `(1/2) sum m (Lg) Gamma(f) - sum m g Gamma(f, Lf) - K sum m g Gamma(f) - (1/N) sum m g (Lf)^2`.
    pub weak_margin: f64,
    pub pointwise: Vec<f64>,
    pub min_pointwise: f64,
}

/// Weak and pointwise Bochner inequality for one test function `f` and
/// weight `g >= 0`.
pub fn check_be(
    gen: &MarkovGenerator,
    f: &[f64],
    g: &[f64],
    k: f64,
    n_dim: f64,
) -> Result<BeReport> {
    check_len(gen, f)?;
    check_len(gen, g)?;
    if g.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Invalid("the weight g must be nonnegative".into()));
    }
    if !(n_dim > 0.0) {
        return Err(Error::Domain(format!("N must be positive (got {n_dim})")));
    }
    let gam = gamma(gen, f);
    let lf = gen.apply(f);
    let cross = gamma_pair(gen, f, &lf);
    let lg = gen.apply(g);
    let m = &gen.m;
    let weak_margin = (0..gen.len())
        .map(|i| {
            m[i] * (0.5 * lg[i] * gam[i]
                - g[i] * cross[i]
                - k * g[i] * gam[i]
                - g[i] * lf[i] * lf[i] / n_dim)
        })
        .sum();
    let pointwise = bochner_margins(gen, f, k, n_dim);
    let min_pointwise = pointwise.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BeReport {
        weak_margin,
        pointwise,
        min_pointwise,
    })
}

/// Pointwise `BE(K,N)` for every function at once: at each state the map
/// `f -> Gamma_2(f) - K Gamma(f) - (Lf)^2/N` is a quadratic form in the
/// values of `f` on the two-step neighborhood; all of them must be
/// positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeCertificate {
    /// Smallest eigenvalue over all local forms.
    pub min_eigenvalue: f64,
    pub vertex: usize,
    /// Largest entry of any local form, for relative tolerances.
    pub scale: f64,
}

impl BeCertificate {
    pub fn passed(&self, rel_tol: f64) -> bool {
        self.min_eigenvalue >= -rel_tol * self.scale
    }
}

pub fn be_certificate(gen: &MarkovGenerator, k: f64, n_dim: f64) -> Result<BeCertificate> {
    if !(n_dim > 0.0) {
        return Err(Error::Domain(format!("N must be positive (got {n_dim})")));
    }
    let n = gen.len();
    let mut f = vec![0.0; n];
    let mut best = BeCertificate {
        min_eigenvalue: f64::INFINITY,
        vertex: 0,
        scale: 0.0,
    };
    for i in 0..n {
        let mut ball = vec![i];
        for &(j, _) in &gen.rows[i] {
            ball.push(j);
            ball.extend(gen.rows[j].iter().map(|&(l, _)| l));
        }
        ball.sort_unstable();
        ball.dedup();
        let q = |f: &[f64]| -> f64 {
            let lf_i = gen.apply_at(i, f);
            let g_i = gamma_pair_at(gen, i, f, f);
            let mut l_gamma = 0.0;
            let mut cross = 0.0;
            for &(j, r) in &gen.rows[i] {
                l_gamma += r * (gamma_pair_at(gen, j, f, f) - g_i);
                cross += r * (f[j] - f[i]) * (gen.apply_at(j, f) - lf_i);
            }
            0.5 * l_gamma - 0.5 * cross - k * g_i - lf_i * lf_i / n_dim
        };
        let b = ball.len();
        let mut diag = vec![0.0; b];
        for (a, &u) in ball.iter().enumerate() {
            f[u] = 1.0;
            diag[a] = q(&f);
            f[u] = 0.0;
        }
        let mut form = DMatrix::zeros(b, b);
        for a in 0..b {
            form[(a, a)] = diag[a];
            for c in a + 1..b {
                f[ball[a]] = 1.0;
                f[ball[c]] = 1.0;
                let v = 0.5 * (q(&f) - diag[a] - diag[c]);
                f[ball[a]] = 0.0;
                f[ball[c]] = 0.0;
                form[(a, c)] = v;
                form[(c, a)] = v;
            }
        }
        let scale = form.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = SymmetricEigen::new(form).eigenvalues.min();
        best.scale = best.scale.max(scale);
        if min < best.min_eigenvalue {
            best.min_eigenvalue = min;
            best.vertex = i;
        }
    }
    Ok(best)
}

/// `4 K t^2 / (N (exp(2Kt) - 1))`, equal to `2t/N` at `K = 0`.
pub fn bl_coefficient(k: f64, n_dim: f64, t: f64) -> f64 {
    2.0 * t / (n_dim * expm1_ratio(2.0 * k * t))
}

/// `2 e_{-2K}(t) / N = (1 - exp(-2Kt)) / (N K)`, the larger coefficient
/// that BE(K,N) yields directly through the semigroup interpolation.
pub fn bl_coefficient_bochner(k: f64, n_dim: f64, t: f64) -> f64 {
    2.0 * e_kappa(-2.0 * k, t) / n_dim
}

/// `exp(-2Kt) P_t Gamma(f) - Gamma(P_t f) - c(t) (L P_t f)^2` per state,
/// with `c = bl_coefficient`.
pub fn check_bl(gen: &MarkovGenerator, f: &[f64], t: f64, k: f64, n_dim: f64) -> Result<Vec<f64>> {
    check_bl_with(gen, f, t, k, bl_coefficient(k, n_dim, t))
}

/// As [`check_bl`] with an explicit coefficient `c`.
pub fn check_bl_with(gen: &MarkovGenerator, f: &[f64], t: f64, k: f64, c: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    let ptf = heat_semigroup(gen, t, f)?.ptf;
    let pt_gamma = heat_semigroup(gen, t, &gamma(gen, f))?.ptf;
    let g = gamma(gen, &ptf);
    let l = gen.apply(&ptf);
    let decay = (-2.0 * k * t).exp();
    Ok((0..gen.len())
        .map(|i| decay * pt_gamma[i] - g[i] - c * l[i] * l[i])
        .collect())
}

/// `Ric_{N,V} = V'' - V'^2/(N-1)` on the grid, evaluated as
/// `-(N-1) W''/W` with `W = exp(-V/(N-1))` and the three-point stencil.
/// The two boundary values are extrapolated linearly.
pub fn ric_nv_1d(space: &WeightedInterval, n_dim: f64) -> Result<ScalarFunctionGrid> {
    if !(n_dim > 1.0) {
        return Err(Error::Domain(format!("need N > 1 (got {n_dim})")));
    }
    let v = space.potential().values();
    let n = space.n();
    let h = space.step();
    let e = n_dim - 1.0;
    let mut ric = vec![0.0; n + 1];
    for i in 1..n {
        let up = (-(v[i + 1] - v[i]) / e).exp_m1();
        let down = (-(v[i - 1] - v[i]) / e).exp_m1();
        ric[i] = -e * (up + down) / (h * h);
    }
    ric[0] = 2.0 * ric[1] - ric[2];
    ric[n] = 2.0 * ric[n - 1] - ric[n - 2];
    ScalarFunctionGrid::new(space.lo(), space.hi(), ric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub lambda1: f64,
    /// Normalized to `sum m psi^2 = 1`, orthogonal to constants.
    pub eigvec: Vec<f64>,
    pub connected: bool,
}

/// Smallest nonzero eigenvalue of `-L`. Path-shaped generators use Sturm
/// bisection on the symmetrized tridiagonal matrix; others a dense solve.
pub fn spectral_gap(gen: &MarkovGenerator) -> Result<SpectralGap> {
    let connected = gen.is_connected();
    let sq: Vec<f64> = gen.m.iter().map(|w| w.sqrt()).collect();
    let (lambda1, y) = if gen.is_path() && connected {
        let n = gen.len();
        let diag: Vec<f64> = (0..n).map(|i| -gen.rate(i, i)).collect();
        let off: Vec<f64> = (0..n - 1)
            .map(|i| -gen.rate(i, i + 1) * sq[i] / sq[i + 1])
            .collect();
        tridiagonal_second_eigenpair(&diag, &off, &sq)?
    } else {
        let eig = gen.eigen();
        let y: Vec<f64> = eig.vectors.column(1).iter().copied().collect();
        (eig.values[1], y)
    };
    let mut psi: Vec<f64> = y.iter().zip(&sq).map(|(a, b)| a / b).collect();
    let norm: f64 = psi
        .iter()
        .zip(&gen.m)
        .map(|(p, w)| p * p * w)
        .sum::<f64>()
        .sqrt();
    psi.iter_mut().for_each(|p| *p /= norm);
    Ok(SpectralGap {
        lambda1: if connected { lambda1 } else { 0.0 },
        eigvec: psi,
        connected,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = diag[0] - x;
    for i in 0..diag.len() {
        if i > 0 {
            q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        }
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Second-smallest eigenpair; `kernel` spans the known null vector.
fn tridiagonal_second_eigenpair(
    diag: &[f64],
    off: &[f64],
    kernel: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = diag.len();
    let bound = (0..n)
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { off[i].abs() } else { 0.0 };
            diag[i].abs() + l + r
        })
        .fold(0.0f64, f64::max);
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(diag, off, mid) >= 2 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);

    let knorm: f64 = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
    let project = |y: &mut Vec<f64>| {
        let c: f64 = y.iter().zip(kernel).map(|(a, b)| a * b).sum::<f64>() / (knorm * knorm);
        y.iter_mut().zip(kernel).for_each(|(a, b)| *a -= c * b);
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        y.iter_mut().for_each(|a| *a /= norm);
    };
    let mut y: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 0.5) / n as f64 - 0.5) * kernel[i])
        .collect();
    project(&mut y);
    for _ in 0..4 {
        let shifted: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
        y = solve_tridiagonal(off, &shifted, off, y, bound)?;
        project(&mut y);
    }
    Ok((lambda, y))
}

/// Tridiagonal solve with partial pivoting; zero pivots are perturbed,
/// which is what inverse iteration needs.
fn solve_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    mut b: Vec<f64>,
    scale: f64,
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut dl = sub.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let eps = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = eps;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - fact * b[i + 1];
        }
        dl[i] = 0.0;
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = eps;
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence(4));
    }
    Ok(b)
}

/// `lambda_1 - K N / (N - 1)`.
pub fn check_lichnerowicz(gen: &MarkovGenerator, k: f64, n_dim: f64) -> Result<f64> {
    if !(n_dim > 1.0) {
        return Err(Error::Domain(format!("need N > 1 (got {n_dim})")));
    }
    Ok(spectral_gap(gen)?.lambda1 - k * n_dim / (n_dim - 1.0))
}

/// Test functions: the coordinate, `sin`/`cos` of the first three modes in
/// the relative position, and four seeded random fields smoothed by
/// `P_{0.01}`.
pub fn test_battery(gen: &MarkovGenerator, seed: u64) -> Result<Vec<Vec<f64>>> {
    let x = gen.coords();
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let y: Vec<f64> = x.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let mut out = vec![x.to_vec()];
    for k in 1..=3 {
        let w = k as f64 * std::f64::consts::PI;
        out.push(y.iter().map(|v| (w * v).sin()).collect());
        out.push(y.iter().map(|v| (w * v).cos()).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        let raw: Vec<f64> = (0..gen.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out.push(heat_semigroup(gen, 0.01, &raw)?.ptf);
    }
    Ok(out)
}
