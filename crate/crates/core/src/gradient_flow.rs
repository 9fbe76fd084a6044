//! Gradient flows `x' = -S'(x)` of one-dimensional functions and the
//! evolution variational inequality `EVI_{K,N}` with its equivalent and
//! derived forms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{e_kappa, expm1_ratio, s_kappa};
use crate::error::{Error, Result};
use crate::models::Potential;

/// A trajectory sampled at `times[i] = i * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub step: f64,
    /// The flow left the domain before the final time; `states` stops at
    /// the last point inside.
    pub truncated: bool,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the sample at time `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = (t / self.step).round();
        if i < 0.0
            || i as usize >= self.len()
            || (i * self.step - t).abs() > 1e-9 * t.abs().max(1.0)
        {
            return Err(Error::Invalid(format!(
                "t = {t} is not on the trajectory grid"
            )));
        }
        Ok(i as usize)
    }

    /// CSV rows `t,x,S,U_N`.
    pub fn write_csv(&self, out: &mut impl Write, s: &impl Potential, n_dim: f64) -> Result<()> {
        writeln!(out, "t,x,S,U_N")?;
        for (t, &x) in self.times.iter().zip(&self.states) {
            let v = s.value(x);
            writeln!(out, "{t},{x},{v},{}", (-v / n_dim).exp())?;
        }
        Ok(())
    }
}

/// Classical fourth-order Runge-Kutta for `x' = -S'(x)` on `[0, T]`.
pub fn integrate_flow(s: &impl Potential, x0: f64, dt: f64, t_end: f64) -> Result<FlowTrajectory> {
    if !s.contains(x0) || !s.value(x0).is_finite() {
        return Err(Error::Domain(format!(
            "start point {x0} outside the domain"
        )));
    }
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::Invalid(format!(
            "need dt > 0 and T > 0 (got {dt}, {t_end})"
        )));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let f = |x: f64| {
        if s.contains(x) {
            let d = -s.derivative(x);
            d.is_finite().then_some(d)
        } else {
            None
        }
    };
    let mut times = vec![0.0];
    let mut states = vec![x0];
    let mut x = x0;
    let mut truncated = false;
    for i in 1..=steps {
        let next = (|| {
            let k1 = f(x)?;
            let k2 = f(x + 0.5 * dt * k1)?;
            let k3 = f(x + 0.5 * dt * k2)?;
            let k4 = f(x + dt * k3)?;
            let y = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            (s.contains(y) && s.value(y).is_finite()).then_some(y)
        })();
        match next {
            Some(y) => {
                x = y;
                times.push(i as f64 * dt);
                states.push(x);
            }
            None => {
                truncated = true;
                break;
            }
        }
    }
    Ok(FlowTrajectory {
        times,
        states,
        step: dt,
        truncated,
    })
}

/// Derivative of samples on a uniform grid: five-point centered
/// differences, five-point one-sided stencils at the two ends.
fn time_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    const ONE_SIDED: [[f64; 5]; 2] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
    ];
    let forward = |row: &[f64; 5]| row.iter().zip(f).map(|(c, v)| c * v).sum::<f64>() / (12.0 * h);
    let backward = |row: &[f64; 5]| {
        -row.iter()
            .zip(f.iter().rev())
            .map(|(c, v)| c * v)
            .sum::<f64>()
            / (12.0 * h)
    };
    (0..n)
        .map(|i| match i {
            0 => forward(&ONE_SIDED[0]),
            1 => forward(&ONE_SIDED[1]),
            _ if i == n - 1 => backward(&ONE_SIDED[0]),
            _ if i == n - 2 => backward(&ONE_SIDED[1]),
            _ => (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h),
        })
        .collect()
}

fn require_points(traj: &FlowTrajectory) -> Result<()> {
    if traj.len() < 5 {
        return Err(Error::Invalid(
            "trajectory needs at least five samples".into(),
        ));
    }
    Ok(())
}

fn require_z(s: &impl Potential, z: f64) -> Result<f64> {
    let v = s.value(z);
    if !v.is_finite() {
        return Err(Error::Domain(format!("S({z}) is not finite")));
    }
    Ok(v)
}

/// `s_{K/N}(d/2)^2`.
fn s_half_sq(k: f64, n_dim: f64, d: f64) -> f64 {
    let v = s_kappa(k / n_dim, 0.5 * d);
    v * v
}

/// `(N/2)(1 - U_N(z)/U_N(x)) - d/dt s_{K/N}(|x_t - z|/2)^2 - K s_{K/N}(...)^2`
/// at every trajectory time.
pub fn evi_residual(
    traj: &FlowTrajectory,
    z: f64,
    k: f64,
    n_dim: f64,
    s: &impl Potential,
) -> Result<Vec<f64>> {
    require_points(traj)?;
    let sz = require_z(s, z)?;
    let f: Vec<f64> = traj
        .states
        .iter()
        .map(|&x| s_half_sq(k, n_dim, (x - z).abs()))
        .collect();
    let df = time_derivative(&f, traj.step);
    Ok(traj
        .states
        .iter()
        .zip(f.iter().zip(&df))
        .map(|(&x, (&fi, &dfi))| {
            let rhs = 0.5 * n_dim * -((s.value(x) - sz) / n_dim).exp_m1();
            rhs - dfi - k * fi
        })
        .collect())
}

/// `S(z) - S(x_t) - (1/2) d/dt |x_t - z|^2 - (K/2)|x_t - z|^2`, the
/// dimension-free form.
pub fn kflow_residual(
    traj: &FlowTrajectory,
    z: f64,
    k: f64,
    s: &impl Potential,
) -> Result<Vec<f64>> {
    require_points(traj)?;
    let sz = require_z(s, z)?;
    let f: Vec<f64> = traj
        .states
        .iter()
        .map(|&x| 0.5 * (x - z) * (x - z))
        .collect();
    let df = time_derivative(&f, traj.step);
    Ok(traj
        .states
        .iter()
        .zip(f.iter().zip(&df))
        .map(|(&x, (&fi, &dfi))| sz - s.value(x) - dfi - k * fi)
        .collect())
}

/// `n` equally spaced interior points of `(lo, hi)`.
pub fn z_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n + 1) as f64;
    (1..=n).map(|i| lo + i as f64 * h).collect()
}

/// Default number of reference points.
pub const DEFAULT_Z_POINTS: usize = 41;

/// `c (dt^2 + step^2)` with `c = 50`.
pub fn default_tolerance(dt: f64, grid_step: f64) -> f64 {
    50.0 * (dt * dt + grid_step * grid_step)
}

/// Worst residual over a set of reference points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EviCertificate {
    pub min_residual: f64,
    pub argmin_t: f64,
    pub argmin_z: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn certify(
    traj: &FlowTrajectory,
    zs: &[f64],
    tol: f64,
    residual: impl Fn(f64) -> Result<Vec<f64>> + Sync,
) -> Result<EviCertificate> {
    let per_z: Vec<(f64, f64, f64)> = zs
        .par_iter()
        .map(|&z| {
            let r = residual(z)?;
            let (i, m) = r
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
                );
            Ok((m, traj.times[i], z))
        })
        .collect::<Result<_>>()?;
    let (min_residual, argmin_t, argmin_z) =
        per_z
            .into_iter()
            .fold((f64::INFINITY, 0.0, f64::NAN), |a, b| {
                if b.0 < a.0 {
                    b
                } else {
                    a
                }
            });
    Ok(EviCertificate {
        min_residual,
        argmin_t,
        argmin_z,
        tolerance: tol,
        passed: min_residual >= -tol,
    })
}

/// Certifies `EVI_{K,N}` on the trajectory grid for every `z` in `zs`.
/// The inequality is only checked at grid times, not almost everywhere.
pub fn certify_evi(
    traj: &FlowTrajectory,
    zs: &[f64],
    k: f64,
    n_dim: f64,
    s: &impl Potential,
    tol: f64,
) -> Result<EviCertificate> {
    certify(traj, zs, tol, |z| evi_residual(traj, z, k, n_dim, s))
}

/// `e_K(t1-t0)(N/2)(1 - U_N(z)/U_N(x_t1)) - e^{K(t1-t0)} s(d(x_t1,z)/2)^2 + s(d(x_t0,z)/2)^2`.
pub fn evi_integrated(
    traj: &FlowTrajectory,
    z: f64,
    k: f64,
    n_dim: f64,
    s: &impl Potential,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    if t0 > t1 {
        return Err(Error::Invalid(format!("need t0 <= t1 (got {t0}, {t1})")));
    }
    let sz = require_z(s, z)?;
    let (i0, i1) = (traj.index_of(t0)?, traj.index_of(t1)?);
    let (x0, x1) = (traj.states[i0], traj.states[i1]);
    let dt = traj.times[i1] - traj.times[i0];
    let lhs = e_kappa(k, dt) * 0.5 * n_dim * -((s.value(x1) - sz) / n_dim).exp_m1();
    let rhs =
        (k * dt).exp() * s_half_sq(k, n_dim, (x1 - z).abs()) - s_half_sq(k, n_dim, (x0 - z).abs());
    Ok(lhs - rhs)
}

/// `1 + 2 s(d(x_0,z)/2)^2 / (N e_K(t)) - U_N(z)/U_N(x_t)` for `t > 0`.
/// The entry at `t = 0` is `+inf` (or the ratio margin when `z = x_0`).
pub fn check_regularization(
    traj: &FlowTrajectory,
    z: f64,
    k: f64,
    n_dim: f64,
    s: &impl Potential,
) -> Result<Vec<f64>> {
    let sz = require_z(s, z)?;
    let d0 = s_half_sq(k, n_dim, (traj.states[0] - z).abs());
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, &x)| {
            let ratio = ((s.value(x) - sz) / n_dim).exp();
            let extra = if d0 == 0.0 {
                0.0
            } else {
                2.0 * d0 / (n_dim * e_kappa(k, t))
            };
            1.0 + extra - ratio
        })
        .collect())
}

/// Margins on an `(s, t)` sample grid; `margins[i][j]` belongs to
/// `(s_times[i], t_times[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub s_times: Vec<f64>,
    pub t_times: Vec<f64>,
    pub margins: Vec<Vec<f64>>,
    pub min_margin: f64,
}

fn sample_indices(len: usize, samples: usize) -> Vec<usize> {
    if samples <= 1 || len <= 1 {
        return vec![0];
    }
    let mut idx: Vec<usize> = (0..samples)
        .map(|i| ((i as f64) * (len - 1) as f64 / (samples - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

fn expansion_grid(
    a: &FlowTrajectory,
    b: &FlowTrajectory,
    samples: usize,
    margin: impl Fn(f64, f64, f64, f64) -> f64 + Sync,
) -> Result<ExpansionReport> {
    if (a.step - b.step).abs() > 1e-15 * a.step {
        return Err(Error::Invalid("trajectories must share a time step".into()));
    }
    let len = a.len().min(b.len());
    let idx = sample_indices(len, samples);
    let d0 = (a.states[0] - b.states[0]).abs();
    let margins: Vec<Vec<f64>> = idx
        .par_iter()
        .map(|&si| {
            idx.iter()
                .map(|&ti| {
                    let d = (a.states[ti] - b.states[si]).abs();
                    margin(b.times[si], a.times[ti], d, d0)
                })
                .collect()
        })
        .collect();
    let min_margin = margins
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let times: Vec<f64> = idx.iter().map(|&i| a.times[i]).collect();
    Ok(ExpansionReport {
        s_times: times.clone(),
        t_times: times,
        margins,
        min_margin,
    })
}

/// `(sqrt t - sqrt s)^2 / (2 (s + t))`, zero at `s = t = 0`.
fn root_gap(s: f64, t: f64) -> f64 {
    if s + t == 0.0 {
        return 0.0;
    }
    let g = t.sqrt() - s.sqrt();
    g * g / (2.0 * (s + t))
}

/// Expansion bound for `x_t` (trajectory `a`) against `y_s` (trajectory `b`):
/// `e^{-K(s+t)} s(d_0/2)^2 + N e_{-K}(s+t) (sqrt t - sqrt s)^2 / (2(s+t)) - s(d(x_t,y_s)/2)^2`.
pub fn check_contraction(
    a: &FlowTrajectory,
    b: &FlowTrajectory,
    k: f64,
    n_dim: f64,
    samples: usize,
) -> Result<ExpansionReport> {
    expansion_grid(a, b, samples, |s, t, d, d0| {
        let tau = s + t;
        let rhs =
            (-k * tau).exp() * s_half_sq(k, n_dim, d0) + n_dim * e_kappa(-k, tau) * root_gap(s, t);
        rhs - s_half_sq(k, n_dim, d)
    })
}

/// `e^{-K tau} d_0^2 + 2N ((1 - e^{-K tau})/(K tau)) (sqrt t - sqrt s)^2 - d(x_t,y_s)^2`
/// with `tau = 2(t + sqrt(ts) + s)/3`.
pub fn check_simplified_expansion(
    a: &FlowTrajectory,
    b: &FlowTrajectory,
    k: f64,
    n_dim: f64,
    samples: usize,
) -> Result<ExpansionReport> {
    expansion_grid(a, b, samples, |s, t, d, d0| {
        let tau = 2.0 * (t + (t * s).sqrt() + s) / 3.0;
        let g = t.sqrt() - s.sqrt();
        let rhs = (-k * tau).exp() * d0 * d0 + 2.0 * n_dim * expm1_ratio(-k * tau) * g * g;
        rhs - d * d
    })
}

/// Outcome of passing an `EVI_{K,N}` certificate down to weaker parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DowngradeReport {
    pub original: EviCertificate,
    pub downgraded: EviCertificate,
    /// The dimension-free `EVI_K` form.
    pub kflow: EviCertificate,
}

impl DowngradeReport {
    pub fn passed(&self) -> bool {
        self.downgraded.passed && self.kflow.passed
    }
}

/// Certifies `EVI_{K',N'}` and `EVI_K` for a flow already certified at
/// `(K, N)`. Refuses (with an error) when the `(K, N)` certificate fails,
/// since nothing follows from a failed certificate.
#[allow(clippy::too_many_arguments)]
pub fn evi_consistency_downgrade(
    traj: &FlowTrajectory,
    zs: &[f64],
    k: f64,
    n_dim: f64,
    k_prime: f64,
    n_prime: f64,
    s: &impl Potential,
    tol: f64,
) -> Result<DowngradeReport> {
    if !(k_prime <= k && n_prime >= n_dim) {
        return Err(Error::Domain(format!(
            "need K' <= K and N' >= N (got K' = {k_prime}, N' = {n_prime})"
        )));
    }
    let original = certify_evi(traj, zs, k, n_dim, s, tol)?;
    if !original.passed {
        return Err(Error::Invalid(format!(
            "flow is not certified EVI at (K, N) = ({k}, {n_dim}): min residual {}",
            original.min_residual
        )));
    }
    let downgraded = certify_evi(traj, zs, k_prime, n_prime, s, tol)?;
    let kflow = certify(traj, zs, tol, |z| kflow_residual(traj, z, k, s))?;
    Ok(DowngradeReport {
        original,
        downgraded,
        kflow,
    })
}
