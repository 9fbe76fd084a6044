//! Certification of (K,N)-convexity for grid functions on an interval.
//!
//! Three equivalent forms are checked on `U_N = exp(-S/N)`, `kappa = K/N`:
//!
//! * pointwise: `U_N'' <= -kappa U_N` (central differences),
//! * distortion interpolation along sub-segments:
//!   `U_N(g_t) >= sigma^(1-t)(d) U_N(g_0) + sigma^(t)(d) U_N(g_1)`,
//! * Green-function form:
//!   `u(g_t) >= (1-t)u(g_0) + t u(g_1) + kappa d^2 int_0^1 G(t,r) u(g_r) dr`
//!   with `G(t,r) = min{(1-t)r, (1-r)t}`.
//!
//! Sub-segments always start and end on grid nodes and the interpolation
//! parameter runs over the nodes in between, so the distortion form is exact
//! on the samples. The Green form carries a trapezoid error of order `step^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{sigma, ExtendedReal};
use crate::error::{Error, Result};
use crate::grid::ScalarFunctionGrid;

pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityForm {
    PointwiseHessian,
    SigmaInterpolation,
    GreenFunction,
    /// The `N = infinity` limit: plain K-convexity of `S`.
    KConvex,
}

/// Margin tolerance `c1 step^2 + c2 eps scale`, or a fixed absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    Scaled { c1: f64, c2: f64 },
    Absolute(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Scaled {
            c1: 10.0,
            c2: 100.0,
        }
    }
}

impl Tolerance {
    pub fn value(&self, step: f64, scale: f64) -> f64 {
        match *self {
            Tolerance::Scaled { c1, c2 } => c1 * step * step + c2 * f64::EPSILON * scale.max(1.0),
            Tolerance::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Node {
        x: f64,
    },
    Segment {
        a: f64,
        b: f64,
        t: f64,
        singular: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub form: ConvexityForm,
    pub min_margin: f64,
    pub argmin_location: Option<Location>,
    pub passed: bool,
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub segments: usize,
    pub singular_segments: usize,
}

/// How sub-segments are drawn: `samples` uniformly random node pairs from a
/// seeded stream, plus every short window of `window` intervals (so local
/// defects are never missed by the random draw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSampler {
    pub samples: usize,
    pub seed: u64,
    pub window: Option<usize>,
}

impl SegmentSampler {
    pub fn new(samples: usize, seed: u64) -> Self {
        SegmentSampler {
            samples,
            seed,
            window: None,
        }
    }

    /// Node index pairs `(i, j)` with `i + 2 <= j` over the admissible nodes.
    pub fn segments(&self, grid: &ScalarFunctionGrid) -> Vec<(usize, usize)> {
        let n = grid.n();
        let v = grid.values();
        let first = if v[0].is_finite() { 0 } else { 1 };
        let last = if v[n].is_finite() { n } else { n - 1 };
        let mut out = Vec::new();
        if last < first + 2 {
            return out;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        while out.len() < self.samples {
            let i = rng.gen_range(first..=last);
            let j = rng.gen_range(first..=last);
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            if j >= i + 2 {
                out.push((i, j));
            }
        }
        let span = last - first;
        let w = self.window.unwrap_or((n / 8).max(4)).clamp(2, span);
        let stride = (w / 4).max(1);
        let mut i = first;
        while i + w <= last {
            out.push((i, i + w));
            i += stride;
        }
        out.push((first, last));
        out
    }
}

/// Pointwise `exp(-S/N)`; `+inf` maps to `0`.
pub fn u_from_s(s: &ScalarFunctionGrid, n: f64) -> Result<ScalarFunctionGrid> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("N = {n} must be positive")));
    }
    s.map(|v| {
        if v == f64::INFINITY {
            0.0
        } else {
            (-v / n).exp()
        }
    })
}

fn u_values(s: &ScalarFunctionGrid, n: f64) -> Result<Vec<f64>> {
    Ok(u_from_s(s, n)?.values().to_vec())
}

/// `min_i [-(K/N) U_i - U''_i]` over interior nodes.
pub fn check_kn_pointwise(
    s: &ScalarFunctionGrid,
    k: f64,
    n: f64,
    tol: Tolerance,
) -> Result<ConvexityReport> {
    let u = u_from_s(s, n)?;
    let kappa = k / n;
    let (min_margin, at) = (1..s.n())
        .map(|i| (-kappa * u.value(i) - u.second_derivative(i), i))
        .fold(
            (f64::INFINITY, 0),
            |acc, m| if m.0 < acc.0 { m } else { acc },
        );
    let tolerance = tol.value(s.step(), u.scale());
    Ok(ConvexityReport {
        form: ConvexityForm::PointwiseHessian,
        min_margin,
        argmin_location: Some(Location::Node { x: s.x(at) }),
        passed: min_margin >= -tolerance,
        tolerance,
        seed: None,
        segments: 0,
        singular_segments: 0,
    })
}

#[derive(Clone, Copy)]
struct SegmentMin {
    margin: f64,
    index: usize,
    t: f64,
    singular: bool,
}

fn reduce_min(a: SegmentMin, b: SegmentMin) -> SegmentMin {
    if b.margin < a.margin || (b.margin == a.margin && b.index < a.index) {
        b
    } else {
        a
    }
}

fn segment_report(
    form: ConvexityForm,
    s: &ScalarFunctionGrid,
    segs: &[(usize, usize)],
    best: SegmentMin,
    singular_segments: usize,
    tolerance: f64,
    seed: u64,
) -> ConvexityReport {
    let location = segs.get(best.index).map(|&(i, j)| Location::Segment {
        a: s.x(i),
        b: s.x(j),
        t: best.t,
        singular: best.singular,
    });
    ConvexityReport {
        form,
        min_margin: best.margin,
        argmin_location: location,
        passed: best.margin >= -tolerance,
        tolerance,
        seed: Some(seed),
        segments: segs.len(),
        singular_segments,
    }
}

const NO_SEGMENT: SegmentMin = SegmentMin {
    margin: f64::INFINITY,
    index: usize::MAX,
    t: 0.0,
    singular: false,
};

/// Distortion-coefficient form along sampled sub-segments.
pub fn check_kn_sigma(
    s: &ScalarFunctionGrid,
    k: f64,
    n: f64,
    sampler: &SegmentSampler,
    tol: Tolerance,
) -> Result<ConvexityReport> {
    let u = u_values(s, n)?;
    let kappa = k / n;
    let h = s.step();
    let segs = sampler.segments(s);
    let per_segment: Vec<(SegmentMin, bool)> = segs
        .par_iter()
        .enumerate()
        .map(|(index, &(i, j))| {
            let m = (j - i) as f64;
            let d = (j - i) as f64 * h;
            let mut best = NO_SEGMENT;
            let mut singular = false;
            for kk in i..=j {
                let t = (kk - i) as f64 / m;
                let a = sigma(kappa, 1.0 - t, d);
                let b = sigma(kappa, t, d);
                singular |= !(a.is_finite() && b.is_finite());
                let rhs = a.scale(u[i]) + b.scale(u[j]);
                let margin = match rhs {
                    ExtendedReal::Finite(r) => u[kk] - r,
                    ExtendedReal::PosInf => f64::NEG_INFINITY,
                };
                best = reduce_min(
                    best,
                    SegmentMin {
                        margin,
                        index,
                        t,
                        singular,
                    },
                );
            }
            (best, singular)
        })
        .collect();
    let singular_segments = per_segment.iter().filter(|(_, s)| *s).count();
    let best = per_segment
        .into_iter()
        .map(|(b, _)| b)
        .fold(NO_SEGMENT, reduce_min);
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(segment_report(
        ConvexityForm::SigmaInterpolation,
        s,
        &segs,
        best,
        singular_segments,
        tol.value(h, scale),
        sampler.seed,
    ))
}

/// Green-function form along sampled sub-segments (trapezoid quadrature over
/// the nodes of each segment).
pub fn check_kn_green(
    s: &ScalarFunctionGrid,
    k: f64,
    n: f64,
    sampler: &SegmentSampler,
    tol: Tolerance,
) -> Result<ConvexityReport> {
    let u = u_values(s, n)?;
    let kappa = k / n;
    let h = s.step();
    let segs = sampler.segments(s);
    let best = segs
        .par_iter()
        .enumerate()
        .map(|(index, &(i, j))| {
            let m = j - i;
            let d = m as f64 * h;
            let uu = &u[i..=j];
            let r = |l: usize| l as f64 / m as f64;
            // left[k] = sum_{l <= k} r_l u_l, right[k] = sum_{l > k} (1 - r_l) u_l
            let mut left = vec![0.0; m + 1];
            let mut acc = 0.0;
            for l in 0..=m {
                acc += r(l) * uu[l];
                left[l] = acc;
            }
            let mut right = vec![0.0; m + 1];
            let mut acc = 0.0;
            for l in (0..=m).rev() {
                right[l] = acc;
                acc += (1.0 - r(l)) * uu[l];
            }
            let mut best = NO_SEGMENT;
            for kk in 0..=m {
                let t = r(kk);
                let integral = ((1.0 - t) * left[kk] + t * right[kk]) / m as f64;
                let margin = uu[kk] - (1.0 - t) * uu[0] - t * uu[m] - kappa * d * d * integral;
                best = reduce_min(
                    best,
                    SegmentMin {
                        margin,
                        index,
                        t,
                        singular: false,
                    },
                );
            }
            best
        })
        .reduce(|| NO_SEGMENT, reduce_min);
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(segment_report(
        ConvexityForm::GreenFunction,
        s,
        &segs,
        best,
        0,
        tol.value(h, scale),
        sampler.seed,
    ))
}

/// K-convexity of `S` itself, `S(g_t) <= (1-t)S(g_0) + tS(g_1) - (K/2)t(1-t)d^2`,
/// on the same segment sample as [`check_kn_sigma`].
pub fn check_k_convex(
    s: &ScalarFunctionGrid,
    k: f64,
    sampler: &SegmentSampler,
    tol: Tolerance,
) -> Result<ConvexityReport> {
    let v = s.values();
    let h = s.step();
    let segs = sampler.segments(s);
    let best = segs
        .par_iter()
        .enumerate()
        .map(|(index, &(i, j))| {
            let m = (j - i) as f64;
            let d = m * h;
            let mut best = NO_SEGMENT;
            for kk in i..=j {
                let t = (kk - i) as f64 / m;
                let rhs = (1.0 - t) * v[i] + t * v[j] - 0.5 * k * t * (1.0 - t) * d * d;
                best = reduce_min(
                    best,
                    SegmentMin {
                        margin: rhs - v[kk],
                        index,
                        t,
                        singular: false,
                    },
                );
            }
            best
        })
        .reduce(|| NO_SEGMENT, reduce_min);
    Ok(segment_report(
        ConvexityForm::KConvex,
        s,
        &segs,
        best,
        0,
        tol.value(h, s.scale()),
        sampler.seed,
    ))
}

/// Parameter map `(K, N) -> (lambda K, lambda N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamMap {
    pub lambda: f64,
}

impl ParamMap {
    pub fn apply(&self, k: f64, n: f64) -> (f64, f64) {
        (self.lambda * k, self.lambda * n)
    }
}

/// `lambda S` together with the induced parameter map.
pub fn scale_lemma_transform(
    s: &ScalarFunctionGrid,
    lambda: f64,
) -> Result<(ScalarFunctionGrid, ParamMap)> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be positive")));
    }
    Ok((s.scaled(lambda)?, ParamMap { lambda }))
}

/// Runs the distortion form on `S1 + S2` with `(K1 + K2, N1 + N2)`.
#[allow(clippy::too_many_arguments)]
pub fn sum_lemma_check(
    s1: &ScalarFunctionGrid,
    s2: &ScalarFunctionGrid,
    k1: f64,
    k2: f64,
    n1: f64,
    n2: f64,
    sampler: &SegmentSampler,
    tol: Tolerance,
) -> Result<ConvexityReport> {
    let sum = s1.try_add(s2)?;
    check_kn_sigma(&sum, k1 + k2, n1 + n2, sampler, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{cos_model, cosh_model, log_model};

    fn sampler() -> SegmentSampler {
        SegmentSampler::new(200, DEFAULT_SEED)
    }

    #[test]
    fn u_from_s_examples() {
        let zero = ScalarFunctionGrid::from_fn(0.0, 1.0, 8, |_| 0.0).unwrap();
        assert!(u_from_s(&zero, 5.0)
            .unwrap()
            .values()
            .iter()
            .all(|&u| u == 1.0));

        let cos = cos_model(1.0, 1.0).unwrap().grid(100).unwrap();
        let u = u_from_s(&cos, 1.0).unwrap();
        for (x, v) in cos.nodes().zip(u.values()) {
            assert!((v - x.cos()).abs() < 1e-14);
        }

        let log = log_model(2.0).unwrap().grid_on(0.0, 3.0, 30).unwrap();
        let u = u_from_s(&log, 2.0).unwrap();
        for (x, v) in log.nodes().zip(u.values()) {
            assert!((v - x).abs() < 1e-14);
        }
    }

    #[test]
    fn pointwise_cos_model_is_equality_case() {
        let g = cos_model(1.0, 1.0).unwrap().grid(200).unwrap();
        let r = check_kn_pointwise(&g, 1.0, 1.0, Tolerance::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.min_margin.abs() <= g.step().powi(2));
    }

    #[test]
    fn pointwise_quadratic_fails_k2_n1() {
        let g = ScalarFunctionGrid::from_fn(-1.0, 1.0, 200, |x| x * x).unwrap();
        let r = check_kn_pointwise(&g, 2.0, 1.0, Tolerance::default()).unwrap();
        assert!(!r.passed);
        // margin -(K/N)U - U'' = -4 x^2 exp(-x^2), most negative at x = 1
        match r.argmin_location {
            Some(Location::Node { x }) => assert!((x.abs() - 0.99).abs() < 1e-9, "{x}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pointwise_constant_passes_with_zero_margin() {
        let g = ScalarFunctionGrid::from_fn(0.0, 1.0, 50, |_| 3.0).unwrap();
        let r = check_kn_pointwise(&g, 0.0, 4.0, Tolerance::default()).unwrap();
        assert!(r.passed);
        assert!(r.min_margin.abs() < 1e-12);
    }

    #[test]
    fn sigma_form_cos_model_equality() {
        let g = cos_model(1.0, 1.0).unwrap().grid(400).unwrap();
        let r = check_kn_sigma(&g, 1.0, 1.0, &sampler(), Tolerance::default()).unwrap();
        assert!(r.min_margin >= -1e-9, "{r:?}");
        assert!(r.min_margin <= 1e-9);
    }

    #[test]
    fn sigma_form_cosh_model_passes() {
        let g = cosh_model(-1.0, 2.0)
            .unwrap()
            .grid_on(-3.0, 3.0, 300)
            .unwrap();
        let r = check_kn_sigma(&g, -1.0, 2.0, &sampler(), Tolerance::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sigma_form_detects_inflated_curvature() {
        let g = cos_model(1.0, 1.0).unwrap().grid(400).unwrap();
        let r = check_kn_sigma(&g, 1.5, 1.0, &sampler(), Tolerance::default()).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn green_form_log_model_k0() {
        let g = log_model(2.0).unwrap().grid_on(0.0, 2.0, 200).unwrap();
        let r = check_kn_green(&g, 0.0, 2.0, &sampler(), Tolerance::default()).unwrap();
        assert!(r.passed);
        assert!(r.min_margin.abs() < 1e-12);
    }

    #[test]
    fn green_form_cos_model_within_quadrature_error() {
        let g = cos_model(1.0, 1.0).unwrap().grid(400).unwrap();
        let r = check_kn_green(&g, 1.0, 1.0, &sampler(), Tolerance::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.min_margin.abs() <= 10.0 * g.step().powi(2));
    }

    #[test]
    fn scale_lemma() {
        let g = cos_model(1.0, 1.0).unwrap().grid(200).unwrap();
        let (same, map) = scale_lemma_transform(&g, 1.0).unwrap();
        assert_eq!(same, g);
        assert_eq!(map.apply(1.0, 1.0), (1.0, 1.0));

        let (g3, map) = scale_lemma_transform(&g, 3.0).unwrap();
        let (k, n) = map.apply(1.0, 1.0);
        assert!(
            check_kn_sigma(&g3, k, n, &sampler(), Tolerance::default())
                .unwrap()
                .passed
        );

        let log = log_model(1.0).unwrap().grid_on(0.0, 1.0, 200).unwrap();
        let (g2, map) = scale_lemma_transform(&log, 2.0).unwrap();
        let (k, n) = map.apply(0.0, 1.0);
        assert_eq!((k, n), (0.0, 2.0));
        assert!(
            check_kn_sigma(&g2, k, n, &sampler(), Tolerance::default())
                .unwrap()
                .passed
        );
    }

    #[test]
    fn sum_lemma() {
        let cos = cos_model(1.0, 1.0).unwrap().grid(300).unwrap();
        let zero = ScalarFunctionGrid::from_fn(cos.lo(), cos.hi(), 300, |_| 0.0).unwrap();
        let r = sum_lemma_check(
            &cos,
            &zero,
            1.0,
            0.0,
            1.0,
            1.0,
            &sampler(),
            Tolerance::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");

        let r = sum_lemma_check(
            &cos,
            &cos,
            1.0,
            1.0,
            1.0,
            1.0,
            &sampler(),
            Tolerance::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");

        let cos01 = cos_model(1.0, 1.0).unwrap().grid_on(0.0, 1.0, 300).unwrap();
        let log01 = log_model(1.0).unwrap().grid_on(0.0, 1.0, 300).unwrap();
        let r = sum_lemma_check(
            &cos01,
            &log01,
            1.0,
            0.0,
            1.0,
            1.0,
            &sampler(),
            Tolerance::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn long_flat_domain_is_singular_and_fails() {
        // S = 0 on an interval longer than pi sqrt(N/K)
        let g = ScalarFunctionGrid::from_fn(0.0, 7.0, 140, |_| 0.0).unwrap();
        let r = check_kn_sigma(&g, 1.0, 1.0, &sampler(), Tolerance::default()).unwrap();
        assert!(!r.passed);
        assert!(r.singular_segments > 0);
    }

    #[test]
    fn sampler_is_deterministic() {
        let g = ScalarFunctionGrid::from_fn(0.0, 1.0, 100, |x| x).unwrap();
        let s = SegmentSampler::new(50, 7);
        assert_eq!(s.segments(&g), s.segments(&g));
        assert_ne!(s.segments(&g), SegmentSampler::new(50, 8).segments(&g));
    }
}
