//! Batch runner behind the `cdtk` binary: configuration, dispatch to every
//! check, reports and the bisection sweep.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::{
    check_k_convex, check_kn_green, check_kn_pointwise, check_kn_sigma, ConvexityReport,
    SegmentSampler, Tolerance, DEFAULT_SEED,
};
use crate::entropy_flow::{
    check_cde, check_green_cde, check_nhwi, check_nlsi, check_ntalagrand, check_talagrand_from_lsi,
    read_density_csv, smooth_density_family,
};
use crate::error::{Error, Result};
use crate::gradient_flow::{
    certify_evi, check_contraction, check_regularization, check_simplified_expansion,
    default_tolerance, evi_consistency_downgrade, evi_residual, integrate_flow, z_grid,
    DEFAULT_Z_POINTS,
};
use crate::grid::ScalarFunctionGrid;
use crate::markov_gamma::{
    be_certificate, bochner_margins, build_fd_generator, check_bl, gamma, gamma2, heat_semigroup,
    ric_nv_1d, spectral_gap, test_battery, two_point, GeneratorKind, MarkovGenerator,
};
use crate::metric_measure::{
    check_bishop_gromov, check_bonnet_myers, check_brunn_minkowski, DiameterSource, DiscreteMMS,
    Interval, MeasureSpace, WeightedInterval,
};
use crate::models::{cos_model, cosh_model, log_model, sinh_model, ModelFunction, Potential};
use crate::transport::DensityVector;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// FD Bochner margins are relative to the local Gamma_2 scale and compared
/// against `-FD_BOCHNER_C * step`.
pub const FD_BOCHNER_C: f64 = 20.0;

/// Bisection resolution of `sweep`.
pub const SWEEP_RESOLUTION: f64 = 1e-4;

/// Every check name with a one-line description.
pub const CHECKS: &[(&str, &str)] = &[
    (
        "kn-pointwise",
        "(K,N)-convexity of S, pointwise Hessian form",
    ),
    (
        "kn-sigma",
        "(K,N)-convexity of S, distortion-coefficient form on sampled segments",
    ),
    ("kn-green", "(K,N)-convexity of S, Green-function form"),
    ("k-convex", "K-convexity of S"),
    (
        "evi",
        "EVI_{K,N} residuals of the gradient flow of S, per reference point",
    ),
    (
        "regularization",
        "uniform regularization bound along the flow",
    ),
    ("contraction", "(s,t) expansion bound for two flows"),
    (
        "simplified-expansion",
        "simplified expansion bound for two flows",
    ),
    (
        "evi-downgrade",
        "EVI_{K',N'} and EVI_K for a flow certified at (K,N)",
    ),
    ("bishop-gromov", "volume growth bound on a 10x10 (r,R) grid"),
    (
        "brunn-minkowski",
        "Brunn-Minkowski inequality for seeded interval pairs",
    ),
    ("bonnet-myers", "diameter bound pi sqrt(N/K)"),
    ("cde", "entropic CD(K,N) along displacement interpolations"),
    ("green-cde", "Green-function form of entropic CD(K,N)"),
    ("nhwi", "dimensional HWI inequality"),
    ("nlsi", "dimensional and classical log-Sobolev inequalities"),
    (
        "ntalagrand",
        "dimensional Talagrand inequality and diameter bound",
    ),
    (
        "talagrand-lsi",
        "Talagrand bound derived from the log-Sobolev inequality",
    ),
    ("be", "Bochner inequality BE(K,N) on a test battery"),
    ("bl", "gradient estimate BL(K,N) on a test battery"),
    ("ric", "Ric_{N,V} >= K on a weighted interval"),
    ("lichnerowicz", "spectral gap lambda_1 >= KN/(N-1)"),
];

/// A space given inline (`model:K=2,N=3`, `lebesgue:lo=0,hi=1`,
/// `twopoint:q=1`, `file:PATH`) or as a structured description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Short(String),
    Full(SpaceDescription),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    CosModel,
    Explicit,
}

/// JSON space description. In `values`, `null` stands for `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpaceDescription {
    WeightedInterval {
        lo: f64,
        hi: f64,
        n: usize,
        #[serde(rename = "V")]
        v: PotentialKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<Option<f64>>>,
        #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
        k: Option<f64>,
        #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
        n_dim: Option<f64>,
    },
    Discrete {
        dist: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Generator {
        matrix: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

/// Run configuration; every field can come from the TOML file or a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub check: Option<String>,
    pub space: Option<SpaceSpec>,
    pub model: Option<String>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "N")]
    pub n_dim: Option<f64>,
    /// Grid intervals.
    pub n: Option<usize>,
    #[serde(rename = "K_range")]
    pub k_range: Option<[f64; 2]>,
    #[serde(rename = "N_range")]
    pub n_range: Option<[f64; 2]>,
    #[serde(rename = "K_prime")]
    pub k_prime: Option<f64>,
    #[serde(rename = "N_prime")]
    pub n_prime: Option<f64>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    /// Times for `bl`, interpolation times for `cde` and friends.
    pub t: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pairs: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// CSV file of densities (header = grid nodes).
    pub densities: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub label: String,
    pub margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Case {
    fn new(label: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        Case {
            label: label.into(),
            margin,
            tolerance,
            passed: margin >= -tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub version: String,
    /// The configuration with every default filled in.
    pub config: RunConfig,
    pub passed: bool,
    pub min_margin: f64,
    pub argmin: Option<String>,
    pub details: BTreeMap<String, f64>,
    pub cases: Vec<Case>,
}

impl Report {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "label,margin,tolerance,passed")?;
        for c in &self.cases {
            writeln!(
                out,
                "{},{:e},{:e},{}",
                c.label, c.margin, c.tolerance, c.passed
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub passed: bool,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub check: String,
    pub version: String,
    pub config: RunConfig,
    pub parameter: String,
    pub range: [f64; 2],
    pub resolution: f64,
    /// `crossing`, or a `no crossing` reason.
    pub status: String,
    pub crossing: Option<f64>,
    pub bracket: Option<[f64; 2]>,
    pub evaluations: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn found(&self) -> bool {
        self.crossing.is_some()
    }
}

/// A resolved space, with the `(K, N)` it was built for when known.
#[derive(Debug, Clone)]
pub enum Space {
    Interval {
        space: WeightedInterval,
        k: Option<f64>,
        n_dim: Option<f64>,
    },
    Discrete(DiscreteMMS),
    Generator(MarkovGenerator),
}

fn parse_kv(s: &str) -> Result<BTreeMap<String, f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("expected key=value, got {p:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("bad number in {p:?}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn get(kv: &BTreeMap<String, f64>, key: &str, what: &str) -> Result<f64> {
    kv.get(key)
        .copied()
        .ok_or_else(|| Error::Invalid(format!("{what} needs {key}=...")))
}

/// `a,b` as a closed range.
pub fn parse_range(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Error::Invalid(format!("expected a range lo,hi, got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok([lo, hi])
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("bad number {p:?} in list")))
        })
        .collect()
}

/// `cos:K=1,N=1`, `log:N=2`, `sinh:K=-1,N=1`, `cosh:K=-1,N=1`.
pub fn parse_model(s: &str) -> Result<ModelFunction> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let kv = parse_kv(rest)?;
    match name {
        "cos" => cos_model(get(&kv, "K", "cos")?, get(&kv, "N", "cos")?),
        "log" => log_model(get(&kv, "N", "log")?),
        "sinh" => sinh_model(get(&kv, "K", "sinh")?, get(&kv, "N", "sinh")?),
        "cosh" => cosh_model(get(&kv, "K", "cosh")?, get(&kv, "N", "cosh")?),
        other => Err(Error::Invalid(format!("unknown model {other:?}"))),
    }
}

pub fn parse_space(spec: &SpaceSpec, grid_n: usize) -> Result<Space> {
    match spec {
        SpaceSpec::Full(d) => describe_to_space(d),
        SpaceSpec::Short(s) => {
            let (name, rest) = s.split_once(':').unwrap_or((s.as_str(), ""));
            match name {
                "model" => {
                    let kv = parse_kv(rest)?;
                    let (k, n_dim) = (get(&kv, "K", "model")?, get(&kv, "N", "model")?);
                    Ok(Space::Interval {
                        space: WeightedInterval::model(k, n_dim, grid_n)?,
                        k: Some(k),
                        n_dim: Some(n_dim),
                    })
                }
                "lebesgue" => {
                    let kv = parse_kv(rest)?;
                    Ok(Space::Interval {
                        space: WeightedInterval::lebesgue(
                            get(&kv, "lo", "lebesgue")?,
                            get(&kv, "hi", "lebesgue")?,
                            grid_n,
                        )?,
                        k: Some(0.0),
                        n_dim: None,
                    })
                }
                "twopoint" => {
                    let kv = parse_kv(rest)?;
                    Ok(Space::Generator(two_point(get(&kv, "q", "twopoint")?)?))
                }
                "file" => read_space_file(rest),
                _ if s.ends_with(".json") => read_space_file(s),
                other => Err(Error::Invalid(format!("unknown space {other:?}"))),
            }
        }
    }
}

fn read_space_file(path: &str) -> Result<Space> {
    let file = fs::File::open(path)?;
    let d: SpaceDescription = serde_json::from_reader(BufReader::new(file))?;
    describe_to_space(&d)
}

fn describe_to_space(d: &SpaceDescription) -> Result<Space> {
    match d {
        SpaceDescription::WeightedInterval {
            lo,
            hi,
            n,
            v,
            values,
            k,
            n_dim,
        } => {
            let grid = match v {
                PotentialKind::CosModel => {
                    let (k, nd) = (
                        k.ok_or_else(|| Error::Invalid("cos_model needs K".into()))?,
                        n_dim.ok_or_else(|| Error::Invalid("cos_model needs N".into()))?,
                    );
                    if !(k > 0.0 && nd > 1.0) {
                        return Err(Error::Domain("cos_model needs K > 0, N > 1".into()));
                    }
                    let a = (k / (nd - 1.0)).sqrt();
                    let half = PI / (2.0 * a);
                    ScalarFunctionGrid::from_fn(*lo, *hi, *n, |x| {
                        if x.abs() >= half {
                            f64::INFINITY
                        } else {
                            -(nd - 1.0) * (a * x).cos().ln()
                        }
                    })?
                }
                PotentialKind::Explicit => {
                    let vals = values
                        .as_ref()
                        .ok_or_else(|| Error::Invalid("explicit V needs values".into()))?;
                    if vals.len() != n + 1 {
                        return Err(Error::Invalid(format!(
                            "expected {} values, got {}",
                            n + 1,
                            vals.len()
                        )));
                    }
                    ScalarFunctionGrid::new(
                        *lo,
                        *hi,
                        vals.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
                    )?
                }
            };
            Ok(Space::Interval {
                space: WeightedInterval::new(grid)?,
                k: *k,
                n_dim: *n_dim,
            })
        }
        SpaceDescription::Discrete { dist, weights } => Ok(Space::Discrete(DiscreteMMS::new(
            dist.clone(),
            weights.clone(),
        )?)),
        SpaceDescription::Generator { matrix, weights } => Ok(Space::Generator(
            MarkovGenerator::from_matrix(matrix, weights.clone())?,
        )),
    }
}

/// The explicit description of a resolved space.
pub fn describe_space(space: &Space) -> SpaceDescription {
    match space {
        Space::Interval { space, k, n_dim } => SpaceDescription::WeightedInterval {
            lo: space.lo(),
            hi: space.hi(),
            n: space.n(),
            v: PotentialKind::Explicit,
            values: Some(
                space
                    .potential()
                    .values()
                    .iter()
                    .map(|&v| v.is_finite().then_some(v))
                    .collect(),
            ),
            k: *k,
            n_dim: *n_dim,
        },
        Space::Discrete(d) => SpaceDescription::Discrete {
            dist: d.distances().to_vec(),
            weights: MeasureSpace::weights(d).to_vec(),
        },
        Space::Generator(g) => {
            let m = g.dense();
            SpaceDescription::Generator {
                matrix: (0..g.len())
                    .map(|i| m.row(i).iter().copied().collect())
                    .collect(),
                weights: MeasureSpace::weights(g).to_vec(),
            }
        }
    }
}

fn missing(name: &str) -> Error {
    Error::Invalid(format!("missing parameter {name}"))
}

fn default_grid_n(check: &str) -> usize {
    match check {
        "lichnerowicz" => 2000,
        "be" | "bl" => 200,
        _ => 400,
    }
}

fn resolve_space(r: &mut RunConfig, check: &str) -> Result<Space> {
    let n = *r.n.get_or_insert(default_grid_n(check));
    let spec = r.space.as_ref().ok_or_else(|| missing("space"))?;
    parse_space(spec, n)
}

fn resolve_kn(r: &mut RunConfig, k_hint: Option<f64>, n_hint: Option<f64>) -> Result<(f64, f64)> {
    r.k = r.k.or(k_hint);
    r.n_dim = r.n_dim.or(n_hint);
    Ok((
        r.k.ok_or_else(|| missing("K"))?,
        r.n_dim.ok_or_else(|| missing("N"))?,
    ))
}

fn interval(space: Space) -> Result<(WeightedInterval, Option<f64>, Option<f64>)> {
    match space {
        Space::Interval { space, k, n_dim } => Ok((space, k, n_dim)),
        _ => Err(Error::Invalid(
            "this check needs a weighted interval".into(),
        )),
    }
}

fn generator(space: Space) -> Result<(MarkovGenerator, Option<f64>, Option<f64>)> {
    match space {
        Space::Generator(g) => Ok((g, None, None)),
        Space::Interval { space, k, n_dim } => Ok((build_fd_generator(&space)?, k, n_dim)),
        Space::Discrete(_) => Err(Error::Invalid(
            "this check needs a generator or an interval".into(),
        )),
    }
}

struct Outcome {
    cases: Vec<Case>,
    details: BTreeMap<String, f64>,
}

impl From<Vec<Case>> for Outcome {
    fn from(cases: Vec<Case>) -> Self {
        Outcome {
            cases,
            details: BTreeMap::new(),
        }
    }
}

/// Runs one check.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    let mut r = cfg.clone();
    let check = r.check.clone().ok_or_else(|| missing("check"))?;
    let seed = *r.seed.get_or_insert(DEFAULT_SEED);
    let outcome = match check.as_str() {
        "kn-pointwise" | "kn-sigma" | "kn-green" | "k-convex" => {
            run_convexity(&mut r, &check, seed)?
        }
        "evi" | "regularization" | "evi-downgrade" => run_evi(&mut r, &check)?,
        "contraction" | "simplified-expansion" => run_expansion(&mut r, &check)?,
        "bishop-gromov" | "brunn-minkowski" | "bonnet-myers" => run_geometry(&mut r, &check, seed)?,
        "cde" | "green-cde" | "nhwi" | "nlsi" | "ntalagrand" | "talagrand-lsi" => {
            run_entropy(&mut r, &check, seed)?
        }
        "be" | "bl" => run_gamma(&mut r, &check, seed)?,
        "ric" => run_ric(&mut r)?,
        "lichnerowicz" => run_lichnerowicz(&mut r)?,
        other => {
            return Err(Error::Invalid(format!(
                "unknown check {other:?}; see list-checks"
            )))
        }
    };
    let Outcome { cases, details } = outcome;
    let (min_margin, argmin) = cases.iter().fold((f64::INFINITY, None), |(m, a), c| {
        if c.margin < m {
            (c.margin, Some(c.label.clone()))
        } else {
            (m, a)
        }
    });
    Ok(Report {
        check,
        version: VERSION.to_string(),
        config: r,
        passed: cases.iter().all(|c| c.passed),
        min_margin,
        argmin,
        details,
        cases,
    })
}

fn model_of(r: &RunConfig) -> Result<ModelFunction> {
    parse_model(r.model.as_deref().ok_or_else(|| missing("model"))?)
}

/// The model's domain, or `[lo, hi]` when given (required when unbounded).
fn window(r: &mut RunConfig, model: &ModelFunction) -> Result<(f64, f64)> {
    let (dlo, dhi) = model.domain();
    r.lo = r.lo.or(dlo.is_finite().then_some(dlo));
    r.hi = r.hi.or(dhi.is_finite().then_some(dhi));
    Ok((
        r.lo.ok_or_else(|| missing("lo"))?,
        r.hi.ok_or_else(|| missing("hi"))?,
    ))
}

fn run_convexity(r: &mut RunConfig, check: &str, seed: u64) -> Result<Outcome> {
    let model = model_of(r)?;
    let (k, n_dim) = resolve_kn(r, Some(model.curvature()), Some(model.dimension()))?;
    let n = *r.n.get_or_insert(400);
    let (lo, hi) = window(r, &model)?;
    let s = model.grid_on(lo, hi, n)?;
    let tol = r.tol.map(Tolerance::Absolute).unwrap_or_default();
    let sampler = SegmentSampler::new(*r.samples.get_or_insert(2000), seed);
    let rep: ConvexityReport = match check {
        "kn-pointwise" => check_kn_pointwise(&s, k, n_dim, tol)?,
        "kn-sigma" => check_kn_sigma(&s, k, n_dim, &sampler, tol)?,
        "kn-green" => check_kn_green(&s, k, n_dim, &sampler, tol)?,
        _ => check_k_convex(&s, k, &sampler, tol)?,
    };
    let mut details = BTreeMap::new();
    details.insert("segments".into(), rep.segments as f64);
    details.insert("singular_segments".into(), rep.singular_segments as f64);
    let mut case = Case::new("S", rep.min_margin, rep.tolerance);
    case.passed = rep.passed;
    Ok(Outcome {
        cases: vec![case],
        details,
    })
}

fn run_evi(r: &mut RunConfig, check: &str) -> Result<Outcome> {
    let model = model_of(r)?;
    let (k, n_dim) = resolve_kn(r, Some(model.curvature()), Some(model.dimension()))?;
    let x0 = r.x0.ok_or_else(|| missing("x0"))?;
    let dt = *r.dt.get_or_insert(1e-3);
    let t_end = *r.t_end.get_or_insert(3.0);
    let (lo, hi) = window(r, &model)?;
    let points = *r.samples.get_or_insert(DEFAULT_Z_POINTS);
    let tol = *r.tol.get_or_insert(default_tolerance(dt, 0.0));
    let traj = integrate_flow(&model, x0, dt, t_end)?;
    let zs = z_grid(lo, hi, points);
    let mut details = BTreeMap::new();
    details.insert("truncated".into(), if traj.truncated { 1.0 } else { 0.0 });
    details.insert("final_time".into(), *traj.times.last().expect("nonempty"));
    let cases = match check {
        "evi" => zs
            .par_iter()
            .map(|&z| {
                let m = evi_residual(&traj, z, k, n_dim, &model)?
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                Ok(Case::new(format!("z={z:.6}"), m, tol))
            })
            .collect::<Result<Vec<_>>>()?,
        "regularization" => zs
            .par_iter()
            .map(|&z| {
                let m = check_regularization(&traj, z, k, n_dim, &model)?[1..]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                Ok(Case::new(format!("z={z:.6}"), m, tol))
            })
            .collect::<Result<Vec<_>>>()?,
        _ => {
            let kp = r.k_prime.ok_or_else(|| missing("K_prime"))?;
            let np = r.n_prime.ok_or_else(|| missing("N_prime"))?;
            let original = certify_evi(&traj, &zs, k, n_dim, &model, tol)?;
            if !original.passed {
                details.insert("refused".into(), 1.0);
                vec![Case::new("original", original.min_residual, tol)]
            } else {
                let d = evi_consistency_downgrade(&traj, &zs, k, n_dim, kp, np, &model, tol)?;
                vec![
                    Case::new("original", d.original.min_residual, tol),
                    Case::new("downgraded", d.downgraded.min_residual, tol),
                    Case::new("kflow", d.kflow.min_residual, tol),
                ]
            }
        }
    };
    Ok(Outcome { cases, details })
}

fn run_expansion(r: &mut RunConfig, check: &str) -> Result<Outcome> {
    let model = model_of(r)?;
    let (k, n_dim) = resolve_kn(r, Some(model.curvature()), Some(model.dimension()))?;
    let x0 = r.x0.ok_or_else(|| missing("x0"))?;
    let y0 = r.y0.ok_or_else(|| missing("y0"))?;
    let dt = *r.dt.get_or_insert(1e-3);
    let t_end = *r.t_end.get_or_insert(3.0);
    let samples = *r.samples.get_or_insert(30);
    let tol = *r.tol.get_or_insert(default_tolerance(dt, 0.0));
    let a = integrate_flow(&model, x0, dt, t_end)?;
    let b = integrate_flow(&model, y0, dt, t_end)?;
    let rep = if check == "contraction" {
        check_contraction(&a, &b, k, n_dim, samples)?
    } else {
        check_simplified_expansion(&a, &b, k, n_dim, samples)?
    };
    let mut cases = Vec::new();
    for (i, s) in rep.s_times.iter().enumerate() {
        for (j, t) in rep.t_times.iter().enumerate() {
            cases.push(Case::new(
                format!("s={s:.6};t={t:.6}"),
                rep.margins[i][j],
                tol,
            ));
        }
    }
    Ok(cases.into())
}

fn run_geometry(r: &mut RunConfig, check: &str, seed: u64) -> Result<Outcome> {
    let space = resolve_space(r, check)?;
    if check == "bonnet-myers" {
        let tol = *r.tol.get_or_insert(0.0);
        let margin = match &space {
            Space::Interval { space, k, n_dim } => {
                let (k, nd) = resolve_kn(r, *k, *n_dim)?;
                check_bonnet_myers(DiameterSource::Interval(space), k, nd)?
            }
            Space::Discrete(d) => {
                let (k, nd) = resolve_kn(r, None, None)?;
                check_bonnet_myers(DiameterSource::Discrete(d), k, nd)?
            }
            Space::Generator(_) => {
                return Err(Error::Invalid("bonnet-myers needs a metric space".into()))
            }
        };
        return Ok(vec![Case::new("diameter", margin, tol)].into());
    }
    let (space, kh, nh) = interval(space)?;
    let (k, n_dim) = resolve_kn(r, kh, nh.or(Some(1.0)))?;
    let tol = *r.tol.get_or_insert(1e-6);
    let (slo, shi) = space.support();
    let cases = if check == "bishop-gromov" {
        let x0 = *r.x0.get_or_insert(0.5 * (slo + shi));
        let limit = if k > 0.0 {
            PI * (n_dim / k).sqrt()
        } else {
            f64::INFINITY
        };
        let rmax = (x0 - slo).max(shi - x0).min(limit);
        let mut cases = Vec::new();
        for j in 1..=10 {
            for i in 1..=10 {
                let big = rmax * j as f64 / 10.0;
                let rr = big * i as f64 / 10.0;
                let m = check_bishop_gromov(&space, x0, rr, big, k, n_dim)?;
                cases.push(Case::new(format!("r={rr:.6};R={big:.6}"), m, tol));
            }
        }
        cases
    } else {
        let pairs = *r.pairs.get_or_insert(20);
        let ts =
            r.t.get_or_insert_with(|| (0..=10).map(|i| i as f64 / 10.0).collect())
                .clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shi - slo;
        let draw = |rng: &mut ChaCha8Rng| -> Result<Interval> {
            let a = slo + len * rng.gen_range(0.0..0.8);
            let b = a + len * rng.gen_range(0.05..0.2);
            Interval::new(a, b.min(shi))
        };
        let mut cases = Vec::new();
        for p in 0..pairs {
            let (a0, a1) = (draw(&mut rng)?, draw(&mut rng)?);
            for &t in &ts {
                let m = check_brunn_minkowski(&space, a0, a1, t, k, n_dim)?;
                cases.push(Case::new(format!("pair={p};t={t:.4}"), m, tol));
            }
        }
        cases
    };
    Ok(cases.into())
}

fn run_entropy(r: &mut RunConfig, check: &str, seed: u64) -> Result<Outcome> {
    let (space, kh, nh) = interval(resolve_space(r, check)?)?;
    let (k, n_dim) = resolve_kn(r, kh, nh)?;
    let space = space.normalized()?;
    let tol = *r.tol.get_or_insert(5e-4);
    let family: Vec<DensityVector> = match &r.densities {
        Some(path) => read_density_csv(&space, BufReader::new(fs::File::open(path)?))?,
        None => {
            let pairs = *r.pairs.get_or_insert(20);
            smooth_density_family(&space, 2 * pairs, seed)?
        }
    };
    let ts =
        r.t.get_or_insert_with(|| (0..=20).map(|i| i as f64 / 20.0).collect())
            .clone();
    let cases: Vec<Vec<Case>> = match check {
        "cde" | "green-cde" | "nhwi" => family
            .par_chunks(2)
            .enumerate()
            .filter(|(_, p)| p.len() == 2)
            .map(|(i, p)| {
                let label = format!("pair={i}");
                Ok(vec![match check {
                    "cde" => {
                        let rep = check_cde(&space, &p[0], &p[1], k, n_dim, &ts)?;
                        let mut c = Case::new(label, rep.min_margin, tol);
                        c.passed = rep.passed(tol);
                        c
                    }
                    "green-cde" => Case::new(
                        label,
                        check_green_cde(&space, &p[0], &p[1], k, n_dim, &ts)?.min_margin,
                        tol,
                    ),
                    _ => Case::new(label, check_nhwi(&space, &p[0], &p[1], k, n_dim)?, tol),
                }])
            })
            .collect::<Result<_>>()?,
        _ => family
            .par_iter()
            .enumerate()
            .map(|(i, mu)| {
                Ok(match check {
                    "nlsi" => {
                        let m = check_nlsi(&space, mu, k, n_dim)?;
                        vec![
                            Case::new(format!("rho={i};dimensional"), m.dimensional, tol),
                            Case::new(format!("rho={i};classical"), m.classical, tol),
                        ]
                    }
                    "ntalagrand" => {
                        let m = check_ntalagrand(&space, mu, k, n_dim)?;
                        vec![
                            Case::new(format!("rho={i};diameter"), m.diam_margin, tol),
                            Case::new(format!("rho={i};entropy"), m.ent_margin, tol),
                        ]
                    }
                    _ => vec![Case::new(
                        format!("rho={i}"),
                        check_talagrand_from_lsi(&space, mu, k, n_dim)?,
                        tol,
                    )],
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(cases.into_iter().flatten().collect::<Vec<_>>().into())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn run_gamma(r: &mut RunConfig, check: &str, seed: u64) -> Result<Outcome> {
    let space = resolve_space(r, check)?;
    let step = match &space {
        Space::Interval { space, .. } => Some(space.step()),
        _ => None,
    };
    let (gen, kh, nh) = generator(space)?;
    let (k, n_dim) = resolve_kn(r, kh, nh)?;
    let battery = test_battery(&gen, seed)?;
    let fd = gen.kind() == GeneratorKind::FiniteDifference;
    let mut details = BTreeMap::new();
    let cases = if check == "be" {
        let mut cases: Vec<Case> = battery
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let margins = bochner_margins(&gen, f, k, n_dim);
                let (g2, ga, lf) = (gamma2(&gen, f), gamma(&gen, f), gen.apply(f));
                let scale_at = |i: usize| {
                    g2[i]
                        .abs()
                        .max(k.abs() * ga[i])
                        .max(lf[i] * lf[i] / n_dim)
                        .max(f64::MIN_POSITIVE)
                };
                match step.filter(|_| fd) {
                    // FD: relative margin on nodes whose two-step stencil stays on the grid
                    Some(h) => {
                        let m = (2..gen.len().saturating_sub(2))
                            .map(|i| margins[i] / scale_at(i))
                            .fold(f64::INFINITY, f64::min);
                        Case::new(format!("f={i}"), m, r.tol.unwrap_or(FD_BOCHNER_C * h))
                    }
                    None => {
                        let scale = (0..gen.len()).map(scale_at).fold(0.0, f64::max);
                        let m = margins.iter().copied().fold(f64::INFINITY, f64::min);
                        Case::new(format!("f={i}"), m, r.tol.unwrap_or(1e-9 * scale))
                    }
                }
            })
            .collect();
        if !fd && gen.len() <= 64 {
            let cert = be_certificate(&gen, k, n_dim)?;
            let tol = r.tol.unwrap_or(1e-9 * cert.scale);
            cases.push(Case::new("all-functions", cert.min_eigenvalue, tol));
        }
        cases
    } else {
        let ts =
            r.t.get_or_insert_with(|| (0..10).map(|i| 0.05 + 1.95 * i as f64 / 9.0).collect())
                .clone();
        let jobs: Vec<(usize, f64)> = (0..battery.len())
            .flat_map(|i| ts.iter().map(move |&t| (i, t)))
            .collect();
        jobs.par_iter()
            .map(|&(i, t)| {
                let f = &battery[i];
                let m = check_bl(&gen, f, t, k, n_dim)?;
                let scale =
                    max_abs(&heat_semigroup(&gen, t, &gamma(&gen, f))?.ptf).max(f64::MIN_POSITIVE);
                let tol = r.tol.unwrap_or(1e-9 * scale);
                Ok(Case::new(
                    format!("f={i};t={t:.4}"),
                    m.into_iter().fold(f64::INFINITY, f64::min),
                    tol,
                ))
            })
            .collect::<Result<_>>()?
    };
    details.insert("states".into(), gen.len() as f64);
    Ok(Outcome { cases, details })
}

fn run_ric(r: &mut RunConfig) -> Result<Outcome> {
    let (space, kh, nh) = interval(resolve_space(r, "ric")?)?;
    let (k, n_dim) = resolve_kn(r, kh, nh)?;
    let h = space.step();
    let tol = *r.tol.get_or_insert(20.0 * h * h * k.abs().max(1.0));
    let ric = ric_nv_1d(&space, n_dim)?;
    let n = space.n();
    let (i, m) = (1..n)
        .map(|i| (i, ric.value(i) - k))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(vec![Case::new(format!("x={:.6}", space.x(i)), m, tol)].into())
}

fn run_lichnerowicz(r: &mut RunConfig) -> Result<Outcome> {
    let space = resolve_space(r, "lichnerowicz")?;
    let step = match &space {
        Space::Interval { space, .. } => Some(space.step()),
        _ => None,
    };
    let (gen, kh, nh) = generator(space)?;
    let (k, n_dim) = resolve_kn(r, kh, nh)?;
    if !(n_dim > 1.0) {
        return Err(Error::Domain(format!("need N > 1 (got {n_dim})")));
    }
    let bound = k * n_dim / (n_dim - 1.0);
    let tol = *r.tol.get_or_insert(match step {
        Some(h) => bound.abs() * h * h,
        None => 1e-9 * bound.abs().max(1.0),
    });
    let gap = spectral_gap(&gen)?;
    let mut details = BTreeMap::new();
    details.insert("lambda1".into(), gap.lambda1);
    details.insert("bound".into(), bound);
    details.insert("connected".into(), if gap.connected { 1.0 } else { 0.0 });
    Ok(Outcome {
        cases: vec![Case::new("lambda1", gap.lambda1 - bound, tol)],
        details,
    })
}

/// Bisects the one ranged parameter: the largest passing `K`, or the
/// smallest passing `N`.
pub fn sweep(cfg: &RunConfig) -> Result<SweepReport> {
    let (param, range) = match (cfg.k_range, cfg.n_range) {
        (Some(r), None) => ("K", r),
        (None, Some(r)) => ("N", r),
        _ => {
            return Err(Error::Invalid(
                "sweep needs exactly one of K_range, N_range".into(),
            ))
        }
    };
    if !(range[0] < range[1]) {
        return Err(Error::Invalid(format!("empty range {range:?}")));
    }
    let mut base = cfg.clone();
    base.k_range = None;
    base.n_range = None;
    let mut evaluations = Vec::new();
    let mut eval = |v: f64| -> Result<bool> {
        let mut c = base.clone();
        if param == "K" {
            c.k = Some(v);
        } else {
            c.n_dim = Some(v);
        }
        let rep = run(&c)?;
        evaluations.push(SweepPoint {
            value: v,
            passed: rep.passed,
            min_margin: rep.min_margin,
        });
        Ok(rep.passed)
    };
    // `good` is the end where the check should pass
    let (good, bad) = if param == "K" {
        (range[0], range[1])
    } else {
        (range[1], range[0])
    };
    let (pg, pb) = (eval(good)?, eval(bad)?);
    let (status, crossing, bracket) = match (pg, pb) {
        (true, true) => (
            "no crossing: passes on the entire range".to_string(),
            None,
            None,
        ),
        (false, false) => (
            "no crossing: fails on the entire range".to_string(),
            None,
            None,
        ),
        (false, true) => (
            "no crossing: passes only at the wrong end".to_string(),
            None,
            None,
        ),
        (true, false) => {
            let (mut g, mut b) = (good, bad);
            while (b - g).abs() > SWEEP_RESOLUTION {
                let mid = 0.5 * (g + b);
                if eval(mid)? {
                    g = mid;
                } else {
                    b = mid;
                }
            }
            let lo = g.min(b);
            let hi = g.max(b);
            (
                "crossing".to_string(),
                Some(0.5 * (lo + hi)),
                Some([lo, hi]),
            )
        }
    };
    let mut echo = run_config_echo(&base)?;
    if param == "K" {
        echo.k_range = Some(range);
        echo.k = None;
    } else {
        echo.n_range = Some(range);
        echo.n_dim = None;
    }
    Ok(SweepReport {
        check: base.check.clone().unwrap_or_default(),
        version: VERSION.to_string(),
        config: echo,
        parameter: param.to_string(),
        range,
        resolution: SWEEP_RESOLUTION,
        status,
        crossing,
        bracket,
        evaluations,
    })
}

fn run_config_echo(base: &RunConfig) -> Result<RunConfig> {
    let mut r = base.clone();
    r.seed.get_or_insert(DEFAULT_SEED);
    if let Some(check) = r.check.clone() {
        r.n.get_or_insert(default_grid_n(&check));
    }
    Ok(r)
}

/// Resolves the configured space and returns its explicit description.
pub fn export_space(cfg: &RunConfig) -> Result<SpaceDescription> {
    let mut r = cfg.clone();
    let check = r.check.clone().unwrap_or_default();
    Ok(describe_space(&resolve_space(&mut r, &check)?))
}
