//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdtk::cli::{self, RunConfig, SpaceSpec};
use cdtk::coeffs::{c_kappa, g_interp, s_kappa, sigma};
use cdtk::convexity::DEFAULT_SEED;
use cdtk::entropy_flow::{
    check_cde, check_green_cde, check_nhwi, check_nlsi, check_ntalagrand, check_talagrand_from_lsi,
    smooth_density_family,
};
use cdtk::gradient_flow::{certify_evi, check_contraction, integrate_flow, z_grid};
use cdtk::markov_gamma::{
    be_certificate, bl_coefficient_bochner, bochner_margins, build_fd_generator,
    build_graph_generator, check_bl, check_bl_with, gamma, gamma2, heat_semigroup, ric_nv_1d,
    spectral_gap, test_battery, two_point, MarkovGenerator,
};
use cdtk::metric_measure::{
    check_bishop_gromov, check_bonnet_myers, check_brunn_minkowski, DiameterSource, DiscreteMMS,
    Interval, MeasureSpace, WeightedInterval,
};
use cdtk::models::cos_model;
use cdtk::transport::{interval_atoms, w2_discrete, w2_quantile_atoms, DensityVector};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn lichnerowicz_model() -> Outcome {
    let start = Instant::now();
    let errors: Vec<f64> = [250, 500, 1000, 2000]
        .iter()
        .map(|&n| {
            let g = build_fd_generator(&WeightedInterval::model(2.0, 3.0, n).unwrap()).unwrap();
            spectral_gap(&g).unwrap().lambda1 - 3.0
        })
        .collect();
    let elapsed = start.elapsed();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let second_order = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    outcome(
        errors[3].abs() <= 1e-3 && second_order && within(elapsed, 10.0),
        format!(
            "err(n=2000) = {:.3e}, doubling ratios {ratios:.3?}, {elapsed:.2?}",
            errors[3]
        ),
    )
}

fn ric_exactness() -> Outcome {
    let space = WeightedInterval::model(2.0, 3.0, 2000).unwrap();
    let ric = ric_nv_1d(&space, 3.0).unwrap();
    let worst = (1..space.n())
        .map(|i| (ric.value(i) - 2.0).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 1e-6, format!("max |Ric - 2| = {worst:.3e}"))
}

fn evi_cos_model() -> Outcome {
    let start = Instant::now();
    let s = cos_model(1.0, 1.0).unwrap();
    let traj = integrate_flow(&s, 1.2, 1e-3, 3.0).unwrap();
    let zs = z_grid(-PI / 2.0, PI / 2.0, 41);
    let sharp = certify_evi(&traj, &zs, 1.0, 1.0, &s, 1e-5).unwrap();
    let over = certify_evi(&traj, &zs, 1.5, 1.0, &s, 1e-3).unwrap();
    let elapsed = start.elapsed();
    outcome(
        sharp.passed && over.min_residual < -1e-3 && within(elapsed, 5.0),
        format!(
            "min residual (1,1) = {:.3e}, (1.5,1) = {:.3e}, {elapsed:.2?}",
            sharp.min_residual, over.min_residual
        ),
    )
}

fn contraction() -> Outcome {
    let s = cos_model(1.0, 1.0).unwrap();
    let (x0, y0) = (0.3f64, -0.5f64);
    let a = integrate_flow(&s, x0, 1e-3, 3.0).unwrap();
    let b = integrate_flow(&s, y0, 1e-3, 3.0).unwrap();
    let rep = check_contraction(&a, &b, 1.0, 1.0, 30).unwrap();
    let cases = rep.margins.iter().map(Vec::len).sum::<usize>();
    let d0 = (x0 - y0).abs();
    let mut diag = 0.0f64;
    let mut bound_ok = true;
    for i in (0..a.len()).step_by(a.len() / 30) {
        let t = a.times[i];
        let exact = ((x0.sin() * (-t).exp()).asin() - (y0.sin() * (-t).exp()).asin()).abs();
        let numeric = (a.states[i] - b.states[i]).abs();
        diag = diag.max((numeric - exact).abs());
        bound_ok &= numeric <= (-t).exp() * d0 + 1e-6 && exact <= (-t).exp() * d0 + 1e-6;
    }
    outcome(
        cases == 900 && rep.min_margin >= -1e-5 && diag <= 1e-6 && bound_ok,
        format!(
            "min margin = {:.3e} over {cases} cases, diagonal error = {diag:.3e}",
            rep.min_margin
        ),
    )
}

fn two_point_threshold() -> Outcome {
    let mut worst = 0.0f64;
    let mut found = true;
    for (q, n) in [(1.0, 2.0), (2.0, 3.0), (0.5, 10.0)] {
        let cfg = RunConfig {
            check: Some("be".into()),
            space: Some(SpaceSpec::Short(format!("twopoint:q={q}"))),
            n_dim: Some(n),
            k_range: Some([0.0, 4.0 * q]),
            ..Default::default()
        };
        let rep = cli::sweep(&cfg).unwrap();
        match rep.crossing {
            Some(k) => worst = worst.max((k - 2.0 * q * (1.0 - 1.0 / n)).abs()),
            None => found = false,
        }
    }
    outcome(
        found && worst <= 1e-4,
        format!("max |K_sweep - K*| = {worst:.3e}"),
    )
}

fn sample_generators() -> Vec<(&'static str, MarkovGenerator)> {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let random_edges: Vec<(usize, usize, f64)> = (0..6)
        .flat_map(|i| ((i + 1)..6).map(move |j| (i, j)))
        .filter(|&(i, j)| j == i + 1 || (i + j) % 3 == 0)
        .map(|(i, j)| (i, j, rng.gen_range(0.5..2.0)))
        .collect();
    let random_m: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..1.5)).collect();
    vec![
        ("two-point q=1", two_point(1.0).unwrap()),
        ("two-point q=2", two_point(2.0).unwrap()),
        (
            "triangle",
            build_graph_generator(&[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], vec![1.0; 3]).unwrap(),
        ),
        (
            "path-4",
            build_graph_generator(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], vec![1.0; 4]).unwrap(),
        ),
        (
            "cycle-5",
            build_graph_generator(
                &(0..5).map(|i| (i, (i + 1) % 5, 1.0)).collect::<Vec<_>>(),
                vec![1.0; 5],
            )
            .unwrap(),
        ),
        (
            "random-6",
            build_graph_generator(&random_edges, random_m).unwrap(),
        ),
    ]
}

/// Largest `K` in `[-10, 10]` with an all-functions BE(K,N) certificate.
fn be_threshold(gen: &MarkovGenerator, n_dim: f64) -> Option<f64> {
    let ok = |k: f64| be_certificate(gen, k, n_dim).unwrap().passed(1e-9);
    let (mut lo, mut hi) = (-10.0, 10.0);
    if !ok(lo) {
        return None;
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

fn be_implies_bl() -> Outcome {
    let n_dim = 4.0;
    let ts: Vec<f64> = (0..10).map(|i| 0.05 + 1.95 * i as f64 / 9.0).collect();
    let mut worst_bl = f64::INFINITY;
    let mut worst_rel = 0.0f64;
    let mut tested = 0;
    let mut failing = Vec::new();
    for (name, gen) in sample_generators() {
        let Some(k_be) = be_threshold(&gen, n_dim) else {
            continue;
        };
        // strictly inside the BE range so the Bochner margins are bounded away from 0
        let k = k_be - 0.25;
        let battery = test_battery(&gen, DEFAULT_SEED).unwrap();
        let m = gen.weights().to_vec();
        let battery_be = battery.iter().all(|f| {
            bochner_margins(&gen, f, k, n_dim)
                .iter()
                .all(|&v| v >= -1e-9)
        });
        if !battery_be {
            continue;
        }
        tested += 1;
        for f in &battery {
            for &t in &ts {
                let scale = heat_semigroup(&gen, t, &gamma(&gen, f))
                    .unwrap()
                    .ptf
                    .iter()
                    .fold(f64::MIN_POSITIVE, |a, v| a.max(v.abs()));
                let c = bl_coefficient_bochner(k, n_dim, t);
                for bl in [
                    check_bl(&gen, f, t, k, n_dim).unwrap(),
                    check_bl_with(&gen, f, t, k, c).unwrap(),
                ] {
                    let rel = bl.iter().copied().fold(f64::INFINITY, f64::min) / scale;
                    worst_bl = worst_bl.min(rel);
                    if rel < -1e-9 {
                        failing.push(name);
                    }
                }
            }
            let t = 1e-3;
            let slope: f64 = check_bl(&gen, f, t, k, n_dim)
                .unwrap()
                .iter()
                .zip(&m)
                .map(|(v, w)| w * v / (2.0 * t))
                .sum();
            let be: f64 = bochner_margins(&gen, f, k, n_dim)
                .iter()
                .zip(&m)
                .map(|(v, w)| w * v)
                .sum();
            let gam2: f64 = gamma2(&gen, f).iter().zip(&m).map(|(v, w)| w * v).sum();
            if be.abs() <= 1e-12 * gam2.abs().max(1.0) {
                // f is constant
                continue;
            }
            let rel = ((slope - be) / be).abs();
            if rel > worst_rel {
                worst_rel = rel;
            }
            if rel > 0.05 {
                failing.push(name);
            }
        }
    }
    failing.dedup();
    outcome(
        failing.is_empty() && tested >= 4,
        format!(
            "{tested} generators, min relative BL margin = {worst_bl:.3e}, max slope error = {worst_rel:.3e}, failing {failing:?}"
        ),
    )
}

fn model_space_400() -> WeightedInterval {
    WeightedInterval::model(2.0, 3.0, 400)
        .unwrap()
        .normalized()
        .unwrap()
}

fn t_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn cde_model() -> Outcome {
    let start = Instant::now();
    let space = model_space_400();
    let family = smooth_density_family(&space, 40, DEFAULT_SEED).unwrap();
    let ts = t_grid();
    let mut sharp = f64::INFINITY;
    let mut green = f64::INFINITY;
    let mut failures_k3 = 0;
    for p in family.chunks(2) {
        sharp = sharp.min(
            check_cde(&space, &p[0], &p[1], 2.0, 3.0, &ts)
                .unwrap()
                .min_margin,
        );
        green = green.min(
            check_green_cde(&space, &p[0], &p[1], 2.0, 3.0, &ts)
                .unwrap()
                .min_margin,
        );
        if !check_cde(&space, &p[0], &p[1], 3.0, 3.0, &ts)
            .unwrap()
            .passed(5e-4)
        {
            failures_k3 += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        sharp >= -5e-4 && green >= -5e-4 && failures_k3 >= 1 && within(elapsed, 60.0),
        format!("min margin (2,3) = {sharp:.3e}, green = {green:.3e}, failing pairs at (3,3) = {failures_k3}/20, {elapsed:.2?}"),
    )
}

fn functional_inequalities() -> Outcome {
    let space = model_space_400();
    let family = smooth_density_family(&space, 40, DEFAULT_SEED).unwrap();
    let (k, n) = (2.0, 3.0);
    let tol = 5e-4;
    let mut hwi = f64::INFINITY;
    for p in family.chunks(2) {
        hwi = hwi.min(check_nhwi(&space, &p[0], &p[1], k, n).unwrap());
    }
    let mut lsi = f64::INFINITY;
    let mut tal = f64::INFINITY;
    let mut order_ok = true;
    for mu in &family {
        let l = check_nlsi(&space, mu, k, n).unwrap();
        lsi = lsi.min(l.dimensional).min(l.classical);
        let t = check_ntalagrand(&space, mu, k, n).unwrap();
        tal = tal.min(t.ent_margin).min(t.diam_margin);
        order_ok &= check_talagrand_from_lsi(&space, mu, k, n).unwrap() >= t.distance_margin - tol;
    }
    outcome(
        hwi >= -tol && lsi >= -tol && tal >= -tol && order_ok,
        format!("min N-HWI = {hwi:.3e}, N-LSI = {lsi:.3e}, N-Talagrand = {tal:.3e}, T-alt weaker: {order_ok}"),
    )
}

fn transport_cross_oracle() -> Outcome {
    let space = WeightedInterval::lebesgue(0.0, 1.0, 199).unwrap();
    let (atoms, keep) = interval_atoms(&space).unwrap();
    assert_eq!(keep.len(), 200);
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let c = rng.gen_range(0.2..0.8);
            let w = rng.gen_range(0.05..0.3);
            (0..=space.n())
                .map(|i| (-((space.x(i) - c) / w).powi(2)).exp() + 0.05 * rng.gen::<f64>())
                .collect()
        };
        let mu = DensityVector::normalized(&space, draw(&mut rng)).unwrap();
        let nu = DensityVector::normalized(&space, draw(&mut rng)).unwrap();
        let exact = w2_quantile_atoms(&space, &mu, &nu).unwrap();
        // shuffled atom order, so the LP gets no help from the line structure
        let mut order: Vec<usize> = (0..keep.len()).collect();
        order.shuffle(&mut rng);
        let x: Vec<f64> = order.iter().map(|&i| space.x(keep[i])).collect();
        let w: Vec<f64> = order.iter().map(|&i| atoms.weights()[i]).collect();
        let shuffled = DiscreteMMS::from_line(&x, w).unwrap();
        let pick = |d: &DensityVector| order.iter().map(|&i| d.rho[keep[i]]).collect::<Vec<_>>();
        let mu_s = DensityVector::new(&shuffled, pick(&mu)).unwrap();
        let nu_s = DensityVector::new(&shuffled, pick(&nu)).unwrap();
        let (lp, _) = w2_discrete(&shuffled, &mu_s, &nu_s).unwrap();
        worst = worst.max((lp - exact).abs());
    }

    // triangle inequality on a random planar point cloud
    let pts: Vec<(f64, f64)> = (0..30).map(|_| (rng.gen(), rng.gen())).collect();
    let dist: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                .collect()
        })
        .collect();
    let cloud = DiscreteMMS::new(dist, vec![1.0 / 30.0; 30]).unwrap();
    let mut triangle = f64::INFINITY;
    for _ in 0..50 {
        let mut draw = || {
            DensityVector::normalized(&cloud, (0..30).map(|_| rng.gen::<f64>().powi(3)).collect())
                .unwrap()
        };
        let (a, b, c) = (draw(), draw(), draw());
        let w = |p: &DensityVector, q: &DensityVector| {
            w2_discrete(&cloud, p, q).unwrap().0.max(0.0).sqrt()
        };
        triangle = triangle.min(w(&a, &b) + w(&b, &c) - w(&a, &c));
    }
    outcome(
        worst <= 1e-6 && triangle >= -1e-8,
        format!("max |LP - quantile| = {worst:.3e}, min triangle slack = {triangle:.3e}"),
    )
}

fn coefficient_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let cases = 10_000;
    let mut failures = [0usize; 5];
    for _ in 0..cases {
        // sc-trick, relative to the size of the operands
        let k = loop {
            let k: f64 = rng.gen_range(-5.0..5.0);
            if k.abs() > 1e-3 {
                break k;
            }
        };
        let n = rng.gen_range(0.5..10.0);
        let kappa = k / n;
        let theta_max = if k > 0.0 { PI * (n / k).sqrt() } else { 6.0 };
        let theta = rng.gen_range(0.0..theta_max);
        let lhs = 2.0 / n * s_kappa(kappa, theta / 2.0).powi(2);
        let rhs = (1.0 - c_kappa(kappa, theta)) / k;
        if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(1.0 / k.abs()) {
            failures[0] += 1;
        }

        // Pythagorean identity
        let c = c_kappa(kappa, theta);
        let s = s_kappa(kappa, theta);
        if (c * c + kappa * s * s - 1.0).abs() > 1e-12 * (c * c).max(1.0) {
            failures[1] += 1;
        }

        // monotone in kappa
        let theta: f64 = rng.gen_range(0.0..3.0);
        let t = rng.gen_range(0.0..1.0);
        let cap: f64 = PI * PI / (theta * theta).max(1e-12);
        let k1 = rng.gen_range(-10.0..cap.min(10.0));
        let k2 = rng.gen_range(k1..cap.min(10.0));
        let (s1, s2) = (sigma(k1, t, theta).to_f64(), sigma(k2, t, theta).to_f64());
        if s1 > s2 * (1.0 + 1e-12) + 1e-15 {
            failures[2] += 1;
        }

        // boundary values
        let k3 = rng.gen_range(-10.0..cap.min(10.0));
        if sigma(k3, 0.0, theta).to_f64().abs() > 1e-15
            || (sigma(k3, 1.0, theta).to_f64() - 1.0).abs() > 1e-15
        {
            failures[3] += 1;
        }

        // joint midpoint convexity of G_t in (x, y, kappa)
        let t = rng.gen_range(0.0..=1.0);
        let mut point = || {
            (
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-20.0..PI * PI - 1e-3),
            )
        };
        let (p, q) = (point(), point());
        let g = |a: (f64, f64, f64)| g_interp(t, a.0, a.1, a.2).unwrap();
        let mid = ((p.0 + q.0) / 2.0, (p.1 + q.1) / 2.0, (p.2 + q.2) / 2.0);
        if g(mid) > 0.5 * (g(p) + g(q)) + 1e-10 {
            failures[4] += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.iter().all(|&f| f == 0) && within(elapsed, 5.0),
        format!("failures [sc, pyth, mono, boundary, convex] = {failures:?} of {cases} each, {elapsed:.2?}"),
    )
}

fn geometry() -> Outcome {
    let flat = WeightedInterval::lebesgue(0.0, 1.0, 400).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut bm = 0.0f64;
    for _ in 0..50 {
        let mut draw = || {
            let a = rng.gen_range(0.0..0.7);
            Interval::new(a, a + rng.gen_range(0.01..0.3)).unwrap()
        };
        let (a0, a1) = (draw(), draw());
        let t = rng.gen_range(0.0..=1.0);
        bm = bm.max(
            check_brunn_minkowski(&flat, a0, a1, t, 0.0, 1.0)
                .unwrap()
                .abs(),
        );
    }
    let model = WeightedInterval::model(2.0, 3.0, 400).unwrap();
    let myers = check_bonnet_myers(DiameterSource::Interval(&model), 2.0, 3.0).unwrap();
    let rmax = PI / 2.0;
    let mut bg = f64::INFINITY;
    for j in 1..=10 {
        let big = rmax * j as f64 / 10.0;
        for i in 1..=10 {
            let r = big * i as f64 / 10.0;
            bg = bg.min(check_bishop_gromov(&model, 0.0, r, big, 2.0, 3.0).unwrap());
        }
    }
    outcome(
        bm <= 1e-10 && myers > 0.0 && bg >= -1e-6,
        format!("max |BM margin| = {bm:.3e}, Bonnet-Myers margin = {myers:.4}, min Bishop-Gromov = {bg:.3e}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("sharp lichnerowicz model", lichnerowicz_model),
        ("ric_nv exactness", ric_exactness),
        ("evi on the cos model", evi_cos_model),
        ("contraction of two flows", contraction),
        ("two-point BE threshold", two_point_threshold),
        ("BE implies BL", be_implies_bl),
        ("entropic CD on the model space", cde_model),
        ("functional inequalities", functional_inequalities),
        ("transport cross-oracle", transport_cross_oracle),
        ("coefficient identities", coefficient_identities),
        ("geometry suite", geometry),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!(
            "[{}] {:>2} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        if !o.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
