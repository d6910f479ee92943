//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use common::{dyadic_set, min_functional_q, q, Q};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rslab::balancing::{balance_affine, generator_matrix, V2Basis, BALANCE_TOL};
use rslab::experiments::retrace::{retrace_check, HarmonicTriple};
use rslab::experiments::{
    exponent_fit, log_space, random_admissible, random_blob, random_interval_set, truncated_along_flow, variant_check,
    Family1d,
};
use rslab::flow1d::{compression_witness, flow, flow_state};
use rslab::grid_set::{ball_mask, iterated_steiner, t_grid, Schedule};
use rslab::interval_set::{min_functional, t1, Interval, IntervalSet};
use rslab::spectral::{a2_reduced, an_max, gamma, lambda_n, lens_volume, t_balls, RadiiTriple};
use rslab::sphere::SphereGrid;
use rslab::star_set::StarSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

type Outcome = (bool, String);

fn c1_golden() -> Outcome {
    let b = IntervalSet::interval(-1.0, 1.0).unwrap();
    let t = t1(&b, &b, &b);
    let mut ok = (t - 3.0).abs() <= 1e-10;
    let mut worst: f64 = 0.0;
    for delta in [0.05, 0.1, 0.2] {
        let rec = Family1d::Shifted.record(delta).unwrap();
        worst = worst.max((rec.deficit - delta * delta).abs());
    }
    ok &= worst <= 1e-10;
    let u = IntervalSet::interval(0.0, 1.0).unwrap();
    let m = min_functional(&u, &u, 0.5).unwrap();
    ok &= (m - 0.75).abs() <= 1e-10;
    (ok, format!("T1 = {t}, max |deficit - δ²| = {worst:.1e}, min_functional = {m}"))
}

fn c2_flow() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ts = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0];
    let (mut measure, mut contract, mut incl, mut semi, mut mono) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let a = random_interval_set(&mut rng, 5, 6.0, 0);
        let b = random_interval_set(&mut rng, 5, 6.0, 0);
        let c = random_interval_set(&mut rng, 5, 6.0, 0);
        let big = a.union(&b);
        let d0 = a.sym_diff(&b).measure();
        let mut prev_t = f64::NEG_INFINITY;
        for &t in &ts {
            let st = flow_state(&a, t).unwrap();
            measure = measure.max((st.lengths().iter().sum::<f64>() - a.measure()).abs());
            measure = measure.max((st.set().measure() - a.measure()).abs());
            let (fa, fb, fc) = (st.set().clone(), flow(&b, t).unwrap(), flow(&c, t).unwrap());
            contract = contract.max(fa.sym_diff(&fb).measure() - d0);
            incl = incl.max(fa.difference(&flow(&big, t).unwrap()).measure());
            let v = t1(&fa, &fb, &fc);
            mono = mono.max(prev_t - v);
            prev_t = v;
        }
        for (s, t) in [(0.2, 0.5), (0.5, 0.9), (0.1, 0.95), (0.3, 1.0)] {
            let tau = 1.0 - (1.0 - t) / (1.0 - s);
            let two = flow(&flow(&a, s).unwrap(), tau).unwrap();
            semi = semi.max(flow(&a, t).unwrap().sym_diff(&two).measure());
        }
    }
    let tol = 1e-9;
    let ok = measure <= tol && contract <= tol && incl <= tol && semi <= tol && mono <= tol;
    (
        ok,
        format!(
            "measure {measure:.1e}, contractivity {contract:.1e}, inclusion {incl:.1e}, semigroup {semi:.1e}, T1 drop {mono:.1e}"
        ),
    )
}

fn compressible<R: Rng>(rng: &mut R) -> (IntervalSet, Interval, f64) {
    let delta = rng.gen_range(0.01..0.3);
    let lo = rng.gen_range(-3.0..3.0);
    let len = rng.gen_range(0.5..2.0);
    let i = Interval::new(lo, lo + len).unwrap();
    let k = rng.gen_range(1..4);
    let gap_total = delta * len * rng.gen_range(0.5..1.0);
    let mut e = IntervalSet::interval(lo, lo + len).unwrap();
    for _ in 0..k {
        let g = gap_total / k as f64;
        let at = rng.gen_range(lo..lo + len - g);
        e = e.difference(&IntervalSet::interval(at, at + g).unwrap());
    }
    let far = rng.gen_range(4.0..8.0);
    e = e.union(&IntervalSet::interval(lo + len + far, lo + len + far + 0.3).unwrap());
    (e, i, delta)
}

fn c3_compression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut fails = 0;
    for _ in 0..100 {
        let (e, i, delta) = compressible(&mut rng);
        let w = compression_witness(&e, i, delta).unwrap();
        let want = 2.0 * delta / (1.0 - 2.0 * delta);
        if (w.threshold - want).abs() > 1e-12 || !w.is_interval_at(w.threshold * 1.01) {
            fails += 1;
        }
    }
    (fails == 0, format!("{fails}/100 cases not compressed at 1.01 x threshold"))
}

fn c4_spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut low, mut a2r, mut margin) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for d in [2, 3] {
        for _ in 0..100 {
            let r = random_admissible(&mut rng, 0.05).unwrap();
            low = low.max((an_max(&r, 1, d) - 0.5).abs()).max((an_max(&r, 2, d) - 0.5).abs());
            a2r = a2r.max(a2_reduced(&r, d));
            let top = (3..=20).map(|n| an_max(&r, n, d)).fold(f64::NEG_INFINITY, f64::max);
            margin = margin.min(0.5 - top);
        }
    }
    let unit = RadiiTriple::new([1.0, 1.0, 1.0]).unwrap();
    let s3 = 3f64.sqrt();
    let closed = [
        (lambda_n(-0.5, 1, 2) + s3).abs(),
        (lambda_n(-0.5, 2, 2) - s3 / 2.0).abs(),
        an_max(&unit, 3, 2).abs(),
        (an_max(&unit, 4, 2) - 0.125).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let ok = low <= 1e-6 && a2r < 0.5 && margin > 0.0 && closed <= 1e-9;
    (ok, format!("max |A_1,2 - 1/2| = {low:.1e}, max A2_reduced = {a2r:.4}, margin = {margin:.5}, closed forms {closed:.1e}"))
}

fn c5_kernels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r = random_admissible(&mut rng, 0.05).unwrap();
        for d in [2, 3] {
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let h = 1e-6 * r.r[k];
                let fd = -(lens_volume(r.r[i], r.r[j], r.r[k] + h, d) - lens_volume(r.r[i], r.r[j], r.r[k] - h, d))
                    / (2.0 * h);
                let g = gamma(&r, k, d);
                worst = worst.max((g - fd).abs() / g);
            }
        }
    }
    let unit = RadiiTriple::new([1.0, 1.0, 1.0]).unwrap();
    let t1d = t_balls(&unit, 1);
    let b = ball_mask(1.0, 1.0 / 128.0, 2).unwrap();
    let tg = t_grid(&b, &b, &b).unwrap();
    let tb = t_balls(&unit, 2);
    let rel = (tg - tb).abs() / tb;
    let ok = worst <= 1e-6 && (t1d - 3.0).abs() <= 1e-8 && rel < 0.02;
    (ok, format!("gamma FD rel {worst:.1e}, T_balls(d=1) = {t1d}, T_grid/T_balls - 1 = {rel:.2e}"))
}

fn c6_retrace() -> Outcome {
    let r = RadiiTriple::new([1.0, 1.0, 1.0]).unwrap();
    let s: Vec<f64> = (1..=8).map(|k| 0.01 * k as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [3, 4, 5] {
        let phases = [0.0, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)];
        let g = HarmonicTriple::from_phases(n, phases).unwrap();
        let rep = retrace_check(&r, &g, &s, Some(1.0 / 256.0)).unwrap();
        ok &= rep.slope >= 2.7 && rep.bound_holds;
        parts.push(format!("n={n}: slope {:.3}, bound {}", rep.slope, if rep.bound_holds { "holds" } else { "fails" }));
    }
    (ok, parts.join("; "))
}

fn c7_balancing() -> Outcome {
    let g2 = Arc::new(SphereGrid::circle(128).unwrap());
    let g3 = Arc::new(SphereGrid::sphere(14, 28).unwrap());
    let affine_ball = |grid: &Arc<SphereGrid>, a: Matrix3<f64>, w: Vector3<f64>| {
        let inv = a.try_inverse().unwrap();
        StarSet::from_radial(grid.clone(), 1.0, |x| {
            let p = inv * Vector3::new(x[0], x[1], x[2]);
            let q = inv * w;
            let (aa, bb, cc) = (p.dot(&p), -2.0 * p.dot(&q), q.dot(&q) - 1.0);
            (-bb + (bb * bb - 4.0 * aa * cc).sqrt()) / (2.0 * aa)
        })
        .unwrap()
    };
    let mut ok = true;
    let (mut res, mut trans, mut lin): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut ranks = Vec::new();
    for (grid, d) in [(&g2, 2), (&g3, 3)] {
        let w = if d == 2 { Vector3::new(0.012, -0.007, 0.0) } else { Vector3::new(0.01, -0.005, 0.008) };
        let rep = balance_affine(&affine_ball(grid, Matrix3::identity(), w)).unwrap();
        res = res.max(*rep.residuals.last().unwrap());
        trans = trans.max((rep.phi.translation + w).norm());
        let mut m = Matrix3::zeros();
        m[(0, 0)] = 0.02;
        m[(1, 1)] = -0.02;
        m[(0, 1)] = 0.01;
        m[(1, 0)] = 0.01;
        let mut ell = m.exp();
        if d == 2 {
            ell[(2, 2)] = 1.0;
        }
        let mut target = (-m).exp();
        if d == 2 {
            target[(2, 2)] = 1.0;
        }
        let rep = balance_affine(&affine_ball(grid, ell, Vector3::zeros())).unwrap();
        res = res.max(*rep.residuals.last().unwrap());
        lin = lin.max((rep.phi.linear - target).norm());
        let basis = V2Basis::new(grid.clone()).unwrap();
        let rank = generator_matrix(&basis, 1.0).rank(1e-9);
        ok &= rank == basis.dim();
        ranks.push(format!("{rank}/{}", basis.dim()));
    }
    ok &= res <= BALANCE_TOL && trans < 1e-7 && lin < 1e-6;
    (ok, format!("residual {res:.1e}, translation error {trans:.1e}, ellipsoid error {lin:.1e}, ranks {}", ranks.join(", ")))
}

fn c8_exponent() -> Outcome {
    let deltas = log_space(1e-3, 1e-1, 9);
    let shifted = exponent_fit(&Family1d::Shifted, &deltas).unwrap();
    let gap = exponent_fit(&Family1d::Gap([1.0, 1.0, 1.0]), &deltas).unwrap();
    let (se, sc) = (shifted.exponent.unwrap_or(f64::NAN), shifted.c_hat.unwrap_or(f64::NAN));
    let ge = gap.exponent.unwrap_or(f64::NAN);
    let ok = (se - 2.0).abs() <= 0.05 && (sc - 2.25).abs() <= 0.01 && (ge - 2.0).abs() <= 0.1;
    (ok, format!("shifted slope {se:.4}, c_hat {sc:.4}; gap slope {ge:.4}"))
}

fn c9_variant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let taus = [q(1, 10), q(1, 4), q(1, 2), q(1, 1), q(2, 1)];
    let tf: Vec<f64> = taus.iter().map(common::q_to_f64).collect();
    let mut neg = 0;
    let mut lib_fail = 0;
    let mut min_exact: Option<Q> = None;
    let mut pairs = Vec::new();
    for _ in 0..1000 {
        let (_, a) = dyadic_set(&mut rng, 4, 3, 64);
        let (_, b) = dyadic_set(&mut rng, 4, 3, 64);
        let (sa, sb) = (a.rearranged(), b.rearranged());
        for tau in &taus {
            let surplus = min_functional_q(&a, &b, tau) - min_functional_q(&sa, &sb, tau);
            if surplus < q(0, 1) {
                neg += 1;
            }
            if min_exact.as_ref().is_none_or(|m| &surplus < m) {
                min_exact = Some(surplus);
            }
        }
        lib_fail += variant_check(&a, &b, &tf).unwrap().iter().filter(|r| !r.holds).count();
        pairs.push((a, b));
    }
    let ts: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
    // The rearranged pair minimizes the truncated functional, so it decreases along the flow.
    let mut rise: f64 = 0.0;
    for (k, (a, b)) in pairs.iter().take(100).enumerate() {
        let vals = truncated_along_flow(a, b, tf[k % tf.len()], &ts).unwrap();
        for w in vals.windows(2) {
            rise = rise.max(w[1] - w[0]);
        }
    }
    let ok = neg == 0 && lib_fail == 0 && rise <= 1e-9;
    let m = min_exact.map_or(f64::NAN, |m| common::q_to_f64(&m));
    (ok, format!("exact negatives {neg}/5000 (min surplus {m:.3e}), float failures {lib_fail}, max rise along flow {rise:.1e}"))
}

fn c10_steiner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let blob = random_blob(&mut rng, 2, 1.0 / 128.0).unwrap();
    let run = iterated_steiner(&blob, 40, &Schedule::Golden).unwrap();
    let ratio = run.steps.last().map_or(f64::NAN, |s| s.ratio);
    let conserved = run.steps.iter().all(|s| s.count == blob.count());
    (ratio < 0.05 && conserved, format!("final ratio {ratio:.4}, {} cells conserved: {conserved}", blob.count()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("exact 1D golden values", Duration::from_secs(1), c1_golden),
        ("flow suite", Duration::from_secs(30), c2_flow),
        ("flow compression threshold", Duration::from_secs(30), c3_compression),
        ("spectral degeneracy", Duration::from_secs(60), c4_spectral),
        ("kernel consistency", Duration::from_secs(120), c5_kernels),
        ("second-order expansion", Duration::from_secs(600), c6_retrace),
        ("balancing", Duration::from_secs(30), c7_balancing),
        ("stability exponent", Duration::from_secs(60), c8_exponent),
        ("variant inequality", Duration::from_secs(60), c9_variant),
        ("iterated Steiner convergence", Duration::from_secs(120), c10_steiner),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        let took = start.elapsed();
        let in_time = took <= *budget;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name} ({:.2}s, budget {}s{}): {detail}",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
