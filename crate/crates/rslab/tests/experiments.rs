use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rslab::error::Error;
use rslab::experiments::retrace::{polar_terms, polar_terms_radial, predicted, q_nodal, HarmonicTriple, RadialTriple};
use rslab::experiments::suite::{parse_config, run_suite, run_suite_str};
use rslab::experiments::{
    deficit, exponent_fit, log_space, random_blob, random_interval_set, Backend, Family1d, Triple,
};
use rslab::spectral::{lens_volume, t_balls, RadiiTriple};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

/// `∫_{B_3} lens(r_1, r_2, |x + u|) dx` by the midpoint rule in polar coordinates.
fn translated_oracle(r: [f64; 3], u: [f64; 2]) -> f64 {
    let (nt, na) = (1500, 1500);
    let (dt, da) = (r[2] / nt as f64, 2.0 * PI / na as f64);
    let mut s = 0.0;
    for i in 0..nt {
        let t = (i as f64 + 0.5) * dt;
        for j in 0..na {
            let a = (j as f64 + 0.5) * da;
            let (x, y) = (t * a.cos() + u[0], t * a.sin() + u[1]);
            s += lens_volume(r[0], r[1], (x * x + y * y).sqrt(), 2) * t;
        }
    }
    s * dt * da
}

#[test]
fn translated_discs_match_the_polar_oracle() {
    let r = RadiiTriple::new([1.0, 0.9, 1.1]).unwrap();
    let balanced = [[0.02, 0.01], [-0.03, 0.02], [0.01, -0.03]];
    let e = RadialTriple::translated(&r, balanced).unwrap();
    let t = polar_terms_radial(&r, &e, 128).unwrap().total();
    assert!((t - t_balls(&r, 2)).abs() < 1e-9, "{t} vs {}", t_balls(&r, 2));

    let w = [[0.02, 0.01], [-0.01, 0.03], [0.01, -0.02]];
    let u = [0.02, 0.02];
    let e = RadialTriple::translated(&r, w).unwrap();
    let t = polar_terms_radial(&r, &e, 128).unwrap().total();
    let want = translated_oracle(r.r, u);
    assert!((t - want).abs() < 1e-6, "{t} vs {want}");
    assert!(t < t_balls(&r, 2));
}

#[test]
fn expansion_is_scale_invariant() {
    let r = RadiiTriple::new([1.0, 0.9, 1.1]).unwrap();
    let g = HarmonicTriple::from_phases(3, [0.0, 0.9, 2.1]).unwrap();
    let s = 0.04;
    let base = polar_terms(&r, &g, s, 128).unwrap().total();
    for lam in [0.5, 2.0, 3.0] {
        let rl = RadiiTriple::new(r.r.map(|x| lam * x)).unwrap();
        let scaled = polar_terms(&rl, &g, lam * lam * s, 128).unwrap().total();
        let want = lam.powi(4) * base;
        assert!((scaled - want).abs() < 1e-10 * want, "λ = {lam}: {scaled} vs {want}");
        let p = predicted(&rl, &g, lam * lam * s);
        assert!((p - lam.powi(4) * predicted(&r, &g, s)).abs() < 1e-10 * want);
    }
}

#[test]
fn residual_is_higher_order_and_q_matches_projection() {
    let r = RadiiTriple::new([1.0, 1.0, 1.0]).unwrap();
    let g = HarmonicTriple::from_phases(4, [0.0, 1.3, 2.5]).unwrap();
    let res = |s: f64| polar_terms(&r, &g, s, 128).unwrap().total() - predicted(&r, &g, s);
    let (a, b) = (res(0.02).abs(), res(0.04).abs());
    // Doubling s multiplies an O(s^3) residual by about 8.
    assert!(b / a > 5.0, "{a} {b}");
    let q: f64 = (0..3)
        .map(|k| {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            rslab::spectral::lambda_n(r.rho(k), 4, 2) * g.inner(i, j)
        })
        .sum();
    assert!((q_nodal(&r, &g, 512).unwrap() - q).abs() < 1e-12);
    assert!(HarmonicTriple::new(0, [[1.0, 0.0]; 3]).is_err());
    assert!(matches!(polar_terms(&r, &g, 5.0, 16), Err(Error::Positivity { .. })));
}

#[test]
fn deficits_are_nonnegative_per_backend() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let t = Triple::Interval(std::array::from_fn(|_| random_interval_set(&mut rng, 4, 3.0, 0)));
        let d = deficit(&t, Backend::Interval).unwrap();
        assert!(d >= -1e-12 * t.max_measure().powi(2), "{d}");
    }
    let h = 1.0 / 16.0;
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let t = Triple::Grid(std::array::from_fn(|_| random_blob(&mut rng, 2, h).unwrap()));
        worst = worst.min(deficit(&t, Backend::Grid).unwrap() / t.max_measure().powi(2));
    }
    assert!(worst >= -0.05, "{worst}");
    let t = Triple::Interval(std::array::from_fn(|_| random_interval_set(&mut rng, 2, 1.0, 0)));
    assert!(deficit(&t, Backend::Grid).is_err());
}

#[test]
fn shifted_constant_is_stable_over_delta() {
    for delta in log_space(1e-3, 1e-1, 13) {
        let rec = Family1d::Shifted.record(delta).unwrap();
        assert!((rec.deficit - delta * delta).abs() < 1e-12);
        assert!((rec.ratio.unwrap() - 2.25).abs() < 1e-6, "δ = {delta}: {:?}", rec.ratio);
    }
    let fit = exponent_fit(&Family1d::Shifted, &log_space(1e-3, 1e-1, 9)).unwrap();
    assert!((fit.exponent.unwrap() - 2.0).abs() < 1e-6 && (fit.c_hat.unwrap() - 2.25).abs() < 1e-6);
    let gap = exponent_fit(&Family1d::Gap([1.0, 1.0, 1.0]), &log_space(1e-3, 1e-1, 9)).unwrap();
    assert!((gap.exponent.unwrap() - 2.0).abs() < 0.1, "{:?}", gap.exponent);
    let orbit = exponent_fit(&Family1d::Orbit, &log_space(1e-3, 1e-1, 9)).unwrap();
    assert!(orbit.degenerate.is_some());
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small_config() -> Value {
    json!({
        "seed": 11,
        "experiments": [
            {"suite": "spectral-sweep", "d": 2, "n_max": 5, "samples": 3},
            {"suite": "exponent", "family": "shifted", "expect_slope": 2.0, "expect_c": 2.25, "slope_tol": 0.05},
            {"suite": "retrace", "n": [3], "s": [0.02, 0.04, 0.06], "min_slope": 2.5},
            {"suite": "variant", "pairs": 30, "flow_cases": 5},
            {"suite": "steiner", "h": 0.0625, "sweeps": 6, "max_ratio": 2.0, "plot": false},
            {"suite": "deficit", "backend": "grid", "count": 5, "name": "grid-deficit"}
        ]
    })
}

#[test]
fn suite_runs_are_deterministic_and_complete() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = run_suite(&small_config(), a.path()).unwrap();
    let ob = run_suite(&small_config(), b.path()).unwrap();
    assert!(oa.passed, "{:#}", oa.manifest);
    assert_eq!(oa.manifest, ob.manifest);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{k} differs between runs");
    }
    let names: Vec<&str> = oa.results.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(
        names,
        ["00-spectral-sweep", "01-exponent", "02-retrace", "03-variant", "04-steiner", "grid-deficit"]
    );
    assert!(ta.contains_key("manifest.json"));
    assert!(ta.contains_key("00-spectral-sweep/eigen.svg"));
    assert!(!ta.contains_key("04-steiner/steiner.svg"));
    for r in &oa.results {
        assert!(ta.contains_key(&format!("{}/summary.json", r.name)));
        assert!(r.files.iter().all(|f| ta.contains_key(f)), "{:?}", r.files);
    }
    let eigen = String::from_utf8(ta["00-spectral-sweep/eigen.csv"].clone()).unwrap();
    assert!(eigen.starts_with("triple,r1,r2,r3,A_1,A_2,A_3,A_4,A_5,A2_reduced,margin\n"));
    assert_eq!(eigen.lines().count(), 5);
    assert_eq!(oa.results[0].seed, 11);
    assert_eq!(oa.results[3].seed, 14);
}

#[test]
fn failing_assertions_are_reported_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"suite": "exponent", "family": "shifted", "expect_c": 3.0}"#;
    let o = run_suite_str(cfg, dir.path()).unwrap();
    assert!(!o.passed);
    assert_eq!(o.manifest["passed"], json!(false));
    let summary: Value =
        serde_json::from_slice(&fs::read(dir.path().join("00-exponent/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], json!(false));
}

#[test]
fn empty_experiment_list_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_suite(&json!({"experiments": []}), dir.path()).unwrap();
    assert!(o.passed && o.results.is_empty());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m, json!({"passed": true, "experiments": []}));
}

#[test]
fn schema_violations_carry_pointers() {
    let bad = json!({
        "seed": -1,
        "experiments": [
            {"suite": "nope"},
            {"suite": "retrace", "r": [1.0, 1.0, 5.0], "s": [0.01, "x"], "colour": 1},
            {"suite": "spectral-sweep"}
        ]
    });
    let Err(Error::Schema(v)) = parse_config(&bad) else { panic!("expected a schema error") };
    let ptrs: Vec<&str> = v.iter().map(|x| x.pointer.as_str()).collect();
    for want in ["/seed", "/experiments/0/suite", "/experiments/1/r", "/experiments/1/s/1", "/experiments/1/colour", "/experiments/2/d"] {
        assert!(ptrs.contains(&want), "missing {want} in {ptrs:?}");
    }
    let dup = json!({"experiments": [{"suite": "steiner", "name": "a"}, {"suite": "variant", "name": "a"}]});
    assert!(parse_config(&dup).is_err());
    assert!(parse_config(&json!([1, 2])).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run_suite_str("{not json", dir.path()), Err(Error::Json(_))));
}
