//! Config-driven experiment runner.
//!
//! A config is either one experiment object or
//! `{"seed": 1, "plots": true, "experiments": [...]}`. Each experiment names a
//! `suite` and writes its CSV, `summary.json` and optional SVG into its own
//! directory; `manifest.json` lists every experiment with its assertions.

use super::retrace::{retrace_check, HarmonicTriple};
use super::svg::{Plot, Series, Style};
use super::{
    deficit, exponent_fit, log_space, random_admissible, random_blob, random_interval_set, truncated_along_flow,
    variant_check, write_records_csv, write_variant_csv, Backend, Family1d, Triple,
};
use crate::error::{Error, Result, Violation};
use crate::grid_set::{iterated_steiner, Schedule};
use crate::spectral::{a2_reduced, an_max, RadiiTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const SUITES: [&str; 6] = ["spectral-sweep", "exponent", "retrace", "variant", "steiner", "deficit"];

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "RS_LAB_THREADS";

#[derive(Clone, Debug, PartialEq)]
enum Job {
    SpectralSweep { d: usize, rho: f64, n_max: usize, samples: usize },
    Exponent { family: Family1d, deltas: Vec<f64>, expect_slope: Option<f64>, slope_tol: f64, expect_c: Option<f64>, c_tol: f64 },
    Retrace { r: [f64; 3], n: Vec<usize>, s: Vec<f64>, h: Option<f64>, phases: Option<[f64; 3]>, min_slope: f64 },
    Variant { pairs: usize, tau: Vec<f64>, max_parts: usize, denom: u32, flow_cases: usize, flow_tol: f64 },
    Steiner { d: usize, h: f64, sweeps: usize, schedule: String, max_ratio: f64 },
    Deficit { backend: Backend, count: usize, h: f64, slack: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub index: usize,
    pub suite: String,
    pub name: String,
    pub seed: u64,
    pub plot: bool,
    job: Job,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Assertion { name: name.to_string(), passed, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub index: usize,
    pub suite: String,
    pub name: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub results: Vec<ExperimentResult>,
    pub passed: bool,
    pub manifest: Value,
}

struct Fields<'a, 'e> {
    map: &'a Map<String, Value>,
    ptr: String,
    errs: &'e mut Vec<Violation>,
    known: Vec<&'static str>,
}

impl<'a, 'e> Fields<'a, 'e> {
    fn new(map: &'a Map<String, Value>, ptr: String, errs: &'e mut Vec<Violation>) -> Self {
        Fields { map, ptr, errs, known: Vec::new() }
    }

    fn err(&mut self, key: &str, msg: String) {
        self.errs.push(Violation { pointer: format!("{}/{}", self.ptr, escape_pointer(key)), msg });
    }

    fn err_at(&mut self, key: &str, i: usize, msg: String) {
        self.errs.push(Violation { pointer: format!("{}/{}/{i}", self.ptr, escape_pointer(key)), msg });
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.map.get(key)
    }

    fn f64(&mut self, key: &'static str, default: Option<f64>, lo: f64, hi: f64) -> f64 {
        match self.get(key) {
            None => default.unwrap_or_else(|| {
                self.err(key, "required number is missing".into());
                f64::NAN
            }),
            Some(v) => match v.as_f64() {
                Some(x) if x >= lo && x <= hi => x,
                Some(x) => {
                    self.err(key, format!("{x} outside [{lo}, {hi}]"));
                    f64::NAN
                }
                None => {
                    self.err(key, format!("expected a number, got {v}"));
                    f64::NAN
                }
            },
        }
    }

    fn opt_f64(&mut self, key: &'static str, lo: f64, hi: f64) -> Option<f64> {
        self.map.contains_key(key).then(|| self.f64(key, None, lo, hi))
    }

    fn usize(&mut self, key: &'static str, default: Option<usize>, lo: usize, hi: usize) -> usize {
        match self.get(key) {
            None => default.unwrap_or_else(|| {
                self.err(key, "required integer is missing".into());
                lo
            }),
            Some(v) => match v.as_u64() {
                Some(x) if (lo as u64..=hi as u64).contains(&x) => x as usize,
                _ => {
                    self.err(key, format!("expected an integer in [{lo}, {hi}], got {v}"));
                    lo
                }
            },
        }
    }

    fn bool(&mut self, key: &'static str, default: bool) -> bool {
        match self.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(v) => {
                self.err(key, format!("expected a boolean, got {v}"));
                default
            }
        }
    }

    fn string(&mut self, key: &'static str, default: Option<&str>, allowed: &[&str]) -> String {
        match self.get(key) {
            None => match default {
                Some(d) => d.to_string(),
                None => {
                    self.err(key, "required string is missing".into());
                    String::new()
                }
            },
            Some(Value::String(s)) if allowed.is_empty() || allowed.contains(&s.as_str()) => s.clone(),
            Some(Value::String(s)) => {
                self.err(key, format!("unknown value {s:?}, expected one of {}", allowed.join(", ")));
                String::new()
            }
            Some(v) => {
                self.err(key, format!("expected a string, got {v}"));
                String::new()
            }
        }
    }

    fn f64_list(&mut self, key: &'static str, default: Vec<f64>, lo: f64, hi: f64, min_len: usize) -> Vec<f64> {
        let Some(v) = self.get(key) else { return default };
        let Some(arr) = v.as_array() else {
            self.err(key, format!("expected an array of numbers, got {v}"));
            return default;
        };
        if arr.len() < min_len {
            self.err(key, format!("needs at least {min_len} entries, got {}", arr.len()));
        }
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            match x.as_f64() {
                Some(x) if x >= lo && x <= hi => out.push(x),
                _ => self.err_at(key, i, format!("expected a number in [{lo}, {hi}], got {x}")),
            }
        }
        out
    }

    fn usize_list(&mut self, key: &'static str, default: Vec<usize>, lo: usize, hi: usize) -> Vec<usize> {
        let Some(v) = self.get(key) else { return default };
        let Some(arr) = v.as_array() else {
            self.err(key, format!("expected an array of integers, got {v}"));
            return default;
        };
        if arr.is_empty() {
            self.err(key, "must not be empty".into());
        }
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            match x.as_u64() {
                Some(x) if (lo as u64..=hi as u64).contains(&x) => out.push(x as usize),
                _ => self.err_at(key, i, format!("expected an integer in [{lo}, {hi}], got {x}")),
            }
        }
        out
    }

    fn triple(&mut self, key: &'static str, default: Option<[f64; 3]>) -> Option<[f64; 3]> {
        if !self.map.contains_key(key) {
            self.known.push(key);
            return default;
        }
        let v = self.f64_list(key, Vec::new(), 0.0, f64::MAX, 3);
        match v.len() {
            3 => Some([v[0], v[1], v[2]]),
            _ => {
                self.err(key, "expected exactly 3 numbers".into());
                None
            }
        }
    }

    fn finish(mut self) {
        let extra: Vec<String> = self.map.keys().filter(|k| !self.known.contains(&k.as_str())).cloned().collect();
        for k in extra {
            self.err(&k, "unknown field".into());
        }
    }
}

fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn parse_job(suite: &str, f: &mut Fields<'_, '_>) -> Option<Job> {
    Some(match suite {
        "spectral-sweep" => Job::SpectralSweep {
            d: f.usize("d", None, 2, 3),
            rho: f.f64("rho", Some(0.05), 1e-6, 0.3),
            n_max: f.usize("n_max", Some(20), 3, 200),
            samples: f.usize("samples", Some(10), 0, 100_000),
        },
        "exponent" => {
            let name = f.string("family", None, &["shifted", "gap", "central-gap", "orbit"]);
            let radii = f.triple("radii", None);
            let deltas = f.f64_list("deltas", log_space(1e-3, 1e-1, 9), 1e-12, 0.9, 5);
            let family = match Family1d::parse(&name, radii) {
                Ok(fam) => fam,
                Err(e) => {
                    if !name.is_empty() {
                        f.err("radii", e.to_string());
                    }
                    Family1d::Shifted
                }
            };
            Job::Exponent {
                family,
                deltas,
                expect_slope: f.opt_f64("expect_slope", 0.0, 10.0),
                slope_tol: f.f64("slope_tol", Some(0.1), 0.0, 10.0),
                expect_c: f.opt_f64("expect_c", 0.0, f64::MAX),
                c_tol: f.f64("c_tol", Some(0.01), 0.0, f64::MAX),
            }
        }
        "retrace" => {
            let r = f.triple("r", Some([1.0, 1.0, 1.0])).unwrap_or([1.0; 3]);
            if let Err(e) = RadiiTriple::new(r).and_then(|t| t.require_admissible()) {
                f.err("r", e.to_string());
            }
            Job::Retrace {
                r,
                n: f.usize_list("n", vec![3, 4, 5], 1, 40),
                s: f.f64_list("s", (1..=8).map(|k| 0.01 * k as f64).collect(), 1e-6, 0.2, 2),
                h: f.opt_f64("h", 1e-4, 0.1),
                phases: f.triple("phases", None),
                min_slope: f.f64("min_slope", Some(2.7), 0.0, 10.0),
            }
        }
        "variant" => Job::Variant {
            pairs: f.usize("pairs", Some(1000), 1, 10_000_000),
            tau: f.f64_list("tau", vec![0.1, 0.25, 0.5, 1.0, 2.0], 0.0, 1e6, 1),
            max_parts: f.usize("max_parts", Some(4), 1, 64),
            denom: f.usize("denom", Some(64), 0, 1 << 20) as u32,
            flow_cases: f.usize("flow_cases", Some(100), 0, 1_000_000),
            flow_tol: f.f64("flow_tol", Some(1e-9), 0.0, 1.0),
        },
        "steiner" => Job::Steiner {
            d: f.usize("d", Some(2), 2, 3),
            h: f.f64("h", Some(1.0 / 128.0), 1e-3, 0.5),
            sweeps: f.usize("sweeps", Some(40), 1, 10_000),
            schedule: f.string("schedule", Some("golden"), &["axes", "golden", "random"]),
            max_ratio: f.f64("max_ratio", Some(0.05), 0.0, 2.0),
        },
        "deficit" => {
            let b = f.string("backend", Some("interval"), &["interval", "grid"]);
            let backend = Backend::parse(&b).unwrap_or(Backend::Interval);
            Job::Deficit {
                backend,
                count: f.usize("count", Some(1000), 1, 10_000_000),
                h: f.f64("h", Some(1.0 / 16.0), 1e-3, 0.5),
                slack: f.f64("slack", Some(if backend == Backend::Grid { 0.05 } else { 1e-12 }), 0.0, 1.0),
            }
        }
        _ => return None,
    })
}

fn parse_experiment(
    v: &Value,
    ptr: String,
    index: usize,
    seed: u64,
    plots: bool,
    errs: &mut Vec<Violation>,
) -> Option<Experiment> {
    let Some(map) = v.as_object() else {
        errs.push(Violation { pointer: ptr, msg: format!("expected an experiment object, got {v}") });
        return None;
    };
    let mut f = Fields::new(map, ptr, errs);
    let suite = f.string("suite", None, &[]);
    let name = f.string("name", Some(""), &[]);
    let seed = f.usize("seed", Some(seed as usize), 0, usize::MAX) as u64;
    let plot = f.bool("plot", plots);
    if !suite.is_empty() && !SUITES.contains(&suite.as_str()) {
        f.err("suite", format!("unknown suite {suite:?}, expected one of {}", SUITES.join(", ")));
        return None;
    }
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        f.err("name", format!("{name:?} may only contain letters, digits, '-' and '_'"));
    }
    let job = parse_job(&suite, &mut f);
    f.finish();
    let name = if name.is_empty() { format!("{index:02}-{suite}") } else { name };
    job.map(|job| Experiment { index, suite, name, seed, plot, job })
}

/// Validates a config, listing every violation with its JSON pointer.
pub fn parse_config(config: &Value) -> Result<Vec<Experiment>> {
    let mut errs = Vec::new();
    let Some(top) = config.as_object() else {
        return Err(Error::Schema(vec![Violation { pointer: String::new(), msg: "config must be an object".into() }]));
    };
    let mut out = Vec::new();
    if top.contains_key("suite") {
        if let Some(e) = parse_experiment(config, String::new(), 0, 0, true, &mut errs) {
            out.push(e);
        }
    } else {
        let mut f = Fields::new(top, String::new(), &mut errs);
        let seed = f.usize("seed", Some(0), 0, usize::MAX) as u64;
        let plots = f.bool("plots", true);
        let list = f.get("experiments");
        f.finish();
        match list {
            None => errs.push(Violation { pointer: "/experiments".into(), msg: "required array is missing".into() }),
            Some(Value::Array(items)) => {
                for (i, v) in items.iter().enumerate() {
                    let s = seed.wrapping_add(i as u64);
                    if let Some(e) = parse_experiment(v, format!("/experiments/{i}"), i, s, plots, &mut errs) {
                        out.push(e);
                    }
                }
            }
            Some(v) => errs.push(Violation { pointer: "/experiments".into(), msg: format!("expected an array, got {v}") }),
        }
    }
    let mut names: Vec<&str> = out.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    for w in names.windows(2) {
        if w[0] == w[1] {
            errs.push(Violation { pointer: "/experiments".into(), msg: format!("duplicate experiment name {:?}", w[0]) });
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(Error::Schema(errs))
    }
}

/// Worker count from `RS_LAB_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Invalid(format!("{THREADS_VAR} must be a positive integer, got {s:?}"))),
        },
    }
}

pub fn run_suite_str(config: &str, out: &Path) -> Result<SuiteOutcome> {
    let v: Value = serde_json::from_str(config)?;
    run_suite(&v, out)
}

pub fn run_suite(config: &Value, out: &Path) -> Result<SuiteOutcome> {
    let experiments = parse_config(config)?;
    fs::create_dir_all(out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let mut results =
        pool.install(|| experiments.par_iter().map(|e| run_experiment(e, out)).collect::<Result<Vec<_>>>())?;
    results.sort_by_key(|r| r.index);
    let passed = results.iter().all(|r| r.passed);
    let manifest = json!({ "passed": passed, "experiments": results });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(SuiteOutcome { results, passed, manifest })
}

struct Output<'a> {
    dir: &'a Path,
    name: &'a str,
    files: Vec<String>,
}

impl Output<'_> {
    fn write(&mut self, file: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(file), body)?;
        self.files.push(format!("{}/{file}", self.name));
        Ok(())
    }

    fn plot(&mut self, file: &str, p: &Plot) -> Result<()> {
        self.write(file, &p.render())
    }
}

fn run_experiment(e: &Experiment, root: &Path) -> Result<ExperimentResult> {
    let dir = root.join(&e.name);
    fs::create_dir_all(&dir)?;
    let mut out = Output { dir: &dir, name: &e.name, files: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
    let (summary, assertions) = match &e.job {
        Job::SpectralSweep { d, rho, n_max, samples } => spectral_sweep(e, &mut out, &mut rng, *d, *rho, *n_max, *samples)?,
        Job::Exponent { family, deltas, expect_slope, slope_tol, expect_c, c_tol } => {
            exponent(e, &mut out, family, deltas, *expect_slope, *slope_tol, *expect_c, *c_tol)?
        }
        Job::Retrace { r, n, s, h, phases, min_slope } => retrace(e, &mut out, &mut rng, *r, n, s, *h, *phases, *min_slope)?,
        Job::Variant { pairs, tau, max_parts, denom, flow_cases, flow_tol } => {
            variant(&mut out, &mut rng, *pairs, tau, *max_parts, *denom, *flow_cases, *flow_tol)?
        }
        Job::Steiner { d, h, sweeps, schedule, max_ratio } => {
            steiner(e, &mut out, &mut rng, *d, *h, *sweeps, schedule, *max_ratio)?
        }
        Job::Deficit { backend, count, h, slack } => deficits(&mut out, &mut rng, *backend, *count, *h, *slack)?,
    };
    let passed = assertions.iter().all(|a| a.passed);
    let body = json!({ "suite": e.suite, "seed": e.seed, "passed": passed, "assertions": assertions, "summary": summary });
    out.write("summary.json", &(serde_json::to_string_pretty(&body)? + "\n"))?;
    Ok(ExperimentResult {
        index: e.index,
        suite: e.suite.clone(),
        name: e.name.clone(),
        seed: e.seed,
        files: out.files,
        passed,
        assertions,
    })
}

type Ran = (Value, Vec<Assertion>);

fn spectral_sweep(
    e: &Experiment,
    out: &mut Output,
    rng: &mut ChaCha8Rng,
    d: usize,
    rho: f64,
    n_max: usize,
    samples: usize,
) -> Result<Ran> {
    let mut triples = vec![RadiiTriple::new([1.0, 1.0, 1.0])?];
    for _ in 0..samples {
        triples.push(random_admissible(rng, rho)?);
    }
    let rows: Vec<(Vec<f64>, f64)> = triples
        .par_iter()
        .map(|r| ((1..=n_max).map(|n| an_max(r, n, d)).collect(), a2_reduced(r, d)))
        .collect();
    let mut csv = String::from("triple,r1,r2,r3");
    for n in 1..=n_max {
        let _ = write!(csv, ",A_{n}");
    }
    csv.push_str(",A2_reduced,margin\n");
    let (mut low_err, mut worst_a2r, mut margin) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for (k, (r, (a, a2r))) in triples.iter().zip(&rows).enumerate() {
        let m = 0.5 - a[2..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        low_err = low_err.max((a[0] - 0.5).abs()).max((a[1] - 0.5).abs());
        worst_a2r = worst_a2r.max(*a2r);
        margin = margin.min(m);
        let _ = write!(csv, "{k},{:?},{:?},{:?}", r.r[0], r.r[1], r.r[2]);
        for v in a {
            let _ = write!(csv, ",{v:?}");
        }
        let _ = writeln!(csv, ",{a2r:?},{m:?}");
    }
    out.write("eigen.csv", &csv)?;
    if e.plot {
        let mut p = Plot::new(&format!("A_n, d = {d}"), "n", "A_n");
        for (k, (a, _)) in rows.iter().enumerate().take(6) {
            let pts = a.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect();
            p = p.with(Series::new(&format!("triple {k}"), pts, Style::Line));
        }
        out.plot("eigen.svg", &p)?;
    }
    let assertions = vec![
        Assertion::new("A_1 = A_2 = 1/2", low_err <= 1e-6, format!("max deviation {low_err:.3e}")),
        Assertion::new("A2_reduced < 1/2", worst_a2r < 0.5, format!("max {worst_a2r:.6}")),
        Assertion::new("A_n < 1/2 for n >= 3", margin > 0.0, format!("margin {margin:.6}")),
    ];
    Ok((json!({ "triples": triples.len(), "margin": margin, "max_a2_reduced": worst_a2r }), assertions))
}

#[allow(clippy::too_many_arguments)]
fn exponent(
    e: &Experiment,
    out: &mut Output,
    family: &Family1d,
    deltas: &[f64],
    expect_slope: Option<f64>,
    slope_tol: f64,
    expect_c: Option<f64>,
    c_tol: f64,
) -> Result<Ran> {
    let fit = exponent_fit(family, deltas)?;
    let mut csv = Vec::new();
    write_records_csv(&fit.records, &mut csv)?;
    out.write("exponent.csv", &String::from_utf8_lossy(&csv))?;
    if e.plot {
        let pts = fit.records.iter().map(|r| (r.distance, r.deficit)).collect();
        let p = Plot::new(&format!("{} family", family.name()), "distance", "deficit")
            .log_log()
            .with(Series::new("records", pts, Style::Points));
        out.plot("exponent.svg", &p)?;
    }
    let mut assertions = Vec::new();
    if let Some(target) = expect_slope {
        let ok = fit.exponent.is_some_and(|m| (m - target).abs() <= slope_tol);
        assertions.push(Assertion::new(
            "slope",
            ok,
            format!("{:?} vs {target} +- {slope_tol}", fit.exponent),
        ));
    }
    if let Some(target) = expect_c {
        let ok = fit.c_hat.is_some_and(|c| (c - target).abs() <= c_tol);
        assertions.push(Assertion::new("c_hat", ok, format!("{:?} vs {target} +- {c_tol}", fit.c_hat)));
    }
    let summary = json!({
        "family": fit.family,
        "exponent": fit.exponent,
        "c_hat": fit.c_hat,
        "c_min": fit.c_min,
        "c_max": fit.c_max,
        "degenerate": fit.degenerate,
    });
    Ok((summary, assertions))
}

#[allow(clippy::too_many_arguments)]
fn retrace(
    e: &Experiment,
    out: &mut Output,
    rng: &mut ChaCha8Rng,
    r: [f64; 3],
    ns: &[usize],
    s: &[f64],
    h: Option<f64>,
    phases: Option<[f64; 3]>,
    min_slope: f64,
) -> Result<Ran> {
    let r = RadiiTriple::new(r)?;
    let mut reports = Vec::new();
    for &n in ns {
        let ph = phases.unwrap_or_else(|| [0.0, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)]);
        let g = HarmonicTriple::from_phases(n, ph)?;
        reports.push(retrace_check(&r, &g, s, h)?);
    }
    let mut csv = String::from("n,s,exact,predicted,residual,grid\n");
    for rep in &reports {
        for w in &rep.rows {
            let grid = w.grid.map_or(String::new(), |g| format!("{g:?}"));
            let _ = writeln!(csv, "{},{:?},{:?},{:?},{:?},{grid}", rep.n, w.s, w.exact, w.predicted, w.residual);
        }
    }
    out.write("retrace.csv", &csv)?;
    if e.plot {
        let mut p = Plot::new("residual of the second-order expansion", "s", "|residual|").log_log();
        for rep in &reports {
            let pts = rep.rows.iter().map(|w| (w.s, w.residual.abs())).collect();
            p = p.with(Series::new(&format!("n = {}", rep.n), pts, Style::Points));
        }
        out.plot("retrace.svg", &p)?;
    }
    let mut assertions = Vec::new();
    for rep in &reports {
        assertions.push(Assertion::new(
            &format!("n = {} residual slope", rep.n),
            rep.slope >= min_slope,
            format!("{:.3} vs >= {min_slope}", rep.slope),
        ));
        if rep.n >= 3 {
            assertions.push(Assertion::new(
                &format!("n = {} quadratic gain", rep.n),
                rep.bound_holds,
                format!("gain {:.4e} s^2, A_n = {:.6}", rep.gain, rep.a_n),
            ));
        }
    }
    let summary = json!({ "reports": reports });
    Ok((summary, assertions))
}

#[allow(clippy::too_many_arguments)]
fn variant(
    out: &mut Output,
    rng: &mut ChaCha8Rng,
    pairs: usize,
    tau: &[f64],
    max_parts: usize,
    denom: u32,
    flow_cases: usize,
    flow_tol: f64,
) -> Result<Ran> {
    let sets: Vec<_> = (0..pairs)
        .map(|_| (random_interval_set(rng, max_parts, 4.0, denom), random_interval_set(rng, max_parts, 4.0, denom)))
        .collect();
    let rows = sets
        .par_iter()
        .enumerate()
        .map(|(k, (a, b))| Ok(variant_check(a, b, tau)?.into_iter().map(|r| (k, r)).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let mut csv = Vec::new();
    write_variant_csv(&rows, &mut csv)?;
    out.write("variant.csv", &String::from_utf8_lossy(&csv))?;
    let failures = rows.iter().filter(|r| !r.1.holds).count();
    let min_surplus = rows.iter().map(|r| r.1.surplus).fold(f64::INFINITY, f64::min);

    let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.05).collect();
    let cases: Vec<_> = (0..flow_cases)
        .map(|_| {
            let a = random_interval_set(rng, max_parts, 4.0, denom);
            let b = random_interval_set(rng, max_parts, 4.0, denom);
            let t = tau[rng.gen_range(0..tau.len())];
            (a, b, t)
        })
        .collect();
    let traces =
        cases.par_iter().map(|(a, b, t)| truncated_along_flow(a, b, *t, &ts)).collect::<Result<Vec<_>>>()?;
    let mut flow_csv = String::from("case,t,value\n");
    let mut worst_rise = 0.0f64;
    for (k, tr) in traces.iter().enumerate() {
        for (t, v) in ts.iter().zip(tr) {
            let _ = writeln!(flow_csv, "{k},{t:?},{v:?}");
        }
        for w in tr.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    out.write("flow.csv", &flow_csv)?;
    let assertions = vec![
        Assertion::new("surplus >= 0", failures == 0, format!("{failures} failures, min surplus {min_surplus:.3e}")),
        Assertion::new(
            "truncated functional nonincreasing along the flow",
            worst_rise <= flow_tol,
            format!("largest increase {worst_rise:.3e}"),
        ),
    ];
    Ok((json!({ "rows": rows.len(), "min_surplus": min_surplus, "flow_cases": flow_cases, "worst_rise": worst_rise }), assertions))
}

#[allow(clippy::too_many_arguments)]
fn steiner(
    e: &Experiment,
    out: &mut Output,
    rng: &mut ChaCha8Rng,
    d: usize,
    h: f64,
    sweeps: usize,
    schedule: &str,
    max_ratio: f64,
) -> Result<Ran> {
    let blob = random_blob(rng, d, h)?;
    let run = iterated_steiner(&blob, sweeps, &Schedule::parse(schedule, e.seed)?)?;
    let mut csv = Vec::new();
    run.write_csv(&mut csv)?;
    out.write("steiner.csv", &String::from_utf8_lossy(&csv))?;
    if e.plot {
        let pts = run.steps.iter().map(|s| (s.sweep as f64, s.ratio)).collect();
        let p = Plot::new("iterated Steiner symmetrization", "sweep", "|E_n Δ ball| / |E|")
            .with(Series::new(schedule, pts, Style::Line));
        out.plot("steiner.svg", &p)?;
    }
    let final_ratio = run.steps.last().map_or(0.0, |s| s.ratio);
    let conserved = run.steps.iter().all(|s| s.count == blob.count());
    let assertions = vec![
        Assertion::new("final ratio", final_ratio < max_ratio, format!("{final_ratio:.4} vs < {max_ratio}")),
        Assertion::new("cell count conserved", conserved, format!("{} cells", blob.count())),
    ];
    Ok((json!({ "cells": blob.count(), "final_ratio": final_ratio }), assertions))
}

fn deficits(out: &mut Output, rng: &mut ChaCha8Rng, backend: Backend, count: usize, h: f64, slack: f64) -> Result<Ran> {
    let triples: Vec<Triple> = (0..count)
        .map(|_| -> Result<Triple> {
            Ok(match backend {
                Backend::Interval => Triple::Interval([
                    random_interval_set(rng, 4, 3.0, 0),
                    random_interval_set(rng, 4, 3.0, 0),
                    random_interval_set(rng, 4, 3.0, 0),
                ]),
                Backend::Grid => Triple::Grid([random_blob(rng, 2, h)?, random_blob(rng, 2, h)?, random_blob(rng, 2, h)?]),
            })
        })
        .collect::<Result<_>>()?;
    let vals = triples
        .par_iter()
        .map(|t| Ok((deficit(t, backend)?, t.max_measure())))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let mut csv = String::from("triple,deficit,max_measure\n");
    let mut worst = f64::INFINITY;
    for (k, (dv, m)) in vals.iter().enumerate() {
        let _ = writeln!(csv, "{k},{dv:?},{m:?}");
        worst = worst.min(dv / (m * m));
    }
    out.write("deficit.csv", &csv)?;
    let assertions = vec![Assertion::new(
        "deficit >= -slack",
        worst >= -slack,
        format!("min deficit / max|E|^2 = {worst:.3e}"),
    )];
    Ok((json!({ "backend": backend, "count": count, "min_normalized": worst }), assertions))
}
