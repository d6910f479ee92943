//! Deficit laboratory: deficits and orbit distances of families, exponent
//! fits, the second-order expansion check, the truncated-functional variant
//! and the suite runner.

pub mod retrace;
pub mod suite;
pub mod svg;

use crate::error::{Error, Result};
use crate::flow1d::flow;
use crate::grid_set::{rearrange_ball, t_grid, GridMask};
use crate::interval_set::{min_functional, superlevel, t1, IntervalSet};
use crate::orbit_distance::{distance_orbit, distance_orbit_1d, translation_distance};
use crate::spectral::RadiiTriple;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;

#[derive(Clone, Debug)]
pub enum Triple {
    Interval([IntervalSet; 3]),
    Grid([GridMask; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Interval,
    Grid,
}

impl Backend {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(Backend::Interval),
            "grid" => Ok(Backend::Grid),
            _ => Err(Error::Invalid(format!("unknown backend {s:?} (interval, grid)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Interval => "interval",
            Backend::Grid => "grid",
        }
    }
}

impl Triple {
    pub fn backend(&self) -> Backend {
        match self {
            Triple::Interval(_) => Backend::Interval,
            Triple::Grid(_) => Backend::Grid,
        }
    }

    pub fn max_measure(&self) -> f64 {
        match self {
            Triple::Interval(e) => e.iter().map(IntervalSet::measure).fold(0.0, f64::max),
            Triple::Grid(e) => e.iter().map(GridMask::measure).fold(0.0, f64::max),
        }
    }
}

/// `T(E*) - T(E)` with the backend's own functional on both sides.
pub fn deficit(t: &Triple, backend: Backend) -> Result<f64> {
    match (t, backend) {
        (Triple::Interval(e), Backend::Interval) => {
            let s = [e[0].rearranged(), e[1].rearranged(), e[2].rearranged()];
            Ok(t1(&s[0], &s[1], &s[2]) - t1(&e[0], &e[1], &e[2]))
        }
        (Triple::Grid(e), Backend::Grid) => {
            let s = [rearrange_ball(&e[0])?, rearrange_ball(&e[1])?, rearrange_ball(&e[2])?];
            Ok(t_grid(&s[0], &s[1], &s[2])? - t_grid(&e[0], &e[1], &e[2])?)
        }
        _ => Err(Error::Invalid(format!(
            "{} triple given to the {} backend",
            t.backend().as_str(),
            backend.as_str()
        ))),
    }
}

/// Orbit distance: exact in 1D, pattern search on grids.
pub fn orbit_distance(t: &Triple, budget: usize, seed: u64) -> Result<f64> {
    match t {
        Triple::Interval(e) => Ok(distance_orbit_1d(e)?.value),
        Triple::Grid(e) => Ok(distance_orbit(e, budget, seed)?.value),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeficitRecord {
    pub family: String,
    pub delta: f64,
    pub deficit: f64,
    pub distance: f64,
    /// `deficit / distance²`, absent when the distance vanishes.
    pub ratio: Option<f64>,
    pub metadata: Value,
}

impl DeficitRecord {
    pub fn new(family: &str, delta: f64, deficit: f64, distance: f64, metadata: Value) -> Self {
        let ratio = (distance > 0.0).then(|| deficit / (distance * distance));
        DeficitRecord { family: family.to_string(), delta, deficit, distance, ratio, metadata }
    }
}

pub fn write_records_csv<W: Write>(records: &[DeficitRecord], mut w: W) -> Result<()> {
    writeln!(w, "family,delta,deficit,distance,ratio")?;
    for r in records {
        let ratio = r.ratio.map_or(String::new(), |x| format!("{x:?}"));
        writeln!(w, "{},{:?},{:?},{:?},{}", r.family, r.delta, r.deficit, r.distance, ratio)?;
    }
    Ok(())
}

/// One-parameter 1D families around the triple of unit balls.
#[derive(Clone, Debug, PartialEq)]
pub enum Family1d {
    /// `([-1,1], [-1,1], [-1+δ, 1+δ])`.
    Shifted,
    /// Balls of radii `r_1, r_2` and `E_3 = [-r_3, r_3-δ] ∪ [r_3, r_3+δ]`.
    Gap([f64; 3]),
    /// Unit balls and `E_3 = [-1,-δ] ∪ [δ, 1+δ]`.
    CentralGap,
    /// `(B+δ, B+δ, B-2δ)`.
    Orbit,
}

impl Family1d {
    pub fn parse(name: &str, radii: Option<[f64; 3]>) -> Result<Self> {
        match name {
            "shifted" => Ok(Family1d::Shifted),
            "gap" => {
                let r = radii.unwrap_or([1.0, 1.0, 1.0]);
                RadiiTriple::new(r)?;
                Ok(Family1d::Gap(r))
            }
            "central-gap" => Ok(Family1d::CentralGap),
            "orbit" => Ok(Family1d::Orbit),
            _ => Err(Error::Invalid(format!("unknown family {name:?} (shifted, gap, central-gap, orbit)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family1d::Shifted => "shifted",
            Family1d::Gap(_) => "gap",
            Family1d::CentralGap => "central-gap",
            Family1d::Orbit => "orbit",
        }
    }

    pub fn triple(&self, delta: f64) -> Result<[IntervalSet; 3]> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::OutOfRange { what: "family parameter", value: delta, range: "(0, inf)" });
        }
        let b = IntervalSet::interval(-1.0, 1.0)?;
        Ok(match self {
            Family1d::Shifted => [b.clone(), b, IntervalSet::interval(-1.0 + delta, 1.0 + delta)?],
            Family1d::Gap(r) => {
                if delta >= 2.0 * r[2] {
                    return Err(Error::OutOfRange { what: "gap width", value: delta, range: "(0, 2 r_3)" });
                }
                [
                    IntervalSet::interval(-r[0], r[0])?,
                    IntervalSet::interval(-r[1], r[1])?,
                    IntervalSet::from_pairs(&[(-r[2], r[2] - delta), (r[2], r[2] + delta)])?,
                ]
            }
            Family1d::CentralGap => {
                if delta >= 1.0 {
                    return Err(Error::OutOfRange { what: "gap width", value: delta, range: "(0, 1)" });
                }
                [b.clone(), b, IntervalSet::from_pairs(&[(-1.0, -delta), (delta, 1.0 + delta)])?]
            }
            Family1d::Orbit => [b.translate(delta), b.translate(delta), b.translate(-2.0 * delta)],
        })
    }

    pub fn record(&self, delta: f64) -> Result<DeficitRecord> {
        let e = self.triple(delta)?;
        let t = Triple::Interval(e);
        let def = deficit(&t, Backend::Interval)?;
        let dist = orbit_distance(&t, 0, 0)?;
        let mut meta = json!({ "backend": "interval" });
        if let Family1d::Gap(r) = self {
            meta["radii"] = json!(r);
        }
        Ok(DeficitRecord::new(self.name(), delta, def, dist, meta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub family: String,
    /// Slope of `log deficit` against `log distance`.
    pub exponent: Option<f64>,
    pub intercept: Option<f64>,
    /// Median of `deficit / distance²`.
    pub c_hat: Option<f64>,
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub degenerate: Option<String>,
    pub records: Vec<DeficitRecord>,
}

/// Below this a deficit or distance is treated as zero in a fit.
pub const FIT_FLOOR: f64 = 1e-13;

pub fn exponent_fit(family: &Family1d, deltas: &[f64]) -> Result<ExponentFit> {
    if deltas.len() < 5 {
        return Err(Error::Invalid(format!("exponent fit needs at least 5 values, got {}", deltas.len())));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Invalid("family parameters must be positive and finite".into()));
    }
    let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().copied().fold(0.0, f64::max);
    if hi < 10.0 * lo {
        return Err(Error::Invalid(format!("parameters must span a decade, got [{lo}, {hi}]")));
    }
    let records = deltas.iter().map(|&d| family.record(d)).collect::<Result<Vec<_>>>()?;
    Ok(fit_records(family.name(), records))
}

/// Fit over precomputed records; flags vanishing deficits or distances.
pub fn fit_records(family: &str, records: Vec<DeficitRecord>) -> ExponentFit {
    let mut fit = ExponentFit {
        family: family.to_string(),
        exponent: None,
        intercept: None,
        c_hat: None,
        c_min: None,
        c_max: None,
        degenerate: None,
        records,
    };
    let zero = fit.records.iter().filter(|r| r.deficit <= FIT_FLOOR || r.distance <= FIT_FLOOR).count();
    if zero > 0 {
        fit.degenerate = Some(format!("{zero} of {} points have vanishing deficit or distance", fit.records.len()));
        return fit;
    }
    let pts: Vec<(f64, f64)> = fit.records.iter().map(|r| (r.distance.ln(), r.deficit.ln())).collect();
    match least_squares(&pts) {
        Some((m, b)) => {
            fit.exponent = Some(m);
            fit.intercept = Some(b);
        }
        None => {
            fit.degenerate = Some("distances do not vary".into());
            return fit;
        }
    }
    let mut c: Vec<f64> = fit.records.iter().filter_map(|r| r.ratio).collect();
    c.sort_by(f64::total_cmp);
    let n = c.len();
    fit.c_hat = Some(if n % 2 == 1 { c[n / 2] } else { 0.5 * (c[n / 2 - 1] + c[n / 2]) });
    fit.c_min = c.first().copied();
    fit.c_max = c.last().copied();
    fit
}

/// `n` values spaced evenly in `log` between `lo` and `hi`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Least-squares line `y = m x + b` through the points, as `(m, b)`.
pub fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let m = sxy / sxx;
    Some((m, my - m * mx))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariantRow {
    pub tau: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub surplus: f64,
    /// `max(min_v |A Δ (A*+v)|, min_v |B Δ (B*+v)|)`.
    pub distance_proxy: f64,
    /// `|S_τ(A,B)| - |S_τ(A*,B*)|`.
    pub superlevel_gap: f64,
    pub holds: bool,
}

/// Relative slack allowed on the variant surplus.
pub const VARIANT_SLACK: f64 = 1e-12;

pub fn variant_check(a: &IntervalSet, b: &IntervalSet, taus: &[f64]) -> Result<Vec<VariantRow>> {
    let (sa, sb) = (a.rearranged(), b.rearranged());
    let proxy = translation_distance(a).max(translation_distance(b));
    let scale = (a.measure() * b.measure()).max(1.0);
    taus.iter()
        .map(|&tau| {
            let lhs = min_functional(a, b, tau)?;
            let rhs = min_functional(&sa, &sb, tau)?;
            let gap = superlevel(a, b, tau)?.measure() - superlevel(&sa, &sb, tau)?.measure();
            let surplus = lhs - rhs;
            Ok(VariantRow {
                tau,
                lhs,
                rhs,
                surplus,
                distance_proxy: proxy,
                superlevel_gap: gap,
                holds: surplus >= -VARIANT_SLACK * scale,
            })
        })
        .collect()
}

pub fn write_variant_csv<W: Write>(rows: &[(usize, VariantRow)], mut w: W) -> Result<()> {
    writeln!(w, "pair,tau,lhs,rhs,surplus,distance_proxy,superlevel_gap")?;
    for (k, r) in rows {
        writeln!(
            w,
            "{k},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.tau, r.lhs, r.rhs, r.surplus, r.distance_proxy, r.superlevel_gap
        )?;
    }
    Ok(())
}

/// `∫ min(1_{A_t} * 1_{B_t}, τ)` at each flow parameter `t`.
pub fn truncated_along_flow(a: &IntervalSet, b: &IntervalSet, tau: f64, ts: &[f64]) -> Result<Vec<f64>> {
    ts.iter().map(|&t| min_functional(&flow(a, t)?, &flow(b, t)?, tau)).collect()
}

/// Up to `max_parts` intervals with endpoints in `[0, span]`, merged where
/// they overlap; with `denom > 0` endpoints are multiples of `1/denom`.
pub fn random_interval_set<R: Rng>(rng: &mut R, max_parts: usize, span: f64, denom: u32) -> IntervalSet {
    let k = rng.gen_range(1..=max_parts.max(1));
    let snap = |x: f64| if denom > 0 { (x * denom as f64).round() / denom as f64 } else { x };
    let step = if denom > 0 { 1.0 / denom as f64 } else { 0.0 };
    let pairs: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let lo = snap(rng.gen_range(0.0..span));
            let len = snap(rng.gen_range(0.02..0.3) * span).max(step);
            (lo, lo + len.max(1e-3))
        })
        .collect();
    IntervalSet::from_pairs(&pairs).expect("finite endpoints")
}

/// Radii in `[0.2, 1]` rejected until `ρ`-strictly admissible.
pub fn random_admissible<R: Rng>(rng: &mut R, rho: f64) -> Result<RadiiTriple> {
    for _ in 0..10_000 {
        let r = RadiiTriple::new([rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)])?;
        if r.is_admissible(rho) {
            return Ok(r);
        }
    }
    Err(Error::Convergence(format!("no {rho}-admissible triple found")))
}

/// Union of a few random balls around the origin.
pub fn random_blob<R: Rng>(rng: &mut R, d: usize, h: f64) -> Result<GridMask> {
    let k = rng.gen_range(2..=5);
    let balls: Vec<([f64; 3], f64)> = (0..k)
        .map(|_| {
            let mut c = [0.0; 3];
            for x in c.iter_mut().take(d) {
                *x = rng.gen_range(-0.5..0.5);
            }
            (c, rng.gen_range(0.25..0.6))
        })
        .collect();
    let half = (1.2 / h).ceil() as usize;
    GridMask::from_fn(d, h, [half; 3], |x| {
        balls.iter().any(|(c, r)| (0..3).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>() <= r * r)
    })
}
