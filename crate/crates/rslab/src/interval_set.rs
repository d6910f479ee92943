//! Finite unions of closed intervals on the line, exact convolution of their
//! indicators, and the one-dimensional Riesz-Sobolev functional.
//!
//! Sets are kept normalized: parts sorted, pairwise disjoint, non-touching and
//! of positive length.

use crate::error::{check_finite, Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        check_finite(lo, "interval endpoint")?;
        check_finite(hi, "interval endpoint")?;
        if lo > hi {
            return Err(Error::Invalid(format!("interval lo {lo} > hi {hi}")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

#[derive(Serialize, Deserialize)]
struct RawSet {
    parts: Vec<[f64; 2]>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    /// Sort, merge overlapping or touching parts and drop zero-length parts.
    pub fn normalize(raw: &[(f64, f64)]) -> Result<Self> {
        let mut parts = Vec::with_capacity(raw.len());
        for &(lo, hi) in raw {
            parts.push(Interval::new(lo, hi)?);
        }
        Ok(Self::from_intervals(parts))
    }

    pub fn from_pairs(raw: &[(f64, f64)]) -> Result<Self> {
        Self::normalize(raw)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::normalize(&[(lo, hi)])
    }

    pub(crate) fn from_intervals(mut parts: Vec<Interval>) -> Self {
        parts.retain(|p| p.hi > p.lo);
        parts.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(last) if p.lo <= last.hi => last.hi = last.hi.max(p.hi),
                _ => out.push(p),
            }
        }
        IntervalSet { parts: out }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.parts.iter().map(Interval::len).sum()
    }

    pub fn inf(&self) -> Option<f64> {
        self.parts.first().map(|p| p.lo)
    }

    pub fn sup(&self) -> Option<f64> {
        self.parts.last().map(|p| p.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.part_index(x).is_some()
    }

    /// Index of the part containing `x`, if any.
    pub fn part_index(&self, x: f64) -> Option<usize> {
        let i = self.parts.partition_point(|p| p.hi < x);
        (i < self.parts.len() && self.parts[i].lo <= x).then_some(i)
    }

    /// `|E ∩ (-inf, x]|`.
    pub fn cumulative(&self, x: f64) -> f64 {
        let mut m = 0.0;
        for p in &self.parts {
            if p.hi <= x {
                m += p.len();
            } else {
                if p.lo < x {
                    m += x - p.lo;
                }
                break;
            }
        }
        m
    }

    pub fn translate(&self, v: f64) -> Self {
        IntervalSet {
            parts: self
                .parts
                .iter()
                .map(|p| Interval { lo: p.lo + v, hi: p.hi + v })
                .collect(),
        }
    }

    /// `λE` for `λ > 0`.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        check_finite(lambda, "dilation factor")?;
        if lambda <= 0.0 {
            return Err(Error::OutOfRange { what: "dilation factor", value: lambda, range: "(0, inf)" });
        }
        Ok(IntervalSet {
            parts: self
                .parts
                .iter()
                .map(|p| Interval { lo: p.lo * lambda, hi: p.hi * lambda })
                .collect(),
        })
    }

    /// The reflection `-E`.
    pub fn reflect(&self) -> Self {
        IntervalSet {
            parts: self
                .parts
                .iter()
                .rev()
                .map(|p| Interval { lo: -p.hi, hi: -p.lo })
                .collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all = self.parts.clone();
        all.extend_from_slice(&other.parts);
        Self::from_intervals(all)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (a, b) = (&self.parts, &other.parts);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if hi > lo {
                out.push(Interval { lo, hi });
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_intervals(out)
    }

    /// Closure of `self \ other`.
    pub fn difference(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let b = &other.parts;
        let mut j = 0;
        for p in &self.parts {
            let mut lo = p.lo;
            while j < b.len() && b[j].hi <= lo {
                j += 1;
            }
            let mut k = j;
            while k < b.len() && b[k].lo < p.hi {
                if b[k].lo > lo {
                    out.push(Interval { lo, hi: b[k].lo });
                }
                lo = lo.max(b[k].hi);
                if b[k].hi >= p.hi {
                    break;
                }
                k += 1;
            }
            if p.hi > lo {
                out.push(Interval { lo, hi: p.hi });
            }
        }
        Self::from_intervals(out)
    }

    pub fn sym_diff(&self, other: &Self) -> Self {
        self.difference(other).union(&other.difference(self))
    }

    /// The centered interval of the same measure; `[0, 0]` for the empty set.
    pub fn rearrange(&self) -> Interval {
        let m = 0.5 * self.measure();
        Interval { lo: -m, hi: m }
    }

    pub fn rearranged(&self) -> Self {
        Self::from_intervals(vec![self.rearrange()])
    }

    pub fn to_json(&self) -> String {
        let raw = RawSet {
            parts: self.parts.iter().map(|p| [p.lo, p.hi]).collect(),
        };
        serde_json::to_string(&raw).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawSet = serde_json::from_str(s)?;
        let pairs: Vec<(f64, f64)> = raw.parts.iter().map(|p| (p[0], p[1])).collect();
        Self::normalize(&pairs)
    }
}

/// Continuous piecewise-linear function with compact support, given by its
/// breakpoints. It vanishes outside `[xs[0], xs[last]]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Invalid("breakpoint and value counts differ".into()));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid("breakpoints must increase strictly".into()));
            }
        }
        for &v in xs.iter().chain(&ys) {
            check_finite(v, "piecewise-linear data")?;
        }
        Ok(PiecewiseLinear { xs, ys })
    }

    pub fn zero() -> Self {
        PiecewiseLinear::default()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 0 || x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&b| b <= x);
        if i == 0 {
            return self.ys[0];
        }
        if i == n {
            return self.ys[n - 1];
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let lam = (x - x0) / (x1 - x0);
        self.ys[i - 1] + lam * (self.ys[i] - self.ys[i - 1])
    }

    pub fn max_value(&self) -> f64 {
        self.ys.iter().copied().fold(0.0, f64::max)
    }

    pub fn integral(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Integral over `[a, b]`.
    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        let n = self.xs.len();
        if n < 2 || b <= a {
            return 0.0;
        }
        let a = a.max(self.xs[0]);
        let b = b.min(self.xs[n - 1]);
        if b <= a {
            return 0.0;
        }
        let mut s = 0.0;
        let mut i = self.xs.partition_point(|&x| x <= a).max(1);
        let mut left = a;
        let mut fl = self.eval(a);
        while i < n && left < b {
            let right = self.xs[i].min(b);
            let fr = if right == self.xs[i] { self.ys[i] } else { self.eval(right) };
            s += 0.5 * (right - left) * (fl + fr);
            left = right;
            fl = fr;
            i += 1;
        }
        s
    }

    pub fn integral_over_set(&self, set: &IntervalSet) -> f64 {
        set.parts().iter().map(|p| self.integral_over(p.lo, p.hi)).sum()
    }

    /// `∫ min(f, τ)`, exact for piecewise-linear `f >= 0`.
    pub fn min_integral(&self, tau: f64) -> f64 {
        let mut s = 0.0;
        for (x, y) in self.xs.windows(2).zip(self.ys.windows(2)) {
            let dx = x[1] - x[0];
            let (y0, y1) = (y[0], y[1]);
            if y0 <= tau && y1 <= tau {
                s += 0.5 * dx * (y0 + y1);
            } else if y0 >= tau && y1 >= tau {
                s += tau * dx;
            } else {
                let lam = (tau - y0) / (y1 - y0);
                let (below, above) = if y0 < tau { (lam, 1.0 - lam) } else { (1.0 - lam, lam) };
                let ylow = y0.min(y1);
                s += 0.5 * below * dx * (ylow + tau) + above * dx * tau;
            }
        }
        s
    }

    /// Closure of the open superlevel set `{f > t}`, for `t >= 0`.
    pub fn superlevel(&self, t: f64) -> Result<IntervalSet> {
        check_finite(t, "superlevel threshold")?;
        if t < 0.0 {
            return Err(Error::OutOfRange {
                what: "superlevel threshold",
                value: t,
                range: "[0, inf)",
            });
        }
        let mut out = Vec::new();
        for (x, y) in self.xs.windows(2).zip(self.ys.windows(2)) {
            let (y0, y1) = (y[0], y[1]);
            if y0 <= t && y1 <= t {
                continue;
            }
            let dx = x[1] - x[0];
            let lo = if y0 > t { x[0] } else { x[0] + dx * (t - y0) / (y1 - y0) };
            let hi = if y1 > t { x[1] } else { x[0] + dx * (t - y0) / (y1 - y0) };
            out.push(Interval { lo, hi });
        }
        Ok(IntervalSet::from_intervals(out))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            writeln!(w, "{x:?},{y:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if k == 0 {
                if line != "x,value" {
                    return Err(Error::Parse(format!("expected header x,value, got {line:?}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let mut num = || -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing column", k + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))
            };
            xs.push(num()?);
            ys.push(num()?);
        }
        Self::new(xs, ys)
    }
}

/// Exact `1_A * 1_B`, a sum of trapezoids with breakpoints at endpoint sums.
pub fn convolve(a: &IntervalSet, b: &IntervalSet) -> PiecewiseLinear {
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(4 * a.len() * b.len());
    for p in a.parts() {
        for q in b.parts() {
            let (lp, lq) = (p.len(), q.len());
            let x0 = p.lo + q.lo;
            events.push((x0, 1.0));
            events.push((x0 + lp.min(lq), -1.0));
            events.push((x0 + lp.max(lq), -1.0));
            events.push((p.hi + q.hi, 1.0));
        }
    }
    if events.is_empty() {
        return PiecewiseLinear::zero();
    }
    events.sort_by(|u, v| u.0.total_cmp(&v.0));
    let mut xs: Vec<f64> = Vec::with_capacity(events.len());
    let mut kinks: Vec<f64> = Vec::with_capacity(events.len());
    for (x, dk) in events {
        match xs.last() {
            Some(&last) if last == x => *kinks.last_mut().unwrap() += dk,
            _ => {
                xs.push(x);
                kinks.push(dk);
            }
        }
    }
    let mut ys = Vec::with_capacity(xs.len());
    let mut slope = 0.0;
    let mut y: f64 = 0.0;
    for i in 0..xs.len() {
        if i > 0 {
            y += slope * (xs[i] - xs[i - 1]);
        }
        ys.push(y.max(0.0));
        slope += kinks[i];
    }
    if let Some(last) = ys.last_mut() {
        *last = 0.0;
    }
    // Drop breakpoints where the slope does not change.
    let mut kx = Vec::with_capacity(xs.len());
    let mut ky = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        if i == 0 || i + 1 == xs.len() || kinks[i] != 0.0 {
            kx.push(xs[i]);
            ky.push(ys[i]);
        }
    }
    PiecewiseLinear { xs: kx, ys: ky }
}

/// `T1(E1, E2, E3) = ∫_{-E3} 1_{E1} * 1_{E2}`.
pub fn t1(e1: &IntervalSet, e2: &IntervalSet, e3: &IntervalSet) -> f64 {
    convolve(e1, e2).integral_over_set(&e3.reflect())
}

/// `∫ min(1_A * 1_B, τ)`.
pub fn min_functional(a: &IntervalSet, b: &IntervalSet, tau: f64) -> Result<f64> {
    check_finite(tau, "tau")?;
    if tau < 0.0 {
        return Err(Error::OutOfRange { what: "tau", value: tau, range: "[0, inf)" });
    }
    Ok(convolve(a, b).min_integral(tau))
}

/// Closure of `{1_A * 1_B > t}`.
pub fn superlevel(a: &IntervalSet, b: &IntervalSet, t: f64) -> Result<IntervalSet> {
    convolve(a, b).superlevel(t)
}
