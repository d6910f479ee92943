//! Shared oracles for the integration tests. None of them call into the
//! library's convolution or quadrature code.
#![allow(dead_code)]

use num::{BigInt, BigRational, One, Signed, Zero};
use rand::Rng;
use rslab::interval_set::IntervalSet;

pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational of a dyadic double.
pub fn q_of(x: f64) -> Q {
    Q::from_float(x).expect("finite")
}

/// Integer endpoints over `den`, unioned, as both the exact pairs and the set.
pub fn dyadic_set<R: Rng>(rng: &mut R, max_parts: usize, span: i64, den: i64) -> (Vec<(i64, i64)>, IntervalSet) {
    let k = rng.gen_range(1..=max_parts);
    let mut raw: Vec<(i64, i64)> = (0..k)
        .map(|_| {
            let lo = rng.gen_range(0..span * den);
            let len = rng.gen_range(1..=span * den / 3);
            (lo, lo + len)
        })
        .collect();
    raw.sort();
    let mut merged: Vec<(i64, i64)> = Vec::new();
    for (a, b) in raw {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let pairs: Vec<(f64, f64)> = merged.iter().map(|&(a, b)| (a as f64 / den as f64, b as f64 / den as f64)).collect();
    (merged, IntervalSet::from_pairs(&pairs).unwrap())
}

/// `|A ∩ (x - B)|` summed part by part.
pub fn conv_at(a: &IntervalSet, b: &IntervalSet, x: f64) -> f64 {
    let mut s = 0.0;
    for p in a.parts() {
        for r in b.parts() {
            let lo = p.lo.max(x - r.hi);
            let hi = p.hi.min(x - r.lo);
            s += (hi - lo).max(0.0);
        }
    }
    s
}

fn conv_at_q(a: &[(Q, Q)], b: &[(Q, Q)], x: &Q) -> Q {
    let mut s = Q::zero();
    for (plo, phi) in a {
        for (rlo, rhi) in b {
            let lo = if plo > &(x - rhi) { plo.clone() } else { x - rhi };
            let hi = if phi < &(x - rlo) { phi.clone() } else { x - rlo };
            if hi > lo {
                s += hi - lo;
            }
        }
    }
    s
}

fn to_q(e: &IntervalSet) -> Vec<(Q, Q)> {
    e.parts().iter().map(|p| (q_of(p.lo), q_of(p.hi))).collect()
}

/// Breakpoints and exact values of `1_A * 1_B`, linear in between.
pub fn conv_profile_q(a: &IntervalSet, b: &IntervalSet) -> Vec<(Q, Q)> {
    let (qa, qb) = (to_q(a), to_q(b));
    let mut xs: Vec<Q> = Vec::new();
    for (plo, phi) in &qa {
        for (rlo, rhi) in &qb {
            xs.push(plo + rlo);
            xs.push(plo + rhi);
            xs.push(phi + rlo);
            xs.push(phi + rhi);
        }
    }
    xs.sort();
    xs.dedup();
    xs.into_iter()
        .map(|x| {
            let v = conv_at_q(&qa, &qb, &x);
            (x, v)
        })
        .collect()
}

/// Exact `∫ min(1_A * 1_B, τ)` for dyadic inputs.
pub fn min_functional_q(a: &IntervalSet, b: &IntervalSet, tau: &Q) -> Q {
    let prof = conv_profile_q(a, b);
    let half = q(1, 2);
    let mut s = Q::zero();
    for w in prof.windows(2) {
        let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
        let dx = x1 - x0;
        let below0 = y0 <= tau;
        let below1 = y1 <= tau;
        if below0 && below1 {
            s += &half * &dx * (y0 + y1);
        } else if !below0 && !below1 {
            s += tau * &dx;
        } else {
            let lam = (tau - y0) / (y1 - y0);
            let (low, high_frac) = if below0 { (y0, Q::one() - &lam) } else { (y1, lam.clone()) };
            let low_frac = Q::one() - &high_frac;
            s += &half * &low_frac * &dx * (low + tau) + &high_frac * &dx * tau;
        }
    }
    s
}

/// Exact `T1(E1,E2,E3) = ∫_{-E3} 1_{E1} * 1_{E2}` for dyadic inputs.
pub fn t1_q(e1: &IntervalSet, e2: &IntervalSet, e3: &IntervalSet) -> Q {
    let prof = conv_profile_q(e1, e2);
    let half = q(1, 2);
    let mut s = Q::zero();
    let win: Vec<(Q, Q)> = e3.parts().iter().map(|p| (-q_of(p.hi), -q_of(p.lo))).collect();
    for w in prof.windows(2) {
        let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
        for (lo, hi) in &win {
            let a = if lo > x0 { lo.clone() } else { x0.clone() };
            let b = if hi < x1 { hi.clone() } else { x1.clone() };
            if b > a {
                let f = |x: &Q| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                s += &half * (&b - &a) * (f(&a) + f(&b));
            }
        }
    }
    s
}

pub fn q_abs_f64(x: &Q) -> f64 {
    let a = x.abs();
    a.numer().to_string().parse::<f64>().unwrap() / a.denom().to_string().parse::<f64>().unwrap()
}

pub fn q_to_f64(x: &Q) -> f64 {
    let v = q_abs_f64(x);
    if x.is_negative() {
        -v
    } else {
        v
    }
}

/// Midpoint rule on `n` cells of `[a, b]`.
pub fn midpoint<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
}
