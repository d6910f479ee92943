//! Second-order expansion of `T` along harmonic deformations of three discs.
//!
//! The exact side splits `1_{E_k} = 1_{B_k} + f_k` and evaluates every term of
//! the trilinear expansion in polar coordinates: the linear terms against the
//! lens kernels, the pair terms as their spectral value plus a correction
//! supported near the critical angle, and the triple term on the same band.

use crate::error::{Error, Result};
use crate::grid_set::t_grid;
use crate::quad::GaussRule;
use crate::spectral::{an_max, boundary_weights, lambda_n, lens_volume, others, q_form, t_balls, RadiiTriple};
use crate::sphere::SphereGrid;
use crate::star_set::StarSet;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Degree-`n` circular harmonics `G_k = (a_k cos nθ + b_k sin nθ) / √π`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicTriple {
    pub n: usize,
    pub coeffs: [[f64; 2]; 3],
}

impl HarmonicTriple {
    pub fn new(n: usize, coeffs: [[f64; 2]; 3]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("degree-0 deformations change the measure".into()));
        }
        Ok(HarmonicTriple { n, coeffs })
    }

    /// Unit-norm harmonics with the given phases.
    pub fn from_phases(n: usize, phases: [f64; 3]) -> Result<Self> {
        Self::new(n, phases.map(|p| [p.cos(), p.sin()]))
    }

    pub fn eval(&self, k: usize, theta: f64) -> f64 {
        let nt = self.n as f64 * theta;
        let [a, b] = self.coeffs[k];
        (a * nt.cos() + b * nt.sin()) / PI.sqrt()
    }

    pub fn inner(&self, i: usize, j: usize) -> f64 {
        let [a, b] = self.coeffs[i];
        let [c, d] = self.coeffs[j];
        a * c + b * d
    }

    pub fn norm2(&self) -> f64 {
        (0..3).map(|k| self.inner(k, k)).sum()
    }

    pub fn sup(&self, k: usize) -> f64 {
        self.inner(k, k).sqrt() / PI.sqrt()
    }
}

type Radial = Box<dyn Fn(f64) -> f64 + Send + Sync>;

const FOURIER_SAMPLES: usize = 1024;

/// Three star-shaped perturbations of the discs `B_{r_k}` given by radial
/// functions of the polar angle.
pub struct RadialTriple {
    r: [f64; 3],
    rho: [Radial; 3],
    /// Fourier coefficients `[a_m, b_m]` of `F_k = (ρ_k² - r_k²) / 2`.
    fourier: [Vec<[f64; 2]>; 3],
    shell: [f64; 3],
}

impl RadialTriple {
    pub fn new(r: &RadiiTriple, rho: [Radial; 3]) -> Result<Self> {
        r.require_admissible()?;
        let n = FOURIER_SAMPLES;
        let thetas: Vec<f64> = (0..n).map(|m| 2.0 * PI * m as f64 / n as f64).collect();
        let mut fourier: [Vec<[f64; 2]>; 3] = Default::default();
        let mut shell = [0.0; 3];
        for k in 0..3 {
            let mut f = Vec::with_capacity(n);
            for (m, &t) in thetas.iter().enumerate() {
                let v = rho[k](t);
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Positivity { node: m, value: v });
                }
                shell[k] = f64::max(shell[k], (v - r.r[k]).abs());
                f.push(0.5 * (v * v - r.r[k] * r.r[k]));
            }
            let mut coef = Vec::with_capacity(n / 2);
            for m in 0..n / 2 {
                let (mut a, mut b) = (0.0, 0.0);
                for (fv, &t) in f.iter().zip(&thetas) {
                    let (sn, cs) = (m as f64 * t).sin_cos();
                    a += fv * cs;
                    b += fv * sn;
                }
                let scale = if m == 0 { 1.0 / n as f64 } else { 2.0 / n as f64 };
                coef.push([a * scale, b * scale]);
            }
            let big = coef.iter().fold(0.0f64, |x, c| x.max(c[0].abs()).max(c[1].abs()));
            let keep = coef.iter().rposition(|c| c[0].abs().max(c[1].abs()) > 1e-17 * big).map_or(1, |i| i + 1);
            coef.truncate(keep);
            fourier[k] = coef;
            shell[k] *= 1.05;
        }
        Ok(RadialTriple { r: r.r, rho, fourier, shell })
    }

    /// `ρ_k = (r_k² + 2 s G_k)^{1/2}`.
    pub fn harmonic(r: &RadiiTriple, g: &HarmonicTriple, s: f64) -> Result<Self> {
        for k in 0..3 {
            let v = r.r[k] * r.r[k] - 2.0 * s.abs() * g.sup(k);
            if v <= 0.0 {
                return Err(Error::Positivity { node: k, value: v });
            }
        }
        let rho: [Radial; 3] = [0, 1, 2].map(|k| {
            let g = g.clone();
            let rk = r.r[k];
            Box::new(move |t: f64| (rk * rk + 2.0 * s * g.eval(k, t)).sqrt()) as Radial
        });
        Self::new(r, rho)
    }

    /// Discs of radii `r_k` translated by `w_k`.
    pub fn translated(r: &RadiiTriple, w: [[f64; 2]; 3]) -> Result<Self> {
        let rho: [Radial; 3] = [0, 1, 2].map(|k| {
            let [wx, wy] = w[k];
            let rk = r.r[k];
            Box::new(move |t: f64| {
                let p = wx * t.cos() + wy * t.sin();
                p + (rk * rk - wx * wx - wy * wy + p * p).sqrt()
            }) as Radial
        });
        Self::new(r, rho)
    }

    fn rho(&self, k: usize, theta: f64) -> f64 {
        (self.rho[k])(theta)
    }

    fn f(&self, k: usize, theta: f64) -> f64 {
        let v = self.rho(k, theta);
        0.5 * (v * v - self.r[k] * self.r[k])
    }

    /// `∫_{u0}^{u1} F_k`.
    fn arc_integral(&self, k: usize, u0: f64, u1: f64) -> f64 {
        let c = &self.fourier[k];
        let mut v = c[0][0] * (u1 - u0);
        for (m, [a, b]) in c.iter().enumerate().skip(1) {
            let mf = m as f64;
            v += (a * ((mf * u1).sin() - (mf * u0).sin()) - b * ((mf * u1).cos() - (mf * u0).cos())) / mf;
        }
        v
    }
}

/// Terms of the expansion of `T(E)` evaluated on the deformed discs.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PolarTerms {
    pub t_balls: f64,
    /// `<K_k, f_k>`.
    pub linear: [f64; 3],
    /// `T(f_i, f_j, 1_{B_k})`.
    pub pair: [f64; 3],
    /// The leading part `s² λ_k <G_i, G_j>` of each pair term.
    pub pair_spectral: [f64; 3],
    /// `T(f_1, f_2, f_3)`.
    pub triple: f64,
}

impl PolarTerms {
    pub fn total(&self) -> f64 {
        self.t_balls + self.linear.iter().sum::<f64>() + self.pair.iter().sum::<f64>() + self.triple
    }
}

/// `∫_{[lo, hi] ∩ [a, b]} t dt`.
fn moment(lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if !(a.is_finite() && b.is_finite()) {
        return 0.0;
    }
    let l = lo.max(a);
    let h = hi.min(b);
    if h > l {
        0.5 * (h * h - l * l)
    } else {
        0.0
    }
}

/// Roots in `t` of `t^2 + 2 p c t + p^2 = R^2`: the chord of the disc of radius
/// `R` about `-x` along a ray at angle `acos c` from `x`, with `p = |x|`.
fn chord(p: f64, c: f64, big_r: f64) -> Option<(f64, f64)> {
    let disc = big_r * big_r - p * p * (1.0 - c * c);
    if disc < 0.0 {
        return None;
    }
    let q = disc.sqrt();
    Some((-p * c - q, -p * c + q))
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

const ZONE_SAMPLES: usize = 48;

/// `∫_a^b f` for an integrand that is smooth away from the sign changes of the
/// kink functions, located by sampling and bisection.
fn integrate_kinked<F, K>(gl: &GaussRule, f: F, kinks: &[K], a: f64, b: f64) -> f64
where
    F: Fn(f64) -> f64,
    K: Fn(f64) -> f64,
{
    let mut cuts = vec![a, b];
    let step = (b - a) / ZONE_SAMPLES as f64;
    for k in kinks {
        let mut x0 = a;
        let mut y0 = k(a);
        for m in 1..=ZONE_SAMPLES {
            let x1 = a + m as f64 * step;
            let y1 = k(x1);
            if y0.is_finite() && y1.is_finite() && (y0 < 0.0) != (y1 < 0.0) {
                cuts.push(bisect(k, x0, x1, y0));
            }
            x0 = x1;
            y0 = y1;
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| gl.integrate(w[0], w[1], &f)).sum()
}

/// Angles where the circle of radius `rj` about the origin meets the circle of
/// radius `rk` about `-x`, relative to the direction of `x`.
fn crossing(rj: f64, rk: f64, p: f64) -> Result<f64> {
    let c = (rk * rk - rj * rj - p * p) / (2.0 * rj * p);
    if !(c > -1.0 && c < 1.0) {
        return Err(Error::Invalid(format!("circles of radii {rj}, {rk} at distance {p} do not cross")));
    }
    Ok(c.acos())
}

/// Angles `u` about the crossing `phi` where the circle of radius `a` about the
/// origin meets the circle of radius `b` about `-x`, for `a`, `b` ranging over
/// the widened shells; the band of every kink lies inside.
fn zone(rj: f64, dj: f64, rk: f64, dk: f64, p: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in [rj - 1.5 * dj, rj + 1.5 * dj] {
        for b in [rk - 1.5 * dk, rk + 1.5 * dk] {
            let u = crossing(a, b, p)?;
            lo = lo.min(u);
            hi = hi.max(u);
        }
    }
    let pad = 0.05 * (hi - lo) + 1e-12;
    Ok((lo - pad, hi + pad))
}

/// The chord end near `target`.
fn near_end(ends: Option<(f64, f64)>, target: f64) -> f64 {
    match ends {
        Some((a, b)) => {
            if (a - target).abs() < (b - target).abs() {
                a
            } else {
                b
            }
        }
        None => f64::NAN,
    }
}

fn shell_segment(e: &RadialTriple, k: usize, theta: f64) -> (f64, f64, f64) {
    let rho = e.rho(k, theta);
    let r = e.r[k];
    if rho >= r {
        (r, rho, 1.0)
    } else {
        (rho, r, -1.0)
    }
}

/// `∫ f_j(y) 1[|x + y| <= r_k] dy` for `x = p θ_α`.
fn pair_inner(e: &RadialTriple, gl: &GaussRule, j: usize, k: usize, p: f64, alpha: f64) -> Result<f64> {
    let (rj, rk) = (e.r[j], e.r[k]);
    let phi = crossing(rj, rk, p)?;
    // Inside arc: β - α ∈ [φ, 2π - φ].
    let mut total = e.arc_integral(j, alpha + phi, alpha + 2.0 * PI - phi);
    let (z0, z1) = zone(rj, e.shell[j], rk, 0.0, p)?;
    for (lo, hi) in [(z0, z1), (2.0 * PI - z1, 2.0 * PI - z0)] {
        let band = |u: f64| -> f64 {
            let beta = alpha + u;
            let c = u.cos();
            let (lo, hi, sg) = shell_segment(e, j, beta);
            let exact = chord(p, c, rk).map_or(0.0, |(a, b)| moment(lo, hi, a, b)) * sg;
            let lin = if c <= (rk * rk - rj * rj - p * p) / (2.0 * rj * p) { e.f(j, beta) } else { 0.0 };
            exact - lin
        };
        let end = |u: f64| near_end(chord(p, u.cos(), rk), rj);
        let k1 = |u: f64| end(u) - rj;
        let k2 = |u: f64| end(u) - e.rho(j, alpha + u);
        let kinks: [&dyn Fn(f64) -> f64; 2] = [&k1, &k2];
        total += integrate_kinked(gl, band, &kinks, lo, hi);
    }
    Ok(total)
}

/// `∫ f_1(y) f_2(-x - y) dy` for `x = p θ_α`.
fn triple_inner(e: &RadialTriple, gl: &GaussRule, p: f64, alpha: f64) -> Result<f64> {
    let (r1, r2) = (e.r[1], e.r[2]);
    let (ca, sa) = (alpha.cos(), alpha.sin());
    // Chord of `-x - E_2` along the ray at angle `α + u`, end nearest `r_1`.
    let set_end = |u: f64| -> f64 {
        let (cb, sb) = ((alpha + u).cos(), (alpha + u).sin());
        let c = u.cos();
        let mut big_r = r2;
        let mut t = near_end(chord(p, c, big_r), r1);
        for _ in 0..60 {
            let zx = -(p * ca + t * cb);
            let zy = -(p * sa + t * sb);
            big_r = e.rho(2, zy.atan2(zx));
            let nt = near_end(chord(p, c, big_r), r1);
            if !nt.is_finite() || (nt - t).abs() <= 1e-15 * (1.0 + nt.abs()) {
                return nt;
            }
            t = nt;
        }
        t
    };
    let far_end = |u: f64| -> (f64, f64) {
        match chord(p, u.cos(), r2) {
            Some((a, b)) => (a, b),
            None => (f64::NAN, f64::NAN),
        }
    };
    let (z0, z1) = zone(r1, e.shell[1], r2, e.shell[2], p)?;
    let mut total = 0.0;
    for (lo, hi) in [(z0, z1), (2.0 * PI - z1, 2.0 * PI - z0)] {
        let band = |u: f64| -> f64 {
            let (lo, hi, sg) = shell_segment(e, 1, alpha + u);
            let (a, b) = far_end(u);
            if !a.is_finite() {
                return 0.0;
            }
            let ball = moment(lo, hi, a, b);
            let t = set_end(u);
            // Replace the end of the ball chord near `r_1` by the end for `E_2`.
            let set = if (a - r1).abs() < (b - r1).abs() { moment(lo, hi, t, b) } else { moment(lo, hi, a, t) };
            sg * (set - ball)
        };
        let ball_end = |u: f64| {
            let (a, b) = far_end(u);
            if (a - r1).abs() < (b - r1).abs() {
                a
            } else {
                b
            }
        };
        let k1 = |u: f64| ball_end(u) - r1;
        let k2 = |u: f64| ball_end(u) - e.rho(1, alpha + u);
        let k3 = |u: f64| set_end(u) - r1;
        let k4 = |u: f64| set_end(u) - e.rho(1, alpha + u);
        let kinks: [&dyn Fn(f64) -> f64; 4] = [&k1, &k2, &k3, &k4];
        total += integrate_kinked(gl, band, &kinks, lo, hi);
    }
    Ok(total)
}

/// Expansion terms of a harmonic deformation.
pub fn polar_terms(r: &RadiiTriple, g: &HarmonicTriple, s: f64, n_alpha: usize) -> Result<PolarTerms> {
    let tb = t_balls(r, 2);
    let mut pair_spectral = [0.0; 3];
    for k in 0..3 {
        let (i, j) = others(k);
        pair_spectral[k] = s * s * lambda_n(r.rho(k), g.n, 2) * g.inner(i, j);
    }
    if s == 0.0 {
        return Ok(PolarTerms { t_balls: tb, linear: [0.0; 3], pair: [0.0; 3], pair_spectral, triple: 0.0 });
    }
    let e = RadialTriple::harmonic(r, g, s)?;
    let mut terms = polar_terms_radial(r, &e, n_alpha)?;
    terms.pair_spectral = pair_spectral;
    Ok(terms)
}

/// All expansion terms by polar quadrature with `n_alpha` outer angles.
pub fn polar_terms_radial(r: &RadiiTriple, e: &RadialTriple, n_alpha: usize) -> Result<PolarTerms> {
    let tb = t_balls(r, 2);
    let gl = GaussRule::new(12);
    let radial = GaussRule::new(8);
    let da = 2.0 * PI / n_alpha as f64;
    let alphas: Vec<f64> = (0..n_alpha).map(|m| m as f64 * da).collect();
    let shell_integral = |i: usize, inner: &dyn Fn(f64, f64) -> Result<f64>| -> Result<f64> {
        let mut total = 0.0;
        for &a in &alphas {
            let mut err = None;
            let v = radial.integrate(r.r[i], e.rho(i, a), |t| match inner(t, a) {
                Ok(v) => v * t,
                Err(x) => {
                    err.get_or_insert(x);
                    0.0
                }
            });
            if let Some(x) = err {
                return Err(x);
            }
            total += v;
        }
        Ok(total * da)
    };
    let mut linear = [0.0; 3];
    let mut pair = [0.0; 3];
    for k in 0..3 {
        let (i, j) = others(k);
        let (ri, rj) = (r.r[i], r.r[j]);
        linear[k] = shell_integral(k, &|t, _| Ok(lens_volume(ri, rj, t, 2)))?;
        pair[k] = shell_integral(i, &|t, a| pair_inner(e, &gl, j, k, t, a))?;
    }
    let triple = shell_integral(0, &|t, a| triple_inner(e, &gl, t, a))?;
    Ok(PolarTerms { t_balls: tb, linear, pair, pair_spectral: [f64::NAN; 3], triple })
}

/// `T_balls - ½ s² Σ γ_k r_k^{1-d} ||G_k||² + s² Q(G)`.
pub fn predicted(r: &RadiiTriple, g: &HarmonicTriple, s: f64) -> f64 {
    let w = boundary_weights(r, 2);
    let mut q = 0.0;
    let mut norm = 0.0;
    for k in 0..3 {
        let (i, j) = others(k);
        q += lambda_n(r.rho(k), g.n, 2) * g.inner(i, j);
        norm += w[k] * g.inner(k, k);
    }
    t_balls(r, 2) - 0.5 * s * s * norm + s * s * q
}

/// `Q(G)` through nodal projection, as a cross-check of the closed form.
pub fn q_nodal(r: &RadiiTriple, g: &HarmonicTriple, m: usize) -> Result<f64> {
    let grid = SphereGrid::circle(m)?;
    let fields: Vec<Vec<f64>> = (0..3)
        .map(|k| grid.nodes().iter().map(|x| g.eval(k, x[1].atan2(x[0]))).collect())
        .collect();
    Ok(q_form(&grid, [&fields[0], &fields[1], &fields[2]], r))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RetraceRow {
    pub s: f64,
    pub exact: f64,
    pub predicted: f64,
    pub residual: f64,
    /// `T_grid` of the rasterized sets, when requested.
    pub grid: Option<f64>,
    /// Whether the grid error stays below the residual it would have to resolve.
    pub grid_resolves: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RetraceReport {
    pub n: usize,
    pub rows: Vec<RetraceRow>,
    /// Least-squares slope of `log |residual|` against `log s`.
    pub slope: f64,
    pub a_n: f64,
    /// `0.5 (½ - A_n) min_k γ_k r_k^{1-d} ||G||²`, the asserted quadratic gain.
    pub gain: f64,
    pub bound_holds: bool,
    pub coarse: bool,
}

pub const DEFAULT_ANGLES: usize = 128;

pub fn retrace_check(r: &RadiiTriple, g: &HarmonicTriple, s_list: &[f64], h: Option<f64>) -> Result<RetraceReport> {
    let grid = Arc::new(SphereGrid::circle(1024)?);
    let rows = s_list.par_iter().map(|&s| {
        let exact = polar_terms(r, g, s, DEFAULT_ANGLES)?.total();
        let pred = predicted(r, g, s);
        let residual = exact - pred;
        let (grid_t, resolves) = match h {
            Some(h) => {
                let masks = (0..3)
                    .map(|k| {
                        StarSet::from_radial(grid.clone(), r.r[k], |x| {
                            (r.r[k] * r.r[k] + 2.0 * s * g.eval(k, x[1].atan2(x[0]))).sqrt()
                        })
                        .and_then(|e| e.to_mask(h))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let t = t_grid(&masks[0], &masks[1], &masks[2])?;
                (Some(t), Some((t - exact).abs() <= residual.abs()))
            }
            None => (None, None),
        };
        Ok(RetraceRow { s, exact, predicted: pred, residual, grid: grid_t, grid_resolves: resolves })
    });
    let rows = rows.collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|w| w.s != 0.0 && w.residual != 0.0).map(|w| (w.s.abs().ln(), w.residual.abs().ln())).collect();
    let slope = super::least_squares(&pts).map_or(f64::NAN, |(m, _)| m);
    let a_n = an_max(r, g.n, 2);
    let w = boundary_weights(r, 2);
    let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
    let gain = 0.5 * (0.5 - a_n) * wmin * g.norm2();
    let tb = t_balls(r, 2);
    let bound_holds = g.n < 3 || rows.iter().all(|w| w.exact <= tb - gain * w.s * w.s + 1e-12 * tb);
    let coarse = rows.iter().any(|w| w.grid_resolves == Some(false));
    Ok(RetraceReport { n: g.n, rows, slope, a_n, gain, bound_holds, coarse })
}
