//! Distance from a triple to the orbit of its rearranged balls under common
//! measure-preserving linear maps and translations summing to zero.

use crate::balancing::AffineMap;
use crate::error::{Error, Result};
use crate::grid_set::GridMask;
use crate::interval_set::IntervalSet;
use crate::sphere::ball_volume;
use crate::star_set::StarSet;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Traceless `M` with `ψ = exp M`, and two free translations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitPoint {
    pub d: usize,
    pub m: Matrix3<f64>,
    pub v1: Vector3<f64>,
    pub v2: Vector3<f64>,
}

impl OrbitPoint {
    pub fn identity(d: usize) -> Self {
        OrbitPoint { d, m: Matrix3::zeros(), v1: Vector3::zeros(), v2: Vector3::zeros() }
    }

    pub fn param_count(d: usize) -> usize {
        d * d - 1 + 2 * d
    }

    pub fn from_params(d: usize, p: &[f64]) -> Self {
        let mut m = Matrix3::zeros();
        let mut k = 0;
        let mut trace = 0.0;
        for a in 0..d {
            for b in 0..d {
                if a == d - 1 && b == d - 1 {
                    continue;
                }
                m[(a, b)] = p[k];
                if a == b {
                    trace += p[k];
                }
                k += 1;
            }
        }
        m[(d - 1, d - 1)] = -trace;
        let mut v1 = Vector3::zeros();
        let mut v2 = Vector3::zeros();
        for a in 0..d {
            v1[a] = p[k + a];
            v2[a] = p[k + d + a];
        }
        OrbitPoint { d, m, v1, v2 }
    }

    pub fn params(&self) -> Vec<f64> {
        let d = self.d;
        let mut p = Vec::with_capacity(Self::param_count(d));
        for a in 0..d {
            for b in 0..d {
                if !(a == d - 1 && b == d - 1) {
                    p.push(self.m[(a, b)]);
                }
            }
        }
        p.extend((0..d).map(|a| self.v1[a]));
        p.extend((0..d).map(|a| self.v2[a]));
        p
    }

    pub fn psi(&self) -> Matrix3<f64> {
        let e = self.m.exp();
        if self.d == 2 {
            let mut e = e;
            e[(2, 2)] = 1.0;
            e
        } else {
            e
        }
    }

    pub fn translations(&self) -> [Vector3<f64>; 3] {
        [self.v1, self.v2, -self.v1 - self.v2]
    }
}

/// Mass, first and second moments of a set.
pub trait Moments {
    fn dim(&self) -> usize;
    fn moments(&self) -> (f64, Vector3<f64>, Matrix3<f64>);
}

impl Moments for GridMask {
    fn dim(&self) -> usize {
        GridMask::dim(self)
    }

    fn moments(&self) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let h = self.spacing();
        let vol = h.powi(GridMask::dim(self) as i32);
        let mut m0 = 0.0;
        let mut m1 = Vector3::zeros();
        let mut m2 = Matrix3::zeros();
        for p in self.points() {
            let x = Vector3::new(p[0] as f64 * h, p[1] as f64 * h, p[2] as f64 * h);
            m0 += vol;
            m1 += x * vol;
            m2 += x * x.transpose() * vol;
        }
        if GridMask::dim(self) == 2 {
            // Second moments of the unit cells themselves.
            m2[(0, 0)] += m0 * h * h / 12.0;
            m2[(1, 1)] += m0 * h * h / 12.0;
        } else {
            for a in 0..3 {
                m2[(a, a)] += m0 * h * h / 12.0;
            }
        }
        (m0, m1, m2)
    }
}

impl Moments for StarSet {
    fn dim(&self) -> usize {
        StarSet::dim(self)
    }

    fn moments(&self) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let d = StarSet::dim(self) as i32;
        let mut m0 = 0.0;
        let mut m1 = Vector3::zeros();
        let mut m2 = Matrix3::zeros();
        for ((x, w), r) in self.grid().nodes().iter().zip(self.grid().weights()).zip(self.radii()) {
            let t = Vector3::new(x[0], x[1], x[2]);
            m0 += w * r.powi(d) / d as f64;
            m1 += t * (w * r.powi(d + 1) / (d + 1) as f64);
            m2 += t * t.transpose() * (w * r.powi(d + 2) / (d + 2) as f64);
        }
        (m0, m1, m2)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MomentFit {
    /// Maps the set approximately onto the centered ball of equal measure.
    pub map: AffineMap,
    pub centroid: Vector3<f64>,
    /// Determinant-one square root of the normalized covariance.
    pub shape: Matrix3<f64>,
    pub degenerate: bool,
}

pub fn moment_init<E: Moments>(e: &E) -> Result<MomentFit> {
    let d = e.dim();
    let (m0, m1, m2) = e.moments();
    if !(m0 > 0.0) {
        return Err(Error::Invalid("moment fit needs a set of positive measure".into()));
    }
    let c = m1 / m0;
    let mut cov = m2 / m0 - c * c.transpose();
    if d == 2 {
        cov[(2, 2)] = 1.0;
        cov[(0, 2)] = 0.0;
        cov[(1, 2)] = 0.0;
        cov[(2, 0)] = 0.0;
        cov[(2, 1)] = 0.0;
    }
    let eig = SymmetricEigen::new(cov);
    let lead: Vec<f64> = (0..3).map(|k| eig.eigenvalues[k]).collect();
    let trace: f64 = (0..d).map(|a| cov[(a, a)]).sum();
    let degenerate = lead.iter().any(|&l| l <= 1e-12 * trace.abs().max(f64::MIN_POSITIVE));
    if degenerate {
        return Ok(MomentFit {
            map: AffineMap::translation_only(d, -c),
            centroid: c,
            shape: Matrix3::identity(),
            degenerate,
        });
    }
    let sqrt = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let mut shape = sqrt * sqrt.determinant().abs().powf(-1.0 / d as f64);
    if d == 2 {
        shape[(2, 2)] = 1.0;
    }
    let inv = shape.try_inverse().unwrap_or_else(Matrix3::identity);
    Ok(MomentFit { map: AffineMap::new(d, inv, -(inv * c)), centroid: c, shape, degenerate })
}

/// Symmetric differences with transformed balls, by exact cell counts.
struct GridObjective {
    d: usize,
    h: f64,
    radii: [f64; 3],
    counts: [usize; 3],
    lines: Vec<LineTable>,
}

struct LineTable {
    ex: usize,
    ey: usize,
    ez: usize,
    origin: [i64; 3],
    prefix: Vec<u32>,
}

impl LineTable {
    fn new(m: &GridMask) -> Self {
        let [ex, ey, ez] = m.extent();
        let mut prefix = Vec::with_capacity((ex + 1) * ey * ez);
        let cells = m.cells();
        for line in 0..ey * ez {
            let mut acc = 0u32;
            prefix.push(0);
            for i in 0..ex {
                acc += cells[line * ex + i] as u32;
                prefix.push(acc);
            }
        }
        LineTable { ex, ey, ez, origin: m.origin(), prefix }
    }

    /// Cells of the mask with x lattice index in `[lo, hi]` on line `(y, z)`.
    fn count(&self, y: i64, z: i64, lo: i64, hi: i64) -> usize {
        let j = y + self.origin[1];
        let k = z + self.origin[2];
        if j < 0 || k < 0 || j >= self.ey as i64 || k >= self.ez as i64 {
            return 0;
        }
        let a = (lo + self.origin[0]).max(0);
        let b = (hi + self.origin[0]).min(self.ex as i64 - 1);
        if a > b {
            return 0;
        }
        let line = (j as usize + self.ey * k as usize) * (self.ex + 1);
        (self.prefix[line + b as usize + 1] - self.prefix[line + a as usize]) as usize
    }
}

impl GridObjective {
    fn new(e: &[GridMask; 3]) -> Result<Self> {
        let d = e[0].dim();
        let h = e[0].spacing();
        for m in e {
            if m.dim() != d {
                return Err(Error::Invalid("masks must share a dimension".into()));
            }
            if m.spacing() != h {
                return Err(Error::Spacing(h, m.spacing()));
            }
        }
        let counts = [e[0].count(), e[1].count(), e[2].count()];
        let radii = counts.map(|n| (n as f64 * h.powi(d as i32) / ball_volume(d)).powf(1.0 / d as f64));
        Ok(GridObjective { d, h, radii, counts, lines: e.iter().map(LineTable::new).collect() })
    }

    /// `|E_j Δ (ψ B_j + v)|` in cells.
    fn sym_diff(&self, j: usize, psi: &Matrix3<f64>, inv: &Matrix3<f64>, v: &Vector3<f64>) -> usize {
        let r = self.radii[j];
        let h = self.h;
        let q = inv.transpose() * inv;
        let cov = psi * psi.transpose();
        let half = |a: usize| r * cov[(a, a)].sqrt();
        let (z_lo, z_hi) = if self.d == 3 {
            (((v[2] - half(2)) / h).floor() as i64, ((v[2] + half(2)) / h).ceil() as i64)
        } else {
            (0, 0)
        };
        let (y_lo, y_hi) = (((v[1] - half(1)) / h).floor() as i64, ((v[1] + half(1)) / h).ceil() as i64);
        let mut n_ball = 0usize;
        let mut n_both = 0usize;
        for z in z_lo..=z_hi {
            let pz = if self.d == 3 { z as f64 * h - v[2] } else { 0.0 };
            for y in y_lo..=y_hi {
                let py = y as f64 * h - v[1];
                let a = q[(0, 0)];
                let b = q[(0, 1)] * py + q[(0, 2)] * pz;
                let c = q[(1, 1)] * py * py + 2.0 * q[(1, 2)] * py * pz + q[(2, 2)] * pz * pz - r * r;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    continue;
                }
                let s = disc.sqrt();
                let lo = ((v[0] + (-b - s) / a) / h).ceil() as i64;
                let hi = ((v[0] + (-b + s) / a) / h).floor() as i64;
                if lo > hi {
                    continue;
                }
                n_ball += (hi - lo + 1) as usize;
                n_both += self.lines[j].count(y, z, lo, hi);
            }
        }
        self.counts[j] + n_ball - 2 * n_both
    }

    fn eval(&self, p: &OrbitPoint) -> f64 {
        let psi = p.psi();
        let inv = psi.try_inverse().unwrap_or_else(Matrix3::identity);
        let vs = p.translations();
        let worst = (0..3).map(|j| self.sym_diff(j, &psi, &inv, &vs[j])).max().unwrap_or(0);
        worst as f64 * self.h.powi(self.d as i32)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitResult {
    pub value: f64,
    #[serde(skip)]
    pub argmin: OrbitPoint,
    /// `max_j |E_j Δ B_j|` at the identity.
    pub identity_value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl OrbitResult {
    pub fn to_json(&self) -> serde_json::Value {
        let d = self.argmin.d;
        let psi = self.argmin.psi();
        let rows: Vec<Vec<f64>> = (0..d).map(|a| (0..d).map(|b| psi[(a, b)]).collect()).collect();
        let vs: Vec<Vec<f64>> = self.argmin.translations().iter().map(|v| (0..d).map(|a| v[a]).collect()).collect();
        serde_json::json!({
            "value": self.value,
            "identity_value": self.identity_value,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "psi": rows,
            "v": vs,
        })
    }
}

pub const RESTARTS: usize = 8;
const INITIAL_STEP: f64 = 0.1;

/// Coordinate pattern search over the orbit, seeded by moment fits.
pub fn distance_orbit(e: &[GridMask; 3], budget: usize, seed: u64) -> Result<OrbitResult> {
    if budget == 0 {
        return Err(Error::Invalid("budget must be at least 1".into()));
    }
    let obj = GridObjective::new(e)?;
    let d = obj.d;
    let scale = obj.radii.iter().copied().fold(0.0, f64::max).max(obj.h);
    let identity = OrbitPoint::identity(d);
    let identity_value = obj.eval(&identity);

    let fits = [moment_init(&e[0])?, moment_init(&e[1])?, moment_init(&e[2])?];
    let mut shape = Matrix3::zeros();
    for f in &fits {
        shape += f.shape * f.shape.transpose();
    }
    let eig = SymmetricEigen::new(shape / 3.0);
    let mut log = Matrix3::zeros();
    for k in 0..3 {
        let l = eig.eigenvalues[k];
        if l > 0.0 {
            let u = eig.eigenvectors.column(k);
            log += u * u.transpose() * (0.5 * l.ln());
        }
    }
    if d == 2 {
        log[(2, 2)] = 0.0;
    }
    let tr = log.trace() / d as f64;
    for a in 0..d {
        log[(a, a)] -= tr;
    }
    let sum = fits[0].centroid + fits[1].centroid + fits[2].centroid;
    let seed_point = OrbitPoint { d, m: log, v1: fits[0].centroid - sum / 3.0, v2: fits[1].centroid - sum / 3.0 };

    let nparam = OrbitPoint::param_count(d);
    let unit: Vec<f64> = (0..nparam).map(|k| if k < d * d - 1 { 1.0 } else { scale }).collect();
    let min_step = obj.h / 10.0 / scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_restart = (budget / RESTARTS).max(1);

    let mut evaluations = 1;
    let mut best = (identity_value, identity);
    let mut converged_best = true;
    let seeded = obj.eval(&seed_point);
    evaluations += 1;
    if seeded < best.0 {
        best = (seeded, seed_point);
    }
    for restart in 0..RESTARTS {
        let mut p = seed_point.params();
        if restart > 0 {
            for (k, x) in p.iter_mut().enumerate() {
                *x += INITIAL_STEP * unit[k] * rng.gen_range(-1.0..1.0);
            }
        }
        let mut val = obj.eval(&OrbitPoint::from_params(d, &p));
        let mut used = 1;
        let mut step = INITIAL_STEP;
        while step >= min_step && used < per_restart {
            let mut improved = false;
            for k in 0..nparam {
                for sign in [1.0, -1.0] {
                    if used >= per_restart {
                        break;
                    }
                    let mut q = p.clone();
                    q[k] += sign * step * unit[k];
                    let vq = obj.eval(&OrbitPoint::from_params(d, &q));
                    used += 1;
                    if vq < val {
                        p = q;
                        val = vq;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        evaluations += used;
        let done = step < min_step;
        if val < best.0 {
            best = (val, OrbitPoint::from_params(d, &p));
            converged_best = done;
        }
    }
    Ok(OrbitResult { value: best.0, argmin: best.1, identity_value, evaluations, converged: converged_best })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceCheck {
    pub value: f64,
    pub doubled: f64,
    /// `(value - doubled) / value`.
    pub relative_decrease: f64,
    pub stable: bool,
}

/// Reruns the search with twice the budget.
pub fn convergence_check(e: &[GridMask; 3], budget: usize, seed: u64) -> Result<ConvergenceCheck> {
    let a = distance_orbit(e, budget, seed)?.value;
    let b = distance_orbit(e, 2 * budget, seed)?.value;
    let rel = if a > 0.0 { (a - b) / a } else { 0.0 };
    Ok(ConvergenceCheck { value: a, doubled: b, relative_decrease: rel, stable: rel < 0.01 })
}

/// `v ↦ |E Δ (B + v)|` for the centered interval `B` of equal measure, as
/// vertices of a piecewise linear function, constant outside.
fn sym_diff_profile(e: &IntervalSet) -> Vec<(f64, f64)> {
    let half = 0.5 * e.measure();
    let mut vs: Vec<f64> = e.parts().iter().flat_map(|p| [p.lo - half, p.lo + half, p.hi - half, p.hi + half]).collect();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    vs.into_iter().map(|v| (v, sym_diff_translate(e, half, v))).collect()
}

fn sym_diff_translate(e: &IntervalSet, half: f64, v: f64) -> f64 {
    let lo = v - half;
    let hi = v + half;
    let inside: f64 = e.parts().iter().map(|p| (p.hi.min(hi) - p.lo.max(lo)).max(0.0)).sum();
    e.measure() + 2.0 * half - 2.0 * inside
}

/// `min_v |E Δ (E* + v)|`, attained at a vertex of the profile.
pub fn translation_distance(e: &IntervalSet) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    sym_diff_profile(e).iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
}

/// `{v : profile(v) <= level}` as sorted disjoint closed intervals, clipped
/// to `[-bound, bound]` when the level reaches the constant outer value.
fn sublevel(profile: &[(f64, f64)], level: f64, bound: f64) -> Vec<(f64, f64)> {
    if profile.first().is_some_and(|p| p.1 <= level) {
        return vec![(-bound, bound)];
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut push = |a: f64, b: f64| {
        if let Some(last) = out.last_mut() {
            if a <= last.1 {
                last.1 = last.1.max(b);
                return;
            }
        }
        out.push((a, b));
    };
    for w in profile.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        match (y0 <= level, y1 <= level) {
            (true, true) => push(x0, x1),
            (true, false) => push(x0, x0 + (level - y0) / (y1 - y0) * (x1 - x0)),
            (false, true) => push(x1 - (level - y1) / (y0 - y1) * (x1 - x0), x1),
            (false, false) => {}
        }
    }
    if profile.len() == 1 && profile[0].1 <= level {
        push(profile[0].0, profile[0].0);
    }
    out
}

/// Translations `v_j` with `Σ v_j = 0` from the sublevel sets at `level`, if any.
fn feasible(profiles: &[Vec<(f64, f64)>; 3], level: f64) -> Option<[f64; 3]> {
    // Each sum of two vertices lies inside this bound.
    let bound = 2.0 * profiles.iter().flatten().fold(0.0f64, |a, p| a.max(p.0.abs())) + 1.0;
    let s: Vec<Vec<(f64, f64)>> = profiles.iter().map(|p| sublevel(p, level, bound)).collect();
    for a in &s[0] {
        for b in &s[1] {
            for c in &s[2] {
                let lo = a.0 + b.0 + c.0;
                let hi = a.1 + b.1 + c.1;
                if lo <= 0.0 && 0.0 <= hi {
                    let lam = if hi > lo { -lo / (hi - lo) } else { 0.0 };
                    return Some([a.0 + lam * (a.1 - a.0), b.0 + lam * (b.1 - b.0), c.0 + lam * (c.1 - c.0)]);
                }
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Orbit1d {
    pub value: f64,
    pub v: [f64; 3],
}

/// Exact `min max_j |E_j Δ (E_j* + v_j)|` over `v_1 + v_2 + v_3 = 0`.
pub fn distance_orbit_1d(e: &[IntervalSet; 3]) -> Result<Orbit1d> {
    if e.iter().any(IntervalSet::is_empty) {
        return Err(Error::Invalid("orbit distance needs nonempty sets".into()));
    }
    let profiles = [sym_diff_profile(&e[0]), sym_diff_profile(&e[1]), sym_diff_profile(&e[2])];
    let at_zero = (0..3).map(|j| sym_diff_translate(&e[j], 0.5 * e[j].measure(), 0.0)).fold(0.0, f64::max);
    // The sum of the sublevel sets only grows with the level, so bisect.
    let mut lo = 0.0;
    let mut hi = at_zero;
    if let Some(v) = feasible(&profiles, 0.0) {
        return Ok(Orbit1d { value: 0.0, v });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(&profiles, mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v = feasible(&profiles, hi).unwrap_or([0.0; 3]);
    let value = (0..3).map(|j| sym_diff_translate(&e[j], 0.5 * e[j].measure(), v[j])).fold(0.0, f64::max);
    Ok(Orbit1d { value, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_set::ball_mask;

    #[test]
    fn params_roundtrip_and_det() {
        let p = [0.1, -0.2, 0.05, 0.3, 0.4, -0.1, 0.2];
        let o = OrbitPoint::from_params(2, &p);
        assert_eq!(o.params(), p.to_vec());
        assert!((o.psi().determinant() - 1.0).abs() < 1e-12);
        assert_eq!(OrbitPoint::param_count(3), 14);
    }

    #[test]
    fn shifted_triple_1d() {
        let b = IntervalSet::interval(-1.0, 1.0).unwrap();
        let e3 = IntervalSet::interval(-0.9, 1.1).unwrap();
        let o = distance_orbit_1d(&[b.clone(), b, e3]).unwrap();
        assert!((o.value - 0.2 / 3.0).abs() < 1e-12, "{o:?}");
        assert!(o.v.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn balls_are_on_the_orbit() {
        let h = 1.0 / 32.0;
        let b = ball_mask(1.0, h, 2).unwrap();
        let r = distance_orbit(&[b.clone(), b.clone(), b], 200, 1).unwrap();
        assert!(r.value <= r.identity_value);
        assert!(r.value < 0.1);
    }

    #[test]
    fn moment_fit_of_ball() {
        let b = ball_mask(1.0, 1.0 / 64.0, 2).unwrap();
        let f = moment_init(&b).unwrap();
        assert!((f.map.linear - Matrix3::identity()).norm() < 1e-3);
        assert!(f.centroid.norm() < 1e-12);
    }
}
