//! Affine balancing: measure-preserving affine maps that remove the
//! components of degree at most two from the boundary field of a near-ball,
//! the one-dimensional translation balance and centering of triples.

use crate::error::{Error, Result};
use crate::interval_set::IntervalSet;
use crate::sphere::{degree_dim, SpectralField, SphereGrid};
use crate::star_set::StarSet;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::io::Write;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub d: usize,
    /// Linear part; only the leading `d x d` block is used.
    pub linear: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl AffineMap {
    pub fn identity(d: usize) -> Self {
        AffineMap { d, linear: Self::pad(Matrix3::identity(), d), translation: Vector3::zeros() }
    }

    fn pad(mut m: Matrix3<f64>, d: usize) -> Matrix3<f64> {
        if d == 2 {
            m[(2, 0)] = 0.0;
            m[(2, 1)] = 0.0;
            m[(0, 2)] = 0.0;
            m[(1, 2)] = 0.0;
            m[(2, 2)] = 1.0;
        }
        m
    }

    pub fn new(d: usize, linear: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut t = translation;
        if d == 2 {
            t[2] = 0.0;
        }
        AffineMap { d, linear: Self::pad(linear, d), translation: t }
    }

    pub fn translation_only(d: usize, v: Vector3<f64>) -> Self {
        Self::new(d, Matrix3::identity(), v)
    }

    pub fn det(&self) -> f64 {
        self.linear.determinant()
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.linear * x + self.translation
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.linear.try_inverse().ok_or_else(|| Error::Invalid("affine map is singular".into()))?;
        Ok(AffineMap { d: self.d, linear: inv, translation: -(inv * self.translation) })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        AffineMap {
            d: self.d,
            linear: self.linear * other.linear,
            translation: self.linear * other.translation + self.translation,
        }
    }

    /// Rescale the linear part to determinant one in absolute value.
    pub fn normalized(&self) -> Self {
        let det = self.det().abs();
        let c = det.powf(-1.0 / self.d as f64);
        let mut lin = self.linear * c;
        if self.d == 2 {
            lin[(2, 2)] = 1.0;
        }
        AffineMap { d: self.d, linear: lin, translation: self.translation }
    }

    /// `||T - I|| + ||v||` with the Frobenius norm on the linear part.
    pub fn distance_to_identity(&self) -> f64 {
        (self.linear - Matrix3::identity()).norm() + self.translation.norm()
    }
}

/// Orthonormal harmonics of degree at most two, as nodal vectors.
#[derive(Clone, Debug)]
pub struct V2Basis {
    grid: Arc<SphereGrid>,
    pub functions: Vec<Vec<f64>>,
}

impl V2Basis {
    pub fn new(grid: Arc<SphereGrid>) -> Result<Self> {
        let d = grid.dim();
        let mut functions = Vec::new();
        for n in 0..=2 {
            for k in 0..degree_dim(d, n) {
                let mut c = vec![0.0; degree_dim(d, n)];
                c[k] = 1.0;
                functions.push(grid.synthesize(n, &c)?);
            }
        }
        Ok(V2Basis { grid, functions })
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.grid.inner(&self.functions[i], &self.functions[j]))
    }

    /// Index range of the degree-`n` slots.
    pub fn degree_range(&self, n: usize) -> std::ops::Range<usize> {
        let d = self.grid.dim();
        let start: usize = (0..n).map(|k| degree_dim(d, k)).sum();
        start..start + degree_dim(d, n)
    }
}

/// `<F, P_i>` for the basis functions `P_i`.
pub fn imbalance(f: &[f64], basis: &V2Basis) -> DVector<f64> {
    DVector::from_iterator(basis.dim(), basis.functions.iter().map(|p| basis.grid.inner(f, p)))
}

fn unit(x: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

/// Radial function of `φ(E)` by root-finding along each node direction.
pub fn apply_affine(e: &StarSet, phi: &AffineMap) -> Result<StarSet> {
    if (phi.det().abs() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("affine map has |det| = {}, expected 1", phi.det().abs())));
    }
    let inv = phi.inverse()?;
    let field = SpectralField::new(e.grid(), e.radii());
    let g = |theta: &Vector3<f64>, t: f64| -> f64 {
        let y = inv.apply(&(theta * t));
        let n = y.norm();
        if n == 0.0 {
            return -field.eval(&[theta[0], theta[1], theta[2]]);
        }
        n - field.eval(&[y[0], y[1], y[2]])
    };
    let mut radii = Vec::with_capacity(e.grid().len());
    for (k, x) in e.grid().nodes().iter().enumerate() {
        let theta = unit(x);
        let t0 = e.radii()[k];
        let mut lo = t0;
        let mut hi = t0;
        let mut glo = g(&theta, lo);
        let mut ghi = glo;
        let mut tries = 0;
        while glo > 0.0 {
            lo *= 0.8;
            glo = g(&theta, lo);
            tries += 1;
            if tries > 60 {
                return Err(Error::Invalid(format!("image is not star-shaped near node {k}")));
            }
        }
        while ghi <= 0.0 {
            hi *= 1.25;
            ghi = g(&theta, hi);
            tries += 1;
            if tries > 120 {
                return Err(Error::Invalid(format!("image is not star-shaped near node {k}")));
            }
        }
        if g(&theta, 1e-9 * t0) > 0.0 {
            return Err(Error::Invalid(format!("origin not inside the image near node {k}")));
        }
        // Illinois regula falsi.
        let mut side = 0i8;
        let mut t = lo;
        for _ in 0..200 {
            t = (lo * ghi - hi * glo) / (ghi - glo);
            let gt = g(&theta, t);
            if gt == 0.0 || (hi - lo) < 1e-15 * t0 {
                break;
            }
            if gt < 0.0 {
                lo = t;
                glo = gt;
                if side == -1 {
                    ghi *= 0.5;
                }
                side = -1;
            } else {
                hi = t;
                ghi = gt;
                if side == 1 {
                    glo *= 0.5;
                }
                side = 1;
            }
            if gt.abs() < 1e-15 * t0 {
                break;
            }
        }
        radii.push(t);
    }
    StarSet::new(e.grid().clone(), radii, e.base_radius())
}

/// Jacobian of the imbalance with respect to the generators `S(x) = x_b e_a`
/// (columns `a * d + b`) and translations `e_a` (last `d` columns), at the ball.
pub fn generator_matrix(basis: &V2Basis, r: f64) -> DMatrix<f64> {
    let d = basis.grid.dim();
    let nodes = basis.grid.nodes();
    let ncol = d * d + d;
    let mut j = DMatrix::zeros(basis.dim(), ncol);
    let rd = r.powi(d as i32);
    let rd1 = r.powi(d as i32 - 1);
    for c in 0..ncol {
        let field: Vec<f64> = nodes
            .iter()
            .map(|x| {
                if c < d * d {
                    let (a, b) = (c / d, c % d);
                    rd * x[a] * x[b]
                } else {
                    rd1 * x[c - d * d]
                }
            })
            .collect();
        let col = imbalance(&field, basis);
        j.set_column(c, &col);
    }
    j
}

fn generator_step(d: usize, coef: &DVector<f64>, alpha: f64) -> AffineMap {
    let mut lin = Matrix3::identity();
    let mut v = Vector3::zeros();
    for a in 0..d {
        for b in 0..d {
            lin[(a, b)] += alpha * coef[a * d + b];
        }
        v[a] = alpha * coef[d * d + a];
    }
    AffineMap::new(d, lin, v)
}

#[derive(Clone, Debug)]
pub struct BalanceReport {
    pub phi: AffineMap,
    pub balanced: StarSet,
    /// Imbalance norm before each iteration and after the last.
    pub residuals: Vec<f64>,
    pub steps: Vec<f64>,
    pub converged: bool,
    /// `||φ - I|| / |E Δ B|`.
    pub constant: f64,
}

impl BalanceReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,residual,step")?;
        for (k, r) in self.residuals.iter().enumerate() {
            let s = self.steps.get(k).copied().unwrap_or(0.0);
            writeln!(w, "{k},{r:?},{s:?}")?;
        }
        Ok(())
    }
}

pub const BALANCE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 50;

/// Damped Newton iteration for `φ` with `φ(E)` balanced up to degree two.
pub fn balance_affine(e: &StarSet) -> Result<BalanceReport> {
    let d = e.dim();
    let r = e.base_radius();
    let sup = e.f_field().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sup > 0.1 * r.powi(d as i32) {
        return Err(Error::Invalid(format!(
            "boundary field sup {sup:.3e} exceeds 0.1 r^d; the set is too far from the ball"
        )));
    }
    let basis = V2Basis::new(e.grid().clone())?;
    let jac = generator_matrix(&basis, r);
    let svd = jac.svd(true, true);
    let mut phi = AffineMap::identity(d);
    let mut cur = e.clone();
    let mut res = imbalance(&cur.f_field(), &basis);
    let mut residuals = vec![res.norm()];
    let mut steps = Vec::new();
    let floor = 1e-14 * r.powi(d as i32);
    for _ in 0..MAX_ITER {
        if res.norm() <= floor {
            break;
        }
        let coef = svd.solve(&(-&res), 1e-12).map_err(|e| Error::Convergence(e.to_string()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-6 {
            let cand = generator_step(d, &coef, alpha).compose(&phi).normalized();
            let set = apply_affine(e, &cand)?;
            let new_res = imbalance(&set.f_field(), &basis);
            if new_res.norm() < res.norm() {
                phi = cand;
                cur = set;
                res = new_res;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        steps.push(if accepted { alpha } else { 0.0 });
        residuals.push(res.norm());
        if !accepted {
            break;
        }
    }
    let sd = e.sym_diff_ball();
    let converged = res.norm() <= BALANCE_TOL;
    Ok(BalanceReport {
        constant: if sd > 0.0 { phi.distance_to_identity() / sd } else { 0.0 },
        phi,
        balanced: cur,
        residuals,
        steps,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Balance1d {
    pub v: f64,
    /// `F_{E+v}(+1)` and `F_{E+v}(-1)`.
    pub residual: [f64; 2],
}

/// Translation `v` with `|(E + v) ∩ [0, ∞)| = |E| / 2`, by bisection.
pub fn balance1d(e: &IntervalSet) -> Result<Balance1d> {
    let (Some(lo), Some(hi)) = (e.inf(), e.sup()) else {
        return Err(Error::Invalid("cannot balance the empty set".into()));
    };
    let m = e.measure();
    let g = |v: f64| (m - e.cumulative(-v)) - 0.5 * m;
    let (mut a, mut b) = (-hi, -lo);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if c == a || c == b {
            break;
        }
        if g(c) < 0.0 {
            a = c;
        } else {
            b = c;
        }
    }
    let v = 0.5 * (a + b);
    let plus = g(v);
    let minus = e.cumulative(-v) - 0.5 * m;
    Ok(Balance1d { v, residual: [plus, minus] })
}

#[derive(Clone, Debug)]
pub struct CenteredTriple {
    pub psi: AffineMap,
    pub v: [Vector3<f64>; 3],
    pub sets: [StarSet; 3],
    /// Norms of `π_1 F_1`, `π_2 F_1`, `π_1 F_2` after centering.
    pub residuals: [f64; 3],
}

/// Balance `E_1` in degrees one and two, then translate `E_2` to remove its
/// degree-one part, with translations summing to zero.
pub fn center_triple(e: &[StarSet; 3]) -> Result<CenteredTriple> {
    let d = e[0].dim();
    let rep = balance_affine(&e[0])?;
    let psi = AffineMap::new(d, rep.phi.linear, Vector3::zeros());
    let v1 = rep.phi.translation;
    let basis = V2Basis::new(e[1].grid().clone())?;
    let deg1 = basis.degree_range(1);
    let r2 = e[1].base_radius();
    let mut u = Vector3::zeros();
    let scale = r2.powi(d as i32 - 1);
    let pi1 = |set: &StarSet| -> DVector<f64> {
        let full = imbalance(&set.f_field(), &basis);
        full.rows(deg1.start, deg1.len()).into_owned()
    };
    // The degree-one block of the translation Jacobian is a multiple of the identity.
    let jd = generator_matrix(&basis, r2)[(deg1.start, d * d)];
    let mut res = pi1(&apply_affine(&e[1], &psi)?);
    for _ in 0..MAX_ITER {
        if res.norm() <= 1e-14 * scale {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-6 {
            let mut cand = u;
            for a in 0..d {
                cand[a] -= alpha * res[a] / jd;
            }
            let set = apply_affine(&e[1], &AffineMap::new(d, psi.linear, cand))?;
            let nr = pi1(&set);
            if nr.norm() < res.norm() {
                u = cand;
                res = nr;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let v = [v1, u, -v1 - u];
    let sets = [
        apply_affine(&e[0], &AffineMap::new(d, psi.linear, v[0]))?,
        apply_affine(&e[1], &AffineMap::new(d, psi.linear, v[1]))?,
        apply_affine(&e[2], &AffineMap::new(d, psi.linear, v[2]))?,
    ];
    let b0 = V2Basis::new(sets[0].grid().clone())?;
    let f0 = imbalance(&sets[0].f_field(), &b0);
    let r1 = f0.rows(deg1.start, deg1.len()).norm();
    let d2 = b0.degree_range(2);
    let r2n = f0.rows(d2.start, d2.len()).norm();
    let r3 = pi1(&sets[1]).norm();
    Ok(CenteredTriple { psi, v, sets, residuals: [r1, r2n, r3] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_dimension_and_gram() {
        let g = Arc::new(SphereGrid::circle(64).unwrap());
        let b = V2Basis::new(g).unwrap();
        assert_eq!(b.dim(), 5);
        assert!((b.gram() - DMatrix::identity(5, 5)).norm() < 1e-12);
        let g3 = Arc::new(SphereGrid::sphere(8, 16).unwrap());
        assert_eq!(V2Basis::new(g3).unwrap().dim(), 9);
    }

    #[test]
    fn generator_rank_matches_basis() {
        for g in [SphereGrid::circle(64).unwrap(), SphereGrid::sphere(8, 16).unwrap()] {
            let b = V2Basis::new(Arc::new(g)).unwrap();
            let j = generator_matrix(&b, 1.0);
            assert_eq!(j.rank(1e-10), b.dim());
        }
    }

    #[test]
    fn one_dimensional_balance() {
        let e = IntervalSet::normalize(&[(-1.0, 1.0), (2.0, 2.1)]).unwrap();
        let b = balance1d(&e).unwrap();
        assert!((b.v + 0.05).abs() < 1e-12);
        assert!(b.residual[0].abs() < 1e-10 && b.residual[1].abs() < 1e-10);
    }

    #[test]
    fn translated_ball_balances_to_translation() {
        let g = Arc::new(SphereGrid::circle(128).unwrap());
        let w = Vector3::new(0.01, -0.004, 0.0);
        let e = StarSet::from_radial(g, 1.0, |x| {
            let t = Vector3::new(x[0], x[1], 0.0);
            let p = w.dot(&t);
            p + (1.0 - w.norm_squared() + p * p).sqrt()
        })
        .unwrap();
        let rep = balance_affine(&e).unwrap();
        assert!(rep.converged, "{:?}", rep.residuals);
        assert!((rep.phi.translation + w).norm() < 1e-8);
    }
}
