//! Ball kernels and the spectral constants of the second variation.
//!
//! For radii `(r_1, r_2, r_3)` and `{i, j, k}` distinct, `K_k = 1_{B_i} * 1_{B_j}`
//! is radial with boundary slope `γ_k` at `|x| = r_k`, and the cap operator
//! `S_{ρ_k}` acts on degree-`n` harmonics by the scalar `λ_{k,n}`.

use crate::error::{Error, Result};
use crate::quad::{adaptive_split, gauss_legendre, legendre};
use crate::sphere::{ball_volume, sphere_area, SphereGrid};
use nalgebra::{Matrix3, SymmetricEigen};
use std::f64::consts::PI;

pub mod psharp;
pub use psharp::{psharp_probe, PsharpReport};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiiTriple {
    pub r: [f64; 3],
}

/// The two indices other than `k`, in cyclic order.
pub fn others(k: usize) -> (usize, usize) {
    ((k + 1) % 3, (k + 2) % 3)
}

impl RadiiTriple {
    pub fn new(r: [f64; 3]) -> Result<Self> {
        for &x in &r {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::Invalid(format!("radii must be positive, got {r:?}")));
            }
        }
        Ok(RadiiTriple { r })
    }

    /// Strict admissibility margin: `r_k <= (1 - ρ)(r_i + r_j)` and `min >= ρ max`.
    pub fn is_admissible(&self, rho: f64) -> bool {
        let r = self.r;
        let mx = r.iter().copied().fold(0.0, f64::max);
        let mn = r.iter().copied().fold(f64::INFINITY, f64::min);
        (0..3).all(|k| {
            let (i, j) = others(k);
            r[k] <= (1.0 - rho) * (r[i] + r[j])
        }) && mn >= rho * mx
    }

    /// Largest `ρ` for which the triple is strictly admissible.
    pub fn admissibility_margin(&self) -> f64 {
        let r = self.r;
        let mx = r.iter().copied().fold(0.0, f64::max);
        let mn = r.iter().copied().fold(f64::INFINITY, f64::min);
        let tri = (0..3)
            .map(|k| {
                let (i, j) = others(k);
                1.0 - r[k] / (r[i] + r[j])
            })
            .fold(f64::INFINITY, f64::min);
        tri.min(mn / mx)
    }

    pub fn require_admissible(&self) -> Result<()> {
        if self.admissibility_margin() <= 0.0 {
            return Err(Error::Invalid(format!("radii {:?} are not strictly admissible", self.r)));
        }
        Ok(())
    }

    /// `ρ_k = (r_k^2 - r_i^2 - r_j^2) / (2 r_i r_j)`, clamped to `[-1, 1]`.
    pub fn rho(&self, k: usize) -> f64 {
        let (i, j) = others(k);
        let r = self.r;
        ((r[k] * r[k] - r[i] * r[i] - r[j] * r[j]) / (2.0 * r[i] * r[j])).clamp(-1.0, 1.0)
    }

    /// The triple of equal-measure radii for sets of the given measures.
    pub fn from_measures(m: [f64; 3], d: usize) -> Result<Self> {
        let w = ball_volume(d);
        Self::new(m.map(|v| (v / w).powf(1.0 / d as f64)))
    }
}

/// `|B_{r_i} ∩ (B_{r_j} + s e)|` in dimension `d`.
pub fn lens_volume(ri: f64, rj: f64, s: f64, d: usize) -> f64 {
    let s = s.abs();
    if s >= ri + rj {
        return 0.0;
    }
    let small = ri.min(rj);
    if s <= (ri - rj).abs() {
        return ball_volume(d) * small.powi(d as i32);
    }
    match d {
        1 => (ri.min(s + rj) - (-ri).max(s - rj)).max(0.0),
        2 => {
            let a = ((s * s + ri * ri - rj * rj) / (2.0 * s * ri)).clamp(-1.0, 1.0).acos();
            let b = ((s * s + rj * rj - ri * ri) / (2.0 * s * rj)).clamp(-1.0, 1.0).acos();
            let k = ((-s + ri + rj) * (s + ri - rj) * (s - ri + rj) * (s + ri + rj)).max(0.0);
            ri * ri * a + rj * rj * b - 0.5 * k.sqrt()
        }
        3 => {
            let t = ri + rj - s;
            PI * t * t * (s * s + 2.0 * s * (ri + rj) - 3.0 * (ri - rj).powi(2)) / (12.0 * s)
        }
        _ => panic!("dimension {d} unsupported"),
    }
}

/// Boundary slope `γ_k = |∇K_k|` at `|x| = r_k`.
pub fn gamma(r: &RadiiTriple, k: usize, d: usize) -> f64 {
    let (i, j) = others(k);
    let (ri, rj, rk) = (r.r[i], r.r[j], r.r[k]);
    let z = (ri * ri - rj * rj + rk * rk) / (2.0 * rk);
    let y = (ri * ri - z * z).max(0.0).sqrt();
    ball_volume(d - 1) * y.powi(d as i32 - 1)
}

pub fn gammas(r: &RadiiTriple, d: usize) -> [f64; 3] {
    [0, 1, 2].map(|k| gamma(r, k, d))
}

/// Weights `γ_k r_k^{1-d}` of the boundary term.
pub fn boundary_weights(r: &RadiiTriple, d: usize) -> [f64; 3] {
    [0, 1, 2].map(|k| gamma(r, k, d) * r.r[k].powi(1 - d as i32))
}

/// `T(B_1, B_2, B_3) = |S^{d-1}| ∫_0^{r_3} lens(r_1, r_2, s) s^{d-1} ds`.
pub fn t_balls(r: &RadiiTriple, d: usize) -> f64 {
    let [r1, r2, r3] = r.r;
    let mut breaks = vec![0.0, r3];
    for b in [(r1 - r2).abs(), r1 + r2] {
        if b > 0.0 && b < r3 {
            breaks.push(b);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let scale = ball_volume(d).powi(2) * (r1 * r2 * r3).powi(d as i32);
    let f = |s: f64| lens_volume(r1, r2, s, d) * s.powi(d as i32 - 1);
    sphere_area(d) * adaptive_split(f, &breaks, 1e-14 * scale)
}

/// Eigenvalue of the cap operator `S_ρ` on degree-`n` harmonics.
pub fn lambda_n(rho: f64, n: usize, d: usize) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    match d {
        2 => {
            let a = rho.acos();
            if n == 0 {
                2.0 * PI - 2.0 * a
            } else {
                -(2.0 / n as f64) * (n as f64 * a).sin()
            }
        }
        3 => {
            let (x, w) = gauss_legendre(256);
            let half = 0.5 * (rho + 1.0);
            let mid = 0.5 * (rho - 1.0);
            let s: f64 = x.iter().zip(&w).map(|(t, wt)| wt * legendre(n, mid + half * t).0).sum();
            2.0 * PI * half * s
        }
        _ => panic!("dimension {d} unsupported"),
    }
}

/// `[λ_{1,n}, λ_{2,n}, λ_{3,n}]`.
pub fn lambdas(r: &RadiiTriple, n: usize, d: usize) -> [f64; 3] {
    [0, 1, 2].map(|k| lambda_n(r.rho(k), n, d))
}

fn coupling_matrix(r: &RadiiTriple, n: usize, d: usize) -> Matrix3<f64> {
    let l = lambdas(r, n, d);
    let mut m = Matrix3::zeros();
    for (k, lk) in l.iter().enumerate() {
        let (i, j) = others(k);
        m[(i, j)] = 0.5 * lk;
        m[(j, i)] = 0.5 * lk;
    }
    m
}

fn max_eig(m: Matrix3<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest generalized eigenvalue of `(M, D)` with `D = diag(γ_k r_k^{1-d})`.
pub fn an_max(r: &RadiiTriple, n: usize, d: usize) -> f64 {
    let w = boundary_weights(r, d);
    let mut m = coupling_matrix(r, n, d);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] /= (w[i] * w[j]).sqrt();
        }
    }
    max_eig(m)
}

/// Spectral radius of the unweighted coupling matrix, so `|Q| <= Λ_n Σ ||G_j||^2`.
pub fn big_lambda_n(r: &RadiiTriple, n: usize, d: usize) -> f64 {
    SymmetricEigen::new(coupling_matrix(r, n, d))
        .eigenvalues
        .iter()
        .fold(0.0, |a: f64, v| a.max(v.abs()))
}

/// Degree-2 constant with the first field frozen at zero.
pub fn a2_reduced(r: &RadiiTriple, d: usize) -> f64 {
    let w = boundary_weights(r, d);
    0.5 * lambda_n(r.rho(0), 2, d).abs() / (w[1] * w[2]).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenRow {
    pub n: usize,
    pub lambda: [f64; 3],
    pub a_n: f64,
    pub big_lambda: f64,
}

pub fn eigen_table(r: &RadiiTriple, d: usize, nmax: usize) -> Vec<EigenRow> {
    (0..=nmax)
        .map(|n| EigenRow {
            n,
            lambda: lambdas(r, n, d),
            a_n: an_max(r, n, d),
            big_lambda: big_lambda_n(r, n, d),
        })
        .collect()
}

pub fn write_eigen_csv<W: std::io::Write>(rows: &[EigenRow], mut w: W) -> Result<()> {
    writeln!(w, "n,lambda1,lambda2,lambda3,A_n,Lambda_n")?;
    for e in rows {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{:?}",
            e.n, e.lambda[0], e.lambda[1], e.lambda[2], e.a_n, e.big_lambda
        )?;
    }
    Ok(())
}

/// `Q(F_1, F_2, F_3) = Σ_n Σ_cyc λ_{k,n} <π_n F_i, π_n F_j>` for nodal fields.
pub fn q_form(grid: &SphereGrid, f: [&[f64]; 3], r: &RadiiTriple) -> f64 {
    let d = grid.dim();
    let nmax = grid.n_max();
    let proj: Vec<Vec<Vec<f64>>> = f.iter().map(|fi| grid.project_all(fi, nmax)).collect();
    let mut q = 0.0;
    for n in 0..=nmax {
        let l = lambdas(r, n, d);
        for (k, lk) in l.iter().enumerate() {
            let (i, j) = others(k);
            let dot: f64 = proj[i][n].iter().zip(&proj[j][n]).map(|(a, b)| a * b).sum();
            q += lk * dot;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: RadiiTriple = RadiiTriple { r: [1.0, 1.0, 1.0] };

    #[test]
    fn lens_closed_form_values() {
        let v = lens_volume(1.0, 1.0, 1.0, 2);
        assert!((v - (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0)).abs() < 1e-14);
        assert_eq!(lens_volume(1.0, 1.0, 1.0, 1), 1.0);
        assert!((lens_volume(1.0, 1.0, 0.0, 3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((lens_volume(1.0, 1.0, 1e-9, 3) - 4.0 * PI / 3.0).abs() < 1e-8);
        assert_eq!(lens_volume(1.0, 0.5, 1.6, 2), 0.0);
    }

    #[test]
    fn gamma_unit_values() {
        assert_eq!(gamma(&UNIT, 0, 1), 1.0);
        assert!((gamma(&UNIT, 2, 2) - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn cap_eigenvalues_at_minus_half() {
        let s3 = 3f64.sqrt();
        assert!((lambda_n(-0.5, 1, 2) + s3).abs() < 1e-14);
        assert!((lambda_n(-0.5, 2, 2) - s3 / 2.0).abs() < 1e-14);
        assert!(lambda_n(-0.5, 3, 2).abs() < 1e-14);
        assert!((lambda_n(-0.5, 4, 2) + s3 / 4.0).abs() < 1e-14);
        assert!((lambda_n(0.3, 1, 3) - PI * (0.09 - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn unit_triple_constants() {
        assert!((an_max(&UNIT, 1, 2) - 0.5).abs() < 1e-13);
        assert!((an_max(&UNIT, 2, 2) - 0.5).abs() < 1e-13);
        assert!(an_max(&UNIT, 3, 2).abs() < 1e-13);
        assert!((an_max(&UNIT, 4, 2) - 0.125).abs() < 1e-13);
        assert!((a2_reduced(&UNIT, 2) - 0.25).abs() < 1e-13);
        assert!((t_balls(&UNIT, 1) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn admissibility() {
        assert!(UNIT.is_admissible(0.05));
        let bad = RadiiTriple::new([1.0, 1.0, 2.0]).unwrap();
        assert!(!bad.is_admissible(0.0) || bad.admissibility_margin() <= 0.0);
        assert!(bad.require_admissible().is_err());
    }
}
