//! Probe of the slice-center polynomial `P♯(G)(x') = Σ_j P_j(x'_j)` on `Σ`.
//!
//! `P_j(x') = r_j^{2-d-n} x_d^{-1} G_{j,o}(x', x_d)` with `x_d = (r_j^2 - |x'|^2)^{1/2}`,
//! where `G_{j,o}` is the part of `G_j` odd in `x_d`. By homogeneity this equals
//! `r_j^{2-d} (g(u) - g(ū)) / (2 x_d)` for the restriction `g` of `G_j` to the
//! unit sphere, `u = (x', x_d)/r_j` and `ū` its reflection in `x_d`.

use super::RadiiTriple;
use crate::error::{Error, Result};
use crate::sphere::{degree_dim, SphereGrid};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, PartialEq)]
pub struct PsharpReport {
    /// Largest RMS of `P♯` over the sampled rotations.
    pub probe: f64,
    /// RMS of `P♯` minus its best affine fit, at the maximizing rotation.
    pub nonaffine: f64,
    /// Index of the maximizing rotation (0 is the identity).
    pub best_trial: usize,
}

/// Haar-random orthogonal matrix acting on the first `d` coordinates.
pub fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Matrix3::identity();
    for j in 0..d {
        let sgn = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            out[(i, j)] = q[(i, j)] * sgn;
        }
    }
    out
}

fn eval_harmonic(d: usize, n: usize, coeffs: &[f64], x: &[f64; 3]) -> f64 {
    SphereGrid::basis_at(d, n, x).iter().zip(coeffs).map(|(b, c)| b * c).sum()
}

/// Sample points `(x'_1, x'_2)` of a neighborhood of the origin in `Σ`.
fn sample_points(d: usize, eps: f64) -> Vec<Vec<f64>> {
    let k = if d == 2 { 21 } else { 7 };
    let vals: Vec<f64> = (0..k).map(|i| -eps + 2.0 * eps * i as f64 / (k - 1) as f64).collect();
    let dim = 2 * (d - 1);
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        out.push(idx.iter().map(|&i| vals[i]).collect());
        let mut p = 0;
        while p < dim {
            idx[p] += 1;
            if idx[p] < k {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
        if p == dim {
            return out;
        }
    }
}

/// Full report of the probe; see [`psharp_probe`].
pub fn psharp_report(
    g: &[Vec<f64>; 3],
    n: usize,
    r: &RadiiTriple,
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<PsharpReport> {
    if !(d == 2 || d == 3) || n < 2 {
        return Err(Error::Invalid(format!("psharp needs d in {{2,3}} and n >= 2, got d={d}, n={n}")));
    }
    for gj in g {
        if gj.len() != degree_dim(d, n) {
            return Err(Error::Invalid(format!("degree {n} needs {} coefficients", degree_dim(d, n))));
        }
    }
    let rmin = r.r.iter().copied().fold(f64::INFINITY, f64::min);
    let pts = sample_points(d, 0.3 * rmin);
    let dm = d - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = PsharpReport { probe: 0.0, nonaffine: 0.0, best_trial: 0 };
    for trial in 0..trials.max(1) {
        let o = if trial == 0 { Matrix3::identity() } else { random_rotation(d, &mut rng) };
        let p_j = |j: usize, xp: &[f64]| -> f64 {
            let rj = r.r[j];
            let q: f64 = xp.iter().map(|v| v * v).sum();
            let xd = (rj * rj - q).sqrt();
            let mut u = [0.0; 3];
            u[..dm].copy_from_slice(xp);
            u[dm] = xd;
            let mut ubar = u;
            ubar[dm] = -xd;
            let rot = |v: [f64; 3]| {
                let w = o * nalgebra::Vector3::from(v) / rj;
                [w[0], w[1], w[2]]
            };
            let odd = 0.5
                * (eval_harmonic(d, n, &g[j], &rot(u)) - eval_harmonic(d, n, &g[j], &rot(ubar)));
            rj.powi(2 - d as i32) * odd / xd
        };
        let vals: Vec<f64> = pts
            .iter()
            .map(|p| {
                let x1 = &p[..dm];
                let x2 = &p[dm..];
                let x3: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| -a - b).collect();
                p_j(0, x1) + p_j(1, x2) + p_j(2, &x3)
            })
            .collect();
        let m = vals.len() as f64;
        let rms = (vals.iter().map(|v| v * v).sum::<f64>() / m).sqrt();
        if trial == 0 || rms > best.probe {
            let a = DMatrix::from_fn(pts.len(), 1 + 2 * dm, |i, c| if c == 0 { 1.0 } else { pts[i][c - 1] });
            let b = DVector::from_vec(vals.clone());
            let coef = a.clone().svd(true, true).solve(&b, 1e-12).expect("svd solve");
            let res = b - a * coef;
            best = PsharpReport { probe: rms, nonaffine: (res.norm_squared() / m).sqrt(), best_trial: trial };
        }
    }
    Ok(best)
}

/// Maximum over seeded rotations of the RMS of `P♯(O(G))` near the origin of `Σ`.
pub fn psharp_probe(g: &[Vec<f64>; 3], n: usize, r: &RadiiTriple, d: usize, trials: usize) -> Result<f64> {
    Ok(psharp_report(g, n, r, d, trials, 0)?.probe)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: RadiiTriple = RadiiTriple { r: [1.0, 1.0, 1.0] };

    #[test]
    fn zero_triple_gives_zero() {
        let z = [vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
        assert_eq!(psharp_probe(&z, 3, &UNIT, 2, 5).unwrap(), 0.0);
    }

    #[test]
    fn degree_two_with_first_field_zero() {
        let g = [vec![0.0; 2], vec![1.0, 0.0], vec![0.0; 2]];
        assert!(psharp_probe(&g, 2, &UNIT, 2, 8).unwrap() > 1e-3);
        let g3 = [vec![0.0; 5], vec![0.0, 0.0, 1.0, 0.0, 0.0], vec![0.0; 5]];
        assert!(psharp_probe(&g3, 2, &UNIT, 3, 8).unwrap() > 1e-3);
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = random_rotation(3, &mut rng);
        assert!((o.transpose() * o - Matrix3::identity()).norm() < 1e-12);
    }
}
