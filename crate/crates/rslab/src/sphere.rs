//! Quadrature grids on `S^1` and `S^2` with orthonormal real harmonics.
//!
//! On the circle the basis of degree `n >= 1` is `cos nθ/√π, sin nθ/√π` and
//! the constant is `1/√(2π)`. On the sphere the degree-`n` block holds the
//! `2n + 1` real spherical harmonics ordered `m = -n..=n`, negative `m` for
//! the sine family. All bases are orthonormal for surface measure.

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
enum Layout {
    Circle { m: usize },
    LatLon { n_theta: usize, n_phi: usize, cos_theta: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct SphereGrid {
    d: usize,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
    n_max: usize,
    layout: Layout,
}

/// Fully normalized associated Legendre values `P̄_n^m(x)` for `0 <= m <= n <= nmax`,
/// stored at `n(n+1)/2 + m`. Includes the `1/√(4π)` factor, no Condon-Shortley phase.
pub fn normalized_plm(nmax: usize, x: f64) -> Vec<f64> {
    let idx = |n: usize, m: usize| n * (n + 1) / 2 + m;
    let mut p = vec![0.0; idx(nmax, nmax) + 1];
    let s = (1.0 - x * x).max(0.0).sqrt();
    p[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=nmax {
        let mf = m as f64;
        p[idx(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[idx(m - 1, m - 1)];
    }
    for m in 0..nmax {
        let mf = m as f64;
        p[idx(m + 1, m)] = (2.0 * mf + 3.0).sqrt() * x * p[idx(m, m)];
        for n in m + 2..=nmax {
            let nf = n as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0).powi(2) - mf * mf) / (4.0 * (nf - 1.0).powi(2) - 1.0)).sqrt();
            p[idx(n, m)] = a * (x * p[idx(n - 1, m)] - b * p[idx(n - 2, m)]);
        }
    }
    p
}

/// Number of basis functions of degree `n`.
pub fn degree_dim(d: usize, n: usize) -> usize {
    match (d, n) {
        (2, 0) => 1,
        (2, _) => 2,
        _ => 2 * n + 1,
    }
}

/// Surface area of `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {d} unsupported"),
    }
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("dimension {d} unsupported"),
    }
}

fn spherical_angles(x: &[f64; 3]) -> (f64, f64) {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let ct = (x[2] / r).clamp(-1.0, 1.0);
    (ct, x[1].atan2(x[0]))
}

impl SphereGrid {
    /// `m` equally spaced nodes on the circle.
    pub fn circle(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::Invalid(format!("circle grid needs at least 3 nodes, got {m}")));
        }
        let nodes = (0..m)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / m as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect();
        Ok(SphereGrid {
            d: 2,
            nodes,
            weights: vec![2.0 * PI / m as f64; m],
            n_max: ((m - 1) / 2).min(200),
            layout: Layout::Circle { m },
        })
    }

    /// Gauss-Legendre in `cos θ` times uniform azimuth.
    pub fn sphere(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 3 {
            return Err(Error::Invalid(format!("sphere grid {n_theta}x{n_phi} too small")));
        }
        let (ct, wt) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).sqrt();
            for j in 0..n_phi {
                let ph = 2.0 * PI * j as f64 / n_phi as f64;
                nodes.push([s * ph.cos(), s * ph.sin(), *c]);
                weights.push(w * 2.0 * PI / n_phi as f64);
            }
        }
        Ok(SphereGrid {
            d: 3,
            nodes,
            weights,
            n_max: (n_theta - 1).min((n_phi - 1) / 2).min(100),
            layout: Layout::LatLon { n_theta, n_phi, cos_theta: ct },
        })
    }

    /// Default grid: 512 nodes on the circle, 128 x 256 on the sphere.
    pub fn default_for(d: usize) -> Result<Self> {
        match d {
            2 => Self::circle(512),
            3 => Self::sphere(128, 256),
            _ => Err(Error::Invalid(format!("sphere grids exist for d = 2, 3, not {d}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Circle node count, or `(n_theta, n_phi)` flattened as `n_theta * n_phi`.
    pub fn shape(&self) -> (usize, usize) {
        match &self.layout {
            Layout::Circle { m } => (*m, 1),
            Layout::LatLon { n_theta, n_phi, .. } => (*n_theta, *n_phi),
        }
    }

    pub fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::Invalid(format!("degree {n} exceeds grid limit {}", self.n_max)));
        }
        Ok(())
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    pub fn norm2(&self, f: &[f64]) -> f64 {
        self.inner(f, f)
    }

    /// Values of the degree-`n` basis at a point (need not be unit length).
    pub fn basis_at(d: usize, n: usize, x: &[f64; 3]) -> Vec<f64> {
        if d == 2 {
            let th = x[1].atan2(x[0]);
            if n == 0 {
                return vec![1.0 / (2.0 * PI).sqrt()];
            }
            let nf = n as f64;
            let c = 1.0 / PI.sqrt();
            return vec![c * (nf * th).cos(), c * (nf * th).sin()];
        }
        let (ct, ph) = spherical_angles(x);
        let p = normalized_plm(n, ct);
        let base = n * (n + 1) / 2;
        let mut out = vec![0.0; 2 * n + 1];
        out[n] = p[base];
        for m in 1..=n {
            let v = std::f64::consts::SQRT_2 * p[base + m];
            let mf = m as f64;
            out[n + m] = v * (mf * ph).cos();
            out[n - m] = v * (mf * ph).sin();
        }
        out
    }

    /// Nodal values of the degree-`n` harmonic with the given coefficients.
    pub fn synthesize(&self, n: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_degree(n)?;
        if coeffs.len() != degree_dim(self.d, n) {
            return Err(Error::Invalid(format!(
                "degree {n} needs {} coefficients, got {}",
                degree_dim(self.d, n),
                coeffs.len()
            )));
        }
        Ok(self
            .nodes
            .iter()
            .map(|x| {
                Self::basis_at(self.d, n, x).iter().zip(coeffs).map(|(b, c)| b * c).sum()
            })
            .collect())
    }

    /// Coefficients of the degree-`n` projection of a nodal field.
    pub fn project(&self, f: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_degree(n)?;
        Ok(self.project_all(f, n).pop().unwrap())
    }

    /// Projections onto all degrees `0..=nmax` (capped at the grid limit).
    pub fn project_all(&self, f: &[f64], nmax: usize) -> Vec<Vec<f64>> {
        assert_eq!(f.len(), self.nodes.len(), "field length must match the grid");
        let nmax = nmax.min(self.n_max);
        match &self.layout {
            Layout::Circle { m } => {
                let m = *m;
                let w = 2.0 * PI / m as f64;
                let mut out = Vec::with_capacity(nmax + 1);
                out.push(vec![f.iter().sum::<f64>() * w / (2.0 * PI).sqrt()]);
                let c = w / PI.sqrt();
                for n in 1..=nmax {
                    let (mut a, mut b) = (0.0, 0.0);
                    for (k, v) in f.iter().enumerate() {
                        let th = 2.0 * PI * ((n * k) % m) as f64 / m as f64;
                        a += v * th.cos();
                        b += v * th.sin();
                    }
                    out.push(vec![a * c, b * c]);
                }
                out
            }
            Layout::LatLon { n_theta, n_phi, cos_theta } => {
                let (nt, np) = (*n_theta, *n_phi);
                // Azimuthal transform per ring.
                let mut ring_cos = vec![vec![0.0; nmax + 1]; nt];
                let mut ring_sin = vec![vec![0.0; nmax + 1]; nt];
                for i in 0..nt {
                    let row = &f[i * np..(i + 1) * np];
                    for m in 0..=nmax {
                        let (mut a, mut b) = (0.0, 0.0);
                        for (j, v) in row.iter().enumerate() {
                            let ph = 2.0 * PI * ((m * j) % np) as f64 / np as f64;
                            a += v * ph.cos();
                            b += v * ph.sin();
                        }
                        ring_cos[i][m] = a;
                        ring_sin[i][m] = b;
                    }
                }
                let mut out: Vec<Vec<f64>> = (0..=nmax).map(|n| vec![0.0; 2 * n + 1]).collect();
                for i in 0..nt {
                    let wring = self.weights[i * np];
                    let p = normalized_plm(nmax, cos_theta[i]);
                    for (n, coeffs) in out.iter_mut().enumerate() {
                        let base = n * (n + 1) / 2;
                        coeffs[n] += wring * p[base] * ring_cos[i][0];
                        for m in 1..=n {
                            let v = wring * std::f64::consts::SQRT_2 * p[base + m];
                            coeffs[n + m] += v * ring_cos[i][m];
                            coeffs[n - m] += v * ring_sin[i][m];
                        }
                    }
                }
                out
            }
        }
    }

    /// Linear interpolation of a nodal field in angle (periodic on the circle,
    /// bilinear in colatitude and azimuth on the sphere).
    pub fn interp_linear(&self, f: &[f64], x: &[f64; 3]) -> f64 {
        match &self.layout {
            Layout::Circle { m } => {
                let m = *m;
                let mut th = x[1].atan2(x[0]);
                if th < 0.0 {
                    th += 2.0 * PI;
                }
                let u = th / (2.0 * PI) * m as f64;
                let k = (u.floor() as usize) % m;
                let lam = u - u.floor();
                (1.0 - lam) * f[k] + lam * f[(k + 1) % m]
            }
            Layout::LatLon { n_theta, n_phi, cos_theta } => {
                let (nt, np) = (*n_theta, *n_phi);
                let (ct, mut ph) = spherical_angles(x);
                if ph < 0.0 {
                    ph += 2.0 * PI;
                }
                let u = ph / (2.0 * PI) * np as f64;
                let j = (u.floor() as usize) % np;
                let mu = u - u.floor();
                let ring = |i: usize| (1.0 - mu) * f[i * np + j] + mu * f[i * np + (j + 1) % np];
                let pole = |i: usize| f[i * np..(i + 1) * np].iter().sum::<f64>() / np as f64;
                let th = ct.acos();
                let ths: Vec<f64> = cos_theta.iter().map(|c| c.acos()).collect();
                // cos_theta ascends, so colatitudes descend.
                if th >= ths[0] {
                    let lam = (th - ths[0]) / (PI - ths[0]);
                    return (1.0 - lam) * ring(0) + lam * pole(0);
                }
                if th <= ths[nt - 1] {
                    let lam = th / ths[nt - 1];
                    return lam * ring(nt - 1) + (1.0 - lam) * pole(nt - 1);
                }
                let i = ths.partition_point(|&t| t > th);
                let lam = (ths[i - 1] - th) / (ths[i - 1] - ths[i]);
                (1.0 - lam) * ring(i - 1) + lam * ring(i)
            }
        }
    }
}

/// Band-limited expansion of a nodal field, evaluable at any direction.
#[derive(Clone, Debug)]
pub struct SpectralField {
    d: usize,
    coeffs: Vec<Vec<f64>>,
}

impl SpectralField {
    pub fn new(grid: &SphereGrid, f: &[f64]) -> Self {
        SpectralField { d: grid.dim(), coeffs: grid.project_all(f, grid.n_max()) }
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        let nmax = self.coeffs.len() - 1;
        if self.d == 2 {
            let th = x[1].atan2(x[0]);
            let mut s = self.coeffs[0][0] / (2.0 * PI).sqrt();
            let c = 1.0 / PI.sqrt();
            for n in 1..=nmax {
                let nf = n as f64;
                s += c * (self.coeffs[n][0] * (nf * th).cos() + self.coeffs[n][1] * (nf * th).sin());
            }
            return s;
        }
        let (ct, ph) = spherical_angles(x);
        let p = normalized_plm(nmax, ct);
        let mut col = vec![(1.0, 0.0); nmax + 1];
        for (m, cs) in col.iter_mut().enumerate().skip(1) {
            let a = m as f64 * ph;
            *cs = (a.cos(), a.sin());
        }
        let mut s = 0.0;
        for (n, c) in self.coeffs.iter().enumerate() {
            let base = n * (n + 1) / 2;
            s += c[n] * p[base];
            for m in 1..=n {
                let v = std::f64::consts::SQRT_2 * p[base + m];
                s += v * (c[n + m] * col[m].0 + c[n - m] * col[m].1);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_area() {
        let c = SphereGrid::circle(512).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(c.n_max(), 200);
        let s = SphereGrid::sphere(16, 32).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_basis_is_orthonormal() {
        let g = SphereGrid::sphere(12, 24).unwrap();
        let nmax = 6;
        let mut fields = Vec::new();
        for n in 0..=nmax {
            for k in 0..degree_dim(3, n) {
                let mut c = vec![0.0; degree_dim(3, n)];
                c[k] = 1.0;
                fields.push(g.synthesize(n, &c).unwrap());
            }
        }
        for (i, f) in fields.iter().enumerate() {
            for (j, h) in fields.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.inner(f, h) - want).abs() < 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn projection_recovers_coefficients() {
        let g = SphereGrid::circle(64).unwrap();
        let f = g.synthesize(5, &[0.3, -1.2]).unwrap();
        let c = g.project(&f, 5).unwrap();
        assert!((c[0] - 0.3).abs() < 1e-13 && (c[1] + 1.2).abs() < 1e-13);
        assert!(g.project(&f, 40).is_err());
        let s = SphereGrid::sphere(10, 20).unwrap();
        let f = s.synthesize(3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        let c = s.project(&f, 3).unwrap();
        assert!((c[6] - 0.7).abs() < 1e-12 && (c[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn spectral_field_interpolates() {
        let s = SphereGrid::sphere(10, 20).unwrap();
        let f = s.synthesize(2, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let sf = SpectralField::new(&s, &f);
        let x = [0.3, -0.5, 0.81];
        let want: f64 = SphereGrid::basis_at(3, 2, &x)
            .iter()
            .zip([0.1, 0.2, 0.3, 0.4, 0.5])
            .map(|(b, c)| b * c)
            .sum();
        assert!((sf.eval(&x) - want).abs() < 1e-12);
    }
}
