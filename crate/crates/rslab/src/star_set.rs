//! Star-shaped sets given by radial functions sampled on a sphere grid, and
//! their boundary fields relative to a ball.

use crate::error::{check_finite, Error, Result};
use crate::grid_set::GridMask;
use crate::spectral::{boundary_weights, q_form, t_balls, RadiiTriple};
use crate::sphere::SphereGrid;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct StarSet {
    grid: Arc<SphereGrid>,
    radii: Vec<f64>,
    base_radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFields {
    /// `F = (ρ^d - r^d)/d`.
    pub f: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawStar {
    d: usize,
    r: f64,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none", default)]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    n_theta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    n_phi: Option<usize>,
    radii: Vec<f64>,
}

impl StarSet {
    pub fn new(grid: Arc<SphereGrid>, radii: Vec<f64>, base_radius: f64) -> Result<Self> {
        if radii.len() != grid.len() {
            return Err(Error::Invalid(format!("{} radii for a grid of {} nodes", radii.len(), grid.len())));
        }
        check_finite(base_radius, "base radius")?;
        if base_radius <= 0.0 {
            return Err(Error::Invalid(format!("base radius must be positive, got {base_radius}")));
        }
        for (k, &v) in radii.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Positivity { node: k, value: v });
            }
        }
        Ok(StarSet { grid, radii, base_radius })
    }

    pub fn ball(grid: Arc<SphereGrid>, r: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![r; n], r)
    }

    /// `ρ = (r^d + d s G)^{1/d}` for a nodal field `G`.
    pub fn from_field(grid: Arc<SphereGrid>, r: f64, g: &[f64], s: f64) -> Result<Self> {
        let d = grid.dim() as f64;
        let mut radii = Vec::with_capacity(g.len());
        for (k, gv) in g.iter().enumerate() {
            let v = r.powf(d) + d * s * gv;
            if !(v > 0.0) {
                return Err(Error::Positivity { node: k, value: v });
            }
            radii.push(v.powf(1.0 / d));
        }
        Self::new(grid, radii, r)
    }

    /// Perturbation of the ball of radius `r` by `s` times a degree-`n` harmonic.
    pub fn from_harmonic(grid: Arc<SphereGrid>, r: f64, n: usize, coeffs: &[f64], s: f64) -> Result<Self> {
        let g = grid.synthesize(n, coeffs)?;
        Self::from_field(grid, r, &g, s)
    }

    /// Star set with a radial function given in closed form.
    pub fn from_radial<F: Fn(&[f64; 3]) -> f64>(grid: Arc<SphereGrid>, r: f64, rho: F) -> Result<Self> {
        let radii = grid.nodes().iter().map(rho).collect();
        Self::new(grid, radii, r)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn base_radius(&self) -> f64 {
        self.base_radius
    }

    pub fn measure(&self) -> f64 {
        let d = self.dim() as i32;
        self.grid.weights().iter().zip(&self.radii).map(|(w, r)| w * r.powi(d)).sum::<f64>() / d as f64
    }

    pub fn f_field(&self) -> Vec<f64> {
        let d = self.dim() as i32;
        let rd = self.base_radius.powi(d);
        self.radii.iter().map(|r| (r.powi(d) - rd) / d as f64).collect()
    }

    pub fn fields(&self) -> BoundaryFields {
        let f = self.f_field();
        let plus = f.iter().map(|v| v.max(0.0)).collect();
        let minus = f.iter().map(|v| (-v).max(0.0)).collect();
        BoundaryFields { f, plus, minus }
    }

    pub fn project_harmonic(&self, n: usize) -> Result<Vec<f64>> {
        self.grid.project(&self.f_field(), n)
    }

    /// `|E Δ B_r| = ||F||_{L^1}`.
    pub fn sym_diff_ball(&self) -> f64 {
        let f = self.f_field();
        f.iter().zip(self.grid.weights()).map(|(v, w)| v.abs() * w).sum()
    }

    /// Radial function at an arbitrary direction by linear interpolation.
    pub fn radius_at(&self, x: &[f64; 3]) -> f64 {
        self.grid.interp_linear(&self.radii, x)
    }

    /// Cells whose centers lie inside the interpolated boundary.
    pub fn to_mask(&self, h: f64) -> Result<GridMask> {
        let rmax = self.radii.iter().copied().fold(0.0, f64::max);
        let half = (rmax / h).ceil() as usize + 1;
        GridMask::from_fn(self.dim(), h, [half; 3], |x| {
            let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            n == 0.0 || n <= self.radius_at(&x)
        })
    }

    pub fn to_json(&self) -> String {
        let (a, b) = self.grid.shape();
        let raw = if self.dim() == 2 {
            RawStar { d: 2, r: self.base_radius, m: Some(a), n_theta: None, n_phi: None, radii: self.radii.clone() }
        } else {
            RawStar { d: 3, r: self.base_radius, m: None, n_theta: Some(a), n_phi: Some(b), radii: self.radii.clone() }
        };
        serde_json::to_string(&raw).expect("serializable")
    }

    /// Parses `{"d":2,"r":1.0,"M":512,"radii":[...]}` (or `n_theta`, `n_phi` for `d = 3`).
    pub fn from_json(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s)?;
        let raw: RawStar = serde_json::from_value(v)?;
        let grid = match raw.d {
            2 => SphereGrid::circle(raw.m.unwrap_or(raw.radii.len()))?,
            3 => {
                let nt = raw.n_theta.ok_or_else(|| Error::Invalid("d = 3 star set needs n_theta".into()))?;
                let np = raw.n_phi.ok_or_else(|| Error::Invalid("d = 3 star set needs n_phi".into()))?;
                SphereGrid::sphere(nt, np)?
            }
            d => return Err(Error::Invalid(format!("star sets exist for d = 2, 3, not {d}"))),
        };
        Self::new(Arc::new(grid), raw.radii, raw.r)
    }
}

/// `T_balls - ½ Σ γ_k r_k^{1-d} (||F_k^+||² + ||F_k^-||²) + Q(F_1, F_2, F_3)`.
pub fn second_order_bound(e: &[StarSet; 3], r: &RadiiTriple) -> Result<f64> {
    let d = e[0].dim();
    for (k, ek) in e.iter().enumerate() {
        if ek.dim() != d || ek.grid().len() != e[0].grid().len() {
            return Err(Error::Invalid("star sets must share one grid".into()));
        }
        if (ek.base_radius() - r.r[k]).abs() > 1e-12 * r.r[k] {
            return Err(Error::Invalid(format!(
                "set {k} has base radius {} but the triple has {}",
                ek.base_radius(),
                r.r[k]
            )));
        }
    }
    let grid = e[0].grid();
    let w = boundary_weights(r, d);
    let fields: Vec<BoundaryFields> = e.iter().map(StarSet::fields).collect();
    let mut bound = t_balls(r, d);
    for k in 0..3 {
        bound -= 0.5 * w[k] * (grid.norm2(&fields[k].plus) + grid.norm2(&fields[k].minus));
    }
    bound += q_form(grid, [&fields[0].f, &fields[1].f, &fields[2].f], r);
    Ok(bound)
}
