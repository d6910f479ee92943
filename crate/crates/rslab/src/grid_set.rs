//! Boolean cell masks on cubic lattices in `d = 2, 3`, Steiner
//! symmetrization, lattice ball rearrangement and the discrete trilinear
//! functional.
//!
//! A cell with lattice coordinate `c` (integer offset from the origin cell)
//! has center `c h`. Masks store a dense box; `extent` is its size and
//! `origin` the box index of lattice coordinate 0.

use crate::error::{check_finite, Error, Result};
use crate::sphere::ball_volume;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex64, FftPlanner};
use std::collections::HashMap;
use std::io::{Read, Write};

/// Upper bound on the number of cells of one mask.
pub const MAX_CELLS: usize = 1 << 27;
/// Upper bound on complex samples used by the transform in [`t_grid`].
pub const MAX_FFT: usize = 1 << 25;

pub type Lattice = [i64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct GridMask {
    d: usize,
    h: f64,
    extent: [usize; 3],
    origin: [i64; 3],
    cells: Vec<bool>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("grid masks exist for d = 2, 3, not {d}")))
    }
}

impl GridMask {
    pub fn new(d: usize, h: f64, extent: [usize; 3], origin: [i64; 3]) -> Result<Self> {
        check_dim(d)?;
        check_finite(h, "grid spacing")?;
        if h <= 0.0 {
            return Err(Error::Invalid(format!("grid spacing must be positive, got {h}")));
        }
        let mut extent = extent;
        let mut origin = origin;
        if d == 2 {
            extent[2] = 1;
            origin[2] = 0;
        }
        let cells = extent.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).unwrap_or(usize::MAX);
        if cells > MAX_CELLS {
            return Err(Error::Memory { cells, limit: MAX_CELLS });
        }
        Ok(GridMask { d, h, extent, origin, cells: vec![false; cells] })
    }

    /// Symmetric box of half-widths `half` with cells filled where `f(center)` holds.
    pub fn from_fn<F: Fn([f64; 3]) -> bool>(d: usize, h: f64, half: [usize; 3], f: F) -> Result<Self> {
        let mut half = half;
        if d == 2 {
            half[2] = 0;
        }
        let extent = half.map(|x| 2 * x + 1);
        let origin = half.map(|x| x as i64);
        let mut m = Self::new(d, h, extent, origin)?;
        for k in 0..m.extent[2] {
            for j in 0..m.extent[1] {
                for i in 0..m.extent[0] {
                    let c = m.lattice_of(i, j, k);
                    let x = [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h];
                    if f(x) {
                        let id = m.index(i, j, k);
                        m.cells[id] = true;
                    }
                }
            }
        }
        Ok(m)
    }

    /// Mask on the smallest box holding the given lattice points.
    pub fn from_points(d: usize, h: f64, pts: &[Lattice]) -> Result<Self> {
        check_dim(d)?;
        if pts.is_empty() {
            return Self::new(d, h, [1, 1, 1], [0, 0, 0]);
        }
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for p in pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        let mut m = Self::new(d, h, extent, lo.map(|v| -v))?;
        for p in pts {
            m.set(*p, true);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    pub fn origin(&self) -> [i64; 3] {
        self.origin
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.extent[0] * (j + self.extent[1] * k)
    }

    fn lattice_of(&self, i: usize, j: usize, k: usize) -> Lattice {
        [i as i64 - self.origin[0], j as i64 - self.origin[1], k as i64 - self.origin[2]]
    }

    fn box_index(&self, c: Lattice) -> Option<usize> {
        let mut b = [0usize; 3];
        for a in 0..3 {
            let v = c[a] + self.origin[a];
            if v < 0 || v >= self.extent[a] as i64 {
                return None;
            }
            b[a] = v as usize;
        }
        Some(self.index(b[0], b[1], b[2]))
    }

    pub fn get(&self, c: Lattice) -> bool {
        self.box_index(c).is_some_and(|i| self.cells[i])
    }

    /// Sets a cell inside the box; points outside are ignored.
    pub fn set(&mut self, c: Lattice, v: bool) {
        if let Some(i) = self.box_index(c) {
            self.cells[i] = v;
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.h.powi(self.d as i32)
    }

    pub fn points(&self) -> Vec<Lattice> {
        let mut out = Vec::with_capacity(self.count());
        for k in 0..self.extent[2] {
            for j in 0..self.extent[1] {
                for i in 0..self.extent[0] {
                    if self.cells[self.index(i, j, k)] {
                        out.push(self.lattice_of(i, j, k));
                    }
                }
            }
        }
        out
    }

    /// Lattice bounding box `(lo, hi)` of the stored box.
    pub fn bounds(&self) -> (Lattice, Lattice) {
        let lo = [0, 1, 2].map(|a| -self.origin[a]);
        let hi = [0, 1, 2].map(|a| self.extent[a] as i64 - 1 - self.origin[a]);
        (lo, hi)
    }

    fn same_lattice(&self, other: &Self) -> Result<()> {
        if self.d != other.d {
            return Err(Error::Invalid(format!("dimension mismatch {} vs {}", self.d, other.d)));
        }
        if self.h != other.h {
            return Err(Error::Spacing(self.h, other.h));
        }
        Ok(())
    }

    /// Number of cells in the symmetric difference.
    pub fn sym_diff_count(&self, other: &Self) -> Result<usize> {
        self.same_lattice(other)?;
        let mut n = 0;
        for p in self.points() {
            if !other.get(p) {
                n += 1;
            }
        }
        for p in other.points() {
            if !self.get(p) {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn sym_diff_measure(&self, other: &Self) -> Result<f64> {
        Ok(self.sym_diff_count(other)? as f64 * self.h.powi(self.d as i32))
    }

    /// Mask with the same cells on a box grown to hold lattice range `[lo, hi]`.
    fn reboxed(&self, lo: Lattice, hi: Lattice) -> Result<Self> {
        let (slo, shi) = self.bounds();
        let lo = [0, 1, 2].map(|a| lo[a].min(slo[a]));
        let hi = [0, 1, 2].map(|a| hi[a].max(shi[a]));
        let extent = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        let mut m = Self::new(self.d, self.h, extent, lo.map(|v| -v))?;
        for p in self.points() {
            m.set(p, true);
        }
        Ok(m)
    }

    pub fn write_rsm<W: Write>(&self, mut w: W) -> Result<()> {
        // The file places lattice 0 at index n/2, so pad to a symmetric box.
        let half = [0, 1, 2].map(|a| self.origin[a].max(self.extent[a] as i64 - 1 - self.origin[a]));
        let m = self.reboxed(half.map(|v| -v), half)?;
        if self.d == 2 {
            writeln!(w, "RSMASK 2 {:?} {} {}", self.h, m.extent[0], m.extent[1])?;
        } else {
            writeln!(w, "RSMASK 3 {:?} {} {} {}", self.h, m.extent[0], m.extent[1], m.extent[2])?;
        }
        let bytes: Vec<u8> = m.cells.iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Reads `RSMASK d h nx ny [nz]` followed by row-major 0/1 bytes, x fastest.
    /// Lattice coordinate 0 sits at index `n/2` on each axis.
    pub fn read_rsm<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let nl = buf
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("missing RSMASK header line".into()))?;
        let header = std::str::from_utf8(&buf[..nl]).map_err(|e| Error::Parse(e.to_string()))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.first() != Some(&"RSMASK") || tok.len() < 5 {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let d: usize = tok[1].parse().map_err(|_| Error::Parse(format!("bad dimension {:?}", tok[1])))?;
        check_dim(d)?;
        if tok.len() != 3 + d {
            return Err(Error::Parse(format!("header needs {} sizes for d = {d}", d)));
        }
        let h: f64 = tok[2].parse().map_err(|_| Error::Parse(format!("bad spacing {:?}", tok[2])))?;
        let mut extent = [1usize; 3];
        for a in 0..d {
            extent[a] = tok[3 + a].parse().map_err(|_| Error::Parse(format!("bad size {:?}", tok[3 + a])))?;
        }
        let origin = extent.map(|n| (n / 2) as i64);
        let mut m = Self::new(d, h, extent, origin)?;
        let body = &buf[nl + 1..];
        if body.len() != m.cells.len() {
            return Err(Error::Parse(format!("expected {} cell bytes, found {}", m.cells.len(), body.len())));
        }
        for (c, &b) in m.cells.iter_mut().zip(body) {
            *c = match b {
                0 | b'0' => false,
                1 | b'1' => true,
                _ => return Err(Error::Parse(format!("cell byte {b} is not 0 or 1"))),
            };
        }
        Ok(m)
    }
}

/// Cells whose centers lie in the closed ball of radius `r`.
pub fn ball_mask(r: f64, h: f64, d: usize) -> Result<GridMask> {
    check_finite(r, "radius")?;
    if r < 0.0 {
        return Err(Error::Invalid(format!("radius must be nonnegative, got {r}")));
    }
    let half = (r / h).ceil() as usize + 1;
    let cells = (2 * half + 1).pow(d as u32);
    if cells > MAX_CELLS {
        return Err(Error::Memory { cells, limit: MAX_CELLS });
    }
    GridMask::from_fn(d, h, [half; 3], |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r * r)
}

/// Offsets of the centered run of `k` cells; an even run extends to `+k/2`.
fn centered_run(k: i64) -> (i64, i64) {
    let lo = -((k - 1) / 2);
    (lo, lo + k - 1)
}

/// Steiner symmetrization along a lattice axis: each line becomes a centered run.
pub fn steiner_axis(e: &GridMask, axis: usize) -> Result<GridMask> {
    if axis >= e.d {
        return Err(Error::Invalid(format!("axis {axis} out of range for d = {}", e.d)));
    }
    let mut cols: HashMap<Lattice, i64> = HashMap::new();
    for mut p in e.points() {
        p[axis] = 0;
        *cols.entry(p).or_insert(0) += 1;
    }
    let mut pts = Vec::with_capacity(e.count());
    let mut keys: Vec<_> = cols.into_iter().collect();
    keys.sort();
    for (mut p, k) in keys {
        let (lo, hi) = centered_run(k);
        for t in lo..=hi {
            p[axis] = t;
            pts.push(p);
        }
    }
    GridMask::from_points(e.d, e.h, &pts)
}

/// Rotation taking unit vector `u` to the last coordinate axis.
fn rotation_to_last_axis(u: &Vector3<f64>, d: usize) -> Matrix3<f64> {
    if d == 2 {
        let th = u[1].atan2(u[0]);
        let a = std::f64::consts::FRAC_PI_2 - th;
        let (s, c) = a.sin_cos();
        return Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    }
    let helper = if u[0].abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (helper - u * u.dot(&helper)).normalize();
    let e2 = u.cross(&e1);
    Matrix3::from_rows(&[e1.transpose(), e2.transpose(), u.transpose()])
}

fn round_lattice(v: &Vector3<f64>, d: usize) -> Lattice {
    let mut c = [v[0].round() as i64, v[1].round() as i64, v[2].round() as i64];
    if d == 2 {
        c[2] = 0;
    }
    c
}

fn neighbors(c: Lattice, d: usize) -> impl Iterator<Item = Lattice> {
    (0..d).flat_map(move |a| {
        [-1i64, 1].into_iter().map(move |s| {
            let mut n = c;
            n[a] += s;
            n
        })
    })
}

/// Steiner symmetrization in direction `u` (unit vector; `u[2]` ignored for `d = 2`).
///
/// Off-axis directions rotate by nearest-neighbor resampling, symmetrize along
/// the rotated axis, rotate back and then restore the exact cell count by
/// toggling boundary-adjacent cells in order of their distance to the
/// symmetrized boundary.
pub fn steiner(e: &GridMask, u: [f64; 3]) -> Result<GridMask> {
    let d = e.d;
    let mut u = Vector3::from(u);
    if d == 2 {
        u[2] = 0.0;
    }
    let norm = u.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Invalid("direction must be a nonzero finite vector".into()));
    }
    u /= norm;
    for a in 0..d {
        if (u[a].abs() - 1.0).abs() < 1e-12 {
            return steiner_axis(e, a);
        }
    }
    let target = e.count();
    if target == 0 {
        return Ok(e.clone());
    }
    let rot = rotation_to_last_axis(&u, d);
    let pts = e.points();
    let reach = pts
        .iter()
        .map(|p| ((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) as f64).sqrt())
        .fold(0.0, f64::max)
        .ceil() as i64
        + 2;
    let zr = if d == 3 { reach } else { 0 };
    let lattice_box = || {
        (-zr..=zr).flat_map(move |z| {
            (-reach..=reach).flat_map(move |y| (-reach..=reach).map(move |x| [x, y, z]))
        })
    };
    let to_vec = |c: &Lattice| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64);

    // Resample into the rotated frame.
    let rotated: Vec<Lattice> = lattice_box()
        .filter(|c| e.get(round_lattice(&(rot.transpose() * to_vec(c)), d)))
        .collect();
    let last = d - 1;
    let rmask = GridMask::from_points(d, e.h, &rotated)?;
    let sym = steiner_axis(&rmask, last)?;

    let mut cols: HashMap<Lattice, i64> = HashMap::new();
    for mut p in sym.points() {
        p[last] = 0;
        *cols.entry(p).or_insert(0) += 1;
    }
    let margin = |c: &Lattice| -> f64 {
        let p = rot * to_vec(c);
        let mut key = round_lattice(&p, d);
        key[last] = 0;
        let k = cols.get(&key).copied().unwrap_or(0);
        if k == 0 {
            return -p[last].abs() - 1.0;
        }
        let (lo, hi) = centered_run(k);
        0.5 * k as f64 - (p[last] - 0.5 * (lo + hi) as f64).abs()
    };

    let back: Vec<Lattice> = lattice_box()
        .filter(|c| sym.get(round_lattice(&(rot * to_vec(c)), d)))
        .collect();
    let mut out = GridMask::from_points(d, e.h, &back)?;
    let r = reach + 2;
    let zr2 = if d == 3 { r } else { 0 };
    out = out.reboxed([-r, -r, -zr2], [r, r, zr2])?;

    let mut count = out.count();
    let mut guard = 0;
    while count != target {
        guard += 1;
        if guard > 10_000 {
            return Err(Error::Convergence("steiner count repair".into()));
        }
        let removing = count > target;
        let need = count.abs_diff(target);
        let mut cand: Vec<(f64, Lattice)> = Vec::new();
        if removing {
            for c in out.points() {
                if neighbors(c, d).any(|n| !out.get(n)) {
                    cand.push((margin(&c), c));
                }
            }
        } else {
            let mut seen = std::collections::HashSet::new();
            for c in out.points() {
                for n in neighbors(c, d) {
                    if !out.get(n) && seen.insert(n) {
                        cand.push((-margin(&n), n));
                    }
                }
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Toggle in small batches so boundary adjacency stays current.
        let batch = need.min(cand.len()).min(need.div_ceil(4).max(1));
        for (_, c) in cand.into_iter().take(batch) {
            out.set(c, !removing);
        }
        count = out.count();
    }
    let pts = out.points();
    GridMask::from_points(d, e.h, &pts)
}

/// Lattice ball of the same cell count: cells by center radius, ties lexicographic.
pub fn rearrange_ball(e: &GridMask) -> Result<GridMask> {
    let n = e.count();
    let d = e.d;
    let rad = (n as f64 / ball_volume(d)).powf(1.0 / d as f64).ceil() as i64 + 2;
    let zr = if d == 3 { rad } else { 0 };
    let mut pts: Vec<(i64, Lattice)> = Vec::new();
    for z in -zr..=zr {
        for y in -rad..=rad {
            for x in -rad..=rad {
                pts.push((x * x + y * y + z * z, [x, y, z]));
            }
        }
    }
    pts.sort();
    let chosen: Vec<Lattice> = pts.into_iter().take(n).map(|p| p.1).collect();
    GridMask::from_points(d, e.h, &chosen)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Axes,
    Golden,
    Random(u64),
}

impl Schedule {
    pub fn direction(&self, d: usize, k: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let golden = std::f64::consts::PI * (5f64.sqrt() - 1.0);
        match self {
            Schedule::Axes => {
                let mut u = [0.0; 3];
                u[k % d] = 1.0;
                u
            }
            Schedule::Golden if d == 2 => {
                let a = k as f64 * golden / 2.0;
                [a.cos(), a.sin(), 0.0]
            }
            Schedule::Golden => {
                let z = 1.0 - 2.0 * ((k as f64 * (5f64.sqrt() - 1.0) / 2.0 + 0.5) % 1.0);
                let a = k as f64 * golden;
                let s = (1.0 - z * z).sqrt();
                [s * a.cos(), s * a.sin(), z]
            }
            Schedule::Random(_) => loop {
                let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let v = if d == 2 { [v[0], v[1], 0.0] } else { v };
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 0.1 && n <= 1.0 {
                    break v.map(|x| x / n);
                }
            },
        }
    }

    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        match s {
            "axes" => Ok(Schedule::Axes),
            "golden" => Ok(Schedule::Golden),
            "random" => Ok(Schedule::Random(seed)),
            _ => Err(Error::Invalid(format!("unknown schedule {s:?} (axes, golden, random)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteinerStep {
    pub sweep: usize,
    pub direction: [f64; 3],
    pub sym_diff: f64,
    pub ratio: f64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct SteinerRun {
    pub steps: Vec<SteinerStep>,
    pub result: GridMask,
    pub ball: GridMask,
}

impl SteinerRun {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep,ux,uy,uz,sym_diff,ratio,count")?;
        for s in &self.steps {
            let u = s.direction;
            writeln!(w, "{},{:?},{:?},{:?},{:?},{:?},{}", s.sweep, u[0], u[1], u[2], s.sym_diff, s.ratio, s.count)?;
        }
        Ok(())
    }
}

/// Repeated Steiner symmetrization reporting `|E_n Δ ball| / |E|` after each sweep.
pub fn iterated_steiner(e: &GridMask, sweeps: usize, schedule: &Schedule) -> Result<SteinerRun> {
    let ball = rearrange_ball(e)?;
    let seed = if let Schedule::Random(s) = schedule { *s } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = e.clone();
    let mut steps = Vec::with_capacity(sweeps);
    let m = e.measure();
    for k in 0..sweeps {
        let u = schedule.direction(e.d, k, &mut rng);
        cur = steiner(&cur, u)?;
        let sd = cur.sym_diff_measure(&ball)?;
        steps.push(SteinerStep {
            sweep: k + 1,
            direction: u,
            sym_diff: sd,
            ratio: if m > 0.0 { sd / m } else { 0.0 },
            count: cur.count(),
        });
    }
    Ok(SteinerRun { steps, result: cur, ball })
}

fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

fn fft_axis(data: &mut [Complex64], dims: [usize; 3], axis: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let stride: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * stride * n + s;
            for t in 0..n {
                line[t] = data[base + t * stride];
            }
            fft.process(&mut line);
            for t in 0..n {
                data[base + t * stride] = line[t];
            }
        }
    }
}

/// Integer-valued linear convolution `(A * B)[z]` of lattice masks, returned
/// with its lattice lower corner.
fn convolve_counts(a: &GridMask, b: &GridMask) -> Result<(Vec<f64>, [usize; 3], Lattice)> {
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    let mut dims = [1usize; 3];
    for ax in 0..a.d {
        dims[ax] = good_size(((ahi[ax] - alo[ax]) + (bhi[ax] - blo[ax]) + 1) as usize);
    }
    let total: usize = dims.iter().product();
    if total > MAX_FFT {
        return Err(Error::Memory { cells: total, limit: MAX_FFT });
    }
    let place = |m: &GridMask, lo: Lattice| {
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for p in m.points() {
            let i = (p[0] - lo[0]) as usize + dims[0] * ((p[1] - lo[1]) as usize + dims[1] * (p[2] - lo[2]) as usize);
            buf[i].re = 1.0;
        }
        buf
    };
    let mut fa = place(a, alo);
    let mut fb = place(b, blo);
    let mut planner = FftPlanner::new();
    for ax in 0..3 {
        fft_axis(&mut fa, dims, ax, false, &mut planner);
        fft_axis(&mut fb, dims, ax, false, &mut planner);
    }
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    for ax in 0..3 {
        fft_axis(&mut fa, dims, ax, true, &mut planner);
    }
    let scale = 1.0 / total as f64;
    let conv = fa.iter().map(|c| (c.re * scale).round()).collect();
    let lo = [0, 1, 2].map(|ax| alo[ax] + blo[ax]);
    Ok((conv, dims, lo))
}

/// Discrete `T(A, B, C) = h^{2d} Σ_z (A * B)[z] C[-z]`, by FFT.
pub fn t_grid(a: &GridMask, b: &GridMask, c: &GridMask) -> Result<f64> {
    a.same_lattice(b)?;
    a.same_lattice(c)?;
    let (conv, dims, lo) = convolve_counts(a, b)?;
    let mut s = 0.0;
    for p in c.points() {
        let z = [-p[0] - lo[0], -p[1] - lo[1], -p[2] - lo[2]];
        if (0..3).all(|ax| z[ax] >= 0 && (z[ax] as usize) < dims[ax]) {
            s += conv[z[0] as usize + dims[0] * (z[1] as usize + dims[1] * z[2] as usize)];
        }
    }
    Ok(s * a.h.powi(2 * a.d as i32))
}

/// Direct summation over pairs of occupied cells of `A` and `B`.
pub fn t_grid_direct(a: &GridMask, b: &GridMask, c: &GridMask) -> Result<f64> {
    a.same_lattice(b)?;
    a.same_lattice(c)?;
    let bp = b.points();
    let mut n = 0u64;
    for p in a.points() {
        for q in &bp {
            if c.get([-p[0] - q[0], -p[1] - q[1], -p[2] - q[2]]) {
                n += 1;
            }
        }
    }
    Ok(n as f64 * a.h.powi(2 * a.d as i32))
}
