//! Sampled model manifolds: round spheres `S^n(r)`, Riemannian products with the
//! ℓ² distance, and the free ℤ₂ quotient of `S^{n−p} × S^p(a)` that flips `x₀` and
//! all of `y`.
//!
//! All geometry is analytic. Distances, log maps and parallel transport are closed
//! form; a point cloud only fixes where fields are sampled. Frames are a
//! deterministic function of the point and positively oriented, so transport has
//! determinant `+1` on orientable models.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operation not supported for this manifold: {0}")]
    Unsupported(&'static str),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ManifoldError>;

/// How points are placed on a sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Independent uniform points (normalized Gaussians).
    Iid,
    /// Low-discrepancy points: Fibonacci spiral on `S²`, equal spacing on `S¹`,
    /// Riesz-energy relaxation otherwise; randomly rotated by the seed.
    QuasiUniform,
}

/// Involutions used to build the quotient example's symmetric factor samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Involution {
    /// `(x₀, x₁, …) ↦ (−x₀, x₁, …)`.
    FlipFirst,
    /// `x ↦ −x`.
    Antipodal,
}

impl Involution {
    fn apply(self, x: &mut [f64]) {
        match self {
            Involution::FlipFirst => x[0] = -x[0],
            Involution::Antipodal => x.iter_mut().for_each(|v| *v = -*v),
        }
    }
}

/// Constant-curvature block of the tangent space: `dim` directions with sectional
/// curvature `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBlock {
    pub dim: usize,
    pub kappa: f64,
}

/// Analytic curvature data carried with a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    /// Frame-ordered blocks; Ricci on block `b` is `(dim_b − 1)·κ_b`.
    pub blocks: Vec<CurvatureBlock>,
}

impl Curvature {
    pub fn ricci_lower_bound(&self) -> f64 {
        self.blocks.iter().map(|b| (b.dim as f64 - 1.0) * b.kappa).fold(f64::INFINITY, f64::min)
    }

    /// Ricci eigenvalue for each frame direction.
    pub fn ricci_diagonal(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| std::iter::repeat_n((b.dim as f64 - 1.0) * b.kappa, b.dim)).collect()
    }

    pub fn max_sectional(&self) -> f64 {
        self.blocks.iter().map(|b| b.kappa).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
enum Geometry {
    Sphere {
        r: f64,
    },
    Product {
        factors: Vec<SampledManifold>,
        /// Factor sample index per point.
        pairs: Vec<(usize, usize)>,
        full_grid: bool,
    },
    Quotient {
        p: usize,
        a: f64,
        lifted: Box<SampledManifold>,
        /// Lifted index of each class representative.
        rep: Vec<usize>,
        /// Lifted index of the other lift of each class.
        partner: Vec<usize>,
        /// Class of every lifted point.
        class_of: Vec<usize>,
        /// Diagonal of the ambient involution.
        flip: Vec<f64>,
    },
}

/// Description of a sampled model, used in headers and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Sphere { n: usize, r: f64, points: usize, seed: u64, sampling: Sampling },
    Product { factors: Vec<ModelSpec>, points: usize, full_grid: bool },
    Quotient { p: usize, n: usize, a: f64, points: usize, seed: u64 },
}

/// A point cloud on a model Riemannian manifold with frames, weights and
/// analytic metric data.
#[derive(Debug, Clone)]
pub struct SampledManifold {
    dim: usize,
    ambient: usize,
    points: Vec<f64>,
    /// `frames[(i*dim + k)*ambient + a]` is coordinate `a` of frame vector `k` at point `i`.
    frames: Vec<f64>,
    weights: Vec<f64>,
    orientable: Option<bool>,
    curvature: Curvature,
    spec: ModelSpec,
    geometry: Geometry,
}

/// `Vol(S^n(r))`.
pub fn sphere_volume(n: usize, r: f64) -> f64 {
    // Vol(S^n) = 2π^{(n+1)/2}/Γ((n+1)/2), via Vol(S^n) = 2π/(n−1)·Vol(S^{n−2}).
    let mut v = if n.is_multiple_of(2) { 2.0 } else { 2.0 * PI };
    let mut k = if n.is_multiple_of(2) { 0 } else { 1 };
    while k < n {
        k += 2;
        v *= 2.0 * PI / (k as f64 - 1.0);
    }
    v * r.powi(n as i32)
}

/// Positively oriented orthonormal frame of `u^⊥` for a unit vector `u ∈ ℝ^{n+1}`:
/// `det[u, e_1, …, e_n] = +1`.
pub fn sphere_frame(u: &[f64]) -> Vec<f64> {
    let m = u.len();
    let n = m - 1;
    let skip = (0..m).max_by(|&a, &b| u[a].abs().partial_cmp(&u[b].abs()).unwrap()).unwrap();
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    for c in (0..m).filter(|&c| c != skip) {
        let mut v = vec![0.0; m];
        v[c] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        basis.push(v);
    }
    let mat = DMatrix::from_fn(m, m, |r, c| basis[c][r]);
    if mat.determinant() < 0.0 {
        basis[n].iter_mut().for_each(|x| *x = -*x);
    }
    basis[1..].iter().flat_map(|v| v.iter().copied()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angle between `x` and `y` on the sphere of radius `r`, accurate near `0` and `π`.
fn sphere_angle(x: &[f64], y: &[f64], r: f64) -> f64 {
    let (mut dm, mut dp) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dm += (a - b) * (a - b);
        dp += (a + b) * (a + b);
    }
    if dm <= dp {
        2.0 * (dm.sqrt() / (2.0 * r)).min(1.0).asin()
    } else {
        PI - 2.0 * (dp.sqrt() / (2.0 * r)).min(1.0).asin()
    }
}

/// Rotation of `ℝ^m` in the plane of unit vectors `u`, `v` taking `v` to `u`,
/// identity on the orthogonal complement. Row-major `m×m`.
fn plane_rotation(u: &[f64], v: &[f64]) -> Vec<f64> {
    let m = u.len();
    let c = dot(u, v).clamp(-1.0, 1.0);
    let mut r = vec![0.0; m * m];
    if c < -1.0 + 1e-12 {
        // Antipodal: any half-turn fixing u^⊥ ∩ v^⊥ up to a chosen plane.
        let f = sphere_frame(v);
        let w = &f[..m];
        for i in 0..m {
            r[i * m + i] = 1.0;
            for j in 0..m {
                r[i * m + j] -= 2.0 * (v[i] * v[j] + w[i] * w[j]);
            }
        }
        return r;
    }
    // R = I + W + W²/(1+c), W = u vᵀ − v uᵀ.
    for i in 0..m {
        for j in 0..m {
            let wij = u[i] * v[j] - v[i] * u[j];
            // (W²)_ij = u_i (vᵀ... ) expanded: W² = c(u vᵀ + v uᵀ) − u uᵀ − v vᵀ.
            let w2 = c * (u[i] * v[j] + v[i] * u[j]) - u[i] * u[j] - v[i] * v[j];
            r[i * m + j] = if i == j { 1.0 } else { 0.0 } + wij + w2 / (1.0 + c);
        }
    }
    r
}

fn gen_iid_sphere(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let nv = dot(&v, &v).sqrt();
            if nv > 1e-12 {
                break v.into_iter().map(|x| x / nv).collect();
            }
        })
        .collect()
}

fn random_rotation(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..m {
        if r[(c, c)] < 0.0 {
            for i in 0..m {
                q[(i, c)] = -q[(i, c)];
            }
        }
    }
    q
}

fn fibonacci_sphere(count: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            vec![rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

/// Riesz-energy relaxation of unit vectors; when `sym` is given, the images
/// under the involution also repel (they are not moved separately).
fn relax(points: &mut [Vec<f64>], n: usize, sym: Option<Involution>, iters: usize) {
    let m = points.len();
    let total = if sym.is_some() { 2 * m } else { m };
    let h = (sphere_volume(n, 1.0) / total as f64).powf(1.0 / n as f64);
    let s = n as f64 + 1.0;
    let dimp = n + 1;
    for it in 0..iters {
        let eta = 0.25 * (1.0 - it as f64 / iters as f64) + 0.01;
        let mut all: Vec<Vec<f64>> = points.to_vec();
        if let Some(inv) = sym {
            for p in points.iter() {
                let mut q = p.clone();
                inv.apply(&mut q);
                all.push(q);
            }
        }
        let forces: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let x = &points[i];
                let mut f = vec![0.0; dimp];
                for (j, y) in all.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    let d2 = d2.max(1e-18);
                    let c = d2.powf(-(s + 2.0) / 2.0);
                    for a in 0..dimp {
                        f[a] += c * (x[a] - y[a]);
                    }
                }
                let rad = dot(&f, x);
                f.iter_mut().zip(x).for_each(|(v, xv)| *v -= rad * xv);
                f
            })
            .collect();
        for (p, f) in points.iter_mut().zip(&forces) {
            let nf = dot(f, f).sqrt();
            if nf == 0.0 {
                continue;
            }
            for a in 0..dimp {
                p[a] += eta * h * f[a] / nf;
            }
            let np = dot(p, p).sqrt();
            p.iter_mut().for_each(|v| *v /= np);
        }
    }
}

fn quasi_uniform_sphere(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let base = match n {
        1 => {
            let off: f64 = rng.gen_range(0.0..2.0 * PI);
            (0..count)
                .map(|i| {
                    let t = off + 2.0 * PI * i as f64 / count as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        2 => fibonacci_sphere(count),
        _ => {
            let mut pts = gen_iid_sphere(n, count, rng);
            relax(&mut pts, n, None, relax_iters(count));
            pts
        }
    };
    rotate_all(base, n, rng)
}

fn relax_iters(count: usize) -> usize {
    if count <= 400 {
        300
    } else {
        150
    }
}

fn rotate_all(pts: Vec<Vec<f64>>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let q = random_rotation(n + 1, rng);
    pts.into_iter()
        .map(|p| {
            let v = &q * DVector::from_vec(p);
            v.iter().copied().collect()
        })
        .collect()
}

impl SampledManifold {
    fn sphere_from_unit(n: usize, r: f64, unit: Vec<Vec<f64>>, seed: u64, sampling: Sampling) -> Self {
        let count = unit.len();
        let ambient = n + 1;
        let mut points = Vec::with_capacity(count * ambient);
        let mut frames = Vec::with_capacity(count * ambient * n);
        for u in &unit {
            points.extend(u.iter().map(|x| x * r));
            frames.extend(sphere_frame(u));
        }
        let w = sphere_volume(n, r) / count as f64;
        SampledManifold {
            dim: n,
            ambient,
            points,
            frames,
            weights: vec![w; count],
            orientable: Some(true),
            curvature: Curvature { blocks: vec![CurvatureBlock { dim: n, kappa: 1.0 / (r * r) }] },
            spec: ModelSpec::Sphere { n, r, points: count, seed, sampling },
            geometry: Geometry::Sphere { r },
        }
    }

    /// Sphere from given ambient points (renormalized to radius `r`).
    pub fn sphere_from_points(n: usize, r: f64, pts: &[Vec<f64>]) -> Result<Self> {
        check_sphere_params(n, r, pts.len().max(n + 2))?;
        let mut unit = Vec::with_capacity(pts.len());
        for p in pts {
            if p.len() != n + 1 {
                return Err(ManifoldError::InvalidParams(format!("point of length {} in S^{n}", p.len())));
            }
            let np = dot(p, p).sqrt();
            if !(np > 0.0) {
                return Err(ManifoldError::InvalidParams("zero point".into()));
            }
            // Points already on the sphere are kept bit-for-bit.
            let s = if (np / r - 1.0).abs() < 1e-13 { r } else { np };
            unit.push(p.iter().map(|x| x / s).collect());
        }
        Ok(Self::sphere_from_unit(n, r, unit, 0, Sampling::Iid))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.ambient..(i + 1) * self.ambient]
    }

    /// Frame vector `k` at point `i`, in ambient coordinates.
    pub fn frame_vector(&self, i: usize, k: usize) -> &[f64] {
        let s = (i * self.dim + k) * self.ambient;
        &self.frames[s..s + self.ambient]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn orientable(&self) -> Option<bool> {
        self.orientable
    }

    pub fn curvature(&self) -> &Curvature {
        &self.curvature
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Analytic upper bound for the diameter: `πr` on a sphere, `√(ΣDᵢ²)` on a
    /// product, and the lifted product's bound on the quotient.
    pub fn diameter_bound(&self) -> f64 {
        match &self.geometry {
            Geometry::Sphere { r } => std::f64::consts::PI * r,
            Geometry::Product { factors, .. } => factors.iter().map(|f| f.diameter_bound().powi(2)).sum::<f64>().sqrt(),
            Geometry::Quotient { lifted, .. } => lifted.diameter_bound(),
        }
    }

    /// A sphere sample with the first frame vector negated wherever `flip` is set,
    /// which reverses the local orientation there and nothing else.
    pub fn reversed_frames(&self, flip: &[bool]) -> Result<Self> {
        if !self.is_sphere() {
            return Err(ManifoldError::InvalidParams("frame reversal is defined on spheres".into()));
        }
        if flip.len() != self.len() {
            return Err(ManifoldError::InvalidParams(format!("{} flags for {} points", flip.len(), self.len())));
        }
        let mut out = self.clone();
        for (i, _) in flip.iter().enumerate().filter(|(_, &f)| f) {
            let s = i * self.dim * self.ambient;
            out.frames[s..s + self.ambient].iter_mut().for_each(|v| *v = -*v);
        }
        Ok(out)
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.geometry, Geometry::Sphere { .. })
    }

    pub fn sphere_radius(&self) -> Option<f64> {
        match self.geometry {
            Geometry::Sphere { r } => Some(r),
            _ => None,
        }
    }

    /// Factors and per-point factor indices of a product; for the quotient, those
    /// of its lifted product.
    pub fn product_parts(&self) -> Option<(&[SampledManifold], &[(usize, usize)], bool)> {
        match &self.geometry {
            Geometry::Product { factors, pairs, full_grid } => Some((factors, pairs, *full_grid)),
            _ => None,
        }
    }

    /// Quotient data: lifted product, representative lifts, partner lifts, class map.
    pub fn quotient_parts(&self) -> Option<QuotientParts<'_>> {
        match &self.geometry {
            Geometry::Quotient { lifted, rep, partner, class_of, flip, p, a } => Some(QuotientParts { lifted, rep, partner, class_of, flip, p: *p, a: *a }),
            _ => None,
        }
    }

    /// Frame coordinate ranges of the product factors (a single range otherwise).
    pub fn factor_blocks(&self) -> Vec<std::ops::Range<usize>> {
        match &self.geometry {
            Geometry::Product { factors, .. } => {
                let d0 = factors[0].dim;
                vec![0..d0, d0..self.dim]
            }
            Geometry::Quotient { lifted, .. } => lifted.factor_blocks(),
            Geometry::Sphere { .. } => vec![0..self.dim],
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance_sq(i, j).sqrt()
    }

    pub fn distance_sq(&self, i: usize, j: usize) -> f64 {
        match &self.geometry {
            Geometry::Sphere { r } => {
                let d = r * sphere_angle(self.point(i), self.point(j), *r);
                d * d
            }
            Geometry::Product { factors, pairs, .. } => {
                let (a, b) = pairs[i];
                let (a2, b2) = pairs[j];
                factors[0].distance_sq(a, a2) + factors[1].distance_sq(b, b2)
            }
            Geometry::Quotient { lifted, rep, partner, .. } => lifted.distance_sq(rep[i], rep[j]).min(lifted.distance_sq(rep[i], partner[j])),
        }
    }

    /// Frame coordinates at `i` of the initial velocity of the minimal geodesic to
    /// `j`, scaled to length `d(i, j)`.
    pub fn log_map(&self, i: usize, j: usize) -> Vec<f64> {
        match &self.geometry {
            Geometry::Sphere { r } => {
                let x = self.point(i);
                let y = self.point(j);
                let c = (dot(x, y) / (r * r)).clamp(-1.0, 1.0);
                let t = r * sphere_angle(x, y, *r);
                let w: Vec<f64> = y.iter().zip(x).map(|(yv, xv)| yv / r - c * xv / r).collect();
                let nw = dot(&w, &w).sqrt();
                if nw < 1e-300 {
                    return vec![0.0; self.dim];
                }
                (0..self.dim).map(|k| t * dot(self.frame_vector(i, k), &w) / nw).collect()
            }
            Geometry::Product { factors, pairs, .. } => {
                let (a, b) = pairs[i];
                let (a2, b2) = pairs[j];
                let mut v = factors[0].log_map(a, a2);
                v.extend(factors[1].log_map(b, b2));
                v
            }
            Geometry::Quotient { lifted, rep, .. } => {
                let lj = self.nearest_lift(i, j);
                lifted.log_map(rep[i], lj)
            }
        }
    }

    /// Lift of class `j` closest to the representative of class `i`.
    fn nearest_lift(&self, i: usize, j: usize) -> usize {
        match &self.geometry {
            Geometry::Quotient { lifted, rep, partner, .. } => {
                if lifted.distance_sq(rep[i], rep[j]) <= lifted.distance_sq(rep[i], partner[j]) {
                    rep[j]
                } else {
                    partner[j]
                }
            }
            _ => j,
        }
    }

    /// Parallel transport along the minimal geodesic from `j` to `i`, as the
    /// `dim×dim` row-major matrix taking frame coordinates at `j` to frame
    /// coordinates at `i`.
    pub fn transport(&self, i: usize, j: usize) -> Vec<f64> {
        let n = self.dim;
        match &self.geometry {
            Geometry::Sphere { r } => {
                let m = self.ambient;
                let u: Vec<f64> = self.point(i).iter().map(|x| x / r).collect();
                let v: Vec<f64> = self.point(j).iter().map(|x| x / r).collect();
                let rot = plane_rotation(&u, &v);
                let mut out = vec![0.0; n * n];
                let mut rf = vec![0.0; m];
                for l in 0..n {
                    let fj = self.frame_vector(j, l);
                    for a in 0..m {
                        rf[a] = (0..m).map(|b| rot[a * m + b] * fj[b]).sum();
                    }
                    for k in 0..n {
                        out[k * n + l] = dot(self.frame_vector(i, k), &rf);
                    }
                }
                out
            }
            Geometry::Product { factors, pairs, .. } => {
                let (a, b) = pairs[i];
                let (a2, b2) = pairs[j];
                let t1 = factors[0].transport(a, a2);
                let t2 = factors[1].transport(b, b2);
                block_diag(factors[0].dim, &t1, factors[1].dim, &t2)
            }
            Geometry::Quotient { lifted, rep, partner, .. } => {
                let lj = self.nearest_lift(i, j);
                let t = lifted.transport(rep[i], lj);
                if lj == partner[j] {
                    let g = self.partner_frame_change(j);
                    matmul(n, &t, &g)
                } else {
                    t
                }
            }
        }
    }

    /// For the quotient: the matrix taking frame coordinates at the representative
    /// of class `c` to frame coordinates at its partner lift, through the
    /// differential of the involution.
    pub fn partner_frame_change(&self, c: usize) -> Vec<f64> {
        match &self.geometry {
            Geometry::Quotient { lifted, rep, partner, flip, .. } => {
                let n = self.dim;
                let mut g = vec![0.0; n * n];
                for l in 0..n {
                    let pushed: Vec<f64> = lifted.frame_vector(rep[c], l).iter().zip(flip).map(|(x, s)| x * s).collect();
                    for k in 0..n {
                        g[k * n + l] = dot(lifted.frame_vector(partner[c], k), &pushed);
                    }
                }
                g
            }
            _ => identity(self.dim),
        }
    }

    /// Point on the unit-speed geodesic from point `i` with initial unit tangent `u`
    /// (frame coordinates), at time `t`. Returned in ambient coordinates; for the
    /// quotient, as the representative lift.
    pub fn geodesic_point(&self, i: usize, u: &[f64], t: f64) -> Result<Vec<f64>> {
        let nu = dot(u, u).sqrt();
        if (nu - 1.0).abs() > 1e-10 || u.len() != self.dim {
            return Err(ManifoldError::InvalidParams("geodesic direction must be a unit frame vector".into()));
        }
        Ok(self.exp_from(i, u, t))
    }

    /// `exp_x(t·v)` for an arbitrary frame vector `v` at point `i`.
    fn exp_from(&self, i: usize, v: &[f64], t: f64) -> Vec<f64> {
        match &self.geometry {
            Geometry::Sphere { r } => {
                let m = self.ambient;
                let speed = dot(v, v).sqrt();
                let x = self.point(i);
                if speed == 0.0 {
                    return x.to_vec();
                }
                let mut dir = vec![0.0; m];
                for (k, vk) in v.iter().enumerate() {
                    let f = self.frame_vector(i, k);
                    for a in 0..m {
                        dir[a] += vk / speed * f[a];
                    }
                }
                let ang = speed * t / r;
                (0..m).map(|a| ang.cos() * x[a] + r * ang.sin() * dir[a]).collect()
            }
            Geometry::Product { factors, pairs, .. } => {
                let (a, b) = pairs[i];
                let d0 = factors[0].dim;
                let mut p = factors[0].exp_from(a, &v[..d0], t);
                p.extend(factors[1].exp_from(b, &v[d0..], t));
                p
            }
            Geometry::Quotient { lifted, rep, flip, .. } => {
                let mut p = lifted.exp_from(rep[i], v, t);
                canonical_lift(&mut p, flip, lifted.product_parts().unwrap().0[0].ambient);
                p
            }
        }
    }

    /// Distance between two arbitrary ambient points of this model.
    pub fn ambient_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.geometry {
            Geometry::Sphere { r } => r * sphere_angle(x, y, *r),
            Geometry::Product { factors, .. } => {
                let a0 = factors[0].ambient;
                let d1 = factors[0].ambient_distance(&x[..a0], &y[..a0]);
                let d2 = factors[1].ambient_distance(&x[a0..], &y[a0..]);
                (d1 * d1 + d2 * d2).sqrt()
            }
            Geometry::Quotient { lifted, flip, .. } => {
                let sy: Vec<f64> = y.iter().zip(flip).map(|(v, s)| v * s).collect();
                lifted.ambient_distance(x, y).min(lifted.ambient_distance(x, &sy))
            }
        }
    }

    /// Sample indices `j ≠ i` within distance `radius` of `i`, with squared distances.
    pub fn neighbors_within(&self, radius: f64) -> Vec<Vec<(usize, f64)>> {
        let n_pts = self.len();
        let r2 = radius * radius;
        let mut out = vec![Vec::new(); n_pts];
        match &self.geometry {
            Geometry::Sphere { r } => {
                let cmin = if radius >= PI * r { -2.0 } else { (radius / r).cos() * r * r - 1e-12 };
                for i in 0..n_pts {
                    for j in (i + 1)..n_pts {
                        if dot(self.point(i), self.point(j)) < cmin {
                            continue;
                        }
                        let d2 = self.distance_sq(i, j);
                        if d2 <= r2 {
                            out[i].push((j, d2));
                            out[j].push((i, d2));
                        }
                    }
                }
            }
            _ => {
                for i in 0..n_pts {
                    for j in (i + 1)..n_pts {
                        let d2 = self.distance_sq(i, j);
                        if d2 <= r2 {
                            out[i].push((j, d2));
                            out[j].push((i, d2));
                        }
                    }
                }
            }
        }
        out
    }

    /// `Vol(B_r(x))·r^{−n}/Vol(M)` from the sample weights, with an undersampling
    /// flag when the ball holds only the centre.
    pub fn bishop_gromov_ratio(&self, i: usize, r: f64) -> (f64, bool) {
        let mut vol = 0.0;
        let mut count = 0usize;
        for j in 0..self.len() {
            if self.distance(i, j) <= r {
                vol += self.weights[j];
                count += 1;
            }
        }
        let ratio = vol * r.powi(-(self.dim as i32)) / self.volume();
        (ratio, count <= 1)
    }

    /// Ambient points of the sample.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Checks frames, weights, transport orthogonality and metric axioms on
    /// `triples` random triples.
    pub fn validate(&self, triples: usize, seed: u64) -> Result<()> {
        let n = self.dim;
        for i in 0..self.len() {
            if !(self.weights[i] > 0.0) || !self.weights[i].is_finite() {
                return Err(ManifoldError::Invariant(format!("weight {i} not positive")));
            }
            for k in 0..n {
                for l in 0..n {
                    let d = dot(self.frame_vector(i, k), self.frame_vector(i, l));
                    let e = if k == l { 1.0 } else { 0.0 };
                    if (d - e).abs() > 1e-10 {
                        return Err(ManifoldError::Invariant(format!("frame {i} not orthonormal")));
                    }
                }
            }
        }
        if self.len() < 2 {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..triples {
            let i = rng.gen_range(0..self.len());
            let j = rng.gen_range(0..self.len());
            let k = rng.gen_range(0..self.len());
            let (dij, djk, dik) = (self.distance(i, j), self.distance(j, k), self.distance(i, k));
            if (dij - self.distance(j, i)).abs() > 1e-9 || self.distance(i, i) > 1e-9 {
                return Err(ManifoldError::Invariant("distance not symmetric".into()));
            }
            if dik > dij + djk + 1e-9 {
                return Err(ManifoldError::Invariant(format!("triangle inequality fails at ({i},{j},{k})")));
            }
            if dij < 1.0 {
                let t = self.transport(i, j);
                let tt = self.transport(j, i);
                for a in 0..n {
                    for b in 0..n {
                        let o: f64 = (0..n).map(|c| t[c * n + a] * t[c * n + b]).sum();
                        let e = if a == b { 1.0 } else { 0.0 };
                        if (o - e).abs() > 1e-10 || (t[a * n + b] - tt[b * n + a]).abs() > 1e-10 {
                            return Err(ManifoldError::Invariant("transport not orthogonal".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Borrowed view of the quotient's lifted structure.
pub struct QuotientParts<'a> {
    pub lifted: &'a SampledManifold,
    pub rep: &'a [usize],
    pub partner: &'a [usize],
    pub class_of: &'a [usize],
    pub flip: &'a [f64],
    pub p: usize,
    pub a: f64,
}

fn canonical_lift(p: &mut [f64], flip: &[f64], a0: usize) {
    // Representative: x₀ > 0, or x₀ = 0 and y₀ ≥ 0.
    let x0 = p[0];
    let y0 = p[a0];
    if x0 < 0.0 || (x0 == 0.0 && y0 < 0.0) {
        p.iter_mut().zip(flip).for_each(|(v, s)| *v *= s);
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub(crate) fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn block_diag(n1: usize, a: &[f64], n2: usize, b: &[f64]) -> Vec<f64> {
    let n = n1 + n2;
    let mut m = vec![0.0; n * n];
    for i in 0..n1 {
        m[i * n..i * n + n1].copy_from_slice(&a[i * n1..(i + 1) * n1]);
    }
    for i in 0..n2 {
        m[(n1 + i) * n + n1..(n1 + i) * n + n].copy_from_slice(&b[i * n2..(i + 1) * n2]);
    }
    m
}

fn check_sphere_params(n: usize, r: f64, count: usize) -> Result<()> {
    if n == 0 {
        return Err(ManifoldError::InvalidParams("sphere dimension must be ≥ 1".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(ManifoldError::InvalidParams(format!("radius {r} must be positive")));
    }
    if count < n + 2 {
        return Err(ManifoldError::InvalidParams(format!("need at least {} points on S^{n}", n + 2)));
    }
    Ok(())
}

/// `N` i.i.d. uniform points on `S^n(r)`.
pub fn sample_sphere(n: usize, r: f64, count: usize, seed: u64) -> Result<SampledManifold> {
    sample_sphere_with(n, r, count, seed, Sampling::Iid)
}

pub fn sample_sphere_with(n: usize, r: f64, count: usize, seed: u64, sampling: Sampling) -> Result<SampledManifold> {
    check_sphere_params(n, r, count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = match sampling {
        Sampling::Iid => gen_iid_sphere(n, count, &mut rng),
        Sampling::QuasiUniform => quasi_uniform_sphere(n, count, &mut rng),
    };
    Ok(SampledManifold::sphere_from_unit(n, r, unit, seed, sampling))
}

/// Quasi-uniform sample of `S^n(r)` closed under an involution: point `i + count/2`
/// is the image of point `i`.
pub fn sample_sphere_symmetric(n: usize, r: f64, count: usize, seed: u64, inv: Involution) -> Result<SampledManifold> {
    check_sphere_params(n, r, count)?;
    if !count.is_multiple_of(2) {
        return Err(ManifoldError::InvalidParams("symmetric sample needs an even count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = count / 2;
    let mut base = gen_iid_sphere(n, half, &mut rng);
    if inv == Involution::FlipFirst {
        // Keep the base in x₀ ≥ 0 so it is a fundamental domain.
        for p in &mut base {
            p[0] = p[0].abs();
        }
    }
    relax(&mut base, n, Some(inv), relax_iters(count));
    let mut unit = base.clone();
    for p in &base {
        let mut q = p.clone();
        inv.apply(&mut q);
        unit.push(q);
    }
    Ok(SampledManifold::sphere_from_unit(n, r, unit, seed, Sampling::QuasiUniform))
}

/// Full Cartesian product with the ℓ² distance.
pub fn product(m1: &SampledManifold, m2: &SampledManifold) -> Result<SampledManifold> {
    let pairs: Vec<(usize, usize)> = (0..m1.len()).flat_map(|a| (0..m2.len()).map(move |b| (a, b))).collect();
    build_product(m1, m2, pairs, true)
}

/// Cartesian product subsampled to `budget` points (chosen uniformly without
/// replacement, in grid order).
pub fn product_subsampled(m1: &SampledManifold, m2: &SampledManifold, budget: usize, seed: u64) -> Result<SampledManifold> {
    let n = m1.dim + m2.dim;
    if budget < n + 2 {
        return Err(ManifoldError::InvalidParams(format!("budget {budget} below {}", n + 2)));
    }
    let total = m1.len() * m2.len();
    if budget >= total {
        return product(m1, m2);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, budget).into_vec();
    idx.sort_unstable();
    let pairs = idx.into_iter().map(|k| (k / m2.len(), k % m2.len())).collect();
    let mut p = build_product(m1, m2, pairs, false)?;
    // Each kept point stands for total/budget grid cells.
    let scale = total as f64 / budget as f64;
    p.weights.iter_mut().for_each(|w| *w *= scale);
    Ok(p)
}

fn build_product(m1: &SampledManifold, m2: &SampledManifold, pairs: Vec<(usize, usize)>, full_grid: bool) -> Result<SampledManifold> {
    if matches!(m1.geometry, Geometry::Quotient { .. }) || matches!(m2.geometry, Geometry::Quotient { .. }) {
        return Err(ManifoldError::Unsupported("products of quotients"));
    }
    let (n1, n2) = (m1.dim, m2.dim);
    let n = n1 + n2;
    let (a1, a2) = (m1.ambient, m2.ambient);
    let ambient = a1 + a2;
    let mut points = Vec::with_capacity(pairs.len() * ambient);
    let mut frames = Vec::with_capacity(pairs.len() * ambient * n);
    let mut weights = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        points.extend_from_slice(m1.point(a));
        points.extend_from_slice(m2.point(b));
        for k in 0..n1 {
            frames.extend_from_slice(m1.frame_vector(a, k));
            frames.extend(std::iter::repeat_n(0.0, a2));
        }
        for k in 0..n2 {
            frames.extend(std::iter::repeat_n(0.0, a1));
            frames.extend_from_slice(m2.frame_vector(b, k));
        }
        weights.push(m1.weights[a] * m2.weights[b]);
    }
    let mut blocks = m1.curvature.blocks.clone();
    blocks.extend(m2.curvature.blocks.iter().copied());
    let orientable = match (m1.orientable, m2.orientable) {
        (Some(x), Some(y)) => Some(x && y),
        _ => None,
    };
    Ok(SampledManifold {
        dim: n,
        ambient,
        points,
        frames,
        weights,
        orientable,
        curvature: Curvature { blocks },
        spec: ModelSpec::Product { factors: vec![m1.spec.clone(), m2.spec.clone()], points: pairs.len(), full_grid },
        geometry: Geometry::Product { factors: vec![m1.clone(), m2.clone()], pairs, full_grid },
    })
}

/// Radius `a = √((p−1)/(n−p−1))` of the second factor in the quotient example.
pub fn quotient_radius(p: usize, n: usize) -> f64 {
    ((p as f64 - 1.0) / (n as f64 - p as f64 - 1.0)).sqrt()
}

/// Even factor sizes `(m₁, m₂)` with `m₁·m₂ = 2N` and matched mean spacing.
fn quotient_factor_sizes(p: usize, n: usize, count: usize, a: f64) -> Option<(usize, usize)> {
    let total = 2 * count;
    let (d1, d2) = (n - p, p);
    let (v1, v2) = (sphere_volume(d1, 1.0), sphere_volume(d2, a));
    let mut best: Option<(f64, usize, usize)> = None;
    for m1 in (2..=total).step_by(2) {
        if !total.is_multiple_of(m1) {
            continue;
        }
        let m2 = total / m1;
        if !m2.is_multiple_of(2) || m1 < d1 + 2 || m2 < d2 + 2 {
            continue;
        }
        let h1 = (v1 / m1 as f64).powf(1.0 / d1 as f64);
        let h2 = (v2 / m2 as f64).powf(1.0 / d2 as f64);
        let score = (h1 / h2).ln().abs();
        if best.is_none_or(|b| score < b.0) {
            best = Some((score, m1, m2));
        }
    }
    best.map(|(_, a, b)| (a, b))
}

/// The unorientable quotient of `S^{n−p} × S^p(a)` by
/// `((x₀, x₁, …), y) ↦ ((−x₀, x₁, …), −y)`, sampled with `N` classes.
pub fn quotient_example(p: usize, n: usize, count: usize, seed: u64) -> Result<SampledManifold> {
    if p < 3 || p.is_multiple_of(2) {
        return Err(ManifoldError::InvalidParams(format!("p = {p} must be odd and ≥ 3")));
    }
    if n <= 2 * p {
        return Err(ManifoldError::InvalidParams(format!("need n > 2p, got n = {n}, p = {p}")));
    }
    let a = quotient_radius(p, n);
    let (m1, m2) =
        quotient_factor_sizes(p, n, count, a).ok_or_else(|| ManifoldError::InvalidParams(format!("cannot split 2·{count} into even factor sizes")))?;
    let f1 = sample_sphere_symmetric(n - p, 1.0, m1, seed, Involution::FlipFirst)?;
    let f2 = sample_sphere_symmetric(p, a, m2, seed.wrapping_add(1), Involution::Antipodal)?;
    let lifted = product(&f1, &f2)?;
    let (h1, h2) = (m1 / 2, m2 / 2);
    let sigma1 = |i: usize| if i < h1 { i + h1 } else { i - h1 };
    let sigma2 = |i: usize| if i < h2 { i + h2 } else { i - h2 };
    let a0 = f1.ambient;
    let mut flip = vec![1.0; lifted.ambient];
    flip[0] = -1.0;
    flip[a0..].iter_mut().for_each(|s| *s = -1.0);
    let mut rep = Vec::with_capacity(count);
    let mut partner = Vec::with_capacity(count);
    let mut class_of = vec![usize::MAX; lifted.len()];
    for (l, &(i1, i2)) in lifted.product_parts().unwrap().1.iter().enumerate() {
        if class_of[l] != usize::MAX {
            continue;
        }
        let other = sigma1(i1) * m2 + sigma2(i2);
        let x0 = f1.point(i1)[0];
        let y0 = f2.point(i2)[0];
        let keep_l = x0 > 0.0 || (x0 == 0.0 && y0 >= 0.0);
        let (r, q) = if keep_l { (l, other) } else { (other, l) };
        class_of[r] = rep.len();
        class_of[q] = rep.len();
        rep.push(r);
        partner.push(q);
    }
    let dim = lifted.dim;
    let ambient = lifted.ambient;
    let mut points = Vec::with_capacity(count * ambient);
    let mut frames = Vec::with_capacity(count * ambient * dim);
    let mut weights = Vec::with_capacity(count);
    for &r in &rep {
        points.extend_from_slice(lifted.point(r));
        frames.extend_from_slice(&lifted.frames[r * dim * ambient..(r + 1) * dim * ambient]);
        weights.push(lifted.weights[r]);
    }
    Ok(SampledManifold {
        dim,
        ambient,
        points,
        frames,
        weights,
        orientable: Some(false),
        curvature: lifted.curvature.clone(),
        spec: ModelSpec::Quotient { p, n, a, points: count, seed },
        geometry: Geometry::Quotient { p, a, lifted: Box::new(lifted), rep, partner, class_of, flip },
    })
}

// ---------------------------------------------------------------------------
// Text serialization
// ---------------------------------------------------------------------------

const FORMAT_TAG: &str = "# pinchkit-manifold v1";

fn spec_header(spec: &ModelSpec, out: &mut String, prefix: &str) {
    match spec {
        ModelSpec::Sphere { n, r, points, seed, sampling } => {
            let s = match sampling {
                Sampling::Iid => "iid",
                Sampling::QuasiUniform => "quasi-uniform",
            };
            let _ = writeln!(out, "{prefix}kind sphere n {n} r {r:.17e} N {points} seed {seed} sampling {s}");
        }
        ModelSpec::Product { factors, points, full_grid } => {
            let _ = writeln!(out, "{prefix}kind product N {points} full_grid {full_grid}");
            for f in factors {
                spec_header(f, out, "factor ");
            }
        }
        ModelSpec::Quotient { p, n, a, points, seed } => {
            let _ = writeln!(out, "{prefix}kind quotient p {p} n {n} a {a:.17e} N {points} seed {seed}");
        }
    }
}

impl SampledManifold {
    /// Text form: a header describing the model, then one row per point,
    /// `point | frame | weight`, with `| a b` factor indices for products and
    /// `| a b | a' b'` representative and partner factor indices for the quotient.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        spec_header(&self.spec, &mut out, "");
        let _ = writeln!(out, "dim {} ambient {}", self.dim, self.ambient);
        let parts_pairs = match &self.geometry {
            Geometry::Product { pairs, .. } => Some(pairs.clone()),
            _ => None,
        };
        for i in 0..self.len() {
            let pt: Vec<String> = self.point(i).iter().map(|x| format!("{x:.17e}")).collect();
            let fr: Vec<String> = self.frames[i * self.dim * self.ambient..(i + 1) * self.dim * self.ambient].iter().map(|x| format!("{x:.17e}")).collect();
            let _ = write!(out, "{} | {} | {:.17e}", pt.join(" "), fr.join(" "), self.weights[i]);
            if let Some(pairs) = &parts_pairs {
                let _ = write!(out, " | {} {}", pairs[i].0, pairs[i].1);
            }
            if let Geometry::Quotient { lifted, rep, partner, .. } = &self.geometry {
                let lp = lifted.product_parts().unwrap().1;
                let _ = write!(out, " | {} {} | {} {}", lp[rep[i]].0, lp[rep[i]].1, lp[partner[i]].0, lp[partner[i]].1);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Parses [`SampledManifold::to_text`] output and validates the invariants.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, msg: &str| ManifoldError::Parse { line: line + 1, msg: msg.to_string() };
        let (l0, tag) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
        if tag.trim() != FORMAT_TAG {
            return Err(perr(l0, "missing format tag"));
        }
        let mut header = Vec::new();
        let mut dims = None;
        for (ln, line) in lines.by_ref() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.first() == Some(&"dim") {
                let d = kv_usize(&toks, "dim").ok_or_else(|| perr(ln, "bad dim line"))?;
                let a = kv_usize(&toks, "ambient").ok_or_else(|| perr(ln, "bad dim line"))?;
                dims = Some((d, a));
                break;
            }
            header.push((ln, toks.into_iter().map(String::from).collect::<Vec<_>>()));
        }
        let (dim, ambient) = dims.ok_or_else(|| perr(0, "missing dim line"))?;
        let mut rows = Vec::new();
        for (ln, line) in lines {
            let groups: Vec<Vec<f64>> = line
                .split('|')
                .map(|g| g.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| perr(ln, "non-numeric entry"))?;
            if groups.len() < 3 || groups[0].len() != ambient || groups[1].len() != ambient * dim || groups[2].len() != 1 {
                return Err(perr(ln, "row shape does not match header"));
            }
            rows.push((ln, groups));
        }
        let (hl, first) = header.first().ok_or_else(|| perr(0, "missing kind line"))?;
        let kind = kv_str(first, "kind").ok_or_else(|| perr(*hl, "missing kind"))?;
        let m = match kind {
            "sphere" => {
                let (n, r) = sphere_kv(first).ok_or_else(|| perr(*hl, "bad sphere header"))?;
                if n != dim || ambient != n + 1 {
                    return Err(perr(*hl, "sphere dimensions disagree"));
                }
                let pts: Vec<Vec<f64>> = rows.iter().map(|(_, g)| g[0].clone()).collect();
                let mut s = Self::sphere_from_points(n, r, &pts)?;
                s.spec = sphere_spec_from(first, pts.len());
                check_rows(&s, &rows)?;
                s
            }
            "product" => {
                if header.len() < 3 {
                    return Err(perr(*hl, "product needs two factor lines"));
                }
                let f1 = &header[1].1;
                let f2 = &header[2].1;
                let (n1, r1) = sphere_kv(f1).ok_or_else(|| perr(header[1].0, "only sphere factors are supported"))?;
                let (n2, r2) = sphere_kv(f2).ok_or_else(|| perr(header[2].0, "only sphere factors are supported"))?;
                let m1 = kv_usize(f1, "N").ok_or_else(|| perr(header[1].0, "missing N"))?;
                let m2 = kv_usize(f2, "N").ok_or_else(|| perr(header[2].0, "missing N"))?;
                let full = kv_str(first, "full_grid") == Some("true");
                let mut p1: Vec<Option<Vec<f64>>> = vec![None; m1];
                let mut p2: Vec<Option<Vec<f64>>> = vec![None; m2];
                let mut pairs = Vec::with_capacity(rows.len());
                for (ln, g) in &rows {
                    let idx = g.get(3).filter(|v| v.len() == 2).ok_or_else(|| perr(*ln, "missing factor indices"))?;
                    let (a, b) = (idx[0] as usize, idx[1] as usize);
                    if a >= m1 || b >= m2 {
                        return Err(perr(*ln, "factor index out of range"));
                    }
                    p1[a] = Some(g[0][..n1 + 1].to_vec());
                    p2[b] = Some(g[0][n1 + 1..].to_vec());
                    pairs.push((a, b));
                }
                let p1: Vec<Vec<f64>> = p1.into_iter().collect::<Option<_>>().ok_or_else(|| perr(0, "factor sample incomplete"))?;
                let p2: Vec<Vec<f64>> = p2.into_iter().collect::<Option<_>>().ok_or_else(|| perr(0, "factor sample incomplete"))?;
                let mut s1 = Self::sphere_from_points(n1, r1, &p1)?;
                s1.spec = sphere_spec_from(f1, m1);
                let mut s2 = Self::sphere_from_points(n2, r2, &p2)?;
                s2.spec = sphere_spec_from(f2, m2);
                let mut prod = build_product(&s1, &s2, pairs, full)?;
                if !full {
                    for (w, (_, g)) in prod.weights.iter_mut().zip(&rows) {
                        *w = g[2][0];
                    }
                }
                check_rows(&prod, &rows)?;
                prod
            }
            "quotient" => {
                let p = kv_usize(first, "p").ok_or_else(|| perr(*hl, "missing p"))?;
                let n = kv_usize(first, "n").ok_or_else(|| perr(*hl, "missing n"))?;
                let seed = kv_usize(first, "seed").unwrap_or(0) as u64;
                let count = rows.len();
                let q = rebuild_quotient(p, n, seed, &rows).map_err(|e| match e {
                    ManifoldError::Parse { .. } => e,
                    other => other,
                })?;
                if q.len() != count {
                    return Err(perr(0, "class count mismatch"));
                }
                check_rows(&q, &rows)?;
                q
            }
            _ => return Err(perr(*hl, "unknown kind")),
        };
        m.validate(1000, 0)?;
        Ok(m)
    }
}

fn rebuild_quotient(p: usize, n: usize, seed: u64, rows: &[(usize, Vec<Vec<f64>>)]) -> Result<SampledManifold> {
    let a = quotient_radius(p, n);
    let a1 = n - p + 1;
    let perr = |line: usize, msg: &str| ManifoldError::Parse { line: line + 1, msg: msg.to_string() };
    let mut m1 = 0;
    let mut m2 = 0;
    for (ln, g) in rows {
        if g.len() < 5 || g[3].len() != 2 || g[4].len() != 2 {
            return Err(perr(*ln, "quotient rows need representative and partner indices"));
        }
        m1 = m1.max(g[3][0] as usize + 1).max(g[4][0] as usize + 1);
        m2 = m2.max(g[3][1] as usize + 1).max(g[4][1] as usize + 1);
    }
    let mut p1: Vec<Option<Vec<f64>>> = vec![None; m1];
    let mut p2: Vec<Option<Vec<f64>>> = vec![None; m2];
    for (_, g) in rows {
        let x = g[0][..a1].to_vec();
        let y = g[0][a1..].to_vec();
        let mut sx = x.clone();
        sx[0] = -sx[0];
        let sy: Vec<f64> = y.iter().map(|v| -v).collect();
        p1[g[3][0] as usize] = Some(x);
        p2[g[3][1] as usize] = Some(y);
        p1[g[4][0] as usize] = Some(sx);
        p2[g[4][1] as usize] = Some(sy);
    }
    let p1: Vec<Vec<f64>> = p1.into_iter().collect::<Option<_>>().ok_or_else(|| perr(0, "factor sample incomplete"))?;
    let p2: Vec<Vec<f64>> = p2.into_iter().collect::<Option<_>>().ok_or_else(|| perr(0, "factor sample incomplete"))?;
    let f1 = SampledManifold::sphere_from_points(n - p, 1.0, &p1)?;
    let f2 = SampledManifold::sphere_from_points(p, a, &p2)?;
    let lifted = product(&f1, &f2)?;
    let mut rep = Vec::with_capacity(rows.len());
    let mut partner = Vec::with_capacity(rows.len());
    let mut class_of = vec![usize::MAX; lifted.len()];
    for (c, (_, g)) in rows.iter().enumerate() {
        let r = g[3][0] as usize * m2 + g[3][1] as usize;
        let q = g[4][0] as usize * m2 + g[4][1] as usize;
        class_of[r] = c;
        class_of[q] = c;
        rep.push(r);
        partner.push(q);
    }
    if class_of.contains(&usize::MAX) {
        return Err(ManifoldError::Invariant("quotient classes do not cover the lifted grid".into()));
    }
    let dim = lifted.dim;
    let ambient = lifted.ambient;
    let mut points = Vec::new();
    let mut frames = Vec::new();
    let mut weights = Vec::new();
    for &r in &rep {
        points.extend_from_slice(lifted.point(r));
        frames.extend_from_slice(&lifted.frames[r * dim * ambient..(r + 1) * dim * ambient]);
        weights.push(lifted.weights[r]);
    }
    let mut flip = vec![1.0; ambient];
    flip[0] = -1.0;
    flip[a1..].iter_mut().for_each(|s| *s = -1.0);
    Ok(SampledManifold {
        dim,
        ambient,
        points,
        frames,
        weights,
        orientable: Some(false),
        curvature: lifted.curvature.clone(),
        spec: ModelSpec::Quotient { p, n, a, points: rows.len(), seed },
        geometry: Geometry::Quotient { p, a, lifted: Box::new(lifted), rep, partner, class_of, flip },
    })
}

fn check_rows(m: &SampledManifold, rows: &[(usize, Vec<Vec<f64>>)]) -> Result<()> {
    for (i, (ln, g)) in rows.iter().enumerate() {
        let stored_pt = &g[0];
        let pt = m.point(i);
        if stored_pt.iter().zip(pt).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(ManifoldError::Parse { line: ln + 1, msg: "point is not on the model".into() });
        }
        let fr = &m.frames[i * m.dim * m.ambient..(i + 1) * m.dim * m.ambient];
        if g[1].iter().zip(fr).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(ManifoldError::Parse { line: ln + 1, msg: "frame disagrees with the canonical frame".into() });
        }
        if (g[2][0] - m.weights[i]).abs() > 1e-9 * m.weights[i].abs().max(1.0) {
            return Err(ManifoldError::Parse { line: ln + 1, msg: "weight disagrees with the model".into() });
        }
    }
    Ok(())
}

fn kv_str<'a>(toks: &'a [impl AsRef<str>], key: &str) -> Option<&'a str> {
    toks.iter().position(|t| t.as_ref() == key).and_then(|p| toks.get(p + 1)).map(|s| s.as_ref())
}

fn kv_usize(toks: &[impl AsRef<str>], key: &str) -> Option<usize> {
    kv_str(toks, key).and_then(|s| s.parse().ok())
}

fn sphere_kv(toks: &[String]) -> Option<(usize, f64)> {
    if kv_str(toks, "kind") != Some("sphere") {
        return None;
    }
    Some((kv_usize(toks, "n")?, kv_str(toks, "r")?.parse().ok()?))
}

fn sphere_spec_from(toks: &[String], points: usize) -> ModelSpec {
    let (n, r) = sphere_kv(toks).unwrap_or((0, 1.0));
    let sampling = if kv_str(toks, "sampling") == Some("quasi-uniform") { Sampling::QuasiUniform } else { Sampling::Iid };
    ModelSpec::Sphere { n, r, points, seed: kv_usize(toks, "seed").unwrap_or(0) as u64, sampling }
}
