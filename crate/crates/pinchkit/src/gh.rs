//! Finite metric spaces, Hausdorff distance, ε-Hausdorff approximation maps and
//! the glued metric certifying `d_GH(X, Y) ≤ 3ε/2`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GhError {
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("empty subset")]
    EmptySubset,
    #[error("index {index} out of range for a space of size {size}")]
    OutOfRange { index: usize, size: usize },
    #[error("product of {0} points exceeds the dense limit {MAX_DENSE}")]
    TooLarge(usize),
    #[error("glued metric violates the triangle inequality by {violation:.3e} at {triple:?}")]
    GluedMetric { violation: f64, triple: (usize, usize, usize) },
    #[error("map is not an approximation at ε = {epsilon}: measured {measured}")]
    NotApproximation { epsilon: f64, measured: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

type Result<T> = std::result::Result<T, GhError>;

/// Largest dense distance matrix that product spaces will materialize.
pub const MAX_DENSE: usize = 6000;
/// Triangle inequality is checked on every triple up to this size.
pub const EXHAUSTIVE_TRIPLES: usize = 300;
/// Random triples checked above `EXHAUSTIVE_TRIPLES`.
pub const RANDOM_TRIPLES: usize = 100_000;

/// A finite metric space given by its distance function.
pub trait MetricSpace: Sync {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Distances computed on demand.
pub struct LazyMetric<F: Fn(usize, usize) -> f64 + Sync> {
    size: usize,
    f: F,
}

impl<F: Fn(usize, usize) -> f64 + Sync> LazyMetric<F> {
    pub fn new(size: usize, f: F) -> Self {
        LazyMetric { size, f }
    }
}

impl<F: Fn(usize, usize) -> f64 + Sync> MetricSpace for LazyMetric<F> {
    fn len(&self) -> usize {
        self.size
    }
    fn dist(&self, i: usize, j: usize) -> f64 {
        (self.f)(i, j)
    }
}

/// Dense symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMetricSpace {
    size: usize,
    d: Vec<f64>,
}

impl MetricSpace for FiniteMetricSpace {
    fn len(&self) -> usize {
        self.size
    }
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.size + j]
    }
}

/// Relative slack allowed in triangle-inequality checks.
const TRIANGLE_TOL: f64 = 1e-12;

/// Largest triangle-inequality violation over all or random triples.
fn worst_triangle<M: MetricSpace + ?Sized>(m: &M, random: usize, seed: u64) -> (f64, (usize, usize, usize)) {
    let n = m.len();
    if n < 3 {
        return (f64::NEG_INFINITY, (0, 0, 0));
    }
    let check = |i: usize, j: usize, k: usize| m.dist(i, k) - m.dist(i, j) - m.dist(j, k);
    let rows: Vec<(f64, (usize, usize, usize))> = if n <= EXHAUSTIVE_TRIPLES {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut w = (f64::NEG_INFINITY, (i, i, i));
                for j in 0..n {
                    for k in 0..n {
                        let v = check(i, j, k);
                        if v > w.0 {
                            w = (v, (i, j, k));
                        }
                    }
                }
                w
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples: Vec<(usize, usize, usize)> = (0..random).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        triples.par_iter().map(|&(i, j, k)| (check(i, j, k), (i, j, k))).collect()
    };
    rows.into_iter().fold((f64::NEG_INFINITY, (0, 0, 0)), |a, b| if b.0 > a.0 { b } else { a })
}

fn diameter<M: MetricSpace + ?Sized>(m: &M) -> f64 {
    let n = m.len();
    (0..n).into_par_iter().map(|i| (0..n).map(|j| m.dist(i, j)).fold(0.0, f64::max)).reduce(|| 0.0, f64::max)
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, nonnegativity and the triangle inequality.
    pub fn new(size: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != size * size {
            return Err(GhError::InvalidMetric(format!("{} entries for size {size}", d.len())));
        }
        for i in 0..size {
            if d[i * size + i] != 0.0 {
                return Err(GhError::InvalidMetric(format!("nonzero diagonal at {i}")));
            }
            for j in 0..size {
                let v = d[i * size + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(GhError::InvalidMetric(format!("entry ({i},{j}) = {v}")));
                }
                if v != d[j * size + i] {
                    return Err(GhError::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        let m = FiniteMetricSpace { size, d };
        let scale = diameter(&m).max(1.0);
        let (v, t) = worst_triangle(&m, RANDOM_TRIPLES, 0);
        if v > TRIANGLE_TOL * scale {
            return Err(GhError::InvalidMetric(format!("triangle inequality fails by {v:.3e} at {t:?}")));
        }
        Ok(m)
    }

    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Result<Self> {
        let d: Vec<f64> = (0..size * size).into_par_iter().map(|k| f(k / size, k % size)).collect();
        Self::new(size, d)
    }

    /// Materializes any metric space.
    pub fn from_metric<M: MetricSpace + ?Sized>(m: &M) -> Result<Self> {
        Self::from_fn(m.len(), |i, j| if i == j { 0.0 } else { m.dist(i, j) })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.d
    }

    pub fn diameter(&self) -> f64 {
        diameter(self)
    }

    pub fn subspace(&self, idx: &[usize]) -> Result<Self> {
        check_indices(self.size, idx)?;
        let k = idx.len();
        Ok(FiniteMetricSpace { size: k, d: (0..k * k).map(|t| self.dist(idx[t / k], idx[t % k])).collect() })
    }

    /// Comma-separated rows of the distance matrix, full precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in self.d.chunks(self.size.max(1)) {
            wr.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut d = Vec::new();
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec?;
            for field in rec.iter() {
                d.push(field.trim().parse::<f64>().map_err(|e| GhError::InvalidMetric(format!("row {rows}: {e}")))?);
            }
            rows += 1;
        }
        Self::new(rows, d)
    }
}

fn check_indices(size: usize, idx: &[usize]) -> Result<()> {
    match idx.iter().find(|&&i| i >= size) {
        Some(&index) => Err(GhError::OutOfRange { index, size }),
        None => Ok(()),
    }
}

/// `max(sup_{a∈A} d(a, B), sup_{b∈B} d(b, A))`.
pub fn hausdorff_distance<M: MetricSpace + ?Sized>(x: &M, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GhError::EmptySubset);
    }
    check_indices(x.len(), a)?;
    check_indices(x.len(), b)?;
    let directed = |s: &[usize], t: &[usize]| s.par_iter().map(|&i| t.iter().map(|&j| x.dist(i, j)).fold(f64::INFINITY, f64::min)).reduce(|| 0.0, f64::max);
    Ok(directed(a, b).max(directed(b, a)))
}

/// Outcome of checking a map `X → Y` against the two approximation conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCheck {
    /// `max |d_X(a,b) − d_Y(f(a),f(b))|`.
    pub distortion: f64,
    pub distortion_pair: (usize, usize),
    /// `sup_y d_Y(y, f(X))`.
    pub density: f64,
    pub worst_uncovered: usize,
    /// Smallest ε the map realizes: the larger of the two.
    pub measured: f64,
    pub epsilon: f64,
    pub passes: bool,
}

pub fn verify_approximation_map<X: MetricSpace + ?Sized, Y: MetricSpace + ?Sized>(x: &X, y: &Y, map: &[usize], epsilon: f64) -> Result<MapCheck> {
    if map.len() != x.len() {
        return Err(GhError::InvalidMetric(format!("map has {} entries for {} points", map.len(), x.len())));
    }
    check_indices(y.len(), map)?;
    let n = x.len();
    let rows: Vec<(f64, (usize, usize))> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut w = (0.0, (a, a));
            for b in a + 1..n {
                let v = (x.dist(a, b) - y.dist(map[a], map[b])).abs();
                if v > w.0 {
                    w = (v, (a, b));
                }
            }
            w
        })
        .collect();
    let (distortion, distortion_pair) = rows.into_iter().fold((0.0, (0, 0)), |a, b| if b.0 > a.0 { b } else { a });
    let mut image = map.to_vec();
    image.sort_unstable();
    image.dedup();
    let cover: Vec<f64> = (0..y.len()).into_par_iter().map(|t| image.iter().map(|&s| y.dist(t, s)).fold(f64::INFINITY, f64::min)).collect();
    let (worst_uncovered, density) = cover.iter().enumerate().fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let measured = distortion.max(density);
    Ok(MapCheck { distortion, distortion_pair, density, worst_uncovered, measured, epsilon, passes: distortion < epsilon && density < epsilon })
}

/// The metric on `X ⊔ Y` built from an ε-approximation `f`: `d_X`, `d_Y`, and
/// `d(x, y) = ε/2 + inf_{x'} (d_X(x, x') + d_Y(f(x'), y))`. Indices `0..|X|` are `X`.
pub struct GluedMetric<'a, X: MetricSpace + ?Sized, Y: MetricSpace + ?Sized> {
    x: &'a X,
    y: &'a Y,
    map: &'a [usize],
    epsilon: f64,
}

impl<X: MetricSpace + ?Sized, Y: MetricSpace + ?Sized> MetricSpace for GluedMetric<'_, X, Y> {
    fn len(&self) -> usize {
        self.x.len() + self.y.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let nx = self.x.len();
        match (i < nx, j < nx) {
            (true, true) => self.x.dist(i, j),
            (false, false) => self.y.dist(i - nx, j - nx),
            (true, false) => self.cross(i, j - nx),
            (false, true) => self.cross(j, i - nx),
        }
    }
}

impl<X: MetricSpace + ?Sized, Y: MetricSpace + ?Sized> GluedMetric<'_, X, Y> {
    fn cross(&self, xi: usize, yj: usize) -> f64 {
        let inf = (0..self.x.len()).map(|k| self.x.dist(xi, k) + self.y.dist(self.map[k], yj)).fold(f64::INFINITY, f64::min);
        0.5 * self.epsilon + inf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhBound {
    /// `3ε/2`.
    pub bound: f64,
    pub triples_checked: usize,
    pub worst_triangle: f64,
}

/// Builds the glued metric for a map that passed at `epsilon`, validates it on
/// `triples` random triples (every triple when small), and returns `3ε/2`.
pub fn gh_upper_bound_from_map<X: MetricSpace + ?Sized, Y: MetricSpace + ?Sized>(
    x: &X,
    y: &Y,
    map: &[usize],
    epsilon: f64,
    triples: usize,
    seed: u64,
) -> Result<GhBound> {
    let check = verify_approximation_map(x, y, map, epsilon)?;
    if !check.passes {
        return Err(GhError::NotApproximation { epsilon, measured: check.measured });
    }
    let glued = glued_metric(x, y, map, epsilon);
    let diam = diameter(x).max(diameter(y)).max(1.0);
    let (v, t) = worst_triangle(&glued, triples, seed);
    // Cross distances are sums of three terms, so allow a few roundings.
    if v > 4.0 * TRIANGLE_TOL * diam {
        return Err(GhError::GluedMetric { violation: v, triple: t });
    }
    let n = glued.len();
    let checked = if n <= EXHAUSTIVE_TRIPLES { n * n * n } else { triples };
    Ok(GhBound { bound: 1.5 * epsilon, triples_checked: checked, worst_triangle: v })
}

pub fn glued_metric<'a, X: MetricSpace + ?Sized, Y: MetricSpace + ?Sized>(x: &'a X, y: &'a Y, map: &'a [usize], epsilon: f64) -> GluedMetric<'a, X, Y> {
    GluedMetric { x, y, map, epsilon }
}

/// `S × X` with `d = (d_S² + d_X²)^{1/2}`; point `(s, x)` has index `s·|X| + x`.
pub fn product_space(s: &FiniteMetricSpace, x: &FiniteMetricSpace) -> Result<FiniteMetricSpace> {
    let size = s.size.checked_mul(x.size).ok_or(GhError::TooLarge(usize::MAX))?;
    if size > MAX_DENSE {
        return Err(GhError::TooLarge(size));
    }
    let nx = x.size;
    let d: Vec<f64> = (0..size * size)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / size, k % size);
            let ds = s.dist(a / nx, b / nx);
            let dx = x.dist(a % nx, b % nx);
            (ds * ds + dx * dx).sqrt()
        })
        .collect();
    Ok(FiniteMetricSpace { size, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize) -> FiniteMetricSpace {
        FiniteMetricSpace::from_fn(n, |i, j| {
            let k = (i as isize - j as isize).unsigned_abs();
            k.min(n - k) as f64 * std::f64::consts::TAU / n as f64
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(FiniteMetricSpace::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(FiniteMetricSpace::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(FiniteMetricSpace::new(3, vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn hausdorff_basics() {
        let c = circle(12);
        assert_eq!(hausdorff_distance(&c, &[1, 4], &[1, 4]).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&c, &[0], &[3]).unwrap(), c.dist(0, 3));
        assert!(matches!(hausdorff_distance(&c, &[], &[3]), Err(GhError::EmptySubset)));
    }

    #[test]
    fn identity_and_constant_maps() {
        let c = circle(10);
        let id: Vec<usize> = (0..10).collect();
        let chk = verify_approximation_map(&c, &c, &id, 1e-9).unwrap();
        assert!(chk.passes && chk.measured == 0.0);
        let two = FiniteMetricSpace::new(2, vec![0.0, 2.5, 2.5, 0.0]).unwrap();
        let chk = verify_approximation_map(&two, &two, &[0, 0], 10.0).unwrap();
        assert_eq!(chk.distortion, 2.5);
        let b = gh_upper_bound_from_map(&c, &c, &id, 1e-9, 1000, 0).unwrap();
        assert!(b.bound < 2e-9);
    }

    #[test]
    fn glued_metric_restricts_to_factors() {
        let c = circle(8);
        let coarse = circle(4);
        let map: Vec<usize> = (0..8).map(|i| i / 2).collect();
        let eps = verify_approximation_map(&c, &coarse, &map, f64::INFINITY).unwrap().measured * 1.01;
        let b = gh_upper_bound_from_map(&c, &coarse, &map, eps, 1000, 0).unwrap();
        assert_eq!(b.bound, 1.5 * eps);
        let g = glued_metric(&c, &coarse, &map, eps);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(g.dist(i, j), c.dist(i, j));
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.dist(8 + i, 8 + j), coarse.dist(i, j));
            }
        }
        assert!(gh_upper_bound_from_map(&c, &coarse, &map, 0.5 * eps, 1000, 0).is_err());
    }

    #[test]
    fn product_with_a_point_is_isometric() {
        let c = circle(6);
        let pt = FiniteMetricSpace::new(1, vec![0.0]).unwrap();
        assert_eq!(product_space(&c, &pt).unwrap().matrix(), c.matrix());
        let big = circle(100);
        assert!(matches!(product_space(&big, &big), Err(GhError::TooLarge(10_000))));
    }

    #[test]
    fn csv_round_trip() {
        let c = circle(7);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(FiniteMetricSpace::read_csv(buf.as_slice()).unwrap(), c);
    }
}
