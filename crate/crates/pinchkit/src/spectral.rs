//! Lowest eigenpairs of symmetric positive semidefinite pencils `(A, M)` with a
//! diagonal positive mass `M`.
//!
//! The solver works on `C = M^{-1/2} A M^{-1/2}`. Large problems use a restarted
//! block Lanczos iteration with full reorthogonalization; the projected matrix is
//! formed explicitly as `QᵀCQ`, which makes thick restarts with Ritz vectors
//! exact. Problems below `dense_below` rows are solved densely.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A symmetric stiffness operator with an optional diagonal mass.
pub trait SymmetricPencil: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal of `M`; `None` means the identity.
    fn mass(&self) -> Option<&[f64]> {
        None
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("not converged after {restarts} restarts (worst residual {worst:.3e})")]
    NotConverged { restarts: usize, worst: f64, partial: Box<Spectrum> },
    #[error("zero vector")]
    ZeroVector,
    #[error("subspace is linearly dependent")]
    DependentSubspace,
}

type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Dense,
    BlockLanczos,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub seed: u64,
    /// Block size; defaults to `k` clamped to `2..=12`.
    pub block: Option<usize>,
    /// Largest Krylov basis before a restart; defaults to a memory-bounded size.
    pub max_basis: Option<usize>,
    pub max_restarts: usize,
    /// Problems with fewer rows are solved densely.
    pub dense_below: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { seed: 0x5eed, block: None, max_basis: None, max_restarts: 200, dense_below: 500 }
    }
}

/// Lowest eigenpairs of a pencil.
///
/// Eigenvectors are `M`-orthonormal (`vᵀMv = 1`). Residuals are
/// `‖M^{-1/2}(Av − λMv)‖₂`, the residual of the normalized eigenvector of `C`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Cluster label of each eigenvalue; neighbours within `1e-6·(1+λ)` share a label.
    pub clusters: Vec<usize>,
    pub method: SolverMethod,
    pub matvecs: usize,
    pub restarts: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index ranges of eigenvalue clusters.
    pub fn cluster_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.clusters.len() {
            if i == self.clusters.len() || self.clusters[i] != self.clusters[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    /// CSV with header `index,eigenvalue,residual`; indices count from 1.
    pub fn write_csv<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "eigenvalue", "residual"])?;
        for (i, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            wr.write_record([(i + 1).to_string(), format!("{l:.12e}"), format!("{r:.3e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn label_clusters(vals: &[f64]) -> Vec<usize> {
    let mut out = Vec::with_capacity(vals.len());
    let mut label = 0;
    for (i, &v) in vals.iter().enumerate() {
        if i > 0 && (v - vals[i - 1]).abs() > 1e-6 * (1.0 + v.abs()) {
            label += 1;
        }
        out.push(label);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yv, xv)| *yv += alpha * xv);
}

/// `C = D A D` with `D = M^{-1/2}`.
struct Scaled<'a, P: SymmetricPencil + ?Sized> {
    op: &'a P,
    d: Vec<f64>,
    scratch_in: std::cell::RefCell<Vec<f64>>,
}

impl<'a, P: SymmetricPencil + ?Sized> Scaled<'a, P> {
    fn new(op: &'a P) -> Result<Self> {
        let n = op.dim();
        let d = match op.mass() {
            Some(m) => {
                if m.len() != n || m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(SolverError::InvalidRequest("mass must be positive".into()));
                }
                m.iter().map(|v| 1.0 / v.sqrt()).collect()
            }
            None => vec![1.0; n],
        };
        Ok(Scaled { op, d, scratch_in: std::cell::RefCell::new(vec![0.0; n]) })
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut s = self.scratch_in.borrow_mut();
        s.iter_mut().zip(x.iter().zip(&self.d)).for_each(|(sv, (xv, dv))| *sv = xv * dv);
        self.op.apply(&s, y);
        y.iter_mut().zip(&self.d).for_each(|(yv, dv)| *yv *= dv);
    }
}

/// Lowest `k` eigenpairs with residuals `≤ tol`, using default options.
pub fn lowest_eigenpairs<P: SymmetricPencil + ?Sized>(op: &P, k: usize, tol: f64) -> Result<Spectrum> {
    lowest_eigenpairs_with(op, k, tol, &SolverOptions::default())
}

pub fn lowest_eigenpairs_with<P: SymmetricPencil + ?Sized>(op: &P, k: usize, tol: f64, opts: &SolverOptions) -> Result<Spectrum> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(SolverError::InvalidRequest(format!("k = {k} for size {n}")));
    }
    if !(tol > 0.0) {
        return Err(SolverError::InvalidRequest("tolerance must be positive".into()));
    }
    let c = Scaled::new(op)?;
    if n < opts.dense_below {
        dense_solve(&c, k)
    } else {
        lanczos(&c, k, tol, opts)
    }
}

fn finish(c: &Scaled<'_, impl SymmetricPencil + ?Sized>, vals: Vec<f64>, us: Vec<Vec<f64>>, method: SolverMethod, matvecs: usize, restarts: usize) -> Spectrum {
    let n = c.d.len();
    let mut residuals = Vec::with_capacity(vals.len());
    let mut cu = vec![0.0; n];
    for (l, u) in vals.iter().zip(&us) {
        c.apply(u, &mut cu);
        axpy(-l, u, &mut cu);
        residuals.push(dot(&cu, &cu).sqrt());
    }
    let eigenvectors = us.into_iter().map(|u| u.iter().zip(&c.d).map(|(a, b)| a * b).collect()).collect();
    Spectrum { clusters: label_clusters(&vals), eigenvalues: vals, eigenvectors, residuals, method, matvecs, restarts }
}

fn dense_solve(c: &Scaled<'_, impl SymmetricPencil + ?Sized>, k: usize) -> Result<Spectrum> {
    let n = c.d.len();
    let mut mat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        c.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            mat[(i, j)] = col[i];
        }
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap().then(a.cmp(&b)));
    let vals: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let us: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut u: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            canonical_sign(&mut u);
            u
        })
        .collect();
    Ok(finish(c, vals, us, SolverMethod::Dense, n, 0))
}

/// Fixes the sign so the largest-magnitude entry is positive (ties to the first).
fn canonical_sign(u: &mut [f64]) {
    let mut best = 0;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Orthogonalizes `w` against `basis` twice; returns the accumulated coefficients.
fn project_out(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut h = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (hj, q) in h.iter_mut().zip(basis) {
            let c = dot(q, w);
            *hj += c;
            axpy(-c, q, w);
        }
    }
    h
}

fn random_unit_orthogonal(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], n: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        project_out(basis, &mut v);
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

fn lanczos(c: &Scaled<'_, impl SymmetricPencil + ?Sized>, k: usize, tol: f64, opts: &SolverOptions) -> Result<Spectrum> {
    let n = c.d.len();
    let s = opts.block.unwrap_or(k.clamp(2, 12)).clamp(1, n);
    let keep = (k + s).min(n);
    let default_basis = (40_000_000 / n).clamp(3 * keep + 2 * s, 800);
    let max_basis = opts.max_basis.unwrap_or(default_basis).max(keep + 2 * s).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    // Projected matrix, rows of QᵀCQ.
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut pending: Vec<Vec<f64>> = Vec::with_capacity(s);
    for _ in 0..s {
        let mut all = q.clone();
        all.extend(pending.iter().cloned());
        pending.push(random_unit_orthogonal(&mut rng, &all, n));
    }
    let mut matvecs = 0;
    let mut restarts = 0;
    let mut blocks_since_check = 0;
    let mut w = vec![0.0; n];
    loop {
        // Extend the basis by the pending block.
        let start = q.len();
        let mut raw: Vec<Vec<f64>> = Vec::with_capacity(pending.len());
        for p in pending.drain(..) {
            q.push(p);
        }
        let m_now = q.len();
        for row in t.iter_mut() {
            row.resize(m_now, 0.0);
        }
        t.resize_with(m_now, || vec![0.0; m_now]);
        for j in start..q.len() {
            c.apply(&q[j], &mut w);
            matvecs += 1;
            let h = project_out(&q, &mut w);
            for (i, &hi) in h.iter().enumerate() {
                t[i][j] = hi;
                t[j][i] = hi;
            }
            raw.push(w.clone());
        }
        // Orthonormalize the residual block; R holds the coupling coefficients.
        let bs = raw.len();
        let mut r = vec![vec![0.0; bs]; bs];
        let full_space = q.len() >= n;
        for a in 0..bs {
            let mut v = raw[a].clone();
            let mut against: Vec<Vec<f64>> = q.clone();
            against.extend(pending.iter().cloned());
            let h = project_out(&pending, &mut v);
            for (b, hb) in h.iter().enumerate() {
                r[b][a] = *hb;
            }
            project_out(&q, &mut v);
            let nv = dot(&v, &v).sqrt();
            let scale = dot(&raw[a], &raw[a]).sqrt().max(1e-300);
            if nv > 1e-10 * scale && nv > 1e-14 && !full_space {
                v.iter_mut().for_each(|x| *x /= nv);
                r[pending.len()][a] = nv;
                pending.push(v);
            } else if !full_space && q.len() + pending.len() < n {
                // Invariant subspace found: continue with a fresh direction.
                pending.push(random_unit_orthogonal(&mut rng, &against, n));
            } else {
                let _ = against;
            }
        }
        blocks_since_check += 1;
        let m = q.len();
        let must_restart = m + s > max_basis || full_space || pending.is_empty();
        if m < keep && !must_restart {
            continue;
        }
        if blocks_since_check < 4 && !must_restart {
            continue;
        }
        blocks_since_check = 0;
        // Rayleigh–Ritz.
        let tm = DMatrix::from_fn(m, m, |i, j| 0.5 * (t[i][j] + t[j][i]));
        let eig = SymmetricEigen::new(tm);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap().then(a.cmp(&b)));
        // Residual estimate ‖R z_last‖ over the last block.
        let last = start..m;
        let est: Vec<f64> = order[..k.min(m)]
            .iter()
            .map(|&i| {
                let z = eig.eigenvectors.column(i);
                let mut acc = 0.0;
                for row in 0..r.len() {
                    let v: f64 = last.clone().enumerate().map(|(a, jj)| r[row][a] * z[jj]).sum();
                    acc += v * v;
                }
                acc.sqrt()
            })
            .collect();
        let converged = est.len() == k && est.iter().all(|&e| e <= 0.5 * tol);
        if converged || full_space {
            let vals: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
            let us: Vec<Vec<f64>> = order[..k]
                .iter()
                .map(|&i| {
                    let mut u = ritz_vector(&q, eig.eigenvectors.column(i).as_slice());
                    canonical_sign(&mut u);
                    u
                })
                .collect();
            let spec = finish(c, vals, us, SolverMethod::BlockLanczos, matvecs, restarts);
            let worst = spec.residuals.iter().cloned().fold(0.0, f64::max);
            if worst <= tol {
                return Ok(spec);
            }
            if full_space || restarts >= opts.max_restarts {
                return Err(SolverError::NotConverged { restarts, worst, partial: Box::new(spec) });
            }
        }
        if must_restart {
            if restarts >= opts.max_restarts {
                let vals: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
                let us: Vec<Vec<f64>> = order[..k].iter().map(|&i| ritz_vector(&q, eig.eigenvectors.column(i).as_slice())).collect();
                let spec = finish(c, vals, us, SolverMethod::BlockLanczos, matvecs, restarts);
                let worst = spec.residuals.iter().cloned().fold(0.0, f64::max);
                return Err(SolverError::NotConverged { restarts, worst, partial: Box::new(spec) });
            }
            restarts += 1;
            let r_keep = keep.min(m).min(max_basis.saturating_sub(2 * s)).max(k);
            let new_q: Vec<Vec<f64>> = order[..r_keep].iter().map(|&i| ritz_vector(&q, eig.eigenvectors.column(i).as_slice())).collect();
            let thetas: Vec<f64> = order[..r_keep].iter().map(|&i| eig.eigenvalues[i]).collect();
            q = new_q;
            // Re-orthonormalize the kept Ritz vectors against rounding drift.
            for i in 0..q.len() {
                let (head, tail) = q.split_at_mut(i);
                let v = &mut tail[0];
                project_out(head, v);
                let nv = dot(v, v).sqrt();
                v.iter_mut().for_each(|x| *x /= nv);
            }
            t = (0..r_keep)
                .map(|i| {
                    let mut row = vec![0.0; r_keep];
                    row[i] = thetas[i];
                    row
                })
                .collect();
            // The pending block is orthogonal to the old basis and hence to the Ritz vectors.
            let mut fresh = Vec::with_capacity(pending.len());
            for mut p in pending.drain(..) {
                project_out(&q, &mut p);
                project_out(&fresh, &mut p);
                let np = dot(&p, &p).sqrt();
                if np > 1e-8 {
                    p.iter_mut().for_each(|x| *x /= np);
                    fresh.push(p);
                }
            }
            while fresh.len() < s && q.len() + fresh.len() < n {
                let mut all = q.clone();
                all.extend(fresh.iter().cloned());
                fresh.push(random_unit_orthogonal(&mut rng, &all, n));
            }
            pending = fresh;
        }
    }
}

fn ritz_vector(q: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let n = q[0].len();
    let mut y = vec![0.0; n];
    for (qi, &zi) in q.iter().zip(z) {
        axpy(zi, qi, &mut y);
    }
    let ny = dot(&y, &y).sqrt();
    y.iter_mut().for_each(|v| *v /= ny);
    y
}

fn mass_dot(op: &(impl SymmetricPencil + ?Sized), a: &[f64], b: &[f64]) -> f64 {
    match op.mass() {
        Some(m) => a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum(),
        None => dot(a, b),
    }
}

/// `⟨Av, v⟩ / ⟨Mv, v⟩`.
pub fn rayleigh<P: SymmetricPencil + ?Sized>(op: &P, v: &[f64]) -> Result<f64> {
    let den = mass_dot(op, v, v);
    if den == 0.0 || !den.is_finite() {
        return Err(SolverError::ZeroVector);
    }
    let mut av = vec![0.0; v.len()];
    op.apply(v, &mut av);
    Ok(dot(&av, v) / den)
}

/// Largest Rayleigh quotient over the span of `subspace`: an upper bound for
/// `λ_{dim}` by min–max.
pub fn minmax_bound<P: SymmetricPencil + ?Sized>(op: &P, subspace: &[Vec<f64>]) -> Result<f64> {
    let d = subspace.len();
    if d == 0 {
        return Err(SolverError::DependentSubspace);
    }
    let n = op.dim();
    let avs: Vec<Vec<f64>> = subspace
        .iter()
        .map(|v| {
            let mut av = vec![0.0; n];
            op.apply(v, &mut av);
            av
        })
        .collect();
    let ga = DMatrix::from_fn(d, d, |i, j| 0.5 * (dot(&avs[i], &subspace[j]) + dot(&avs[j], &subspace[i])));
    let gm = DMatrix::from_fn(d, d, |i, j| mass_dot(op, &subspace[i], &subspace[j]));
    let ev = SymmetricEigen::new(gm.clone()).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v.abs())));
    if !(lo > 1e-12 * hi) {
        return Err(SolverError::DependentSubspace);
    }
    let chol = gm.cholesky().ok_or(SolverError::DependentSubspace)?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(SolverError::DependentSubspace)?;
    let red = &linv * ga * linv.transpose();
    let red = (&red + red.transpose()) * 0.5;
    Ok(SymmetricEigen::new(red).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Compressed sparse symmetric matrix with optional diagonal mass.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    mass: Option<Vec<f64>>,
}

impl SparseSymmetric {
    /// From `(row, col, value)` triplets; both triangles must be present.
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>, mass: Option<Vec<f64>>) -> Self {
        trip.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymmetric { n, row_ptr, cols, vals, mass }
    }

    /// Laplacian of the path graph on `n` vertices.
    pub fn path_laplacian(n: usize) -> Self {
        let mut t = Vec::new();
        for i in 0..n {
            let deg = if i == 0 || i + 1 == n { 1.0 } else { 2.0 };
            t.push((i, i, if n == 1 { 0.0 } else { deg }));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        Self::from_triplets(n, t, None)
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(), None)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}

impl SymmetricPencil for SparseSymmetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    fn mass(&self) -> Option<&[f64]> {
        self.mass.as_deref()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lanczos_only() -> SolverOptions {
        SolverOptions { dense_below: 0, ..Default::default() }
    }

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..700).map(|i| i as f64).collect();
        let op = SparseSymmetric::diagonal(&d);
        let s = lowest_eigenpairs(&op, 6, 1e-9).unwrap();
        assert_eq!(s.method, SolverMethod::BlockLanczos);
        for (i, l) in s.eigenvalues.iter().enumerate() {
            assert_abs_diff_eq!(*l, i as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn path_graph_matches_closed_form() {
        let n = 50;
        let op = SparseSymmetric::path_laplacian(n);
        for opts in [SolverOptions::default(), lanczos_only()] {
            let s = lowest_eigenpairs_with(&op, 8, 1e-10, &opts).unwrap();
            for (k, l) in s.eigenvalues.iter().enumerate() {
                let exact = 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos();
                assert_abs_diff_eq!(*l, exact, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rayleigh_of_eigenvector() {
        let op = SparseSymmetric::path_laplacian(30);
        let s = lowest_eigenpairs(&op, 4, 1e-10).unwrap();
        for (l, v) in s.eigenvalues.iter().zip(&s.eigenvectors) {
            assert_abs_diff_eq!(rayleigh(&op, v).unwrap(), *l, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(minmax_bound(&op, &s.eigenvectors).unwrap(), s.eigenvalues[3], epsilon = 1e-9);
        assert!(rayleigh(&op, &vec![0.0; 30]).is_err());
        let dup = vec![s.eigenvectors[1].clone(), s.eigenvectors[1].clone()];
        assert!(matches!(minmax_bound(&op, &dup), Err(SolverError::DependentSubspace)));
    }

    /// Random sparse PSD matrix: a weighted graph Laplacian plus a positive diagonal.
    pub(super) fn random_sparse_psd(n: usize, seed: u64) -> SparseSymmetric {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j == i {
                    continue;
                }
                let w: f64 = rng.gen_range(0.1..1.0);
                t.push((i, j, -w));
                t.push((j, i, -w));
                diag[i] += w;
                diag[j] += w;
            }
            diag[i] += rng.gen_range(0.0..0.5);
        }
        t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        SparseSymmetric::from_triplets(n, t, None)
    }

    fn dense_lowest(op: &SparseSymmetric, k: usize) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(op.to_dense()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev.truncate(k);
        ev
    }

    #[test]
    fn lanczos_matches_dense_oracle() {
        let op = random_sparse_psd(300, 3);
        let s = lowest_eigenpairs_with(&op, 10, 1e-10, &lanczos_only()).unwrap();
        for (a, b) in s.eigenvalues.iter().zip(dense_lowest(&op, 10)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn restarts_preserve_accuracy() {
        let op = random_sparse_psd(600, 4);
        let opts = SolverOptions { max_basis: Some(40), block: Some(3), ..lanczos_only() };
        let s = lowest_eigenpairs_with(&op, 5, 1e-9, &opts).unwrap();
        assert!(s.restarts > 0);
        for (a, b) in s.eigenvalues.iter().zip(dense_lowest(&op, 5)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn mass_pencil_eigenvectors_are_mass_orthonormal() {
        let base = random_sparse_psd(520, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mass: Vec<f64> = (0..520).map(|_| rng.gen_range(0.5..2.0)).collect();
        let op = SparseSymmetric { mass: Some(mass.clone()), ..base };
        let s = lowest_eigenpairs(&op, 6, 1e-9).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let g: f64 = (0..520).map(|r| s.eigenvectors[i][r] * s.eigenvectors[j][r] * mass[r]).sum();
                assert_abs_diff_eq!(g, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-8);
            }
            assert_abs_diff_eq!(rayleigh(&op, &s.eigenvectors[i]).unwrap(), s.eigenvalues[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn count_below_shift_matches_dense() {
        let op = random_sparse_psd(400, 6);
        let dense = dense_lowest(&op, 400);
        let shift = dense[12] + 0.5 * (dense[13] - dense[12]);
        let s = lowest_eigenpairs_with(&op, 20, 1e-10, &lanczos_only()).unwrap();
        let count = s.eigenvalues.iter().filter(|&&l| l < shift).count();
        assert_eq!(count, dense.iter().filter(|&&l| l < shift).count());
    }

    #[test]
    fn same_seed_same_result() {
        let op = random_sparse_psd(700, 7);
        let a = lowest_eigenpairs(&op, 4, 1e-9).unwrap();
        let b = lowest_eigenpairs(&op, 4, 1e-9).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn csv_export() {
        let op = SparseSymmetric::path_laplacian(10);
        let s = lowest_eigenpairs(&op, 3, 1e-10).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,eigenvalue,residual\n1,"));
        assert_eq!(text.lines().count(), 4);
    }
}
