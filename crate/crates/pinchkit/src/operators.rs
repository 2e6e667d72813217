//! Discrete Laplacians on functions and forms over a sampled model manifold.
//!
//! The kernel is `K = exp(−d²/4ε)` with self-loops excluded, density-normalized
//! as `K̃ = K/(q_x q_y)`, `q_x = Σ_y K(x,y)`. Every operator is the pencil
//! `(A, M)` with mass `M_x = D̃_x = Σ_y K̃(x,y)` and stiffness
//!
//! ```text
//! (A ω)_x = Σ_y w(x,y) (ω_x − Λ^p(T_{x←y}) ω_y),   w = K̃/ε̂,
//! ```
//!
//! where `T_{x←y}` is parallel transport in frame coordinates and
//! `ε̂ = Σ K̃ d² / (2n Σ D̃)` is the measured second moment of the kernel, which
//! equals `ε` in the dense limit. On full product grids (and the quotient, through
//! its lifted grid) the kernel is applied per factor and the operator is the
//! Kronecker sum `A₁⊗M₂ + M₁⊗A₂`, so product spectra are exact sums.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{basis, binomial, compound, VectorValuedKForm};
use crate::manifold::{matmul, sphere_volume, ModelSpec, SampledManifold, Sampling};
use crate::spectral::SymmetricPencil;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("kernel graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("degree {p} out of range for dimension {n}")]
    BadDegree { n: usize, p: usize },
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, OperatorError>;

/// Kernel weights below this fraction of the peak are dropped.
pub const KERNEL_CUTOFF: f64 = 1e-6;
/// Bandwidth constant for i.i.d. clouds: `ε = c ℓ² (ln N / N)^{1/(n+4)}`.
pub const IID_BANDWIDTH_CONSTANT: f64 = 0.02;
/// Bandwidth constant for quasi-uniform samples: `ε = c h²`, `h = (Vol/N)^{1/n}`.
pub const QUASI_UNIFORM_BANDWIDTH_CONSTANT: f64 = 0.25;

/// Bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

/// Default `ε` for a cloud that is assembled with a single joint kernel.
pub fn default_bandwidth(m: &SampledManifold) -> f64 {
    let n = m.dim() as f64;
    let count = m.len() as f64;
    let vol = m.volume();
    match m.spec() {
        ModelSpec::Sphere { sampling: Sampling::QuasiUniform, .. } => {
            let h = (vol / count).powf(1.0 / n);
            QUASI_UNIFORM_BANDWIDTH_CONSTANT * h * h
        }
        _ => {
            let l2 = (vol / sphere_volume(m.dim(), 1.0)).powf(2.0 / n);
            IID_BANDWIDTH_CONSTANT * l2 * (count.ln() / count).powf(1.0 / (n + 4.0))
        }
    }
}

/// Kernel scales actually used, per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub scheme: String,
    pub eps: Vec<f64>,
    pub eps_hat: Vec<f64>,
    pub radius: Vec<f64>,
    pub mean_degree: Vec<f64>,
}

/// Polynomial degree of the local fit used for gradients.
pub const GRADIENT_FIT_DEGREE: usize = 3;

/// All-degree compound matrices of one family of `n×n` transforms.
#[derive(Debug, Clone, Default)]
struct CompoundTable {
    n: usize,
    offsets: Vec<usize>,
    stride: usize,
    data: Vec<f64>,
}

impl CompoundTable {
    fn new(n: usize) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for q in 0..=n {
            offsets.push(acc);
            let c = binomial(n, q);
            acc += c * c;
        }
        CompoundTable { n, offsets, stride: acc, data: Vec::new() }
    }

    fn push(&mut self, t: &[f64]) -> u32 {
        let idx = self.data.len() / self.stride.max(1);
        for q in 0..=self.n {
            self.data.extend(compound(t, self.n, q));
        }
        idx as u32
    }

    fn get(&self, idx: u32, q: usize) -> &[f64] {
        let c = binomial(self.n, q);
        let s = idx as usize * self.stride + self.offsets[q];
        &self.data[s..s + c * c]
    }
}

/// Reference to a factor transform: identity, or an entry of a compound table.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Identity,
    Graph { idx: u32, transposed: bool },
    Extra { idx: u32 },
}

/// Kernel graph of a single sampled manifold.
#[derive(Debug, Clone)]
pub struct KernelGraph {
    dim: usize,
    pub eps: f64,
    pub eps_hat: f64,
    pub radius: f64,
    ptr: Vec<usize>,
    nbr: Vec<u32>,
    ktilde: Vec<f64>,
    /// Transport table entry and orientation for each directed entry.
    tf: Vec<(u32, bool)>,
    table: CompoundTable,
    pub degree: Vec<f64>,
    /// Gradient stencil coefficients: `dim` per directed entry.
    stencil: Vec<f64>,
    stencil_ok: Vec<bool>,
}

impl KernelGraph {
    pub fn build(m: &SampledManifold, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(OperatorError::BadBandwidth(eps));
        }
        let n = m.dim();
        let count = m.len();
        let radius = (4.0 * eps * (1.0 / KERNEL_CUTOFF).ln()).sqrt();
        let lists = m.neighbors_within(radius);
        let mut ptr = Vec::with_capacity(count + 1);
        ptr.push(0);
        let mut nbr = Vec::new();
        let mut d2s = Vec::new();
        for l in &lists {
            for &(j, d2) in l {
                nbr.push(j as u32);
                d2s.push(d2);
            }
            ptr.push(nbr.len());
        }
        let kraw: Vec<f64> = d2s.iter().map(|d2| (-d2 / (4.0 * eps)).exp()).collect();
        let q: Vec<f64> = (0..count).map(|i| kraw[ptr[i]..ptr[i + 1]].iter().sum()).collect();
        let mut ktilde = vec![0.0; kraw.len()];
        for i in 0..count {
            for e in ptr[i]..ptr[i + 1] {
                ktilde[e] = kraw[e] / (q[i] * q[nbr[e] as usize]);
            }
        }
        let degree: Vec<f64> = (0..count).map(|i| ktilde[ptr[i]..ptr[i + 1]].iter().sum()).collect();
        if degree.iter().any(|&d| !(d > 0.0)) {
            let isolated = degree.iter().filter(|&&d| !(d > 0.0)).count();
            return Err(OperatorError::Disconnected { components: isolated + 1 });
        }
        let components = count_components(count, &ptr, &nbr);
        if components > 1 {
            return Err(OperatorError::Disconnected { components });
        }
        let second: f64 = ktilde.iter().zip(&d2s).map(|(k, d2)| k * d2).sum();
        let eps_hat = second / (2.0 * n as f64 * degree.iter().sum::<f64>());

        // Transports: one table entry per unordered pair, transposed for the reverse entry.
        let mut table = CompoundTable::new(n);
        let mut tf = vec![(0u32, false); nbr.len()];
        for i in 0..count {
            for e in ptr[i]..ptr[i + 1] {
                let j = nbr[e] as usize;
                if i < j {
                    let idx = table.push(&m.transport(i, j));
                    tf[e] = (idx, false);
                    let back = (ptr[j]..ptr[j + 1]).find(|&f| nbr[f] as usize == i).expect("symmetric neighbour lists");
                    tf[back] = (idx, true);
                }
            }
        }
        let mut g = KernelGraph { dim: n, eps, eps_hat, radius, ptr, nbr, ktilde, tf, table, degree, stencil: Vec::new(), stencil_ok: Vec::new() };
        g.build_stencils(m, &kraw);
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.nbr[self.ptr[i]..self.ptr[i + 1]]
    }

    pub fn mean_degree(&self) -> f64 {
        self.nbr.len() as f64 / self.len() as f64
    }

    /// Weighted least-squares polynomial fit of `f(y) − f(x)` in log-map
    /// coordinates; the linear coefficients give the gradient. Degree falls back
    /// from cubic to linear when a neighbourhood cannot support the fit.
    fn build_stencils(&mut self, m: &SampledManifold, kraw: &[f64]) {
        let n = self.dim;
        let count = self.len();
        let scale = (2.0 * self.eps).sqrt();
        let limit = m.sphere_radius().map(|r| 0.85 * std::f64::consts::PI * r);
        let results: Vec<(Vec<f64>, bool)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let range = self.ptr[i]..self.ptr[i + 1];
                let nb = range.len();
                let mut logs = Vec::with_capacity(nb * n);
                let mut wts = Vec::with_capacity(nb);
                for e in range.clone() {
                    let j = self.nbr[e] as usize;
                    let v = m.log_map(i, j);
                    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let keep = limit.is_none_or(|l| len < l);
                    logs.extend(v.iter().map(|x| x / scale));
                    wts.push(if keep { kraw[e].sqrt() } else { 0.0 });
                }
                let used = wts.iter().filter(|&&w| w > 0.0).count();
                for deg in (1..=GRADIENT_FIT_DEGREE).rev() {
                    let mons = monomials(n, deg);
                    // Higher degrees need a well-overdetermined fit; linear needs n + 1 points.
                    let need = if deg == 1 { n + 1 } else { mons.len() + mons.len() / 2 + 1 };
                    if used < need {
                        continue;
                    }
                    if let Some(coef) = fit_gradient(&logs, &wts, n, &mons) {
                        let mut out = vec![0.0; nb * n];
                        for k in 0..nb {
                            for c in 0..n {
                                out[k * n + c] = coef[c * nb + k] / scale;
                            }
                        }
                        return (out, true);
                    }
                }
                (vec![0.0; nb * n], false)
            })
            .collect();
        self.stencil = Vec::with_capacity(self.nbr.len() * n);
        self.stencil_ok = Vec::with_capacity(count);
        for (s, ok) in results {
            self.stencil.extend(s);
            self.stencil_ok.push(ok);
        }
    }

    fn stencil_coeffs(&self, e: usize) -> &[f64] {
        &self.stencil[e * self.dim..(e + 1) * self.dim]
    }
}

fn count_components(count: usize, ptr: &[usize], nbr: &[u32]) -> usize {
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..count {
        for &j in &nbr[ptr[i]..ptr[i + 1]] {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j as usize));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..count).filter(|&i| find(&mut parent, i) == i).count()
}

/// Exponent tuples of total degree `1..=deg` in `n` variables, linear terms first.
fn monomials(n: usize, deg: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for d in 1..=deg {
        fn rec(n: usize, start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left == 0 {
                out.push(cur.clone());
                return;
            }
            for v in start..n {
                cur.push(v);
                rec(n, v, left - 1, cur, out);
                cur.pop();
            }
        }
        rec(n, 0, d, &mut Vec::new(), &mut out);
    }
    out
}

/// Returns the linear-coefficient rows of the weighted pseudoinverse, row-major
/// `n × nb`, or `None` when the design is rank deficient.
fn fit_gradient(logs: &[f64], wts: &[f64], n: usize, mons: &[Vec<usize>]) -> Option<Vec<f64>> {
    let nb = wts.len();
    let m = mons.len();
    let design = DMatrix::from_fn(nb, m, |k, c| {
        let v = &logs[k * n..(k + 1) * n];
        wts[k] * mons[c].iter().map(|&i| v[i]).product::<f64>()
    });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * smax) {
        return None;
    }
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    // pinv = V Σ^{-1} Uᵀ; keep the first n rows, then re-apply the weights.
    let mut out = vec![0.0; n * nb];
    for c in 0..n {
        for k in 0..nb {
            let mut acc = 0.0;
            for s in 0..m {
                acc += vt[(s, c)] / svd.singular_values[s] * u[(k, s)];
            }
            out[c * nb + k] = acc * wts[k];
        }
    }
    Some(out)
}

/// Per-edge data in the assembled adjacency.
#[derive(Debug, Clone, Copy)]
struct Edge {
    col: u32,
    w: f64,
    group: u8,
    /// Directed entry in the factor graph of `group`.
    fent: u32,
    slots: [Slot; 2],
}

/// Kernel graphs, weights, transports and gradient stencils of a sampled
/// manifold; shared by the operators of every degree.
#[derive(Debug)]
pub struct Discretization {
    n: usize,
    count: usize,
    factor_dims: Vec<usize>,
    factors: Vec<KernelGraph>,
    extra: Vec<CompoundTable>,
    /// Factor sample of each point, per factor.
    own: Vec<Vec<u32>>,
    ptr: Vec<usize>,
    edges: Vec<Edge>,
    mass: Vec<f64>,
    diag: Vec<f64>,
    invalid: Vec<bool>,
    report: BandwidthReport,
    volume_weights: Vec<f64>,
}

impl Discretization {
    pub fn new(m: &SampledManifold, bandwidth: Bandwidth) -> Result<Self> {
        if let Some(q) = m.quotient_parts() {
            let (facs, _, _) = q.lifted.product_parts().expect("lifted quotient is a product");
            return Self::separable(m, facs, bandwidth);
        }
        if let Some((facs, _, true)) = m.product_parts() {
            return Self::separable(m, facs, bandwidth);
        }
        Self::joint(m, bandwidth)
    }

    fn joint(m: &SampledManifold, bandwidth: Bandwidth) -> Result<Self> {
        let eps = match bandwidth {
            Bandwidth::Auto => default_bandwidth(m),
            Bandwidth::Fixed(e) => e,
        };
        let g = KernelGraph::build(m, eps)?;
        let count = m.len();
        let mut ptr = Vec::with_capacity(count + 1);
        ptr.push(0);
        let mut edges = Vec::with_capacity(g.nbr.len());
        for i in 0..count {
            for e in g.ptr[i]..g.ptr[i + 1] {
                let (idx, transposed) = g.tf[e];
                edges.push(Edge {
                    col: g.nbr[e],
                    w: g.ktilde[e] / g.eps_hat,
                    group: 0,
                    fent: e as u32,
                    slots: [Slot::Graph { idx, transposed }, Slot::Identity],
                });
            }
            ptr.push(edges.len());
        }
        let report =
            BandwidthReport { scheme: "joint".into(), eps: vec![g.eps], eps_hat: vec![g.eps_hat], radius: vec![g.radius], mean_degree: vec![g.mean_degree()] };
        let invalid = g.stencil_ok.iter().map(|ok| !ok).collect();
        let mass = g.degree.clone();
        Ok(Self::finish(m, vec![m.dim()], vec![g], vec![CompoundTable::new(m.dim())], vec![(0..count as u32).collect()], ptr, edges, mass, invalid, report))
    }

    fn separable(m: &SampledManifold, facs: &[SampledManifold], bandwidth: Bandwidth) -> Result<Self> {
        let graphs: Vec<KernelGraph> = facs
            .iter()
            .map(|f| {
                let eps = match bandwidth {
                    Bandwidth::Auto => default_bandwidth(f),
                    Bandwidth::Fixed(e) => e,
                };
                KernelGraph::build(f, eps)
            })
            .collect::<Result<_>>()?;
        let dims: Vec<usize> = facs.iter().map(|f| f.dim()).collect();
        let m2 = facs[1].len();
        let count = m.len();
        let quotient = m.quotient_parts();
        // Lifted index and factor samples of each point.
        let lifted_of: Vec<usize> = match &quotient {
            Some(q) => q.rep.to_vec(),
            None => (0..count).collect(),
        };
        let pairs: &[(usize, usize)] = match &quotient {
            Some(q) => q.lifted.product_parts().unwrap().1,
            None => m.product_parts().unwrap().1,
        };
        let own: Vec<Vec<u32>> = vec![lifted_of.iter().map(|&l| pairs[l].0 as u32).collect(), lifted_of.iter().map(|&l| pairs[l].1 as u32).collect()];
        let mut extra = vec![CompoundTable::new(dims[0]), CompoundTable::new(dims[1])];
        let mut ptr = Vec::with_capacity(count + 1);
        ptr.push(0);
        let mut edges = Vec::new();
        let mut mass = Vec::with_capacity(count);
        let n = m.dim();
        for i in 0..count {
            let (a, b) = pairs[lifted_of[i]];
            mass.push(graphs[0].degree[a] * graphs[1].degree[b]);
            for g in 0..2 {
                let graph = &graphs[g];
                let (own_f, other_deg) = if g == 0 { (a, graphs[1].degree[b]) } else { (b, graphs[0].degree[a]) };
                for e in graph.ptr[own_f]..graph.ptr[own_f + 1] {
                    let f2 = graph.nbr[e] as usize;
                    let l = if g == 0 { f2 * m2 + b } else { a * m2 + f2 };
                    let w = graph.ktilde[e] * other_deg / graph.eps_hat;
                    let (idx, transposed) = graph.tf[e];
                    let direct = Slot::Graph { idx, transposed };
                    let (col, slots) = match &quotient {
                        None => (l, if g == 0 { [direct, Slot::Identity] } else { [Slot::Identity, direct] }),
                        Some(q) => {
                            let j = q.class_of[l];
                            if q.rep[j] == l {
                                (j, if g == 0 { [direct, Slot::Identity] } else { [Slot::Identity, direct] })
                            } else {
                                // Through the other lift: compose with the involution's differential.
                                let gmat = m.partner_frame_change(j);
                                let (g0, g1) = split_blocks(&gmat, n, dims[0]);
                                let o = facs[g].transport(own_f, f2);
                                let (t0, t1) = if g == 0 { (matmul(dims[0], &o, &g0), g1) } else { (g0, matmul(dims[1], &o, &g1)) };
                                let s0 = Slot::Extra { idx: extra[0].push(&t0) };
                                let s1 = Slot::Extra { idx: extra[1].push(&t1) };
                                (j, [s0, s1])
                            }
                        }
                    };
                    edges.push(Edge { col: col as u32, w, group: g as u8, fent: e as u32, slots });
                }
            }
            ptr.push(edges.len());
        }
        let invalid = (0..count).map(|i| !graphs[0].stencil_ok[own[0][i] as usize] || !graphs[1].stencil_ok[own[1][i] as usize]).collect();
        let report = BandwidthReport {
            scheme: "separable".into(),
            eps: graphs.iter().map(|g| g.eps).collect(),
            eps_hat: graphs.iter().map(|g| g.eps_hat).collect(),
            radius: graphs.iter().map(|g| g.radius).collect(),
            mean_degree: graphs.iter().map(|g| g.mean_degree()).collect(),
        };
        Ok(Self::finish(m, dims, graphs, extra, own, ptr, edges, mass, invalid, report))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        m: &SampledManifold,
        factor_dims: Vec<usize>,
        factors: Vec<KernelGraph>,
        extra: Vec<CompoundTable>,
        own: Vec<Vec<u32>>,
        ptr: Vec<usize>,
        edges: Vec<Edge>,
        mass: Vec<f64>,
        invalid: Vec<bool>,
        report: BandwidthReport,
    ) -> Self {
        let count = m.len();
        let diag = (0..count).map(|i| edges[ptr[i]..ptr[i + 1]].iter().map(|e| e.w).sum()).collect();
        Discretization { n: m.dim(), count, factor_dims, factors, extra, own, ptr, edges, mass, diag, invalid, report, volume_weights: m.weights().to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bandwidth_report(&self) -> &BandwidthReport {
        &self.report
    }

    pub fn factor_graphs(&self) -> &[KernelGraph] {
        &self.factors
    }

    /// Points whose gradient stencil could not be built.
    pub fn invalid_points(&self) -> &[bool] {
        &self.invalid
    }

    pub fn invalid_fraction(&self) -> f64 {
        self.invalid.iter().filter(|&&b| b).count() as f64 / self.count.max(1) as f64
    }

    /// Number of stored directed edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn block_offset(&self, group: u8) -> usize {
        if group == 0 {
            0
        } else {
            self.factor_dims[0]
        }
    }

    fn slot_matrix(&self, factor: usize, slot: Slot, q: usize) -> Option<(&[f64], bool)> {
        match slot {
            Slot::Identity => None,
            Slot::Graph { idx, transposed } => Some((self.factors[factor].table.get(idx, q), transposed)),
            Slot::Extra { idx } => Some((self.extra[factor].get(idx, q), false)),
        }
    }

    /// Operator on `p`-forms; `p = 0` is the function Laplacian and `p = n` the
    /// determinant-line Laplacian.
    pub fn operator(self: &Arc<Self>, p: usize) -> Result<OperatorHandle> {
        if p > self.n {
            return Err(OperatorError::BadDegree { n: self.n, p });
        }
        Ok(OperatorHandle::new(Arc::clone(self), p))
    }

    /// Gradient of a scalar field as a 1-form in frame coordinates.
    pub fn gradient(&self, f: &[f64]) -> Result<FormField> {
        if f.len() != self.count {
            return Err(OperatorError::Shape(format!("{} values for {} points", f.len(), self.count)));
        }
        let n = self.n;
        let mut out = vec![0.0; self.count * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, g)| {
            for e in &self.edges[self.ptr[i]..self.ptr[i + 1]] {
                let fg = &self.factors[e.group as usize];
                let c = fg.stencil_coeffs(e.fent as usize);
                let off = self.block_offset(e.group);
                let df = f[e.col as usize] - f[i];
                for (k, ck) in c.iter().enumerate() {
                    g[off + k] += ck * df;
                }
            }
        });
        Ok(FormField { n, p: 1, values: out })
    }

    /// Covariant derivative of a `p`-form field: slot `c` of the result at `x` is
    /// `∇_{e_c} ω`, fitted from transported neighbour values.
    pub fn covariant_gradient(&self, omega: &FormField) -> Result<Vec<VectorValuedKForm>> {
        self.check_field(omega)?;
        let n = self.n;
        let p = omega.p;
        let layout = SplitLayout::new(&self.factor_dims, p);
        let b = layout.b;
        let res: Vec<VectorValuedKForm> = (0..self.count)
            .into_par_iter()
            .map_init(
                || (vec![0.0; b], Scratch::new(&layout)),
                |(tx, scratch), i| {
                    let mut out = vec![0.0; n * b];
                    let wi = omega.at(i);
                    for e in &self.edges[self.ptr[i]..self.ptr[i + 1]] {
                        tx.iter_mut().for_each(|v| *v = 0.0);
                        self.transform(&layout, e, omega.at(e.col as usize), tx, 1.0, scratch);
                        let fg = &self.factors[e.group as usize];
                        let c = fg.stencil_coeffs(e.fent as usize);
                        let off = self.block_offset(e.group);
                        for (k, ck) in c.iter().enumerate() {
                            let row = &mut out[(off + k) * b..(off + k + 1) * b];
                            for r in 0..b {
                                row[r] += ck * (tx[r] - wi[r]);
                            }
                        }
                    }
                    VectorValuedKForm::from_coeffs(n, p, out).expect("shape")
                },
            )
            .collect();
        Ok(res)
    }

    fn check_field(&self, w: &FormField) -> Result<()> {
        if w.n != self.n || w.len() != self.count {
            return Err(OperatorError::Shape(format!(
                "field over {} points in dimension {}, manifold has {} in dimension {}",
                w.len(),
                w.n,
                self.count,
                self.n
            )));
        }
        Ok(())
    }

    /// `y += alpha · Λ^p(T_e) x` for the transform of edge `e`.
    fn transform(&self, layout: &SplitLayout, e: &Edge, x: &[f64], y: &mut [f64], alpha: f64, s: &mut Scratch) {
        for qb in &layout.blocks {
            let (c1, c2) = (qb.c1, qb.c2);
            for (k, &full) in qb.full.iter().enumerate() {
                s.x[k] = x[full];
            }
            let l1 = self.slot_matrix(0, e.slots[0], qb.q);
            let l2 = if self.factor_dims.len() > 1 { self.slot_matrix(1, e.slots[1], qb.q2) } else { None };
            // tmp = L1 X
            match l1 {
                None => s.tmp[..c1 * c2].copy_from_slice(&s.x[..c1 * c2]),
                Some((l, tr)) => {
                    for r in 0..c1 {
                        for c in 0..c2 {
                            let mut acc = 0.0;
                            for k in 0..c1 {
                                let lv = if tr { l[k * c1 + r] } else { l[r * c1 + k] };
                                acc += lv * s.x[k * c2 + c];
                            }
                            s.tmp[r * c2 + c] = acc;
                        }
                    }
                }
            }
            // Y = tmp L2ᵀ
            match l2 {
                None => {
                    for (k, &full) in qb.full.iter().enumerate() {
                        y[full] += alpha * s.tmp[k];
                    }
                }
                Some((l, tr)) => {
                    for r in 0..c1 {
                        for c in 0..c2 {
                            let mut acc = 0.0;
                            for k in 0..c2 {
                                let lv = if tr { l[k * c2 + c] } else { l[c * c2 + k] };
                                acc += s.tmp[r * c2 + k] * lv;
                            }
                            y[qb.full[r * c2 + c]] += alpha * acc;
                        }
                    }
                }
            }
        }
    }
}

/// Splitting of `Λ^p(ℝ^{n₁} ⊕ ℝ^{n₂})` into `⊕_q Λ^q ℝ^{n₁} ⊗ Λ^{p−q} ℝ^{n₂}`.
#[derive(Debug, Clone)]
struct SplitLayout {
    b: usize,
    blocks: Vec<QBlock>,
}

#[derive(Debug, Clone)]
struct QBlock {
    q: usize,
    q2: usize,
    c1: usize,
    c2: usize,
    /// Full lexicographic rank of `(r1, r2)` at `r1 * c2 + r2`.
    full: Vec<usize>,
}

impl SplitLayout {
    fn new(dims: &[usize], p: usize) -> Self {
        let n1 = dims[0];
        let n2 = dims.get(1).copied().unwrap_or(0);
        let n = n1 + n2;
        let full_basis = basis(n, p);
        let rank_of: std::collections::HashMap<u32, usize> = full_basis.masks.iter().enumerate().map(|(r, &m)| (m, r)).collect();
        let mut blocks = Vec::new();
        for q in 0..=p.min(n1) {
            let q2 = p - q;
            if q2 > n2 {
                continue;
            }
            let b1 = basis(n1, q);
            let b2 = basis(n2, q2);
            let mut full = Vec::with_capacity(b1.masks.len() * b2.masks.len());
            for &m1 in &b1.masks {
                for &m2 in &b2.masks {
                    full.push(rank_of[&(m1 | (m2 << n1))]);
                }
            }
            blocks.push(QBlock { q, q2, c1: b1.masks.len(), c2: b2.masks.len(), full });
        }
        SplitLayout { b: full_basis.masks.len(), blocks }
    }
}

struct Scratch {
    x: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(layout: &SplitLayout) -> Self {
        let m = layout.blocks.iter().map(|b| b.c1 * b.c2).max().unwrap_or(1);
        Scratch { x: vec![0.0; m], tmp: vec![0.0; m] }
    }
}

fn split_blocks(g: &[f64], n: usize, n1: usize) -> (Vec<f64>, Vec<f64>) {
    let n2 = n - n1;
    let mut a = vec![0.0; n1 * n1];
    let mut b = vec![0.0; n2 * n2];
    for i in 0..n1 {
        for j in 0..n1 {
            a[i * n1 + j] = g[i * n + j];
        }
    }
    for i in 0..n2 {
        for j in 0..n2 {
            b[i * n2 + j] = g[(n1 + i) * n + n1 + j];
        }
    }
    (a, b)
}

/// The symmetric pencil of `Δ_{C,p}` on a discretization.
#[derive(Debug, Clone)]
pub struct OperatorHandle {
    disc: Arc<Discretization>,
    p: usize,
    layout: SplitLayout,
    mass_full: Vec<f64>,
}

impl OperatorHandle {
    fn new(disc: Arc<Discretization>, p: usize) -> Self {
        let layout = SplitLayout::new(&disc.factor_dims, p);
        let b = layout.b;
        let mass_full = disc.mass.iter().flat_map(|&m| std::iter::repeat_n(m, b)).collect();
        OperatorHandle { disc, p, layout, mass_full }
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    /// Rows per point, `C(n, p)`.
    pub fn block_size(&self) -> usize {
        self.layout.b
    }

    pub fn size(&self) -> usize {
        self.disc.count * self.layout.b
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    /// `⟨Av, v⟩`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mut av = vec![0.0; v.len()];
        self.apply(v, &mut av);
        av.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// The `b×b` block `(i, j)` of `A`, row-major.
    pub fn block(&self, i: usize, j: usize) -> Vec<f64> {
        let b = self.layout.b;
        let mut out = vec![0.0; b * b];
        let mut scratch = Scratch::new(&self.layout);
        if i == j {
            for r in 0..b {
                out[r * b + r] = self.disc.diag[i];
            }
        }
        let mut unit = vec![0.0; b];
        let mut col = vec![0.0; b];
        for e in &self.disc.edges[self.disc.ptr[i]..self.disc.ptr[i + 1]] {
            if e.col as usize != j {
                continue;
            }
            for c in 0..b {
                unit.iter_mut().for_each(|v| *v = 0.0);
                unit[c] = 1.0;
                col.iter_mut().for_each(|v| *v = 0.0);
                self.disc.transform(&self.layout, e, &unit, &mut col, -e.w, &mut scratch);
                for r in 0..b {
                    out[r * b + c] += col[r];
                }
            }
        }
        out
    }

    /// Writes nonzero entries as `row col value` lines.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        let b = self.layout.b;
        writeln!(w, "# pinchkit-operator v1 rows {} degree {} block {}", self.size(), self.p, b)?;
        for i in 0..self.disc.count {
            let mut cols: Vec<usize> = self.disc.edges[self.disc.ptr[i]..self.disc.ptr[i + 1]].iter().map(|e| e.col as usize).collect();
            cols.push(i);
            cols.sort_unstable();
            cols.dedup();
            for j in cols {
                let blk = self.block(i, j);
                for r in 0..b {
                    for c in 0..b {
                        let v = blk[r * b + c];
                        if v != 0.0 {
                            writeln!(w, "{} {} {:.17e}", i * b + r, j * b + c, v)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl SymmetricPencil for OperatorHandle {
    fn dim(&self) -> usize {
        self.size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = &*self.disc;
        let b = self.layout.b;
        if self.p == 0 {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| {
                // Differences, not diag − Σ, so constants map to exactly zero.
                let mut acc = 0.0;
                for e in &d.edges[d.ptr[i]..d.ptr[i + 1]] {
                    acc += e.w * (x[i] - x[e.col as usize]);
                }
                *yi = acc;
            });
            return;
        }
        y.par_chunks_mut(b).enumerate().for_each_init(
            || Scratch::new(&self.layout),
            |scratch, (i, yi)| {
                let xi = &x[i * b..(i + 1) * b];
                for r in 0..b {
                    yi[r] = d.diag[i] * xi[r];
                }
                for e in &d.edges[d.ptr[i]..d.ptr[i + 1]] {
                    let j = e.col as usize;
                    d.transform(&self.layout, e, &x[j * b..(j + 1) * b], yi, -e.w, scratch);
                }
            },
        );
    }

    fn mass(&self) -> Option<&[f64]> {
        Some(&self.mass_full)
    }
}

/// A `p`-form field: coefficients on the lexicographic `Λ^p` basis of each
/// point's frame, point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl FormField {
    pub fn zeros(n: usize, p: usize, points: usize) -> Self {
        FormField { n, p, values: vec![0.0; points * binomial(n, p)] }
    }

    pub fn from_values(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        let b = binomial(n, p);
        if p > n || !values.len().is_multiple_of(b) {
            return Err(OperatorError::Shape(format!("{} values for blocks of {b}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(OperatorError::Shape("non-finite coefficient".into()));
        }
        Ok(FormField { n, p, values })
    }

    pub fn scalar(values: Vec<f64>, n: usize) -> Self {
        FormField { n, p: 0, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn block(&self) -> usize {
        binomial(self.n, self.p)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize) -> &[f64] {
        let b = self.block();
        &self.values[i * b..(i + 1) * b]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let b = self.block();
        &mut self.values[i * b..(i + 1) * b]
    }

    /// Pointwise norms `|ω(x)|`.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        self.values.chunks(self.block()).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }

    /// Text form mirroring the manifold format: header, then `index | coeffs` rows.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# pinchkit-formfield v1");
        let _ = writeln!(out, "dim {} degree {} N {}", self.n, self.p, self.len());
        for i in 0..self.len() {
            let row: Vec<String> = self.at(i).iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(out, "{i} | {}", row.join(" "));
        }
        out
    }
}

/// `(1/Vol ∫ |f|^p)^{1/p}` with volume-weight quadrature; `p_exp = ∞` gives the max.
pub fn lp_norm_scalar(m: &SampledManifold, f: &[f64], p_exp: f64) -> f64 {
    assert!(p_exp >= 1.0, "exponent must be at least 1");
    if p_exp.is_infinite() {
        return f.iter().fold(0.0, |a, v| a.max(v.abs()));
    }
    let w = m.weights();
    let s: f64 = f.iter().zip(w).map(|(v, wi)| wi * v.abs().powf(p_exp)).sum();
    (s / m.volume()).powf(1.0 / p_exp)
}

/// Normalized `L^p` norm of the pointwise norm of a form field.
pub fn lp_norm(m: &SampledManifold, field: &FormField, p_exp: f64) -> f64 {
    lp_norm_scalar(m, &field.pointwise_norms(), p_exp)
}

/// `⟨Av, v⟩` averaged over the operator's mass, the discrete `‖∇v‖₂²`.
pub fn dirichlet_energy(op: &OperatorHandle, v: &[f64]) -> f64 {
    op.quadratic_form(v) / op.disc.mass.iter().sum::<f64>()
}

/// `⟨Mv, v⟩` averaged over the operator's mass, the matching `‖v‖₂²`.
pub fn mass_norm_sq(op: &OperatorHandle, v: &[f64]) -> f64 {
    let m = op.mass().unwrap();
    v.iter().zip(m).map(|(x, w)| x * x * w).sum::<f64>() / op.disc.mass.iter().sum::<f64>()
}

pub fn assemble_function_laplacian(m: &SampledManifold, bandwidth: Bandwidth) -> Result<OperatorHandle> {
    Arc::new(Discretization::new(m, bandwidth)?).operator(0)
}

pub fn assemble_connection_laplacian(m: &SampledManifold, p: usize, bandwidth: Bandwidth) -> Result<OperatorHandle> {
    if p > m.dim() {
        return Err(OperatorError::BadDegree { n: m.dim(), p });
    }
    Arc::new(Discretization::new(m, bandwidth)?).operator(p)
}

pub fn assemble_det_line_laplacian(m: &SampledManifold, bandwidth: Bandwidth) -> Result<OperatorHandle> {
    Arc::new(Discretization::new(m, bandwidth)?).operator(m.dim())
}

/// Gradient with per-point rank-deficiency flags.
pub fn gradient_field(m: &SampledManifold, f: &[f64], bandwidth: Bandwidth) -> Result<(FormField, Vec<bool>)> {
    let d = Discretization::new(m, bandwidth)?;
    let g = d.gradient(f)?;
    Ok((g, d.invalid))
}

impl Discretization {
    /// Kernel-graph neighbours of point `i` (self excluded).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.ptr[i]..self.ptr[i + 1]].iter().map(|e| e.col as usize)
    }

    /// Volume weights of the underlying sample.
    pub fn volume_weights(&self) -> &[f64] {
        &self.volume_weights
    }

    /// Transported value `Λ^p(T_{x←y}) ω_y` for every neighbour edge of point `i`,
    /// with the neighbour index and stiffness weight.
    pub fn transported_neighbors(&self, omega: &FormField, i: usize) -> Vec<(usize, f64, Vec<f64>)> {
        let layout = SplitLayout::new(&self.factor_dims, omega.p);
        let mut s = Scratch::new(&layout);
        self.edges[self.ptr[i]..self.ptr[i + 1]]
            .iter()
            .map(|e| {
                let mut y = vec![0.0; layout.b];
                self.transform(&layout, e, omega.at(e.col as usize), &mut y, 1.0, &mut s);
                (e.col as usize, e.w, y)
            })
            .collect()
    }

    /// Factor sample of point `i` in factor `f`.
    pub fn factor_index(&self, f: usize, i: usize) -> usize {
        self.own[f][i] as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{product, quotient_example, sample_sphere, sample_sphere_with};
    use crate::spectral::{lowest_eigenpairs, rayleigh};
    use approx::assert_abs_diff_eq;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(2, 3).len(), 9);
        assert_eq!(monomials(4, 3).len(), 34);
        assert_eq!(monomials(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn split_layout_is_a_permutation() {
        for (dims, p) in [(vec![2, 2], 2), (vec![4, 3], 4), (vec![3], 2), (vec![4, 3], 7)] {
            let l = SplitLayout::new(&dims, p);
            let mut all: Vec<usize> = l.blocks.iter().flat_map(|b| b.full.iter().copied()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..l.b).collect::<Vec<_>>());
        }
    }

    #[test]
    fn constants_are_annihilated_exactly() {
        let m = sample_sphere(2, 1.0, 300, 1).unwrap();
        let op = assemble_function_laplacian(&m, Bandwidth::Auto).unwrap();
        let mut y = vec![1.0; 300];
        op.apply(&vec![1.0; 300], &mut y);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn p0_block_equals_function_laplacian() {
        let m = sample_sphere(2, 1.0, 200, 2).unwrap();
        let f = assemble_function_laplacian(&m, Bandwidth::Auto).unwrap();
        let c = assemble_connection_laplacian(&m, 0, Bandwidth::Auto).unwrap();
        for (i, j) in [(0, 0), (0, 5), (17, 3)] {
            assert_eq!(f.block(i, j), c.block(i, j));
        }
        let d = assemble_det_line_laplacian(&m, Bandwidth::Auto).unwrap();
        let c2 = assemble_connection_laplacian(&m, 2, Bandwidth::Auto).unwrap();
        for (i, j) in [(0, 0), (3, 9)] {
            assert_eq!(d.block(i, j), c2.block(i, j));
        }
    }

    fn check_symmetric(op: &OperatorHandle, pairs: &[(usize, usize)]) {
        let b = op.block_size();
        for &(i, j) in pairs {
            let a = op.block(i, j);
            let at = op.block(j, i);
            for r in 0..b {
                for c in 0..b {
                    assert!((a[r * b + c] - at[c * b + r]).abs() <= 1e-12 * (1.0 + a[r * b + c].abs()));
                }
            }
        }
    }

    #[test]
    fn operators_are_symmetric_and_psd() {
        let m = sample_sphere(2, 1.0, 250, 3).unwrap();
        let d = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let pairs: Vec<(usize, usize)> = (0..40).map(|k| (k, d.edges[d.ptr[k]].col as usize)).collect();
        for p in 0..=2 {
            let op = d.operator(p).unwrap();
            check_symmetric(&op, &pairs);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(p as u64);
            use rand::{Rng, SeedableRng};
            for _ in 0..5 {
                let v: Vec<f64> = (0..op.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(rayleigh(&op, &v).unwrap() >= -1e-9);
            }
        }
    }

    #[test]
    fn quotient_operator_is_symmetric() {
        let q = quotient_example(3, 7, 150, 1).unwrap();
        let d = Arc::new(Discretization::new(&q, Bandwidth::Auto).unwrap());
        let op = d.operator(7).unwrap();
        let pairs: Vec<(usize, usize)> = (0..60).map(|k| (k, d.edges[d.ptr[k] + 7].col as usize)).collect();
        check_symmetric(&op, &pairs);
        let op1 = d.operator(1).unwrap();
        check_symmetric(&op1, &pairs[..10]);
    }

    #[test]
    fn separable_product_spectrum_is_sum() {
        let a = sample_sphere_with(2, 1.0, 40, 1, Sampling::QuasiUniform).unwrap();
        let b = sample_sphere_with(1, 0.5, 12, 2, Sampling::QuasiUniform).unwrap();
        let p = product(&a, &b).unwrap();
        let la = lowest_eigenpairs(&assemble_function_laplacian(&a, Bandwidth::Auto).unwrap(), 6, 1e-10).unwrap();
        let lb = lowest_eigenpairs(&assemble_function_laplacian(&b, Bandwidth::Auto).unwrap(), 6, 1e-10).unwrap();
        let lp = lowest_eigenpairs(&assemble_function_laplacian(&p, Bandwidth::Auto).unwrap(), 8, 1e-9).unwrap();
        let mut sums: Vec<f64> = la.eigenvalues.iter().flat_map(|x| lb.eigenvalues.iter().map(move |y| x + y)).collect();
        sums.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in lp.eigenvalues.iter().zip(&sums) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero_and_linear() {
        let m = sample_sphere(2, 1.0, 300, 4).unwrap();
        let d = Discretization::new(&m, Bandwidth::Auto).unwrap();
        let g = d.gradient(&vec![3.5; 300]).unwrap();
        assert!(g.values().iter().all(|v| v.abs() < 1e-12));
        let f: Vec<f64> = (0..300).map(|i| m.point(i)[2]).collect();
        let h: Vec<f64> = (0..300).map(|i| m.point(i)[0] * m.point(i)[1]).collect();
        let comb: Vec<f64> = f.iter().zip(&h).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (gf, gh, gc) = (d.gradient(&f).unwrap(), d.gradient(&h).unwrap(), d.gradient(&comb).unwrap());
        for k in 0..gc.values().len() {
            assert_abs_diff_eq!(gc.values()[k], 2.0 * gf.values()[k] - 0.5 * gh.values()[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn lp_norms() {
        let m = sample_sphere(2, 1.0, 100, 5).unwrap();
        assert_eq!(lp_norm_scalar(&m, &vec![1.0; 100], 2.0), 1.0);
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            assert_abs_diff_eq!(lp_norm_scalar(&m, &vec![-2.5; 100], p), 2.5, epsilon = 1e-12);
        }
        let f: Vec<f64> = (0..100).map(|i| m.point(i)[0]).collect();
        assert!(lp_norm_scalar(&m, &f, 2.0) <= lp_norm_scalar(&m, &f, 4.0));
    }

    #[test]
    fn energy_matches_rayleigh_times_norm() {
        let m = sample_sphere(2, 1.0, 200, 6).unwrap();
        let op = assemble_function_laplacian(&m, Bandwidth::Auto).unwrap();
        let f: Vec<f64> = (0..200).map(|i| m.point(i)[1]).collect();
        let e = dirichlet_energy(&op, &f);
        assert_abs_diff_eq!(e, rayleigh(&op, &f).unwrap() * mass_norm_sq(&op, &f), epsilon = 1e-12);
    }

    #[test]
    fn coo_export_round_trips_matvec() {
        let m = sample_sphere(2, 1.0, 60, 7).unwrap();
        let op = assemble_connection_laplacian(&m, 1, Bandwidth::Auto).unwrap();
        let mut buf = Vec::new();
        op.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let n = op.size();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; n];
        for line in text.lines().skip(1) {
            let t: Vec<&str> = line.split_whitespace().collect();
            let (r, c, v): (usize, usize, f64) = (t[0].parse().unwrap(), t[1].parse().unwrap(), t[2].parse().unwrap());
            y[r] += v * x[c];
        }
        let mut z = vec![0.0; n];
        op.apply(&x, &mut z);
        for (a, b) in y.iter().zip(&z) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn bad_inputs() {
        let m = sample_sphere(2, 1.0, 50, 8).unwrap();
        assert!(matches!(assemble_function_laplacian(&m, Bandwidth::Fixed(-1.0)), Err(OperatorError::BadBandwidth(_))));
        assert!(matches!(assemble_connection_laplacian(&m, 3, Bandwidth::Auto), Err(OperatorError::BadDegree { .. })));
        assert!(matches!(assemble_function_laplacian(&m, Bandwidth::Fixed(1e-6)), Err(OperatorError::Disconnected { .. })));
    }
}
