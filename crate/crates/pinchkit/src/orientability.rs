//! Orientability from the determinant line: the lowest eigenvalue of the
//! connection Laplacian on `n`-forms vanishes exactly when a consistent
//! orientation exists, and a frustrated sign cycle pushes it up.
//!
//! Also builds the two fields that certify orientability from eigenfunctions:
//! the `n`-form `V = Σ (−1)^{i−1} fᵢ df₁∧…∧d̂fᵢ∧…∧df_k∧ω` and the scalar
//! `F = ⟨df₁∧…∧df_{n−p}, ξ⟩`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{binomial, determinant, wedge_into, MultiIndex};
use crate::harness::{form_inner, l2_inner, normalize_form, EigenfunctionBundle, HarnessError};
use crate::manifold::SampledManifold;
use crate::operators::{dirichlet_energy, Bandwidth, Discretization, FormField, OperatorError};
use crate::reference::c1_constant;
use crate::spectral::{lowest_eigenpairs_with, minmax_bound, rayleigh, SolverError, SolverOptions, SymmetricPencil};

#[derive(Debug, Error)]
pub enum OrientabilityError {
    #[error("kernel graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("degree mismatch: {0}")]
    Degree(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Operator(OperatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl From<OperatorError> for OrientabilityError {
    fn from(e: OperatorError) -> Self {
        match e {
            OperatorError::Disconnected { components } => OrientabilityError::Disconnected { components },
            e => OrientabilityError::Operator(e),
        }
    }
}

type Result<T> = std::result::Result<T, OrientabilityError>;

/// The verdict margin as a fraction of the threshold: `orientable ⇔ λ₁ < (1 − f)·threshold`.
pub const MARGIN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Orientable,
    Unorientable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    /// `n(n−p−1)/(n−1)`, valid under `Ric ≥ n−p−1`.
    Ricci,
    /// `C₁(n, K, 2D)` with `Ric ≥ −K` and `diam ≤ D`.
    Diameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VStats {
    pub norm_sq: f64,
    /// `|‖V‖₂² − 1|`.
    pub norm_defect: f64,
    /// Twisted Dirichlet energy `‖∇V‖₂²` from the determinant-line operator.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FStats {
    pub norm_sq: f64,
    /// `|‖F‖₂² − 1/(n−p+1)|`.
    pub norm_defect: f64,
    pub grad_sq: f64,
    /// `|‖∇F‖₂² − (n−p)/(n−p+1)|`.
    pub grad_defect: f64,
    /// `maxᵢ |⟨fᵢ, F⟩|`.
    pub max_inner: f64,
    /// Min-max value of the function operator over `span{f₁, …, f_{n−p}, F}`;
    /// `None` when `F` lies in the span of the `fᵢ` (for instance `F ≡ 0`).
    pub minmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientabilityReport {
    pub lambda1: f64,
    /// The lowest computed determinant-line eigenvalues.
    pub det_line_lowest: Vec<f64>,
    /// `n(n−p−1)/(n−1)`, present when `p` is given and `Ric ≥ n−p−1` holds.
    pub ricci_threshold: Option<f64>,
    pub diameter_threshold: f64,
    pub threshold_kind: ThresholdKind,
    pub threshold: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub ground_truth: Option<bool>,
    pub matches_ground_truth: Option<bool>,
    pub v: Option<VStats>,
    pub f: Option<FStats>,
}

impl OrientabilityReport {
    /// The verdict agrees with `λ₁` against `threshold − margin`.
    pub fn is_consistent(&self) -> bool {
        (self.lambda1 < self.threshold - self.margin) == (self.verdict == Verdict::Orientable)
    }
}

#[derive(Debug, Clone)]
pub struct OrientabilityOptions {
    pub bandwidth: Bandwidth,
    pub solver: SolverOptions,
    pub tol: f64,
    /// Determinant-line eigenvalues computed.
    pub count: usize,
}

impl Default for OrientabilityOptions {
    fn default() -> Self {
        OrientabilityOptions { bandwidth: Bandwidth::Auto, solver: SolverOptions::default(), tol: 1e-8, count: 3 }
    }
}

/// Thresholds for `(n, p)` on `m`: the Ricci one when its curvature condition holds.
pub fn thresholds(m: &SampledManifold, p: Option<usize>) -> Result<(Option<f64>, f64)> {
    let n = m.dim();
    let ric = m.curvature().ricci_lower_bound();
    let ricci = p.filter(|&p| p + 2 <= n && ric >= (n - p - 1) as f64 - 1e-12).map(|p| {
        let nf = n as f64;
        nf * (nf - p as f64 - 1.0) / (nf - 1.0)
    });
    let k = (-ric).max(0.0);
    let c1 = c1_constant(n, k, 2.0 * m.diameter_bound()).map_err(|e| OrientabilityError::Invalid(e.to_string()))?;
    Ok((ricci, c1))
}

pub fn detect_orientability(m: &SampledManifold, p: Option<usize>, opts: &OrientabilityOptions) -> Result<OrientabilityReport> {
    let disc = Arc::new(Discretization::new(m, opts.bandwidth)?);
    detect_with(m, &disc, p, opts)
}

/// [`detect_orientability`] on an existing discretization.
pub fn detect_with(m: &SampledManifold, disc: &Arc<Discretization>, p: Option<usize>, opts: &OrientabilityOptions) -> Result<OrientabilityReport> {
    let op = disc.operator(m.dim())?;
    let spec = lowest_eigenpairs_with(&op, opts.count.min(op.size()), opts.tol, &opts.solver)?;
    let lambda1 = spec.eigenvalues[0];
    let (ricci, diameter) = thresholds(m, p)?;
    let (threshold_kind, threshold) = match ricci {
        Some(t) => (ThresholdKind::Ricci, t),
        None => (ThresholdKind::Diameter, diameter),
    };
    let margin = MARGIN_FRACTION * threshold;
    let verdict = if lambda1 < threshold - margin { Verdict::Orientable } else { Verdict::Unorientable };
    let ground_truth = m.orientable();
    Ok(OrientabilityReport {
        lambda1,
        det_line_lowest: spec.eigenvalues,
        ricci_threshold: ricci,
        diameter_threshold: diameter,
        threshold_kind,
        threshold,
        margin,
        verdict,
        ground_truth,
        matches_ground_truth: ground_truth.map(|g| g == (verdict == Verdict::Orientable)),
        v: None,
        f: None,
    })
}

/// A pencil conjugated by a diagonal `±1` matrix constant on each point block.
pub struct Switched<'a, P: SymmetricPencil + ?Sized> {
    op: &'a P,
    signs: Vec<f64>,
}

impl<'a, P: SymmetricPencil + ?Sized> Switched<'a, P> {
    /// `flip[i]` negates block `i`; the block size is `dim / flip.len()`.
    pub fn new(op: &'a P, flip: &[bool]) -> Self {
        let b = op.dim() / flip.len();
        assert_eq!(b * flip.len(), op.dim(), "flags must divide the operator size");
        let signs = flip.iter().flat_map(|&f| std::iter::repeat_n(if f { -1.0 } else { 1.0 }, b)).collect();
        Switched { op, signs }
    }
}

impl<P: SymmetricPencil + ?Sized> SymmetricPencil for Switched<'_, P> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let sx: Vec<f64> = x.iter().zip(&self.signs).map(|(v, s)| v * s).collect();
        self.op.apply(&sx, y);
        y.iter_mut().zip(&self.signs).for_each(|(v, s)| *v *= s);
    }

    fn mass(&self) -> Option<&[f64]> {
        self.op.mass()
    }
}

/// Point flips produced by random signs on the edges of a breadth-first spanning
/// tree of the kernel graph: each point's flip is the parity of flipped tree edges
/// on its path to the root. Any such pattern is a switching of the identity.
pub fn tree_switching(disc: &Discretization, seed: u64) -> Vec<bool> {
    let count = disc.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flip = vec![false; count];
    let mut seen = vec![false; count];
    let mut queue = std::collections::VecDeque::new();
    for root in 0..count {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for j in disc.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    flip[j] = flip[i] ^ rng.gen_bool(0.5);
                    queue.push_back(j);
                }
            }
        }
    }
    flip
}

/// `V = Σᵢ (−1)^{i−1} fᵢ df₁∧…∧d̂fᵢ∧…∧df_k∧ω` with `k = n−p+1`.
pub fn build_v(m: &SampledManifold, disc: &Arc<Discretization>, bundle: &EigenfunctionBundle, omega: &FormField) -> Result<(FormField, VStats)> {
    let n = m.dim();
    let k = bundle.len();
    let p = omega.degree();
    if k == 0 || k + p != n + 1 || omega.dim() != n {
        return Err(OrientabilityError::Degree(format!("{k} functions and a {p}-form in dimension {n}")));
    }
    if omega.len() != m.len() {
        return Err(OrientabilityError::Invalid(format!("form over {} points, manifold has {}", omega.len(), m.len())));
    }
    let mut v = FormField::zeros(n, n, m.len());
    for i in 0..m.len() {
        let grads: Vec<&[f64]> = bundle.gradients.iter().map(|g| g.at(i)).collect();
        let mut total = 0.0;
        for skip in 0..k {
            let mut acc = vec![1.0];
            let mut deg = 0;
            for (_, g) in grads.iter().enumerate().filter(|&(j, _)| j != skip) {
                let mut next = vec![0.0; binomial(n, deg + 1)];
                wedge_into(n, deg, &acc, 1, g, &mut next);
                acc = next;
                deg += 1;
            }
            let mut top = [0.0];
            wedge_into(n, deg, &acc, p, omega.at(i), &mut top);
            let sign = if skip % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * bundle.functions[skip][i] * top[0];
        }
        v.at_mut(i)[0] = total;
    }
    let stats = v_stats(m, disc, &v)?;
    Ok((v, stats))
}

fn v_stats(m: &SampledManifold, disc: &Arc<Discretization>, v: &FormField) -> Result<VStats> {
    let norm_sq = form_inner(m, v, v);
    let energy = dirichlet_energy(&disc.operator(m.dim())?, v.values());
    Ok(VStats { norm_sq, norm_defect: (norm_sq - 1.0).abs(), energy })
}

/// The unit form in `span(candidates)` maximizing `‖V‖₂`. `V` is linear in `ω`,
/// so this is the top generalized eigenvector of the two Gram matrices.
pub fn align_omega_for_v(m: &SampledManifold, disc: &Arc<Discretization>, bundle: &EigenfunctionBundle, candidates: &[FormField]) -> Result<FormField> {
    let first = candidates.first().ok_or_else(|| OrientabilityError::Invalid("no candidate forms".into()))?;
    if candidates.len() == 1 {
        return Ok(normalize_form(m, first.clone()));
    }
    let vs: Vec<FormField> = candidates.iter().map(|w| build_v(m, disc, bundle, w).map(|r| r.0)).collect::<Result<_>>()?;
    let r = candidates.len();
    let g = DMatrix::from_fn(r, r, |a, b| form_inner(m, &vs[a], &vs[b]));
    let h = DMatrix::from_fn(r, r, |a, b| form_inner(m, &candidates[a], &candidates[b]));
    let he = SymmetricEigen::new(h);
    let hi = &he.eigenvectors * DMatrix::from_diagonal(&he.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt())) * he.eigenvectors.transpose();
    let c = &hi * g * &hi;
    let ce = SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let top = (0..r).max_by(|&a, &b| ce.eigenvalues[a].total_cmp(&ce.eigenvalues[b])).expect("nonempty");
    let theta = &hi * ce.eigenvectors.column(top);
    let mut omega = FormField::zeros(first.dim(), first.degree(), first.len());
    for (a, w) in candidates.iter().enumerate() {
        omega.values_mut().iter_mut().zip(w.values()).for_each(|(o, x)| *o += theta[a] * x);
    }
    Ok(normalize_form(m, omega))
}

/// `F = ⟨df₁∧…∧df_{n−p}, ξ⟩` for functions normalized to `‖fᵢ‖₂² = 1/(n−p+1)`.
/// `‖∇F‖₂²` is `‖F‖₂²` times the Rayleigh quotient of the function operator.
pub fn build_f(m: &SampledManifold, disc: &Arc<Discretization>, functions: &[Vec<f64>], xi: &FormField) -> Result<(Vec<f64>, FStats)> {
    let n = m.dim();
    let q = xi.degree();
    if functions.len() != q || q == 0 || xi.dim() != n || q >= n {
        return Err(OrientabilityError::Degree(format!("{} functions and a {q}-form in dimension {n}", functions.len())));
    }
    if xi.len() != m.len() || functions.iter().any(|f| f.len() != m.len()) {
        return Err(OrientabilityError::Invalid("fields do not match the sample".into()));
    }
    let grads: Vec<FormField> = functions.iter().map(|f| disc.gradient(f)).collect::<std::result::Result<_, _>>()?;
    let f: Vec<f64> = (0..m.len())
        .map(|i| {
            let mut acc = vec![1.0];
            for (deg, g) in grads.iter().enumerate() {
                let mut next = vec![0.0; binomial(n, deg + 1)];
                wedge_into(n, deg, &acc, 1, g.at(i), &mut next);
                acc = next;
            }
            acc.iter().zip(xi.at(i)).map(|(a, b)| a * b).sum()
        })
        .collect();
    let op = disc.operator(0)?;
    // ξ has degree n − p, so the targets use n − p + 1 = q + 1.
    let k = (q + 1) as f64;
    let norm_sq = l2_inner(m, &f, &f);
    let grad_sq = if norm_sq > 0.0 { rayleigh(&op, &f)? * norm_sq } else { 0.0 };
    let max_inner = functions.iter().map(|fi| l2_inner(m, fi, &f).abs()).fold(0.0, f64::max);
    let mut span: Vec<Vec<f64>> = functions.to_vec();
    span.push(f.clone());
    let minmax = match minmax_bound(&op, &span) {
        Ok(v) => Some(v),
        Err(SolverError::DependentSubspace | SolverError::ZeroVector) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((f, FStats { norm_sq, norm_defect: (norm_sq - 1.0 / k).abs(), grad_sq, grad_defect: (grad_sq - (k - 1.0) / k).abs(), max_inner, minmax }))
}

/// Volume form of sphere factor `factor` of a product of spheres, in the
/// product frame. The sign at each point is the orientation of the factor frame
/// against the outward normal.
pub fn factor_volume_form(m: &SampledManifold, factor: usize) -> Result<FormField> {
    let (facs, pairs, _) = m.product_parts().ok_or_else(|| OrientabilityError::Invalid("not a product".into()))?;
    let fm = facs.get(factor).ok_or_else(|| OrientabilityError::Invalid(format!("no factor {factor}")))?;
    let r = fm.sphere_radius().ok_or_else(|| OrientabilityError::Invalid("factor is not a sphere".into()))?;
    let blocks = m.factor_blocks();
    let n = m.dim();
    let d = fm.dim();
    let idx = MultiIndex::new(n, blocks[factor].clone().collect()).map_err(|e| OrientabilityError::Invalid(e.to_string()))?;
    let rank = idx.rank();
    let signs: Vec<f64> = (0..fm.len())
        .map(|a| {
            let amb = d + 1;
            let mut mat = vec![0.0; amb * amb];
            for (c, x) in fm.point(a).iter().enumerate() {
                mat[c] = x / r;
            }
            for k in 0..d {
                for (c, x) in fm.frame_vector(a, k).iter().enumerate() {
                    mat[(k + 1) * amb + c] = *x;
                }
            }
            determinant(&mat, amb).signum()
        })
        .collect();
    let mut out = FormField::zeros(n, d, m.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let s = if factor == 0 { a } else { b };
        out.at_mut(i)[rank] = signs[s];
    }
    Ok(out)
}
