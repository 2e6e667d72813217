//! The pinching pipeline: eigenvalues and the main lower bound, the
//! Bochner–Reilly identity on parallel forms, the sphere map built from
//! eigenfunctions, the level set `A_f`, and the residuals of the approximation
//! map `Φ_f = (Ψ, a_f)`.
//!
//! All `L²` quantities are normalized by volume: `‖f‖₂² = (1/Vol) ∫ f²`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{covector_interior_into, decompose_covariant};
use crate::gh::{gh_upper_bound_from_map, verify_approximation_map, GhError, LazyMetric};
use crate::manifold::{sample_sphere_with, SampledManifold, Sampling};
use crate::operators::{Bandwidth, BandwidthReport, Discretization, FormField, OperatorError};
use crate::reference::{bounds, pinching_exponents, Bounds, PinchingExponents};
use crate::spectral::{lowest_eigenpairs_with, rayleigh, SolverError, SolverOptions, Spectrum};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("undersampled: {fraction:.3} of points have no valid gradient stencil")]
    Undersampled { fraction: f64 },
    #[error("curvature precondition fails: Ric ≥ {have} but {need} is required")]
    Precondition { have: f64, need: f64 },
    #[error("sphere map vanishes at point {0}")]
    VanishingMap(usize),
    #[error("empty level set")]
    EmptyLevelSet,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Gh(#[from] GhError),
}

type Result<T> = std::result::Result<T, HarnessError>;

/// Eigenvalues closer than this fraction of the cluster's first value share a cluster.
pub const CLUSTER_TOLERANCE: f64 = 0.1;
/// Forms with `λ(Δ_{C,p})` at most this count as near-parallel.
pub const NEAR_NULL_CUTOFF: f64 = 0.1;
/// `λ₁(Δ_{C,p})` at or below this is round-off: the form is parallel to working precision.
pub const DEFECT_ROUNDOFF: f64 = 1e-10;

/// How the level set `A_f` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelRule {
    /// `|f − max f| ≤ tol`, anchored at the sample maximizer.
    SampleMax { tol: f64 },
    /// `|f − 1| ≤ tol`.
    Literal { tol: f64 },
}

impl LevelRule {
    pub const DEFAULT: LevelRule = LevelRule::SampleMax { tol: 1e-3 };

    /// `|f − 1| ≤ max(δ^{1/900n}, 0.05)`.
    pub fn literal(delta: f64, n: usize) -> Self {
        let t = (delta.max(f64::MIN_POSITIVE).ln() / (900.0 * n as f64)).exp();
        LevelRule::Literal { tol: t.max(0.05) }
    }
}

/// Which function `f = Σ uᵢ fᵢ` of the bundle drives `A_f` and `a_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FChoice {
    First,
    /// `f = ⟨Ψ(x), Ψ̃⟩` at a sample point `x` maximizing `f`, found by fixed-point iteration.
    Anchored,
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub bandwidth: Bandwidth,
    /// Eigen-residual tolerance.
    pub tol: f64,
    /// Relative discretization margin for eigenvalue comparisons.
    pub margin: f64,
    pub max_invalid_fraction: f64,
    pub level: LevelRule,
    pub f_choice: FChoice,
    pub solver: SolverOptions,
    /// Function eigenpairs computed by a pipeline.
    pub function_count: usize,
    /// Form eigenpairs computed by a pipeline.
    pub form_count: usize,
    /// Points of the reference sample of `S^{n−p}` in the target of `Φ_f`.
    pub reference_points: usize,
    /// Random triples used to validate the glued metric.
    pub glued_triples: usize,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            bandwidth: Bandwidth::Auto,
            tol: 1e-8,
            margin: 0.05,
            max_invalid_fraction: 0.01,
            level: LevelRule::DEFAULT,
            f_choice: FChoice::Anchored,
            solver: SolverOptions::default(),
            function_count: 12,
            form_count: 4,
            reference_points: 4000,
            glued_triples: 2000,
        }
    }
}

/// `(1/Vol) Σ w a b`.
pub fn l2_inner(m: &SampledManifold, a: &[f64], b: &[f64]) -> f64 {
    m.weights().iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum::<f64>() / m.volume()
}

/// Normalized `L²` inner product of two form fields of the same degree.
pub fn form_inner(m: &SampledManifold, a: &FormField, b: &FormField) -> f64 {
    let bs = a.block();
    m.weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * a.values()[i * bs..(i + 1) * bs].iter().zip(&b.values()[i * bs..(i + 1) * bs]).map(|(x, y)| x * y).sum::<f64>())
        .sum::<f64>()
        / m.volume()
}

/// `(1/Vol) Σ w |v|` of a pointwise quantity.
pub fn l1_mean(m: &SampledManifold, v: &[f64]) -> f64 {
    m.weights().iter().zip(v).map(|(w, x)| w * x.abs()).sum::<f64>() / m.volume()
}

/// Discretization plus the low function and form spectra of one run.
pub struct Pipeline<'a> {
    pub manifold: &'a SampledManifold,
    pub disc: Arc<Discretization>,
    pub p: usize,
    pub functions: Spectrum,
    pub forms: Spectrum,
}

impl<'a> Pipeline<'a> {
    pub fn new(m: &'a SampledManifold, p: usize, opts: &HarnessOptions) -> Result<Self> {
        let disc = Arc::new(Discretization::new(m, opts.bandwidth)?);
        Self::with_discretization(m, disc, p, opts)
    }

    pub fn with_discretization(m: &'a SampledManifold, disc: Arc<Discretization>, p: usize, opts: &HarnessOptions) -> Result<Self> {
        let frac = disc.invalid_fraction();
        if frac > opts.max_invalid_fraction {
            return Err(HarnessError::Undersampled { fraction: frac });
        }
        let functions = lowest_eigenpairs_with(&disc.operator(0)?, opts.function_count.min(m.len()), opts.tol, &opts.solver)?;
        let forms = lowest_eigenpairs_with(&disc.operator(p)?, opts.form_count, opts.tol, &opts.solver)?;
        Ok(Pipeline { manifold: m, disc, p, functions, forms })
    }

    /// Index ranges of the nonconstant function clusters, at relative tolerance
    /// [`CLUSTER_TOLERANCE`]; the last range may be cut off by the computed count.
    pub fn function_clusters(&self) -> Vec<std::ops::Range<usize>> {
        relative_clusters(&self.functions.eigenvalues, 1)
    }

    /// Field of eigenvector `j` of the form spectrum.
    pub fn form_field(&self, j: usize) -> FormField {
        FormField::from_values(self.manifold.dim(), self.p, self.forms.eigenvectors[j].clone()).expect("solver output is finite")
    }

    /// Near-parallel forms: eigenforms with `λ ≤ NEAR_NULL_CUTOFF`, at least the lowest one.
    pub fn near_null_forms(&self) -> Vec<FormField> {
        let k = self.forms.eigenvalues.iter().take_while(|&&l| l <= NEAR_NULL_CUTOFF).count().max(1);
        (0..k).map(|j| normalize_form(self.manifold, self.form_field(j))).collect()
    }
}

fn relative_clusters(vals: &[f64], start: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut s = start;
    while s < vals.len() {
        let mut e = s + 1;
        while e < vals.len() && vals[e] <= vals[s] * (1.0 + CLUSTER_TOLERANCE) {
            e += 1;
        }
        out.push(s..e);
        s = e;
    }
    out
}

/// Rescales to `‖ω‖₂ = 1`.
pub fn normalize_form(m: &SampledManifold, w: FormField) -> FormField {
    let nrm = form_inner(m, &w, &w).sqrt();
    w.scaled(1.0 / nrm)
}

/// `ι(∇f)ω` pointwise, for a gradient in frame coordinates.
pub fn contract(grad: &FormField, omega: &FormField) -> FormField {
    let n = omega.dim();
    let p = omega.degree();
    assert!(p >= 1, "cannot contract a function");
    let mut out = FormField::zeros(n, p - 1, omega.len());
    let bo = out.block();
    out.values_mut().par_chunks_mut(bo).enumerate().for_each(|(i, o)| {
        let g = grad.at(i);
        let w = omega.at(i);
        for c in 0..n {
            covector_interior_into(n, c, p, w, g[c], o);
        }
    });
    out
}

/// Eigenfunctions `f₁..f_k` normalized to `‖fᵢ‖₂² = 1/(n−p+1)`, with gradients.
#[derive(Debug, Clone)]
pub struct EigenfunctionBundle {
    pub n: usize,
    pub p: usize,
    pub functions: Vec<Vec<f64>>,
    /// Rayleigh quotients of the normalized functions.
    pub eigenvalues: Vec<f64>,
    pub gradients: Vec<FormField>,
    /// `max_{i≠j} |⟨fᵢ, fⱼ⟩| / ‖fᵢ‖‖fⱼ‖`.
    pub orthogonality_defect: f64,
}

impl EigenfunctionBundle {
    pub fn from_functions(m: &SampledManifold, disc: &Arc<Discretization>, p: usize, functions: Vec<Vec<f64>>) -> Result<Self> {
        let op = disc.operator(0)?;
        let eigenvalues = functions.iter().map(|f| rayleigh(&op, f)).collect::<std::result::Result<Vec<_>, _>>()?;
        let gradients = functions.iter().map(|f| disc.gradient(f)).collect::<std::result::Result<Vec<_>, _>>()?;
        let k = functions.len();
        let mut defect: f64 = 0.0;
        for i in 0..k {
            for j in 0..i {
                let g = l2_inner(m, &functions[i], &functions[j]);
                let s = (l2_inner(m, &functions[i], &functions[i]) * l2_inner(m, &functions[j], &functions[j])).sqrt();
                defect = defect.max(g.abs() / s);
            }
        }
        Ok(EigenfunctionBundle { n: m.dim(), p, functions, eigenvalues, gradients, orthogonality_defect: defect })
    }

    /// `k = n−p+1` functions from the first nonconstant cluster. When the cluster is
    /// larger and a reference form is given, the `k`-dimensional subspace minimizing
    /// `∫ |ι(∇f)ω|²` is used.
    pub fn from_pipeline(pl: &Pipeline<'_>, reference: Option<&FormField>) -> Result<Self> {
        Self::from_function_spectrum(pl.manifold, &pl.disc, pl.p, &pl.functions, reference)
    }

    /// As [`EigenfunctionBundle::from_pipeline`], from a function spectrum alone.
    pub fn from_function_spectrum(
        m: &SampledManifold,
        disc: &Arc<Discretization>,
        p: usize,
        functions: &Spectrum,
        reference: Option<&FormField>,
    ) -> Result<Self> {
        let k = m.dim() - p + 1;
        let cluster =
            relative_clusters(&functions.eigenvalues, 1).into_iter().next().ok_or_else(|| HarnessError::Invalid("no nonconstant eigenfunctions".into()))?;
        if cluster.len() < k {
            return Err(HarnessError::Invalid(format!("first cluster has {} functions, need {k}", cluster.len())));
        }
        let vecs: Vec<&Vec<f64>> = functions.eigenvectors[cluster].iter().collect();
        let coeffs = match reference {
            Some(omega) if vecs.len() > k => {
                let q = contraction_form(m, disc, &vecs, omega)?;
                lowest_generalized(&q, &gram(m, &vecs), k)
            }
            _ => (0..k).map(|i| (0..vecs.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        };
        let fs: Vec<Vec<f64>> = coeffs.iter().map(|c| combine(&vecs, c)).collect();
        let fs = lowdin(m, fs, 1.0 / k as f64)?;
        Self::from_functions(m, disc, p, fs)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// The bundle `Σ_j R_ij f_j` for an orthogonal `R` (row-major).
    pub fn rotated(&self, m: &SampledManifold, disc: &Arc<Discretization>, r: &[f64]) -> Result<Self> {
        let k = self.len();
        let refs: Vec<&Vec<f64>> = self.functions.iter().collect();
        let fs = (0..k).map(|i| combine(&refs, &r[i * k..(i + 1) * k])).collect();
        Self::from_functions(m, disc, self.p, fs)
    }
}

fn combine(vecs: &[&Vec<f64>], c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vecs[0].len()];
    for (v, &ci) in vecs.iter().zip(c) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += ci * x;
        }
    }
    out
}

fn gram(m: &SampledManifold, vecs: &[&Vec<f64>]) -> DMatrix<f64> {
    let c = vecs.len();
    DMatrix::from_fn(c, c, |i, j| l2_inner(m, vecs[i], vecs[j]))
}

/// `Q_ij = ⟨ι(∇vᵢ)ω, ι(∇vⱼ)ω⟩`.
fn contraction_form(m: &SampledManifold, disc: &Discretization, vecs: &[&Vec<f64>], omega: &FormField) -> Result<DMatrix<f64>> {
    let etas: Vec<FormField> = vecs.iter().map(|v| Ok(contract(&disc.gradient(v)?, omega))).collect::<Result<_>>()?;
    let c = vecs.len();
    Ok(DMatrix::from_fn(c, c, |i, j| form_inner(m, &etas[i], &etas[j])))
}

/// Coefficient vectors of the `k` lowest solutions of `Q c = μ G c`.
fn lowest_generalized(q: &DMatrix<f64>, g: &DMatrix<f64>, k: usize) -> Vec<Vec<f64>> {
    let gi = inv_sqrt(g);
    let c = &gi * q * &gi;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order[..k].iter().map(|&j| (&gi * eig.eigenvectors.column(j)).iter().copied().collect()).collect()
}

fn inv_sqrt(g: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(g.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Symmetric orthonormalization in the volume `L²`, scaled to `‖fᵢ‖₂² = target`.
fn lowdin(m: &SampledManifold, fs: Vec<Vec<f64>>, target: f64) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&Vec<f64>> = fs.iter().collect();
    let g = gram(m, &refs);
    if g.diagonal().iter().any(|&d| !(d > 0.0)) {
        return Err(HarnessError::Invalid("zero function in bundle".into()));
    }
    let gi = inv_sqrt(&g) * target.sqrt();
    let k = fs.len();
    Ok((0..k).map(|i| combine(&refs, gi.column(i).as_slice())).collect())
}

/// Candidate directions scanned in a near-null form space of dimension above 2.
const ALIGNMENT_CANDIDATES: usize = 256;
const ALIGNMENT_SEED: u64 = 0xa11e;

/// Picks a near-parallel form `ω` and the bundle together: over unit `ω` in the
/// near-null eigenspace, the first function cluster's `k`-dimensional subspace
/// minimizing `∫|ι(∇f)ω|²` is found, and the `ω` with the smallest total is kept.
pub fn aligned_bundle(pl: &Pipeline<'_>) -> Result<(EigenfunctionBundle, FormField)> {
    let m = pl.manifold;
    let null = pl.near_null_forms();
    if null.len() == 1 {
        let omega = null.into_iter().next().unwrap();
        return Ok((EigenfunctionBundle::from_pipeline(pl, Some(&omega))?, omega));
    }
    let k = m.dim() - pl.p + 1;
    let cluster = pl.function_clusters().into_iter().next().ok_or_else(|| HarnessError::Invalid("no nonconstant eigenfunctions".into()))?;
    if cluster.len() < k {
        return Err(HarnessError::Invalid(format!("first cluster has {} functions, need {k}", cluster.len())));
    }
    let vecs: Vec<&Vec<f64>> = pl.functions.eigenvectors[cluster].iter().collect();
    let gi = inv_sqrt(&gram(m, &vecs));
    let grads: Vec<FormField> = vecs.iter().map(|v| pl.disc.gradient(v)).collect::<std::result::Result<_, _>>()?;
    let r = null.len();
    let c = vecs.len();
    let etas: Vec<Vec<FormField>> = null.iter().map(|w| grads.iter().map(|gr| contract(gr, w)).collect()).collect();
    // Q^{ab}_{jl} = ⟨ι(∇v_j)ω_a, ι(∇v_l)ω_b⟩.
    let mut qab = vec![DMatrix::zeros(c, c); r * r];
    for a in 0..r {
        for b in 0..r {
            qab[a * r + b] = DMatrix::from_fn(c, c, |j, l| form_inner(m, &etas[a][j], &etas[b][l]));
        }
    }
    let h = DMatrix::from_fn(r, r, |a, b| form_inner(m, &null[a], &null[b]));
    let candidates: Vec<Vec<f64>> = if r == 2 {
        (0..180)
            .map(|t| {
                let th = std::f64::consts::PI * t as f64 / 180.0;
                vec![th.cos(), th.sin()]
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(ALIGNMENT_SEED);
        let mut v: Vec<Vec<f64>> = (0..r).map(|a| (0..r).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
        v.extend((0..ALIGNMENT_CANDIDATES).map(|_| (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()));
        v
    };
    let score = |theta: &[f64]| {
        let mut q = DMatrix::zeros(c, c);
        for a in 0..r {
            for b in 0..r {
                q += &qab[a * r + b] * (theta[a] * theta[b]);
            }
        }
        let tn: f64 = (0..r).flat_map(|a| (0..r).map(move |b| (a, b))).map(|(a, b)| theta[a] * theta[b] * h[(a, b)]).sum();
        let cm = &gi * q * &gi;
        let mut ev: Vec<f64> = SymmetricEigen::new((&cm + cm.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev[..k.min(c)].iter().sum::<f64>() / tn
    };
    let best = candidates.iter().map(|t| (score(t), t)).fold((f64::INFINITY, &candidates[0]), |a, b| if b.0 < a.0 { b } else { a }).1;
    let mut omega = FormField::zeros(m.dim(), pl.p, m.len());
    for (a, w) in null.iter().enumerate() {
        omega.values_mut().iter_mut().zip(w.values()).for_each(|(o, x)| *o += best[a] * x);
    }
    let omega = normalize_form(m, omega);
    Ok((EigenfunctionBundle::from_pipeline(pl, Some(&omega))?, omega))
}

/// Outcome of comparing `λ₁(g)` with `n − p` given `λ₁(Δ_{C,p})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Main1Fragment {
    pub n: usize,
    pub p: usize,
    pub lambda1_g: f64,
    pub lambda_c_p: f64,
    pub lambda_c_complement: f64,
    /// `λ₁(g) − (n−p)`.
    pub slack: f64,
    /// `−slack / λ₁(Δ_{C,p})^{1/2}` when the slack is negative; undefined when the
    /// defect is at [`DEFECT_ROUNDOFF`].
    pub ratio: Option<f64>,
    /// `−slack / λ₁(Δ_{C,n−p})^{1/2}` under the same conditions.
    pub ratio_complement: Option<f64>,
    pub lichnerowicz_floor: f64,
    pub margin: f64,
    pub floor_respected: bool,
    pub slack_within_margin: bool,
    pub invalid_fraction: f64,
    pub function_eigenvalues: Vec<f64>,
    pub form_eigenvalues: Vec<f64>,
}

/// Computes `λ₁(g)`, `λ₁(Δ_{C,p})` and `λ₁(Δ_{C,n−p})` and evaluates the lower bound.
pub fn verify_main1(m: &SampledManifold, p: usize, opts: &HarnessOptions) -> Result<Main1Fragment> {
    let pl = Pipeline::new(m, p, opts)?;
    main1_from_pipeline(&pl, opts)
}

pub fn main1_from_pipeline(pl: &Pipeline<'_>, opts: &HarnessOptions) -> Result<Main1Fragment> {
    let m = pl.manifold;
    let (n, p) = (m.dim(), pl.p);
    if p == 0 || p >= n {
        return Err(HarnessError::Invalid(format!("degree {p} outside 1..{n}")));
    }
    let need = (n - p - 1) as f64;
    let have = m.curvature().ricci_lower_bound();
    if have < need - 1e-12 {
        return Err(HarnessError::Precondition { have, need });
    }
    let lambda1_g = pl.functions.eigenvalues.get(1).copied().ok_or_else(|| HarnessError::Invalid("need two function eigenpairs".into()))?;
    let lambda_c_p = pl.forms.eigenvalues[0];
    let lambda_c_complement =
        if n - p == p { lambda_c_p } else { lowest_eigenpairs_with(&pl.disc.operator(n - p)?, 1, opts.tol, &opts.solver)?.eigenvalues[0] };
    let b = bounds(n, p).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let target = b.grosjean.value;
    let slack = lambda1_g - target;
    let ratio_of = |lc: f64| (slack < 0.0 && lc > DEFECT_ROUNDOFF).then(|| -slack / lc.sqrt());
    let floor = b.lichnerowicz.value;
    Ok(Main1Fragment {
        n,
        p,
        lambda1_g,
        lambda_c_p,
        lambda_c_complement,
        slack,
        ratio: ratio_of(lambda_c_p),
        ratio_complement: ratio_of(lambda_c_complement),
        lichnerowicz_floor: floor,
        margin: opts.margin,
        floor_respected: lambda1_g >= floor * (1.0 - opts.margin),
        slack_within_margin: slack.abs() <= opts.margin * target,
        invalid_fraction: pl.disc.invalid_fraction(),
        function_eigenvalues: pl.functions.eigenvalues.clone(),
        form_eigenvalues: pl.forms.eigenvalues.clone(),
    })
}

/// Both sides of the Bochner–Reilly identity for a parallel form, as normalized
/// integrals, and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BochnerReilly {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `∫|T(ι(∇f)ω)|²` against `((p−1)/p)∫⟨ι(∇f)ω, ι(∇Δf)ω⟩ − ∫⟨ι(Ric(∇f))ω, ι(∇f)ω⟩`
/// with `Δf = λf`.
pub fn bochner_reilly_residual(m: &SampledManifold, disc: &Discretization, f: &[f64], lambda: f64, omega: &FormField) -> Result<BochnerReilly> {
    let p = omega.degree();
    if p == 0 || p >= m.dim() {
        return Err(HarnessError::Invalid(format!("form degree {p} outside 1..{}", m.dim())));
    }
    let ric = m.curvature().ricci_diagonal();
    if ric.len() != m.dim() {
        return Err(HarnessError::Invalid("curvature metadata missing".into()));
    }
    let grad = disc.gradient(f)?;
    let eta = contract(&grad, omega);
    let mut ric_grad = grad.clone();
    ric_grad.values_mut().chunks_mut(m.dim()).for_each(|g| g.iter_mut().zip(&ric).for_each(|(x, r)| *x *= r));
    let eta_ric = contract(&ric_grad, omega);
    let cov = disc.covariant_gradient(&eta)?;
    let t_sq: Vec<f64> = cov.par_iter().map(|t| decompose_covariant(t).t_part.norm_sq()).collect();
    let lhs = l1_mean(m, &t_sq);
    let eta_sq = form_inner(m, &eta, &eta);
    let rhs = (p as f64 - 1.0) / p as f64 * lambda * eta_sq - form_inner(m, &eta_ric, &eta);
    Ok(BochnerReilly { lhs, rhs, residual: (lhs - rhs).abs() })
}

/// `Ψ̃ = (f₁, …, f_k)` and `Ψ = Ψ̃/|Ψ̃|` per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereMap {
    pub k: usize,
    pub raw: Vec<f64>,
    pub unit: Vec<f64>,
    /// `max | |Ψ̃|² − 1 |`.
    pub psi_sup_defect: f64,
}

impl SphereMap {
    pub fn raw_at(&self, i: usize) -> &[f64] {
        &self.raw[i * self.k..(i + 1) * self.k]
    }

    pub fn unit_at(&self, i: usize) -> &[f64] {
        &self.unit[i * self.k..(i + 1) * self.k]
    }

    pub fn len(&self) -> usize {
        self.raw.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

pub fn build_sphere_map(bundle: &EigenfunctionBundle) -> Result<SphereMap> {
    let k = bundle.len();
    if k == 0 {
        return Err(HarnessError::Invalid("empty bundle".into()));
    }
    let npts = bundle.functions[0].len();
    let mut raw = Vec::with_capacity(npts * k);
    for i in 0..npts {
        raw.extend(bundle.functions.iter().map(|f| f[i]));
    }
    let mut unit = raw.clone();
    let mut defect: f64 = 0.0;
    for (i, c) in unit.chunks_mut(k).enumerate() {
        let sq: f64 = c.iter().map(|v| v * v).sum();
        if !(sq > 0.0) {
            return Err(HarnessError::VanishingMap(i));
        }
        defect = defect.max((sq - 1.0).abs());
        let r = sq.sqrt();
        c.iter_mut().for_each(|v| *v /= r);
    }
    Ok(SphereMap { k, raw, unit, psi_sup_defect: defect })
}

/// Angle between unit vectors, accurate at both ends.
pub fn sphere_angle(a: &[f64], b: &[f64]) -> f64 {
    let (mut dm, mut dp) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dm += (x - y) * (x - y);
        dp += (x + y) * (x + y);
    }
    2.0 * dm.sqrt().atan2(dp.sqrt())
}

/// `f = Σ uᵢ fᵢ` together with the unit coefficient vector `u`.
pub fn choose_function(bundle: &EigenfunctionBundle, map: &SphereMap, choice: &FChoice) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = bundle.len();
    let refs: Vec<&Vec<f64>> = bundle.functions.iter().collect();
    let u = match choice {
        FChoice::First => (0..k).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        FChoice::Coefficients(c) => {
            let nrm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if c.len() != k || !(nrm > 0.0) {
                return Err(HarnessError::Invalid(format!("need {k} nonzero coefficients")));
            }
            c.iter().map(|x| x / nrm).collect()
        }
        FChoice::Anchored => {
            // Start at the largest |Ψ̃| so the choice depends only on the bundle's span.
            let start = argmax((0..map.len()).map(|i| map.raw_at(i).iter().map(|v| v * v).sum::<f64>()));
            let mut x = start;
            let mut u = map.unit_at(x).to_vec();
            for _ in 0..32 {
                let f = combine(&refs, &u);
                let nx = argmax(f.iter().copied());
                if nx == x {
                    break;
                }
                x = nx;
                u = map.unit_at(x).to_vec();
            }
            u
        }
    };
    Ok((combine(&refs, &u), u))
}

/// First index of the maximum.
fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// `A_f` and the nearest-point assignment `a_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub level: f64,
    pub tol: f64,
    pub members: Vec<usize>,
    /// `a_f(x)`, a point index in `members`' range of the sample.
    pub assignment: Vec<usize>,
    /// `d(x, A_f)`.
    pub distance: Vec<f64>,
}

pub fn level_set_and_projection(m: &SampledManifold, f: &[f64], rule: LevelRule) -> Result<LevelSet> {
    let (level, tol) = match rule {
        LevelRule::SampleMax { tol } => (f.iter().copied().fold(f64::NEG_INFINITY, f64::max), tol),
        LevelRule::Literal { tol } => (1.0, tol),
    };
    if !(tol > 0.0) {
        return Err(HarnessError::Invalid(format!("threshold {tol}")));
    }
    let members: Vec<usize> = (0..f.len()).filter(|&i| (f[i] - level).abs() <= tol).collect();
    if members.is_empty() {
        return Err(HarnessError::EmptyLevelSet);
    }
    let pairs: Vec<(usize, f64)> = (0..f.len())
        .into_par_iter()
        .map(|x| {
            let mut best = (members[0], f64::INFINITY);
            for &a in &members {
                let d = if a == x { 0.0 } else { m.distance(x, a) };
                // Strict comparison keeps the smallest index on ties.
                if d < best.1 {
                    best = (a, d);
                }
            }
            best
        })
        .collect();
    Ok(LevelSet { level, tol, members, assignment: pairs.iter().map(|p| p.0).collect(), distance: pairs.iter().map(|p| p.1).collect() })
}

/// `max_x |f(x) − cos d(x, A_f)|`.
pub fn almost_cosine_residual(f: &[f64], level: &LevelSet) -> f64 {
    f.iter().zip(&level.distance).map(|(v, d)| (v - d.cos()).abs()).fold(0.0, f64::max)
}

/// Pointwise Gram identities of the bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramDefect {
    /// Mean and max of `|fᵢfⱼ + ⟨∇fᵢ, ∇fⱼ⟩|` over pairs `i ≠ j`.
    pub off_mean: f64,
    pub off_max: f64,
    /// Mean and max of `|fᵢ² + |∇fᵢ|² − 1|`.
    pub diag_mean: f64,
    pub diag_max: f64,
}

pub fn gram_defect(m: &SampledManifold, bundle: &EigenfunctionBundle) -> GramDefect {
    let k = bundle.len();
    let npts = m.len();
    let entry = |i: usize, j: usize| -> Vec<f64> {
        (0..npts)
            .map(|x| {
                let g: f64 = bundle.gradients[i].at(x).iter().zip(bundle.gradients[j].at(x)).map(|(a, b)| a * b).sum();
                bundle.functions[i][x] * bundle.functions[j][x] + g - if i == j { 1.0 } else { 0.0 }
            })
            .collect()
    };
    let (mut off_mean, mut off_max, mut diag_mean, mut diag_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut pairs = 0;
    for i in 0..k {
        for j in 0..=i {
            let v = entry(i, j);
            let mx = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let mean = l1_mean(m, &v);
            if i == j {
                diag_mean += mean / k as f64;
                diag_max = diag_max.max(mx);
            } else {
                off_mean += mean;
                off_max = off_max.max(mx);
                pairs += 1;
            }
        }
    }
    if pairs > 0 {
        off_mean /= pairs as f64;
    }
    GramDefect { off_mean, off_max, diag_mean, diag_max }
}

/// Measured quality of `Φ_f = (Ψ, a_f) : M → S^{n−p} × A_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhMapReport {
    /// `max(distortion, density + reference covering radius)`.
    pub epsilon: f64,
    pub distortion: f64,
    /// Density of the image in the finite target.
    pub density: f64,
    /// Estimated covering radius of the reference sample of `S^{n−p}`.
    pub reference_radius: f64,
    /// `max |d(x,z)² − d_S(Ψx, Ψz)² − d(a_f x, a_f z)²|`.
    pub pythagorean_residual: f64,
    /// `3ε/2` for the finite target, with the glued metric validated.
    pub gh_bound_finite: f64,
    pub level_set_size: usize,
    pub target_size: usize,
    pub coefficients: Vec<f64>,
}

/// Builds `Φ_f` and measures it against the product `S^{n−p} × A_f`, with the
/// sphere replaced by the image of `Ψ` plus a quasi-uniform reference sample.
pub fn build_gh_map(m: &SampledManifold, bundle: &EigenfunctionBundle, opts: &HarnessOptions) -> Result<(GhMapReport, LevelSet)> {
    let map = build_sphere_map(bundle)?;
    let (f, u) = choose_function(bundle, &map, &opts.f_choice)?;
    let level = level_set_and_projection(m, &f, opts.level)?;
    let k = map.k;
    let npts = m.len();
    let reference = sample_sphere_with(k - 1, 1.0, opts.reference_points.max(2), opts.solver.seed, Sampling::QuasiUniform)
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let reference_radius = covering_radius(&reference, opts.solver.seed);

    let members = &level.members;
    let na = members.len();
    let pos: std::collections::HashMap<usize, usize> = members.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let da: Vec<f64> = (0..na * na).into_par_iter().map(|t| if t / na == t % na { 0.0 } else { m.distance(members[t / na], members[t % na]) }).collect();
    // Target points: the image of every sample first, then reference × A_f.
    let mut sph: Vec<f64> = map.unit.clone();
    let mut fac: Vec<usize> = level.assignment.iter().map(|a| pos[a]).collect();
    for r in 0..reference.len() {
        for a in 0..na {
            sph.extend_from_slice(reference.point(r));
            fac.push(a);
        }
    }
    let ny = fac.len();
    let y = LazyMetric::new(ny, |s, t| {
        let ds = sphere_angle(&sph[s * k..(s + 1) * k], &sph[t * k..(t + 1) * k]);
        let dx = da[fac[s] * na + fac[t]];
        (ds * ds + dx * dx).sqrt()
    });
    let x = LazyMetric::new(npts, |i, j| if i == j { 0.0 } else { m.distance(i, j) });
    let phi: Vec<usize> = (0..npts).collect();
    let check = verify_approximation_map(&x, &y, &phi, f64::INFINITY)?;
    let pyth = (0..npts)
        .into_par_iter()
        .map(|i| {
            let mut w: f64 = 0.0;
            for j in i + 1..npts {
                let d = m.distance(i, j);
                let ds = sphere_angle(map.unit_at(i), map.unit_at(j));
                let dx = da[fac[i] * na + fac[j]];
                w = w.max((d * d - ds * ds - dx * dx).abs());
            }
            w
        })
        .reduce(|| 0.0, f64::max);
    let eps_finite = check.measured * (1.0 + 1e-9) + 1e-12;
    let bound = gh_upper_bound_from_map(&x, &y, &phi, eps_finite, opts.glued_triples, opts.solver.seed)?;
    Ok((
        GhMapReport {
            epsilon: check.distortion.max(check.density + reference_radius),
            distortion: check.distortion,
            density: check.density,
            reference_radius,
            pythagorean_residual: pyth,
            gh_bound_finite: bound.bound,
            level_set_size: na,
            target_size: ny,
            coefficients: u,
        },
        level,
    ))
}

/// Largest distance from random probes on the unit sphere to the sample.
fn covering_radius(s: &SampledManifold, seed: u64) -> f64 {
    let k = s.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0fe);
    let probes: Vec<Vec<f64>> = (0..20_000)
        .map(|_| {
            let g: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let r = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.into_iter().map(|x| x / r).collect()
        })
        .collect();
    probes.par_iter().map(|p| (0..s.len()).map(|i| sphere_angle(p, s.point(i))).fold(f64::INFINITY, f64::min)).reduce(|| 0.0, f64::max)
}

/// Everything one pinching run measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    /// `λ₁(Δ_{C,p})`.
    pub delta_form: f64,
    pub main1: Main1Fragment,
    pub bounds: Bounds,
    pub psi_sup_defect: f64,
    pub gram: GramDefect,
    pub cosine_residual: f64,
    pub pythagorean_residual: f64,
    pub gh: GhMapReport,
    /// `None` below dimension 5, where the ladder is not defined.
    pub exponents: Option<PinchingExponents>,
    pub bandwidth: BandwidthReport,
    pub points: usize,
    pub seed: u64,
}

/// Full pipeline on one manifold.
pub fn run_pinching(m: &SampledManifold, p: usize, opts: &HarnessOptions) -> Result<PinchingReport> {
    let pl = Pipeline::new(m, p, opts)?;
    let main1 = main1_from_pipeline(&pl, opts)?;
    let (bundle, _) = aligned_bundle(&pl)?;
    let map = build_sphere_map(&bundle)?;
    let (gh, level) = build_gh_map(m, &bundle, opts)?;
    let (f, _) = choose_function(&bundle, &map, &opts.f_choice)?;
    let delta = main1.lambda_c_p;
    Ok(PinchingReport {
        delta_form: delta,
        bounds: bounds(m.dim(), p).map_err(|e| HarnessError::Invalid(e.to_string()))?,
        psi_sup_defect: map.psi_sup_defect,
        gram: gram_defect(m, &bundle),
        cosine_residual: almost_cosine_residual(&f, &level),
        pythagorean_residual: gh.pythagorean_residual,
        gh,
        exponents: exponent_ladder(delta, m.dim()),
        bandwidth: pl.disc.bandwidth_report().clone(),
        points: m.len(),
        seed: opts.solver.seed,
        main1,
    })
}

/// Exponent ladder at `δ`, clamped into `(0, 1]`.
pub fn exponent_ladder(delta: f64, n: usize) -> Option<PinchingExponents> {
    pinching_exponents(delta.clamp(f64::MIN_POSITIVE, 1.0), n).ok()
}

/// Normalized function with `‖f‖₂² = 1/k` from a raw eigenvector.
pub fn normalized_function(m: &SampledManifold, f: &[f64], k: usize) -> Vec<f64> {
    let s = (1.0 / (k as f64 * l2_inner(m, f, f))).sqrt();
    f.iter().map(|v| v * s).collect()
}
