//! Almost-Kähler checks: the defects `‖∇ω‖₂²/‖ω‖₂²` and `‖J_ω²+Id‖₁/‖ω‖₂²`, the
//! projection onto low connection-Laplacian modes, the top wedge power of the
//! projected form, and the eigenvalue bound `λ₁ ≥ 2(n−1)`.
//!
//! Every norm here (`L¹`, `L²`, energy) is taken in the operator's mass measure,
//! so the low-mode projection is orthogonal for the same inner product the
//! estimates are stated in.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{binomial, j_map, jj_plus_id_norm, wedge_power, KVector};
use crate::harness::NEAR_NULL_CUTOFF;
use crate::manifold::SampledManifold;
use crate::operators::{Bandwidth, Discretization, FormField, OperatorError, OperatorHandle};
use crate::reference::alpha_forms;
use crate::spectral::{lowest_eigenpairs_with, SolverError, SolverOptions, Spectrum, SymmetricPencil};

#[derive(Debug, Error)]
pub enum KahlerError {
    #[error("the form vanishes")]
    ZeroForm,
    #[error("expected a {expected}-form, got degree {got}")]
    Degree { expected: usize, got: usize },
    #[error("no computed mode has eigenvalue ≤ {cutoff}")]
    NoModes { cutoff: f64 },
    #[error("largest computed eigenvalue {largest} does not exceed the cutoff {cutoff}; the projection may miss modes")]
    SpectrumTooShort { largest: f64, cutoff: f64 },
    #[error("odd dimension {0}")]
    OddDimension(usize),
    #[error("curvature metadata gives Ric ≥ {have}, need {need}")]
    Precondition { have: f64, need: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

type Result<T> = std::result::Result<T, KahlerError>;

/// Per-point weights of an operator's mass measure, summing to one.
fn point_weights(op: &OperatorHandle) -> Vec<f64> {
    let b = op.block_size();
    let mass = op.mass().expect("operators carry a mass");
    let w: Vec<f64> = mass.iter().step_by(b).copied().collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn check_two_form(op: &OperatorHandle, omega: &FormField) -> Result<()> {
    if omega.degree() != 2 || op.degree() != 2 {
        return Err(KahlerError::Degree { expected: 2, got: omega.degree().max(op.degree()) });
    }
    if omega.values().len() != op.size() {
        return Err(KahlerError::Invalid(format!("{} values for an operator of size {}", omega.values().len(), op.size())));
    }
    Ok(())
}

/// `‖v‖₂²` in the mass measure.
fn mass_sq(op: &OperatorHandle, v: &[f64]) -> f64 {
    let m = op.mass().expect("operators carry a mass");
    let total: f64 = m.iter().step_by(op.block_size()).sum();
    v.iter().zip(m).map(|(x, w)| w * x * x).sum::<f64>() / total
}

/// `‖∇v‖₂²` in the mass measure.
fn energy(op: &OperatorHandle, v: &[f64]) -> f64 {
    let m = op.mass().expect("operators carry a mass");
    let total: f64 = m.iter().step_by(op.block_size()).sum();
    let mut av = vec![0.0; v.len()];
    op.apply(v, &mut av);
    av.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / total
}

/// `|J_ω² + Id|` at each point.
pub fn pointwise_j_defect(omega: &FormField) -> Vec<f64> {
    let n = omega.dim();
    (0..omega.len())
        .into_par_iter()
        .map(|i| {
            let w = KVector::from_coeffs(n, 2, omega.at(i).to_vec()).expect("block of a 2-form field");
            jj_plus_id_norm(&j_map(&w).expect("degree 2"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KahlerDefect {
    pub norm_sq: f64,
    /// `‖∇ω‖₂² / ‖ω‖₂²`.
    pub grad_defect: f64,
    /// `‖J_ω² + Id‖₁ / ‖ω‖₂²`.
    pub j_defect: f64,
    /// `‖J_ω² + Id‖₁` itself, the quantity hypothesis (ii) bounds.
    pub j_l1: f64,
}

impl KahlerDefect {
    /// Smallest `δ` with `‖∇ω‖₂² ≤ δ‖ω‖₂²` and `‖J_ω²+Id‖₁ ≤ δ^{1/4}‖ω‖₂²`.
    pub fn delta(&self) -> f64 {
        self.grad_defect.max(self.j_defect.powi(4))
    }
}

pub fn almost_kahler_defect(op: &OperatorHandle, omega: &FormField) -> Result<KahlerDefect> {
    check_two_form(op, omega)?;
    let norm_sq = mass_sq(op, omega.values());
    if !(norm_sq > 0.0) {
        return Err(KahlerError::ZeroForm);
    }
    let w = point_weights(op);
    let j_l1: f64 = pointwise_j_defect(omega).iter().zip(&w).map(|(d, w)| d * w).sum();
    Ok(KahlerDefect { norm_sq, grad_defect: energy(op, omega.values()) / norm_sq, j_defect: j_l1 / norm_sq, j_l1 })
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub alpha: FormField,
    /// Modes with eigenvalue at or below the cutoff.
    pub modes: usize,
    pub alpha_norm_sq: f64,
    /// `‖ω − ω_α‖₂²`.
    pub beta_norm_sq: f64,
}

/// Orthogonal projection onto the computed eigenforms with `λ ≤ cutoff`. The
/// spectrum must reach past the cutoff, otherwise modes below it could be missing.
pub fn spectral_project_low_modes(op: &OperatorHandle, spectrum: &Spectrum, omega: &FormField, cutoff: f64) -> Result<Projection> {
    check_two_form(op, omega)?;
    if !(cutoff >= 0.0) {
        return Err(KahlerError::Invalid(format!("cutoff {cutoff}")));
    }
    let largest = spectrum.eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY);
    if largest <= cutoff {
        return Err(KahlerError::SpectrumTooShort { largest, cutoff });
    }
    let mass = op.mass().expect("operators carry a mass");
    let mut alpha = vec![0.0; omega.values().len()];
    let mut modes = 0;
    for (lam, v) in spectrum.eigenvalues.iter().zip(&spectrum.eigenvectors) {
        if *lam > cutoff {
            continue;
        }
        modes += 1;
        let c: f64 = v.iter().zip(omega.values()).zip(mass).map(|((a, b), w)| a * b * w).sum();
        alpha.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    if modes == 0 {
        return Err(KahlerError::NoModes { cutoff });
    }
    let beta: Vec<f64> = omega.values().iter().zip(&alpha).map(|(a, b)| a - b).collect();
    let alpha = FormField::from_values(omega.dim(), 2, alpha)?;
    Ok(Projection { alpha_norm_sq: mass_sq(op, alpha.values()), beta_norm_sq: mass_sq(op, &beta), alpha, modes })
}

/// The projection lemma on one input: hypotheses at `δ`, and its three
/// conclusions for `ω_α = P_δ ω` with cutoff `δ^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCheck {
    pub delta: f64,
    pub cutoff: f64,
    pub hypotheses_hold: bool,
    pub modes: usize,
    /// `‖∇ω_α‖₂² / ‖ω_α‖₂²`, at most `2δ`.
    pub alpha_grad_ratio: f64,
    /// `‖J_{ω_α}²+Id‖₁ / ‖ω_α‖₂²`, at most `10δ^{1/4}`.
    pub alpha_j_ratio: f64,
    /// `‖ω_β‖₂² / ‖ω‖₂²`, at most `δ^{1/2}`.
    pub beta_ratio: f64,
    pub grad_holds: bool,
    pub j_holds: bool,
    pub beta_holds: bool,
}

impl ProjectionCheck {
    /// Conclusions hold, or hypotheses fail.
    pub fn consistent(&self) -> bool {
        !self.hypotheses_hold || (self.grad_holds && self.j_holds && self.beta_holds)
    }
}

/// Relative slack for comparing discrete quantities that are equal in exact arithmetic.
const ROUNDING: f64 = 1e-9;

/// Runs the projection lemma at the smallest admissible `δ` (or a given one).
pub fn projection_check(op: &OperatorHandle, spectrum: &Spectrum, omega: &FormField, delta: Option<f64>) -> Result<ProjectionCheck> {
    let d = almost_kahler_defect(op, omega)?;
    let delta = delta.unwrap_or_else(|| d.delta()).max(f64::MIN_POSITIVE);
    let hypotheses_hold = delta <= 0.25 && d.grad_defect <= delta && d.j_defect <= delta.powf(0.25);
    let cutoff = delta.sqrt();
    let pr = spectral_project_low_modes(op, spectrum, omega, cutoff)?;
    let a = almost_kahler_defect(op, &pr.alpha)?;
    let beta_ratio = pr.beta_norm_sq / d.norm_sq;
    Ok(ProjectionCheck {
        delta,
        cutoff,
        hypotheses_hold,
        modes: pr.modes,
        alpha_grad_ratio: a.grad_defect,
        alpha_j_ratio: a.j_defect,
        beta_ratio,
        grad_holds: a.grad_defect <= 2.0 * delta * (1.0 + ROUNDING) + ROUNDING,
        j_holds: a.j_defect <= 10.0 * delta.powf(0.25) * (1.0 + ROUNDING),
        beta_holds: beta_ratio <= cutoff * (1.0 + ROUNDING) + ROUNDING,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopPower {
    pub m: usize,
    /// `‖ω^m‖₂²`.
    pub norm_sq: f64,
    /// `|‖ω^m‖₂² − (m!)²|`.
    pub stat: f64,
    /// `min_x |ω^m(x)|`; positive means `ω^m` is a nowhere-vanishing volume form.
    pub min_pointwise: f64,
}

pub fn top_power_stats(op: &OperatorHandle, omega: &FormField) -> Result<TopPower> {
    check_two_form(op, omega)?;
    let n = omega.dim();
    if !n.is_multiple_of(2) {
        return Err(KahlerError::OddDimension(n));
    }
    let m = n / 2;
    let norms: Vec<f64> = (0..omega.len())
        .into_par_iter()
        .map(|i| {
            let w = KVector::from_coeffs(n, 2, omega.at(i).to_vec()).expect("block of a 2-form field");
            wedge_power(&w, m).expect("top degree").norm()
        })
        .collect();
    let w = point_weights(op);
    let norm_sq: f64 = norms.iter().zip(&w).map(|(a, w)| a * a * w).sum();
    let fact: f64 = (1..=m).map(|k| k as f64).product();
    Ok(TopPower { m, norm_sq, stat: (norm_sq - fact * fact).abs(), min_pointwise: norms.iter().copied().fold(f64::INFINITY, f64::min) })
}

/// Candidate directions scanned in a near-null space of dimension above 2.
const CANDIDATES: usize = 512;
const CANDIDATE_SEED: u64 = 0x4a11;

/// The scaled form in `span(null)` with the smallest `‖J_ω²+Id‖₁`. Directions are
/// scanned (an angle grid for two forms, random unit vectors otherwise); for each
/// the scale minimizing `‖s²J² + Id‖₂²` is `s² = −∫tr J² / ∫|J²|²`.
pub fn kahler_candidate(op: &OperatorHandle, null: &[FormField]) -> Result<FormField> {
    let first = null.first().ok_or_else(|| KahlerError::Invalid("no candidate forms".into()))?;
    for w in null {
        check_two_form(op, w)?;
    }
    let r = null.len();
    let dirs: Vec<Vec<f64>> = match r {
        1 => vec![vec![1.0]],
        2 => (0..360)
            .map(|t| {
                let th = std::f64::consts::PI * t as f64 / 360.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(CANDIDATE_SEED);
            (0..CANDIDATES).map(|_| (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
        }
    };
    let n = first.dim();
    let wts = point_weights(op);
    let combine = |theta: &[f64]| {
        let mut out = FormField::zeros(n, 2, first.len());
        for (c, w) in theta.iter().zip(null) {
            out.values_mut().iter_mut().zip(w.values()).for_each(|(o, x)| *o += c * x);
        }
        out
    };
    let score = |theta: &[f64]| -> (f64, f64) {
        let w = combine(theta);
        let (tr, sq) = (0..w.len())
            .map(|i| {
                let j = j_map(&KVector::from_coeffs(n, 2, w.at(i).to_vec()).unwrap()).unwrap();
                let s = j.square();
                let tr: f64 = (0..n).map(|a| s[a * n + a]).sum();
                let sq: f64 = s.iter().map(|x| x * x).sum();
                (wts[i] * tr, wts[i] * sq)
            })
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        if !(sq > 0.0) {
            return (f64::INFINITY, 0.0);
        }
        let scale = (-tr / sq).max(0.0).sqrt();
        let l1: f64 = pointwise_j_defect(&w.scaled(scale)).iter().zip(&wts).map(|(d, w)| d * w).sum();
        (l1, scale)
    };
    let best = dirs.iter().map(|t| (score(t), t)).fold(((f64::INFINITY, 0.0), &dirs[0]), |a, b| if b.0 .0 < a.0 .0 { b } else { a });
    let ((_, scale), theta) = best;
    if scale == 0.0 {
        return Err(KahlerError::ZeroForm);
    }
    Ok(combine(theta).scaled(scale))
}

#[derive(Debug, Clone)]
pub struct KahlerOptions {
    pub bandwidth: Bandwidth,
    pub solver: SolverOptions,
    pub tol: f64,
    pub function_count: usize,
    pub form_count: usize,
}

impl Default for KahlerOptions {
    fn default() -> Self {
        KahlerOptions { bandwidth: Bandwidth::Auto, solver: SolverOptions::default(), tol: 1e-8, function_count: 6, form_count: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerReport {
    pub n: usize,
    pub even_dim_ok: bool,
    pub lambda1: Option<f64>,
    /// `2(n−1)`.
    pub bound: f64,
    /// `λ₁ − 2(n−1)`.
    pub slack: Option<f64>,
    pub defect: Option<KahlerDefect>,
    pub projection: Option<ProjectionCheck>,
    /// Top power of the projected form.
    pub top_power: Option<TopPower>,
    pub form_spectrum: Vec<f64>,
}

/// Loaded pieces of one Kähler run, reusable for further checks.
pub struct KahlerRun {
    pub disc: Arc<Discretization>,
    pub forms: OperatorHandle,
    pub form_spectrum: Spectrum,
    pub omega: FormField,
    pub report: KahlerReport,
}

/// Checks the eigenvalue bound for a manifold with `Ric ≥ (n−1)`. Without a given
/// form, the best Kähler candidate in the near-null space of `Δ_{C,2}` is used.
pub fn verify_kahler_bound(m: &SampledManifold, omega: Option<&FormField>, opts: &KahlerOptions) -> Result<KahlerRun> {
    let n = m.dim();
    let need = n as f64 - 1.0;
    let have = m.curvature().ricci_lower_bound();
    if have < need - 1e-12 {
        return Err(KahlerError::Precondition { have, need });
    }
    let disc = Arc::new(Discretization::new(m, opts.bandwidth)?);
    let forms = disc.operator(2)?;
    let bound = 2.0 * need;
    if !n.is_multiple_of(2) {
        let report =
            KahlerReport { n, even_dim_ok: false, lambda1: None, bound, slack: None, defect: None, projection: None, top_power: None, form_spectrum: vec![] };
        let omega = omega.cloned().unwrap_or_else(|| FormField::zeros(n, 2, m.len()));
        return Ok(KahlerRun { disc, forms, form_spectrum: empty_spectrum(), omega, report });
    }
    let functions = lowest_eigenpairs_with(&disc.operator(0)?, opts.function_count.min(m.len()), opts.tol, &opts.solver)?;
    let lambda1 = functions.eigenvalues[1];
    let form_spectrum = lowest_eigenpairs_with(&forms, opts.form_count.min(forms.size()), opts.tol, &opts.solver)?;
    let omega = match omega {
        Some(w) => w.clone(),
        None => {
            let null: Vec<FormField> = form_spectrum
                .eigenvalues
                .iter()
                .zip(&form_spectrum.eigenvectors)
                .enumerate()
                .filter(|&(j, (l, _))| j == 0 || *l <= NEAR_NULL_CUTOFF)
                .map(|(_, (_, v))| FormField::from_values(n, 2, v.clone()))
                .collect::<std::result::Result<_, _>>()?;
            kahler_candidate(&forms, &null)?
        }
    };
    let defect = almost_kahler_defect(&forms, &omega)?;
    let projection = projection_check(&forms, &form_spectrum, &omega, None).ok();
    let top_power = match projection {
        Some(p) => Some(top_power_stats(&forms, &spectral_project_low_modes(&forms, &form_spectrum, &omega, p.cutoff)?.alpha)?),
        None => None,
    };
    let report = KahlerReport {
        n,
        even_dim_ok: true,
        lambda1: Some(lambda1),
        bound,
        slack: Some(lambda1 - bound),
        defect: Some(defect),
        projection,
        top_power,
        form_spectrum: form_spectrum.eigenvalues.clone(),
    };
    Ok(KahlerRun { disc, forms, form_spectrum, omega, report })
}

fn empty_spectrum() -> Spectrum {
    Spectrum {
        eigenvalues: vec![],
        eigenvectors: vec![],
        residuals: vec![],
        clusters: vec![],
        method: crate::spectral::SolverMethod::Dense,
        matvecs: 0,
        restarts: 0,
    }
}

/// Random inputs around `omega`: a scale near one, a small multiple of a higher
/// computed eigenform, and small pointwise noise. The projection lemma is checked
/// on each.
pub fn randomized_projection_checks(run: &KahlerRun, count: usize, seed: u64) -> Result<Vec<ProjectionCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = &run.form_spectrum;
    let higher: Vec<&Vec<f64>> = spec.eigenvalues.iter().zip(&spec.eigenvectors).filter(|(l, _)| **l > NEAR_NULL_CUTOFF).map(|(_, v)| v).collect();
    let total: f64 = run.forms.mass().unwrap().iter().step_by(run.forms.block_size()).sum();
    let base = run.omega.values();
    (0..count)
        .map(|_| {
            let scale = rng.gen_range(0.9..1.1);
            let c = rng.gen_range(0.0..0.4);
            let eta = rng.gen_range(0.0..0.03);
            let mut v: Vec<f64> = base.iter().map(|x| scale * x).collect();
            if !higher.is_empty() {
                let h = higher[rng.gen_range(0..higher.len())];
                // Eigenvectors are mass-orthonormal; rescale to unit normalized L².
                let s = c * total.sqrt();
                v.iter_mut().zip(h).for_each(|(o, x)| *o += s * x);
            }
            for o in v.iter_mut() {
                *o += eta * rng.sample::<f64, _>(StandardNormal);
            }
            let w = FormField::from_values(run.omega.dim(), 2, v)?;
            projection_check(&run.forms, spec, &w, None)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramDiagnostic {
    pub degree: usize,
    pub eigenvalues: Vec<f64>,
    /// `D_ii = ‖|ωᵢ|² − 1‖₁`, `D_ij = ‖⟨ωᵢ, ωⱼ⟩‖₁`, for `‖ωᵢ‖₂ = 1`.
    pub matrix: Vec<Vec<f64>>,
    /// `min_x max_{i,j} |⟨ωᵢ, ωⱼ⟩(x) − δᵢⱼ|`.
    pub min_pointwise_max_defect: f64,
    /// `1/(α+1)` when `α+1` forms are requested: no point can have all defects below it.
    pub pigeonhole_bound: Option<f64>,
}

/// Pairwise `L¹` products of the lowest `count ≤ α(n,p)+1` eigenforms of `Δ_{C,p}`.
pub fn eigenform_gram_diagnostic(disc: &Arc<Discretization>, p: usize, count: usize, opts: &KahlerOptions) -> Result<GramDiagnostic> {
    let n = disc.dim();
    let alpha = alpha_forms(n, p).map_err(|e| KahlerError::Invalid(e.to_string()))?;
    if count == 0 || count > alpha + 1 {
        return Err(KahlerError::Invalid(format!("count {count} outside 1..={}", alpha + 1)));
    }
    let op = disc.operator(p)?;
    let spec = lowest_eigenpairs_with(&op, count, opts.tol, &opts.solver)?;
    Ok(gram_from_spectrum(&op, p, &spec))
}

pub(crate) fn gram_from_spectrum(op: &OperatorHandle, p: usize, spec: &Spectrum) -> GramDiagnostic {
    let n = op.discretization().dim();
    let b = binomial(n, p);
    let w = point_weights(op);
    let total: f64 = op.mass().unwrap().iter().step_by(b).sum();
    let forms: Vec<Vec<f64>> = spec.eigenvectors.iter().map(|v| v.iter().map(|x| x * total.sqrt()).collect()).collect();
    let k = forms.len();
    let points = w.len();
    let inner = |a: &[f64], bb: &[f64], x: usize| -> f64 { a[x * b..(x + 1) * b].iter().zip(&bb[x * b..(x + 1) * b]).map(|(u, v)| u * v).sum() };
    let mut matrix = vec![vec![0.0; k]; k];
    let mut pointwise = vec![0.0f64; points];
    for i in 0..k {
        for j in 0..=i {
            let mut acc = 0.0;
            for x in 0..points {
                let g = inner(&forms[i], &forms[j], x) - if i == j { 1.0 } else { 0.0 };
                acc += w[x] * g.abs();
                pointwise[x] = pointwise[x].max(g.abs());
            }
            matrix[i][j] = acc;
            matrix[j][i] = acc;
        }
    }
    let alpha = binomial(n, p);
    GramDiagnostic {
        degree: p,
        eigenvalues: spec.eigenvalues.clone(),
        matrix,
        min_pointwise_max_defect: pointwise.iter().copied().fold(f64::INFINITY, f64::min),
        pigeonhole_bound: (k == alpha + 1).then(|| 1.0 / (alpha + 1) as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::standard_symplectic;
    use crate::manifold::{product, sample_sphere, sample_sphere_with, Sampling};
    use crate::orientability::factor_volume_form;

    fn small_product(r: f64) -> SampledManifold {
        let a = sample_sphere_with(2, r, 30, 1, Sampling::QuasiUniform).unwrap();
        let b = sample_sphere_with(2, r, 30, 2, Sampling::QuasiUniform).unwrap();
        product(&a, &b).unwrap()
    }

    fn product_kahler(m: &SampledManifold) -> FormField {
        let a = factor_volume_form(m, 0).unwrap();
        let b = factor_volume_form(m, 1).unwrap();
        let v = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
        FormField::from_values(4, 2, v).unwrap()
    }

    #[test]
    fn product_kahler_form_has_small_defects() {
        let m = small_product(1.0);
        let disc = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let op = disc.operator(2).unwrap();
        let w = product_kahler(&m);
        let d = almost_kahler_defect(&op, &w).unwrap();
        assert!(d.j_defect < 1e-12 && d.grad_defect < 1e-10, "{d:?}");
        let d2 = almost_kahler_defect(&op, &w.clone().scaled(3.0)).unwrap();
        assert!((d2.grad_defect - d.grad_defect).abs() < 1e-12);
        // ‖J²+Id‖₁ is not homogeneous in ω; a rank-2 form has |J²+Id| = √2 everywhere.
        let single = factor_volume_form(&m, 0).unwrap();
        let s1 = almost_kahler_defect(&op, &single).unwrap();
        assert!((s1.j_defect - 2f64.sqrt()).abs() < 1e-12, "{s1:?}");
    }

    #[test]
    fn grad_ratio_is_homogeneous() {
        let m = small_product(1.0);
        let disc = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let op = disc.operator(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..op.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = FormField::from_values(4, 2, v).unwrap();
        for s in [0.1, 2.0, 17.0] {
            let a = almost_kahler_defect(&op, &w).unwrap();
            let b = almost_kahler_defect(&op, &w.clone().scaled(s)).unwrap();
            assert!((a.grad_defect - b.grad_defect).abs() < 1e-10 * a.grad_defect);
        }
        let zero = FormField::zeros(4, 2, m.len());
        assert!(matches!(almost_kahler_defect(&op, &zero), Err(KahlerError::ZeroForm)));
    }

    #[test]
    fn standard_symplectic_top_power_is_m_factorial() {
        let m = small_product(1.0);
        let disc = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let op = disc.operator(2).unwrap();
        let w0 = standard_symplectic(4);
        let vals: Vec<f64> = (0..m.len()).flat_map(|_| w0.coeffs().to_vec()).collect();
        let t = top_power_stats(&op, &FormField::from_values(4, 2, vals).unwrap()).unwrap();
        assert!((t.min_pointwise - 2.0).abs() < 1e-14);
        assert!(t.stat < 1e-12);
        // Rank 2 squares to zero.
        let single = factor_volume_form(&m, 0).unwrap();
        let t = top_power_stats(&op, &single).unwrap();
        assert_eq!(t.norm_sq, 0.0);
        assert!((t.stat - 4.0).abs() < 1e-15);
    }

    #[test]
    fn projection_is_idempotent_and_contracting() {
        let m = small_product(1.0);
        let disc = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let op = disc.operator(2).unwrap();
        let spec = lowest_eigenpairs_with(&op, 6, 1e-10, &SolverOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = FormField::from_values(4, 2, (0..op.size()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let cut = 0.5 * (spec.eigenvalues[2] + spec.eigenvalues[3]);
        let p1 = spectral_project_low_modes(&op, &spec, &w, cut).unwrap();
        let p2 = spectral_project_low_modes(&op, &spec, &p1.alpha, cut).unwrap();
        assert!(p1.alpha_norm_sq <= mass_sq(&op, w.values()));
        for (a, b) in p1.alpha.values().iter().zip(p2.alpha.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        // An eigenform below the cutoff is its own projection.
        let e0 = FormField::from_values(4, 2, spec.eigenvectors[0].clone()).unwrap();
        let p = spectral_project_low_modes(&op, &spec, &e0, cut).unwrap();
        for (a, b) in p.alpha.values().iter().zip(e0.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        // The computed spectrum must reach past the cutoff.
        assert!(matches!(spectral_project_low_modes(&op, &spec, &w, 1e6), Err(KahlerError::SpectrumTooShort { .. })));
    }

    #[test]
    fn zero_cutoff_on_generic_form_has_no_modes() {
        // S³ carries no parallel 2-form, so nothing sits at or below zero.
        let m = sample_sphere_with(3, 1.0, 200, 4, Sampling::QuasiUniform).unwrap();
        let disc = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let op = disc.operator(2).unwrap();
        let spec = lowest_eigenpairs_with(&op, 3, 1e-10, &SolverOptions::default()).unwrap();
        assert!(spec.eigenvalues[0] > 0.1);
        let w = FormField::from_values(3, 2, vec![1.0; op.size()]).unwrap();
        assert!(matches!(spectral_project_low_modes(&op, &spec, &w, 0.0), Err(KahlerError::NoModes { .. })));
    }

    #[test]
    fn odd_dimension_skips_the_bound() {
        let s = sample_sphere_with(3, 1.0, 120, 1, Sampling::QuasiUniform).unwrap();
        let run = verify_kahler_bound(&s, None, &KahlerOptions::default()).unwrap();
        assert!(!run.report.even_dim_ok);
        assert_eq!(run.report.lambda1, None);
    }

    #[test]
    fn precondition_is_checked() {
        let m = small_product(1.0);
        assert!(matches!(verify_kahler_bound(&m, None, &KahlerOptions::default()), Err(KahlerError::Precondition { .. })));
    }

    #[test]
    fn pigeonhole_holds_for_too_many_forms() {
        let m = sample_sphere(2, 1.0, 400, 8).unwrap();
        let disc = Arc::new(Discretization::new(&m, Bandwidth::Auto).unwrap());
        let g = eigenform_gram_diagnostic(&disc, 1, 3, &KahlerOptions::default()).unwrap();
        let bound = g.pigeonhole_bound.unwrap();
        assert!(g.min_pointwise_max_defect >= bound, "{g:?}");
        let g1 = eigenform_gram_diagnostic(&disc, 1, 1, &KahlerOptions::default()).unwrap();
        assert_eq!(g1.matrix.len(), 1);
        assert!(eigenform_gram_diagnostic(&disc, 1, 4, &KahlerOptions::default()).is_err());
    }
}
