//! Comparison inequalities used along geodesics: the perturbed cosine ODE bound,
//! elementary trigonometric inequalities, the segment inequality, and geodesic
//! flow averaging.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::SampledManifold;

#[derive(Debug, Error)]
pub enum ComparisonError {
    #[error("grid too coarse: {0} nodes, need at least {MIN_NODES}")]
    GridTooCoarse(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0} outside [0, π]")]
    Domain(f64),
}

type Result<T> = std::result::Result<T, ComparisonError>;

pub const MIN_NODES: usize = 16;

/// Samples of a function `u : [0, l] → ℝ` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurveFunction {
    t: Vec<f64>,
    u: Vec<f64>,
    du: Option<Vec<f64>>,
}

impl SampledCurveFunction {
    pub fn new(t: Vec<f64>, u: Vec<f64>, du: Option<Vec<f64>>) -> Result<Self> {
        if t.len() != u.len() || du.as_ref().is_some_and(|d| d.len() != t.len()) {
            return Err(ComparisonError::Invalid("grid and values differ in length".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ComparisonError::Invalid("grid must be strictly increasing".into()));
        }
        if t.iter().chain(&u).chain(du.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(ComparisonError::Invalid("non-finite value".into()));
        }
        Ok(SampledCurveFunction { t, u, du })
    }

    /// Uniform grid on `[0, l]` with `nodes` points, values and derivatives from closures.
    pub fn from_fn(l: f64, nodes: usize, u: impl Fn(f64) -> f64, du: Option<&dyn Fn(f64) -> f64>) -> Result<Self> {
        if nodes < 2 || !(l > 0.0) {
            return Err(ComparisonError::Invalid("need l > 0 and two nodes".into()));
        }
        let t: Vec<f64> = (0..nodes).map(|k| l * k as f64 / (nodes - 1) as f64).collect();
        let vals = t.iter().map(|&s| u(s)).collect();
        let ders = du.map(|d| t.iter().map(|&s| d(s)).collect());
        Self::new(t, vals, ders)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Derivative at every node: supplied values, else second-order differences.
    fn derivative(&self) -> Vec<f64> {
        if let Some(d) = &self.du {
            return d.clone();
        }
        let (t, u) = (&self.t, &self.u);
        let m = t.len();
        (0..m)
            .map(|i| {
                let (a, b, c) = if i == 0 {
                    (0, 1, 2)
                } else if i == m - 1 {
                    (m - 3, m - 2, m - 1)
                } else {
                    (i - 1, i, i + 1)
                };
                // Derivative of the quadratic through three nodes, evaluated at t_i.
                let (x0, x1, x2) = (t[a], t[b], t[c]);
                let x = t[i];
                u[a] * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
                    + u[b] * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
                    + u[c] * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
            })
            .collect()
    }

    /// Second derivative at every node from three-point differences.
    fn second_derivative(&self) -> Vec<f64> {
        let (t, u) = (&self.t, &self.u);
        let m = t.len();
        (0..m)
            .map(|i| {
                let c = i.clamp(1, m - 2);
                let (x0, x1, x2) = (t[c - 1], t[c], t[c + 1]);
                2.0 * (u[c - 1] / ((x0 - x1) * (x0 - x2)) + u[c] / ((x1 - x0) * (x1 - x2)) + u[c + 1] / ((x2 - x0) * (x2 - x1)))
            })
            .collect()
    }
}

/// `sin(rt)/r`, equal to `t` at `r = 0`.
fn sinc_r(r: f64, t: f64) -> f64 {
    if r == 0.0 {
        t
    } else {
        (r * t).sin() / r
    }
}

/// `sinh(rt)/r`, equal to `t` at `r = 0`.
fn sinhc_r(r: f64, t: f64) -> f64 {
    if r == 0.0 {
        t
    } else {
        (r * t).sinh() / r
    }
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2).zip(v.windows(2)).map(|(s, w)| 0.5 * (s[1] - s[0]) * (w[0] + w[1])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrifRecord {
    /// `∫ |u″ + r²u|` by trapezoidal quadrature of second differences.
    pub epsilon_quadrature: f64,
    /// The `ε` the bound was evaluated with.
    pub epsilon_used: f64,
    /// Whether `epsilon_used` covers the quadrature value.
    pub precondition_holds: bool,
    /// Largest value of `|u(t) − u(0)cos rt − u′(0) sin(rt)/r|`.
    pub lhs_max: f64,
    /// `ε sinh(rt)/r` at the node where `lhs_max` is attained.
    pub rhs_at_max: f64,
    /// Largest `lhs − rhs` over both inequalities; nonpositive when satisfied.
    pub worst_margin: f64,
    pub satisfied: bool,
}

/// Evaluates the cosine comparison bound and its derivative companion on the grid.
///
/// Without an explicit `epsilon`, the quadrature value is inflated to
/// `2 ε_q + h²(‖u″‖_∞ + r²‖u‖_∞ + ‖u‴‖_∞) l`, which dominates the finite-difference
/// error in `u′(0)` and `u″`, so a smooth `u` never reports a spurious violation.
pub fn trif_bound_check(u: &SampledCurveFunction, r: f64, epsilon: Option<f64>) -> Result<TrifRecord> {
    let m = u.len();
    if m < MIN_NODES {
        return Err(ComparisonError::GridTooCoarse(m));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(ComparisonError::Invalid(format!("r = {r}")));
    }
    if let Some(e) = epsilon {
        if !(e >= 0.0) {
            return Err(ComparisonError::Invalid(format!("epsilon = {e}")));
        }
    }
    let (t, vals) = (&u.t, &u.u);
    let ddu = u.second_derivative();
    let du = u.derivative();
    let resid: Vec<f64> = ddu.iter().zip(vals).map(|(a, b)| (a + r * r * b).abs()).collect();
    let eps_q = trapezoid(t, &resid);
    let l = t[m - 1] - t[0];
    let h = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let dddu: Vec<f64> = (1..m).map(|i| (ddu[i] - ddu[i - 1]) / (t[i] - t[i - 1])).collect();
    let safety = h * h * (sup(&ddu) + r * r * sup(vals) + sup(&dddu)) * l.max(1.0);
    let eps = epsilon.unwrap_or(2.0 * eps_q + safety);

    let (u0, du0) = (vals[0], du[0]);
    let lhs1: Vec<f64> = t
        .iter()
        .zip(vals)
        .map(|(&s, &v)| {
            let s = s - t[0];
            (v - u0 * (r * s).cos() - du0 * sinc_r(r, s)).abs()
        })
        .collect();
    let mut cumulative = vec![0.0; m];
    for i in 1..m {
        cumulative[i] = cumulative[i - 1] + 0.5 * (t[i] - t[i - 1]) * (lhs1[i] + lhs1[i - 1]);
    }
    let mut worst = f64::NEG_INFINITY;
    let (mut lhs_max, mut rhs_at_max) = (0.0, 0.0);
    for i in 0..m {
        let s = t[i] - t[0];
        let rhs1 = eps * sinhc_r(r, s);
        let lhs2 = (du[i] + r * u0 * (r * s).sin() - du0 * (r * s).cos()).abs();
        let rhs2 = eps + cumulative[i];
        worst = worst.max(lhs1[i] - rhs1).max(lhs2 - rhs2);
        if lhs1[i] > lhs_max || i == 0 {
            lhs_max = lhs1[i];
            rhs_at_max = rhs1;
        }
    }
    Ok(TrifRecord {
        epsilon_quadrature: eps_q,
        epsilon_used: eps,
        precondition_holds: eps >= eps_q,
        lhs_max,
        rhs_at_max,
        worst_margin: worst,
        satisfied: worst <= 0.0,
    })
}

/// The elementary cosine inequalities at one argument and one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosiRecord {
    /// `1 − t²/2 ≤ cos t`.
    pub lower: bool,
    /// `cos t ≤ 1 − t²/2 + t⁴/24`.
    pub upper: bool,
    /// `cos t ≤ 1 − t²/9`, hence `|t| ≤ 3(1 − cos t)^{1/2}`; `None` for `|t| > π`.
    pub quadratic: Option<bool>,
    /// `|t₁ − t₂| ≤ 3|cos t₁ − cos t₂|^{1/2}`.
    pub pair: bool,
}

impl CosiRecord {
    pub fn all(&self) -> bool {
        self.lower && self.upper && self.quadratic.unwrap_or(true) && self.pair
    }
}

/// `1 − cos t` without cancellation.
fn one_minus_cos(t: f64) -> f64 {
    let s = (0.5 * t).sin();
    2.0 * s * s
}

pub fn cosi_inequalities(t: f64, t1: f64, t2: f64) -> Result<CosiRecord> {
    let pi = std::f64::consts::PI;
    for v in [t1, t2] {
        if !(0.0..=pi).contains(&v) {
            return Err(ComparisonError::Domain(v));
        }
    }
    if !t.is_finite() {
        return Err(ComparisonError::Invalid(format!("t = {t}")));
    }
    let omc = one_minus_cos(t);
    let t2sq = t * t;
    // cos t₁ − cos t₂ = −2 sin((t₁+t₂)/2) sin((t₁−t₂)/2), exact near coincidence.
    let dcos = (2.0 * (0.5 * (t1 + t2)).sin() * (0.5 * (t1 - t2)).sin()).abs();
    Ok(CosiRecord {
        lower: omc <= 0.5 * t2sq,
        upper: omc >= 0.5 * t2sq - t2sq * t2sq / 24.0,
        quadratic: (t.abs() <= pi).then(|| omc >= t2sq / 9.0 && t.abs() <= 3.0 * omc.sqrt()),
        pair: (t1 - t2).abs() <= 3.0 * dcos.sqrt(),
    })
}

/// Number of grid points in `[0, π]²` (spacing `step`) where some inequality fails.
pub fn cosi_grid_violations(step: f64) -> Result<usize> {
    if !(step > 0.0) {
        return Err(ComparisonError::Invalid(format!("step = {step}")));
    }
    let pi = std::f64::consts::PI;
    let m = (pi / step).floor() as usize;
    let grid: Vec<f64> = (0..=m).map(|k| (k as f64 * step).min(pi)).collect();
    let count = grid.par_iter().map(|&a| grid.iter().filter(|&&b| !cosi_inequalities(a, a, b).map(|r| r.all()).unwrap_or(false)).count()).sum();
    Ok(count)
}

/// Monte-Carlo estimate of the segment inequality: `lhs` averages `(1/d)∫₀^d h∘γ`
/// over random pairs, `rhs` is the mean of `h`, and `ratio` is the empirical constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Bootstrap standard error of `ratio`.
    pub ratio_sigma: f64,
    pub pairs: usize,
}

/// Quadrature nodes per geodesic segment.
pub const SEGMENT_NODES: usize = 32;
const BOOTSTRAP: usize = 200;

/// Draws sample indices proportionally to volume weights.
fn draw_points(m: &SampledManifold, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let dist = WeightedIndex::new(m.weights()).expect("positive weights");
    (0..count).map(|_| dist.sample(rng)).collect()
}

fn bootstrap_sigma(values: &[f64], denom: f64, rng: &mut ChaCha8Rng) -> f64 {
    let k = values.len();
    let means: Vec<f64> = (0..BOOTSTRAP).map(|_| (0..k).map(|_| values[rng.gen_range(0..k)]).sum::<f64>() / k as f64 / denom).collect();
    let mu = means.iter().sum::<f64>() / BOOTSTRAP as f64;
    (means.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (BOOTSTRAP - 1) as f64).sqrt()
}

/// `h` is evaluated at ambient points of the model.
pub fn segment_inequality_estimate(m: &SampledManifold, h: &(dyn Fn(&[f64]) -> f64 + Sync), n_pairs: usize, seed: u64) -> Result<SegmentRecord> {
    if n_pairs == 0 || m.len() < 2 {
        return Err(ComparisonError::Invalid("need at least one pair of distinct points".into()));
    }
    let hv: Vec<f64> = (0..m.len()).map(|i| h(m.point(i))).collect();
    if hv.iter().any(|v| !(*v >= 0.0)) {
        return Err(ComparisonError::Invalid("h must be nonnegative".into()));
    }
    let rhs = hv.iter().zip(m.weights()).map(|(a, w)| a * w).sum::<f64>() / m.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = draw_points(m, n_pairs, &mut rng);
    let ys: Vec<usize> = xs
        .iter()
        .map(|&x| loop {
            let y = draw_points(m, 1, &mut rng)[0];
            if y != x {
                break y;
            }
        })
        .collect();
    let averages: Vec<f64> = xs
        .par_iter()
        .zip(&ys)
        .map(|(&i, &j)| {
            let v = m.log_map(i, j);
            let d = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = v.iter().map(|x| x / d).collect();
            // Midpoint rule on [0, d], normalized by d.
            (0..SEGMENT_NODES)
                .map(|k| {
                    let s = d * (k as f64 + 0.5) / SEGMENT_NODES as f64;
                    h(&m.geodesic_point(i, &u, s).expect("unit direction"))
                })
                .sum::<f64>()
                / SEGMENT_NODES as f64
        })
        .collect();
    let lhs = averages.iter().sum::<f64>() / n_pairs as f64;
    let ratio_sigma = if rhs > 0.0 { bootstrap_sigma(&averages, rhs, &mut rng) } else { 0.0 };
    Ok(SegmentRecord { lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { f64::NAN }, ratio_sigma, pairs: n_pairs })
}

/// Average of `f` along random unit-speed geodesics versus its volume average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_avg: f64,
    pub volume_avg: f64,
    /// Bootstrap standard error of `flow_avg`.
    pub sigma: f64,
    /// `|flow_avg − volume_avg| / sigma`.
    pub z: f64,
}

pub fn geodesic_flow_average(m: &SampledManifold, f: &(dyn Fn(&[f64]) -> f64 + Sync), l: f64, n_dirs: usize, seed: u64) -> Result<FlowRecord> {
    if !(l > 0.0) || n_dirs == 0 {
        return Err(ComparisonError::Invalid(format!("need l > 0 and samples, got l = {l}")));
    }
    let n = m.dim();
    let volume_avg = (0..m.len()).map(|i| f(m.point(i)) * m.weights()[i]).sum::<f64>() / m.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = draw_points(m, n_dirs, &mut rng);
    let dirs: Vec<Vec<f64>> = (0..n_dirs)
        .map(|_| loop {
            let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break g.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    let nodes = SEGMENT_NODES.max((4.0 * l).ceil() as usize);
    let samples: Vec<f64> = base
        .par_iter()
        .zip(&dirs)
        .map(|(&i, u)| (0..nodes).map(|k| f(&m.geodesic_point(i, u, l * (k as f64 + 0.5) / nodes as f64).expect("unit direction"))).sum::<f64>() / nodes as f64)
        .collect();
    let flow_avg = samples.iter().sum::<f64>() / n_dirs as f64;
    let sigma = bootstrap_sigma(&samples, 1.0, &mut rng);
    let z = if sigma > 0.0 { (flow_avg - volume_avg).abs() / sigma } else { 0.0 };
    Ok(FlowRecord { flow_avg, volume_avg, sigma, z })
}

/// One named check of the toolkit suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Named<T> {
    pub name: String,
    pub record: T,
}

fn named<T>(name: &str, record: T) -> Named<T> {
    Named { name: name.to_string(), record }
}

/// All comparison checks on fixed inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolkitReport {
    pub trif: Vec<Named<TrifRecord>>,
    pub cosi_grid_step: f64,
    pub cosi_violations: usize,
    pub segment_constant: SegmentRecord,
    /// The same small-ball indicator at several seeds.
    pub segment_ball: Vec<SegmentRecord>,
    /// Largest pairwise `|rᵢ − rⱼ| / √(σᵢ² + σⱼ²)` across seeds.
    pub segment_max_z: f64,
    /// `|ratio(c·h) − ratio(h)|` at one seed.
    pub segment_scaling_gap: f64,
    pub flow: Vec<Named<FlowRecord>>,
    pub trif_ok: bool,
    pub cosi_ok: bool,
    pub segment_ok: bool,
    pub flow_ok: bool,
}

impl ToolkitReport {
    pub fn passed(&self) -> bool {
        self.trif_ok && self.cosi_ok && self.segment_ok && self.flow_ok
    }
}

/// Seeds differing in the segment estimate count as stable below this `z`.
pub const SEGMENT_STABILITY_Z: f64 = 4.0;
/// Geodesic flow equality is accepted within this many standard errors.
pub const FLOW_Z: f64 = 3.0;

/// Runs the comparison toolkit on fixed curves and on the sphere, a product and
/// the unorientable quotient.
pub fn toolkit_suite(seed: u64) -> Result<ToolkitReport> {
    use crate::manifold::{product, quotient_example, sample_sphere_with, Sampling};
    let merr = |e: crate::manifold::ManifoldError| ComparisonError::Invalid(e.to_string());

    let r = 1.3;
    let trif = vec![
        named("cos rt", trif_bound_check(&SampledCurveFunction::from_fn(2.0, 400, |t| (r * t).cos(), Some(&|t: f64| -r * (r * t).sin()))?, r, None)?),
        named("cos t + 1e-3 t^2", trif_bound_check(&SampledCurveFunction::from_fn(3.0, 400, |t| t.cos() + 1e-3 * t * t, None)?, 1.0, None)?),
        named("linear, r = 0", trif_bound_check(&SampledCurveFunction::from_fn(2.0, 100, |t| 0.3 + 1.5 * t, None)?, 0.0, None)?),
        named("cos t + 0.05 sin 3t", trif_bound_check(&SampledCurveFunction::from_fn(2.5, 800, |t| t.cos() + 0.05 * (3.0 * t).sin(), None)?, 1.0, None)?),
        named("cosh t, r = 0.5", trif_bound_check(&SampledCurveFunction::from_fn(2.0, 400, |t| t.cosh(), None)?, 0.5, None)?),
    ];
    let trif_ok = trif.iter().all(|c| !c.record.precondition_holds || c.record.satisfied);

    let step = 1e-3;
    let cosi_violations = cosi_grid_violations(step)?;

    let s2 = sample_sphere_with(2, 1.0, 2000, seed, Sampling::QuasiUniform).map_err(merr)?;
    let one = |_: &[f64]| 1.0;
    let segment_constant = segment_inequality_estimate(&s2, &one, 500, seed)?;
    let ball = |x: &[f64]| if x[2] > 0.9 { 1.0 } else { 0.0 };
    let segment_ball: Vec<SegmentRecord> = (0..3).map(|k| segment_inequality_estimate(&s2, &ball, 4000, seed + k)).collect::<Result<_>>()?;
    let mut segment_max_z: f64 = 0.0;
    for (i, a) in segment_ball.iter().enumerate() {
        for b in &segment_ball[i + 1..] {
            let s = (a.ratio_sigma.powi(2) + b.ratio_sigma.powi(2)).sqrt();
            segment_max_z = segment_max_z.max((a.ratio - b.ratio).abs() / s);
        }
    }
    let scaled = |x: &[f64]| 3.0 * ball(x);
    let segment_scaling_gap = (segment_inequality_estimate(&s2, &scaled, 4000, seed)?.ratio - segment_ball[0].ratio).abs();
    let segment_ok = (segment_constant.ratio - 1.0).abs() < 1e-12
        && segment_ball.iter().all(|r| r.ratio.is_finite())
        && segment_max_z <= SEGMENT_STABILITY_Z
        && segment_scaling_gap <= 1e-12 * segment_ball[0].ratio;

    let fac_a = sample_sphere_with(2, 1.0, 40, seed, Sampling::QuasiUniform).map_err(merr)?;
    let fac_b = sample_sphere_with(2, 0.7, 40, seed + 1, Sampling::QuasiUniform).map_err(merr)?;
    let prod = product(&fac_a, &fac_b).map_err(merr)?;
    let quot = quotient_example(3, 7, 1500, seed).map_err(merr)?;
    let smooth = |x: &[f64]| 0.4 * x[0] - 0.7 * x[1] * x[2] + 0.3 * x[2] * x[2];
    let mixed = |x: &[f64]| x[0] * x[3] + 0.5 * x[1] * x[1] - 0.2 * x[4] + 0.1 * x[5];
    // Even in x₀ and in y, so well defined on the quotient.
    let even = |x: &[f64]| x[0] * x[0] + 0.5 * x[1] - 0.8 * x[5] * x[6] + 0.3 * x[7] * x[7];
    let flow = vec![
        named("constant on S²", geodesic_flow_average(&s2, &|_: &[f64]| 2.5, 1.0, 200, seed)?),
        named("height on S², l = π", geodesic_flow_average(&s2, &|x: &[f64]| x[2], std::f64::consts::PI, 2000, seed)?),
        named("smooth on S²", geodesic_flow_average(&s2, &smooth, 2.0, 2000, seed)?),
        named("smooth on S²×S²(0.7)", geodesic_flow_average(&prod, &mixed, 2.0, 2000, seed)?),
        named("even on the quotient", geodesic_flow_average(&quot, &even, 2.0, 2000, seed)?),
    ];
    let flow_ok = flow.iter().all(|c| c.record.z <= FLOW_Z && (c.record.sigma > 0.0 || (c.record.flow_avg - c.record.volume_avg).abs() < 1e-12));

    Ok(ToolkitReport {
        trif,
        cosi_grid_step: step,
        cosi_violations,
        segment_constant,
        segment_ball,
        segment_max_z,
        segment_scaling_gap,
        flow,
        trif_ok,
        cosi_ok: cosi_violations == 0,
        segment_ok,
        flow_ok,
    })
}

#[cfg(test)]
mod tests {

    #[test]
    fn toolkit_suite_passes() {
        let r = toolkit_suite(1).unwrap();
        assert!(r.passed(), "{r:#?}");
    }
    use super::*;
    use crate::manifold::{sample_sphere, sample_sphere_with, Sampling};
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_cosine_has_zero_lhs() {
        let r = 1.7;
        let u = SampledCurveFunction::from_fn(2.0, 200, |t| (r * t).cos(), Some(&|t: f64| -r * (r * t).sin())).unwrap();
        let rec = trif_bound_check(&u, r, None).unwrap();
        assert!(rec.lhs_max < 1e-15);
        assert!(rec.satisfied);
    }

    #[test]
    fn linear_function_at_r_zero() {
        let u = SampledCurveFunction::from_fn(3.0, 40, |t| 0.5 - 2.0 * t, None).unwrap();
        let rec = trif_bound_check(&u, 0.0, None).unwrap();
        assert!(rec.lhs_max < 1e-14 && rec.epsilon_quadrature < 1e-12);
        assert!(rec.satisfied);
    }

    #[test]
    fn quadratic_perturbation_holds() {
        let u = SampledCurveFunction::from_fn(3.0, 400, |t| t.cos() + 1e-3 * t * t, None).unwrap();
        let rec = trif_bound_check(&u, 1.0, None).unwrap();
        assert!(rec.precondition_holds && rec.satisfied, "{rec:?}");
        assert!(rec.lhs_max > 0.0);
    }

    #[test]
    fn coarse_grid_rejected() {
        let u = SampledCurveFunction::from_fn(1.0, 10, |t| t, None).unwrap();
        assert!(matches!(trif_bound_check(&u, 1.0, None), Err(ComparisonError::GridTooCoarse(10))));
    }

    #[test]
    fn too_small_epsilon_is_caught() {
        let u = SampledCurveFunction::from_fn(3.0, 400, |t| t.cos() + 0.3 * t * t, None).unwrap();
        let rec = trif_bound_check(&u, 1.0, Some(1e-4)).unwrap();
        assert!(!rec.precondition_holds && !rec.satisfied);
    }

    #[test]
    fn cosine_inequalities() {
        let z = cosi_inequalities(0.0, 0.0, 0.0).unwrap();
        assert!(z.all());
        let pi = std::f64::consts::PI;
        assert!(cosi_inequalities(pi, pi, 0.0).unwrap().lower);
        assert!(cosi_inequalities(7.0, 0.1, 0.2).unwrap().quadratic.is_none());
        assert!(matches!(cosi_inequalities(0.0, -0.1, 0.0), Err(ComparisonError::Domain(_))));
        assert!(cosi_inequalities(1e-9, 1e-9, 2e-9).unwrap().pair);
    }

    #[test]
    fn cosine_grid_sweep_is_clean() {
        assert_eq!(cosi_grid_violations(1e-2).unwrap(), 0);
    }

    #[test]
    fn segment_constant_and_scaling() {
        let m = sample_sphere(2, 1.0, 400, 3).unwrap();
        let one = segment_inequality_estimate(&m, &|_| 1.0, 200, 1).unwrap();
        assert_abs_diff_eq!(one.lhs, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(one.ratio, 1.0, epsilon = 1e-12);
        let cap = |x: &[f64]| if x[2] > 0.8 { 1.0 } else { 0.0 };
        let cap3 = |x: &[f64]| if x[2] > 0.8 { 3.0 } else { 0.0 };
        let a = segment_inequality_estimate(&m, &cap, 500, 2).unwrap();
        let b = segment_inequality_estimate(&m, &cap3, 500, 2).unwrap();
        assert_abs_diff_eq!(a.ratio, b.ratio, epsilon = 1e-12);
        assert!(a.ratio.is_finite() && a.ratio > 0.0);
    }

    #[test]
    fn flow_average_of_height() {
        let m = sample_sphere_with(2, 1.0, 800, 4, Sampling::QuasiUniform).unwrap();
        let c = geodesic_flow_average(&m, &|_| 2.5, 1.0, 50, 1).unwrap();
        assert_abs_diff_eq!(c.flow_avg, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.volume_avg, 2.5, epsilon = 1e-12);
        let h = geodesic_flow_average(&m, &|x| x[2], std::f64::consts::PI, 2000, 2).unwrap();
        assert!(h.volume_avg.abs() < 1e-2);
        assert!(h.z <= 3.0, "{h:?}");
    }
}
