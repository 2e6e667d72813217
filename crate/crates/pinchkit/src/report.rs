//! Run configurations, named presets and versioned JSON/CSV reports.
//!
//! A [`Report`] holds every input and every residual of one run and nothing
//! time-dependent, so identical configurations serialize to identical bytes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::comparison::{toolkit_suite, ComparisonError, ToolkitReport};
use crate::harness::{
    aligned_bundle, exponent_ladder, run_pinching, verify_main1, EigenfunctionBundle, HarnessError, HarnessOptions, Main1Fragment, PinchingReport, Pipeline,
};
use crate::kahler::{randomized_projection_checks, verify_kahler_bound, KahlerError, KahlerOptions, KahlerReport, ProjectionCheck};
use crate::manifold::{product, quotient_example, quotient_radius, sample_sphere_with, ManifoldError, ModelSpec, SampledManifold, Sampling};
use crate::operators::{Bandwidth, Discretization, OperatorError};
use crate::orientability::{
    align_omega_for_v, build_f, build_v, detect_with, factor_volume_form, OrientabilityError, OrientabilityOptions, OrientabilityReport, Verdict,
};
use crate::reference::{product_spectrum, sphere_function_spectrum, PinchingExponents, SpectrumTable};
use crate::spectral::{lowest_eigenpairs_with, SolverError, SolverOptions, Spectrum};

/// Bumped on any breaking change of the report layout.
pub const SCHEMA_VERSION: u32 = 1;
/// Largest cloud on which the orientability suite also builds `V` (it needs the
/// `p`-form spectrum).
pub const V_POINT_BUDGET: usize = 4000;
/// Randomized inputs in the Kähler suite.
pub const KAHLER_RANDOM_INPUTS: usize = 50;
/// Default relative margin of the spectrum table.
pub const SPECTRUM_MARGIN: f64 = 0.08;
/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "PINCHKIT_THREADS";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Orientability(#[from] OrientabilityError),
    #[error(transparent)]
    Kahler(#[from] KahlerError),
    #[error(transparent)]
    Comparison(#[from] ComparisonError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ReportError {
    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) | ReportError::Json(_) => 2,
            ReportError::Manifold(ManifoldError::InvalidParams(_) | ManifoldError::Parse { .. } | ManifoldError::Io(_) | ManifoldError::Unsupported(_)) => 2,
            ReportError::Kahler(KahlerError::Precondition { .. } | KahlerError::Degree { .. }) => 2,
            ReportError::Orientability(OrientabilityError::Degree(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ReportError>;

/// One sphere factor of a product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub n: usize,
    pub radius: f64,
    pub points: usize,
}

/// Which model to sample. Product factors are sampled quasi-uniformly with
/// seeds `seed`, `seed + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldConfig {
    Sphere {
        n: usize,
        radius: f64,
        points: usize,
        #[serde(default = "iid")]
        sampling: Sampling,
    },
    Product {
        factors: Vec<FactorConfig>,
    },
    P3eQuotient {
        p: usize,
        n: usize,
        points: usize,
    },
}

fn iid() -> Sampling {
    Sampling::Iid
}

impl ManifoldConfig {
    pub fn build(&self, seed: u64) -> Result<SampledManifold> {
        match self {
            ManifoldConfig::Sphere { n, radius, points, sampling } => Ok(sample_sphere_with(*n, *radius, *points, seed, *sampling)?),
            ManifoldConfig::Product { factors } => {
                let [a, b] = factors.as_slice() else {
                    return Err(ReportError::Config(format!("a product needs exactly two factors, got {}", factors.len())));
                };
                let ma = sample_sphere_with(a.n, a.radius, a.points, seed, Sampling::QuasiUniform)?;
                let mb = sample_sphere_with(b.n, b.radius, b.points, seed.wrapping_add(1), Sampling::QuasiUniform)?;
                Ok(product(&ma, &mb)?)
            }
            ManifoldConfig::P3eQuotient { p, n, points } => Ok(quotient_example(*p, *n, *points, seed)?),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ManifoldConfig::Sphere { n, .. } | ManifoldConfig::P3eQuotient { n, .. } => *n,
            ManifoldConfig::Product { factors } => factors.iter().map(|f| f.n).sum(),
        }
    }
}

fn pair(n1: usize, r1: f64, m1: usize, n2: usize, r2: f64, m2: usize) -> ManifoldConfig {
    ManifoldConfig::Product { factors: vec![FactorConfig { n: n1, radius: r1, points: m1 }, FactorConfig { n: n2, radius: r2, points: m2 }] }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["s2", "s2xs2", "kahler-product", "gh-product", "cosine-product", "s4xs3", "p3e"];

/// A named model with its natural form degree.
pub fn preset(name: &str) -> Option<(ManifoldConfig, Option<usize>)> {
    let k = 1.0 / 3f64.sqrt();
    Some(match name {
        "s2" => (ManifoldConfig::Sphere { n: 2, radius: 1.0, points: 4000, sampling: Sampling::Iid }, None),
        "s2xs2" => (pair(2, 1.0, 60, 2, 1.0, 60), Some(2)),
        "kahler-product" => (pair(2, k, 60, 2, k, 60), Some(2)),
        "gh-product" => (pair(2, 1.0, 900, 2, 0.5, 4), Some(2)),
        "cosine-product" => (pair(2, 1.0, 1000, 2, 0.5, 4), Some(2)),
        "s4xs3" => (pair(4, 1.0, 300, 3, (2.0f64 / 3.0).sqrt(), 60), Some(3)),
        "p3e" => (ManifoldConfig::P3eQuotient { p: 3, n: 7, points: 1500 }, Some(3)),
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    VerifyGrosjean,
    GhApprox,
    Orientability,
    Kahler,
    CompareToolkit,
}

impl Suite {
    pub fn needs_manifold(self) -> bool {
        self != Suite::CompareToolkit
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub suite: Suite,
    #[serde(default)]
    pub manifold: Option<ManifoldConfig>,
    /// Degree of the parallel form; defaults per suite.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Fixed kernel bandwidth instead of the automatic one.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Relative margin for eigenvalue comparisons.
    #[serde(default)]
    pub margin: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.suite.needs_manifold() && self.manifold.is_none() {
            return Err(ReportError::Config(format!("suite {:?} needs a manifold", self.suite)));
        }
        if let (Some(m), Some(p)) = (&self.manifold, self.p) {
            if p > m.dim() {
                return Err(ReportError::Config(format!("p = {p} exceeds the dimension {}", m.dim())));
            }
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return Err(ReportError::Config(format!("bandwidth {b} must be positive")));
            }
        }
        if let Some(m) = self.margin {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ReportError::Config(format!("margin {m} must be positive")));
            }
        }
        Ok(())
    }

    fn bandwidth(&self) -> Bandwidth {
        self.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { seed: self.seed, ..SolverOptions::default() }
    }

    fn harness(&self) -> HarnessOptions {
        let mut o = HarnessOptions { bandwidth: self.bandwidth(), solver: self.solver(), ..HarnessOptions::default() };
        if let Some(m) = self.margin {
            o.margin = m;
        }
        o
    }

    fn degree(&self, m: &SampledManifold) -> Result<usize> {
        self.p.or_else(|| (m.dim() >= 4).then_some(2)).ok_or_else(|| ReportError::Config("suite needs --p".into()))
    }
}

/// Orientability outcome with the data it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientabilityResult {
    pub report: OrientabilityReport,
    /// Why `V` or `F` were not computed.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerResult {
    pub report: KahlerReport,
    pub randomized: Vec<ProjectionCheck>,
    pub hypotheses_held: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SuiteResult {
    VerifyGrosjean(Main1Fragment),
    GhApprox(Box<PinchingReport>),
    Orientability(Box<OrientabilityResult>),
    Kahler(Box<KahlerResult>),
    CompareToolkit(Box<ToolkitReport>),
}

/// One versioned run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: RunConfig,
    pub model: Option<ModelSpec>,
    pub result: SuiteResult,
    /// The defect driving the exponent ladder, when the suite has one.
    pub delta: Option<f64>,
    pub exponents: Option<PinchingExponents>,
    /// Hard invariants that failed; a non-empty list means a wrong result.
    pub invariant_violations: Vec<String>,
    /// Empirical margins that were missed.
    pub warnings: Vec<String>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// `key,value` rows of the flattened JSON.
    pub fn to_csv(&self) -> Result<String> {
        json_to_csv(&serde_json::to_value(self)?)
    }
}

/// Flattens JSON into `key,value` CSV rows with dotted keys and array indices.
pub fn json_to_csv(v: &Value) -> Result<String> {
    let mut rows = Vec::new();
    flatten(v, String::new(), &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?).map_err(|e| ReportError::Config(e.to_string()))
}

fn flatten(v: &Value, key: String, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if key.is_empty() { k.to_string() } else { format!("{key}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(x, join(k), out)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, x)| flatten(x, join(&i.to_string()), out)),
        Value::String(s) => out.push((key, s.clone())),
        Value::Null => out.push((key, String::new())),
        other => out.push((key, other.to_string())),
    }
}

fn nonnegative(name: &str, values: &[f64], out: &mut Vec<String>) {
    for (i, &l) in values.iter().enumerate() {
        if !l.is_finite() || l < -1e-8 * (1.0 + l.abs()) {
            out.push(format!("{name}[{i}] = {l} is not a nonnegative eigenvalue"));
        }
    }
}

/// Runs the configured suite.
pub fn run(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let manifold = config.manifold.as_ref().map(|m| m.build(config.seed)).transpose()?;
    run_on(config, manifold.as_ref())
}

/// Runs the configured suite on an already built manifold.
pub fn run_on(config: &RunConfig, m: Option<&SampledManifold>) -> Result<Report> {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let need = || m.ok_or_else(|| ReportError::Config(format!("suite {:?} needs a manifold", config.suite)));
    let (result, delta, exponents) = match config.suite {
        Suite::VerifyGrosjean => {
            let m = need()?;
            let p = config.degree(m)?;
            let r = verify_main1(m, p, &config.harness())?;
            nonnegative("function_eigenvalues", &r.function_eigenvalues, &mut violations);
            nonnegative("form_eigenvalues", &r.form_eigenvalues, &mut violations);
            if !r.floor_respected {
                warnings.push(format!("λ₁ = {} below the Lichnerowicz floor {} beyond the margin", r.lambda1_g, r.lichnerowicz_floor));
            }
            if !r.slack_within_margin {
                warnings.push(format!("slack {} outside the margin {}", r.slack, r.margin));
            }
            let d = r.lambda_c_p;
            (SuiteResult::VerifyGrosjean(r), Some(d), exponent_ladder(d, m.dim()))
        }
        Suite::GhApprox => {
            let m = need()?;
            let p = config.degree(m)?;
            let r = run_pinching(m, p, &config.harness())?;
            nonnegative("function_eigenvalues", &r.main1.function_eigenvalues, &mut violations);
            for (name, x) in [("epsilon", r.gh.epsilon), ("distortion", r.gh.distortion), ("pythagorean", r.pythagorean_residual)] {
                if !(x.is_finite() && x >= 0.0) {
                    violations.push(format!("{name} = {x}"));
                }
            }
            let (d, e) = (r.delta_form, r.exponents);
            (SuiteResult::GhApprox(Box::new(r)), Some(d), e)
        }
        Suite::Orientability => {
            let m = need()?;
            let r = run_orientability(config, m)?;
            if !r.report.is_consistent() {
                violations.push("verdict disagrees with λ₁ against threshold − margin".into());
            }
            if r.report.matches_ground_truth == Some(false) {
                violations.push(format!("verdict {:?} contradicts the known orientability", r.report.verdict));
            }
            nonnegative("det_line_lowest", &r.report.det_line_lowest, &mut violations);
            let d = r.report.lambda1;
            (SuiteResult::Orientability(Box::new(r)), Some(d), exponent_ladder(d, m.dim()))
        }
        Suite::Kahler => {
            let m = need()?;
            let run = verify_kahler_bound(m, None, &KahlerOptions { bandwidth: config.bandwidth(), solver: config.solver(), ..KahlerOptions::default() })?;
            let randomized = if run.report.even_dim_ok { randomized_projection_checks(&run, KAHLER_RANDOM_INPUTS, config.seed)? } else { vec![] };
            for (i, c) in randomized.iter().enumerate() {
                if !c.consistent() {
                    violations.push(format!("randomized input {i}: projection conclusions fail while the hypotheses hold"));
                }
            }
            if let Some(p) = &run.report.projection {
                if !p.consistent() {
                    violations.push("projection conclusions fail while the hypotheses hold".into());
                }
            }
            if !run.report.even_dim_ok {
                warnings.push(format!("odd dimension {} carries no Kähler form", m.dim()));
            }
            let d = run.report.defect.map(|d| d.delta());
            let hypotheses_held = randomized.iter().filter(|c| c.hypotheses_hold).count();
            let e = d.and_then(|d| exponent_ladder(d, m.dim()));
            (SuiteResult::Kahler(Box::new(KahlerResult { report: run.report, randomized, hypotheses_held })), d, e)
        }
        Suite::CompareToolkit => {
            let r = toolkit_suite(config.seed)?;
            if !r.trif_ok {
                violations.push("trif bound fails where its precondition holds".into());
            }
            if !r.cosi_ok {
                violations.push(format!("{} cosine inequality violations on the grid", r.cosi_violations));
            }
            if (r.segment_constant.ratio - 1.0).abs() > 1e-12 {
                violations.push(format!("segment ratio for h ≡ 1 is {}", r.segment_constant.ratio));
            }
            if !r.segment_ok {
                warnings.push(format!("segment estimate unstable across seeds (z = {})", r.segment_max_z));
            }
            if !r.flow_ok {
                warnings.push("geodesic flow average differs from the volume average beyond 3σ".into());
            }
            (SuiteResult::CompareToolkit(Box::new(r)), None, None)
        }
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        model: m.map(|m| m.spec().clone()),
        result,
        delta,
        exponents,
        invariant_violations: violations,
        warnings,
    })
}

/// Determinant-line detection, plus `V` on small orientable clouds with a
/// near-parallel `p`-form and `F` on products whose first factor is `S^{n−p}`.
fn run_orientability(config: &RunConfig, m: &SampledManifold) -> Result<OrientabilityResult> {
    let disc = Arc::new(Discretization::new(m, config.bandwidth())?);
    let opts = OrientabilityOptions { bandwidth: config.bandwidth(), solver: config.solver(), ..OrientabilityOptions::default() };
    let mut report = detect_with(m, &disc, config.p, &opts)?;
    let mut skipped = Vec::new();
    let Some(p) = config.p else {
        skipped.push("V and F need p".into());
        return Ok(OrientabilityResult { report, skipped });
    };
    let n = m.dim();
    let first_factor_fits = m.product_parts().is_some_and(|(f, _, _)| f[0].dim() == n - p);
    let want_v = report.verdict == Verdict::Orientable && m.len() <= V_POINT_BUDGET;
    if !want_v {
        skipped.push(if report.verdict == Verdict::Orientable {
            format!("V skipped above {V_POINT_BUDGET} points")
        } else {
            "V needs an orientable manifold".into()
        });
    }
    if !first_factor_fits {
        skipped.push(format!("F needs a product whose first factor has dimension {}", n - p));
    }
    if !want_v && !first_factor_fits {
        return Ok(OrientabilityResult { report, skipped });
    }
    let hopts = config.harness();
    let bundle = if want_v {
        let pl = Pipeline::with_discretization(m, disc.clone(), p, &hopts)?;
        let (bundle, _) = aligned_bundle(&pl)?;
        let null = pl.near_null_forms();
        if null.is_empty() {
            skipped.push("V needs a near-parallel p-form".into());
        } else {
            let omega = align_omega_for_v(m, &disc, &bundle, &null)?;
            report.v = Some(build_v(m, &disc, &bundle, &omega)?.1);
        }
        bundle
    } else {
        let functions = lowest_eigenpairs_with(&disc.operator(0)?, hopts.function_count.min(m.len()), hopts.tol, &hopts.solver)?;
        EigenfunctionBundle::from_function_spectrum(m, &disc, p, &functions, None)?
    };
    if first_factor_fits {
        let xi = factor_volume_form(m, 0)?;
        report.f = Some(build_f(m, &disc, &bundle.functions[..n - p], &xi)?.1);
    }
    Ok(OrientabilityResult { report, skipped })
}

/// One row of a spectrum table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub index: usize,
    pub eigenvalue: f64,
    pub residual: f64,
    pub reference: Option<f64>,
    pub within_margin: Option<bool>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTableReport {
    pub p: usize,
    pub margin: f64,
    pub rows: Vec<SpectrumRow>,
    /// The solver stopped early; rows hold its best estimates.
    pub partial: bool,
}

impl SpectrumTableReport {
    /// Every row with a reference lies within the margin.
    pub fn matches_reference(&self) -> bool {
        self.rows.iter().all(|r| r.within_margin != Some(false))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "eigenvalue", "residual", "reference", "within_margin", "converged"])?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.eigenvalue.to_string(),
                r.residual.to_string(),
                r.reference.map(|x| x.to_string()).unwrap_or_default(),
                r.within_margin.map(|x| x.to_string()).unwrap_or_default(),
                r.converged.to_string(),
            ])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?).map_err(|e| ReportError::Config(e.to_string()))
    }
}

/// Lowest `k` eigenvalues of the rough Laplacian on `p`-forms, compared with the
/// analytic function spectrum when `p = 0` and the model is a sphere or a product
/// of spheres. Non-convergence yields a partial table rather than an error.
pub fn spectrum_table(m: &SampledManifold, p: usize, k: usize, bandwidth: Bandwidth, margin: f64, seed: u64) -> Result<SpectrumTableReport> {
    if p > m.dim() {
        return Err(ReportError::Config(format!("p = {p} exceeds the dimension {}", m.dim())));
    }
    let disc = Arc::new(Discretization::new(m, bandwidth)?);
    let op = disc.operator(p)?;
    let k = k.min(op.size());
    let tol = 1e-8;
    let (spec, partial) = match lowest_eigenpairs_with(&op, k, tol, &SolverOptions { seed, ..SolverOptions::default() }) {
        Ok(s) => (s, false),
        Err(SolverError::NotConverged { partial, .. }) => (*partial, true),
        Err(e) => return Err(e.into()),
    };
    let reference = if p == 0 { reference_function_spectrum(m.spec(), spec.len()) } else { None };
    Ok(SpectrumTableReport { p, margin, rows: rows(&spec, reference.as_deref(), margin, tol), partial })
}

fn rows(spec: &Spectrum, reference: Option<&[f64]>, margin: f64, tol: f64) -> Vec<SpectrumRow> {
    (0..spec.len())
        .map(|i| {
            let eigenvalue = spec.eigenvalues[i];
            let r = reference.and_then(|r| r.get(i).copied());
            SpectrumRow {
                index: i,
                eigenvalue,
                residual: spec.residuals[i],
                reference: r,
                // Zero modes are compared absolutely.
                within_margin: r.map(|r| (eigenvalue - r).abs() <= margin * r.max(1.0)),
                converged: spec.residuals[i] <= tol * (1.0 + eigenvalue.abs()) * 1e2,
            }
        })
        .collect()
}

/// First `k` analytic eigenvalues with multiplicity, for spheres and products of
/// spheres.
pub fn reference_function_spectrum(spec: &ModelSpec, k: usize) -> Option<Vec<f64>> {
    let mut kmax = 2;
    loop {
        let (table, ceiling) = reference_table(spec, kmax)?;
        let values: Vec<f64> = table.flattened().into_iter().filter(|&v| v <= ceiling).collect();
        if values.len() >= k {
            return Some(values[..k].to_vec());
        }
        if kmax > 64 {
            return None;
        }
        kmax *= 2;
    }
}

/// Spectrum table truncated where it is known to be complete.
fn reference_table(spec: &ModelSpec, kmax: usize) -> Option<(SpectrumTable, f64)> {
    match spec {
        ModelSpec::Sphere { n, r, .. } => {
            let t = sphere_function_spectrum(*n, *r, kmax).ok()?;
            let top = t.entries().last()?.0;
            Some((t, top))
        }
        ModelSpec::Product { factors, .. } => {
            let [a, b] = factors.as_slice() else { return None };
            let (ta, ca) = reference_table(a, kmax)?;
            let (tb, cb) = reference_table(b, kmax)?;
            let ceiling = ca.min(cb);
            Some((product_spectrum(&ta, &tb, ceiling), ceiling))
        }
        ModelSpec::Quotient { .. } => None,
    }
}

/// Model header for `build`: the description and, for the quotient, its radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildEcho {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub points: usize,
    pub dim: usize,
    pub ambient_dim: usize,
    pub volume: f64,
    pub quotient_radius: Option<f64>,
}

pub fn build_echo(m: &SampledManifold) -> BuildEcho {
    let quotient = match m.spec() {
        ModelSpec::Quotient { p, n, .. } => Some(quotient_radius(*p, *n)),
        _ => None,
    };
    BuildEcho {
        schema_version: SCHEMA_VERSION,
        model: m.spec().clone(),
        points: m.len(),
        dim: m.dim(),
        ambient_dim: m.ambient_dim(),
        volume: m.volume(),
        quotient_radius: quotient,
    }
}

/// Sizes the global worker pool from the environment. Returns the count used,
/// or `None` when the variable is unset.
pub fn init_threads_from_env() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let count: usize = raw.trim().parse().map_err(|_| ReportError::Config(format!("{THREADS_ENV}={raw} is not a thread count")))?;
    if count == 0 {
        return Err(ReportError::Config(format!("{THREADS_ENV} must be positive")));
    }
    // A second initialization keeps the first pool, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(count).build_global();
    Ok(Some(count))
}
