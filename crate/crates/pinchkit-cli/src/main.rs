//! `pinchkit`: builds sampled model manifolds, runs the verification suites and
//! writes JSON or CSV reports.
//!
//! Exit codes: 0 success, 2 usage, 3 numerical failure, 4 hard invariant violated.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pinchkit::manifold::{SampledManifold, Sampling};
use pinchkit::operators::Bandwidth;
use pinchkit::report::{
    build_echo, init_threads_from_env, preset, run, run_on, spectrum_table, to_json, FactorConfig, ManifoldConfig, ReportError, RunConfig, Suite, PRESETS,
    SPECTRUM_MARGIN,
};

const USAGE: u8 = 2;
const NUMERICAL: u8 = 3;
const VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(name = "pinchkit", version, about = "Spectral pinching experiments on sampled model manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a manifold and write it to a file.
    Build(BuildArgs),
    /// Lowest eigenvalues of the rough Laplacian on p-forms.
    Spectrum(SpectrumArgs),
    /// Compare λ₁ with n − p given the p-form defect.
    VerifyGrosjean(SuiteArgs),
    /// Build the approximation map onto S^{n−p} × A_f and measure it.
    GhApprox(SuiteArgs),
    /// Determinant-line orientability test with the V and F constructions.
    Orientability(SuiteArgs),
    /// Kähler eigenvalue bound, defects and randomized projection checks.
    Kahler(SuiteArgs),
    /// Comparison toolkit property suite.
    CompareToolkit(SuiteArgs),
    /// Run the suite named by --suite or by a JSON config.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    VerifyGrosjean,
    GhApprox,
    Orientability,
    Kahler,
    CompareToolkit,
}

impl From<SuiteName> for Suite {
    fn from(s: SuiteName) -> Self {
        match s {
            SuiteName::VerifyGrosjean => Suite::VerifyGrosjean,
            SuiteName::GhApprox => Suite::GhApprox,
            SuiteName::Orientability => Suite::Orientability,
            SuiteName::Kahler => Suite::Kahler,
            SuiteName::CompareToolkit => Suite::CompareToolkit,
        }
    }
}

/// Where the manifold comes from: a model kind with parameters, a named preset,
/// or a file written by `build`.
#[derive(Args, Clone)]
struct ModelArgs {
    /// `sphere`, `product`, `p3e-quotient`, or a named preset.
    #[arg(long)]
    preset: Option<String>,
    /// Dimension (sphere, quotient).
    #[arg(long)]
    n: Option<usize>,
    /// Sphere radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Number of sample points (sphere, quotient classes).
    #[arg(long)]
    points: Option<usize>,
    /// Product factors as `n:radius:points`, comma separated.
    #[arg(long)]
    factors: Option<String>,
    /// Sample a sphere quasi-uniformly instead of i.i.d.
    #[arg(long)]
    quasi_uniform: bool,
    /// Manifold file written by `build`.
    #[arg(long, conflicts_with = "preset")]
    manifold: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Degree used by the quotient model.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    p: usize,
    #[arg(long, default_value_t = 9)]
    k: usize,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Relative margin against the analytic spectrum.
    #[arg(long, default_value_t = SPECTRUM_MARGIN)]
    margin: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Relative margin for eigenvalue comparisons.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; other flags are ignored when given.
    #[arg(long, conflicts_with = "suite")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    suite: Option<SuiteName>,
    #[command(flatten)]
    rest: SuiteArgs,
}

enum Failure {
    Usage(String),
    Report(ReportError),
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::Report(e)
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match init_threads_from_env().map_err(Failure::from).and_then(|_| dispatch(cli.command)) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `pinchkit --help` for usage.");
            USAGE
        }
        Err(Failure::Report(e)) => {
            eprintln!("error: {e}");
            match e.exit_code() {
                2 => USAGE,
                _ => NUMERICAL,
            }
        }
    };
    ExitCode::from(code)
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Build(a) => build(a),
        Command::Spectrum(a) => spectrum(a),
        Command::VerifyGrosjean(a) => suite(Suite::VerifyGrosjean, a),
        Command::GhApprox(a) => suite(Suite::GhApprox, a),
        Command::Orientability(a) => suite(Suite::Orientability, a),
        Command::Kahler(a) => suite(Suite::Kahler, a),
        Command::CompareToolkit(a) => suite(Suite::CompareToolkit, a),
        Command::Run(a) => match (a.config, a.suite) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                let config = RunConfig::from_json(&text)?;
                finish(run(&config)?, a.rest.format, a.rest.out.as_deref())
            }
            (None, Some(s)) => suite(s.into(), a.rest),
            (None, None) => Err(Failure::Usage("run needs --suite or --config".into())),
        },
    }
}

enum Source {
    Config(ManifoldConfig, Option<usize>),
    File(Box<SampledManifold>),
}

fn need<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("{kind} needs --{flag}")))
}

fn parse_factors(text: &str) -> Result<Vec<FactorConfig>, Failure> {
    text.split(',')
        .map(|f| {
            let parts: Vec<&str> = f.trim().split(':').collect();
            let bad = || Failure::Usage(format!("factor `{f}` is not n:radius:points"));
            let [n, r, m] = parts.as_slice() else { return Err(bad()) };
            Ok(FactorConfig { n: n.parse().map_err(|_| bad())?, radius: r.parse().map_err(|_| bad())?, points: m.parse().map_err(|_| bad())? })
        })
        .collect()
}

/// The manifold selected by the flags, if any, with its natural degree.
fn source(m: &ModelArgs, p: Option<usize>) -> Result<Option<Source>, Failure> {
    if let Some(path) = &m.manifold {
        return Ok(Some(Source::File(Box::new(SampledManifold::load(path).map_err(ReportError::from)?))));
    }
    let Some(name) = m.preset.as_deref() else { return Ok(None) };
    let config = match name {
        "sphere" => ManifoldConfig::Sphere {
            n: need(m.n, "n", "sphere")?,
            radius: m.radius.unwrap_or(1.0),
            points: need(m.points, "points", "sphere")?,
            sampling: if m.quasi_uniform { Sampling::QuasiUniform } else { Sampling::Iid },
        },
        "product" => ManifoldConfig::Product { factors: parse_factors(&need(m.factors.clone(), "factors", "product")?)? },
        "p3e-quotient" => ManifoldConfig::P3eQuotient {
            p: need(p, "p", "p3e-quotient")?,
            n: need(m.n, "n", "p3e-quotient")?,
            points: need(m.points, "points", "p3e-quotient")?,
        },
        other => {
            let (config, degree) = preset(other)
                .ok_or_else(|| Failure::Usage(format!("unknown preset `{other}`; expected sphere, product, p3e-quotient or one of {}", PRESETS.join(", "))))?;
            return Ok(Some(Source::Config(config, degree)));
        }
    };
    Ok(Some(Source::Config(config, None)))
}

fn build(a: BuildArgs) -> Outcome {
    let Some(Source::Config(config, _)) = source(&a.model, a.p)? else {
        return Err(Failure::Usage("build needs --preset".into()));
    };
    let m = config.build(a.model.seed)?;
    m.save(&a.out).map_err(ReportError::from)?;
    print!("{}", to_json(&build_echo(&m))?);
    Ok(0)
}

fn spectrum(a: SpectrumArgs) -> Outcome {
    let m = match source(&a.model, None)? {
        Some(Source::File(m)) => *m,
        Some(Source::Config(c, _)) => c.build(a.model.seed)?,
        None => return Err(Failure::Usage("spectrum needs --preset or --manifold".into())),
    };
    if a.p > m.dim() {
        return Err(Failure::Usage(format!("p = {} exceeds the dimension {}", a.p, m.dim())));
    }
    let bandwidth = a.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed);
    let table = spectrum_table(&m, a.p, a.k, bandwidth, a.margin, a.model.seed)?;
    let text = match a.format {
        Format::Csv => table.to_csv()?,
        Format::Json => to_json(&table)?,
    };
    emit(&text, a.out.as_deref())?;
    if !table.matches_reference() {
        eprintln!("warning: some eigenvalues differ from the analytic spectrum by more than {}", a.margin);
    }
    if table.partial {
        eprintln!("error: the solver did not converge; the output holds partial estimates");
        return Ok(NUMERICAL);
    }
    Ok(0)
}

fn suite(suite: Suite, a: SuiteArgs) -> Outcome {
    let src = source(&a.model, a.p)?;
    let mut config = RunConfig { suite, manifold: None, p: a.p, seed: a.model.seed, bandwidth: a.bandwidth, margin: a.margin };
    let report = match src {
        Some(Source::File(m)) => run_on(&config, Some(&m))?,
        Some(Source::Config(c, degree)) => {
            config.p = config.p.or(degree);
            config.manifold = Some(c);
            run(&config)?
        }
        None if suite.needs_manifold() => return Err(Failure::Usage("this suite needs --preset or --manifold".into())),
        None => run(&config)?,
    };
    finish(report, a.format, a.out.as_deref())
}

fn finish(report: pinchkit::report::Report, format: Format, out: Option<&Path>) -> Outcome {
    let text = match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv()?,
    };
    emit(&text, out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.invariant_violations.is_empty() {
        Ok(0)
    } else {
        for v in &report.invariant_violations {
            eprintln!("invariant violated: {v}");
        }
        Ok(VIOLATION)
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Report(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
