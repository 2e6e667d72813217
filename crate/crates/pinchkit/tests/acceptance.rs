//! End-to-end acceptance runs. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use pinchkit::comparison::toolkit_suite;
use pinchkit::exterior::*;
use pinchkit::harness::*;
use pinchkit::manifold::*;
use pinchkit::operators::{Bandwidth, Discretization};
use pinchkit::orientability::Verdict;
use pinchkit::report::{preset, run, ManifoldConfig, Report, RunConfig, Suite, SuiteResult};
use pinchkit::spectral::lowest_eigenpairs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_kvector(rng: &mut ChaCha8Rng, n: usize, k: usize) -> KVector {
    let c = (0..binomial(n, k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    KVector::from_coeffs(n, k, c).unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, k: usize) -> VectorValuedKForm {
    let c = (0..n * binomial(n, k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    VectorValuedKForm::from_coeffs(n, k, c).unwrap()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest deviation of each exterior identity over 1000 random instances per
/// dimension.
fn exterior_identities() -> Outcome {
    const TRIALS: usize = 1000;
    const TOL: f64 = 1e-12;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xe7e7);
    let mut worst = [0.0f64; 6];
    for n in 4..=7 {
        for _ in 0..TRIALS {
            let k = rng.gen_range(1..=n);
            let alpha = random_kvector(&mut rng, n, 1);
            let beta = random_kvector(&mut rng, n, 1);
            let omega = random_kvector(&mut rng, n, k);
            let other = random_kvector(&mut rng, n, k);
            let eta = random_kvector(&mut rng, n, k - 1);

            // ⟨ι(α)ω, η⟩ = ⟨ω, α∧η⟩.
            let adj = interior(&alpha, &omega).map_err(err)?.dot(&eta) - omega.dot(&wedge(&alpha, &eta).map_err(err)?);
            worst[0] = worst[0].max(adj.abs());

            // Orthogonal, norm-exact splitting of V⊗Λᵏ.
            let t = random_tensor(&mut rng, n, k);
            let parts = decompose_covariant(&t);
            let mut dev = max_abs(parts.recombine().coeffs(), t.coeffs());
            let mut pieces = vec![parts.t_part.clone()];
            let mut norm = parts.t_part.norm_sq();
            if let Some(d) = &parts.d_part {
                pieces.push(q1(d).scale(1.0 / ((k + 1) as f64).sqrt()));
                norm += d.norm_sq() / (k + 1) as f64;
            }
            if let Some(d) = &parts.dstar_part {
                pieces.push(q2(d).scale(1.0 / ((n - k + 1) as f64).sqrt()));
                norm += d.norm_sq() / (n - k + 1) as f64;
            }
            dev = dev.max((norm - t.norm_sq()).abs());
            for i in 0..pieces.len() {
                for j in i + 1..pieces.len() {
                    dev = dev.max(pieces[i].dot(&pieces[j]).abs());
                }
            }
            worst[1] = worst[1].max(dev);

            // k|α₁∧…∧α_k|² against the antisymmetrized tensor.
            let alphas: Vec<KVector> = (0..k).map(|_| random_kvector(&mut rng, n, 1)).collect();
            let (lhs, rhs) = antisymmetrize_norm_identity(&alphas).map_err(err)?;
            worst[2] = worst[2].max((lhs - rhs).abs());

            // ⟨ι(α)ω, ι(β)η⟩ + ⟨ι(β)∗ω, ι(α)∗η⟩ = ⟨α,β⟩⟨ω,η⟩.
            let so = hodge_star(&omega, 1.0);
            let sx = hodge_star(&other, 1.0);
            let lhs = interior(&alpha, &omega).map_err(err)?.dot(&interior(&beta, &other).map_err(err)?);
            let lhs2 = if k < n { interior(&beta, &so).map_err(err)?.dot(&interior(&alpha, &sx).map_err(err)?) } else { 0.0 };
            worst[3] = worst[3].max((lhs + lhs2 - alpha.dot(&beta) * omega.dot(&other)).abs());

            // ∗(ω∧α) = ι(α)∗ω, for degrees below n.
            if k < n {
                let left = hodge_star(&wedge(&omega, &alpha).map_err(err)?, 1.0);
                let right = interior(&alpha, &so).map_err(err)?;
                worst[4] = worst[4].max(max_abs(left.coeffs(), right.coeffs()));
            }

            // P∘Q = Id, Q isometric, Q∘P idempotent and symmetric.
            let mut pq: f64 = 0.0;
            let s = random_tensor(&mut rng, n, k - 1);
            let t2 = random_tensor(&mut rng, n, k - 1);
            let zeta = random_kvector(&mut rng, n, k);
            let q = q1(&zeta);
            pq = pq.max(max_abs(p1(&q).unwrap().coeffs(), zeta.coeffs()));
            pq = pq.max((q.norm_sq() - zeta.norm_sq()).abs());
            let proj = |x: &VectorValuedKForm| q1(&p1(x).unwrap());
            pq = pq.max(max_abs(proj(&proj(&s)).coeffs(), proj(&s).coeffs()));
            pq = pq.max((proj(&s).dot(&t2) - s.dot(&proj(&t2))).abs());
            let eta2 = random_kvector(&mut rng, n, k - 1);
            let q = q2(&eta2);
            pq = pq.max(max_abs(p2(&q).unwrap().coeffs(), eta2.coeffs()));
            pq = pq.max((q.norm_sq() - eta2.norm_sq()).abs());
            let proj2 = |x: &VectorValuedKForm| q2(&p2(x).unwrap());
            let u = random_tensor(&mut rng, n, k);
            let v = random_tensor(&mut rng, n, k);
            pq = pq.max(max_abs(proj2(&proj2(&u)).coeffs(), proj2(&u).coeffs()));
            pq = pq.max((proj2(&u).dot(&v) - u.dot(&proj2(&v))).abs());
            worst[5] = worst[5].max(pq);
        }
    }
    let elapsed = start.elapsed();
    let ok = worst.iter().all(|&w| w <= TOL) && elapsed < Duration::from_secs(10);
    Ok((
        ok,
        format!(
            "adjoint {:.1e}, splitting {:.1e}, antisym {:.1e}, star pairing {:.1e}, star of wedge {:.1e}, P/Q {:.1e} in {elapsed:.1?}",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
        ),
    ))
}

fn unit_sphere_disc() -> Result<(SampledManifold, Arc<Discretization>), String> {
    let m = sample_sphere(2, 1.0, 4000, 7).map_err(err)?;
    let d = Arc::new(Discretization::new(&m, Bandwidth::Auto).map_err(err)?);
    Ok((m, d))
}

fn sphere_spectrum(d: &Arc<Discretization>, start: Instant) -> Outcome {
    let s = lowest_eigenpairs(&d.operator(0).map_err(err)?, 9, 1e-8).map_err(err)?;
    let e = &s.eigenvalues;
    let elapsed = start.elapsed();
    let ok =
        e[1..4].iter().all(|l| (l - 2.0).abs() <= 0.05 * 2.0) && e[4..9].iter().all(|l| (l - 6.0).abs() <= 0.08 * 6.0) && elapsed < Duration::from_secs(120);
    Ok((ok, format!("λ₁..₃ {:.4?}, λ₄..₈ {:.4?} in {elapsed:.1?}", &e[1..4], &e[4..9])))
}

fn sphere_one_forms(d: &Arc<Discretization>) -> Outcome {
    let s = lowest_eigenpairs(&d.operator(1).map_err(err)?, 3, 1e-8).map_err(err)?;
    let l = s.eigenvalues[0];
    Ok(((l - 1.0).abs() <= 0.1, format!("λ₁ = {l:.4} on 1-forms")))
}

fn product_of(a: f64, m1: usize, r2: f64, m2: usize, seed: u64) -> Result<SampledManifold, String> {
    let s = sample_sphere_with(2, a, m1, seed, Sampling::QuasiUniform).map_err(err)?;
    let t = sample_sphere_with(2, r2, m2, seed + 1, Sampling::QuasiUniform).map_err(err)?;
    product(&s, &t).map_err(err)
}

fn equality_case(r: &Main1Fragment, elapsed: Duration) -> Outcome {
    let ok = (1.9..=2.1).contains(&r.lambda1_g) && r.lambda_c_p <= 0.1 && r.floor_respected && elapsed < Duration::from_secs(600);
    Ok((
        ok,
        format!(
            "λ₁ = {:.4}, λ₁(Δ_C,2) = {:.2e}, floor {:.3} respected {} in {elapsed:.1?}",
            r.lambda1_g, r.lambda_c_p, r.lichnerowicz_floor, r.floor_respected
        ),
    ))
}

fn sweep(rows: &[(f64, Main1Fragment)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, r) in rows {
        let root = r.lambda_c_p.max(0.0).sqrt();
        // With the form defect at round-off the slack must sit within the margin.
        let tied = if root <= 1e-3 { r.slack_within_margin } else { r.slack.abs() <= r.margin * 2.0 + root };
        // The ratio is undefined exactly when the defect is at round-off.
        let reported = match r.ratio {
            Some(x) => x.is_finite(),
            None => r.slack >= 0.0 || r.lambda_c_p <= DEFECT_ROUNDOFF,
        };
        ok &= tied && reported;
        let ratio = r.ratio.map_or_else(|| "undefined (λ_C at round-off)".to_string(), |x| format!("{x:.3}"));
        parts.push(format!("a = {a}: slack {:+.4}, λ_C {:.1e}, ratio {ratio}", r.slack, r.lambda_c_p));
    }
    Ok((ok, parts.join("; ")))
}

fn gh_sequence() -> Outcome {
    let opts = HarnessOptions::default();
    let mut eps = Vec::new();
    let mut pyth = 0.0;
    for m1 in [225, 400, 900] {
        let m = product_of(1.0, m1, 0.5, 4, 1)?;
        let r = run_pinching(&m, 2, &opts).map_err(err)?;
        eps.push(r.gh.epsilon);
        pyth = r.pythagorean_residual;
    }
    let ok = eps[2] <= 0.25 && eps.windows(2).all(|w| w[1] < w[0]) && pyth <= 0.3;
    Ok((ok, format!("ε over N = 900, 1600, 3600: {eps:.4?}; Pythagorean residual {pyth:.4}")))
}

fn almost_cosine() -> Outcome {
    let m = product_of(1.0, 1000, 0.5, 4, 1)?;
    let opts = HarnessOptions::default();
    let pl = Pipeline::new(&m, 2, &opts).map_err(err)?;
    let (bundle, _) = aligned_bundle(&pl).map_err(err)?;
    let map = build_sphere_map(&bundle).map_err(err)?;
    let (_, level) = build_gh_map(&m, &bundle, &opts).map_err(err)?;
    let (f, _) = choose_function(&bundle, &map, &opts.f_choice).map_err(err)?;
    let residual = almost_cosine_residual(&f, &level);

    // Control: an eigenfunction from the next eigenvalue cluster, scaled to peak at one.
    let clusters = pl.function_clusters();
    let j = clusters.get(1).ok_or("second eigenvalue cluster not computed")?.start;
    let g = &pl.functions.eigenvectors[j];
    let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let s = if hi >= -lo { 1.0 / hi } else { 1.0 / lo };
    let g: Vec<f64> = g.iter().map(|x| x * s).collect();
    let control = almost_cosine_residual(&g, &level_set_and_projection(&m, &g, LevelRule::DEFAULT).map_err(err)?);
    let ok = residual <= 0.05 && control >= 3.0 * residual;
    Ok((ok, format!("max |f − cos d(·, A_f)| = {residual:.4}, control λ = {:.3}: {control:.4}", pl.functions.eigenvalues[j])))
}

fn preset_run(name: &str, suite: Suite, seed: u64) -> Result<Report, String> {
    let (manifold, p) = preset(name).ok_or("unknown preset")?;
    run(&RunConfig { suite, manifold: Some(manifold), p, seed, bandwidth: None, margin: None }).map_err(err)
}

fn orientability() -> Outcome {
    let SuiteResult::Orientability(prod) = preset_run("s2xs2", Suite::Orientability, 1)?.result else { unreachable!() };
    let SuiteResult::Orientability(quot) = preset_run("p3e", Suite::Orientability, 1)?.result else { unreachable!() };
    let (p, q) = (&prod.report, &quot.report);
    let v = p.v.ok_or("V was not computed on the product")?;
    let ok = p.verdict == Verdict::Orientable
        && p.lambda1 <= 0.05
        && q.verdict == Verdict::Unorientable
        && q.lambda1 >= q.threshold - q.margin
        && (v.norm_sq - 1.0).abs() <= 0.1
        && v.energy <= 0.1;
    Ok((
        ok,
        format!(
            "S²×S² {:?} λ₁ = {:.1e}; quotient {:?} λ₁ = {:.3} vs threshold − margin {:.3}; ‖V‖² = {:.3}, energy {:.2e}",
            p.verdict,
            p.lambda1,
            q.verdict,
            q.lambda1,
            q.threshold - q.margin,
            v.norm_sq,
            v.energy
        ),
    ))
}

fn f_function() -> Outcome {
    let SuiteResult::Orientability(r) = preset_run("s4xs3", Suite::Orientability, 1)?.result else { unreachable!() };
    let f = r.report.f.ok_or("F was not computed")?;
    let minmax = f.minmax.ok_or("F lies in the span of the fᵢ")?;
    let ok = (f.norm_sq - 0.2).abs() <= 0.2 && (f.grad_sq - 0.8).abs() <= 0.2 && f.max_inner <= 0.2 && minmax <= 4.4;
    Ok((ok, format!("‖F‖² = {:.3}, ‖∇F‖² = {:.3}, max ⟨fᵢ,F⟩ = {:.3}, minmax {minmax:.3}", f.norm_sq, f.grad_sq, f.max_inner)))
}

fn kahler() -> Outcome {
    let SuiteResult::Kahler(r) = preset_run("kahler-product", Suite::Kahler, 1)?.result else { unreachable!() };
    let k = &r.report;
    let l = k.lambda1.ok_or("no eigenvalue")?;
    let d = k.defect.ok_or("no defect")?;
    let top = k.top_power.ok_or("no top power")?;
    let consistent = r.randomized.iter().all(|c| c.consistent());
    let ok = (5.4..=6.6).contains(&l) && d.j_defect <= 0.1 && d.grad_defect <= 0.1 && top.stat <= 0.3 && consistent && r.randomized.len() == 50;
    Ok((
        ok,
        format!(
            "λ₁ = {l:.4}, grad defect {:.2e}, J defect {:.2e}, top power {:.3}; projection conclusions hold on {}/{} inputs ({} met the hypotheses)",
            d.grad_defect,
            d.j_defect,
            top.stat,
            r.randomized.iter().filter(|c| c.consistent()).count(),
            r.randomized.len(),
            r.hypotheses_held
        ),
    ))
}

fn toolkit() -> Outcome {
    let start = Instant::now();
    let r = toolkit_suite(11).map_err(err)?;
    let elapsed = start.elapsed();
    let ok = r.passed() && elapsed < Duration::from_secs(60);
    Ok((
        ok,
        format!(
            "trif {}, cosi violations {}, segment z {:.2}, flow max z {:.2} in {elapsed:.1?}",
            r.trif_ok,
            r.cosi_violations,
            r.segment_max_z,
            r.flow.iter().map(|f| f.record.z).fold(0.0, f64::max)
        ),
    ))
}

fn determinism() -> Outcome {
    let mut same = true;
    let mut sizes = Vec::new();
    // A smaller sphere keeps the repeat cheap.
    for (name, suite) in [("p3e", Suite::Orientability), ("s2", Suite::VerifyGrosjean)] {
        let (manifold, _) = preset(name).ok_or("unknown preset")?;
        let manifold = match manifold {
            ManifoldConfig::Sphere { n, radius, sampling, .. } => ManifoldConfig::Sphere { n, radius, points: 1500, sampling },
            other => other,
        };
        let config =
            RunConfig { suite, manifold: Some(manifold), p: Some(if suite == Suite::VerifyGrosjean { 1 } else { 3 }), seed: 42, bandwidth: None, margin: None };
        let a = run(&config).map_err(err)?.to_json().map_err(err)?;
        let b = run(&config).map_err(err)?.to_json().map_err(err)?;
        same &= a == b;
        sizes.push(a.len());
    }
    let c = RunConfig { suite: Suite::CompareToolkit, manifold: None, p: None, seed: 3, bandwidth: None, margin: None };
    let a = run(&c).map_err(err)?.to_json().map_err(err)?;
    let b = run(&c).map_err(err)?.to_json().map_err(err)?;
    same &= a == b;
    sizes.push(a.len());
    Ok((same, format!("three configurations run twice, report sizes {sizes:?} bytes")))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failures += 1;
        }
        println!("criterion {id:>2} {}: {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    report(1, "exterior identities", exterior_identities());
    let start = Instant::now();
    match unit_sphere_disc() {
        Ok((_, d)) => {
            report(2, "sphere spectrum", sphere_spectrum(&d, start));
            report(3, "sphere 1-form spectrum", sphere_one_forms(&d));
        }
        Err(e) => {
            report(2, "sphere spectrum", Err(e.clone()));
            report(3, "sphere 1-form spectrum", Err(e));
        }
    }
    let opts = HarnessOptions::default();
    let mut rows = Vec::new();
    for a in [1.0, 0.95, 0.9] {
        let start = Instant::now();
        let r = product_of(1.0, 60, a, 60, 1).and_then(|m| verify_main1(&m, 2, &opts).map_err(err));
        match r {
            Ok(r) => {
                if a == 1.0 {
                    report(4, "product equality case", equality_case(&r, start.elapsed()));
                }
                rows.push((a, r));
            }
            Err(e) => {
                if a == 1.0 {
                    report(4, "product equality case", Err(e.clone()));
                }
                report(5, "radius sweep", Err(format!("a = {a}: {e}")));
            }
        }
    }
    if rows.len() == 3 {
        report(5, "radius sweep", sweep(&rows));
    }
    report(6, "approximation map", gh_sequence());
    report(7, "almost cosine", almost_cosine());
    report(8, "orientability", orientability());
    report(9, "F function", f_function());
    report(10, "Kähler equality case", kahler());
    report(11, "comparison toolkit", toolkit());
    report(12, "determinism", determinism());

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
