//! Exterior algebra checked against a brute-force tensor model: forms are stored as
//! fully antisymmetric arrays over all index tuples, and products are formed by
//! explicit sums over permutations.

use pinchkit::exterior::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Antisymmetric tensor `T[i_1..i_k]`, dense over `n^k`.
#[derive(Clone)]
struct Tensor {
    n: usize,
    k: usize,
    v: Vec<f64>,
}

fn tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..n).map(move |i| {
                    let mut s = t.clone();
                    s.push(i);
                    s
                })
            })
            .collect();
    }
    out
}

fn flat(n: usize, t: &[usize]) -> usize {
    t.iter().fold(0, |a, &i| a * n + i)
}

fn perm_sign(p: &[usize]) -> f64 {
    let mut s = 1.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

fn perms(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in perms(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Tensor {
    /// Value on `(e_{i_1},…,e_{i_k})` of `e^{i_1}∧…∧e^{i_k}` is 1, so the tensor
    /// of a basis element is the signed indicator of permutations of `I`.
    fn from_kvector(w: &KVector) -> Self {
        let (n, k) = (w.dim(), w.degree());
        let mut v = vec![0.0; n.pow(k as u32)];
        for t in tuples(n, k) {
            let mut s = t.clone();
            s.sort();
            if s.windows(2).any(|x| x[0] == x[1]) {
                continue;
            }
            let order: Vec<usize> = t.iter().map(|x| s.iter().position(|y| y == x).unwrap()).collect();
            let r = MultiIndex::new(n, s).unwrap().rank();
            v[flat(n, &t)] = perm_sign(&order) * w.coeffs()[r];
        }
        Tensor { n, k, v }
    }

    fn to_kvector(&self) -> KVector {
        let mut w = KVector::zeros(self.n, self.k);
        for r in 0..binomial(self.n, self.k) {
            let mi = MultiIndex::from_rank(self.n, self.k, r);
            w.coeffs_mut()[r] = self.v[flat(self.n, mi.indices())];
        }
        w
    }

    /// `(α∧β)(v) = (1/(k! l!)) Σ_σ sgn σ α(v_σ…) β(v_σ…)`.
    fn wedge(&self, other: &Tensor) -> Tensor {
        let n = self.n;
        let (k, l) = (self.k, other.k);
        let m = k + l;
        let ps = perms(m);
        let mut v = vec![0.0; n.pow(m as u32)];
        for t in tuples(n, m) {
            let mut acc = 0.0;
            for p in &ps {
                let a: Vec<usize> = p[..k].iter().map(|&i| t[i]).collect();
                let b: Vec<usize> = p[k..].iter().map(|&i| t[i]).collect();
                acc += perm_sign(p) * self.v[flat(n, &a)] * other.v[flat(n, &b)];
            }
            v[flat(n, &t)] = acc / (factorial(k) * factorial(l));
        }
        Tensor { n, k: m, v }
    }

    /// `ι(α)ω (v…) = ω(α♯, v…)`.
    fn interior(&self, alpha: &[f64]) -> Tensor {
        let n = self.n;
        let k = self.k - 1;
        let mut v = vec![0.0; n.pow(k as u32)];
        for t in tuples(n, k) {
            let mut acc = 0.0;
            for (i, &a) in alpha.iter().enumerate() {
                let mut s = vec![i];
                s.extend_from_slice(&t);
                acc += a * self.v[flat(n, &s)];
            }
            v[flat(n, &t)] = acc;
        }
        Tensor { n, k, v }
    }

    /// Hodge star from the Levi-Civita symbol:
    /// `(∗ω)_{j…} = (1/k!) Σ_{i…} ω_{i…} ε_{i…j…}`.
    fn star(&self) -> Tensor {
        let n = self.n;
        let k = self.k;
        let m = n - k;
        let mut v = vec![0.0; n.pow(m as u32)];
        for t in tuples(n, m) {
            let mut acc = 0.0;
            for s in tuples(n, k) {
                let mut all = s.clone();
                all.extend_from_slice(&t);
                let mut sorted = all.clone();
                sorted.sort();
                if sorted.windows(2).any(|x| x[0] == x[1]) {
                    continue;
                }
                acc += self.v[flat(n, &s)] * perm_sign(&all);
            }
            v[flat(n, &t)] = acc / factorial(k);
        }
        Tensor { n, k: m, v }
    }
}

fn rand_kvec(rng: &mut ChaCha8Rng, n: usize, k: usize) -> KVector {
    let c = (0..binomial(n, k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    KVector::from_coeffs(n, k, c).unwrap()
}

#[test]
fn wedge_matches_permutation_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (n, k, l) in [(4, 2, 1), (4, 1, 1), (5, 2, 2), (4, 1, 3), (5, 3, 1)] {
        for _ in 0..5 {
            let a = rand_kvec(&mut rng, n, k);
            let b = rand_kvec(&mut rng, n, l);
            let lib = wedge(&a, &b).unwrap();
            let ora = Tensor::from_kvector(&a).wedge(&Tensor::from_kvector(&b)).to_kvector();
            assert!(lib.sub(&ora).norm() < 1e-12, "n={n} k={k} l={l}");
        }
    }
}

#[test]
fn interior_matches_tensor_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, k) in [(4, 2), (5, 3), (5, 1), (4, 4)] {
        let a = rand_kvec(&mut rng, n, 1);
        let w = rand_kvec(&mut rng, n, k);
        let lib = interior(&a, &w).unwrap();
        let ora = Tensor::from_kvector(&w).interior(a.coeffs()).to_kvector();
        assert!(lib.sub(&ora).norm() < 1e-12);
    }
}

#[test]
fn hodge_star_matches_levi_civita() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (n, k) in [(3, 1), (3, 2), (4, 2), (5, 2), (5, 3), (4, 0), (4, 4)] {
        let w = rand_kvec(&mut rng, n, k);
        let lib = hodge_star(&w, 1.0);
        let ora = Tensor::from_kvector(&w).star().to_kvector();
        assert!(lib.clone().sub(&ora).norm() < 1e-12, "n={n} k={k}");
        // ⟨∗ω, η⟩ vol = ω∧η.
        let eta = rand_kvec(&mut rng, n, n - k);
        let top = wedge(&w, &eta).unwrap().coeffs()[0];
        assert!((lib.dot(&eta) - top).abs() < 1e-12);
    }
}

/// `𝓡_k ω = −Σ e^i ∧ ι(e_j)(R(e_i,e_j)ω)` with `R(X,Y)Z = κ(⟨Y,Z⟩X − ⟨X,Z⟩Y)`
/// acting on forms as a derivation.
fn brute_force_curvature(kappa: f64, n: usize, k: usize) -> Vec<f64> {
    let b = binomial(n, k);
    let mut mat = vec![0.0; b * b];
    if k == 0 {
        return mat;
    }
    for col in 0..b {
        let idx = MultiIndex::from_rank(n, k, col);
        let factors: Vec<KVector> = idx.indices().iter().map(|&i| KVector::basis_covector(n, i)).collect();
        let mut out = KVector::zeros(n, k);
        for i in 0..n {
            for j in 0..n {
                // R(e_i,e_j) on covectors: e^l ↦ κ(δ_jl e^i − δ_il e^j).
                let mut r_omega = KVector::zeros(n, k);
                for pos in 0..k {
                    let l = idx.indices()[pos];
                    let mut img = KVector::zeros(n, 1);
                    if j == l {
                        img.coeffs_mut()[i] += kappa;
                    }
                    if i == l {
                        img.coeffs_mut()[j] -= kappa;
                    }
                    let mut parts = factors.clone();
                    parts[pos] = img;
                    r_omega = r_omega.add(&wedge_all(n, parts.iter()));
                }
                let contracted = interior(&KVector::basis_covector(n, j), &r_omega).unwrap();
                let term = wedge(&KVector::basis_covector(n, i), &contracted).unwrap();
                out = out.sub(&term);
            }
        }
        for row in 0..b {
            mat[row * b + col] = out.coeffs()[row];
        }
    }
    mat
}

#[test]
fn constant_curvature_scalar_matches_brute_force() {
    for n in 1..=6 {
        for k in 0..=n {
            for kappa in [1.0, -0.5, 2.0] {
                let m = brute_force_curvature(kappa, n, k);
                let b = binomial(n, k);
                let s = curvature_endomorphism_constant_curvature(kappa, n, k);
                for r in 0..b {
                    for c in 0..b {
                        let expect = if r == c { s } else { 0.0 };
                        assert!((m[r * b + c] - expect).abs() < 1e-12, "n={n} k={k} κ={kappa}");
                    }
                }
            }
        }
    }
    // Frozen: 2-forms in dimension 4 at κ = 1.
    assert_eq!(brute_force_curvature(1.0, 4, 2)[0], 4.0);
}

fn kvec_strategy(n: usize, k: usize) -> impl Strategy<Value = KVector> {
    prop::collection::vec(-2.0f64..2.0, binomial(n, k)).prop_map(move |c| KVector::from_coeffs(n, k, c).unwrap())
}

fn vvf_strategy(n: usize, k: usize) -> impl Strategy<Value = VectorValuedKForm> {
    prop::collection::vec(-2.0f64..2.0, n * binomial(n, k)).prop_map(move |c| VectorValuedKForm::from_coeffs(n, k, c).unwrap())
}

fn nk() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=7).prop_flat_map(|n| (Just(n), 0..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graded_anticommutativity((n, k) in nk(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = rng.gen_range(0..=n - k);
        let a = rand_kvec(&mut rng, n, k);
        let b = rand_kvec(&mut rng, n, l);
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        let sign = if (k * l) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!(ab.sub(&ba.scale(sign)).norm() < 1e-12);
    }

    #[test]
    fn interior_is_adjoint_of_wedge((n, k) in (2usize..=7).prop_flat_map(|n| (Just(n), 1..=n)), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_kvec(&mut rng, n, 1);
        let w = rand_kvec(&mut rng, n, k);
        let eta = rand_kvec(&mut rng, n, k - 1);
        let lhs = interior(&a, &w).unwrap().dot(&eta);
        let rhs = w.dot(&wedge(&a, &eta).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn trace_identities(w in (2usize..=7).prop_flat_map(|n| (0..=n).prop_flat_map(move |k| kvec_strategy(n, k))).no_shrink()) {
        let (n, k) = (w.dim(), w.degree());
        let mut sw = 0.0;
        let mut si = 0.0;
        for i in 0..n {
            let e = KVector::basis_covector(n, i);
            if k < n {
                sw += wedge(&e, &w).unwrap().norm_sq();
            }
            si += interior(&e, &w).unwrap().norm_sq();
        }
        prop_assert!((sw - (n - k) as f64 * w.norm_sq()).abs() < 1e-12);
        prop_assert!((si - k as f64 * w.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn projection_laws(t in (2usize..=6).prop_flat_map(|n| (1..n).prop_flat_map(move |k| vvf_strategy(n, k)))) {
        let (n, k) = (t.dim(), t.degree());
        let z = p1(&t).unwrap();
        let e = p2(&t).unwrap();
        // P_i Q_i = Id, Q_i isometric.
        prop_assert!(p1(&q1(&z)).unwrap().sub(&z).norm() < 1e-12);
        prop_assert!(p2(&q2(&e)).unwrap().sub(&e).norm() < 1e-12);
        prop_assert!((q1(&z).norm_sq() - z.norm_sq()).abs() < 1e-12);
        prop_assert!((q2(&e).norm_sq() - e.norm_sq()).abs() < 1e-12);
        // Q_i P_i idempotent and symmetric.
        let qp1 = |x: &VectorValuedKForm| q1(&p1(x).unwrap());
        let qp2 = |x: &VectorValuedKForm| q2(&p2(x).unwrap());
        prop_assert!(qp1(&qp1(&t)).sub(&qp1(&t)).norm_sq() < 1e-24);
        prop_assert!(qp2(&qp2(&t)).sub(&qp2(&t)).norm_sq() < 1e-24);
        let s = VectorValuedKForm::from_coeffs(n, k, t.coeffs().iter().rev().copied().collect()).unwrap();
        prop_assert!((qp1(&t).dot(&s) - t.dot(&qp1(&s))).abs() < 1e-12);
        prop_assert!((qp2(&t).dot(&s) - t.dot(&qp2(&s))).abs() < 1e-12);
        // Images orthogonal.
        prop_assert!(q1(&z).dot(&q2(&e)).abs() < 1e-12);
    }

    #[test]
    fn covariant_decomposition_is_orthogonal_and_exact(t in (2usize..=6).prop_flat_map(|n| (0..=n).prop_flat_map(move |k| vvf_strategy(n, k)))) {
        let (n, k) = (t.dim(), t.degree());
        let parts = decompose_covariant(&t);
        prop_assert!(parts.recombine().sub(&t).norm_sq() < 1e-24);
        let d2 = parts.d_part.as_ref().map_or(0.0, |d| d.norm_sq());
        let s2 = parts.dstar_part.as_ref().map_or(0.0, |d| d.norm_sq());
        let total = parts.t_part.norm_sq() + d2 / (k + 1) as f64 + s2 / (n - k + 1) as f64;
        prop_assert!((total - t.norm_sq()).abs() < 1e-12);
        if let Some(d) = &parts.d_part {
            prop_assert!(parts.t_part.dot(&q1(d)).abs() < 1e-12);
        }
        if let Some(ds) = &parts.dstar_part {
            prop_assert!(parts.t_part.dot(&q2(ds)).abs() < 1e-12);
        }
    }

    #[test]
    fn hodge_identities(seed in 0u64..1000, n in 2usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..n);
        let w = rand_kvec(&mut rng, n, k);
        let eta = rand_kvec(&mut rng, n, k);
        let a = rand_kvec(&mut rng, n, 1);
        let b = rand_kvec(&mut rng, n, 1);
        // ∗(ω∧α) = ι(α)∗ω
        let lhs = hodge_star(&wedge(&w, &a).unwrap(), 1.0);
        let rhs = interior(&a, &hodge_star(&w, 1.0)).unwrap();
        prop_assert!(lhs.sub(&rhs).norm() < 1e-12);
        // ⟨ι(α)ω, ι(β)η⟩ + ⟨ι(β)∗ω, ι(α)∗η⟩ = ⟨α,β⟩⟨ω,η⟩
        let t1 = interior(&a, &w).unwrap().dot(&interior(&b, &eta).unwrap());
        let t2 = interior(&b, &hodge_star(&w, 1.0)).unwrap().dot(&interior(&a, &hodge_star(&eta, 1.0)).unwrap());
        prop_assert!((t1 + t2 - a.dot(&b) * w.dot(&eta)).abs() < 1e-12);
    }

    #[test]
    fn antisymmetrized_norm_identity(seed in 0u64..1000, n in 1usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=n);
        let alphas: Vec<KVector> = (0..k).map(|_| rand_kvec(&mut rng, n, 1)).collect();
        let (l, r) = antisymmetrize_norm_identity(&alphas).unwrap();
        prop_assert!((l - r).abs() < 1e-12 * (1.0 + l.abs()));
    }

    #[test]
    fn j_map_norm_is_twice_form_norm(w in (2usize..=8).prop_flat_map(|n| kvec_strategy(n, 2))) {
        let j = j_map(&w).unwrap();
        prop_assert!((j.norm_sq() - 2.0 * w.norm_sq()).abs() < 1e-12);
    }
}

#[test]
fn compound_maps_wedges_of_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 1..=6 {
        for q in 0..=n {
            let t: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vs: Vec<KVector> = (0..q).map(|_| rand_kvec(&mut rng, n, 1)).collect();
            let images: Vec<KVector> = vs
                .iter()
                .map(|v| {
                    let c = (0..n).map(|i| (0..n).map(|j| t[i * n + j] * v.coeffs()[j]).sum()).collect();
                    KVector::from_coeffs(n, 1, c).unwrap()
                })
                .collect();
            let lhs = wedge_all(n, images.iter());
            let w = wedge_all(n, vs.iter());
            let c = compound(&t, n, q);
            let b = binomial(n, q);
            for r in 0..b {
                let v: f64 = (0..b).map(|s| c[r * b + s] * w.coeffs()[s]).sum();
                assert!((v - lhs.coeffs()[r]).abs() < 1e-12, "n={n} q={q}");
            }
        }
    }
}

#[test]
fn compound_is_multiplicative() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 5;
    let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ab: Vec<f64> = (0..n * n).map(|ij| (0..n).map(|k| a[ij / n * n + k] * b[k * n + ij % n]).sum()).collect();
    for q in 0..=n {
        let (ca, cb, cab) = (compound(&a, n, q), compound(&b, n, q), compound(&ab, n, q));
        let m = binomial(n, q);
        for r in 0..m {
            for s in 0..m {
                let v: f64 = (0..m).map(|k| ca[r * m + k] * cb[k * m + s]).sum();
                assert!((v - cab[r * m + s]).abs() < 1e-12);
            }
        }
    }
    assert!((compound(&a, n, n)[0] - determinant(&a, n)).abs() < 1e-14);
}
