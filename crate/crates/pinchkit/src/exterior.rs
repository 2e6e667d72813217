//! Exterior algebra over a Euclidean space with an orthonormal coframe `e^1..e^n`.
//!
//! A k-vector is stored by its coefficients on the basis `e^I = e^{i_1}∧…∧e^{i_k}`,
//! `i_1 < … < i_k`, ordered by lexicographic rank of the multi-index. With this
//! basis orthonormal, the inner product of k-vectors is the Euclidean dot of the
//! coefficient vectors (the Gram-determinant convention).
//!
//! Slot indices are 0-based in the API: slot `i` is the covector `e^{i+1}`.

use std::sync::OnceLock;

use thiserror::Error;

/// Largest supported dimension. Bitmask tables are `2^MAX_DIM` long.
pub const MAX_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExteriorError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degree {k} out of range for dimension {n}")]
    DegreeOutOfRange { n: usize, k: usize },
    #[error("expected degree {expected}, got {got}")]
    WrongDegree { expected: usize, got: usize },
    #[error("dimension {0} exceeds the supported maximum")]
    DimensionTooLarge(usize),
    #[error("coefficient length {got} does not match C({n},{k}) = {expected}")]
    BadLength { n: usize, k: usize, expected: usize, got: usize },
    #[error("indices must be strictly increasing and below {0}")]
    BadIndices(usize),
}

/// Binomial coefficient; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Lexicographically ordered basis of `Λ^k` for one `(n, k)`.
#[derive(Debug)]
pub struct Basis {
    pub n: usize,
    pub k: usize,
    /// Bitmask of each basis element, in rank order.
    pub masks: Vec<u32>,
}

struct Tables {
    bases: Vec<Vec<Basis>>,
    /// `rank[n][mask]` for every mask of `n` bits (rank within its degree).
    rank: Vec<Vec<u32>>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut bases = Vec::with_capacity(MAX_DIM + 1);
        let mut rank = Vec::with_capacity(MAX_DIM + 1);
        for n in 0..=MAX_DIM {
            let mut per_k: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n + 1];
            // Lexicographic enumeration of subsets, grouped by size.
            fn rec(n: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
                out[cur.len()].push(cur.clone());
                for i in start..n {
                    cur.push(i);
                    rec(n, i + 1, cur, out);
                    cur.pop();
                }
            }
            rec(n, 0, &mut Vec::new(), &mut per_k);
            let mut r = vec![0u32; 1 << n];
            let mut bs = Vec::with_capacity(n + 1);
            for (k, mut subsets) in per_k.into_iter().enumerate() {
                subsets.sort();
                let masks: Vec<u32> = subsets.iter().map(|s| s.iter().fold(0u32, |m, &i| m | (1 << i))).collect();
                for (idx, &m) in masks.iter().enumerate() {
                    r[m as usize] = idx as u32;
                }
                bs.push(Basis { n, k, masks });
            }
            bases.push(bs);
            rank.push(r);
        }
        Tables { bases, rank }
    })
}

/// The basis table for `Λ^k(ℝ^n)`.
pub fn basis(n: usize, k: usize) -> &'static Basis {
    assert!(n <= MAX_DIM && k <= n, "basis({n},{k}) out of range");
    &tables().bases[n][k]
}

#[inline]
fn rank_of_mask(n: usize, mask: u32) -> usize {
    tables().rank[n][mask as usize] as usize
}

/// Sign of moving covector `i` in front of the product `e^J` (mask), i.e.
/// `(-1)^{#{j ∈ J : j < i}}`.
#[inline]
fn sign_before(mask: u32, i: usize) -> f64 {
    let below = mask & ((1u32 << i) - 1);
    if below.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Sign of `e^I ∧ e^J = sign · e^{I∪J}` for disjoint masks.
#[inline]
pub fn merge_sign(a: u32, b: u32) -> f64 {
    // Count pairs (i ∈ I, j ∈ J) with i > j.
    let mut inv = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        inv += (a >> (j + 1)).count_ones();
        bb &= bb - 1;
    }
    if inv.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Strictly increasing multi-index `i_1 < … < i_k` (0-based slots).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    n: usize,
    indices: Vec<usize>,
}

impl MultiIndex {
    pub fn new(n: usize, indices: Vec<usize>) -> Result<Self, ExteriorError> {
        if n > MAX_DIM {
            return Err(ExteriorError::DimensionTooLarge(n));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i >= n) {
            return Err(ExteriorError::BadIndices(n));
        }
        Ok(Self { n, indices })
    }

    pub fn from_rank(n: usize, k: usize, rank: usize) -> Self {
        let mask = basis(n, k).masks[rank];
        Self { n, indices: mask_indices(mask) }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn degree(&self) -> usize {
        self.indices.len()
    }

    pub fn mask(&self) -> u32 {
        self.indices.iter().fold(0, |m, &i| m | (1 << i))
    }

    /// Lexicographic rank among the `C(n,k)` multi-indices of the same length.
    pub fn rank(&self) -> usize {
        rank_of_mask(self.n, self.mask())
    }
}

fn mask_indices(mut m: u32) -> Vec<usize> {
    let mut v = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        v.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    v
}

/// An element of `Λ^k(ℝ^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KVector {
    n: usize,
    k: usize,
    coeffs: Vec<f64>,
}

impl KVector {
    pub fn zeros(n: usize, k: usize) -> Self {
        assert!(n <= MAX_DIM && k <= n, "KVector({n},{k}) out of range");
        Self { n, k, coeffs: vec![0.0; binomial(n, k)] }
    }

    pub fn from_coeffs(n: usize, k: usize, coeffs: Vec<f64>) -> Result<Self, ExteriorError> {
        if n > MAX_DIM {
            return Err(ExteriorError::DimensionTooLarge(n));
        }
        if k > n {
            return Err(ExteriorError::DegreeOutOfRange { n, k });
        }
        let expected = binomial(n, k);
        if coeffs.len() != expected {
            return Err(ExteriorError::BadLength { n, k, expected, got: coeffs.len() });
        }
        Ok(Self { n, k, coeffs })
    }

    pub fn scalar(n: usize, c: f64) -> Self {
        Self { n, k: 0, coeffs: vec![c] }
    }

    /// The covector `e^{i+1}`.
    pub fn basis_covector(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n, 1);
        v.coeffs[i] = 1.0;
        v
    }

    /// The basis element `e^I`.
    pub fn basis_element(idx: &MultiIndex) -> Self {
        let mut v = Self::zeros(idx.n, idx.degree());
        v.coeffs[idx.rank()] = 1.0;
        v
    }

    /// `e^1∧…∧e^n`.
    pub fn volume(n: usize) -> Self {
        Self { n, k: n, coeffs: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!((self.n, self.k), (other.n, other.k));
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.coeffs.iter_mut().for_each(|x| *x *= c);
        self
    }

    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        debug_assert_eq!((self.n, self.k), (other.n, other.k));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
    }

    pub fn add(mut self, other: &Self) -> Self {
        self.add_scaled(1.0, other);
        self
    }

    pub fn sub(mut self, other: &Self) -> Self {
        self.add_scaled(-1.0, other);
        self
    }
}

fn check_dims(a: &KVector, b: &KVector) -> Result<(), ExteriorError> {
    if a.n != b.n {
        return Err(ExteriorError::DimensionMismatch(a.n, b.n));
    }
    Ok(())
}

/// Exterior product `a ∧ b`.
pub fn wedge(a: &KVector, b: &KVector) -> Result<KVector, ExteriorError> {
    check_dims(a, b)?;
    let n = a.n;
    let k = a.k + b.k;
    if k > n {
        return Err(ExteriorError::DegreeOutOfRange { n, k });
    }
    let mut out = KVector::zeros(n, k);
    wedge_into(n, a.k, &a.coeffs, b.k, &b.coeffs, &mut out.coeffs);
    Ok(out)
}

/// Raw-slice exterior product, accumulating into `out` (degree `ka + kb`).
pub fn wedge_into(n: usize, ka: usize, a: &[f64], kb: usize, b: &[f64], out: &mut [f64]) {
    let ba = basis(n, ka);
    let bb = basis(n, kb);
    for (ia, &ma) in ba.masks.iter().enumerate() {
        let ca = a[ia];
        if ca == 0.0 {
            continue;
        }
        for (ib, &mb) in bb.masks.iter().enumerate() {
            if ma & mb != 0 {
                continue;
            }
            let cb = b[ib];
            if cb == 0.0 {
                continue;
            }
            out[rank_of_mask(n, ma | mb)] += merge_sign(ma, mb) * ca * cb;
        }
    }
}

/// `e^{i+1} ∧ ω`, accumulated with weight `c` into `out`.
pub fn covector_wedge_into(n: usize, i: usize, k: usize, omega: &[f64], c: f64, out: &mut [f64]) {
    let bit = 1u32 << i;
    for (r, &m) in basis(n, k).masks.iter().enumerate() {
        if m & bit != 0 || omega[r] == 0.0 {
            continue;
        }
        out[rank_of_mask(n, m | bit)] += c * sign_before(m, i) * omega[r];
    }
}

/// `ι(e_{i+1}) ω`, accumulated with weight `c` into `out`.
pub fn covector_interior_into(n: usize, i: usize, k: usize, omega: &[f64], c: f64, out: &mut [f64]) {
    if k == 0 {
        return;
    }
    let bit = 1u32 << i;
    for (r, &m) in basis(n, k).masks.iter().enumerate() {
        if m & bit == 0 || omega[r] == 0.0 {
            continue;
        }
        let rest = m & !bit;
        out[rank_of_mask(n, rest)] += c * sign_before(rest, i) * omega[r];
    }
}

/// Interior product `ι(α)ω`, the adjoint of `α ∧ ·`. Zero for `k = 0`.
pub fn interior(alpha: &KVector, omega: &KVector) -> Result<KVector, ExteriorError> {
    check_dims(alpha, omega)?;
    if alpha.k != 1 {
        return Err(ExteriorError::WrongDegree { expected: 1, got: alpha.k });
    }
    let n = omega.n;
    if omega.k == 0 {
        return Ok(KVector::zeros(n, 0));
    }
    let mut out = KVector::zeros(n, omega.k - 1);
    for i in 0..n {
        if alpha.coeffs[i] != 0.0 {
            covector_interior_into(n, i, omega.k, &omega.coeffs, alpha.coeffs[i], &mut out.coeffs);
        }
    }
    Ok(out)
}

/// Hodge star with `⟨∗ω, η⟩ vol = ω ∧ η`; `orientation` is `±1`.
pub fn hodge_star(omega: &KVector, orientation: f64) -> KVector {
    let n = omega.n;
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut out = KVector::zeros(n, n - omega.k);
    for (r, &m) in basis(n, omega.k).masks.iter().enumerate() {
        let c = omega.coeffs[r];
        if c == 0.0 {
            continue;
        }
        let comp = full & !m;
        out.coeffs[rank_of_mask(n, comp)] += orientation * merge_sign(m, comp) * c;
    }
    out
}

/// Element of `V ⊗ Λ^k V`: row `i` is the `Λ^k` coefficient vector paired with `e^{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorValuedKForm {
    n: usize,
    k: usize,
    coeffs: Vec<f64>,
}

impl VectorValuedKForm {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { n, k, coeffs: vec![0.0; n * binomial(n, k)] }
    }

    pub fn from_coeffs(n: usize, k: usize, coeffs: Vec<f64>) -> Result<Self, ExteriorError> {
        if k > n {
            return Err(ExteriorError::DegreeOutOfRange { n, k });
        }
        let expected = n * binomial(n, k);
        if coeffs.len() != expected {
            return Err(ExteriorError::BadLength { n, k, expected, got: coeffs.len() });
        }
        Ok(Self { n, k, coeffs })
    }

    /// `α ⊗ ω`.
    pub fn tensor(alpha: &KVector, omega: &KVector) -> Self {
        let mut t = Self::zeros(omega.n, omega.k);
        for i in 0..omega.n {
            t.add_to_slot(i, alpha.coeffs[i], &omega.coeffs);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        let b = binomial(self.n, self.k);
        &self.coeffs[i * b..(i + 1) * b]
    }

    pub fn slot_mut(&mut self, i: usize) -> &mut [f64] {
        let b = binomial(self.n, self.k);
        &mut self.coeffs[i * b..(i + 1) * b]
    }

    fn add_to_slot(&mut self, i: usize, c: f64, v: &[f64]) {
        for (a, b) in self.slot_mut(i).iter_mut().zip(v) {
            *a += c * b;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn add(mut self, other: &Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        self
    }

    pub fn sub(mut self, other: &Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        self
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.coeffs.iter_mut().for_each(|x| *x *= c);
        self
    }
}

/// `P₁(α⊗ω) = (k+1)^{-1/2} α∧ω`.
pub fn p1(t: &VectorValuedKForm) -> Option<KVector> {
    let (n, k) = (t.n, t.k);
    if k == n {
        return None;
    }
    let mut out = KVector::zeros(n, k + 1);
    let c = 1.0 / ((k + 1) as f64).sqrt();
    for i in 0..n {
        covector_wedge_into(n, i, k, t.slot(i), c, &mut out.coeffs);
    }
    Some(out)
}

/// `P₂(α⊗ω) = (n−k+1)^{-1/2} ι(α)ω`.
pub fn p2(t: &VectorValuedKForm) -> Option<KVector> {
    let (n, k) = (t.n, t.k);
    if k == 0 {
        return None;
    }
    let mut out = KVector::zeros(n, k - 1);
    let c = 1.0 / ((n - k + 1) as f64).sqrt();
    for i in 0..n {
        covector_interior_into(n, i, k, t.slot(i), c, &mut out.coeffs);
    }
    Some(out)
}

/// `Q₁(ζ) = (k+1)^{-1/2} Σ e^i ⊗ ι(e_i)ζ` for `ζ` of degree `k+1`.
pub fn q1(zeta: &KVector) -> VectorValuedKForm {
    let n = zeta.n;
    let k = zeta.k.checked_sub(1).expect("q1 needs degree ≥ 1");
    let mut t = VectorValuedKForm::zeros(n, k);
    let c = 1.0 / ((k + 1) as f64).sqrt();
    for i in 0..n {
        covector_interior_into(n, i, zeta.k, &zeta.coeffs, c, t.slot_mut(i));
    }
    t
}

/// `Q₂(η) = (n−k+1)^{-1/2} Σ e^i ⊗ e^i∧η` for `η` of degree `k−1`.
pub fn q2(eta: &KVector) -> VectorValuedKForm {
    let n = eta.n;
    let k = eta.k + 1;
    assert!(k <= n, "q2 needs degree < n");
    let mut t = VectorValuedKForm::zeros(n, k);
    let c = 1.0 / ((n - k + 1) as f64).sqrt();
    for i in 0..n {
        covector_wedge_into(n, i, eta.k, &eta.coeffs, c, t.slot_mut(i));
    }
    t
}

/// Orthogonal splitting of a covariant derivative `T ∈ V⊗Λ^k`.
#[derive(Debug, Clone)]
pub struct CovariantParts {
    /// Trace-free, skew-free part.
    pub t_part: VectorValuedKForm,
    /// `Σ e^i ∧ T_i`, the pointwise `dω`; `None` when `k = n`.
    pub d_part: Option<KVector>,
    /// `−Σ ι(e_i) T_i`, the pointwise `d*ω`; `None` when `k = 0`.
    pub dstar_part: Option<KVector>,
}

impl CovariantParts {
    /// Reassembles `t_part + (k+1)^{-1/2} Q₁(d) − (n−k+1)^{-1/2} Q₂(d*)`.
    pub fn recombine(&self) -> VectorValuedKForm {
        let n = self.t_part.n;
        let k = self.t_part.k;
        let mut t = self.t_part.clone();
        if let Some(d) = &self.d_part {
            t = t.add(&q1(d).scale(1.0 / ((k + 1) as f64).sqrt()));
        }
        if let Some(ds) = &self.dstar_part {
            t = t.sub(&q2(ds).scale(1.0 / ((n - k + 1) as f64).sqrt()));
        }
        t
    }
}

/// Split `T = t + (k+1)^{-1/2}Q₁(d) − (n−k+1)^{-1/2}Q₂(d*)`, with the three summands
/// mutually orthogonal.
pub fn decompose_covariant(t: &VectorValuedKForm) -> CovariantParts {
    let (n, k) = (t.n, t.k);
    let d_part = p1(t).map(|v| v.scale(((k + 1) as f64).sqrt()));
    let dstar_part = p2(t).map(|v| v.scale(-((n - k + 1) as f64).sqrt()));
    let mut rest = t.clone();
    if let Some(d) = &d_part {
        rest = rest.sub(&q1(d).scale(1.0 / ((k + 1) as f64).sqrt()));
    }
    if let Some(ds) = &dstar_part {
        rest = rest.add(&q2(ds).scale(1.0 / ((n - k + 1) as f64).sqrt()));
    }
    CovariantParts { t_part: rest, d_part, dstar_part }
}

/// Both sides of `k|α₁∧…∧α_k|² = |Σ(−1)^{i−1} α_i ⊗ α₁∧…α̂_i…∧α_k|²`.
pub fn antisymmetrize_norm_identity(alphas: &[KVector]) -> Result<(f64, f64), ExteriorError> {
    let k = alphas.len();
    assert!(k >= 1, "need at least one covector");
    let n = alphas[0].n;
    for a in alphas {
        check_dims(a, &alphas[0])?;
        if a.k != 1 {
            return Err(ExteriorError::WrongDegree { expected: 1, got: a.k });
        }
    }
    if k > n {
        return Err(ExteriorError::DegreeOutOfRange { n, k });
    }
    let full = wedge_all(n, alphas.iter());
    let lhs = k as f64 * full.norm_sq();
    let mut t = VectorValuedKForm::zeros(n, k - 1);
    for i in 0..k {
        let rest = wedge_all(n, alphas.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| a));
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        t = t.add(&VectorValuedKForm::tensor(&alphas[i], &rest).scale(sign));
    }
    Ok((lhs, t.norm_sq()))
}

/// `a₁ ∧ … ∧ a_m`; the empty product is the scalar 1.
pub fn wedge_all<'a>(n: usize, items: impl Iterator<Item = &'a KVector>) -> KVector {
    let mut acc = KVector::scalar(n, 1.0);
    for a in items {
        acc = wedge(&acc, a).expect("degree overflow in wedge_all");
    }
    acc
}

/// `m`-th exterior power of `ω`.
pub fn wedge_power(omega: &KVector, m: usize) -> Result<KVector, ExteriorError> {
    let mut acc = KVector::scalar(omega.n, 1.0);
    for _ in 0..m {
        acc = wedge(&acc, omega)?;
    }
    Ok(acc)
}

/// Scalar by which the curvature term of the Weitzenböck formula acts on `Λ^k`
/// for constant sectional curvature `kappa`.
pub fn curvature_endomorphism_constant_curvature(kappa: f64, n: usize, k: usize) -> f64 {
    assert!(k <= n, "degree above dimension");
    (k * (n - k)) as f64 * kappa
}

/// Antisymmetric `n×n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl AntisymMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, ExteriorError> {
        if entries.len() != n * n {
            return Err(ExteriorError::BadLength { n, k: 2, expected: n * n, got: entries.len() });
        }
        for i in 0..n {
            for j in 0..n {
                if (entries[i * n + j] + entries[j * n + i]).abs() > 1e-12 {
                    return Err(ExteriorError::BadIndices(n));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }

    /// `J u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * u[j]).sum()).collect()
    }

    /// `J²`, row-major.
    pub fn square(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * self.get(l, j);
                }
            }
        }
        out
    }
}

/// `J_ω` with `ω(u, v) = ⟨J_ω u, v⟩`.
pub fn j_map(omega: &KVector) -> Result<AntisymMatrix, ExteriorError> {
    if omega.k != 2 {
        return Err(ExteriorError::WrongDegree { expected: 2, got: omega.k });
    }
    let n = omega.n;
    let mut e = vec![0.0; n * n];
    for (r, &m) in basis(n, 2).masks.iter().enumerate() {
        let a = m.trailing_zeros() as usize;
        let b = (31 - m.leading_zeros()) as usize;
        // ω(e_a, e_b) = ω_ab = ⟨J e_a, e_b⟩ = J_{ba}.
        e[b * n + a] = omega.coeffs[r];
        e[a * n + b] = -omega.coeffs[r];
    }
    Ok(AntisymMatrix { n, entries: e })
}

/// Frobenius norm of `J² + Id`.
pub fn jj_plus_id_norm(j: &AntisymMatrix) -> f64 {
    let n = j.n;
    let mut s = j.square();
    for i in 0..n {
        s[i * n + i] += 1.0;
    }
    s.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Standard symplectic form `Σ e^{2i−1}∧e^{2i}` on `ℝ^{2m}`.
pub fn standard_symplectic(n: usize) -> KVector {
    assert!(n.is_multiple_of(2), "symplectic form needs even dimension");
    let mut w = KVector::zeros(n, 2);
    for i in 0..n / 2 {
        let idx = MultiIndex::new(n, vec![2 * i, 2 * i + 1]).unwrap();
        w.coeffs[idx.rank()] = 1.0;
    }
    w
}

/// Determinant of a row-major `m×m` matrix by Gaussian elimination with partial pivoting.
pub fn determinant(a: &[f64], m: usize) -> f64 {
    match m {
        0 => return 1.0,
        1 => return a[0],
        2 => return a[0] * a[3] - a[1] * a[2],
        _ => {}
    }
    let mut w = a.to_vec();
    let mut det = 1.0;
    for c in 0..m {
        let piv = (c..m).max_by(|&x, &y| w[x * m + c].abs().partial_cmp(&w[y * m + c].abs()).unwrap()).unwrap();
        if w[piv * m + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for k in 0..m {
                w.swap(c * m + k, piv * m + k);
            }
            det = -det;
        }
        let d = w[c * m + c];
        det *= d;
        for r in (c + 1)..m {
            let f = w[r * m + c] / d;
            if f != 0.0 {
                for k in c..m {
                    w[r * m + k] -= f * w[c * m + k];
                }
            }
        }
    }
    det
}

/// `q`-th compound of a row-major `n×n` matrix `t`: the matrix of `Λ^q t` on the
/// lexicographic basis, entry `(I, J) = det t[I, J]`. For orthogonal `t` this is
/// the induced map on `q`-forms.
pub fn compound(t: &[f64], n: usize, q: usize) -> Vec<f64> {
    let b = basis(n, q);
    let c = b.masks.len();
    let idx: Vec<Vec<usize>> = b.masks.iter().map(|&m| (0..n).filter(|&i| m >> i & 1 == 1).collect()).collect();
    let mut out = vec![0.0; c * c];
    let mut sub = vec![0.0; q * q];
    for (r, ri) in idx.iter().enumerate() {
        for (s, si) in idx.iter().enumerate() {
            for (a, &i) in ri.iter().enumerate() {
                for (bb, &j) in si.iter().enumerate() {
                    sub[a * q + bb] = t[i * n + j];
                }
            }
            out[r * c + s] = determinant(&sub, q);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_kvec(rng: &mut ChaCha8Rng, n: usize, k: usize) -> KVector {
        let c = (0..binomial(n, k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        KVector::from_coeffs(n, k, c).unwrap()
    }

    #[test]
    fn rank_is_lexicographic_bijection() {
        for n in 0..=7 {
            for k in 0..=n {
                let b = basis(n, k);
                assert_eq!(b.masks.len(), binomial(n, k));
                for r in 0..b.masks.len() {
                    let mi = MultiIndex::from_rank(n, k, r);
                    assert_eq!(mi.rank(), r);
                }
                let lists: Vec<Vec<usize>> = (0..b.masks.len()).map(|r| MultiIndex::from_rank(n, k, r).indices().to_vec()).collect();
                assert!(lists.windows(2).all(|w| w[0] < w[1]));
            }
        }
        assert_eq!(MultiIndex::new(4, vec![1, 2]).unwrap().rank(), 3);
    }

    #[test]
    fn multi_index_rejects_bad_input() {
        assert!(MultiIndex::new(4, vec![2, 1]).is_err());
        assert!(MultiIndex::new(4, vec![1, 1]).is_err());
        assert!(MultiIndex::new(4, vec![4]).is_err());
    }

    #[test]
    fn wedge_basis_and_antisymmetry() {
        let e1 = KVector::basis_covector(3, 0);
        let e2 = KVector::basis_covector(3, 1);
        let w = wedge(&e1, &e2).unwrap();
        assert_eq!(w.coeffs(), &[1.0, 0.0, 0.0]);
        let w21 = wedge(&e2, &e1).unwrap();
        assert_eq!(w21.coeffs(), &[-1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_kvec(&mut rng, 5, 1);
        assert!(wedge(&a, &a).unwrap().norm() < 1e-15);
    }

    #[test]
    fn wedge_degree_overflow_is_error() {
        let a = KVector::zeros(3, 2);
        assert!(matches!(wedge(&a, &a), Err(ExteriorError::DegreeOutOfRange { .. })));
        let b = KVector::zeros(4, 1);
        assert!(matches!(wedge(&a, &b), Err(ExteriorError::DimensionMismatch(3, 4))));
    }

    #[test]
    fn interior_basis_and_zero_degree() {
        let e1 = KVector::basis_covector(3, 0);
        let e12 = wedge(&e1, &KVector::basis_covector(3, 1)).unwrap();
        let r = interior(&e1, &e12).unwrap();
        assert_eq!(r, KVector::basis_covector(3, 1));
        let s = interior(&e1, &KVector::scalar(3, 2.0)).unwrap();
        assert_eq!(s.degree(), 0);
        assert_eq!(s.coeffs(), &[0.0]);
    }

    #[test]
    fn hodge_star_basis_and_involution() {
        let e12 = wedge(&KVector::basis_covector(3, 0), &KVector::basis_covector(3, 1)).unwrap();
        assert_eq!(hodge_star(&e12, 1.0), KVector::basis_covector(3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=7 {
            for k in 0..=n {
                let w = rand_kvec(&mut rng, n, k);
                let ss = hodge_star(&hodge_star(&w, 1.0), 1.0);
                let sign = if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 };
                assert!(ss.sub(&w.clone().scale(sign)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn symplectic_j_squares_to_minus_identity() {
        for n in [2, 4, 6, 8] {
            let j = j_map(&standard_symplectic(n)).unwrap();
            assert_eq!(jj_plus_id_norm(&j), 0.0);
            let p = wedge_power(&standard_symplectic(n), n / 2).unwrap();
            let fact: f64 = (1..=n / 2).map(|i| i as f64).product();
            assert_abs_diff_eq!(p.norm(), fact, epsilon = 1e-12);
        }
        let j0 = j_map(&KVector::zeros(5, 2)).unwrap();
        assert_abs_diff_eq!(jj_plus_id_norm(&j0), 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn j_map_pairs_with_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let w = rand_kvec(&mut rng, n, 2);
        let j = j_map(&w).unwrap();
        assert_abs_diff_eq!(j.norm_sq(), 2.0 * w.norm_sq(), epsilon = 1e-12);
        let u = rand_kvec(&mut rng, n, 1);
        let v = rand_kvec(&mut rng, n, 1);
        // ω(u,v) = ι(v)ι(u)ω.
        let wuv = interior(&v, &interior(&u, &w).unwrap()).unwrap().coeffs()[0];
        let ju = j.apply(u.coeffs());
        let juv: f64 = ju.iter().zip(v.coeffs()).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(wuv, juv, epsilon = 1e-12);
    }

    #[test]
    fn antisym_matrix_validates() {
        assert!(AntisymMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_err());
        assert!(AntisymMatrix::new(2, vec![0.0, 1.0, -1.0, 0.0]).is_ok());
    }

    #[test]
    fn antisymmetrize_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_kvec(&mut rng, 4, 1);
        let (l, r) = antisymmetrize_norm_identity(std::slice::from_ref(&a)).unwrap();
        assert_abs_diff_eq!(l, a.norm_sq(), epsilon = 1e-14);
        assert_abs_diff_eq!(r, a.norm_sq(), epsilon = 1e-14);
        let e = [KVector::basis_covector(4, 0), KVector::basis_covector(4, 2)];
        let (l, r) = antisymmetrize_norm_identity(&e).unwrap();
        assert_eq!((l, r), (2.0, 2.0));
    }

    #[test]
    fn curvature_scalar_edge_cases() {
        assert_eq!(curvature_endomorphism_constant_curvature(1.0, 5, 0), 0.0);
        assert_eq!(curvature_endomorphism_constant_curvature(1.0, 5, 1), 4.0);
        assert_eq!(curvature_endomorphism_constant_curvature(1.0, 4, 2), 4.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(7, 3), 35);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
    }
}
