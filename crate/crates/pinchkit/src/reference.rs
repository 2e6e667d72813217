//! Closed-form reference values: model spectra, the eigenvalue lower bounds,
//! the orientability constant `C₁(n, K, D)` and the pinching exponent ladder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::binomial;

#[derive(Debug, Error, PartialEq)]
pub enum ReferenceError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

type Result<T> = std::result::Result<T, ReferenceError>;

/// Distinct eigenvalues in increasing order with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    entries: Vec<(f64, usize)>,
}

/// Eigenvalues closer than this (relative) are merged.
const MERGE_TOL: f64 = 1e-12;

impl SpectrumTable {
    /// Sorts, merges equal eigenvalues and drops zero multiplicities.
    pub fn new(mut entries: Vec<(f64, usize)>) -> Result<Self> {
        if entries.iter().any(|(l, _)| !l.is_finite()) {
            return Err(ReferenceError::InvalidParams("non-finite eigenvalue".into()));
        }
        entries.retain(|&(_, m)| m > 0);
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, usize)> = Vec::with_capacity(entries.len());
        for (l, m) in entries {
            match merged.last_mut() {
                Some(last) if (l - last.0).abs() <= MERGE_TOL * (1.0 + l.abs()) => last.1 += m,
                _ => merged.push((l, m)),
            }
        }
        Ok(SpectrumTable { entries: merged })
    }

    /// The spectrum of a one-point space.
    pub fn point() -> Self {
        SpectrumTable { entries: vec![(0.0, 1)] }
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    /// Eigenvalues repeated by multiplicity, ascending.
    pub fn flattened(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|&(l, m)| std::iter::repeat_n(l, m)).collect()
    }

    /// First nonzero eigenvalue.
    pub fn first_positive(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.0).find(|&l| l > MERGE_TOL)
    }
}

/// Dimension of degree-`k` spherical harmonics on `S^n`.
pub fn harmonic_multiplicity(n: usize, k: usize) -> usize {
    let top = binomial(n + k, n);
    if k >= 2 {
        top - binomial(n + k - 2, n)
    } else {
        top
    }
}

/// Spectrum of the Laplacian on `S^n(r)`: `k(k+n−1)/r²` for degrees `0..=kmax`.
pub fn sphere_function_spectrum(n: usize, r: f64, kmax: usize) -> Result<SpectrumTable> {
    if n == 0 || !(r > 0.0) {
        return Err(ReferenceError::InvalidParams(format!("S^{n}({r})")));
    }
    SpectrumTable::new((0..=kmax).map(|k| ((k * (k + n - 1)) as f64 / (r * r), harmonic_multiplicity(n, k))).collect())
}

/// Spectrum of a Riemannian product: pairwise sums, multiplicities multiplied,
/// truncated to eigenvalues `≤ ceiling`. Truncation is exact below the ceiling
/// when both inputs are complete up to it.
pub fn product_spectrum(t1: &SpectrumTable, t2: &SpectrumTable, ceiling: f64) -> SpectrumTable {
    let mut out = Vec::new();
    for &(a, ma) in &t1.entries {
        for &(b, mb) in &t2.entries {
            if a + b <= ceiling * (1.0 + MERGE_TOL) {
                out.push((a + b, ma * mb));
            }
        }
    }
    SpectrumTable::new(out).expect("sums of finite values")
}

/// A bound value and whether `(n, p)` lies in the range where it is stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub in_range: bool,
}

/// Lower bounds for `λ₁` under `Ric ≥ (n−p−1)` with a parallel `p`-form
/// (Lichnerowicz and the improved bound), and under `Ric ≥ (n−1)` for Kähler and
/// quaternionic-Kähler manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lichnerowicz: BoundValue,
    pub grosjean: BoundValue,
    pub kahler: BoundValue,
    pub quaternionic: BoundValue,
}

pub fn bounds(n: usize, p: usize) -> Result<Bounds> {
    if n < 2 || p > n {
        return Err(ReferenceError::InvalidParams(format!("(n, p) = ({n}, {p})")));
    }
    let nf = n as f64;
    let pf = p as f64;
    let p_range = p >= 2 && 2 * p <= n;
    Ok(Bounds {
        lichnerowicz: BoundValue { value: nf * (nf - pf - 1.0) / (nf - 1.0), in_range: p_range },
        grosjean: BoundValue { value: nf - pf, in_range: p_range },
        kahler: BoundValue { value: 2.0 * (nf - 1.0), in_range: n.is_multiple_of(2) },
        quaternionic: BoundValue { value: (2.0 * nf + 8.0) / (nf + 8.0) * (nf - 1.0), in_range: n.is_multiple_of(4) },
    })
}

/// `C₁(n, K, D) = 1/((n−1) D² exp(1 + √(1 + 4(n−1) K D²)))`. The orientability
/// threshold evaluates it at twice the diameter bound.
pub fn c1_constant(n: usize, k: f64, d: f64) -> Result<f64> {
    if n < 2 || !(k >= 0.0) || !(d > 0.0) {
        return Err(ReferenceError::InvalidParams(format!("C₁({n}, {k}, {d})")));
    }
    let m = n as f64 - 1.0;
    Ok(1.0 / (m * d * d * (1.0 + (1.0 + 4.0 * m * k * d * d).sqrt()).exp()))
}

/// An exponent `1/denominator` of δ, kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactExponent {
    pub denominator: u128,
}

impl ExactExponent {
    pub fn value(self) -> f64 {
        1.0 / self.denominator as f64
    }

    /// `δ^{1/denominator}`, evaluated through logarithms.
    pub fn pow(self, delta: f64) -> f64 {
        (delta.ln() / self.denominator as f64).exp()
    }
}

/// The exponent ladder `η₀ = δ^{1/12000n³}`, `η₁ = η₀^{1/26}`, `η₂ = η₁^{1/78}`,
/// `L = η₂^{1/150}` and the rate `L^{1/156n}` of the approximation map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchingExponents {
    pub delta: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub l: f64,
    pub rate: f64,
    pub eta0_exp: ExactExponent,
    pub eta1_exp: ExactExponent,
    pub eta2_exp: ExactExponent,
    pub l_exp: ExactExponent,
    pub alpha_rate: ExactExponent,
}

pub fn pinching_exponents(delta: f64, n: usize) -> Result<PinchingExponents> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ReferenceError::InvalidParams(format!("δ = {delta} outside (0, 1]")));
    }
    if n < 5 {
        return Err(ReferenceError::InvalidParams(format!("n = {n} below 5")));
    }
    let n3 = (n as u128).pow(3);
    let e0 = ExactExponent { denominator: 12000 * n3 };
    let e1 = ExactExponent { denominator: e0.denominator * 26 };
    let e2 = ExactExponent { denominator: e1.denominator * 78 };
    let el = ExactExponent { denominator: e2.denominator * 150 };
    let rate = ExactExponent { denominator: el.denominator * 156 * n as u128 };
    Ok(PinchingExponents {
        delta,
        eta0: e0.pow(delta),
        eta1: e1.pow(delta),
        eta2: e2.pow(delta),
        l: el.pow(delta),
        rate: rate.pow(delta),
        eta0_exp: e0,
        eta1_exp: e1,
        eta2_exp: e2,
        l_exp: el,
        alpha_rate: rate,
    })
}

/// Number of independent `p`-forms in dimension `n`.
pub fn alpha_forms(n: usize, p: usize) -> Result<usize> {
    if p > n {
        return Err(ReferenceError::InvalidParams(format!("p = {p} > n = {n}")));
    }
    Ok(binomial(n, p))
}
