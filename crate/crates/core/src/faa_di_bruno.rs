//! Faà di Bruno machinery: multi-indices, exact rational coefficients, and
//! derivative synthesis for composite functions.
//!
//! The n-th derivative of f(g(x)) expands over multi-indices α = (α₁,…,αₙ)
//! with Σ k·αₖ = n:
//!
//! ```text
//! dⁿ/dxⁿ f(g(x)) = Σ_α  n!/(α₁!·1!^α₁ ··· αₙ!·n!^αₙ) · f^(|α|)(g(x)) · Π (g^(k)(x))^αₖ
//! ```
//!
//! Coefficients are computed exactly in arbitrary-precision integers and
//! converted to `f64` once when the synthesis tables are built.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{KernelError, Result};

/// Largest composite-derivative order with a precomputed synthesis table.
pub const MAX_ORDER: usize = 24;

/// A multi-index α with Σ k·αₖ = n. `counts[k-1]` stores αₖ.
///
/// The empty multi-index (n = 0) has no parts and coefficient 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    counts: Vec<usize>,
}

impl MultiIndex {
    /// Builds a multi-index from part counts, trimming trailing zeros.
    pub fn new(counts: Vec<usize>) -> Self {
        let mut counts = counts;
        while counts.last() == Some(&0) {
            counts.pop();
        }
        MultiIndex { counts }
    }

    /// The derivative order n = Σ k·αₖ this index contributes to.
    pub fn order(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &a)| (i + 1) * a)
            .sum()
    }

    /// |α| = Σ αₖ, the order of the outer derivative it multiplies.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Part counts, `counts()[k-1]` = αₖ. Trailing zeros are trimmed.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

fn factorial(n: usize) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    acc
}

/// Exact Faà di Bruno coefficient n!/Π(αₖ!·(k!)^αₖ) for a multi-index.
pub fn faa_coefficient(alpha: &MultiIndex) -> BigInt {
    let n = alpha.order();
    let mut denom = BigInt::one();
    for (i, &a) in alpha.counts().iter().enumerate() {
        if a == 0 {
            continue;
        }
        denom *= factorial(a);
        let kfact = factorial(i + 1);
        for _ in 0..a {
            denom *= &kfact;
        }
    }
    let num = factorial(n);
    debug_assert!((&num % &denom).is_zero());
    num / denom
}

/// All multi-indices of order n, sorted by descending part-count vector
/// (so (3,0,0) precedes (1,1,0) precedes (0,0,1) at n = 3).
pub fn multi_indices(n: usize) -> Vec<MultiIndex> {
    if n == 0 {
        return vec![MultiIndex::new(vec![])];
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; n];
    fn rec(remaining: usize, max_part: usize, counts: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if remaining == 0 {
            out.push(MultiIndex::new(counts.clone()));
            return;
        }
        for part in (1..=max_part.min(remaining)).rev() {
            counts[part - 1] += 1;
            rec(remaining - part, part, counts, out);
            counts[part - 1] -= 1;
        }
    }
    rec(n, n, &mut counts, &mut out);
    out.sort_by(|a, b| {
        let pad = |m: &MultiIndex| {
            let mut v = m.counts().to_vec();
            v.resize(n, 0);
            v
        };
        pad(b).cmp(&pad(a))
    });
    out
}

/// The n-th Bell number, Σ_{α ∈ 𝒥ₙ} c_α.
pub fn bell_number(n: usize) -> BigInt {
    multi_indices(n)
        .iter()
        .map(faa_coefficient)
        .sum()
}

struct SynthTerm {
    coeff: f64,
    outer_order: usize,
    /// (part k, multiplicity αₖ) with αₖ > 0
    parts: Vec<(usize, u32)>,
}

struct SynthTable {
    /// terms[k] lists the expansion of the k-th derivative
    terms: Vec<Vec<SynthTerm>>,
}

fn synth_tables() -> &'static SynthTable {
    static TABLES: OnceLock<SynthTable> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut terms = Vec::with_capacity(MAX_ORDER + 1);
        for n in 0..=MAX_ORDER {
            let row = multi_indices(n)
                .into_iter()
                .map(|alpha| {
                    let coeff = faa_coefficient(&alpha)
                        .to_f64()
                        .expect("coefficient fits in f64");
                    let parts = alpha
                        .counts()
                        .iter()
                        .enumerate()
                        .filter(|&(_, &a)| a > 0)
                        .map(|(i, &a)| (i + 1, a as u32))
                        .collect();
                    SynthTerm {
                        coeff,
                        outer_order: alpha.total(),
                        parts,
                    }
                })
                .collect();
            terms.push(row);
        }
        SynthTable { terms }
    })
}

/// Derivatives of f∘g at a point, orders 0..=n.
///
/// `outer[m]` must hold f^(m) evaluated at g(x₀) for m ≤ n, and `inner[k]`
/// must hold g^(k)(x₀) for 1 ≤ k ≤ n (`inner[0]` is ignored).
pub fn composite_derivs(outer: &[f64], inner: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > MAX_ORDER {
        return Err(KernelError::UnsupportedOrder {
            requested: n,
            max: MAX_ORDER,
        });
    }
    if outer.len() < n + 1 || (n >= 1 && inner.len() < n + 1) {
        return Err(KernelError::Domain(format!(
            "composite_derivs: need outer[0..={n}] and inner[1..={n}], got lengths {} and {}",
            outer.len(),
            inner.len()
        )));
    }
    let tables = synth_tables();
    let mut out = Vec::with_capacity(n + 1);
    for row in &tables.terms[..=n] {
        let mut acc = 0.0;
        for term in row {
            let mut prod = term.coeff * outer[term.outer_order];
            for &(k, mult) in &term.parts {
                prod *= inner[k].powi(mult as i32);
            }
            acc += prod;
        }
        out.push(acc);
    }
    Ok(out)
}
