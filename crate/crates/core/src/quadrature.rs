//! Adaptive Gauss-Kronrod quadrature on finite intervals and the half line.
//!
//! The 7/15 pair gives a cheap per-panel error estimate (|K15 - G7|); panels
//! are bisected worst-first until the summed estimate meets the requested
//! tolerance or the panel budget runs out. Running out of budget is not an
//! error: the caller gets the best value found together with an honest
//! `err_estimate` and decides what to do with it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{KernelError, Result};

/// Values an integrand may produce. Panel arithmetic only needs a linear
/// structure plus a magnitude for tolerance accounting.
pub trait QuadValue: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, f: f64) -> Self;
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, f: f64) -> Self {
        self * f
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, f: f64) -> Self {
        self * f
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Positive Kronrod abscissae; every second entry is a Gauss-7 node.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOutcome<T> {
    pub value: T,
    pub err_estimate: f64,
    pub panels: usize,
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    err: f64,
}

struct PanelKey {
    err: f64,
    idx: usize,
}

impl PartialEq for PanelKey {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for PanelKey {}
impl PartialOrd for PanelKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PanelKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .partial_cmp(&other.err)
            .unwrap_or(Ordering::Equal)
    }
}

fn kronrod_panel<T: QuadValue>(f: &impl Fn(f64) -> T, a: f64, b: f64) -> Result<Panel<T>> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k15 = T::zero();
    let mut g7 = T::zero();
    for (i, &x) in XGK.iter().enumerate() {
        let (lo, hi) = (f(c - h * x), f(c + h * x));
        let pair = if x == 0.0 { lo } else { lo.add(hi) };
        if !pair.magnitude().is_finite() {
            return Err(KernelError::Numerical(format!(
                "integrand not finite near x = {}",
                c - h * x
            )));
        }
        k15 = k15.add(pair.scale(WGK[i]));
        if i % 2 == 1 {
            g7 = g7.add(pair.scale(WG[i / 2]));
        }
    }
    let value = k15.scale(h);
    let err = k15.add(g7.scale(-1.0)).magnitude() * h.abs();
    Ok(Panel { a, b, value, err })
}

fn run_refinement<T: QuadValue>(
    f: &impl Fn(f64) -> T,
    seeds: &[(f64, f64)],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Vec<Panel<T>>> {
    let mut panels = Vec::with_capacity(seeds.len());
    let mut heap = BinaryHeap::new();
    for &(a, b) in seeds {
        let p = kronrod_panel(f, a, b)?;
        heap.push(PanelKey {
            err: p.err,
            idx: panels.len(),
        });
        panels.push(p);
    }
    loop {
        let mut total = T::zero();
        let mut err = 0.0;
        let mut abs_mass = 0.0;
        for p in &panels {
            total = total.add(p.value);
            err += p.err;
            abs_mass += p.value.magnitude();
        }
        // The last term is the rounding floor: when panel values cancel
        // against each other, no refinement can place the sum closer to the
        // true integral than the rounding of the summation itself, so
        // tightening beyond it only burns panels.
        let tol = abs_tol
            .max(rel_tol * total.magnitude())
            .max(1e-15 * abs_mass);
        if err <= tol || panels.len() >= max_panels {
            return Ok(panels);
        }
        let Some(worst) = heap.pop() else {
            // every remaining panel is below f64 resolution; nothing to refine
            return Ok(panels);
        };
        let Panel { a, b, .. } = panels[worst.idx];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // interval no longer splittable in f64; freeze this panel
            continue;
        }
        let left = kronrod_panel(f, a, mid)?;
        let right = kronrod_panel(f, mid, b)?;
        heap.push(PanelKey {
            err: left.err,
            idx: worst.idx,
        });
        heap.push(PanelKey {
            err: right.err,
            idx: panels.len(),
        });
        panels[worst.idx] = left;
        panels.push(right);
    }
}

fn collect<T: QuadValue>(panels: &[Panel<T>]) -> QuadOutcome<T> {
    let mut value = T::zero();
    let mut err = 0.0;
    for p in panels {
        value = value.add(p.value);
        err += p.err;
    }
    QuadOutcome {
        value,
        err_estimate: err,
        panels: panels.len(),
    }
}

/// Adaptive integral of `f` over `[a, b]`.
///
/// Refinement stops once the summed panel error drops below
/// `max(abs_tol, rel_tol * |value|)`, the panel values' rounding floor is
/// reached, or `max_panels` panels exist. The budget case still returns
/// `Ok`; inspect `err_estimate`.
pub fn adaptive<T: QuadValue>(
    f: impl Fn(f64) -> T,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<QuadOutcome<T>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(KernelError::Domain("quadrature endpoints must be finite".into()));
    }
    if a == b {
        return Ok(QuadOutcome {
            value: T::zero(),
            err_estimate: 0.0,
            panels: 0,
        });
    }
    let panels = run_refinement(&f, &[(a, b)], rel_tol, abs_tol, max_panels)?;
    Ok(collect(&panels))
}

/// Adaptive integral over `[breaks[0], breaks[last]]` seeded with a panel
/// per consecutive pair, refined against one shared heap, reported as the
/// pair of partial integrals left and right of `split_at`.
///
/// One call instead of one per segment matters when the segments cancel:
/// the stopping rule then works against the cancelled total rather than
/// each segment's own (much larger) magnitude. Seed points also pin down
/// integrands whose support is narrow relative to the full range, which
/// bisection alone can overlook. `split_at` must be one of the breaks so
/// that no panel straddles it.
pub fn adaptive_split<T: QuadValue>(
    f: impl Fn(f64) -> T,
    breaks: &[f64],
    split_at: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(QuadOutcome<T>, QuadOutcome<T>)> {
    if breaks.len() < 2 {
        return Err(KernelError::Domain(
            "seeded quadrature needs at least two breakpoints".into(),
        ));
    }
    let mut seeds = Vec::with_capacity(breaks.len() - 1);
    for pair in breaks.windows(2) {
        if !(pair[0].is_finite() && pair[1].is_finite()) {
            return Err(KernelError::Domain("quadrature endpoints must be finite".into()));
        }
        if pair[1] <= pair[0] {
            return Err(KernelError::Domain(format!(
                "quadrature breakpoints must increase, got {} then {}",
                pair[0], pair[1]
            )));
        }
        seeds.push((pair[0], pair[1]));
    }
    let panels = run_refinement(&f, &seeds, rel_tol, abs_tol, max_panels)?;
    let (lo, hi): (Vec<_>, Vec<_>) = panels.iter().partition(|p| p.a < split_at);
    let fold = |side: Vec<&Panel<T>>| {
        let mut value = T::zero();
        let mut err = 0.0;
        let n = side.len();
        for p in side {
            value = value.add(p.value);
            err += p.err;
        }
        QuadOutcome {
            value,
            err_estimate: err,
            panels: n,
        }
    };
    Ok((fold(lo), fold(hi)))
}

/// Integral of `f` over `[a, cap]` treated as a half-line integral: windows
/// of geometrically growing width are appended until two consecutive windows
/// contribute less than 1% of the running tolerance, or `cap` is reached.
///
/// The integrand must decay; the window test is how that assumption is
/// checked at runtime.
pub fn adaptive_half_line<T: QuadValue>(
    f: impl Fn(f64) -> T,
    a: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
    cap: f64,
) -> Result<QuadOutcome<T>> {
    let mut total = T::zero();
    let mut err = 0.0;
    let mut panels = 0;
    let mut lo = a;
    let mut width = 4.0_f64;
    let mut quiet_windows = 0;
    while lo < cap && quiet_windows < 2 {
        let hi = (lo + width).min(cap);
        let budget = (max_panels.saturating_sub(panels)).max(8);
        let part = adaptive(&f, lo, hi, rel_tol, abs_tol, budget)?;
        total = total.add(part.value);
        err += part.err_estimate;
        panels += part.panels;
        let tol = abs_tol.max(rel_tol * total.magnitude());
        if part.value.magnitude() < 0.01 * tol {
            quiet_windows += 1;
        } else {
            quiet_windows = 0;
        }
        lo = hi;
        width *= 1.6;
    }
    Ok(QuadOutcome {
        value: total,
        err_estimate: err,
        panels,
    })
}
