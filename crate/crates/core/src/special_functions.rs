//! Derivative families for the squared geodesic distance and the oscillatory
//! correction factors that enter the heat-kernel expansions, plus the
//! cancellation-safe combined exponent used by the half-line quadrature.
//!
//! Away from the branch point x = 1 every family is evaluated through exact
//! rational recurrence polynomials (built once, then evaluated by Horner).
//! Near x = 1 the `(1 - x^2)^(2n-1)/2` denominators destroy precision, so
//! evaluation switches to entire-series forms in the squared distance.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{KernelError, Result};
use crate::faa_di_bruno::composite_derivs;

pub const DEFAULT_MAX_ORDER: usize = 16;
pub const DEFAULT_NEAR_ONE_THRESHOLD: f64 = 1e-3;

/// Recurrence tables are generated one order past `DEFAULT_MAX_ORDER` so the
/// exponential chain in the radial kernel can ask for one extra derivative.
const TABLE_ORDER_CAP: usize = 18;
const SERIES_EXTRA: usize = 8;
const GEODESIC_SERIES_CAP: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    AcosSq,
    AcoshSq,
    CoshKAcos,
    CosKAcosh,
    SinhcKAcos,
    SincKAcosh,
}

impl FamilyKind {
    pub fn uses_k(self) -> bool {
        !matches!(self, FamilyKind::AcosSq | FamilyKind::AcoshSq)
    }

    pub fn is_trig(self) -> bool {
        matches!(
            self,
            FamilyKind::AcosSq | FamilyKind::CoshKAcos | FamilyKind::SinhcKAcos
        )
    }
}

#[derive(Clone, Debug)]
pub struct DerivFamily {
    pub kind: FamilyKind,
    pub k: f64,
    pub max_order: usize,
    pub near_one_threshold: f64,
    pub series_order: usize,
}

impl DerivFamily {
    pub fn new(kind: FamilyKind, k: f64) -> Result<Self> {
        if kind.uses_k() && !(k > 0.0 && k.is_finite()) {
            return Err(KernelError::Domain(format!(
                "frequency K must be positive and finite, got {k}"
            )));
        }
        Ok(DerivFamily {
            kind,
            k: if kind.uses_k() { k } else { 1.0 },
            max_order: DEFAULT_MAX_ORDER,
            near_one_threshold: DEFAULT_NEAR_ONE_THRESHOLD,
            series_order: DEFAULT_MAX_ORDER + SERIES_EXTRA,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.near_one_threshold > 0.0 && self.near_one_threshold <= 0.1) {
            return Err(KernelError::Domain(format!(
                "near_one_threshold must lie in (0, 0.1], got {}",
                self.near_one_threshold
            )));
        }
        if self.series_order < self.max_order + 4 {
            return Err(KernelError::Domain(format!(
                "series_order {} must be at least max_order + 4 = {}",
                self.series_order,
                self.max_order + 4
            )));
        }
        if self.max_order > TABLE_ORDER_CAP {
            return Err(KernelError::UnsupportedOrder {
                requested: self.max_order,
                max: TABLE_ORDER_CAP,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Exact bivariate polynomials in (x, K).
// ---------------------------------------------------------------------------

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Dense polynomial in x and K with exact rational coefficients.
/// `c[i][j]` is the coefficient of x^i K^j; the K direction stays at j = 0
/// for the squared-distance families.
#[derive(Clone, Debug, PartialEq, Eq)]
struct XkPoly {
    c: Vec<Vec<BigRational>>,
}

impl XkPoly {
    fn zero() -> Self {
        XkPoly { c: Vec::new() }
    }

    fn constant(v: i64) -> Self {
        if v == 0 {
            return Self::zero();
        }
        XkPoly {
            c: vec![vec![rat(v)]],
        }
    }

    /// v * K
    fn k_times(v: i64) -> Self {
        XkPoly {
            c: vec![vec![rat(0), rat(v)]],
        }
    }

    fn trim(&mut self) {
        for row in &mut self.c {
            while row.last().map_or(false, |r| r.is_zero()) {
                row.pop();
            }
        }
        while self.c.last().map_or(false, |row| row.is_empty()) {
            self.c.pop();
        }
    }

    fn add(&self, other: &Self) -> Self {
        let ni = self.c.len().max(other.c.len());
        let mut c = Vec::with_capacity(ni);
        for i in 0..ni {
            let a = self.c.get(i).map(Vec::as_slice).unwrap_or(&[]);
            let b = other.c.get(i).map(Vec::as_slice).unwrap_or(&[]);
            let nj = a.len().max(b.len());
            let mut row = Vec::with_capacity(nj);
            for j in 0..nj {
                let mut v = a.get(j).cloned().unwrap_or_else(|| rat(0));
                if let Some(w) = b.get(j) {
                    v += w;
                }
                row.push(v);
            }
            c.push(row);
        }
        let mut out = XkPoly { c };
        out.trim();
        out
    }

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_i64(-1))
    }

    fn scale_i64(&self, s: i64) -> Self {
        let f = rat(s);
        let c = self
            .c
            .iter()
            .map(|row| row.iter().map(|v| v * &f).collect())
            .collect();
        let mut out = XkPoly { c };
        out.trim();
        out
    }

    /// d/dx
    fn dx(&self) -> Self {
        if self.c.len() <= 1 {
            return Self::zero();
        }
        let mut c = Vec::with_capacity(self.c.len() - 1);
        for i in 1..self.c.len() {
            let f = rat(i as i64);
            c.push(self.c[i].iter().map(|v| v * &f).collect());
        }
        let mut out = XkPoly { c };
        out.trim();
        out
    }

    fn mul_x(&self) -> Self {
        if self.c.is_empty() {
            return Self::zero();
        }
        let mut c = Vec::with_capacity(self.c.len() + 1);
        c.push(Vec::new());
        c.extend(self.c.iter().cloned());
        XkPoly { c }
    }

    fn mul_x2(&self) -> Self {
        self.mul_x().mul_x()
    }

    fn mul_k(&self) -> Self {
        let c = self
            .c
            .iter()
            .map(|row| {
                if row.is_empty() {
                    Vec::new()
                } else {
                    let mut r = Vec::with_capacity(row.len() + 1);
                    r.push(rat(0));
                    r.extend(row.iter().cloned());
                    r
                }
            })
            .collect();
        XkPoly { c }
    }

    #[allow(dead_code)]
    fn mul_k2(&self) -> Self {
        self.mul_k().mul_k()
    }

    #[allow(dead_code)]
    fn is_zero(&self) -> bool {
        self.c.iter().all(|row| row.iter().all(|v| v.is_zero()))
    }

    #[allow(dead_code)]
    fn deg_x(&self) -> Option<usize> {
        if self.c.is_empty() {
            None
        } else {
            Some(self.c.len() - 1)
        }
    }

    fn to_f64(&self) -> Vec<Vec<f64>> {
        self.c
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| {
                        let n = v.numer().to_f64().unwrap_or(f64::NAN);
                        let d = v.denom().to_f64().unwrap_or(f64::NAN);
                        n / d
                    })
                    .collect()
            })
            .collect()
    }

    fn to_f64_abs(&self) -> Vec<Vec<f64>> {
        self.to_f64()
            .into_iter()
            .map(|row| row.into_iter().map(f64::abs).collect())
            .collect()
    }
}

fn eval_xk(cf: &[Vec<f64>], x: f64, k: f64) -> f64 {
    let mut acc = 0.0;
    for row in cf.iter().rev() {
        let mut inner = 0.0;
        for v in row.iter().rev() {
            inner = inner * k + v;
        }
        acc = acc * x + inner;
    }
    acc
}

// ---------------------------------------------------------------------------
// Recurrence tables.
// ---------------------------------------------------------------------------

/// Exact recurrence polynomials for the four closed-form derivative families,
/// together with f64 mirrors used in evaluation.
///
/// With w = sqrt(1 - x^2), a = arccos x (and hats for the x >= 1 branch):
///   d^n/dx^n arccos^2 x          = (p_n w + q_n a) / w^(2n-1)
///   d^n/dx^n arccosh^2 x         = (ph_n wh + qh_n ah) / wh^(2n-1)
///   d^n/dx^n cosh(K arccos x)    = (A_n w cosh(Ka) + B_n sinh(Ka)) / w^(2n-1)
///   d^n/dx^n cos(K arccosh x)    = (Ah_n wh cos(K ah) + Bh_n sin(K ah)) / wh^(2n-1)
/// The same (A_n, B_n) serve sinh(K arccos x) with the cosh/sinh roles swapped.
pub struct RecurrencePolys {
    #[allow(dead_code)]
    acos_sq: Vec<(XkPoly, XkPoly)>,
    #[allow(dead_code)]
    acosh_sq: Vec<(XkPoly, XkPoly)>,
    #[allow(dead_code)]
    cosh_trig: Vec<(XkPoly, XkPoly)>,
    #[allow(dead_code)]
    cos_hyp: Vec<(XkPoly, XkPoly)>,
    acos_sq_f: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    acosh_sq_f: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    cosh_trig_f: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    cos_hyp_f: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    acos_sq_fabs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    acosh_sq_fabs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    cosh_trig_fabs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    cos_hyp_fabs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

impl RecurrencePolys {
    pub fn order_cap(&self) -> usize {
        TABLE_ORDER_CAP
    }

    fn build() -> Self {
        let cap = TABLE_ORDER_CAP;
        let mut acos_sq = Vec::with_capacity(cap);
        let mut acosh_sq = Vec::with_capacity(cap);
        let mut cosh_trig = Vec::with_capacity(cap);
        let mut cos_hyp = Vec::with_capacity(cap);

        acos_sq.push((XkPoly::zero(), XkPoly::constant(-2)));
        acosh_sq.push((XkPoly::zero(), XkPoly::constant(2)));
        cosh_trig.push((XkPoly::zero(), XkPoly::k_times(-1)));
        cos_hyp.push((XkPoly::zero(), XkPoly::k_times(-1)));

        for n in 1..cap {
            let m = n as i64;
            {
                // p' (1-x^2) + (2n-2) x p - q ; q' (1-x^2) + (2n-1) x q
                let (p, q) = &acos_sq[n - 1];
                let pn = p
                    .dx()
                    .sub(&p.dx().mul_x2())
                    .add(&p.mul_x().scale_i64(2 * m - 2))
                    .sub(q);
                let qn = q
                    .dx()
                    .sub(&q.dx().mul_x2())
                    .add(&q.mul_x().scale_i64(2 * m - 1));
                acos_sq.push((pn, qn));
            }
            {
                // p' (x^2-1) - (2n-2) x p + q ; q' (x^2-1) - (2n-1) x q
                let (p, q) = &acosh_sq[n - 1];
                let pn = p
                    .dx()
                    .mul_x2()
                    .sub(&p.dx())
                    .sub(&p.mul_x().scale_i64(2 * m - 2))
                    .add(q);
                let qn = q
                    .dx()
                    .mul_x2()
                    .sub(&q.dx())
                    .sub(&q.mul_x().scale_i64(2 * m - 1));
                acosh_sq.push((pn, qn));
            }
            {
                // A' (1-x^2) + (2n-2) x A - K B ; (B' - K A)(1-x^2) + (2n-1) x B
                let (a, b) = &cosh_trig[n - 1];
                let an = a
                    .dx()
                    .sub(&a.dx().mul_x2())
                    .add(&a.mul_x().scale_i64(2 * m - 2))
                    .sub(&b.mul_k());
                let inner = b.dx().sub(&a.mul_k());
                let bn = inner
                    .sub(&inner.mul_x2())
                    .add(&b.mul_x().scale_i64(2 * m - 1));
                cosh_trig.push((an, bn));
            }
            {
                // A' (x^2-1) - (2n-2) x A + K B ; (B' - K A)(x^2-1) - (2n-1) x B
                let (a, b) = &cos_hyp[n - 1];
                let an = a
                    .dx()
                    .mul_x2()
                    .sub(&a.dx())
                    .sub(&a.mul_x().scale_i64(2 * m - 2))
                    .add(&b.mul_k());
                let inner = b.dx().sub(&a.mul_k());
                let bn = inner
                    .mul_x2()
                    .sub(&inner)
                    .sub(&b.mul_x().scale_i64(2 * m - 1));
                cos_hyp.push((an, bn));
            }
        }

        let mirror = |v: &Vec<(XkPoly, XkPoly)>| {
            v.iter()
                .map(|(a, b)| (a.to_f64(), b.to_f64()))
                .collect::<Vec<_>>()
        };
        let mirror_abs = |v: &Vec<(XkPoly, XkPoly)>| {
            v.iter()
                .map(|(a, b)| (a.to_f64_abs(), b.to_f64_abs()))
                .collect::<Vec<_>>()
        };
        let acos_sq_f = mirror(&acos_sq);
        let acosh_sq_f = mirror(&acosh_sq);
        let cosh_trig_f = mirror(&cosh_trig);
        let cos_hyp_f = mirror(&cos_hyp);
        let acos_sq_fabs = mirror_abs(&acos_sq);
        let acosh_sq_fabs = mirror_abs(&acosh_sq);
        let cosh_trig_fabs = mirror_abs(&cosh_trig);
        let cos_hyp_fabs = mirror_abs(&cos_hyp);
        RecurrencePolys {
            acos_sq,
            acosh_sq,
            cosh_trig,
            cos_hyp,
            acos_sq_f,
            acosh_sq_f,
            cosh_trig_f,
            cos_hyp_f,
            acos_sq_fabs,
            acosh_sq_fabs,
            cosh_trig_fabs,
            cos_hyp_fabs,
        }
    }
}

pub fn recurrence_polys() -> &'static RecurrencePolys {
    static TABLES: OnceLock<RecurrencePolys> = OnceLock::new();
    TABLES.get_or_init(RecurrencePolys::build)
}

// ---------------------------------------------------------------------------
// Series for the squared geodesic distance near x = 1.
// ---------------------------------------------------------------------------

/// Coefficients of arccos^2(1-u) = sum c_n u^n; arccosh^2(1+u) flips signs
/// to (-1)^(n-1) c_n u^n. c_1 = 2 and c_{m+1} = m^2 c_m / ((m+1)(2m+1)).
fn geodesic_series() -> &'static [f64] {
    static COEFFS: OnceLock<Vec<f64>> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let mut c = vec![0.0; GEODESIC_SERIES_CAP + 1];
        c[1] = 2.0;
        for m in 1..GEODESIC_SERIES_CAP {
            let mf = m as f64;
            c[m + 1] = c[m] * mf * mf / ((mf + 1.0) * (2.0 * mf + 1.0));
        }
        c
    })
}

/// Derivatives of arccos^2 x at x = 1 - u via the series, valid |u| small.
/// `hyp_signs` selects arccosh^2(1+u) instead, with u = x - 1.
fn geodesic_series_derivs(u: f64, n_max: usize, series_order: usize, hyp: bool) -> Vec<f64> {
    let c = geodesic_series();
    let cap = series_order.min(GEODESIC_SERIES_CAP);
    let mut out = vec![0.0; n_max + 1];
    for k in 0..=n_max {
        let mut acc = 0.0;
        let mut upow = if k == 0 { u } else { 1.0 };
        for n in k.max(1)..=cap {
            let mut ff = 1.0;
            for j in 0..k {
                ff *= (n - j) as f64;
            }
            let sign = if hyp {
                if (n - 1) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else if k % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc += sign * c[n] * ff * upow;
            upow *= u;
        }
        out[k] = acc;
    }
    out
}

/// How much numerator cancellation the direct route may suffer before the
/// evaluation switches to the series form (4 lost digits keeps the result
/// near 1e-12 relative).
const CANCEL_LIMIT: f64 = 1e4;
/// The geodesic jets feed every kernel derivative, so they reroute much
/// earlier; their fallback series is essentially exact on its radius.
const GEODESIC_CANCEL_LIMIT: f64 = 1e2;
const SERIES_RADIUS: f64 = 0.5;

fn acos_sq_direct(x: f64, n_max: usize) -> (Vec<f64>, bool) {
    let tables = recurrence_polys();
    let a = x.acos();
    let w2 = (1.0 - x) * (1.0 + x);
    let w = w2.sqrt();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(a * a);
    let mut healthy = true;
    let mut denom = w;
    for n in 1..=n_max {
        let (pf, qf) = &tables.acos_sq_f[n - 1];
        let num = eval_xk(pf, x, 1.0) * w + eval_xk(qf, x, 1.0) * a;
        let (pa, qa) = &tables.acos_sq_fabs[n - 1];
        let scale = eval_xk(pa, x.abs(), 1.0) * w + eval_xk(qa, x.abs(), 1.0) * a;
        if num.abs() * GEODESIC_CANCEL_LIMIT < scale {
            healthy = false;
        }
        out.push(num / denom);
        denom *= w2;
    }
    (out, healthy)
}

fn acosh_sq_direct(x: f64, n_max: usize) -> (Vec<f64>, bool) {
    let tables = recurrence_polys();
    let a = x.acosh();
    let w2 = (x - 1.0) * (x + 1.0);
    let w = w2.sqrt();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(a * a);
    let mut healthy = true;
    let mut denom = w;
    for n in 1..=n_max {
        let (pf, qf) = &tables.acosh_sq_f[n - 1];
        let num = eval_xk(pf, x, 1.0) * w + eval_xk(qf, x, 1.0) * a;
        let (pa, qa) = &tables.acosh_sq_fabs[n - 1];
        let scale = eval_xk(pa, x, 1.0) * w + eval_xk(qa, x, 1.0) * a;
        if num.abs() * GEODESIC_CANCEL_LIMIT < scale {
            healthy = false;
        }
        out.push(num / denom);
        denom *= w2;
    }
    (out, healthy)
}

fn check_order(n_max: usize) -> Result<()> {
    if n_max > TABLE_ORDER_CAP {
        return Err(KernelError::UnsupportedOrder {
            requested: n_max,
            max: TABLE_ORDER_CAP,
        });
    }
    Ok(())
}

/// Derivatives d^k/dx^k arccos^2 x for k = 0..=n_max, |x| <= 1.
pub fn acos_sq_derivs(x: f64, n_max: usize) -> Result<Vec<f64>> {
    check_order(n_max)?;
    if !(-1.0..=1.0).contains(&x) {
        return Err(KernelError::Domain(format!(
            "arccos^2 derivatives need |x| <= 1, got {x}"
        )));
    }
    Ok(acos_sq_eval(
        x,
        n_max,
        DEFAULT_NEAR_ONE_THRESHOLD,
        n_max + SERIES_EXTRA,
    ))
}

/// Derivatives d^k/dx^k arccosh^2 x for k = 0..=n_max, x >= 1.
pub fn acosh_sq_derivs(x: f64, n_max: usize) -> Result<Vec<f64>> {
    check_order(n_max)?;
    if !(x >= 1.0) {
        return Err(KernelError::Domain(format!(
            "arccosh^2 derivatives need x >= 1, got {x}"
        )));
    }
    Ok(acosh_sq_eval(
        x,
        n_max,
        DEFAULT_NEAR_ONE_THRESHOLD,
        n_max + SERIES_EXTRA,
    ))
}

/// Derivatives of the analytic continuation s(x) with s = arccos^2 x for
/// x <= 1 and s = -arccosh^2 x for x >= 1. This is the exponent driving both
/// kernel branches; it is analytic across x = 1.
pub fn geodesic_sq_derivs(x: f64, n_max: usize) -> Result<Vec<f64>> {
    check_order(n_max)?;
    if !(x > -1.0) {
        return Err(KernelError::Domain(format!(
            "geodesic exponent needs x > -1, got {x}"
        )));
    }
    if x <= 1.0 {
        acos_sq_derivs(x, n_max)
    } else {
        let mut v = acosh_sq_derivs(x, n_max)?;
        for t in &mut v {
            *t = -*t;
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Entire-series helpers: derivatives of cosh(sqrt(y)), sinh(sqrt(y))/sqrt(y)
// and the cos/sin counterparts (argument -y).
// ---------------------------------------------------------------------------

/// m-th term family: S_m(y) = sum_i (y/2)^i / (i! (2m + 2i + d)!!) with
/// d = +1 (odd, the sinh/sin-over-argument family) or d = -1 (even, cosh/cos).
/// Works for negative y (alternating series); callers bound |y| so the
/// cancellation stays mild.
fn sqrt_series_terms(y: f64, m: usize, odd: bool) -> f64 {
    let base = 2 * m as i64 + if odd { 1 } else { -1 };
    let mut lead = 1.0;
    let mut j = base;
    while j > 1 {
        lead /= j as f64;
        j -= 2;
    }
    let mut term = lead;
    let mut sum = term;
    let mut i = 0usize;
    loop {
        let i1 = (i + 1) as f64;
        let next_f = base as f64 + 2.0 * i1;
        term *= (y / 2.0) / (i1 * next_f);
        sum += term;
        i += 1;
        if term.abs() < sum.abs() * 1e-18 + 1e-300 || i > 600 {
            break;
        }
    }
    sum
}

/// Derivatives d^m/dy^m cosh(sqrt(y)) for y >= 0, m = 0..=m_max.
fn cosh_sqrt_derivs(y: f64, m_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max + 1);
    let mut half_pow = 1.0;
    for m in 0..=m_max {
        out.push(half_pow * sqrt_series_terms(y, m, false));
        half_pow *= 0.5;
    }
    out
}

/// Derivatives d^m/dy^m cos(sqrt(y)) for y >= 0 (small), m = 0..=m_max.
fn cos_sqrt_derivs(y: f64, m_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max + 1);
    let mut half_pow = 1.0;
    for m in 0..=m_max {
        out.push(half_pow * sqrt_series_terms(-y, m, false));
        half_pow *= -0.5;
    }
    out
}

/// Derivatives d^m/dy^m sinh(sqrt(y))/sqrt(y) for y >= 0, m = 0..=m_max.
fn sinhc_sqrt_derivs(y: f64, m_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max + 1);
    let mut half_pow = 1.0;
    for m in 0..=m_max {
        out.push(half_pow * sqrt_series_terms(y, m, true));
        half_pow *= 0.5;
    }
    out
}

/// Scaled spherical Bessel values j_m(v)/v^m by upward recurrence, stable for
/// v noticeably above m_max.
fn spherical_j_scaled(v: f64, m_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max + 1);
    let (s, c) = v.sin_cos();
    out.push(s / v);
    if m_max == 0 {
        return out;
    }
    out.push((s - v * c) / (v * v * v));
    for m in 1..m_max {
        let prev = out[m - 1];
        let cur = out[m];
        out.push(((2 * m + 1) as f64 * cur - prev) / (v * v));
    }
    out
}

/// Derivatives d^m/dy^m sin(sqrt(y))/sqrt(y) for y >= 0, m = 0..=m_max.
fn sinc_sqrt_derivs(y: f64, m_max: usize) -> Vec<f64> {
    let v = y.sqrt();
    if v >= (m_max as f64) + 2.0 && v >= 2.0 {
        let j = spherical_j_scaled(v, m_max);
        let mut out = Vec::with_capacity(m_max + 1);
        let mut half_pow = 1.0;
        for m in 0..=m_max {
            out.push(half_pow * j[m]);
            half_pow *= -0.5;
        }
        out
    } else {
        let mut out = Vec::with_capacity(m_max + 1);
        let mut half_pow = 1.0;
        for m in 0..=m_max {
            out.push(half_pow * sqrt_series_terms(-y, m, true));
            half_pow *= -0.5;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// The public family evaluator.
// ---------------------------------------------------------------------------

fn finite_or_overflow(vals: Vec<f64>) -> Result<Vec<f64>> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(vals)
    } else {
        Err(KernelError::Numerical(
            "derivative family evaluation overflowed".into(),
        ))
    }
}

fn cosh_k_acos_series(x: f64, k: f64, n_max: usize, series_order: usize) -> Result<Vec<f64>> {
    let s = geodesic_series_derivs(1.0 - x, n_max, series_order, false);
    let y = k * k * s[0];
    let gamma = cosh_sqrt_derivs(y, n_max);
    let mut outer = Vec::with_capacity(n_max + 1);
    let mut kp = 1.0;
    for g in gamma.iter().take(n_max + 1) {
        outer.push(g * kp);
        kp *= k * k;
    }
    composite_derivs(&outer, &s, n_max)
}

fn cos_k_acosh_series(x: f64, k: f64, n_max: usize, series_order: usize) -> Result<Vec<f64>> {
    let s = geodesic_series_derivs(x - 1.0, n_max, series_order, true);
    let y = k * k * s[0];
    let gamma = cos_sqrt_derivs(y, n_max);
    let mut outer = Vec::with_capacity(n_max + 1);
    let mut kp = 1.0;
    for g in gamma.iter().take(n_max + 1) {
        outer.push(g * kp);
        kp *= k * k;
    }
    composite_derivs(&outer, &s, n_max)
}

fn cosh_k_acos_direct(x: f64, k: f64, n_max: usize) -> (Vec<f64>, bool) {
    let tables = recurrence_polys();
    let a = x.acos();
    let w2 = (1.0 - x) * (1.0 + x);
    let w = w2.sqrt();
    let (ch, sh) = ((k * a).cosh(), (k * a).sinh());
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(ch);
    let mut healthy = true;
    let mut denom = w;
    for n in 1..=n_max {
        let (af, bf) = &tables.cosh_trig_f[n - 1];
        let num = eval_xk(af, x, k) * w * ch + eval_xk(bf, x, k) * sh;
        let (aa, ba) = &tables.cosh_trig_fabs[n - 1];
        let scale = eval_xk(aa, x.abs(), k) * w * ch + eval_xk(ba, x.abs(), k) * sh.abs();
        if num.abs() * CANCEL_LIMIT < scale {
            healthy = false;
        }
        out.push(num / denom);
        denom *= w2;
    }
    (out, healthy)
}

fn cos_k_acosh_direct(x: f64, k: f64, n_max: usize) -> (Vec<f64>, bool) {
    let tables = recurrence_polys();
    let a = x.acosh();
    let w2 = (x - 1.0) * (x + 1.0);
    let w = w2.sqrt();
    let (s, c) = (k * a).sin_cos();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(c);
    let mut healthy = true;
    let mut denom = w;
    for n in 1..=n_max {
        let (af, bf) = &tables.cos_hyp_f[n - 1];
        let num = eval_xk(af, x, k) * w * c + eval_xk(bf, x, k) * s;
        let (aa, ba) = &tables.cos_hyp_fabs[n - 1];
        let scale = eval_xk(aa, x, k) * w + eval_xk(ba, x, k);
        if num.abs() * CANCEL_LIMIT < scale {
            healthy = false;
        }
        out.push(num / denom);
        denom *= w2;
    }
    (out, healthy)
}

/// Squared-distance derivatives with the family's switching parameters.
fn acos_sq_eval(x: f64, n_max: usize, thr: f64, series_order: usize) -> Vec<f64> {
    if x > 1.0 - thr {
        return geodesic_series_derivs(1.0 - x, n_max, series_order, false);
    }
    let (vals, healthy) = acos_sq_direct(x, n_max);
    if !healthy && 1.0 - x < SERIES_RADIUS {
        return geodesic_series_derivs(1.0 - x, n_max, GEODESIC_SERIES_CAP, false);
    }
    vals
}

fn acosh_sq_eval(x: f64, n_max: usize, thr: f64, series_order: usize) -> Vec<f64> {
    if x < 1.0 + thr {
        return geodesic_series_derivs(x - 1.0, n_max, series_order, true);
    }
    let (vals, healthy) = acosh_sq_direct(x, n_max);
    if !healthy && x - 1.0 < SERIES_RADIUS {
        return geodesic_series_derivs(x - 1.0, n_max, GEODESIC_SERIES_CAP, true);
    }
    vals
}

fn sinhc_k_acos(x: f64, k: f64, n_max: usize, thr: f64, series_order: usize) -> Result<Vec<f64>> {
    let s = acos_sq_eval(x, n_max, thr, series_order);
    let y = k * k * s[0];
    if y.sqrt() > 700.0 {
        return Err(KernelError::Numerical(format!(
            "sinh(K arccos x)/arccos x overflows at K * arccos x = {}",
            y.sqrt()
        )));
    }
    let sigma = sinhc_sqrt_derivs(y, n_max);
    let mut outer = Vec::with_capacity(n_max + 1);
    let mut kp = k;
    for g in sigma.iter().take(n_max + 1) {
        outer.push(g * kp);
        kp *= k * k;
    }
    composite_derivs(&outer, &s, n_max)
}

fn sinc_k_acosh(x: f64, k: f64, n_max: usize, thr: f64, series_order: usize) -> Result<Vec<f64>> {
    let s = acosh_sq_eval(x, n_max, thr, series_order);
    let y = k * k * s[0];
    let sigma = sinc_sqrt_derivs(y, n_max);
    let mut outer = Vec::with_capacity(n_max + 1);
    let mut kp = k;
    for g in sigma.iter().take(n_max + 1) {
        outer.push(g * kp);
        kp *= k * k;
    }
    composite_derivs(&outer, &s, n_max)
}

/// Derivatives d^k/dx^k of the family's generating function, k = 0..=n_max.
///
/// Trig kinds accept x in (-1, 1], hyp kinds x >= 1. The closed-form kinds
/// switch from the recurrence tables to entire-series forms within
/// `near_one_threshold` of x = 1; the sinh/sin-over-distance kinds always use
/// the entire-series composition, which is stable on the whole domain.
pub fn trig_hyp_derivs(family: &DerivFamily, x: f64, n_max: usize) -> Result<Vec<f64>> {
    family.validate()?;
    if n_max > family.max_order {
        return Err(KernelError::UnsupportedOrder {
            requested: n_max,
            max: family.max_order,
        });
    }
    let k = family.k;
    let thr = family.near_one_threshold;
    let so = family.series_order;
    if family.kind.is_trig() {
        if !(x > -1.0 && x <= 1.0) {
            return Err(KernelError::Domain(format!(
                "trig-branch family needs x in (-1, 1], got {x}"
            )));
        }
    } else if !(x >= 1.0) {
        return Err(KernelError::Domain(format!(
            "hyp-branch family needs x >= 1, got {x}"
        )));
    }
    let vals = match family.kind {
        FamilyKind::AcosSq => acos_sq_derivs(x, n_max)?,
        FamilyKind::AcoshSq => acosh_sq_derivs(x, n_max)?,
        FamilyKind::CoshKAcos => {
            if x > 1.0 - thr {
                cosh_k_acos_series(x, k, n_max, so)?
            } else {
                let (vals, healthy) = cosh_k_acos_direct(x, k, n_max);
                if !healthy && 1.0 - x < SERIES_RADIUS {
                    cosh_k_acos_series(x, k, n_max, GEODESIC_SERIES_CAP)?
                } else {
                    vals
                }
            }
        }
        FamilyKind::CosKAcosh => {
            if x < 1.0 + thr {
                cos_k_acosh_series(x, k, n_max, so)?
            } else {
                let (vals, healthy) = cos_k_acosh_direct(x, k, n_max);
                if !healthy && x - 1.0 < SERIES_RADIUS {
                    cos_k_acosh_series(x, k, n_max, GEODESIC_SERIES_CAP)?
                } else {
                    vals
                }
            }
        }
        FamilyKind::SinhcKAcos => sinhc_k_acos(x, k, n_max, thr, so)?,
        FamilyKind::SincKAcosh => sinc_k_acosh(x, k, n_max, thr, so)?,
    };
    finite_or_overflow(vals)
}

// ---------------------------------------------------------------------------
// Combined exponent for the hyperbolic integrand branch.
// ---------------------------------------------------------------------------

const LAMBDA_SMALL: f64 = 1e-2;

/// E(t, r, lambda) = (arccosh^2(cos(sqrt(t) r) cosh lambda) - lambda^2) / (4t),
/// evaluated without the catastrophic cancellation of the naive difference.
/// Always <= 0; tends to -r^2 lambda coth(lambda) / 4 as t -> 0.
pub fn combined_exponent(t: f64, r: f64, lambda: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(KernelError::Domain(format!("time must be positive, got {t}")));
    }
    if !r.is_finite() || !lambda.is_finite() {
        return Err(KernelError::Domain(
            "combined exponent needs finite arguments".into(),
        ));
    }
    let s = t.sqrt() * r.abs();
    if s == 0.0 {
        return Ok(0.0);
    }
    if s >= std::f64::consts::FRAC_PI_2 {
        return Err(KernelError::Domain(format!(
            "cos(sqrt(t) r) = cos({s}) is not positive; hyperbolic branch unavailable"
        )));
    }
    let lam = lambda.abs();
    let sin_half = (s / 2.0).sin();
    if lam <= LAMBDA_SMALL {
        // u = cos(s) cosh(lam) - 1 split into the lam-only part u0 and the
        // exact deficit delta = -2 sin^2(s/2) cosh(lam), then
        // arccosh^2(1+u) - arccosh^2(1+u0) summed as delta * sum over the
        // series difference.
        let sh = (lam / 2.0).sinh();
        let u0 = 2.0 * sh * sh;
        let delta = -2.0 * sin_half * sin_half * lam.cosh();
        let u = u0 + delta;
        if u < 0.0 {
            return Err(KernelError::Domain(format!(
                "argument cos(sqrt(t) r) cosh(lambda) < 1 at t={t}, r={r}, lambda={lambda}"
            )));
        }
        let c = geodesic_series();
        let mut sum = 0.0;
        let mut sign = 1.0;
        for n in 1..=GEODESIC_SERIES_CAP {
            // sum_{i=0}^{n-1} u^i u0^(n-1-i)
            let mut inner = 0.0;
            let mut up = 1.0;
            for i in 0..n {
                inner += up * u0.powi((n - 1 - i) as i32);
                up *= u;
            }
            let term = sign * c[n] * inner;
            sum += term;
            sign = -sign;
            if term.abs() < 1e-20 * sum.abs().max(1.0) {
                break;
            }
        }
        return Ok((delta * sum / (4.0 * t)).min(0.0));
    }
    // eta = (tan s / sinh lam)^2 computed in overflow-safe form.
    let em = (-2.0 * lam).exp_m1();
    let eta_sqrt = s.tan() * 2.0 * (-lam).exp() / (-em);
    let eta = eta_sqrt * eta_sqrt;
    if eta > 1.0 {
        return Err(KernelError::Domain(format!(
            "argument cos(sqrt(t) r) cosh(lambda) < 1 at t={t}, r={r}, lambda={lambda}"
        )));
    }
    let w = eta * (-em) / (2.0 * (1.0 + (1.0 - eta).sqrt()));
    let beta = (-2.0 * sin_half * sin_half).ln_1p() + (-w).ln_1p();
    Ok((beta * (2.0 * lam + beta) / (4.0 * t)).min(0.0))
}
