//! A small symbolic engine for variable-coefficient differential operators:
//! the left-invariant frames of SU(2), the CR spheres, and the Heisenberg
//! groups, word-to-operator compilation with exact product rules, and
//! Hermite-function evaluation (a compiled operator applied to a heat
//! kernel, divided by the kernel).
//!
//! Coefficients are expression trees closed under the engine's
//! differentiation rules. Term merging and zero detection are probabilistic:
//! a coefficient counts as zero when it vanishes at five fixed probe points
//! relative to the magnitude of its summands. Symbolic zero recognition is
//! undecidable in general; for the trig/hyperbolic coefficient algebra here,
//! probing decides identities such as bracket relations reliably, with the
//! rounding noise of the probe evaluation many orders below the tolerance.
//!
//! Operators act on radial kernels f(r, z). In cylindrical coordinates the
//! base partials are d/dr, d/dtheta, d/dz and the kernel is theta-free, so
//! theta-partials differentiate coefficients only. In the inhomogeneous
//! coordinates (w_1..w_d, z) of the spheres and the Heisenberg groups, the
//! kernel depends on w only through rho = |w|, and d/dw_j routes into d/dr
//! through the chain factor wbar_j/(2 rho (1+rho^2)) (spheres, where
//! rho = tan r) or wbar_j/(2 rho) (Heisenberg, where r = rho). Compiled
//! operators are immutable after canonicalization and safe to share across
//! threads; evaluation is pure.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;

use crate::error::{KernelError, Result};
use crate::heisenberg_kernel::{h_derivs, HeisenbergParams};
use crate::lie_words::{Letter, LieWord, Space};
use crate::subelliptic_kernel::{p_parts, QuadratureConfig, Space as PSpace, SubellipticPoint};

/// Coefficients are treated as zero when they vanish to this tolerance,
/// relative to the magnitude of their summands, at all probe points.
const PROBE_TOL: f64 = 1e-12;

/// Kernel values below this are refused as Hermite denominators.
const KERNEL_FLOOR: f64 = 1e-300;

/// A coordinate symbol. `R`, `Theta`, `Z` live on the cylindrical charts;
/// `W(j)`/`WBar(j)` (1-based) and `Z` on the inhomogeneous vector charts,
/// where `Rho` abbreviates |w| and differentiates through the chain rule
/// d rho / d w_j = wbar_j / (2 rho).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    R,
    Theta,
    Z,
    W(u8),
    WBar(u8),
    Rho,
}

/// A numeric evaluation point for coefficient expressions.
#[derive(Clone, Debug)]
pub enum EvalPoint {
    Cylindrical { r: f64, theta: f64, z: f64 },
    Vector { w: Vec<Complex64>, z: f64 },
}

impl EvalPoint {
    fn var_value(&self, v: Var) -> Result<Complex64> {
        let err = || {
            KernelError::Domain(format!(
                "variable {v:?} is not defined on this coordinate chart"
            ))
        };
        match (self, v) {
            (EvalPoint::Cylindrical { r, .. }, Var::R) => Ok(Complex64::new(*r, 0.0)),
            (EvalPoint::Cylindrical { theta, .. }, Var::Theta) => Ok(Complex64::new(*theta, 0.0)),
            (EvalPoint::Cylindrical { z, .. }, Var::Z) => Ok(Complex64::new(*z, 0.0)),
            (EvalPoint::Vector { z, .. }, Var::Z) => Ok(Complex64::new(*z, 0.0)),
            (EvalPoint::Vector { w, .. }, Var::W(j)) => w
                .get((j as usize).wrapping_sub(1))
                .copied()
                .ok_or_else(err),
            (EvalPoint::Vector { w, .. }, Var::WBar(j)) => w
                .get((j as usize).wrapping_sub(1))
                .map(|c| c.conj())
                .ok_or_else(err),
            (EvalPoint::Vector { w, .. }, Var::Rho) => {
                let s: f64 = w.iter().map(|c| c.norm_sqr()).sum();
                Ok(Complex64::new(s.sqrt(), 0.0))
            }
            _ => Err(err()),
        }
    }
}

/// A coefficient expression tree.
#[derive(Clone, Debug)]
pub enum Expr {
    Const(Complex64),
    Var(Var),
    Sum(Vec<Expr>),
    Prod(Vec<Expr>),
    Pow(Box<Expr>, f64),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Tan(Box<Expr>),
    Exp(Box<Expr>),
}

fn n(x: f64) -> Expr {
    Expr::Const(Complex64::new(x, 0.0))
}

fn ni(y: f64) -> Expr {
    Expr::Const(Complex64::new(0.0, y))
}

fn v(u: Var) -> Expr {
    Expr::Var(u)
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        n(x)
    }

    pub fn imag(y: f64) -> Expr {
        ni(y)
    }

    pub fn var(u: Var) -> Expr {
        v(u)
    }

    /// Sum with flattening and constant folding.
    pub fn sum(parts: Vec<Expr>) -> Expr {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut out = Vec::new();
        let mut stack: Vec<Expr> = parts.into_iter().rev().collect();
        while let Some(e) = stack.pop() {
            match e {
                Expr::Sum(xs) => stack.extend(xs.into_iter().rev()),
                Expr::Const(c) => acc += c,
                other => out.push(other),
            }
        }
        if acc.norm() != 0.0 {
            out.insert(0, Expr::Const(acc));
        }
        match out.len() {
            0 => n(0.0),
            1 => out.pop().unwrap(),
            _ => Expr::Sum(out),
        }
    }

    /// Product with flattening, constant folding, and zero absorption.
    pub fn prod(parts: Vec<Expr>) -> Expr {
        let mut acc = Complex64::new(1.0, 0.0);
        let mut out = Vec::new();
        let mut stack: Vec<Expr> = parts.into_iter().rev().collect();
        while let Some(e) = stack.pop() {
            match e {
                Expr::Prod(xs) => stack.extend(xs.into_iter().rev()),
                Expr::Const(c) => {
                    if c.norm() == 0.0 {
                        return n(0.0);
                    }
                    acc *= c;
                }
                other => out.push(other),
            }
        }
        if (acc - Complex64::new(1.0, 0.0)).norm() != 0.0 || out.is_empty() {
            out.insert(0, Expr::Const(acc));
        }
        match out.len() {
            0 => n(1.0),
            1 => out.pop().unwrap(),
            _ => Expr::Prod(out),
        }
    }

    pub fn pow(base: Expr, e: f64) -> Expr {
        if e == 0.0 {
            return n(1.0);
        }
        if e == 1.0 {
            return base;
        }
        Expr::Pow(Box::new(base), e)
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::Sin(Box::new(a))
    }

    pub fn cos(a: Expr) -> Expr {
        Expr::Cos(Box::new(a))
    }

    pub fn tan(a: Expr) -> Expr {
        Expr::Tan(Box::new(a))
    }

    pub fn exp(a: Expr) -> Expr {
        Expr::Exp(Box::new(a))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::prod(vec![n(-1.0), a])
    }

    fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if c.norm() == 0.0)
    }

    pub fn eval(&self, env: &EvalPoint) -> Result<Complex64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(u) => env.var_value(*u)?,
            Expr::Sum(xs) => {
                let mut s = Complex64::new(0.0, 0.0);
                for x in xs {
                    s += x.eval(env)?;
                }
                s
            }
            Expr::Prod(xs) => {
                let mut p = Complex64::new(1.0, 0.0);
                for x in xs {
                    p *= x.eval(env)?;
                }
                p
            }
            Expr::Pow(b, e) => pow_value(b.eval(env)?, *e),
            Expr::Sin(a) => a.eval(env)?.sin(),
            Expr::Cos(a) => a.eval(env)?.cos(),
            Expr::Tan(a) => a.eval(env)?.tan(),
            Expr::Exp(a) => a.eval(env)?.exp(),
        })
    }

    /// Cancellation-aware magnitude: sums report the mass of their summands
    /// rather than the net value, so that a merged coefficient that cancels
    /// to rounding noise is compared against the size of what cancelled.
    fn eval_mag(&self, env: &EvalPoint) -> Result<f64> {
        match self {
            Expr::Sum(xs) => {
                let mut s = 0.0;
                for x in xs {
                    s += x.eval_mag(env)?;
                }
                Ok(s)
            }
            Expr::Prod(xs) => {
                let mut p = 1.0;
                for x in xs {
                    p *= x.eval_mag(env)?;
                }
                Ok(p)
            }
            other => Ok(other.eval(env)?.norm()),
        }
    }

    pub fn diff(&self, wrt: Var) -> Expr {
        match self {
            Expr::Const(_) => n(0.0),
            Expr::Var(u) => var_diff(*u, wrt),
            Expr::Sum(xs) => Expr::sum(xs.iter().map(|x| x.diff(wrt)).collect()),
            Expr::Prod(xs) => {
                let mut parts = Vec::new();
                for i in 0..xs.len() {
                    let di = xs[i].diff(wrt);
                    if di.is_zero_const() {
                        continue;
                    }
                    let mut term: Vec<Expr> = xs.clone();
                    term[i] = di;
                    parts.push(Expr::prod(term));
                }
                Expr::sum(parts)
            }
            Expr::Pow(b, e) => Expr::prod(vec![
                n(*e),
                Expr::pow((**b).clone(), e - 1.0),
                b.diff(wrt),
            ]),
            Expr::Sin(a) => Expr::prod(vec![Expr::cos((**a).clone()), a.diff(wrt)]),
            Expr::Cos(a) => Expr::prod(vec![n(-1.0), Expr::sin((**a).clone()), a.diff(wrt)]),
            Expr::Tan(a) => Expr::prod(vec![
                Expr::sum(vec![n(1.0), Expr::pow(Expr::tan((**a).clone()), 2.0)]),
                a.diff(wrt),
            ]),
            Expr::Exp(a) => Expr::prod(vec![Expr::exp((**a).clone()), a.diff(wrt)]),
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(u) => {
                out.insert(*u);
            }
            Expr::Sum(xs) | Expr::Prod(xs) => {
                for x in xs {
                    x.collect_vars(out);
                }
            }
            Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Tan(a) | Expr::Exp(a) => {
                a.collect_vars(out);
            }
        }
    }
}

fn pow_value(b: Complex64, e: f64) -> Complex64 {
    if e == 2.0 {
        b * b
    } else if e == -1.0 {
        b.inv()
    } else if e == 0.5 {
        b.sqrt()
    } else if e == -0.5 {
        b.sqrt().inv()
    } else if e == -2.0 {
        (b * b).inv()
    } else if e == 3.0 {
        b * b * b
    } else {
        b.powf(e)
    }
}

fn var_diff(u: Var, wrt: Var) -> Expr {
    if u == wrt {
        return n(1.0);
    }
    match (u, wrt) {
        (Var::Rho, Var::W(j)) => Expr::prod(vec![
            n(0.5),
            v(Var::WBar(j)),
            Expr::pow(v(Var::Rho), -1.0),
        ]),
        (Var::Rho, Var::WBar(j)) => {
            Expr::prod(vec![n(0.5), v(Var::W(j)), Expr::pow(v(Var::Rho), -1.0)])
        }
        _ => n(0.0),
    }
}

/// Derivative multi-index over base partial directions.
type Mono = BTreeMap<Var, u32>;

fn mono_add(a: &Mono, b: &Mono) -> Mono {
    let mut out = a.clone();
    for (&k, &x) in b {
        *out.entry(k).or_insert(0) += x;
    }
    out
}

fn binom(mut nn: u32, kk: u32) -> f64 {
    let kk = kk.min(nn - kk.min(nn));
    let mut out = 1.0;
    for i in 1..=kk {
        out *= nn as f64 / i as f64;
        nn -= 1;
    }
    out
}

/// All sub-multi-indices gamma <= alpha with the product binomial weight.
fn sub_multi_indices(alpha: &Mono) -> Vec<(Mono, f64)> {
    let mut out = vec![(Mono::new(), 1.0)];
    for (&u, &total) in alpha {
        let mut next = Vec::with_capacity(out.len() * (total as usize + 1));
        for (m, c) in &out {
            for k in 0..=total {
                let mut m2 = m.clone();
                if k > 0 {
                    m2.insert(u, k);
                }
                next.push((m2, c * binom(total, k)));
            }
        }
        out = next;
    }
    out
}

fn iterated_diff(e: &Expr, delta: &Mono) -> Expr {
    let mut out = e.clone();
    for (&u, &k) in delta {
        for _ in 0..k {
            if out.is_zero_const() {
                return out;
            }
            out = out.diff(u);
        }
    }
    out
}

/// A linear differential operator: a canonical sum of coefficient-times-
/// partial-monomial terms over the chart's flat partial directions.
#[derive(Clone, Debug, Default)]
pub struct DiffOp {
    terms: Vec<(Expr, Mono)>,
}

impl DiffOp {
    pub fn zero() -> DiffOp {
        DiffOp { terms: Vec::new() }
    }

    pub fn identity() -> DiffOp {
        DiffOp {
            terms: vec![(n(1.0), Mono::new())],
        }
    }

    pub fn first_order(parts: Vec<(Expr, Var)>) -> DiffOp {
        DiffOp {
            terms: parts
                .into_iter()
                .map(|(c, u)| {
                    let mut m = Mono::new();
                    m.insert(u, 1);
                    (c, m)
                })
                .collect(),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Expr, &BTreeMap<Var, u32>)> {
        self.terms.iter().map(|(c, m)| (c, m))
    }

    pub fn order(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, m)| m.values().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, rhs: &DiffOp) -> DiffOp {
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().cloned());
        DiffOp { terms }
    }

    pub fn neg(&self) -> DiffOp {
        DiffOp {
            terms: self
                .terms
                .iter()
                .map(|(c, m)| (Expr::neg(c.clone()), m.clone()))
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &DiffOp) -> DiffOp {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, k: Expr) -> DiffOp {
        DiffOp {
            terms: self
                .terms
                .iter()
                .map(|(c, m)| (Expr::prod(vec![k.clone(), c.clone()]), m.clone()))
                .collect(),
        }
    }

    /// Operator composition (self applied after rhs), with the Leibniz
    /// expansion of the left factor's partials over the right factor's
    /// coefficients.
    pub fn compose(&self, rhs: &DiffOp) -> DiffOp {
        let mut terms = Vec::new();
        for (a, alpha) in &self.terms {
            for (gamma, weight) in sub_multi_indices(alpha) {
                let mut delta = alpha.clone();
                for (&u, &k) in &gamma {
                    let e = delta.get_mut(&u).unwrap();
                    *e -= k;
                }
                delta.retain(|_, &mut k| k > 0);
                for (b, beta) in &rhs.terms {
                    let db = iterated_diff(b, &delta);
                    if db.is_zero_const() {
                        continue;
                    }
                    let coef = Expr::prod(vec![a.clone(), n(weight), db]);
                    if coef.is_zero_const() {
                        continue;
                    }
                    terms.push((coef, mono_add(&gamma, beta)));
                }
            }
        }
        DiffOp { terms }
    }

    pub fn bracket(&self, rhs: &DiffOp) -> DiffOp {
        self.compose(rhs).sub(&rhs.compose(self))
    }

    /// Applies the operator to an expression symbolically.
    pub fn apply_expr(&self, f: &Expr) -> Expr {
        Expr::sum(
            self.terms
                .iter()
                .map(|(c, m)| Expr::prod(vec![c.clone(), iterated_diff(f, m)]))
                .collect(),
        )
    }

    fn coefficient_vars(&self) -> BTreeSet<Var> {
        let mut vars = BTreeSet::new();
        for (c, _) in &self.terms {
            c.collect_vars(&mut vars);
        }
        vars
    }

    /// Merges like terms, drops probe-zero coefficients, and sorts terms by
    /// their partial monomial.
    pub fn canonical(&self) -> Result<DiffOp> {
        let mut merged: BTreeMap<Mono, Vec<Expr>> = BTreeMap::new();
        for (c, m) in &self.terms {
            merged.entry(m.clone()).or_default().push(c.clone());
        }
        let envs = probe_envs(&self.coefficient_vars())?;
        let mut terms = Vec::new();
        for (mono, parts) in merged {
            let coef = Expr::sum(parts);
            let mut keep = false;
            for env in &envs {
                let val = coef.eval(env)?.norm();
                let mag = coef.eval_mag(env)?;
                if val > PROBE_TOL * (1.0 + mag) {
                    keep = true;
                    break;
                }
            }
            if keep {
                terms.push((coef, mono));
            }
        }
        Ok(DiffOp { terms })
    }

    /// Probabilistic operator equality at the probe points.
    pub fn approx_eq(&self, rhs: &DiffOp) -> Result<bool> {
        Ok(self.sub(rhs).canonical()?.is_zero())
    }
}

const PROBE_R: [f64; 5] = [0.53, 0.91, 1.17, 0.74, 1.32];
const PROBE_THETA: [f64; 5] = [0.37, 2.11, 4.9, 1.03, 5.51];
const PROBE_Z: [f64; 5] = [0.81, -0.44, 1.27, 2.33, -1.62];

fn probe_envs(vars: &BTreeSet<Var>) -> Result<Vec<EvalPoint>> {
    let vector = vars
        .iter()
        .any(|u| matches!(u, Var::W(_) | Var::WBar(_) | Var::Rho));
    let cylindrical = vars.iter().any(|u| matches!(u, Var::R | Var::Theta));
    if vector && cylindrical {
        return Err(KernelError::Domain(
            "operator mixes cylindrical and vector coordinate variables".into(),
        ));
    }
    if !vector {
        return Ok((0..5)
            .map(|i| EvalPoint::Cylindrical {
                r: PROBE_R[i],
                theta: PROBE_THETA[i],
                z: PROBE_Z[i],
            })
            .collect());
    }
    let d = vars
        .iter()
        .filter_map(|u| match u {
            Var::W(j) | Var::WBar(j) => Some(*j as usize),
            _ => None,
        })
        .max()
        .unwrap_or(1)
        .max(1);
    Ok((0..5)
        .map(|i| {
            let w = (1..=d)
                .map(|j| {
                    let m = 0.4 + 0.15 * (0.37 * j as f64 + 0.61 * i as f64 + 0.13).fract();
                    let phase = 2.3 * j as f64 + 1.7 * i as f64 - 1.0;
                    Complex64::from_polar(m, phase)
                })
                .collect();
            EvalPoint::Vector { w, z: PROBE_Z[i] }
        })
        .collect())
}

/// The frame fields of one space on one coordinate chart.
#[derive(Clone, Debug)]
pub struct FrameSet {
    space: Space,
    fields: BTreeMap<Letter, DiffOp>,
}

impl FrameSet {
    pub fn space(&self) -> Space {
        self.space
    }

    pub fn field(&self, letter: Letter) -> Result<&DiffOp> {
        self.fields.get(&letter).ok_or_else(|| {
            KernelError::Domain(format!(
                "letter {letter} has no field in this {:?} frame set",
                self.space
            ))
        })
    }
}

fn lin(a: f64, u: Var, b: f64, w: Var) -> Expr {
    Expr::sum(vec![
        Expr::prod(vec![n(a), v(u)]),
        Expr::prod(vec![n(b), v(w)]),
    ])
}

/// The left-invariant SU(2) frame in cylindrical coordinates:
/// X = cos(2z-t)d/dr + tan r sin(2z-t)d/dz + (2/sin 2r)sin(2z-t)d/dtheta
/// (writing t for theta), Y likewise with (cos, -sin) swapped in,
/// and Z = d/dz.
pub fn su2_frame() -> FrameSet {
    let u = lin(2.0, Var::Z, -1.0, Var::Theta);
    let g = Expr::prod(vec![
        n(2.0),
        Expr::pow(Expr::sin(Expr::prod(vec![n(2.0), v(Var::R)])), -1.0),
    ]);
    let tanr = Expr::tan(v(Var::R));
    let x = DiffOp::first_order(vec![
        (Expr::cos(u.clone()), Var::R),
        (Expr::prod(vec![tanr.clone(), Expr::sin(u.clone())]), Var::Z),
        (Expr::prod(vec![g.clone(), Expr::sin(u.clone())]), Var::Theta),
    ]);
    let y = DiffOp::first_order(vec![
        (Expr::neg(Expr::sin(u.clone())), Var::R),
        (Expr::prod(vec![tanr, Expr::cos(u.clone())]), Var::Z),
        (Expr::prod(vec![g, Expr::cos(u)]), Var::Theta),
    ]);
    let z = DiffOp::first_order(vec![(n(1.0), Var::Z)]);
    FrameSet {
        space: Space::Su2,
        fields: BTreeMap::from([(Letter::X, x), (Letter::Y, y), (Letter::Z, z)]),
    }
}

/// The dilation-rescaled SU(2) frame at a fixed t > 0, whose coefficients
/// approach the cylindrical Heisenberg frame as t drops to zero:
/// X^t = cos(2tz-th)d/dr + (tan(sqrt(t) r)/sqrt(t)) sin(2tz-th)d/dz
///     + (2 sqrt(t)/sin(2 sqrt(t) r)) sin(2tz-th)d/dtheta, etc.
pub fn su2_scaled_frame(t: f64) -> Result<FrameSet> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(KernelError::Domain(format!(
            "scaled frame needs t > 0, got {t}"
        )));
    }
    let rt = t.sqrt();
    let u = lin(2.0 * t, Var::Z, -1.0, Var::Theta);
    let tanfac = Expr::prod(vec![
        n(1.0 / rt),
        Expr::tan(Expr::prod(vec![n(rt), v(Var::R)])),
    ]);
    let g = Expr::prod(vec![
        n(2.0 * rt),
        Expr::pow(Expr::sin(Expr::prod(vec![n(2.0 * rt), v(Var::R)])), -1.0),
    ]);
    let x = DiffOp::first_order(vec![
        (Expr::cos(u.clone()), Var::R),
        (
            Expr::prod(vec![tanfac.clone(), Expr::sin(u.clone())]),
            Var::Z,
        ),
        (Expr::prod(vec![g.clone(), Expr::sin(u.clone())]), Var::Theta),
    ]);
    let y = DiffOp::first_order(vec![
        (Expr::neg(Expr::sin(u.clone())), Var::R),
        (Expr::prod(vec![tanfac, Expr::cos(u.clone())]), Var::Z),
        (Expr::prod(vec![g, Expr::cos(u)]), Var::Theta),
    ]);
    let z = DiffOp::first_order(vec![(n(1.0), Var::Z)]);
    Ok(FrameSet {
        space: Space::Su2,
        fields: BTreeMap::from([(Letter::X, x), (Letter::Y, y), (Letter::Z, z)]),
    })
}

/// The 3-dimensional Heisenberg frame in cylindrical coordinates:
/// X = cos th d/dr - r sin th d/dz - (sin th / r)d/dtheta, Y its quarter
/// turn, Z0 = d/dz. This is the coefficient limit of [`su2_scaled_frame`].
pub fn heisenberg_cylindrical_frame() -> FrameSet {
    let x = DiffOp::first_order(vec![
        (Expr::cos(v(Var::Theta)), Var::R),
        (
            Expr::prod(vec![n(-1.0), v(Var::R), Expr::sin(v(Var::Theta))]),
            Var::Z,
        ),
        (
            Expr::prod(vec![
                n(-1.0),
                Expr::sin(v(Var::Theta)),
                Expr::pow(v(Var::R), -1.0),
            ]),
            Var::Theta,
        ),
    ]);
    let y = DiffOp::first_order(vec![
        (Expr::sin(v(Var::Theta)), Var::R),
        (Expr::prod(vec![v(Var::R), Expr::cos(v(Var::Theta))]), Var::Z),
        (
            Expr::prod(vec![Expr::cos(v(Var::Theta)), Expr::pow(v(Var::R), -1.0)]),
            Var::Theta,
        ),
    ]);
    let z = DiffOp::first_order(vec![(n(1.0), Var::Z)]);
    FrameSet {
        space: Space::Heisenberg { d: 1 },
        fields: BTreeMap::from([
            (Letter::HeisX(1), x),
            (Letter::HeisY(1), y),
            (Letter::HeisZ0, z),
        ]),
    }
}

fn check_dim(d: usize) -> Result<u8> {
    if d == 0 || d > 32 {
        return Err(KernelError::Domain(format!(
            "complex dimension d must lie in 1..=32, got {d}"
        )));
    }
    Ok(d as u8)
}

/// The Heisenberg frames on H^{2d+1} in complex coordinates (w, z): the real
/// horizontal pair X_j, Y_j, the vertical Z0 = d/dz, and the complex
/// combinations Z_j = d/dw_j + (i/2) wbar_j d/dz and its conjugate.
pub fn heisenberg_frames(d: usize) -> Result<FrameSet> {
    let dd = check_dim(d)?;
    let mut fields = BTreeMap::new();
    for j in 1..=dd {
        let wj = v(Var::W(j));
        let wbj = v(Var::WBar(j));
        let x = DiffOp::first_order(vec![
            (ni(1.0), Var::W(j)),
            (ni(-1.0), Var::WBar(j)),
            (
                Expr::prod(vec![
                    n(-0.5),
                    Expr::sum(vec![wj.clone(), wbj.clone()]),
                ]),
                Var::Z,
            ),
        ]);
        let y = DiffOp::first_order(vec![
            (n(1.0), Var::W(j)),
            (n(1.0), Var::WBar(j)),
            (
                Expr::prod(vec![
                    ni(-0.5),
                    Expr::sum(vec![wj.clone(), Expr::neg(wbj.clone())]),
                ]),
                Var::Z,
            ),
        ]);
        let zc = DiffOp::first_order(vec![
            (n(1.0), Var::W(j)),
            (Expr::prod(vec![ni(0.5), wbj]), Var::Z),
        ]);
        let zcbar = DiffOp::first_order(vec![
            (n(1.0), Var::WBar(j)),
            (Expr::prod(vec![ni(-0.5), wj]), Var::Z),
        ]);
        fields.insert(Letter::HeisX(j as usize), x);
        fields.insert(Letter::HeisY(j as usize), y);
        fields.insert(Letter::HeisZc(j as usize), zc);
        fields.insert(Letter::HeisZcBar(j as usize), zcbar);
    }
    fields.insert(
        Letter::HeisZ0,
        DiffOp::first_order(vec![(n(1.0), Var::Z)]),
    );
    Ok(FrameSet {
        space: Space::Heisenberg { d },
        fields,
    })
}

fn sphere_t_field(j: u8, t: f64) -> DiffOp {
    let one_plus = Expr::sum(vec![
        n(1.0),
        Expr::prod(vec![n(t), Expr::pow(v(Var::Rho), 2.0)]),
    ]);
    let phase = Expr::exp(Expr::prod(vec![ni(-t), v(Var::Z)]));
    DiffOp::first_order(vec![
        (
            Expr::prod(vec![Expr::pow(one_plus.clone(), 0.5), phase.clone()]),
            Var::W(j),
        ),
        (
            Expr::prod(vec![
                ni(0.5),
                v(Var::WBar(j)),
                Expr::pow(one_plus, -0.5),
                phase,
            ]),
            Var::Z,
        ),
    ])
}

fn sphere_frame_set(d: usize, t: f64) -> Result<FrameSet> {
    let dd = check_dim(d)?;
    let mut fields = BTreeMap::new();
    fields.insert(Letter::T(0), DiffOp::first_order(vec![(n(1.0), Var::Z)]));
    let mut top = DiffOp::zero();
    for j in 1..=dd {
        let tj = sphere_t_field(j, t);
        top = top.add(&tj.scale(Expr::neg(v(Var::W(j)))));
        fields.insert(Letter::T(j as usize), tj);
    }
    fields.insert(Letter::T(d + 1), top.canonical()?);
    Ok(FrameSet {
        space: Space::Sphere { d },
        fields,
    })
}

/// The CR frame on S^{2d+1} in inhomogeneous coordinates: the vertical
/// T_0 = d/dz, the horizontal
/// T_j = sqrt(1+rho^2) e^{-iz} d/dw_j + (i/2) wbar_j e^{-iz} (1+rho^2)^{-1/2} d/dz,
/// and the dependent top field T_{d+1} = -sum_k w_k T_k.
pub fn sphere_frames(d: usize) -> Result<FrameSet> {
    sphere_frame_set(d, 1.0)
}

/// The dilation-rescaled sphere frame at fixed t > 0, with
/// sqrt(1 + t rho^2) and e^{-itz} in place of the unscaled factors; its
/// coefficients approach the complex Heisenberg frame Z_j as t drops to 0.
pub fn sphere_scaled_frames(d: usize, t: f64) -> Result<FrameSet> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(KernelError::Domain(format!(
            "scaled frame needs t > 0, got {t}"
        )));
    }
    sphere_frame_set(d, t)
}

/// Compiles a word to the composition of its frame fields, rightmost letter
/// acting first, with coefficient differentiation by the product rule.
pub fn compile_word(frames: &FrameSet, word: &LieWord) -> Result<DiffOp> {
    if word.space() != frames.space {
        return Err(KernelError::Domain(format!(
            "word on {:?} cannot be compiled against a {:?} frame set",
            word.space(),
            frames.space
        )));
    }
    let mut acc = DiffOp::identity();
    for letter in word.letters().iter().rev() {
        acc = frames.field(*letter)?.compose(&acc).canonical()?;
    }
    Ok(acc)
}

/// How flat partials act on a radial kernel f(r, z).
#[derive(Clone, Copy, Debug)]
enum KernelChain {
    /// Chart variables are (r, theta, z); the kernel is theta-free.
    Cylindrical,
    /// Chart variables (w, z) with rho = tan r: d/dw_j routes into
    /// (wbar_j / (2 rho (1+rho^2))) d/dr.
    SphereArctan,
    /// Chart variables (w, z) with r = rho: d/dw_j routes into
    /// (wbar_j / (2 rho)) d/dr.
    HeisenbergRadial,
}

impl KernelChain {
    fn dr_factor(self, u: Var) -> Option<Expr> {
        match (self, u) {
            (KernelChain::Cylindrical, Var::R) => Some(n(1.0)),
            (KernelChain::SphereArctan, Var::W(j)) => Some(Expr::prod(vec![
                n(0.5),
                v(Var::WBar(j)),
                Expr::pow(v(Var::Rho), -1.0),
                Expr::pow(
                    Expr::sum(vec![n(1.0), Expr::pow(v(Var::Rho), 2.0)]),
                    -1.0,
                ),
            ])),
            (KernelChain::SphereArctan, Var::WBar(j)) => Some(Expr::prod(vec![
                n(0.5),
                v(Var::W(j)),
                Expr::pow(v(Var::Rho), -1.0),
                Expr::pow(
                    Expr::sum(vec![n(1.0), Expr::pow(v(Var::Rho), 2.0)]),
                    -1.0,
                ),
            ])),
            (KernelChain::HeisenbergRadial, Var::W(j)) => Some(Expr::prod(vec![
                n(0.5),
                v(Var::WBar(j)),
                Expr::pow(v(Var::Rho), -1.0),
            ])),
            (KernelChain::HeisenbergRadial, Var::WBar(j)) => Some(Expr::prod(vec![
                n(0.5),
                v(Var::W(j)),
                Expr::pow(v(Var::Rho), -1.0),
            ])),
            _ => None,
        }
    }
}

/// One flat partial applied to a sum of coefficient-times-kernel-jet terms.
/// The result's monomials are (r, z)-jet orders of the kernel.
fn apply_flat_partial(u: Var, op: &DiffOp, chain: KernelChain) -> DiffOp {
    let mut terms = Vec::new();
    for (c, m) in &op.terms {
        let dc = c.diff(u);
        if !dc.is_zero_const() {
            terms.push((dc, m.clone()));
        }
        if let Some(factor) = chain.dr_factor(u) {
            let mut bumped = m.clone();
            *bumped.entry(Var::R).or_insert(0) += 1;
            terms.push((Expr::prod(vec![factor, c.clone()]), bumped));
        }
        if u == Var::Z {
            let mut bumped = m.clone();
            *bumped.entry(Var::Z).or_insert(0) += 1;
            terms.push((c.clone(), bumped));
        }
    }
    DiffOp { terms }
}

/// Rewrites an operator over chart partials into one over (r, z)-jets of a
/// radial kernel, expanding partial by partial so that chain factors are
/// themselves differentiated by later letters.
fn to_kernel_jets(op: &DiffOp, chain: KernelChain) -> Result<DiffOp> {
    let mut out = DiffOp::zero();
    for (c, m) in &op.terms {
        let mut jet = DiffOp::identity();
        for (&u, &k) in m {
            for _ in 0..k {
                jet = apply_flat_partial(u, &jet, chain);
            }
        }
        out = out.add(&jet.scale(c.clone()));
    }
    out.canonical()
}

/// The largest coefficient gap between two operators at one point, after
/// merging like terms. Used for scaled-frame limit checks.
pub fn max_coefficient_gap(a: &DiffOp, b: &DiffOp, at: &EvalPoint) -> Result<f64> {
    let diff = a.sub(b).canonical()?;
    let mut worst: f64 = 0.0;
    for (c, _) in &diff.terms {
        worst = worst.max(c.eval(at)?.norm());
    }
    Ok(worst)
}

/// A Hermite-function value: the compiled word applied to the heat kernel,
/// divided by the kernel, both at the same point.
#[derive(Clone, Copy, Debug)]
pub struct HermiteOutcome {
    pub value: Complex64,
    /// The kernel value used as the denominator.
    pub kernel: f64,
}

enum JetSource<'a> {
    Subelliptic {
        space: PSpace,
        point: SubellipticPoint,
        cfg: &'a QuadratureConfig,
    },
    Heisenberg {
        params: HeisenbergParams,
        r: f64,
        z: f64,
    },
}

impl JetSource<'_> {
    fn jet(&self, cache: &mut HashMap<(u32, u32), f64>, n_r: u32, n_z: u32) -> Result<f64> {
        if let Some(&val) = cache.get(&(n_r, n_z)) {
            return Ok(val);
        }
        let val = match self {
            JetSource::Subelliptic { space, point, cfg } => {
                p_parts(*space, point, cfg, n_r as usize, n_z as usize)?.value
            }
            JetSource::Heisenberg { params, r, z } => {
                h_derivs(params, *r, *z, n_r as usize, n_z as usize)?.value
            }
        };
        cache.insert((n_r, n_z), val);
        Ok(val)
    }
}

/// Evaluates the Hermite function of a word at a point: compiles the word in
/// the unscaled frame of its space, rewrites chart partials into kernel
/// jets, and assembles the ratio from mixed (r, z)-derivatives of the
/// kernel. The chart is chosen by the point: SU(2) words take cylindrical
/// points, sphere and Heisenberg words take vector points (w, z), and
/// 3-dimensional Heisenberg words accept cylindrical points as well.
pub fn hermite(
    word: &LieWord,
    t: f64,
    point: &EvalPoint,
    cfg: &QuadratureConfig,
) -> Result<HermiteOutcome> {
    let (frames, chain) = match (word.space(), point) {
        (Space::Su2, EvalPoint::Cylindrical { .. }) => (su2_frame(), KernelChain::Cylindrical),
        (Space::Heisenberg { d: 1 }, EvalPoint::Cylindrical { .. }) => {
            (heisenberg_cylindrical_frame(), KernelChain::Cylindrical)
        }
        (Space::Sphere { d }, EvalPoint::Vector { w, .. }) if w.len() == d => {
            (sphere_frames(d)?, KernelChain::SphereArctan)
        }
        (Space::Heisenberg { d }, EvalPoint::Vector { w, .. }) if w.len() == d => {
            (heisenberg_frames(d)?, KernelChain::HeisenbergRadial)
        }
        _ => {
            return Err(KernelError::Domain(format!(
                "point chart does not match the {:?} alphabet of the word",
                word.space()
            )))
        }
    };
    let source = match (word.space(), point) {
        (Space::Su2, EvalPoint::Cylindrical { r, z, .. }) => JetSource::Subelliptic {
            space: PSpace::Su2,
            point: SubellipticPoint::new(*r, *z, t, 1)?,
            cfg,
        },
        (Space::Heisenberg { .. }, EvalPoint::Cylindrical { r, z, .. }) => {
            JetSource::Heisenberg {
                params: HeisenbergParams::new(1, t)?,
                r: *r,
                z: *z,
            }
        }
        (Space::Sphere { d }, EvalPoint::Vector { w, z }) => {
            let rho: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            JetSource::Subelliptic {
                space: PSpace::Sphere,
                point: SubellipticPoint::new(rho.atan(), *z, t, d as u32)?,
                cfg,
            }
        }
        (Space::Heisenberg { d }, EvalPoint::Vector { w, z }) => {
            let rho: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            JetSource::Heisenberg {
                params: HeisenbergParams::new(d as u32, t)?,
                r: rho,
                z: *z,
            }
        }
        _ => unreachable!(),
    };
    let compiled = compile_word(&frames, word)?;
    let jets_op = to_kernel_jets(&compiled, chain)?;
    let mut cache = HashMap::new();
    let kernel = source.jet(&mut cache, 0, 0)?;
    if !(kernel.abs() > KERNEL_FLOOR) {
        return Err(KernelError::Numerical(format!(
            "kernel value {kernel:e} underflows the Hermite denominator floor"
        )));
    }
    let mut numerator = Complex64::new(0.0, 0.0);
    for (c, m) in &jets_op.terms {
        let n_r = m.get(&Var::R).copied().unwrap_or(0);
        let n_z = m.get(&Var::Z).copied().unwrap_or(0);
        numerator += c.eval(point)? * source.jet(&mut cache, n_r, n_z)?;
    }
    Ok(HermiteOutcome {
        value: numerator / kernel,
        kernel,
    })
}
