//! Convergence experiments and verification suites: scaled Hermite values
//! against their Heisenberg limits over shrinking t-grids, closed-form limit
//! checks for the derivative families behind the radial kernel, and property
//! suites aggregating the analytic invariants of the kernel evaluators.
//!
//! Reports are plain data with serde serialization. All grids and quadrature
//! orders are fixed by the inputs, so identical calls produce bit-identical
//! JSON. Suites never return errors: an evaluation failure inside a suite
//! becomes a failed entry with the message in its detail field.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{KernelError, Result};
use crate::heisenberg_kernel::{h_derivs, h_kernel, HeisenbergParams};
use crate::lie_words::{beta_map, word_degree, Letter, LieWord, Space};
use crate::operator_algebra::{
    heisenberg_cylindrical_frame, heisenberg_frames, hermite, su2_frame, sphere_frames, DiffOp,
    EvalPoint, Expr,
};
use crate::riemannian_kernel::q_su2;
use crate::special_functions::{
    acos_sq_derivs, acosh_sq_derivs, trig_hyp_derivs, DerivFamily, FamilyKind,
};
use crate::subelliptic_kernel::{
    p_derivs, p_sphere, p_su2, QuadratureConfig, Space as PSpace, SubellipticPoint,
};

pub const DEFAULT_T_TOP: f64 = 0.2;
pub const DEFAULT_T_BOTTOM: f64 = 1e-3;
pub const DEFAULT_T_POINTS: usize = 8;

/// Targets below this magnitude are treated as zero by parity and the report
/// switches to absolute errors.
pub const DEGENERATE_TARGET_FLOOR: f64 = 1e-6;

const SCHEMA_VERSION: u32 = 1;

/// The compact evaluation window for convergence runs.
const RADIAL_WINDOW: f64 = 3.0;
const VERTICAL_WINDOW: f64 = 3.0;
const MAX_WORD_DEGREE: usize = 6;

/// The base point of a convergence run, for report serialization.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "chart", rename_all = "snake_case")]
pub enum ReportPoint {
    Cylindrical { r: f64, theta: f64, z: f64 },
    Vector { w: Vec<Complex64>, z: f64 },
}

/// One grid point of a convergence run.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub scaled_value: Complex64,
    pub abs_err: f64,
    /// Absent when the target is degenerate.
    pub rel_err: Option<f64>,
}

/// A scaled-Hermite convergence experiment against its limit value.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub space: String,
    pub word: String,
    pub point: ReportPoint,
    pub degree: usize,
    pub target: Complex64,
    pub degenerate_target: bool,
    pub rows: Vec<ConvergenceRow>,
    /// Errors non-increasing over the last four grid points.
    pub monotone_tail: bool,
    /// Relative error at the smallest t, or absolute error for degenerate
    /// targets.
    pub final_err: f64,
    /// Least-squares slope of log error against log t. Diagnostic only: the
    /// convergence statements carry no rate.
    pub fitted_slope: Option<f64>,
}

/// A geometric grid from `top` down to `bottom` with `len` points.
pub fn geometric_grid(top: f64, bottom: f64, len: usize) -> Result<Vec<f64>> {
    if !(top > bottom && bottom > 0.0 && top.is_finite()) {
        return Err(KernelError::Domain(format!(
            "grid needs top > bottom > 0, got {top} and {bottom}"
        )));
    }
    if len < 2 {
        return Err(KernelError::Domain(format!(
            "grid needs at least 2 points, got {len}"
        )));
    }
    let ratio = (bottom / top).powf(1.0 / (len - 1) as f64);
    Ok((0..len).map(|i| top * ratio.powi(i as i32)).collect())
}

/// The default t-grid for a run whose base radial coordinate is `r`: eight
/// geometric points from 0.2 down to 1e-3, with the top clipped so that the
/// scaled radial coordinate sqrt(t) r stays below pi/4.
pub fn default_t_grid(r: f64) -> Vec<f64> {
    let mut top = DEFAULT_T_TOP;
    if r > 0.0 {
        let cap = 0.95 * (PI / (4.0 * r)).powi(2);
        if cap < top {
            top = cap;
        }
    }
    geometric_grid(top, DEFAULT_T_BOTTOM.min(top / 2.0), DEFAULT_T_POINTS)
        .expect("default grid bounds are always valid")
}

fn resolve_grid(t_grid: Option<&[f64]>, r: f64) -> Result<Vec<f64>> {
    let grid = match t_grid {
        None => default_t_grid(r),
        Some(g) => g.to_vec(),
    };
    if grid.len() < 2 {
        return Err(KernelError::Domain(
            "a convergence grid needs at least 2 points".into(),
        ));
    }
    for &t in &grid {
        if !(t > 0.0 && t.is_finite()) {
            return Err(KernelError::Domain(format!(
                "grid values must be positive and finite, got {t}"
            )));
        }
    }
    for pair in grid.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(KernelError::Domain(
                "the t-grid must be strictly decreasing".into(),
            ));
        }
    }
    Ok(grid)
}

fn tag_t<T>(res: Result<T>, t: f64) -> Result<T> {
    res.map_err(|e| match e {
        KernelError::Domain(m) => KernelError::Domain(format!("at t = {t}: {m}")),
        KernelError::Numerical(m) => KernelError::Numerical(format!("at t = {t}: {m}")),
        other => other,
    })
}

fn fitted_slope(rows: &[ConvergenceRow], degenerate: bool) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|row| {
            let err = if degenerate {
                row.abs_err
            } else {
                row.rel_err.unwrap_or(f64::NAN)
            };
            (err > 0.0 && err.is_finite()).then(|| (row.t.ln(), err.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn assemble_report(
    space: String,
    word: String,
    point: ReportPoint,
    degree: usize,
    target: Complex64,
    samples: Vec<(f64, Complex64)>,
) -> ConvergenceReport {
    let degenerate = target.norm() < DEGENERATE_TARGET_FLOOR;
    let rows: Vec<ConvergenceRow> = samples
        .into_iter()
        .map(|(t, scaled)| {
            let abs_err = (scaled - target).norm();
            ConvergenceRow {
                t,
                scaled_value: scaled,
                abs_err,
                rel_err: (!degenerate).then(|| abs_err / target.norm()),
            }
        })
        .collect();
    let errs: Vec<f64> = rows
        .iter()
        .map(|row| if degenerate { row.abs_err } else { row.rel_err.unwrap() })
        .collect();
    let tail = errs.len().saturating_sub(4);
    let monotone_tail = errs[tail..].windows(2).all(|w| w[1] <= w[0]);
    let final_err = *errs.last().expect("grid has at least 2 points");
    let fitted_slope = fitted_slope(&rows, degenerate);
    ConvergenceReport {
        schema: SCHEMA_VERSION,
        space,
        word,
        point,
        degree,
        target,
        degenerate_target: degenerate,
        rows,
        monotone_tail,
        final_err,
        fitted_slope,
    }
}

fn check_window(r: f64, z: f64) -> Result<()> {
    if !(0.0..=RADIAL_WINDOW).contains(&r) {
        return Err(KernelError::Domain(format!(
            "radial coordinate must lie in [0, {RADIAL_WINDOW}], got {r}"
        )));
    }
    if !(-VERTICAL_WINDOW..=VERTICAL_WINDOW).contains(&z) {
        return Err(KernelError::Domain(format!(
            "z must lie in [-{VERTICAL_WINDOW}, {VERTICAL_WINDOW}], got {z}"
        )));
    }
    Ok(())
}

fn check_degree(word: &LieWord) -> Result<usize> {
    let degree = word_degree(word);
    if degree > MAX_WORD_DEGREE {
        return Err(KernelError::Domain(format!(
            "word degree {degree} exceeds the supported maximum {MAX_WORD_DEGREE}"
        )));
    }
    Ok(degree)
}

/// Runs the SU(2) convergence experiment for one word at one base point:
/// the scaled Hermite values t^{|xi|/2) K_xi(t, (sqrt(t) r, theta, tz))
/// against the Heisenberg target H_{beta(xi)}(1, (r, theta, z)). The empty
/// word compares kernels directly, t^2 p_t(sqrt(t) r, tz) against
/// 2 pi^2 h_1(r, z), so the zero-order constants are checked rather than
/// cancelled.
pub fn converge_su2(
    word: &LieWord,
    r: f64,
    theta: f64,
    z: f64,
    t_grid: Option<&[f64]>,
    cfg: &QuadratureConfig,
) -> Result<ConvergenceReport> {
    if word.space() != Space::Su2 {
        return Err(KernelError::Domain(format!(
            "converge_su2 needs an SU(2) word, got one on {:?}",
            word.space()
        )));
    }
    check_window(r, z)?;
    let degree = check_degree(word)?;
    if word.letters().is_empty() {
        let grid = resolve_grid(t_grid, r)?;
        let params = HeisenbergParams::new(1, 1.0)?;
        let target = 2.0 * PI * PI * h_derivs(&params, r, z, 0, 0)?.value;
        let mut samples = Vec::with_capacity(grid.len());
        for &t in &grid {
            let point = tag_t(SubellipticPoint::new(t.sqrt() * r, t * z, t, 1), t)?;
            let value = tag_t(p_su2(&point, cfg), t)?;
            samples.push((t, Complex64::new(t * t * value, 0.0)));
        }
        return Ok(assemble_report(
            "su2".into(),
            word.to_string(),
            ReportPoint::Cylindrical { r, theta, z },
            degree,
            Complex64::new(target, 0.0),
            samples,
        ));
    }
    if r == 0.0 {
        return Err(KernelError::Domain(
            "nonempty words need r > 0: the cylindrical frame coefficients are singular on the axis"
                .into(),
        ));
    }
    let grid = resolve_grid(t_grid, r)?;
    let beta = beta_map(word)?;
    let base = EvalPoint::Cylindrical { r, theta, z };
    let target = hermite(&beta, 1.0, &base, cfg)?.value;
    let mut samples = Vec::with_capacity(grid.len());
    for &t in &grid {
        let scaled_point = EvalPoint::Cylindrical {
            r: t.sqrt() * r,
            theta,
            z: t * z,
        };
        let out = tag_t(hermite(word, t, &scaled_point, cfg), t)?;
        samples.push((t, t.powf(degree as f64 / 2.0) * out.value));
    }
    Ok(assemble_report(
        "su2".into(),
        word.to_string(),
        ReportPoint::Cylindrical { r, theta, z },
        degree,
        target,
        samples,
    ))
}

fn kappa_to_heisenberg(word: &LieWord) -> Result<LieWord> {
    let d = match word.space() {
        Space::Sphere { d } => d,
        other => {
            return Err(KernelError::Domain(format!(
                "kappa words live on spheres, got {other:?}"
            )))
        }
    };
    let letters = word
        .letters()
        .iter()
        .map(|letter| match letter {
            Letter::T(0) => Ok(Letter::HeisZ0),
            Letter::T(j) => Ok(Letter::HeisZc(*j)),
            other => Err(KernelError::Domain(format!(
                "unexpected letter {other} in a sphere word"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    LieWord::new(Space::Heisenberg { d }, letters)
}

/// Runs the sphere convergence experiment: scaled values
/// t^{|kappa|/2} (T_kappa p_{t,d})(sqrt(t) w, tz)/p_{t,d}(sqrt(t) w, tz)
/// against the Heisenberg target (Z_kappa h_{1,d})(w, z)/h_{1,d}(w, z). The
/// empty word compares kernels directly, t^{d+1} p_{t,d} against 2 h_{1,d}.
pub fn converge_sphere(
    d: usize,
    word: &LieWord,
    w: &[Complex64],
    z: f64,
    t_grid: Option<&[f64]>,
    cfg: &QuadratureConfig,
) -> Result<ConvergenceReport> {
    if word.space() != (Space::Sphere { d }) {
        return Err(KernelError::Domain(format!(
            "converge_sphere(d = {d}) needs a matching sphere word, got one on {:?}",
            word.space()
        )));
    }
    if w.len() != d {
        return Err(KernelError::Domain(format!(
            "point has {} complex coordinates but d = {d}",
            w.len()
        )));
    }
    let rho: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    check_window(rho, z)?;
    let degree = check_degree(word)?;
    let space_name = format!("sphere(d={d})");
    let point = ReportPoint::Vector { w: w.to_vec(), z };
    if word.letters().is_empty() {
        let grid = resolve_grid(t_grid, rho)?;
        let params = HeisenbergParams::new(d as u32, 1.0)?;
        let target = 2.0 * h_derivs(&params, rho, z, 0, 0)?.value;
        let mut samples = Vec::with_capacity(grid.len());
        for &t in &grid {
            let r_t = (t.sqrt() * rho).atan();
            let sp = tag_t(SubellipticPoint::new(r_t, t * z, t, d as u32), t)?;
            let value = tag_t(p_sphere(&sp, cfg), t)?;
            samples.push((t, Complex64::new(t.powi(d as i32 + 1) * value, 0.0)));
        }
        return Ok(assemble_report(
            space_name,
            word.to_string(),
            point,
            degree,
            Complex64::new(target, 0.0),
            samples,
        ));
    }
    if rho == 0.0 {
        return Err(KernelError::Domain(
            "nonempty words need |w| > 0: the radial chain factors are singular at the pole"
                .into(),
        ));
    }
    let grid = resolve_grid(t_grid, rho)?;
    let heis_word = kappa_to_heisenberg(word)?;
    debug_assert_eq!(word_degree(&heis_word), degree);
    let base = EvalPoint::Vector { w: w.to_vec(), z };
    let target = hermite(&heis_word, 1.0, &base, cfg)?.value;
    let mut samples = Vec::with_capacity(grid.len());
    for &t in &grid {
        let rt = t.sqrt();
        let scaled_point = EvalPoint::Vector {
            w: w.iter().map(|c| c * rt).collect(),
            z: t * z,
        };
        let out = tag_t(hermite(word, t, &scaled_point, cfg), t)?;
        samples.push((t, t.powf(degree as f64 / 2.0) * out.value));
    }
    Ok(assemble_report(
        space_name,
        word.to_string(),
        point,
        degree,
        target,
        samples,
    ))
}

/// One grid point of the d = 1 sphere/SU(2) cross-check.
#[derive(Clone, Debug, Serialize)]
pub struct CrossCheckRow {
    pub t: f64,
    pub sphere_value: Complex64,
    pub su2_value: Complex64,
    pub abs_diff: f64,
}

/// Agreement record between the two kernel implementations at d = 1.
#[derive(Clone, Debug, Serialize)]
pub struct CrossCheckReport {
    pub schema: u32,
    pub point: ReportPoint,
    pub rows: Vec<CrossCheckRow>,
    pub worst: f64,
}

/// Cross-checks the d = 1 sphere run for kappa = (1) against the SU(2)
/// implementation. The sphere chart maps to the cylindrical one by
/// r = arctan|w|, theta = arg w + 2z, and T_1 expressed in the SU(2) frame
/// is i cos(r) e^{-i(2 theta - 3z)} (Y - iX)/2, so the scaled sphere Hermite
/// value must match that combination of SU(2) Hermite values; the pi^2
/// normalization difference between the kernels cancels in both ratios.
pub fn sphere_su2_cross_check(
    w: Complex64,
    z: f64,
    t_grid: Option<&[f64]>,
    cfg: &QuadratureConfig,
) -> Result<CrossCheckReport> {
    let rho = w.norm();
    check_window(rho, z)?;
    if rho == 0.0 {
        return Err(KernelError::Domain(
            "the cross-check needs |w| > 0".into(),
        ));
    }
    let grid = resolve_grid(t_grid, rho)?;
    let kappa = LieWord::new(Space::Sphere { d: 1 }, vec![Letter::T(1)])?;
    let word_x = LieWord::new(Space::Su2, vec![Letter::X])?;
    let word_y = LieWord::new(Space::Su2, vec![Letter::Y])?;
    let i = Complex64::new(0.0, 1.0);
    let mut rows = Vec::with_capacity(grid.len());
    let mut worst: f64 = 0.0;
    for &t in &grid {
        let rt = t.sqrt();
        let sphere_point = EvalPoint::Vector {
            w: vec![w * rt],
            z: t * z,
        };
        let sphere_value = rt * tag_t(hermite(&kappa, t, &sphere_point, cfg), t)?.value;
        let r_c = (rt * rho).atan();
        let theta_c = w.arg() + 2.0 * t * z;
        let z_c = t * z;
        let at = EvalPoint::Cylindrical {
            r: r_c,
            theta: theta_c,
            z: z_c,
        };
        let k_x = tag_t(hermite(&word_x, t, &at, cfg), t)?.value;
        let k_y = tag_t(hermite(&word_y, t, &at, cfg), t)?.value;
        let phase = (-i * (2.0 * theta_c - 3.0 * z_c)).exp();
        let su2_value = i * r_c.cos() * phase * rt * (k_y - i * k_x) / 2.0;
        let abs_diff = (sphere_value - su2_value).norm();
        worst = worst.max(abs_diff);
        rows.push(CrossCheckRow {
            t,
            sphere_value,
            su2_value,
            abs_diff,
        });
    }
    Ok(CrossCheckReport {
        schema: SCHEMA_VERSION,
        point: ReportPoint::Vector { w: vec![w], z },
        rows,
        worst,
    })
}

/// One check of a verification suite. `passed` is `margin <= threshold`,
/// where the margin is the entry's worst measured deviation in the metric
/// named by its detail text.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub threshold: f64,
    pub detail: String,
}

/// A machine-readable pass/fail report for one suite run.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub schema: u32,
    pub suite: String,
    pub passed: bool,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    fn new(suite: &str, entries: Vec<SuiteEntry>) -> SuiteReport {
        SuiteReport {
            schema: SCHEMA_VERSION,
            suite: suite.into(),
            passed: entries.iter().all(|e| e.passed),
            entries,
        }
    }
}

fn entry_from(name: &str, outcome: Result<(f64, f64, String)>) -> SuiteEntry {
    match outcome {
        Ok((margin, threshold, detail)) => SuiteEntry {
            name: name.into(),
            passed: margin <= threshold,
            margin,
            threshold,
            detail,
        },
        Err(e) => SuiteEntry {
            name: name.into(),
            passed: false,
            margin: f64::INFINITY,
            threshold: 0.0,
            detail: format!("evaluation failed: {e}"),
        },
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn double_factorial_odd(n: usize) -> f64 {
    (1..=n).map(|k| (2 * k - 1) as f64).product()
}

const LEMMA_KS: [f64; 3] = [1.0, 3.0, 10.0];

/// Verifies the closed-form limits and bound shapes of the derivative
/// families used by the radial kernel: the arccos^2/arccosh^2 limits at the
/// branch point, the cos(K arccosh) limits and their domination of the
/// interior, the cosh(K arccos) growth bound, and the geometric theta-tail
/// bound. `sample_grid` holds offsets from the branch point used for the
/// shape checks; empty selects a default ladder.
pub fn lemma_suite(max_order: usize, sample_grid: &[f64]) -> SuiteReport {
    let offsets: Vec<f64> = if sample_grid.is_empty() {
        vec![1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.5]
    } else {
        sample_grid.to_vec()
    };
    let mut entries = Vec::new();

    let n_top = max_order.clamp(1, 8);
    entries.push(entry_from("acos_sq_limits", (|| {
        let vals = acos_sq_derivs(1.0, n_top)?;
        let mut worst: f64 = 0.0;
        for n in 1..=n_top {
            let target = 2.0 * factorial(n - 1).powi(2) / double_factorial_odd(n);
            worst = worst.max((vals[n] - target).abs() / target.abs());
        }
        Ok((
            worst,
            1e-8,
            format!("derivative limits of arccos^2 at 1, orders 1..={n_top}"),
        ))
    })()));

    entries.push(entry_from("acosh_sq_limits", (|| {
        let vals = acosh_sq_derivs(1.0, n_top)?;
        let mut worst: f64 = 0.0;
        for n in 1..=n_top {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let target = 2.0 * sign * factorial(n - 1).powi(2) / double_factorial_odd(n);
            worst = worst.max((vals[n] - target).abs() / target.abs());
        }
        Ok((
            worst,
            1e-8,
            format!("derivative limits of arccosh^2 at 1, orders 1..={n_top}"),
        ))
    })()));

    let n_osc = max_order.clamp(1, 5);
    entries.push(entry_from("cos_k_acosh_limits", (|| {
        let mut worst: f64 = 0.0;
        for &k in &LEMMA_KS {
            let family = DerivFamily::new(FamilyKind::CosKAcosh, k)?;
            let vals = trig_hyp_derivs(&family, 1.0, n_osc)?;
            for n in 1..=n_osc {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let product: f64 = (0..n).map(|m| k * k + (m * m) as f64).product();
                let target = sign * product / double_factorial_odd(n);
                worst = worst.max((vals[n] - target).abs() / target.abs());
            }
        }
        Ok((
            worst,
            1e-8,
            format!(
                "limits of cos(K arccosh x) derivatives at 1, K in {LEMMA_KS:?}, orders 1..={n_osc}"
            ),
        ))
    })()));

    entries.push(entry_from("cos_k_acosh_domination", (|| {
        let mut worst: f64 = 0.0;
        for &k in &LEMMA_KS {
            let family = DerivFamily::new(FamilyKind::CosKAcosh, k)?;
            let limits = trig_hyp_derivs(&family, 1.0, n_osc)?;
            for &u in &offsets {
                let vals = trig_hyp_derivs(&family, 1.0 + u, n_osc)?;
                for n in 1..=n_osc {
                    worst = worst.max(vals[n].abs() / limits[n].abs());
                }
            }
        }
        Ok((
            worst,
            1.0 + 1e-9,
            "interior derivative magnitudes against their branch-point limits".into(),
        ))
    })()));

    entries.push(entry_from("cosh_k_acos_bound", (|| {
        let mut xs: Vec<f64> = offsets
            .iter()
            .flat_map(|&u| [u, 1.0 - u])
            .filter(|&x| x > 0.0 && x < 1.0)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let x_min = xs[0];
        let mut worst: f64 = 0.0;
        let mut calibrated: f64 = 0.0;
        for &k in &LEMMA_KS {
            let family = DerivFamily::new(FamilyKind::CoshKAcos, k)?;
            let base = trig_hyp_derivs(&family, x_min, n_osc)?;
            for n in 1..=n_osc {
                calibrated =
                    calibrated.max(base[n].abs() / (k.powi(n as i32) * (k * PI / 2.0).exp()));
            }
            for &x in &xs[1..] {
                let vals = trig_hyp_derivs(&family, x, n_osc)?;
                for n in 1..=n_osc {
                    worst = worst.max(vals[n].abs() / base[n].abs());
                }
            }
        }
        Ok((
            worst,
            1.0 + 1e-9,
            format!(
                "monotone domination toward x = 0; calibrated constant C <= {calibrated:.6e} against K^n e^(K pi/2)"
            ),
        ))
    })()));

    let n_tail = max_order.clamp(1, 6);
    entries.push(entry_from("geometric_tail", (|| {
        let c = PI * PI;
        let mut worst: f64 = 0.0;
        let mut t = 0.05;
        while t < 1.0 {
            for n in 0..=n_tail {
                let mut ratio = 0.0;
                for k in 1..=200u32 {
                    let term = (-c * (k - 1) as f64 / t).exp() * (k as f64).powi(n as i32);
                    ratio += term;
                    if term < 1e-18 * ratio {
                        break;
                    }
                }
                worst = worst.max(ratio);
            }
            t += 0.05;
        }
        Ok((
            worst,
            2.0,
            format!(
                "sup over t in (0,1) of sum_k e^(-ck/t) k^n / e^(-c/t), c = pi^2, n <= {n_tail}"
            ),
        ))
    })()));

    SuiteReport::new("lemmas", entries)
}

fn simpson(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, n: usize) -> Result<f64> {
    let h = (b - a) / n as f64;
    let mut s = f(a)? + f(b)?;
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += weight * f(a + i as f64 * h)?;
    }
    Ok(s * h / 3.0)
}

/// Total mass of the SU(2) subelliptic kernel against the normalized Haar
/// measure, on fixed composite Simpson grids sized for the smooth integrand.
pub fn su2_mass(t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let mut pcfg = cfg.clone();
    pcfg.rel_tol = pcfg.rel_tol.max(1e-7);
    pcfg.abs_tol = pcfg.abs_tol.max(1e-10);
    let mass = simpson(
        &mut |z| {
            simpson(
                &mut |r| {
                    let point = SubellipticPoint::new(r, z, t, 1)?;
                    Ok(p_su2(&point, &pcfg)? * (2.0 * r).sin())
                },
                0.0,
                PI / 2.0 - 1e-9,
                64,
            )
        },
        0.0,
        PI,
        96,
    )?;
    Ok(mass / PI)
}

fn richardson(f: &mut dyn FnMut(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    let d1 = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let d2 = (f(x + h / 2.0)? - f(x - h / 2.0)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

fn bracket_residual_margin(
    residual: &DiffOp,
    probe: &EvalPoint,
) -> Result<f64> {
    let canon = residual.canonical()?;
    let mut worst: f64 = 0.0;
    for (coef, _) in canon.terms() {
        worst = worst.max(coef.eval(probe)?.norm());
    }
    Ok(worst)
}

/// Aggregates the pointwise analytic invariants of the kernel evaluators:
/// normalization at the Heisenberg origin, total mass, z-parity, the
/// Heisenberg dilation identity, branch continuity of the radial kernel,
/// analytic derivatives against Richardson differences, the pi^2 ratio
/// between the d = 1 sphere and SU(2) kernels, and the frame bracket
/// identities.
pub fn property_suite(cfg: &QuadratureConfig) -> SuiteReport {
    let mut entries = Vec::new();

    entries.push(entry_from("heisenberg_origin_value", (|| {
        let params = HeisenbergParams::new(1, 1.0)?;
        let value = h_kernel(&params, 0.0, 0.0)?.value;
        Ok((
            (value * 32.0 - 1.0).abs(),
            1e-10,
            "h_1(0,0) = 1/32".into(),
        ))
    })()));

    entries.push(entry_from("heisenberg_dilation", (|| {
        let (r, z) = (0.8, 0.5);
        let mut worst: f64 = 0.0;
        for &t in &[0.3, 1.7] {
            for d in 1..=3u32 {
                let at_t = h_kernel(&HeisenbergParams::new(d, t)?, r, z)?.value;
                let at_one =
                    h_kernel(&HeisenbergParams::new(d, 1.0)?, r / t.sqrt(), z / t)?.value;
                let scaled = at_one / t.powi(d as i32 + 1);
                worst = worst.max((at_t - scaled).abs() / scaled.abs());
            }
        }
        Ok((
            worst,
            1e-10,
            "h_td(r,z) = t^-(d+1) h_1d(r/sqrt(t), z/t) over t in {0.3, 1.7}, d <= 3".into(),
        ))
    })()));

    entries.push(entry_from("su2_mass", (|| {
        let mut worst: f64 = 0.0;
        for &t in &[0.1, 0.5] {
            worst = worst.max((su2_mass(t, cfg)? - 1.0).abs());
        }
        Ok((
            worst,
            1e-5,
            "kernel mass against normalized Haar measure at t in {0.1, 0.5}".into(),
        ))
    })()));

    entries.push(entry_from("su2_z_parity", (|| {
        let mut worst: f64 = 0.0;
        for &(r, z, t) in &[(0.7, 0.6, 0.3), (0.4, 1.1, 0.8)] {
            let plus = p_su2(&SubellipticPoint::new(r, z, t, 1)?, cfg)?;
            let minus = p_su2(&SubellipticPoint::new(r, -z, t, 1)?, cfg)?;
            worst = worst.max((plus - minus).abs() / plus.abs());
        }
        Ok((worst, 1e-8, "p(r, -z) = p(r, z)".into()))
    })()));

    entries.push(entry_from("radial_branch_continuity", (|| {
        let mut worst: f64 = 0.0;
        for &t in &[0.15, 0.5] {
            let below = q_su2(t, 1.0 - 1e-9)?;
            let above = q_su2(t, 1.0 + 1e-9)?;
            worst = worst.max((below - above).abs() / below.abs());
        }
        Ok((
            worst,
            1e-6,
            "radial kernel agrees across the trig/hyperbolic seam".into(),
        ))
    })()));

    entries.push(entry_from("su2_fd_vs_analytic", (|| {
        let (r, z, t) = (0.6, 0.4, 0.5);
        let point = SubellipticPoint::new(r, z, t, 1)?;
        let dr = p_derivs(PSpace::Su2, &point, cfg, 1, 0)?;
        let dz = p_derivs(PSpace::Su2, &point, cfg, 0, 1)?;
        let fd_r = richardson(
            &mut |x| p_su2(&SubellipticPoint::new(x, z, t, 1)?, cfg),
            r,
            1e-4,
        )?;
        let fd_z = richardson(
            &mut |x| p_su2(&SubellipticPoint::new(r, x, t, 1)?, cfg),
            z,
            1e-4,
        )?;
        let worst = ((dr - fd_r).abs() / fd_r.abs()).max((dz - fd_z).abs() / fd_z.abs());
        Ok((
            worst,
            1e-6,
            "first subelliptic derivatives against Richardson differences".into(),
        ))
    })()));

    entries.push(entry_from("heisenberg_fd_vs_analytic", (|| {
        let params = HeisenbergParams::new(1, 1.0)?;
        let (r, z) = (0.9, 0.6);
        let dr = h_derivs(&params, r, z, 1, 0)?.value;
        let dz = h_derivs(&params, r, z, 0, 1)?.value;
        let fd_r = richardson(&mut |x| Ok(h_kernel(&params, x, z)?.value), r, 1e-4)?;
        let fd_z = richardson(&mut |x| Ok(h_kernel(&params, r, x)?.value), z, 1e-4)?;
        let worst = ((dr - fd_r).abs() / fd_r.abs()).max((dz - fd_z).abs() / fd_z.abs());
        Ok((
            worst,
            1e-7,
            "first Heisenberg derivatives against Richardson differences".into(),
        ))
    })()));

    entries.push(entry_from("sphere_su2_ratio", (|| {
        let mut worst: f64 = 0.0;
        for &(r, z, t) in &[(0.5, 0.3, 0.4), (1.1, -0.8, 0.2)] {
            let point = SubellipticPoint::new(r, z, t, 1)?;
            let sphere = p_sphere(&point, cfg)?;
            let su2 = p_su2(&point, cfg)?;
            worst = worst.max((sphere * PI * PI - su2).abs() / su2.abs());
        }
        Ok((
            worst,
            1e-10,
            "pi^2 p_t1 = p_t at sampled points".into(),
        ))
    })()));

    entries.push(entry_from("bracket_identities", (|| {
        let cyl_probe = EvalPoint::Cylindrical {
            r: 0.9,
            theta: 1.3,
            z: 0.5,
        };
        let su2 = su2_frame();
        let x = su2.field(Letter::X)?;
        let y = su2.field(Letter::Y)?;
        let zf = su2.field(Letter::Z)?;
        let mut worst: f64 = 0.0;
        worst = worst.max(bracket_residual_margin(
            &x.bracket(y).sub(&zf.scale(Expr::num(2.0))),
            &cyl_probe,
        )?);
        worst = worst.max(bracket_residual_margin(
            &y.bracket(zf).sub(&x.scale(Expr::num(2.0))),
            &cyl_probe,
        )?);
        worst = worst.max(bracket_residual_margin(
            &zf.bracket(x).sub(&y.scale(Expr::num(2.0))),
            &cyl_probe,
        )?);
        let cyl = heisenberg_cylindrical_frame();
        let xc = cyl.field(Letter::HeisX(1))?;
        let yc = cyl.field(Letter::HeisY(1))?;
        let zc = cyl.field(Letter::HeisZ0)?;
        worst = worst.max(bracket_residual_margin(
            &xc.bracket(yc).sub(&zc.scale(Expr::num(2.0))),
            &cyl_probe,
        )?);
        let vec_probe = EvalPoint::Vector {
            w: vec![Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.5)],
            z: 0.7,
        };
        let heis = heisenberg_frames(2)?;
        let x1 = heis.field(Letter::HeisX(1))?;
        let y1 = heis.field(Letter::HeisY(1))?;
        let y2 = heis.field(Letter::HeisY(2))?;
        let z0 = heis.field(Letter::HeisZ0)?;
        let zc1 = heis.field(Letter::HeisZc(1))?;
        let zb1 = heis.field(Letter::HeisZcBar(1))?;
        worst = worst.max(bracket_residual_margin(
            &x1.bracket(y1).sub(&z0.scale(Expr::num(2.0))),
            &vec_probe,
        )?);
        worst = worst.max(bracket_residual_margin(&x1.bracket(y2), &vec_probe)?);
        worst = worst.max(bracket_residual_margin(&x1.bracket(z0), &vec_probe)?);
        worst = worst.max(bracket_residual_margin(
            &zc1.bracket(zb1).sub(&z0.scale(Expr::imag(-1.0))),
            &vec_probe,
        )?);
        let sphere = sphere_frames(2)?;
        let t0 = sphere.field(Letter::T(0))?;
        let t1 = sphere.field(Letter::T(1))?;
        worst = worst.max(bracket_residual_margin(
            &t0.bracket(t1).sub(&t1.scale(Expr::imag(-1.0))),
            &vec_probe,
        )?);
        Ok((
            worst,
            0.0,
            "frame bracket relations close after canonicalization".into(),
        ))
    })()));

    SuiteReport::new("properties", entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn su2_word(letters: Vec<Letter>) -> LieWord {
        LieWord::new(Space::Su2, letters).unwrap()
    }

    #[test]
    fn default_grid_shape_and_window() {
        let grid = default_t_grid(0.5);
        assert_eq!(grid.len(), DEFAULT_T_POINTS);
        assert!((grid[0] - DEFAULT_T_TOP).abs() < 1e-15);
        assert!((grid[7] - DEFAULT_T_BOTTOM).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
        let clipped = default_t_grid(3.0);
        for &t in &clipped {
            assert!(t.sqrt() * 3.0 < PI / 4.0, "window violated at t = {t}");
        }
    }

    #[test]
    fn custom_grids_are_validated() {
        let word = su2_word(vec![Letter::X]);
        let bad = [0.1, 0.1, 0.05];
        assert!(converge_su2(&word, 1.0, 0.0, 0.5, Some(&bad), &cfg()).is_err());
        let negative = [0.1, -0.05];
        assert!(converge_su2(&word, 1.0, 0.0, 0.5, Some(&negative), &cfg()).is_err());
        let short = [0.1];
        assert!(converge_su2(&word, 1.0, 0.0, 0.5, Some(&short), &cfg()).is_err());
    }

    #[test]
    fn window_and_degree_preconditions() {
        let word = su2_word(vec![Letter::X]);
        assert!(converge_su2(&word, 3.5, 0.0, 0.5, None, &cfg()).is_err());
        assert!(converge_su2(&word, 1.0, 0.0, 3.5, None, &cfg()).is_err());
        assert!(converge_su2(&word, 0.0, 0.0, 0.5, None, &cfg()).is_err());
        let deep = su2_word(vec![Letter::Z, Letter::Z, Letter::Z, Letter::X]);
        assert!(matches!(
            converge_su2(&deep, 1.0, 0.0, 0.5, None, &cfg()),
            Err(KernelError::Domain(_))
        ));
    }

    #[test]
    fn su2_zero_order_kernel_limit_converges() {
        let report = converge_su2(
            &LieWord::empty(Space::Su2),
            0.5,
            0.0,
            0.5,
            None,
            &cfg(),
        )
        .unwrap();
        assert!(!report.degenerate_target);
        assert!(report.monotone_tail, "tail errors should be non-increasing");
        assert!(
            report.final_err < 0.05,
            "final relative error {} out of tolerance",
            report.final_err
        );
        assert_eq!(report.rows.len(), DEFAULT_T_POINTS);
        assert_eq!(report.degree, 0);
        assert!(report.fitted_slope.unwrap() > 0.0);
    }

    #[test]
    fn su2_first_order_word_hits_frozen_target() {
        let report = converge_su2(
            &su2_word(vec![Letter::X]),
            1.0,
            0.0,
            0.5,
            None,
            &cfg(),
        )
        .unwrap();
        let frozen = -0.787707575413638087757954672258909151;
        assert!(
            (report.target.re - frozen).abs() < 1e-10 * frozen.abs(),
            "target {} drifted from the pinned value",
            report.target
        );
        assert!(report.target.im.abs() < 1e-12);
        assert!(report.monotone_tail);
        assert!(report.final_err < 0.05);
        let errs: Vec<f64> = report.rows.iter().map(|r| r.rel_err.unwrap()).collect();
        let tail = &errs[errs.len() - 4..];
        assert!(
            tail.windows(2).all(|w| w[1] < w[0]),
            "tail {tail:?} is not strictly decreasing"
        );
    }

    #[test]
    fn su2_vertical_word_at_symmetric_point_is_degenerate() {
        let report = converge_su2(
            &su2_word(vec![Letter::Z]),
            0.8,
            0.4,
            0.0,
            None,
            &cfg(),
        )
        .unwrap();
        assert!(report.degenerate_target);
        assert!(report.rows.iter().all(|r| r.rel_err.is_none()));
        assert!(
            report.rows.iter().all(|r| r.abs_err < 1e-6),
            "parity-degenerate values should be near zero"
        );
    }

    #[test]
    fn sphere_first_order_word_hits_frozen_target() {
        let word = LieWord::new(Space::Sphere { d: 2 }, vec![Letter::T(1)]).unwrap();
        let w = vec![Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)];
        let report = converge_sphere(2, &word, &w, 0.3, None, &cfg()).unwrap();
        let frozen = Complex64::new(
            -0.179394533433065067806000197343958644,
            -0.0327094636572519874188168569468176071,
        );
        assert!(
            (report.target - frozen).norm() < 1e-10 * frozen.norm(),
            "target {} drifted from the pinned value",
            report.target
        );
        assert!(report.monotone_tail);
        assert!(report.final_err < 0.05);
    }

    #[test]
    fn sphere_and_su2_zero_order_targets_differ_by_pi_squared() {
        let w = vec![Complex64::new(0.8, 0.0)];
        let sphere = converge_sphere(
            1,
            &LieWord::empty(Space::Sphere { d: 1 }),
            &w,
            0.5,
            None,
            &cfg(),
        )
        .unwrap();
        let su2 = converge_su2(
            &LieWord::empty(Space::Su2),
            0.8,
            0.0,
            0.5,
            None,
            &cfg(),
        )
        .unwrap();
        let ratio = su2.target.re / sphere.target.re;
        assert!(
            (ratio - PI * PI).abs() < 1e-10 * PI * PI,
            "targets should differ by exactly pi^2, got ratio {ratio}"
        );
        assert!(sphere.final_err < 0.05);
        assert!(sphere.monotone_tail);
    }

    #[test]
    fn cross_check_agrees_for_complex_base_point() {
        let report = sphere_su2_cross_check(
            Complex64::new(0.6, 0.3),
            0.4,
            Some(&[0.1, 0.02, 0.004]),
            &cfg(),
        )
        .unwrap();
        assert!(
            report.worst < 1e-6,
            "implementations disagree by {}",
            report.worst
        );
        for row in &report.rows {
            assert!(row.sphere_value.norm() > 1e-3, "check should be nontrivial");
        }
    }

    #[test]
    fn lemma_suite_passes_with_defaults() {
        let report = lemma_suite(8, &[]);
        for entry in &report.entries {
            assert!(
                entry.passed,
                "{} failed: margin {} > {} ({})",
                entry.name, entry.margin, entry.threshold, entry.detail
            );
        }
        assert!(report.passed);
        assert_eq!(report.entries.len(), 6);
    }

    #[test]
    fn property_suite_passes() {
        let report = property_suite(&cfg());
        for entry in &report.entries {
            assert!(
                entry.passed,
                "{} failed: margin {} > {} ({})",
                entry.name, entry.margin, entry.threshold, entry.detail
            );
        }
        assert!(report.passed);
    }

    #[test]
    fn reports_serialize_deterministically() {
        let grid = [0.05, 0.02];
        let run = || {
            let report = converge_su2(
                &su2_word(vec![Letter::Z]),
                0.7,
                0.2,
                0.6,
                Some(&grid),
                &cfg(),
            )
            .unwrap();
            serde_json::to_string(&report).unwrap()
        };
        let first = run();
        let second = run();
        assert_eq!(first, second);
        assert!(first.contains("\"schema\":1"));
        assert!(first.contains("\"chart\":\"cylindrical\""));
    }
}
