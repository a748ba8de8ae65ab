//! Riemannian heat kernel on SU(2) and the odd spheres.
//!
//! The kernel is evaluated through its Poisson-summation decomposition
//! q_t(x) = pre(t) * Q(t,x) * (1 + R(t,x)) with pre(t) = sqrt(pi) e^t / (4 t^{3/2}).
//! On the trigonometric branch (x <= 1, geodesic angle a = arccos x)
//!
//!   Q1 = (a / sin a) e^{-a^2/4t},
//!   R1 = 2 sum_{k>=1} e^{-pi^2 k^2/t} [cosh(Ka) - 2 pi k sinh(Ka)/a],   K = pi k / t,
//!
//! and on the hyperbolic branch (x >= 1, ah = arccosh x)
//!
//!   Q2 = (ah / sinh ah) e^{+ah^2/4t},
//!   R2 = 2 sum_{k>=1} e^{-pi^2 k^2/t} [cos(K ah) - 2 pi k sin(K ah)/ah].
//!
//! Derivatives in x never differentiate these displays termwise by hand:
//! Q = 2t * d/dx e^{-s(x)/4t} exactly, where s is the analytic continuation
//! of arccos^2 across x = 1, so all Q-derivatives come from one Faa di Bruno
//! pass over the geodesic jet, and the R-series derivatives come from the
//! closed-form jets of its cosh/sinh-cardinal (resp. cos/sinc) terms.
//!
//! e^{+ah^2/4t} overflows f64 quickly, so every jet is returned as a
//! mantissa vector plus a `log_scale` that the caller combines downstream.

use std::f64::consts::PI;

use crate::error::{KernelError, Result};
use crate::faa_di_bruno::composite_derivs;
use crate::special_functions::{trig_hyp_derivs, DerivFamily, FamilyKind};

/// Hard cap on requested derivative order (the polynomial tables go a bit
/// further; this leaves headroom for the sphere shift).
pub const MAX_Q_ORDER: usize = 16;

pub const DEFAULT_R_KMAX: usize = 10;
pub const DEFAULT_R_TOLERANCE: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Trig,
    Hyp,
}

/// Derivatives of a radial kernel at one point: the k-th derivative is
/// `vals[k] * exp(log_scale)`. On the trigonometric branch `log_scale` is 0
/// and the values are plain; on the hyperbolic branch `log_scale` is
/// arccosh^2(x)/4t, which the subelliptic integrand fuses with its own
/// Gaussian exponent instead of exponentiating.
#[derive(Clone, Debug)]
pub struct RadialDerivs {
    pub log_scale: f64,
    pub vals: Vec<f64>,
    pub branch: Branch,
}

impl RadialDerivs {
    pub fn order(&self) -> usize {
        self.vals.len().saturating_sub(1)
    }

    /// Plain value of the k-th derivative. May overflow for small t on the
    /// hyperbolic branch; prefer working with the mantissa + log_scale pair.
    pub fn value(&self, k: usize) -> f64 {
        self.vals[k] * self.log_scale.exp()
    }
}

/// Branch descriptor plus the R-series truncation policy.
#[derive(Clone, Copy, Debug)]
pub struct QRDecomposition {
    pub t: f64,
    pub branch: Branch,
    pub series_cutoff_kmax: usize,
    pub tolerance: f64,
}

impl QRDecomposition {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        check_t(t)?;
        check_x(x)?;
        let branch = if x <= 1.0 { Branch::Trig } else { Branch::Hyp };
        Ok(QRDecomposition {
            t,
            branch,
            series_cutoff_kmax: DEFAULT_R_KMAX,
            tolerance: DEFAULT_R_TOLERANCE,
        })
    }

    pub fn prefactor(&self) -> f64 {
        q_prefactor(self.t)
    }

    /// Derivatives d^n/dx^n R(t, x) for n = 0..=n_max, summed over k with the
    /// configured truncation rule.
    pub fn r_series(&self, x: f64, n_max: usize) -> Result<Vec<f64>> {
        check_x(x)?;
        check_q_order(n_max)?;
        let on_trig = x <= 1.0;
        if (self.branch == Branch::Trig) != on_trig && x != 1.0 {
            return Err(KernelError::Domain(format!(
                "x = {x} lies on the other branch of this decomposition"
            )));
        }
        let t = self.t;
        let a = if on_trig { x.acos() } else { x.acosh() };
        let mut total = vec![0.0; n_max + 1];
        for k in 1..=self.series_cutoff_kmax.max(1) {
            let kf = k as f64;
            let big_k = PI * kf / t;
            let log_gauss = -PI * PI * kf * kf / t;
            if on_trig {
                if big_k * a > 700.0 {
                    if log_gauss + big_k * a < -700.0 {
                        break;
                    }
                    return Err(KernelError::Numerical(format!(
                        "R-series term overflows at k={k}: x={x} is too close to -1 for t={t}"
                    )));
                }
                if log_gauss < -740.0 {
                    // e^{log_gauss} underflows and cosh(Ka) <= e^700 cannot
                    // rescue the product above ~1e-18
                    break;
                }
            } else if log_gauss < -740.0 {
                break;
            }
            let (cosh_kind, sinhc_kind) = if on_trig {
                (FamilyKind::CoshKAcos, FamilyKind::SinhcKAcos)
            } else {
                (FamilyKind::CosKAcosh, FamilyKind::SincKAcosh)
            };
            let cj = trig_hyp_derivs(&DerivFamily::new(cosh_kind, big_k)?, x, n_max)?;
            let sj = trig_hyp_derivs(&DerivFamily::new(sinhc_kind, big_k)?, x, n_max)?;
            let weight = 2.0 * log_gauss.exp();
            let mut term_mag = 0.0_f64;
            let mut partial_mag = 0.0_f64;
            for n in 0..=n_max {
                let term = weight * (cj[n] - 2.0 * PI * kf * sj[n]);
                total[n] += term;
                term_mag = term_mag.max(term.abs());
                partial_mag = partial_mag.max(total[n].abs());
            }
            if term_mag <= self.tolerance * partial_mag {
                break;
            }
        }
        Ok(total)
    }
}

pub(crate) fn q_prefactor(t: f64) -> f64 {
    PI.sqrt() * t.exp() / (4.0 * t.powf(1.5))
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Domain(format!("time must be positive, got {t}")))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x > -1.0 && x.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Domain(format!(
            "kernel argument needs x > -1 (x = -1 is the cut locus), got {x}"
        )))
    }
}

fn check_q_order(n_max: usize) -> Result<()> {
    if n_max <= MAX_Q_ORDER {
        Ok(())
    } else {
        Err(KernelError::UnsupportedOrder {
            requested: n_max,
            max: MAX_Q_ORDER,
        })
    }
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for j in 1..=n {
        row[j] = row[j - 1] * (n - j + 1) as f64 / j as f64;
    }
    row
}

/// Jet of the Gaussian factor Q alone (no prefactor, no R): mantissa of
/// d^n/dx^n Q for n = 0..=n_max with the branch log-scale split off.
pub(crate) fn big_q_jet(t: f64, x: f64, n_max: usize) -> Result<RadialDerivs> {
    check_t(t)?;
    check_x(x)?;
    check_q_order(n_max)?;
    let s = crate::special_functions::geodesic_sq_derivs(x, n_max + 1)?;
    let inv4t = 1.0 / (4.0 * t);
    let mut outer = Vec::with_capacity(n_max + 2);
    let mut pw = 1.0;
    for _ in 0..=n_max + 1 {
        outer.push(pw);
        pw *= -inv4t;
    }
    let phi = composite_derivs(&outer, &s, n_max + 1)?;
    let mut vals: Vec<f64> = phi[1..=n_max + 1].iter().map(|p| 2.0 * t * p).collect();
    let (branch, log_scale) = if x <= 1.0 {
        let damp = (-s[0] * inv4t).exp();
        for v in &mut vals {
            *v *= damp;
        }
        (Branch::Trig, 0.0)
    } else {
        (Branch::Hyp, -s[0] * inv4t)
    };
    Ok(RadialDerivs {
        log_scale,
        vals,
        branch,
    })
}

/// Full kernel jet pre * Q * (1+R); `include_r` lets callers measure the
/// R-branch contribution by difference.
pub(crate) fn q_jet(t: f64, x: f64, n_max: usize, include_r: bool) -> Result<RadialDerivs> {
    let q = big_q_jet(t, x, n_max)?;
    let pre = q_prefactor(t);
    let mut vals = vec![0.0; n_max + 1];
    if include_r {
        let qr = QRDecomposition::new(t, x)?;
        let r = qr.r_series(x, n_max)?;
        for n in 0..=n_max {
            let binom = binomial_row(n);
            let mut acc = 0.0;
            for j in 0..=n {
                let g = if n == j { 1.0 + r[0] } else { r[n - j] };
                acc += binom[j] * q.vals[j] * g;
            }
            vals[n] = pre * acc;
        }
    } else {
        for n in 0..=n_max {
            vals[n] = pre * q.vals[n];
        }
    }
    Ok(RadialDerivs {
        log_scale: q.log_scale,
        vals,
        branch: q.branch,
    })
}

/// Jets with and without the R factor from one pass over the shared
/// Gaussian jet and theta tail; the difference isolates the R-branch
/// contribution without paying for two full evaluations.
pub(crate) fn q_jet_pair(t: f64, x: f64, n_max: usize) -> Result<(RadialDerivs, RadialDerivs)> {
    let q = big_q_jet(t, x, n_max)?;
    let pre = q_prefactor(t);
    let qr = QRDecomposition::new(t, x)?;
    let r = qr.r_series(x, n_max)?;
    let mut with = vec![0.0; n_max + 1];
    let mut without = vec![0.0; n_max + 1];
    for n in 0..=n_max {
        let binom = binomial_row(n);
        let mut acc = 0.0;
        for j in 0..=n {
            let g = if n == j { 1.0 + r[0] } else { r[n - j] };
            acc += binom[j] * q.vals[j] * g;
        }
        with[n] = pre * acc;
        without[n] = pre * q.vals[n];
    }
    Ok((
        RadialDerivs {
            log_scale: q.log_scale,
            vals: with,
            branch: q.branch,
        },
        RadialDerivs {
            log_scale: q.log_scale,
            vals: without,
            branch: q.branch,
        },
    ))
}

fn sphere_scale(d: u32, t: f64) -> f64 {
    let shift = (d - 1) as i32;
    (1.0 / (PI * PI)) * (0.5 / PI).powi(shift) * (((d * d - 1) as f64) * t).exp()
}

/// Sphere jets with and without the R factor, same contract as `q_sphere`.
pub(crate) fn q_sphere_jet_pair(
    t: f64,
    d: u32,
    x: f64,
    n_max: usize,
) -> Result<(RadialDerivs, RadialDerivs)> {
    if d < 1 {
        return Err(KernelError::Domain(format!("sphere index d must be >= 1, got {d}")));
    }
    let shift = (d - 1) as usize;
    let (wi, wo) = q_jet_pair(t, x, n_max + shift)?;
    let scale = sphere_scale(d, t);
    let cut = |jet: RadialDerivs| RadialDerivs {
        log_scale: jet.log_scale,
        vals: jet.vals[shift..].iter().map(|v| scale * v).collect(),
        branch: jet.branch,
    };
    Ok((cut(wi), cut(wo)))
}

/// Heat kernel value q_t(x) on SU(2), normalized so that its integral
/// against the normalized Haar measure is 1.
pub fn q_su2(t: f64, x: f64) -> Result<f64> {
    let jet = q_su2_derivs(t, x, 0)?;
    let v = jet.value(0);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(KernelError::Numerical(format!(
            "q overflows f64 at t={t}, x={x}; use the log-scaled derivative interface"
        )))
    }
}

/// Derivatives d^k/dx^k q_t(x) for k = 0..=n_max (log-scaled on x > 1).
pub fn q_su2_derivs(t: f64, x: f64, n_max: usize) -> Result<RadialDerivs> {
    q_jet(t, x, n_max, true)
}

/// Kernel jet on S^{2d+1}: the derivative recursion collapses to
/// q_{t,d}^{(k)} = (1/pi^2)(1/2pi)^{d-1} e^{(d^2-1)t} q_t^{(d-1+k)}.
pub fn q_sphere(t: f64, d: u32, x: f64, n_max: usize) -> Result<RadialDerivs> {
    if d < 1 {
        return Err(KernelError::Domain(format!("sphere index d must be >= 1, got {d}")));
    }
    let shift = (d - 1) as usize;
    let base = q_jet(t, x, n_max + shift, true)?;
    let scale = sphere_scale(d, t);
    let vals = base.vals[shift..].iter().map(|v| scale * v).collect();
    Ok(RadialDerivs {
        log_scale: base.log_scale,
        vals,
        branch: base.branch,
    })
}
