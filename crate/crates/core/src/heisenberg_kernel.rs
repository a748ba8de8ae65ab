//! Gaveau-type heat kernels on the Heisenberg groups H^{2d+1} and their
//! mixed (r, z)-derivatives by differentiation under the integral sign:
//!
//!   h_{t,d}(r, z) = (1/(4 pi)^{d+1}) * 2 Int_0^inf cos(lambda z / 2)
//!                   (lambda / sinh(lambda t))^d e^{-r^2 lambda coth(lambda t)/4} d lambda.
//!
//! The integrand is even in lambda with a removable point at 0, where it
//! takes the value (1/t)^d e^{-r^2/4t}. A z-derivative multiplies the
//! integrand by (lambda/2) and shifts the cosine phase by pi/2; an
//! r-derivative expands through the two-part Faa di Bruno closed form for
//! the Gaussian factor (the exponent is quadratic in r, so only the first
//! two inner derivatives survive).

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{KernelError, Result};
use crate::quadrature::adaptive_half_line;

pub const MAX_H_ORDER: usize = 8;

const REL_TOL: f64 = 1e-12;
const ABS_TOL: f64 = 1e-18;
const MAX_PANELS: usize = 2000;

#[derive(Clone, Copy, Debug)]
pub struct HeisenbergParams {
    pub d: u32,
    pub t: f64,
}

impl HeisenbergParams {
    pub fn new(d: u32, t: f64) -> Result<Self> {
        if d < 1 {
            return Err(KernelError::Domain(format!(
                "Heisenberg index d must be >= 1, got {d}"
            )));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(KernelError::Domain(format!(
                "time must be positive, got {t}"
            )));
        }
        Ok(HeisenbergParams { d, t })
    }
}

/// Kernel (or kernel-derivative) value with quadrature diagnostics. The
/// cosine form keeps every evaluation exactly real, so `imag_residual` is
/// structurally zero here; it is carried for interface parity with the
/// subelliptic kernels, whose complex integrands produce a genuine residual.
#[derive(Clone, Copy, Debug)]
pub struct HeisenbergOutcome {
    pub value: f64,
    pub err_estimate: f64,
    pub imag_residual: f64,
}

/// lambda / sinh(lambda t), continued through lambda = 0 by its value 1/t.
fn lambda_over_sinh(lambda: f64, t: f64) -> f64 {
    let u = lambda * t;
    if u.abs() < 1e-3 {
        let u2 = u * u;
        (1.0 - u2 / 6.0 + 7.0 * u2 * u2 / 360.0) / t
    } else if u > 350.0 {
        2.0 * lambda * (-u).exp()
    } else {
        lambda / u.sinh()
    }
}

/// lambda * coth(lambda t), continued through lambda = 0 by its value 1/t.
fn lambda_coth(lambda: f64, t: f64) -> f64 {
    let u = lambda * t;
    if u.abs() < 1e-3 {
        let u2 = u * u;
        (1.0 + u2 / 3.0 - u2 * u2 / 45.0) / t
    } else if u > 20.0 {
        lambda
    } else {
        lambda * u.cosh() / u.sinh()
    }
}

/// Coefficients of the two-part Faa di Bruno expansion for exp(g) with
/// g quadratic: d^n/dr^n e^g = e^g sum_{a1 + 2 a2 = n} n!/(a1! a2! 2^a2)
/// (g')^{a1} (g'')^{a2}. Returns (a1, a2, coefficient).
fn two_part_coeffs(n: usize) -> Vec<(i32, i32, f64)> {
    let fact = |m: usize| -> f64 { (1..=m).map(|k| k as f64).product() };
    let mut out = Vec::with_capacity(n / 2 + 1);
    for a2 in 0..=n / 2 {
        let a1 = n - 2 * a2;
        let coeff = fact(n) / (fact(a1) * fact(a2) * (2.0f64).powi(a2 as i32));
        out.push((a1 as i32, a2 as i32, coeff));
    }
    out
}

/// Truncation point: past it the integrand envelope
/// C lambda^(d + n_r + n_z) e^{-(d t + r^2/4) lambda} is below any
/// representable contribution. The geometric windows inside the half-line
/// rule normally stop much earlier.
fn lambda_cap(params: &HeisenbergParams, r: f64, degree: usize) -> f64 {
    let rho = params.d as f64 * params.t + r * r / 4.0;
    let target = 45.0 + params.d as f64 * (1.0 / params.t).ln().max(0.0);
    let deg = degree as f64;
    let mut lam = (target / rho).max(4.0 / params.t).max(10.0);
    for _ in 0..4 {
        lam = ((target + deg * lam.ln()) / rho).max(10.0);
    }
    lam
}

/// Mixed derivative d^{n_r}/dr^{n_r} d^{n_z}/dz^{n_z} h_{t,d}(r, z).
pub fn h_derivs(
    params: &HeisenbergParams,
    r: f64,
    z: f64,
    n_r: usize,
    n_z: usize,
) -> Result<HeisenbergOutcome> {
    if !(r >= 0.0) || !z.is_finite() {
        return Err(KernelError::Domain(format!(
            "Heisenberg kernel needs r >= 0 and finite z, got r={r}, z={z}"
        )));
    }
    if n_r > MAX_H_ORDER || n_z > MAX_H_ORDER {
        return Err(KernelError::UnsupportedOrder {
            requested: n_r.max(n_z),
            max: MAX_H_ORDER,
        });
    }
    let (d, t) = (params.d as i32, params.t);
    let coeffs = two_part_coeffs(n_r);
    let phase_shift = n_z as f64 * FRAC_PI_2;
    let integrand = |lambda: f64| -> f64 {
        let base = lambda_over_sinh(lambda, t).powi(d);
        let lc = lambda_coth(lambda, t);
        let gauss = (-r * r * lc / 4.0).exp();
        let mut radial = 0.0;
        for &(a1, a2, cf) in &coeffs {
            radial += cf * (-r * lc / 2.0).powi(a1) * (-lc / 2.0).powi(a2);
        }
        let phase = (lambda / 2.0).powi(n_z as i32) * (lambda * z / 2.0 + phase_shift).cos();
        base * gauss * radial * phase
    };
    let cap = lambda_cap(params, r, params.d as usize + n_r + n_z);
    let out = adaptive_half_line(integrand, 0.0, REL_TOL, ABS_TOL, MAX_PANELS, cap)?;
    let pre = 2.0 / (4.0 * PI).powi(d + 1);
    Ok(HeisenbergOutcome {
        value: pre * out.value,
        err_estimate: pre * out.err_estimate,
        imag_residual: 0.0,
    })
}

/// Kernel value h_{t,d}(r, z).
pub fn h_kernel(params: &HeisenbergParams, r: f64, z: f64) -> Result<HeisenbergOutcome> {
    h_derivs(params, r, z, 0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;

    fn rel_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(a.abs())
    }

    fn h1() -> HeisenbergParams {
        HeisenbergParams::new(1, 1.0).unwrap()
    }

    #[test]
    fn value_at_origin_is_one_thirty_second() {
        // Int_R lambda/sinh(lambda) d lambda = pi^2/2 collapses the formula.
        let v = h_kernel(&h1(), 0.0, 0.0).unwrap().value;
        assert!((32.0 * v - 1.0).abs() < 1e-10, "32 h = {}", 32.0 * v);
    }

    #[test]
    fn frozen_value_anchors() {
        let cases = [
            (1u32, 0.7, -0.4, 0.0228617300932937510317188246332951923),
            (2u32, 0.9, 0.0, 0.00123295585067981298878540275205775107),
        ];
        for (d, r, z, want) in cases {
            let p = HeisenbergParams::new(d, 1.0).unwrap();
            let got = h_kernel(&p, r, z).unwrap().value;
            assert!(
                rel_close(got, want, 1e-10),
                "h_{d}({r},{z}): got {got}, want {want}"
            );
        }
    }

    #[test]
    fn frozen_jet_anchors_d1() {
        let want = [
            (0, 0, 0.0178465567513426403383429798754920922),
            (1, 0, -0.0140578679480820048227025137004928342),
            (0, 1, -0.00690261901577978436017272158327755194),
            (2, 0, -0.000870071061971097483439051826229146763),
            (1, 1, 0.0104894022497855174447228160640964523),
            (0, 2, -0.0102849310107012837791067765823770104),
        ];
        for (nr, nz, v) in want {
            let got = h_derivs(&h1(), 1.0, 0.5, nr, nz).unwrap().value;
            assert!(
                rel_close(got, v, 1e-10),
                "d^({nr},{nz}) h_1(1, 0.5): got {got}, want {v}"
            );
        }
    }

    #[test]
    fn frozen_jet_anchors_d2() {
        let p = HeisenbergParams::new(2, 1.0).unwrap();
        let r = 0.5f64.sqrt();
        let want = [
            (0, 0, 0.00135171921474476556607450739838662805),
            (1, 0, -0.000685868228995735783267390769696522307),
            (0, 1, -0.000176856042118012416201551256545706227),
            (2, 0, -0.000568715493208568224363223172721420393),
            (1, 1, 0.000146973135715304619854817322414672168),
            (0, 2, -0.000562003692377845533977831662705002737),
        ];
        for (nr, nz, v) in want {
            let got = h_derivs(&p, r, 0.3, nr, nz).unwrap().value;
            assert!(
                rel_close(got, v, 1e-10),
                "d^({nr},{nz}) h_2(sqrt(1/2), 0.3): got {got}, want {v}"
            );
        }
    }

    #[test]
    fn even_in_z() {
        for (r, z) in [(0.5, 1.3), (1.2, 0.4), (0.0, 2.0)] {
            let plus = h_kernel(&h1(), r, z).unwrap().value;
            let minus = h_kernel(&h1(), r, -z).unwrap().value;
            assert!(rel_close(plus, minus, 1e-14), "r={r} z={z}");
        }
    }

    #[test]
    fn dilation_identity() {
        // h_{t,d}(r, z) = t^{-(d+1)} h_{1,d}(r/sqrt t, z/t).
        let (t, r, z) = (0.25, 1.0, 0.5);
        for d in [1u32, 2] {
            let small = HeisenbergParams::new(d, t).unwrap();
            let unit = HeisenbergParams::new(d, 1.0).unwrap();
            let lhs = h_kernel(&small, r, z).unwrap().value;
            let rhs = t.powi(-(d as i32 + 1)) * h_kernel(&unit, r / t.sqrt(), z / t).unwrap().value;
            assert!(rel_close(lhs, rhs, 1e-10), "d={d}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn odd_z_derivative_vanishes_at_zero() {
        let scale = h_kernel(&h1(), 0.8, 0.0).unwrap().value;
        let v = h_derivs(&h1(), 0.8, 0.0, 0, 1).unwrap().value;
        assert!(v.abs() <= 1e-13 * scale, "dz h at z=0: {v}");
    }

    #[test]
    fn first_r_derivative_matches_finite_differences() {
        let (r, z) = (1.0, 0.5);
        let got = h_derivs(&h1(), r, z, 1, 0).unwrap().value;
        let f = |x: f64| h_kernel(&h1(), x, z).unwrap().value;
        let h = 1e-4;
        let d = |step: f64| (f(r + step) - f(r - step)) / (2.0 * step);
        let fd = (4.0 * d(h) - d(2.0 * h)) / 3.0;
        assert!(rel_close(got, fd, 1e-7), "{got} vs {fd}");
    }

    #[test]
    fn second_r_derivative_at_zero_isolates_one_term() {
        // At r = 0 the a1-part of the expansion dies and d^2/dr^2 reduces to
        // -(1/2) Int cos(lambda z/2) (lambda/sinh lambda t)^d lambda coth(lambda t).
        let (d, t, z) = (1i32, 1.0, 0.3);
        let got = h_derivs(&h1(), 0.0, z, 2, 0).unwrap().value;
        let integrand = |lambda: f64| -> f64 {
            lambda_over_sinh(lambda, t).powi(d)
                * lambda_coth(lambda, t)
                * (lambda * z / 2.0).cos()
        };
        let tail = adaptive(integrand, 0.0, 60.0, 1e-12, 1e-16, 2000).unwrap().value;
        let want = -(0.5) * 2.0 / (4.0 * PI).powi(d + 1) * tail;
        assert!(rel_close(got, want, 1e-10), "{got} vs {want}");
    }

    #[test]
    fn positive_on_grid() {
        for d in [1u32, 2, 3] {
            for t in [0.25, 1.0] {
                let p = HeisenbergParams::new(d, t).unwrap();
                for r in [0.0, 1.0, 2.0, 3.0] {
                    for z in [-3.0, -1.0, 0.0, 1.5, 3.0] {
                        let v = h_kernel(&p, r, z).unwrap().value;
                        assert!(v > 0.0, "h_{d} at t={t}, r={r}, z={z}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn normalization_by_cylindrical_quadrature() {
        // 2 pi Int_0^inf Int_R h_1(r, z) r dz dr = 1; evenness halves the
        // z-range. The kernel decays like e^{-pi |z|/2} in z and
        // Gaussian-fast in r, so the truncated box is far past 1e-6.
        let p = h1();
        let inner = |r: f64| {
            2.0 * adaptive(
                |z: f64| h_kernel(&p, r, z).unwrap().value,
                0.0,
                40.0,
                1e-7,
                1e-12,
                2000,
            )
            .unwrap()
            .value
        };
        let mass = 2.0
            * PI
            * adaptive(|r: f64| r * inner(r), 0.0, 12.0, 1e-6, 1e-10, 2000)
                .unwrap()
                .value;
        assert!((mass - 1.0).abs() < 1e-4, "mass = {mass}");
    }

    #[test]
    fn domain_and_order_errors() {
        assert!(HeisenbergParams::new(0, 1.0).is_err());
        assert!(HeisenbergParams::new(1, 0.0).is_err());
        assert!(h_kernel(&h1(), -0.5, 0.0).is_err());
        assert!(h_derivs(&h1(), 1.0, 0.0, 9, 0).is_err());
        assert!(h_derivs(&h1(), 1.0, 0.0, 0, 9).is_err());
    }
}
