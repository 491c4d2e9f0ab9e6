//! Fourier-side geometry: approximate time, characteristic curves, damping
//! semigroups, the Maxwellian transform and Gevrey brackets.
//!
//! Every formula with a removable singularity at `nu = 0` switches to its
//! analytic limit below [`NU_ZERO`].

use crate::error::{Result, VpfpError};

/// Collision frequencies below this are treated as exactly zero.
pub const NU_ZERO: f64 = 1e-12;

fn check_nonneg(op: &'static str, name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) {
        return Err(VpfpError::domain(op, format!("{name} = {v} must be >= 0")));
    }
    Ok(())
}

/// `(1 - e^{-nu t}) / nu`, or `t` when `nu` vanishes.
pub fn approx_time(t: f64, nu: f64) -> Result<f64> {
    check_nonneg("approx_time", "t", t)?;
    check_nonneg("approx_time", "nu", nu)?;
    Ok(ap(t, nu))
}

/// Unchecked [`approx_time`].
#[inline]
pub fn ap(t: f64, nu: f64) -> f64 {
    if nu < NU_ZERO {
        t
    } else {
        -(-nu * t).exp_m1() / nu
    }
}

/// Characteristic curve `e^{nu t}(eta - k t^ap)` through `eta` at time zero.
pub fn eta_bar(t: f64, k: i64, eta: f64, nu: f64) -> Result<f64> {
    check_nonneg("eta_bar", "t", t)?;
    check_nonneg("eta_bar", "nu", nu)?;
    Ok(bar(t, k as f64, eta, nu))
}

/// Unchecked [`eta_bar`].
#[inline]
pub fn bar(t: f64, k: f64, eta: f64, nu: f64) -> f64 {
    if nu < NU_ZERO {
        eta - k * t
    } else {
        (nu * t).exp() * (eta - k * ap(t, nu))
    }
}

// (1 - e^{-2x}) / (2x)
#[inline]
fn phi(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - x
    } else {
        -(-2.0 * x).exp_m1() / (2.0 * x)
    }
}

// (1 - e^{-x} + (e^{-2x} - 1)/2) / x^2 = 1/2 - x/2 + 7x^2/24 - ...
fn psi(x: f64) -> f64 {
    if x < 1.0 {
        // sum_{n>=2} (-1)^n (2^{n-1} - 1) x^{n-2} / n!
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut pow2 = 2.0;
        let mut xp = 1.0;
        for n in 2..40 {
            if n > 2 {
                fact *= n as f64;
                pow2 *= 2.0;
                xp *= -x;
            }
            let term = (pow2 - 1.0) * xp / fact;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (-(-x).exp_m1() + 0.5 * (-2.0 * x).exp_m1()) / (x * x)
    }
}

// (x - 2(1 - e^{-x}) + (1 - e^{-2x})/2) / x^3 = 1/3 - x/4 + ...
fn chi(x: f64) -> f64 {
    if x < 1.0 {
        // sum_{n>=3} (-1)^{n+1} (2^{n-1} - 2) x^{n-3} / n!
        let mut sum = 0.0;
        let mut fact = 6.0;
        let mut pow2 = 4.0;
        let mut xp = 1.0;
        for n in 3..45 {
            if n > 3 {
                fact *= n as f64;
                pow2 *= 2.0;
                xp *= -x;
            }
            let term = (pow2 - 2.0) * xp / fact;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()) / (x * x * x)
    }
}

/// `nu * int_{t-h}^{t} |bar(s)|^2 ds` where `d = bar(t)` is the value at the
/// right end of the interval.
///
/// Written in terms of the end value the three pieces stay bounded for large
/// `nu h`, and the `phi/psi/chi` series keep it accurate for small `nu h`.
#[inline]
pub fn dissipation_exponent(h: f64, d: f64, k: f64, nu: f64) -> f64 {
    if nu < NU_ZERO || h <= 0.0 {
        return 0.0;
    }
    if !d.is_finite() {
        return f64::INFINITY;
    }
    let x = nu * h;
    let e = nu * h * (d * d * phi(x) + 2.0 * d * k * h * psi(x) + k * k * h * h * chi(x));
    if e.is_nan() {
        f64::INFINITY
    } else {
        e.max(0.0)
    }
}

/// `S_k(t, tau; eta) = exp(-nu int_tau^t |bar(s; k, eta)|^2 ds)`.
pub fn semigroup_s(t: f64, tau: f64, k: i64, eta: f64, nu: f64) -> Result<f64> {
    check_nonneg("semigroup_s", "tau", tau)?;
    check_nonneg("semigroup_s", "nu", nu)?;
    if tau > t {
        return Err(VpfpError::domain(
            "semigroup_s",
            format!("tau = {tau} exceeds t = {t}"),
        ));
    }
    let kf = k as f64;
    let d = bar(t, kf, eta, nu);
    Ok((-dissipation_exponent(t - tau, d, kf, nu)).exp())
}

/// Exponent of the diagonal semigroup, `nu k^2 t^3 chi(nu t)`.
#[inline]
pub fn diag_exponent(t: f64, k: f64, nu: f64) -> f64 {
    if nu < NU_ZERO {
        return 0.0;
    }
    nu * k * k * t * t * t * chi(nu * t)
}

/// `S_k(t) = S_k(t, 0; k t^ap)`.
pub fn semigroup_s_diag(t: f64, k: i64, nu: f64) -> Result<f64> {
    check_nonneg("semigroup_s_diag", "t", t)?;
    check_nonneg("semigroup_s_diag", "nu", nu)?;
    Ok((-diag_exponent(t, k as f64, nu)).exp())
}

/// Zero-mode semigroup `exp(-(e^{2 nu t} - e^{2 nu tau}) eta^2 / 2)`.
pub fn semigroup_s0(t: f64, tau: f64, eta: f64, nu: f64) -> Result<f64> {
    check_nonneg("semigroup_s0", "tau", tau)?;
    check_nonneg("semigroup_s0", "nu", nu)?;
    if tau > t {
        return Err(VpfpError::domain(
            "semigroup_s0",
            format!("tau = {tau} exceeds t = {t}"),
        ));
    }
    if nu < NU_ZERO {
        return Ok(1.0);
    }
    let grow = (2.0 * nu * tau).exp() * (2.0 * nu * (t - tau)).exp_m1();
    Ok((-0.5 * grow * eta * eta).exp())
}

/// Transform of the unit Maxwellian, `e^{-eta^2/2}`.
#[inline]
pub fn maxwellian_hat(eta: f64) -> f64 {
    (-0.5 * eta * eta).exp()
}

/// Derivatives of [`maxwellian_hat`] up to third order.
pub fn maxwellian_hat_deriv(eta: f64, order: u8) -> f64 {
    let g = maxwellian_hat(eta);
    match order {
        0 => g,
        1 => -eta * g,
        2 => (eta * eta - 1.0) * g,
        3 => (3.0 * eta - eta * eta * eta) * g,
        _ => panic!("maxwellian_hat_deriv supports order <= 3"),
    }
}

/// Japanese bracket `sqrt(1 + |x|^2)`.
pub fn gevrey_bracket(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// `<k, eta> = sqrt(1 + k^2 + eta^2)`.
#[inline]
pub fn bracket2(k: f64, eta: f64) -> f64 {
    (1.0 + k * k + eta * eta).sqrt()
}

#[inline]
pub fn bracket1(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}
