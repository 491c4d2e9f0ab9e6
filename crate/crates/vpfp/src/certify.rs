//! Sampling certification of elementary inequalities and semigroup bounds.
//!
//! Each check samples its inequality, fits the best constant the samples
//! allow and records the worst sample. A row fails only when the constant is
//! non-finite, has the wrong sign, or an inequality with a prescribed
//! constant is violated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, VpfpError};
use crate::kinematics::{ap, diag_exponent};

/// One certified inequality.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CertRow {
    pub id: String,
    pub samples: usize,
    pub constant: f64,
    pub worst_sample: String,
    pub violations: usize,
    pub pass: bool,
}

impl CertRow {
    pub fn new(id: impl Into<String>, samples: usize, constant: f64, worst: String, violations: usize) -> Self {
        let pass = constant.is_finite() && violations == 0;
        CertRow {
            id: id.into(),
            samples,
            constant,
            worst_sample: worst,
            violations,
            pass,
        }
    }

    /// CSV line `id,samples,constant,worst_sample,violations,pass`.
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.16e},\"{}\",{},{}",
            self.id, self.samples, self.constant, self.worst_sample, self.violations, self.pass
        )
    }
}

pub const CERT_CSV_HEADER: &str = "id,samples,constant,worst_sample,violations,pass";

/// Collection of certified rows.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CertReport {
    pub rows: Vec<CertRow>,
}

impl CertReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn get(&self, id: &str) -> Option<&CertRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn extend(&mut self, other: CertReport) {
        self.rows.extend(other.rows);
    }
}

/// Running maximum that remembers its argument.
struct Worst {
    value: f64,
    at: String,
}

impl Worst {
    fn max() -> Self {
        Worst { value: f64::NEG_INFINITY, at: String::new() }
    }
    fn min() -> Self {
        Worst { value: f64::INFINITY, at: String::new() }
    }
    fn raise(&mut self, v: f64, at: impl FnOnce() -> String) {
        if v > self.value || v.is_nan() {
            self.value = v;
            self.at = at();
        }
    }
    fn lower(&mut self, v: f64, at: impl FnOnce() -> String) {
        if v < self.value || v.is_nan() {
            self.value = v;
            self.at = at();
        }
    }
}

#[inline]
fn br(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

// Nonnegative sample spread over many scales, with exact zeros now and then.
fn scale_sample(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.02) {
        0.0
    } else {
        10f64.powf(rng.gen_range(-3.0..6.0))
    }
}

/// `sup_{r in (0, K]} ((1 + r)^s - 1) / r^s`, the least `c` admissible in the
/// corollary inequality as `y` grows.
fn corollary_c_floor(s: f64, kk: f64) -> f64 {
    let mut best: f64 = 0.0;
    let n = 4000;
    for i in 1..=n {
        let r = kk * i as f64 / n as f64;
        best = best.max(((1.0 + r).powf(s) - 1.0) / r.powf(s));
    }
    best
}

/// Samples the reverse triangle inequality and its refinements for one `s`.
///
/// Row ids are `app1`..`app5` suffixed by `@s`.
pub fn check_gevrey_inequalities(s: f64, samples: usize, seed: u64) -> Result<CertReport> {
    if !(s > 0.0 && s < 1.0) {
        return Err(VpfpError::domain("check_gevrey_inequalities", format!("s = {s} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = |id: &str| format!("{id}@{s}");
    let mut report = CertReport::default();

    // c_s <= <x+y>^s / (<x>^s + <y>^s)
    let mut w = Worst::min();
    w.lower(0.5, || "x=0,y=0".into());
    for _ in 0..samples {
        let (x, y) = (scale_sample(&mut rng), scale_sample(&mut rng));
        let r = br(x + y).powf(s) / (br(x).powf(s) + br(y).powf(s));
        w.lower(r, || format!("x={x:e},y={y:e}"));
    }
    let ok = w.value > 0.0 && w.value < 1.0;
    report.rows.push(CertRow::new(tag("app1"), samples, w.value, w.at, usize::from(!ok)));

    // |<x>^s - <y>^s| (<x>^{1-s} + <y>^{1-s}) <= C |x - y|
    let mut w = Worst::max();
    for _ in 0..samples {
        let x = scale_sample(&mut rng);
        let y = if rng.gen_bool(0.5) {
            x * (1.0 + rng.gen_range(-1.0..1.0) * 10f64.powf(rng.gen_range(-6.0..0.0)))
        } else {
            scale_sample(&mut rng)
        };
        if x == y {
            continue;
        }
        let r = (br(x).powf(s) - br(y).powf(s)).abs() * (br(x).powf(1.0 - s) + br(y).powf(1.0 - s)) / (x - y).abs();
        w.raise(r, || format!("x={x:e},y={y:e}"));
    }
    report.rows.push(CertRow::new(tag("app2"), samples, w.value, w.at, 0));

    // x <= y/K: <x+y>^s <= <y>^s + s/(K-1)^{1-s} <x>^s with the stated constant
    let mut w = Worst::max();
    let mut bad = 0;
    for i in 0..samples {
        let kk = if i == 0 { 2.0 } else { 1.0 + 10f64.powf(rng.gen_range(-2.0..3.0)) };
        let y = if i == 0 { 2.0 } else { scale_sample(&mut rng) };
        let x = if i == 0 { 1.0 } else { y / kk * rng.gen_range(0.0..=1.0f64) };
        let slack = s / (kk - 1.0).powf(1.0 - s) * br(x).powf(s);
        let excess = br(x + y).powf(s) - br(y).powf(s);
        let r = excess / slack;
        if r > 1.0 + 1e-12 {
            bad += 1;
        }
        w.raise(r, || format!("K={kk:e},x={x:e},y={y:e}"));
    }
    report.rows.push(CertRow::new(tag("app3"), samples, w.value, w.at, bad));

    // x >= y: <x+y>^s <= (<x>/<x+y>)^{1-s} (<x>^s + <y>^s)
    let mut w = Worst::max();
    let mut bad = 0;
    for _ in 0..samples {
        let a = scale_sample(&mut rng);
        let b = scale_sample(&mut rng);
        let (x, y) = if a >= b { (a, b) } else { (b, a) };
        let rhs = (br(x) / br(x + y)).powf(1.0 - s) * (br(x).powf(s) + br(y).powf(s));
        let r = br(x + y).powf(s) / rhs;
        if r > 1.0 + 1e-12 {
            bad += 1;
        }
        w.raise(r, || format!("x={x:e},y={y:e}"));
    }
    report.rows.push(CertRow::new(tag("app4"), samples, w.value, w.at, bad));

    // 0 <= x <= K y, K >= 2: <x+y>^s <= C + <y>^s + c <x>^s with c in (0,1)
    let kk5 = 4.0;
    let c = 0.5 * (1.0 + corollary_c_floor(s, kk5));
    let mut w = Worst::max();
    w.raise(0.0, String::new);
    for _ in 0..samples {
        let y = scale_sample(&mut rng);
        let x = kk5 * y * rng.gen_range(0.0..=1.0f64);
        let r = br(x + y).powf(s) - br(y).powf(s) - c * br(x).powf(s);
        w.raise(r, || format!("K={kk5},c={c:.6},x={x:e},y={y:e}"));
    }
    let ok = c < 1.0;
    report.rows.push(CertRow::new(tag("app5"), samples, w.value.max(0.0), w.at, usize::from(!ok)));
    Ok(report)
}

/// Sampling box for the semigroup property checks.
#[derive(Clone, Copy, Debug)]
pub struct SemigroupSampling {
    pub nu_log10: (f64, f64),
    pub k_max: i64,
    /// Upper bound on `nu t`.
    pub nu_t_max: f64,
}

impl Default for SemigroupSampling {
    fn default() -> Self {
        SemigroupSampling { nu_log10: (-4.0, 0.0), k_max: 50, nu_t_max: 50.0 }
    }
}

fn sample_knt(rng: &mut ChaCha8Rng, box_: &SemigroupSampling) -> (f64, f64, f64) {
    let nu = 10f64.powf(rng.gen_range(box_.nu_log10.0..box_.nu_log10.1));
    let k = rng.gen_range(1..=box_.k_max) as f64;
    // log-uniform in nu t so both the cubic and linear regimes are hit
    let x = 10f64.powf(rng.gen_range(-4.0..box_.nu_t_max.log10()));
    (k, nu, x / nu)
}

/// Fitted decay constant of the diagonal semigroup,
/// `inf -log S_k(t) / ((k/nu)^2 min((nu t)^3, nu t))`, plus monotonicity.
pub fn fit_delta0(samples: usize, seed: u64, box_: &SemigroupSampling) -> (f64, String, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Worst::min();
    let mut non_monotone = 0;
    for _ in 0..samples {
        let (k, nu, t) = sample_knt(&mut rng, box_);
        let e = diag_exponent(t, k, nu);
        let x = nu * t;
        let scale = k * k / (nu * nu) * (x * x * x).min(x);
        w.lower(e / scale, || format!("k={k},nu={nu:e},t={t:e}"));
        let e2 = diag_exponent(t * (1.0 + 1e-3), k, nu);
        if !(e2 > e) {
            non_monotone += 1;
        }
    }
    (w.value, w.at, non_monotone)
}

/// Samples the diagonal semigroup bounds: strict decay with a fitted
/// `delta0`, the `nu^{1/3}` enhanced rate for `p in {1/4, 1/2, 1}`, and the
/// two weighted bounds for `p in {1/4, 1/2, 3/4}`.
pub fn check_semigroup_properties(samples: usize, seed: u64, box_: &SemigroupSampling) -> CertReport {
    let mut report = CertReport::default();
    let (delta0, at, non_mono) = fit_delta0(samples, seed, box_);
    let ok = delta0 > 0.0 && delta0.is_finite();
    report.rows.push(CertRow::new("S-prop1", samples, delta0, at, non_mono + usize::from(!ok)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for &p in &[0.25, 0.5, 1.0] {
        let delta = p * delta0;
        let mut w = Worst::max();
        for _ in 0..samples {
            let (k, nu, t) = sample_knt(&mut rng, box_);
            let log_r = -p * diag_exponent(t, k, nu) + delta * nu.cbrt() * k.powf(2.0 / 3.0) * t;
            w.raise(log_r.exp(), || format!("k={k},nu={nu:e},t={t:e}"));
        }
        report.rows.push(CertRow::new(format!("S-prop2@p={p}"), samples, w.value, w.at, 0));
    }
    for &p in &[0.25, 0.5, 0.75] {
        let mut w3 = Worst::max();
        let mut w4 = Worst::max();
        for _ in 0..samples {
            let (k, nu, h) = sample_knt(&mut rng, box_);
            let sp = (-p * diag_exponent(h, k, nu)).exp();
            let hap = ap(h, nu);
            let r3 = sp * k * hap * hap / 2.0 * nu.powf(2.0 / 3.0);
            let r4 = sp * k * k * hap.powi(4) / 8.0 * nu.powf(4.0 / 3.0);
            w3.raise(r3, || format!("k={k},nu={nu:e},t-tau={h:e}"));
            w4.raise(r4, || format!("k={k},nu={nu:e},t-tau={h:e}"));
        }
        report.rows.push(CertRow::new(format!("S-prop3@p={p}"), samples, w3.value, w3.at, 0));
        report.rows.push(CertRow::new(format!("S-prop4@p={p}"), samples, w4.value, w4.at, 0));
    }
    report
}

/// Worst relative deviation of the diagonal exponent from its leading
/// small-time term `nu k^2 t^3 / 3` over samples with `nu t <= x_max`.
pub fn small_time_exponent_error(samples: usize, seed: u64, x_max: f64) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Worst::max();
    for _ in 0..samples {
        let nu = 10f64.powf(rng.gen_range(-4.0..0.0));
        let k = rng.gen_range(1..=50) as f64;
        let x = x_max * rng.gen_range(1e-6..=1.0f64);
        let t = x / nu;
        let leading = nu * k * k * t * t * t / 3.0;
        let r = (diag_exponent(t, k, nu) - leading).abs() / leading;
        w.raise(r, || format!("k={k},nu={nu:e},t={t:e}"));
    }
    (w.value, w.at)
}

/// Samples the zero-mode bound `|e^{nu t} eta|^q S_0(t, tau; eta) <= C_q
/// <e^{nu tau} eta>^q` for `q = 0..=6`.
pub fn check_zero_mode_bound(samples: usize, seed: u64) -> CertReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CertReport::default();
    for q in 0..=6 {
        let mut w = Worst::max();
        for _ in 0..samples {
            let nu = 10f64.powf(rng.gen_range(-4.0..0.0));
            let tau = rng.gen_range(0.0..5.0) / nu;
            let t = tau + rng.gen_range(0.0..5.0) / nu;
            let eta = rng.gen_range(-30.0..30.0) * (-nu * tau).exp();
            let grow = (2.0 * nu * tau).exp() * (2.0 * nu * (t - tau)).exp_m1();
            let s0 = (-0.5 * grow * eta * eta).exp();
            let r = ((nu * t).exp() * eta).abs().powi(q) * s0 / br((nu * tau).exp() * eta).powi(q);
            w.raise(r, || format!("nu={nu:e},tau={tau:e},t={t:e},eta={eta:e}"));
        }
        report.rows.push(CertRow::new(format!("S0@q={q}"), samples, w.value, w.at, 0));
    }
    report
}

/// Relative change of a fitted constant between two sample sizes.
pub fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn app1_boundary_sample() {
        let s = 0.5;
        let r = br(0.0).powf(s) / (2.0 * br(0.0).powf(s));
        assert_eq!(r, 0.5);
        let rep = check_gevrey_inequalities(s, 1000, 1).unwrap();
        assert!(rep.get("app1@0.5").unwrap().constant <= 0.5);
    }

    #[test]
    fn app3_boundary_holds_with_stated_constant() {
        let (s, kk, y) = (0.5, 2.0, 2.0);
        let x = y / kk;
        assert!(br(x + y).powf(s) <= br(y).powf(s) + s / (kk - 1.0).powf(1.0 - s) * br(x).powf(s));
    }

    #[test]
    fn gevrey_inequalities_pass() {
        for &s in &[0.2, 0.34, 0.9] {
            let rep = check_gevrey_inequalities(s, 20_000, 3).unwrap();
            assert!(rep.all_pass(), "{:?}", rep);
        }
        assert!(check_gevrey_inequalities(1.0, 10, 0).is_err());
    }

    #[test]
    fn corollary_floor_below_one() {
        for &s in &[0.2, 0.34, 0.9] {
            let c = corollary_c_floor(s, 4.0);
            assert!(c > 0.0 && c < 1.0);
        }
    }

    #[test]
    fn semigroup_properties_finite() {
        let rep = check_semigroup_properties(20_000, 5, &SemigroupSampling::default());
        assert!(rep.all_pass(), "{:?}", rep);
        let d0 = rep.get("S-prop1").unwrap().constant;
        assert!(d0 > 0.05 && d0 <= 1.0 / 3.0 + 1e-9, "delta0 = {d0}");
    }

    #[test]
    fn diag_consistent_with_general() {
        for &(t, k, nu) in &[(3.0, 2.0, 0.1), (50.0, 1.0, 1e-3)] {
            let d = crate::kinematics::bar(t, k, k * ap(t, nu), nu);
            let a = crate::kinematics::dissipation_exponent(t, d, k, nu);
            let b = diag_exponent(t, k, nu);
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn small_time_error_is_three_quarters_nu_t() {
        let (e, _) = small_time_exponent_error(5000, 2, 1e-2);
        assert!((e - 0.75e-2).abs() < 1e-4, "{e}");
    }
}
