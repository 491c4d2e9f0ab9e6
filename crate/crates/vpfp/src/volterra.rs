//! Linear density theory: the kernel `K(t, k) = -S_k(t) t^ap mu(k t^ap)`,
//! its Fourier-Laplace transform, the Penrose margin, and the Volterra
//! equation `rho = Q + K * rho` with its resolvent.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VpfpError};
use crate::kinematics::{ap, maxwellian_hat, semigroup_s_diag};
use crate::spectral::{interpolate_row, Frame, SpectralField, C0};

const TAU: f64 = std::f64::consts::TAU;

/// `K(t, k) = -S_k(t) t^ap mu(k t^ap)`.
pub fn kernel_k(t: f64, k: i64, nu: f64) -> Result<f64> {
    if k == 0 {
        return Err(VpfpError::domain("kernel_k", "the kernel is undefined for k = 0"));
    }
    if !(t >= 0.0) {
        return Err(VpfpError::domain("kernel_k", format!("t = {t} must be nonnegative")));
    }
    let s = semigroup_s_diag(t, k, nu)?;
    let a = ap(t, nu);
    Ok(-s * a * maxwellian_hat(k as f64 * a))
}

/// Kernel samples on `t_j = j dt`, `j = 0..len`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelTable {
    pub k: i64,
    pub nu: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Default kernel step.
pub const KERNEL_DT: f64 = 1e-3;

impl KernelTable {
    pub fn build(k: i64, nu: f64, dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_final >= 0.0) {
            return Err(VpfpError::domain("KernelTable::build", format!("dt = {dt}, T = {t_final}")));
        }
        let n = (t_final / dt).round() as usize + 1;
        let values = (0..n).map(|j| kernel_k(j as f64 * dt, k, nu)).collect::<Result<Vec<_>>>()?;
        Ok(KernelTable { k, nu, dt, values })
    }

    /// Table on `[0, max(40, 20 / (delta2 |k|))]` at the default step, with
    /// `delta2` fitted on a preliminary table.
    pub fn for_mode(k: i64, nu: f64) -> Result<Self> {
        let mut tab = Self::build(k, nu, KERNEL_DT, 40.0)?;
        let fit = fit_decay(&tab);
        let want = 20.0 / (fit.rate * k.unsigned_abs() as f64);
        if want.is_finite() && want > tab.t_final() {
            tab = Self::build(k, nu, KERNEL_DT, want)?;
        }
        Ok(tab)
    }

    /// Any sampled kernel, e.g. a closed-form test kernel.
    pub fn from_fn(k: i64, nu: f64, dt: f64, t_final: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (t_final / dt).round() as usize + 1;
        KernelTable { k, nu, dt, values: (0..n).map(|j| f(j as f64 * dt)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t(self.len().saturating_sub(1))
    }

    fn abs_k(&self) -> f64 {
        (self.k.unsigned_abs() as f64).max(1.0)
    }
}

/// `|k| |K(t)| <= constant * e^{-rate |k| t}` on the sampled times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub constant: f64,
    pub rate: f64,
}

fn sup_weighted(tab: &KernelTable, delta: f64) -> f64 {
    let k = tab.abs_k();
    tab.values
        .iter()
        .enumerate()
        .map(|(j, v)| k * v.abs() * (delta * k * tab.t(j)).exp())
        .fold(0.0, f64::max)
}

/// The rate is the largest `delta` with `C(delta) <= 2 C(0)`, where
/// `C(delta) = sup_t |k| |K(t)| e^{delta |k| t}`; the constant is `C(rate)`.
pub fn fit_decay(tab: &KernelTable) -> DecayFit {
    let c0 = sup_weighted(tab, 0.0);
    if c0 == 0.0 {
        return DecayFit { constant: 0.0, rate: f64::INFINITY };
    }
    let ok = |d: f64| sup_weighted(tab, d) <= 2.0 * c0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return DecayFit { constant: sup_weighted(tab, lo), rate: lo };
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    DecayFit { constant: sup_weighted(tab, lo), rate: lo }
}

/// Transform value with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transform {
    pub value: Complex64,
    pub error: f64,
}

/// Evaluates `(1/2pi) int_0^inf e^{-zt} K(t) dt` from a table: trapezoid,
/// one Richardson level, and the exponential tail bound past the table.
#[derive(Clone, Debug)]
pub struct LaplaceEvaluator {
    values: Vec<f64>,
    dt: f64,
    k: f64,
    fit: DecayFit,
}

impl LaplaceEvaluator {
    pub fn new(tab: &KernelTable) -> Self {
        let fit = fit_decay(tab);
        let k = tab.abs_k();
        // stop where the fitted envelope leaves a tail below 1e-10 at the
        // left edge of the standard Penrose region
        let half = 0.5 * fit.rate * k;
        let t_cut = if fit.constant > 0.0 && half.is_finite() {
            (fit.constant / k / half / 1e-10).ln().max(0.0) / half
        } else {
            0.0
        };
        let mut n = ((t_cut / tab.dt).ceil() as usize + 1).min(tab.len()).max(1);
        // odd sample count, so the coarse pass has whole panels
        if n.is_multiple_of(2) {
            n -= 1;
        }
        LaplaceEvaluator { values: tab.values[..n].to_vec(), dt: tab.dt, k, fit }
    }

    pub fn fit(&self) -> DecayFit {
        self.fit
    }

    /// Abscissa below which the transform is not guaranteed to converge.
    pub fn abscissa(&self) -> f64 {
        -self.fit.rate * self.k
    }

    pub fn eval(&self, z: Complex64) -> Result<Transform> {
        if self.fit.constant == 0.0 {
            return Ok(Transform { value: C0, error: 0.0 });
        }
        if !(z.re > self.abscissa()) {
            return Err(VpfpError::domain(
                "fourier_laplace",
                format!("Re z = {} is outside the convergence region Re z > {}", z.re, self.abscissa()),
            ));
        }
        let n = self.values.len();
        let h = self.dt;
        let rot = (-z * h).exp();
        let mut ph = Complex64::new(1.0, 0.0);
        let mut fine = C0;
        let mut coarse = C0;
        for (j, v) in self.values.iter().enumerate() {
            let term = ph * *v;
            let end = j == 0 || j == n - 1;
            let w = if end { 0.5 } else { 1.0 };
            fine += term * w;
            if j % 2 == 0 {
                coarse += term * w;
            }
            ph *= rot;
        }
        fine *= h;
        coarse *= 2.0 * h;
        let value = (fine + (fine - coarse) / 3.0) / TAU;
        let t_end = (n - 1) as f64 * h;
        let decay = self.fit.rate * self.k + z.re;
        let tail = self.fit.constant / self.k * (-decay * t_end).exp() / decay / TAU;
        let quad = ((fine - coarse) / 3.0).norm() / TAU;
        Ok(Transform { value, error: quad + tail })
    }
}

pub fn fourier_laplace(tab: &KernelTable, z: Complex64) -> Result<Transform> {
    LaplaceEvaluator::new(tab).eval(z)
}

/// Sampled rectangle `Re z in [re_min, re_max]`, `Im z in [-im_half, im_half]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenroseRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_half: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl PenroseRegion {
    /// `Re z in [-c delta2 |k|, 2]`, `Im z in [-20|k|, 20|k|]`, 401 x 801.
    pub fn standard(k: i64, delta2: f64, c: f64) -> Self {
        let ka = k.unsigned_abs() as f64;
        PenroseRegion { re_min: -c * delta2 * ka, re_max: 2.0, im_half: 20.0 * ka, n_re: 401, n_im: 801 }
    }

    fn re(&self, i: usize) -> f64 {
        self.re_min + (self.re_max - self.re_min) * i as f64 / (self.n_re - 1).max(1) as f64
    }

    fn im(&self, i: usize) -> f64 {
        -self.im_half + 2.0 * self.im_half * i as f64 / (self.n_im - 1).max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PenroseReport {
    pub k: i64,
    pub nu: f64,
    /// `min |1 - K~(z, k)|` over the grid, or the large-`|k|` bound.
    pub margin: f64,
    pub argmin_z: Complex64,
    pub region: PenroseRegion,
    pub delta2: f64,
    /// Largest quadrature error estimate met on the grid.
    pub max_error: f64,
    /// `sup |K~| (k^2 + (Im z)^2)` on the grid.
    pub large_im_constant: f64,
    /// Set when the margin comes from `1 - C / k^2` rather than the grid.
    pub shortcut: bool,
}

/// Fraction of `delta2 |k|` by which the region reaches left of the axis.
pub const PENROSE_C: f64 = 0.5;
/// Above this `|k|` the margin is read from the `|k|^{-2}` bound.
pub const PENROSE_CUTOFF: i64 = 10;

/// Kernel step for transform evaluation: resolves `|Im z| <= 20|k|` over
/// the kernel's `1/|k|` time scale.
fn transform_table(k: i64, nu: f64) -> Result<KernelTable> {
    let ka = k.unsigned_abs() as f64;
    let h = 0.04 / ka;
    KernelTable::build(k, nu, h, 40.0_f64.max(60.0 / ka))
}

/// Grid minimum of `|1 - K~|` over the standard region.
pub fn penrose_margin_grid(k: i64, nu: f64, region: Option<PenroseRegion>) -> Result<PenroseReport> {
    let tab = transform_table(k, nu)?;
    let ev = LaplaceEvaluator::new(&tab);
    let delta2 = ev.fit().rate;
    let region = region.unwrap_or_else(|| PenroseRegion::standard(k, delta2, PENROSE_C));
    if !(region.re_min > ev.abscissa()) {
        return Err(VpfpError::domain("penrose_margin", "region leaves the convergence domain"));
    }
    let kk = (k * k) as f64;
    // K is real, so |1 - K~| is even in Im z: sample Im z >= 0 only
    let first_im = region.n_im / 2;
    let rows: Vec<(f64, Complex64, f64, f64)> = (0..region.n_re)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, C0, 0.0f64, 0.0f64);
            for j in first_im..region.n_im {
                let z = Complex64::new(region.re(i), region.im(j).abs());
                let tr = ev.eval(z).expect("inside the region");
                let m = (Complex64::new(1.0, 0.0) - tr.value).norm();
                if m < best.0 {
                    best.0 = m;
                    best.1 = z;
                }
                best.2 = best.2.max(tr.error);
                best.3 = best.3.max(tr.value.norm() * (kk + z.im * z.im));
            }
            best
        })
        .collect();
    let mut margin = f64::INFINITY;
    let mut arg = C0;
    let mut err: f64 = 0.0;
    let mut cim: f64 = 0.0;
    for (m, z, e, c) in rows {
        if m < margin {
            margin = m;
            arg = z;
        }
        err = err.max(e);
        cim = cim.max(c);
    }
    Ok(PenroseReport { k, nu, margin, argmin_z: arg, region, delta2, max_error: err, large_im_constant: cim, shortcut: false })
}

/// Penrose margin: the grid minimum for `|k| <= 10`, and beyond that the
/// bound `1 - C / k^2` with `C` fitted at the cutoff mode.
pub fn penrose_margin(k: i64, nu: f64) -> Result<PenroseReport> {
    if k == 0 {
        return Err(VpfpError::domain("penrose_margin", "k = 0 has no kernel"));
    }
    if k.abs() <= PENROSE_CUTOFF {
        return penrose_margin_grid(k, nu, None);
    }
    let base = penrose_margin_grid(PENROSE_CUTOFF * k.signum(), nu, None)?;
    let c = base.large_im_constant;
    let tab = transform_table(k, nu)?;
    let delta2 = fit_decay(&tab).rate;
    Ok(PenroseReport {
        k,
        nu,
        margin: 1.0 - c / (k * k) as f64,
        argmin_z: C0,
        region: PenroseRegion::standard(k, delta2, PENROSE_C),
        delta2,
        max_error: 0.0,
        large_im_constant: c,
        shortcut: true,
    })
}

fn check_lengths(q: usize, tab: &KernelTable) -> Result<()> {
    if q > tab.len() {
        return Err(VpfpError::Consistency(format!("{q} samples requested from a {}-sample kernel", tab.len())));
    }
    Ok(())
}

/// Trapezoid march for `rho = Q + K * rho`; `K(0) = 0` keeps it explicit.
pub fn volterra_solve(q: &[Complex64], tab: &KernelTable) -> Result<Vec<Complex64>> {
    check_lengths(q.len(), tab)?;
    let h = tab.dt;
    let k = &tab.values;
    let implicit = 1.0 - 0.5 * h * k.first().copied().unwrap_or(0.0);
    let mut rho: Vec<Complex64> = Vec::with_capacity(q.len());
    for n in 0..q.len() {
        if n == 0 {
            rho.push(q[0]);
            continue;
        }
        let mut acc = rho[0] * (0.5 * k[n]);
        for j in 1..n {
            acc += rho[j] * k[n - j];
        }
        rho.push((q[n] + acc * h) / implicit);
    }
    Ok(rho)
}

/// Resolvent of the trapezoid scheme, `R = K + K * R`.
///
/// With `K(0) = 0` the discrete identity `rho = Q + R * Q` holds exactly for
/// the trapezoid convolution, so the two routes agree to rounding.
pub fn resolvent_r(tab: &KernelTable) -> Result<KernelTable> {
    if tab.values.first().is_some_and(|v| *v != 0.0) {
        return Err(VpfpError::domain("resolvent_r", "kernel must vanish at t = 0"));
    }
    let h = tab.dt;
    let k = &tab.values;
    let mut r: Vec<f64> = Vec::with_capacity(k.len());
    for n in 0..k.len() {
        let mut acc = 0.0;
        for j in 1..n {
            acc += k[n - j] * r[j];
        }
        r.push(k[n] + h * acc);
    }
    Ok(KernelTable { k: tab.k, nu: tab.nu, dt: h, values: r })
}

/// `Q + R * Q` by the trapezoid rule.
pub fn apply_resolvent(q: &[Complex64], r: &KernelTable) -> Result<Vec<Complex64>> {
    check_lengths(q.len(), r)?;
    let h = r.dt;
    let rv = &r.values;
    Ok((0..q.len())
        .map(|n| {
            let mut acc = C0;
            if n > 0 {
                acc += q[0] * (0.5 * rv[n]) + q[n] * (0.5 * rv[0]);
                for j in 1..n {
                    acc += q[j] * rv[n - j];
                }
            }
            q[n] + acc * h
        })
        .collect())
}

/// Density per mode `k = 1..=k_max` on `t_j = j dt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensitySeries {
    pub dt: f64,
    pub k_max: usize,
    pub rows: Vec<Vec<Complex64>>,
}

impl DensitySeries {
    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `rho_k(t_j)`, with `rho_{-k} = conj(rho_k)` and `rho_0 = 0`.
    pub fn at(&self, k: i64, j: usize) -> Complex64 {
        match k {
            0 => C0,
            k if k > 0 => self.rows[k as usize - 1][j],
            k => self.rows[(-k) as usize - 1][j].conj(),
        }
    }

    /// Linear interpolation in time.
    pub fn sample(&self, k: i64, t: f64) -> Complex64 {
        let x = t / self.dt;
        let j = (x.floor() as usize).min(self.len().saturating_sub(2));
        let u = x - j as f64;
        self.at(k, j) * (1.0 - u) + self.at(k, j + 1) * u
    }
}

/// Free, damped density `Q_k(t) = S_k(t) g_in(k, k t^ap)`.
pub fn free_density(initial: &SpectralField, k: i64, dt: f64, n: usize) -> Result<Vec<Complex64>> {
    if initial.frame != Frame::Unsheared || initial.t != 0.0 {
        return Err(VpfpError::domain("free_density", "expects unsheared data at t = 0"));
    }
    let nu = initial.nu;
    let row = initial.row(k);
    (0..n)
        .map(|j| {
            let t = j as f64 * dt;
            let s = semigroup_s_diag(t, k, nu)?;
            Ok(interpolate_row(row, &initial.grid, k as f64 * ap(t, nu)).value * s)
        })
        .collect()
}

fn steps(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_final >= 0.0) {
        return Err(VpfpError::domain("linear density", format!("dt = {dt}, T = {t_final}")));
    }
    Ok((t_final / dt).round() as usize + 1)
}

/// Linear density from the trapezoid Volterra march on a kernel table.
pub fn volterra_density(initial: &SpectralField, t_final: f64, dt: f64) -> Result<DensitySeries> {
    let n = steps(t_final, dt)?;
    let km = initial.grid.k_max;
    let nu = initial.nu;
    let rows = (1..=km as i64)
        .into_par_iter()
        .map(|k| {
            let q = free_density(initial, k, dt, n)?;
            let tab = KernelTable::build(k, nu, dt, t_final)?;
            volterra_solve(&q, &tab)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensitySeries { dt, k_max: km, rows })
}

// 4-point Gauss-Legendre on [0, 1]
const GL_X: [f64; 4] = [0.069_431_844_202_973_71, 0.330_009_478_207_571_9, 0.669_990_521_792_428_1, 0.930_568_155_797_026_3];
const GL_W: [f64; 4] = [0.173_927_422_568_726_9, 0.326_072_577_431_273_1, 0.326_072_577_431_273_1, 0.173_927_422_568_726_9];

/// Product integration: `rho` piecewise linear in time and the kernel
/// integrated against the hat functions by Gauss-Legendre, which makes the
/// newest node implicit through the factor `1 - B_1`.
pub fn product_integration_solve(q: &[Complex64], k: i64, nu: f64, dt: f64) -> Result<Vec<Complex64>> {
    let n = q.len();
    // rising[p] = int_panel K (s - t_p)/h, falling[p] = int_panel K (t_{p+1} - s)/h
    let mut rising = vec![0.0; n];
    let mut falling = vec![0.0; n];
    for p in 0..n.saturating_sub(1) {
        for (x, w) in GL_X.iter().zip(&GL_W) {
            let kv = kernel_k((p as f64 + x) * dt, k, nu)? * w * dt;
            rising[p] += kv * x;
            falling[p] += kv * (1.0 - x);
        }
    }
    let b1 = falling[0];
    let mut rho: Vec<Complex64> = Vec::with_capacity(n);
    for m in 0..n {
        if m == 0 {
            rho.push(q[0]);
            continue;
        }
        let mut acc = rho[0] * rising[m - 1];
        for j in 1..m {
            let d = m - j;
            acc += rho[j] * (rising[d - 1] + falling[d]);
        }
        rho.push((q[m] + acc) / (1.0 - b1));
    }
    Ok(rho)
}

/// Linear density by product integration of the closed-form kernel.
pub fn linear_density(initial: &SpectralField, t_final: f64, dt: f64) -> Result<DensitySeries> {
    let n = steps(t_final, dt)?;
    let km = initial.grid.k_max;
    let nu = initial.nu;
    let rows = (1..=km as i64)
        .into_par_iter()
        .map(|k| {
            let q = free_density(initial, k, dt, n)?;
            product_integration_solve(&q, k, nu, dt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensitySeries { dt, k_max: km, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_k(0.0, 1, 1e-3).unwrap(), 0.0);
        assert!(kernel_k(1.0, 0, 0.0).is_err());
        for &t in &[0.3, 1.0, 2.5] {
            for k in 1..4i64 {
                let e = -t * (-(k * k) as f64 * t * t / 2.0).exp();
                assert!((kernel_k(t, k, 0.0).unwrap() - e).abs() < 1e-15);
            }
        }
        // nu > 0: S from an independent quadrature of nu k^2 int_0^t (s^ap)^2 ds
        let (nu, k) = (1e-3, 1i64);
        for &t in &[0.5, 3.0, 10.0] {
            let n = 20000;
            let h = t / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let s = (i as f64 + 0.5) * h;
                let a = (1.0 - (-nu * s).exp()) / nu;
                acc += a * a * h;
            }
            let a = (1.0 - (-nu * t).exp()) / nu;
            let e = -(-nu * acc).exp() * a * (-(a * a) / 2.0).exp();
            assert!((kernel_k(t, k, nu).unwrap() - e).abs() < 1e-9 * e.abs());
        }
    }

    #[test]
    fn transform_at_origin() {
        let tab = transform_table(1, 0.0).unwrap();
        let tr = fourier_laplace(&tab, C0).unwrap();
        assert!((tr.value.re + 1.0 / TAU).abs() < 1e-7, "{}", tr.value);
        // the estimate is the size of the Richardson correction, well above the true error
        assert!(tr.value.im.abs() < 1e-15);
        assert!(tr.error < 1e-4 && (tr.value.re + 1.0 / TAU).abs() <= tr.error, "{} {}", tr.value.re + 1.0 / TAU, tr.error);
        let zero = KernelTable::from_fn(1, 0.0, 0.01, 5.0, |_| 0.0);
        assert_eq!(fourier_laplace(&zero, Complex64::new(-100.0, 0.0)).unwrap().value, C0);
    }

    #[test]
    fn transform_of_exponential_kernel() {
        // int_0^inf t e^{-t} e^{-zt} dt = 1/(1+z)^2
        let tab = KernelTable::from_fn(1, 0.0, 1e-3, 60.0, |t| t * (-t).exp());
        for &z in &[Complex64::new(0.0, 0.0), Complex64::new(0.3, 2.0), Complex64::new(-0.2, -5.0)] {
            let tr = fourier_laplace(&tab, z).unwrap();
            let e = Complex64::new(1.0, 0.0) / ((1.0 + z) * (1.0 + z)) / TAU;
            assert!((tr.value - e).norm() < 1e-9, "{z}: {} vs {e}", tr.value);
            assert!((tr.value - e).norm() <= tr.error + 1e-12);
        }
    }

    #[test]
    fn transform_rejects_divergent_region() {
        let tab = transform_table(1, 0.0).unwrap();
        let ev = LaplaceEvaluator::new(&tab);
        assert!(ev.eval(Complex64::new(ev.abscissa() - 0.1, 0.0)).is_err());
    }

    #[test]
    fn transform_decays_in_im_z() {
        let tab = transform_table(2, 1e-3).unwrap();
        let ev = LaplaceEvaluator::new(&tab);
        let mut cmax: f64 = 0.0;
        for i in 0..200 {
            let y = i as f64 * 0.2;
            let v = ev.eval(Complex64::new(0.0, y)).unwrap().value.norm();
            cmax = cmax.max(v * (4.0 + y * y));
        }
        assert!(cmax.is_finite() && cmax < 1.0);
    }

    #[test]
    fn penrose_origin_sample() {
        let region = PenroseRegion { re_min: 0.0, re_max: 0.0, im_half: 0.0, n_re: 1, n_im: 1 };
        let rep = penrose_margin_grid(1, 0.0, Some(region)).unwrap();
        assert!((rep.margin - (1.0 + 1.0 / TAU)).abs() < 1e-6, "{}", rep.margin);
    }

    #[test]
    fn penrose_shortcut_is_conservative() {
        let rep = penrose_margin(11, 0.0).unwrap();
        assert!(rep.shortcut);
        let direct = penrose_margin_grid(11, 0.0, None).unwrap();
        assert!(direct.margin >= rep.margin, "{} < {}", direct.margin, rep.margin);
        assert!(rep.margin > 0.99);
    }

    #[test]
    fn volterra_zero_kernel() {
        let tab = KernelTable::from_fn(1, 0.0, 0.1, 2.0, |_| 0.0);
        let q: Vec<Complex64> = (0..21).map(|j| Complex64::new(j as f64, 1.0)).collect();
        assert_eq!(volterra_solve(&q, &tab).unwrap(), q);
        assert!(resolvent_r(&tab).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn volterra_constant_kernel() {
        // K = -a, Q = 1: rho = e^{-at}, R = -a e^{-at}; the trapezoid march
        // with a nonzero K(0) is implicit through 1 + a h / 2
        let a = 0.7;
        for &h in &[0.01, 0.005] {
            let tab = KernelTable::from_fn(1, 0.0, h, 5.0, |_| -a);
            let q = vec![c(1.0); tab.len()];
            let rho = volterra_solve(&q, &tab).unwrap();
            let err = rho.iter().enumerate().map(|(j, r)| (r.re - (-a * tab.t(j)).exp()).abs()).fold(0.0, f64::max);
            assert!(err < 2e-5 * (h / 0.01).powi(2), "{h}: {err}");
        }
    }

    #[test]
    fn resolvent_of_constant_kernel() {
        // K = -a t, Q = 1: rho'' = -a rho so rho = cos(sqrt(a) t), and
        // R = -sqrt(a) sin(sqrt(a) t)
        let a = 0.5;
        let h = 1e-3;
        let tab = KernelTable::from_fn(1, 0.0, h, 10.0, |t| -a * t);
        let q = vec![c(1.0); tab.len()];
        let rho = volterra_solve(&q, &tab).unwrap();
        let err = rho.iter().enumerate().map(|(j, r)| (r.re - (a.sqrt() * tab.t(j)).cos()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
        let r = resolvent_r(&tab).unwrap();
        let err = r.values.iter().enumerate().map(|(j, v)| (v + a.sqrt() * (a.sqrt() * r.t(j)).sin()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn picard_iteration_agrees() {
        let tab = KernelTable::build(1, 0.0, 1e-2, 20.0).unwrap();
        let q: Vec<Complex64> = (0..tab.len()).map(|j| c((-tab.t(j).powi(2) / 2.0).exp())).collect();
        let rho = volterra_solve(&q, &tab).unwrap();
        // fixed-point iteration on the same trapezoid operator
        let mut it = q.clone();
        for _ in 0..200 {
            let h = tab.dt;
            let nxt: Vec<Complex64> = (0..q.len())
                .map(|n| {
                    let mut acc = C0;
                    for j in 0..=n {
                        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                        acc += it[j] * (w * tab.values[n - j]);
                    }
                    q[n] + acc * h
                })
                .collect();
            let diff = nxt.iter().zip(&it).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            it = nxt;
            if diff < 1e-15 {
                break;
            }
        }
        let err = rho.iter().zip(&it).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn trapezoid_march_is_second_order() {
        let solve = |h: f64| {
            let tab = KernelTable::build(1, 1e-3, h, 10.0).unwrap();
            let q: Vec<Complex64> = (0..tab.len()).map(|j| c((-tab.t(j).powi(2) / 2.0).exp())).collect();
            let r = volterra_solve(&q, &tab).unwrap();
            let stride = (0.5 / h).round() as usize;
            r.into_iter().step_by(stride).collect::<Vec<_>>()
        };
        let a = solve(0.02);
        let b = solve(0.01);
        let c = solve(0.005);
        let e1 = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let e2 = b.iter().zip(&c).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let ratio = e1 / e2;
        assert!((3.6..4.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn product_integration_matches_trapezoid() {
        let dt = 2e-3;
        let q: Vec<Complex64> = (0..5001).map(|j| Complex64::new(0.0, (-(j as f64 * dt - 1.0).powi(2)).exp())).collect();
        let tab = KernelTable::build(2, 1e-3, dt, 10.0).unwrap();
        let a = volterra_solve(&q, &tab).unwrap();
        let b = product_integration_solve(&q, 2, 1e-3, dt).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-5 * scale, "{err}");
    }

    #[test]
    fn decay_fit_is_grid_stable() {
        let a = fit_decay(&KernelTable::build(1, 0.0, 1e-3, 40.0).unwrap());
        let b = fit_decay(&KernelTable::build(1, 0.0, 5e-4, 40.0).unwrap());
        assert!(a.rate > 0.3 && a.rate < 1.0, "{a:?}");
        assert!((a.rate - b.rate).abs() < 0.05 * a.rate);
        assert!((a.constant - b.constant).abs() < 0.05 * a.constant);
        let z = fit_decay(&KernelTable::from_fn(1, 0.0, 0.1, 1.0, |_| 0.0));
        assert_eq!(z.constant, 0.0);
    }

    #[test]
    fn linear_density_of_zero_data() {
        let g = Grid::new(2, 256, 16.0).unwrap();
        let f = SpectralField::zeros(g, Frame::Unsheared, 0.0, 0.0);
        let d = linear_density(&f, 2.0, 0.01).unwrap();
        assert!(d.rows.iter().flatten().all(|v| *v == C0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn resolvent_reproduces_march(seed in 0u64..1000, k in 1i64..4, nu in prop_oneof![Just(0.0), Just(1e-3), Just(1e-2)]) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let tab = KernelTable::build(k, nu, 1e-2, 15.0).unwrap();
            let q: Vec<Complex64> = (0..tab.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let a = volterra_solve(&q, &tab).unwrap();
            let r = resolvent_r(&tab).unwrap();
            let b = apply_resolvent(&q, &r).unwrap();
            let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            prop_assert!(err < 1e-10, "{}", err);
        }
    }
}
