//! Gevrey-class initial perturbations with zero mass and momentum.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VpfpError};
use crate::kinematics::{bracket2, maxwellian_hat};
use crate::spectral::{with_stencil, Frame, Grid, SpectralField, C0, I};

/// Mode content of the generated datum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Modes `k = +-1` only.
    SingleMode,
    /// Every mode up to `k_max`, including the zero mode, in phase.
    Band,
    /// Every mode with a seeded random phase and velocity offset.
    RandomPhase,
}

/// What `eps` measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// The windowed weighted Gevrey norm, see [`gevrey_norm`].
    Gevrey,
    /// The largest Fourier amplitude `max_{k, xi} |g_k(0, xi)|`. For
    /// [`Profile::SingleMode`] this is the density amplitude `|rho_1(0)|`.
    Amplitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialDataSpec {
    pub eps: f64,
    pub s: f64,
    pub lambda_in: f64,
    pub sigma0: i32,
    pub m: u32,
    pub seed: u64,
    pub profile: Profile,
    pub normalization: Normalization,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            eps: 1e-2,
            s: 0.5,
            lambda_in: 1.0,
            sigma0: 21,
            m: 11,
            seed: 0,
            profile: Profile::SingleMode,
            normalization: Normalization::Gevrey,
        }
    }
}

impl InitialDataSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            errs.push(format!("initial.eps = {} must be >= 0", self.eps));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            errs.push(format!("initial.s = {} must lie in (0, 1]", self.s));
        }
        if !(self.lambda_in > 0.0 && self.lambda_in.is_finite()) {
            errs.push(format!("initial.lambda_in = {} must be > 0", self.lambda_in));
        }
        errs
    }

    /// Modulus profile `e^{-lambda <k,xi>^s} <k,xi>^{-sigma0-1} e^{-xi^2/4}`.
    pub fn envelope(&self, k: i64, xi: f64) -> f64 {
        let b = bracket2(k as f64, xi);
        (-self.lambda_in * b.powf(self.s) - 0.25 * xi * xi).exp() * b.powi(-self.sigma0 - 1)
    }
}

/// Generates the initial perturbation at `t = 0`, scaled so that its
/// weighted Gevrey norm (with velocity weight `<v>^{m+2} e^{2 nu |v|^2}`)
/// equals `eps`, then projected to zero mass, zero momentum and equilibrium
/// energy.
pub fn make_initial_data(spec: &InitialDataSpec, grid: &Grid, nu: f64) -> Result<SpectralField> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(VpfpError::Config(errs.join("; ")));
    }
    check_grid(spec, grid)?;
    let mut f = SpectralField::zeros(*grid, Frame::Unsheared, 0.0, nu);
    if spec.eps == 0.0 {
        return Ok(f);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let km = grid.k_max as i64;
    let modes: Vec<i64> = match spec.profile {
        Profile::SingleMode => vec![1],
        Profile::Band | Profile::RandomPhase => (0..=km).collect(),
    };
    for k in modes {
        let (phase, shift) = match spec.profile {
            Profile::RandomPhase if k != 0 => (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0)),
            _ => (0.0, 0.0),
        };
        for j in 0..grid.n_eta {
            let xi = grid.eta(j);
            let z = Complex64::from_polar(spec.envelope(k, xi), phase - shift * xi);
            f.row_mut(k)[j] = z;
        }
    }
    f.enforce_symmetry();
    for _ in 0..4 {
        project_zero_mode(&mut f);
        let n = match spec.normalization {
            Normalization::Gevrey => gevrey_norm(&f, spec, nu)?,
            Normalization::Amplitude => f.max_abs(),
        };
        if !(n > 0.0) {
            return Err(VpfpError::Config("generated datum has vanishing norm".into()));
        }
        f.scale(spec.eps / n);
    }
    project_zero_mode(&mut f);
    Ok(f)
}

fn check_grid(spec: &InitialDataSpec, grid: &Grid) -> Result<()> {
    let mut errs = Vec::new();
    if grid.eta_max < 12.0 {
        errs.push(format!("grid.eta_max = {} cannot hold the e^(-xi^2/4) envelope (need >= 12)", grid.eta_max));
    }
    if grid.d_eta() > 0.25 {
        errs.push(format!("frequency spacing {} too coarse for the envelope (need <= 0.25)", grid.d_eta()));
    }
    if matches!(spec.profile, Profile::Band | Profile::RandomPhase) {
        let tail = spec.envelope(grid.k_max as i64, 0.0) / spec.envelope(1, 0.0);
        if tail > 1e-6 {
            errs.push(format!(
                "grid.k_max = {} truncates the mode envelope (relative tail {tail:.3e}) for lambda_in = {}, s = {}",
                grid.k_max, spec.lambda_in, spec.s
            ));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(VpfpError::Config(errs.join("; ")))
    }
}

/// Zero-mode moments `(rho, M1, M2)` read from the `k = 0` row with the
/// 4th-order stencils at `eta = 0`.
pub fn zero_mode_moments(row: &[Complex64], grid: &Grid) -> (Complex64, Complex64, Complex64) {
    let z = grid.zero_index();
    let h = grid.d_eta();
    let d1 = with_stencil(1, |s| s.at(row, z, h).0);
    let d2 = with_stencil(2, |s| s.at(row, z, h).0);
    (row[z], I * d1, -d2)
}

/// Electric energy `sum_{k != 0} |rho_k|^2 / k^2` of a `t = 0` field, where
/// densities sit at `xi = 0`.
fn field_energy_t0(f: &SpectralField) -> f64 {
    let z = f.grid.zero_index();
    let mut e = 0.0;
    for k in f.grid.modes().filter(|&k| k != 0) {
        e += f.get(k, z).norm_sqr() / (k * k) as f64;
    }
    e
}

/// Adds `c0 mu + c1 i eta mu + c2 eta^2 mu` to the zero mode so that the
/// discrete mass and momentum vanish and `M2_0 = -||E||^2`.
pub fn project_zero_mode(f: &mut SpectralField) {
    let grid = f.grid;
    let target_m2 = -field_energy_t0(f);
    let basis: [Vec<Complex64>; 3] = [
        (0..grid.n_eta).map(|j| Complex64::new(maxwellian_hat(grid.eta(j)), 0.0)).collect(),
        (0..grid.n_eta).map(|j| I * grid.eta(j) * maxwellian_hat(grid.eta(j))).collect(),
        (0..grid.n_eta).map(|j| Complex64::new(grid.eta(j).powi(2) * maxwellian_hat(grid.eta(j)), 0.0)).collect(),
    ];
    let functionals = |row: &[Complex64]| {
        let (r, m1, m2) = zero_mode_moments(row, &grid);
        [r.re, m1.re, m2.re]
    };
    let mut a = [[0.0; 3]; 3];
    for (c, b) in basis.iter().enumerate() {
        let v = functionals(b);
        for r in 0..3 {
            a[r][c] = v[r];
        }
    }
    let cur = functionals(f.row(0));
    let rhs = [-cur[0], -cur[1], target_m2 - cur[2]];
    let c = solve3(a, rhs);
    let row = f.row_mut(0);
    for j in 0..grid.n_eta {
        row[j] += basis[0][j] * c[0] + basis[1][j] * c[1] + basis[2][j] * c[2];
    }
    row[0] = C0;
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
pub fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let p = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..3 {
            let m = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= m * a[col][c];
            }
            b[r] -= m * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for c in r + 1..3 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

/// Velocity window of the norm quadrature: the weight is applied under a
/// smooth cutoff `e^{-(v/V_NORM)^8}`.
pub const V_NORM: f64 = 6.0;
/// Frequency band on which the weighted transform is measured.
pub const XI_NORM: f64 = 8.0;
const DV: f64 = 0.05;

/// Velocity-side cutoff applied together with the moment weight.
#[inline]
pub fn velocity_window(v: f64) -> f64 {
    (-(v / V_NORM).powi(8)).exp()
}

/// Weighted Gevrey norm
/// `|| <nabla>^{sigma0+1} e^{lambda <nabla>^s} (<v>^{m+2} e^{2 nu v^2} g) ||_{L^2}`
/// of a `t = 0` field, by quadrature in velocity.
///
/// The envelope decays only exponentially in `v` (its algebraic factor has
/// poles at `xi = +-i<k>`), so against `e^{2 nu v^2}` the integral diverges.
/// It is measured on the window `|v| <~ V_NORM`, `|xi| <= XI_NORM`.
pub fn gevrey_norm(f: &SpectralField, spec: &InitialDataSpec, nu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(VpfpError::domain("gevrey_norm", format!("nu = {nu} outside [0, 1]")));
    }
    let g = &f.grid;
    let h = g.d_eta();
    let vmax = 1.6 * V_NORM;
    let nv = (2.0 * vmax / DV).round() as usize + 1;
    let vs: Vec<f64> = (0..nv).map(|i| -vmax + i as f64 * DV).collect();
    let weight_v: Vec<f64> = vs
        .iter()
        .map(|&v| (1.0 + v * v).powf(0.5 * (spec.m + 2) as f64) * (2.0 * nu * v * v).exp() * velocity_window(v))
        .collect();
    let band: Vec<usize> = (0..g.n_eta).filter(|&j| g.eta(j).abs() <= 13.0).collect();
    let out_band: Vec<usize> = (0..g.n_eta).filter(|&j| g.eta(j).abs() <= XI_NORM).collect();
    let mut total = Vec::new();
    for k in g.modes() {
        let row = f.row(k);
        if band.iter().all(|&j| row[j] == C0) {
            continue;
        }
        // g_k(v) = (1/2pi) int g_k(xi) e^{i xi v} dxi, then weight
        let hv: Vec<Complex64> = vs
            .iter()
            .zip(&weight_v)
            .map(|(&v, &w)| {
                let mut acc = C0;
                for &j in &band {
                    acc += row[j] * Complex64::from_polar(1.0, g.eta(j) * v);
                }
                acc * (h / std::f64::consts::TAU) * w
            })
            .collect();
        let terms: Vec<f64> = out_band
            .iter()
            .map(|&j| {
                let xi = g.eta(j);
                let mut acc = C0;
                for (z, &v) in hv.iter().zip(&vs) {
                    acc += z * Complex64::from_polar(1.0, -xi * v);
                }
                let b = bracket2(k as f64, xi);
                let w = b.powi(spec.sigma0 + 1) * (spec.lambda_in * b.powf(spec.s)).exp();
                (w * (acc * DV).norm()).powi(2)
            })
            .collect();
        total.push(crate::reduce::pairwise(&terms) * h);
    }
    Ok(crate::reduce::pairwise(&total).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(8, 512, 32.0).unwrap()
    }

    #[test]
    fn zero_eps_gives_zero_field() {
        let spec = InitialDataSpec { eps: 0.0, ..Default::default() };
        let f = make_initial_data(&spec, &grid(), 1e-3).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn single_mode_support_and_projection() {
        let spec = InitialDataSpec::default();
        let g = grid();
        let f = make_initial_data(&spec, &g, 1e-3).unwrap();
        let z = g.zero_index();
        assert!(f.get(1, z).norm() > 0.0 && f.get(-1, z).norm() > 0.0);
        for k in 2..=8 {
            assert_eq!(f.get(k, z), C0);
            assert_eq!(f.get(-k, z), C0);
        }
        let (rho, m1, m2) = zero_mode_moments(f.row(0), &g);
        assert!(rho.norm() < 1e-30 + 1e-15 * f.max_abs());
        assert!(m1.norm() < 1e-30 + 1e-15 * f.max_abs());
        let e2 = 2.0 * f.get(1, z).norm_sqr();
        assert!((m2.re + e2).abs() <= 1e-9 * e2, "{m2} {e2}");
        assert!(f.symmetry_defect() < 1e-15);
    }

    // Independent quadrature of the weighted norm: Simpson in velocity on a
    // wider, finer grid, and a fixed frequency band.
    fn oracle_norm(f: &SpectralField, spec: &InitialDataSpec, nu: f64) -> f64 {
        let g = &f.grid;
        let h = g.d_eta();
        let (vmax, nv) = (1.6 * V_NORM, 1201usize);
        let dv = 2.0 * vmax / (nv - 1) as f64;
        let mut total = 0.0;
        for k in g.modes() {
            let mut hv = vec![C0; nv];
            for (i, hvi) in hv.iter_mut().enumerate() {
                let v = -vmax + i as f64 * dv;
                let mut acc = C0;
                for j in 0..g.n_eta {
                    let xi = g.eta(j);
                    if xi.abs() < 14.0 {
                        acc += f.get(k, j) * (I * xi * v).exp();
                    }
                }
                let w = (1.0 + v * v).powf((spec.m + 2) as f64 / 2.0) * (2.0 * nu * v * v).exp() * (-(v / V_NORM).powi(8)).exp();
                *hvi = acc * h / (2.0 * std::f64::consts::PI) * w;
            }
            for j in 0..g.n_eta {
                let xi = g.eta(j);
                if xi.abs() > XI_NORM {
                    continue;
                }
                let mut acc = C0;
                for (i, z) in hv.iter().enumerate() {
                    let c = if i == 0 || i == nv - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += z * c * (-I * xi * (-vmax + i as f64 * dv)).exp();
                }
                acc *= dv / 3.0;
                let b = bracket2(k as f64, xi);
                let w = b.powi(spec.sigma0 + 1) * (spec.lambda_in * b.powf(spec.s)).exp();
                total += (w * acc.norm()).powi(2) * h;
            }
        }
        total.sqrt()
    }

    #[test]
    fn measured_norm_equals_eps() {
        for profile in [Profile::SingleMode, Profile::RandomPhase] {
            let spec = InitialDataSpec { eps: 1e-3, profile, seed: 9, ..Default::default() };
            let g = grid();
            let nu = 1e-2;
            let f = make_initial_data(&spec, &g, nu).unwrap();
            let n = oracle_norm(&f, &spec, nu);
            assert!((n / spec.eps - 1.0).abs() < 1e-2, "{profile:?}: {n}");
        }
    }

    #[test]
    fn random_phase_is_seeded() {
        let spec = InitialDataSpec { profile: Profile::RandomPhase, seed: 4, ..Default::default() };
        let a = make_initial_data(&spec, &grid(), 0.0).unwrap();
        let b = make_initial_data(&spec, &grid(), 0.0).unwrap();
        assert_eq!(a, b);
        let c = make_initial_data(&InitialDataSpec { seed: 5, ..spec }, &grid(), 0.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn narrow_grids_rejected() {
        let spec = InitialDataSpec::default();
        assert!(matches!(make_initial_data(&spec, &Grid::new(4, 64, 6.0).unwrap(), 0.0), Err(VpfpError::Config(_))));
        let heavy = InitialDataSpec { profile: Profile::Band, lambda_in: 1e-3, sigma0: 0, ..Default::default() };
        assert!(make_initial_data(&heavy, &Grid::new(2, 512, 32.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn amplitude_normalization() {
        let spec = InitialDataSpec { normalization: Normalization::Amplitude, profile: Profile::Band, eps: 1e-2, ..Default::default() };
        let f = make_initial_data(&spec, &grid(), 0.0).unwrap();
        assert!((f.max_abs() - 1e-2).abs() < 1e-12);
        let z = f.grid.zero_index();
        assert!(f.row(2)[z].norm() < f.row(1)[z].norm());
        let single = InitialDataSpec { profile: Profile::SingleMode, ..spec };
        let f = make_initial_data(&single, &grid(), 0.0).unwrap();
        assert!((f.row(1)[z].norm() - 1e-2).abs() < 1e-12);
    }

    #[test]
    fn solve3_solves() {
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let x = solve3(a, [3.0, 5.0, 5.0]);
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-14);
        }
    }
}
