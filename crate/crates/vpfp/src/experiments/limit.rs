//! Collisionless limit: the distance between a collisional run and its
//! `nu = 0` twin from the same datum.

use serde::{Deserialize, Serialize};

use super::fit::{fit_power_law, PowerFit};
use crate::dynamics::{physical_sup, Simulator, SourceTerms};
use crate::error::{Result, VpfpError};
use crate::initial::{make_initial_data, InitialDataSpec, Normalization, Profile};
use crate::spectral::{Frame, Grid, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitSettings {
    pub grid: Grid,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Start of the fit window. Before it the distance is dominated by the
    /// `O(nu t)` response to the moment-driven collision forcing, which
    /// phase-mixes away on the Landau time scale.
    pub t_burn: f64,
    /// Spacing of the recorded distances.
    pub sample_every: f64,
    pub eps: f64,
    /// Points in `x` for the physical sup.
    pub nx: usize,
    /// Velocity window `[-v_max, v_max]` and its number of points.
    pub v_max: f64,
    pub nv: usize,
    pub profile: Profile,
    pub normalization: Normalization,
}

impl LimitSettings {
    pub fn datum(&self, base: &InitialDataSpec) -> InitialDataSpec {
        InitialDataSpec { eps: self.eps, profile: self.profile, normalization: self.normalization, ..base.clone() }
    }
}

impl Default for LimitSettings {
    fn default() -> Self {
        LimitSettings {
            grid: Grid { k_max: 8, n_eta: 1024, eta_max: 64.0 },
            nu: 1e-3,
            dt: 0.02,
            t_final: 5.0,
            t_burn: 2.5,
            sample_every: 0.125,
            eps: 1e-3,
            nx: 64,
            v_max: 8.0,
            nv: 161,
            profile: Profile::SingleMode,
            normalization: Normalization::Amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitReport {
    /// `(t, ||g(t) - g0(t)||_inf)`.
    pub distance: Vec<(f64, f64)>,
    pub fit: PowerFit,
    /// `max_t distance / (nu t^3)` on the fit window.
    pub constant: f64,
    /// Largest relative change of `distance / (nu t^3)` on the window under
    /// `dt / 2`.
    pub ratio_change: f64,
    /// Largest relative change of the distance before the window under
    /// `dt / 2`; small values mean the burn-in is model, not scheme, error.
    pub early_scheme_share: f64,
}

fn difference(a: &SpectralField, b: &SpectralField) -> SpectralField {
    let (mut u, _) = a.to_frame(Frame::Unsheared);
    let (v, _) = b.to_frame(Frame::Unsheared);
    for (x, y) in u.data_mut().iter_mut().zip(v.data()) {
        *x -= *y;
    }
    u
}

/// `(t, ||g(t) - g0(t)||_inf)` of a run at `settings.nu` and its `nu = 0`
/// twin, sampled every `sample_every` up to `t_final`.
pub fn twin_distance(settings: &LimitSettings, spec: &InitialDataSpec, dt: f64) -> Result<Vec<(f64, f64)>> {
    let st = settings;
    if !(st.sample_every > 0.0 && st.t_final > 0.0) {
        return Err(VpfpError::Config(format!("limit sampling {} up to {} is empty", st.sample_every, st.t_final)));
    }
    let spec = InitialDataSpec { eps: st.eps, ..spec.clone() };
    let f = make_initial_data(&spec, &st.grid, st.nu)?;
    let mut f0 = f.clone();
    f0.nu = 0.0;
    let mut a = Simulator::new(f, SourceTerms::ALL)?;
    let mut b = Simulator::new(f0, SourceTerms::ALL)?;
    let vs: Vec<f64> = (0..st.nv).map(|i| -st.v_max + 2.0 * st.v_max * i as f64 / (st.nv - 1) as f64).collect();
    let n = (st.t_final / st.sample_every).round() as usize;
    let mut distance = Vec::with_capacity(n);
    for i in 1..=n {
        let t = i as f64 * st.sample_every;
        a.run_until(t, dt, |_, _| Ok(()))?;
        b.run_until(t, dt, |_, _| Ok(()))?;
        distance.push((t, physical_sup(&difference(&a.field, &b.field), st.nx, &vs)?));
    }
    Ok(distance)
}

pub fn collisionless_limit(settings: &LimitSettings, spec: &InitialDataSpec) -> Result<LimitReport> {
    let st = settings;
    if !(st.nu > 0.0) {
        return Err(VpfpError::Config(format!("limit.nu = {} must be positive", st.nu)));
    }
    if !(st.t_burn > 0.0 && st.t_burn < st.t_final) {
        return Err(VpfpError::Config(format!("limit window [{}, {}] is empty", st.t_burn, st.t_final)));
    }
    let distance = twin_distance(st, spec, st.dt)?;
    let refined = twin_distance(st, spec, 0.5 * st.dt)?;
    let in_window = |p: &&(f64, f64)| p.0 >= st.t_burn - 1e-12;
    let window: Vec<(f64, f64)> = distance.iter().filter(in_window).copied().collect();
    let fit = fit_power_law(&window)?;
    let r = |d: f64, t: f64| d / (st.nu * t.powi(3));
    let constant = window.iter().map(|&(t, d)| r(d, t)).fold(0.0, f64::max);
    let ratio_change = distance
        .iter()
        .zip(&refined)
        .filter(|(p, _)| in_window(p))
        .map(|(&(t, d), &(_, e))| (r(d, t) - r(e, t)).abs() / r(d, t))
        .fold(0.0, f64::max);
    let early_scheme_share = distance
        .iter()
        .zip(&refined)
        .filter(|(p, _)| !in_window(p))
        .map(|(&(_, d), &(_, e))| (d - e).abs() / d)
        .fold(0.0, f64::max);
    Ok(LimitReport { distance, fit, constant, ratio_change, early_scheme_share })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearly_collisionless_twins_coincide() {
        let st = LimitSettings {
            grid: Grid { k_max: 2, n_eta: 256, eta_max: 32.0 },
            nu: 1e-12,
            t_final: 1.0,
            t_burn: 0.25,
            nx: 8,
            nv: 11,
            ..Default::default()
        };
        let spec = InitialDataSpec { normalization: Normalization::Amplitude, ..Default::default() };
        let r = collisionless_limit(&st, &spec).unwrap();
        assert!(r.distance.iter().all(|&(_, d)| d < 1e-12), "{:?}", r.distance);
    }

    #[test]
    fn collisionless_twins_are_identical() {
        let st = LimitSettings {
            grid: Grid { k_max: 2, n_eta: 256, eta_max: 32.0 },
            nu: 0.0,
            t_final: 1.0,
            nx: 8,
            nv: 11,
            ..Default::default()
        };
        let spec = InitialDataSpec { normalization: Normalization::Amplitude, ..Default::default() };
        let d = twin_distance(&st, &spec, st.dt).unwrap();
        assert!(d.iter().all(|&(_, x)| x == 0.0));
    }

    #[test]
    fn rejects_an_empty_window() {
        let st = LimitSettings { t_burn: 6.0, ..Default::default() };
        assert!(matches!(collisionless_limit(&st, &InitialDataSpec::default()), Err(VpfpError::Config(_))));
    }
}
