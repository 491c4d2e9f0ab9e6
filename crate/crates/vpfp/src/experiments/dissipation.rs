//! Enhanced dissipation of the nonzero modes and heat flow of the zero mode.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_decay_rate, fit_power_law, DecayFit, PowerFit};
use crate::dynamics::{SourceTerms, Simulator};
use crate::error::{Result, VpfpError};
use crate::initial::{make_initial_data, InitialDataSpec, Normalization, Profile};
use crate::reduce::pairwise;
use crate::spectral::{Frame, Grid, SpectralField, C0};

/// `int |g_k(xi)|^2 dxi` for one mode, with the `e^{nu t}` Jacobian when
/// the field is sheared.
fn mode_mass(field: &SpectralField, k: i64) -> f64 {
    let jac = match field.frame {
        Frame::Sheared => (field.nu * field.t).exp(),
        Frame::Unsheared => 1.0,
    };
    let sq: Vec<f64> = field.row(k).iter().map(|v| v.norm_sqr()).collect();
    pairwise(&sq) * field.grid.d_eta() * jac
}

/// `||P_!=0 g||_{L^2_xi}` summed over `k != 0`.
pub fn nonzero_mode_norm(field: &SpectralField) -> f64 {
    let per: Vec<f64> = field.grid.modes().filter(|&k| k != 0).map(|k| mode_mass(field, k)).collect();
    pairwise(&per).sqrt()
}

/// `||P_0 g||_{L^2_xi}`.
pub fn zero_mode_norm(field: &SpectralField) -> f64 {
    mode_mass(field, 0).sqrt()
}

/// Settings of the nonzero-mode decay scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSettings {
    pub nu_list: Vec<f64>,
    pub grid: Grid,
    pub dt: f64,
    /// Fit on `t >= 1` where `N(t)/N(1)` lies in `[floor, ceiling]`.
    pub ceiling: f64,
    pub floor: f64,
    /// Datum of the scan runs, over the base initial data.
    pub eps: f64,
    pub profile: Profile,
    pub normalization: Normalization,
}

impl ScanSettings {
    pub fn datum(&self, base: &InitialDataSpec) -> InitialDataSpec {
        InitialDataSpec { eps: self.eps, profile: self.profile, normalization: self.normalization, ..base.clone() }
    }
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            nu_list: vec![1e-2, 1e-3, 1e-4],
            grid: Grid { k_max: 2, n_eta: 512, eta_max: 32.0 },
            dt: 0.05,
            ceiling: 0.5,
            floor: 1e-4,
            eps: 1e-6,
            profile: Profile::SingleMode,
            normalization: Normalization::Amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub nu: f64,
    pub fit: DecayFit,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    /// `log rate` against `log nu`.
    pub slope: PowerFit,
}

/// Horizon long enough for `e^{-nu t^3 / 3}` to fall below `floor`, doubled.
fn scan_horizon(nu: f64, floor: f64) -> f64 {
    (2.0 * (3.0 * (1.0 / floor).ln() / nu).cbrt()).max(20.0)
}

/// Runs one small-amplitude simulation per `nu`, fits the decay rate of
/// `||P_!=0 g||` on the window where it has fallen from `ceiling` to
/// `floor` of its value at `t = 1`, and regresses the rates on `nu`.
pub fn enhanced_dissipation_scan(settings: &ScanSettings, spec: &InitialDataSpec) -> Result<ScanReport> {
    let nus = &settings.nu_list;
    if nus.len() < 3 {
        return Err(VpfpError::Config(format!("scan needs at least 3 nu values, got {}", nus.len())));
    }
    let (lo, hi) = nus.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo > 0.0) || hi / lo < 100.0 {
        return Err(VpfpError::Config(format!("scan nu values must be positive and span 2 decades, got [{lo}, {hi}]")));
    }
    let mut points = Vec::with_capacity(nus.len());
    for &nu in nus {
        let blame = |e: VpfpError| VpfpError::BlowUp { t: f64::NAN, reason: format!("scan aborted at nu = {nu}: {e}") };
        let f = make_initial_data(spec, &settings.grid, nu)?;
        let mut sim = Simulator::new(f, SourceTerms::ALL).map_err(blame)?;
        let t_cap = scan_horizon(nu, settings.floor);
        let mut series = vec![(0.0, nonzero_mode_norm(&sim.field))];
        let mut n1 = None;
        while sim.t() < t_cap {
            sim.step(settings.dt).map_err(blame)?;
            let n = nonzero_mode_norm(&sim.field);
            series.push((sim.t(), n));
            if n1.is_none() && sim.t() >= 1.0 - 1e-9 {
                n1 = Some(n);
            }
            if let Some(r) = n1 {
                if n < 0.5 * settings.floor * r {
                    break;
                }
            }
        }
        let n1 = n1.ok_or_else(|| VpfpError::InvalidFit(format!("nu = {nu}: run ended before t = 1")))?;
        let inside: Vec<f64> = series
            .iter()
            .filter(|&&(t, v)| t >= 1.0 && v <= settings.ceiling * n1 && v >= settings.floor * n1)
            .map(|p| p.0)
            .collect();
        let (Some(&a), Some(&b)) = (inside.first(), inside.last()) else {
            return Err(VpfpError::InvalidFit(format!("nu = {nu}: norm never entered the fit band")));
        };
        let fit = fit_decay_rate(&series, (a, b))?;
        points.push(ScanPoint { nu, fit, t_end: sim.t() });
    }
    let slope = fit_power_law(&points.iter().map(|p| (p.nu, p.fit.rate)).collect::<Vec<_>>())?;
    Ok(ScanReport { points, slope })
}

/// Result of the zero-mode heat-flow check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatCheck {
    pub nu: f64,
    pub fit: DecayFit,
    /// `rate / nu`.
    pub ratio: f64,
}

/// Evolves a zero-mode datum with a momentum (first Hermite) component
/// under the linear Fokker-Planck flow alone, and fits the decay of
/// `||P_0 g||` on `[4/nu, 6/nu]`. With zero mass the slowest component
/// decays like `e^{-nu t}`; it dominates once `e^{2 nu t}` exceeds the
/// inverse squared width of the datum, about `2 sigma0`.
pub fn zero_mode_heat_check(nu: f64, spec: &InitialDataSpec) -> Result<HeatCheck> {
    if !(nu > 0.0) {
        return Err(VpfpError::domain("zero_mode_heat_check", "nu must be positive"));
    }
    let grid = Grid::new(1, 8192, 2.0)?;
    let mut f = SpectralField::zeros(grid, Frame::Sheared, 0.0, nu);
    for j in 1..grid.n_eta {
        let eta = grid.eta(j);
        f.row_mut(0)[j] = Complex64::new(0.0, spec.eps * eta * spec.envelope(0, eta) / spec.envelope(0, 0.0));
    }
    f.row_mut(0)[0] = C0;
    let mut sim = Simulator::new(f, SourceTerms::NONE)?;
    sim.project_momentum = false;
    let t_end = 6.0 / nu;
    let mut series = Vec::new();
    // no sources, so the step is the exact semigroup at any dt
    sim.run_until(t_end, 0.5, |s, _| {
        series.push((s.t(), zero_mode_norm(&s.field)));
        Ok(())
    })?;
    let fit = fit_decay_rate(&series, (4.0 / nu, t_end))?;
    Ok(HeatCheck { nu, ratio: fit.rate / nu, fit })
}
