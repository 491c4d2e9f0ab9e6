//! Linear-regime oracle triangle: the simulator's density against the trapezoid
//! Volterra march and the product-integration solver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Simulator, SourceTerms};
use crate::error::{Result, VpfpError};
use crate::initial::{make_initial_data, InitialDataSpec, Normalization, Profile};
use crate::spectral::Grid;
use crate::volterra::{linear_density, volterra_density, DensitySeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriangleSettings {
    pub nu_list: Vec<f64>,
    pub grid: Grid,
    pub eps: f64,
    /// Simulator step.
    pub dt: f64,
    /// Step of both linear solvers.
    pub oracle_dt: f64,
    pub t_lo: f64,
    pub t_final: f64,
}

impl Default for TriangleSettings {
    fn default() -> Self {
        TriangleSettings {
            nu_list: vec![0.0, 1e-3],
            grid: Grid { k_max: 8, n_eta: 2048, eta_max: 128.0 },
            eps: 1e-6,
            dt: 0.01,
            oracle_dt: 1e-3,
            t_lo: 1.0,
            t_final: 20.0,
        }
    }
}

/// Largest pairwise difference per mode over `[t_lo, T]`, relative to the
/// mode's largest density there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleRow {
    pub nu: f64,
    pub k: i64,
    pub scale: f64,
    pub sim_volterra: f64,
    pub sim_linear: f64,
    pub volterra_linear: f64,
}

impl TriangleRow {
    pub fn worst(&self) -> f64 {
        self.sim_volterra.max(self.sim_linear).max(self.volterra_linear)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleReport {
    /// Per-mode diagnostics.
    pub rows: Vec<TriangleRow>,
    /// Per `nu`: largest pairwise difference over all `(k, t)` in the window,
    /// relative to the largest Volterra density there.
    pub relative: Vec<(f64, f64)>,
    pub worst: f64,
}

fn compare(nu: f64, rows: &[Vec<(f64, Complex64)>], vd: &DensitySeries, ld: &DensitySeries, t_lo: f64) -> Vec<TriangleRow> {
    rows.iter()
        .enumerate()
        .map(|(i, series)| {
            let k = i as i64 + 1;
            let window = || series.iter().filter(|p| p.0 >= t_lo - 1e-9);
            let scale = window().map(|&(t, _)| vd.sample(k, t).norm()).fold(0.0, f64::max);
            let (mut sv, mut sl, mut vl) = (0.0f64, 0.0f64, 0.0f64);
            for &(t, r) in window() {
                let (v, l) = (vd.sample(k, t), ld.sample(k, t));
                sv = sv.max((r - v).norm());
                sl = sl.max((r - l).norm());
                vl = vl.max((v - l).norm());
            }
            TriangleRow { nu, k, scale, sim_volterra: sv / scale, sim_linear: sl / scale, volterra_linear: vl / scale }
        })
        .collect()
}

/// Band datum at amplitude `eps`. The simulator runs every source except the
/// moment-driven collision forcing, which the Volterra equation leaves out.
pub fn oracle_triangle(st: &TriangleSettings) -> Result<TriangleReport> {
    if st.nu_list.is_empty() || !(st.t_lo >= 0.0 && st.t_lo < st.t_final) {
        return Err(VpfpError::Config("triangle needs a nu value and t_lo < t_final".into()));
    }
    let spec = InitialDataSpec { eps: st.eps, profile: Profile::Band, normalization: Normalization::Amplitude, ..Default::default() };
    let sources = SourceTerms { collision_moments: false, ..SourceTerms::ALL };
    let mut out = Vec::new();
    let mut relative = Vec::new();
    for &nu in &st.nu_list {
        let f = make_initial_data(&spec, &st.grid, nu)?;
        let vd = volterra_density(&f, st.t_final, st.oracle_dt)?;
        let ld = linear_density(&f, st.t_final, st.oracle_dt)?;
        let km = st.grid.k_max;
        let mut rows: Vec<Vec<(f64, Complex64)>> = vec![Vec::new(); km];
        let mut sim = Simulator::new(f, sources)?;
        sim.run_until(st.t_final, st.dt, |s, _| {
            let m = s.moments()?;
            for (k, row) in rows.iter_mut().enumerate() {
                row.push((s.t(), m.rho_at(k as i64 + 1)));
            }
            Ok(())
        })?;
        let modes = compare(nu, &rows, &vd, &ld, st.t_lo);
        let scale = modes.iter().map(|r| r.scale).fold(0.0, f64::max);
        let diff = modes.iter().map(|r| r.worst() * r.scale).fold(0.0, f64::max);
        relative.push((nu, diff / scale));
        out.extend(modes);
    }
    let worst = relative.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(TriangleReport { rows: out, relative, worst })
}
