//! Stability-threshold scan: bisection on the datum size for each
//! `(s, nu)` cell and a regression of `log eps_crit` on `log nu`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dissipation::nonzero_mode_norm;
use super::fit::fit_power_law;
use super::landau::moment_sup;
use crate::dynamics::{Simulator, SourceTerms};
use crate::error::{Result, VpfpError};
use crate::initial::{make_initial_data, InitialDataSpec, Normalization};
use crate::spectral::{Grid, SpectralField};

/// `gamma(s) = (1 - 3 s) / (3 - 3 s)`, the size exponent on `s in [0, 1/3]`.
pub fn gamma_of_s(s: f64) -> Result<f64> {
    if !(0.0..=1.0 / 3.0).contains(&s) {
        return Err(VpfpError::domain("gamma_of_s", format!("s = {s} outside [0, 1/3]")));
    }
    Ok((1.0 - 3.0 * s) / (3.0 - 3.0 * s))
}

/// Inverse of `s_k = (1 - 3 gamma) / (3 - 3 gamma)`; the map is an
/// involution. Regularity above `1/3` needs no smallness in `nu`, so the
/// prediction is clamped to 0 there.
pub fn predicted_gamma(s: f64) -> f64 {
    if s >= 1.0 / 3.0 {
        0.0
    } else {
        (1.0 - 3.0 * s.max(0.0)) / (3.0 - 3.0 * s.max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSettings {
    pub s_list: Vec<f64>,
    pub nu_list: Vec<f64>,
    pub grid: Grid,
    pub dt: f64,
    /// `T = horizon_factor nu^{-1/3}`.
    pub horizon_factor: f64,
    pub log10_eps_lo: f64,
    /// Upper end of the bracket search; the search starts where the datum's
    /// largest amplitude is `1e-3`.
    pub log10_eps_max: f64,
    pub bisections: usize,
    /// Rounds of refinement (dt halved) allowed for a non-monotone curve.
    pub refinements: usize,
    /// Runs allowed per cell, refinements included.
    pub run_budget: usize,
    /// Blow-up once `max |g|` exceeds this multiple of its initial value.
    pub growth_cap: f64,
    /// Decay required of `||P_!=0 g||` and of the moment sup by `t = T`.
    pub decay: f64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        ThresholdSettings {
            s_list: vec![0.4, 0.6, 0.9],
            nu_list: vec![1e-2, 1e-3],
            grid: Grid { k_max: 4, n_eta: 1536, eta_max: 192.0 },
            dt: 0.1,
            horizon_factor: 4.0,
            log10_eps_lo: -8.0,
            log10_eps_max: 60.0,
            bisections: 10,
            refinements: 3,
            run_budget: 120,
            growth_cap: 100.0,
            decay: 0.1,
        }
    }
}

impl ThresholdSettings {
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        if self.nu_list.len() < 2 {
            e.push(format!("threshold.nu_list has {} value(s); gamma_hat needs at least 2", self.nu_list.len()));
        }
        if self.nu_list.iter().any(|&nu| !(nu > 0.0 && nu <= 1.0)) {
            e.push("threshold.nu_list values must lie in (0, 1]".into());
        }
        if self.s_list.is_empty() || self.s_list.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            e.push("threshold.s_list must be nonempty with values in (0, 1]".into());
        }
        if !(self.log10_eps_lo < self.log10_eps_max) {
            e.push("threshold.log10_eps_lo must be below log10_eps_max".into());
        }
        if !(self.decay > 0.0 && self.decay < 1.0 && self.growth_cap > 1.0 && self.horizon_factor > 0.0) {
            e.push("threshold.decay must lie in (0, 1), growth_cap above 1, horizon_factor positive".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(VpfpError::Config(e.join("; ")))
        }
    }

    pub fn horizon(&self, nu: f64) -> f64 {
        self.horizon_factor * nu.powf(-1.0 / 3.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictDetail {
    pub verdict: Verdict,
    pub blow_up: bool,
    /// The datum itself is beyond the density guard `||rho||_inf < 1/2`.
    pub at_start: bool,
    pub nonzero_decay: f64,
    pub moment_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub s: f64,
    pub nu: f64,
    /// Geometric midpoint of the final bracket.
    pub eps_critical: Option<f64>,
    /// `log10(hi / lo)` of the final bracket.
    pub log10_bracket: f64,
    /// Physical amplitude `max |g(0)|` at `eps_critical`.
    pub amplitude_critical: Option<f64>,
    /// `(eps, stable?)` samples of the last round.
    pub verdict_curve: Vec<(f64, bool)>,
    pub refinements_used: usize,
    pub runs: usize,
    pub inconclusive: Option<String>,
}

/// Stable iff no blow-up, `||P_!=0 g(T)|| <= decay max ||P_!=0 g||`, and the
/// moment sup decays by the same factor.
pub fn stability_verdict(datum: &SpectralField, t_final: f64, dt: f64, st: &ThresholdSettings) -> Result<VerdictDetail> {
    let start = datum.max_abs();
    let blown = VerdictDetail { verdict: Verdict::Unstable, blow_up: true, at_start: false, nonzero_decay: f64::NAN, moment_decay: f64::NAN };
    let mut sim = match Simulator::new(datum.clone(), SourceTerms::ALL) {
        Err(VpfpError::BlowUp { .. }) => return Ok(VerdictDetail { at_start: true, ..blown }),
        other => other?,
    };
    let (mut nmax, mut mmax) = (nonzero_mode_norm(&sim.field), moment_sup(&sim.moments()?));
    let run = sim.run_until(t_final, dt, |s, rep| {
        if !(rep.max_abs <= st.growth_cap * start) {
            return Err(VpfpError::BlowUp { t: s.t(), reason: format!("max |g| = {:e}", rep.max_abs) });
        }
        nmax = nmax.max(nonzero_mode_norm(&s.field));
        mmax = mmax.max(moment_sup(&s.moments()?));
        Ok(())
    });
    match run {
        Err(VpfpError::BlowUp { .. }) => return Ok(blown),
        Err(e) => return Err(e),
        Ok(()) => {}
    }
    let nonzero_decay = nonzero_mode_norm(&sim.field) / nmax;
    let moment_decay = moment_sup(&sim.moments()?) / mmax;
    let stable = nonzero_decay <= st.decay && moment_decay <= st.decay;
    Ok(VerdictDetail {
        verdict: if stable { Verdict::Stable } else { Verdict::Unstable },
        blow_up: false,
        at_start: false,
        nonzero_decay,
        moment_decay,
    })
}

fn monotone(curve: &[(f64, bool)]) -> bool {
    let mut sorted = curve.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first_unstable = sorted.iter().position(|p| !p.1).unwrap_or(sorted.len());
    sorted[first_unstable..].iter().all(|p| !p.1)
}

struct Cell<'a> {
    st: &'a ThresholdSettings,
    unit: SpectralField,
    t_final: f64,
    runs: usize,
}

impl Cell<'_> {
    fn stable(&mut self, log_eps: f64, dt: f64, curve: &mut Vec<(f64, bool)>) -> Result<bool> {
        Ok(self.verdict(log_eps, dt, curve)?.verdict == Verdict::Stable)
    }

    fn verdict(&mut self, log_eps: f64, dt: f64, curve: &mut Vec<(f64, bool)>) -> Result<VerdictDetail> {
        if self.runs >= self.st.run_budget {
            return Err(VpfpError::Consistency(format!("run budget of {} exhausted", self.st.run_budget)));
        }
        self.runs += 1;
        let mut f = self.unit.clone();
        f.scale(10f64.powf(log_eps));
        let v = stability_verdict(&f, self.t_final, dt, self.st)?;
        curve.push((10f64.powf(log_eps), v.verdict == Verdict::Stable));
        Ok(v)
    }

    /// One bracket-and-bisect round; returns the final bracket in `log10`.
    fn round(&mut self, dt: f64, curve: &mut Vec<(f64, bool)>) -> Result<std::result::Result<(f64, f64), String>> {
        let st = self.st;
        let lo = st.log10_eps_lo;
        if !self.stable(lo, dt, curve)? {
            return Ok(Err(format!("unstable already at eps = 1e{lo}")));
        }
        let mut hi = (-3.0 - self.unit.max_abs().log10()).max(lo + 1.0);
        let mut lo = lo;
        let mut hi_at_start;
        loop {
            if hi > st.log10_eps_max {
                return Ok(Err(format!("no unstable eps up to 1e{}", st.log10_eps_max)));
            }
            let v = self.verdict(hi, dt, curve)?;
            if v.verdict == Verdict::Unstable {
                hi_at_start = v.at_start;
                break;
            }
            lo = hi;
            hi += 1.0;
        }
        for _ in 0..st.bisections {
            let mid = 0.5 * (lo + hi);
            let v = self.verdict(mid, dt, curve)?;
            if v.verdict == Verdict::Stable {
                lo = mid;
            } else {
                hi = mid;
                hi_at_start = v.at_start;
            }
        }
        if hi_at_start {
            return Ok(Err(format!(
                "no dynamical instability: the first unstable eps = {:e} already violates the density guard at t = 0",
                10f64.powf(hi)
            )));
        }
        // probes on both sides of the bracket check the ordering
        let width = hi - lo;
        for p in [lo - 1.0, lo - 4.0 * width, hi + 4.0 * width, hi + 1.0] {
            self.stable(p, dt, curve)?;
        }
        Ok(Ok((lo, hi)))
    }
}

fn scan_cell(s: f64, nu: f64, base: &InitialDataSpec, st: &ThresholdSettings) -> Result<ThresholdPoint> {
    let spec = InitialDataSpec { s, eps: 1.0, normalization: Normalization::Gevrey, ..base.clone() };
    let unit = make_initial_data(&spec, &st.grid, nu)?;
    let mut cell = Cell { st, unit, t_final: st.horizon(nu), runs: 0 };
    let mut point = ThresholdPoint {
        s,
        nu,
        eps_critical: None,
        log10_bracket: f64::NAN,
        amplitude_critical: None,
        verdict_curve: Vec::new(),
        refinements_used: 0,
        runs: 0,
        inconclusive: None,
    };
    let mut dt = st.dt;
    for round in 0..=st.refinements {
        let mut curve = Vec::new();
        let outcome = match cell.round(dt, &mut curve) {
            Ok(o) => o,
            Err(VpfpError::Consistency(msg)) => Err(msg),
            Err(e) => return Err(e),
        };
        point.verdict_curve = curve;
        point.refinements_used = round;
        point.runs = cell.runs;
        match outcome {
            Err(msg) => {
                point.inconclusive = Some(msg);
                return Ok(point);
            }
            Ok((lo, hi)) if monotone(&point.verdict_curve) => {
                let mid = 10f64.powf(0.5 * (lo + hi));
                point.eps_critical = Some(mid);
                point.log10_bracket = hi - lo;
                point.amplitude_critical = Some(mid * cell.unit.max_abs());
                point.inconclusive = None;
                return Ok(point);
            }
            Ok(_) => {
                point.inconclusive = Some(format!("non-monotone verdicts after {round} refinement(s)"));
                dt *= 0.5;
            }
        }
    }
    Ok(point)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaFit {
    pub s: f64,
    pub gamma_hat: Option<f64>,
    /// Worst-case slope error from the bisection brackets.
    pub resolution: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub points: Vec<ThresholdPoint>,
    pub fits: Vec<GammaFit>,
    /// `gamma_hat` nonincreasing in `s` up to the bracket resolution; `None`
    /// when some cell is inconclusive.
    pub ordered: Option<bool>,
}

/// `eps_crit ~ nu^{gamma_hat}`.
pub fn fit_gamma(points: &[ThresholdPoint], s: f64) -> GammaFit {
    let cells: Vec<&ThresholdPoint> = points.iter().filter(|p| p.s == s).collect();
    let pts: Option<Vec<(f64, f64)>> = cells.iter().map(|p| p.eps_critical.map(|e| (p.nu, e))).collect();
    let gamma_hat = pts.filter(|v| v.len() >= 2).and_then(|v| fit_power_law(&v).ok()).map(|f| f.slope);
    let (lo, hi) = cells.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.nu.log10()), b.max(p.nu.log10())));
    let bracket = cells.iter().map(|p| p.log10_bracket).fold(0.0, f64::max);
    GammaFit { s, gamma_hat, resolution: bracket / (hi - lo), predicted: predicted_gamma(s) }
}

/// Nonincreasing up to the combined resolution of neighbouring fits.
pub fn gamma_ordered(fits: &[GammaFit]) -> Option<bool> {
    let mut sorted = fits.to_vec();
    sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
    let mut ok = true;
    for w in sorted.windows(2) {
        let (a, b) = (w[0].gamma_hat?, w[1].gamma_hat?);
        ok &= b <= a + w[0].resolution + w[1].resolution;
    }
    Some(ok)
}

pub fn threshold_scan(st: &ThresholdSettings, base: &InitialDataSpec) -> Result<ThresholdReport> {
    st.validate()?;
    let cells: Vec<(f64, f64)> = st.s_list.iter().flat_map(|&s| st.nu_list.iter().map(move |&nu| (s, nu))).collect();
    let points = cells.par_iter().map(|&(s, nu)| scan_cell(s, nu, base, st)).collect::<Result<Vec<_>>>()?;
    let fits: Vec<GammaFit> = st.s_list.iter().map(|&s| fit_gamma(&points, s)).collect();
    let ordered = gamma_ordered(&fits);
    Ok(ThresholdReport { points, fits, ordered })
}
