//! Plasma echo: a spike in mode `k + 1` at velocity frequency `eta0`
//! un-mixes at `tau* = eta0 / (k + 1)` and, through the `-1` background,
//! drives mode `k` at `t_p = eta0 / k`.
//!
//! The reduced model keeps only that interaction,
//!
//! ```text
//! rho_k(t) = int_0^t rho_{k+1}(tau) k/(k+1) (t - tau) f_{-1}(tau, k t - (k+1) tau) dtau
//! ```
//!
//! with `rho_{k+1}(tau) = f_{k+1}(0, (k+1) tau)` and both profiles carried by
//! the free semigroups.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_power_law, PowerFit};
use super::landau::sup_in_x;
use crate::dynamics::{Simulator, SourceTerms};
use crate::error::{Result, VpfpError};
use crate::kinematics::{semigroup_s, semigroup_s_diag};
use crate::spectral::{Frame, Grid, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EchoSettings {
    /// Echo mode; the spike sits in `k + 1`.
    pub k: i64,
    pub eta0: f64,
    /// Peak of the `+-1` background profile `eps e^{-eta^2/2}`.
    pub eps: f64,
    /// Peak of the spike `a e^{-(eta - eta0)^2 / (2 w^2)}`.
    pub spike: f64,
    pub width: f64,
    /// Size exponent: the background is `eps nu^gamma` when `nu > 0`.
    pub gamma: f64,
    pub nu: f64,
    /// Defaults to `delta1 = 0.1 delta0 / 16`.
    pub delta1: Option<f64>,
    pub grid: Grid,
    pub dt: f64,
    /// Defaults to `1.5 t_p`.
    pub t_final: Option<f64>,
    /// Simpson panels of the reduced-model quadrature.
    pub panels: usize,
}

impl Default for EchoSettings {
    fn default() -> Self {
        EchoSettings {
            k: 2,
            eta0: 20.0,
            eps: 1e-2,
            spike: 1e-2,
            width: 1.0,
            gamma: 0.0,
            nu: 0.0,
            delta1: None,
            grid: Grid { k_max: 4, n_eta: 1024, eta_max: 64.0 },
            dt: 0.05,
            t_final: None,
            panels: 4000,
        }
    }
}

impl EchoSettings {
    pub fn t_peak(&self) -> f64 {
        self.eta0 / self.k as f64
    }

    pub fn tau_star(&self) -> f64 {
        self.eta0 / (self.k + 1) as f64
    }

    pub fn horizon(&self) -> f64 {
        self.t_final.unwrap_or(1.5 * self.t_peak())
    }

    /// Background peak, `eps nu^gamma` for `nu > 0`.
    pub fn background(&self) -> f64 {
        if self.nu > 0.0 {
            self.eps * self.nu.powf(self.gamma)
        } else {
            self.eps
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        if self.k < 1 {
            e.push(format!("echo.k = {} must be at least 1", self.k));
        }
        if !(self.eta0 > 0.0 && self.width > 0.0) {
            e.push(format!("echo.eta0 = {} and echo.width = {} must be positive", self.eta0, self.width));
        }
        if !(self.nu >= 0.0 && self.gamma >= 0.0) {
            e.push(format!("echo.nu = {} and echo.gamma = {} must be nonnegative", self.nu, self.gamma));
        }
        if self.k >= 1 && self.eta0 > 0.0 {
            if self.t_peak() >= self.horizon() {
                e.push(format!("echo time {} is beyond T_final = {}", self.t_peak(), self.horizon()));
            }
            if self.k + 1 > self.grid.k_max as i64 {
                e.push(format!("echo.grid.k_max = {} must hold mode k + 1 = {}", self.grid.k_max, self.k + 1));
            }
            if self.grid.eta_max < (self.k + 1) as f64 * self.t_peak() + 6.0 * self.width {
                e.push(format!(
                    "echo.grid.eta_max = {} does not resolve eta up to (k+1) t_echo = {}",
                    self.grid.eta_max,
                    (self.k + 1) as f64 * self.t_peak()
                ));
            }
        }
        if self.panels < 2 {
            e.push("echo.panels must be at least 2".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(VpfpError::Config(e.join("; ")))
        }
    }

    fn spike_profile(&self, eta: f64) -> f64 {
        let u = (eta - self.eta0) / self.width;
        self.spike * (-0.5 * u * u).exp()
    }
}

fn background_profile(eta: f64) -> f64 {
    (-0.5 * eta * eta).exp()
}

/// The two-mode model evaluated by composite Simpson quadrature.
pub struct ReducedEcho<'a> {
    pub settings: &'a EchoSettings,
}

impl ReducedEcho<'_> {
    /// `rho_{k+1}(tau)`.
    pub fn spike_density(&self, tau: f64) -> Result<f64> {
        let st = self.settings;
        let l = st.k + 1;
        Ok(st.spike_profile(l as f64 * tau) * semigroup_s_diag(tau, l, st.nu)?)
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        let st = self.settings;
        let (k, l) = (st.k as f64, (st.k + 1) as f64);
        let bg = st.background();
        let integrand = |tau: f64| -> Result<f64> {
            let eta = k * t - l * tau;
            let damp = semigroup_s(tau, 0.0, -1, eta, st.nu)?;
            Ok(self.spike_density(tau)? * k / l * (t - tau) * bg * background_profile(eta) * damp)
        };
        let n = 2 * st.panels.div_ceil(2);
        let h = t / n as f64;
        let mut acc = integrand(0.0)? + integrand(t)?;
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(i as f64 * h)?;
        }
        Ok(acc * h / 3.0)
    }

    /// The `nu = 0` density as a Gaussian integral over the whole line.
    pub fn density_closed_form(&self, t: f64) -> f64 {
        let st = self.settings;
        let (k, l) = (st.k as f64, (st.k + 1) as f64);
        let w2 = st.width * st.width;
        let p = 1.0 / w2 + 1.0;
        let m = (st.eta0 / w2 + k * t) / p;
        let miss = st.eta0 - k * t;
        st.spike * st.background() * k / (l * l) * (t - m / l) * (std::f64::consts::TAU / p).sqrt() * (-0.5 * miss * miss / (w2 + 1.0)).exp()
    }
}

/// Per-echo amplification `eps t^{1-3 gamma} / k^2`.
pub fn predicted_gain_collisionless(eps: f64, gamma: f64, t: f64, k: i64) -> f64 {
    eps * t.powf(1.0 - 3.0 * gamma) / (k * k) as f64
}

/// `eps nu^gamma t e^{-delta1 nu^{1/3} t} / k^2`.
pub fn predicted_gain_damped(eps: f64, gamma: f64, nu: f64, delta1: f64, t: f64, k: i64) -> f64 {
    eps * nu.powf(gamma) * t * (-delta1 * nu.cbrt() * t).exp() / (k * k) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedEchoReport {
    pub t_predicted: f64,
    pub t_peak: f64,
    pub peak_error: f64,
    /// `|rho_k(t_peak)| / |rho_{k+1}(tau*)|`.
    pub gain: f64,
    pub predicted: f64,
    pub ratio: f64,
}

/// Locates the peak of `|rho_k|` on `[t_p/2, 3 t_p/2]` and compares the gain
/// against the heuristic amplification.
pub fn reduced_echo(st: &EchoSettings, delta1: f64) -> Result<ReducedEchoReport> {
    st.validate()?;
    let model = ReducedEcho { settings: st };
    let tp = st.t_peak();
    let n = 400;
    let ts: Vec<f64> = (0..=n).map(|i| tp * (0.5 + i as f64 / n as f64)).collect();
    let mut vals = Vec::with_capacity(ts.len());
    for &t in &ts {
        vals.push(model.density(t)?.abs());
    }
    let (imax, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let t_peak = if imax > 0 && imax < n {
        // vertex of the parabola through the three samples
        let (a, b, c) = (vals[imax - 1], vals[imax], vals[imax + 1]);
        let h = ts[1] - ts[0];
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            ts[imax] + 0.5 * h * (a - c) / den
        } else {
            ts[imax]
        }
    } else {
        ts[imax]
    };
    let source = model.spike_density(st.tau_star())?.abs();
    if !(source > 0.0) {
        return Err(VpfpError::InvalidFit("spike density vanishes at tau*".into()));
    }
    let gain = model.density(t_peak)?.abs() / source;
    let predicted = if st.nu > 0.0 {
        predicted_gain_damped(st.eps, st.gamma, st.nu, delta1, t_peak, st.k)
    } else {
        predicted_gain_collisionless(st.eps, st.gamma, t_peak, st.k)
    };
    Ok(ReducedEchoReport {
        t_predicted: tp,
        t_peak,
        peak_error: (t_peak - tp).abs() / tp,
        gain,
        predicted,
        ratio: gain / predicted,
    })
}

/// Background in `+-1` and the spike in `+-(k+1)`, unsheared at `t = 0`.
pub fn echo_datum(st: &EchoSettings) -> SpectralField {
    let l = st.k + 1;
    let bg = st.background();
    SpectralField::from_fn(st.grid, Frame::Unsheared, 0.0, st.nu, |m, xi| {
        let v = if m.abs() == 1 {
            bg * background_profile(xi)
        } else if m == l {
            st.spike_profile(xi)
        } else if m == -l {
            st.spike_profile(-xi)
        } else {
            0.0
        };
        Complex64::new(v, 0.0)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FullEchoReport {
    /// `(t, |rho_k(t)|)`.
    pub series: Vec<(f64, f64)>,
    /// Largest value on `t_p (1 +- 0.1)` when it is a strict local maximum.
    pub local_max_t: Option<f64>,
    pub visible: bool,
    /// `|rho_k(t_p)| / |rho_{k+1}(tau*)|` from the simulator.
    pub gain: f64,
    /// `sup_x |rho|` of the nonlinear run over that of the linear run at `t_p`.
    pub nonlinear_to_linear: f64,
}

/// Runs the simulator with all sources and with field forcing only.
pub fn full_echo(st: &EchoSettings) -> Result<FullEchoReport> {
    st.validate()?;
    let datum = echo_datum(st);
    let (k, l) = (st.k, st.k + 1);
    let tp = st.t_peak();
    let tau = st.tau_star();
    let mut nl = Simulator::new(datum.clone(), SourceTerms::ALL)?;
    let mut lin = Simulator::new(datum, SourceTerms::LINEAR)?;
    let mut series = vec![(0.0, nl.moments()?.rho_at(k).norm())];
    let mut source: f64 = 0.0;
    let mut recorder = |s: &Simulator, series: &mut Vec<(f64, f64)>| -> Result<()> {
        let m = s.moments()?;
        series.push((s.t(), m.rho_at(k).norm()));
        if (s.t() - tau).abs() <= 0.1 * tau {
            source = source.max(m.rho_at(l).norm());
        }
        Ok(())
    };
    nl.run_until(tp, st.dt, |s, _| recorder(s, &mut series))?;
    lin.run_until(tp, st.dt, |_, _| Ok(()))?;
    let at_tp = nl.moments()?;
    let rho_nl = sup_in_x(&at_tp.rho, at_tp.k_max);
    let m_lin = lin.moments()?;
    let rho_lin = sup_in_x(&m_lin.rho, m_lin.k_max);
    let echo = at_tp.rho_at(k).norm();
    nl.run_until(st.horizon(), st.dt, |s, _| recorder(s, &mut series))?;

    let inside: Vec<usize> = (1..series.len() - 1).filter(|&i| (series[i].0 - tp).abs() <= 0.1 * tp).collect();
    let best = inside.iter().copied().max_by(|&a, &b| series[a].1.total_cmp(&series[b].1));
    let local_max_t = best.filter(|&i| series[i].1 > series[i - 1].1 && series[i].1 > series[i + 1].1).map(|i| series[i].0);
    let local_max_t = local_max_t.filter(|_| {
        let (lo, hi) = (inside[0], inside[inside.len() - 1]);
        best != Some(lo) && best != Some(hi)
    });
    Ok(FullEchoReport {
        series,
        visible: local_max_t.is_some(),
        local_max_t,
        gain: if source > 0.0 { echo / source } else { f64::NAN },
        nonlinear_to_linear: if rho_lin > 0.0 { rho_nl / rho_lin } else { f64::NAN },
    })
}

/// `log prod_{k >= 1} max(eps eta^a / k^b, 1)` with `a = 1 - 3 gamma`,
/// `b = 3 - 3 gamma`.
pub fn cascade_log_growth(eps: f64, gamma: f64, eta: f64) -> f64 {
    let (a, b) = (1.0 - 3.0 * gamma, 3.0 - 3.0 * gamma);
    let top = eps.ln() + a * eta.ln();
    let mut acc = 0.0;
    for k in 1u64.. {
        let term = top - b * (k as f64).ln();
        if term <= 0.0 {
            break;
        }
        acc += term;
    }
    acc
}

/// Power of `eta` in `log G(eta)` over the given frequencies; the chained
/// amplification predicts `(1 - 3 gamma) / (3 - 3 gamma)`.
pub fn cascade_exponent(eps: f64, gamma: f64, etas: &[f64]) -> Result<PowerFit> {
    let pts: Vec<(f64, f64)> = etas.iter().map(|&e| (e, cascade_log_growth(eps, gamma, e))).collect();
    fit_power_law(&pts)
}
