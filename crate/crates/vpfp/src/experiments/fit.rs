//! Least-squares fits on log scales.

use serde::Serialize;

use crate::error::{Result, VpfpError};

/// Minimum number of samples a decay fit accepts.
pub const MIN_FIT_SAMPLES: usize = 20;

/// Log-linear fit `value ~ amplitude e^{-rate t}` over a window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    #[serde(skip)]
    pub series: Vec<(f64, f64)>,
    pub window: (f64, f64),
    pub rate: f64,
    pub amplitude: f64,
    /// RMS residual of `log value`.
    pub residual: f64,
    pub samples: usize,
}

/// Ordinary least squares `y = a + b x`, returning `(a, b, rms, stderr_b)`.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let rms = (ss / n).sqrt();
    let se = if xs.len() > 2 && sxx > 0.0 { (ss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (a, b, rms, se)
}

/// Fits `log value` against `t` on the samples with `t` in `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(VpfpError::InvalidFit(format!(
            "{} samples in [{}, {}], need {MIN_FIT_SAMPLES}",
            pts.len(),
            window.0,
            window.1
        )));
    }
    if let Some(&(t, v)) = pts.iter().find(|&&(_, v)| !(v > 0.0 && v.is_finite())) {
        return Err(VpfpError::InvalidFit(format!("value {v} at t = {t} is not positive")));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (a, b, rms, _) = ols(&xs, &ys);
    Ok(DecayFit { series: pts, window, rate: -b, amplitude: a.exp(), residual: rms, samples: xs.len() })
}

/// Log-log regression `log y = c + slope log x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub prefactor: f64,
    pub stderr: f64,
    pub residual: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerFit> {
    if points.len() < 2 {
        return Err(VpfpError::InvalidFit(format!("{} points, need at least 2", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(VpfpError::InvalidFit(format!("point ({x}, {y}) is not positive")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (a, b, rms, se) = ols(&xs, &ys);
    Ok(PowerFit { slope: b, prefactor: a.exp(), stderr: se, residual: rms })
}
