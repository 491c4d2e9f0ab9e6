//! Experiments selectable by name at run time.

use std::f64::consts::TAU;

use serde::Serialize;
use serde_json::{json, Value};

use super::dissipation::{enhanced_dissipation_scan, nonzero_mode_norm, zero_mode_heat_check, zero_mode_norm};
use super::echo::{cascade_exponent, full_echo, reduced_echo};
use super::fit::fit_decay_rate;
use super::landau::{envelope_stability, landau_damping_check, moment_sup, Envelope};
use super::limit::collisionless_limit;
use super::threshold::{gamma_of_s, threshold_scan};
use super::triangle::oracle_triangle;
use crate::certify::{check_gevrey_inequalities, check_semigroup_properties, check_zero_mode_bound, small_time_exponent_error, CertReport, CERT_CSV_HEADER, SemigroupSampling};
use crate::config::{ExperimentKind, RunConfig};
use crate::dynamics::{Simulator, SourceTerms, StepReport};
use crate::error::{Result, VpfpError};
use crate::initial::make_initial_data;
use crate::multipliers::{certify_multiplier_lemma, MultiplierSampling};
use crate::output::{sci, Artifacts};
use crate::volterra::{penrose_margin, penrose_margin_grid, PenroseRegion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    CheckFailed,
    RunFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::RunFailed => 1,
            Status::CheckFailed => 3,
        }
    }

    fn of(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::CheckFailed
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub status: Status,
    pub summary: Value,
}

impl Outcome {
    fn checked(pass: bool, summary: Value) -> Self {
        Outcome { status: Status::of(pass), summary }
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    /// Writes the experiment's tables into `out` and returns its summary.
    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome>;
}

pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![Box::new(Simulate), Box::new(Linear), Box::new(Penrose), Box::new(Echo), Box::new(Threshold), Box::new(Limit), Box::new(Check)]
}

pub fn lookup(name: &str) -> Option<Box<dyn Experiment>> {
    registry().into_iter().find(|e| e.name() == name)
}

/// Runs the configured experiment into `cfg.output_dir` and writes
/// `config.json` and `summary.json`. Configuration errors are returned;
/// any other failure becomes a [`Status::RunFailed`] summary.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let exp = lookup(cfg.experiment.name()).ok_or_else(|| VpfpError::Config(format!("no experiment `{}`", cfg.experiment)))?;
    let out = Artifacts::create(&cfg.output_dir, cfg.hash())?;
    out.write_json("config.json", cfg)?;
    let outcome = match exp.run(cfg, &out) {
        Ok(o) => o,
        Err(e @ VpfpError::Config(_)) => return Err(e),
        Err(e) => Outcome { status: Status::RunFailed, summary: json!({ "error": e.to_string() }) },
    };
    out.write_json("summary.json", &json!({ "experiment": exp.name(), "status": outcome.status, "summary": outcome.summary }))?;
    Ok(outcome)
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

pub struct Simulate;

fn step_row(r: &StepReport) -> Vec<f64> {
    vec![r.t, r.dt, r.mass_drift, r.momentum_drift, r.energy_drift, r.momentum_defect, r.out_of_window as f64, r.out_of_window_fraction, r.max_abs]
}

const STEP_COLUMNS: [&str; 9] = ["t", "dt", "mass_drift", "momentum_drift", "energy_drift", "momentum_defect", "out_of_window", "out_of_window_fraction", "max_abs"];
const MOMENT_COLUMNS: [&str; 7] = ["t", "abs_rho_1", "moment_sup", "field_energy", "total_energy", "nonzero_norm", "zero_norm"];

fn moment_row(s: &Simulator) -> Result<Vec<f64>> {
    let m = s.moments()?;
    Ok(vec![s.t(), m.rho_at(1).norm(), moment_sup(&m), m.field_energy(), m.total_energy(), nonzero_mode_norm(&s.field), zero_mode_norm(&s.field)])
}

impl Experiment for Simulate {
    fn name(&self) -> &'static str {
        ExperimentKind::Simulate.name()
    }

    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let st = &cfg.simulate;
        let sources = match st.sources.as_str() {
            "linear" => SourceTerms::LINEAR,
            "none" => SourceTerms::NONE,
            _ => SourceTerms::ALL,
        };
        let f = make_initial_data(&cfg.initial, &cfg.grid, cfg.nu)?;
        let mut steps = Vec::new();
        let mut moments = Vec::new();
        let failure = match Simulator::new(f, sources) {
            Err(e) => Some(e),
            Ok(mut sim) => {
                moments.push(moment_row(&sim)?);
                let mut n = 0usize;
                let r = sim.run_until(cfg.t_final, cfg.dt, |s, rep| {
                    n += 1;
                    steps.push(step_row(rep));
                    moments.push(moment_row(s)?);
                    if cfg.snapshot_every > 0 && n.is_multiple_of(cfg.snapshot_every) {
                        out.write_snapshot(&format!("snapshot_{n:06}.bin"), &s.field)?;
                    }
                    Ok(())
                });
                r.err()
            }
        };
        out.write_table("moments.csv", &MOMENT_COLUMNS, &moments)?;
        out.write_table("steps.csv", &STEP_COLUMNS, &steps)?;
        let e0 = moments.first().map_or(f64::NAN, |r| r[4]);
        let worst = |c: usize| steps.iter().map(|r| r[c].abs()).fold(0.0, f64::max);
        let drift = json!({ "mass": worst(2), "momentum": worst(3), "energy": worst(4), "energy_relative": worst(4) / e0.abs() });
        if let Some(e) = failure {
            let t = steps.last().map_or(0.0, |r| r[0]);
            return Ok(Outcome { status: Status::RunFailed, summary: json!({ "blow_up": e.to_string(), "last_t": t, "drift": drift }) });
        }
        let conserved = worst(2) <= st.mass_tolerance && worst(3) <= st.momentum_tolerance && worst(4) <= st.energy_tolerance * e0.abs();
        let norms: Vec<(f64, f64)> = moments.iter().map(|r| (r[0], r[5])).collect();
        let decay = fit_decay_rate(&norms, (1.0, cfg.t_final)).map_err(|e| e.to_string());
        let sup: Vec<(f64, f64)> = moments.iter().map(|r| (r[0], r[2])).collect();
        let env = cfg.landau.envelope(cfg.initial.sigma0, cfg.multipliers.delta0);
        let run_env = Envelope { nu: cfg.nu, ..env };
        let envelope = landau_damping_check(&sup, cfg.initial.eps, &run_env).map_err(|e| e.to_string());
        let mut pass = conserved;
        let mut summary = json!({
            "drift": drift,
            "tolerances": { "mass": st.mass_tolerance, "momentum": st.momentum_tolerance, "energy_relative": st.energy_tolerance },
            "conserved": conserved,
            "nonzero_decay": match &decay { Ok(d) => json!({ "rate": d.rate, "amplitude": d.amplitude, "residual": d.residual }), Err(e) => json!({ "invalid": e }) },
            "envelope": match &envelope { Ok(f) => to_json(f), Err(e) => json!({ "invalid": e }) },
        });
        if st.envelope_stability {
            let l = &cfg.landau;
            let r = envelope_stability(&l.datum(&cfg.initial), &l.grid, l.nu, l.dt, l.t_final, &env)?;
            pass &= r.change <= l.tolerance;
            summary["envelope_stability"] = json!({ "report": to_json(&r), "tolerance": l.tolerance, "pass": r.change <= l.tolerance });
        }
        Ok(Outcome::checked(pass, summary))
    }
}

pub struct Linear;

impl Experiment for Linear {
    fn name(&self) -> &'static str {
        ExperimentKind::Linear.name()
    }

    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let st = &cfg.linear;
        let wants = |p: &str| st.parts.iter().any(|x| x == p);
        let mut pass = true;
        let mut summary = json!({});
        if wants("triangle") {
            let r = oracle_triangle(&cfg.triangle)?;
            let rows: Vec<Vec<f64>> = r.rows.iter().map(|x| vec![x.nu, x.k as f64, x.scale, x.sim_volterra, x.sim_linear, x.volterra_linear]).collect();
            out.write_table("triangle.csv", &["nu", "k", "scale", "sim_volterra", "sim_linear", "volterra_linear"], &rows)?;
            let ok = r.worst <= st.triangle_tolerance;
            pass &= ok;
            summary["triangle"] = json!({ "relative": r.relative, "worst": r.worst, "tolerance": st.triangle_tolerance, "pass": ok });
        }
        if wants("scan") {
            let r = enhanced_dissipation_scan(&cfg.scan, &cfg.scan.datum(&cfg.initial))?;
            let rows: Vec<Vec<f64>> = r.points.iter().map(|p| vec![p.nu, p.fit.rate, p.fit.residual, p.fit.window.0, p.fit.window.1]).collect();
            out.write_table("scan.csv", &["nu", "rate", "residual", "t_lo", "t_hi"], &rows)?;
            let ok = within(r.slope.slope, st.slope_range);
            pass &= ok;
            summary["scan"] = json!({ "slope": to_json(&r.slope), "range": st.slope_range, "pass": ok });
        }
        if wants("heat") {
            let r = zero_mode_heat_check(st.heat_nu, &cfg.initial)?;
            let ok = within(r.ratio, st.heat_range);
            pass &= ok;
            summary["heat"] = json!({ "nu": r.nu, "rate": r.fit.rate, "ratio": r.ratio, "range": st.heat_range, "pass": ok });
        }
        Ok(Outcome::checked(pass, summary))
    }
}

pub struct Penrose;

impl Experiment for Penrose {
    fn name(&self) -> &'static str {
        ExperimentKind::Penrose.name()
    }

    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let st = &cfg.penrose;
        let mut rows = Vec::new();
        let mut min_margin = f64::INFINITY;
        for &nu in &st.nu_list {
            for k in 1..=st.k_max {
                let r = penrose_margin(k, nu)?;
                min_margin = min_margin.min(r.margin);
                rows.push(vec![
                    sci(nu),
                    k.to_string(),
                    sci(r.margin),
                    sci(r.argmin_z.re),
                    sci(r.argmin_z.im),
                    sci(r.delta2),
                    sci(r.max_error),
                    r.shortcut.to_string(),
                ]);
            }
        }
        out.write_csv("penrose.csv", &["nu", "k", "margin", "argmin_re", "argmin_im", "delta2", "max_error", "shortcut"], &rows)?;
        let origin = PenroseRegion { re_min: 0.0, re_max: 0.0, im_half: 0.0, n_re: 1, n_im: 1 };
        let sample = penrose_margin_grid(1, 0.0, Some(origin))?.margin;
        let expected = 1.0 + 1.0 / TAU;
        let sample_ok = (sample - expected).abs() <= 1e-4;
        let pass = min_margin > 0.0 && sample_ok;
        Ok(Outcome::checked(
            pass,
            json!({ "min_margin": min_margin, "origin_sample": { "value": sample, "expected": expected, "pass": sample_ok } }),
        ))
    }
}

pub struct Echo;

impl Experiment for Echo {
    fn name(&self) -> &'static str {
        ExperimentKind::Echo.name()
    }

    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let st = &cfg.echo;
        let reduced = reduced_echo(st, st.delta1.unwrap_or(cfg.multipliers.delta1))?;
        let full = full_echo(st)?;
        out.write_table("echo.csv", &["t", "abs_rho_k"], &full.series.iter().map(|&(t, v)| vec![t, v]).collect::<Vec<_>>())?;
        let etas: Vec<f64> = (0..=12).map(|i| 10f64.powf(12.0 + 0.5 * i as f64)).collect();
        let cascade = cascade_exponent(st.eps, st.gamma, &etas)?;
        let predicted_power = (1.0 - 3.0 * st.gamma) / (3.0 - 3.0 * st.gamma);
        let peak_ok = reduced.peak_error <= 0.05;
        let gain_ok = within(reduced.ratio, (1.0 / 3.0, 3.0));
        let pass = peak_ok && gain_ok && full.visible;
        Ok(Outcome::checked(
            pass,
            json!({
                "reduced": to_json(&reduced),
                "reduced_pass": { "peak": peak_ok, "gain": gain_ok },
                "full": { "local_max_t": full.local_max_t, "visible": full.visible, "gain": full.gain, "nonlinear_to_linear": full.nonlinear_to_linear },
                "cascade": { "slope": cascade.slope, "predicted": predicted_power },
            }),
        ))
    }
}

pub struct Threshold;

impl Experiment for Threshold {
    fn name(&self) -> &'static str {
        ExperimentKind::Threshold.name()
    }

    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let r = threshold_scan(&cfg.threshold, &cfg.initial)?;
        let rows: Vec<Vec<String>> = r
            .points
            .iter()
            .map(|p| {
                let opt = |x: Option<f64>| x.map_or_else(String::new, sci);
                vec![
                    sci(p.s),
                    sci(p.nu),
                    opt(p.eps_critical),
                    sci(p.log10_bracket),
                    opt(p.amplitude_critical),
                    p.runs.to_string(),
                    p.refinements_used.to_string(),
                    format!("\"{}\"", p.inconclusive.clone().unwrap_or_default()),
                ]
            })
            .collect();
        out.write_csv("threshold.csv", &["s", "nu", "eps_critical", "log10_bracket", "amplitude_critical", "runs", "refinements", "inconclusive"], &rows)?;
        let endpoints = json!({ "gamma_at_0": gamma_of_s(0.0)?, "gamma_at_third": gamma_of_s(1.0 / 3.0)? });
        Ok(Outcome::checked(r.ordered == Some(true), json!({ "fits": to_json(&r.fits), "ordered": r.ordered, "endpoints": endpoints })))
    }
}

pub struct Limit;

impl Experiment for Limit {
    fn name(&self) -> &'static str {
        ExperimentKind::Limit.name()
    }

    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let st = &cfg.limit;
        let r = collisionless_limit(st, &st.datum(&cfg.initial))?;
        let rows: Vec<Vec<f64>> = r.distance.iter().map(|&(t, d)| vec![t, d, d / (st.nu * t.powi(3))]).collect();
        out.write_table("limit.csv", &["t", "distance", "ratio"], &rows)?;
        let pass = (r.fit.slope - 3.0).abs() <= 0.5;
        Ok(Outcome::checked(
            pass,
            json!({ "slope": to_json(&r.fit), "constant": r.constant, "ratio_change": r.ratio_change, "early_scheme_share": r.early_scheme_share, "window": [st.t_burn, st.t_final] }),
        ))
    }
}

pub struct Check;

impl Experiment for Check {
    fn name(&self) -> &'static str {
        ExperimentKind::Check.name()
    }

    /// Gates on the certification rows. The small-time exponent deviation
    /// is reported alongside.
    fn run(&self, cfg: &RunConfig, out: &Artifacts) -> Result<Outcome> {
        let st = &cfg.check;
        let mut report = CertReport::default();
        for &s in &st.s_list {
            report.extend(check_gevrey_inequalities(s, st.gevrey_samples, cfg.seed)?);
        }
        report.extend(check_semigroup_properties(st.semigroup_samples, cfg.seed, &SemigroupSampling::default()));
        report.extend(check_zero_mode_bound(st.zero_mode_samples, cfg.seed));
        report.extend(certify_multiplier_lemma(st.multiplier_samples, cfg.seed, &MultiplierSampling::default(), None));
        let rows: Vec<Vec<String>> = report.rows.iter().map(|r| vec![r.csv()]).collect();
        let columns: Vec<&str> = CERT_CSV_HEADER.split(',').collect();
        out.write_csv("check.csv", &columns, &rows)?;
        let (small_time, at) = small_time_exponent_error(st.semigroup_samples, cfg.seed, st.small_time_nu_t);
        let failed: Vec<&str> = report.rows.iter().filter(|r| !r.pass).map(|r| r.id.as_str()).collect();
        Ok(Outcome::checked(
            report.all_pass(),
            json!({ "rows": report.rows.len(), "failed": failed, "small_time_relative_error": small_time, "small_time_worst": at, "small_time_nu_t": st.small_time_nu_t }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_with;

    fn config(dir: &std::path::Path, sets: &[&str]) -> RunConfig {
        let mut all: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        all.push(format!("output_dir=\"{}\"", dir.display()));
        parse_config_with("", &all).unwrap()
    }

    #[test]
    fn every_kind_is_registered() {
        for k in ExperimentKind::ALL {
            assert_eq!(lookup(k.name()).unwrap().name(), k.name());
        }
        assert!(lookup("plot").is_none());
    }

    #[test]
    fn small_simulation_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            dir.path(),
            &["grid.k_max=2", "grid.n_eta=128", "grid.eta_max=16.0", "t_final=1.0", "dt=0.1", "snapshot_every=5", "initial.normalization=\"amplitude\""],
        );
        let o = execute(&cfg).unwrap();
        assert_eq!(o.status, Status::Pass, "{}", o.summary);
        for f in ["config.json", "summary.json", "moments.csv", "steps.csv", "snapshot_000010.bin"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let moments = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
        assert!(moments.starts_with(&format!("# vpfp {} config={}", crate::output::VERSION, cfg.hash())));
    }

    #[test]
    fn blow_up_still_writes_a_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            dir.path(),
            &["grid.k_max=2", "grid.n_eta=128", "grid.eta_max=16.0", "t_final=1.0", "dt=0.1", "initial.eps=5.0", "initial.normalization=\"amplitude\""],
        );
        let o = execute(&cfg).unwrap();
        assert_eq!(o.status, Status::RunFailed);
        let s: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["status"], "run-failed");
        assert_eq!(s["config_hash"], cfg.hash());
    }

    #[test]
    fn config_errors_are_not_run_failures() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &["experiment=\"linear\"", "linear.parts=[\"scan\"]", "scan.nu_list=[1e-2]"]);
        assert!(matches!(execute(&cfg), Err(VpfpError::Config(_))));
    }

    #[test]
    fn penrose_rows_are_positive() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &["experiment=\"penrose\"", "penrose.k_max=2", "penrose.nu_list=[0.0]"]);
        let o = execute(&cfg).unwrap();
        assert_eq!(o.status, Status::Pass, "{}", o.summary);
        assert!(o.summary["min_margin"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sets = ["grid.k_max=2", "grid.n_eta=128", "grid.eta_max=16.0", "t_final=0.5", "dt=0.1", "initial.normalization=\"amplitude\""];
        let (ca, cb) = (config(a.path(), &sets), config(b.path(), &sets));
        execute(&ca).unwrap();
        execute(&cb).unwrap();
        for f in ["moments.csv", "steps.csv"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }
}
