//! Run configuration: TOML document, `--set` overrides, validation and the
//! config hash.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{fit_delta0, SemigroupSampling};
use crate::error::{Result, VpfpError};
use crate::experiments::dissipation::ScanSettings;
use crate::experiments::echo::EchoSettings;
use crate::experiments::landau::LandauSettings;
use crate::experiments::limit::LimitSettings;
use crate::experiments::threshold::ThresholdSettings;
use crate::experiments::triangle::TriangleSettings;
use crate::initial::InitialDataSpec;
use crate::multipliers::MultiplierConfig;
use crate::spectral::Grid;

/// Samples behind the default `delta0`.
pub const DELTA0_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Linear,
    Penrose,
    Echo,
    Threshold,
    Limit,
    Check,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Simulate,
        ExperimentKind::Linear,
        ExperimentKind::Penrose,
        ExperimentKind::Echo,
        ExperimentKind::Threshold,
        ExperimentKind::Limit,
        ExperimentKind::Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Linear => "linear",
            ExperimentKind::Penrose => "penrose",
            ExperimentKind::Echo => "echo",
            ExperimentKind::Threshold => "threshold",
            ExperimentKind::Limit => "limit",
            ExperimentKind::Check => "check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = VpfpError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| VpfpError::Config(format!("unknown experiment `{s}`")))
    }
}

/// Per-field overrides of [`MultiplierConfig::with_defaults`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiplierOverrides {
    pub lambda_inf: Option<f64>,
    pub delta_tilde: Option<f64>,
    pub a: Option<f64>,
    pub a0: Option<f64>,
    pub sigma1: Option<i32>,
    pub delta1: Option<f64>,
    pub delta: Option<f64>,
    pub k_seq: Option<Vec<f64>>,
    pub b: Option<f64>,
    pub delta0: Option<f64>,
}

impl MultiplierOverrides {
    fn resolve(&self, initial: &InitialDataSpec, nu: f64, seed: u64) -> MultiplierConfig {
        let delta0 = self.delta0.unwrap_or_else(|| fit_delta0(DELTA0_SAMPLES, seed, &SemigroupSampling::default()).0);
        let mut m = MultiplierConfig::with_defaults(initial.s, initial.lambda_in, initial.sigma0, initial.m, nu, delta0);
        macro_rules! take {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    m.$f = v.clone();
                }
            )*};
        }
        take!(lambda_inf, delta_tilde, a, a0, sigma1, delta1, delta, k_seq, b);
        m
    }
}

/// `simulate`: the configured run plus optional envelope refinement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    /// `all`, `linear` or `none`.
    pub sources: String,
    /// Also run the envelope study of the `landau` section.
    pub envelope_stability: bool,
    pub mass_tolerance: f64,
    pub momentum_tolerance: f64,
    /// Relative to the initial energy.
    pub energy_tolerance: f64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            sources: "all".into(),
            envelope_stability: false,
            mass_tolerance: 1e-10,
            momentum_tolerance: 1e-10,
            energy_tolerance: 1e-4,
        }
    }
}

/// `linear`: which parts run, and the zero-mode heat check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSettings {
    /// Any of `triangle`, `scan`, `heat`.
    pub parts: Vec<String>,
    pub triangle_tolerance: f64,
    pub slope_range: (f64, f64),
    pub heat_nu: f64,
    pub heat_range: (f64, f64),
}

impl Default for LinearSettings {
    fn default() -> Self {
        LinearSettings {
            parts: vec!["triangle".into(), "scan".into(), "heat".into()],
            triangle_tolerance: 1e-3,
            slope_range: (0.23, 0.43),
            heat_nu: 1e-2,
            heat_range: (0.8, 1.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenroseSettings {
    pub k_max: i64,
    pub nu_list: Vec<f64>,
}

impl Default for PenroseSettings {
    fn default() -> Self {
        PenroseSettings { k_max: 10, nu_list: vec![0.0, 1e-3, 1e-2] }
    }
}

/// `check`: sample counts of the certification suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckSettings {
    pub s_list: Vec<f64>,
    pub gevrey_samples: usize,
    pub semigroup_samples: usize,
    pub multiplier_samples: usize,
    pub zero_mode_samples: usize,
    /// Largest `nu t` of the small-time exponent comparison.
    pub small_time_nu_t: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            s_list: vec![0.2, 0.34, 0.9],
            gevrey_samples: 100_000,
            semigroup_samples: 100_000,
            multiplier_samples: 10_000,
            zero_mode_samples: 10_000,
            small_time_nu_t: 1e-2,
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub grid: Grid,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub initial: InitialDataSpec,
    pub multipliers: MultiplierConfig,
    pub output_dir: PathBuf,
    /// Steps between snapshots; 0 writes none.
    pub snapshot_every: usize,
    pub seed: u64,
    pub simulate: SimulateSettings,
    pub linear: LinearSettings,
    pub triangle: TriangleSettings,
    pub scan: ScanSettings,
    pub landau: LandauSettings,
    pub limit: LimitSettings,
    pub echo: EchoSettings,
    pub threshold: ThresholdSettings,
    pub penrose: PenroseSettings,
    pub check: CheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("the empty document is valid")
    }
}

impl RunConfig {
    /// Hex sha256 of the canonical JSON form without `output_dir`, so the
    /// same run written elsewhere keeps its hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("config is an object").remove("output_dir");
        let text = serde_json::to_string(&v).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if let Err(VpfpError::Config(msg)) = self.grid.validate() {
            e.extend(msg.split("; ").map(String::from));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            e.push(format!("nu = {} must be finite and >= 0", self.nu));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            e.push(format!("dt = {} must be > 0", self.dt));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            e.push(format!("t_final = {} must be > 0", self.t_final));
        }
        e.extend(self.initial.validate());
        e.extend(self.multipliers.validate().into_iter().filter(|m| self.nu > 0.0 || !m.starts_with("multipliers.nu ")));
        if !["all", "linear", "none"].contains(&self.simulate.sources.as_str()) {
            e.push(format!("simulate.sources = `{}` must be all, linear or none", self.simulate.sources));
        }
        for p in &self.linear.parts {
            if !["triangle", "scan", "heat"].contains(&p.as_str()) {
                e.push(format!("linear.parts entry `{p}` must be triangle, scan or heat"));
            }
        }
        e
    }
}

fn config_error(errs: Vec<String>) -> VpfpError {
    VpfpError::Config(errs.join("\n"))
}

/// Applies `key.path=value` to a TOML tree. The value is read as a TOML
/// value and falls back to a bare string.
pub fn apply_set(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| VpfpError::Config(format!("--set `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(VpfpError::Config(format!("--set `{assignment}` has an empty key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let (last, parents) = keys.split_last().expect("nonempty path");
    let mut table = doc;
    for k in parents {
        let slot = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = slot
            .as_table_mut()
            .ok_or_else(|| VpfpError::Config(format!("--set `{assignment}`: `{k}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Removes `key` and deserializes it, recording type errors and unknown
/// nested keys. A missing key gives `fallback`.
fn take<T: DeserializeOwned>(doc: &mut toml::Table, key: &str, fallback: T, errs: &mut Vec<String>) -> T {
    let Some(v) = doc.remove(key) else {
        return fallback;
    };
    let mut unknown = Vec::new();
    let r = serde_ignored::deserialize(v, |p| unknown.push(format!("{key}.{p}")));
    errs.extend(unknown.into_iter().map(|k| format!("unknown key `{k}`")));
    match r {
        Ok(x) => x,
        Err(e) => {
            errs.push(format!("{key}: {e}"));
            fallback
        }
    }
}

/// Parses and validates a TOML document with every default filled in.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

/// As [`parse_config`], with `--set` assignments applied first. All
/// errors are reported together.
pub fn parse_config_with(text: &str, sets: &[String]) -> Result<RunConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| VpfpError::Config(e.to_string()))?;
    for s in sets {
        apply_set(&mut doc, s)?;
    }
    let mut errs = Vec::new();
    if let Some(v) = doc.remove("T_final") {
        if doc.contains_key("t_final") {
            errs.push("both t_final and T_final are set".into());
        }
        doc.insert("t_final".into(), v);
    }
    let experiment = take(&mut doc, "experiment", ExperimentKind::Simulate, &mut errs);
    let grid = take(&mut doc, "grid", Grid::default(), &mut errs);
    let nu = take(&mut doc, "nu", 1e-3, &mut errs);
    let dt = take(&mut doc, "dt", 0.05, &mut errs);
    let t_final = take(&mut doc, "t_final", 20.0, &mut errs);
    let initial: InitialDataSpec = take(&mut doc, "initial", InitialDataSpec::default(), &mut errs);
    let overrides: MultiplierOverrides = take(&mut doc, "multipliers", MultiplierOverrides::default(), &mut errs);
    let output_dir = take(&mut doc, "output_dir", PathBuf::from("out"), &mut errs);
    let snapshot_every = take(&mut doc, "snapshot_every", 0, &mut errs);
    let seed = take(&mut doc, "seed", 0, &mut errs);
    let simulate = take(&mut doc, "simulate", SimulateSettings::default(), &mut errs);
    let linear = take(&mut doc, "linear", LinearSettings::default(), &mut errs);
    let triangle = take(&mut doc, "triangle", TriangleSettings::default(), &mut errs);
    let scan = take(&mut doc, "scan", ScanSettings::default(), &mut errs);
    let landau = take(&mut doc, "landau", LandauSettings::default(), &mut errs);
    let limit = take(&mut doc, "limit", LimitSettings::default(), &mut errs);
    let echo = take(&mut doc, "echo", EchoSettings::default(), &mut errs);
    let threshold = take(&mut doc, "threshold", ThresholdSettings::default(), &mut errs);
    let penrose = take(&mut doc, "penrose", PenroseSettings::default(), &mut errs);
    let check = take(&mut doc, "check", CheckSettings::default(), &mut errs);
    errs.extend(doc.keys().map(|k| format!("unknown key `{k}`")));
    let multipliers = overrides.resolve(&initial, nu, seed);
    let cfg = RunConfig {
        experiment,
        grid,
        nu,
        dt,
        t_final,
        initial,
        multipliers,
        output_dir,
        snapshot_every,
        seed,
        simulate,
        linear,
        triangle,
        scan,
        landau,
        limit,
        echo,
        threshold,
        penrose,
        check,
    };
    errs.extend(cfg.validate());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(config_error(errs))
    }
}
