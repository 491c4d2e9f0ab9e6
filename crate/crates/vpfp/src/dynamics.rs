//! Nonlinear evolution in the sheared frame: Poisson field, velocity
//! moments, collision and transport sources, the split time step and the
//! conservation diagnostics.
//!
//! The state is `f_k(t, eta) = g_k(t, bar(t; k, eta))`, which obeys
//! `d_t f_k + nu |bar|^2 f_k = R_k` with
//!
//! ```text
//! R_k = -i bar mu(bar) (E_k + nu M1_k) - nu bar^2 mu(bar) Mth_k
//!       - i bar sum_l (E_l + nu M1_l) F_{k-l,l}
//!       - nu bar^2 sum_l (rho_l + Mth_l) F_{k-l,l}
//!       - nu e^{-nu t} bar sum_l rho_l D_{k-l,l}
//! ```
//!
//! where `F_{m,l}(eta) = f_m(eta - l t^ap)` and `D` is the same shift of
//! `d_eta f_m`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VpfpError};
use crate::kinematics::{ap, dissipation_exponent, maxwellian_hat};
use crate::spectral::{cubic_weights, interpolate_row, derivative_at, with_stencil, Frame, Grid, SpectralField, C0, I};

/// Switches for the explicit source terms. The linear collision operator
/// `nu (Delta_v g + div_v(v g))` is always on: it is the exact part of the
/// step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SourceTerms {
    /// `-E_k i xi mu(xi)`.
    pub field_forcing: bool,
    /// `nu C_mu`, the moment-driven linear collision forcing.
    pub collision_moments: bool,
    /// `-E . grad_v g`.
    pub transport_nonlinear: bool,
    /// `nu C[g]`.
    pub collision_nonlinear: bool,
}

impl SourceTerms {
    pub const ALL: SourceTerms = SourceTerms {
        field_forcing: true,
        collision_moments: true,
        transport_nonlinear: true,
        collision_nonlinear: true,
    };
    pub const NONE: SourceTerms = SourceTerms {
        field_forcing: false,
        collision_moments: false,
        transport_nonlinear: false,
        collision_nonlinear: false,
    };
    /// Field forcing only: the linearized Vlasov-Poisson dynamics with
    /// Fokker-Planck damping of the distribution.
    pub const LINEAR: SourceTerms = SourceTerms {
        field_forcing: true,
        collision_moments: false,
        transport_nonlinear: false,
        collision_nonlinear: false,
    };
}

/// `E_k = -i k rho_k / |k|^2`, `E_0 = 0`.
pub fn poisson_field(rho: &[Complex64], k_max: usize) -> Result<Vec<Complex64>> {
    if rho.len() != 2 * k_max + 1 {
        return Err(VpfpError::Consistency(format!("{} modes given for k_max = {k_max}", rho.len())));
    }
    let scale = rho.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let r0 = rho[k_max].norm();
    if r0 > 1e-12 + 1e-8 * scale {
        return Err(VpfpError::Consistency(format!("mean density {r0:e} is not zero")));
    }
    Ok(rho
        .iter()
        .enumerate()
        .map(|(r, &v)| {
            let k = r as i64 - k_max as i64;
            if k == 0 {
                C0
            } else {
                -I * v / k as f64
            }
        })
        .collect())
}

/// Velocity moments and field per mode, indexed by `k + k_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub t: f64,
    pub k_max: usize,
    pub rho: Vec<Complex64>,
    pub m1: Vec<Complex64>,
    pub m2: Vec<Complex64>,
    pub mtheta: Vec<Complex64>,
    pub e: Vec<Complex64>,
    /// Out-of-window samples met while reading the moments.
    pub missed: usize,
}

impl Moments {
    #[inline]
    pub fn idx(&self, k: i64) -> usize {
        (k + self.k_max as i64) as usize
    }
    pub fn rho_at(&self, k: i64) -> Complex64 {
        self.rho[self.idx(k)]
    }
    /// `sum_{k != 0} |E_k|^2`, the electric energy per unit `2 pi`.
    pub fn field_energy(&self) -> f64 {
        crate::reduce::sum_sq_norm(&self.e)
    }
    /// `pi (1 + M2_0 + sum |E_k|^2)`.
    pub fn total_energy(&self) -> f64 {
        std::f64::consts::PI * (1.0 + self.m2[self.k_max].re + self.field_energy())
    }
}

/// Physical-space grid size for the pointwise moment algebra.
fn x_points(k_max: usize) -> usize {
    4 * (2 * k_max + 1)
}

/// `M_theta = M2 - |M1|^2 / (1 + rho) - rho`, pointwise in `x` and back.
fn temperature_moment(rho: &[Complex64], m1: &[Complex64], m2: &[Complex64], k_max: usize, t: f64) -> Result<Vec<Complex64>> {
    let nx = x_points(k_max);
    let km = k_max as i64;
    let synth = |c: &[Complex64], x: f64| -> f64 {
        let mut acc = c[k_max].re;
        for k in 1..=km {
            acc += 2.0 * (c[(k + km) as usize] * Complex64::from_polar(1.0, k as f64 * x)).re;
        }
        acc
    };
    let mut values = Vec::with_capacity(nx);
    let mut sup: f64 = 0.0;
    for i in 0..nx {
        let x = std::f64::consts::TAU * i as f64 / nx as f64;
        let r = synth(rho, x);
        let p = synth(m1, x);
        let q = synth(m2, x);
        sup = sup.max(r.abs());
        values.push(q - p * p / (1.0 + r) - r);
    }
    if !(sup < 0.5) {
        return Err(VpfpError::BlowUp { t, reason: format!("||rho||_inf = {sup:e} reached the guard 1/2") });
    }
    let mut out = vec![C0; 2 * k_max + 1];
    for k in -km..=km {
        let terms: Vec<Complex64> = values
            .iter()
            .enumerate()
            .map(|(i, v)| Complex64::from_polar(*v, -(k as f64) * std::f64::consts::TAU * i as f64 / nx as f64))
            .collect();
        out[(k + km) as usize] = crate::reduce::pairwise(&terms) / nx as f64;
    }
    Ok(out)
}

/// Reads `rho`, `M1`, `M2` per mode, then `M_theta` and `E`.
///
/// Unsheared fields are read at `xi = 0`; sheared fields at `eta = k t^ap`
/// with the `e^{-nu t}` chain-rule factors.
pub fn extract_moments(field: &SpectralField) -> Result<Moments> {
    let g = &field.grid;
    let km = g.k_max;
    let nm = g.n_modes();
    let (t, nu) = (field.t, field.nu);
    let mut rho = vec![C0; nm];
    let mut m1 = vec![C0; nm];
    let mut m2 = vec![C0; nm];
    let mut missed = 0;
    let (at, c1, c2) = match field.frame {
        Frame::Unsheared => (0.0, 1.0, 1.0),
        Frame::Sheared => (ap(t, nu), (-nu * t).exp(), (-2.0 * nu * t).exp()),
    };
    for k in g.modes() {
        let r = g.row_of(k);
        let row = field.row(k);
        let eta = k as f64 * at;
        let s0 = interpolate_row(row, g, eta);
        let s1 = derivative_at(row, g, 1, eta);
        let s2 = derivative_at(row, g, 2, eta);
        missed += usize::from(!s0.in_window);
        rho[r] = s0.value;
        m1[r] = I * c1 * s1.value;
        m2[r] = -c2 * s2.value;
    }
    // the zero mode sits on-grid; avoid interpolation round-off there
    {
        let z = g.zero_index();
        let h = g.d_eta();
        let row = field.row(0);
        rho[km] = row[z];
        m1[km] = I * c1 * with_stencil(1, |s| s.at(row, z, h).0);
        m2[km] = -c2 * with_stencil(2, |s| s.at(row, z, h).0);
    }
    let mtheta = temperature_moment(&rho, &m1, &m2, km, t)?;
    let e = poisson_field(&rho, km)?;
    Ok(Moments { t, k_max: km, rho, m1, m2, mtheta, e, missed })
}

/// Shift kernel `F(eta_j) = f(eta_j - s)` on a uniform grid: fixed cubic
/// weights and an index offset, since the shift is the same at every node.
#[derive(Clone, Copy, Debug)]
struct Shift {
    /// `F(eta_j)` uses nodes `j - m - 2 ..= j - m + 1`.
    m: i64,
    w: [f64; 4],
    /// Range of `j` with a complete stencil.
    lo: usize,
    hi: usize,
    /// Nodes whose point lies outside the window.
    outside: usize,
}

impl Shift {
    fn new(s: f64, grid: &Grid) -> Self {
        let n = grid.n_eta as i64;
        let p = s / grid.d_eta();
        let m = p.floor();
        let theta = p - m;
        let m = m as i64;
        let w = cubic_weights(1.0 - theta);
        let lo = (m + 2).clamp(0, n) as usize;
        let hi = (n - 1 + m).clamp(0, n) as usize;
        // the point j - p lies in [0, n-1] for j in [ceil(p), floor(n-1+p)]
        let a = p.ceil().max(0.0).min(n as f64) as i64;
        let b = ((n - 1) as f64 + p).floor().min((n - 1) as f64);
        let inside = if b < a as f64 { 0 } else { (b as i64 - a + 1) as usize };
        Shift { m, w, lo, hi: hi.max(lo), outside: n as usize - inside }
    }

    #[inline]
    fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// Sources split by origin, in the sheared frame.
struct SourceParts {
    rows: Vec<Vec<Complex64>>,
    missed: usize,
    evaluations: usize,
}

/// Assembles `R_k` for `k >= 0` (the mirror rows follow from symmetry).
fn assemble_sources(field: &SpectralField, mom: &Moments, src: SourceTerms) -> SourceParts {
    let g = field.grid;
    let n = g.n_eta;
    let km = g.k_max as i64;
    let (t, nu) = (field.t, field.nu);
    let tap = ap(t, nu);
    let et = (nu * t).exp();
    let emt = (-nu * t).exp();
    let h = g.d_eta();
    let nl = src.transport_nonlinear || src.collision_nonlinear;
    let deriv: Vec<Vec<Complex64>> = if src.collision_nonlinear && nu > 0.0 {
        field.rows().map(|r| with_stencil(1, |s| s.apply(r, h).0)).collect()
    } else {
        Vec::new()
    };
    let coef = |l: i64| -> (Complex64, Complex64, Complex64) {
        let i = mom.idx(l);
        let mut a = C0;
        let mut b = C0;
        let mut c = C0;
        if src.transport_nonlinear {
            a += mom.e[i];
        }
        if src.collision_nonlinear {
            a += nu * mom.m1[i];
            b = mom.rho[i] + mom.mtheta[i];
            c = mom.rho[i];
        }
        (a, b, c)
    };
    let shifts: Vec<Shift> = (-2 * km..=2 * km).map(|l| Shift::new(l as f64 * tap, &g)).collect();
    let shift_of = |l: i64| &shifts[(l + 2 * km) as usize];

    let work: Vec<(Vec<Complex64>, usize, usize)> = (0..=km)
        .into_par_iter()
        .map(|k| {
            let mut s1 = vec![C0; n];
            let mut s2 = vec![C0; n];
            let mut s3 = vec![C0; n];
            let mut missed = 0;
            let mut evals = 0;
            if nl {
                for l in (k - km).max(-km)..=(k + km).min(km) {
                    let (a, b, c) = coef(l);
                    if a == C0 && b == C0 && c == C0 {
                        continue;
                    }
                    let m = k - l;
                    let sh = shift_of(l);
                    evals += n;
                    missed += sh.outside;
                    if sh.is_empty() {
                        continue;
                    }
                    let f = field.row(m);
                    let w = sh.w;
                    for j in sh.lo..sh.hi {
                        let i = (j as i64 - sh.m) as usize;
                        let fv = f[i - 2] * w[0] + f[i - 1] * w[1] + f[i] * w[2] + f[i + 1] * w[3];
                        s1[j] += a * fv;
                        s2[j] += b * fv;
                    }
                    if c != C0 && !deriv.is_empty() {
                        let d = &deriv[g.row_of(m)];
                        for j in sh.lo..sh.hi {
                            let i = (j as i64 - sh.m) as usize;
                            let dv = d[i - 2] * w[0] + d[i - 1] * w[1] + d[i] * w[2] + d[i + 1] * w[3];
                            s3[j] += c * dv;
                        }
                    }
                }
            }
            let i = mom.idx(k);
            let mut lin_a = C0;
            let mut lin_b = C0;
            if src.field_forcing {
                lin_a += mom.e[i];
            }
            if src.collision_moments {
                lin_a += nu * mom.m1[i];
                lin_b = mom.mtheta[i];
            }
            let kf = k as f64;
            let mut out = vec![C0; n];
            for (j, o) in out.iter_mut().enumerate() {
                let eb = et * (g.eta(j) - kf * tap);
                let mu = maxwellian_hat(eb);
                *o = -I * eb * (lin_a * mu + s1[j]) - nu * eb * eb * (lin_b * mu + s2[j]) - nu * emt * eb * s3[j];
            }
            (out, missed, evals)
        })
        .collect();
    let mut rows = Vec::with_capacity(work.len());
    let mut missed = 0;
    let mut evaluations = 0;
    for (r, m, e) in work {
        rows.push(r);
        missed += m;
        evaluations += e;
    }
    SourceParts { rows, missed, evaluations }
}

fn increment_field(field: &SpectralField, parts: SourceParts) -> SpectralField {
    let mut out = SpectralField::zeros(field.grid, Frame::Sheared, field.t, field.nu);
    for (k, r) in parts.rows.into_iter().enumerate() {
        out.row_mut(k as i64).copy_from_slice(&r);
    }
    out.enforce_symmetry();
    out
}

fn require_sheared(field: &SpectralField, op: &'static str) -> Result<()> {
    if field.frame != Frame::Sheared {
        return Err(VpfpError::domain(op, "expects a sheared-frame field"));
    }
    Ok(())
}

/// `nu (C_mu + C[g])` in the sheared frame, without the linear Fokker-Planck
/// part the integrator handles exactly.
pub fn collision_rhs(field: &SpectralField, mom: &Moments) -> Result<SpectralField> {
    require_sheared(field, "collision_rhs")?;
    let src = SourceTerms { collision_moments: true, collision_nonlinear: true, ..SourceTerms::NONE };
    Ok(increment_field(field, assemble_sources(field, mom, src)))
}

/// `-(E . grad_v g)` in the sheared frame for a given field `E`.
pub fn nonlinear_transport_rhs(field: &SpectralField, e: &[Complex64]) -> Result<SpectralField> {
    require_sheared(field, "nonlinear_transport_rhs")?;
    let nm = field.grid.n_modes();
    if e.len() != nm {
        return Err(VpfpError::Consistency(format!("field has {} modes, expected {nm}", e.len())));
    }
    let mom = Moments {
        t: field.t,
        k_max: field.grid.k_max,
        rho: vec![C0; nm],
        m1: vec![C0; nm],
        m2: vec![C0; nm],
        mtheta: vec![C0; nm],
        e: e.to_vec(),
        missed: 0,
    };
    let src = SourceTerms { transport_nonlinear: true, ..SourceTerms::NONE };
    Ok(increment_field(field, assemble_sources(field, &mom, src)))
}

/// Conserved quantities at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Invariants {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
}

impl Invariants {
    pub fn of(mom: &Moments) -> Self {
        let z = mom.k_max;
        Invariants { mass: mom.rho[z].re, momentum: mom.m1[z].re, energy: mom.total_energy() }
    }
}

/// Signed drifts `(mass, momentum, energy)` relative to a reference.
pub fn conservation_check(mom: &Moments, reference: &Invariants) -> (f64, f64, f64) {
    let now = Invariants::of(mom);
    (now.mass - reference.mass, now.momentum - reference.momentum, now.energy - reference.energy)
}

/// Digest of one step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub mass_drift: f64,
    pub momentum_drift: f64,
    pub energy_drift: f64,
    /// Zero-mode momentum before the post-step projection.
    pub momentum_defect: f64,
    pub out_of_window: usize,
    pub out_of_window_fraction: f64,
    pub max_abs: f64,
}

/// Largest admissible step for a grid: `min(0.5 / (k_max d_eta), 0.1)`.
pub fn dt_max(grid: &Grid) -> f64 {
    (0.5 / (grid.k_max as f64 * grid.d_eta())).min(0.1)
}

/// Time integrator owning the sheared state.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub field: SpectralField,
    pub sources: SourceTerms,
    /// Remove the zero-mode momentum after each step.
    pub project_momentum: bool,
    reference: Invariants,
    psi: Vec<Complex64>,
    psi_d1: Complex64,
}

impl Simulator {
    /// Starts from a field at any time; unsheared input is converted.
    pub fn new(initial: SpectralField, sources: SourceTerms) -> Result<Self> {
        let (field, _) = initial.to_frame(Frame::Sheared);
        if !field.is_finite() {
            return Err(VpfpError::BlowUp { t: field.t, reason: "non-finite initial data".into() });
        }
        let mom = extract_moments(&field)?;
        let g = field.grid;
        let psi: Vec<Complex64> = (0..g.n_eta).map(|j| I * g.eta(j) * maxwellian_hat(g.eta(j))).collect();
        let psi_d1 = with_stencil(1, |s| s.at(&psi, g.zero_index(), g.d_eta()).0);
        Ok(Simulator {
            reference: Invariants::of(&mom),
            field,
            sources,
            project_momentum: true,
            psi,
            psi_d1,
        })
    }

    pub fn t(&self) -> f64 {
        self.field.t
    }

    pub fn nu(&self) -> f64 {
        self.field.nu
    }

    pub fn reference(&self) -> Invariants {
        self.reference
    }

    pub fn moments(&self) -> Result<Moments> {
        extract_moments(&self.field)
    }

    /// Multiplies every row by `S_k(t1, t0; eta)`.
    fn dissipate(&mut self, t1: f64) {
        let nu = self.field.nu;
        let t0 = self.field.t;
        self.field.t = t1;
        if nu <= 0.0 {
            return;
        }
        let g = self.field.grid;
        let h = t1 - t0;
        let tap = ap(t1, nu);
        let et = (nu * t1).exp();
        for k in g.modes() {
            let kf = k as f64;
            let row = self.field.row_mut(k);
            for (j, v) in row.iter_mut().enumerate() {
                let d = et * (g.eta(j) - kf * tap);
                *v *= (-dissipation_exponent(h, d, kf, nu)).exp();
            }
        }
    }

    fn sources_at(&self, state: &SpectralField, t: f64) -> Result<(SpectralField, usize, usize)> {
        let mut probe = state.clone();
        probe.t = t;
        let mom = extract_moments(&probe)?;
        let parts = assemble_sources(&probe, &mom, self.sources);
        let (m, e) = (parts.missed, parts.evaluations);
        Ok((increment_field(&probe, parts), m, e))
    }

    fn any_source(&self) -> bool {
        let s = self.sources;
        s.field_forcing || s.collision_moments || s.transport_nonlinear || s.collision_nonlinear
    }

    /// One Strang step: half dissipation, midpoint sources at `t + dt/2`,
    /// half dissipation.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(VpfpError::domain("step", format!("dt = {dt} must be positive")));
        }
        let t0 = self.field.t;
        let tm = t0 + 0.5 * dt;
        self.dissipate(tm);
        let mut missed = 0;
        let mut evals = 0;
        if self.any_source() {
            let (k1, m1, e1) = self.sources_at(&self.field, tm)?;
            let mut half = self.field.clone();
            axpy(&mut half, 0.5 * dt, &k1);
            let (k2, m2, e2) = self.sources_at(&half, tm)?;
            axpy(&mut self.field, dt, &k2);
            missed = m1 + m2;
            evals = e1 + e2;
        }
        self.dissipate(t0 + dt);
        self.field.enforce_symmetry();
        if !self.field.is_finite() {
            return Err(VpfpError::BlowUp { t: self.field.t, reason: "non-finite amplitudes".into() });
        }
        let defect = self.zero_mode_momentum();
        if self.project_momentum && defect != 0.0 {
            self.remove_momentum();
        }
        let mom = self.moments()?;
        let (dm, dp, de) = conservation_check(&mom, &self.reference);
        Ok(StepReport {
            t: self.field.t,
            dt,
            mass_drift: dm,
            momentum_drift: dp,
            energy_drift: de,
            momentum_defect: defect,
            out_of_window: missed,
            out_of_window_fraction: if evals > 0 { missed as f64 / evals as f64 } else { 0.0 },
            max_abs: self.field.max_abs(),
        })
    }

    /// `M1_0 = i e^{-nu t} D1 f_0(0)`.
    fn zero_mode_momentum(&self) -> f64 {
        let g = &self.field.grid;
        let d1 = with_stencil(1, |s| s.at(self.field.row(0), g.zero_index(), g.d_eta()).0);
        (I * (-self.field.nu * self.field.t).exp() * d1).re
    }

    /// Adds `c i eta mu` to the zero mode so its discrete momentum vanishes;
    /// mass and `M2_0` are untouched since the correction is odd in `eta`.
    fn remove_momentum(&mut self) {
        let g = self.field.grid;
        let d1 = with_stencil(1, |s| s.at(self.field.row(0), g.zero_index(), g.d_eta()).0);
        let c = -(d1 / self.psi_d1).re;
        let row = self.field.row_mut(0);
        for (v, p) in row.iter_mut().zip(&self.psi) {
            *v += p * c;
        }
        row[0] = C0;
    }

    /// Steps to `t_final` with steps no larger than `dt`, calling `each`
    /// after every step.
    pub fn run_until(&mut self, t_final: f64, dt: f64, mut each: impl FnMut(&Simulator, &StepReport) -> Result<()>) -> Result<()> {
        let n = ((t_final - self.t()) / dt - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            return Ok(());
        }
        let h = (t_final - self.t()) / n as f64;
        for _ in 0..n {
            let rep = self.step(h)?;
            each(self, &rep)?;
        }
        Ok(())
    }
}

fn axpy(y: &mut SpectralField, a: f64, x: &SpectralField) {
    for (u, v) in y.data_mut().iter_mut().zip(x.data()) {
        *u += *v * a;
    }
}

/// One step on a copy of `field` with all sources on.
pub fn step(field: &SpectralField, dt: f64) -> Result<(SpectralField, StepReport)> {
    let mut sim = Simulator::new(field.clone(), SourceTerms::ALL)?;
    let rep = sim.step(dt)?;
    Ok((sim.field, rep))
}

/// Per-mode velocity profiles `g_k(v) = (1/2pi) int g_k(xi) e^{i xi v} dxi`
/// of an unsheared field, by direct quadrature.
pub fn velocity_profiles(field: &SpectralField, vs: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    if field.frame != Frame::Unsheared {
        return Err(VpfpError::domain("velocity_profiles", "expects an unsheared field"));
    }
    let g = &field.grid;
    let h = g.d_eta() / std::f64::consts::TAU;
    Ok(g
        .modes()
        .filter(|&k| k >= 0)
        .map(|k| {
            let row = field.row(k);
            let live: Vec<usize> = (0..g.n_eta).filter(|&j| row[j] != C0).collect();
            vs.iter()
                .map(|&v| {
                    // rotate e^{i xi v} along the uniform grid
                    let step = Complex64::from_polar(1.0, g.d_eta() * v);
                    let mut acc = C0;
                    let mut ph = Complex64::from_polar(1.0, g.eta(0) * v);
                    let mut last = 0;
                    for &j in &live {
                        if j != last {
                            ph = Complex64::from_polar(1.0, g.eta(j) * v);
                        }
                        acc += row[j] * ph;
                        ph *= step;
                        last = j + 1;
                    }
                    acc * h
                })
                .collect()
        })
        .collect())
}

/// `sup |g(x, v)|` over the product grid of `nx` points in `x` and `vs`.
pub fn physical_sup(field: &SpectralField, nx: usize, vs: &[f64]) -> Result<f64> {
    let prof = velocity_profiles(field, vs)?;
    let mut sup: f64 = 0.0;
    for i in 0..nx {
        let x = std::f64::consts::TAU * i as f64 / nx as f64;
        for iv in 0..vs.len() {
            let mut acc = prof[0][iv].re;
            for (k, p) in prof.iter().enumerate().skip(1) {
                acc += 2.0 * (p[iv] * Complex64::from_polar(1.0, k as f64 * x)).re;
            }
            sup = sup.max(acc.abs());
        }
    }
    Ok(sup)
}
