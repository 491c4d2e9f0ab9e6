//! Mode/frequency grids, the spectral state and its velocity-frequency
//! calculus (cubic interpolation, finite differences, weighted norms), and
//! the binary snapshot format.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VpfpError};
use crate::kinematics::ap;

pub const C0: Complex64 = Complex64::new(0.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Truncated spatial-mode / velocity-frequency grid.
///
/// Frequencies are `eta_j = -eta_max + j * d_eta` for `j in 0..n_eta`, so
/// `eta = 0` sits at `j = n_eta / 2` and `j` pairs with `n_eta - j` under
/// `eta -> -eta`. The node `j = 0` has no partner and is held at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub k_max: usize,
    pub n_eta: usize,
    pub eta_max: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { k_max: 32, n_eta: 2048, eta_max: 128.0 }
    }
}

impl Grid {
    pub fn new(k_max: usize, n_eta: usize, eta_max: f64) -> Result<Self> {
        let g = Grid { k_max, n_eta, eta_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.k_max < 1 {
            errs.push(format!("grid.k_max = {} must be >= 1", self.k_max));
        }
        if self.n_eta < 16 || !self.n_eta.is_multiple_of(2) {
            errs.push(format!("grid.n_eta = {} must be even and >= 16", self.n_eta));
        }
        if !(self.eta_max > 0.0 && self.eta_max.is_finite()) {
            errs.push(format!("grid.eta_max = {} must be positive", self.eta_max));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(VpfpError::Config(errs.join("; ")))
        }
    }

    #[inline]
    pub fn d_eta(&self) -> f64 {
        2.0 * self.eta_max / self.n_eta as f64
    }

    #[inline]
    pub fn eta(&self, j: usize) -> f64 {
        -self.eta_max + j as f64 * self.d_eta()
    }

    #[inline]
    pub fn zero_index(&self) -> usize {
        self.n_eta / 2
    }

    #[inline]
    pub fn n_modes(&self) -> usize {
        2 * self.k_max + 1
    }

    #[inline]
    pub fn row_of(&self, k: i64) -> usize {
        (k + self.k_max as i64) as usize
    }

    #[inline]
    pub fn has_mode(&self, k: i64) -> bool {
        k.unsigned_abs() as usize <= self.k_max
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let k = self.k_max as i64;
        -k..=k
    }

    /// Whether the window keeps the shifted points `eta - l t^ap` in range
    /// over `[0, t_final]`.
    pub fn covers_run(&self, t_final: f64, nu: f64) -> bool {
        self.eta_max >= 4.0 * self.k_max as f64 * ap(t_final, nu)
    }
}

/// Which unknown a field stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// `g_k(xi)`, the transform of the perturbation.
    Unsheared,
    /// `f_k(eta) = g_k(bar(t; k, eta))`, transport and friction factored out.
    Sheared,
}

impl Frame {
    fn code(self) -> u8 {
        match self {
            Frame::Unsheared => 0,
            Frame::Sheared => 1,
        }
    }
    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Frame::Unsheared),
            1 => Ok(Frame::Sheared),
            _ => Err(VpfpError::Format(format!("unknown frame code {c}"))),
        }
    }
}

/// Result of an off-grid evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub value: Complex64,
    /// False when the point fell outside the window and `value` is zero.
    pub in_window: bool,
    /// True when a one-sided difference stencil was needed.
    pub one_sided: bool,
}

/// Complex amplitudes on `(k, eta_j)`, stored row-major by mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub frame: Frame,
    pub t: f64,
    pub nu: f64,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid, frame: Frame, t: f64, nu: f64) -> Self {
        SpectralField { grid, frame, t, nu, data: vec![C0; grid.n_modes() * grid.n_eta] }
    }

    pub fn from_fn(grid: Grid, frame: Frame, t: f64, nu: f64, f: impl Fn(i64, f64) -> Complex64) -> Self {
        let mut out = Self::zeros(grid, frame, t, nu);
        for k in grid.modes() {
            let r = grid.row_of(k);
            for j in 0..grid.n_eta {
                out.data[r * grid.n_eta + j] = f(k, grid.eta(j));
            }
        }
        out
    }

    #[inline]
    pub fn row(&self, k: i64) -> &[Complex64] {
        let n = self.grid.n_eta;
        let r = self.grid.row_of(k);
        &self.data[r * n..(r + 1) * n]
    }

    #[inline]
    pub fn row_mut(&mut self, k: i64) -> &mut [Complex64] {
        let n = self.grid.n_eta;
        let r = self.grid.row_of(k);
        &mut self.data[r * n..(r + 1) * n]
    }

    /// Rows in mode order `-k_max..=k_max`.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.data.chunks_exact(self.grid.n_eta)
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, Complex64> {
        self.data.chunks_exact_mut(self.grid.n_eta)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, k: i64, j: usize) -> Complex64 {
        self.data[self.grid.row_of(k) * self.grid.n_eta + j]
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Imposes `value(-k, -eta) = conj(value(k, eta))` by copying rows
    /// `k > 0` onto `k < 0`, averaging the `k = 0` row with its mirror and
    /// zeroing the unpaired node `j = 0`.
    pub fn enforce_symmetry(&mut self) {
        let n = self.grid.n_eta;
        let km = self.grid.k_max as i64;
        for k in 1..=km {
            let src: Vec<Complex64> = self.row(k).to_vec();
            let dst = self.row_mut(-k);
            dst[0] = C0;
            for j in 1..n {
                dst[n - j] = src[j].conj();
            }
        }
        for k in 1..=km {
            self.row_mut(k)[0] = C0;
        }
        let z = self.row_mut(0);
        z[0] = C0;
        for j in 1..n / 2 {
            let avg = 0.5 * (z[j] + z[n - j].conj());
            z[j] = avg;
            z[n - j] = avg.conj();
        }
        z[n / 2] = Complex64::new(z[n / 2].re, 0.0);
    }

    /// Largest violation of the reality symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.n_eta;
        let mut worst: f64 = 0.0;
        for k in self.grid.modes() {
            let a = self.row(k);
            let b = self.row(-k);
            for j in 1..n {
                worst = worst.max((b[n - j] - a[j].conj()).norm());
            }
        }
        worst
    }

    /// Cubic interpolation in the frequency variable.
    pub fn interpolate_eta(&self, k: i64, eta: f64) -> Sample {
        if !self.grid.has_mode(k) {
            return Sample { value: C0, in_window: false, one_sided: false };
        }
        interpolate_row(self.row(k), &self.grid, eta)
    }

    /// Frequency derivative of order 1, 2 or 3 at an arbitrary point: 4th-order
    /// differences on the four interpolation nodes, then cubic interpolation.
    pub fn derivative_eta(&self, order: u8, k: i64, eta: f64) -> Result<Sample> {
        if !(1..=3).contains(&order) {
            return Err(VpfpError::domain("derivative_eta", format!("order {order} not in 1..=3")));
        }
        if !self.grid.has_mode(k) {
            return Ok(Sample { value: C0, in_window: false, one_sided: false });
        }
        Ok(derivative_at(self.row(k), &self.grid, order, eta))
    }

    /// Converts between frames at the field's own time.
    ///
    /// `g_k(xi) = f_k(e^{-nu t} xi + k t^ap)` and `f_k(eta) = g_k(bar(t; k, eta))`.
    /// Returns the new field and the number of out-of-window evaluations.
    pub fn to_frame(&self, frame: Frame) -> (SpectralField, usize) {
        if frame == self.frame || self.t == 0.0 {
            let mut out = self.clone();
            out.frame = frame;
            return (out, 0);
        }
        let (t, nu) = (self.t, self.nu);
        let tap = ap(t, nu);
        let e = (nu * t).exp();
        let mut out = SpectralField::zeros(self.grid, frame, t, nu);
        let mut missed = 0;
        for k in self.grid.modes() {
            let kf = k as f64;
            let src = self.row(k);
            let dst = out.row_mut(k);
            for (j, d) in dst.iter_mut().enumerate() {
                let x = self.grid.eta(j);
                let at = match frame {
                    Frame::Unsheared => x / e + kf * tap,
                    Frame::Sheared => e * (x - kf * tap),
                };
                let s = interpolate_row(src, &self.grid, at);
                missed += usize::from(!s.in_window);
                *d = s.value;
            }
        }
        out.enforce_symmetry();
        (out, missed)
    }
}

/// Lagrange weights on nodes `-1, 0, 1, 2` at local coordinate `u`.
#[inline]
pub fn cubic_weights(u: f64) -> [f64; 4] {
    let um = u - 1.0;
    let u2 = u - 2.0;
    let up = u + 1.0;
    [-u * um * u2 / 6.0, up * um * u2 / 2.0, -up * u * u2 / 2.0, up * u * um / 6.0]
}

/// Locates `eta` on the grid: base node `b` and offset `u` so the stencil is
/// `b-1..=b+2`, shifted inward near the window edges.
#[inline]
fn locate(grid: &Grid, eta: f64) -> Option<(usize, f64)> {
    let n = grid.n_eta;
    if !(eta.abs() <= grid.eta_max) {
        return None;
    }
    let q = (eta + grid.eta_max) / grid.d_eta();
    let mut b = q.floor() as i64;
    b = b.clamp(1, n as i64 - 3);
    Some((b as usize, q - b as f64))
}

pub fn interpolate_row(row: &[Complex64], grid: &Grid, eta: f64) -> Sample {
    match locate(grid, eta) {
        None => Sample { value: C0, in_window: false, one_sided: false },
        Some((b, u)) => {
            let w = cubic_weights(u);
            let v = row[b - 1] * w[0] + row[b] * w[1] + row[b + 1] * w[2] + row[b + 2] * w[3];
            Sample { value: v, in_window: true, one_sided: false }
        }
    }
}

/// Finite-difference weights for derivatives up to `m` at `z` from nodes
/// `x` (Fornberg's recursion). `w[d][i]` is the weight of node `i` for order `d`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for d in (1..=mn).rev() {
                    c[d][i] = c1 * (d as f64 * c[d - 1][i - 1] - c5 * c[d][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for d in (1..=mn).rev() {
                c[d][j] = (c4 * c[d][j] - d as f64 * c[d - 1][j]) / c3;
            }
            c[0][j] *= c4 / c3;
        }
        c1 = c2;
    }
    c
}

/// Pre-computed 4th-order difference stencils for one derivative order.
#[derive(Clone, Debug)]
pub struct DiffStencil {
    order: usize,
    half: usize,
    central: Vec<f64>,
    /// One-sided weights for the `half` nodes at the left edge; the right
    /// edge uses the mirror image.
    left: Vec<Vec<f64>>,
}

impl DiffStencil {
    pub fn new(order: usize) -> Self {
        assert!((1..=3).contains(&order));
        let half = if order == 3 { 3 } else { 2 };
        let nodes: Vec<f64> = (0..=2 * half).map(|i| i as f64 - half as f64).collect();
        let central = fd_weights(0.0, &nodes, order)[order].clone();
        let npts = order + 4;
        let side: Vec<f64> = (0..npts).map(|i| i as f64).collect();
        let left = (0..half).map(|p| fd_weights(p as f64, &side, order)[order].clone()).collect();
        DiffStencil { order, half, central, left }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Derivative at node `j` with grid spacing `h`; second value flags a
    /// one-sided stencil.
    #[inline]
    pub fn at(&self, row: &[Complex64], j: usize, h: f64) -> (Complex64, bool) {
        let n = row.len();
        let scale = h.powi(self.order as i32);
        if j >= self.half && j + self.half < n {
            let mut acc = C0;
            for (i, w) in self.central.iter().enumerate() {
                acc += row[j + i - self.half] * *w;
            }
            (acc / scale, false)
        } else if j < self.half {
            let w = &self.left[j];
            let mut acc = C0;
            for (i, wi) in w.iter().enumerate() {
                acc += row[i] * *wi;
            }
            (acc / scale, true)
        } else {
            // mirror: d^p/dx^p at the right edge picks up (-1)^p
            let p = n - 1 - j;
            let w = &self.left[p];
            let sign = if self.order % 2 == 1 { -1.0 } else { 1.0 };
            let mut acc = C0;
            for (i, wi) in w.iter().enumerate() {
                acc += row[n - 1 - i] * *wi;
            }
            (acc * sign / scale, true)
        }
    }

    /// Whole-row derivative and the count of one-sided nodes.
    pub fn apply(&self, row: &[Complex64], h: f64) -> (Vec<Complex64>, usize) {
        let mut flagged = 0;
        let out = (0..row.len())
            .map(|j| {
                let (v, f) = self.at(row, j, h);
                flagged += usize::from(f);
                v
            })
            .collect();
        (out, flagged)
    }
}

thread_local! {
    static STENCILS: [DiffStencil; 3] = [DiffStencil::new(1), DiffStencil::new(2), DiffStencil::new(3)];
}

/// Applies `f` to the cached stencil of the given order.
pub fn with_stencil<R>(order: u8, f: impl FnOnce(&DiffStencil) -> R) -> R {
    STENCILS.with(|s| f(&s[order as usize - 1]))
}

pub fn derivative_at(row: &[Complex64], grid: &Grid, order: u8, eta: f64) -> Sample {
    let h = grid.d_eta();
    match locate(grid, eta) {
        None => Sample { value: C0, in_window: false, one_sided: false },
        Some((b, u)) => with_stencil(order, |st| {
            let w = cubic_weights(u);
            let mut v = C0;
            let mut one_sided = false;
            for (i, wi) in w.iter().enumerate() {
                let (d, f) = st.at(row, b + i - 1, h);
                one_sided |= f;
                v += d * *wi;
            }
            Sample { value: v, in_window: true, one_sided }
        }),
    }
}

/// Derivative of arbitrary order along the full row: the 4th-order stencils
/// for orders up to 3, composed for higher orders.
pub fn derivative_row(row: &[Complex64], grid: &Grid, order: usize) -> Vec<Complex64> {
    let h = grid.d_eta();
    let mut cur = row.to_vec();
    let mut left = order;
    while left > 0 {
        let step = left.min(3);
        cur = with_stencil(step as u8, |st| st.apply(&cur, h).0);
        left -= step;
    }
    cur
}

/// A frequency-space weight `w(t, k, eta) > 0`.
pub trait FrequencyWeight: Sync {
    fn weight(&self, k: i64, eta: f64) -> f64;
}

/// The constant weight one.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitWeight;

impl FrequencyWeight for UnitWeight {
    fn weight(&self, _k: i64, _eta: f64) -> f64 {
        1.0
    }
}

/// Adapts a closure into a [`FrequencyWeight`].
pub struct FnWeight<F>(pub F);

impl<F: Fn(i64, f64) -> f64 + Sync> FrequencyWeight for FnWeight<F> {
    fn weight(&self, k: i64, eta: f64) -> f64 {
        (self.0)(k, eta)
    }
}

/// `|| w (v^alpha f) ||_{L^2}` with `v^alpha` realized as `(i d_eta)^alpha`,
/// by the rectangle rule over the stored nodes.
pub fn weighted_norm<W: FrequencyWeight + ?Sized>(field: &SpectralField, weight: &W, alpha: usize) -> f64 {
    let g = &field.grid;
    let h = g.d_eta();
    let phase = I.powu(alpha as u32);
    let mut sq = Vec::with_capacity(g.n_modes());
    for k in g.modes() {
        let row = field.row(k);
        let d;
        let src: &[Complex64] = if alpha == 0 {
            row
        } else {
            d = derivative_row(row, g, alpha);
            &d
        };
        let terms: Vec<f64> = src
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let w = weight.weight(k, g.eta(j));
                (phase * v * w).norm_sqr()
            })
            .collect();
        sq.push(crate::reduce::pairwise(&terms) * h);
    }
    crate::reduce::pairwise(&sq).sqrt()
}

const MAGIC: &[u8; 5] = b"VPFP1";

/// Writes the binary snapshot: magic, `k_max` and `n_eta` as u32, `eta_max`,
/// `t`, `nu` as f64, a frame byte, then the rows as little-endian f32 pairs.
pub fn write_snapshot<W: Write>(field: &SpectralField, mut w: W) -> Result<()> {
    let g = &field.grid;
    w.write_all(MAGIC)?;
    w.write_all(&(g.k_max as u32).to_le_bytes())?;
    w.write_all(&(g.n_eta as u32).to_le_bytes())?;
    w.write_all(&g.eta_max.to_le_bytes())?;
    w.write_all(&field.t.to_le_bytes())?;
    w.write_all(&field.nu.to_le_bytes())?;
    w.write_all(&[field.frame.code()])?;
    let mut buf = Vec::with_capacity(field.data.len() * 8);
    for v in &field.data {
        buf.extend_from_slice(&(v.re as f32).to_le_bytes());
        buf.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<SpectralField> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(VpfpError::Format("bad magic".into()));
    }
    let mut u4 = [0u8; 4];
    let mut f8 = [0u8; 8];
    r.read_exact(&mut u4)?;
    let k_max = u32::from_le_bytes(u4) as usize;
    r.read_exact(&mut u4)?;
    let n_eta = u32::from_le_bytes(u4) as usize;
    let mut next_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f8)?;
        Ok(f64::from_le_bytes(f8))
    };
    let eta_max = next_f64(&mut r)?;
    let t = next_f64(&mut r)?;
    let nu = next_f64(&mut r)?;
    let mut fb = [0u8; 1];
    r.read_exact(&mut fb)?;
    let frame = Frame::from_code(fb[0])?;
    let grid = Grid::new(k_max, n_eta, eta_max).map_err(|e| VpfpError::Format(e.to_string()))?;
    let mut field = SpectralField::zeros(grid, frame, t, nu);
    let mut buf = vec![0u8; field.data.len() * 8];
    r.read_exact(&mut buf)?;
    for (v, c) in field.data.iter_mut().zip(buf.chunks_exact(8)) {
        let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
        *v = Complex64::new(re as f64, im as f64);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Grid {
        Grid::new(3, 256, 16.0).unwrap()
    }

    #[test]
    fn grid_layout() {
        let g = small();
        assert_eq!(g.eta(g.zero_index()), 0.0);
        assert_eq!(g.eta(10), -g.eta(g.n_eta - 10));
        assert!(Grid::new(0, 256, 1.0).is_err());
        assert!(Grid::new(3, 255, 1.0).is_err());
        let d = Grid::default();
        assert!(!d.covers_run(20.0, 0.0), "defaults are narrower than 4 k_max T");
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let g = small();
        let p = |_k: i64, x: f64| Complex64::new(1.0 - 2.0 * x + 0.3 * x * x - 0.01 * x * x * x, 0.5 * x);
        let f = SpectralField::from_fn(g, Frame::Sheared, 0.0, 0.0, p);
        for &x in &[-15.97, -3.3, 0.01, 7.77, 15.9] {
            let s = f.interpolate_eta(1, x);
            assert!(s.in_window);
            let e = p(1, x);
            assert!((s.value - e).norm() <= 1e-12 * (1.0 + e.norm()), "{x}");
        }
        assert_eq!(f.interpolate_eta(1, g.eta(37)).value, f.get(1, 37));
        let out = f.interpolate_eta(1, 16.5);
        assert!(!out.in_window && out.value == C0);
    }

    #[test]
    fn interpolation_converges_at_fourth_order() {
        let err = |n: usize| {
            let g = Grid::new(1, n, 10.0).unwrap();
            let f = SpectralField::from_fn(g, Frame::Sheared, 0.0, 0.0, |_, x| Complex64::new((-x * x / 2.0).exp(), 0.0));
            let mut worst: f64 = 0.0;
            for i in 0..997 {
                let x = -4.0 + 8.0 * i as f64 / 997.0 + 1e-3;
                worst = worst.max((f.interpolate_eta(0, x).value.re - (-x * x / 2.0).exp()).abs());
            }
            worst
        };
        let (a, b) = (err(128), err(256));
        let rate = (a / b).log2();
        assert!(rate > 3.6 && rate < 4.4, "rate {rate}");
    }

    #[test]
    fn derivatives_of_plane_wave() {
        let a = 0.7;
        let err = |n: usize| {
            let g = Grid::new(1, n, 10.0).unwrap();
            let f = SpectralField::from_fn(g, Frame::Sheared, 0.0, 0.0, |_, x| (I * a * x).exp());
            let mut worst = [0.0f64; 3];
            for &x in &[-3.1, 0.0, 0.3, 2.9] {
                for o in 1..=3u8 {
                    let d = f.derivative_eta(o, 0, x).unwrap();
                    let e = (I * a).powu(o as u32) * (I * a * x).exp();
                    worst[o as usize - 1] = worst[o as usize - 1].max((d.value - e).norm());
                }
            }
            worst
        };
        let (c, f) = (err(256), err(512));
        for o in 0..3 {
            assert!(c[o] < 1e-5, "order {} err {}", o + 1, c[o]);
            assert!((c[o] / f[o]).log2() > 3.5, "order {}", o + 1);
        }
    }

    #[test]
    fn derivatives_of_constants_and_gaussian() {
        let g = small();
        let f = SpectralField::from_fn(g, Frame::Sheared, 0.0, 0.0, |_, _| Complex64::new(2.5, -1.0));
        for o in 1..=3 {
            assert!(f.derivative_eta(o, 0, 15.99).unwrap().value.norm() < 1e-9);
            assert!(f.derivative_eta(o, 0, 1.3).unwrap().value.norm() < 1e-9);
        }
        assert!(f.derivative_eta(4, 0, 0.0).is_err());
        // the 4th-order error is h^4/6 here, so the 1e-6 target needs h <= 0.05
        let fine = Grid::new(1, 512, 8.0).unwrap();
        let m = SpectralField::from_fn(fine, Frame::Sheared, 0.0, 0.0, |_, x| Complex64::new((-x * x / 2.0).exp(), 0.0));
        let d2 = m.derivative_eta(2, 0, 0.0).unwrap().value.re;
        assert!((d2 + 1.0).abs() < 1e-6, "{d2}");
        assert!(m.derivative_eta(1, 0, 7.99).unwrap().one_sided);
    }

    #[test]
    fn one_sided_stencils_are_exact_on_quartics() {
        let g = small();
        let q = |x: f64| 1.0 + x - 0.5 * x * x + 0.1 * x.powi(3) + 0.01 * x.powi(4);
        let dq = [
            |x: f64| 1.0 - x + 0.3 * x * x + 0.04 * x.powi(3),
            |x: f64| -1.0 + 0.6 * x + 0.12 * x * x,
            |x: f64| 0.6 + 0.24 * x,
        ];
        let row: Vec<Complex64> = (0..g.n_eta).map(|j| Complex64::new(q(g.eta(j)), 0.0)).collect();
        for o in 1..=3usize {
            let (d, flagged) = DiffStencil::new(o).apply(&row, g.d_eta());
            assert!(flagged > 0);
            for &j in &[0usize, 1, 2, 100, g.n_eta - 2, g.n_eta - 1] {
                let e = dq[o - 1](g.eta(j));
                assert!((d[j].re - e).abs() < 1e-7 * (1.0 + e.abs()), "o {o} j {j}: {} vs {e}", d[j].re);
            }
        }
    }

    #[test]
    fn symmetry_projection() {
        let g = small();
        let mut f = SpectralField::from_fn(g, Frame::Sheared, 0.0, 0.0, |k, x| Complex64::new(k as f64 + x, x * x - k as f64));
        assert!(f.symmetry_defect() > 1.0);
        f.enforce_symmetry();
        assert!(f.symmetry_defect() == 0.0);
    }

    #[test]
    fn frame_round_trip_converges() {
        let err = |n: usize| {
            let g = Grid::new(2, n, 24.0).unwrap();
            let mut f = SpectralField::from_fn(g, Frame::Sheared, 1.5, 0.05, |k, x| {
                Complex64::new((-(x - k as f64).powi(2) / 2.0).exp(), 0.2 * (-(x * x) / 3.0).exp() * k as f64)
            });
            f.enforce_symmetry();
            let (u, _) = f.to_frame(Frame::Unsheared);
            let (back, _) = u.to_frame(Frame::Sheared);
            let mut worst: f64 = 0.0;
            for k in g.modes() {
                for j in 0..n {
                    if g.eta(j).abs() < 6.0 {
                        worst = worst.max((back.get(k, j) - f.get(k, j)).norm());
                    }
                }
            }
            worst
        };
        let (a, b) = (err(256), err(512));
        assert!(a < 1e-3);
        assert!((a / b).log2() > 3.5, "rate {}", (a / b).log2());
    }

    #[test]
    fn weighted_norm_basics() {
        let g = small();
        let z = SpectralField::zeros(g, Frame::Sheared, 0.0, 0.0);
        assert_eq!(weighted_norm(&z, &UnitWeight, 0), 0.0);
        let f = SpectralField::from_fn(g, Frame::Sheared, 0.0, 0.0, |k, x| {
            Complex64::new((-x * x / 2.0).exp() * (k == 1 || k == -1) as i32 as f64, 0.0)
        });
        // two modes of int e^{-x^2} = sqrt(pi)
        let n = weighted_norm(&f, &UnitWeight, 0);
        assert!((n - (2.0 * std::f64::consts::PI.sqrt()).sqrt()).abs() < 1e-12);
        let mut f3 = f.clone();
        f3.scale(-3.0);
        assert!((weighted_norm(&f3, &UnitWeight, 1) - 3.0 * weighted_norm(&f, &UnitWeight, 1)).abs() < 1e-12);
        let w = FnWeight(|k: i64, x: f64| (1.0 + (k * k) as f64 + x * x).sqrt());
        assert!(weighted_norm(&f, &w, 0) > n);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = small();
        let f = SpectralField::from_fn(g, Frame::Sheared, 2.5, 1e-3, |k, x| Complex64::new(k as f64 * 0.25, x));
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"VPFP1");
        let back = read_snapshot(&buf[..]).unwrap();
        assert_eq!(back.grid, g);
        assert_eq!(back.t, 2.5);
        assert_eq!(back.frame, Frame::Sheared);
        for (a, b) in back.data().iter().zip(f.data()) {
            assert!((a - b).norm() <= 1e-6 * (1.0 + b.norm()));
        }
        assert!(read_snapshot(&b"VPFP0"[..]).is_err());
    }

    fn rand_field(seed: u64) -> SpectralField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(2, 64, 8.0).unwrap();
        let mut f = SpectralField::zeros(g, Frame::Sheared, 0.0, 0.0);
        for v in f.data_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f.enforce_symmetry();
        f
    }

    proptest! {
        #[test]
        fn weighted_norm_is_a_norm(s1 in 0u64..1000, s2 in 0u64..1000, c in -5.0..5.0f64, alpha in 0usize..3) {
            let a = rand_field(s1);
            let b = rand_field(s2);
            let mut sum = a.clone();
            for (x, y) in sum.data_mut().iter_mut().zip(b.data()) { *x += *y; }
            let w = FnWeight(|k: i64, x: f64| 1.0 + (k * k) as f64 + x.abs());
            let (na, nb, ns) = (weighted_norm(&a, &w, alpha), weighted_norm(&b, &w, alpha), weighted_norm(&sum, &w, alpha));
            prop_assert!(ns <= na + nb + 1e-10 * (na + nb));
            let mut sc = a.clone();
            sc.scale(c);
            prop_assert!((weighted_norm(&sc, &w, alpha) - c.abs() * na).abs() <= 1e-10 * (1.0 + na));
        }

        #[test]
        fn symmetry_survives_frame_conversion(seed in 0u64..1000) {
            let mut f = rand_field(seed);
            f.t = 0.7;
            f.nu = 0.01;
            let (u, _) = f.to_frame(Frame::Unsheared);
            prop_assert!(u.symmetry_defect() <= 1e-10);
        }
    }
}
