//! Truncated Fourier model of H^{1/2} loops in R^{2n+2}.
//!
//! A loop is stored as real coefficient vectors `x_k` in the basis
//! `t -> e^{2 pi k J t} q`, where `J` rotates every coordinate pair
//! `(a, b) -> (-b, a)`. These basis functions are L^2-orthonormal, and mode
//! `k` of a complex coordinate pair is the ordinary `e^{2 pi i k t}` Fourier
//! coefficient. The H^{1/2} weight of mode `k` is `1` for `k = 0` and
//! `2 pi |k|` otherwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// H^{1/2} weight of mode `k`.
#[inline]
pub fn h12_weight(k: i32) -> f64 {
    if k == 0 {
        1.0
    } else {
        2.0 * PI * (k.unsigned_abs() as f64)
    }
}

/// A contiguous range of Fourier modes `k_min..=k_max` containing `0`,
/// together with the ambient dimension `d = 2n + 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeWindow {
    k_min: i32,
    k_max: i32,
    dim: usize,
}

impl ModeWindow {
    pub fn new(k_min: i32, k_max: i32, dim: usize) -> Result<Self> {
        if k_min > 0 || k_max < 0 {
            return Err(Error::Range(format!(
                "window [{k_min}, {k_max}] must contain mode 0"
            )));
        }
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::Dimension(format!(
                "ambient dimension {dim} must be even and at least 2"
            )));
        }
        Ok(Self { k_min, k_max, dim })
    }

    /// The window `[-k, k]`.
    pub fn symmetric(k: u32, dim: usize) -> Result<Self> {
        let k = i32::try_from(k).map_err(|_| Error::Range(format!("window {k} too large")))?;
        Self::new(-k, k, dim)
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of complex coordinate planes, `n + 1`.
    pub fn planes(&self) -> usize {
        self.dim / 2
    }

    /// Number of modes in the window.
    pub fn len(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `k_max - k_min`.
    pub fn span(&self) -> usize {
        (self.k_max - self.k_min) as usize
    }

    /// Total number of real coordinates.
    pub fn coord_len(&self) -> usize {
        self.len() * self.dim
    }

    pub fn contains(&self, k: i32) -> bool {
        self.k_min <= k && k <= self.k_max
    }

    pub fn contains_window(&self, other: &ModeWindow) -> bool {
        self.dim == other.dim && self.k_min <= other.k_min && other.k_max <= self.k_max
    }

    pub fn modes(&self) -> impl Iterator<Item = i32> + Clone {
        self.k_min..=self.k_max
    }

    /// Offset of the first coordinate of mode `k` in the flat coefficient array.
    #[inline]
    pub fn offset(&self, k: i32) -> usize {
        debug_assert!(self.contains(k));
        (k - self.k_min) as usize * self.dim
    }

    /// Minimal sample count for exact analysis/synthesis round trips.
    pub fn sampling_floor(&self) -> usize {
        2 * self.span() + 1
    }

    /// Minimal sample count for nonlinear (pointwise) terms.
    pub fn nonlinear_floor(&self) -> usize {
        4 * self.span() + 1
    }

    /// The window grown by `lo` modes below and `hi` modes above.
    pub fn grow(&self, lo: u32, hi: u32) -> ModeWindow {
        ModeWindow {
            k_min: self.k_min - lo as i32,
            k_max: self.k_max + hi as i32,
            dim: self.dim,
        }
    }

    /// Per-coordinate H^{1/2} weights, in storage order.
    pub fn coord_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.coord_len());
        for k in self.modes() {
            w.extend(std::iter::repeat_n(h12_weight(k), self.dim));
        }
        w
    }
}

/// Standard complex structure on `R^d`, acting blockwise `(a, b) -> (-b, a)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexStructureJ {
    dim: usize,
}

impl ComplexStructureJ {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::Dimension(format!(
                "J needs an even dimension, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        apply_j_into(v, &mut out);
        out
    }

    /// `e^{phi J} v`.
    pub fn exp_apply(&self, phi: f64, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        rotate_in_place(&mut out, phi.cos(), phi.sin());
        out
    }

    /// Dense matrix of J (row-major), mostly for tests.
    pub fn matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for p in 0..d / 2 {
            // column 2p maps to +e_{2p+1}, column 2p+1 maps to -e_{2p}
            m[(2 * p + 1) * d + 2 * p] = 1.0;
            m[(2 * p) * d + 2 * p + 1] = -1.0;
        }
        m
    }
}

#[inline]
pub(crate) fn apply_j_into(v: &[f64], out: &mut [f64]) {
    for (src, dst) in v.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
        dst[0] = -src[1];
        dst[1] = src[0];
    }
}

#[inline]
pub(crate) fn rotate_in_place(v: &mut [f64], c: f64, s: f64) {
    for p in v.chunks_exact_mut(2) {
        let (a, b) = (p[0], p[1]);
        p[0] = c * a - s * b;
        p[1] = s * a + c * b;
    }
}

/// A loop on a mode window: `x(t) = sum_k e^{2 pi k J t} x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierLoop {
    window: ModeWindow,
    coeffs: Vec<f64>,
}

impl FourierLoop {
    pub fn zeros(window: ModeWindow) -> Self {
        Self {
            window,
            coeffs: vec![0.0; window.coord_len()],
        }
    }

    pub fn from_coeffs(window: ModeWindow, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != window.coord_len() {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for window [{}, {}] in R^{}, got {}",
                window.coord_len(),
                window.k_min,
                window.k_max,
                window.dim,
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient {i} is not finite"
            )));
        }
        Ok(Self { window, coeffs })
    }

    /// Loop with a single nonzero mode.
    pub fn single_mode(window: ModeWindow, k: i32, coeff: &[f64]) -> Result<Self> {
        if !window.contains(k) {
            return Err(Error::Range(format!("mode {k} outside window")));
        }
        if coeff.len() != window.dim {
            return Err(Error::Dimension(format!(
                "coefficient has length {}, expected {}",
                coeff.len(),
                window.dim
            )));
        }
        let mut x = Self::zeros(window);
        x.mode_mut(k).copy_from_slice(coeff);
        Ok(x)
    }

    pub fn window(&self) -> &ModeWindow {
        &self.window
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn mode(&self, k: i32) -> &[f64] {
        let o = self.window.offset(k);
        &self.coeffs[o..o + self.window.dim]
    }

    pub fn mode_mut(&mut self, k: i32) -> &mut [f64] {
        let o = self.window.offset(k);
        let d = self.window.dim;
        &mut self.coeffs[o..o + d]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            window: self.window,
            coeffs: self.coeffs.iter().map(|v| c * v).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &FourierLoop) -> Result<()> {
        same_window(&self.window, &other.window)?;
        for (s, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn add(&self, other: &FourierLoop) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &FourierLoop) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn h12_norm(&self) -> f64 {
        let d = self.window.dim;
        self.window
            .modes()
            .zip(self.coeffs.chunks_exact(d))
            .map(|(k, c)| h12_weight(k) * c.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Copy onto another window of the same dimension: modes outside the
    /// target are dropped, new modes are zero.
    pub fn to_window(&self, target: ModeWindow) -> Result<Self> {
        if target.dim != self.window.dim {
            return Err(Error::Dimension(format!(
                "cannot move a loop in R^{} to a window in R^{}",
                self.window.dim, target.dim
            )));
        }
        let mut out = Self::zeros(target);
        let lo = self.window.k_min.max(target.k_min);
        let hi = self.window.k_max.min(target.k_max);
        if lo <= hi {
            let d = target.dim;
            let src = self.window.offset(lo);
            let dst = target.offset(lo);
            let len = (hi - lo + 1) as usize * d;
            out.coeffs[dst..dst + len].copy_from_slice(&self.coeffs[src..src + len]);
        }
        Ok(out)
    }

    /// Per-plane L^2 mass `sum_k |x_{k,j}|^2` for each complex coordinate `j`.
    pub fn plane_masses(&self) -> Vec<f64> {
        let d = self.window.dim;
        let mut masses = vec![0.0; d / 2];
        for c in self.coeffs.chunks_exact(d) {
            for (j, m) in masses.iter_mut().enumerate() {
                *m += c[2 * j] * c[2 * j] + c[2 * j + 1] * c[2 * j + 1];
            }
        }
        masses
    }

    /// Per-mode L^2 mass.
    pub fn mode_masses(&self) -> Vec<(i32, f64)> {
        let d = self.window.dim;
        self.window
            .modes()
            .zip(self.coeffs.chunks_exact(d))
            .map(|(k, c)| (k, c.iter().map(|v| v * v).sum()))
            .collect()
    }

    /// Mode carrying the largest L^2 mass (lowest index on ties).
    pub fn dominant_mode(&self) -> i32 {
        let mut best = (self.window.k_min, -1.0);
        for (k, m) in self.mode_masses() {
            if m > best.1 {
                best = (k, m);
            }
        }
        best.0
    }
}

fn same_window(a: &ModeWindow, b: &ModeWindow) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "window mismatch: [{}, {}] in R^{} vs [{}, {}] in R^{}",
            a.k_min, a.k_max, a.dim, b.k_min, b.k_max, b.dim
        )));
    }
    Ok(())
}

/// `<x_0, y_0> + sum_{k != 0} 2 pi |k| <x_k, y_k>`.
pub fn h12_inner(x: &FourierLoop, y: &FourierLoop) -> Result<f64> {
    same_window(&x.window, &y.window)?;
    let d = x.window.dim;
    Ok(x.window
        .modes()
        .zip(x.coeffs.chunks_exact(d).zip(y.coeffs.chunks_exact(d)))
        .map(|(k, (a, b))| h12_weight(k) * dot(a, b))
        .sum())
}

/// L^2 inner product; the basis is L^2-orthonormal.
pub fn l2_inner(x: &FourierLoop, y: &FourierLoop) -> Result<f64> {
    same_window(&x.window, &y.window)?;
    Ok(dot(&x.coeffs, &y.coeffs))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `L x = x^+ - x^-`.
pub fn op_l(x: &FourierLoop) -> FourierLoop {
    let d = x.window.dim;
    let mut out = x.clone();
    for (k, c) in x.window.modes().zip(out.coeffs.chunks_exact_mut(d)) {
        let s = k.signum() as f64;
        c.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// Adjoint of the inclusion H^{1/2} -> L^2: mode `k` is divided by its weight.
pub fn op_jstar(u: &FourierLoop) -> FourierLoop {
    let d = u.window.dim;
    let mut out = u.clone();
    for (k, c) in u.window.modes().zip(out.coeffs.chunks_exact_mut(d)) {
        let w = h12_weight(k).recip();
        c.iter_mut().for_each(|v| *v *= w);
    }
    out
}

/// Inverse of [`op_jstar`]: mode `k` is multiplied by its weight.
pub fn op_jstar_inverse(u: &FourierLoop) -> FourierLoop {
    let d = u.window.dim;
    let mut out = u.clone();
    for (k, c) in u.window.modes().zip(out.coeffs.chunks_exact_mut(d)) {
        let w = h12_weight(k);
        c.iter_mut().for_each(|v| *v *= w);
    }
    out
}

/// `-J x'` in coefficient form: mode `k` is multiplied by `2 pi k`.
pub fn minus_j_derivative(x: &FourierLoop) -> FourierLoop {
    let d = x.window.dim;
    let mut out = x.clone();
    for (k, c) in x.window.modes().zip(out.coeffs.chunks_exact_mut(d)) {
        let f = 2.0 * PI * k as f64;
        c.iter_mut().for_each(|v| *v *= f);
    }
    out
}

/// Orthogonal projection onto the modes of `sub` (same storage window).
pub fn project_window(x: &FourierLoop, sub: &ModeWindow) -> Result<FourierLoop> {
    if !x.window.contains_window(sub) {
        return Err(Error::Range(format!(
            "projection window [{}, {}] is not contained in [{}, {}]",
            sub.k_min, sub.k_max, x.window.k_min, x.window.k_max
        )));
    }
    let d = x.window.dim;
    let mut out = x.clone();
    for (k, c) in x.window.modes().zip(out.coeffs.chunks_exact_mut(d)) {
        if !sub.contains(k) {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

/// Multiplication by `e^{2 pi power J t}`: mode `k` moves to `k + power`.
///
/// Fails if a nonzero coefficient would leave the storage window.
pub fn shift(x: &FourierLoop, power: i32) -> Result<FourierLoop> {
    let w = x.window;
    for k in w.modes() {
        if !w.contains(k + power) && x.mode(k).iter().any(|&v| v != 0.0) {
            return Err(Error::Range(format!(
                "shift by {power} moves nonzero mode {k} outside [{}, {}]",
                w.k_min, w.k_max
            )));
        }
    }
    Ok(shift_truncating(x, power))
}

/// Like [`shift`], but coefficients leaving the window are dropped.
pub fn shift_truncating(x: &FourierLoop, power: i32) -> FourierLoop {
    let w = x.window;
    let mut out = FourierLoop::zeros(w);
    for k in w.modes() {
        let target = k + power;
        if w.contains(target) {
            out.mode_mut(target).copy_from_slice(x.mode(k));
        }
    }
    out
}

/// Global S^1 action: every coefficient is rotated by `e^{2 pi theta J}`.
pub fn s1_rotate(x: &FourierLoop, theta: f64) -> FourierLoop {
    let phi = 2.0 * PI * theta;
    let mut out = x.clone();
    rotate_in_place(&mut out.coeffs, phi.cos(), phi.sin());
    out
}

/// Precomputed `cos(2 pi j / M)`, `sin(2 pi j / M)` tables for a uniform grid.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    m: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl SampleGrid {
    pub fn new(m: usize) -> Self {
        let (cos, sin) = (0..m)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / m as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Self { m, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.m as f64
    }

    #[inline]
    fn phase(&self, k: i32, i: usize) -> (f64, f64) {
        let idx = ((k as i64 * i as i64).rem_euclid(self.m as i64)) as usize;
        (self.cos[idx], self.sin[idx])
    }

    /// Pointwise values; `out` has `M * d` entries, sample-major.
    pub fn synthesize_into(&self, x: &FourierLoop, out: &mut [f64]) {
        let w = x.window;
        let d = w.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, c) in w.modes().zip(x.coeffs.chunks_exact(d)) {
            if c.iter().all(|&v| v == 0.0) {
                continue;
            }
            for i in 0..self.m {
                let (co, si) = self.phase(k, i);
                let row = &mut out[i * d..(i + 1) * d];
                for (dst, src) in row.chunks_exact_mut(2).zip(c.chunks_exact(2)) {
                    dst[0] += co * src[0] - si * src[1];
                    dst[1] += si * src[0] + co * src[1];
                }
            }
        }
    }

    /// Discrete Fourier coefficients of `samples` (sample-major) on `window`.
    pub fn analyze_into(&self, samples: &[f64], out: &mut FourierLoop) {
        let w = out.window;
        let d = w.dim;
        let inv = 1.0 / self.m as f64;
        for (k, c) in w.modes().zip(out.coeffs.chunks_exact_mut(d)) {
            c.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..self.m {
                let (co, si) = self.phase(k, i);
                let row = &samples[i * d..(i + 1) * d];
                // e^{-phi J}: (a, b) -> (c a + s b, -s a + c b)
                for (dst, src) in c.chunks_exact_mut(2).zip(row.chunks_exact(2)) {
                    dst[0] += co * src[0] + si * src[1];
                    dst[1] += -si * src[0] + co * src[1];
                }
            }
            c.iter_mut().for_each(|v| *v *= inv);
        }
    }
}

fn check_floor(samples: usize, window: &ModeWindow) -> Result<()> {
    let floor = window.sampling_floor();
    if samples < floor {
        return Err(Error::Aliasing { samples, floor });
    }
    Ok(())
}

/// Evaluate `x` at `t_i = i / M`, returning `M` vectors in `R^d`.
pub fn synthesize(x: &FourierLoop, samples: usize) -> Result<Vec<Vec<f64>>> {
    check_floor(samples, &x.window)?;
    let d = x.window.dim;
    let grid = SampleGrid::new(samples);
    let mut flat = vec![0.0; samples * d];
    grid.synthesize_into(x, &mut flat);
    Ok(flat.chunks_exact(d).map(|c| c.to_vec()).collect())
}

/// Inverse of [`synthesize`] on band-limited data.
pub fn analyze(samples: &[Vec<f64>], window: ModeWindow) -> Result<FourierLoop> {
    check_floor(samples.len(), &window)?;
    let d = window.dim;
    if let Some(bad) = samples.iter().position(|s| s.len() != d) {
        return Err(Error::Dimension(format!(
            "sample {bad} has length {}, expected {d}",
            samples[bad].len()
        )));
    }
    let grid = SampleGrid::new(samples.len());
    let flat: Vec<f64> = samples.iter().flatten().copied().collect();
    let mut out = FourierLoop::zeros(window);
    grid.analyze_into(&flat, &mut out);
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopJson {
    d: usize,
    k_min: i32,
    k_max: i32,
    coeffs: Vec<f64>,
}

impl Serialize for FourierLoop {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LoopJson {
            d: self.window.dim,
            k_min: self.window.k_min,
            k_max: self.window.k_max,
            coeffs: self.coeffs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierLoop {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = LoopJson::deserialize(de)?;
        let window =
            ModeWindow::new(raw.k_min, raw.k_max, raw.d).map_err(serde::de::Error::custom)?;
        FourierLoop::from_coeffs(window, raw.coeffs).map_err(serde::de::Error::custom)
    }
}
