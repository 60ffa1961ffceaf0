//! Paths of admissible fields and the numerical checks behind the index
//! continuation: shift conjugation, the mixed shift operator, truncation to
//! `V`, the unshift map, the block product field and the `g`-deformation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::action::{nonvanishing_infimum, ChiProfile, TwistedField};
use crate::error::{Error, Result};
use crate::field::{
    central_jacobian, sqrt_weights, stream_rng, unwhiten, whiten, FnField, LoopField, SphereBudget,
};
use crate::hamiltonian::{HamiltonianModel, Scaled};
use crate::loop_space::{
    h12_weight, op_jstar, op_jstar_inverse, op_l, project_window, shift, shift_truncating,
    FourierLoop, ModeWindow,
};

impl<T: LoopField + ?Sized> LoopField for &T {
    fn window(&self) -> ModeWindow {
        (**self).window()
    }

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        (**self).apply(x)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

/// A one-parameter family `s -> T_s`, `s in [0, 1]`, of fields on one window.
pub trait FieldPath: Send + Sync {
    fn window(&self) -> ModeWindow;

    fn at(&self, s: f64) -> Result<Box<dyn LoopField + '_>>;

    fn label(&self) -> String {
        "path".to_string()
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Range(format!("path parameter {s} outside [0, 1]")));
    }
    Ok(())
}

/// `T_s = T` for every `s`.
pub struct ConstantPath<'a> {
    field: Box<dyn LoopField + 'a>,
}

impl<'a> ConstantPath<'a> {
    pub fn new(field: impl LoopField + 'a) -> Self {
        Self {
            field: Box::new(field),
        }
    }
}

impl FieldPath for ConstantPath<'_> {
    fn window(&self) -> ModeWindow {
        self.field.window()
    }

    fn at(&self, s: f64) -> Result<Box<dyn LoopField + '_>> {
        check_s(s)?;
        Ok(Box::new(&*self.field))
    }

    fn label(&self) -> String {
        format!("constant({})", self.field.label())
    }
}

/// `T_s = (1 - s) A + s B`.
pub struct LinearPath<'a> {
    start: Box<dyn LoopField + 'a>,
    end: Box<dyn LoopField + 'a>,
}

impl<'a> LinearPath<'a> {
    pub fn new(start: impl LoopField + 'a, end: impl LoopField + 'a) -> Result<Self> {
        if start.window() != end.window() {
            return Err(Error::Dimension(
                "path endpoints live on different windows".into(),
            ));
        }
        Ok(Self {
            start: Box::new(start),
            end: Box::new(end),
        })
    }
}

impl FieldPath for LinearPath<'_> {
    fn window(&self) -> ModeWindow {
        self.start.window()
    }

    fn at(&self, s: f64) -> Result<Box<dyn LoopField + '_>> {
        check_s(s)?;
        let (a, b) = (&self.start, &self.end);
        let label = format!("(1-{s}) {} + {s} {}", a.label(), b.label());
        Ok(Box::new(FnField::new(
            self.window(),
            label,
            move |x: &FourierLoop| {
                let mut out = a.apply(x)?.scaled(1.0 - s);
                out.axpy(s, &b.apply(x)?)?;
                Ok(out)
            },
        )))
    }

    fn label(&self) -> String {
        format!("linear({} -> {})", self.start.label(), self.end.label())
    }
}

/// `s -> j* F_lambda` for the Hamiltonian `s H`, at fixed `lambda`.
pub struct HamiltonianScalingPath<'a> {
    model: &'a dyn HamiltonianModel,
    window: ModeWindow,
    lambda: f64,
    samples: usize,
}

impl<'a> HamiltonianScalingPath<'a> {
    pub fn new(
        model: &'a dyn HamiltonianModel,
        window: ModeWindow,
        lambda: f64,
        samples: usize,
    ) -> Result<Self> {
        // validates the window and sample count once
        TwistedField::new(model, window, lambda, samples)?;
        Ok(Self {
            model,
            window,
            lambda,
            samples,
        })
    }
}

impl FieldPath for HamiltonianScalingPath<'_> {
    fn window(&self) -> ModeWindow {
        self.window
    }

    fn at(&self, s: f64) -> Result<Box<dyn LoopField + '_>> {
        check_s(s)?;
        let (model, window, lambda, samples) = (self.model, self.window, self.lambda, self.samples);
        let label = format!("j*F[{s} * {}](lambda={lambda})", model.label());
        Ok(Box::new(FnField::new(
            window,
            label,
            move |x: &FourierLoop| {
                let scaled = Scaled::new(model, s);
                TwistedField::new(&scaled, window, lambda, samples)?.apply(x)
            },
        )))
    }

    fn label(&self) -> String {
        format!("scaling({}, lambda={})", self.model.label(), self.lambda)
    }
}

/// Where `j*` sits relative to the inverse shift in a conjugated field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// `j* o Sh^{-1} o F o Sh` for an inner field given as `j* F`.
    JstarOutside,
    /// `Sh^{-1} o (j* F) o Sh`.
    JstarInside,
}

/// `Sh^{-1} o T o Sh` on a window `W`, with `T` living on a window that
/// contains `W` moved up by one mode.
pub struct ShiftConjugate<F> {
    inner: F,
    window: ModeWindow,
    composition: Composition,
}

impl<F: LoopField> ShiftConjugate<F> {
    pub fn new(inner: F, window: ModeWindow, composition: Composition) -> Result<Self> {
        let iw = inner.window();
        let moved = ModeWindow::new(window.k_min() + 1, window.k_max() + 1, window.dim())?;
        if iw.dim() != window.dim() || !iw.contains_window(&moved) {
            return Err(Error::Range(format!(
                "shift conjugation on [{}, {}] needs the inner field to cover [{}, {}], it covers [{}, {}]",
                window.k_min(),
                window.k_max(),
                moved.k_min(),
                moved.k_max(),
                iw.k_min(),
                iw.k_max()
            )));
        }
        Ok(Self {
            inner,
            window,
            composition,
        })
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: LoopField> LoopField for ShiftConjugate<F> {
    fn window(&self) -> ModeWindow {
        self.window
    }

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        if x.window() != &self.window {
            return Err(Error::Dimension(
                "loop window differs from the conjugated field window".into(),
            ));
        }
        let iw = self.inner.window();
        let hull = ModeWindow::new(
            iw.k_min().min(self.window.k_min()),
            iw.k_max().max(self.window.k_max() + 1),
            iw.dim(),
        )?;
        let xs = shift(&x.to_window(hull)?, 1)?.to_window(iw)?;
        let y = self.inner.apply(&xs)?;
        let z = match self.composition {
            Composition::JstarOutside => op_jstar(&shift_truncating(&op_jstar_inverse(&y), -1)),
            Composition::JstarInside => shift_truncating(&y, -1),
        };
        z.to_window(self.window)
    }

    fn label(&self) -> String {
        match self.composition {
            Composition::JstarOutside => format!("j* Sh^-1 ({}) Sh", self.inner.label()),
            Composition::JstarInside => format!("Sh^-1 {} Sh", self.inner.label()),
        }
    }
}

/// The Step 1 path `s j* (Sh^-1 F Sh) + (1 - s) Sh^-1 (j* F) Sh`, built from
/// `j* F_{lambda0}` on `window.grow(0, 1)`.
pub fn step1_path<'a>(inner: &'a dyn LoopField, window: ModeWindow) -> Result<LinearPath<'a>> {
    let inside = ShiftConjugate::new(inner, window, Composition::JstarInside)?;
    let outside = ShiftConjugate::new(inner, window, Composition::JstarOutside)?;
    LinearPath::new(inside, outside)
}

/// `c_k(s) = s / w(k - 1) + (1 - s) / w(k)`.
pub fn mixed_shift_coefficient(k: i32, s: f64) -> f64 {
    s / h12_weight(k - 1) + (1.0 - s) / h12_weight(k)
}

/// `s (j* o Sh^-1) + (1 - s) (Sh^-1 o j*)`: mode `k` goes to `c_k(s)` times
/// mode `k - 1`; the lowest mode of the window is dropped.
pub fn mixed_shift(x: &FourierLoop, s: f64) -> FourierLoop {
    let w = *x.window();
    let mut out = FourierLoop::zeros(w);
    for k in w.modes().skip(1) {
        let c = mixed_shift_coefficient(k, s);
        let src: Vec<f64> = x.mode(k).iter().map(|v| c * v).collect();
        out.mode_mut(k - 1).copy_from_slice(&src);
    }
    out
}

/// Coordinate indices of the modes of `window` outside `inner`.
fn outside_coords(window: &ModeWindow, inner: &ModeWindow) -> Vec<usize> {
    let d = window.dim();
    window
        .modes()
        .filter(|k| !inner.contains(*k))
        .flat_map(|k| {
            let o = window.offset(k);
            o..o + d
        })
        .collect()
}

/// Estimate of `inf <T x, L x>_{H^{1/2}}` over unit loops supported outside
/// `window_out`, from the symmetric part of the linearization plus basis and
/// random starts.
pub fn positivity_margin(
    field: &dyn LoopField,
    window_out: &ModeWindow,
    budget: &SphereBudget,
) -> Result<f64> {
    let window = field.window();
    let idx = outside_coords(&window, window_out);
    if idx.is_empty() {
        return Err(Error::Range("no modes outside the inner window".into()));
    }
    let sw = sqrt_weights(&window);
    let signs: Vec<f64> = {
        let d = window.dim();
        window
            .modes()
            .flat_map(|k| std::iter::repeat_n(k.signum() as f64, d))
            .collect()
    };
    let m = idx.len();
    let embed = |u: &[f64]| {
        let mut full = vec![0.0; window.coord_len()];
        for (&i, v) in idx.iter().zip(u) {
            full[i] = *v;
        }
        unwhiten(window, &sw, &full)
    };
    let restricted = |u: &[f64]| -> Result<Vec<f64>> {
        let y = whiten(&sw, &field.apply(&embed(u))?);
        Ok(idx.iter().map(|&i| y[i]).collect())
    };
    let q = |u: &[f64]| -> Result<f64> {
        let y = restricted(u)?;
        Ok(idx
            .iter()
            .zip(&y)
            .zip(u)
            .map(|((&i, a), b)| signs[i] * a * b)
            .sum())
    };
    let mut starts: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for i in 0..budget.starts {
        let mut rng = stream_rng(budget.seed, i as u64);
        let mut u: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= r);
        starts.push(u);
    }
    let d_sign: Vec<f64> = idx.iter().map(|&i| signs[i]).collect();
    let mut best = f64::INFINITY;
    for mut u in starts {
        let mut val = q(&u)?;
        for _ in 0..budget.iterations.max(1) {
            let a = central_jacobian(&restricted, &u, m, 1e-6)?;
            let da = DMatrix::from_fn(m, m, |i, j| d_sign[i] * a[(i, j)]);
            let sym = (&da + da.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let (j, _) =
                eig.eigenvalues
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |b, (i, v)| if *v < b.1 { (i, *v) } else { b },
                    );
            let v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            let qv = q(&v)?;
            if qv < val - 1e-14 * val.abs().max(1.0) {
                u = v;
                val = qv;
            } else {
                break;
            }
        }
        best = best.min(val);
    }
    Ok(best)
}

/// `V(x) = L x + P (T(P x) - L(P x))` with `P` the projection onto `[-N, N]`.
pub struct TruncatedField<F> {
    field: F,
    inner: ModeWindow,
    margin: f64,
}

impl<F: LoopField> TruncatedField<F> {
    pub fn inner_window(&self) -> ModeWindow {
        self.inner
    }

    pub fn truncation(&self) -> u32 {
        self.inner.k_max() as u32
    }

    /// Positivity margin of the original field outside `[-N, N]`.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn original(&self) -> &F {
        &self.field
    }
}

impl<F: LoopField> LoopField for TruncatedField<F> {
    fn window(&self) -> ModeWindow {
        self.field.window()
    }

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        let px = project_window(x, &self.inner)?;
        let k = self.field.apply(&px)?.sub(&op_l(&px))?;
        let mut out = op_l(x);
        out.axpy(1.0, &project_window(&k, &self.inner)?)?;
        Ok(out)
    }

    fn label(&self) -> String {
        format!("V_N[{}](N={})", self.field.label(), self.inner.k_max())
    }
}

/// Builds `V` after checking that the field pairs positively with `L` outside
/// `[-N, N]`.
pub fn truncate_to_v<F: LoopField>(
    field: F,
    n: u32,
    budget: &SphereBudget,
) -> Result<TruncatedField<F>> {
    let window = field.window();
    let inner = ModeWindow::symmetric(n, window.dim())?;
    if !window.contains_window(&inner) {
        return Err(Error::Range(format!(
            "truncation N = {n} exceeds the field window"
        )));
    }
    let margin = positivity_margin(&field, &inner, budget)?;
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "N = {n} is too small: the field pairs with L at {margin:.3e} outside [-{n}, {n}]"
        )));
    }
    Ok(TruncatedField {
        field,
        inner,
        margin,
    })
}

/// The unshift map: modes `[-N-1, N]` move up by one, mode `N+1` goes to
/// `-N-1`, everything else is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unshift {
    n: i32,
    window: ModeWindow,
}

impl Unshift {
    pub fn new(n: u32, window: ModeWindow) -> Result<Self> {
        let n = n as i32;
        if !window.contains(-n - 1) || !window.contains(n + 1) {
            return Err(Error::Range(format!(
                "the unshift map for N = {n} needs modes [-{0}, {0}]",
                n + 1
            )));
        }
        Ok(Self { n, window })
    }

    pub fn image_mode(&self, k: i32) -> i32 {
        let n = self.n;
        if (-n - 1..=n).contains(&k) {
            k + 1
        } else if k == n + 1 {
            -n - 1
        } else {
            k
        }
    }

    fn permute(&self, x: &FourierLoop, forward: bool) -> Result<FourierLoop> {
        if x.window() != &self.window {
            return Err(Error::Dimension(
                "loop window differs from the unshift window".into(),
            ));
        }
        let mut out = FourierLoop::zeros(self.window);
        for k in self.window.modes() {
            let j = self.image_mode(k);
            let (from, to) = if forward { (k, j) } else { (j, k) };
            out.mode_mut(to).copy_from_slice(x.mode(from));
        }
        Ok(out)
    }

    pub fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        self.permute(x, true)
    }

    pub fn inverse(&self, x: &FourierLoop) -> Result<FourierLoop> {
        self.permute(x, false)
    }
}

/// `M o (Sh^-1 V Sh) o M^-1` on the window `W`.
pub struct Step3Field<'a, F> {
    conj: ShiftConjugate<&'a TruncatedField<F>>,
    unshift: Unshift,
    /// Largest deviation from the block formula seen while building.
    pub defect: f64,
}

impl<F: LoopField> LoopField for Step3Field<'_, F> {
    fn window(&self) -> ModeWindow {
        self.conj.window()
    }

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        let y = self.conj.apply(&self.unshift.inverse(x)?)?;
        self.unshift.apply(&y)
    }

    fn label(&self) -> String {
        format!("M Sh^-1 {} Sh M^-1", self.conj.inner().label())
    }
}

/// `V` applied to a loop of `window`, read back on `window`.
fn v_on(v: &dyn LoopField, x: &FourierLoop, window: ModeWindow) -> Result<FourierLoop> {
    v.apply(&x.to_window(v.window())?)?.to_window(window)
}

/// The block formula `V(y) + z + L w` that the Step 3 field must satisfy.
fn step3_expected<F: LoopField>(v: &TruncatedField<F>, x: &FourierLoop) -> Result<FourierLoop> {
    let window = *x.window();
    let n = v.truncation() as i32;
    let inner = v.inner_window();
    let y = project_window(x, &inner)?;
    let mut out = v_on(v, &y, window)?;
    for k in window.modes().filter(|k| !inner.contains(*k)) {
        let src = if k == -n - 1 {
            x.mode(k).to_vec()
        } else {
            x.mode(k).iter().map(|c| k.signum() as f64 * c).collect()
        };
        out.mode_mut(k).copy_from_slice(&src);
    }
    Ok(out)
}

fn rel_defect(a: &FourierLoop, b: &FourierLoop) -> Result<f64> {
    Ok(a.sub(b)?.h12_norm() / (1.0 + b.h12_norm()))
}

/// Builds `V_{lambda0+1}` on `window` from `V = V_{lambda0}` (which must
/// cover `window` moved up one mode) and checks the block formula on every
/// basis vector outside `[-N, N]` and on random loops.
pub fn build_step3_field<'a, F: LoopField>(
    v: &'a TruncatedField<F>,
    window: ModeWindow,
    seed: u64,
) -> Result<Step3Field<'a, F>> {
    let n = v.truncation();
    let unshift = Unshift::new(n, window)?;
    let conj = ShiftConjugate::new(v, window, Composition::JstarInside)?;
    let mut field = Step3Field {
        conj,
        unshift,
        defect: 0.0,
    };
    let tol = 1e-12;
    let d = window.dim();
    let inner = v.inner_window();
    for k in window.modes().filter(|k| !inner.contains(*k)) {
        for c in 0..d {
            let mut e = vec![0.0; d];
            e[c] = 1.0;
            let x = FourierLoop::single_mode(window, k, &e)?;
            let err = rel_defect(&field.apply(&x)?, &step3_expected(v, &x)?)?;
            field.defect = field.defect.max(err);
            if err > tol {
                return Err(Error::Verification(format!(
                    "Step 3 field deviates from the block formula at mode {k} (defect {err:.3e})"
                )));
            }
        }
    }
    for i in 0..6u64 {
        let mut rng = stream_rng(seed, i);
        let mut x = FourierLoop::from_coeffs(
            window,
            (0..window.coord_len())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        )?;
        if i % 2 == 0 {
            x = project_window(&x, &inner)?;
        }
        let err = rel_defect(&field.apply(&x)?, &step3_expected(v, &x)?)?;
        field.defect = field.defect.max(err);
        if err > tol {
            let worst = field
                .apply(&x)?
                .sub(&step3_expected(v, &x)?)?
                .dominant_mode();
            return Err(Error::Verification(format!(
                "Step 3 field deviates from the block formula at mode {worst} (defect {err:.3e})"
            )));
        }
    }
    Ok(field)
}

/// `T((y, z, w), lambda) = (V y, (-1 + 2 (lambda - lambda0)) z, L w)` with `y`
/// the `[-N, N]` part, `z` the mode `-N-1` part and `w` the rest.
pub struct ProductField<'a, F> {
    v: &'a TruncatedField<F>,
    window: ModeWindow,
    lambda0: f64,
}

impl<'a, F: LoopField> ProductField<'a, F> {
    pub fn new(v: &'a TruncatedField<F>, window: ModeWindow, lambda0: f64) -> Result<Self> {
        let n = v.truncation() as i32;
        if window.dim() != v.window().dim() || !window.contains(-n - 1) || !window.contains(n) {
            return Err(Error::Range(format!(
                "the product field for N = {n} needs modes [-{}, {n}]",
                n + 1
            )));
        }
        Ok(Self { v, window, lambda0 })
    }

    pub fn window(&self) -> ModeWindow {
        self.window
    }

    pub fn z_multiplier(&self, lambda: f64) -> f64 {
        -1.0 + 2.0 * (lambda - self.lambda0)
    }

    /// Splits a loop into its `(y, z, w)` blocks, each on the full window.
    pub fn split(&self, x: &FourierLoop) -> Result<(FourierLoop, FourierLoop, FourierLoop)> {
        let inner = self.v.inner_window();
        let n = self.v.truncation() as i32;
        let y = project_window(x, &inner)?;
        let z = FourierLoop::single_mode(self.window, -n - 1, x.mode(-n - 1))?;
        let w = x.sub(&y)?.sub(&z)?;
        Ok((y, z, w))
    }

    pub fn apply(&self, x: &FourierLoop, lambda: f64) -> Result<FourierLoop> {
        if x.window() != &self.window {
            return Err(Error::Dimension(
                "loop window differs from the product field window".into(),
            ));
        }
        let (y, z, w) = self.split(x)?;
        let mut out = v_on(self.v, &y, self.window)?;
        out.axpy(self.z_multiplier(lambda), &z)?;
        out.axpy(1.0, &op_l(&w))?;
        Ok(out)
    }

    /// `g((s y, z, s w), lambda) = pi (chi'(lambda) |(s y, z, s w)|_{L^2}^2 - 1)`.
    pub fn g_deformed(
        &self,
        chi: &ChiProfile,
        x: &FourierLoop,
        lambda: f64,
        s: f64,
    ) -> Result<f64> {
        let (y, z, w) = self.split(x)?;
        let (ny, nz, nw) = (y.l2_norm(), z.l2_norm(), w.l2_norm());
        let mass = s * s * (ny * ny + nw * nw) + nz * nz;
        Ok(PI * (chi.deriv(lambda) * mass - 1.0))
    }
}

/// Failing sample recorded in a certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub point: FourierLoop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyCertificate {
    pub step: String,
    pub label: String,
    pub s_grid: Vec<f64>,
    pub infima: Vec<f64>,
    /// Smallest entry of `infima`.
    pub margin: f64,
    pub tau: f64,
    pub pass: bool,
    pub witnesses: Vec<Witness>,
    pub budget: SphereBudget,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn check_grid(s_grid: &[f64]) -> Result<()> {
    if s_grid.is_empty() {
        return Err(Error::InvalidParameter("empty s grid".into()));
    }
    for &s in s_grid {
        check_s(s)?;
    }
    Ok(())
}

/// Uniform grid `0, 1/(n-1), ..., 1`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        p => (0..p).map(|i| i as f64 / (p - 1) as f64).collect(),
    }
}

/// Runs the unit-sphere infimum search at every grid point; the path passes
/// when every estimate exceeds `tau`.
pub fn verify_ia_homotopy(
    path: &dyn FieldPath,
    s_grid: &[f64],
    budget: &SphereBudget,
    tau: f64,
    step: &str,
) -> Result<HomotopyCertificate> {
    check_grid(s_grid)?;
    let mut infima = Vec::with_capacity(s_grid.len());
    let mut witnesses = Vec::new();
    for &s in s_grid {
        let field = path.at(s)?;
        let cert = nonvanishing_infimum(field.as_ref(), f64::NAN, budget)?;
        if !cert.passes(tau) {
            witnesses.push(Witness {
                s,
                value: cert.inf_estimate,
                lambda: None,
                point: cert.argmin_loop,
            });
        }
        infima.push(cert.inf_estimate);
    }
    let margin = infima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HomotopyCertificate {
        step: step.to_string(),
        label: path.label(),
        s_grid: s_grid.to_vec(),
        pass: witnesses.is_empty(),
        infima,
        margin,
        tau,
        witnesses,
        budget: *budget,
        notes: Vec::new(),
    })
}

/// Golden-section search for a smaller infimum around every local minimum of
/// the sampled infima, `evaluations` extra points each. The refined samples
/// join the certificate, so a crossing between grid points turns it red.
pub fn refine_minima(
    path: &dyn FieldPath,
    cert: &mut HomotopyCertificate,
    evaluations: usize,
) -> Result<()> {
    let n = cert.s_grid.len();
    if n < 2 || evaluations == 0 {
        return Ok(());
    }
    let inf_at = |s: f64| -> Result<(f64, FourierLoop)> {
        let field = path.at(s)?;
        let c = nonvanishing_infimum(field.as_ref(), f64::NAN, &cert.budget)?;
        Ok((c.inf_estimate, c.argmin_loop))
    };
    let mut extra: Vec<(f64, f64, FourierLoop)> = Vec::new();
    for i in 0..n {
        let left = if i > 0 {
            cert.infima[i - 1]
        } else {
            f64::INFINITY
        };
        let right = if i + 1 < n {
            cert.infima[i + 1]
        } else {
            f64::INFINITY
        };
        if cert.infima[i] > left || cert.infima[i] > right {
            continue;
        }
        let (mut a, mut b) = (
            cert.s_grid[i.saturating_sub(1)],
            cert.s_grid[(i + 1).min(n - 1)],
        );
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = inf_at(c)?;
        let mut fd = inf_at(d)?;
        extra.push((c, fc.0, fc.1.clone()));
        extra.push((d, fd.0, fd.1.clone()));
        for _ in 2..evaluations.max(2) {
            if fc.0 < fd.0 {
                (b, d, fd) = (d, c, fc);
                c = b - g * (b - a);
                fc = inf_at(c)?;
                extra.push((c, fc.0, fc.1.clone()));
            } else {
                (a, c, fc) = (c, d, fd);
                d = a + g * (b - a);
                fd = inf_at(d)?;
                extra.push((d, fd.0, fd.1.clone()));
            }
        }
    }
    let added = extra.len();
    let mut merged: Vec<(f64, f64)> = cert
        .s_grid
        .iter()
        .copied()
        .zip(cert.infima.iter().copied())
        .collect();
    for (s, v, point) in extra {
        if !(v > cert.tau) {
            cert.witnesses.push(Witness {
                s,
                value: v,
                lambda: None,
                point,
            });
        }
        merged.push((s, v));
    }
    merged.sort_by(|x, y| x.0.total_cmp(&y.0));
    merged.dedup_by(|x, y| x.0 == y.0);
    cert.witnesses.sort_by(|x, y| x.s.total_cmp(&y.s));
    cert.s_grid = merged.iter().map(|m| m.0).collect();
    cert.infima = merged.iter().map(|m| m.1).collect();
    cert.margin = cert.infima.iter().copied().fold(f64::INFINITY, f64::min);
    cert.pass = cert.witnesses.is_empty();
    cert.notes
        .push(format!("{added} refinement samples around local minima"));
    Ok(())
}

/// Endpoint certificate for Step 3: infima of `V_{lambda0}` (s = 0) and of the
/// conjugated `V_{lambda0+1}` (s = 1) on the same window.
pub fn step3_certificate<F: LoopField>(
    v: &TruncatedField<F>,
    step3: &Step3Field<'_, F>,
    budget: &SphereBudget,
    tau: f64,
) -> Result<HomotopyCertificate> {
    let window = step3.window();
    let v_here = FnField::new(window, v.label(), |x: &FourierLoop| v_on(v, x, window));
    let mut infima = Vec::new();
    let mut witnesses = Vec::new();
    for (s, f) in [
        (0.0, &v_here as &dyn LoopField),
        (1.0, step3 as &dyn LoopField),
    ] {
        let cert = nonvanishing_infimum(f, f64::NAN, budget)?;
        if !cert.passes(tau) {
            witnesses.push(Witness {
                s,
                value: cert.inf_estimate,
                lambda: None,
                point: cert.argmin_loop,
            });
        }
        infima.push(cert.inf_estimate);
    }
    let margin = infima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HomotopyCertificate {
        step: "3".into(),
        label: step3.label(),
        s_grid: vec![0.0, 1.0],
        pass: witnesses.is_empty(),
        infima,
        margin,
        tau,
        witnesses,
        budget: *budget,
        notes: vec![format!("block formula defect {:.3e}", step3.defect)],
    })
}

/// Scaling rays for the `g`-deformation check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayBudget {
    /// Random directions per block pattern (`y`, `z`, `w`, mixed).
    pub directions: usize,
    pub scales: Vec<f64>,
    pub seed: u64,
}

impl Default for RayBudget {
    fn default() -> Self {
        Self {
            directions: 2,
            scales: vec![1.0, 10.0, 100.0, 1000.0],
            seed: 0,
        }
    }
}

/// Along rays `t x0` with `|x0|_{H^{1/2}} = 1`, checks that
/// `Phi(t) = |T(t x0, lambda)| + |g_s(t x0, lambda)|` grows at least
/// linearly: the certificate value at `s` is the smallest `Phi(t_max) / t_max`
/// over rays and `lambda_grid`.
pub fn g_deformation_check<F: LoopField>(
    product: &ProductField<'_, F>,
    chi: &ChiProfile,
    s_grid: &[f64],
    lambda_grid: &[f64],
    rays: &RayBudget,
    tau: f64,
) -> Result<HomotopyCertificate> {
    check_grid(s_grid)?;
    if lambda_grid.is_empty() || rays.scales.is_empty() || rays.directions == 0 {
        return Err(Error::InvalidParameter(
            "g-deformation check needs multipliers, scales and directions".into(),
        ));
    }
    let window = product.window();
    let t_max = rays
        .scales
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut directions = Vec::new();
    for pattern in 0..4u64 {
        for j in 0..rays.directions as u64 {
            let mut rng = stream_rng(rays.seed, pattern * 1_000 + j);
            let x = FourierLoop::from_coeffs(
                window,
                (0..window.coord_len())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect(),
            )?;
            let (y, z, w) = product.split(&x)?;
            let x = match pattern {
                0 => y,
                1 => z,
                2 => w,
                _ => x,
            };
            let r = x.h12_norm();
            if r > 0.0 {
                directions.push(x.scaled(1.0 / r));
            }
        }
    }
    let mut infima = Vec::with_capacity(s_grid.len());
    let mut witnesses = Vec::new();
    let mut notes = Vec::new();
    for &s in s_grid {
        let mut worst: Option<(f64, f64, &FourierLoop)> = None;
        for &lambda in lambda_grid {
            for x0 in &directions {
                let mut phi = Vec::with_capacity(rays.scales.len());
                for &t in &rays.scales {
                    let x = x0.scaled(t);
                    phi.push(
                        product.apply(&x, lambda)?.h12_norm()
                            + product.g_deformed(chi, &x, lambda, s)?.abs(),
                    );
                }
                let at_max = phi[rays
                    .scales
                    .iter()
                    .position(|t| *t == t_max)
                    .expect("t_max is a scale")]
                    / t_max;
                if worst.is_none_or(|w| at_max < w.0) {
                    worst = Some((at_max, lambda, x0));
                }
            }
        }
        let (value, lambda, x0) = worst.expect("non-empty grids");
        if !(value > tau) {
            witnesses.push(Witness {
                s,
                value,
                lambda: Some(lambda),
                point: x0.clone(),
            });
        }
        infima.push(value);
    }
    let margin = infima.iter().copied().fold(f64::INFINITY, f64::min);
    notes.push(format!(
        "{} rays, {} multipliers, t_max = {t_max}",
        directions.len(),
        lambda_grid.len()
    ));
    Ok(HomotopyCertificate {
        step: "4".into(),
        label: "g-deformation".into(),
        s_grid: s_grid.to_vec(),
        pass: witnesses.is_empty(),
        infima,
        margin,
        tau,
        witnesses,
        budget: SphereBudget {
            starts: directions.len(),
            iterations: rays.scales.len(),
            seed: rays.seed,
        },
        notes,
    })
}

/// Continuation `s -> s H` at `lambda = -1/2` and `lambda = 1/2`, with
/// `refine` golden-section samples around each local minimum.
pub fn c0_small_certificates(
    model: &dyn HamiltonianModel,
    window: ModeWindow,
    samples: usize,
    s_grid: &[f64],
    budget: &SphereBudget,
    tau: f64,
    refine: usize,
) -> Result<Vec<HomotopyCertificate>> {
    [-0.5, 0.5]
        .iter()
        .map(|&lambda| {
            let path = HamiltonianScalingPath::new(model, window, lambda, samples)?;
            let mut cert = verify_ia_homotopy(&path, s_grid, budget, tau, "c0small")?;
            refine_minima(&path, &mut cert, refine)?;
            cert.notes.push(format!("lambda = {lambda}"));
            cert.notes
                .push(format!("sup |H_1| <= {}", model.sup_norm_bound()));
            Ok(cert)
        })
        .collect()
}

/// H^{1/2} norm of `T(x) - L x` on the modes outside `inner`.
pub fn compact_tail(field: &dyn LoopField, x: &FourierLoop, inner: &ModeWindow) -> Result<f64> {
    let k = field.apply(x)?.sub(&op_l(x))?;
    Ok(k.sub(&project_window(&k, inner)?)?.h12_norm())
}
