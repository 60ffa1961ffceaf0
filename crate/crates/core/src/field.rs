//! Vector fields on a truncated loop space and a multi-start minimizer of
//! their norm over the H^{1/2} unit sphere.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_space::{FourierLoop, ModeWindow};

/// A map from a mode window to itself, usually of the form `L + compact`.
pub trait LoopField: Send + Sync {
    fn window(&self) -> ModeWindow;

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop>;

    fn label(&self) -> String {
        "field".to_string()
    }
}

/// Wraps a closure as a [`LoopField`].
pub struct FnField<F> {
    window: ModeWindow,
    label: String,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&FourierLoop) -> Result<FourierLoop> + Send + Sync,
{
    pub fn new(window: ModeWindow, label: impl Into<String>, f: F) -> Self {
        Self {
            window,
            label: label.into(),
            f,
        }
    }
}

impl<F> LoopField for FnField<F>
where
    F: Fn(&FourierLoop) -> Result<FourierLoop> + Send + Sync,
{
    fn window(&self) -> ModeWindow {
        self.window
    }

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        if x.window() != &self.window {
            return Err(Error::Dimension(format!(
                "{} expects window [{}, {}] in R^{}",
                self.label,
                self.window.k_min(),
                self.window.k_max(),
                self.window.dim()
            )));
        }
        (self.f)(x)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// A field on the extended space `E x R`: a loop component and a multiplier
/// component, e.g. the gradient of the action.
pub trait AugmentedField: Send + Sync {
    fn window(&self) -> ModeWindow;

    fn eval(&self, x: &FourierLoop, lambda: f64) -> Result<(FourierLoop, f64)>;
}

/// Per-coordinate `sqrt(w(k))`; `u = W^{1/2} x` turns the H^{1/2} norm into
/// the Euclidean one.
pub(crate) fn sqrt_weights(window: &ModeWindow) -> Vec<f64> {
    window.coord_weights().iter().map(|w| w.sqrt()).collect()
}

pub(crate) fn unwhiten(window: ModeWindow, sw: &[f64], u: &[f64]) -> FourierLoop {
    let c = u.iter().zip(sw).map(|(a, s)| a / s).collect();
    FourierLoop::from_coeffs(window, c).expect("length fixed by window")
}

pub(crate) fn whiten(sw: &[f64], x: &FourierLoop) -> Vec<f64> {
    x.coeffs().iter().zip(sw).map(|(a, s)| a * s).collect()
}

/// `u -> W^{1/2} T(W^{-1/2} u)`.
pub(crate) fn whitened_map<'a>(
    field: &'a dyn LoopField,
) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a {
    let window = field.window();
    let sw = sqrt_weights(&window);
    move |u: &[f64]| {
        let x = unwhiten(window, &sw, u);
        let y = field.apply(&x)?;
        Ok(whiten(&sw, &y))
    }
}

/// Search budget for sphere minimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereBudget {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SphereBudget {
    fn default() -> Self {
        Self {
            starts: 8,
            iterations: 40,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SphereMinimum {
    pub value: f64,
    pub point: Vec<f64>,
    pub start_values: Vec<f64>,
}

/// Independent stream `idx` of the generator seeded by `seed`.
pub(crate) fn stream_rng(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    rng
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn normalize(v: &mut [f64]) -> bool {
    let r = norm2(v).sqrt();
    if r == 0.0 || !r.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|a| *a /= r);
    true
}

pub(crate) fn central_jacobian(
    f: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    u: &[f64],
    rows: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    let n = u.len();
    let mut a = DMatrix::zeros(rows, n);
    let mut p = u.to_vec();
    for j in 0..n {
        p[j] = u[j] + h;
        let fp = f(&p)?;
        p[j] = u[j] - h;
        let fm = f(&p)?;
        p[j] = u[j];
        for i in 0..rows {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(a)
}

/// Right singular vector of the smallest singular value.
pub(crate) fn smallest_right_singular(a: &DMatrix<f64>) -> Option<(f64, Vec<f64>)> {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.as_ref()?;
    let n = a.ncols();
    if a.nrows() < n {
        // rank deficient by shape: any null vector of the full V basis works
        let full = (a.transpose() * a).symmetric_eigen();
        let (idx, val) =
            full.eigenvalues
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |b, (i, v)| if *v < b.1 { (i, *v) } else { b },
                );
        return Some((
            val.max(0.0).sqrt(),
            full.eigenvectors.column(idx).iter().copied().collect(),
        ));
    }
    let (idx, val) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |b, (i, v)| if *v < b.1 { (i, *v) } else { b },
            );
    Some((val, vt.row(idx).iter().copied().collect()))
}

fn descend(
    f: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    mut u: Vec<f64>,
    iterations: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut r = f(&u)?;
    let rows = r.len();
    let mut val = norm2(&r);
    for _ in 0..iterations {
        if val == 0.0 {
            break;
        }
        let a = central_jacobian(f, &u, rows, 1e-6)?;
        let mut improved = false;
        if let Some((_, mut v)) = smallest_right_singular(&a) {
            if normalize(&mut v) {
                if v.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                    v.iter_mut().for_each(|a| *a = -*a);
                }
                let rv = f(&v)?;
                let vv = norm2(&rv);
                if vv < val * (1.0 - 1e-12) {
                    u = v;
                    r = rv;
                    val = vv;
                    improved = true;
                }
            }
        }
        if !improved {
            let g = a.transpose() * DVector::from_column_slice(&r) * 2.0;
            let gu: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
            let gt: Vec<f64> = g.iter().zip(&u).map(|(a, b)| a - gu * b).collect();
            let gn = norm2(&gt);
            if gn <= 1e-30 {
                break;
            }
            let mut t = val / gn;
            for _ in 0..40 {
                let mut cand: Vec<f64> = u.iter().zip(&gt).map(|(a, b)| a - t * b).collect();
                if normalize(&mut cand) {
                    let rc = f(&cand)?;
                    let vc = norm2(&rc);
                    if vc < val - 1e-4 * t * gn {
                        u = cand;
                        r = rc;
                        val = vc;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        if !improved {
            break;
        }
    }
    Ok((val.sqrt(), u))
}

/// Minimizes `|f(u)|` over the Euclidean unit sphere from the supplied starts
/// followed by `budget.starts` random ones.
pub(crate) fn minimize_norm_on_sphere(
    f: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    n: usize,
    extra_starts: &[Vec<f64>],
    budget: &SphereBudget,
) -> Result<SphereMinimum> {
    let total = extra_starts.len() + budget.starts;
    if total == 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "sphere search needs at least one start".into(),
        ));
    }
    let results: Vec<Result<(f64, Vec<f64>)>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut u = if idx < extra_starts.len() {
                extra_starts[idx].clone()
            } else {
                let mut rng = stream_rng(budget.seed, idx as u64);
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            if !normalize(&mut u) {
                return Err(Error::InvalidParameter(format!(
                    "start {idx} is the zero vector"
                )));
            }
            descend(f, u, budget.iterations)
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut start_values = Vec::with_capacity(total);
    for r in results {
        let (v, u) = r?;
        start_values.push(v);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, u));
        }
    }
    let (value, point) = best.expect("at least one start");
    Ok(SphereMinimum {
        value,
        point,
        start_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_minimum_is_smallest_singular_value() {
        let diag = [3.0, 0.25, 2.0, -1.5];
        let f = |u: &[f64]| -> Result<Vec<f64>> {
            Ok(u.iter().zip(diag).map(|(a, d)| a * d).collect())
        };
        let m = minimize_norm_on_sphere(
            &f,
            4,
            &[],
            &SphereBudget {
                starts: 3,
                iterations: 5,
                seed: 1,
            },
        )
        .unwrap();
        assert!((m.value - 0.25).abs() < 1e-9);
        assert!(m.point[1].abs() > 1.0 - 1e-9);
        assert_eq!(m.start_values.len(), 3);
    }

    #[test]
    fn nonlinear_homogeneous_map() {
        // |f(u)| = |u| (1 + u_0^2 / |u|^2) is minimized at u_0 = 0 with value 1
        let f = |u: &[f64]| -> Result<Vec<f64>> {
            let r2: f64 = u.iter().map(|a| a * a).sum();
            let c = 1.0 + u[0] * u[0] / r2;
            Ok(u.iter().map(|a| c * a).collect())
        };
        let m = minimize_norm_on_sphere(
            &f,
            3,
            &[],
            &SphereBudget {
                starts: 4,
                iterations: 60,
                seed: 2,
            },
        )
        .unwrap();
        assert!((m.value - 1.0).abs() < 1e-8, "{}", m.value);
    }

    #[test]
    fn deterministic_across_calls() {
        let f = |u: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![u[0] + 2.0 * u[1], u[1] - u[2], 0.5 * u[2]])
        };
        let b = SphereBudget {
            starts: 5,
            iterations: 10,
            seed: 9,
        };
        let a1 = minimize_norm_on_sphere(&f, 3, &[], &b).unwrap();
        let a2 = minimize_norm_on_sphere(&f, 3, &[], &b).unwrap();
        assert_eq!(a1.point, a2.point);
        assert_eq!(a1.start_values, a2.start_values);
    }
}
