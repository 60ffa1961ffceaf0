use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SearchRegion;
use crate::error::{Error, Result};
use crate::field::{sqrt_weights, stream_rng, unwhiten, whiten, LoopField};

/// A continuous map `R^dim -> R^dim`.
pub trait FiniteField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>>;
}

impl<F> FiniteField for (usize, F)
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        (self.1)(u)
    }
}

/// A [`LoopField`] in coordinates where the Euclidean norm is the H^{1/2} norm.
pub struct WhitenedField<'a> {
    field: &'a dyn LoopField,
    sw: Vec<f64>,
}

impl<'a> WhitenedField<'a> {
    pub fn new(field: &'a dyn LoopField) -> Self {
        Self {
            sw: sqrt_weights(&field.window()),
            field,
        }
    }
}

impl FiniteField for WhitenedField<'_> {
    fn dim(&self) -> usize {
        self.sw.len()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let x = unwhiten(self.field.window(), &self.sw, u);
        Ok(whiten(&self.sw, &self.field.apply(&x)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeConfig {
    /// Antipodal seed pairs of the main sweep; the verification sweep uses twice as many.
    pub seed_pairs: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for DegreeConfig {
    fn default() -> Self {
        Self {
            seed_pairs: 16,
            max_iter: 50,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedZero {
    pub point: Vec<f64>,
    pub sign: i32,
    pub conditioning: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub euler_char: i64,
    pub zeros: Vec<SignedZero>,
    /// Zeros found only by the verification sweep.
    pub missed_zeros: usize,
    pub warnings: Vec<String>,
    pub convention: String,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn central_jacobian(f: &dyn FiniteField, u: &[f64]) -> Result<DMatrix<f64>> {
    let n = u.len();
    let mut a = DMatrix::zeros(n, n);
    let mut p = u.to_vec();
    let h = 1e-6 * norm(u).max(1.0);
    for j in 0..n {
        p[j] = u[j] + h;
        let fp = f.eval(&p)?;
        p[j] = u[j] - h;
        let fm = f.eval(&p)?;
        p[j] = u[j];
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(a)
}

fn conditioning(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

fn det_sign(a: &DMatrix<f64>) -> i32 {
    let d = a.clone().lu().determinant();
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

fn check_odd(f: &dyn FiniteField, region: &SearchRegion, seed: u64) -> Result<()> {
    let n = f.dim();
    let mut rng = stream_rng(seed, u64::MAX);
    for _ in 0..16 {
        let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = norm(&u);
        let radius = rng.random_range(0.1..1.0) * region.r_max;
        u.iter_mut().for_each(|v| *v *= radius / r);
        let fu = f.eval(&u)?;
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let fm = f.eval(&neg)?;
        let defect = norm(&fu.iter().zip(&fm).map(|(a, b)| a + b).collect::<Vec<_>>());
        if defect > 1e-9 * (1.0 + norm(&fu)) {
            return Err(Error::InvalidParameter(format!(
                "field is not odd: |f(u) + f(-u)| = {defect:.3e} at |u| = {radius:.3e}"
            )));
        }
    }
    Ok(())
}

/// Differentiability at the origin: `f(h v) / h` must agree with the
/// Jacobian built from coordinate directions.
fn check_origin_linearization(f: &dyn FiniteField, a: &DMatrix<f64>, seed: u64) -> Result<()> {
    let n = f.dim();
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let scale = a.norm().max(1.0);
    let h = 1e-6;
    for _ in 0..8 {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = norm(&v);
        let v: Vec<f64> = v.iter().map(|x| x / r).collect();
        let hv: Vec<f64> = v.iter().map(|x| h * x).collect();
        let fv = f.eval(&hv)?;
        let lin = a * DVector::from_column_slice(&v);
        let defect = fv
            .iter()
            .zip(lin.iter())
            .map(|(p, q)| (p / h - q).powi(2))
            .sum::<f64>()
            .sqrt();
        if defect > 1e-6 * scale {
            return Err(Error::Degenerate(format!(
                "the origin is a zero at which the field is not differentiable (linearization defect {defect:.3e})"
            )));
        }
    }
    Ok(())
}

fn newton_zero(
    f: &dyn FiniteField,
    mut u: Vec<f64>,
    config: &DegreeConfig,
) -> Result<Option<Vec<f64>>> {
    let mut fu = f.eval(&u)?;
    let mut fn_ = norm(&fu);
    for _ in 0..config.max_iter {
        if fn_ <= config.tol {
            return Ok(Some(u));
        }
        let a = central_jacobian(f, &u)?;
        let rhs = DVector::from_iterator(u.len(), fu.iter().map(|v| -v));
        let Some(step) = a.lu().solve(&rhs) else {
            return Ok(None);
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = u
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + alpha * s)
                .collect();
            let fc = f.eval(&cand)?;
            let fcn = norm(&fc);
            if fcn.is_finite() && fcn < (1.0 - 1e-4 * alpha) * fn_ {
                u = cand;
                fu = fc;
                fn_ = fcn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((fn_ <= config.tol).then_some(u))
}

fn sweep(
    f: &dyn FiniteField,
    region: &SearchRegion,
    pairs: usize,
    stream_offset: u64,
    config: &DegreeConfig,
) -> Result<Vec<Vec<f64>>> {
    let n = f.dim();
    let inner = region.r0.max(0.05 * region.r_max);
    let seeds: Vec<Vec<f64>> = (0..pairs)
        .flat_map(|i| {
            let mut rng = stream_rng(config.seed, stream_offset + i as u64);
            let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r = norm(&u);
            let radius = rng.random_range(inner..region.r_max);
            u.iter_mut().for_each(|v| *v *= radius / r);
            let neg = u.iter().map(|v| -v).collect();
            [u, neg]
        })
        .collect();
    let found: Vec<Result<Option<Vec<f64>>>> = seeds
        .into_par_iter()
        .map(|s| newton_zero(f, s, config))
        .collect();
    let mut zeros: Vec<Vec<f64>> = Vec::new();
    for z in found {
        if let Some(z) = z? {
            let r = norm(&z);
            if r < 1e-8 || r <= region.r0 || r >= region.r_max {
                continue;
            }
            push_distinct(&mut zeros, z);
        }
    }
    Ok(zeros)
}

fn push_distinct(zeros: &mut Vec<Vec<f64>>, z: Vec<f64>) -> bool {
    let scale = norm(&z).max(1.0);
    let dup = zeros
        .iter()
        .any(|w| norm(&w.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-6 * scale);
    if !dup {
        zeros.push(z);
    }
    !dup
}

/// Sum of `sign det Df` over the zeros of an odd field strictly inside the
/// region; the origin is included when the region is a ball.
pub fn euler_char_signed_zeros(
    f: &dyn FiniteField,
    region: &SearchRegion,
    config: &DegreeConfig,
) -> Result<DegreeReport> {
    let n = f.dim();
    check_odd(f, region, config.seed)?;
    let mut zeros: Vec<SignedZero> = Vec::new();
    let mut warnings = Vec::new();
    if region.r0 == 0.0 {
        let origin = vec![0.0; n];
        let a = central_jacobian(f, &origin)?;
        check_origin_linearization(f, &a, config.seed)?;
        let c = conditioning(&a);
        if c < 1e-10 {
            return Err(Error::Degenerate(format!(
                "zero at the origin has conditioning {c:.3e}"
            )));
        }
        zeros.push(SignedZero {
            point: origin,
            sign: det_sign(&a),
            conditioning: c,
        });
    }
    let mut found = sweep(f, region, config.seed_pairs, 0, config)?;
    let verify = sweep(
        f,
        region,
        2 * config.seed_pairs,
        config.seed_pairs as u64,
        config,
    )?;
    let mut missed = 0;
    for z in verify {
        if push_distinct(&mut found, z) {
            missed += 1;
        }
    }
    if missed > 0 {
        warnings.push(format!(
            "verification sweep found {missed} zero(s) missed by the main sweep"
        ));
    }
    for z in found {
        let a = central_jacobian(f, &z)?;
        let c = conditioning(&a);
        if c < 1e-10 {
            return Err(Error::Degenerate(format!(
                "zero at |u| = {:.3e} has conditioning {c:.3e}",
                norm(&z)
            )));
        }
        zeros.push(SignedZero {
            sign: det_sign(&a),
            point: z,
            conditioning: c,
        });
    }
    let euler_char = zeros.iter().map(|z| z.sign as i64).sum();
    let convention = if region.r0 == 0.0 {
        "ball region: the origin is counted; an odd field has an odd signed count".to_string()
    } else {
        "annulus region: the origin is excluded; nonzero zeros come in antipodal pairs".to_string()
    };
    Ok(DegreeReport {
        euler_char,
        zeros,
        missed_zeros: missed,
        warnings,
        convention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(r: f64) -> SearchRegion {
        SearchRegion::ball(r, 0.0).unwrap()
    }

    #[test]
    fn linear_diagonal_fields() {
        let diag = [1.0, -1.0, 1.0, -1.0, -2.0];
        let f = (5usize, |u: &[f64]| -> Result<Vec<f64>> {
            Ok(u.iter().zip(diag).map(|(a, d)| a * d).collect())
        });
        let r = euler_char_signed_zeros(&f, &ball(2.0), &DegreeConfig::default()).unwrap();
        assert_eq!(r.euler_char, -1);
        assert_eq!(r.zeros.len(), 1);
        let id = (3usize, |u: &[f64]| -> Result<Vec<f64>> { Ok(u.to_vec()) });
        assert_eq!(
            euler_char_signed_zeros(&id, &ball(1.0), &DegreeConfig::default())
                .unwrap()
                .euler_char,
            1
        );
    }

    #[test]
    fn odd_cubic_with_three_zeros() {
        // f(u) = (u0^3 - u0, u1): zeros at u0 in {-1, 0, 1}, signs +, -, +
        let f = (2usize, |u: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![u[0] * u[0] * u[0] - u[0], u[1]])
        });
        let r = euler_char_signed_zeros(&f, &ball(2.0), &DegreeConfig::default()).unwrap();
        assert_eq!(r.zeros.len(), 3);
        assert_eq!(r.euler_char, 1);
    }

    #[test]
    fn rejects_even_and_degenerate_fields() {
        let even = (2usize, |u: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![u[0] * u[0] + 1.0, u[1]])
        });
        assert!(euler_char_signed_zeros(&even, &ball(1.0), &DegreeConfig::default()).is_err());
        let cubic = (2usize, |u: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![u[0] * u[0] * u[0], u[1]])
        });
        assert!(matches!(
            euler_char_signed_zeros(&cubic, &ball(1.0), &DegreeConfig::default()),
            Err(Error::Degenerate(_))
        ));
        // 1-homogeneous but not linear
        let homog = (2usize, |u: &[f64]| -> Result<Vec<f64>> {
            let r = (u[0] * u[0] + u[1] * u[1]).sqrt();
            Ok(if r == 0.0 {
                vec![0.0, 0.0]
            } else {
                vec![u[0] + u[1] * u[1] * u[1] / (r * r), u[1]]
            })
        });
        assert!(matches!(
            euler_char_signed_zeros(&homog, &ball(1.0), &DegreeConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
