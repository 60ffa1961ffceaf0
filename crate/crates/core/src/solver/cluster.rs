use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::action::{ActionEvaluator, ActionPoint};
use crate::error::Result;
use crate::loop_space::{h12_inner, s1_rotate, FourierLoop};

/// Thresholds for merging critical points into one S^1-family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterTolerance {
    pub lambda: f64,
    /// Relative to the H^{1/2} norm of the loops being compared.
    pub orbit: f64,
}

impl Default for ClusterTolerance {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            orbit: 1e-5,
        }
    }
}

/// One S^1-orbit of critical points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalFamily {
    pub representative: ActionPoint,
    pub residual: f64,
    pub lambda: f64,
    pub action: f64,
    /// `[lambda, L^2 mass per coordinate plane..., dominant mode]`
    pub fingerprint: Vec<f64>,
    pub multiplicity_hint: usize,
    /// Smallest-to-largest singular value ratio of the bordered Newton matrix.
    pub conditioning: f64,
}

fn fingerprint(p: &ActionPoint) -> Vec<f64> {
    let masses = p.x.plane_masses();
    let total: f64 = masses.iter().sum();
    let mut f = Vec::with_capacity(masses.len() + 2);
    f.push(p.lambda);
    f.extend(
        masses
            .iter()
            .map(|m| if total > 0.0 { m / total } else { 0.0 }),
    );
    f.push(p.x.dominant_mode() as f64);
    f
}

/// `min_theta |rotate(x, theta) - y|_{H^{1/2}}` and its minimizer, by a
/// 256-point grid followed by golden-section refinement.
pub fn orbit_distance(x: &FourierLoop, y: &FourierLoop) -> Result<(f64, f64)> {
    let dist2 = |theta: f64| -> Result<f64> {
        let d = s1_rotate(x, theta).sub(y)?;
        h12_inner(&d, &d)
    };
    let grid = 256;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..grid {
        let th = i as f64 / grid as f64;
        let v = dist2(th)?;
        if v < best.1 {
            best = (th, v);
        }
    }
    let h = 1.0 / grid as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (dist2(c)?, dist2(d)?);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dist2(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dist2(d)?;
        }
    }
    let (th, v) = if fc < fd { (c, fc) } else { (d, fd) };
    let (th, v) = if v < best.1 { (th, v) } else { best };
    Ok((v.max(0.0).sqrt(), th.rem_euclid(1.0)))
}

fn same_family(p: &ActionPoint, q: &ActionPoint, tol: &ClusterTolerance) -> Result<bool> {
    if (p.lambda - q.lambda).abs() >= tol.lambda {
        return Ok(false);
    }
    let scale = p.x.h12_norm().max(q.x.h12_norm()).max(1.0);
    Ok(orbit_distance(&p.x, &q.x)?.0 < tol.orbit * scale)
}

fn compare_fingerprints(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Groups points into S^1-families, one representative each, sorted by
/// `lambda` and then fingerprint.
pub fn cluster_families(
    eval: &ActionEvaluator<'_>,
    points: &[ActionPoint],
    tol: &ClusterTolerance,
) -> Result<Vec<CriticalFamily>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let mut home = None;
        for (c, members) in clusters.iter().enumerate() {
            if same_family(&points[members[0]], p, tol)? {
                home = Some(c);
                break;
            }
        }
        match home {
            Some(c) => clusters[c].push(i),
            None => clusters.push(vec![i]),
        }
    }
    let mut families = Vec::with_capacity(clusters.len());
    for members in clusters {
        let mut best: Option<(f64, usize)> = None;
        for &i in &members {
            let r = eval.residual(&points[i])?;
            if best.is_none_or(|b| r < b.0) {
                best = Some((r, i));
            }
        }
        let (residual, i) = best.expect("clusters are non-empty");
        let rep = points[i].clone();
        families.push(CriticalFamily {
            residual,
            lambda: rep.lambda,
            action: eval.value(&rep)?,
            fingerprint: fingerprint(&rep),
            multiplicity_hint: members.len(),
            conditioning: f64::NAN,
            representative: rep,
        });
    }
    families.sort_by(|a, b| compare_fingerprints(&a.fingerprint, &b.fingerprint));
    Ok(families)
}
