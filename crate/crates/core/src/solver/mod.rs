//! Critical points of the modified action on a truncated loop space: a
//! gauge-bordered multi-start Newton solver, S^1-family clustering, signed
//! zero counts of odd fields and a boundedness probe for search regions.

mod cluster;
mod degree;
mod probe;

pub use cluster::{cluster_families, orbit_distance, ClusterTolerance, CriticalFamily};
pub use degree::{
    euler_char_signed_zeros, DegreeConfig, DegreeReport, FiniteField, SignedZero, WhitenedField,
};
pub use probe::{boundedness_probe, probe_trajectory, ProbeBudget, ProbeReport, TrajectoryOutcome};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ActionEvaluator, ActionPoint, ChiProfile};
use crate::error::{Error, Result};
use crate::field::{sqrt_weights, stream_rng};
use crate::hamiltonian::HamiltonianModel;
use crate::loop_space::{apply_j_into, dot, FourierLoop, ModeWindow};

/// Annulus `r0 <= |x|_{H^{1/2}} <= r_max` times the multiplier interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRegion {
    pub r0: f64,
    pub r_max: f64,
    pub lambda_range: [f64; 2],
}

impl SearchRegion {
    pub fn new(r0: f64, r_max: f64, lambda0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0 < r_max && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "search annulus needs 0 < r0 < R0, got r0 = {r0}, R0 = {r_max}"
            )));
        }
        Ok(Self {
            r0,
            r_max,
            lambda_range: [lambda0, lambda0 + 1.0],
        })
    }

    /// Closed ball of radius `r_max` (inner radius 0).
    pub fn ball(r_max: f64, lambda0: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ball radius {r_max} must be positive"
            )));
        }
        Ok(Self {
            r0: 0.0,
            r_max,
            lambda_range: [lambda0, lambda0 + 1.0],
        })
    }

    pub fn contains_radius(&self, r: f64) -> bool {
        r >= self.r0 && r <= self.r_max
    }

    pub fn contains(&self, x: &FourierLoop, lambda: f64) -> bool {
        self.contains_radius(x.h12_norm())
            && lambda >= self.lambda_range[0]
            && lambda <= self.lambda_range[1]
    }
}

/// Multi-start Newton settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub starts: usize,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub region: SearchRegion,
    pub seed: u64,
}

impl SolverConfig {
    /// `50 (n + 1)` starts, tolerance `1e-10`, annulus `[0.5, 100]`.
    pub fn standard(n: usize, lambda0: f64, seed: u64) -> Self {
        Self {
            starts: 50 * (n + 1),
            newton_tol: 1e-10,
            max_iter: 60,
            region: SearchRegion {
                r0: 0.5,
                r_max: 100.0,
                lambda_range: [lambda0, lambda0 + 1.0],
            },
            seed,
        }
    }
}

/// Outcome counts of a multi-start solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub starts: usize,
    pub converged: usize,
    pub outside_region: usize,
    pub stalled: usize,
    pub singular: usize,
}

#[derive(Clone, Debug)]
pub struct CriticalSearch {
    pub points: Vec<ActionPoint>,
    pub stats: SolveStats,
}

enum StartOutcome {
    Converged(ActionPoint),
    Stalled,
    Singular,
}

/// Residual of the action gradient in whitened coordinates: `[W^{1/2} G; g]`.
struct Residual<'e, 'a> {
    eval: &'e ActionEvaluator<'a>,
    sw: Vec<f64>,
    window: ModeWindow,
}

impl Residual<'_, '_> {
    fn at(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.window.coord_len();
        let x = FourierLoop::from_coeffs(self.window, z[..n].to_vec())?;
        let (gx, g) = self.eval.gradient(&ActionPoint { x, lambda: z[n] })?;
        let mut r: Vec<f64> = gx
            .coeffs()
            .iter()
            .zip(&self.sw)
            .map(|(a, s)| a * s)
            .collect();
        r.push(g);
        Ok(r)
    }

    fn jacobian(&self, z: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
        let m = z.len();
        let mut a = DMatrix::zeros(r.len(), m);
        let mut p = z.to_vec();
        for j in 0..m {
            let h = 1e-7 * z[j].abs().max(1.0);
            p[j] = z[j] + h;
            let rp = self.at(&p)?;
            p[j] = z[j];
            for i in 0..r.len() {
                a[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        Ok(a)
    }
}

/// `J x_ref` where `x_ref` keeps only the dominant (mode, plane) block of `x`.
fn gauge_direction(x: &[f64]) -> Vec<f64> {
    let mut best = (0, -1.0);
    for (i, p) in x.chunks_exact(2).enumerate() {
        let m = p[0] * p[0] + p[1] * p[1];
        if m > best.1 {
            best = (i, m);
        }
    }
    let mut xr = vec![0.0; x.len()];
    xr[2 * best.0] = x[2 * best.0];
    xr[2 * best.0 + 1] = x[2 * best.0 + 1];
    let mut out = vec![0.0; x.len()];
    apply_j_into(&xr, &mut out);
    out
}

/// Bordered Jacobian `[[A, W^{1/2} J x_ref], [(J x_ref)^T, 0]]` with the
/// multiplier rows of `A` included.
fn bordered(a: &DMatrix<f64>, sw: &[f64], jx: &[f64]) -> DMatrix<f64> {
    let n = jx.len();
    let rows = a.nrows();
    let mut b = DMatrix::zeros(rows + 1, rows + 1);
    b.view_mut((0, 0), (rows, rows)).copy_from(a);
    for i in 0..n {
        b[(i, rows)] = sw[i] * jx[i];
        b[(rows, i)] = jx[i];
    }
    b
}

fn solve_step(b: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = 1e8 * (1.0 + rhs.norm());
    if let Some(sol) = b.clone().lu().solve(rhs) {
        if sol.iter().all(|v| v.is_finite()) && sol.norm() < scale {
            return Some(sol);
        }
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return None;
    }
    let sol = svd.solve(rhs, 1e-10 * smax).ok()?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

fn newton_from(
    res: &Residual<'_, '_>,
    chi: &ChiProfile,
    mut z: Vec<f64>,
    config: &SolverConfig,
) -> Result<StartOutcome> {
    let n = res.window.coord_len();
    let lo = chi.lambda0() + 1e-12;
    let hi = chi.lambda0() + 1.0 - 1e-12;
    let mut r = res.at(&z)?;
    let mut rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = 1e-2 * config.newton_tol;
    for _ in 0..config.max_iter {
        if rn <= target {
            break;
        }
        let a = res.jacobian(&z, &r)?;
        let jx = gauge_direction(&z[..n]);
        let b = bordered(&a, &res.sw, &jx);
        let mut rhs = DVector::zeros(n + 2);
        for i in 0..=n {
            rhs[i] = -r[i];
        }
        let Some(step) = solve_step(&b, &rhs) else {
            return Ok(StartOutcome::Singular);
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand: Vec<f64> = z
                .iter()
                .zip(step.iter())
                .map(|(zi, si)| zi + alpha * si)
                .collect();
            cand[n] = cand[n].clamp(lo, hi);
            let rc = res.at(&cand)?;
            let rcn = rc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rcn.is_finite() && rcn < (1.0 - 1e-4 * alpha) * rn {
                z = cand;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn < config.newton_tol {
        let x = FourierLoop::from_coeffs(res.window, z[..n].to_vec())?;
        Ok(StartOutcome::Converged(ActionPoint { x, lambda: z[n] }))
    } else {
        Ok(StartOutcome::Stalled)
    }
}

/// Start `idx`: mode-decaying Gaussian loop with unit L^2 norm and a
/// multiplier drawn uniformly from the plateau.
fn random_start(window: &ModeWindow, chi: &ChiProfile, seed: u64, idx: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, idx as u64);
    let d = window.dim();
    let mut z = Vec::with_capacity(window.coord_len() + 1);
    for k in window.modes() {
        let s = 1.0 / (1.0 + k.unsigned_abs() as f64);
        for _ in 0..d {
            let v: f64 = StandardNormal.sample(&mut rng);
            z.push(s * v);
        }
    }
    let norm = dot(&z, &z).sqrt();
    z.iter_mut().for_each(|v| *v /= norm);
    let lo = chi.lambda0() + chi.eps();
    let hi = chi.lambda0() + 1.0 - chi.eps();
    z.push(rng.random_range(lo..hi));
    z
}

fn same_point(a: &ActionPoint, b: &ActionPoint) -> bool {
    (a.lambda - b.lambda).abs() < 1e-8
        && a.x.sub(&b.x).map(|d| d.h12_norm() < 1e-8).unwrap_or(false)
}

/// Multi-start Newton with per-start statistics.
pub fn search_critical_points(
    m: &dyn HamiltonianModel,
    chi: &ChiProfile,
    window: ModeWindow,
    samples: usize,
    config: &SolverConfig,
) -> Result<CriticalSearch> {
    if config.starts == 0 || !(config.newton_tol > 0.0) {
        return Err(Error::InvalidParameter(
            "solver needs starts > 0 and newton_tol > 0".into(),
        ));
    }
    let eval = ActionEvaluator::new(m, *chi, window, samples)?;
    let res = Residual {
        eval: &eval,
        sw: sqrt_weights(&window),
        window,
    };
    let outcomes: Vec<Result<StartOutcome>> = (0..config.starts)
        .into_par_iter()
        .map(|idx| {
            newton_from(
                &res,
                chi,
                random_start(&window, chi, config.seed, idx),
                config,
            )
        })
        .collect();
    let mut stats = SolveStats {
        starts: config.starts,
        ..Default::default()
    };
    let mut points: Vec<ActionPoint> = Vec::new();
    for o in outcomes {
        match o? {
            StartOutcome::Converged(p) => {
                // independent re-evaluation of the unbordered gradient
                if eval.residual(&p)? >= config.newton_tol {
                    stats.stalled += 1;
                    continue;
                }
                if !config.region.contains(&p.x, p.lambda) {
                    stats.outside_region += 1;
                    continue;
                }
                stats.converged += 1;
                if !points.iter().any(|q| same_point(q, &p)) {
                    points.push(p);
                }
            }
            StartOutcome::Stalled => stats.stalled += 1,
            StartOutcome::Singular => stats.singular += 1,
        }
    }
    Ok(CriticalSearch { points, stats })
}

/// Converged, region-filtered, deduplicated critical points.
pub fn find_critical_points(
    m: &dyn HamiltonianModel,
    chi: &ChiProfile,
    window: ModeWindow,
    samples: usize,
    config: &SolverConfig,
) -> Result<Vec<ActionPoint>> {
    Ok(search_critical_points(m, chi, window, samples, config)?.points)
}

/// Smallest-to-largest singular value ratio of the bordered Newton matrix.
pub fn bordered_conditioning(eval: &ActionEvaluator<'_>, p: &ActionPoint) -> Result<f64> {
    let window = eval.window();
    let res = Residual {
        eval,
        sw: sqrt_weights(&window),
        window,
    };
    let mut z = p.x.coeffs().to_vec();
    z.push(p.lambda);
    let r = res.at(&z)?;
    let a = res.jacobian(&z, &r)?;
    let b = bordered(&a, &res.sw, &gauge_direction(p.x.coeffs()));
    let sv = b.singular_values();
    let max = sv.max();
    Ok(if max == 0.0 { 0.0 } else { sv.min() / max })
}

/// Families, count and the `count >= n + 1` check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArnoldReport {
    pub n: usize,
    pub families: Vec<CriticalFamily>,
    pub count: usize,
    pub pass: bool,
    pub stats: SolveStats,
    pub warnings: Vec<String>,
}

/// Conditioning below which a family is reported as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

pub fn arnold_count(
    m: &dyn HamiltonianModel,
    chi: &ChiProfile,
    window: ModeWindow,
    samples: usize,
    config: &SolverConfig,
    tol: &ClusterTolerance,
) -> Result<ArnoldReport> {
    let search = search_critical_points(m, chi, window, samples, config)?;
    let eval = ActionEvaluator::new(m, *chi, window, samples)?;
    let mut families = cluster_families(&eval, &search.points, tol)?;
    let mut warnings = Vec::new();
    let mut degenerate = 0;
    for f in families.iter_mut() {
        f.conditioning = bordered_conditioning(&eval, &f.representative)?;
        if f.conditioning < DEGENERACY_THRESHOLD {
            degenerate += 1;
        }
    }
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} of {} families are degenerate (bordered Jacobian conditioning below {DEGENERACY_THRESHOLD:e}); \
             degenerate families can lie on a critical manifold, which the coordinate-mass fingerprint may split, so the count is not a reliable number of geometrically distinct families",
            families.len()
        ));
    }
    let n = m.n();
    let count = families.len();
    Ok(ArnoldReport {
        n,
        pass: count > n,
        count,
        families,
        stats: search.stats,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::make_chi;
    use crate::hamiltonian::DiagonalQuadratic;
    use std::f64::consts::PI;

    #[test]
    fn region_validation() {
        assert!(SearchRegion::new(0.0, 1.0, 0.0).is_err());
        assert!(SearchRegion::new(2.0, 1.0, 0.0).is_err());
        let r = SearchRegion::new(0.5, 10.0, -0.5).unwrap();
        assert_eq!(r.lambda_range, [-0.5, 0.5]);
        assert!(r.contains_radius(1.0) && !r.contains_radius(0.1));
    }

    #[test]
    fn oracle_points_n1() {
        let w = ModeWindow::symmetric(3, 4).unwrap();
        let q = DiagonalQuadratic::new(vec![0.2 * PI, 0.7 * PI]).unwrap();
        let chi = make_chi(-0.5, 0.1).unwrap();
        let cfg = SolverConfig {
            starts: 30,
            ..SolverConfig::standard(1, -0.5, 7)
        };
        let pts = find_critical_points(&q, &chi, w, 25, &cfg).unwrap();
        assert!(!pts.is_empty());
        for p in &pts {
            assert!(
                (p.lambda - 0.2).abs() < 1e-8 || (p.lambda + 0.3).abs() < 1e-8,
                "{}",
                p.lambda
            );
        }
        assert!(pts.iter().any(|p| (p.lambda - 0.2).abs() < 1e-8));
        assert!(pts.iter().any(|p| (p.lambda + 0.3).abs() < 1e-8));
    }

    #[test]
    fn deterministic_given_seed() {
        let w = ModeWindow::symmetric(2, 4).unwrap();
        let q = DiagonalQuadratic::new(vec![0.2 * PI, 0.7 * PI]).unwrap();
        let chi = make_chi(-0.5, 0.1).unwrap();
        let cfg = SolverConfig {
            starts: 8,
            ..SolverConfig::standard(1, -0.5, 11)
        };
        let a = find_critical_points(&q, &chi, w, 17, &cfg).unwrap();
        let b = find_critical_points(&q, &chi, w, 17, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
