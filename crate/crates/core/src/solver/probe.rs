use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SearchRegion;
use crate::error::{Error, Result};
use crate::field::{sqrt_weights, stream_rng, unwhiten, AugmentedField};
use crate::loop_space::{FourierLoop, ModeWindow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBudget {
    pub samples: usize,
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for ProbeBudget {
    fn default() -> Self {
        Self {
            samples: 512,
            t_max: 50.0,
            rtol: 1e-6,
            atol: 1e-9,
            max_steps: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TrajectoryOutcome {
    Exited { time: f64 },
    StayedInside,
    StepCollapse { time: f64 },
}

impl TrajectoryOutcome {
    pub fn exited(&self) -> bool {
        matches!(self, TrajectoryOutcome::Exited { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: usize,
    pub forward_exits: usize,
    pub backward_exits: usize,
    pub either_exits: usize,
    pub both_exits: usize,
    pub non_exiting: usize,
    pub step_collapses: usize,
    pub fraction_either: f64,
    /// `(|x|_{H^{1/2}}, lambda)` of boundary samples that never left.
    pub non_exiting_starts: Vec<[f64; 2]>,
    pub budget: ProbeBudget,
}

// Dormand-Prince 5(4) tableau (autonomous, so the nodes are not needed)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Flow<'a> {
    field: &'a dyn AugmentedField,
    window: ModeWindow,
    direction: f64,
}

impl Flow<'_> {
    fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.window.coord_len();
        let x = FourierLoop::from_coeffs(self.window, y[..n].to_vec())?;
        let (gx, g) = self.field.eval(&x, y[n])?;
        let mut out: Vec<f64> = gx.coeffs().iter().map(|v| self.direction * v).collect();
        out.push(self.direction * g);
        Ok(out)
    }
}

fn inside(region: &SearchRegion, window: ModeWindow, y: &[f64]) -> bool {
    let n = window.coord_len();
    let r = window
        .coord_weights()
        .iter()
        .zip(&y[..n])
        .map(|(w, v)| w * v * v)
        .sum::<f64>()
        .sqrt();
    let slack = 1e-12;
    r >= region.r0 * (1.0 - slack)
        && r <= region.r_max * (1.0 + slack)
        && y[n] >= region.lambda_range[0] - slack
        && y[n] <= region.lambda_range[1] + slack
}

/// Integrates `d(x, lambda)/dt = direction * field(x, lambda)` from the given
/// point until it leaves the region, the time cap is hit, or steps collapse.
pub fn probe_trajectory(
    field: &dyn AugmentedField,
    region: &SearchRegion,
    x0: &FourierLoop,
    lambda0: f64,
    direction: f64,
    budget: &ProbeBudget,
) -> Result<TrajectoryOutcome> {
    let window = field.window();
    if x0.window() != &window {
        return Err(Error::Dimension(
            "probe start lives on a different window".into(),
        ));
    }
    let flow = Flow {
        field,
        window,
        direction,
    };
    let mut y: Vec<f64> = x0.coeffs().to_vec();
    y.push(lambda0);
    let dim = y.len();
    let mut t = 0.0;
    let mut h: f64 = 1e-2;
    let mut k: Vec<Vec<f64>> = vec![flow.rhs(&y)?];
    let mut steps = 0;
    while t < budget.t_max {
        if steps >= budget.max_steps || h < 1e-12 * (1.0 + t) {
            return Ok(TrajectoryOutcome::StepCollapse { time: t });
        }
        steps += 1;
        h = h.min(budget.t_max - t);
        k.truncate(1);
        let mut stage = vec![0.0; dim];
        for s in 1..7 {
            for i in 0..dim {
                stage[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            k.push(flow.rhs(&stage)?);
        }
        let mut err: f64 = 0.0;
        let mut y5 = vec![0.0; dim];
        for i in 0..dim {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for j in 0..7 {
                s5 += B5[j] * k[j][i];
                s4 += B4[j] * k[j][i];
            }
            y5[i] = y[i] + h * s5;
            let sc = budget.atol + budget.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            if !inside(region, window, &y5) {
                // shrink onto the crossing before reporting it
                if h > 1e-3 {
                    h *= 0.5;
                    continue;
                }
                return Ok(TrajectoryOutcome::Exited { time: t + h });
            }
            t += h;
            y = y5;
            let last = k.pop().expect("seven stages");
            k.clear();
            k.push(last);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(TrajectoryOutcome::StayedInside)
}

/// Whitened Gaussian direction scaled to the given H^{1/2} radius.
fn boundary_point(window: ModeWindow, sw: &[f64], radius: f64, rng: &mut impl Rng) -> FourierLoop {
    let u: Vec<f64> = (0..sw.len()).map(|_| StandardNormal.sample(rng)).collect();
    let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = u.iter().map(|v| v * radius / r).collect();
    unwhiten(window, sw, &u)
}

/// Samples the boundary of the region (inner sphere, outer sphere and the two
/// multiplier faces in turn) and flows each sample both ways.
pub fn boundedness_probe(
    field: &dyn AugmentedField,
    region: &SearchRegion,
    budget: &ProbeBudget,
) -> Result<ProbeReport> {
    let window = field.window();
    let sw = sqrt_weights(&window);
    let [l0, l1] = region.lambda_range;
    let starts: Vec<(FourierLoop, f64, f64)> = (0..budget.samples)
        .map(|i| {
            let mut rng = stream_rng(budget.seed, i as u64);
            let face = if region.r0 == 0.0 && i % 4 == 0 {
                1
            } else {
                i % 4
            };
            let (radius, lambda) = match face {
                0 => (region.r0, rng.random_range(l0..=l1)),
                1 => (region.r_max, rng.random_range(l0..=l1)),
                2 => (rng.random_range(region.r0..=region.r_max), l0),
                _ => (rng.random_range(region.r0..=region.r_max), l1),
            };
            (
                boundary_point(window, &sw, radius, &mut rng),
                lambda,
                radius,
            )
        })
        .collect();
    let outcomes: Vec<Result<(TrajectoryOutcome, TrajectoryOutcome)>> = starts
        .par_iter()
        .map(|(x, l, _)| {
            Ok((
                probe_trajectory(field, region, x, *l, 1.0, budget)?,
                probe_trajectory(field, region, x, *l, -1.0, budget)?,
            ))
        })
        .collect();
    let mut report = ProbeReport {
        samples: budget.samples,
        forward_exits: 0,
        backward_exits: 0,
        either_exits: 0,
        both_exits: 0,
        non_exiting: 0,
        step_collapses: 0,
        fraction_either: 0.0,
        non_exiting_starts: Vec::new(),
        budget: *budget,
    };
    for (o, (_, l, r)) in outcomes.into_iter().zip(&starts) {
        let (f, b) = o?;
        report.forward_exits += f.exited() as usize;
        report.backward_exits += b.exited() as usize;
        report.step_collapses += [f, b]
            .iter()
            .filter(|o| matches!(o, TrajectoryOutcome::StepCollapse { .. }))
            .count();
        match (f.exited(), b.exited()) {
            (true, true) => {
                report.both_exits += 1;
                report.either_exits += 1;
            }
            (false, false) => {
                report.non_exiting += 1;
                report.non_exiting_starts.push([*r, *l]);
            }
            _ => report.either_exits += 1,
        }
    }
    report.fraction_either = if budget.samples == 0 {
        0.0
    } else {
        report.either_exits as f64 / budget.samples as f64
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{make_chi, ActionEvaluator};
    use crate::hamiltonian::DiagonalQuadratic;
    use std::f64::consts::PI;

    #[test]
    fn origin_under_zero_hamiltonian_exits_downward() {
        let w = ModeWindow::symmetric(2, 2).unwrap();
        let h = DiagonalQuadratic::zero(0);
        let eval = ActionEvaluator::new(&h, make_chi(-0.5, 0.1).unwrap(), w, 17).unwrap();
        let region = SearchRegion::ball(10.0, -0.5).unwrap();
        let out = probe_trajectory(
            &eval,
            &region,
            &FourierLoop::zeros(w),
            0.0,
            1.0,
            &ProbeBudget::default(),
        )
        .unwrap();
        // lambda' = g = -pi from lambda = 0 reaches -0.5 at t = 1 / (2 pi)
        match out {
            TrajectoryOutcome::Exited { time } => assert!((time - 0.5 / PI).abs() < 2e-3, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_region_is_isolating_on_samples() {
        let w = ModeWindow::symmetric(2, 4).unwrap();
        let q = DiagonalQuadratic::new(vec![0.2 * PI, 0.7 * PI]).unwrap();
        let eval = ActionEvaluator::new(&q, make_chi(-0.5, 0.1).unwrap(), w, 17).unwrap();
        let region = SearchRegion::new(0.2, 20.0, -0.5).unwrap();
        let budget = ProbeBudget {
            samples: 16,
            seed: 3,
            ..ProbeBudget::default()
        };
        let r = boundedness_probe(&eval, &region, &budget).unwrap();
        assert_eq!(r.non_exiting, 0, "{r:?}");
        assert_eq!(r.either_exits, 16);
    }
}
