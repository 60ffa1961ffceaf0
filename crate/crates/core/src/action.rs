//! The multiplier cutoff, the twisted field, the modified action and its
//! gradient, and numerical non-vanishing infima of admissible fields.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    minimize_norm_on_sphere, sqrt_weights, unwhiten, whitened_map, AugmentedField, LoopField,
    SphereBudget,
};
use crate::hamiltonian::{
    check_model_window, grad_field_on_grid, integral_on_grid, HamiltonianModel,
};
use crate::loop_space::{h12_weight, FourierLoop, ModeWindow, SampleGrid};

/// Ramp derivative on `[0, 1]`: vanishes to first order at 0, equals 1 with
/// zero slope at 1, and integrates to 1.
fn ramp_deriv(u: f64) -> f64 {
    let v = 1.0 - u;
    3.0 * u * u - 2.0 * u * u * u + 15.0 * u * u * v * v
}

/// Antiderivative of [`ramp_deriv`] with value 0 at 0 and 1 at 1.
fn ramp(u: f64) -> f64 {
    u * u * u * (6.0 + u * (-8.0 + 3.0 * u))
}

/// Cutoff `chi` equal to `lambda` on `[lambda0 + eps, lambda0 + 1 - eps]`,
/// constant outside `[lambda0, lambda0 + 1]`, with `chi' > 0` inside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiProfile {
    lambda0: f64,
    eps: f64,
}

impl ChiProfile {
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn value(&self, lambda: f64) -> f64 {
        let (l0, e) = (self.lambda0, self.eps);
        let l1 = l0 + 1.0;
        if lambda <= l0 {
            l0
        } else if lambda >= l1 {
            l1
        } else if lambda < l0 + e {
            l0 + e * ramp((lambda - l0) / e)
        } else if lambda > l1 - e {
            l1 - e * ramp((l1 - lambda) / e)
        } else {
            lambda
        }
    }

    pub fn deriv(&self, lambda: f64) -> f64 {
        let (l0, e) = (self.lambda0, self.eps);
        let l1 = l0 + 1.0;
        if lambda <= l0 || lambda >= l1 {
            0.0
        } else if lambda < l0 + e {
            ramp_deriv((lambda - l0) / e)
        } else if lambda > l1 - e {
            ramp_deriv((l1 - lambda) / e)
        } else {
            1.0
        }
    }

    /// True when `lambda` lies on the open plateau where `chi(lambda) = lambda`.
    pub fn on_plateau(&self, lambda: f64) -> bool {
        lambda > self.lambda0 + self.eps && lambda < self.lambda0 + 1.0 - self.eps
    }
}

pub fn make_chi(lambda0: f64, eps: f64) -> Result<ChiProfile> {
    if !lambda0.is_finite() {
        return Err(Error::InvalidParameter("lambda0 must be finite".into()));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} is outside (0, 1/2)"
        )));
    }
    Ok(ChiProfile { lambda0, eps })
}

/// A point `(x, lambda)` of the extended loop space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionPoint {
    pub x: FourierLoop,
    pub lambda: f64,
}

/// Shared sampling state for repeated evaluation of the action on one window.
pub struct ActionEvaluator<'a> {
    model: &'a dyn HamiltonianModel,
    chi: ChiProfile,
    window: ModeWindow,
    grid: SampleGrid,
}

impl<'a> ActionEvaluator<'a> {
    pub fn new(
        model: &'a dyn HamiltonianModel,
        chi: ChiProfile,
        window: ModeWindow,
        samples: usize,
    ) -> Result<Self> {
        check_model_window(model, &window)?;
        let floor = window.nonlinear_floor();
        if samples < floor {
            return Err(Error::Aliasing { samples, floor });
        }
        Ok(Self {
            model,
            chi,
            window,
            grid: SampleGrid::new(samples),
        })
    }

    pub fn window(&self) -> ModeWindow {
        self.window
    }

    pub fn chi(&self) -> &ChiProfile {
        &self.chi
    }

    pub fn model(&self) -> &'a dyn HamiltonianModel {
        self.model
    }

    pub fn samples(&self) -> usize {
        self.grid.len()
    }

    fn check(&self, x: &FourierLoop) -> Result<()> {
        if x.window() != &self.window {
            return Err(Error::Dimension(
                "loop window differs from the evaluator window".into(),
            ));
        }
        Ok(())
    }

    fn buffer(&self) -> Vec<f64> {
        vec![0.0; self.grid.len() * self.window.dim()]
    }

    /// `L x - j*(grad H) + 2 pi mu j* x`.
    pub fn twisted_field(&self, x: &FourierLoop, mu: f64) -> Result<FourierLoop> {
        self.check(x)?;
        let mut buf = self.buffer();
        let mut out = grad_field_on_grid(self.model, &self.grid, x, &mut buf);
        let d = self.window.dim();
        for (k, (o, xk)) in self.window.modes().zip(
            out.coeffs_mut()
                .chunks_exact_mut(d)
                .zip(x.coeffs().chunks_exact(d)),
        ) {
            let w = h12_weight(k);
            let sign = k.signum() as f64;
            let twist = 2.0 * PI * mu;
            for (oi, xi) in o.iter_mut().zip(xk) {
                *oi = sign * xi + (twist * xi - *oi) / w;
            }
        }
        Ok(out)
    }

    pub fn value(&self, p: &ActionPoint) -> Result<f64> {
        self.check(&p.x)?;
        let d = self.window.dim();
        let kinetic: f64 = self
            .window
            .modes()
            .zip(p.x.coeffs().chunks_exact(d))
            .map(|(k, xk)| PI * k as f64 * xk.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let mut buf = self.buffer();
        let potential = integral_on_grid(self.model, &self.grid, &p.x, &mut buf);
        let l2 = p.x.l2_norm();
        Ok(kinetic - potential + PI * (self.chi.value(p.lambda) * l2 * l2 - p.lambda))
    }

    pub fn gradient(&self, p: &ActionPoint) -> Result<(FourierLoop, f64)> {
        let gx = self.twisted_field(&p.x, self.chi.value(p.lambda))?;
        let l2 = p.x.l2_norm();
        Ok((gx, PI * (self.chi.deriv(p.lambda) * l2 * l2 - 1.0)))
    }

    /// `sqrt(|G|_{H^{1/2}}^2 + g^2)` for the gradient `(G, g)`.
    pub fn residual(&self, p: &ActionPoint) -> Result<f64> {
        let (gx, g) = self.gradient(p)?;
        let h = gx.h12_norm();
        Ok((h * h + g * g).sqrt())
    }
}

impl AugmentedField for ActionEvaluator<'_> {
    fn window(&self) -> ModeWindow {
        self.window
    }

    fn eval(&self, x: &FourierLoop, lambda: f64) -> Result<(FourierLoop, f64)> {
        self.gradient(&ActionPoint {
            x: x.clone(),
            lambda,
        })
    }
}

/// The admissible field `j* F_lambda` on a window.
pub struct TwistedField<'a> {
    eval: ActionEvaluator<'a>,
    lambda: f64,
}

impl<'a> TwistedField<'a> {
    pub fn new(
        model: &'a dyn HamiltonianModel,
        window: ModeWindow,
        lambda: f64,
        samples: usize,
    ) -> Result<Self> {
        // chi is irrelevant for the field itself
        let chi = make_chi(0.0, 0.25)?;
        Ok(Self {
            eval: ActionEvaluator::new(model, chi, window, samples)?,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl LoopField for TwistedField<'_> {
    fn window(&self) -> ModeWindow {
        self.eval.window
    }

    fn apply(&self, x: &FourierLoop) -> Result<FourierLoop> {
        self.eval.twisted_field(x, self.lambda)
    }

    fn label(&self) -> String {
        format!(
            "j*F_lambda[{}](lambda={})",
            self.eval.model.label(),
            self.lambda
        )
    }
}

/// `j* F_lambda(x) = L x - j* grad H(x) + 2 pi lambda j* x`, sampled on `samples` points.
pub fn field_f_lambda(
    m: &dyn HamiltonianModel,
    x: &FourierLoop,
    lambda: f64,
    samples: usize,
) -> Result<FourierLoop> {
    TwistedField::new(m, *x.window(), lambda, samples)?.apply(x)
}

pub fn action_value(
    m: &dyn HamiltonianModel,
    chi: &ChiProfile,
    p: &ActionPoint,
    samples: usize,
) -> Result<f64> {
    ActionEvaluator::new(m, *chi, *p.x.window(), samples)?.value(p)
}

pub fn action_gradient(
    m: &dyn HamiltonianModel,
    chi: &ChiProfile,
    p: &ActionPoint,
    samples: usize,
) -> Result<(FourierLoop, f64)> {
    ActionEvaluator::new(m, *chi, *p.x.window(), samples)?.gradient(p)
}

/// Record of a numerical infimum of `|T(x)|` over `|x|_{H^{1/2}} = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfimumCertificate {
    pub label: String,
    pub lambda: f64,
    pub inf_estimate: f64,
    pub argmin_loop: FourierLoop,
    pub budget: SphereBudget,
    pub seed: u64,
    /// Local minimum reached from each start.
    pub start_estimates: Vec<f64>,
}

impl InfimumCertificate {
    pub fn passes(&self, tau: f64) -> bool {
        self.inf_estimate > tau
    }
}

/// Multi-start estimate of `inf |field(x)|` over the H^{1/2} unit sphere for
/// a 1-homogeneous field evaluated at the multiplier `lambda`.
pub fn nonvanishing_infimum(
    field: &dyn LoopField,
    lambda: f64,
    budget: &SphereBudget,
) -> Result<InfimumCertificate> {
    let window = field.window();
    let f = whitened_map(field);
    let min = minimize_norm_on_sphere(&f, window.coord_len(), &[], budget)?;
    let sw = sqrt_weights(&window);
    Ok(InfimumCertificate {
        label: field.label(),
        lambda,
        inf_estimate: min.value,
        argmin_loop: unwhiten(window, &sw, &min.point),
        budget: *budget,
        seed: budget.seed,
        start_estimates: min.start_values,
    })
}

/// Cutoff width chosen from the field infima at both ends of the interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSelection {
    pub eps: f64,
    pub lower: InfimumCertificate,
    pub upper: InfimumCertificate,
}

/// `eps = min(0.1, inf / 2)` with `inf` the smaller infimum of `j* F` at
/// `lambda0` and `lambda0 + 1`.
pub fn select_eps(
    m: &dyn HamiltonianModel,
    window: ModeWindow,
    lambda0: f64,
    samples: usize,
    budget: &SphereBudget,
) -> Result<EpsSelection> {
    let lower = nonvanishing_infimum(
        &TwistedField::new(m, window, lambda0, samples)?,
        lambda0,
        budget,
    )?;
    let upper = nonvanishing_infimum(
        &TwistedField::new(m, window, lambda0 + 1.0, samples)?,
        lambda0 + 1.0,
        budget,
    )?;
    let inf = lower.inf_estimate.min(upper.inf_estimate);
    if inf < 1e-6 {
        let at = if lower.inf_estimate <= upper.inf_estimate {
            lambda0
        } else {
            lambda0 + 1.0
        };
        return Err(Error::Inadmissible(format!(
            "the twisted field nearly vanishes at lambda = {at} (infimum {inf:.3e})"
        )));
    }
    Ok(EpsSelection {
        eps: (0.5 * inf).min(0.1),
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{oracle_families, DiagonalQuadratic};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ramp_normalization() {
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        assert_eq!(ramp_deriv(1.0), 1.0);
        let n = 20000;
        let integral: f64 = (0..n)
            .map(|i| ramp_deriv((i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        assert!((integral - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chi_examples() {
        let chi = make_chi(-0.5, 0.1).unwrap();
        assert_eq!(chi.value(-0.5), -0.5);
        assert_eq!(chi.value(0.5), 0.5);
        assert_eq!(chi.value(0.0), 0.0);
        assert_eq!(chi.deriv(-0.6), 0.0);
        assert_eq!(chi.deriv(0.6), 0.0);
        assert_eq!(chi.value(-0.4), -0.4);
        assert!((chi.value(-0.4 - 1e-12) + 0.4).abs() < 1e-11);
        assert!(make_chi(0.0, 0.5).is_err());
        assert!(make_chi(0.0, 0.0).is_err());
    }

    #[test]
    fn chi_derivative_matches_value() {
        let chi = make_chi(0.3, 0.17).unwrap();
        let mut l = 0.2;
        while l < 1.4 {
            let h = 1e-6;
            let fd = (chi.value(l + h) - chi.value(l - h)) / (2.0 * h);
            assert!((fd - chi.deriv(l)).abs() < 1e-5, "at {l}");
            l += 0.0123;
        }
    }

    #[test]
    fn zero_field_examples() {
        let w = ModeWindow::symmetric(4, 4).unwrap();
        let h = DiagonalQuadratic::zero(1);
        let x = FourierLoop::single_mode(w, -1, &[0.3, -0.2, 0.1, 0.5]).unwrap();
        let f = field_f_lambda(&h, &x, 0.5, 33).unwrap();
        for (a, b) in f.mode(-1).iter().zip(x.mode(-1)) {
            assert!((a + 0.5 * b).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FourierLoop::from_coeffs(
            w,
            (0..w.coord_len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        assert_eq!(
            field_f_lambda(&h, &x, 0.0, 33).unwrap(),
            crate::loop_space::op_l(&x)
        );
        assert!(matches!(
            field_f_lambda(&h, &x, 0.0, 32),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn oracle_points_are_zeros() {
        let w = ModeWindow::symmetric(4, 4).unwrap();
        let q = DiagonalQuadratic::new(vec![0.2 * PI, 0.7 * PI]).unwrap();
        let chi = make_chi(-0.5, 0.1).unwrap();
        for fam in oracle_families(&q, -0.5).unwrap() {
            let x = fam.representative(w).unwrap();
            assert!(field_f_lambda(&q, &x, fam.lambda, 33).unwrap().h12_norm() < 1e-10);
            let p = ActionPoint {
                x,
                lambda: fam.lambda,
            };
            let (g, s) = action_gradient(&q, &chi, &p, 33).unwrap();
            assert!(g.h12_norm() < 1e-10 && s.abs() < 1e-12);
        }
    }

    #[test]
    fn action_examples() {
        let w = ModeWindow::symmetric(2, 2).unwrap();
        let h = DiagonalQuadratic::zero(0);
        let chi = make_chi(-0.5, 0.1).unwrap();
        let p = ActionPoint {
            x: FourierLoop::zeros(w),
            lambda: 0.3,
        };
        assert!((action_value(&h, &chi, &p, 17).unwrap() + 0.3 * PI).abs() < 1e-15);
        let (g, s) = action_gradient(&h, &chi, &p, 17).unwrap();
        assert!(g.is_zero());
        assert_eq!(s, -PI);
        let p = ActionPoint {
            x: FourierLoop::single_mode(w, 1, &[1.0, 0.0]).unwrap(),
            lambda: 0.2,
        };
        assert!((action_value(&h, &chi, &p, 17).unwrap() - PI).abs() < 1e-14);
    }

    #[test]
    fn zero_hamiltonian_infimum() {
        let w = ModeWindow::symmetric(3, 2).unwrap();
        let h = DiagonalQuadratic::zero(0);
        let b = SphereBudget {
            starts: 4,
            iterations: 10,
            seed: 3,
        };
        let c = nonvanishing_infimum(&TwistedField::new(&h, w, 0.5, 25).unwrap(), 0.5, &b).unwrap();
        assert!((c.inf_estimate - 0.5).abs() < 1e-8);
        assert!(
            c.argmin_loop.mode(-1).iter().map(|v| v * v).sum::<f64>() > 1.0 / (2.0 * PI) - 1e-8
        );
        let c = nonvanishing_infimum(&TwistedField::new(&h, w, 0.0, 25).unwrap(), 0.0, &b).unwrap();
        assert!(c.inf_estimate < 1e-8);
    }

    #[test]
    fn eps_selection_examples() {
        let b = SphereBudget {
            starts: 4,
            iterations: 20,
            seed: 5,
        };
        let w = ModeWindow::symmetric(3, 4).unwrap();
        let q = DiagonalQuadratic::new(vec![0.2 * PI, 0.7 * PI]).unwrap();
        let sel = select_eps(&q, w, -0.5, 25, &b).unwrap();
        assert!((sel.eps - 0.1).abs() < 1e-12);
        let w = ModeWindow::symmetric(3, 6).unwrap();
        let q = DiagonalQuadratic::new(vec![0.1 * PI, 0.4 * PI, 0.9 * PI]).unwrap();
        let sel = select_eps(&q, w, -0.05, 25, &b).unwrap();
        assert!((sel.eps - 0.025).abs() < 1e-8, "{}", sel.eps);
        let bad = DiagonalQuadratic::new(vec![0.5 * PI, 0.0]).unwrap();
        assert!(matches!(
            select_eps(&bad, ModeWindow::symmetric(3, 4).unwrap(), -0.5, 25, &b),
            Err(Error::Inadmissible(_))
        ));
    }
}
