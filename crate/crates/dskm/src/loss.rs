//! Loss values and (sub)gradients l'(u, y), in the exact form consumed by
//! the training update `α_i = -γ_i l'(f(x_i), y_i) φ_{ω_i}(x_i)`.
//!
//! Tie-breaking at kinks is deterministic: the branch written with ≥ wins
//! (gradient 0 for hinge and ε-insensitive, the 1-τ branch for quantile),
//! so trajectories are reproducible.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Saturation point for the density-ratio exponential.
pub const DENSITY_RATIO_EXP_CAP: f64 = 30.0;

/// Loss family plus per-kind parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec<F> {
    Hinge,
    SquaredHinge,
    Logistic,
    MulticlassLogistic { classes: usize },
    Square,
    Huber,
    /// ε = 0 reduces to least absolute deviation.
    EpsInsensitive { eps: F },
    Quantile { tau: F },
    /// Target carries the running threshold τ.
    Novelty,
    /// Target is the Bernoulli indicator z; u is f at the sampled point.
    KlDensityRatio,
}

/// Training target for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<F> {
    Real(F),
    /// ±1 label.
    Sign(F),
    Class(usize),
}

impl<F: Real> LossSpec<F> {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::MulticlassLogistic { classes } if *classes < 2 => Err(
                Error::InvalidParameter("multiclass logistic requires C >= 2".into()),
            ),
            LossSpec::EpsInsensitive { eps } if *eps < F::zero() => {
                Err(Error::InvalidParameter("eps must be >= 0".into()))
            }
            LossSpec::Quantile { tau } if !(*tau > F::zero() && *tau < F::one()) => {
                Err(Error::InvalidParameter("quantile level must be in (0,1)".into()))
            }
            _ => Ok(()),
        }
    }

    /// Width of the score vector u (and of the gradient).
    pub fn outputs(&self) -> usize {
        match self {
            LossSpec::MulticlassLogistic { classes } => *classes,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Hinge => "hinge",
            LossSpec::SquaredHinge => "squared_hinge",
            LossSpec::Logistic => "logistic",
            LossSpec::MulticlassLogistic { .. } => "multiclass_logistic",
            LossSpec::Square => "square",
            LossSpec::Huber => "huber",
            LossSpec::EpsInsensitive { .. } => "eps_insensitive",
            LossSpec::Quantile { .. } => "quantile",
            LossSpec::Novelty => "novelty",
            LossSpec::KlDensityRatio => "kl_density_ratio",
        }
    }

    fn sign_target(&self, y: Target<F>) -> Result<F> {
        match y {
            Target::Sign(s) if s == F::one() || s == -F::one() => Ok(s),
            _ => Err(Error::TargetMismatch(format!(
                "{} expects a ±1 label, got {y:?}",
                self.name()
            ))),
        }
    }

    fn real_target(&self, y: Target<F>) -> Result<F> {
        match y {
            Target::Real(v) => Ok(v),
            _ => Err(Error::TargetMismatch(format!(
                "{} expects a real target, got {y:?}",
                self.name()
            ))),
        }
    }

    /// l(u, y). For the density-ratio machine this is the (possibly
    /// negative) objective term 2(δ₁(z) e^u - δ₀(z) u).
    pub fn loss_value(&self, u: &[F], y: Target<F>) -> Result<F> {
        self.check_width(u)?;
        let v = match self {
            LossSpec::Hinge => {
                let y = self.sign_target(y)?;
                (F::one() - u[0] * y).max(F::zero())
            }
            LossSpec::SquaredHinge => {
                let y = self.sign_target(y)?;
                let m = (F::one() - u[0] * y).max(F::zero());
                m * m / F::TWO
            }
            LossSpec::Logistic => {
                let y = self.sign_target(y)?;
                ((-y * u[0]).exp() + F::one()).ln()
            }
            LossSpec::MulticlassLogistic { classes } => {
                let c = self.class_target(y, *classes)?;
                log_sum_exp(u) - u[c]
            }
            LossSpec::Square => {
                let y = self.real_target(y)?;
                let r = u[0] - y;
                r * r / F::TWO
            }
            LossSpec::Huber => {
                let y = self.real_target(y)?;
                let r = (u[0] - y).abs();
                if r <= F::one() {
                    r * r / F::TWO
                } else {
                    r - F::one() / F::TWO
                }
            }
            LossSpec::EpsInsensitive { eps } => {
                let y = self.real_target(y)?;
                ((u[0] - y).abs() - *eps).max(F::zero())
            }
            LossSpec::Quantile { tau } => {
                let y = self.real_target(y)?;
                (*tau * (y - u[0])).max((F::one() - *tau) * (u[0] - y))
            }
            LossSpec::Novelty => {
                let tau = self.real_target(y)?;
                (tau - u[0]).max(F::zero())
            }
            LossSpec::KlDensityRatio => {
                let z = self.class_target(y, 2)?;
                if z == 1 {
                    F::TWO * capped_exp(u[0])
                } else {
                    -F::TWO * u[0]
                }
            }
        };
        Ok(v)
    }

    /// A subgradient of `loss_value` in u, written into `grad`
    /// (length `outputs()`).
    pub fn loss_grad(&self, u: &[F], y: Target<F>, grad: &mut [F]) -> Result<()> {
        self.check_width(u)?;
        if grad.len() != self.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.outputs(),
                got: grad.len(),
            });
        }
        match self {
            LossSpec::Hinge => {
                let y = self.sign_target(y)?;
                grad[0] = if y * u[0] >= F::one() { F::zero() } else { -y };
            }
            LossSpec::SquaredHinge => {
                let y = self.sign_target(y)?;
                grad[0] = if y * u[0] >= F::one() {
                    F::zero()
                } else {
                    u[0] - y
                };
            }
            LossSpec::Logistic => {
                let y = self.sign_target(y)?;
                let e = (-y * u[0]).exp();
                grad[0] = -y * e / (F::one() + e);
            }
            LossSpec::MulticlassLogistic { classes } => {
                let c = self.class_target(y, *classes)?;
                softmax(u, grad);
                grad[c] = grad[c] - F::one();
            }
            LossSpec::Square => {
                let y = self.real_target(y)?;
                grad[0] = u[0] - y;
            }
            LossSpec::Huber => {
                let y = self.real_target(y)?;
                let r = u[0] - y;
                grad[0] = if r.abs() <= F::one() { r } else { r.signum() };
            }
            LossSpec::EpsInsensitive { eps } => {
                let y = self.real_target(y)?;
                let r = u[0] - y;
                grad[0] = if r.abs() <= *eps { F::zero() } else { r.signum() };
            }
            LossSpec::Quantile { tau } => {
                let y = self.real_target(y)?;
                grad[0] = if u[0] >= y { F::one() - *tau } else { -*tau };
            }
            LossSpec::Novelty => {
                let tau = self.real_target(y)?;
                grad[0] = if u[0] >= tau { F::zero() } else { -F::one() };
            }
            LossSpec::KlDensityRatio => {
                let z = self.class_target(y, 2)?;
                grad[0] = if z == 1 {
                    F::TWO * capped_exp(u[0])
                } else {
                    -F::TWO
                };
            }
        }
        Ok(())
    }

    fn class_target(&self, y: Target<F>, classes: usize) -> Result<usize> {
        match y {
            Target::Class(c) if c < classes => Ok(c),
            _ => Err(Error::TargetMismatch(format!(
                "{} expects a class index < {classes}, got {y:?}",
                self.name()
            ))),
        }
    }

    fn check_width(&self, u: &[F]) -> Result<()> {
        if u.len() != self.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.outputs(),
                got: u.len(),
            });
        }
        Ok(())
    }
}

fn capped_exp<F: Real>(u: F) -> F {
    u.min(F::cast(DENSITY_RATIO_EXP_CAP)).exp()
}

fn log_sum_exp<F: Real>(u: &[F]) -> F {
    let m = u.iter().fold(u[0], |a, &b| a.max(b));
    m + u.iter().map(|&v| (v - m).exp()).sum::<F>().ln()
}

fn softmax<F: Real>(u: &[F], out: &mut [F]) {
    let m = u.iter().fold(u[0], |a, &b| a.max(b));
    let mut z = F::zero();
    for (o, &v) in out.iter_mut().zip(u) {
        *o = (v - m).exp();
        z = z + *o;
    }
    for o in out.iter_mut() {
        *o = *o / z;
    }
}

/// Direction of the novelty threshold update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauStep {
    /// τ ← τ + γν  (f(x) ≥ τ branch)
    PlusNu,
    /// τ ← τ - γ(1-ν)  (f(x) < τ branch)
    MinusOneMinusNu,
}

/// Case selector for the joint (α, τ) novelty update. `alpha_coef` is the
/// multiplier of γ φ(x) in the new coefficient (0 or +1). Ties go to the
/// ≥ branch.
pub fn novelty_grads<F: Real>(f_x: F, tau_prev: F) -> (F, TauStep) {
    if f_x >= tau_prev {
        (F::zero(), TauStep::PlusNu)
    } else {
        (F::one(), TauStep::MinusOneMinusNu)
    }
}

/// Coefficients of the density-ratio update before the -2γ scaling:
/// α = -2γ (q_coef · φ(y) - p_coef · φ(x)). `saturated` flags an
/// exponential capped at exp(30).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRatioGrad<F> {
    pub q_coef: F,
    pub p_coef: F,
    pub saturated: bool,
}

pub fn density_ratio_grad<F: Real>(_f_x: F, f_y: F, z: u8) -> Result<DensityRatioGrad<F>> {
    if z > 1 {
        return Err(Error::TargetMismatch(format!("z must be 0 or 1, got {z}")));
    }
    if z == 1 {
        let cap = F::cast(DENSITY_RATIO_EXP_CAP);
        let saturated = f_y > cap;
        Ok(DensityRatioGrad {
            q_coef: f_y.min(cap).exp(),
            p_coef: F::zero(),
            saturated,
        })
    } else {
        Ok(DensityRatioGrad {
            q_coef: F::zero(),
            p_coef: F::one(),
            saturated: false,
        })
    }
}
