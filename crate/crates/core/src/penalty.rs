//! Penalties `ν ψ(f(β))` generated by subordinators.
//!
//! `exp{−ν ψ(f(β))}` is the Laplace transform of `T(ν)` at `f(β)`, so with
//! `f(β) = β²/2` it is (up to normalization) a normal scale mixture with
//! precision `T`; the penalty is the negative log prior.

use crate::error::invalid;
use crate::levy::{Family, SubordinatorSpec};
use crate::quad::{self, QuadSettings};
use crate::{Error, Result};

/// Floor applied to `|β|` when an EM weight would otherwise be infinite.
pub const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    /// `t = β²/2`
    HalfSquare,
    /// `t = |β|`
    Abs,
}

impl Transform {
    pub fn apply(&self, beta: f64) -> f64 {
        match self {
            Transform::HalfSquare => 0.5 * beta * beta,
            Transform::Abs => beta.abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySpec {
    family: Family,
    transform: Transform,
    nu: f64,
}

impl PenaltySpec {
    pub fn new(family: Family, transform: Transform, nu: f64) -> Result<Self> {
        family.validate()?;
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid(format!("ν must be positive, got {nu}")));
        }
        Ok(Self { family, transform, nu })
    }

    /// The lasso `ν|β|` as a stable(1/2) mixture.
    ///
    /// With `ψ(t) = √t`, `e^{−ν|β|}` is the Laplace transform at `β²/2` of
    /// the stable(1/2) subordinator observed at time `√2·ν`.
    pub fn lasso(nu: f64) -> Result<Self> {
        Self::new(Family::Stable { alpha: 0.5 }, Transform::HalfSquare, std::f64::consts::SQRT_2 * nu)
    }

    /// Ridge `ν β²/2`: the drift subordinator with a half-square transform.
    pub fn ridge(nu: f64) -> Result<Self> {
        Self::new(Family::Drift, Transform::HalfSquare, nu)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// The subordinator whose time-`ν` law mixes this penalty.
    pub fn subordinator(&self) -> SubordinatorSpec {
        SubordinatorSpec::new(self.family, self.nu).expect("validated at construction")
    }

    pub fn penalty_value(&self, beta: f64) -> f64 {
        self.nu * self.family.psi(self.transform.apply(beta))
    }

    /// `E[T | β] = ν ψ′(f(β))`.
    pub fn conditional_moment(&self, beta: f64) -> Result<f64> {
        let v = self.nu * self.family.psi_prime(self.transform.apply(beta));
        if !v.is_finite() {
            return Err(Error::Pole(format!(
                "E[T | β] diverges like {} as β → 0",
                match self.family {
                    Family::Stable { alpha } => format!("|β|^{}", self.exponent_at_zero(alpha)),
                    _ => "an unbounded power".to_string(),
                }
            )));
        }
        Ok(v)
    }

    fn exponent_at_zero(&self, alpha: f64) -> f64 {
        match self.transform {
            Transform::HalfSquare => 2.0 * (alpha - 1.0),
            Transform::Abs => alpha - 1.0,
        }
    }

    /// EM weight: the conditional moment with `|β|` floored at [`WEIGHT_FLOOR`].
    pub fn em_weight(&self, beta: f64) -> f64 {
        let b = beta.abs().max(WEIGHT_FLOOR);
        self.nu * self.family.psi_prime(self.transform.apply(b))
    }

    /// Derivative of the penalty in `β` (away from the kink at zero for `Abs`).
    pub fn derivative(&self, beta: f64) -> f64 {
        let t = self.transform.apply(beta);
        let chain = match self.transform {
            Transform::HalfSquare => beta,
            Transform::Abs => beta.signum(),
        };
        self.nu * self.family.psi_prime(t) * chain
    }
}

/// The normalized prior `p(β) = C_ν exp{−ν ψ(f(β))}`.
#[derive(Clone, Copy, Debug)]
pub struct PriorDensity {
    spec: PenaltySpec,
    log_norm: f64,
}

impl PriorDensity {
    pub fn new(spec: PenaltySpec) -> Result<Self> {
        // Tail test: −log p must grow faster than log|β|.
        let (b1, b2) = (1e6, 1e8);
        let slope = (spec.penalty_value(b2) - spec.penalty_value(b1)) / (b2 / b1).ln();
        if !(slope > 1.0 + 1e-6) {
            return Err(Error::NotIntegrable(format!(
                "exp(−penalty) decays like |β|^(−{slope:.4}) in the tails"
            )));
        }
        let half = quad::to_infinity(|b| (-spec.penalty_value(b)).exp(), 0.0, QuadSettings::with_rel_tol(1e-12))
            .or_else(|_| {
                quad::to_infinity(|b| (-spec.penalty_value(b)).exp(), 0.0, QuadSettings::with_rel_tol(1e-10))
            })?;
        Ok(Self { spec, log_norm: -(2.0 * half.value).ln() })
    }

    pub fn spec(&self) -> &PenaltySpec {
        &self.spec
    }

    /// `log C_ν`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, beta: f64) -> f64 {
        self.log_norm - self.spec.penalty_value(beta)
    }

    pub fn density(&self, beta: f64) -> f64 {
        self.log_density(beta).exp()
    }
}

/// `g(β) = χ{Σ_j ν ψ(f(β_j))}` where `χ` is the exponent of an outer
/// subordinator observed at time one.
///
/// The inner `ν` fixes the scale at which the outer subordinator acts; the
/// usual construction takes an inner penalty with `ν = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixturePenaltySpec {
    outer: SubordinatorSpec,
    inner: PenaltySpec,
}

impl MixturePenaltySpec {
    pub fn new(outer: SubordinatorSpec, inner: PenaltySpec) -> Result<Self> {
        if outer.time() != 1.0 {
            return Err(invalid("outer subordinator must be observed at time 1"));
        }
        Ok(Self { outer, inner })
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let inner: f64 = beta.iter().map(|b| self.inner.penalty_value(*b)).sum();
        self.outer.family().psi(inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lasso_is_nu_abs_beta() {
        let l = PenaltySpec::lasso(2.0).unwrap();
        assert_relative_eq!(l.penalty_value(3.0), 6.0, max_relative = 1e-14);
        assert_relative_eq!(l.conditional_moment(2.0).unwrap(), 1.0, max_relative = 1e-14);
        let l1 = PenaltySpec::lasso(1.0).unwrap();
        assert_relative_eq!(l1.conditional_moment(2.0).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn raw_stable_half_is_scaled_by_root_two() {
        let s = PenaltySpec::new(Family::Stable { alpha: 0.5 }, Transform::HalfSquare, 2.0).unwrap();
        assert_relative_eq!(s.penalty_value(3.0), 2.0 * 4.5f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn normal_gamma_values() {
        let g = PenaltySpec::new(Family::Gamma, Transform::HalfSquare, 1.0).unwrap();
        assert_eq!(g.penalty_value(0.0), 0.0);
        assert_relative_eq!(g.penalty_value(2.0), 3f64.ln(), max_relative = 1e-15);
        let g2 = PenaltySpec::new(Family::Gamma, Transform::HalfSquare, 2.0).unwrap();
        assert_relative_eq!(g2.conditional_moment(0.0).unwrap(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn ridge_weight_is_constant() {
        let r = PenaltySpec::ridge(1.7).unwrap();
        for b in [-3.0, 0.0, 0.2, 10.0] {
            assert_eq!(r.conditional_moment(b).unwrap(), 1.7);
        }
    }

    #[test]
    fn pole_is_reported_and_floored() {
        let l = PenaltySpec::lasso(1.0).unwrap();
        assert!(matches!(l.conditional_moment(0.0), Err(Error::Pole(_))));
        assert_relative_eq!(l.em_weight(0.0), 1.0 / WEIGHT_FLOOR, max_relative = 1e-12);
    }

    #[test]
    fn lasso_prior_normalizer() {
        let p = PriorDensity::new(PenaltySpec::lasso(1.0).unwrap()).unwrap();
        assert_relative_eq!(p.log_density(0.0), -(2f64.ln()), max_relative = 1e-11);
        assert_relative_eq!(p.log_density(1.5), -(2f64.ln()) - 1.5, max_relative = 1e-11);
    }

    #[test]
    fn improper_priors_are_rejected() {
        let heavy = PenaltySpec::new(Family::Gamma, Transform::HalfSquare, 0.5).unwrap();
        assert!(matches!(PriorDensity::new(heavy), Err(Error::NotIntegrable(_))));
        let cp = PenaltySpec::new(Family::CompoundPoisson { jump_rate: 1.0, jump_sd: 1.0 }, Transform::Abs, 1.0)
            .unwrap();
        assert!(PriorDensity::new(cp).is_err());
    }

    #[test]
    fn mixture_penalty_examples() {
        let outer = SubordinatorSpec::new(Family::Stable { alpha: 0.5 }, 1.0).unwrap();
        let m = MixturePenaltySpec::new(outer, PenaltySpec::lasso(1.0).unwrap()).unwrap();
        assert_relative_eq!(m.value(&[1.0, 1.0]), 2f64.sqrt(), max_relative = 1e-14);
        assert_eq!(m.value(&[0.0, 0.0, 0.0]), 0.0);
        assert!((m.value(&[1.0, 0.0]) + m.value(&[0.0, 1.0]) - 2.0).abs() < 1e-14);
    }
}
