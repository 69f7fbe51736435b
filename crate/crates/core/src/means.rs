//! Posterior means under normal scale-mixture priors with a normal likelihood.
//!
//! For a prior `β | T ~ N(0, 1/T)` with precision law `q(T)` and observation
//! `y | β ~ N(β, σ²)` there are three evaluators:
//!
//! * [`MeansProblem::posterior_mean_ps`]: `y + σ² d/dy log m(y)`;
//! * [`MeansProblem::posterior_mean_levy`]: the size-biased form
//!   `−E_q[T⁻¹]·(m*(y)/m(y))·d/dy log m*(y)`, where `m*` is the marginal
//!   under `q*(T) ∝ T⁻¹ q(T)`. The leading minus sign makes the identity hold
//!   with the usual orientation of `y`;
//! * [`MeansProblem::posterior_mean_oracle`]: direct quadrature in `β`.
//!
//! For a penalty prior `p(β) ∝ exp{−ν ψ(β²/2)}` the precision law is
//! `q(T) ∝ T^{−1/2} g_ν(T)` with `g_ν` the density of the subordinator at
//! time `ν`.

use crate::error::invalid;
use crate::levy::Family;
use crate::par::{self, Execution};
use crate::penalty::{PenaltySpec, Transform};
use crate::quad::{self, QuadSettings};
use crate::special::norm_pdf;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShrinkagePrior {
    /// `p(β) ∝ exp{−penalty(β)}` for a half-square penalty.
    Penalty(PenaltySpec),
    /// `β | λ² ~ N(0, λ²)` with `λ² ~ inverted-beta(a, b)`; `(1/2, 1/2)` is
    /// the horseshoe.
    InvertedBeta { a: f64, b: f64 },
}

impl ShrinkagePrior {
    pub fn horseshoe() -> Self {
        ShrinkagePrior::InvertedBeta { a: 0.5, b: 0.5 }
    }
}

/// Law of the prior precision `T`.
#[derive(Clone, Copy, Debug)]
enum PrecisionLaw {
    Point(f64),
    /// `q ∝ T^{shape−1} e^{−T}`
    Gamma { shape: f64 },
    /// `q ∝ T^{−2} e^{−c/(2T)}`
    StableHalf { c: f64 },
    /// `q ∝ T^{−2} exp{−(s − rT)²/(2T)}`
    InverseGaussian { s: f64, r: f64 },
    /// `q ∝ T^{b−1} (1 + T)^{−a−b}`
    InvertedBeta { a: f64, b: f64 },
}

impl PrecisionLaw {
    fn log_unnorm(&self, t: f64) -> f64 {
        match *self {
            PrecisionLaw::Point(_) => unreachable!("point mass has no density"),
            PrecisionLaw::Gamma { shape } => (shape - 1.0) * t.ln() - t,
            PrecisionLaw::StableHalf { c } => -2.0 * t.ln() - 0.5 * c / t,
            PrecisionLaw::InverseGaussian { s, r } => {
                let d = s - r * t;
                -2.0 * t.ln() - d * d / (2.0 * t)
            }
            PrecisionLaw::InvertedBeta { a, b } => (b - 1.0) * t.ln() - (a + b) * t.ln_1p(),
        }
    }

    fn inverse_mean_is_finite(&self) -> bool {
        match *self {
            PrecisionLaw::Gamma { shape } => shape > 1.0,
            PrecisionLaw::InvertedBeta { b, .. } => b > 1.0,
            _ => true,
        }
    }
}

/// A log-scale density known up to a constant, with its normalizer and the
/// location of its bulk.
#[derive(Clone, Copy, Debug)]
struct Mixing {
    law: PrecisionLaw,
    /// extra power of `T` (−1 for the size-biased law)
    power: f64,
    log_norm: f64,
    center: f64,
}

impl Mixing {
    fn new(law: PrecisionLaw, power: f64, settings: QuadSettings) -> Result<Self> {
        // Locate the peak of q(T)·T on the log scale to anchor the quadrature.
        let lw = |u: f64| law.log_unnorm(u.exp()) + (power + 1.0) * u;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=600 {
            let u = -60.0 + 0.2 * i as f64;
            let v = lw(u);
            if v > best.0 {
                best = (v, u);
            }
        }
        let (peak, u0) = best;
        let center = u0.exp();
        let z = quad::positive_log_scale(|t| (law.log_unnorm(t) + power * t.ln() - peak).exp(), center, settings)?;
        Ok(Self { law, power, log_norm: z.value.ln() + peak, center })
    }

    fn density(&self, t: f64) -> f64 {
        (self.law.log_unnorm(t) + self.power * t.ln() - self.log_norm).exp()
    }

    fn expect<F: Fn(f64) -> f64>(&self, h: F, settings: QuadSettings) -> Result<f64> {
        Ok(quad::positive_log_scale(|t| h(t) * self.density(t), self.center, settings)?.value)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MeansProblem {
    prior: ShrinkagePrior,
    sigma: f64,
    settings: QuadSettings,
    law: PrecisionLaw,
    mixing: Option<Mixing>,
    size_biased: Option<Mixing>,
    inverse_mean: Option<f64>,
}

impl MeansProblem {
    pub fn new(prior: ShrinkagePrior, noise_sd: f64) -> Result<Self> {
        Self::with_settings(prior, noise_sd, QuadSettings { rel_tol: 1e-13, abs_tol: 0.0, max_subdivisions: 4000 })
    }

    pub fn with_settings(prior: ShrinkagePrior, noise_sd: f64, settings: QuadSettings) -> Result<Self> {
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(invalid("noise sd must be positive"));
        }
        let law = precision_law(&prior)?;
        let (mixing, size_biased, inverse_mean) = match law {
            PrecisionLaw::Point(t) => (None, None, Some(1.0 / t)),
            _ => {
                let m = Mixing::new(law, 0.0, settings)?;
                if law.inverse_mean_is_finite() {
                    let inv = m.expect(|t| 1.0 / t, settings)?;
                    let star = Mixing::new(law, -1.0, settings)?;
                    (Some(m), Some(star), Some(inv))
                } else {
                    (Some(m), None, None)
                }
            }
        };
        Ok(Self { prior, sigma: noise_sd, settings, law, mixing, size_biased, inverse_mean })
    }

    pub fn prior(&self) -> ShrinkagePrior {
        self.prior
    }

    pub fn noise_sd(&self) -> f64 {
        self.sigma
    }

    /// `E_q[T⁻¹]`, the prior variance of `β`, when finite.
    pub fn inverse_precision_mean(&self) -> Option<f64> {
        self.inverse_mean
    }

    /// Density of the precision law (`None` for a point mass).
    pub fn precision_density(&self, t: f64) -> Option<f64> {
        self.mixing.map(|m| m.density(t))
    }

    /// `m(y)`, or the size-biased `m*(y)` when `size_biased` is set.
    pub fn marginal_density(&self, y: f64, size_biased: bool) -> Result<f64> {
        let s2 = self.sigma * self.sigma;
        let normal = |t: f64| {
            let v = s2 + 1.0 / t;
            norm_pdf(y / v.sqrt()) / v.sqrt()
        };
        if let PrecisionLaw::Point(t) = self.law {
            return Ok(normal(t));
        }
        let mix = if size_biased {
            self.size_biased
                .ok_or_else(|| Error::Unsupported("E[1/T] is infinite; the size-biased law does not exist".into()))?
        } else {
            self.mixing.expect("density law")
        };
        mix.expect(normal, self.settings)
    }

    fn log_marginal_slope(&self, y: f64, size_biased: bool) -> Result<(f64, f64)> {
        let h = 1e-5 * y.abs().max(1.0);
        let up = self.marginal_density(y + h, size_biased)?;
        let down = self.marginal_density(y - h, size_biased)?;
        Ok(((up.ln() - down.ln()) / (2.0 * h), (up - down) / (2.0 * h)))
    }

    /// `y + σ² d/dy log m(y)`.
    pub fn posterior_mean_ps(&self, y: f64) -> Result<f64> {
        let (slope, _) = self.log_marginal_slope(y, false)?;
        Ok(y + self.sigma * self.sigma * slope)
    }

    /// Size-biased representation of the posterior mean.
    pub fn posterior_mean_levy(&self, y: f64) -> Result<f64> {
        let inv = self
            .inverse_mean
            .ok_or_else(|| Error::Unsupported("E[1/T] is infinite under this prior".into()))?;
        let m = self.marginal_density(y, false)?;
        let (_, dm_star) = self.log_marginal_slope(y, true)?;
        // −E[1/T] · (m*/m) · d log m* = −E[1/T] · m*′ / m
        Ok(-inv * dm_star / m)
    }

    /// Unnormalized prior density of `β`.
    fn prior_density(&self, beta: f64) -> Result<f64> {
        match self.prior {
            ShrinkagePrior::Penalty(spec) => Ok((-spec.penalty_value(beta)).exp()),
            ShrinkagePrior::InvertedBeta { .. } => {
                let m = self.mixing.expect("density law");
                m.expect(|t| (t / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * t * beta * beta).exp(), self.settings)
            }
        }
    }

    /// `∫ β φ_σ(y − β) p(β) dβ / ∫ φ_σ(y − β) p(β) dβ` by direct quadrature.
    pub fn posterior_mean_oracle(&self, y: f64) -> Result<f64> {
        let s = self.sigma;
        let breaks = [y.min(0.0), y.max(0.0)];
        let settings = QuadSettings { rel_tol: 1e-12, ..self.settings };
        let weight = |b: f64| -> f64 {
            let p = self.prior_density(b).unwrap_or(f64::NAN);
            norm_pdf((y - b) / s) / s * p
        };
        let den = quad::real_line(&weight, &breaks, settings)?.value;
        let num = quad::real_line(|b| b * weight(b), &breaks, settings)?.value;
        Ok(num / den)
    }

    /// Evaluates all three posterior means on a grid of `y` values.
    pub fn shrinkage_curve(&self, ys: &[f64], exec: Execution) -> Result<Vec<CurvePoint>> {
        par::map(exec, ys, |&y| -> Result<CurvePoint> {
            Ok(CurvePoint {
                y,
                ps: self.posterior_mean_ps(y)?,
                levy: if self.inverse_mean.is_some() { Some(self.posterior_mean_levy(y)?) } else { None },
                oracle: self.posterior_mean_oracle(y)?,
            })
        })
        .into_iter()
        .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub y: f64,
    pub ps: f64,
    pub levy: Option<f64>,
    pub oracle: f64,
}

fn precision_law(prior: &ShrinkagePrior) -> Result<PrecisionLaw> {
    match *prior {
        ShrinkagePrior::InvertedBeta { a, b } => {
            if !(a > 0.0 && b > 0.0) {
                return Err(invalid("inverted-beta parameters must be positive"));
            }
            // λ² ~ IB(a, b) means T = 1/λ² ~ IB(b, a)
            Ok(PrecisionLaw::InvertedBeta { a, b })
        }
        ShrinkagePrior::Penalty(spec) => {
            if spec.transform() != Transform::HalfSquare {
                return Err(invalid("posterior means need a half-square penalty"));
            }
            let s = spec.nu();
            match spec.family() {
                Family::Drift => Ok(PrecisionLaw::Point(s)),
                Family::Gamma => {
                    if s <= 0.5 {
                        return Err(Error::NotIntegrable(format!("normal-gamma prior needs ν > 1/2, got {s}")));
                    }
                    Ok(PrecisionLaw::Gamma { shape: s - 0.5 })
                }
                Family::Stable { alpha } if alpha == 0.5 => Ok(PrecisionLaw::StableHalf { c: 0.5 * s * s }),
                Family::InverseGaussian { rate } => Ok(PrecisionLaw::InverseGaussian { s, r: rate }),
                other => Err(Error::Unsupported(format!(
                    "no closed-form mixing density for {other:?}"
                ))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_prior_closed_forms() {
        let p = MeansProblem::new(ShrinkagePrior::Penalty(PenaltySpec::ridge(1.0).unwrap()), 1.0).unwrap();
        assert_relative_eq!(p.marginal_density(0.0, false).unwrap(), 1.0 / (4.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p.posterior_mean_ps(2.0).unwrap(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(p.posterior_mean_levy(2.0).unwrap(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(p.posterior_mean_oracle(3.0).unwrap(), 1.5, max_relative = 1e-10);
    }

    #[test]
    fn horseshoe_has_no_size_biased_form() {
        let p = MeansProblem::new(ShrinkagePrior::horseshoe(), 1.0).unwrap();
        assert!(p.inverse_precision_mean().is_none());
        assert!(p.posterior_mean_levy(1.0).is_err());
        assert!(p.posterior_mean_ps(1.0).is_ok());
    }
}
