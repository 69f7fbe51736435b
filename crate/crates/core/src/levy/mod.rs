//! Subordinators: Laplace exponents, Lévy densities, marginal laws and exact
//! increment samplers, plus the compound-Poisson two-groups generator and the
//! Meixner / z / generalized-z family (see [`gz`]).
//!
//! A subordinator `T(s)` is described by its Laplace exponent,
//! `E[e^{−t T(s)}] = e^{−s ψ(t)}`. All exponents here are per unit time.

pub mod gz;

use crate::error::invalid;
use crate::par::{self, Execution};
use crate::rng;
use crate::special::{erfcx, ln_gamma, norm_pdf};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian, Poisson, StandardNormal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub use gz::MeixnerZParams;

/// Subordinator families.
///
/// `Drift` is the degenerate subordinator `T(s) = s` (`ψ(t) = t`); it gives
/// ridge penalties and normal priors. `CompoundPoisson` jumps are the
/// magnitudes `|J|` of `J ~ N(0, η²)`, which keeps the process nondecreasing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Gamma,
    Stable { alpha: f64 },
    InverseGaussian { rate: f64 },
    CompoundPoisson { jump_rate: f64, jump_sd: f64 },
    Drift,
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Stable { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(invalid(format!("stable index must lie in (0, 1), got {alpha}")))
            }
            Family::InverseGaussian { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(invalid(format!("inverse-Gaussian rate must be positive, got {rate}")))
            }
            Family::CompoundPoisson { jump_rate, jump_sd }
                if !(jump_rate > 0.0 && jump_sd > 0.0 && jump_rate.is_finite() && jump_sd.is_finite()) =>
            {
                Err(invalid("compound-Poisson rate and jump sd must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Laplace exponent `ψ(t)` for `t ≥ 0`.
    pub fn psi(&self, t: f64) -> f64 {
        match *self {
            Family::Gamma => t.ln_1p(),
            Family::Stable { alpha } => t.powf(alpha),
            Family::InverseGaussian { rate } => {
                // √(ν² + 2t) − ν without cancellation for small t
                2.0 * t / ((rate * rate + 2.0 * t).sqrt() + rate)
            }
            Family::CompoundPoisson { jump_rate, jump_sd } => {
                jump_rate * (1.0 - erfcx(jump_sd * t * FRAC_1_SQRT_2))
            }
            Family::Drift => t,
        }
    }

    /// `ψ′(t)`; infinite at `t = 0` for stable families.
    pub fn psi_prime(&self, t: f64) -> f64 {
        match *self {
            Family::Gamma => 1.0 / (1.0 + t),
            Family::Stable { alpha } => alpha * t.powf(alpha - 1.0),
            Family::InverseGaussian { rate } => 1.0 / (rate * rate + 2.0 * t).sqrt(),
            Family::CompoundPoisson { jump_rate, jump_sd } => {
                let x = jump_sd * t * FRAC_1_SQRT_2;
                jump_rate * (jump_sd * (2.0 / PI).sqrt() - jump_sd * jump_sd * t * erfcx(x))
            }
            Family::Drift => 1.0,
        }
    }

    /// Lévy density `μ(x)` for `x > 0` (zero for the drift family).
    pub fn levy_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Family::Gamma => (-x).exp() / x,
            Family::Stable { alpha } => alpha / ln_gamma(1.0 - alpha).exp() * x.powf(-1.0 - alpha),
            Family::InverseGaussian { rate } => {
                (2.0 * PI).sqrt().recip() * x.powf(-1.5) * (-0.5 * rate * rate * x).exp()
            }
            Family::CompoundPoisson { jump_rate, jump_sd } => 2.0 * jump_rate * norm_pdf(x / jump_sd) / jump_sd,
            Family::Drift => 0.0,
        }
    }

    /// Density of `T(s)` where it has a closed form.
    pub fn marginal_density(&self, s: f64, x: f64) -> Option<f64> {
        if x <= 0.0 {
            return Some(0.0);
        }
        match *self {
            Family::Gamma => Some(((s - 1.0) * x.ln() - x - ln_gamma(s)).exp()),
            Family::Stable { alpha } if alpha == 0.5 => {
                // Lévy law with E e^{−uT} = e^{−s√u}
                let c = 0.5 * s * s;
                Some((c / (2.0 * PI)).sqrt() * x.powf(-1.5) * (-c / (2.0 * x)).exp())
            }
            Family::InverseGaussian { rate } => {
                let d = s - rate * x;
                Some(s / (2.0 * PI * x * x * x).sqrt() * (-d * d / (2.0 * x)).exp())
            }
            _ => None,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        match *self {
            Family::Gamma => Gamma::new(dt, 1.0).expect("positive shape").sample(rng),
            Family::Stable { alpha } => dt.powf(1.0 / alpha) * positive_stable(alpha, rng),
            Family::InverseGaussian { rate } => {
                InverseGaussian::new(dt / rate, dt * dt).expect("positive parameters").sample(rng)
            }
            Family::CompoundPoisson { jump_rate, jump_sd } => {
                let n = Poisson::new(jump_rate * dt).expect("positive mean").sample(rng) as u64;
                (0..n).map(|_| (jump_sd * rng.sample::<f64, _>(StandardNormal)).abs()).sum()
            }
            Family::Drift => dt,
        }
    }
}

/// Positive stable variable with `E e^{−tX} = e^{−t^α}` (Kanter's form of the
/// Chambers–Mallows–Stuck construction).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let e: f64 = rng.sample(Exp1);
    let a = ((alpha * u).sin() / u.sin()).powf(1.0 / (1.0 - alpha)) * ((1.0 - alpha) * u).sin() / (alpha * u).sin();
    (a / e).powf((1.0 - alpha) / alpha)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubordinatorSpec {
    family: Family,
    time: f64,
}

impl SubordinatorSpec {
    pub fn new(family: Family, time: f64) -> Result<Self> {
        family.validate()?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(invalid(format!("time must be positive, got {time}")));
        }
        Ok(Self { family, time })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn laplace_exponent(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("Laplace exponent needs t ≥ 0, got {t}")));
        }
        Ok(self.family.psi(t))
    }

    /// `E[e^{−t T(s)}] = e^{−s ψ(t)}`.
    pub fn laplace_transform(&self, t: f64) -> Result<f64> {
        Ok((-self.time * self.laplace_exponent(t)?).exp())
    }

    pub fn marginal_density(&self, x: f64) -> Option<f64> {
        self.family.marginal_density(self.time, x)
    }

    /// `p` independent increments of `T` over the grid `s·j/p`.
    pub fn sample_increments(&self, p: usize, seed: u64) -> Result<IncrementVector> {
        if p == 0 {
            return Err(invalid("need at least one increment"));
        }
        let dt = self.time / p as f64;
        let mut rng = rng::seeded(seed);
        let values = (0..p).map(|_| self.family.draw(dt, &mut rng)).collect();
        IncrementVector::new(values, dt, Interpretation::Variance)
    }

    /// `n` independent draws of `T(s)`, each built as a sum of `p` increments.
    ///
    /// Draw `i` uses stream `i` of `seed`, so the output is the same for every
    /// execution mode.
    pub fn sample_marginals(&self, p: usize, n: usize, seed: u64, exec: Execution) -> Vec<f64> {
        let dt = self.time / p.max(1) as f64;
        chunked(exec, n, seed, |rng| (0..p.max(1)).map(|_| self.family.draw(dt, rng)).sum())
    }
}

/// Fills `n` values in blocks of 4096, one random stream per block.
pub(crate) fn chunked<F>(exec: Execution, n: usize, seed: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut rng::Rng) -> f64 + Sync + Send,
{
    const BLOCK: usize = 4096;
    let blocks = n.div_ceil(BLOCK);
    par::map_range(exec, blocks, |b| {
        let mut rng = rng::stream(seed, b as u64);
        let len = BLOCK.min(n - b * BLOCK);
        (0..len).map(|_| f(&mut rng)).collect::<Vec<_>>()
    })
    .concat()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpretation {
    Variance,
    Precision,
    LogVariance,
    /// Signed increments of a pure-jump process (coefficients themselves).
    Signed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncrementVector {
    values: Vec<f64>,
    grid_step: f64,
    interpretation: Interpretation,
}

impl IncrementVector {
    pub fn new(values: Vec<f64>, grid_step: f64, interpretation: Interpretation) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("increment vector must be nonempty"));
        }
        if !(grid_step > 0.0) {
            return Err(invalid("grid step must be positive"));
        }
        if matches!(interpretation, Interpretation::Variance | Interpretation::Precision)
            && values.iter().any(|v| *v < 0.0)
        {
            return Err(invalid("variance or precision increments must be nonnegative"));
        }
        Ok(Self { values, grid_step, interpretation })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn interpretation(&self) -> Interpretation {
        self.interpretation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reinterprets the same numbers, e.g. variances as precisions.
    pub fn with_interpretation(self, interpretation: Interpretation) -> Result<Self> {
        Self::new(self.values, self.grid_step, interpretation)
    }
}

/// Increments of `Z(s) = Σ_{i ≤ N(s)} J_i` with `N` Poisson of rate `θ` and
/// `J_i ~ N(0, η²)`, on a grid of step `Δ = delta`.
///
/// A slot is exactly zero when it holds no jump, which happens with
/// probability `e^{−θΔ}`.
pub fn sample_two_groups(theta: f64, delta: f64, eta: f64, p: usize, seed: u64) -> Result<IncrementVector> {
    if !(theta > 0.0 && delta > 0.0 && eta >= 0.0) || p == 0 {
        return Err(invalid("two-groups sampler needs θ, Δ > 0, η ≥ 0 and p ≥ 1"));
    }
    let poisson = Poisson::new(theta * delta).map_err(|e| invalid(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let values = (0..p)
        .map(|_| {
            let k: f64 = poisson.sample(&mut rng);
            if k == 0.0 {
                0.0
            } else {
                // sum of k normals in one draw
                eta * k.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect();
    IncrementVector::new(values, delta, Interpretation::Signed)
}

/// Observes the interlacing process `Y = Z + σ_p W` on the same grid as `z`:
/// each slot gains independent `N(0, σ_p² Δ)` noise.
pub fn observe_interlacing(z: &IncrementVector, noise_scale: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_scale >= 0.0) {
        return Err(invalid("noise scale must be nonnegative"));
    }
    let sd = noise_scale * z.grid_step().sqrt();
    let mut rng = rng::seeded(seed);
    Ok(z.values().iter().map(|b| b + sd * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Mixing density of the Normal–Lamperti law.
pub fn lamperti_mixing_density(alpha: f64, v: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("Lamperti index must lie in (0, 1), got {alpha}")));
    }
    if !(v > 0.0) {
        return Err(Error::Domain(format!("Lamperti density needs v > 0, got {v}")));
    }
    let va = v.powf(alpha);
    let (s, c) = (PI * alpha).sin_cos();
    Ok(s / PI * v.powf(alpha - 1.0) / (va * va + 2.0 * va * c + 1.0))
}
