//! The z / Meixner / generalized-z family.
//!
//! With `x = σt/2π`, the characteristic function is
//! `[B(a + ix, b − ix)/B(a, b)]^{2δ} e^{iμt}`; `δ = 1/2` is the z law of
//! `μ + (σ/2π)·log(G_a/G_b)`, and `a + b = 1` gives the Meixner law.

use crate::error::invalid;
use crate::levy::chunked;
use crate::par::Execution;
use crate::quad::{self, QuadSettings};
use crate::rng;
use crate::special::{abs_gamma_half_sq, digamma, ln_beta_real, ln_gamma_complex, trigamma};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeixnerZParams {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl MeixnerZParams {
    pub fn new(a: f64, b: f64, mu: f64, sigma: f64, delta: f64) -> Result<Self> {
        let ok = [a, b, sigma, delta].iter().all(|v| *v > 0.0 && v.is_finite()) && mu.is_finite();
        if !ok {
            return Err(invalid("z-family parameters need a, b, σ, δ > 0 and finite μ"));
        }
        Ok(Self { a, b, mu, sigma, delta })
    }

    /// The horseshoe case `a = b = 1/2`, `δ = 1/2`.
    pub fn horseshoe(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(0.5, 0.5, mu, sigma, 0.5)
    }

    /// Skewness parameter of the Meixner form, `π(2a − 1)`.
    pub fn c(&self) -> f64 {
        PI * (2.0 * self.a - 1.0)
    }

    /// Parameters of one of `p` equal increments: `(a, b, μ/p, σ, δ/p)`.
    pub fn increment(&self, p: usize) -> Self {
        let p = p as f64;
        Self { mu: self.mu / p, delta: self.delta / p, ..*self }
    }

    pub fn char_fn(&self, t: f64) -> Complex64 {
        let x = self.sigma * t / (2.0 * PI);
        let ln_b = ln_gamma_complex(Complex64::new(self.a, x)) + ln_gamma_complex(Complex64::new(self.b, -x))
            - statrs::function::gamma::ln_gamma(self.a + self.b)
            - ln_beta_real(self.a, self.b);
        (ln_b * (2.0 * self.delta) + Complex64::new(0.0, self.mu * t)).exp()
    }

    /// Meixner density (requires `δ = 1/2` and `a + b = 1`).
    pub fn meixner_density(&self, z: f64) -> Result<f64> {
        if self.delta != 0.5 {
            return Err(Error::Unsupported(format!(
                "closed-form density needs δ = 1/2, got δ = {}",
                self.delta
            )));
        }
        if ((self.a + self.b) - 1.0).abs() > 1e-12 {
            return Err(Error::Unsupported(format!(
                "Meixner form needs a + b = 1, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        let c = self.c();
        let u = (z - self.mu) / self.sigma;
        Ok((0.5 * c).cos() / (self.sigma * PI) * (c * u).exp() * abs_gamma_half_sq(u))
    }

    /// Lévy density of the generalized-z law at `x ≠ 0`.
    pub fn levy_density(&self, x: f64) -> Result<f64> {
        if x == 0.0 || x.is_nan() {
            return Err(Error::Domain("Lévy density has a non-integrable pole at 0".into()));
        }
        let k = 2.0 * PI / self.sigma;
        let (rate, y) = if x > 0.0 { (self.b, x) } else { (self.a, -x) };
        Ok(2.0 * self.delta * (-k * rate * y).exp() / (y * -(-k * y).exp_m1()))
    }

    /// Drift term `A = (σδ/π) ∫₀^{2π/σ} (e^{−bx} − e^{−ax})/(1 − e^{−x}) dx + μ`.
    pub fn drift_term(&self) -> Result<f64> {
        let (a, b) = (self.a, self.b);
        let integrand = |x: f64| {
            if x < 1e-8 {
                a - b
            } else {
                ((-b * x).exp() - (-a * x).exp()) / -(-x).exp_m1()
            }
        };
        let i = quad::finite(integrand, 0.0, 2.0 * PI / self.sigma, QuadSettings::with_rel_tol(1e-12))?;
        Ok(self.sigma * self.delta / PI * i.value + self.mu)
    }

    /// One draw from the law with these parameters.
    ///
    /// Uses `log G_a − ρψ(a) = −Σ_k (G_k − ρ)/(a + k)` with `G_k ~ Ga(ρ, 1)`,
    /// `ρ = 2δ`: the first `terms` summands are drawn exactly and the tail is
    /// replaced by a normal with the exact tail variance. The approximation
    /// is the same for every `δ`, so sums of increments stay consistent.
    pub fn sample<R: Rng + ?Sized>(&self, terms: usize, rng: &mut R) -> f64 {
        let rho = 2.0 * self.delta;
        let g = Gamma::new(rho, 1.0).expect("positive shape");
        let mut acc = rho * (digamma(self.a) - digamma(self.b));
        for k in 0..terms {
            let k = k as f64;
            let ga: f64 = g.sample(rng);
            let gb: f64 = g.sample(rng);
            acc -= (ga - rho) / (self.a + k) - (gb - rho) / (self.b + k);
        }
        let n = terms as f64;
        let tail_var = rho * (trigamma(self.a + n) + trigamma(self.b + n));
        acc += tail_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        self.mu + self.sigma / (2.0 * PI) * acc
    }

    /// `n` draws of the sum of `p` increments with parameters [`Self::increment`].
    pub fn sample_sums(&self, p: usize, n: usize, terms: usize, seed: u64, exec: Execution) -> Vec<f64> {
        let inc = self.increment(p.max(1));
        chunked(exec, n, seed, |rng| (0..p.max(1)).map(|_| inc.sample(terms, rng)).sum())
    }

    /// `p` increments on a unit grid, as a signed increment vector.
    pub fn sample_increments(&self, p: usize, terms: usize, seed: u64) -> Result<crate::levy::IncrementVector> {
        if p == 0 {
            return Err(invalid("need at least one increment"));
        }
        let inc = self.increment(p);
        let mut r = rng::seeded(seed);
        let values = (0..p).map(|_| inc.sample(terms, &mut r)).collect();
        crate::levy::IncrementVector::new(values, 1.0 / p as f64, crate::levy::Interpretation::LogVariance)
    }
}
