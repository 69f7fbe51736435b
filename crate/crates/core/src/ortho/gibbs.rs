//! Global-local Gibbs sampler in the orthogonalized coordinates.
//!
//! Model: `α̂_j | α_j, σ² ~ N(α_j, σ²/d_j²)` and
//! `α_j | λ_j², τ², σ² ~ N(0, σ²τ²λ_j²)`. Half-Cauchy scales are handled with
//! the inverse-gamma auxiliary representation, so every update is a
//! standard draw.

use super::SvdModel;
use crate::error::invalid;
use crate::par::{self, Execution};
use crate::rng::{self, Rng};
use crate::stats::quantile_sorted;
use crate::{Error, Result};
use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

#[derive(Clone, Debug, PartialEq)]
pub enum LocalPrior {
    /// `λ_j ~ C⁺(0, 1)`.
    HalfCauchy,
    /// Fixed `λ_j²`, one per component.
    Fixed(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GlobalPrior {
    /// `τ ~ C⁺(0, 1)`.
    HalfCauchy,
    /// Fixed `τ²`.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoisePrior {
    /// `p(σ²) ∝ 1/σ²`.
    Jeffreys,
    /// Fixed `σ²`.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub local: LocalPrior,
    pub global: GlobalPrior,
    pub noise: NoisePrior,
    /// Central credible level for the κ intervals.
    pub level: f64,
    pub keep_draws: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iterations: 10_000,
            burn_in: 2_000,
            thin: 1,
            seed: 42,
            local: LocalPrior::HalfCauchy,
            global: GlobalPrior::HalfCauchy,
            noise: NoisePrior::Jeffreys,
            level: 0.75,
            keep_draws: false,
        }
    }
}

impl GibbsConfig {
    fn validate(&self, r: usize) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(invalid("burn-in must be smaller than the number of iterations"));
        }
        if self.thin == 0 {
            return Err(invalid("thinning interval must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid("credible level must lie in (0, 1)"));
        }
        if let LocalPrior::Fixed(v) = &self.local {
            if v.len() != r {
                return Err(invalid(format!("expected {r} fixed local scales, got {}", v.len())));
            }
            if v.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return Err(invalid("fixed local scales must be positive and finite"));
            }
        }
        if let GlobalPrior::Fixed(t) = self.global {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("fixed τ² must be positive and finite"));
            }
        }
        if let NoisePrior::Fixed(s) = self.noise {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid("fixed σ² must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Retained post-burn-in draws.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Draws {
    pub alpha: Vec<DVector<f64>>,
    pub lambda2: Vec<DVector<f64>>,
    pub kappa: Vec<DVector<f64>>,
    pub tau2: Vec<f64>,
    pub sigma2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    /// Posterior mean of `κ_j`.
    pub kappa_fb: DVector<f64>,
    pub kappa_lower: DVector<f64>,
    pub kappa_upper: DVector<f64>,
    pub level: f64,
    /// Posterior mean of `α`.
    pub alpha_mean: DVector<f64>,
    /// Posterior mean of the conditional means `m_j = κ_j α̂_j`.
    pub m_mean: DVector<f64>,
    pub tau2_mean: f64,
    pub sigma2_mean: f64,
    pub kept: usize,
    pub draws: Option<Draws>,
}

struct State {
    alpha: DVector<f64>,
    lambda2: DVector<f64>,
    xi: DVector<f64>,
    tau2: f64,
    zeta: f64,
    sigma2: f64,
}

/// `IG(shape, rate)` as `rate / Gamma(shape, 1)`.
fn inv_gamma(shape: &Gamma<f64>, rate: f64, rng: &mut Rng) -> f64 {
    rate / shape.sample(rng)
}

fn inv_gamma_one(rate: f64, rng: &mut Rng) -> f64 {
    let e: f64 = Exp1.sample(rng);
    rate / e
}

pub fn gibbs_fit(model: &SvdModel, config: &GibbsConfig) -> Result<ChainSummary> {
    run_chain(model, config, rng::seeded(config.seed))
}

/// Independent chains on distinct random streams of `config.seed`.
pub fn gibbs_fit_chains(model: &SvdModel, config: &GibbsConfig, chains: usize, exec: Execution) -> Result<Vec<ChainSummary>> {
    par::try_map_range(exec, chains, |c| run_chain(model, config, rng::stream(config.seed, c as u64 + 1)))
}

fn run_chain(model: &SvdModel, config: &GibbsConfig, mut rng: Rng) -> Result<ChainSummary> {
    let r = model.rank();
    if r == 0 {
        return Err(invalid("model has rank zero"));
    }
    config.validate(r)?;
    let d2: DVector<f64> = model.singular().map(|d| d * d);
    let ah = model.alpha_hat();
    let n = model.n() as f64;

    let total_ss = model.residual_ss() + d2.iter().zip(ah.iter()).map(|(d, a)| d * a * a).sum::<f64>();
    let mut st = State {
        alpha: ah.clone(),
        lambda2: match &config.local {
            LocalPrior::Fixed(v) => DVector::from_column_slice(v),
            LocalPrior::HalfCauchy => DVector::from_element(r, 1.0),
        },
        xi: DVector::from_element(r, 1.0),
        tau2: match config.global {
            GlobalPrior::Fixed(t) => t,
            GlobalPrior::HalfCauchy => 1.0,
        },
        zeta: 1.0,
        sigma2: match config.noise {
            NoisePrior::Fixed(s) => s,
            NoisePrior::Jeffreys => (total_ss / n).max(f64::MIN_POSITIVE.sqrt()),
        },
    };

    let sigma_shape = Gamma::new((n + r as f64) / 2.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let tau_shape = Gamma::new((r as f64 + 1.0) / 2.0, 1.0).map_err(|e| invalid(e.to_string()))?;

    let capacity = (config.iterations - config.burn_in).div_ceil(config.thin);
    let mut kappa_draws: Vec<Vec<f64>> = vec![Vec::with_capacity(capacity); r];
    let mut draws = config.keep_draws.then(Draws::default);
    let mut kappa_sum = DVector::zeros(r);
    let mut m_sum = DVector::zeros(r);
    let mut alpha_sum = DVector::zeros(r);
    let (mut tau_sum, mut sigma_sum) = (0.0, 0.0);
    let mut kappa = DVector::zeros(r);

    for it in 0..config.iterations {
        for j in 0..r {
            let t = st.tau2 * st.lambda2[j] * d2[j];
            let k = t / (1.0 + t);
            kappa[j] = k;
            let z: f64 = rng.sample(StandardNormal);
            st.alpha[j] = k * ah[j] + (st.sigma2 * k / d2[j]).sqrt() * z;
        }

        let scaled: f64 = (0..r).map(|j| st.alpha[j] * st.alpha[j] / st.lambda2[j]).sum();
        if let NoisePrior::Jeffreys = config.noise {
            let fit: f64 = (0..r).map(|j| d2[j] * (ah[j] - st.alpha[j]).powi(2)).sum();
            let rate = 0.5 * (model.residual_ss() + fit + scaled / st.tau2);
            st.sigma2 = inv_gamma(&sigma_shape, rate, &mut rng);
        }

        if let LocalPrior::HalfCauchy = config.local {
            for j in 0..r {
                let rate = 1.0 / st.xi[j] + st.alpha[j] * st.alpha[j] / (2.0 * st.sigma2 * st.tau2);
                st.lambda2[j] = inv_gamma_one(rate, &mut rng);
                st.xi[j] = inv_gamma_one(1.0 + 1.0 / st.lambda2[j], &mut rng);
            }
        }

        if let GlobalPrior::HalfCauchy = config.global {
            let scaled: f64 = (0..r).map(|j| st.alpha[j] * st.alpha[j] / st.lambda2[j]).sum();
            let rate = 1.0 / st.zeta + scaled / (2.0 * st.sigma2);
            st.tau2 = inv_gamma(&tau_shape, rate, &mut rng);
            st.zeta = inv_gamma_one(1.0 + 1.0 / st.tau2, &mut rng);
        }

        let finite = st.sigma2.is_finite()
            && st.tau2.is_finite()
            && st.sigma2 > 0.0
            && st.tau2 > 0.0
            && st.alpha.iter().all(|a| a.is_finite())
            && st.lambda2.iter().all(|l| l.is_finite() && *l > 0.0);
        if !finite {
            return Err(Error::NonFinite(it));
        }

        if it < config.burn_in || (it - config.burn_in) % config.thin != 0 {
            continue;
        }
        for j in 0..r {
            kappa_draws[j].push(kappa[j]);
            m_sum[j] += kappa[j] * ah[j];
        }
        kappa_sum += &kappa;
        alpha_sum += &st.alpha;
        tau_sum += st.tau2;
        sigma_sum += st.sigma2;
        if let Some(d) = draws.as_mut() {
            d.alpha.push(st.alpha.clone());
            d.lambda2.push(st.lambda2.clone());
            d.kappa.push(kappa.clone());
            d.tau2.push(st.tau2);
            d.sigma2.push(st.sigma2);
        }
    }

    let kept = kappa_draws[0].len();
    let kf = kept as f64;
    let tail = 0.5 * (1.0 - config.level);
    let mut lower = DVector::zeros(r);
    let mut upper = DVector::zeros(r);
    for (j, v) in kappa_draws.iter_mut().enumerate() {
        v.sort_by(f64::total_cmp);
        lower[j] = quantile_sorted(v, tail);
        upper[j] = quantile_sorted(v, 1.0 - tail);
    }
    Ok(ChainSummary {
        kappa_fb: kappa_sum / kf,
        kappa_lower: lower,
        kappa_upper: upper,
        level: config.level,
        alpha_mean: alpha_sum / kf,
        m_mean: m_sum / kf,
        tau2_mean: tau_sum / kf,
        sigma2_mean: sigma_sum / kf,
        kept,
        draws,
    })
}

/// `W · E[α | y]`, the fully Bayes coefficient estimate.
pub fn fb_beta_estimate(model: &SvdModel, summary: &ChainSummary) -> Result<DVector<f64>> {
    if summary.alpha_mean.len() != model.rank() {
        return Err(invalid("chain summary does not belong to this model"));
    }
    Ok(model.right() * &summary.alpha_mean)
}
