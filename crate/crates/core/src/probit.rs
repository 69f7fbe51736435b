//! Probit regression: data-augmentation Gibbs under the horseshoe prior,
//! maximum likelihood, the lasso, and the r-spike simulation study.

use crate::data::fold_ids;
use crate::em::CoordinateDescent;
use crate::error::invalid;
use crate::ortho::{GlobalPrior, LocalPrior};
use crate::par::{self, Execution};
use crate::rng::{self, Rng};
use crate::special::{inv_mills, log_norm_cdf, norm_isf, norm_sf};
use crate::stats::{mean, median};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryProblem {
    x: DMatrix<f64>,
    labels: Vec<bool>,
}

impl BinaryProblem {
    pub fn new(x: DMatrix<f64>, labels: Vec<bool>) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(invalid("one label per design row is required"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("design must be finite"));
        }
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            return Err(invalid("both classes must be present"));
        }
        Ok(BinaryProblem { x, labels })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.x * beta;
        eta.iter().zip(&self.labels).map(|(e, &y)| log_norm_cdf(if y { *e } else { -e })).sum()
    }

    /// `−2 ℓ(β)`.
    pub fn deviance(&self, beta: &DVector<f64>) -> f64 {
        -2.0 * self.log_likelihood(beta)
    }

    // dℓ/dη for each row.
    fn score(&self, eta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            eta.len(),
            eta.iter().zip(&self.labels).map(|(e, &y)| if y { inv_mills(*e) } else { -inv_mills(-e) }),
        )
    }

    fn rows(&self, idx: &[usize]) -> Option<BinaryProblem> {
        BinaryProblem::new(self.x.select_rows(idx.iter()), idx.iter().map(|&i| self.labels[i]).collect()).ok()
    }
}

/// Standard normal conditioned on `x > a`.
///
/// Inverse CDF on the upper tail, switching to Robert's exponential
/// rejection sampler once the tail mass underflows.
pub fn truncated_normal_tail(a: f64, rng: &mut Rng) -> f64 {
    if a < 37.0 {
        let u = 1.0 - rng.random::<f64>();
        return norm_isf(u * norm_sf(a)).max(a);
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / rate;
        if rng.random::<f64>() <= (-0.5 * (x - rate) * (x - rate)).exp() {
            return x;
        }
    }
}

/// Draw of `z ~ N(mean, 1)` restricted to `z > 0` (if `positive`) or `z ≤ 0`.
pub fn latent_draw(mean: f64, positive: bool, rng: &mut Rng) -> f64 {
    if positive {
        (mean + truncated_normal_tail(-mean, rng)).max(0.0)
    } else {
        (mean - truncated_normal_tail(mean, rng)).min(0.0)
    }
}

/// Draw from `N(A⁻¹X′z, A⁻¹)` with `A = X′X + diag(1/prior_var)`.
pub fn sample_beta_conditional(xtx: &DMatrix<f64>, xtz: &DVector<f64>, prior_var: &[f64], rng: &mut Rng) -> Result<DVector<f64>> {
    let p = xtx.nrows();
    let mut a = xtx.clone();
    for j in 0..p {
        a[(j, j)] += 1.0 / prior_var[j];
    }
    let chol = a.cholesky().ok_or_else(|| Error::Singular("conditional precision is not positive definite".into()))?;
    let mean = chol.solve(xtz);
    let e = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = chol.l().transpose().solve_upper_triangular(&e).ok_or_else(|| Error::Singular("zero pivot in Cholesky factor".into()))?;
    Ok(mean + noise)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbitGibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub local: LocalPrior,
    pub global: GlobalPrior,
}

impl Default for ProbitGibbsConfig {
    fn default() -> Self {
        ProbitGibbsConfig {
            iterations: 4000,
            burn_in: 1000,
            seed: 42,
            local: LocalPrior::HalfCauchy,
            global: GlobalPrior::HalfCauchy,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbitPosterior {
    pub mean: DVector<f64>,
    pub kept: usize,
}

/// Albert–Chib Gibbs sampler with `β_j ~ N(0, τ²λ_j²)`.
pub fn probit_gibbs_hs(prob: &BinaryProblem, config: &ProbitGibbsConfig) -> Result<ProbitPosterior> {
    let (n, p) = (prob.n(), prob.p());
    if config.burn_in >= config.iterations {
        return Err(invalid("burn-in must be smaller than the number of iterations"));
    }
    if let LocalPrior::Fixed(v) = &config.local {
        if v.len() != p || v.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("fixed local scales must be positive, one per column"));
        }
    }
    if let GlobalPrior::Fixed(t) = config.global {
        if !(t > 0.0) {
            return Err(invalid("fixed τ² must be positive"));
        }
    }
    let mut rng = rng::stream(config.seed, 1);
    let x = prob.design();
    let xtx = x.transpose() * x;
    let tau_shape = Gamma::new((p as f64 + 1.0) / 2.0, 1.0).map_err(|e| invalid(e.to_string()))?;

    let mut beta = DVector::zeros(p);
    let mut lambda2 = match &config.local {
        LocalPrior::Fixed(v) => v.clone(),
        LocalPrior::HalfCauchy => vec![1.0; p],
    };
    let mut xi = vec![1.0; p];
    let mut tau2 = match config.global {
        GlobalPrior::Fixed(t) => t,
        GlobalPrior::HalfCauchy => 1.0,
    };
    let mut zeta = 1.0;
    let mut z = DVector::zeros(n);
    let mut sum = DVector::zeros(p);
    let mut prior_var = vec![0.0; p];

    for it in 0..config.iterations {
        let eta = x * &beta;
        for i in 0..n {
            z[i] = latent_draw(eta[i], prob.labels[i], &mut rng);
        }
        for j in 0..p {
            prior_var[j] = (tau2 * lambda2[j]).max(f64::MIN_POSITIVE);
        }
        beta = sample_beta_conditional(&xtx, &(x.transpose() * &z), &prior_var, &mut rng)?;

        if let LocalPrior::HalfCauchy = config.local {
            for j in 0..p {
                let e: f64 = Exp1.sample(&mut rng);
                lambda2[j] = (1.0 / xi[j] + beta[j] * beta[j] / (2.0 * tau2)) / e;
                let e: f64 = Exp1.sample(&mut rng);
                xi[j] = (1.0 + 1.0 / lambda2[j]) / e;
            }
        }
        if let GlobalPrior::HalfCauchy = config.global {
            let s: f64 = (0..p).map(|j| beta[j] * beta[j] / lambda2[j]).sum();
            tau2 = (1.0 / zeta + s / 2.0) / tau_shape.sample(&mut rng);
            let e: f64 = Exp1.sample(&mut rng);
            zeta = (1.0 + 1.0 / tau2) / e;
        }
        if !(tau2.is_finite() && tau2 > 0.0) || beta.iter().chain(&lambda2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(it));
        }
        if it >= config.burn_in {
            sum += &beta;
        }
    }
    let kept = config.iterations - config.burn_in;
    Ok(ProbitPosterior { mean: sum / kept as f64, kept })
}

/// Probit maximum likelihood by Newton's method with step halving.
///
/// The log-likelihood is concave, so the observed Hessian is used; Fisher
/// scoring crawls near quasi-separation.
///
/// Fails with [`Error::Separation`] when the likelihood approaches its
/// supremum only as `‖β‖ → ∞`, reporting the normalized direction of
/// divergence.
pub fn probit_mle(prob: &BinaryProblem) -> Result<DVector<f64>> {
    let x = prob.design();
    let p = prob.p();
    let mut beta = DVector::zeros(p);
    let mut ll = prob.log_likelihood(&beta);
    for _ in 0..200 {
        let eta = x * &beta;
        let s = prob.score(&eta);
        // Observed curvature m(m + e) of −log Φ(e) at e = ±η; it lies in (0, 1).
        let w: Vec<f64> = eta
            .iter()
            .zip(&prob.labels)
            .map(|(e, &y)| {
                let e = if y { *e } else { -e };
                let m = inv_mills(e);
                m * (m + e)
            })
            .collect();
        let mut info = DMatrix::zeros(p, p);
        for i in 0..prob.n() {
            let row = x.row(i).transpose();
            info.ger(w[i], &row, &row, 1.0);
        }
        let grad = x.transpose() * &s;
        let Some(chol) = info.cholesky() else {
            if ll > -1e-6 {
                return Err(separation(&beta));
            }
            return Err(Error::Singular("observed information is not positive definite".into()));
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut ll_next = prob.log_likelihood(&next);
        while !(ll_next >= ll - 1e-12 * ll.abs()) && t > 1e-10 {
            t *= 0.5;
            next = &beta + &step * t;
            ll_next = prob.log_likelihood(&next);
        }
        let change = (&next - &beta).amax();
        beta = next;
        ll = ll_next;
        if ll > -1e-6 {
            // Every observation is fitted with probability one: the data are separated.
            return Err(separation(&beta));
        }
        if change <= 1e-8 * (1.0 + beta.amax()) {
            return Ok(beta);
        }
    }
    if beta.amax() > 1e3 {
        return Err(separation(&beta));
    }
    Err(Error::NoConvergence { iterations: 200, residual: ll })
}

fn separation(beta: &DVector<f64>) -> Error {
    let norm = beta.norm();
    let direction = if norm > 0.0 { (beta / norm).iter().cloned().collect() } else { vec![0.0; beta.len()] };
    Error::Separation { direction }
}

/// `√(2 log p)`.
pub fn default_lasso_nu(p: usize) -> f64 {
    (2.0 * (p as f64).ln()).sqrt()
}

/// Minimizes `−ℓ(β) + ν‖β‖₁` by proximal Newton.
///
/// Each step replaces `−ℓ` by its second-order expansion in the linear
/// predictor (observed curvature, which lies in `(0, 1)` for the probit
/// link), solves the resulting weighted lasso by coordinate descent, and
/// backtracks along the step until the objective does not increase.
pub fn probit_lasso(prob: &BinaryProblem, nu: f64) -> Result<DVector<f64>> {
    probit_lasso_from(prob, nu, None)
}

// −d²ℓ/dη² for one observation.
fn curvature(eta: f64, y: bool) -> f64 {
    let e = if y { eta } else { -eta };
    let m = inv_mills(e);
    (m * (m + e)).clamp(0.0, 1.0)
}

fn probit_lasso_from(prob: &BinaryProblem, nu: f64, init: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(invalid("lasso ν must be positive"));
    }
    let x = prob.design();
    let (n, p) = (prob.n(), prob.p());
    let weights = vec![nu; p];
    let mut beta = init.cloned().unwrap_or_else(|| DVector::zeros(p));
    let objective = |b: &DVector<f64>| -prob.log_likelihood(b) + nu * b.lp_norm(1);
    let mut obj = objective(&beta);
    for _ in 0..500 {
        let eta = x * &beta;
        let s = prob.score(&eta);
        let mut xw = x.clone();
        let mut zw = DVector::zeros(n);
        for i in 0..n {
            let h = curvature(eta[i], prob.labels[i]);
            if h < 1e-300 {
                xw.row_mut(i).fill(0.0);
                continue;
            }
            let r = h.sqrt();
            xw.row_mut(i).scale_mut(r);
            zw[i] = r * eta[i] + s[i] / r;
        }
        let scale = 1.0 + (xw.transpose() * &zw).amax();
        let mut cd = CoordinateDescent::from_parts(&xw, &zw);
        let proposal = cd.solve(&weights, Some(&beta), 1e-10 * scale, 100_000)?;
        let dir = &proposal - &beta;
        let mut t = 1.0;
        let mut next = &beta + &dir * t;
        let mut next_obj = objective(&next);
        while next_obj > obj && t > 1e-12 {
            t *= 0.5;
            next = &beta + &dir * t;
            next_obj = objective(&next);
        }
        if next_obj > obj {
            return Ok(beta);
        }
        let change = (&next - &beta).amax();
        let gain = obj - next_obj;
        beta = next;
        obj = next_obj;
        if change <= 1e-10 * (1.0 + beta.amax()) || gain <= 1e-15 * obj.abs() {
            return Ok(beta);
        }
    }
    Err(Error::NoConvergence { iterations: 500, residual: obj })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoCv {
    pub nu: f64,
    pub beta: DVector<f64>,
    pub grid: Vec<f64>,
    /// Mean held-out deviance per grid point.
    pub scores: Vec<f64>,
}

/// Lasso with `ν` chosen by K-fold cross-validated deviance over a
/// 20-point log grid from `ν_max = ‖X′s(0)‖∞` down to `10⁻³ ν_max`.
pub fn probit_lasso_cv(prob: &BinaryProblem, folds: usize, seed: u64) -> Result<LassoCv> {
    let s0 = prob.score(&DVector::zeros(prob.n()));
    let nu_max = (prob.design().transpose() * s0).amax();
    let grid: Vec<f64> = (0..20).map(|i| nu_max * 10f64.powf(-3.0 * i as f64 / 19.0)).collect();
    let labels = fold_ids(prob.n(), folds, seed);
    let mut scores = vec![0.0; grid.len()];
    for f in 0..folds {
        let tr: Vec<usize> = (0..prob.n()).filter(|&i| labels[i] != f).collect();
        let te: Vec<usize> = (0..prob.n()).filter(|&i| labels[i] == f).collect();
        let (Some(train), Some(test)) = (prob.rows(&tr), prob.rows(&te)) else {
            // A one-class fold carries no information about ν; score it by
            // the deviance of its rows directly.
            let train = prob.rows(&tr).ok_or_else(|| invalid("a training fold has a single class"))?;
            let mut warm: Option<DVector<f64>> = None;
            for (g, &nu) in grid.iter().enumerate() {
                let b = probit_lasso_from(&train, nu, warm.as_ref())?;
                let eta = prob.design().select_rows(te.iter()) * &b;
                scores[g] += -2.0
                    * eta.iter().zip(&te).map(|(e, &i)| log_norm_cdf(if prob.labels[i] { *e } else { -e })).sum::<f64>();
                warm = Some(b);
            }
            continue;
        };
        let mut warm: Option<DVector<f64>> = None;
        for (g, &nu) in grid.iter().enumerate() {
            let b = probit_lasso_from(&train, nu, warm.as_ref())?;
            scores[g] += test.deviance(&b);
            warm = Some(b);
        }
    }
    scores.iter_mut().for_each(|s| *s /= folds as f64);
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    // The grid runs from large to small ν, so the first minimizer is the strongest.
    let idx = scores.iter().position(|s| *s <= best + 1e-12 * best.abs()).expect("nonempty grid");
    let nu = grid[idx];
    let beta = probit_lasso(prob, nu)?;
    Ok(LassoCv { nu, beta, grid, scores })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RSpikeSpec {
    pub p: usize,
    pub n: usize,
    pub r: usize,
    /// Inverse-Wishart degrees of freedom; `p + 2` centers `Σ` at the identity.
    pub covariance_df: f64,
}

impl Default for RSpikeSpec {
    fn default() -> Self {
        RSpikeSpec::new(25, 500, 5)
    }
}

impl RSpikeSpec {
    pub fn new(p: usize, n: usize, r: usize) -> Self {
        RSpikeSpec { p, n, r, covariance_df: p as f64 + 2.0 }
    }

    pub fn magnitude(&self) -> f64 {
        (self.p as f64 / self.r as f64).sqrt()
    }

    pub fn true_beta(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |j, _| if j < self.r { self.magnitude() } else { 0.0 })
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n < 2 || self.r > self.p {
            return Err(invalid("r-spike needs p ≥ 1, n ≥ 2 and r ≤ p"));
        }
        if !(self.covariance_df > self.p as f64 + 1.0) {
            return Err(invalid("inverse-Wishart degrees of freedom must exceed p + 1"));
        }
        Ok(())
    }
}

/// Wishart(df, I_p) draw by the Bartlett decomposition.
pub fn wishart_identity(df: f64, p: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    if !(df > p as f64 - 1.0) {
        return Err(invalid("Wishart degrees of freedom must exceed p − 1"));
    }
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi2 = Gamma::new((df - i as f64) / 2.0, 2.0).map_err(|e| invalid(e.to_string()))?;
        a[(i, i)] = chi2.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(&a * a.transpose())
}

/// Inverse-Wishart(df, I_p) draw; its mean is `I/(df − p − 1)`.
pub fn inverse_wishart_identity(df: f64, p: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    wishart_identity(df, p, rng)?.try_inverse().ok_or_else(|| Error::Singular("Wishart draw is singular".into()))
}

#[derive(Clone, Debug)]
pub struct RSpikeData {
    pub problem: BinaryProblem,
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Number of redraws needed because a sample had a single class.
    pub resampled: u32,
}

pub fn simulate_rspike(spec: &RSpikeSpec, seed: u64) -> Result<RSpikeData> {
    spec.validate()?;
    let beta = spec.true_beta();
    for attempt in 0..100u32 {
        let mut rng = rng::stream(seed.wrapping_add(attempt as u64), 0);
        let sigma = inverse_wishart_identity(spec.covariance_df, spec.p, &mut rng)?;
        let l = sigma.clone().cholesky().ok_or_else(|| Error::Singular("covariance draw is not positive definite".into()))?.unpack();
        let z = DMatrix::from_fn(spec.n, spec.p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = z * l.transpose();
        let eta = &x * &beta;
        let labels: Vec<bool> = eta.iter().map(|e| e + rng.sample::<f64, _>(StandardNormal) > 0.0).collect();
        if let Ok(problem) = BinaryProblem::new(x, labels) {
            return Ok(RSpikeData { problem, beta, covariance: sigma, resampled: attempt });
        }
    }
    Err(Error::Data("could not draw a sample containing both classes".into()))
}

pub const RSPIKE_METHODS: [&str; 4] = ["HS", "lasso-CV", "lasso-CT", "MLE"];

/// SSE of each method on one simulated data set, in [`RSPIKE_METHODS`] order.
/// A failed MLE (separation) scores `+∞`.
pub fn rspike_replicate(spec: &RSpikeSpec, seed: u64, gibbs: &ProbitGibbsConfig) -> Result<[f64; 4]> {
    let data = simulate_rspike(spec, seed)?;
    let err = |b: &DVector<f64>| (b - &data.beta).norm_squared();
    let hs = probit_gibbs_hs(&data.problem, &ProbitGibbsConfig { seed, ..gibbs.clone() })?;
    let cv = probit_lasso_cv(&data.problem, 10, seed)?;
    let ct = probit_lasso(&data.problem, default_lasso_nu(spec.p))?;
    let mle = match probit_mle(&data.problem) {
        Ok(b) => err(&b),
        Err(Error::Separation { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok([err(&hs.mean), err(&cv.beta), err(&ct), mle])
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub median_sse: f64,
    pub mean_sse: f64,
}

/// `reps` independent replications with seeds `seed + 1000·i`.
pub fn rspike_benchmark(
    spec: &RSpikeSpec,
    reps: usize,
    seed: u64,
    gibbs: &ProbitGibbsConfig,
    exec: Execution,
) -> Result<Vec<[f64; 4]>> {
    par::try_map_range(exec, reps, |i| rspike_replicate(spec, seed.wrapping_add(1000 * i as u64), gibbs))
}

pub fn summarize(results: &[[f64; 4]]) -> Vec<BenchmarkRow> {
    RSPIKE_METHODS
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let v: Vec<f64> = results.iter().map(|r| r[m]).collect();
            BenchmarkRow { method: name.to_string(), median_sse: median(&v), mean_sse: mean(&v) }
        })
        .collect()
}
