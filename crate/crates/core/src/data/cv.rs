//! Train/test splits, K-fold cross-validation and hold-out benchmarks.

use super::{Dataset, Standardization};
use crate::error::invalid;
use crate::ortho::{fb_beta_estimate, gibbs_fit, kappa_weights, svd_orthogonalize, GibbsConfig, Method, SvdModel};
use crate::par::{self, Execution};
use crate::rng;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

/// Fold label for each of `n` items: a seeded shuffle, then position mod `k`.
pub fn fold_ids(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 7));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k.max(1);
    }
    folds
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Fold label of each training row, in the order of `train`.
    pub folds: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(n: usize, fraction: f64, k: usize, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(invalid("training fraction must lie in (0, 1)"));
        }
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
        if n < 3 || k < 2 || n_train < k {
            return Err(invalid(format!("cannot split {n} rows into train/test with {k} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(seed));
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        let folds = fold_ids(n_train, k, seed);
        Ok(SplitPlan { train, test, folds, seed })
    }
}

pub fn sse(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    pred.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Ridge,
    Pcr,
    Pls,
    GPrior,
}

fn log_grid(lo: f64, hi: f64, m: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..m).map(move |i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())
}

/// Default candidate list for one method family on a training design.
pub fn default_grid(kind: GridKind, x: &DMatrix<f64>, rank: usize) -> Vec<Method> {
    match kind {
        GridKind::Ridge => {
            let scale = x.norm_squared() / x.ncols() as f64;
            log_grid(1e-4 * scale, 1e4 * scale, 30).map(Method::Ridge).collect()
        }
        GridKind::Pcr => (1..=rank).map(Method::Pcr).collect(),
        GridKind::Pls => (1..=rank).map(Method::Pls).collect(),
        GridKind::GPrior => log_grid(1e-2, 1e4, 25).map(Method::GPrior).collect(),
    }
}

/// Orders candidates from strongest to weakest regularization.
fn strength(m: &Method) -> f64 {
    match *m {
        Method::Ridge(nu) => nu,
        Method::Pcr(k) | Method::Pls(k) => -(k as f64),
        Method::GPrior(g) => -g,
        Method::FullyBayes => f64::NEG_INFINITY,
    }
}

struct Centered {
    model: SvdModel,
    x_mean: DVector<f64>,
    y_mean: f64,
}

fn center_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Centered> {
    let n = x.nrows();
    let x_mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
    let y_mean = y.mean();
    let xc = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] - x_mean[j]);
    let model = svd_orthogonalize(&xc, &y.add_scalar(-y_mean))?;
    Ok(Centered { model, x_mean, y_mean })
}

impl Centered {
    fn predict(&self, beta: &DVector<f64>, x: &DMatrix<f64>) -> DVector<f64> {
        let offset = self.y_mean - self.x_mean.dot(beta);
        (x * beta).add_scalar(offset)
    }

    /// Clamps component counts to the available rank.
    fn profile(&self, m: Method) -> Result<DVector<f64>> {
        let r = self.model.rank();
        let m = match m {
            Method::Pcr(k) => Method::Pcr(k.min(r)),
            Method::Pls(k) => Method::Pls(k.min(r)),
            other => other,
        };
        Ok(kappa_weights(&self.model, m)?.kappa)
    }
}

/// Fits `method` on centered training data and predicts `x_test`.
pub fn fit_predict(method: Method, x: &DMatrix<f64>, y: &DVector<f64>, x_test: &DMatrix<f64>) -> Result<DVector<f64>> {
    let c = center_fit(x, y)?;
    let beta = c.model.right() * c.profile(method)?.component_mul(c.model.alpha_hat());
    Ok(c.predict(&beta, x_test))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub chosen: Method,
    pub index: usize,
    /// Mean held-out SSE per fold, one entry per candidate.
    pub scores: Vec<f64>,
}

/// K-fold cross-validation over `candidates` with fold labels `folds`.
///
/// Ties within `1e-12` relative go to the most strongly regularized candidate.
pub fn cv_tune(x: &DMatrix<f64>, y: &DVector<f64>, candidates: &[Method], folds: &[usize], exec: Execution) -> Result<CvResult> {
    if candidates.is_empty() {
        return Err(invalid("candidate grid is empty"));
    }
    if candidates.contains(&Method::FullyBayes) {
        return Err(invalid("cross-validation applies to the closed-form methods only"));
    }
    if folds.len() != x.nrows() || y.len() != x.nrows() {
        return Err(invalid("fold labels, design and response must have the same length"));
    }
    let labels: Vec<usize> = {
        let mut l = folds.to_vec();
        l.sort_unstable();
        l.dedup();
        l
    };
    if labels.len() < 2 {
        return Err(invalid("cross-validation needs at least two folds"));
    }
    let per_fold = par::try_map_range(exec, labels.len(), |f| -> Result<Vec<f64>> {
        let label = labels[f];
        let tr: Vec<usize> = (0..x.nrows()).filter(|&i| folds[i] != label).collect();
        let te: Vec<usize> = (0..x.nrows()).filter(|&i| folds[i] == label).collect();
        let x_tr = x.select_rows(tr.iter());
        let y_tr = DVector::from_iterator(tr.len(), tr.iter().map(|&i| y[i]));
        let x_te = x.select_rows(te.iter());
        let y_te = DVector::from_iterator(te.len(), te.iter().map(|&i| y[i]));
        let c = center_fit(&x_tr, &y_tr)?;
        // Predictions are y_mean + (x − x̄)′W (κ ∘ α̂); project the test rows once.
        let xc = DMatrix::from_fn(te.len(), x.ncols(), |i, j| x_te[(i, j)] - c.x_mean[j]);
        let proj = xc * c.model.right();
        candidates
            .iter()
            .map(|&m| {
                let coef = c.profile(m)?.component_mul(c.model.alpha_hat());
                Ok(sse(&(&proj * coef).add_scalar(c.y_mean), &y_te))
            })
            .collect()
    })?;
    let k = labels.len() as f64;
    let scores: Vec<f64> = (0..candidates.len()).map(|c| per_fold.iter().map(|f| f[c]).sum::<f64>() / k).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let index = (0..candidates.len())
        .filter(|&c| scores[c] <= best + 1e-12 * best.abs())
        .max_by(|&a, &b| strength(&candidates[a]).total_cmp(&strength(&candidates[b])))
        .expect("at least one candidate attains the minimum");
    Ok(CvResult { chosen: candidates[index], index, scores })
}

#[derive(Clone, Debug)]
pub struct HoldoutConfig {
    pub splits: usize,
    pub fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub gibbs: GibbsConfig,
    pub exec: Execution,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig {
            splits: 50,
            fraction: 0.75,
            folds: 10,
            seed: 42,
            gibbs: GibbsConfig { iterations: 4000, burn_in: 1000, ..GibbsConfig::default() },
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutReport {
    pub methods: Vec<String>,
    /// `per_split[s][m]` is the test SSE of method `m` on split `s`.
    pub per_split: Vec<Vec<f64>>,
}

impl HoldoutReport {
    pub fn mean_sse(&self) -> Vec<f64> {
        let s = self.per_split.len() as f64;
        (0..self.methods.len()).map(|m| self.per_split.iter().map(|r| r[m]).sum::<f64>() / s).collect()
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }
}

pub const HOLDOUT_METHODS: [&str; 5] = ["Bayes", "PLS", "PCR", "RR", "g-prior"];

/// Repeated random train/test splits of a raw dataset.
///
/// Each split standardizes with training statistics only, tunes the
/// closed-form methods by K-fold CV on the training rows and fits the fully
/// Bayes model with `config.gibbs`.
pub fn holdout_benchmark(data: &Dataset, config: &HoldoutConfig) -> Result<HoldoutReport> {
    if config.splits == 0 {
        return Err(invalid("at least one split is required"));
    }
    let per_split = par::try_map_range(config.exec, config.splits, |s| holdout_split(data, config, s as u64))?;
    Ok(HoldoutReport { methods: HOLDOUT_METHODS.iter().map(|s| s.to_string()).collect(), per_split })
}

fn holdout_split(data: &Dataset, config: &HoldoutConfig, split: u64) -> Result<Vec<f64>> {
    let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(split);
    let plan = SplitPlan::new(data.n(), config.fraction, config.folds, seed)?;
    let train = data.rows(&plan.train);
    let test = data.rows(&plan.test);
    let st = Standardization::fit(&train.x, &train.y, &train.column_names)?;
    let x_tr = st.apply(&train.x);
    let y_tr = st.apply_response(&train.y);
    let x_te = st.apply(&test.x);
    let y_te = st.apply_response(&test.y);

    let c = center_fit(&x_tr, &y_tr)?;
    let r = c.model.rank();
    let gibbs = GibbsConfig { seed, ..config.gibbs.clone() };
    let summary = gibbs_fit(&c.model, &gibbs)?;
    let bayes = c.predict(&fb_beta_estimate(&c.model, &summary)?, &x_te);

    let mut out = vec![sse(&bayes, &y_te)];
    for kind in [GridKind::Pls, GridKind::Pcr, GridKind::Ridge, GridKind::GPrior] {
        let grid = default_grid(kind, &x_tr, r);
        let tuned = cv_tune(&x_tr, &y_tr, &grid, &plan.folds, Execution::Sequential)?;
        out.push(sse(&fit_predict(tuned.chosen, &x_tr, &y_tr, &x_te)?, &y_te));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced() {
        let f = fold_ids(23, 10, 3);
        let mut counts = [0usize; 10];
        f.iter().for_each(|&k| counts[k] += 1);
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
    }

    #[test]
    fn split_partitions_rows() {
        let p = SplitPlan::new(40, 0.75, 10, 9).unwrap();
        assert_eq!(p.train.len(), 30);
        let mut all: Vec<usize> = p.train.iter().chain(&p.test).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn sse_basics() {
        let t = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(sse(&t, &t), 0.0);
        assert_eq!(sse(&t.add_scalar(1.0), &t), 3.0);
    }
}
