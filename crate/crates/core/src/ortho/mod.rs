//! Shrinkage in the SVD coordinates of the design.
//!
//! With `X = U D W′` and `α̂ = D⁻¹U′y`, ridge, principal-components, partial
//! least squares and g-prior regression all return `β̂ = Σ_j κ_j α̂_j w_j`
//! and differ only in the weights `κ_j`. The fully Bayes weights come from
//! the Gibbs sampler in [`gibbs`].

pub mod gibbs;

use crate::error::invalid;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub use gibbs::{fb_beta_estimate, gibbs_fit, gibbs_fit_chains, ChainSummary, Draws, GibbsConfig, GlobalPrior, LocalPrior, NoisePrior};

/// Relative threshold below which singular values are dropped.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SvdModel {
    u: DMatrix<f64>,
    d: DVector<f64>,
    w: DMatrix<f64>,
    alpha_hat: DVector<f64>,
    n: usize,
    residual_ss: f64,
}

impl SvdModel {
    pub fn left(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn alpha_hat(&self) -> &DVector<f64> {
        &self.alpha_hat
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.w.nrows()
    }

    /// `‖y − U U′y‖²`, the part of `y` no coefficient vector can fit.
    pub fn residual_ss(&self) -> f64 {
        self.residual_ss
    }
}

/// Thin SVD of `X` with rank truncation and `α̂ = D⁻¹U′y`.
///
/// Signs are fixed so that the largest-magnitude entry of each `w_j` is
/// positive.
pub fn svd_orthogonalize(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<SvdModel> {
    let (n, p) = x.shape();
    if n < 2 || p < 1 {
        return Err(invalid("need at least two rows and one column"));
    }
    if y.len() != n {
        return Err(invalid("response length does not match the design"));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(invalid("design matrix is identically zero"));
    }
    let svd = x.clone().svd(true, true);
    let u_full = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V′");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|a, b| s[*b].total_cmp(&s[*a]));
    let d1 = s[order[0]];
    let keep: Vec<usize> = order.into_iter().filter(|&j| s[j] > RANK_TOL * d1).collect();
    let r = keep.len();
    let mut u = DMatrix::zeros(n, r);
    let mut w = DMatrix::zeros(p, r);
    let mut d = DVector::zeros(r);
    for (k, &j) in keep.iter().enumerate() {
        let mut wc = vt.row(j).transpose();
        let mut uc = u_full.column(j).into_owned();
        let imax = wc.iamax();
        if wc[imax] < 0.0 {
            wc.neg_mut();
            uc.neg_mut();
        }
        w.set_column(k, &wc);
        u.set_column(k, &uc);
        d[k] = s[j];
    }
    let uty = u.transpose() * y;
    let alpha_hat = uty.component_div(&d);
    let residual_ss = (y.norm_squared() - uty.norm_squared()).max(0.0);
    Ok(SvdModel { u, d, w, alpha_hat, n, residual_ss })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Ridge(f64),
    Pcr(usize),
    GPrior(f64),
    Pls(usize),
    FullyBayes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkageProfile {
    pub method: Method,
    pub kappa: DVector<f64>,
    /// Set when the PLS moment system had condition number above `1e12`.
    pub ill_conditioned: bool,
}

/// Closed-form shrinkage weights for the non-Bayesian methods.
pub fn kappa_weights(model: &SvdModel, method: Method) -> Result<ShrinkageProfile> {
    let r = model.rank();
    let d = &model.d;
    let mut ill_conditioned = false;
    let kappa = match method {
        Method::Ridge(nu) => {
            if !(nu > 0.0) {
                return Err(invalid("ridge ν must be positive"));
            }
            d.map(|dj| dj * dj / (nu + dj * dj))
        }
        Method::Pcr(k) => {
            check_components(k, r)?;
            let cut = d[k - 1] * d[k - 1];
            d.map(|dj| if dj * dj >= cut { 1.0 } else { 0.0 })
        }
        Method::GPrior(g) => {
            if !(g > 0.0) {
                return Err(invalid("g must be positive"));
            }
            DVector::from_element(r, g / (1.0 + g))
        }
        Method::Pls(k) => {
            check_components(k, r)?;
            let (kappa, flag) = pls_kappa(model, k);
            ill_conditioned = flag;
            kappa
        }
        Method::FullyBayes => {
            return Err(Error::Unsupported("fully Bayes weights come from gibbs_fit".into()));
        }
    };
    Ok(ShrinkageProfile { method, kappa, ill_conditioned })
}

fn check_components(k: usize, r: usize) -> Result<()> {
    if k == 0 || k > r {
        return Err(invalid(format!("number of components must lie in 1..={r}, got {k}")));
    }
    Ok(())
}

/// PLS weights `κ_j = Σ_{k=1}^K θ_k d_j^{2k}` with `θ = W⁻¹η`.
///
/// The system `Wθ = η` is the normal equation of the weighted polynomial fit
/// `min Σ_j α̂_j² d_j² (1 − κ(d_j²))²` over polynomials `κ` of degree `K`
/// with `κ(0) = 0`. That fit is done with an orthonormal polynomial basis
/// (Lanczos with full reorthogonalization on `x_j = d_j²/d_1²`), which gives
/// the same `κ` without forming the badly conditioned moment matrix.
fn pls_kappa(model: &SvdModel, k: usize) -> (DVector<f64>, bool) {
    let d1 = model.d[0];
    let x: Vec<f64> = model.d.iter().map(|d| (d / d1) * (d / d1)).collect();
    // κ(x) = x·q(x) with deg q = K − 1; fit q to 1/x with weights α̂²d²x².
    let wts: Vec<f64> = model
        .alpha_hat
        .iter()
        .zip(model.d.iter())
        .zip(&x)
        .map(|((a, d), x)| a * a * d * d * x * x)
        .collect();
    let inner = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).zip(&wts).map(|((a, b), w)| a * b * w).sum() };
    let r = x.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut v = vec![1.0; r];
    let scale0 = inner(&v, &v).sqrt();
    let mut fitted = vec![0.0; r];
    if scale0 > 0.0 {
        v.iter_mut().for_each(|e| *e /= scale0);
        let target: Vec<f64> = x.iter().map(|x| 1.0 / x).collect();
        for step in 0..k {
            let c = inner(&target, &v);
            fitted.iter_mut().zip(&v).for_each(|(f, b)| *f += c * b);
            basis.push(v.clone());
            if step + 1 == k {
                break;
            }
            let mut next: Vec<f64> = v.iter().zip(&x).map(|(b, x)| b * x).collect();
            for _ in 0..2 {
                for q in &basis {
                    let h = inner(&next, q);
                    next.iter_mut().zip(q).for_each(|(n, q)| *n -= h * q);
                }
            }
            let norm = inner(&next, &next).sqrt();
            if norm <= 1e-13 * scale0 {
                // Krylov space exhausted: the fit is already exact on the support.
                break;
            }
            next.iter_mut().for_each(|e| *e /= norm);
            v = next;
        }
    }
    let kappa = DVector::from_iterator(r, fitted.iter().zip(&x).map(|(q, x)| q * x));
    (kappa, moment_condition(&x, &model.alpha_hat, &model.d, k) > 1e12)
}

/// Condition number of the scaled moment matrix `W_kl = Σ α̂² d² x^{k+l}`.
fn moment_condition(x: &[f64], alpha: &DVector<f64>, d: &DVector<f64>, k: usize) -> f64 {
    let w = DMatrix::from_fn(k, k, |a, b| {
        x.iter()
            .zip(alpha.iter().zip(d.iter()))
            .map(|(x, (al, dj))| al * al * dj * dj * x.powi((a + b + 2) as i32))
            .sum::<f64>()
    });
    let ev: DVector<f64> = w.symmetric_eigenvalues();
    let hi = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if lo == 0.0 { f64::INFINITY } else { hi / lo }
}

/// `Σ_j κ_j α̂_j w_j`.
pub fn reconstruct_beta(model: &SvdModel, kappa: &DVector<f64>) -> Result<DVector<f64>> {
    if kappa.len() != model.rank() {
        return Err(invalid("shrinkage profile length does not match the model rank"));
    }
    Ok(&model.w * kappa.component_mul(&model.alpha_hat))
}
