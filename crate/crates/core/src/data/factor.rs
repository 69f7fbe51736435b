//! Factor-model designs `x_i = B f_i + ξ_i` with a known regression target.

use super::Dataset;
use crate::error::invalid;
use crate::ortho::svd_orthogonalize;
use crate::rng;
use crate::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, PartialEq)]
pub enum Loadings {
    /// Every entry of `B` equal to one.
    Ones,
    /// Column `l` of `B` has iid `N(0, scales[l]²)` entries.
    Gaussian { scales: Vec<f64> },
    Matrix(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResponseModel {
    /// `y = Xβ + ε` with `β = Wα` in the design's own SVD coordinates.
    /// Listed components get the given `α_j`; the rest are `N(0, background_sd²)`.
    Orthogonal { strong: Vec<(usize, f64)>, background_sd: f64, noise_sd: f64 },
    /// `y = γ′f + ε`, regressed jointly with `x` on the latent factors.
    Factors { weights: Vec<f64>, noise_sd: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorModelSpec {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Standard deviation of the idiosyncratic noise `ξ`.
    pub psi: f64,
    pub loadings: Loadings,
    pub response: ResponseModel,
}

impl FactorModelSpec {
    /// Five-factor design with unit loadings and one strong low-variance
    /// component (index 11, `α = 12`).
    pub fn strong_component() -> Self {
        FactorModelSpec {
            n: 100,
            p: 20,
            k: 5,
            psi: 0.1,
            loadings: Loadings::Ones,
            response: ResponseModel::Orthogonal { strong: vec![(11, 12.0)], background_sd: 0.3, noise_sd: 1.0 },
        }
    }

    /// Wide design (`n = 50`, `p = 100`): eight factors with loading scales
    /// falling geometrically from 8 to 1, and a response carried by the two
    /// weakest factors.
    pub fn low_variance_response() -> Self {
        let k = 8;
        let scales = (0..k).map(|l| 8.0 * (1.0f64 / 8.0).powf(l as f64 / (k - 1) as f64)).collect();
        let mut weights = vec![0.0; k];
        weights[k - 1] = 3.0;
        weights[k - 2] = 1.0;
        FactorModelSpec {
            n: 50,
            p: 100,
            k,
            psi: 0.1,
            loadings: Loadings::Gaussian { scales },
            response: ResponseModel::Factors { weights, noise_sd: 1.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 || self.k < 1 || self.k > self.p {
            return Err(invalid("factor model needs n ≥ 2 and 1 ≤ k ≤ p"));
        }
        if !(self.psi > 0.0 && self.psi.is_finite()) {
            return Err(invalid("ψ must be positive"));
        }
        match &self.loadings {
            Loadings::Gaussian { scales } if scales.len() != self.k => {
                return Err(invalid("one loading scale per factor is required"));
            }
            Loadings::Matrix(b) if b.shape() != (self.p, self.k) => return Err(invalid("loadings must be p×k")),
            _ => {}
        }
        match &self.response {
            ResponseModel::Orthogonal { strong, background_sd, noise_sd } => {
                if strong.iter().any(|(j, _)| *j >= self.p.min(self.n)) {
                    return Err(invalid("strong component index exceeds the design rank"));
                }
                if *background_sd < 0.0 || !(*noise_sd >= 0.0) {
                    return Err(invalid("standard deviations must be nonnegative"));
                }
            }
            ResponseModel::Factors { weights, noise_sd } => {
                if weights.len() != self.k {
                    return Err(invalid("one response weight per factor is required"));
                }
                if !(*noise_sd >= 0.0) {
                    return Err(invalid("noise standard deviation must be nonnegative"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FactorData {
    /// Raw (unstandardized) design and response.
    pub dataset: Dataset,
    /// Coefficients of the best linear predictor of `y` given `x`.
    pub beta: DVector<f64>,
    /// True coefficients in the design's SVD coordinates, for orthogonal responses.
    pub alpha: Option<DVector<f64>>,
    pub loadings: DMatrix<f64>,
}

pub fn gen_factor_model(spec: &FactorModelSpec, seed: u64) -> Result<FactorData> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let (n, p, k) = (spec.n, spec.p, spec.k);
    let b = match &spec.loadings {
        Loadings::Ones => DMatrix::from_element(p, k, 1.0),
        Loadings::Gaussian { scales } => DMatrix::from_fn(p, k, |_, l| scales[l] * rng.sample::<f64, _>(StandardNormal)),
        Loadings::Matrix(m) => m.clone(),
    };
    let f = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xi = DMatrix::from_fn(n, p, |_, _| spec.psi * rng.sample::<f64, _>(StandardNormal));
    let x = &f * b.transpose() + xi;

    let (y, beta, alpha) = match &spec.response {
        ResponseModel::Orthogonal { strong, background_sd, noise_sd } => {
            let model = svd_orthogonalize(&x, &DVector::zeros(n))?;
            let r = model.rank();
            let mut alpha = DVector::from_fn(r, |_, _| background_sd * rng.sample::<f64, _>(StandardNormal));
            for &(j, a) in strong {
                if j < r {
                    alpha[j] = a;
                }
            }
            let beta = model.right() * &alpha;
            let noise = DVector::from_fn(n, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
            (&x * &beta + noise, beta, Some(alpha))
        }
        ResponseModel::Factors { weights, noise_sd } => {
            let gamma = DVector::from_column_slice(weights);
            let noise = DVector::from_fn(n, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
            let y = &f * &gamma + noise;
            // E[y | x] = γ′ B′ (BB′ + ψ²I)⁻¹ x.
            let cov = &b * b.transpose() + DMatrix::identity(p, p) * (spec.psi * spec.psi);
            let rhs = &b * &gamma;
            let beta = cov.cholesky().ok_or_else(|| invalid("factor covariance is singular"))?.solve(&rhs);
            (y, beta, None)
        }
    };
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Ok(FactorData { dataset: Dataset::new(x, y, names, "y")?, beta, alpha, loadings: b })
}
