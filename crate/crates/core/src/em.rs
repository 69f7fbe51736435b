//! Posterior modes by EM.
//!
//! Both algorithms minimize `‖y − Xβ‖²/(2σ²) + Σ_j ν ψ(f(β_j))`. The E-step
//! replaces each `ψ` by its tangent at the current iterate (concavity makes
//! this a majorizer), so the objective never increases.
//!
//! * [`em_ridge_mixture`]: `f = β²/2`; the M-step is a generalized ridge solve.
//! * [`em_lla`]: `f = |β|`; the M-step is a weighted lasso solved by
//!   [`weighted_lasso_cd`].

use crate::error::invalid;
use crate::penalty::{PenaltySpec, Transform};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct LinearProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma: f64,
}

impl LinearProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, noise_sd: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(invalid(format!("design has {} rows but response has {}", x.nrows(), y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("design and response must be finite"));
        }
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(invalid("noise sd must be positive"));
        }
        Ok(Self { x, y, sigma: noise_sd })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn noise_sd(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Penalized negative log posterior.
    pub fn objective(&self, pen: &PenaltySpec, beta: &DVector<f64>) -> f64 {
        let r = &self.y - &self.x * beta;
        r.norm_squared() / (2.0 * self.sigma * self.sigma) + beta.iter().map(|b| pen.penalty_value(*b)).sum::<f64>()
    }

    /// Gradient of [`Self::objective`] (one-sided at zeros for `Abs`).
    pub fn gradient(&self, pen: &PenaltySpec, beta: &DVector<f64>) -> DVector<f64> {
        let r = &self.y - &self.x * beta;
        let mut g = -(self.x.transpose() * r) / (self.sigma * self.sigma);
        for (j, b) in beta.iter().enumerate() {
            g[j] += pen.derivative(*b);
        }
        g
    }

    /// OLS when `n > p` and `X′X` is well conditioned, otherwise ridge with `ν = 1`.
    pub fn default_init(&self) -> DVector<f64> {
        let xtx = self.x.transpose() * &self.x;
        let xty = self.x.transpose() * &self.y;
        if self.n() > self.p() {
            let eig = xtx.clone().symmetric_eigenvalues();
            let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            if lo > 0.0 && hi / lo < 1e8 {
                if let Some(ch) = xtx.clone().cholesky() {
                    return ch.solve(&xty);
                }
            }
        }
        let mut a = xtx;
        for j in 0..self.p() {
            a[(j, j)] += 1.0;
        }
        a.cholesky().expect("ridge system is positive definite").solve(&xty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, inner_tol: 1e-8, inner_max_iter: 10_000 }
    }
}

#[derive(Clone, Debug)]
pub struct EmTrace {
    pub iterates: Vec<DVector<f64>>,
    pub objectives: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl EmTrace {
    pub fn solution(&self) -> &DVector<f64> {
        self.iterates.last().expect("trace holds the initial point")
    }

    pub fn final_objective(&self) -> f64 {
        *self.objectives.last().expect("trace holds the initial point")
    }

    /// Largest per-step increase of the objective beyond `slack·max(1, |f|)`.
    pub fn worst_increase(&self, slack: f64) -> f64 {
        self.objectives
            .windows(2)
            .map(|w| w[1] - w[0] - slack * w[0].abs().max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_init(prob: &LinearProblem, init: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    match init {
        Some(b) if b.len() != prob.p() => Err(invalid("init has the wrong length")),
        Some(b) if b.iter().any(|v| !v.is_finite()) => Err(invalid("init must be finite")),
        Some(b) => Ok(b.clone()),
        None => Ok(prob.default_init()),
    }
}

/// Mixture-of-ridge EM for half-square penalties.
pub fn em_ridge_mixture(
    prob: &LinearProblem,
    pen: &PenaltySpec,
    init: Option<&DVector<f64>>,
    opts: EmOptions,
) -> Result<EmTrace> {
    if pen.transform() != Transform::HalfSquare {
        return Err(invalid("ridge-mixture EM needs a half-square penalty"));
    }
    let mut beta = check_init(prob, init)?;
    let xtx = prob.x.transpose() * &prob.x;
    let xty = prob.x.transpose() * &prob.y;
    let s2 = prob.sigma * prob.sigma;
    let mut trace = EmTrace {
        objectives: vec![prob.objective(pen, &beta)],
        iterates: vec![beta.clone()],
        converged: false,
        iterations: 0,
    };
    for _ in 0..opts.max_iter {
        let mut a = xtx.clone();
        for j in 0..prob.p() {
            a[(j, j)] += s2 * pen.em_weight(beta[j]);
        }
        let next = a
            .cholesky()
            .ok_or_else(|| Error::Singular("generalized ridge system is not positive definite".into()))?
            .solve(&xty);
        let change = (&next - &beta).amax();
        beta = next;
        trace.iterations += 1;
        trace.objectives.push(prob.objective(pen, &beta));
        trace.iterates.push(beta.clone());
        if change < opts.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

/// Reweighted-lasso EM for `|β|` penalties.
pub fn em_lla(prob: &LinearProblem, pen: &PenaltySpec, init: Option<&DVector<f64>>, opts: EmOptions) -> Result<EmTrace> {
    if pen.transform() != Transform::Abs {
        return Err(invalid("LLA EM needs an absolute-value penalty"));
    }
    let mut beta = check_init(prob, init)?;
    let s2 = prob.sigma * prob.sigma;
    let mut trace = EmTrace {
        objectives: vec![prob.objective(pen, &beta)],
        iterates: vec![beta.clone()],
        converged: false,
        iterations: 0,
    };
    let mut cd = CoordinateDescent::new(prob);
    for _ in 0..opts.max_iter {
        let weights: Vec<f64> = beta.iter().map(|b| s2 * pen.em_weight(*b)).collect();
        let mut next = cd.solve(&weights, Some(&beta), opts.inner_tol, opts.inner_max_iter)?;
        next.iter_mut().filter(|v| v.abs() < 1e-12).for_each(|v| *v = 0.0);
        let change = (&next - &beta).amax();
        beta = next;
        trace.iterations += 1;
        trace.objectives.push(prob.objective(pen, &beta));
        trace.iterates.push(beta.clone());
        if change < opts.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

/// Minimizes `½‖y − Xβ‖² + Σ_j w_j |β_j|` by cyclic coordinate descent.
pub fn weighted_lasso_cd(
    prob: &LinearProblem,
    weights: &[f64],
    init: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    CoordinateDescent::new(prob).solve(weights, init, tol, max_iter)
}

/// KKT residual of the weighted lasso at `beta`.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, weights: &[f64], beta: &DVector<f64>) -> f64 {
    let g = x.transpose() * (y - x * beta);
    kkt(&g, weights, beta)
}

fn kkt(g: &DVector<f64>, weights: &[f64], beta: &DVector<f64>) -> f64 {
    g.iter()
        .zip(weights)
        .zip(beta.iter())
        .map(|((g, w), b)| if *b == 0.0 { (g.abs() - w).max(0.0) } else { (g - w * b.signum()).abs() })
        .fold(0.0, f64::max)
}

/// Reusable coordinate-descent workspace for one design.
pub(crate) struct CoordinateDescent<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    col_sq: Vec<f64>,
}

impl<'a> CoordinateDescent<'a> {
    pub(crate) fn new(prob: &'a LinearProblem) -> Self {
        Self::from_parts(&prob.x, &prob.y)
    }

    pub(crate) fn from_parts(x: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        let col_sq = x.column_iter().map(|c| c.norm_squared()).collect();
        Self { x, y, col_sq }
    }

    pub(crate) fn solve(
        &mut self,
        weights: &[f64],
        init: Option<&DVector<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> Result<DVector<f64>> {
        let p = self.x.ncols();
        if weights.len() != p || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights must be nonnegative, one per column"));
        }
        let mut beta = init.cloned().unwrap_or_else(|| DVector::zeros(p));
        let mut resid = self.y - self.x * &beta;
        let mut sweeps = 0;
        loop {
            // Full sweep, then sweeps restricted to the active set until they settle.
            let mut delta = self.sweep(weights, &mut beta, &mut resid, None);
            sweeps += 1;
            if delta == 0.0 {
                // A full sweep that moves nothing is a fixed point up to rounding.
                return Ok(beta);
            }
            while delta > 0.0 && sweeps < max_iter {
                let active: Vec<usize> = (0..p).filter(|j| beta[*j] != 0.0).collect();
                let last = delta;
                delta = self.sweep(weights, &mut beta, &mut resid, Some(&active));
                sweeps += 1;
                // Stalling changes are rounding noise; go back to a full sweep.
                if delta < 1e-3 * tol || delta >= last {
                    break;
                }
            }
            // Recompute the residual to keep rounding from accumulating.
            resid = self.y - self.x * &beta;
            let g = self.x.transpose() * &resid;
            let res = kkt(&g, weights, &beta);
            if res <= tol {
                return Ok(beta);
            }
            if sweeps >= max_iter {
                return Err(Error::NoConvergence { iterations: sweeps, residual: res });
            }
        }
    }

    // Returns the largest KKT-scaled coordinate change.
    fn sweep(&self, w: &[f64], beta: &mut DVector<f64>, resid: &mut DVector<f64>, subset: Option<&[usize]>) -> f64 {
        let mut max_change: f64 = 0.0;
        let all: Vec<usize>;
        let idx = match subset {
            Some(s) => s,
            None => {
                all = (0..beta.len()).collect();
                &all
            }
        };
        for &j in idx {
            let c = self.col_sq[j];
            if c == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = self.x.column(j);
            let old = beta[j];
            let z = old * c + col.dot(resid);
            let new = soft_threshold(z, w[j]) / c;
            if new != old {
                resid.axpy(old - new, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(((new - old) * c).abs());
            }
        }
        max_change
    }
}

pub fn soft_threshold(z: f64, w: f64) -> f64 {
    if z > w {
        z - w
    } else if z < -w {
        z + w
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::Family;
    use approx::assert_relative_eq;

    #[test]
    fn identity_design_soft_thresholds() {
        let y = DVector::from_vec(vec![3.0, -0.5, -2.0, 1.0]);
        let prob = LinearProblem::new(DMatrix::identity(4, 4), y.clone(), 1.0).unwrap();
        let pen = PenaltySpec::new(Family::Drift, Transform::Abs, 1.0).unwrap();
        let tr = em_lla(&prob, &pen, None, EmOptions::default()).unwrap();
        let expect = [2.0, 0.0, -1.0, 0.0];
        for (b, e) in tr.solution().iter().zip(expect) {
            assert_relative_eq!(*b, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_response_gives_zero_fixed_point() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin());
        let prob = LinearProblem::new(x, DVector::zeros(6), 1.0).unwrap();
        let pen = PenaltySpec::new(Family::Gamma, Transform::HalfSquare, 1.0).unwrap();
        let init = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let tr = em_ridge_mixture(&prob, &pen, Some(&init), EmOptions::default()).unwrap();
        assert!(tr.solution().amax() < 1e-8);
    }

    #[test]
    fn rejects_wrong_transform() {
        let prob = LinearProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap();
        let sq = PenaltySpec::ridge(1.0).unwrap();
        assert!(em_lla(&prob, &sq, None, EmOptions::default()).is_err());
    }
}
