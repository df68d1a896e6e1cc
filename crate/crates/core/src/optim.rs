//! SGD, SGLD, MAP estimation and SGLD posterior sampling.
//!
//! Gradients are full-batch; minibatch noise is simulated by an optional
//! Gaussian perturbation of the gradient so the conjugate oracle stays exact.

use rand::Rng;
use serde::Serialize;

use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;
use crate::rng;

/// Parameter norm beyond which optimization is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Gradient of a loss or of a negative log-posterior.
pub trait ObjectiveGradient: Sync {
    fn dim(&self) -> usize;
    fn grad(&self, theta: &[f64], out: &mut [f64]);
}

/// Adapts a closure to [`ObjectiveGradient`].
pub struct FnGradient<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnGradient<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnGradient { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> ObjectiveGradient for FnGradient<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn grad(&self, theta: &[f64], out: &mut [f64]) {
        (self.f)(theta, out)
    }
}

/// `L(θ) = ½‖θ‖²`, gradient `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticLoss {
    pub dim: usize,
}

impl ObjectiveGradient for QuadraticLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn grad(&self, theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(theta);
    }
}

/// Scalar mean with Gaussian likelihood `N(x_i; θ, lik_var)` and prior
/// `N(θ; 0, prior_var)`; the posterior is Gaussian in closed form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugateGaussian {
    pub data: Vec<f64>,
    pub prior_var: f64,
    pub lik_var: f64,
}

impl ConjugateGaussian {
    pub fn new(data: Vec<f64>, prior_var: f64, lik_var: f64) -> Result<Self> {
        require_positive("model.prior_var", prior_var)?;
        require_positive("model.lik_var", lik_var)?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::RejectedInput("data must be finite".into()));
        }
        Ok(ConjugateGaussian { data, prior_var, lik_var })
    }

    /// `n` draws from `N(true_mean, lik_var)`.
    pub fn simulate(n: usize, true_mean: f64, prior_var: f64, lik_var: f64, seed: u64) -> Result<Self> {
        let mut r = rng::seeded(seed);
        let sd = lik_var.sqrt();
        let data = (0..n).map(|_| true_mean + sd * rng::standard_normal(&mut r)).collect();
        Self::new(data, prior_var, lik_var)
    }

    fn precision(&self) -> f64 {
        self.data.len() as f64 / self.lik_var + 1.0 / self.prior_var
    }

    pub fn posterior_var(&self) -> f64 {
        1.0 / self.precision()
    }

    /// With unit likelihood variance this is `σ₀²Σx / (nσ₀² + 1)`.
    pub fn posterior_mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.lik_var / self.precision()
    }
}

impl ObjectiveGradient for ConjugateGaussian {
    fn dim(&self) -> usize {
        1
    }

    fn grad(&self, theta: &[f64], out: &mut [f64]) {
        let t = theta[0];
        out[0] = self.data.iter().map(|x| t - x).sum::<f64>() / self.lik_var + t / self.prior_var;
    }
}

/// `θ − η·g`.
pub fn sgd_update(theta: &[f64], grad: &[f64], eta: f64) -> Vec<f64> {
    theta.iter().zip(grad).map(|(t, g)| t - eta * g).collect()
}

/// `θ − (η/2)·g + √η·ξ`.
pub fn sgld_update(theta: &[f64], grad: &[f64], eta: f64, xi: &[f64]) -> Vec<f64> {
    let half = 0.5 * eta;
    let scale = eta.sqrt();
    theta
        .iter()
        .zip(grad)
        .zip(xi)
        .map(|((t, g), n)| t - half * g + scale * n)
        .collect()
}

fn gradient_at<G: ObjectiveGradient + ?Sized>(g: &G, theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    g.grad(theta, &mut out);
    out
}

pub fn sgd_step<G: ObjectiveGradient + ?Sized>(theta: &Point, g: &G, eta: f64) -> Result<Point> {
    require_positive("eta", eta)?;
    check_dim(g.dim(), theta.dim())?;
    Ok(sgd_update(theta, &gradient_at(g, theta), eta).into())
}

pub fn sgld_step<G: ObjectiveGradient + ?Sized, R: Rng + ?Sized>(theta: &Point, g: &G, eta: f64, rng: &mut R) -> Result<Point> {
    require_positive("eta", eta)?;
    check_dim(g.dim(), theta.dim())?;
    let grad = gradient_at(g, theta);
    let xi = rng::standard_normal_vec(rng, theta.dim());
    Ok(sgld_update(theta, &grad, eta, &xi).into())
}

fn guard(theta: &[f64]) -> Result<()> {
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm.is_finite() && norm <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(Error::Divergence {
            norm,
            limit: DIVERGENCE_LIMIT,
        })
    }
}

/// Parameter trajectory of an optimizer or sampler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerTrace {
    pub thetas: Vec<Point>,
    pub eta: f64,
    pub seed: Option<u64>,
}

impl OptimizerTrace {
    pub fn last(&self) -> &Point {
        self.thetas.last().expect("trace is never empty")
    }

    pub fn coordinate(&self, d: usize) -> Vec<f64> {
        self.thetas.iter().map(|t| t[d]).collect()
    }
}

/// `iters` SGD steps; the trace holds `theta0` followed by every iterate.
pub fn sgd_trace<G: ObjectiveGradient + ?Sized>(g: &G, theta0: &Point, eta: f64, iters: usize) -> Result<OptimizerTrace> {
    require_positive("eta", eta)?;
    check_dim(g.dim(), theta0.dim())?;
    if iters == 0 {
        return Err(Error::config("steps", "need at least one iteration"));
    }
    let mut thetas = Vec::with_capacity(iters + 1);
    thetas.push(theta0.clone());
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for _ in 0..iters {
        g.grad(&theta, &mut grad);
        theta = sgd_update(&theta, &grad, eta);
        guard(&theta)?;
        thetas.push(theta.clone().into());
    }
    Ok(OptimizerTrace { thetas, eta, seed: None })
}

/// Maximum a posteriori estimate by SGD on the negative log-posterior.
pub fn map_estimate<G: ObjectiveGradient + ?Sized>(neg_log_post_grad: &G, theta0: &Point, eta: f64, iters: usize) -> Result<Point> {
    require_positive("eta", eta)?;
    check_dim(neg_log_post_grad.dim(), theta0.dim())?;
    if iters == 0 {
        return Err(Error::config("steps", "need at least one iteration"));
    }
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for _ in 0..iters {
        neg_log_post_grad.grad(&theta, &mut grad);
        theta = sgd_update(&theta, &grad, eta);
        guard(&theta)?;
    }
    Ok(theta.into())
}

/// Options for [`sgld_sample_posterior_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SgldOptions {
    /// Standard deviation of Gaussian noise added to every gradient
    /// component, standing in for minibatch noise. Drawn from a separate
    /// stream so the injection-free path is unchanged.
    pub gradient_noise: Option<f64>,
    /// Suppress the Langevin noise term (deterministic descent at rate η/2).
    pub suppress_noise: bool,
}

/// SGLD chain of `total` steps; iterates after the first `burn_in` steps
/// are retained.
pub fn sgld_sample_posterior<G: ObjectiveGradient + ?Sized>(
    neg_log_post_grad: &G,
    theta0: &Point,
    eta: f64,
    total: usize,
    burn_in: usize,
    seed: u64,
) -> Result<OptimizerTrace> {
    sgld_sample_posterior_with(neg_log_post_grad, theta0, eta, total, burn_in, seed, SgldOptions::default())
}

pub fn sgld_sample_posterior_with<G: ObjectiveGradient + ?Sized>(
    neg_log_post_grad: &G,
    theta0: &Point,
    eta: f64,
    total: usize,
    burn_in: usize,
    seed: u64,
    opts: SgldOptions,
) -> Result<OptimizerTrace> {
    require_positive("eta", eta)?;
    check_dim(neg_log_post_grad.dim(), theta0.dim())?;
    if total <= burn_in {
        return Err(Error::config("steps", "total steps must exceed burn-in"));
    }
    if let Some(sd) = opts.gradient_noise {
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(Error::config("gradient_noise", "must be a non-negative finite number"));
        }
    }
    let dim = theta0.dim();
    let mut r = rng::seeded(seed);
    let mut noise_rng = rng::substream(seed, 1);
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; dim];
    let mut xi = vec![0.0; dim];
    let mut thetas = Vec::with_capacity(total - burn_in);
    for step in 0..total {
        neg_log_post_grad.grad(&theta, &mut grad);
        if let Some(sd) = opts.gradient_noise {
            for g in grad.iter_mut() {
                *g += sd * rng::standard_normal(&mut noise_rng);
            }
        }
        rng::fill_standard_normal(&mut r, &mut xi);
        if opts.suppress_noise {
            xi.iter_mut().for_each(|v| *v = 0.0);
        }
        theta = sgld_update(&theta, &grad, eta, &xi);
        guard(&theta)?;
        if step >= burn_in {
            thetas.push(theta.clone().into());
        }
    }
    Ok(OptimizerTrace {
        thetas,
        eta,
        seed: Some(seed),
    })
}
