//! Plain importance-sampled Monte Carlo and one-sample multiple importance
//! sampling with the balance heuristic.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;
use crate::rng;

/// A proposal with a normalized density.
pub trait Strategy: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> Point;
    fn pdf(&self, x: &[f64]) -> f64;
}

/// Diagonal Gaussian proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStrategy {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl GaussianStrategy {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), sd.len())?;
        if mean.is_empty() {
            return Err(Error::config("strategy.mean", "must be non-empty"));
        }
        for s in &sd {
            require_positive("strategy.sd", *s)?;
        }
        let s = GaussianStrategy { mean, sd };
        if s.dim() <= 2 {
            let lo: Vec<f64> = s.mean.iter().zip(&s.sd).map(|(m, d)| m - 10.0 * d).collect();
            let hi: Vec<f64> = s.mean.iter().zip(&s.sd).map(|(m, d)| m + 10.0 * d).collect();
            check_normalized(&s, &lo, &hi)?;
        }
        Ok(s)
    }
}

impl Strategy for GaussianStrategy {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Point {
        self.mean
            .iter()
            .zip(&self.sd)
            .map(|(m, s)| m + s * rng::standard_normal(rng))
            .collect::<Vec<_>>()
            .into()
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.sd)
            .zip(x)
            .map(|((m, s), v)| normal_pdf(*v, *m, *s))
            .product()
    }
}

/// Uniform proposal on an axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformStrategy {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformStrategy {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() || lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l)) {
            return Err(Error::config("strategy.upper", "need finite bounds with upper > lower"));
        }
        let s = UniformStrategy { lower, upper };
        if s.dim() <= 2 {
            check_normalized(&s, &s.lower, &s.upper)?;
        }
        Ok(s)
    }
}

impl Strategy for UniformStrategy {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Point {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect::<Vec<_>>()
            .into()
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        let inside = self.lower.iter().zip(&self.upper).zip(x).all(|((l, u), v)| *v >= *l && *v < *u);
        if inside {
            1.0 / self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product::<f64>()
        } else {
            0.0
        }
    }
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Midpoint-rule check that a 1D or 2D strategy's pdf integrates to one
/// over the given box.
fn check_normalized<S: Strategy + ?Sized>(s: &S, lower: &[f64], upper: &[f64]) -> Result<()> {
    let bins = if s.dim() == 1 { 4000 } else { 400 };
    let h: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| (u - l) / bins as f64).collect();
    let mut total = 0.0;
    if s.dim() == 1 {
        for i in 0..bins {
            total += s.pdf(&[lower[0] + (i as f64 + 0.5) * h[0]]) * h[0];
        }
    } else {
        for i in 0..bins {
            for j in 0..bins {
                let x = [lower[0] + (i as f64 + 0.5) * h[0], lower[1] + (j as f64 + 0.5) * h[1]];
                total += s.pdf(&x) * h[0] * h[1];
            }
        }
    }
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::config("strategy", format!("pdf integrates to {total}, not 1")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error of `terms`.
    pub fn from_terms(terms: &[f64]) -> Result<Self> {
        let n = terms.len();
        if n == 0 {
            return Err(Error::RejectedInput("estimate needs at least one term".into()));
        }
        let mean = terms.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Estimate { value: mean, std_error, n })
    }

    /// Sample variance of a single term, `n · std_error²`.
    pub fn term_variance(&self) -> f64 {
        self.n as f64 * self.std_error * self.std_error
    }
}

/// Importance-sampled estimate `(1/n) Σ f(x_i)/p(x_i)` with `x_i ~ p`.
pub fn mc_estimate<F, R>(f: F, strategy: &dyn Strategy, n: usize, rng: &mut R) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
    R: RngCore,
{
    if n == 0 {
        return Err(Error::config("n", "need at least one sample"));
    }
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let x = strategy.sample(rng);
        let p = strategy.pdf(&x);
        if p <= 0.0 {
            return Err(Error::InconsistentStrategy);
        }
        terms.push(f(&x) / p);
    }
    Estimate::from_terms(&terms)
}

/// Balance heuristic `w_i = p_i / Σ_j p_j`.
pub fn balance_weights(densities: &[f64]) -> Result<Vec<f64>> {
    if densities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::RejectedInput("densities must be finite and non-negative".into()));
    }
    let total: f64 = densities.iter().sum();
    if total <= 0.0 {
        return Err(Error::RejectedInput("all densities are zero".into()));
    }
    Ok(densities.iter().map(|p| p / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MisEstimate {
    pub estimate: Estimate,
    /// Largest `|Σ_i w_i − 1|` over every evaluated point.
    pub max_weight_sum_error: f64,
    pub evaluated_points: usize,
}

/// One-sample MIS: each round draws one point from every strategy and
/// weights its contribution with the balance heuristic. The reported
/// estimate is the mean of the per-round sums.
pub fn mis_estimate<F, R>(f: F, strategies: &[&dyn Strategy], n_per_strategy: usize, rng: &mut R) -> Result<MisEstimate>
where
    F: Fn(&[f64]) -> f64,
    R: RngCore,
{
    if strategies.len() < 2 {
        return Err(Error::config("strategies", "MIS needs at least two strategies"));
    }
    if n_per_strategy == 0 {
        return Err(Error::config("n", "need at least one sample per strategy"));
    }
    let dim = strategies[0].dim();
    for s in strategies {
        check_dim(dim, s.dim())?;
    }
    let mut rounds = Vec::with_capacity(n_per_strategy);
    let mut densities = vec![0.0; strategies.len()];
    let mut worst: f64 = 0.0;
    for _ in 0..n_per_strategy {
        let mut sum = 0.0;
        for (i, s) in strategies.iter().enumerate() {
            let x = s.sample(rng);
            for (d, t) in densities.iter_mut().zip(strategies) {
                *d = t.pdf(&x);
            }
            if densities[i] <= 0.0 {
                return Err(Error::InconsistentStrategy);
            }
            let w = balance_weights(&densities)?;
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
            sum += w[i] * f(&x) / densities[i];
        }
        rounds.push(sum);
    }
    Ok(MisEstimate {
        estimate: Estimate::from_terms(&rounds)?,
        max_weight_sum_error: worst,
        evaluated_points: n_per_strategy * strategies.len(),
    })
}

/// One-dimensional integrand made of a narrow and a wide Gaussian bump, each
/// with its own amplitude; the exact integral is the sum of amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoBump {
    pub narrow_mean: f64,
    pub narrow_sd: f64,
    pub narrow_amp: f64,
    pub wide_mean: f64,
    pub wide_sd: f64,
    pub wide_amp: f64,
}

impl Default for TwoBump {
    fn default() -> Self {
        TwoBump {
            narrow_mean: 0.0,
            narrow_sd: 0.1,
            narrow_amp: 2.0,
            wide_mean: 1.0,
            wide_sd: 2.0,
            wide_amp: 1.0,
        }
    }
}

impl TwoBump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.narrow_amp * normal_pdf(x[0], self.narrow_mean, self.narrow_sd)
            + self.wide_amp * normal_pdf(x[0], self.wide_mean, self.wide_sd)
    }

    pub fn integral(&self) -> f64 {
        self.narrow_amp + self.wide_amp
    }

    /// Gaussian strategies matched to the narrow and wide bump.
    pub fn strategies(&self) -> Result<(GaussianStrategy, GaussianStrategy)> {
        Ok((
            GaussianStrategy::new(vec![self.narrow_mean], vec![self.narrow_sd])?,
            GaussianStrategy::new(vec![self.wide_mean], vec![self.wide_sd])?,
        ))
    }
}
