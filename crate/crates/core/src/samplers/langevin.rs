use rand::Rng;
use rayon::prelude::*;

use super::{accept_log, ChainState, TemperatureSchedule};
use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;
use crate::rng;
use crate::targets::Target;

/// `x + drift_coef·g + noise_scale·ξ`, the shared arithmetic of every
/// Langevin-type update.
pub fn langevin_update(x: &[f64], grad: &[f64], drift_coef: f64, noise_scale: f64, xi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(grad)
        .zip(xi)
        .map(|((x, g), n)| x + drift_coef * g + noise_scale * n)
        .collect()
}

/// Drift coefficient `tau^2 / (2 T)`. At `T = 1` this is bitwise `tau^2 / 2`.
fn drift_coef(tau: f64, temperature: f64) -> f64 {
    tau * tau / (2.0 * temperature)
}

/// ULA/ALMC transition: unconditionally move to
/// `x + tau^2/(2T)·∇log p(x) + tau·ξ`.
pub(super) fn langevin_transition<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    tau: f64,
    temperature: f64,
    rng: &mut R,
) -> bool {
    let xi = rng::standard_normal_vec(rng, state.x.len());
    state.x = langevin_update(&state.x, &state.grad, drift_coef(tau, temperature), tau, &xi);
    target.grad_log_prob(&state.x, &mut state.grad);
    state.evals.gradient += 1;
    true
}

fn log_q(to: &[f64], from: &[f64], grad_from: &[f64], tau: f64) -> f64 {
    let c = drift_coef(tau, 1.0);
    let sq: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((t, f), g)| {
            let d = t - f - c * g;
            d * d
        })
        .sum();
    -sq / (2.0 * tau * tau)
}

/// Log of the MALA acceptance ratio for moving from `x` to `y`, including
/// the asymmetric proposal densities `q(y|x) = N(x + tau^2/2 ∇log p(x), tau^2 I)`.
pub fn mala_log_acceptance(
    x: &[f64],
    logp_x: f64,
    grad_x: &[f64],
    y: &[f64],
    logp_y: f64,
    grad_y: &[f64],
    tau: f64,
) -> f64 {
    (logp_y - logp_x) + log_q(x, y, grad_y, tau) - log_q(y, x, grad_x, tau)
}

pub(super) fn mala_transition<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    tau: f64,
    rng: &mut R,
) -> bool {
    let xi = rng::standard_normal_vec(rng, state.x.len());
    let y = langevin_update(&state.x, &state.grad, drift_coef(tau, 1.0), tau, &xi);
    let logp_y = target.log_prob(&y);
    let mut grad_y = vec![0.0; y.len()];
    target.grad_log_prob(&y, &mut grad_y);
    state.evals.log_density += 1;
    state.evals.gradient += 1;
    let log_ratio = mala_log_acceptance(&state.x, state.logp, &state.grad, &y, logp_y, &grad_y, tau);
    let u = rng::uniform(rng);
    if accept_log(log_ratio, u) {
        state.x = y;
        state.logp = logp_y;
        state.grad = grad_y;
        true
    } else {
        false
    }
}

/// One unadjusted Langevin step `x + (tau^2/2)∇log p(x) + tau·ξ`.
pub fn ula_step<T: Target + ?Sized, R: Rng + ?Sized>(x: &Point, target: &T, tau: f64, rng: &mut R) -> Result<Point> {
    almc_step(x, target, tau, 1.0, rng)
}

/// One annealed Langevin step `x + tau^2/(2T)·∇log p(x) + tau·ξ`. Only the
/// drift is tempered; the noise scale stays `tau`.
pub fn almc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    x: &Point,
    target: &T,
    tau: f64,
    temperature: f64,
    rng: &mut R,
) -> Result<Point> {
    require_positive("sampler.tau", tau)?;
    if !(temperature.is_finite() && temperature >= 1.0) {
        return Err(Error::config("sampler.temperature", "must be at least 1"));
    }
    check_dim(target.dim(), x.dim())?;
    let mut state = ChainState::new(target, x, true);
    langevin_transition(&mut state, target, tau, temperature, rng);
    Ok(state.x.into())
}

/// One MALA step: a ULA proposal corrected by a Metropolis–Hastings test.
pub fn mala_step<T: Target + ?Sized, R: Rng + ?Sized>(
    x: &Point,
    target: &T,
    tau: f64,
    rng: &mut R,
) -> Result<(Point, bool)> {
    require_positive("sampler.tau", tau)?;
    check_dim(target.dim(), x.dim())?;
    let mut state = ChainState::new(target, x, true);
    let accepted = mala_transition(&mut state, target, tau, rng);
    Ok((state.x.into(), accepted))
}

/// Runs one full sweep of `schedule` from `x0` and returns the final state.
pub fn anneal_almc<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x0: &Point,
    tau: f64,
    schedule: &TemperatureSchedule,
    rng: &mut R,
) -> Result<Point> {
    require_positive("sampler.tau", tau)?;
    check_dim(target.dim(), x0.dim())?;
    let mut state = ChainState::new(target, x0, true);
    for step in 0..schedule.total_steps() {
        langevin_transition(&mut state, target, tau, schedule.temperature_at(step), rng);
    }
    Ok(state.x.into())
}

/// `n_chains` independent annealing sweeps run in parallel; chain `i` draws
/// from sub-stream `i` of `seed`, so the result does not depend on thread count.
pub fn almc_ensemble<T: Target + ?Sized>(
    target: &T,
    x0: &Point,
    tau: f64,
    schedule: &TemperatureSchedule,
    n_chains: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|i| anneal_almc(target, x0, tau, schedule, &mut rng::substream(seed, i)))
        .collect()
}
