use rand::Rng;

use super::{accept_log, ChainState};
use crate::error::{check_dim, require_positive, Result};
use crate::point::Point;
use crate::rng;
use crate::targets::Target;

/// `min(1, exp(log_ratio))`; a NaN ratio has probability 0.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Random-walk proposal `x + sigma·ξ`, then one uniform draw for the
/// accept test. Rejection leaves the state untouched.
pub(super) fn transition<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    sigma: f64,
    rng: &mut R,
) -> bool {
    let proposal: Vec<f64> = state
        .x
        .iter()
        .map(|x| x + sigma * rng::standard_normal(rng))
        .collect();
    let lp = target.log_prob(&proposal);
    state.evals.log_density += 1;
    let u = rng::uniform(rng);
    if accept_log(lp - state.logp, u) {
        state.x = proposal;
        state.logp = lp;
        true
    } else {
        false
    }
}

/// One Metropolis–Hastings step. Returns the next state and whether the
/// proposal was accepted; on rejection the returned state equals `x`.
pub fn mh_step<T: Target + ?Sized, R: Rng + ?Sized>(
    x: &Point,
    target: &T,
    proposal_sigma: f64,
    rng: &mut R,
) -> Result<(Point, bool)> {
    require_positive("sampler.sigma", proposal_sigma)?;
    check_dim(target.dim(), x.dim())?;
    let mut state = ChainState::new(target, x, false);
    let accepted = transition(&mut state, target, proposal_sigma, rng);
    Ok((state.x.into(), accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::TargetDensity;

    #[test]
    fn acceptance_probabilities() {
        let t = TargetDensity::standard_gaussian(2);
        let up = t.log_prob(&[0.0, 0.0]) - t.log_prob(&[1.0, 1.0]);
        assert_eq!(acceptance_probability(up), 1.0);
        let down = t.log_prob(&[1.0, 1.0]) - t.log_prob(&[0.0, 0.0]);
        assert!((acceptance_probability(down) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((acceptance_probability(down) - 0.3679).abs() < 1e-4);
        assert_eq!(acceptance_probability(f64::NAN), 0.0);
        assert_eq!(acceptance_probability(-800.0), 0.0);
    }

    #[test]
    fn step_consumes_one_uniform_even_when_uphill() {
        // proposal noise (2 normals) + exactly one uniform per step
        let t = TargetDensity::standard_gaussian(2);
        let mut a = rng::seeded(4);
        let _ = mh_step(&vec![50.0, 50.0].into(), &t, 0.1, &mut a).unwrap();
        let mut b = rng::seeded(4);
        let _ = rng::standard_normal_vec(&mut b, 2);
        let _ = rng::uniform(&mut b);
        assert_eq!(rng::uniform(&mut a), rng::uniform(&mut b));
    }

    #[test]
    fn rejected_step_returns_input() {
        let t = TargetDensity::standard_gaussian(1);
        let mut r = rng::seeded(0);
        let x: Point = vec![0.0].into();
        let mut saw_reject = false;
        for _ in 0..200 {
            let (y, acc) = mh_step(&x, &t, 5.0, &mut r).unwrap();
            if !acc {
                assert_eq!(y, x);
                saw_reject = true;
            }
        }
        assert!(saw_reject);
    }

    #[test]
    fn listing_parameters_recover_moments() {
        let t = TargetDensity::standard_gaussian(2);
        let mut r = rng::seeded(2024);
        let mut x = Point::zeros(2);
        let mut sum = [0.0; 2];
        let n = 10_000;
        for _ in 0..n {
            x = mh_step(&x, &t, 1.0, &mut r).unwrap().0;
            sum[0] += x[0];
            sum[1] += x[1];
        }
        assert!(sum.iter().all(|s| (s / n as f64).abs() < 0.1), "{sum:?}");
    }
}
