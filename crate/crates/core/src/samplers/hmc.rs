use rand::Rng;
use serde::Serialize;

use super::{accept_log, ChainState};
use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;
use crate::rng;
use crate::targets::Target;

/// A point of phase space: position and momentum of equal dimension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub q: Point,
    pub m: Point,
}

impl PhasePoint {
    pub fn new(q: Point, m: Point) -> Result<Self> {
        check_dim(q.dim(), m.dim())?;
        Ok(PhasePoint { q, m })
    }
}

/// `H(q, m) = U(q) + |m|^2 / 2` with `U = -log p`.
pub fn hamiltonian<T: Target + ?Sized>(target: &T, phase: &PhasePoint) -> f64 {
    -target.log_prob(&phase.q) + kinetic(&phase.m)
}

fn kinetic(m: &[f64]) -> f64 {
    0.5 * m.iter().map(|v| v * v).sum::<f64>()
}

/// Kick–drift–kick iterations. `grad_u` holds `∇U(q)` on entry and is kept
/// current on exit, so consecutive iterations share one gradient evaluation.
pub(crate) fn leapfrog_in_place<F>(q: &mut [f64], m: &mut [f64], grad_u: &mut [f64], eps: f64, steps: usize, mut grad_fn: F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let half = 0.5 * eps;
    for _ in 0..steps {
        for (mi, gi) in m.iter_mut().zip(grad_u.iter()) {
            *mi -= half * gi;
        }
        for (qi, mi) in q.iter_mut().zip(m.iter()) {
            *qi += eps * mi;
        }
        grad_fn(q, grad_u);
        for (mi, gi) in m.iter_mut().zip(grad_u.iter()) {
            *mi -= half * gi;
        }
    }
}

/// `steps` leapfrog iterations of size `eps` for the potential whose
/// gradient is `grad_u`: half kick `m -= eps/2 ∇U(q)`, drift `q += eps m`,
/// half kick.
pub fn leapfrog<F>(start: &PhasePoint, mut grad_u: F, eps: f64, steps: usize) -> PhasePoint
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut q = start.q.to_vec();
    let mut m = start.m.to_vec();
    let mut g = vec![0.0; q.len()];
    grad_u(&q, &mut g);
    leapfrog_in_place(&mut q, &mut m, &mut g, eps, steps, grad_u);
    PhasePoint { q: q.into(), m: m.into() }
}

pub(super) fn transition<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    eps: f64,
    steps: usize,
    rng: &mut R,
) -> bool {
    let m0 = rng::standard_normal_vec(rng, state.x.len());
    let mut q = state.x.clone();
    let mut m = m0.clone();
    let mut grad_u: Vec<f64> = state.grad.iter().map(|g| -g).collect();
    let mut grad_evals = 0;
    leapfrog_in_place(&mut q, &mut m, &mut grad_u, eps, steps, |x, out| {
        target.grad_log_prob(x, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
        grad_evals += 1;
    });
    let logp_new = target.log_prob(&q);
    state.evals.gradient += grad_evals;
    state.evals.log_density += 1;

    let h_current = -state.logp + kinetic(&m0);
    let h_proposed = -logp_new + kinetic(&m);
    let u = rng::uniform(rng);
    if accept_log(h_current - h_proposed, u) {
        state.x = q;
        state.logp = logp_new;
        state.grad = grad_u.iter().map(|g| -g).collect();
        true
    } else {
        false
    }
}

/// One HMC step: fresh `N(0, I)` momentum, `steps` leapfrog iterations and a
/// Metropolis test on the change in total energy.
pub fn hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    x: &Point,
    target: &T,
    eps: f64,
    steps: usize,
    rng: &mut R,
) -> Result<(Point, bool)> {
    require_positive("sampler.eps", eps)?;
    if steps == 0 {
        return Err(Error::config("sampler.steps", "leapfrog steps must be at least 1"));
    }
    check_dim(target.dim(), x.dim())?;
    let mut state = ChainState::new(target, x, true);
    let accepted = transition(&mut state, target, eps, steps, rng);
    Ok((state.x.into(), accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{acceptance_probability, run_chain, SamplerConfig};
    use crate::targets::TargetDensity;

    fn harmonic(q: &[f64], out: &mut [f64]) {
        out.copy_from_slice(q);
    }

    fn phase(q: f64, m: f64) -> PhasePoint {
        PhasePoint::new(vec![q].into(), vec![m].into()).unwrap()
    }

    #[test]
    fn hand_evaluated_single_step() {
        // m = 0 - 0.05*1 = -0.05; q = 1 + 0.1*(-0.05) = 0.995; m = -0.05 - 0.05*0.995
        let out = leapfrog(&phase(1.0, 0.0), harmonic, 0.1, 1);
        assert!((out.q[0] - 0.995).abs() < 1e-15);
        assert!((out.m[0] + 0.09975).abs() < 1e-15);
    }

    #[test]
    fn zero_step_size_is_identity() {
        let start = phase(0.7, -1.3);
        assert_eq!(leapfrog(&start, harmonic, 0.0, 10), start);
    }

    #[test]
    fn time_reversible() {
        let t = TargetDensity::banana(2, 0.5, 2.0).unwrap();
        let grad_u = |q: &[f64], out: &mut [f64]| {
            t.grad_log_prob(q, out);
            out.iter_mut().for_each(|v| *v = -*v);
        };
        let start = PhasePoint::new(vec![0.4, -1.0].into(), vec![0.9, 0.3].into()).unwrap();
        let fwd = leapfrog(&start, grad_u, 0.05, 40);
        let flipped = PhasePoint { q: fwd.q.clone(), m: fwd.m.iter().map(|v| -v).collect::<Vec<_>>().into() };
        let back = leapfrog(&flipped, grad_u, 0.05, 40);
        for i in 0..2 {
            assert!((back.q[i] - start.q[i]).abs() < 1e-10);
            assert!((-back.m[i] - start.m[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_jacobian_on_harmonic_oscillator() {
        let h = 1e-5;
        let map = |q: f64, m: f64| {
            let o = leapfrog(&phase(q, m), harmonic, 0.3, 7);
            (o.q[0], o.m[0])
        };
        for q in [-1.5, -0.5, 0.0, 0.8, 2.0] {
            for m in [-1.0, 0.0, 0.5, 1.7] {
                let (qp, mp) = map(q + h, m);
                let (qm, mm) = map(q - h, m);
                let (qp2, mp2) = map(q, m + h);
                let (qm2, mm2) = map(q, m - h);
                let j = [
                    [(qp - qm) / (2.0 * h), (qp2 - qm2) / (2.0 * h)],
                    [(mp - mm) / (2.0 * h), (mp2 - mm2) / (2.0 * h)],
                ];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                assert!((det - 1.0).abs() < 1e-6, "det {det} at ({q},{m})");
            }
        }
    }

    #[test]
    fn energy_error_is_second_order() {
        let max_dh = |eps: f64| {
            let n = (10.0 / eps).round() as usize;
            let mut q = vec![1.0];
            let mut m = vec![0.0];
            let mut g = vec![1.0];
            let h0 = 0.5;
            let mut worst: f64 = 0.0;
            for _ in 0..n {
                leapfrog_in_place(&mut q, &mut m, &mut g, eps, 1, harmonic);
                worst = worst.max((0.5 * q[0] * q[0] + 0.5 * m[0] * m[0] - h0).abs());
            }
            worst
        };
        let ratio = max_dh(0.1) / max_dh(0.05);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn tiny_step_accepts_almost_surely() {
        let t = TargetDensity::gaussian(vec![0.5, -0.5], vec![0.5, 2.0]).unwrap();
        let mut r = rng::seeded(77);
        for _ in 0..200 {
            let x: Point = rng::standard_normal_vec(&mut r, 2).into();
            let m: Point = rng::standard_normal_vec(&mut r, 2).into();
            let start = PhasePoint::new(x.clone(), m).unwrap();
            let end = leapfrog(
                &start,
                |q, out| {
                    t.grad_log_prob(q, out);
                    out.iter_mut().for_each(|v| *v = -*v);
                },
                1e-3,
                1,
            );
            let a = acceptance_probability(hamiltonian(&t, &start) - hamiltonian(&t, &end));
            assert!(a >= 1.0 - 1e-4, "{a}");
        }
    }

    #[test]
    fn gradient_budget_is_counted() {
        let t = TargetDensity::standard_gaussian(2);
        let c = run_chain(&SamplerConfig::Hmc { eps: 0.1, leapfrog_steps: 20 }, &t, &Point::zeros(2), 100, 0, 1, 1).unwrap();
        assert_eq!(c.evaluations.gradient, 1 + 100 * 20);
    }

    #[test]
    fn step_matches_chain() {
        let t = TargetDensity::ring(2, 2.0, 0.5).unwrap();
        let x0: Point = vec![2.0, 0.1].into();
        let mut r = rng::seeded(13);
        let mut x = x0.clone();
        for _ in 0..50 {
            x = hmc_step(&x, &t, 0.2, 5, &mut r).unwrap().0;
        }
        let c = run_chain(&SamplerConfig::Hmc { eps: 0.2, leapfrog_steps: 5 }, &t, &x0, 50, 0, 1, 13).unwrap();
        assert_eq!(c.samples.last().unwrap(), &x);
    }
}
