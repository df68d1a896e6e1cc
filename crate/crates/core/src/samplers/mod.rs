//! The MCMC sampler family behind a single [`run_chain`] entry point.
//!
//! Each sampler exists twice: as a public single-step function that takes a
//! point and returns the next one, and as an internal transition on a
//! `ChainState` that caches the log-density and gradient of the current
//! state. Both share the same arithmetic and the same order of random draws,
//! so a chain is exactly the iteration of its step function.

mod hmc;
mod langevin;
mod mh;

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::descriptor::Descriptor;
use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;
use crate::rng;
use crate::targets::Target;

pub use hmc::{hamiltonian, hmc_step, leapfrog, PhasePoint};
pub use langevin::{
    almc_ensemble, almc_step, anneal_almc, langevin_update, mala_log_acceptance, mala_step, ula_step,
};
pub use mh::{acceptance_probability, mh_step};

/// Geometric-spaced temperature levels ending at exactly 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemperatureSchedule {
    temps: Vec<f64>,
    steps_per_level: usize,
}

impl TemperatureSchedule {
    /// Validates that temperatures are positive, strictly decreasing and end at 1.
    pub fn new(temps: Vec<f64>, steps_per_level: usize) -> Result<Self> {
        if temps.is_empty() {
            return Err(Error::config("sampler.temps", "schedule needs at least one level"));
        }
        if steps_per_level == 0 {
            return Err(Error::config("sampler.steps_per_level", "must be at least 1"));
        }
        if temps.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::config("sampler.temps", "temperatures must be positive"));
        }
        if temps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config("sampler.temps", "temperatures must strictly decrease"));
        }
        if *temps.last().unwrap() != 1.0 {
            return Err(Error::config("sampler.temps", "final temperature must be 1"));
        }
        Ok(TemperatureSchedule { temps, steps_per_level })
    }

    /// `levels` temperatures spaced geometrically from `t_max` down to 1.
    pub fn geometric(t_max: f64, levels: usize, steps_per_level: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::config("sampler.levels", "must be at least 1"));
        }
        if levels == 1 {
            if t_max != 1.0 {
                return Err(Error::config("sampler.t_max", "a single level must have temperature 1"));
            }
            return Self::new(vec![1.0], steps_per_level);
        }
        if !(t_max.is_finite() && t_max > 1.0) {
            return Err(Error::config("sampler.t_max", "must exceed 1"));
        }
        let temps = (0..levels)
            .map(|i| {
                if i + 1 == levels {
                    1.0
                } else {
                    t_max.powf((levels - 1 - i) as f64 / (levels - 1) as f64)
                }
            })
            .collect();
        Self::new(temps, steps_per_level)
    }

    /// The trivial schedule `[1]`.
    pub fn unit(steps_per_level: usize) -> Self {
        Self::new(vec![1.0], steps_per_level).expect("valid unit schedule")
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn steps_per_level(&self) -> usize {
        self.steps_per_level
    }

    pub fn total_steps(&self) -> usize {
        self.temps.len() * self.steps_per_level
    }

    /// Temperature used by transition `step`; the chain stays at 1 once the
    /// schedule is exhausted.
    pub fn temperature_at(&self, step: usize) -> f64 {
        self.temps.get(step / self.steps_per_level).copied().unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerConfig {
    /// Random-walk Metropolis–Hastings with isotropic Gaussian proposals.
    Mh { proposal_sigma: f64 },
    /// Unadjusted Langevin algorithm.
    Ula { tau: f64 },
    /// Metropolis-adjusted Langevin algorithm.
    Mala { tau: f64 },
    /// Annealed Langevin: ULA with the drift divided by a decreasing temperature.
    Almc { tau: f64, schedule: TemperatureSchedule },
    /// Hamiltonian Monte Carlo with an identity mass matrix.
    Hmc { eps: f64, leapfrog_steps: usize },
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerConfig::Mh { proposal_sigma } => require_positive("sampler.sigma", *proposal_sigma),
            SamplerConfig::Ula { tau } | SamplerConfig::Mala { tau } => require_positive("sampler.tau", *tau),
            SamplerConfig::Almc { tau, schedule } => {
                require_positive("sampler.tau", *tau)?;
                TemperatureSchedule::new(schedule.temps.clone(), schedule.steps_per_level).map(|_| ())
            }
            SamplerConfig::Hmc { eps, leapfrog_steps } => {
                require_positive("sampler.eps", *eps)?;
                if *leapfrog_steps == 0 {
                    return Err(Error::config("sampler.steps", "leapfrog steps must be at least 1"));
                }
                Ok(())
            }
        }
    }

    /// `mh:sigma=1`, `ula:tau=0.4`, `mala:tau=0.5`, `hmc:eps=0.1,steps=20`,
    /// `almc:tau=0.5,t_max=10,levels=10,steps_per_level=100` or
    /// `almc:tau=0.5,temps=8;4;2;1,steps_per_level=100`.
    pub fn from_descriptor(desc: &Descriptor) -> Result<Self> {
        let cfg = match desc.kind.as_str() {
            "mh" => {
                desc.reject_unknown(&["sigma"])?;
                SamplerConfig::Mh { proposal_sigma: desc.f64_or("sigma", 1.0)? }
            }
            "ula" => {
                desc.reject_unknown(&["tau"])?;
                SamplerConfig::Ula { tau: desc.f64_or("tau", 0.1)? }
            }
            "mala" => {
                desc.reject_unknown(&["tau"])?;
                SamplerConfig::Mala { tau: desc.f64_or("tau", 0.5)? }
            }
            "almc" => {
                desc.reject_unknown(&["tau", "t_max", "levels", "steps_per_level", "temps"])?;
                let steps_per_level = desc.usize_or("steps_per_level", 100)?;
                let schedule = match desc.get_list("temps")? {
                    Some(list) => {
                        let temps = list
                            .into_iter()
                            .map(|v| match v.as_slice() {
                                [t] => Ok(*t),
                                _ => Err(Error::config(desc.field("temps"), "temperatures are scalars")),
                            })
                            .collect::<Result<Vec<_>>>()?;
                        TemperatureSchedule::new(temps, steps_per_level)?
                    }
                    None => TemperatureSchedule::geometric(
                        desc.f64_or("t_max", 10.0)?,
                        desc.usize_or("levels", 10)?,
                        steps_per_level,
                    )?,
                };
                SamplerConfig::Almc { tau: desc.f64_or("tau", 0.5)?, schedule }
            }
            "hmc" => {
                desc.reject_unknown(&["eps", "steps"])?;
                SamplerConfig::Hmc {
                    eps: desc.f64_or("eps", 0.1)?,
                    leapfrog_steps: desc.usize_or("steps", 20)?,
                }
            }
            other => {
                return Err(Error::config(
                    format!("{}.kind", desc.section),
                    format!("unknown sampler `{other}` (expected mh, ula, mala, almc or hmc)"),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn needs_gradient(&self) -> bool {
        !matches!(self, SamplerConfig::Mh { .. })
    }
}

impl fmt::Display for SamplerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerConfig::Mh { proposal_sigma } => write!(f, "mh:sigma={proposal_sigma}"),
            SamplerConfig::Ula { tau } => write!(f, "ula:tau={tau}"),
            SamplerConfig::Mala { tau } => write!(f, "mala:tau={tau}"),
            SamplerConfig::Almc { tau, schedule } => {
                let temps: Vec<String> = schedule.temps.iter().map(|t| t.to_string()).collect();
                write!(
                    f,
                    "almc:steps_per_level={},tau={},temps={}",
                    schedule.steps_per_level,
                    tau,
                    temps.join(";")
                )
            }
            SamplerConfig::Hmc { eps, leapfrog_steps } => write!(f, "hmc:eps={eps},steps={leapfrog_steps}"),
        }
    }
}

/// Number of target evaluations spent by a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Evaluations {
    pub log_density: u64,
    pub gradient: u64,
}

/// A seeded sampler run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chain {
    /// Retained states, after burn-in and thinning.
    pub samples: Vec<Point>,
    /// Index of the transition that produced each retained state.
    pub sample_steps: Vec<usize>,
    /// One flag per transition, burn-in included.
    pub accept_flags: Vec<bool>,
    pub config: SamplerConfig,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub evaluations: Evaluations,
}

impl Chain {
    /// Coordinate `d` of every retained sample.
    pub fn coordinate(&self, d: usize) -> Vec<f64> {
        self.samples.iter().map(|p| p[d]).collect()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Point::dim)
    }
}

/// Current state of a chain with cached target evaluations.
pub(crate) struct ChainState {
    pub x: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
    pub evals: Evaluations,
}

impl ChainState {
    pub fn new<T: Target + ?Sized>(target: &T, x: &[f64], with_grad: bool) -> Self {
        let mut grad = vec![0.0; x.len()];
        let mut evals = Evaluations { log_density: 1, gradient: 0 };
        if with_grad {
            target.grad_log_prob(x, &mut grad);
            evals.gradient += 1;
        }
        ChainState {
            x: x.to_vec(),
            logp: target.log_prob(x),
            grad,
            evals,
        }
    }
}

/// `ln u < log_ratio`, i.e. accept with probability `min(1, exp(log_ratio))`
/// without exponentiating. NaN ratios reject.
pub(crate) fn accept_log(log_ratio: f64, u: f64) -> bool {
    u.ln() < log_ratio
}

fn transition<T: Target + ?Sized, R: Rng + ?Sized>(
    config: &SamplerConfig,
    state: &mut ChainState,
    target: &T,
    step: usize,
    rng: &mut R,
) -> bool {
    match config {
        SamplerConfig::Mh { proposal_sigma } => mh::transition(state, target, *proposal_sigma, rng),
        SamplerConfig::Ula { tau } => langevin::langevin_transition(state, target, *tau, 1.0, rng),
        SamplerConfig::Mala { tau } => langevin::mala_transition(state, target, *tau, rng),
        SamplerConfig::Almc { tau, schedule } => {
            langevin::langevin_transition(state, target, *tau, schedule.temperature_at(step), rng)
        }
        SamplerConfig::Hmc { eps, leapfrog_steps } => hmc::transition(state, target, *eps, *leapfrog_steps, rng),
    }
}

/// Runs `total_steps` transitions from `x0`, discards the first `burn_in`
/// and keeps every `thin`-th state after that, so
/// `samples.len() == (total_steps - burn_in) / thin`.
pub fn run_chain<T: Target + ?Sized>(
    config: &SamplerConfig,
    target: &T,
    x0: &Point,
    total_steps: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<Chain> {
    config.validate()?;
    check_dim(target.dim(), x0.dim())?;
    if !x0.is_finite() {
        return Err(Error::RejectedInput("initial state is not finite".into()));
    }
    if total_steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    if burn_in >= total_steps {
        return Err(Error::config(
            "burn_in",
            format!("burn-in {burn_in} must be smaller than the number of steps {total_steps}"),
        ));
    }
    if thin == 0 {
        return Err(Error::config("thin", "must be at least 1"));
    }

    let mut rng = rng::seeded(seed);
    let mut state = ChainState::new(target, x0, config.needs_gradient());
    let kept = (total_steps - burn_in) / thin;
    let mut samples = Vec::with_capacity(kept);
    let mut sample_steps = Vec::with_capacity(kept);
    let mut accept_flags = Vec::with_capacity(total_steps);

    for step in 0..total_steps {
        let accepted = transition(config, &mut state, target, step, &mut rng);
        accept_flags.push(accepted);
        if !state.x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                norm: f64::INFINITY,
                limit: f64::MAX,
            });
        }
        if step >= burn_in && (step - burn_in + 1).is_multiple_of(thin) {
            samples.push(Point::from(state.x.clone()));
            sample_steps.push(step);
        }
    }

    Ok(Chain {
        samples,
        sample_steps,
        accept_flags,
        config: config.clone(),
        seed,
        burn_in,
        thin,
        evaluations: state.evals,
    })
}
