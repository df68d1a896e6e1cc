//! Discrete-time SDE trajectories: Euler–Maruyama, Brownian motion (optionally
//! confined to a region) and the overdamped Langevin SDE
//! `dx = ∇log p(x) dt + √2 dW`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::descriptor::Descriptor;
use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;
use crate::rng;
use crate::targets::Target;

/// Attempts per step before a confined walker gives up and stays put.
pub const MAX_CONSTRAINT_RETRIES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct SdePath {
    /// States at times `0, dt, 2 dt, ...`; includes the initial state.
    pub points: Vec<Point>,
    pub dt: f64,
    pub seed: u64,
}

impl SdePath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points.len()).map(move |i| i as f64 * self.dt)
    }
}

type Indicator = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A pure indicator of the allowed region.
#[derive(Clone)]
pub struct RegionConstraint {
    name: String,
    indicator: Indicator,
}

impl RegionConstraint {
    pub fn new(name: impl Into<String>, indicator: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        RegionConstraint {
            name: name.into(),
            indicator: Arc::new(indicator),
        }
    }

    pub fn disk(radius: f64) -> Self {
        Self::new(format!("disk:radius={radius}"), move |x| norm(x) <= radius)
    }

    /// Points whose distance from the origin lies in `[inner, outer]`; a thin
    /// annulus confines the walk to a circle.
    pub fn annulus(inner: f64, outer: f64) -> Self {
        Self::new(format!("annulus:inner={inner},outer={outer}"), move |x| {
            let r = norm(x);
            r >= inner && r <= outer
        })
    }

    /// The axis-aligned box `[-half_width, half_width]^d`.
    pub fn square(half_width: f64) -> Self {
        Self::new(format!("square:half_width={half_width}"), move |x| {
            x.iter().all(|v| v.abs() <= half_width)
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (self.indicator)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `disk:radius=1`, `annulus:inner=0.9,outer=1.1` or `square:half_width=1`.
    pub fn from_descriptor(desc: &Descriptor) -> Result<Self> {
        match desc.kind.as_str() {
            "disk" => {
                desc.reject_unknown(&["radius"])?;
                let r = desc.f64_or("radius", 1.0)?;
                require_positive(&desc.field("radius"), r)?;
                Ok(Self::disk(r))
            }
            "annulus" => {
                desc.reject_unknown(&["inner", "outer"])?;
                let inner = desc.f64_or("inner", 0.9)?;
                let outer = desc.f64_or("outer", 1.1)?;
                if !(inner >= 0.0 && outer > inner) {
                    return Err(Error::config(desc.field("outer"), "need 0 <= inner < outer"));
                }
                Ok(Self::annulus(inner, outer))
            }
            "square" => {
                desc.reject_unknown(&["half_width"])?;
                let h = desc.f64_or("half_width", 1.0)?;
                require_positive(&desc.field("half_width"), h)?;
                Ok(Self::square(h))
            }
            other => Err(Error::config(
                format!("{}.kind", desc.section),
                format!("unknown constraint `{other}` (expected disk, annulus or square)"),
            )),
        }
    }
}

impl fmt::Debug for RegionConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionConstraint").field("name", &self.name).finish()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `x + drift·dt + sigma·√dt·ξ` for a given standard-normal vector `xi`.
pub fn euler_maruyama_update(x: &[f64], drift: &[f64], sigma: f64, dt: f64, xi: &[f64]) -> Point {
    let scale = sigma * dt.sqrt();
    x.iter()
        .zip(drift)
        .zip(xi)
        .map(|((xi0, d), n)| xi0 + d * dt + scale * n)
        .collect::<Vec<_>>()
        .into()
}

/// One Euler–Maruyama step with a fresh standard-normal draw.
pub fn euler_maruyama_step<R: Rng + ?Sized>(
    x: &Point,
    drift: &[f64],
    sigma: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Point> {
    require_positive("dt", dt)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("sigma", "must be non-negative"));
    }
    check_dim(x.dim(), drift.len())?;
    let xi = rng::standard_normal_vec(rng, x.dim());
    Ok(euler_maruyama_update(x, drift, sigma, dt, &xi))
}

/// Random walk with `N(0, step_sigma^2 I)` increments. With a constraint, a
/// step leaving the region is re-proposed up to [`MAX_CONSTRAINT_RETRIES`]
/// times, after which the walker stays where it is for that step.
pub fn simulate_brownian(
    x0: &Point,
    steps: usize,
    step_sigma: f64,
    constraint: Option<&RegionConstraint>,
    seed: u64,
) -> Result<SdePath> {
    if steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    require_positive("sigma", step_sigma)?;
    if let Some(c) = constraint {
        if !c.contains(x0) {
            return Err(Error::RejectedInput(format!(
                "initial state lies outside the region {}",
                c.name()
            )));
        }
    }
    let mut rng = rng::seeded(seed);
    let dim = x0.dim();
    let mut points = Vec::with_capacity(steps + 1);
    points.push(x0.clone());
    let mut current = x0.to_vec();
    let mut candidate = vec![0.0; dim];
    for _ in 0..steps {
        let attempts = if constraint.is_some() { MAX_CONSTRAINT_RETRIES } else { 1 };
        for _ in 0..attempts {
            for (c, x) in candidate.iter_mut().zip(&current) {
                *c = x + step_sigma * rng::standard_normal(&mut rng);
            }
            if constraint.is_none_or(|c| c.contains(&candidate)) {
                current.copy_from_slice(&candidate);
                break;
            }
        }
        points.push(Point::from(current.clone()));
    }
    Ok(SdePath { points, dt: 1.0, seed })
}

/// Euler–Maruyama discretization of `dx = ∇log p(x) dt + √2 dW`.
pub fn simulate_langevin_sde<T: Target + ?Sized>(
    target: &T,
    x0: &Point,
    steps: usize,
    dt: f64,
    seed: u64,
) -> Result<SdePath> {
    check_dim(target.dim(), x0.dim())?;
    if steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    require_positive("dt", dt)?;
    let mut rng = rng::seeded(seed);
    let sigma = std::f64::consts::SQRT_2;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(x0.clone());
    let mut drift = vec![0.0; x0.dim()];
    let mut xi = vec![0.0; x0.dim()];
    let mut x = x0.clone();
    for _ in 0..steps {
        target.grad_log_prob(&x, &mut drift);
        rng::fill_standard_normal(&mut rng, &mut xi);
        x = euler_maruyama_update(&x, &drift, sigma, dt, &xi);
        points.push(x.clone());
    }
    Ok(SdePath { points, dt, seed })
}
