//! Primary-sample-space Metropolis light transport.
//!
//! The chain lives in the unit hypercube of random numbers consumed by a
//! deterministic black-box estimator. Every state maps to a pixel position
//! and a brightness; the chain targets brightness, so the histogram of
//! visited pixels is the image up to one global scale, which
//! [`normalize_image`] recovers with plain Monte Carlo.

mod builtins;

pub use builtins::{Builtin, Constant, Island, LeftHalf, Spike, TwoIsland};

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{require_positive, Error, Result};
use crate::rng;

/// Attempts at finding a positive-brightness starting state.
pub const MAX_INIT_TRIES: usize = 1_000_000;

/// A point of the primary sample space, every coordinate in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PrimarySample(Vec<f64>);

impl PrimarySample {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.len() < 2 {
            return Err(Error::RejectedInput("primary samples need at least 2 coordinates".into()));
        }
        if u.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::RejectedInput("primary sample coordinates must lie in [0, 1)".into()));
        }
        Ok(PrimarySample(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Output of one estimator evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Splat {
    pub px: f64,
    pub py: f64,
    pub brightness: f64,
}

impl Splat {
    pub fn new(px: f64, py: f64, brightness: f64) -> Self {
        Splat { px, py, brightness }
    }
}

/// A deterministic map from primary samples to a pixel and a brightness.
pub trait BlackBoxEstimator: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64]) -> Splat;
}

/// Row-major image of non-negative pixel values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("image.width", "image dimensions must be positive"));
        }
        Ok(Image {
            width,
            height,
            pixels: vec![0.0; width * height],
        })
    }

    /// Pixel index of `(px, py)`: column `floor(px·W)`, row `floor(py·H)`.
    pub fn index_of(&self, px: f64, py: f64) -> usize {
        let col = ((px * self.width as f64) as usize).min(self.width - 1);
        let row = ((py * self.height as f64) as usize).min(self.height - 1);
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn splat(&mut self, s: &Splat, weight: f64) {
        let i = self.index_of(s.px, s.py);
        self.pixels[i] += weight;
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.pixels.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            pixels: self.pixels.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }

    /// Pixel values divided by their sum.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let s = self.sum();
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::DegenerateIntegrand("image has no mass".into()));
        }
        Ok(self.pixels.iter().map(|p| p / s).collect())
    }

    pub fn add(&mut self, other: &Image) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch {
                expected: self.pixels.len(),
                got: other.pixels.len(),
            });
        }
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a += b;
        }
        Ok(())
    }
}

/// `v mod 1` in `[0, 1)`.
pub fn wrap(v: f64) -> f64 {
    let w = v - v.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Local mutation `u_k + sigma·ξ_k`, wrapped back into `[0, 1)`.
pub fn small_step<R: Rng + ?Sized>(u: &PrimarySample, sigma: f64, rng: &mut R) -> PrimarySample {
    PrimarySample(u.0.iter().map(|v| wrap(v + sigma * rng::standard_normal(rng))).collect())
}

/// Independent mutation: fresh uniform coordinates.
pub fn large_step<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PrimarySample {
    PrimarySample((0..dim).map(|_| rng::uniform(rng)).collect())
}

/// One-coordinate transition density of [`small_step`]: the wrapped normal,
/// summed over enough images to be exact to rounding.
pub fn small_step_density(from: f64, to: f64, sigma: f64) -> f64 {
    let images = (8.0 * sigma).ceil() as i64 + 1;
    (-images..=images)
        .map(|k| {
            let z = (to - from + k as f64) / sigma;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        / (sigma * (2.0 * PI).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplatMode {
    /// Splat current and proposed states with weights `1 − a` and `a`.
    Expected,
    /// Splat only the state the chain holds after each mutation.
    Accepted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub n_mutations: usize,
    pub large_step_prob: f64,
    pub sigma: f64,
    pub splat: SplatMode,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 32,
            height: 32,
            n_mutations: 1_000_000,
            large_step_prob: 0.3,
            sigma: 0.02,
            splat: SplatMode::Expected,
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::config("width", "must be positive"));
        }
        if self.height == 0 {
            return Err(Error::config("height", "must be positive"));
        }
        if self.n_mutations == 0 {
            return Err(Error::config("mutations", "must be at least 1"));
        }
        if !(self.large_step_prob >= 0.0 && self.large_step_prob <= 1.0) {
            return Err(Error::config("large_step_prob", "must lie in [0, 1]"));
        }
        require_positive("sigma", self.sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Render {
    pub image: Image,
    pub accepted: usize,
    pub mutations: usize,
    pub large_steps: usize,
    pub init_tries: usize,
}

impl Render {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.mutations as f64
    }
}

/// Runs one PSSMLT chain and returns the unnormalized pixel histogram.
pub fn pssmlt_render<E: BlackBoxEstimator + ?Sized>(est: &E, cfg: &RenderConfig) -> Result<Render> {
    cfg.validate()?;
    render_with(est, cfg, &mut rng::seeded(cfg.seed))
}

fn render_with<E: BlackBoxEstimator + ?Sized, R: Rng + ?Sized>(est: &E, cfg: &RenderConfig, rng: &mut R) -> Result<Render> {
    let dim = est.dim();
    if dim < 2 {
        return Err(Error::RejectedInput("estimator needs at least 2 primary dimensions".into()));
    }
    let mut image = Image::new(cfg.width, cfg.height)?;

    let mut init_tries = 0;
    let (mut u, mut cur) = loop {
        if init_tries == MAX_INIT_TRIES {
            return Err(Error::DegenerateIntegrand(format!(
                "no positive-brightness state in {MAX_INIT_TRIES} uniform draws"
            )));
        }
        init_tries += 1;
        let u = large_step(dim, rng);
        let s = est.eval(u.as_slice());
        if s.brightness > 0.0 && s.brightness.is_finite() {
            break (u, s);
        }
    };

    let mut accepted = 0;
    let mut large_steps = 0;
    for _ in 0..cfg.n_mutations {
        let large = rng::uniform(rng) < cfg.large_step_prob;
        let proposal = if large {
            large_steps += 1;
            large_step(dim, rng)
        } else {
            small_step(&u, cfg.sigma, rng)
        };
        let prop = est.eval(proposal.as_slice());
        let a = if prop.brightness > 0.0 && prop.brightness.is_finite() {
            (prop.brightness.ln() - cur.brightness.ln()).exp().min(1.0)
        } else {
            0.0
        };
        if cfg.splat == SplatMode::Expected {
            image.splat(&cur, 1.0 - a);
            image.splat(&prop, a);
        }
        if rng::uniform(rng) < a {
            u = proposal;
            cur = prop;
            accepted += 1;
        }
        if cfg.splat == SplatMode::Accepted {
            image.splat(&cur, 1.0);
        }
    }
    Ok(Render {
        image,
        accepted,
        mutations: cfg.n_mutations,
        large_steps,
        init_tries,
    })
}

/// `chains` independent renders on sub-streams of `cfg.seed`, summed.
pub fn render_chains<E: BlackBoxEstimator + ?Sized>(est: &E, cfg: &RenderConfig, chains: usize) -> Result<Render> {
    cfg.validate()?;
    if chains == 0 {
        return Err(Error::config("chains", "must be at least 1"));
    }
    if chains == 1 {
        return pssmlt_render(est, cfg);
    }
    let renders: Vec<Render> = (0..chains as u64)
        .into_par_iter()
        .map(|i| render_with(est, cfg, &mut rng::substream(cfg.seed, i)))
        .collect::<Result<_>>()?;
    let mut total = Image::new(cfg.width, cfg.height)?;
    let (mut accepted, mut mutations, mut large_steps, mut init_tries) = (0, 0, 0, 0);
    for r in &renders {
        total.add(&r.image)?;
        accepted += r.accepted;
        mutations += r.mutations;
        large_steps += r.large_steps;
        init_tries += r.init_tries;
    }
    Ok(Render {
        image: total,
        accepted,
        mutations,
        large_steps,
        init_tries,
    })
}

/// Plain-MC estimate of the mean brightness over uniform primary samples.
pub fn mean_brightness<E: BlackBoxEstimator + ?Sized, R: Rng + ?Sized>(est: &E, n: usize, rng: &mut R) -> f64 {
    let dim = est.dim();
    let mut u = vec![0.0; dim];
    let mut total = 0.0;
    for _ in 0..n {
        for v in u.iter_mut() {
            *v = rng::uniform(rng);
        }
        total += est.eval(&u).brightness;
    }
    total / n as f64
}

/// Rescales `img` so its mean pixel equals the plain-MC mean brightness.
pub fn normalize_image<E: BlackBoxEstimator + ?Sized, R: Rng + ?Sized>(
    img: &Image,
    est: &E,
    n_mc: usize,
    rng: &mut R,
) -> Result<Image> {
    if n_mc == 0 {
        return Err(Error::config("mc_samples", "must be at least 1"));
    }
    let b = mean_brightness(est, n_mc, rng);
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::DegenerateIntegrand(format!("plain-MC mean brightness is {b}")));
    }
    let m = img.mean();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::DegenerateIntegrand(
            "image is empty but the integrand has positive mean".into(),
        ));
    }
    Ok(img.scaled(b / m))
}

/// Plain-MC image: each pixel estimates the integral of brightness over
/// the primary samples landing in it, scaled to per-pixel intensity.
/// Work is split into fixed chunks on sub-streams of `seed`, so the result
/// does not depend on the thread count.
pub fn reference_image<E: BlackBoxEstimator + ?Sized>(
    est: &E,
    width: usize,
    height: usize,
    n: usize,
    seed: u64,
) -> Result<Image> {
    const CHUNKS: usize = 64;
    if n == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    let dim = est.dim();
    let blank = Image::new(width, height)?;
    let parts: Vec<Image> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let count = n / CHUNKS + usize::from(c < n % CHUNKS);
            let mut r = rng::substream(seed, c as u64);
            let mut img = blank.clone();
            let mut u = vec![0.0; dim];
            for _ in 0..count {
                for v in u.iter_mut() {
                    *v = rng::uniform(&mut r);
                }
                let s = est.eval(&u);
                img.splat(&s, s.brightness);
            }
            img
        })
        .collect();
    let mut total = blank;
    for p in &parts {
        total.add(p)?;
    }
    Ok(total.scaled((width * height) as f64 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_rule() {
        assert!((wrap(0.95 + 0.10) - 0.05).abs() < 1e-12);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(-1e-18), 0.0);
        assert_eq!(wrap(3.0), 0.0);
    }

    #[test]
    fn tiny_sigma_keeps_sample() {
        let u = PrimarySample::new(vec![0.3, 0.7]).unwrap();
        let v = small_step(&u, 1e-300, &mut rng::seeded(1));
        assert_eq!(u, v);
    }

    #[test]
    fn wrapped_density_is_symmetric_and_normalized() {
        for sigma in [0.02, 0.3, 1.5] {
            let n = 2000;
            let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            for &a in grid.iter().step_by(97) {
                for &b in grid.iter().step_by(89) {
                    let (f, r) = (small_step_density(a, b, sigma), small_step_density(b, a, sigma));
                    assert!((f - r).abs() <= 1e-12 * f.max(1.0));
                }
                let total: f64 = grid.iter().map(|b| small_step_density(a, *b, sigma)).sum::<f64>() / n as f64;
                assert!((total - 1.0).abs() < 1e-6, "{total}");
            }
        }
    }

    #[test]
    fn large_step_contract() {
        let mut r = rng::seeded(2);
        let n = 100_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let u = large_step(3, &mut r);
            assert_eq!(u.dim(), 3);
            for (s, v) in sum.iter_mut().zip(u.as_slice()) {
                assert!((0.0..1.0).contains(v));
                *s += v;
            }
        }
        let se = (1.0 / 12.0 / n as f64).sqrt();
        assert!(sum.iter().all(|s| (s / n as f64 - 0.5).abs() < 3.0 * se));
    }

    #[test]
    fn primary_sample_validation() {
        assert!(PrimarySample::new(vec![0.5]).is_err());
        assert!(PrimarySample::new(vec![0.5, 1.0]).is_err());
        assert!(PrimarySample::new(vec![0.0, 0.999]).is_ok());
    }

    #[test]
    fn pixel_mapping() {
        let img = Image::new(4, 2).unwrap();
        assert_eq!(img.index_of(0.0, 0.0), 0);
        assert_eq!(img.index_of(0.99, 0.0), 3);
        assert_eq!(img.index_of(0.3, 0.6), 5);
    }

    #[test]
    fn left_half_never_lights_right_half() {
        let est = LeftHalf { dim: 2, value: 2.0 };
        let cfg = RenderConfig {
            width: 8,
            height: 8,
            n_mutations: 100_000,
            seed: 4,
            ..RenderConfig::default()
        };
        let r = pssmlt_render(&est, &cfg).unwrap();
        for row in 0..8 {
            for col in 4..8 {
                assert_eq!(r.image.get(row, col), 0.0);
            }
            assert!(r.image.get(row, 0) > 0.0);
        }
    }

    #[test]
    fn dark_integrand_is_degenerate() {
        let est = Constant { dim: 2, value: 0.0 };
        let cfg = RenderConfig {
            n_mutations: 10,
            ..RenderConfig::default()
        };
        assert!(matches!(pssmlt_render(&est, &cfg), Err(Error::DegenerateIntegrand(_))));
    }

    #[test]
    fn normalize_rejects_empty_image_and_is_scale_free() {
        let est = Constant { dim: 2, value: 3.0 };
        let empty = Image::new(4, 4).unwrap();
        assert!(normalize_image(&empty, &est, 100, &mut rng::seeded(0)).is_err());
        let mut img = Image::new(4, 4).unwrap();
        img.pixels.iter_mut().enumerate().for_each(|(i, p)| *p = i as f64);
        let a = normalize_image(&img, &est, 100, &mut rng::seeded(0)).unwrap();
        let b = normalize_image(&img.scaled(2.0), &est, 100, &mut rng::seeded(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_renders_flat() {
        // Small steps cluster about 1/large_step_prob samples per independent
        // draw, so per-pixel relative noise is ~1% at 4x4 and ~2% at 8x8.
        let est = Constant { dim: 2, value: 2.5 };
        let cfg = RenderConfig {
            width: 4,
            height: 4,
            n_mutations: 1_000_000,
            seed: 11,
            ..RenderConfig::default()
        };
        let r = pssmlt_render(&est, &cfg).unwrap();
        assert_eq!(r.accepted, r.mutations);
        let img = normalize_image(&r.image, &est, 1000, &mut rng::seeded(1)).unwrap();
        for p in &img.pixels {
            assert!((p / 2.5 - 1.0).abs() < 0.05, "{p}");
        }
    }

    #[test]
    fn chain_visits_both_islands() {
        let est = TwoIsland::default();
        let cfg = RenderConfig {
            width: 64,
            height: 64,
            n_mutations: 1_000_000,
            seed: 5,
            ..RenderConfig::default()
        };
        let img = pssmlt_render(&est, &cfg).unwrap().image;
        let [a, b] = est.islands;
        let mut near_a = 0.0;
        for row in 0..64 {
            for col in 0..64 {
                let (x, y) = ((col as f64 + 0.5) / 64.0, (row as f64 + 0.5) / 64.0);
                let da = (x - a.center[0]).hypot(y - a.center[1]);
                let db = (x - b.center[0]).hypot(y - b.center[1]);
                if da < db {
                    near_a += img.get(row, col);
                }
            }
        }
        let frac_a = near_a / img.sum();
        let truth = a.mass() / (a.mass() + b.mass());
        assert!((frac_a - truth).abs() < 0.1 * truth, "{frac_a} vs {truth}");
        assert!(((1.0 - frac_a) - (1.0 - truth)).abs() < 0.1 * (1.0 - truth));
    }

    #[test]
    fn deterministic_per_seed_and_modes_differ() {
        let est = Spike::default();
        let cfg = RenderConfig {
            width: 16,
            height: 16,
            n_mutations: 20_000,
            seed: 9,
            ..RenderConfig::default()
        };
        assert_eq!(pssmlt_render(&est, &cfg).unwrap(), pssmlt_render(&est, &cfg).unwrap());
        let naive = RenderConfig {
            splat: SplatMode::Accepted,
            ..cfg.clone()
        };
        let r = pssmlt_render(&est, &naive).unwrap();
        assert!((r.image.sum() - 20_000.0).abs() < 1e-6);
    }

    #[test]
    fn chains_sum_and_are_thread_independent() {
        let est = Spike::default();
        let cfg = RenderConfig {
            width: 8,
            height: 8,
            n_mutations: 5000,
            seed: 3,
            ..RenderConfig::default()
        };
        let a = render_chains(&est, &cfg, 4).unwrap();
        let b = render_chains(&est, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert!((a.image.sum() - 20_000.0).abs() < 1e-6);
    }

    #[test]
    fn reference_image_mean_is_integral() {
        let est = Constant { dim: 2, value: 2.0 };
        let img = reference_image(&est, 8, 8, 100_000, 1).unwrap();
        assert!((img.mean() - 2.0).abs() < 1e-9);
    }
}
