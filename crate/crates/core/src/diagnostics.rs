//! Chain-quality metrics.
//!
//! Autocorrelations use the biased (divide-by-N) autocovariance estimator, so
//! the FFT and direct routes agree to rounding. ESS truncates the
//! autocorrelation sum at the first negative lag.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::point::Point;
use crate::samplers::Chain;
use crate::targets::Target;

/// Fraction of out-of-grid samples above which a histogram comparison is
/// flagged as unreliable.
pub const OUTSIDE_WARNING_FRACTION: f64 = 0.2;

pub fn acceptance_rate_of(flags: &[bool]) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::RejectedInput("no proposal events recorded".into()));
    }
    Ok(flags.iter().filter(|a| **a).count() as f64 / flags.len() as f64)
}

pub fn acceptance_rate(chain: &Chain) -> Result<f64> {
    acceptance_rate_of(&chain.accept_flags)
}

fn centered(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    if series.len() < 2 {
        return Err(Error::RejectedInput("series needs at least two values".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n;
    if var == 0.0 || !var.is_finite() {
        return Err(Error::UndefinedVariance);
    }
    Ok((c, var))
}

/// Lag-`lag` autocorrelation computed directly from the definition.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    let (c, var) = centered(series)?;
    if lag >= series.len() {
        return Err(Error::RejectedInput(format!("lag {lag} not below series length {}", series.len())));
    }
    if lag == 0 {
        return Ok(1.0);
    }
    let n = series.len() as f64;
    let cov = c.iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n;
    Ok(cov / var)
}

/// Autocorrelation at every lag `0..N`, via zero-padded FFT.
pub fn autocorrelation_fft(series: &[f64]) -> Result<Vec<f64>> {
    let (c, _) = centered(series)?;
    let n = c.len();
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = c.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let zero = buf[0].re;
    let mut acf: Vec<f64> = buf[..n].iter().map(|z| z.re / zero).collect();
    acf[0] = 1.0;
    Ok(acf)
}

/// `N / (1 + 2 Σ ρ_k)` given autocorrelations `acf[0..N]`.
pub fn ess_from_acf(acf: &[f64]) -> f64 {
    let n = acf.len() as f64;
    let tail: f64 = acf.iter().skip(1).take_while(|r| **r >= 0.0).sum();
    let ess = n / (1.0 + 2.0 * tail);
    ess.clamp(f64::MIN_POSITIVE, n)
}

/// Effective sample size with initial-positive-sequence truncation.
pub fn ess(series: &[f64]) -> Result<f64> {
    if series.len() < 10 {
        return Err(Error::RejectedInput(format!("ESS needs at least 10 values, got {}", series.len())));
    }
    Ok(ess_from_acf(&autocorrelation_fft(series)?))
}

/// ESS of each coordinate of a chain's stored samples.
pub fn ess_per_dim(samples: &[Point]) -> Result<Vec<f64>> {
    let dim = samples.first().map(Point::dim).unwrap_or(0);
    (0..dim)
        .map(|d| ess(&samples.iter().map(|p| p[d]).collect::<Vec<_>>()))
        .collect()
}

/// Sample mean and unbiased sample covariance.
pub fn moments(samples: &[Point]) -> Result<(Point, Vec<Vec<f64>>)> {
    if samples.len() < 2 {
        return Err(Error::RejectedInput("moments need at least two samples".into()));
    }
    let dim = samples[0].dim();
    for s in samples {
        check_dim(dim, s.dim())?;
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![vec![0.0; dim]; dim];
    for s in samples {
        for i in 0..dim {
            let di = s[i] - mean[i];
            for j in i..dim {
                cov[i][j] += di * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }
    Ok((mean.into(), cov))
}

/// Axis-aligned grid over one or two dimensions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        let dim = lower.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::config("grid.lower", "histogram grids support one or two dimensions"));
        }
        check_dim(dim, upper.len())?;
        check_dim(dim, bins.len())?;
        for d in 0..dim {
            if !(lower[d].is_finite() && upper[d].is_finite() && upper[d] > lower[d]) {
                return Err(Error::config("grid.upper", "upper bound must exceed lower bound"));
            }
            if bins[d] < 4 {
                return Err(Error::config("grid.bins", "need at least 4 bins per dimension"));
            }
        }
        Ok(Grid { lower, upper, bins })
    }

    /// The same bounds and bin count in every one of `dim` dimensions.
    pub fn uniform(dim: usize, lower: f64, upper: f64, bins: usize) -> Result<Self> {
        Grid::new(vec![lower; dim], vec![upper; dim], vec![bins; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn cells(&self) -> usize {
        self.bins.iter().product()
    }

    fn width(&self, d: usize) -> f64 {
        (self.upper[d] - self.lower[d]) / self.bins[d] as f64
    }

    /// Row-major cell index of `x`, or `None` outside the bounds.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut index = 0;
        for d in 0..self.dim() {
            let v = x[d];
            if !(v >= self.lower[d] && v < self.upper[d]) {
                return None;
            }
            let b = (((v - self.lower[d]) / self.width(d)) as usize).min(self.bins[d] - 1);
            index = index * self.bins[d] + b;
        }
        Some(index)
    }

    fn cell_lower(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut out = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let b = rem % self.bins[d];
            rem /= self.bins[d];
            out[d] = self.lower[d] + b as f64 * self.width(d);
        }
        out
    }
}

/// Cell masses over a grid plus the mass that fell outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub masses: Vec<f64>,
    pub outside: f64,
}

impl Histogram {
    pub fn from_samples(samples: &[Point], grid: &Grid) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::RejectedInput("histogram of an empty sample".into()));
        }
        let mut counts = vec![0usize; grid.cells()];
        let mut outside = 0usize;
        for s in samples {
            check_dim(grid.dim(), s.dim())?;
            match grid.cell_of(s) {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        let n = samples.len() as f64;
        Ok(Histogram {
            masses: counts.iter().map(|c| *c as f64 / n).collect(),
            outside: outside as f64 / n,
        })
    }

    /// Target mass per cell from numerically normalizing `exp(log p)` over
    /// the grid with an `sub × sub` midpoint rule inside each cell.
    pub fn from_target<T: Target + ?Sized>(target: &T, grid: &Grid, sub: usize) -> Result<Self> {
        check_dim(grid.dim(), target.dim())?;
        let sub = sub.max(1);
        let dim = grid.dim();
        let offsets: Vec<Vec<f64>> = match dim {
            1 => (0..sub).map(|i| vec![(i as f64 + 0.5) / sub as f64]).collect(),
            _ => (0..sub * sub)
                .map(|k| vec![((k / sub) as f64 + 0.5) / sub as f64, ((k % sub) as f64 + 0.5) / sub as f64])
                .collect(),
        };
        let mut logs = Vec::with_capacity(grid.cells());
        let mut point = vec![0.0; dim];
        for cell in 0..grid.cells() {
            let lo = grid.cell_lower(cell);
            let vals: Vec<f64> = offsets
                .iter()
                .map(|o| {
                    for d in 0..dim {
                        point[d] = lo[d] + o[d] * grid.width(d);
                    }
                    target.log_prob(&point)
                })
                .collect();
            logs.push(log_sum_exp(&vals));
        }
        let total = log_sum_exp(&logs);
        if !total.is_finite() {
            return Err(Error::RejectedInput("target has no mass on the grid".into()));
        }
        Ok(Histogram {
            masses: logs.iter().map(|l| (l - total).exp()).collect(),
            outside: 0.0,
        })
    }

    /// Cell masses followed by the slack (outside) cell.
    pub fn with_slack(&self) -> Vec<f64> {
        let mut v = self.masses.clone();
        v.push(self.outside);
        v
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `½ Σ |p_i − q_i|` between two probability vectors of equal length.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dim(p.len(), q.len())?;
    let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramTv {
    pub tv: f64,
    pub outside_fraction: f64,
    pub warning: bool,
}

/// Total-variation distance between the sample histogram and the gridded
/// target. Samples outside the grid land in a slack cell that the target
/// assigns zero mass.
pub fn histogram_tv<T: Target + ?Sized>(samples: &[Point], target: &T, grid: &Grid) -> Result<HistogramTv> {
    let emp = Histogram::from_samples(samples, grid)?;
    let tgt = Histogram::from_target(target, grid, 4)?;
    Ok(HistogramTv {
        tv: tv_distance(&emp.with_slack(), &tgt.with_slack())?,
        outside_fraction: emp.outside,
        warning: emp.outside > OUTSIDE_WARNING_FRACTION,
    })
}

/// Summary written by the `diagnose` command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub acceptance_rate: f64,
    pub mean: Point,
    pub covariance: Vec<Vec<f64>>,
    pub ess_per_dim: Vec<f64>,
    pub tv_distance: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    pub fn from_samples<T: Target + ?Sized>(
        samples: &[Point],
        accept_flags: &[bool],
        tv_against: Option<(&T, &Grid)>,
    ) -> Result<Self> {
        let (mean, covariance) = moments(samples)?;
        let mut warnings = Vec::new();
        let tv_distance = match tv_against {
            Some((target, grid)) => {
                let h = histogram_tv(samples, target, grid)?;
                if h.warning {
                    warnings.push(format!(
                        "{:.1}% of samples fall outside the histogram grid",
                        100.0 * h.outside_fraction
                    ));
                }
                Some(h.tv)
            }
            None => None,
        };
        Ok(DiagnosticsReport {
            acceptance_rate: acceptance_rate_of(accept_flags)?,
            mean,
            covariance,
            ess_per_dim: ess_per_dim(samples)?,
            tv_distance,
            warnings,
        })
    }

    pub fn from_chain<T: Target + ?Sized>(chain: &Chain, tv_against: Option<(&T, &Grid)>) -> Result<Self> {
        Self::from_samples(&chain.samples, &chain.accept_flags, tv_against)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess_per_dim.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::samplers::{run_chain, SamplerConfig};
    use crate::targets::TargetDensity;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        rng::standard_normal_vec(&mut rng::seeded(seed), n)
    }

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        let s = (1.0 - rho * rho).sqrt();
        let mut x = rng::standard_normal(&mut r);
        (0..n)
            .map(|_| {
                x = rho * x + s * rng::standard_normal(&mut r);
                x
            })
            .collect()
    }

    #[test]
    fn acceptance_rate_extremes() {
        assert_eq!(acceptance_rate_of(&[true; 5]).unwrap(), 1.0);
        assert_eq!(acceptance_rate_of(&[false; 5]).unwrap(), 0.0);
        assert!(acceptance_rate_of(&[]).is_err());
    }

    #[test]
    fn lag_zero_is_one() {
        let s = normals(100, 1);
        assert_eq!(autocorrelation(&s, 0).unwrap(), 1.0);
        assert_eq!(autocorrelation_fft(&s).unwrap()[0], 1.0);
    }

    #[test]
    fn constant_series_is_rejected() {
        let s = vec![2.5; 50];
        assert_eq!(autocorrelation(&s, 1), Err(Error::UndefinedVariance));
        assert_eq!(ess(&s), Err(Error::UndefinedVariance));
    }

    #[test]
    fn lag_must_be_in_range() {
        assert!(autocorrelation(&normals(10, 1), 10).is_err());
    }

    #[test]
    fn iid_lag_one_vanishes() {
        let n = 100_000;
        let r = autocorrelation(&normals(n, 3), 1).unwrap();
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "{r}");
    }

    #[test]
    fn ar1_lag_one() {
        let r = autocorrelation(&ar1(0.9, 100_000, 4), 1).unwrap();
        assert!((r - 0.9).abs() < 0.02, "{r}");
    }

    #[test]
    fn fft_matches_direct() {
        let s = ar1(0.7, 5000, 9);
        let acf = autocorrelation_fft(&s).unwrap();
        for lag in [0, 1, 2, 5, 17, 200, 4999] {
            assert!((acf[lag] - autocorrelation(&s, lag).unwrap()).abs() < 1e-10, "lag {lag}");
        }
    }

    #[test]
    fn iid_ess_near_n() {
        let n = 10_000;
        let e = ess(&normals(n, 5)).unwrap();
        assert!((e - n as f64).abs() < 0.15 * n as f64, "{e}");
        assert!(e <= n as f64);
    }

    #[test]
    fn duplicated_pairs_halve_ess() {
        let base = normals(5000, 6);
        let s: Vec<f64> = base.iter().flat_map(|v| [*v, *v]).collect();
        let e = ess(&s).unwrap();
        let half = s.len() as f64 / 2.0;
        assert!((e - half).abs() < 0.2 * half, "{e}");
    }

    #[test]
    fn ar1_ess_matches_closed_form() {
        // N (1 - rho) / (1 + rho)
        let n = 200_000;
        let e = ess(&ar1(0.5, n, 8)).unwrap();
        let want = n as f64 / 3.0;
        assert!((e - want).abs() < 0.1 * want, "{e} vs {want}");
    }

    #[test]
    fn sticky_mh_has_tiny_ess() {
        let t = TargetDensity::standard_gaussian(1);
        let c = run_chain(&SamplerConfig::Mh { proposal_sigma: 0.01 }, &t, &Point::zeros(1), 20_000, 0, 1, 3).unwrap();
        let e = ess(&c.coordinate(0)).unwrap();
        assert!(e < c.samples.len() as f64 / 10.0, "{e}");
    }

    #[test]
    fn short_series_rejected() {
        assert!(ess(&normals(9, 1)).is_err());
    }

    #[test]
    fn moment_basics() {
        let (m, c) = moments(&[vec![0.0, 0.0].into(), vec![2.0, 2.0].into()]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 1.0]);
        assert_eq!(c, vec![vec![2.0, 2.0], vec![2.0, 2.0]]);
        let same = vec![Point::from(vec![1.5, -2.0]); 10];
        assert_eq!(moments(&same).unwrap().1, vec![vec![0.0; 2]; 2]);
        assert!(moments(&same[..1]).is_err());
    }

    #[test]
    fn gaussian_covariance() {
        let mut r = rng::seeded(10);
        let s: Vec<Point> = (0..100_000).map(|_| rng::standard_normal_vec(&mut r, 2).into()).collect();
        let (_, c) = moments(&s).unwrap();
        assert!((c[0][0] - 1.0).abs() < 0.05 && (c[1][1] - 1.0).abs() < 0.05 && c[0][1].abs() < 0.05);
    }

    #[test]
    fn exact_draws_have_small_tv() {
        let t = TargetDensity::standard_gaussian(2);
        let mut r = rng::seeded(12);
        let s: Vec<Point> = (0..100_000).map(|_| rng::standard_normal_vec(&mut r, 2).into()).collect();
        let grid = Grid::uniform(2, -4.0, 4.0, 16).unwrap();
        let h = histogram_tv(&s, &t, &grid).unwrap();
        assert!(h.tv < 0.05, "{}", h.tv);
        assert!(!h.warning);
    }

    #[test]
    fn concentrated_vs_spread_is_near_one() {
        let t = TargetDensity::gaussian(vec![0.0], vec![1e6]).unwrap();
        let s = vec![Point::from(vec![0.01]); 100];
        let grid = Grid::uniform(1, -10.0, 10.0, 100).unwrap();
        assert!(histogram_tv(&s, &t, &grid).unwrap().tv > 0.98);
    }

    #[test]
    fn far_samples_raise_warning() {
        let t = TargetDensity::standard_gaussian(1);
        let s: Vec<Point> = (0..10).map(|i| Point::from(vec![if i < 3 { 50.0 } else { 0.0 }])).collect();
        let h = histogram_tv(&s, &t, &Grid::uniform(1, -4.0, 4.0, 8).unwrap()).unwrap();
        assert!(h.warning);
        assert!((h.outside_fraction - 0.3).abs() < 1e-12);
    }

    #[test]
    fn identical_histograms_have_zero_tv() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::uniform(3, 0.0, 1.0, 8).is_err());
        assert!(Grid::uniform(1, 0.0, 1.0, 3).is_err());
        assert!(Grid::uniform(1, 1.0, 0.0, 8).is_err());
    }

    #[test]
    fn report_serializes_fixed_fields() {
        let t = TargetDensity::standard_gaussian(2);
        let c = run_chain(&SamplerConfig::Mh { proposal_sigma: 1.0 }, &t, &Point::zeros(2), 2000, 0, 1, 1).unwrap();
        let grid = Grid::uniform(2, -4.0, 4.0, 8).unwrap();
        let r = DiagnosticsReport::from_chain(&c, Some((&t, &grid))).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["acceptance_rate", "covariance", "ess_per_dim", "mean", "tv_distance"]);
        assert!(r.ess_per_dim.iter().all(|e| *e > 0.0 && *e <= 2000.0));
        assert_eq!(r.covariance[0][1], r.covariance[1][0]);
    }
}
