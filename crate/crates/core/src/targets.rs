//! Analytic target densities.
//!
//! Every target is stored as an *unnormalized* log-density together with its
//! exact gradient. Samplers never need the normalizer; it is carried along as
//! optional metadata for the kinds where it has a closed form.

use std::f64::consts::PI;

use serde::Serialize;

use crate::descriptor::{broadcast, Descriptor};
use crate::error::{check_dim, require_positive, Error, Result};
use crate::point::Point;

/// Anything a sampler can target: an unnormalized log-density on `R^dim`
/// with its gradient. Implementations must be pure.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn log_prob(&self, x: &[f64]) -> f64;

    /// Writes `∇ log p(x)` into `out`.
    fn grad_log_prob(&self, x: &[f64], out: &mut [f64]);
}

/// Diagonal Gaussian used both as a target and as a mixture component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    fn unnorm_log(&self, x: &[f64]) -> f64 {
        -0.5 * x
            .iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((xi, m), v)| (xi - m) * (xi - m) / v)
            .sum::<f64>()
    }

    fn log_normalizer(&self) -> f64 {
        self.var.iter().map(|v| 0.5 * (2.0 * PI * v).ln()).sum()
    }

    fn normalized_log(&self, x: &[f64]) -> f64 {
        self.unnorm_log(x) - self.log_normalizer()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    Gaussian(DiagGaussian),
    /// Weighted sum of normalized diagonal Gaussians.
    Mixture {
        weights: Vec<f64>,
        components: Vec<DiagGaussian>,
    },
    /// `log p = -(|x| - radius)^2 / (2 width^2)`: an annulus around the origin.
    Ring { radius: f64, width: f64 },
    /// Gaussian in the curved coordinates `y1 = x1`,
    /// `y2 = x2 - curvature * x1^2 + curvature * scale^2`, with `y1 ~ N(0, scale^2)`,
    /// `y2 ~ N(0, 1)` and any further coordinates standard normal.
    Banana { curvature: f64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetDensity {
    dim: usize,
    kind: TargetKind,
    /// Constant added to every log-density value (a positive rescaling of the
    /// unnormalized density).
    log_scale: f64,
    log_norm_const: Option<f64>,
}

impl TargetDensity {
    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::config("target.dim", "must be at least 1"));
        }
        check_dim(mean.len(), var.len())?;
        for v in &var {
            require_positive("target.var", *v)?;
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("target.mean", "must be finite"));
        }
        let g = DiagGaussian { mean, var };
        let log_z = g.log_normalizer();
        Ok(TargetDensity {
            dim: g.mean.len(),
            kind: TargetKind::Gaussian(g),
            log_scale: 0.0,
            log_norm_const: Some(log_z),
        })
    }

    /// `N(0, I)` in `dim` dimensions with the unnormalized density `exp(-x·x/2)`.
    pub fn standard_gaussian(dim: usize) -> Self {
        Self::gaussian(vec![0.0; dim], vec![1.0; dim]).expect("valid standard gaussian")
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("target.weights", "need at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::config(
                "target.weights",
                format!("{} weights for {} components", weights.len(), components.len()),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("target.weights", "weights must be strictly positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("target.weights", format!("weights sum to {total}, not 1")));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::config("target.dim", "must be at least 1"));
        }
        for c in &components {
            if c.mean.len() != dim || c.var.len() != dim {
                return Err(Error::config("target.means", "components differ in dimension"));
            }
            for v in &c.var {
                require_positive("target.vars", *v)?;
            }
        }
        Ok(TargetDensity {
            dim,
            kind: TargetKind::Mixture { weights, components },
            log_scale: 0.0,
            log_norm_const: Some(0.0),
        })
    }

    /// Equal-weight mixture of two unit-variance Gaussians centred at `±offset`
    /// along every axis.
    pub fn symmetric_bimodal(dim: usize, offset: f64) -> Self {
        let comp = |s: f64| DiagGaussian {
            mean: vec![s * offset; dim],
            var: vec![1.0; dim],
        };
        Self::mixture(vec![0.5, 0.5], vec![comp(-1.0), comp(1.0)]).expect("valid mixture")
    }

    pub fn ring(dim: usize, radius: f64, width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("target.dim", "must be at least 1"));
        }
        require_positive("target.radius", radius)?;
        require_positive("target.width", width)?;
        Ok(TargetDensity {
            dim,
            kind: TargetKind::Ring { radius, width },
            log_scale: 0.0,
            log_norm_const: None,
        })
    }

    pub fn banana(dim: usize, curvature: f64, scale: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("target.dim", "banana needs at least 2 dimensions"));
        }
        if !curvature.is_finite() {
            return Err(Error::config("target.curvature", "must be finite"));
        }
        require_positive("target.scale", scale)?;
        // The curved map has unit Jacobian, so Z is that of the underlying Gaussian.
        let log_z = 0.5 * (2.0 * PI * scale * scale).ln() + 0.5 * (dim - 1) as f64 * (2.0 * PI).ln();
        Ok(TargetDensity {
            dim,
            kind: TargetKind::Banana { curvature, scale },
            log_scale: 0.0,
            log_norm_const: Some(log_z),
        })
    }

    /// The same target with its unnormalized density multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        require_positive("target.scale_factor", factor)?;
        let mut out = self.clone();
        out.log_scale += factor.ln();
        out.log_norm_const = self.log_norm_const.map(|z| z + factor.ln());
        Ok(out)
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    /// `log Z` of the unnormalized density, when known in closed form.
    pub fn log_norm_const(&self) -> Option<f64> {
        self.log_norm_const
    }

    /// Log of the unnormalized density at `x`.
    pub fn log_density(&self, x: &Point) -> Result<f64> {
        check_dim(self.dim, x.dim())?;
        Ok(self.log_prob(x))
    }

    /// Exact gradient of [`Self::log_density`].
    pub fn grad_log_density(&self, x: &Point) -> Result<Point> {
        check_dim(self.dim, x.dim())?;
        let mut g = vec![0.0; self.dim];
        self.grad_log_prob(x, &mut g);
        Ok(Point::from(g))
    }

    fn mixture_log_terms(weights: &[f64], components: &[DiagGaussian], x: &[f64]) -> (Vec<f64>, f64) {
        let terms: Vec<f64> = weights
            .iter()
            .zip(components)
            .map(|(w, c)| w.ln() + c.normalized_log(x))
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
        (terms, lse)
    }
}

impl Target for TargetDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        let base = match &self.kind {
            TargetKind::Gaussian(g) => g.unnorm_log(x),
            TargetKind::Mixture { weights, components } => {
                Self::mixture_log_terms(weights, components, x).1
            }
            TargetKind::Ring { radius, width } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                -(r - radius) * (r - radius) / (2.0 * width * width)
            }
            TargetKind::Banana { curvature, scale } => {
                let y2 = x[1] - curvature * x[0] * x[0] + curvature * scale * scale;
                let rest: f64 = x[2..].iter().map(|v| v * v).sum();
                -x[0] * x[0] / (2.0 * scale * scale) - 0.5 * y2 * y2 - 0.5 * rest
            }
        };
        base + self.log_scale
    }

    fn grad_log_prob(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            TargetKind::Gaussian(g) => {
                for i in 0..x.len() {
                    out[i] = -(x[i] - g.mean[i]) / g.var[i];
                }
            }
            TargetKind::Mixture { weights, components } => {
                let (terms, lse) = Self::mixture_log_terms(weights, components, x);
                out.iter_mut().for_each(|o| *o = 0.0);
                for (t, c) in terms.iter().zip(components) {
                    let resp = (t - lse).exp();
                    for i in 0..x.len() {
                        out[i] += resp * (-(x[i] - c.mean[i]) / c.var[i]);
                    }
                }
            }
            TargetKind::Ring { radius, width } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    // Not differentiable at the origin; every direction is symmetric.
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    let coef = -(r - radius) / (width * width * r);
                    for i in 0..x.len() {
                        out[i] = coef * x[i];
                    }
                }
            }
            TargetKind::Banana { curvature, scale } => {
                let y2 = x[1] - curvature * x[0] * x[0] + curvature * scale * scale;
                out[0] = -x[0] / (scale * scale) + 2.0 * curvature * x[0] * y2;
                out[1] = -y2;
                for i in 2..x.len() {
                    out[i] = -x[i];
                }
            }
        }
    }
}

/// Builds a target from a descriptor such as `gaussian:dim=2,mean=0,var=1`,
/// `mixture:weights=0.3;0.7,means=-4;4`, `ring:radius=2,width=0.25` or
/// `banana:curvature=0.5,scale=2`.
pub fn make_target(desc: &Descriptor) -> Result<TargetDensity> {
    match desc.kind.as_str() {
        "gaussian" => {
            desc.reject_unknown(&["dim", "mean", "var"])?;
            let mean = desc.get_vector("mean")?;
            let var = desc.get_vector("var")?;
            let inferred = [mean.as_ref(), var.as_ref()]
                .into_iter()
                .flatten()
                .map(Vec::len)
                .max()
                .unwrap_or(1);
            let dim = desc.usize_or("dim", inferred)?;
            if dim == 0 {
                return Err(Error::config(desc.field("dim"), "must be at least 1"));
            }
            let mean = broadcast(&desc.field("mean"), mean.unwrap_or(vec![0.0]), dim)?;
            let var = broadcast(&desc.field("var"), var.unwrap_or(vec![1.0]), dim)?;
            TargetDensity::gaussian(mean, var)
        }
        "mixture" => {
            desc.reject_unknown(&["dim", "weights", "means", "vars"])?;
            let weights: Vec<f64> = match desc.get_list("weights")? {
                Some(w) => w
                    .into_iter()
                    .map(|v| match v.as_slice() {
                        [x] => Ok(*x),
                        _ => Err(Error::config(desc.field("weights"), "weights are scalars")),
                    })
                    .collect::<Result<_>>()?,
                None => vec![0.5, 0.5],
            };
            let means = desc
                .get_list("means")?
                .unwrap_or_else(|| vec![vec![-4.0], vec![4.0]]);
            let inferred = means.iter().map(Vec::len).max().unwrap_or(1);
            let dim = desc.usize_or("dim", inferred)?;
            if dim == 0 {
                return Err(Error::config(desc.field("dim"), "must be at least 1"));
            }
            let vars = desc
                .get_list("vars")?
                .unwrap_or_else(|| vec![vec![1.0]; means.len()]);
            if means.len() != weights.len() || vars.len() != weights.len() {
                return Err(Error::config(
                    desc.field("weights"),
                    format!(
                        "{} weights, {} means and {} vars must agree",
                        weights.len(),
                        means.len(),
                        vars.len()
                    ),
                ));
            }
            let components = means
                .into_iter()
                .zip(vars)
                .map(|(m, v)| {
                    Ok(DiagGaussian {
                        mean: broadcast(&desc.field("means"), m, dim)?,
                        var: broadcast(&desc.field("vars"), v, dim)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            TargetDensity::mixture(weights, components).map_err(|e| rename_field(e, desc))
        }
        "ring" => {
            desc.reject_unknown(&["dim", "radius", "width"])?;
            TargetDensity::ring(
                desc.usize_or("dim", 2)?,
                desc.f64_or("radius", 2.0)?,
                desc.f64_or("width", 0.25)?,
            )
            .map_err(|e| rename_field(e, desc))
        }
        "banana" => {
            desc.reject_unknown(&["dim", "curvature", "scale"])?;
            TargetDensity::banana(
                desc.usize_or("dim", 2)?,
                desc.f64_or("curvature", 0.5)?,
                desc.f64_or("scale", 2.0)?,
            )
            .map_err(|e| rename_field(e, desc))
        }
        other => Err(Error::config(
            format!("{}.kind", desc.section),
            format!("unknown target kind `{other}` (expected gaussian, mixture, ring or banana)"),
        )),
    }
}

fn rename_field(err: Error, desc: &Descriptor) -> Error {
    match err {
        Error::Config { field, message } => {
            let key = field.rsplit('.').next().unwrap_or(&field).to_string();
            Error::Config {
                field: desc.field(&key),
                message,
            }
        }
        other => other,
    }
}
