use serde::Serialize;

use super::{BlackBoxEstimator, Splat};
use crate::descriptor::Descriptor;
use crate::error::{require_positive, Error, Result};

/// Brightness `value` everywhere.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

/// Brightness `value` on `px < 0.5`, zero on the right half.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeftHalf {
    pub dim: usize,
    pub value: f64,
}

/// Gaussian ridge of the given width around a circle: a thin bright feature
/// that is hard to hit with uniform sampling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spike {
    pub dim: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub width: f64,
}

/// Two disjoint constant-brightness disks with nothing in between.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoIsland {
    pub dim: usize,
    pub islands: [Island; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Island {
    pub center: [f64; 2],
    pub radius: f64,
    pub brightness: f64,
}

impl Island {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let dx = px - self.center[0];
        let dy = py - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }

    /// Exact integral of the island over the unit square.
    pub fn mass(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius * self.brightness
    }
}

impl Default for Spike {
    fn default() -> Self {
        Spike {
            dim: 2,
            center: [0.5, 0.5],
            radius: 0.3,
            width: 0.02,
        }
    }
}

impl Default for TwoIsland {
    fn default() -> Self {
        TwoIsland {
            dim: 2,
            islands: [
                Island {
                    center: [0.25, 0.25],
                    radius: 0.1,
                    brightness: 1.0,
                },
                Island {
                    center: [0.75, 0.7],
                    radius: 0.15,
                    brightness: 0.5,
                },
            ],
        }
    }
}

impl BlackBoxEstimator for Constant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64]) -> Splat {
        Splat::new(u[0], u[1], self.value)
    }
}

impl BlackBoxEstimator for LeftHalf {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64]) -> Splat {
        Splat::new(u[0], u[1], if u[0] < 0.5 { self.value } else { 0.0 })
    }
}

impl BlackBoxEstimator for Spike {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64]) -> Splat {
        let r = (u[0] - self.center[0]).hypot(u[1] - self.center[1]);
        let z = (r - self.radius) / self.width;
        Splat::new(u[0], u[1], (-0.5 * z * z).exp())
    }
}

impl BlackBoxEstimator for TwoIsland {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64]) -> Splat {
        let b = self
            .islands
            .iter()
            .find(|i| i.contains(u[0], u[1]))
            .map_or(0.0, |i| i.brightness);
        Splat::new(u[0], u[1], b)
    }
}

/// Built-in integrands selectable by name.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Builtin {
    Constant(Constant),
    LeftHalf(LeftHalf),
    Spike(Spike),
    TwoIsland(TwoIsland),
}

impl Builtin {
    /// Parses `constant:value=..`, `left-half:value=..`,
    /// `spike:radius=..,width=..` or `two-island`, each with optional `dim`.
    pub fn from_descriptor(desc: &Descriptor) -> Result<Self> {
        let dim = desc.usize_or("dim", 2)?;
        if dim < 2 {
            return Err(Error::config(desc.field("dim"), "primary samples need at least 2 dimensions"));
        }
        match desc.kind.as_str() {
            "constant" | "left-half" => {
                desc.reject_unknown(&["dim", "value"])?;
                let value = desc.f64_or("value", 1.0)?;
                require_positive(&desc.field("value"), value)?;
                Ok(if desc.kind == "constant" {
                    Builtin::Constant(Constant { dim, value })
                } else {
                    Builtin::LeftHalf(LeftHalf { dim, value })
                })
            }
            "spike" => {
                desc.reject_unknown(&["dim", "radius", "width"])?;
                let d = Spike::default();
                let radius = desc.f64_or("radius", d.radius)?;
                let width = desc.f64_or("width", d.width)?;
                require_positive(&desc.field("radius"), radius)?;
                require_positive(&desc.field("width"), width)?;
                Ok(Builtin::Spike(Spike { dim, radius, width, ..d }))
            }
            "two-island" => {
                desc.reject_unknown(&["dim"])?;
                Ok(Builtin::TwoIsland(TwoIsland { dim, ..TwoIsland::default() }))
            }
            other => Err(Error::config(
                format!("{}.kind", desc.section),
                format!("unknown integrand `{other}` (expected constant, left-half, spike or two-island)"),
            )),
        }
    }
}

impl BlackBoxEstimator for Builtin {
    fn dim(&self) -> usize {
        match self {
            Builtin::Constant(e) => e.dim(),
            Builtin::LeftHalf(e) => e.dim(),
            Builtin::Spike(e) => e.dim(),
            Builtin::TwoIsland(e) => e.dim(),
        }
    }

    fn eval(&self, u: &[f64]) -> Splat {
        match self {
            Builtin::Constant(e) => e.eval(u),
            Builtin::LeftHalf(e) => e.eval(u),
            Builtin::Spike(e) => e.eval(u),
            Builtin::TwoIsland(e) => e.eval(u),
        }
    }
}
