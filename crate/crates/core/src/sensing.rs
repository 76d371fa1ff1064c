//! Sensing-rate footprints and their rasterization into the coverage field.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::AgentState;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{Grid2D, ScalarField};
use crate::par;

/// Rates below this are treated as zero.
pub const RATE_FLOOR: f64 = 1e-12;

/// Radially symmetric Gaussian detection rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiskFootprint {
    pub mu: f64,
    pub sigma: f64,
    /// Nominal detection radius. Informational only; the rate is not cut off here.
    #[serde(default)]
    pub radius: f64,
}

/// Constant rate over a heading-aligned rectangle (camera frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectFootprint {
    pub mu: f64,
    /// Extent across the heading.
    pub width: f64,
    /// Extent along the heading.
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Footprint {
    Gaussian(GaussianDiskFootprint),
    Rect(RectFootprint),
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("detection probability must lie in (0, 1), got {mu}")))
    }
}

impl GaussianDiskFootprint {
    pub fn peak(&self) -> f64 {
        -(1.0 - self.mu).ln() / 2.0 * self.mu
    }
}

impl RectFootprint {
    pub fn rate(&self) -> f64 {
        -(1.0 - self.mu).ln() / 9.0 * self.mu
    }
}

/// `(-ln(1 - mu) / 2) * mu * exp(-0.5 (d / sigma)^2)`.
pub fn gamma_gaussian(d: f64, f: &GaussianDiskFootprint) -> f64 {
    let r = f.peak() * (-0.5 * (d / f.sigma).powi(2)).exp();
    if r < RATE_FLOOR {
        0.0
    } else {
        r
    }
}

/// Rate at a point in the footprint frame: `x` across the heading, `y` along it.
pub fn gamma_rect(local: Vec2, f: &RectFootprint) -> f64 {
    if local.x.abs() <= f.width / 2.0 && local.y.abs() <= f.height / 2.0 {
        f.rate()
    } else {
        0.0
    }
}

/// Coordinates of `p` in the frame of an agent at `z` with heading `theta`:
/// `x` points to the agent's right, `y` along the heading.
pub fn local_coords(z: Vec2, theta: f64, p: Vec2) -> Vec2 {
    let d = p - z;
    let (s, c) = theta.sin_cos();
    Vec2::new(d.x * s - d.y * c, d.x * c + d.y * s)
}

impl Footprint {
    pub fn validate(&self) -> Result<()> {
        match self {
            Footprint::Gaussian(g) => {
                check_mu(g.mu)?;
                if !(g.sigma > 0.0) {
                    return Err(Error::Domain("footprint sigma must be positive".into()));
                }
            }
            Footprint::Rect(r) => {
                check_mu(r.mu)?;
                if !(r.width > 0.0 && r.height > 0.0) {
                    return Err(Error::Domain("footprint extents must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Rate contributed at `p` by an agent at pose `(z, theta)`.
    pub fn rate(&self, z: Vec2, theta: f64, p: Vec2) -> f64 {
        match self {
            Footprint::Gaussian(g) => gamma_gaussian(z.dist(p), g),
            Footprint::Rect(r) => gamma_rect(local_coords(z, theta, p), r),
        }
    }

    /// Distance beyond which the rate is zero.
    pub fn reach(&self) -> f64 {
        match self {
            Footprint::Gaussian(g) => {
                let peak = g.peak();
                if peak <= RATE_FLOOR {
                    0.0
                } else {
                    g.sigma * (2.0 * (peak / RATE_FLOOR).ln()).sqrt()
                }
            }
            Footprint::Rect(r) => 0.5 * r.width.hypot(r.height),
        }
    }
}

/// Total sensing rate at `p` from all active agents.
pub fn total_rate(agents: &[AgentState], p: Vec2) -> f64 {
    agents
        .iter()
        .filter(|a| a.active)
        .map(|a| a.footprint.rate(a.z, a.theta, p))
        .sum()
}

/// Coverage-rate field: each fluid cell holds the summed rate of all active
/// agents at its center.
pub fn accumulate_coverage(agents: &[AgentState], grid: &Arc<Grid2D>) -> ScalarField {
    let mut out = ScalarField::zeros(grid.clone());
    accumulate_coverage_into(agents, &mut out);
    out
}

/// In-place variant of [`accumulate_coverage`] that reuses `out`.
pub fn accumulate_coverage_into(agents: &[AgentState], out: &mut ScalarField) {
    let g = out.grid().clone();
    let boxes: Vec<(usize, usize, usize, usize, &AgentState)> = agents
        .iter()
        .filter(|a| a.active)
        .filter_map(|a| cell_box(&g, a.z, a.footprint.reach()).map(|(i0, i1, j0, j1)| (i0, i1, j0, j1, a)))
        .collect();
    let nx = g.nx();
    par::fill_indexed(out.values_mut(), |k| {
        if !g.is_fluid(k) {
            return 0.0;
        }
        let (i, j) = (k % nx, k / nx);
        let mut sum = 0.0;
        for &(i0, i1, j0, j1, a) in &boxes {
            if i >= i0 && i <= i1 && j >= j0 && j <= j1 {
                sum += a.footprint.rate(a.z, a.theta, g.center(i, j));
            }
        }
        sum
    });
}

fn cell_box(g: &Grid2D, z: Vec2, reach: f64) -> Option<(usize, usize, usize, usize)> {
    let o = g.origin();
    let h = g.h();
    let lo_x = ((z.x - reach - o.x) / h - 0.5).floor();
    let hi_x = ((z.x + reach - o.x) / h - 0.5).ceil();
    let lo_y = ((z.y - reach - o.y) / h - 0.5).floor();
    let hi_y = ((z.y + reach - o.y) / h - 0.5).ceil();
    let (nx, ny) = (g.nx() as f64, g.ny() as f64);
    if !(hi_x >= 0.0 && hi_y >= 0.0 && lo_x < nx && lo_y < ny) {
        return None;
    }
    Some((
        lo_x.max(0.0) as usize,
        hi_x.min(nx - 1.0) as usize,
        lo_y.max(0.0) as usize,
        hi_y.min(ny - 1.0) as usize,
    ))
}
