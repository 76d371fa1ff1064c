//! Synthetic flow fields built from discrete stream functions.
//!
//! Velocities come from central differences of a cell-centred stream
//! function `psi`, with `psi` reflected antisymmetrically about each wall.
//! Averaging those velocities onto cell faces gives a flux field whose
//! divergence cancels exactly, so closed domains conserve mass under
//! transport.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FlowSeries, Grid2D, VectorField};

/// Stream function is forced to zero within this many cells of an obstacle...
const CLEAR_CELLS: f64 = 2.0;
/// ...and blends back to full strength over this many more.
const BLEND_CELLS: f64 = 5.0;

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Factor in `[0, 1]` per cell that damps the stream function near obstacles.
fn obstacle_taper(g: &Grid2D) -> Vec<f64> {
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let reach = (CLEAR_CELLS + BLEND_CELLS).ceil() as isize;
    let mut out = vec![1.0; g.len()];
    if g.fluid_count() == g.len() {
        return out;
    }
    for j in 0..ny {
        for i in 0..nx {
            let mut best = f64::INFINITY;
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= nx || b >= ny {
                        continue;
                    }
                    if !g.is_fluid(g.idx(a as usize, b as usize)) {
                        best = best.min(((di * di + dj * dj) as f64).sqrt());
                    }
                }
            }
            out[g.idx(i as usize, j as usize)] = smoothstep((best - CLEAR_CELLS) / BLEND_CELLS);
        }
    }
    out
}

/// Velocity from a cell-centred stream function, reflecting `psi` about the
/// given wall value on each closed side and copying the rim value outward on
/// open sides.
fn velocity_from_psi(g: &Grid2D, psi: &[f64], bottom: f64, top: f64, left: f64, right: f64) -> VectorField {
    let (nx, ny) = (g.nx(), g.ny());
    let edges = g.edges();
    let at = |i: isize, j: isize| -> f64 {
        let (ci, cj) = (i.clamp(0, nx as isize - 1) as usize, j.clamp(0, ny as isize - 1) as usize);
        let mut v = psi[cj * nx + ci];
        let mut reflect = |outside: bool, open: bool, wall: f64| {
            if outside && !open {
                v = 2.0 * wall - v;
            }
        };
        reflect(i < 0, edges.left == crate::grid::EdgeKind::Open, left);
        reflect(i >= nx as isize, edges.right == crate::grid::EdgeKind::Open, right);
        reflect(j < 0, edges.bottom == crate::grid::EdgeKind::Open, bottom);
        reflect(j >= ny as isize, edges.top == crate::grid::EdgeKind::Open, top);
        v
    };
    let h2 = 2.0 * g.h();
    let mut w = VectorField::zeros(g.len());
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let k = j as usize * nx + i as usize;
            w.wx[k] = (at(i, j + 1) - at(i, j - 1)) / h2;
            w.wy[k] = -(at(i + 1, j) - at(i - 1, j)) / h2;
        }
    }
    w
}

fn fluid_mean_speed(g: &Grid2D, fields: &[VectorField]) -> f64 {
    let mut sum = 0.0;
    for f in fields {
        for k in 0..g.len() {
            if g.is_fluid(k) {
                sum += f.at(k).norm();
            }
        }
    }
    sum / (g.fluid_count() * fields.len()) as f64
}

/// Steady recirculating cell, `psi = A sin^2(pi x / Lx) sin^2(pi y / Ly)`,
/// damped to rest around obstacles, scaled so the mean fluid speed is
/// `mean_speed`.
pub fn cavity_like_flow(grid: Arc<Grid2D>, mean_speed: f64) -> Result<FlowSeries> {
    if !(mean_speed > 0.0 && mean_speed.is_finite()) {
        return Err(Error::Domain(format!("mean speed must be positive, got {mean_speed}")));
    }
    let b = grid.bounds();
    let (lx, ly) = (b.width(), b.height());
    let taper = obstacle_taper(&grid);
    let psi: Vec<f64> = (0..grid.len())
        .map(|k| {
            let p = grid.center_of(k) - b.min;
            let sx = (std::f64::consts::PI * p.x / lx).sin();
            let sy = (std::f64::consts::PI * p.y / ly).sin();
            sx * sx * sy * sy * taper[k]
        })
        .collect();
    let mut w = velocity_from_psi(&grid, &psi, 0.0, 0.0, 0.0, 0.0);
    let raw = fluid_mean_speed(&grid, std::slice::from_ref(&w));
    if !(raw > 0.0) {
        return Err(Error::Domain("domain too small for a recirculating flow".into()));
    }
    let s = mean_speed / raw;
    w.wx.iter_mut().chain(w.wy.iter_mut()).for_each(|v| *v *= s);
    FlowSeries::steady(grid, w)
}

/// Tidal channel between the bottom and top rims: a flat-topped profile
/// along x whose strength oscillates as `1 + modulation cos(2 pi t / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub mean_speed: f64,
    #[serde(default = "default_modulation")]
    pub modulation: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_interval")]
    pub snapshot_interval: f64,
    pub duration: f64,
}

impl ChannelParams {
    pub fn new(mean_speed: f64, duration: f64) -> Self {
        Self {
            mean_speed,
            modulation: default_modulation(),
            period: default_period(),
            snapshot_interval: default_interval(),
            duration,
        }
    }
}

fn default_modulation() -> f64 {
    0.3
}

fn default_period() -> f64 {
    12.0 * 3600.0
}

fn default_interval() -> f64 {
    1800.0
}

/// Snapshot series of the channel flow covering `[0, duration]`.
pub fn channel_flow(grid: Arc<Grid2D>, p: &ChannelParams) -> Result<FlowSeries> {
    if !(p.mean_speed > 0.0) || !(p.period > 0.0) || !(p.snapshot_interval > 0.0) || !(p.duration >= 0.0) {
        return Err(Error::Domain("channel parameters must be positive".into()));
    }
    if !(0.0..1.0).contains(&p.modulation) {
        return Err(Error::Domain(format!("modulation must lie in [0, 1), got {}", p.modulation)));
    }
    let b = grid.bounds();
    let ly = b.height();
    // psi' = 1 - (2 eta - 1)^6, eta the fractional channel width
    let psi_of = |y: f64| {
        let e = (y - b.min.y) / ly;
        ly * (e - ((2.0 * e - 1.0).powi(7) + 1.0) / 14.0)
    };
    let top = psi_of(b.max.y);
    let psi: Vec<f64> = (0..grid.len()).map(|k| psi_of(grid.center_of(k).y)).collect();
    let base = velocity_from_psi(&grid, &psi, 0.0, top, 0.0, 0.0);
    let count = (p.duration / p.snapshot_interval).ceil() as usize + 1;
    let times: Vec<f64> = (0..count).map(|n| n as f64 * p.snapshot_interval).collect();
    let mut fields: Vec<VectorField> = times
        .iter()
        .map(|&t| {
            let f = 1.0 + p.modulation * (std::f64::consts::TAU * t / p.period).cos();
            let mut w = base.clone();
            w.wx.iter_mut().chain(w.wy.iter_mut()).for_each(|v| *v *= f);
            w
        })
        .collect();
    let raw = fluid_mean_speed(&grid, &fields);
    let s = p.mean_speed / raw;
    for w in &mut fields {
        w.wx.iter_mut().chain(w.wy.iter_mut()).for_each(|v| *v *= s);
    }
    FlowSeries::new(grid, times.into_iter().zip(fields).collect())
}

/// Every velocity multiplied by `s`.
pub fn scale_flow(flow: &FlowSeries, s: f64) -> Result<FlowSeries> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("scale factor must be positive, got {s}")));
    }
    let mut out = flow.clone();
    if s != 1.0 {
        for w in out.snapshots_mut() {
            w.wx.iter_mut().chain(w.wy.iter_mut()).for_each(|v| *v *= s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Polygon, Rect, Vec2};
    use crate::grid::{build_grid, EdgeKind, RimEdges};
    use crate::metrics::lambda_ratio;

    fn cavity_grid() -> Arc<Grid2D> {
        let obstacle = Polygon::rectangle(Vec2::new(0.7, 0.2), Vec2::new(0.8, 0.6));
        Arc::new(build_grid(Rect::new(Vec2::ZERO, Vec2::new(1.0, 1.0)), 0.01, &[obstacle], RimEdges::closed()).unwrap())
    }

    /// Net outward face flux per fluid cell, faces shared only between fluid cells.
    #[allow(clippy::needless_range_loop)]
    fn divergence(g: &Grid2D, w: &VectorField) -> Vec<f64> {
        let mut div = vec![0.0; g.len()];
        for k in 0..g.len() {
            if !g.is_fluid(k) {
                continue;
            }
            let (i, j) = g.ij(k);
            let mut net = 0.0;
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let rim_open = g.neighbor(i, j, di, dj).is_none()
                    && ((di == 1 && g.edges().right == EdgeKind::Open)
                        || (di == -1 && g.edges().left == EdgeKind::Open));
                if let Some(q) = g.fluid_neighbor(i, j, di, dj) {
                    let face = (w.at(k) + w.at(q)) * 0.5;
                    net += face.x * di as f64 + face.y * dj as f64;
                } else if rim_open {
                    net += w.at(k).x * di as f64;
                }
            }
            div[k] = net / g.h();
        }
        div
    }

    #[test]
    fn cavity_flow_has_requested_mean_and_no_divergence() {
        let g = cavity_grid();
        let flow = cavity_like_flow(g.clone(), 3e-4).unwrap();
        assert!((flow.mean_speed() - 3e-4).abs() < 1e-7);
        let w = &flow.snapshots()[0];
        let worst = divergence(&g, w).iter().fold(0.0f64, |a, d| a.max(d.abs()));
        assert!(worst < 1e-12, "divergence {worst}");
        // no flow through the faces next to the obstacle
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            if g.is_fluid(k) && g.neighbor(i, j, 1, 0).is_some_and(|q| !g.is_fluid(q)) {
                assert!(w.at(k).norm() < 1e-18);
            }
        }
    }

    #[test]
    fn channel_flow_is_steered_along_x_and_tidal() {
        let edges = RimEdges { left: EdgeKind::Open, right: EdgeKind::Open, ..RimEdges::closed() };
        let g = Arc::new(build_grid(Rect::new(Vec2::ZERO, Vec2::new(4000.0, 2000.0)), 100.0, &[], edges).unwrap());
        let p = ChannelParams { mean_speed: 0.2, modulation: 0.3, period: 3600.0, snapshot_interval: 900.0, duration: 3600.0 };
        let flow = channel_flow(g.clone(), &p).unwrap();
        assert_eq!(flow.times(), &[0.0, 900.0, 1800.0, 2700.0, 3600.0]);
        assert!((flow.mean_speed() - 0.2).abs() < 1e-12);
        let mid = g.idx(10, 10);
        let w0 = flow.snapshots()[0].at(mid);
        let w2 = flow.snapshots()[2].at(mid);
        assert!(w0.x > 0.0 && w0.y == 0.0);
        assert!((w0.x / w2.x - 1.3 / 0.7).abs() < 1e-12);
        for w in flow.snapshots() {
            assert!(divergence(&g, w).iter().all(|d| d.abs() < 1e-15));
        }
    }

    #[test]
    fn scaling_is_exact_and_checked() {
        let g = cavity_grid();
        let flow = cavity_like_flow(g, 3e-4).unwrap();
        assert_eq!(scale_flow(&flow, 1.0).unwrap().snapshots(), flow.snapshots());
        let doubled = scale_flow(&flow, 2.0).unwrap();
        assert_eq!(doubled.mean_speed(), 2.0 * flow.mean_speed());
        let base = lambda_ratio(0.015, &flow).unwrap();
        let fast = lambda_ratio(0.015, &scale_flow(&flow, 200.0).unwrap()).unwrap();
        assert!((base - 50.0).abs() < 2e-2 && (fast - base / 200.0).abs() < 1e-12);
        assert!(scale_flow(&flow, 0.0).is_err());
    }
}
