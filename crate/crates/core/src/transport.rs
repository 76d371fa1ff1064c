//! Advection, diffusion and sensing of the undetected-target probability.
//!
//! Advection uses a first-order upwind flux on cell faces, diffusion the
//! five-point Laplacian, both explicit and sub-stepped. Wall edges and
//! obstacle faces carry no flux; open edges only let probability leave.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{EdgeKind, FlowSeries, Grid2D, ScalarField, VectorField};
use crate::par;

/// Advective Courant number bound per substep.
pub const MAX_COURANT: f64 = 0.9;
/// Diffusion number bound `D dt / h^2` per substep.
pub const MAX_DIFFUSION_NUMBER: f64 = 0.2;
const MAX_SUBSTEPS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    /// Diffusion coefficient, m^2/s.
    pub diffusion: f64,
    /// Minimum number of substeps per control step.
    pub substeps: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self { diffusion: 0.0, substeps: 10 }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion >= 0.0) || !self.diffusion.is_finite() {
            return Err(Error::Domain(format!("diffusion must be >= 0, got {}", self.diffusion)));
        }
        if self.substeps == 0 {
            return Err(Error::Domain("substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Rescales `m` so that it integrates to one over the fluid cells.
pub fn normalize(m: &ScalarField) -> Result<ScalarField> {
    let total = m.integral();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Normalization(total));
    }
    let mut out = m.clone();
    out.values_mut().iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Diffusion coefficient matching a drift error `e` accumulated over `t`,
/// `D = e^2 / (2 t)`.
pub fn diffusion_coefficient(e: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if !(e >= 0.0) {
        return Err(Error::Domain(format!("drift error must be >= 0, got {e}")));
    }
    Ok(e * e / (2.0 * t))
}

/// Exact sink update `m <- m exp(-gamma dt)`, in place.
pub fn apply_sensing_in_place(m: &mut ScalarField, gamma: &ScalarField, dt: f64) -> Result<()> {
    let g = m.grid().clone();
    let rates = gamma.values();
    if rates.len() != g.len() {
        return Err(Error::Grid("coverage field does not match probability grid".into()));
    }
    if let Some(bad) = (0..g.len()).find(|&k| g.is_fluid(k) && !(rates[k] >= 0.0)) {
        return Err(Error::Domain(format!("negative or NaN sensing rate {} at cell {bad}", rates[bad])));
    }
    par::update_indexed(m.values_mut(), |k, v| {
        if rates[k] > 0.0 {
            *v *= (-rates[k] * dt).exp();
        }
    });
    Ok(())
}

pub fn apply_sensing(m: &ScalarField, gamma: &ScalarField, dt: f64) -> Result<ScalarField> {
    let mut out = m.clone();
    apply_sensing_in_place(&mut out, gamma, dt)?;
    Ok(out)
}

/// One control step of advection and diffusion; see [`Transport`].
pub fn step_transport(
    m: &ScalarField,
    flow: &FlowSeries,
    cfg: &TransportConfig,
    t: f64,
    dt: f64,
) -> Result<ScalarField> {
    let mut out = m.clone();
    Transport::new(flow, *cfg)?.step(&mut out, t, dt)?;
    Ok(out)
}

/// Reusable transport stepper holding scratch buffers and stability bounds.
#[derive(Debug, Clone)]
pub struct Transport<'a> {
    flow: &'a FlowSeries,
    cfg: TransportConfig,
    max_speed: f64,
    /// Largest per-cell advective outflow rate over all snapshots, 1/s.
    max_outflow: f64,
    cell_vel: VectorField,
    face_x: Vec<f64>,
    face_y: Vec<f64>,
    flux_x: Vec<f64>,
    flux_y: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Transport<'a> {
    pub fn new(flow: &'a FlowSeries, cfg: TransportConfig) -> Result<Self> {
        cfg.validate()?;
        let g = flow.grid();
        let (nx, ny) = (g.nx(), g.ny());
        let mut fx = vec![0.0; (nx + 1) * ny];
        let mut fy = vec![0.0; nx * (ny + 1)];
        let mut max_outflow: f64 = 0.0;
        for snap in flow.snapshots() {
            face_velocities(g, snap, &mut fx, &mut fy);
            max_outflow = max_outflow.max(outflow_rate(g, &fx, &fy));
        }
        Ok(Self {
            flow,
            cfg,
            max_speed: flow.max_speed(),
            max_outflow,
            cell_vel: VectorField::zeros(g.len()),
            face_x: fx,
            face_y: fy,
            flux_x: vec![0.0; (nx + 1) * ny],
            flux_y: vec![0.0; nx * (ny + 1)],
            next: vec![0.0; g.len()],
        })
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    /// Substep count for a control step of length `dt`: the configured floor,
    /// doubled until the Courant, diffusion-number and positivity bounds hold.
    pub fn substeps_for(&self, dt: f64) -> Result<usize> {
        let h = self.flow.grid().h();
        let d = self.cfg.diffusion;
        let mut n = self.cfg.substeps;
        loop {
            let s = dt / n as f64;
            let ok = self.max_speed * s / h <= MAX_COURANT
                && d * s / (h * h) <= MAX_DIFFUSION_NUMBER
                && s * (self.max_outflow + 4.0 * d / (h * h)) <= 1.0;
            if ok {
                return Ok(n);
            }
            n *= 2;
            if n > MAX_SUBSTEPS {
                return Err(Error::Domain(format!(
                    "transport step dt={dt} needs more than {MAX_SUBSTEPS} substeps"
                )));
            }
        }
    }

    /// Advances `m` from `t` to `t + dt`; returns the substep count used.
    pub fn step(&mut self, m: &mut ScalarField, t: f64, dt: f64) -> Result<usize> {
        if m.grid().len() != self.flow.grid().len() {
            return Err(Error::Grid("probability field and flow live on different grids".into()));
        }
        if !(dt >= 0.0) || !dt.is_finite() || !t.is_finite() {
            return Err(Error::NonFinite("transport time step"));
        }
        m.ensure_finite("probability field")?;
        let n = self.substeps_for(dt)?;
        let s = dt / n as f64;
        let steady = self.flow.snapshots().len() == 1;
        if steady {
            let g = self.flow.grid();
            face_velocities(g, &self.flow.snapshots()[0], &mut self.face_x, &mut self.face_y);
        }
        for k in 0..n {
            if !steady {
                let (a, b, w) = self.flow.bracket(t + k as f64 * s);
                let snaps = self.flow.snapshots();
                VectorField::lerp_into(&snaps[a], &snaps[b], w, &mut self.cell_vel);
                face_velocities(self.flow.grid(), &self.cell_vel, &mut self.face_x, &mut self.face_y);
            }
            self.substep(m, s);
        }
        Ok(n)
    }

    fn substep(&mut self, m: &mut ScalarField, s: f64) {
        let g = self.flow.grid().as_ref();
        let (nx, ny, h) = (g.nx(), g.ny(), g.h());
        let vals = m.values();
        let (fx, fy) = (&self.face_x, &self.face_y);

        // Upwind fluxes on x faces: face i of row j sits between cells i-1 and i.
        par::update_indexed(&mut self.flux_x, |f, out| {
            let (i, j) = (f % (nx + 1), f / (nx + 1));
            let u = fx[f];
            *out = if u > 0.0 {
                u * vals[j * nx + i - 1]
            } else if u < 0.0 {
                u * vals[j * nx + i]
            } else {
                0.0
            };
        });
        par::update_indexed(&mut self.flux_y, |f, out| {
            let (i, j) = (f % nx, f / nx);
            let v = fy[f];
            *out = if v > 0.0 {
                v * vals[(j - 1) * nx + i]
            } else if v < 0.0 {
                v * vals[j * nx + i]
            } else {
                0.0
            };
        });

        let d = self.cfg.diffusion * s / (h * h);
        let a = s / h;
        let (qx, qy) = (&self.flux_x, &self.flux_y);
        par::update_indexed(&mut self.next, |k, out| {
            if !g.is_fluid(k) {
                *out = 0.0;
                return;
            }
            let (i, j) = (k % nx, k / nx);
            let div = qx[j * (nx + 1) + i + 1] - qx[j * (nx + 1) + i] + qy[(j + 1) * nx + i]
                - qy[j * nx + i];
            let mut lap = 0.0;
            if d > 0.0 {
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    if let Some(q) = g.fluid_neighbor(i, j, di, dj) {
                        lap += vals[q] - vals[k];
                    }
                }
            }
            *out = vals[k] - a * div + d * lap;
        });
        debug_assert_eq!(ny * nx, self.next.len());
        m.values_mut().copy_from_slice(&self.next);
    }
}

/// Face-normal velocities from cell-centered ones. Interior faces average
/// their two fluid cells; faces touching obstacles or walls are zero; faces on
/// open edges keep only the outgoing part of the rim cell's velocity.
fn face_velocities(g: &Grid2D, w: &VectorField, fx: &mut [f64], fy: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let edges = g.edges();
    par::update_indexed(fx, |f, out| {
        let (i, j) = (f % (nx + 1), f / (nx + 1));
        *out = if i == 0 {
            let k = j * nx;
            if edges.left == EdgeKind::Open && g.is_fluid(k) { w.wx[k].min(0.0) } else { 0.0 }
        } else if i == nx {
            let k = j * nx + nx - 1;
            if edges.right == EdgeKind::Open && g.is_fluid(k) { w.wx[k].max(0.0) } else { 0.0 }
        } else {
            let (l, r) = (j * nx + i - 1, j * nx + i);
            if g.is_fluid(l) && g.is_fluid(r) { 0.5 * (w.wx[l] + w.wx[r]) } else { 0.0 }
        };
    });
    par::update_indexed(fy, |f, out| {
        let (i, j) = (f % nx, f / nx);
        *out = if j == 0 {
            let k = i;
            if edges.bottom == EdgeKind::Open && g.is_fluid(k) { w.wy[k].min(0.0) } else { 0.0 }
        } else if j == ny {
            let k = (ny - 1) * nx + i;
            if edges.top == EdgeKind::Open && g.is_fluid(k) { w.wy[k].max(0.0) } else { 0.0 }
        } else {
            let (b, t) = ((j - 1) * nx + i, j * nx + i);
            if g.is_fluid(b) && g.is_fluid(t) { 0.5 * (w.wy[b] + w.wy[t]) } else { 0.0 }
        };
    });
}

/// Largest sum of outgoing face speeds of any cell, divided by h.
fn outflow_rate(g: &Grid2D, fx: &[f64], fy: &[f64]) -> f64 {
    let (nx, h) = (g.nx(), g.h());
    par::chunked_max(g.len(), |r| {
        r.map(|k| {
            let (i, j) = (k % nx, k / nx);
            let out = fx[j * (nx + 1) + i + 1].max(0.0)
                + (-fx[j * (nx + 1) + i]).max(0.0)
                + fy[(j + 1) * nx + i].max(0.0)
                + (-fy[j * nx + i]).max(0.0);
            out / h
        })
        .fold(0.0, f64::max)
    })
}
