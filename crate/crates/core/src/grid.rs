//! Masked uniform raster: the search domain, its obstacles and its rim.
//!
//! Cells are indexed row-major (`k = j * nx + i`) with cell centers at
//! `origin + ((i + 1/2) h, (j + 1/2) h)`. Everything that lives on the domain
//! (probability, potential, flow) is stored at cell centers.

use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Polygon, Rect, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellKind {
    Fluid = 0,
    Obstacle = 1,
}

/// Behaviour of one side of the domain rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// Impermeable: no flux of probability, targets slide along it.
    #[default]
    Wall,
    /// Open water: outgoing advection only, targets leaving escape.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RimEdges {
    #[serde(default)]
    pub left: EdgeKind,
    #[serde(default)]
    pub right: EdgeKind,
    #[serde(default)]
    pub bottom: EdgeKind,
    #[serde(default)]
    pub top: EdgeKind,
}

impl RimEdges {
    pub fn closed() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    origin: Vec2,
    h: f64,
    nx: usize,
    ny: usize,
    mask: Vec<CellKind>,
    edges: RimEdges,
}

/// Rasterizes `bounds` at spacing `h`, marking cells whose centers fall
/// inside any obstacle polygon.
pub fn build_grid(bounds: Rect, h: f64, obstacles: &[Polygon], edges: RimEdges) -> Result<Grid2D> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Grid(format!("cell size must be positive, got {h}")));
    }
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
        return Err(Error::Grid("bounds are degenerate".into()));
    }
    let cells = |extent: f64| ((extent / h) * (1.0 - 1e-12)).ceil() as usize;
    let (nx, ny) = (cells(bounds.width()), cells(bounds.height()));
    let mut mask = vec![CellKind::Fluid; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = Vec2::new(
                bounds.min.x + (i as f64 + 0.5) * h,
                bounds.min.y + (j as f64 + 0.5) * h,
            );
            if obstacles.iter().any(|poly| poly.contains(c)) {
                mask[j * nx + i] = CellKind::Obstacle;
            }
        }
    }
    Grid2D::from_mask(bounds.min, h, nx, ny, mask, edges)
}

impl Grid2D {
    pub fn from_mask(
        origin: Vec2,
        h: f64,
        nx: usize,
        ny: usize,
        mask: Vec<CellKind>,
        edges: RimEdges,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Grid(format!("need at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(h > 0.0) {
            return Err(Error::Grid(format!("cell size must be positive, got {h}")));
        }
        if mask.len() != nx * ny {
            return Err(Error::Grid(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                nx * ny
            )));
        }
        if !mask.contains(&CellKind::Fluid) {
            return Err(Error::Grid("domain has no fluid cells".into()));
        }
        Ok(Self { origin, h, nx, ny, mask, edges })
    }

    /// Obstacle-free rectangle with `nx * ny` cells.
    pub fn uniform(origin: Vec2, h: f64, nx: usize, ny: usize, edges: RimEdges) -> Result<Self> {
        Self::from_mask(origin, h, nx, ny, vec![CellKind::Fluid; nx * ny], edges)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn edges(&self) -> RimEdges {
        self.edges
    }

    pub fn mask(&self) -> &[CellKind] {
        &self.mask
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin,
            self.origin + Vec2::new(self.nx as f64 * self.h, self.ny as f64 * self.h),
        )
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.h,
            self.origin.y + (j as f64 + 0.5) * self.h,
        )
    }

    #[inline]
    pub fn center_of(&self, k: usize) -> Vec2 {
        let (i, j) = self.ij(k);
        self.center(i, j)
    }

    #[inline]
    pub fn is_fluid(&self, k: usize) -> bool {
        self.mask[k] == CellKind::Fluid
    }

    pub fn fluid_count(&self) -> usize {
        self.mask.iter().filter(|&&c| c == CellKind::Fluid).count()
    }

    /// Inside the closed domain rectangle.
    pub fn contains(&self, p: Vec2) -> bool {
        self.bounds().contains(p)
    }

    /// Cell containing `p`, if inside the domain.
    pub fn cell_at(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i = (((p.x - self.origin.x) / self.h) as usize).min(self.nx - 1);
        let j = (((p.y - self.origin.y) / self.h) as usize).min(self.ny - 1);
        Some((i, j))
    }

    /// Inside the domain and in a fluid cell.
    pub fn is_fluid_point(&self, p: Vec2) -> bool {
        self.cell_at(p).is_some_and(|(i, j)| self.is_fluid(self.idx(i, j)))
    }

    /// Bilinear stencil over the four surrounding cell centers. Points in the
    /// half-cell band along the rim are clamped to the outermost centers.
    pub fn bilinear(&self, p: Vec2) -> Result<[(usize, f64); 4]> {
        if !p.is_finite() || !self.contains(p) {
            return Err(Error::OutOfDomain { x: p.x, y: p.y });
        }
        let axis = |coord: f64, origin: f64, n: usize| {
            let f = (coord - origin) / self.h - 0.5;
            let i0 = (f.floor().max(0.0) as usize).min(n - 2);
            let t = (f - i0 as f64).clamp(0.0, 1.0);
            (i0, t)
        };
        let (i0, tx) = axis(p.x, self.origin.x, self.nx);
        let (j0, ty) = axis(p.y, self.origin.y, self.ny);
        Ok([
            (self.idx(i0, j0), (1.0 - tx) * (1.0 - ty)),
            (self.idx(i0 + 1, j0), tx * (1.0 - ty)),
            (self.idx(i0, j0 + 1), (1.0 - tx) * ty),
            (self.idx(i0 + 1, j0 + 1), tx * ty),
        ])
    }

    /// Neighbour index in direction (di, dj), or `None` past the rim.
    #[inline]
    pub fn neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
        let ni = i as isize + di;
        let nj = j as isize + dj;
        if ni < 0 || nj < 0 || ni >= self.nx as isize || nj >= self.ny as isize {
            None
        } else {
            Some(self.idx(ni as usize, nj as usize))
        }
    }

    /// Fluid neighbour in direction (di, dj).
    #[inline]
    pub fn fluid_neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
        self.neighbor(i, j, di, dj).filter(|&k| self.is_fluid(k))
    }
}

/// Cell-centered scalar values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn new(grid: Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Evaluates `f` at fluid cell centers; obstacle cells hold zero.
    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn(Vec2) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| if grid.is_fluid(k) { f(grid.center_of(k)) } else { 0.0 })
            .collect();
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid2D>, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sum of `value * h^2` over fluid cells.
    pub fn integral(&self) -> f64 {
        let g = &self.grid;
        let v = &self.values;
        crate::par::chunked_sum(v.len(), |r| {
            r.filter(|&k| g.is_fluid(k)).map(|k| v[k]).sum::<f64>()
        }) * g.cell_area()
    }

    /// Checks that every fluid value is finite.
    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        let g = &self.grid;
        if self.values.iter().enumerate().all(|(k, v)| !g.is_fluid(k) || v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    /// Bilinear interpolation, weights renormalized over fluid cells.
    pub fn sample(&self, p: Vec2) -> Result<f64> {
        let stencil = self.grid.bilinear(p)?;
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (k, w) in stencil {
            if self.grid.is_fluid(k) {
                acc += w * self.values[k];
                wsum += w;
            }
        }
        Ok(if wsum > 0.0 { acc / wsum } else { 0.0 })
    }
}

/// Interpolates `f` at `p`.
pub fn sample_scalar(f: &ScalarField, p: Vec2) -> Result<f64> {
    f.sample(p)
}

/// Cell-centered velocity components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorField {
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Self { wx: vec![0.0; n], wy: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.wx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wx.is_empty()
    }

    #[inline]
    pub fn at(&self, k: usize) -> Vec2 {
        Vec2::new(self.wx[k], self.wy[k])
    }

    /// `(1 - s) * a + s * b`, written into `out`.
    pub fn lerp_into(a: &VectorField, b: &VectorField, s: f64, out: &mut VectorField) {
        out.wx.resize(a.len(), 0.0);
        out.wy.resize(a.len(), 0.0);
        crate::par::update_indexed(&mut out.wx, |k, v| *v = (1.0 - s) * a.wx[k] + s * b.wx[k]);
        crate::par::update_indexed(&mut out.wy, |k, v| *v = (1.0 - s) * a.wy[k] + s * b.wy[k]);
    }
}

/// Time-ordered flow snapshots with linear interpolation in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    grid: Arc<Grid2D>,
    times: Vec<f64>,
    fields: Vec<VectorField>,
}

impl FlowSeries {
    pub fn new(grid: Arc<Grid2D>, snapshots: Vec<(f64, VectorField)>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Grid("flow series needs at least one snapshot".into()));
        }
        let (times, mut fields): (Vec<f64>, Vec<VectorField>) = snapshots.into_iter().unzip();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("snapshot times must be strictly increasing".into()));
        }
        for f in &mut fields {
            if f.wx.len() != grid.len() || f.wy.len() != grid.len() {
                return Err(Error::Grid("snapshot size does not match grid".into()));
            }
            if f.wx.iter().chain(&f.wy).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("flow snapshot"));
            }
            for k in 0..grid.len() {
                if !grid.is_fluid(k) {
                    f.wx[k] = 0.0;
                    f.wy[k] = 0.0;
                }
            }
        }
        Ok(Self { grid, times, fields })
    }

    /// Time-independent flow.
    pub fn steady(grid: Arc<Grid2D>, field: VectorField) -> Result<Self> {
        Self::new(grid, vec![(0.0, field)])
    }

    pub fn uniform(grid: Arc<Grid2D>, w: Vec2) -> Result<Self> {
        let n = grid.len();
        Self::steady(grid, VectorField { wx: vec![w.x; n], wy: vec![w.y; n] })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn snapshots_mut(&mut self) -> &mut [VectorField] {
        &mut self.fields
    }

    /// Bracketing snapshot indices and the weight of the second one.
    pub fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let ts = &self.times;
        let last = ts.len() - 1;
        if t <= ts[0] {
            return (0, 0, 0.0);
        }
        if t >= ts[last] {
            return (last, last, 0.0);
        }
        let hi = ts.partition_point(|&x| x <= t);
        let lo = hi - 1;
        (lo, hi, (t - ts[lo]) / (ts[hi] - ts[lo]))
    }

    /// Whole field at time `t`.
    pub fn field_at(&self, t: f64) -> Cow<'_, VectorField> {
        match self.bracket(t) {
            (a, _, 0.0) => Cow::Borrowed(&self.fields[a]),
            (a, b, s) => {
                let mut out = VectorField::zeros(self.grid.len());
                VectorField::lerp_into(&self.fields[a], &self.fields[b], s, &mut out);
                Cow::Owned(out)
            }
        }
    }

    /// Bilinear in space (obstacle cells contribute zero velocity), linear in time.
    pub fn sample(&self, p: Vec2, t: f64) -> Result<Vec2> {
        let stencil = self.grid.bilinear(p)?;
        let at = |f: &VectorField| {
            stencil
                .iter()
                .fold(Vec2::ZERO, |acc, &(k, w)| acc + f.at(k) * w)
        };
        let (a, b, s) = self.bracket(t);
        if s == 0.0 {
            Ok(at(&self.fields[a]))
        } else {
            Ok(at(&self.fields[a]) * (1.0 - s) + at(&self.fields[b]) * s)
        }
    }

    /// Mean speed over fluid cells and all snapshots.
    pub fn mean_speed(&self) -> f64 {
        let g = &self.grid;
        let total: f64 = self
            .fields
            .iter()
            .map(|f| {
                crate::par::chunked_sum(g.len(), |r| {
                    r.filter(|&k| g.is_fluid(k)).map(|k| f.at(k).norm()).sum::<f64>()
                })
            })
            .sum();
        total / (g.fluid_count() * self.fields.len()) as f64
    }

    pub fn max_speed(&self) -> f64 {
        self.fields
            .iter()
            .flat_map(|f| (0..f.len()).map(move |k| f.at(k).norm()))
            .fold(0.0, f64::max)
    }
}

/// Interpolates `flow` at `p` and time `t`.
pub fn sample_vector(flow: &FlowSeries, p: Vec2, t: f64) -> Result<Vec2> {
    flow.sample(p, t)
}
