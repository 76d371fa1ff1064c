//! Attraction potential: `alpha * lap(u) - u + m = 0` with zero normal
//! derivative on every rim edge and obstacle face.
//!
//! On fluid cells the discrete system is `(I + alpha L) u = m`, where `L` is
//! the five-point graph Laplacian over fluid-fluid faces. It is symmetric
//! positive definite, so the solution is unique.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{Grid2D, ScalarField};
use crate::linalg::{pcg, BandCholesky};
use crate::par;

/// Band storage budget (entries) below which `Auto` factors directly.
const DIRECT_BUDGET: usize = 8_000_000;
/// Direct factorization is only used for grids smaller than this.
const DIRECT_MAX_CELLS: usize = 100_000;
/// Gradients shorter than this carry no direction.
pub const MIN_GRADIENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    #[default]
    Auto,
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub alpha: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub method: SolverMethod,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    20_000
}

impl PotentialConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            method: SolverMethod::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-4) {
            return Err(Error::Domain(format!(
                "solver tolerance must lie in (0, 1e-4], got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Solves for the potential from scratch.
pub fn solve_potential(m: &ScalarField, cfg: &PotentialConfig) -> Result<ScalarField> {
    PotentialSolver::new(m.grid().clone(), *cfg)?.solve(m)
}

enum Backend {
    Direct { chol: BandCholesky, transpose: bool },
    Cg,
}

/// Potential solver that keeps its factorization (or last iterate) between
/// calls on the same grid.
pub struct PotentialSolver {
    grid: Arc<Grid2D>,
    cfg: PotentialConfig,
    backend: Backend,
    inv_diag: Vec<f64>,
    warm: Vec<f64>,
    last_iterations: usize,
}

impl std::fmt::Debug for PotentialSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PotentialSolver")
            .field("cfg", &self.cfg)
            .field("direct", &matches!(self.backend, Backend::Direct { .. }))
            .finish()
    }
}

impl PotentialSolver {
    pub fn new(grid: Arc<Grid2D>, cfg: PotentialConfig) -> Result<Self> {
        cfg.validate()?;
        let (nx, ny) = (grid.nx(), grid.ny());
        let n = grid.len();
        let coupling = cfg.alpha / grid.cell_area();
        let degree = |k: usize| {
            let (i, j) = grid.ij(k);
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .filter(|&&(di, dj)| grid.fluid_neighbor(i, j, di, dj).is_some())
                .count() as f64
        };
        let inv_diag: Vec<f64> = (0..n)
            .map(|k| if grid.is_fluid(k) { 1.0 / (1.0 + coupling * degree(k)) } else { 0.0 })
            .collect();

        let transpose = nx > ny;
        let bw = nx.min(ny);
        let direct = match cfg.method {
            SolverMethod::Direct => true,
            SolverMethod::Cg => false,
            SolverMethod::Auto => n < DIRECT_MAX_CELLS && n * (bw + 1) <= DIRECT_BUDGET,
        };
        let backend = if direct {
            // band ordering runs along the shorter axis
            let cell = |r: usize| if transpose { (r / ny, r % ny) } else { (r % nx, r / nx) };
            let chol = BandCholesky::factor(n, bw, |r, c| {
                let (i, j) = cell(r);
                let k = grid.idx(i, j);
                if r == c {
                    return if grid.is_fluid(k) { 1.0 + coupling * degree(k) } else { 1.0 };
                }
                let (ci, cj) = cell(c);
                let q = grid.idx(ci, cj);
                let adjacent = (ci == i && cj + 1 == j) || (cj == j && ci + 1 == i);
                if adjacent && grid.is_fluid(k) && grid.is_fluid(q) {
                    -coupling
                } else {
                    0.0
                }
            })?;
            Backend::Direct { chol, transpose }
        } else {
            Backend::Cg
        };
        Ok(Self { grid, cfg, backend, inv_diag, warm: vec![0.0; n], last_iterations: 0 })
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct { .. })
    }

    /// Iterations used by the last solve (zero for a clean direct solve).
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    /// `y = (I + alpha L) x` on fluid cells, zero elsewhere.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        apply_operator(&self.grid, self.cfg.alpha, x, y);
    }

    pub fn solve(&mut self, m: &ScalarField) -> Result<ScalarField> {
        let g = self.grid.clone();
        if m.grid().len() != g.len() {
            return Err(Error::Grid("probability field does not match solver grid".into()));
        }
        m.ensure_finite("probability field")?;
        let b: Vec<f64> = (0..g.len())
            .map(|k| if g.is_fluid(k) { m.values()[k] } else { 0.0 })
            .collect();
        let mut u = std::mem::take(&mut self.warm);
        self.last_iterations = 0;
        if let Backend::Direct { chol, transpose } = &self.backend {
            let (nx, ny) = (g.nx(), g.ny());
            let mut x: Vec<f64> = if *transpose {
                (0..g.len()).map(|r| b[(r % ny) * nx + r / ny]).collect()
            } else {
                b.clone()
            };
            chol.solve_in_place(&mut x);
            if *transpose {
                for (r, v) in x.into_iter().enumerate() {
                    u[(r % ny) * nx + r / ny] = v;
                }
            } else {
                u = x;
            }
        }
        let alpha = self.cfg.alpha;
        // Direct solves only fall through to iteration if roundoff left the
        // residual above tolerance.
        let report = pcg(
            |x, y| apply_operator(&g, alpha, x, y),
            &self.inv_diag,
            &b,
            &mut u,
            self.cfg.tolerance,
            self.cfg.max_iterations,
        );
        match report {
            Ok(rep) => {
                self.last_iterations = rep.iterations;
                self.warm = u.clone();
                ScalarField::new(g, u)
            }
            Err(e) => {
                self.warm = vec![0.0; g.len()];
                Err(e)
            }
        }
    }
}

fn apply_operator(g: &Grid2D, alpha: f64, x: &[f64], y: &mut [f64]) {
    let coupling = alpha / g.cell_area();
    let nx = g.nx();
    par::update_indexed(y, |k, out| {
        if !g.is_fluid(k) {
            *out = 0.0;
            return;
        }
        let (i, j) = (k % nx, k / nx);
        let mut lap = 0.0;
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(q) = g.fluid_neighbor(i, j, di, dj) {
                lap += x[k] - x[q];
            }
        }
        *out = x[k] + coupling * lap;
    });
}

/// Gradient at a fluid cell center: central where both neighbours are fluid,
/// one-sided toward the fluid neighbour otherwise.
pub fn cell_gradient(u: &ScalarField, i: usize, j: usize) -> Vec2 {
    let g = u.grid();
    let v = u.values();
    let k = g.idx(i, j);
    let h = g.h();
    let axis = |plus: Option<usize>, minus: Option<usize>| match (plus, minus) {
        (Some(p), Some(q)) => (v[p] - v[q]) / (2.0 * h),
        (Some(p), None) => (v[p] - v[k]) / h,
        (None, Some(q)) => (v[k] - v[q]) / h,
        (None, None) => 0.0,
    };
    Vec2::new(
        axis(g.fluid_neighbor(i, j, 1, 0), g.fluid_neighbor(i, j, -1, 0)),
        axis(g.fluid_neighbor(i, j, 0, 1), g.fluid_neighbor(i, j, 0, -1)),
    )
}

/// Unit steering direction `grad u / |grad u|` at `p`, or `None` where the
/// gradient vanishes.
pub fn unit_gradient(u: &ScalarField, p: Vec2) -> Result<Option<Vec2>> {
    let g = u.grid();
    let stencil = g.bilinear(p)?;
    let (mut acc, mut wsum) = (Vec2::ZERO, 0.0);
    for (k, w) in stencil {
        if g.is_fluid(k) && w > 0.0 {
            let (i, j) = g.ij(k);
            acc = acc + cell_gradient(u, i, j) * w;
            wsum += w;
        }
    }
    if wsum == 0.0 {
        return Ok(None);
    }
    let grad = acc * (1.0 / wsum);
    let norm = grad.norm();
    Ok(if norm < MIN_GRADIENT || !norm.is_finite() { None } else { Some(grad * (1.0 / norm)) })
}
