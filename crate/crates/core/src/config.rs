//! Scenario configuration files (TOML).
//!
//! Relative paths inside a config are resolved against the config file's
//! directory. See `configs/` for annotated examples of every section.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::AgentState;
use crate::error::{Error, Result};
use crate::flowgen::{cavity_like_flow, channel_flow, scale_flow, ChannelParams};
use crate::geom::{Polygon, Rect, Vec2};
use crate::grid::{build_grid, FlowSeries, Grid2D, RimEdges, ScalarField};
use crate::potential::{PotentialConfig, SolverMethod};
use crate::sensing::Footprint;
use crate::transport::{diffusion_coefficient, normalize, TransportConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainSpec,
    pub flow: FlowSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub agents: AgentSpec,
    #[serde(default)]
    pub transport: TransportSpec,
    pub mission: MissionSpec,
    pub targets: TargetSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub h: f64,
    #[serde(default)]
    pub obstacles: Vec<Vec<[f64; 2]>>,
    /// Raw obstacle mask (one byte per cell) used instead of `obstacles`.
    #[serde(default)]
    pub mask: Option<PathBuf>,
    #[serde(default)]
    pub edges: RimEdges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FlowSpec {
    Cavity {
        mean_speed: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Channel {
        mean_speed: f64,
        #[serde(default)]
        modulation: Option<f64>,
        #[serde(default)]
        period: Option<f64>,
        #[serde(default)]
        snapshot_interval: Option<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    Uniform {
        velocity: [f64; 2],
        #[serde(default = "one")]
        scale: f64,
    },
    File {
        path: PathBuf,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl FlowSpec {
    pub fn scale(&self) -> f64 {
        match *self {
            FlowSpec::Cavity { scale, .. }
            | FlowSpec::Channel { scale, .. }
            | FlowSpec::Uniform { scale, .. }
            | FlowSpec::File { scale, .. } => scale,
        }
    }

    pub fn set_scale(&mut self, s: f64) {
        match self {
            FlowSpec::Cavity { scale, .. }
            | FlowSpec::Channel { scale, .. }
            | FlowSpec::Uniform { scale, .. }
            | FlowSpec::File { scale, .. } => *scale = s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Component {
    Gaussian { center: [f64; 2], sigma: f64, weight: f64 },
    Polygon { vertices: Vec<[f64; 2]>, weight: f64 },
}

impl Component {
    fn weight(&self) -> f64 {
        match *self {
            Component::Gaussian { weight, .. } | Component::Polygon { weight, .. } => weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub speed: f64,
    pub turn_radius: f64,
    pub clearance: f64,
    pub alpha: f64,
    /// One `[x, y, heading]` per agent.
    #[serde(default)]
    pub bases: Vec<[f64; 3]>,
    pub footprint: Footprint,
    #[serde(default)]
    pub solver: SolverSpec,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self {
            speed: 1.0,
            turn_radius: 1.0,
            clearance: 0.0,
            alpha: 1.0,
            bases: Vec::new(),
            footprint: Footprint::Gaussian(crate::sensing::GaussianDiskFootprint { mu: 0.5, sigma: 1.0, radius: 0.0 }),
            solver: SolverSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub method: SolverMethod,
}

fn default_tolerance() -> f64 {
    PotentialConfig::new(1.0).tolerance
}

fn default_max_iterations() -> usize {
    PotentialConfig::new(1.0).max_iterations
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tolerance: default_tolerance(), max_iterations: default_max_iterations(), method: SolverMethod::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    /// Diffusion coefficient; mutually exclusive with `drift_error`.
    #[serde(default)]
    pub diffusion: Option<f64>,
    /// Expected drift error `e` (m) after `drift_time` (s).
    #[serde(default)]
    pub drift_error: Option<f64>,
    #[serde(default)]
    pub drift_time: Option<f64>,
    #[serde(default)]
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Dynamic,
    Static,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Dynamic => "dynamic",
            Mode::Static => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub delay: f64,
    #[serde(default)]
    pub mode: Mode,
    /// Explicit `[start, length]` windows.
    #[serde(default)]
    pub phases: Option<Vec<[f64; 2]>>,
    /// Alternatively: `count` windows of `length` seconds separated by `gap`,
    /// starting at `delay`.
    #[serde(default)]
    pub phase_count: Option<usize>,
    #[serde(default)]
    pub phase_length: Option<f64>,
    #[serde(default)]
    pub phase_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Target positions are logged every this many steps (0 disables).
    #[serde(default = "default_target_every")]
    pub target_every: usize,
    /// Probability fields are saved every this many steps (0: final only).
    #[serde(default)]
    pub field_every: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_target_every() -> usize {
    100
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out(), target_every: default_target_every(), field_every: 0 }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir).map_err(|e| match e {
            Error::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dt(&self) -> f64 {
        self.mission.dt
    }

    /// Number of control steps in the run.
    pub fn steps(&self) -> usize {
        (self.mission.duration / self.mission.dt).round() as usize
    }

    pub fn build_grid(&self) -> Result<Arc<Grid2D>> {
        let d = &self.domain;
        let bounds = Rect::new(v2(d.min), v2(d.max));
        if !(d.max[0] > d.min[0] && d.max[1] > d.min[1]) {
            return Err(cfg_err("domain max must exceed min"));
        }
        let grid = match &d.mask {
            Some(path) => {
                let nx = ((bounds.width() / d.h) * (1.0 - 1e-12)).ceil() as usize;
                let ny = ((bounds.height() / d.h) * (1.0 - 1e-12)).ceil() as usize;
                let mask = crate::io::read_mask(&self.resolve(path), nx, ny)?;
                Grid2D::from_mask(bounds.min, d.h, nx, ny, mask, d.edges)?
            }
            None => {
                let polys: Vec<Polygon> =
                    d.obstacles.iter().map(|ring| Polygon::new(ring.iter().copied().map(v2).collect())).collect();
                if polys.iter().any(|p| p.vertices.len() < 3) {
                    return Err(cfg_err("obstacle polygons need at least three vertices"));
                }
                build_grid(bounds, d.h, &polys, d.edges)?
            }
        };
        Ok(Arc::new(grid))
    }

    pub fn build_flow(&self, grid: Arc<Grid2D>) -> Result<FlowSeries> {
        let base = match &self.flow {
            FlowSpec::Cavity { mean_speed, .. } => cavity_like_flow(grid, *mean_speed)?,
            FlowSpec::Channel { mean_speed, modulation, period, snapshot_interval, .. } => {
                let mut p = ChannelParams::new(*mean_speed, self.mission.duration);
                p.modulation = modulation.unwrap_or(p.modulation);
                p.period = period.unwrap_or(p.period);
                p.snapshot_interval = snapshot_interval.unwrap_or(p.snapshot_interval);
                channel_flow(grid, &p)?
            }
            FlowSpec::Uniform { velocity, .. } => FlowSeries::uniform(grid, v2(*velocity))?,
            FlowSpec::File { path, .. } => crate::io::read_flow(&self.resolve(path), grid)?,
        };
        scale_flow(&base, self.flow.scale())
    }

    /// Initial probability: each mixture component carries its weight of
    /// mass on the fluid cells.
    pub fn build_initial(&self, grid: &Arc<Grid2D>) -> Result<ScalarField> {
        let comps = &self.initial.components;
        if comps.is_empty() {
            return Err(cfg_err("initial distribution needs at least one component"));
        }
        let total: f64 = comps.iter().map(Component::weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(cfg_err(format!("component weights sum to {total}, expected 1")));
        }
        let mut m = ScalarField::zeros(grid.clone());
        for (n, c) in comps.iter().enumerate() {
            if !(c.weight() > 0.0) {
                return Err(cfg_err(format!("component {n} has non-positive weight")));
            }
            let shape = match c {
                Component::Gaussian { center, sigma, .. } => {
                    if !(*sigma > 0.0) {
                        return Err(cfg_err(format!("component {n} needs sigma > 0")));
                    }
                    let (c0, s2) = (v2(*center), 2.0 * sigma * sigma);
                    ScalarField::from_fn(grid.clone(), |p| (-(p - c0).dot(p - c0) / s2).exp())
                }
                Component::Polygon { vertices, .. } => {
                    let poly = Polygon::new(vertices.iter().copied().map(v2).collect());
                    ScalarField::from_fn(grid.clone(), |p| if poly.contains(p) { 1.0 } else { 0.0 })
                }
            };
            let shape = normalize(&shape).map_err(|_| cfg_err(format!("component {n} has no mass on fluid cells")))?;
            let w = c.weight();
            m.values_mut().iter_mut().zip(shape.values()).for_each(|(a, b)| *a += w * b);
        }
        normalize(&m)
    }

    pub fn transport_config(&self) -> Result<TransportConfig> {
        let t = &self.transport;
        let diffusion = match (t.diffusion, t.drift_error, t.drift_time) {
            (Some(d), None, None) => d,
            (None, Some(e), Some(time)) => diffusion_coefficient(e, time)?,
            (None, None, None) => 0.0,
            _ => return Err(cfg_err("give either transport.diffusion or both drift_error and drift_time")),
        };
        let cfg = TransportConfig { diffusion, substeps: t.substeps.unwrap_or(TransportConfig::default().substeps) };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn potential_config(&self) -> PotentialConfig {
        let s = &self.agents.solver;
        PotentialConfig {
            alpha: self.agents.alpha,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            method: s.method,
        }
    }

    pub fn build_agents(&self) -> Result<Vec<AgentState>> {
        let a = &self.agents;
        a.bases
            .iter()
            .map(|b| AgentState::new(Vec2::new(b[0], b[1]), b[2], a.speed, a.turn_radius, a.clearance, a.footprint))
            .collect()
    }

    /// Phase windows as half-open step ranges.
    pub fn schedule(&self) -> Result<MissionClock> {
        let m = &self.mission;
        let windows: Vec<(f64, f64)> = match (&m.phases, m.phase_count, m.phase_length) {
            (Some(list), None, None) => list.iter().map(|w| (w[0], w[1])).collect(),
            (None, Some(n), Some(len)) => {
                let gap = m.phase_gap.unwrap_or(0.0);
                (0..n).map(|k| (m.delay + k as f64 * (len + gap), len)).collect()
            }
            (None, None, None) => vec![(m.delay, m.duration - m.delay)],
            _ => return Err(cfg_err("give either mission.phases or phase_count with phase_length")),
        };
        MissionClock::new(&windows, m.dt, m.duration)
    }

    /// Full consistency check without running anything expensive.
    pub fn validate(&self) -> Result<()> {
        let m = &self.mission;
        if !(m.dt > 0.0 && m.dt.is_finite()) {
            return Err(cfg_err("mission.dt must be positive"));
        }
        if !(m.duration > 0.0) {
            return Err(cfg_err("mission.duration must be positive"));
        }
        if ((m.duration / m.dt).round() * m.dt - m.duration).abs() > 1e-9 * m.duration {
            return Err(cfg_err("mission.duration must be a whole number of steps"));
        }
        if !(m.delay >= 0.0 && m.delay <= m.duration) {
            return Err(cfg_err("mission.delay must lie in [0, duration]"));
        }
        if self.targets.count == 0 {
            return Err(cfg_err("targets.count must be positive"));
        }
        if !(self.targets.noise_sigma >= 0.0) {
            return Err(cfg_err("targets.noise_sigma must be >= 0"));
        }
        if !(self.flow.scale() > 0.0) {
            return Err(cfg_err("flow.scale must be positive"));
        }
        let grid = self.build_grid()?;
        self.schedule()?;
        self.transport_config().map_err(|e| cfg_err(e.to_string()))?;
        self.potential_config().validate().map_err(|e| cfg_err(e.to_string()))?;
        let agents = self.build_agents().map_err(|e| cfg_err(e.to_string()))?;
        for (i, a) in agents.iter().enumerate() {
            if !grid.is_fluid_point(a.z) {
                return Err(cfg_err(format!("agent {i} base is not on a fluid cell")));
            }
        }
        self.build_initial(&grid)?;
        self.build_flow(grid).map_err(|e| match e {
            Error::Domain(m) => cfg_err(m),
            other => other,
        })?;
        Ok(())
    }
}

/// Which control steps have the agents airborne.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionClock {
    dt: f64,
    windows: Vec<(usize, usize)>,
}

impl MissionClock {
    /// `windows` are `(start, length)` in seconds; they must be increasing,
    /// non-overlapping and end by `duration`.
    pub fn new(windows: &[(f64, f64)], dt: f64, duration: f64) -> Result<Self> {
        let to_step = |t: f64| (t / dt).round() as usize;
        let mut out = Vec::with_capacity(windows.len());
        let mut last_end = 0usize;
        for (n, &(start, len)) in windows.iter().enumerate() {
            if !(start >= 0.0 && len > 0.0) {
                return Err(cfg_err(format!("phase {n} needs start >= 0 and positive length")));
            }
            let (a, b) = (to_step(start), to_step(start + len));
            if n > 0 && a < last_end {
                return Err(cfg_err(format!("phase {n} overlaps or precedes the previous one")));
            }
            if start + len > duration + 1e-9 * duration.max(1.0) {
                return Err(cfg_err(format!("phase {n} ends after the mission")));
            }
            out.push((a, b));
            last_end = b;
        }
        Ok(Self { dt, windows: out })
    }

    pub fn windows(&self) -> Vec<(f64, f64)> {
        self.windows.iter().map(|&(a, b)| (a as f64 * self.dt, b as f64 * self.dt)).collect()
    }

    /// Phase index active during step `k`, covering `[k dt, (k + 1) dt)`.
    pub fn phase_at(&self, k: usize) -> Option<usize> {
        self.windows.iter().position(|&(a, b)| k >= a && k < b)
    }

    /// Whether step `k` opens a phase.
    pub fn starts_phase(&self, k: usize) -> bool {
        self.windows.iter().any(|&(a, _)| a == k)
    }
}
