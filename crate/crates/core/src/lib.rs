//! Ergodic search for drifting targets: a probability field advected by a
//! flow, a screened-Poisson attraction potential, and a fleet of
//! constant-speed agents that steer up its gradient.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod config;
pub mod error;
pub mod flowgen;
pub mod geom;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod output;
pub mod par;
pub mod potential;
pub mod scenario;
pub mod sensing;
pub mod targets;
pub mod transport;

pub use error::{Error, Result};
pub use geom::{wrap_angle, Polygon, Rect, Vec2};
pub use grid::{build_grid, sample_scalar, sample_vector, CellKind, EdgeKind, FlowSeries, Grid2D, RimEdges, ScalarField, VectorField};
pub use potential::{solve_potential, unit_gradient, PotentialConfig, PotentialSolver, SolverMethod};
pub use transport::{apply_sensing, diffusion_coefficient, normalize, step_transport, Transport, TransportConfig};
pub use agents::{avoid, desired_turn_rate, step_agent, AgentState, AvoidOutcome};
pub use sensing::{accumulate_coverage, gamma_gaussian, gamma_rect, Footprint, GaussianDiskFootprint, RectFootprint};
pub use targets::{spawn_targets, Counts, DriftNoise, Status, TargetParticle, TargetSwarm};
pub use flowgen::{cavity_like_flow, channel_flow, scale_flow, ChannelParams};
pub use metrics::{eta, kappa, lambda_ratio, StepRecord, Timing};
pub use config::{MissionClock, Mode, ScenarioConfig};
pub use scenario::{run, run_ensemble, sweep_lambda, MotionStats, RunReport, RunSummary, SweepRow};
