//! Constant-speed Dubins agents: heading control and collision avoidance.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::grid::Grid2D;
use crate::sensing::Footprint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub z: Vec2,
    pub theta: f64,
    pub v: f64,
    pub omega_max: f64,
    /// Required clearance to other agents.
    pub delta: f64,
    pub footprint: Footprint,
    pub active: bool,
}

impl AgentState {
    /// Active agent with `omega_max = v / r_min`.
    pub fn new(z: Vec2, theta: f64, v: f64, r_min: f64, delta: f64, footprint: Footprint) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("agent speed must be positive, got {v}")));
        }
        if !(r_min > 0.0 && r_min.is_finite()) {
            return Err(Error::Domain(format!("turning radius must be positive, got {r_min}")));
        }
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("clearance must be non-negative, got {delta}")));
        }
        if !z.is_finite() || !theta.is_finite() {
            return Err(Error::NonFinite("agent pose"));
        }
        footprint.validate()?;
        Ok(Self { z, theta: wrap_angle(theta), v, omega_max: v / r_min, delta, footprint, active: true })
    }

    /// Pose after flying a constant-rate arc for `tau` seconds.
    pub fn pose_after(&self, omega: f64, tau: f64) -> (Vec2, f64) {
        let half = 0.5 * omega * tau;
        let chord = self.v * tau * sinc(half);
        (self.z + Vec2::from_angle(self.theta + half) * chord, wrap_angle(self.theta + omega * tau))
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Turn rate that removes the heading error within one step, clamped to the
/// turn-rate bound. `None` holds the current heading.
pub fn desired_turn_rate(a: &AgentState, dir: Option<Vec2>, dt: f64) -> f64 {
    match dir {
        Some(d) => (wrap_angle(d.angle() - a.theta) / dt).clamp(-a.omega_max, a.omega_max),
        None => 0.0,
    }
}

/// Exact constant-rate arc step. Inactive agents are returned unchanged.
pub fn step_agent(a: &AgentState, omega: f64, dt: f64) -> AgentState {
    if !a.active {
        return *a;
    }
    debug_assert!(omega.abs() <= a.omega_max + 1e-12, "turn rate {omega} exceeds bound");
    let omega = omega.clamp(-a.omega_max, a.omega_max);
    let (z, theta) = a.pose_after(omega, dt);
    AgentState { z, theta, ..*a }
}

/// Result of the avoidance filter for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvoidOutcome {
    pub omega: f64,
    /// A candidate passing every check was found.
    pub feasible: bool,
    /// The proposal was replaced.
    pub adjusted: bool,
}

const CANDIDATE_FRACTIONS: [f64; 9] = [1.0, -1.0, 0.75, -0.75, 0.5, -0.5, 0.25, -0.25, 0.0];

/// Look-ahead used for agent-agent separation.
pub fn avoidance_horizon(a: &AgentState, dt: f64) -> f64 {
    let clearance = if a.delta > 0.0 { 2.0 * a.delta / a.v } else { 0.0 };
    clearance.max(3.0 * dt)
}

struct Sampler {
    step: f64,
    count: usize,
}

impl Sampler {
    fn new(a: &AgentState, grid: &Grid2D, horizon: f64) -> Self {
        let spacing = if a.delta > 0.0 { grid.h().min(a.delta) } else { grid.h() } / 2.0;
        let count = ((horizon * a.v / spacing).ceil() as usize).max(1);
        Self { step: horizon / count as f64, count }
    }

    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.count).map(move |k| k as f64 * self.step)
    }
}

/// Whether an arc stays on fluid cells over `horizon`.
fn arc_clear(a: &AgentState, omega: f64, horizon: f64, grid: &Grid2D) -> bool {
    let s = Sampler::new(a, grid, horizon);
    let clear = s.times().all(|tau| grid.is_fluid_point(a.pose_after(omega, tau).0));
    clear
}

/// An agent can always escape by circling at the bound: the arc is safe if,
/// after one step along it, at least one full tightest circle is clear.
fn has_escape(a: &AgentState, omega: f64, dt: f64, grid: &Grid2D) -> bool {
    let (z, theta) = a.pose_after(omega, dt);
    let next = AgentState { z, theta, ..*a };
    let lap = std::f64::consts::TAU / a.omega_max;
    arc_clear(&next, a.omega_max, lap, grid) || arc_clear(&next, -a.omega_max, lap, grid)
}

fn min_separation(a: &AgentState, omega: f64, others: &[(AgentState, f64)], horizon: f64, grid: &Grid2D) -> f64 {
    let s = Sampler::new(a, grid, horizon);
    let mut best = f64::INFINITY;
    for tau in s.times() {
        let p = a.pose_after(omega, tau).0;
        for (b, wb) in others {
            best = best.min(p.dist(b.pose_after(*wb, tau).0));
        }
    }
    best
}

/// Replaces proposed turn rates that would bring an agent within `delta` of a
/// higher-priority (lower-index) agent or onto an obstacle. Agents are
/// processed in index order against the arcs already committed.
pub fn avoid(agents: &[AgentState], proposals: &[f64], grid: &Grid2D, dt: f64) -> Vec<AvoidOutcome> {
    assert_eq!(agents.len(), proposals.len(), "one proposal per agent");
    let mut committed: Vec<(AgentState, f64)> = Vec::with_capacity(agents.len());
    let mut out = Vec::with_capacity(agents.len());
    for (idx, (a, &proposal)) in agents.iter().zip(proposals).enumerate() {
        if !a.active {
            out.push(AvoidOutcome { omega: proposal, feasible: true, adjusted: false });
            continue;
        }
        let horizon = avoidance_horizon(a, dt);
        let proposal = proposal.clamp(-a.omega_max, a.omega_max);
        let ok = |w: f64| {
            arc_clear(a, w, horizon, grid)
                && has_escape(a, w, dt, grid)
                && (committed.is_empty() || min_separation(a, w, &committed, horizon, grid) >= a.delta)
        };
        let outcome = if ok(proposal) {
            AvoidOutcome { omega: proposal, feasible: true, adjusted: false }
        } else {
            let mut cands: Vec<f64> = CANDIDATE_FRACTIONS.iter().map(|f| f * a.omega_max).collect();
            cands.sort_by(|x, y| (x - proposal).abs().total_cmp(&(y - proposal).abs()));
            match cands.into_iter().find(|&w| ok(w)) {
                Some(w) => AvoidOutcome { omega: w, feasible: true, adjusted: true },
                None => {
                    let w = fallback(a, &committed, horizon, grid, dt);
                    debug!("agent {idx}: no feasible turn rate, falling back to {w:+.4}");
                    AvoidOutcome { omega: w, feasible: false, adjusted: true }
                }
            }
        };
        committed.push((*a, outcome.omega));
        out.push(outcome);
    }
    out
}

/// Hardest turn away from the nearest threat, preferring a turn that keeps the
/// escape circle clear.
fn fallback(a: &AgentState, committed: &[(AgentState, f64)], horizon: f64, grid: &Grid2D, dt: f64) -> f64 {
    let heading = Vec2::from_angle(a.theta);
    let mut threat: Option<(f64, Vec2)> = committed
        .iter()
        .map(|(b, _)| (a.z.dist(b.z), b.z))
        .min_by(|x, y| x.0.total_cmp(&y.0));
    let s = Sampler::new(a, grid, horizon.max(std::f64::consts::PI / a.omega_max));
    if let Some(hit) = s.times().map(|tau| a.pose_after(0.0, tau).0).find(|&p| !grid.is_fluid_point(p)) {
        let d = a.z.dist(hit);
        if threat.is_none_or(|(t, _)| d < t) {
            threat = Some((d, hit));
        }
    }
    let away = match threat {
        Some((_, p)) if heading.cross(p - a.z) > 0.0 => -a.omega_max,
        _ => a.omega_max,
    };
    if !has_escape(a, away, dt, grid) && has_escape(a, -away, dt, grid) {
        -away
    } else {
        away
    }
}

/// Forward-simulates the chosen arcs over the avoidance horizon and reports
/// the first violation among agents whose outcome was feasible: a position
/// off the fluid region, or a distance below `delta` to a lower-index agent.
pub fn check_plan(agents: &[AgentState], outcomes: &[AvoidOutcome], grid: &Grid2D, dt: f64) -> Option<String> {
    for (i, (a, o)) in agents.iter().zip(outcomes).enumerate() {
        if !a.active || !o.feasible {
            continue;
        }
        if o.omega.abs() > a.omega_max + 1e-12 {
            return Some(format!("agent {i} turn rate {} exceeds bound", o.omega));
        }
        let horizon = avoidance_horizon(a, dt);
        if !arc_clear(a, o.omega, horizon, grid) {
            return Some(format!("agent {i} leaves the fluid region"));
        }
        let earlier: Vec<(AgentState, f64)> = agents[..i]
            .iter()
            .zip(&outcomes[..i])
            .filter(|(b, _)| b.active)
            .map(|(b, ob)| (*b, ob.omega))
            .collect();
        if !earlier.is_empty() {
            let sep = min_separation(a, o.omega, &earlier, horizon, grid);
            if sep < a.delta {
                return Some(format!("agent {i} comes within {sep} of a higher-priority agent"));
            }
        }
    }
    None
}
